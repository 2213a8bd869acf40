import { describe, expect, it } from 'vitest';

import {
  fitTransform,
  imageToScreen,
  pan,
  screenToImage,
  zoomAt,
  type ViewTransform,
} from '../src/transform.js';

describe('coordinate round trips', () => {
  const points = [
    { x: 0, y: 0 },
    { x: 13.25, y: 7.75 },
    { x: 319.9, y: 223.1 },
    { x: 0.4, y: 199.6 },
  ];

  for (const zoom of [0.5, 1, 4]) {
    it(`screen -> image -> screen stays within 0.5 px at zoom ${zoom}`, () => {
      const t: ViewTransform = { scale: zoom, offsetX: 37.5, offsetY: -12.25 };
      for (const p of points) {
        const round = imageToScreen(t, screenToImage(t, p));
        expect(Math.abs(round.x - p.x)).toBeLessThanOrEqual(0.5);
        expect(Math.abs(round.y - p.y)).toBeLessThanOrEqual(0.5);
      }
    });

    it(`image -> screen -> image stays within 0.5 px at zoom ${zoom}`, () => {
      const t: ViewTransform = { scale: zoom, offsetX: -80, offsetY: 22 };
      for (const p of points) {
        const round = screenToImage(t, imageToScreen(t, p));
        expect(Math.abs(round.x - p.x)).toBeLessThanOrEqual(0.5);
        expect(Math.abs(round.y - p.y)).toBeLessThanOrEqual(0.5);
      }
    });
  }
});

describe('zoomAt', () => {
  it('keeps the anchor screen point fixed', () => {
    const t: ViewTransform = { scale: 1, offsetX: 10, offsetY: 5 };
    const anchor = { x: 200, y: 150 };
    const before = screenToImage(t, anchor);
    const zoomed = zoomAt(t, anchor, 2.0);
    const after = screenToImage(zoomed, anchor);
    expect(Math.abs(after.x - before.x)).toBeLessThan(1e-9);
    expect(Math.abs(after.y - before.y)).toBeLessThan(1e-9);
    expect(zoomed.scale).toBe(2);
  });

  it('clamps the scale range', () => {
    const t: ViewTransform = { scale: 1, offsetX: 0, offsetY: 0 };
    expect(zoomAt(t, { x: 0, y: 0 }, 1000).scale).toBe(32);
    expect(zoomAt(t, { x: 0, y: 0 }, 1e-6).scale).toBe(0.1);
  });
});

describe('pan and fit', () => {
  it('pan shifts the offset only', () => {
    const t = pan({ scale: 2, offsetX: 1, offsetY: 2 }, 10, -5);
    expect(t).toEqual({ scale: 2, offsetX: 11, offsetY: -3 });
  });

  it('fit centers the image', () => {
    const t = fitTransform(100, 50, 400, 400);
    expect(t.scale).toBe(4);
    expect(t.offsetX).toBe(0);
    expect(t.offsetY).toBe(100);
  });
});
