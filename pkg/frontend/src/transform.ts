// Zoom/pan mapping between screen (canvas) and image pixel coordinates.
//
// screen = image * scale + offset. The transform is exactly invertible,
// so a screen -> image -> screen round trip stays within floating point
// dust at any zoom level.

export interface ViewTransform {
  scale: number;
  offsetX: number;
  offsetY: number;
}

export interface Point {
  x: number;
  y: number;
}

export const identityTransform: ViewTransform = { scale: 1, offsetX: 0, offsetY: 0 };

export function imageToScreen(t: ViewTransform, p: Point): Point {
  return { x: p.x * t.scale + t.offsetX, y: p.y * t.scale + t.offsetY };
}

export function screenToImage(t: ViewTransform, p: Point): Point {
  return { x: (p.x - t.offsetX) / t.scale, y: (p.y - t.offsetY) / t.scale };
}

/** Rescale around a fixed screen point (the cursor during wheel zoom). */
export function zoomAt(t: ViewTransform, screenPoint: Point, factor: number,
                       minScale = 0.1, maxScale = 32): ViewTransform {
  const scale = Math.min(maxScale, Math.max(minScale, t.scale * factor));
  const ratio = scale / t.scale;
  return {
    scale,
    offsetX: screenPoint.x - (screenPoint.x - t.offsetX) * ratio,
    offsetY: screenPoint.y - (screenPoint.y - t.offsetY) * ratio,
  };
}

export function pan(t: ViewTransform, dx: number, dy: number): ViewTransform {
  return { ...t, offsetX: t.offsetX + dx, offsetY: t.offsetY + dy };
}

/** Fit an image into a viewport, centered, without upscaling past 4x. */
export function fitTransform(imageW: number, imageH: number,
                             viewW: number, viewH: number): ViewTransform {
  const scale = Math.min(viewW / imageW, viewH / imageH, 4);
  return {
    scale,
    offsetX: (viewW - imageW * scale) / 2,
    offsetY: (viewH - imageH * scale) / 2,
  };
}
