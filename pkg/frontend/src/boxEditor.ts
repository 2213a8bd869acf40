// Pure drag/resize geometry for the box editor. Hit testing and drag
// application work in image coordinates; the caller converts the screen
// tolerance through the current zoom.

import type { BoxData } from './types.js';
import type { Point } from './transform.js';

export type Handle =
  | 'nw' | 'n' | 'ne'
  | 'w' | 'move' | 'e'
  | 'sw' | 's' | 'se';

const MIN_SIDE = 2; // image px

/** Which handle a pointer at image coordinates grabs, if any. */
export function hitTest(box: BoxData, p: Point, tolerance: number): Handle | null {
  const nearL = Math.abs(p.x - box.left) <= tolerance;
  const nearR = Math.abs(p.x - box.right) <= tolerance;
  const nearT = Math.abs(p.y - box.top) <= tolerance;
  const nearB = Math.abs(p.y - box.bottom) <= tolerance;
  const insideX = p.x >= box.left - tolerance && p.x <= box.right + tolerance;
  const insideY = p.y >= box.top - tolerance && p.y <= box.bottom + tolerance;
  if (!insideX || !insideY) return null;

  if (nearT && nearL) return 'nw';
  if (nearT && nearR) return 'ne';
  if (nearB && nearL) return 'sw';
  if (nearB && nearR) return 'se';
  if (nearT) return 'n';
  if (nearB) return 's';
  if (nearL) return 'w';
  if (nearR) return 'e';
  if (p.x > box.left && p.x < box.right && p.y > box.top && p.y < box.bottom) return 'move';
  return null;
}

/** Apply a drag of (dx, dy) image px to the grabbed handle. */
export function applyDrag(box: BoxData, handle: Handle, dx: number, dy: number): BoxData {
  let { left, top, right, bottom } = box;
  if (handle === 'move') {
    return { left: left + dx, top: top + dy, right: right + dx, bottom: bottom + dy };
  }
  if (handle.includes('w')) left += dx;
  if (handle.includes('e')) right += dx;
  if (handle.includes('n')) top += dy;
  if (handle.includes('s')) bottom += dy;
  // resizing never inverts: the dragged side stops at the minimum size
  if (right - left < MIN_SIDE) {
    if (handle.includes('w')) left = right - MIN_SIDE;
    else right = left + MIN_SIDE;
  }
  if (bottom - top < MIN_SIDE) {
    if (handle.includes('n')) top = bottom - MIN_SIDE;
    else bottom = top + MIN_SIDE;
  }
  return { left, top, right, bottom };
}

/** Clamp a box into the image bounds, preserving its size when moving. */
export function clampToImage(box: BoxData, width: number, height: number): BoxData {
  const w = Math.min(box.right - box.left, width);
  const h = Math.min(box.bottom - box.top, height);
  let left = Math.max(0, Math.min(box.left, width - w));
  let top = Math.max(0, Math.min(box.top, height - h));
  return { left, top, right: left + w, bottom: top + h };
}
