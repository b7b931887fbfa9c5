// CSS pixel <-> natural image pixel conversion.
//
// The service stores clicks in the image's natural resolution, so the
// client converts before posting. The displayed element may sit at any
// offset and any zoom; only its bounding rectangle matters.

export interface DisplayRect {
  left: number;
  top: number;
  width: number;
  height: number;
}

export interface NaturalPoint {
  x: number;
  y: number;
}

// Natural pixel under a CSS point, or null when the point misses the
// displayed image. Integer coordinates in [0, w) x [0, h).
export function cssToNatural(
  cssX: number,
  cssY: number,
  rect: DisplayRect,
  naturalW: number,
  naturalH: number,
): NaturalPoint | null {
  if (rect.width <= 0 || rect.height <= 0 || naturalW <= 0 || naturalH <= 0) {
    return null;
  }
  const fx = ((cssX - rect.left) / rect.width) * naturalW;
  const fy = ((cssY - rect.top) / rect.height) * naturalH;
  const x = Math.floor(fx);
  const y = Math.floor(fy);
  if (x < 0 || y < 0 || x >= naturalW || y >= naturalH) {
    return null;
  }
  return { x, y };
}

// CSS point at the center of a natural pixel; inverse of cssToNatural
// for in-frame pixels under any zoom (centers stay half a pixel away
// from the rounding boundary).
export function naturalToCss(
  x: number,
  y: number,
  rect: DisplayRect,
  naturalW: number,
  naturalH: number,
): { cssX: number; cssY: number } {
  const cssX = rect.left + ((x + 0.5) / naturalW) * rect.width;
  const cssY = rect.top + ((y + 0.5) / naturalH) * rect.height;
  return { cssX, cssY };
}
