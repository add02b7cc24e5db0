/** Nearest-point picking math, kept free of rendering dependencies. */

export interface PickHit {
  index: number;
  distanceToRay: number;
  t: number; // ray parameter of the closest approach
}

/** Closest point to the ray within `maxDistance` perpendicular distance.
 *
 * Among candidates inside the pick radius the smallest perpendicular
 * distance wins; ties break toward the camera (smaller t). Points behind
 * the ray origin are ignored.
 */
export function pickNearestPoint(
  positions: ArrayLike<number>,
  count: number,
  origin: [number, number, number],
  direction: [number, number, number],
  maxDistance: number,
): PickHit | null {
  const norm = Math.hypot(direction[0], direction[1], direction[2]);
  if (norm === 0) return null;
  const dx = direction[0] / norm;
  const dy = direction[1] / norm;
  const dz = direction[2] / norm;

  let best: PickHit | null = null;
  for (let i = 0; i < count; i++) {
    const px = positions[i * 3] - origin[0];
    const py = positions[i * 3 + 1] - origin[1];
    const pz = positions[i * 3 + 2] - origin[2];
    const t = px * dx + py * dy + pz * dz;
    if (t < 0) continue;
    const cx = px - t * dx;
    const cy = py - t * dy;
    const cz = pz - t * dz;
    const distance = Math.hypot(cx, cy, cz);
    if (distance > maxDistance) continue;
    if (
      best === null ||
      distance < best.distanceToRay ||
      (distance === best.distanceToRay && t < best.t)
    ) {
      best = { index: i, distanceToRay: distance, t };
    }
  }
  return best;
}
