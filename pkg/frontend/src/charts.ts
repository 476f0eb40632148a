/** History charting helpers. */

export interface Point {
  t: number;
  v: number;
}

/**
 * Reduce a long series to at most maxPoints while keeping the shape.
 *
 * Each bucket contributes its minimum and its maximum in time order, so
 * spikes survive. The first and last samples are always kept. Series at
 * or under the budget come back untouched.
 */
export function downsample(points: Point[], maxPoints: number): Point[] {
  if (maxPoints < 2) throw new Error("maxPoints must be at least 2");
  if (points.length <= maxPoints) return points;

  const first = points[0]!;
  const last = points[points.length - 1]!;
  const interior = points.slice(1, -1);
  const buckets = Math.max(1, Math.floor((maxPoints - 2) / 2));
  const out: Point[] = [first];
  const size = interior.length / buckets;
  for (let b = 0; b < buckets; b += 1) {
    const lo = Math.floor(b * size);
    const hi = Math.min(interior.length, Math.floor((b + 1) * size));
    if (lo >= hi) continue;
    let min = interior[lo]!;
    let max = interior[lo]!;
    for (let i = lo + 1; i < hi; i += 1) {
      const p = interior[i]!;
      if (p.v < min.v) min = p;
      if (p.v > max.v) max = p;
    }
    if (min === max) {
      out.push(min);
    } else if (min.t <= max.t) {
      out.push(min, max);
    } else {
      out.push(max, min);
    }
  }
  out.push(last);
  return out;
}

/** SVG path for a sparkline scaled into a width×height box. */
export function sparklinePath(points: Point[], width: number, height: number): string {
  if (points.length === 0) return "";
  let tMin = Infinity;
  let tMax = -Infinity;
  let vMin = Infinity;
  let vMax = -Infinity;
  for (const p of points) {
    if (p.t < tMin) tMin = p.t;
    if (p.t > tMax) tMax = p.t;
    if (p.v < vMin) vMin = p.v;
    if (p.v > vMax) vMax = p.v;
  }
  const tSpan = tMax - tMin || 1;
  const vSpan = vMax - vMin || 1;
  const parts: string[] = [];
  for (let i = 0; i < points.length; i += 1) {
    const p = points[i]!;
    const x = ((p.t - tMin) / tSpan) * width;
    // flat series draws along the middle, not the floor
    const y = vMax === vMin ? height / 2 : height - ((p.v - vMin) / vSpan) * height;
    parts.push(`${i === 0 ? "M" : "L"}${x.toFixed(1)},${y.toFixed(1)}`);
  }
  return parts.join(" ");
}
