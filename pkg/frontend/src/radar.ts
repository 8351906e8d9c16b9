/** Term-weight radar ("star diagram") geometry.
 *
 * Renders the top term weights of a topic on equally spaced spokes,
 * normalized so the heaviest term reaches the rim. The radar is an
 * interpretation of the topic card's star figure and is labeled as such
 * in the UI.
 */

export const RADAR_TERMS = 7;

export interface SpokePoint {
  x: number;
  y: number;
  labelX: number;
  labelY: number;
}

function spokeAngle(index: number, count: number): number {
  return -Math.PI / 2 + (2 * Math.PI * index) / count;
}

export function radarPolygon(
  weights: number[],
  cx: number,
  cy: number,
  radius: number,
): string {
  const max = Math.max(...weights, 0);
  return weights
    .map((w, i) => {
      const angle = spokeAngle(i, weights.length);
      const r = max > 0 ? (w / max) * radius : 0;
      return `${(cx + r * Math.cos(angle)).toFixed(2)},${(cy + r * Math.sin(angle)).toFixed(2)}`;
    })
    .join(" ");
}

export function radarSpokes(
  count: number,
  cx: number,
  cy: number,
  radius: number,
  labelOffset = 14,
): SpokePoint[] {
  const out: SpokePoint[] = [];
  for (let i = 0; i < count; i++) {
    const angle = spokeAngle(i, count);
    out.push({
      x: cx + radius * Math.cos(angle),
      y: cy + radius * Math.sin(angle),
      labelX: cx + (radius + labelOffset) * Math.cos(angle),
      labelY: cy + (radius + labelOffset) * Math.sin(angle),
    });
  }
  return out;
}

export function radarRings(
  cx: number,
  cy: number,
  radius: number,
  rings = 3,
): number[] {
  return Array.from({ length: rings }, (_, i) => (radius * (i + 1)) / rings);
}
