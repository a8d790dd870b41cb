/** The fixed five-stop colormap shared with the server (exact stops are part
 * of the wire contract; the hello message carries them for verification). */

export const COLORMAP_STOPS: [number, number, number][] = [
  [0.267, 0.005, 0.329],
  [0.229, 0.322, 0.546],
  [0.128, 0.567, 0.551],
  [0.369, 0.789, 0.383],
  [0.993, 0.906, 0.144],
];

export function colormap(value: number, lo: number, hi: number): [number, number, number] {
  const u = (Math.min(Math.max(value, lo), hi) - lo) / (hi - lo);
  const pos = u * (COLORMAP_STOPS.length - 1);
  const idx = Math.min(Math.floor(pos), COLORMAP_STOPS.length - 2);
  const frac = pos - idx;
  const a = COLORMAP_STOPS[idx];
  const b = COLORMAP_STOPS[idx + 1];
  return [
    (1 - frac) * a[0] + frac * b[0],
    (1 - frac) * a[1] + frac * b[1],
    (1 - frac) * a[2] + frac * b[2],
  ];
}
