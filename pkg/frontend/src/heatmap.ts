// Canvas renderer for the 6x6 pressure grid: max-normalized, warm
// colormap, one square per sensor cell.

const GRID = 6;

function colorFor(v: number): string {
  // black -> deep red -> orange -> near-white
  const r = Math.min(255, Math.round(v * 510));
  const g = Math.max(0, Math.round((v - 0.4) * 380));
  const b = Math.max(0, Math.round((v - 0.85) * 900));
  return `rgb(${r},${g},${b})`;
}

export function drawHeatmap(canvas: HTMLCanvasElement,
                            cells: number[] | null): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const size = Math.min(canvas.width, canvas.height);
  const cell = Math.floor(size / GRID);
  ctx.fillStyle = "#111";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  if (!cells || cells.length !== GRID * GRID) return;
  const peak = Math.max(...cells);
  for (let r = 0; r < GRID; r++) {
    for (let c = 0; c < GRID; c++) {
      const v = peak > 0 ? cells[r * GRID + c] / peak : 0;
      ctx.fillStyle = colorFor(v);
      ctx.fillRect(c * cell + 1, r * cell + 1, cell - 2, cell - 2);
    }
  }
}
