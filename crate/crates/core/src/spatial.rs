//! Per-frame uniform grid over trajectory positions for radius queries.

use crate::traj::{Trajectory, VideoMeta};

/// Bucketed trajectory indices per frame, stored CSR-style.
pub struct FrameGrid {
    cell: f64,
    nx: usize,
    ny: usize,
    /// `offsets[f]` indexes `cell_starts` for frame `f`.
    frame_base: Vec<usize>,
    cell_starts: Vec<u32>,
    entries: Vec<u32>,
}

impl FrameGrid {
    pub fn new(trajs: &[Trajectory], meta: &VideoMeta, cell: f64) -> Self {
        let nx = ((meta.width() / cell).floor() as usize + 1).max(1);
        let ny = ((meta.height() / cell).floor() as usize + 1).max(1);
        let cells_per_frame = nx * ny;
        let frames = meta.frame_count;
        let mut counts = vec![0u32; frames * cells_per_frame + 1];
        let key = |f: usize, x: f64, y: f64| -> usize {
            let cx = ((x / cell) as usize).min(nx - 1);
            let cy = ((y / cell) as usize).min(ny - 1);
            f * cells_per_frame + cy * nx + cx
        };
        for t in trajs {
            for (i, p) in t.points().iter().enumerate() {
                counts[key(t.start_frame() + i, p.x, p.y) + 1] += 1;
            }
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let mut fill = counts.clone();
        let mut entries = vec![0u32; *counts.last().unwrap() as usize];
        for (ti, t) in trajs.iter().enumerate() {
            for (i, p) in t.points().iter().enumerate() {
                let k = key(t.start_frame() + i, p.x, p.y);
                entries[fill[k] as usize] = ti as u32;
                fill[k] += 1;
            }
        }
        FrameGrid {
            cell,
            nx,
            ny,
            frame_base: (0..frames).map(|f| f * cells_per_frame).collect(),
            cell_starts: counts,
            entries,
        }
    }

    /// Calls `visit` with every trajectory bucketed within one cell of
    /// `(x, y)` at frame `f`; callers filter by exact distance.
    pub fn near(&self, f: usize, x: f64, y: f64, mut visit: impl FnMut(usize)) {
        let cx = ((x / self.cell) as usize).min(self.nx - 1);
        let cy = ((y / self.cell) as usize).min(self.ny - 1);
        let base = self.frame_base[f];
        for gy in cy.saturating_sub(1)..=(cy + 1).min(self.ny - 1) {
            for gx in cx.saturating_sub(1)..=(cx + 1).min(self.nx - 1) {
                let k = base + gy * self.nx + gx;
                let (a, b) = (
                    self.cell_starts[k] as usize,
                    self.cell_starts[k + 1] as usize,
                );
                for &e in &self.entries[a..b] {
                    visit(e as usize);
                }
            }
        }
    }
}
