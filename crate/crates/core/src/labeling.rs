//! From the dominant path to per-trajectory labels: reliable background
//! set, whole-video background model, and the local label filter.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    fit_pairwise, is_member, testable_pairs, GeometryParams, PairwiseModel, RigidMotion,
};
use crate::graph::MotionPath;
use crate::spatial::FrameGrid;
use crate::traj::{SpanTable, Trajectory, VideoMeta};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterParams {
    /// Neighbour radius as a fraction of the frame width.
    pub neighbor_frac: f64,
    /// Spatial kernel width as a fraction of the frame width.
    pub sigma_d_frac: f64,
    /// Colour kernel width (RGB in [0, 1]).
    pub sigma_c: f64,
    pub threshold: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        FilterParams {
            neighbor_frac: 0.05,
            sigma_d_frac: 0.02,
            sigma_c: 0.18,
            threshold: 0.5,
        }
    }
}

impl FilterParams {
    pub fn validate(&self) -> Result<()> {
        if [
            self.neighbor_frac,
            self.sigma_d_frac,
            self.sigma_c,
            self.threshold,
        ]
        .iter()
        .any(|v| !(*v > 0.0))
        {
            return Err(Error::Config("filter parameters must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Path,
    Global,
    Filtered,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Path => "path",
            Stage::Global => "global",
            Stage::Filtered => "filtered",
        }
    }
}

/// One label per trajectory (by position), `true` = background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelState {
    pub stage: Stage,
    pub background: Vec<bool>,
}

impl LabelState {
    pub fn labels(&self, trajs: &[Trajectory]) -> Vec<(u64, bool)> {
        trajs
            .iter()
            .zip(&self.background)
            .map(|(t, &b)| (t.id(), b))
            .collect()
    }

    pub fn count_background(&self) -> usize {
        self.background.iter().filter(|&&b| b).count()
    }
}

fn on_path(path: &MotionPath, candidates: &[Vec<RigidMotion>], clip: usize, t: usize) -> bool {
    candidates[clip][path.nodes[clip]].contains(t)
}

/// Trajectories that are members of the path's candidate in every clip
/// where they can be tested, and testable in at least one. A clip that
/// sees only a sliver of a trajectory holds no evidence against it.
pub fn reliable_background(
    path: &MotionPath,
    candidates: &[Vec<RigidMotion>],
    spans: &SpanTable,
    trajs: &[Trajectory],
    g: &GeometryParams,
) -> Result<Vec<usize>> {
    let testable = |c: usize, t: usize| {
        let window = candidates[c][path.nodes[c]].model.window();
        testable_pairs(&trajs[t], window, g.max_gap) >= g.min_tested_pairs
    };
    let reliable: Vec<usize> = (0..spans.len())
        .filter(|&t| {
            let mut tested = spans.clips_of(t).filter(|&c| testable(c, t)).peekable();
            tested.peek().is_some() && tested.all(|c| on_path(path, candidates, c, t))
        })
        .collect();
    if reliable.is_empty() {
        return Err(Error::NoReliableBackground);
    }
    Ok(reliable)
}

/// Path-stage labels: background when the path's candidates hold the
/// trajectory in clips carrying more than half of its value.
pub fn path_labels(
    path: &MotionPath,
    candidates: &[Vec<RigidMotion>],
    spans: &SpanTable,
) -> LabelState {
    let background = (0..spans.len())
        .map(|t| {
            let hits = spans
                .clips_of(t)
                .filter(|&c| on_path(path, candidates, c, t))
                .count();
            hits as f64 * spans.value(t) > 0.5
        })
        .collect();
    LabelState {
        stage: Stage::Path,
        background,
    }
}

/// Background motion over the whole video, fitted from reliable trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalBackgroundMotion {
    pub model: PairwiseModel,
    pub reliable: Vec<usize>,
    pub usable_pairs: usize,
    pub total_pairs: usize,
}

/// Fits `F(j, k)` for every frame pair of the video from the reliable
/// trajectories visible at both frames; pairs with fewer than eight such
/// trajectories are left out. Fails unless at least half the pairs are
/// usable.
pub fn fit_global_motion(
    reliable: &[usize],
    trajs: &[Trajectory],
    meta: &VideoMeta,
    g: &GeometryParams,
) -> Result<GlobalBackgroundMotion> {
    let (model, missing) = fit_pairwise(trajs, reliable, meta.full_range(), g);
    let total = model.pair_count();
    let usable = total - missing;
    if reliable.len() < 8 || usable * 2 < total || usable == 0 {
        return Err(Error::GlobalModelUnderdetermined { usable, total });
    }
    Ok(GlobalBackgroundMotion {
        model,
        reliable: reliable.to_vec(),
        usable_pairs: usable,
        total_pairs: total,
    })
}

pub fn label_all(
    trajs: &[Trajectory],
    global: &GlobalBackgroundMotion,
    g: &GeometryParams,
) -> LabelState {
    LabelState {
        stage: Stage::Global,
        background: trajs
            .par_iter()
            .map(|t| is_member(t, &global.model, g))
            .collect(),
    }
}

/// Refits the background model on everything it labels background and
/// relabels, while the labeled set grows and no frame pair is lost. The
/// reliable set is small and unevenly spread; the labeled set is not.
pub fn refine_global(
    mut global: GlobalBackgroundMotion,
    trajs: &[Trajectory],
    g: &GeometryParams,
    rounds: usize,
) -> (GlobalBackgroundMotion, LabelState) {
    let mut state = label_all(trajs, &global, g);
    for _ in 0..rounds {
        let members: Vec<usize> = (0..trajs.len()).filter(|&i| state.background[i]).collect();
        let (model, missing) = fit_pairwise(trajs, &members, global.model.window(), g);
        let usable = model.pair_count() - missing;
        if usable < global.usable_pairs {
            break;
        }
        let candidate = GlobalBackgroundMotion {
            model,
            usable_pairs: usable,
            ..global.clone()
        };
        let next = label_all(trajs, &candidate, g);
        if next.count_background() <= state.count_background() {
            break;
        }
        global = candidate;
        state = next;
    }
    (global, state)
}

/// Spatial and colour affinity of two trajectories over their shared
/// frames; `None` unless they come within `radius` in some shared frame.
pub fn affinity(
    a: &Trajectory,
    b: &Trajectory,
    radius: f64,
    sigma_d: f64,
    sigma_c: f64,
) -> Option<f64> {
    let shared = a.span().intersect(&b.span())?;
    let mut min_d = f64::INFINITY;
    let mut max_d: f64 = 0.0;
    let mut color_sum = 0.0;
    let colored = a.colors().is_some() && b.colors().is_some();
    for f in shared.frames() {
        let d = (a.point_at(f).unwrap() - b.point_at(f).unwrap()).norm();
        min_d = min_d.min(d);
        max_d = max_d.max(d);
        if colored {
            let (ca, cb) = (a.color_at(f).unwrap(), b.color_at(f).unwrap());
            color_sum +=
                ((ca[0] - cb[0]).powi(2) + (ca[1] - cb[1]).powi(2) + (ca[2] - cb[2]).powi(2))
                    .sqrt();
        }
    }
    if !(min_d < radius) {
        return None;
    }
    let spatial = (-(max_d * max_d) / (2.0 * sigma_d * sigma_d)).exp();
    let color = if colored {
        let dc = color_sum / shared.len() as f64;
        (-(dc * dc) / (2.0 * sigma_c * sigma_c)).exp()
    } else {
        1.0
    };
    Some(spatial * color)
}

/// Neighbours of trajectory `i`, sorted, excluding `i`.
fn neighbours(i: usize, trajs: &[Trajectory], grid: &FrameGrid, radius: f64) -> Vec<usize> {
    let t = &trajs[i];
    let mut out = Vec::new();
    for (k, p) in t.points().iter().enumerate() {
        let f = t.start_frame() + k;
        grid.near(f, p.x, p.y, |j| {
            if j != i {
                let q = trajs[j].point_at(f).unwrap();
                if (p - q).norm() < radius {
                    out.push(j);
                }
            }
        });
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// One synchronous pass of the normalized weighted-majority filter.
pub fn filter_labels(
    state: &LabelState,
    trajs: &[Trajectory],
    meta: &VideoMeta,
    params: &FilterParams,
) -> LabelState {
    let radius = params.neighbor_frac * meta.width();
    let sigma_d = params.sigma_d_frac * meta.width();
    let grid = FrameGrid::new(trajs, meta, radius);
    let background = (0..trajs.len())
        .into_par_iter()
        .map(|i| {
            let (mut num, mut den) = (0.0, 0.0);
            for j in neighbours(i, trajs, &grid, radius) {
                if let Some(w) = affinity(&trajs[i], &trajs[j], radius, sigma_d, params.sigma_c) {
                    den += w;
                    if state.background[j] {
                        num += w;
                    }
                }
            }
            if den > 0.0 {
                num / den > params.threshold
            } else {
                state.background[i]
            }
        })
        .collect();
    LabelState {
        stage: Stage::Filtered,
        background,
    }
}
