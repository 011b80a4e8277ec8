//! Rigid-motion candidates per clip: RANSAC over overlapping grid cells of
//! the clip's first frame and over unions of mutually consistent cells.

use nalgebra::{Matrix3, Point2};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clips::Clip;
use crate::error::{Error, Result};
use crate::geometry::{
    estimate_fundamental, evaluate_membership, fit_pairwise, is_member, GeometryParams,
    MotionOrigin, PairwiseModel, RigidMotion,
};
use crate::traj::{FrameRange, Trajectory, VideoMeta};

pub const SAMPLE_SIZE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RansacParams {
    /// Iteration cap per cell.
    pub iterations: usize,
    /// Stop early once the standard RANSAC bound for `confidence` is met.
    pub adaptive: bool,
    pub confidence: f64,
    /// A cell motion is accepted when more than this share of the cell's
    /// full-length trajectories are inliers.
    pub accept_ratio: f64,
    /// Largest number of cells in a combination.
    pub max_combo: usize,
    /// Cap on the number of cell combinations tried per clip.
    pub combo_budget: usize,
    /// Share of one motion's inliers that must be members under the other
    /// for two cell motions to count as consistent.
    pub consistency_ratio: f64,
    /// Candidates whose member sets have a Jaccard index above this are
    /// merged, keeping the larger.
    pub dedup_jaccard: f64,
    /// Refit-and-extend rounds applied to each candidate over the clip.
    pub grow_rounds: usize,
    /// A candidate with more than this share of its members inside an
    /// already grown candidate is dropped as the same motion.
    pub absorb_ratio: f64,
}

impl Default for RansacParams {
    fn default() -> Self {
        RansacParams {
            iterations: 500,
            adaptive: true,
            confidence: 0.99,
            accept_ratio: 0.8,
            max_combo: 3,
            combo_budget: 200,
            consistency_ratio: 0.5,
            dedup_jaccard: 0.9,
            grow_rounds: 4,
            absorb_ratio: 0.5,
        }
    }
}

impl RansacParams {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("ransac iterations must be at least 1".into()));
        }
        if !(self.accept_ratio > 0.0 && self.accept_ratio <= 1.0) {
            return Err(Error::Config("accept_ratio must lie in (0, 1]".into()));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::Config("confidence must lie in (0, 1)".into()));
        }
        if !(1..=3).contains(&self.max_combo) {
            return Err(Error::Config("max_combo must be 1, 2 or 3".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridParams {
    /// Cell side in pixels; `None` means a fifth of the frame width.
    pub cell_size: Option<f64>,
    pub overlap: f64,
}

impl Default for GridParams {
    fn default() -> Self {
        GridParams {
            cell_size: None,
            overlap: 0.3,
        }
    }
}

impl GridParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(Error::Config("grid overlap must lie in [0, 1)".into()));
        }
        if let Some(l) = self.cell_size {
            if !(l > 0.0) {
                return Err(Error::Config("grid cell_size must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Axis-aligned cell with inclusive bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Cell {
    pub fn contains(&self, p: &Point2<f64>) -> bool {
        self.x0 <= p.x && p.x <= self.x1 && self.y0 <= p.y && p.y <= self.y1
    }

    pub fn center(&self) -> Point2<f64> {
        Point2::new((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellGrid {
    pub cell_size: f64,
    pub overlap: f64,
    pub cells: Vec<Cell>,
}

/// Cell origins along one axis: step `L (1 - overlap)` until a cell reaches
/// the far edge.
fn origins(extent: f64, size: f64, step: f64) -> Vec<f64> {
    let mut out = vec![0.0];
    let mut x = 0.0;
    while x + size < extent {
        x += step;
        out.push(x);
    }
    out
}

impl CellGrid {
    pub fn new(meta: &VideoMeta, params: &GridParams) -> Self {
        let size = params.cell_size.unwrap_or(meta.width() / 5.0);
        let step = size * (1.0 - params.overlap);
        let xs = origins(meta.width(), size, step);
        let ys = origins(meta.height(), size, step);
        let mut cells = Vec::with_capacity(xs.len() * ys.len());
        for &y in &ys {
            for &x in &xs {
                cells.push(Cell {
                    index: cells.len(),
                    x0: x,
                    y0: y,
                    x1: (x + size).min(meta.width()),
                    y1: (y + size).min(meta.height()),
                });
            }
        }
        CellGrid {
            cell_size: size,
            overlap: params.overlap,
            cells,
        }
    }
}

/// Mixes seed components into an independent stream seed (splitmix64).
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x243f_6a88_85a3_08d3;
    for &p in parts {
        h ^= p;
        h = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h = z ^ (z >> 31);
    }
    h
}

#[derive(Clone, Copy)]
enum Slot {
    Unknown,
    Fitted(Matrix3<f64>),
    Degenerate,
}

/// Hypothesis model whose matrices are estimated on first use from the
/// sample trajectories.
struct LazyModel<'a> {
    trajs: &'a [Trajectory],
    sample: [usize; SAMPLE_SIZE],
    window: FrameRange,
    params: &'a GeometryParams,
    slots: Vec<Slot>,
    degenerate: bool,
}

impl<'a> LazyModel<'a> {
    fn new(trajs: &'a [Trajectory], window: FrameRange, params: &'a GeometryParams) -> Self {
        LazyModel {
            trajs,
            sample: [0; SAMPLE_SIZE],
            window,
            params,
            slots: vec![Slot::Unknown; window.len() * params.max_gap],
            degenerate: false,
        }
    }

    fn reset(&mut self, sample: [usize; SAMPLE_SIZE]) {
        self.sample = sample;
        self.slots.fill(Slot::Unknown);
        self.degenerate = false;
    }

    fn get(&mut self, j: usize, k: usize) -> Option<Matrix3<f64>> {
        let s = (j - self.window.first) * self.params.max_gap + (k - j - 1);
        match self.slots[s] {
            Slot::Fitted(f) => Some(f),
            Slot::Degenerate => None,
            Slot::Unknown => {
                let mut a = [Point2::origin(); SAMPLE_SIZE];
                let mut b = [Point2::origin(); SAMPLE_SIZE];
                for (i, &t) in self.sample.iter().enumerate() {
                    a[i] = *self.trajs[t].point_at(j).expect("sample is full-length");
                    b[i] = *self.trajs[t].point_at(k).expect("sample is full-length");
                }
                match estimate_fundamental(&a, &b, self.params) {
                    Ok(f) => {
                        self.slots[s] = Slot::Fitted(f);
                        Some(f)
                    }
                    Err(_) => {
                        self.slots[s] = Slot::Degenerate;
                        self.degenerate = true;
                        None
                    }
                }
            }
        }
    }

    /// Estimates every remaining pair; `None` if any is degenerate.
    fn materialize(&mut self) -> Option<PairwiseModel> {
        let mut model = PairwiseModel::empty(self.window, self.params.max_gap);
        let pairs: Vec<_> = model.pairs().collect();
        for (j, k) in pairs {
            model.set(j, k, self.get(j, k)?);
        }
        Some(model)
    }
}

/// Best consensus found by RANSAC over a set of full-length trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct RansacFit {
    pub model: PairwiseModel,
    /// Inliers among the input trajectories, sorted.
    pub inliers: Vec<usize>,
    pub iterations: usize,
}

fn required_iterations(inlier_share: f64, confidence: f64) -> f64 {
    let good = inlier_share.powi(SAMPLE_SIZE as i32);
    if good >= 1.0 {
        return 1.0;
    }
    if good <= 0.0 {
        return f64::INFINITY;
    }
    ((1.0 - confidence).ln() / (1.0 - good).ln()).ceil()
}

fn inliers_of(
    trajs: &[Trajectory],
    set: &[usize],
    model: &PairwiseModel,
    g: &GeometryParams,
) -> Vec<usize> {
    set.iter()
        .copied()
        .filter(|&t| is_member(&trajs[t], model, g))
        .collect()
}

/// Refits on `inliers` and keeps the refit only if it is complete and does
/// not lose consensus.
fn refine(
    trajs: &[Trajectory],
    set: &[usize],
    window: FrameRange,
    model: PairwiseModel,
    inliers: Vec<usize>,
    g: &GeometryParams,
) -> (PairwiseModel, Vec<usize>) {
    if inliers.len() <= SAMPLE_SIZE {
        return (model, inliers);
    }
    let (refit, missing) = fit_pairwise(trajs, &inliers, window, g);
    if missing > 0 {
        return (model, inliers);
    }
    let refit_inliers = inliers_of(trajs, set, &refit, g);
    if refit_inliers.len() >= inliers.len() {
        (refit, refit_inliers)
    } else {
        (model, inliers)
    }
}

/// RANSAC over `set` (indices of trajectories visible at every frame of
/// `window`). Returns the best consensus, refined on its inliers, or `None`
/// when the set is too small or every hypothesis was degenerate.
pub fn ransac(
    trajs: &[Trajectory],
    set: &[usize],
    window: FrameRange,
    params: &RansacParams,
    g: &GeometryParams,
    rng: &mut ChaCha8Rng,
) -> Option<RansacFit> {
    let n = set.len();
    if n < SAMPLE_SIZE {
        return None;
    }
    let mut lazy = LazyModel::new(trajs, window, g);
    let mut best: Option<(PairwiseModel, Vec<usize>)> = None;
    let mut best_count = 0usize;
    let mut iterations = 0;
    let mut needed = params.iterations as f64;
    while (iterations as f64) < needed.min(params.iterations as f64) {
        iterations += 1;
        let picked = sample(rng, n, SAMPLE_SIZE);
        let mut s = [0usize; SAMPLE_SIZE];
        for (slot, i) in s.iter_mut().zip(picked.iter()) {
            *slot = set[i];
        }
        lazy.reset(s);

        let mut count = 0usize;
        for (pos, &t) in set.iter().enumerate() {
            if best.is_some() && count + (n - pos) <= best_count {
                break;
            }
            if evaluate_membership(&trajs[t], window, g, |j, k| lazy.get(j, k)) {
                count += 1;
            }
            if lazy.degenerate {
                break;
            }
        }
        if lazy.degenerate || (best.is_some() && count <= best_count) || count == 0 {
            continue;
        }
        let Some(model) = lazy.materialize() else {
            continue;
        };
        let inliers = inliers_of(trajs, set, &model, g);
        let (model, inliers) = refine(trajs, set, window, model, inliers, g);
        best_count = inliers.len();
        best = Some((model, inliers));
        if best_count == n {
            break;
        }
        if params.adaptive {
            needed = required_iterations(best_count as f64 / n as f64, params.confidence);
        }
    }
    best.map(|(model, inliers)| RansacFit {
        model,
        inliers,
        iterations,
    })
}

/// RANSAC on one cell (or union of cells); `None` unless the best consensus
/// exceeds `accept_ratio` of the cell's trajectories.
pub fn propose_cell_motion(
    trajs: &[Trajectory],
    window: FrameRange,
    cell_trajs: &[usize],
    params: &RansacParams,
    g: &GeometryParams,
    seed: u64,
) -> Option<RansacFit> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fit = ransac(trajs, cell_trajs, window, params, g, &mut rng)?;
    (fit.inliers.len() as f64 > params.accept_ratio * cell_trajs.len() as f64).then_some(fit)
}

/// Full-length trajectories of `clip` whose position at the clip's first
/// frame lies in `cell`.
pub fn cell_trajectories(clip: &Clip, trajs: &[Trajectory], cell: &Cell) -> Vec<usize> {
    clip.full
        .iter()
        .copied()
        .filter(|&t| cell.contains(trajs[t].point_at(clip.window.first).unwrap()))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClipCandidates {
    pub clip_index: usize,
    pub motions: Vec<RigidMotion>,
    pub global_fallback: bool,
    pub cells_accepted: usize,
    pub combos_tried: usize,
}

struct Accepted {
    cells: Vec<usize>,
    /// Trajectories the fit was accepted on.
    source: Vec<usize>,
    fit: RansacFit,
}

fn union_sorted(parts: &[&[usize]]) -> Vec<usize> {
    let mut v: Vec<usize> = parts.iter().flat_map(|p| p.iter().copied()).collect();
    v.sort_unstable();
    v.dedup();
    v
}

/// Share of `a`'s inliers that are members under `b`'s model.
fn support(trajs: &[Trajectory], a: &RansacFit, b: &RansacFit, g: &GeometryParams) -> f64 {
    let hits = a
        .inliers
        .iter()
        .filter(|&&t| is_member(&trajs[t], &b.model, g))
        .count();
    hits as f64 / a.inliers.len().max(1) as f64
}

/// Cell combinations of size 2..=max_combo whose cells are pairwise
/// consistent, most spatially spread first, capped at `combo_budget`.
fn consistent_combos(
    accepted: &[Accepted],
    consistent: &[Vec<bool>],
    grid: &CellGrid,
    params: &RansacParams,
) -> Vec<Vec<usize>> {
    let m = accepted.len();
    let mut combos: Vec<Vec<usize>> = Vec::new();
    if params.max_combo >= 2 {
        for a in 0..m {
            for b in a + 1..m {
                if !consistent[a][b] {
                    continue;
                }
                combos.push(vec![a, b]);
                if params.max_combo >= 3 {
                    for (c, with_a) in consistent[a].iter().enumerate().skip(b + 1) {
                        if *with_a && consistent[b][c] {
                            combos.push(vec![a, b, c]);
                        }
                    }
                }
            }
        }
    }
    let spread = |combo: &Vec<usize>| -> f64 {
        let centers: Vec<_> = combo
            .iter()
            .map(|&i| grid.cells[accepted[i].cells[0]].center())
            .collect();
        let mut s = 0.0;
        for (i, p) in centers.iter().enumerate() {
            for q in &centers[i + 1..] {
                s += (p - q).norm();
            }
        }
        s
    };
    let mut keyed: Vec<(f64, Vec<usize>)> = combos.into_iter().map(|c| (spread(&c), c)).collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    keyed.truncate(params.combo_budget);
    keyed.into_iter().map(|(_, c)| c).collect()
}

fn jaccard(a: &[u64], b: &[u64]) -> f64 {
    let (mut inter, mut uni) = (0u32, 0u32);
    for (x, y) in a.iter().zip(b) {
        inter += (x & y).count_ones();
        uni += (x | y).count_ones();
    }
    if uni == 0 {
        1.0
    } else {
        inter as f64 / uni as f64
    }
}

/// Drops candidates whose member sets are near-duplicates of a larger one.
/// Survivors keep their original order.
pub fn deduplicate(
    motions: Vec<RigidMotion>,
    universe: &[usize],
    threshold: f64,
) -> Vec<RigidMotion> {
    let words = universe.len().div_ceil(64);
    let bits: Vec<Vec<u64>> = motions
        .iter()
        .map(|m| {
            let mut b = vec![0u64; words];
            for t in &m.members {
                if let Ok(pos) = universe.binary_search(t) {
                    b[pos / 64] |= 1 << (pos % 64);
                }
            }
            b
        })
        .collect();
    let mut order: Vec<usize> = (0..motions.len()).collect();
    order.sort_by(|&a, &b| {
        motions[b]
            .members
            .len()
            .cmp(&motions[a].members.len())
            .then(a.cmp(&b))
    });
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        if kept
            .iter()
            .all(|&k| jaccard(&bits[i], &bits[k]) <= threshold)
        {
            kept.push(i);
        }
    }
    kept.sort_unstable();
    let mut keep = vec![false; motions.len()];
    for k in kept {
        keep[k] = true;
    }
    motions
        .into_iter()
        .zip(keep)
        .filter_map(|(m, k)| k.then_some(m))
        .collect()
}

fn extend(
    clip: &Clip,
    trajs: &[Trajectory],
    visible: &[usize],
    model: PairwiseModel,
    origin: MotionOrigin,
    g: &GeometryParams,
) -> RigidMotion {
    let members = inliers_of(trajs, visible, &model, g);
    RigidMotion {
        clip_index: clip.index,
        model,
        members,
        origin,
    }
}

/// Refits on the clip-wide members and re-extends while consensus grows.
/// A model fitted on one patch of the image is poorly constrained far from
/// it; refitting on everything that already agrees with it fixes that.
/// A refit is kept only while the source cell still passes acceptance.
fn grow(
    trajs: &[Trajectory],
    visible: &[usize],
    mut motion: RigidMotion,
    source: &[usize],
    params: &RansacParams,
    g: &GeometryParams,
) -> RigidMotion {
    for _ in 0..params.grow_rounds {
        if motion.members.len() <= SAMPLE_SIZE {
            break;
        }
        let (refit, missing) = fit_pairwise(trajs, &motion.members, motion.model.window(), g);
        if missing > 0 {
            break;
        }
        let members = inliers_of(trajs, visible, &refit, g);
        if members.len() <= motion.members.len() {
            break;
        }
        let kept = source
            .iter()
            .filter(|t| members.binary_search(t).is_ok())
            .count();
        if kept as f64 <= params.accept_ratio * source.len() as f64 {
            break;
        }
        motion.model = refit;
        motion.members = members;
    }
    motion
}

/// Share of `members` already claimed by `motion`.
fn overlap(members: &[usize], motion: &RigidMotion) -> f64 {
    let hits = members.iter().filter(|&&t| motion.contains(t)).count();
    hits as f64 / members.len().max(1) as f64
}

/// Grows candidates largest first; a candidate mostly inside an already
/// grown one is the same motion and is dropped. Survivors keep their
/// original order.
fn grow_all(
    trajs: &[Trajectory],
    visible: &[usize],
    motions: Vec<(RigidMotion, Vec<usize>)>,
    params: &RansacParams,
    g: &GeometryParams,
) -> Vec<RigidMotion> {
    let mut order: Vec<usize> = (0..motions.len()).collect();
    order.sort_by(|&a, &b| {
        motions[b]
            .0
            .members
            .len()
            .cmp(&motions[a].0.members.len())
            .then(a.cmp(&b))
    });
    let mut slots: Vec<Option<(RigidMotion, Vec<usize>)>> = motions.into_iter().map(Some).collect();
    let mut grown: Vec<(usize, RigidMotion)> = Vec::new();
    for i in order {
        let (m, source) = slots[i].take().unwrap();
        if grown
            .iter()
            .any(|(_, k)| overlap(&m.members, k) > params.absorb_ratio)
        {
            continue;
        }
        grown.push((i, grow(trajs, visible, m, &source, params, g)));
    }
    grown.sort_by_key(|(i, _)| *i);
    grown.into_iter().map(|(_, m)| m).collect()
}

/// All rigid-motion candidates of one clip.
pub fn propose_clip_candidates(
    clip: &Clip,
    trajs: &[Trajectory],
    grid: &CellGrid,
    params: &RansacParams,
    g: &GeometryParams,
    seed: u64,
) -> ClipCandidates {
    let window = clip.window;
    let clip_seed = clip.index as u64;
    let cell_sets: Vec<Vec<usize>> = grid
        .cells
        .iter()
        .map(|c| cell_trajectories(clip, trajs, c))
        .collect();

    let accepted: Vec<Accepted> = grid
        .cells
        .par_iter()
        .zip(cell_sets.par_iter())
        .filter_map(|(cell, set)| {
            let s = derive_seed(&[seed, clip_seed, 0, cell.index as u64]);
            propose_cell_motion(trajs, window, set, params, g, s).map(|fit| Accepted {
                cells: vec![cell.index],
                source: set.clone(),
                fit,
            })
        })
        .collect();

    let m = accepted.len();
    let support_matrix: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|a| {
            (0..m)
                .map(|b| {
                    if a == b {
                        1.0
                    } else {
                        support(trajs, &accepted[a].fit, &accepted[b].fit, g)
                    }
                })
                .collect()
        })
        .collect();
    let consistent: Vec<Vec<bool>> = (0..m)
        .map(|a| {
            (0..m)
                .map(|b| {
                    support_matrix[a][b] >= params.consistency_ratio
                        && support_matrix[b][a] >= params.consistency_ratio
                })
                .collect()
        })
        .collect();
    let combos = consistent_combos(&accepted, &consistent, grid, params);
    let combos_tried = combos.len();

    let combo_fits: Vec<Accepted> = combos
        .par_iter()
        .enumerate()
        .filter_map(|(ci, combo)| {
            let parts: Vec<&[usize]> = combo
                .iter()
                .map(|&a| cell_sets[accepted[a].cells[0]].as_slice())
                .collect();
            let set = union_sorted(&parts);
            let s = derive_seed(&[seed, clip_seed, 1, ci as u64]);
            let cells = combo.iter().map(|&a| accepted[a].cells[0]).collect();
            propose_cell_motion(trajs, window, &set, params, g, s).map(|fit| Accepted {
                cells,
                source: set,
                fit,
            })
        })
        .collect();

    let visible = clip.visible();
    let cells_accepted = accepted.len();
    let extended: Vec<(RigidMotion, Vec<usize>)> = accepted
        .into_par_iter()
        .chain(combo_fits.into_par_iter())
        .map(|a| {
            let origin = if a.cells.len() == 1 {
                MotionOrigin::Cell(a.cells[0])
            } else {
                MotionOrigin::Combination(a.cells)
            };
            (
                extend(clip, trajs, &visible, a.fit.model, origin, g),
                a.source,
            )
        })
        .collect();

    let global_fallback = extended.is_empty();
    let motions = if global_fallback {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, clip_seed, 2]));
        let model = ransac(trajs, &clip.full, window, params, g, &mut rng)
            .map(|fit| fit.model)
            .unwrap_or_else(|| PairwiseModel::empty(window, g.max_gap));
        vec![extend(
            clip,
            trajs,
            &visible,
            model,
            MotionOrigin::GlobalFallback,
            g,
        )]
    } else {
        let grown = grow_all(trajs, &visible, extended, params, g);
        deduplicate(grown, &visible, params.dedup_jaccard)
    };

    ClipCandidates {
        clip_index: clip.index,
        motions,
        global_fallback,
        cells_accepted,
        combos_tried,
    }
}

/// One decimal is enough to tell cells apart and avoids float noise.
fn round1(v: f64) -> f64 {
    (v * 10.0).round() / 10.0
}

/// Human-readable provenance, `x,y` of each source cell's origin.
pub fn origin_label(origin: &MotionOrigin, grid: &CellGrid) -> String {
    let cell = |i: &usize| {
        let c = &grid.cells[*i];
        format!("{},{}", round1(c.x0), round1(c.y0))
    };
    match origin {
        MotionOrigin::Cell(i) => cell(i),
        MotionOrigin::Combination(cs) => cs.iter().map(cell).collect::<Vec<_>>().join("+"),
        MotionOrigin::GlobalFallback => "-".to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_on_vga() {
        let meta = VideoMeta::new(640, 480, 10).unwrap();
        let grid = CellGrid::new(&meta, &GridParams::default());
        assert_eq!(grid.cell_size, 128.0);
        assert_eq!(grid.cells.len(), 7 * 5);
        let c = grid.cells[1];
        assert!((c.x0 - 89.6).abs() < 1e-9);
        // last column clipped to the image
        assert_eq!(grid.cells[6].x1, 640.0);
        assert_eq!(grid.cells[34].y1, 480.0);
    }

    #[test]
    fn grid_covers_every_pixel() {
        for (w, h) in [(640, 480), (100, 37), (31, 200), (5, 5)] {
            let meta = VideoMeta::new(w, h, 2).unwrap();
            let grid = CellGrid::new(&meta, &GridParams::default());
            for y in 0..=h {
                for x in 0..=w {
                    let p = Point2::new(x as f64, y as f64);
                    assert!(
                        grid.cells.iter().any(|c| c.contains(&p)),
                        "{w}x{h} ({x},{y})"
                    );
                }
            }
        }
    }

    #[test]
    fn seeds_differ_per_component() {
        let a = derive_seed(&[1, 2, 0, 3]);
        assert_ne!(a, derive_seed(&[1, 2, 0, 4]));
        assert_ne!(a, derive_seed(&[1, 3, 0, 3]));
        assert_eq!(a, derive_seed(&[1, 2, 0, 3]));
    }

    #[test]
    fn iteration_bound() {
        assert_eq!(required_iterations(1.0, 0.99), 1.0);
        // w = 0.5: log(0.01) / log(1 - 1/256)
        assert_eq!(required_iterations(0.5, 0.99), 1177.0);
        assert!(required_iterations(0.0, 0.99).is_infinite());
    }

    #[test]
    fn origin_labels() {
        let meta = VideoMeta::new(640, 480, 10).unwrap();
        let grid = CellGrid::new(&meta, &GridParams::default());
        assert_eq!(origin_label(&MotionOrigin::Cell(0), &grid), "0,0");
        assert_eq!(
            origin_label(&MotionOrigin::Combination(vec![1, 8]), &grid),
            "89.6,0+89.6,89.6"
        );
        assert_eq!(origin_label(&MotionOrigin::GlobalFallback, &grid), "-");
    }

    #[test]
    fn jaccard_identity() {
        assert_eq!(jaccard(&[0b1011], &[0b1011]), 1.0);
        assert_eq!(jaccard(&[0b0011], &[0b0110]), 1.0 / 3.0);
    }

    mod scene {
        use super::*;
        use crate::synth::{scenario, GroundTruth, Group, SceneSpec};
        use proptest::prelude::*;
        use rand::Rng;

        fn clip_of(trajs: &[Trajectory], window: FrameRange) -> Clip {
            let (mut full, mut partial) = (Vec::new(), Vec::new());
            for (i, t) in trajs.iter().enumerate() {
                let vis = window.frames().filter(|&f| t.is_visible(f)).count();
                if vis == window.len() {
                    full.push(i);
                } else if vis > 0 {
                    partial.push(i);
                }
            }
            Clip {
                index: 0,
                window,
                full,
                partial,
                forced: false,
            }
        }

        struct Fixture {
            meta: VideoMeta,
            trajs: Vec<Trajectory>,
            gt: GroundTruth,
            clip: Clip,
        }

        fn fixture(mut spec: SceneSpec, n: usize) -> Fixture {
            spec.frames = 6;
            spec.trajectories = n;
            spec.noise_px = 0.0;
            let (meta, trajs, gt) = spec.render(5).unwrap();
            let clip = clip_of(&trajs, FrameRange::new(0, 5).unwrap());
            Fixture {
                meta,
                trajs,
                gt,
                clip,
            }
        }

        impl Fixture {
            fn of(&self, group: Group, set: &[usize]) -> Vec<usize> {
                set.iter()
                    .copied()
                    .filter(|&t| self.gt.labels[t].1 == group)
                    .collect()
            }

            fn candidates(&self, seed: u64) -> ClipCandidates {
                let grid = CellGrid::new(&self.meta, &GridParams::default());
                propose_clip_candidates(
                    &self.clip,
                    &self.trajs,
                    &grid,
                    &RansacParams::default(),
                    &GeometryParams::default(),
                    seed,
                )
            }

            fn best_background_cover(&self, cands: &ClipCandidates) -> f64 {
                let bg = self.of(Group::Background, &self.clip.visible());
                let best = cands
                    .motions
                    .iter()
                    .map(|m| bg.iter().filter(|&&t| m.contains(t)).count())
                    .max()
                    .unwrap_or(0);
                best as f64 / bg.len() as f64
            }
        }

        fn static_world() -> Fixture {
            let mut spec = scenario("deep-background").unwrap();
            spec.bodies.clear();
            fixture(spec, 600)
        }

        fn window() -> FrameRange {
            FrameRange::new(0, 5).unwrap()
        }

        #[test]
        fn pure_background_cell_fully_accepted() {
            let fx = static_world();
            let set: Vec<usize> = fx.clip.full.iter().copied().take(60).collect();
            let fit = propose_cell_motion(
                &fx.trajs,
                window(),
                &set,
                &RansacParams::default(),
                &GeometryParams::default(),
                1,
            )
            .expect("accepted");
            assert_eq!(fit.inliers, set);
        }

        #[test]
        fn half_and_half_cell_rejected() {
            // a body whose image motion is clearly not the background's
            let mut spec = scenario("large-foreground").unwrap();
            spec.bodies[0].velocity = [0.1, 0.0, -0.3];
            spec.bodies[0].yaw_rate = 0.05;
            let fx = fixture(spec, 1500);
            let bg = fx.of(Group::Background, &fx.clip.full);
            let body = fx.of(Group::Body(0), &fx.clip.full);
            let mut set: Vec<usize> = bg[..30].iter().chain(&body[..30]).copied().collect();
            set.sort_unstable();
            let params = RansacParams::default();
            let g = GeometryParams::default();
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            let best = ransac(&fx.trajs, &set, window(), &params, &g, &mut rng).unwrap();
            assert!(best.inliers.len() <= 36, "consensus {}", best.inliers.len());
            assert!(propose_cell_motion(&fx.trajs, window(), &set, &params, &g, 2).is_none());
        }

        #[test]
        fn seven_trajectories_rejected() {
            let fx = static_world();
            let set: Vec<usize> = fx.clip.full[..7].to_vec();
            let p = RansacParams::default();
            assert!(propose_cell_motion(
                &fx.trajs,
                window(),
                &set,
                &p,
                &GeometryParams::default(),
                1
            )
            .is_none());
        }

        #[test]
        fn static_world_single_background_candidate() {
            let fx = static_world();
            let cands = fx.candidates(3);
            assert!(!cands.global_fallback);
            assert!(
                fx.best_background_cover(&cands) >= 0.99,
                "{}",
                fx.best_background_cover(&cands)
            );
        }

        #[test]
        fn background_found_under_large_foreground() {
            let mut spec = scenario("large-foreground").unwrap();
            for b in &mut spec.bodies {
                for a in &mut b.semi_axes {
                    *a *= 1.15;
                }
            }
            let fx = fixture(spec.clone(), 2500);
            let mut spec6 = spec;
            spec6.frames = 6;
            assert!(
                spec6.foreground_fraction(0) >= 0.7,
                "{}",
                spec6.foreground_fraction(0)
            );
            let cands = fx.candidates(4);
            assert!(
                fx.best_background_cover(&cands) >= 0.95,
                "{}",
                fx.best_background_cover(&cands)
            );
        }

        #[test]
        fn accepted_candidates_keep_their_source_cells() {
            let fx = fixture(scenario("large-foreground").unwrap(), 1500);
            let grid = CellGrid::new(&fx.meta, &GridParams::default());
            for m in &fx.candidates(6).motions {
                let cells = match &m.origin {
                    MotionOrigin::Cell(c) => vec![*c],
                    MotionOrigin::Combination(cs) => cs.clone(),
                    MotionOrigin::GlobalFallback => continue,
                };
                let parts: Vec<Vec<usize>> = cells
                    .iter()
                    .map(|&c| cell_trajectories(&fx.clip, &fx.trajs, &grid.cells[c]))
                    .collect();
                let refs: Vec<&[usize]> = parts.iter().map(|p| p.as_slice()).collect();
                let source = union_sorted(&refs);
                let kept = source.iter().filter(|&&t| m.contains(t)).count();
                assert!(
                    kept as f64 >= 0.8 * source.len() as f64,
                    "{kept}/{}",
                    source.len()
                );
            }
        }

        #[test]
        fn too_few_full_trajectories_falls_back() {
            let fx = static_world();
            let mut clip = fx.clip.clone();
            clip.partial.extend(clip.full.drain(7..));
            clip.partial.sort_unstable();
            let grid = CellGrid::new(&fx.meta, &GridParams::default());
            let c = propose_clip_candidates(
                &clip,
                &fx.trajs,
                &grid,
                &RansacParams::default(),
                &GeometryParams::default(),
                1,
            );
            assert!(c.global_fallback);
            assert_eq!(c.motions.len(), 1);
            assert_eq!(c.motions[0].origin, MotionOrigin::GlobalFallback);
        }

        #[test]
        fn deterministic_under_seed() {
            let fx = fixture(scenario("large-foreground").unwrap(), 1200);
            assert_eq!(fx.candidates(9), fx.candidates(9));
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(8))]
            #[test]
            fn noise_outside_the_cell_changes_nothing(seed in 0u64..1000, extra in 1usize..40) {
                let fx = static_world();
                let set: Vec<usize> = fx.clip.full.iter().copied().take(40).collect();
                let p = RansacParams::default();
                let g = GeometryParams::default();
                let before = propose_cell_motion(&fx.trajs, window(), &set, &p, &g, seed).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut trajs = fx.trajs.clone();
                for i in 0..extra {
                    let pts = (0..6)
                        .map(|_| Point2::new(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0)))
                        .collect();
                    trajs.push(Trajectory::new(1_000_000 + i as u64, 0, pts, None).unwrap());
                }
                let after = propose_cell_motion(&trajs, window(), &set, &p, &g, seed).unwrap();
                prop_assert_eq!(&before.inliers, &after.inliers);
                for (old, new) in fx.trajs.iter().zip(&trajs) {
                    prop_assert_eq!(is_member(old, &before.model, &g), is_member(new, &after.model, &g));
                }
            }
        }
    }
}
