//! Two-view epipolar geometry and the rigid-motion model.
//!
//! A rigid motion inside a frame window is a set of fundamental matrices
//! `F(j, k)` for every frame pair with `0 < k - j <= max_gap`. A trajectory
//! belongs to the motion when more than `member_ratio` of its tested matches
//! `(p_j, p_k)` lie within `inlier_px` of their epipolar lines `F(j, k) p_j`.

use nalgebra::{DMatrix, Matrix3, Point2, SMatrix, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::traj::{FrameRange, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryParams {
    /// Largest frame gap `k - j` with a fundamental matrix.
    pub max_gap: usize,
    /// Point-to-epipolar-line distance (pixels) below which a match is positive.
    pub inlier_px: f64,
    /// Strict lower bound on the positive share of tested matches.
    pub member_ratio: f64,
    /// Fewer tested matches than this make a trajectory untestable.
    pub min_tested_pairs: usize,
    /// Design-matrix condition number above which estimation is refused.
    pub max_condition: f64,
    /// Share of collinear points above which estimation is refused.
    pub collinear_fraction: f64,
}

impl Default for GeometryParams {
    fn default() -> Self {
        GeometryParams {
            max_gap: 5,
            inlier_px: 1.5,
            member_ratio: 0.9,
            min_tested_pairs: 3,
            max_condition: 1e10,
            collinear_fraction: 0.75,
        }
    }
}

impl GeometryParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_gap < 1 {
            return Err(Error::Config("max_gap must be at least 1".into()));
        }
        if !(self.inlier_px > 0.0) {
            return Err(Error::Config("inlier_px must be positive".into()));
        }
        if !(self.member_ratio > 0.0 && self.member_ratio <= 1.0) {
            return Err(Error::Config("member_ratio must lie in (0, 1]".into()));
        }
        if !(self.max_condition > 1.0) || !(self.collinear_fraction > 0.0) {
            return Err(Error::Config("degeneracy guards must be positive".into()));
        }
        Ok(())
    }
}

/// Reasons the 8-point estimator refuses a point set.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Degeneracy {
    #[error("need at least 8 correspondences, got {0}")]
    TooFewPoints(usize),
    #[error("point sets have mismatched lengths {0} and {1}")]
    LengthMismatch(usize, usize),
    #[error("non-finite input point")]
    NonFinite,
    #[error("all points coincide")]
    Coincident,
    #[error("more than {0:.0}% of the points are collinear")]
    Collinear(f64),
    #[error("design matrix condition number {0:.3e} too large")]
    IllConditioned(f64),
}

/// `F(from, to)` with `p_toᵀ F p_from = 0`, rank 2 and unit Frobenius norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FundamentalMatrix {
    pub from_frame: usize,
    pub to_frame: usize,
    pub matrix: Matrix3<f64>,
}

/// Isotropic normalization: centroid to the origin, mean distance √2.
fn normalizing_transform(points: &[Point2<f64>]) -> Result<Matrix3<f64>, Degeneracy> {
    let n = points.len() as f64;
    let (mut cx, mut cy) = (0.0, 0.0);
    for p in points {
        cx += p.x;
        cy += p.y;
    }
    cx /= n;
    cy /= n;
    let mean_dist = points
        .iter()
        .map(|p| ((p.x - cx).powi(2) + (p.y - cy).powi(2)).sqrt())
        .sum::<f64>()
        / n;
    let scale_ref = cx.abs().max(cy.abs()).max(1.0);
    if !(mean_dist > 1e-12 * scale_ref) {
        return Err(Degeneracy::Coincident);
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    Ok(Matrix3::new(
        s,
        0.0,
        -s * cx,
        0.0,
        s,
        -s * cy,
        0.0,
        0.0,
        1.0,
    ))
}

fn apply(t: &Matrix3<f64>, p: &Point2<f64>) -> Point2<f64> {
    Point2::new(t[(0, 0)] * p.x + t[(0, 2)], t[(1, 1)] * p.y + t[(1, 2)])
}

/// True when more than `fraction` of the (normalized) points lie on one line.
fn mostly_collinear(points: &[Point2<f64>], fraction: f64) -> bool {
    const TOL: f64 = 1e-9;
    let n = points.len();
    let needed = (fraction * n as f64).floor() as usize + 1;
    if needed > n {
        return false;
    }
    for i in 0..n {
        for j in i + 1..n {
            let d = points[j] - points[i];
            let len = d.norm();
            if len < TOL {
                continue;
            }
            let count = points
                .iter()
                .filter(|p| {
                    let v = *p - points[i];
                    (d.x * v.y - d.y * v.x).abs() / len < TOL
                })
                .count();
            if count >= needed {
                return true;
            }
        }
    }
    false
}

/// Point sets larger than this skip the cubic collinearity scan; the
/// condition-number guard still applies.
const COLLINEARITY_SCAN_LIMIT: usize = 64;

/// Normalized 8-point estimate of `F` with `dstᵀ F src = 0`.
pub fn estimate_fundamental(
    src: &[Point2<f64>],
    dst: &[Point2<f64>],
    params: &GeometryParams,
) -> Result<Matrix3<f64>, Degeneracy> {
    let n = src.len();
    if dst.len() != n {
        return Err(Degeneracy::LengthMismatch(n, dst.len()));
    }
    if n < 8 {
        return Err(Degeneracy::TooFewPoints(n));
    }
    if src
        .iter()
        .chain(dst)
        .any(|p| !p.x.is_finite() || !p.y.is_finite())
    {
        return Err(Degeneracy::NonFinite);
    }
    let t_src = normalizing_transform(src)?;
    let t_dst = normalizing_transform(dst)?;

    if n <= COLLINEARITY_SCAN_LIMIT {
        let ns: Vec<_> = src.iter().map(|p| apply(&t_src, p)).collect();
        let nd: Vec<_> = dst.iter().map(|p| apply(&t_dst, p)).collect();
        if mostly_collinear(&ns, params.collinear_fraction)
            || mostly_collinear(&nd, params.collinear_fraction)
        {
            return Err(Degeneracy::Collinear(params.collinear_fraction * 100.0));
        }
    }

    let row = |p: &Point2<f64>, q: &Point2<f64>| -> [f64; 9] {
        let a = apply(&t_src, p);
        let b = apply(&t_dst, q);
        [
            b.x * a.x,
            b.x * a.y,
            b.x,
            b.y * a.x,
            b.y * a.y,
            b.y,
            a.x,
            a.y,
            1.0,
        ]
    };

    // Square 9x9 system with the same singular values as the design matrix:
    // zero-padded for n <= 9, the R factor of a QR decomposition otherwise.
    let mut square = SMatrix::<f64, 9, 9>::zeros();
    if n <= 9 {
        for (i, (p, q)) in src.iter().zip(dst).enumerate() {
            let r = row(p, q);
            for c in 0..9 {
                square[(i, c)] = r[c];
            }
        }
    } else {
        let mut a = DMatrix::<f64>::zeros(n, 9);
        for (i, (p, q)) in src.iter().zip(dst).enumerate() {
            let r = row(p, q);
            for c in 0..9 {
                a[(i, c)] = r[c];
            }
        }
        let r = a.qr().r();
        for i in 0..9 {
            for c in 0..9 {
                square[(i, c)] = r[(i, c)];
            }
        }
    }

    let svd = square.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..9).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let largest = svd.singular_values[order[0]];
    let eighth = svd.singular_values[order[7]];
    let condition = if eighth > 0.0 {
        largest / eighth
    } else {
        f64::INFINITY
    };
    if !(condition <= params.max_condition) {
        return Err(Degeneracy::IllConditioned(condition));
    }
    let null = v_t.row(order[8]);
    let f_hat = Matrix3::new(
        null[0], null[1], null[2], null[3], null[4], null[5], null[6], null[7], null[8],
    );
    let f_hat = enforce_rank_two(&f_hat);
    let f = t_dst.transpose() * f_hat * t_src;
    let norm = f.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Degeneracy::IllConditioned(f64::INFINITY));
    }
    Ok(f / norm)
}

/// Zeroes the smallest singular value.
pub fn enforce_rank_two(f: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = f.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut s = svd.singular_values;
    let imin = s.imin();
    s[imin] = 0.0;
    u * Matrix3::from_diagonal(&s) * v_t
}

/// Distance (pixels) from `p_k` to the epipolar line `F p_j`.
///
/// Returns `+∞` when the line is undefined (`p_j` maps to the line at
/// infinity), never NaN for finite input.
#[inline]
pub fn geometric_error(p_j: &Point2<f64>, p_k: &Point2<f64>, f: &Matrix3<f64>) -> f64 {
    let l0 = f[(0, 0)] * p_j.x + f[(0, 1)] * p_j.y + f[(0, 2)];
    let l1 = f[(1, 0)] * p_j.x + f[(1, 1)] * p_j.y + f[(1, 2)];
    let l2 = f[(2, 0)] * p_j.x + f[(2, 1)] * p_j.y + f[(2, 2)];
    let den = (l0 * l0 + l1 * l1).sqrt();
    if !(den > 0.0) || !den.is_finite() {
        return f64::INFINITY;
    }
    let d = (l0 * p_k.x + l1 * p_k.y + l2).abs() / den;
    if d.is_nan() {
        f64::INFINITY
    } else {
        d
    }
}

/// Algebraic residual `p_kᵀ F p_j`.
pub fn epipolar_residual(p_j: &Point2<f64>, p_k: &Point2<f64>, f: &Matrix3<f64>) -> f64 {
    Vector3::new(p_k.x, p_k.y, 1.0).dot(&(f * Vector3::new(p_j.x, p_j.y, 1.0)))
}

/// Fundamental matrices for all frame pairs `(j, k)`, `0 < k - j <= max_gap`,
/// inside a window. Pairs may be absent when they could not be estimated.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseModel {
    window: FrameRange,
    max_gap: usize,
    slots: Vec<Option<Matrix3<f64>>>,
}

impl PairwiseModel {
    pub fn empty(window: FrameRange, max_gap: usize) -> Self {
        PairwiseModel {
            window,
            max_gap,
            slots: vec![None; window.len() * max_gap],
        }
    }

    pub fn window(&self) -> FrameRange {
        self.window
    }

    pub fn max_gap(&self) -> usize {
        self.max_gap
    }

    #[inline]
    fn slot(&self, j: usize, k: usize) -> Option<usize> {
        if j < self.window.first || k > self.window.last || k <= j || k - j > self.max_gap {
            return None;
        }
        Some((j - self.window.first) * self.max_gap + (k - j - 1))
    }

    #[inline]
    pub fn get(&self, j: usize, k: usize) -> Option<&Matrix3<f64>> {
        self.slot(j, k).and_then(|s| self.slots[s].as_ref())
    }

    pub fn set(&mut self, j: usize, k: usize, f: Matrix3<f64>) {
        let s = self
            .slot(j, k)
            .expect("frame pair outside the model window");
        self.slots[s] = Some(f);
    }

    /// Every frame pair the window admits, in `(j, k)` order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        window_pairs(self.window, self.max_gap)
    }

    pub fn matrices(&self) -> impl Iterator<Item = FundamentalMatrix> + '_ {
        self.pairs().filter_map(|(j, k)| {
            self.get(j, k).map(|m| FundamentalMatrix {
                from_frame: j,
                to_frame: k,
                matrix: *m,
            })
        })
    }

    pub fn pair_count(&self) -> usize {
        self.pairs().count()
    }

    pub fn present_count(&self) -> usize {
        self.slots.iter().filter(|s| s.is_some()).count()
    }

    pub fn is_complete(&self) -> bool {
        self.present_count() == self.pair_count()
    }
}

pub fn window_pairs(window: FrameRange, max_gap: usize) -> impl Iterator<Item = (usize, usize)> {
    window.frames().flat_map(move |j| {
        let hi = (j + max_gap).min(window.last);
        (j + 1..=hi).map(move |k| (j, k))
    })
}

/// Frames of `traj` inside `window`, if any.
#[inline]
fn visible_part(traj: &Trajectory, window: FrameRange) -> Option<FrameRange> {
    traj.span().intersect(&window)
}

/// Upper bound on the number of tested matches of `traj` in `window`.
pub fn testable_pairs(traj: &Trajectory, window: FrameRange, max_gap: usize) -> usize {
    match visible_part(traj, window) {
        None => 0,
        Some(v) => v.frames().map(|j| (j + max_gap).min(v.last) - j).sum(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MatchStats {
    pub tested: usize,
    pub positive: usize,
    pub error_sum: f64,
}

impl MatchStats {
    pub fn mean_error(&self) -> Option<f64> {
        (self.tested > 0).then(|| self.error_sum / self.tested as f64)
    }

    pub fn is_member(&self, params: &GeometryParams) -> bool {
        self.tested >= params.min_tested_pairs
            && (self.positive as f64) > params.member_ratio * self.tested as f64
    }
}

/// Full pass over every tested match of `traj` under `model`.
pub fn match_stats(traj: &Trajectory, model: &PairwiseModel, inlier_px: f64) -> MatchStats {
    let mut stats = MatchStats::default();
    let Some(v) = visible_part(traj, model.window) else {
        return stats;
    };
    for j in v.frames() {
        let pj = traj.point_at(j).unwrap();
        for k in j + 1..=(j + model.max_gap).min(v.last) {
            if let Some(f) = model.get(j, k) {
                let e = geometric_error(pj, traj.point_at(k).unwrap(), f);
                stats.tested += 1;
                stats.error_sum += e;
                if e < inlier_px {
                    stats.positive += 1;
                }
            }
        }
    }
    stats
}

/// Membership test with early exit. `lookup(j, k)` supplies `F(j, k)` or
/// `None` for an absent pair. The verdict equals
/// `match_stats(..).is_member(params)` for the same matrices.
#[inline]
pub fn evaluate_membership<L>(
    traj: &Trajectory,
    window: FrameRange,
    params: &GeometryParams,
    mut lookup: L,
) -> bool
where
    L: FnMut(usize, usize) -> Option<Matrix3<f64>>,
{
    let Some(v) = visible_part(traj, window) else {
        return false;
    };
    let max_tested = testable_pairs(traj, window, params.max_gap);
    if max_tested < params.min_tested_pairs {
        return false;
    }
    let theta = params.member_ratio;
    let bound = theta * max_tested as f64;
    let (mut tested, mut positive, mut negative) = (0usize, 0usize, 0usize);
    for j in v.frames() {
        let pj = traj.point_at(j).unwrap();
        for k in j + 1..=(j + params.max_gap).min(v.last) {
            let Some(f) = lookup(j, k) else { continue };
            tested += 1;
            if geometric_error(pj, traj.point_at(k).unwrap(), &f) < params.inlier_px {
                positive += 1;
                // the final share is at least positive / max_tested
                if positive >= params.min_tested_pairs && positive as f64 > bound {
                    return true;
                }
            } else {
                negative += 1;
                // the final share is at most (max_tested - negative) / max_tested
                if ((max_tested - negative) as f64) <= bound {
                    return false;
                }
            }
        }
    }
    tested >= params.min_tested_pairs && (positive as f64) > theta * tested as f64
}

pub fn is_member(traj: &Trajectory, model: &PairwiseModel, params: &GeometryParams) -> bool {
    evaluate_membership(traj, model.window, params, |j, k| model.get(j, k).copied())
}

/// Fits `F(j, k)` for every pair of `window` from the matches of the given
/// trajectories visible at both frames. Pairs with fewer than eight matches
/// or a degenerate configuration stay absent; the number of such pairs is
/// returned alongside the model.
pub fn fit_pairwise(
    trajs: &[Trajectory],
    members: &[usize],
    window: FrameRange,
    params: &GeometryParams,
) -> (PairwiseModel, usize) {
    let mut model = PairwiseModel::empty(window, params.max_gap);
    let pairs: Vec<_> = model.pairs().collect();
    let fitted: Vec<Option<Matrix3<f64>>> = pairs
        .par_iter()
        .map(|&(j, k)| {
            let mut src = Vec::new();
            let mut dst = Vec::new();
            for &t in members {
                let traj = &trajs[t];
                if let (Some(a), Some(b)) = (traj.point_at(j), traj.point_at(k)) {
                    src.push(*a);
                    dst.push(*b);
                }
            }
            estimate_fundamental(&src, &dst, params).ok()
        })
        .collect();
    let mut missing = 0;
    for ((j, k), f) in pairs.into_iter().zip(fitted) {
        match f {
            Some(f) => model.set(j, k, f),
            None => missing += 1,
        }
    }
    (model, missing)
}

/// Where a motion candidate came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MotionOrigin {
    /// A single grid cell.
    Cell(usize),
    /// A union of grid cells.
    Combination(Vec<usize>),
    /// Whole-clip RANSAC with acceptance waived.
    GlobalFallback,
}

impl MotionOrigin {
    pub fn tag(&self) -> &'static str {
        match self {
            MotionOrigin::Cell(_) => "cell",
            MotionOrigin::Combination(_) => "combo",
            MotionOrigin::GlobalFallback => "global-fallback",
        }
    }
}

/// A rigid-motion hypothesis for one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidMotion {
    pub clip_index: usize,
    pub model: PairwiseModel,
    /// Member trajectory indices, sorted ascending.
    pub members: Vec<usize>,
    pub origin: MotionOrigin,
}

impl RigidMotion {
    pub fn is_member(&self, traj: &Trajectory, params: &GeometryParams) -> bool {
        is_member(traj, &self.model, params)
    }

    pub fn contains(&self, traj_index: usize) -> bool {
        self.members.binary_search(&traj_index).is_ok()
    }
}
