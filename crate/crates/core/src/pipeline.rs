//! End-to-end driver: clips → candidates → motion graph → labeling.

use std::fmt::{self, Write as _};
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidates::{
    derive_seed, origin_label, propose_clip_candidates, CellGrid, ClipCandidates,
};
use crate::clips::{generate_clips, Clip};
use crate::config::{DiagnosticParams, PipelineConfig};
use crate::error::{Error, Result};
use crate::geometry::RigidMotion;
use crate::graph::{build_graph, dominant_path, MotionGraph, MotionPath};
use crate::labeling::{
    filter_labels, fit_global_motion, path_labels, refine_global, reliable_background, LabelState,
};
use crate::metrics::{evaluate, MetricsReport};
use crate::traj::{SpanTable, Trajectory, VideoMeta};

/// Conditions worth reporting. Only the ones for which
/// [`Flag::is_violation`] holds mean an assumption of the method broke.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Flag {
    /// A clip was cut at `max_len` without reaching the ratio rule.
    LowTurnover,
    /// Some clip had no accepted candidate and used the global fallback.
    GlobalFallback,
    /// The motion graph had a layer with no incoming edge.
    Bridged,
    /// No trajectory was on the path in every clip it touches; the global
    /// stage was skipped.
    NoReliableBackground,
    /// Too few frame pairs could be fitted from reliable trajectories; the
    /// global stage was skipped.
    GlobalUnderdetermined,
    /// Many long trajectories barely move: the camera is close to static.
    InsufficientCameraMotion,
    /// Many trajectories are too short to be tested.
    ShortTrajectories,
}

impl Flag {
    pub fn name(self) -> &'static str {
        match self {
            Flag::LowTurnover => "low-turnover",
            Flag::GlobalFallback => "global-fallback",
            Flag::Bridged => "bridged",
            Flag::NoReliableBackground => "no-reliable-background",
            Flag::GlobalUnderdetermined => "global-underdetermined",
            Flag::InsufficientCameraMotion => "insufficient-camera-motion",
            Flag::ShortTrajectories => "short-trajectories",
        }
    }

    pub fn is_violation(self) -> bool {
        matches!(
            self,
            Flag::NoReliableBackground
                | Flag::GlobalUnderdetermined
                | Flag::InsufficientCameraMotion
                | Flag::ShortTrajectories
        )
    }
}

impl fmt::Display for Flag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Wall-clock seconds per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub clips: f64,
    pub candidates: f64,
    pub graph: f64,
    pub labeling: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub clips: Vec<Clip>,
    pub grid: CellGrid,
    pub candidates: Vec<ClipCandidates>,
    pub graph: MotionGraph,
    pub path: MotionPath,
    pub reliable: Vec<usize>,
    /// Every label stage that ran, in order; the last one is final.
    pub stages: Vec<LabelState>,
    pub flags: Vec<Flag>,
    pub timings: Timings,
}

impl PipelineOutput {
    pub fn final_stage(&self) -> &LabelState {
        self.stages.last().expect("at least the path stage runs")
    }

    pub fn labels(&self, trajs: &[Trajectory]) -> Vec<(u64, bool)> {
        self.final_stage().labels(trajs)
    }

    pub fn motions(&self) -> Vec<Vec<RigidMotion>> {
        self.candidates.iter().map(|c| c.motions.clone()).collect()
    }

    pub fn violations(&self) -> Vec<Flag> {
        self.flags
            .iter()
            .copied()
            .filter(|f| f.is_violation())
            .collect()
    }

    /// `index first last forced` per clip.
    pub fn dump_clips(&self) -> String {
        let mut out = String::new();
        for c in &self.clips {
            let _ = writeln!(
                out,
                "{} {} {} {}",
                c.index,
                c.window.first,
                c.window.last,
                u8::from(c.forced)
            );
        }
        out
    }

    /// `clip cell_origin n_members origin_tag` per candidate.
    pub fn dump_candidates(&self) -> String {
        let mut out = String::new();
        for cc in &self.candidates {
            for m in &cc.motions {
                let _ = writeln!(
                    out,
                    "{} {} {} {}",
                    cc.clip_index,
                    origin_label(&m.origin, &self.grid),
                    m.members.len(),
                    m.origin.tag()
                );
            }
        }
        out
    }

    /// Metrics without ground truth: counts, timings and flags.
    pub fn report(&self, trajs: &[Trajectory]) -> MetricsReport {
        MetricsReport {
            trajectories: trajs.len(),
            background_labeled: self.final_stage().count_background(),
            clips: self.clips.len(),
            candidates: self.candidates.iter().map(|c| c.motions.len()).sum(),
            edges: self.graph.edge_count(),
            reliable: self.reliable.len(),
            seconds_clips: self.timings.clips,
            seconds_candidates: self.timings.candidates,
            seconds_graph: self.timings.graph,
            seconds_labeling: self.timings.labeling,
            seconds_total: self.timings.total,
            flags: self.flags.iter().map(|f| f.name().to_string()).collect(),
            ..MetricsReport::default()
        }
    }

    /// Report with per-stage precision and recall against `truth`.
    pub fn evaluate(&self, trajs: &[Trajectory], truth: &[(u64, bool)]) -> Result<MetricsReport> {
        let mut report = self.report(trajs);
        for stage in &self.stages {
            let c = evaluate(&stage.labels(trajs), truth)?;
            match stage.stage {
                crate::labeling::Stage::Path => report.set_path(&c),
                crate::labeling::Stage::Global => report.set_global(&c),
                crate::labeling::Stage::Filtered => {}
            }
        }
        let c = evaluate(&self.labels(trajs), truth)?;
        report.set_final(&c);
        Ok(report)
    }
}

/// Input-only diagnostics: static camera and short trajectories.
pub fn input_flags(trajs: &[Trajectory], params: &DiagnosticParams) -> Vec<Flag> {
    let mut flags = Vec::new();
    if trajs.is_empty() {
        return flags;
    }
    let n = trajs.len() as f64;
    let still = trajs
        .iter()
        .filter(|t| {
            t.len() >= params.static_min_len && net_displacement(t) < params.static_motion_px
        })
        .count();
    if still as f64 > params.static_share * n {
        flags.push(Flag::InsufficientCameraMotion);
    }
    let short = trajs.iter().filter(|t| t.len() <= params.short_len).count();
    if short as f64 > params.short_share * n {
        flags.push(Flag::ShortTrajectories);
    }
    flags
}

/// Net displacement between the averaged first and last few points, so
/// tracking noise does not read as motion.
fn net_displacement(t: &Trajectory) -> f64 {
    let pts = t.points();
    let k = (pts.len() / 4).clamp(1, 5);
    let mean = |s: &[nalgebra::Point2<f64>]| {
        s.iter()
            .fold(nalgebra::Vector2::zeros(), |acc, p| acc + p.coords)
            / s.len() as f64
    };
    (mean(&pts[pts.len() - k..]) - mean(&pts[..k])).norm()
}

/// Runs the full pipeline on a thread pool of `config.threads` workers.
pub fn run_pipeline(
    config: &PipelineConfig,
    meta: &VideoMeta,
    trajs: &[Trajectory],
) -> Result<PipelineOutput> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| run_stages(config, meta, trajs))
}

fn run_stages(
    config: &PipelineConfig,
    meta: &VideoMeta,
    trajs: &[Trajectory],
) -> Result<PipelineOutput> {
    let start = Instant::now();
    let mut timings = Timings::default();
    for t in trajs {
        meta.check_trajectory(t)?;
    }
    let mut flags = input_flags(trajs, &config.diagnostics);
    let g = &config.geometry;

    let t0 = Instant::now();
    let clips = generate_clips(trajs, meta, &config.clips)?;
    let spans = SpanTable::new(trajs, &clips)?;
    if clips
        .iter()
        .any(|c| c.forced && c.window.len() >= config.clips.max_len)
    {
        flags.push(Flag::LowTurnover);
    }
    timings.clips = t0.elapsed().as_secs_f64();
    info!("{} clips in {:.2}s", clips.len(), timings.clips);

    let t0 = Instant::now();
    let grid = CellGrid::new(meta, &config.grid);
    let candidates: Vec<ClipCandidates> = clips
        .par_iter()
        .map(|clip| {
            let seed = derive_seed(&[config.seed, clip.index as u64]);
            propose_clip_candidates(clip, trajs, &grid, &config.ransac, g, seed)
        })
        .collect();
    if candidates.iter().any(|c| c.global_fallback) {
        flags.push(Flag::GlobalFallback);
    }
    timings.candidates = t0.elapsed().as_secs_f64();
    info!(
        "{} candidates in {:.2}s",
        candidates.iter().map(|c| c.motions.len()).sum::<usize>(),
        timings.candidates
    );

    let t0 = Instant::now();
    let motions: Vec<Vec<RigidMotion>> = candidates.iter().map(|c| c.motions.clone()).collect();
    let graph = build_graph(&clips, &motions, trajs, &spans, g, &config.graph)?;
    let path = dominant_path(&graph)?;
    if path.bridged {
        flags.push(Flag::Bridged);
    }
    timings.graph = t0.elapsed().as_secs_f64();

    let t0 = Instant::now();
    let mut stages = vec![path_labels(&path, &motions, &spans)];
    let mut reliable = Vec::new();
    match reliable_background(&path, &motions, &spans, trajs, g) {
        Ok(r) => {
            reliable = r;
            match fit_global_motion(&reliable, trajs, meta, g) {
                Ok(global) => {
                    let (_, state) = refine_global(global, trajs, g, config.global_refit_rounds);
                    stages.push(state);
                }
                Err(Error::GlobalModelUnderdetermined { usable, total }) => {
                    warn!("global model underdetermined ({usable}/{total} pairs); keeping path labels");
                    flags.push(Flag::GlobalUnderdetermined);
                }
                Err(e) => return Err(e),
            }
        }
        Err(Error::NoReliableBackground) => {
            warn!("no reliable background trajectories; keeping path labels");
            flags.push(Flag::NoReliableBackground);
        }
        Err(e) => return Err(e),
    }
    let filtered = filter_labels(stages.last().unwrap(), trajs, meta, &config.filter);
    stages.push(filtered);
    timings.labeling = t0.elapsed().as_secs_f64();
    timings.total = start.elapsed().as_secs_f64();

    flags.sort();
    flags.dedup();
    Ok(PipelineOutput {
        clips,
        grid,
        candidates,
        graph,
        path,
        reliable,
        stages,
        flags,
        timings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::scenario;
    use nalgebra::Point2;

    fn small() -> (VideoMeta, Vec<Trajectory>, Vec<(u64, bool)>) {
        let mut spec = scenario("large-foreground").unwrap();
        spec.frames = 30;
        spec.trajectories = 1200;
        let (meta, trajs, gt) = spec.render(3).unwrap();
        (meta, trajs, gt.background_labels())
    }

    #[test]
    fn runs_all_stages_in_order() {
        let (meta, trajs, truth) = small();
        let out = run_pipeline(&PipelineConfig::default(), &meta, &trajs).unwrap();
        let names: Vec<_> = out.stages.iter().map(|s| s.stage.name()).collect();
        assert_eq!(names, ["path", "global", "filtered"]);
        assert_eq!(out.labels(&trajs).len(), trajs.len());
        assert_eq!(out.path.nodes.len(), out.clips.len());
        let report = out.evaluate(&trajs, &truth).unwrap();
        assert!(report.f_score.unwrap() > 0.9, "{report:?}");
        assert_eq!(report.clips, out.clips.len());
        assert!(out.violations().is_empty());
    }

    #[test]
    fn dumps_are_line_oriented() {
        let (meta, trajs, _) = small();
        let out = run_pipeline(&PipelineConfig::default(), &meta, &trajs).unwrap();
        let clips = out.dump_clips();
        assert_eq!(clips.lines().count(), out.clips.len());
        assert!(clips.lines().all(|l| l.split(' ').count() == 4));
        let cands = out.dump_candidates();
        assert_eq!(cands.lines().count(), out.report(&trajs).candidates);
        assert!(cands.lines().all(|l| l.split(' ').count() == 4));
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let (meta, trajs, _) = small();
        let mut cfg = PipelineConfig {
            threads: 1,
            ..PipelineConfig::default()
        };
        let a = run_pipeline(&cfg, &meta, &trajs).unwrap();
        cfg.threads = 3;
        let b = run_pipeline(&cfg, &meta, &trajs).unwrap();
        assert_eq!(a.labels(&trajs), b.labels(&trajs));
        assert_eq!(a.dump_candidates(), b.dump_candidates());
        assert_eq!(a.graph.dump(), b.graph.dump());
    }

    #[test]
    fn static_and_short_inputs_are_flagged() {
        let p = DiagnosticParams::default();
        let still: Vec<Trajectory> = (0..10)
            .map(|i| Trajectory::new(i, 0, vec![Point2::new(5.0, 5.0); 30], None).unwrap())
            .collect();
        assert_eq!(
            input_flags(&still, &p),
            vec![Flag::InsufficientCameraMotion]
        );
        let short: Vec<Trajectory> = (0..10)
            .map(|i| {
                let pts = vec![Point2::new(5.0, 5.0), Point2::new(9.0, 5.0)];
                Trajectory::new(i, 0, pts, None).unwrap()
            })
            .collect();
        assert_eq!(input_flags(&short, &p), vec![Flag::ShortTrajectories]);
        let moving: Vec<Trajectory> = (0..10)
            .map(|i| {
                let pts = (0..30).map(|k| Point2::new(k as f64, 5.0)).collect();
                Trajectory::new(i, 0, pts, None).unwrap()
            })
            .collect();
        assert!(input_flags(&moving, &p).is_empty());
    }

    #[test]
    fn flag_names() {
        assert_eq!(Flag::GlobalFallback.to_string(), "global-fallback");
        assert!(Flag::ShortTrajectories.is_violation());
        assert!(!Flag::Bridged.is_violation());
    }
}
