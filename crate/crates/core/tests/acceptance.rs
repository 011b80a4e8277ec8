//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Runs as a plain binary so the lines always show.

use std::collections::{HashMap, HashSet};
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{Matrix3, Point2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rigidpath::clips::{generate_clips, ClipParams};
use rigidpath::geometry::{
    enforce_rank_two, estimate_fundamental, fit_pairwise, geometric_error, is_member, Degeneracy,
    GeometryParams,
};
use rigidpath::graph::{brute_force_path, dominant_path, Edge, GraphNode, MotionGraph};
use rigidpath::labeling::{filter_labels, FilterParams, LabelState, Stage};
use rigidpath::metrics::Confusion;
use rigidpath::synth::{random_two_view, scenario, GroundTruth, Group, SceneSpec};
use rigidpath::traj::sub_trajectory_values;
use rigidpath::{run_pipeline, FrameRange, PipelineConfig, PipelineOutput, Trajectory, VideoMeta};

const SEED: u64 = 1;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

struct Scene {
    meta: VideoMeta,
    trajs: Vec<Trajectory>,
    gt: GroundTruth,
    out: PipelineOutput,
    confusion: Confusion,
}

impl Scene {
    fn run(spec: &SceneSpec, threads: usize) -> Scene {
        let (meta, trajs, gt) = spec.render(SEED).expect("scenario renders");
        let cfg = PipelineConfig {
            threads,
            ..PipelineConfig::default()
        };
        let out = run_pipeline(&cfg, &meta, &trajs).expect("pipeline runs");
        let truth = gt.background_labels();
        let confusion = rigidpath::metrics::evaluate(&out.labels(&trajs), &truth).unwrap();
        Scene {
            meta,
            trajs,
            gt,
            out,
            confusion,
        }
    }

    fn group_of(&self) -> HashMap<u64, Group> {
        self.gt.labels.iter().copied().collect()
    }
}

fn random_graph(rng: &mut ChaCha8Rng) -> MotionGraph {
    let clips = rng.random_range(1..=6);
    let layers: Vec<Vec<GraphNode>> = (0..clips)
        .map(|_| {
            (0..rng.random_range(1..=4))
                .map(|_| {
                    GraphNode::with_omega(rng.random_range(0.0..10.0), rng.random_range(1..50))
                })
                .collect()
        })
        .collect();
    let edges = (0..clips - 1)
        .map(|q| {
            let mut es = Vec::new();
            for from in 0..layers[q].len() {
                for to in 0..layers[q + 1].len() {
                    if rng.random_bool(0.6) {
                        let weight = rng.random_range(0.0..10.0);
                        es.push(Edge {
                            from,
                            to,
                            weight,
                            bridge: false,
                        });
                    }
                }
            }
            es
        })
        .collect();
    let mut g = MotionGraph { layers, edges };
    g.bridge_disconnected().unwrap();
    g
}

fn dp_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut mismatches = 0;
    for _ in 0..200 {
        let g = random_graph(&mut rng);
        let dp = dominant_path(&g).unwrap();
        let bf = brute_force_path(&g).unwrap();
        if dp.nodes != bf.nodes || (dp.score - bf.score).abs() > 1e-9 {
            mismatches += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        mismatches == 0 && secs < 5.0,
        format!("200 graphs, {mismatches} mismatches, {secs:.3}s"),
    )
}

fn epipolar_oracle() -> Outcome {
    let g = GeometryParams::default();
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let cfg = random_two_view(seed, 50);
        let f = estimate_fundamental(&cfg.points_a, &cfg.points_b, &g).unwrap();
        for (a, b) in cfg.points_a.iter().zip(&cfg.points_b) {
            worst = worst.max(geometric_error(a, b, &f));
        }
    }
    let p = |x: f64, y: f64| Point2::new(x, y);
    let seven: Vec<_> = (0..7).map(|i| p(i as f64, (i * i) as f64)).collect();
    let same = vec![p(3.0, 4.0); 12];
    let line: Vec<_> = (0..12).map(|i| p(i as f64, 2.0 * i as f64 + 1.0)).collect();
    let degenerate = [
        matches!(
            estimate_fundamental(&seven, &seven, &g),
            Err(Degeneracy::TooFewPoints(_))
        ),
        matches!(
            estimate_fundamental(&same, &same, &g),
            Err(Degeneracy::Coincident)
        ),
        matches!(
            estimate_fundamental(&line, &line, &g),
            Err(Degeneracy::Collinear(_))
        ),
    ];
    let raised = degenerate.iter().filter(|&&d| d).count();
    outcome(
        worst < 1e-6 && raised == degenerate.len(),
        format!("100 configs, max error {worst:.2e}px; {raised}/3 degenerate fixtures raise"),
    )
}

fn large_foreground(s: &Scene, spec: &SceneSpec) -> Outcome {
    let min_fg = (0..spec.frames)
        .map(|f| spec.foreground_fraction(f))
        .fold(1.0, f64::min);
    let bg_share = s.gt.count(Group::Background) as f64 / s.trajs.len() as f64;
    let (p, r) = (s.confusion.precision(), s.confusion.recall());
    let secs = s.out.timings.total;
    outcome(
        min_fg > 0.5 && bg_share > 0.5 && p >= 0.95 && r >= 0.95 && secs < 60.0,
        format!(
            "{} trajectories, min foreground area {min_fg:.2}, background share {bg_share:.2}: P={p:.4} R={r:.4} in {secs:.1}s",
            s.trajs.len()
        ),
    )
}

fn intermittent(s: &Scene) -> Outcome {
    let groups = s.group_of();
    let body: Vec<usize> = (0..s.trajs.len())
        .filter(|&i| matches!(groups[&s.trajs[i].id()], Group::Body(_)))
        .collect();
    let fin = &s.out.final_stage().background;
    let leaked = body.iter().filter(|&&i| fin[i]).count();
    let leak = leaked as f64 / body.len() as f64;
    let wrong_clips: Vec<usize> = s
        .out
        .clips
        .iter()
        .enumerate()
        .filter(|(c, clip)| {
            let node = &s.out.candidates[*c].motions[s.out.path.nodes[*c]];
            let visible: Vec<usize> = clip
                .visible()
                .into_iter()
                .filter(|t| body.binary_search(t).is_ok())
                .collect();
            let inside = visible.iter().filter(|&&t| node.contains(t)).count();
            !visible.is_empty() && inside * 2 > visible.len()
        })
        .map(|(c, _)| c)
        .collect();
    outcome(
        leak <= 0.02 && !wrong_clips.is_empty(),
        format!(
            "final leakage {leaked}/{} = {:.2}%; body inside the local background candidate in clips {wrong_clips:?}",
            body.len(),
            100.0 * leak
        ),
    )
}

fn deep_background(s: &Scene, spec: &SceneSpec) -> Outcome {
    let ratio = spec.background.depth.1 / spec.background.depth.0;
    let global = s
        .out
        .stages
        .iter()
        .find(|st| st.stage == Stage::Global)
        .map(|st| {
            rigidpath::metrics::evaluate(&st.labels(&s.trajs), &s.gt.background_labels()).unwrap()
        });
    let cover = global.map(|c| c.recall()).unwrap_or(0.0);
    outcome(
        ratio >= 20.0 && cover >= 0.99 && s.confusion.recall() >= 0.99,
        format!(
            "depth ratio {ratio:.0}x; one background motion covers {:.2}% of background (final {:.2}%)",
            100.0 * cover,
            100.0 * s.confusion.recall()
        ),
    )
}

fn expected_fail(reference_f: f64) -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for name in ["near-static-camera", "short-lifetime-nonrigid"] {
        let spec = scenario(name).unwrap();
        let s = Scene::run(&spec, 0);
        let f = s.confusion.f_score();
        let flags: Vec<_> = s.out.violations().iter().map(|f| f.name()).collect();
        pass &= spec.expected_fail && f < 0.95 && f < reference_f && !flags.is_empty();
        parts.push(format!("{name}: F={f:.3} flags {flags:?}"));
    }
    outcome(pass, parts.join("; "))
}

fn performance() -> Outcome {
    let mut spec = scenario("large-foreground").unwrap();
    spec.trajectories = 50_000;
    let s = Scene::run(&spec, 0);
    let secs = s.out.timings.total;
    outcome(
        secs < 300.0,
        format!(
            "{} trajectories over {} frames in {secs:.1}s on {} thread(s); F={:.4}",
            s.trajs.len(),
            s.meta.frame_count,
            rayon::current_num_threads(),
            s.confusion.f_score()
        ),
    )
}

fn determinism(reference: &Scene, spec: &SceneSpec) -> Outcome {
    let runs: Vec<Scene> = [1, 2, 1].iter().map(|&t| Scene::run(spec, t)).collect();
    let key = |s: &Scene| {
        (
            s.out.labels(&s.trajs),
            s.out.dump_candidates(),
            s.out.graph.dump(),
            s.out.path.nodes.clone(),
        )
    };
    let want = key(reference);
    let same = runs.iter().all(|s| key(s) == want);
    outcome(same, "large-foreground with default, 1, 2 and 1 threads: labels, candidates, graph and path identical".into())
}

fn invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut failures = Vec::new();

    // sub-trajectory values sum to one per trajectory
    let mut spec = scenario("intermittent").unwrap();
    spec.frames = 40;
    spec.trajectories = 1500;
    let (meta, trajs, _) = spec.render(SEED).unwrap();
    let clips = generate_clips(&trajs, &meta, &ClipParams::default()).unwrap();
    let values = sub_trajectory_values(&trajs, &clips).unwrap();
    let mut sums: HashMap<u64, f64> = HashMap::new();
    for v in &values {
        *sums.entry(v.trajectory_id).or_default() += v.value();
    }
    if sums.len() != trajs.len() || sums.values().any(|s| (s - 1.0).abs() > 1e-9) {
        failures.push("value conservation");
    }

    // rank-2 and scale invariance of the geometric error
    let g = GeometryParams::default();
    for seed in 0..200 {
        let m = Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let r = enforce_rank_two(&m);
        if r.determinant().abs() > 1e-12 * m.norm().powi(3).max(1.0)
            || r.svd(false, false).rank(1e-9) != 2
        {
            failures.push("rank-2");
            break;
        }
        let cfg = random_two_view(1000 + seed, 20);
        let f = cfg.f_true;
        let k = rng.random_range(1e-3..1e3) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let a = geometric_error(&cfg.points_a[0], &cfg.points_b[0], &f);
        let b = geometric_error(&cfg.points_a[0], &cfg.points_b[0], &(f * k));
        if (a - b).abs() > 1e-9 * (1.0 + a.abs()) {
            failures.push("scale invariance");
            break;
        }
    }

    // membership monotone in the inlier threshold
    let window = FrameRange::new(0, 9).unwrap();
    let (_, bg_trajs): (Vec<_>, Vec<_>) = (0..trajs.len()).partition(|&i| trajs[i].len() < 3);
    let (model, _) = fit_pairwise(&trajs, &bg_trajs[..bg_trajs.len().min(300)], window, &g);
    'outer: for t in &trajs {
        let mut was = false;
        for eps in [0.25, 0.5, 1.0, 1.5, 3.0, 6.0, 12.0] {
            let p = GeometryParams {
                inlier_px: eps,
                ..g
            };
            let now = is_member(t, &model, &p);
            if was && !now {
                failures.push("membership monotonicity");
                break 'outer;
            }
            was = now;
        }
    }

    // filter locality: flipping a far trajectory changes nothing
    let fp = FilterParams::default();
    let base: Vec<bool> = (0..trajs.len()).map(|_| rng.random_bool(0.5)).collect();
    let state = LabelState {
        stage: Stage::Global,
        background: base.clone(),
    };
    let before = filter_labels(&state, &trajs, &meta, &fp);
    let probe = 0;
    let radius = fp.neighbor_frac * meta.width();
    let far = (0..trajs.len()).find(|&j| {
        let (a, b) = (&trajs[probe], &trajs[j]);
        let shared = a.span().intersect(&b.span());
        shared.is_none()
            || shared
                .unwrap()
                .frames()
                .all(|f| (a.point_at(f).unwrap() - b.point_at(f).unwrap()).norm() > 3.0 * radius)
    });
    if let Some(j) = far {
        let mut flipped = base;
        flipped[j] = !flipped[j];
        let after = filter_labels(
            &LabelState {
                stage: Stage::Global,
                background: flipped,
            },
            &trajs,
            &meta,
            &fp,
        );
        if after.background[probe] != before.background[probe] {
            failures.push("filter locality");
        }
    }

    // metric identities
    for _ in 0..1000 {
        let c = Confusion {
            tp: rng.random_range(0..100),
            fp: rng.random_range(0..100),
            fn_: rng.random_range(0..100),
            tn: 0,
        };
        let (p, r, f) = (c.precision(), c.recall(), c.f_score());
        let want = if p + r > 0.0 {
            2.0 * p * r / (p + r)
        } else {
            0.0
        };
        if !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&r) || (f - want).abs() > 1e-12 {
            failures.push("metric identities");
            break;
        }
    }

    let unique: HashSet<_> = failures.iter().collect();
    outcome(
        unique.is_empty(),
        if unique.is_empty() {
            "value conservation, rank-2 F, scale-invariant error, membership monotonicity, filter locality, metric identities".into()
        } else {
            format!("failed: {unique:?}")
        },
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut report = |name: &'static str, o: Outcome| {
        println!(
            "[{}] {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push((name, o));
    };

    report("dp-oracle", dp_oracle());
    report("epipolar-oracle", epipolar_oracle());

    let lf_spec = scenario("large-foreground").unwrap();
    let lf = Scene::run(&lf_spec, 0);
    report("large-foreground", large_foreground(&lf, &lf_spec));

    let im = Scene::run(&scenario("intermittent").unwrap(), 0);
    report("intermittent", intermittent(&im));

    let db_spec = scenario("deep-background").unwrap();
    let db = Scene::run(&db_spec, 0);
    report("deep-background", deep_background(&db, &db_spec));

    report("expected-fail", expected_fail(lf.confusion.f_score()));
    report("performance-50k", performance());
    report("determinism", determinism(&lf, &lf_spec));
    report("invariants", invariants());

    let failed = results.iter().filter(|(_, o)| !o.pass).count();
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
