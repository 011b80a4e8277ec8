//! Synthetic scenes with ground truth.
//!
//! A pinhole camera moves through a static background point cloud while
//! rigid ellipsoidal bodies move independently. Features are seeded into
//! sparsely populated image bins (as a tracker re-detects features), tracked
//! while visible, and terminated on occlusion, exit, or random loss. An
//! optional image-space "water" band emits short, jittering non-rigid tracks.

use std::f64::consts::TAU;

use nalgebra::{Matrix3, Point2, Point3, Rotation3, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::traj::{Rgb, Trajectory, VideoMeta};

/// Focal length (pixels) shared by all synthetic cameras.
pub const FOCAL: f64 = 500.0;

pub fn intrinsics(width: f64, height: f64) -> Matrix3<f64> {
    Matrix3::new(
        FOCAL,
        0.0,
        width / 2.0,
        0.0,
        FOCAL,
        height / 2.0,
        0.0,
        0.0,
        1.0,
    )
}

pub fn skew(t: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -t.z, t.y, t.z, 0.0, -t.x, -t.y, t.x, 0.0)
}

/// `F` for `x_b = R x_a + t` in camera coordinates, both views sharing `k`.
pub fn fundamental_from_pose(k: &Matrix3<f64>, r: &Matrix3<f64>, t: &Vector3<f64>) -> Matrix3<f64> {
    let k_inv = k.try_inverse().expect("intrinsics are invertible");
    let f = k_inv.transpose() * skew(t) * r * k_inv;
    f / f.norm()
}

fn project(k: &Matrix3<f64>, x: &Point3<f64>) -> Point2<f64> {
    let p = k * x.coords;
    Point2::new(p.x / p.z, p.y / p.z)
}

/// Noise-free correspondences between two calibrated views of a rigid point
/// cloud, with the true fundamental matrix.
#[derive(Debug, Clone)]
pub struct TwoViewConfig {
    pub points_a: Vec<Point2<f64>>,
    pub points_b: Vec<Point2<f64>>,
    pub f_true: Matrix3<f64>,
}

impl TwoViewConfig {
    fn build(rng: &mut ChaCha8Rng, n: usize, r: Matrix3<f64>, t: Vector3<f64>) -> Self {
        let k = intrinsics(640.0, 480.0);
        let mut points_a = Vec::with_capacity(n);
        let mut points_b = Vec::with_capacity(n);
        for _ in 0..n {
            let x = Point3::new(
                rng.random_range(-4.0..4.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(8.0..20.0),
            );
            points_a.push(project(&k, &x));
            points_b.push(project(&k, &Point3::from(r * x.coords + t)));
        }
        TwoViewConfig {
            points_a,
            points_b,
            f_true: fundamental_from_pose(&k, &r, &t),
        }
    }

    /// Random small rotation and a baseline of length 0.5–1.5.
    pub fn random(seed: u64, n: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let axis = Unit::new_normalize(Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ));
        let r = *Rotation3::from_axis_angle(&axis, rng.random_range(-0.15..0.15)).matrix();
        let dir = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-0.5..0.5),
        )
        .normalize();
        let t = dir * rng.random_range(0.5..1.5);
        Self::build(&mut rng, n, r, t)
    }

    /// Pure camera translation along x.
    pub fn translation_x(seed: u64, n: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::build(
            &mut rng,
            n,
            Matrix3::identity(),
            Vector3::new(1.0, 0.0, 0.0),
        )
    }
}

/// Camera centre `start + velocity·f`, yawing about the vertical axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraPath {
    pub start: [f64; 3],
    pub velocity: [f64; 3],
    pub yaw_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundSpec {
    /// Depth range of seeded background points (camera z, world units).
    pub depth: (f64, f64),
    /// Per-frame probability that a background track is lost.
    pub loss_rate: f64,
    pub color: Rgb,
}

/// Rigid ellipsoid. Its centre follows
/// `start + velocity·τ + orbit ⊙ (sin ωτ, cos ωτ, sin ωτ)` and it yaws at
/// `yaw_rate`, where `τ` counts only frames outside `static_frames`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodySpec {
    pub semi_axes: [f64; 3],
    pub start: [f64; 3],
    pub velocity: [f64; 3],
    pub orbit: [f64; 3],
    pub orbit_period: f64,
    pub yaw_rate: f64,
    /// Inclusive frame range during which the body does not move.
    pub static_frames: Option<(usize, usize)>,
    pub loss_rate: f64,
    pub color: Rgb,
}

/// Image band below `top · height` filled with short, jittering tracks that
/// hide everything behind them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaterSpec {
    pub top: f64,
    pub lifetime: (usize, usize),
    pub drift: [f64; 2],
    pub jitter_px: f64,
    pub color: Rgb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub name: String,
    pub width: u32,
    pub height: u32,
    pub frames: usize,
    pub camera: CameraPath,
    pub background: BackgroundSpec,
    pub bodies: Vec<BodySpec>,
    pub water: Option<WaterSpec>,
    pub noise_px: f64,
    /// Approximate number of trajectories to emit.
    pub trajectories: usize,
    /// Rigid tracks shorter than this are dropped.
    pub min_track_len: usize,
    /// Expected live features per square seeding bin; sets the bin size.
    pub features_per_bin: f64,
    /// Failing-assumption scenario: the pipeline is expected to degrade.
    pub expected_fail: bool,
}

/// Ground-truth group of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    Background,
    Body(usize),
    Water,
}

impl Group {
    pub fn is_background(self) -> bool {
        self == Group::Background
    }
}

/// Camera-frame transform `x_c = a x + b` of one rigid group at one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupPose {
    pub a: Matrix3<f64>,
    pub b: Vector3<f64>,
}

impl GroupPose {
    fn apply(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.a * x + self.b
    }

    fn inverse_apply(&self, x_c: &Vector3<f64>) -> Vector3<f64> {
        self.a.transpose() * (x_c - self.b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// `(trajectory id, group)` in emission order.
    pub labels: Vec<(u64, Group)>,
    /// `poses[g][f]`: group `g` (0 = background, `i + 1` = body `i`) at frame `f`.
    pub poses: Vec<Vec<GroupPose>>,
    pub intrinsics: Matrix3<f64>,
}

impl GroundTruth {
    /// True `F(j, k)` of a rigid group; `None` for water or a zero baseline.
    pub fn true_fundamental(&self, group: Group, j: usize, k: usize) -> Option<Matrix3<f64>> {
        let g = match group {
            Group::Background => 0,
            Group::Body(i) => i + 1,
            Group::Water => return None,
        };
        let (pj, pk) = (&self.poses[g][j], &self.poses[g][k]);
        let r = pk.a * pj.a.transpose();
        let t = pk.b - r * pj.b;
        if t.norm() < 1e-12 {
            return None;
        }
        Some(fundamental_from_pose(&self.intrinsics, &r, &t))
    }

    /// Label-file view: `(id, is_background)`.
    pub fn background_labels(&self) -> Vec<(u64, bool)> {
        self.labels
            .iter()
            .map(|&(id, g)| (id, g.is_background()))
            .collect()
    }

    pub fn count(&self, group: Group) -> usize {
        self.labels.iter().filter(|(_, g)| *g == group).count()
    }
}

fn v3(a: [f64; 3]) -> Vector3<f64> {
    Vector3::new(a[0], a[1], a[2])
}

fn yaw(angle: f64) -> Matrix3<f64> {
    *Rotation3::from_axis_angle(&Vector3::y_axis(), angle).matrix()
}

impl BodySpec {
    /// Motion time: frames elapsed outside the static range.
    fn tau(&self, f: usize) -> f64 {
        match self.static_frames {
            Some((a, b)) if f > a => {
                let frozen = f.min(b) - a;
                (f - frozen) as f64
            }
            _ => f as f64,
        }
    }

    fn world_pose(&self, f: usize) -> (Matrix3<f64>, Vector3<f64>) {
        let tau = self.tau(f);
        let w = TAU / self.orbit_period;
        let o = v3(self.orbit);
        let centre = v3(self.start)
            + v3(self.velocity) * tau
            + Vector3::new(
                o.x * (w * tau).sin(),
                o.y * (w * tau).cos(),
                o.z * (w * tau).sin(),
            );
        (yaw(self.yaw_rate * tau), centre)
    }
}

impl SceneSpec {
    pub fn meta(&self) -> Result<VideoMeta> {
        VideoMeta::new(self.width, self.height, self.frames)
    }

    pub fn intrinsics(&self) -> Matrix3<f64> {
        intrinsics(self.width as f64, self.height as f64)
    }

    pub fn validate(&self) -> Result<()> {
        self.meta()?;
        let bad = |m: &str| Err(Error::Invalid(format!("scene {}: {m}", self.name)));
        if !(self.background.depth.0 > 0.0 && self.background.depth.1 >= self.background.depth.0) {
            return bad("background depth range must be positive");
        }
        if self.noise_px < 0.0 || !(self.features_per_bin > 0.0) {
            return bad("noise must be non-negative and bins positive");
        }
        for b in &self.bodies {
            if b.semi_axes.iter().any(|&s| !(s > 0.0)) || !(b.orbit_period > 0.0) {
                return bad("body semi-axes and orbit period must be positive");
            }
        }
        if let Some(w) = &self.water {
            if !(0.0..1.0).contains(&w.top) || w.lifetime.0 < 1 || w.lifetime.1 < w.lifetime.0 {
                return bad("water band needs top in [0,1) and a valid lifetime range");
            }
        }
        Ok(())
    }

    fn camera_pose(&self, f: usize) -> (Matrix3<f64>, Vector3<f64>) {
        let c = v3(self.camera.start) + v3(self.camera.velocity) * f as f64;
        (yaw(self.camera.yaw_rate * f as f64), c)
    }

    /// Per-group, per-frame camera-frame transforms.
    pub fn poses(&self) -> Vec<Vec<GroupPose>> {
        let mut out = Vec::with_capacity(self.bodies.len() + 1);
        out.push(
            (0..self.frames)
                .map(|f| {
                    let (rc, c) = self.camera_pose(f);
                    GroupPose {
                        a: rc.transpose(),
                        b: -(rc.transpose() * c),
                    }
                })
                .collect(),
        );
        for body in &self.bodies {
            out.push(
                (0..self.frames)
                    .map(|f| {
                        let (rc, c) = self.camera_pose(f);
                        let (rb, p) = body.world_pose(f);
                        GroupPose {
                            a: rc.transpose() * rb,
                            b: rc.transpose() * (p - c),
                        }
                    })
                    .collect(),
            );
        }
        out
    }

    /// Share of the image covered by bodies or water at frame `f`, sampled
    /// on a 4-pixel lattice.
    pub fn foreground_fraction(&self, f: usize) -> f64 {
        let world = World::new(self);
        let (mut hit, mut total) = (0usize, 0usize);
        let mut y = 2.0;
        while y < self.height as f64 {
            let mut x = 2.0;
            while x < self.width as f64 {
                total += 1;
                if world.in_water(y) || world.first_body_hit(f, &Point2::new(x, y)).is_some() {
                    hit += 1;
                }
                x += 4.0;
            }
            y += 4.0;
        }
        hit as f64 / total as f64
    }

    /// Renders the scene with roughly `self.trajectories` tracks.
    pub fn render(&self, seed: u64) -> Result<(VideoMeta, Vec<Trajectory>, GroundTruth)> {
        self.validate()?;
        let meta = self.meta()?;
        // the emitted total grows with live density; calibrate a few times
        let target = self.trajectories.max(1) as f64;
        let mut live = target / 3.0;
        let mut tracks = simulate(self, seed, live);
        for _ in 0..3 {
            let got = self.emitted_count(&tracks).max(1) as f64;
            if (got / target - 1.0).abs() < 0.02 {
                break;
            }
            live = (live * target / got).max(1.0);
            tracks = simulate(self, seed, live);
        }
        emit(self, meta, tracks, seed)
    }
}

impl SceneSpec {
    fn emitted_count(&self, raw: &[RawTrack]) -> usize {
        raw.iter()
            .filter(|t| t.group == Group::Water || t.points.len() >= self.min_track_len)
            .count()
    }
}

/// Convenience wrapper over [`SceneSpec::render`].
pub fn render_scene(
    spec: &SceneSpec,
    seed: u64,
) -> Result<(VideoMeta, Vec<Trajectory>, GroundTruth)> {
    spec.render(seed)
}

/// Noise-free two-view oracle: random calibrated pair, `n` correspondences.
pub fn random_two_view(seed: u64, n: usize) -> TwoViewConfig {
    TwoViewConfig::random(seed, n)
}

struct World<'a> {
    spec: &'a SceneSpec,
    poses: Vec<Vec<GroupPose>>,
    k: Matrix3<f64>,
    k_inv: Matrix3<f64>,
}

/// Entry parameter of the ray `t d` (`d.z = 1`, so `t` is depth) into an
/// ellipsoid, if it hits in front of the camera.
fn ray_ellipsoid(d: &Vector3<f64>, pose: &GroupPose, semi: &Vector3<f64>) -> Option<f64> {
    let o_l = -(pose.a.transpose() * pose.b);
    let d_l = pose.a.transpose() * d;
    let o = o_l.component_div(semi);
    let dv = d_l.component_div(semi);
    let a = dv.dot(&dv);
    let b = 2.0 * o.dot(&dv);
    let c = o.dot(&o) - 1.0;
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let t = (-b - disc.sqrt()) / (2.0 * a);
    (t > 1e-3).then_some(t)
}

impl<'a> World<'a> {
    fn new(spec: &'a SceneSpec) -> Self {
        let k = spec.intrinsics();
        World {
            spec,
            poses: spec.poses(),
            k,
            k_inv: k.try_inverse().unwrap(),
        }
    }

    fn ray(&self, p: &Point2<f64>) -> Vector3<f64> {
        self.k_inv * Vector3::new(p.x, p.y, 1.0)
    }

    fn in_water(&self, y: f64) -> bool {
        self.spec
            .water
            .as_ref()
            .is_some_and(|w| y >= w.top * self.spec.height as f64)
    }

    fn first_body_hit(&self, f: usize, p: &Point2<f64>) -> Option<(usize, f64)> {
        let d = self.ray(p);
        let mut best: Option<(usize, f64)> = None;
        for (i, body) in self.spec.bodies.iter().enumerate() {
            if let Some(t) = ray_ellipsoid(&d, &self.poses[i + 1][f], &v3(body.semi_axes)) {
                if best.is_none_or(|(_, bt)| t < bt) {
                    best = Some((i, t));
                }
            }
        }
        best
    }

    /// Noise-free image position of a rigid point at frame `f`, or `None`
    /// when it is behind the camera, outside the image, or occluded.
    fn observe(&self, group: usize, local: &Vector3<f64>, f: usize) -> Option<Point2<f64>> {
        let x_c = self.poses[group][f].apply(local);
        if x_c.z < 0.1 {
            return None;
        }
        let p = project(&self.k, &Point3::from(x_c));
        if !(0.0..=self.spec.width as f64).contains(&p.x)
            || !(0.0..=self.spec.height as f64).contains(&p.y)
            || self.in_water(p.y)
        {
            return None;
        }
        let d = x_c / x_c.z;
        let depth = x_c.z;
        for (i, body) in self.spec.bodies.iter().enumerate() {
            if let Some(t) = ray_ellipsoid(&d, &self.poses[i + 1][f], &v3(body.semi_axes)) {
                let own = group == i + 1;
                // own surface: visible only where the ray enters
                if (own && t < depth * (1.0 - 1e-7)) || (!own && t < depth) {
                    return None;
                }
            }
        }
        Some(p)
    }
}

struct RawTrack {
    group: Group,
    start: usize,
    points: Vec<Point2<f64>>,
    color: Rgb,
}

struct Live {
    group: usize,
    local: Vector3<f64>,
    track: usize,
}

struct WaterLive {
    pos: Point2<f64>,
    remaining: usize,
    track: usize,
}

fn jitter_color(base: Rgb, rng: &mut ChaCha8Rng) -> Rgb {
    let n = Normal::new(0.0, 0.04).unwrap();
    [0, 1, 2].map(|c| (base[c] + n.sample(rng)).clamp(0.0, 1.0))
}

fn simulate(spec: &SceneSpec, seed: u64, live_target: f64) -> Vec<RawTrack> {
    let world = World::new(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (spec.width as f64, spec.height as f64);
    let density = live_target / (w * h);
    let bin = (spec.features_per_bin / density).sqrt().max(4.0);
    let nx = (w / bin).ceil() as usize;
    let ny = (h / bin).ceil() as usize;

    let mut tracks: Vec<RawTrack> = Vec::new();
    let mut live: Vec<Live> = Vec::new();
    let mut water: Vec<WaterLive> = Vec::new();
    let mut occupancy = vec![0usize; nx * ny];
    let jitter = spec
        .water
        .as_ref()
        .map(|wt| Normal::new(0.0, wt.jitter_px.max(1e-12)).unwrap());

    for f in 0..spec.frames {
        // advance existing tracks
        if f > 0 {
            live.retain(|l| {
                let loss = if l.group == 0 {
                    spec.background.loss_rate
                } else {
                    spec.bodies[l.group - 1].loss_rate
                };
                if loss > 0.0 && rng.random::<f64>() < loss {
                    return false;
                }
                match world.observe(l.group, &l.local, f) {
                    Some(p) => {
                        tracks[l.track].points.push(p);
                        true
                    }
                    None => false,
                }
            });
            if let (Some(wt), Some(jit)) = (&spec.water, &jitter) {
                water.retain_mut(|wl| {
                    if wl.remaining == 0 {
                        return false;
                    }
                    wl.remaining -= 1;
                    let p = Point2::new(
                        (wl.pos.x + wt.drift[0] + jit.sample(&mut rng)).clamp(0.0, w),
                        (wl.pos.y + wt.drift[1] + jit.sample(&mut rng)).clamp(0.0, h),
                    );
                    wl.pos = p;
                    tracks[wl.track].points.push(p);
                    true
                });
            }
        }

        // seed features into under-populated bins
        occupancy.fill(0);
        let last_points = live
            .iter()
            .map(|l| l.track)
            .chain(water.iter().map(|wl| wl.track))
            .map(|t| *tracks[t].points.last().unwrap());
        for p in last_points {
            let bx = ((p.x / bin) as usize).min(nx - 1);
            let by = ((p.y / bin) as usize).min(ny - 1);
            occupancy[by * nx + bx] += 1;
        }
        for by in 0..ny {
            for bx in 0..nx {
                let x0 = bx as f64 * bin;
                let y0 = by as f64 * bin;
                let x1 = (x0 + bin).min(w);
                let y1 = (y0 + bin).min(h);
                let want = density * (x1 - x0) * (y1 - y0);
                let deficit = want - occupancy[by * nx + bx] as f64;
                if deficit <= 0.0 {
                    continue;
                }
                let mut n = deficit.floor() as usize;
                if rng.random::<f64>() < deficit.fract() {
                    n += 1;
                }
                for _ in 0..n {
                    let p = Point2::new(rng.random_range(x0..x1), rng.random_range(y0..y1));
                    spawn(
                        spec,
                        &world,
                        f,
                        p,
                        &mut rng,
                        &mut tracks,
                        &mut live,
                        &mut water,
                    );
                }
            }
        }
    }
    tracks
}

#[allow(clippy::too_many_arguments)]
fn spawn(
    spec: &SceneSpec,
    world: &World,
    f: usize,
    p: Point2<f64>,
    rng: &mut ChaCha8Rng,
    tracks: &mut Vec<RawTrack>,
    live: &mut Vec<Live>,
    water: &mut Vec<WaterLive>,
) {
    if let Some(wt) = spec.water.as_ref().filter(|_| world.in_water(p.y)) {
        let life = rng.random_range(wt.lifetime.0..=wt.lifetime.1);
        water.push(WaterLive {
            pos: p,
            remaining: life - 1,
            track: tracks.len(),
        });
        tracks.push(RawTrack {
            group: Group::Water,
            start: f,
            points: vec![p],
            color: jitter_color(wt.color, rng),
        });
        return;
    }
    let d = world.ray(&p);
    let (group, x_c, color) = match world.first_body_hit(f, &p) {
        Some((i, t)) => (i + 1, d * t, spec.bodies[i].color),
        None => {
            let (z0, z1) = spec.background.depth;
            let z = if z1 > z0 {
                rng.random_range(z0..z1)
            } else {
                z0
            };
            (0, d * z, spec.background.color)
        }
    };
    let local = world.poses[group][f].inverse_apply(&x_c);
    // the seed pixel is the noise-free projection; re-observe for occlusion
    let Some(p0) = world.observe(group, &local, f) else {
        return;
    };
    live.push(Live {
        group,
        local,
        track: tracks.len(),
    });
    tracks.push(RawTrack {
        group: if group == 0 {
            Group::Background
        } else {
            Group::Body(group - 1)
        },
        start: f,
        points: vec![p0],
        color: jitter_color(color, rng),
    });
}

fn emit(
    spec: &SceneSpec,
    meta: VideoMeta,
    raw: Vec<RawTrack>,
    seed: u64,
) -> Result<(VideoMeta, Vec<Trajectory>, GroundTruth)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.rotate_left(17) ^ 0x9e37_79b9);
    let noise = Normal::new(0.0, spec.noise_px.max(1e-300)).unwrap();
    let (w, h) = (spec.width as f64, spec.height as f64);
    let mut trajs = Vec::new();
    let mut labels = Vec::new();
    for t in raw {
        if t.group != Group::Water && t.points.len() < spec.min_track_len {
            continue;
        }
        let id = trajs.len() as u64;
        let points: Vec<Point2<f64>> = t
            .points
            .iter()
            .map(|p| {
                if spec.noise_px > 0.0 && t.group != Group::Water {
                    Point2::new(
                        (p.x + noise.sample(&mut rng)).clamp(0.0, w),
                        (p.y + noise.sample(&mut rng)).clamp(0.0, h),
                    )
                } else {
                    *p
                }
            })
            .collect();
        let colors = vec![t.color; points.len()];
        trajs.push(Trajectory::new(id, t.start, points, Some(colors))?);
        labels.push((id, t.group));
    }
    let gt = GroundTruth {
        labels,
        poses: spec.poses(),
        intrinsics: spec.intrinsics(),
    };
    Ok((meta, trajs, gt))
}

pub const SCENARIOS: [&str; 5] = [
    "large-foreground",
    "intermittent",
    "deep-background",
    "near-static-camera",
    "short-lifetime-nonrigid",
];

fn base(name: &str) -> SceneSpec {
    SceneSpec {
        name: name.to_string(),
        width: 640,
        height: 480,
        frames: 100,
        camera: CameraPath {
            start: [0.0, 0.0, 0.0],
            velocity: [0.1, 0.0, 0.0],
            yaw_rate: 0.0,
        },
        background: BackgroundSpec {
            depth: (15.0, 40.0),
            loss_rate: 0.003,
            color: [0.35, 0.55, 0.3],
        },
        bodies: Vec::new(),
        water: None,
        noise_px: 0.3,
        trajectories: 3000,
        min_track_len: 4,
        features_per_bin: 4.0,
        expected_fail: false,
    }
}

/// The named scenario library.
pub fn scenario(name: &str) -> Option<SceneSpec> {
    let mut s = base(name);
    match name {
        "large-foreground" => {
            // a large body travelling with the camera on a small orbit
            s.trajectories = 5000;
            s.bodies.push(BodySpec {
                semi_axes: [3.2, 2.3, 2.0],
                start: [0.0, 0.0, 6.0],
                velocity: s.camera.velocity,
                orbit: [0.45, 0.45, 0.0],
                orbit_period: 30.0,
                yaw_rate: 0.004,
                static_frames: None,
                loss_rate: 0.002,
                color: [0.8, 0.3, 0.25],
            });
        }
        "intermittent" => {
            // a body that keeps pace with the camera but stops mid-video
            s.bodies.push(BodySpec {
                semi_axes: [1.4, 1.0, 1.0],
                start: [2.0, 0.0, 9.0],
                velocity: [0.1, 0.0, 0.0],
                orbit: [0.6, 0.6, 0.0],
                orbit_period: 24.0,
                yaw_rate: 0.0,
                static_frames: Some((33, 66)),
                loss_rate: 0.0,
                color: [0.85, 0.75, 0.2],
            });
        }
        "deep-background" => {
            s.background.depth = (5.0, 100.0);
            s.camera.velocity = [0.08, 0.0, 0.0];
            s.bodies.push(BodySpec {
                semi_axes: [1.0, 0.8, 0.8],
                start: [0.0, 0.5, 8.0],
                velocity: [0.08, 0.0, 0.0],
                orbit: [0.5, 0.5, 0.0],
                orbit_period: 25.0,
                yaw_rate: 0.0,
                static_frames: None,
                loss_rate: 0.003,
                color: [0.8, 0.3, 0.25],
            });
        }
        "near-static-camera" => {
            // the camera barely moves while a long train crosses the view
            s.expected_fail = true;
            s.camera.velocity = [0.002, 0.0, 0.0];
            s.background.loss_rate = 0.005;
            s.bodies.push(BodySpec {
                semi_axes: [14.0, 1.6, 1.5],
                start: [-18.0, 0.6, 11.0],
                velocity: [0.35, 0.0, 0.0],
                orbit: [0.0, 0.0, 0.0],
                orbit_period: 1.0,
                yaw_rate: 0.0,
                static_frames: None,
                loss_rate: 0.005,
                color: [0.5, 0.5, 0.55],
            });
        }
        "short-lifetime-nonrigid" => {
            s.expected_fail = true;
            s.min_track_len = 2;
            s.water = Some(WaterSpec {
                top: 0.55,
                lifetime: (2, 3),
                drift: [0.6, 0.0],
                jitter_px: 0.6,
                color: [0.2, 0.35, 0.7],
            });
        }
        _ => return None,
    }
    Some(s)
}

pub fn scenario_library() -> Vec<SceneSpec> {
    SCENARIOS.iter().map(|n| scenario(n).unwrap()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::geometric_error;

    fn tiny(mut s: SceneSpec, n: usize) -> SceneSpec {
        s.trajectories = n;
        s
    }

    #[test]
    fn static_world_static_camera_is_frozen() {
        let mut s = tiny(base("static"), 300);
        s.camera.velocity = [0.0; 3];
        s.noise_px = 0.0;
        s.background.loss_rate = 0.0;
        let (_, trajs, _) = s.render(3).unwrap();
        assert!(!trajs.is_empty());
        for t in &trajs {
            assert!(t.points().iter().all(|p| p == &t.points()[0]));
        }
    }

    #[test]
    fn translating_camera_epipolar_identity() {
        let mut s = tiny(base("bg-only"), 400);
        s.noise_px = 0.0;
        let (_, trajs, gt) = s.render(5).unwrap();
        let mut checked = 0;
        for t in &trajs {
            for j in t.start_frame()..t.end_frame() {
                for k in j + 1..=(j + 5).min(t.end_frame()) {
                    let f = gt.true_fundamental(Group::Background, j, k).unwrap();
                    let e = geometric_error(t.point_at(j).unwrap(), t.point_at(k).unwrap(), &f);
                    assert!(e < 1e-9, "{e}");
                    checked += 1;
                }
            }
        }
        assert!(checked > 1000);
    }

    #[test]
    fn body_matches_satisfy_their_own_geometry() {
        let mut s = tiny(scenario("large-foreground").unwrap(), 600);
        s.noise_px = 0.0;
        let (_, trajs, gt) = s.render(9).unwrap();
        for (t, (_, g)) in trajs.iter().zip(&gt.labels) {
            for j in t.start_frame()..t.end_frame() {
                let k = j + 1;
                let f = gt.true_fundamental(*g, j, k).unwrap();
                let e = geometric_error(t.point_at(j).unwrap(), t.point_at(k).unwrap(), &f);
                assert!(e < 1e-6, "{g:?} {e}");
            }
        }
    }

    #[test]
    fn render_is_deterministic() {
        let s = tiny(scenario("intermittent").unwrap(), 500);
        let a = s.render(11).unwrap();
        let b = s.render(11).unwrap();
        assert_eq!(a.1, b.1);
        assert_eq!(a.2.labels, b.2.labels);
        let c = s.render(12).unwrap();
        assert_ne!(a.1, c.1);
    }

    #[test]
    fn labels_cover_every_trajectory() {
        for spec in scenario_library() {
            let spec = tiny(spec, 400);
            let (meta, trajs, gt) = spec.render(1).unwrap();
            assert_eq!(gt.labels.len(), trajs.len());
            let total: usize = [Group::Background, Group::Water]
                .into_iter()
                .chain((0..spec.bodies.len()).map(Group::Body))
                .map(|g| gt.count(g))
                .sum();
            assert_eq!(total, trajs.len());
            for (t, (id, _)) in trajs.iter().zip(&gt.labels) {
                assert_eq!(t.id(), *id);
                meta.check_trajectory(t).unwrap();
            }
        }
    }

    #[test]
    fn deep_background_depth_ratio() {
        let s = scenario("deep-background").unwrap();
        assert_eq!(s.background.depth, (5.0, 100.0));
        assert!(s.background.depth.1 / s.background.depth.0 >= 20.0);
    }

    #[test]
    fn unknown_scenario() {
        assert!(scenario("nope").is_none());
        assert_eq!(scenario_library().len(), 5);
    }
}
