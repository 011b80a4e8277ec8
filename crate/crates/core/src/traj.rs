//! Trajectory data model, visibility classification and sub-trajectory
//! value accounting.

use nalgebra::Point2;

use crate::clips::Clip;
use crate::error::{Error, Result};

/// RGB triple with channels in `[0, 1]`.
pub type Rgb = [f64; 3];

/// Inclusive frame window `[first, last]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FrameRange {
    pub first: usize,
    pub last: usize,
}

impl FrameRange {
    pub fn new(first: usize, last: usize) -> Result<Self> {
        if last < first {
            return Err(Error::Invalid(format!(
                "empty frame range [{first}, {last}]"
            )));
        }
        Ok(FrameRange { first, last })
    }

    pub fn len(&self) -> usize {
        self.last - self.first + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, frame: usize) -> bool {
        self.first <= frame && frame <= self.last
    }

    pub fn overlaps(&self, other: &FrameRange) -> bool {
        self.first <= other.last && other.first <= self.last
    }

    pub fn intersect(&self, other: &FrameRange) -> Option<FrameRange> {
        let first = self.first.max(other.first);
        let last = self.last.min(other.last);
        (first <= last).then_some(FrameRange { first, last })
    }

    pub fn frames(&self) -> std::ops::RangeInclusive<usize> {
        self.first..=self.last
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct VideoMeta {
    pub frame_width: u32,
    pub frame_height: u32,
    pub frame_count: usize,
}

impl VideoMeta {
    pub fn new(frame_width: u32, frame_height: u32, frame_count: usize) -> Result<Self> {
        if frame_width == 0 || frame_height == 0 || frame_count == 0 {
            return Err(Error::Invalid(format!(
                "video dimensions must be positive, got {frame_width}x{frame_height} with {frame_count} frames"
            )));
        }
        Ok(VideoMeta {
            frame_width,
            frame_height,
            frame_count,
        })
    }

    pub fn width(&self) -> f64 {
        self.frame_width as f64
    }

    pub fn height(&self) -> f64 {
        self.frame_height as f64
    }

    pub fn full_range(&self) -> FrameRange {
        FrameRange {
            first: 0,
            last: self.frame_count - 1,
        }
    }

    pub fn contains_point(&self, p: &Point2<f64>) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x <= self.width() && p.y <= self.height()
    }

    pub fn check_window(&self, window: FrameRange) -> Result<()> {
        if window.last >= self.frame_count {
            return Err(Error::Bounds {
                what: "frame window",
                detail: format!(
                    "[{}, {}] exceeds video of {} frames",
                    window.first, window.last, self.frame_count
                ),
            });
        }
        Ok(())
    }

    /// Checks that a trajectory fits inside the video in time and space.
    pub fn check_trajectory(&self, traj: &Trajectory) -> Result<()> {
        if traj.end_frame() >= self.frame_count {
            return Err(Error::Bounds {
                what: "trajectory",
                detail: format!(
                    "id {} ends at frame {} but video has {} frames",
                    traj.id(),
                    traj.end_frame(),
                    self.frame_count
                ),
            });
        }
        if let Some(p) = traj.points().iter().find(|p| !self.contains_point(p)) {
            return Err(Error::Bounds {
                what: "trajectory point",
                detail: format!(
                    "id {} has point ({}, {}) outside {}x{}",
                    traj.id(),
                    p.x,
                    p.y,
                    self.frame_width,
                    self.frame_height
                ),
            });
        }
        Ok(())
    }
}

/// A tracked feature: contiguous per-frame positions starting at
/// `start_frame`, with optional per-point colors.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    id: u64,
    start_frame: usize,
    points: Vec<Point2<f64>>,
    colors: Option<Vec<Rgb>>,
}

impl Trajectory {
    pub fn new(
        id: u64,
        start_frame: usize,
        points: Vec<Point2<f64>>,
        colors: Option<Vec<Rgb>>,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Invalid(format!("trajectory {id} has no points")));
        }
        if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::Invalid(format!(
                "trajectory {id} has a non-finite point"
            )));
        }
        if let Some(c) = &colors {
            if c.len() != points.len() {
                return Err(Error::Invalid(format!(
                    "trajectory {id} has {} colors for {} points",
                    c.len(),
                    points.len()
                )));
            }
            if c.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Invalid(format!(
                    "trajectory {id} has a color channel outside [0, 1]"
                )));
            }
        }
        Ok(Trajectory {
            id,
            start_frame,
            points,
            colors,
        })
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn start_frame(&self) -> usize {
        self.start_frame
    }

    pub fn end_frame(&self) -> usize {
        self.start_frame + self.points.len() - 1
    }

    pub fn span(&self) -> FrameRange {
        FrameRange {
            first: self.start_frame,
            last: self.end_frame(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn points(&self) -> &[Point2<f64>] {
        &self.points
    }

    pub fn colors(&self) -> Option<&[Rgb]> {
        self.colors.as_deref()
    }

    #[inline]
    pub fn is_visible(&self, frame: usize) -> bool {
        frame >= self.start_frame && frame <= self.end_frame()
    }

    #[inline]
    pub fn point_at(&self, frame: usize) -> Option<&Point2<f64>> {
        frame
            .checked_sub(self.start_frame)
            .and_then(|i| self.points.get(i))
    }

    pub fn color_at(&self, frame: usize) -> Option<&Rgb> {
        let i = frame.checked_sub(self.start_frame)?;
        self.colors.as_ref()?.get(i)
    }

    /// Visibility relative to `window` without bounds checking.
    #[inline]
    pub fn visibility(&self, window: FrameRange) -> Visibility {
        if self.start_frame <= window.first && self.end_frame() >= window.last {
            Visibility::Full
        } else if self.span().overlaps(&window) {
            Visibility::Partial
        } else {
            Visibility::Invisible
        }
    }
}

/// Visibility of a trajectory within a frame window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Visibility {
    /// Visible at every frame of the window.
    Full,
    /// Visible at some but not all frames.
    Partial,
    Invisible,
}

impl Visibility {
    pub fn indicator(self) -> i8 {
        match self {
            Visibility::Full => 1,
            Visibility::Partial => 0,
            Visibility::Invisible => -1,
        }
    }
}

pub fn classify_visibility(
    traj: &Trajectory,
    window: FrameRange,
    meta: &VideoMeta,
) -> Result<Visibility> {
    meta.check_window(window)?;
    Ok(traj.visibility(window))
}

/// Credit of one trajectory inside one clip: `1/N` where `N` is the number
/// of clips the trajectory touches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubTrajectoryValue {
    pub trajectory_id: u64,
    pub clip_index: usize,
    /// Number of clips spanned by the trajectory.
    pub span_count: u32,
}

impl SubTrajectoryValue {
    pub fn value(&self) -> f64 {
        1.0 / self.span_count as f64
    }
}

pub fn sub_trajectory_values(
    trajs: &[Trajectory],
    clips: &[Clip],
) -> Result<Vec<SubTrajectoryValue>> {
    let table = SpanTable::new(trajs, clips)?;
    let mut out = Vec::new();
    for (t, traj) in trajs.iter().enumerate() {
        for c in table.clips_of(t) {
            out.push(SubTrajectoryValue {
                trajectory_id: traj.id(),
                clip_index: c,
                span_count: table.span_count(t),
            });
        }
    }
    Ok(out)
}

/// Per-trajectory clip spans, indexed by trajectory position.
///
/// Clips are ordered and their windows are increasing, so the clips a
/// trajectory touches form a contiguous index range.
#[derive(Debug, Clone)]
pub struct SpanTable {
    spans: Vec<(u32, u32)>,
}

impl SpanTable {
    pub fn new(trajs: &[Trajectory], clips: &[Clip]) -> Result<Self> {
        let windows: Vec<FrameRange> = clips.iter().map(|c| c.window).collect();
        let mut spans = Vec::with_capacity(trajs.len());
        for traj in trajs {
            let span = traj.span();
            // first clip whose window ends at or after the trajectory start
            let lo = windows.partition_point(|w| w.last < span.first);
            let hi = windows.partition_point(|w| w.first <= span.last);
            if lo >= hi {
                return Err(Error::Consistency(format!(
                    "trajectory {} (frames {}..={}) overlaps no clip; clips must cover the video",
                    traj.id(),
                    span.first,
                    span.last
                )));
            }
            spans.push((lo as u32, hi as u32));
        }
        Ok(SpanTable { spans })
    }

    pub fn clips_of(&self, traj: usize) -> std::ops::Range<usize> {
        let (lo, hi) = self.spans[traj];
        lo as usize..hi as usize
    }

    pub fn span_count(&self, traj: usize) -> u32 {
        let (lo, hi) = self.spans[traj];
        hi - lo
    }

    /// Sub-trajectory value `1/N`.
    #[inline]
    pub fn value(&self, traj: usize) -> f64 {
        1.0 / self.span_count(traj) as f64
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }
}
