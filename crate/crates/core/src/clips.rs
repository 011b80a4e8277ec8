//! Partition of the video into overlapping clips by the full-length
//! trajectory ratio rule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::traj::{FrameRange, Trajectory, VideoMeta, Visibility};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClipParams {
    /// Minimum share of full-length trajectories among visible ones.
    pub full_ratio: f64,
    pub min_len: usize,
    pub max_len: usize,
}

impl Default for ClipParams {
    fn default() -> Self {
        ClipParams {
            full_ratio: 0.8,
            min_len: 5,
            max_len: 60,
        }
    }
}

impl ClipParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.full_ratio > 0.0 && self.full_ratio <= 1.0) {
            return Err(Error::Config(format!(
                "clip full_ratio must lie in (0, 1], got {}",
                self.full_ratio
            )));
        }
        if self.min_len < 2 || self.max_len < self.min_len {
            return Err(Error::Config(format!(
                "clip lengths need 2 <= min_len <= max_len, got {} and {}",
                self.min_len, self.max_len
            )));
        }
        Ok(())
    }
}

/// A frame window together with the trajectories visible in it.
///
/// `full` and `partial` hold trajectory indices (positions in the input
/// slice), sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    pub index: usize,
    pub window: FrameRange,
    pub full: Vec<usize>,
    pub partial: Vec<usize>,
    /// The window was cut by a length bound or the video end rather than by
    /// the ratio rule, so the ratio invariant may not hold.
    pub forced: bool,
}

impl Clip {
    pub fn full_ratio(&self) -> f64 {
        let visible = self.full.len() + self.partial.len();
        if visible == 0 {
            1.0
        } else {
            self.full.len() as f64 / visible as f64
        }
    }

    /// Frame where the next clip starts.
    pub fn midpoint(&self) -> usize {
        (self.window.first + self.window.last) / 2
    }

    /// All visible trajectory indices, sorted.
    pub fn visible(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.full.iter().chain(&self.partial).copied().collect();
        v.sort_unstable();
        v
    }
}

/// Frame-indexed trajectory counts for fast ratio evaluation.
struct Census {
    /// `cum_starts[f]` = number of trajectories starting at frames `< f`.
    cum_starts: Vec<usize>,
    /// (start, end) sorted by start.
    spans: Vec<(usize, usize)>,
}

impl Census {
    fn new(trajs: &[Trajectory], frame_count: usize) -> Self {
        let mut cum_starts = vec![0usize; frame_count + 1];
        for t in trajs {
            cum_starts[t.start_frame() + 1] += 1;
        }
        for f in 1..=frame_count {
            cum_starts[f] += cum_starts[f - 1];
        }
        let mut spans: Vec<(usize, usize)> = trajs
            .iter()
            .map(|t| (t.start_frame(), t.end_frame()))
            .collect();
        spans.sort_unstable();
        Census { cum_starts, spans }
    }

    /// Largest `e` in `[s, limit]` such that every window `[s, e']`, `e' <= e`,
    /// satisfies the ratio. The ratio is non-increasing in `e`, so this is the
    /// first failure minus one.
    fn natural_end(&self, s: usize, limit: usize, ratio: f64) -> usize {
        let mut alive_ends: Vec<usize> = self
            .spans
            .iter()
            .take_while(|(start, _)| *start <= s)
            .filter(|(_, end)| *end >= s)
            .map(|(_, end)| *end)
            .collect();
        alive_ends.sort_unstable();
        let alive = alive_ends.len();
        let mut e = s;
        while e < limit {
            let next = e + 1;
            let full = alive - alive_ends.partition_point(|&end| end < next);
            let visible = alive + self.cum_starts[next + 1] - self.cum_starts[s + 1];
            if visible > 0 && (full as f64) < ratio * visible as f64 {
                break;
            }
            e = next;
        }
        e
    }
}

pub fn generate_clips(
    trajs: &[Trajectory],
    meta: &VideoMeta,
    params: &ClipParams,
) -> Result<Vec<Clip>> {
    params.validate()?;
    if meta.frame_count < 2 {
        return Err(Error::Invalid(
            "clip generation needs at least 2 frames".into(),
        ));
    }
    if trajs.is_empty() {
        return Err(Error::Invalid(
            "clip generation needs at least 1 trajectory".into(),
        ));
    }
    for t in trajs {
        meta.check_trajectory(t)?;
    }

    let last_frame = meta.frame_count - 1;
    let census = Census::new(trajs, meta.frame_count);
    let mut clips = Vec::new();
    let mut start = 0usize;
    loop {
        let natural = census.natural_end(start, last_frame, params.full_ratio);
        let end = natural
            .max(start + params.min_len - 1)
            .min(start + params.max_len - 1)
            .min(last_frame);
        let forced = end != natural || end - start + 1 < params.min_len;
        let window = FrameRange {
            first: start,
            last: end,
        };
        clips.push(build_clip(clips.len(), window, forced, trajs));
        if end == last_frame {
            break;
        }
        let mid = (start + end) / 2;
        start = if mid > start { mid } else { start + 1 };
    }
    Ok(clips)
}

fn build_clip(index: usize, window: FrameRange, forced: bool, trajs: &[Trajectory]) -> Clip {
    let mut full = Vec::new();
    let mut partial = Vec::new();
    for (i, t) in trajs.iter().enumerate() {
        match t.visibility(window) {
            Visibility::Full => full.push(i),
            Visibility::Partial => partial.push(i),
            Visibility::Invisible => {}
        }
    }
    Clip {
        index,
        window,
        full,
        partial,
        forced,
    }
}
