//! Line-oriented trajectory and label files.
//!
//! Trajectory file:
//!
//! ```text
//! TRAJ1 <frame_width> <frame_height> <frame_count> [RGB]
//! <id> <start_frame> <n> x0 y0 [r0 g0 b0] x1 y1 [r1 g1 b1] ...
//! ```
//!
//! Label file: one `<id> <0|1>` line per trajectory, 1 meaning background.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::Point2;

use crate::error::{Error, Result};
use crate::traj::{Trajectory, VideoMeta};

const MAGIC: &str = "TRAJ1";
const RGB_TAG: &str = "RGB";

pub fn read_trajectories(path: impl AsRef<Path>) -> Result<(VideoMeta, Vec<Trajectory>)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trajectories(&text, path)
}

pub fn write_trajectories(
    path: impl AsRef<Path>,
    meta: &VideoMeta,
    trajs: &[Trajectory],
) -> Result<()> {
    let path = path.as_ref();
    let text = format_trajectories(meta, trajs)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

struct LineParser<'a> {
    path: &'a Path,
    line: usize,
    tokens: std::str::SplitWhitespace<'a>,
}

impl<'a> LineParser<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            line: self.line,
            message: message.into(),
        }
    }

    fn next<T: FromStr>(&mut self, what: &str) -> Result<T> {
        let tok = self
            .tokens
            .next()
            .ok_or_else(|| self.err(format!("missing {what}")))?;
        tok.parse()
            .map_err(|_| self.err(format!("invalid {what} `{tok}`")))
    }

    fn next_f64(&mut self, what: &str) -> Result<f64> {
        let v: f64 = self.next(what)?;
        if !v.is_finite() {
            return Err(self.err(format!("non-finite {what}")));
        }
        Ok(v)
    }

    fn finish(mut self, what: &str) -> Result<()> {
        match self.tokens.next() {
            None => Ok(()),
            Some(tok) => Err(self.err(format!("unexpected token `{tok}` after {what}"))),
        }
    }
}

pub fn parse_trajectories(text: &str, path: &Path) -> Result<(VideoMeta, Vec<Trajectory>)> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());

    let (header_no, header) = lines.next().ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        message: "empty file, expected `TRAJ1` header".into(),
    })?;
    let mut p = LineParser {
        path,
        line: header_no,
        tokens: header.split_whitespace(),
    };
    let magic: String = p.next("magic")?;
    if magic != MAGIC {
        return Err(p.err(format!("expected `{MAGIC}` header, found `{magic}`")));
    }
    let width: u32 = p.next("frame width")?;
    let height: u32 = p.next("frame height")?;
    let count: usize = p.next("frame count")?;
    let has_rgb = match p.tokens.next() {
        None => false,
        Some(RGB_TAG) => true,
        Some(tok) => return Err(p.err(format!("unexpected header token `{tok}`"))),
    };
    p.finish("header")?;
    let meta = VideoMeta::new(width, height, count).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: header_no,
        message: e.to_string(),
    })?;

    let mut seen = HashSet::new();
    let mut trajs = Vec::new();
    for (line_no, line) in lines {
        let mut p = LineParser {
            path,
            line: line_no,
            tokens: line.split_whitespace(),
        };
        let id: u64 = p.next("trajectory id")?;
        let start: usize = p.next("start frame")?;
        let n: usize = p.next("point count")?;
        if n == 0 {
            return Err(p.err("trajectory with zero points"));
        }
        if start + n > meta.frame_count {
            return Err(p.err(format!(
                "frames {}..={} exceed frame count {}",
                start,
                start + n - 1,
                meta.frame_count
            )));
        }
        let mut points = Vec::with_capacity(n);
        let mut colors = has_rgb.then(|| Vec::with_capacity(n));
        for i in 0..n {
            let x = p.next_f64("x coordinate").map_err(|_| {
                p.err(format!(
                    "declared {n} points but point {i} is missing or invalid"
                ))
            })?;
            let y = p.next_f64("y coordinate")?;
            let pt = Point2::new(x, y);
            if !meta.contains_point(&pt) {
                return Err(p.err(format!("point ({x}, {y}) outside the frame")));
            }
            points.push(pt);
            if let Some(c) = colors.as_mut() {
                let r = p.next_f64("red channel")?;
                let g = p.next_f64("green channel")?;
                let b = p.next_f64("blue channel")?;
                c.push([r, g, b]);
            }
        }
        if p.tokens.clone().next().is_some() {
            return Err(p.err(format!("declared {n} points but more values follow")));
        }
        if !seen.insert(id) {
            return Err(p.err(format!("duplicate trajectory id {id}")));
        }
        let traj = Trajectory::new(id, start, points, colors).map_err(|e| p.err(e.to_string()))?;
        trajs.push(traj);
    }
    Ok((meta, trajs))
}

pub fn format_trajectories(meta: &VideoMeta, trajs: &[Trajectory]) -> Result<String> {
    let colored = trajs.iter().filter(|t| t.colors().is_some()).count();
    if colored != 0 && colored != trajs.len() {
        return Err(Error::Invalid(
            "either all trajectories carry colors or none do".into(),
        ));
    }
    let has_rgb = colored > 0;
    let mut out = String::new();
    write!(
        out,
        "{MAGIC} {} {} {}",
        meta.frame_width, meta.frame_height, meta.frame_count
    )
    .unwrap();
    if has_rgb {
        write!(out, " {RGB_TAG}").unwrap();
    }
    out.push('\n');
    for t in trajs {
        write!(out, "{} {} {}", t.id(), t.start_frame(), t.len()).unwrap();
        for (i, p) in t.points().iter().enumerate() {
            write!(out, " {} {}", p.x, p.y).unwrap();
            if let Some(c) = t.colors() {
                let [r, g, b] = c[i];
                write!(out, " {r} {g} {b}").unwrap();
            }
        }
        out.push('\n');
    }
    Ok(out)
}

/// `(trajectory id, is_background)` pairs in file order.
pub type Labels = Vec<(u64, bool)>;

pub fn write_labels(path: impl AsRef<Path>, labels: &[(u64, bool)]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_labels(labels)).map_err(|e| Error::io(path, e))
}

pub fn format_labels(labels: &[(u64, bool)]) -> String {
    let mut out = String::with_capacity(labels.len() * 8);
    for (id, bg) in labels {
        writeln!(out, "{id} {}", u8::from(*bg)).unwrap();
    }
    out
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<Labels> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&text, path)
}

pub fn parse_labels(text: &str, path: &Path) -> Result<Labels> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut p = LineParser {
            path,
            line: i + 1,
            tokens: line.split_whitespace(),
        };
        let id: u64 = p.next("trajectory id")?;
        let flag: u8 = p.next("label")?;
        let bg = match flag {
            0 => false,
            1 => true,
            _ => return Err(p.err(format!("label must be 0 or 1, got {flag}"))),
        };
        if !seen.insert(id) {
            return Err(p.err(format!("duplicate trajectory id {id}")));
        }
        p.finish("label")?;
        out.push((id, bg));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(text: &str) -> Result<(VideoMeta, Vec<Trajectory>)> {
        parse_trajectories(text, Path::new("test.traj"))
    }

    fn line_of(err: Error) -> usize {
        match err {
            Error::Parse { line, .. } => line,
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_file() {
        let (meta, trajs) = parse("TRAJ1 640 480 10\n3 4 2 1.5 2.5 3 4\n").unwrap();
        assert_eq!(meta.frame_count, 10);
        assert_eq!(trajs.len(), 1);
        assert_eq!(trajs[0].len(), 2);
        assert_eq!(trajs[0].end_frame(), 5);
        assert!(trajs[0].colors().is_none());
    }

    #[test]
    fn colored_file() {
        let (_, trajs) =
            parse("TRAJ1 640 480 10 RGB\n1 0 2 1 2 0.1 0.2 0.3 3 4 0.4 0.5 0.6\n").unwrap();
        assert_eq!(trajs[0].color_at(1), Some(&[0.4, 0.5, 0.6]));
    }

    #[test]
    fn point_count_mismatch_names_line() {
        let err = parse("TRAJ1 640 480 10\n1 0 2 1 2 3 4\n2 0 3 1 2 3 4\n").unwrap_err();
        assert_eq!(line_of(err), 3);
        let err = parse("TRAJ1 640 480 10\n1 0 1 1 2 3 4\n").unwrap_err();
        assert_eq!(line_of(err), 2);
    }

    #[test]
    fn malformed_headers() {
        assert_eq!(line_of(parse("").unwrap_err()), 1);
        assert_eq!(line_of(parse("TRAJ2 1 1 1\n").unwrap_err()), 1);
        assert_eq!(line_of(parse("TRAJ1 640 480\n").unwrap_err()), 1);
        assert_eq!(line_of(parse("TRAJ1 640 480 0\n").unwrap_err()), 1);
        assert_eq!(line_of(parse("TRAJ1 640 480 5 RGBA\n").unwrap_err()), 1);
    }

    #[test]
    fn frame_range_and_bounds_violations() {
        // ends past the last frame
        assert_eq!(
            line_of(parse("TRAJ1 64 48 3\n1 2 2 1 1 2 2\n").unwrap_err()),
            2
        );
        // outside the image
        assert_eq!(
            line_of(parse("TRAJ1 64 48 3\n1 0 1 65 1\n").unwrap_err()),
            2
        );
        // duplicate id
        assert_eq!(
            line_of(parse("TRAJ1 64 48 3\n1 0 1 1 1\n1 0 1 2 2\n").unwrap_err()),
            3
        );
    }

    #[test]
    fn labels_roundtrip_and_errors() {
        let labels = vec![(5, true), (2, false), (9, true)];
        let text = format_labels(&labels);
        assert_eq!(text, "5 1\n2 0\n9 1\n");
        assert_eq!(parse_labels(&text, Path::new("l")).unwrap(), labels);
        assert!(parse_labels("1 2\n", Path::new("l")).is_err());
    }

    fn arb_traj(frames: usize) -> impl Strategy<Value = (usize, Vec<(f64, f64)>, Vec<[f64; 3]>)> {
        (0..frames).prop_flat_map(move |start| {
            let max_len = frames - start;
            (
                Just(start),
                prop::collection::vec((0.0..=640.0f64, 0.0..=480.0f64), 1..=max_len.min(12)),
                prop::collection::vec(prop::array::uniform3(0.0..=1.0f64), 12),
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn write_read_identity(
            raw in prop::collection::vec(arb_traj(40), 1000),
            colored in any::<bool>(),
        ) {
            let meta = VideoMeta::new(640, 480, 40).unwrap();
            let trajs: Vec<Trajectory> = raw
                .into_iter()
                .enumerate()
                .map(|(i, (start, pts, cols))| {
                    let n = pts.len();
                    let points = pts.into_iter().map(|(x, y)| Point2::new(x, y)).collect();
                    let colors = colored.then(|| cols[..n].to_vec());
                    Trajectory::new(i as u64 * 3 + 1, start, points, colors).unwrap()
                })
                .collect();
            let text = format_trajectories(&meta, &trajs).unwrap();
            let (meta2, back) = parse(&text).unwrap();
            prop_assert_eq!(meta, meta2);
            prop_assert_eq!(&trajs, &back);
            prop_assert_eq!(text, format_trajectories(&meta2, &back).unwrap());
        }
    }
}
