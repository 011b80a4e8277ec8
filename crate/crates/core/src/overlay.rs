//! Per-frame SVG overlays: background points red, the rest green.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::traj::{Trajectory, VideoMeta};

const BACKGROUND: &str = "#e02020";
const OTHER: &str = "#20c020";

/// SVG for one frame. `background[i]` labels `trajs[i]`.
pub fn render_frame(
    frame: usize,
    background: &[bool],
    trajs: &[Trajectory],
    meta: &VideoMeta,
) -> Result<String> {
    if frame >= meta.frame_count {
        return Err(Error::Bounds {
            what: "overlay frame",
            detail: format!("frame {frame} outside video of {} frames", meta.frame_count),
        });
    }
    if background.len() != trajs.len() {
        return Err(Error::Consistency(format!(
            "{} labels for {} trajectories",
            background.len(),
            trajs.len()
        )));
    }
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = meta.width(),
        h = meta.height()
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="black"/>"#);
    for (t, &bg) in trajs.iter().zip(background) {
        if let Some(p) = t.point_at(frame) {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="{}"/>"#,
                p.x,
                p.y,
                if bg { BACKGROUND } else { OTHER }
            );
        }
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Writes `frame_NNNNN.svg` for every frame into `dir`; returns the paths.
pub fn export_overlay(
    background: &[bool],
    trajs: &[Trajectory],
    meta: &VideoMeta,
    dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    (0..meta.frame_count)
        .map(|f| {
            let path = dir.join(format!("frame_{f:05}.svg"));
            let svg = render_frame(f, background, trajs, meta)?;
            fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
            Ok(path)
        })
        .collect()
}
