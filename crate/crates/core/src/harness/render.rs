//! SVG figures of 2-D pointed subspaces.
//!
//! Complete points are filled dots. A 1-D subspace is a dashed line clipped
//! to the panel with its basepoint drawn as a hollow ring. A 2-D subspace
//! (every coordinate missing) shades the whole panel and rings its basepoint.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::subspace::PointedSubspace;

const PANEL: f64 = 400.0;
const PAD: f64 = 20.0;

#[derive(Debug, Clone, Copy)]
struct Frame {
    lo: [f64; 2],
    hi: [f64; 2],
    x_offset: f64,
}

impl Frame {
    fn fit(points: &[PointedSubspace], x_offset: f64) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in points {
            for k in 0..2 {
                lo[k] = lo[k].min(p.basepoint()[k]);
                hi[k] = hi[k].max(p.basepoint()[k]);
            }
        }
        if points.is_empty() {
            lo = [-1.0; 2];
            hi = [1.0; 2];
        }
        // Square box with a margin so lines through edge points stay visible.
        let half = (0..2).map(|k| (hi[k] - lo[k]) / 2.0).fold(0.5_f64, f64::max) * 1.2;
        let mid = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
        Self {
            lo: [mid[0] - half, mid[1] - half],
            hi: [mid[0] + half, mid[1] + half],
            x_offset,
        }
    }

    fn px(&self, p: [f64; 2]) -> (f64, f64) {
        let span = PANEL - 2.0 * PAD;
        let x = self.x_offset + PAD + (p[0] - self.lo[0]) / (self.hi[0] - self.lo[0]) * span;
        let y = PAD + (self.hi[1] - p[1]) / (self.hi[1] - self.lo[1]) * span;
        (x, y)
    }

    /// Segment of `base + t·dir` inside the box (Liang–Barsky).
    fn clip(&self, base: [f64; 2], dir: [f64; 2]) -> Option<([f64; 2], [f64; 2])> {
        let mut t0 = f64::NEG_INFINITY;
        let mut t1 = f64::INFINITY;
        for k in 0..2 {
            if dir[k].abs() < 1e-15 {
                if base[k] < self.lo[k] || base[k] > self.hi[k] {
                    return None;
                }
                continue;
            }
            let a = (self.lo[k] - base[k]) / dir[k];
            let b = (self.hi[k] - base[k]) / dir[k];
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
        }
        (t0 <= t1).then(|| {
            let at = |t: f64| [base[0] + t * dir[0], base[1] + t * dir[1]];
            (at(t0), at(t1))
        })
    }
}

fn check(points: &[PointedSubspace]) -> Result<()> {
    match points.iter().find(|p| p.ambient_dim() != 2) {
        Some(p) => Err(Error::NotTwoDimensional(p.ambient_dim())),
        None => Ok(()),
    }
}

fn draw_panel(out: &mut String, points: &[PointedSubspace], frame: Frame, title: Option<&str>) {
    let (x0, y0) = (frame.x_offset, 0.0);
    let _ = writeln!(
        out,
        r##"<rect class="panel" x="{x0}" y="{y0}" width="{PANEL}" height="{PANEL}" fill="white" stroke="#999"/>"##
    );
    if let Some(t) = title {
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="14" font-size="12" text-anchor="middle">{t}</text>"#,
            x0 + PANEL / 2.0
        );
    }
    for p in points {
        let b = [p.basepoint()[0], p.basepoint()[1]];
        let (bx, by) = frame.px(b);
        match p.dim() {
            0 => {
                let _ = writeln!(out, r#"<circle class="point" cx="{bx:.2}" cy="{by:.2}" r="3" fill="black"/>"#);
            }
            1 => {
                let dir = [p.basis()[(0, 0)], p.basis()[(1, 0)]];
                if let Some((a, c)) = frame.clip(b, dir) {
                    let (ax, ay) = frame.px(a);
                    let (cx, cy) = frame.px(c);
                    let _ = writeln!(
                        out,
                        r#"<line class="subspace" x1="{ax:.2}" y1="{ay:.2}" x2="{cx:.2}" y2="{cy:.2}" stroke="steelblue" stroke-dasharray="6 4"/>"#
                    );
                }
                let _ = writeln!(
                    out,
                    r#"<circle class="basepoint" cx="{bx:.2}" cy="{by:.2}" r="4" fill="none" stroke="steelblue"/>"#
                );
            }
            _ => {
                let _ = writeln!(
                    out,
                    r#"<rect class="plane" x="{x0}" y="{y0}" width="{PANEL}" height="{PANEL}" fill="steelblue" fill-opacity="0.05"/>"#
                );
                let _ = writeln!(
                    out,
                    r#"<circle class="basepoint" cx="{bx:.2}" cy="{by:.2}" r="4" fill="none" stroke="steelblue"/>"#
                );
            }
        }
    }
}

/// One panel per entry of `panels`, side by side, each scaled to its own data.
pub fn render_svg(panels: &[(&[PointedSubspace], Option<&str>)]) -> Result<String> {
    for (points, _) in panels {
        check(points)?;
    }
    let width = PANEL * panels.len().max(1) as f64;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{PANEL}" viewBox="0 0 {width} {PANEL}">"#
    );
    for (i, (points, title)) in panels.iter().enumerate() {
        let frame = Frame::fit(points, i as f64 * PANEL);
        draw_panel(&mut out, points, frame, *title);
    }
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn render2d(points: &[PointedSubspace], path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, render_svg(&[(points, None)])?)?;
    Ok(())
}

/// Before/after panels.
pub fn render2d_pair(before: &[PointedSubspace], after: &[PointedSubspace], path: impl AsRef<Path>) -> Result<()> {
    let svg = render_svg(&[(before, Some("before")), (after, Some("after"))])?;
    std::fs::write(path, svg)?;
    Ok(())
}
