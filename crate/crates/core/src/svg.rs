//! Minimal SVG plots: planned paths and shot maps, drawn in the camera
//! x-y plane with millimetre units.

use std::fmt::Write as _;

use crate::geometry::Vec3;
use crate::pathplan::SegmentPath;
use crate::simulator::{ShotEvent, TrajectorySample};

const MARGIN_MM: f64 = 5.0;

struct Frame {
    min: [f64; 2],
    size: [f64; 2],
}

impl Frame {
    fn fit<'a>(points: impl IntoIterator<Item = &'a Vec3>, pad: f64) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in points {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k] * 1e3);
                hi[k] = hi[k].max(p[k] * 1e3);
            }
        }
        if !lo[0].is_finite() {
            lo = [0.0; 2];
            hi = [0.0; 2];
        }
        let m = MARGIN_MM + pad * 1e3;
        Self {
            min: [lo[0] - m, lo[1] - m],
            size: [hi[0] - lo[0] + 2.0 * m, hi[1] - lo[1] + 2.0 * m],
        }
    }

    fn header(&self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.3}mm\" height=\"{h:.3}mm\" viewBox=\"{x:.4} {y:.4} {w:.4} {h:.4}\">\n",
            x = self.min[0],
            y = self.min[1],
            w = self.size[0],
            h = self.size[1]
        )
    }
}

fn polyline(out: &mut String, points: impl Iterator<Item = Vec3>, stroke: &str) {
    let coords: Vec<String> = points.map(|p| format!("{:.4},{:.4}", p.x * 1e3, p.y * 1e3)).collect();
    let _ = writeln!(
        out,
        "<polyline fill=\"none\" stroke=\"{stroke}\" stroke-width=\"0.2\" points=\"{}\"/>",
        coords.join(" ")
    );
}

/// One black polyline per segment through its path points, in order.
pub fn paths_svg(paths: &[SegmentPath]) -> String {
    let frame = Frame::fit(paths.iter().flat_map(|p| p.points.iter().map(|q| &q.chi)), 0.0);
    let mut out = frame.header();
    for p in paths {
        let _ = writeln!(out, "<g id=\"{}\">", p.label);
        polyline(&mut out, p.points.iter().map(|q| q.chi), "black");
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    out
}

/// Effector trajectory in black with a red circle of the laser diameter at
/// every shot.
pub fn shots_svg(trajectory: &[TrajectorySample], shots: &[ShotEvent], laser_diameter: f64) -> String {
    let frame = Frame::fit(
        trajectory.iter().map(|s| &s.position).chain(shots.iter().map(|s| &s.psi.position)),
        laser_diameter / 2.0,
    );
    let mut out = frame.header();
    polyline(&mut out, trajectory.iter().map(|s| s.position), "black");
    for s in shots {
        let _ = writeln!(
            out,
            "<circle cx=\"{:.4}\" cy=\"{:.4}\" r=\"{:.4}\" fill=\"none\" stroke=\"red\" stroke-width=\"0.2\"/>",
            s.psi.position.x * 1e3,
            s.psi.position.y * 1e3,
            laser_diameter * 1e3 / 2.0
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{run_path, straight_path, Scene, SimConfig};

    #[test]
    fn polyline_has_one_vertex_per_path_point() {
        let p = straight_path("s", 0.02, 0.5);
        let svg = paths_svg(std::slice::from_ref(&p));
        let pts = svg.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        assert_eq!(pts.split(' ').count(), p.len());
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn one_circle_per_shot() {
        let out = run_path(&[straight_path("s", 0.03, 0.5)], &SimConfig::default(), &Scene::default()).unwrap();
        let svg = shots_svg(&out.trajectory, &out.shots, 0.004);
        assert_eq!(svg.matches("<circle").count(), out.shots.len());
        assert!(svg.contains("r=\"2.0000\""));
    }
}
