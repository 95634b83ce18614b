//! Score-versus-lateral-endpoint scatter plots, one SVG per frame.

use std::fmt::Write as _;

use centaur_sim::deploy::Planner;
use centaur_sim::geometry::lateral_endpoint;
use centaur_sim::scorer::{aggregate, encode_scene};
use centaur_sim::uncertainty::{measure_uncertainty, UncertaintyConfig};
use centaur_sim::worldsim::Scene;
use centaur_sim::Result;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;
/// One color per direction cluster, sharp left to sharp right.
const COLORS: [&str; 5] = ["#d62728", "#ff7f0e", "#2ca02c", "#1f77b4", "#9467bd"];

pub fn frame_svg(planner: &Planner, scene: &Scene, cfg: &UncertaintyConfig) -> Result<String> {
    let table = planner.score_candidates(&planner.params, &encode_scene(scene))?;
    let report = measure_uncertainty(&table, &planner.candidates, cfg)?;
    let cands = &planner.candidates;
    let points: Vec<(f64, f64, usize, bool)> = cands
        .trajectories
        .iter()
        .zip(&table.rows)
        .zip(cands.assignment.labels())
        .enumerate()
        .map(|(pos, ((t, row), label))| {
            (lateral_endpoint(t), aggregate(row), label.index(), cands.anchors.label_of(pos).is_some())
        })
        .collect();
    let x_max = points.iter().map(|p| p.0.abs()).fold(1.0, f64::max);
    let sx = |x: f64| MARGIN + (x + x_max) / (2.0 * x_max) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - y * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(svg, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    let _ = writeln!(
        svg,
        r#"<text x="{MARGIN}" y="20">frame {} ({}) {} = {:.3}</text>"#,
        scene.frame_index, scene.category, report.measure, report.value
    );
    let (x0, x1, y0, y1) = (sx(-x_max), sx(x_max), sy(0.0), sy(1.0));
    let _ = writeln!(svg, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(svg, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">lateral endpoint [m] (left positive)</text>"#, WIDTH / 2.0, HEIGHT - 12.0);
    let _ = writeln!(svg, r#"<text x="{x0}" y="{}" text-anchor="middle">{:.0}</text>"#, y0 + 16.0, -x_max);
    let _ = writeln!(svg, r#"<text x="{x1}" y="{}" text-anchor="middle">{:.0}</text>"#, y0 + 16.0, x_max);
    let _ = writeln!(svg, r#"<text x="{}" y="{y1}" text-anchor="end">1</text>"#, x0 - 6.0);
    let _ = writeln!(svg, r#"<text x="{}" y="{y0}" text-anchor="end">0</text>"#, x0 - 6.0);
    for (x, y, cluster, anchor) in points {
        let r = if anchor { 6.0 } else { 3.5 };
        let stroke = if anchor { r#" stroke="black" stroke-width="1.5""# } else { "" };
        let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="{r}" fill="{}"{stroke}/>"#, sx(x), sy(y), COLORS[cluster]);
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
