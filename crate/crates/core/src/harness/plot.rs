use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::pipeline::{prepare, PlanRecord};
use super::scenario::Scenario;
use super::HarnessError;
use crate::frenet::FrenetPoint;
use crate::occupancy::ActorType;

/// Overlay layers drawn on top of the per-type occupancy layers.
pub const PLOT_OVERLAYS: [&str; 3] = ["initial", "refined", "s-safe"];

const MARGIN: f64 = 20.0;
/// Pixels per meter along s and d.
const SCALE_S: f64 = 8.0;
const SCALE_D: f64 = 20.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#7f7f7f"];

struct Canvas {
    d_half: f64,
}

impl Canvas {
    fn x(&self, s: f64) -> f64 {
        MARGIN + s * SCALE_S
    }

    fn y(&self, d: f64) -> f64 {
        MARGIN + (self.d_half - d) * SCALE_D
    }
}

fn polyline(out: &mut String, canvas: &Canvas, points: &[FrenetPoint], color: &str) {
    let coords: Vec<String> = points
        .iter()
        .map(|p| format!("{:.2},{:.2}", canvas.x(p.s), canvas.y(p.d)))
        .collect();
    let _ = writeln!(
        out,
        r#"    <polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
        coords.join(" ")
    );
}

/// SVG of the plan in the route frame: one heat layer per occupancy type
/// (maximum over frames), then the initial plan, the refined plan and the
/// per-frame safety distances.
pub fn plot_svg(record: &PlanRecord, scenario: &Scenario) -> Result<String, HarnessError> {
    let prepared = prepare(scenario)?;
    let focc = &prepared.focc;
    let spec = *focc.spec();
    let canvas = Canvas {
        d_half: 0.5 * spec.d_cells as f64 * spec.d_res,
    };
    let width = 2.0 * MARGIN + spec.extent() * SCALE_S;
    let height = 2.0 * MARGIN + 2.0 * canvas.d_half * SCALE_D;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}">"#
    );
    let _ = writeln!(out, "  <title>{}</title>", record.scenario);
    let _ = writeln!(
        out,
        r##"  <rect width="100%" height="100%" fill="#ffffff"/>"##
    );
    let _ = writeln!(out, r#"  <g id="route">"#);
    let _ = writeln!(
        out,
        r##"    <line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#000000" stroke-dasharray="4 4"/>"##,
        canvas.x(0.0),
        canvas.y(0.0),
        canvas.x(spec.extent()),
        canvas.y(0.0)
    );
    let _ = writeln!(out, "  </g>");

    let cell_w = spec.s_res * SCALE_S;
    let cell_h = spec.d_res * SCALE_D;
    for u in 0..focc.types() {
        let name = ActorType::ALL.get(u).map_or("other", |a| a.name());
        let color = COLORS[u % COLORS.len()];
        let _ = writeln!(
            out,
            r#"  <g class="layer" id="occupancy-{name}" fill="{color}">"#
        );
        for j in 0..spec.d_cells {
            // Runs of equal quantized opacity along s become one rectangle.
            let level = |i: usize| {
                let v = (0..focc.frames())
                    .map(|t| focc.get(t, u, i, j))
                    .fold(0.0f32, f32::max);
                (v * 20.0).round() as u32
            };
            let mut i = 0;
            while i < spec.s_cells {
                let q = level(i);
                let start = i;
                while i < spec.s_cells && level(i) == q {
                    i += 1;
                }
                if q == 0 {
                    continue;
                }
                let top = canvas.y(spec.d_of(j)) - 0.5 * cell_h;
                let _ = writeln!(
                    out,
                    r#"    <rect x="{:.2}" y="{top:.2}" width="{:.2}" height="{cell_h:.2}" fill-opacity="{:.2}"/>"#,
                    canvas.x(spec.s_of(start)) - 0.5 * cell_w,
                    (i - start) as f64 * cell_w,
                    f64::from(q) / 20.0
                );
            }
        }
        let _ = writeln!(out, "  </g>");
    }

    let _ = writeln!(out, r#"  <g class="layer" id="{}">"#, PLOT_OVERLAYS[0]);
    polyline(&mut out, &canvas, &record.initial.frenet, "#ff7f0e");
    let _ = writeln!(out, "  </g>");
    let _ = writeln!(out, r#"  <g class="layer" id="{}">"#, PLOT_OVERLAYS[1]);
    polyline(&mut out, &canvas, &record.refined.frenet, "#9467bd");
    let _ = writeln!(out, "  </g>");
    let _ = writeln!(out, r#"  <g class="layer" id="{}">"#, PLOT_OVERLAYS[2]);
    for (k, s) in record.s_safe.iter().enumerate() {
        if let Some(s) = s {
            let _ = writeln!(
                out,
                r##"    <line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#000000" stroke-width="1.5" data-frame="{k}"/>"##,
                canvas.y(canvas.d_half),
                canvas.y(-canvas.d_half),
                x = canvas.x(*s)
            );
        }
    }
    let _ = writeln!(out, "  </g>");
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn render_plot(
    record: &PlanRecord,
    scenario: &Scenario,
    path: &Path,
) -> Result<(), HarnessError> {
    let svg = plot_svg(record, scenario)?;
    fs::write(path, svg).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}
