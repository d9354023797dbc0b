use super::{ContourSet, PowerSurface};
use std::fmt::Write;

const CELL: f64 = 36.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 48.0;
const MARGIN_R: f64 = 24.0;

// A few viridis stops, linearly interpolated.
const STOPS: [(f64, [u8; 3]); 5] = [
    (0.0, [68, 1, 84]),
    (0.25, [59, 82, 139]),
    (0.5, [33, 145, 140]),
    (0.75, [94, 201, 98]),
    (1.0, [253, 231, 37]),
];

fn colour(p: f64) -> String {
    let p = p.clamp(0.0, 1.0);
    let k = STOPS.iter().position(|s| s.0 >= p).unwrap_or(STOPS.len() - 1).max(1);
    let (a, b) = (STOPS[k - 1], STOPS[k]);
    let t = (p - a.0) / (b.0 - a.0);
    let c: Vec<u8> = (0..3).map(|i| (a.1[i] as f64 + t * (b.1[i] as f64 - a.1[i] as f64)).round() as u8).collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

fn dash(level: f64) -> &'static str {
    if (level - 0.8).abs() < 1e-9 {
        ""
    } else if (level - 0.5).abs() < 1e-9 {
        " stroke-dasharray=\"6 4\""
    } else {
        " stroke-dasharray=\"1.5 3\""
    }
}

/// Standalone SVG heatmap of a surface with `log2 d` across and `log2 m`
/// upward. Contour lines are solid at 0.8, dashed at 0.5, dotted otherwise.
pub fn render_svg(surface: &PowerSurface, contours: Option<&ContourSet>) -> String {
    let (nd, nm) = (surface.grid.d_values.len(), surface.grid.m_values.len());
    let w = MARGIN_L + CELL * nd as f64 + MARGIN_R;
    let h = MARGIN_T + CELL * nm as f64 + MARGIN_B;
    let [x0, _, y0, _] = surface.grid.log2_bounds();
    // Node i sits at the centre of column i.
    let px = |lx: f64| MARGIN_L + CELL * (lx - x0 + 0.5);
    let py = |ly: f64| MARGIN_T + CELL * (nm as f64 - (ly - y0) - 0.5);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{} / {}</text>"#,
        w / 2.0,
        surface.case.slug(),
        surface.rule
    );
    for (i, row) in surface.rows().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            let x = MARGIN_L + CELL * i as f64;
            let y = MARGIN_T + CELL * (nm - 1 - j) as f64;
            match cell.power {
                Some(p) => {
                    let _ = writeln!(
                        s,
                        r#"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{}"><title>d={} m={} power={p:.4}</title></rect>"#,
                        colour(p),
                        cell.d,
                        cell.m
                    );
                }
                None => {
                    let reason = cell.mask.as_ref().map(|m| m.label()).unwrap_or_default();
                    let _ = writeln!(
                        s,
                        r##"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="#d0d0d0"><title>d={} m={} {}</title></rect>"##,
                        cell.d,
                        cell.m,
                        xml_escape(&reason)
                    );
                }
            }
        }
    }
    for (i, d) in surface.grid.d_values.iter().enumerate() {
        let x = MARGIN_L + CELL * (i as f64 + 0.5);
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{}" text-anchor="middle">{}</text>"#,
            MARGIN_T + CELL * nm as f64 + 16.0,
            (*d as f64).log2()
        );
    }
    for (j, m) in surface.grid.m_values.iter().enumerate() {
        let y = MARGIN_T + CELL * (nm - 1 - j) as f64 + CELL / 2.0 + 4.0;
        let _ = writeln!(s, r#"<text x="{}" y="{y}" text-anchor="end">{}</text>"#, MARGIN_L - 6.0, (*m as f64).log2());
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">log2 d</text>"#,
        MARGIN_L + CELL * nd as f64 / 2.0,
        h - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">log2 m</text>"#,
        MARGIN_T + CELL * nm as f64 / 2.0,
        MARGIN_T + CELL * nm as f64 / 2.0
    );
    if let Some(c) = contours {
        for level in &c.levels {
            for line in &level.polylines {
                let pts: Vec<String> = line.iter().map(|p| format!("{:.2},{:.2}", px(p[0]), py(p[1]))).collect();
                let _ = writeln!(
                    s,
                    r#"<polyline points="{}" fill="none" stroke="white" stroke-width="2"{}><title>{}</title></polyline>"#,
                    pts.join(" "),
                    dash(level.level),
                    level.level
                );
            }
        }
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::super::*;
    use super::colour;

    #[test]
    fn palette_endpoints() {
        assert_eq!(colour(0.0), "#440154");
        assert_eq!(colour(1.0), "#fde725");
        assert_eq!(colour(7.0), "#fde725");
    }

    #[test]
    fn line_styles_by_level() {
        let grid = SweepGrid::new(vec![16, 32, 64], vec![16, 32, 64, 128], 30, 0.05).unwrap();
        let s = PowerSurface::from_fn(grid, TestCaseId::NormalSingleMeanUp, ScoringRule::crps_q(), |d, m| {
            (m > 16 || d > 16).then(|| ((m as f64).log2() - 4.0) / 3.0)
        });
        let smooth = smooth_surface(&s, 0.0).unwrap();
        let c = surface_contours(&smooth, &DEFAULT_LEVELS, DEFAULT_RESOLUTION).unwrap();
        let svg = render_svg(&s, Some(&c));
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("stroke-dasharray=\"6 4\""));
        assert!(svg.contains("stroke-dasharray=\"1.5 3\""));
        let solid = svg.lines().filter(|l| l.starts_with("<polyline") && !l.contains("dasharray")).count();
        assert!(solid >= 1);
        assert!(svg.contains("#d0d0d0"));
    }
}
