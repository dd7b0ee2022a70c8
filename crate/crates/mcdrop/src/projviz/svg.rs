//! Deterministic SVG rendering of the projected sample space.
//!
//! Glyph mapping follows the outcome legend: true positives are circles,
//! true negatives crosses, false positives squares, false negatives pluses.
//! Glyph size is linear in the mean probability; fill shade encodes the
//! probability bin; isodensity contours come from the KDE grid.

use super::kde::{contour_levels, contour_segments, DensityGrid};
use super::VizPoint;
use crate::evalharness::Outcome;

#[derive(Debug, Clone)]
pub struct RenderConfig {
    pub width: f64,
    pub height: f64,
    pub r_min: f64,
    pub r_max: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            width: 800.0,
            height: 600.0,
            r_min: 3.0,
            r_max: 9.0,
        }
    }
}

/// Fill shades per probability bin, light to dark.
const BIN_SHADES: [&str; 4] = ["#c6dbef", "#6baed6", "#2171b5", "#08306b"];
const CONTOUR_COLOR: &str = "#b0b0b0";
const OUTLINE: &str = "#333333";
const LEGEND_WIDTH: f64 = 150.0;

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

fn glyph_class(outcome: Outcome) -> &'static str {
    match outcome {
        Outcome::TruePositive => "tp",
        Outcome::TrueNegative => "tn",
        Outcome::FalsePositive => "fp",
        Outcome::FalseNegative => "fn",
    }
}

/// Emits one glyph. `r` is the half-extent in pixels.
fn glyph(out: &mut String, id_attr: &str, outcome: Outcome, cx: f64, cy: f64, r: f64, shade: &str) {
    let class = glyph_class(outcome);
    match outcome {
        Outcome::TruePositive => {
            out.push_str(&format!(
                "<circle id=\"{id_attr}\" class=\"{class}\" cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"{shade}\" stroke=\"{OUTLINE}\" stroke-width=\"0.8\"/>\n",
                fmt(cx), fmt(cy), fmt(r)
            ));
        }
        Outcome::FalsePositive => {
            out.push_str(&format!(
                "<rect id=\"{id_attr}\" class=\"{class}\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{shade}\" stroke=\"{OUTLINE}\" stroke-width=\"0.8\"/>\n",
                fmt(cx - r), fmt(cy - r), fmt(2.0 * r), fmt(2.0 * r)
            ));
        }
        Outcome::TrueNegative => {
            // Diagonal cross.
            out.push_str(&format!(
                "<path id=\"{id_attr}\" class=\"{class}\" d=\"M {} {} L {} {} M {} {} L {} {}\" stroke=\"{shade}\" stroke-width=\"1.8\" fill=\"none\"/>\n",
                fmt(cx - r), fmt(cy - r), fmt(cx + r), fmt(cy + r),
                fmt(cx + r), fmt(cy - r), fmt(cx - r), fmt(cy + r)
            ));
        }
        Outcome::FalseNegative => {
            // Upright plus.
            out.push_str(&format!(
                "<path id=\"{id_attr}\" class=\"{class}\" d=\"M {} {} L {} {} M {} {} L {} {}\" stroke=\"{shade}\" stroke-width=\"1.8\" fill=\"none\"/>\n",
                fmt(cx - r), fmt(cy), fmt(cx + r), fmt(cy),
                fmt(cx), fmt(cy - r), fmt(cx), fmt(cy + r)
            ));
        }
    }
}

/// Renders points and contours to a standalone SVG document. Points are
/// drawn in ascending id order, so the output bytes depend only on the
/// input sets, not their order. `grid` may be absent when there is nothing
/// to contour (empty point set).
pub fn render(points: &[VizPoint], grid: Option<&DensityGrid>, cfg: &RenderConfig) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n",
        fmt(cfg.width), fmt(cfg.height), fmt(cfg.width), fmt(cfg.height)
    ));
    out.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"#ffffff\"/>\n",
        fmt(cfg.width),
        fmt(cfg.height)
    ));

    let plot_x0 = 10.0;
    let plot_y0 = 10.0;
    let plot_x1 = cfg.width - LEGEND_WIDTH - 10.0;
    let plot_y1 = cfg.height - 10.0;

    if let Some(grid) = grid {
        let sx = |x: f64| plot_x0 + (x - grid.x0) / (grid.x1 - grid.x0) * (plot_x1 - plot_x0);
        let sy = |y: f64| plot_y1 - (y - grid.y0) / (grid.y1 - grid.y0) * (plot_y1 - plot_y0);

        // Isodensity contours, faintest level first.
        for level in contour_levels(grid) {
            let segments = contour_segments(grid, level);
            if segments.is_empty() {
                continue;
            }
            let mut d = String::new();
            for [a, b] in &segments {
                d.push_str(&format!(
                    "M {} {} L {} {} ",
                    fmt(sx(a.0)),
                    fmt(sy(a.1)),
                    fmt(sx(b.0)),
                    fmt(sy(b.1))
                ));
            }
            out.push_str(&format!(
                "<path class=\"contour\" d=\"{}\" stroke=\"{CONTOUR_COLOR}\" stroke-width=\"0.7\" fill=\"none\"/>\n",
                d.trim_end()
            ));
        }

        let mut ordered: Vec<&VizPoint> = points.iter().collect();
        ordered.sort_by_key(|p| p.id);
        for p in ordered {
            let (cx, cy) = (sx(p.x), sy(p.y));
            let r = cfg.r_min + p.mean.clamp(0.0, 1.0) * (cfg.r_max - cfg.r_min);
            let shade = BIN_SHADES[(p.bin as usize).min(3)];
            glyph(
                &mut out,
                &format!("doc-{}", p.id),
                p.outcome,
                cx,
                cy,
                r,
                shade,
            );
            out.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" font-size=\"8\" font-family=\"sans-serif\" fill=\"#222222\">{}</text>\n",
                fmt(cx + r + 2.0),
                fmt(cy + 3.0),
                p.id
            ));
        }
    }

    // Legend block.
    let lx = cfg.width - LEGEND_WIDTH;
    let mut ly = 24.0;
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"11\" font-family=\"sans-serif\" font-weight=\"bold\">Outcomes</text>\n",
        fmt(lx),
        fmt(ly)
    ));
    let entries = [
        (Outcome::TruePositive, "true positive"),
        (Outcome::TrueNegative, "true negative"),
        (Outcome::FalsePositive, "false positive"),
        (Outcome::FalseNegative, "false negative"),
    ];
    for (outcome, label) in entries {
        ly += 18.0;
        glyph(
            &mut out,
            &format!("legend-{}", glyph_class(outcome)),
            outcome,
            lx + 6.0,
            ly - 3.0,
            5.0,
            "#6baed6",
        );
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"10\" font-family=\"sans-serif\">{label}</text>\n",
            fmt(lx + 18.0),
            fmt(ly)
        ));
    }
    ly += 18.0;
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"9\" font-family=\"sans-serif\" fill=\"#555555\">size: mean probability</text>\n",
        fmt(lx),
        fmt(ly)
    ));
    ly += 14.0;
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"9\" font-family=\"sans-serif\" fill=\"#555555\">shade: probability bin</text>\n",
        fmt(lx),
        fmt(ly)
    ));

    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(id: u64, outcome: Outcome, mean: f64) -> VizPoint {
        VizPoint {
            id,
            x: id as f64,
            y: 0.5,
            mean,
            bin: super::super::super::mcd::probability_bin(mean),
            outcome,
            label_text: String::new(),
        }
    }

    fn tiny_grid() -> DensityGrid {
        super::super::kde::kde2d(&[(0.0, 0.0), (3.0, 1.0)], 0.5, 20).unwrap()
    }

    #[test]
    fn tp_renders_as_circle_with_id() {
        let svg = render(
            &[point(7, Outcome::TruePositive, 0.8)],
            Some(&tiny_grid()),
            &RenderConfig::default(),
        );
        assert!(svg.contains("<circle id=\"doc-7\""), "{svg}");
    }

    #[test]
    fn glyph_outcome_bijection() {
        let cases = [
            (Outcome::TruePositive, "<circle id=\"doc-1\" class=\"tp\""),
            (Outcome::TrueNegative, "<path id=\"doc-1\" class=\"tn\""),
            (Outcome::FalsePositive, "<rect id=\"doc-1\" class=\"fp\""),
            (Outcome::FalseNegative, "<path id=\"doc-1\" class=\"fn\""),
        ];
        for (outcome, needle) in cases {
            let svg = render(
                &[point(1, outcome, 0.5)],
                Some(&tiny_grid()),
                &RenderConfig::default(),
            );
            assert!(svg.contains(needle), "missing {needle}");
            // No other doc glyph class sneaks in.
            for (other, other_needle) in &cases {
                if *other != outcome {
                    assert!(!svg.contains(other_needle));
                }
            }
        }
    }

    #[test]
    fn radius_endpoints_of_linear_map() {
        let cfg = RenderConfig::default();
        let svg = render(
            &[
                point(1, Outcome::TruePositive, 1.0),
                point(2, Outcome::TruePositive, 0.0),
            ],
            Some(&tiny_grid()),
            &cfg,
        );
        assert!(svg.contains("r=\"9.00\""), "max radius missing: {svg}");
        assert!(svg.contains("r=\"3.00\""), "min radius missing");
    }

    #[test]
    fn empty_points_still_valid_with_legend() {
        let svg = render(&[], None, &RenderConfig::default());
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("true positive"));
        assert!(svg.contains("false negative"));
        assert!(!svg.contains("doc-"));
    }

    #[test]
    fn identical_inputs_identical_bytes() {
        let pts = vec![
            point(3, Outcome::FalsePositive, 0.9),
            point(1, Outcome::TrueNegative, 0.2),
        ];
        let grid = tiny_grid();
        let a = render(&pts, Some(&grid), &RenderConfig::default());
        let b = render(&pts, Some(&grid), &RenderConfig::default());
        assert_eq!(a, b);
        // Point order does not matter either.
        let mut rev = pts.clone();
        rev.reverse();
        let c = render(&rev, Some(&grid), &RenderConfig::default());
        assert_eq!(a, c);
    }

    #[test]
    fn labels_appear_beside_points() {
        let svg = render(
            &[point(42, Outcome::TruePositive, 0.6)],
            Some(&tiny_grid()),
            &RenderConfig::default(),
        );
        assert!(svg.contains(">42</text>"));
    }
}
