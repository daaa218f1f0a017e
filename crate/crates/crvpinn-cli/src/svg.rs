//! Minimal static SVG renderer for the convergence chart: square-root loss
//! and discrete error against the iteration count on a log scale.

use crvpinn::train::TrainingRecord;

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 520.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 50.0;

struct Scale {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Scale {
    fn x(&self, iter: f64) -> f64 {
        let t = (iter - self.x0) / (self.x1 - self.x0).max(1.0);
        MARGIN_L + t * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn y(&self, value: f64) -> f64 {
        let v = value.max(1e-300).log10();
        let t = (v - self.y0) / (self.y1 - self.y0).max(1e-12);
        HEIGHT - MARGIN_B - t * (HEIGHT - MARGIN_T - MARGIN_B)
    }
}

fn polyline(scale: &Scale, points: &[(f64, f64)], color: &str) -> String {
    let coords: Vec<String> = points
        .iter()
        .map(|&(x, y)| format!("{:.1},{:.1}", scale.x(x), scale.y(y)))
        .collect();
    format!(
        "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
        coords.join(" ")
    )
}

/// Render the records as a standalone SVG document.
pub fn convergence_chart(records: &[TrainingRecord]) -> String {
    let loss: Vec<(f64, f64)> = records
        .iter()
        .map(|r| (r.iteration as f64, r.sqrt_loss.max(1e-300)))
        .collect();
    let err: Vec<(f64, f64)> = records
        .iter()
        .map(|r| (r.iteration as f64, r.err_discrete.max(1e-300)))
        .collect();
    let all_y = loss.iter().chain(&err).map(|&(_, y)| y.log10());
    let y_min = all_y.clone().fold(f64::INFINITY, f64::min).floor();
    let y_max = all_y.fold(f64::NEG_INFINITY, f64::max).ceil();
    let scale = Scale {
        x0: records.first().map_or(0.0, |r| r.iteration as f64),
        x1: records.last().map_or(1.0, |r| r.iteration as f64),
        y0: y_min,
        y1: y_max.max(y_min + 1.0),
    };

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    // axes
    out.push_str(&format!(
        "<line x1=\"{MARGIN_L}\" y1=\"{MARGIN_T}\" x2=\"{MARGIN_L}\" y2=\"{}\" stroke=\"black\"/>\n",
        HEIGHT - MARGIN_B
    ));
    out.push_str(&format!(
        "<line x1=\"{MARGIN_L}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        HEIGHT - MARGIN_B,
        WIDTH - MARGIN_R,
        HEIGHT - MARGIN_B
    ));
    // log ticks
    let mut decade = scale.y0;
    while decade <= scale.y1 + 0.5 {
        let y = scale.y(10f64.powf(decade));
        out.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#cccccc\"/>\n",
            MARGIN_L,
            WIDTH - MARGIN_R
        ));
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"end\">1e{}</text>\n",
            MARGIN_L - 6.0,
            y + 4.0,
            decade as i64
        ));
        decade += 1.0;
    }
    out.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"13\" text-anchor=\"middle\">iteration</text>\n",
        (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
        HEIGHT - 14.0
    ));
    out.push_str(&polyline(&scale, &loss, "#1f77b4"));
    out.push_str(&polyline(&scale, &err, "#d62728"));
    out.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"13\" fill=\"#1f77b4\">sqrt(loss)</text>\n",
        WIDTH - 190.0,
        MARGIN_T + 12.0
    ));
    out.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"13\" fill=\"#d62728\">discrete error</text>\n",
        WIDTH - 190.0,
        MARGIN_T + 30.0
    ));
    out.push_str("</svg>\n");
    out
}
