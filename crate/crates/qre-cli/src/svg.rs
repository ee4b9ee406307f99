//! Minimal deterministic SVG line plots: iteration on a linear x-axis, gap
//! on a log-base-10 y-axis. Values at or below 1e-16 are clipped to 1e-16;
//! non-finite values are skipped. Output depends only on the input series,
//! so plots are byte-stable and safe to golden-test.

use crate::error::{CliError, CliResult};

/// One labeled curve: `(iteration, value)` pairs.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 24.0;
const MARGIN_BOTTOM: f64 = 56.0;
const CLIP_FLOOR: f64 = 1e-16;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

/// Renders the series into a standalone SVG document.
pub fn render(series: &[Series], y_label: &str) -> CliResult<String> {
    if series.is_empty() {
        return Err(CliError::Usage("nothing to plot: no series".into()));
    }
    let cleaned: Vec<(usize, Vec<(f64, f64)>)> = series
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let pts: Vec<(f64, f64)> = s
                .points
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|&(x, y)| (x, y.max(CLIP_FLOOR)))
                .collect();
            (i, pts)
        })
        .collect();
    if let Some((i, _)) = cleaned.iter().find(|(_, pts)| pts.is_empty()) {
        return Err(CliError::Usage(format!(
            "nothing to plot: series `{}` has no finite points",
            series[*i].label
        )));
    }

    let xmax = cleaned
        .iter()
        .flat_map(|(_, pts)| pts.iter().map(|p| p.0))
        .fold(1.0_f64, f64::max);
    let ymin = cleaned
        .iter()
        .flat_map(|(_, pts)| pts.iter().map(|p| p.1))
        .fold(f64::INFINITY, f64::min);
    let ymax = cleaned
        .iter()
        .flat_map(|(_, pts)| pts.iter().map(|p| p.1))
        .fold(0.0_f64, f64::max);
    let lo_exp = ymin.log10().floor() as i32;
    let mut hi_exp = ymax.log10().ceil() as i32;
    if hi_exp <= lo_exp {
        hi_exp = lo_exp + 1;
    }

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let px = |x: f64| MARGIN_LEFT + x / xmax * plot_w;
    let py = |v: f64| {
        let t = (v.log10() - lo_exp as f64) / (hi_exp - lo_exp) as f64;
        MARGIN_TOP + (1.0 - t) * plot_h
    };

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"monospace\" font-size=\"12\">\n"
    ));
    out.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));

    // Horizontal decade grid and y tick labels.
    let decades = (hi_exp - lo_exp) as usize;
    let step = decades.div_ceil(8).max(1) as i32;
    let mut exp = lo_exp;
    while exp <= hi_exp {
        let y = py(10f64.powi(exp));
        out.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#dddddd\"/>\n",
            fmt(MARGIN_LEFT),
            fmt(y),
            fmt(WIDTH - MARGIN_RIGHT),
            fmt(y)
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">1e{exp}</text>\n",
            fmt(MARGIN_LEFT - 6.0),
            fmt(y + 4.0)
        ));
        exp += step;
    }

    // Vertical grid and x tick labels at quarters of the range.
    for i in 0..=4 {
        let x = xmax * i as f64 / 4.0;
        let gx = px(x);
        out.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#dddddd\"/>\n",
            fmt(gx),
            fmt(MARGIN_TOP),
            fmt(gx),
            fmt(HEIGHT - MARGIN_BOTTOM)
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            fmt(gx),
            fmt(HEIGHT - MARGIN_BOTTOM + 18.0),
            x.round() as i64
        ));
    }

    // Axes.
    out.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        fmt(MARGIN_LEFT),
        fmt(MARGIN_TOP),
        fmt(MARGIN_LEFT),
        fmt(HEIGHT - MARGIN_BOTTOM)
    ));
    out.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        fmt(MARGIN_LEFT),
        fmt(HEIGHT - MARGIN_BOTTOM),
        fmt(WIDTH - MARGIN_RIGHT),
        fmt(HEIGHT - MARGIN_BOTTOM)
    ));

    // Axis labels.
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">iteration</text>\n",
        fmt(MARGIN_LEFT + plot_w / 2.0),
        fmt(HEIGHT - 12.0)
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 {} {})\">{}</text>\n",
        fmt(18.0),
        fmt(MARGIN_TOP + plot_h / 2.0),
        fmt(18.0),
        fmt(MARGIN_TOP + plot_h / 2.0),
        escape(y_label)
    ));

    // Curves.
    for (i, pts) in &cleaned {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{},{}", fmt(px(x)), fmt(py(y))))
            .collect();
        out.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            coords.join(" ")
        ));
    }

    // Legend, top right.
    let legend_w = 150.0;
    let legend_x = WIDTH - MARGIN_RIGHT - legend_w - 8.0;
    let legend_y = MARGIN_TOP + 8.0;
    let entry_h = 16.0;
    out.push_str(&format!(
        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"white\" stroke=\"#999999\"/>\n",
        fmt(legend_x),
        fmt(legend_y),
        fmt(legend_w),
        fmt(entry_h * series.len() as f64 + 8.0)
    ));
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let cy = legend_y + 8.0 + entry_h * i as f64 + entry_h / 2.0;
        out.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
            fmt(legend_x + 8.0),
            fmt(cy - 4.0),
            fmt(legend_x + 30.0),
            fmt(cy - 4.0)
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\">{}</text>\n",
            fmt(legend_x + 36.0),
            fmt(cy),
            escape(&s.label)
        ));
    }

    out.push_str("</svg>\n");
    Ok(out)
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
