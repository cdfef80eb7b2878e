//! Static SVG emission for rate reports: a log-log scatter with the fitted
//! line and the theoretical-slope reference line. Output is a plain text
//! file, byte-deterministic for identical reports.

use crate::error::{Error, Result};
use crate::experiments::RateFitReport;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 30.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 55.0;

/// Renders the report as a standalone SVG string.
pub fn rate_fit_svg(report: &RateFitReport) -> Result<String> {
    if report.rows.len() < 3 {
        return Err(Error::InvalidConfig(format!(
            "svg needs at least 3 points, got {}",
            report.rows.len()
        )));
    }
    let xs: Vec<f64> = report.rows.iter().map(|r| (r.n as f64).ln()).collect();
    let ys: Vec<f64> = report.rows.iter().map(|r| r.expected_mle.ln()).collect();

    let x_min = xs.first().copied().unwrap();
    let x_max = xs.last().copied().unwrap();
    let mut y_min = ys.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut y_max = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    // theory line through the data centroid; include its span
    let x_mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let y_mean = ys.iter().sum::<f64>() / ys.len() as f64;
    if let Some(t) = report.theoretical_slope {
        for &x in &[x_min, x_max] {
            let y = y_mean + t * (x - x_mean);
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
    }
    if (y_max - y_min).abs() < 1e-12 {
        y_min -= 1.0;
        y_max += 1.0;
    }
    let pad = 0.05 * (y_max - y_min);
    let (y_min, y_max) = (y_min - pad, y_max + pad);

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let to_px = |x: f64, y: f64| -> (f64, f64) {
        (
            MARGIN_LEFT + (x - x_min) / (x_max - x_min) * plot_w,
            MARGIN_TOP + (1.0 - (y - y_min) / (y_max - y_min)) * plot_h,
        )
    };

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");

    // axes
    let (x0, y0) = (MARGIN_LEFT, MARGIN_TOP + plot_h);
    svg.push_str(&format!(
        "<line x1=\"{x0:.2}\" y1=\"{y0:.2}\" x2=\"{:.2}\" y2=\"{y0:.2}\" stroke=\"black\"/>\n",
        MARGIN_LEFT + plot_w
    ));
    svg.push_str(&format!(
        "<line x1=\"{x0:.2}\" y1=\"{:.2}\" x2=\"{x0:.2}\" y2=\"{y0:.2}\" stroke=\"black\"/>\n",
        MARGIN_TOP
    ));

    // x tick per data point (the sizes), y ticks at integer ln-levels
    for row in &report.rows {
        let (px, _) = to_px((row.n as f64).ln(), y_min);
        svg.push_str(&format!(
            "<line x1=\"{px:.2}\" y1=\"{y0:.2}\" x2=\"{px:.2}\" y2=\"{:.2}\" stroke=\"black\"/>\n",
            y0 + 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{px:.2}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"12\" \
             text-anchor=\"middle\">{}</text>\n",
            y0 + 20.0,
            row.n
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"12\" \
         text-anchor=\"middle\">n (log scale)</text>\n",
        MARGIN_LEFT + plot_w / 2.0,
        y0 + 40.0
    ));
    svg.push_str(&format!(
        "<text x=\"18\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"12\" \
         text-anchor=\"middle\" transform=\"rotate(-90 18 {:.2})\">expected scale estimate (log scale)</text>\n",
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0
    ));

    // fitted line: ln v = intercept + slope ln n
    let fit_y = |x: f64| report.intercept + report.slope * x;
    let (fx1, fy1) = to_px(x_min, fit_y(x_min));
    let (fx2, fy2) = to_px(x_max, fit_y(x_max));
    svg.push_str(&format!(
        "<line x1=\"{fx1:.2}\" y1=\"{fy1:.2}\" x2=\"{fx2:.2}\" y2=\"{fy2:.2}\" \
         stroke=\"#d62728\" stroke-width=\"1.5\"/>\n"
    ));

    // theoretical slope through the centroid
    if let Some(t) = report.theoretical_slope {
        let th_y = |x: f64| y_mean + t * (x - x_mean);
        let (tx1, ty1) = to_px(x_min, th_y(x_min));
        let (tx2, ty2) = to_px(x_max, th_y(x_max));
        svg.push_str(&format!(
            "<line x1=\"{tx1:.2}\" y1=\"{ty1:.2}\" x2=\"{tx2:.2}\" y2=\"{ty2:.2}\" \
             stroke=\"#1f77b4\" stroke-width=\"1.5\" stroke-dasharray=\"6 4\"/>\n"
        ));
    }

    // data points on top
    for (x, y) in xs.iter().zip(&ys) {
        let (px, py) = to_px(*x, *y);
        svg.push_str(&format!(
            "<circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"3.5\" fill=\"black\"/>\n"
        ));
    }

    // legend
    let legend_x = MARGIN_LEFT + 12.0;
    let legend_y = MARGIN_TOP + 16.0;
    svg.push_str(&format!(
        "<text x=\"{legend_x:.2}\" y=\"{legend_y:.2}\" font-family=\"monospace\" \
         font-size=\"13\" fill=\"#d62728\">fit slope {:.2}</text>\n",
        report.slope
    ));
    match report.theoretical_slope {
        Some(t) => svg.push_str(&format!(
            "<text x=\"{legend_x:.2}\" y=\"{:.2}\" font-family=\"monospace\" \
             font-size=\"13\" fill=\"#1f77b4\">theory slope {t:.2}</text>\n",
            legend_y + 16.0
        )),
        None => svg.push_str(&format!(
            "<text x=\"{legend_x:.2}\" y=\"{:.2}\" font-family=\"monospace\" \
             font-size=\"13\" fill=\"#1f77b4\">no theoretical rate available</text>\n",
            legend_y + 16.0
        )),
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Writes the SVG to a file.
pub fn write_svg(report: &RateFitReport, path: &std::path::Path) -> Result<()> {
    let body = rate_fit_svg(report)?;
    std::fs::write(path, body).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}
