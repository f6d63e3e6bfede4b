//! Minimal SVG line chart for FDR-versus-rejections curves: true FDP plus
//! the four estimates, on shared axes.

use std::path::Path;

use crate::CliError;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;

const SERIES: [(&str, &str); 5] = [
    ("true FDP", "#000000"),
    ("BH", "#d62728"),
    ("BY", "#1f77b4"),
    ("perm", "#2ca02c"),
    ("enull", "#9467bd"),
];

fn polyline(points: &[(f64, f64)], color: &str) -> String {
    let coords: Vec<String> = points.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
    format!(
        "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
        coords.join(" ")
    )
}

/// Renders curves of estimated/true FDR against the number of rejections.
/// Rows are `(k, [true_fdp, bh, by, perm, enull])`; NaN points are skipped.
pub fn write_curve_svg(path: &Path, rows: &[(usize, [f64; 5])]) -> Result<(), CliError> {
    if rows.is_empty() {
        return Err(CliError::Config("no curve rows to plot".into()));
    }
    let k_max = rows.iter().map(|(k, _)| *k).max().unwrap() as f64;
    let y_max = rows
        .iter()
        .flat_map(|(_, v)| v.iter())
        .filter(|v| v.is_finite())
        .fold(0.0f64, |a, &b| a.max(b))
        .max(1e-6)
        .min(1.0)
        .max(0.1);
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let to_x = |k: f64| MARGIN + (k / k_max) * plot_w;
    let to_y = |v: f64| HEIGHT - MARGIN - (v / y_max).min(1.0) * plot_h;

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n<line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n",
        m = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN,
        t = MARGIN
    ));
    // Axis labels and ticks.
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"14\" text-anchor=\"middle\">number of rejections</text>\n",
        WIDTH / 2.0,
        HEIGHT - 14.0
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{}\" font-size=\"14\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">FDR / FDP</text>\n",
        HEIGHT / 2.0,
        HEIGHT / 2.0
    ));
    for frac in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let kx = frac * k_max;
        let x = to_x(kx);
        svg.push_str(&format!(
            "<text x=\"{x:.1}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{:.0}</text>\n",
            HEIGHT - MARGIN + 18.0,
            kx
        ));
        let vy = frac * y_max;
        let y = to_y(vy);
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{y:.1}\" font-size=\"11\" text-anchor=\"end\">{vy:.2}</text>\n",
            MARGIN - 6.0
        ));
    }
    // Series.
    for (idx, (label, color)) in SERIES.iter().enumerate() {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|(_, v)| v[idx].is_finite())
            .map(|(k, v)| (to_x(*k as f64), to_y(v[idx])))
            .collect();
        if !pts.is_empty() {
            svg.push_str(&polyline(&pts, color));
        }
        // Legend entry.
        let ly = MARGIN + 18.0 * idx as f64;
        svg.push_str(&format!(
            "<line x1=\"{x0}\" y1=\"{ly}\" x2=\"{x1}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/>\n<text x=\"{xt}\" y=\"{yt}\" font-size=\"12\">{label}</text>\n",
            x0 = WIDTH - MARGIN - 110.0,
            x1 = WIDTH - MARGIN - 85.0,
            xt = WIDTH - MARGIN - 78.0,
            yt = ly + 4.0
        ));
    }
    svg.push_str("</svg>\n");
    std::fs::write(path, svg).map_err(CliError::from_io(path))
}
