use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

use super::csv::write_atomic;
use super::run::Row;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// A named loss curve.
pub struct Series<'a> {
    pub label: &'a str,
    pub rows: &'a [Row],
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Training loss against step, log-scaled on the y axis when every value is
/// positive.
pub fn render_svg(series: &[Series]) -> Result<String> {
    let points: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.rows.iter().map(|r| (r.step as f64, r.loss)))
        .filter(|(_, y)| y.is_finite())
        .collect();
    if points.is_empty() {
        return Err(Error::Parameter("nothing to plot".into()));
    }
    let log_y = points.iter().all(|&(_, y)| y > 0.0);
    let ty = |y: f64| if log_y { y.log10() } else { y };
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in &points {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(ty(y));
        y1 = y1.max(ty(y));
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y1 = y0 + 1.0;
    }
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (ty(y) - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    let w = |svg: &mut String, s: String| svg.push_str(&s);
    w(
        &mut svg,
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
             viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">\n"
        ),
    );
    w(&mut svg, format!("<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"));
    let (l, r, b, t) = (MARGIN, WIDTH - MARGIN, HEIGHT - MARGIN, MARGIN);
    w(
        &mut svg,
        format!("<path d=\"M{l} {t} L{l} {b} L{r} {b}\" stroke=\"black\" fill=\"none\"/>\n"),
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        let label = if log_y { format!("1e{yv:.1}") } else { format!("{yv:.3}") };
        let (x, y) = (l + f * (r - l), b - f * (b - t));
        let _ = writeln!(svg, "<text x=\"{x:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{xv:.0}</text>", b + 18.0);
        let _ = writeln!(svg, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{label}</text>", l - 6.0, y + 4.0);
    }
    let _ = writeln!(
        svg,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">step</text>",
        WIDTH / 2.0,
        HEIGHT - 16.0
    );
    let _ = writeln!(
        svg,
        "<text x=\"16\" y=\"{:.1}\" transform=\"rotate(-90 16 {:.1})\" text-anchor=\"middle\">{}</text>",
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        if log_y { "loss (log)" } else { "loss" }
    );
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut d = String::new();
        for row in s.rows.iter().filter(|r| r.loss.is_finite() && (!log_y || r.loss > 0.0)) {
            let cmd = if d.is_empty() { 'M' } else { 'L' };
            let _ = write!(d, "{cmd}{:.2} {:.2} ", px(row.step as f64), py(row.loss));
        }
        let _ = writeln!(
            svg,
            "<path d=\"{}\" stroke=\"{color}\" stroke-width=\"1.5\" fill=\"none\"/>",
            d.trim_end()
        );
        let ly = t + 16.0 * i as f64;
        let _ = writeln!(
            svg,
            "<line x1=\"{:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{color}\" stroke-width=\"2\"/>",
            r - 150.0,
            r - 130.0
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\">{}</text>",
            r - 124.0,
            ly + 4.0,
            escape(s.label)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn emit_plot(series: &[Series], path: &Path) -> Result<()> {
    write_atomic(path, render_svg(series)?.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_one_path_per_series() {
        let rows: Vec<Row> = (1..=5)
            .map(|s| Row {
                step: s,
                loss: 1.0 / s as f64,
                eval_loss: 1.0,
                lr: 0.1,
                unclipped_frac: 1.0,
                h_norm: 0.0,
                grad_norm: 0.0,
                grad_clip_triggered: false,
            })
            .collect();
        let svg = render_svg(&[
            Series { label: "a<b", rows: &rows },
            Series { label: "c", rows: &rows[1..] },
        ])
        .unwrap();
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<path d=\"M").count() - 1, 2);
        assert!(svg.contains("a&lt;b"));
        assert!(render_svg(&[]).is_err());
    }
}
