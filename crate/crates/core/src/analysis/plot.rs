//! Static SVG figure of mean power with an IQR band per condition, plus a
//! CSV holding exactly the plotted numbers.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{AggregateCurve, AnalysisError};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 450.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlotFiles {
    pub image: PathBuf,
    pub data: PathBuf,
}

/// `fig.svg` stores its numbers in `fig.csv`; an image path that already
/// ends in `.csv` gets `.data.csv` instead.
pub fn data_path_for(image: &Path) -> PathBuf {
    if image.extension().is_some_and(|e| e == "csv") {
        image.with_extension("data.csv")
    } else {
        image.with_extension("csv")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Round step (1, 2 or 5 times a power of ten) giving at most ~`target` ticks.
fn tick_step(span: f64, target: f64) -> f64 {
    let raw = (span / target).max(f64::MIN_POSITIVE);
    let mag = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 5.0, 10.0]
        .into_iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag)
}

fn render_svg(curves: &[(String, AggregateCurve)]) -> String {
    let max_len = curves.iter().map(|(_, c)| c.len()).max().unwrap_or(0);
    let x_max = (max_len.max(2) - 1) as f64;
    let y_max = curves
        .iter()
        .flat_map(|(_, c)| c.q3.iter().chain(&c.mean))
        .fold(0.0f64, |a, &b| a.max(b));
    let y_max = if y_max > 0.0 { y_max * 1.1 } else { 1.0 };
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |i: f64| LEFT + i / x_max * plot_w;
    let sy = |w: f64| TOP + plot_h - w / y_max * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);

    let x_step = tick_step(x_max, 10.0);
    let mut x = 0.0;
    while x <= x_max + 1e-9 {
        let _ = writeln!(
            svg,
            r##"<line x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{2:.2}" stroke="#ddd"/><text x="{0:.2}" y="{3:.2}" text-anchor="middle">{4}</text>"##,
            sx(x),
            TOP,
            TOP + plot_h,
            TOP + plot_h + 18.0,
            x
        );
        x += x_step;
    }
    let y_step = tick_step(y_max, 8.0);
    let mut y = 0.0;
    while y <= y_max + 1e-9 {
        let _ = writeln!(
            svg,
            r##"<line x1="{0:.2}" y1="{1:.2}" x2="{2:.2}" y2="{1:.2}" stroke="#ddd"/><text x="{3:.2}" y="{4:.2}" text-anchor="end">{5}</text>"##,
            LEFT,
            sy(y),
            LEFT + plot_w,
            LEFT - 6.0,
            sy(y) + 4.0,
            (y * 1e6).round() / 1e6
        );
        y += y_step;
    }
    let _ = writeln!(
        svg,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">Time (sample index)</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        svg,
        r#"<text transform="translate(18 {:.2}) rotate(-90)" text-anchor="middle">Power (W)</text>"#,
        TOP + plot_h / 2.0
    );

    for (k, (label, c)) in curves.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        if c.is_empty() {
            continue;
        }
        let mut band: Vec<String> = (0..c.len()).map(|i| format!("{:.2},{:.2}", sx(i as f64), sy(c.q3[i]))).collect();
        band.extend((0..c.len()).rev().map(|i| format!("{:.2},{:.2}", sx(i as f64), sy(c.q1[i]))));
        let _ = writeln!(
            svg,
            r#"<polygon points="{}" fill="{color}" fill-opacity="0.25" stroke="none"/>"#,
            band.join(" ")
        );
        let line: Vec<String> = (0..c.len()).map(|i| format!("{:.2},{:.2}", sx(i as f64), sy(c.mean[i]))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            line.join(" ")
        );
        let ly = TOP + 10.0 + 20.0 * k as f64;
        let lx = LEFT + plot_w + 12.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="3"/><text x="{}" y="{}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn render_data(curves: &[(String, AggregateCurve)]) -> Result<Vec<u8>, AnalysisError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let err = |e: csv::Error| AnalysisError::PlotData(e.to_string());
    w.write_record(["label", "index", "mean", "q1", "q3"]).map_err(err)?;
    for (label, c) in curves {
        for i in 0..c.len() {
            w.write_record([
                label.clone(),
                i.to_string(),
                c.mean[i].to_string(),
                c.q1[i].to_string(),
                c.q3[i].to_string(),
            ])
            .map_err(err)?;
        }
    }
    w.into_inner().map_err(|e| AnalysisError::PlotData(e.to_string()))
}

/// Writes the figure to `path` and its data next to it (see [`data_path_for`]).
pub fn emit_plot(curves: &[(String, AggregateCurve)], path: &Path) -> Result<PlotFiles, AnalysisError> {
    if curves.is_empty() {
        return Err(AnalysisError::NothingToPlot);
    }
    let data = data_path_for(path);
    fs::write(path, render_svg(curves))?;
    fs::write(&data, render_data(curves)?)?;
    Ok(PlotFiles {
        image: path.to_path_buf(),
        data,
    })
}

/// One curve read back from a plot data file: `(label, mean, q1, q3)`.
pub type PlotCurve = (String, Vec<f64>, Vec<f64>, Vec<f64>);

/// Reads a plot data file back, one curve per label in file order.
pub fn read_plot_data(path: &Path) -> Result<Vec<PlotCurve>, AnalysisError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| AnalysisError::PlotData(e.to_string()))?;
    let mut out: Vec<PlotCurve> = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| AnalysisError::PlotData(e.to_string()))?;
        let num = |i: usize| -> Result<f64, AnalysisError> {
            rec[i]
                .parse()
                .map_err(|_| AnalysisError::PlotData(format!("bad number {:?}", &rec[i])))
        };
        let label = rec[0].to_string();
        let index: usize = rec[1]
            .parse()
            .map_err(|_| AnalysisError::PlotData(format!("bad index {:?}", &rec[1])))?;
        if out.last().is_none_or(|c| c.0 != label) {
            out.push((label, Vec::new(), Vec::new(), Vec::new()));
        }
        let cur = out.last_mut().unwrap();
        if index != cur.1.len() {
            return Err(AnalysisError::PlotData(format!("{}: index {index} out of order", cur.0)));
        }
        cur.1.push(num(2)?);
        cur.2.push(num(3)?);
        cur.3.push(num(4)?);
    }
    Ok(out)
}
