use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::experiment::Algorithm;
use super::sweep::{read_summary, SummaryRow};

pub const METRICS: [&str; 6] = [
    "rmse_m",
    "median_m",
    "failure_rate",
    "support_rate",
    "mean_delta_err",
    "mean_iterations",
];

#[derive(Debug, Clone, PartialEq)]
pub struct PlotFiles {
    pub svg: PathBuf,
    pub dat: PathBuf,
    pub series: usize,
}

fn metric_value(row: &SummaryRow, metric: &str) -> f64 {
    match metric {
        "rmse_m" => row.rmse_m,
        "median_m" => row.median_m,
        "failure_rate" => row.failure_rate,
        "support_rate" => row.support_rate,
        "mean_delta_err" => row.mean_delta_err,
        _ => row.mean_iterations,
    }
}

fn canonical(metric: &str) -> Result<&'static str> {
    let m = match metric {
        "rmse" => "rmse_m",
        "median" => "median_m",
        other => other,
    };
    METRICS
        .iter()
        .copied()
        .find(|x| *x == m)
        .ok_or_else(|| Error::Usage(format!("unknown metric '{metric}' (expected one of {})", METRICS.join(", "))))
}

/// Reads `summary.csv` and writes an SVG figure plus a gnuplot data file next to it.
pub fn emit_plot(summary_csv: &Path, metric: &str, out_path: &Path) -> Result<PlotFiles> {
    let metric = canonical(metric)?;
    let rows = read_summary(summary_csv)?;
    if rows.is_empty() {
        return Err(Error::Usage(format!("{} has no summary rows", summary_csv.display())));
    }
    render(&rows, metric, out_path)
}

struct Series {
    algo: Algorithm,
    points: Vec<(f64, f64)>,
}

pub fn render(rows: &[SummaryRow], metric: &str, out_path: &Path) -> Result<PlotFiles> {
    let metric = canonical(metric)?;
    if rows.is_empty() {
        return Err(Error::Usage("no summary rows to plot".into()));
    }
    let mut xs: Vec<f64> = Vec::new();
    for r in rows {
        if !xs.contains(&r.sweep_value) {
            xs.push(r.sweep_value);
        }
    }
    xs.sort_by(|a, b| a.total_cmp(b));
    let mut series: Vec<Series> = Vec::new();
    for algo in Algorithm::ALL {
        let mut points: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.algo == algo)
            .map(|r| (r.sweep_value, metric_value(r, metric)))
            .collect();
        if points.is_empty() {
            continue;
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        series.push(Series { algo, points });
    }

    let dat = out_path.with_extension("dat");
    let mut text = format!("# {metric} vs {}\n# sweep_value", rows[0].axis.label());
    for s in &series {
        write!(text, " {}", s.algo.name()).ok();
    }
    text.push('\n');
    for &x in &xs {
        write!(text, "{x}").ok();
        for s in &series {
            let y = s.points.iter().find(|p| p.0 == x).map_or(f64::NAN, |p| p.1);
            write!(text, " {y}").ok();
        }
        text.push('\n');
    }
    std::fs::write(&dat, text).map_err(|e| Error::io(&dat, e))?;

    let svg = svg_document(&series, &xs, metric, rows[0].axis.label());
    std::fs::write(out_path, svg).map_err(|e| Error::io(out_path, e))?;
    Ok(PlotFiles {
        svg: out_path.to_path_buf(),
        dat,
        series: series.len(),
    })
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 55.0;

fn color(algo: Algorithm) -> &'static str {
    match algo {
        Algorithm::Jcle => "#1f77b4",
        Algorithm::Pso => "#d62728",
        Algorithm::Ml => "#2ca02c",
        Algorithm::Bcrb => "#000000",
    }
}

fn svg_document(series: &[Series], xs: &[f64], metric: &str, x_label: &str) -> String {
    let ys: Vec<f64> = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.1))
        .filter(|y| y.is_finite())
        .collect();
    let log = metric.ends_with("_m") || metric == "mean_delta_err";
    let log = log && !ys.is_empty() && ys.iter().all(|y| *y > 0.0);
    let (mut lo, mut hi) = ys
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(*y), b.max(*y)));
    if ys.is_empty() {
        (lo, hi) = (0.0, 1.0);
    }
    let (lo, hi) = if log {
        (lo.log10().floor(), hi.log10().ceil().max(lo.log10().floor() + 1.0))
    } else if hi > lo {
        (lo.min(0.0), hi * 1.05)
    } else {
        (lo - 0.5, hi + 0.5)
    };
    let (x0, x1) = match (xs.first(), xs.last()) {
        (Some(a), Some(b)) if b > a => (*a, *b),
        (Some(a), _) => (a - 1.0, a + 1.0),
        _ => (0.0, 1.0),
    };
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| {
        let v = if log { y.log10() } else { y };
        TOP + ph - (v - lo) / (hi - lo) * ph
    };

    let mut s = String::new();
    writeln!(
        s,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">
<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>
<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    )
    .ok();
    for &x in xs {
        let cx = px(x);
        writeln!(
            s,
            r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black"/><text x="{cx:.2}" y="{:.2}" text-anchor="middle">{x}</text>"#,
            TOP + ph,
            TOP + ph + 5.0,
            TOP + ph + 20.0
        )
        .ok();
    }
    let ticks: Vec<(f64, String)> = if log {
        (lo as i32..=hi as i32).map(|e| (10f64.powi(e), format!("1e{e}"))).collect()
    } else {
        (0..=4)
            .map(|i| {
                let v = lo + (hi - lo) * i as f64 / 4.0;
                (v, format!("{v:.3}"))
            })
            .collect()
    };
    for (v, label) in ticks {
        let cy = py(v);
        writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{cy:.2}" x2="{:.2}" y2="{cy:.2}" stroke="#dddddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"##,
            LEFT + pw,
            LEFT - 6.0,
            cy + 4.0
        )
        .ok();
    }
    writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{x_label}</text>
<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{metric}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 12.0,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    )
    .ok();
    for (i, ser) in series.iter().enumerate() {
        let c = color(ser.algo);
        let dash = if ser.algo == Algorithm::Bcrb { r#" stroke-dasharray="6 4""# } else { "" };
        let pts: Vec<String> = ser
            .points
            .iter()
            .filter(|p| p.1.is_finite() && (!log || p.1 > 0.0))
            .map(|p| format!("{:.2},{:.2}", px(p.0), py(p.1)))
            .collect();
        writeln!(
            s,
            r#"<g class="series" id="{}"><polyline fill="none" stroke="{c}" stroke-width="2"{dash} points="{}"/>"#,
            ser.algo.name(),
            pts.join(" ")
        )
        .ok();
        for p in &pts {
            let (x, y) = p.split_once(',').unwrap_or(("0", "0"));
            writeln!(s, r#"<circle cx="{x}" cy="{y}" r="3" fill="{c}"/>"#).ok();
        }
        let ly = TOP + 15.0 + 20.0 * i as f64;
        writeln!(
            s,
            r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{c}" stroke-width="2"{dash}/><text x="{:.2}" y="{:.2}">{}</text></g>"#,
            LEFT + pw + 12.0,
            LEFT + pw + 40.0,
            LEFT + pw + 46.0,
            ly + 4.0,
            ser.algo.name()
        )
        .ok();
    }
    s.push_str("</svg>\n");
    s
}
