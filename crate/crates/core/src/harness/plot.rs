//! Self-rendered SVG charts of run logs.
//!
//! Every chart uses a plot area of `PLOT_W x PLOT_H` pixels whose top-left
//! corner sits at `(MARGIN_LEFT, MARGIN_TOP)`. A data point `(x, y)` maps to
//!
//! ```text
//! px = MARGIN_LEFT + (x - xmin) / (xmax - xmin) * PLOT_W
//! py = MARGIN_TOP + (1 - (y - ymin) / (ymax - ymin)) * PLOT_H
//! ```
//!
//! where the ranges are the data extents (widened by ±0.5 when degenerate,
//! `[0, 1]` when there is no data). Coordinates are written with two
//! decimals.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::logs::{Table, EVAL_LOG, TRAIN_LOG};
use crate::error::Result;

pub const MARGIN_LEFT: f64 = 70.0;
pub const MARGIN_TOP: f64 = 40.0;
pub const PLOT_W: f64 = 560.0;
pub const PLOT_H: f64 = 320.0;
const WIDTH: f64 = MARGIN_LEFT + PLOT_W + 160.0;
const HEIGHT: f64 = MARGIN_TOP + PLOT_H + 50.0;
/// Long training logs are averaged into at most this many bins.
pub const MAX_POINTS: usize = 400;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
}

fn widen(lo: f64, hi: f64) -> (f64, f64) {
    if !lo.is_finite() || !hi.is_finite() {
        (0.0, 1.0)
    } else if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

impl Frame {
    pub fn fit(xs: impl IntoIterator<Item = f64>, ys: impl IntoIterator<Item = f64>) -> Self {
        let (mut xmin, mut xmax) = (f64::INFINITY, f64::NEG_INFINITY);
        for x in xs.into_iter().filter(|v| v.is_finite()) {
            xmin = xmin.min(x);
            xmax = xmax.max(x);
        }
        let (mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY);
        for y in ys.into_iter().filter(|v| v.is_finite()) {
            ymin = ymin.min(y);
            ymax = ymax.max(y);
        }
        let (xmin, xmax) = widen(xmin, xmax);
        let (ymin, ymax) = widen(ymin, ymax);
        Self { xmin, xmax, ymin, ymax }
    }

    pub fn map(&self, x: f64, y: f64) -> (f64, f64) {
        (
            MARGIN_LEFT + (x - self.xmin) / (self.xmax - self.xmin) * PLOT_W,
            MARGIN_TOP + (1.0 - (y - self.ymin) / (self.ymax - self.ymin)) * PLOT_H,
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Optional `(x, lo, hi)` band drawn under the line.
    pub band: Vec<(f64, f64, f64)>,
}

fn header(title: &str, xlabel: &str, ylabel: &str, frame: &Frame) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        MARGIN_LEFT + PLOT_W / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<rect class="axes" x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{PLOT_W}" height="{PLOT_H}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let fx = i as f64 / 4.0;
        let x = frame.xmin + fx * (frame.xmax - frame.xmin);
        let y = frame.ymin + fx * (frame.ymax - frame.ymin);
        let (px, _) = frame.map(x, frame.ymin);
        let (_, py) = frame.map(frame.xmin, y);
        let _ = writeln!(
            s,
            r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            MARGIN_TOP + PLOT_H + 16.0,
            tick(x)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            MARGIN_LEFT - 6.0,
            py + 4.0,
            tick(y)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        MARGIN_LEFT + PLOT_W / 2.0,
        HEIGHT - 10.0,
        escape(xlabel)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        MARGIN_TOP + PLOT_H / 2.0,
        MARGIN_TOP + PLOT_H / 2.0,
        escape(ylabel)
    );
    s
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn legend(s: &mut String, i: usize, label: &str) {
    let y = MARGIN_TOP + 14.0 * i as f64 + 6.0;
    let x = MARGIN_LEFT + PLOT_W + 12.0;
    let _ = writeln!(
        s,
        r#"<rect x="{x:.2}" y="{:.2}" width="10" height="10" fill="{}"/><text x="{:.2}" y="{:.2}">{}</text>"#,
        y - 9.0,
        PALETTE[i % PALETTE.len()],
        x + 14.0,
        y,
        escape(label)
    );
}

fn path_d(frame: &Frame, pts: impl Iterator<Item = (f64, f64)>) -> String {
    let mut d = String::new();
    for (i, (x, y)) in pts.enumerate() {
        let (px, py) = frame.map(x, y);
        let _ = write!(d, "{}{px:.2} {py:.2} ", if i == 0 { "M" } else { "L" });
    }
    d.trim_end().to_string()
}

/// Line chart with optional bands.
pub fn line_chart(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let xs = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0).chain(s.band.iter().map(|b| b.0)));
    let ys = series.iter().flat_map(|s| {
        s.points
            .iter()
            .map(|p| p.1)
            .chain(s.band.iter().flat_map(|b| [b.1, b.2]))
    });
    let frame = Frame::fit(xs.collect::<Vec<_>>(), ys.collect::<Vec<_>>());
    let mut s = header(title, xlabel, ylabel, &frame);
    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if !ser.band.is_empty() {
            let upper = ser.band.iter().map(|b| (b.0, b.2));
            let lower = ser.band.iter().rev().map(|b| (b.0, b.1));
            let d = path_d(&frame, upper.chain(lower));
            let _ = writeln!(
                s,
                r#"<path class="band" d="{d} Z" fill="{color}" fill-opacity="0.2" stroke="none"/>"#
            );
        }
        if !ser.points.is_empty() {
            let d = path_d(&frame, ser.points.iter().copied());
            let _ = writeln!(
                s,
                r#"<path class="series" d="{d}" fill="none" stroke="{color}" stroke-width="1.5"/>"#
            );
        }
        legend(&mut s, i, &ser.label);
    }
    s.push_str("</svg>\n");
    s
}

/// Stacked area chart; `layers[k][i]` is layer k's height at `xs[i]`.
pub fn stacked_chart(title: &str, xlabel: &str, xs: &[f64], layers: &[(String, Vec<f64>)]) -> String {
    let mut cum = vec![0.0; xs.len()];
    let mut bands = Vec::new();
    for (_, ys) in layers {
        let lo = cum.clone();
        for (c, y) in cum.iter_mut().zip(ys) {
            *c += y;
        }
        bands.push((lo, cum.clone()));
    }
    let top = cum.iter().cloned().fold(1.0, f64::max);
    let frame = Frame::fit(xs.iter().copied(), [0.0, top]);
    let mut s = header(title, xlabel, "probability", &frame);
    for (i, ((label, _), (lo, hi))) in layers.iter().zip(&bands).enumerate() {
        if !xs.is_empty() {
            let upper = xs.iter().zip(hi).map(|(x, y)| (*x, *y));
            let lower = xs.iter().zip(lo).rev().map(|(x, y)| (*x, *y));
            let d = path_d(&frame, upper.chain(lower));
            let _ = writeln!(
                s,
                r#"<path class="layer" d="{d} Z" fill="{}" stroke="none"/>"#,
                PALETTE[i % PALETTE.len()]
            );
        }
        if layers.len() <= 20 {
            legend(&mut s, i, label);
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Column-wise mean and sample standard deviation of equal-length runs.
pub fn band(runs: &[Vec<f64>]) -> Vec<(f64, f64)> {
    let len = runs.iter().map(Vec::len).min().unwrap_or(0);
    let n = runs.len() as f64;
    (0..len)
        .map(|i| {
            let mean = runs.iter().map(|r| r[i]).sum::<f64>() / n;
            let var = if runs.len() > 1 {
                runs.iter().map(|r| (r[i] - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            (mean, var.sqrt())
        })
        .collect()
}

/// Averages consecutive points into at most `max` bins.
pub fn downsample(xs: &[f64], ys: &[f64], max: usize) -> (Vec<f64>, Vec<f64>) {
    if xs.len() <= max {
        return (xs.to_vec(), ys.to_vec());
    }
    let per = xs.len().div_ceil(max);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    (
        xs.chunks(per).map(mean).collect(),
        ys.chunks(per).map(mean).collect(),
    )
}

fn read_or_empty(path: &Path) -> Result<Option<Table>> {
    if !path.exists() {
        log::warn!("{} not found; plotting empty axes", path.display());
        return Ok(None);
    }
    let t = Table::read(path)?;
    Ok(if t.headers.is_empty() { None } else { Some(t) })
}

fn numeric(t: &Table, col: usize) -> Result<Vec<f64>> {
    (0..t.rows.len())
        .map(|r| Ok(t.f64_at(r, col)?.unwrap_or(f64::NAN)))
        .collect()
}

fn write_svg(out: &Path, name: &str, svg: String, written: &mut Vec<PathBuf>) -> Result<()> {
    let p = out.join(name);
    fs::write(&p, svg)?;
    written.push(p);
    Ok(())
}

/// Policy, loss, entropy and complexity charts for one run directory.
pub fn plot_run(dir: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out)?;
    let mut written = Vec::new();
    let xlabel = "cumulative input steps";

    let train = read_or_empty(&dir.join(TRAIN_LOG))?;
    let (mut xs, mut layers, mut entropy) = (Vec::new(), Vec::new(), Vec::new());
    if let Some(t) = &train {
        let x = numeric(t, t.require_column("cum_input_steps")?)?;
        for (k, c) in t.numbered_columns("pi_").into_iter().enumerate() {
            let (dx, dy) = downsample(&x, &numeric(t, c)?, MAX_POINTS);
            xs = dx;
            layers.push((format!("task {}", k + 1), dy));
        }
        let (dx, dy) = downsample(&x, &numeric(t, t.require_column("policy_entropy")?)?, MAX_POINTS);
        if xs.is_empty() {
            xs = dx.clone();
        }
        entropy = dx.into_iter().zip(dy).collect();
    }
    write_svg(out, "policy.svg", stacked_chart("Syllabus", xlabel, &xs, &layers), &mut written)?;
    let ent = Series {
        label: "policy entropy".into(),
        points: entropy,
        band: Vec::new(),
    };
    write_svg(out, "entropy.svg", line_chart("Policy entropy", xlabel, "nats", &[ent]), &mut written)?;

    let eval = read_or_empty(&dir.join(EVAL_LOG))?;
    let mut losses = Vec::new();
    let mut complexity = Vec::new();
    if let Some(t) = &eval {
        let x = numeric(t, t.require_column("cum_input_steps")?)?;
        for (k, c) in t.numbered_columns("loss_").into_iter().enumerate() {
            let pts: Vec<(f64, f64)> = x
                .iter()
                .zip(numeric(t, c)?)
                .filter(|(_, y)| y.is_finite())
                .map(|(x, y)| (*x, y))
                .collect();
            if !pts.is_empty() {
                losses.push(Series {
                    label: format!("task {}", k + 1),
                    points: pts,
                    band: Vec::new(),
                });
            }
        }
        if let Some(c) = t.column("complexity") {
            complexity = x
                .iter()
                .zip(numeric(t, c)?)
                .filter(|(_, y)| y.is_finite())
                .map(|(x, y)| (*x, y))
                .collect();
        }
    }
    write_svg(
        out,
        "loss.svg",
        line_chart("Per-task loss (per output)", xlabel, "nats", &losses),
        &mut written,
    )?;
    if !complexity.is_empty() {
        let s = Series {
            label: "KL".into(),
            points: complexity,
            band: Vec::new(),
        };
        write_svg(out, "complexity.svg", line_chart("Complexity", xlabel, "nats", &[s]), &mut written)?;
    }
    Ok(written)
}

/// Mean ± std bands of target and multi-task loss over several runs,
/// aligned by evaluation row.
pub fn plot_bands(dirs: &[PathBuf], out: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out)?;
    let mut written = Vec::new();
    let mut series = Vec::new();
    for metric in ["L_TT", "L_MT"] {
        let mut xs_runs = Vec::new();
        let mut ys_runs = Vec::new();
        for d in dirs {
            if let Some(t) = read_or_empty(&d.join(EVAL_LOG))? {
                if let Some(c) = t.column(metric) {
                    let ys = numeric(&t, c)?;
                    if ys.iter().all(|y| y.is_finite()) {
                        xs_runs.push(numeric(&t, t.require_column("cum_input_steps")?)?);
                        ys_runs.push(ys);
                    }
                }
            }
        }
        if ys_runs.is_empty() {
            continue;
        }
        let xs: Vec<f64> = band(&xs_runs).into_iter().map(|b| b.0).collect();
        let stats = band(&ys_runs);
        series.push(Series {
            label: format!("{metric} (n={})", ys_runs.len()),
            points: xs.iter().zip(&stats).map(|(x, s)| (*x, s.0)).collect(),
            band: xs.iter().zip(&stats).map(|(x, s)| (*x, s.0 - s.1, s.0 + s.1)).collect(),
        });
    }
    write_svg(
        out,
        "bands.svg",
        line_chart("Loss across runs (mean ± std)", "cumulative input steps", "nats", &series),
        &mut written,
    )?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paths(svg: &str, class: &str) -> Vec<Vec<(f64, f64)>> {
        let marker = format!(r#"class="{class}" d=""#);
        svg.match_indices(&marker)
            .map(|(i, _)| {
                let rest = &svg[i + marker.len()..];
                let d = &rest[..rest.find('"').unwrap()];
                let nums: Vec<f64> = d
                    .split(|c: char| c == 'M' || c == 'L' || c == 'Z' || c.is_whitespace())
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse().unwrap())
                    .collect();
                nums.chunks(2).map(|c| (c[0], c[1])).collect()
            })
            .collect()
    }

    #[test]
    fn empty_chart_has_axes_only() {
        let svg = line_chart("t", "x", "y", &[]);
        assert!(svg.contains(r#"class="axes""#));
        assert!(paths(&svg, "series").is_empty());
    }

    #[test]
    fn coordinates_follow_the_affine_map() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join(EVAL_LOG),
            "round,cum_input_steps,loss_1,loss_2,L_MT,L_TT,complexity\n\
             0,0,2.0,4.0,3.0,4.0,\n\
             10,100,1.0,3.0,2.0,3.0,\n\
             20,200,0.5,1.0,0.75,1.0,\n",
        )
        .unwrap();
        plot_run(dir.path(), dir.path()).unwrap();
        let svg = fs::read_to_string(dir.path().join("loss.svg")).unwrap();
        let got = paths(&svg, "series");
        assert_eq!(got.len(), 2);
        let frame = Frame {
            xmin: 0.0,
            xmax: 200.0,
            ymin: 0.5,
            ymax: 4.0,
        };
        let data = [[(0.0, 2.0), (100.0, 1.0), (200.0, 0.5)], [(0.0, 4.0), (100.0, 3.0), (200.0, 1.0)]];
        for (series, pts) in got.iter().zip(data) {
            for (&(px, py), (x, y)) in series.iter().zip(pts) {
                let (ex, ey) = frame.map(x, y);
                assert!((px - ex).abs() < 0.006 && (py - ey).abs() < 0.006);
            }
        }
        // documented constants: the corners of the data range hit the plot corners
        assert_eq!(frame.map(0.0, 4.0), (MARGIN_LEFT, MARGIN_TOP));
        assert_eq!(frame.map(200.0, 0.5), (MARGIN_LEFT + PLOT_W, MARGIN_TOP + PLOT_H));
    }

    #[test]
    fn band_is_columnwise_mean() {
        let runs: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64, 1.0]).collect();
        let b = band(&runs);
        assert_eq!(b[0].0, 4.5);
        assert_eq!(b[1].0, 9.0);
        assert_eq!(b[2], (1.0, 0.0));
    }

    #[test]
    fn empty_run_directory_plots_empty_axes() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(TRAIN_LOG), "").unwrap();
        let files = plot_run(dir.path(), dir.path()).unwrap();
        assert!(files.iter().any(|f| f.ends_with("policy.svg")));
        assert!(fs::read_to_string(dir.path().join("loss.svg")).unwrap().contains("axes"));
    }

    #[test]
    fn downsampling_averages_bins() {
        let xs: Vec<f64> = (0..10).map(f64::from).collect();
        let (dx, dy) = downsample(&xs, &xs, 5);
        assert_eq!(dx, vec![0.5, 2.5, 4.5, 6.5, 8.5]);
        assert_eq!(dy, dx);
    }
}
