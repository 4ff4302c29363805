//! SVG rendering of run artifacts: level-H1 curves (full and zoomed),
//! stacked sample towers, the prior trace, the scaled-image ensemble, the
//! observation paths, and one chart per diagnostics kind.
//!
//! Everything is rendered to strings first and written in one pass, so a
//! failing figure never leaves a partial SVG behind.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use blacknoise::gridfn::GridFunction;

use crate::config::RunMode;
use crate::csvio::{self, H1Row};
use crate::manifest::RunManifest;

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

struct Series {
    label: String,
    color: &'static str,
    points: Vec<(f64, f64)>,
    error_bars: Option<Vec<f64>>,
}

impl Series {
    fn new(label: impl Into<String>, index: usize, points: Vec<(f64, f64)>) -> Self {
        Series {
            label: label.into(),
            color: PALETTE[index % PALETTE.len()],
            points,
            error_bars: None,
        }
    }
}

const W: f64 = 800.0;
const H: f64 = 500.0;
const ML: f64 = 70.0;
const MR: f64 = 25.0;
const MT: f64 = 40.0;
const MB: f64 = 55.0;

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    let s = if a >= 1000.0 || a < 0.001 {
        format!("{v:.2e}")
    } else if a >= 10.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.3}")
    };
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn render_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
    y_clip: Option<(f64, f64)>,
) -> Result<String> {
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for s in series {
        for &(x, y) in &s.points {
            xs.push(x);
            ys.push(y);
        }
    }
    if xs.is_empty() {
        bail!("chart {title:?} has no data");
    }
    let (mut x0, mut x1) = bounds(&xs);
    let (mut y0, mut y1) = match y_clip {
        Some((a, b)) => (a, b),
        None => bounds(&ys),
    };
    if x1 == x0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 == y0 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let px = |x: f64| ML + (x - x0) / (x1 - x0) * (W - ML - MR);
    let py = |y: f64| H - MB - (y - y0) / (y1 - y0) * (H - MT - MB);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"##
    );
    let _ = writeln!(svg, r##"<rect width="{W}" height="{H}" fill="white"/>"##);
    let _ = writeln!(
        svg,
        r##"<text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{title}</text>"##,
        W / 2.0
    );
    // Axes box and ticks.
    let _ = writeln!(
        svg,
        r##"<rect x="{ML}" y="{MT}" width="{}" height="{}" fill="none" stroke="#333"/>"##,
        W - ML - MR,
        H - MT - MB
    );
    for i in 0..=5 {
        let fx = x0 + (x1 - x0) * i as f64 / 5.0;
        let fy = y0 + (y1 - y0) * i as f64 / 5.0;
        let _ = writeln!(
            svg,
            r##"<line x1="{0}" y1="{1}" x2="{0}" y2="{2}" stroke="#333"/><text x="{0}" y="{3}" font-family="sans-serif" font-size="11" text-anchor="middle">{4}</text>"##,
            px(fx),
            H - MB,
            H - MB + 5.0,
            H - MB + 18.0,
            fmt_tick(fx)
        );
        let _ = writeln!(
            svg,
            r##"<line x1="{1}" y1="{0}" x2="{2}" y2="{0}" stroke="#333"/><text x="{3}" y="{4}" font-family="sans-serif" font-size="11" text-anchor="end">{5}</text>"##,
            py(fy),
            ML - 5.0,
            ML,
            ML - 8.0,
            py(fy) + 4.0,
            fmt_tick(fy)
        );
    }
    let _ = writeln!(
        svg,
        r##"<text x="{}" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle">{x_label}</text>"##,
        ML + (W - ML - MR) / 2.0,
        H - 12.0
    );
    let _ = writeln!(
        svg,
        r##"<text x="16" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 16 {})">{y_label}</text>"##,
        MT + (H - MT - MB) / 2.0,
        MT + (H - MT - MB) / 2.0
    );

    let clamp_y = |y: f64| y.clamp(y0.min(y1), y0.max(y1));
    for (idx, s) in series.iter().enumerate() {
        let mut path = String::new();
        for (i, &(x, y)) in s.points.iter().enumerate() {
            let _ = write!(
                path,
                "{}{:.2},{:.2} ",
                if i == 0 { "" } else { "" },
                px(x),
                py(clamp_y(y))
            );
        }
        let _ = writeln!(
            svg,
            r##"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"##,
            path.trim_end(),
            s.color
        );
        if let Some(errs) = &s.error_bars {
            for (&(x, y), &e) in s.points.iter().zip(errs) {
                let _ = writeln!(
                    svg,
                    r##"<line x1="{0}" y1="{1}" x2="{0}" y2="{2}" stroke="{3}" stroke-width="1"/>"##,
                    px(x),
                    py(clamp_y(y - e)),
                    py(clamp_y(y + e)),
                    s.color
                );
            }
        }
        // Legend entry.
        let ly = MT + 16.0 + 16.0 * idx as f64;
        let _ = writeln!(
            svg,
            r##"<line x1="{0}" y1="{ly}" x2="{1}" y2="{ly}" stroke="{2}" stroke-width="2"/><text x="{3}" y="{4}" font-family="sans-serif" font-size="12">{5}</text>"##,
            W - MR - 150.0,
            W - MR - 125.0,
            s.color,
            W - MR - 118.0,
            ly + 4.0,
            s.label
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Stacked bands, one per labeled grid function, top to bottom.
fn render_stack(title: &str, levels: &[(String, &GridFunction)]) -> Result<String> {
    if levels.is_empty() {
        bail!("stack {title:?} has no data");
    }
    let band_h = 90.0;
    let height = MT + band_h * levels.len() as f64 + MB;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{height}" viewBox="0 0 {W} {height}">"##
    );
    let _ = writeln!(svg, r##"<rect width="{W}" height="{height}" fill="white"/>"##);
    let _ = writeln!(
        svg,
        r##"<text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{title}</text>"##,
        W / 2.0
    );
    for (i, (label, f)) in levels.iter().enumerate() {
        let top = MT + band_h * i as f64;
        let (mut v0, mut v1) = bounds(f.values());
        if v1 == v0 {
            v0 -= 1.0;
            v1 += 1.0;
        }
        let dom = f.domain();
        let px = |x: f64| ML + (x - dom.lo()) / dom.length() * (W - ML - MR);
        let py = |v: f64| top + band_h - 8.0 - (v - v0) / (v1 - v0) * (band_h - 20.0);
        let mut path = String::new();
        let n = f.n();
        let stride = (n / 2000).max(1);
        for i in (0..n).step_by(stride) {
            let _ = write!(path, "{:.2},{:.2} ", px(f.abscissa(i)), py(f.values()[i]));
        }
        let _ = writeln!(
            svg,
            r##"<rect x="{ML}" y="{top}" width="{}" height="{band_h}" fill="none" stroke="#ccc"/>"##,
            W - ML - MR
        );
        let _ = writeln!(
            svg,
            r##"<polyline points="{}" fill="none" stroke="{}" stroke-width="1"/>"##,
            path.trim_end(),
            PALETTE[i % PALETTE.len()]
        );
        let _ = writeln!(
            svg,
            r##"<text x="{}" y="{}" font-family="sans-serif" font-size="12">{label}</text>"##,
            ML + 6.0,
            top + 16.0
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn bounds(vals: &[f64]) -> (f64, f64) {
    vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    })
}

fn overlay_chart(title: &str, x_label: &str, fs: &[(String, GridFunction)]) -> Result<String> {
    let series: Vec<Series> = fs
        .iter()
        .enumerate()
        .map(|(i, (label, f))| {
            let n = f.n();
            let stride = (n / 2000).max(1);
            let points = (0..n)
                .step_by(stride)
                .map(|j| (f.abscissa(j), f.values()[j]))
                .collect();
            Series::new(label.clone(), i, points)
        })
        .collect();
    render_chart(title, x_label, "value", &series, None)
}

/// Splits h1 rows into blocks at every level reset.
fn h1_blocks(rows: &[H1Row]) -> Vec<Vec<H1Row>> {
    let mut blocks: Vec<Vec<H1Row>> = Vec::new();
    for row in rows {
        let start_new = blocks
            .last()
            .and_then(|b| b.last())
            .map(|prev| row.k <= prev.k)
            .unwrap_or(true);
        if start_new {
            blocks.push(Vec::new());
        }
        blocks.last_mut().expect("nonempty").push(row.clone());
    }
    blocks
}

fn h1_series(rows: &[H1Row], m_blocks: &[f64]) -> Vec<Series> {
    h1_blocks(rows)
        .into_iter()
        .enumerate()
        .map(|(i, block)| {
            let label = m_blocks
                .get(i)
                .map(|m| format!("M = {m}"))
                .unwrap_or_else(|| format!("block {i}"));
            let mut s = Series::new(
                label,
                i,
                block.iter().map(|r| (r.k as f64, r.estimate)).collect(),
            );
            s.error_bars = Some(block.iter().map(|r| r.std_error).collect());
            s
        })
        .collect()
}

fn sorted_subdirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    Ok(dirs)
}

fn require(path: &Path) -> Result<&Path> {
    if !path.exists() {
        bail!("missing CSV: {}", path.display());
    }
    Ok(path)
}

fn sanitize(kind: &str) -> String {
    kind.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

/// Renders every figure the run's mode calls for into
/// `<run_dir>/plots/*.svg` and returns the file list.
pub fn plot_run(run_dir: &Path) -> Result<Vec<PathBuf>> {
    let manifest = RunManifest::load(&run_dir.join("manifest.json"))?;
    let mut figures: Vec<(PathBuf, String)> = Vec::new();
    let plots = run_dir.join("plots");

    // Diagnostics charts, one per kind, for every mode.
    let diag = csvio::read_diagnostics(require(&run_dir.join("diagnostics.csv"))?)?;
    let mut kinds: Vec<String> = diag.iter().map(|r| r.kind.clone()).collect();
    kinds.dedup();
    kinds.sort();
    kinds.dedup();
    for kind in kinds {
        let rows: Vec<_> = diag.iter().filter(|r| r.kind == kind).collect();
        let mut emp = Series::new(
            "empirical",
            0,
            rows.iter().map(|r| (r.abscissa, r.empirical)).collect(),
        );
        emp.error_bars = None;
        let target = Series::new(
            "target",
            1,
            rows.iter().map(|r| (r.abscissa, r.target)).collect(),
        );
        let svg = render_chart(&kind, "abscissa", &kind, &[emp, target], None)?;
        figures.push((plots.join(format!("diag_{}.svg", sanitize(&kind))), svg));
    }

    match manifest.config.mode {
        RunMode::Black | RunMode::White => {
            let rows = csvio::read_h1(require(&run_dir.join("h1.csv"))?)?;
            if rows.is_empty() {
                bail!("h1.csv at {} has no rows to plot", run_dir.display());
            }
            let series = h1_series(&rows, &manifest.m_blocks);
            figures.push((
                plots.join("h1.svg"),
                render_chart("H1 of the unit-interval integral", "level k", "H1", &series, None)?,
            ));
            let max_est = rows.iter().map(|r| r.estimate).fold(0.0f64, f64::max);
            let series = h1_series(&rows, &manifest.m_blocks);
            figures.push((
                plots.join("h1_zoom.svg"),
                render_chart(
                    "H1 of the unit-interval integral (zoomed)",
                    "level k",
                    "H1",
                    &series,
                    Some((0.0, 0.1 * max_est)),
                )?,
            ));

            let samples_dir = run_dir.join("samples");
            let tower_dirs = sorted_subdirs(&samples_dir)?;
            let Some(first_tower) = tower_dirs.first() else {
                bail!("samples dir {} holds no towers", samples_dir.display());
            };
            let mut levels: Vec<(String, GridFunction)> = Vec::new();
            for k in (1..=64u32).rev() {
                let path = first_tower.join(format!("omega_{k}.csv"));
                if path.exists() {
                    levels.push((format!("omega {k}"), GridFunction::read_csv(&path)?));
                }
            }
            if levels.is_empty() {
                bail!("tower dir {} holds no level CSVs", first_tower.display());
            }
            let refs: Vec<(String, &GridFunction)> =
                levels.iter().map(|(l, f)| (l.clone(), f)).collect();
            figures.push((
                plots.join("towers.svg"),
                render_stack("Sample tower, top level downward", &refs)?,
            ));
        }
        RunMode::Diagnostics => {}
    }

    if manifest.config.mode == RunMode::Black {
        let samples_dir = run_dir.join("samples");
        let prior = GridFunction::read_csv(require(&samples_dir.join("prior_xi.csv"))?)?;
        figures.push((
            plots.join("prior_xi.svg"),
            overlay_chart(
                "Prior draw of the top-level field",
                "x",
                &[("prior".to_string(), prior)],
            )?,
        ));

        let mut images: Vec<(String, GridFunction)> = Vec::new();
        for dir in sorted_subdirs(&samples_dir)? {
            let path = dir.join("s_image.csv");
            if path.exists() {
                images.push((
                    dir.file_name().unwrap_or_default().to_string_lossy().to_string(),
                    GridFunction::read_csv(&path)?,
                ));
            }
        }
        if !images.is_empty() {
            figures.push((
                plots.join("s_ensemble.svg"),
                overlay_chart("Scaled images of the bottom field", "x", &images)?,
            ));
        }

        let mut paths: Vec<(String, GridFunction)> = Vec::new();
        for w_id in 0..manifest.config.mixture.n_w.min(12) {
            let path = samples_dir.join(format!("w{w_id}.csv"));
            if path.exists() {
                paths.push((format!("w {w_id}"), GridFunction::read_csv(&path)?));
            }
        }
        if !paths.is_empty() {
            figures.push((
                plots.join("w_paths.svg"),
                overlay_chart("Observation paths", "x", &paths)?,
            ));
        }
    }

    // All figures rendered; only now touch the filesystem.
    std::fs::create_dir_all(&plots)?;
    let mut written = Vec::with_capacity(figures.len());
    for (path, svg) in figures {
        std::fs::write(&path, svg).with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
    }
    Ok(written)
}
