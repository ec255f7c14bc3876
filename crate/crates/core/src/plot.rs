//! SVG line plots of sweep results: mean SI-SDR improvement per variant with
//! shaded 95% confidence bands.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::experiment::{read_csv, summarize, ResultRecord, SummaryCell};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 36.0;
const MARGIN_B: f64 = 52.0;

const PALETTE: [&str; 6] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
];

/// Render sweep CSV results into one SVG per sweep kind found in the file.
/// Returns the written paths.
pub fn emit_plots(csv_path: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let records = read_csv(csv_path)?;
    if records.is_empty() {
        return Err(Error::EmptyResults);
    }
    let mut sweeps: Vec<String> = Vec::new();
    for r in &records {
        if !sweeps.contains(&r.sweep) {
            sweeps.push(r.sweep.clone());
        }
    }
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for sweep in sweeps {
        let subset: Vec<ResultRecord> = records
            .iter()
            .filter(|r| r.sweep == sweep)
            .cloned()
            .collect();
        let cells = summarize(&subset);
        if cells.is_empty() {
            return Err(Error::EmptyResults);
        }
        let svg = render_sweep_svg(&sweep, &cells);
        let path = out_dir.join(format!("{sweep}.svg"));
        std::fs::write(&path, svg)?;
        written.push(path);
    }
    Ok(written)
}

fn axis_label(sweep: &str) -> &'static str {
    match sweep {
        "isnr" | "recursive_smoke" => "interferer SNR [dB]",
        "shifts_c" => "frequency shifts C",
        "mics_m" => "microphones M",
        "f0_bias" => "fundamental bias [%]",
        _ => "sweep value",
    }
}

/// Build the SVG document for one sweep: one polyline per variant plus a
/// translucent confidence band.
pub fn render_sweep_svg(sweep: &str, cells: &[SummaryCell]) -> String {
    let mut variants: Vec<String> = Vec::new();
    for c in cells {
        if !variants.contains(&c.variant) {
            variants.push(c.variant.clone());
        }
    }
    let mut xs: Vec<f64> = cells.iter().map(|c| c.value).collect();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs.dedup();
    let (x_min, x_max) = (xs[0], *xs.last().unwrap());
    let x_span = if (x_max - x_min).abs() < 1e-12 {
        1.0
    } else {
        x_max - x_min
    };
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for c in cells {
        let ci = if c.ci95.is_finite() { c.ci95 } else { 0.0 };
        y_min = y_min.min(c.mean - ci);
        y_max = y_max.max(c.mean + ci);
    }
    let pad = 0.08 * (y_max - y_min).max(1.0);
    y_min -= pad;
    y_max += pad;
    let y_span = y_max - y_min;

    let px = |v: f64| MARGIN_L + (v - x_min) / x_span * (WIDTH - MARGIN_L - MARGIN_R);
    let py = |v: f64| HEIGHT - MARGIN_B - (v - y_min) / y_span * (HEIGHT - MARGIN_T - MARGIN_B);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"20\" font-family=\"sans-serif\" font-size=\"15\" text-anchor=\"middle\">SI-SDR improvement vs {}</text>\n",
        (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
        sweep
    ));

    // axes
    svg.push_str(&format!(
        "<line x1=\"{MARGIN_L}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        HEIGHT - MARGIN_B,
        WIDTH - MARGIN_R,
        HEIGHT - MARGIN_B
    ));
    svg.push_str(&format!(
        "<line x1=\"{MARGIN_L}\" y1=\"{MARGIN_T}\" x2=\"{MARGIN_L}\" y2=\"{}\" stroke=\"black\"/>\n",
        HEIGHT - MARGIN_B
    ));
    for &x in &xs {
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{x}</text>\n",
            px(x),
            HEIGHT - MARGIN_B + 16.0
        ));
    }
    let y_ticks = 6;
    for t in 0..=y_ticks {
        let v = y_min + y_span * t as f64 / y_ticks as f64;
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{v:.1}</text>\n",
            MARGIN_L - 6.0,
            py(v) + 4.0
        ));
        svg.push_str(&format!(
            "<line x1=\"{MARGIN_L}\" y1=\"{0:.1}\" x2=\"{1}\" y2=\"{0:.1}\" stroke=\"#dddddd\"/>\n",
            py(v),
            WIDTH - MARGIN_R
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
        (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
        HEIGHT - 14.0,
        axis_label(sweep)
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">improvement [dB]</text>\n",
        (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
        (MARGIN_T + HEIGHT - MARGIN_B) / 2.0
    ));

    for (vi, variant) in variants.iter().enumerate() {
        let color = PALETTE[vi % PALETTE.len()];
        let mut points: Vec<(f64, f64, f64)> = cells
            .iter()
            .filter(|c| &c.variant == variant)
            .map(|c| (c.value, c.mean, if c.ci95.is_finite() { c.ci95 } else { 0.0 }))
            .collect();
        points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        // confidence band: only drawable with at least two points
        if points.len() > 1 && points.iter().any(|p| p.2 > 0.0) {
            let mut band = String::from("<polygon points=\"");
            for (x, m, ci) in &points {
                band.push_str(&format!("{:.1},{:.1} ", px(*x), py(m + ci)));
            }
            for (x, m, ci) in points.iter().rev() {
                band.push_str(&format!("{:.1},{:.1} ", px(*x), py(m - ci)));
            }
            band.push_str(&format!("\" fill=\"{color}\" opacity=\"0.15\"/>\n"));
            svg.push_str(&band);
        }
        let mut line = String::from("<polyline fill=\"none\" points=\"");
        for (x, m, _) in &points {
            line.push_str(&format!("{:.1},{:.1} ", px(*x), py(*m)));
        }
        line.push_str(&format!("\" stroke=\"{color}\" stroke-width=\"2\"/>\n"));
        svg.push_str(&line);
        for (x, m, _) in &points {
            svg.push_str(&format!(
                "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"3\" fill=\"{color}\"/>\n",
                px(*x),
                py(*m)
            ));
        }
        // legend
        let ly = MARGIN_T + 18.0 * vi as f64;
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            WIDTH - MARGIN_R + 12.0,
            WIDTH - MARGIN_R + 36.0
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\">{variant}</text>\n",
            WIDTH - MARGIN_R + 42.0,
            ly + 4.0
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
