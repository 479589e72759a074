//! Median-and-IQR summaries of a result table and their SVG line plots.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use plotters::prelude::*;
use serde::{Deserialize, Serialize};

use crate::experiment::ResultRow;
use crate::stats::quantile;

/// Aggregate over repetitions of one (solver, grid point) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub series: String,
    /// Name of the swept variable on the x axis.
    pub axis: String,
    pub x: String,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub median_iterations: f64,
    pub runs: usize,
}

fn fmt_ratio(r: Option<f64>) -> String {
    r.map(|b| b.to_string()).unwrap_or_default()
}

/// Pick the swept variable: the first of fraction, m, dither and sketch
/// ratio that takes more than one value.
fn axis_of(rows: &[ResultRow]) -> &'static str {
    let distinct = |f: &dyn Fn(&ResultRow) -> String| {
        let mut v: Vec<String> = rows.iter().map(f).collect();
        v.sort();
        v.dedup();
        v.len()
    };
    if distinct(&|r| r.fraction.to_string()) > 1 {
        "fraction"
    } else if distinct(&|r| r.m.to_string()) > 1 {
        "m"
    } else if distinct(&|r| r.dither.clone()) > 1 {
        "dither"
    } else if distinct(&|r| fmt_ratio(r.sketch_ratio)) > 1 {
        "sketch_ratio"
    } else {
        "fraction"
    }
}

fn x_value(r: &ResultRow, axis: &str) -> String {
    match axis {
        "fraction" => r.fraction.to_string(),
        "m" => r.m.to_string(),
        "dither" => r.dither.clone(),
        _ => fmt_ratio(r.sketch_ratio),
    }
}

fn series_of(r: &ResultRow, axis: &str) -> String {
    let mut s = r.solver.clone();
    if axis != "sketch_ratio" {
        if let Some(b) = r.sketch_ratio {
            s.push_str(&format!("@{b}"));
        }
    }
    if axis != "dither" {
        s.push_str(&format!(" {}", r.dither));
    }
    if axis != "m" {
        s.push_str(&format!(" m={}", r.m));
    }
    if axis != "fraction" {
        s.push_str(&format!(" f={}", r.fraction));
    }
    s
}

/// Medians and quartiles of `rel_error` per series and x value, in order of
/// first appearance. Failed runs are skipped.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let axis = axis_of(rows);
    let mut order: Vec<(String, String)> = Vec::new();
    let mut groups: BTreeMap<(String, String), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in rows {
        let (Some(e), Some(it)) = (r.rel_error, r.iterations) else {
            continue;
        };
        let key = (series_of(r, axis), x_value(r, axis));
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        let g = groups.entry(key).or_default();
        g.0.push(e);
        g.1.push(it as f64);
    }
    order
        .into_iter()
        .map(|key| {
            let (errs, its) = &groups[&key];
            SummaryRow {
                series: key.0.clone(),
                axis: axis.to_string(),
                x: key.1.clone(),
                median: quantile(errs, 0.5).expect("non-empty"),
                q1: quantile(errs, 0.25).expect("non-empty"),
                q3: quantile(errs, 0.75).expect("non-empty"),
                median_iterations: quantile(its, 0.5).expect("non-empty"),
                runs: errs.len(),
            }
        })
        .collect()
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| Ok(row?)).collect()
}

/// Write `summary.csv` and `<name>.svg` into `dir`: one line per series,
/// median relative error against the swept variable with IQR bars.
pub fn emit_plots(rows: &[ResultRow], dir: &Path, name: &str) -> Result<Vec<PathBuf>> {
    if rows.is_empty() {
        bail!("empty result table");
    }
    let summary = summarize(rows);
    if summary.is_empty() {
        bail!("no successful runs to plot");
    }
    let csv_path = dir.join("summary.csv");
    write_summary(&csv_path, &summary)?;
    let svg_path = dir.join(format!("{name}.svg"));
    draw(&summary, &svg_path, name)?;
    Ok(vec![csv_path, svg_path])
}

fn draw(summary: &[SummaryRow], path: &Path, title: &str) -> Result<()> {
    let mut xs: Vec<String> = Vec::new();
    for r in summary {
        if !xs.contains(&r.x) {
            xs.push(r.x.clone());
        }
    }
    let numeric: Option<Vec<f64>> = xs.iter().map(|x| x.parse().ok()).collect();
    let pos = |x: &str| -> f64 {
        match &numeric {
            Some(_) => x.parse().unwrap_or(0.0),
            None => xs.iter().position(|v| v == x).unwrap_or(0) as f64,
        }
    };
    let (mut xlo, mut xhi) = summary.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| {
        let p = pos(&r.x);
        (a.min(p), b.max(p))
    });
    let pad = if xhi > xlo { 0.05 * (xhi - xlo) } else { 0.5 };
    xlo -= pad;
    xhi += pad;
    let ylo = summary.iter().map(|r| r.q1).fold(f64::INFINITY, f64::min);
    let yhi = summary.iter().map(|r| r.q3).fold(f64::NEG_INFINITY, f64::max);
    let ypad = if yhi > ylo { 0.1 * (yhi - ylo) } else { 0.05 };

    let root = SVGBackend::new(path, (800, 500)).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(15)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(xlo..xhi, (ylo - ypad)..(yhi + ypad))?;
    let axis = summary[0].axis.clone();
    let labels = xs.clone();
    let is_numeric = numeric.is_some();
    chart
        .configure_mesh()
        .x_desc(axis)
        .y_desc("relative error (median, IQR)")
        .x_label_formatter(&|v| {
            if is_numeric {
                format!("{v}")
            } else {
                labels.get(v.round() as usize).cloned().unwrap_or_default()
            }
        })
        .draw()?;

    let mut series: Vec<String> = Vec::new();
    for r in summary {
        if !series.contains(&r.series) {
            series.push(r.series.clone());
        }
    }
    for (i, s) in series.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        let pts: Vec<&SummaryRow> = summary.iter().filter(|r| &r.series == s).collect();
        chart
            .draw_series(LineSeries::new(pts.iter().map(|r| (pos(&r.x), r.median)), color.stroke_width(2)))?
            .label(s.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color));
        chart.draw_series(pts.iter().map(|r| Circle::new((pos(&r.x), r.median), 4, color.filled())))?;
        chart.draw_series(
            pts.iter()
                .map(|r| PathElement::new(vec![(pos(&r.x), r.q1), (pos(&r.x), r.q3)], color)),
        )?;
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()?;
    root.present()?;
    Ok(())
}
