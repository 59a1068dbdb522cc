use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const RESULTS_CSV: &str = "results.csv";
pub const RESULTS_JSON: &str = "results.json";
pub const RESULTS_SVG: &str = "plot.svg";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub config: String,
    pub rate: f64,
    pub seed: u64,
    pub accuracy: f64,
    /// Unweighted reconstruction loss of the last training epoch.
    pub lr_final: f64,
    pub runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsTable {
    pub rows: Vec<MetricsRow>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => values[n / 2],
        _ => 0.5 * (values[n / 2 - 1] + values[n / 2]),
    }
}

fn rate_key(rate: f64) -> String {
    format!("{rate}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub seed: u64,
    pub accuracy: f64,
    pub lr_final: f64,
    pub runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCell {
    pub median_accuracy: f64,
    pub runs: Vec<RunEntry>,
}

/// `config → rate → cell`, the layout of `results.json`.
pub type Nested = BTreeMap<String, BTreeMap<String, RateCell>>;

impl MetricsTable {
    /// Orders rows by configuration (in `order`), then rate, then seed.
    pub fn sort(&mut self, order: &[&str]) {
        let rank = |c: &str| order.iter().position(|o| *o == c).unwrap_or(order.len());
        self.rows.sort_by(|a, b| {
            rank(&a.config)
                .cmp(&rank(&b.config))
                .then(a.config.cmp(&b.config))
                .then(a.rate.total_cmp(&b.rate))
                .then(a.seed.cmp(&b.seed))
        });
    }

    pub fn configs(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.config) {
                out.push(r.config.clone());
            }
        }
        out
    }

    pub fn rates(&self, config: &str) -> Vec<f64> {
        let mut out: Vec<f64> = self.rows.iter().filter(|r| r.config == config).map(|r| r.rate).collect();
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    /// Median accuracy over seeds for one cell.
    pub fn median(&self, config: &str, rate: f64) -> Option<f64> {
        let mut acc: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.config == config && r.rate == rate)
            .map(|r| r.accuracy)
            .collect();
        (!acc.is_empty()).then(|| median(&mut acc))
    }

    pub fn nested(&self) -> Nested {
        let mut out = Nested::new();
        for r in &self.rows {
            let cell = out
                .entry(r.config.clone())
                .or_default()
                .entry(rate_key(r.rate))
                .or_insert_with(|| RateCell {
                    median_accuracy: f64::NAN,
                    runs: Vec::new(),
                });
            cell.runs.push(RunEntry {
                seed: r.seed,
                accuracy: r.accuracy,
                lr_final: r.lr_final,
                runtime_s: r.runtime_s,
            });
        }
        for cells in out.values_mut() {
            for cell in cells.values_mut() {
                let mut acc: Vec<f64> = cell.runs.iter().map(|r| r.accuracy).collect();
                cell.median_accuracy = median(&mut acc);
            }
        }
        out
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Usage(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Usage(e.to_string()))
    }

    pub fn from_csv_str(text: &str) -> Result<MetricsTable> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let rows = rdr.deserialize().collect::<std::result::Result<Vec<MetricsRow>, _>>()?;
        Ok(MetricsTable { rows })
    }
}

/// Writes `results.csv`, `results.json` and `plot.svg` into `dir`.
pub fn emit_tables(table: &MetricsTable, dir: &Path) -> Result<()> {
    if table.rows.is_empty() {
        return Err(Error::Usage("refusing to emit an empty table".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, text: String| {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    };
    write(RESULTS_CSV, table.to_csv_string()?)?;
    write(RESULTS_JSON, serde_json::to_string_pretty(&table.nested())? + "\n")?;
    write(RESULTS_SVG, render_svg(table))?;
    Ok(())
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Median accuracy against missing rate, one line per configuration.
pub fn render_svg(table: &MetricsTable) -> String {
    let (w, h, left, right, top, bottom) = (640.0, 400.0, 60.0, 150.0, 20.0, 50.0);
    let configs = table.configs();
    let all_rates: Vec<f64> = table.rows.iter().map(|r| r.rate).collect();
    let x_max = all_rates.iter().cloned().fold(0.0, f64::max).max(0.1);
    let y_min = configs
        .iter()
        .flat_map(|c| table.rates(c).into_iter().filter_map(|r| table.median(c, r)))
        .fold(1.0, f64::min)
        .min(0.5);
    let y_min = (y_min * 10.0).floor() / 10.0;
    let px = |x: f64| left + (x / x_max) * (w - left - right);
    let py = |y: f64| top + (1.0 - (y - y_min) / (1.0 - y_min)) * (h - top - bottom);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let (x0, x1, y0, y1) = (px(0.0), px(x_max), py(y_min), py(1.0));
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    let mut ticks: Vec<f64> = all_rates.clone();
    ticks.sort_by(f64::total_cmp);
    ticks.dedup();
    for t in ticks {
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{t}</text>"#, px(t), y0 + 18.0);
    }
    let mut y = y_min;
    while y <= 1.0 + 1e-9 {
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{y:.1}</text>"#, x0 - 6.0, py(y) + 4.0);
        y += 0.1;
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">missing rate</text>"#, (x0 + x1) / 2.0, h - 10.0);
    let _ = writeln!(s, r#"<text x="15" y="{:.1}" transform="rotate(-90 15 {:.1})" text-anchor="middle">median accuracy</text>"#, (y0 + y1) / 2.0, (y0 + y1) / 2.0);
    for (k, c) in configs.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = table
            .rates(c)
            .into_iter()
            .filter_map(|r| table.median(c, r).map(|m| format!("{:.1},{:.1}", px(r), py(m))))
            .collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, pts.join(" "));
        let ly = top + 20.0 * (k as f64 + 1.0);
        let _ = writeln!(s, r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#, w - right + 15.0, w - right + 40.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">{c}</text>"#, w - right + 45.0, ly + 4.0);
    }
    s.push_str("</svg>\n");
    s
}
