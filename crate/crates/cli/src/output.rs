//! Tabular output: CSV with a provenance comment line, optional JSON-lines
//! mirror, and a best-effort SVG scatter.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::{json, Map, Value};

#[derive(Debug, Clone)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            // shortest round-trip form, scientific outside [1e-4, 1e9)
            Cell::Num(v) if *v == 0.0 || !v.is_finite() || (1e-4..1e9).contains(&v.abs()) => v.to_string(),
            Cell::Num(v) => format!("{v:e}"),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(v) if v.is_finite() => json!(v),
            Cell::Num(v) => json!(v.to_string()),
            Cell::Int(v) => json!(v),
            Cell::Text(s) => json!(s),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_owned())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// Joins the coordinates of a point as `a;b;c` so that points stay one CSV field.
pub fn point(x: &[f64]) -> Cell {
    Cell::Text(x.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";"))
}

/// Version, configuration hash and seed, written ahead of every table.
#[derive(Debug, Clone)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    fn comment(&self) -> String {
        format!(
            "# fracheat {} config_hash={} seed={}",
            env!("CARGO_PKG_VERSION"),
            &self.config_hash[..16],
            self.seed
        )
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| (*c).to_owned()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self, prov: &Provenance) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        writeln!(out, "{}", prov.comment())?;
        {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(&self.columns)?;
            for row in &self.rows {
                w.write_record(row.iter().map(Cell::render))?;
            }
            w.flush()?;
        }
        Ok(out)
    }

    pub fn to_jsonl(&self, prov: &Provenance) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        let head = json!({
            "fracheat": env!("CARGO_PKG_VERSION"),
            "config_hash": prov.config_hash,
            "seed": prov.seed,
        });
        writeln!(out, "{head}")?;
        for row in &self.rows {
            let obj: Map<String, Value> = self
                .columns
                .iter()
                .zip(row)
                .map(|(c, v)| (c.clone(), v.json()))
                .collect();
            writeln!(out, "{}", Value::Object(obj))?;
        }
        Ok(out)
    }
}

/// Where tables go: a file (plus `.jsonl` mirror when requested) or stdout.
#[derive(Debug, Clone)]
pub struct Sink {
    pub out: Option<PathBuf>,
    pub json: bool,
    pub provenance: Provenance,
}

impl Sink {
    /// Writes `table` to `path`, or to stdout when `path` is `None`. On stdout
    /// `--json` replaces the CSV; with a file it adds `<path>.jsonl`.
    pub fn write_to(&self, table: &Table, path: Option<&Path>) -> Result<()> {
        match path {
            Some(p) => {
                if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
                }
                fs::write(p, table.to_csv(&self.provenance)?).with_context(|| format!("writing {}", p.display()))?;
                if self.json {
                    let mirror = with_suffix(p, ".jsonl");
                    fs::write(&mirror, table.to_jsonl(&self.provenance)?)
                        .with_context(|| format!("writing {}", mirror.display()))?;
                }
            }
            None => {
                let bytes = if self.json {
                    table.to_jsonl(&self.provenance)?
                } else {
                    table.to_csv(&self.provenance)?
                };
                std::io::stdout().write_all(&bytes)?;
            }
        }
        Ok(())
    }

    pub fn write(&self, table: &Table) -> Result<()> {
        self.write_to(table, self.out.as_deref())
    }

    /// A sibling of the main output, `<stem><tag>.<ext>`; `None` on stdout.
    pub fn sibling(&self, tag: &str, ext: &str) -> Option<PathBuf> {
        let out = self.out.as_ref()?;
        let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Some(out.with_file_name(format!("{stem}{tag}.{ext}")))
    }
}

fn with_suffix(p: &Path, suffix: &str) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// One scatter series: `(t, ratio)` points.
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Log-log scatter of ratio against `t`, one colour per series.
pub fn scatter_svg(title: &str, series: &[Series]) -> String {
    let (w, h, pad) = (640.0, 420.0, 50.0);
    let all: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.points.iter().copied())
        .filter(|(x, y)| *x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())
        .collect();
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{pad}" y="20">{title}</text>"#);
    if !all.is_empty() {
        let lx = |v: f64| v.log10();
        let (x0, x1) = bounds(all.iter().map(|p| lx(p.0)));
        let (y0, y1) = bounds(all.iter().map(|p| lx(p.1)));
        let px = |v: f64| pad + (lx(v) - x0) / (x1 - x0) * (w - 2.0 * pad);
        let py = |v: f64| h - pad - (lx(v) - y0) / (y1 - y0) * (h - 2.0 * pad);
        let _ = writeln!(
            svg,
            r#"<rect x="{pad}" y="{pad}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            w - 2.0 * pad,
            h - 2.0 * pad
        );
        let _ = writeln!(svg, r#"<text x="{}" y="{}">log10 t</text>"#, w / 2.0, h - 15.0);
        let _ = writeln!(
            svg,
            r#"<text x="{pad}" y="{}">t in [1e{x0:.1}, 1e{x1:.1}], ratio in [1e{y0:.1}, 1e{y1:.1}]</text>"#,
            pad - 8.0
        );
        for (k, s) in series.iter().enumerate() {
            let color = COLORS[k % COLORS.len()];
            for &(x, y) in s.points.iter().filter(|(x, y)| *x > 0.0 && *y > 0.0) {
                let _ = writeln!(
                    svg,
                    r#"<circle cx="{:.1}" cy="{:.1}" r="2.5" fill="{color}" fill-opacity="0.6"/>"#,
                    px(x),
                    py(y)
                );
            }
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
                w - pad - 150.0,
                pad + 15.0 * (k + 1) as f64,
                s.label
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::MAX, f64::MIN), |(a, b), v| (a.min(v), b.max(v)));
    if hi - lo < 1e-9 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prov() -> Provenance {
        Provenance {
            config_hash: "ab".repeat(32),
            seed: 9,
        }
    }

    #[test]
    fn csv_header_and_quoting() {
        let mut t = Table::new(&["t", "note"]);
        t.push(vec![0.5.into(), "a, b".into()]);
        let text = String::from_utf8(t.to_csv(&prov()).unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], format!("# fracheat {} config_hash={} seed=9", env!("CARGO_PKG_VERSION"), "ab".repeat(8)));
        assert_eq!(lines[1], "t,note");
        assert_eq!(lines[2], "0.5,\"a, b\"");
        let mut t = Table::new(&["v"]);
        t.push(vec![1e-300.into()]);
        assert!(String::from_utf8(t.to_csv(&prov()).unwrap()).unwrap().ends_with("1e-300\n"));
    }

    #[test]
    fn jsonl_mirror() {
        let mut t = Table::new(&["k", "v"]);
        t.push(vec![3usize.into(), f64::INFINITY.into()]);
        let text = String::from_utf8(t.to_jsonl(&prov()).unwrap()).unwrap();
        let row: Value = serde_json::from_str(text.lines().nth(1).unwrap()).unwrap();
        assert_eq!(row["k"], 3);
        assert_eq!(row["v"], "inf");
    }

    #[test]
    fn svg_is_well_formed() {
        let s = scatter_svg(
            "r",
            &[Series {
                label: "a".into(),
                points: vec![(0.1, 1.0), (1.0, 10.0)],
            }],
        );
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert_eq!(s.matches("<circle").count(), 2);
    }
}
