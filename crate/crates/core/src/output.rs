//! Result files: CSV tables with an embedded provenance block, standalone
//! SVG plots, and thresholded NIfTI masks.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const PROVENANCE_PREFIX: &str = "# provenance: ";

/// Everything needed to trace a result file back to its inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub seed: Option<u64>,
    pub null_hash: Option<String>,
    pub workers: Option<usize>,
    /// Fixed conventions of this implementation, echoed for readers.
    pub conventions: Conventions,
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conventions {
    pub percentile: String,
    pub supra_threshold: String,
    pub t_test: String,
    pub identity_permutation: String,
}

impl Default for Conventions {
    fn default() -> Self {
        Conventions {
            percentile: "order statistic at rank ceil((1-alpha)*n)".into(),
            supra_threshold: "strictly greater than critical value; ties excluded".into(),
            t_test: "pooled-variance two-sample t, df = N - 2, lesioned minus intact".into(),
            identity_permutation: "not excluded".into(),
        }
    }
}

impl Provenance {
    pub fn new(config: serde_json::Value) -> Self {
        Provenance {
            tool: "vlsm".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: None,
            null_hash: None,
            workers: None,
            conventions: Conventions::default(),
            config,
        }
    }

    pub fn header_line(&self) -> String {
        format!(
            "{PROVENANCE_PREFIX}{}\n",
            serde_json::to_string(self).expect("provenance serialises")
        )
    }
}

/// Removes provenance (`#`-prefixed) lines.
pub fn strip_provenance(text: &str) -> String {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect()
}

/// Renders a CSV body (header plus rows).
pub fn csv_body<S: AsRef<str>>(header: &[&str], rows: &[Vec<S>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r.iter().map(|s| s.as_ref())).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

pub fn write_csv<S: AsRef<str>>(
    path: impl AsRef<Path>,
    provenance: &Provenance,
    header: &[&str],
    rows: &[Vec<S>],
) -> Result<()> {
    let path = path.as_ref();
    let text = provenance.header_line() + &csv_body(header, rows);
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads a CSV written by [`write_csv`] into a header and string rows.
pub fn read_csv(path: impl AsRef<Path>) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let body = strip_provenance(&text);
    let mut rdr = csv::Reader::from_reader(body.as_bytes());
    let parse = |e: csv::Error| Error::Parse {
        path: path.into(),
        message: e.to_string(),
    };
    let header = rdr.headers().map_err(parse)?.iter().map(String::from).collect();
    let rows = rdr
        .records()
        .map(|r| r.map(|r| r.iter().map(String::from).collect()).map_err(parse))
        .collect::<Result<Vec<_>>>()?;
    Ok((header, rows))
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(value).expect("serialisable value");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// One plotted series.
#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub line: bool,
}

/// Minimal deterministic SVG chart.
#[derive(Debug, Clone)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub identity_line: bool,
    pub series: Vec<Series>,
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

impl Plot {
    fn tx(&self, x: f64) -> f64 {
        if self.log_x {
            x.log10()
        } else {
            x
        }
    }

    fn ty(&self, y: f64) -> f64 {
        if self.log_y {
            y.log10()
        } else {
            y
        }
    }

    pub fn render(&self) -> String {
        let (w, h) = (640.0, 480.0);
        let (left, right, top, bottom) = (70.0, 20.0, 40.0, 60.0);
        let pts: Vec<(f64, f64)> = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().map(|&(x, y)| (self.tx(x), self.ty(y))))
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .collect();
        let (mut x0, mut x1, mut y0, mut y1) = pts.iter().fold(
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
            |(a, b, c, d), &(x, y)| (a.min(x), b.max(x), c.min(y), d.max(y)),
        );
        if pts.is_empty() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if self.identity_line {
            let lo = x0.min(y0);
            let hi = x1.max(y1);
            (x0, x1, y0, y1) = (lo, hi, lo, hi);
        }
        if x1 - x0 < 1e-12 {
            x0 -= 0.5;
            x1 += 0.5;
        }
        if y1 - y0 < 1e-12 {
            y0 -= 0.5;
            y1 += 0.5;
        }
        let px = |x: f64| left + (x - x0) / (x1 - x0) * (w - left - right);
        let py = |y: f64| h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom);

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            w / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{left}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black"/>"#,
            h - bottom,
            w - right,
            h - bottom
        );
        let _ = writeln!(
            s,
            r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{:.1}" stroke="black"/>"#,
            h - bottom
        );
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let xv = x0 + f * (x1 - x0);
            let yv = y0 + f * (y1 - y0);
            let xl = if self.log_x { 10f64.powf(xv) } else { xv };
            let yl = if self.log_y { 10f64.powf(yv) } else { yv };
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                px(xv),
                h - bottom + 18.0,
                tick(xl)
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
                left - 6.0,
                py(yv) + 4.0,
                tick(yl)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            (left + w - right) / 2.0,
            h - 16.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
            (top + h - bottom) / 2.0,
            (top + h - bottom) / 2.0,
            escape(&self.y_label)
        );
        if self.identity_line {
            let _ = writeln!(
                s,
                r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="gray" stroke-dasharray="4 4"/>"#,
                px(x0),
                py(x0),
                px(x1),
                py(x1)
            );
        }
        for (i, series) in self.series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let pts: Vec<(f64, f64)> = series
                .points
                .iter()
                .map(|&(x, y)| (self.tx(x), self.ty(y)))
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .collect();
            if series.line && pts.len() > 1 {
                let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.1},{:.1}", px(x), py(y))).collect();
                let _ = writeln!(
                    s,
                    r#"<polyline fill="none" stroke="{color}" points="{}"/>"#,
                    path.join(" ")
                );
            }
            for &(x, y) in &pts {
                let _ = writeln!(
                    s,
                    r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#,
                    px(x),
                    py(y)
                );
            }
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" fill="{color}">{}</text>"#,
                left + 10.0,
                top + 14.0 * (i as f64 + 1.0),
                escape(&series.name)
            );
        }
        s.push_str("</svg>\n");
        s
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.render()).map_err(|e| Error::io(path, e))
    }
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 0.01 || v.abs() >= 1e5) {
        format!("{v:.1e}")
    } else {
        format!("{v:.3}")
            .trim_end_matches('0')
            .trim_end_matches('.')
            .to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn provenance_strip_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let mut prov = Provenance::new(serde_json::json!({"alpha": 0.05}));
        prov.workers = Some(3);
        write_csv(&p, &prov, &["a", "b"], &[vec!["1", "x"], vec!["2", "y"]]).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with(PROVENANCE_PREFIX));
        assert_eq!(strip_provenance(&text), "a,b\n1,x\n2,y\n");
        let (h, rows) = read_csv(&p).unwrap();
        assert_eq!(h, vec!["a", "b"]);
        assert_eq!(rows[1], vec!["2", "y"]);
    }

    #[test]
    fn svg_is_deterministic_and_handles_log_axes() {
        let plot = Plot {
            title: "t".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            log_x: true,
            log_y: true,
            identity_line: false,
            series: vec![Series {
                name: "max".into(),
                points: vec![(0.0001, 10.0), (0.05, 900.0), (0.01, 0.0)],
                line: true,
            }],
        };
        let a = plot.render();
        assert_eq!(a, plot.render());
        assert!(a.contains("<polyline"));
        assert!(!a.contains("NaN") && !a.contains("inf"));
    }
}
