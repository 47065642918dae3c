use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::metrics::{confusion_and_accuracy, mean_average_precision, pr_curve, thresholds, PrPoint};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelMetrics {
    pub label: String,
    pub positive_windows: u64,
    pub average_precision: Option<f64>,
    pub curve: Vec<PrPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub thresholds: Vec<f64>,
    pub labels: Vec<LabelMetrics>,
    pub map: f64,
    /// `confusion[true][predicted]`, counted in windows.
    pub confusion: Vec<Vec<u64>>,
    pub accuracy: f64,
    pub window_count: usize,
}

impl EvalReport {
    pub fn compute(scores: &[Vec<f32>], truth: &[usize], labels: &[String]) -> Result<Self> {
        let c = labels.len();
        let map = mean_average_precision(scores, truth, c)?;
        let (confusion, accuracy) = confusion_and_accuracy(scores, truth, c)?;
        let labels = labels
            .iter()
            .enumerate()
            .map(|(i, name)| {
                Ok(LabelMetrics {
                    label: name.clone(),
                    positive_windows: confusion[i].iter().sum(),
                    average_precision: map.per_label[i],
                    curve: pr_curve(scores, truth, i)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            thresholds: thresholds().to_vec(),
            labels,
            map: map.map,
            confusion,
            accuracy,
            window_count: scores.len(),
        })
    }

    pub fn confusion_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["true\\predicted".to_string()];
        header.extend(self.labels.iter().map(|l| l.label.clone()));
        w.write_record(&header)?;
        for (l, row) in self.labels.iter().zip(&self.confusion) {
            let mut rec = vec![l.label.clone()];
            rec.extend(row.iter().map(u64::to_string));
            w.write_record(&rec)?;
        }
        finish(w)
    }

    pub fn pr_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["label", "threshold", "precision", "recall"])?;
        for l in &self.labels {
            for p in &l.curve {
                w.write_record([
                    l.label.clone(),
                    format!("{:.1}", p.threshold),
                    p.precision.to_string(),
                    p.recall.to_string(),
                ])?;
            }
        }
        finish(w)
    }

    /// Writes `report.json`, `confusion.csv`, `pr_curves.csv`,
    /// `pr_curves.svg` and `confusion.svg`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("create {}", dir.display()), e))?;
        let files = [
            ("report.json", serde_json::to_string_pretty(self)?),
            ("confusion.csv", self.confusion_csv()?),
            ("pr_curves.csv", self.pr_csv()?),
            ("pr_curves.svg", pr_svg(self)),
            ("confusion.svg", confusion_svg(self)),
        ];
        for (name, body) in files {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| Error::io(format!("write {}", p.display()), e))?;
        }
        Ok(())
    }
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Serde(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Serde(e.to_string()))
}

const PALETTE: [&str; 14] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
    "#393b79", "#637939", "#8c6d31", "#843c39",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Precision against recall, one polyline per label.
fn pr_svg(r: &EvalReport) -> String {
    let (w, h, pad, legend) = (520.0, 400.0, 50.0, 170.0);
    let (pw, ph) = (w - 2.0 * pad, h - 2.0 * pad);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{h}" font-family="sans-serif" font-size="11">"#,
        w + legend
    );
    let _ = writeln!(
        s,
        r#"<rect x="{pad}" y="{pad}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let x = pad + v * pw;
        let y = pad + ph - v * ph;
        let _ = writeln!(s, r#"<text x="{x}" y="{}" text-anchor="middle">{v:.1}</text>"#, pad + ph + 15.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{v:.1}</text>"#, pad - 5.0, y + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">recall</text>"#, pad + pw / 2.0, h - 10.0);
    let _ = writeln!(
        s,
        r#"<text x="15" y="{}" transform="rotate(-90 15 {})" text-anchor="middle">precision</text>"#,
        pad + ph / 2.0,
        pad + ph / 2.0
    );
    for (i, l) in r.labels.iter().enumerate() {
        if l.average_precision.is_none() {
            continue;
        }
        let colour = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = l
            .curve
            .iter()
            .map(|p| format!("{:.2},{:.2}", pad + p.recall * pw, pad + ph - p.precision * ph))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="1.5"/>"#,
            pts.join(" ")
        );
        let ly = pad + 14.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{colour}"/><text x="{}" y="{}">{}</text>"#,
            w + 5.0,
            ly,
            w + 20.0,
            ly + 9.0,
            escape(&l.label)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle">mAP {:.3}</text>"#,
        pad + pw / 2.0,
        r.map
    );
    s.push_str("</svg>\n");
    s
}

/// Row-normalised heat map with raw counts in each cell.
fn confusion_svg(r: &EvalReport) -> String {
    let n = r.labels.len();
    let cell = 34.0;
    let margin = 160.0;
    let size = margin + cell * n as f64 + 10.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" font-family="sans-serif" font-size="10">"#
    );
    for (i, row) in r.confusion.iter().enumerate() {
        let total = row.iter().sum::<u64>().max(1) as f64;
        for (j, &count) in row.iter().enumerate() {
            let shade = 255.0 - 200.0 * count as f64 / total;
            let (x, y) = (margin + j as f64 * cell, margin + i as f64 * cell);
            let _ = writeln!(
                s,
                r#"<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="rgb({shade:.0},{shade:.0},255)" stroke="white"/><text x="{tx}" y="{ty}" text-anchor="middle">{count}</text>"#,
                tx = x + cell / 2.0,
                ty = y + cell / 2.0 + 4.0
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            margin - 5.0,
            margin + i as f64 * cell + cell / 2.0 + 4.0,
            escape(&r.labels[i].label)
        );
        let cx = margin + i as f64 * cell + cell / 2.0;
        let _ = writeln!(
            s,
            r#"<text x="{cx}" y="{}" transform="rotate(-60 {cx} {})" text-anchor="start">{}</text>"#,
            margin - 5.0,
            margin - 5.0,
            escape(&r.labels[i].label)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="10" y="15">accuracy {:.3} over {} windows (rows: truth, columns: prediction)</text>"#,
        r.accuracy, r.window_count
    );
    s.push_str("</svg>\n");
    s
}
