//! Method comparison tables and bar plots.

use std::fmt::Write as _;
use std::path::Path;

use fairlayout::metrics::{format_table, MetricsReport};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub methods: Vec<MethodReport>,
}

/// Metric columns in table order.
pub const METRICS: [&str; 6] = ["life_service", "elderly_care", "diversity", "accessibility", "gini", "average"];

pub fn metric(report: &MetricsReport, name: &str) -> Option<f64> {
    Some(match name {
        "life_service" => report.life_service,
        "elderly_care" => report.elderly_care,
        "diversity" => report.diversity,
        "accessibility" => report.accessibility,
        "gini" => report.gini,
        "average" => report.average,
        _ => return None,
    })
}

impl Comparison {
    pub fn push(&mut self, method: impl Into<String>, report: MetricsReport) {
        self.methods.push(MethodReport {
            method: method.into(),
            report,
        });
    }

    pub fn get(&self, method: &str) -> Option<&MetricsReport> {
        self.methods.iter().find(|m| m.method == method).map(|m| &m.report)
    }

    pub fn table(&self) -> String {
        let rows: Vec<(&str, &MetricsReport)> =
            self.methods.iter().map(|m| (m.method.as_str(), &m.report)).collect();
        format_table(&rows)
    }

    /// One SVG bar chart per metric, written into `dir`.
    pub fn write_plots(&self, dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        for name in METRICS {
            let bars: Vec<(&str, f64)> = self
                .methods
                .iter()
                .map(|m| (m.method.as_str(), metric(&m.report, name).unwrap_or(0.0)))
                .collect();
            let path = dir.join(format!("{name}.svg"));
            std::fs::write(&path, bar_chart(name, &bars)).map_err(|e| CliError::io(&path, e))?;
        }
        Ok(())
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Vertical bar chart; the value axis spans `[min(0, lo), max(1, hi)]`.
pub fn bar_chart(title: &str, bars: &[(&str, f64)]) -> String {
    const W: f64 = 480.0;
    const H: f64 = 320.0;
    const PAD: f64 = 48.0;
    let lo = bars.iter().map(|b| b.1).fold(0.0, f64::min);
    let hi = bars.iter().map(|b| b.1).fold(1.0, f64::max);
    let y = |v: f64| H - PAD - (v - lo) / (hi - lo) * (H - 2.0 * PAD);
    let slot = (W - 2.0 * PAD) / bars.len().max(1) as f64;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="24" text-anchor="middle" font-size="16">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(
        svg,
        r#"<line x1="{PAD}" y1="{z:.1}" x2="{x2}" y2="{z:.1}" stroke="black"/>"#,
        z = y(0.0),
        x2 = W - PAD
    );
    for (i, (label, v)) in bars.iter().enumerate() {
        let x = PAD + slot * i as f64 + slot * 0.15;
        let (top, bottom) = if *v >= 0.0 { (y(*v), y(0.0)) } else { (y(0.0), y(*v)) };
        let _ = writeln!(
            svg,
            r##"<rect x="{x:.1}" y="{top:.1}" width="{w:.1}" height="{h:.1}" fill="#4C72B0"/>"##,
            w = slot * 0.7,
            h = bottom - top
        );
        let cx = x + slot * 0.35;
        let _ = writeln!(svg, r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle">{v:.3}</text>"#, top - 4.0);
        let _ = writeln!(
            svg,
            r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            H - PAD + 18.0,
            escape(label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}
