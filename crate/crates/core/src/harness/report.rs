//! Report files: JSON (the source of truth), a long-format CSV with the same
//! numbers, and standalone SVG figures.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::analysis::EvalReport;
use crate::stats::{SignFlag, SplitScore};
use crate::{Error, Result};

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const FIGURES: [&str; 4] = [
    "singles.svg",
    "composites.svg",
    "complementarity.svg",
    "sign_matrix.svg",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Svg,
    All,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "svg" => Ok(ReportFormat::Svg),
            "all" => Ok(ReportFormat::All),
            _ => Err(Error::Config(format!(
                "unsupported report format `{s}` (json, csv, svg, all)"
            ))),
        }
    }
}

pub fn report_json(report: &EvalReport) -> Result<String> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    Ok(text)
}

pub fn parse_report(text: &str) -> Result<EvalReport> {
    Ok(serde_json::from_str(text)?)
}

fn score_rows(out: &mut String, section: &str, s: &SplitScore) {
    let name = &s.name;
    let _ = writeln!(out, "{section},{name},mean,{}", s.mean);
    let _ = writeln!(out, "{section},{name},se,{}", s.se);
    let _ = writeln!(out, "{section},{name},pooled,{}", s.pooled);
    for (i, r) in s.per_split.iter().enumerate() {
        let _ = writeln!(out, "{section},{name},split_{i},{r}");
    }
    for (i, l) in s.lambdas.iter().enumerate() {
        let _ = writeln!(out, "{section},{name},lambda_{i},{l}");
    }
    let _ = writeln!(out, "{section},{name},intercept_only,{}", s.intercept_only);
}

/// Every number of the report as `section,name,field,value` rows.
pub fn report_csv(report: &EvalReport) -> String {
    let mut out = format!(
        "# config_hash={}\nsection,name,field,value\n",
        report.config_hash
    );
    let rel = &report.reliability;
    for (scenario, v) in &rel.per_scenario {
        let _ = writeln!(out, "reliability,{scenario},r_sb,{v}");
    }
    let _ = writeln!(out, "reliability,overall,mean,{}", rel.mean);
    let _ = writeln!(out, "reliability,overall,sem,{}", rel.sem);
    let _ = writeln!(out, "reliability,pooled,r_sb,{}", rel.pooled);
    for s in &report.singles {
        score_rows(&mut out, "single", s);
    }
    for s in &report.composites {
        score_rows(&mut out, "composite", s);
    }
    for d in &report.delta_search {
        let _ = writeln!(out, "delta_search,d{},mean,{}", d.delta, d.mean);
    }
    for p in &report.stability {
        let _ = writeln!(
            out,
            "stability,{}@{}/k{},mean,{}",
            p.irf, p.step, p.k, p.mean
        );
        let _ = writeln!(out, "stability,{}@{}/k{},se,{}", p.irf, p.step, p.k, p.se);
    }
    let m = &report.scenario_matrix;
    for (j, feature) in m.features.iter().enumerate() {
        for (scenario, row) in m.scenarios.iter().zip(&m.cells) {
            match row[j] {
                Some(r) => {
                    let _ = writeln!(out, "scenario_r,{feature},{scenario},{r}");
                }
                None => {
                    let _ = writeln!(out, "scenario_r,{feature},{scenario},degenerate");
                }
            }
        }
        let flag = match m.flags[j] {
            SignFlag::Consistent => "consistent",
            SignFlag::Mixed => "mixed",
            SignFlag::Degenerate => "degenerate",
        };
        let _ = writeln!(out, "sign_flag,{feature},flag,{flag}");
    }
    for s in &report.complementarity {
        score_rows(&mut out, "complementarity", s);
    }
    for p in &report.learning {
        let _ = writeln!(
            out,
            "learning,{},mean_adversarial,{}",
            p.step, p.mean_adversarial
        );
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Horizontal bars of mean r with ± SE whiskers and an optional dashed ceiling.
pub fn bar_chart(
    title: &str,
    bars: &[(String, f64, f64)],
    ceiling: Option<f64>,
    hash: &str,
) -> String {
    let (left, top, row, width) = (190.0, 40.0, 18.0, 420.0);
    let height = top + row * bars.len() as f64 + 40.0;
    let total = left + width + 30.0;
    // r axis spans [lo, 1].
    let lo = bars
        .iter()
        .map(|(_, m, s)| m - s)
        .fold(0.0f64, f64::min)
        .clamp(-1.0, 0.0);
    let x = |r: f64| left + (r - lo) / (1.0 - lo) * width;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total:.0}" height="{height:.0}" viewBox="0 0 {total:.0} {height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, "<desc>config_hash={hash}</desc>");
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="20" font-size="14">{}</text>"#,
        left,
        escape(title)
    );
    let axis_y = top + row * bars.len() as f64;
    let _ = writeln!(
        svg,
        r##"<line x1="{:.1}" y1="{top:.1}" x2="{:.1}" y2="{axis_y:.1}" stroke="#444"/>"##,
        x(0.0),
        x(0.0)
    );
    for (i, (label, mean, se)) in bars.iter().enumerate() {
        let y = top + row * i as f64;
        let (a, b) = (x(0.0).min(x(*mean)), x(0.0).max(x(*mean)));
        let _ = writeln!(
            svg,
            r##"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
            left - 6.0,
            y + row * 0.7,
            escape(label)
        );
        let _ = writeln!(
            svg,
            r##"<rect x="{a:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="#4a78b5"/>"##,
            y + 3.0,
            b - a,
            row - 6.0
        );
        let mid = y + row / 2.0;
        let _ = writeln!(
            svg,
            r##"<line x1="{:.1}" y1="{mid:.1}" x2="{:.1}" y2="{mid:.1}" stroke="#111"/>"##,
            x((mean - se).max(lo)),
            x((mean + se).min(1.0))
        );
    }
    if let Some(c) = ceiling {
        let _ = writeln!(
            svg,
            r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{axis_y:.1}" stroke="#b22" stroke-dasharray="5,4"/>"##,
            x(c),
            top - 6.0,
            x(c)
        );
        let _ = writeln!(
            svg,
            r##"<text x="{:.1}" y="{:.1}" fill="#b22" text-anchor="middle">ceiling {c:.3}</text>"##,
            x(c),
            top - 10.0
        );
    }
    for (i, t) in [lo, 0.0, 0.5, 1.0].into_iter().enumerate() {
        if i == 0 || t > lo {
            let _ = writeln!(
                svg,
                r##"<text x="{:.1}" y="{:.1}" text-anchor="middle">{t:.2}</text>"##,
                x(t),
                axis_y + 16.0
            );
        }
    }
    let _ = writeln!(
        svg,
        r##"<text x="{:.1}" y="{:.1}" text-anchor="middle">held-out Pearson r (mean ± SE over splits)</text>"##,
        x((lo + 1.0) / 2.0),
        axis_y + 32.0
    );
    svg.push_str("</svg>\n");
    svg
}

/// Scenario × feature grid coloured by within-scenario r.
pub fn sign_heatmap(report: &EvalReport) -> String {
    let m = &report.scenario_matrix;
    let (left, top, cell) = (110.0, 150.0, 22.0);
    let width = left + cell * m.features.len() as f64 + 20.0;
    let height = top + cell * m.scenarios.len() as f64 + 40.0;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(svg, "<desc>config_hash={}</desc>", report.config_hash);
    let _ = writeln!(
        svg,
        r#"<text x="10" y="18" font-size="14">Within-scenario r (× = mixed sign across scenarios)</text>"#
    );
    for (j, f) in m.features.iter().enumerate() {
        let cx = left + cell * (j as f64 + 0.6);
        let mark = if m.flags[j] == SignFlag::Mixed {
            " ×"
        } else {
            ""
        };
        let _ = writeln!(
            svg,
            r#"<text x="{cx:.1}" y="{:.1}" transform="rotate(-60 {cx:.1} {:.1})">{}{mark}</text>"#,
            top - 6.0,
            top - 6.0,
            escape(f)
        );
    }
    for (i, (s, row)) in m.scenarios.iter().zip(&m.cells).enumerate() {
        let y = top + cell * i as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            left - 6.0,
            y + cell * 0.65,
            escape(s)
        );
        for (j, v) in row.iter().enumerate() {
            let fill = match v {
                None => "#cccccc".to_string(),
                Some(r) => {
                    // Blue for positive, red for negative, white at 0.
                    let t = r.clamp(-1.0, 1.0).abs();
                    let fade = (255.0 * (1.0 - t)).round() as u8;
                    if *r >= 0.0 {
                        format!("#{fade:02x}{fade:02x}ff")
                    } else {
                        format!("#ff{fade:02x}{fade:02x}")
                    }
                }
            };
            let _ = writeln!(
                svg,
                r#"<rect x="{:.1}" y="{y:.1}" width="{cell:.1}" height="{cell:.1}" fill="{fill}" stroke="white"/>"#,
                left + cell * j as f64
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

fn bars(scores: &[SplitScore]) -> Vec<(String, f64, f64)> {
    scores
        .iter()
        .map(|s| (s.name.clone(), s.mean, s.se))
        .collect()
}

pub fn figures(report: &EvalReport) -> Vec<(&'static str, String)> {
    let ceiling = Some(report.reliability.pooled);
    let hash = &report.config_hash;
    let mut composite = bars(&report.composites);
    if let Some(base) = report.single(&report.complement_base) {
        composite.insert(0, (base.name.clone(), base.mean, base.se));
    }
    vec![
        (
            FIGURES[0],
            bar_chart(
                "Single IRFs and scene features",
                &bars(&report.singles),
                ceiling,
                hash,
            ),
        ),
        (
            FIGURES[1],
            bar_chart("Composite models", &composite, ceiling, hash),
        ),
        (
            FIGURES[2],
            bar_chart(
                &format!("Two-feature models with {}", report.complement_base),
                &bars(&report.complementarity),
                ceiling,
                hash,
            ),
        ),
        (FIGURES[3], sign_heatmap(report)),
    ]
}

/// Writes the requested report files into `dir`.
pub fn export_report(
    report: &EvalReport,
    dir: &Path,
    format: ReportFormat,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files: Vec<(String, String)> = Vec::new();
    if matches!(format, ReportFormat::Json | ReportFormat::All) {
        files.push((REPORT_JSON.into(), report_json(report)?));
    }
    if matches!(format, ReportFormat::Csv | ReportFormat::All) {
        files.push((REPORT_CSV.into(), report_csv(report)));
    }
    if matches!(format, ReportFormat::Svg | ReportFormat::All) {
        files.extend(figures(report).into_iter().map(|(n, s)| (n.to_string(), s)));
    }
    let mut written = Vec::new();
    for (name, text) in files {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
