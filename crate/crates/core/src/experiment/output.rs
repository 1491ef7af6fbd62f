//! Tables, window traces, radar plots and manifests.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::run::WindowSample;
use crate::mdp::{objectives_label, Objective};
use crate::pareto::{normalize, summarize, NormalizationSpec, PolicyPoint};
use crate::Error;

pub const POLICY_HEADER: &str = "objectives,seed,R,SP,EO,OAE,PP,PE,IF,CSC";
pub const SUMMARY_HEADER: &str = "objectives,seed,statistic,n,std_undefined,R,SP,EO,OAE,PP,PE,IF,CSC";
pub const WINDOW_HEADER: &str = "step,mean_window,std_window";

/// Five decimals, with negative zero printed as zero.
pub fn fmt5(x: f64) -> String {
    let s = format!("{x:.5}");
    if s == "-0.00000" {
        "0.00000".into()
    } else {
        s
    }
}

fn row(values: &[f64]) -> String {
    values.iter().map(|&v| fmt5(v)).collect::<Vec<_>>().join(",")
}

pub fn policy_table(objectives: &[Objective], points: &[PolicyPoint]) -> String {
    let label = objectives_label(objectives);
    let mut out = String::from(POLICY_HEADER);
    out.push('\n');
    for p in points {
        let _ = writeln!(out, "{label},{},{}", p.seed, row(&p.returns));
    }
    out
}

pub fn summary_table(objectives: &[Objective], points: &[PolicyPoint]) -> String {
    let label = objectives_label(objectives);
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in summarize(points) {
        let seed = r.seed.map_or_else(|| "All".to_string(), |s| s.to_string());
        let _ = writeln!(
            out,
            "{label},{seed},{},{},{},{}",
            r.statistic.label(),
            r.count,
            u8::from(r.std_undefined),
            row(&r.values)
        );
    }
    out
}

pub fn window_table(samples: &[WindowSample]) -> String {
    let mut out = String::from(WINDOW_HEADER);
    out.push('\n');
    for s in samples {
        let _ = writeln!(out, "{},{},{}", s.step, fmt5(s.mean), fmt5(s.std));
    }
    out
}

const SIZE: f64 = 480.0;
const RADIUS: f64 = 170.0;
const PALETTE: [&str; 10] =
    ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"];

fn vertex(axis: usize, r: f64) -> (f64, f64) {
    let n = Objective::ALL.len() as f64;
    let angle = std::f64::consts::TAU * axis as f64 / n - std::f64::consts::FRAC_PI_2;
    (SIZE / 2.0 + r * angle.cos(), SIZE / 2.0 + r * angle.sin())
}

/// Radius of a normalised value: 0 sits on the rim, -1 at the centre.
pub fn radius_of(value: f64) -> f64 {
    RADIUS * (1.0 + value.clamp(-1.0, 0.0))
}

/// One polygon per policy over the eight normalised objectives.
pub fn radar_svg(title: &str, points: &[PolicyPoint], spec: &NormalizationSpec) -> String {
    let returns: Vec<&Vec<f64>> = points.iter().map(|p| &p.returns).collect();
    let normalized = normalize(&returns, &Objective::ALL, spec);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(svg, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="22" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#,
        SIZE / 2.0,
        escape(title)
    );
    for level in [0.25, 0.5, 0.75, 1.0] {
        let ring: Vec<String> = (0..Objective::ALL.len())
            .map(|a| {
                let (x, y) = vertex(a, RADIUS * level);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(svg, r##"<polygon points="{}" fill="none" stroke="#cccccc" stroke-width="1"/>"##, ring.join(" "));
    }
    for (a, o) in Objective::ALL.iter().enumerate() {
        let (x, y) = vertex(a, RADIUS);
        let (lx, ly) = vertex(a, RADIUS + 18.0);
        let _ = writeln!(
            svg,
            r##"<line x1="{c:.2}" y1="{c:.2}" x2="{x:.2}" y2="{y:.2}" stroke="#999999" stroke-width="1"/>"##,
            c = SIZE / 2.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{lx:.2}" y="{ly:.2}" text-anchor="middle" dominant-baseline="middle" font-family="sans-serif" font-size="12">{}</text>"#,
            o.label()
        );
    }
    for (i, values) in normalized.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let poly: Vec<String> = values
            .iter()
            .enumerate()
            .map(|(a, &v)| {
                let (x, y) = vertex(a, radius_of(v));
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(
            svg,
            r#"<polygon points="{}" fill="{colour}" fill-opacity="0.08" stroke="{colour}" stroke-width="1.5"/>"#,
            poly.join(" ")
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct PolicyEntry {
    pub provenance: String,
    pub returns: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest<'a, C: Serialize> {
    pub config_hash: String,
    pub farel_version: &'static str,
    pub config: &'a C,
    pub steps: usize,
    pub episodes: usize,
    pub policies: Vec<PolicyEntry>,
    pub files: Vec<FileDigest>,
}

/// Writes `files` under `dir` and returns their digests.
pub fn write_files(dir: &Path, files: &[(&str, String)]) -> Result<Vec<FileDigest>, Error> {
    std::fs::create_dir_all(dir)?;
    let mut digests = Vec::new();
    for (name, body) in files {
        std::fs::write(dir.join(name), body)?;
        digests.push(FileDigest { name: (*name).to_string(), sha256: sha256_hex(body.as_bytes()) });
    }
    Ok(digests)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding() {
        assert_eq!(fmt5(-1.0 / 6.0), "-0.16667");
        assert_eq!(fmt5(-0.000001), "0.00000");
        assert_eq!(fmt5(46.53243), "46.53243");
    }

    #[test]
    fn empty_radar_has_axes_only() {
        let svg = radar_svg("t", &[], &NormalizationSpec { reward_max: 1.0 });
        assert_eq!(svg.matches("<line").count(), 8);
        assert_eq!(svg.matches("<polygon").count(), 4);
    }

    #[test]
    fn rim_and_centre() {
        assert_eq!(radius_of(0.0), RADIUS);
        assert_eq!(radius_of(-1.0), 0.0);
        assert_eq!(radius_of(-3.0), 0.0);
        assert_eq!(radius_of(0.5), RADIUS);
    }
}
