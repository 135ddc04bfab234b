//! Before/after comparison of several independent clustering runs, plus the
//! SVG charts emitted next to the CSV reports.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::features::FeatureTable;
use crate::kmeans::{kmeans_pp, ClusterModel, ElbowCurve, LloydConfig};
use crate::quality::{aligned_randomness, avg_silhouette, Partition};
use crate::stabilize::{stabilize, StabilizationReport, StabilizeConfig};
use crate::{seed, Result};

pub fn role_names(k: usize) -> Vec<String> {
    (0..k).map(|i| format!("R{i}")).collect()
}

/// Partition induced by a clustering of `table`'s rows.
pub fn partition_of(table: &FeatureTable, model: &ClusterModel) -> Result<Partition> {
    Partition::new(table.user_ids.clone(), table.rows.clone(), role_names(model.k), model.assignments.clone())
}

pub fn run_seed(base_seed: u64, run: usize) -> u64 {
    seed::derive(base_seed, "cluster-run", run as u64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunComparison {
    pub run: usize,
    pub seed: u64,
    pub silhouette_before: f64,
    pub silhouette_after: f64,
    pub converged: bool,
    pub rounds: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairComparison {
    pub a: usize,
    pub b: usize,
    pub randomness_before: usize,
    pub randomness_after: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub feature: String,
    pub k: usize,
    pub runs: Vec<RunComparison>,
    pub pairs: Vec<PairComparison>,
}

impl Comparison {
    pub fn mean_improvement(&self) -> f64 {
        self.runs.iter().map(|r| r.silhouette_after - r.silhouette_before).sum::<f64>() / self.runs.len().max(1) as f64
    }

    pub fn mean_randomness(&self) -> (f64, f64) {
        let n = self.pairs.len().max(1) as f64;
        (
            self.pairs.iter().map(|p| p.randomness_before as f64).sum::<f64>() / n,
            self.pairs.iter().map(|p| p.randomness_after as f64).sum::<f64>() / n,
        )
    }

    /// One row, columns `SC_K{i}`, `SC_K{i}_E` per run then
    /// `Rand_k{a}k{b}`, `Rand_k{a}k{b}_E` per pair (1-based run numbers).
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut header = vec!["feature".to_string()];
        let mut row = vec![self.feature.clone()];
        for r in &self.runs {
            header.push(format!("SC_K{}", r.run + 1));
            header.push(format!("SC_K{}_E", r.run + 1));
            row.push(r.silhouette_before.to_string());
            row.push(r.silhouette_after.to_string());
        }
        for p in &self.pairs {
            header.push(format!("Rand_k{}k{}", p.a + 1, p.b + 1));
            header.push(format!("Rand_k{}k{}_E", p.a + 1, p.b + 1));
            row.push(p.randomness_before.to_string());
            row.push(p.randomness_after.to_string());
        }
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&header)?;
        out.write_record(&row)?;
        out.flush()?;
        Ok(())
    }
}

/// Full outcome of [`compare_runs`], keeping the models and reports.
pub struct ComparisonRun {
    pub comparison: Comparison,
    pub models: Vec<ClusterModel>,
    pub reports: Vec<StabilizationReport>,
}

/// Clusters `table` `runs` times with independent seeds, stabilizes each
/// clustering and compares silhouette and pairwise aligned randomness before
/// and after.
pub fn compare_runs(
    table: &FeatureTable,
    feature: &str,
    k: usize,
    runs: usize,
    base_seed: u64,
    lloyd: LloydConfig,
    cfg: &StabilizeConfig,
) -> Result<ComparisonRun> {
    let mut models = Vec::with_capacity(runs);
    let mut before = Vec::with_capacity(runs);
    let mut reports = Vec::with_capacity(runs);
    let mut run_rows = Vec::with_capacity(runs);
    for run in 0..runs {
        let seed = run_seed(base_seed, run);
        let model = kmeans_pp(&table.rows, k, seed, lloyd)?;
        let initial = partition_of(table, &model)?;
        let report = stabilize(&initial, &StabilizeConfig { seed, ..*cfg })?;
        run_rows.push(RunComparison {
            run,
            seed,
            silhouette_before: avg_silhouette(&initial)?,
            silhouette_after: avg_silhouette(&report.final_partition)?,
            converged: report.converged,
            rounds: report.rounds_used(),
        });
        models.push(model);
        before.push(initial);
        reports.push(report);
    }
    let mut pairs = Vec::new();
    for a in 0..runs {
        for b in a + 1..runs {
            pairs.push(PairComparison {
                a,
                b,
                randomness_before: aligned_randomness(&before[a], &before[b])?,
                randomness_after: aligned_randomness(&reports[a].final_partition, &reports[b].final_partition)?,
            });
        }
    }
    Ok(ComparisonRun { comparison: Comparison { feature: feature.to_string(), k, runs: run_rows, pairs }, models, reports })
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

const W: f64 = 640.0;
const H: f64 = 360.0;
const PAD: f64 = 48.0;

fn frame(svg: &mut String, title: &str) {
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(
        svg,
        r#"<path d="M{PAD} {PAD} V{} H{}" stroke="black" fill="none"/>"#,
        H - PAD,
        W - PAD / 2.0
    );
}

/// RMSE against k as a line chart.
pub fn elbow_svg(curve: &ElbowCurve, chosen: Option<usize>) -> String {
    let mut svg = String::new();
    frame(&mut svg, "RMSE by number of clusters");
    let pts = &curve.points;
    if pts.is_empty() {
        svg.push_str("</svg>\n");
        return svg;
    }
    let (kmin, kmax) = (pts[0].k as f64, pts[pts.len() - 1].k as f64);
    let ymax = pts.iter().map(|p| p.rmse).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let x = |k: f64| PAD + (k - kmin) / (kmax - kmin).max(1.0) * (W - 1.5 * PAD);
    let y = |r: f64| H - PAD - r / ymax * (H - 2.0 * PAD);
    let path: Vec<String> = pts.iter().map(|p| format!("{:.2},{:.2}", x(p.k as f64), y(p.rmse))).collect();
    let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#, path.join(" "));
    for p in pts {
        let hit = chosen == Some(p.k);
        let _ = writeln!(
            svg,
            r#"<circle cx="{:.2}" cy="{:.2}" r="{}" fill="{}"/>"#,
            x(p.k as f64),
            y(p.rmse),
            if hit { 5 } else { 3 },
            if hit { "crimson" } else { "steelblue" }
        );
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#, x(p.k as f64), H - PAD + 16.0, p.k);
    }
    let _ = writeln!(svg, r#"<text x="{PAD}" y="{}" text-anchor="end">{:.3}</text>"#, PAD - 4.0, ymax);
    svg.push_str("</svg>\n");
    svg
}

/// Grouped bars: `(label, before, after)`.
pub fn bars_svg(title: &str, groups: &[(String, f64, f64)]) -> String {
    let mut svg = String::new();
    frame(&mut svg, title);
    let ymax = groups.iter().flat_map(|g| [g.1.abs(), g.2.abs()]).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let slot = (W - 1.5 * PAD) / groups.len().max(1) as f64;
    let bar = slot * 0.35;
    let base = H - PAD;
    for (i, (label, before, after)) in groups.iter().enumerate() {
        let x0 = PAD + i as f64 * slot + slot * 0.15;
        for (j, (v, color)) in [(*before, "#999999"), (*after, "steelblue")].into_iter().enumerate() {
            let h = v.max(0.0) / ymax * (H - 2.0 * PAD);
            let _ = writeln!(
                svg,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{color}"><title>{v}</title></rect>"#,
                x0 + j as f64 * bar,
                base - h,
                bar,
                h
            );
        }
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#, x0 + bar, base + 16.0, escape(label));
    }
    let _ = writeln!(svg, r##"<text x="{}" y="40" text-anchor="end" fill="#999999">before</text>"##, W - PAD);
    let _ = writeln!(svg, r#"<text x="{}" y="56" text-anchor="end" fill="steelblue">after</text>"#, W - PAD);
    svg.push_str("</svg>\n");
    svg
}

/// Silhouette bars per run followed by randomness bars per pair.
pub fn comparison_svg(c: &Comparison) -> (String, String) {
    let sc: Vec<_> = c.runs.iter().map(|r| (format!("K{}", r.run + 1), r.silhouette_before, r.silhouette_after)).collect();
    let rand: Vec<_> = c
        .pairs
        .iter()
        .map(|p| (format!("k{}k{}", p.a + 1, p.b + 1), p.randomness_before as f64, p.randomness_after as f64))
        .collect();
    (bars_svg("Average silhouette before and after", &sc), bars_svg("Pairwise randomness before and after", &rand))
}
