//! Grid runner: trains every cell, then writes its tables and plots.

pub mod config;
pub mod output;
pub mod run;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

pub use config::{AgentKind, Cell, ExperimentConfig, Normalization, ScenarioName};
pub use run::{run_cell, stream, window_trace, CellOutcome, WindowSample};

use crate::mdp::{write_trace, TraceHeader};
use crate::pareto::{NormalizationSpec, PolicyPoint};
use crate::Error;
use output::{policy_table, radar_svg, summary_table, window_table, write_files, Manifest, PolicyEntry};

#[derive(Debug)]
pub struct CellReport {
    pub cell: Cell,
    pub dir: PathBuf,
    pub result: Result<Vec<PolicyPoint>, String>,
}

#[derive(Debug, Default)]
pub struct GridReport {
    pub cells: Vec<CellReport>,
}

impl GridReport {
    pub fn failures(&self) -> usize {
        self.cells.iter().filter(|c| c.result.is_err()).count()
    }
}

/// Trains `cell` and writes its directory.
pub fn execute_cell(cell: &Cell, dir: &Path) -> Result<Vec<PolicyPoint>, Error> {
    let outcome = run_cell(cell)?;
    let spec = NormalizationSpec { reward_max: cell.reward_max };
    let title = format!("{} seed {}", cell.group(), cell.seed);
    let files = [
        ("policies.csv", policy_table(&cell.objectives, &outcome.policies)),
        ("summary.csv", summary_table(&cell.objectives, &outcome.policies)),
        ("window_trace.csv", window_table(&outcome.window)),
        ("radar.svg", radar_svg(&title, &outcome.policies, &spec)),
    ];
    let mut digests = write_files(dir, &files)?;
    if let Some((fairness, trace)) = &outcome.trace {
        let env = cell.scenario.build()?;
        let header = TraceHeader { schema: env.schema(), fairness: fairness.clone(), action_count: env.action_count() };
        let mut body = Vec::new();
        write_trace(&mut body, &header, trace)?;
        std::fs::write(dir.join("trace.jsonl"), &body)?;
        digests.push(output::FileDigest { name: "trace.jsonl".into(), sha256: output::sha256_hex(&body) });
    }
    let manifest = Manifest {
        config_hash: cell.hash(),
        farel_version: env!("CARGO_PKG_VERSION"),
        config: cell,
        steps: outcome.steps,
        episodes: outcome.episodes,
        policies: outcome
            .policies
            .iter()
            .map(|p| PolicyEntry { provenance: p.provenance.clone(), returns: p.returns.clone() })
            .collect(),
        files: digests,
    };
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(outcome.policies)
}

/// Runs every cell in parallel under `root`. A failing cell is reported and
/// leaves the others untouched. Seeds of one configuration are pooled into
/// its own `policies.csv` and `summary.csv`.
pub fn run_grid(cfg: &ExperimentConfig, root: &Path) -> Result<GridReport, Error> {
    let cells = cfg.cells()?;
    std::fs::create_dir_all(root)?;
    let reports: Vec<CellReport> = cells
        .into_par_iter()
        .map(|cell| {
            let dir = root.join(cell.relative_dir());
            let result = match catch_unwind(AssertUnwindSafe(|| execute_cell(&cell, &dir))) {
                Ok(Ok(points)) => Ok(points),
                Ok(Err(e)) => Err(e.to_string()),
                Err(panic) => Err(panic
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panic".into())),
            };
            if let Err(e) = &result {
                log::error!("cell {} failed: {e}", dir.display());
            }
            CellReport { cell, dir, result }
        })
        .collect();

    let mut groups: BTreeMap<String, (Vec<crate::mdp::Objective>, Vec<PolicyPoint>)> = BTreeMap::new();
    for r in &reports {
        let entry = groups.entry(r.cell.group()).or_insert_with(|| (r.cell.objectives.clone(), Vec::new()));
        if let Ok(points) = &r.result {
            entry.1.extend(points.iter().cloned());
        }
    }
    for (group, (objectives, points)) in groups {
        let files = [
            ("policies.csv", policy_table(&objectives, &points)),
            ("summary.csv", summary_table(&objectives, &points)),
        ];
        write_files(&root.join(group), &files)?;
    }
    Ok(GridReport { cells: reports })
}
