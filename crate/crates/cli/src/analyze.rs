use std::path::Path;

use dib_core::analysis::{confusion_matrix, importance_report, info_plane_export, ConfusionMatrix};
use dib_core::run::{FeatureRecord, RunDirectory};
use dib_core::training::{CheckpointRef, Trajectory};
use rayon::prelude::*;

use crate::{CliResult, Failure};

/// Worker pool capped by `DIB_THREADS` when set.
fn pool() -> CliResult<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("DIB_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Failure::config(format!("DIB_THREADS must be a positive integer, got `{v}`")))?;
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Failure::config(e.to_string()))
}

/// Checkpoint whose total KL is nearest `budget`; ties go to the earlier step.
fn nearest_checkpoint<'a>(t: &'a Trajectory, budget: f64) -> Option<(&'a CheckpointRef, f64)> {
    t.checkpoints
        .iter()
        .filter_map(|c| t.points.iter().find(|p| p.step == c.step).map(|p| (c, p.kl_total_bits)))
        .min_by(|a, b| {
            (a.1 - budget)
                .abs()
                .total_cmp(&(b.1 - budget).abs())
                .then(a.0.step.cmp(&b.0.step))
        })
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn fmt_budget(b: f64) -> String {
    format!("{b}").replace('.', "p")
}

pub fn run(
    root: &Path,
    budgets: &[f64],
    features: Option<&[String]>,
    at_budget: Option<&[f64]>,
    threshold: f64,
) -> CliResult {
    let run = RunDirectory::open(root)?;
    let manifest = run.manifest()?;
    let records = run.features()?;
    let trajectory = run.trajectory()?;
    if trajectory.points.is_empty() || trajectory.checkpoints.is_empty() {
        return Err(Failure::config(format!(
            "{} has no recorded trajectory points or checkpoints",
            root.display()
        )));
    }
    if budgets.is_empty() || budgets.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Failure::config("--budgets must be non-empty and strictly ascending"));
    }
    if !(threshold >= 0.0) {
        return Err(Failure::config("--threshold must be non-negative"));
    }

    let selected: Vec<&FeatureRecord> = match features {
        None => records.iter().collect(),
        Some(names) => {
            let mut out = Vec::new();
            for n in names {
                match records.iter().find(|r| &r.spec.name == n) {
                    Some(r) => out.push(r),
                    None => {
                        let valid: Vec<&str> = records.iter().map(|r| r.spec.name.as_str()).collect();
                        return Err(Failure::config(format!(
                            "unknown feature `{n}`; valid features: {}",
                            valid.join(", ")
                        )));
                    }
                }
            }
            out
        }
    };
    let distributed = trajectory.model.bottleneck == dib_core::model::Bottleneck::Distributed;

    // Build every artifact before touching the filesystem.
    let importance = importance_report(&trajectory, budgets, threshold)?;
    let plane = info_plane_export(&trajectory, budgets)?;

    let mut jobs = Vec::new();
    for &b in at_budget.unwrap_or(budgets) {
        let (c, _) = nearest_checkpoint(&trajectory, b).expect("at least one checkpoint");
        jobs.push((b, c.clone()));
    }
    let mut checkpoints = Vec::new();
    for (_, c) in &jobs {
        if !checkpoints.iter().any(|(r, _): &(String, _)| r == &c.reference) {
            checkpoints.push((c.reference.clone(), run.checkpoint(&c.reference, &manifest.schema_hash)?));
        }
    }
    let matrices: Vec<(f64, ConfusionMatrix)> = if distributed {
        let tasks: Vec<(f64, &CheckpointRef, &FeatureRecord)> = jobs
            .iter()
            .flat_map(|(b, c)| selected.iter().map(move |f| (*b, c, *f)))
            .collect();
        pool()?.install(|| {
            tasks
                .par_iter()
                .map(|(b, c, f)| {
                    let ckpt = &checkpoints.iter().find(|(r, _)| r == &c.reference).expect("loaded").1;
                    confusion_matrix(ckpt, &c.reference, &f.spec, f.index, &f.matrix_values).map(|m| (*b, m))
                })
                .collect::<Result<Vec<_>, _>>()
        })?
    } else {
        eprintln!("fused run: per-feature confusion matrices are not defined, skipping");
        Vec::new()
    };

    let conf_dir = run.export_dir("confusion")?;
    for (b, m) in &matrices {
        m.write(&conf_dir, &format!("{}_budget{}bits_step{}", file_stem(&m.feature), fmt_budget(*b), m.step))?;
    }
    importance.write(&run.export_dir("importance")?)?;
    plane.write(&run.export_dir("infoplane")?)?;

    for s in &importance.snapshots {
        println!(
            "budget {:>6} bits: step {:>7}, total {:.3} bits, ranking {}",
            s.budget_bits,
            s.step,
            s.kl_total_bits,
            s.ranking.join(" > ")
        );
    }
    for b in &importance.unavailable_budgets {
        println!("budget {b:>6} bits: unavailable");
    }
    println!("wrote {} confusion matrices", matrices.len());
    Ok(())
}
