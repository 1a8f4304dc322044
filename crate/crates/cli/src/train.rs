use std::hash::{BuildHasher, Hasher};
use std::path::Path;
use std::time::Instant;

use dib_core::data::{load_csv, Schema};
use dib_core::math::stream_rng;
use dib_core::model::{DibModel, PredictionHead};
use dib_core::run::{FeatureRecord, FinalMetrics, RunConfig, RunDirectory, RunManifest, SeedSource};
use dib_core::training::{evaluate, DirectorySink, Trainer};

use crate::{ingestion, CliResult};

/// Seed from the standard library's per-process random hasher keys.
fn draw_seed() -> u64 {
    let mut h = std::collections::hash_map::RandomState::new().build_hasher();
    h.write_u128(std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_nanos()).unwrap_or(0));
    h.finish()
}

/// Whether the config file sets `training.seed` explicitly.
fn config_sets_seed(path: &Path) -> bool {
    std::fs::read_to_string(path)
        .ok()
        .and_then(|t| serde_json::from_str::<serde_json::Value>(&t).ok())
        .is_some_and(|v| v.pointer("/training/seed").is_some())
}

pub fn run(data: &Path, schema_path: &Path, config: Option<&Path>, out: &Path, seed: Option<u64>) -> CliResult {
    let started = Instant::now();
    let schema = Schema::load(schema_path)?;
    let mut cfg = match config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let seed_source = match (seed, config.is_some_and(config_sets_seed)) {
        (Some(s), _) => {
            cfg.training.seed = s;
            SeedSource::Given
        }
        (None, true) => SeedSource::Given,
        (None, false) => {
            cfg.training.seed = draw_seed();
            SeedSource::Drawn
        }
    };
    let table = load_csv(data, &schema).map_err(ingestion)?;
    if table.rejected_rows() > 0 {
        eprintln!("dropped {} rows with missing values", table.rejected_rows());
    }

    let widths = table.features().iter().map(|f| f.encoded_width()).collect();
    let head = if table.task().is_classification() {
        PredictionHead::Classification { classes: table.output_width() }
    } else {
        PredictionHead::Regression
    };
    let model = DibModel::new(cfg.model.clone(), widths, head, &mut stream_rng(cfg.training.seed, 0))?;
    let mut trainer = Trainer::new(cfg.training.clone(), &table, model)?;

    let run = RunDirectory::create(out)?;
    run.write_features(&FeatureRecord::from_table(&table, cfg.training.seed))?;
    let mut sink = DirectorySink::new(run.root())?;
    let splits = table.splits();
    let mut manifest = RunManifest {
        version: dib_core::run::MANIFEST_VERSION,
        data: Some(data.display().to_string()),
        schema_hash: table.schema_hash(),
        seed: cfg.training.seed,
        seed_source,
        config: cfg.clone(),
        schema: schema.clone(),
        rows: table.n_rows(),
        rejected_rows: table.rejected_rows(),
        split_sizes: [splits.train.len(), splits.validation.len(), splits.test.len()],
        wall_clock_seconds: 0.0,
        final_metrics: None,
    };
    eprintln!(
        "training {} steps (seed {}) on {} rows",
        cfg.training.total_steps(),
        cfg.training.seed,
        splits.train.len()
    );

    let report_every = (cfg.training.total_steps() / 20).max(1);
    let mut next_report = report_every;
    while !trainer.is_finished() {
        if let Err(e) = trainer.step(&mut sink) {
            // Keep what was recorded before the failure.
            run.write_trajectory(trainer.trajectory())?;
            manifest.wall_clock_seconds = started.elapsed().as_secs_f64();
            run.write_manifest(&manifest)?;
            return Err(e.into());
        }
        if trainer.current_step() >= next_report {
            next_report += report_every;
            eprintln!("{}", trainer.trajectory().summary());
        }
    }

    let opts = trainer.eval_options();
    let validation = evaluate(trainer.model(), trainer.validation(), table.target_spec(), &opts)?;
    let test = evaluate(trainer.model(), &table.encode_rows(&splits.test), table.target_spec(), &opts)?;
    let last = trainer.trajectory().last().expect("final step is evaluated");
    manifest.final_metrics = Some(FinalMetrics {
        step: last.step,
        beta: last.beta,
        validation,
        test,
    });
    run.write_trajectory(trainer.trajectory())?;
    manifest.wall_clock_seconds = started.elapsed().as_secs_f64();
    run.write_manifest(&manifest)?;
    println!(
        "wrote {} ({} trajectory rows, {} checkpoints)",
        out.display(),
        trainer.trajectory().points.len(),
        trainer.trajectory().checkpoints.len()
    );
    Ok(())
}
