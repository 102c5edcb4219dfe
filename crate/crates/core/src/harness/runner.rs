//! Experiment orchestration: dataset resolution, per-seed execution, and
//! artifact writes.

use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, TaskKind};
use crate::harness::metrics::{seed_metrics_json, summary_csv, RunRecord, SeedSeries};
use crate::harness::mnist::load_mnist;
use crate::tasks::data::ImageSet;
use crate::tasks::qml::{run_qml, QmlConfig};
use crate::tasks::qpa::{run_qpa, QpaConfig};
use crate::tasks::qt::{run_qt, QtConfig, QtTarget};
use crate::tasks::RunMetrics;
use std::path::Path;
use std::time::Instant;

/// Map the generic experiment file onto the task's own config.
pub fn qml_task_config(config: &ExperimentConfig) -> QmlConfig {
    let mut c = QmlConfig { variant: config.variant(), noise: config.noise_preset(), ..QmlConfig::default() };
    if let Some(v) = config.lambda {
        c.lambda = v;
    }
    if let Some(v) = config.shot_multiplier {
        c.shot_multiplier = v;
    }
    if let Some(v) = config.epochs {
        c.epochs = v;
    }
    if let Some(v) = config.learning_rate {
        c.lr = v;
    }
    if let Some(v) = config.batch_size {
        c.batch_size = v;
    }
    if let Some(v) = config.arch.var_layers {
        c.var_layers = v;
    }
    if let Some(v) = config.arch.nqs_hidden {
        c.nqs_hidden = v;
    }
    c
}

pub fn qt_task_config(config: &ExperimentConfig) -> Result<QtConfig> {
    let mut c = match config.arch.qt_target.as_deref() {
        None | Some("desk") => QtConfig::desk(),
        Some("full") => QtConfig::default(),
        Some(other) => {
            return Err(Error::Config(format!(
                "unknown qt_target '{other}' (expected desk or full)"
            )))
        }
    };
    c.variant = config.variant();
    c.noise = config.noise_preset();
    if let Some(v) = config.lambda {
        c.lambda = v;
    }
    if let Some(v) = config.shot_multiplier {
        c.shot_multiplier = v;
    }
    if let Some(v) = config.epochs {
        c.epochs = v;
    }
    if let Some(v) = config.learning_rate {
        c.lr = v;
    }
    if let Some(v) = config.batch_size {
        c.batch_size = v;
    }
    if let Some(v) = config.arch.ansatz_layers {
        c.ansatz_layers = v;
    }
    if let Some(v) = config.arch.nqs_hidden {
        c.nqs_hidden = v;
    }
    if let Some(v) = config.arch.bond_g {
        c.bond_g = v;
    }
    if let Some(v) = config.arch.bond_h {
        c.bond_h = v;
    }
    Ok(c)
}

pub fn qpa_task_config(config: &ExperimentConfig) -> QpaConfig {
    let mut c = QpaConfig { variant: config.variant(), noise: config.noise_preset(), ..QpaConfig::default() };
    if let Some(v) = config.lambda {
        c.lambda = v;
    }
    if let Some(v) = config.shot_multiplier {
        c.shot_multiplier = v;
    }
    if let Some(v) = config.epochs {
        c.epochs = v;
    }
    if let Some(v) = config.learning_rate {
        c.lr = v;
    }
    if let Some(v) = config.arch.ansatz_layers {
        c.ansatz_layers = v;
    }
    if let Some(v) = config.arch.nqs_hidden {
        c.nqs_hidden = v;
    }
    if let Some(v) = config.arch.bond_g {
        c.bond_g = v;
    }
    if let Some(v) = config.arch.bond_h {
        c.bond_h = v;
    }
    if let Some(v) = config.arch.steps_per_epoch {
        c.steps_per_epoch = v;
    }
    if let Some(v) = config.arch.n_probe {
        c.n_probe = v;
    }
    if let Some(v) = config.arch.weight_decay {
        c.weight_decay = v;
    }
    c
}

fn limited(set: ImageSet, limit: Option<usize>) -> ImageSet {
    match limit {
        Some(l) => set.take(l),
        None => set,
    }
}

/// Execute every seed of one experiment and write its artifacts
/// (`metrics-seed<N>.json`, `summary.csv`, `record.json`) under the
/// configured output directory.
pub fn run_experiment(config: &ExperimentConfig, data_root: &Path) -> Result<RunRecord> {
    config.validate()?;
    let started = Instant::now();

    let run_one: Box<dyn Fn(u64) -> Result<RunMetrics>> = match config.task {
        TaskKind::Qml => {
            let tc = qml_task_config(config);
            let pair = load_mnist(data_root)?;
            let train = limited(pair.train.filter_digits(&[3, 6]), config.arch.train_limit);
            let test = limited(pair.test.filter_digits(&[3, 6]), config.arch.test_limit);
            Box::new(move |seed| run_qml(&tc, &train, &test, seed))
        }
        TaskKind::Qt => {
            let tc = qt_task_config(config)?;
            // The reduced target trains on a 2000/500 subset by default.
            let (dtr, dte) = match tc.target {
                QtTarget::Desk => (Some(2000), Some(500)),
                QtTarget::Full => (None, None),
            };
            let pair = load_mnist(data_root)?;
            let train = limited(pair.train, config.arch.train_limit.or(dtr));
            let test = limited(pair.test, config.arch.test_limit.or(dte));
            Box::new(move |seed| run_qt(&tc, &train, &test, seed))
        }
        TaskKind::QpaGen => {
            let tc = qpa_task_config(config);
            Box::new(move |seed| run_qpa(&tc, seed))
        }
    };

    let mut per_seed = Vec::with_capacity(config.seeds.len());
    let mut trainable_count = 0;
    let mut n_shot = None;
    for (i, &seed) in config.seeds.iter().enumerate() {
        let m = run_one(seed)?;
        if i == 0 {
            trainable_count = m.trainable_count;
            n_shot = m.n_shot;
        }
        per_seed.push(SeedSeries::from_metrics(seed, &m));
    }

    let record = RunRecord {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: config.hash(),
        task: config.task.name().to_string(),
        variant: config.variant.clone(),
        noise: config.noise.clone(),
        trainable_count,
        n_shot,
        seeds: config.seeds.clone(),
        per_seed,
        duration_secs: started.elapsed().as_secs_f64(),
    };
    write_artifacts(config, &record)?;
    Ok(record)
}

fn write_string(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

fn write_artifacts(config: &ExperimentConfig, record: &RunRecord) -> Result<()> {
    let dir = &config.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    for series in &record.per_seed {
        let m = RunMetrics {
            epochs: series
                .losses
                .iter()
                .enumerate()
                .map(|(e, &loss)| crate::tasks::EpochRecord {
                    loss,
                    accuracy: series.accuracies.as_ref().map(|a| a[e]),
                })
                .collect(),
            trainable_count: record.trainable_count,
            n_shot: record.n_shot,
            initial_loss: series.initial_loss,
        };
        write_string(&dir.join(format!("metrics-seed{}.json", series.seed)), &seed_metrics_json(&m))?;
    }
    write_string(&dir.join("summary.csv"), &summary_csv(record))?;
    write_string(&dir.join("record.json"), &record.to_json())?;
    Ok(())
}
