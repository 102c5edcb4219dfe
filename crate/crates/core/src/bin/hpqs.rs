//! Command-line front end: experiment runs, record comparison, and a fast
//! invariant selftest.

use clap::{Parser, Subcommand};
use hpqs::autodiff::Tensor;
use hpqs::error::Result;
use hpqs::gradcheck;
use hpqs::harness::config::load_config;
use hpqs::harness::metrics::{emit_comparison, RunRecord};
use hpqs::harness::mnist::dataset_root;
use hpqs::harness::runner::run_experiment;
use hpqs::quantum::{exact_expectation, exact_expectation_grad, random_circuit, Observable};
use hpqs::shots::{hoeffding_epsilon, sample_probs, ShotBudget};
use hpqs::tasks::qml::{build_qml, QmlConfig};
use hpqs::tasks::qpa::qpa_qubit_count;
use hpqs::tasks::Variant;
use hpqs::{rng, Error};
use rand::Rng;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "hpqs", version, about = "Hybrid quantum/classical experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the experiment described by a config file.
    Run {
        /// TOML experiment description.
        #[arg(long)]
        config: PathBuf,
        /// Dotted-path overrides, e.g. --set lambda=0.5 or --set arch.var_layers=2.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
    },
    /// Tabulate finished runs side by side.
    Compare {
        /// record.json files produced by `run`.
        #[arg(required = true)]
        records: Vec<PathBuf>,
    },
    /// Fast end-to-end invariant checks.
    Selftest,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(u8::try_from(e.exit_code()).unwrap_or(1))
        }
    }
}

fn dispatch(command: &Command) -> Result<()> {
    match command {
        Command::Run { config, sets } => run(config, sets),
        Command::Compare { records } => compare(records),
        Command::Selftest => selftest(),
    }
}

fn run(config_path: &PathBuf, sets: &[String]) -> Result<()> {
    let config = load_config(config_path, sets)?;
    println!(
        "task {} / variant {} / noise {} / {} seed(s)",
        config.task.name(),
        config.variant,
        config.noise,
        config.seeds.len()
    );
    let record = run_experiment(&config, &dataset_root())?;
    let (_, table) = emit_comparison(std::slice::from_ref(&record))?;
    print!("{table}");
    println!("wrote artifacts to {}", config.output_dir.display());
    Ok(())
}

fn compare(paths: &[PathBuf]) -> Result<()> {
    let mut records = Vec::with_capacity(paths.len());
    for p in paths {
        let text = std::fs::read_to_string(p).map_err(|e| Error::io(p.display().to_string(), e))?;
        records.push(RunRecord::from_json(&text)?);
    }
    let (csv, table) = emit_comparison(&records)?;
    print!("{table}");
    println!();
    print!("{csv}");
    Ok(())
}

fn selftest() -> Result<()> {
    for (name, suite) in [
        ("simulator", suite_simulator as fn() -> Result<()>),
        ("gradients", suite_gradients),
        ("sampling", suite_sampling),
        ("reductions", suite_reductions),
        ("chunking", suite_chunking),
    ] {
        suite().map_err(|e| Error::Internal(format!("selftest {name}: {e}")))?;
        println!("ok {name}");
    }
    Ok(())
}

fn check(cond: bool, what: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Internal(what.to_string()))
    }
}

fn suite_simulator() -> Result<()> {
    let mut r = rng::from_seed(11);
    for case in 0..40 {
        let n = 1 + (case % 6);
        let (c, theta) = random_circuit(&mut r, n, 20);
        let sv = c.simulate(&theta)?;
        check((sv.norm() - 1.0).abs() <= 1e-10, "norm drift")?;
        let probs = c.exact_probabilities(&theta)?;
        check((probs.iter().sum::<f64>() - 1.0).abs() <= 1e-10, "probability sum")?;

        if n > 1 {
            // CNOT twice is the identity; RY(t) then RY(-t) likewise.
            let mut c2 = c.clone();
            c2.cnot(0, n - 1)?;
            c2.cnot(0, n - 1)?;
            c2.ry(0)?;
            c2.ry(0)?;
            let t = r.random_range(-3.0..3.0);
            let mut theta2 = theta.clone();
            theta2.extend([t, -t]);
            let sv2 = c2.simulate(&theta2)?;
            let drift = sv
                .amplitudes()
                .iter()
                .zip(sv2.amplitudes())
                .map(|(a, b)| (a - b).norm())
                .fold(0.0f64, f64::max);
            check(drift <= 1e-10, "gate identity")?;
        }
    }
    Ok(())
}

fn suite_gradients() -> Result<()> {
    let mut r = rng::from_seed(23);
    let (c, theta) = random_circuit(&mut r, 3, 14);
    let obs = Observable::grouped_z(&[0, 2]);
    let analytic = exact_expectation_grad(&c, &theta, &obs)?;
    for slot in 0..theta.len() {
        let mut hi = theta.clone();
        let mut lo = theta.clone();
        hi[slot] += 1e-5;
        lo[slot] -= 1e-5;
        let fd = (exact_expectation(&c.simulate(&hi)?, &obs)?
            - exact_expectation(&c.simulate(&lo)?, &obs)?)
            / 2e-5;
        check(gradcheck::rel_err(analytic[slot], fd) <= 1e-6, "parameter-shift vs fd")?;
    }

    let a = Tensor::uniform(vec![2, 3], -1.0, 1.0, &mut r);
    let b = Tensor::uniform(vec![3, 2], -1.0, 1.0, &mut r);
    let worst = gradcheck::max_grad_discrepancy(&[a, b], 1e-5, &mut |tape, ids| {
        let m = tape.matmul(ids[0], ids[1])?;
        let s = tape.softmax(m)?;
        let l = tape.log(s)?;
        tape.mean(l)
    })?;
    check(worst <= 1e-6, "autodiff vs fd")?;
    Ok(())
}

fn suite_sampling() -> Result<()> {
    let mut r = rng::from_seed(37);
    let (c, theta) = random_circuit(&mut r, 4, 24);
    let probs = c.exact_probabilities(&theta)?;
    let budget = ShotBudget::from_multiplier(62_500.0, 4)?;
    let emp = sample_probs(&probs, &budget, 99)?.probabilities();
    let tv = 0.5 * probs.iter().zip(&emp).map(|(p, q)| (p - q).abs()).sum::<f64>();
    check(tv <= 0.01, "sampler total variation")?;

    let eps = hoeffding_epsilon(4, 320, 0.05)?;
    check((eps - 0.3037).abs() <= 1e-4, "shot-bound formula")?;
    Ok(())
}

fn suite_reductions() -> Result<()> {
    // With the blend pinned at an endpoint the hybrid must agree bit for bit
    // with the corresponding single-branch model.
    let mut r = rng::from_seed(53);
    let feats = Tensor::uniform(vec![6, 16], 0.0, 1.0, &mut r);
    for (lambda, pure) in [(1.0, Variant::PqcFinite), (0.0, Variant::Nqs)] {
        let hybrid_cfg =
            QmlConfig { variant: Variant::HpqsFinite, lambda, ..QmlConfig::default() };
        let pure_cfg = QmlConfig { variant: pure, ..QmlConfig::default() };
        let hybrid = build_qml(&hybrid_cfg, 7)?;
        let pure = build_qml(&pure_cfg, 7)?;
        let out_h = qml_forward(&hybrid, &feats)?;
        let out_p = qml_forward(&pure, &feats)?;
        check(out_h == out_p, "endpoint blend equality")?;
    }
    Ok(())
}

fn qml_forward(qm: &hpqs::tasks::qml::QmlModel, feats: &Tensor) -> Result<Vec<f64>> {
    let b = feats.shape()[0];
    let probs = if qm.model.uses_quantum() {
        let branch = qm.model.quantum()?;
        let mut data = Vec::with_capacity(b * 16);
        for row in 0..b {
            let angles = qm.circuit.angles(&feats.data()[row * 16..(row + 1) * 16])?;
            let theta_full = branch.full_theta(&qm.pset, &angles)?;
            data.extend(branch.distribution(&theta_full, rng::derive_seed(7, "selftest", &[row as u64]))?);
        }
        Some(Tensor::new(vec![b, 16], data)?)
    } else {
        None
    };
    let mut tape = hpqs::autodiff::Tape::new();
    let bind = qm.pset.bind(&mut tape)?;
    let out = qm.model.expectation_predict_batch(&mut tape, &bind, feats, probs.as_ref())?;
    Ok(tape.value(out.out).data().to_vec())
}

fn suite_chunking() -> Result<()> {
    check(qpa_qubit_count(204_100, 512)? == 9, "chunk qubit count (204100, 512)")?;
    check(qpa_qubit_count(1_032_192, 4096)? == 8, "chunk qubit count (1032192, 4096)")?;
    let mut r = rng::from_seed(71);
    for _ in 0..20 {
        let m = r.random_range(2..500_000usize);
        let n_mlp = r.random_range(1..2048usize);
        let n_ch = m.div_ceil(n_mlp);
        let expect = if n_ch <= 1 { 0 } else { (n_ch as f64).log2().ceil() as usize };
        check(qpa_qubit_count(m, n_mlp)? == expect, "chunk qubit count vs oracle")?;
    }
    Ok(())
}
