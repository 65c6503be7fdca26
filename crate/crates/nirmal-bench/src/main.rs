//! Command-line experiment runner.
//!
//! Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 the
//! requested run diverged.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nirmal_bench::compare::{compare_rows, render_csv, render_text};
use nirmal_bench::fetch::{fetch_dataset, FASHION, MNIST};
use nirmal_bench::funcbench::{run_function_bench, OptimizerSpec};
use nirmal_bench::outputs::{emit_funcbench, emit_outputs};
use nirmal_bench::testfn::{identity_quadratic, rosenbrock_fn, TestFunction};
use nirmal_bench::train::{run_training, DatasetChoice, RunConfig, RunStatus};
use nirmal_core::optim::{AdamConfig, NirmalConfig, SgdMomentumConfig};
use nirmal_core::Error;

#[derive(Parser)]
#[command(name = "nirmal-bench", version, about = "Optimizer benchmark harness")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a classifier and write history/metrics/confusion/chart files.
    Train(TrainArgs),
    /// Run optimizers on an analytic test function.
    Funcbench(FuncbenchArgs),
    /// Compare completed runs by their metrics.json files.
    Compare(CompareArgs),
    /// Download a dataset's IDX archives with checksum verification.
    Fetch(FetchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum OptimizerName {
    Nirmal,
    Adam,
    Sgdm,
}

#[derive(Clone, Copy, ValueEnum)]
enum DatasetName {
    Mnist,
    Fashion,
    Synth,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_enum)]
    optimizer: OptimizerName,
    #[arg(long, value_enum)]
    dataset: DatasetName,
    /// Directory with the IDX files (mnist/fashion only).
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for history.csv, metrics.json, confusion_matrix.csv, history.svg.
    #[arg(long)]
    out: PathBuf,
    /// Evaluate the test set every N epochs (the final epoch always is).
    #[arg(long, default_value_t = 1)]
    eval_every: usize,

    /// Learning rate override (any optimizer).
    #[arg(long)]
    lr: Option<f64>,
    /// Weight-decay override (any optimizer).
    #[arg(long)]
    weight_decay: Option<f64>,
    /// First-moment decay μ (nirmal).
    #[arg(long)]
    mu: Option<f64>,
    /// Second-moment decay β (nirmal).
    #[arg(long)]
    beta: Option<f64>,
    /// Noise scale κ (nirmal).
    #[arg(long)]
    kappa: Option<f64>,
    /// Adaptive-component gain γ (nirmal).
    #[arg(long)]
    gamma: Option<f64>,
    /// Tanh-component gain λ (nirmal).
    #[arg(long)]
    lambda: Option<f64>,
    /// Component weights (nirmal).
    #[arg(long)]
    w_wazir: Option<f64>,
    #[arg(long)]
    w_elephant: Option<f64>,
    #[arg(long)]
    w_knight: Option<f64>,
    #[arg(long)]
    w_camel: Option<f64>,
    #[arg(long)]
    w_horse: Option<f64>,
    /// Numerical-stability term ε (nirmal, adam).
    #[arg(long)]
    eps: Option<f64>,
    /// First-moment decay β₁ (adam).
    #[arg(long)]
    beta1: Option<f64>,
    /// Second-moment decay β₂ (adam).
    #[arg(long)]
    beta2: Option<f64>,
    /// Momentum coefficient (sgdm).
    #[arg(long)]
    momentum: Option<f64>,
}

#[derive(Args)]
struct FuncbenchArgs {
    #[arg(long, value_enum)]
    function: FunctionName,
    /// Problem dimension (quadratic: any ≥ 1; rosenbrock: ≥ 2).
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Comma-separated optimizer list, e.g. nirmal,adam,sgdm.
    #[arg(long, value_enum, value_delimiter = ',', required = true)]
    optimizers: Vec<OptimizerName>,
    #[arg(long, default_value_t = 1000)]
    steps: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for trajectory CSVs and summary.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum FunctionName {
    Quadratic,
    Rosenbrock,
}

#[derive(Args)]
struct CompareArgs {
    /// Run directories (each holding a metrics.json).
    #[arg(required = true, num_args = 2..)]
    dirs: Vec<PathBuf>,
    /// Where to write the CSV form of the table.
    #[arg(long, default_value = "compare.csv")]
    csv: PathBuf,
}

#[derive(Args)]
struct FetchArgs {
    #[arg(long, value_enum)]
    dataset: FetchDatasetName,
    /// Directory the IDX archives are written into.
    #[arg(long)]
    data_dir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum FetchDatasetName {
    Mnist,
    Fashion,
}

/// A flag that applies to no field of the selected optimizer is a
/// configuration error, not a silent no-op.
fn reject_unused(name: &str, value: Option<f64>, optimizer: &str) -> Result<(), Error> {
    if value.is_some() {
        return Err(Error::Domain(format!(
            "--{name} does not apply to optimizer {optimizer}"
        )));
    }
    Ok(())
}

fn build_optimizer(a: &TrainArgs) -> Result<OptimizerSpec, Error> {
    match a.optimizer {
        OptimizerName::Nirmal => {
            let mut cfg = NirmalConfig::default();
            if let Some(v) = a.lr { cfg.lr = v; }
            if let Some(v) = a.weight_decay { cfg.weight_decay = v; }
            if let Some(v) = a.mu { cfg.mu = v; }
            if let Some(v) = a.beta { cfg.beta = v; }
            if let Some(v) = a.kappa { cfg.kappa = v; }
            if let Some(v) = a.gamma { cfg.gamma = v; }
            if let Some(v) = a.lambda { cfg.lambda = v; }
            if let Some(v) = a.w_wazir { cfg.w_wazir = v; }
            if let Some(v) = a.w_elephant { cfg.w_elephant = v; }
            if let Some(v) = a.w_knight { cfg.w_knight = v; }
            if let Some(v) = a.w_camel { cfg.w_camel = v; }
            if let Some(v) = a.w_horse { cfg.w_horse = v; }
            if let Some(v) = a.eps { cfg.eps = v; }
            for (name, value) in [("beta1", a.beta1), ("beta2", a.beta2), ("momentum", a.momentum)] {
                reject_unused(name, value, "nirmal")?;
            }
            Ok(OptimizerSpec::Nirmal(cfg))
        }
        OptimizerName::Adam => {
            let mut cfg = AdamConfig::default();
            if let Some(v) = a.lr { cfg.lr = v; }
            if let Some(v) = a.weight_decay { cfg.weight_decay = v; }
            if let Some(v) = a.beta1 { cfg.beta1 = v; }
            if let Some(v) = a.beta2 { cfg.beta2 = v; }
            if let Some(v) = a.eps { cfg.eps = v; }
            for (name, value) in [
                ("mu", a.mu), ("beta", a.beta), ("kappa", a.kappa), ("gamma", a.gamma),
                ("lambda", a.lambda), ("w-wazir", a.w_wazir), ("w-elephant", a.w_elephant),
                ("w-knight", a.w_knight), ("w-camel", a.w_camel), ("w-horse", a.w_horse),
                ("momentum", a.momentum),
            ] {
                reject_unused(name, value, "adam")?;
            }
            Ok(OptimizerSpec::Adam(cfg))
        }
        OptimizerName::Sgdm => {
            let mut cfg = SgdMomentumConfig::default();
            if let Some(v) = a.lr { cfg.lr = v; }
            if let Some(v) = a.weight_decay { cfg.weight_decay = v; }
            if let Some(v) = a.momentum { cfg.momentum = v; }
            for (name, value) in [
                ("mu", a.mu), ("beta", a.beta), ("kappa", a.kappa), ("gamma", a.gamma),
                ("lambda", a.lambda), ("w-wazir", a.w_wazir), ("w-elephant", a.w_elephant),
                ("w-knight", a.w_knight), ("w-camel", a.w_camel), ("w-horse", a.w_horse),
                ("eps", a.eps), ("beta1", a.beta1), ("beta2", a.beta2),
            ] {
                reject_unused(name, value, "sgdm")?;
            }
            Ok(OptimizerSpec::Sgdm(cfg))
        }
    }
}

fn default_specs(name: OptimizerName) -> OptimizerSpec {
    match name {
        OptimizerName::Nirmal => OptimizerSpec::Nirmal(NirmalConfig::default()),
        OptimizerName::Adam => OptimizerSpec::Adam(AdamConfig::default()),
        OptimizerName::Sgdm => OptimizerSpec::Sgdm(SgdMomentumConfig::default()),
    }
}

fn build_function(name: FunctionName, dim: usize) -> Result<TestFunction, Error> {
    match name {
        FunctionName::Quadratic => identity_quadratic(dim),
        FunctionName::Rosenbrock => rosenbrock_fn(dim),
    }
}

const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_DIVERGED: u8 = 4;

fn exit_for(err: &Error) -> u8 {
    match err {
        Error::Io(_) | Error::Format(_) => EXIT_IO,
        _ => EXIT_CONFIG,
    }
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.cmd {
        Cmd::Train(a) => {
            let optimizer = build_optimizer(&a)?;
            let dataset = match a.dataset {
                DatasetName::Mnist => DatasetChoice::Mnist,
                DatasetName::Fashion => DatasetChoice::Fashion,
                DatasetName::Synth => DatasetChoice::Synth,
            };
            let cfg = RunConfig {
                data_dir: a.data_dir,
                epochs: a.epochs,
                batch_size: a.batch_size,
                seed: a.seed,
                eval_every: a.eval_every,
                ..RunConfig::new(optimizer, dataset, a.out)
            };
            let record = run_training(&cfg)?;
            emit_outputs(&record, &cfg.out_dir)?;
            match record.status {
                RunStatus::Ok => {
                    let last = record.rows.last().expect("epochs >= 1");
                    println!(
                        "{} on {}: test_acc {:.4}, test_loss {:.4} ({} epochs, {:.1}s) -> {}",
                        record.config.optimizer.name(),
                        record.config.dataset.name(),
                        last.test_acc,
                        last.test_loss,
                        record.rows.len(),
                        record.wall_time_s,
                        cfg.out_dir.display(),
                    );
                    Ok(0)
                }
                RunStatus::Diverged => {
                    eprintln!(
                        "run diverged after {} completed epoch(s); outputs in {}",
                        record.rows.len(),
                        cfg.out_dir.display(),
                    );
                    Ok(EXIT_DIVERGED)
                }
            }
        }
        Cmd::Funcbench(a) => {
            let fun = build_function(a.function, a.dim)?;
            let specs: Vec<OptimizerSpec> =
                a.optimizers.iter().map(|&n| default_specs(n)).collect();
            let records = run_function_bench(&fun, &specs, a.steps, a.seed)?;
            emit_funcbench(&records, &a.out)?;
            for rec in &records {
                match rec.diverged_at {
                    None => println!(
                        "{} on {}: final f {:.6e} after {} steps",
                        rec.optimizer, rec.function, rec.final_f, rec.steps
                    ),
                    Some(at) => println!(
                        "{} on {}: diverged at step {at}",
                        rec.optimizer, rec.function
                    ),
                }
            }
            Ok(0)
        }
        Cmd::Compare(a) => {
            let rows = compare_rows(&a.dirs)?;
            print!("{}", render_text(&rows));
            std::fs::write(&a.csv, render_csv(&rows))?;
            println!("csv written to {}", a.csv.display());
            Ok(0)
        }
        Cmd::Fetch(a) => {
            let ds = match a.dataset {
                FetchDatasetName::Mnist => &MNIST,
                FetchDatasetName::Fashion => &FASHION,
            };
            for line in fetch_dataset(ds, &a.data_dir)? {
                println!("{line}");
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_for(&err))
        }
    }
}
