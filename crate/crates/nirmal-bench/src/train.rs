//! The end-to-end training protocol: dataset → network → optimizer →
//! per-epoch history → final classification report.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nirmal_core::data::{batches, load_idx, normalize, synth_gaussian_blobs, BatchPlan, Dataset, NormStats};
use nirmal_core::metrics::{confusion, ClassificationReport, ConfusionMatrix};
use nirmal_core::nnet::{softmax_cross_entropy, LayerSpec, Network};
use nirmal_core::optim::{adam_step, nirmal_step, sgdm_step, OptState};
use nirmal_core::{Error, Result};
use serde::Serialize;

use crate::funcbench::OptimizerSpec;

/// Which dataset a run trains on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetChoice {
    Mnist,
    Fashion,
    Synth,
}

impl DatasetChoice {
    pub fn name(self) -> &'static str {
        match self {
            DatasetChoice::Mnist => "mnist",
            DatasetChoice::Fashion => "fashion",
            DatasetChoice::Synth => "synth",
        }
    }
}

/// Everything one training run needs; defaults follow the benchmark
/// protocol of 10 epochs at batch size 64.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub optimizer: OptimizerSpec,
    pub dataset: DatasetChoice,
    /// Directory holding the IDX files; unused for the synthetic dataset.
    pub data_dir: Option<PathBuf>,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    #[serde(skip)]
    pub out_dir: PathBuf,
    /// Evaluate the test set every this many epochs (the final epoch is
    /// always evaluated); rows between evaluations repeat the latest values.
    pub eval_every: usize,
}

impl RunConfig {
    pub fn new(optimizer: OptimizerSpec, dataset: DatasetChoice, out_dir: PathBuf) -> Self {
        Self {
            optimizer,
            dataset,
            data_dir: None,
            epochs: 10,
            batch_size: 64,
            seed: 0,
            out_dir,
            eval_every: 1,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Domain("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Domain("batch_size must be >= 1".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Domain("eval_every must be >= 1".into()));
        }
        if matches!(self.dataset, DatasetChoice::Mnist | DatasetChoice::Fashion)
            && self.data_dir.is_none()
        {
            return Err(Error::Domain(format!(
                "dataset {} needs --data-dir",
                self.dataset.name()
            )));
        }
        Ok(())
    }
}

/// One epoch's scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_loss: f64,
    pub test_acc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Ok,
    Diverged,
}

/// The complete result of `run_training`.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub config: RunConfig,
    pub rows: Vec<EpochRow>,
    pub status: RunStatus,
    /// Final test-set report and confusion matrix; absent when the run
    /// diverged before the first evaluation completed.
    pub report: Option<ClassificationReport>,
    pub confusion: Option<ConfusionMatrix>,
    /// Test-set predictions behind the final report, in dataset order.
    pub final_preds: Vec<usize>,
    pub norm_stats: Option<NormStats>,
    pub wall_time_s: f64,
}

/// Locates an IDX file, accepting either the plain or the gzipped name.
fn idx_path(dir: &Path, stem: &str) -> Result<PathBuf> {
    let plain = dir.join(stem);
    if plain.exists() {
        return Ok(plain);
    }
    let gz = dir.join(format!("{stem}.gz"));
    if gz.exists() {
        return Ok(gz);
    }
    Err(Error::Io(std::io::Error::new(
        std::io::ErrorKind::NotFound,
        format!("{} (or .gz) not found in {}", stem, dir.display()),
    )))
}

fn splitmix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Loads (train, test) for the configured dataset, normalized with
/// training-set statistics.
fn load_datasets(cfg: &RunConfig) -> Result<(Dataset, Dataset, NormStats)> {
    let (train_raw, test_raw) = match cfg.dataset {
        DatasetChoice::Synth => {
            let train = synth_gaussian_blobs(4, 250, 16, splitmix(cfg.seed, 0xA11CE))?;
            let test = synth_gaussian_blobs(4, 100, 16, splitmix(cfg.seed, 0xB0B))?;
            (train, test)
        }
        DatasetChoice::Mnist | DatasetChoice::Fashion => {
            let dir = cfg.data_dir.as_deref().expect("validated");
            let train = load_idx(
                &idx_path(dir, "train-images-idx3-ubyte")?,
                &idx_path(dir, "train-labels-idx1-ubyte")?,
            )?;
            let test = load_idx(
                &idx_path(dir, "t10k-images-idx3-ubyte")?,
                &idx_path(dir, "t10k-labels-idx1-ubyte")?,
            )?;
            (train, test)
        }
    };
    let (train, stats) = normalize(&train_raw, None)?;
    let (test, _) = normalize(&test_raw, Some(&stats))?;
    Ok((train, test, stats))
}

/// Builds the architecture for the dataset: the two-stage conv net for the
/// image datasets, a small MLP for the synthetic blobs.
fn build_network(dataset: DatasetChoice, sample_shape: [usize; 3], num_classes: usize) -> Result<Network> {
    match dataset {
        DatasetChoice::Mnist | DatasetChoice::Fashion => Network::new(
            sample_shape,
            &[
                LayerSpec::Conv2d { out_channels: 32, kernel: 3, stride: 1, padding: 1 },
                LayerSpec::Relu,
                LayerSpec::MaxPool2d { window: 2, stride: 2 },
                LayerSpec::Conv2d { out_channels: 64, kernel: 3, stride: 1, padding: 1 },
                LayerSpec::Relu,
                LayerSpec::MaxPool2d { window: 2, stride: 2 },
                LayerSpec::Flatten,
                LayerSpec::Dense { out_features: 128 },
                LayerSpec::Relu,
                LayerSpec::Dense { out_features: num_classes },
            ],
        ),
        DatasetChoice::Synth => Network::new(
            sample_shape,
            &[
                LayerSpec::Flatten,
                LayerSpec::Dense { out_features: 64 },
                LayerSpec::Relu,
                LayerSpec::Dense { out_features: num_classes },
            ],
        ),
    }
}

/// Applies one optimizer step to every parameter buffer of the network.
fn step_params(net: &mut Network, states: &mut [OptState], spec: &OptimizerSpec) -> Result<()> {
    for i in 0..net.num_param_buffers() {
        let (next, next_state) = {
            let theta = net.param_buffers()[i];
            let grad = net.grad_buffers()[i];
            match spec {
                OptimizerSpec::Nirmal(cfg) => nirmal_step(theta, grad, &states[i], cfg)?,
                OptimizerSpec::Adam(cfg) => adam_step(theta, grad, &states[i], cfg)?,
                OptimizerSpec::Sgdm(cfg) => sgdm_step(theta, grad, &states[i], cfg)?,
            }
        };
        net.set_param_buffer(i, next)?;
        states[i] = next_state;
    }
    Ok(())
}

/// Full-dataset evaluation in fixed chunks: mean loss, accuracy, and the
/// per-sample predictions in dataset order.
fn evaluate(net: &mut Network, ds: &Dataset) -> Result<(f64, f64, Vec<usize>)> {
    const CHUNK: usize = 256;
    let mut loss_sum = 0.0f64;
    let mut correct = 0u64;
    let mut preds = Vec::with_capacity(ds.len());
    let indices: Vec<usize> = (0..ds.len()).collect();
    for chunk in indices.chunks(CHUNK) {
        let (x, labels) = ds.gather(chunk)?;
        let logits = net.forward(&x)?;
        let (loss, _) = softmax_cross_entropy(&logits, &labels)?;
        loss_sum += loss as f64 * labels.len() as f64;
        let batch_preds = logits.argmax_last_axis()?;
        for (&p, &l) in batch_preds.iter().zip(&labels) {
            if p == l {
                correct += 1;
            }
        }
        preds.extend(batch_preds);
    }
    let n = ds.len() as f64;
    Ok((loss_sum / n, correct as f64 / n, preds))
}

/// Trains per the run configuration and returns the full record.
///
/// Deterministic given the config: initialization, batch order, and the
/// hybrid optimizer's noise are all keyed by `cfg.seed`. A non-finite loss
/// or gradient aborts the run with `Diverged` status instead of recording
/// non-finite cells.
pub fn run_training(cfg: &RunConfig) -> Result<RunRecord> {
    cfg.validate()?;
    let started = Instant::now();

    let (train, test, norm_stats) = load_datasets(cfg)?;
    let mut net = build_network(cfg.dataset, train.sample_shape(), train.num_classes)?;
    net.init_params(cfg.seed);

    let optimizer = resolve_optimizer_seed(&cfg.optimizer, cfg.seed);
    let needs_v = !matches!(optimizer, OptimizerSpec::Sgdm(_));
    let mut states: Vec<OptState> = Vec::with_capacity(net.num_param_buffers());
    for (i, theta) in net.param_buffers().iter().enumerate() {
        states.push(OptState::new(theta.shape(), needs_v, i as u64)?);
    }

    let plan = BatchPlan { batch_size: cfg.batch_size, seed: cfg.seed, drop_last: false };
    let mut rows: Vec<EpochRow> = Vec::with_capacity(cfg.epochs);
    let mut status = RunStatus::Ok;
    let mut last_eval: Option<(f64, f64, Vec<usize>)> = None;

    'epochs: for epoch in 1..=cfg.epochs {
        let mut loss_sum = 0.0f64;
        let mut correct = 0u64;
        let mut seen = 0u64;
        for batch in batches(&train, &plan, epoch)? {
            let (x, labels) = batch?;
            let logits = net.forward(&x)?;
            let (loss, dlogits) = softmax_cross_entropy(&logits, &labels)?;
            if !loss.is_finite() {
                status = RunStatus::Diverged;
                break 'epochs;
            }
            loss_sum += loss as f64 * labels.len() as f64;
            for (&p, &l) in logits.argmax_last_axis()?.iter().zip(&labels) {
                if p == l {
                    correct += 1;
                }
            }
            seen += labels.len() as u64;
            net.backward(&dlogits)?;
            match step_params(&mut net, &mut states, &optimizer) {
                Ok(()) => {}
                Err(Error::NonFinite(_)) => {
                    status = RunStatus::Diverged;
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
        }

        if last_eval.is_none() || epoch % cfg.eval_every == 0 || epoch == cfg.epochs {
            last_eval = Some(evaluate(&mut net, &test)?);
        }
        let (test_loss, test_acc) = last_eval
            .as_ref()
            .map(|(l, a, _)| (*l, *a))
            .expect("evaluated at least once by now");
        rows.push(EpochRow {
            epoch,
            train_loss: loss_sum / (seen as f64).max(1.0),
            train_acc: correct as f64 / (seen as f64).max(1.0),
            test_loss,
            test_acc,
        });
    }

    let (report, cm, final_preds) = match &last_eval {
        Some((_, _, preds)) => {
            let cm = confusion(preds, &test.labels, test.num_classes)?;
            (Some(cm.report()?), Some(cm), preds.clone())
        }
        None => (None, None, Vec::new()),
    };

    Ok(RunRecord {
        config: RunConfig { optimizer, ..cfg.clone() },
        rows,
        status,
        report,
        confusion: cm,
        final_preds,
        norm_stats: Some(norm_stats),
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

/// The hybrid optimizer's noise stream is keyed by the run seed unless the
/// caller pinned a different one explicitly.
fn resolve_optimizer_seed(spec: &OptimizerSpec, run_seed: u64) -> OptimizerSpec {
    match spec {
        OptimizerSpec::Nirmal(cfg) if cfg.seed == 0 => {
            let mut cfg = cfg.clone();
            cfg.seed = run_seed;
            OptimizerSpec::Nirmal(cfg)
        }
        other => other.clone(),
    }
}
