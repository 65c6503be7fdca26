//! Optimizer benchmarks on analytic test functions.
//!
//! The objective is evaluated in f64 while the iterate lives in an f32
//! `Buffer` and is driven through the same optimizer entry points the
//! training loop uses, so these benchmarks exercise the production update
//! path rather than a parallel implementation.

use nirmal_core::optim::{
    adam_step, nirmal_step, sgdm_step, AdamConfig, NirmalConfig, OptState, SgdMomentumConfig,
};
use nirmal_core::{Buffer, Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::testfn::{StartRule, TestFunction};

/// An optimizer selection with its full hyperparameter set.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum OptimizerSpec {
    Nirmal(NirmalConfig),
    Adam(AdamConfig),
    Sgdm(SgdMomentumConfig),
}

impl OptimizerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            OptimizerSpec::Nirmal(_) => "nirmal",
            OptimizerSpec::Adam(_) => "adam",
            OptimizerSpec::Sgdm(_) => "sgdm",
        }
    }

    fn needs_second_moment(&self) -> bool {
        !matches!(self, OptimizerSpec::Sgdm(_))
    }
}

/// One objective evaluation along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryPoint {
    pub step: u64,
    pub f: f64,
    pub grad_norm: f64,
}

/// The full record of one optimizer's run on one test function.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FuncBenchRecord {
    pub optimizer: String,
    pub function: String,
    pub steps: u64,
    pub seed: u64,
    /// Objective evaluations at t = 0..=steps (one before each update and
    /// one after the last), truncated early on divergence.
    pub points: Vec<TrajectoryPoint>,
    /// Step at which a non-finite value or gradient first appeared.
    pub diverged_at: Option<u64>,
    pub final_f: f64,
}

/// The starting iterate for `fun` under `seed`; identical across optimizers.
fn start_point(fun: &TestFunction, seed: u64) -> Vec<f64> {
    match &fun.start {
        StartRule::Fixed(p) => p.clone(),
        StartRule::UnitSphere => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let raw: Vec<f64> = (0..fun.dim)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            raw.iter().map(|x| x / norm).collect()
        }
    }
}

/// Runs every optimizer from the same seeded start for `steps` updates.
///
/// Divergence (a non-finite value, gradient, or iterate) ends that
/// optimizer's trajectory and is recorded, never propagated as an error.
pub fn run_function_bench(
    fun: &TestFunction,
    optimizers: &[OptimizerSpec],
    steps: u64,
    seed: u64,
) -> Result<Vec<FuncBenchRecord>> {
    if steps == 0 {
        return Err(Error::Domain("funcbench needs steps >= 1".into()));
    }
    if optimizers.is_empty() {
        return Err(Error::Domain("funcbench needs at least one optimizer".into()));
    }
    let start = start_point(fun, seed);
    let mut records = Vec::with_capacity(optimizers.len());
    for spec in optimizers {
        records.push(run_one(fun, spec, &start, steps, seed)?);
    }
    Ok(records)
}

fn run_one(
    fun: &TestFunction,
    spec: &OptimizerSpec,
    start: &[f64],
    steps: u64,
    seed: u64,
) -> Result<FuncBenchRecord> {
    let dim = fun.dim;
    let mut theta = Buffer::new(vec![dim], start.iter().map(|&x| x as f32).collect())?;
    let mut state = OptState::new(&[dim], spec.needs_second_moment(), 0)?;

    let mut points = Vec::with_capacity(steps as usize + 1);
    let mut diverged_at = None;
    for step in 0..=steps {
        let theta_f64: Vec<f64> = theta.data().iter().map(|&x| x as f64).collect();
        if theta_f64.iter().any(|x| !x.is_finite()) {
            diverged_at = Some(step);
            break;
        }
        let (f, grad) = fun.evaluate(&theta_f64)?;
        let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if !f.is_finite() || !grad_norm.is_finite() {
            diverged_at = Some(step);
            break;
        }
        points.push(TrajectoryPoint { step, f, grad_norm });
        if step == steps {
            break;
        }

        let grad32: Vec<f32> = grad.iter().map(|&g| g as f32).collect();
        if grad32.iter().any(|g| !g.is_finite()) {
            diverged_at = Some(step);
            break;
        }
        let grad_buf = Buffer::new(vec![dim], grad32)?;
        let stepped = match spec {
            OptimizerSpec::Nirmal(cfg) => nirmal_step(&theta, &grad_buf, &state, cfg),
            OptimizerSpec::Adam(cfg) => adam_step(&theta, &grad_buf, &state, cfg),
            OptimizerSpec::Sgdm(cfg) => sgdm_step(&theta, &grad_buf, &state, cfg),
        };
        match stepped {
            Ok((next_theta, next_state)) => {
                theta = next_theta;
                state = next_state;
            }
            Err(Error::NonFinite(_)) => {
                diverged_at = Some(step);
                break;
            }
            Err(e) => return Err(e),
        }
    }

    let final_f = points.last().map(|p| p.f).unwrap_or(f64::INFINITY);
    Ok(FuncBenchRecord {
        optimizer: spec.name().to_string(),
        function: fun.name.clone(),
        steps,
        seed,
        points,
        diverged_at,
        final_f,
    })
}
