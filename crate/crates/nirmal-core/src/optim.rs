//! Parameter-update rules: the five-component hybrid optimizer, Adam, and
//! SGD with momentum.
//!
//! Step functions are pure: they take (parameters, gradient, state, config)
//! and return new parameters plus new state. Per-element arithmetic runs in
//! f64 and rounds to f32 once when results are stored, so a scalar f64
//! reference that applies the same final rounding reproduces every output
//! bit for bit.
//!
//! Noise for the knight component is counter-based: samples are keyed by
//! (seed, stream_id, step) and never stored, so stepping parameter buffers
//! in any order, or twice, yields identical values.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::buffer::Buffer;
use crate::error::{Error, Result};

/// Hyperparameters of the hybrid optimizer.
///
/// The five `w_*` coefficients weight the wazir (gradient), elephant
/// (momentum), knight (noise), camel (adaptive), and horse (tanh-momentum)
/// components of the update.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NirmalConfig {
    pub lr: f64,
    pub mu: f64,
    pub beta: f64,
    pub eps: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub w_wazir: f64,
    pub w_elephant: f64,
    pub w_knight: f64,
    pub w_camel: f64,
    pub w_horse: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for NirmalConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            mu: 0.9,
            beta: 0.999,
            eps: 1e-8,
            kappa: 0.01,
            gamma: 1.5,
            lambda: 0.5,
            w_wazir: 0.3,
            w_elephant: 0.25,
            w_knight: 0.1,
            w_camel: 0.2,
            w_horse: 0.15,
            weight_decay: 0.0,
            seed: 0,
        }
    }
}

impl NirmalConfig {
    fn validate(&self) -> Result<()> {
        check_unit_interval("mu", self.mu)?;
        check_unit_interval("beta", self.beta)?;
        check_positive("lr", self.lr)?;
        check_positive("eps", self.eps)?;
        check_positive("gamma", self.gamma)?;
        check_nonnegative("kappa", self.kappa)?;
        check_nonnegative("lambda", self.lambda)?;
        check_nonnegative("weight_decay", self.weight_decay)?;
        for (name, w) in [
            ("w_wazir", self.w_wazir),
            ("w_elephant", self.w_elephant),
            ("w_knight", self.w_knight),
            ("w_camel", self.w_camel),
            ("w_horse", self.w_horse),
        ] {
            check_nonnegative(name, w)?;
        }
        Ok(())
    }
}

/// Adam hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

impl AdamConfig {
    fn validate(&self) -> Result<()> {
        check_unit_interval("beta1", self.beta1)?;
        check_unit_interval("beta2", self.beta2)?;
        check_positive("lr", self.lr)?;
        check_positive("eps", self.eps)?;
        check_nonnegative("weight_decay", self.weight_decay)
    }
}

/// SGD-with-momentum hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SgdMomentumConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for SgdMomentumConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            momentum: 0.9,
            weight_decay: 0.0,
        }
    }
}

impl SgdMomentumConfig {
    fn validate(&self) -> Result<()> {
        check_unit_interval("momentum", self.momentum)?;
        check_positive("lr", self.lr)?;
        check_nonnegative("weight_decay", self.weight_decay)
    }
}

fn check_unit_interval(name: &str, x: f64) -> Result<()> {
    if !(0.0..1.0).contains(&x) {
        return Err(Error::Domain(format!("{name}={x} not in [0,1)")));
    }
    Ok(())
}

fn check_positive(name: &str, x: f64) -> Result<()> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::Domain(format!("{name}={x} must be > 0")));
    }
    Ok(())
}

fn check_nonnegative(name: &str, x: f64) -> Result<()> {
    if !(x >= 0.0 && x.is_finite()) {
        return Err(Error::Domain(format!("{name}={x} must be >= 0")));
    }
    Ok(())
}

/// Per-parameter-buffer optimizer state.
///
/// `m` is the first moment (velocity for SGD+M), `v` the second moment,
/// absent for SGD+M. `t` counts completed steps. `stream_id` names this
/// buffer's noise substream; give every parameter buffer its own.
#[derive(Debug, Clone, PartialEq)]
pub struct OptState {
    pub m: Buffer,
    pub v: Option<Buffer>,
    pub t: u64,
    pub stream_id: u64,
}

impl OptState {
    /// Fresh state (zero moments, t = 0) for a parameter of the given shape.
    /// `with_second_moment` is true for the hybrid optimizer and Adam,
    /// false for SGD+M.
    pub fn new(shape: &[usize], with_second_moment: bool, stream_id: u64) -> Result<Self> {
        Ok(Self {
            m: Buffer::zeros(shape.to_vec())?,
            v: if with_second_moment {
                Some(Buffer::zeros(shape.to_vec())?)
            } else {
                None
            },
            t: 0,
            stream_id,
        })
    }
}

fn check_step_inputs(theta: &Buffer, grad: &Buffer, state: &OptState, needs_v: bool) -> Result<()> {
    if theta.shape() != grad.shape() || theta.shape() != state.m.shape() {
        return Err(Error::Contract(format!(
            "step: theta {:?}, grad {:?}, m {:?} must share a shape",
            theta.shape(),
            grad.shape(),
            state.m.shape()
        )));
    }
    match (&state.v, needs_v) {
        (Some(v), true) if v.shape() != theta.shape() => {
            return Err(Error::Contract(format!(
                "step: v {:?} does not match theta {:?}",
                v.shape(),
                theta.shape()
            )));
        }
        (None, true) => {
            return Err(Error::Contract(
                "step: state has no second moment".into(),
            ));
        }
        _ => {}
    }
    if let Some(i) = grad.data().iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!(
            "gradient element {i} is {}",
            grad.data()[i]
        )));
    }
    Ok(())
}

/// Per-element deltas of one hybrid-optimizer step, in f64, for inspection
/// and verification. `total` is the exact weighted sum applied to theta.
#[derive(Debug, Clone)]
pub struct NirmalBreakdown {
    pub wazir: Vec<f64>,
    pub elephant: Vec<f64>,
    pub knight: Vec<f64>,
    pub camel: Vec<f64>,
    pub horse: Vec<f64>,
    pub total: Vec<f64>,
}

struct NirmalOut {
    theta: Buffer,
    state: OptState,
    breakdown: NirmalBreakdown,
}

fn nirmal_core(
    theta: &Buffer,
    grad: &Buffer,
    state: &OptState,
    cfg: &NirmalConfig,
) -> Result<NirmalOut> {
    cfg.validate()?;
    check_step_inputs(theta, grad, state, true)?;
    let n = theta.len();
    let v_old = state.v.as_ref().expect("checked above");

    // One noise draw per element, keyed by (seed, stream, t); skipped
    // entirely when the knight weight or kappa is zero so those runs do not
    // depend on the noise path at all.
    let noise = if cfg.kappa != 0.0 && cfg.w_knight != 0.0 {
        normal_samples(cfg.seed, state.stream_id, state.t, n)
    } else {
        vec![0.0; n]
    };

    let mut theta_new = vec![0.0f32; n];
    let mut m_new = vec![0.0f32; n];
    let mut v_new = vec![0.0f32; n];
    let mut bd = NirmalBreakdown {
        wazir: vec![0.0; n],
        elephant: vec![0.0; n],
        knight: vec![0.0; n],
        camel: vec![0.0; n],
        horse: vec![0.0; n],
        total: vec![0.0; n],
    };

    for i in 0..n {
        let th = theta.data()[i] as f64;
        let mut g = grad.data()[i] as f64;
        g += cfg.weight_decay * th;
        let m = cfg.mu * state.m.data()[i] as f64 + (1.0 - cfg.mu) * g;
        let v = cfg.beta * v_old.data()[i] as f64 + (1.0 - cfg.beta) * g * g;

        let d_wazir = -cfg.lr * g;
        let d_elephant = -cfg.lr * m;
        let d_knight = cfg.lr * cfg.kappa * noise[i];
        let d_camel = -cfg.lr * cfg.gamma * m / (v.sqrt() + cfg.eps);
        let d_horse = -cfg.lr * cfg.lambda * m.tanh();
        let total = cfg.w_wazir * d_wazir
            + cfg.w_elephant * d_elephant
            + cfg.w_knight * d_knight
            + cfg.w_camel * d_camel
            + cfg.w_horse * d_horse;

        theta_new[i] = (th + total) as f32;
        m_new[i] = m as f32;
        v_new[i] = v as f32;
        bd.wazir[i] = d_wazir;
        bd.elephant[i] = d_elephant;
        bd.knight[i] = d_knight;
        bd.camel[i] = d_camel;
        bd.horse[i] = d_horse;
        bd.total[i] = total;
    }

    let shape = theta.shape().to_vec();
    Ok(NirmalOut {
        theta: Buffer::new(shape.clone(), theta_new)?,
        state: OptState {
            m: Buffer::new(shape.clone(), m_new)?,
            v: Some(Buffer::new(shape, v_new)?),
            t: state.t + 1,
            stream_id: state.stream_id,
        },
        breakdown: bd,
    })
}

/// One step of the hybrid update:
/// g ← g + α·θ, then
/// m ← μ·m + (1−μ)·g, v ← β·v + (1−β)·g², and
/// θ ← θ + Σ w_i·Δ_i over the five component deltas. No bias correction.
pub fn nirmal_step(
    theta: &Buffer,
    grad: &Buffer,
    state: &OptState,
    cfg: &NirmalConfig,
) -> Result<(Buffer, OptState)> {
    let out = nirmal_core(theta, grad, state, cfg)?;
    Ok((out.theta, out.state))
}

/// Same as [`nirmal_step`] but also returns the five per-element component
/// deltas that were summed into the update.
pub fn nirmal_step_with_breakdown(
    theta: &Buffer,
    grad: &Buffer,
    state: &OptState,
    cfg: &NirmalConfig,
) -> Result<(Buffer, OptState, NirmalBreakdown)> {
    let out = nirmal_core(theta, grad, state, cfg)?;
    Ok((out.theta, out.state, out.breakdown))
}

/// One Adam step with bias correction; the step count in the correction
/// exponents is 1-based (`state.t + 1` on the first call).
pub fn adam_step(
    theta: &Buffer,
    grad: &Buffer,
    state: &OptState,
    cfg: &AdamConfig,
) -> Result<(Buffer, OptState)> {
    cfg.validate()?;
    check_step_inputs(theta, grad, state, true)?;
    let n = theta.len();
    let v_old = state.v.as_ref().expect("checked above");
    let t = state.t + 1;
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);

    let mut theta_new = vec![0.0f32; n];
    let mut m_new = vec![0.0f32; n];
    let mut v_new = vec![0.0f32; n];
    for i in 0..n {
        let th = theta.data()[i] as f64;
        let mut g = grad.data()[i] as f64;
        g += cfg.weight_decay * th;
        let m = cfg.beta1 * state.m.data()[i] as f64 + (1.0 - cfg.beta1) * g;
        let v = cfg.beta2 * v_old.data()[i] as f64 + (1.0 - cfg.beta2) * g * g;
        let m_hat = m / bc1;
        let v_hat = v / bc2;
        theta_new[i] = (th - cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps)) as f32;
        m_new[i] = m as f32;
        v_new[i] = v as f32;
    }

    let shape = theta.shape().to_vec();
    Ok((
        Buffer::new(shape.clone(), theta_new)?,
        OptState {
            m: Buffer::new(shape.clone(), m_new)?,
            v: Some(Buffer::new(shape, v_new)?),
            t,
            stream_id: state.stream_id,
        },
    ))
}

/// One SGD-with-momentum step: v ← μ·v + η·g, θ ← θ − v.
/// The velocity lives in `state.m`; there is no second moment.
pub fn sgdm_step(
    theta: &Buffer,
    grad: &Buffer,
    state: &OptState,
    cfg: &SgdMomentumConfig,
) -> Result<(Buffer, OptState)> {
    cfg.validate()?;
    check_step_inputs(theta, grad, state, false)?;
    let n = theta.len();

    let mut theta_new = vec![0.0f32; n];
    let mut vel_new = vec![0.0f32; n];
    for i in 0..n {
        let th = theta.data()[i] as f64;
        let mut g = grad.data()[i] as f64;
        g += cfg.weight_decay * th;
        let vel = cfg.momentum * state.m.data()[i] as f64 + cfg.lr * g;
        theta_new[i] = (th - vel) as f32;
        vel_new[i] = vel as f32;
    }

    let shape = theta.shape().to_vec();
    Ok((
        Buffer::new(shape.clone(), theta_new)?,
        OptState {
            m: Buffer::new(shape, vel_new)?,
            v: None,
            t: state.t + 1,
            stream_id: state.stream_id,
        },
    ))
}

/// 32-byte ChaCha key derived from (seed, stream_id, t) with a splitmix64
/// absorb/squeeze chain. Distinct key tuples yield distinct cipher keys and
/// therefore independent sample streams.
fn stream_key(seed: u64, stream_id: u64, t: u64) -> [u8; 32] {
    fn finalize(mut z: u64) -> u64 {
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    const PHI: u64 = 0x9E37_79B9_7F4A_7C15;
    let mut x = seed;
    for w in [stream_id, t] {
        x = finalize(x.wrapping_add(PHI) ^ w.wrapping_mul(PHI));
    }
    let mut key = [0u8; 32];
    for (i, chunk) in key.chunks_exact_mut(8).enumerate() {
        let word = finalize(x.wrapping_add(PHI.wrapping_mul(i as u64 + 1)));
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    key
}

fn normal_samples(seed: u64, stream_id: u64, t: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::from_seed(stream_key(seed, stream_id, t));
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// `n` i.i.d. standard-normal samples for the state's (stream_id, t),
/// under the given seed. The same key always yields the same samples.
pub fn gaussian_noise(seed: u64, state: &OptState, n: usize) -> Result<Buffer> {
    if n == 0 {
        return Err(Error::Contract("gaussian_noise: n must be >= 1".into()));
    }
    let samples = normal_samples(seed, state.stream_id, state.t, n);
    Buffer::new(vec![n], samples.into_iter().map(|z| z as f32).collect())
}
