//! Analytic test functions for desk-scale optimizer verification.
//!
//! Each function carries its own evaluation closure (value + gradient in
//! f64), its known minimum, and a starting rule so benchmarks are
//! reproducible without per-call configuration.

use nirmal_core::{Error, Result};

/// Where a benchmark run begins for this function.
#[derive(Debug, Clone, PartialEq)]
pub enum StartRule {
    /// Seeded uniform direction scaled to unit norm.
    UnitSphere,
    /// A fixed conventional starting point.
    Fixed(Vec<f64>),
}

/// A differentiable objective with a known minimum.
pub struct TestFunction {
    pub name: String,
    pub dim: usize,
    pub minimum: Vec<f64>,
    pub min_value: f64,
    pub start: StartRule,
    eval: Box<dyn Fn(&[f64]) -> (f64, Vec<f64>) + Send + Sync>,
}

impl TestFunction {
    /// Value and gradient at `theta`.
    pub fn evaluate(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        if theta.len() != self.dim {
            return Err(Error::Contract(format!(
                "{}: point has dim {}, function has dim {}",
                self.name,
                theta.len(),
                self.dim
            )));
        }
        Ok((self.eval)(theta))
    }
}

impl std::fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TestFunction")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("min_value", &self.min_value)
            .finish()
    }
}

/// Cholesky factorization; succeeds iff the matrix is symmetric positive
/// definite, which is exactly the admissibility check for `quadratic_fn`.
fn cholesky_ok(a: &[Vec<f64>]) -> bool {
    let n = a.len();
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |acc, &x| acc.max(x.abs()))
        .max(1.0);
    for i in 0..n {
        if a[i].len() != n {
            return false;
        }
        for j in 0..i {
            if (a[i][j] - a[j][i]).abs() > 1e-9 * scale {
                return false;
            }
        }
    }
    let mut l = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if s <= 0.0 {
                    return false;
                }
                l[i][j] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    true
}

/// f(θ) = ½·θᵀAθ with gradient Aθ; minimum 0 at the origin.
pub fn quadratic_fn(a: Vec<Vec<f64>>) -> Result<TestFunction> {
    let n = a.len();
    if n == 0 {
        return Err(Error::Contract("quadratic needs a non-empty matrix".into()));
    }
    if !cholesky_ok(&a) {
        return Err(Error::Contract(
            "quadratic matrix must be symmetric positive definite".into(),
        ));
    }
    let eval = move |theta: &[f64]| {
        let mut grad = vec![0.0f64; n];
        let mut value = 0.0f64;
        for i in 0..n {
            let mut gi = 0.0f64;
            for j in 0..n {
                gi += a[i][j] * theta[j];
            }
            value += 0.5 * theta[i] * gi;
            grad[i] = gi;
        }
        (value, grad)
    };
    Ok(TestFunction {
        name: "quadratic".into(),
        dim: n,
        minimum: vec![0.0; n],
        min_value: 0.0,
        start: StartRule::UnitSphere,
        eval: Box::new(eval),
    })
}

/// The identity-matrix quadratic ½‖θ‖².
pub fn identity_quadratic(dim: usize) -> Result<TestFunction> {
    let mut a = vec![vec![0.0f64; dim]; dim];
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    quadratic_fn(a)
}

/// Rosenbrock Σᵢ [100(θ_{i+1} − θᵢ²)² + (1 − θᵢ)²]; minimum 0 at all-ones.
/// Starts at the conventional (−1.2, 1, −1.2, 1, …).
pub fn rosenbrock_fn(dim: usize) -> Result<TestFunction> {
    if dim < 2 {
        return Err(Error::Contract(format!(
            "rosenbrock needs dim >= 2, got {dim}"
        )));
    }
    let eval = move |theta: &[f64]| {
        let mut value = 0.0f64;
        let mut grad = vec![0.0f64; dim];
        for i in 0..dim - 1 {
            let gap = theta[i + 1] - theta[i] * theta[i];
            let miss = 1.0 - theta[i];
            value += 100.0 * gap * gap + miss * miss;
            grad[i] += -400.0 * gap * theta[i] - 2.0 * miss;
            grad[i + 1] += 200.0 * gap;
        }
        (value, grad)
    };
    let start: Vec<f64> = (0..dim).map(|i| if i % 2 == 0 { -1.2 } else { 1.0 }).collect();
    Ok(TestFunction {
        name: "rosenbrock".into(),
        dim,
        minimum: vec![1.0; dim],
        min_value: 0.0,
        start: StartRule::Fixed(start),
        eval: Box::new(eval),
    })
}
