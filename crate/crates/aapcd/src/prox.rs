//! Exact coordinate-wise proximal operators
//! `argmin_x (1/2η)(x−y)² + g(x)` for the supported regularizers, including
//! the nonconvex capped-L1, plus a brute-force grid oracle for verification.

use crate::model::Regularizer;
use crate::{Error, Result};

/// One scalar prox evaluation: input point, step, regularizer parameters.
#[derive(Debug, Clone, Copy)]
pub struct ProxQuery {
    pub y: f64,
    pub eta: f64,
    pub lambda: f64,
    pub theta_cap: f64,
}

impl ProxQuery {
    pub fn validate(&self) -> Result<()> {
        if self.eta <= 0.0 {
            return Err(Error::Config(format!("prox step η = {} must be > 0", self.eta)));
        }
        if self.lambda < 0.0 {
            return Err(Error::Config(format!("λ = {} must be ≥ 0", self.lambda)));
        }
        Ok(())
    }
}

/// Soft threshold: sign(y)·max(|y| − ηλ, 0).
pub fn prox_l1(query: ProxQuery) -> f64 {
    let t = query.eta * query.lambda;
    query.y.signum() * (query.y.abs() - t).max(0.0)
}

/// Exact minimizer of (1/2η)(x−y)² + λ·min(|x|, θ).
///
/// Two regional candidates cover the minimizer: the soft-threshold point
/// clamped into [−θ, θ] (where the regularizer is active), and
/// sign(y)·max(|y|, θ) (where it is flat). Ties break toward the candidate of
/// smaller absolute value, which favors sparsity; the regularizer is even so
/// the operator is odd in y.
pub fn prox_capped_l1(query: ProxQuery) -> f64 {
    debug_assert!(query.eta > 0.0 && query.theta_cap > 0.0);
    let theta = query.theta_cap;
    let obj = |x: f64| {
        (x - query.y) * (x - query.y) / (2.0 * query.eta) + query.lambda * x.abs().min(theta)
    };
    let inner = prox_l1(query).clamp(-theta, theta);
    let outer = query.y.signum() * query.y.abs().max(theta);
    let (oi, oo) = (obj(inner), obj(outer));
    if oi < oo || (oi == oo && inner.abs() <= outer.abs()) {
        inner
    } else {
        outer
    }
}

/// Prox for the regularizer of a [`Regularizer`] at a single coordinate.
pub fn prox(reg: Regularizer, y: f64, eta: f64) -> f64 {
    match reg {
        Regularizer::None => y,
        Regularizer::L1 { lambda } | Regularizer::BlockNorm { lambda } => prox_l1(ProxQuery {
            y,
            eta,
            lambda,
            theta_cap: 0.0,
        }),
        Regularizer::CappedL1 { lambda, theta_cap } => prox_capped_l1(ProxQuery {
            y,
            eta,
            lambda,
            theta_cap,
        }),
    }
}

/// Argmin of the prox objective over the grid {lo, lo+step, …, hi}; ties go
/// to the smallest |x|. This is the verification oracle; it shares no code
/// with the closed forms above.
pub fn prox_oracle_grid(
    reg: impl Fn(f64) -> f64,
    query: ProxQuery,
    lo: f64,
    hi: f64,
    step: f64,
) -> Result<f64> {
    if !(lo < hi) || step <= 0.0 {
        return Err(Error::Config(format!("bad grid [{lo}, {hi}] step {step}")));
    }
    let count = ((hi - lo) / step).floor() as usize + 1;
    let mut best_x = lo;
    let mut best_obj = f64::INFINITY;
    for idx in 0..count {
        let x = lo + idx as f64 * step;
        let o = (x - query.y) * (x - query.y) / (2.0 * query.eta) + reg(x);
        if o < best_obj || (o == best_obj && x.abs() < best_x.abs()) {
            best_obj = o;
            best_x = x;
        }
    }
    Ok(best_x)
}

/// Default safely-enclosing grid bounds for a query: the prox minimizer lies
/// in [min(0,y), max(0,y)], so ±(2|y|+1) encloses it with margin.
pub fn default_grid_bounds(y: f64) -> (f64, f64) {
    let r = 2.0 * y.abs() + 1.0;
    (-r, r)
}
