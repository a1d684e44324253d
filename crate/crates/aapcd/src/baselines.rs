//! Reference competitors: momentum-free asynchronous proximal coordinate
//! descent (ASCD-style) and synchronous mini-batch proximal gradient
//! (DSPG-style).

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;

use crate::delays::DelaySchedule;
use crate::model::ProblemSpec;
use crate::prox::prox;
use crate::solver::{run_stochastic, SolveResult, SolverConfig};
use crate::trace::{Branch, TraceRecord};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Ascd,
    Dspg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub kind: BaselineKind,
    pub eta: f64,
    /// Mini-batch size; DSPG only.
    pub batch: usize,
    pub iters: usize,
    pub seed: u64,
}

impl BaselineConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.eta <= 0.0 || !self.eta.is_finite() {
            return Err(Error::Config(format!("η = {} must be > 0", self.eta)));
        }
        if self.kind == BaselineKind::Dspg && (self.batch == 0 || self.batch > n) {
            return Err(Error::Config(format!(
                "batch {} must be in 1..={n}",
                self.batch
            )));
        }
        Ok(())
    }
}

/// Momentum-free asynchronous proximal coordinate descent: the accelerated
/// algorithm with β = β' = 0, so y^{k+1} = x^{k+1} always. The trace schema
/// is identical; with τ = 0 this is synchronous proximal coordinate descent.
pub fn run_ascd(
    problem: &ProblemSpec,
    config: &SolverConfig,
    schedule: &mut DelaySchedule,
    y0: Vec<f64>,
) -> Result<SolveResult> {
    let mut cfg = config.clone();
    cfg.beta = 0.0;
    cfg.beta_neg = 0.0;
    run_stochastic(problem, &cfg, schedule, y0)
}

/// Synchronous mini-batch proximal gradient: one full-vector prox step on a
/// sampled-row gradient per iteration. At batch = n with an L1 regularizer
/// this is plain ISTA.
pub fn run_dspg(
    problem: &ProblemSpec,
    config: &BaselineConfig,
    y0: Vec<f64>,
) -> Result<SolveResult> {
    config.validate(problem.data.n())?;
    if config.kind != BaselineKind::Dspg {
        return Err(Error::Config("run_dspg requires kind = dspg".into()));
    }
    if y0.len() != problem.m() {
        return Err(Error::DimensionMismatch {
            expected: problem.m(),
            got: y0.len(),
        });
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = problem.data.n();
    let rows: Vec<usize> = (0..n).collect();
    let mut y = y0;
    let f0 = problem.full_objective(&y, None)?;
    let mut trace = Vec::with_capacity(config.iters);
    for k in 0..config.iters {
        let batch: Vec<usize> = if config.batch == n {
            rows.clone()
        } else {
            rows.choose_multiple(&mut rng, config.batch).copied().collect()
        };
        let g = problem.minibatch_gradient(&y, &batch)?;
        let mut step_sq = 0.0;
        for j in 0..y.len() {
            let xj = prox(problem.reg, y[j] - config.eta * g[j], config.eta);
            step_sq += (xj - y[j]) * (xj - y[j]);
            y[j] = xj;
        }
        let f = problem.full_objective(&y, None)?;
        if !f.is_finite() || f > 1e6 * f0.abs().max(1.0) {
            return Err(Error::Divergence {
                k,
                reason: format!("DSPG objective {f} diverged"),
            });
        }
        trace.push(TraceRecord {
            k,
            block: 0,
            d: 0,
            beta: 0.0,
            branch: Branch::Prox,
            f,
            xi: 0.0,
            g: f,
            step_sq,
            wall_ns: 0,
            f_prox: f,
            f_extrap: f,
            prox_step_sq: step_sq,
        });
    }
    let f_final = trace.last().map_or(f0, |r| r.f);
    Ok(SolveResult {
        f_initial: f0,
        f_final,
        trace,
        last_updates: vec![None; problem.m()],
        duration: start.elapsed(),
        workers: 1,
        eta: config.eta,
        y,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delays::DelayMode;
    use crate::model::{synth, LossKind, Regularizer};
    use crate::solver::bounded_config;
    use std::sync::Arc;

    fn lasso(n: usize, m: usize, seed: u64) -> ProblemSpec {
        let data = Arc::new(synth::regression(n, m, 1.0, seed));
        ProblemSpec::new(LossKind::Quadratic, Regularizer::L1 { lambda: 0.05 }, data).unwrap()
    }

    #[test]
    fn ascd_is_trace_identical_to_zero_momentum_aapcd() {
        let p = lasso(30, 10, 1);
        let eta = 0.3 / p.lipschitz();
        let cfg = bounded_config(10, 4, eta, 0.5, -0.08, 400, 9);
        let mut s1 = DelaySchedule::new(DelayMode::Bounded { tau: 4 }, 13);
        let a = run_ascd(&p, &cfg, &mut s1, vec![0.0; 10]).unwrap();
        let mut zero = cfg.clone();
        zero.beta = 0.0;
        zero.beta_neg = 0.0;
        let mut s2 = DelaySchedule::new(DelayMode::Bounded { tau: 4 }, 13);
        let b = run_stochastic(&p, &zero, &mut s2, vec![0.0; 10]).unwrap();
        assert_eq!(a.trace, b.trace);
        // momentum never moves the iterate: v = x for all β_k = 0
        for rec in &a.trace {
            assert_eq!(rec.f_prox, rec.f_extrap);
        }
    }

    #[test]
    fn full_batch_unregularized_dspg_is_gradient_descent() {
        let data = Arc::new(synth::regression(15, 5, 1.0, 2));
        let p = ProblemSpec::new(LossKind::Quadratic, Regularizer::None, data).unwrap();
        let eta = 0.5 / p.lipschitz();
        let cfg = BaselineConfig {
            kind: BaselineKind::Dspg,
            eta,
            batch: 15,
            iters: 3,
            seed: 0,
        };
        let y0 = vec![0.1; 5];
        let r = run_dspg(&p, &cfg, y0.clone()).unwrap();
        // replay by hand
        let mut y = y0;
        for _ in 0..3 {
            let g = p.full_gradient(&y);
            for j in 0..5 {
                y[j] -= eta * g[j];
            }
        }
        for j in 0..5 {
            assert!((r.y[j] - y[j]).abs() < 1e-15);
        }
    }

    #[test]
    fn full_batch_l1_dspg_matches_independent_ista() {
        let p = lasso(20, 6, 3);
        let eta = 0.8 / p.lipschitz();
        let lambda = 0.05;
        let cfg = BaselineConfig {
            kind: BaselineKind::Dspg,
            eta,
            batch: 20,
            iters: 200,
            seed: 0,
        };
        let r = run_dspg(&p, &cfg, vec![0.0; 6]).unwrap();
        // independent ISTA: x ← soft(x − η∇f(x), ηλ)
        let mut x = vec![0.0; 6];
        for _ in 0..200 {
            let g = p.full_gradient(&x);
            for j in 0..6 {
                let u = x[j] - eta * g[j];
                x[j] = u.signum() * (u.abs() - eta * lambda).max(0.0);
            }
        }
        for j in 0..6 {
            assert!((r.y[j] - x[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn full_batch_dspg_descends_monotonically_below_one_over_l() {
        let p = lasso(25, 8, 4);
        let cfg = BaselineConfig {
            kind: BaselineKind::Dspg,
            eta: 1.0 / p.lipschitz(),
            batch: 25,
            iters: 150,
            seed: 0,
        };
        let r = run_dspg(&p, &cfg, vec![0.5; 8]).unwrap();
        let mut prev = r.f_initial;
        for rec in &r.trace {
            assert!(rec.f <= prev + 1e-12 * prev.abs());
            prev = rec.f;
        }
    }

    #[test]
    fn seeded_dspg_runs_are_identical() {
        let p = lasso(40, 10, 5);
        let cfg = BaselineConfig {
            kind: BaselineKind::Dspg,
            eta: 0.3 / p.lipschitz(),
            batch: 8,
            iters: 100,
            seed: 42,
        };
        let a = run_dspg(&p, &cfg, vec![0.0; 10]).unwrap();
        let b = run_dspg(&p, &cfg, vec![0.0; 10]).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.y, b.y);
    }

    #[test]
    fn dspg_rejects_bad_batch() {
        let p = lasso(10, 4, 6);
        let mut cfg = BaselineConfig {
            kind: BaselineKind::Dspg,
            eta: 0.1,
            batch: 0,
            iters: 1,
            seed: 0,
        };
        assert!(run_dspg(&p, &cfg, vec![0.0; 4]).is_err());
        cfg.batch = 11;
        assert!(run_dspg(&p, &cfg, vec![0.0; 4]).is_err());
    }
}
