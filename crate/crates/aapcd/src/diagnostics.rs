//! Post-hoc verification machinery: Lyapunov sequences ξ and G, descent
//! inequality checks, stationarity residuals, KL-style rate fitting, and the
//! worst-case rate constants b1/b2.

use serde::{Deserialize, Serialize};

use crate::delays::SeriesTables;
use crate::model::ProblemSpec;
use crate::solver::{RegimeSpec, SolveResult};
use crate::trace::TraceRecord;
use crate::{Error, Result};

/// Regime-specific weights and constants for the Lyapunov history term ξ.
/// The normalizing constant C is fixed to each proof's closed-form choice,
/// not exposed as a tunable.
#[derive(Debug, Clone)]
pub enum LyapunovSpec {
    /// No delay (τ = 0): ξ ≡ 0 and G = F.
    None { l: f64 },
    /// ξ_k = (L²τ/2C) Σ_{h=k−τ+1..k} (h−k+τ)‖y^h−y^{h−1}‖², C = Lτ(1+β).
    Bounded { l: f64, tau: usize, beta: f64, c_const: f64 },
    /// ξ_k = (L²/2C) Σ_h c_{k−h}‖y^h−y^{h−1}‖², C = L(1+β)√c₀.
    StochasticUnbounded { l: f64, beta: f64, c: Vec<f64>, c_const: f64 },
    /// ξ_k = (L²/2C) Σ_h δ_{k−h}‖y^h−y^{h−1}‖²; C balances the weights the
    /// same way the other regimes do, C = L(1+β)√(δ₀·μ_D) at the table's
    /// maximum tracked delay D.
    Deterministic { l: f64, beta: f64, delta: Vec<f64>, mu: Vec<f64>, c_const: f64 },
}

impl LyapunovSpec {
    pub fn from_regime(
        regime: &RegimeSpec,
        l: f64,
        beta: f64,
        tables: Option<SeriesTables>,
    ) -> Result<Self> {
        if l <= 0.0 {
            return Err(Error::Config(format!("L = {l} must be > 0")));
        }
        match regime {
            RegimeSpec::Bounded { tau: 0 } => Ok(LyapunovSpec::None { l }),
            RegimeSpec::Bounded { tau } => Ok(LyapunovSpec::Bounded {
                l,
                tau: *tau,
                beta,
                c_const: l * *tau as f64 * (1.0 + beta),
            }),
            RegimeSpec::StochasticUnbounded { .. } => {
                let t = tables.ok_or_else(|| Error::Config("missing c-table".into()))?;
                let c0 = *t.c.first().ok_or_else(|| Error::Config("empty c-table".into()))?;
                if c0 <= 0.0 {
                    return Err(Error::Config(format!("c0 = {c0} must be > 0")));
                }
                Ok(LyapunovSpec::StochasticUnbounded {
                    l,
                    beta,
                    c_const: l * (1.0 + beta) * c0.sqrt(),
                    c: t.c,
                })
            }
            RegimeSpec::DeterministicUnbounded { .. } => {
                let t = tables.ok_or_else(|| Error::Config("missing δ/μ tables".into()))?;
                let delta0 = *t.delta.first().ok_or_else(|| Error::Config("empty δ-table".into()))?;
                let mu_max = *t.mu.last().ok_or_else(|| Error::Config("empty μ-table".into()))?;
                let c_const = l * (1.0 + beta) * (delta0 * mu_max).sqrt();
                if c_const <= 0.0 {
                    return Err(Error::Config("degenerate δ/μ tables give C = 0".into()));
                }
                Ok(LyapunovSpec::Deterministic {
                    l,
                    beta,
                    delta: t.delta,
                    mu: t.mu,
                    c_const,
                })
            }
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            LyapunovSpec::None { l }
            | LyapunovSpec::Bounded { l, .. }
            | LyapunovSpec::StochasticUnbounded { l, .. }
            | LyapunovSpec::Deterministic { l, .. } => *l,
        }
    }

    /// Weight multiplying ‖y^{k−lag}−y^{k−lag−1}‖² in ξ_k.
    pub fn weight(&self, lag: usize) -> f64 {
        match self {
            LyapunovSpec::None { .. } => 0.0,
            LyapunovSpec::Bounded { l, tau, c_const, .. } => {
                if lag < *tau {
                    l * l * *tau as f64 / (2.0 * c_const) * (*tau - lag) as f64
                } else {
                    0.0
                }
            }
            LyapunovSpec::StochasticUnbounded { l, c, c_const, .. } => {
                c.get(lag).map_or(0.0, |ck| l * l / (2.0 * c_const) * ck)
            }
            LyapunovSpec::Deterministic { l, delta, c_const, .. } => {
                delta.get(lag).map_or(0.0, |d| l * l / (2.0 * c_const) * d)
            }
        }
    }

    /// How many lags carry nonzero weight.
    pub fn support(&self) -> usize {
        match self {
            LyapunovSpec::None { .. } => 0,
            LyapunovSpec::Bounded { tau, .. } => *tau,
            LyapunovSpec::StochasticUnbounded { c, .. } => c.len(),
            LyapunovSpec::Deterministic { delta, .. } => delta.len(),
        }
    }

    /// ξ_{k+1} from the squared step norms of rows 0..=k (`step_sqs[r]` being
    /// ‖y^{r+1}−y^r‖²).
    pub fn xi_next(&self, step_sqs: &[f64]) -> f64 {
        let k = match step_sqs.len() {
            0 => return 0.0,
            n => n - 1,
        };
        let mut xi = 0.0;
        for lag in 0..=k.min(self.support().saturating_sub(1)) {
            xi += self.weight(lag) * step_sqs[k - lag];
        }
        xi
    }

    /// The sufficient-descent coefficient multiplying ‖x^{k+1}−y^k‖² for an
    /// update with momentum β_k at delay d_k.
    pub fn descent_coefficient(&self, eta: f64, beta_k: f64, d_k: usize) -> f64 {
        let base = 0.5 / eta;
        match self {
            LyapunovSpec::None { l } => base - 0.5 * l,
            LyapunovSpec::Bounded { l, tau, .. } => {
                base - 0.5 * l - l * *tau as f64 * (1.0 + beta_k)
            }
            LyapunovSpec::StochasticUnbounded { l, c, .. } => {
                base - 0.5 * l - l * (1.0 + beta_k) * c[0].sqrt()
            }
            LyapunovSpec::Deterministic { l, delta, mu, .. } => {
                let mu_d = mu.get(d_k).copied().unwrap_or_else(|| *mu.last().unwrap());
                base - 0.5 * l - (delta[0] * mu_d).sqrt() * l * (1.0 + beta_k)
            }
        }
    }
}

/// G along a run: G(y^0) = F(y^0) (empty history), then the traced values.
pub fn g_series(f_initial: f64, trace: &[TraceRecord]) -> Vec<f64> {
    let mut g = Vec::with_capacity(trace.len() + 1);
    g.push(f_initial);
    g.extend(trace.iter().map(|r| r.g));
    g
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Violation {
    pub k: usize,
    pub lhs: f64,
    pub rhs: f64,
    /// rhs − lhs beyond tolerance; positive means violated.
    pub gap: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DescentReport {
    /// Iterations where G(y^{k+1}) > G(y^k) + tol.
    pub monotone_violations: Vec<Violation>,
    /// Iterations failing G(y^k) − G(x^{k+1}) ≥ coeff·‖x^{k+1}−y^k‖² − tol.
    /// Empty when the trace lacks candidate objective values (CSV replays).
    pub quantitative_shortfalls: Vec<Violation>,
    pub quantitative_checked: usize,
    pub tol: f64,
    pub g_initial: f64,
    pub g_final: f64,
    pub iterations: usize,
}

impl DescentReport {
    pub fn clean(&self) -> bool {
        self.monotone_violations.is_empty() && self.quantitative_shortfalls.is_empty()
    }
}

/// Verifies the per-iteration descent chain of a deterministic-style run.
/// Stochastic runs should be checked through [`seed_averaged_g`] instead.
pub fn descent_check(
    trace: &[TraceRecord],
    lyap: &LyapunovSpec,
    eta: f64,
    f_initial: f64,
    rel_tol: f64,
) -> DescentReport {
    let tol = rel_tol * f_initial.abs().max(f64::MIN_POSITIVE);
    let mut monotone = Vec::new();
    let mut quantitative = Vec::new();
    let mut quantitative_checked = 0;
    let mut g_prev = f_initial;
    let w0 = lyap.weight(0);
    for rec in trace {
        if rec.g > g_prev + tol {
            monotone.push(Violation {
                k: rec.k,
                lhs: g_prev,
                rhs: rec.g,
                gap: rec.g - g_prev - tol,
            });
        }
        // quantitative form needs the prox candidate's objective, which only
        // in-memory traces carry
        if rec.f_prox.is_finite() && rec.prox_step_sq.is_finite() {
            quantitative_checked += 1;
            // ξ_{k+1} evaluated at x^{k+1}: swap the freshest step's weight
            let xi_x = rec.xi - w0 * (rec.step_sq - rec.prox_step_sq);
            let g_x = rec.f_prox + xi_x;
            let coeff = lyap.descent_coefficient(eta, rec.beta, rec.d);
            let decrease = g_prev - g_x;
            let required = coeff * rec.prox_step_sq;
            if decrease < required - tol {
                quantitative.push(Violation {
                    k: rec.k,
                    lhs: decrease,
                    rhs: required,
                    gap: required - decrease - tol,
                });
            }
        }
        g_prev = rec.g;
    }
    DescentReport {
        monotone_violations: monotone,
        quantitative_shortfalls: quantitative,
        quantitative_checked,
        tol,
        g_initial: f_initial,
        g_final: g_prev,
        iterations: trace.len(),
    }
}

/// Pointwise mean and standard error of per-seed G series (all same length).
pub fn seed_averaged_g(runs: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    let s = runs.len();
    if s < 2 {
        return Err(Error::Config("need at least 2 seeds to average".into()));
    }
    let len = runs[0].len();
    if runs.iter().any(|r| r.len() != len) {
        return Err(Error::Config("seed runs have unequal lengths".into()));
    }
    let mut mean = vec![0.0; len];
    let mut se = vec![0.0; len];
    for i in 0..len {
        let m = runs.iter().map(|r| r[i]).sum::<f64>() / s as f64;
        let var = runs.iter().map(|r| (r[i] - m) * (r[i] - m)).sum::<f64>() / (s - 1) as f64;
        mean[i] = m;
        se[i] = (var / s as f64).sqrt();
    }
    Ok((mean, se))
}

#[derive(Debug, Clone)]
pub struct StationarityReport {
    /// q_j per coordinate; NaN where no update has happened yet.
    pub q: Vec<f64>,
    /// max |q_j| over defined coordinates.
    pub max_abs: f64,
    /// ‖q‖₂ over defined coordinates.
    pub norm: f64,
    pub undefined: Vec<usize>,
}

/// The explicit subgradient element built from the delayed-gradient
/// discrepancy and the prox step:
/// q_j = ∇_j f(x) − ∇_j f(ŷ^l) − (1/η)(x^{l+1}_j − y^l_j),
/// evaluated at the final iterate; ‖q‖ upper-bounds dist(0, ∂F(x)).
pub fn stationarity_residual(
    problem: &ProblemSpec,
    result: &SolveResult,
) -> Result<StationarityReport> {
    if result.y.len() != problem.m() {
        return Err(Error::DimensionMismatch {
            expected: problem.m(),
            got: result.y.len(),
        });
    }
    let grad = problem.full_gradient(&result.y);
    let mut q = vec![f64::NAN; problem.m()];
    let mut undefined = Vec::new();
    let mut max_abs: f64 = 0.0;
    let mut norm_sq = 0.0;
    for j in 0..problem.m() {
        match result.last_updates[j] {
            Some(upd) => {
                let qj = grad[j] - upd.stale_gradient - upd.prox_step / result.eta;
                q[j] = qj;
                max_abs = max_abs.max(qj.abs());
                norm_sq += qj * qj;
            }
            None => undefined.push(j),
        }
    }
    Ok(StationarityReport {
        q,
        max_abs,
        norm: norm_sq.sqrt(),
        undefined,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateHypothesis {
    /// KL exponent θ ≥ 1/2: geometric decay, fit log r_k against k.
    Linear,
    /// θ < 1/2: polynomial decay, fit log r_k against log k.
    Sublinear,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateFitReport {
    pub hypothesis: RateHypothesis,
    /// Regression slope: log-contraction per iteration (linear) or the
    /// polynomial exponent (sublinear).
    pub slope: f64,
    pub intercept: f64,
    /// exp(slope) for the linear hypothesis.
    pub contraction: Option<f64>,
    /// Coefficient of determination of the fit.
    pub r_squared: f64,
    pub f_star: f64,
    pub points: usize,
    /// Worst-case constant from the matching convergence analysis, for qualitative
    /// comparison only; set by the caller when the run's constants are known.
    pub b1: Option<f64>,
}

/// Fits a decay rate to residuals r_k = F_k − F*. F* defaults to the best
/// observed value; `k_offset` is the absolute index of `f_series[0]` so that
/// windowed fits keep honest abscissas.
pub fn fit_rate(
    f_series: &[f64],
    f_star: Option<f64>,
    hypothesis: RateHypothesis,
    k_offset: usize,
) -> Result<RateFitReport> {
    let f_star = f_star.unwrap_or_else(|| f_series.iter().copied().fold(f64::INFINITY, f64::min));
    let mut pts = Vec::new();
    for (i, &f) in f_series.iter().enumerate() {
        let r = f - f_star;
        if r > 0.0 && r.is_finite() {
            let k = (k_offset + i) as f64;
            let x = match hypothesis {
                RateHypothesis::Linear => k,
                RateHypothesis::Sublinear => {
                    if k_offset + i == 0 {
                        continue;
                    }
                    k.ln()
                }
            };
            pts.push((x, r.ln()));
        }
    }
    if pts.len() < 10 {
        return Err(Error::InsufficientResiduals {
            needed: 10,
            found: pts.len(),
        });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum::<f64>();
    let sxy = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>();
    if sxx == 0.0 {
        return Err(Error::Config("degenerate abscissa in rate fit".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot = pts.iter().map(|p| (p.1 - my) * (p.1 - my)).sum::<f64>();
    let ss_res = pts
        .iter()
        .map(|p| {
            let e = p.1 - (intercept + slope * p.0);
            e * e
        })
        .sum::<f64>();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(RateFitReport {
        hypothesis,
        slope,
        intercept,
        contraction: match hypothesis {
            RateHypothesis::Linear => Some(slope.exp()),
            RateHypothesis::Sublinear => None,
        },
        r_squared,
        f_star,
        points: pts.len(),
        b1: None,
    })
}

// ---------------------------------------------------------------------------
// Worst-case rate constants
// ---------------------------------------------------------------------------

/// β″ = max{β′, 0}, the convention used verbatim in the rate constants.
pub fn beta_double_prime(beta_neg: f64) -> f64 {
    beta_neg.max(0.0)
}

fn positive_denominator(denom: f64) -> Result<f64> {
    if denom <= 0.0 {
        return Err(Error::Config(format!(
            "rate-constant denominator {denom} ≤ 0: config outside the feasible region"
        )));
    }
    Ok(denom)
}

/// Bounded-delay stochastic constant:
/// b1 = [2(1/η+L)²(K+1) + 2L²T1(1+β) + 2L²T(1+β″)] / (1/(2η) − L/2 − Lτ(1+β)).
/// The numerator's T has no bounded-delay definition at the source; callers
/// conventionally pass t_upper = τ.
#[allow(clippy::too_many_arguments)]
pub fn b1_bounded_stochastic(
    eta: f64,
    l: f64,
    k_window: usize,
    t1: usize,
    t_upper: usize,
    tau: usize,
    beta: f64,
    beta_pp: f64,
) -> Result<f64> {
    let inv = 1.0 / eta + l;
    let num = 2.0 * inv * inv * (k_window + 1) as f64
        + 2.0 * l * l * t1 as f64 * (1.0 + beta)
        + 2.0 * l * l * t_upper as f64 * (1.0 + beta_pp);
    let den = positive_denominator(0.5 / eta - 0.5 * l - l * tau as f64 * (1.0 + beta))?;
    Ok(num / den)
}

/// Unbounded stochastic constant:
/// b1 = [(2/η² + 4L²) + 4L² + 4L²c₀(1+β)] / (1/(2η) − L/2 − L(1+β)√c₀).
pub fn b1_unbounded_stochastic(eta: f64, l: f64, c0: f64, beta: f64) -> Result<f64> {
    let num = 2.0 / (eta * eta) + 4.0 * l * l + 4.0 * l * l + 4.0 * l * l * c0 * (1.0 + beta);
    let den = positive_denominator(0.5 / eta - 0.5 * l - l * (1.0 + beta) * c0.sqrt())?;
    Ok(num / den)
}

/// Bounded-delay deterministic constant:
/// b1 = 3[(1/η+L)² + (1+β)²L²T1 + (1+β″)²L²T + 2(1+β)²L²μ_T·δ₀] / ((1/c − 1)L/2),
/// where c ∈ (0,1) is the stepsize fraction.
#[allow(clippy::too_many_arguments)]
pub fn b1_deterministic_bounded(
    eta: f64,
    l: f64,
    c: f64,
    t1: usize,
    t_upper: usize,
    mu_t: f64,
    delta0: f64,
    beta: f64,
    beta_pp: f64,
) -> Result<f64> {
    if !(0.0 < c && c < 1.0) {
        return Err(Error::Config(format!("c = {c} must be in (0,1)")));
    }
    let inv = 1.0 / eta + l;
    let bp = 1.0 + beta;
    let bpp = 1.0 + beta_pp;
    let num = 3.0
        * (inv * inv
            + bp * bp * l * l * t1 as f64
            + bpp * bpp * l * l * t_upper as f64
            + 2.0 * bp * bp * l * l * mu_t * delta0);
    let den = positive_denominator((1.0 / c - 1.0) * l / 2.0)?;
    Ok(num / den)
}

/// b2 = min(1/(b1e²R), r₀^{2θ−1}(R^{(2θ−1)/(2θ−2)} − 1)/(1 − 2θ)) for a fixed
/// R ∈ (1, ∞); meaningful for θ ∈ (0, 1/2).
pub fn b2_constant(b1: f64, e_kl: f64, r0: f64, theta: f64, big_r: f64) -> Result<f64> {
    if !(0.0 < theta && theta < 0.5) {
        return Err(Error::Config(format!("θ = {theta} must be in (0, 1/2)")));
    }
    if big_r <= 1.0 {
        return Err(Error::Config(format!("R = {big_r} must be > 1")));
    }
    if b1 <= 0.0 || e_kl <= 0.0 || r0 <= 0.0 {
        return Err(Error::Config("b1, e, r0 must all be > 0".into()));
    }
    let first = 1.0 / (b1 * e_kl * e_kl * big_r);
    let expo = (2.0 * theta - 1.0) / (2.0 * theta - 2.0);
    let second = r0.powf(2.0 * theta - 1.0) * (big_r.powf(expo) - 1.0) / (1.0 - 2.0 * theta);
    Ok(first.min(second))
}

/// θ = 1 finite-termination predicate: r₀ < 1/(b1e²).
pub fn finite_termination_predicate(b1: f64, e_kl: f64, r0: f64) -> bool {
    r0 < 1.0 / (b1 * e_kl * e_kl)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delays::{DelayMode, DelaySchedule, PmfSpec};
    use crate::model::{synth, LossKind, Regularizer};
    use crate::solver::{bounded_config, run_stochastic, stepsize_bounded};
    use std::sync::Arc;

    fn bounded_spec(l: f64, tau: usize, beta: f64) -> LyapunovSpec {
        LyapunovSpec::from_regime(&RegimeSpec::Bounded { tau }, l, beta, None).unwrap()
    }

    #[test]
    fn xi_bounded_hand_value() {
        // L=1, τ=2, β=0.5 → C=3; two unit steps → ξ = (2/6)(2·1 + 1·1) = 1
        let spec = bounded_spec(1.0, 2, 0.5);
        let xi = spec.xi_next(&[1.0, 1.0]);
        assert!((xi - 1.0).abs() < 1e-15, "xi = {xi}");
        // only the last τ steps matter
        let xi = spec.xi_next(&[777.0, 1.0, 1.0]);
        assert!((xi - 1.0).abs() < 1e-15);
    }

    #[test]
    fn xi_single_atom_pmf() {
        // p_1 = 1 → c0 = 1, c_{≥1} = 0, C = L(1+β); ξ = (L/(2(1+β)))·last step
        let regime = RegimeSpec::StochasticUnbounded {
            pmf: PmfSpec::Explicit {
                probs: vec![1.0],
            },
            k_max: 8,
        };
        let tables = regime.tables().unwrap();
        let (l, beta) = (2.0, 0.5);
        let spec = LyapunovSpec::from_regime(&regime, l, beta, tables).unwrap();
        let step = 0.3;
        let xi = spec.xi_next(&[9.0, 4.0, step]);
        let expect = l / (2.0 * (1.0 + beta)) * step;
        assert!((xi - expect).abs() < 1e-14, "xi = {xi}, expect {expect}");
    }

    #[test]
    fn xi_empty_and_zero_histories() {
        let spec = bounded_spec(1.0, 4, 0.8);
        assert_eq!(spec.xi_next(&[]), 0.0);
        assert_eq!(spec.xi_next(&[0.0; 10]), 0.0);
        // nonnegative on arbitrary nonnegative steps
        let xi = spec.xi_next(&[0.1, 0.0, 2.0, 0.5, 0.25]);
        assert!(xi >= 0.0);
    }

    #[test]
    fn zero_step_iteration_is_never_a_violation() {
        let spec = bounded_spec(1.0, 2, 0.5);
        let rec = TraceRecord {
            k: 0,
            block: 0,
            d: 0,
            beta: 0.5,
            branch: crate::trace::Branch::Prox,
            f: 1.0,
            xi: 0.0,
            g: 1.0,
            step_sq: 0.0,
            wall_ns: 0,
            f_prox: 1.0,
            f_extrap: 1.0,
            prox_step_sq: 0.0,
        };
        let report = descent_check(&[rec], &spec, 0.1, 1.0, 1e-12);
        assert!(report.clean());
        assert_eq!(report.quantitative_checked, 1);
    }

    #[test]
    fn compliant_delay_free_run_is_clean_and_chain_holds() {
        let data = Arc::new(synth::regression(30, 10, 1.0, 42));
        let p = ProblemSpec::new(LossKind::Quadratic, Regularizer::L1 { lambda: 0.05 }, data)
            .unwrap();
        let eta = stepsize_bounded(p.lipschitz(), 0, 0.0, 0.95).unwrap();
        let cfg = bounded_config(10, 0, eta, 0.0, 0.0, 2000, 3);
        let mut sched = DelaySchedule::new(DelayMode::Bounded { tau: 0 }, 3);
        let r = run_stochastic(&p, &cfg, &mut sched, vec![0.0; 10]).unwrap();
        let spec = LyapunovSpec::from_regime(&RegimeSpec::Bounded { tau: 0 }, p.lipschitz(), 0.0, None)
            .unwrap();
        let report = descent_check(&r.trace, &spec, eta, r.f_initial, 1e-12);
        assert!(report.clean(), "{:?}", report.monotone_violations.first());
        // F ≤ G ≤ F(y^0) along the run
        for rec in &r.trace {
            assert!(rec.f <= rec.g + 1e-15);
            assert!(rec.g <= r.f_initial + 1e-12 * r.f_initial.abs());
        }
    }

    #[test]
    fn seed_averaging_mean_and_se() {
        let runs = vec![vec![1.0, 3.0], vec![3.0, 5.0]];
        let (mean, se) = seed_averaged_g(&runs).unwrap();
        assert_eq!(mean, vec![2.0, 4.0]);
        assert!((se[0] - 1.0).abs() < 1e-15);
        assert!(seed_averaged_g(&runs[..1]).is_err());
    }

    #[test]
    fn fit_rate_recovers_planted_geometric_series() {
        let series: Vec<f64> = (0..50).map(|k| 0.5f64.powi(k)).collect();
        let fit = fit_rate(&series, Some(0.0), RateHypothesis::Linear, 0).unwrap();
        assert!((fit.contraction.unwrap() - 0.5).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert_eq!(fit.points, 50);
    }

    #[test]
    fn fit_rate_recovers_planted_polynomial_series() {
        let series: Vec<f64> = (1..200).map(|k| (k as f64).powi(-2)).collect();
        let fit = fit_rate(&series, Some(0.0), RateHypothesis::Sublinear, 1).unwrap();
        assert!((fit.slope + 2.0).abs() < 1e-12, "slope {}", fit.slope);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_rate_needs_ten_positive_points() {
        let series = vec![1.0, 0.5, 0.25, 0.0, 0.0, 0.0];
        let err = fit_rate(&series, Some(0.0), RateHypothesis::Linear, 0).unwrap_err();
        assert!(matches!(err, Error::InsufficientResiduals { needed: 10, found: 3 }));
    }

    #[test]
    fn b1_bounded_frozen_example() {
        // L=1, η=0.1, K=2, T1=1, T=2, τ=2, β=0.5, β″=0:
        // numerator 2·121·3 + 3 + 4 = 733, denominator 5 − 0.5 − 3 = 1.5
        let b1 = b1_bounded_stochastic(0.1, 1.0, 2, 1, 2, 2, 0.5, 0.0).unwrap();
        assert!((b1 - 733.0 / 1.5).abs() < 1e-10, "b1 = {b1}");
        assert!((b1 - 488.666_666_666_666_6).abs() < 1e-9);
    }

    #[test]
    fn b1_rejects_infeasible_configs() {
        // η so large the denominator goes nonpositive
        assert!(b1_bounded_stochastic(1.0, 1.0, 2, 1, 2, 2, 0.5, 0.0).is_err());
        assert!(b1_unbounded_stochastic(1.0, 1.0, 4.0, 0.5).is_err());
        assert!(b1_deterministic_bounded(0.1, 1.0, 1.5, 1, 2, 1.0, 1.0, 0.5, 0.0).is_err());
    }

    #[test]
    fn b1_blows_up_as_denominator_shrinks() {
        // bounded denominator hits 0 at η = 1/(L + 2Lτ(1+β)) = 1/7
        let near = b1_bounded_stochastic(1.0 / 7.0 - 1e-9, 1.0, 2, 1, 2, 2, 0.5, 0.0).unwrap();
        let far = b1_bounded_stochastic(0.05, 1.0, 2, 1, 2, 2, 0.5, 0.0).unwrap();
        assert!(near > 1e6 * far);
    }

    #[test]
    fn b2_picks_the_smaller_branch() {
        let (theta, r0, e) = (0.25, 1.0, 1.0);
        // r0^{2θ−1} = 1; second branch = (R^{1/3} − 1)/0.5 at R = 2
        let second = (2f64.powf(1.0 / 3.0) - 1.0) / 0.5;
        let b2 = b2_constant(1.0, e, r0, theta, 2.0).unwrap();
        assert!((b2 - (0.5f64).min(second)).abs() < 1e-15);
        // huge b1 → first branch dominates the min
        let b2 = b2_constant(1e9, e, r0, theta, 2.0).unwrap();
        assert!((b2 - 1.0 / (1e9 * 2.0)).abs() < 1e-24);
        assert!(b2_constant(1.0, e, r0, 0.75, 2.0).is_err());
        assert!(b2_constant(1.0, e, r0, theta, 1.0).is_err());
    }

    #[test]
    fn finite_termination_predicate_threshold() {
        assert!(finite_termination_predicate(1.0, 1.0, 0.99));
        assert!(!finite_termination_predicate(1.0, 1.0, 1.0));
        assert!(beta_double_prime(-0.08) == 0.0);
        assert!(beta_double_prime(0.3) == 0.3);
    }

    #[test]
    fn stationarity_matches_direct_formula_on_random_states() {
        use crate::solver::LastUpdate;
        use rand::{Rng, SeedableRng};
        let data = Arc::new(synth::classification(25, 8, 0.8, 1.0, 7));
        let p = ProblemSpec::new(LossKind::Logistic, Regularizer::L1 { lambda: 0.01 }, data)
            .unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let y: Vec<f64> = (0..8).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let eta = rng.gen_range(0.01..1.0);
            let updates: Vec<Option<LastUpdate>> = (0..8)
                .map(|_| {
                    Some(LastUpdate {
                        stale_gradient: rng.gen_range(-1.0..1.0),
                        prox_step: rng.gen_range(-0.5..0.5),
                        at_iteration: 0,
                    })
                })
                .collect();
            let result = SolveResult {
                y: y.clone(),
                f_initial: 0.0,
                f_final: 0.0,
                trace: Vec::new(),
                last_updates: updates.clone(),
                duration: std::time::Duration::ZERO,
                workers: 1,
                eta,
            };
            let report = stationarity_residual(&p, &result).unwrap();
            let grad = p.full_gradient(&y);
            for j in 0..8 {
                let u = updates[j].unwrap();
                let direct = grad[j] - u.stale_gradient - u.prox_step / eta;
                assert!((report.q[j] - direct).abs() < 1e-15);
            }
            assert!(report.undefined.is_empty());
        }
    }

    #[test]
    fn stationarity_reports_untouched_coordinates() {
        let data = Arc::new(synth::regression(10, 4, 1.0, 5));
        let p = ProblemSpec::new(LossKind::Quadratic, Regularizer::None, data).unwrap();
        let result = SolveResult {
            y: vec![0.0; 4],
            f_initial: 0.0,
            f_final: 0.0,
            trace: Vec::new(),
            last_updates: vec![None; 4],
            duration: std::time::Duration::ZERO,
            workers: 1,
            eta: 0.1,
        };
        let report = stationarity_residual(&p, &result).unwrap();
        assert_eq!(report.undefined, vec![0, 1, 2, 3]);
        assert!(report.q.iter().all(|v| v.is_nan()));
        assert_eq!(report.max_abs, 0.0);
    }

    #[test]
    fn smooth_converged_run_residual_matches_gradient_norm() {
        let data = Arc::new(synth::regression(20, 6, 1.0, 8));
        let p = ProblemSpec::new(LossKind::Quadratic, Regularizer::None, data).unwrap();
        let eta = 0.4 / p.lipschitz();
        let cfg = bounded_config(6, 0, eta, 0.0, 0.0, 6000, 2);
        let mut sched = DelaySchedule::new(DelayMode::Bounded { tau: 0 }, 2);
        let r = run_stochastic(&p, &cfg, &mut sched, vec![0.0; 6]).unwrap();
        let report = stationarity_residual(&p, &r).unwrap();
        let grad = p.full_gradient(&r.y);
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        assert!((report.norm - gnorm).abs() < 1e-8, "{} vs {gnorm}", report.norm);
    }
}
