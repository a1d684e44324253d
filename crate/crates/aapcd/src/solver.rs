//! The AAPCD engines: the per-iteration update (delayed-gradient prox step,
//! delay-aware momentum extrapolation, objective acceptance test), the
//! simulated single-threaded stochastic and deterministic drivers, the real
//! lock-free multi-worker engine, and the worst-case stepsize/momentum
//! calculators.

use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::delays::{
    c_table, mu_delta_tables, read_set, DelaySchedule, DiffRecord, EpsilonSpec,
    HistoryRing, PmfSpec, ReadPolicy, SeriesTables,
};
use crate::diagnostics::LyapunovSpec;
use crate::model::{ProblemSpec, ResidualCache};
use crate::prox::prox;
use crate::trace::{Branch, TraceRecord};
use crate::{Error, Result};

/// Divergence guard threshold relative to |F(y^0)|.
const DIVERGENCE_FACTOR: f64 = 1e6;

/// A partition of {0..m} into blocks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockPartition {
    pub blocks: Vec<Vec<usize>>,
}

impl BlockPartition {
    /// One coordinate per block.
    pub fn singletons(m: usize) -> Self {
        BlockPartition {
            blocks: (0..m).map(|j| vec![j]).collect(),
        }
    }

    /// `count` contiguous blocks of near-equal size.
    pub fn contiguous(m: usize, count: usize) -> Self {
        let count = count.clamp(1, m.max(1));
        let base = m / count;
        let extra = m % count;
        let mut blocks = Vec::with_capacity(count);
        let mut start = 0;
        for b in 0..count {
            let len = base + usize::from(b < extra);
            blocks.push((start..start + len).collect());
            start += len;
        }
        BlockPartition { blocks }
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        let mut seen = vec![false; m];
        for block in &self.blocks {
            if block.is_empty() {
                return Err(Error::Config("empty block in partition".into()));
            }
            for &j in block {
                if j >= m {
                    return Err(Error::IndexOutOfRange { index: j, m });
                }
                if seen[j] {
                    return Err(Error::Config(format!("coordinate {j} appears twice")));
                }
                seen[j] = true;
            }
        }
        if seen.iter().any(|&s| !s) {
            return Err(Error::Config("partition does not cover {0..m}".into()));
        }
        Ok(())
    }
}

/// Which delay regime's theory (stepsize bounds, Lyapunov weights) applies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "regime")]
pub enum RegimeSpec {
    Bounded {
        tau: usize,
    },
    StochasticUnbounded {
        pmf: PmfSpec,
        k_max: usize,
    },
    DeterministicUnbounded {
        eps: EpsilonSpec,
        d_max: usize,
    },
}

impl RegimeSpec {
    pub fn tables(&self) -> Result<Option<SeriesTables>> {
        match self {
            RegimeSpec::Bounded { .. } => Ok(None),
            RegimeSpec::StochasticUnbounded { pmf, k_max } => {
                Ok(Some(c_table(pmf, *k_max, 1e-12)?))
            }
            RegimeSpec::DeterministicUnbounded { eps, d_max } => {
                Ok(Some(mu_delta_tables(eps, *d_max)?))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Stepsize; resolve `auto` through the calculators before building this.
    pub eta: f64,
    /// Momentum for fresh updates (d_k ≤ T1).
    pub beta: f64,
    /// Momentum for stale updates (d_k > T1); β' ∈ (−1, 0].
    pub beta_neg: f64,
    /// Staleness threshold separating the two momentum levels.
    pub t1: usize,
    pub blocks: BlockPartition,
    /// Iteration budget R.
    pub iters: usize,
    pub seed: u64,
    pub regime: RegimeSpec,
    pub read_policy: ReadPolicy,
    /// History ring capacity; defaults to 4(τ+K) in bounded mode and a hard
    /// engineering cap otherwise.
    pub history_capacity: Option<usize>,
}

impl SolverConfig {
    pub fn validate(&self, m: usize) -> Result<()> {
        if self.eta <= 0.0 || !self.eta.is_finite() {
            return Err(Error::Config(format!("η = {} must be > 0", self.eta)));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::Config(format!("β = {} must be ≥ 0", self.beta)));
        }
        if !(self.beta_neg > -1.0 && self.beta_neg <= 0.0) {
            return Err(Error::Config(format!(
                "β' = {} must be in (−1, 0]",
                self.beta_neg
            )));
        }
        self.blocks.validate(m)
    }

    fn history_capacity(&self, schedule_tau: Option<usize>) -> usize {
        if let Some(h) = self.history_capacity {
            return h;
        }
        match schedule_tau {
            Some(tau) => HistoryRing::bounded_capacity(tau, self.blocks.len()),
            // unbounded simulated mode: declared engineering bound with
            // explicit failure on overflow
            None => 1 << 16,
        }
    }
}

// ---------------------------------------------------------------------------
// Worst-case parameter calculators
// ---------------------------------------------------------------------------

/// Bounded-delay stepsize: η = safety / (L + 2LT1(1+β)).
pub fn stepsize_bounded(l: f64, t1: usize, beta: f64, safety: f64) -> Result<f64> {
    if l <= 0.0 {
        return Err(Error::Config(format!("L = {l} must be > 0")));
    }
    if !(0.0 < safety && safety < 1.0) {
        return Err(Error::Config(format!("safety {safety} must be in (0,1)")));
    }
    Ok(safety / (l + 2.0 * l * t1 as f64 * (1.0 + beta)))
}

/// Bounded-delay momentum cap: β_max = (1/(Lτ))(1/(2η) − L/2) − 1.
/// A result ≤ −1 means η is infeasible for this τ.
pub fn momentum_bound_bounded(eta: f64, l: f64, tau: usize) -> Result<f64> {
    if l <= 0.0 || eta <= 0.0 || tau == 0 {
        return Err(Error::Config(format!(
            "need η, L > 0 and τ ≥ 1 (η = {eta}, L = {l}, τ = {tau})"
        )));
    }
    let cap = (1.0 / (l * tau as f64)) * (0.5 / eta - 0.5 * l) - 1.0;
    if cap <= -1.0 {
        return Err(Error::Config(format!(
            "momentum cap {cap} ≤ −1: η = {eta} too large for τ = {tau}"
        )));
    }
    Ok(cap)
}

/// Stochastic-unbounded stepsize: η = safety / (L + 2L√c_T1(1+β)).
pub fn stepsize_unbounded_stochastic(l: f64, c_t1: f64, beta: f64, safety: f64) -> Result<f64> {
    if l <= 0.0 {
        return Err(Error::Config(format!("L = {l} must be > 0")));
    }
    if c_t1 < 0.0 {
        return Err(Error::Config(format!("c_T1 = {c_t1} must be ≥ 0")));
    }
    if !(0.0 < safety && safety < 1.0) {
        return Err(Error::Config(format!("safety {safety} must be in (0,1)")));
    }
    Ok(safety / (l + 2.0 * l * c_t1.sqrt() * (1.0 + beta)))
}

/// Companion momentum cap for the stochastic-unbounded regime:
/// (1/(L√c_0))(1/(2η) − L/2) − 1.
pub fn momentum_cap_unbounded_stochastic(eta: f64, l: f64, c0: f64) -> f64 {
    (1.0 / (l * c0.sqrt())) * (0.5 / eta - 0.5 * l) - 1.0
}

/// The threshold feasibility condition c_T1 ≥ 9c_0/(16(1+β)²) behind the
/// stochastic-unbounded parameter recommendation.
pub fn stochastic_t1_feasible(c_t1: f64, c0: f64, beta: f64) -> bool {
    c_t1 >= 9.0 * c0 / (16.0 * (1.0 + beta) * (1.0 + beta))
}

/// Deterministic stepsize: η = c / (L + 2√(δ0·μ_T1)·L·(1+β)), c ∈ (0,1).
pub fn stepsize_deterministic(l: f64, delta0: f64, mu_t1: f64, beta: f64, c: f64) -> Result<f64> {
    if !(0.0 < c && c < 1.0) {
        return Err(Error::Config(format!("c = {c} must be in (0,1)")));
    }
    if l <= 0.0 {
        return Err(Error::Config(format!("L = {l} must be > 0")));
    }
    Ok(c / (l + 2.0 * (delta0 * mu_t1).sqrt() * l * (1.0 + beta)))
}

/// Per-delay momentum cap in the deterministic regime:
/// β_k < (√μ_T1/(c·√μ_d))(1+β) − 1.
pub fn momentum_cap_deterministic(mu_t1: f64, mu_d: f64, c: f64, beta: f64) -> f64 {
    if mu_d == 0.0 {
        return f64::INFINITY;
    }
    (mu_t1.sqrt() / (c * mu_d.sqrt())) * (1.0 + beta) - 1.0
}

/// The threshold feasibility condition μ_T1 ≥ 4c²μ_d/(1+β)² behind the
/// deterministic parameter recommendation.
pub fn deterministic_t1_feasible(mu_t1: f64, mu_d: f64, c: f64, beta: f64) -> bool {
    mu_t1 >= 4.0 * c * c * mu_d / ((1.0 + beta) * (1.0 + beta))
}

/// The bounded-regime Lyapunov descent coefficient
/// 1/(2η) − L/2 − Lτ(1+β_k); strictly increasing as β_k decreases, which is
/// what makes negative momentum attractive for stale updates.
pub fn descent_coefficient_bounded(eta: f64, l: f64, tau: usize, beta_k: f64) -> f64 {
    0.5 / eta - 0.5 * l - l * tau as f64 * (1.0 + beta_k)
}

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

/// Per-coordinate data from the last prox update, kept for the stationarity
/// residual q.
#[derive(Debug, Clone, Copy)]
pub struct LastUpdate {
    /// ∇ⱼf(ŷ) at the last update of this coordinate.
    pub stale_gradient: f64,
    /// x^(l+1)ⱼ − y^lⱼ.
    pub prox_step: f64,
    pub at_iteration: usize,
}

#[derive(Debug)]
pub struct SolveResult {
    pub y: Vec<f64>,
    pub f_initial: f64,
    pub f_final: f64,
    pub trace: Vec<TraceRecord>,
    pub last_updates: Vec<Option<LastUpdate>>,
    pub duration: std::time::Duration,
    pub workers: usize,
    pub eta: f64,
}

// ---------------------------------------------------------------------------
// Simulated single-threaded engine
// ---------------------------------------------------------------------------

struct Engine<'a> {
    problem: &'a ProblemSpec,
    config: &'a SolverConfig,
    lyap: LyapunovSpec,
    y: Vec<f64>,
    cache: ResidualCache,
    reg_sum: f64,
    f_y: f64,
    ring: HistoryRing,
    step_sqs: Vec<f64>,
    last_updates: Vec<Option<LastUpdate>>,
    trace: Vec<TraceRecord>,
    // scratch residuals for the two acceptance candidates
    z_hat: Vec<f64>,
    z_cand: Vec<f64>,
}

impl<'a> Engine<'a> {
    fn new(problem: &'a ProblemSpec, config: &'a SolverConfig, y0: Vec<f64>) -> Result<Self> {
        config.validate(problem.m())?;
        let cache = ResidualCache::new(&problem.data, &y0);
        let reg_sum = problem.reg_value(&y0);
        let f_y = problem.smooth_from_residual(&cache.z) + reg_sum;
        let tables = config.regime.tables()?;
        let lyap = LyapunovSpec::from_regime(&config.regime, problem.lipschitz(), config.beta, tables)?;
        let tau_hint = match &config.regime {
            RegimeSpec::Bounded { tau } => Some(*tau),
            _ => None,
        };
        let capacity = config.history_capacity(tau_hint);
        let n = problem.data.n();
        Ok(Engine {
            problem,
            config,
            lyap,
            y: y0,
            cache,
            reg_sum,
            f_y,
            ring: HistoryRing::new(capacity),
            step_sqs: Vec::new(),
            last_updates: vec![None; problem.m()],
            trace: Vec::new(),
            z_hat: vec![0.0; n],
            z_cand: vec![0.0; n],
        })
    }

    /// One iteration: delayed-gradient prox step on `block`, momentum
    /// extrapolation, acceptance test, bookkeeping.
    fn step(&mut self, k: usize, block_idx: usize, d_k: usize) -> Result<()> {
        let problem = self.problem;
        let cfg = self.config;
        let eta = cfg.eta;
        let block = &cfg.blocks.blocks[block_idx];

        // residual of the delayed iterate: roll the read-set updates back out
        self.z_hat.copy_from_slice(&self.cache.z);
        if d_k > 0 {
            for h in read_set(cfg.read_policy, k, d_k) {
                let rec = self.ring.get(h)?;
                for &(j, delta) in &rec.coords {
                    for (i, v) in problem.data.column(j) {
                        self.z_hat[i] -= delta * v;
                    }
                }
            }
        }

        let beta_k = if d_k <= cfg.t1 { cfg.beta } else { cfg.beta_neg };

        // prox candidate x and extrapolated candidate v on the block
        let mut xs = Vec::with_capacity(block.len());
        let mut vs = Vec::with_capacity(block.len());
        let mut ghats = Vec::with_capacity(block.len());
        let mut prox_step_sq = 0.0;
        for &j in block {
            let ghat = problem.coord_gradient_from_residual(&self.z_hat, j);
            let x_j = prox(problem.reg, self.y[j] - eta * ghat, eta);
            let v_j = x_j + beta_k * (x_j - self.y[j]);
            prox_step_sq += (x_j - self.y[j]) * (x_j - self.y[j]);
            ghats.push(ghat);
            xs.push(x_j);
            vs.push(v_j);
        }

        let f_of = |engine: &mut Self, cand: &[f64]| {
            engine.z_cand.copy_from_slice(&engine.cache.z);
            let mut reg = engine.reg_sum;
            for (idx, &j) in block.iter().enumerate() {
                let delta = cand[idx] - engine.y[j];
                if delta != 0.0 {
                    for (i, v) in problem.data.column(j) {
                        engine.z_cand[i] += delta * v;
                    }
                }
                reg += problem.reg.value(cand[idx]) - problem.reg.value(engine.y[j]);
            }
            problem.smooth_from_residual(&engine.z_cand) + reg
        };

        let f_x = f_of(self, &xs);
        let f_v = f_of(self, &vs);
        let (branch, chosen, f_new) = if f_x <= f_v {
            (Branch::Prox, &xs, f_x)
        } else {
            (Branch::Extrapolated, &vs, f_v)
        };

        // publish y^(k+1)
        let mut coords = Vec::with_capacity(block.len());
        let mut step_sq = 0.0;
        for (idx, &j) in block.iter().enumerate() {
            let delta = chosen[idx] - self.y[j];
            step_sq += delta * delta;
            coords.push((j, delta));
            self.reg_sum += problem.reg.value(chosen[idx]) - problem.reg.value(self.y[j]);
            self.y[j] = chosen[idx];
            self.cache.update(&problem.data, j, delta)?;
            self.last_updates[j] = Some(LastUpdate {
                stale_gradient: ghats[idx],
                prox_step: xs[idx] - (chosen[idx] - delta),
                at_iteration: k,
            });
        }
        self.f_y = f_new;

        if self.cache.rebuild_due() {
            self.cache.rebuild(&problem.data, &self.y);
            self.reg_sum = problem.reg_value(&self.y);
            self.f_y = problem.smooth_from_residual(&self.cache.z) + self.reg_sum;
        }

        self.ring.push(DiffRecord { k, coords, step_sq });
        self.step_sqs.push(step_sq);
        let xi = self.lyap.xi_next(&self.step_sqs);

        self.trace.push(TraceRecord {
            k,
            block: block_idx,
            d: d_k,
            beta: beta_k,
            branch,
            f: f_new,
            xi,
            g: f_new + xi,
            step_sq,
            // simulated engines emit a zero logical clock so that identical
            // (seed, manifest) produce bit-identical trace files
            wall_ns: 0,
            f_prox: f_x,
            f_extrap: f_v,
            prox_step_sq,
        });
        Ok(())
    }

    fn guard(&self, k: usize, f0: f64) -> Result<()> {
        if !self.f_y.is_finite() || self.y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                k,
                reason: "non-finite iterate or objective".into(),
            });
        }
        if self.f_y > DIVERGENCE_FACTOR * f0.abs().max(1.0) {
            return Err(Error::Divergence {
                k,
                reason: format!("F = {} exceeds {DIVERGENCE_FACTOR}×|F(y^0)|", self.f_y),
            });
        }
        Ok(())
    }

    fn finish(self, start: Instant, eta: f64, f0: f64) -> SolveResult {
        SolveResult {
            y: self.y,
            f_initial: f0,
            f_final: self.f_y,
            trace: self.trace,
            last_updates: self.last_updates,
            duration: start.elapsed(),
            workers: 1,
            eta,
        }
    }
}

fn run_simulated(
    problem: &ProblemSpec,
    config: &SolverConfig,
    schedule: &mut DelaySchedule,
    y0: Vec<f64>,
    mut select: impl FnMut(usize, &mut ChaCha8Rng) -> usize,
) -> Result<SolveResult> {
    let start = Instant::now();
    let mut engine = Engine::new(problem, config, y0)?;
    let f0 = engine.f_y;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for k in 0..config.iters {
        let block_idx = select(k, &mut rng);
        let d_k = schedule.next_delay(k)?;
        engine.step(k, block_idx, d_k)?;
        engine.guard(k, f0)?;
    }
    Ok(engine.finish(start, config.eta, f0))
}

/// Algorithm with uniformly random block choice; deterministic given the
/// seed in simulated mode.
pub fn run_stochastic(
    problem: &ProblemSpec,
    config: &SolverConfig,
    schedule: &mut DelaySchedule,
    y0: Vec<f64>,
) -> Result<SolveResult> {
    let nb = config.blocks.len();
    run_simulated(problem, config, schedule, y0, move |_, rng| {
        rng.gen_range(0..nb)
    })
}

/// Deterministic variant: cyclic (round-robin) block selection, so every
/// window of K consecutive iterations touches every block.
pub fn run_deterministic(
    problem: &ProblemSpec,
    config: &SolverConfig,
    schedule: &mut DelaySchedule,
    y0: Vec<f64>,
) -> Result<SolveResult> {
    let nb = config.blocks.len();
    run_simulated(problem, config, schedule, y0, move |k, _| k % nb)
}

// ---------------------------------------------------------------------------
// Real multi-worker engine
// ---------------------------------------------------------------------------

struct SharedState {
    y: Vec<AtomicU64>,
    counter: AtomicUsize,
}

impl SharedState {
    fn read_coord(&self, j: usize) -> f64 {
        f64::from_bits(self.y[j].load(Ordering::Relaxed))
    }

    fn snapshot(&self, out: &mut [f64]) {
        for (j, slot) in out.iter_mut().enumerate() {
            *slot = self.read_coord(j);
        }
    }
}

/// Runs the real asynchronous engine: `workers` threads share the iterate
/// through per-coordinate atomics (relaxed reads, release publishes), one
/// global iteration counter provides the delay measurement d_k = k − i, and
/// trace records flow through a channel to a single collector.
///
/// The acceptance test uses each worker's possibly stale view of the
/// objective; the simulated engines are the fidelity reference.
pub fn run_async(
    problem: &ProblemSpec,
    config: &SolverConfig,
    workers: usize,
    y0: Vec<f64>,
) -> Result<SolveResult> {
    config.validate(problem.m())?;
    if workers == 0 {
        return Err(Error::Config("need at least one worker".into()));
    }
    let start = Instant::now();
    let f0 = problem.full_objective(&y0, None)?;
    let shared = Arc::new(SharedState {
        y: y0.iter().map(|&v| AtomicU64::new(v.to_bits())).collect(),
        counter: AtomicUsize::new(0),
    });
    let (tx, rx) = mpsc::channel::<(TraceRecord, Vec<(usize, LastUpdate)>)>();

    std::thread::scope(|scope| -> Result<()> {
        for w in 0..workers {
            let shared = Arc::clone(&shared);
            let tx = tx.clone();
            let problem = problem.clone();
            let cfg = config.clone();
            scope.spawn(move || {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(w as u64));
                let m = problem.m();
                let mut view = vec![0.0; m];
                let worker_start = Instant::now();
                loop {
                    let read_stamp = shared.counter.load(Ordering::Acquire);
                    if read_stamp >= cfg.iters {
                        break;
                    }
                    shared.snapshot(&mut view);
                    let z_hat = problem.data.matvec(&view);
                    let block_idx = rng.gen_range(0..cfg.blocks.len());
                    let block = &cfg.blocks.blocks[block_idx];

                    let mut xs = Vec::with_capacity(block.len());
                    let mut ghats = Vec::with_capacity(block.len());
                    let mut prox_step_sq = 0.0;
                    for &j in block {
                        let ghat = problem.coord_gradient_from_residual(&z_hat, j);
                        let x_j = prox(problem.reg, view[j] - cfg.eta * ghat, cfg.eta);
                        prox_step_sq += (x_j - view[j]) * (x_j - view[j]);
                        ghats.push(ghat);
                        xs.push(x_j);
                    }

                    // the publish iteration determines the measured delay and
                    // with it the momentum level
                    let k = shared.counter.fetch_add(1, Ordering::AcqRel);
                    if k >= cfg.iters {
                        break;
                    }
                    let d_k = k - read_stamp;
                    let beta_k = if d_k <= cfg.t1 { cfg.beta } else { cfg.beta_neg };
                    let vs: Vec<f64> = block
                        .iter()
                        .enumerate()
                        .map(|(idx, &j)| xs[idx] + beta_k * (xs[idx] - view[j]))
                        .collect();

                    let f_of = |cand: &[f64]| {
                        let mut z = z_hat.clone();
                        let mut reg = problem.reg_value(&view);
                        for (idx, &j) in block.iter().enumerate() {
                            let delta = cand[idx] - view[j];
                            if delta != 0.0 {
                                for (i, v) in problem.data.column(j) {
                                    z[i] += delta * v;
                                }
                            }
                            reg += problem.reg.value(cand[idx]) - problem.reg.value(view[j]);
                        }
                        problem.smooth_from_residual(&z) + reg
                    };
                    let f_x = f_of(&xs);
                    let f_v = f_of(&vs);
                    let (branch, chosen, f_new) = if f_x <= f_v {
                        (Branch::Prox, &xs, f_x)
                    } else {
                        (Branch::Extrapolated, &vs, f_v)
                    };

                    let mut step_sq = 0.0;
                    let mut updates = Vec::with_capacity(block.len());
                    for (idx, &j) in block.iter().enumerate() {
                        let delta = chosen[idx] - view[j];
                        step_sq += delta * delta;
                        shared.y[j].store(chosen[idx].to_bits(), Ordering::Release);
                        updates.push((
                            j,
                            LastUpdate {
                                stale_gradient: ghats[idx],
                                prox_step: xs[idx] - view[j],
                                at_iteration: k,
                            },
                        ));
                    }

                    let rec = TraceRecord {
                        k,
                        block: block_idx,
                        d: d_k,
                        beta: beta_k,
                        branch,
                        f: f_new,
                        xi: 0.0,
                        g: f_new,
                        step_sq,
                        wall_ns: worker_start.elapsed().as_nanos() as u64,
                        f_prox: f_x,
                        f_extrap: f_v,
                        prox_step_sq,
                    };
                    if tx.send((rec, updates)).is_err() {
                        break;
                    }
                }
            });
        }
        Ok(())
    })?;
    drop(tx);

    let mut trace = Vec::with_capacity(config.iters);
    let mut last_updates: Vec<Option<LastUpdate>> = vec![None; problem.m()];
    for (rec, updates) in rx.iter() {
        for (j, upd) in updates {
            let newer = last_updates[j].map_or(true, |old| upd.at_iteration >= old.at_iteration);
            if newer {
                last_updates[j] = Some(upd);
            }
        }
        trace.push(rec);
    }
    trace.sort_by_key(|r| r.k);
    trace.truncate(config.iters);

    // fill xi/G from the measured step series
    let tables = config.regime.tables()?;
    let lyap = LyapunovSpec::from_regime(&config.regime, problem.lipschitz(), config.beta, tables)?;
    let mut step_sqs = Vec::with_capacity(trace.len());
    for rec in trace.iter_mut() {
        step_sqs.push(rec.step_sq);
        rec.xi = lyap.xi_next(&step_sqs);
        rec.g = rec.f + rec.xi;
    }

    let y: Vec<f64> = (0..problem.m()).map(|j| shared.read_coord(j)).collect();
    let f_final = problem.full_objective(&y, None)?;
    Ok(SolveResult {
        y,
        f_initial: f0,
        f_final,
        trace,
        last_updates,
        duration: start.elapsed(),
        workers,
        eta: config.eta,
    })
}

/// Convenience: a bounded-regime config with sensible defaults.
/// T1 defaults to ⌈τ/2⌉ per the bounded-delay threshold recommendation.
pub fn bounded_config(
    m: usize,
    tau: usize,
    eta: f64,
    beta: f64,
    beta_neg: f64,
    iters: usize,
    seed: u64,
) -> SolverConfig {
    SolverConfig {
        eta,
        beta,
        beta_neg,
        t1: tau.div_ceil(2),
        blocks: BlockPartition::singletons(m),
        iters,
        seed,
        regime: RegimeSpec::Bounded { tau },
        read_policy: ReadPolicy::Consistent,
        history_capacity: None,
    }
}

/// The experiment preset T1 = 0.9τ.
pub fn t1_experiment_preset(tau: usize) -> usize {
    (0.9 * tau as f64).round() as usize
}
