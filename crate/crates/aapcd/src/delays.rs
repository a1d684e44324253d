//! The staleness process: delay schedules producing d_k and the read-set
//! I(k) behind the delayed iterate ŷ^k, the history ring that reconstructs
//! past iterates from per-iteration differences, and the series tables
//! (c_k, δ_i, μ_d) used by the unbounded-delay analysis.

use std::collections::VecDeque;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// How d_k is produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum DelayMode {
    /// d_k sampled uniformly from {0, …, min(k, τ)}.
    Bounded { tau: usize },
    /// d_k sampled from p_j ∝ j^(−exponent), truncated at min(k, truncation)
    /// and renormalized.
    PowerLaw { exponent: f64, truncation: usize },
    /// Explicit per-iteration delays, clamped to ≤ k.
    Scripted { delays: Vec<usize> },
    /// Delays measured from real worker interleaving; the engine records
    /// them, the schedule itself produces nothing.
    Measured,
}

/// Which subset of {k−1, …, k−d_k} the delayed iterate rolls back.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy")]
pub enum ReadPolicy {
    /// I(k) is the full interval, so ŷ^k = y^(k−d_k). The default: exact
    /// reproducibility, matches the bounded analysis.
    Consistent,
    /// Seeded random subset of the interval; opt-in stress mode.
    Inconsistent { seed: u64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DelaySchedule {
    pub mode: DelayMode,
    pub seed: u64,
    #[serde(skip)]
    rng: Option<ChaCha8Rng>,
    /// Prefix sums of the unnormalized power-law weights, built lazily.
    #[serde(skip)]
    prefix: Vec<f64>,
}

impl DelaySchedule {
    pub fn new(mode: DelayMode, seed: u64) -> Self {
        DelaySchedule {
            mode,
            seed,
            rng: None,
            prefix: Vec::new(),
        }
    }

    /// Loads a scripted schedule from a one-integer-per-line text file.
    pub fn from_script_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut delays = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            delays.push(line.parse::<usize>().map_err(|e| Error::Parse {
                path: path.display().to_string(),
                line: lineno + 1,
                msg: e.to_string(),
            })?);
        }
        Ok(DelaySchedule::new(DelayMode::Scripted { delays }, 0))
    }

    /// The delay bound τ when one exists.
    pub fn tau(&self) -> Option<usize> {
        match &self.mode {
            DelayMode::Bounded { tau } => Some(*tau),
            DelayMode::Scripted { delays } => delays.iter().max().copied().or(Some(0)),
            _ => None,
        }
    }

    fn rng(&mut self) -> &mut ChaCha8Rng {
        if self.rng.is_none() {
            self.rng = Some(ChaCha8Rng::seed_from_u64(self.seed));
        }
        self.rng.as_mut().unwrap()
    }

    /// Produces d_k; deterministic given the seed.
    pub fn next_delay(&mut self, k: usize) -> Result<usize> {
        match &self.mode {
            DelayMode::Bounded { tau } => {
                let hi = (*tau).min(k);
                if hi == 0 {
                    // keep the RNG stream aligned regardless of k
                    let _ = self.rng().gen::<u64>();
                    return Ok(0);
                }
                let r = self.rng().gen::<u64>();
                Ok((r % (hi as u64 + 1)) as usize)
            }
            DelayMode::PowerLaw {
                exponent,
                truncation,
            } => {
                let (exponent, truncation) = (*exponent, *truncation);
                if self.prefix.is_empty() {
                    let mut acc = 0.0;
                    let mut prefix = Vec::with_capacity(truncation + 1);
                    prefix.push(0.0);
                    for j in 1..=truncation {
                        acc += (j as f64).powf(-exponent);
                        prefix.push(acc);
                    }
                    self.prefix = prefix;
                }
                let hi = truncation.min(k);
                if hi == 0 {
                    let _ = self.rng().gen::<f64>();
                    return Ok(0);
                }
                let total = self.prefix[hi];
                let u: f64 = self.rng().gen::<f64>() * total;
                // smallest j with prefix[j] > u
                let j = match self.prefix[..=hi]
                    .binary_search_by(|p| p.partial_cmp(&u).unwrap())
                {
                    Ok(idx) => idx + 1,
                    Err(idx) => idx,
                };
                Ok(j.clamp(1, hi))
            }
            DelayMode::Scripted { delays } => match delays.get(k) {
                Some(&d) => Ok(d.min(k)),
                None => Err(Error::ScheduleExhausted { k }),
            },
            DelayMode::Measured => Err(Error::Config(
                "measured schedules produce delays from worker interleaving, not next_delay".into(),
            )),
        }
    }

    /// The truncated, renormalized pmf over j = 1.. for sampling modes.
    pub fn pmf(&self) -> Option<PmfSpec> {
        match &self.mode {
            DelayMode::PowerLaw {
                exponent,
                truncation,
            } => Some(PmfSpec::PowerLaw {
                exponent: *exponent,
                truncation: *truncation,
            }),
            _ => None,
        }
    }
}

/// A pmf over delays j ≥ 1 with finite support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "pmf")]
pub enum PmfSpec {
    /// p_j ∝ j^(−exponent) for j = 1..=truncation, renormalized.
    PowerLaw { exponent: f64, truncation: usize },
    /// Explicit probabilities for j = 1..=len.
    Explicit { probs: Vec<f64> },
}

impl PmfSpec {
    /// Probabilities for j = 1..=support.
    pub fn probabilities(&self) -> Result<Vec<f64>> {
        match self {
            PmfSpec::PowerLaw {
                exponent,
                truncation,
            } => {
                if *exponent <= 4.0 {
                    return Err(Error::Config(format!(
                        "power-law exponent {exponent} ≤ 4: Σc_k summability not certified"
                    )));
                }
                let raw: Vec<f64> =
                    (1..=*truncation).map(|j| (j as f64).powf(-exponent)).collect();
                let total: f64 = raw.iter().sum();
                Ok(raw.into_iter().map(|p| p / total).collect())
            }
            PmfSpec::Explicit { probs } => {
                let total: f64 = probs.iter().sum();
                if probs.iter().any(|&p| p < 0.0) || total <= 0.0 {
                    return Err(Error::Config("explicit pmf must be nonnegative and nonzero".into()));
                }
                Ok(probs.iter().map(|p| p / total).collect())
            }
        }
    }

    /// Mean Σ j·p_j of the truncated, normalized distribution.
    pub fn mean(&self) -> Result<f64> {
        let p = self.probabilities()?;
        Ok(p.iter()
            .enumerate()
            .map(|(idx, &pj)| (idx + 1) as f64 * pj)
            .sum())
    }
}

/// How the deterministic-regime ε sequence is specified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "epsilon")]
pub enum EpsilonSpec {
    /// ε_h = ρ^h, ρ ∈ (0,1).
    Geometric { rho: f64 },
    /// ε_h = ρ^h for h ≤ t_max, 0 beyond (bounded deterministic delay).
    GeometricTruncated { rho: f64, t_max: usize },
    /// Explicit positive values; zero beyond the list.
    Explicit { values: Vec<f64> },
}

/// Precomputed series for the unbounded-delay Lyapunov machinery:
/// c_k = Σ_t t(t+k)p_(t+k), δ_i = Σ_(j≥i) ε_j, μ_d = Σ_(h<d) 1/ε_h.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SeriesTables {
    /// c_k for k = 0..=k_max.
    pub c: Vec<f64>,
    /// Per-entry truncation error bound for c_k (exact 0 for finite support).
    pub c_tail: Vec<f64>,
    /// δ_i for i = 0..
    pub delta: Vec<f64>,
    /// μ_d for d = 0..=d_max (μ_0 = 0).
    pub mu: Vec<f64>,
    /// The ε sequence the δ/μ parts were built from.
    pub epsilon: Vec<f64>,
}

/// Builds the c_k table for k = 0..=k_max by exact summation over the finite
/// support (suffix sums give c_k = S₂(k) − k·S₁(k) with
/// S_r(k) = Σ_(j>k) j^r·p_j). The stored tail bounds are zero because the
/// supported pmfs have finite support after truncation.
pub fn c_table(pmf: &PmfSpec, k_max: usize, _tail_tol: f64) -> Result<SeriesTables> {
    let p = pmf.probabilities()?;
    let support = p.len();
    let mut s1 = vec![0.0; support + 2];
    let mut s2 = vec![0.0; support + 2];
    for j in (1..=support).rev() {
        s1[j - 1] = s1[j] + j as f64 * p[j - 1];
        s2[j - 1] = s2[j] + (j as f64) * (j as f64) * p[j - 1];
    }
    let mut c = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        let v = if k >= support {
            0.0
        } else {
            s2[k] - k as f64 * s1[k]
        };
        c.push(v);
    }
    Ok(SeriesTables {
        c_tail: vec![0.0; k_max + 1],
        c,
        ..SeriesTables::default()
    })
}

/// Exact tail Σ_(k>K) c_k via the index interchange
/// Σ_(k>K) c_k = Σ_j p_j · j · (j−K−1)(j−K)/2.
pub fn c_sum_tail(pmf: &PmfSpec, cap: usize) -> Result<f64> {
    let p = pmf.probabilities()?;
    let mut tail = 0.0;
    for (idx, &pj) in p.iter().enumerate() {
        let j = idx + 1;
        if j >= cap + 2 {
            let r = (j - cap - 1) as f64;
            tail += pj * j as f64 * r * (r + 1.0) / 2.0;
        }
    }
    Ok(tail)
}

/// Builds the δ and μ tables for a given ε spec. Geometric specs use the
/// closed forms δ_i = ρ^i/(1−ρ) and μ_d = (ρ^(−d)−1)/(ρ^(−1)−1).
pub fn mu_delta_tables(eps: &EpsilonSpec, d_max: usize) -> Result<SeriesTables> {
    let mut t = SeriesTables::default();
    match eps {
        EpsilonSpec::Geometric { rho } => {
            let rho = *rho;
            if !(0.0 < rho && rho < 1.0) {
                return Err(Error::Config(format!("geometric ρ = {rho} must be in (0,1)")));
            }
            t.epsilon = (0..=d_max).map(|h| rho.powi(h as i32)).collect();
            t.delta = (0..=d_max)
                .map(|i| rho.powi(i as i32) / (1.0 - rho))
                .collect();
            let q = 1.0 / rho;
            t.mu = (0..=d_max)
                .map(|d| {
                    if d == 0 {
                        0.0
                    } else {
                        (q.powi(d as i32) - 1.0) / (q - 1.0)
                    }
                })
                .collect();
        }
        EpsilonSpec::GeometricTruncated { rho, t_max } => {
            let (rho, t_cap) = (*rho, *t_max);
            if !(0.0 < rho && rho < 1.0) {
                return Err(Error::Config(format!("geometric ρ = {rho} must be in (0,1)")));
            }
            if d_max > t_cap + 1 {
                return Err(Error::Config(format!(
                    "μ_{d_max} needs ε_{} > 0 but the sequence is truncated at {t_cap}",
                    d_max - 1
                )));
            }
            t.epsilon = (0..=t_cap).map(|h| rho.powi(h as i32)).collect();
            // δ_i = (ρ^i − ρ^(t_max+1)) / (1−ρ) for i ≤ t_max, 0 beyond
            let tail = rho.powi(t_cap as i32 + 1);
            t.delta = (0..=t_cap + 1)
                .map(|i| {
                    if i > t_cap {
                        0.0
                    } else {
                        (rho.powi(i as i32) - tail) / (1.0 - rho)
                    }
                })
                .collect();
            let mut mu = vec![0.0];
            let mut acc = 0.0;
            for d in 1..=d_max {
                acc += rho.powi(-(d as i32 - 1));
                mu.push(acc);
            }
            t.mu = mu;
        }
        EpsilonSpec::Explicit { values } => {
            if values.iter().any(|&e| e <= 0.0) {
                return Err(Error::Config("explicit ε values must be > 0".into()));
            }
            if d_max > values.len() {
                return Err(Error::Config(format!(
                    "μ_{d_max} needs {d_max} ε values, got {}",
                    values.len()
                )));
            }
            t.epsilon = values.clone();
            let len = values.len();
            let mut delta = vec![0.0; len + 1];
            for i in (0..len).rev() {
                delta[i] = delta[i + 1] + values[i];
            }
            t.delta = delta;
            let mut mu = vec![0.0];
            let mut acc = 0.0;
            for d in 1..=d_max {
                acc += 1.0 / values[d - 1];
                mu.push(acc);
            }
            t.mu = mu;
        }
    }
    Ok(t)
}

impl SeriesTables {
    /// δ_i, zero beyond the table.
    pub fn delta_at(&self, i: usize) -> f64 {
        self.delta.get(i).copied().unwrap_or(0.0)
    }

    /// c_k, zero beyond the table.
    pub fn c_at(&self, k: usize) -> f64 {
        self.c.get(k).copied().unwrap_or(0.0)
    }
}

/// One iterate difference y^(k+1) − y^k, sparse over the touched block.
#[derive(Debug, Clone)]
pub struct DiffRecord {
    pub k: usize,
    /// (coordinate, y^(k+1)_j − y^k_j) for the touched coordinates.
    pub coords: Vec<(usize, f64)>,
    pub step_sq: f64,
}

/// Ring buffer of the last H iterate differences, contiguous in k.
#[derive(Debug, Clone)]
pub struct HistoryRing {
    buf: VecDeque<DiffRecord>,
    capacity: usize,
}

impl HistoryRing {
    pub fn new(capacity: usize) -> Self {
        HistoryRing {
            buf: VecDeque::with_capacity(capacity.min(1 << 20)),
            capacity,
        }
    }

    /// Default capacity in bounded mode: 4(τ + K).
    pub fn bounded_capacity(tau: usize, cycle: usize) -> usize {
        4 * (tau + cycle).max(1)
    }

    pub fn push(&mut self, rec: DiffRecord) {
        if let Some(last) = self.buf.back() {
            debug_assert_eq!(rec.k, last.k + 1, "history records must be contiguous");
        }
        if self.buf.len() == self.capacity {
            self.buf.pop_front();
        }
        self.buf.push_back(rec);
    }

    pub fn latest_k(&self) -> Option<usize> {
        self.buf.back().map(|r| r.k)
    }

    /// The record for iteration h (the diff y^(h+1) − y^h).
    pub fn get(&self, h: usize) -> Result<&DiffRecord> {
        let front = self.buf.front().ok_or(Error::HistoryEvicted {
            requested: h,
            capacity: self.capacity,
        })?;
        if h < front.k {
            return Err(Error::HistoryEvicted {
                requested: h,
                capacity: self.capacity,
            });
        }
        self.buf.get(h - front.k).ok_or(Error::HistoryEvicted {
            requested: h,
            capacity: self.capacity,
        })
    }

    pub fn step_sq(&self, h: usize) -> Result<f64> {
        Ok(self.get(h)?.step_sq)
    }
}

/// The iterations I(k) ⊆ {k−d_k, …, k−1} whose updates are rolled back to
/// form ŷ^k.
pub fn read_set(policy: ReadPolicy, k: usize, d_k: usize) -> Vec<usize> {
    let lo = k - d_k;
    match policy {
        ReadPolicy::Consistent => (lo..k).collect(),
        ReadPolicy::Inconsistent { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (k as u64).wrapping_mul(0x9e3779b97f4a7c15));
            (lo..k).filter(|_| rng.gen::<bool>()).collect()
        }
    }
}

/// Reconstructs the delayed iterate ŷ^k = y^k − Σ_(h∈I(k)) (y^(h+1) − y^h).
/// With the consistent policy this is exactly the stored historical iterate
/// y^(k−d_k).
pub fn snapshot(
    history: &HistoryRing,
    y: &[f64],
    k: usize,
    d_k: usize,
    policy: ReadPolicy,
) -> Result<Vec<f64>> {
    let mut hat = y.to_vec();
    if d_k == 0 {
        return Ok(hat);
    }
    for h in read_set(policy, k, d_k) {
        let rec = history.get(h)?;
        for &(j, delta) in &rec.coords {
            hat[j] -= delta;
        }
    }
    Ok(hat)
}
