//! The composite objective `F(x) = f(x) + g(x)`: sparse datasets, loss
//! functions and their block gradients, separable regularizers, and
//! Lipschitz-constant estimation.

use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Exponent clamp for the saturated exponentials inside the losses.
const EXP_CLAMP: f64 = 40.0;

/// Full residual recompute after this many incremental coordinate updates.
pub const RESIDUAL_REBUILD_PERIOD: u64 = 10_000;

/// Global bound on |d²/dz² 1/(1+e^z)|, attained at z = ln(2 ± √3).
pub const SIGMOID_CURVATURE_BOUND: f64 = 0.09622504486493763; // 1/(6·√3)

/// Sparse design matrix in compressed-row layout plus ±1 labels.
///
/// A column-compressed mirror is built at construction so that single-column
/// operations (residual updates, block gradients) cost O(nnz(column)).
#[derive(Debug, Clone)]
pub struct Dataset {
    n: usize,
    m: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    row_val: Vec<f64>,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    col_val: Vec<f64>,
    labels: Vec<f64>,
}

impl Dataset {
    /// Builds a dataset from per-row `(column, value)` lists.
    pub fn from_rows(m: usize, rows: Vec<Vec<(usize, f64)>>, labels: Vec<f64>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: rows.len(),
                got: labels.len(),
            });
        }
        for &b in &labels {
            if b != 1.0 && b != -1.0 {
                return Err(Error::DegenerateData(format!("label {b} is not ±1")));
            }
        }
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut row_val = Vec::new();
        row_ptr.push(0);
        for (i, row) in rows.iter().enumerate() {
            let mut seen = vec![];
            for &(j, v) in row {
                if j >= m {
                    return Err(Error::IndexOutOfRange { index: j, m });
                }
                if seen.contains(&j) {
                    return Err(Error::DegenerateData(format!(
                        "duplicate column {j} in row {i}"
                    )));
                }
                seen.push(j);
                col_idx.push(j);
                row_val.push(v);
            }
            row_ptr.push(col_idx.len());
        }

        // column-compressed mirror
        let mut counts = vec![0usize; m + 1];
        for &j in &col_idx {
            counts[j + 1] += 1;
        }
        for j in 0..m {
            counts[j + 1] += counts[j];
        }
        let col_ptr = counts.clone();
        let mut cursor = counts;
        let mut row_idx = vec![0usize; col_idx.len()];
        let mut col_val = vec![0f64; col_idx.len()];
        for i in 0..n {
            for p in row_ptr[i]..row_ptr[i + 1] {
                let j = col_idx[p];
                row_idx[cursor[j]] = i;
                col_val[cursor[j]] = row_val[p];
                cursor[j] += 1;
            }
        }

        Ok(Dataset {
            n,
            m,
            row_ptr,
            col_idx,
            row_val,
            col_ptr,
            row_idx,
            col_val,
            labels,
        })
    }

    /// The n×n identity design with all labels +1.
    pub fn identity(n: usize) -> Self {
        let rows = (0..n).map(|i| vec![(i, 1.0)]).collect();
        Dataset::from_rows(n, rows, vec![1.0; n]).unwrap()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    /// Entries of column `j` as `(row, value)` pairs.
    pub fn column(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.col_ptr[j];
        let hi = self.col_ptr[j + 1];
        self.row_idx[lo..hi]
            .iter()
            .zip(&self.col_val[lo..hi])
            .map(|(&i, &v)| (i, v))
    }

    /// Entries of row `i` as `(column, value)` pairs.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        self.col_idx[lo..hi]
            .iter()
            .zip(&self.row_val[lo..hi])
            .map(|(&j, &v)| (j, v))
    }

    /// z = A·x into `out`.
    pub fn matvec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.m);
        debug_assert_eq!(out.len(), self.n);
        for i in 0..self.n {
            let mut acc = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.row_val[p] * x[self.col_idx[p]];
            }
            out[i] = acc;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; self.n];
        self.matvec_into(x, &mut z);
        z
    }

    /// w = Aᵀ·u.
    pub fn matvec_t(&self, u: &[f64]) -> Vec<f64> {
        debug_assert_eq!(u.len(), self.n);
        let mut w = vec![0.0; self.m];
        for i in 0..self.n {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                w[self.col_idx[p]] += self.row_val[p] * u[i];
            }
        }
        w
    }

    /// Content hash of the dataset (shape, structure, values, labels).
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(self.n.to_le_bytes());
        h.update(self.m.to_le_bytes());
        for &p in &self.row_ptr {
            h.update(p.to_le_bytes());
        }
        for &j in &self.col_idx {
            h.update(j.to_le_bytes());
        }
        for &v in &self.row_val {
            h.update(v.to_le_bytes());
        }
        for &b in &self.labels {
            h.update(b.to_le_bytes());
        }
        format!("{:x}", h.finalize())
    }
}

/// Loads a libsvm-format text file: `label idx:val idx:val …` with 1-based
/// indices. Labels are coerced to ±1 (> 0 maps to +1, everything else to −1).
pub fn load_libsvm(path: &std::path::Path, m_hint: Option<usize>) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    let pname = path.display().to_string();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut max_col = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let label: f64 = parts
            .next()
            .unwrap()
            .parse()
            .map_err(|e| Error::Parse {
                path: pname.clone(),
                line: lineno + 1,
                msg: format!("bad label: {e}"),
            })?;
        labels.push(if label > 0.0 { 1.0 } else { -1.0 });
        let mut row = Vec::new();
        for tok in parts {
            let (idx, val) = tok.split_once(':').ok_or_else(|| Error::Parse {
                path: pname.clone(),
                line: lineno + 1,
                msg: format!("expected idx:val, got {tok:?}"),
            })?;
            let idx: usize = idx.parse().map_err(|e| Error::Parse {
                path: pname.clone(),
                line: lineno + 1,
                msg: format!("bad index: {e}"),
            })?;
            let val: f64 = val.parse().map_err(|e| Error::Parse {
                path: pname.clone(),
                line: lineno + 1,
                msg: format!("bad value: {e}"),
            })?;
            if idx == 0 {
                return Err(Error::Parse {
                    path: pname.clone(),
                    line: lineno + 1,
                    msg: "libsvm indices are 1-based".into(),
                });
            }
            max_col = max_col.max(idx);
            row.push((idx - 1, val));
        }
        rows.push(row);
    }
    let m = m_hint.unwrap_or(max_col).max(max_col);
    Dataset::from_rows(m, rows, labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// (1/n) Σ ln(1 + exp(−bᵢ aᵢᵀx))
    Logistic,
    /// (1/n) Σ 1/(1 + exp(bᵢ aᵢᵀx))
    Sigmoid,
    /// ½ ‖Ax − b‖²
    Quadratic,
}

/// Separable regularizer g(x) = Σⱼ gⱼ(xⱼ).
///
/// `BlockNorm` is the separable per-coordinate norm λΣ|xⱼ|; for scalar
/// coordinates it coincides with L1 and shares its proximal operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Regularizer {
    None,
    L1 { lambda: f64 },
    CappedL1 { lambda: f64, theta_cap: f64 },
    BlockNorm { lambda: f64 },
}

impl Regularizer {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Regularizer::None => true,
            Regularizer::L1 { lambda } | Regularizer::BlockNorm { lambda } => lambda >= 0.0,
            Regularizer::CappedL1 { lambda, theta_cap } => lambda >= 0.0 && theta_cap > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid regularizer {self:?}")))
        }
    }

    /// gⱼ(x) for a single coordinate.
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            Regularizer::None => 0.0,
            Regularizer::L1 { lambda } | Regularizer::BlockNorm { lambda } => lambda * x.abs(),
            Regularizer::CappedL1 { lambda, theta_cap } => lambda * x.abs().min(theta_cap),
        }
    }
}

/// The composite problem: loss kind, regularizer, dataset, and the cached
/// gradient Lipschitz constant of `f`.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub loss: LossKind,
    pub reg: Regularizer,
    pub data: Arc<Dataset>,
    l: f64,
}

impl ProblemSpec {
    /// Builds the problem, estimating L by power iteration.
    pub fn new(loss: LossKind, reg: Regularizer, data: Arc<Dataset>) -> Result<Self> {
        reg.validate()?;
        let l = lipschitz_estimate(&data, loss, 1e-10, 10_000)?;
        Ok(ProblemSpec { loss, reg, data, l })
    }

    /// Builds the problem with a caller-supplied Lipschitz constant.
    pub fn with_lipschitz(
        loss: LossKind,
        reg: Regularizer,
        data: Arc<Dataset>,
        l: f64,
    ) -> Result<Self> {
        reg.validate()?;
        if l <= 0.0 {
            return Err(Error::Config(format!("Lipschitz constant {l} must be > 0")));
        }
        Ok(ProblemSpec { loss, reg, data, l })
    }

    pub fn m(&self) -> usize {
        self.data.m()
    }

    pub fn lipschitz(&self) -> f64 {
        self.l
    }

    /// Per-sample loss term as a function of zᵢ = aᵢᵀx.
    fn loss_term(&self, z: f64, b: f64) -> f64 {
        match self.loss {
            LossKind::Logistic => {
                let u = (-b * z).clamp(-EXP_CLAMP, EXP_CLAMP);
                if u > 0.0 {
                    // ln(1+e^u) = u + ln(1+e^-u)
                    u + (-u).exp().ln_1p()
                } else {
                    u.exp().ln_1p()
                }
            }
            LossKind::Sigmoid => sigmoid((-b * z).clamp(-EXP_CLAMP, EXP_CLAMP)),
            LossKind::Quadratic => 0.5 * (z - b) * (z - b),
        }
    }

    /// d/dzᵢ of the per-sample loss term (without the 1/n factor).
    fn loss_term_deriv(&self, z: f64, b: f64) -> f64 {
        match self.loss {
            LossKind::Logistic => {
                let u = (-b * z).clamp(-EXP_CLAMP, EXP_CLAMP);
                -b * sigmoid(u)
            }
            LossKind::Sigmoid => {
                let u = (-b * z).clamp(-EXP_CLAMP, EXP_CLAMP);
                let s = sigmoid(u);
                -b * s * (1.0 - s)
            }
            LossKind::Quadratic => z - b,
        }
    }

    fn sample_scale(&self) -> f64 {
        match self.loss {
            LossKind::Logistic | LossKind::Sigmoid => 1.0 / self.data.n() as f64,
            LossKind::Quadratic => 1.0,
        }
    }

    /// f(x) evaluated from a residual vector z = A·x.
    pub fn smooth_from_residual(&self, z: &[f64]) -> f64 {
        let b = self.data.labels();
        let mut acc = 0.0;
        for i in 0..self.data.n() {
            acc += self.loss_term(z[i], b[i]);
        }
        acc * self.sample_scale()
    }

    /// g(x) = Σⱼ gⱼ(xⱼ).
    pub fn reg_value(&self, x: &[f64]) -> f64 {
        x.iter().map(|&v| self.reg.value(v)).sum()
    }

    /// F(x) = f(x) + g(x). With a cache the smooth part is O(n) instead of
    /// O(nnz).
    pub fn full_objective(&self, x: &[f64], cache: Option<&ResidualCache>) -> Result<f64> {
        if x.len() != self.data.m() {
            return Err(Error::DimensionMismatch {
                expected: self.data.m(),
                got: x.len(),
            });
        }
        let f = match cache {
            Some(c) => self.smooth_from_residual(&c.z),
            None => self.smooth_from_residual(&self.data.matvec(x)),
        };
        Ok(f + self.reg_value(x))
    }

    /// ∇ⱼf for a single coordinate, from a residual vector.
    pub fn coord_gradient_from_residual(&self, z: &[f64], j: usize) -> f64 {
        let b = self.data.labels();
        let mut acc = 0.0;
        for (i, v) in self.data.column(j) {
            acc += self.loss_term_deriv(z[i], b[i]) * v;
        }
        acc * self.sample_scale()
    }

    /// ∇ⱼf(x) for j in `block` only; g is never differentiated.
    pub fn block_gradient(
        &self,
        x: &[f64],
        block: &[usize],
        cache: Option<&ResidualCache>,
    ) -> Result<Vec<f64>> {
        if x.len() != self.data.m() {
            return Err(Error::DimensionMismatch {
                expected: self.data.m(),
                got: x.len(),
            });
        }
        if block.is_empty() {
            return Err(Error::Config("empty block".into()));
        }
        for &j in block {
            if j >= self.data.m() {
                return Err(Error::IndexOutOfRange {
                    index: j,
                    m: self.data.m(),
                });
            }
        }
        let owned;
        let z = match cache {
            Some(c) => &c.z,
            None => {
                owned = self.data.matvec(x);
                &owned
            }
        };
        Ok(block
            .iter()
            .map(|&j| self.coord_gradient_from_residual(z, j))
            .collect())
    }

    /// Full gradient ∇f(x).
    pub fn full_gradient(&self, x: &[f64]) -> Vec<f64> {
        let z = self.data.matvec(x);
        let b = self.data.labels();
        let scale = self.sample_scale();
        let w: Vec<f64> = (0..self.data.n())
            .map(|i| self.loss_term_deriv(z[i], b[i]) * scale)
            .collect();
        self.data.matvec_t(&w)
    }

    /// Stochastic gradient from the sample rows in `batch`, scaled by
    /// 1/|batch| (quadratic loss keeps its unnormalized n/|batch| scaling so
    /// the full batch reduces to the exact gradient).
    pub fn minibatch_gradient(&self, x: &[f64], batch: &[usize]) -> Result<Vec<f64>> {
        if batch.is_empty() {
            return Err(Error::Config("empty mini-batch".into()));
        }
        let z = self.data.matvec(x);
        let b = self.data.labels();
        let scale = self.sample_scale() * self.data.n() as f64 / batch.len() as f64;
        let mut g = vec![0.0; self.data.m()];
        for &i in batch {
            if i >= self.data.n() {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    m: self.data.n(),
                });
            }
            let d = self.loss_term_deriv(z[i], b[i]) * scale;
            for (j, v) in self.data.row(i) {
                g[j] += d * v;
            }
        }
        Ok(g)
    }
}

fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// Residual vector z = A·x, kept consistent across coordinate updates.
#[derive(Debug, Clone)]
pub struct ResidualCache {
    pub z: Vec<f64>,
    updates_since_rebuild: u64,
}

impl ResidualCache {
    pub fn new(data: &Dataset, x: &[f64]) -> Self {
        ResidualCache {
            z: data.matvec(x),
            updates_since_rebuild: 0,
        }
    }

    /// z ← z + delta · (column j of A).
    pub fn update(&mut self, data: &Dataset, j: usize, delta: f64) -> Result<()> {
        if j >= data.m() {
            return Err(Error::IndexOutOfRange { index: j, m: data.m() });
        }
        if delta != 0.0 {
            for (i, v) in data.column(j) {
                self.z[i] += delta * v;
            }
        }
        self.updates_since_rebuild += 1;
        Ok(())
    }

    /// True when the drift policy calls for a full recompute.
    pub fn rebuild_due(&self) -> bool {
        self.updates_since_rebuild >= RESIDUAL_REBUILD_PERIOD
    }

    pub fn rebuild(&mut self, data: &Dataset, x: &[f64]) {
        data.matvec_into(x, &mut self.z);
        self.updates_since_rebuild = 0;
    }
}

/// Estimates the gradient Lipschitz constant of `f` via power iteration on
/// AᵀA:
/// logistic → σ²ₘₐₓ/(4n), sigmoid → σ²ₘₐₓ/(6√3·n), quadratic → σ²ₘₐₓ.
///
/// The sigmoid factor is the analytic maximum of the sigmoid second
/// derivative ([`SIGMOID_CURVATURE_BOUND`]); the resulting bound is
/// conservative and can be overridden via [`ProblemSpec::with_lipschitz`].
pub fn lipschitz_estimate(
    data: &Dataset,
    loss: LossKind,
    tolerance: f64,
    max_iters: usize,
) -> Result<f64> {
    let sigma_sq = spectral_norm_sq(data, tolerance, max_iters)?;
    let n = data.n() as f64;
    Ok(match loss {
        LossKind::Logistic => sigma_sq / (4.0 * n),
        LossKind::Sigmoid => SIGMOID_CURVATURE_BOUND * sigma_sq / n,
        LossKind::Quadratic => sigma_sq,
    })
}

/// σ²ₘₐₓ(A) by power iteration on AᵀA with a seeded start vector.
pub fn spectral_norm_sq(data: &Dataset, tolerance: f64, max_iters: usize) -> Result<f64> {
    if data.n() == 0 || data.m() == 0 || data.nnz() == 0 {
        return Err(Error::DegenerateData(
            "σ_max = 0, Lipschitz constant undefined".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v: Vec<f64> = (0..data.m()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let norm = |u: &[f64]| u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = norm(&v);
    if nv == 0.0 {
        return Err(Error::DegenerateData("zero start vector".into()));
    }
    v.iter_mut().for_each(|a| *a /= nv);

    let mut lambda = 0.0f64;
    for _ in 0..max_iters {
        let w = data.matvec(&v);
        let u = data.matvec_t(&w);
        let nu = norm(&u);
        if nu == 0.0 {
            return Err(Error::DegenerateData(
                "σ_max = 0, Lipschitz constant undefined".into(),
            ));
        }
        // Rayleigh quotient vᵀAᵀAv = ‖Av‖² for the normalized v.
        let new_lambda = w.iter().map(|a| a * a).sum::<f64>();
        v = u;
        v.iter_mut().for_each(|a| *a /= nu);
        if (new_lambda - lambda).abs() <= tolerance * new_lambda.max(1e-300) {
            return Ok(new_lambda);
        }
        lambda = new_lambda;
    }
    Err(Error::PowerIterationDiverged { max_iters })
}

/// Synthetic problem generators used by the CLI and the test suite.
pub mod synth {
    use super::*;

    /// Random sparse classification data: entries N(0,1)·scale, labels from a
    /// planted hyperplane with sign noise.
    pub fn classification(
        n: usize,
        m: usize,
        density: f64,
        scale: f64,
        seed: u64,
    ) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let planted: Vec<f64> = (0..m).map(|_| gauss(&mut rng)).collect();
        let mut rows = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let mut row = Vec::new();
            let mut dot = 0.0;
            for j in 0..m {
                if rng.gen::<f64>() < density {
                    let v = gauss(&mut rng) * scale;
                    dot += v * planted[j];
                    row.push((j, v));
                }
            }
            if row.is_empty() {
                let j = rng.gen_range(0..m);
                let v = gauss(&mut rng) * scale;
                dot += v * planted[j];
                row.push((j, v));
            }
            let noisy = dot + 0.1 * gauss(&mut rng);
            labels.push(if noisy > 0.0 { 1.0 } else { -1.0 });
            rows.push(row);
        }
        Dataset::from_rows(m, rows, labels).unwrap()
    }

    /// Classification data with a shared latent component across features;
    /// the column correlation makes stale gradients noticeably wrong, which
    /// stresses the delay machinery.
    pub fn correlated_classification(
        n: usize,
        m: usize,
        mixing: f64,
        scale: f64,
        seed: u64,
    ) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let common = gauss(&mut rng);
            let mut row = Vec::with_capacity(m);
            let mut dot = 0.0;
            for j in 0..m {
                let v = (mixing * common + (1.0 - mixing) * gauss(&mut rng)) * scale;
                dot += v;
                row.push((j, v));
            }
            labels.push(if dot + 0.1 * gauss(&mut rng) > 0.0 { 1.0 } else { -1.0 });
            rows.push(row);
        }
        Dataset::from_rows(m, rows, labels).unwrap()
    }

    /// Dense gaussian design with ±1 targets, for quadratic-loss (lasso)
    /// instances.
    pub fn regression(n: usize, m: usize, scale: f64, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let row: Vec<(usize, f64)> =
                (0..m).map(|j| (j, gauss(&mut rng) * scale)).collect();
            labels.push(if rng.gen::<bool>() { 1.0 } else { -1.0 });
            rows.push(row);
        }
        Dataset::from_rows(m, rows, labels).unwrap()
    }

    fn gauss(rng: &mut ChaCha8Rng) -> f64 {
        // Box-Muller
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}
