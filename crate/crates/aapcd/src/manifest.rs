//! Run manifests: the fully resolved configuration written alongside every
//! output so a simulated run can be replayed bit-exactly.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::baselines::BaselineConfig;
use crate::delays::DelayMode;
use crate::model::{LossKind, Regularizer};
use crate::solver::SolverConfig;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    SimulatedStochastic,
    SimulatedDeterministic,
    Async,
    Ascd,
    Dspg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemManifest {
    pub loss: LossKind,
    pub reg: Regularizer,
    pub n: usize,
    pub m: usize,
    pub lipschitz: f64,
    /// SHA-256 over shape, sparsity structure, values, and labels.
    pub dataset_hash: String,
    /// Path or synthetic-generator description.
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub created_unix_s: u64,
    pub engine: EngineKind,
    pub workers: usize,
    pub problem: ProblemManifest,
    pub solver: SolverConfig,
    pub delay_mode: DelayMode,
    pub delay_seed: u64,
    pub baseline: Option<BaselineConfig>,
}

impl RunManifest {
    pub fn now(
        engine: EngineKind,
        workers: usize,
        problem: ProblemManifest,
        solver: SolverConfig,
        delay_mode: DelayMode,
        delay_seed: u64,
    ) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            created_unix_s: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            engine,
            workers,
            problem,
            solver,
            delay_mode,
            delay_seed,
            baseline: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Conventional sibling path: `<output>.manifest.json`.
    pub fn sibling_path(output: &Path) -> std::path::PathBuf {
        let mut os = output.as_os_str().to_owned();
        os.push(".manifest.json");
        std::path::PathBuf::from(os)
    }
}
