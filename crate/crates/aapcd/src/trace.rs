//! Per-iteration trace records and their CSV form.
//!
//! The CSV schema is fixed across all engines so diagnostics stays
//! engine-agnostic: `k,j_k,d_k,beta_k,branch,F,xi,G,step_sq,wallclock_ns`.

use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const CSV_HEADER: &str = "k,j_k,d_k,beta_k,branch,F,xi,G,step_sq,wallclock_ns";

/// Which candidate the acceptance test kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// y^(k+1) = x^(k+1) (prox candidate).
    Prox,
    /// y^(k+1) = v^k (extrapolated candidate).
    Extrapolated,
}

impl Branch {
    fn as_str(self) -> &'static str {
        match self {
            Branch::Prox => "x",
            Branch::Extrapolated => "v",
        }
    }
}

/// One iteration of any engine.
///
/// `f`, `xi`, `g` are the post-update values F(y^(k+1)), ξ_(k+1),
/// G(y^(k+1)); `step_sq` is ‖y^(k+1)−y^k‖². The `f_prox`/`f_extrap`/
/// `prox_step_sq` fields carry the candidate objectives and ‖x^(k+1)−y^k‖²
/// for in-memory diagnostics; they are not part of the CSV schema and are
/// NaN after a CSV round trip.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub k: usize,
    pub block: usize,
    pub d: usize,
    pub beta: f64,
    pub branch: Branch,
    pub f: f64,
    pub xi: f64,
    pub g: f64,
    pub step_sq: f64,
    pub wall_ns: u64,
    pub f_prox: f64,
    pub f_extrap: f64,
    pub prox_step_sq: f64,
}

impl TraceRecord {
    /// ‖x^(k+1)−y^k‖², recoverable from the CSV columns alone: the
    /// extrapolated step is (1+β_k) times the prox step on the block.
    pub fn prox_step_sq_from_csv(&self) -> f64 {
        match self.branch {
            Branch::Prox => self.step_sq,
            Branch::Extrapolated => {
                let s = 1.0 + self.beta;
                self.step_sq / (s * s)
            }
        }
    }
}

pub fn write_csv(path: &Path, records: &[TraceRecord]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{CSV_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.k,
            r.block,
            r.d,
            r.beta,
            r.branch.as_str(),
            r.f,
            r.xi,
            r.g,
            r.step_sq,
            r.wall_ns
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<TraceRecord>> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let pname = path.display().to_string();
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if lineno == 0 {
            if line.trim() != CSV_HEADER {
                return Err(Error::Parse {
                    path: pname,
                    line: 1,
                    msg: format!("unexpected header {line:?}"),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 10 {
            return Err(Error::Parse {
                path: pname,
                line: lineno + 1,
                msg: format!("expected 10 fields, got {}", fields.len()),
            });
        }
        let parse_f = |s: &str, what: &str| -> Result<f64> {
            s.parse().map_err(|e| Error::Parse {
                path: pname.clone(),
                line: lineno + 1,
                msg: format!("bad {what}: {e}"),
            })
        };
        let parse_u = |s: &str, what: &str| -> Result<usize> {
            s.parse().map_err(|e| Error::Parse {
                path: pname.clone(),
                line: lineno + 1,
                msg: format!("bad {what}: {e}"),
            })
        };
        let branch = match fields[4] {
            "x" => Branch::Prox,
            "v" => Branch::Extrapolated,
            other => {
                return Err(Error::Parse {
                    path: pname,
                    line: lineno + 1,
                    msg: format!("bad branch {other:?}"),
                })
            }
        };
        out.push(TraceRecord {
            k: parse_u(fields[0], "k")?,
            block: parse_u(fields[1], "j_k")?,
            d: parse_u(fields[2], "d_k")?,
            beta: parse_f(fields[3], "beta_k")?,
            branch,
            f: parse_f(fields[5], "F")?,
            xi: parse_f(fields[6], "xi")?,
            g: parse_f(fields[7], "G")?,
            step_sq: parse_f(fields[8], "step_sq")?,
            wall_ns: parse_f(fields[9], "wallclock_ns")? as u64,
            f_prox: f64::NAN,
            f_extrap: f64::NAN,
            prox_step_sq: f64::NAN,
        });
    }
    Ok(out)
}
