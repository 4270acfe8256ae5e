//! Instance sources: QAP text files, synthetic geometric instances, and the
//! checksummed AFF1 on-disk matrix format.

mod aff1;
mod qaplib;
mod synthetic;

pub use aff1::{read_affinity, write_affinity};
pub use qaplib::{kb_to_lawler, parse_qaplib, KbInstance};
pub use synthetic::{gen_synthetic, SyntheticInstance, SyntheticSpec};

use std::path::Path;

use crate::affinity::AffinityMatrix;
use crate::error::{Error, Result};
use crate::solution::PartialSolution;

/// A solvable problem: an affinity matrix plus whatever reference data the
/// source provides (ground-truth matching, known optimal value).
#[derive(Debug, Clone)]
pub struct Instance {
    pub name: String,
    pub affinity: AffinityMatrix,
    pub gt: Option<PartialSolution>,
    pub known_optimal: Option<f64>,
}

impl Instance {
    /// Load from a file, dispatching on extension: `.aff` is the AFF1 format,
    /// `.dat` a QAP flow/distance file. For `.dat`, a sidecar `<stem>.opt`
    /// holding one number is read as the known optimal value when present.
    pub fn load(path: &Path) -> Result<Instance> {
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("instance")
            .to_string();
        match path.extension().and_then(|e| e.to_str()) {
            Some("aff") => {
                let (affinity, gt) = read_affinity(path)?;
                Ok(Instance {
                    name,
                    affinity,
                    gt,
                    known_optimal: None,
                })
            }
            Some("dat") => {
                let text = std::fs::read_to_string(path)?;
                let mut kb = parse_qaplib(&text, &name)?;
                let opt_path = path.with_extension("opt");
                if opt_path.is_file() {
                    let raw = std::fs::read_to_string(&opt_path)?;
                    let value: f64 = raw.trim().parse().map_err(|_| {
                        Error::Parse {
                            offset: 0,
                            msg: format!("sidecar {} is not a number", opt_path.display()),
                        }
                    })?;
                    kb.known_optimal = Some(value);
                }
                Ok(kb_to_lawler(&kb)?)
            }
            other => Err(Error::Config(format!(
                "unrecognized instance extension {other:?} for {}",
                path.display()
            ))),
        }
    }
}
