//! JSON walk descriptions.
//!
//! ```json
//! {
//!   "num_nodes": 2,
//!   "coin_dim": 2,
//!   "operators": [
//!     { "from": 0, "to": 0, "matrix": [[0,0],[1,0],[1,0],[0,0]] }
//!   ],
//!   "initial": {
//!     "density":     [ { "block": [0, 0], "matrix": [...] } ],
//!     "augmented":   [ { "pair":  [0, 1], "matrix": [...] } ],
//!     "node_vector": [[0.7071, 0], [0.7071, 0]]
//!   }
//! }
//! ```
//!
//! Matrices are flat row-major lists of `[re, im]` pairs. Nodes are
//! zero-based. `initial` and each of its fields are optional; `augmented` and
//! `node_vector` (which is mapped through `A`) are mutually exclusive.

use std::fs;
use std::path::Path;

use log::warn;
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::CMat;
use crate::oqw::{DensityOperator, KrausFamily, OqwError};
use crate::quantizer::{AugmentedState, QuantizedWalk, QuantizerError};
use crate::szegedy::{StochasticMatrix, SzegedyError};

/// Initial states within this distance of unit norm are renormalized with a warning.
pub const RENORMALIZE_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid walk description: {0}")]
    Invalid(String),
    #[error(transparent)]
    Oqw(#[from] OqwError),
    #[error(transparent)]
    Quantizer(#[from] QuantizerError),
    #[error(transparent)]
    Szegedy(#[from] SzegedyError),
}

/// Complex entry as `[re, im]`.
pub type ComplexPair = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorEntry {
    pub from: usize,
    pub to: usize,
    pub matrix: Vec<ComplexPair>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockEntry {
    pub block: [usize; 2],
    pub matrix: Vec<ComplexPair>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlotEntry {
    pub pair: [usize; 2],
    pub matrix: Vec<ComplexPair>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<Vec<BlockEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub augmented: Option<Vec<SlotEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_vector: Option<Vec<ComplexPair>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkSpec {
    pub num_nodes: usize,
    pub coin_dim: usize,
    pub operators: Vec<OperatorEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialState>,
}

pub fn matrix_from_pairs(n: usize, entries: &[ComplexPair]) -> Result<CMat, SpecError> {
    if entries.len() != n * n {
        return Err(SpecError::Invalid(format!(
            "matrix has {} entries, expected {}",
            entries.len(),
            n * n
        )));
    }
    if entries.iter().flatten().any(|x| !x.is_finite()) {
        return Err(SpecError::Invalid("matrix has non-finite entries".into()));
    }
    Ok(CMat::from_row_iterator(
        n,
        n,
        entries.iter().map(|&[re, im]| C64::new(re, im)),
    ))
}

pub fn matrix_to_pairs(m: &CMat) -> Vec<ComplexPair> {
    let mut out = Vec::with_capacity(m.len());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            let z = m[(r, c)];
            out.push([z.re, z.im]);
        }
    }
    out
}

fn read(path: &Path) -> Result<String, SpecError> {
    fs::read_to_string(path).map_err(|source| SpecError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn renormalize(norm: f64, what: &str) -> Result<f64, SpecError> {
    if (norm - 1.0).abs() > RENORMALIZE_TOL {
        return Err(SpecError::Invalid(format!(
            "{what} has norm/trace {norm}, expected 1"
        )));
    }
    if (norm - 1.0).abs() > 1e-12 {
        warn!("{what} has norm/trace {norm}; renormalizing");
    }
    Ok(norm)
}

impl WalkSpec {
    pub fn load(path: &Path) -> Result<Self, SpecError> {
        Self::from_json(&read(path)?)
    }

    pub fn from_json(text: &str) -> Result<Self, SpecError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("walk specs always serialize")
    }

    pub fn from_family(family: &KrausFamily) -> Self {
        Self {
            num_nodes: family.num_nodes(),
            coin_dim: family.coin_dim(),
            operators: family
                .edges()
                .map(|((from, to), op)| OperatorEntry {
                    from,
                    to,
                    matrix: matrix_to_pairs(op),
                })
                .collect(),
            initial: None,
        }
    }

    /// The Kraus family, with shapes checked but completeness not yet enforced.
    pub fn kraus_family(&self) -> Result<KrausFamily, SpecError> {
        let ops = self
            .operators
            .iter()
            .map(|e| Ok(((e.from, e.to), matrix_from_pairs(self.coin_dim, &e.matrix)?)))
            .collect::<Result<Vec<_>, SpecError>>()?;
        Ok(KrausFamily::new(self.num_nodes, self.coin_dim, ops)?)
    }

    /// Initial density operator, if one is given; trace renormalized to one.
    pub fn initial_density(&self) -> Result<Option<DensityOperator>, SpecError> {
        let Some(blocks) = self.initial.as_ref().and_then(|i| i.density.as_ref()) else {
            return Ok(None);
        };
        let parsed = blocks
            .iter()
            .map(|b| {
                Ok((
                    (b.block[0], b.block[1]),
                    matrix_from_pairs(self.coin_dim, &b.matrix)?,
                ))
            })
            .collect::<Result<Vec<_>, SpecError>>()?;
        let rho = DensityOperator::new(self.num_nodes, self.coin_dim, parsed.clone())?;
        let trace = rho.trace();
        if trace.im.abs() > RENORMALIZE_TOL {
            return Err(SpecError::Invalid(format!(
                "initial density has trace {trace}"
            )));
        }
        let scale = renormalize(trace.re, "initial density")?;
        let rho = DensityOperator::new(
            self.num_nodes,
            self.coin_dim,
            parsed.into_iter().map(|(k, m)| (k, m / C64::from(scale))),
        )?;
        rho.validate()?;
        Ok(Some(rho))
    }

    /// Initial augmented state, from explicit slots or from a node vector
    /// mapped through `A`; norm renormalized to one.
    pub fn initial_augmented(
        &self,
        walk: &QuantizedWalk,
    ) -> Result<Option<AugmentedState>, SpecError> {
        let Some(initial) = self.initial.as_ref() else {
            return Ok(None);
        };
        let mut state = match (&initial.augmented, &initial.node_vector) {
            (Some(_), Some(_)) => {
                return Err(SpecError::Invalid(
                    "give either `augmented` or `node_vector`, not both".into(),
                ))
            }
            (Some(slots), None) => {
                let parsed = slots
                    .iter()
                    .map(|s| {
                        Ok((
                            (s.pair[0], s.pair[1]),
                            matrix_from_pairs(self.coin_dim, &s.matrix)?,
                        ))
                    })
                    .collect::<Result<Vec<_>, SpecError>>()?;
                AugmentedState::from_slots(self.num_nodes, self.coin_dim, parsed)?
            }
            (None, Some(v)) => {
                let coeffs: Vec<C64> = v.iter().map(|&[re, im]| C64::new(re, im)).collect();
                walk.apply_a(&coeffs)?
            }
            (None, None) => return Ok(None),
        };
        renormalize(state.norm(), "initial augmented state")?;
        state.normalize();
        Ok(Some(state))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum StochasticFile {
    Wrapped { matrix: Vec<Vec<f64>> },
    Bare(Vec<Vec<f64>>),
}

/// Read a transition matrix given as rows `[[p_00, p_01, …], …]`, either bare
/// or under a `"matrix"` key. Columns must sum to one unless
/// `row_stochastic` asks for a transpose first.
pub fn load_stochastic(path: &Path, row_stochastic: bool) -> Result<StochasticMatrix, SpecError> {
    parse_stochastic(&read(path)?, row_stochastic)
}

pub fn parse_stochastic(text: &str, row_stochastic: bool) -> Result<StochasticMatrix, SpecError> {
    let rows = match serde_json::from_str::<StochasticFile>(text)? {
        StochasticFile::Wrapped { matrix } | StochasticFile::Bare(matrix) => matrix,
    };
    let size = rows.len();
    if rows.iter().any(|r| r.len() != size) {
        return Err(SpecError::Invalid("transition matrix is not square".into()));
    }
    let m = DMatrix::from_fn(size, size, |r, c| rows[r][c]);
    Ok(if row_stochastic {
        StochasticMatrix::from_row_stochastic(m)?
    } else {
        StochasticMatrix::new(m)?
    })
}
