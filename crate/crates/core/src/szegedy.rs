//! Szegedy's walk as a special case of the quantized open walk.
//!
//! A column-stochastic `P` with any unitary coins `U_j^k` yields the Kraus
//! family `B_j^k = √p_kj · U_j^k`. On the slice `span{I_n} ⊗ H_V ⊗ H_V` the
//! quantized walk then coincides with Szegedy's walk on `H_V ⊗ H_V`, under the
//! norm-preserving identification `|j,k⟩ ↔ n^{-1/2} I_n @ (j,k)`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::Rng;
use thiserror::Error;

use crate::numerics::{self, CMat};
use crate::oqw::{KrausFamily, OqwError};
use crate::quantizer::{AugmentedState, QuantizedWalk, QuantizerError};
use crate::random;

/// Column-sum tolerance.
pub const STOCHASTIC_TOL: f64 = 1e-9;

/// Unitarity tolerance for coin operators.
pub const UNITARY_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SzegedyError {
    #[error("matrix is not column-stochastic: {0}")]
    NonStochastic(String),
    #[error("coin on edge {from}→{to} is not unitary (‖U†U − I‖_F = {residual:e})")]
    NonUnitaryCoin {
        from: usize,
        to: usize,
        residual: f64,
    },
    #[error("index ({0}, {1}) out of range")]
    IndexOutOfRange(usize, usize),
    #[error(transparent)]
    Oqw(#[from] OqwError),
    #[error(transparent)]
    Quantizer(#[from] QuantizerError),
}

/// Transition matrix with `p_kj` = probability of moving to `k` from `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix {
    entries: DMatrix<f64>,
}

impl StochasticMatrix {
    /// Accept a column-stochastic matrix.
    pub fn new(entries: DMatrix<f64>) -> Result<Self, SzegedyError> {
        if entries.nrows() != entries.ncols() || entries.nrows() == 0 {
            return Err(SzegedyError::NonStochastic(format!(
                "shape {:?} is not a nonempty square",
                entries.shape()
            )));
        }
        for ((k, j), &p) in entries
            .iter()
            .enumerate()
            .map(|(idx, p)| ((idx % entries.nrows(), idx / entries.nrows()), p))
        {
            if !(0.0..=1.0 + 1e-12).contains(&p) {
                return Err(SzegedyError::NonStochastic(format!(
                    "entry p[{k}][{j}] = {p} is outside [0, 1]"
                )));
            }
        }
        for (j, col) in entries.column_iter().enumerate() {
            let sum = col.sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(SzegedyError::NonStochastic(format!(
                    "column {j} sums to {sum}"
                )));
            }
        }
        Ok(Self { entries })
    }

    /// Accept a row-stochastic matrix by transposing it.
    pub fn from_row_stochastic(entries: DMatrix<f64>) -> Result<Self, SzegedyError> {
        Self::new(entries.transpose())
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, SzegedyError> {
        let size = rows.len();
        if rows.iter().any(|r| r.len() != size) {
            return Err(SzegedyError::NonStochastic(
                "rows have unequal lengths".into(),
            ));
        }
        Self::new(DMatrix::from_fn(size, size, |k, j| rows[k][j]))
    }

    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    /// `p_kj`: probability of `j → k`.
    pub fn prob(&self, to: usize, from: usize) -> f64 {
        self.entries[(to, from)]
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }
}

/// Unitary coins `U_j^k` per edge; unlisted edges use the identity.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CoinUnitaryFamily {
    coins: BTreeMap<(usize, usize), CMat>,
}

impl CoinUnitaryFamily {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn new(coins: BTreeMap<(usize, usize), CMat>) -> Result<Self, SzegedyError> {
        for (&(from, to), u) in &coins {
            let n = u.nrows();
            let residual = if u.ncols() == n {
                numerics::frobenius(&(u.adjoint() * u - numerics::identity(n)))
            } else {
                f64::INFINITY
            };
            if !(residual < UNITARY_TOL) {
                return Err(SzegedyError::NonUnitaryCoin { from, to, residual });
            }
        }
        Ok(Self { coins })
    }

    /// Independent Haar-like coins on every ordered pair of `size` nodes.
    pub fn random<R: Rng + ?Sized>(size: usize, coin_dim: usize, rng: &mut R) -> Self {
        let mut coins = BTreeMap::new();
        for j in 0..size {
            for k in 0..size {
                coins.insert((j, k), random::random_unitary(coin_dim, rng));
            }
        }
        Self { coins }
    }

    pub fn coin(&self, from: usize, to: usize, coin_dim: usize) -> CMat {
        self.coins
            .get(&(from, to))
            .cloned()
            .unwrap_or_else(|| numerics::identity(coin_dim))
    }
}

/// `B_j^k = √p_kj · U_j^k` on every edge with `p_kj > 0`.
pub fn from_stochastic(
    p: &StochasticMatrix,
    coins: &CoinUnitaryFamily,
    coin_dim: usize,
) -> Result<KrausFamily, SzegedyError> {
    for (&(from, to), u) in &coins.coins {
        if u.shape() != (coin_dim, coin_dim) {
            return Err(OqwError::ShapeMismatch(format!(
                "coin on edge {from}→{to} is {:?}, expected {coin_dim}×{coin_dim}",
                u.shape()
            ))
            .into());
        }
    }
    let size = p.size();
    let mut edges = Vec::new();
    for j in 0..size {
        for k in 0..size {
            let prob = p.prob(k, j);
            if prob > 0.0 {
                edges.push(((j, k), coins.coin(j, k, coin_dim) * C64::from(prob.sqrt())));
            }
        }
    }
    Ok(KrausFamily::validated(size, coin_dim, edges)?)
}

/// Szegedy's step on `|j0, k0⟩`, as coefficients over `|a, b⟩` at index `a·N + b`:
/// `2√p_{k0 j0} Σ_k √p_{k j0} |k, j0⟩ − |k0, j0⟩`.
pub fn szegedy_step_reference(
    p: &StochasticMatrix,
    j0: usize,
    k0: usize,
) -> Result<DVector<f64>, SzegedyError> {
    let size = p.size();
    if j0 >= size || k0 >= size {
        return Err(SzegedyError::IndexOutOfRange(j0, k0));
    }
    let mut out = DVector::zeros(size * size);
    let lead = 2.0 * p.prob(k0, j0).sqrt();
    for k in 0..size {
        out[k * size + j0] += lead * p.prob(k, j0).sqrt();
    }
    out[k0 * size + j0] -= 1.0;
    Ok(out)
}

/// `n^{-1/2} I_n` placed according to a pair-basis vector.
pub fn identity_slice_state(
    coefficients: &DVector<f64>,
    size: usize,
    coin_dim: usize,
) -> AugmentedState {
    let unit = numerics::identity(coin_dim) * C64::from(1.0 / (coin_dim as f64).sqrt());
    let mut state = AugmentedState::zeros(size, coin_dim);
    for a in 0..size {
        for b in 0..size {
            let c = coefficients[a * size + b];
            if c != 0.0 {
                state
                    .add_to_slot(a, b, &(&unit * C64::from(c)))
                    .expect("indices in range");
            }
        }
    }
    state
}

/// `‖U(n^{-1/2} I_n @ (j0,k0)) − n^{-1/2} I_n ⊗ [Szegedy step]‖` for the walk
/// quantized from `B_j^k = √p_kj U_j^k`.
pub fn verify_reduction(
    p: &StochasticMatrix,
    coins: &CoinUnitaryFamily,
    coin_dim: usize,
    j0: usize,
    k0: usize,
) -> Result<f64, SzegedyError> {
    let walk = QuantizedWalk::new(from_stochastic(p, coins, coin_dim)?)?;
    reduction_residual(&walk, p, j0, k0)
}

/// [`verify_reduction`] against an already quantized walk.
pub fn reduction_residual(
    walk: &QuantizedWalk,
    p: &StochasticMatrix,
    j0: usize,
    k0: usize,
) -> Result<f64, SzegedyError> {
    let size = p.size();
    let n = walk.coin_dim();
    let mut basis = DVector::zeros(size * size);
    if j0 >= size || k0 >= size {
        return Err(SzegedyError::IndexOutOfRange(j0, k0));
    }
    basis[j0 * size + k0] = 1.0;
    let input = identity_slice_state(&basis, size, n);
    let stepped = walk.apply_u(&input)?;
    let expected = identity_slice_state(&szegedy_step_reference(p, j0, k0)?, size, n);
    Ok(stepped.distance(&expected))
}

/// Largest reduction residual over every basis pair.
pub fn max_reduction_residual(
    p: &StochasticMatrix,
    coins: &CoinUnitaryFamily,
    coin_dim: usize,
) -> Result<f64, SzegedyError> {
    let walk = QuantizedWalk::new(from_stochastic(p, coins, coin_dim)?)?;
    let size = p.size();
    let mut worst: f64 = 0.0;
    for j0 in 0..size {
        for k0 in 0..size {
            worst = worst.max(reduction_residual(&walk, p, j0, k0)?);
        }
    }
    Ok(worst)
}
