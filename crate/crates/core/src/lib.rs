//! Open quantum walks on finite directed graphs and their unitary quantization.
//!
//! An open quantum walk is given by a [`KrausFamily`]: edge operators `B_j^k`
//! acting on an `n`-dimensional coin space, with `Σ_k B_j^k†B_j^k = I` at
//! every node. The crate evolves such walks as density operators or as
//! measured trajectories, and quantizes them into a unitary walk
//! `U = S(2Π − 1)` on operator-valued amplitudes indexed by node pairs.
//! The unitary walk is analyzed through the real symmetric matrix `D`, whose
//! spectrum determines every eigenphase of `U` on its nontrivial subspace,
//! and through long-time averages of node probabilities.
//!
//! Node indices are zero-based throughout.

// tolerance checks are written as `!(x < tol)` so that NaN fails them
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod evolution;
pub mod numerics;
pub mod oqw;
pub mod quantizer;
pub mod random;
pub mod spec_file;
pub mod spectral;
pub mod szegedy;

pub use evolution::{
    asymptotic_distribution, asymptotic_mean, convergence_probe, evolve, mean_distribution,
    mean_probability, node_distribution, node_probability, EvolutionError, WalkRun,
};
pub use numerics::{CMat, CVec, NumericsError};
pub use oqw::{DensityOperator, KrausFamily, OqwError, TrajectoryState};
pub use quantizer::{AugmentedState, QuantizedWalk, QuantizerError};
pub use spectral::{DSpectrum, SpectralError, UEigenSystem};
pub use szegedy::{CoinUnitaryFamily, StochasticMatrix, SzegedyError};

pub use num_complex::Complex64 as C64;
