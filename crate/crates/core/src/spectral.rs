//! Spectrum of the unitary walk.
//!
//! Every eigenvector of `D` lifts to eigenvectors of `U` on the invariant
//! subspace `H_{ψ,S} = span{ψ_j, Sψ_j}`: an eigenvalue `λ ∈ (−1, 1)` with
//! eigenvector `w` gives the pair
//!
//! ```text
//! (A w − e^{±i arccos λ} S A w) / √(2 − 2λ²)   with eigenvalue e^{±i arccos λ},
//! ```
//!
//! while `λ = ±1` gives `A w` itself with eigenvalue `±1`. On the orthogonal
//! complement `U` acts as `−S`. A dense diagonalization of `U` is provided as
//! an independent check and for initial states outside `H_{ψ,S}`.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::numerics::{self, CMat, CVec, NumericsError};
use crate::quantizer::{apply_swap, AugmentedState, QuantizedWalk, QuantizerError};

/// Distance from `±1` below which an eigenvalue of `D` counts as `±1`.
pub const CLASSIFY_TOL: f64 = 1e-9;

/// Phase tolerance for treating two eigenvalues of `U` as equal.
pub const PHASE_TOL: f64 = 1e-9;

/// Largest overlap with `ψ_j` or `Sψ_j` allowed for a complement state.
pub const COMPLEMENT_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error(transparent)]
    Quantizer(#[from] QuantizerError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("eigenvalue {eigenvalue} of D lies outside [-1, 1]")]
    SpectrumOutOfRange { eigenvalue: f64 },
    #[error("interior eigenvalue {eigenvalue} is too close to ±1 to normalize")]
    DegenerateNormalization { eigenvalue: f64 },
    #[error("state is not orthogonal to H_ψ,S (largest overlap {overlap:e})")]
    NotInComplement { overlap: f64 },
}

/// Eigenvectors of `D` split by eigenvalue: interior `(−1, 1)`, `+1` and `−1`.
#[derive(Debug, Clone)]
pub struct DSpectrum {
    pub interior: Vec<(f64, DVector<f64>)>,
    pub plus_one: Vec<DVector<f64>>,
    pub minus_one: Vec<DVector<f64>>,
}

impl DSpectrum {
    pub fn len(&self) -> usize {
        self.interior.len() + self.plus_one.len() + self.minus_one.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Eigenvalues in classification order: interior, then `+1`s, then `−1`s.
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.interior
            .iter()
            .map(|(l, _)| *l)
            .chain(self.plus_one.iter().map(|_| 1.0))
            .chain(self.minus_one.iter().map(|_| -1.0))
            .collect()
    }

    /// `2·#interior + #(+1) + #(−1)`, the dimension of `H_{ψ,S}`.
    pub fn invariant_dimension(&self) -> usize {
        2 * self.interior.len() + self.plus_one.len() + self.minus_one.len()
    }

    /// `‖WᵀW − I‖_F` over all eigenvectors.
    pub fn gram_residual(&self) -> f64 {
        let vectors: Vec<&DVector<f64>> = self
            .interior
            .iter()
            .map(|(_, w)| w)
            .chain(&self.plus_one)
            .chain(&self.minus_one)
            .collect();
        let m = vectors.len();
        let gram = DMatrix::from_fn(m, m, |i, j| vectors[i].dot(vectors[j]));
        (gram - DMatrix::identity(m, m)).norm()
    }
}

/// Split the spectrum of the symmetric matrix `D`.
pub fn classify_spectrum(d: &DMatrix<f64>) -> Result<DSpectrum, SpectralError> {
    let (values, vectors) = numerics::real_symmetric_eig(d)?;
    let mut spectrum = DSpectrum {
        interior: Vec::new(),
        plus_one: Vec::new(),
        minus_one: Vec::new(),
    };
    for (i, &raw) in values.iter().enumerate() {
        if raw.abs() > 1.0 + CLASSIFY_TOL {
            return Err(SpectralError::SpectrumOutOfRange { eigenvalue: raw });
        }
        let lambda = raw.clamp(-1.0, 1.0);
        let w = vectors.column(i).into_owned();
        if (lambda - 1.0).abs() < CLASSIFY_TOL {
            spectrum.plus_one.push(w);
        } else if (lambda + 1.0).abs() < CLASSIFY_TOL {
            spectrum.minus_one.push(w);
        } else {
            spectrum.interior.push((lambda, w));
        }
    }
    Ok(spectrum)
}

/// An eigenvalue of `U` and a unit eigenvector.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: C64,
    pub vector: AugmentedState,
}

/// Orthonormal eigenpairs of `U` plus their grouping by equal eigenvalue.
#[derive(Debug, Clone)]
pub struct UEigenSystem {
    pub pairs: Vec<EigenPair>,
    /// Index sets of `pairs` sharing one eigenvalue (phase within [`PHASE_TOL`]).
    pub groups: Vec<Vec<usize>>,
}

/// Phase of `z` in `[0, 2π)`.
pub fn canonical_phase(z: C64) -> f64 {
    let p = z.arg().rem_euclid(TAU);
    if p >= TAU {
        0.0
    } else {
        p
    }
}

fn phase_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).abs() % TAU;
    d.min(TAU - d)
}

/// Partition indices of `values` into runs of equal phase, including the
/// wrap-around at `0 ≡ 2π`.
pub fn group_by_phase(values: &[C64], tol: f64) -> Vec<Vec<usize>> {
    if values.is_empty() {
        return Vec::new();
    }
    let phases: Vec<f64> = values.iter().map(|&z| canonical_phase(z)).collect();
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| phases[a].total_cmp(&phases[b]));
    let mut groups: Vec<Vec<usize>> = vec![vec![order[0]]];
    for w in order.windows(2) {
        if phase_distance(phases[w[1]], phases[w[0]]) < tol {
            groups.last_mut().expect("nonempty").push(w[1]);
        } else {
            groups.push(vec![w[1]]);
        }
    }
    if groups.len() > 1 {
        let first = phases[groups[0][0]];
        let last_group = groups.last().expect("nonempty");
        let last = phases[*last_group.last().expect("nonempty")];
        if phase_distance(first, last) < tol {
            let tail = groups.pop().expect("nonempty");
            groups[0].extend(tail);
        }
    }
    for g in &mut groups {
        g.sort_unstable();
    }
    groups.sort_by_key(|g| g[0]);
    groups
}

impl UEigenSystem {
    fn from_pairs(mut pairs: Vec<EigenPair>) -> Self {
        let values: Vec<C64> = pairs.iter().map(|p| p.value).collect();
        let groups = group_by_phase(&values, PHASE_TOL);
        for group in &groups {
            if group.len() < 2 {
                continue;
            }
            let template = &pairs[group[0]].vector;
            let (v, n) = (template.num_nodes(), template.coin_dim());
            let vectors: Vec<CVec> = group
                .iter()
                .map(|&i| CVec::from_column_slice(pairs[i].vector.as_slice()))
                .collect();
            let basis = numerics::gram_schmidt(vectors, 0.0);
            for (&i, q) in group.iter().zip(basis) {
                pairs[i].vector =
                    AugmentedState::from_flat(v, n, q.as_slice().to_vec()).expect("same length");
            }
        }
        Self { pairs, groups }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn values(&self) -> Vec<C64> {
        self.pairs.iter().map(|p| p.value).collect()
    }

    /// Eigenphases in `[0, 2π)`.
    pub fn phases(&self) -> Vec<f64> {
        self.pairs
            .iter()
            .map(|p| canonical_phase(p.value))
            .collect()
    }

    /// `⟨φ_l, α⟩` for every eigenvector.
    pub fn coefficients(&self, alpha: &AugmentedState) -> Vec<C64> {
        self.pairs.iter().map(|p| p.vector.inner(alpha)).collect()
    }

    /// `Σ_l c_l φ_l`.
    pub fn synthesize(&self, coefficients: &[C64]) -> Option<AugmentedState> {
        let first = self.pairs.first()?;
        let mut out = AugmentedState::zeros(first.vector.num_nodes(), first.vector.coin_dim());
        for (p, &c) in self.pairs.iter().zip(coefficients) {
            out.axpy(c, &p.vector);
        }
        Some(out)
    }

    /// Component of `α` orthogonal to every eigenvector.
    pub fn project_out(&self, alpha: &AugmentedState) -> AugmentedState {
        let mut out = alpha.clone();
        for p in &self.pairs {
            let c = p.vector.inner(&out);
            out.axpy(-c, &p.vector);
        }
        out
    }

    /// `‖α − Σ_l ⟨φ_l, α⟩ φ_l‖`.
    pub fn span_residual(&self, alpha: &AugmentedState) -> f64 {
        self.project_out(alpha).norm()
    }

    /// Largest `‖Uφ_l − μ_l φ_l‖`.
    pub fn max_eigen_residual(&self, walk: &QuantizedWalk) -> Result<f64, SpectralError> {
        let mut worst: f64 = 0.0;
        for p in &self.pairs {
            let u_phi = walk.apply_u(&p.vector)?;
            worst = worst.max(u_phi.distance(&(&p.vector * p.value)));
        }
        Ok(worst)
    }

    /// `‖ΦᴴΦ − I‖_F`.
    pub fn orthonormality_residual(&self) -> f64 {
        let m = self.pairs.len();
        let gram = CMat::from_fn(m, m, |i, j| {
            self.pairs[i].vector.inner(&self.pairs[j].vector)
        });
        numerics::frobenius(&(gram - CMat::identity(m, m)))
    }

    /// Largest `||μ_l| − 1|`.
    pub fn modulus_residual(&self) -> f64 {
        self.pairs
            .iter()
            .map(|p| (p.value.norm() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

fn real_to_complex(w: &DVector<f64>) -> Vec<C64> {
    w.iter().map(|&x| C64::new(x, 0.0)).collect()
}

/// Eigensystem of `U` on `H_{ψ,S}` built from the spectrum of `D`.
pub fn u_eigensystem(
    walk: &QuantizedWalk,
    spectrum: &DSpectrum,
) -> Result<UEigenSystem, SpectralError> {
    let mut pairs = Vec::with_capacity(spectrum.invariant_dimension());
    for (lambda, w) in &spectrum.interior {
        let lambda = *lambda;
        let denom_sq = 2.0 - 2.0 * lambda * lambda;
        if lambda * lambda >= 1.0 - 1e-12 {
            return Err(SpectralError::DegenerateNormalization { eigenvalue: lambda });
        }
        let aw = walk.apply_a(&real_to_complex(w))?;
        let saw = apply_swap(&aw);
        let theta = lambda.acos();
        let inv = C64::from(1.0 / denom_sq.sqrt());
        for sign in [1.0, -1.0] {
            let mu = C64::from_polar(1.0, sign * theta);
            let mut phi = aw.clone();
            phi.axpy(-mu, &saw);
            pairs.push(EigenPair {
                value: mu,
                vector: &phi * inv,
            });
        }
    }
    for u in &spectrum.plus_one {
        pairs.push(EigenPair {
            value: C64::new(1.0, 0.0),
            vector: walk.apply_a(&real_to_complex(u))?,
        });
    }
    for v in &spectrum.minus_one {
        pairs.push(EigenPair {
            value: C64::new(-1.0, 0.0),
            vector: walk.apply_a(&real_to_complex(v))?,
        });
    }
    Ok(UEigenSystem::from_pairs(pairs))
}

/// Classify `D` and lift it in one call.
pub fn analytic_eigensystem(walk: &QuantizedWalk) -> Result<UEigenSystem, SpectralError> {
    let spectrum = classify_spectrum(walk.d_matrix())?;
    u_eigensystem(walk, &spectrum)
}

/// Residuals of `U = −S` and `U² = I` on a state orthogonal to `H_{ψ,S}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplementResidual {
    /// `‖Uα + Sα‖`.
    pub minus_swap: f64,
    /// `‖U²α − α‖`.
    pub square: f64,
}

impl ComplementResidual {
    pub fn max(&self) -> f64 {
        self.minus_swap.max(self.square)
    }
}

/// Largest `|⟨ψ_j, α⟩|` or `|⟨Sψ_j, α⟩|`.
pub fn invariant_overlap(
    walk: &QuantizedWalk,
    alpha: &AugmentedState,
) -> Result<f64, SpectralError> {
    let mut worst: f64 = 0.0;
    for c in walk.apply_a_adjoint(alpha)? {
        worst = worst.max(c.norm());
    }
    for c in walk.apply_a_adjoint(&apply_swap(alpha))? {
        // ⟨Sψ_j, α⟩ = ⟨ψ_j, Sα⟩ since S is a Hermitian involution
        worst = worst.max(c.norm());
    }
    Ok(worst)
}

pub fn complement_check(
    walk: &QuantizedWalk,
    alpha: &AugmentedState,
) -> Result<ComplementResidual, SpectralError> {
    let overlap = invariant_overlap(walk, alpha)?;
    if overlap >= COMPLEMENT_TOL {
        return Err(SpectralError::NotInComplement { overlap });
    }
    let u_alpha = walk.apply_u(alpha)?;
    let minus_swap = (&u_alpha + &apply_swap(alpha)).norm();
    let square = walk.apply_u(&u_alpha)?.distance(alpha);
    Ok(ComplementResidual { minus_swap, square })
}

/// Orthonormal basis of `span{ψ_j, Sψ_j}` by Gram–Schmidt, independent of `D`.
pub fn invariant_subspace_basis(walk: &QuantizedWalk, drop_tol: f64) -> Vec<AugmentedState> {
    let vectors: Vec<CVec> = walk
        .psi()
        .iter()
        .flat_map(|psi| [psi.clone(), apply_swap(psi)])
        .map(|s| CVec::from_column_slice(s.as_slice()))
        .collect();
    numerics::gram_schmidt(vectors, drop_tol)
        .into_iter()
        .map(|q| {
            AugmentedState::from_flat(walk.num_nodes(), walk.coin_dim(), q.as_slice().to_vec())
                .expect("same length")
        })
        .collect()
}

/// Tolerance for clustering eigenvalues of the Hermitian mixer in the dense oracle.
const MIXER_CLUSTER_TOL: f64 = 1e-9;

/// Full eigensystem of the dense `U`.
///
/// `U` is normal, so with `H₁ = (U + U†)/2` and `H₂ = (U − U†)/2i` the
/// Hermitian mixer `H₁ + c·H₂` shares its eigenvectors. Clusters of equal
/// mixer eigenvalue are split again by diagonalizing `H₂` on the cluster.
/// Only Hermitian eigensolvers are involved, so the vectors come out
/// orthonormal.
pub fn dense_u_eigensystem(walk: &QuantizedWalk) -> Result<UEigenSystem, SpectralError> {
    let u = walk.dense_u()?;
    let dim = u.nrows();
    let ud = u.adjoint();
    let h1 = (&u + &ud) * C64::new(0.5, 0.0);
    let h2 = (&u - &ud) * C64::new(0.0, -0.5);
    // an irrational-looking weight keeps distinct eigenvalues of U apart in the mixer
    let weight = C64::from(0.577_350_269_189_625_8_f64 * 1.131_370_849_898_476);
    let mixer = &h1 + &h2 * weight;
    let eig = numerics::hermitian_eig(&mixer)?;

    let mut columns: Vec<CVec> = Vec::with_capacity(dim);
    let mut start = 0;
    while start < dim {
        let mut end = start + 1;
        while end < dim && eig.eigenvalues[end] - eig.eigenvalues[end - 1] < MIXER_CLUSTER_TOL {
            end += 1;
        }
        let block = eig.eigenvectors.columns(start, end - start).into_owned();
        if end - start == 1 {
            columns.push(block.column(0).into_owned());
        } else {
            let restricted = block.adjoint() * &h2 * &block;
            let sub = numerics::hermitian_eig(&restricted)?;
            let rotated = &block * &sub.eigenvectors;
            columns.extend(rotated.column_iter().map(|c| c.into_owned()));
        }
        start = end;
    }

    let (v, n) = (walk.num_nodes(), walk.coin_dim());
    let pairs = columns
        .into_iter()
        .map(|col| {
            let mu = col.dotc(&(&u * &col));
            let value = if mu.norm() > 0.0 { mu / mu.norm() } else { mu };
            EigenPair {
                value,
                vector: AugmentedState::from_flat(v, n, col.as_slice().to_vec())
                    .expect("same length"),
            }
        })
        .collect();
    Ok(UEigenSystem::from_pairs(pairs))
}

/// For each pair of `analytic`, the distance from its vector to its projection
/// onto the eigenvectors of `reference` with the same eigenvalue (phase within
/// `tol`). Returns the worst case.
pub fn containment_residual(analytic: &UEigenSystem, reference: &UEigenSystem, tol: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for pair in &analytic.pairs {
        let phase = canonical_phase(pair.value);
        let mut remainder = pair.vector.clone();
        for other in &reference.pairs {
            if phase_distance(canonical_phase(other.value), phase) < tol {
                let c = other.vector.inner(&remainder);
                remainder.axpy(-c, &other.vector);
            }
        }
        worst = worst.max(remainder.norm());
    }
    worst
}
