//! Shared fixtures and reference implementations for the integration tests.
//!
//! The reference code here deliberately avoids the crate's own kernels: square
//! roots go through a real symmetric embedding, the open-walk map is applied
//! on the full coin⊗position space, and the unitary walk is assembled entry by
//! entry from its defining formula.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use oqwlab::quantizer::AugmentedState;
use oqwlab::{CMat, DensityOperator, KrausFamily};

pub const H: f64 = std::f64::consts::FRAC_1_SQRT_2;

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn real(rows: &[&[f64]]) -> CMat {
    CMat::from_fn(rows.len(), rows[0].len(), |r, col| c(rows[r][col]))
}

pub fn eye(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// The two-node example: `B_1^1 = σ_x`, `B_2^1 = σ_z`, nothing leaves towards node 2.
pub fn example_family() -> KrausFamily {
    KrausFamily::new(
        2,
        2,
        [
            ((0, 0), real(&[&[0.0, 1.0], &[1.0, 0.0]])),
            ((1, 0), real(&[&[1.0, 0.0], &[0.0, -1.0]])),
        ],
    )
    .unwrap()
}

pub fn example_case1_density() -> DensityOperator {
    DensityOperator::block_diagonal(2, vec![eye(2) * c(0.25), eye(2) * c(0.25)]).unwrap()
}

pub fn example_case2_density() -> DensityOperator {
    DensityOperator::localized(2, 1, real(&[&[0.75, 0.0], &[0.0, 0.25]])).unwrap()
}

/// Augmented state with `scale·I_2` in the listed slots of the two-node walk.
pub fn identity_slots(slots: &[((usize, usize), f64)]) -> AugmentedState {
    AugmentedState::from_slots(
        2,
        2,
        slots.iter().map(|&((j, k), s)| ((j, k), eye(2) * c(s))),
    )
    .unwrap()
}

pub fn example_case1_state() -> AugmentedState {
    identity_slots(&[((0, 0), 0.5), ((1, 0), 0.5)])
}

pub fn example_case2_state() -> AugmentedState {
    identity_slots(&[((0, 1), H)])
}

/// `[[Re, −Im], [Im, Re]]`.
fn embed(m: &CMat) -> DMatrix<f64> {
    let n = m.nrows();
    DMatrix::from_fn(2 * n, 2 * n, |r, col| {
        let z = m[(r % n, col % n)];
        match (r < n, col < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

/// Principal square root of a PSD matrix, computed on its real embedding.
pub fn reference_sqrt(m: &CMat) -> CMat {
    let n = m.nrows();
    let e = embed(&((m + m.adjoint()) * c(0.5)));
    let eig = e.symmetric_eigen();
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let r = &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose();
    CMat::from_fn(n, n, |i, j| C64::new(r[(i, j)], r[(i + n, j)]))
}

/// Rank of a Hermitian Gram matrix, eigenvalues above `tol` counted once.
pub fn reference_rank(gram: &CMat, tol: f64) -> usize {
    let eig = embed(gram).symmetric_eigen();
    eig.eigenvalues.iter().filter(|&&l| l > tol).count() / 2
}

/// Kronecker product written out by index.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    CMat::from_fn(ar * br, ac * bc, |r, col| {
        a[(r / br, col / bc)] * b[(r % br, col % bc)]
    })
}

/// `|k⟩⟨j|` on the position space.
pub fn ket_bra(size: usize, k: usize, j: usize) -> CMat {
    let mut m = CMat::zeros(size, size);
    m[(k, j)] = c(1.0);
    m
}

/// One step of the open walk as a channel on coin⊗position with Kraus
/// operators `B_j^k ⊗ |k⟩⟨j|`.
pub fn reference_oqw_step(family: &KrausFamily, rho: &CMat) -> CMat {
    let v = family.num_nodes();
    let mut out = CMat::zeros(rho.nrows(), rho.ncols());
    for ((j, k), b) in family.edges() {
        let l = kron(b, &ket_bra(v, k, j));
        out += &l * rho * l.adjoint();
    }
    out
}

/// Flat index of entry `(a, b)` of slot `(j, k)`.
pub fn flat_index(v: usize, n: usize, j: usize, k: usize, a: usize, b: usize) -> usize {
    ((j * v + k) * n + a) * n + b
}

/// `ψ_j` as flat vectors, from reference square roots.
pub fn reference_psi(family: &KrausFamily) -> Vec<DVector<C64>> {
    let (v, n) = (family.num_nodes(), family.coin_dim());
    let scale = 1.0 / (n as f64).sqrt();
    (0..v)
        .map(|j| {
            let mut psi = DVector::zeros(v * v * n * n);
            for (k, b) in family.out_edges(j) {
                let root = reference_sqrt(&(b.adjoint() * b));
                for a in 0..n {
                    for bb in 0..n {
                        psi[flat_index(v, n, j, k, a, bb)] = root[(a, bb)] * scale;
                    }
                }
            }
            psi
        })
        .collect()
}

/// The swap as a permutation matrix on flat vectors.
pub fn reference_swap(v: usize, n: usize) -> CMat {
    let dim = v * v * n * n;
    let mut s = CMat::zeros(dim, dim);
    for j in 0..v {
        for k in 0..v {
            for a in 0..n {
                for b in 0..n {
                    s[(flat_index(v, n, k, j, a, b), flat_index(v, n, j, k, a, b))] = c(1.0);
                }
            }
        }
    }
    s
}

/// `S(2Σ_j |ψ_j⟩⟨ψ_j| − I)`.
pub fn reference_u(family: &KrausFamily) -> CMat {
    let (v, n) = (family.num_nodes(), family.coin_dim());
    let dim = v * v * n * n;
    let mut reflection = -CMat::identity(dim, dim);
    for psi in reference_psi(family) {
        reflection += &psi * psi.adjoint() * c(2.0);
    }
    reference_swap(v, n) * reflection
}

/// `d_jk = (1/n) tr(√(B_j^k†B_j^k) √(B_k^j†B_k^j))`.
pub fn reference_d(family: &KrausFamily) -> DMatrix<f64> {
    let (v, n) = (family.num_nodes(), family.coin_dim());
    DMatrix::from_fn(v, v, |j, k| {
        match (family.operator(j, k), family.operator(k, j)) {
            (Some(a), Some(b)) => {
                let ra = reference_sqrt(&(a.adjoint() * a));
                let rb = reference_sqrt(&(b.adjoint() * b));
                (ra * rb).trace().re / n as f64
            }
            _ => 0.0,
        }
    })
}

pub fn to_vector(alpha: &AugmentedState) -> DVector<C64> {
    DVector::from_column_slice(alpha.as_slice())
}

pub fn from_vector(v: usize, n: usize, x: &DVector<C64>) -> AugmentedState {
    AugmentedState::from_flat(v, n, x.as_slice().to_vec()).unwrap()
}

/// Orthonormal basis of `span{ψ_j, Sψ_j}` by modified Gram–Schmidt.
pub fn reference_invariant_basis(family: &KrausFamily) -> Vec<DVector<C64>> {
    let s = reference_swap(family.num_nodes(), family.coin_dim());
    let mut basis: Vec<DVector<C64>> = Vec::new();
    for psi in reference_psi(family) {
        for mut x in [psi.clone(), &s * &psi] {
            for q in &basis {
                let p = q.dotc(&x);
                x -= q * p;
            }
            let norm = x.norm();
            if norm > 1e-8 {
                basis.push(x / c(norm));
            }
        }
    }
    basis
}

/// `Σ_k |α(j,k)|²_HS` summed from the flat vector.
pub fn reference_node_probability(v: usize, n: usize, x: &DVector<C64>, j: usize) -> f64 {
    let start = flat_index(v, n, j, 0, 0, 0);
    x.rows(start, v * n * n).norm_squared()
}
