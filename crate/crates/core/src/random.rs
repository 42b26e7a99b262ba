//! Seeded generators for random walks, coins and states.
//!
//! Used by property tests, the acceptance suite and the CLI's random-walk
//! option.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::numerics::CMat;
use crate::oqw::{DensityOperator, KrausFamily};
use crate::quantizer::AugmentedState;

pub fn complex_gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        C64::new(re, im)
    })
}

/// `rows × cols` matrix with orthonormal columns (`rows ≥ cols`), from the QR
/// factor of a complex Gaussian matrix.
pub fn random_isometry<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    assert!(rows >= cols, "an isometry needs rows ≥ cols");
    let g = complex_gaussian(rows, cols, rng);
    let qr = g.qr();
    let mut q = qr.q();
    // fix the column phases so the distribution does not depend on QR sign conventions
    let r = qr.r();
    for c in 0..cols {
        let d = r[(c, c)];
        if d.norm() > 0.0 {
            let phase = d / C64::from(d.norm());
            let mut col = q.column_mut(c);
            col *= phase;
        }
    }
    q
}

pub fn random_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    random_isometry(n, n, rng)
}

/// Random complete Kraus family.
///
/// Each node gets a random nonempty set of out-neighbours; the stacked
/// operators `[B_j^{k_1}; …; B_j^{k_m}]` form a random `(m·n)×n` isometry, so
/// completeness holds up to roundoff.
pub fn random_kraus_family<R: Rng + ?Sized>(
    num_nodes: usize,
    coin_dim: usize,
    rng: &mut R,
) -> KrausFamily {
    let mut edges = Vec::new();
    for j in 0..num_nodes {
        let degree = rng.random_range(1..=num_nodes);
        let mut targets = sample(rng, num_nodes, degree).into_vec();
        targets.sort_unstable();
        let iso = random_isometry(degree * coin_dim, coin_dim, rng);
        for (slot, &k) in targets.iter().enumerate() {
            let block = iso.rows(slot * coin_dim, coin_dim).into_owned();
            edges.push(((j, k), block));
        }
    }
    KrausFamily::new(num_nodes, coin_dim, edges).expect("generated shapes are consistent")
}

/// Random column-stochastic matrix with a random sparsity pattern.
pub fn random_stochastic<R: Rng + ?Sized>(size: usize, rng: &mut R) -> DMatrix<f64> {
    let mut p = DMatrix::zeros(size, size);
    for j in 0..size {
        let support = rng.random_range(1..=size);
        let rows = sample(rng, size, support).into_vec();
        let weights: Vec<f64> = rows.iter().map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = weights.iter().sum();
        for (&k, w) in rows.iter().zip(&weights) {
            p[(k, j)] = w / total;
        }
    }
    p
}

/// Random mixed state `G G† / tr(G G†)` on coin ⊗ position space.
pub fn random_density<R: Rng + ?Sized>(
    num_nodes: usize,
    coin_dim: usize,
    rng: &mut R,
) -> DensityOperator {
    let size = num_nodes * coin_dim;
    let g = complex_gaussian(size, size, rng);
    let mut rho = &g * g.adjoint();
    let tr = rho.trace();
    rho /= tr;
    DensityOperator::from_dense(num_nodes, coin_dim, &rho).expect("shape matches")
}

/// Random block-diagonal state `Σ_j ρ_j ⊗ |j⟩⟨j|`.
pub fn random_block_diagonal_density<R: Rng + ?Sized>(
    num_nodes: usize,
    coin_dim: usize,
    rng: &mut R,
) -> DensityOperator {
    let blocks: Vec<CMat> = (0..num_nodes)
        .map(|_| {
            let g = complex_gaussian(coin_dim, coin_dim, rng);
            &g * g.adjoint()
        })
        .collect();
    let total: C64 = blocks.iter().map(|b| b.trace()).sum();
    DensityOperator::block_diagonal(coin_dim, blocks.into_iter().map(|b| b / total).collect())
        .expect("shape matches")
}

/// Unit-norm augmented state with Gaussian amplitudes in every slot.
pub fn random_augmented_state<R: Rng + ?Sized>(
    num_nodes: usize,
    coin_dim: usize,
    rng: &mut R,
) -> AugmentedState {
    let len = num_nodes * num_nodes * coin_dim * coin_dim;
    let flat = complex_gaussian(len, 1, rng);
    let mut state = AugmentedState::from_flat(num_nodes, coin_dim, flat.as_slice().to_vec())
        .expect("length matches");
    state.normalize();
    state
}

/// Normalized complex Gaussian vector of length `len`.
pub fn random_unit_vector<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<C64> {
    let v = complex_gaussian(len, 1, rng);
    let norm = v.norm();
    v.iter().map(|z| z / norm).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{frobenius, identity};
    use crate::oqw::validate_kraus;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_families_are_complete() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let v = rng.random_range(1..=4);
            let n = rng.random_range(1..=3);
            let family = random_kraus_family(v, n, &mut rng);
            assert!(validate_kraus(&family).unwrap().max_residual() < 1e-12);
        }
    }

    #[test]
    fn unitaries_are_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u = random_unitary(4, &mut rng);
        assert!(frobenius(&(u.adjoint() * &u - identity(4))) < 1e-12);
    }

    #[test]
    fn stochastic_columns_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = random_stochastic(4, &mut rng);
        for col in p.column_iter() {
            assert!((col.sum() - 1.0).abs() < 1e-14);
            assert!(col.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn densities_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        random_density(3, 2, &mut rng).validate().unwrap();
        random_block_diagonal_density(3, 2, &mut rng)
            .validate()
            .unwrap();
    }
}
