mod common;

use common::*;
use nalgebra::DVector;
use num_complex::Complex64 as C64;
use oqwlab::evolution::{asymptotic_distribution, evolve, node_distribution};
use oqwlab::numerics::{hermitian_eig, hs_inner, min_eigenvalue, psd_sqrt};
use oqwlab::oqw::{ensemble_mean_state, oqw_evolve, oqw_step, run_ensemble};
use oqwlab::quantizer::{apply_swap, QuantizedWalk};
use oqwlab::random::{
    complex_gaussian, random_augmented_state, random_block_diagonal_density, random_density,
    random_kraus_family, random_stochastic, random_unit_vector,
};
use oqwlab::spec_file::WalkSpec;
use oqwlab::spectral::{
    analytic_eigensystem, classify_spectrum, complement_check, dense_u_eigensystem,
};
use oqwlab::szegedy::{
    from_stochastic, max_reduction_residual, CoinUnitaryFamily, StochasticMatrix,
};
use oqwlab::{CMat, KrausFamily};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn family(seed: u64, v: usize, n: usize) -> KrausFamily {
    random_kraus_family(v, n, &mut rng(seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn psd_sqrt_squares_back(seed in any::<u64>(), n in 1usize..=16) {
        let g = complex_gaussian(n, n, &mut rng(seed));
        let m = &g * g.adjoint();
        let m = &m / C64::from(m.norm());
        let r = psd_sqrt(&m).unwrap();
        prop_assert!((&r * &r - &m).norm() < 1e-9);
    }

    #[test]
    fn eigenvalues_sum_to_trace(seed in any::<u64>(), n in 1usize..=16) {
        let g = complex_gaussian(n, n, &mut rng(seed));
        let m = &g + g.adjoint();
        let eig = hermitian_eig(&m).unwrap();
        let sum: f64 = eig.eigenvalues.iter().sum();
        prop_assert!((sum - m.trace().re).abs() < 1e-10 * m.norm().max(1.0));
        prop_assert!((eig.reconstruct() - &m).norm() < 1e-10 * m.norm().max(1.0));
    }

    #[test]
    fn hs_self_inner_is_squared_norm(seed in any::<u64>(), r in 1usize..=6, cols in 1usize..=6) {
        let a = complex_gaussian(r, cols, &mut rng(seed));
        let z = hs_inner(&a, &a).unwrap();
        prop_assert!(z.im == 0.0 || z.im.abs() < 1e-14 * z.re);
        prop_assert!(z.re >= 0.0);
        prop_assert!((z.re - a.norm_squared()).abs() < 1e-12 * a.norm_squared().max(1.0));
    }

    #[test]
    fn oqw_step_preserves_trace_and_positivity(seed in any::<u64>(), v in 1usize..=4, n in 1usize..=3) {
        let mut r = rng(seed);
        let k = random_kraus_family(v, n, &mut r);
        let rho = random_density(v, n, &mut r);
        let next = oqw_step(&k, &rho).unwrap();
        prop_assert!((next.trace().re - 1.0).abs() < 1e-10);
        prop_assert!(next.trace().im.abs() < 1e-10);
        prop_assert!(min_eigenvalue(&next.to_dense()).unwrap() >= -1e-9);
    }

    #[test]
    fn block_diagonal_states_stay_block_diagonal(seed in any::<u64>(), v in 1usize..=4, n in 1usize..=3) {
        let mut r = rng(seed);
        let k = random_kraus_family(v, n, &mut r);
        let rho = random_block_diagonal_density(v, n, &mut r);
        prop_assert!(rho.is_block_diagonal());
        prop_assert!(oqw_evolve(&k, &rho, 3).unwrap().is_block_diagonal());
    }

    #[test]
    fn psi_is_orthonormal(seed in any::<u64>(), v in 1usize..=4, n in 1usize..=3) {
        let walk = QuantizedWalk::new(family(seed, v, n)).unwrap();
        for (i, a) in walk.psi().iter().enumerate() {
            for (j, b) in walk.psi().iter().enumerate() {
                let expected = if i == j { 1.0 } else { 0.0 };
                prop_assert!((a.inner(b) - C64::from(expected)).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn u_preserves_norm(seed in any::<u64>(), v in 1usize..=4, n in 1usize..=3, scale in 0.1f64..10.0) {
        let mut r = rng(seed);
        let walk = QuantizedWalk::new(random_kraus_family(v, n, &mut r)).unwrap();
        let alpha = &random_augmented_state(v, n, &mut r) * C64::from(scale);
        prop_assert!((walk.apply_u(&alpha).unwrap().norm() - alpha.norm()).abs() < 1e-10 * scale.max(1.0));
    }

    #[test]
    fn swap_is_an_involution(seed in any::<u64>(), v in 1usize..=4, n in 1usize..=3) {
        let alpha = random_augmented_state(v, n, &mut rng(seed));
        prop_assert_eq!(apply_swap(&apply_swap(&alpha)), alpha);
    }

    #[test]
    fn d_spectrum_is_bounded(seed in any::<u64>(), v in 1usize..=4, n in 1usize..=3) {
        let walk = QuantizedWalk::new(family(seed, v, n)).unwrap();
        let spectrum = classify_spectrum(walk.d_matrix()).unwrap();
        prop_assert!(spectrum.eigenvalues().iter().all(|l| (-1.0..=1.0).contains(l)));
    }

    #[test]
    fn spec_round_trip_is_bit_identical(seed in any::<u64>(), v in 1usize..=4, n in 1usize..=3) {
        let k = family(seed, v, n);
        let reloaded = WalkSpec::from_json(&WalkSpec::from_family(&k).to_json()).unwrap().kraus_family().unwrap();
        prop_assert_eq!(reloaded, k);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn implicit_u_matches_dense_u(seed in any::<u64>(), v in 1usize..=3, n in 1usize..=2) {
        let mut r = rng(seed);
        let walk = QuantizedWalk::new(random_kraus_family(v, n, &mut r)).unwrap();
        let dense = walk.dense_u().unwrap();
        let alpha = random_augmented_state(v, n, &mut r);
        let implicit = to_vector(&walk.apply_u(&alpha).unwrap());
        prop_assert!((implicit - dense * to_vector(&alpha)).norm() < 1e-10);
    }

    #[test]
    fn analytic_eigensystem_spans_psi_and_swapped_psi(seed in any::<u64>(), v in 1usize..=4, n in 1usize..=3) {
        let walk = QuantizedWalk::new(family(seed, v, n)).unwrap();
        let eig = analytic_eigensystem(&walk).unwrap();
        for psi in walk.psi() {
            prop_assert!(eig.span_residual(psi) < 1e-8);
            prop_assert!(eig.span_residual(&apply_swap(psi)) < 1e-8);
        }
        let spectrum = classify_spectrum(walk.d_matrix()).unwrap();
        prop_assert_eq!(eig.len(), spectrum.invariant_dimension());
        prop_assert_eq!(eig.len(), reference_invariant_basis(walk.kraus()).len());
    }

    #[test]
    fn interior_phases_come_in_conjugate_pairs(seed in any::<u64>(), v in 1usize..=4, n in 1usize..=3) {
        let walk = QuantizedWalk::new(family(seed, v, n)).unwrap();
        let eig = analytic_eigensystem(&walk).unwrap();
        let values = eig.values();
        for mu in &values {
            let count = |z: C64| values.iter().filter(|w| (*w - z).norm() < 1e-9).count();
            prop_assert_eq!(count(*mu), count(mu.conj()));
        }
    }

    #[test]
    fn analytic_eigenvalues_appear_in_dense_oracle(seed in any::<u64>(), v in 1usize..=3, n in 1usize..=2) {
        let walk = QuantizedWalk::new(family(seed, v, n)).unwrap();
        let analytic = analytic_eigensystem(&walk).unwrap();
        let dense = dense_u_eigensystem(&walk).unwrap();
        let basis = reference_invariant_basis(walk.kraus());
        for group in &analytic.groups {
            let mu = analytic.pairs[group[0]].value;
            // multiplicity of μ on H_ψ,S: rank of the dense eigenvectors' projection onto the subspace
            let vectors: Vec<DVector<C64>> = dense
                .pairs
                .iter()
                .filter(|p| (p.value - mu).norm() < 1e-8)
                .map(|p| {
                    let x = to_vector(&p.vector);
                    basis.iter().fold(DVector::zeros(x.len()), |acc, q| acc + q * q.dotc(&x))
                })
                .collect();
            let gram = CMat::from_fn(vectors.len(), vectors.len(), |i, j| vectors[i].dotc(&vectors[j]));
            let rank = if vectors.is_empty() { 0 } else { reference_rank(&gram, 1e-6) };
            prop_assert_eq!(rank, group.len());
        }
    }

    #[test]
    fn u_is_minus_swap_off_the_invariant_subspace(seed in any::<u64>(), v in 1usize..=3, n in 1usize..=3) {
        let mut r = rng(seed);
        let walk = QuantizedWalk::new(random_kraus_family(v, n, &mut r)).unwrap();
        let basis = reference_invariant_basis(walk.kraus());
        let mut x = to_vector(&random_augmented_state(v, n, &mut r));
        for q in &basis {
            let p = q.dotc(&x);
            x -= q * p;
        }
        prop_assume!(x.norm() > 1e-3);
        let x = &x / C64::from(x.norm());
        let residual = complement_check(&walk, &from_vector(v, n, &x)).unwrap();
        prop_assert!(residual.max() < 1e-8);
    }

    #[test]
    fn eigen_expansion_reconstructs_the_state(seed in any::<u64>(), v in 1usize..=3, n in 1usize..=2) {
        let mut r = rng(seed);
        let walk = QuantizedWalk::new(random_kraus_family(v, n, &mut r)).unwrap();
        let eig = analytic_eigensystem(&walk).unwrap();
        let alpha = walk.apply_a(&random_unit_vector(v, &mut r)).unwrap();
        let rebuilt = eig.synthesize(&eig.coefficients(&alpha)).unwrap();
        prop_assert!(rebuilt.distance(&alpha) < 1e-8);
        let limit = asymptotic_distribution(&eig, &alpha).unwrap();
        prop_assert!(limit.iter().all(|p| (0.0..=1.0).contains(p)));
        prop_assert!((limit.iter().sum::<f64>() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn node_probabilities_stay_normalized(seed in any::<u64>(), v in 1usize..=4, n in 1usize..=3, t in 0usize..40) {
        let mut r = rng(seed);
        let walk = QuantizedWalk::new(random_kraus_family(v, n, &mut r)).unwrap();
        let alpha = random_augmented_state(v, n, &mut r);
        let p = node_distribution(&evolve(&walk, &alpha, t).unwrap());
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn szegedy_reduction_is_coin_independent(seed in any::<u64>(), size in 1usize..=4, n in 1usize..=2) {
        let mut r = rng(seed);
        let p = StochasticMatrix::new(random_stochastic(size, &mut r)).unwrap();
        for _ in 0..3 {
            let coins = CoinUnitaryFamily::random(size, n, &mut r);
            prop_assert!(max_reduction_residual(&p, &coins, n).unwrap() < 1e-10);
            let walk = QuantizedWalk::new(from_stochastic(&p, &coins, n).unwrap()).unwrap();
            for j in 0..size {
                for k in 0..size {
                    let expected = (p.prob(k, j) * p.prob(j, k)).sqrt();
                    prop_assert!((walk.d_matrix()[(j, k)] - expected).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn szegedy_reduction_is_linear(seed in any::<u64>(), size in 1usize..=4, n in 1usize..=2) {
        let mut r = rng(seed);
        let p = StochasticMatrix::new(random_stochastic(size, &mut r)).unwrap();
        let coins = CoinUnitaryFamily::random(size, n, &mut r);
        let walk = QuantizedWalk::new(from_stochastic(&p, &coins, n).unwrap()).unwrap();
        let weights = random_unit_vector(size * size, &mut r);
        let slot = eye(n) * C64::from(1.0 / (n as f64).sqrt());
        let mut input = walk.zero_state();
        let mut expected = walk.zero_state();
        for j0 in 0..size {
            for k0 in 0..size {
                let w = weights[j0 * size + k0];
                input.add_to_slot(j0, k0, &(&slot * w)).unwrap();
                let step = oqwlab::szegedy::szegedy_step_reference(&p, j0, k0).unwrap();
                for a in 0..size {
                    for b in 0..size {
                        let coeff = step[a * size + b];
                        if coeff != 0.0 {
                            expected.add_to_slot(a, b, &(&slot * (w * coeff))).unwrap();
                        }
                    }
                }
            }
        }
        prop_assert!(walk.apply_u(&input).unwrap().distance(&expected) < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn trajectories_average_to_the_density_evolution(seed in any::<u64>(), v in 1usize..=3, n in 1usize..=2, steps in 1usize..=4) {
        let mut r = rng(seed);
        let k = random_kraus_family(v, n, &mut r);
        let coin = {
            let g = complex_gaussian(n, n, &mut r);
            let m = &g * g.adjoint();
            &m / m.trace()
        };
        let start = oqwlab::DensityOperator::localized(v, 0, coin.clone()).unwrap();
        let ensemble = run_ensemble(&k, 0, &coin, seed, 10_000, steps).unwrap();
        let empirical = ensemble_mean_state(&ensemble, v, n);
        let exact = oqw_evolve(&k, &start, steps).unwrap();
        prop_assert!((empirical.to_dense() - exact.to_dense()).norm() < 5e-2);
    }
}
