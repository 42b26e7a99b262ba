//! Time evolution of the unitary walk and its node statistics.
//!
//! `P_t(j)` is the weight of `U^t α₀` on the slots whose first register is
//! `j`. It oscillates in general, but its running mean over `t = 1..T`
//! converges; the limit is given in closed form by the eigensystem of `U`:
//!
//! ```text
//! lim P̄_T(j) = Σ_k Σ_{μ_l = μ_m} ⟨φ_l|α₀⟩⟨α₀|φ_m⟩ ⟨I ⊗ |j,k⟩⟨j,k|, |φ_l⟩⟨φ_m|⟩
//! ```

use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::quantizer::{AugmentedState, QuantizedWalk, QuantizerError};
use crate::spectral::UEigenSystem;

/// Allowed `|‖α_t‖ − ‖α₀‖|` before evolution aborts.
pub const NORM_DRIFT_TOL: f64 = 1e-6;

/// Tolerance on `‖α₀‖ = 1`.
pub const UNIT_NORM_TOL: f64 = 1e-9;

/// Largest projection residual for which `α₀` counts as inside an eigensystem's span.
pub const SPAN_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvolutionError {
    #[error(transparent)]
    Quantizer(#[from] QuantizerError),
    #[error("initial state has norm {norm}, expected 1")]
    NotNormalized { norm: f64 },
    #[error("norm drifted to {norm} after {step} steps")]
    NormDrift { step: usize, norm: f64 },
    #[error("node {node} out of range (walk has {num_nodes} nodes)")]
    IndexOutOfRange { node: usize, num_nodes: usize },
    #[error("state is not in the span of the eigensystem (residual {residual:e})")]
    NotInSpan { residual: f64 },
    #[error("horizon must be at least 1")]
    EmptyHorizon,
}

fn check_unit(alpha: &AugmentedState) -> Result<(), EvolutionError> {
    let norm = alpha.norm();
    if (norm - 1.0).abs() > UNIT_NORM_TOL {
        return Err(EvolutionError::NotNormalized { norm });
    }
    Ok(())
}

fn step_checked(
    walk: &QuantizedWalk,
    alpha: &AugmentedState,
    step: usize,
    reference_norm: f64,
) -> Result<AugmentedState, EvolutionError> {
    let next = walk.apply_u(alpha)?;
    let norm = next.norm();
    if !((norm - reference_norm).abs() <= NORM_DRIFT_TOL) {
        return Err(EvolutionError::NormDrift { step, norm });
    }
    Ok(next)
}

/// `α_t = U^t α₀`. The state is never renormalized.
pub fn evolve(
    walk: &QuantizedWalk,
    alpha0: &AugmentedState,
    steps: usize,
) -> Result<AugmentedState, EvolutionError> {
    check_unit(alpha0)?;
    let reference = alpha0.norm();
    let mut alpha = alpha0.clone();
    for t in 1..=steps {
        alpha = step_checked(walk, &alpha, t, reference)?;
    }
    Ok(alpha)
}

/// `P(j) = Σ_k ‖α_{jk}‖²_HS`.
pub fn node_probability(alpha: &AugmentedState, node: usize) -> Result<f64, EvolutionError> {
    if node >= alpha.num_nodes() {
        return Err(EvolutionError::IndexOutOfRange {
            node,
            num_nodes: alpha.num_nodes(),
        });
    }
    Ok(alpha.row_weight(node))
}

pub fn node_distribution(alpha: &AugmentedState) -> Vec<f64> {
    (0..alpha.num_nodes())
        .map(|j| alpha.row_weight(j))
        .collect()
}

/// `(1/T) Σ_{t=1}^T P_t(j)`.
pub fn mean_probability(
    walk: &QuantizedWalk,
    alpha0: &AugmentedState,
    node: usize,
    horizon: usize,
) -> Result<f64, EvolutionError> {
    if node >= walk.num_nodes() {
        return Err(EvolutionError::IndexOutOfRange {
            node,
            num_nodes: walk.num_nodes(),
        });
    }
    Ok(mean_distribution(walk, alpha0, horizon)?[node])
}

/// Mean node distribution over `t = 1..T` for every node at once.
pub fn mean_distribution(
    walk: &QuantizedWalk,
    alpha0: &AugmentedState,
    horizon: usize,
) -> Result<Vec<f64>, EvolutionError> {
    Ok(WalkRun::new(walk, alpha0.clone(), horizon)?.run()?.mean)
}

/// A streaming run of the unitary walk up to a fixed horizon.
#[derive(Debug, Clone)]
pub struct WalkRun<'a> {
    walk: &'a QuantizedWalk,
    alpha0: AugmentedState,
    horizon: usize,
    keep_history: bool,
}

/// Outcome of a [`WalkRun`].
#[derive(Debug, Clone)]
pub struct RunSummary {
    /// `P̄_T(j)` for every node.
    pub mean: Vec<f64>,
    /// `P_t` for `t = 0..=T` when history was requested.
    pub history: Option<Vec<Vec<f64>>>,
    pub final_state: AugmentedState,
}

impl<'a> WalkRun<'a> {
    pub fn new(
        walk: &'a QuantizedWalk,
        alpha0: AugmentedState,
        horizon: usize,
    ) -> Result<Self, EvolutionError> {
        if horizon == 0 {
            return Err(EvolutionError::EmptyHorizon);
        }
        check_unit(&alpha0)?;
        if !alpha0.same_shape(&walk.zero_state()) {
            return Err(QuantizerError::DimensionMismatch(
                "initial state does not match the walk".into(),
            )
            .into());
        }
        Ok(Self {
            walk,
            alpha0,
            horizon,
            keep_history: false,
        })
    }

    /// Also record the distribution at every step.
    pub fn with_history(mut self) -> Self {
        self.keep_history = true;
        self
    }

    pub fn run(&self) -> Result<RunSummary, EvolutionError> {
        let v = self.walk.num_nodes();
        let reference = self.alpha0.norm();
        let mut sums = vec![0.0; v];
        let mut history = self
            .keep_history
            .then(|| vec![node_distribution(&self.alpha0)]);
        let mut alpha = self.alpha0.clone();
        for t in 1..=self.horizon {
            alpha = step_checked(self.walk, &alpha, t, reference)?;
            let dist = node_distribution(&alpha);
            for (s, p) in sums.iter_mut().zip(&dist) {
                *s += p;
            }
            if let Some(h) = history.as_mut() {
                h.push(dist);
            }
        }
        let horizon = self.horizon as f64;
        Ok(RunSummary {
            mean: sums.into_iter().map(|s| s / horizon).collect(),
            history,
            final_state: alpha,
        })
    }
}

fn span_coefficients(
    eig: &UEigenSystem,
    alpha0: &AugmentedState,
) -> Result<Vec<C64>, EvolutionError> {
    let coefficients = eig.coefficients(alpha0);
    let residual = match eig.synthesize(&coefficients) {
        Some(rebuilt) => rebuilt.distance(alpha0),
        None => alpha0.norm(),
    };
    if !(residual < SPAN_TOL) {
        return Err(EvolutionError::NotInSpan { residual });
    }
    Ok(coefficients)
}

fn cesaro_limit(eig: &UEigenSystem, coefficients: &[C64], node: usize) -> f64 {
    let v = eig.pairs[0].vector.num_nodes();
    let mut total = C64::new(0.0, 0.0);
    for group in &eig.groups {
        for &l in group {
            for &m in group {
                let weight = coefficients[l] * coefficients[m].conj();
                if weight == C64::new(0.0, 0.0) {
                    continue;
                }
                // ⟨I ⊗ |j,k⟩⟨j,k|, |φ_l⟩⟨φ_m|⟩ = Σ_k ⟨φ_m(j,k), φ_l(j,k)⟩_HS
                let overlap: C64 = (0..v)
                    .map(|k| {
                        crate::numerics::hs_inner_slices(
                            eig.pairs[m].vector.slot_slice(node, k),
                            eig.pairs[l].vector.slot_slice(node, k),
                        )
                    })
                    .sum();
                total += weight * overlap;
            }
        }
    }
    // the group sums are Gram forms, hence real and nonnegative up to roundoff
    let value = total.re;
    if value.abs() < 1e-10 {
        0.0
    } else {
        value.clamp(0.0, 1.0)
    }
}

/// `lim_{T→∞} P̄_T(j)` from the eigensystem of `U`.
pub fn asymptotic_mean(
    eig: &UEigenSystem,
    alpha0: &AugmentedState,
    node: usize,
) -> Result<f64, EvolutionError> {
    if node >= alpha0.num_nodes() {
        return Err(EvolutionError::IndexOutOfRange {
            node,
            num_nodes: alpha0.num_nodes(),
        });
    }
    let coefficients = span_coefficients(eig, alpha0)?;
    Ok(cesaro_limit(eig, &coefficients, node))
}

/// [`asymptotic_mean`] for every node.
pub fn asymptotic_distribution(
    eig: &UEigenSystem,
    alpha0: &AugmentedState,
) -> Result<Vec<f64>, EvolutionError> {
    let coefficients = span_coefficients(eig, alpha0)?;
    Ok((0..alpha0.num_nodes())
        .map(|j| cesaro_limit(eig, &coefficients, j))
        .collect())
}

/// Deviation of the running mean from the asymptotic limit at one horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRow {
    pub horizon: usize,
    pub mean: Vec<f64>,
    pub deviation: Vec<f64>,
}

impl ProbeRow {
    pub fn max_deviation(&self) -> f64 {
        self.deviation.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub limit: Vec<f64>,
    pub rows: Vec<ProbeRow>,
    /// `C` in the envelope `deviation ≤ C / T`, taken from the first row.
    pub rate_constant: f64,
}

impl ConvergenceTable {
    pub fn final_deviation(&self) -> f64 {
        self.rows.last().map(ProbeRow::max_deviation).unwrap_or(0.0)
    }

    /// Whether every later row stays under the `C/T` envelope (with `slack`
    /// added for roundoff).
    pub fn within_envelope(&self, slack: f64) -> bool {
        self.rows
            .iter()
            .all(|r| r.max_deviation() <= self.rate_constant / r.horizon as f64 + slack)
    }
}

/// Compare running means against the asymptotic limit at each horizon in
/// `horizons`, in one pass over the trajectory.
pub fn convergence_probe(
    walk: &QuantizedWalk,
    eig: &UEigenSystem,
    alpha0: &AugmentedState,
    horizons: &[usize],
) -> Result<ConvergenceTable, EvolutionError> {
    check_unit(alpha0)?;
    let limit = asymptotic_distribution(eig, alpha0)?;
    let mut targets: Vec<usize> = horizons.to_vec();
    targets.sort_unstable();
    targets.dedup();
    if targets.first() == Some(&0) {
        return Err(EvolutionError::EmptyHorizon);
    }
    let v = walk.num_nodes();
    let reference = alpha0.norm();
    let mut sums = vec![0.0; v];
    let mut alpha = alpha0.clone();
    let mut rows = Vec::with_capacity(targets.len());
    let mut next = targets.iter().peekable();
    let last = targets.last().copied().unwrap_or(0);
    for t in 1..=last {
        alpha = step_checked(walk, &alpha, t, reference)?;
        for (s, p) in sums.iter_mut().zip(node_distribution(&alpha)) {
            *s += p;
        }
        if next.peek() == Some(&&t) {
            next.next();
            let mean: Vec<f64> = sums.iter().map(|s| s / t as f64).collect();
            let deviation = mean
                .iter()
                .zip(&limit)
                .map(|(m, l)| (m - l).abs())
                .collect();
            rows.push(ProbeRow {
                horizon: t,
                mean,
                deviation,
            });
        }
    }
    let rate_constant = rows
        .first()
        .map(|r| r.max_deviation() * r.horizon as f64)
        .unwrap_or(0.0);
    Ok(ConvergenceTable {
        limit,
        rows,
        rate_constant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{from_real_rows, identity};
    use crate::oqw::KrausFamily;
    use crate::spectral::{analytic_eigensystem, dense_u_eigensystem};
    use std::f64::consts::FRAC_1_SQRT_2 as H;

    fn example_walk() -> QuantizedWalk {
        let family = KrausFamily::new(
            2,
            2,
            [
                ((0, 0), from_real_rows(2, 2, &[0.0, 1.0, 1.0, 0.0])),
                ((1, 0), from_real_rows(2, 2, &[1.0, 0.0, 0.0, -1.0])),
            ],
        )
        .unwrap();
        QuantizedWalk::new(family).unwrap()
    }

    fn at(pairs: &[((usize, usize), f64)]) -> AugmentedState {
        AugmentedState::from_slots(
            2,
            2,
            pairs.iter().map(|&(p, c)| (p, identity(2) * C64::from(c))),
        )
        .unwrap()
    }

    fn case_one() -> AugmentedState {
        at(&[((0, 0), 0.5), ((1, 0), 0.5)])
    }

    fn case_two() -> AugmentedState {
        at(&[((0, 1), H)])
    }

    #[test]
    fn case_one_has_period_four() {
        let w = example_walk();
        let a0 = case_one();
        assert!(evolve(&w, &a0, 4).unwrap().distance(&a0) < 1e-12);
        assert_eq!(evolve(&w, &a0, 0).unwrap(), a0);
        let expected = [[1.0, 0.0], [0.5, 0.5], [1.0, 0.0], [0.5, 0.5]];
        for (t, p) in expected.iter().enumerate() {
            let a = evolve(&w, &a0, t + 1).unwrap();
            assert!((node_probability(&a, 0).unwrap() - p[0]).abs() < 1e-12);
            assert!((node_probability(&a, 1).unwrap() - p[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn case_two_states() {
        let w = example_walk();
        let a0 = case_two();
        let a1 = evolve(&w, &a0, 1).unwrap();
        assert!(a1.distance(&at(&[((1, 0), -H)])) < 1e-12);
        let p = node_distribution(&a1);
        assert!(p[0].abs() < 1e-12 && (p[1] - 1.0).abs() < 1e-12);
        assert!(evolve(&w, &a0, 2).unwrap().distance(&at(&[((0, 1), -H)])) < 1e-12);
    }

    #[test]
    fn means_over_one_period() {
        let w = example_walk();
        assert!((mean_probability(&w, &case_one(), 0, 4).unwrap() - 0.75).abs() < 1e-12);
        assert!((mean_probability(&w, &case_two(), 0, 4).unwrap() - 0.5).abs() < 1e-12);
        let single =
            QuantizedWalk::new(KrausFamily::new(1, 1, [((0, 0), identity(1))]).unwrap()).unwrap();
        let a0 = single.psi()[0].clone();
        assert!((mean_probability(&single, &a0, 0, 17).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn asymptotic_limits_of_the_example() {
        let w = example_walk();
        let analytic = analytic_eigensystem(&w).unwrap();
        let dense = dense_u_eigensystem(&w).unwrap();
        for (a0, expected) in [(case_one(), [0.75, 0.25]), (case_two(), [0.5, 0.5])] {
            for eig in [&analytic, &dense] {
                let limit = asymptotic_distribution(eig, &a0).unwrap();
                assert!((limit[0] - expected[0]).abs() < 1e-12, "{limit:?}");
                assert!((limit[1] - expected[1]).abs() < 1e-12, "{limit:?}");
            }
        }
    }

    #[test]
    fn state_outside_span_is_rejected() {
        let w = example_walk();
        let analytic = analytic_eigensystem(&w).unwrap();
        let outside = at(&[((1, 1), H)]);
        assert!(matches!(
            asymptotic_mean(&analytic, &outside, 0),
            Err(EvolutionError::NotInSpan { .. })
        ));
        // the dense eigensystem covers everything; U = −S there, so (2,2) stays put
        let dense = dense_u_eigensystem(&w).unwrap();
        let limit = asymptotic_distribution(&dense, &outside).unwrap();
        assert!((limit[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn probe_is_exact_at_period_multiples() {
        let w = example_walk();
        let eig = analytic_eigensystem(&w).unwrap();
        let table = convergence_probe(&w, &eig, &case_one(), &[4, 40, 400]).unwrap();
        assert_eq!(table.rows.len(), 3);
        for row in &table.rows {
            assert!(row.max_deviation() < 1e-12);
        }
        assert!(table.within_envelope(1e-12));
    }

    #[test]
    fn error_paths() {
        let w = example_walk();
        let unnormalized = at(&[((0, 0), 1.0)]);
        assert!(matches!(
            evolve(&w, &unnormalized, 1),
            Err(EvolutionError::NotNormalized { .. })
        ));
        assert!(matches!(
            node_probability(&case_one(), 5),
            Err(EvolutionError::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            mean_probability(&w, &case_one(), 0, 0),
            Err(EvolutionError::EmptyHorizon)
        ));
    }

    #[test]
    fn history_is_recorded_on_request() {
        let w = example_walk();
        let run = WalkRun::new(&w, case_one(), 4)
            .unwrap()
            .with_history()
            .run()
            .unwrap();
        let history = run.history.unwrap();
        assert_eq!(history.len(), 5);
        for (got, want) in history[0]
            .iter()
            .zip([0.5, 0.5])
            .chain(history[1].iter().zip([1.0, 0.0]))
        {
            assert!((got - want).abs() < 1e-12);
        }
        assert!((history[2][0] - 0.5).abs() < 1e-12);
    }
}
