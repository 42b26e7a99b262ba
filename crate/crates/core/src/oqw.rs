//! Open quantum walks: Kraus families, the completely positive transition map,
//! density-operator evolution and quantum trajectories.

use std::collections::BTreeMap;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::numerics::{self, CMat, NumericsError};

/// Completeness tolerance for `Σ_k B_j^k†B_j^k = I`.
pub const COMPLETENESS_TOL: f64 = 1e-9;

/// Below this, a branch probability is treated as zero by the trajectory sampler.
pub const MIN_BRANCH_PROBABILITY: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OqwError {
    #[error("node {node} out of range (walk has {num_nodes} nodes)")]
    NodeOutOfRange { node: usize, num_nodes: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("node {node} violates completeness (‖Σ_k B†B − I‖_F = {residual:e})")]
    Incomplete { node: usize, residual: f64 },
    #[error("invalid density operator: {0}")]
    InvalidDensity(String),
    #[error("all branch probabilities vanish at node {node}")]
    ZeroProbability { node: usize },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Edge operators `B_j^k` of an open quantum walk.
///
/// `edges[(j, k)]` is the operator attached to the transition `j → k`; a
/// missing entry is the zero operator.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausFamily {
    num_nodes: usize,
    coin_dim: usize,
    edges: BTreeMap<(usize, usize), CMat>,
}

/// Per-node completeness residuals `‖Σ_k B_j^k†B_j^k − I_n‖_F`.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausReport {
    pub residuals: Vec<f64>,
}

impl KrausReport {
    pub fn passed(&self) -> bool {
        self.residuals.iter().all(|&r| r < COMPLETENESS_TOL)
    }

    pub fn first_failure(&self) -> Option<(usize, f64)> {
        self.residuals
            .iter()
            .enumerate()
            .find(|(_, &r)| !(r < COMPLETENESS_TOL))
            .map(|(j, &r)| (j, r))
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }
}

impl KrausFamily {
    /// Assemble a family from `((from, to), operator)` entries.
    ///
    /// Checks shapes and node ranges only; completeness is checked by
    /// [`validate_kraus`]. Exactly-zero operators are dropped.
    pub fn new<I>(num_nodes: usize, coin_dim: usize, edges: I) -> Result<Self, OqwError>
    where
        I: IntoIterator<Item = ((usize, usize), CMat)>,
    {
        if num_nodes == 0 || coin_dim == 0 {
            return Err(OqwError::ShapeMismatch(
                "a walk needs at least one node and a coin of dimension ≥ 1".into(),
            ));
        }
        let mut map = BTreeMap::new();
        for ((from, to), op) in edges {
            for node in [from, to] {
                if node >= num_nodes {
                    return Err(OqwError::NodeOutOfRange { node, num_nodes });
                }
            }
            if op.shape() != (coin_dim, coin_dim) {
                return Err(OqwError::ShapeMismatch(format!(
                    "operator on edge {from}→{to} is {:?}, expected {coin_dim}×{coin_dim}",
                    op.shape()
                )));
            }
            numerics::ensure_finite(&op)?;
            if map.contains_key(&(from, to)) {
                return Err(OqwError::ShapeMismatch(format!(
                    "edge {from}→{to} given twice"
                )));
            }
            if op.iter().any(|z| *z != C64::new(0.0, 0.0)) {
                map.insert((from, to), op);
            }
        }
        Ok(Self {
            num_nodes,
            coin_dim,
            edges: map,
        })
    }

    /// Build and require completeness in one go.
    pub fn validated<I>(num_nodes: usize, coin_dim: usize, edges: I) -> Result<Self, OqwError>
    where
        I: IntoIterator<Item = ((usize, usize), CMat)>,
    {
        let family = Self::new(num_nodes, coin_dim, edges)?;
        validate_kraus(&family)?;
        Ok(family)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn coin_dim(&self) -> usize {
        self.coin_dim
    }

    /// `B_from^to`, if nonzero.
    pub fn operator(&self, from: usize, to: usize) -> Option<&CMat> {
        self.edges.get(&(from, to))
    }

    /// All nonzero edges in `(from, to)` order.
    pub fn edges(&self) -> impl Iterator<Item = ((usize, usize), &CMat)> {
        self.edges.iter().map(|(&e, op)| (e, op))
    }

    /// Nonzero out-edges of `from`, ordered by target.
    pub fn out_edges(&self, from: usize) -> impl Iterator<Item = (usize, &CMat)> {
        self.edges
            .range((from, 0)..(from + 1, 0))
            .map(|(&(_, to), op)| (to, op))
    }

    /// Completeness residual of every node.
    pub fn completeness_report(&self) -> KrausReport {
        let n = self.coin_dim;
        let residuals = (0..self.num_nodes)
            .map(|j| {
                let mut acc = CMat::zeros(n, n);
                for (_, b) in self.out_edges(j) {
                    acc += b.adjoint() * b;
                }
                acc -= numerics::identity(n);
                numerics::frobenius(&acc)
            })
            .collect();
        KrausReport { residuals }
    }
}

/// Check `Σ_k B_j^k†B_j^k = I_n` at every node.
pub fn validate_kraus(family: &KrausFamily) -> Result<KrausReport, OqwError> {
    let report = family.completeness_report();
    match report.first_failure() {
        Some((node, residual)) => Err(OqwError::Incomplete { node, residual }),
        None => Ok(report),
    }
}

/// Operator on coin ⊗ position space, stored as `n×n` position blocks `ρ_{jj'}`.
///
/// Missing blocks are zero. The dense layout used by [`DensityOperator::to_dense`]
/// puts the coin index first: row `a·|V| + j` is coin level `a` at node `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    num_nodes: usize,
    coin_dim: usize,
    blocks: BTreeMap<(usize, usize), CMat>,
}

/// Tolerance for the trace and positivity checks of a density operator.
pub const DENSITY_TOL: f64 = 1e-9;

impl DensityOperator {
    pub fn new<I>(num_nodes: usize, coin_dim: usize, blocks: I) -> Result<Self, OqwError>
    where
        I: IntoIterator<Item = ((usize, usize), CMat)>,
    {
        let mut map = BTreeMap::new();
        for ((j, jp), block) in blocks {
            for node in [j, jp] {
                if node >= num_nodes {
                    return Err(OqwError::NodeOutOfRange { node, num_nodes });
                }
            }
            if block.shape() != (coin_dim, coin_dim) {
                return Err(OqwError::ShapeMismatch(format!(
                    "block ({j},{jp}) is {:?}, expected {coin_dim}×{coin_dim}",
                    block.shape()
                )));
            }
            numerics::ensure_finite(&block)?;
            match map.get_mut(&(j, jp)) {
                Some(existing) => *existing += block,
                None => {
                    map.insert((j, jp), block);
                }
            }
        }
        Ok(Self {
            num_nodes,
            coin_dim,
            blocks: map,
        })
    }

    /// `Σ_j ρ_j ⊗ |j⟩⟨j|` from one coin block per node.
    pub fn block_diagonal(coin_dim: usize, diagonal: Vec<CMat>) -> Result<Self, OqwError> {
        let num_nodes = diagonal.len();
        Self::new(
            num_nodes,
            coin_dim,
            diagonal.into_iter().enumerate().map(|(j, b)| ((j, j), b)),
        )
    }

    /// `coin ⊗ |node⟩⟨node|`.
    pub fn localized(num_nodes: usize, node: usize, coin: CMat) -> Result<Self, OqwError> {
        let n = coin.nrows();
        Self::new(num_nodes, n, [((node, node), coin)])
    }

    pub fn zeros(num_nodes: usize, coin_dim: usize) -> Self {
        Self {
            num_nodes,
            coin_dim,
            blocks: BTreeMap::new(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn coin_dim(&self) -> usize {
        self.coin_dim
    }

    pub fn block(&self, j: usize, jp: usize) -> Option<&CMat> {
        self.blocks.get(&(j, jp))
    }

    /// `ρ_{jj'}`, materializing zero for a missing block.
    pub fn block_or_zero(&self, j: usize, jp: usize) -> CMat {
        self.block(j, jp)
            .cloned()
            .unwrap_or_else(|| CMat::zeros(self.coin_dim, self.coin_dim))
    }

    pub fn blocks(&self) -> impl Iterator<Item = ((usize, usize), &CMat)> {
        self.blocks.iter().map(|(&k, b)| (k, b))
    }

    pub fn is_block_diagonal(&self) -> bool {
        self.blocks
            .iter()
            .all(|(&(j, jp), b)| j == jp || b.iter().all(|z| z.norm() == 0.0))
    }

    pub fn trace(&self) -> C64 {
        (0..self.num_nodes)
            .filter_map(|j| self.block(j, j))
            .map(|b| b.trace())
            .sum()
    }

    pub fn to_dense(&self) -> CMat {
        let (v, n) = (self.num_nodes, self.coin_dim);
        let mut dense = CMat::zeros(n * v, n * v);
        for (&(j, jp), block) in &self.blocks {
            for a in 0..n {
                for b in 0..n {
                    dense[(a * v + j, b * v + jp)] = block[(a, b)];
                }
            }
        }
        dense
    }

    pub fn from_dense(num_nodes: usize, coin_dim: usize, dense: &CMat) -> Result<Self, OqwError> {
        let size = num_nodes * coin_dim;
        if dense.shape() != (size, size) {
            return Err(OqwError::ShapeMismatch(format!(
                "dense operator is {:?}, expected {size}×{size}",
                dense.shape()
            )));
        }
        let (v, n) = (num_nodes, coin_dim);
        let mut blocks = Vec::new();
        for j in 0..v {
            for jp in 0..v {
                let block = CMat::from_fn(n, n, |a, b| dense[(a * v + j, b * v + jp)]);
                if block.iter().any(|z| z.norm() != 0.0) {
                    blocks.push(((j, jp), block));
                }
            }
        }
        Self::new(num_nodes, coin_dim, blocks)
    }

    /// Check Hermiticity, unit trace and positivity.
    pub fn validate(&self) -> Result<(), OqwError> {
        for (&(j, jp), block) in &self.blocks {
            let mirror = self.block_or_zero(jp, j);
            let residual = numerics::frobenius(&(block - mirror.adjoint()));
            if residual > DENSITY_TOL {
                return Err(OqwError::InvalidDensity(format!(
                    "blocks ({j},{jp}) and ({jp},{j}) are not adjoint (residual {residual:e})"
                )));
            }
        }
        let tr = self.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > DENSITY_TOL {
            return Err(OqwError::InvalidDensity(format!(
                "trace is {tr}, expected 1"
            )));
        }
        let min = numerics::min_eigenvalue(&self.to_dense())?;
        if min < -DENSITY_TOL {
            return Err(OqwError::InvalidDensity(format!(
                "not positive semidefinite (smallest eigenvalue {min:e})"
            )));
        }
        Ok(())
    }

    /// Frobenius distance over all blocks.
    pub fn distance(&self, other: &DensityOperator) -> f64 {
        let mut keys: Vec<_> = self
            .blocks
            .keys()
            .chain(other.blocks.keys())
            .copied()
            .collect();
        keys.sort_unstable();
        keys.dedup();
        keys.into_iter()
            .map(|(j, jp)| {
                let d = self.block_or_zero(j, jp) - other.block_or_zero(j, jp);
                d.iter().map(|z| z.norm_sqr()).sum::<f64>()
            })
            .sum::<f64>()
            .sqrt()
    }

    fn ensure_compatible(&self, family: &KrausFamily) -> Result<(), OqwError> {
        if self.num_nodes != family.num_nodes() || self.coin_dim != family.coin_dim() {
            return Err(OqwError::DimensionMismatch(format!(
                "state has {} nodes / coin {}, walk has {} nodes / coin {}",
                self.num_nodes,
                self.coin_dim,
                family.num_nodes(),
                family.coin_dim()
            )));
        }
        Ok(())
    }
}

/// One application of `ℳ(ρ) = Σ_{j,k} M_j^k ρ M_j^k†` with `M_j^k = B_j^k ⊗ |k⟩⟨j|`.
///
/// Each term is `B_j^k ρ_{jj} B_j^k† ⊗ |k⟩⟨k|`, so only the diagonal blocks of
/// the input contribute and the output is block diagonal.
pub fn oqw_step(family: &KrausFamily, rho: &DensityOperator) -> Result<DensityOperator, OqwError> {
    rho.ensure_compatible(family)?;
    let n = family.coin_dim();
    let mut out: BTreeMap<(usize, usize), CMat> = BTreeMap::new();
    for j in 0..family.num_nodes() {
        let Some(block) = rho.block(j, j) else {
            continue;
        };
        for (k, b) in family.out_edges(j) {
            let term = b * block * b.adjoint();
            *out.entry((k, k)).or_insert_with(|| CMat::zeros(n, n)) += term;
        }
    }
    Ok(DensityOperator {
        num_nodes: rho.num_nodes,
        coin_dim: n,
        blocks: out,
    })
}

/// `ρ_t = ℳ^t ρ_0`.
pub fn oqw_evolve(
    family: &KrausFamily,
    rho0: &DensityOperator,
    steps: usize,
) -> Result<DensityOperator, OqwError> {
    rho0.ensure_compatible(family)?;
    let mut rho = rho0.clone();
    for _ in 0..steps {
        rho = oqw_step(family, &rho)?;
    }
    Ok(rho)
}

/// `p_j = tr ρ_{jj}`, with roundoff below zero clamped.
pub fn vertex_distribution(rho: &DensityOperator) -> Vec<f64> {
    (0..rho.num_nodes())
        .map(|j| {
            rho.block(j, j)
                .map(|b| b.trace().re)
                .unwrap_or(0.0)
                .max(0.0)
        })
        .collect()
}

/// Long-run behaviour of `ρ_t` detected from a finite run.
#[derive(Debug, Clone, PartialEq)]
pub enum LimitBehavior {
    /// `ρ_t` stops changing from `onset` on.
    Converged {
        onset: usize,
        limit: DensityOperator,
    },
    /// `ρ_{t+period} = ρ_t` for `t ≥ onset` with `period ≥ 2`; no limit exists.
    Periodic {
        onset: usize,
        period: usize,
        cycle: Vec<DensityOperator>,
    },
    /// Neither pattern showed up within the horizon.
    Undetermined { steps: usize },
}

impl LimitBehavior {
    pub fn limit(&self) -> Option<&DensityOperator> {
        match self {
            LimitBehavior::Converged { limit, .. } => Some(limit),
            _ => None,
        }
    }
}

/// Run `steps` iterations and look for a fixed point or a cycle of length up
/// to `max_period` over the second half of the run.
pub fn analyze_limit(
    family: &KrausFamily,
    rho0: &DensityOperator,
    steps: usize,
    max_period: usize,
    tol: f64,
) -> Result<LimitBehavior, OqwError> {
    rho0.ensure_compatible(family)?;
    let mut history = Vec::with_capacity(steps + 1);
    history.push(rho0.clone());
    for t in 0..steps {
        let next = oqw_step(family, &history[t])?;
        history.push(next);
    }
    let last = history.len() - 1;
    let window_start = last / 2;
    for period in 1..=max_period.max(1) {
        if period > window_start {
            break;
        }
        let repeats =
            (window_start..=last).all(|t| history[t].distance(&history[t - period]) < tol);
        if !repeats {
            continue;
        }
        // walk back to the earliest time the pattern holds
        let mut onset = window_start - period;
        while onset > 0 && history[onset - 1 + period].distance(&history[onset - 1]) < tol {
            onset -= 1;
        }
        return Ok(if period == 1 {
            LimitBehavior::Converged {
                onset,
                limit: history[last].clone(),
            }
        } else {
            LimitBehavior::Periodic {
                onset,
                period,
                cycle: history[last + 1 - period..=last].to_vec(),
            }
        });
    }
    Ok(LimitBehavior::Undetermined { steps })
}

/// Walker position plus conditional coin state, the starting point of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryState {
    pub node: usize,
    pub coin_state: CMat,
    pub rng_seed: u64,
}

impl TrajectoryState {
    pub fn new(node: usize, coin_state: CMat, rng_seed: u64) -> Self {
        Self {
            node,
            coin_state,
            rng_seed,
        }
    }

    /// Measure the position of `rho`: pick node `j` with probability `tr ρ_{jj}`
    /// and keep `ρ_{jj}/tr ρ_{jj}` as the coin.
    pub fn sample_from<R: Rng + ?Sized>(
        rho: &DensityOperator,
        rng: &mut R,
        rng_seed: u64,
    ) -> Result<Self, OqwError> {
        let probs = vertex_distribution(rho);
        let node = sample_index(&probs, rng).ok_or(OqwError::ZeroProbability { node: 0 })?;
        let block = rho.block_or_zero(node, node);
        let coin_state = &block / C64::from(probs[node]);
        Ok(Self::new(node, coin_state, rng_seed))
    }

    fn validate(&self, family: &KrausFamily) -> Result<(), OqwError> {
        if self.node >= family.num_nodes() {
            return Err(OqwError::NodeOutOfRange {
                node: self.node,
                num_nodes: family.num_nodes(),
            });
        }
        let n = family.coin_dim();
        if self.coin_state.shape() != (n, n) {
            return Err(OqwError::ShapeMismatch(format!(
                "coin state is {:?}, expected {n}×{n}",
                self.coin_state.shape()
            )));
        }
        let tr = self.coin_state.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > 1e-12 {
            return Err(OqwError::InvalidDensity(format!(
                "coin state has trace {tr}"
            )));
        }
        Ok(())
    }
}

/// Visited nodes `path[0..=steps]` and the coin state after the last step.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub path: Vec<usize>,
    pub final_coin: CMat,
}

/// RNG for trajectory `index` of an ensemble seeded with `base_seed`.
///
/// Each index gets its own ChaCha stream, so ensembles can be split across
/// threads without changing any individual path.
pub fn trajectory_rng(base_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(index);
    rng
}

fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if !(total >= MIN_BRANCH_PROBABILITY) {
        return None;
    }
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut fallback = None;
    for (i, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        fallback = Some(i);
        acc += w;
        if u < acc {
            return Some(i);
        }
    }
    fallback
}

/// Unravel the walk by measuring the position after every step.
pub fn run_trajectory(
    family: &KrausFamily,
    start: &TrajectoryState,
    steps: usize,
) -> Result<Trajectory, OqwError> {
    let mut rng = ChaCha8Rng::seed_from_u64(start.rng_seed);
    run_trajectory_with_rng(family, start.node, &start.coin_state, steps, &mut rng)
}

pub fn run_trajectory_with_rng<R: Rng + ?Sized>(
    family: &KrausFamily,
    node: usize,
    coin: &CMat,
    steps: usize,
    rng: &mut R,
) -> Result<Trajectory, OqwError> {
    TrajectoryState::new(node, coin.clone(), 0).validate(family)?;
    let mut path = Vec::with_capacity(steps + 1);
    path.push(node);
    let mut current = node;
    let mut tau = coin.clone();
    let mut branches: Vec<(usize, CMat)> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    for _ in 0..steps {
        branches.clear();
        weights.clear();
        for (k, b) in family.out_edges(current) {
            let next = b * &tau * b.adjoint();
            let p = next.trace().re;
            weights.push(if p >= MIN_BRANCH_PROBABILITY { p } else { 0.0 });
            branches.push((k, next));
        }
        let choice =
            sample_index(&weights, rng).ok_or(OqwError::ZeroProbability { node: current })?;
        let (k, next) = branches.swap_remove(choice);
        tau = next / C64::from(weights[choice]);
        current = k;
        path.push(current);
    }
    Ok(Trajectory {
        path,
        final_coin: tau,
    })
}

/// `count` independent trajectories from the same start, trajectory `i`
/// drawing from `trajectory_rng(base_seed, i)`.
pub fn run_ensemble(
    family: &KrausFamily,
    node: usize,
    coin: &CMat,
    base_seed: u64,
    count: usize,
    steps: usize,
) -> Result<Vec<Trajectory>, OqwError> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = trajectory_rng(base_seed, i as u64);
            run_trajectory_with_rng(family, node, coin, steps, &mut rng)
        })
        .collect()
}

/// Same as [`run_ensemble`], but each trajectory first samples its start from
/// a position measurement of `rho0`.
pub fn run_ensemble_from_density(
    family: &KrausFamily,
    rho0: &DensityOperator,
    base_seed: u64,
    count: usize,
    steps: usize,
) -> Result<Vec<Trajectory>, OqwError> {
    rho0.ensure_compatible(family)?;
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = trajectory_rng(base_seed, i as u64);
            let start = TrajectoryState::sample_from(rho0, &mut rng, base_seed)?;
            run_trajectory_with_rng(family, start.node, &start.coin_state, steps, &mut rng)
        })
        .collect()
}

/// Fraction of trajectories at each node, indexed `[t][node]`.
pub fn occupation_frequencies(trajectories: &[Trajectory], num_nodes: usize) -> Vec<Vec<f64>> {
    let Some(len) = trajectories.iter().map(|t| t.path.len()).min() else {
        return Vec::new();
    };
    let count = trajectories.len() as f64;
    (0..len)
        .map(|t| {
            let mut freq = vec![0.0; num_nodes];
            for traj in trajectories {
                freq[traj.path[t]] += 1.0;
            }
            freq.iter_mut().for_each(|f| *f /= count);
            freq
        })
        .collect()
}

/// Ensemble average of `coin ⊗ |node⟩⟨node|` at the final step.
pub fn ensemble_mean_state(
    trajectories: &[Trajectory],
    num_nodes: usize,
    coin_dim: usize,
) -> DensityOperator {
    let mut mean = DensityOperator::zeros(num_nodes, coin_dim);
    if trajectories.is_empty() {
        return mean;
    }
    let weight = C64::from(1.0 / trajectories.len() as f64);
    for traj in trajectories {
        let node = *traj.path.last().expect("path holds the start node");
        *mean
            .blocks
            .entry((node, node))
            .or_insert_with(|| CMat::zeros(coin_dim, coin_dim)) += &traj.final_coin * weight;
    }
    mean
}
