//! Unitary quantization of an open quantum walk.
//!
//! States live in `B(H_C) ⊗ H_V ⊗ H_V`: every ordered node pair `(j, k)`
//! carries an `n×n` operator, and the inner product is Hilbert–Schmidt. The
//! walk step is `U = S(2Π − 1)`, where `Π` projects onto the span of
//!
//! ```text
//! ψ_j = n^{-1/2} Σ_k √(B_j^k†B_j^k) ⊗ |j⟩ ⊗ |k⟩
//! ```
//!
//! and `S` swaps the two node registers. `U` is applied without ever forming
//! the dense matrix; [`QuantizedWalk::dense_u`] builds it separately as a
//! check.

use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::numerics::{self, hs_inner_slices, CMat, NumericsError};
use crate::oqw::{validate_kraus, KrausFamily, OqwError};

/// Eigenvalues of `D` may exceed `[−1, 1]` by this much before it is an error.
pub const D_SPECTRUM_TOL: f64 = 1e-9;

/// Acceptance threshold for the operator identities.
pub const IDENTITY_TOL: f64 = 1e-9;

/// Largest vectorized dimension `n²|V|²` the dense oracle will build.
pub const MAX_DENSE_DIM: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantizerError {
    #[error(transparent)]
    Oqw(#[from] OqwError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("eigenvalue {eigenvalue} of D lies outside [-1, 1]")]
    SpectrumOutOfRange { eigenvalue: f64 },
    #[error("dense dimension {dim} exceeds the limit of {MAX_DENSE_DIM}")]
    TooLarge { dim: usize },
}

/// Operator-valued amplitudes over node pairs.
///
/// Stored flat: slot `(j, k)` occupies `n²` consecutive entries starting at
/// `(j·|V| + k)·n²`, row-major within the slot. The flat vector is also the
/// vectorization used by the dense oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedState {
    num_nodes: usize,
    coin_dim: usize,
    data: Vec<C64>,
}

impl AugmentedState {
    pub fn zeros(num_nodes: usize, coin_dim: usize) -> Self {
        Self {
            num_nodes,
            coin_dim,
            data: vec![C64::new(0.0, 0.0); num_nodes * num_nodes * coin_dim * coin_dim],
        }
    }

    pub fn from_flat(
        num_nodes: usize,
        coin_dim: usize,
        data: Vec<C64>,
    ) -> Result<Self, QuantizerError> {
        let expected = num_nodes * num_nodes * coin_dim * coin_dim;
        if data.len() != expected {
            return Err(QuantizerError::DimensionMismatch(format!(
                "flat state has {} entries, expected {expected}",
                data.len()
            )));
        }
        Ok(Self {
            num_nodes,
            coin_dim,
            data,
        })
    }

    /// State with the given operators in the given slots; repeated slots add up.
    pub fn from_slots<I>(
        num_nodes: usize,
        coin_dim: usize,
        slots: I,
    ) -> Result<Self, QuantizerError>
    where
        I: IntoIterator<Item = ((usize, usize), CMat)>,
    {
        let mut state = Self::zeros(num_nodes, coin_dim);
        for ((j, k), op) in slots {
            state.add_to_slot(j, k, &op)?;
        }
        Ok(state)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn coin_dim(&self) -> usize {
        self.coin_dim
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn slot_range(&self, j: usize, k: usize) -> std::ops::Range<usize> {
        let nn = self.coin_dim * self.coin_dim;
        let start = (j * self.num_nodes + k) * nn;
        start..start + nn
    }

    fn check_pair(&self, j: usize, k: usize) -> Result<(), QuantizerError> {
        if j >= self.num_nodes || k >= self.num_nodes {
            return Err(QuantizerError::Oqw(OqwError::NodeOutOfRange {
                node: j.max(k),
                num_nodes: self.num_nodes,
            }));
        }
        Ok(())
    }

    /// Row-major entries of the operator at `(j, k)`.
    pub fn slot_slice(&self, j: usize, k: usize) -> &[C64] {
        &self.data[self.slot_range(j, k)]
    }

    pub fn slot(&self, j: usize, k: usize) -> CMat {
        CMat::from_row_slice(self.coin_dim, self.coin_dim, self.slot_slice(j, k))
    }

    pub fn set_slot(&mut self, j: usize, k: usize, op: &CMat) -> Result<(), QuantizerError> {
        self.check_op(j, k, op)?;
        let range = self.slot_range(j, k);
        let n = self.coin_dim;
        for (idx, z) in self.data[range].iter_mut().enumerate() {
            *z = op[(idx / n, idx % n)];
        }
        Ok(())
    }

    pub fn add_to_slot(&mut self, j: usize, k: usize, op: &CMat) -> Result<(), QuantizerError> {
        self.check_op(j, k, op)?;
        let range = self.slot_range(j, k);
        let n = self.coin_dim;
        for (idx, z) in self.data[range].iter_mut().enumerate() {
            *z += op[(idx / n, idx % n)];
        }
        Ok(())
    }

    fn check_op(&self, j: usize, k: usize, op: &CMat) -> Result<(), QuantizerError> {
        self.check_pair(j, k)?;
        if op.shape() != (self.coin_dim, self.coin_dim) {
            return Err(QuantizerError::DimensionMismatch(format!(
                "slot operator is {:?}, expected {1}×{1}",
                op.shape(),
                self.coin_dim
            )));
        }
        Ok(())
    }

    /// Hilbert–Schmidt inner product `⟨self, other⟩`, antilinear in `self`.
    pub fn inner(&self, other: &AugmentedState) -> C64 {
        debug_assert_eq!(self.data.len(), other.data.len());
        hs_inner_slices(&self.data, &other.data)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn normalize(&mut self) {
        let norm = self.norm();
        if norm > 0.0 {
            self.data.iter_mut().for_each(|z| *z /= norm);
        }
    }

    /// `‖self − other‖`.
    pub fn distance(&self, other: &AugmentedState) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// `self += c · other`.
    pub fn axpy(&mut self, c: C64, other: &AugmentedState) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    pub fn same_shape(&self, other: &AugmentedState) -> bool {
        self.num_nodes == other.num_nodes && self.coin_dim == other.coin_dim
    }

    /// Squared Hilbert–Schmidt weight of every slot whose first register is `j`.
    pub fn row_weight(&self, j: usize) -> f64 {
        let nn = self.coin_dim * self.coin_dim;
        let start = j * self.num_nodes * nn;
        self.data[start..start + self.num_nodes * nn]
            .iter()
            .map(|z| z.norm_sqr())
            .sum()
    }
}

impl Add for &AugmentedState {
    type Output = AugmentedState;
    fn add(self, rhs: &AugmentedState) -> AugmentedState {
        let mut out = self.clone();
        out.axpy(C64::new(1.0, 0.0), rhs);
        out
    }
}

impl Sub for &AugmentedState {
    type Output = AugmentedState;
    fn sub(self, rhs: &AugmentedState) -> AugmentedState {
        let mut out = self.clone();
        out.axpy(C64::new(-1.0, 0.0), rhs);
        out
    }
}

impl Mul<C64> for &AugmentedState {
    type Output = AugmentedState;
    fn mul(self, c: C64) -> AugmentedState {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|z| *z *= c);
        out
    }
}

impl Neg for &AugmentedState {
    type Output = AugmentedState;
    fn neg(self) -> AugmentedState {
        self * C64::new(-1.0, 0.0)
    }
}

/// Residuals of `A†A = I`, `AA† = Π` and `A†SA = D`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityReport {
    /// `‖A†A − I‖_F`.
    pub isometry: f64,
    /// Largest `‖AA†e − Πe‖` over the standard basis, together with the
    /// idempotency defect of `Π` on the same basis.
    pub projection: f64,
    /// `‖A†SA − D‖_F`.
    pub swap_compression: f64,
}

impl IdentityReport {
    pub fn max(&self) -> f64 {
        self.isometry
            .max(self.projection)
            .max(self.swap_compression)
    }

    pub fn passed(&self) -> bool {
        self.max() < IDENTITY_TOL
    }
}

/// A Kraus family together with everything needed to apply `U` cheaply.
#[derive(Debug, Clone)]
pub struct QuantizedWalk {
    kraus: KrausFamily,
    sqrt_cache: BTreeMap<(usize, usize), CMat>,
    psi: Vec<AugmentedState>,
    d_matrix: DMatrix<f64>,
}

impl QuantizedWalk {
    /// Validate the family and precompute `√(B†B)`, the `ψ_j` and `D`.
    pub fn new(kraus: KrausFamily) -> Result<Self, QuantizerError> {
        validate_kraus(&kraus)?;
        let mut sqrt_cache = BTreeMap::new();
        for ((j, k), b) in kraus.edges() {
            sqrt_cache.insert((j, k), numerics::psd_sqrt(&(b.adjoint() * b))?);
        }
        let psi = psi_from_roots(&kraus, &sqrt_cache)?;
        let d_matrix = d_from_roots(&kraus, &sqrt_cache)?;
        Ok(Self {
            kraus,
            sqrt_cache,
            psi,
            d_matrix,
        })
    }

    pub fn kraus(&self) -> &KrausFamily {
        &self.kraus
    }

    pub fn num_nodes(&self) -> usize {
        self.kraus.num_nodes()
    }

    pub fn coin_dim(&self) -> usize {
        self.kraus.coin_dim()
    }

    /// `n²|V|²`, the dimension of the augmented space.
    pub fn state_dim(&self) -> usize {
        let (v, n) = (self.num_nodes(), self.coin_dim());
        v * v * n * n
    }

    pub fn psi(&self) -> &[AugmentedState] {
        &self.psi
    }

    pub fn d_matrix(&self) -> &DMatrix<f64> {
        &self.d_matrix
    }

    /// Cached `√(B_j^k†B_j^k)`, if the edge exists.
    pub fn sqrt_operator(&self, j: usize, k: usize) -> Option<&CMat> {
        self.sqrt_cache.get(&(j, k))
    }

    pub fn zero_state(&self) -> AugmentedState {
        AugmentedState::zeros(self.num_nodes(), self.coin_dim())
    }

    fn check_state(&self, alpha: &AugmentedState) -> Result<(), QuantizerError> {
        if alpha.num_nodes() != self.num_nodes() || alpha.coin_dim() != self.coin_dim() {
            return Err(QuantizerError::DimensionMismatch(format!(
                "state has {} nodes / coin {}, walk has {} nodes / coin {}",
                alpha.num_nodes(),
                alpha.coin_dim(),
                self.num_nodes(),
                self.coin_dim()
            )));
        }
        Ok(())
    }

    /// `A†α = (⟨ψ_j, α⟩)_j`. Only the slots `(j, ·)` of `ψ_j` are nonzero.
    pub fn apply_a_adjoint(&self, alpha: &AugmentedState) -> Result<Vec<C64>, QuantizerError> {
        self.check_state(alpha)?;
        Ok(self.coefficients(alpha))
    }

    fn coefficients(&self, alpha: &AugmentedState) -> Vec<C64> {
        (0..self.num_nodes())
            .map(|j| {
                self.kraus
                    .out_edges(j)
                    .map(|(k, _)| {
                        hs_inner_slices(self.psi[j].slot_slice(j, k), alpha.slot_slice(j, k))
                    })
                    .sum()
            })
            .collect()
    }

    /// `(2Π − 1)α`.
    pub fn apply_reflection(
        &self,
        alpha: &AugmentedState,
    ) -> Result<AugmentedState, QuantizerError> {
        self.check_state(alpha)?;
        let coeffs = self.coefficients(alpha);
        let mut out = -alpha;
        for (j, c) in coeffs.into_iter().enumerate() {
            let two_c = c * 2.0;
            let psi = &self.psi[j];
            for (k, _) in self.kraus.out_edges(j) {
                let range = out.slot_range(j, k);
                for (dst, src) in out.data[range].iter_mut().zip(psi.slot_slice(j, k)) {
                    *dst += two_c * src;
                }
            }
        }
        Ok(out)
    }

    /// `α ↦ U α = S(2Π − 1)α`.
    pub fn apply_u(&self, alpha: &AugmentedState) -> Result<AugmentedState, QuantizerError> {
        Ok(apply_swap(&self.apply_reflection(alpha)?))
    }

    /// `A v = Σ_j v_j ψ_j`.
    pub fn apply_a(&self, v: &[C64]) -> Result<AugmentedState, QuantizerError> {
        if v.len() != self.num_nodes() {
            return Err(QuantizerError::DimensionMismatch(format!(
                "node vector has length {}, expected {}",
                v.len(),
                self.num_nodes()
            )));
        }
        let mut out = self.zero_state();
        for (c, psi) in v.iter().zip(&self.psi) {
            out.axpy(*c, psi);
        }
        Ok(out)
    }

    /// Residuals of the three operator identities relating `A`, `Π`, `S` and `D`.
    pub fn verify_identities(&self) -> IdentityReport {
        let v = self.num_nodes();

        let gram = DMatrix::from_fn(v, v, |i, j| self.psi[i].inner(&self.psi[j]));
        let isometry = numerics::frobenius(&(gram - CMat::identity(v, v)));

        let swapped: Vec<AugmentedState> = self.psi.iter().map(apply_swap).collect();
        let compression = DMatrix::from_fn(v, v, |i, j| {
            self.psi[i].inner(&swapped[j]) - C64::from(self.d_matrix[(i, j)])
        });
        let swap_compression = numerics::frobenius(&compression);

        let mut projection: f64 = 0.0;
        let dim = self.state_dim();
        for idx in 0..dim {
            let mut e = self.zero_state();
            e.data[idx] = C64::new(1.0, 0.0);
            let via_a = self
                .apply_a(&self.coefficients(&e))
                .expect("coefficient vector has |V| entries");
            let reflected = self.apply_reflection(&e).expect("shape matches");
            // Π e = ((2Π − 1)e + e) / 2
            let mut proj = &reflected + &e;
            proj.data.iter_mut().for_each(|z| *z *= 0.5);
            let reflected_twice = self.apply_reflection(&proj).expect("shape matches");
            let mut proj_twice = &reflected_twice + &proj;
            proj_twice.data.iter_mut().for_each(|z| *z *= 0.5);
            projection = projection
                .max(via_a.distance(&proj))
                .max(proj_twice.distance(&proj));
        }

        IdentityReport {
            isometry,
            projection,
            swap_compression,
        }
    }

    /// Dense matrix of `U` in the flat basis of [`AugmentedState`], assembled
    /// as `S(2Σ_j |ψ_j⟩⟨ψ_j| − I)` from explicit outer products.
    pub fn dense_u(&self) -> Result<CMat, QuantizerError> {
        let dim = self.state_dim();
        if dim > MAX_DENSE_DIM {
            return Err(QuantizerError::TooLarge { dim });
        }
        let mut reflection = CMat::from_diagonal_element(dim, dim, C64::new(-1.0, 0.0));
        for psi in &self.psi {
            let col = numerics::CVec::from_column_slice(psi.as_slice());
            reflection += (&col * col.adjoint()) * C64::new(2.0, 0.0);
        }
        Ok(dense_swap(self.num_nodes(), self.coin_dim()) * reflection)
    }
}

/// `ψ_j` for every node from the cached square roots.
pub fn build_psi(family: &KrausFamily) -> Result<Vec<AugmentedState>, QuantizerError> {
    let mut roots = BTreeMap::new();
    for ((j, k), b) in family.edges() {
        roots.insert((j, k), numerics::psd_sqrt(&(b.adjoint() * b))?);
    }
    psi_from_roots(family, &roots)
}

fn psi_from_roots(
    family: &KrausFamily,
    roots: &BTreeMap<(usize, usize), CMat>,
) -> Result<Vec<AugmentedState>, QuantizerError> {
    let (v, n) = (family.num_nodes(), family.coin_dim());
    let scale = C64::from(1.0 / (n as f64).sqrt());
    (0..v)
        .map(|j| {
            let mut psi = AugmentedState::zeros(v, n);
            for (k, _) in family.out_edges(j) {
                psi.set_slot(j, k, &(&roots[&(j, k)] * scale))?;
            }
            Ok(psi)
        })
        .collect()
}

/// The symmetric matrix `d_jk = n⁻¹ tr(√(B_j^k†B_j^k) √(B_k^j†B_k^j))`.
pub fn build_d(family: &KrausFamily) -> Result<DMatrix<f64>, QuantizerError> {
    let mut roots = BTreeMap::new();
    for ((j, k), b) in family.edges() {
        roots.insert((j, k), numerics::psd_sqrt(&(b.adjoint() * b))?);
    }
    d_from_roots(family, &roots)
}

fn d_from_roots(
    family: &KrausFamily,
    roots: &BTreeMap<(usize, usize), CMat>,
) -> Result<DMatrix<f64>, QuantizerError> {
    let v = family.num_nodes();
    let n = family.coin_dim() as f64;
    let mut d = DMatrix::zeros(v, v);
    for j in 0..v {
        for k in 0..v {
            if let (Some(a), Some(b)) = (roots.get(&(j, k)), roots.get(&(k, j))) {
                // trace of a product of two PSD matrices is real and nonnegative
                d[(j, k)] = ((a * b).trace().re / n).max(0.0);
            }
        }
    }
    let (values, _) = numerics::real_symmetric_eig(&d)?;
    for &eigenvalue in &values {
        if eigenvalue.abs() > 1.0 + D_SPECTRUM_TOL {
            return Err(QuantizerError::SpectrumOutOfRange { eigenvalue });
        }
    }
    Ok(d)
}

/// `Sα`: the operator at `(j, k)` moves to `(k, j)`.
pub fn apply_swap(alpha: &AugmentedState) -> AugmentedState {
    let v = alpha.num_nodes();
    let mut out = AugmentedState::zeros(v, alpha.coin_dim());
    for j in 0..v {
        for k in 0..v {
            let src = alpha.slot_range(k, j);
            let dst = out.slot_range(j, k);
            out.data[dst].copy_from_slice(&alpha.data[src]);
        }
    }
    out
}

/// Permutation matrix of `S` in the flat basis.
fn dense_swap(num_nodes: usize, coin_dim: usize) -> CMat {
    let nn = coin_dim * coin_dim;
    let dim = num_nodes * num_nodes * nn;
    let mut s = CMat::zeros(dim, dim);
    for j in 0..num_nodes {
        for k in 0..num_nodes {
            for e in 0..nn {
                let row = (j * num_nodes + k) * nn + e;
                let col = (k * num_nodes + j) * nn + e;
                s[(row, col)] = C64::new(1.0, 0.0);
            }
        }
    }
    s
}
