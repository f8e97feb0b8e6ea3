//! Operator algebra on truncated multi-mode bosonic Fock spaces.
//!
//! Operators are stored as square CSR matrices over the tensor-product basis
//! `|n_0, n_1, ..., n_{k-1}>`, with mode 0 the most significant index (the
//! same ordering produced by `A_0 ⊗ A_1 ⊗ ...`). Density matrices and pure
//! states are dense.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Tolerance used when validating user-supplied states.
pub const STATE_TOL: f64 = 1e-10;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Truncation scheme: one dimension and one label per mode.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FockConfig {
    dims: Vec<usize>,
    labels: Vec<String>,
}

impl FockConfig {
    pub fn new<S: AsRef<str>>(dims: &[usize], labels: &[S]) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidConfig("at least one mode is required".into()));
        }
        if dims.len() != labels.len() {
            return Err(Error::InvalidConfig(format!(
                "{} dimensions but {} labels",
                dims.len(),
                labels.len()
            )));
        }
        if let Some(d) = dims.iter().find(|&&d| d < 2) {
            return Err(Error::InvalidConfig(format!("mode dimension {d} < 2")));
        }
        let labels: Vec<String> = labels.iter().map(|s| s.as_ref().to_string()).collect();
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::InvalidConfig(format!("duplicate mode label {l:?}")));
            }
        }
        Ok(Self {
            dims: dims.to_vec(),
            labels,
        })
    }

    /// Same truncation `dim` on every mode.
    pub fn uniform<S: AsRef<str>>(labels: &[S], dim: usize) -> Result<Self> {
        Self::new(&vec![dim; labels.len()], labels)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn n_modes(&self) -> usize {
        self.dims.len()
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn mode_index(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::MissingMode(label.to_string()))
    }

    /// Basis index of the product state with the given occupations.
    pub fn index_of(&self, occupations: &[usize]) -> Result<usize> {
        if occupations.len() != self.dims.len() {
            return Err(Error::InvalidConfig(format!(
                "expected {} occupations, got {}",
                self.dims.len(),
                occupations.len()
            )));
        }
        let mut idx = 0;
        for (&n, &d) in occupations.iter().zip(&self.dims) {
            if n >= d {
                return Err(Error::InvalidConfig(format!(
                    "occupation {n} exceeds truncation {d}"
                )));
            }
            idx = idx * d + n;
        }
        Ok(idx)
    }

    pub fn occupations(&self, mut index: usize) -> Vec<usize> {
        let mut occ = vec![0; self.dims.len()];
        for (slot, &d) in occ.iter_mut().zip(&self.dims).rev() {
            *slot = index % d;
            index /= d;
        }
        occ
    }

    /// Every mode dimension increased by `by`.
    pub fn grown(&self, by: usize) -> Self {
        Self {
            dims: self.dims.iter().map(|d| d + by).collect(),
            labels: self.labels.clone(),
        }
    }
}

impl fmt::Display for FockConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .labels
            .iter()
            .zip(&self.dims)
            .map(|(l, d)| format!("{l}:{d}"))
            .collect();
        write!(f, "[{}]", parts.join(", "))
    }
}

/// Square complex matrix in compressed sparse row form.
///
/// Structural zeros are never stored; `from_triplets` sums duplicates and
/// drops entries that cancel to exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<Complex64>,
}

impl SparseMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            row_ptr: vec![0; dim + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_triplets(dim, (0..dim).map(|i| (i, i, ONE)))
    }

    pub fn from_triplets<I>(dim: usize, triplets: I) -> Self
    where
        I: IntoIterator<Item = (usize, usize, Complex64)>,
    {
        let mut entries: Vec<(usize, usize, Complex64)> = triplets.into_iter().collect();
        entries.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0; dim + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values: Vec<Complex64> = Vec::with_capacity(entries.len());
        let mut rows = Vec::with_capacity(entries.len());
        for (i, j, v) in entries {
            assert!(i < dim && j < dim, "triplet ({i}, {j}) outside dimension {dim}");
            if rows.last() == Some(&i) && col_idx.last() == Some(&j) {
                *values.last_mut().unwrap() += v;
            } else {
                rows.push(i);
                col_idx.push(j);
                values.push(v);
            }
        }
        let mut k = 0;
        for idx in 0..values.len() {
            if values[idx] != ZERO {
                rows[k] = rows[idx];
                col_idx[k] = col_idx[idx];
                values[k] = values[idx];
                k += 1;
            }
        }
        rows.truncate(k);
        col_idx.truncate(k);
        values.truncate(k);
        for &r in &rows {
            row_ptr[r + 1] += 1;
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            dim,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn from_dense(m: &DMatrix<Complex64>) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "operator matrices are square");
        let n = m.nrows();
        Self::from_triplets(
            n,
            (0..n).flat_map(|i| (0..n).map(move |j| (i, j, m[(i, j)]))),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Nonzero entries as `(row, col, value)` in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.dim).flat_map(move |i| {
            (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (i, self.col_idx[k], self.values[k]))
        })
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (self.col_idx[k], self.values[k]))
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        let cols = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        match cols.binary_search(&j) {
            Ok(k) => self.values[self.row_ptr[i] + k],
            Err(_) => ZERO,
        }
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(self.dim, self.iter().map(|(i, j, v)| (j, i, v.conj())))
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(self.dim, self.iter().map(|(i, j, v)| (j, i, v)))
    }

    pub fn conj(&self) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v = v.conj());
        out
    }

    pub fn scale(&self, s: Complex64) -> Self {
        if s == ZERO {
            return Self::zeros(self.dim);
        }
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "dimension mismatch in sparse add");
        Self::from_triplets(self.dim, self.iter().chain(other.iter()))
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "dimension mismatch in sparse product");
        let mut trip = Vec::new();
        let mut acc = vec![ZERO; self.dim];
        let mut touched = Vec::new();
        for i in 0..self.dim {
            for (k, a) in self.row(i) {
                for (j, b) in other.row(k) {
                    if acc[j] == ZERO {
                        touched.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            for &j in &touched {
                trip.push((i, j, acc[j]));
                acc[j] = ZERO;
            }
            touched.clear();
        }
        Self::from_triplets(self.dim, trip)
    }

    pub fn kron(&self, other: &Self) -> Self {
        let n = other.dim;
        let trip: Vec<_> = self
            .iter()
            .flat_map(|(i, j, a)| other.iter().map(move |(k, l, b)| (i * n + k, j * n + l, a * b)))
            .collect();
        Self::from_triplets(self.dim * n, trip)
    }

    /// `self · m` for a dense square `m`.
    pub fn mul_dense(&self, m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let mut out = DMatrix::zeros(self.dim, m.ncols());
        self.mul_dense_into(m, ONE, &mut out);
        out
    }

    /// `out += s · self · m`.
    pub fn mul_dense_into(&self, m: &DMatrix<Complex64>, s: Complex64, out: &mut DMatrix<Complex64>) {
        let n = self.dim;
        assert_eq!(m.nrows(), n);
        assert_eq!(out.shape(), m.shape());
        let src = m.as_slice();
        let dst = out.as_mut_slice();
        for (scol, dcol) in src.chunks_exact(n).zip(dst.chunks_exact_mut(n)) {
            for (i, d) in dcol.iter_mut().enumerate() {
                let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
                let mut acc = ZERO;
                for (&k, &v) in self.col_idx[lo..hi].iter().zip(&self.values[lo..hi]) {
                    acc += v * scol[k];
                }
                *d += s * acc;
            }
        }
    }

    /// `out += s · m · self` for a dense square `m`.
    pub fn dense_mul_into(&self, m: &DMatrix<Complex64>, s: Complex64, out: &mut DMatrix<Complex64>) {
        let n = self.dim;
        let r = m.nrows();
        assert_eq!(m.ncols(), n);
        assert_eq!(out.shape(), m.shape());
        let src = m.as_slice();
        let dst = out.as_mut_slice();
        for k in 0..n {
            let scol = &src[k * r..(k + 1) * r];
            let (lo, hi) = (self.row_ptr[k], self.row_ptr[k + 1]);
            for (&j, &v) in self.col_idx[lo..hi].iter().zip(&self.values[lo..hi]) {
                let sv = s * v;
                for (d, &x) in dst[j * r..(j + 1) * r].iter_mut().zip(scol) {
                    *d += x * sv;
                }
            }
        }
    }

    pub fn mul_vec(&self, x: &DVector<Complex64>) -> DVector<Complex64> {
        DVector::from_iterator(
            self.dim,
            (0..self.dim).map(|i| self.row(i).map(|(k, v)| v * x[k]).sum()),
        )
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (i, j, v) in self.iter() {
            m[(i, j)] = v;
        }
        m
    }

    /// Largest entry magnitude of `self − other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.add(&other.scale(-ONE))
            .values
            .iter()
            .fold(0.0, |m, v| m.max(v.norm()))
    }

    pub fn is_hermitian(&self) -> bool {
        *self == self.adjoint()
    }
}

/// An operator living on a specific truncated Fock space.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeOperator {
    matrix: SparseMatrix,
    config: Arc<FockConfig>,
}

impl ModeOperator {
    pub fn new(config: Arc<FockConfig>, matrix: SparseMatrix) -> Result<Self> {
        if matrix.dim() != config.total_dim() {
            return Err(Error::DimensionMismatch {
                expected: config.total_dim(),
                found: matrix.dim(),
            });
        }
        Ok(Self { matrix, config })
    }

    pub fn zero(config: &Arc<FockConfig>) -> Self {
        Self {
            matrix: SparseMatrix::zeros(config.total_dim()),
            config: config.clone(),
        }
    }

    pub fn identity(config: &Arc<FockConfig>) -> Self {
        Self {
            matrix: SparseMatrix::identity(config.total_dim()),
            config: config.clone(),
        }
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn config(&self) -> &Arc<FockConfig> {
        &self.config
    }

    pub fn dag(&self) -> Self {
        Self {
            matrix: self.matrix.adjoint(),
            config: self.config.clone(),
        }
    }

    pub fn scaled(&self, s: impl Into<Complex64>) -> Self {
        Self {
            matrix: self.matrix.scale(s.into()),
            config: self.config.clone(),
        }
    }

    pub fn same_space(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.config, &other.config) || self.config == other.config
    }

    fn check(&self, other: &Self) -> Result<()> {
        if self.same_space(other) {
            Ok(())
        } else {
            Err(Error::ConfigMismatch)
        }
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        Ok(Self {
            matrix: self.matrix.add(&other.matrix),
            config: self.config.clone(),
        })
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        Ok(Self {
            matrix: self.matrix.matmul(&other.matrix),
            config: self.config.clone(),
        })
    }

    /// `[self, other]`
    pub fn commutator(&self, other: &Self) -> Result<Self> {
        self.try_mul(other)?.try_add(&other.try_mul(self)?.scaled(-1.0))
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        self.matrix.to_dense()
    }
}

impl Add for &ModeOperator {
    type Output = ModeOperator;
    fn add(self, rhs: &ModeOperator) -> ModeOperator {
        self.try_add(rhs).expect("operators on different Fock spaces")
    }
}

impl Sub for &ModeOperator {
    type Output = ModeOperator;
    fn sub(self, rhs: &ModeOperator) -> ModeOperator {
        self.try_add(&rhs.scaled(-1.0))
            .expect("operators on different Fock spaces")
    }
}

impl Mul for &ModeOperator {
    type Output = ModeOperator;
    fn mul(self, rhs: &ModeOperator) -> ModeOperator {
        self.try_mul(rhs).expect("operators on different Fock spaces")
    }
}

impl Mul<&ModeOperator> for Complex64 {
    type Output = ModeOperator;
    fn mul(self, rhs: &ModeOperator) -> ModeOperator {
        rhs.scaled(self)
    }
}

impl Mul<&ModeOperator> for f64 {
    type Output = ModeOperator;
    fn mul(self, rhs: &ModeOperator) -> ModeOperator {
        rhs.scaled(self)
    }
}

impl Neg for &ModeOperator {
    type Output = ModeOperator;
    fn neg(self) -> ModeOperator {
        self.scaled(-1.0)
    }
}

fn single_mode_annihilation(dim: usize) -> SparseMatrix {
    SparseMatrix::from_triplets(
        dim,
        (1..dim).map(|n| (n - 1, n, Complex64::new((n as f64).sqrt(), 0.0))),
    )
}

/// Annihilation operator of mode `mode_index`, lifted with identities onto
/// the full space. The creation operator is its `dag()`.
pub fn ladder(config: &Arc<FockConfig>, mode_index: usize) -> Result<ModeOperator> {
    if mode_index >= config.n_modes() {
        return Err(Error::InvalidModeIndex {
            index: mode_index,
            n_modes: config.n_modes(),
        });
    }
    let mut m = SparseMatrix::identity(1);
    for (k, &d) in config.dims().iter().enumerate() {
        let factor = if k == mode_index {
            single_mode_annihilation(d)
        } else {
            SparseMatrix::identity(d)
        };
        m = m.kron(&factor);
    }
    ModeOperator::new(config.clone(), m)
}

/// Annihilation operator looked up by mode label.
pub fn ladder_by_label(config: &Arc<FockConfig>, label: &str) -> Result<ModeOperator> {
    ladder(config, config.mode_index(label)?)
}

pub fn number(config: &Arc<FockConfig>, mode_index: usize) -> Result<ModeOperator> {
    let a = ladder(config, mode_index)?;
    Ok(&a.dag() * &a)
}

/// Sum of scaled operator products, `Σ_k c_k · Π_j O_kj`.
///
/// An empty product stands for the identity.
pub fn compose(terms: &[(Complex64, Vec<&ModeOperator>)]) -> Result<ModeOperator> {
    let config = terms
        .iter()
        .flat_map(|(_, ops)| ops.iter())
        .next()
        .map(|op| op.config().clone())
        .ok_or(Error::EmptyComposition)?;
    let mut total = ModeOperator::zero(&config);
    for (coeff, ops) in terms {
        let mut prod = ModeOperator::identity(&config);
        for op in ops {
            prod = prod.try_mul(op)?;
        }
        total = total.try_add(&prod.scaled(*coeff))?;
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq)]
pub enum StateData {
    Pure(DVector<Complex64>),
    Density(DMatrix<Complex64>),
}

/// Pure state or density matrix on a truncated Fock space.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    config: Arc<FockConfig>,
    data: StateData,
}

impl QuantumState {
    /// Normalized pure state; fails if `psi` is not unit-norm within `STATE_TOL`.
    pub fn pure(config: Arc<FockConfig>, psi: DVector<Complex64>) -> Result<Self> {
        check_len(&config, psi.len())?;
        let norm = psi.norm();
        if (norm - 1.0).abs() > STATE_TOL {
            return Err(Error::InvalidState(format!("norm {norm} differs from 1")));
        }
        Ok(Self {
            config,
            data: StateData::Pure(psi),
        })
    }

    /// Normalizes `psi` before wrapping it.
    pub fn pure_normalized(config: Arc<FockConfig>, psi: DVector<Complex64>) -> Result<Self> {
        let norm = psi.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidState("cannot normalize a zero vector".into()));
        }
        Self::pure(config, psi.unscale(norm))
    }

    /// Validated density matrix: Hermitian, unit trace, no eigenvalue below
    /// `−STATE_TOL`.
    pub fn density(config: Arc<FockConfig>, rho: DMatrix<Complex64>) -> Result<Self> {
        check_len(&config, rho.nrows())?;
        if rho.nrows() != rho.ncols() {
            return Err(Error::InvalidState("density matrix is not square".into()));
        }
        let herm = max_abs(&(&rho - rho.adjoint()));
        if herm > STATE_TOL {
            return Err(Error::InvalidState(format!("not Hermitian (deviation {herm:e})")));
        }
        let tr = rho.trace();
        if (tr - ONE).norm() > STATE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let state = Self {
            config,
            data: StateData::Density(rho),
        };
        let min_eig = state.min_eigenvalue();
        if min_eig < -STATE_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min_eig:e}")));
        }
        Ok(state)
    }

    /// Wraps a density matrix without validation; used by the integrators,
    /// which track trace and positivity as diagnostics instead.
    pub fn density_unchecked(config: Arc<FockConfig>, rho: DMatrix<Complex64>) -> Self {
        Self {
            config,
            data: StateData::Density(rho),
        }
    }

    pub fn vacuum(config: &Arc<FockConfig>) -> Self {
        let mut psi = DVector::zeros(config.total_dim());
        psi[0] = ONE;
        Self {
            config: config.clone(),
            data: StateData::Pure(psi),
        }
    }

    pub fn fock(config: &Arc<FockConfig>, occupations: &[usize]) -> Result<Self> {
        let mut psi = DVector::zeros(config.total_dim());
        psi[config.index_of(occupations)?] = ONE;
        Ok(Self {
            config: config.clone(),
            data: StateData::Pure(psi),
        })
    }

    /// Product of per-mode coherent states, each truncated to its mode
    /// dimension and renormalized.
    pub fn coherent(config: &Arc<FockConfig>, amplitudes: &[Complex64]) -> Result<Self> {
        check_modes(config, amplitudes.len())?;
        let factors: Vec<Vec<Complex64>> = amplitudes
            .iter()
            .zip(config.dims())
            .map(|(&alpha, &d)| {
                let mut amps = Vec::with_capacity(d);
                let mut c = ONE;
                for n in 0..d {
                    if n > 0 {
                        c *= alpha / (n as f64).sqrt();
                    }
                    amps.push(c);
                }
                let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
                amps.iter().map(|a| a / norm).collect()
            })
            .collect();
        let psi = product_vector(config, &factors);
        Self::pure(config.clone(), psi)
    }

    /// Product of per-mode thermal states with mean occupations `nbars`
    /// (Bose–Einstein weights truncated and renormalized per mode).
    pub fn thermal(config: &Arc<FockConfig>, nbars: &[f64]) -> Result<Self> {
        check_modes(config, nbars.len())?;
        let mut diag = vec![1.0];
        for (&nbar, &d) in nbars.iter().zip(config.dims()) {
            if nbar < 0.0 {
                return Err(Error::InvalidState(format!("negative occupation {nbar}")));
            }
            let ratio = nbar / (1.0 + nbar);
            let w: Vec<f64> = (0..d).map(|n| ratio.powi(n as i32)).collect();
            let z: f64 = w.iter().sum();
            diag = diag
                .iter()
                .flat_map(|&p| w.iter().map(move |&q| p * q / z))
                .collect();
        }
        let rho = DMatrix::from_diagonal(&DVector::from_iterator(
            diag.len(),
            diag.into_iter().map(|p| Complex64::new(p, 0.0)),
        ));
        Self::density(config.clone(), rho)
    }

    pub fn config(&self) -> &Arc<FockConfig> {
        &self.config
    }

    pub fn data(&self) -> &StateData {
        &self.data
    }

    pub fn is_pure(&self) -> bool {
        matches!(self.data, StateData::Pure(_))
    }

    pub fn to_density_matrix(&self) -> DMatrix<Complex64> {
        match &self.data {
            StateData::Pure(psi) => psi * psi.adjoint(),
            StateData::Density(rho) => rho.clone(),
        }
    }

    pub fn trace(&self) -> Complex64 {
        match &self.data {
            StateData::Pure(psi) => Complex64::new(psi.norm_squared(), 0.0),
            StateData::Density(rho) => rho.trace(),
        }
    }

    /// Smallest eigenvalue of the Hermitian part of the density matrix.
    pub fn min_eigenvalue(&self) -> f64 {
        match &self.data {
            StateData::Pure(_) => 0.0,
            StateData::Density(rho) => {
                let h = (rho + rho.adjoint()).unscale(2.0);
                h.symmetric_eigenvalues()
                    .iter()
                    .copied()
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }
}

/// Largest entry magnitude of a dense complex matrix.
pub fn max_abs(m: &DMatrix<Complex64>) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.norm()))
}

fn check_len(config: &FockConfig, len: usize) -> Result<()> {
    if len != config.total_dim() {
        return Err(Error::DimensionMismatch {
            expected: config.total_dim(),
            found: len,
        });
    }
    Ok(())
}

fn check_modes(config: &FockConfig, n: usize) -> Result<()> {
    if n != config.n_modes() {
        return Err(Error::InvalidConfig(format!(
            "expected {} per-mode values, got {n}",
            config.n_modes()
        )));
    }
    Ok(())
}

fn product_vector(config: &FockConfig, factors: &[Vec<Complex64>]) -> DVector<Complex64> {
    let mut v = vec![ONE];
    for f in factors {
        v = v.iter().flat_map(|&a| f.iter().map(move |&b| a * b)).collect();
    }
    debug_assert_eq!(v.len(), config.total_dim());
    DVector::from_vec(v)
}

/// `tr(ρ O)` for density matrices, `<ψ|O|ψ>` for pure states.
pub fn expectation(state: &QuantumState, op: &ModeOperator) -> Result<Complex64> {
    if !(Arc::ptr_eq(state.config(), op.config()) || **state.config() == **op.config()) {
        return Err(Error::ConfigMismatch);
    }
    let m = op.matrix();
    Ok(match state.data() {
        StateData::Pure(psi) => m
            .iter()
            .map(|(i, j, v)| psi[i].conj() * v * psi[j])
            .sum(),
        StateData::Density(rho) => m.iter().map(|(i, j, v)| v * rho[(j, i)]).sum(),
    })
}
