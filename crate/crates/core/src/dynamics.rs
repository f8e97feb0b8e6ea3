//! Master-equation evolution, stationary states and the weak-probe
//! amplitude solve.
//!
//! Sign convention: `dρ/dt = −i(H_nh ρ − ρ H_nh†) + Σ γ J ρ J†` with
//! `H_nh = H − (i/2) Σ γ J†J`, which for Hermitian `H` is the usual
//! Lindblad form. A non-Hermitian `H` is accepted as is.

use std::sync::Arc;

use faer::prelude::Solve;
use faer::sparse::{SparseColMat, Triplet};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fockspace::{max_abs, FockConfig, ModeOperator, QuantumState, SparseMatrix, StateData};
use crate::model::{effective_hamiltonian, SystemParams, NORMAL_LABELS};
use crate::normalmodes::Approximation;
use crate::model::LindbladChannel;

const I: Complex64 = Complex64::new(0.0, 1.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Precomputed Liouvillian pieces.
#[derive(Debug, Clone)]
pub struct Generator {
    config: Arc<FockConfig>,
    hnh: SparseMatrix,
    hnh_adj: SparseMatrix,
    jumps: Vec<(f64, SparseMatrix, SparseMatrix)>,
}

impl Generator {
    pub fn new(h: &ModeOperator, channels: &[LindbladChannel]) -> Result<Self> {
        let mut hnh = h.matrix().clone();
        let mut jumps = Vec::with_capacity(channels.len());
        for ch in channels {
            if !ch.jump.same_space(h) {
                return Err(Error::ConfigMismatch);
            }
            if ch.rate == 0.0 {
                continue;
            }
            let j = ch.jump.matrix().clone();
            let jd = j.adjoint();
            hnh = hnh.add(&jd.matmul(&j).scale(Complex64::new(0.0, -0.5 * ch.rate)));
            // channels sharing a jump operator add their rates
            match jumps.iter_mut().find(|(_, other, _): &&mut (f64, SparseMatrix, SparseMatrix)| *other == j) {
                Some(entry) => entry.0 += ch.rate,
                None => jumps.push((ch.rate, j, jd)),
            }
        }
        Ok(Self {
            config: h.config().clone(),
            hnh_adj: hnh.adjoint(),
            hnh,
            jumps,
        })
    }

    pub fn config(&self) -> &Arc<FockConfig> {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.hnh.dim()
    }

    /// `out = L(ρ)`; `tmp` is scratch of the same shape.
    pub fn apply_into(&self, rho: &DMatrix<Complex64>, out: &mut DMatrix<Complex64>, tmp: &mut DMatrix<Complex64>) {
        out.fill(Complex64::new(0.0, 0.0));
        self.hnh.mul_dense_into(rho, -I, out);
        self.hnh_adj.dense_mul_into(rho, I, out);
        for (rate, j, jd) in &self.jumps {
            tmp.fill(Complex64::new(0.0, 0.0));
            j.mul_dense_into(rho, ONE, tmp);
            jd.dense_mul_into(tmp, Complex64::new(*rate, 0.0), out);
        }
    }

    /// `out = L(ρ)` for Hermitian `ρ`, using `H_nh ρ = (ρ H_nh†)†` and
    /// `JρJ† = (ρJ†)†J†` so that every product is dense × sparse.
    pub fn apply_hermitian_into(&self, rho: &DMatrix<Complex64>, out: &mut DMatrix<Complex64>, work: &mut Workspace) {
        let n = self.dim();
        let x = &mut work.a;
        x.fill(Complex64::new(0.0, 0.0));
        self.hnh_adj.dense_mul_into(rho, ONE, x);
        for j in 0..n {
            for i in 0..n {
                out[(i, j)] = -I * (x[(j, i)].conj() - x[(i, j)]);
            }
        }
        for (rate, _, jd) in &self.jumps {
            let y = &mut work.a;
            y.fill(Complex64::new(0.0, 0.0));
            jd.dense_mul_into(rho, ONE, y);
            let yd = &mut work.b;
            y.adjoint_to(yd);
            jd.dense_mul_into(yd, Complex64::new(*rate, 0.0), out);
        }
    }

    pub fn apply(&self, rho: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let n = self.dim();
        let mut out = DMatrix::zeros(n, n);
        let mut tmp = DMatrix::zeros(n, n);
        self.apply_into(rho, &mut out, &mut tmp);
        out
    }

    /// Column-major vectorized superoperator as (row, col, value) triplets:
    /// `−i(I⊗H_nh) + i(H̄_nh⊗I) + Σγ(J̄⊗J)`.
    pub fn superoperator_triplets(&self) -> Vec<(usize, usize, Complex64)> {
        let n = self.dim();
        let mut t = Vec::new();
        for (i, j, v) in self.hnh.iter() {
            for k in 0..n {
                t.push((k * n + i, k * n + j, -I * v));
                t.push((i * n + k, j * n + k, I * v.conj()));
            }
        }
        for (rate, j, _) in &self.jumps {
            for (i1, j1, v) in j.iter() {
                for (i2, j2, w) in j.iter() {
                    t.push((i1 * n + i2, j1 * n + j2, *rate * v.conj() * w));
                }
            }
        }
        t
    }
}

/// Scratch matrices for `Generator::apply_hermitian_into`.
#[derive(Debug, Clone)]
pub struct Workspace {
    a: DMatrix<Complex64>,
    b: DMatrix<Complex64>,
}

impl Workspace {
    pub fn new(n: usize) -> Self {
        Self {
            a: DMatrix::zeros(n, n),
            b: DMatrix::zeros(n, n),
        }
    }
}

/// dρ/dt for a density-matrix state.
pub fn lindblad_rhs(state: &QuantumState, h: &ModeOperator, channels: &[LindbladChannel]) -> Result<DMatrix<Complex64>> {
    if **state.config() != **h.config() {
        return Err(Error::ConfigMismatch);
    }
    let rho = match state.data() {
        StateData::Density(r) => r,
        StateData::Pure(_) => return Err(Error::InvalidState("lindblad_rhs needs a density matrix".into())),
    };
    let gen = Generator::new(h, channels)?;
    if rho.nrows() != gen.dim() {
        return Err(Error::DimensionMismatch {
            expected: gen.dim(),
            found: rho.nrows(),
        });
    }
    Ok(gen.apply(rho))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionSpec {
    pub t_final: f64,
    pub dt_initial: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub record_times: Vec<f64>,
    /// Allowed |tr ρ − 1| per unit time.
    pub trace_drift_bound: f64,
    pub min_step: f64,
    pub max_steps: usize,
}

impl EvolutionSpec {
    pub fn new(t_final: f64, record_times: Vec<f64>) -> Self {
        Self {
            t_final,
            dt_initial: 1e-3,
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            record_times,
            trace_drift_bound: 1e-8,
            min_step: 1e-12,
            max_steps: 10_000_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_final > 0.0) || !self.t_final.is_finite() {
            return Err(Error::InvalidParams(format!("t_final must be > 0, got {}", self.t_final)));
        }
        for (name, v) in [
            ("dt_initial", self.dt_initial),
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
            ("trace_drift_bound", self.trace_drift_bound),
        ] {
            if !(v > 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.record_times.iter().any(|&t| !(t >= 0.0 && t <= self.t_final)) {
            return Err(Error::InvalidParams("record times must lie in [0, t_final]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Default)]
pub struct TrajectoryDiagnostics {
    pub trace_drift: Vec<f64>,
    pub min_eigenvalue: Vec<f64>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    /// Set when integration stopped early; the recorded prefix stays valid.
    pub failure: Option<Error>,
}

#[derive(Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<QuantumState>,
    pub diagnostics: TrajectoryDiagnostics,
}

impl Trajectory {
    pub fn is_complete(&self) -> bool {
        self.diagnostics.failure.is_none()
    }

    pub fn into_result(mut self) -> Result<Self> {
        match self.diagnostics.failure.take() {
            Some(e) => Err(e),
            None => Ok(self),
        }
    }

    pub fn last(&self) -> Option<&QuantumState> {
        self.states.last()
    }
}

// Dormand–Prince 5(4)
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

fn hermitize(m: &mut DMatrix<Complex64>) {
    let n = m.nrows();
    for i in 0..n {
        m[(i, i)].im = 0.0;
        for j in (i + 1)..n {
            let v = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = v;
            m[(j, i)] = v.conj();
        }
    }
}

fn trace(m: &DMatrix<Complex64>) -> Complex64 {
    (0..m.nrows()).map(|i| m[(i, i)]).sum()
}

/// Adaptive Dormand–Prince integration from `state`. Integrator failures
/// are reported in the diagnostics with the partial record kept.
pub fn evolve(
    state: &QuantumState,
    h: &ModeOperator,
    channels: &[LindbladChannel],
    spec: &EvolutionSpec,
) -> Result<Trajectory> {
    spec.validate()?;
    let gen = Generator::new(h, channels)?;
    if **state.config() != **h.config() {
        return Err(Error::ConfigMismatch);
    }
    Ok(evolve_with(&gen, state.to_density_matrix(), spec))
}

pub fn evolve_with(gen: &Generator, rho0: DMatrix<Complex64>, spec: &EvolutionSpec) -> Trajectory {
    let n = gen.dim();
    let config = gen.config().clone();
    let mut records: Vec<f64> = spec.record_times.clone();
    records.sort_by(|a, b| a.partial_cmp(b).unwrap());
    records.dedup();
    let mut traj = Trajectory {
        times: Vec::with_capacity(records.len()),
        states: Vec::with_capacity(records.len()),
        diagnostics: TrajectoryDiagnostics::default(),
    };

    let mut y = rho0;
    let mut t = 0.0;
    let mut h = spec.dt_initial.min(spec.t_final);
    let mut k: Vec<DMatrix<Complex64>> = (0..7).map(|_| DMatrix::zeros(n, n)).collect();
    let mut work = Workspace::new(n);
    let mut stage = DMatrix::zeros(n, n);
    let mut y5 = DMatrix::zeros(n, n);
    hermitize(&mut y);
    gen.apply_hermitian_into(&y, &mut k[0], &mut work);
    let mut next_rec = 0;

    let record = |t: f64, y: &DMatrix<Complex64>, traj: &mut Trajectory| -> bool {
        let drift = (trace(y) - ONE).norm();
        let st = QuantumState::density_unchecked(config.clone(), y.clone());
        traj.diagnostics.trace_drift.push(drift);
        traj.diagnostics.min_eigenvalue.push(st.min_eigenvalue());
        traj.times.push(t);
        traj.states.push(st);
        let bound = spec.trace_drift_bound * t.max(1.0);
        if drift > bound {
            traj.diagnostics.failure = Some(Error::TraceDrift { t, drift, bound });
            return false;
        }
        true
    };

    while next_rec < records.len() && records[next_rec] <= 0.0 {
        if !record(0.0, &y, &mut traj) {
            return traj;
        }
        next_rec += 1;
    }

    let mut steps = 0usize;
    while next_rec < records.len() {
        let target = records[next_rec];
        if steps >= spec.max_steps {
            traj.diagnostics.failure = Some(Error::NonConvergence(format!("step budget exhausted at t = {t}")));
            return traj;
        }
        steps += 1;
        let hit = t + h >= target;
        let hs = if hit { target - t } else { h };
        if hs < spec.min_step && !hit {
            traj.diagnostics.failure = Some(Error::StepUnderflow { t, h: hs });
            return traj;
        }
        for s in 1..7 {
            stage.copy_from(&y);
            for (j, kj) in k.iter().enumerate().take(s) {
                let a = A[s][j];
                if a != 0.0 {
                    stage.zip_apply(kj, |x, v| *x += v * (hs * a));
                }
            }
            gen.apply_hermitian_into(&stage, &mut k[s], &mut work);
        }
        // last stage input is the 5th order solution
        y5.copy_from(&stage);
        let mut err = 0.0f64;
        for idx in 0..n * n {
            let mut e = Complex64::new(0.0, 0.0);
            for s in 0..7 {
                e += k[s][idx] * (B5[s] - B4[s]);
            }
            let scale = spec.abs_tol + spec.rel_tol * y[idx].norm().max(y5[idx].norm());
            err = err.max((e * hs).norm() / scale);
        }
        if !err.is_finite() {
            traj.diagnostics.failure = Some(Error::NonConvergence(format!("non-finite error estimate at t = {t}")));
            return traj;
        }
        if err <= 1.0 {
            t = if hit { target } else { t + hs };
            std::mem::swap(&mut y, &mut y5);
            hermitize(&mut y);
            gen.apply_hermitian_into(&y, &mut k[0], &mut work);
            traj.diagnostics.accepted_steps += 1;
            if hit {
                while next_rec < records.len() && records[next_rec] <= t {
                    if !record(t, &y, &mut traj) {
                        return traj;
                    }
                    next_rec += 1;
                }
            }
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if !hit || hs >= h {
                h *= fac;
            }
        } else {
            traj.diagnostics.rejected_steps += 1;
            h = hs * (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
            if h < spec.min_step {
                traj.diagnostics.failure = Some(Error::StepUnderflow { t, h });
                return traj;
            }
        }
    }
    traj
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SteadyStateMethod {
    NullSpace,
    /// Integrate from vacuum until ‖dρ/dt‖ < `tol`.
    LongTime { t_max: f64, tol: f64 },
}

/// Residual bound for the direct solve, relative to ‖L‖.
const NULL_SPACE_RESIDUAL: f64 = 1e-9;

pub fn steady_state(h: &ModeOperator, channels: &[LindbladChannel], method: SteadyStateMethod) -> Result<QuantumState> {
    let gen = Generator::new(h, channels)?;
    match method {
        SteadyStateMethod::NullSpace => steady_state_null_space(&gen),
        SteadyStateMethod::LongTime { t_max, tol } => steady_state_long_time(&gen, t_max, tol),
    }
}

pub fn steady_state_null_space(gen: &Generator) -> Result<QuantumState> {
    let n = gen.dim();
    let nn = n * n;
    let triplets = gen.superoperator_triplets();
    let scale = triplets.iter().map(|t| t.2.norm()).fold(0.0, f64::max).max(1.0);
    let mut sys: Vec<Triplet<usize, usize, Complex64>> = triplets
        .iter()
        .filter(|t| t.0 != 0)
        .map(|&(r, c, v)| Triplet::new(r, c, v))
        .collect();
    for k in 0..n {
        sys.push(Triplet::new(0, k * (n + 1), Complex64::new(scale, 0.0)));
    }
    let degenerate = |residual: f64| Error::DegenerateNullSpace { residual };
    let mat = SparseColMat::<usize, Complex64>::try_new_from_triplets(nn, nn, &sys)
        .map_err(|e| Error::Singular(format!("{e:?}")))?;
    let lu = mat.sp_lu().map_err(|_| degenerate(f64::INFINITY))?;
    let mut rhs = faer::Mat::<Complex64>::zeros(nn, 1);
    rhs[(0, 0)] = Complex64::new(scale, 0.0);
    lu.solve_in_place(rhs.as_mut());
    let x: Vec<Complex64> = (0..nn).map(|i| rhs[(i, 0)]).collect();
    if x.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(degenerate(f64::INFINITY));
    }
    let mut lx = vec![Complex64::new(0.0, 0.0); nn];
    for &(r, c, v) in &triplets {
        lx[r] += v * x[c];
    }
    let xmax = x.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let residual = lx.iter().map(|v| v.norm()).fold(0.0, f64::max) / (scale * xmax.max(1e-300));
    if !(residual <= NULL_SPACE_RESIDUAL) {
        return Err(degenerate(residual));
    }
    let mut rho = DMatrix::from_fn(n, n, |i, j| x[i + j * n]);
    hermitize(&mut rho);
    let tr = trace(&rho).re;
    rho.unscale_mut(tr);
    Ok(QuantumState::density_unchecked(gen.config().clone(), rho))
}

pub fn steady_state_long_time(gen: &Generator, t_max: f64, tol: f64) -> Result<QuantumState> {
    let n = gen.dim();
    let mut rho = QuantumState::vacuum(gen.config()).to_density_matrix();
    let chunk = 10.0f64.min(t_max);
    let mut t = 0.0;
    let mut spec = EvolutionSpec::new(chunk, vec![chunk]);
    spec.trace_drift_bound = 1e-6;
    while t < t_max {
        let traj = evolve_with(gen, rho, &spec).into_result()?;
        rho = traj.states.last().expect("record at chunk end").to_density_matrix();
        t += chunk;
        let d = gen.apply(&rho);
        if max_abs(&d) < tol {
            let tr = trace(&rho).re;
            rho.unscale_mut(tr);
            return Ok(QuantumState::density_unchecked(gen.config().clone(), rho));
        }
        debug_assert_eq!(rho.nrows(), n);
    }
    Err(Error::NonConvergence(format!("stationary drift still above {tol:e} at t = {t}")))
}

/// The nine-ket weak-drive basis, occupations of (a, b̄, d).
pub const NINE_KETS: [[usize; 3]; 9] = [
    [0, 0, 0],
    [0, 1, 0],
    [1, 0, 1],
    [0, 1, 2],
    [0, 2, 0],
    [1, 1, 1],
    [2, 0, 2],
    [0, 2, 2],
    [2, 0, 0],
];

/// Amplitudes c₀..c₈ on `NINE_KETS` with c₀ = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct QuasiSteadyAmplitudes {
    pub kets: Vec<[usize; 3]>,
    pub amplitudes: Vec<Complex64>,
}

impl QuasiSteadyAmplitudes {
    pub fn get(&self, i: usize) -> Complex64 {
        self.amplitudes[i]
    }
}

fn ket_indices(config: &FockConfig) -> Result<Vec<usize>> {
    let modes: Vec<usize> = NORMAL_LABELS.iter().map(|l| config.mode_index(l)).collect::<Result<_>>()?;
    NINE_KETS
        .iter()
        .map(|ket| {
            let mut occ = vec![0; config.n_modes()];
            for (m, &n) in modes.iter().zip(ket) {
                occ[*m] = n;
            }
            config.index_of(&occ)
        })
        .collect()
}

/// Solves H_eff|ψ⟩ = 0 projected on the nine kets with the vacuum
/// amplitude pinned to 1.
pub fn quasi_steady_amplitudes(h_eff: &ModeOperator) -> Result<QuasiSteadyAmplitudes> {
    let idx = ket_indices(h_eff.config())?;
    let m = h_eff.matrix();
    let a = DMatrix::from_fn(8, 8, |i, j| m.get(idx[i + 1], idx[j + 1]));
    let rhs = DVector::from_fn(8, |i, _| -m.get(idx[i + 1], idx[0]));
    let x = solve_dense(a, rhs)?;
    let mut amplitudes = vec![ONE];
    amplitudes.extend(x.iter().copied());
    Ok(QuasiSteadyAmplitudes {
        kets: NINE_KETS.to_vec(),
        amplitudes,
    })
}

/// Builds the no-jump generator on a minimal (3,3,3) space and solves it.
pub fn quasi_steady_from_params(p: &SystemParams, approx: Approximation) -> Result<QuasiSteadyAmplitudes> {
    let nm = p.normal_modes()?;
    let config = Arc::new(FockConfig::uniform(&NORMAL_LABELS, 3)?);
    quasi_steady_amplitudes(&effective_hamiltonian(p, &nm, &config, approx)?)
}

/// Same closure on the whole truncated space: vacuum amplitude pinned,
/// vacuum row dropped. Returns the normalized pure state.
pub fn quasi_steady_state(h_eff: &ModeOperator) -> Result<QuantumState> {
    let config = h_eff.config().clone();
    let n = config.total_dim();
    let vac = config.index_of(&vec![0; config.n_modes()])?;
    let rest: Vec<usize> = (0..n).filter(|&i| i != vac).collect();
    let m = h_eff.matrix();
    let a = DMatrix::from_fn(n - 1, n - 1, |i, j| m.get(rest[i], rest[j]));
    let rhs = DVector::from_fn(n - 1, |i, _| -m.get(rest[i], vac));
    let x = solve_dense(a, rhs)?;
    let mut psi = DVector::zeros(n);
    psi[vac] = ONE;
    for (k, &i) in rest.iter().enumerate() {
        psi[i] = x[k];
    }
    QuantumState::pure_normalized(config, psi)
}

fn solve_dense(a: DMatrix<Complex64>, rhs: DVector<Complex64>) -> Result<DVector<Complex64>> {
    let x = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("weak-drive amplitude system".into()))?;
    if x.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::Singular("non-finite amplitudes".into()));
    }
    Ok(x)
}
