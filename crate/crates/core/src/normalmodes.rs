//! Diagonalization of the driven bilinear b–c Hamiltonian
//!
//! `H_bc = Δ_b b†b + ω_m c†c − G₀ (b + b†)(c + c†)`
//!
//! in closed form. After rescaling the mechanical quadratures by
//! `√(ω_m/Δ_b)` the problem reduces to a rotation by the mixing angle θ with
//! `tan 2θ = r tan 2φ`, `tan φ = η = ω_m/Δ_b`, `r = 2G₀/√(ω_m Δ_b)`.
//!
//! Coefficient vectors are real and always ordered as `(b, b†, c, c†)` for
//! the forward map and `(d₊, d₊†, d₋, d₋†)` for the inverse map.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fockspace::{ladder_by_label, FockConfig, ModeOperator};

/// Which flavour of normal-mode quantities downstream builders use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Approximation {
    /// Closed-form ξ±, mixing angle and transformed operators.
    #[default]
    Exact,
    /// Leading order in η: δ = r²ω_mη/2, ω₋ = ω_m ζ, g_nl = g₀/√ζ.
    FirstOrder,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BilinearParams {
    pub delta_b: f64,
    pub omega_m: f64,
    /// Pump-enhanced linear coupling G₀ (real, ≥ 0).
    pub g_lin: f64,
}

impl BilinearParams {
    pub fn new(delta_b: f64, omega_m: f64, g_lin: f64) -> Result<Self> {
        if !(delta_b > 0.0) || !(omega_m > 0.0) {
            return Err(Error::InvalidParams(format!(
                "need delta_b > 0 and omega_m > 0 (got {delta_b}, {omega_m})"
            )));
        }
        if !(g_lin >= 0.0) {
            return Err(Error::InvalidParams(format!("G0 must be >= 0, got {g_lin}")));
        }
        Ok(Self {
            delta_b,
            omega_m,
            g_lin,
        })
    }

    /// Parameters from the rescaled drive amplitude `r`.
    pub fn from_drive(delta_b: f64, omega_m: f64, r: f64) -> Result<Self> {
        if !(r >= 0.0) {
            return Err(Error::InvalidParams(format!("r must be >= 0, got {r}")));
        }
        Self::new(delta_b, omega_m, 0.5 * r * (omega_m * delta_b).sqrt())
    }

    pub fn r(&self) -> f64 {
        2.0 * self.g_lin / (self.omega_m * self.delta_b).sqrt()
    }

    pub fn eta(&self) -> f64 {
        self.omega_m / self.delta_b
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalModeData {
    pub delta_b: f64,
    pub omega_m: f64,
    pub r: f64,
    pub eta: f64,
    pub phi: f64,
    pub theta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub xi_plus: f64,
    /// May be negative: r > 1 gives an imaginary lower-branch frequency.
    pub xi_minus_sq: f64,
    /// NaN when unstable.
    pub xi_minus: f64,
    pub xi_plus_firstorder: f64,
    pub xi_minus_firstorder: f64,
    pub omega_plus: f64,
    pub omega_minus: f64,
    /// √(1 − r²); NaN when unstable.
    pub zeta: f64,
    /// δ = r²ω_mη/2.
    pub delta_shift: f64,
    pub unstable: bool,
    pub coeffs_dplus: [f64; 4],
    pub coeffs_dminus: [f64; 4],
}

impl NormalModeData {
    /// Exact upper-branch shift ω₊ − Δ_b.
    pub fn delta_shift_exact(&self) -> f64 {
        self.omega_plus - self.delta_b
    }

    /// ξ₋/η, the exact counterpart of ζ (equals ω₋/ω_m).
    pub fn zeta_dressed(&self) -> f64 {
        self.xi_minus / self.eta
    }

    pub fn omega_bbar(&self, approx: Approximation) -> f64 {
        match approx {
            Approximation::Exact => self.omega_plus,
            Approximation::FirstOrder => self.delta_b + self.delta_shift,
        }
    }

    pub fn omega_d(&self, approx: Approximation) -> f64 {
        match approx {
            Approximation::Exact => self.omega_minus,
            Approximation::FirstOrder => self.omega_m * self.zeta,
        }
    }

    /// Off-diagonal element of the rotated rescaled quadratic form
    /// `[[1, rη], [rη, η²]]`, zero at the correct mixing angle.
    pub fn mixing_residual(&self) -> f64 {
        let (a, b) = (self.alpha, self.beta);
        self.r * self.eta * (a * a - b * b) - (1.0 - self.eta * self.eta) * a * b
    }

    pub fn check_stable(&self) -> Result<()> {
        if self.unstable || !(self.zeta > 0.0) {
            if self.r >= 1.0 {
                return Err(Error::Unstable { r: self.r });
            }
            return Err(Error::ZetaZero);
        }
        Ok(())
    }
}

/// Closed-form normal modes.
///
/// `r ≥ 1` never fails: `xi_minus_sq ≤ 0` is reported and `unstable` set.
pub fn diagonalize(p: &BilinearParams) -> NormalModeData {
    let eta = p.eta();
    let r = p.r();
    let eta2 = eta * eta;
    let phi = eta.atan();
    let theta = 0.5 * (r * (2.0 * phi).sin()).atan2((2.0 * phi).cos());
    let (alpha, beta) = (theta.cos(), theta.sin());

    // s = √(cos²2φ + r² sin²2φ) written in η; 1 − s is formed without
    // cancellation so that r = 1 gives ξ₋ = 0 exactly.
    let s = ((1.0 - eta2).powi(2) + 4.0 * r * r * eta2).sqrt() / (1.0 + eta2);
    let zeta_sq = 1.0 - r * r;
    let xi_plus_sq = 0.5 * (1.0 + eta2) * (1.0 + s);
    let xi_minus_sq = 2.0 * eta2 * zeta_sq / ((1.0 + eta2) * (1.0 + s));
    let unstable = r >= 1.0;
    let xi_plus = xi_plus_sq.sqrt();
    let xi_minus = if xi_minus_sq >= 0.0 { xi_minus_sq.sqrt() } else { f64::NAN };
    let zeta = if zeta_sq >= 0.0 { zeta_sq.sqrt() } else { f64::NAN };

    let sp = xi_plus.sqrt();
    let sm = xi_minus.sqrt();
    let se = eta.sqrt();
    let coeffs_dplus = [
        alpha * (sp / 2.0 + 1.0 / (2.0 * sp)),
        alpha * (sp / 2.0 - 1.0 / (2.0 * sp)),
        -beta * (sp / (2.0 * se) + se / (2.0 * sp)),
        -beta * (sp / (2.0 * se) - se / (2.0 * sp)),
    ];
    let coeffs_dminus = [
        beta * (sm / 2.0 + 1.0 / (2.0 * sm)),
        beta * (sm / 2.0 - 1.0 / (2.0 * sm)),
        alpha * (sm / (2.0 * se) + se / (2.0 * sm)),
        alpha * (sm / (2.0 * se) - se / (2.0 * sm)),
    ];

    NormalModeData {
        delta_b: p.delta_b,
        omega_m: p.omega_m,
        r,
        eta,
        phi,
        theta,
        alpha,
        beta,
        xi_plus,
        xi_minus_sq,
        xi_minus,
        xi_plus_firstorder: 1.0 + r * r * eta2 / 2.0,
        xi_minus_firstorder: zeta * eta,
        omega_plus: p.delta_b * xi_plus,
        omega_minus: p.delta_b * xi_minus,
        zeta,
        delta_shift: r * r * p.omega_m * eta / 2.0,
        unstable,
        coeffs_dplus,
        coeffs_dminus,
    }
}

/// `b` and `c` expressed in `(d₊, d₊†, d₋, d₋†)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseTransform {
    pub b: [f64; 4],
    pub c: [f64; 4],
}

impl InverseTransform {
    /// Coefficients of `(d₊ + d₊†)` and `(d₋ + d₋†)` in `c + c†`.
    pub fn c_quadrature(&self) -> (f64, f64) {
        (self.c[0] + self.c[1], self.c[2] + self.c[3])
    }
}

pub fn inverse_transform(nm: &NormalModeData) -> InverseTransform {
    let (a, b) = (nm.alpha, nm.beta);
    let sp = nm.xi_plus.sqrt();
    let sm = nm.xi_minus.sqrt();
    let se = nm.eta.sqrt();
    InverseTransform {
        b: [
            a / 2.0 * (1.0 / sp + sp),
            a / 2.0 * (1.0 / sp - sp),
            b / 2.0 * (1.0 / sm + sm),
            b / 2.0 * (1.0 / sm - sm),
        ],
        c: [
            -b / 2.0 * (se / sp + sp / se),
            -b / 2.0 * (se / sp - sp / se),
            a / 2.0 * (se / sm + sm / se),
            a / 2.0 * (se / sm - sm / se),
        ],
    }
}

/// Leading-order forms of `b̄` and `d` in `(b, b†, c, c†)`.
///
/// The `d` expansion carries `(r/2)√(η/ζ)(b − b†)`, the form that follows
/// from expanding the exact coefficients.
pub fn first_order_coefficients(nm: &NormalModeData) -> ([f64; 4], [f64; 4]) {
    let (r, eta, z) = (nm.r, nm.eta, nm.zeta);
    let k = r / 2.0 * eta.sqrt();
    let bbar = [1.0, 0.0, -k, -k];
    let m = r / 2.0 * (eta / z).sqrt();
    let d = [m, -m, z.sqrt() / 2.0 + 0.5 / z.sqrt(), z.sqrt() / 2.0 - 0.5 / z.sqrt()];
    (bbar, d)
}

/// `[d_u, d_v†]` for `d_u = u₀x + u₁x† + u₂y + u₃y†` with real coefficients.
pub fn symplectic_inner(u: &[f64; 4], v: &[f64; 4]) -> f64 {
    u[0] * v[0] - u[1] * v[1] + u[2] * v[2] - u[3] * v[3]
}

/// `[d_u, d_v]` for real coefficient vectors.
pub fn symplectic_cross(u: &[f64; 4], v: &[f64; 4]) -> f64 {
    u[0] * v[1] - u[1] * v[0] + u[2] * v[3] - u[3] * v[2]
}

/// Full 4×4 forward map rows `(d₊, d₊†, d₋, d₋†)` over columns `(b, b†, c, c†)`.
pub fn forward_matrix(nm: &NormalModeData) -> [[f64; 4]; 4] {
    let p = nm.coeffs_dplus;
    let m = nm.coeffs_dminus;
    [p, [p[1], p[0], p[3], p[2]], m, [m[1], m[0], m[3], m[2]]]
}

/// Full 4×4 inverse map rows `(b, b†, c, c†)` over columns `(d₊, d₊†, d₋, d₋†)`.
pub fn inverse_matrix(inv: &InverseTransform) -> [[f64; 4]; 4] {
    let b = inv.b;
    let c = inv.c;
    [b, [b[1], b[0], b[3], b[2]], c, [c[1], c[0], c[3], c[2]]]
}

/// `d₊` and `d₋` as operators on a lab-basis space containing modes `b`, `c`.
pub fn normal_mode_operators(
    nm: &NormalModeData,
    config: &Arc<FockConfig>,
) -> Result<(ModeOperator, ModeOperator)> {
    let b = ladder_by_label(config, "b")?;
    let c = ladder_by_label(config, "c")?;
    let basis = [b.clone(), b.dag(), c.clone(), c.dag()];
    let build = |coeffs: &[f64; 4]| {
        basis
            .iter()
            .zip(coeffs)
            .fold(ModeOperator::zero(config), |acc, (op, &k)| {
                &acc + &op.scaled(Complex64::new(k, 0.0))
            })
    };
    Ok((build(&nm.coeffs_dplus), build(&nm.coeffs_dminus)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nm(eta: f64, r: f64) -> NormalModeData {
        diagonalize(&BilinearParams::from_drive(1000.0, 1000.0 * eta, r).unwrap())
    }

    #[test]
    fn decoupled_limit() {
        let d = nm(0.1, 0.0);
        assert_eq!(d.theta, 0.0);
        assert!((d.xi_plus - 1.0).abs() < 1e-15);
        assert!((d.xi_minus - 0.1).abs() < 1e-15);
        // d₋ reduces to c, d₊ to b
        let expect_p = [1.0, 0.0, 0.0, 0.0];
        let expect_m = [0.0, 0.0, 1.0, 0.0];
        for k in 0..4 {
            assert!((d.coeffs_dplus[k] - expect_p[k]).abs() < 1e-14);
            assert!((d.coeffs_dminus[k] - expect_m[k]).abs() < 1e-14);
        }
        let inv = inverse_transform(&d);
        assert!((inv.b[0] - 1.0).abs() < 1e-14);
        assert!(inv.b[1..].iter().all(|x| x.abs() < 1e-14));
    }

    #[test]
    fn instability_threshold() {
        let at = nm(0.05, 1.0);
        assert_eq!(at.xi_minus_sq, 0.0);
        assert_eq!(at.xi_minus, 0.0);
        assert!(at.unstable);
        let past = nm(0.05, 1.01);
        assert!(past.xi_minus_sq < 0.0);
        assert!(past.xi_minus.is_nan());
        assert!(matches!(past.check_stable(), Err(Error::Unstable { .. })));
        assert!(nm(0.05, 0.99).check_stable().is_ok());
    }

    #[test]
    fn mixing_condition_holds() {
        for &(eta, r) in &[(0.001, 0.3), (0.05, 0.9), (0.2, 0.999), (0.1, 0.0)] {
            let d = nm(eta, r);
            assert!(((2.0 * d.theta).tan() - r * (2.0 * d.phi).tan()).abs() < 1e-12);
            assert!(d.mixing_residual().abs() < 1e-14);
            assert!(d.theta >= 0.0 && d.theta <= std::f64::consts::FRAC_PI_4);
        }
    }

    #[test]
    fn closed_form_matches_alpha_beta_form() {
        for &(eta, r) in &[(0.01, 0.5), (0.15, 0.95)] {
            let d = nm(eta, r);
            let (a, b) = (d.alpha, d.beta);
            let k = 2.0 * r * eta;
            let xp2 = a * a + eta * eta * b * b + k * a * b;
            let xm2 = b * b + eta * eta * a * a - k * a * b;
            assert!((xp2 - d.xi_plus.powi(2)).abs() < 1e-12);
            assert!((xm2 - d.xi_minus_sq).abs() < 1e-12);
        }
    }

    #[test]
    fn operator_coefficients_are_canonical() {
        for &(eta, r) in &[(0.01, 0.9), (0.2, 0.5), (0.003, 0.999)] {
            let d = nm(eta, r);
            assert!((symplectic_inner(&d.coeffs_dplus, &d.coeffs_dplus) - 1.0).abs() < 1e-12);
            assert!((symplectic_inner(&d.coeffs_dminus, &d.coeffs_dminus) - 1.0).abs() < 1e-12);
            assert!(symplectic_inner(&d.coeffs_dplus, &d.coeffs_dminus).abs() < 1e-12);
            assert!(symplectic_cross(&d.coeffs_dplus, &d.coeffs_dminus).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_round_trip() {
        let d = nm(0.07, 0.8);
        let f = forward_matrix(&d);
        let g = inverse_matrix(&inverse_transform(&d));
        for i in 0..4 {
            for j in 0..4 {
                let prod: f64 = (0..4).map(|k| g[i][k] * f[k][j]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((prod - want).abs() < 1e-12, "({i},{j}) = {prod}");
            }
        }
    }

    #[test]
    fn c_quadrature_coefficient_grows_near_threshold() {
        let a = inverse_transform(&nm(0.01, 0.99)).c_quadrature().1;
        let b = inverse_transform(&nm(0.01, 0.999)).c_quadrature().1;
        let c = inverse_transform(&nm(0.01, 0.9999)).c_quadrature().1;
        assert!(a < b && b < c);
        // ≈ 1/√ζ
        let d = nm(0.01, 0.999);
        assert!((b * d.zeta.sqrt() - 1.0).abs() < 0.01);
    }

    #[test]
    fn first_order_coefficients_close_for_small_eta() {
        let d = nm(0.01, 0.9);
        let (bbar, dd) = first_order_coefficients(&d);
        for k in 0..4 {
            assert!((bbar[k] - d.coeffs_dplus[k]).abs() < 0.05 * d.eta.sqrt().max(d.eta), "bbar {k}");
            assert!((dd[k] - d.coeffs_dminus[k]).abs() < 2.0 * d.eta, "d {k}");
        }
    }

    #[test]
    fn operators_on_lab_space() {
        let d = nm(0.1, 0.6);
        let config = Arc::new(FockConfig::new(&[2, 5, 5], &["a", "b", "c"]).unwrap());
        let (dp, dm) = normal_mode_operators(&d, &config).unwrap();
        // [d₊, d₋] vanishes exactly away from the truncation edge
        let comm = dp.commutator(&dm).unwrap();
        let vac = config.index_of(&[0, 0, 0]).unwrap();
        for j in 0..config.total_dim() {
            assert!(comm.matrix().get(j, vac).norm() < 1e-12);
        }
        let missing = Arc::new(FockConfig::new(&[2, 2], &["a", "b"]).unwrap());
        assert!(normal_mode_operators(&d, &missing).is_err());
    }
}
