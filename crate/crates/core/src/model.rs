//! Hamiltonians, dissipators, rates and the stability chain of the
//! two-cavity optomechanical system.
//!
//! Lab-basis builders expect modes labelled `a`, `b`, `c`; normal-basis
//! builders expect `a`, `bbar`, `d` and optionally `f` for the explicit
//! cooling cavity.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fockspace::{ladder_by_label, FockConfig, ModeOperator};
use crate::normalmodes::{diagonalize, inverse_transform, Approximation, BilinearParams, NormalModeData};

pub const LAB_LABELS: [&str; 3] = ["a", "b", "c"];
pub const NORMAL_LABELS: [&str; 3] = ["a", "bbar", "d"];
pub const NORMAL_LABELS_WITH_F: [&str; 4] = ["a", "bbar", "d", "f"];

/// Physical parameters. Rates are in arbitrary but common units (κ = 1 in
/// every shipped config).
#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    pub delta_b: f64,
    pub omega_m: f64,
    pub g0: f64,
    /// Rescaled drive amplitude; G₀ = r√(ω_m Δ_b)/2.
    pub r: f64,
    pub kappa: f64,
    pub gamma_m: f64,
    pub n_th: f64,
    pub alpha_e: f64,
    pub probe_strength: f64,
    /// Overrides the resonance value Δ_a = ω₊ − ω₋.
    pub delta_a: Option<f64>,
    /// Overrides the probe frequency ω_p = ω₊ − g.
    pub probe_freq: Option<f64>,
    /// Photon tunnelling rate; carried along, never evolved.
    pub tunneling_j: f64,
    /// Imposed (γ↓, γ↑) on d, replacing the κ- and γ_m-derived d rates.
    pub imposed_d_rates: Option<(f64, f64)>,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            delta_b: 1.0e4,
            omega_m: 100.0,
            g0: 1.0,
            r: 0.0,
            kappa: 1.0,
            gamma_m: 0.0,
            n_th: 0.0,
            alpha_e: 0.0,
            probe_strength: 0.02,
            delta_a: None,
            probe_freq: None,
            tunneling_j: 0.0,
            imposed_d_rates: None,
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Err(Error::InvalidParams(format!("{what} = {v}")));
        if !(self.kappa > 0.0) {
            return bad("kappa must be > 0, got", self.kappa);
        }
        if !(self.omega_m > 0.0) {
            return bad("omega_m must be > 0, got", self.omega_m);
        }
        if !(self.delta_b > 0.0) {
            return bad("delta_b must be > 0, got", self.delta_b);
        }
        for (name, v) in [
            ("g0", self.g0),
            ("r", self.r),
            ("gamma_m", self.gamma_m),
            ("n_th", self.n_th),
            ("alpha_e", self.alpha_e),
            ("probe_strength", self.probe_strength),
            ("tunneling_j", self.tunneling_j),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(&format!("{name} must be finite and >= 0, got"), v);
            }
        }
        if let Some((down, up)) = self.imposed_d_rates {
            if !(down >= 0.0 && up >= 0.0) {
                return Err(Error::InvalidParams(format!("imposed d rates must be >= 0, got ({down}, {up})")));
            }
        }
        Ok(())
    }

    /// Sets r from ζ = √(1 − r²).
    pub fn with_zeta(mut self, zeta: f64) -> Self {
        self.r = (1.0 - zeta * zeta).max(0.0).sqrt();
        self
    }

    pub fn eta(&self) -> f64 {
        self.omega_m / self.delta_b
    }

    /// √(1 − r²); NaN past the instability.
    pub fn zeta(&self) -> f64 {
        (1.0 - self.r * self.r).sqrt()
    }

    pub fn g_lin(&self) -> f64 {
        0.5 * self.r * (self.omega_m * self.delta_b).sqrt()
    }

    /// g₀/√ζ.
    pub fn g_nl(&self) -> f64 {
        self.g0 / self.zeta().sqrt()
    }

    /// P = g₀²ω_m/κ³.
    pub fn figure_of_merit(&self) -> f64 {
        self.g0 * self.g0 * self.omega_m / self.kappa.powi(3)
    }

    pub fn bilinear(&self) -> Result<BilinearParams> {
        BilinearParams::from_drive(self.delta_b, self.omega_m, self.r)
    }

    pub fn normal_modes(&self) -> Result<NormalModeData> {
        self.validate()?;
        Ok(diagonalize(&self.bilinear()?))
    }
}

/// Enables each family of nonlinear terms in the normal-mode Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TermFlags {
    /// b̄†ad + a†b̄d†
    pub resonant: bool,
    /// a†b̄d + b̄†ad†
    pub counter_resonant: bool,
    /// a†dd + h.c.
    pub pair_creation: bool,
    /// add + h.c.
    pub pair_annihilation: bool,
    /// (a + a†)d†d
    pub dispersive: bool,
}

impl TermFlags {
    pub fn all() -> Self {
        Self {
            resonant: true,
            counter_resonant: true,
            pair_creation: true,
            pair_annihilation: true,
            dispersive: true,
        }
    }

    pub fn none() -> Self {
        Self {
            resonant: false,
            counter_resonant: false,
            pair_creation: false,
            pair_annihilation: false,
            dispersive: false,
        }
    }

    pub fn resonant_only() -> Self {
        Self {
            resonant: true,
            ..Self::none()
        }
    }

    /// The two families that survive in the probe rotating frame.
    pub fn probe_frame() -> Self {
        Self {
            resonant: true,
            counter_resonant: true,
            ..Self::none()
        }
    }
}

impl Default for TermFlags {
    fn default() -> Self {
        Self::all()
    }
}

/// Coefficients of the five nonlinear families, in `TermFlags` order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonlinearCoefficients {
    pub resonant: f64,
    pub counter_resonant: f64,
    pub pair_creation: f64,
    pub pair_annihilation: f64,
    pub dispersive: f64,
}

pub fn nonlinear_coefficients(
    p: &SystemParams,
    nm: &NormalModeData,
    approx: Approximation,
) -> Result<NonlinearCoefficients> {
    nm.check_stable()?;
    Ok(match approx {
        Approximation::Exact => {
            let inv = inverse_transform(nm);
            let [bp, _, bm, bmp] = inv.b;
            let (cp, cm) = inv.c_quadrature();
            let g0 = p.g0;
            NonlinearCoefficients {
                resonant: -g0 * (bp * cm + bmp * cp),
                counter_resonant: -g0 * (bp * cm + bm * cp),
                pair_creation: -g0 * cm * bm,
                pair_annihilation: -g0 * cm * bmp,
                dispersive: -g0 * cm * (bm + bmp),
            }
        }
        Approximation::FirstOrder => {
            let g = p.g0 / nm.zeta.sqrt();
            let side = g * (nm.eta / (4.0 * nm.zeta)).sqrt();
            NonlinearCoefficients {
                resonant: -g,
                counter_resonant: -g,
                pair_creation: -side,
                pair_annihilation: -side,
                dispersive: -2.0 * side,
            }
        }
    })
}

/// Frequencies of the normal-basis Hamiltonian under a given approximation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frequencies {
    pub delta_a: f64,
    pub omega_bbar: f64,
    pub omega_d: f64,
    /// |resonant coupling|, the one-excitation half splitting.
    pub coupling: f64,
    pub probe: f64,
}

pub fn frequencies(p: &SystemParams, nm: &NormalModeData, approx: Approximation) -> Result<Frequencies> {
    let k = nonlinear_coefficients(p, nm, approx)?;
    let omega_bbar = nm.omega_bbar(approx);
    let omega_d = nm.omega_d(approx);
    let coupling = k.resonant.abs();
    Ok(Frequencies {
        delta_a: p.delta_a.unwrap_or(omega_bbar - omega_d),
        omega_bbar,
        omega_d,
        coupling,
        probe: p.probe_freq.unwrap_or(omega_bbar - coupling),
    })
}

fn op(config: &Arc<FockConfig>, label: &str) -> Result<ModeOperator> {
    ladder_by_label(config, label)
}

/// Δ_a a†a + Δ_b b†b + ω_m c†c − G₀(b+b†)(c+c†) − g₀(a†b + b†a)(c+c†).
pub fn hamiltonian_lab(p: &SystemParams, config: &Arc<FockConfig>) -> Result<ModeOperator> {
    p.validate()?;
    let a = op(config, "a")?;
    let b = op(config, "b")?;
    let c = op(config, "c")?;
    let delta_a = match p.delta_a {
        Some(v) => v,
        None => {
            let nm = p.normal_modes()?;
            nm.check_stable()?;
            nm.omega_plus - nm.omega_minus
        }
    };
    let (ad, bd, cd) = (a.dag(), b.dag(), c.dag());
    let xb = &b + &bd;
    let xc = &c + &cd;
    let hop = &(&ad * &b) + &(&bd * &a);
    Ok(&(&(&(delta_a * &(&ad * &a)) + &(p.delta_b * &(&bd * &b))) + &(p.omega_m * &(&cd * &c)))
        - &(&(p.g_lin() * &(&xb * &xc)) + &(p.g0 * &(&hop * &xc))))
}

/// Normal-basis Hamiltonian in the pump frame: H₀ plus the selected
/// nonlinear families.
pub fn hamiltonian_normal(
    p: &SystemParams,
    nm: &NormalModeData,
    config: &Arc<FockConfig>,
    flags: TermFlags,
    approx: Approximation,
) -> Result<ModeOperator> {
    let f = frequencies(p, nm, approx)?;
    let k = nonlinear_coefficients(p, nm, approx)?;
    let a = op(config, "a")?;
    let b = op(config, "bbar")?;
    let d = op(config, "d")?;
    let (ad, bd, dd) = (a.dag(), b.dag(), d.dag());
    let mut h = &(&(f.delta_a * &(&ad * &a)) + &(f.omega_bbar * &(&bd * &b))) + &(f.omega_d * &(&dd * &d));
    let mut add = |on: bool, coef: f64, term: ModeOperator| {
        if on {
            h = &h + &(coef * &(&term + &term.dag()));
        }
    };
    add(flags.resonant, k.resonant, &(&bd * &a) * &d);
    add(flags.counter_resonant, k.counter_resonant, &(&ad * &b) * &d);
    add(flags.pair_creation, k.pair_creation, &(&ad * &d) * &d);
    add(flags.pair_annihilation, k.pair_annihilation, &(&a * &d) * &d);
    if flags.dispersive {
        h = &h + &(k.dispersive * &(&(&a + &ad) * &(&dd * &d)));
    }
    Ok(h)
}

/// Hermitian Hamiltonian in the frame rotating at the probe frequency on
/// a and b̄, with the coherent probe iβ(b̄† − b̄). Only the two
/// excitation-conserving families are time independent here.
pub fn probe_frame_hamiltonian(
    p: &SystemParams,
    nm: &NormalModeData,
    config: &Arc<FockConfig>,
    approx: Approximation,
) -> Result<ModeOperator> {
    let f = frequencies(p, nm, approx)?;
    let k = nonlinear_coefficients(p, nm, approx)?;
    let a = op(config, "a")?;
    let b = op(config, "bbar")?;
    let d = op(config, "d")?;
    let (ad, bd, dd) = (a.dag(), b.dag(), d.dag());
    let diag = &(&((f.delta_a - f.probe) * &(&ad * &a)) + &((f.omega_bbar - f.probe) * &(&bd * &b)))
        + &(f.omega_d * &(&dd * &d));
    let t1 = &(&bd * &a) * &d;
    let t2 = &(&ad * &b) * &d;
    let nonlinear = &(k.resonant * &(&t1 + &t1.dag())) + &(k.counter_resonant * &(&t2 + &t2.dag()));
    let probe = Complex64::new(0.0, p.probe_strength) * &(&bd - &b);
    Ok(&(&diag + &nonlinear) + &probe)
}

/// Non-Hermitian generator for the no-jump evolution: the probe-frame
/// Hamiltonian minus i/2 times the optical loss on a and b̄.
pub fn effective_hamiltonian(
    p: &SystemParams,
    nm: &NormalModeData,
    config: &Arc<FockConfig>,
    approx: Approximation,
) -> Result<ModeOperator> {
    let h = probe_frame_hamiltonian(p, nm, config, approx)?;
    let mut out = h;
    for ch in optical_channels(p, nm, config, approx)? {
        let jj = &ch.jump.dag() * &ch.jump;
        out = &out + &(Complex64::new(0.0, -0.5 * ch.rate) * &jj);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct LindbladChannel {
    pub jump: ModeOperator,
    pub rate: f64,
    pub label: String,
}

impl LindbladChannel {
    pub fn new(jump: ModeOperator, rate: f64, label: impl Into<String>) -> Result<Self> {
        if !(rate >= 0.0) || !rate.is_finite() {
            return Err(Error::InvalidParams(format!("channel rate must be finite and >= 0, got {rate}")));
        }
        Ok(Self {
            jump,
            rate,
            label: label.into(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    Lab,
    Normal,
}

fn push(out: &mut Vec<LindbladChannel>, jump: ModeOperator, rate: f64, label: &str) -> Result<()> {
    if rate > 0.0 {
        out.push(LindbladChannel::new(jump, rate, label)?);
    }
    Ok(())
}

/// Cavity and mechanical loss channels. In the normal basis the b and c
/// jumps are their full linear expansions in b̄, d and adjoints.
pub fn dissipation_channels(
    p: &SystemParams,
    nm: &NormalModeData,
    config: &Arc<FockConfig>,
    basis: Basis,
) -> Result<Vec<LindbladChannel>> {
    p.validate()?;
    let mut out = Vec::new();
    let a = op(config, "a")?;
    let (b, c) = match basis {
        Basis::Lab => (op(config, "b")?, op(config, "c")?),
        Basis::Normal => {
            nm.check_stable()?;
            let bb = op(config, "bbar")?;
            let d = op(config, "d")?;
            let inv = inverse_transform(nm);
            let basis_ops = [bb.clone(), bb.dag(), d.clone(), d.dag()];
            let lin = |k: &[f64; 4]| {
                basis_ops
                    .iter()
                    .zip(k)
                    .fold(ModeOperator::zero(config), |acc, (o, &x)| &acc + &(x * o))
            };
            (lin(&inv.b), lin(&inv.c))
        }
    };
    push(&mut out, a, p.kappa, "kappa a")?;
    push(&mut out, b, p.kappa, "kappa b")?;
    push(&mut out, c.clone(), p.gamma_m * (p.n_th + 1.0), "gamma_m (n_th+1) c")?;
    push(&mut out, c.dag(), p.gamma_m * p.n_th, "gamma_m n_th c+")?;
    Ok(out)
}

/// κ loss of a and of the b̄ component of b, as used in the no-jump
/// generator.
fn optical_channels(
    p: &SystemParams,
    nm: &NormalModeData,
    config: &Arc<FockConfig>,
    approx: Approximation,
) -> Result<Vec<LindbladChannel>> {
    let bp = match approx {
        Approximation::Exact => inverse_transform(nm).b[0],
        Approximation::FirstOrder => 1.0,
    };
    let mut out = Vec::new();
    push(&mut out, op(config, "a")?, p.kappa, "kappa a")?;
    push(&mut out, op(config, "bbar")?, p.kappa * bp * bp, "kappa bbar")?;
    Ok(out)
}

/// Dissipators in the probe frame after the secular approximation: every
/// component of the transformed b and c jumps becomes its own channel with
/// rate γ|coefficient|², cross terms between components are dropped.
pub fn secular_channels(
    p: &SystemParams,
    nm: &NormalModeData,
    config: &Arc<FockConfig>,
    approx: Approximation,
) -> Result<Vec<LindbladChannel>> {
    p.validate()?;
    nm.check_stable()?;
    let bb = op(config, "bbar")?;
    let d = op(config, "d")?;
    let mut out = optical_channels(p, nm, config, approx)?;
    let (kb, kc) = match approx {
        Approximation::Exact => {
            let inv = inverse_transform(nm);
            (inv.b, inv.c)
        }
        Approximation::FirstOrder => {
            let z = nm.zeta;
            let s = (nm.eta / z).sqrt() / 2.0;
            let cu = 0.5 / z.sqrt() + z.sqrt() / 2.0;
            let cv = 0.5 / z.sqrt() - z.sqrt() / 2.0;
            ([1.0, 0.0, s, s], [0.0, 0.0, cu, cv])
        }
    };
    let (up_c, down_c) = (p.gamma_m * p.n_th, p.gamma_m * (p.n_th + 1.0));
    push(&mut out, bb.dag(), p.kappa * kb[1] * kb[1], "kappa bbar+")?;
    push(&mut out, bb.clone(), down_c * kc[0] * kc[0] + up_c * kc[1] * kc[1], "gamma_m bbar")?;
    push(&mut out, bb.dag(), down_c * kc[1] * kc[1] + up_c * kc[0] * kc[0], "gamma_m bbar+")?;
    match p.imposed_d_rates {
        Some((down, up)) => {
            push(&mut out, d.clone(), down, "imposed d")?;
            push(&mut out, d.dag(), up, "imposed d+")?;
        }
        None => {
            push(&mut out, d.clone(), p.kappa * kb[2] * kb[2], "kappa d")?;
            push(&mut out, d.dag(), p.kappa * kb[3] * kb[3], "kappa d+")?;
            push(&mut out, d.clone(), down_c * kc[2] * kc[2] + up_c * kc[3] * kc[3], "gamma_m d")?;
            push(&mut out, d.dag(), down_c * kc[3] * kc[3] + up_c * kc[2] * kc[2], "gamma_m d+")?;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoolingVariant {
    Off,
    /// Single damping channel on d with the adiabatically eliminated rate.
    #[default]
    Effective,
    /// Explicit cooling cavity f with Δ_f = ω_d.
    Explicit,
}

#[derive(Debug, Clone)]
pub struct CoolingTerms {
    pub hamiltonian: Option<ModeOperator>,
    pub channels: Vec<LindbladChannel>,
}

/// Γ = 4(g_nl α_e)²/κ.
pub fn cooling_rate(p: &SystemParams) -> f64 {
    let g = p.g_nl() * p.alpha_e;
    4.0 * g * g / p.kappa
}

pub fn cooling_channel(
    p: &SystemParams,
    nm: &NormalModeData,
    config: &Arc<FockConfig>,
    variant: CoolingVariant,
    approx: Approximation,
) -> Result<CoolingTerms> {
    let none = CoolingTerms {
        hamiltonian: None,
        channels: Vec::new(),
    };
    if variant == CoolingVariant::Off || p.alpha_e == 0.0 {
        return Ok(none);
    }
    nm.check_stable()?;
    let d = op(config, "d")?;
    match variant {
        CoolingVariant::Off => Ok(none),
        CoolingVariant::Effective => {
            let mut channels = Vec::new();
            push(&mut channels, d, cooling_rate(p), "cooling d")?;
            Ok(CoolingTerms {
                hamiltonian: None,
                channels,
            })
        }
        CoolingVariant::Explicit => {
            let f = op(config, "f")?;
            let fd = f.dag();
            let g = p.g_nl() * p.alpha_e;
            let h = &(nm.omega_d(approx) * &(&fd * &f)) - &(g * &(&(&f + &fd) * &(&d + &d.dag())));
            let mut channels = Vec::new();
            push(&mut channels, f, p.kappa, "kappa f")?;
            Ok(CoolingTerms {
                hamiltonian: Some(h),
                channels,
            })
        }
    }
}

/// (γ↓, γ↑) of the d mode from cavity leakage and mechanical damping.
pub fn rates_updown(p: &SystemParams) -> Result<(f64, f64)> {
    if p.r > 1.0 {
        return Err(Error::Unstable { r: p.r });
    }
    let z = p.zeta();
    if !(z > 0.0) {
        return Err(Error::ZetaZero);
    }
    let cav = p.eta() / (4.0 * z) * p.kappa;
    let mech = p.gamma_m / (4.0 * z);
    let n = 2.0 * p.n_th + 1.0;
    Ok((cav + mech * (n + 2.0 * z), cav + mech * (n - 2.0 * z)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeritLink {
    pub name: &'static str,
    pub ratio: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeritReport {
    pub figure_of_merit: f64,
    pub threshold: f64,
    pub links: Vec<MeritLink>,
    pub stable: bool,
    pub instability_margin: f64,
    pub rates: Option<(f64, f64)>,
}

impl MeritReport {
    pub fn all_pass(&self) -> bool {
        self.stable && self.links.iter().all(|l| l.pass)
    }
}

/// Checks γ↑ ≪ κ ≪ g_nl ≪ ω_m ζ as ratios against `threshold`, plus r < 1.
pub fn merit_and_stability(p: &SystemParams, threshold: f64) -> MeritReport {
    let stable = p.r < 1.0;
    let rates = rates_updown(p).ok();
    let z = p.zeta();
    let g_nl = p.g_nl();
    let ratios = [
        ("kappa/gamma_up", rates.map_or(f64::NAN, |(_, up)| p.kappa / up)),
        ("g_nl/kappa", g_nl / p.kappa),
        ("omega_m*zeta/g_nl", p.omega_m * z / g_nl),
    ];
    MeritReport {
        figure_of_merit: p.figure_of_merit(),
        threshold,
        links: ratios
            .into_iter()
            .map(|(name, ratio)| MeritLink {
                name,
                ratio,
                pass: ratio >= threshold,
            })
            .collect(),
        stable,
        instability_margin: 1.0 - p.r,
        rates,
    }
}

/// Everything needed to evolve the probed system.
#[derive(Debug, Clone)]
pub struct DrivenSystem {
    pub config: Arc<FockConfig>,
    pub nm: NormalModeData,
    pub hamiltonian: ModeOperator,
    pub channels: Vec<LindbladChannel>,
}

impl DrivenSystem {
    pub fn bbar(&self) -> ModeOperator {
        ladder_by_label(&self.config, "bbar").expect("driven system always has bbar")
    }

    pub fn d(&self) -> ModeOperator {
        ladder_by_label(&self.config, "d").expect("driven system always has d")
    }
}

/// Probe-frame Hamiltonian with secular dissipators and cooling on a space
/// with per-mode dimension `dim`. The explicit cooling variant adds an `f`
/// mode of the same dimension.
pub fn driven_system(
    p: &SystemParams,
    dim: usize,
    approx: Approximation,
    cooling: CoolingVariant,
) -> Result<DrivenSystem> {
    let nm = p.normal_modes()?;
    nm.check_stable()?;
    let config = Arc::new(if cooling == CoolingVariant::Explicit {
        FockConfig::uniform(&NORMAL_LABELS_WITH_F, dim)?
    } else {
        FockConfig::uniform(&NORMAL_LABELS, dim)?
    });
    let mut h = probe_frame_hamiltonian(p, &nm, &config, approx)?;
    let mut channels = secular_channels(p, &nm, &config, approx)?;
    let cool = cooling_channel(p, &nm, &config, cooling, approx)?;
    if let Some(hc) = cool.hamiltonian {
        h = &h + &hc;
    }
    channels.extend(cool.channels);
    Ok(DrivenSystem {
        config,
        nm,
        hamiltonian: h,
        channels,
    })
}
