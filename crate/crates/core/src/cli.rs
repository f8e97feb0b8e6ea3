//! Config files, parameter sweeps, time traces and CSV output.
//!
//! All physical inputs are in units of κ. A config is a TOML file with a
//! `[params]` table plus optional `[sweep]` and `[trace]` tables; see the
//! files under `configs/` for complete samples.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Deserialize;

use crate::dynamics::{
    evolve_with, quasi_steady_from_params, quasi_steady_state, steady_state, EvolutionSpec, Generator,
    SteadyStateMethod,
};
use crate::error::{Error, Result};
use crate::fockspace::{FockConfig, QuantumState};
use crate::model::{
    cooling_rate, driven_system, effective_hamiltonian, frequencies, merit_and_stability, nonlinear_coefficients,
    rates_updown, CoolingVariant, MeritReport, SystemParams, NORMAL_LABELS,
};
use crate::normalmodes::{inverse_transform, Approximation};
use crate::observables::{g2_from_amplitudes, g2_zero, output_field_operator, populations};

pub const DEFAULT_TRUNCATION: usize = 4;
pub const DEFAULT_THRESHOLD: f64 = 10.0;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub delta_b: f64,
    pub omega_m: f64,
    pub g0: f64,
    pub zeta: Option<f64>,
    pub r: Option<f64>,
    #[serde(default = "one")]
    pub kappa: f64,
    #[serde(default)]
    pub gamma_m: f64,
    #[serde(default)]
    pub n_th: f64,
    #[serde(default)]
    pub alpha_e: f64,
    #[serde(default)]
    pub probe_strength: f64,
    pub delta_a: Option<f64>,
    pub probe_freq: Option<f64>,
    #[serde(default)]
    pub tunneling_j: f64,
    /// [γ↓, γ↑]
    pub imposed_d_rates: Option<[f64; 2]>,
}

fn one() -> f64 {
    1.0
}

impl ParamsConfig {
    pub fn to_params(&self) -> Result<SystemParams> {
        let r = match (self.zeta, self.r) {
            (Some(_), Some(_)) => return Err(Error::Config("give either zeta or r, not both".into())),
            (Some(z), None) => {
                if !(z > 0.0 && z <= 1.0) {
                    return Err(Error::Config(format!("zeta must lie in (0, 1], got {z}")));
                }
                (1.0 - z * z).sqrt()
            }
            (None, Some(r)) => r,
            (None, None) => return Err(Error::Config("params need zeta or r".into())),
        };
        let p = SystemParams {
            delta_b: self.delta_b,
            omega_m: self.omega_m,
            g0: self.g0,
            r,
            kappa: self.kappa,
            gamma_m: self.gamma_m,
            n_th: self.n_th,
            alpha_e: self.alpha_e,
            probe_strength: self.probe_strength,
            delta_a: self.delta_a,
            probe_freq: self.probe_freq,
            tunneling_j: self.tunneling_j,
            imposed_d_rates: self.imposed_d_rates.map(|[d, u]| (d, u)),
        };
        p.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum AxisQuantity {
    /// Figure of merit; sets ω_m = Pκ³/g₀².
    #[serde(rename = "P")]
    FigureOfMerit,
    #[serde(rename = "omega_m")]
    OmegaM,
    #[serde(rename = "delta_b")]
    DeltaB,
    /// Sets r = √(1 − ζ²).
    #[serde(rename = "zeta")]
    Zeta,
    #[serde(rename = "alpha_e")]
    AlphaE,
    #[serde(rename = "probe_strength")]
    ProbeStrength,
}

impl AxisQuantity {
    pub fn name(self) -> &'static str {
        match self {
            Self::FigureOfMerit => "P",
            Self::OmegaM => "omega_m",
            Self::DeltaB => "delta_b",
            Self::Zeta => "zeta",
            Self::AlphaE => "alpha_e",
            Self::ProbeStrength => "probe_strength",
        }
    }

    fn apply(self, p: &mut SystemParams, v: f64) {
        match self {
            Self::FigureOfMerit => p.omega_m = v * p.kappa.powi(3) / (p.g0 * p.g0),
            Self::OmegaM => p.omega_m = v,
            Self::DeltaB => p.delta_b = v,
            Self::Zeta => p.r = (1.0 - v * v).max(0.0).sqrt(),
            Self::AlphaE => p.alpha_e = v,
            Self::ProbeStrength => p.probe_strength = v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisConfig {
    pub name: AxisQuantity,
    pub values: Option<Vec<f64>>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub points: Option<usize>,
    #[serde(default)]
    pub spacing: Spacing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub quantity: AxisQuantity,
    pub values: Vec<f64>,
}

impl Axis {
    pub fn new(quantity: AxisQuantity, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Config(format!("axis {} has no points", quantity.name())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(format!("axis {} has non-finite values", quantity.name())));
        }
        Ok(Self { quantity, values })
    }

    pub fn grid(quantity: AxisQuantity, min: f64, max: f64, points: usize, spacing: Spacing) -> Result<Self> {
        if points == 0 {
            return Err(Error::Config(format!("axis {} needs at least one point", quantity.name())));
        }
        if spacing == Spacing::Log && !(min > 0.0 && max > 0.0) {
            return Err(Error::Config(format!("log axis {} needs positive bounds", quantity.name())));
        }
        let values = (0..points)
            .map(|i| {
                let f = if points == 1 { 0.0 } else { i as f64 / (points - 1) as f64 };
                match spacing {
                    Spacing::Linear => min + (max - min) * f,
                    Spacing::Log => (min.ln() + (max.ln() - min.ln()) * f).exp(),
                }
            })
            .collect();
        Self::new(quantity, values)
    }
}

impl TryFrom<&AxisConfig> for Axis {
    type Error = Error;

    fn try_from(c: &AxisConfig) -> Result<Self> {
        match (&c.values, c.min, c.max, c.points) {
            (Some(v), None, None, None) => Axis::new(c.name, v.clone()),
            (None, Some(lo), Some(hi), Some(n)) => Axis::grid(c.name, lo, hi, n, c.spacing),
            _ => Err(Error::Config(format!(
                "axis {} needs either values or min/max/points",
                c.name.name()
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    /// Stationary state of the full master equation.
    #[default]
    MasterEquation,
    /// No-jump weak-probe state on the whole truncated space.
    EffectiveHamiltonian,
    /// No-jump weak-probe state on the nine-ket basis.
    Amplitudes,
}

impl Pipeline {
    fn name(self) -> &'static str {
        match self {
            Self::MasterEquation => "master_equation",
            Self::EffectiveHamiltonian => "effective_hamiltonian",
            Self::Amplitudes => "amplitudes",
        }
    }

    fn uses_truncation(self) -> bool {
        self != Self::Amplitudes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Output {
    G2,
    #[serde(rename = "n_d")]
    Populations,
    Rates,
    Stability,
}

/// Derived-parameter rules applied after the axes, in field order.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rules {
    /// ζ = 1/√P.
    #[serde(default)]
    pub zeta_inverse_sqrt_p: bool,
    /// Δ_b = ω_m/η.
    pub eta: Option<f64>,
    /// α_e = c√ζ.
    pub alpha_e_per_sqrt_zeta: Option<f64>,
    /// Imposed γ↓ = γ↑ = cκ/√P.
    pub imposed_rate_per_inverse_sqrt_p: Option<f64>,
}

impl Rules {
    pub fn apply(&self, p: &mut SystemParams) {
        if self.zeta_inverse_sqrt_p {
            let z = 1.0 / p.figure_of_merit().sqrt();
            *p = p.clone().with_zeta(z);
        }
        if let Some(eta) = self.eta {
            p.delta_b = p.omega_m / eta;
        }
        if let Some(c) = self.alpha_e_per_sqrt_zeta {
            p.alpha_e = c * p.zeta().sqrt();
        }
        if let Some(c) = self.imposed_rate_per_inverse_sqrt_p {
            let g = c * p.kappa / p.figure_of_merit().sqrt();
            p.imposed_d_rates = Some((g, g));
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub axes: Vec<AxisConfig>,
    #[serde(default)]
    pub pipeline: Pipeline,
    #[serde(default = "default_outputs")]
    pub outputs: Vec<Output>,
    pub truncation: Option<usize>,
    #[serde(default)]
    pub cooling: CoolingVariant,
    #[serde(default)]
    pub first_order: bool,
    pub threshold: Option<f64>,
    #[serde(default = "yes")]
    pub convergence_check: bool,
    #[serde(default)]
    pub rules: Rules,
}

fn default_outputs() -> Vec<Output> {
    vec![Output::G2, Output::Populations, Output::Rates, Output::Stability]
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceCooling {
    On,
    Off,
    #[default]
    Both,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceConfig {
    pub t_final: f64,
    pub record_times: Option<Vec<f64>>,
    /// Evenly spaced records over (0, t_final] when `record_times` is absent.
    pub points: Option<usize>,
    #[serde(default)]
    pub cooling: TraceCooling,
    pub rel_tol: Option<f64>,
    pub abs_tol: Option<f64>,
    pub truncation: Option<usize>,
    #[serde(default)]
    pub first_order: bool,
    #[serde(default)]
    pub rules: Rules,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub params: ParamsConfig,
    pub sweep: Option<SweepConfig>,
    pub trace: Option<TraceConfig>,
    pub threshold: Option<f64>,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: SystemParams,
    pub axes: Vec<Axis>,
    pub pipeline: Pipeline,
    pub outputs: Vec<Output>,
    pub truncation: usize,
    pub cooling: CoolingVariant,
    pub approximation: Approximation,
    pub threshold: f64,
    pub rules: Rules,
    /// Re-run the minimal-g² point at truncation + 1.
    pub convergence_check: bool,
}

impl SweepSpec {
    pub fn new(base: SystemParams, pipeline: Pipeline) -> Self {
        Self {
            base,
            axes: Vec::new(),
            pipeline,
            outputs: default_outputs(),
            truncation: DEFAULT_TRUNCATION,
            cooling: CoolingVariant::Effective,
            approximation: Approximation::Exact,
            threshold: DEFAULT_THRESHOLD,
            rules: Rules::default(),
            convergence_check: true,
        }
    }

    pub fn from_config(config: &Config) -> Result<Self> {
        let base = config.params.to_params()?;
        let s = config
            .sweep
            .as_ref()
            .ok_or_else(|| Error::Config("missing [sweep] table".into()))?;
        let axes = s.axes.iter().map(Axis::try_from).collect::<Result<Vec<_>>>()?;
        let spec = Self {
            base,
            axes,
            pipeline: s.pipeline,
            outputs: s.outputs.clone(),
            truncation: s.truncation.unwrap_or(DEFAULT_TRUNCATION),
            cooling: s.cooling,
            approximation: if s.first_order {
                Approximation::FirstOrder
            } else {
                Approximation::Exact
            },
            threshold: s.threshold.or(config.threshold).unwrap_or(DEFAULT_THRESHOLD),
            rules: s.rules.clone(),
            convergence_check: s.convergence_check,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.axes.len() > 2 {
            return Err(Error::Config("at most two scan axes".into()));
        }
        if self.axes.len() == 2 && self.axes[0].quantity == self.axes[1].quantity {
            return Err(Error::Config("scan axes must differ".into()));
        }
        if self.truncation < 2 {
            return Err(Error::Config("truncation must be >= 2".into()));
        }
        if self.outputs.is_empty() {
            return Err(Error::Config("no outputs requested".into()));
        }
        Ok(())
    }

    /// Grid indices and parameters in row-major order (first axis slowest).
    pub fn points(&self) -> Vec<(Vec<usize>, SystemParams)> {
        let sizes: Vec<usize> = self.axes.iter().map(|a| a.values.len()).collect();
        let total: usize = sizes.iter().product();
        (0..total)
            .map(|mut flat| {
                let mut idx = vec![0; sizes.len()];
                for k in (0..sizes.len()).rev() {
                    idx[k] = flat % sizes[k];
                    flat /= sizes[k];
                }
                let mut p = self.base.clone();
                for (axis, &i) in self.axes.iter().zip(&idx) {
                    axis.quantity.apply(&mut p, axis.values[i]);
                }
                self.rules.apply(&mut p);
                (idx, p)
            })
            .collect()
    }
}

/// Outputs of one stationary-state evaluation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointOutputs {
    pub g2: Option<f64>,
    pub g2_output: Option<f64>,
    pub n_a: Option<f64>,
    pub n_bbar: Option<f64>,
    pub n_d: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRecord {
    pub index: Vec<usize>,
    pub axis_names: Vec<&'static str>,
    pub params: SystemParams,
    pub pipeline: Pipeline,
    pub approximation: Approximation,
    pub truncation: usize,
    pub outputs: PointOutputs,
    pub rates: Option<(f64, f64)>,
    pub cooling_rate: f64,
    pub merit: MeritReport,
    pub g2_truncation_plus1: Option<f64>,
    pub error: Option<String>,
    pub wall_time: f64,
}

impl ResultRecord {
    pub fn truncation_rel_change(&self) -> Option<f64> {
        match (self.outputs.g2, self.g2_truncation_plus1) {
            (Some(a), Some(b)) => Some((b - a).abs() / a.abs()),
            _ => None,
        }
    }
}

/// Evaluates one parameter point on the chosen pipeline.
pub fn evaluate_point(
    p: &SystemParams,
    pipeline: Pipeline,
    dim: usize,
    cooling: CoolingVariant,
    approx: Approximation,
) -> Result<PointOutputs> {
    match pipeline {
        Pipeline::MasterEquation => {
            let sys = driven_system(p, dim, approx, cooling)?;
            let state = steady_state(&sys.hamiltonian, &sys.channels, SteadyStateMethod::NullSpace)?;
            state_outputs(&state, &sys.nm, &sys.config)
        }
        Pipeline::EffectiveHamiltonian => {
            let nm = p.normal_modes()?;
            let config = Arc::new(FockConfig::uniform(&NORMAL_LABELS, dim)?);
            let h = effective_hamiltonian(p, &nm, &config, approx)?;
            state_outputs(&quasi_steady_state(&h)?, &nm, &config)
        }
        Pipeline::Amplitudes => {
            let amps = quasi_steady_from_params(p, approx)?;
            Ok(PointOutputs {
                g2: Some(g2_from_amplitudes(&amps)?),
                ..Default::default()
            })
        }
    }
}

fn state_outputs(
    state: &QuantumState,
    nm: &crate::normalmodes::NormalModeData,
    config: &Arc<FockConfig>,
) -> Result<PointOutputs> {
    let bbar = crate::fockspace::ladder_by_label(config, "bbar")?;
    let pops = populations(state)?;
    let pop = |l: &str| pops.iter().find(|(k, _)| k == l).map(|x| x.1);
    Ok(PointOutputs {
        g2: Some(g2_zero(state, &bbar)?),
        g2_output: g2_zero(state, &output_field_operator(nm, config)?).ok(),
        n_a: pop("a"),
        n_bbar: pop("bbar"),
        n_d: pop("d"),
    })
}

fn run_point(spec: &SweepSpec, index: Vec<usize>, p: SystemParams) -> ResultRecord {
    let start = Instant::now();
    let (outputs, error) = match evaluate_point(&p, spec.pipeline, spec.truncation, spec.cooling, spec.approximation) {
        Ok(o) => (o, None),
        Err(e) => (PointOutputs::default(), Some(e.to_string())),
    };
    ResultRecord {
        index,
        axis_names: spec.axes.iter().map(|a| a.quantity.name()).collect(),
        rates: rates_updown(&p).ok(),
        cooling_rate: if spec.cooling == CoolingVariant::Off { 0.0 } else { cooling_rate(&p) },
        merit: merit_and_stability(&p, spec.threshold),
        params: p,
        pipeline: spec.pipeline,
        approximation: spec.approximation,
        truncation: spec.truncation,
        outputs,
        g2_truncation_plus1: None,
        error,
        wall_time: start.elapsed().as_secs_f64(),
    }
}

/// Evaluates every grid point on a pool of `workers` threads (all cores
/// when `None`). Records come back in grid order.
pub fn run_sweep(spec: &SweepSpec, workers: Option<usize>) -> Result<Vec<ResultRecord>> {
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let points = spec.points();
    let mut records: Vec<ResultRecord> = pool.install(|| {
        points
            .into_par_iter()
            .map(|(idx, p)| run_point(spec, idx, p))
            .collect()
    });
    if spec.convergence_check && spec.pipeline.uses_truncation() && spec.outputs.contains(&Output::G2) {
        let best = records
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.outputs.g2.map(|g| (i, g)))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((i, _)) = best {
            let r = &records[i];
            let rerun = pool.install(|| {
                evaluate_point(&r.params, spec.pipeline, spec.truncation + 1, spec.cooling, spec.approximation)
            });
            match rerun {
                Ok(o) => records[i].g2_truncation_plus1 = o.g2,
                Err(e) => {
                    let msg = format!("truncation+1 rerun failed: {e}");
                    records[i].error = Some(msg);
                }
            }
        }
    }
    Ok(records)
}

fn fmt_f(x: f64) -> String {
    format!("{x:.10e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f).unwrap_or_default()
}

/// Writes records as CSV. Wall time is included only with `timings`, so
/// that repeated runs give identical bytes.
pub fn write_csv<W: Write>(records: &[ResultRecord], outputs: &[Output], timings: bool, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let axis_names = records.first().map(|r| r.axis_names.clone()).unwrap_or_default();
    let mut header: Vec<String> = axis_names.iter().map(|n| format!("index_{n}")).collect();
    header.extend(
        [
            "P", "delta_b", "omega_m", "g0", "r", "zeta", "eta", "g_nl", "kappa", "gamma_m", "n_th", "alpha_e",
            "probe_strength", "pipeline", "approximation",
        ]
        .map(String::from),
    );
    let has = |o: Output| outputs.contains(&o);
    if has(Output::G2) {
        header.extend(["g2", "g2_output"].map(String::from));
    }
    if has(Output::Populations) {
        header.extend(["n_a", "n_bbar", "n_d"].map(String::from));
    }
    if has(Output::Rates) {
        header.extend(["gamma_down", "gamma_up", "cooling_rate"].map(String::from));
    }
    if has(Output::Stability) {
        header.extend(
            ["stable", "merit_pass", "kappa_over_gamma_up", "g_nl_over_kappa", "omega_d_over_g_nl"].map(String::from),
        );
    }
    header.extend(["truncation", "g2_truncation_plus1", "truncation_rel_change", "status"].map(String::from));
    if timings {
        header.push("wall_time_s".into());
    }
    w.write_record(&header)?;

    for r in records {
        let p = &r.params;
        let mut row: Vec<String> = r.index.iter().map(|i| i.to_string()).collect();
        row.extend([
            fmt_f(p.figure_of_merit()),
            fmt_f(p.delta_b),
            fmt_f(p.omega_m),
            fmt_f(p.g0),
            fmt_f(p.r),
            fmt_f(p.zeta()),
            fmt_f(p.eta()),
            fmt_f(p.g_nl()),
            fmt_f(p.kappa),
            fmt_f(p.gamma_m),
            fmt_f(p.n_th),
            fmt_f(p.alpha_e),
            fmt_f(p.probe_strength),
            r.pipeline.name().to_string(),
            match r.approximation {
                Approximation::Exact => "exact".to_string(),
                Approximation::FirstOrder => "first_order".to_string(),
            },
        ]);
        if has(Output::G2) {
            row.extend([fmt_opt(r.outputs.g2), fmt_opt(r.outputs.g2_output)]);
        }
        if has(Output::Populations) {
            row.extend([fmt_opt(r.outputs.n_a), fmt_opt(r.outputs.n_bbar), fmt_opt(r.outputs.n_d)]);
        }
        if has(Output::Rates) {
            row.extend([
                fmt_opt(r.rates.map(|x| x.0)),
                fmt_opt(r.rates.map(|x| x.1)),
                fmt_f(r.cooling_rate),
            ]);
        }
        if has(Output::Stability) {
            row.push(r.merit.stable.to_string());
            row.push(r.merit.all_pass().to_string());
            row.extend(r.merit.links.iter().map(|l| fmt_f(l.ratio)));
        }
        row.push(r.truncation.to_string());
        row.push(fmt_opt(r.g2_truncation_plus1));
        row.push(fmt_opt(r.truncation_rel_change()));
        row.push(r.error.clone().unwrap_or_else(|| "ok".into()));
        if timings {
            row.push(format!("{:.3}", r.wall_time));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub cooling: bool,
    pub t: f64,
    pub g2: Option<f64>,
    pub n_bbar: f64,
    pub n_d: f64,
    pub trace_drift: f64,
    pub min_eigenvalue: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceOutput {
    pub records: Vec<TraceRecord>,
    /// Integrator failure; records before it are kept.
    pub failure: Option<String>,
}

/// Evolves the probed system from vacuum. With `cooling` off the cooling
/// drive is removed (α_e = 0).
pub fn run_time_trace(
    params: &SystemParams,
    spec: &EvolutionSpec,
    cooling: bool,
    dim: usize,
    approx: Approximation,
) -> Result<TraceOutput> {
    let mut p = params.clone();
    if !cooling {
        p.alpha_e = 0.0;
    }
    let sys = driven_system(&p, dim, approx, CoolingVariant::Effective)?;
    let gen = Generator::new(&sys.hamiltonian, &sys.channels)?;
    let rho0 = QuantumState::vacuum(&sys.config).to_density_matrix();
    let traj = evolve_with(&gen, rho0, spec);
    let bbar = sys.bbar();
    let mut records = Vec::with_capacity(traj.times.len());
    for (k, (t, s)) in traj.times.iter().zip(&traj.states).enumerate() {
        let pops = populations(s)?;
        records.push(TraceRecord {
            cooling,
            t: *t,
            g2: g2_zero(s, &bbar).ok(),
            n_bbar: pops[1].1,
            n_d: pops[2].1,
            trace_drift: traj.diagnostics.trace_drift[k],
            min_eigenvalue: traj.diagnostics.min_eigenvalue[k],
        });
    }
    Ok(TraceOutput {
        records,
        failure: traj.diagnostics.failure.map(|e| e.to_string()),
    })
}

pub fn trace_spec_from_config(t: &TraceConfig) -> Result<EvolutionSpec> {
    let times = match (&t.record_times, t.points) {
        (Some(v), None) => v.clone(),
        (None, Some(n)) if n > 0 => (1..=n).map(|i| t.t_final * i as f64 / n as f64).collect(),
        _ => return Err(Error::Config("trace needs record_times or points".into())),
    };
    let mut spec = EvolutionSpec::new(t.t_final, times);
    if let Some(x) = t.rel_tol {
        spec.rel_tol = x;
    }
    if let Some(x) = t.abs_tol {
        spec.abs_tol = x;
    }
    spec.validate().map_err(|e| Error::Config(e.to_string()))?;
    Ok(spec)
}

pub fn write_trace_csv<W: Write>(out: &[TraceOutput], w: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["cooling", "t", "g2", "n_bbar", "n_d", "trace_drift", "min_eigenvalue", "status"])?;
    for o in out {
        for r in &o.records {
            w.write_record([
                if r.cooling { "on" } else { "off" }.to_string(),
                fmt_f(r.t),
                fmt_opt(r.g2),
                fmt_f(r.n_bbar),
                fmt_f(r.n_d),
                fmt_f(r.trace_drift),
                fmt_f(r.min_eigenvalue),
                "ok".to_string(),
            ])?;
        }
        if let Some(f) = &o.failure {
            let cooling = o.records.first().map_or("", |r| if r.cooling { "on" } else { "off" });
            w.write_record([cooling, "", "", "", "", "", "", f.as_str()])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub params: SystemParams,
    pub merit: MeritReport,
}

pub fn feasibility_report(params: &SystemParams, threshold: f64) -> FeasibilityReport {
    FeasibilityReport {
        params: params.clone(),
        merit: merit_and_stability(params, threshold),
    }
}

impl fmt::Display for FeasibilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = &self.merit;
        writeln!(f, "P = g0^2 omega_m / kappa^3 = {:.6}", m.figure_of_merit)?;
        writeln!(f, "g_nl = {:.6}  zeta = {:.6}", self.params.g_nl(), self.params.zeta())?;
        match m.rates {
            Some((down, up)) => writeln!(f, "gamma_down = {down:.6e}  gamma_up = {up:.6e}")?,
            None => writeln!(f, "gamma_down, gamma_up undefined (zeta = 0 or unstable)")?,
        }
        for l in &m.links {
            writeln!(
                f,
                "{:<20} {:>14.6}  {}",
                l.name,
                l.ratio,
                if l.pass { "pass" } else { "FAIL" }
            )?;
        }
        writeln!(
            f,
            "instability margin 1 - r = {:.6e}  {}",
            m.instability_margin,
            if m.stable { "stable" } else { "UNSTABLE" }
        )?;
        write!(f, "threshold {}: {}", m.threshold, if m.all_pass() { "all pass" } else { "not satisfied" })
    }
}

/// Human-readable normal-mode summary.
pub fn diag_report(params: &SystemParams) -> Result<String> {
    use std::fmt::Write as _;
    let nm = params.normal_modes()?;
    let mut s = String::new();
    let w = &mut s;
    let _ = writeln!(w, "eta = {:.6e}  r = {:.9}  phi = {:.6e}", nm.eta, nm.r, nm.phi);
    let _ = writeln!(w, "theta = {:.6e}  alpha = {:.9}  beta = {:.6e}", nm.theta, nm.alpha, nm.beta);
    let _ = writeln!(
        w,
        "xi_plus = {:.12}  (first order {:.12})",
        nm.xi_plus, nm.xi_plus_firstorder
    );
    let _ = writeln!(
        w,
        "xi_minus^2 = {:.6e}  xi_minus = {:.6e}  (first order {:.6e})",
        nm.xi_minus_sq, nm.xi_minus, nm.xi_minus_firstorder
    );
    let _ = writeln!(w, "omega_plus = {:.9}  omega_minus = {:.9}", nm.omega_plus, nm.omega_minus);
    let _ = writeln!(
        w,
        "shift exact = {:.6e}  first order = {:.6e}",
        nm.delta_shift_exact(),
        nm.delta_shift
    );
    let _ = writeln!(w, "zeta = {:.6e}  xi_minus/eta = {:.6e}", nm.zeta, nm.zeta_dressed());
    let _ = writeln!(w, "d+ in (b, b+, c, c+) = {:?}", nm.coeffs_dplus);
    let _ = writeln!(w, "d- in (b, b+, c, c+) = {:?}", nm.coeffs_dminus);
    if nm.unstable {
        let _ = write!(w, "UNSTABLE: r >= 1, lower branch frequency is imaginary or zero");
        return Ok(s);
    }
    let inv = inverse_transform(&nm);
    let _ = writeln!(w, "b in (d+, d+†, d-, d-†) = {:?}", inv.b);
    let _ = writeln!(w, "c in (d+, d+†, d-, d-†) = {:?}", inv.c);
    for approx in [Approximation::Exact, Approximation::FirstOrder] {
        let k = nonlinear_coefficients(params, &nm, approx)?;
        let fr = frequencies(params, &nm, approx)?;
        let _ = writeln!(
            w,
            "{:?}: coefficients [{:.6e}, {:.6e}, {:.6e}, {:.6e}, {:.6e}]  delta_a = {:.9}  probe = {:.9}",
            approx,
            k.resonant,
            k.counter_resonant,
            k.pair_creation,
            k.pair_annihilation,
            k.dispersive,
            fr.delta_a,
            fr.probe
        );
    }
    Ok(s.trim_end().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
        [params]
        delta_b = 1e4
        omega_m = 100.0
        g0 = 1.0
        zeta = 0.2
        probe_strength = 0.02

        [sweep]
        pipeline = "amplitudes"
        outputs = ["g2", "stability"]

        [[sweep.axes]]
        name = "P"
        values = [50.0, 100.0]

        [[sweep.axes]]
        name = "zeta"
        min = 0.1
        max = 0.4
        points = 3
        spacing = "log"
    "#;

    #[test]
    fn parses_sample() {
        let c = Config::from_toml(SAMPLE).unwrap();
        let spec = SweepSpec::from_config(&c).unwrap();
        assert_eq!(spec.axes.len(), 2);
        assert!((spec.axes[1].values[1] - 0.2).abs() < 1e-12);
        let pts = spec.points();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[4].0, vec![1, 1]);
        assert!((pts[4].1.omega_m - 100.0).abs() < 1e-12);
        assert!((pts[4].1.zeta() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn config_errors() {
        assert!(matches!(Config::from_toml("[params]\nfoo = 1"), Err(Error::Config(_))));
        let both = "[params]\ndelta_b = 1e4\nomega_m = 1\ng0 = 1\nzeta = 0.5\nr = 0.5\n";
        let c = Config::from_toml(both).unwrap();
        assert!(c.params.to_params().is_err());
        let neither = "[params]\ndelta_b = 1e4\nomega_m = 1\ng0 = 1\n";
        assert!(Config::from_toml(neither).unwrap().params.to_params().is_err());
        let no_sweep = "[params]\ndelta_b = 1e4\nomega_m = 1\ng0 = 1\nzeta = 0.5\n";
        assert!(SweepSpec::from_config(&Config::from_toml(no_sweep).unwrap()).is_err());
        let bad_axis = format!("{no_sweep}[sweep]\n[[sweep.axes]]\nname = \"zeta\"\nmin = 0.1\n");
        assert!(SweepSpec::from_config(&Config::from_toml(&bad_axis).unwrap()).is_err());
    }

    #[test]
    fn single_point_sweep() {
        let p = SystemParams::default().with_zeta(0.2);
        let spec = SweepSpec::new(p, Pipeline::Amplitudes);
        let recs = run_sweep(&spec, Some(1)).unwrap();
        assert_eq!(recs.len(), 1);
        assert!(recs[0].error.is_none());
        assert!(recs[0].outputs.g2.unwrap() < 1.0);
    }

    #[test]
    fn per_point_failures_are_recorded() {
        let p = SystemParams::default();
        let mut spec = SweepSpec::new(p, Pipeline::Amplitudes);
        spec.axes = vec![Axis::new(AxisQuantity::Zeta, vec![0.2, 0.0]).unwrap()];
        let recs = run_sweep(&spec, Some(2)).unwrap();
        assert_eq!(recs.len(), 2);
        assert!(recs[0].error.is_none());
        assert!(recs[1].error.is_some());
        let mut buf = Vec::new();
        write_csv(&recs, &spec.outputs, false, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn rules_apply_in_order() {
        let mut p = SystemParams {
            g0: 1.0,
            omega_m: 400.0,
            ..Default::default()
        };
        let rules = Rules {
            zeta_inverse_sqrt_p: true,
            eta: Some(0.01),
            alpha_e_per_sqrt_zeta: Some(2.0),
            imposed_rate_per_inverse_sqrt_p: Some(1.0),
        };
        rules.apply(&mut p);
        assert!((p.zeta() - 0.05).abs() < 1e-12);
        assert!((p.delta_b - 4e4).abs() < 1e-9);
        assert!((p.alpha_e - 2.0 * 0.05f64.sqrt()).abs() < 1e-12);
        assert_eq!(p.imposed_d_rates, Some((0.05, 0.05)));
    }

    #[test]
    fn feasibility_text() {
        let p = SystemParams {
            g0: 0.1,
            omega_m: 500.0,
            delta_b: 1e5,
            ..Default::default()
        }
        .with_zeta(0.1);
        let rep = feasibility_report(&p, 10.0);
        assert!((rep.merit.figure_of_merit - 5.0).abs() < 1e-12);
        let text = rep.to_string();
        assert!(text.contains("P = g0^2 omega_m / kappa^3 = 5.000000"));
        assert!(diag_report(&p).unwrap().contains("xi_plus"));
    }
}
