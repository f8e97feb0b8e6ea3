use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

use optomech::dynamics::{evolve, lindblad_rhs, steady_state, EvolutionSpec, SteadyStateMethod};
use optomech::fockspace::{expectation, ladder, ladder_by_label, number, FockConfig, QuantumState};
use optomech::model::{
    cooling_channel, hamiltonian_lab, probe_frame_hamiltonian, secular_channels, CoolingVariant, LindbladChannel,
    LAB_LABELS, NORMAL_LABELS_WITH_F,
};
use optomech::observables::g2_zero;
use optomech::{Approximation, SystemParams};

#[test]
fn linear_lab_spectrum_matches_normal_modes() {
    let p = SystemParams {
        delta_b: 10.0,
        omega_m: 1.0,
        g0: 0.0,
        r: 0.3,
        delta_a: Some(1e3),
        ..Default::default()
    };
    let nm = p.normal_modes().unwrap();
    let config = Arc::new(FockConfig::new(&[2, 8, 14], &LAB_LABELS).unwrap());
    let h = hamiltonian_lab(&p, &config).unwrap();
    let mut e: Vec<f64> = h.to_dense().symmetric_eigenvalues().iter().copied().collect();
    e.sort_by(f64::total_cmp);
    let gaps: Vec<f64> = e.iter().map(|x| x - e[0]).collect();
    let has = |w: f64| gaps.iter().any(|g| (g - w).abs() < 1e-8 * w);
    assert!((gaps[1] - nm.omega_minus).abs() < 1e-8 * nm.omega_minus, "{} vs {}", gaps[1], nm.omega_minus);
    assert!(has(2.0 * nm.omega_minus));
    assert!(has(nm.omega_plus), "no level at ω₊ = {}", nm.omega_plus);
    assert!(has(nm.omega_plus + nm.omega_minus));
}

fn fast_params() -> SystemParams {
    SystemParams {
        delta_b: 1e4,
        omega_m: 100.0,
        g0: 1.0,
        alpha_e: 0.05,
        probe_strength: 0.05,
        imposed_d_rates: Some((0.5, 0.1)),
        ..Default::default()
    }
    .with_zeta(0.1)
}

#[test]
fn null_space_agrees_with_long_time_on_driven_model() {
    let sys = optomech::model::driven_system(&fast_params(), 3, Approximation::Exact, CoolingVariant::Effective).unwrap();
    let a = steady_state(&sys.hamiltonian, &sys.channels, SteadyStateMethod::NullSpace).unwrap();
    let b = steady_state(&sys.hamiltonian, &sys.channels, SteadyStateMethod::LongTime { t_max: 400.0, tol: 1e-6 }).unwrap();
    let (ga, gb) = (g2_zero(&a, &sys.bbar()).unwrap(), g2_zero(&b, &sys.bbar()).unwrap());
    assert!((ga - gb).abs() < 1e-4 * ga, "{ga} vs {gb}");
    let diff = a.to_density_matrix() - b.to_density_matrix();
    assert!(diff.iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-7);
}

/// Mean of the birth-death chain p_{k+1}/p_k = q on `levels` states.
fn truncated_geometric_mean(q: f64, levels: usize) -> f64 {
    let w: Vec<f64> = (0..levels).map(|k| q.powi(k as i32)).collect();
    w.iter().enumerate().map(|(k, x)| k as f64 * x).sum::<f64>() / w.iter().sum::<f64>()
}

fn d_population(p: &SystemParams, variant: CoolingVariant) -> f64 {
    let nm = p.normal_modes().unwrap();
    let config = Arc::new(FockConfig::new(&[2, 2, 7, 3], &NORMAL_LABELS_WITH_F).unwrap());
    let mut h = probe_frame_hamiltonian(p, &nm, &config, Approximation::Exact).unwrap();
    let mut ch = secular_channels(p, &nm, &config, Approximation::Exact).unwrap();
    let cool = cooling_channel(p, &nm, &config, variant, Approximation::Exact).unwrap();
    if let Some(hc) = cool.hamiltonian {
        h = &h + &hc;
    }
    ch.extend(cool.channels);
    let s = steady_state(&h, &ch, SteadyStateMethod::NullSpace).unwrap();
    let d = ladder_by_label(&config, "d").unwrap();
    expectation(&s, &(&d.dag() * &d)).unwrap().re
}

#[test]
fn explicit_cooling_cavity_matches_effective_rate() {
    // g_nl α_e = 0.1κ, so Γ = 0.04κ; heating γ↑ = 0.01κ, γ↓ = 0.02κ
    let p = SystemParams {
        delta_b: 1e4,
        omega_m: 100.0,
        g0: 1.0,
        alpha_e: 0.1 * 0.1f64.sqrt(),
        probe_strength: 0.0,
        imposed_d_rates: Some((0.02, 0.01)),
        ..Default::default()
    }
    .with_zeta(0.1);
    let uncooled = d_population(&p, CoolingVariant::Off);
    let effective = d_population(&p, CoolingVariant::Effective);
    let explicit = d_population(&p, CoolingVariant::Explicit);
    // untruncated rate-equation values are 1.0 and 0.2
    assert!((uncooled - truncated_geometric_mean(0.5, 7)).abs() < 1e-6, "{uncooled}");
    assert!((effective - truncated_geometric_mean(0.01 / 0.06, 7)).abs() < 1e-6, "{effective}");
    assert!((explicit - effective).abs() < 0.2 * effective, "{explicit} vs {effective}");
}

#[test]
fn evolution_is_linear_in_the_initial_state() {
    let config = Arc::new(FockConfig::uniform(&["x"], 5).unwrap());
    let a = ladder(&config, 0).unwrap();
    let h = &(0.7 * &number(&config, 0).unwrap()) + &(0.2 * &(&a + &a.dag()));
    let ch = vec![LindbladChannel::new(a.clone(), 0.4, "loss").unwrap()];
    let spec = EvolutionSpec::new(3.0, vec![3.0]);
    let r1 = QuantumState::fock(&config, &[1]).unwrap().to_density_matrix();
    let r2 = QuantumState::thermal(&config, &[0.5]).unwrap().to_density_matrix();
    let mix = &r1 * Complex64::new(0.3, 0.0) + &r2 * Complex64::new(0.7, 0.0);
    let run = |rho: DMatrix<Complex64>| {
        let s = QuantumState::density(config.clone(), rho).unwrap();
        evolve(&s, &h, &ch, &spec).unwrap().last().unwrap().to_density_matrix()
    };
    let lhs = run(mix);
    let rhs = run(r1) * Complex64::new(0.3, 0.0) + run(r2) * Complex64::new(0.7, 0.0);
    assert!((lhs - rhs).iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-7);
}

proptest! {
    #[test]
    fn generator_is_trace_free_and_hermiticity_preserving(
        w in 0.0f64..3.0,
        k in 0.0f64..2.0,
        gamma in prop::collection::vec(0.0f64..1.0, 3),
        seed in prop::collection::vec(-1.0f64..1.0, 9),
    ) {
        let config = Arc::new(FockConfig::uniform(&["x", "y"], 3).unwrap());
        let a = ladder(&config, 0).unwrap();
        let b = ladder(&config, 1).unwrap();
        let h = &(w * &number(&config, 0).unwrap()) + &(k * &(&(&a.dag() * &b) + &(&b.dag() * &a)));
        let ch = vec![
            LindbladChannel::new(a.clone(), gamma[0], "a").unwrap(),
            LindbladChannel::new(b.clone(), gamma[1], "b").unwrap(),
            LindbladChannel::new(&a.dag() * &b, gamma[2], "ab").unwrap(),
        ];
        let n = config.total_dim();
        let m = DMatrix::from_fn(n, n, |i, j| Complex64::new(seed[(i + 2 * j) % 9], seed[(3 * i + j) % 9]));
        let rho = &m * m.adjoint();
        let tr = rho.trace();
        let state = QuantumState::density(config.clone(), rho / tr).unwrap();
        let d = lindblad_rhs(&state, &h, &ch).unwrap();
        prop_assert!(d.trace().norm() < 1e-12);
        let herm = &d - d.adjoint();
        prop_assert!(herm.iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-12);
    }
}
