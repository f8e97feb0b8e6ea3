//! Equal-time correlations and populations.

use std::sync::Arc;

use crate::dynamics::QuasiSteadyAmplitudes;
use crate::error::{Error, Result};
use crate::fockspace::{expectation, ladder_by_label, number, FockConfig, ModeOperator, QuantumState};
use crate::normalmodes::NormalModeData;

/// Below this mean occupation g² is reported as undefined.
pub const G2_FLOOR: f64 = 1e-12;

/// ⟨O†O†OO⟩/⟨O†O⟩² on a possibly unnormalized state.
pub fn g2_zero(state: &QuantumState, op: &ModeOperator) -> Result<f64> {
    let norm = state.trace().re;
    let od = op.dag();
    let n1 = expectation(state, &(&od * op))?.re / norm;
    if !(n1 > G2_FLOOR) {
        return Err(Error::PopulationBelowFloor {
            population: n1,
            floor: G2_FLOOR,
        });
    }
    let n2 = expectation(state, &(&(&od * &od) * &(op * op)))?.re / norm;
    Ok(n2.max(0.0) / (n1 * n1))
}

pub fn g2_zero_mode(state: &QuantumState, label: &str) -> Result<f64> {
    g2_zero(state, &ladder_by_label(state.config(), label)?)
}

/// g² of b̄ on the normalized nine-ket state. Fock kets are eigenstates of
/// b̄†b̄, so the moments are population sums.
pub fn g2_from_amplitudes(amps: &QuasiSteadyAmplitudes) -> Result<f64> {
    let (mut norm, mut n1, mut n2) = (0.0, 0.0, 0.0);
    for (ket, c) in amps.kets.iter().zip(&amps.amplitudes) {
        let w = c.norm_sqr();
        let nb = ket[1] as f64;
        norm += w;
        n1 += w * nb;
        n2 += w * nb * (nb - 1.0);
    }
    let (n1, n2) = (n1 / norm, n2 / norm);
    if !(n1 > G2_FLOOR) {
        return Err(Error::PopulationBelowFloor {
            population: n1,
            floor: G2_FLOOR,
        });
    }
    Ok(n2 / (n1 * n1))
}

/// ⟨n⟩ of every mode, in config order.
pub fn populations(state: &QuantumState) -> Result<Vec<(String, f64)>> {
    let config = state.config();
    let norm = state.trace().re;
    config
        .labels()
        .iter()
        .enumerate()
        .map(|(i, l)| Ok((l.clone(), expectation(state, &number(config, i)?)?.re / norm)))
        .collect()
}

/// The field that leaves the cavity, b̄ + √(η/ζ)(d + d†)/2.
pub fn output_field_operator(nm: &NormalModeData, config: &Arc<FockConfig>) -> Result<ModeOperator> {
    nm.check_stable()?;
    let b = ladder_by_label(config, "bbar")?;
    let d = ladder_by_label(config, "d")?;
    Ok(&b + &(output_admixture(nm) * &(&d + &d.dag())))
}

/// Coefficient of the d quadrature in the output field.
pub fn output_admixture(nm: &NormalModeData) -> f64 {
    (nm.eta / nm.zeta).sqrt() / 2.0
}
