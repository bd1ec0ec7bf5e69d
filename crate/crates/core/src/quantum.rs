//! Two-photon polarization algebra: density matrices over {HH, HV, VH, VV},
//! analyzer projections, correlation functions, CHSH, and fringe visibility.

use nalgebra::{Matrix4, Vector4};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::jones::{polarizer_matrix, JonesMatrix};

/// Hermiticity / trace tolerance for a valid state.
pub const STATE_TOL: f64 = 1e-12;
/// Positivity tolerance: min eigenvalue must exceed −PSD_TOL.
pub const PSD_TOL: f64 = 1e-10;
/// Idler sweep step used by [`fringe_visibility`], degrees.
pub const FRINGE_GRID_STEP_DEG: f64 = 0.25;

/// Basis index order: HH = 0, HV = 1, VH = 2, VV = 3.
pub const BASIS_LABELS: [&str; 4] = ["HH", "HV", "VH", "VV"];

/// Density matrix of the two-photon polarization state.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoPhotonState {
    rho: Matrix4<Complex64>,
}

/// One pair of analyzer settings (effective polarizer angles, degrees).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementSetting {
    pub signal_deg: f64,
    pub idler_deg: f64,
}

impl MeasurementSetting {
    pub fn new(signal_deg: f64, idler_deg: f64) -> Self {
        Self {
            signal_deg,
            idler_deg,
        }
    }
}

impl TwoPhotonState {
    /// Wrap and validate a density matrix.
    pub fn from_density(rho: Matrix4<Complex64>) -> Result<Self> {
        let state = Self { rho };
        state.validate()?;
        Ok(state)
    }

    /// Pure state from ket amplitudes in the {HH, HV, VH, VV} basis.
    /// The ket must be normalized.
    pub fn from_ket(amps: [Complex64; 4]) -> Result<Self> {
        let norm_sqr: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if !norm_sqr.is_finite() || (norm_sqr - 1.0).abs() > 1e-10 {
            return Err(Error::invalid(format!(
                "ket must be normalized, |psi|^2 = {norm_sqr}"
            )));
        }
        let mut rho = Matrix4::zeros();
        for i in 0..4 {
            for j in 0..4 {
                rho[(i, j)] = amps[i] * amps[j].conj();
            }
        }
        Ok(Self { rho })
    }

    pub fn density(&self) -> &Matrix4<Complex64> {
        &self.rho
    }

    /// Hermitian, unit trace, positive semidefinite (within tolerances).
    pub fn validate(&self) -> Result<()> {
        for i in 0..4 {
            for j in 0..4 {
                let e = self.rho[(i, j)];
                if !e.is_finite() {
                    return Err(Error::invalid("state has non-finite entries"));
                }
                if (e - self.rho[(j, i)].conj()).norm() > STATE_TOL {
                    return Err(Error::invalid("state is not Hermitian"));
                }
            }
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > STATE_TOL || tr.im.abs() > STATE_TOL {
            return Err(Error::invalid(format!("state trace is {tr}, expected 1")));
        }
        let min_eig = self.eigenvalues().min();
        if min_eig <= -PSD_TOL {
            return Err(Error::invalid(format!(
                "state is not positive semidefinite (min eigenvalue {min_eig})"
            )));
        }
        Ok(())
    }

    pub fn trace(&self) -> Complex64 {
        self.rho[(0, 0)] + self.rho[(1, 1)] + self.rho[(2, 2)] + self.rho[(3, 3)]
    }

    /// Eigenvalues of the (Hermitian) density matrix, unordered.
    pub fn eigenvalues(&self) -> Vector4<f64> {
        self.rho.symmetric_eigen().eigenvalues
    }

    /// Tr(rho^2); equals 1 for a pure state.
    pub fn purity(&self) -> f64 {
        let sq = self.rho * self.rho;
        (sq[(0, 0)] + sq[(1, 1)] + sq[(2, 2)] + sq[(3, 3)]).re
    }
}

/// Density matrix of imbalance·e^{iφ}|HH⟩ + √(1−imbalance²)|VV⟩.
pub fn bell_state(phase_rad: f64, imbalance: f64) -> Result<TwoPhotonState> {
    if !(0.0..=1.0).contains(&imbalance) {
        return Err(Error::invalid(format!(
            "imbalance must lie in [0, 1], got {imbalance}"
        )));
    }
    let hh = Complex64::from_polar(imbalance, phase_rad);
    let vv = Complex64::new((1.0 - imbalance * imbalance).sqrt(), 0.0);
    TwoPhotonState::from_ket([hh, Complex64::ZERO, Complex64::ZERO, vv])
}

/// The canonical Φ⁺ = (|HH⟩ + |VV⟩)/√2.
pub fn phi_plus() -> TwoPhotonState {
    bell_state(0.0, std::f64::consts::FRAC_1_SQRT_2).expect("canonical Bell state")
}

/// Isotropic-noise mixture V·ρ + (1−V)/4·I.
pub fn werner_mix(state: &TwoPhotonState, visibility: f64) -> Result<TwoPhotonState> {
    if !(0.0..=1.0).contains(&visibility) {
        return Err(Error::invalid(format!(
            "visibility must lie in [0, 1], got {visibility}"
        )));
    }
    let v = Complex64::new(visibility, 0.0);
    let w = Complex64::new((1.0 - visibility) / 4.0, 0.0);
    let rho = state.density() * v + Matrix4::identity() * w;
    TwoPhotonState::from_density(rho)
}

/// Tensor product of two single-photon operators, signal slot first.
pub fn kron(a: &JonesMatrix, b: &JonesMatrix) -> Matrix4<Complex64> {
    let a2 = [[a.m00, a.m01], [a.m10, a.m11]];
    let b2 = [[b.m00, b.m01], [b.m10, b.m11]];
    let mut out = Matrix4::zeros();
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    out[(2 * i + k, 2 * j + l)] = a2[i][j] * b2[k][l];
                }
            }
        }
    }
    out
}

/// Local unitaries on both arms: (U_s ⊗ U_i) ρ (U_s ⊗ U_i)†.
pub fn apply_local(
    u_s: &JonesMatrix,
    u_i: &JonesMatrix,
    state: &TwoPhotonState,
) -> Result<TwoPhotonState> {
    if !u_s.is_unitary(crate::jones::UNITARITY_TOL) || !u_i.is_unitary(crate::jones::UNITARITY_TOL)
    {
        return Err(Error::invalid("apply_local requires unitary operators"));
    }
    let u = kron(u_s, u_i);
    let rho = u * state.density() * u.adjoint();
    Ok(TwoPhotonState { rho })
}

fn projector_pair(setting: &MeasurementSetting) -> Result<Matrix4<Complex64>> {
    let p_s = polarizer_matrix(setting.signal_deg)?;
    let p_i = polarizer_matrix(setting.idler_deg)?;
    Ok(kron(&p_s, &p_i))
}

/// Tr[(P(θ_s) ⊗ P(θ_i)) ρ].
pub fn coincidence_prob(state: &TwoPhotonState, setting: &MeasurementSetting) -> Result<f64> {
    state.validate()?;
    let proj = projector_pair(setting)?;
    let prod = proj * state.density();
    let p = (prod[(0, 0)] + prod[(1, 1)] + prod[(2, 2)] + prod[(3, 3)]).re;
    // Projector expectation of a valid state; clip float dust at the edges.
    Ok(p.clamp(0.0, 1.0))
}

/// The four pass/block outcome probabilities {pp, pb, bp, bb} at a setting.
pub fn outcome_probs(state: &TwoPhotonState, setting: &MeasurementSetting) -> Result<[f64; 4]> {
    let p_pp = coincidence_prob(state, setting)?;
    let marginal_s = trace_single(state, setting.signal_deg, true)?;
    let marginal_i = trace_single(state, setting.idler_deg, false)?;
    let p_pb = (marginal_s - p_pp).max(0.0);
    let p_bp = (marginal_i - p_pp).max(0.0);
    let p_bb = (1.0 - marginal_s - marginal_i + p_pp).max(0.0);
    Ok([p_pp, p_pb, p_bp, p_bb])
}

/// Tr[(P(θ) ⊗ I) ρ] or Tr[(I ⊗ P(θ)) ρ].
fn trace_single(state: &TwoPhotonState, angle_deg: f64, signal_arm: bool) -> Result<f64> {
    let p = polarizer_matrix(angle_deg)?;
    let id = JonesMatrix::identity();
    let proj = if signal_arm {
        kron(&p, &id)
    } else {
        kron(&id, &p)
    };
    let prod = proj * state.density();
    Ok((prod[(0, 0)] + prod[(1, 1)] + prod[(2, 2)] + prod[(3, 3)])
        .re
        .clamp(0.0, 1.0))
}

/// Counts-style correlation estimator
/// E(a,b) = [p(a,b) + p(a⊥,b⊥) − p(a⊥,b) − p(a,b⊥)] / (sum of the four).
pub fn correlation(state: &TwoPhotonState, a_deg: f64, b_deg: f64) -> Result<f64> {
    let p = |s: f64, i: f64| coincidence_prob(state, &MeasurementSetting::new(s, i));
    let p00 = p(a_deg, b_deg)?;
    let p11 = p(a_deg + 90.0, b_deg + 90.0)?;
    let p10 = p(a_deg + 90.0, b_deg)?;
    let p01 = p(a_deg, b_deg + 90.0)?;
    let total = p00 + p11 + p10 + p01;
    if total <= 0.0 {
        return Err(Error::DegenerateMeasurement(
            "all four coincidence probabilities vanish".into(),
        ));
    }
    Ok((p00 + p11 - p10 - p01) / total)
}

/// CHSH combination S = |E(a,b) − E(a,b′) + E(a′,b) + E(a′,b′)|.
pub fn chsh(state: &TwoPhotonState, a: f64, a_prime: f64, b: f64, b_prime: f64) -> Result<f64> {
    let e = |x: f64, y: f64| correlation(state, x, y);
    Ok((e(a, b)? - e(a, b_prime)? + e(a_prime, b)? + e(a_prime, b_prime)?).abs())
}

/// Fringe visibility (max−min)/(max+min) of the coincidence probability with
/// the signal analyzer fixed and the idler analyzer swept over a fine grid.
pub fn fringe_visibility(state: &TwoPhotonState, fixed_deg: f64) -> Result<f64> {
    state.validate()?;
    if !fixed_deg.is_finite() {
        return Err(Error::invalid("fixed analyzer angle must be finite"));
    }
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let steps = (180.0 / FRINGE_GRID_STEP_DEG) as usize;
    for k in 0..steps {
        let idler = k as f64 * FRINGE_GRID_STEP_DEG;
        let p = coincidence_prob_unchecked(state, fixed_deg, idler)?;
        min = min.min(p);
        max = max.max(p);
    }
    let denom = max + min;
    if denom <= 0.0 {
        return Err(Error::DegenerateMeasurement(
            "coincidence fringe vanishes identically".into(),
        ));
    }
    Ok((max - min) / denom)
}

// Same trace as coincidence_prob without re-validating the state each step.
fn coincidence_prob_unchecked(state: &TwoPhotonState, s_deg: f64, i_deg: f64) -> Result<f64> {
    let proj = projector_pair(&MeasurementSetting::new(s_deg, i_deg))?;
    let prod = proj * state.density();
    Ok((prod[(0, 0)] + prod[(1, 1)] + prod[(2, 2)] + prod[(3, 3)])
        .re
        .clamp(0.0, 1.0))
}

/// Effective analyzer angle seen by a photon passing a half-wave plate at
/// `hwp_deg` followed by a fixed polarizer at `pol_deg`: 2·θ_hwp − θ_pol.
pub fn hwp_to_analyzer(hwp_deg: f64, pol_deg: f64) -> f64 {
    2.0 * hwp_deg - pol_deg
}

/// Concurrence of a pure two-photon state: 2|α_HH α_VV − α_HV α_VH|.
///
/// Defined here for pure states only (purity within 1e−8 of 1); extracts the
/// dominant eigenvector of the density matrix.
pub fn concurrence(state: &TwoPhotonState) -> Result<f64> {
    state.validate()?;
    if (state.purity() - 1.0).abs() > 1e-8 {
        return Err(Error::invalid(
            "concurrence is implemented for pure states only",
        ));
    }
    let eig = state.density().symmetric_eigen();
    let mut top = 0;
    for k in 1..4 {
        if eig.eigenvalues[k] > eig.eigenvalues[top] {
            top = k;
        }
    }
    let psi = eig.eigenvectors.column(top);
    Ok(2.0 * (psi[0] * psi[3] - psi[1] * psi[2]).norm())
}
