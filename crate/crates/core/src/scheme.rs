//! Structural model of the compensated source: pump splitting at the PBS,
//! time-delay bookkeeping along both polarization paths, birth-point
//! round-trip algebra through the Faraday mirror, output two-photon state
//! construction, and a drift-stability comparison against an uncompensated
//! single-pass reference.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::jones::{
    frm_matrix, haar_random_su2, JonesMatrix, JonesVector, UNITARITY_TOL,
};
use crate::quantum::{fringe_visibility, TwoPhotonState};

/// Physical parameters of the source layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    /// Delay the PMF adds to the V-polarized pump component, ns.
    pub pmf_delay_ns: f64,
    /// Length of the polarization-maintaining fiber, m.
    pub pmf_length_m: f64,
    /// Length of the highly nonlinear fiber, km.
    pub fiber_length_km: f64,
    /// Fiber nonlinear coefficient, W⁻¹km⁻¹.
    pub gamma_per_w_km: f64,
    /// Pump linear-polarization angle at the input PBS, degrees.
    pub launch_angle_deg: f64,
    /// Relative phase between the early and late pump components, rad.
    pub pump_phase_rad: f64,
    /// Group delay of the nonlinear fiber, ns per km.
    pub fiber_group_delay_ns_per_km: f64,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            pmf_delay_ns: 10.0,
            pmf_length_m: 2.0,
            fiber_length_km: 1.0,
            gamma_per_w_km: 20.0,
            launch_angle_deg: 45.0,
            pump_phase_rad: 0.0,
            fiber_group_delay_ns_per_km: 4900.0,
        }
    }
}

impl SchemeConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        let non_negative = |v: f64| v.is_finite() && v >= 0.0;
        if !positive(self.pmf_length_m) || !positive(self.fiber_length_km) {
            return Err(Error::invalid("fiber lengths must be positive"));
        }
        if !non_negative(self.pmf_delay_ns) || !non_negative(self.fiber_group_delay_ns_per_km) {
            return Err(Error::invalid("delays must be non-negative"));
        }
        if !non_negative(self.gamma_per_w_km) {
            return Err(Error::invalid("nonlinear coefficient must be non-negative"));
        }
        if !self.launch_angle_deg.is_finite() || !self.pump_phase_rad.is_finite() {
            return Err(Error::invalid("launch angle and pump phase must be finite"));
        }
        Ok(())
    }

    /// One-way group delay of the nonlinear fiber, ns.
    pub fn fiber_delay_ns(&self) -> f64 {
        self.fiber_length_km * self.fiber_group_delay_ns_per_km
    }
}

/// One stop along a path: element label, accumulated delay, accumulated
/// Jones matrix from the input up to and including this element.
#[derive(Debug, Clone, PartialEq)]
pub struct PathStep {
    pub label: &'static str,
    pub delay_ns: f64,
    pub matrix: JonesMatrix,
}

/// Ordered element sequence for one pump polarization component.
#[derive(Debug, Clone, PartialEq)]
pub struct PathTrace {
    pub steps: Vec<PathStep>,
}

impl PathTrace {
    pub fn total_delay_ns(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.delay_ns)
    }

    fn build(elements: &[(&'static str, f64, JonesMatrix)]) -> Self {
        let mut steps = Vec::with_capacity(elements.len());
        let mut delay = 0.0;
        let mut acc = JonesMatrix::identity();
        for (label, dt, m) in elements {
            delay += dt;
            acc = *m * acc;
            steps.push(PathStep {
                label,
                delay_ns: delay,
                matrix: acc,
            });
        }
        Self { steps }
    }
}

/// Early/late pump amplitudes after the 45°-launch split:
/// (cos θ, sin θ·e^{iφ}).
pub fn split_pump(launch_angle_deg: f64, pump_phase_rad: f64) -> (Complex64, Complex64) {
    let t = launch_angle_deg.to_radians();
    (
        Complex64::new(t.cos(), 0.0),
        Complex64::from_polar(t.sin(), pump_phase_rad),
    )
}

fn check_fiber_pair(u1: &JonesMatrix, u2: &JonesMatrix) -> Result<()> {
    if !u1.is_fiber(UNITARITY_TOL) || !u2.is_fiber(UNITARITY_TOL) {
        return Err(Error::invalid(
            "fiber partition must consist of unit-determinant unitaries",
        ));
    }
    Ok(())
}

/// Photon born on the forward pass at the partition point between `u1` and
/// `u2`, co-polarized with the local pump: returns U1ᵀ U2ᵀ F U2 U1 · p0.
///
/// Equals F·p0 for every partition — the compensation property.
pub fn birth_roundtrip_forward(
    u1: &JonesMatrix,
    u2: &JonesMatrix,
    p0: &JonesVector,
) -> Result<JonesVector> {
    check_fiber_pair(u1, u2)?;
    let born = *u1 * *p0;
    let at_mirror = *u2 * born;
    let reflected = frm_matrix() * at_mirror;
    let back_through_u2 = u2.transpose() * reflected;
    Ok(u1.transpose() * back_through_u2)
}

/// Photon born on the return pass at the same partition point. The pump
/// reaches the birth point as U2ᵀ F U2 U1 · p0 and the photon exits through
/// U1ᵀ, so the result is again U1ᵀ U2ᵀ F U2 U1 · p0 = F·p0.
pub fn birth_roundtrip_backward(
    u1: &JonesMatrix,
    u2: &JonesMatrix,
    p0: &JonesVector,
) -> Result<JonesVector> {
    check_fiber_pair(u1, u2)?;
    let pump_at_birth = u2.transpose() * (frm_matrix() * (*u2 * (*u1 * *p0)));
    Ok(u1.transpose() * pump_at_birth)
}

type PathElements = Vec<(&'static str, f64, JonesMatrix)>;

fn path_elements(config: &SchemeConfig) -> (PathElements, PathElements) {
    let fiber = config.fiber_delay_ns();
    let pmf = config.pmf_delay_ns;
    let id = JonesMatrix::identity();
    let pbs_h = JonesMatrix::from_reals(1.0, 0.0, 0.0, 0.0);
    let pbs_v = JonesMatrix::from_reals(0.0, 0.0, 0.0, 1.0);
    let f = frm_matrix();
    // H component goes straight into the fiber and returns V-polarized, so
    // the PBS routes it through the PMF on the way out.
    let early = vec![
        ("pbs_h_pass", 0.0, pbs_h),
        ("fiber_forward", fiber, id),
        ("frm", 0.0, f),
        ("fiber_backward", fiber, id),
        ("pmf", pmf, id),
        ("pbs_exit", 0.0, id),
    ];
    // V component is delayed by the PMF first, then takes the same round
    // trip and exits straight through the H port.
    let late = vec![
        ("pbs_v_pass", 0.0, pbs_v),
        ("pmf", pmf, id),
        ("fiber_forward", fiber, id),
        ("frm", 0.0, f),
        ("fiber_backward", fiber, id),
        ("pbs_exit", 0.0, id),
    ];
    (early, late)
}

/// Element-by-element traces of the early (H-launched) and late (V-launched)
/// pump components through the source, with ideal (identity) fiber.
pub fn trace_paths(config: &SchemeConfig) -> Result<(PathTrace, PathTrace)> {
    config.validate()?;
    let (early, late) = path_elements(config);
    Ok((PathTrace::build(&early), PathTrace::build(&late)))
}

/// Late-path total delay minus early-path total delay.
///
/// Each path contains the PMF exactly once and the fiber exactly twice, so
/// the difference is structurally zero for every configuration; both totals
/// are summed over identically ordered element multisets to keep the
/// cancellation exact in floating point.
pub fn output_delay_difference(config: &SchemeConfig) -> Result<f64> {
    config.validate()?;
    let (early, late) = path_elements(config);
    let canonical_total = |elements: &[(&'static str, f64, JonesMatrix)]| -> f64 {
        let mut delays: Vec<f64> = elements.iter().map(|(_, dt, _)| *dt).collect();
        delays.sort_by(|a, b| a.partial_cmp(b).expect("finite delays"));
        delays.iter().sum()
    };
    Ok(canonical_total(&late) - canonical_total(&early))
}

/// Output two-photon state for an explicit fiber partition (U1, U2).
///
/// Both photons of a pair take the same round trip, so each pump component
/// exits with polarization F·p0 regardless of the partition; the early
/// (H-launched) component therefore produces |VV⟩ and the late (V-launched)
/// component |HH⟩, with the late amplitude carrying twice the pump phase
/// (two pump photons per pair).
pub fn output_state_with_fiber(
    config: &SchemeConfig,
    u1: &JonesMatrix,
    u2: &JonesMatrix,
) -> Result<TwoPhotonState> {
    config.validate()?;
    let launch = config.launch_angle_deg.to_radians();
    let early_amp = Complex64::new(launch.cos(), 0.0);
    let late_amp = Complex64::from_polar(launch.sin(), 2.0 * config.pump_phase_rad);

    let exit_early = birth_roundtrip_forward(u1, u2, &JonesVector::horizontal())?;
    let exit_late = birth_roundtrip_forward(u1, u2, &JonesVector::vertical())?;

    let pair = |p: &JonesVector| -> [Complex64; 4] {
        [p.h * p.h, p.h * p.v, p.v * p.h, p.v * p.v]
    };
    let early_pair = pair(&exit_early);
    let late_pair = pair(&exit_late);
    let mut amps = [Complex64::ZERO; 4];
    for k in 0..4 {
        amps[k] = early_amp * early_pair[k] + late_amp * late_pair[k];
    }
    TwoPhotonState::from_ket(amps)
}

/// Output state of the compensated source (fiber drift drops out).
pub fn build_output_state(config: &SchemeConfig) -> Result<TwoPhotonState> {
    let id = JonesMatrix::identity();
    output_state_with_fiber(config, &id, &id)
}

/// Uncompensated single-pass reference: photons exit through the fiber
/// unitary directly and the H/V analyzers stay fixed.
fn reference_state(config: &SchemeConfig, fiber: &JonesMatrix) -> Result<TwoPhotonState> {
    let launch = config.launch_angle_deg.to_radians();
    let early_amp = Complex64::new(launch.cos(), 0.0);
    let late_amp = Complex64::from_polar(launch.sin(), 2.0 * config.pump_phase_rad);
    let exit_early = *fiber * JonesVector::horizontal();
    let exit_late = *fiber * JonesVector::vertical();
    let pair = |p: &JonesVector| -> [Complex64; 4] {
        [p.h * p.h, p.h * p.v, p.v * p.h, p.v * p.v]
    };
    let early_pair = pair(&exit_early);
    let late_pair = pair(&exit_late);
    let mut amps = [Complex64::ZERO; 4];
    for k in 0..4 {
        amps[k] = early_amp * early_pair[k] + late_amp * late_pair[k];
    }
    TwoPhotonState::from_ket(amps)
}

/// Per-trial two-photon fringe visibility in the H/V analyzer pair basis
/// under Haar-random fiber drift, with or without the Faraday-mirror
/// compensation.
///
/// Uses the default balanced-launch configuration. Trials run on
/// deterministically derived substreams (substream id = trial index), so the
/// result does not depend on how trials are scheduled.
pub fn drift_experiment<R: Rng + ?Sized>(
    n_trials: u64,
    with_frm: bool,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if n_trials < 1 {
        return Err(Error::invalid("drift experiment needs at least one trial"));
    }
    let mut key = [0u8; 32];
    rng.fill_bytes(&mut key);
    let config = SchemeConfig::default();

    let run_trial = |trial: u64| -> Result<f64> {
        let mut trial_rng = ChaCha8Rng::from_seed(key);
        trial_rng.set_stream(trial);
        let drift = haar_random_su2(&mut trial_rng);
        let state = if with_frm {
            output_state_with_fiber(&config, &drift, &JonesMatrix::identity())?
        } else {
            reference_state(&config, &drift)?
        };
        fringe_visibility(&state, 0.0)
    };

    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n_trials).into_par_iter().map(run_trial).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n_trials).map(run_trial).collect()
    }
}
