//! Turning tallies into reported quantities: sinusoidal fringe fits,
//! visibility, and the CHSH statistic with Poisson uncertainty.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::montecarlo::{estimate_accidentals, SettingTally};
use crate::quantum::MeasurementSetting;

/// Result of a fixed-period sinusoid fit C(θ) = A + B·cos(4θ − φ₀), with θ
/// the half-wave-plate angle in degrees (90° fringe period).
#[derive(Debug, Clone, PartialEq)]
pub struct FringeFit {
    /// Offset A, counts.
    pub offset: f64,
    /// Amplitude B ≥ 0, counts.
    pub amplitude: f64,
    /// Phase φ₀, rad.
    pub phase_rad: f64,
    /// B/A.
    pub visibility: f64,
    /// Root-mean-square residual, counts.
    pub rms_residual: f64,
}

impl FringeFit {
    /// Visibility above 1 is possible on subtraction noise; flag it rather
    /// than clamping.
    pub fn over_unity(&self) -> bool {
        self.visibility > 1.0
    }
}

/// CHSH estimate with first-order Poisson error propagation.
#[derive(Debug, Clone, PartialEq)]
pub struct ChshEstimate {
    pub s: f64,
    pub sigma_s: f64,
    /// E(a,b), E(a,b′), E(a′,b), E(a′,b′).
    pub correlations: [f64; 4],
    pub sigma_correlations: [f64; 4],
    pub subtracted: bool,
}

/// Least-squares fit of counts against {1, cos 4θ, sin 4θ} via the normal
/// equations; period fixed at 90° in HWP angle.
pub fn fit_fringe(points: &[(f64, f64)]) -> Result<FringeFit> {
    if points.len() < 4 {
        return Err(Error::Fit(format!(
            "need at least 4 points, got {}",
            points.len()
        )));
    }
    let mut reduced: Vec<f64> = points
        .iter()
        .map(|(theta, _)| theta.rem_euclid(90.0))
        .collect();
    reduced.sort_by(|a, b| a.partial_cmp(b).expect("finite angles"));
    reduced.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    if reduced.len() < 3 {
        return Err(Error::Fit(
            "need at least 3 distinct angles modulo the 90-degree period".into(),
        ));
    }

    let mut xtx = Matrix3::<f64>::zeros();
    let mut xty = Vector3::<f64>::zeros();
    for &(theta_deg, y) in points {
        let t = 4.0 * theta_deg.to_radians();
        let row = [1.0, t.cos(), t.sin()];
        for i in 0..3 {
            for j in 0..3 {
                xtx[(i, j)] += row[i] * row[j];
            }
            xty[i] += row[i] * y;
        }
    }
    let coeffs = xtx
        .lu()
        .solve(&xty)
        .ok_or_else(|| Error::Fit("singular design matrix".into()))?;

    let offset = coeffs[0];
    let amplitude = coeffs[1].hypot(coeffs[2]);
    let phase_rad = coeffs[2].atan2(coeffs[1]);
    if offset <= 0.0 {
        return Err(Error::DegenerateData(format!(
            "fitted offset {offset} is not positive"
        )));
    }

    let rms_residual = (points
        .iter()
        .map(|&(theta_deg, y)| {
            let t = 4.0 * theta_deg.to_radians();
            let model = offset + coeffs[1] * t.cos() + coeffs[2] * t.sin();
            (y - model).powi(2)
        })
        .sum::<f64>()
        / points.len() as f64)
        .sqrt();

    Ok(FringeFit {
        offset,
        amplitude,
        phase_rad,
        visibility: amplitude / offset,
        rms_residual,
    })
}

/// Net counts after subtracting the singles-product accidental estimate.
/// Negative values are preserved.
pub fn subtract_accidentals(tally: &SettingTally) -> f64 {
    tally.coincidences as f64 - estimate_accidentals(tally)
}

/// Variance of the accidental estimate by Poisson propagation of the singles.
fn accidental_variance(tally: &SettingTally) -> f64 {
    if tally.n_gates == 0 {
        return 0.0;
    }
    let n = tally.n_gates as f64;
    let ss = tally.singles_s as f64;
    let si = tally.singles_i as f64;
    (si / n).powi(2) * ss + (ss / n).powi(2) * si
}

/// The 16 analyzer settings for a CHSH quadruple (a, a′, b, b′), grouped per
/// correlation as (x,y), (x⊥,y⊥), (x⊥,y), (x,y⊥) with ⊥ = +90°.
///
/// [`chsh_from_tallies`] expects tallies flattened in exactly this order.
pub fn chsh_setting_grid(a: f64, a_prime: f64, b: f64, b_prime: f64) -> [MeasurementSetting; 16] {
    let mut grid = [MeasurementSetting::new(0.0, 0.0); 16];
    let pairs = [(a, b), (a, b_prime), (a_prime, b), (a_prime, b_prime)];
    for (k, &(x, y)) in pairs.iter().enumerate() {
        grid[4 * k] = MeasurementSetting::new(x, y);
        grid[4 * k + 1] = MeasurementSetting::new(x + 90.0, y + 90.0);
        grid[4 * k + 2] = MeasurementSetting::new(x + 90.0, y);
        grid[4 * k + 3] = MeasurementSetting::new(x, y + 90.0);
    }
    grid
}

/// CHSH statistic from 16 tallies in [`chsh_setting_grid`] order, optionally
/// on accidental-subtracted counts. Each raw count is treated as Poisson
/// with variance equal to the count; subtraction adds the propagated
/// accidental-estimate variance.
pub fn chsh_from_tallies(tallies: &[SettingTally], subtract: bool) -> Result<ChshEstimate> {
    if tallies.len() != 16 {
        return Err(Error::invalid(format!(
            "expected 16 tallies, got {}",
            tallies.len()
        )));
    }
    if tallies.iter().any(|t| t.n_gates < 1) {
        return Err(Error::invalid("every tally needs at least one gate"));
    }

    let mut correlations = [0.0; 4];
    let mut sigma_correlations = [0.0; 4];
    for k in 0..4 {
        let quad = &tallies[4 * k..4 * k + 4];
        let net: Vec<f64> = quad
            .iter()
            .map(|t| {
                if subtract {
                    subtract_accidentals(t)
                } else {
                    t.coincidences as f64
                }
            })
            .collect();
        let variance: Vec<f64> = quad
            .iter()
            .map(|t| {
                let raw = t.coincidences as f64;
                if subtract {
                    raw + accidental_variance(t)
                } else {
                    raw
                }
            })
            .collect();
        let signs = [1.0, 1.0, -1.0, -1.0];
        let numer: f64 = net.iter().zip(signs).map(|(c, s)| s * c).sum();
        let denom: f64 = net.iter().sum();
        if denom <= 0.0 {
            return Err(Error::DegenerateMeasurement(format!(
                "four-count sum {denom} is not positive"
            )));
        }
        let e = numer / denom;
        let sigma_sq: f64 = variance
            .iter()
            .zip(signs)
            .map(|(v, s)| ((s - e) / denom).powi(2) * v)
            .sum();
        correlations[k] = e;
        sigma_correlations[k] = sigma_sq.sqrt();
    }

    let s = (correlations[0] - correlations[1] + correlations[2] + correlations[3]).abs();
    let sigma_s = sigma_correlations
        .iter()
        .map(|s| s * s)
        .sum::<f64>()
        .sqrt();
    Ok(ChshEstimate {
        s,
        sigma_s,
        correlations,
        sigma_correlations,
        subtracted: subtract,
    })
}

/// B/A of a valid fit.
pub fn visibility_from_fit(fit: &FringeFit) -> Result<f64> {
    if fit.offset <= 0.0 {
        return Err(Error::DegenerateData(format!(
            "fit offset {} is not positive",
            fit.offset
        )));
    }
    Ok(fit.amplitude / fit.offset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn model_points(a: f64, b: f64, phase_deg: f64, n: usize) -> Vec<(f64, f64)> {
        (0..n)
            .map(|k| {
                let theta = 180.0 * k as f64 / n as f64;
                let arg = 4.0 * theta.to_radians() - phase_deg.to_radians();
                (theta, a + b * arg.cos())
            })
            .collect()
    }

    #[test]
    fn exact_recovery_on_model_data() {
        let fit = fit_fringe(&model_points(100.0, 80.0, 30.0, 16)).unwrap();
        assert_abs_diff_eq!(fit.offset, 100.0, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.amplitude, 80.0, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.phase_rad, 30f64.to_radians(), epsilon = 1e-9);
        assert_abs_diff_eq!(fit.visibility, 0.8, epsilon = 1e-9);
        assert!(fit.rms_residual < 1e-9);
        assert!(!fit.over_unity());
    }

    #[test]
    fn constant_data_fit() {
        let points: Vec<(f64, f64)> = (0..8).map(|k| (k as f64 * 22.5, 50.0)).collect();
        let fit = fit_fringe(&points).unwrap();
        assert_abs_diff_eq!(fit.offset, 50.0, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.amplitude, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn fit_rejects_degenerate_inputs() {
        // Too few points.
        assert!(fit_fringe(&[(0.0, 1.0), (10.0, 1.0), (20.0, 1.0)]).is_err());
        // Angles congruent modulo the period.
        let aliased: Vec<(f64, f64)> =
            vec![(0.0, 1.0), (90.0, 1.0), (180.0, 1.0), (270.0, 1.0)];
        assert!(fit_fringe(&aliased).is_err());
        // Two distinct angles only.
        let two: Vec<(f64, f64)> = vec![(0.0, 1.0), (30.0, 2.0), (90.0, 1.0), (120.0, 2.0)];
        assert!(fit_fringe(&two).is_err());
        // Negative offset.
        let negative = model_points(-10.0, 2.0, 0.0, 12);
        assert!(matches!(
            fit_fringe(&negative),
            Err(Error::DegenerateData(_))
        ));
    }

    #[test]
    fn fit_is_periodic_and_phase_equivariant() {
        let base = fit_fringe(&model_points(100.0, 40.0, 50.0, 20)).unwrap();
        let shifted: Vec<(f64, f64)> = model_points(100.0, 40.0, 50.0, 20)
            .into_iter()
            .map(|(t, y)| (t + 90.0, y))
            .collect();
        let fit90 = fit_fringe(&shifted).unwrap();
        assert_abs_diff_eq!(fit90.offset, base.offset, epsilon = 1e-9);
        assert_abs_diff_eq!(fit90.amplitude, base.amplitude, epsilon = 1e-9);
        assert_abs_diff_eq!(fit90.phase_rad, base.phase_rad, epsilon = 1e-9);

        // θ → θ + δ moves the fitted phase by 4δ (mod 2π).
        let delta = 5.0f64;
        let moved: Vec<(f64, f64)> = model_points(100.0, 40.0, 50.0, 20)
            .into_iter()
            .map(|(t, y)| (t + delta, y))
            .collect();
        let fit_moved = fit_fringe(&moved).unwrap();
        let want = (base.phase_rad + 4.0 * delta.to_radians())
            .rem_euclid(2.0 * std::f64::consts::PI);
        let got = fit_moved.phase_rad.rem_euclid(2.0 * std::f64::consts::PI);
        assert_abs_diff_eq!(got, want, epsilon = 1e-9);
    }

    #[test]
    fn subtraction_preserves_negative_net_counts() {
        let tally = SettingTally {
            setting: MeasurementSetting::new(0.0, 0.0),
            coincidences: 100,
            singles_s: 1000,
            singles_i: 800,
            n_gates: 1_000_000,
        };
        assert_abs_diff_eq!(subtract_accidentals(&tally), 99.2, epsilon = 1e-12);

        let negative = SettingTally {
            coincidences: 1,
            singles_s: 2000,
            singles_i: 1000,
            n_gates: 1_000_000,
            setting: MeasurementSetting::new(0.0, 0.0),
        };
        assert_abs_diff_eq!(subtract_accidentals(&negative), -1.0, epsilon = 1e-12);

        let empty = SettingTally {
            coincidences: 0,
            singles_s: 0,
            singles_i: 0,
            n_gates: 1,
            setting: MeasurementSetting::new(0.0, 0.0),
        };
        assert_eq!(subtract_accidentals(&empty), 0.0);
    }

    fn analytic_tallies(visibility: f64, gates_per_setting: u64) -> Vec<SettingTally> {
        let grid = chsh_setting_grid(0.0, 45.0, 22.5, 67.5);
        grid.iter()
            .map(|setting| {
                let delta =
                    (setting.signal_deg - setting.idler_deg).to_radians();
                // Werner-state coincidence probability.
                let p = visibility * 0.5 * delta.cos().powi(2) + (1.0 - visibility) / 4.0;
                SettingTally {
                    setting: *setting,
                    coincidences: (gates_per_setting as f64 * p).round() as u64,
                    singles_s: (gates_per_setting as f64 * 0.5).round() as u64,
                    singles_i: (gates_per_setting as f64 * 0.5).round() as u64,
                    n_gates: gates_per_setting,
                }
            })
            .collect()
    }

    #[test]
    fn chsh_from_analytic_tallies_reaches_tsirelson() {
        let tallies = analytic_tallies(1.0, 1_000_000_000);
        let est = chsh_from_tallies(&tallies, false).unwrap();
        assert_abs_diff_eq!(est.s, 2.0 * std::f64::consts::SQRT_2, epsilon = 1e-4);
        assert!(!est.subtracted);
    }

    #[test]
    fn chsh_of_flat_counts_is_zero() {
        let grid = chsh_setting_grid(0.0, 45.0, 22.5, 67.5);
        let tallies: Vec<SettingTally> = grid
            .iter()
            .map(|s| SettingTally {
                setting: *s,
                coincidences: 500,
                singles_s: 1000,
                singles_i: 1000,
                n_gates: 100_000,
            })
            .collect();
        let est = chsh_from_tallies(&tallies, false).unwrap();
        assert_abs_diff_eq!(est.s, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn chsh_scales_linearly_in_werner_visibility() {
        for &v in &[0.2, 0.5, 0.831, 1.0] {
            let tallies = analytic_tallies(v, 4_000_000_000);
            let est = chsh_from_tallies(&tallies, false).unwrap();
            let want = 2.0 * std::f64::consts::SQRT_2 * v;
            assert!(
                (est.s - want).abs() < est.sigma_s.max(1e-4),
                "V={v}: S={} want {want} sigma={}",
                est.s,
                est.sigma_s
            );
        }
    }

    #[test]
    fn chsh_rejects_bad_inputs() {
        let tallies = analytic_tallies(1.0, 1000);
        assert!(chsh_from_tallies(&tallies[..8], false).is_err());

        let mut zeros = analytic_tallies(1.0, 1000);
        for t in zeros.iter_mut().take(4) {
            t.coincidences = 0;
        }
        assert!(matches!(
            chsh_from_tallies(&zeros, false),
            Err(Error::DegenerateMeasurement(_))
        ));
    }

    #[test]
    fn visibility_from_fit_cases() {
        let fit = FringeFit {
            offset: 100.0,
            amplitude: 80.0,
            phase_rad: 0.0,
            visibility: 0.8,
            rms_residual: 0.0,
        };
        assert_abs_diff_eq!(visibility_from_fit(&fit).unwrap(), 0.8, epsilon = 1e-12);
        let flat = FringeFit {
            amplitude: 0.0,
            visibility: 0.0,
            ..fit.clone()
        };
        assert_abs_diff_eq!(visibility_from_fit(&flat).unwrap(), 0.0, epsilon = 1e-12);
        let bad = FringeFit {
            offset: 0.0,
            ..fit
        };
        assert!(visibility_from_fit(&bad).is_err());
    }
}
