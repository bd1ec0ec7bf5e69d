//! Gate-by-gate stochastic simulation of pair generation, Raman noise,
//! detection, and coincidence counting.
//!
//! Determinism contract: gates are grouped into fixed-size chunks and every
//! chunk draws from its own ChaCha substream (stream id = chunk index) seeded
//! from a key taken off the caller's rng. Chunk tallies merge by addition,
//! so the result is bit-identical no matter how many worker threads execute
//! the chunks — or whether the `parallel` feature is enabled at all.

use rand::distr::{Bernoulli, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Poisson;

use crate::error::{Error, Result};
use crate::quantum::{outcome_probs, MeasurementSetting, TwoPhotonState};

/// Gates per rng substream; fixed so that tallies are independent of the
/// worker count.
pub const GATES_PER_CHUNK: u64 = 16_384;

/// Counting-run parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Detector gates per measurement setting.
    pub n_gates: u64,
    /// Mean photon pairs generated per gate.
    pub mu_pair: f64,
    /// Mean Raman noise photons per gate, signal channel.
    pub raman_s: f64,
    /// Mean Raman noise photons per gate, idler channel.
    pub raman_i: f64,
    /// Collection-and-detection efficiency, signal channel.
    pub eta_s: f64,
    /// Collection-and-detection efficiency, idler channel.
    pub eta_i: f64,
    /// Dark-click probability per gate, signal channel.
    pub dark_s: f64,
    /// Dark-click probability per gate, idler channel.
    pub dark_i: f64,
    /// Residual pump-leak click probability per gate, signal channel.
    pub pump_leak_s: f64,
    /// Residual pump-leak click probability per gate, idler channel.
    pub pump_leak_i: f64,
    /// Detector gating rate, Hz.
    pub gate_rate_hz: f64,
    /// Detector gate width, ns.
    pub gate_width_ns: f64,
    /// Base seed for the per-setting random streams.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            // 20-second accumulation windows at the 1 MHz gating rate.
            n_gates: 20_000_000,
            mu_pair: 0.0,
            raman_s: 0.0,
            raman_i: 0.0,
            eta_s: 0.01,
            eta_i: 0.01,
            dark_s: 0.0,
            dark_i: 0.0,
            pump_leak_s: 0.0,
            pump_leak_i: 0.0,
            gate_rate_hz: 1.0e6,
            gate_width_ns: 2.5,
            seed: 1,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_gates < 1 {
            return Err(Error::invalid("n_gates must be at least 1"));
        }
        for (name, p) in [
            ("eta_s", self.eta_s),
            ("eta_i", self.eta_i),
            ("dark_s", self.dark_s),
            ("dark_i", self.dark_i),
            ("pump_leak_s", self.pump_leak_s),
            ("pump_leak_i", self.pump_leak_i),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("{name}: probability out of range")));
            }
        }
        for (name, r) in [
            ("mu_pair", self.mu_pair),
            ("raman_s", self.raman_s),
            ("raman_i", self.raman_i),
        ] {
            if !r.is_finite() || r < 0.0 {
                return Err(Error::invalid(format!("{name} must be non-negative")));
            }
        }
        if !self.gate_rate_hz.is_finite()
            || self.gate_rate_hz <= 0.0
            || !self.gate_width_ns.is_finite()
            || self.gate_width_ns <= 0.0
        {
            return Err(Error::invalid("gate rate and width must be positive"));
        }
        Ok(())
    }
}

/// Pump-laser parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PumpConfig {
    pub avg_power_dbm: f64,
    pub pulse_width_ns: f64,
    pub rep_rate_hz: f64,
    pub wavelength_nm: f64,
    pub signal_nm: f64,
    pub idler_nm: f64,
}

impl Default for PumpConfig {
    fn default() -> Self {
        Self {
            avg_power_dbm: -5.5,
            pulse_width_ns: 1.0,
            rep_rate_hz: 1.0e6,
            wavelength_nm: 1551.1,
            signal_nm: 1549.3,
            idler_nm: 1552.9,
        }
    }
}

impl PumpConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.pulse_width_ns) || !positive(self.rep_rate_hz) {
            return Err(Error::invalid("pulse width and repetition rate must be positive"));
        }
        if !self.avg_power_dbm.is_finite() {
            return Err(Error::invalid("average power must be finite"));
        }
        if !(self.signal_nm < self.wavelength_nm && self.wavelength_nm < self.idler_nm) {
            return Err(Error::invalid(
                "wavelengths must satisfy signal < pump < idler",
            ));
        }
        Ok(())
    }
}

/// Counters accumulated over one measurement setting.
#[derive(Debug, Clone, PartialEq)]
pub struct SettingTally {
    pub setting: MeasurementSetting,
    pub coincidences: u64,
    pub singles_s: u64,
    pub singles_i: u64,
    pub n_gates: u64,
}

/// Peak pulse power from the average power and the duty cycle, assuming
/// rectangular pulses.
pub fn peak_power_w(pump: &PumpConfig) -> Result<f64> {
    pump.validate()?;
    let duty = pump.pulse_width_ns * 1e-9 * pump.rep_rate_hz;
    if !duty.is_finite() || duty <= 0.0 {
        return Err(Error::invalid("duty cycle must be positive"));
    }
    let avg_w = 10f64.powf(pump.avg_power_dbm / 10.0) * 1e-3;
    Ok(avg_w / duty)
}

/// Mean pairs per pulse μ = (γPL)²·κ, where κ lumps the spectral collection
/// factor. Errors once μ ≥ 1, where the independent-pair approximation
/// breaks down.
pub fn pair_probability(
    gamma_per_w_km: f64,
    peak_power_w: f64,
    length_km: f64,
    collection_kappa: f64,
) -> Result<f64> {
    for (name, v) in [
        ("gamma", gamma_per_w_km),
        ("peak power", peak_power_w),
        ("length", length_km),
        ("kappa", collection_kappa),
    ] {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::invalid(format!("{name} must be non-negative")));
        }
    }
    let mu = (gamma_per_w_km * peak_power_w * length_km).powi(2) * collection_kappa;
    if mu >= 1.0 {
        return Err(Error::OutOfModel(format!(
            "mean pairs per gate {mu} >= 1; multi-pair approximation invalid"
        )));
    }
    Ok(mu)
}

/// Precomputed per-gate sampling model for one setting.
struct GateModel {
    outcome_cdf: [f64; 3],
    pair_dist: Option<Poisson<f64>>,
    raman_s_dist: Option<Poisson<f64>>,
    raman_i_dist: Option<Poisson<f64>>,
    det_s: Bernoulli,
    det_i: Bernoulli,
    half: Bernoulli,
    dark_s: Option<Bernoulli>,
    dark_i: Option<Bernoulli>,
    leak_s: Option<Bernoulli>,
    leak_i: Option<Bernoulli>,
}

impl GateModel {
    fn new(state: &TwoPhotonState, setting: &MeasurementSetting, run: &RunConfig) -> Result<Self> {
        run.validate()?;
        let probs = outcome_probs(state, setting)?;
        let outcome_cdf = [
            probs[0],
            probs[0] + probs[1],
            probs[0] + probs[1] + probs[2],
        ];
        let poisson = |lambda: f64| -> Result<Option<Poisson<f64>>> {
            if lambda > 0.0 {
                Poisson::new(lambda)
                    .map(Some)
                    .map_err(|e| Error::invalid(format!("bad Poisson rate {lambda}: {e}")))
            } else {
                Ok(None)
            }
        };
        let bernoulli_opt = |p: f64| -> Option<Bernoulli> {
            (p > 0.0).then(|| Bernoulli::new(p).expect("validated probability"))
        };
        Ok(Self {
            outcome_cdf,
            pair_dist: poisson(run.mu_pair)?,
            raman_s_dist: poisson(run.raman_s)?,
            raman_i_dist: poisson(run.raman_i)?,
            det_s: Bernoulli::new(run.eta_s).expect("validated probability"),
            det_i: Bernoulli::new(run.eta_i).expect("validated probability"),
            half: Bernoulli::new(0.5).expect("constant"),
            dark_s: bernoulli_opt(run.dark_s),
            dark_i: bernoulli_opt(run.dark_i),
            leak_s: bernoulli_opt(run.pump_leak_s),
            leak_i: bernoulli_opt(run.pump_leak_i),
        })
    }

    /// One detector gate; returns (signal clicked, idler clicked).
    fn simulate_gate<R: Rng>(&self, rng: &mut R) -> (bool, bool) {
        let mut click_s = false;
        let mut click_i = false;

        if let Some(pairs) = &self.pair_dist {
            let k = pairs.sample(rng) as u64;
            for _ in 0..k {
                let u: f64 = rng.random();
                let (pass_s, pass_i) = if u < self.outcome_cdf[0] {
                    (true, true)
                } else if u < self.outcome_cdf[1] {
                    (true, false)
                } else if u < self.outcome_cdf[2] {
                    (false, true)
                } else {
                    (false, false)
                };
                if pass_s && self.det_s.sample(rng) {
                    click_s = true;
                }
                if pass_i && self.det_i.sample(rng) {
                    click_i = true;
                }
            }
        }

        // Unpolarized Raman photons: half pass the analyzer, then detection.
        if let Some(raman) = &self.raman_s_dist {
            let n = raman.sample(rng) as u64;
            for _ in 0..n {
                if self.half.sample(rng) && self.det_s.sample(rng) {
                    click_s = true;
                }
            }
        }
        if let Some(raman) = &self.raman_i_dist {
            let n = raman.sample(rng) as u64;
            for _ in 0..n {
                if self.half.sample(rng) && self.det_i.sample(rng) {
                    click_i = true;
                }
            }
        }

        if let Some(d) = &self.dark_s {
            if d.sample(rng) {
                click_s = true;
            }
        }
        if let Some(d) = &self.dark_i {
            if d.sample(rng) {
                click_i = true;
            }
        }
        if let Some(l) = &self.leak_s {
            if l.sample(rng) {
                click_s = true;
            }
        }
        if let Some(l) = &self.leak_i {
            if l.sample(rng) {
                click_i = true;
            }
        }

        (click_s, click_i)
    }
}

fn chunk_bounds(n_gates: u64, chunk: u64) -> std::ops::Range<u64> {
    let lo = chunk * GATES_PER_CHUNK;
    lo..(lo + GATES_PER_CHUNK).min(n_gates)
}

fn chunk_rng(key: &[u8; 32], chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::from_seed(*key);
    rng.set_stream(chunk);
    rng
}

#[derive(Clone, Copy, Default)]
struct Counts {
    coincidences: u64,
    singles_s: u64,
    singles_i: u64,
}

impl Counts {
    fn merge(self, other: Counts) -> Counts {
        Counts {
            coincidences: self.coincidences + other.coincidences,
            singles_s: self.singles_s + other.singles_s,
            singles_i: self.singles_i + other.singles_i,
        }
    }
}

fn count_chunk(model: &GateModel, key: &[u8; 32], n_gates: u64, chunk: u64) -> Counts {
    let mut rng = chunk_rng(key, chunk);
    let mut counts = Counts::default();
    for _ in chunk_bounds(n_gates, chunk) {
        let (s, i) = model.simulate_gate(&mut rng);
        counts.singles_s += s as u64;
        counts.singles_i += i as u64;
        counts.coincidences += (s && i) as u64;
    }
    counts
}

/// Simulate `run.n_gates` detector gates at one analyzer setting.
///
/// Consumes 32 bytes from `rng` to key the per-chunk substreams; runs chunks
/// in parallel when the `parallel` feature is enabled.
pub fn simulate_setting<R: Rng + ?Sized>(
    state: &TwoPhotonState,
    setting: &MeasurementSetting,
    run: &RunConfig,
    rng: &mut R,
) -> Result<SettingTally> {
    #[cfg(feature = "parallel")]
    {
        simulate_setting_impl(state, setting, run, rng, true)
    }
    #[cfg(not(feature = "parallel"))]
    {
        simulate_setting_impl(state, setting, run, rng, false)
    }
}

/// Single-threaded variant of [`simulate_setting`]; produces bit-identical
/// tallies. Kept public so benchmarks can compare the two paths directly.
pub fn simulate_setting_sequential<R: Rng + ?Sized>(
    state: &TwoPhotonState,
    setting: &MeasurementSetting,
    run: &RunConfig,
    rng: &mut R,
) -> Result<SettingTally> {
    simulate_setting_impl(state, setting, run, rng, false)
}

fn simulate_setting_impl<R: Rng + ?Sized>(
    state: &TwoPhotonState,
    setting: &MeasurementSetting,
    run: &RunConfig,
    rng: &mut R,
    parallel: bool,
) -> Result<SettingTally> {
    let model = GateModel::new(state, setting, run)?;
    let mut key = [0u8; 32];
    rng.fill_bytes(&mut key);
    let n_chunks = run.n_gates.div_ceil(GATES_PER_CHUNK);

    let totals = if parallel {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            (0..n_chunks)
                .into_par_iter()
                .map(|c| count_chunk(&model, &key, run.n_gates, c))
                .reduce(Counts::default, Counts::merge)
        }
        #[cfg(not(feature = "parallel"))]
        unreachable!("parallel path requested without the parallel feature")
    } else {
        (0..n_chunks)
            .map(|c| count_chunk(&model, &key, run.n_gates, c))
            .fold(Counts::default(), Counts::merge)
    };

    Ok(SettingTally {
        setting: *setting,
        coincidences: totals.coincidences,
        singles_s: totals.singles_s,
        singles_i: totals.singles_i,
        n_gates: run.n_gates,
    })
}

/// Uncorrelated-click estimate of accidental coincidences:
/// singles_s · singles_i / n_gates.
pub fn estimate_accidentals(tally: &SettingTally) -> f64 {
    if tally.n_gates == 0 {
        return 0.0;
    }
    tally.singles_s as f64 * tally.singles_i as f64 / tally.n_gates as f64
}

#[derive(Clone, Copy)]
struct DelayedChunk {
    pairs: u64,
    first_i: bool,
    last_s: bool,
}

fn delayed_chunk(model: &GateModel, key: &[u8; 32], n_gates: u64, chunk: u64) -> DelayedChunk {
    let mut rng = chunk_rng(key, chunk);
    let mut pairs = 0u64;
    let mut first_i = false;
    let mut prev_s = false;
    let mut first = true;
    for _ in chunk_bounds(n_gates, chunk) {
        let (s, i) = model.simulate_gate(&mut rng);
        if first {
            first_i = i;
            first = false;
        } else if prev_s && i {
            pairs += 1;
        }
        prev_s = s;
    }
    DelayedChunk {
        pairs,
        first_i,
        last_s: prev_s,
    }
}

/// Accidental-coincidence measurement by the delayed-gate method: re-runs
/// the gate simulation and pairs signal clicks of gate g with idler clicks
/// of gate g+1. Converges to [`estimate_accidentals`] in expectation.
pub fn delayed_gate_accidentals<R: Rng + ?Sized>(
    state: &TwoPhotonState,
    setting: &MeasurementSetting,
    run: &RunConfig,
    rng: &mut R,
) -> Result<u64> {
    let model = GateModel::new(state, setting, run)?;
    let mut key = [0u8; 32];
    rng.fill_bytes(&mut key);
    let n_chunks = run.n_gates.div_ceil(GATES_PER_CHUNK);

    let chunks: Vec<DelayedChunk> = {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            (0..n_chunks)
                .into_par_iter()
                .map(|c| delayed_chunk(&model, &key, run.n_gates, c))
                .collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            (0..n_chunks)
                .map(|c| delayed_chunk(&model, &key, run.n_gates, c))
                .collect()
        }
    };

    let mut total = 0u64;
    for (k, c) in chunks.iter().enumerate() {
        total += c.pairs;
        if k + 1 < chunks.len() && c.last_s && chunks[k + 1].first_i {
            total += 1;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::phi_plus;
    use approx::assert_abs_diff_eq;

    #[test]
    fn peak_power_matches_paper_parameters() {
        let p = peak_power_w(&PumpConfig::default()).unwrap();
        assert_abs_diff_eq!(p, 0.2818, epsilon = 1e-4);

        let zero_dbm = PumpConfig {
            avg_power_dbm: 0.0,
            ..PumpConfig::default()
        };
        assert_abs_diff_eq!(peak_power_w(&zero_dbm).unwrap(), 1.0, epsilon = 1e-12);

        let cw = PumpConfig {
            avg_power_dbm: 0.0,
            pulse_width_ns: 1000.0,
            rep_rate_hz: 1.0e6,
            ..PumpConfig::default()
        };
        assert_abs_diff_eq!(peak_power_w(&cw).unwrap(), 0.001, epsilon = 1e-12);
    }

    #[test]
    fn pair_probability_scaling_and_cutoff() {
        let p = peak_power_w(&PumpConfig::default()).unwrap();
        let mu = pair_probability(20.0, p, 1.0, 1e-3).unwrap();
        assert_abs_diff_eq!(mu, 0.03177, epsilon = 1e-4);
        assert_eq!(pair_probability(20.0, 0.0, 1.0, 1e-3).unwrap(), 0.0);
        assert!(matches!(
            pair_probability(20.0, p, 1.0, 1.0),
            Err(Error::OutOfModel(_))
        ));
        assert!(pair_probability(-1.0, p, 1.0, 1e-3).is_err());
    }

    #[test]
    fn empty_model_produces_no_counts() {
        let run = RunConfig {
            n_gates: 10_000,
            ..RunConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let tally =
            simulate_setting(&phi_plus(), &MeasurementSetting::new(0.0, 0.0), &run, &mut rng)
                .unwrap();
        assert_eq!(tally.coincidences, 0);
        assert_eq!(tally.singles_s, 0);
        assert_eq!(tally.singles_i, 0);
        assert_eq!(tally.n_gates, 10_000);
    }

    #[test]
    fn dark_counts_alone_match_expectation() {
        let run = RunConfig {
            n_gates: 1_000_000,
            dark_s: 0.001,
            dark_i: 0.001,
            ..RunConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let tally =
            simulate_setting(&phi_plus(), &MeasurementSetting::new(0.0, 0.0), &run, &mut rng)
                .unwrap();
        // singles ≈ 1000 each, coincidences ≈ 1; allow 4σ.
        let sigma = (1e6 * 0.001f64).sqrt();
        assert!((tally.singles_s as f64 - 1000.0).abs() < 4.0 * sigma);
        assert!((tally.singles_i as f64 - 1000.0).abs() < 4.0 * sigma);
        assert!(tally.coincidences <= 8);
    }

    #[test]
    fn tallies_are_deterministic_and_thread_count_independent() {
        let run = RunConfig {
            n_gates: 100_000,
            mu_pair: 0.05,
            raman_s: 0.1,
            raman_i: 0.08,
            eta_s: 0.4,
            eta_i: 0.3,
            dark_s: 1e-4,
            dark_i: 1e-4,
            ..RunConfig::default()
        };
        let setting = MeasurementSetting::new(22.5, 45.0);
        let state = phi_plus();
        let mut rng_a = ChaCha8Rng::seed_from_u64(7);
        let mut rng_b = ChaCha8Rng::seed_from_u64(7);
        let mut rng_c = ChaCha8Rng::seed_from_u64(7);
        let a = simulate_setting(&state, &setting, &run, &mut rng_a).unwrap();
        let b = simulate_setting(&state, &setting, &run, &mut rng_b).unwrap();
        let c = simulate_setting_sequential(&state, &setting, &run, &mut rng_c).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
        assert!(a.coincidences <= a.singles_s.min(a.singles_i));
        assert!(a.singles_s.max(a.singles_i) <= a.n_gates);
    }

    #[test]
    fn accidental_estimator_formula() {
        let tally = SettingTally {
            setting: MeasurementSetting::new(0.0, 0.0),
            coincidences: 100,
            singles_s: 1000,
            singles_i: 800,
            n_gates: 1_000_000,
        };
        assert_abs_diff_eq!(estimate_accidentals(&tally), 0.8, epsilon = 1e-12);

        let empty = SettingTally {
            singles_s: 0,
            ..tally.clone()
        };
        assert_eq!(estimate_accidentals(&empty), 0.0);

        let saturated = SettingTally {
            coincidences: 1_000_000,
            singles_s: 1_000_000,
            singles_i: 1_000_000,
            n_gates: 1_000_000,
            setting: MeasurementSetting::new(0.0, 0.0),
        };
        assert_abs_diff_eq!(estimate_accidentals(&saturated), 1e6, epsilon = 1e-6);
    }

    #[test]
    fn delayed_gate_count_is_zero_for_empty_model() {
        let run = RunConfig {
            n_gates: 50_000,
            ..RunConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = delayed_gate_accidentals(
            &phi_plus(),
            &MeasurementSetting::new(0.0, 0.0),
            &run,
            &mut rng,
        )
        .unwrap();
        assert_eq!(n, 0);
    }

    #[test]
    fn delayed_gate_dark_only_matches_product_estimate() {
        let run = RunConfig {
            n_gates: 1_000_000,
            dark_s: 0.001,
            dark_i: 0.001,
            ..RunConfig::default()
        };
        let state = phi_plus();
        let setting = MeasurementSetting::new(0.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let delayed = delayed_gate_accidentals(&state, &setting, &run, &mut rng).unwrap();
        // Expectation (n−1)·p_s·p_i ≈ 1; 4σ band of a Poisson(1).
        assert!(delayed <= 5, "delayed = {delayed}");
    }
}
