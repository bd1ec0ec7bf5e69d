//! Scenario execution and deterministic CSV/summary output.
//!
//! Every emitted number uses fixed six-decimal formatting with `.` as the
//! decimal separator, and files end each line with LF, so output bytes are
//! identical for identical (config, seed) — independent of worker count.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pairsim::analysis::{
    chsh_from_tallies, chsh_setting_grid, fit_fringe, subtract_accidentals,
};
use pairsim::montecarlo::{estimate_accidentals, simulate_setting, SettingTally};
use pairsim::quantum::{chsh, fringe_visibility, hwp_to_analyzer, MeasurementSetting};
use pairsim::scheme::{build_output_state, drift_experiment};

use crate::config::{Configs, Scenario};

/// Fixed polarizer angles of the fringe measurement, degrees.
pub const FRINGE_POLARIZER_DEG: [f64; 4] = [-22.5, 22.5, 67.5, 112.5];
/// Half-wave-plate sweep: 0..=180 degrees in 7.5-degree steps (25 points).
pub const HWP_STEP_DEG: f64 = 7.5;
pub const HWP_POINTS: usize = 25;
/// Canonical CHSH analyzer quadruple (a, a', b, b'), degrees.
pub const CHSH_QUADRUPLE_DEG: [f64; 4] = [0.0, 45.0, 22.5, 67.5];

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("simulation failed: {0}")]
    Sim(#[from] pairsim::Error),
}

/// Format a value with six fixed decimals; normalizes negative zero.
fn fmt6(x: f64) -> String {
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x:.6}")
}

fn write_file(out_dir: &Path, name: &str, contents: &str) -> Result<(), ScenarioError> {
    let path = out_dir.join(name);
    let io_err = |source| ScenarioError::Io {
        path: path.clone(),
        source,
    };
    let mut file = fs::File::create(&path).map_err(io_err)?;
    file.write_all(contents.as_bytes()).map_err(|source| ScenarioError::Io {
        path: path.clone(),
        source,
    })
}

/// Run the configured scenario, writing its outputs into `out_dir`.
pub fn run_scenario(configs: &Configs, out_dir: &Path) -> Result<(), ScenarioError> {
    fs::create_dir_all(out_dir).map_err(|source| ScenarioError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    match configs.scenario {
        Scenario::Ideal => run_ideal(configs, out_dir),
        Scenario::Fringe => run_fringe(configs, out_dir),
        Scenario::Chsh { subtract } => run_chsh(configs, out_dir, subtract),
        Scenario::Drift { n_trials } => run_drift(configs, out_dir, n_trials),
    }
}

fn run_ideal(configs: &Configs, out_dir: &Path) -> Result<(), ScenarioError> {
    let state = build_output_state(&configs.scheme)?;
    let [a, a2, b, b2] = CHSH_QUADRUPLE_DEG;
    let s = chsh(&state, a, a2, b, b2)?;
    let visibility = fringe_visibility(&state, 0.0)?;
    let mut out = String::new();
    out.push_str("scenario = ideal\n");
    out.push_str(&format!(
        "launch_angle_deg = {}\n",
        fmt6(configs.scheme.launch_angle_deg)
    ));
    out.push_str(&format!(
        "pair_phase_rad = {}\n",
        fmt6(2.0 * configs.scheme.pump_phase_rad)
    ));
    out.push_str(&format!(
        "chsh_quadruple_deg = {},{},{},{}\n",
        fmt6(a),
        fmt6(a2),
        fmt6(b),
        fmt6(b2)
    ));
    out.push_str(&format!("S = {}\n", fmt6(s)));
    out.push_str(&format!("fringe_visibility = {}\n", fmt6(visibility)));
    write_file(out_dir, "ideal.txt", &out)
}

fn run_fringe(configs: &Configs, out_dir: &Path) -> Result<(), ScenarioError> {
    let state = build_output_state(&configs.scheme)?;
    let mut rng = ChaCha8Rng::seed_from_u64(configs.run.seed);

    let mut data = String::from(
        "hwp_deg,polarizer_deg,coincidences,accidental_estimate,net_counts\n",
    );
    let mut fits = String::from("polarizer_deg,A,B,phi0_rad,visibility,residual\n");

    for &polarizer in &FRINGE_POLARIZER_DEG {
        let mut points = Vec::with_capacity(HWP_POINTS);
        for k in 0..HWP_POINTS {
            let hwp = k as f64 * HWP_STEP_DEG;
            let setting = MeasurementSetting::new(polarizer, hwp_to_analyzer(hwp, 0.0));
            let tally = simulate_setting(&state, &setting, &configs.run, &mut rng)?;
            let accidental = estimate_accidentals(&tally);
            let net = subtract_accidentals(&tally);
            data.push_str(&format!(
                "{},{},{},{},{}\n",
                fmt6(hwp),
                fmt6(polarizer),
                tally.coincidences,
                fmt6(accidental),
                fmt6(net)
            ));
            points.push((hwp, net));
        }
        let fit = fit_fringe(&points)?;
        fits.push_str(&format!(
            "{},{},{},{},{},{}\n",
            fmt6(polarizer),
            fmt6(fit.offset),
            fmt6(fit.amplitude),
            fmt6(fit.phase_rad),
            fmt6(fit.visibility),
            fmt6(fit.rms_residual)
        ));
    }
    write_file(out_dir, "fringe.csv", &data)?;
    write_file(out_dir, "fringe_fits.csv", &fits)
}

fn run_chsh(configs: &Configs, out_dir: &Path, subtract: bool) -> Result<(), ScenarioError> {
    let state = build_output_state(&configs.scheme)?;
    let mut rng = ChaCha8Rng::seed_from_u64(configs.run.seed);
    let [a, a2, b, b2] = CHSH_QUADRUPLE_DEG;
    let grid = chsh_setting_grid(a, a2, b, b2);

    let mut tallies: Vec<SettingTally> = Vec::with_capacity(16);
    for setting in &grid {
        tallies.push(simulate_setting(&state, setting, &configs.run, &mut rng)?);
    }
    let estimate = chsh_from_tallies(&tallies, subtract)?;

    let mut out = String::from(
        "signal_deg,idler_deg,coincidences,singles_s,singles_i,accidental_estimate,net_counts\n",
    );
    for tally in &tallies {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            fmt6(tally.setting.signal_deg),
            fmt6(tally.setting.idler_deg),
            tally.coincidences,
            tally.singles_s,
            tally.singles_i,
            fmt6(estimate_accidentals(tally)),
            fmt6(subtract_accidentals(tally))
        ));
    }
    out.push_str("S,sigma_S\n");
    out.push_str(&format!("{},{}\n", fmt6(estimate.s), fmt6(estimate.sigma_s)));
    write_file(out_dir, "chsh.csv", &out)
}

fn run_drift(configs: &Configs, out_dir: &Path, n_trials: u64) -> Result<(), ScenarioError> {
    let mut rng = ChaCha8Rng::seed_from_u64(configs.run.seed);
    let compensated = drift_experiment(n_trials, true, &mut rng)?;
    let reference = drift_experiment(n_trials, false, &mut rng)?;
    let mut out = String::from("trial,variant,visibility\n");
    for (trial, v) in compensated.iter().enumerate() {
        out.push_str(&format!("{trial},frm,{}\n", fmt6(*v)));
    }
    for (trial, v) in reference.iter().enumerate() {
        out.push_str(&format!("{trial},reference,{}\n", fmt6(*v)));
    }
    write_file(out_dir, "drift.csv", &out)
}
