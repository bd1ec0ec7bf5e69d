//! Scenario config files: `[section]` headers with `key = value` lines and
//! `#` comments. Unknown sections or keys are rejected; missing keys take
//! the built-in defaults. Errors name `section.key` and the line number.

use pairsim::montecarlo::{pair_probability, peak_power_w, PumpConfig, RunConfig};
use pairsim::scheme::SchemeConfig;

/// Spectral collection factor folded into the derived mean pairs per gate
/// when `run.mu_pair` is not given explicitly.
pub const DEFAULT_COLLECTION_KAPPA: f64 = 1e-3;

/// Gates per measurement point when the file does not say otherwise
/// (a 20-second accumulation window at the 1 MHz gating rate).
pub const DEFAULT_GATES_PER_POINT: u64 = 20_000_000;

/// Number of drift trials when the file does not say otherwise.
pub const DEFAULT_DRIFT_TRIALS: u64 = 100;

/// Which measurement the run reproduces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// Analytic CHSH and fringe visibility, no Monte Carlo.
    Ideal,
    /// Coincidence fringes at the four fixed polarizer angles.
    Fringe,
    /// 16-setting Monte Carlo CHSH estimate.
    Chsh { subtract: bool },
    /// Compensated vs uncompensated visibility under fiber drift.
    Drift { n_trials: u64 },
}

impl Scenario {
    pub fn kind(&self) -> &'static str {
        match self {
            Scenario::Ideal => "ideal",
            Scenario::Fringe => "fringe",
            Scenario::Chsh { .. } => "chsh",
            Scenario::Drift { .. } => "drift",
        }
    }
}

/// Fully resolved run parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Configs {
    pub pump: PumpConfig,
    pub scheme: SchemeConfig,
    pub run: RunConfig,
    pub scenario: Scenario,
}

/// A config problem, pointing at `section.key` and the offending line
/// (line 0 marks a defaults- or file-level problem).
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{key}: {message} (line {line})")]
pub struct ConfigError {
    pub line: usize,
    pub key: String,
    pub message: String,
}

impl ConfigError {
    fn new(line: usize, key: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            line,
            key: key.into(),
            message: message.into(),
        }
    }
}

fn parse_f64(line: usize, key: &str, value: &str) -> Result<f64, ConfigError> {
    value
        .parse::<f64>()
        .map_err(|_| ConfigError::new(line, key, format!("unparseable number '{value}'")))
}

fn parse_count(line: usize, key: &str, value: &str) -> Result<u64, ConfigError> {
    if let Ok(n) = value.parse::<u64>() {
        return Ok(n);
    }
    // Accept integral scientific notation such as 2e7.
    match value.parse::<f64>() {
        Ok(x) if x >= 0.0 && x.fract() == 0.0 && x <= u64::MAX as f64 => Ok(x as u64),
        _ => Err(ConfigError::new(
            line,
            key,
            format!("unparseable count '{value}'"),
        )),
    }
}

fn parse_bool(line: usize, key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(ConfigError::new(
            line,
            key,
            format!("expected true or false, got '{value}'"),
        )),
    }
}

fn check_probability(line: usize, key: &str, value: f64) -> Result<f64, ConfigError> {
    if !(0.0..=1.0).contains(&value) {
        return Err(ConfigError::new(line, key, "probability out of range"));
    }
    Ok(value)
}

fn check_non_negative(line: usize, key: &str, value: f64) -> Result<f64, ConfigError> {
    if !value.is_finite() || value < 0.0 {
        return Err(ConfigError::new(line, key, "must be non-negative"));
    }
    Ok(value)
}

fn check_positive(line: usize, key: &str, value: f64) -> Result<f64, ConfigError> {
    if !value.is_finite() || value <= 0.0 {
        return Err(ConfigError::new(line, key, "must be positive"));
    }
    Ok(value)
}

fn check_finite(line: usize, key: &str, value: f64) -> Result<f64, ConfigError> {
    if !value.is_finite() {
        return Err(ConfigError::new(line, key, "must be finite"));
    }
    Ok(value)
}

#[derive(Default)]
struct ScenarioKeys {
    kind: Option<(usize, String)>,
    drift_trials: Option<(usize, u64)>,
    subtract: Option<(usize, bool)>,
}

/// Parse a config file into fully populated configs with defaults applied.
pub fn parse_config(text: &str) -> Result<Configs, ConfigError> {
    let mut pump = PumpConfig::default();
    let mut scheme = SchemeConfig::default();
    let mut run = RunConfig {
        n_gates: DEFAULT_GATES_PER_POINT,
        ..RunConfig::default()
    };
    let mut mu_given = false;
    let mut scenario_keys = ScenarioKeys::default();
    let mut section: Option<(String, usize)> = None;

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::new(line_no, line, "malformed section header"))?
                .trim();
            if !matches!(name, "pump" | "scheme" | "run" | "noise" | "scenario") {
                return Err(ConfigError::new(
                    line_no,
                    name,
                    "unknown section (expected pump, scheme, run, noise, or scenario)",
                ));
            }
            section = Some((name.to_string(), line_no));
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            ConfigError::new(line_no, line, "expected 'key = value'")
        })?;
        let key = key.trim();
        let value = value.trim();
        let section_name = match &section {
            Some((name, _)) => name.as_str(),
            None => {
                return Err(ConfigError::new(
                    line_no,
                    key,
                    "key outside any [section]",
                ))
            }
        };
        let qualified = format!("{section_name}.{key}");
        let q = qualified.as_str();
        match (section_name, key) {
            ("pump", "avg_power_dbm") => {
                pump.avg_power_dbm = check_finite(line_no, q, parse_f64(line_no, q, value)?)?
            }
            ("pump", "pulse_width_ns") => {
                pump.pulse_width_ns = check_positive(line_no, q, parse_f64(line_no, q, value)?)?
            }
            ("pump", "rep_rate_hz") => {
                pump.rep_rate_hz = check_positive(line_no, q, parse_f64(line_no, q, value)?)?
            }
            ("pump", "wavelength_nm") => {
                pump.wavelength_nm = check_positive(line_no, q, parse_f64(line_no, q, value)?)?
            }
            ("pump", "signal_nm") => {
                pump.signal_nm = check_positive(line_no, q, parse_f64(line_no, q, value)?)?
            }
            ("pump", "idler_nm") => {
                pump.idler_nm = check_positive(line_no, q, parse_f64(line_no, q, value)?)?
            }
            ("scheme", "pmf_delay_ns") => {
                scheme.pmf_delay_ns = check_non_negative(line_no, q, parse_f64(line_no, q, value)?)?
            }
            ("scheme", "pmf_length_m") => {
                scheme.pmf_length_m = check_positive(line_no, q, parse_f64(line_no, q, value)?)?
            }
            ("scheme", "fiber_length_km") => {
                scheme.fiber_length_km =
                    check_positive(line_no, q, parse_f64(line_no, q, value)?)?
            }
            ("scheme", "gamma_per_w_km") => {
                scheme.gamma_per_w_km =
                    check_non_negative(line_no, q, parse_f64(line_no, q, value)?)?
            }
            ("scheme", "launch_angle_deg") => {
                scheme.launch_angle_deg = check_finite(line_no, q, parse_f64(line_no, q, value)?)?
            }
            ("scheme", "pump_phase_rad") => {
                scheme.pump_phase_rad = check_finite(line_no, q, parse_f64(line_no, q, value)?)?
            }
            ("scheme", "fiber_group_delay_ns_per_km") => {
                scheme.fiber_group_delay_ns_per_km =
                    check_non_negative(line_no, q, parse_f64(line_no, q, value)?)?
            }
            ("run", "n_gates") => {
                let n = parse_count(line_no, q, value)?;
                if n < 1 {
                    return Err(ConfigError::new(line_no, q, "must be at least 1"));
                }
                run.n_gates = n;
            }
            ("run", "mu_pair") => {
                run.mu_pair = check_non_negative(line_no, q, parse_f64(line_no, q, value)?)?;
                mu_given = true;
            }
            ("run", "eta_s") => {
                run.eta_s = check_probability(line_no, q, parse_f64(line_no, q, value)?)?
            }
            ("run", "eta_i") => {
                run.eta_i = check_probability(line_no, q, parse_f64(line_no, q, value)?)?
            }
            ("run", "gate_rate_hz") => {
                run.gate_rate_hz = check_positive(line_no, q, parse_f64(line_no, q, value)?)?
            }
            ("run", "gate_width_ns") => {
                run.gate_width_ns = check_positive(line_no, q, parse_f64(line_no, q, value)?)?
            }
            ("run", "seed") => run.seed = parse_count(line_no, q, value)?,
            ("noise", "raman_s") => {
                run.raman_s = check_non_negative(line_no, q, parse_f64(line_no, q, value)?)?
            }
            ("noise", "raman_i") => {
                run.raman_i = check_non_negative(line_no, q, parse_f64(line_no, q, value)?)?
            }
            ("noise", "dark_s") => {
                run.dark_s = check_probability(line_no, q, parse_f64(line_no, q, value)?)?
            }
            ("noise", "dark_i") => {
                run.dark_i = check_probability(line_no, q, parse_f64(line_no, q, value)?)?
            }
            ("noise", "pump_leak_s") => {
                run.pump_leak_s = check_probability(line_no, q, parse_f64(line_no, q, value)?)?
            }
            ("noise", "pump_leak_i") => {
                run.pump_leak_i = check_probability(line_no, q, parse_f64(line_no, q, value)?)?
            }
            ("scenario", "kind") => {
                scenario_keys.kind = Some((line_no, value.to_string()));
            }
            ("scenario", "drift_trials") => {
                let n = parse_count(line_no, q, value)?;
                if n < 1 {
                    return Err(ConfigError::new(line_no, q, "must be at least 1"));
                }
                scenario_keys.drift_trials = Some((line_no, n));
            }
            ("scenario", "subtract") => {
                scenario_keys.subtract = Some((line_no, parse_bool(line_no, q, value)?));
            }
            _ => {
                return Err(ConfigError::new(
                    line_no,
                    qualified,
                    "unknown key",
                ))
            }
        }
    }

    // Cross-field checks that need the whole section.
    if !(pump.signal_nm < pump.wavelength_nm && pump.wavelength_nm < pump.idler_nm) {
        return Err(ConfigError::new(
            0,
            "pump.signal_nm",
            "wavelengths must satisfy signal < pump < idler",
        ));
    }

    // Derive the mean pairs per gate from the pump when not given.
    if !mu_given {
        let peak = peak_power_w(&pump)
            .map_err(|e| ConfigError::new(0, "run.mu_pair", format!("cannot derive: {e}")))?;
        run.mu_pair = pair_probability(
            scheme.gamma_per_w_km,
            peak,
            scheme.fiber_length_km,
            DEFAULT_COLLECTION_KAPPA,
        )
        .map_err(|e| ConfigError::new(0, "run.mu_pair", format!("cannot derive: {e}")))?;
    }

    let scenario = build_scenario(&scenario_keys)?;
    Ok(Configs {
        pump,
        scheme,
        run,
        scenario,
    })
}

fn build_scenario(keys: &ScenarioKeys) -> Result<Scenario, ConfigError> {
    let kind = match &keys.kind {
        None => "ideal".to_string(),
        Some((line, value)) => match value.as_str() {
            "ideal" | "fringe" | "chsh" | "drift" => value.clone(),
            other => {
                return Err(ConfigError::new(
                    *line,
                    "scenario.kind",
                    format!("unknown scenario '{other}' (expected ideal, fringe, chsh, or drift)"),
                ))
            }
        },
    };
    if let Some((line, _)) = keys.drift_trials {
        if kind != "drift" {
            return Err(ConfigError::new(
                line,
                "scenario.drift_trials",
                "only valid when scenario.kind = drift",
            ));
        }
    }
    if let Some((line, _)) = keys.subtract {
        if kind != "chsh" {
            return Err(ConfigError::new(
                line,
                "scenario.subtract",
                "only valid when scenario.kind = chsh",
            ));
        }
    }
    Ok(match kind.as_str() {
        "ideal" => Scenario::Ideal,
        "fringe" => Scenario::Fringe,
        "chsh" => Scenario::Chsh {
            subtract: keys.subtract.map(|(_, v)| v).unwrap_or(false),
        },
        "drift" => Scenario::Drift {
            n_trials: keys
                .drift_trials
                .map(|(_, v)| v)
                .unwrap_or(DEFAULT_DRIFT_TRIALS),
        },
        _ => unreachable!("kind validated above"),
    })
}

/// Render configs back to the file format; `parse_config(render_config(c))`
/// reproduces `c` exactly.
pub fn render_config(configs: &Configs) -> String {
    let mut out = String::new();
    let p = &configs.pump;
    out.push_str("[pump]\n");
    out.push_str(&format!("avg_power_dbm = {}\n", p.avg_power_dbm));
    out.push_str(&format!("pulse_width_ns = {}\n", p.pulse_width_ns));
    out.push_str(&format!("rep_rate_hz = {}\n", p.rep_rate_hz));
    out.push_str(&format!("wavelength_nm = {}\n", p.wavelength_nm));
    out.push_str(&format!("signal_nm = {}\n", p.signal_nm));
    out.push_str(&format!("idler_nm = {}\n", p.idler_nm));
    let s = &configs.scheme;
    out.push_str("\n[scheme]\n");
    out.push_str(&format!("pmf_delay_ns = {}\n", s.pmf_delay_ns));
    out.push_str(&format!("pmf_length_m = {}\n", s.pmf_length_m));
    out.push_str(&format!("fiber_length_km = {}\n", s.fiber_length_km));
    out.push_str(&format!("gamma_per_w_km = {}\n", s.gamma_per_w_km));
    out.push_str(&format!("launch_angle_deg = {}\n", s.launch_angle_deg));
    out.push_str(&format!("pump_phase_rad = {}\n", s.pump_phase_rad));
    out.push_str(&format!(
        "fiber_group_delay_ns_per_km = {}\n",
        s.fiber_group_delay_ns_per_km
    ));
    let r = &configs.run;
    out.push_str("\n[run]\n");
    out.push_str(&format!("n_gates = {}\n", r.n_gates));
    out.push_str(&format!("mu_pair = {}\n", r.mu_pair));
    out.push_str(&format!("eta_s = {}\n", r.eta_s));
    out.push_str(&format!("eta_i = {}\n", r.eta_i));
    out.push_str(&format!("gate_rate_hz = {}\n", r.gate_rate_hz));
    out.push_str(&format!("gate_width_ns = {}\n", r.gate_width_ns));
    out.push_str(&format!("seed = {}\n", r.seed));
    out.push_str("\n[noise]\n");
    out.push_str(&format!("raman_s = {}\n", r.raman_s));
    out.push_str(&format!("raman_i = {}\n", r.raman_i));
    out.push_str(&format!("dark_s = {}\n", r.dark_s));
    out.push_str(&format!("dark_i = {}\n", r.dark_i));
    out.push_str(&format!("pump_leak_s = {}\n", r.pump_leak_s));
    out.push_str(&format!("pump_leak_i = {}\n", r.pump_leak_i));
    out.push_str("\n[scenario]\n");
    out.push_str(&format!("kind = {}\n", configs.scenario.kind()));
    match configs.scenario {
        Scenario::Drift { n_trials } => {
            out.push_str(&format!("drift_trials = {n_trials}\n"));
        }
        Scenario::Chsh { subtract } => {
            out.push_str(&format!("subtract = {subtract}\n"));
        }
        _ => {}
    }
    out
}
