//! Scenario files: a flat `key = value` format covering the model,
//! the headway map, the start state, and the numerical grids.
//!
//! Parsing is always *onto* a base scenario (a preset, or the built-in
//! default): keys present in the file replace the base value, keys
//! absent keep it. Unknown keys and unparsable values are errors that
//! name the offending line. Serializing and re-parsing a scenario is
//! the identity, which is what makes re-runs reproducible from the
//! echoed config alone.

use std::fmt::Write as _;
use std::str::FromStr;

use pavflow::{
    Error, HeadwayParams, IntegrationConfig, ModelParams, OracleMode, StateVector,
};

/// Matched pairs must agree on their direction averages to this
/// tolerance.
pub const PAIRING_TOL: f64 = 1e-12;

/// Everything a command needs to run: population model, headway map,
/// initial origin-cell fractions, ODE grid, and the Monte Carlo
/// settings used by the validation paths.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    /// Output-file stem; restricted to `[A-Za-z0-9_-]`.
    pub label: String,
    pub params: ModelParams,
    pub headway: HeadwayParams,
    /// Fraction starting in the HDV origin cell.
    pub frac_h0: f64,
    /// Fraction starting in the AV origin cell.
    pub frac_a0: f64,
    pub integration: IntegrationConfig,
    /// Common speed for constant-speed throughput series, m/s.
    pub v_mps: f64,
    /// Particle count for the stochastic validation commands.
    pub n_particles: usize,
    /// Monte Carlo clock step, seconds.
    pub dt_mc: f64,
    /// Lockout engine used by `oracle-validate`.
    pub oracle_mode: OracleMode,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            label: "default".to_owned(),
            params: ModelParams::leader_dependent_defaults(),
            headway: HeadwayParams::default(),
            frac_h0: 0.5,
            frac_a0: 0.5,
            integration: IntegrationConfig::default(),
            v_mps: 10.0,
            n_particles: 100_000,
            dt_mc: 0.001,
            oracle_mode: OracleMode::ErlangStage,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if self.label.is_empty() {
            return Err(Error::InvalidParam {
                name: "label",
                reason: "must not be empty".into(),
            });
        }
        if let Some(c) = self
            .label
            .chars()
            .find(|c| !(c.is_ascii_alphanumeric() || *c == '_' || *c == '-'))
        {
            return Err(Error::InvalidParam {
                name: "label",
                reason: format!(
                    "labels name output files; `{c}` is outside [A-Za-z0-9_-]"
                ),
            });
        }
        self.params.validate()?;
        self.headway.validate()?;
        for (name, f) in [("frac_h0", self.frac_h0), ("frac_a0", self.frac_a0)] {
            if !(f >= 0.0 && f <= 1.0) {
                return Err(Error::InvalidParam {
                    name,
                    reason: format!("must lie in [0, 1], got {f}"),
                });
            }
        }
        if (self.frac_h0 + self.frac_a0 - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParam {
                name: "frac_h0",
                reason: format!(
                    "origin fractions must sum to 1, got {} + {}",
                    self.frac_h0, self.frac_a0
                ),
            });
        }
        self.integration.validate(&self.params)?;
        if !(self.v_mps > 0.0 && self.v_mps.is_finite()) {
            return Err(Error::InvalidParam {
                name: "v_mps",
                reason: format!("must be positive and finite, got {}", self.v_mps),
            });
        }
        if !(self.dt_mc > 0.0 && self.dt_mc.is_finite()) {
            return Err(Error::InvalidParam {
                name: "dt_mc",
                reason: format!("must be positive and finite, got {}", self.dt_mc),
            });
        }
        Ok(())
    }

    /// Start state with all mass in the two origin cells.
    pub fn x0(&self) -> Result<StateVector, Error> {
        StateVector::from_origin_fractions(self.frac_h0, self.frac_a0, self.params.k)
    }

    /// Serializes every key in a fixed order. `parse_onto` of the
    /// result over any base reproduces `self` exactly.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# pavflow scenario\n");
        let p = &self.params;
        let h = &self.headway;
        let i = &self.integration;
        let _ = write!(
            s,
            "label = {}\n\
             lambda1 = {}\nlambda2 = {}\nlambda3 = {}\nlambda4 = {}\n\
             gamma = {}\nk = {}\nt_lock_h = {}\nt_lock_a = {}\n\
             tau_a0 = {}\ntau_h0 = {}\nl_a0 = {}\nl_h0 = {}\n\
             sigmoid_steepness = {}\nsigmoid_midpoint = {}\n\
             frac_h0 = {}\nfrac_a0 = {}\n\
             step_h = {}\nhorizon_t = {}\nrenormalize = {}\nrecord_stride = {}\n\
             v_mps = {}\nn_particles = {}\ndt_mc = {}\noracle_mode = {}\n",
            self.label,
            p.lambda1,
            p.lambda2,
            p.lambda3,
            p.lambda4,
            p.gamma,
            p.k,
            p.t_lock_h,
            p.t_lock_a,
            h.tau_a0,
            h.tau_h0,
            h.l_a0,
            h.l_h0,
            h.sigmoid_steepness,
            h.sigmoid_midpoint,
            self.frac_h0,
            self.frac_a0,
            i.step_h,
            i.horizon_t,
            i.renormalize,
            i.record_stride,
            self.v_mps,
            self.n_particles,
            self.dt_mc,
            self.oracle_mode,
        );
        s
    }

    /// Parses `text` onto the built-in default scenario.
    pub fn from_text(text: &str) -> Result<Self, Error> {
        parse_onto(text, ScenarioConfig::default())
    }
}

fn parse_value<T>(key: &'static str, line: usize, raw: &str) -> Result<T, Error>
where
    T: FromStr,
    T::Err: std::fmt::Display,
{
    raw.parse::<T>().map_err(|e| Error::InvalidParam {
        name: key,
        reason: format!("line {line}: cannot parse `{raw}`: {e}"),
    })
}

/// Applies `text` over `base` and validates the result. Blank lines
/// and `#` comment lines are skipped; every other line must read
/// `key = value`. A key may appear at most once.
pub fn parse_onto(text: &str, base: ScenarioConfig) -> Result<ScenarioConfig, Error> {
    let mut cfg = base;
    let mut seen: Vec<&str> = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw_line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let Some((key, value)) = trimmed.split_once('=') else {
            return Err(Error::InvalidParam {
                name: "config",
                reason: format!("line {line}: expected `key = value`, got `{trimmed}`"),
            });
        };
        let key = key.trim();
        let value = value.trim();
        if seen.contains(&key) {
            return Err(Error::InvalidParam {
                name: "config",
                reason: format!("line {line}: key `{key}` given twice"),
            });
        }
        seen.push(key);
        match key {
            "label" => cfg.label = value.to_owned(),
            "lambda1" => cfg.params.lambda1 = parse_value("lambda1", line, value)?,
            "lambda2" => cfg.params.lambda2 = parse_value("lambda2", line, value)?,
            "lambda3" => cfg.params.lambda3 = parse_value("lambda3", line, value)?,
            "lambda4" => cfg.params.lambda4 = parse_value("lambda4", line, value)?,
            "gamma" => cfg.params.gamma = parse_value("gamma", line, value)?,
            "k" => cfg.params.k = parse_value("k", line, value)?,
            "t_lock_h" => cfg.params.t_lock_h = parse_value("t_lock_h", line, value)?,
            "t_lock_a" => cfg.params.t_lock_a = parse_value("t_lock_a", line, value)?,
            "tau_a0" => cfg.headway.tau_a0 = parse_value("tau_a0", line, value)?,
            "tau_h0" => cfg.headway.tau_h0 = parse_value("tau_h0", line, value)?,
            "l_a0" => cfg.headway.l_a0 = parse_value("l_a0", line, value)?,
            "l_h0" => cfg.headway.l_h0 = parse_value("l_h0", line, value)?,
            "sigmoid_steepness" => {
                cfg.headway.sigmoid_steepness = parse_value("sigmoid_steepness", line, value)?
            }
            "sigmoid_midpoint" => {
                cfg.headway.sigmoid_midpoint = parse_value("sigmoid_midpoint", line, value)?
            }
            "frac_h0" => cfg.frac_h0 = parse_value("frac_h0", line, value)?,
            "frac_a0" => cfg.frac_a0 = parse_value("frac_a0", line, value)?,
            "step_h" => cfg.integration.step_h = parse_value("step_h", line, value)?,
            "horizon_t" => cfg.integration.horizon_t = parse_value("horizon_t", line, value)?,
            "renormalize" => {
                cfg.integration.renormalize = parse_value("renormalize", line, value)?
            }
            "record_stride" => {
                cfg.integration.record_stride = parse_value("record_stride", line, value)?
            }
            "v_mps" => cfg.v_mps = parse_value("v_mps", line, value)?,
            "n_particles" => cfg.n_particles = parse_value("n_particles", line, value)?,
            "dt_mc" => cfg.dt_mc = parse_value("dt_mc", line, value)?,
            "oracle_mode" => cfg.oracle_mode = parse_value("oracle_mode", line, value)?,
            other => {
                return Err(Error::InvalidParam {
                    name: "config",
                    reason: format!("line {line}: unknown key `{other}`"),
                });
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// A leader-dependent scenario and its matched memoryless baseline:
/// same structure, each direction's two rates replaced by their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedScenario {
    pub dependent: ModelParams,
    pub independent: ModelParams,
}

impl PairedScenario {
    /// Builds the baseline by averaging each direction's pair.
    pub fn from_dependent(dependent: &ModelParams) -> Result<Self, Error> {
        dependent.validate()?;
        let independent = ModelParams::leader_independent(
            0.5 * (dependent.lambda1 + dependent.lambda3),
            0.5 * (dependent.lambda2 + dependent.lambda4),
            dependent.gamma,
            dependent.k,
            dependent.t_lock_h,
            dependent.t_lock_a,
        )?;
        Ok(PairedScenario { dependent: dependent.clone(), independent })
    }

    /// Accepts an externally supplied pair after checking it is
    /// actually matched.
    pub fn from_parts(
        dependent: ModelParams,
        independent: ModelParams,
    ) -> Result<Self, Error> {
        let pair = PairedScenario { dependent, independent };
        pair.validate()?;
        Ok(pair)
    }

    pub fn validate(&self) -> Result<(), Error> {
        self.dependent.validate()?;
        self.independent.validate()?;
        let fail = |reason: String| Error::InvalidParam { name: "pairing", reason };
        if !self.independent.is_leader_independent() {
            return Err(fail("baseline rates must not depend on the leader".into()));
        }
        let d = &self.dependent;
        let checks = [
            ("upgrade", 0.5 * (d.lambda1 + d.lambda3), self.independent.lambda1),
            ("downgrade", 0.5 * (d.lambda2 + d.lambda4), self.independent.lambda2),
        ];
        for (dir, want, got) in checks {
            if (want - got).abs() > PAIRING_TOL {
                return Err(fail(format!(
                    "{dir} average {want} does not match the baseline rate {got}"
                )));
            }
        }
        if d.gamma != self.independent.gamma
            || d.k != self.independent.k
            || d.t_lock_h != self.independent.t_lock_h
            || d.t_lock_a != self.independent.t_lock_a
        {
            return Err(fail("pair must share gamma, k, and the lockouts".into()));
        }
        Ok(())
    }
}
