//! Headway model and throughput map.
//!
//! Every population cell carries a time gap tau and a standstill
//! distance L. Unlocked cells use their mode's equilibrium values;
//! lock-stage cells blend from the origin mode toward the target mode
//! along a logistic curve in the normalized stage fraction, evaluated
//! at stage midpoints so the piecewise-constant levels are symmetric.
//! Throughput is the inverse of the population-weighted headway.

use serde::Serialize;

use crate::error::Error;
use crate::integrator::Trajectory;
use crate::state::StateVector;

/// Per-mode equilibrium gaps and the sigmoid shape knobs.
///
/// Defaults: AV gap 1.0 s over 5.0 m, HDV gap 1.5 s over 7.0 m,
/// steepness 10, midpoint at half the chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HeadwayParams {
    pub tau_a0: f64,
    pub tau_h0: f64,
    pub l_a0: f64,
    pub l_h0: f64,
    pub sigmoid_steepness: f64,
    pub sigmoid_midpoint: f64,
}

impl Default for HeadwayParams {
    fn default() -> Self {
        Self {
            tau_a0: 1.0,
            tau_h0: 1.5,
            l_a0: 5.0,
            l_h0: 7.0,
            sigmoid_steepness: 10.0,
            sigmoid_midpoint: 0.5,
        }
    }
}

impl HeadwayParams {
    pub fn validate(&self) -> Result<(), Error> {
        let positive: [(&'static str, f64); 4] = [
            ("tau_a0", self.tau_a0),
            ("tau_h0", self.tau_h0),
            ("l_a0", self.l_a0),
            ("l_h0", self.l_h0),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParam {
                    name,
                    reason: format!("must be positive and finite, got {v}"),
                });
            }
        }
        if self.tau_h0 < self.tau_a0 {
            return Err(Error::InvalidParam {
                name: "tau_h0",
                reason: format!(
                    "HDV gap {} must not undercut AV gap {}",
                    self.tau_h0, self.tau_a0
                ),
            });
        }
        if self.l_h0 < self.l_a0 {
            return Err(Error::InvalidParam {
                name: "l_h0",
                reason: format!(
                    "HDV standstill {} must not undercut AV standstill {}",
                    self.l_h0, self.l_a0
                ),
            });
        }
        if !(self.sigmoid_steepness > 0.0 && self.sigmoid_steepness.is_finite()) {
            return Err(Error::InvalidParam {
                name: "sigmoid_steepness",
                reason: format!("must be positive and finite, got {}", self.sigmoid_steepness),
            });
        }
        if !(self.sigmoid_midpoint >= 0.0 && self.sigmoid_midpoint <= 1.0) {
            return Err(Error::InvalidParam {
                name: "sigmoid_midpoint",
                reason: format!("must lie in [0, 1], got {}", self.sigmoid_midpoint),
            });
        }
        Ok(())
    }

    /// Headway of a pure-HDV vehicle at speed v.
    fn hdv_headway(&self, v: f64) -> f64 {
        self.tau_h0 + self.l_h0 / v
    }
}

/// Which way a locked vehicle is headed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransitionDirection {
    HToA,
    AToH,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// (origin, target) value pairs (tau, L) for a direction.
fn mode_pair(hp: &HeadwayParams, direction: TransitionDirection) -> ((f64, f64), (f64, f64)) {
    match direction {
        TransitionDirection::HToA => ((hp.tau_h0, hp.l_h0), (hp.tau_a0, hp.l_a0)),
        TransitionDirection::AToH => ((hp.tau_a0, hp.l_a0), (hp.tau_h0, hp.l_h0)),
    }
}

/// Unvalidated core of [`stage_headway`]; stage_i <= k must hold.
fn stage_value(
    hp: &HeadwayParams,
    stage_i: usize,
    k: usize,
    direction: TransitionDirection,
) -> (f64, f64) {
    let ((tau_o, l_o), (tau_t, l_t)) = mode_pair(hp, direction);
    if stage_i == 0 {
        return (tau_o, l_o);
    }
    let s = (stage_i as f64 - 0.5) / k as f64;
    let w = sigmoid(hp.sigmoid_steepness * (s - hp.sigmoid_midpoint));
    (tau_o + (tau_t - tau_o) * w, l_o + (l_t - l_o) * w)
}

/// Time gap and standstill distance for one cell of a lock chain.
///
/// Stage 0 is the unlocked origin mode; stages 1..=k sit on the
/// logistic blend evaluated at the stage midpoint (i - 1/2)/k.
pub fn stage_headway(
    hp: &HeadwayParams,
    stage_i: usize,
    k: usize,
    direction: TransitionDirection,
) -> Result<(f64, f64), Error> {
    hp.validate()?;
    if stage_i > k {
        return Err(Error::InvalidParam {
            name: "stage_i",
            reason: format!("stage {stage_i} outside 0..={k}"),
        });
    }
    Ok(stage_value(hp, stage_i, k, direction))
}

/// Both chains' (tau, L) tables for a given k.
fn stage_tables(hp: &HeadwayParams, k: usize) -> (Vec<(f64, f64)>, Vec<(f64, f64)>) {
    let h: Vec<_> = (0..=k)
        .map(|i| stage_value(hp, i, k, TransitionDirection::HToA))
        .collect();
    let a: Vec<_> = (0..=k)
        .map(|i| stage_value(hp, i, k, TransitionDirection::AToH))
        .collect();
    (h, a)
}

fn weighted_headway(
    hp: &HeadwayParams,
    h_table: &[(f64, f64)],
    a_table: &[(f64, f64)],
    x: &StateVector,
    v: f64,
    gamma: f64,
) -> f64 {
    let mut pav = 0.0;
    for (xi, &(tau, l)) in x.x_h().iter().zip(h_table) {
        pav += xi * (tau + l / v);
    }
    for (xi, &(tau, l)) in x.x_a().iter().zip(a_table) {
        pav += xi * (tau + l / v);
    }
    (1.0 - gamma) * pav + gamma * hp.hdv_headway(v)
}

fn check_speed_and_gamma(v: f64, gamma: f64) -> Result<(), Error> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::NonPositiveSpeed(v));
    }
    if !(gamma >= 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidParam {
            name: "gamma",
            reason: format!("must lie in [0, 1], got {gamma}"),
        });
    }
    Ok(())
}

/// Population-weighted average headway in seconds.
///
/// The permanent-HDV fraction gamma always contributes the pure HDV
/// headway; the PAV population contributes per-cell stage values.
pub fn effective_headway(
    hp: &HeadwayParams,
    x: &StateVector,
    v: f64,
    gamma: f64,
) -> Result<f64, Error> {
    hp.validate()?;
    check_speed_and_gamma(v, gamma)?;
    let k = x.x_h().len() - 1;
    let (h_table, a_table) = stage_tables(hp, k);
    Ok(weighted_headway(hp, &h_table, &a_table, x, v, gamma))
}

/// Instantaneous capacity in vehicles/hour/lane: 3600 / h_eff.
pub fn throughput(hp: &HeadwayParams, x: &StateVector, v: f64, gamma: f64) -> Result<f64, Error> {
    Ok(3600.0 / effective_headway(hp, x, v, gamma)?)
}

/// Capacity at a fixed point of the population dynamics. Identical to
/// [`throughput`]; the name marks intent at call sites that feed it an
/// equilibrium state.
pub fn steady_throughput(
    hp: &HeadwayParams,
    x_star: &StateVector,
    v_star: f64,
    gamma: f64,
) -> Result<f64, Error> {
    throughput(hp, x_star, v_star, gamma)
}

/// Piecewise-linear speed trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpeedProfile {
    samples: Vec<(f64, f64)>,
}

impl SpeedProfile {
    /// Samples are (time_s, speed_mps), strictly increasing in time,
    /// speeds positive.
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self, Error> {
        if samples.is_empty() {
            return Err(Error::ProfileFormat("no samples".into()));
        }
        for (i, &(t, v)) in samples.iter().enumerate() {
            if !t.is_finite() {
                return Err(Error::ProfileFormat(format!("sample {i}: non-finite time")));
            }
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::ProfileFormat(format!(
                    "sample {i}: speed must be positive, got {v}"
                )));
            }
            if i > 0 && t <= samples[i - 1].0 {
                return Err(Error::ProfileFormat(format!(
                    "sample {i}: time {t} does not increase past {}",
                    samples[i - 1].0
                )));
            }
        }
        Ok(Self { samples })
    }

    /// Parses CSV with header `time_s,speed_mps`.
    pub fn from_csv(text: &str) -> Result<Self, Error> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::ProfileFormat("empty input".into()))?;
        if header.trim() != "time_s,speed_mps" {
            return Err(Error::ProfileFormat(format!(
                "line 1: expected header `time_s,speed_mps`, got `{}`",
                header.trim()
            )));
        }
        let mut samples = Vec::new();
        for (i, raw) in lines.enumerate() {
            let row = i + 2;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 2 {
                return Err(Error::ProfileFormat(format!(
                    "line {row}: expected 2 fields, got {}",
                    fields.len()
                )));
            }
            let t: f64 = fields[0].trim().parse().map_err(|_| {
                Error::ProfileFormat(format!("line {row}: bad time `{}`", fields[0].trim()))
            })?;
            let v: f64 = fields[1].trim().parse().map_err(|_| {
                Error::ProfileFormat(format!("line {row}: bad speed `{}`", fields[1].trim()))
            })?;
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::ProfileFormat(format!(
                    "line {row}: speed must be positive, got {v}"
                )));
            }
            if let Some(&(prev, _)) = samples.last() {
                if t <= prev {
                    return Err(Error::ProfileFormat(format!(
                        "line {row}: time {t} does not increase past {prev}"
                    )));
                }
            }
            samples.push((t, v));
        }
        Self::new(samples)
    }

    pub fn start(&self) -> f64 {
        self.samples[0].0
    }

    pub fn end(&self) -> f64 {
        self.samples[self.samples.len() - 1].0
    }

    pub fn covers(&self, t0: f64, t1: f64) -> bool {
        self.start() <= t0 && t1 <= self.end()
    }

    /// Linearly interpolated speed at t; t must be covered.
    pub fn speed_at(&self, t: f64) -> Result<f64, Error> {
        if !(t >= self.start() && t <= self.end()) {
            return Err(Error::TimeOutOfRange {
                t,
                start: self.start(),
                end: self.end(),
            });
        }
        // First sample strictly past t; at least 1 because t >= start.
        let idx = self.samples.partition_point(|&(ts, _)| ts <= t);
        if idx == self.samples.len() {
            return Ok(self.samples[idx - 1].1);
        }
        let (t0, v0) = self.samples[idx - 1];
        let (t1, v1) = self.samples[idx];
        let w = (t - t0) / (t1 - t0);
        Ok(v0 + w * (v1 - v0))
    }
}

/// One row of a throughput time series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThroughputPoint {
    pub time_s: f64,
    pub v_mps: f64,
    pub h_eff_s: f64,
    pub c_vphpl: f64,
}

/// Throughput along a trajectory under a time-varying speed.
///
/// The profile must cover the trajectory's full time range.
pub fn throughput_series(
    hp: &HeadwayParams,
    traj: &Trajectory,
    profile: &SpeedProfile,
    gamma: f64,
) -> Result<Vec<ThroughputPoint>, Error> {
    hp.validate()?;
    if traj.is_empty() {
        return Ok(Vec::new());
    }
    let t0 = traj.times()[0];
    let t1 = traj.final_time();
    if !profile.covers(t0, t1) {
        let t = if t0 < profile.start() { t0 } else { t1 };
        return Err(Error::TimeOutOfRange {
            t,
            start: profile.start(),
            end: profile.end(),
        });
    }
    let k = traj.states()[0].x_h().len() - 1;
    let (h_table, a_table) = stage_tables(hp, k);
    let mut out = Vec::with_capacity(traj.len());
    for (&t, x) in traj.times().iter().zip(traj.states()) {
        let v = profile.speed_at(t)?;
        check_speed_and_gamma(v, gamma)?;
        let h_eff = weighted_headway(hp, &h_table, &a_table, x, v, gamma);
        out.push(ThroughputPoint {
            time_s: t,
            v_mps: v,
            h_eff_s: h_eff,
            c_vphpl: 3600.0 / h_eff,
        });
    }
    Ok(out)
}

/// CSV with header `time_s,v_mps,h_eff_s,c_vphpl`.
pub fn throughput_csv(points: &[ThroughputPoint]) -> String {
    let mut out = String::from("time_s,v_mps,h_eff_s,c_vphpl\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{}\n",
            p.time_s, p.v_mps, p.h_eff_s, p.c_vphpl
        ));
    }
    out
}
