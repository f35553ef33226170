//! Particle-level Monte Carlo cross-check of the mean-field dynamics.
//!
//! `n` particles share one discrete clock of step `dt`. An unlocked
//! particle switches mode during a step with probability
//! `1 - exp(-lambda dt)`, where `lambda` is the effective rate under the
//! empirical fractions frozen at the top of that step; a locked particle
//! either walks the same `k`-stage chain the drift field uses
//! ([`OracleMode::ErlangStage`]) or sits out exactly the lockout duration
//! ([`OracleMode::DeterministicLockout`]). Running the Erlang mode
//! against the integrator validates the mean-field ODE; running the two
//! modes against each other isolates the phase-type approximation error,
//! which is why both engines live here.
//!
//! Per-step coin flips for every particle would dominate the run, so the
//! engine samples each particle's next candidate step directly from the
//! geometric law of a majorant probability and thins at the candidate
//! with the then-current rate. Candidate steps are i.i.d. Bernoulli of
//! the majorant under either view, so the fired process is distributed
//! exactly as the per-step description above. Stage waits of a lock
//! chain are summed into a single completion event for the same reason;
//! intermediate stages never show in the output. Every particle owns
//! counter-derived streams, keyed by its index and the draw purpose, so
//! results do not depend on scheduling or drain order.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::Error;
use crate::generator::{check_topology_support, effective_rates};
use crate::integrator::steps_for;
use crate::params::ModelParams;
use crate::rng::CounterRng;
use crate::state::{LeaderProbabilities, StateVector};

/// Below this the binomial error bars stop being meaningful.
pub const MIN_PARTICLES: usize = 1_000;

/// Per-step event probabilities must stay under this cap, keeping the
/// single-event-per-step discretization honest.
pub const EVENT_PROB_CAP: f64 = 0.1;

const SALT_SWITCH: u64 = 0;
const SALT_LOCK: u64 = 1;
const SALT_INIT: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleMode {
    /// Lockouts are `k` exponential stages, mirroring the ODE chain.
    ErlangStage,
    /// Lockouts last exactly `t_lock` seconds, the object the chain
    /// approximates.
    DeterministicLockout,
}

impl fmt::Display for OracleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OracleMode::ErlangStage => "erlang-stage",
            OracleMode::DeterministicLockout => "deterministic-lockout",
        })
    }
}

impl FromStr for OracleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "erlang-stage" => Ok(OracleMode::ErlangStage),
            "deterministic-lockout" => Ok(OracleMode::DeterministicLockout),
            other => Err(Error::InvalidParam {
                name: "oracle_mode",
                reason: format!(
                    "unknown mode `{other}`; expected `erlang-stage` or `deterministic-lockout`"
                ),
            }),
        }
    }
}

/// Empirical mode fractions per step, with binomial standard errors.
#[derive(Debug, Clone, Serialize)]
pub struct OracleSeries {
    mode: OracleMode,
    n: usize,
    times: Vec<f64>,
    counts_h: Vec<u32>,
    frac_h: Vec<f64>,
    frac_a: Vec<f64>,
    se_h: Vec<f64>,
    se_a: Vec<f64>,
}

impl OracleSeries {
    fn with_capacity(mode: OracleMode, n: usize, samples: usize) -> Self {
        OracleSeries {
            mode,
            n,
            times: Vec::with_capacity(samples),
            counts_h: Vec::with_capacity(samples),
            frac_h: Vec::with_capacity(samples),
            frac_a: Vec::with_capacity(samples),
            se_h: Vec::with_capacity(samples),
            se_a: Vec::with_capacity(samples),
        }
    }

    fn push_sample(&mut self, t: f64, count_h: u32) {
        let n = self.n as f64;
        let fh = count_h as f64 / n;
        let fa = (self.n as u32 - count_h) as f64 / n;
        self.times.push(t);
        self.counts_h.push(count_h);
        self.frac_h.push(fh);
        self.frac_a.push(fa);
        self.se_h.push((fh * (1.0 - fh) / n).sqrt());
        self.se_a.push((fa * (1.0 - fa) / n).sqrt());
    }

    pub fn mode(&self) -> OracleMode {
        self.mode
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Particles on the HDV side (unlocked plus locked) per sample.
    pub fn counts_h(&self) -> &[u32] {
        &self.counts_h
    }

    pub fn frac_h(&self) -> &[f64] {
        &self.frac_h
    }

    pub fn frac_a(&self) -> &[f64] {
        &self.frac_a
    }

    pub fn se_h(&self) -> &[f64] {
        &self.se_h
    }

    pub fn se_a(&self) -> &[f64] {
        &self.se_a
    }

    /// CSV with header `time_s,frac_h,frac_a,se_h,se_a`, shortest
    /// round-trip float formatting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_s,frac_h,frac_a,se_h,se_a\n");
        for i in 0..self.len() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                self.times[i], self.frac_h[i], self.frac_a[i], self.se_h[i], self.se_a[i],
            ));
        }
        out
    }
}

/// Paired Erlang-stage / deterministic-lockout runs under one seed.
#[derive(Debug, Clone, Serialize)]
pub struct ModeComparison {
    pub erlang: OracleSeries,
    pub deterministic: OracleSeries,
    /// Largest pointwise gap in the HDV fraction across the horizon.
    pub max_gap: f64,
}

/// Per-step event probability of a rate under the step width.
fn step_prob(rate: f64, dt: f64) -> f64 {
    -(-rate * dt).exp_m1()
}

/// Steps until the next success of a per-step Bernoulli with
/// `p = 1 - exp(neg_rate_dt)`, by inversion; integer-valued and >= 1.
/// `ln(1 - p)` is `neg_rate_dt` itself, so small rates lose nothing.
fn geometric(rng: &mut CounterRng, neg_rate_dt: f64) -> f64 {
    (rng.next_f64_open().ln() / neg_rate_dt).floor() + 1.0
}

fn check_event_probs(params: &ModelParams, dt: f64, mode: OracleMode) -> Result<(), Error> {
    let mut worst = step_prob(params.lambda1.max(params.lambda3), dt)
        .max(step_prob(params.lambda2.max(params.lambda4), dt));
    // Stage clocks only tick in Erlang mode; the deterministic engine
    // has no per-step lockout event to guard.
    if mode == OracleMode::ErlangStage {
        if let Some(mu) = params.mu_h() {
            worst = worst.max(step_prob(mu, dt));
        }
        if let Some(mu) = params.mu_a() {
            worst = worst.max(step_prob(mu, dt));
        }
    }
    if worst >= EVENT_PROB_CAP {
        return Err(Error::DtTooCoarse { dt, p: worst });
    }
    Ok(())
}

/// What a particle's next scheduled event means. A locked particle
/// still counts toward its origin side until the lock completes.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Pending {
    WaitH,
    WaitA,
    LockHA,
    LockAH,
}

struct Engine<'p> {
    params: &'p ModelParams,
    mode: OracleMode,
    dt: f64,
    n_steps: usize,
    /// Majorant per-step switch probabilities (largest leader mix).
    p_ha_max: f64,
    p_ah_max: f64,
    /// `ln(1 - p_max)` for the geometric gap draws.
    neg_ha_dt: f64,
    neg_ah_dt: f64,
    neg_mu_h_dt: f64,
    neg_mu_a_dt: f64,
    pending: Vec<Pending>,
    switch_rng: Vec<CounterRng>,
    lock_rng: Vec<CounterRng>,
    /// `buckets[s]` holds the particles whose event fires at step `s`.
    /// At most one entry per particle exists across all buckets.
    buckets: Vec<Vec<u32>>,
    count_h: u32,
}

impl Engine<'_> {
    /// Draws the next candidate switch step and schedules it, unless it
    /// falls past the horizon.
    fn schedule_wait(&mut self, id: u32, from_step: usize, neg_rate_dt: f64) {
        let gap = geometric(&mut self.switch_rng[id as usize], neg_rate_dt);
        if gap <= (self.n_steps - from_step) as f64 {
            self.buckets[from_step + gap as usize].push(id);
        }
    }

    /// Schedules a lock completion `stages` stage waits (Erlang mode) or
    /// `t_remaining` seconds (deterministic mode) ahead. Completions
    /// past the horizon stay unscheduled; the particle remains locked.
    fn schedule_lock(
        &mut self,
        id: u32,
        from_step: usize,
        stages: usize,
        t_remaining: f64,
        neg_mu_dt: f64,
    ) {
        let budget = (self.n_steps - from_step) as f64;
        let steps = match self.mode {
            OracleMode::ErlangStage => {
                let mut total = 0.0;
                for _ in 0..stages {
                    total += geometric(&mut self.lock_rng[id as usize], neg_mu_dt);
                    if total > budget {
                        return;
                    }
                }
                total
            }
            // Unlock at the first step boundary covering the duration,
            // never the step being drained right now.
            OracleMode::DeterministicLockout => {
                let s = steps_for(t_remaining, self.dt).max(1) as f64;
                if s > budget {
                    return;
                }
                s
            }
        };
        self.buckets[from_step + steps as usize].push(id);
    }
}

/// Runs `n` particles from a multinomial draw of `x0` over `horizon`
/// seconds in steps of `dt`, recording the mode fractions every step.
///
/// Identical arguments reproduce the series bit for bit. The step must
/// keep every per-step event probability below [`EVENT_PROB_CAP`].
pub fn run_oracle(
    params: &ModelParams,
    n: usize,
    x0: &StateVector,
    horizon: f64,
    dt: f64,
    seed: u64,
    mode: OracleMode,
) -> Result<OracleSeries, Error> {
    params.validate()?;
    if x0.k() != params.k {
        return Err(Error::DimensionMismatch { state_k: x0.k(), params_k: params.k });
    }
    check_topology_support(params, x0)?;
    if n < MIN_PARTICLES {
        return Err(Error::TooFewParticles(n));
    }
    if n > u32::MAX as usize {
        return Err(Error::InvalidParam {
            name: "n",
            reason: format!("particle ids are 32-bit; {n} exceeds {}", u32::MAX),
        });
    }
    for (name, v) in [("horizon", horizon), ("dt", dt)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidParam {
                name,
                reason: format!("must be positive and finite, got {v}"),
            });
        }
    }
    if dt > horizon {
        return Err(Error::InvalidParam {
            name: "dt",
            reason: format!("step {dt} exceeds the horizon {horizon}"),
        });
    }
    check_event_probs(params, dt, mode)?;

    let k = params.k;
    let n1 = k + 1;
    let n_steps = steps_for(horizon, dt);
    let mut eng = Engine {
        params,
        mode,
        dt,
        n_steps,
        p_ha_max: step_prob(params.lambda1.max(params.lambda3), dt),
        p_ah_max: step_prob(params.lambda2.max(params.lambda4), dt),
        neg_ha_dt: -params.lambda1.max(params.lambda3) * dt,
        neg_ah_dt: -params.lambda2.max(params.lambda4) * dt,
        neg_mu_h_dt: params.mu_h().map_or(0.0, |mu| -mu * dt),
        neg_mu_a_dt: params.mu_a().map_or(0.0, |mu| -mu * dt),
        pending: Vec::with_capacity(n),
        switch_rng: (0..n).map(|j| CounterRng::stream(seed, j as u64, SALT_SWITCH)).collect(),
        lock_rng: (0..n).map(|j| CounterRng::stream(seed, j as u64, SALT_LOCK)).collect(),
        buckets: vec![Vec::new(); n_steps + 1],
        count_h: 0,
    };

    // Multinomial initial assignment: one categorical draw per particle
    // by inverse CDF. Negative rounding noise gets zero weight.
    let mut cum = Vec::with_capacity(2 * n1);
    let mut acc = 0.0;
    for &v in x0.as_slice() {
        acc += v.max(0.0);
        cum.push(acc);
    }
    for j in 0..n as u32 {
        let u = CounterRng::stream(seed, j as u64, SALT_INIT).next_f64();
        let mut cell = cum.partition_point(|&c| c <= u).min(2 * n1 - 1);
        // A disabled chain carries at most simplex-tolerance mass; fold
        // such a draw into the unlocked cell of its side.
        if cell > 0 && cell <= k && !params.has_h_chain() {
            cell = 0;
        }
        if cell > n1 && !params.has_a_chain() {
            cell = n1;
        }
        if cell < n1 {
            eng.count_h += 1;
            if cell == 0 {
                eng.pending.push(Pending::WaitH);
                let neg = eng.neg_ha_dt;
                eng.schedule_wait(j, 0, neg);
            } else {
                // Mid-chain start: the remaining stages of the chain, or
                // their mean duration for the deterministic engine.
                let stages = k - cell + 1;
                let t_rem = params.t_lock_h * stages as f64 / k as f64;
                eng.pending.push(Pending::LockHA);
                let neg = eng.neg_mu_h_dt;
                eng.schedule_lock(j, 0, stages, t_rem, neg);
            }
        } else if cell == n1 {
            eng.pending.push(Pending::WaitA);
            let neg = eng.neg_ah_dt;
            eng.schedule_wait(j, 0, neg);
        } else {
            let stages = k - (cell - n1) + 1;
            let t_rem = params.t_lock_a * stages as f64 / k as f64;
            eng.pending.push(Pending::LockAH);
            let neg = eng.neg_mu_a_dt;
            eng.schedule_lock(j, 0, stages, t_rem, neg);
        }
    }

    let mut series = OracleSeries::with_capacity(mode, n, n_steps + 1);
    series.push_sample(0.0, eng.count_h);

    for step in 1..=n_steps {
        // Rates are frozen from the fractions entering the step; events
        // below only affect later steps, so drain order is irrelevant.
        let frac_h = eng.count_h as f64 / n as f64;
        let q = LeaderProbabilities::from_sum_h(params, frac_h);
        let rates = effective_rates(params, &q);
        let p_ha = step_prob(rates.lambda_ha, dt);
        let p_ah = step_prob(rates.lambda_ah, dt);

        let fired = std::mem::take(&mut eng.buckets[step]);
        for id in fired {
            let i = id as usize;
            match eng.pending[i] {
                Pending::WaitH => {
                    // Thin the candidate: accept with p(t) / p_max.
                    if eng.switch_rng[i].next_f64() * eng.p_ha_max < p_ha {
                        if eng.params.has_h_chain() {
                            eng.pending[i] = Pending::LockHA;
                            let neg = eng.neg_mu_h_dt;
                            let t_lock = eng.params.t_lock_h;
                            eng.schedule_lock(id, step, k, t_lock, neg);
                        } else {
                            eng.count_h -= 1;
                            eng.pending[i] = Pending::WaitA;
                            let neg = eng.neg_ah_dt;
                            eng.schedule_wait(id, step, neg);
                        }
                    } else {
                        let neg = eng.neg_ha_dt;
                        eng.schedule_wait(id, step, neg);
                    }
                }
                Pending::WaitA => {
                    if eng.switch_rng[i].next_f64() * eng.p_ah_max < p_ah {
                        if eng.params.has_a_chain() {
                            eng.pending[i] = Pending::LockAH;
                            let neg = eng.neg_mu_a_dt;
                            let t_lock = eng.params.t_lock_a;
                            eng.schedule_lock(id, step, k, t_lock, neg);
                        } else {
                            eng.count_h += 1;
                            eng.pending[i] = Pending::WaitH;
                            let neg = eng.neg_ha_dt;
                            eng.schedule_wait(id, step, neg);
                        }
                    } else {
                        let neg = eng.neg_ah_dt;
                        eng.schedule_wait(id, step, neg);
                    }
                }
                Pending::LockHA => {
                    eng.count_h -= 1;
                    eng.pending[i] = Pending::WaitA;
                    let neg = eng.neg_ah_dt;
                    eng.schedule_wait(id, step, neg);
                }
                Pending::LockAH => {
                    eng.count_h += 1;
                    eng.pending[i] = Pending::WaitH;
                    let neg = eng.neg_ha_dt;
                    eng.schedule_wait(id, step, neg);
                }
            }
        }
        series.push_sample(step as f64 * dt, eng.count_h);
    }
    Ok(series)
}

/// Runs both lockout engines under one seed and reports the largest
/// pointwise HDV-fraction gap. The switch draws are shared, so the gap
/// isolates the lockout models (plus any divergence they feed back).
pub fn compare_modes(
    params: &ModelParams,
    n: usize,
    x0: &StateVector,
    horizon: f64,
    dt: f64,
    seed: u64,
) -> Result<ModeComparison, Error> {
    // Erlang mode validates the union of both modes' step constraints.
    let erlang = run_oracle(params, n, x0, horizon, dt, seed, OracleMode::ErlangStage)?;
    let deterministic =
        run_oracle(params, n, x0, horizon, dt, seed, OracleMode::DeterministicLockout)?;
    let max_gap = erlang
        .frac_h()
        .iter()
        .zip(deterministic.frac_h())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(ModeComparison { erlang, deterministic, max_gap })
}
