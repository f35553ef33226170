//! Fixed-step fourth-order Runge-Kutta integration with simplex guards.
//!
//! Fixed stepping keeps runs bit-reproducible, which the golden tests
//! and the CLI determinism contract rely on. The step size is guarded
//! against the fastest linear mode before any work starts; undershoot
//! past the simplex tolerance during a run is an error, not something
//! to clamp away, because it indicates a misconfigured step.

use serde::Serialize;

use crate::error::Error;
use crate::generator::{check_topology_support, drift_into};
use crate::params::ModelParams;
use crate::state::{LeaderProbabilities, StateVector, SIMPLEX_TOL};

/// Real-axis stability bound for classic RK4, `|h L| < 2.785` for the
/// exact method; 2.5 leaves margin for the nonlinear coupling.
pub const RK4_STABILITY_LIMIT: f64 = 2.5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegrationConfig {
    /// Step size in seconds.
    pub step_h: f64,
    /// Total integration horizon in seconds.
    pub horizon_t: f64,
    /// Divide each step result by its sum. Keeps multi-hour runs pinned
    /// to the simplex; off, the drift conserves the sum to rounding.
    pub renormalize: bool,
    /// Store every n-th step (the initial and final states always).
    pub record_stride: usize,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        IntegrationConfig { step_h: 0.01, horizon_t: 30.0, renormalize: true, record_stride: 1 }
    }
}

impl IntegrationConfig {
    pub fn validate(&self, params: &ModelParams) -> Result<(), Error> {
        if !(self.step_h.is_finite() && self.step_h > 0.0) {
            return Err(Error::InvalidParam {
                name: "step_h",
                reason: format!("must be positive and finite, got {}", self.step_h),
            });
        }
        if !(self.horizon_t.is_finite() && self.horizon_t > 0.0) {
            return Err(Error::InvalidParam {
                name: "horizon_t",
                reason: format!("must be positive and finite, got {}", self.horizon_t),
            });
        }
        if self.step_h > self.horizon_t {
            return Err(Error::InvalidParam {
                name: "step_h",
                reason: format!(
                    "step {} exceeds the horizon {}",
                    self.step_h, self.horizon_t
                ),
            });
        }
        if self.record_stride == 0 {
            return Err(Error::InvalidParam {
                name: "record_stride",
                reason: "must be at least 1".into(),
            });
        }
        check_step_guard(params, self.step_h)
    }
}

fn check_step_guard(params: &ModelParams, step_h: f64) -> Result<(), Error> {
    let product = step_h * params.max_rate();
    if product >= RK4_STABILITY_LIMIT {
        return Err(Error::StepSizeViolation { step_h, product });
    }
    Ok(())
}

/// Number of fixed steps covering `duration`. Guards against divisions
/// like `3.0 / 5e-4` landing an ulp above an integer and ceiling up.
pub fn steps_for(duration: f64, step_h: f64) -> usize {
    if duration <= 0.0 {
        return 0;
    }
    (duration / step_h - 1e-9).ceil().max(0.0) as usize
}

/// Recorded samples of a simulation run.
///
/// Arrays are indexed together: entry `i` holds the state at `times[i]`
/// with its leader probability, mode aggregates, and drift sup-norm
/// (recorded so convergence can be inspected, never asserted here).
#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<StateVector>,
    q_hdv: Vec<f64>,
    sum_h: Vec<f64>,
    sum_a: Vec<f64>,
    drift_inf: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[StateVector] {
        &self.states
    }

    pub fn q_hdv(&self) -> &[f64] {
        &self.q_hdv
    }

    pub fn sum_h(&self) -> &[f64] {
        &self.sum_h
    }

    pub fn sum_a(&self) -> &[f64] {
        &self.sum_a
    }

    pub fn drift_inf(&self) -> &[f64] {
        &self.drift_inf
    }

    pub fn final_state(&self) -> &StateVector {
        self.states.last().expect("trajectory holds at least the initial state")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory holds at least the initial state")
    }

    /// CSV with header `time_s,sum_xh,sum_xa,q_hdv,xh0,xa0`. Floats use
    /// the shortest round-trip form, so output is locale-independent
    /// and reruns are byte-identical.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_s,sum_xh,sum_xa,q_hdv,xh0,xa0\n");
        for i in 0..self.len() {
            let s = &self.states[i];
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                self.times[i],
                self.sum_h[i],
                self.sum_a[i],
                self.q_hdv[i],
                s.x_h()[0],
                s.x_a()[0],
            ));
        }
        out
    }
}

struct StepBuffers {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    mid: Vec<f64>,
}

impl StepBuffers {
    fn new(dim: usize) -> Self {
        StepBuffers {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            mid: vec![0.0; dim],
        }
    }
}

/// Classic four-stage update, in place.
fn rk4_into(params: &ModelParams, h: f64, x: &mut [f64], buf: &mut StepBuffers) {
    let n = x.len();
    drift_into(params, x, &mut buf.k1);
    for i in 0..n {
        buf.mid[i] = x[i] + 0.5 * h * buf.k1[i];
    }
    drift_into(params, &buf.mid, &mut buf.k2);
    for i in 0..n {
        buf.mid[i] = x[i] + 0.5 * h * buf.k2[i];
    }
    drift_into(params, &buf.mid, &mut buf.k3);
    for i in 0..n {
        buf.mid[i] = x[i] + h * buf.k3[i];
    }
    drift_into(params, &buf.mid, &mut buf.k4);
    let w = h / 6.0;
    for i in 0..n {
        x[i] += w * (buf.k1[i] + 2.0 * (buf.k2[i] + buf.k3[i]) + buf.k4[i]);
    }
}

fn check_nonnegative(x: &[f64], time: f64) -> Result<(), Error> {
    for (index, &value) in x.iter().enumerate() {
        if value < -SIMPLEX_TOL {
            return Err(Error::NegativeComponent { index, value, time });
        }
    }
    Ok(())
}

fn renormalize_in_place(x: &mut [f64]) -> Result<(), Error> {
    let sum: f64 = x.iter().sum();
    if !(sum.is_finite() && sum > 0.0) {
        return Err(Error::Numerics(format!("state sum degenerated to {sum}")));
    }
    x.iter_mut().for_each(|v| *v /= sum);
    Ok(())
}

/// One RK4 step of size `h`. Pure: no renormalization is applied.
pub fn rk4_step(params: &ModelParams, x: &StateVector, h: f64) -> Result<StateVector, Error> {
    if x.k() != params.k {
        return Err(Error::DimensionMismatch { state_k: x.k(), params_k: params.k });
    }
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidParam {
            name: "h",
            reason: format!("must be positive and finite, got {h}"),
        });
    }
    check_step_guard(params, h)?;
    check_topology_support(params, x)?;
    let mut data = x.as_slice().to_vec();
    let mut buf = StepBuffers::new(data.len());
    rk4_into(params, h, &mut data, &mut buf);
    check_nonnegative(&data, h)?;
    StateVector::from_flat(params.k, data)
}

/// Integrates `ceil(horizon/step)` fixed steps from `x0`, recording
/// every `record_stride`-th sample plus the final state.
pub fn simulate(
    params: &ModelParams,
    x0: &StateVector,
    cfg: &IntegrationConfig,
) -> Result<Trajectory, Error> {
    if x0.k() != params.k {
        return Err(Error::DimensionMismatch { state_k: x0.k(), params_k: params.k });
    }
    cfg.validate(params)?;
    check_topology_support(params, x0)?;

    let h = cfg.step_h;
    let n_steps = steps_for(cfg.horizon_t, h);
    let dim = x0.dim();
    let mut x = x0.as_slice().to_vec();
    let mut buf = StepBuffers::new(dim);

    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        q_hdv: Vec::new(),
        sum_h: Vec::new(),
        sum_a: Vec::new(),
        drift_inf: Vec::new(),
    };
    record(params, &x, 0.0, &mut traj, &mut buf);

    for step in 1..=n_steps {
        rk4_into(params, h, &mut x, &mut buf);
        let t = step as f64 * h;
        if cfg.renormalize {
            renormalize_in_place(&mut x)?;
        }
        check_nonnegative(&x, t)?;
        if step % cfg.record_stride == 0 || step == n_steps {
            record(params, &x, t, &mut traj, &mut buf);
        }
    }
    Ok(traj)
}

fn record(
    params: &ModelParams,
    x: &[f64],
    t: f64,
    traj: &mut Trajectory,
    buf: &mut StepBuffers,
) {
    let n1 = params.k + 1;
    let sum_h: f64 = x[..n1].iter().sum();
    let sum_a: f64 = x[n1..].iter().sum();
    let q = LeaderProbabilities::from_sum_h(params, sum_h);
    drift_into(params, x, &mut buf.k1);
    let drift_inf = buf.k1.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    traj.times.push(t);
    traj.states.push(StateVector::from_flat_unchecked(params.k, x.to_vec()));
    traj.q_hdv.push(q.q_hdv);
    traj.sum_h.push(sum_h);
    traj.sum_a.push(sum_a);
    traj.drift_inf.push(drift_inf);
}
