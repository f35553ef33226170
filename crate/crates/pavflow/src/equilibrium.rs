//! Equilibrium computation: a contracting self-map on the simplex,
//! a damped Newton finisher, and the affine reduced system.
//!
//! The self-map `x + alpha drift(x)` keeps iterates on the simplex for
//! any alpha up to half the inverse of the largest outflow rate; it
//! converges linearly, so a forward-difference Newton polish on the
//! sum-eliminated coordinates picks up the last digits. Multistart
//! scattering is the executable face of the global-stability claim:
//! every start should land on the same fixed point.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::Error;
use crate::generator::{assemble_generator, drift_into};
use crate::params::ModelParams;
use crate::rng::CounterRng;
use crate::state::{StateVector, SIMPLEX_TOL};

/// Residual level at which iteration switches from the self-map to
/// Newton; below this the Jacobian is trustworthy and quadratic steps
/// pay off.
const NEWTON_TRIGGER: f64 = 1e-3;

/// Forward-difference step for the Newton Jacobian.
const FD_STEP: f64 = 1e-7;

/// Fixed points closer than this are treated as one equilibrium.
pub const CLUSTER_TOL: f64 = 1e-6;

/// Largest admissible self-map step: half the inverse of the largest
/// absolute diagonal of the generator over q in {0, 1}. Guarantees the
/// map preserves nonnegativity with a factor-two margin.
pub fn alpha_max(params: &ModelParams) -> f64 {
    0.5 / params.max_rate()
}

/// One application of `x + alpha drift(x)`.
pub fn fixed_point_map(
    params: &ModelParams,
    x: &StateVector,
    alpha: f64,
) -> Result<StateVector, Error> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::InvalidParam {
            name: "alpha",
            reason: format!("must be positive and finite, got {alpha}"),
        });
    }
    let cap = alpha_max(params);
    if alpha > cap {
        return Err(Error::AlphaTooLarge { alpha, cap });
    }
    let d = crate::generator::drift(params, x)?;
    let y: Vec<f64> = x.as_slice().iter().zip(&d).map(|(xi, di)| xi + alpha * di).collect();
    StateVector::from_flat(params.k, y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMethod {
    SelfMap,
    DampedNewton,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumResult {
    pub x_star: StateVector,
    /// Sup norm of the drift at `x_star`.
    pub residual_inf: f64,
    pub iterations: usize,
    pub method: SolveMethod,
}

/// Cells that can carry mass under the parameter topology.
fn active_cells(params: &ModelParams) -> Vec<usize> {
    let k = params.k;
    let n1 = k + 1;
    let mut cells = vec![0];
    if params.has_h_chain() {
        cells.extend(1..=k);
    }
    cells.push(n1);
    if params.has_a_chain() {
        cells.extend(n1 + 1..=n1 + k);
    }
    cells
}

fn uniform_active(params: &ModelParams) -> Vec<f64> {
    let cells = active_cells(params);
    let mut x = vec![0.0; params.dim()];
    let w = 1.0 / cells.len() as f64;
    for i in cells {
        x[i] = w;
    }
    x
}

fn residual_inf(d: &[f64]) -> f64 {
    d.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

struct SolveOutcome {
    x: Vec<f64>,
    residual: f64,
    iterations: usize,
    method: SolveMethod,
    converged: bool,
}

fn solve_from(params: &ModelParams, mut x: Vec<f64>, tol: f64, max_iter: usize) -> SolveOutcome {
    let alpha = alpha_max(params);
    let dim = x.len();
    let mut d = vec![0.0; dim];
    let mut iterations = 0;
    let mut method = SolveMethod::SelfMap;

    drift_into(params, &x, &mut d);
    let mut r = residual_inf(&d);
    let mut best_r = r;

    // Linear phase: contract until Newton's basin is safe.
    let trigger = NEWTON_TRIGGER.max(tol);
    while r > trigger && iterations < max_iter {
        for i in 0..dim {
            x[i] += alpha * d[i];
        }
        iterations += 1;
        drift_into(params, &x, &mut d);
        r = residual_inf(&d);
        best_r = best_r.min(r);
    }

    // Quadratic phase on the active coordinates, sum eliminated into
    // the last active cell. Falls back to the self-map on any stall.
    let active = active_cells(params);
    while r > tol && iterations < max_iter {
        match newton_step(params, &x, &d, &active, r) {
            Some((x_new, d_new, r_new)) => {
                x = x_new;
                d = d_new;
                r = r_new;
                method = SolveMethod::DampedNewton;
            }
            None => {
                for i in 0..dim {
                    x[i] += alpha * d[i];
                }
                drift_into(params, &x, &mut d);
                r = residual_inf(&d);
            }
        }
        iterations += 1;
        best_r = best_r.min(r);
    }

    SolveOutcome { x, residual: r, iterations, method, converged: r <= tol }
}

/// One damped Newton step. Returns the accepted state, its drift, and
/// the new residual; `None` when the linear solve fails or no damping
/// level decreases the residual.
fn newton_step(
    params: &ModelParams,
    x: &[f64],
    d: &[f64],
    active: &[usize],
    r: f64,
) -> Option<(Vec<f64>, Vec<f64>, f64)> {
    let m = active.len() - 1;
    let elim = active[m];
    let dim = x.len();
    let mut jac = DMatrix::zeros(m, m);
    let mut xp = x.to_vec();
    let mut dp = vec![0.0; dim];
    for j in 0..m {
        xp.copy_from_slice(x);
        xp[active[j]] += FD_STEP;
        xp[elim] -= FD_STEP;
        drift_into(params, &xp, &mut dp);
        for i in 0..m {
            jac[(i, j)] = (dp[active[i]] - d[active[i]]) / FD_STEP;
        }
    }
    let g = DVector::from_iterator(m, active[..m].iter().map(|&i| d[i]));
    let delta = jac.lu().solve(&(-g))?;

    let mut scale = 1.0;
    for _ in 0..40 {
        let mut cand = x.to_vec();
        let mut shift = 0.0;
        for j in 0..m {
            cand[active[j]] += scale * delta[j];
            shift += scale * delta[j];
        }
        cand[elim] -= shift;
        let valid = cand.iter().all(|&v| v.is_finite() && v >= -SIMPLEX_TOL);
        if valid {
            drift_into(params, &cand, &mut dp);
            let r_new = residual_inf(&dp);
            if r_new < r {
                return Some((cand, dp, r_new));
            }
        }
        scale *= 0.5;
    }
    None
}

/// Finds the equilibrium from the uniform-over-active-cells start.
pub fn solve_equilibrium(
    params: &ModelParams,
    tol: f64,
    max_iter: usize,
) -> Result<EquilibriumResult, Error> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::InvalidParam {
            name: "tol",
            reason: format!("must be positive and finite, got {tol}"),
        });
    }
    let out = solve_from(params, uniform_active(params), tol, max_iter);
    finish(params, out)
}

fn finish(params: &ModelParams, out: SolveOutcome) -> Result<EquilibriumResult, Error> {
    if !out.converged {
        return Err(Error::NonConvergence { iterations: out.iterations, residual: out.residual });
    }
    Ok(EquilibriumResult {
        x_star: StateVector::from_flat(params.k, out.x)?,
        residual_inf: out.residual,
        iterations: out.iterations,
        method: out.method,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumCluster {
    pub representative: EquilibriumResult,
    /// How many starts landed on this fixed point.
    pub members: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct MultistartReport {
    /// Distinct fixed points found, in first-seen order.
    pub clusters: Vec<EquilibriumCluster>,
    pub n_starts: usize,
    pub n_converged: usize,
}

impl MultistartReport {
    /// Largest distance between any two distinct fixed points; zero
    /// when at most one cluster exists.
    pub fn max_pairwise_gap(&self) -> f64 {
        let mut gap = 0.0f64;
        for (i, a) in self.clusters.iter().enumerate() {
            for b in &self.clusters[i + 1..] {
                gap = gap.max(a.representative.x_star.max_abs_diff(&b.representative.x_star));
            }
        }
        gap
    }
}

/// Runs the solver from `n_starts` random simplex points (plus the
/// uniform start) and clusters the distinct fixed points found.
pub fn multistart_equilibria(
    params: &ModelParams,
    n_starts: usize,
    seed: u64,
    tol: f64,
    max_iter: usize,
) -> Result<MultistartReport, Error> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::InvalidParam {
            name: "tol",
            reason: format!("must be positive and finite, got {tol}"),
        });
    }
    let active = active_cells(params);
    let dim = params.dim();
    let mut clusters: Vec<EquilibriumCluster> = Vec::new();
    let mut n_converged = 0;

    for start in 0..n_starts {
        let x0 = if start == 0 {
            uniform_active(params)
        } else {
            // Flat Dirichlet over the active cells.
            let mut rng = CounterRng::stream(seed, start as u64, 0);
            let mut x = vec![0.0; dim];
            let mut total = 0.0;
            for &i in &active {
                let e = rng.next_exp();
                x[i] = e;
                total += e;
            }
            x.iter_mut().for_each(|v| *v /= total);
            x
        };
        let out = solve_from(params, x0, tol, max_iter);
        if !out.converged {
            continue;
        }
        n_converged += 1;
        let result = EquilibriumResult {
            x_star: StateVector::from_flat(params.k, out.x)?,
            residual_inf: out.residual,
            iterations: out.iterations,
            method: out.method,
        };
        match clusters
            .iter_mut()
            .find(|c| c.representative.x_star.max_abs_diff(&result.x_star) <= CLUSTER_TOL)
        {
            Some(c) => c.members += 1,
            None => clusters.push(EquilibriumCluster { representative: result, members: 1 }),
        }
    }

    Ok(MultistartReport { clusters, n_starts, n_converged })
}

/// The full system with the sum constraint folded in: the last A-side
/// coordinate is eliminated via `x_n = 1 - sum(y)`, giving affine
/// dynamics `dy = A' y + c` at a frozen leader mix.
#[derive(Debug, Clone)]
pub struct ReducedSystem {
    pub a_prime: DMatrix<f64>,
    pub c: DVector<f64>,
    pub eliminated_index: usize,
}

impl ReducedSystem {
    pub fn dim(&self) -> usize {
        self.a_prime.nrows()
    }
}

/// Eliminates the last A-side lock state from the generator at the
/// given leader mix: `A'[i][j] = A[i][j] - A[i][n-1]`, `c = A[.., n-1]`.
pub fn reduce_system(params: &ModelParams, q_hdv: f64) -> Result<ReducedSystem, Error> {
    let a = assemble_generator(params, q_hdv)?;
    Ok(reduce_matrix(&a))
}

pub(crate) fn reduce_matrix(a: &DMatrix<f64>) -> ReducedSystem {
    let n = a.nrows();
    let m = n - 1;
    let mut a_prime = DMatrix::zeros(m, m);
    let mut c = DVector::zeros(m);
    for i in 0..m {
        let last = a[(i, m)];
        for j in 0..m {
            a_prime[(i, j)] = a[(i, j)] - last;
        }
        c[i] = last;
    }
    ReducedSystem { a_prime, c, eliminated_index: m }
}
