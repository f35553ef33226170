//! Erlang-k approximation of a fixed-duration lockout.
//!
//! A deterministic hold of `t_lock` seconds is replaced by a chain of
//! k exponential stages at rate k/t_lock: same mean, variance shrinks
//! as t_lock^2/k. The Wasserstein-1 distance between the chain's
//! completion time and the point mass at t_lock measures how faithful
//! the substitution is, and [`choose_k`] inverts that relationship.

use serde::Serialize;

use crate::error::Error;
use crate::special::lower_regularized;

/// Largest stage count [`choose_k`] will consider.
pub const MAX_STAGE_COUNT: usize = 100_000;

/// An Erlang-k stage chain tuned to a lockout duration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErlangSpec {
    pub k: usize,
    /// Per-stage rate, 1/s.
    pub rate_mu: f64,
    /// Completion-time mean, seconds. Equals the lockout it models.
    pub mean: f64,
    /// Completion-time variance, s^2. mean^2 / k.
    pub variance: f64,
}

/// Stage rate for a k-stage chain whose total mean is `t_lock`.
pub fn design_rate(k: usize, t_lock: f64) -> Result<ErlangSpec, Error> {
    if k == 0 {
        return Err(Error::InvalidParam {
            name: "k",
            reason: "stage count must be at least 1".into(),
        });
    }
    if !(t_lock > 0.0 && t_lock.is_finite()) {
        return Err(Error::InvalidParam {
            name: "t_lock",
            reason: format!("lockout must be positive and finite, got {t_lock}"),
        });
    }
    let kf = k as f64;
    Ok(ErlangSpec {
        k,
        rate_mu: kf / t_lock,
        mean: t_lock,
        variance: t_lock * t_lock / kf,
    })
}

/// Completion-time CDF: P(k, mu t), the regularized lower incomplete
/// gamma function.
pub fn erlang_cdf(spec: ErlangSpec, t: f64) -> Result<f64, Error> {
    if !(t >= 0.0) {
        return Err(Error::InvalidParam {
            name: "t",
            reason: format!("time must be nonnegative, got {t}"),
        });
    }
    Ok(lower_regularized(spec.k as f64, spec.rate_mu * t))
}

/// W1 distance between the chain's completion time and the point mass
/// at its mean: integral of |F(t) - step(t - mean)|, split at the mean
/// where the integrand's kink sits. Equals E|X - mean|. Accuracy well
/// inside 1e-6.
pub fn wasserstein_to_dirac(spec: ErlangSpec) -> f64 {
    let a = spec.k as f64;
    let mu = spec.rate_mu;
    let cdf = move |t: f64| lower_regularized(a, mu * t);
    let below = adaptive_simpson(&cdf, 0.0, spec.mean, 5e-9);
    // Past mean(1 + 40/sqrt k) the surviving tail mass is below 1e-15
    // of the result (Chernoff bound on the gamma tail).
    let cutoff = spec.mean * (1.0 + 40.0 / a.sqrt());
    let above = adaptive_simpson(&move |t: f64| 1.0 - cdf(t), spec.mean, cutoff, 5e-9);
    below + above
}

/// Smallest k whose Erlang chain sits within `threshold` seconds (W1)
/// of the deterministic lockout. Doubling search for a bracket, then
/// bisection; the W1 values probed along the way are checked for
/// monotone decrease in k.
pub fn choose_k(t_lock: f64, threshold: f64) -> Result<usize, Error> {
    if !(t_lock > 0.0 && t_lock.is_finite()) {
        return Err(Error::InvalidParam {
            name: "t_lock",
            reason: format!("lockout must be positive and finite, got {t_lock}"),
        });
    }
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(Error::InvalidParam {
            name: "threshold",
            reason: format!("threshold must be positive and finite, got {threshold}"),
        });
    }

    let mut probes: Vec<(usize, f64)> = Vec::new();
    let eval = |k: usize, probes: &mut Vec<(usize, f64)>| -> f64 {
        let spec = design_rate(k, t_lock).expect("validated above");
        let w1 = wasserstein_to_dirac(spec);
        probes.push((k, w1));
        w1
    };

    // Doubling phase: find the first probe at or under the threshold.
    let mut lo = 0usize; // largest probed k still above threshold
    let mut hi = None;
    let mut k = 1usize;
    loop {
        if eval(k, &mut probes) <= threshold {
            hi = Some(k);
            break;
        }
        lo = k;
        if k == MAX_STAGE_COUNT {
            break;
        }
        k = (k * 2).min(MAX_STAGE_COUNT);
    }
    let Some(mut hi) = hi else {
        check_monotone(&probes)?;
        return Err(Error::ThresholdUnreachable {
            threshold,
            cap: MAX_STAGE_COUNT,
        });
    };

    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if eval(mid, &mut probes) <= threshold {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    check_monotone(&probes)?;
    Ok(hi)
}

/// W1 must shrink as k grows (variance is t_lock^2/k). A violation on
/// the probed points would mean the quadrature noise exceeds its
/// budget, which invalidates the search.
fn check_monotone(probes: &[(usize, f64)]) -> Result<(), Error> {
    let mut sorted = probes.to_vec();
    sorted.sort_by_key(|&(k, _)| k);
    sorted.dedup_by_key(|&mut (k, _)| k);
    for pair in sorted.windows(2) {
        let (k_lo, w_lo) = pair[0];
        let (k_hi, w_hi) = pair[1];
        if w_hi > w_lo + 1e-12 {
            return Err(Error::Numerics(format!(
                "W1 not decreasing between k={k_lo} ({w_lo:.9}) and k={k_hi} ({w_hi:.9})"
            )));
        }
    }
    Ok(())
}

fn simpson(width: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    width / 6.0 * (fa + 4.0 * fm + fb)
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let m = 0.5 * (a + b);
    let fa = f(a);
    let fm = f(m);
    let fb = f(b);
    let whole = simpson(b - a, fa, fm, fb);
    refine(f, a, fa, m, fm, b, fb, whole, tol, 48)
}

#[allow(clippy::too_many_arguments)]
fn refine(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    fa: f64,
    m: f64,
    fm: f64,
    b: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(m - a, fa, flm, fm);
    let right = simpson(b - m, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        // Richardson tail pushes the composite rule to fifth order.
        left + right + delta / 15.0
    } else {
        refine(f, a, fa, lm, flm, m, fm, left, 0.5 * tol, depth - 1)
            + refine(f, m, fm, rm, frm, b, fb, right, 0.5 * tol, depth - 1)
    }
}
