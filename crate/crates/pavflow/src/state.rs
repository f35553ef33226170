//! Population state on the probability simplex.
//!
//! The state tracks the fraction of PAVs in each mode/stage cell:
//! `x_h[0]` is unlocked HDV mode, `x_h[1..=k]` the stages of the
//! HDV -> AV lock chain, and symmetrically `x_a[0]`, `x_a[1..=k]` for AV
//! mode. The `2 (k + 1)` entries are nonnegative and sum to one; both
//! properties are enforced within [`SIMPLEX_TOL`] at construction.

use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::error::Error;
use crate::params::ModelParams;

/// Tolerance on nonnegativity and normalization of state inputs.
pub const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    k: usize,
    /// Flat layout `[x_h[0..=k], x_a[0..=k]]`.
    data: Vec<f64>,
}

impl StateVector {
    /// Builds a state from the two mode blocks, validating shape,
    /// nonnegativity and normalization.
    pub fn new(x_h: &[f64], x_a: &[f64]) -> Result<Self, Error> {
        if x_h.len() != x_a.len() || x_h.is_empty() {
            return Err(Error::InvalidState(format!(
                "mode blocks must both have k+1 entries, got {} and {}",
                x_h.len(),
                x_a.len()
            )));
        }
        let k = x_h.len() - 1;
        let mut data = Vec::with_capacity(2 * (k + 1));
        data.extend_from_slice(x_h);
        data.extend_from_slice(x_a);
        Self::from_flat(k, data)
    }

    /// Builds a state from the flat layout `[x_h..., x_a...]`.
    pub fn from_flat(k: usize, data: Vec<f64>) -> Result<Self, Error> {
        if data.len() != 2 * (k + 1) {
            return Err(Error::InvalidState(format!(
                "expected {} entries for k={k}, got {}",
                2 * (k + 1),
                data.len()
            )));
        }
        for (i, &v) in data.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::InvalidState(format!("entry {i} is not finite: {v}")));
            }
            if v < -SIMPLEX_TOL {
                return Err(Error::InvalidState(format!("entry {i} is negative: {v:.3e}")));
            }
        }
        let total: f64 = data.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidState(format!(
                "entries sum to {total:.12} instead of 1"
            )));
        }
        Ok(Self { k, data })
    }

    pub(crate) fn from_flat_unchecked(k: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), 2 * (k + 1));
        Self { k, data }
    }

    /// All mass split between the two unlocked cells; lock stages empty.
    pub fn from_origin_fractions(frac_h0: f64, frac_a0: f64, k: usize) -> Result<Self, Error> {
        let mut data = vec![0.0; 2 * (k + 1)];
        data[0] = frac_h0;
        data[k + 1] = frac_a0;
        Self::from_flat(k, data)
    }

    /// Uniform mass over every cell.
    pub fn uniform(k: usize) -> Self {
        let n = 2 * (k + 1);
        Self { k, data: vec![1.0 / n as f64; n] }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    /// HDV-mode block `x_h[0..=k]`.
    pub fn x_h(&self) -> &[f64] {
        &self.data[..self.k + 1]
    }

    /// AV-mode block `x_a[0..=k]`.
    pub fn x_a(&self) -> &[f64] {
        &self.data[self.k + 1..]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Total HDV-mode fraction (unlocked plus locked stages).
    pub fn sum_h(&self) -> f64 {
        self.x_h().iter().sum()
    }

    /// Total AV-mode fraction.
    pub fn sum_a(&self) -> f64 {
        self.x_a().iter().sum()
    }

    pub fn total(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Largest absolute componentwise difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Serialize for StateVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("StateVector", 3)?;
        s.serialize_field("k", &self.k)?;
        s.serialize_field("x_h", self.x_h())?;
        s.serialize_field("x_a", self.x_a())?;
        s.end()
    }
}

/// Probability that a randomly encountered leader is in each mode.
///
/// Permanent HDVs (fraction `gamma`) always count toward the HDV side:
/// `q_hdv = gamma + (1 - gamma) * sum_h`. The AV side is the exact
/// complement so the two always add to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LeaderProbabilities {
    pub q_hdv: f64,
    pub q_av: f64,
}

impl LeaderProbabilities {
    /// From the total HDV-mode fraction of the PAV population.
    pub fn from_sum_h(params: &ModelParams, sum_h: f64) -> Self {
        let q_hdv = params.gamma + (1.0 - params.gamma) * sum_h;
        Self { q_hdv, q_av: 1.0 - q_hdv }
    }
}

/// Leader-mode probabilities induced by a population state.
pub fn leader_probabilities(params: &ModelParams, x: &StateVector) -> Result<LeaderProbabilities, Error> {
    if x.k() != params.k {
        return Err(Error::DimensionMismatch { state_k: x.k(), params_k: params.k });
    }
    Ok(LeaderProbabilities::from_sum_h(params, x.sum_h()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepts_valid_simplex_points() {
        let x = StateVector::new(&[0.5, 0.0], &[0.5, 0.0]).unwrap();
        assert_eq!(x.k(), 1);
        assert_eq!(x.sum_h(), 0.5);
        assert_eq!(x.total(), 1.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(StateVector::new(&[0.5, 0.0], &[0.5]).is_err());
        assert!(StateVector::new(&[0.6, 0.0], &[0.5, 0.0]).is_err());
        assert!(StateVector::new(&[-0.1, 0.6], &[0.5, 0.0]).is_err());
        assert!(StateVector::new(&[f64::NAN, 0.5], &[0.5, 0.0]).is_err());
    }

    #[test]
    fn tolerates_rounding_noise() {
        let eps = 5e-10;
        let x = StateVector::new(&[0.5 + eps, -eps], &[0.5, 0.0]).unwrap();
        assert!(x.x_h()[1] < 0.0); // kept as-is, not clamped
    }

    #[test]
    fn origin_fractions_layout() {
        let x = StateVector::from_origin_fractions(0.3, 0.7, 3).unwrap();
        assert_eq!(x.x_h(), &[0.3, 0.0, 0.0, 0.0]);
        assert_eq!(x.x_a(), &[0.7, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn leader_probabilities_examples() {
        let p = ModelParams::leader_dependent_defaults(); // gamma = 0.2
        let x = StateVector::from_origin_fractions(0.5, 0.5, p.k).unwrap();
        let q = leader_probabilities(&p, &x).unwrap();
        assert!((q.q_hdv - 0.6).abs() < 1e-15);
        assert!((q.q_av - 0.4).abs() < 1e-15);

        // gamma = 1: every leader is an HDV no matter the PAV mix.
        let p1 = p.clone().with_gamma(1.0);
        let q1 = leader_probabilities(&p1, &x).unwrap();
        assert_eq!(q1.q_hdv, 1.0);
        assert_eq!(q1.q_av, 0.0);

        // gamma = 0 and all PAVs in AV mode: every leader is an AV.
        let p0 = p.clone().with_gamma(0.0);
        let all_av = StateVector::from_origin_fractions(0.0, 1.0, p.k).unwrap();
        let q0 = leader_probabilities(&p0, &all_av).unwrap();
        assert_eq!(q0.q_hdv, 0.0);
        assert_eq!(q0.q_av, 1.0);
    }

    #[test]
    fn complement_is_exact_for_many_mixes() {
        let p = ModelParams::leader_dependent_defaults().with_gamma(0.37);
        for i in 0..=100 {
            let f = i as f64 / 100.0;
            let q = LeaderProbabilities::from_sum_h(&p, f);
            assert_eq!(q.q_hdv + q.q_av, 1.0);
        }
    }
}
