//! Model parameters for the mode-switching vehicle population.
//!
//! A partially automated vehicle (PAV) drives in one of two modes, HDV
//! (human) or AV (automated), and switches between them at rates that
//! depend on the mode of its leader. Four base rates cover the cases:
//!
//! * `lambda1`: HDV -> AV switch rate behind an HDV leader,
//! * `lambda2`: AV -> HDV switch rate behind an HDV leader,
//! * `lambda3`: HDV -> AV switch rate behind an AV leader,
//! * `lambda4`: AV -> HDV switch rate behind an AV leader.
//!
//! After a switch the vehicle is locked out of further switches for a
//! fixed duration. The deterministic lockout is modelled by an Erlang
//! chain of `k` exponential stages with per-stage rate `mu = k / t_lock`,
//! which keeps the mean at `t_lock` and shrinks the variance
//! `t_lock^2 / k` as `k` grows. A zero lockout removes the chain on that
//! side entirely and the switch completes in one jump.

use serde::Serialize;

use crate::error::Error;

/// Dense matrix assembly and reduction refuse chains longer than this;
/// the matrix-free drift has no such limit.
pub const ANALYSIS_K_CAP: usize = 32;

/// Static description of one population scenario.
///
/// `gamma` is the fraction of permanent HDVs (never switch); the
/// remaining `1 - gamma` of the fleet are PAVs governed by the rates
/// above. All switch rates live in `(0, 1]` per second.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelParams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
    /// Permanent-HDV fraction in `[0, 1]`.
    pub gamma: f64,
    /// Number of Erlang stages per lock chain, `>= 1`.
    pub k: usize,
    /// Lockout after an HDV -> AV switch, seconds (`0` disables the chain).
    pub t_lock_h: f64,
    /// Lockout after an AV -> HDV switch, seconds (`0` disables the chain).
    pub t_lock_a: f64,
}

impl ModelParams {
    pub const DEFAULT_K: usize = 200;
    pub const DEFAULT_T_LOCK: f64 = 3.0;
    pub const DEFAULT_GAMMA: f64 = 0.2;

    pub fn new(
        lambda1: f64,
        lambda2: f64,
        lambda3: f64,
        lambda4: f64,
        gamma: f64,
        k: usize,
        t_lock_h: f64,
        t_lock_a: f64,
    ) -> Result<Self, Error> {
        let p = Self { lambda1, lambda2, lambda3, lambda4, gamma, k, t_lock_h, t_lock_a };
        p.validate()?;
        Ok(p)
    }

    /// Default leader-dependent scenario: upgrades are strongly favoured
    /// behind an AV leader (`lambda3 = 0.9`) and downgrades mildly favoured
    /// behind an HDV leader, with the standard 3 s lockouts and `k = 200`.
    pub fn leader_dependent_defaults() -> Self {
        Self {
            lambda1: 0.1,
            lambda2: 0.15,
            lambda3: 0.9,
            lambda4: 0.05,
            gamma: Self::DEFAULT_GAMMA,
            k: Self::DEFAULT_K,
            t_lock_h: Self::DEFAULT_T_LOCK,
            t_lock_a: Self::DEFAULT_T_LOCK,
        }
    }

    /// Scenario whose switch rates ignore the leader mode
    /// (`lambda1 = lambda3`, `lambda2 = lambda4`).
    pub fn leader_independent(
        lambda_ha: f64,
        lambda_ah: f64,
        gamma: f64,
        k: usize,
        t_lock_h: f64,
        t_lock_a: f64,
    ) -> Result<Self, Error> {
        Self::new(lambda_ha, lambda_ah, lambda_ha, lambda_ah, gamma, k, t_lock_h, t_lock_a)
    }

    pub fn validate(&self) -> Result<(), Error> {
        let rate = |name: &'static str, v: f64| -> Result<(), Error> {
            if !(v > 0.0 && v <= 1.0) || !v.is_finite() {
                return Err(Error::InvalidParam {
                    name,
                    reason: format!("switch rates must lie in (0, 1], got {v}"),
                });
            }
            Ok(())
        };
        rate("lambda1", self.lambda1)?;
        rate("lambda2", self.lambda2)?;
        rate("lambda3", self.lambda3)?;
        rate("lambda4", self.lambda4)?;
        if !(self.gamma >= 0.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidParam {
                name: "gamma",
                reason: format!("permanent-HDV fraction must lie in [0, 1], got {}", self.gamma),
            });
        }
        if self.k == 0 {
            return Err(Error::InvalidParam {
                name: "k",
                reason: "lock chains need at least one stage".into(),
            });
        }
        for (name, t) in [("t_lock_h", self.t_lock_h), ("t_lock_a", self.t_lock_a)] {
            if !(t >= 0.0) || !t.is_finite() {
                return Err(Error::InvalidParam {
                    name,
                    reason: format!("lockout must be a finite duration >= 0, got {t}"),
                });
            }
        }
        Ok(())
    }

    /// Per-stage completion rate of the HDV -> AV lock chain, if present.
    pub fn mu_h(&self) -> Option<f64> {
        (self.t_lock_h > 0.0).then(|| self.k as f64 / self.t_lock_h)
    }

    /// Per-stage completion rate of the AV -> HDV lock chain, if present.
    pub fn mu_a(&self) -> Option<f64> {
        (self.t_lock_a > 0.0).then(|| self.k as f64 / self.t_lock_a)
    }

    pub fn has_h_chain(&self) -> bool {
        self.t_lock_h > 0.0
    }

    pub fn has_a_chain(&self) -> bool {
        self.t_lock_a > 0.0
    }

    /// Both lock chains active (the standard topology).
    pub fn has_both_chains(&self) -> bool {
        self.has_h_chain() && self.has_a_chain()
    }

    pub fn is_leader_independent(&self) -> bool {
        self.lambda1 == self.lambda3 && self.lambda2 == self.lambda4
    }

    /// State dimension `2 (k + 1)`.
    pub fn dim(&self) -> usize {
        2 * (self.k + 1)
    }

    /// Largest rate appearing in the generator over all leader mixes.
    /// Effective switch rates are convex combinations of the base rates,
    /// so the extremes sit at the pure-leader corners.
    pub fn max_rate(&self) -> f64 {
        let mut m = self
            .lambda1
            .max(self.lambda2)
            .max(self.lambda3)
            .max(self.lambda4);
        if let Some(mu) = self.mu_h() {
            m = m.max(mu);
        }
        if let Some(mu) = self.mu_a() {
            m = m.max(mu);
        }
        m
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }
}
