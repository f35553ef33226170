//! Population drift and its generator decomposition.
//!
//! The population evolves by `dx/dt = A(q_hdv(x)) x` where the generator
//! splits as `A(q) = A0 + q A1 + (1 - q) A2`:
//!
//! * `A0` carries the lock-chain progressions (rate `mu` per stage,
//!   completion feeding the opposite unlocked cell),
//! * `A1` carries the switch initiations behind an HDV leader
//!   (`lambda1`, `lambda2`),
//! * `A2` the same behind an AV leader (`lambda3`, `lambda4`).
//!
//! Every column of each part sums to zero and all off-diagonal entries of
//! `A0 + A1` and `A0 + A2` are nonnegative, so total mass is conserved and
//! the simplex is forward-invariant. The drift is evaluated matrix-free in
//! `O(k)`; dense assembly exists for the analysis paths and is capped at
//! small `k`.

use nalgebra::DMatrix;

use crate::error::Error;
use crate::params::{ModelParams, ANALYSIS_K_CAP};
use crate::state::{LeaderProbabilities, StateVector, SIMPLEX_TOL};

/// Switch rates felt by the PAV population under a given leader mix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveRates {
    /// HDV -> AV initiation rate.
    pub lambda_ha: f64,
    /// AV -> HDV initiation rate.
    pub lambda_ah: f64,
}

/// Convex mix of the base rates by leader mode.
pub fn effective_rates(params: &ModelParams, q: &LeaderProbabilities) -> EffectiveRates {
    EffectiveRates {
        lambda_ha: q.q_hdv * params.lambda1 + q.q_av * params.lambda3,
        lambda_ah: q.q_hdv * params.lambda2 + q.q_av * params.lambda4,
    }
}

/// Time derivative of the population state under the nonlinear dynamics.
///
/// Output uses the same flat layout as [`StateVector`]. The entries sum
/// to zero; cells at zero mass never get a negative derivative.
pub fn drift(params: &ModelParams, x: &StateVector) -> Result<Vec<f64>, Error> {
    if x.k() != params.k {
        return Err(Error::DimensionMismatch { state_k: x.k(), params_k: params.k });
    }
    check_topology_support(params, x)?;
    let mut out = vec![0.0; x.dim()];
    drift_into(params, x.as_slice(), &mut out);
    Ok(out)
}

/// A disabled lock chain has no dynamics, so mass parked there would be
/// frozen forever; reject such states as inconsistent.
pub(crate) fn check_topology_support(params: &ModelParams, x: &StateVector) -> Result<(), Error> {
    if !params.has_h_chain() && x.x_h()[1..].iter().any(|&v| v > SIMPLEX_TOL) {
        return Err(Error::InvalidState(
            "mass in the HDV-side lock chain, but t_lock_h = 0 disables it".into(),
        ));
    }
    if !params.has_a_chain() && x.x_a()[1..].iter().any(|&v| v > SIMPLEX_TOL) {
        return Err(Error::InvalidState(
            "mass in the AV-side lock chain, but t_lock_a = 0 disables it".into(),
        ));
    }
    Ok(())
}

/// Matrix-free drift kernel. `x` and `out` use the flat layout; no
/// validation, no allocation. Callers guarantee matching dimensions.
pub(crate) fn drift_into(params: &ModelParams, x: &[f64], out: &mut [f64]) {
    let k = params.k;
    let n1 = k + 1;
    debug_assert_eq!(x.len(), 2 * n1);
    debug_assert_eq!(out.len(), 2 * n1);

    let sum_h: f64 = x[..n1].iter().sum();
    let q = LeaderProbabilities::from_sum_h(params, sum_h);
    let rates = effective_rates(params, &q);

    let (xh, xa) = x.split_at(n1);
    let (oh, oa) = out.split_at_mut(n1);

    let start_ha = rates.lambda_ha * xh[0]; // HDV -> AV initiations
    let start_ah = rates.lambda_ah * xa[0]; // AV -> HDV initiations

    // HDV-side lock chain.
    let complete_a = match params.mu_a() {
        Some(mu_a) => mu_a * xa[k], // AV -> HDV completions land in h0
        None => start_ah,           // no chain: the switch lands immediately
    };
    oh[0] = complete_a - start_ha;
    match params.mu_h() {
        Some(mu_h) => {
            oh[1] = start_ha - mu_h * xh[1];
            for i in 2..=k {
                oh[i] = mu_h * (xh[i - 1] - xh[i]);
            }
        }
        None => oh[1..].fill(0.0),
    }

    // AV-side lock chain, mirrored.
    let complete_h = match params.mu_h() {
        Some(mu_h) => mu_h * xh[k],
        None => start_ha,
    };
    oa[0] = complete_h - start_ah;
    match params.mu_a() {
        Some(mu_a) => {
            oa[1] = start_ah - mu_a * xa[1];
            for i in 2..=k {
                oa[i] = mu_a * (xa[i - 1] - xa[i]);
            }
        }
        None => oa[1..].fill(0.0),
    }
}

/// Dense split `A(q) = A0 + q A1 + (1 - q) A2` for the analysis paths.
#[derive(Debug, Clone)]
pub struct GeneratorDecomposition {
    pub a0: DMatrix<f64>,
    pub a1: DMatrix<f64>,
    pub a2: DMatrix<f64>,
    k: usize,
}

impl GeneratorDecomposition {
    /// Builds the dense generator parts. Dense matrices scale as
    /// `O(k^2)` in memory and worse in the downstream eigen/LMI work,
    /// so this path refuses `k > ANALYSIS_K_CAP`.
    pub fn assemble(params: &ModelParams) -> Result<Self, Error> {
        if params.k > ANALYSIS_K_CAP {
            return Err(Error::AnalysisCap { k: params.k, cap: ANALYSIS_K_CAP });
        }
        let k = params.k;
        let n1 = k + 1;
        let dim = 2 * n1;
        let h = |i: usize| i;
        let a = |i: usize| n1 + i;

        let mut a0 = DMatrix::zeros(dim, dim);
        let mut a1 = DMatrix::zeros(dim, dim);
        let mut a2 = DMatrix::zeros(dim, dim);

        // Switch initiations. With a live chain the switch enters stage 1;
        // with a zero lockout it completes in one jump.
        let ha_target = if params.has_h_chain() { h(1) } else { a(0) };
        let ah_target = if params.has_a_chain() { a(1) } else { h(0) };
        add_flow(&mut a1, h(0), ha_target, params.lambda1);
        add_flow(&mut a1, a(0), ah_target, params.lambda2);
        add_flow(&mut a2, h(0), ha_target, params.lambda3);
        add_flow(&mut a2, a(0), ah_target, params.lambda4);

        // Lock-chain progressions and completions.
        if let Some(mu_h) = params.mu_h() {
            for i in 1..k {
                add_flow(&mut a0, h(i), h(i + 1), mu_h);
            }
            add_flow(&mut a0, h(k), a(0), mu_h);
        }
        if let Some(mu_a) = params.mu_a() {
            for i in 1..k {
                add_flow(&mut a0, a(i), a(i + 1), mu_a);
            }
            add_flow(&mut a0, a(k), h(0), mu_a);
        }

        Ok(GeneratorDecomposition { a0, a1, a2, k })
    }

    /// The generator at a fixed leader-mix `q_hdv`.
    pub fn combine(&self, q_hdv: f64) -> DMatrix<f64> {
        &self.a0 + &self.a1 * q_hdv + &self.a2 * (1.0 - q_hdv)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        2 * (self.k + 1)
    }
}

fn add_flow(m: &mut DMatrix<f64>, src: usize, dst: usize, rate: f64) {
    m[(dst, src)] += rate;
    m[(src, src)] -= rate;
}

/// The dense generator `A0 + q A1 + (1 - q) A2` at a fixed leader mix.
/// Subject to the same `k` cap as [`GeneratorDecomposition::assemble`].
pub fn assemble_generator(params: &ModelParams, q_hdv: f64) -> Result<DMatrix<f64>, Error> {
    if !(0.0..=1.0).contains(&q_hdv) {
        return Err(Error::InvalidParam {
            name: "q_hdv",
            reason: format!("must lie in [0, 1], got {q_hdv}"),
        });
    }
    Ok(GeneratorDecomposition::assemble(params)?.combine(q_hdv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::leader_probabilities;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_simplex(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
        // Dirichlet(1,...,1) via normalized exponentials.
        let mut v: Vec<f64> = (0..dim).map(|_| -rng.gen::<f64>().max(1e-16).ln()).collect();
        let s: f64 = v.iter().sum();
        v.iter_mut().for_each(|x| *x /= s);
        v
    }

    fn rand_params(rng: &mut impl Rng, k: usize) -> ModelParams {
        ModelParams::new(
            rng.gen_range(0.01..=1.0),
            rng.gen_range(0.01..=1.0),
            rng.gen_range(0.01..=1.0),
            rng.gen_range(0.01..=1.0),
            rng.gen_range(0.0..=1.0),
            k,
            rng.gen_range(0.5..5.0),
            rng.gen_range(0.5..5.0),
        )
        .unwrap()
    }

    #[test]
    fn effective_rates_examples() {
        let p = ModelParams::leader_dependent_defaults(); // 0.1, 0.15, 0.9, 0.05
        let at = |q_hdv: f64| {
            effective_rates(&p, &LeaderProbabilities { q_hdv, q_av: 1.0 - q_hdv })
        };
        let r = at(0.6);
        assert!((r.lambda_ah - 0.11).abs() < 1e-15); // 0.6*0.15 + 0.4*0.05
        assert!((r.lambda_ha - (0.6 * 0.1 + 0.4 * 0.9)).abs() < 1e-15);
        // Pure-leader corners recover the base rates.
        assert_eq!(at(1.0).lambda_ha, p.lambda1);
        assert_eq!(at(1.0).lambda_ah, p.lambda2);
        assert_eq!(at(0.0).lambda_ha, p.lambda3);
        assert_eq!(at(0.0).lambda_ah, p.lambda4);
    }

    #[test]
    fn effective_rates_stay_within_base_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let p = rand_params(&mut rng, 2);
            let q_hdv: f64 = rng.gen_range(0.0..=1.0);
            let r = effective_rates(&p, &LeaderProbabilities { q_hdv, q_av: 1.0 - q_hdv });
            assert!(r.lambda_ha >= p.lambda1.min(p.lambda3) - 1e-15);
            assert!(r.lambda_ha <= p.lambda1.max(p.lambda3) + 1e-15);
            assert!(r.lambda_ah >= p.lambda2.min(p.lambda4) - 1e-15);
            assert!(r.lambda_ah <= p.lambda2.max(p.lambda4) + 1e-15);
        }
    }

    #[test]
    fn drift_from_single_source() {
        // All mass unlocked HDV: the only flow is lambda_ha into stage 1.
        let p = ModelParams::new(0.1, 0.2, 0.3, 0.4, 0.0, 1, 3.0, 3.0).unwrap();
        let x = StateVector::from_origin_fractions(1.0, 0.0, 1).unwrap();
        let d = drift(&p, &x).unwrap();
        // q_hdv = 1 here, so lambda_ha = lambda1.
        assert!((d[0] + 0.1).abs() < 1e-15);
        assert!((d[1] - 0.1).abs() < 1e-15);
        assert_eq!(&d[2..], &[0.0, 0.0]);
    }

    #[test]
    fn drift_sums_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..2000 {
            let k = rng.gen_range(1..=12);
            let p = rand_params(&mut rng, k);
            let x = StateVector::from_flat(k, rand_simplex(&mut rng, 2 * (k + 1))).unwrap();
            let d = drift(&p, &x).unwrap();
            let s: f64 = d.iter().sum();
            assert!(s.abs() < 1e-13, "drift sum {s:e} for k={k}");
        }
    }

    /// Independent check against the written-out 6x6 generator for k=2.
    #[test]
    fn drift_matches_written_out_generator_k2() {
        let p = ModelParams::new(0.3, 0.7, 0.9, 0.2, 0.25, 2, 2.0, 4.0).unwrap();
        let mu_h = 1.0; // 2 / 2.0
        let mu_a = 0.5; // 2 / 4.0
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let x = rand_simplex(&mut rng, 6);
            let sum_h = x[0] + x[1] + x[2];
            let q = p.gamma + (1.0 - p.gamma) * sum_h;
            let lam_ha = q * p.lambda1 + (1.0 - q) * p.lambda3;
            let lam_ah = q * p.lambda2 + (1.0 - q) * p.lambda4;
            // Rows/cols ordered [h0, h1, h2, a0, a1, a2].
            #[rustfmt::skip]
            let a = [
                [-lam_ha,    0.0,   0.0,     0.0,    0.0,  mu_a],
                [ lam_ha,  -mu_h,   0.0,     0.0,    0.0,   0.0],
                [    0.0,   mu_h, -mu_h,     0.0,    0.0,   0.0],
                [    0.0,    0.0,  mu_h, -lam_ah,    0.0,   0.0],
                [    0.0,    0.0,   0.0,  lam_ah,  -mu_a,   0.0],
                [    0.0,    0.0,   0.0,     0.0,   mu_a, -mu_a],
            ];
            let expected: Vec<f64> = a
                .iter()
                .map(|row| row.iter().zip(&x).map(|(c, xi)| c * xi).sum())
                .collect();
            let sv = StateVector::from_flat(2, x.clone()).unwrap();
            let got = drift(&p, &sv).unwrap();
            for (g, e) in got.iter().zip(&expected) {
                assert!((g - e).abs() < 1e-14, "{g} vs {e}");
            }
        }
    }

    #[test]
    fn drift_at_uniform_state_matches_default_rates_generator_k2() {
        // Default rates, k = 2, uniform mass over all six cells.
        let p = ModelParams::leader_dependent_defaults().with_k(2);
        let x = StateVector::uniform(2);
        let q = leader_probabilities(&p, &x).unwrap();
        let a = assemble_generator(&p, q.q_hdv).unwrap();
        let xv = nalgebra::DVector::from_column_slice(x.as_slice());
        let expected = &a * &xv;
        let got = drift(&p, &x).unwrap();
        for i in 0..6 {
            assert!((got[i] - expected[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn assemble_generator_rejects_bad_q() {
        let p = ModelParams::leader_dependent_defaults().with_k(2);
        assert!(assemble_generator(&p, 1.2).is_err());
        assert!(assemble_generator(&p, -0.1).is_err());
        assert!(assemble_generator(&p, 0.0).is_ok());
    }

    #[test]
    fn matrix_free_matches_assembled_generator() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..300 {
            let k = rng.gen_range(1..=8);
            let mut p = rand_params(&mut rng, k);
            // Exercise the degenerate topologies too.
            match rng.gen_range(0..4) {
                1 => p.t_lock_a = 0.0,
                2 => p.t_lock_h = 0.0,
                3 => {
                    p.t_lock_h = 0.0;
                    p.t_lock_a = 0.0;
                }
                _ => {}
            }
            let mut flat = rand_simplex(&mut rng, 2 * (k + 1));
            // Keep disabled chains empty so the state is consistent.
            if !p.has_h_chain() {
                for i in 1..=k {
                    flat[i] = 0.0;
                }
            }
            if !p.has_a_chain() {
                for i in 1..=k {
                    flat[k + 1 + i] = 0.0;
                }
            }
            let s: f64 = flat.iter().sum();
            flat.iter_mut().for_each(|v| *v /= s);

            let x = StateVector::from_flat(k, flat.clone()).unwrap();
            let q = leader_probabilities(&p, &x).unwrap();
            let gen = GeneratorDecomposition::assemble(&p).unwrap();
            let a = gen.combine(q.q_hdv);
            let xv = nalgebra::DVector::from_vec(flat);
            let dense = &a * &xv;
            let free = drift(&p, &x).unwrap();
            for i in 0..x.dim() {
                assert!(
                    (dense[i] - free[i]).abs() < 1e-12,
                    "k={k} i={i}: {} vs {}",
                    dense[i],
                    free[i]
                );
            }
        }
    }

    #[test]
    fn generator_parts_are_conservative_and_metzler() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..100 {
            let k = rng.gen_range(1..=6);
            let p = rand_params(&mut rng, k);
            let gen = GeneratorDecomposition::assemble(&p).unwrap();
            for m in [gen.combine(1.0), gen.combine(0.0)] {
                for j in 0..m.ncols() {
                    let col_sum: f64 = m.column(j).iter().sum();
                    assert!(col_sum.abs() < 1e-14, "column {j} sums to {col_sum:e}");
                    for i in 0..m.nrows() {
                        if i != j {
                            assert!(m[(i, j)] >= 0.0, "negative off-diagonal at ({i},{j})");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn leader_independent_generator_is_constant_in_q() {
        let p = ModelParams::leader_independent(0.1, 0.5, 0.2, 3, 3.0, 3.0).unwrap();
        let gen = GeneratorDecomposition::assemble(&p).unwrap();
        let base = gen.combine(0.0);
        for i in 1..=10 {
            let m = gen.combine(i as f64 / 10.0);
            assert!((&m - &base).abs().max() < 1e-15);
        }
    }

    #[test]
    fn empty_cells_never_drain() {
        let mut rng = ChaCha8Rng::seed_from_u64(59);
        for _ in 0..500 {
            let k = rng.gen_range(1..=6);
            let p = rand_params(&mut rng, k);
            let dim = 2 * (k + 1);
            let mut flat = rand_simplex(&mut rng, dim);
            // Zero a random subset and renormalize: boundary of the simplex.
            for i in 0..dim {
                if rng.gen_bool(0.5) {
                    flat[i] = 0.0;
                }
            }
            let s: f64 = flat.iter().sum();
            if s <= 0.0 {
                continue;
            }
            flat.iter_mut().for_each(|v| *v /= s);
            let x = StateVector::from_flat(k, flat.clone()).unwrap();
            let d = drift(&p, &x).unwrap();
            for i in 0..dim {
                if flat[i] == 0.0 {
                    assert!(d[i] >= 0.0, "cell {i} at zero got derivative {}", d[i]);
                }
            }
        }
    }

    #[test]
    fn full_cell_only_drains() {
        let p = ModelParams::leader_dependent_defaults().with_k(2);
        for idx in [0, 3] {
            let mut flat = vec![0.0; 6];
            flat[idx] = 1.0;
            let x = StateVector::from_flat(2, flat).unwrap();
            let d = drift(&p, &x).unwrap();
            assert!(d[idx] <= 0.0);
        }
    }

    #[test]
    fn zero_lockout_routes_switches_directly() {
        let p = ModelParams::new(0.2, 0.4, 0.2, 0.4, 0.0, 3, 3.0, 0.0).unwrap();
        let x = StateVector::from_origin_fractions(0.5, 0.5, 3).unwrap();
        let d = drift(&p, &x).unwrap();
        // AV -> HDV switches land in h0 immediately: 0.4 * 0.5 inflow,
        // minus the 0.2 * 0.5 of HDV -> AV initiations.
        assert!((d[0] - (0.4 * 0.5 - 0.2 * 0.5)).abs() < 1e-15);
        // The AV-side chain stays empty.
        assert_eq!(&d[5..], &[0.0, 0.0, 0.0]);
        let s: f64 = d.iter().sum();
        assert!(s.abs() < 1e-15);
    }

    #[test]
    fn rejects_mass_in_disabled_chain() {
        let p = ModelParams::new(0.2, 0.4, 0.2, 0.4, 0.0, 2, 3.0, 0.0).unwrap();
        let x = StateVector::new(&[0.5, 0.0, 0.0], &[0.3, 0.2, 0.0]).unwrap();
        assert!(drift(&p, &x).is_err());
    }

    #[test]
    fn assembly_refuses_large_k() {
        let p = ModelParams::leader_dependent_defaults(); // k = 200
        assert!(matches!(
            GeneratorDecomposition::assemble(&p),
            Err(Error::AnalysisCap { k: 200, cap: ANALYSIS_K_CAP })
        ));
    }
}
