//! Log-gamma and the regularized lower incomplete gamma function.
//!
//! Implemented in-house so the crate carries no special-function
//! dependency. The incomplete gamma uses the textbook split: power
//! series below the diagonal (x < a + 1), modified Lentz continued
//! fraction above it. The normalizing exponent `a ln x - x - lnG(a)`
//! is evaluated through the Stirling form, which avoids the
//! catastrophic cancellation the naive expression hits for large `a`
//! (stage counts here reach 1e5).

const LN_TWO_PI: f64 = 1.837_877_066_409_345_3;

/// Stirling tail `lnG(a) - [(a - 1/2) ln a - a + ln(2 pi)/2]`.
/// Accurate to f64 roundoff for a >= 12.
fn stirling_tail(a: f64) -> f64 {
    let inv = 1.0 / a;
    let inv2 = inv * inv;
    inv * (1.0 / 12.0
        + inv2
            * (-1.0 / 360.0
                + inv2
                    * (1.0 / 1260.0
                        + inv2
                            * (-1.0 / 1680.0
                                + inv2
                                    * (1.0 / 1188.0
                                        + inv2 * (-691.0 / 360_360.0 + inv2 * (1.0 / 156.0)))))))
}

/// Natural log of the gamma function for x > 0.
pub(crate) fn ln_gamma(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    // Lift small arguments into the Stirling regime.
    let mut shift = 0.0;
    let mut z = x;
    while z < 12.0 {
        shift += z.ln();
        z += 1.0;
    }
    (z - 0.5) * z.ln() - z + 0.5 * LN_TWO_PI + stirling_tail(z) - shift
}

/// `a ln x - x - lnG(a)` without large-term cancellation.
fn gamma_exponent(a: f64, x: f64) -> f64 {
    debug_assert!(a > 0.0 && x > 0.0);
    if a < 12.0 {
        return a * x.ln() - x - ln_gamma(a);
    }
    // a ln(x/a) + (a - x) collapses to -a d(u) with d(u) = u - ln(1+u).
    let u = x / a - 1.0;
    let d = u - u.ln_1p();
    -a * d + 0.5 * (a.ln() - LN_TWO_PI) - stirling_tail(a)
}

fn lower_series(a: f64, x: f64) -> f64 {
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut n = 0.0;
    // Terms decay like exp(-n^2 / 2a) near the diagonal: O(sqrt a) of
    // them matter; the cap is never reached for finite inputs.
    while n < 1e7 {
        n += 1.0;
        term *= x / (a + n);
        sum += term;
        if term <= sum * 1e-17 {
            break;
        }
    }
    sum * gamma_exponent(a, x).exp()
}

/// Upper tail Q(a, x) via the modified Lentz continued fraction.
/// Valid for x >= a + 1, where the fraction converges fast.
fn upper_continued_fraction(a: f64, x: f64) -> f64 {
    const FPMIN: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / FPMIN;
    let mut d = 1.0 / b;
    let mut h = d;
    let mut i = 1.0;
    while i < 1e7 {
        let an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = b + an / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
        i += 1.0;
    }
    h * gamma_exponent(a, x).exp()
}

/// Regularized lower incomplete gamma P(a, x) for a > 0, x >= 0.
/// Absolute accuracy better than 1e-12 across the tested range.
pub(crate) fn lower_regularized(a: f64, x: f64) -> f64 {
    debug_assert!(a > 0.0 && x >= 0.0);
    if x == 0.0 {
        0.0
    } else if x < a + 1.0 {
        lower_series(a, x)
    } else {
        1.0 - upper_continued_fraction(a, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_gamma_hits_known_values() {
        assert!(ln_gamma(1.0).abs() < 1e-14);
        assert!(ln_gamma(2.0).abs() < 1e-14);
        // G(1/2) = sqrt(pi).
        assert!((ln_gamma(0.5) - 0.5 * std::f64::consts::PI.ln()).abs() < 1e-14);
        // Integer factorials.
        let mut fact = 1.0f64;
        for n in 2..=20 {
            fact *= (n - 1) as f64;
            assert!(
                (ln_gamma(n as f64) - fact.ln()).abs() < 1e-13,
                "lnG({n}) vs ln({n}-1)!"
            );
        }
        // Recurrence at large argument: lnG(x+1) - lnG(x) = ln x.
        let x = 1e5;
        assert!((ln_gamma(x + 1.0) - ln_gamma(x) - x.ln()).abs() < 1e-9);
    }

    /// Reference values computed with 40-digit arithmetic.
    #[test]
    fn incomplete_gamma_matches_high_precision_references() {
        let refs: [(f64, f64, f64); 12] = [
            (1.0, 1.0, 0.6321205588285576784045),
            (2.0, 2.0, 0.593994150290161924318),
            (3.0, 0.1, 0.0001546530702646716535048),
            (5.0, 2.5, 0.1088219810858487576517),
            (5.0, 10.0, 0.9707473119230389273272),
            (10.0, 30.0, 0.9999928782491371844229),
            (200.0, 200.0, 0.5094034180072363250278),
            (200.0, 150.0, 0.00005709688574208244273483),
            (200.0, 260.0, 0.9999524998755569912436),
            (100000.0, 100000.0, 0.5004205221103651766933),
            (1.0, 0.3, 0.2591817793182821339331),
            (7.0, 6.3, 0.4417668730063542166617),
        ];
        for (a, x, want) in refs {
            let got = lower_regularized(a, x);
            assert!(
                (got - want).abs() < 1e-12,
                "P({a},{x}) = {got:.16}, want {want:.16}"
            );
        }
    }

    #[test]
    fn edges_and_branch_continuity() {
        assert_eq!(lower_regularized(5.0, 0.0), 0.0);
        // The series/fraction handoff at x = a + 1 must be seamless.
        for a in [1.0, 3.0, 17.0, 120.0] {
            let below = lower_regularized(a, (a + 1.0) * (1.0 - 1e-12));
            let above = lower_regularized(a, (a + 1.0) * (1.0 + 1e-12));
            assert!((below - above).abs() < 1e-11, "jump at a = {a}");
        }
    }
}
