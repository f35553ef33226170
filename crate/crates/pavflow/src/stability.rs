//! Common quadratic Lyapunov certificates for the reduced dynamics.
//!
//! Over the leader mix q in [0, 1], the reduced matrix A'(q) moves
//! along the segment between two vertices; a single positive definite
//! P with M_i^T P + P M_i negative definite at both endpoints covers
//! the whole segment by convexity. The search runs in-house via
//! alternating projections and every certificate is re-verified with
//! a symmetric eigensolver before it is returned, so a weak search can
//! only fail to find a certificate, never fabricate one.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::equilibrium::reduce_matrix;
use crate::error::Error;
use crate::generator::GeneratorDecomposition;
use crate::params::ModelParams;

/// Endpoints of the reduced generator segment: `m0` at q_hdv = 0,
/// `m1` at q_hdv = 1.
#[derive(Debug, Clone)]
pub struct PolytopeVertices {
    pub m0: DMatrix<f64>,
    pub m1: DMatrix<f64>,
}

impl PolytopeVertices {
    pub fn dim(&self) -> usize {
        self.m0.nrows()
    }

    /// The reduced matrix at an interior mix.
    pub fn at(&self, q_hdv: f64) -> DMatrix<f64> {
        &self.m0 + (&self.m1 - &self.m0) * q_hdv
    }
}

/// Reduced vertices of the dense generator split. Subject to the same
/// k cap as every dense-analysis path.
pub fn build_vertices(params: &ModelParams) -> Result<PolytopeVertices, Error> {
    params.validate()?;
    let parts = GeneratorDecomposition::assemble(params)?;
    let m0 = reduce_matrix(&(&parts.a0 + &parts.a2)).a_prime;
    let m1 = reduce_matrix(&(&parts.a0 + &parts.a1)).a_prime;
    Ok(PolytopeVertices { m0, m1 })
}

/// A verified common quadratic Lyapunov certificate.
#[derive(Debug, Clone)]
pub struct LyapunovCertificate {
    /// Symmetric positive definite, normalized to trace = dimension.
    pub p: DMatrix<f64>,
    /// min over vertices of -lambda_max(M^T P + P M); positive.
    pub margin: f64,
    /// Smallest eigenvalue of P; at least the search eps.
    pub p_min_eig: f64,
    /// Projection sweeps spent before verification succeeded.
    pub iterations: usize,
}

/// Outcome of the certificate search. Absence of a certificate is
/// never evidence of instability; the quadratic form is sufficient
/// only.
#[derive(Debug, Clone)]
pub enum LyapunovOutcome {
    Certificate(LyapunovCertificate),
    /// A vertex already fails the necessary spectral condition; its
    /// worst eigenvalue real part is reported.
    NotHurwitz { vertex: usize, real_part: f64 },
    /// Search exhausted without a verified certificate.
    Inconclusive { iterations: usize },
}

/// Largest eigenvalue real part.
fn spectral_abscissa(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

fn symmetrized(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn vec_of(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

fn unvec(v: &DVector<f64>, n: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(n, n, v.as_slice())
}

fn check_vertex_input(name: &'static str, m: &DMatrix<f64>) -> Result<(), Error> {
    if !m.is_square() {
        return Err(Error::InvalidParam {
            name,
            reason: format!("vertex must be square, got {}x{}", m.nrows(), m.ncols()),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParam {
            name,
            reason: "vertex contains non-finite entries".into(),
        });
    }
    Ok(())
}

/// Searches for a common P with `M_i^T P + P M_i <= -eps I` at both
/// vertices and `P >= eps I`, trace-normalized to the dimension.
///
/// One sweep alternates three moves: for each vertex whose Lyapunov
/// form pokes above `-eps I`, the positive part (in the form's own
/// eigenbasis) is removed by solving the corresponding Lyapunov
/// equation; the iterate is then clipped onto the `P >= eps I` cone by
/// eigenvalue flooring and rescaled to trace = n. A candidate is
/// accepted only after an independent eigensolver pass confirms
/// `lambda_max <= -eps/2` at both vertices (slack for projection
/// tolerance) and `lambda_min(P) >= eps`.
pub fn find_common_lyapunov(
    v: &PolytopeVertices,
    eps: f64,
    max_iter: usize,
) -> Result<LyapunovOutcome, Error> {
    check_vertex_input("m0", &v.m0)?;
    check_vertex_input("m1", &v.m1)?;
    if v.m0.nrows() != v.m1.nrows() {
        return Err(Error::InvalidParam {
            name: "m1",
            reason: format!(
                "vertex dimensions disagree: {} vs {}",
                v.m0.nrows(),
                v.m1.nrows()
            ),
        });
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParam {
            name: "eps",
            reason: format!("must be positive and finite, got {eps}"),
        });
    }
    if max_iter == 0 {
        return Err(Error::InvalidParam {
            name: "max_iter",
            reason: "must be at least 1".into(),
        });
    }

    let vertices = [&v.m0, &v.m1];
    for (i, m) in vertices.iter().enumerate() {
        let real_part = spectral_abscissa(m);
        if real_part >= 0.0 {
            return Ok(LyapunovOutcome::NotHurwitz { vertex: i, real_part });
        }
    }

    let n = v.m0.nrows();
    let nf = n as f64;
    let eye = DMatrix::<f64>::identity(n, n);

    // vec(M^T X + X M) = (I (x) M^T + M^T (x) I) vec(X); Hurwitz
    // vertices make the operator invertible, factored once per vertex.
    let solvers: Vec<_> = vertices
        .iter()
        .map(|m| {
            let mt = m.transpose();
            (eye.kronecker(&mt) + mt.kronecker(&eye)).lu()
        })
        .collect();

    let mut p = eye.clone();
    for iter in 1..=max_iter {
        // Remove each violated Lyapunov form's positive part.
        for (m, lu) in vertices.iter().zip(&solvers) {
            let s = symmetrized(&(m.transpose() * &p + &p * *m)) + &eye * eps;
            let se = s.symmetric_eigen();
            if se.eigenvalues.iter().all(|&l| l <= 0.0) {
                continue;
            }
            let mut excess = DMatrix::zeros(n, n);
            for (j, &l) in se.eigenvalues.iter().enumerate() {
                if l > 0.0 {
                    let col = se.eigenvectors.column(j);
                    excess += col * col.transpose() * l;
                }
            }
            let delta = lu.solve(&vec_of(&(-&excess))).ok_or_else(|| {
                Error::Numerics("Lyapunov operator unexpectedly singular".into())
            })?;
            p += unvec(&delta, n);
            p = symmetrized(&p);
        }

        // Clip onto {P >= eps I} and pin the scale.
        let pe = p.symmetric_eigen();
        let clipped = DVector::from_iterator(n, pe.eigenvalues.iter().map(|&l| l.max(eps)));
        p = &pe.eigenvectors * DMatrix::from_diagonal(&clipped) * pe.eigenvectors.transpose();
        p = symmetrized(&p);
        p *= nf / p.trace();

        // Independent verification gates acceptance.
        let p_min_eig = p
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if p_min_eig < eps {
            continue;
        }
        let mut margin = f64::INFINITY;
        for m in &vertices {
            let form = symmetrized(&(m.transpose() * &p + &p * *m));
            let lmax = form
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            margin = margin.min(-lmax);
        }
        if margin >= 0.5 * eps {
            return Ok(LyapunovOutcome::Certificate(LyapunovCertificate {
                p,
                margin,
                p_min_eig,
                iterations: iter,
            }));
        }
    }

    Ok(LyapunovOutcome::Inconclusive { iterations: max_iter })
}

/// Worst spectral abscissa over a uniform q grid.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct HurwitzGridReport {
    pub worst_abscissa: f64,
    pub worst_q: f64,
    pub n_samples: usize,
}

/// Samples A'(q) on a uniform grid over [0, 1] (a single sample sits
/// at q = 0) and reports the largest eigenvalue real part seen. A
/// negative result is necessary for a common certificate, not
/// sufficient.
pub fn check_hurwitz_grid(
    params: &ModelParams,
    n_samples: usize,
) -> Result<HurwitzGridReport, Error> {
    if n_samples == 0 {
        return Err(Error::InvalidParam {
            name: "n_samples",
            reason: "need at least one sample".into(),
        });
    }
    let v = build_vertices(params)?;
    let mut worst_abscissa = f64::NEG_INFINITY;
    let mut worst_q = 0.0;
    for i in 0..n_samples {
        let q = if n_samples == 1 {
            0.0
        } else {
            i as f64 / (n_samples - 1) as f64
        };
        let abscissa = spectral_abscissa(&v.at(q));
        if abscissa > worst_abscissa {
            worst_abscissa = abscissa;
            worst_q = q;
        }
    }
    Ok(HurwitzGridReport { worst_abscissa, worst_q, n_samples })
}
