//! Unit-modulus phase optimization for the grouped IRS2 (Scheme 3).

use std::ops::Range;

use nalgebra::SymmetricEigen;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{hermitize, CMatrix, CVector};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 500;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SnrOptError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("minimax solution needs n_r >= n3 (n_r = {n_r}, n3 = {n3})")]
    TooFewReceivers { n_r: usize, n3: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OptMethod {
    /// Coordinate ascent on the full objective with the physical beam.
    Exact,
    /// Ideal-beam surrogate `theta^H H^H H theta`.
    #[default]
    Sol1,
    /// Minimax of the smallest eigenvalue.
    Sol2,
    /// All phases 1.
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseVector {
    pub theta: Vec<Complex64>,
    pub span: Range<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptResult {
    pub theta: PhaseVector,
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl OptResult {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace is never empty")
    }
}

fn unit_phase(z: Complex64) -> Complex64 {
    if z.norm() == 0.0 {
        Complex64::new(1.0, 0.0)
    } else {
        z / z.norm()
    }
}

fn quad_form(g: &CMatrix, theta: &[Complex64]) -> f64 {
    let n = theta.len();
    let mut acc = 0.0;
    for i in 0..n {
        let mut row = Complex64::new(0.0, 0.0);
        for j in 0..n {
            row += g[(i, j)] * theta[j];
        }
        acc += (theta[i].conj() * row).re;
    }
    acc
}

/// Cyclic coordinate ascent on `theta^H G theta` from the all-ones start.
fn coordinate_ascent(g: &CMatrix, span: Range<usize>, tol: f64, max_iter: usize) -> OptResult {
    let n = g.nrows();
    let mut theta = vec![Complex64::new(1.0, 0.0); n];
    let mut trace = vec![quad_form(g, &theta)];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        for i in 0..n {
            let mut s = Complex64::new(0.0, 0.0);
            for j in (0..n).filter(|&j| j != i) {
                s += g[(i, j)] * theta[j];
            }
            theta[i] = unit_phase(s);
        }
        let prev = *trace.last().unwrap();
        let f = quad_form(g, &theta);
        trace.push(f);
        if f - prev <= tol * prev.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }
    OptResult {
        theta: PhaseVector { theta, span },
        objective_trace: trace,
        converged,
        iterations,
    }
}

fn check_span(h: &CMatrix, span: &Range<usize>) -> Result<(), SnrOptError> {
    if span.is_empty() || span.end > h.ncols() {
        return Err(SnrOptError::Dimension(format!(
            "span {span:?} outside {} columns",
            h.ncols()
        )));
    }
    Ok(())
}

fn gram_block(h: &CMatrix, span: &Range<usize>) -> CMatrix {
    let hq = h.columns(span.start, span.len());
    hermitize(hq.adjoint() * hq)
}

/// `||H diag(theta) b s||^2`.
pub fn objective_exact(h: &CMatrix, theta: &[Complex64], b: &[Complex64], s: Complex64) -> Result<f64, SnrOptError> {
    if theta.len() != h.ncols() || b.len() != h.ncols() {
        return Err(SnrOptError::Dimension(format!(
            "H has {} columns, theta {}, b {}",
            h.ncols(),
            theta.len(),
            b.len()
        )));
    }
    let x = CVector::from_fn(b.len(), |i, _| theta[i] * b[i] * s);
    Ok((h * x).norm_squared())
}

/// Ideal-beam surrogate on RS `span`.
pub fn solve_sol1(h: &CMatrix, span: Range<usize>, tol: f64, max_iter: usize) -> Result<OptResult, SnrOptError> {
    check_span(h, &span)?;
    let g = gram_block(h, &span);
    Ok(coordinate_ascent(&g, span, tol, max_iter))
}

/// Coordinate ascent on `||C theta||^2`, `C = H diag(b s)`, over all columns.
pub fn solve_exact(
    h: &CMatrix,
    b: &[Complex64],
    s: Complex64,
    tol: f64,
    max_iter: usize,
) -> Result<OptResult, SnrOptError> {
    if b.len() != h.ncols() {
        return Err(SnrOptError::Dimension(format!("b has {} entries, H {} columns", b.len(), h.ncols())));
    }
    let c = CMatrix::from_fn(h.nrows(), h.ncols(), |r, col| h[(r, col)] * b[col] * s);
    let g = hermitize(c.adjoint() * &c);
    Ok(coordinate_ascent(&g, 0..h.ncols(), tol, max_iter))
}

/// Smallest eigenvalue and its eigenvector.
pub fn lambda_min(m: &CMatrix) -> (f64, CVector) {
    let eig = SymmetricEigen::new(hermitize(m.clone()));
    let (idx, val) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |best, (i, &v)| if v < best.1 { (i, v) } else { best });
    (val, eig.eigenvectors.column(idx).into_owned())
}

fn rotated(g: &CMatrix, theta: &[Complex64]) -> CMatrix {
    CMatrix::from_fn(g.nrows(), g.ncols(), |i, j| theta[i].conj() * g[(i, j)] * theta[j])
}

/// Maximizes `lambda_min(Theta^H G Theta)` over unit-modulus phases with
/// step-halving subgradient ascent. The objective is invariant under diagonal
/// unitary similarity, so the trace is flat and the start point is returned.
pub fn solve_sol2(h: &CMatrix, span: Range<usize>, tol: f64, max_iter: usize) -> Result<OptResult, SnrOptError> {
    check_span(h, &span)?;
    let n3 = span.len();
    if h.nrows() < n3 {
        return Err(SnrOptError::TooFewReceivers { n_r: h.nrows(), n3 });
    }
    let g = gram_block(h, &span);
    let mut alpha = vec![0.0f64; n3];
    let phases = |a: &[f64]| a.iter().map(|&x| Complex64::from_polar(1.0, x)).collect::<Vec<_>>();
    let mut best = lambda_min(&rotated(&g, &phases(&alpha))).0;
    let mut trace = vec![best];
    let mut step = 1.0;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let theta = phases(&alpha);
        let (_, z) = lambda_min(&rotated(&g, &theta));
        let w: Vec<Complex64> = theta.iter().zip(z.iter()).map(|(t, z)| t * z).collect();
        let grad: Vec<f64> = (0..n3)
            .map(|l| {
                let gw: Complex64 = (0..n3).map(|j| g[(l, j)] * w[j]).sum();
                2.0 * (w[l].conj() * gw * Complex64::new(0.0, -1.0)).re
            })
            .collect();
        let gnorm = grad.iter().map(|x| x * x).sum::<f64>().sqrt();
        if gnorm <= tol * best.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            trace.push(best);
            break;
        }
        let mut improved = false;
        while step > 1e-12 {
            let cand: Vec<f64> = alpha.iter().zip(&grad).map(|(a, d)| a + step * d / gnorm).collect();
            let val = lambda_min(&rotated(&g, &phases(&cand))).0;
            if val > best {
                let gain = val - best;
                alpha = cand;
                best = val;
                improved = true;
                converged = gain <= tol * best.abs();
                break;
            }
            step *= 0.5;
        }
        trace.push(best);
        if !improved || converged {
            converged = true;
            break;
        }
    }
    Ok(OptResult {
        theta: PhaseVector {
            theta: phases(&alpha),
            span,
        },
        objective_trace: trace,
        converged,
        iterations,
    })
}

/// Eigenvalue lower bound `||H_Q Theta_Q b_Q s||^2 >= lambda_min(...) ||b_Q s||^2`.
pub fn lemma1_check(
    h_q: &CMatrix,
    theta_q: &[Complex64],
    b_q: &[Complex64],
    s: Complex64,
) -> Result<(f64, f64, bool), SnrOptError> {
    let lhs = objective_exact(h_q, theta_q, b_q, s)?;
    let g = hermitize(h_q.adjoint() * h_q);
    let lmin = lambda_min(&rotated(&g, theta_q)).0;
    let energy: f64 = b_q.iter().map(|z| (z * s).norm_sqr()).sum();
    let rhs = lmin * energy;
    Ok((lhs, rhs, lhs >= rhs - 1e-9 * rhs.abs()))
}

/// Phases for every RS of a grouped surface, one independent solve per RS.
/// `beams` supplies the physical beam per RS for [`OptMethod::Exact`].
pub fn optimize_surface(
    h: &CMatrix,
    n_groups: usize,
    n3: usize,
    method: OptMethod,
    beams: Option<&[Vec<Complex64>]>,
    tol: f64,
    max_iter: usize,
) -> Result<Vec<Complex64>, SnrOptError> {
    if h.ncols() != n_groups * n3 {
        return Err(SnrOptError::Dimension(format!(
            "H has {} columns, expected {}",
            h.ncols(),
            n_groups * n3
        )));
    }
    let mut theta = vec![Complex64::new(1.0, 0.0); h.ncols()];
    for q in 0..n_groups {
        let span = q * n3..(q + 1) * n3;
        let part = match method {
            OptMethod::Identity => continue,
            OptMethod::Sol1 => solve_sol1(h, span.clone(), tol, max_iter)?,
            OptMethod::Sol2 => solve_sol2(h, span.clone(), tol, max_iter)?,
            OptMethod::Exact => {
                let b = beams
                    .and_then(|b| b.get(q))
                    .ok_or_else(|| SnrOptError::Dimension("exact method needs one beam per RS".into()))?;
                let hq = h.columns(span.start, n3).into_owned();
                solve_exact(&hq, &b[span.clone()], Complex64::new(1.0, 0.0), tol, max_iter)?
            }
        };
        theta[span].copy_from_slice(&part.theta.theta);
    }
    Ok(theta)
}
