//! Closed-form pairwise error probabilities, the Fréchet-min average BER upper
//! bound, and its sampling counterpart for channel-dependent phases.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Gamma};
use thiserror::Error;

use crate::beampattern::PatternBank;
use crate::channel::{cholesky_lower, noise_cov, ChannelError, ChannelModel, CMatrix, CVector};
use crate::mapping::pattern_label;
use crate::snr_opt::{optimize_surface, OptMethod, SnrOptError};
use crate::specialfn::{gamma_fn, ln_gamma, ln_pcf_d, pochhammer, q_function, SpecialFnError};
use crate::stats::{ks_test, mean_stderr};

/// Ordered-pair count up to which the bound is enumerated exactly.
pub const DEFAULT_PAIR_BUDGET: u64 = 1 << 20;
pub const DEFAULT_PAIR_SAMPLES: usize = 4096;

/// Variances below zero by less than this (relative) are rounding noise.
const NEG_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("degenerate pair: {0}")]
    Degenerate(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("{name} = {value} is negative beyond rounding")]
    NegativeVariance { name: &'static str, value: f64 },
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Optimizer(#[from] SnrOptError),
    #[error(transparent)]
    Special(#[from] SpecialFnError),
}

pub type Result<T> = std::result::Result<T, AnalysisError>;

/// Which algebra to use for the `k != i` pairwise probability.
///
/// `Exact` uses the conditional variance `σz2² − |q|²/σz1²` and keeps the
/// sign of `q_R`; it agrees with Monte-Carlo. `Published` reproduces the
/// printed closed form literally (`|q|²/(2σz1²)`, an extra factor ½ on the
/// sum, no sign).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BoundModel {
    #[default]
    Exact,
    Published,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairwiseParams {
    pub beta1: f64,
    pub q: Complex64,
    pub q_r: f64,
    pub sigma_z1_sq: f64,
    pub sigma_z2_sq: f64,
    pub sigma_kappa_sq: f64,
    /// `1 + σκ² σz1² / q_R²`; `None` when `q_R = 0`.
    pub v: Option<f64>,
    pub beta2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundResult {
    pub ber_upper: f64,
    pub stderr: f64,
    pub omega: usize,
    pub n_b: u32,
    pub pairs_evaluated: usize,
    pub subsampled: bool,
    /// Row-major `Ω x Ω` matrix of pairwise bounds (diagonal zero), exact
    /// enumeration only and only when requested.
    #[serde(skip)]
    pub per_pair: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundOptions {
    pub pair_budget: u64,
    pub pair_samples: usize,
    pub seed: u64,
    pub keep_pairs: bool,
}

impl Default for BoundOptions {
    fn default() -> Self {
        BoundOptions {
            pair_budget: DEFAULT_PAIR_BUDGET,
            pair_samples: DEFAULT_PAIR_SAMPLES,
            seed: 0,
            keep_pairs: false,
        }
    }
}

fn clamp_nonneg(name: &'static str, value: f64, scale: f64) -> Result<f64> {
    if value >= 0.0 {
        Ok(value)
    } else if value >= -NEG_TOL * scale.abs().max(1.0) {
        Ok(0.0)
    } else {
        Err(AnalysisError::NegativeVariance { name, value })
    }
}

/// `sqrt(β/(1+β)) Σ_{n<N_R} C(2n,n) (1/(4(1+β)))^n`, increasing in `β`.
/// One minus `sqrt(b/(1+b)) Σ_{n<N} C(2n,n) (4(1+b))^-n`. For large `beta` the head sum nearly cancels
/// against one, so the convergent tail is summed instead.
fn binomial_sum_complement(beta: f64, n_r: usize) -> f64 {
    if beta <= 0.0 {
        return 1.0;
    }
    if beta.is_infinite() {
        return 0.0;
    }
    let x = 1.0 / (4.0 * (1.0 + beta));
    let mu = (beta / (1.0 + beta)).sqrt();
    let step = |term: f64, n: usize| {
        let nf = n as f64;
        term * 2.0 * (2.0 * nf + 1.0) / (nf + 1.0) * x
    };
    let mut term = 1.0;
    if beta < 1.0 {
        let mut sum = 0.0;
        for n in 0..n_r {
            sum += term;
            term = step(term, n);
        }
        return (1.0 - mu * sum).max(0.0);
    }
    for n in 0..n_r {
        term = step(term, n);
    }
    let mut tail = 0.0;
    let mut n = n_r;
    while term > tail * 1e-17 && n < n_r + 4000 {
        tail += term;
        term = step(term, n);
        n += 1;
    }
    mu * tail
}

/// `Pr{r_j > r_i}` for the true pattern `i`.
pub fn prob_ji(beta1: f64, n_r: usize) -> f64 {
    0.5 * binomial_sum_complement(beta1.max(0.0), n_r.max(1))
}

/// `Pr{r_j > r_k}`, `k != i`, in binomial-sum form.
pub fn prob_jk(params: &PairwiseParams, n_r: usize, model: BoundModel) -> f64 {
    if params.q_r == 0.0 {
        return 0.5;
    }
    let c = binomial_sum_complement(params.beta2, n_r.max(1));
    match model {
        BoundModel::Exact if params.q_r > 0.0 => 0.5 * c,
        BoundModel::Exact => 1.0 - 0.5 * c,
        BoundModel::Published => 0.25 * (1.0 + c),
    }
}

/// The same probability through the Pochhammer sum in `w = σκ²/(2(v−1)+vσκ²)`.
/// `None` when `q_R = 0` or `σκ² = 0` (where `w` is undefined).
pub fn prob_jk_pochhammer(params: &PairwiseParams, n_r: usize, model: BoundModel) -> Option<f64> {
    let v = params.v?;
    let s = params.sigma_kappa_sq;
    if s <= 0.0 {
        return None;
    }
    let w = s / (2.0 * (v - 1.0) + v * s);
    let sum: f64 = (0..n_r.max(1) as u32)
        .map(|n| pochhammer(0.5, n) / gamma_fn(f64::from(n) + 1.0) * (1.0 - w).powi(n as i32))
        .sum();
    let tail = w.sqrt() * sum;
    Some(match model {
        BoundModel::Exact => 0.5 - 0.5 * params.q_r.signum() * tail,
        BoundModel::Published => 0.5 - 0.25 * tail,
    })
}

/// Maps Gram quantities (all pre-multiplied by `2σR²`) to pairwise parameters.
/// `d_ij` is `(Π_i−Π_j)^H M (Π_i−Π_j)`, `d1` the same for `j,k`, `d2` for
/// `Π_j+Π_k−2Π_i`, and `qn` the cross term.
fn params_from_gram(d_ij: f64, d1: f64, d2: f64, qn: Complex64, two_sr2: f64, model: BoundModel) -> Result<PairwiseParams> {
    let beta1 = clamp_nonneg("beta1", d_ij / (2.0 * two_sr2), d_ij)?;
    let d1 = clamp_nonneg("sigma_z1_sq", d1, d2)?;
    if d1 == 0.0 {
        return Err(AnalysisError::Degenerate("sigma_z1^2 = 0 (patterns j and k coincide under M)".into()));
    }
    let d2 = clamp_nonneg("sigma_z2_sq", d2, d1)?;
    let divisor = match model {
        BoundModel::Exact => d1,
        BoundModel::Published => 2.0 * d1,
    };
    let s = clamp_nonneg("sigma_kappa_sq", d2 - qn.norm_sqr() / divisor, d2)?;
    let (sigma_z1_sq, sigma_z2_sq, sigma_kappa_sq) = (d1 / two_sr2, d2 / two_sr2, s / two_sr2);
    let q = qn / two_sr2;
    let q_r = q.re;
    let (v, beta2) = if q_r == 0.0 {
        (None, 0.0)
    } else {
        (
            Some(1.0 + sigma_kappa_sq * sigma_z1_sq / (q_r * q_r)),
            q_r * q_r / ((2.0 + sigma_kappa_sq) * sigma_z1_sq),
        )
    };
    Ok(PairwiseParams {
        beta1,
        q,
        q_r,
        sigma_z1_sq,
        sigma_z2_sq,
        sigma_kappa_sq,
        v,
        beta2,
    })
}

/// `M = Θ^H Σ_c Θ` for diagonal `Θ = diag(theta)`.
pub fn effective_cov(theta: &[Complex64], sigma_c: &CMatrix) -> Result<CMatrix> {
    if sigma_c.nrows() != theta.len() || sigma_c.ncols() != theta.len() {
        return Err(AnalysisError::InvalidInput(format!(
            "sigma_c is {}x{}, theta has {} entries",
            sigma_c.nrows(),
            sigma_c.ncols(),
            theta.len()
        )));
    }
    Ok(DMatrix::from_fn(theta.len(), theta.len(), |a, b| theta[a].conj() * sigma_c[(a, b)] * theta[b]))
}

/// Pattern Gram data `Π_a^H M Π_b` for a fixed `Θ` and `Σ_c`, shared by all
/// pairwise quantities of one bound evaluation.
#[derive(Debug, Clone)]
pub struct BoundContext<'a> {
    bank: &'a PatternBank,
    /// `b_r^H M b_s`, row-major over set ranks
    beam_gram: Vec<Complex64>,
    energy: Vec<f64>,
    labels: Vec<u64>,
    two_sr2: f64,
    n_r: usize,
    model: BoundModel,
}

impl<'a> BoundContext<'a> {
    pub fn new(
        bank: &'a PatternBank,
        theta: &[Complex64],
        sigma_c: &CMatrix,
        sigma_r_sq: f64,
        n_r: usize,
        model: BoundModel,
    ) -> Result<Self> {
        if !(sigma_r_sq > 0.0) {
            return Err(AnalysisError::InvalidInput(format!("sigma_r_sq = {sigma_r_sq} must be > 0")));
        }
        if n_r == 0 {
            return Err(AnalysisError::InvalidInput("n_r must be >= 1".into()));
        }
        if theta.len() != bank.dim() {
            return Err(AnalysisError::InvalidInput(format!(
                "theta has {} entries, bank dim is {}",
                theta.len(),
                bank.dim()
            )));
        }
        let m = effective_cov(theta, sigma_c)?;
        let ns = bank.n_sets();
        let b = DMatrix::from_fn(bank.dim(), ns, |r, c| bank.beam(c)[r]);
        let g = b.adjoint() * m * &b;
        let beam_gram: Vec<Complex64> = (0..ns * ns).map(|idx| g[(idx / ns, idx % ns)]).collect();
        let omega = bank.omega();
        let mut ctx = BoundContext {
            bank,
            beam_gram,
            energy: Vec::new(),
            labels: (0..omega).map(|p| pattern_label(p, bank.scheme_cfg())).collect(),
            two_sr2: 2.0 * sigma_r_sq,
            n_r,
            model,
        };
        ctx.energy = (0..omega).map(|p| ctx.gram(p, p).re).collect();
        Ok(ctx)
    }

    pub fn bank(&self) -> &PatternBank {
        self.bank
    }

    /// `Π_a^H M Π_b`.
    #[inline]
    pub fn gram(&self, a: usize, b: usize) -> Complex64 {
        let (ra, sa) = self.bank.label(a);
        let (rb, sb) = self.bank.label(b);
        let syms = self.bank.symbols();
        syms[sa].conj() * syms[sb] * self.beam_gram[ra * self.bank.n_sets() + rb]
    }

    fn d_ij(&self, i: usize, j: usize) -> f64 {
        self.energy[i] + self.energy[j] - 2.0 * self.gram(i, j).re
    }

    pub fn beta1(&self, i: usize, j: usize) -> f64 {
        (self.d_ij(i, j) / (2.0 * self.two_sr2)).max(0.0)
    }

    pub fn params(&self, i: usize, j: usize, k: usize) -> Result<PairwiseParams> {
        let omega = self.bank.omega();
        if i >= omega || j >= omega || k >= omega {
            return Err(AnalysisError::InvalidInput(format!("pattern index out of range (Ω = {omega})")));
        }
        if i == j {
            return Err(AnalysisError::InvalidInput("i and j must differ".into()));
        }
        let (gii, gjj, gkk) = (self.energy[i], self.energy[j], self.energy[k]);
        let (gij, gik, gjk) = (self.gram(i, j), self.gram(i, k), self.gram(j, k));
        let d1 = gjj + gkk - 2.0 * gjk.re;
        let d2 = gjj + gkk + 4.0 * gii + 2.0 * gjk.re - 4.0 * gij.re - 4.0 * gik.re;
        let qn = Complex64::from(gjj - gkk) - gjk + gjk.conj() - gij * 2.0 + gik * 2.0;
        if k == i {
            // only beta1 is meaningful; the q-path would divide by d_ij
            let beta1 = clamp_nonneg("beta1", self.d_ij(i, j) / (2.0 * self.two_sr2), gjj)?;
            return Ok(PairwiseParams {
                beta1,
                q: Complex64::from(0.0),
                q_r: 0.0,
                sigma_z1_sq: d1.max(0.0) / self.two_sr2,
                sigma_z2_sq: d2.max(0.0) / self.two_sr2,
                sigma_kappa_sq: 0.0,
                v: None,
                beta2: 0.0,
            });
        }
        params_from_gram(self.d_ij(i, j), d1, d2, qn, self.two_sr2, self.model)
    }

    /// Unconditional `Pr{r_j > r_k}` with `i` transmitted.
    pub fn pair_prob(&self, i: usize, j: usize, k: usize) -> Result<f64> {
        let p = self.params(i, j, k)?;
        Ok(if k == i { prob_ji(p.beta1, self.n_r) } else { prob_jk(&p, self.n_r, self.model) })
    }

    /// `min_k Pr{r_j > r_k}` over all `k != j`. Each `k != i` probability is a
    /// decreasing function of a single score, so only the best score is
    /// mapped to a probability.
    pub fn pairwise_bound(&self, i: usize, j: usize) -> f64 {
        let best_ji = prob_ji(self.beta1(i, j), self.n_r);
        let (gii, gjj) = (self.energy[i], self.energy[j]);
        let gij = self.gram(i, j);
        let syms = self.bank.symbols();
        let ns = self.bank.n_sets();
        let (ri, si) = self.bank.label(i);
        let (rj, sj) = self.bank.label(j);
        let (xi, xj) = (syms[si], syms[sj]);
        let divisor_scale = match self.model {
            BoundModel::Exact => 1.0,
            BoundModel::Published => 2.0,
        };
        let mut best_score = f64::NEG_INFINITY;
        for k in 0..self.bank.omega() {
            if k == i || k == j {
                continue;
            }
            let (rk, sk) = self.bank.label(k);
            let xk = syms[sk];
            let gkk = self.energy[k];
            let gjk = xj.conj() * xk * self.beam_gram[rj * ns + rk];
            let gik = xi.conj() * xk * self.beam_gram[ri * ns + rk];
            let d1 = gjj + gkk - 2.0 * gjk.re;
            if !(d1 > 1e-14 * (gjj + gkk)) {
                continue;
            }
            let d2 = gjj + gkk + 4.0 * gii + 2.0 * gjk.re - 4.0 * gij.re - 4.0 * gik.re;
            let q_re = gjj - gkk - 2.0 * gij.re + 2.0 * gik.re;
            let q_im = -2.0 * gjk.im - 2.0 * gij.im + 2.0 * gik.im;
            let s = (d2 - (q_re * q_re + q_im * q_im) / (divisor_scale * d1)).max(0.0);
            let beta2 = q_re * q_re / ((2.0 * self.two_sr2 + s) * d1);
            let score = match self.model {
                BoundModel::Exact => q_re.signum() * beta2,
                BoundModel::Published => beta2,
            };
            if score > best_score {
                best_score = score;
            }
        }
        if best_score == f64::NEG_INFINITY {
            return best_ji;
        }
        let c = binomial_sum_complement(best_score.abs(), self.n_r);
        let best_k = match self.model {
            BoundModel::Exact if best_score > 0.0 => 0.5 * c,
            BoundModel::Exact => 1.0 - 0.5 * c,
            BoundModel::Published => 0.25 * (1.0 + c),
        };
        best_ji.min(best_k)
    }

    fn nu(&self, i: usize, j: usize) -> f64 {
        f64::from((self.labels[i] ^ self.labels[j]).count_ones())
    }

    /// Average BER bound; exact over all ordered pairs when `Ω(Ω−1)` fits
    /// the budget, otherwise from uniformly sampled pairs with a standard
    /// error.
    pub fn average(&self, opts: &BoundOptions) -> Result<BoundResult> {
        let omega = self.bank.omega();
        if omega < 2 {
            return Err(AnalysisError::InvalidInput("bound needs at least two patterns".into()));
        }
        let n_b = self.bank.n_b();
        let norm = f64::from(n_b) * omega as f64;
        let total_pairs = (omega as u64) * (omega as u64 - 1);
        if total_pairs <= opts.pair_budget {
            let rows: Vec<(f64, Option<Vec<f64>>)> = (0..omega)
                .into_par_iter()
                .map(|i| {
                    let mut acc = 0.0;
                    let mut row = opts.keep_pairs.then(|| vec![0.0; omega]);
                    for j in 0..omega {
                        if j == i {
                            continue;
                        }
                        let pb = self.pairwise_bound(i, j);
                        if let Some(r) = row.as_mut() {
                            r[j] = pb;
                        }
                        acc += self.nu(i, j) * pb;
                    }
                    (acc, row)
                })
                .collect();
            let sum: f64 = rows.iter().map(|r| r.0).sum();
            let per_pair = opts.keep_pairs.then(|| rows.into_iter().flat_map(|r| r.1.unwrap_or_default()).collect());
            return Ok(BoundResult {
                ber_upper: (sum / norm).clamp(0.0, 1.0),
                stderr: 0.0,
                omega,
                n_b,
                pairs_evaluated: total_pairs as usize,
                subsampled: false,
                per_pair,
            });
        }
        if opts.pair_samples < 2 {
            return Err(AnalysisError::InvalidInput("pair_samples must be >= 2".into()));
        }
        let pairs = sample_pairs(omega, opts.pair_samples, opts.seed);
        let contrib: Vec<f64> = pairs
            .par_iter()
            .map(|&(i, j)| self.nu(i, j) * self.pairwise_bound(i, j))
            .collect();
        let (mean, se) = mean_stderr(&contrib);
        let scale = total_pairs as f64 / norm;
        Ok(BoundResult {
            ber_upper: (mean * scale).clamp(0.0, 1.0),
            stderr: se * scale,
            omega,
            n_b,
            pairs_evaluated: pairs.len(),
            subsampled: true,
            per_pair: None,
        })
    }
}

/// Uniform ordered pairs `i != j`, with replacement.
fn sample_pairs(omega: usize, n: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let i = rng.random_range(0..omega);
            let mut j = rng.random_range(0..omega - 1);
            if j >= i {
                j += 1;
            }
            (i, j)
        })
        .collect()
}

pub fn pairwise_params(
    bank: &PatternBank,
    i: usize,
    j: usize,
    k: usize,
    theta: &[Complex64],
    sigma_c: &CMatrix,
    sigma_r_sq: f64,
    model: BoundModel,
) -> Result<PairwiseParams> {
    BoundContext::new(bank, theta, sigma_c, sigma_r_sq, 1, model)?.params(i, j, k)
}

#[allow(clippy::too_many_arguments)]
pub fn pairwise_bound(
    bank: &PatternBank,
    i: usize,
    j: usize,
    theta: &[Complex64],
    sigma_c: &CMatrix,
    sigma_r_sq: f64,
    n_r: usize,
    model: BoundModel,
) -> Result<f64> {
    if i == j {
        return Err(AnalysisError::InvalidInput("i and j must differ".into()));
    }
    Ok(BoundContext::new(bank, theta, sigma_c, sigma_r_sq, n_r, model)?.pairwise_bound(i, j))
}

pub fn average_ber_bound(
    bank: &PatternBank,
    theta: &[Complex64],
    sigma_c: &CMatrix,
    sigma_r_sq: f64,
    n_r: usize,
    model: BoundModel,
    opts: &BoundOptions,
) -> Result<BoundResult> {
    BoundContext::new(bank, theta, sigma_c, sigma_r_sq, n_r, model)?.average(opts)
}

/// Exact `Pr{r_j > r_k | A}` with `i` transmitted and noise covariance `Σ`.
pub fn conditional_prob(a: &CMatrix, sigma: &CMatrix, bank: &PatternBank, i: usize, j: usize, k: usize) -> Result<f64> {
    if a.ncols() != bank.dim() {
        return Err(AnalysisError::InvalidInput(format!("A has {} columns, bank dim {}", a.ncols(), bank.dim())));
    }
    let l = cholesky_lower(sigma)?;
    let img = |p: usize| -> Result<CVector> {
        l.solve_lower_triangular(&(a * CVector::from_vec(bank.pattern(p))))
            .ok_or(AnalysisError::Channel(ChannelError::NotPositiveDefinite))
    };
    let (yi, yj, yk) = (img(i)?, img(j)?, img(k)?);
    let d = &yj - &yk;
    let gamma_kj = 0.5 * d.norm_squared();
    if k == i {
        return Ok(q_function(gamma_kj.sqrt()));
    }
    if gamma_kj == 0.0 {
        return Err(AnalysisError::Degenerate("gamma_kj = 0 (patterns j and k coincide under A)".into()));
    }
    let gamma_ij = 0.5 * (&yj - &yi).norm_squared();
    let gamma_ik = 0.5 * (&yk - &yi).norm_squared();
    Ok(q_function((gamma_ij - gamma_ik) / gamma_kj.sqrt()))
}

/// Per-draw conditional probabilities from a whitened set-image Gram matrix.
struct DrawGram<'b> {
    bank: &'b PatternBank,
    w: Vec<Complex64>,
}

impl<'b> DrawGram<'b> {
    fn new(bank: &'b PatternBank, a: &CMatrix, sigma: &CMatrix) -> Result<Self> {
        let l = cholesky_lower(sigma)?;
        let ns = bank.n_sets();
        let b = DMatrix::from_fn(bank.dim(), ns, |r, c| bank.beam(c)[r]);
        let y = l
            .solve_lower_triangular(&(a * b))
            .ok_or(AnalysisError::Channel(ChannelError::NotPositiveDefinite))?;
        let g = y.adjoint() * y;
        Ok(DrawGram {
            bank,
            w: (0..ns * ns).map(|idx| g[(idx / ns, idx % ns)]).collect(),
        })
    }

    fn w(&self, a: usize, b: usize) -> Complex64 {
        let (ra, sa) = self.bank.label(a);
        let (rb, sb) = self.bank.label(b);
        let syms = self.bank.symbols();
        syms[sa].conj() * syms[sb] * self.w[ra * self.bank.n_sets() + rb]
    }

    /// `None` when `j` and `k` are indistinguishable under this draw.
    fn prob(&self, i: usize, j: usize, k: usize) -> Option<f64> {
        let (wii, wjj, wkk) = (self.w(i, i).re, self.w(j, j).re, self.w(k, k).re);
        let dist_ij = wii + wjj - 2.0 * self.w(i, j).re;
        if k == i {
            return Some(q_function((0.5 * dist_ij.max(0.0)).sqrt()));
        }
        let dist_jk = wjj + wkk - 2.0 * self.w(j, k).re;
        if !(dist_jk > 0.0) {
            return None;
        }
        let dist_ik = wii + wkk - 2.0 * self.w(i, k).re;
        Some(q_function((dist_ij - dist_ik) / (2.0 * dist_jk).sqrt()))
    }
}

/// Bound for channel-dependent `Θ`: conditional probabilities averaged over
/// `n_samples` draws of `(A, Σ)` from `draw`, then the Fréchet min and the
/// Hamming-weighted average. The standard error linearizes the min at the
/// selected `k` and adds the pair-sampling error when pairs are subsampled.
pub fn sampled_bound<R, F>(bank: &PatternBank, n_samples: usize, opts: &BoundOptions, rng: &mut R, mut draw: F) -> Result<BoundResult>
where
    R: Rng + Clone,
    F: FnMut(&mut R) -> Result<(CMatrix, CMatrix)>,
{
    if n_samples < 2 {
        return Err(AnalysisError::InvalidInput("n_samples must be >= 2".into()));
    }
    let omega = bank.omega();
    if omega < 2 {
        return Err(AnalysisError::InvalidInput("bound needs at least two patterns".into()));
    }
    let n_b = bank.n_b();
    let norm = f64::from(n_b) * omega as f64;
    let total_pairs = (omega as u64) * (omega as u64 - 1);
    let subsampled = total_pairs > opts.pair_samples as u64;
    let pairs: Vec<(usize, usize)> = if subsampled {
        sample_pairs(omega, opts.pair_samples, opts.seed)
    } else {
        (0..omega).flat_map(|i| (0..omega).filter(move |&j| j != i).map(move |j| (i, j))).collect()
    };
    let labels: Vec<u64> = (0..omega).map(|p| pattern_label(p, bank.scheme_cfg())).collect();
    let nu = |i: usize, j: usize| f64::from((labels[i] ^ labels[j]).count_ones());

    let start = rng.clone();
    let mut sums = vec![0.0f64; pairs.len() * omega];
    let mut counts = vec![0u32; pairs.len() * omega];
    for _ in 0..n_samples {
        let (a, sigma) = draw(rng)?;
        let dg = DrawGram::new(bank, &a, &sigma)?;
        for (pi, &(i, j)) in pairs.iter().enumerate() {
            let row = pi * omega;
            for k in (0..omega).filter(|&k| k != j) {
                if let Some(p) = dg.prob(i, j, k) {
                    sums[row + k] += p;
                    counts[row + k] += 1;
                }
            }
        }
    }
    let chosen: Vec<usize> = (0..pairs.len())
        .map(|pi| {
            let row = pi * omega;
            let (i, j) = pairs[pi];
            (0..omega)
                .filter(|&k| k != j && counts[row + k] > 0)
                .min_by(|&a, &b| {
                    (sums[row + a] / f64::from(counts[row + a])).total_cmp(&(sums[row + b] / f64::from(counts[row + b])))
                })
                .unwrap_or(i)
        })
        .collect();
    let contrib: Vec<f64> = pairs
        .iter()
        .enumerate()
        .map(|(pi, &(i, j))| {
            let idx = pi * omega + chosen[pi];
            let c = counts[idx].max(1);
            nu(i, j) * sums[idx] / f64::from(c)
        })
        .collect();

    // second pass over the same draws for the delta-method error
    let mut replay = start;
    let mut per_draw = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let (a, sigma) = draw(&mut replay)?;
        let dg = DrawGram::new(bank, &a, &sigma)?;
        let c: f64 = pairs
            .iter()
            .enumerate()
            .map(|(pi, &(i, j))| nu(i, j) * dg.prob(i, j, chosen[pi]).unwrap_or(0.0))
            .sum();
        per_draw.push(c);
    }
    let (_, draw_se) = mean_stderr(&per_draw);
    let (pair_mean, pair_se) = mean_stderr(&contrib);
    let (estimate, stderr) = if subsampled {
        let scale = total_pairs as f64 / norm;
        let draw_part = draw_se * scale / pairs.len() as f64;
        (pair_mean * scale, (draw_part.powi(2) + (pair_se * scale).powi(2)).sqrt())
    } else {
        (contrib.iter().sum::<f64>() / norm, draw_se / norm)
    };
    Ok(BoundResult {
        ber_upper: estimate.clamp(0.0, 1.0),
        stderr,
        omega,
        n_b,
        pairs_evaluated: pairs.len(),
        subsampled,
        per_pair: None,
    })
}

/// Optimizer settings for the grouped-surface sampling bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct S3Sampling {
    pub method: OptMethod,
    pub n_groups: usize,
    pub n3: usize,
    pub tol: f64,
    pub max_iter: usize,
}

/// Sampling bound for the grouped scheme: per draw, `H` from `model`, phases
/// from the configured optimizer, `A = H Θ(H)`.
pub fn sampled_bound_s3<R: Rng + Clone>(
    model: &ChannelModel,
    s3: &S3Sampling,
    bank: &PatternBank,
    n_samples: usize,
    opts: &BoundOptions,
    rng: &mut R,
) -> Result<BoundResult> {
    if n_samples < 100 {
        return Err(AnalysisError::InvalidInput(format!("n_samples = {n_samples} must be >= 100")));
    }
    let p = &model.params;
    sampled_bound(bank, n_samples, opts, rng, |r| {
        let h = model.sample_h(r);
        let theta = optimize_surface(&h, s3.n_groups, s3.n3, s3.method, Some(bank.dictionary()), s3.tol, s3.max_iter)?;
        let mut a = h.clone();
        for (c, t) in theta.iter().enumerate() {
            for x in a.column_mut(c).iter_mut() {
                *x *= t;
            }
        }
        let sigma = noise_cov(&h, p.sigma2_sq, p.sigma_r_sq)?;
        Ok((a, sigma))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaLawResult {
    pub ks_statistic: f64,
    pub p_value: f64,
    pub pass: bool,
    pub sample_mean: f64,
    pub mean_stderr: f64,
    pub expected_mean: f64,
}

/// KS test of sampled `γ_ij = ||HΘ(Π_i−Π_j)||²/(2σR²)` against
/// `Γ(N_R, rate = 2σR²/((Π_i−Π_j)^H M (Π_i−Π_j)))`.
pub fn gamma_law_check<R: Rng + ?Sized>(
    bank: &PatternBank,
    i: usize,
    j: usize,
    theta: &[Complex64],
    model: &ChannelModel,
    n_draws: usize,
    rng: &mut R,
) -> Result<GammaLawResult> {
    let p = &model.params;
    let ctx = BoundContext::new(bank, theta, &model.sigma_c, p.sigma_r_sq, p.n_r, BoundModel::Exact)?;
    let d = ctx.d_ij(i, j);
    if !(d > 0.0) {
        return Err(AnalysisError::Degenerate("patterns i and j coincide under M".into()));
    }
    let rate = 2.0 * p.sigma_r_sq / d;
    let diff: Vec<Complex64> = bank
        .pattern(i)
        .iter()
        .zip(bank.pattern(j))
        .zip(theta)
        .map(|((a, b), t)| (a - b) * t)
        .collect();
    let diff = CVector::from_vec(diff);
    let samples: Vec<f64> = (0..n_draws)
        .map(|_| (model.sample_h(rng) * &diff).norm_squared() / (2.0 * p.sigma_r_sq))
        .collect();
    let law = Gamma::new(p.n_r as f64, rate).map_err(|e| AnalysisError::InvalidInput(e.to_string()))?;
    let (ks, pv) = ks_test(&samples, |x| law.cdf(x));
    let (mean, se) = mean_stderr(&samples);
    let threshold = if p.k_factor == 0.0 { 0.01 } else { 1e-4 };
    Ok(GammaLawResult {
        ks_statistic: ks,
        p_value: pv,
        pass: pv > threshold,
        sample_mean: mean,
        mean_stderr: se,
        expected_mean: p.n_r as f64 / rate,
    })
}

/// Density of `κ` for `q_R != 0` (for negative `q_R` the density of `−κ`
/// under `|q_R|`, i.e. the mirror image).
pub fn kappa_pdf(kappa: f64, params: &PairwiseParams, n_r: usize) -> Result<f64> {
    let v = params
        .v
        .ok_or_else(|| AnalysisError::InvalidInput("q_R = 0: kappa is Gaussian, use the normal density".into()))?;
    let s = params.sigma_kappa_sq;
    if !(s > 0.0) {
        return Err(AnalysisError::Degenerate("sigma_kappa^2 = 0".into()));
    }
    let n = n_r.max(1) as f64;
    let x = params.q_r.signum() * kappa;
    let ln_d = ln_pcf_d(-2.0 * n, -(2.0 / (v * s)).sqrt() * x)?;
    let ln_f = std::f64::consts::LN_2 + ln_gamma(2.0 * n) - (2.0 * v - 1.0) / (2.0 * v * s) * x * x
        - ln_gamma(n)
        - 0.5 * (std::f64::consts::PI * s).ln()
        + n * ((v - 1.0) / (2.0 * v)).ln()
        + ln_d;
    Ok(ln_f.exp())
}
