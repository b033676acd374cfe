//! Maximum-likelihood and orthogonal-matching-pursuit detection over a
//! pattern bank.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::beampattern::PatternBank;
use crate::channel::{cholesky_lower, ChannelError, CMatrix, CVector};
use crate::mapping::combinadic_rank;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("pattern bank is empty")]
    EmptyBank,
    #[error("sparse recovery needs n_r >= n_t (n_r = {n_r}, n_t = {n_t})")]
    TooFewReceivers { n_r: usize, n_t: usize },
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    #[default]
    Ml,
    Cs,
}

/// Received vector with the effective matrix `A = H Theta` and noise covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub y: CVector,
    pub a: CMatrix,
    pub sigma: CMatrix,
}

impl Observation {
    pub fn new(y: CVector, a: CMatrix, sigma: CMatrix) -> Result<Self, DetectError> {
        let n_r = y.len();
        if a.nrows() != n_r || sigma.nrows() != n_r || sigma.ncols() != n_r {
            return Err(DetectError::Dimension(format!(
                "y has {n_r} rows, A is {}x{}, sigma is {}x{}",
                a.nrows(),
                a.ncols(),
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        Ok(Observation { y, a, sigma })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub pattern_id: usize,
    pub index_set: Vec<usize>,
    pub symbol_idx: usize,
    pub bits: Vec<u8>,
    pub metric_value: f64,
}

fn whiten(l: &CMatrix, m: &CMatrix) -> Result<CMatrix, DetectError> {
    l.solve_lower_triangular(m)
        .ok_or(DetectError::Channel(ChannelError::NotPositiveDefinite))
}

fn dot(a: &CVector, b: &CVector) -> Complex64 {
    a.dotc(b)
}

/// `Re{(y - A x/2)^H Σ^-1 A x}` for an arbitrary pattern `x`.
pub fn ml_metric(obs: &Observation, pattern: &[Complex64]) -> Result<f64, DetectError> {
    if pattern.len() != obs.a.ncols() {
        return Err(DetectError::Dimension(format!(
            "pattern length {} vs {} columns",
            pattern.len(),
            obs.a.ncols()
        )));
    }
    let l = cholesky_lower(&obs.sigma)?;
    let ax = &obs.a * CVector::from_column_slice(pattern);
    let v = whiten(&l, &CMatrix::from_columns(&[ax]))?.column(0).into_owned();
    let yw = whiten(&l, &CMatrix::from_columns(&[obs.y.clone()]))?.column(0).into_owned();
    Ok(dot(&yw, &v).re - 0.5 * v.norm_squared())
}

/// Per-channel detector state: Cholesky factor of `Σ`, whitened `A`, and the
/// whitened image of every set beam and of every single-target beam.
#[derive(Debug, Clone)]
pub struct PreparedChannel<'a> {
    bank: &'a PatternBank,
    a: CMatrix,
    l: CMatrix,
    /// whitened single-target columns `L^-1 A b_t`
    dict: CMatrix,
    /// whitened set images `L^-1 A b_r`
    images: Vec<CVector>,
    energies: Vec<f64>,
}

impl<'a> PreparedChannel<'a> {
    pub fn new(a: &CMatrix, sigma: &CMatrix, bank: &'a PatternBank) -> Result<Self, DetectError> {
        if bank.omega() == 0 {
            return Err(DetectError::EmptyBank);
        }
        if a.ncols() != bank.dim() || sigma.nrows() != a.nrows() || !sigma.is_square() {
            return Err(DetectError::Dimension(format!(
                "A is {}x{}, sigma is {}x{}, bank dim {}",
                a.nrows(),
                a.ncols(),
                sigma.nrows(),
                sigma.ncols(),
                bank.dim()
            )));
        }
        let l = cholesky_lower(sigma)?;
        let a_w = whiten(&l, a)?;
        let single = bank.dictionary();
        let b = DMatrix::from_fn(bank.dim(), single.len(), |r, c| single[c][r]);
        let dict = &a_w * b;
        let images: Vec<CVector> = (0..bank.n_sets())
            .map(|r| {
                let set = bank.set(r);
                let mut v = dict.column(set[0]).into_owned();
                for &t in &set[1..] {
                    v += dict.column(t);
                }
                v
            })
            .collect();
        let energies = images.iter().map(|v| v.norm_squared()).collect();
        Ok(PreparedChannel {
            bank,
            a: a.clone(),
            l,
            dict,
            images,
            energies,
        })
    }

    pub fn n_r(&self) -> usize {
        self.a.nrows()
    }

    fn whiten_y(&self, y: &CVector) -> Result<CVector, DetectError> {
        if y.len() != self.n_r() {
            return Err(DetectError::Dimension(format!("y has {} rows, expected {}", y.len(), self.n_r())));
        }
        self.l
            .solve_lower_triangular(y)
            .ok_or(DetectError::Channel(ChannelError::NotPositiveDefinite))
    }

    /// ML metric of every bank pattern, indexed by pattern id.
    pub fn ml_metrics(&self, y: &CVector) -> Result<Vec<f64>, DetectError> {
        let yw = self.whiten_y(y)?;
        let symbols = self.bank.symbols();
        let mut out = Vec::with_capacity(self.bank.omega());
        for (img, &e) in self.images.iter().zip(&self.energies) {
            let u = dot(&yw, img);
            out.extend(symbols.iter().map(|x| (u * x).re - 0.5 * x.norm_sqr() * e));
        }
        Ok(out)
    }

    pub fn ml_detect(&self, y: &CVector) -> Result<Decision, DetectError> {
        let yw = self.whiten_y(y)?;
        let symbols = self.bank.symbols();
        let (mut best, mut best_val) = (0usize, f64::NEG_INFINITY);
        for (r, (img, &e)) in self.images.iter().zip(&self.energies).enumerate() {
            let u = dot(&yw, img);
            for (m, x) in symbols.iter().enumerate() {
                let v = (u * x).re - 0.5 * x.norm_sqr() * e;
                if v > best_val {
                    best_val = v;
                    best = r * symbols.len() + m;
                }
            }
        }
        Ok(self.decision(best, best_val))
    }

    fn decision(&self, p: usize, metric_value: f64) -> Decision {
        let (r, m) = self.bank.label(p);
        Decision {
            pattern_id: p,
            index_set: self.bank.set(r).to_vec(),
            symbol_idx: m,
            bits: self.bank.bits(p),
            metric_value,
        }
    }

    /// OMP support recovery with sparsity `n_t` on the whitened model,
    /// projection onto the addressable sets, then the nearest symbol.
    pub fn cs_detect(&self, y: &CVector) -> Result<Decision, DetectError> {
        let n_t = self.bank.scheme_cfg().n_t;
        if self.n_r() < n_t {
            return Err(DetectError::TooFewReceivers { n_r: self.n_r(), n_t });
        }
        let yw = self.whiten_y(y)?;
        let support = omp(&self.dict, &yw, n_t);
        let rank = self.project(&support);
        let set_beam = CVector::from_column_slice(self.bank.beam(rank));
        let ab = &self.a * set_beam;
        let m = self
            .bank
            .symbols()
            .iter()
            .enumerate()
            .map(|(m, x)| (m, (y - &ab * *x).norm_squared()))
            .fold((0usize, f64::INFINITY), |acc, (m, d)| if d < acc.1 { (m, d) } else { acc })
            .0;
        let p = self.bank.pattern_id(rank, m);
        let x = self.bank.symbols()[m];
        let metric = (dot(&yw, &self.images[rank]) * x).re - 0.5 * x.norm_sqr() * self.energies[rank];
        Ok(self.decision(p, metric))
    }

    /// Rank of the addressable set closest (symmetric difference) to `support`.
    fn project(&self, support: &[usize]) -> usize {
        let usable = self.bank.n_sets() as u64;
        let rank = combinadic_rank(support);
        if rank < usable {
            return rank as usize;
        }
        let mut best = (0usize, usize::MAX);
        for r in 0..self.bank.n_sets() {
            let shared = self.bank.set(r).iter().filter(|t| support.contains(t)).count();
            let diff = support.len() + self.bank.set(r).len() - 2 * shared;
            if diff < best.1 {
                best = (r, diff);
            }
        }
        best.0
    }
}

/// Greedy support of size `k`: largest `|d_j^H r|`, least-squares refit after
/// each pick. Returned sorted ascending.
pub fn omp(dict: &CMatrix, y: &CVector, k: usize) -> Vec<usize> {
    let k = k.min(dict.ncols());
    let mut support: Vec<usize> = Vec::with_capacity(k);
    let mut residual = y.clone();
    for _ in 0..k {
        let corr = dict.ad_mul(&residual);
        let mut pick = None;
        let mut best = f64::NEG_INFINITY;
        for (j, c) in corr.iter().enumerate() {
            if support.contains(&j) {
                continue;
            }
            let v = c.norm_sqr();
            if v > best {
                best = v;
                pick = Some(j);
            }
        }
        let Some(j) = pick else { break };
        support.push(j);
        let sub = dict.select_columns(support.iter());
        let fit = sub
            .clone()
            .svd(true, true)
            .solve(y, 1e-12)
            .unwrap_or_else(|_| CVector::zeros(support.len()));
        residual = y - sub * fit;
    }
    support.sort_unstable();
    support
}

/// One-shot ML detection; prepares the channel on every call.
pub fn ml_detect(obs: &Observation, bank: &PatternBank) -> Result<Decision, DetectError> {
    PreparedChannel::new(&obs.a, &obs.sigma, bank)?.ml_detect(&obs.y)
}

pub fn cs_detect(obs: &Observation, bank: &PatternBank) -> Result<Decision, DetectError> {
    PreparedChannel::new(&obs.a, &obs.sigma, bank)?.cs_detect(&obs.y)
}
