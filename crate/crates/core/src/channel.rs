//! Rician/Rayleigh channel between IRS2 and the receive antennas, plus the
//! noise covariance and estimation-error injection.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("invalid channel parameters: {0}")]
    InvalidParams(String),
    #[error("noise model is singular: both variances are zero")]
    SingularNoise,
    #[error("covariance is not positive definite")]
    NotPositiveDefinite,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Draws one `CN(0, 1)` sample.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub n_r: usize,
    pub n_cols: usize,
    /// Linear Rician factor; `f64::INFINITY` gives a pure LOS channel.
    pub k_factor: f64,
    pub sigma2_sq: f64,
    pub sigma_r_sq: f64,
    pub los_seed: u64,
}

impl ChannelParams {
    pub fn validate(&self) -> Result<(), ChannelError> {
        if self.n_r == 0 || self.n_cols == 0 {
            return Err(ChannelError::InvalidParams("n_r and n_cols must be >= 1".into()));
        }
        if !(self.k_factor >= 0.0) {
            return Err(ChannelError::InvalidParams(format!("k_factor = {} must be >= 0", self.k_factor)));
        }
        if !(self.sigma2_sq >= 0.0) || !(self.sigma_r_sq >= 0.0) {
            return Err(ChannelError::InvalidParams("variances must be >= 0".into()));
        }
        Ok(())
    }
}

/// Converts a Rician factor in dB to linear scale.
pub fn k_from_db(k_db: f64) -> f64 {
    10f64.powf(k_db / 10.0)
}

/// Fixed part of the channel law for one sweep point: LOS mean and the
/// covariances used by the analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    pub params: ChannelParams,
    los_weight: f64,
    diffuse_weight: f64,
    /// Unit-modulus rank-one LOS matrix `a_r a_t^H`.
    los_unit: CMatrix,
    /// `E[H]`.
    pub h_bar: CMatrix,
    pub sigma_tilde_c: CMatrix,
    pub sigma_c: CMatrix,
}

fn ula(n: usize, angle: f64) -> CVector {
    CVector::from_fn(n, |m, _| Complex64::from_polar(1.0, PI * m as f64 * angle.sin()))
}

impl ChannelModel {
    pub fn new(params: ChannelParams) -> Result<Self, ChannelError> {
        params.validate()?;
        let (n_r, n_c) = (params.n_r, params.n_cols);
        let k = params.k_factor;
        let (los_weight, diffuse_weight) = if k.is_infinite() {
            (1.0, 0.0)
        } else {
            ((k / (k + 1.0)).sqrt(), (1.0 / (k + 1.0)).sqrt())
        };
        let mut los_rng = ChaCha8Rng::seed_from_u64(params.los_seed);
        let phi_r = los_rng.random_range(-PI / 2.0..PI / 2.0);
        let phi_t = los_rng.random_range(-PI / 2.0..PI / 2.0);
        let los_unit = ula(n_r, phi_r) * ula(n_c, phi_t).adjoint();
        let h_bar = &los_unit * Complex64::from(los_weight);
        let sigma_tilde_c = CMatrix::identity(n_c, n_c) * Complex64::from(diffuse_weight * diffuse_weight);
        let sigma_c = &sigma_tilde_c + h_bar.adjoint() * &h_bar / Complex64::from(n_r as f64);
        Ok(Self {
            params,
            los_weight,
            diffuse_weight,
            los_unit,
            h_bar,
            sigma_tilde_c,
            sigma_c,
        })
    }

    /// Draws `H = sqrt(K/(K+1)) Hbar + sqrt(1/(K+1)) G`.
    pub fn sample_h<R: Rng + ?Sized>(&self, rng: &mut R) -> CMatrix {
        let (n_r, n_c) = (self.params.n_r, self.params.n_cols);
        if self.diffuse_weight == 0.0 {
            return self.h_bar.clone();
        }
        let lw = self.los_weight;
        let dw = self.diffuse_weight;
        CMatrix::from_fn(n_r, n_c, |r, c| self.los_unit[(r, c)] * lw + complex_normal(rng) * dw)
    }

    pub fn realize<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ChannelRealization, ChannelError> {
        let h = self.sample_h(rng);
        let sigma = noise_cov(&h, self.params.sigma2_sq, self.params.sigma_r_sq)?;
        Ok(ChannelRealization {
            h,
            h_bar: self.h_bar.clone(),
            sigma_tilde_c: self.sigma_tilde_c.clone(),
            sigma_c: self.sigma_c.clone(),
            sigma,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub h: CMatrix,
    pub h_bar: CMatrix,
    pub sigma_tilde_c: CMatrix,
    pub sigma_c: CMatrix,
    pub sigma: CMatrix,
}

pub fn sample_channel<R: Rng + ?Sized>(params: &ChannelParams, rng: &mut R) -> Result<ChannelRealization, ChannelError> {
    ChannelModel::new(params.clone())?.realize(rng)
}

/// `Σ = H H^H σ2² + σR² I`, symmetrized.
pub fn noise_cov(h: &CMatrix, sigma2_sq: f64, sigma_r_sq: f64) -> Result<CMatrix, ChannelError> {
    if sigma2_sq == 0.0 && sigma_r_sq == 0.0 {
        return Err(ChannelError::SingularNoise);
    }
    if sigma2_sq < 0.0 || sigma_r_sq < 0.0 {
        return Err(ChannelError::InvalidParams("variances must be >= 0".into()));
    }
    let n = h.nrows();
    let mut s = CMatrix::identity(n, n) * Complex64::from(sigma_r_sq);
    if sigma2_sq > 0.0 {
        s += h * h.adjoint() * Complex64::from(sigma2_sq);
    }
    Ok(hermitize(s))
}

pub(crate) fn hermitize(m: CMatrix) -> CMatrix {
    (&m + m.adjoint()) * Complex64::from(0.5)
}

/// Lower Cholesky factor of a Hermitian positive definite matrix.
pub fn cholesky_lower(sigma: &CMatrix) -> Result<CMatrix, ChannelError> {
    if !sigma.is_square() {
        return Err(ChannelError::Dimension("covariance must be square".into()));
    }
    nalgebra::Cholesky::new(sigma.clone())
        .map(|c| c.l())
        .ok_or(ChannelError::NotPositiveDefinite)
}

/// `w = L g` with `L L^H = Σ`.
pub fn sample_noise<R: Rng + ?Sized>(sigma: &CMatrix, rng: &mut R) -> Result<CVector, ChannelError> {
    let l = cholesky_lower(sigma)?;
    let g = CVector::from_fn(sigma.nrows(), |_, _| complex_normal(rng));
    Ok(l * g)
}

/// `Ĥ = H + E`, entries of `E` iid `CN(0, err_var)`.
pub fn perturb_channel<R: Rng + ?Sized>(h: &CMatrix, err_var: f64, rng: &mut R) -> Result<CMatrix, ChannelError> {
    if !(err_var >= 0.0) {
        return Err(ChannelError::InvalidParams(format!("err_var = {err_var} must be >= 0")));
    }
    if err_var == 0.0 {
        return Ok(h.clone());
    }
    let s = err_var.sqrt();
    Ok(h.map(|z| z + complex_normal(rng) * s))
}
