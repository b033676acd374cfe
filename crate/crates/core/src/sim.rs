//! Monte-Carlo link simulation: single trials, BER points and sweeps.
//!
//! Every trial owns a ChaCha8 stream keyed by `(master seed, point key)` with
//! the trial index as stream id, so results do not depend on scheduling. The
//! channel and the noise are drawn before the source bits, which lets
//! different schemes and detectors share draws at the same point.

use std::fmt;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::{self, AnalysisError, BoundModel, BoundOptions, BoundResult, S3Sampling};
use crate::beampattern::{build_bank, BankError, PatternBank, PatternMode};
use crate::channel::{k_from_db, noise_cov, perturb_channel, sample_noise, CMatrix, CVector, ChannelError, ChannelModel, ChannelParams};
use crate::detect::{DetectError, DetectorKind, PreparedChannel};
use crate::geometry::LinkGeometry;
use crate::mapping::{bpcu, encode, MappingError, Scheme, SchemeConfig};
use crate::snr_opt::{optimize_surface, OptMethod, SnrOptError, DEFAULT_MAX_ITER, DEFAULT_TOL};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    Bank(#[from] BankError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Mapping(#[from] MappingError),
    #[error(transparent)]
    Optimizer(#[from] SnrOptError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

pub type Result<T> = std::result::Result<T, SimError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub method: OptMethod,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            method: OptMethod::Sol1,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

/// Channel-side parameters of one operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointParams {
    pub n_r: usize,
    /// Rician factor in dB; `None` is Rayleigh.
    pub k_db: Option<f64>,
    pub snr_db: f64,
    pub sigma2_sq: f64,
    /// Receiver sees `H + E` with `Var(E) = scale * σR²` per entry.
    pub estimation_error: Option<f64>,
    pub los_seed: u64,
}

impl PointParams {
    pub fn k_factor(&self) -> f64 {
        self.k_db.map_or(0.0, k_from_db)
    }
}

#[derive(Debug, Clone)]
pub struct TrialConfig {
    pub scheme: SchemeConfig,
    pub link: LinkGeometry,
    pub mode: PatternMode,
    pub point: PointParams,
    pub detectors: Vec<DetectorKind>,
    pub optimizer: OptimizerConfig,
    pub trials: u64,
    pub master_seed: u64,
}

impl TrialConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(SimError::Config("trials must be >= 1".into()));
        }
        if self.detectors.is_empty() {
            return Err(SimError::Config("at least one detector is required".into()));
        }
        if self.point.n_r == 0 {
            return Err(SimError::Config("n_r must be >= 1".into()));
        }
        if !self.point.snr_db.is_finite() {
            return Err(SimError::Config("snr_db must be finite".into()));
        }
        if let Some(s) = self.point.estimation_error {
            if !(s >= 0.0) {
                return Err(SimError::Config("estimation error scale must be >= 0".into()));
            }
        }
        Ok(())
    }

    pub fn build_bank(&self) -> Result<PatternBank> {
        Ok(build_bank(&self.link, &self.scheme, self.mode)?)
    }
}

/// Seed material for one purpose at one point.
pub fn derive_seed(master: u64, purpose: &str, key: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update((purpose.len() as u64).to_le_bytes());
    h.update(purpose.as_bytes());
    h.update(key);
    h.finalize().into()
}

/// Generator for trial `index` of the point identified by `key`.
pub fn trial_rng(master: u64, key: &[u8], index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::from_seed(derive_seed(master, "trial", key));
    rng.set_stream(index);
    rng
}

/// Point key shared by every scheme and detector at the same channel point.
pub fn point_key(p: &PointParams) -> Vec<u8> {
    let mut k = Vec::with_capacity(48);
    k.extend((p.n_r as u64).to_le_bytes());
    k.extend(p.k_db.map_or(u64::MAX, f64::to_bits).to_le_bytes());
    k.extend(p.snr_db.to_bits().to_le_bytes());
    k.extend(p.sigma2_sq.to_bits().to_le_bytes());
    k.extend(p.los_seed.to_le_bytes());
    k
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectorOutcome {
    pub detector: DetectorKind,
    pub rx_bits: Vec<u8>,
    pub errors: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialOutcome {
    pub tx_bits: Vec<u8>,
    pub detections: Vec<DetectorOutcome>,
}

/// Everything fixed across the trials of one point.
pub struct Simulator<'a> {
    cfg: &'a TrialConfig,
    bank: &'a PatternBank,
    model: ChannelModel,
    sigma_r_sq: f64,
    key: Vec<u8>,
}

/// Noise variance giving `snr_db` for the mean pattern energy of `bank`.
pub fn sigma_r_sq_for(bank: &PatternBank, snr_db: f64) -> f64 {
    bank.mean_energy() / 10f64.powf(snr_db / 10.0)
}

impl<'a> Simulator<'a> {
    pub fn new(cfg: &'a TrialConfig, bank: &'a PatternBank) -> Result<Self> {
        cfg.validate()?;
        if bank.scheme_cfg() != &cfg.scheme {
            return Err(SimError::Config("bank was built for a different scheme".into()));
        }
        let sigma_r_sq = sigma_r_sq_for(bank, cfg.point.snr_db);
        let model = ChannelModel::new(ChannelParams {
            n_r: cfg.point.n_r,
            n_cols: bank.dim(),
            k_factor: cfg.point.k_factor(),
            sigma2_sq: cfg.point.sigma2_sq,
            sigma_r_sq,
            los_seed: cfg.point.los_seed,
        })?;
        Ok(Self {
            cfg,
            bank,
            model,
            sigma_r_sq,
            key: point_key(&cfg.point),
        })
    }

    pub fn sigma_r_sq(&self) -> f64 {
        self.sigma_r_sq
    }

    pub fn model(&self) -> &ChannelModel {
        &self.model
    }

    fn phases(&self, h: &CMatrix) -> Result<Vec<Complex64>> {
        let s = &self.cfg.scheme;
        if s.scheme != Scheme::S3 {
            return Ok(vec![Complex64::new(1.0, 0.0); h.ncols()]);
        }
        let o = &self.cfg.optimizer;
        Ok(optimize_surface(h, s.n2, s.n3, o.method, Some(self.bank.dictionary()), o.tol, o.max_iter)?)
    }

    /// One end-to-end channel use, fully determined by the master seed, the
    /// point and `index`.
    pub fn run_trial(&self, index: u64) -> Result<TrialOutcome> {
        let mut rng = trial_rng(self.cfg.master_seed, &self.key, index);
        let h = self.model.sample_h(&mut rng);
        let sigma = noise_cov(&h, self.cfg.point.sigma2_sq, self.sigma_r_sq)?;
        let w = sample_noise(&sigma, &mut rng)?;
        let n_b = bpcu(&self.cfg.scheme) as usize;
        let tx_bits: Vec<u8> = (0..n_b).map(|_| rng.random_range(0..2u8)).collect();
        let cw = encode(&tx_bits, &self.cfg.scheme)?;
        let p = self.bank.pattern_id(cw.rank() as usize, cw.symbol_idx);
        let h_rx = match self.cfg.point.estimation_error {
            Some(scale) => perturb_channel(&h, scale * self.sigma_r_sq, &mut rng)?,
            None => h.clone(),
        };
        let theta = self.phases(&h_rx)?;
        let scale_cols = |m: &CMatrix| {
            let mut a = m.clone();
            for (c, t) in theta.iter().enumerate() {
                for x in a.column_mut(c).iter_mut() {
                    *x *= t;
                }
            }
            a
        };
        let a_true = scale_cols(&h);
        let a_rx = scale_cols(&h_rx);
        let y = &a_true * CVector::from_vec(self.bank.pattern(p)) + w;
        let sigma_rx = noise_cov(&h_rx, self.cfg.point.sigma2_sq, self.sigma_r_sq)?;
        let prep = PreparedChannel::new(&a_rx, &sigma_rx, self.bank)?;
        let detections = self
            .cfg
            .detectors
            .iter()
            .map(|&d| {
                let dec = match d {
                    DetectorKind::Ml => prep.ml_detect(&y)?,
                    DetectorKind::Cs => prep.cs_detect(&y)?,
                };
                let errors = dec.bits.iter().zip(&tx_bits).filter(|(a, b)| a != b).count() as u32;
                Ok(DetectorOutcome {
                    detector: d,
                    rx_bits: dec.bits,
                    errors,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TrialOutcome { tx_bits, detections })
    }

    /// Bit-error totals per detector over `trials` trials, in detector order.
    pub fn run(&self) -> Result<Vec<u64>> {
        let n_det = self.cfg.detectors.len();
        (0..self.cfg.trials)
            .into_par_iter()
            .map(|t| {
                self.run_trial(t)
                    .map(|o| o.detections.iter().map(|d| u64::from(d.errors)).collect::<Vec<_>>())
            })
            .try_reduce(|| vec![0; n_det], |a, b| Ok(a.iter().zip(&b).map(|(x, y)| x + y).collect()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerPoint {
    pub value: f64,
    pub ber: f64,
    pub stderr: f64,
    pub trials: u64,
    pub bit_errors: u64,
}

impl BerPoint {
    pub fn from_counts(value: f64, bit_errors: u64, trials: u64, n_b: u32) -> Self {
        let bits = (trials * u64::from(n_b)) as f64;
        let ber = bit_errors as f64 / bits;
        Self {
            value,
            ber,
            stderr: (ber * (1.0 - ber) / bits).sqrt(),
            trials,
            bit_errors,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVar {
    SnrDb,
    KDb,
    NR,
}

impl SweepVar {
    pub fn name(self) -> &'static str {
        match self {
            SweepVar::SnrDb => "snr_db",
            SweepVar::KDb => "k_db",
            SweepVar::NR => "n_r",
        }
    }

    pub fn apply(self, p: &mut PointParams, value: f64) -> Result<()> {
        match self {
            SweepVar::SnrDb => p.snr_db = value,
            SweepVar::KDb => p.k_db = Some(value),
            SweepVar::NR => {
                if !(value >= 1.0) || value.fract() != 0.0 {
                    return Err(SimError::Config(format!("n_r = {value} is not a positive integer")));
                }
                p.n_r = value as usize;
            }
        }
        Ok(())
    }
}

impl fmt::Display for SweepVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerCurve {
    pub sweep_name: String,
    pub sweep_var: SweepVar,
    pub detector: DetectorKind,
    pub scheme: Scheme,
    pub points: Vec<BerPoint>,
}

/// Runs `cfg` at every grid value of `var`; one curve per detector. The
/// bank is built once.
pub fn run_sweep(cfg: &TrialConfig, name: &str, var: SweepVar, grid: &[f64]) -> Result<Vec<BerCurve>> {
    if grid.is_empty() {
        return Err(SimError::Config("sweep grid is empty".into()));
    }
    let bank = cfg.build_bank()?;
    run_sweep_with_bank(cfg, &bank, name, var, grid)
}

pub fn run_sweep_with_bank(cfg: &TrialConfig, bank: &PatternBank, name: &str, var: SweepVar, grid: &[f64]) -> Result<Vec<BerCurve>> {
    if grid.is_empty() {
        return Err(SimError::Config("sweep grid is empty".into()));
    }
    let n_b = bank.n_b();
    let mut curves: Vec<BerCurve> = cfg
        .detectors
        .iter()
        .map(|&d| BerCurve {
            sweep_name: name.to_string(),
            sweep_var: var,
            detector: d,
            scheme: cfg.scheme.scheme,
            points: Vec::with_capacity(grid.len()),
        })
        .collect();
    for &v in grid {
        let mut point_cfg = cfg.clone();
        var.apply(&mut point_cfg.point, v)?;
        let errors = Simulator::new(&point_cfg, bank)?.run()?;
        for (curve, e) in curves.iter_mut().zip(errors) {
            curve.points.push(BerPoint::from_counts(v, e, cfg.trials, n_b));
        }
    }
    Ok(curves)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConfig {
    pub model: BoundModel,
    pub pair_budget: u64,
    pub pair_samples: usize,
    /// Channel draws for the Scheme-3 sampled bound.
    pub n_samples: usize,
}

impl Default for BoundConfig {
    fn default() -> Self {
        Self {
            model: BoundModel::Exact,
            pair_budget: analysis::DEFAULT_PAIR_BUDGET,
            pair_samples: analysis::DEFAULT_PAIR_SAMPLES,
            n_samples: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundPoint {
    pub value: f64,
    pub result: BoundResult,
    pub method: &'static str,
}

/// Analytical upper bound at one point: closed form for S1/S2, channel
/// sampling with optimized phases for S3.
pub fn bound_point(cfg: &TrialConfig, bank: &PatternBank, bc: &BoundConfig) -> Result<(BoundResult, &'static str)> {
    let sim = Simulator::new(cfg, bank)?;
    let seed = derive_seed(cfg.master_seed, "bound", &point_key(&cfg.point));
    let opts = BoundOptions {
        pair_budget: bc.pair_budget,
        pair_samples: bc.pair_samples,
        seed: u64::from_le_bytes(seed[..8].try_into().expect("32-byte digest")),
        keep_pairs: false,
    };
    let n_r = cfg.point.n_r;
    if cfg.scheme.scheme == Scheme::S3 && cfg.optimizer.method != OptMethod::Identity {
        let s3 = S3Sampling {
            method: cfg.optimizer.method,
            n_groups: cfg.scheme.n2,
            n3: cfg.scheme.n3,
            tol: cfg.optimizer.tol,
            max_iter: cfg.optimizer.max_iter,
        };
        let mut rng = ChaCha8Rng::from_seed(seed);
        let r = analysis::sampled_bound_s3(sim.model(), &s3, bank, bc.n_samples, &opts, &mut rng)?;
        return Ok((r, "sampled"));
    }
    let theta = vec![Complex64::new(1.0, 0.0); bank.dim()];
    let r = analysis::average_ber_bound(bank, &theta, &sim.model().sigma_c, sim.sigma_r_sq(), n_r, bc.model, &opts)?;
    let method = if r.subsampled { "closed_form_subsampled" } else { "closed_form" };
    Ok((r, method))
}

pub fn bound_sweep(cfg: &TrialConfig, bank: &PatternBank, var: SweepVar, grid: &[f64], bc: &BoundConfig) -> Result<Vec<BoundPoint>> {
    if grid.is_empty() {
        return Err(SimError::Config("sweep grid is empty".into()));
    }
    grid.iter()
        .map(|&v| {
            let mut c = cfg.clone();
            var.apply(&mut c.point, v)?;
            let (result, method) = bound_point(&c, bank, bc)?;
            Ok(BoundPoint { value: v, result, method })
        })
        .collect()
}

/// SNR (dB) at which a decreasing BER curve crosses `target`, by linear
/// interpolation of `log10(BER)` between the bracketing points.
pub fn crossing_snr(points: &[BerPoint], target: f64) -> Option<f64> {
    points.windows(2).find_map(|w| {
        let (a, b) = (w[0], w[1]);
        if a.ber >= target && b.ber <= target && a.ber > 0.0 {
            if b.ber <= 0.0 {
                return Some(b.value);
            }
            let (la, lb, lt) = (a.ber.log10(), b.ber.log10(), target.log10());
            if la == lb {
                return Some(a.value);
            }
            Some(a.value + (la - lt) / (la - lb) * (b.value - a.value))
        } else {
            None
        }
    })
}
