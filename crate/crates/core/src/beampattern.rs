//! Received amplitudes at IRS2 for each index set and the hypothesis bank.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{element_positions, ArrayConfig, Direction, LinkGeometry};
use crate::mapping::{bpcu, combinadic_unrank, label_bits, Scheme, SchemeConfig};

/// Default upper limit on the number of bank patterns.
pub const DEFAULT_OMEGA_CAP: u64 = 1 << 20;

#[derive(Debug, Error)]
pub enum BankError {
    #[error("bank would hold {omega} patterns, above the cap of {cap}; subsample index sets or reduce n_t")]
    OmegaCap { omega: u64, cap: u64 },
    #[error("scheme/geometry mismatch: {0}")]
    Mismatch(String),
    #[error("invalid index set {0:?}")]
    InvalidSet(Vec<usize>),
    #[error("phase vector length {got} does not match array size {expected}")]
    PhaseLength { expected: usize, got: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PatternMode {
    #[default]
    Physical,
    Ideal,
}

/// Normalized array factor `(1/N) sum_m exp(j(k P_m.u - psi_m))`.
pub fn array_response(cfg: &ArrayConfig, phases: &[f64], dir: Direction) -> Result<Complex64, BankError> {
    if phases.len() != cfg.len() {
        return Err(BankError::PhaseLength {
            expected: cfg.len(),
            got: phases.len(),
        });
    }
    let u = cfg.to_global(dir);
    let k = cfg.wavenumber();
    let sum: Complex64 = element_positions(cfg)
        .iter()
        .zip(phases)
        .map(|(p, &psi)| Complex64::from_polar(1.0, k * (p[0] * u[0] + p[1] * u[1] + p[2] * u[2]) - psi))
        .sum();
    Ok(sum / cfg.len() as f64)
}

fn line_sum(n: usize, spacing: f64, phase_per_meter: f64) -> Complex64 {
    let off = (n as f64 - 1.0) / 2.0;
    let s: Complex64 = (0..n)
        .map(|i| Complex64::from_polar(1.0, phase_per_meter * (i as f64 - off) * spacing))
        .sum();
    s / n as f64
}

/// Gain at `eval` of the array steered to `target`; equal to
/// `array_response(cfg, steering_phases(cfg, target), eval)` up to rounding,
/// evaluated as a product of two line sums.
pub fn steered_gain(cfg: &ArrayConfig, target: Direction, eval: Direction) -> Complex64 {
    let ut = cfg.to_global(target);
    let ue = cfg.to_global(eval);
    let du = [ue[0] - ut[0], ue[1] - ut[1], ue[2] - ut[2]];
    let k = cfg.wavenumber();
    let proj = |a: [f64; 3]| a[0] * du[0] + a[1] * du[1] + a[2] * du[2];
    let center = Complex64::from_polar(1.0, k * proj(cfg.center));
    center * line_sum(cfg.n_w, cfg.spacing, k * proj(cfg.axis_w)) * line_sum(cfg.n_h, cfg.spacing, k * proj(cfg.axis_h))
}

/// Amplitudes received at every IRS2 element for one index set.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamVector {
    pub amplitudes: Vec<Complex64>,
    pub target_set: Vec<usize>,
}

/// Beam for index set `targets`. Targets address IRS2 elements, or RS groups
/// when the link has multi-element surfaces.
pub fn beam_vector(link: &LinkGeometry, targets: &[usize], mode: PatternMode) -> Result<BeamVector, BankError> {
    if targets.is_empty() || targets.iter().any(|&t| t >= link.n_groups()) {
        return Err(BankError::InvalidSet(targets.to_vec()));
    }
    let mut amplitudes = vec![Complex64::new(0.0, 0.0); link.n_elements()];
    for &t in targets {
        match mode {
            PatternMode::Ideal => {
                for n in link.group_span(t) {
                    amplitudes[n] += 1.0;
                }
            }
            PatternMode::Physical => {
                let steer = link.group_directions[t];
                for (a, &d) in amplitudes.iter_mut().zip(&link.directions) {
                    *a += steered_gain(&link.irs1, steer, d);
                }
            }
        }
    }
    Ok(BeamVector {
        amplitudes,
        target_set: targets.to_vec(),
    })
}

/// The Ω hypotheses `b_set * s_m`, stored as one beam per addressable index
/// set plus the constellation. Pattern `p` has set rank `p / M` and symbol
/// `p % M`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternBank {
    pub mode: PatternMode,
    pub scheme: Scheme,
    cfg: SchemeConfig,
    beams: Vec<Vec<Complex64>>,
    sets: Vec<Vec<usize>>,
    single: Vec<Vec<Complex64>>,
    symbols: Vec<Complex64>,
}

impl PatternBank {
    pub fn omega(&self) -> usize {
        self.beams.len() * self.symbols.len()
    }

    pub fn order(&self) -> usize {
        self.symbols.len()
    }

    pub fn n_sets(&self) -> usize {
        self.beams.len()
    }

    /// Length of each pattern (IRS2 element count).
    pub fn dim(&self) -> usize {
        self.single[0].len()
    }

    pub fn scheme_cfg(&self) -> &SchemeConfig {
        &self.cfg
    }

    /// Bits per channel use.
    pub fn n_b(&self) -> u32 {
        bpcu(&self.cfg)
    }

    /// Source bits carried by pattern `p`.
    pub fn bits(&self, p: usize) -> Vec<u8> {
        let (r, s) = self.label(p);
        label_bits(&self.sets[r], s, &self.cfg).expect("bank labels are addressable")
    }

    pub fn symbols(&self) -> &[Complex64] {
        &self.symbols
    }

    pub fn beam(&self, rank: usize) -> &[Complex64] {
        &self.beams[rank]
    }

    pub fn beams(&self) -> &[Vec<Complex64>] {
        &self.beams
    }

    pub fn set(&self, rank: usize) -> &[usize] {
        &self.sets[rank]
    }

    /// Single-target beams, one per selectable target.
    pub fn dictionary(&self) -> &[Vec<Complex64>] {
        &self.single
    }

    /// `(set rank, symbol index)` of pattern `p`.
    pub fn label(&self, p: usize) -> (usize, usize) {
        (p / self.symbols.len(), p % self.symbols.len())
    }

    pub fn pattern_id(&self, rank: usize, symbol: usize) -> usize {
        rank * self.symbols.len() + symbol
    }

    pub fn symbol_of(&self, p: usize) -> Complex64 {
        self.symbols[p % self.symbols.len()]
    }

    pub fn pattern(&self, p: usize) -> Vec<Complex64> {
        let (r, s) = self.label(p);
        let x = self.symbols[s];
        self.beams[r].iter().map(|b| b * x).collect()
    }

    /// Mean pattern energy over the bank.
    pub fn mean_energy(&self) -> f64 {
        let beam_e: f64 = self.beams.iter().map(|b| b.iter().map(|z| z.norm_sqr()).sum::<f64>()).sum::<f64>()
            / self.beams.len() as f64;
        let sym_e: f64 = self.symbols.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.symbols.len() as f64;
        beam_e * sym_e
    }

    /// Writes `pattern_id,element,re,im` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), BankError> {
        writeln!(w, "pattern_id,element,re,im")?;
        for p in 0..self.omega() {
            for (n, z) in self.pattern(p).iter().enumerate() {
                writeln!(w, "{p},{n},{:e},{:e}", z.re, z.im)?;
            }
        }
        Ok(())
    }
}

pub fn build_bank(link: &LinkGeometry, cfg: &SchemeConfig, mode: PatternMode) -> Result<PatternBank, BankError> {
    build_bank_capped(link, cfg, mode, DEFAULT_OMEGA_CAP)
}

pub fn build_bank_capped(
    link: &LinkGeometry,
    cfg: &SchemeConfig,
    mode: PatternMode,
    cap: u64,
) -> Result<PatternBank, BankError> {
    cfg.validate().map_err(|e| BankError::Mismatch(e.to_string()))?;
    if cfg.n2 != link.n_groups() {
        return Err(BankError::Mismatch(format!(
            "scheme has n2 = {} targets, geometry provides {}",
            cfg.n2,
            link.n_groups()
        )));
    }
    if cfg.n3 != link.rs.len() {
        return Err(BankError::Mismatch(format!(
            "scheme has n3 = {}, geometry RS has {} elements",
            cfg.n3,
            link.rs.len()
        )));
    }
    let omega = cfg.omega();
    if omega > cap {
        return Err(BankError::OmegaCap { omega, cap });
    }
    let single: Vec<Vec<Complex64>> = (0..cfg.n2)
        .map(|t| beam_vector(link, &[t], mode).map(|b| b.amplitudes))
        .collect::<Result<_, _>>()?;
    PatternBank::from_dictionary(cfg, single, mode)
}

impl PatternBank {
    /// Bank from explicit single-target beams; set beams are their sums.
    pub fn from_dictionary(cfg: &SchemeConfig, single: Vec<Vec<Complex64>>, mode: PatternMode) -> Result<Self, BankError> {
        cfg.validate().map_err(|e| BankError::Mismatch(e.to_string()))?;
        if single.len() != cfg.n2 || single.is_empty() {
            return Err(BankError::Mismatch(format!("{} beams for n2 = {}", single.len(), cfg.n2)));
        }
        let dim = single[0].len();
        if dim == 0 || single.iter().any(|b| b.len() != dim) {
            return Err(BankError::Mismatch("beams must share a non-zero length".into()));
        }
        let sets: Vec<Vec<usize>> = (0..cfg.usable_sets()).map(|r| combinadic_unrank(r, cfg.n_t)).collect();
        let beams = sets
            .iter()
            .map(|set| {
                let mut b = single[set[0]].clone();
                for &t in &set[1..] {
                    for (acc, x) in b.iter_mut().zip(&single[t]) {
                        *acc += x;
                    }
                }
                b
            })
            .collect();
        Ok(PatternBank {
            mode,
            scheme: cfg.scheme,
            cfg: cfg.clone(),
            beams,
            sets,
            single,
            symbols: cfg.constellation.points().to_vec(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{steering_phases, ArrayConfig, RsLayout, SPEED_OF_LIGHT};
    use crate::mapping::Constellation;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn s1_bank(mode: PatternMode) -> (LinkGeometry, PatternBank) {
        let link = LinkGeometry::reference();
        let cfg = SchemeConfig::s1(64, Constellation::qam16());
        let bank = build_bank(&link, &cfg, mode).unwrap();
        (link, bank)
    }

    #[test]
    fn on_target_gain_is_unity() {
        let cfg = ArrayConfig::new(7, 5, 2.5e-3, 60e9);
        let dir = Direction::new(0.2, -0.1);
        let g = array_response(&cfg, &steering_phases(&cfg, dir), dir).unwrap();
        assert!((g.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn broadside_pair_nulls_at_endfire() {
        let lambda = SPEED_OF_LIGHT / 60e9;
        let cfg = ArrayConfig::new(1, 2, lambda / 2.0, 60e9);
        let psi = steering_phases(&cfg, Direction::broadside());
        let g = array_response(&cfg, &psi, Direction::new(PI / 2.0, 0.0)).unwrap();
        assert!(g.norm() < 1e-12);
    }

    #[test]
    fn phase_length_checked() {
        let cfg = ArrayConfig::new(2, 2, 2.5e-3, 60e9);
        assert!(array_response(&cfg, &[0.0; 3], Direction::broadside()).is_err());
    }

    #[test]
    fn adjacent_element_is_suppressed() {
        let link = LinkGeometry::reference();
        let irs1 = &link.irs1;
        // element 27 (row 3, col 3) and its neighbour 28
        let target = link.directions[27];
        let psi = steering_phases(irs1, target);
        let g = array_response(irs1, &psi, link.directions[28]).unwrap();
        assert!(g.norm() < 0.1, "{}", g.norm());
        let sep = (link.directions[28].az - target.az).abs().to_degrees();
        assert!((sep - 1.146).abs() < 0.01);
        assert!((steered_gain(irs1, target, link.directions[28]) - g).norm() < 1e-9);
    }

    #[test]
    fn separable_gain_matches_direct_sum() {
        let irs1 = ArrayConfig::new(6, 9, 2.5e-3, 60e9).with_center([0.01, 0.0, -0.02]);
        let t = Direction::new(0.05, -0.02);
        let psi = steering_phases(&irs1, t);
        for e in [Direction::new(0.0, 0.0), Direction::new(0.3, 0.1), Direction::new(-0.2, 0.4)] {
            let a = array_response(&irs1, &psi, e).unwrap();
            let b = steered_gain(&irs1, t, e);
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn ideal_single_target_is_unit_vector() {
        let link = LinkGeometry::reference();
        let b = beam_vector(&link, &[5], PatternMode::Ideal).unwrap();
        for (n, z) in b.amplitudes.iter().enumerate() {
            assert_eq!(*z, Complex64::new(if n == 5 { 1.0 } else { 0.0 }, 0.0));
        }
    }

    #[test]
    fn physical_peak_is_on_target() {
        let link = LinkGeometry::reference();
        for t in 0..64 {
            let b = beam_vector(&link, &[t], PatternMode::Physical).unwrap();
            let argmax = (0..64)
                .max_by(|&x, &y| b.amplitudes[x].norm().total_cmp(&b.amplitudes[y].norm()))
                .unwrap();
            assert_eq!(argmax, t);
            assert!((b.amplitudes[t].norm() - 1.0).abs() < 1e-12);
            let total: f64 = b.amplitudes.iter().map(|z| z.norm_sqr()).sum();
            assert!(b.amplitudes[t].norm_sqr() / total > 0.8);
        }
    }

    #[test]
    fn two_target_superposition() {
        let link = LinkGeometry::reference();
        let a = beam_vector(&link, &[3], PatternMode::Physical).unwrap();
        let b = beam_vector(&link, &[40], PatternMode::Physical).unwrap();
        let ab = beam_vector(&link, &[3, 40], PatternMode::Physical).unwrap();
        for n in 0..64 {
            assert!((ab.amplitudes[n] - a.amplitudes[n] - b.amplitudes[n]).norm() < 1e-15);
        }
    }

    #[test]
    fn bank_sizes() {
        let (_, bank) = s1_bank(PatternMode::Physical);
        assert_eq!(bank.omega(), 1024);
        let link = LinkGeometry::reference();
        let cfg = SchemeConfig::s2(64, 2, Constellation::qam16());
        let bank2 = build_bank(&link, &cfg, PatternMode::Physical).unwrap();
        assert_eq!(bank2.omega(), 16384);
        assert_eq!(bank2.n_sets(), 1024);
        let cap = build_bank_capped(&link, &cfg, PatternMode::Ideal, 1000);
        assert!(matches!(cap, Err(BankError::OmegaCap { omega: 16384, cap: 1000 })));
    }

    #[test]
    fn ideal_patterns_have_single_support() {
        let (_, bank) = s1_bank(PatternMode::Ideal);
        for p in 0..bank.omega() {
            let nz = bank.pattern(p).iter().filter(|z| z.norm() > 0.0).count();
            assert_eq!(nz, 1);
        }
    }

    #[test]
    fn labels_unique_and_ordered() {
        let (_, bank) = s1_bank(PatternMode::Ideal);
        let mut seen = std::collections::HashSet::new();
        for p in 0..bank.omega() {
            let (r, s) = bank.label(p);
            assert_eq!(bank.pattern_id(r, s), p);
            assert!(seen.insert((bank.set(r).to_vec(), s)));
        }
    }

    #[test]
    fn bank_is_deterministic() {
        let (_, a) = s1_bank(PatternMode::Physical);
        let (_, b) = s1_bank(PatternMode::Physical);
        assert_eq!(a, b);
    }

    #[test]
    fn s3_bank_on_grouped_surface() {
        let irs1 = ArrayConfig::new(100, 100, 2.5e-3, 60e9);
        let irs2 = ArrayConfig::new(4, 4, 1.2, 60e9).with_center([0.0, 30.0, 0.0]);
        let rs = RsLayout { n_h: 2, n_w: 2, spacing: 0.1 };
        let link = LinkGeometry::new(irs1, irs2, rs, 0.2).unwrap();
        let cfg = SchemeConfig::s3(16, 4, Constellation::qam16());
        let bank = build_bank(&link, &cfg, PatternMode::Physical).unwrap();
        assert_eq!(bank.omega(), 256);
        assert_eq!(bank.dim(), 64);
        for q in 0..16 {
            let b = bank.beam(q);
            let span = link.group_span(q);
            let inside: f64 = b[span.clone()].iter().map(|z| z.norm_sqr()).sum();
            let total: f64 = b.iter().map(|z| z.norm_sqr()).sum();
            assert!(inside / total > 0.8);
            assert!(b[span].iter().all(|z| z.norm() > 0.9));
        }
    }

    #[test]
    fn csv_export_shape() {
        let link = LinkGeometry::reference();
        let cfg = SchemeConfig::s1(64, Constellation::new(crate::mapping::Family::Psk, 2).unwrap());
        let bank = build_bank(&link, &cfg, PatternMode::Ideal).unwrap();
        let mut out = Vec::new();
        bank.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 1 + 128 * 64);
        assert!(text.starts_with("pattern_id,element,re,im\n0,0,"));
    }

    proptest! {
        #[test]
        fn symbol_scaling_is_linear(p in 0usize..1024, re in -2.0f64..2.0, im in -2.0f64..2.0) {
            let link = LinkGeometry::reference();
            let cfg = SchemeConfig::s1(64, Constellation::qam16());
            let bank = build_bank(&link, &cfg, PatternMode::Ideal).unwrap();
            let c = Complex64::new(re, im);
            let (r, s) = bank.label(p);
            let direct: Vec<Complex64> = bank.beam(r).iter().map(|b| b * (c * bank.symbols()[s])).collect();
            let scaled: Vec<Complex64> = bank.pattern(p).iter().map(|z| z * c).collect();
            for (a, b) in direct.iter().zip(&scaled) {
                prop_assert!((a - b).norm() <= 1e-15 * (1.0 + a.norm()));
            }
        }
    }
}
