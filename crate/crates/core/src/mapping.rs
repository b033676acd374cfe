//! Bit-to-codeword mapping: Gray-labelled QAM/PSK and colexicographic
//! combinadic index selection.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MappingError {
    #[error("expected {expected} bits, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("bit values must be 0 or 1")]
    InvalidBit,
    #[error("index-set rank {rank} is not addressable (limit {limit})")]
    Unreachable { rank: u64, limit: u64 },
    #[error("invalid index set: {0}")]
    InvalidIndexSet(String),
    #[error("invalid modulation config: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, MappingError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Qam,
    Psk,
}

/// Unit-energy constellation. `points[label]` is the point whose Gray bit
/// label, read MSB first, equals `label`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    family: Family,
    points: Vec<Complex64>,
    bits: u32,
}

fn gray(x: u32) -> u32 {
    x ^ (x >> 1)
}

fn gray_inverse(mut g: u32) -> u32 {
    let mut x = g;
    while g > 1 {
        g >>= 1;
        x ^= g;
    }
    x
}

impl Constellation {
    pub fn new(family: Family, order: usize) -> Result<Self> {
        if order < 2 || !order.is_power_of_two() || order > 1 << 16 {
            return Err(MappingError::InvalidConfig(format!(
                "constellation order {order} must be a power of two in [2, 65536]"
            )));
        }
        let bits = order.trailing_zeros();
        let m = order as u32;
        let points = match family {
            Family::Psk => (0..m)
                .map(|label| Complex64::from_polar(1.0, TAU * f64::from(gray_inverse(label)) / f64::from(m)))
                .collect(),
            Family::Qam if bits == 1 => vec![Complex64::new(-1.0, 0.0), Complex64::new(1.0, 0.0)],
            Family::Qam if bits % 2 == 0 => {
                let half = bits / 2;
                let side = 1u32 << half;
                let scale = (2.0 * (f64::from(m) - 1.0) / 3.0).sqrt().recip();
                let level = |g: u32| f64::from(2 * gray_inverse(g)) - f64::from(side - 1);
                (0..m)
                    .map(|label| {
                        let i = label >> half;
                        let q = label & (side - 1);
                        Complex64::new(level(i) * scale, level(q) * scale)
                    })
                    .collect()
            }
            Family::Qam => {
                return Err(MappingError::InvalidConfig(format!(
                    "square QAM needs an even number of bits, got {bits}"
                )))
            }
        };
        Ok(Self { family, points, bits })
    }

    pub fn qam16() -> Self {
        Self::new(Family::Qam, 16).expect("16-QAM is valid")
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn order(&self) -> usize {
        self.points.len()
    }

    pub fn bits_per_symbol(&self) -> u32 {
        self.bits
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn point(&self, label: usize) -> Complex64 {
        self.points[label]
    }

    /// Nearest point by Euclidean distance, lowest label on ties.
    pub fn nearest(&self, z: Complex64) -> usize {
        let mut best = (0, f64::INFINITY);
        for (i, p) in self.points.iter().enumerate() {
            let d = (z - p).norm_sqr();
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }

    /// Gray labels of the point sequence in natural (amplitude/phase) order.
    pub fn natural_order_labels(&self) -> Vec<u32> {
        (0..self.order() as u32).map(gray).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    S1,
    S2,
    S3,
}

/// `n2` counts selectable targets: IRS2 elements for S1/S2, RS groups for S3.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    pub n2: usize,
    pub n_t: usize,
    pub n3: usize,
    pub constellation: Constellation,
}

impl SchemeConfig {
    pub fn s1(n2: usize, constellation: Constellation) -> Self {
        Self {
            scheme: Scheme::S1,
            n2,
            n_t: 1,
            n3: 1,
            constellation,
        }
    }

    pub fn s2(n2: usize, n_t: usize, constellation: Constellation) -> Self {
        Self {
            scheme: Scheme::S2,
            n2,
            n_t,
            n3: 1,
            constellation,
        }
    }

    pub fn s3(n_groups: usize, n3: usize, constellation: Constellation) -> Self {
        Self {
            scheme: Scheme::S3,
            n2: n_groups,
            n_t: 1,
            n3,
            constellation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n2 == 0 || self.n_t == 0 || self.n3 == 0 {
            return Err(MappingError::InvalidConfig("n2, n_t and n3 must be >= 1".into()));
        }
        if self.n_t > self.n2 {
            return Err(MappingError::InvalidConfig(format!(
                "n_t = {} exceeds n2 = {}",
                self.n_t, self.n2
            )));
        }
        if self.scheme != Scheme::S2 && self.n_t != 1 {
            return Err(MappingError::InvalidConfig("n_t must be 1 outside S2".into()));
        }
        if self.scheme != Scheme::S3 && self.n3 != 1 {
            return Err(MappingError::InvalidConfig("n3 must be 1 outside S3".into()));
        }
        if binomial_u128(self.n2 as u64, self.n_t as u64) > u128::from(u64::MAX) {
            return Err(MappingError::InvalidConfig("too many index combinations".into()));
        }
        Ok(())
    }

    pub fn index_bits(&self) -> u32 {
        let c = binomial_u128(self.n2 as u64, self.n_t as u64);
        127 - c.leading_zeros()
    }

    /// Number of addressable index sets, `2^index_bits`.
    pub fn usable_sets(&self) -> u64 {
        1u64 << self.index_bits()
    }

    pub fn symbol_bits(&self) -> u32 {
        self.constellation.bits_per_symbol()
    }

    /// Number of (index set, symbol) hypotheses.
    pub fn omega(&self) -> u64 {
        self.usable_sets() * self.constellation.order() as u64
    }
}

/// Bits per channel use.
pub fn bpcu(cfg: &SchemeConfig) -> u32 {
    cfg.symbol_bits() + cfg.index_bits()
}

pub fn binomial_u128(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * u128::from(n - i) / u128::from(i + 1);
    }
    acc
}

/// Colexicographic rank of a strictly increasing index set:
/// `sum_i C(c_i, i + 1)`.
pub fn combinadic_rank(set: &[usize]) -> u64 {
    set.iter()
        .enumerate()
        .map(|(i, &c)| binomial_u128(c as u64, i as u64 + 1) as u64)
        .sum()
}

/// Inverse of [`combinadic_rank`] for sets of size `k`.
pub fn combinadic_unrank(mut rank: u64, k: usize) -> Vec<usize> {
    let mut out = vec![0usize; k];
    for i in (1..=k).rev() {
        // largest c with C(c, i) <= rank
        let mut c = i - 1;
        while binomial_u128(c as u64 + 1, i as u64) <= u128::from(rank) {
            c += 1;
        }
        rank -= binomial_u128(c as u64, i as u64) as u64;
        out[i - 1] = c;
    }
    out
}

/// One channel use.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Codeword {
    pub index_set: Vec<usize>,
    pub symbol_idx: usize,
    pub bits: Vec<u8>,
}

impl Codeword {
    pub fn rank(&self) -> u64 {
        combinadic_rank(&self.index_set)
    }
}

fn bits_to_u64(bits: &[u8]) -> Result<u64> {
    bits.iter().try_fold(0u64, |acc, &b| match b {
        0 | 1 => Ok(acc << 1 | u64::from(b)),
        _ => Err(MappingError::InvalidBit),
    })
}

fn push_bits(out: &mut Vec<u8>, value: u64, n: u32) {
    out.extend((0..n).rev().map(|i| ((value >> i) & 1) as u8));
}

pub fn encode(bits: &[u8], cfg: &SchemeConfig) -> Result<Codeword> {
    let nb = bpcu(cfg) as usize;
    if bits.len() != nb {
        return Err(MappingError::LengthMismatch {
            expected: nb,
            got: bits.len(),
        });
    }
    let sb = cfg.symbol_bits() as usize;
    let symbol_idx = bits_to_u64(&bits[..sb])? as usize;
    let rank = bits_to_u64(&bits[sb..])?;
    Ok(Codeword {
        index_set: combinadic_unrank(rank, cfg.n_t),
        symbol_idx,
        bits: bits.to_vec(),
    })
}

pub fn decode(cw: &Codeword, cfg: &SchemeConfig) -> Result<Vec<u8>> {
    label_bits(&cw.index_set, cw.symbol_idx, cfg)
}

/// Source bits for an (index set, symbol) label.
pub fn label_bits(index_set: &[usize], symbol_idx: usize, cfg: &SchemeConfig) -> Result<Vec<u8>> {
    if index_set.len() != cfg.n_t {
        return Err(MappingError::InvalidIndexSet(format!(
            "expected {} indices, got {}",
            cfg.n_t,
            index_set.len()
        )));
    }
    if index_set.windows(2).any(|w| w[0] >= w[1]) || index_set.iter().any(|&i| i >= cfg.n2) {
        return Err(MappingError::InvalidIndexSet(format!(
            "{index_set:?} must be strictly increasing and below {}",
            cfg.n2
        )));
    }
    if symbol_idx >= cfg.constellation.order() {
        return Err(MappingError::InvalidIndexSet(format!("symbol {symbol_idx} out of range")));
    }
    let rank = combinadic_rank(index_set);
    let limit = cfg.usable_sets();
    if rank >= limit {
        return Err(MappingError::Unreachable { rank, limit });
    }
    let mut out = Vec::with_capacity(bpcu(cfg) as usize);
    push_bits(&mut out, symbol_idx as u64, cfg.symbol_bits());
    push_bits(&mut out, rank, cfg.index_bits());
    Ok(out)
}

/// Bit label of bank pattern `p = rank * M + symbol` as an integer, symbol
/// bits in the high positions.
pub fn pattern_label(p: usize, cfg: &SchemeConfig) -> u64 {
    let m = cfg.constellation.order();
    let (rank, sym) = ((p / m) as u64, (p % m) as u64);
    sym << cfg.index_bits() | rank
}

/// Hamming distance between the bit labels of two bank patterns.
pub fn hamming(p: usize, q: usize, cfg: &SchemeConfig) -> u32 {
    (pattern_label(p, cfg) ^ pattern_label(q, cfg)).count_ones()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashMap;

    fn s2(n2: usize, n_t: usize) -> SchemeConfig {
        SchemeConfig::s2(n2, n_t, Constellation::qam16())
    }

    #[test]
    fn reference_config_bpcu() {
        let c = Constellation::qam16();
        assert_eq!(bpcu(&SchemeConfig::s1(64, c.clone())), 10);
        assert_eq!(bpcu(&s2(64, 2)), 14);
        assert_eq!(bpcu(&SchemeConfig::s3(16, 4, c)), 8);
        let rates: Vec<u32> = [4, 6, 8].iter().map(|&t| bpcu(&s2(64, t))).collect();
        assert_eq!(rates, vec![23, 30, 36]);
    }

    #[test]
    fn constellation_energy() {
        for m in [2usize, 4, 8, 16, 64] {
            let psk = Constellation::new(Family::Psk, m).unwrap();
            let e: f64 = psk.points().iter().map(|p| p.norm_sqr()).sum::<f64>() / m as f64;
            assert!((e - 1.0).abs() < 1e-12);
        }
        for m in [2usize, 4, 16, 64] {
            let qam = Constellation::new(Family::Qam, m).unwrap();
            let e: f64 = qam.points().iter().map(|p| p.norm_sqr()).sum::<f64>() / m as f64;
            assert!((e - 1.0).abs() < 1e-12, "M={m}: {e}");
        }
        assert!(Constellation::new(Family::Qam, 8).is_err());
        assert!(Constellation::new(Family::Psk, 12).is_err());
    }

    #[test]
    fn qam16_grid() {
        let c = Constellation::qam16();
        let s = 10f64.sqrt();
        let mut seen: Vec<(i64, i64)> = c
            .points()
            .iter()
            .map(|p| ((p.re * s).round() as i64, (p.im * s).round() as i64))
            .collect();
        seen.sort_unstable();
        let mut grid = Vec::new();
        for a in [-3, -1, 1, 3] {
            for b in [-3, -1, 1, 3] {
                grid.push((a, b));
            }
        }
        assert_eq!(seen, grid);
        assert_eq!(c.point(0), Complex64::new(-3.0 / s, -3.0 / s));
    }

    #[test]
    fn gray_neighbours_differ_by_one_bit() {
        let c = Constellation::qam16();
        let dmin = 2.0 / 10f64.sqrt();
        for (a, pa) in c.points().iter().enumerate() {
            for (b, pb) in c.points().iter().enumerate() {
                if ((pa - pb).norm() - dmin).abs() < 1e-9 {
                    assert_eq!((a ^ b).count_ones(), 1);
                }
            }
        }
        for m in [4usize, 8, 16] {
            let psk = Constellation::new(Family::Psk, m).unwrap();
            let labels = psk.natural_order_labels();
            for w in 0..m {
                let (x, y) = (labels[w], labels[(w + 1) % m]);
                assert_eq!((x ^ y).count_ones(), 1);
                let d = (psk.point(x as usize) - psk.point(y as usize)).norm();
                assert!((d - 2.0 * (std::f64::consts::PI / m as f64).sin()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn colex_order_small() {
        let order: Vec<Vec<usize>> = (0..6).map(|r| combinadic_unrank(r, 2)).collect();
        assert_eq!(
            order,
            vec![vec![0, 1], vec![0, 2], vec![1, 2], vec![0, 3], vec![1, 3], vec![2, 3]]
        );
        let cfg = s2(4, 2);
        assert_eq!(cfg.index_bits(), 2);
        let cw = encode(&[0, 0, 0, 0, 1, 0], &cfg).unwrap();
        assert_eq!(cw.index_set, vec![1, 2]);
    }

    #[test]
    fn zero_bits_map_to_first_codeword() {
        let cfg = SchemeConfig::s1(64, Constellation::qam16());
        let cw = encode(&[0; 10], &cfg).unwrap();
        assert_eq!((cw.index_set, cw.symbol_idx), (vec![0], 0));
    }

    fn colex_enumeration(n: usize, k: usize) -> Vec<Vec<usize>> {
        // brute force: all k-subsets sorted by reversed tuple
        let mut all = Vec::new();
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize == k {
                all.push((0..n).filter(|i| mask >> i & 1 == 1).collect::<Vec<_>>());
            }
        }
        all.sort_by(|a, b| a.iter().rev().cmp(b.iter().rev()));
        all
    }

    #[test]
    fn lookup_table_agreement() {
        for n in 1..=8 {
            for k in 1..=n {
                let table = colex_enumeration(n, k);
                for (r, set) in table.iter().enumerate() {
                    assert_eq!(combinadic_rank(set), r as u64);
                    assert_eq!(&combinadic_unrank(r as u64, k), set);
                }
                let cfg = SchemeConfig {
                    scheme: if k == 1 { Scheme::S1 } else { Scheme::S2 },
                    n2: n,
                    n_t: k,
                    n3: 1,
                    constellation: Constellation::new(Family::Psk, 4).unwrap(),
                };
                let mut lut: HashMap<Vec<u8>, (Vec<usize>, usize)> = HashMap::new();
                for r in 0..cfg.usable_sets() as usize {
                    for s in 0..4 {
                        let bits = label_bits(&table[r], s, &cfg).unwrap();
                        lut.insert(bits, (table[r].clone(), s));
                    }
                }
                assert_eq!(lut.len() as u64, cfg.omega());
                for (bits, (set, s)) in &lut {
                    let cw = encode(bits, &cfg).unwrap();
                    assert_eq!((&cw.index_set, cw.symbol_idx), (set, *s));
                }
            }
        }
    }

    #[test]
    fn unreachable_rank_rejected() {
        let cfg = s2(5, 2); // C(5,2) = 10, 8 usable
        let cw = Codeword {
            index_set: vec![3, 4],
            symbol_idx: 0,
            bits: vec![],
        };
        assert!(matches!(
            decode(&cw, &cfg),
            Err(MappingError::Unreachable { rank: 9, limit: 8 })
        ));
    }

    #[test]
    fn length_mismatch_rejected() {
        let cfg = s2(64, 2);
        assert!(matches!(
            encode(&[0; 13], &cfg),
            Err(MappingError::LengthMismatch { expected: 14, got: 13 })
        ));
        assert_eq!(encode(&[2; 14], &cfg), Err(MappingError::InvalidBit));
    }

    #[test]
    fn random_round_trip_ten_thousand() {
        use rand::{Rng, SeedableRng};
        let cfg = s2(64, 2);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let bits: Vec<u8> = (0..14).map(|_| rng.random_range(0..2u8)).collect();
            let cw = encode(&bits, &cfg).unwrap();
            assert_eq!(decode(&cw, &cfg).unwrap(), bits);
        }
    }

    #[test]
    fn symbol_change_touches_only_symbol_bits() {
        let cfg = s2(16, 3);
        let a = label_bits(&[1, 4, 9], 3, &cfg).unwrap();
        let b = label_bits(&[1, 4, 9], 12, &cfg).unwrap();
        let sb = cfg.symbol_bits() as usize;
        assert_eq!(a[sb..], b[sb..]);
        assert_ne!(a[..sb], b[..sb]);
    }

    #[test]
    fn pattern_hamming_matches_bits() {
        let cfg = s2(8, 2);
        let m = 16;
        for p in 0..cfg.omega() as usize {
            for q in 0..cfg.omega() as usize {
                let bp = label_bits(&combinadic_unrank((p / m) as u64, 2), p % m, &cfg).unwrap();
                let bq = label_bits(&combinadic_unrank((q / m) as u64, 2), q % m, &cfg).unwrap();
                let direct = bp.iter().zip(&bq).filter(|(a, b)| a != b).count() as u32;
                assert_eq!(hamming(p, q, &cfg), direct);
            }
        }
    }

    proptest! {
        #[test]
        fn encode_decode_bijection(n2 in 2usize..40, n_t in 1usize..5, seed in any::<u64>()) {
            prop_assume!(n_t <= n2 && binomial_u128(n2 as u64, n_t as u64) >= 2);
            let cfg = SchemeConfig {
                scheme: if n_t == 1 { Scheme::S1 } else { Scheme::S2 },
                n2, n_t, n3: 1,
                constellation: Constellation::qam16(),
            };
            let nb = bpcu(&cfg) as usize;
            let bits: Vec<u8> = (0..nb).map(|i| ((seed >> (i % 64)) & 1) as u8).collect();
            let cw = encode(&bits, &cfg).unwrap();
            prop_assert_eq!(cw.index_set.len(), n_t);
            prop_assert!(cw.index_set.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(cw.index_set.iter().all(|&i| i < n2));
            prop_assert_eq!(decode(&cw, &cfg).unwrap(), bits);
        }

        #[test]
        fn hamming_symmetric_and_zero_iff_equal(p in 0usize..16384, q in 0usize..16384) {
            let cfg = s2(64, 2);
            prop_assert_eq!(hamming(p, q, &cfg), hamming(q, p, &cfg));
            prop_assert_eq!(hamming(p, q, &cfg) == 0, p == q);
        }

        #[test]
        fn rank_unrank_inverse(r in 0u64..4_426_165_368, k in 1usize..9) {
            let limit = binomial_u128(64, k as u64) as u64;
            let r = r % limit;
            let set = combinadic_unrank(r, k);
            prop_assert!(set.iter().all(|&c| c < 64));
            prop_assert_eq!(combinadic_rank(&set), r);
        }
    }
}
