//! Real-argument special functions used by the error-probability analysis.
//!
//! Only the ranges the analysis needs are supported. Anything outside them is
//! reported as [`SpecialFnError::OutOfRange`] instead of being extrapolated.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

use statrs::function::gamma;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecialFnError {
    #[error("{func}: argument {arg} = {value} outside supported range {range}")]
    OutOfRange {
        func: &'static str,
        arg: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("{func}: parameter {value} is a pole (non-positive integer)")]
    Pole { func: &'static str, value: f64 },
    #[error("{func}: series did not converge after {terms} terms")]
    NoConvergence { func: &'static str, terms: usize },
}

pub type Result<T> = std::result::Result<T, SpecialFnError>;

/// Neumaier-compensated accumulator.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Gaussian tail probability `Q(x) = P(N(0,1) > x)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

pub fn ln_gamma(x: f64) -> f64 {
    gamma::ln_gamma(x)
}

pub fn gamma_fn(x: f64) -> f64 {
    gamma::gamma(x)
}

/// `1/Γ(x)`, exactly zero at the poles.
pub fn recip_gamma(x: f64) -> f64 {
    if x <= 0.0 && x.fract() == 0.0 {
        0.0
    } else {
        1.0 / gamma::gamma(x)
    }
}

/// Rising factorial `(a)_n`.
pub fn pochhammer(a: f64, n: u32) -> f64 {
    (0..n).fold(1.0, |acc, k| acc * (a + f64::from(k)))
}

/// Binomial coefficient as a float; exact for results below 2^53.
pub fn binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc.round_ties_even_if_exact()
}

trait RoundIfExact {
    fn round_ties_even_if_exact(self) -> f64;
}

impl RoundIfExact for f64 {
    fn round_ties_even_if_exact(self) -> f64 {
        if self < 9.0e15 {
            self.round()
        } else {
            self
        }
    }
}

/// Power series of 1F1 without range checks. Terms are accumulated with
/// compensated summation.
fn kummer_series(a: f64, b: f64, z: f64) -> Result<f64> {
    const MAX_TERMS: usize = 20_000;
    let mut acc = CompensatedSum::default();
    let mut term = 1.0f64;
    acc.add(term);
    for k in 0..MAX_TERMS {
        let kf = k as f64;
        term *= (a + kf) / (b + kf) * z / (kf + 1.0);
        acc.add(term);
        if term == 0.0 {
            return Ok(acc.value());
        }
        // terms are monotonically shrinking once k exceeds |z| + |a|
        if kf > z.abs() + a.abs() && term.abs() <= 1e-18 * acc.value().abs() {
            return Ok(acc.value());
        }
        if !term.is_finite() {
            return Ok(acc.value() + term);
        }
    }
    Err(SpecialFnError::NoConvergence {
        func: "kummer_1f1",
        terms: MAX_TERMS,
    })
}

fn kummer_unchecked(a: f64, b: f64, z: f64) -> Result<f64> {
    if b <= 0.0 && b.fract() == 0.0 {
        return Err(SpecialFnError::Pole {
            func: "kummer_1f1",
            value: b,
        });
    }
    if z == 0.0 || a == 0.0 {
        return Ok(1.0);
    }
    if z < 0.0 {
        // Kummer's transformation turns the alternating series into a
        // positive one whenever b - a > 0.
        Ok(z.exp() * kummer_series(b - a, b, -z)?)
    } else {
        kummer_series(a, b, z)
    }
}

/// Kummer's confluent hypergeometric function `1F1(a; b; z)` for real
/// arguments with `|z| <= 50`.
pub fn kummer_1f1(a: f64, b: f64, z: f64) -> Result<f64> {
    if !z.is_finite() || z.abs() > 50.0 {
        return Err(SpecialFnError::OutOfRange {
            func: "kummer_1f1",
            arg: "z",
            value: z,
            range: "|z| <= 50",
        });
    }
    if !a.is_finite() || !b.is_finite() {
        return Err(SpecialFnError::OutOfRange {
            func: "kummer_1f1",
            arg: "a/b",
            value: if a.is_finite() { b } else { a },
            range: "finite",
        });
    }
    kummer_unchecked(a, b, z)
}

/// Parabolic cylinder function `D_K(z)` for `K in [-60, 0]`, `|z| <= 30`.
///
/// For `z <= 0` the Kummer representation is evaluated directly (both terms
/// have the same sign). For positive `z` the two terms cancel, so integer
/// orders away from the origin use Miller's backward recurrence normalised by
/// `D_0`, and everything else integrates the Laplace-type representation.
pub fn pcf_d(order: f64, z: f64) -> Result<f64> {
    if !order.is_finite() || !(-60.0..=0.0).contains(&order) {
        return Err(SpecialFnError::OutOfRange {
            func: "pcf_d",
            arg: "order",
            value: order,
            range: "[-60, 0]",
        });
    }
    if !z.is_finite() || z.abs() > 30.0 {
        return Err(SpecialFnError::OutOfRange {
            func: "pcf_d",
            arg: "z",
            value: z,
            range: "|z| <= 30",
        });
    }
    if order == 0.0 {
        return Ok((-0.25 * z * z).exp());
    }
    if z <= 0.0 {
        return pcf_d_kummer(order, z);
    }
    if order.fract() == 0.0 && z >= 0.5 {
        Ok(pcf_d_miller(-order as u32, z))
    } else {
        Ok(pcf_d_integral(-order, z))
    }
}

/// Direct evaluation of the Kummer-function representation of `D_K(z)`.
pub(crate) fn pcf_d_kummer(order: f64, z: f64) -> Result<f64> {
    let half_z2 = 0.5 * z * z;
    let t1 = recip_gamma(0.5 * (1.0 - order));
    let t2 = recip_gamma(-0.5 * order);
    let f1 = if t1 == 0.0 {
        0.0
    } else {
        kummer_unchecked(-0.5 * order, 0.5, half_z2)?
    };
    let f2 = if t2 == 0.0 {
        0.0
    } else {
        kummer_unchecked(0.5 * (1.0 - order), 1.5, half_z2)?
    };
    let bracket = t1 * f1 - SQRT_2 * z * t2 * f2;
    Ok(2f64.powf(0.5 * order) * PI.sqrt() * (-0.25 * z * z).exp() * bracket)
}

/// `D_{-n}(z)`, `z > 0`, by backward recurrence in the order.
fn pcf_d_miller(n: u32, z: f64) -> f64 {
    // the dominant solution outgrows the wanted one by about exp(2 z sqrt(m))
    let start = n + 60 + (2.0 * z * z) as u32 + (25.0 / z).powi(2) as u32;
    let mut next = 0.0f64; // f_{m+1}
    let mut cur = 1e-280f64; // f_m
    let mut target = if start == n { cur } else { 0.0 };
    for m in (1..=start).rev() {
        let prev = z * cur + f64::from(m) * next; // f_{m-1}
        next = cur;
        cur = prev;
        if m - 1 == n {
            target = cur;
        }
        if cur.abs() > 1e250 {
            cur *= 1e-250;
            next *= 1e-250;
            target *= 1e-250;
        }
    }
    // cur now holds f_0, proportional to D_0(z) = exp(-z^2/4)
    target / cur * (-0.25 * z * z).exp()
}

/// `D_{-nu}(z) = exp(-z^2/4)/Gamma(nu) * int_0^inf t^(nu-1) exp(-z t - t^2/2) dt`.
fn pcf_d_integral(nu: f64, z: f64) -> f64 {
    let integral = exp_sinh(|t| {
        if t <= 0.0 {
            0.0
        } else {
            ((nu - 1.0) * t.ln() - z * t - 0.5 * t * t).exp()
        }
    });
    (-0.25 * z * z - ln_gamma(nu)).exp() * integral
}

/// Double-exponential (exp-sinh) quadrature of `f` over `(0, inf)`.
fn exp_sinh<F: Fn(f64) -> f64>(f: F) -> f64 {
    let eval = |s: f64| {
        let t = (0.5 * PI * s.sinh()).exp();
        let w = 0.5 * PI * s.cosh() * t;
        let v = f(t) * w;
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    let range = 4.5;
    let mut h = 0.5;
    let mut total = {
        let mut acc = CompensatedSum::default();
        let n = (range / h) as i64;
        for k in -n..=n {
            acc.add(eval(k as f64 * h));
        }
        acc.value() * h
    };
    for _ in 0..10 {
        h *= 0.5;
        let n = (range / h) as i64;
        let mut acc = CompensatedSum::default();
        for k in (-n..=n).filter(|k| k % 2 != 0) {
            acc.add(eval(k as f64 * h));
        }
        let refined = 0.5 * total + acc.value() * h;
        let done = (refined - total).abs() <= 1e-15 * refined.abs();
        total = refined;
        if done {
            break;
        }
    }
    total
}

/// `ln D_K(z)` for `K in [-60, 0)` and any finite `z`. `D_K` is positive for
/// negative order, so the log stays finite where `D_K` itself would overflow.
pub fn ln_pcf_d(order: f64, z: f64) -> Result<f64> {
    if !order.is_finite() || !(-60.0..0.0).contains(&order) {
        return Err(SpecialFnError::OutOfRange {
            func: "ln_pcf_d",
            arg: "order",
            value: order,
            range: "[-60, 0)",
        });
    }
    if !z.is_finite() {
        return Err(SpecialFnError::OutOfRange {
            func: "ln_pcf_d",
            arg: "z",
            value: z,
            range: "finite",
        });
    }
    if z.abs() <= 30.0 {
        let d = pcf_d(order, z)?;
        if d > 0.0 && d.is_finite() {
            return Ok(d.ln());
        }
    }
    let nu = -order;
    let g = |t: f64| (nu - 1.0) * t.ln() - z * t - 0.5 * t * t;
    let disc = z * z + 4.0 * (nu - 1.0);
    let peak = if disc > 0.0 { 0.5 * (-z + disc.sqrt()) } else { 0.0 };
    let g_peak = if peak > 0.0 { g(peak) } else { 0.0 };
    let integral = exp_sinh(|t| if t <= 0.0 { 0.0 } else { (g(t) - g_peak).exp() });
    Ok(-0.25 * z * z - ln_gamma(nu) + g_peak + integral.ln())
}

/// Incomplete beta function `B_z(a, b)` for integer `b >= 1`, via the
/// terminating sum `B(a,b) z^a sum_{k<b} (a)_k/k! (1-z)^k`.
pub fn incomplete_beta(z: f64, a: f64, b: u32) -> Result<f64> {
    if !(0.0..=1.0).contains(&z) {
        return Err(SpecialFnError::OutOfRange {
            func: "incomplete_beta",
            arg: "z",
            value: z,
            range: "[0, 1]",
        });
    }
    if b == 0 || a <= 0.0 {
        return Err(SpecialFnError::OutOfRange {
            func: "incomplete_beta",
            arg: "a/b",
            value: if b == 0 { 0.0 } else { a },
            range: "a > 0, b >= 1",
        });
    }
    if z == 0.0 {
        return Ok(0.0);
    }
    let beta = (ln_gamma(a) + ln_gamma(f64::from(b)) - ln_gamma(a + f64::from(b))).exp();
    let mut acc = CompensatedSum::default();
    let mut term = 1.0;
    for k in 0..b {
        if k > 0 {
            term *= (a + f64::from(k - 1)) / f64::from(k) * (1.0 - z);
        }
        acc.add(term);
    }
    Ok(beta * z.powf(a) * acc.value())
}
