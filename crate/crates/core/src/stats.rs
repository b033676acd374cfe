//! Goodness-of-fit helpers and small summary statistics.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Sample mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Asymptotic Kolmogorov survival function with the Stephens small-sample
/// correction, evaluated at statistic `d` for sample size `n`.
pub fn kolmogorov_p(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut p = 0.0;
    for k in 1..=200 {
        let kf = f64::from(k);
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        p += if k % 2 == 1 { 2.0 * term } else { -2.0 * term };
        if term < 1e-16 {
            break;
        }
    }
    p.clamp(0.0, 1.0)
}

/// One-sample two-sided Kolmogorov-Smirnov test. Returns `(D, p)`.
pub fn ks_test<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> (f64, f64) {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i as f64 + 1.0) / n - f)
        })
        .fold(0.0, f64::max);
    (d, kolmogorov_p(d, xs.len()))
}

/// Two-sample Kolmogorov-Smirnov test. Returns `(D, p)`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let n_eff = (na * nb / (na + nb)).round() as usize;
    (d, kolmogorov_p(d, n_eff.max(1)))
}

/// Pearson chi-square goodness of fit. Bins with expected count below
/// `min_expected` are merged into their right neighbour (the last into its
/// left). `fitted` parameters reduce the degrees of freedom. Returns
/// `(statistic, dof, p)`.
pub fn chi_square_gof(observed: &[f64], expected: &[f64], min_expected: f64, fitted: usize) -> (f64, usize, f64) {
    assert_eq!(observed.len(), expected.len(), "bin count mismatch");
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut o_acc, mut e_acc) = (0.0, 0.0);
    for (&o, &e) in observed.iter().zip(expected) {
        o_acc += o;
        e_acc += e;
        if e_acc >= min_expected {
            bins.push((o_acc, e_acc));
            o_acc = 0.0;
            e_acc = 0.0;
        }
    }
    if e_acc > 0.0 || o_acc > 0.0 {
        match bins.last_mut() {
            Some(last) => {
                last.0 += o_acc;
                last.1 += e_acc;
            }
            None => bins.push((o_acc, e_acc)),
        }
    }
    let stat: f64 = bins.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = bins.len().saturating_sub(1 + fitted).max(1);
    let p = ChiSquared::new(dof as f64).map(|c| c.sf(stat)).unwrap_or(f64::NAN);
    (stat, dof, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Exp, Normal};
    use statrs::distribution::Normal as SNormal;

    #[test]
    fn kolmogorov_reference_points() {
        // scipy.stats.kstwobign.sf at 1.0 and its 5% critical value
        let n = 1_000_000_000_000usize;
        let d = |lambda: f64| lambda / (n as f64).sqrt();
        assert!((kolmogorov_p(d(1.0), n) - 0.269_999_671_677_535_6).abs() < 1e-6);
        assert!((kolmogorov_p(d(1.358_098_77), n) - 0.05).abs() < 1e-6);
        assert_eq!(kolmogorov_p(0.0, 10), 1.0);
    }

    #[test]
    fn ks_accepts_true_law_and_rejects_wrong_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let xs: Vec<f64> = (0..5000).map(|_| normal.sample(&mut rng)).collect();
        let law = SNormal::new(0.0, 1.0).unwrap();
        assert!(ks_test(&xs, |x| law.cdf(x)).1 > 0.01);
        let shifted = SNormal::new(0.1, 1.0).unwrap();
        assert!(ks_test(&xs, |x| shifted.cdf(x)).1 < 1e-3);
        let ys: Vec<f64> = (0..5000).map(|_| normal.sample(&mut rng)).collect();
        assert!(ks_two_sample(&xs, &ys).1 > 0.01);
        let e = Exp::new(1.0).unwrap();
        let zs: Vec<f64> = (0..5000).map(|_| e.sample(&mut rng)).collect();
        assert!(ks_two_sample(&xs, &zs).1 < 1e-6);
    }

    #[test]
    fn chi_square_merges_sparse_bins() {
        let obs = [10.0, 0.0, 1.0, 30.0, 9.0];
        let exp = [10.0, 0.5, 0.5, 30.0, 9.0];
        let (stat, dof, p) = chi_square_gof(&obs, &exp, 5.0, 0);
        // merged: [10,10], [31,31], [9,9]
        assert!(stat.abs() < 1e-12);
        assert_eq!(dof, 2);
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mean_stderr_simple() {
        let (m, s) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (1.666_666_666_666_666_7f64 / 4.0).sqrt()).abs() < 1e-15);
    }
}
