//! Reference implementations used by the integration tests. None of these
//! call into the library's numerical routines.

#![allow(dead_code)]

use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};

/// Singular values of a row-major `rows × cols` matrix by one-sided Jacobi
/// rotations, sorted in decreasing order.
pub fn jacobi_singular_values(rows: usize, cols: usize, data: &[f64]) -> Vec<f64> {
    // work on the tall orientation so that columns are orthogonalized
    let (m, n, mut a) = if rows >= cols {
        (rows, cols, data.to_vec())
    } else {
        let mut t = vec![0.0; rows * cols];
        for i in 0..rows {
            for j in 0..cols {
                t[j * rows + i] = data[i * cols + j];
            }
        }
        (cols, rows, t)
    };
    let at = |a: &[f64], i: usize, j: usize| a[i * n + j];
    for _sweep in 0..100 {
        let mut off = 0.0_f64;
        for p in 0..n {
            for q in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..m {
                    let (x, y) = (at(&a, i, p), at(&a, i, q));
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma == 0.0 {
                    continue;
                }
                off = off.max(gamma.abs() / (alpha * beta).sqrt());
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let (x, y) = (at(&a, i, p), at(&a, i, q));
                    a[i * n + p] = c * x - s * y;
                    a[i * n + q] = s * x + c * y;
                }
            }
        }
        if off < 1e-15 {
            break;
        }
    }
    let mut sv: Vec<f64> = (0..n)
        .map(|j| (0..m).map(|i| at(&a, i, j).powi(2)).sum::<f64>().sqrt())
        .collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    sv
}

/// `E[exp(n τ²/2 · ⟨u,u'⟩²)]`, the low-rank second moment of the averaged
/// likelihood ratio, for independent uniform `u, u' ∈ {±1/√n}ⁿ`,
/// enumerating all `4ⁿ` pairs. Pairs are tallied by Hamming distance in
/// integers before any floating point work.
pub fn lowrank_varl_enumerated(n: usize, tau: f64) -> f64 {
    let mut by_distance = vec![0u64; n + 1];
    for a in 0..(1u32 << n) {
        for b in 0..(1u32 << n) {
            by_distance[(a ^ b).count_ones() as usize] += 1;
        }
    }
    let total = 4f64.powi(n as i32);
    by_distance
        .iter()
        .enumerate()
        .map(|(d, &count)| {
            let inner = (n as f64 - 2.0 * d as f64) / n as f64;
            count as f64 / total * (n as f64 * tau * tau / 2.0 * inner * inner).exp()
        })
        .sum()
}

/// Pooled-variance two-sided t-test.
pub fn pooled_t_test_rejects(z: &[f64], y: &[f64], alpha: f64) -> bool {
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mz, my) = (mean(z), mean(y));
    let ss = z.iter().map(|v| (v - mz).powi(2)).sum::<f64>() + y.iter().map(|v| (v - my).powi(2)).sum::<f64>();
    let df = (z.len() + y.len() - 2) as f64;
    let se = (ss / df * (1.0 / z.len() as f64 + 1.0 / y.len() as f64)).sqrt();
    if se == 0.0 {
        return false;
    }
    let t = (mz - my) / se;
    let law = StudentsT::new(0.0, 1.0, df).expect("valid df");
    2.0 * (1.0 - law.cdf(t.abs())) < alpha
}

/// One-sample Kolmogorov–Smirnov distance.
pub fn ks_distance(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut d = 0.0_f64;
    for (i, &x) in s.iter().enumerate() {
        let c = cdf(x);
        d = d.max((i + 1) as f64 / n - c).max(c - i as f64 / n);
    }
    d
}

/// Two-sample Kolmogorov–Smirnov distance over the pooled sample.
pub fn ks_distance_two(a: &[f64], b: &[f64]) -> f64 {
    let mut pooled: Vec<(f64, bool)> = a.iter().map(|&v| (v, true)).chain(b.iter().map(|&v| (v, false))).collect();
    pooled.sort_by(|x, y| x.0.total_cmp(&y.0));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut ca, mut cb, mut d) = (0.0, 0.0, 0.0_f64);
    for (i, &(v, from_a)) in pooled.iter().enumerate() {
        if from_a {
            ca += 1.0;
        } else {
            cb += 1.0;
        }
        if i + 1 == pooled.len() || pooled[i + 1].0 != v {
            d = d.max((ca / na - cb / nb).abs());
        }
    }
    d
}

/// KS critical distance at level 1% for one sample of size `n`.
pub fn ks_critical_one(n: usize) -> f64 {
    1.6276 / (n as f64).sqrt()
}

/// KS critical distance at level 1% for samples of sizes `na`, `nb`.
pub fn ks_critical_two(na: usize, nb: usize) -> f64 {
    1.6276 * ((na + nb) as f64 / (na * nb) as f64).sqrt()
}

/// Pearson statistic of `counts` against the uniform law and its 99%
/// critical value.
pub fn chi2_uniform_test(counts: &[usize]) -> (f64, f64) {
    let total: usize = counts.iter().sum();
    let e = total as f64 / counts.len() as f64;
    let stat = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
    let crit = ChiSquared::new((counts.len() - 1) as f64).expect("df").inverse_cdf(0.99);
    (stat, crit)
}

/// Three binomial standard errors around `target`.
pub fn three_se(target: f64, reps: usize) -> f64 {
    3.0 * (target * (1.0 - target) / reps as f64).sqrt()
}
