//! Self-checks run by `randinv validate`.
//!
//! Each check draws from its own seeded stream and compares against a
//! closed form, an exact enumeration or a goodness-of-fit critical value at
//! the 1% level. `Quick` shrinks replicate counts so the suite finishes in
//! well under two minutes.

use std::fmt;
use std::sync::Arc;

use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor};

use crate::engine::{brute_force_full_group_test, decide, order_index};
use crate::error::Result;
use crate::experiments::{run_scenario, GridConfig, ScenarioConfig, ScenarioKind};
use crate::groups::{apply_action, sample_haar_orthogonal, GroupAction, GroupElement, GroupKind};
use crate::noise::{sample_noise, BaseLaw, NoiseFamily, NoiseSpec, RadialLaw, SphericalUnit};
use crate::numerics::{operator_norm, pseudo_inverse, qr_orthonormalize, DataMatrix, RngStream};
use crate::statistics::{check_psi_subadditive, DiffNorm, OlsContext, TestStatistic};
use crate::theory::{
    bernoulli_bound_regression, chi2_shift_gaussian, sparse_detection_threshold, varl_lowrank_exact, varl_sparse,
};

const SEED: u64 = 0x5eed_2026;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Level {
    Quick,
    Full,
}

impl Level {
    fn pick(self, quick: usize, full: usize) -> usize {
        match self {
            Level::Quick => quick,
            Level::Full => full,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub results: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn first_failure(&self) -> Option<&CheckResult> {
        self.results.iter().find(|r| !r.passed)
    }

    fn record(&mut self, name: &str, outcome: Result<(bool, String)>) {
        let (passed, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
        self.results.push(CheckResult {
            name: name.to_string(),
            passed,
            detail,
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.results {
            writeln!(f, "{} {:<40} {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail)?;
        }
        Ok(())
    }
}

/// Maps `(K, alpha)` to the order index used by the decision rule.
pub type OrderIndexFn = fn(usize, f64) -> Result<usize>;

/// Asymptotic Kolmogorov critical value `c(a) = √(−ln(a/2)/2)`.
pub fn kolmogorov_critical(level: f64) -> f64 {
    (-(level / 2.0).ln() / 2.0).sqrt()
}

/// One-sample KS distance between `sample` and `cdf`.
pub fn ks_one_sample(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter().enumerate().fold(0.0, |d, (i, &x)| {
        let c = cdf(x);
        d.max((i as f64 + 1.0) / n - c).max(c - i as f64 / n)
    })
}

/// Two-sample KS distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0_f64);
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
    d
}

fn ks_one_ok(sample: &[f64], cdf: impl Fn(f64) -> f64) -> (bool, String) {
    let d = ks_one_sample(sample, cdf);
    let crit = kolmogorov_critical(0.01) / (sample.len() as f64).sqrt();
    (d <= crit, format!("D = {d:.4}, critical {crit:.4}"))
}

fn ks_two_ok(a: &[f64], b: &[f64]) -> (bool, String) {
    let d = ks_two_sample(a, b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let crit = kolmogorov_critical(0.01) * ((na + nb) / (na * nb)).sqrt();
    (d <= crit, format!("D = {d:.4}, critical {crit:.4}"))
}

fn within_3se(count: usize, reps: usize, target: f64) -> (bool, String) {
    let freq = count as f64 / reps as f64;
    let se = (target * (1.0 - target) / reps as f64).sqrt();
    (
        (freq - target).abs() <= 3.0 * se,
        format!("frequency {freq:.4}, target {target:.4} ± {:.4}", 3.0 * se),
    )
}

/// Chi-squared goodness of fit of `counts` against the uniform law.
pub fn chi2_uniform(counts: &[usize]) -> (f64, f64) {
    let total: usize = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    let stat = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let crit = ChiSquared::new((counts.len() - 1) as f64)
        .expect("positive df")
        .inverse_cdf(0.99);
    (stat, crit)
}

/// Null rejection frequency of the sampled test with a custom order index.
#[allow(clippy::too_many_arguments)]
pub fn sampled_level(
    kind: GroupKind,
    stat: &TestStatistic,
    shape: (usize, usize),
    draws: usize,
    alpha: f64,
    reps: usize,
    order: OrderIndexFn,
    seed: u64,
) -> Result<f64> {
    let k = order(draws, alpha)?;
    let mut rejections = 0;
    for r in 0..reps {
        let mut rng = RngStream::new(seed, r as u64);
        let x = DataMatrix::from_fn(shape.0, shape.1, |_, _| rng.normal());
        let action = GroupAction::for_data(kind, &x)?;
        let t0 = stat.eval(&x)?;
        let randomized = (0..draws)
            .map(|_| stat.eval(&action.sample_image(&x, &mut rng)?))
            .collect::<Result<Vec<_>>>()?;
        if decide(t0, &randomized, k).0 {
            rejections += 1;
        }
    }
    Ok(rejections as f64 / reps as f64)
}

/// Level check of the sampled test under Gaussian noise, with the order
/// index supplied by `order`.
pub fn check_sampled_level(order: OrderIndexFn, reps: usize) -> Result<(bool, String)> {
    let draws = 19;
    let alpha = 0.05;
    let freq = sampled_level(
        GroupKind::SignflipRows,
        &TestStatistic::colmean_max(),
        (10, 1),
        draws,
        alpha,
        reps,
        order,
        SEED,
    )?;
    let count = (freq * reps as f64).round() as usize;
    let target = (alpha * (draws + 1) as f64).floor() / (draws + 1) as f64;
    Ok(within_3se(count, reps, target))
}

fn check_brute_force_level(reps: usize) -> Result<(bool, String)> {
    let stat = TestStatistic::colmean_max();
    let mut count = 0;
    for r in 0..reps {
        let mut rng = RngStream::new(SEED + 1, r as u64);
        let x = DataMatrix::from_fn(10, 1, |_, _| rng.normal());
        if brute_force_full_group_test(&x, &stat, GroupKind::SignflipRows, 0.05)?.reject {
            count += 1;
        }
    }
    Ok(within_3se(count, reps, 51.0 / 1024.0))
}

fn spherical_rows(radial: RadialLaw, n: usize, p: usize) -> Result<NoiseSpec> {
    NoiseSpec::new(
        NoiseFamily::Spherical {
            radial,
            unit: SphericalUnit::Rows,
        },
        n,
        p,
    )
}

fn row_sq_norms(x: &DataMatrix) -> Vec<f64> {
    (0..x.rows()).map(|i| x.row_values(i).iter().map(|v| v * v).sum()).collect()
}

fn check_radial_normal(draws: usize) -> Result<(bool, String)> {
    let spec = spherical_rows(RadialLaw::Normal, draws, 4)?;
    let x = sample_noise(&spec, &mut RngStream::new(SEED + 2, 0))?;
    let law = ChiSquared::new(4.0).expect("valid df");
    Ok(ks_one_ok(&row_sq_norms(&x), |v| law.cdf(v)))
}

fn check_radial_t(draws: usize) -> Result<(bool, String)> {
    let spec = spherical_rows(RadialLaw::StudentT { df: 3.0 }, draws, 4)?;
    let x = sample_noise(&spec, &mut RngStream::new(SEED + 3, 0))?;
    let law = FisherSnedecor::new(4.0, 3.0).expect("valid df");
    let scaled: Vec<f64> = row_sq_norms(&x).iter().map(|v| v / 4.0).collect();
    Ok(ks_one_ok(&scaled, |v| law.cdf(v)))
}

fn check_sign_symmetry(draws: usize) -> Result<(bool, String)> {
    let fam = NoiseFamily::HeteroskedasticSignSymmetric {
        scales: None,
        base: BaseLaw::default(),
    };
    let spec = NoiseSpec::new(fam, draws, 3)?;
    let a = sample_noise(&spec, &mut RngStream::new(SEED + 4, 0))?;
    let b = sample_noise(&spec, &mut RngStream::new(SEED + 4, 1))?;
    let sums = |x: &DataMatrix, sign: f64| -> Vec<f64> {
        (0..x.rows()).map(|i| sign * x.row_values(i).iter().sum::<f64>()).collect()
    };
    Ok(ks_two_ok(&sums(&a, 1.0), &sums(&b, -1.0)))
}

fn check_rotational_invariance(draws: usize) -> Result<(bool, String)> {
    let p = 5;
    let spec = spherical_rows(RadialLaw::StudentT { df: 3.0 }, draws, p)?;
    let a = sample_noise(&spec, &mut RngStream::new(SEED + 5, 0))?;
    let b = sample_noise(&spec, &mut RngStream::new(SEED + 5, 1))?;
    let GroupElement::Orthogonal(o) = sample_haar_orthogonal(p, &mut RngStream::new(SEED + 5, 2)) else {
        unreachable!("Haar sampler returns an orthogonal matrix")
    };
    let rotated = b.matmul(&o.transpose())?;
    let linf = |x: &DataMatrix| -> Vec<f64> {
        (0..x.rows())
            .map(|i| x.row_values(i).iter().fold(0.0_f64, |m, v| m.max(v.abs())))
            .collect()
    };
    Ok(ks_two_ok(&linf(&a), &linf(&rotated)))
}

fn check_haar_invariance(draws: usize) -> Result<(bool, String)> {
    let p = 4;
    let mut rng = RngStream::new(SEED + 6, 0);
    let GroupElement::Orthogonal(fixed) = sample_haar_orthogonal(p, &mut rng) else {
        unreachable!("Haar sampler returns an orthogonal matrix")
    };
    let mut plain = Vec::with_capacity(draws);
    let mut shifted = Vec::with_capacity(draws);
    for _ in 0..draws {
        if let GroupElement::Orthogonal(o) = sample_haar_orthogonal(p, &mut rng) {
            plain.push(o[(0, 0)]);
        }
        if let GroupElement::Orthogonal(o) = sample_haar_orthogonal(p, &mut rng) {
            shifted.push(o.matmul(&fixed)?[(0, 0)]);
        }
    }
    Ok(ks_two_ok(&plain, &shifted))
}

fn check_sphere_vs_eager(draws: usize) -> Result<(bool, String)> {
    let p = 6;
    let x = DataMatrix::column(&[3.0, -1.0, 0.5, 0.0, 2.0, 1.0])?;
    let action = GroupAction::rotate_full(p)?;
    let mut rng = RngStream::new(SEED + 7, 0);
    let mut lazy = Vec::with_capacity(draws);
    let mut eager = Vec::with_capacity(draws);
    for _ in 0..draws {
        lazy.push(action.sample_image(&x, &mut rng)?.max_abs());
        eager.push(apply_action(&action.sample(1, &mut rng), &x)?.max_abs());
    }
    Ok(ks_two_ok(&lazy, &eager))
}

/// A group, a statistic and the data shape it acts on.
pub type ExchangeabilityPair = (GroupKind, TestStatistic, (usize, usize));

/// Every shipped (group, statistic) pair with the data shape it acts on.
pub fn exchangeability_pairs() -> Result<Vec<ExchangeabilityPair>> {
    let mut rng = RngStream::new(SEED + 8, 0);
    let design = DataMatrix::from_fn(8, 3, |_, _| rng.normal());
    let ols = TestStatistic::ols_linf_with(Arc::new(OlsContext::new(design)));
    Ok(vec![
        (GroupKind::SignflipRows, TestStatistic::colmean_linf(), (8, 3)),
        (GroupKind::SignflipRows, TestStatistic::colmean_max(), (8, 3)),
        (GroupKind::SignflipRows, TestStatistic::linf(), (8, 3)),
        (GroupKind::SignflipRows, TestStatistic::opnorm(), (8, 3)),
        (GroupKind::SignflipRows, TestStatistic::kyfan(2, 2.0)?, (8, 3)),
        (GroupKind::SignflipRows, ols, (8, 1)),
        (GroupKind::PermuteRows, TestStatistic::twosample_diff(4, 4, DiffNorm::L2)?, (8, 2)),
        (GroupKind::PermuteRows, TestStatistic::twosample_diff(4, 4, DiffNorm::Linf)?, (8, 2)),
        (GroupKind::RotateFull, TestStatistic::linf(), (6, 1)),
        (GroupKind::RotateFull, TestStatistic::colmean_linf(), (5, 3)),
        (GroupKind::RotatePerColumn, TestStatistic::opnorm(), (6, 3)),
        (GroupKind::RotatePerColumn, TestStatistic::kyfan(2, 2.0)?, (6, 3)),
    ])
}

/// Under invariant noise the rank of `f(X)` among `f(X), f(G_1 X), …` is
/// uniform; ties are broken at random.
pub fn rank_counts(
    kind: GroupKind,
    stat: &TestStatistic,
    shape: (usize, usize),
    draws: usize,
    reps: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    let mut counts = vec![0; draws + 1];
    for r in 0..reps {
        let mut rng = RngStream::new(seed, r as u64);
        let x = DataMatrix::from_fn(shape.0, shape.1, |_, _| rng.normal());
        let action = GroupAction::for_data(kind, &x)?;
        let t0 = stat.eval(&x)?;
        let mut below = 0;
        let mut ties = 0;
        for _ in 0..draws {
            let v = stat.eval(&action.sample_image(&x, &mut rng)?)?;
            if v < t0 {
                below += 1;
            } else if v == t0 {
                ties += 1;
            }
        }
        counts[below + rng.index(ties + 1)] += 1;
    }
    Ok(counts)
}

fn check_exchangeability(reps: usize) -> Result<Vec<(String, (bool, String))>> {
    let mut out = Vec::new();
    for (i, (kind, stat, shape)) in exchangeability_pairs()?.into_iter().enumerate() {
        let counts = rank_counts(kind, &stat, shape, 9, reps, SEED + 100 + i as u64)?;
        let (chi2, crit) = chi2_uniform(&counts);
        out.push((
            format!("exchangeability {} / {}", kind.name(), stat.name()),
            (chi2 <= crit, format!("chi2 = {chi2:.2}, critical {crit:.2}")),
        ));
    }
    Ok(out)
}

fn check_subadditivity(pairs: usize) -> Result<(bool, String)> {
    let pairs_list = exchangeability_pairs()?;
    let mut rng = RngStream::new(SEED + 9, 0);
    let mut total = 0;
    for (_, stat, shape) in &pairs_list {
        for scale in [1e-3, 1.0, 1e3] {
            total += check_psi_subadditive(stat, *shape, pairs, scale, &mut rng)?;
        }
    }
    let control = TestStatistic::custom("squared_norm", 1.0, |x| x.frobenius_norm().powi(2));
    let control_hits = check_psi_subadditive(&control, (5, 2), pairs, 1.0, &mut rng)?;
    Ok((
        total == 0 && control_hits > 0,
        format!("{total} violations; squared-norm control: {control_hits}"),
    ))
}

fn check_linear_algebra() -> Result<(bool, String)> {
    let mut rng = RngStream::new(SEED + 10, 0);
    let a = DataMatrix::from_fn(6, 6, |_, _| rng.normal());
    let (q, r) = qr_orthonormalize(&a)?;
    let orth = q.transpose().matmul(&q)?.sub(&DataMatrix::identity(6))?.frobenius_norm();
    let resid = q.matmul(&r)?.sub(&a)?.frobenius_norm() / a.frobenius_norm();
    // largest eigenvalue of AᵀA by power iteration
    let x = DataMatrix::from_fn(7, 4, |_, _| rng.normal());
    let gram = x.transpose().matmul(&x)?;
    let mut v = DataMatrix::column(&[1.0, 0.5, -0.25, 0.125])?;
    for _ in 0..2000 {
        let w = gram.matmul(&v)?;
        v = w.scale(1.0 / w.frobenius_norm());
    }
    let lambda = gram.matmul(&v)?.frobenius_norm();
    let op_err = (operator_norm(&x) - lambda.sqrt()).abs() / lambda.sqrt();
    let pinv = pseudo_inverse(&x);
    let penrose = x.matmul(&pinv)?.matmul(&x)?.sub(&x)?.max_abs();
    let ok = orth <= 1e-10 && resid <= 1e-10 && op_err <= 1e-9 && penrose <= 1e-9;
    Ok((
        ok,
        format!("QᵀQ {orth:.1e}, QR {resid:.1e}, opnorm {op_err:.1e}, Penrose {penrose:.1e}"),
    ))
}

fn check_theory(mc: usize) -> Result<(bool, String)> {
    let mut ok = true;
    let mut notes = Vec::new();
    // closed-form sparse variance against a Monte Carlo of the likelihood ratio
    let (n, p, tau) = (5usize, 4usize, 0.5);
    let want = varl_sparse(n, p, chi2_shift_gaussian(tau))?;
    let mut rng = RngStream::new(SEED + 11, 0);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..mc {
        let mut l = 0.0;
        for _ in 0..p {
            let mut prod = 1.0;
            for _ in 0..n {
                let x = rng.normal();
                prod *= (tau * x - 0.5 * tau * tau).exp();
            }
            l += prod;
        }
        l /= p as f64;
        sum += l;
        sum_sq += l * l;
    }
    let mean = sum / mc as f64;
    let var = sum_sq / mc as f64 - mean * mean;
    let rel = (var - want).abs() / want;
    ok &= rel <= 0.05;
    notes.push(format!("Var(L) rel err {rel:.3}"));

    for n in 1..=8usize {
        let tau: f64 = 0.7;
        let mut total = 0.0;
        for a in 0..(1u32 << n) {
            for b in 0..(1u32 << n) {
                let inner = (n as f64 - 2.0 * (a ^ b).count_ones() as f64) / n as f64;
                total += (n as f64 * tau * tau / 2.0 * inner * inner).exp();
            }
        }
        let want = total / 4f64.powi(n as i32);
        ok &= (varl_lowrank_exact(n, tau)? - want).abs() <= 1e-11 * want;
    }
    ok &= (1..=30).all(|n| varl_lowrank_exact(n, 0.0).map(|v| (v - 1.0).abs() < 1e-14).unwrap_or(false));

    let ratios: Vec<f64> = [(50usize, 100usize), (200, 1000), (1000, 10_000)]
        .iter()
        .map(|&(n, p)| Ok(sparse_detection_threshold(n, p)? / ((p as f64).ln() / n as f64).sqrt()))
        .collect::<Result<_>>()?;
    let spread = ratios.iter().cloned().fold(f64::MIN, f64::max) / ratios.iter().cloned().fold(f64::MAX, f64::min);
    ok &= spread < 1.25;
    notes.push(format!("threshold ratio spread {spread:.3}"));

    let x = DataMatrix::from_fn(40, 5, |_, _| rng.normal());
    let eps: Vec<f64> = (0..40).map(|_| rng.normal().abs()).collect();
    let small = bernoulli_bound_regression(&x, &eps, 5.0, 1000, &mut rng)?;
    let large = bernoulli_bound_regression(&x, &eps, 5.0, 4000, &mut rng)?;
    let se_ratio = small.mc_standard_error / large.mc_standard_error;
    ok &= (se_ratio - 2.0).abs() < 0.3;
    notes.push(format!("SE ratio at 4x draws {se_ratio:.2}"));
    Ok((ok, notes.join(", ")))
}

fn check_scenario_levels(reps: usize) -> Result<(bool, String)> {
    let mut ok = true;
    let mut notes = Vec::new();
    for kind in [
        ScenarioKind::SparseVector,
        ScenarioKind::HeavyTail,
        ScenarioKind::TwoSample,
        ScenarioKind::Lowrank,
        ScenarioKind::Regression,
    ] {
        let mut cfg = ScenarioConfig::new(kind, 0.05);
        cfg.grid = Some(GridConfig::Values(vec![0.0]));
        cfg.reps = Some(if kind == ScenarioKind::Lowrank { reps / 4 } else { reps });
        if kind == ScenarioKind::Lowrank {
            cfg.n = Some(20);
            cfg.p = Some(20);
        }
        if kind == ScenarioKind::Regression {
            cfg.mc = Some(200);
        }
        let sc = cfg.resolve(SEED + 12)?;
        let out = run_scenario(&sc, 0)?;
        for row in &out.curve.rows {
            let target = if row.method.starts_with("deterministic") || row.method.starts_with("t_test") {
                sc.alpha
            } else {
                let draws: f64 = row
                    .method
                    .split("_K")
                    .nth(1)
                    .and_then(|s| s.split('_').next())
                    .and_then(|s| s.parse().ok())
                    .unwrap_or(19.0);
                (sc.alpha * (draws + 1.0)).floor() / (draws + 1.0)
            };
            let (pass, _) = within_3se(row.rejections, row.reps, target);
            ok &= pass;
            if !pass {
                notes.push(format!("{} {} at {:.4}", kind.name(), row.method, row.power));
            }
        }
    }
    if notes.is_empty() {
        notes.push("all null levels within 3 SE".into());
    }
    Ok((ok, notes.join("; ")))
}

fn check_determinism() -> Result<(bool, String)> {
    let mut cfg = ScenarioConfig::new(ScenarioKind::SparseVector, 0.05);
    cfg.reps = Some(40);
    cfg.grid = Some(GridConfig::Values(vec![0.0, 3.0]));
    let sc = cfg.resolve(SEED + 13)?;
    let csv = |w| -> Result<String> { run_scenario(&sc, w)?.curve.to_csv_string() };
    let one = csv(1)?;
    let ok = csv(4)? == one && csv(8)? == one;
    Ok((ok, "1, 4 and 8 workers".into()))
}

/// Runs the suite. `order` is the order-index rule under test; pass
/// [`order_index`] for the shipped rule.
pub fn run_validation_with(level: Level, order: OrderIndexFn) -> ValidationReport {
    let mut report = ValidationReport::default();
    report.record("brute-force level (n=10 signflip)", check_brute_force_level(level.pick(2000, 20_000)));
    report.record("sampled level (K=19)", check_sampled_level(order, level.pick(4000, 10_000)));
    report.record("linear algebra oracles", check_linear_algebra());
    report.record("spherical normal radius ~ chi2_4", check_radial_normal(level.pick(5000, 20_000)));
    report.record("spherical t3 radius ~ 4 F(4,3)", check_radial_t(level.pick(5000, 20_000)));
    report.record("heteroskedastic sign symmetry", check_sign_symmetry(level.pick(5000, 20_000)));
    report.record("spherical rotational invariance", check_rotational_invariance(level.pick(5000, 20_000)));
    report.record("Haar invariance", check_haar_invariance(level.pick(3000, 10_000)));
    report.record("sphere image vs eager rotation", check_sphere_vs_eager(level.pick(3000, 10_000)));
    match check_exchangeability(level.pick(2000, 10_000)) {
        Ok(items) => {
            for (name, outcome) in items {
                report.record(&name, Ok(outcome));
            }
        }
        Err(e) => report.record("exchangeability", Err(e)),
    }
    report.record("psi-subadditivity", check_subadditivity(level.pick(1000, 10_000)));
    report.record("theory oracles", check_theory(level.pick(200_000, 1_000_000)));
    report.record("scenario null levels", check_scenario_levels(level.pick(1000, 4000)));
    report.record("determinism across workers", check_determinism());
    report
}

pub fn run_validation(level: Level) -> ValidationReport {
    run_validation_with(level, order_index)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_distances() {
        let u: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        assert!(ks_one_sample(&u, |x| x) <= 0.005 + 1e-12);
        assert_eq!(ks_two_sample(&u, &u), 0.0);
        let shifted: Vec<f64> = u.iter().map(|v| v + 2.0).collect();
        assert_eq!(ks_two_sample(&u, &shifted), 1.0);
        assert!((kolmogorov_critical(0.01) - 1.627_6).abs() < 1e-4);
    }

    #[test]
    fn chi2_uniform_flat_counts() {
        let (stat, crit) = chi2_uniform(&[100; 10]);
        assert_eq!(stat, 0.0);
        assert!((crit - 21.665_994_333_461_93).abs() < 1e-6);
    }

    #[test]
    fn off_by_one_order_index_is_caught() {
        fn shifted(draws: usize, alpha: f64) -> Result<usize> {
            Ok(order_index(draws, alpha)? - 1)
        }
        let (ok, _) = check_sampled_level(order_index, 3000).unwrap();
        assert!(ok);
        let (bad, detail) = check_sampled_level(shifted, 3000).unwrap();
        assert!(!bad, "{detail}");
    }
}
