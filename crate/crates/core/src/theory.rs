//! Lower-bound quantities, Bernoulli-process bounds and consistency margins.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{pseudo_inverse, DataMatrix, RngStream};

/// Largest `n` accepted by [`varl_lowrank_exact`].
pub const LOWRANK_EXACT_MAX_N: usize = 30;

/// χ² divergence between `N(τ, 1)` and `N(0, 1)`.
pub fn chi2_shift_gaussian(tau: f64) -> f64 {
    (tau * tau).exp_m1()
}

/// Variance of the likelihood ratio under the sparse uniform-support prior,
/// `((chi2 + 1)^n − 1)/p`. Returns `+inf` when `n·ln(1 + chi2) > 700`.
pub fn varl_sparse(n: usize, p: usize, chi2: f64) -> Result<f64> {
    if chi2.is_nan() || chi2 < 0.0 || n == 0 || p == 0 {
        return Err(Error::domain(format!(
            "need n, p >= 1 and chi2 >= 0, got n={n}, p={p}, chi2={chi2}"
        )));
    }
    let log_growth = n as f64 * chi2.ln_1p();
    if log_growth > 700.0 {
        return Ok(f64::INFINITY);
    }
    Ok(log_growth.exp_m1() / p as f64)
}

/// Second moment of the likelihood ratio for the rank-one prior with
/// `v` uniform over `{±1}^n/√n`, by exact enumeration over the overlap.
pub fn varl_lowrank_exact(n: usize, tau: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::domain("n must be at least 1"));
    }
    if n > LOWRANK_EXACT_MAX_N {
        return Err(Error::domain(format!(
            "exact enumeration supports n <= {LOWRANK_EXACT_MAX_N}, got {n}"
        )));
    }
    let nf = n as f64;
    let mut binom = 1.0_f64;
    let mut total = 0.0;
    for j in 0..=n {
        let s = nf - 2.0 * j as f64;
        total += binom * (tau * tau * s * s / (2.0 * nf)).exp();
        binom = binom * (n - j) as f64 / (j + 1) as f64;
    }
    Ok(total * 2f64.powi(-(n as i32)))
}

/// Smallest `τ` with `varl_sparse(n, p, chi2_shift_gaussian(τ)) >= 1`, by bisection.
pub fn sparse_detection_threshold(n: usize, p: usize) -> Result<f64> {
    let reaches = |tau: f64| -> Result<bool> { Ok(varl_sparse(n, p, chi2_shift_gaussian(tau))? >= 1.0) };
    let mut hi = 1.0;
    while !reaches(hi)? {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if reaches(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(hi)
}

/// Monte Carlo upper bound `U⁺ = b + l·r` on the supremum of a Bernoulli process.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BernoulliBound {
    pub b_estimate: f64,
    pub r_value: f64,
    pub l: f64,
    pub u_plus: f64,
    pub mc_samples: usize,
    pub mc_standard_error: f64,
}

fn check_mc(l: f64, mc: usize) -> Result<()> {
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::domain(format!("l must be positive, got {l}")));
    }
    if mc < 100 {
        return Err(Error::domain(format!("need at least 100 Monte Carlo draws, got {mc}")));
    }
    Ok(())
}

fn finish(draws: &[f64], r_value: f64, l: f64) -> BernoulliBound {
    let mc = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / mc;
    let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (mc - 1.0);
    BernoulliBound {
        b_estimate: mean,
        r_value,
        l,
        u_plus: mean + l * r_value,
        mc_samples: draws.len(),
        mc_standard_error: (var / mc).sqrt(),
    }
}

/// Bound for the index set `[A; −A]` with `A = X†·diag(|ε|)`: the process
/// supremum is `‖A·b‖_∞` and `r` is the largest row norm of `A`.
pub fn bernoulli_bound_regression(
    design: &DataMatrix,
    eps_abs: &[f64],
    l: f64,
    mc: usize,
    rng: &mut RngStream,
) -> Result<BernoulliBound> {
    check_mc(l, mc)?;
    let n = design.rows();
    if eps_abs.len() != n {
        return Err(Error::dims(format!("{} residual magnitudes for {n} rows", eps_abs.len())));
    }
    if eps_abs.iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
        return Err(Error::domain("residual magnitudes must be finite and nonnegative"));
    }
    let pinv = pseudo_inverse(design);
    let a = pinv.as_matrix() * nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(eps_abs));
    let r_value = a.row_iter().map(|row| row.norm()).fold(0.0, f64::max);
    let mut signs = nalgebra::DVector::zeros(n);
    let draws: Vec<f64> = (0..mc)
        .map(|_| {
            signs.iter_mut().for_each(|s| *s = rng.rademacher());
            (&a * &signs).amax()
        })
        .collect();
    Ok(finish(&draws, r_value, l))
}

/// Bound for the design-driven set `T(X) = {diag(X†_j)·X·w : j, ‖w‖_∞ ≤ 1}`.
/// The supremum is `max_j ‖Xᵀ·diag(X†_j)·b‖₁`; `r` bounds each generator by
/// the sum of its column norms.
pub fn bernoulli_bound_design(
    design: &DataMatrix,
    l: f64,
    mc: usize,
    rng: &mut RngStream,
) -> Result<BernoulliBound> {
    check_mc(l, mc)?;
    let x = design.as_matrix();
    let pinv = pseudo_inverse(design);
    let (n, p) = design.shape();
    // M_j = diag(X†_j)·X, one n × p block per coefficient j
    let blocks: Vec<nalgebra::DMatrix<f64>> = (0..p)
        .map(|j| {
            let mut m = x.clone();
            for i in 0..n {
                let w = pinv[(j, i)];
                m.row_mut(i).scale_mut(w);
            }
            m
        })
        .collect();
    let r_value = blocks
        .iter()
        .map(|m| m.column_iter().map(|c| c.norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut signs = nalgebra::DVector::zeros(n);
    let draws: Vec<f64> = (0..mc)
        .map(|_| {
            signs.iter_mut().for_each(|s| *s = rng.rademacher());
            blocks
                .iter()
                .map(|m| m.tr_mul(&signs).lp_norm(1))
                .fold(0.0, f64::max)
        })
        .collect();
    Ok(finish(&draws, r_value, l))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Proposition {
    SparseSignflip,
    SparseRotation,
    Lowrank,
    Regression,
    Twosample,
    /// The general theorem for a statistic with subadditivity constant `psi`.
    General,
}

impl Proposition {
    pub fn parse(name: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(name.replace('-', "_")))
            .map_err(|_| Error::config("proposition", format!("unknown proposition '{name}'")))
    }
}

/// Finite-sample quantities entering a consistency condition. Only the
/// fields the chosen proposition needs have to be set.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsistencyInputs {
    pub s_inf: Option<f64>,
    pub s_2: Option<f64>,
    pub s_op: Option<f64>,
    pub s_2inf: Option<f64>,
    pub delta: Option<f64>,
    /// `f(s)` for the general theorem.
    pub f_s: Option<f64>,
    pub psi: Option<f64>,
    pub t: Option<f64>,
    pub t2: Option<f64>,
    pub t_tilde: Option<f64>,
    pub u_plus: Option<f64>,
    pub n: Option<usize>,
    pub p: Option<usize>,
    pub n_prime: Option<usize>,
}

/// Ratio forms of a consistency condition; values above 1 meet the threshold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Margins {
    pub randomization: f64,
    pub deterministic: f64,
}

struct Fields<'a> {
    inputs: &'a ConsistencyInputs,
    missing: Vec<&'static str>,
}

impl Fields<'_> {
    fn real(&mut self, name: &'static str) -> f64 {
        let v = match name {
            "s_inf" => self.inputs.s_inf,
            "s_2" => self.inputs.s_2,
            "s_op" => self.inputs.s_op,
            "s_2inf" => self.inputs.s_2inf,
            "delta" => self.inputs.delta,
            "f_s" => self.inputs.f_s,
            "psi" => self.inputs.psi,
            "t" => self.inputs.t,
            "t2" => self.inputs.t2,
            "t_tilde" => self.inputs.t_tilde,
            "u_plus" => self.inputs.u_plus,
            _ => unreachable!("unknown field {name}"),
        };
        v.unwrap_or_else(|| {
            self.missing.push(name);
            f64::NAN
        })
    }

    fn count(&mut self, name: &'static str) -> f64 {
        let v = match name {
            "n" => self.inputs.n,
            "p" => self.inputs.p,
            "n_prime" => self.inputs.n_prime,
            _ => unreachable!("unknown field {name}"),
        };
        v.map(|c| c as f64).unwrap_or_else(|| {
            self.missing.push(name);
            f64::NAN
        })
    }
}

fn check_inputs(inputs: &ConsistencyInputs) -> Result<()> {
    let reals = [
        ("s_inf", inputs.s_inf),
        ("s_2", inputs.s_2),
        ("s_op", inputs.s_op),
        ("s_2inf", inputs.s_2inf),
        ("delta", inputs.delta),
        ("f_s", inputs.f_s),
        ("t", inputs.t),
        ("t2", inputs.t2),
        ("t_tilde", inputs.t_tilde),
        ("u_plus", inputs.u_plus),
    ];
    for (name, v) in reals {
        if let Some(v) = v {
            if v.is_nan() || v < 0.0 {
                return Err(Error::config(name, format!("must be nonnegative, got {v}")));
            }
        }
    }
    if let Some(psi) = inputs.psi {
        if !(psi > 0.0 && psi <= 1.0) {
            return Err(Error::config("psi", format!("must lie in (0, 1], got {psi}")));
        }
    }
    for (name, v) in [("n", inputs.n), ("p", inputs.p), ("n_prime", inputs.n_prime)] {
        if v == Some(0) {
            return Err(Error::config(name, "must be at least 1"));
        }
    }
    Ok(())
}

/// Finite-sample ratio of a proposition's condition together with the
/// matching deterministic-test ratio. Thresholds of 2 are folded in.
pub fn consistency_margin(prop: Proposition, inputs: &ConsistencyInputs) -> Result<Margins> {
    check_inputs(inputs)?;
    let mut f = Fields {
        inputs,
        missing: Vec::new(),
    };
    let margins = match prop {
        Proposition::SparseSignflip => {
            let (s, t) = (f.real("s_inf"), f.real("t"));
            let m = s / (2.0 * t);
            Margins {
                randomization: m,
                deterministic: m,
            }
        }
        Proposition::SparseRotation => {
            let (s, s2, t2, p) = (f.real("s_inf"), f.real("s_2"), f.real("t2"), f.count("p"));
            let scaled = s / (2.0 * p.ln()).sqrt();
            Margins {
                randomization: scaled / ((s2 + 2.0 * t2) / p.sqrt()),
                deterministic: scaled / (2.0 * t2 / p.sqrt()),
            }
        }
        Proposition::Lowrank => {
            let (s_op, s_2inf, t2) = (f.real("s_op"), f.real("s_2inf"), f.real("t2"));
            let (n, p) = (f.count("n"), f.count("p"));
            let scaled = s_op / (n.sqrt() + p.sqrt());
            Margins {
                randomization: scaled / ((s_2inf + 2.0 * t2) / n.sqrt()) / 2.0,
                deterministic: scaled / (2.0 * t2 / n.sqrt()) / 2.0,
            }
        }
        Proposition::Regression => {
            let (s, u, t) = (f.real("s_inf"), f.real("u_plus"), f.real("t"));
            Margins {
                randomization: s * (1.0 - u) / (2.0 * t),
                deterministic: s / (2.0 * t),
            }
        }
        Proposition::Twosample => {
            let (d, t) = (f.real("delta"), f.real("t"));
            let m = d / (2.0 * t);
            Margins {
                randomization: m,
                deterministic: m,
            }
        }
        Proposition::General => {
            let (fs, psi, t, tt) = (f.real("f_s"), f.real("psi"), f.real("t"), f.real("t_tilde"));
            let inv = 1.0 / psi;
            Margins {
                randomization: fs / (inv * inv * tt + inv * (inv + 1.0) * t),
                deterministic: fs / (2.0 * inv * t),
            }
        }
    };
    if !f.missing.is_empty() {
        return Err(Error::config(
            "inputs",
            format!("missing for {prop:?}: {}", f.missing.join(", ")),
        ));
    }
    Ok(margins)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(1e-300)
    }

    #[test]
    fn chi2_shift_values() {
        assert_eq!(chi2_shift_gaussian(0.0), 0.0);
        assert!(close(chi2_shift_gaussian(1.0), std::f64::consts::E - 1.0, 1e-15));
        let small = chi2_shift_gaussian(0.1);
        assert!(close(small, 0.010_050_167_084_168_057, 1e-12));
        assert!((small - 0.01).abs() < 1e-4);
    }

    #[test]
    fn chi2_shift_matches_quadrature() {
        // ∫ φ(z−τ)²/φ(z) dz − 1 by the trapezoid rule on a wide interval
        for tau in [0.3, 1.0, 1.7] {
            let h = 1e-3;
            let mut sum = 0.0;
            let mut z = -20.0;
            while z <= 20.0 {
                let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
                sum += phi(z - tau).powi(2) / phi(z) * h;
                z += h;
            }
            assert!(close(sum - 1.0, chi2_shift_gaussian(tau), 1e-8), "{tau}");
        }
    }

    #[test]
    fn varl_sparse_values() {
        assert_eq!(varl_sparse(5, 4, 0.0).unwrap(), 0.0);
        assert!(close(varl_sparse(1, 1, 0.37).unwrap(), 0.37, 1e-14));
        let v = varl_sparse(5, 4, chi2_shift_gaussian(0.5)).unwrap();
        assert!(close(v, ((1.25f64).exp() - 1.0) / 4.0, 1e-13));
        assert!(close(v, 0.6226, 1e-4));
        assert_eq!(varl_sparse(1000, 4, 2.0).unwrap(), f64::INFINITY);
        assert!(varl_sparse(3, 3, -0.1).is_err());
    }

    #[test]
    fn varl_sparse_monotone() {
        for n in 1..20 {
            for &c in &[0.0, 0.1, 0.5, 2.0] {
                for p in 1..20 {
                    let v = varl_sparse(n, p, c).unwrap();
                    assert!(varl_sparse(n + 1, p, c).unwrap() >= v);
                    assert!(varl_sparse(n, p, c + 0.1).unwrap() >= v);
                    assert!(varl_sparse(n, p + 1, c).unwrap() <= v);
                }
            }
        }
    }

    #[test]
    fn varl_lowrank_values() {
        assert!(close(varl_lowrank_exact(7, 0.0).unwrap(), 1.0, 1e-15));
        assert!(close(varl_lowrank_exact(1, 0.8).unwrap(), (0.32f64).exp(), 1e-15));
        assert!(close(varl_lowrank_exact(2, 1.0).unwrap(), 0.5 + 0.5 * std::f64::consts::E, 1e-15));
        assert!(varl_lowrank_exact(31, 1.0).unwrap_err().to_string().contains("30"));
        for n in 1..=30 {
            assert!(varl_lowrank_exact(n, 0.3).unwrap() > 1.0);
        }
    }

    #[test]
    fn varl_lowrank_matches_pair_enumeration() {
        for n in 1..=10usize {
            let tau: f64 = 0.9;
            // tally pairs by overlap with exact integer counts, then sum
            let mut tally = vec![0u64; n + 1];
            for a in 0..(1u32 << n) {
                for b in 0..(1u32 << n) {
                    tally[(a ^ b).count_ones() as usize] += 1;
                }
            }
            let total: f64 = tally
                .iter()
                .enumerate()
                .map(|(d, &c)| {
                    let inner = (n as f64 - 2.0 * d as f64) / n as f64;
                    c as f64 * (n as f64 * tau * tau / 2.0 * inner * inner).exp()
                })
                .sum();
            let want = total / 4f64.powi(n as i32);
            let got = varl_lowrank_exact(n, tau).unwrap();
            assert!(close(got, want, 1e-12), "n={n} {got} {want}");
        }
    }

    #[test]
    fn detection_threshold_closed_form() {
        for (n, p) in [(50, 100), (200, 1000), (1000, 10_000)] {
            let tau = sparse_detection_threshold(n, p).unwrap();
            let want = ((p as f64 + 1.0).ln() / n as f64).sqrt();
            assert!(close(tau, want, 1e-10));
        }
    }

    #[test]
    fn bernoulli_identity_and_zero() {
        let x = DataMatrix::identity(6);
        let mut rng = RngStream::new(5, 0);
        let b = bernoulli_bound_regression(&x, &[1.0; 6], 3.0, 200, &mut rng).unwrap();
        assert!(close(b.b_estimate, 1.0, 1e-12));
        assert!(close(b.r_value, 1.0, 1e-12));
        assert!(close(b.u_plus, 4.0, 1e-12));
        let z = bernoulli_bound_regression(&x, &[0.0; 6], 3.0, 200, &mut rng).unwrap();
        assert_eq!((z.b_estimate, z.r_value, z.u_plus), (0.0, 0.0, 0.0));
        let d = bernoulli_bound_design(&x, 2.0, 200, &mut rng).unwrap();
        assert!(close(d.b_estimate, 1.0, 1e-12));
        assert!(close(d.u_plus, 1.0 + 2.0 * d.r_value, 1e-12));
        assert!(bernoulli_bound_regression(&x, &[1.0; 5], 3.0, 200, &mut rng).is_err());
        assert!(bernoulli_bound_design(&x, 2.0, 50, &mut rng).is_err());
    }

    #[test]
    fn bernoulli_design_single_column() {
        let col: Vec<f64> = (0..5).map(|i| 0.5 + i as f64).collect();
        let x = DataMatrix::column(&col).unwrap();
        let pinv = pseudo_inverse(&x);
        let mut rng = RngStream::new(9, 0);
        let bound = bernoulli_bound_design(&x, 1.0, 400, &mut rng).unwrap();
        let mut replay = RngStream::new(9, 0);
        let mut total = 0.0;
        for _ in 0..400 {
            let b: Vec<f64> = (0..5).map(|_| replay.rademacher()).collect();
            // sup over w ∈ {±1} of bᵀ·diag(X†)·X·w
            let inner: f64 = (0..5).map(|i| b[i] * pinv[(0, i)] * col[i]).sum();
            total += [1.0, -1.0].iter().map(|w| inner * w).fold(f64::MIN, f64::max);
        }
        assert!(close(bound.b_estimate, total / 400.0, 1e-12));
    }

    #[test]
    fn bernoulli_design_scale_invariant() {
        let mut g = RngStream::new(11, 0);
        let x = DataMatrix::from_fn(30, 4, |_, _| g.normal());
        let a = bernoulli_bound_design(&x, 5.0, 500, &mut RngStream::new(1, 1)).unwrap();
        let b = bernoulli_bound_design(&x.scale(2.0), 5.0, 500, &mut RngStream::new(1, 1)).unwrap();
        assert!(close(a.b_estimate, b.b_estimate, 1e-10));
        assert!(close(a.r_value, b.r_value, 1e-10));
    }

    #[test]
    fn bernoulli_se_shrinks() {
        let mut g = RngStream::new(12, 0);
        let x = DataMatrix::from_fn(40, 5, |_, _| g.normal());
        let eps: Vec<f64> = (0..40).map(|_| g.normal().abs()).collect();
        let small = bernoulli_bound_regression(&x, &eps, 5.0, 1000, &mut RngStream::new(2, 0)).unwrap();
        let large = bernoulli_bound_regression(&x, &eps, 5.0, 4000, &mut RngStream::new(2, 1)).unwrap();
        let ratio = small.mc_standard_error / large.mc_standard_error;
        assert!((ratio - 2.0).abs() < 0.3, "{ratio}");
    }

    #[test]
    fn bernoulli_regression_covers_fresh_noise() {
        let mut g = RngStream::new(13, 0);
        let x = DataMatrix::from_fn(50, 10, |_, _| g.normal());
        let pinv = pseudo_inverse(&x);
        let eps: Vec<f64> = (0..50).map(|_| g.normal()).collect();
        let abs: Vec<f64> = eps.iter().map(|e| e.abs()).collect();
        let bound = bernoulli_bound_regression(&x, &abs, 5.0, 2000, &mut g).unwrap();
        let mut covered = 0;
        for _ in 0..1000 {
            let e: Vec<f64> = abs.iter().map(|a| a * g.rademacher()).collect();
            let est = pinv.matmul(&DataMatrix::column(&e).unwrap()).unwrap();
            if est.max_abs() <= bound.u_plus {
                covered += 1;
            }
        }
        assert!(covered >= 900, "{covered}");
    }

    #[test]
    fn margins() {
        let sign = ConsistencyInputs {
            s_inf: Some(4.0),
            t: Some(1.0),
            ..Default::default()
        };
        assert_eq!(consistency_margin(Proposition::SparseSignflip, &sign).unwrap().randomization, 2.0);
        let edge = ConsistencyInputs {
            s_inf: Some(3.0),
            t: Some(1.5),
            ..Default::default()
        };
        assert_eq!(consistency_margin(Proposition::SparseSignflip, &edge).unwrap().randomization, 1.0);

        let rot = ConsistencyInputs {
            s_inf: Some(3.0),
            s_2: Some(3.0),
            t2: Some(10.0),
            p: Some(100),
            ..Default::default()
        };
        let m = consistency_margin(Proposition::SparseRotation, &rot).unwrap();
        let want = (3.0 / (2.0 * 100f64.ln()).sqrt()) / (23.0 / 10.0);
        assert!(close(m.randomization, want, 1e-14));
        assert!(close(m.randomization, 0.429_790, 1e-5));
        assert!(m.deterministic > m.randomization);

        let gen = ConsistencyInputs {
            f_s: Some(6.0),
            psi: Some(1.0),
            t: Some(1.0),
            t_tilde: Some(1.0),
            ..Default::default()
        };
        let g = consistency_margin(Proposition::General, &gen).unwrap();
        assert_eq!((g.randomization, g.deterministic), (2.0, 3.0));
    }

    #[test]
    fn margin_missing_fields_listed() {
        let err = consistency_margin(Proposition::Lowrank, &ConsistencyInputs::default()).unwrap_err();
        let msg = err.to_string();
        for name in ["s_op", "s_2inf", "t2", "n", "p"] {
            assert!(msg.contains(name), "{msg}");
        }
        let neg = ConsistencyInputs {
            t: Some(-1.0),
            ..Default::default()
        };
        assert!(consistency_margin(Proposition::Twosample, &neg).is_err());
    }

    #[test]
    fn proposition_names() {
        assert_eq!(Proposition::parse("sparse_rotation").unwrap(), Proposition::SparseRotation);
        assert_eq!(Proposition::parse("sparse-signflip").unwrap(), Proposition::SparseSignflip);
        assert!(Proposition::parse("bogus").is_err());
    }
}
