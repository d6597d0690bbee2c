//! Test statistics and their subadditivity constants.
//!
//! A statistic `f` is ψ-subadditive when `ψ·f(a+b) ≤ f(a) + f(b)` for all
//! `a, b`. Every statistic shipped here is a norm, a seminorm, or a supremum
//! of linear functionals, so ψ = 1. The constant is carried explicitly
//! because the consistency margins in [`crate::theory`] depend on it.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{operator_norm, pseudo_inverse, singular_values, DataMatrix, RngStream};

/// Norm applied to the difference of sample means.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffNorm {
    Linf,
    L2,
}

/// Fixed regression design with its cached pseudo-inverse.
#[derive(Clone, Debug)]
pub struct OlsContext {
    design: DataMatrix,
    pinv: DataMatrix,
}

impl OlsContext {
    pub fn new(design: DataMatrix) -> Self {
        let pinv = pseudo_inverse(&design);
        Self { design, pinv }
    }

    pub fn design(&self) -> &DataMatrix {
        &self.design
    }

    /// `X†`, of shape `p × n`.
    pub fn pinv(&self) -> &DataMatrix {
        &self.pinv
    }
}

type CustomFn = Arc<dyn Fn(&DataMatrix) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Kind {
    ColMeanLinf,
    ColMeanMax,
    Linf,
    OpNorm,
    KyFan { kappa: usize, zeta: f64 },
    OlsLinf(Arc<OlsContext>),
    TwoSampleDiff { n1: usize, n2: usize, norm: DiffNorm },
    Custom(CustomFn),
}

/// A named real-valued functional of a [`DataMatrix`] with its ψ constant.
#[derive(Clone)]
pub struct TestStatistic {
    name: String,
    psi: f64,
    kind: Kind,
}

impl fmt::Debug for TestStatistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestStatistic")
            .field("name", &self.name)
            .field("psi", &self.psi)
            .finish()
    }
}

impl TestStatistic {
    fn builtin(name: &str, kind: Kind) -> Self {
        Self {
            name: name.to_string(),
            psi: 1.0,
            kind,
        }
    }

    /// `n⁻¹ ‖1ᵀX‖_∞`, the largest absolute column mean.
    pub fn colmean_linf() -> Self {
        Self::builtin("colmean_linf", Kind::ColMeanLinf)
    }

    /// `max_j n⁻¹ (1ᵀX)_j`, the largest signed column mean. A supremum of
    /// linear functionals that, unlike the absolute version, is not invariant
    /// under a global sign flip, so signflip orbits of generic data have
    /// pairwise distinct values.
    pub fn colmean_max() -> Self {
        Self::builtin("colmean_max", Kind::ColMeanMax)
    }

    /// Largest absolute entry.
    pub fn linf() -> Self {
        Self::builtin("linf", Kind::Linf)
    }

    pub fn opnorm() -> Self {
        Self::builtin("opnorm", Kind::OpNorm)
    }

    pub fn kyfan(kappa: usize, zeta: f64) -> Result<Self> {
        if kappa == 0 {
            return Err(Error::domain("Ky Fan order must be at least 1"));
        }
        if !(zeta >= 1.0 && zeta.is_finite()) {
            return Err(Error::domain(format!("Ky Fan exponent must be >= 1, got {zeta}")));
        }
        Ok(Self::builtin("kyfan", Kind::KyFan { kappa, zeta }))
    }

    /// `‖X†Y‖_∞` against a fixed design.
    pub fn ols_linf(design: DataMatrix) -> Self {
        Self::ols_linf_with(Arc::new(OlsContext::new(design)))
    }

    pub fn ols_linf_with(ctx: Arc<OlsContext>) -> Self {
        Self::builtin("ols_linf", Kind::OlsLinf(ctx))
    }

    pub fn twosample_diff(n1: usize, n2: usize, norm: DiffNorm) -> Result<Self> {
        if n1 == 0 || n2 == 0 {
            return Err(Error::domain("both samples need at least one row"));
        }
        Ok(Self::builtin("twosample_diff", Kind::TwoSampleDiff { n1, n2, norm }))
    }

    /// Wraps an arbitrary function with a claimed ψ.
    pub fn custom(
        name: impl Into<String>,
        psi: f64,
        f: impl Fn(&DataMatrix) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            psi,
            kind: Kind::Custom(Arc::new(f)),
        }
    }

    /// Parses the statistic names accepted on the command line. `kyfan`
    /// takes its parameters as `kyfan:<kappa>:<zeta>`.
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "colmean_linf" => Ok(Self::colmean_linf()),
            "colmean_max" => Ok(Self::colmean_max()),
            "linf" => Ok(Self::linf()),
            "opnorm" => Ok(Self::opnorm()),
            other => {
                if let Some(rest) = other.strip_prefix("kyfan:") {
                    let mut parts = rest.split(':');
                    let kappa = parts.next().and_then(|s| s.parse().ok());
                    let zeta = parts.next().and_then(|s| s.parse().ok());
                    if let (Some(k), Some(z), None) = (kappa, zeta, parts.next()) {
                        return Self::kyfan(k, z);
                    }
                }
                Err(Error::config(
                    "stat",
                    format!("unknown statistic `{other}` (expected colmean_linf, colmean_max, linf, opnorm, kyfan:K:ZETA)"),
                ))
            }
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn psi(&self) -> f64 {
        self.psi
    }

    pub fn eval(&self, x: &DataMatrix) -> Result<f64> {
        match &self.kind {
            Kind::ColMeanLinf => Ok(stat_colmean_linf(x)),
            Kind::ColMeanMax => Ok(stat_colmean_max(x)),
            Kind::Linf => Ok(stat_linf(x)),
            Kind::OpNorm => Ok(stat_opnorm(x)),
            Kind::KyFan { kappa, zeta } => stat_kyfan(x, *kappa, *zeta),
            Kind::OlsLinf(ctx) => stat_ols_linf(x, ctx),
            Kind::TwoSampleDiff { n1, n2, norm } => stat_twosample_diff(x, *n1, *n2, *norm),
            Kind::Custom(f) => Ok(f(x)),
        }
    }
}

pub fn stat_colmean_linf(x: &DataMatrix) -> f64 {
    x.column_means().into_iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn stat_colmean_max(x: &DataMatrix) -> f64 {
    x.column_means()
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn stat_linf(x: &DataMatrix) -> f64 {
    x.max_abs()
}

pub fn stat_opnorm(x: &DataMatrix) -> f64 {
    operator_norm(x)
}

/// `(Σ_{i≤κ} σ_i^ζ)^{1/ζ}` over the κ largest singular values.
pub fn stat_kyfan(x: &DataMatrix, kappa: usize, zeta: f64) -> Result<f64> {
    let r = x.rows().min(x.cols());
    if kappa == 0 || kappa > r {
        return Err(Error::domain(format!("Ky Fan order {kappa} outside 1..={r}")));
    }
    if kappa == 1 {
        return Ok(operator_norm(x));
    }
    let s = singular_values(x);
    let top = s[0];
    if top == 0.0 {
        return Ok(0.0);
    }
    // scale by σ_1 so large ζ cannot overflow
    let sum: f64 = s[..kappa].iter().map(|v| (v / top).powf(zeta)).sum();
    Ok(top * sum.powf(1.0 / zeta))
}

pub fn stat_ols_linf(y: &DataMatrix, ctx: &OlsContext) -> Result<f64> {
    if y.rows() != ctx.pinv.cols() || !y.is_vector() {
        return Err(Error::dims(format!(
            "response of shape {:?} for a design with {} rows",
            y.shape(),
            ctx.pinv.cols()
        )));
    }
    Ok(ctx.pinv.matmul(y)?.max_abs())
}

/// Norm of (mean of the first `n1` rows − mean of the last `n2` rows).
pub fn stat_twosample_diff(x: &DataMatrix, n1: usize, n2: usize, norm: DiffNorm) -> Result<f64> {
    if n1 == 0 || n2 == 0 || x.rows() != n1 + n2 {
        return Err(Error::dims(format!(
            "{} rows do not split into samples of {n1} and {n2}",
            x.rows()
        )));
    }
    let m = x.as_matrix();
    let diffs = (0..x.cols()).map(|j| {
        let col = m.column(j);
        let a: f64 = col.rows(0, n1).sum() / n1 as f64;
        let b: f64 = col.rows(n1, n2).sum() / n2 as f64;
        a - b
    });
    Ok(match norm {
        DiffNorm::Linf => diffs.fold(0.0, |acc, d| acc.max(d.abs())),
        DiffNorm::L2 => diffs.map(|d| d * d).sum::<f64>().sqrt(),
    })
}

/// Counts sampled pairs `(a, b)` of iid Gaussian matrices (entries with
/// standard deviation `scale`) where `ψ·f(a+b) > f(a) + f(b)` beyond a
/// relative rounding slack.
pub fn check_psi_subadditive(
    f: &TestStatistic,
    shape: (usize, usize),
    trials: usize,
    scale: f64,
    rng: &mut RngStream,
) -> Result<usize> {
    let (n, p) = shape;
    let mut violations = 0;
    for _ in 0..trials {
        let a = DataMatrix::from_fn(n, p, |_, _| scale * rng.normal());
        let b = DataMatrix::from_fn(n, p, |_, _| scale * rng.normal());
        let fa = f.eval(&a)?;
        let fb = f.eval(&b)?;
        let fab = f.eval(&a.add(&b)?)?;
        if f.psi() * fab > fa + fb + 1e-12 * (fa.abs() + fb.abs() + 1.0) {
            violations += 1;
        }
    }
    Ok(violations)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[Vec<f64>]) -> DataMatrix {
        DataMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn colmean_linf_cases() {
        assert_eq!(stat_colmean_linf(&m(&[vec![1.0, 2.0], vec![3.0, 4.0]])), 3.0);
        assert_eq!(stat_colmean_linf(&DataMatrix::zeros(3, 4)), 0.0);
        assert_eq!(stat_colmean_linf(&m(&[vec![1.0, -7.0, 2.0]])), 7.0);
    }

    #[test]
    fn colmean_linf_of_repeated_signal() {
        let s = [0.5, -2.25, 1.0];
        let x = DataMatrix::from_fn(8, 3, |_, j| s[j]);
        assert_eq!(stat_colmean_linf(&x), 2.25);
    }

    #[test]
    fn colmean_max_is_signed() {
        let x = m(&[vec![1.0, -5.0], vec![3.0, -5.0]]);
        assert_eq!(stat_colmean_max(&x), 2.0);
        assert_eq!(stat_colmean_max(&x.scale(-1.0)), 5.0);
    }

    #[test]
    fn linf_cases() {
        assert_eq!(stat_linf(&DataMatrix::column(&[1.0, -4.0, 2.0]).unwrap()), 4.0);
        assert_eq!(stat_linf(&DataMatrix::zeros(3, 1)), 0.0);
    }

    #[test]
    fn kyfan_reductions() {
        let d = DataMatrix::diagonal(&[3.0, 2.0, 1.0]).unwrap();
        assert!((stat_kyfan(&d, 2, 1.0).unwrap() - 5.0).abs() < 1e-12);

        let mut rng = RngStream::new(1, 0);
        let x = DataMatrix::from_fn(5, 3, |_, _| rng.normal());
        assert!((stat_kyfan(&x, 1, 3.0).unwrap() - stat_opnorm(&x)).abs() < 1e-10);
        assert!((stat_kyfan(&x, 3, 2.0).unwrap() - x.frobenius_norm()).abs() < 1e-9);

        assert!(stat_kyfan(&x, 4, 1.0).is_err());
        assert!(stat_kyfan(&x, 0, 1.0).is_err());
        assert!(TestStatistic::kyfan(2, 0.5).is_err());
    }

    #[test]
    fn ols_identity_design_and_zero_response() {
        let ctx = OlsContext::new(DataMatrix::identity(4));
        let y = DataMatrix::column(&[0.5, -3.0, 1.0, 2.0]).unwrap();
        assert!((stat_ols_linf(&y, &ctx).unwrap() - 3.0).abs() < 1e-14);
        assert_eq!(stat_ols_linf(&DataMatrix::zeros(4, 1), &ctx).unwrap(), 0.0);
        assert!(stat_ols_linf(&DataMatrix::zeros(5, 1), &ctx).is_err());
    }

    #[test]
    fn twosample_cases() {
        let same = m(&[vec![1.0, 2.0], vec![3.0, 1.0], vec![1.0, 2.0], vec![3.0, 1.0]]);
        assert_eq!(stat_twosample_diff(&same, 2, 2, DiffNorm::Linf).unwrap(), 0.0);

        let x = m(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0], vec![0.0, 1.0]]);
        assert_eq!(stat_twosample_diff(&x, 2, 3, DiffNorm::Linf).unwrap(), 1.0);
        assert!((stat_twosample_diff(&x, 2, 3, DiffNorm::L2).unwrap() - 2f64.sqrt()).abs() < 1e-15);

        // swapping blocks leaves the norm unchanged
        let swapped = m(&[vec![0.0, 1.0], vec![0.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 0.0]]);
        assert_eq!(stat_twosample_diff(&swapped, 3, 2, DiffNorm::Linf).unwrap(), 1.0);

        assert!(stat_twosample_diff(&x, 2, 2, DiffNorm::Linf).is_err());
    }

    #[test]
    fn subadditivity_of_norms_and_controls() {
        let mut rng = RngStream::new(2, 0);
        let stats = [TestStatistic::linf(), TestStatistic::colmean_linf(), TestStatistic::opnorm()];
        for f in &stats {
            assert_eq!(check_psi_subadditive(f, (4, 3), 2000, 1.0, &mut rng).unwrap(), 0);
        }
        let sq = |x: &DataMatrix| x.frobenius_norm().powi(2);
        let bad = TestStatistic::custom("sq_l2", 1.0, sq);
        assert!(check_psi_subadditive(&bad, (3, 1), 2000, 1.0, &mut rng).unwrap() > 0);
        let good = TestStatistic::custom("sq_l2_half", 0.5, sq);
        assert_eq!(check_psi_subadditive(&good, (3, 1), 2000, 1.0, &mut rng).unwrap(), 0);
    }

    #[test]
    fn parse_names() {
        assert_eq!(TestStatistic::parse("opnorm").unwrap().name(), "opnorm");
        assert_eq!(TestStatistic::parse("kyfan:2:1.5").unwrap().name(), "kyfan");
        assert!(TestStatistic::parse("kyfan:2").is_err());
        assert!(TestStatistic::parse("median").is_err());
    }
}
