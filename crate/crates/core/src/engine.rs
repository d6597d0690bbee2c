//! The randomization test.
//!
//! Given data `X`, a statistic `f` and an invariance group, draw `G_1..G_K`
//! from the Haar measure, form the multiset `{f(X), f(G_1 X), …, f(G_K X)}`
//! (the identity is included exactly once) and reject when `f(X)` is
//! strictly larger than its `k`-th smallest element, `k = ⌈(1−α)(K+1)⌉`.
//! Under group-invariant noise the test has level at most α.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::groups::{apply_action, GroupAction, GroupElement, GroupKind};
use crate::numerics::{DataMatrix, RngStream};
use crate::statistics::TestStatistic;

const MAX_SIGNFLIP_ROWS: usize = 16;
const MAX_PERMUTATIONS: usize = 40_000;
const MAX_GRAM_CONDITION: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    /// Compare against the `⌈(1−α)(K+1)⌉`-th order statistic.
    Quantile,
    /// Compare against the largest randomized value (level `1/(K+1)`).
    Max,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RandTestConfig {
    draws: usize,
    alpha: f64,
    variant: Variant,
}

impl RandTestConfig {
    /// Quantile variant with `draws = K` random transforms at level `alpha`.
    pub fn new(draws: usize, alpha: f64) -> Result<Self> {
        order_index(draws, alpha)?;
        Ok(Self {
            draws,
            alpha,
            variant: Variant::Quantile,
        })
    }

    pub fn max(draws: usize) -> Result<Self> {
        if draws == 0 {
            return Err(Error::domain("K must be at least 1"));
        }
        Ok(Self {
            draws,
            alpha: 1.0 / (draws as f64 + 1.0),
            variant: Variant::Max,
        })
    }

    pub fn draws(&self) -> usize {
        self.draws
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    /// Index `k` of the order statistic the observed value must exceed.
    pub fn order_index(&self) -> usize {
        match self.variant {
            Variant::Quantile => order_index(self.draws, self.alpha).expect("validated"),
            Variant::Max => self.draws,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RandTestOutcome {
    pub t0: f64,
    pub randomized: Vec<f64>,
    pub k: usize,
    pub reject: bool,
    /// `(1 + #{i : randomized_i ≥ t0}) / (K+1)`.
    pub p_value: f64,
}

/// `k = ⌈(1−α)(K+1)⌉`.
///
/// Products within `1e-9` of an integer are taken as that integer, so decimal
/// levels such as 0.05 give the exact rational answer despite rounding.
pub fn order_index(draws: usize, alpha: f64) -> Result<usize> {
    if draws == 0 {
        return Err(Error::domain("K must be at least 1"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("alpha must lie in (0,1), got {alpha}")));
    }
    let v = (1.0 - alpha) * (draws as f64 + 1.0);
    let nearest = v.round();
    let k = if (v - nearest).abs() <= 1e-9 * v.max(1.0) {
        nearest
    } else {
        v.ceil()
    };
    Ok((k as usize).clamp(1, draws + 1))
}

/// Applies the order-statistic rule to an observed value and its randomized
/// counterparts. Returns `(reject, p_value)`.
pub fn decide(t0: f64, randomized: &[f64], k: usize) -> (bool, f64) {
    assert!(k >= 1 && k <= randomized.len() + 1, "order index out of range");
    let mut all = Vec::with_capacity(randomized.len() + 1);
    all.push(t0);
    all.extend_from_slice(randomized);
    let (_, kth, _) = all.select_nth_unstable_by(k - 1, f64::total_cmp);
    let reject = t0 > *kth;
    let exceed = randomized.iter().filter(|&&v| v >= t0).count();
    let p_value = (1 + exceed) as f64 / (randomized.len() + 1) as f64;
    (reject, p_value)
}

/// Randomization test with `cfg.draws()` Haar-random transforms.
pub fn run_randomization_test(
    x: &DataMatrix,
    f: &TestStatistic,
    action: &GroupAction,
    cfg: &RandTestConfig,
    rng: &mut RngStream,
) -> Result<RandTestOutcome> {
    action.check(x)?;
    let t0 = f.eval(x)?;
    let randomized = (0..cfg.draws())
        .map(|_| f.eval(&action.sample_image(x, rng)?))
        .collect::<Result<Vec<f64>>>()?;
    let k = cfg.order_index();
    let (reject, p_value) = decide(t0, &randomized, k);
    Ok(RandTestOutcome {
        t0,
        randomized,
        k,
        reject,
        p_value,
    })
}

/// Rejects iff `f(X)` exceeds every randomized value.
pub fn run_max_test(
    x: &DataMatrix,
    f: &TestStatistic,
    action: &GroupAction,
    draws: usize,
    rng: &mut RngStream,
) -> Result<RandTestOutcome> {
    run_randomization_test(x, f, action, &RandTestConfig::max(draws)?, rng)
}

/// Every element of the group, identity first.
pub fn enumerate_group(kind: GroupKind, n: usize) -> Result<Vec<GroupElement>> {
    match kind {
        GroupKind::SignflipRows => {
            if n > MAX_SIGNFLIP_ROWS {
                return Err(Error::GroupTooLarge(format!(
                    "2^{n} signflips exceed the limit of 2^{MAX_SIGNFLIP_ROWS}"
                )));
            }
            Ok((0u32..1 << n)
                .map(|mask| {
                    GroupElement::Signs(
                        (0..n)
                            .map(|i| if mask >> i & 1 == 1 { -1.0 } else { 1.0 })
                            .collect(),
                    )
                })
                .collect())
        }
        GroupKind::PermuteRows => {
            let size = (1..=n).try_fold(1usize, |acc, i| acc.checked_mul(i).filter(|&v| v <= MAX_PERMUTATIONS));
            if size.is_none() {
                return Err(Error::GroupTooLarge(format!(
                    "{n}! permutations exceed the limit of {MAX_PERMUTATIONS}"
                )));
            }
            let mut perm: Vec<usize> = (0..n).collect();
            let mut out = vec![GroupElement::Permutation(perm.clone())];
            while next_permutation(&mut perm) {
                out.push(GroupElement::Permutation(perm.clone()));
            }
            Ok(out)
        }
        other => Err(Error::domain(format!(
            "{} is a continuous group and cannot be enumerated",
            other.name()
        ))),
    }
}

fn next_permutation(v: &mut [usize]) -> bool {
    let n = v.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Exact-level test over the whole (finite) group. `K + 1` equals the group
/// order and the randomized values are those of the non-identity elements.
pub fn brute_force_full_group_test(
    x: &DataMatrix,
    f: &TestStatistic,
    kind: GroupKind,
    alpha: f64,
) -> Result<RandTestOutcome> {
    let elements = enumerate_group(kind, x.rows())?;
    let t0 = f.eval(x)?;
    let randomized = elements[1..]
        .iter()
        .map(|g| f.eval(&apply_action(g, x)?))
        .collect::<Result<Vec<f64>>>()?;
    if randomized.is_empty() {
        return Err(Error::domain("the trivial group admits no test"));
    }
    let k = order_index(randomized.len(), alpha)?;
    let (reject, p_value) = decide(t0, &randomized, k);
    Ok(RandTestOutcome {
        t0,
        randomized,
        k,
        reject,
        p_value,
    })
}

/// Projects the columns of `x` onto the orthogonal complement of the span of
/// `basis` (a list of length-`n` vectors).
pub fn project_out_nuisance(x: &DataMatrix, basis: &[Vec<f64>]) -> Result<DataMatrix> {
    let n = x.rows();
    if basis.is_empty() {
        return Ok(x.clone());
    }
    if basis.iter().any(|b| b.len() != n) {
        return Err(Error::dims(format!("basis vectors must have length {n}")));
    }
    let b = DMatrix::from_fn(n, basis.len(), |i, j| basis[j][i]);
    let gram = b.transpose() * &b;
    let eig = SymmetricEigen::new(gram.clone()).eigenvalues;
    let (lo, hi) = eig
        .iter()
        .fold((f64::INFINITY, 0.0_f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if lo.is_nan() || lo <= 0.0 || hi / lo > MAX_GRAM_CONDITION {
        return Err(Error::DependentBasis(if lo > 0.0 { hi / lo } else { f64::INFINITY }));
    }
    let chol = gram.cholesky().ok_or(Error::DependentBasis(f64::INFINITY))?;
    let coef = chol.solve(&(b.transpose() * x.as_matrix()));
    DataMatrix::from_matrix(x.as_matrix() - b * coef)
}
