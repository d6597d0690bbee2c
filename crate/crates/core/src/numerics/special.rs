use std::f64::consts::{PI, SQRT_2};

use statrs::function::beta::beta_reg;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

// Acklam's rational approximation, relative error ~1.15e-9 before refinement.
const A: [f64; 6] = [
    -3.969_683_028_665_376e1,
    2.209_460_984_245_205e2,
    -2.759_285_104_469_687e2,
    1.383_577_518_672_69e2,
    -3.066_479_806_614_716e1,
    2.506_628_277_459_239,
];
const B: [f64; 5] = [
    -5.447_609_879_822_406e1,
    1.615_858_368_580_409e2,
    -1.556_989_798_598_866e2,
    6.680_131_188_771_972e1,
    -1.328_068_155_288_572e1,
];
const C: [f64; 6] = [
    -7.784_894_002_430_293e-3,
    -3.223_964_580_411_365e-1,
    -2.400_758_277_161_838,
    -2.549_732_539_343_734,
    4.374_664_141_464_968,
    2.938_163_982_698_783,
];
const D: [f64; 4] = [
    7.784_695_709_041_462e-3,
    3.224_671_290_700_398e-1,
    2.445_134_137_142_996,
    3.754_408_661_907_416,
];
const P_LOW: f64 = 0.02425;

fn acklam(u: f64) -> f64 {
    if u < P_LOW {
        let q = (-2.0 * u.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if u <= 1.0 - P_LOW {
        let q = u - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - u).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

/// Standard normal quantile `Φ⁻¹(u)` for `u ∈ (0, 1)`.
///
/// Acklam's approximation followed by one Halley step against an
/// `erfc`-based CDF.
pub fn normal_quantile(u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::domain(format!("normal quantile needs u in (0,1), got {u}")));
    }
    if u == 0.5 {
        return Ok(0.0);
    }
    let x = acklam(u);
    // work in the tail nearest to u to keep the residual accurate
    let e = if u < 0.5 {
        normal_cdf(x) - u
    } else {
        (1.0 - u) - normal_cdf(-x)
    };
    let step = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
    Ok(x - step / (1.0 + 0.5 * x * step))
}

fn student_t_density(t: f64, df: f64) -> f64 {
    let ln_c = ln_gamma(0.5 * (df + 1.0)) - ln_gamma(0.5 * df) - 0.5 * (df * PI).ln();
    (ln_c - 0.5 * (df + 1.0) * (t * t / df).ln_1p()).exp()
}

/// Student-t CDF with `df > 0` degrees of freedom, via the regularized
/// incomplete beta function.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 0.5;
    }
    let x = df / (df + t * t);
    let tail = 0.5 * beta_reg(0.5 * df, 0.5, x);
    if t > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Upper-tail probability `P(T > t)` for `t > 0`, without cancellation.
fn student_t_upper(t: f64, df: f64) -> f64 {
    0.5 * beta_reg(0.5 * df, 0.5, df / (df + t * t))
}

/// Student-t quantile: safeguarded Newton iteration on the CDF.
pub fn student_t_quantile(u: f64, df: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::domain(format!("t quantile needs u in (0,1), got {u}")));
    }
    if !(df >= 1.0 && df.is_finite()) {
        return Err(Error::domain(format!("t quantile needs df >= 1, got {df}")));
    }
    if u == 0.5 {
        return Ok(0.0);
    }
    // Solve P(T > t) = q for t > 0 and restore the sign by symmetry.
    let q = u.min(1.0 - u);
    let sign = if u > 0.5 { 1.0 } else { -1.0 };

    let mut lo = 0.0_f64;
    let mut hi = normal_quantile(1.0 - q)?.max(1.0);
    while student_t_upper(hi, df) > q {
        lo = hi;
        hi *= 2.0;
    }
    let mut t = 0.5 * (lo + hi);
    for _ in 0..200 {
        let resid = student_t_upper(t, df) - q; // decreasing in t
        if resid > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let dens = student_t_density(t, df);
        let mut next = t + resid / dens;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - t).abs() <= 1e-14 * t.abs().max(1.0) {
            t = next;
            break;
        }
        t = next;
    }
    Ok(sign * t)
}
