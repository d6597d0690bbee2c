//! Noise samplers and deterministic signal constructors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{DataMatrix, RngStream};

/// Radial law of a spherical vector, named by the spherical family it yields.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum RadialLaw {
    /// `‖Z‖² ~ χ²_p`.
    Normal,
    /// Multivariate t: `‖Z‖² ~ p · F_{p,d}`.
    StudentT { df: f64 },
    /// Multivariate Cauchy, the `d = 1` case of the multivariate t.
    Cauchy,
}

/// Which slices of the matrix are independent spherical vectors.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SphericalUnit {
    #[default]
    Rows,
    Columns,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum BaseLaw {
    Normal,
    StudentT { df: f64 },
}

impl Default for BaseLaw {
    fn default() -> Self {
        BaseLaw::StudentT { df: 3.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseFamily {
    IidNormal,
    IidStudent {
        df: f64,
    },
    IidCauchy,
    Spherical {
        radial: RadialLaw,
        #[serde(default)]
        unit: SphericalUnit,
    },
    /// Row `i` is `σ_i · b_i · |V_i|` with a Rademacher sign `b_i`. Without
    /// explicit scales, `σ_i = 1 + (i−1)/n`.
    HeteroskedasticSignSymmetric {
        #[serde(default)]
        scales: Option<Vec<f64>>,
        #[serde(default)]
        base: BaseLaw,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSpec {
    pub family: NoiseFamily,
    pub n: usize,
    pub p: usize,
}

fn check_df(df: f64) -> Result<()> {
    if df > 0.0 && df.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("degrees of freedom must be positive, got {df}")))
    }
}

impl NoiseSpec {
    pub fn new(family: NoiseFamily, n: usize, p: usize) -> Result<Self> {
        let spec = Self { family, n, p };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 {
            return Err(Error::domain("noise dimensions must be at least 1"));
        }
        match &self.family {
            NoiseFamily::IidStudent { df } => check_df(*df),
            NoiseFamily::Spherical {
                radial: RadialLaw::StudentT { df },
                ..
            } => check_df(*df),
            NoiseFamily::HeteroskedasticSignSymmetric { scales, base } => {
                if let BaseLaw::StudentT { df } = base {
                    check_df(*df)?;
                }
                match scales {
                    Some(s) if s.len() != self.n => Err(Error::dims(format!(
                        "{} scales for {} rows",
                        s.len(),
                        self.n
                    ))),
                    Some(s) if s.iter().any(|v| !(*v > 0.0 && v.is_finite())) => {
                        Err(Error::domain("scales must be positive and finite"))
                    }
                    _ => Ok(()),
                }
            }
            _ => Ok(()),
        }
    }

    /// Short label such as `normal`, `t3`, `spherical_t3`.
    pub fn label(&self) -> String {
        fn num(v: f64) -> String {
            if v.fract() == 0.0 {
                format!("{}", v as i64)
            } else {
                format!("{v}")
            }
        }
        match &self.family {
            NoiseFamily::IidNormal => "normal".into(),
            NoiseFamily::IidStudent { df } => format!("t{}", num(*df)),
            NoiseFamily::IidCauchy => "cauchy".into(),
            NoiseFamily::Spherical { radial, .. } => match radial {
                RadialLaw::Normal => "spherical_normal".into(),
                RadialLaw::StudentT { df } => format!("spherical_t{}", num(*df)),
                RadialLaw::Cauchy => "spherical_cauchy".into(),
            },
            NoiseFamily::HeteroskedasticSignSymmetric { .. } => "heteroskedastic".into(),
        }
    }
}

fn sphere_vector(len: usize, radial: RadialLaw, rng: &mut RngStream) -> Vec<f64> {
    let z: Vec<f64> = (0..len).map(|_| rng.normal()).collect();
    let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    let dim = len as f64;
    let radius_sq = match radial {
        RadialLaw::Normal => rng.chi_squared(dim),
        RadialLaw::StudentT { df } => dim * rng.f_ratio(dim, df),
        RadialLaw::Cauchy => dim * rng.f_ratio(dim, 1.0),
    };
    let s = radius_sq.sqrt() / norm;
    z.into_iter().map(|v| v * s).collect()
}

/// Draws an `n × p` noise matrix.
pub fn sample_noise(spec: &NoiseSpec, rng: &mut RngStream) -> Result<DataMatrix> {
    spec.validate()?;
    let (n, p) = (spec.n, spec.p);
    let m = match &spec.family {
        NoiseFamily::IidNormal => DataMatrix::from_fn(n, p, |_, _| rng.normal()),
        NoiseFamily::IidStudent { df } => DataMatrix::from_fn(n, p, |_, _| rng.student_t(*df)),
        NoiseFamily::IidCauchy => DataMatrix::from_fn(n, p, |_, _| rng.student_t(1.0)),
        NoiseFamily::Spherical { radial, unit } => match unit {
            SphericalUnit::Rows => {
                let rows: Vec<Vec<f64>> = (0..n).map(|_| sphere_vector(p, *radial, rng)).collect();
                DataMatrix::from_fn(n, p, |i, j| rows[i][j])
            }
            SphericalUnit::Columns => {
                let cols: Vec<Vec<f64>> = (0..p).map(|_| sphere_vector(n, *radial, rng)).collect();
                DataMatrix::from_fn(n, p, |i, j| cols[j][i])
            }
        },
        NoiseFamily::HeteroskedasticSignSymmetric { scales, base } => {
            let sigma: Vec<f64> = match scales {
                Some(s) => s.clone(),
                None => (0..n).map(|i| 1.0 + i as f64 / n as f64).collect(),
            };
            let mut out = Vec::with_capacity(n * p);
            for s in &sigma {
                let b = rng.rademacher();
                for _ in 0..p {
                    let v = match base {
                        BaseLaw::Normal => rng.normal(),
                        BaseLaw::StudentT { df } => rng.student_t(*df),
                    };
                    out.push(s * b * v.abs());
                }
            }
            DataMatrix::new(n, p, &out)?
        }
    };
    Ok(m)
}

/// Deterministic signal description. Support indices are zero-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalSpec {
    /// `p × 1` vector with `mu` on the support.
    SparseVector { mu: f64, support: Vec<usize>, p: usize },
    /// `√(n/2) · τ · left · rightᵀ`, an `n × p` matrix with `n = left.len()`.
    RankOne { tau: f64, left: Vec<f64>, right: Vec<f64> },
    /// Regression coefficient: `p × 1` vector with `tau` on the support.
    RegressionBeta { tau: f64, support: Vec<usize>, p: usize },
}

fn sparse(value: f64, support: &[usize], p: usize) -> Result<DataMatrix> {
    if p == 0 {
        return Err(Error::domain("signal dimension must be at least 1"));
    }
    let mut v = vec![0.0; p];
    for &i in support {
        if i >= p {
            return Err(Error::domain(format!("support index {i} out of range for dimension {p}")));
        }
        v[i] = value;
    }
    DataMatrix::column(&v)
}

pub fn build_signal(spec: &SignalSpec) -> Result<DataMatrix> {
    match spec {
        SignalSpec::SparseVector { mu, support, p } => sparse(*mu, support, *p),
        SignalSpec::RegressionBeta { tau, support, p } => sparse(*tau, support, *p),
        SignalSpec::RankOne { tau, left, right } => {
            if left.is_empty() || right.is_empty() {
                return Err(Error::domain("rank-one factors must be non-empty"));
            }
            let c = (left.len() as f64 / 2.0).sqrt() * tau;
            DataMatrix::from_matrix(nalgebra::DMatrix::from_fn(left.len(), right.len(), |i, j| {
                c * left[i] * right[j]
            }))
        }
    }
}
