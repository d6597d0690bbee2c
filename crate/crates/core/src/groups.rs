//! Invariance groups: samplers for Haar-random elements and their actions on
//! data.
//!
//! Four concrete groups are supported:
//!
//! * `SignflipRows`: diagonal ±1 matrices acting on the rows;
//! * `PermuteRows`: the symmetric group acting on the rows;
//! * `RotateFull`: `O(p)` acting on a `p`-vector, or on every row of an
//!   `n × p` matrix at once (`X ↦ X Oᵀ`);
//! * `RotatePerColumn`: the product `O(n) × … × O(n)`, one independent
//!   rotation per column.
//!
//! A Haar rotation applied to a fixed vector `x` has the law of
//! `‖x‖ · Z/‖Z‖` with `Z` standard Gaussian. Whenever only the image of the
//! data is needed (which is all the randomization test needs), the
//! continuous groups use that shortcut instead of materializing `O`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{qr_orthonormalize, DataMatrix, RngStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKind {
    #[serde(alias = "signflip")]
    SignflipRows,
    #[serde(alias = "permutation", alias = "permute")]
    PermuteRows,
    #[serde(alias = "rotation", alias = "rotate")]
    RotateFull,
    #[serde(alias = "column_rotation")]
    RotatePerColumn,
}

impl GroupKind {
    pub fn name(self) -> &'static str {
        match self {
            GroupKind::SignflipRows => "signflip",
            GroupKind::PermuteRows => "permutation",
            GroupKind::RotateFull => "rotation",
            GroupKind::RotatePerColumn => "column_rotation",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "signflip" | "signflip_rows" => Some(GroupKind::SignflipRows),
            "permutation" | "permute" | "permute_rows" => Some(GroupKind::PermuteRows),
            "rotation" | "rotate" | "rotate_full" => Some(GroupKind::RotateFull),
            "column_rotation" | "rotate_per_column" => Some(GroupKind::RotatePerColumn),
            _ => None,
        }
    }

    pub fn is_discrete(self) -> bool {
        matches!(self, GroupKind::SignflipRows | GroupKind::PermuteRows)
    }
}

/// A sampled group element.
#[derive(Clone, Debug, PartialEq)]
pub enum GroupElement {
    Identity,
    /// One ±1 sign per row.
    Signs(Vec<f64>),
    /// Row `i` of the image is row `perm[i]` of the input.
    Permutation(Vec<usize>),
    /// A materialized `p × p` orthogonal matrix.
    Orthogonal(DataMatrix),
    /// Lazy per-column rotations: column `j` of the image is column `j` of
    /// this Gaussian matrix, rescaled to the norm of the input column.
    ColumnDirections(DataMatrix),
}

impl GroupElement {
    /// Group product `self · other`, so that applying the product equals
    /// applying `other` first and then `self`. Only the discrete groups
    /// compose.
    pub fn compose(&self, other: &GroupElement) -> Result<GroupElement> {
        match (self, other) {
            (GroupElement::Identity, g) | (g, GroupElement::Identity) => Ok(g.clone()),
            (GroupElement::Signs(a), GroupElement::Signs(b)) if a.len() == b.len() => Ok(
                GroupElement::Signs(a.iter().zip(b).map(|(x, y)| x * y).collect()),
            ),
            (GroupElement::Permutation(g), GroupElement::Permutation(h)) if g.len() == h.len() => {
                Ok(GroupElement::Permutation(g.iter().map(|&i| h[i]).collect()))
            }
            _ => Err(Error::domain(
                "composition is defined only for matching signflip or permutation elements",
            )),
        }
    }
}

/// A named invariance group with the dimension it acts on.
///
/// `dim` is the number of rows for the row-wise groups, `p` for
/// `RotateFull`, and the column length `n` for `RotatePerColumn`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GroupAction {
    kind: GroupKind,
    dim: usize,
}

impl GroupAction {
    pub fn new(kind: GroupKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::domain("group dimension must be at least 1"));
        }
        Ok(Self { kind, dim })
    }

    pub fn signflip_rows(n: usize) -> Result<Self> {
        Self::new(GroupKind::SignflipRows, n)
    }

    pub fn permute_rows(n: usize) -> Result<Self> {
        Self::new(GroupKind::PermuteRows, n)
    }

    pub fn rotate_full(p: usize) -> Result<Self> {
        Self::new(GroupKind::RotateFull, p)
    }

    pub fn rotate_per_column(n: usize) -> Result<Self> {
        Self::new(GroupKind::RotatePerColumn, n)
    }

    /// The action matching the shape of `x` for a given kind.
    pub fn for_data(kind: GroupKind, x: &DataMatrix) -> Result<Self> {
        let dim = match kind {
            GroupKind::RotateFull if x.is_vector() => x.rows(),
            GroupKind::RotateFull => x.cols(),
            _ => x.rows(),
        };
        Self::new(kind, dim)
    }

    pub fn kind(&self) -> GroupKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn identity(&self) -> GroupElement {
        GroupElement::Identity
    }

    /// Checks that the action can be applied to `x`.
    pub fn check(&self, x: &DataMatrix) -> Result<()> {
        let ok = match self.kind {
            GroupKind::RotateFull => {
                (x.is_vector() && x.rows() == self.dim) || x.cols() == self.dim
            }
            _ => x.rows() == self.dim,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::dims(format!(
                "{} group of dimension {} cannot act on a {}x{} matrix",
                self.kind.name(),
                self.dim,
                x.rows(),
                x.cols()
            )))
        }
    }

    /// Draws a Haar-random element. `RotatePerColumn` elements are lazy and
    /// need the column count of the data they will act on.
    pub fn sample(&self, cols: usize, rng: &mut RngStream) -> GroupElement {
        match self.kind {
            GroupKind::SignflipRows => sample_signflips(self.dim, rng),
            GroupKind::PermuteRows => sample_permutation(self.dim, rng),
            GroupKind::RotateFull => sample_haar_orthogonal(self.dim, rng),
            GroupKind::RotatePerColumn => GroupElement::ColumnDirections(DataMatrix::from_fn(
                self.dim,
                cols,
                |_, _| rng.normal(),
            )),
        }
    }

    /// Image of `x` under a fresh Haar-random element.
    ///
    /// Equal in distribution to `apply_action(self.sample(..), x)`; a full
    /// rotation of a single vector is drawn with the sphere shortcut.
    pub fn sample_image(&self, x: &DataMatrix, rng: &mut RngStream) -> Result<DataMatrix> {
        self.check(x)?;
        if self.kind == GroupKind::RotateFull && x.is_vector() {
            return Ok(sample_sphere_image(x, rng));
        }
        let g = self.sample(x.cols(), rng);
        apply_action(&g, x)
    }
}

/// `n` independent uniform signs.
pub fn sample_signflips(n: usize, rng: &mut RngStream) -> GroupElement {
    GroupElement::Signs((0..n).map(|_| rng.rademacher()).collect())
}

/// Uniform permutation of `0..n` (Fisher–Yates).
pub fn sample_permutation(n: usize, rng: &mut RngStream) -> GroupElement {
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.index(i + 1);
        perm.swap(i, j);
    }
    GroupElement::Permutation(perm)
}

/// Haar-distributed `p × p` orthogonal matrix: QR of a Gaussian matrix with
/// the signs of `R`'s diagonal moved into `Q`.
pub fn sample_haar_orthogonal(p: usize, rng: &mut RngStream) -> GroupElement {
    loop {
        let a = DataMatrix::from_fn(p, p, |_, _| rng.normal());
        // a Gaussian matrix is singular with probability zero
        if let Ok((q, _)) = qr_orthonormalize(&a) {
            return GroupElement::Orthogonal(q);
        }
    }
}

/// Uniform point on the sphere of radius `‖x‖₂`; `0` maps to `0`.
pub fn sample_sphere_image(x: &DataMatrix, rng: &mut RngStream) -> DataMatrix {
    let radius = x.frobenius_norm();
    let (n, p) = x.shape();
    let z = DataMatrix::from_fn(n, p, |_, _| rng.normal());
    if radius == 0.0 {
        return DataMatrix::zeros(n, p);
    }
    let norm = z.frobenius_norm();
    z.scale(radius / norm)
}

/// Applies a group element to `x`; the shape is preserved.
pub fn apply_action(g: &GroupElement, x: &DataMatrix) -> Result<DataMatrix> {
    let (n, p) = x.shape();
    match g {
        GroupElement::Identity => Ok(x.clone()),
        GroupElement::Signs(signs) => {
            if signs.len() != n {
                return Err(Error::dims(format!("{} signs for {n} rows", signs.len())));
            }
            Ok(DataMatrix::from_fn(n, p, |i, j| signs[i] * x[(i, j)]))
        }
        GroupElement::Permutation(perm) => {
            if perm.len() != n {
                return Err(Error::dims(format!("permutation of {} for {n} rows", perm.len())));
            }
            Ok(DataMatrix::from_fn(n, p, |i, j| x[(perm[i], j)]))
        }
        GroupElement::Orthogonal(o) => {
            let d = o.rows();
            if x.is_vector() && n == d {
                o.matmul(x)
            } else if p == d {
                x.matmul(&o.transpose())
            } else {
                Err(Error::dims(format!("rotation of size {d} cannot act on {n}x{p}")))
            }
        }
        GroupElement::ColumnDirections(z) => {
            if z.shape() != (n, p) {
                return Err(Error::dims(format!(
                    "column rotations for {:?} applied to {n}x{p}",
                    z.shape()
                )));
            }
            let mut out = DataMatrix::zeros(n, p);
            let (xm, zm) = (x.as_matrix(), z.as_matrix());
            let om = out.as_matrix_mut();
            for j in 0..p {
                let radius = xm.column(j).norm();
                if radius > 0.0 {
                    let s = radius / zm.column(j).norm();
                    for i in 0..n {
                        om[(i, j)] = zm[(i, j)] * s;
                    }
                }
            }
            Ok(out)
        }
    }
}
