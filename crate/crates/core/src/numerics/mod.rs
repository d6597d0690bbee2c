//! Dense linear algebra, special functions and reproducible random streams.

mod linalg;
mod matrix;
mod rng;
mod special;

pub use linalg::{operator_norm, pseudo_inverse, qr_orthonormalize, singular_values};
pub use matrix::DataMatrix;
pub use rng::RngStream;
pub use special::{normal_cdf, normal_quantile, student_t_cdf, student_t_quantile};
