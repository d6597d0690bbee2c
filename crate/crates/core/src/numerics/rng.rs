use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

/// Degrees of freedom up to which chi-squared draws are sums of squared
/// normals; larger (or fractional) values use the gamma sampler.
const SUM_OF_SQUARES_MAX_DF: f64 = 32.0;

/// Reproducible random stream keyed by `(seed, stream_id)`.
///
/// The seed selects a ChaCha8 key and the stream id selects one of its 2^64
/// independent streams, so replicate `r` of an experiment always sees the same
/// draws no matter which thread runs it.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform draw on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Uniform ±1.
    pub fn rademacher(&mut self) -> f64 {
        if self.rng.random::<bool>() {
            1.0
        } else {
            -1.0
        }
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    /// Chi-squared draw with `df > 0` degrees of freedom.
    pub fn chi_squared(&mut self, df: f64) -> f64 {
        assert!(df > 0.0 && df.is_finite(), "chi-squared df must be positive");
        if df.fract() == 0.0 && df <= SUM_OF_SQUARES_MAX_DF {
            (0..df as usize)
                .map(|_| {
                    let z = self.normal();
                    z * z
                })
                .sum()
        } else {
            Gamma::new(df / 2.0, 2.0)
                .expect("valid gamma parameters")
                .sample(&mut self.rng)
        }
    }

    /// Student-t draw as `Z / sqrt(chi2_d / d)`.
    pub fn student_t(&mut self, df: f64) -> f64 {
        let z = self.normal();
        let w = self.chi_squared(df);
        z / (w / df).sqrt()
    }

    /// F-distributed draw as the ratio of scaled chi-squared draws.
    pub fn f_ratio(&mut self, df1: f64, df2: f64) -> f64 {
        let a = self.chi_squared(df1) / df1;
        let b = self.chi_squared(df2) / df2;
        a / b
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}
