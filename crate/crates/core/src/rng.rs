//! Deterministic, explicitly split random streams.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::vector::ParamVector;

/// A ChaCha8 stream identified by `(seed, stream_id)`.
///
/// The same pair produces the same draws on every platform; different stream
/// ids select disjoint ChaCha streams under the same key.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// A fresh stream under the same seed. Used to hand each simulated actor
    /// or audit trial its own generator.
    pub fn fork(&self, stream_id: u64) -> Self {
        Self::new(self.seed, stream_id)
    }

    /// A stream keyed by `(seed, stream_id, k)`, for handing out many
    /// independent streams below one logical actor (e.g. audit trials).
    pub fn substream(&self, k: u64) -> Self {
        Self::new(self.seed, splitmix64(self.stream_id ^ splitmix64(k)))
    }

    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..upper`.
    pub fn below(&mut self, upper: usize) -> usize {
        self.inner.random_range(0..upper)
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// `amount` distinct indices from `0..len`, in sampled order.
    pub fn sample_indices(&mut self, len: usize, amount: usize) -> Vec<usize> {
        rand::seq::index::sample(&mut self.inner, len, amount).into_vec()
    }

    pub fn permutation(&mut self, len: usize) -> Vec<usize> {
        self.sample_indices(len, len)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// I.i.d. zero-mean Gaussian coordinates with per-coordinate variance
/// `variance_total / dim`, so the expected squared norm is `variance_total`.
pub fn gaussian_vector<S: Scalar>(
    rng: &mut RngStream,
    dim: usize,
    variance_total: f64,
) -> Result<ParamVector<S>> {
    if !(variance_total >= 0.0) || !variance_total.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "variance must be finite and nonnegative, got {variance_total}"
        )));
    }
    if dim == 0 {
        return Err(Error::InvalidParameter("dimension must be at least 1".into()));
    }
    if variance_total == 0.0 {
        return Ok(ParamVector::zeros(dim));
    }
    let sd = (variance_total / dim as f64).sqrt();
    let coords = (0..dim).map(|_| S::lit(sd * rng.standard_normal())).collect();
    Ok(ParamVector::from_raw(coords))
}
