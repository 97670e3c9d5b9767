//! Laplace sampling and per-call noise streams.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const TWO_POW_NEG_53: f64 = 1.0 / (1u64 << 53) as f64;

/// Inverse-CDF transform of 53 random bits. `None` on the single bit
/// pattern that maps to an infinite draw.
pub fn laplace_from_bits(bits: u64, scale: f64) -> Option<f64> {
    let u = (bits >> 11) as f64 * TWO_POW_NEG_53 - 0.5;
    if u == -0.5 {
        return None;
    }
    let magnitude = -scale * (-2.0 * u.abs()).ln_1p();
    Some(if u < 0.0 { -magnitude } else { magnitude })
}

pub fn sample_laplace<R: RngCore + ?Sized>(scale: f64, rng: &mut R) -> Result<f64> {
    check_scale(scale)?;
    if scale == 0.0 {
        return Ok(0.0);
    }
    loop {
        if let Some(x) = laplace_from_bits(rng.next_u64(), scale) {
            return Ok(x);
        }
    }
}

pub(crate) fn check_scale(scale: f64) -> Result<()> {
    if !(scale >= 0.0) || scale.is_infinite() {
        return Err(Error::InvalidArgument(format!("Laplace scale must be finite and nonnegative, got {scale}")));
    }
    Ok(())
}

/// Noise keyed by (seed, call index). Call `i` reads the 64-bit word at
/// position `i` of the seed's ChaCha8 stream, so consecutive calls can be
/// drawn with a single sequential read.
#[derive(Debug, Clone)]
pub struct NoiseSource {
    key: [u8; 32],
}

impl NoiseSource {
    pub fn new(seed: u64) -> Self {
        let mut expand = ChaCha8Rng::seed_from_u64(seed);
        let mut key = [0u8; 32];
        expand.fill_bytes(&mut key);
        Self { key }
    }

    fn stream(&self, stream: u64, call: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(stream);
        rng.set_word_pos(2 * call as u128);
        rng
    }

    fn resample(&self, call: u64, scale: f64) -> f64 {
        (1u64..)
            .find_map(|s| laplace_from_bits(self.stream(s, call).next_u64(), scale))
            .expect("resampling terminates")
    }

    /// Laplace noise for one call; exactly `0.0` when `scale == 0`.
    pub fn laplace(&self, call: u64, scale: f64) -> f64 {
        if scale == 0.0 {
            return 0.0;
        }
        laplace_from_bits(self.stream(0, call).next_u64(), scale).unwrap_or_else(|| self.resample(call, scale))
    }

    /// Noise for calls `first_call .. first_call + out.len()`, identical to
    /// calling [`laplace`](Self::laplace) for each.
    pub fn laplace_batch(&self, first_call: u64, scale: f64, out: &mut [f64]) {
        if scale == 0.0 {
            out.fill(0.0);
            return;
        }
        let mut rng = self.stream(0, first_call);
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = laplace_from_bits(rng.next_u64(), scale)
                .unwrap_or_else(|| self.resample(first_call + i as u64, scale));
        }
    }
}
