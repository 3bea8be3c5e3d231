//! Noise distributions, the exponential mechanism, and seeded noise sources.

use rand::distributions::{Distribution, Open01};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacyParams {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
        }
        if !(delta > 0.0 && delta <= 0.5) {
            return Err(Error::InvalidParameter(format!("delta must lie in (0, 1/2], got {delta}")));
        }
        Ok(PrivacyParams { epsilon, delta })
    }

    /// λ = (1/ε)·ln(1/δ).
    pub fn lambda(&self) -> f64 {
        (1.0 / self.delta).ln() / self.epsilon
    }

    pub fn halved(&self) -> PrivacyParams {
        PrivacyParams {
            epsilon: self.epsilon / 2.0,
            delta: self.delta / 2.0,
        }
    }
}

/// Shift of the truncated Laplace distribution: (Δ/ε)·ln(1 + (e^ε − 1)/δ).
pub fn tau(epsilon: f64, delta: f64, sensitivity: f64) -> f64 {
    sensitivity / epsilon * (epsilon.exp_m1() / delta).ln_1p()
}

fn open01<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    Open01.sample(rng)
}

pub fn sample_laplace<R: RngCore + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    let u = open01(rng) - 0.5;
    -scale * u.signum() * (-2.0 * u.abs()).ln_1p()
}

/// Draw from the density ∝ e^{−|x−τ|/b} restricted to [0, 2τ], by inverting its CDF.
pub fn sample_tlap<R: RngCore + ?Sized>(scale: f64, tau: f64, rng: &mut R) -> f64 {
    let u = open01(rng);
    let c = -(-tau / scale).exp_m1();
    let x = if u < 0.5 {
        tau + scale * (-c * (1.0 - 2.0 * u)).ln_1p()
    } else {
        tau - scale * (-c * (2.0 * u - 1.0)).ln_1p()
    };
    x.clamp(0.0, 2.0 * tau)
}

fn check_scores(scores: &[f64]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::DegenerateFamily);
    }
    let mut max = f64::NEG_INFINITY;
    for (i, &s) in scores.iter().enumerate() {
        if !s.is_finite() {
            return Err(Error::NonFiniteScore(i));
        }
        max = max.max(s);
    }
    Ok(max)
}

/// Samples index j with probability ∝ exp(ε'·scores[j] / (2·sensitivity)).
pub fn exp_mechanism<R: RngCore + ?Sized>(
    scores: &[f64],
    epsilon_prime: f64,
    sensitivity: f64,
    rng: &mut R,
) -> Result<usize> {
    let max = check_scores(scores)?;
    let weights: Vec<f64> = scores
        .iter()
        .map(|&s| (0.5 * epsilon_prime * (s - max) / sensitivity).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    let mut target = open01(rng) * total;
    for (j, w) in weights.iter().enumerate() {
        if target < *w {
            return Ok(j);
        }
        target -= w;
    }
    // Rounding left a sliver past the last weight.
    Ok(weights.iter().rposition(|&w| w > 0.0).unwrap_or(0))
}

/// Where every mechanism draws its randomness from.
pub trait NoiseSource {
    fn laplace(&mut self, scale: f64) -> f64;
    fn tlap(&mut self, scale: f64, tau: f64) -> f64;
    fn select(&mut self, scores: &[f64], epsilon_prime: f64, sensitivity: f64) -> Result<usize>;
    /// An independent source for a sub-computation, determined by `stream` alone.
    fn fork(&self, stream: u64) -> Self
    where
        Self: Sized;
}

/// A seeded ChaCha stream; equal `(seed, stream)` pairs replay identical draws.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha12Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RngStream { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn rng(&mut self) -> &mut ChaCha12Rng {
        &mut self.rng
    }
}

fn mix(a: u64, b: u64) -> u64 {
    // splitmix64 finalizer over the pair.
    let mut z = a
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(b)
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl NoiseSource for RngStream {
    fn laplace(&mut self, scale: f64) -> f64 {
        sample_laplace(scale, &mut self.rng)
    }

    fn tlap(&mut self, scale: f64, tau: f64) -> f64 {
        sample_tlap(scale, tau, &mut self.rng)
    }

    fn select(&mut self, scores: &[f64], epsilon_prime: f64, sensitivity: f64) -> Result<usize> {
        exp_mechanism(scores, epsilon_prime, sensitivity, &mut self.rng)
    }

    fn fork(&self, stream: u64) -> Self {
        RngStream::new(self.seed, mix(self.stream, stream))
    }
}

/// Deterministic stand-in for a noise source, for tests and worked examples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixedNoise {
    /// Every draw returns its distribution's centre: τ for TLap, 0 for Laplace.
    Shift,
    /// Every additive draw returns 0, so noisy statistics equal the true ones.
    Zero,
}

fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (j, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = j;
        }
    }
    best
}

impl NoiseSource for FixedNoise {
    fn laplace(&mut self, _scale: f64) -> f64 {
        0.0
    }

    fn tlap(&mut self, _scale: f64, tau: f64) -> f64 {
        match self {
            FixedNoise::Shift => tau,
            FixedNoise::Zero => 0.0,
        }
    }

    fn select(&mut self, scores: &[f64], _epsilon_prime: f64, _sensitivity: f64) -> Result<usize> {
        check_scores(scores)?;
        Ok(argmax(scores))
    }

    fn fork(&self, _stream: u64) -> Self {
        *self
    }
}
