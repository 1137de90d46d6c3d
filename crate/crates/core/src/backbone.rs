//! Frozen sentence-encoder backends.
//!
//! The real deployment plugs a pre-trained sentence encoder in behind
//! [`Backbone`]; the bundled [`StubBackbone`] is a deterministic stand-in that
//! maps shared tokens to shared direction so lexical overlap shows up as
//! cosine similarity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A frozen text-to-vector encoder. Same text must always produce the same
/// vector; no gradient ever flows into its outputs.
pub trait Backbone: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn encode(&self, text: &str) -> Result<Vec<f32>>;
}

#[derive(Debug, Clone)]
pub struct StubBackbone {
    dim: usize,
    seed: u64,
    name: String,
}

impl StubBackbone {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim >= 8, "backbone dim must be at least 8");
        StubBackbone { dim, seed, name: format!("stub-{dim}") }
    }
}

impl Backbone for StubBackbone {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Result<Vec<f32>> {
        stub_encode(text, self.dim, self.seed)
    }
}

/// Deterministic bag-of-token-hashes embedding.
///
/// Lowercase tokens split on non-alphanumerics each hash (with the seed) to a
/// pseudo-random unit vector; the L2-normalized sum is the utterance vector.
pub fn stub_encode(text: &str, dim: usize, seed: u64) -> Result<Vec<f32>> {
    assert!(dim >= 8, "backbone dim must be at least 8");
    let mut sum = vec![0.0f64; dim];
    let mut any = false;
    for token in tokenize(text) {
        any = true;
        let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, fnv1a64(token.as_bytes())));
        let mut tv = vec![0.0f64; dim];
        let mut norm = 0.0f64;
        for v in tv.iter_mut() {
            *v = gaussian(&mut rng);
            norm += *v * *v;
        }
        let norm = norm.sqrt().max(f64::MIN_POSITIVE);
        for (s, v) in sum.iter_mut().zip(&tv) {
            *s += v / norm;
        }
    }
    if !any {
        return Err(Error::EmptyUtterance);
    }
    let norm = sum.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in sum.iter_mut() {
            *v /= norm;
        }
    }
    Ok(sum.into_iter().map(|v| v as f32).collect())
}

fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
}

/// FNV-1a: stable across runs and platforms, unlike std's SipHash.
fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// splitmix64 finalizer, used to combine seeds.
pub fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller on open-interval uniforms.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn cosine_f32(a: &[f32], b: &[f32]) -> f64 {
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        dot += f64::from(x) * f64::from(y);
        na += f64::from(x) * f64::from(x);
        nb += f64::from(y) * f64::from(y);
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na.sqrt() * nb.sqrt())
}
