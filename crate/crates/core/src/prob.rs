//! Categorical probability primitives.
//!
//! All quantities are in nats. Any distribution that ends up inside a
//! logarithm is first floored at [`PROB_FLOOR`] and renormalized, so zero
//! preference mass produces a large finite penalty instead of `-inf`.

use std::fmt;
use std::ops::Index;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};

/// Smallest probability allowed inside a logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// Tolerance on the total mass of a [`Dist`].
pub const SUM_TOL: f64 = 1e-9;

/// The simulation generator: ChaCha with 8 rounds, seeded from a `u64`.
///
/// ChaCha output is specified independently of platform and word size, so a
/// seed reproduces the same stream everywhere. Independent streams for one
/// seed are obtained with [`SimRng::set_stream`] (see [`stream_rng`]).
pub type SimRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Generator for one named stream of a seed, so that e.g. the environment
/// and the agent of the same episode draw from non-overlapping sequences.
pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A categorical distribution: non-negative weights summing to one.
#[derive(Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Dist(Vec<f64>);

impl Dist {
    /// Normalizes `raw` into a distribution.
    pub fn new(raw: Vec<f64>) -> Result<Self> {
        normalize(raw)
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "distribution needs at least one category");
        Dist(vec![1.0 / n as f64; n])
    }

    pub fn delta(n: usize, at: usize) -> Self {
        assert!(at < n, "delta index {at} out of range {n}");
        let mut w = vec![0.0; n];
        w[at] = 1.0;
        Dist(w)
    }

    /// Wraps weights that are already known to form a distribution, such as
    /// the output of a stochastic matrix applied to a distribution.
    pub(crate) fn from_normalized(w: Vec<f64>) -> Self {
        debug_assert!(
            (w.iter().sum::<f64>() - 1.0).abs() < 1e-6,
            "weights sum to {}",
            w.iter().sum::<f64>()
        );
        Dist(w)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    /// Index of the largest weight, lowest index on ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    /// Copy with every weight raised to at least [`PROB_FLOOR`], renormalized.
    pub fn floored(&self) -> Dist {
        let w: Vec<f64> = self.0.iter().map(|&x| x.max(PROB_FLOOR)).collect();
        let total: f64 = w.iter().sum();
        Dist(w.into_iter().map(|x| x / total).collect())
    }

    pub fn max_abs_diff(&self, other: &Dist) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl fmt::Debug for Dist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

impl Index<usize> for Dist {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl<'de> Deserialize<'de> for Dist {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = Vec::<f64>::deserialize(d)?;
        check_sums_to_one(&raw).map_err(serde::de::Error::custom)?;
        Ok(Dist(raw))
    }
}

/// Accepts `raw` only if it already is a distribution (within [`SUM_TOL`]).
pub fn check_sums_to_one(raw: &[f64]) -> std::result::Result<(), String> {
    if raw.is_empty() {
        return Err("empty distribution".into());
    }
    if let Some((i, &v)) = raw.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(format!("weight {v} at index {i} is negative or NaN"));
    }
    let total: f64 = raw.iter().sum();
    if (total - 1.0).abs() > SUM_TOL {
        return Err(format!("weights sum to {total}, not 1"));
    }
    Ok(())
}

/// Lowest index of the maximum value.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn normalize(raw: Vec<f64>) -> Result<Dist> {
    for (index, &value) in raw.iter().enumerate() {
        if value < 0.0 || value.is_nan() {
            return Err(Error::NegativeWeight { index, value });
        }
    }
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return Err(Error::AllZero);
    }
    Ok(Dist(raw.into_iter().map(|x| x / total).collect()))
}

/// Shannon entropy with `0 ln 0 = 0`.
pub fn entropy(p: &Dist) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

/// `KL(p || q)`, with `q` floored before taking logs.
pub fn kl(p: &Dist, q: &Dist) -> Result<f64> {
    same_len(p, q)?;
    let q = q.floored();
    Ok(p.iter()
        .zip(q.iter())
        .filter(|(&a, _)| a > 0.0)
        .map(|(&a, &b)| a * (a / b).ln())
        .sum())
}

/// `E_p[ln target]`, i.e. the negated cross-entropy of `target` under `p`.
pub fn expected_log(p: &Dist, target: &Dist) -> Result<f64> {
    same_len(p, target)?;
    let t = target.floored();
    Ok(p.iter().zip(t.iter()).map(|(&a, &b)| a * b.ln()).sum())
}

/// Softmax of `-precision * scores`, shifted by the minimum score.
pub fn softmax_neg(scores: &[f64], precision: f64) -> Result<Dist> {
    if !(precision > 0.0 && precision.is_finite()) {
        return Err(Error::InvalidPrecision(precision));
    }
    if scores.is_empty() {
        return Err(Error::AllZero);
    }
    for (index, &value) in scores.iter().enumerate() {
        if !value.is_finite() {
            return Err(Error::NonFiniteScore { index, value });
        }
    }
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = scores.iter().map(|&s| (-precision * (s - min)).exp()).collect();
    let total: f64 = w.iter().sum();
    Ok(Dist(w.into_iter().map(|x| x / total).collect()))
}

/// Inverse-CDF draw. Consumes exactly one `f64` from `rng`.
pub fn sample_index<R: Rng + ?Sized>(p: &Dist, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    let mut last_nonzero = 0;
    for (i, &w) in p.iter().enumerate() {
        if w > 0.0 {
            cum += w;
            last_nonzero = i;
            if u < cum {
                return i;
            }
        }
    }
    last_nonzero
}

fn same_len(p: &Dist, q: &Dist) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    Ok(())
}
