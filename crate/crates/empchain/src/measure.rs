//! Finite discrete probability spaces, exact expectations, and reproducible
//! sampling.
//!
//! Everything downstream (chain geometry, truncation bias, Gaussian targets)
//! is computed against a fully known `P`, so expectations and norms here are
//! exact weighted sums, not estimates. The `L∞` norm is essential: atoms of
//! probability zero do not count.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::compensated_sum;
use crate::rng;

/// Tolerance on `|Σ probs − 1|` accepted at construction.
pub const NORMALIZATION_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum MeasureError {
    #[error("weight at atom {index} is negative: {value}")]
    NegativeWeight { index: usize, value: f64 },
    #[error("weights sum to {sum}, more than 1e-12 away from 1")]
    NotNormalized { sum: f64 },
    #[error("a probability space needs at least one atom")]
    Empty,
    #[error("value vector has length {got}, space has {expected} atoms")]
    LengthMismatch { expected: usize, got: usize },
}

/// Which `L_p(P)` norm to take.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lp {
    One,
    Two,
    /// Essential supremum over atoms of positive probability.
    Inf,
}

/// A finite probability space: atoms `0..atom_count` with exact weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "SpaceRepr", into = "SpaceRepr")]
pub struct DiscreteSpace {
    probs: Vec<f64>,
    cumulative: Vec<f64>,
    fingerprint: u64,
}

#[derive(Serialize, Deserialize)]
struct SpaceRepr {
    probs: Vec<f64>,
}

impl TryFrom<SpaceRepr> for DiscreteSpace {
    type Error = MeasureError;
    fn try_from(repr: SpaceRepr) -> Result<Self, MeasureError> {
        DiscreteSpace::new(repr.probs)
    }
}

impl From<DiscreteSpace> for SpaceRepr {
    fn from(space: DiscreteSpace) -> Self {
        SpaceRepr {
            probs: space.probs,
        }
    }
}

impl DiscreteSpace {
    /// Build a space from probability weights, validating the invariants.
    pub fn new(probs: Vec<f64>) -> Result<Self, MeasureError> {
        if probs.is_empty() {
            return Err(MeasureError::Empty);
        }
        for (index, &value) in probs.iter().enumerate() {
            if !(value >= 0.0) {
                return Err(MeasureError::NegativeWeight { index, value });
            }
        }
        let sum = compensated_sum(probs.iter().copied());
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(MeasureError::NotNormalized { sum });
        }
        let mut cumulative = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for &p in &probs {
            acc += p;
            cumulative.push(acc);
        }
        // guard the last bucket against rounding in the prefix sums
        if let Some(last) = cumulative.last_mut() {
            *last = 1.0;
        }
        let fingerprint = fingerprint_bits(&probs);
        Ok(Self {
            probs,
            cumulative,
            fingerprint,
        })
    }

    /// Uniform space on `d` atoms.
    pub fn uniform(d: usize) -> Result<Self, MeasureError> {
        Self::new(vec![1.0 / d as f64; d])
    }

    pub fn atom_count(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Stable identity of the space, carried by samples drawn from it.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// Exact expectation `Σ_ω P(ω)·values(ω)`.
    pub fn expectation(&self, values: &[f64]) -> Result<f64, MeasureError> {
        self.check_len(values)?;
        Ok(compensated_sum(
            self.probs.iter().zip(values).map(|(p, v)| p * v),
        ))
    }

    /// `L_p(P)` norm of a value vector.
    pub fn lp_norm(&self, values: &[f64], p: Lp) -> Result<f64, MeasureError> {
        self.check_len(values)?;
        Ok(match p {
            Lp::One => compensated_sum(self.probs.iter().zip(values).map(|(p, v)| p * v.abs())),
            Lp::Two => {
                compensated_sum(self.probs.iter().zip(values).map(|(p, v)| p * v * v)).sqrt()
            }
            Lp::Inf => self
                .probs
                .iter()
                .zip(values)
                .filter(|(p, _)| **p > 0.0)
                .map(|(_, v)| v.abs())
                .fold(0.0, f64::max),
        })
    }

    /// Draw `n` iid atoms by inverse CDF. Draw `i` is a pure function of
    /// `(seed, i)`, so the result is independent of any parallel schedule.
    pub fn draw_sample(&self, n: usize, seed: u64) -> Sample {
        assert!(
            self.atom_count() <= u32::MAX as usize,
            "atom indices stored as u32"
        );
        let indices = (0..n as u64)
            .map(|i| self.index_of_uniform(rng::uniform_u01(seed, i)))
            .collect();
        Sample {
            indices,
            seed,
            space_id: self.fingerprint,
        }
    }

    /// Atom hit by a uniform `u ∈ [0,1)` under the inverse CDF.
    #[inline]
    pub fn index_of_uniform(&self, u: f64) -> u32 {
        let idx = self.cumulative.partition_point(|&c| c <= u);
        idx.min(self.atom_count() - 1) as u32
    }

    fn check_len(&self, values: &[f64]) -> Result<(), MeasureError> {
        if values.len() != self.atom_count() {
            return Err(MeasureError::LengthMismatch {
                expected: self.atom_count(),
                got: values.len(),
            });
        }
        Ok(())
    }
}

/// An iid sample of atom indices, tagged with the seed and generating space.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sample {
    pub indices: Vec<u32>,
    pub seed: u64,
    pub space_id: u64,
}

impl Sample {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Per-atom occupation counts, the sufficient statistic for everything
    /// the harness evaluates on a sample.
    pub fn counts(&self, atom_count: usize) -> Vec<u64> {
        let mut counts = vec![0u64; atom_count];
        for &i in &self.indices {
            counts[i as usize] += 1;
        }
        counts
    }
}

fn fingerprint_bits(values: &[f64]) -> u64 {
    // FNV-1a over the raw bit patterns
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for v in values {
        for byte in v.to_bits().to_le_bytes() {
            hash ^= byte as u64;
            hash = hash.wrapping_mul(0x1000_0000_01b3);
        }
    }
    hash
}
