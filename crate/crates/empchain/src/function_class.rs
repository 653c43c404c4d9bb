//! Finite function classes over a [`DiscreteSpace`], their `L₂(P)` geometry,
//! and generators.
//!
//! A class is a table of real values — one row per function, one column per
//! atom — always anchored so that the zero function is a member (the chain
//! decomposition starts every function at 0). Two generators are bundled:
//!
//! * [`interval_indicators`]: all indicators of intervals on a uniform space,
//!   a concrete pregaussian test class;
//! * [`heavy_tail_pair`]: a two-function class `{0, f}` where `f` has a
//!   polynomially heavy upper tail, used to show that truncation levels
//!   growing slower than `√n` leave a `√n`-scaled bias that diverges.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measure::{DiscreteSpace, Lp, MeasureError};
use crate::numeric::compensated_sum;

#[derive(Debug, Error, PartialEq)]
pub enum ClassError {
    #[error("row {row} has {got} values, space has {expected} atoms")]
    LengthMismatch {
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("a function class needs at least one row")]
    EmptyClass,
    #[error("heavy-tail atom masses sum to {sum} > 1")]
    MassOverflow { sum: f64 },
    #[error("row {row} contains a non-finite value")]
    NonFinite { row: usize },
    #[error("invalid heavy-tail spec: {reason}")]
    BadSpec { reason: String },
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// A finite family of real-valued functions on a discrete space. Rows are
/// deduplicated and the zero function is inserted if absent.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FunctionClass {
    space: Arc<DiscreteSpace>,
    values: Vec<Vec<f64>>,
    anchor: usize,
    #[serde(skip)]
    fingerprint: u64,
}

impl FunctionClass {
    pub fn new(space: Arc<DiscreteSpace>, table: Vec<Vec<f64>>) -> Result<Self, ClassError> {
        if table.is_empty() {
            return Err(ClassError::EmptyClass);
        }
        let atom_count = space.atom_count();
        let mut values: Vec<Vec<f64>> = Vec::with_capacity(table.len() + 1);
        for (row, r) in table.into_iter().enumerate() {
            if r.len() != atom_count {
                return Err(ClassError::LengthMismatch {
                    row,
                    expected: atom_count,
                    got: r.len(),
                });
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(ClassError::NonFinite { row });
            }
            if !values.iter().any(|kept| kept == &r) {
                values.push(r);
            }
        }
        let anchor = match values.iter().position(|r| r.iter().all(|&v| v == 0.0)) {
            Some(i) => i,
            None => {
                values.push(vec![0.0; atom_count]);
                values.len() - 1
            }
        };
        let fingerprint = class_fingerprint(&space, &values);
        Ok(Self {
            space,
            values,
            anchor,
            fingerprint,
        })
    }

    pub fn from_space(space: DiscreteSpace, table: Vec<Vec<f64>>) -> Result<Self, ClassError> {
        Self::new(Arc::new(space), table)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn space(&self) -> &Arc<DiscreteSpace> {
        &self.space
    }

    pub fn anchor_index(&self) -> usize {
        self.anchor
    }

    pub fn function(&self, i: usize) -> &[f64] {
        &self.values[i]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// `L₂(P)` distance between two member functions.
    pub fn l2_distance(&self, i: usize, j: usize) -> f64 {
        self.metric_distance(i, j, Lp::Two)
    }

    pub fn metric_distance(&self, i: usize, j: usize, p: Lp) -> f64 {
        let diff: Vec<f64> = self.values[i]
            .iter()
            .zip(&self.values[j])
            .map(|(a, b)| a - b)
            .collect();
        self.space.lp_norm(&diff, p).expect("rows match atom count")
    }

    /// Full symmetric `L₂(P)` distance table.
    pub fn pairwise_l2(&self) -> Vec<Vec<f64>> {
        let m = self.len();
        let mut d = vec![vec![0.0; m]; m];
        for i in 0..m {
            for j in (i + 1)..m {
                let dist = self.l2_distance(i, j);
                d[i][j] = dist;
                d[j][i] = dist;
            }
        }
        d
    }

    /// Exact mean of member `i`.
    pub fn mean(&self, i: usize) -> f64 {
        self.space
            .expectation(&self.values[i])
            .expect("rows match atom count")
    }

    /// Flat JSON shape: `{"probs": [...], "values": [[...]], "anchor": i}`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "probs": self.space.probs(),
            "values": self.values,
            "anchor": self.anchor,
        })
    }
}

fn class_fingerprint(space: &DiscreteSpace, values: &[Vec<f64>]) -> u64 {
    let mut hash = space.fingerprint() ^ 0x9e37_79b9_7f4a_7c15;
    for row in values {
        for v in row {
            for byte in v.to_bits().to_le_bytes() {
                hash ^= byte as u64;
                hash = hash.wrapping_mul(0x1000_0000_01b3);
            }
        }
    }
    hash
}

/// All interval indicators `1_{[i,j)}`, `0 ≤ i < j ≤ d`, on the uniform
/// `d`-atom space, plus the zero function: `d(d+1)/2 + 1` members.
pub fn interval_indicators(d: usize) -> FunctionClass {
    assert!(d >= 2, "need at least two atoms");
    let space = Arc::new(DiscreteSpace::uniform(d).expect("uniform weights are valid"));
    let mut table = Vec::with_capacity(d * (d + 1) / 2);
    for i in 0..d {
        for j in (i + 1)..=d {
            let mut row = vec![0.0; d];
            row[i..j].fill(1.0);
            table.push(row);
        }
    }
    FunctionClass::new(space, table).expect("indicator table is valid")
}

/// Decay profile of the coefficient sequence `a_k` in [`HeavyTailSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ADecay {
    /// `a_k = k^{-exponent}` — summability of `Σ a_k / k` with a genuinely
    /// polynomial upper tail for `f`.
    PowerLaw { exponent: f64 },
    /// `a_k = 1 / log²(k+1)` — puts the tail of `f` exactly at the
    /// second-moment boundary (index 2 with logarithmic corrections).
    InverseLogSquared,
}

impl ADecay {
    pub fn coefficient(&self, k: usize) -> f64 {
        match self {
            ADecay::PowerLaw { exponent } => (k as f64).powf(-exponent),
            ADecay::InverseLogSquared => {
                let l = ((k + 1) as f64).ln();
                1.0 / (l * l)
            }
        }
    }
}

/// Parameters of the heavy-tailed two-function class.
///
/// Atom `k ∈ {1..K}` carries value `b_k = k^{b_exponent}` with probability
/// `mass_scale · a_k / (k · b_k²)`; the remaining mass sits on a value-0 atom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeavyTailSpec {
    /// Growth exponent of the value sequence, in `(0, 1/2)`.
    pub b_exponent: f64,
    /// Coefficient decay `a_k`.
    pub a_decay: ADecay,
    /// Number of heavy atoms `K`.
    pub atoms: usize,
    /// Uniform scale on the atom masses, in `(0, 1]`.
    pub mass_scale: f64,
}

impl Default for HeavyTailSpec {
    /// Defaults tuned so that, on the grid `n ∈ [2⁴, 2¹⁶]`, the exact
    /// `√n`-scaled truncation bias decreases by more than 2× under the `√n`
    /// truncation rule while growing monotonically by more than 5× under the
    /// `n^{1/4}` rule.
    fn default() -> Self {
        Self::with_total_mass(0.47, ADecay::PowerLaw { exponent: 0.05 }, 1_500_000, 0.35)
            .expect("default spec is valid")
    }
}

impl HeavyTailSpec {
    /// Build a spec whose heavy atoms carry `total_mass` in aggregate, by
    /// solving for the uniform `mass_scale`.
    pub fn with_total_mass(
        b_exponent: f64,
        a_decay: ADecay,
        atoms: usize,
        total_mass: f64,
    ) -> Result<Self, ClassError> {
        if !(total_mass > 0.0 && total_mass <= 1.0) {
            return Err(ClassError::BadSpec {
                reason: format!("total mass {total_mass} outside (0, 1]"),
            });
        }
        let raw = raw_mass_sum(b_exponent, a_decay, atoms);
        let spec = Self {
            b_exponent,
            a_decay,
            atoms,
            mass_scale: total_mass / raw,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// The second-moment-critical witness: values `k^{1/4}` and
    /// `a_k = 1/log²(k+1)` on `2¹⁶` atoms, half the mass heavy.
    pub fn near_critical() -> Self {
        Self::with_total_mass(0.25, ADecay::InverseLogSquared, 1 << 16, 0.5)
            .expect("near-critical spec is valid")
    }

    pub fn validate(&self) -> Result<(), ClassError> {
        if !(self.b_exponent > 0.0 && self.b_exponent < 0.5) {
            return Err(ClassError::BadSpec {
                reason: format!("b_exponent {} outside (0, 1/2)", self.b_exponent),
            });
        }
        if !(self.mass_scale > 0.0 && self.mass_scale <= 1.0) {
            return Err(ClassError::BadSpec {
                reason: format!("mass_scale {} outside (0, 1]", self.mass_scale),
            });
        }
        if self.atoms == 0 {
            return Err(ClassError::BadSpec {
                reason: "need at least one heavy atom".into(),
            });
        }
        if let ADecay::PowerLaw { exponent } = self.a_decay {
            if !(0.0..1.0).contains(&exponent) {
                return Err(ClassError::BadSpec {
                    reason: format!("power-law exponent {exponent} outside [0, 1)"),
                });
            }
        }
        Ok(())
    }

    /// Value carried by heavy atom `k` (1-based): `b_k = k^{b_exponent}`.
    pub fn value(&self, k: usize) -> f64 {
        (k as f64).powf(self.b_exponent)
    }

    /// Probability mass of heavy atom `k`: `mass_scale · a_k / (k · b_k²)`.
    pub fn mass(&self, k: usize) -> f64 {
        let b = self.value(k);
        self.mass_scale * self.a_decay.coefficient(k) / (k as f64 * b * b)
    }

    /// Analytic partial sum `mass_scale · Σ_{k≤K} a_k / k`, which equals
    /// `𝔼 f²` of the generated function exactly.
    pub fn second_moment_partial_sum(&self) -> f64 {
        self.mass_scale
            * compensated_sum((1..=self.atoms).map(|k| self.a_decay.coefficient(k) / k as f64))
    }

    /// Tail functional `T(m) = √m · 𝔼 f·1{f > b_m}` via the analytic identity
    /// `𝔼 f·1{f > b_m} = mass_scale · Σ_{m < l ≤ K} a_l / (l · b_l)`.
    pub fn tail_functional(&self, m: usize) -> f64 {
        let tail = compensated_sum(
            ((m + 1)..=self.atoms)
                .map(|l| self.a_decay.coefficient(l) / (l as f64 * self.value(l))),
        );
        (m as f64).sqrt() * self.mass_scale * tail
    }
}

fn raw_mass_sum(b_exponent: f64, a_decay: ADecay, atoms: usize) -> f64 {
    compensated_sum((1..=atoms).map(|k| {
        let b = (k as f64).powf(b_exponent);
        a_decay.coefficient(k) / (k as f64 * b * b)
    }))
}

/// Build the heavy-tailed space and its two-function class `{0, f}`.
pub fn heavy_tail_pair(
    spec: &HeavyTailSpec,
) -> Result<(Arc<DiscreteSpace>, FunctionClass), ClassError> {
    spec.validate()?;
    let k_max = spec.atoms;
    let mut probs = Vec::with_capacity(k_max + 1);
    let mut f = Vec::with_capacity(k_max + 1);
    probs.push(0.0); // residual placeholder
    f.push(0.0);
    for k in 1..=k_max {
        probs.push(spec.mass(k));
        f.push(spec.value(k));
    }
    let heavy = compensated_sum(probs.iter().copied());
    if heavy > 1.0 + 1e-12 {
        return Err(ClassError::MassOverflow { sum: heavy });
    }
    probs[0] = (1.0 - heavy).max(0.0);
    let space = Arc::new(DiscreteSpace::new(probs)?);
    let class = FunctionClass::new(Arc::clone(&space), vec![f])?;
    Ok((space, class))
}
