//! Admissible sequences, γ functionals, nearest-point maps and chain
//! decompositions.
//!
//! An admissible sequence of a class `F` is a family of nested level sets
//! `F_0 ⊆ F_1 ⊆ … ⊆ F`, with `|F_0| = 1` and `|F_s| ≤ 2^(2^s)`. Levels are
//! grown by greedy farthest-point selection (the classic k-center heuristic),
//! which 2-approximates the covering radius per level; the γ₂ functional of
//! the constructed sequence is an upper bound on the infimal γ₂ and is the
//! quantity consumed by every downstream bound. Nesting is a deliberate
//! strengthening: the definition does not require it, but it keeps the
//! nearest-point maps monotone and costs nothing for the greedy construction.
//!
//! `F_0` is always the anchor (the zero function), so every chain starts at 0
//! and the increments `Δ_s(f) = π_s(f) − π_{s−1}(f)` telescope back to `f`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::function_class::FunctionClass;
use crate::measure::Lp;

#[derive(Debug, Error, PartialEq)]
pub enum ChainError {
    #[error("operation needs a sequence built in the {expected:?} metric")]
    MetricMismatch { expected: Metric },
    #[error("sequences were built over different classes")]
    ClassMismatch,
}

/// Metric in which the sequence was constructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    L2,
    Linf,
}

impl Metric {
    fn lp(self) -> Lp {
        match self {
            Metric::L2 => Lp::Two,
            Metric::Linf => Lp::Inf,
        }
    }
}

/// Level-size budget: `|F_0| = 1`, `|F_s| ≤ 2^(2^s)`.
pub fn level_budget(s: usize) -> usize {
    if s == 0 {
        1
    } else if (1usize << s) >= usize::BITS as usize {
        usize::MAX
    } else {
        1usize << (1usize << s)
    }
}

/// Nested level sets with nearest-point maps and cached chain geometry.
#[derive(Debug, Clone)]
pub struct AdmissibleSequence {
    class: Arc<FunctionClass>,
    metric: Metric,
    /// `levels[s]`: sorted member indices of `F_s`.
    levels: Vec<Vec<usize>>,
    /// `pi[s][f]`: class index of the nearest element of `F_s` to `f`.
    pi: Vec<Vec<usize>>,
    /// `dist[s][f] = d(f, F_s)` in the sequence's metric.
    dist: Vec<Vec<f64>>,
    /// `delta_l2[s-1][f] = ‖Δ_s(f)‖₂`, `s = 1..=s_max`.
    delta_l2: Vec<Vec<f64>>,
    /// `delta_sup[s-1][f]`: sup of `|Δ_s(f)|` over atoms.
    delta_sup: Vec<Vec<f64>>,
    /// Full pairwise distance table in the sequence's metric.
    table: Arc<Vec<Vec<f64>>>,
}

/// Greedy farthest-point construction of an admissible sequence.
pub fn build_admissible(class: &Arc<FunctionClass>, metric: Metric) -> AdmissibleSequence {
    let m = class.len();
    let table = Arc::new(distance_table(class, metric));
    let anchor = class.anchor_index();

    let mut levels: Vec<Vec<usize>> = vec![vec![anchor]];
    let mut member = vec![false; m];
    member[anchor] = true;
    // distance of each point to the current center set
    let mut dist_to_set: Vec<f64> = (0..m).map(|f| table[anchor][f]).collect();

    while levels.last().expect("nonempty").len() < m {
        let s = levels.len();
        let budget = level_budget(s);
        let mut level = levels.last().expect("nonempty").clone();
        while level.len() < budget.min(m) {
            // farthest point from the current set, lowest index on ties
            let mut best = usize::MAX;
            let mut best_d = -1.0;
            for f in 0..m {
                if !member[f] && dist_to_set[f] > best_d {
                    best_d = dist_to_set[f];
                    best = f;
                }
            }
            if best == usize::MAX {
                break;
            }
            member[best] = true;
            level.push(best);
            for f in 0..m {
                if table[best][f] < dist_to_set[f] {
                    dist_to_set[f] = table[best][f];
                }
            }
        }
        level.sort_unstable();
        levels.push(level);
    }

    refine_levels(&mut levels, &table, metric);
    finish_sequence(Arc::clone(class), metric, levels, table)
}

/// Local-search refinement: swap a level member for a candidate from the next
/// level whenever the swap strictly decreases the γ functional of the
/// sequence. Nesting is preserved by only swapping members not already pinned
/// by the previous level for candidates drawn from the next one. Deterministic
/// (fixed scan order, strict improvement).
fn refine_levels(levels: &mut [Vec<usize>], table: &[Vec<f64>], metric: Metric) {
    let m = table.len();
    if levels.len() < 3 {
        return;
    }
    let weight = |s: usize| match metric {
        Metric::L2 => 2f64.powf(s as f64 / 2.0),
        Metric::Linf => 2f64.powi(s as i32),
    };
    let dist_to = |set: &[usize], f: usize| -> f64 {
        set.iter().map(|&g| table[g][f]).fold(f64::INFINITY, f64::min)
    };
    for _pass in 0..8 {
        let mut improved = false;
        for s in 1..levels.len() - 1 {
            if levels[s].len() == m {
                continue;
            }
            // per-function contribution of the other levels
            let base: Vec<f64> = (0..m)
                .map(|f| {
                    levels
                        .iter()
                        .enumerate()
                        .filter(|(t, _)| *t != s)
                        .map(|(t, level)| weight(t) * dist_to(level, f))
                        .sum()
                })
                .collect();
            let level_objective = |set: &[usize]| -> f64 {
                (0..m)
                    .map(|f| base[f] + weight(s) * dist_to(set, f))
                    .fold(0.0, f64::max)
            };
            for _step in 0..64 {
                let current = level_objective(&levels[s]);
                let mut best: Option<(f64, usize, usize)> = None;
                for (xi, &x) in levels[s].iter().enumerate() {
                    if levels[s - 1].contains(&x) {
                        continue;
                    }
                    for &y in &levels[s + 1] {
                        if levels[s].contains(&y) {
                            continue;
                        }
                        let mut candidate = levels[s].clone();
                        candidate[xi] = y;
                        let value = level_objective(&candidate);
                        if value < current - 1e-12 * (1.0 + current)
                            && best.map_or(true, |(b, _, _)| value < b)
                        {
                            best = Some((value, xi, y));
                        }
                    }
                }
                match best {
                    Some((_, xi, y)) => {
                        levels[s][xi] = y;
                        levels[s].sort_unstable();
                        improved = true;
                    }
                    None => break,
                }
            }
        }
        if !improved {
            break;
        }
    }
}

fn distance_table(class: &FunctionClass, metric: Metric) -> Vec<Vec<f64>> {
    let m = class.len();
    let mut table = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in (i + 1)..m {
            let d = class.metric_distance(i, j, metric.lp());
            table[i][j] = d;
            table[j][i] = d;
        }
    }
    table
}

fn finish_sequence(
    class: Arc<FunctionClass>,
    metric: Metric,
    levels: Vec<Vec<usize>>,
    table: Arc<Vec<Vec<f64>>>,
) -> AdmissibleSequence {
    let m = class.len();
    let mut pi = Vec::with_capacity(levels.len());
    let mut dist = Vec::with_capacity(levels.len());
    for level in &levels {
        let mut pi_s = vec![0usize; m];
        let mut dist_s = vec![0.0f64; m];
        for f in 0..m {
            let mut best = level[0];
            let mut best_d = table[level[0]][f];
            for &g in &level[1..] {
                // strict improvement keeps the lowest index on ties
                if table[g][f] < best_d {
                    best_d = table[g][f];
                    best = g;
                }
            }
            pi_s[f] = best;
            dist_s[f] = best_d;
        }
        pi.push(pi_s);
        dist.push(dist_s);
    }

    let space = class.space();
    let s_max = levels.len() - 1;
    let mut delta_l2 = Vec::with_capacity(s_max);
    let mut delta_sup = Vec::with_capacity(s_max);
    for s in 1..=s_max {
        let mut l2_row = vec![0.0f64; m];
        let mut sup_row = vec![0.0f64; m];
        for f in 0..m {
            let (a, b) = (pi[s][f], pi[s - 1][f]);
            if a == b {
                continue;
            }
            let (mut sq, mut sup) = (0.0f64, 0.0f64);
            let (ra, rb) = (class.function(a), class.function(b));
            for (w, (x, y)) in space.probs().iter().zip(ra.iter().zip(rb)) {
                let d = x - y;
                sq += w * d * d;
                sup = sup.max(d.abs());
            }
            l2_row[f] = sq.sqrt();
            sup_row[f] = sup;
        }
        delta_l2.push(l2_row);
        delta_sup.push(sup_row);
    }

    AdmissibleSequence {
        class,
        metric,
        levels,
        pi,
        dist,
        delta_l2,
        delta_sup,
        table,
    }
}

impl AdmissibleSequence {
    pub fn class(&self) -> &Arc<FunctionClass> {
        &self.class
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn s_max(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level(&self, s: usize) -> &[usize] {
        &self.levels[s]
    }

    pub fn level_sizes(&self) -> Vec<usize> {
        self.levels.iter().map(Vec::len).collect()
    }

    /// Nearest element of `F_s` to member `f` (lowest index on ties).
    pub fn pi(&self, s: usize, f: usize) -> usize {
        self.pi[s][f]
    }

    /// `d(f, F_s)` in the sequence's metric.
    pub fn dist_to_level(&self, s: usize, f: usize) -> f64 {
        self.dist[s][f]
    }

    /// `‖Δ_s(f)‖₂` for `s ∈ 1..=s_max`.
    pub fn delta_l2(&self, s: usize, f: usize) -> f64 {
        self.delta_l2[s - 1][f]
    }

    /// Sup of `|Δ_s(f)|` over all atoms, for `s ∈ 1..=s_max`. This is the
    /// full sup (not the essential one) so that identity thresholds agree
    /// bit-for-bit with the pointwise truncation tests.
    pub fn delta_sup(&self, s: usize, f: usize) -> f64 {
        self.delta_sup[s - 1][f]
    }

    pub fn pairwise_distance(&self, i: usize, j: usize) -> f64 {
        self.table[i][j]
    }

    /// γ_p functional of THIS sequence: `sup_f Σ_s 2^{s/p} d(f, F_s)` — an
    /// upper bound on the infimal γ_p. `p = 2` needs an `L2` sequence,
    /// `p = 1` an `Linf` sequence.
    pub fn gamma_functional(&self, p: u32) -> Result<f64, ChainError> {
        let expected = match p {
            2 => Metric::L2,
            1 => Metric::Linf,
            _ => panic!("gamma functional only defined for p in {{1, 2}}"),
        };
        if self.metric != expected {
            return Err(ChainError::MetricMismatch { expected });
        }
        let mut sup = 0.0f64;
        for f in 0..self.class.len() {
            let mut sum = 0.0;
            for s in 0..=self.s_max() {
                sum += 2f64.powf(s as f64 / p as f64) * self.dist[s][f];
            }
            sup = sup.max(sum);
        }
        Ok(sup)
    }

    /// Tail of the γ₂ sum: `sup_f Σ_{s ≥ s0} 2^{s/2} d(f, F_s)`; zero when
    /// `s0 > s_max`.
    pub fn tail_functional(&self, s0: usize) -> f64 {
        if s0 > self.s_max() {
            return 0.0;
        }
        let mut sup = 0.0f64;
        for f in 0..self.class.len() {
            let mut sum = 0.0;
            for s in s0..=self.s_max() {
                sum += 2f64.powf(s as f64 / 2.0) * self.dist[s][f];
            }
            sup = sup.max(sum);
        }
        sup
    }

    /// Distinct increments `(π_s, π_{s−1})` pairs at level `s`.
    pub fn distinct_increments(&self, s: usize) -> usize {
        let mut pairs: Vec<(usize, usize)> = (0..self.class.len())
            .map(|f| (self.pi[s][f], self.pi[s - 1][f]))
            .collect();
        pairs.sort_unstable();
        pairs.dedup();
        pairs.len()
    }

    /// Materialise all increments and their norms.
    pub fn decompose(&self) -> ChainDecomposition {
        let m = self.class.len();
        let atoms = self.class.space().atom_count();
        let s_max = self.s_max();
        let mut increments = Vec::with_capacity(s_max);
        for s in 1..=s_max {
            let mut per_f = Vec::with_capacity(m);
            for f in 0..m {
                let (a, b) = (self.pi[s][f], self.pi[s - 1][f]);
                let row: Vec<f64> = if a == b {
                    vec![0.0; atoms]
                } else {
                    self.class
                        .function(a)
                        .iter()
                        .zip(self.class.function(b))
                        .map(|(x, y)| x - y)
                        .collect()
                };
                per_f.push(row);
            }
            increments.push(per_f);
        }
        let distinct_counts = (1..=s_max).map(|s| self.distinct_increments(s)).collect();
        ChainDecomposition {
            class: Arc::clone(&self.class),
            s_max,
            increments,
            l2_norms: self.delta_l2.clone(),
            distinct_counts,
        }
    }

    /// Serializable shape of the sequence: level index sets and the metric.
    pub fn levels_json(&self) -> serde_json::Value {
        serde_json::json!({
            "levels": self.levels,
            "metric": match self.metric { Metric::L2 => "L2", Metric::Linf => "Linf" },
        })
    }
}

/// Merge two admissible sequences over the same class: the new level `s+1`
/// contains the union of both level-`s` sets, so the merged sequence inherits
/// the approximation quality of each input up to one index shift (a factor
/// `√2` in the γ₂ sum).
pub fn merge_admissible(
    a: &AdmissibleSequence,
    b: &AdmissibleSequence,
) -> Result<AdmissibleSequence, ChainError> {
    if a.class.fingerprint() != b.class.fingerprint() {
        return Err(ChainError::ClassMismatch);
    }
    if a.metric != b.metric {
        return Err(ChainError::MetricMismatch { expected: a.metric });
    }
    let m = a.class.len();
    let mut levels = vec![a.levels[0].clone()];
    let mut s = 0usize;
    while levels.last().expect("nonempty").len() < m {
        let la = a.levels.get(s.min(a.s_max())).expect("level exists");
        let lb = b.levels.get(s.min(b.s_max())).expect("level exists");
        let mut union: Vec<usize> = la.iter().chain(lb.iter()).copied().collect();
        union.sort_unstable();
        union.dedup();
        debug_assert!(union.len() <= level_budget(s + 1), "union cap never binds");
        levels.push(union);
        s += 1;
    }
    Ok(finish_sequence(
        Arc::clone(&a.class),
        a.metric,
        levels,
        Arc::clone(&a.table),
    ))
}

/// Materialised chain increments `Δ_s(f) = π_s(f) − π_{s−1}(f)`.
#[derive(Debug, Clone)]
pub struct ChainDecomposition {
    class: Arc<FunctionClass>,
    s_max: usize,
    /// `increments[s-1][f]`: the atom vector of `Δ_s(f)`.
    increments: Vec<Vec<Vec<f64>>>,
    /// `l2_norms[s-1][f] = ‖Δ_s(f)‖₂`.
    l2_norms: Vec<Vec<f64>>,
    distinct_counts: Vec<usize>,
}

impl ChainDecomposition {
    pub fn class(&self) -> &Arc<FunctionClass> {
        &self.class
    }

    pub fn s_max(&self) -> usize {
        self.s_max
    }

    pub fn increment(&self, s: usize, f: usize) -> &[f64] {
        &self.increments[s - 1][f]
    }

    pub fn l2_norm(&self, s: usize, f: usize) -> f64 {
        self.l2_norms[s - 1][f]
    }

    pub fn distinct_increments(&self, s: usize) -> usize {
        self.distinct_counts[s - 1]
    }

    /// `Σ_s Δ_s(f)` accumulated atomwise — telescopes back to `f`.
    pub fn reconstruct(&self, f: usize) -> Vec<f64> {
        let atoms = self.class.space().atom_count();
        let mut acc = vec![0.0; atoms];
        for s in 1..=self.s_max {
            for (slot, v) in acc.iter_mut().zip(&self.increments[s - 1][f]) {
                *slot += v;
            }
        }
        acc
    }
}
