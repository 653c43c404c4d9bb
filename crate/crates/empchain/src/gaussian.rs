//! The limiting Gaussian process over a function class.
//!
//! Two covariance modes are exposed. The *bridge* covariance
//! `Cov(G_f, G_g) = 𝔼fg − 𝔼f·𝔼g` is the limit of the centered empirical
//! process and is the CLT target. The *isonormal* covariance
//! `Cov(G_f, G_g) = 𝔼fg` carries the `L₂(P)` geometry in which the chaining
//! functionals are stated; its increment metric satisfies
//! `ρ₂(f,g) = ‖f−g‖_{L₂(P)}` exactly, while the bridge metric is dominated
//! by it. Both covariances are exact on a discrete space.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::function_class::FunctionClass;
use crate::numeric::compensated_sum;
use crate::rng::derive_seed;

/// Eigenvalues above `-PSD_TOL` are treated as roundoff and clipped to zero.
pub const PSD_TOL: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum GaussianError {
    #[error("covariance matrix is not PSD: min eigenvalue {min_eigenvalue}")]
    NotPsd { min_eigenvalue: f64 },
    #[error("subset must be nonempty")]
    EmptySubset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CovarianceMode {
    /// `𝔼fg − 𝔼f·𝔼g` — the empirical CLT limit.
    Bridge,
    /// `𝔼fg` — the `L₂(P)` geometry of the chaining bounds.
    Isonormal,
}

/// Exact covariance model of the Gaussian process on a subset of the class.
#[derive(Debug, Clone)]
pub struct GaussianModel {
    pub subset: Vec<usize>,
    pub mode: CovarianceMode,
    covariance: DMatrix<f64>,
    /// Symmetric square root `Q Λ^{1/2} Qᵀ` of the (PSD-repaired) covariance.
    root: DMatrix<f64>,
}

/// Build the exact covariance of `(G_{f_i})` for the given member subset.
/// Tiny negative eigenvalues (≥ −1e-10) from roundoff are clipped to zero;
/// anything lower is an error.
pub fn build_model(
    class: &FunctionClass,
    subset: &[usize],
    mode: CovarianceMode,
) -> Result<GaussianModel, GaussianError> {
    if subset.is_empty() {
        return Err(GaussianError::EmptySubset);
    }
    let space = class.space();
    let k = subset.len();
    let mut cov = DMatrix::zeros(k, k);
    for (i, &fi) in subset.iter().enumerate() {
        for (j, &fj) in subset.iter().enumerate().skip(i) {
            let cross = compensated_sum(
                space
                    .probs()
                    .iter()
                    .zip(class.function(fi).iter().zip(class.function(fj)))
                    .map(|(p, (a, b))| p * a * b),
            );
            let value = match mode {
                CovarianceMode::Isonormal => cross,
                CovarianceMode::Bridge => cross - class.mean(fi) * class.mean(fj),
            };
            cov[(i, j)] = value;
            cov[(j, i)] = value;
        }
    }

    let eigen = cov.clone().symmetric_eigen();
    let min_eigenvalue = eigen.eigenvalues.min();
    if min_eigenvalue < -PSD_TOL {
        return Err(GaussianError::NotPsd { min_eigenvalue });
    }
    let clipped: DVector<f64> = eigen.eigenvalues.map(|l| l.max(0.0));
    let root = &eigen.eigenvectors
        * DMatrix::from_diagonal(&clipped.map(f64::sqrt))
        * eigen.eigenvectors.transpose();

    Ok(GaussianModel {
        subset: subset.to_vec(),
        mode,
        covariance: cov,
        root,
    })
}

impl GaussianModel {
    pub fn dim(&self) -> usize {
        self.subset.len()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// Increment metric `ρ₂(i, j) = (Cᵢᵢ + Cⱼⱼ − 2Cᵢⱼ)^{1/2}` between subset
    /// positions.
    pub fn rho2(&self, i: usize, j: usize) -> f64 {
        (self.covariance[(i, i)] + self.covariance[(j, j)] - 2.0 * self.covariance[(i, j)])
            .max(0.0)
            .sqrt()
    }

    /// Covariance matrix as CSV (one row per line).
    pub fn covariance_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.dim() {
            let row: Vec<String> = (0..self.dim())
                .map(|j| format!("{}", self.covariance[(i, j)]))
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// One joint draw, reproducible per `(seed, replicate)`.
    pub fn draw(&self, seed: u64, replicate: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, replicate));
        let z: DVector<f64> =
            DVector::from_iterator(self.dim(), (0..self.dim()).map(|_| rng.sample(StandardNormal)));
        let g = &self.root * z;
        g.iter().copied().collect()
    }
}

/// Matrix of joint draws, one row per replicate.
pub fn sample_gaussian(model: &GaussianModel, replicates: usize, seed: u64) -> Vec<Vec<f64>> {
    assert!(replicates >= 1);
    (0..replicates as u64)
        .into_par_iter()
        .map(|rep| model.draw(seed, rep))
        .collect()
}

/// Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub replicates: usize,
}

/// `𝔼 sup_f |G_f|` over the model's subset, by Monte Carlo.
pub fn sup_expectation(model: &GaussianModel, replicates: usize, seed: u64) -> McEstimate {
    let sups: Vec<f64> = (0..replicates as u64)
        .into_par_iter()
        .map(|rep| {
            model
                .draw(seed, rep)
                .iter()
                .map(|g| g.abs())
                .fold(0.0, f64::max)
        })
        .collect();
    mc_estimate(&sups)
}

/// `𝔼 sup { |G_f − G_g| : ρ₂(f, g) ≤ delta }`, by Monte Carlo over the
/// model's subset. Pairs at distance zero contribute zero, so a `delta`
/// below the minimal nonzero `ρ₂` gives exactly zero.
pub fn continuity_modulus(
    model: &GaussianModel,
    delta: f64,
    replicates: usize,
    seed: u64,
) -> McEstimate {
    assert!(delta > 0.0);
    let mut pairs = Vec::new();
    for i in 0..model.dim() {
        for j in (i + 1)..model.dim() {
            if model.rho2(i, j) <= delta {
                pairs.push((i, j));
            }
        }
    }
    let sups: Vec<f64> = (0..replicates as u64)
        .into_par_iter()
        .map(|rep| {
            let g = model.draw(seed, rep);
            pairs
                .iter()
                .map(|&(i, j)| (g[i] - g[j]).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    mc_estimate(&sups)
}

fn mc_estimate(values: &[f64]) -> McEstimate {
    let n = values.len();
    let mean = compensated_sum(values.iter().copied()) / n as f64;
    let var = compensated_sum(values.iter().map(|v| (v - mean) * (v - mean)))
        / (n.saturating_sub(1).max(1)) as f64;
    McEstimate {
        mean,
        std_error: (var / n as f64).sqrt(),
        replicates: n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::function_class::interval_indicators;
    use crate::measure::DiscreteSpace;
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn two_point_class() -> FunctionClass {
        let space = Arc::new(DiscreteSpace::new(vec![0.25, 0.75]).unwrap());
        FunctionClass::new(space, vec![vec![3.0, -1.0]]).unwrap()
    }

    #[test]
    fn covariances_are_exact() {
        let class = two_point_class();
        let anchor = class.anchor_index();
        let f = 0;
        let bridge = build_model(&class, &[anchor, f], CovarianceMode::Bridge).unwrap();
        // Var f = 𝔼f² − (𝔼f)² = 3 − 0 = 3
        assert_relative_eq!(bridge.covariance()[(1, 1)], 3.0, epsilon = 1e-12);
        assert_eq!(bridge.covariance()[(0, 0)], 0.0);
        assert_eq!(bridge.covariance()[(0, 1)], 0.0);

        let iso = build_model(&class, &[anchor, f], CovarianceMode::Isonormal).unwrap();
        assert_relative_eq!(iso.covariance()[(1, 1)], 3.0, epsilon = 1e-12);
        assert_eq!(iso.covariance()[(0, 1)], 0.0);
    }

    #[test]
    fn bridge_variance_of_constant_is_zero() {
        let space = Arc::new(DiscreteSpace::new(vec![0.25, 0.75]).unwrap());
        let class = FunctionClass::new(space, vec![vec![1.0, 1.0]]).unwrap();
        let model = build_model(&class, &[0], CovarianceMode::Bridge).unwrap();
        assert!(model.covariance()[(0, 0)].abs() <= 1e-12);
    }

    #[test]
    fn empty_subset_rejected() {
        let class = two_point_class();
        assert_eq!(
            build_model(&class, &[], CovarianceMode::Bridge).map(|_| ()),
            Err(GaussianError::EmptySubset)
        );
    }

    #[test]
    fn isonormal_rho2_matches_l2_distance() {
        let class = interval_indicators(6);
        let subset: Vec<usize> = (0..class.len()).collect();
        let model = build_model(&class, &subset, CovarianceMode::Isonormal).unwrap();
        let bridge = build_model(&class, &subset, CovarianceMode::Bridge).unwrap();
        for i in 0..class.len() {
            for j in 0..class.len() {
                let l2 = class.l2_distance(subset[i], subset[j]);
                assert_relative_eq!(model.rho2(i, j), l2, epsilon = 1e-10);
                assert!(bridge.rho2(i, j) <= l2 + 1e-10);
            }
        }
    }

    #[test]
    fn zero_covariance_draws_zero() {
        let space = Arc::new(DiscreteSpace::new(vec![1.0]).unwrap());
        let class = FunctionClass::new(space, vec![vec![0.0]]).unwrap();
        let model = build_model(&class, &[0], CovarianceMode::Isonormal).unwrap();
        for rep in 0..100 {
            assert_eq!(model.draw(3, rep), vec![0.0]);
        }
    }

    #[test]
    fn sample_variance_matches_model() {
        let class = two_point_class();
        let model = build_model(&class, &[0], CovarianceMode::Bridge).unwrap();
        let draws = sample_gaussian(&model, 100_000, 11);
        let xs: Vec<f64> = draws.iter().map(|d| d[0]).collect();
        let mean: f64 = xs.iter().sum::<f64>() / xs.len() as f64;
        let var: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / xs.len() as f64;
        assert!((var - 3.0).abs() < 0.1, "sample variance {var}");
    }

    #[test]
    fn empirical_covariance_close_entrywise() {
        let class = interval_indicators(4);
        // three nontrivial members
        let subset = vec![0usize, 1, 2];
        let model = build_model(&class, &subset, CovarianceMode::Bridge).unwrap();
        let draws = sample_gaussian(&model, 100_000, 5);
        let k = subset.len();
        for i in 0..k {
            for j in 0..k {
                let emp: f64 = draws.iter().map(|d| d[i] * d[j]).sum::<f64>()
                    / draws.len() as f64;
                assert!(
                    (emp - model.covariance()[(i, j)]).abs() < 0.05,
                    "entry ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn sup_expectation_half_normal_closed_form() {
        let class = two_point_class();
        let anchor = class.anchor_index();
        let model = build_model(&class, &[anchor, 0], CovarianceMode::Isonormal).unwrap();
        let est = sup_expectation(&model, 100_000, 17);
        let closed_form = (2.0 / std::f64::consts::PI).sqrt() * 3.0f64.sqrt();
        assert!(
            (est.mean - closed_form).abs() <= 3.0 * est.std_error,
            "mean {} vs closed form {closed_form} (se {})",
            est.mean,
            est.std_error
        );
    }

    #[test]
    fn sup_expectation_monotone_in_class() {
        let class = interval_indicators(6);
        let small: Vec<usize> = (0..5).collect();
        let large: Vec<usize> = (0..10).collect();
        let m_small = build_model(&class, &small, CovarianceMode::Isonormal).unwrap();
        let m_large = build_model(&class, &large, CovarianceMode::Isonormal).unwrap();
        let e_small = sup_expectation(&m_small, 20_000, 23).mean;
        let e_large = sup_expectation(&m_large, 20_000, 23).mean;
        assert!(e_large >= e_small - 1e-3);
    }

    #[test]
    fn continuity_modulus_behaviour() {
        let class = interval_indicators(8);
        let subset: Vec<usize> = (0..class.len()).collect();
        let model = build_model(&class, &subset, CovarianceMode::Isonormal).unwrap();
        // below the minimal nonzero distance only identical pairs qualify
        let tiny = continuity_modulus(&model, 0.05, 2000, 3);
        assert_eq!(tiny.mean, 0.0);
        // nondecreasing in delta with shared seed
        let mut prev = 0.0;
        for delta in [0.2, 0.4, 0.8, 1.2] {
            let est = continuity_modulus(&model, delta, 2000, 3).mean;
            assert!(est >= prev - 1e-12);
            prev = est;
        }
        // at the diameter every pair is included
        let diameter = (0..model.dim())
            .flat_map(|i| (0..model.dim()).map(move |j| (i, j)))
            .map(|(i, j)| model.rho2(i, j))
            .fold(0.0, f64::max);
        let all = continuity_modulus(&model, diameter + 0.01, 2000, 3);
        assert!(all.mean >= prev);
    }

    #[test]
    fn draws_reproducible_across_thread_counts() {
        let class = interval_indicators(5);
        let subset: Vec<usize> = (0..6).collect();
        let model = build_model(&class, &subset, CovarianceMode::Bridge).unwrap();
        let pool1 = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let pool8 = rayon::ThreadPoolBuilder::new()
            .num_threads(8)
            .build()
            .unwrap();
        let a = pool1.install(|| sample_gaussian(&model, 500, 99));
        let b = pool8.install(|| sample_gaussian(&model, 500, 99));
        assert_eq!(a, b);
    }
}
