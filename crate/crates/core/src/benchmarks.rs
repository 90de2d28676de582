//! Synthetic multi-fidelity objectives.
//!
//! Budget means "number of repetitions averaged": evaluating at budget `b`
//! averages `b` independently seeded noisy draws, so the noise variance
//! shrinks as `sigma^2 / b` while the expected value stays the same at every
//! fidelity. Repetition noise is derived from `(seed, repetition index)`,
//! which makes evaluations deterministic and keeps losses at different
//! budgets highly rank-correlated.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::optimizer::{mix_seed, Objective, ObjectiveError};
use crate::space::{Condition, Configuration, DesignSpace, Hyperparameter, ParamValue};

/// A named synthetic objective with its design space and known optimum.
pub struct SyntheticObjective {
    pub name: String,
    pub space: DesignSpace,
    pub noise_sigma: f64,
    pub optimum: Vec<(String, ParamValue)>,
    pub optimum_loss: f64,
    kind: BenchKind,
}

enum BenchKind {
    NoisySphere { d: usize },
    ConditionalMixed,
}

impl SyntheticObjective {
    /// Looks up a builtin by name: `noisy-sphere-d<k>` or
    /// `conditional-mixed`.
    pub fn builtin(name: &str) -> Option<SyntheticObjective> {
        if let Some(rest) = name.strip_prefix("noisy-sphere-d") {
            let d: usize = rest.parse().ok().filter(|&d| (1..=64).contains(&d))?;
            return Some(SyntheticObjective::noisy_sphere(d, 0.1));
        }
        if name == "conditional-mixed" {
            return Some(SyntheticObjective::conditional_mixed(0.05));
        }
        None
    }

    /// `d` continuous coordinates on [0,1] with default 0; optimum at the
    /// center of the cube.
    pub fn noisy_sphere(d: usize, sigma: f64) -> SyntheticObjective {
        let hps = (0..d)
            .map(|i| Hyperparameter::continuous(&format!("x{i}"), 0.0, 1.0, false, 0.0))
            .collect();
        let space = DesignSpace::build(hps, vec![]).expect("sphere space is valid");
        SyntheticObjective {
            name: format!("noisy-sphere-d{d}"),
            optimum: (0..d).map(|i| (format!("x{i}"), ParamValue::Float(0.5))).collect(),
            optimum_loss: 0.0,
            noise_sigma: sigma,
            space,
            kind: BenchKind::NoisySphere { d },
        }
    }

    /// A categorical branch with one continuous child per branch; only the
    /// chosen branch's child is active. The global optimum sits on branch
    /// "b" at child 0.7 with loss 0.
    pub fn conditional_mixed(sigma: f64) -> SyntheticObjective {
        let space = DesignSpace::build(
            vec![
                Hyperparameter::categorical("branch", &["a", "b"], "a"),
                Hyperparameter::continuous("child_a", 0.0, 1.0, false, 0.5),
                Hyperparameter::continuous("child_b", 0.0, 1.0, false, 0.5),
            ],
            vec![
                Condition::new("child_a", "branch", vec!["a".into()]),
                Condition::new("child_b", "branch", vec!["b".into()]),
            ],
        )
        .expect("conditional space is valid");
        SyntheticObjective {
            name: "conditional-mixed".to_string(),
            optimum: vec![
                ("branch".to_string(), ParamValue::Text("b".into())),
                ("child_b".to_string(), ParamValue::Float(0.7)),
            ],
            optimum_loss: 0.0,
            noise_sigma: sigma,
            space,
            kind: BenchKind::ConditionalMixed,
        }
    }
}

impl Objective for SyntheticObjective {
    fn evaluate(&self, config: &Configuration, budget: f64, seed: u64) -> Result<f64, ObjectiveError> {
        if let Some(v) = self.space.check_validity(config).into_iter().next() {
            return Err(ObjectiveError(format!("InvalidConfiguration: {v}")));
        }
        match self.kind {
            BenchKind::NoisySphere { d } => {
                let mut x = Vec::with_capacity(d);
                for i in 0..d {
                    x.push(config.value(i).and_then(|v| v.as_f64()).ok_or_else(|| {
                        ObjectiveError(format!("missing coordinate x{i}"))
                    })?);
                }
                Ok(noisy_sphere_loss(&x, budget, seed, self.noise_sigma))
            }
            BenchKind::ConditionalMixed => {
                let branch_a = config.value(0).and_then(|v| v.as_str()) == Some("a");
                let child_idx = if branch_a { 1 } else { 2 };
                let child = config
                    .value(child_idx)
                    .and_then(|v| v.as_f64())
                    .ok_or_else(|| ObjectiveError("active child is missing".to_string()))?;
                Ok(conditional_mixed_loss(branch_a, child, budget, seed, self.noise_sigma))
            }
        }
    }
}

/// Mean over `round(budget)` repetitions of `||x - 0.5||^2 + eps_r`,
/// `eps_r ~ Normal(0, sigma^2)` seeded by `(seed, r)`.
pub fn noisy_sphere_loss(x: &[f64], budget: f64, seed: u64, sigma: f64) -> f64 {
    let reps = budget.round().max(1.0) as u64;
    let base: f64 = x.iter().map(|&v| (v - 0.5).powi(2)).sum();
    let mut total = 0.0;
    for r in 0..reps {
        total += base + sigma * standard_normal(mix_seed(seed, r));
    }
    total / reps as f64
}

/// `(child-0.3)^2 + 0.1` on branch "a", `(child-0.7)^2` on branch "b",
/// plus `Normal(0, sigma^2 / budget)` noise.
pub fn conditional_mixed_loss(branch_a: bool, child: f64, budget: f64, seed: u64, sigma: f64) -> f64 {
    let base = if branch_a { (child - 0.3).powi(2) + 0.1 } else { (child - 0.7).powi(2) };
    let reps = budget.round().max(1.0);
    base + sigma / reps.sqrt() * standard_normal(mix_seed(seed, 0))
}

fn standard_normal(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    StandardNormal.sample(&mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::spearman_from_pairs;
    use rand::SeedableRng;

    #[test]
    fn sphere_is_zero_at_optimum_without_noise() {
        for budget in [1.0, 3.0, 9.0] {
            assert_eq!(noisy_sphere_loss(&[0.5, 0.5, 0.5], budget, 42, 0.0), 0.0);
        }
    }

    #[test]
    fn sphere_default_corner_loss() {
        assert_eq!(noisy_sphere_loss(&[0.0], 5.0, 7, 0.0), 0.25);
    }

    #[test]
    fn averaging_shrinks_variance_by_the_budget() {
        let x = [0.5];
        let losses = |budget: f64| -> Vec<f64> {
            (0..2000u64).map(|seed| noisy_sphere_loss(&x, budget, seed, 0.1)).collect()
        };
        let var = |v: &[f64]| {
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)
        };
        let ratio = var(&losses(9.0)) / var(&losses(1.0));
        assert!(
            (1.0 / 12.0..=1.0 / 6.0).contains(&ratio),
            "variance ratio {ratio}, expected near 1/9"
        );
    }

    #[test]
    fn fidelities_are_unbiased() {
        let x = [0.2, 0.9];
        let mean = |budget: f64| -> f64 {
            (0..2000u64).map(|seed| noisy_sphere_loss(&x, budget, seed, 0.1)).sum::<f64>() / 2000.0
        };
        let tolerance = 3.0 * 0.1 / (2000f64).sqrt();
        assert!((mean(1.0) - mean(9.0)).abs() <= tolerance);
    }

    #[test]
    fn budgets_are_rank_correlated_by_construction() {
        let bench = SyntheticObjective::noisy_sphere(2, 0.1);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let configs: Vec<Configuration> = (0..50).map(|_| bench.space.sample(&mut rng)).collect();
        let avg_loss = |config: &Configuration, budget: f64| -> f64 {
            (0..20u64)
                .map(|seed| bench.evaluate(config, budget, seed).unwrap())
                .sum::<f64>()
                / 20.0
        };
        let low: Vec<f64> = configs.iter().map(|c| avg_loss(c, 1.0)).collect();
        let high: Vec<f64> = configs.iter().map(|c| avg_loss(c, 9.0)).collect();
        let rho = spearman_from_pairs(&low, &high).unwrap();
        assert!(rho >= 0.8, "cross-budget rank correlation {rho}");
    }

    #[test]
    fn conditional_optimum_in_the_low_noise_limit() {
        let near_zero = conditional_mixed_loss(false, 0.7, 1e4, 3, 0.05);
        assert!(near_zero.abs() < 0.002, "loss {near_zero}");
        let branch_a = conditional_mixed_loss(true, 0.3, 1e4, 3, 0.05);
        assert!((branch_a - 0.1).abs() < 0.002, "loss {branch_a}");
    }

    #[test]
    fn conditional_rejects_stale_children() {
        let bench = SyntheticObjective::conditional_mixed(0.05);
        // branch=b but child_a carries a value
        let config = Configuration::from_raw_values(vec![
            Some(ParamValue::Text("b".into())),
            Some(ParamValue::Float(0.2)),
            Some(ParamValue::Float(0.7)),
        ]);
        let err = bench.evaluate(&config, 1.0, 0).unwrap_err();
        assert!(err.0.contains("InvalidConfiguration"));
    }

    #[test]
    fn builtin_registry_parses_names() {
        assert_eq!(SyntheticObjective::builtin("noisy-sphere-d3").unwrap().space.len(), 3);
        assert_eq!(SyntheticObjective::builtin("conditional-mixed").unwrap().space.len(), 3);
        assert!(SyntheticObjective::builtin("noisy-sphere-d0").is_none());
        assert!(SyntheticObjective::builtin("unknown").is_none());
    }
}
