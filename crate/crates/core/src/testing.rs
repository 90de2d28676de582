//! Randomized space generation for property and acceptance tests.

use rand::Rng;

use crate::space::{Condition, DesignSpace, Hyperparameter, ParamValue};

/// Generates a random valid mixed-type space: 1..=6 hyperparameters of
/// random kinds, with occasional conditions on earlier categorical,
/// ordinal, or integer parents (declaration order is already topological).
pub fn random_space<R: Rng + ?Sized>(rng: &mut R) -> DesignSpace {
    let d = rng.random_range(1..=6);
    let mut hps: Vec<Hyperparameter> = Vec::with_capacity(d);
    let mut conditions = Vec::new();

    for i in 0..d {
        let name = format!("p{i}");
        let hp = match rng.random_range(0..4) {
            0 => {
                let log = rng.random_bool(0.25);
                let lower = if log { 10f64.powf(rng.random_range(-6.0..0.0)) } else { rng.random_range(-10.0..5.0) };
                let width = 10f64.powf(rng.random_range(-2.0..2.0));
                let upper = if log { lower * 10f64.powf(rng.random_range(0.5..4.0)) } else { lower + width };
                let default = if log {
                    (lower * upper).sqrt()
                } else {
                    lower + rng.random::<f64>() * (upper - lower)
                };
                Hyperparameter::continuous(&name, lower, upper, log, default)
            }
            1 => {
                let log = rng.random_bool(0.2);
                let lower = if log { rng.random_range(1..5) } else { rng.random_range(-20..10) };
                let upper = lower + rng.random_range(0..40);
                let default = rng.random_range(lower..=upper);
                Hyperparameter::integer(&name, lower, upper, log, default)
            }
            2 => {
                let k = rng.random_range(2..=5);
                let choices: Vec<String> = (0..k).map(|c| format!("c{c}")).collect();
                let refs: Vec<&str> = choices.iter().map(|s| s.as_str()).collect();
                let default = refs[rng.random_range(0..k)];
                Hyperparameter::categorical(&name, &refs, default)
            }
            _ => {
                let k = rng.random_range(2..=5);
                let choices: Vec<String> = (0..k).map(|c| format!("o{c}")).collect();
                let refs: Vec<&str> = choices.iter().map(|s| s.as_str()).collect();
                let default = refs[rng.random_range(0..k)];
                Hyperparameter::ordinal(&name, &refs, default)
            }
        };
        hps.push(hp);
    }

    for child in 1..d {
        if !rng.random_bool(0.35) {
            continue;
        }
        // pick a discrete parent declared earlier
        let candidates: Vec<usize> = (0..child)
            .filter(|&p| {
                matches!(
                    hps[p].kind,
                    crate::space::HpKind::Categorical { .. }
                        | crate::space::HpKind::Ordinal { .. }
                        | crate::space::HpKind::Integer { .. }
                )
            })
            .collect();
        let Some(&parent) = candidates.get(rng.random_range(0..candidates.len().max(1))) else {
            continue;
        };
        let activating: Vec<ParamValue> = match &hps[parent].kind {
            crate::space::HpKind::Categorical { choices }
            | crate::space::HpKind::Ordinal { choices } => {
                let take = rng.random_range(1..=choices.len());
                choices[..take].iter().map(|c| ParamValue::Text(c.clone())).collect()
            }
            crate::space::HpKind::Integer { lower, upper, .. } => {
                let take = rng.random_range(1..=3.min((upper - lower + 1) as usize));
                (0..take as i64).map(|o| ParamValue::Int((lower + o).min(*upper))).collect()
            }
            _ => continue,
        };
        conditions.push(Condition::new(&hps[child].name.clone(), &hps[parent].name.clone(), activating));
    }

    DesignSpace::build(hps, conditions).expect("generated space is valid")
}
