//! Randomized check that action costs ignore the total-time term.

use rand::Rng;
use tagplan::numeric::{AssignOp, Expr};
use tagplan::task::{Metric, NumEffect, DEFAULT_EPSILON};
use tagplan::TaskBuilder;

/// Builds one random linear metric and action, and compares its cost under
/// two total-time coefficients against `Σ weight · change`.
pub fn invariance_case(rng: &mut impl Rng) -> Result<(), String> {
    let n_vars = rng.gen_range(1..=4);
    let inits: Vec<f64> = (0..n_vars).map(|_| rng.gen_range(-50.0..50.0f64).round()).collect();
    let weights: Vec<f64> = (0..n_vars).map(|_| f64::from(rng.gen_range(0..=20u32)) / 4.0).collect();
    let effects: Vec<(usize, f64)> =
        (0..rng.gen_range(1..=3)).map(|_| (rng.gen_range(0..n_vars), f64::from(rng.gen_range(-10..=100)))).collect();
    let constant = rng.gen_range(-5.0..5.0f64).round();
    let build = |total_time: f64| {
        let mut b = TaskBuilder::new("metric");
        let vars: Vec<_> = inits.iter().enumerate().map(|(i, v)| b.var(&format!("(v{i})"), *v)).collect();
        let a = b.simple("act", 2.0, &[], &["done"], &[]);
        for &(v, amount) in &effects {
            b.action_mut(a).num_eff_end.push(NumEffect {
                var: vars[v],
                op: AssignOp::Increase,
                expr: Expr::Const(amount),
            });
        }
        let terms = vars.iter().zip(&weights).map(|(v, w)| (*v, *w)).collect();
        b.metric(Metric::Linear { constant, total_time, terms });
        b.build().actions[0].cost
    };
    let delta: f64 = effects.iter().map(|&(v, amount)| weights[v] * amount).sum();
    let expected = if delta <= 0.0 { DEFAULT_EPSILON } else { delta };
    let without = build(0.0);
    let with = build(rng.gen_range(0.1..100.0));
    if (without - with).abs() > 1e-9 {
        return Err(format!("cost {without} without total-time, {with} with it"));
    }
    if (without - expected).abs() > 1e-9 {
        return Err(format!("cost {without}, expected {expected} for {effects:?} weights {weights:?}"));
    }
    Ok(())
}
