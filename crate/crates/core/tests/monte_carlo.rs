// SPDX-License-Identifier: Apache-2.0

use num_traits::ToPrimitive;

use cktchan::circuit::constant_circuit;
use cktchan::experiment::{build_code, exact_pe, run_monte_carlo, ErrorRule, ExperimentConfig, ParamsConfig};

fn config(seed: u64, trials: u64) -> ExperimentConfig {
    ExperimentConfig {
        params: ParamsConfig {
            n: 10,
            p: 0.2,
            r: 0.5,
            rate: 0.3,
            rho: 0.5,
            c: 1,
            s: 2,
            slack: None,
        },
        mode: cktchan::code::CodeMode::Concat,
        strategy: "oblivious".into(),
        seed,
        trials,
        exact: false,
        circuit_file: None,
        codebook_file: None,
        family: None,
        error_rule: ErrorRule::WorstCase,
    }
}

// The oblivious strategy targets exactly the uniform-weight error rate of the
// constant circuit, so its Wilson interval should cover that value.
#[test]
fn oblivious_estimates_cover_the_exact_rate() {
    let base = config(11, 400);
    let params = base.check().unwrap();
    let code = build_code(&base, &params).unwrap();
    let exact = exact_pe(&code, &[constant_circuit(10, params.obs_width)], ErrorRule::UniformExactWeight)
        .unwrap()
        .value;
    let exact = exact.to_f64().unwrap();
    assert!(exact > 0.0 && exact < 1.0, "degenerate instance: {exact}");

    let mut covered = 0;
    for rep in 0..100 {
        // Same code every time: only the trial streams move with the seed.
        let cfg = config(11, 400);
        let res = run_with_trial_offset(&cfg, rep);
        covered += (res.0 <= exact && exact <= res.1) as usize;
    }
    // Nominal coverage is 95%, so 95 of 100 is a coin flip; 90 is the 1%
    // lower quantile of Binomial(100, 0.95).
    assert!(covered >= 90, "{covered}/100 intervals cover {exact}");
}

/// Runs `trials` fresh trials by skipping `rep * trials` trial streams.
fn run_with_trial_offset(cfg: &ExperimentConfig, rep: u64) -> (f64, f64) {
    let mut long = cfg.clone();
    long.trials = cfg.trials * (rep + 1);
    let all = run_monte_carlo(&long).unwrap();
    let mut head = cfg.clone();
    head.trials = cfg.trials * rep;
    let before = if rep == 0 { 0 } else { run_monte_carlo(&head).unwrap().errors };
    let k = all.errors - before;
    wilson(k, cfg.trials)
}

fn wilson(k: u64, t: u64) -> (f64, f64) {
    let z = 1.959963984540054f64;
    let (k, t) = (k as f64, t as f64);
    let ph = k / t;
    let den = 1.0 + z * z / t;
    let mid = (ph + z * z / (2.0 * t)) / den;
    let half = z * (ph * (1.0 - ph) / t + z * z / (4.0 * t * t)).sqrt() / den;
    (mid - half, mid + half)
}

#[test]
fn estimate_converges_with_more_trials() {
    let cfg = config(5, 20_000);
    let params = cfg.check().unwrap();
    let code = build_code(&cfg, &params).unwrap();
    let exact = exact_pe(&code, &[constant_circuit(10, params.obs_width)], ErrorRule::UniformExactWeight)
        .unwrap()
        .value
        .to_f64()
        .unwrap();
    let res = run_monte_carlo(&cfg).unwrap();
    assert!((res.p_hat - exact).abs() < 0.02, "{} vs {exact}", res.p_hat);
    assert!(res.ci_low.unwrap() <= exact && exact <= res.ci_high.unwrap());
}

