// SPDX-License-Identifier: Apache-2.0

//! Built-in verification suites over fixed, seeded fixtures. Each suite
//! yields one row per checked tuple or bound.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{
    binomial_concentration_check, compute_q, sum_inequality, verify_claims, verify_variation_bounds, AnalysisInstance,
    ClaimSweep,
};
use crate::bitword::{enumerate_ball, sample_exact_weight, BitWord};
use crate::circuit::{build_projection, constant_circuit, observation_partition, random_circuit, ObservationPartition};
use crate::code::{max_ball_count, sample_inner, CodeMode, ConcatenatedCode, SystemParams};
use crate::error::{usage, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Claims,
    Variation,
    Binomial,
    ListDecode,
    Identity,
    All,
}

impl Suite {
    pub fn parse(s: &str) -> Result<Suite> {
        Ok(match s {
            "claims" => Suite::Claims,
            "variation" => Suite::Variation,
            "binomial" => Suite::Binomial,
            "listdecode" => Suite::ListDecode,
            "identity" => Suite::Identity,
            "all" => Suite::All,
            _ => return usage(format!("unknown suite {s:?}")),
        })
    }
}

/// Outcome column: `true`/`false` for hard checks, `diag` for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
    Diagnostic,
}

impl Outcome {
    fn of(ok: bool) -> Outcome {
        if ok {
            Outcome::Pass
        } else {
            Outcome::Fail
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Pass => "true",
            Outcome::Fail => "false",
            Outcome::Diagnostic => "diag",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub instance_id: String,
    pub check_name: String,
    pub lhs: String,
    pub rhs: String,
    pub pass: Outcome,
}

fn row(id: impl ToString, name: &str, lhs: impl ToString, rhs: impl ToString, pass: Outcome) -> CheckRow {
    CheckRow {
        instance_id: id.to_string(),
        check_name: name.to_string(),
        lhs: lhs.to_string(),
        rhs: rhs.to_string(),
        pass,
    }
}

pub fn all_passed(rows: &[CheckRow]) -> bool {
    rows.iter().all(|r| r.pass != Outcome::Fail)
}

pub fn rows_csv(rows: &[CheckRow], header: &str) -> String {
    let mut out = header.to_string();
    out.push_str("instance_id,check_name,lhs,rhs,pass\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{}", r.instance_id, r.check_name, r.lhs, r.rhs, r.pass.as_str());
    }
    out
}

pub fn run_suite(suite: Suite, seed: u64) -> Result<Vec<CheckRow>> {
    match suite {
        Suite::Claims => claims_suite(seed, 20),
        Suite::Variation => variation_suite(seed),
        Suite::Binomial => binomial_suite(),
        Suite::ListDecode => listdecode_suite(seed, 1000),
        Suite::Identity => identity_suite(seed, 200),
        Suite::All => {
            let mut rows = identity_suite(seed, 200)?;
            rows.extend(claims_suite(seed, 20)?);
            rows.extend(variation_suite(seed)?);
            rows.extend(binomial_suite()?);
            rows.extend(listdecode_suite(seed, 1000)?);
            Ok(rows)
        }
    }
}

/// A code, a random two-output circuit, the observation of a random message, and a random error.
pub fn random_instance(rng: &mut ChaCha8Rng, n: usize, rho_n: usize, rate_n: usize, pn: usize) -> Result<(ConcatenatedCode, ObservationPartition, BitWord, BitWord)> {
    let params = SystemParams::from_dims(n, rho_n, rate_n, pn, 2)?;
    let code = ConcatenatedCode::from_seed(&params, CodeMode::Concat, rng.gen())?;
    let gates = rng.gen_range(1..=8);
    let partition = observation_partition(&random_circuit(n, gates, 2, rng))?;
    let m0 = rng.gen_range(0..code.messages());
    let psi = partition.psi_of(&code.encode(m0)?);
    let w = rng.gen_range(0..=pn);
    let e = sample_exact_weight(n, w, rng)?;
    Ok((code, partition, psi, e))
}

/// Both sides of the `q = Phi / |O_psi ∩ C_n|` identity on random instances.
pub fn identity_suite(seed: u64, count: usize) -> Result<Vec<CheckRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1d);
    let mut rows = Vec::with_capacity(count);
    for id in 0..count {
        let n = rng.gen_range(6..=12);
        let rho_n = rng.gen_range(2..=5);
        let rate_n = rng.gen_range(1..=rho_n);
        let pn = rng.gen_range(0..=2);
        let (code, part, psi, e) = random_instance(&mut rng, n, rho_n, rate_n, pn)?;
        let i = rng.gen_range(1..=code.inner.len());
        let qc = compute_q(&code, &part, &psi, &e, i)?;
        rows.push(row(
            id,
            "q_identity",
            format!("{}*{}", qc.direct_hits, qc.count),
            format!("{}*{}", qc.phi_total, qc.direct_count),
            Outcome::of(qc.identity_holds),
        ));
    }
    Ok(rows)
}

/// The claim-sweep family: `n = 8`, `rho_n = 3`, `R_n = 2`, `pn = 1`.
pub fn claim_family(rng: &mut ChaCha8Rng) -> Result<(ConcatenatedCode, ObservationPartition, BitWord)> {
    let (code, part, psi, _) = random_instance(rng, 8, 3, 2, 1)?;
    Ok((code, part, psi))
}

/// Exhaustive claim sweeps: every error in the ball, every `i`, every `(m, k, z)`.
pub fn claims_suite(seed: u64, codebooks: usize) -> Result<Vec<CheckRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc1);
    let mut rows = Vec::new();
    for id in 0..codebooks {
        let (code, part, psi) = claim_family(&mut rng)?;
        let mut total = crate::analysis::ClaimReport::default();
        for e in enumerate_ball(&BitWord::zeros(8), 1)? {
            for i in 1..=code.inner.len() {
                total.merge(&verify_claims(&code, &part, &psi, &e, i, &ClaimSweep::default())?);
            }
        }
        for c in 0..4 {
            let bad = total.violations.iter().filter(|v| v.claim as usize == c + 1).count();
            rows.push(row(id, &format!("claim{}_violations", c + 1), bad, 0, Outcome::of(bad == 0)));
            rows.push(row(
                id,
                &format!("claim{}_checked_vs_filtered", c + 1),
                total.checked[c],
                total.skipped[c],
                Outcome::Diagnostic,
            ));
        }
    }
    Ok(rows)
}

/// Instances where typicality can hold: `n = 12`, `rho_n = 5`, `pn = 1`, cycling
/// through `R_n = 4` and `R_n = 5` under a constant circuit and `R_n = 4` under a
/// one-bit projection.
pub fn lipschitz_family(rng: &mut ChaCha8Rng, count: usize) -> Result<Vec<AnalysisInstance>> {
    let mut out = Vec::with_capacity(count);
    for id in 0..count {
        let rate_n = if id % 3 == 1 { 5 } else { 4 };
        let params = SystemParams::from_dims(12, 5, rate_n, 1, 1)?;
        let code = ConcatenatedCode::from_seed(&params, CodeMode::Concat, rng.gen())?;
        let circuit = if id % 3 == 2 { build_projection(12, &[rng.gen_range(1..=12)])? } else { constant_circuit(12, 1) };
        let partition = observation_partition(&circuit)?;
        let psi = partition.psi_of(&code.encode(rng.gen_range(0..code.messages()))?);
        let e = sample_exact_weight(12, 1, rng)?;
        out.push(AnalysisInstance {
            id,
            code,
            partition,
            psi,
            e,
        });
    }
    Ok(out)
}

pub fn variation_suite(seed: u64) -> Result<Vec<CheckRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5a);
    let mut rows = Vec::new();
    // Sum inequality on the claim family.
    for id in 0..20 {
        let (code, part, psi) = claim_family(&mut rng)?;
        for i in [1usize, 2] {
            for e in enumerate_ball(&BitWord::zeros(8), 1)? {
                let rep = sum_inequality(&code, &part, &psi, &e, i)?;
                rows.push(row(
                    format!("{id}:e{}", e.index()),
                    &format!("sum_inequality_i{i}"),
                    rep.max_sum,
                    i + 1,
                    Outcome::of(rep.violations.is_empty()),
                ));
            }
        }
    }
    let instances = lipschitz_family(&mut rng, 18)?;
    let rep = verify_variation_bounds(&instances, 2)?;
    for d in &rep.diagnostics {
        let bad = rep.lipschitz_violations.iter().filter(|v| v.id == d.id).count();
        match (d.typical, d.k_t) {
            (true, Some(k)) => rows.push(row(d.id, "lipschitz_max_delta", d.max_delta, k, Outcome::of(bad == 0))),
            _ => rows.push(row(d.id, "lipschitz_skipped_atypical", d.max_delta, "", Outcome::Diagnostic)),
        }
        let tb = d.typical_bound.map(|b| b.to_string()).unwrap_or_default();
        rows.push(row(d.id, "v_prime_vs_typical_bound", d.v_prime, tb, Outcome::Diagnostic));
        rows.push(row(d.id, "v_prime_vs_global_bound", d.v_prime, d.global_bound, Outcome::Diagnostic));
    }
    Ok(rows)
}

/// Blocklengths, rates and threshold offsets (in units of `sqrt(mu)`) of the binomial grid.
pub const BINOMIAL_NS: [usize; 6] = [8, 16, 24, 32, 48, 64];
pub const BINOMIAL_RATES: [f64; 3] = [0.25, 0.5, 0.75];
pub const BINOMIAL_OFFSETS: [f64; 3] = [2.0, 3.0, 4.0];

pub fn binomial_suite() -> Result<Vec<CheckRow>> {
    let pts = binomial_concentration_check(&BINOMIAL_NS, &BINOMIAL_RATES, &BINOMIAL_OFFSETS)?;
    let mut rows = Vec::with_capacity(2 * pts.len());
    for pt in pts {
        let id = format!("n{}:R{}:a{}:t{}", pt.n, pt.rate_n, pt.log2_a, pt.t_l);
        let ok_l = pt.lower_exact <= pt.lower_bound * (1.0 + 1e-9);
        let ok_u = pt.upper_exact <= pt.upper_bound * (1.0 + 1e-9);
        rows.push(row(&id, "lower_tail", pt.lower_exact, pt.lower_bound, Outcome::of(ok_l)));
        rows.push(row(&id, "upper_tail", pt.upper_exact, pt.upper_bound, Outcome::of(ok_u)));
    }
    Ok(rows)
}

/// Exhaustive `[n^2, p]` check at `n = 20`, `rho = 0.3`, `p = 0.1`.
pub fn listdecode_suite(seed: u64, samples: usize) -> Result<Vec<CheckRow>> {
    let params = SystemParams::new(20, 0.1, 0.25, 0.25, 0.3)?;
    let ell = params.n * params.n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1e);
    let mut passed = 0usize;
    let mut worst = 0usize;
    for _ in 0..samples {
        let inner = sample_inner(&params, &mut rng)?;
        let mb = max_ball_count(&inner, params.pn)?;
        worst = worst.max(mb);
        passed += (mb <= ell) as usize;
    }
    Ok(vec![
        row("n20", "list_decodable_fraction", format!("{passed}/{samples}"), "999/1000", Outcome::of(passed * 1000 >= 999 * samples)),
        row("n20", "worst_ball_count", worst, ell, Outcome::Diagnostic),
    ])
}
