// SPDX-License-Identifier: Apache-2.0

//! Exact finite-n versions of the quantities used in the achievability
//! argument: the confusion indicators `phi`, their sum `Phi`, the conditional
//! probability `q`, its smoothed version `q'`, the replacement variation `V'`
//! and codebook typicality. Also the brute-force checks built on them.
//!
//! Every function here works on a packed view of the instance and therefore
//! needs `n <= PARTITION_MAX_INPUTS`, which any [`ObservationPartition`] already
//! guarantees.

use num_rational::Ratio;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bitword::{enumerate_ball, BitWord};
use crate::circuit::{build_projection, observation_partition, Circuit, ObservationPartition};
use crate::code::{
    list_decode_inner, max_ball_count, rank_inner, sample_inner, CodeMode, ConcatenatedCode, SystemParams,
};
use crate::error::{capacity, usage, Error, Result};

/// Exact `V'` guard: blocklength.
pub const VARIATION_MAX_N: usize = 12;
/// Exact `V'` guard: inner index width.
pub const VARIATION_MAX_INDEX_BITS: usize = 5;
/// Largest number of `(m, k, z)` tuples a single claim sweep may visit.
pub const CLAIM_MAX_TUPLES: u64 = 1 << 30;

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    /// List-size cap `L`.
    pub list_cap: usize,
    /// Target error tolerance.
    pub eps_e: f64,
    /// List index under study, `1 <= i <= list_cap`.
    pub i: usize,
}

impl AnalysisConfig {
    pub fn new(list_cap: usize, eps_e: f64, i: usize) -> Result<AnalysisConfig> {
        if list_cap < 1 {
            return usage("list cap must be at least 1");
        }
        if i < 1 || i > list_cap {
            return usage(format!("list index {i} outside 1..={list_cap}"));
        }
        if !(eps_e > 0.0) {
            return usage("error tolerance must be positive");
        }
        Ok(AnalysisConfig { list_cap, eps_e, i })
    }

    /// Smallest integer cap strictly above `1 / eps_rho`.
    pub fn min_list_cap(eps_rho: f64) -> usize {
        (1.0 / eps_rho).floor() as usize + 1
    }
}

/// The proof quantities of one `(code, partition, psi, e, i)` instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ProofQuantities {
    pub q: Ratio<u64>,
    pub q_prime: f64,
    pub phi_by_m: Vec<bool>,
    pub phi_total: u64,
    /// `|O_psi ∩ C_n|`, counted over messages.
    pub count: u64,
    /// `max(count, t_L)`.
    pub t: f64,
    pub t_l: f64,
    pub t_u: f64,
    pub ell: f64,
    pub delta0_prime: f64,
    pub obs_prob: Ratio<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TypicalityReport {
    /// Whether `|O_psi|` meets the size hypothesis; flags are still computed when it does not.
    pub applicable: bool,
    pub cell_size: u64,
    pub count: u64,
    pub delta0_prime: f64,
    pub ell: f64,
    pub t_l: f64,
    pub t_u: f64,
    /// `max_y |C_in ∩ B_pn(y)|`.
    pub max_ball: usize,
    pub list_decodable: bool,
    pub count_in_range: bool,
    pub typical: bool,
}

/// Thresholds derived from the size of one observation set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub delta0_prime: f64,
    pub ell: f64,
    pub t_l: f64,
    pub t_u: f64,
}

/// `delta0'` from `|O_psi| = 2^{(1-R)n + delta0' n}`, then `ell`, `t_L`, `t_U`.
pub fn thresholds(n: usize, rate_n: usize, cell_size: u64) -> Thresholds {
    let dn = (cell_size as f64).log2() - (n - rate_n) as f64;
    let main = dn.exp2();
    let side = (0.75 * dn).exp2();
    Thresholds {
        delta0_prime: dn / n as f64,
        ell: (4.0 * dn / 13.0).exp2(),
        t_l: main - side,
        t_u: main + side,
    }
}

/// Single-block view of an instance. Codewords fit in one `u64` because the
/// partition caps `n`.
struct Packed<'a> {
    pn: u32,
    e: u64,
    psi: u32,
    cells: &'a [u32],
    outer: &'a [u64],
    is_outer: Vec<bool>,
}

fn packed<'a>(code: &'a ConcatenatedCode, partition: &'a ObservationPartition, psi: &BitWord, e: &BitWord) -> Result<Packed<'a>> {
    let n = code.n();
    if partition.n() != n {
        return usage(format!("partition is over {} bits, code has n = {n}", partition.n()));
    }
    if e.len() != n {
        return usage(format!("error length {} differs from n = {n}", e.len()));
    }
    if e.weight() > code.params.pn {
        return usage(format!("error weight {} exceeds budget {}", e.weight(), code.params.pn));
    }
    let mut is_outer = vec![false; code.inner.len()];
    for &w in code.outer.words() {
        is_outer[w as usize] = true;
    }
    // A word of the wrong width names no cell.
    let psi = if psi.len() == partition.width() { psi.index() as u32 } else { u32::MAX };
    Ok(Packed {
        pn: code.params.pn as u32,
        e: e.index(),
        psi,
        cells: partition.cell_table(),
        outer: code.outer.words(),
        is_outer,
    })
}

fn packed_words(code: &ConcatenatedCode) -> Vec<u64> {
    (0..code.inner.len()).map(|i| code.inner.row(i)[0]).collect()
}

/// The `i`-th smallest `(d(y, c_w), w)`, one-based; `None` beyond the book.
fn nth_key(words: &[u64], y: u64, i: usize, keys: &mut Vec<u64>) -> Option<(u32, usize)> {
    if i == 0 || i > words.len() {
        return None;
    }
    keys.clear();
    keys.extend(
        words
            .iter()
            .enumerate()
            .map(|(k, &c)| (((c ^ y).count_ones() as u64) << 32) | k as u64),
    );
    let (_, kth, _) = keys.select_nth_unstable(i - 1);
    Some(((*kth >> 32) as u32, (*kth & 0xffff_ffff) as usize))
}

impl Packed<'_> {
    fn in_cell(&self, x: u64) -> bool {
        self.cells[x as usize] == self.psi
    }

    /// `1{w_i ∈ I_m ∩ L_in(y)}` where `w_i` is ranked around `y`.
    fn confusable(&self, words: &[u64], m: usize, y: u64, i: usize, keys: &mut Vec<u64>) -> bool {
        match nth_key(words, y, i, keys) {
            Some((d, w)) => d <= self.pn && self.is_outer[w] && w as u64 != self.outer[m],
            None => false,
        }
    }

    /// `phi_{i,m}` recomputed from scratch for the book `words`.
    fn phi(&self, words: &[u64], m: usize, i: usize, keys: &mut Vec<u64>) -> bool {
        let x = words[self.outer[m] as usize];
        self.in_cell(x) && self.confusable(words, m, x ^ self.e, i, keys)
    }

    fn phi_total(&self, words: &[u64], i: usize, keys: &mut Vec<u64>) -> u64 {
        (0..self.outer.len()).filter(|&m| self.phi(words, m, i, keys)).count() as u64
    }

    fn count(&self, words: &[u64]) -> u64 {
        self.outer
            .iter()
            .filter(|&&w| self.in_cell(words[w as usize]))
            .count() as u64
    }
}

/// `|O_psi ∩ C_n| / M`, with multiplicity over messages.
pub fn observation_probability(code: &ConcatenatedCode, partition: &ObservationPartition, psi: &BitWord) -> Result<Ratio<u64>> {
    let pk = packed(code, partition, psi, &BitWord::zeros(code.n()))?;
    let words = packed_words(code);
    Ok(Ratio::new(pk.count(&words), code.messages() as u64))
}

/// True iff `obs_prob < 2^{(delta0 + delta1 - R) n}`.
pub fn is_informative(params: &SystemParams, obs_prob: &Ratio<u64>) -> bool {
    let exponent = (params.delta0 + params.delta1) * params.n as f64 - params.rate_n as f64;
    let p = *obs_prob.numer() as f64 / *obs_prob.denom() as f64;
    p < exponent.exp2()
}

/// `phi_{i,m}` for every message and their sum `Phi_i`.
pub fn compute_phi(code: &ConcatenatedCode, partition: &ObservationPartition, psi: &BitWord, e: &BitWord, i: usize) -> Result<(Vec<bool>, u64)> {
    if i == 0 {
        return usage("list index i is one-based");
    }
    let pk = packed(code, partition, psi, e)?;
    let words = packed_words(code);
    let mut keys = Vec::with_capacity(words.len());
    let phi: Vec<bool> = (0..code.messages()).map(|m| pk.phi(&words, m, i, &mut keys)).collect();
    let total = phi.iter().filter(|&&b| b).count() as u64;
    Ok((phi, total))
}

/// `q_i` as a ratio of message counts, alongside `Phi_i / |O_psi ∩ C_n|`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QCheck {
    pub q: Ratio<u64>,
    /// Messages in the cell whose `w_i` is confusable, counted on the direct path.
    pub direct_hits: u64,
    /// Messages in the cell, counted on the direct path.
    pub direct_count: u64,
    pub phi_total: u64,
    pub count: u64,
    /// Cross-multiplied equality of the two paths.
    pub identity_holds: bool,
}

/// The conditional probability `q_i` counted directly over messages through the
/// public decoder, checked against `Phi_i / |O_psi ∩ C_n|`.
pub fn compute_q(code: &ConcatenatedCode, partition: &ObservationPartition, psi: &BitWord, e: &BitWord, i: usize) -> Result<QCheck> {
    let (_, phi_total) = compute_phi(code, partition, psi, e, i)?;
    let count = packed(code, partition, psi, e)?.count(&packed_words(code));
    let mut hits = 0u64;
    let mut direct_count = 0u64;
    for m in 0..code.messages() {
        let x = code.encode(m)?;
        if !partition.contains(psi, &x) {
            continue;
        }
        direct_count += 1;
        let y = x.xor(e)?;
        let ranked = rank_inner(&code.inner, &y);
        let Some(&w) = ranked.get(i - 1) else { continue };
        let listed = list_decode_inner(&code.inner, &y, code.params.pn)?.binary_search(&w).is_ok();
        let other = matches!(code.outer.message_of(w), Some(m2) if m2 != m);
        if listed && other {
            hits += 1;
        }
    }
    if direct_count == 0 {
        return Err(Error::UndefinedConditional(format!(
            "no message is mapped into the observation set {psi}"
        )));
    }
    let identity_holds = hits as u128 * count as u128 == phi_total as u128 * direct_count as u128
        && count == direct_count;
    Ok(QCheck {
        q: Ratio::new(hits, direct_count),
        direct_hits: hits,
        direct_count,
        phi_total,
        count,
        identity_holds,
    })
}

/// Typicality of `code.inner` with respect to the observation set of `psi`.
pub fn typicality(code: &ConcatenatedCode, partition: &ObservationPartition, psi: &BitWord) -> Result<TypicalityReport> {
    let params = &code.params;
    let n = code.n();
    let cell_size = partition.cell_size(psi);
    let th = thresholds(n, params.rate_n, cell_size);
    let need = (n - params.rate_n) as f64 + params.delta0 * n as f64;
    let applicable = cell_size > 0 && (cell_size as f64).log2() >= need - 1e-9;
    let count = packed(code, partition, psi, &BitWord::zeros(n))?.count(&packed_words(code));
    let max_ball = max_ball_count(&code.inner, params.pn)?;
    // Integer count against a real threshold: `<= ell` is `<= floor(ell)`.
    let list_decodable = max_ball as f64 <= th.ell;
    let c = count as f64;
    let count_in_range = th.t_l <= c && c <= th.t_u;
    Ok(TypicalityReport {
        applicable,
        cell_size,
        count,
        delta0_prime: th.delta0_prime,
        ell: th.ell,
        t_l: th.t_l,
        t_u: th.t_u,
        max_ball,
        list_decodable,
        count_in_range,
        typical: list_decodable && count_in_range,
    })
}

fn smoothed(phi_total: u64, count: u64, t_l: f64) -> (f64, f64) {
    let t = (count as f64).max(t_l);
    if phi_total == 0 {
        (0.0, t)
    } else {
        (phi_total as f64 / t, t)
    }
}

/// All proof quantities of one instance. Errors when no message lands in `O_psi`.
pub fn proof_quantities(code: &ConcatenatedCode, partition: &ObservationPartition, psi: &BitWord, e: &BitWord, i: usize) -> Result<ProofQuantities> {
    let (phi_by_m, phi_total) = compute_phi(code, partition, psi, e, i)?;
    let count = packed(code, partition, psi, e)?.count(&packed_words(code));
    if count == 0 {
        return Err(Error::UndefinedConditional(format!(
            "no message is mapped into the observation set {psi}"
        )));
    }
    let th = thresholds(code.n(), code.params.rate_n, partition.cell_size(psi));
    let (q_prime, t) = smoothed(phi_total, count, th.t_l);
    Ok(ProofQuantities {
        q: Ratio::new(phi_total, count),
        q_prime,
        phi_by_m,
        phi_total,
        count,
        t,
        t_l: th.t_l,
        t_u: th.t_u,
        ell: th.ell,
        delta0_prime: th.delta0_prime,
        obs_prob: Ratio::new(count, code.messages() as u64),
    })
}

/// `q'` with its replacement table `Delta'(j, z)` and `V'`.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationTable {
    pub n: usize,
    pub q_prime: f64,
    pub t_l: f64,
    /// Row-major by inner index `j`, then packed `z`.
    pub delta: Vec<f64>,
    pub v_prime: f64,
}

impl VariationTable {
    pub fn delta(&self, j: usize, z: u64) -> f64 {
        self.delta[(j << self.n) | z as usize]
    }

    /// Largest entry with its `(j, z)`.
    pub fn max_delta(&self) -> (f64, usize, u64) {
        let mut best = (0.0f64, 0usize, 0u64);
        for (k, &d) in self.delta.iter().enumerate() {
            if d > best.0 {
                best = (d, k >> self.n, (k & ((1usize << self.n) - 1)) as u64);
            }
        }
        best
    }
}

/// `q'` alone; no size guard beyond the partition's.
pub fn compute_q_prime(code: &ConcatenatedCode, partition: &ObservationPartition, psi: &BitWord, e: &BitWord, i: usize) -> Result<f64> {
    let (_, phi_total) = compute_phi(code, partition, psi, e, i)?;
    let count = packed(code, partition, psi, e)?.count(&packed_words(code));
    let th = thresholds(code.n(), code.params.rate_n, partition.cell_size(psi));
    Ok(smoothed(phi_total, count, th.t_l).0)
}

/// Exact `V' = sum_j 2^{-n} sum_z Delta'(j, z)^2` by recomputing `q'` for every replacement.
pub fn compute_q_prime_and_variation(code: &ConcatenatedCode, partition: &ObservationPartition, psi: &BitWord, e: &BitWord, i: usize) -> Result<VariationTable> {
    let n = code.n();
    if n > VARIATION_MAX_N || code.index_bits() > VARIATION_MAX_INDEX_BITS {
        return capacity(format!(
            "exact variation: n = {n}, index bits = {} exceed {VARIATION_MAX_N} / {VARIATION_MAX_INDEX_BITS}",
            code.index_bits()
        ));
    }
    if i == 0 {
        return usage("list index i is one-based");
    }
    let pk = packed(code, partition, psi, e)?;
    let words = packed_words(code);
    let t_l = thresholds(n, code.params.rate_n, partition.cell_size(psi)).t_l;
    let mut keys = Vec::new();
    let (q0, _) = smoothed(pk.phi_total(&words, i, &mut keys), pk.count(&words), t_l);
    let zs = 1usize << n;
    let rows: Vec<Vec<f64>> = (0..words.len())
        .into_par_iter()
        .map(|j| {
            let mut book = words.clone();
            let mut keys = Vec::with_capacity(book.len());
            (0..zs as u64)
                .map(|z| {
                    book[j] = z;
                    let (q, _) = smoothed(pk.phi_total(&book, i, &mut keys), pk.count(&book), t_l);
                    (q0 - q).abs()
                })
                .collect()
        })
        .collect();
    let delta: Vec<f64> = rows.into_iter().flatten().collect();
    let v_prime = delta.iter().map(|d| d * d).sum::<f64>() / zs as f64;
    Ok(VariationTable {
        n,
        q_prime: q0,
        t_l,
        delta,
        v_prime,
    })
}

/// Ranges of a claim sweep; `None` means the full range.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClaimSweep {
    pub messages: Option<Vec<usize>>,
    /// One-based ranks `k`.
    pub ranks: Option<Vec<usize>>,
    /// Packed replacement words `z`.
    pub words: Option<Vec<u64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClaimViolation {
    /// Claim number, 1 to 4.
    pub claim: u8,
    pub m: usize,
    pub k: usize,
    pub z: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClaimReport {
    /// Tuples meeting each claim's hypothesis.
    pub checked: [u64; 4],
    /// Tuples filtered out by each claim's hypothesis.
    pub skipped: [u64; 4],
    pub violations: Vec<ClaimViolation>,
}

impl ClaimReport {
    pub fn merge(&mut self, other: &ClaimReport) {
        for c in 0..4 {
            self.checked[c] += other.checked[c];
            self.skipped[c] += other.skipped[c];
        }
        self.violations.extend_from_slice(&other.violations);
    }
}

/// Checks the four single-replacement claims on every swept `(m, k, z)`,
/// recomputing each conclusion from scratch on `C_in(j_k, z)`.
pub fn verify_claims(code: &ConcatenatedCode, partition: &ObservationPartition, psi: &BitWord, e: &BitWord, i: usize, sweep: &ClaimSweep) -> Result<ClaimReport> {
    if i == 0 {
        return usage("list index i is one-based");
    }
    let n = code.n();
    let pk = packed(code, partition, psi, e)?;
    let words = packed_words(code);
    let ms: Vec<usize> = sweep.messages.clone().unwrap_or_else(|| (0..code.messages()).collect());
    let ks: Vec<usize> = sweep.ranks.clone().unwrap_or_else(|| (1..=words.len()).collect());
    let zs: Vec<u64> = sweep.words.clone().unwrap_or_else(|| (0..1u64 << n).collect());
    if ms.iter().any(|&m| m >= code.messages()) || ks.iter().any(|&k| k == 0 || k > words.len()) {
        return usage("claim sweep range out of bounds");
    }
    if zs.iter().any(|&z| n < 64 && z >> n != 0) {
        return usage("replacement word wider than n");
    }
    let tuples = ms.len() as u64 * ks.len() as u64 * zs.len() as u64;
    if tuples > CLAIM_MAX_TUPLES {
        return capacity(format!("claim sweep of {tuples} tuples exceeds {CLAIM_MAX_TUPLES}"));
    }
    let pairs: Vec<(usize, usize)> = ms.iter().flat_map(|&m| ks.iter().map(move |&k| (m, k))).collect();
    let parts: Vec<ClaimReport> = pairs
        .par_iter()
        .map(|&(m, k)| claims_for(&pk, &words, m, k, i, &zs))
        .collect();
    let mut report = ClaimReport::default();
    for part in &parts {
        report.merge(part);
    }
    Ok(report)
}

fn claims_for(pk: &Packed<'_>, words: &[u64], m: usize, k: usize, i: usize, zs: &[u64]) -> ClaimReport {
    let mut rep = ClaimReport::default();
    let mut keys = Vec::with_capacity(words.len());
    let own = pk.outer[m] as usize;
    let y = words[own] ^ pk.e;
    let dist = |v: u64| (v ^ y).count_ones();
    let (_, j) = nth_key(words, y, k, &mut keys).expect("rank within book");
    let (d_wi, wi) = match nth_key(words, y, i, &mut keys) {
        Some((d, w)) => (d, Some(w)),
        None => (u32::MAX, None),
    };
    let ind = pk.confusable(words, m, y, i, &mut keys);
    let phi = pk.phi(words, m, i, &mut keys);
    let cj_out = dist(words[j]) > pk.pn;
    let mut book = words.to_vec();
    for &z in zs {
        book[j] = z;
        let y2 = book[own] ^ pk.e;
        let wi2 = nth_key(&book, y2, i, &mut keys);
        let z_out = dist(z) > pk.pn;
        let record = |claim: u8, hyp: bool, ok: bool, rep: &mut ClaimReport| {
            let c = (claim - 1) as usize;
            if !hyp {
                rep.skipped[c] += 1;
            } else {
                rep.checked[c] += 1;
                if !ok {
                    rep.violations.push(ClaimViolation { claim, m, k, z });
                }
            }
        };
        // Claim 1: nothing enters or leaves the ball, so w_i stays outside it.
        let hyp1 = z_out && cj_out && d_wi > pk.pn;
        let ok1 = wi2.is_none_or(|(_, w)| dist(book[w]) > pk.pn);
        record(1, hyp1, ok1, &mut rep);
        // Claim 2: a replacement ranked after w_i and moved farther leaves w_i alone.
        let hyp2 = k > i && j != own && d_wi < dist(z);
        let ok2 = wi2.map(|(_, w)| w) == wi;
        record(2, hyp2, ok2, &mut rep);
        let hyp34 = z_out && j != own && (k > i || cj_out);
        let ok3 = pk.confusable(&book, m, y2, i, &mut keys) == ind;
        record(3, hyp34, ok3, &mut rep);
        let ok4 = pk.phi(&book, m, i, &mut keys) == phi;
        record(4, hyp34, ok4, &mut rep);
    }
    rep
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SumViolation {
    pub m: usize,
    pub z: u64,
    pub sum: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SumReport {
    pub checked: u64,
    /// `z` inside `B_pn(y_m)`, excluded by hypothesis.
    pub skipped: u64,
    pub max_sum: u64,
    pub violations: Vec<SumViolation>,
}

/// `sum_j |phi_m(C) - phi_m(C(j, z))| <= i + 1` for every `m` and every `z` outside `B_pn(y_m)`.
pub fn sum_inequality(code: &ConcatenatedCode, partition: &ObservationPartition, psi: &BitWord, e: &BitWord, i: usize) -> Result<SumReport> {
    let n = code.n();
    if n > 16 {
        return capacity(format!("sum inequality sweep: n = {n} exceeds 16"));
    }
    if i == 0 {
        return usage("list index i is one-based");
    }
    let pk = packed(code, partition, psi, e)?;
    let words = packed_words(code);
    let parts: Vec<SumReport> = (0..code.messages())
        .into_par_iter()
        .map(|m| {
            let mut rep = SumReport::default();
            let mut keys = Vec::with_capacity(words.len());
            let y = words[pk.outer[m] as usize] ^ pk.e;
            let base = pk.phi(&words, m, i, &mut keys);
            let mut book = words.clone();
            for z in 0..1u64 << n {
                if (z ^ y).count_ones() <= pk.pn {
                    rep.skipped += 1;
                    continue;
                }
                let mut sum = 0u64;
                for j in 0..book.len() {
                    book[j] = z;
                    sum += (pk.phi(&book, m, i, &mut keys) != base) as u64;
                    book[j] = words[j];
                }
                rep.checked += 1;
                rep.max_sum = rep.max_sum.max(sum);
                if sum > i as u64 + 1 {
                    rep.violations.push(SumViolation { m, z, sum });
                }
            }
            rep
        })
        .collect();
    let mut out = SumReport::default();
    for p in parts {
        out.checked += p.checked;
        out.skipped += p.skipped;
        out.max_sum = out.max_sum.max(p.max_sum);
        out.violations.extend(p.violations);
    }
    Ok(out)
}

/// One fully specified instance for the variation checks.
#[derive(Debug, Clone)]
pub struct AnalysisInstance {
    pub id: usize,
    pub code: ConcatenatedCode,
    pub partition: ObservationPartition,
    pub psi: BitWord,
    pub e: BitWord,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzViolation {
    pub id: usize,
    pub j: usize,
    pub z: u64,
    pub delta: f64,
    pub k_t: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariationDiagnostic {
    pub id: usize,
    pub typical: bool,
    pub v_prime: f64,
    pub max_delta: f64,
    /// `K_T = (2 ell + 3) / (t_L - 1)`, when `t_L > 1`.
    pub k_t: Option<f64>,
    /// `(t_U (ell + 1) + 2^{delta0' n + eps_R n}) K_T^2`, when `K_T` exists.
    pub typical_bound: Option<f64>,
    /// `5 i + 14`.
    pub global_bound: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VariationReport {
    pub sum: SumReport,
    pub lipschitz_checked: usize,
    /// Instances that are not typical or have `t_L <= 1`.
    pub lipschitz_skipped: usize,
    pub lipschitz_violations: Vec<LipschitzViolation>,
    pub diagnostics: Vec<VariationDiagnostic>,
}

impl VariationReport {
    /// Hard checks only; the bound diagnostics never fail.
    pub fn passed(&self) -> bool {
        self.sum.violations.is_empty() && self.lipschitz_violations.is_empty()
    }
}

/// Sum inequality and Lipschitz bound as hard checks, `V'` bounds as diagnostics.
pub fn verify_variation_bounds(instances: &[AnalysisInstance], i: usize) -> Result<VariationReport> {
    let mut report = VariationReport::default();
    for inst in instances {
        let s = sum_inequality(&inst.code, &inst.partition, &inst.psi, &inst.e, i)?;
        report.sum.checked += s.checked;
        report.sum.skipped += s.skipped;
        report.sum.max_sum = report.sum.max_sum.max(s.max_sum);
        report.sum.violations.extend(s.violations);

        let typ = typicality(&inst.code, &inst.partition, &inst.psi)?;
        let table = compute_q_prime_and_variation(&inst.code, &inst.partition, &inst.psi, &inst.e, i)?;
        let (max_delta, _, _) = table.max_delta();
        let k_t = (typ.t_l > 1.0).then(|| (2.0 * typ.ell + 3.0) / (typ.t_l - 1.0));
        let n = inst.code.n() as f64;
        let typical_bound = k_t.map(|k| {
            let extra = (typ.delta0_prime * n + inst.code.params.eps_r * n).exp2();
            (typ.t_u * (typ.ell + 1.0) + extra) * k * k
        });
        match (typ.typical, k_t) {
            (true, Some(k)) => {
                report.lipschitz_checked += 1;
                for (idx, &d) in table.delta.iter().enumerate() {
                    if d > k {
                        report.lipschitz_violations.push(LipschitzViolation {
                            id: inst.id,
                            j: idx >> table.n,
                            z: (idx & ((1usize << table.n) - 1)) as u64,
                            delta: d,
                            k_t: k,
                        });
                    }
                }
            }
            _ => report.lipschitz_skipped += 1,
        }
        report.diagnostics.push(VariationDiagnostic {
            id: inst.id,
            typical: typ.typical,
            v_prime: table.v_prime,
            max_delta,
            k_t,
            typical_bound,
            global_bound: 5.0 * i as f64 + 14.0,
        });
    }
    Ok(report)
}

/// One point of the binomial tail comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinomialPoint {
    pub n: usize,
    pub rate_n: usize,
    /// `|A| = 2^{log2_a}`.
    pub log2_a: usize,
    pub mu: f64,
    pub t_l: f64,
    pub t_u: f64,
    pub lower_exact: f64,
    pub lower_bound: f64,
    pub upper_exact: f64,
    pub upper_bound: f64,
}

impl BinomialPoint {
    pub fn holds(&self) -> bool {
        // Relative slack covers rounding in the log-space summation only.
        self.lower_exact <= self.lower_bound * (1.0 + 1e-9) && self.upper_exact <= self.upper_bound * (1.0 + 1e-9)
    }
}

/// `P(X < t_l)` and `P(X > t_u)` for `X ~ Binomial(trials, p)`.
///
/// Sums the pmf in log space from `k = 0`, stopping once terms past the mean
/// fall below `1e-30` of the running upper-tail sum.
pub fn binomial_tails(trials: u64, p: f64, t_l: f64, t_u: f64) -> (f64, f64) {
    let m = trials as f64;
    if p <= 0.0 {
        return (if 0.0 < t_l { 1.0 } else { 0.0 }, if 0.0 > t_u { 1.0 } else { 0.0 });
    }
    if p >= 1.0 {
        return (if m < t_l { 1.0 } else { 0.0 }, if m > t_u { 1.0 } else { 0.0 });
    }
    let ln_q = (-p).ln_1p();
    let ln_odds = p.ln() - ln_q;
    let mean = m * p;
    let mut lp = m * ln_q;
    let (mut lower, mut upper) = (0.0f64, 0.0f64);
    let mut k = 0u64;
    loop {
        let kf = k as f64;
        let term = lp.exp();
        if kf < t_l {
            lower += term;
        }
        if kf > t_u {
            upper += term;
            if kf > mean && term <= upper * 1e-30 {
                break;
            }
        }
        if k == trials {
            break;
        }
        lp += (m - kf).ln() - (kf + 1.0).ln() + ln_odds;
        k += 1;
    }
    (lower, upper)
}

/// Exact tails against the two exponential bounds at one point.
pub fn binomial_point(n: usize, rate_n: usize, log2_a: usize, t_l: f64, t_u: f64) -> Result<BinomialPoint> {
    if rate_n > 53 || log2_a > n || rate_n > n {
        return usage(format!("binomial point out of range: n={n} R_n={rate_n} log2|A|={log2_a}"));
    }
    let trials = 1u64 << rate_n;
    let p = (log2_a as f64 - n as f64).exp2();
    let mu = trials as f64 * p;
    if !(t_l < mu && t_u > mu) {
        return usage(format!("thresholds must straddle mu = {mu}"));
    }
    let (lower_exact, upper_exact) = binomial_tails(trials, p, t_l, t_u);
    Ok(BinomialPoint {
        n,
        rate_n,
        log2_a,
        mu,
        t_l,
        t_u,
        lower_exact,
        lower_bound: 2.0 * (-(mu - t_l).powi(2) / (4.0 * mu)).exp(),
        upper_exact,
        upper_bound: 2.0 * (-(t_u - mu).powi(2) / (4.0 * (t_u + mu))).exp(),
    })
}

/// Largest mean the grid visits; keeps the pmf sums short.
pub const BINOMIAL_MAX_MU: f64 = (1u64 << 20) as f64;

/// Every `(n, R, |A| = 2^a)` with `4 <= mu <= 2^20`, and thresholds at
/// `mu ∓ k sqrt(mu)` for each offset `k >= 2`.
pub fn binomial_concentration_check(ns: &[usize], rates: &[f64], offsets: &[f64]) -> Result<Vec<BinomialPoint>> {
    if offsets.iter().any(|&k| k < 2.0) {
        return usage("offsets below 2 sqrt(mu) are outside the admissible grid");
    }
    let mut out = Vec::new();
    for &n in ns {
        for &r in rates {
            let rate_n = crate::code::floor_rate(r, n);
            for a in 0..=n {
                let mu = ((rate_n + a) as f64 - n as f64).exp2();
                if !(4.0..=BINOMIAL_MAX_MU).contains(&mu) {
                    continue;
                }
                for &k in offsets {
                    let s = k * mu.sqrt();
                    out.push(binomial_point(n, rate_n, a, mu - s, mu + s)?);
                }
            }
        }
    }
    Ok(out)
}

/// Instance family for the Monte Carlo studies: a projection onto the first
/// `rn` positions, `psi` the observation of message 0, and `e` the lowest
/// `floor(pn)` positions after the observed prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyConfig {
    pub p: f64,
    pub r: f64,
    pub rate: f64,
    pub rho: f64,
    pub mode: CodeMode,
    pub i: usize,
    pub samples: usize,
    pub seed: u64,
}

struct Family {
    params: SystemParams,
    base: ConcatenatedCode,
    circuit: Circuit,
    partition: ObservationPartition,
    e: BitWord,
}

fn family(cfg: &FamilyConfig, n: usize) -> Result<Family> {
    let params = SystemParams::new(n, cfg.p, cfg.r, cfg.rate, cfg.rho)?;
    let base = ConcatenatedCode::from_seed(&params, cfg.mode, cfg.seed)?;
    let circuit = build_projection(n, &(1..=params.obs_width).collect::<Vec<_>>())?;
    let partition = observation_partition(&circuit)?;
    let mut e = BitWord::zeros(n);
    for j in 0..params.pn {
        e.set((params.obs_width + j) % n, true);
    }
    Ok(Family {
        params,
        base,
        circuit,
        partition,
        e,
    })
}

impl Family {
    /// A fresh inner book for sample `s`; the outer code stays fixed.
    fn sample(&self, seed: u64, s: usize) -> Result<ConcatenatedCode> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(s as u64 + 1);
        let mut ip = self.params.clone();
        ip.rho_n = self.base.index_bits();
        Ok(self.base.with_inner(sample_inner(&ip, &mut rng)?))
    }

    fn psi(&self, code: &ConcatenatedCode) -> Result<BitWord> {
        self.circuit.evaluate(&code.encode(0)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QTrendRow {
    pub n: usize,
    pub samples: usize,
    pub mean: f64,
    pub std_err: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Largest `|L_in(y_m)|` seen over the messages of the cell.
    pub max_list: usize,
}

/// Monte Carlo estimate of `E_{C_in}[q_i]` at each blocklength, with a normal 95% interval.
pub fn expectation_q_trend(cfg: &FamilyConfig, ns: &[usize]) -> Result<Vec<QTrendRow>> {
    if cfg.samples < 2 {
        return usage("need at least two samples");
    }
    let mut rows = Vec::new();
    for &n in ns {
        let fam = family(cfg, n)?;
        let vals: Vec<Result<(f64, usize)>> = (0..cfg.samples)
            .into_par_iter()
            .map(|s| {
                let code = fam.sample(cfg.seed, s)?;
                let psi = fam.psi(&code)?;
                let (_, phi_total) = compute_phi(&code, &fam.partition, &psi, &fam.e, cfg.i)?;
                let pk = packed(&code, &fam.partition, &psi, &fam.e)?;
                let words = packed_words(&code);
                let count = pk.count(&words);
                let mut max_list = 0;
                for m in 0..code.messages() {
                    let x = words[pk.outer[m] as usize];
                    if pk.in_cell(x) {
                        let y = x ^ pk.e;
                        let l = words.iter().filter(|&&c| (c ^ y).count_ones() <= pk.pn).count();
                        max_list = max_list.max(l);
                    }
                }
                Ok((phi_total as f64 / count as f64, max_list))
            })
            .collect();
        let mut qs = Vec::with_capacity(vals.len());
        let mut max_list = 0;
        for v in vals {
            let (q, l) = v?;
            qs.push(q);
            max_list = max_list.max(l);
        }
        let k = qs.len() as f64;
        let mean = qs.iter().sum::<f64>() / k;
        let var = qs.iter().map(|q| (q - mean).powi(2)).sum::<f64>() / (k - 1.0);
        let std_err = (var / k).sqrt();
        rows.push(QTrendRow {
            n,
            samples: qs.len(),
            mean,
            std_err,
            ci_low: (mean - 1.959963984540054 * std_err).max(0.0),
            ci_high: (mean + 1.959963984540054 * std_err).min(1.0),
            max_list,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailReport {
    pub n: usize,
    pub samples: usize,
    pub lambda: f64,
    pub mean_q_prime: f64,
    /// Fraction of samples with `q' - mean > lambda`.
    pub empirical_tail: f64,
    pub delta0_prime: f64,
    /// `2^{-delta0' n / 30}`.
    pub a_t: f64,
    /// `exp(-lambda^2 / (8 a_T))`.
    pub formula_bound: f64,
    /// `2 exp(-2^{delta0 n / 30} / (8 n^2))`.
    pub application_bound: f64,
}

/// Empirical upper tail of `q'` over sampled inner books, beside the formula bounds. Diagnostic only.
pub fn concentration_tail_diagnostic(cfg: &FamilyConfig, n: usize, lambda: f64) -> Result<TailReport> {
    if cfg.samples == 0 {
        return usage("need at least one sample");
    }
    let fam = family(cfg, n)?;
    let psi = fam.psi(&fam.base)?;
    let vals: Vec<Result<f64>> = (0..cfg.samples)
        .into_par_iter()
        .map(|s| {
            let code = fam.sample(cfg.seed, s)?;
            compute_q_prime(&code, &fam.partition, &psi, &fam.e, cfg.i)
        })
        .collect();
    let qs: Vec<f64> = vals.into_iter().collect::<Result<_>>()?;
    let mean = qs.iter().sum::<f64>() / qs.len() as f64;
    let tail = qs.iter().filter(|&&q| q - mean > lambda).count() as f64 / qs.len() as f64;
    let th = thresholds(n, fam.params.rate_n, fam.partition.cell_size(&psi));
    let a_t = (-th.delta0_prime * n as f64 / 30.0).exp2();
    let nf = n as f64;
    Ok(TailReport {
        n,
        samples: qs.len(),
        lambda,
        mean_q_prime: mean,
        empirical_tail: tail,
        delta0_prime: th.delta0_prime,
        a_t,
        formula_bound: (-lambda * lambda / (8.0 * a_t)).exp(),
        application_bound: 2.0 * (-(fam.params.delta0 * nf / 30.0).exp2() / (8.0 * nf * nf)).exp(),
    })
}

/// Exact-enumeration guard shared with the error-probability computation.
pub const EXACT_MAX_N: usize = 14;
pub const EXACT_MAX_BALL: u64 = 1 << 18;

pub(crate) fn check_exact_guard(n: usize, pn: usize) -> Result<()> {
    if n > EXACT_MAX_N {
        return capacity(format!("exact enumeration: n = {n} exceeds {EXACT_MAX_N}"));
    }
    match crate::bitword::ball_volume_u64(n, pn) {
        Some(v) if v <= EXACT_MAX_BALL => Ok(()),
        _ => capacity(format!("exact enumeration: ball of radius {pn} in {n} bits exceeds {EXACT_MAX_BALL}")),
    }
}

/// `max_f sum_{i <= L} E_Psi[max_e q_i]`, exactly.
///
/// Uses `P(Psi = psi) q_i(psi, e) = Phi_i(psi, e) / M`, so each term is a
/// count of messages and the sum is a ratio over `M`.
pub fn union_bound_pe(code: &ConcatenatedCode, circuits: &[Circuit], list_cap: usize) -> Result<Ratio<u64>> {
    let n = code.n();
    let pn = code.params.pn;
    check_exact_guard(n, pn)?;
    if circuits.is_empty() {
        return usage("empty circuit family");
    }
    let list_cap = list_cap.min(code.inner.len());
    let words = packed_words(code);
    let errors: Vec<u64> = enumerate_ball(&BitWord::zeros(n), pn)?.map(|w| w.index()).collect();
    let mut best = 0u64;
    for f in circuits {
        if f.n_inputs() != n {
            return usage("circuit input count differs from n");
        }
        let partition = observation_partition(f)?;
        let pk = packed(code, &partition, &BitWord::zeros(partition.width()), &BitWord::zeros(n))?;
        let cells: Vec<u32> = (0..code.messages())
            .map(|m| pk.cells[words[pk.outer[m] as usize] as usize])
            .collect();
        let mut distinct = cells.clone();
        distinct.sort_unstable();
        distinct.dedup();
        // Per error pattern: Phi_i summed by cell, for every i <= L.
        let per_error: Vec<Vec<u64>> = errors
            .par_iter()
            .map(|&e| {
                let mut acc = vec![0u64; list_cap * distinct.len()];
                let mut keys = Vec::with_capacity(words.len());
                for m in 0..code.messages() {
                    let own = pk.outer[m];
                    let y = words[own as usize] ^ e;
                    keys.clear();
                    keys.extend(
                        words
                            .iter()
                            .enumerate()
                            .map(|(k, &c)| (((c ^ y).count_ones() as u64) << 32) | k as u64),
                    );
                    keys.sort_unstable();
                    let c = distinct.binary_search(&cells[m]).expect("cell listed");
                    for (idx, &key) in keys.iter().take(list_cap).enumerate() {
                        let (d, w) = ((key >> 32) as usize, (key & 0xffff_ffff) as usize);
                        if d > pn {
                            break;
                        }
                        if pk.is_outer[w] && w as u64 != own {
                            acc[idx * distinct.len() + c] += 1;
                        }
                    }
                }
                acc
            })
            .collect();
        let mut maxes = vec![0u64; list_cap * distinct.len()];
        for acc in &per_error {
            for (mx, &v) in maxes.iter_mut().zip(acc) {
                *mx = (*mx).max(v);
            }
        }
        best = best.max(maxes.iter().sum());
    }
    Ok(Ratio::new(best, code.messages() as u64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitword::{hamming_distance, sample_exact_weight};
    use crate::circuit::{constant_circuit, identity_circuit, random_circuit};
    use crate::code::{InnerCodebook, OuterCodebook};
    use proptest::prelude::*;
    use rand::Rng;

    fn tiny(n: usize, rho_n: usize, rate_n: usize, pn: usize, seed: u64) -> ConcatenatedCode {
        let params = SystemParams::from_dims(n, rho_n, rate_n, pn, 2).unwrap();
        ConcatenatedCode::from_seed(&params, CodeMode::Concat, seed).unwrap()
    }

    fn random_setup(rng: &mut ChaCha8Rng, n: usize, rho_n: usize, rate_n: usize, pn: usize) -> (ConcatenatedCode, ObservationPartition, BitWord, BitWord) {
        let code = tiny(n, rho_n, rate_n, pn, rng.gen());
        let circuit = random_circuit(n, 6, 2, rng);
        let partition = observation_partition(&circuit).unwrap();
        let m0 = rng.gen_range(0..code.messages());
        let psi = partition.psi_of(&code.encode(m0).unwrap());
        let w = rng.gen_range(0..=pn);
        let e = sample_exact_weight(n, w, rng).unwrap();
        (code, partition, psi, e)
    }

    /// Naive `phi`: full sort of distances computed from `BitWord`s.
    fn naive_phi(code: &ConcatenatedCode, partition: &ObservationPartition, psi: &BitWord, e: &BitWord, i: usize) -> Vec<bool> {
        (0..code.messages())
            .map(|m| {
                let x = code.encode(m).unwrap();
                if partition.psi_of(&x) != *psi {
                    return false;
                }
                let y = x.xor(e).unwrap();
                let mut order: Vec<(usize, usize)> = (0..code.inner.len())
                    .map(|w| (hamming_distance(&code.inner.get(w), &y).unwrap(), w))
                    .collect();
                order.sort();
                let Some(&(d, w)) = order.get(i - 1) else { return false };
                let in_im = (0..code.messages()).any(|m2| m2 != m && code.outer.word(m2) == w as u64);
                d <= code.params.pn && in_im
            })
            .collect()
    }

    #[test]
    fn constant_circuit_has_probability_one() {
        let code = tiny(8, 3, 2, 1, 1);
        let part = observation_partition(&constant_circuit(8, 1)).unwrap();
        let psi = BitWord::zeros(1);
        assert_eq!(observation_probability(&code, &part, &psi).unwrap(), Ratio::from_integer(1));
        let other = BitWord::ones(1);
        assert_eq!(observation_probability(&code, &part, &other).unwrap(), Ratio::from_integer(0));
    }

    #[test]
    fn observation_probability_matches_direct_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..30 {
            let (code, part, psi, _) = random_setup(&mut rng, 10, 4, 3, 1);
            let circuit_hits = (0..code.messages())
                .filter(|&m| part.psi_of(&code.encode(m).unwrap()) == psi)
                .count() as u64;
            assert_eq!(
                observation_probability(&code, &part, &psi).unwrap(),
                Ratio::new(circuit_hits, code.messages() as u64)
            );
        }
    }

    #[test]
    fn informative_threshold_is_strict() {
        let params = SystemParams::from_dims(10, 4, 3, 1, 2).unwrap();
        // Exponent (0.05 + 0.05) * 10 - 3 = -2.
        assert!(!is_informative(&params, &Ratio::from_integer(1)));
        assert!(is_informative(&params, &Ratio::from_integer(0)));
        assert!(!is_informative(&params, &Ratio::new(1, 4)));
        assert!(is_informative(&params, &Ratio::new(1, 5)));
    }

    #[test]
    fn far_apart_code_has_no_confusion() {
        // Four codewords pairwise at distance >= 4 with pn = 1.
        let rows = ["00000000", "11110000", "00001111", "11111111"];
        let words: Vec<BitWord> = rows.iter().map(|s| s.parse().unwrap()).collect();
        let inner = InnerCodebook::from_words(8, &words).unwrap();
        let params = SystemParams::from_dims(8, 2, 2, 1, 2).unwrap();
        let code = ConcatenatedCode::from_parts(params, CodeMode::Concat, OuterCodebook::identity(2), inner, 0).unwrap();
        let part = observation_partition(&constant_circuit(8, 1)).unwrap();
        for e in enumerate_ball(&BitWord::zeros(8), 1).unwrap() {
            for i in 1..=4 {
                let (_, total) = compute_phi(&code, &part, &BitWord::zeros(1), &e, i).unwrap();
                assert_eq!(total, 0);
            }
        }
    }

    #[test]
    fn phi_matches_naive_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let (code, part, psi, e) = random_setup(&mut rng, 9, 4, 3, 2);
            let i = rng.gen_range(1..=code.inner.len());
            let (phi, total) = compute_phi(&code, &part, &psi, &e, i).unwrap();
            assert_eq!(phi, naive_phi(&code, &part, &psi, &e, i));
            assert_eq!(total, phi.iter().filter(|&&b| b).count() as u64);
        }
    }

    #[test]
    fn q_identity_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let n = rng.gen_range(6..=12);
            let rho_n = rng.gen_range(2..=5);
            let rate_n = rng.gen_range(1..=rho_n);
            let pn = rng.gen_range(0..=2);
            let (code, part, psi, e) = random_setup(&mut rng, n, rho_n, rate_n, pn);
            let i = rng.gen_range(1..=code.inner.len());
            let qc = compute_q(&code, &part, &psi, &e, i).unwrap();
            assert!(qc.identity_holds, "{qc:?}");
        }
    }

    #[test]
    fn q_single_confusable_message_is_one() {
        // Only message 0 lies in the cell of 0000; message 1 sits one flip away.
        let rows = ["0000", "0001", "1111", "1100"];
        let words: Vec<BitWord> = rows.iter().map(|s| s.parse().unwrap()).collect();
        let inner = InnerCodebook::from_words(4, &words).unwrap();
        let params = SystemParams::from_dims(4, 2, 2, 1, 4).unwrap();
        let code = ConcatenatedCode::from_parts(params, CodeMode::Concat, OuterCodebook::identity(2), inner, 0).unwrap();
        let part = observation_partition(&identity_circuit(4)).unwrap();
        let psi: BitWord = "1111".parse().unwrap();
        let e = BitWord::zeros(4);
        let qc = compute_q(&code, &part, &psi, &e, 2).unwrap();
        assert_eq!(qc.q, Ratio::from_integer(0));
        let psi0 = BitWord::zeros(4);
        let qc = compute_q(&code, &part, &psi0, &e, 2).unwrap();
        assert_eq!(qc.q, Ratio::from_integer(1));
        assert!(qc.identity_holds);
        let empty: BitWord = "1010".parse().unwrap();
        assert!(matches!(
            compute_q(&code, &part, &empty, &e, 1),
            Err(Error::UndefinedConditional(_))
        ));
    }

    #[test]
    fn thresholds_bracket_the_mean() {
        for cell in [1u64, 7, 64, 1 << 10, 1 << 20] {
            let th = thresholds(20, 6, cell);
            let mid = (th.delta0_prime * 20.0).exp2();
            assert!(th.t_l < mid && mid < th.t_u);
        }
        // |O| = 2^{(1-R)n + delta0 n} recovers delta0.
        let th = thresholds(20, 6, 1 << 16);
        assert!((th.delta0_prime - 0.1).abs() < 1e-12);
    }

    #[test]
    fn typicality_flags_match_direct_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let code = tiny(10, 4, 4, 1, rng.gen());
            let part = observation_partition(&constant_circuit(10, 1)).unwrap();
            let psi = BitWord::zeros(1);
            let rep = typicality(&code, &part, &psi).unwrap();
            assert!(rep.applicable);
            assert_eq!(rep.count, 16);
            let ell_int = rep.ell.floor() as usize;
            assert_eq!(rep.list_decodable, crate::code::is_list_decodable(&code.inner, ell_int, 1).unwrap());
            assert_eq!(rep.count_in_range, rep.t_l <= 16.0 && 16.0 <= rep.t_u);
            assert_eq!(rep.typical, rep.list_decodable && rep.count_in_range);
        }
    }

    /// Second `q'` path built from the public decoder on replaced books.
    fn q_prime_naive(code: &ConcatenatedCode, part: &ObservationPartition, psi: &BitWord, e: &BitWord, i: usize) -> f64 {
        let phi = naive_phi(code, part, psi, e, i);
        let total = phi.iter().filter(|&&b| b).count();
        let count = (0..code.messages())
            .filter(|&m| part.psi_of(&code.encode(m).unwrap()) == *psi)
            .count();
        let cell = part.cell_size(psi) as f64;
        let dn = cell.log2() - (code.n() - code.params.rate_n) as f64;
        let t_l = dn.exp2() - (0.75 * dn).exp2();
        if total == 0 {
            0.0
        } else {
            total as f64 / (count as f64).max(t_l)
        }
    }

    #[test]
    fn variation_matches_second_q_prime_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (code, part, psi, e) = random_setup(&mut rng, 7, 3, 2, 1);
        let table = compute_q_prime_and_variation(&code, &part, &psi, &e, 2).unwrap();
        let q0 = q_prime_naive(&code, &part, &psi, &e, 2);
        assert!((table.q_prime - q0).abs() < 1e-12);
        let mut v = 0.0;
        for j in 0..code.inner.len() {
            for z in 0..1u64 << 7 {
                let zw = BitWord::from_index(z, 7).unwrap();
                let code2 = code.with_inner(code.inner.replace(j, &zw).unwrap());
                let d = (q0 - q_prime_naive(&code2, &part, &psi, &e, 2)).abs();
                assert!((table.delta(j, z) - d).abs() < 1e-12);
                v += d * d;
            }
            // No-op replacement.
            assert_eq!(table.delta(j, code.inner.row(j)[0]), 0.0);
        }
        assert!((table.v_prime - v / 128.0).abs() < 1e-12);
    }

    #[test]
    fn variation_guard() {
        let code = tiny(13, 4, 2, 1, 0);
        let part = observation_partition(&constant_circuit(13, 1)).unwrap();
        let r = compute_q_prime_and_variation(&code, &part, &BitWord::zeros(1), &BitWord::zeros(13), 1);
        assert!(matches!(r, Err(Error::Capacity(_))));
    }

    #[test]
    fn q_prime_bounded_by_q_and_equal_when_typical() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut typical_seen = 0;
        for _ in 0..60 {
            let code = tiny(12, 5, 4, 1, rng.gen());
            let circuit = if rng.gen_bool(0.5) { constant_circuit(12, 1) } else { build_projection(12, &[1]).unwrap() };
            let part = observation_partition(&circuit).unwrap();
            let psi = part.psi_of(&code.encode(0).unwrap());
            let e = sample_exact_weight(12, 1, &mut rng).unwrap();
            let pq = proof_quantities(&code, &part, &psi, &e, 2).unwrap();
            let q = *pq.q.numer() as f64 / *pq.q.denom() as f64;
            assert!(0.0 <= pq.q_prime && pq.q_prime <= q + 1e-15 && q <= 1.0);
            assert_eq!(pq.t, (pq.count as f64).max(pq.t_l));
            let typ = typicality(&code, &part, &psi).unwrap();
            if typ.typical {
                typical_seen += 1;
                assert!((pq.q_prime - q).abs() < 1e-15);
            }
        }
        assert!(typical_seen > 0);
    }

    #[test]
    fn claims_hold_on_small_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..3 {
            let (code, part, psi, e) = random_setup(&mut rng, 8, 3, 2, 1);
            for i in 1..=code.inner.len() {
                let rep = verify_claims(&code, &part, &psi, &e, i, &ClaimSweep::default()).unwrap();
                assert!(rep.violations.is_empty(), "{:?}", rep.violations);
                assert!(rep.skipped.iter().all(|&s| s > 0));
            }
        }
    }

    #[test]
    fn claim_two_spot_instance() {
        let rows = ["00000000", "00000011", "11110000", "00111111"];
        let words: Vec<BitWord> = rows.iter().map(|s| s.parse().unwrap()).collect();
        let inner = InnerCodebook::from_words(8, &words).unwrap();
        let params = SystemParams::from_dims(8, 2, 2, 1, 2).unwrap();
        let code = ConcatenatedCode::from_parts(params, CodeMode::Concat, OuterCodebook::identity(2), inner, 0).unwrap();
        let part = observation_partition(&constant_circuit(8, 1)).unwrap();
        let e = BitWord::zeros(8);
        // Around y = 0: w_1 = 0, w_2 = 1 (distance 2); rank 3 replaced by a weight-7 word.
        let sweep = ClaimSweep {
            messages: Some(vec![0]),
            ranks: Some(vec![3]),
            words: Some(vec![0x7f]),
        };
        let rep = verify_claims(&code, &part, &BitWord::zeros(1), &e, 2, &sweep).unwrap();
        assert_eq!(rep.checked[1], 1);
        assert!(rep.violations.is_empty());
        let y = BitWord::zeros(8);
        let before = crate::code::nth_nearest(&code.inner, &y, 2);
        let after = crate::code::nth_nearest(&code.inner.replace(2, &BitWord::from_index(0x7f, 8).unwrap()).unwrap(), &y, 2);
        assert_eq!(before, after);
    }

    #[test]
    fn sum_inequality_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let (code, part, psi, e) = random_setup(&mut rng, 8, 3, 2, 1);
            for i in [1, 2] {
                let rep = sum_inequality(&code, &part, &psi, &e, i).unwrap();
                assert!(rep.violations.is_empty());
                assert!(rep.checked > 0 && rep.skipped > 0);
            }
        }
    }

    #[test]
    fn binomial_trivial_cases() {
        let pt = binomial_point(10, 4, 10, 0.0, 20.0).unwrap();
        assert_eq!((pt.lower_exact, pt.upper_exact), (0.0, 0.0));
        assert!(pt.holds());
        // mu = 4, k = 2 puts t_L at zero.
        let pt = binomial_point(10, 4, 8, 0.0, 8.0).unwrap();
        assert_eq!(pt.lower_exact, 0.0);
    }

    #[test]
    fn binomial_tails_match_direct_sum() {
        // Binomial(16, 1/4): direct pmf with exact binomial coefficients.
        let coef = |k: u64| (0..k).fold(1f64, |a, t| a * (16 - t) as f64 / (t + 1) as f64);
        let pmf = |k: u64| coef(k) * 0.25f64.powi(k as i32) * 0.75f64.powi(16 - k as i32);
        let (lo, hi) = binomial_tails(16, 0.25, 2.5, 6.0);
        let lo2: f64 = (0..=2).map(pmf).sum();
        let hi2: f64 = (7..=16).map(pmf).sum();
        assert!((lo - lo2).abs() < 1e-12 && (hi - hi2).abs() < 1e-12);
    }

    #[test]
    fn union_bound_zero_for_far_code() {
        let rows = ["00000000", "11110000", "00001111", "11111111"];
        let words: Vec<BitWord> = rows.iter().map(|s| s.parse().unwrap()).collect();
        let inner = InnerCodebook::from_words(8, &words).unwrap();
        let params = SystemParams::from_dims(8, 2, 2, 1, 2).unwrap();
        let code = ConcatenatedCode::from_parts(params, CodeMode::Concat, OuterCodebook::identity(2), inner, 0).unwrap();
        let ub = union_bound_pe(&code, &[identity_circuit(8), constant_circuit(8, 1)], 4).unwrap();
        assert_eq!(ub, Ratio::from_integer(0));
    }

    #[test]
    fn q_trend_vanishes_beyond_list() {
        let cfg = FamilyConfig {
            p: 0.05,
            r: 0.25,
            rate: 0.25,
            rho: 0.5,
            mode: CodeMode::Concat,
            i: 40,
            samples: 20,
            seed: 1,
        };
        let rows = expectation_q_trend(&cfg, &[12]).unwrap();
        assert!(rows[0].max_list < 40);
        assert_eq!(rows[0].mean, 0.0);
    }

    #[test]
    fn tail_diagnostic_lambda_above_one() {
        let cfg = FamilyConfig {
            p: 0.1,
            r: 0.25,
            rate: 0.25,
            rho: 0.4,
            mode: CodeMode::Concat,
            i: 2,
            samples: 30,
            seed: 2,
        };
        let rep = concentration_tail_diagnostic(&cfg, 10, 1.0).unwrap();
        assert_eq!(rep.empirical_tail, 0.0);
        assert!(rep.formula_bound >= 0.0 && rep.application_bound >= 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn phi_total_is_sum(seed in any::<u64>(), i in 1usize..=8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (code, part, psi, e) = random_setup(&mut rng, 8, 3, 2, 1);
            let pq = proof_quantities(&code, &part, &psi, &e, i).unwrap();
            prop_assert_eq!(pq.phi_total, pq.phi_by_m.iter().filter(|&&b| b).count() as u64);
            prop_assert!(pq.q_prime <= *pq.q.numer() as f64 / *pq.q.denom() as f64 + 1e-15);
        }

        #[test]
        fn binomial_grid_point_holds(n in 8usize..=40, rate_n in 2usize..=8, k in 2.0f64..5.0) {
            let rate_n = rate_n.min(n);
            for a in 0..=n {
                let mu = ((rate_n + a) as f64 - n as f64).exp2();
                if mu < 4.0 { continue; }
                let s = k * mu.sqrt();
                let pt = binomial_point(n, rate_n, a, mu - s, mu + s).unwrap();
                prop_assert!(pt.holds(), "{:?}", pt);
            }
        }
    }
}
