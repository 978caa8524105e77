// SPDX-License-Identifier: Apache-2.0

//! Adversary strategies: a circuit chooser and an error chooser that sees
//! only the circuit output `psi`.
//!
//! Every strategy returns errors of weight at most `floor(p n)` and circuits of
//! output width `floor(r n)` with no gates, so they always fit the budget.

use num_bigint::BigUint;
use rand::RngCore;

use crate::bitword::{ball_volume, ball_volume_u64, enumerate_ball, sample_exact_weight, BitWord};
use crate::circuit::{build_projection, constant_circuit, identity_circuit, Circuit};
use crate::code::{ConcatenatedCode, SystemParams};
use crate::error::{capacity, usage, Result};

/// Ball-size guard for [`Omniscient`].
pub const OMNISCIENT_MAX_BALL: u64 = 1 << 20;

/// What the error chooser is handed. `x` is the transmitted word; only
/// strategies whose model grants it (compressed bisector) may read it.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub psi: &'a BitWord,
    pub x: Option<&'a BitWord>,
}

pub trait AdversaryStrategy: Send + Sync {
    fn name(&self) -> String;

    /// Draws the observation circuit; never sees the message.
    fn choose_circuit(&self, code: &ConcatenatedCode, rng: &mut dyn RngCore) -> Result<Circuit>;

    fn choose_error(
        &self,
        code: &ConcatenatedCode,
        circuit: &Circuit,
        obs: &Observation<'_>,
        rng: &mut dyn RngCore,
    ) -> Result<BitWord>;
}

fn random_error(code: &ConcatenatedCode, rng: &mut dyn RngCore) -> Result<BitWord> {
    sample_exact_weight(code.n(), code.params.pn, rng)
}

/// Flips the lowest `ceil(d/2)` differing positions of `a` toward `b`.
/// Returns `None` when that exceeds the budget.
pub(crate) fn bisecting_error(a: &BitWord, b: &BitWord, pn: usize) -> Option<BitWord> {
    let diff = a.xor(b).expect("equal lengths");
    let d = diff.weight();
    let k = d.div_ceil(2);
    if k > pn {
        return None;
    }
    let mut e = BitWord::zeros(a.len());
    for &j in diff.support().iter().take(k) {
        e.set(j, true);
    }
    Some(e)
}

/// Closest pair among `words` by `(distance, smaller int_repr, larger int_repr)`.
fn closest_pair(words: &[BitWord]) -> Option<(BitWord, BitWord)> {
    let mut best: Option<(usize, BitWord, BitWord)> = None;
    for i in 0..words.len() {
        for j in i + 1..words.len() {
            let (lo, hi) = if words[i].cmp_int(&words[j]).is_le() {
                (&words[i], &words[j])
            } else {
                (&words[j], &words[i])
            };
            let d = crate::bitword::distance_unchecked(lo, hi);
            let better = match &best {
                None => true,
                Some((bd, bl, bh)) => d
                    .cmp(bd)
                    .then_with(|| lo.cmp_int(bl))
                    .then_with(|| hi.cmp_int(bh))
                    .is_lt(),
            };
            if better {
                best = Some((d, lo.clone(), hi.clone()));
            }
        }
    }
    best.map(|(_, a, b)| (a, b))
}

/// Error chooser shared by the projection strategies: bisect the closest
/// pair of codewords consistent with `psi`, else a random error.
fn bisect_cell(
    code: &ConcatenatedCode,
    circuit: &Circuit,
    psi: &BitWord,
    rng: &mut dyn RngCore,
) -> Result<BitWord> {
    let codewords: Vec<BitWord> = (0..code.messages()).map(|m| code.encode(m)).collect::<Result<_>>()?;
    let outs = circuit.evaluate_many(&codewords)?;
    let cell: Vec<BitWord> = codewords
        .into_iter()
        .zip(outs)
        .filter(|(_, o)| o == psi)
        .map(|(x, _)| x)
        .collect();
    if let Some((a, b)) = closest_pair(&cell) {
        if let Some(e) = bisecting_error(&a, &b, code.params.pn) {
            return Ok(e);
        }
    }
    random_error(code, rng)
}

/// Ignores the observation: constant circuit, uniform error of weight `floor(p n)`.
#[derive(Debug, Clone, Default)]
pub struct Oblivious;

pub fn oblivious_random() -> Oblivious {
    Oblivious
}

impl AdversaryStrategy for Oblivious {
    fn name(&self) -> String {
        "oblivious".into()
    }

    fn choose_circuit(&self, code: &ConcatenatedCode, _rng: &mut dyn RngCore) -> Result<Circuit> {
        Ok(constant_circuit(code.n(), code.params.obs_width))
    }

    fn choose_error(
        &self,
        code: &ConcatenatedCode,
        _circuit: &Circuit,
        _obs: &Observation<'_>,
        rng: &mut dyn RngCore,
    ) -> Result<BitWord> {
        random_error(code, rng)
    }
}

/// Observes a fixed set of positions (wiretap-II).
#[derive(Debug, Clone)]
pub struct Wiretap {
    indices: Vec<usize>,
}

pub enum WiretapIndices {
    Fixed(Vec<usize>),
    /// Drawn once, uniformly, from the supplied rng.
    Random,
}

pub fn wiretap_subset(params: &SystemParams, indices: WiretapIndices, rng: &mut dyn RngCore) -> Result<Wiretap> {
    let idx = match indices {
        WiretapIndices::Fixed(v) => v,
        WiretapIndices::Random => random_subset(params.n, params.obs_width, rng),
    };
    if idx.len() != params.obs_width {
        return usage(format!(
            "wiretap needs {} indices, got {}",
            params.obs_width,
            idx.len()
        ));
    }
    build_projection(params.n, &idx)?;
    Ok(Wiretap { indices: idx })
}

fn random_subset(n: usize, k: usize, rng: &mut dyn RngCore) -> Vec<usize> {
    let mut v: Vec<usize> = rand::seq::index::sample(rng, n, k.min(n))
        .into_iter()
        .map(|j| j + 1)
        .collect();
    v.sort_unstable();
    v
}

impl Wiretap {
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
}

impl AdversaryStrategy for Wiretap {
    fn name(&self) -> String {
        let idx: Vec<String> = self.indices.iter().map(|j| j.to_string()).collect();
        format!("wiretap:{}", idx.join(","))
    }

    fn choose_circuit(&self, code: &ConcatenatedCode, _rng: &mut dyn RngCore) -> Result<Circuit> {
        build_projection(code.n(), &self.indices)
    }

    fn choose_error(
        &self,
        code: &ConcatenatedCode,
        circuit: &Circuit,
        obs: &Observation<'_>,
        rng: &mut dyn RngCore,
    ) -> Result<BitWord> {
        bisect_cell(code, circuit, obs.psi, rng)
    }
}

/// Observes a fresh uniformly random `floor(r n)`-subset of positions each time.
#[derive(Debug, Clone, Default)]
pub struct Erasure;

pub fn erasure_myopic() -> Erasure {
    Erasure
}

impl AdversaryStrategy for Erasure {
    fn name(&self) -> String {
        "erasure".into()
    }

    fn choose_circuit(&self, code: &ConcatenatedCode, rng: &mut dyn RngCore) -> Result<Circuit> {
        let idx = random_subset(code.n(), code.params.obs_width, rng);
        build_projection(code.n(), &idx)
    }

    fn choose_error(
        &self,
        code: &ConcatenatedCode,
        circuit: &Circuit,
        obs: &Observation<'_>,
        rng: &mut dyn RngCore,
    ) -> Result<BitWord> {
        bisect_cell(code, circuit, obs.psi, rng)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BisectorMode {
    /// Full observation through the identity circuit.
    Genie,
    /// Any `r`; acts on `x` only when the auxiliary word passes the size census.
    Compressed,
}

/// Moves `x` to the midpoint toward its nearest other codeword.
#[derive(Debug, Clone)]
pub struct Bisector {
    mode: BisectorMode,
}

pub fn bisector(params: &SystemParams, mode: BisectorMode) -> Result<Bisector> {
    if mode == BisectorMode::Genie && params.obs_width != params.n {
        return usage("genie bisector requires r = 1");
    }
    Ok(Bisector { mode })
}

/// True iff every weight-`w` auxiliary word can be named with `obs_width` bits: `A_w <= 2^{obs_width}`.
pub fn compression_feasible(n: usize, w: usize, obs_width: usize) -> bool {
    match ball_volume(n, w) {
        Ok(a) => a <= BigUint::from(1u8) << obs_width,
        Err(_) => false,
    }
}

/// Nearest codeword to `x` other than `x` itself; a second message on `x` counts at distance 0.
fn nearest_other(code: &ConcatenatedCode, x: &BitWord) -> Result<Option<BitWord>> {
    let mut same = 0usize;
    let mut best: Option<(usize, BitWord)> = None;
    for m in 0..code.messages() {
        let c = code.encode(m)?;
        if &c == x {
            same += 1;
            continue;
        }
        let d = crate::bitword::distance_unchecked(&c, x);
        let better = match &best {
            None => true,
            Some((bd, bc)) => d < *bd || (d == *bd && c.cmp_int(bc).is_lt()),
        };
        if better {
            best = Some((d, c));
        }
    }
    if same >= 2 {
        return Ok(Some(x.clone()));
    }
    Ok(best.map(|(_, c)| c))
}

impl AdversaryStrategy for Bisector {
    fn name(&self) -> String {
        match self.mode {
            BisectorMode::Genie => "bisector:genie".into(),
            BisectorMode::Compressed => "bisector:compressed".into(),
        }
    }

    fn choose_circuit(&self, code: &ConcatenatedCode, _rng: &mut dyn RngCore) -> Result<Circuit> {
        match self.mode {
            BisectorMode::Genie => Ok(identity_circuit(code.n())),
            BisectorMode::Compressed => {
                build_projection(code.n(), &(1..=code.params.obs_width).collect::<Vec<_>>())
            }
        }
    }

    fn choose_error(
        &self,
        code: &ConcatenatedCode,
        _circuit: &Circuit,
        obs: &Observation<'_>,
        rng: &mut dyn RngCore,
    ) -> Result<BitWord> {
        let x = match self.mode {
            BisectorMode::Genie => obs.psi,
            BisectorMode::Compressed => match obs.x {
                Some(x) => x,
                None => return usage("compressed bisector needs the transmitted word"),
            },
        };
        if x.len() != code.n() {
            return usage("bisector observation length differs from n");
        }
        let Some(other) = nearest_other(code, x)? else {
            return random_error(code, rng);
        };
        let Some(s) = bisecting_error(x, &other, code.params.pn) else {
            return random_error(code, rng);
        };
        if self.mode == BisectorMode::Compressed
            && !compression_feasible(code.n(), s.weight(), code.params.obs_width)
        {
            return random_error(code, rng);
        }
        Ok(s)
    }
}

/// Sees `x` through the identity circuit and searches the whole error ball.
#[derive(Debug, Clone)]
pub struct Omniscient;

pub fn omniscient_exact(params: &SystemParams) -> Result<Omniscient> {
    if params.obs_width != params.n {
        return usage("omniscient search requires r = 1");
    }
    check_ball_guard(params.n, params.pn)?;
    Ok(Omniscient)
}

pub(crate) fn check_ball_guard(n: usize, pn: usize) -> Result<()> {
    match ball_volume_u64(n, pn) {
        Some(v) if v <= OMNISCIENT_MAX_BALL => Ok(()),
        _ => capacity(format!(
            "ball_volume({n}, {pn}) exceeds OMNISCIENT_MAX_BALL = {OMNISCIENT_MAX_BALL}"
        )),
    }
}

/// First `e` in ball order for which decoding `x ⊕ e` fails, if any.
pub fn first_failing_error(code: &ConcatenatedCode, x: &BitWord) -> Result<Option<BitWord>> {
    let pn = code.params.pn;
    check_ball_guard(code.n(), pn)?;
    // Only outer-image words within 2pn of x can enter the list.
    let near: Vec<usize> = code
        .outer
        .words()
        .iter()
        .map(|&w| w as usize)
        .filter(|&w| code.inner.distance_to(w, x) <= 2 * pn)
        .collect();
    if near.len() < 2 {
        return Ok(None);
    }
    for e in enumerate_ball(&BitWord::zeros(code.n()), pn)? {
        let y = x.xor(&e)?;
        let hits = near
            .iter()
            .filter(|&&w| code.inner.distance_to(w, &y) <= pn)
            .take(2)
            .count();
        if hits >= 2 {
            return Ok(Some(e));
        }
    }
    Ok(None)
}

impl AdversaryStrategy for Omniscient {
    fn name(&self) -> String {
        "omniscient".into()
    }

    fn choose_circuit(&self, code: &ConcatenatedCode, _rng: &mut dyn RngCore) -> Result<Circuit> {
        Ok(identity_circuit(code.n()))
    }

    fn choose_error(
        &self,
        code: &ConcatenatedCode,
        _circuit: &Circuit,
        obs: &Observation<'_>,
        _rng: &mut dyn RngCore,
    ) -> Result<BitWord> {
        Ok(first_failing_error(code, obs.psi)?.unwrap_or_else(|| BitWord::zeros(code.n())))
    }
}

/// Builds a strategy from its config name:
/// `oblivious | wiretap:<i,j,...|random> | erasure | bisector:<genie|compressed> | omniscient`.
pub fn parse_strategy(spec: &str, params: &SystemParams, rng: &mut dyn RngCore) -> Result<Box<dyn AdversaryStrategy>> {
    let (head, arg) = match spec.split_once(':') {
        Some((h, a)) => (h, Some(a)),
        None => (spec, None),
    };
    match (head, arg) {
        ("oblivious", None) => Ok(Box::new(oblivious_random())),
        ("erasure", None) => Ok(Box::new(erasure_myopic())),
        ("omniscient", None) => Ok(Box::new(omniscient_exact(params)?)),
        ("wiretap", Some("random")) => Ok(Box::new(wiretap_subset(params, WiretapIndices::Random, rng)?)),
        ("wiretap", Some(list)) => {
            let idx = if list.is_empty() {
                Vec::new()
            } else {
                list.split(',')
                    .map(|t| {
                        t.trim()
                            .parse::<usize>()
                            .map_err(|_| crate::Error::Usage(format!("invalid wiretap index {t:?}")))
                    })
                    .collect::<Result<Vec<_>>>()?
            };
            Ok(Box::new(wiretap_subset(params, WiretapIndices::Fixed(idx), rng)?))
        }
        ("bisector", Some("genie")) => Ok(Box::new(bisector(params, BisectorMode::Genie)?)),
        ("bisector", Some("compressed")) => Ok(Box::new(bisector(params, BisectorMode::Compressed)?)),
        _ => usage(format!("unknown strategy {spec:?}")),
    }
}
