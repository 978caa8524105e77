// SPDX-License-Identifier: Apache-2.0

//! The concatenated code `C_n = C_in ∘ C_out`, its plain random variant, the
//! scan list decoder and the nearest-word ordering.
//!
//! Messages are zero-based indices `0..M`. An inner index `w` is the packed
//! value of a `rho_n`-bit word, i.e. `int_repr(word) - 1`; all orderings "by
//! `int_repr`" are therefore plain integer orderings on these indices.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::bitword::{enumerate_ball, BitWord};
use crate::error::{capacity, usage, Error, Result};

/// Largest `rho_n` accepted by [`sample_inner`].
pub const SAMPLE_MAX_INDEX_BITS: usize = 26;
/// Largest inner index width decoded in Monte Carlo runs.
pub const DECODE_MAX_INDEX_BITS: usize = 22;
/// Largest `n` for the exhaustive list-decodability scan.
pub const LIST_CHECK_MAX_N: usize = 24;

/// `floor(x * n)`, robust to the representation error of products such as `0.35 * 20`.
pub fn floor_rate(x: f64, n: usize) -> usize {
    let v = (x * n as f64 + 1e-9).floor();
    if v <= 0.0 {
        0
    } else {
        v as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CodeMode {
    #[default]
    Concat,
    Plain,
}

impl CodeMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CodeMode::Concat => "concat",
            CodeMode::Plain => "plain",
        }
    }

    pub fn parse(s: &str) -> Result<CodeMode> {
        match s {
            "concat" => Ok(CodeMode::Concat),
            "plain" => Ok(CodeMode::Plain),
            _ => usage(format!("unknown code mode {s:?}")),
        }
    }
}

/// System and code parameters. Rate products are floored exactly once, here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub n: usize,
    pub p: f64,
    pub r: f64,
    pub c: u64,
    pub s: u32,
    pub rate: f64,
    pub rho: f64,
    pub delta0: f64,
    pub delta1: f64,
    pub eps_rho: f64,
    pub eps_r: f64,
    pub rate_n: usize,
    pub rho_n: usize,
    pub pn: usize,
    pub obs_width: usize,
}

/// Slack used when the caller does not supply one.
pub const DEFAULT_SLACK: f64 = 0.05;

impl SystemParams {
    pub fn new(n: usize, p: f64, r: f64, rate: f64, rho: f64) -> Result<SystemParams> {
        if n == 0 {
            return usage("blocklength must be positive");
        }
        if !(0.0..0.5).contains(&p) {
            return usage(format!("p = {p} must lie in [0, 1/2)"));
        }
        if !(0.0..=1.0).contains(&r) {
            return usage(format!("r = {r} must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&rate) || !(0.0..=1.0).contains(&rho) {
            return usage("rates must lie in [0, 1]");
        }
        if rate > rho + 1e-12 {
            return usage(format!("rate R = {rate} exceeds inner rate rho = {rho}"));
        }
        Ok(SystemParams {
            n,
            p,
            r,
            c: 1,
            s: 2,
            rate,
            rho,
            delta0: DEFAULT_SLACK,
            delta1: DEFAULT_SLACK,
            eps_rho: DEFAULT_SLACK,
            eps_r: DEFAULT_SLACK,
            rate_n: floor_rate(rate, n),
            rho_n: floor_rate(rho, n),
            pn: floor_rate(p, n),
            obs_width: floor_rate(r, n),
        })
    }

    /// Parameters given directly by their integer dimensions.
    pub fn from_dims(n: usize, rho_n: usize, rate_n: usize, pn: usize, obs_width: usize) -> Result<SystemParams> {
        if n == 0 || rho_n > n || rate_n > rho_n || obs_width > n || 2 * pn >= n.max(1) && pn > 0 {
            return usage(format!(
                "inconsistent dimensions n={n} rho_n={rho_n} R_n={rate_n} pn={pn} rn={obs_width}"
            ));
        }
        let f = n as f64;
        let mut sp = SystemParams::new(
            n,
            pn as f64 / f,
            obs_width as f64 / f,
            rate_n as f64 / f,
            rho_n as f64 / f,
        )?;
        sp.rate_n = rate_n;
        sp.rho_n = rho_n;
        sp.pn = pn;
        sp.obs_width = obs_width;
        Ok(sp)
    }

    pub fn with_budget(mut self, c: u64, s: u32) -> Result<SystemParams> {
        if c < 1 || s < 1 {
            return usage("complexity budget requires c, s >= 1");
        }
        self.c = c;
        self.s = s;
        Ok(self)
    }

    pub fn with_slack(mut self, delta0: f64, delta1: f64, eps_rho: f64, eps_r: f64) -> Result<SystemParams> {
        if [delta0, delta1, eps_rho, eps_r].iter().any(|&x| !(x > 0.0)) {
            return usage("slack parameters must be positive");
        }
        self.delta0 = delta0;
        self.delta1 = delta1;
        self.eps_rho = eps_rho;
        self.eps_r = eps_r;
        Ok(self)
    }

    /// Number of messages `M = 2^{R_n}`.
    pub fn messages(&self) -> usize {
        1usize << self.rate_n
    }

    /// Number of inner words `W = 2^{rho_n}`.
    pub fn inner_words(&self) -> usize {
        1usize << self.rho_n
    }
}

/// `count` codewords of length `n`, bit-packed with a fixed stride.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InnerCodebook {
    n: usize,
    stride: usize,
    count: usize,
    data: Vec<u64>,
}

impl InnerCodebook {
    pub fn from_words(n: usize, words: &[BitWord]) -> Result<InnerCodebook> {
        let stride = n.div_ceil(64).max(1);
        let mut data = Vec::with_capacity(words.len() * stride);
        for w in words {
            if w.len() != n {
                return usage(format!("codeword length {} differs from n = {n}", w.len()));
            }
            data.extend_from_slice(w.blocks());
            data.extend(std::iter::repeat_n(0, stride - w.blocks().len()));
        }
        Ok(InnerCodebook {
            n,
            stride,
            count: words.len(),
            data,
        })
    }

    fn sample<R: RngCore + ?Sized>(n: usize, count: usize, rng: &mut R) -> InnerCodebook {
        let stride = n.div_ceil(64).max(1);
        let tail = n % 64;
        let mut data = vec![0u64; count * stride];
        for row in data.chunks_mut(stride) {
            for b in row.iter_mut() {
                *b = rng.next_u64();
            }
            if tail != 0 {
                row[stride - 1] &= (1u64 << tail) - 1;
            }
            if n == 0 {
                row[0] = 0;
            }
        }
        InnerCodebook {
            n,
            stride,
            count,
            data,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    #[inline]
    pub(crate) fn row(&self, i: usize) -> &[u64] {
        &self.data[i * self.stride..(i + 1) * self.stride]
    }

    pub fn get(&self, i: usize) -> BitWord {
        BitWord::from_blocks(self.row(i), self.n)
    }

    /// Distance from entry `i` to a word given by its packed blocks.
    #[inline]
    pub(crate) fn distance_blocks(&self, i: usize, y: &[u64]) -> usize {
        self.row(i)
            .iter()
            .zip(y)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum()
    }

    pub fn distance_to(&self, i: usize, y: &BitWord) -> usize {
        self.distance_blocks(i, y.blocks())
    }

    /// Distances from `y` to every entry, in index order.
    pub fn distances(&self, y: &BitWord) -> Vec<u32> {
        let yb = y.blocks();
        if self.stride == 1 {
            let y0 = yb.first().copied().unwrap_or(0);
            self.data.iter().map(|a| (a ^ y0).count_ones()).collect()
        } else {
            (0..self.count).map(|i| self.distance_blocks(i, yb) as u32).collect()
        }
    }

    /// `C_in(j, z)`: a copy with entry `j` replaced by `z`.
    pub fn replace(&self, j: usize, z: &BitWord) -> Result<InnerCodebook> {
        if j >= self.count {
            return usage(format!("replace index {j} out of range 0..{}", self.count));
        }
        if z.len() != self.n {
            return usage(format!("replacement length {} differs from n = {}", z.len(), self.n));
        }
        let mut out = self.clone();
        out.set_row(j, z);
        Ok(out)
    }

    pub(crate) fn set_row(&mut self, j: usize, z: &BitWord) {
        let s = self.stride;
        let row = &mut self.data[j * s..(j + 1) * s];
        row.fill(0);
        row[..z.blocks().len()].copy_from_slice(z.blocks());
    }
}

/// Inner codebook of `W = 2^{rho_n}` i.i.d. uniform words of length `n`.
pub fn sample_inner<R: RngCore + ?Sized>(params: &SystemParams, rng: &mut R) -> Result<InnerCodebook> {
    if params.rho_n > SAMPLE_MAX_INDEX_BITS {
        return capacity(format!(
            "sample_inner: rho_n = {} exceeds SAMPLE_MAX_INDEX_BITS = {SAMPLE_MAX_INDEX_BITS}",
            params.rho_n
        ));
    }
    Ok(InnerCodebook::sample(params.n, params.inner_words(), rng))
}

/// Injective map from messages to inner indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OuterCodebook {
    index_bits: usize,
    words: Vec<u64>,
    inverse: HashMap<u64, usize>,
}

impl OuterCodebook {
    pub fn from_indices(index_bits: usize, words: Vec<u64>) -> Result<OuterCodebook> {
        let mut inverse = HashMap::with_capacity(words.len());
        for (m, &w) in words.iter().enumerate() {
            if index_bits < 64 && w >> index_bits != 0 {
                return usage(format!("outer word {w} exceeds {index_bits} bits"));
            }
            if inverse.insert(w, m).is_some() {
                return usage(format!("outer map not injective at word {w}"));
            }
        }
        Ok(OuterCodebook {
            index_bits,
            words,
            inverse,
        })
    }

    pub fn identity(index_bits: usize) -> OuterCodebook {
        OuterCodebook::from_indices(index_bits, (0..1u64 << index_bits).collect())
            .expect("identity is injective")
    }

    pub fn index_bits(&self) -> usize {
        self.index_bits
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Inner index of message `m`.
    pub fn word(&self, m: usize) -> u64 {
        self.words[m]
    }

    pub fn word_bits(&self, m: usize) -> BitWord {
        BitWord::from_index(self.words[m], self.index_bits).expect("outer word fits its width")
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// The message mapped to inner index `w`, if any.
    pub fn message_of(&self, w: u64) -> Option<usize> {
        self.inverse.get(&w).copied()
    }
}

/// `M` distinct `rho_n`-bit words drawn without replacement.
pub fn build_outer<R: Rng + ?Sized>(params: &SystemParams, rng: &mut R) -> Result<OuterCodebook> {
    let m = params.messages();
    let w = params.inner_words();
    if m > w {
        return usage(format!("M = {m} exceeds W = {w}"));
    }
    let words = rand::seq::index::sample(rng, w, m)
        .into_iter()
        .map(|i| i as u64)
        .collect();
    OuterCodebook::from_indices(params.rho_n, words)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcatenatedCode {
    pub params: SystemParams,
    pub mode: CodeMode,
    pub outer: OuterCodebook,
    pub inner: InnerCodebook,
    pub seed: u64,
}

impl ConcatenatedCode {
    /// Samples a code; in plain mode the inner book holds one row per message.
    pub fn sample<R: Rng + ?Sized>(params: &SystemParams, mode: CodeMode, seed: u64, rng: &mut R) -> Result<ConcatenatedCode> {
        match mode {
            CodeMode::Concat => {
                let inner = sample_inner(params, rng)?;
                let outer = build_outer(params, rng)?;
                ConcatenatedCode::from_parts(params.clone(), mode, outer, inner, seed)
            }
            CodeMode::Plain => {
                if params.rate_n > SAMPLE_MAX_INDEX_BITS {
                    return capacity(format!(
                        "plain code: R_n = {} exceeds SAMPLE_MAX_INDEX_BITS = {SAMPLE_MAX_INDEX_BITS}",
                        params.rate_n
                    ));
                }
                let inner = InnerCodebook::sample(params.n, params.messages(), rng);
                let outer = OuterCodebook::identity(params.rate_n);
                ConcatenatedCode::from_parts(params.clone(), mode, outer, inner, seed)
            }
        }
    }

    /// Seeds a ChaCha8 stream and samples with it.
    pub fn from_seed(params: &SystemParams, mode: CodeMode, seed: u64) -> Result<ConcatenatedCode> {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        ConcatenatedCode::sample(params, mode, seed, &mut rng)
    }

    pub fn from_parts(params: SystemParams, mode: CodeMode, outer: OuterCodebook, inner: InnerCodebook, seed: u64) -> Result<ConcatenatedCode> {
        if inner.n() != params.n {
            return usage("inner codeword length differs from n");
        }
        if outer.len() != params.messages() {
            return usage(format!(
                "outer code has {} messages, expected {}",
                outer.len(),
                params.messages()
            ));
        }
        if inner.len() != 1usize << outer.index_bits() {
            return usage("inner codebook size differs from 2^(outer word width)");
        }
        Ok(ConcatenatedCode {
            params,
            mode,
            outer,
            inner,
            seed,
        })
    }

    pub fn n(&self) -> usize {
        self.params.n
    }

    pub fn messages(&self) -> usize {
        self.outer.len()
    }

    /// Width of inner indices: `rho_n` in concatenated mode, `R_n` in plain mode.
    pub fn index_bits(&self) -> usize {
        self.outer.index_bits()
    }

    pub fn encode(&self, m: usize) -> Result<BitWord> {
        if m >= self.messages() {
            return usage(format!("message {m} out of range 0..{}", self.messages()));
        }
        Ok(self.inner.get(self.outer.word(m) as usize))
    }

    /// Same code with the inner book swapped for `inner`.
    pub fn with_inner(&self, inner: InnerCodebook) -> ConcatenatedCode {
        ConcatenatedCode {
            params: self.params.clone(),
            mode: self.mode,
            outer: self.outer.clone(),
            inner,
            seed: self.seed,
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "codebook n={} rho_n={} R_n={} mode={} seed={}",
            self.params.n,
            self.params.rho_n,
            self.params.rate_n,
            self.mode.as_str(),
            self.seed
        );
        for i in 0..self.inner.len() {
            let _ = writeln!(s, "{}", self.inner.get(i));
        }
        for m in 0..self.messages() {
            let _ = writeln!(s, "m {} -> {}", m + 1, self.outer.word_bits(m));
        }
        s
    }
}

/// Parsed codebook file.
#[derive(Debug, Clone)]
pub struct CodebookFile {
    pub n: usize,
    pub rho_n: usize,
    pub rate_n: usize,
    pub mode: CodeMode,
    pub seed: u64,
    pub inner: InnerCodebook,
    pub outer: OuterCodebook,
}

impl CodebookFile {
    pub fn into_code(self, pn: usize, obs_width: usize) -> Result<ConcatenatedCode> {
        let params = SystemParams::from_dims(self.n, self.rho_n, self.rate_n, pn, obs_width)?;
        ConcatenatedCode::from_parts(params, self.mode, self.outer, self.inner, self.seed)
    }
}

pub fn parse_codebook(text: &str) -> Result<CodebookFile> {
    let perr = |line: usize, msg: String| Error::Parse { line, msg };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (hl, header) = lines.next().ok_or_else(|| perr(1, "empty codebook".into()))?;
    let mut fields: HashMap<&str, &str> = HashMap::new();
    let mut toks = header.split_whitespace();
    if toks.next() != Some("codebook") {
        return Err(perr(hl, "expected codebook header".into()));
    }
    for t in toks {
        let (k, v) = t
            .split_once('=')
            .ok_or_else(|| perr(hl, format!("malformed header field {t:?}")))?;
        fields.insert(k, v);
    }
    let num = |k: &str| -> Result<u64> {
        fields
            .get(k)
            .ok_or_else(|| perr(hl, format!("missing header field {k}")))?
            .parse()
            .map_err(|_| perr(hl, format!("invalid header field {k}")))
    };
    let n = num("n")? as usize;
    let rho_n = num("rho_n")? as usize;
    let rate_n = num("R_n")? as usize;
    let seed = num("seed")?;
    let mode = CodeMode::parse(fields.get("mode").copied().unwrap_or("concat"))
        .map_err(|_| perr(hl, "invalid mode".into()))?;
    let index_bits = match mode {
        CodeMode::Concat => rho_n,
        CodeMode::Plain => rate_n,
    };
    let mut words = Vec::new();
    let mut outer: Vec<(usize, u64)> = Vec::new();
    for (ln, l) in lines {
        if let Some(rest) = l.strip_prefix("m ") {
            let (idx, bits) = rest
                .split_once("->")
                .ok_or_else(|| perr(ln, "expected `m <index> -> <bits>`".into()))?;
            let idx: usize = idx
                .trim()
                .parse()
                .map_err(|_| perr(ln, "invalid message index".into()))?;
            let w: BitWord = bits.trim().parse().map_err(|_| perr(ln, "invalid bits".into()))?;
            if idx == 0 || w.len() != index_bits {
                return Err(perr(ln, "outer entry out of range".into()));
            }
            outer.push((idx - 1, w.index()));
        } else {
            if !outer.is_empty() {
                return Err(perr(ln, "codeword after outer map".into()));
            }
            let w: BitWord = l.parse().map_err(|_| perr(ln, "invalid codeword".into()))?;
            if w.len() != n {
                return Err(perr(ln, format!("codeword length {} differs from n = {n}", w.len())));
            }
            words.push(w);
        }
    }
    if words.len() != 1usize << index_bits {
        return Err(perr(0, format!("expected {} codewords, found {}", 1usize << index_bits, words.len())));
    }
    outer.sort_unstable();
    if outer.len() != 1usize << rate_n || outer.iter().enumerate().any(|(k, (m, _))| k != *m) {
        return Err(perr(0, "outer map must list every message exactly once".into()));
    }
    Ok(CodebookFile {
        n,
        rho_n,
        rate_n,
        mode,
        seed,
        inner: InnerCodebook::from_words(n, &words)?,
        outer: OuterCodebook::from_indices(index_bits, outer.into_iter().map(|(_, w)| w).collect())?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Message(usize),
    DecodingError,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeOutcome {
    /// Inner indices within budget of `y`, ascending.
    pub l_in: Vec<u64>,
    /// The subset of `l_in` in the outer image, ascending.
    pub l_out: Vec<u64>,
    pub verdict: Verdict,
}

/// `L_in`: every inner index whose codeword lies within `pn` of `y`, ascending.
pub fn list_decode_inner(inner: &InnerCodebook, y: &BitWord, pn: usize) -> Result<Vec<u64>> {
    if y.len() != inner.n() {
        return usage(format!("received word length {} differs from n = {}", y.len(), inner.n()));
    }
    Ok(list_decode_unchecked(inner, y.blocks(), pn))
}

pub(crate) fn list_decode_unchecked(inner: &InnerCodebook, y: &[u64], pn: usize) -> Vec<u64> {
    if inner.stride == 1 {
        let y0 = y.first().copied().unwrap_or(0);
        inner
            .data
            .iter()
            .enumerate()
            .filter(|(_, a)| ((*a ^ y0).count_ones() as usize) <= pn)
            .map(|(i, _)| i as u64)
            .collect()
    } else {
        (0..inner.len())
            .filter(|&i| inner.distance_blocks(i, y) <= pn)
            .map(|i| i as u64)
            .collect()
    }
}

pub fn refine(l_in: &[u64], outer: &OuterCodebook) -> Vec<u64> {
    l_in.iter().copied().filter(|&w| outer.message_of(w).is_some()).collect()
}

pub fn decode(code: &ConcatenatedCode, y: &BitWord, pn: usize) -> Result<DecodeOutcome> {
    let l_in = list_decode_inner(&code.inner, y, pn)?;
    let l_out = refine(&l_in, &code.outer);
    let verdict = match l_out.as_slice() {
        [w] => Verdict::Message(code.outer.message_of(*w).expect("refined word has a message")),
        _ => Verdict::DecodingError,
    };
    Ok(DecodeOutcome {
        l_in,
        l_out,
        verdict,
    })
}

/// True iff decoding `y` returns something other than `Message(m)`; skips building the lists.
pub(crate) fn decode_fails(code: &ConcatenatedCode, y: &[u64], m: usize, pn: usize) -> bool {
    let inner = &code.inner;
    let target = code.outer.word(m);
    let mut found_target = false;
    for i in 0..inner.len() {
        if inner.distance_blocks(i, y) <= pn && code.outer.message_of(i as u64).is_some() {
            if i as u64 == target {
                found_target = true;
            } else {
                return true;
            }
        }
    }
    !found_target
}

/// All inner indices sorted by `(d(y, C_in(w)), w)`.
pub fn rank_inner(inner: &InnerCodebook, y: &BitWord) -> Vec<u64> {
    let d = inner.distances(y);
    let mut keys: Vec<u64> = d
        .iter()
        .enumerate()
        .map(|(i, &di)| ((di as u64) << 32) | i as u64)
        .collect();
    keys.sort_unstable();
    keys.into_iter().map(|k| k & 0xffff_ffff).collect()
}

/// The `i`-th word (one-based) in the ranking of [`rank_inner`], found without a full sort.
pub fn nth_nearest(inner: &InnerCodebook, y: &BitWord, i: usize) -> Option<u64> {
    if i == 0 || i > inner.len() {
        return None;
    }
    let d = inner.distances(y);
    let mut keys: Vec<u64> = d
        .iter()
        .enumerate()
        .map(|(k, &dk)| ((dk as u64) << 32) | k as u64)
        .collect();
    let (_, kth, _) = keys.select_nth_unstable(i - 1);
    Some(*kth & 0xffff_ffff)
}

/// `w_1, ..., w_{i_max}` for `y = encode(m) ⊕ e`.
pub fn nearest_words(code: &ConcatenatedCode, m: usize, e: &BitWord, i_max: usize) -> Result<Vec<u64>> {
    if e.weight() > code.params.pn {
        return usage(format!("error weight {} exceeds budget {}", e.weight(), code.params.pn));
    }
    if i_max > code.inner.len() {
        return usage(format!("i_max = {i_max} exceeds W = {}", code.inner.len()));
    }
    let y = code.encode(m)?.xor(e)?;
    let mut ranked = rank_inner(&code.inner, &y);
    ranked.truncate(i_max);
    Ok(ranked)
}

/// Flip masks of every word of weight at most `t` in `{0,1}^n`, `n <= 64`.
pub(crate) fn ball_masks(n: usize, t: usize) -> Result<Vec<u64>> {
    Ok(enumerate_ball(&BitWord::zeros(n), t)?.map(|w| w.index()).collect())
}

/// `max_y |C_in ∩ B_pn(y)|` by exhaustive scan over `y`.
pub fn max_ball_count(inner: &InnerCodebook, pn: usize) -> Result<usize> {
    let n = inner.n();
    if n > LIST_CHECK_MAX_N {
        return capacity(format!(
            "exhaustive list check: n = {n} exceeds LIST_CHECK_MAX_N = {LIST_CHECK_MAX_N}"
        ));
    }
    let masks = ball_masks(n, pn.min(n))?;
    let mut counts = vec![0u32; 1usize << n];
    let mut best = 0u32;
    for i in 0..inner.len() {
        let c = inner.row(i)[0];
        for &mk in &masks {
            let slot = &mut counts[(c ^ mk) as usize];
            *slot += 1;
            best = best.max(*slot);
        }
    }
    Ok(best as usize)
}

/// Exhaustive `[L, pn]` list-decodability check.
pub fn is_list_decodable(inner: &InnerCodebook, l: usize, pn: usize) -> Result<bool> {
    if l >= inner.len() {
        return Ok(true);
    }
    Ok(max_ball_count(inner, pn)? <= l)
}

/// One-sided sampled check: returns a centre `y` whose ball holds more than `l` codewords, if one is found.
pub fn find_list_violation<R: Rng + ?Sized>(inner: &InnerCodebook, l: usize, pn: usize, samples: usize, rng: &mut R) -> Option<BitWord> {
    for _ in 0..samples {
        let y = crate::bitword::sample_uniform(inner.n(), rng);
        if list_decode_unchecked(inner, y.blocks(), pn).len() > l {
            return Some(y);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitword::{hamming_distance, sample_exact_weight, sample_uniform};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn small_params(n: usize, rho_n: usize, rate_n: usize, pn: usize) -> SystemParams {
        SystemParams::from_dims(n, rho_n, rate_n, pn, 0).unwrap()
    }

    #[test]
    fn params_flooring() {
        let p = SystemParams::new(20, 0.1, 0.25, 0.25, 0.35).unwrap();
        assert_eq!((p.rho_n, p.rate_n, p.pn, p.obs_width), (7, 5, 2, 5));
        assert_eq!(p.messages(), 32);
        assert_eq!(p.inner_words(), 128);
        let q = SystemParams::new(48, 0.1, 0.25, 0.25, 0.35).unwrap();
        assert_eq!((q.rho_n, q.rate_n, q.pn, q.obs_width), (16, 12, 4, 12));
        assert!(SystemParams::new(10, 0.5, 0.1, 0.2, 0.3).is_err());
        assert!(SystemParams::new(10, 0.1, 0.1, 0.4, 0.3).is_err());
        assert!(p.clone().with_budget(0, 1).is_err());
        assert!(p.with_slack(0.0, 0.1, 0.1, 0.1).is_err());
    }

    #[test]
    fn sample_inner_deterministic_and_seeded() {
        let p = small_params(12, 5, 3, 1);
        let a = sample_inner(&p, &mut rng(1)).unwrap();
        let b = sample_inner(&p, &mut rng(1)).unwrap();
        let c = sample_inner(&p, &mut rng(2)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 32);
        assert!((0..a.len()).all(|i| a.get(i).len() == 12));
        let big = small_params(30, 27, 1, 1);
        assert!(matches!(sample_inner(&big, &mut rng(0)), Err(Error::Capacity(_))));
    }

    #[test]
    fn sample_inner_bit_frequencies() {
        // 2^17 words of 13 bits; each position is Bernoulli(1/2)
        let inner = InnerCodebook::sample(13, 1 << 17, &mut rng(4));
        let total = inner.len() as f64;
        let sigma = (total * 0.25).sqrt();
        for j in 0..13 {
            let ones = (0..inner.len()).filter(|&i| inner.get(i).get(j)).count() as f64;
            assert!((ones - total / 2.0).abs() < 3.0 * sigma, "bit {j}: {ones}");
        }
    }

    #[test]
    fn outer_injective_and_bijective() {
        let mut r = rng(8);
        for _ in 0..100 {
            let rate_n = r.gen_range(0..=5);
            let p = small_params(10, 6, rate_n, 1);
            let o = build_outer(&p, &mut r).unwrap();
            let mut seen = std::collections::HashSet::new();
            assert!(o.words().iter().all(|w| seen.insert(*w)));
            assert_eq!(o.len(), 1 << rate_n);
        }
        let p = small_params(10, 4, 4, 1);
        let o = build_outer(&p, &mut rng(3)).unwrap();
        let mut w: Vec<u64> = o.words().to_vec();
        w.sort_unstable();
        assert_eq!(w, (0..16).collect::<Vec<_>>());
        assert_eq!(build_outer(&p, &mut rng(3)).unwrap(), o);
        assert!(OuterCodebook::from_indices(3, vec![1, 1]).is_err());
        let mut bad = small_params(10, 4, 4, 1);
        bad.rate_n = 5;
        assert!(build_outer(&bad, &mut rng(0)).is_err());
    }

    #[test]
    fn encode_definitions() {
        let p = small_params(12, 5, 3, 1);
        let code = ConcatenatedCode::from_seed(&p, CodeMode::Concat, 5).unwrap();
        for m in 0..code.messages() {
            let x = code.encode(m).unwrap();
            assert_eq!(x, code.inner.get(code.outer.word(m) as usize));
            assert_eq!(x.len(), 12);
        }
        assert!(code.encode(8).is_err());
        let plain = ConcatenatedCode::from_seed(&p, CodeMode::Plain, 5).unwrap();
        assert_eq!(plain.inner.len(), 8);
        for m in 0..8 {
            assert_eq!(plain.encode(m).unwrap(), plain.inner.get(m));
        }
    }

    #[test]
    fn list_decode_examples_and_oracle() {
        let p = small_params(10, 4, 2, 1);
        let code = ConcatenatedCode::from_seed(&p, CodeMode::Concat, 1).unwrap();
        let y = sample_uniform(10, &mut rng(0));
        assert_eq!(list_decode_inner(&code.inner, &y, 10).unwrap().len(), 16);
        // distinct words, pn = 0
        let words: Vec<BitWord> = (0..8).map(|k| BitWord::from_index(k * 3 + 1, 6).unwrap()).collect();
        let inner = InnerCodebook::from_words(6, &words).unwrap();
        assert_eq!(list_decode_inner(&inner, &words[5], 0).unwrap(), vec![5]);
        assert!(list_decode_inner(&inner, &BitWord::zeros(5), 0).is_err());

        let mut r = rng(12);
        for _ in 0..50 {
            let n = r.gen_range(4..=12);
            let rho_n = r.gen_range(1..=5.min(n));
            let pn = r.gen_range(0..=2.min((n - 1) / 2));
            let p = small_params(n, rho_n, 0, pn);
            let inner = sample_inner(&p, &mut r).unwrap();
            let y = sample_uniform(n, &mut r);
            let fast = list_decode_inner(&inner, &y, pn).unwrap();
            // oracle: every ball point, every matching row
            let mut oracle: Vec<u64> = Vec::new();
            for z in enumerate_ball(&y, pn).unwrap() {
                for i in 0..inner.len() {
                    if inner.get(i) == z {
                        oracle.push(i as u64);
                    }
                }
            }
            oracle.sort_unstable();
            assert_eq!(fast, oracle);
        }
    }

    #[test]
    fn refine_examples() {
        let o = OuterCodebook::from_indices(4, vec![1, 5, 9]).unwrap();
        assert!(refine(&[0, 2, 3], &o).is_empty());
        assert_eq!(refine(&[1, 5, 9], &o), vec![1, 5, 9]);
        let l_in = vec![0, 1, 4, 5, 6, 9, 15];
        let oracle: Vec<u64> = l_in
            .iter()
            .copied()
            .filter(|w| o.words().iter().any(|x| x == w))
            .collect();
        assert_eq!(refine(&l_in, &o), oracle);
    }

    #[test]
    fn decode_unique_and_collision() {
        // repetition-like code with min distance 6, pn = 2
        let words: Vec<BitWord> = ["000000", "111000", "000111", "111111"]
            .iter()
            .map(|s| s.parse().unwrap())
            .collect();
        let inner = InnerCodebook::from_words(6, &words).unwrap();
        let params = small_params(6, 2, 2, 1);
        let outer = OuterCodebook::from_indices(2, vec![2, 0, 3, 1]).unwrap();
        let code = ConcatenatedCode::from_parts(params, CodeMode::Concat, outer, inner, 0).unwrap();
        for m in 0..4 {
            let y = code.encode(m).unwrap();
            assert_eq!(decode(&code, &y, 1).unwrap().verdict, Verdict::Message(m));
        }
        // two messages share a codeword: both land in L_out
        let words: Vec<BitWord> = ["000000", "000000", "111111", "110011"]
            .iter()
            .map(|s| s.parse().unwrap())
            .collect();
        let inner = InnerCodebook::from_words(6, &words).unwrap();
        let params = small_params(6, 2, 1, 1);
        let outer = OuterCodebook::from_indices(2, vec![0, 1]).unwrap();
        let code = ConcatenatedCode::from_parts(params, CodeMode::Concat, outer, inner, 0).unwrap();
        let out = decode(&code, &code.encode(0).unwrap(), 1).unwrap();
        assert_eq!(out.l_out, vec![0, 1]);
        assert_eq!(out.verdict, Verdict::DecodingError);
        assert!(decode_fails(&code, code.encode(0).unwrap().blocks(), 0, 1));
    }

    #[test]
    fn decode_membership_guarantee() {
        let mut r = rng(77);
        for trial in 0..1000u64 {
            let n = r.gen_range(8..=16);
            let rho_n = r.gen_range(2..=6);
            let rate_n = r.gen_range(0..=rho_n);
            let pn = r.gen_range(0..=(n - 1) / 4);
            let p = small_params(n, rho_n, rate_n, pn);
            let mode = if trial % 5 == 0 { CodeMode::Plain } else { CodeMode::Concat };
            let code = ConcatenatedCode::sample(&p, mode, trial, &mut r).unwrap();
            let m0 = r.gen_range(0..code.messages());
            let e = sample_exact_weight(n, r.gen_range(0..=pn), &mut r).unwrap();
            let y = code.encode(m0).unwrap().xor(&e).unwrap();
            let out = decode(&code, &y, pn).unwrap();
            assert!(out.l_out.contains(&code.outer.word(m0)));
            assert!(out.l_out.iter().all(|w| out.l_in.contains(w)));
            let fails = out.verdict != Verdict::Message(m0);
            assert_eq!(fails, out.l_out.len() != 1);
            assert_eq!(fails, decode_fails(&code, y.blocks(), m0, pn));
        }
    }

    #[test]
    fn nearest_words_order() {
        let p = small_params(10, 4, 2, 1);
        let code = ConcatenatedCode::from_seed(&p, CodeMode::Concat, 3).unwrap();
        let e = BitWord::zeros(10);
        let all = nearest_words(&code, 1, &e, 16).unwrap();
        let mut sorted = all.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..16).collect::<Vec<_>>());
        let y = code.encode(1).unwrap();
        let d: Vec<usize> = all.iter().map(|&w| code.inner.distance_to(w as usize, &y)).collect();
        assert!(d.windows(2).all(|x| x[0] <= x[1]));
        for i in 1..=16 {
            assert_eq!(nearest_words(&code, 1, &e, i).unwrap(), all[..i].to_vec());
            assert_eq!(nth_nearest(&code.inner, &y, i), Some(all[i - 1]));
        }
        assert!(nearest_words(&code, 1, &e, 17).is_err());
        assert!(nearest_words(&code, 1, &BitWord::ones(10), 1).is_err());

        // two rows at equal distance from y: smaller index first
        let words: Vec<BitWord> = ["1100", "0011", "1000", "0110"].iter().map(|s| s.parse().unwrap()).collect();
        let inner = InnerCodebook::from_words(4, &words).unwrap();
        let y: BitWord = "0000".parse().unwrap();
        assert_eq!(rank_inner(&inner, &y), vec![2, 0, 1, 3]);
    }

    #[test]
    fn list_decodable_examples_and_oracle() {
        let p = small_params(10, 4, 0, 1);
        let inner = sample_inner(&p, &mut rng(1)).unwrap();
        assert!(is_list_decodable(&inner, 16, 3).unwrap());
        let words: Vec<BitWord> = ["0101", "0101", "1111", "0000"].iter().map(|s| s.parse().unwrap()).collect();
        let rep = InnerCodebook::from_words(4, &words).unwrap();
        assert!(!is_list_decodable(&rep, 1, 0).unwrap());

        let mut r = rng(31);
        for _ in 0..50 {
            let n = r.gen_range(3..=10);
            let rho_n = r.gen_range(1..=6);
            let pn = r.gen_range(0..=n / 3);
            let l = r.gen_range(1..=4);
            let inner = InnerCodebook::sample(n, 1 << rho_n, &mut r);
            let mut oracle = 0;
            for y in 0..(1u64 << n) {
                let yw = BitWord::from_index(y, n).unwrap();
                let c = (0..inner.len())
                    .filter(|&i| hamming_distance(&inner.get(i), &yw).unwrap() <= pn)
                    .count();
                oracle = oracle.max(c);
            }
            assert_eq!(max_ball_count(&inner, pn).unwrap(), oracle);
            assert_eq!(is_list_decodable(&inner, l, pn).unwrap(), oracle <= l);
            if let Some(y) = find_list_violation(&inner, l, pn, 200, &mut r) {
                assert!(oracle > l);
                assert!(list_decode_inner(&inner, &y, pn).unwrap().len() > l);
            }
        }
        let wide = InnerCodebook::sample(25, 4, &mut r);
        assert!(matches!(max_ball_count(&wide, 1), Err(Error::Capacity(_))));
    }

    #[test]
    fn replace_semantics() {
        let p = small_params(12, 4, 0, 1);
        let inner = sample_inner(&p, &mut rng(6)).unwrap();
        assert_eq!(inner.replace(3, &inner.get(3)).unwrap(), inner);
        let z = sample_uniform(12, &mut rng(7));
        let c2 = inner.replace(3, &z).unwrap();
        assert_eq!(c2.get(3), z);
        for i in 0..inner.len() {
            if i != 3 {
                assert_eq!(c2.get(i), inner.get(i));
            }
        }
        assert_ne!(inner.get(3), z);
        assert!(inner.replace(16, &z).is_err());
        assert!(inner.replace(0, &BitWord::zeros(11)).is_err());
    }

    #[test]
    fn wide_words_use_multiple_blocks() {
        let mut r = rng(2);
        let words: Vec<BitWord> = (0..4).map(|_| sample_uniform(130, &mut r)).collect();
        let inner = InnerCodebook::from_words(130, &words).unwrap();
        let y = sample_uniform(130, &mut r);
        for (i, w) in words.iter().enumerate() {
            assert_eq!(inner.get(i), *w);
            assert_eq!(inner.distance_to(i, &y), hamming_distance(w, &y).unwrap());
        }
    }

    #[test]
    fn codebook_text_roundtrip() {
        let p = small_params(9, 3, 2, 1);
        for mode in [CodeMode::Concat, CodeMode::Plain] {
            let code = ConcatenatedCode::from_seed(&p, mode, 42).unwrap();
            let text = code.to_text();
            assert!(text.starts_with("codebook n=9 rho_n=3 R_n=2 mode="));
            let back = parse_codebook(&text).unwrap().into_code(1, 0).unwrap();
            assert_eq!(back.inner, code.inner);
            assert_eq!(back.outer, code.outer);
            assert_eq!(back.mode, mode);
            assert_eq!(back.seed, 42);
        }
        assert!(parse_codebook("codebook n=2 rho_n=1 R_n=0 mode=concat seed=0\n00\n").is_err());
        assert!(parse_codebook("nonsense").is_err());
    }
}
