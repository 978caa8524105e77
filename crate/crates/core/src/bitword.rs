// SPDX-License-Identifier: Apache-2.0

//! Fixed-length binary vectors and Hamming-space combinatorics.
//!
//! Position `j = 1` is the first bit of a word. Internally bit `j` lives at
//! bit `(j - 1) % 64` of block `(j - 1) / 64`, so the packed blocks read as a
//! little-endian integer are exactly `int_repr(a) - 1`.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;

use crate::error::{usage, Error, Result};

/// A binary vector of fixed length.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitWord {
    len: usize,
    blocks: Vec<u64>,
}

fn blocks_for(len: usize) -> usize {
    len.div_ceil(64)
}

impl BitWord {
    pub fn zeros(len: usize) -> Self {
        BitWord {
            len,
            blocks: vec![0; blocks_for(len)],
        }
    }

    pub fn ones(len: usize) -> Self {
        let mut w = BitWord::zeros(len);
        for b in w.blocks.iter_mut() {
            *b = u64::MAX;
        }
        w.mask_tail();
        w
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mut w = BitWord::zeros(bits.len());
        for (j, &b) in bits.iter().enumerate() {
            if b {
                w.set(j, true);
            }
        }
        w
    }

    /// Builds a word of `len <= 64` bits from its packed value (`int_repr - 1`).
    pub fn from_index(index: u64, len: usize) -> Result<Self> {
        if len > 64 {
            return usage(format!("from_index supports len <= 64, got {len}"));
        }
        if len < 64 && index >> len != 0 {
            return usage(format!("index {index} does not fit in {len} bits"));
        }
        let mut w = BitWord::zeros(len);
        if len > 0 {
            w.blocks[0] = index;
        }
        Ok(w)
    }

    /// Builds a word directly from packed blocks; bits past `len` are cleared.
    pub fn from_blocks(blocks: &[u64], len: usize) -> Self {
        let mut w = BitWord::zeros(len);
        let k = w.blocks.len();
        w.blocks.copy_from_slice(&blocks[..k]);
        w.mask_tail();
        w
    }

    fn mask_tail(&mut self) {
        let rem = self.len % 64;
        if rem != 0 {
            if let Some(last) = self.blocks.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn blocks(&self) -> &[u64] {
        &self.blocks
    }

    /// Bit at zero-based position `j` (one-based position `j + 1`).
    pub fn get(&self, j: usize) -> bool {
        assert!(j < self.len, "bit {j} out of range for length {}", self.len);
        (self.blocks[j / 64] >> (j % 64)) & 1 == 1
    }

    pub fn set(&mut self, j: usize, v: bool) {
        assert!(j < self.len, "bit {j} out of range for length {}", self.len);
        let mask = 1u64 << (j % 64);
        if v {
            self.blocks[j / 64] |= mask;
        } else {
            self.blocks[j / 64] &= !mask;
        }
    }

    pub fn flip(&mut self, j: usize) {
        assert!(j < self.len, "bit {j} out of range for length {}", self.len);
        self.blocks[j / 64] ^= 1u64 << (j % 64);
    }

    pub fn weight(&self) -> usize {
        self.blocks.iter().map(|b| b.count_ones() as usize).sum()
    }

    /// Zero-based positions of the set bits, ascending.
    pub fn support(&self) -> Vec<usize> {
        (0..self.len).filter(|&j| self.get(j)).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.blocks.iter().all(|&b| b == 0)
    }

    pub fn xor(&self, other: &BitWord) -> Result<BitWord> {
        check_len(self, other)?;
        Ok(self.xor_unchecked(other))
    }

    pub(crate) fn xor_unchecked(&self, other: &BitWord) -> BitWord {
        BitWord {
            len: self.len,
            blocks: self
                .blocks
                .iter()
                .zip(&other.blocks)
                .map(|(a, b)| a ^ b)
                .collect(),
        }
    }

    pub fn int_repr(&self) -> BigUint {
        let mut v = BigUint::zero();
        for &b in self.blocks.iter().rev() {
            v <<= 64;
            v += BigUint::from(b);
        }
        v + BigUint::one()
    }

    /// Inverse of [`BitWord::int_repr`]; `k` must lie in `[1, 2^len]`.
    pub fn from_int(k: &BigUint, len: usize) -> Result<BitWord> {
        if k.is_zero() {
            return usage("from_int: k must be >= 1");
        }
        let v = k - BigUint::one();
        if v.bits() > len as u64 {
            return usage(format!("from_int: k exceeds 2^{len}"));
        }
        let mut w = BitWord::zeros(len);
        for (i, d) in v.to_u64_digits().into_iter().enumerate() {
            w.blocks[i] = d;
        }
        Ok(w)
    }

    /// `int_repr - 1` for words of at most 64 bits.
    pub fn index(&self) -> u64 {
        debug_assert!(self.len <= 64);
        self.blocks.first().copied().unwrap_or(0)
    }

    /// Compares two words of equal length by their integer representation.
    pub fn cmp_int(&self, other: &BitWord) -> Ordering {
        debug_assert_eq!(self.len, other.len);
        for (a, b) in self.blocks.iter().rev().zip(other.blocks.iter().rev()) {
            match a.cmp(b) {
                Ordering::Equal => continue,
                o => return o,
            }
        }
        Ordering::Equal
    }

    /// Restriction to the given zero-based positions, in the given order.
    pub fn restrict(&self, positions: &[usize]) -> BitWord {
        let mut w = BitWord::zeros(positions.len());
        for (k, &j) in positions.iter().enumerate() {
            if self.get(j) {
                w.set(k, true);
            }
        }
        w
    }
}

fn check_len(a: &BitWord, b: &BitWord) -> Result<()> {
    if a.len != b.len {
        return usage(format!("length mismatch: {} vs {}", a.len, b.len));
    }
    Ok(())
}

pub fn hamming_distance(a: &BitWord, b: &BitWord) -> Result<usize> {
    check_len(a, b)?;
    Ok(distance_unchecked(a, b))
}

#[inline]
pub(crate) fn distance_unchecked(a: &BitWord, b: &BitWord) -> usize {
    a.blocks
        .iter()
        .zip(&b.blocks)
        .map(|(x, y)| (x ^ y).count_ones() as usize)
        .sum()
}

impl fmt::Display for BitWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = (0..self.len)
            .map(|j| if self.get(j) { '1' } else { '0' })
            .collect();
        f.write_str(&s)
    }
}

impl fmt::Debug for BitWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitWord({self})")
    }
}

impl FromStr for BitWord {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut w = BitWord::zeros(s.len());
        for (j, c) in s.chars().enumerate() {
            match c {
                '0' => {}
                '1' => w.set(j, true),
                _ => return usage(format!("invalid bit character {c:?} in {s:?}")),
            }
        }
        Ok(w)
    }
}

/// Binomial coefficient, exact.
pub fn binomial(n: usize, k: usize) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc *= BigUint::from(n - i);
        acc /= BigUint::from(i + 1);
    }
    acc
}

/// `|B_t(z)| = sum_{k <= t} C(n, k)`.
pub fn ball_volume(n: usize, t: usize) -> Result<BigUint> {
    if t > n {
        return usage(format!("ball radius {t} exceeds length {n}"));
    }
    Ok((0..=t).map(|k| binomial(n, k)).sum())
}

/// Ball volume as a `u64`, or `None` when it does not fit.
pub fn ball_volume_u64(n: usize, t: usize) -> Option<u64> {
    ball_volume(n, t).ok()?.to_u64()
}

/// Iterator over all words within distance `t` of a center; see [`enumerate_ball`].
pub struct BallIter {
    center: BitWord,
    t: usize,
    weight: usize,
    // Current flip positions, ascending; `None` once exhausted.
    positions: Option<Vec<usize>>,
}

impl BallIter {
    fn advance(&mut self) {
        let n = self.center.len();
        let Some(pos) = self.positions.as_mut() else {
            return;
        };
        // Colex successor: numeric order on the flip pattern.
        let k = pos.len();
        let mut i = 0;
        while i < k {
            let limit = if i + 1 < k { pos[i + 1] } else { n };
            if pos[i] + 1 < limit {
                pos[i] += 1;
                for (r, p) in pos.iter_mut().enumerate().take(i) {
                    *p = r;
                }
                return;
            }
            i += 1;
        }
        self.weight += 1;
        if self.weight > self.t {
            self.positions = None;
        } else {
            self.positions = Some((0..self.weight).collect());
        }
    }
}

impl Iterator for BallIter {
    type Item = BitWord;

    fn next(&mut self) -> Option<BitWord> {
        let pos = self.positions.as_ref()?;
        let mut w = self.center.clone();
        for &j in pos {
            w.flip(j);
        }
        self.advance();
        Some(w)
    }
}

/// Yields every word within Hamming distance `t` of `center` exactly once,
/// ordered by weight of the flip pattern and then by its integer representation.
pub fn enumerate_ball(center: &BitWord, t: usize) -> Result<BallIter> {
    if t > center.len() {
        return usage(format!(
            "ball radius {t} exceeds length {}",
            center.len()
        ));
    }
    Ok(BallIter {
        center: center.clone(),
        t,
        weight: 0,
        positions: Some(Vec::new()),
    })
}

/// Uniform word of exact weight `w` among the `C(n, w)` possibilities.
pub fn sample_exact_weight<R: Rng + ?Sized>(n: usize, w: usize, rng: &mut R) -> Result<BitWord> {
    if w > n {
        return usage(format!("weight {w} exceeds length {n}"));
    }
    let mut word = BitWord::zeros(n);
    for j in rand::seq::index::sample(rng, n, w) {
        word.set(j, true);
    }
    Ok(word)
}

/// Uniform word over all of `{0,1}^n`.
pub fn sample_uniform<R: Rng + ?Sized>(n: usize, rng: &mut R) -> BitWord {
    let mut w = BitWord::zeros(n);
    for b in w.blocks.iter_mut() {
        *b = rng.gen();
    }
    w.mask_tail();
    w
}
