// SPDX-License-Identifier: Apache-2.0

//! Boolean observation circuits: netlist text format, budget checks,
//! bit-sliced evaluation and the observation partition `{O_psi}`.
//!
//! A gate's truth table is stored as four bits `t(0,0) t(0,1) t(1,0) t(1,1)`
//! with the left operand first; in the packed `u8` bit `2*l + r` holds
//! `t(l, r)`. The constants `const0` / `const1` are free operands and are not
//! nodes, so they never count toward size.

use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};
use std::cmp::Reverse;
use std::fmt::Write as _;

use num_bigint::BigUint;
use num_traits::{One, Pow};
use rand::Rng;
use rayon::prelude::*;

use crate::bitword::BitWord;
use crate::error::{capacity, usage, Error, Result};

/// Largest input width for which the full partition is enumerated.
pub const PARTITION_MAX_INPUTS: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Operand {
    /// Input node `x_j`, one-based.
    Input(usize),
    /// Output of the gate with this zero-based position in `Circuit::gates`.
    Gate(usize),
    Const(bool),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gate {
    pub name: String,
    pub tt: u8,
    pub left: Operand,
    pub right: Operand,
}

impl Gate {
    #[inline]
    fn apply(&self, a: u64, b: u64) -> u64 {
        let m = |k: u8| if (self.tt >> k) & 1 == 1 { u64::MAX } else { 0 };
        (m(0) & !a & !b) | (m(1) & !a & b) | (m(2) & a & !b) | (m(3) & a & b)
    }
}

/// Parses `"0110"` into the packed truth-table byte.
pub fn parse_truth_table(s: &str) -> Option<u8> {
    if s.len() != 4 {
        return None;
    }
    let mut tt = 0u8;
    for (k, c) in s.chars().enumerate() {
        match c {
            '0' => {}
            '1' => tt |= 1 << k,
            _ => return None,
        }
    }
    Some(tt)
}

pub fn format_truth_table(tt: u8) -> String {
    (0..4).map(|k| if (tt >> k) & 1 == 1 { '1' } else { '0' }).collect()
}

/// A combinational circuit with `n_inputs` input nodes, a topologically
/// ordered gate list and an ordered list of outputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Circuit {
    n_inputs: usize,
    gates: Vec<Gate>,
    outputs: Vec<Operand>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BudgetReport {
    pub size: usize,
    pub budget: u128,
    pub output_width: usize,
    pub required_width: usize,
    pub ok: bool,
}

impl Circuit {
    /// Assembles a circuit, checking that every operand refers to an input
    /// in range or an earlier gate.
    pub fn new(n_inputs: usize, gates: Vec<Gate>, outputs: Vec<Operand>) -> Result<Circuit> {
        let check = |op: &Operand, limit: usize| -> Result<()> {
            match *op {
                Operand::Input(j) if j == 0 || j > n_inputs => {
                    usage(format!("input x{j} out of range 1..={n_inputs}"))
                }
                Operand::Gate(g) if g >= limit => {
                    usage(format!("gate operand {g} does not precede its use"))
                }
                _ => Ok(()),
            }
        };
        for (k, g) in gates.iter().enumerate() {
            check(&g.left, k)?;
            check(&g.right, k)?;
            if g.tt > 0x0f {
                return usage("truth table has more than 4 bits");
            }
        }
        for o in &outputs {
            check(o, gates.len())?;
        }
        Ok(Circuit {
            n_inputs,
            gates,
            outputs,
        })
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn outputs(&self) -> &[Operand] {
        &self.outputs
    }

    pub fn output_width(&self) -> usize {
        self.outputs.len()
    }

    /// Total node count: inputs plus gates.
    pub fn size(&self) -> usize {
        self.n_inputs + self.gates.len()
    }

    /// Evaluates 64 inputs at once. `inputs[j]` carries bit `x_{j+1}` of each lane.
    pub fn eval_lanes(&self, inputs: &[u64]) -> Vec<u64> {
        debug_assert_eq!(inputs.len(), self.n_inputs);
        let mut vals: Vec<u64> = Vec::with_capacity(self.gates.len());
        let read = |op: Operand, vals: &[u64]| match op {
            Operand::Input(j) => inputs[j - 1],
            Operand::Gate(g) => vals[g],
            Operand::Const(false) => 0,
            Operand::Const(true) => u64::MAX,
        };
        for g in &self.gates {
            let v = g.apply(read(g.left, &vals), read(g.right, &vals));
            vals.push(v);
        }
        self.outputs.iter().map(|&o| read(o, &vals)).collect()
    }

    pub fn evaluate(&self, x: &BitWord) -> Result<BitWord> {
        if x.len() != self.n_inputs {
            return usage(format!(
                "input length {} does not match circuit inputs {}",
                x.len(),
                self.n_inputs
            ));
        }
        let lanes: Vec<u64> = (0..self.n_inputs)
            .map(|j| if x.get(j) { u64::MAX } else { 0 })
            .collect();
        let out = self.eval_lanes(&lanes);
        let bits: Vec<bool> = out.iter().map(|v| v & 1 == 1).collect();
        Ok(BitWord::from_bits(&bits))
    }

    /// Evaluates a batch of words, 64 per pass.
    pub fn evaluate_many(&self, xs: &[BitWord]) -> Result<Vec<BitWord>> {
        let mut out = Vec::with_capacity(xs.len());
        for chunk in xs.chunks(64) {
            let mut lanes = vec![0u64; self.n_inputs];
            for (lane, x) in chunk.iter().enumerate() {
                if x.len() != self.n_inputs {
                    return usage("input length does not match circuit inputs");
                }
                for (j, l) in lanes.iter_mut().enumerate() {
                    if x.get(j) {
                        *l |= 1 << lane;
                    }
                }
            }
            let res = self.eval_lanes(&lanes);
            for lane in 0..chunk.len() {
                let bits: Vec<bool> = res.iter().map(|v| (v >> lane) & 1 == 1).collect();
                out.push(BitWord::from_bits(&bits));
            }
        }
        Ok(out)
    }

    /// Renders the netlist; gates appear in topological order.
    pub fn to_netlist(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "inputs {}", self.n_inputs);
        for g in &self.gates {
            let _ = writeln!(
                s,
                "gate {} tt:{} {} {}",
                g.name,
                format_truth_table(g.tt),
                self.operand_name(g.left),
                self.operand_name(g.right)
            );
        }
        s.push_str("out");
        for &o in &self.outputs {
            s.push(' ');
            s.push_str(&self.operand_name(o));
        }
        s.push('\n');
        s
    }

    fn operand_name(&self, op: Operand) -> String {
        match op {
            Operand::Input(j) => format!("x{j}"),
            Operand::Gate(g) => self.gates[g].name.clone(),
            Operand::Const(false) => "const0".into(),
            Operand::Const(true) => "const1".into(),
        }
    }
}

/// Checks output width `== floor(r n)` and `size <= c n^s`.
pub fn validate_budget(circuit: &Circuit, r: f64, c: u64, s: u32) -> BudgetReport {
    let n = circuit.n_inputs();
    let required_width = crate::code::floor_rate(r, n);
    let budget = (c as u128).saturating_mul((n as u128).saturating_pow(s));
    let size = circuit.size();
    BudgetReport {
        size,
        budget,
        output_width: circuit.output_width(),
        required_width,
        ok: circuit.output_width() == required_width && (size as u128) <= budget,
    }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn input_ref(s: &str) -> Option<usize> {
    let rest = s.strip_prefix('x')?;
    if rest.is_empty() || !rest.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    rest.parse().ok()
}

enum RawOperand {
    Input(usize),
    Const(bool),
    Name(String),
}

struct RawGate {
    line: usize,
    name: String,
    tt: u8,
    left: RawOperand,
    right: RawOperand,
}

fn parse_operand(tok: &str, line: usize) -> Result<RawOperand> {
    match tok {
        "const0" => return Ok(RawOperand::Const(false)),
        "const1" => return Ok(RawOperand::Const(true)),
        _ => {}
    }
    if let Some(j) = input_ref(tok) {
        return Ok(RawOperand::Input(j));
    }
    if is_identifier(tok) {
        return Ok(RawOperand::Name(tok.to_string()));
    }
    Err(Error::Parse {
        line,
        msg: format!("invalid operand {tok:?}"),
    })
}

/// Parses a netlist document. Gates may be declared in any order; they are
/// stored topologically, keeping declaration order where it is already valid.
pub fn parse_circuit(text: &str) -> Result<Circuit> {
    let mut n_inputs: Option<usize> = None;
    let mut raw: Vec<RawGate> = Vec::new();
    let mut out: Option<(usize, Vec<RawOperand>)> = None;
    let mut ids: HashMap<String, usize> = HashMap::new();
    let perr = |line: usize, msg: String| Error::Parse { line, msg };

    for (idx, full) in text.lines().enumerate() {
        let line = idx + 1;
        let stmt = full.split('#').next().unwrap_or("").trim();
        if stmt.is_empty() {
            continue;
        }
        let toks: Vec<&str> = stmt.split_whitespace().collect();
        match toks[0] {
            "inputs" => {
                if n_inputs.is_some() {
                    return Err(perr(line, "duplicate inputs statement".into()));
                }
                if toks.len() != 2 {
                    return Err(perr(line, "expected `inputs <n>`".into()));
                }
                let n = toks[1]
                    .parse()
                    .map_err(|_| perr(line, format!("invalid input count {:?}", toks[1])))?;
                n_inputs = Some(n);
            }
            "gate" => {
                if toks.len() != 5 {
                    return Err(perr(
                        line,
                        "expected `gate <id> tt:<4 bits> <operand> <operand>`".into(),
                    ));
                }
                let name = toks[1];
                if !is_identifier(name)
                    || input_ref(name).is_some()
                    || name == "const0"
                    || name == "const1"
                {
                    return Err(perr(line, format!("invalid gate id {name:?}")));
                }
                let tt = toks[2]
                    .strip_prefix("tt:")
                    .and_then(parse_truth_table)
                    .ok_or_else(|| perr(line, format!("invalid truth table {:?}", toks[2])))?;
                if ids.insert(name.to_string(), raw.len()).is_some() {
                    return Err(perr(line, format!("duplicate node id {name:?}")));
                }
                raw.push(RawGate {
                    line,
                    name: name.to_string(),
                    tt,
                    left: parse_operand(toks[3], line)?,
                    right: parse_operand(toks[4], line)?,
                });
            }
            "out" => {
                if out.is_some() {
                    return Err(perr(line, "more than one out statement".into()));
                }
                let ops = toks[1..]
                    .iter()
                    .map(|t| parse_operand(t, line))
                    .collect::<Result<Vec<_>>>()?;
                out = Some((line, ops));
            }
            other => return Err(perr(line, format!("unknown statement {other:?}"))),
        }
    }

    let n = n_inputs.ok_or_else(|| perr(0, "missing inputs statement".into()))?;
    let (out_line, out_ops) = out.ok_or_else(|| perr(0, "missing out statement".into()))?;

    // Resolve names to raw gate indices.
    let resolve = |op: &RawOperand, line: usize| -> Result<Operand> {
        match op {
            RawOperand::Input(j) => {
                if *j == 0 || *j > n {
                    Err(perr(line, format!("input x{j} out of range 1..={n}")))
                } else {
                    Ok(Operand::Input(*j))
                }
            }
            RawOperand::Const(b) => Ok(Operand::Const(*b)),
            RawOperand::Name(s) => ids
                .get(s)
                .map(|&g| Operand::Gate(g))
                .ok_or_else(|| perr(line, format!("dangling reference {s:?}"))),
        }
    };
    let mut resolved = Vec::with_capacity(raw.len());
    for g in &raw {
        resolved.push((resolve(&g.left, g.line)?, resolve(&g.right, g.line)?));
    }
    let outputs_raw = out_ops
        .iter()
        .map(|o| resolve(o, out_line))
        .collect::<Result<Vec<_>>>()?;

    // Kahn's algorithm, smallest declaration index first.
    let k = raw.len();
    let mut indeg = vec![0usize; k];
    let mut users: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (g, (l, r)) in resolved.iter().enumerate() {
        for op in [l, r] {
            if let Operand::Gate(src) = op {
                indeg[g] += 1;
                users[*src].push(g);
            }
        }
    }
    let mut heap: BinaryHeap<Reverse<usize>> =
        (0..k).filter(|&g| indeg[g] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(k);
    while let Some(Reverse(g)) = heap.pop() {
        order.push(g);
        for &u in &users[g] {
            indeg[u] -= 1;
            if indeg[u] == 0 {
                heap.push(Reverse(u));
            }
        }
    }
    if order.len() != k {
        let stuck = (0..k).find(|&g| indeg[g] > 0).unwrap();
        return Err(perr(
            raw[stuck].line,
            format!("cycle detected through gate {:?}", raw[stuck].name),
        ));
    }
    let mut new_pos = vec![0usize; k];
    for (pos, &g) in order.iter().enumerate() {
        new_pos[g] = pos;
    }
    let remap = |op: Operand| match op {
        Operand::Gate(g) => Operand::Gate(new_pos[g]),
        o => o,
    };
    let gates = order
        .iter()
        .map(|&g| Gate {
            name: raw[g].name.clone(),
            tt: raw[g].tt,
            left: remap(resolved[g].0),
            right: remap(resolved[g].1),
        })
        .collect();
    let outputs = outputs_raw.into_iter().map(remap).collect();
    Circuit::new(n, gates, outputs)
}

/// Projection onto the given one-based input positions, in order. No gates.
pub fn build_projection(n: usize, indices: &[usize]) -> Result<Circuit> {
    let mut seen = BTreeSet::new();
    for &j in indices {
        if j == 0 || j > n {
            return usage(format!("projection index {j} out of range 1..={n}"));
        }
        if !seen.insert(j) {
            return usage(format!("duplicate projection index {j}"));
        }
    }
    Circuit::new(n, Vec::new(), indices.iter().map(|&j| Operand::Input(j)).collect())
}

pub fn identity_circuit(n: usize) -> Circuit {
    build_projection(n, &(1..=n).collect::<Vec<_>>()).expect("identity projection is valid")
}

/// Every output tied to `const0`.
pub fn constant_circuit(n: usize, width: usize) -> Circuit {
    Circuit::new(n, Vec::new(), vec![Operand::Const(false); width]).expect("constant circuit is valid")
}

/// Random circuit with `gates` gates and `width` outputs drawn from all nodes and constants.
pub fn random_circuit<R: Rng + ?Sized>(n: usize, gates: usize, width: usize, rng: &mut R) -> Circuit {
    let pick = |k: usize, rng: &mut R| -> Operand {
        let choices = n + k + 2;
        let c = rng.gen_range(0..choices);
        if c < n {
            Operand::Input(c + 1)
        } else if c < n + k {
            Operand::Gate(c - n)
        } else {
            Operand::Const(c == n + k + 1)
        }
    };
    let mut gs = Vec::with_capacity(gates);
    for k in 0..gates {
        gs.push(Gate {
            name: format!("g{}", k + 1),
            tt: rng.gen_range(0..16),
            left: pick(k, rng),
            right: pick(k, rng),
        });
    }
    let outputs = (0..width).map(|_| pick(gates, rng)).collect();
    Circuit::new(n, gs, outputs).expect("generated operands precede their use")
}

/// Lane masks for input `j` (zero-based) over the 64 consecutive inputs starting at `base`.
fn input_lane(j: usize, base: u64) -> u64 {
    const PATTERNS: [u64; 6] = [
        0xAAAA_AAAA_AAAA_AAAA,
        0xCCCC_CCCC_CCCC_CCCC,
        0xF0F0_F0F0_F0F0_F0F0,
        0xFF00_FF00_FF00_FF00,
        0xFFFF_0000_FFFF_0000,
        0xFFFF_FFFF_0000_0000,
    ];
    if j < 6 {
        PATTERNS[j]
    } else if (base >> j) & 1 == 1 {
        u64::MAX
    } else {
        0
    }
}

/// The partition of `{0,1}^n` into observation sets. Words are addressed by
/// their packed index (`int_repr - 1`); so are observations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservationPartition {
    n: usize,
    width: usize,
    cell_of: Vec<u32>,
    sizes: BTreeMap<u32, u64>,
}

impl ObservationPartition {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Observation index of the word with the given packed index.
    pub fn psi_index_of(&self, x: u64) -> u32 {
        self.cell_of[x as usize]
    }

    pub fn psi_of(&self, x: &BitWord) -> BitWord {
        BitWord::from_index(self.cell_of[x.index() as usize] as u64, self.width)
            .expect("observation fits its width")
    }

    pub fn contains(&self, psi: &BitWord, x: &BitWord) -> bool {
        psi.len() == self.width && self.cell_of[x.index() as usize] as u64 == psi.index()
    }

    pub fn cell_size(&self, psi: &BitWord) -> u64 {
        if psi.len() != self.width {
            return 0;
        }
        self.sizes.get(&(psi.index() as u32)).copied().unwrap_or(0)
    }

    /// Nonempty cells as `(psi, |O_psi|)`, ascending by `int_repr(psi)`.
    pub fn cells(&self) -> Vec<(BitWord, u64)> {
        self.sizes
            .iter()
            .map(|(&p, &s)| (BitWord::from_index(p as u64, self.width).unwrap(), s))
            .collect()
    }

    pub fn num_cells(&self) -> usize {
        self.sizes.len()
    }

    /// Observation index of every word, addressed by packed index.
    pub(crate) fn cell_table(&self) -> &[u32] {
        &self.cell_of
    }

    /// Packed indices of the members of `O_psi`.
    pub fn members(&self, psi: &BitWord) -> Vec<u64> {
        let p = psi.index() as u32;
        (0..self.cell_of.len() as u64)
            .filter(|&x| self.cell_of[x as usize] == p)
            .collect()
    }
}

pub fn observation_partition(circuit: &Circuit) -> Result<ObservationPartition> {
    let n = circuit.n_inputs();
    if n > PARTITION_MAX_INPUTS {
        return capacity(format!(
            "observation_partition: n = {n} exceeds PARTITION_MAX_INPUTS = {PARTITION_MAX_INPUTS}"
        ));
    }
    let width = circuit.output_width();
    if width > 32 {
        return capacity(format!("observation width {width} exceeds 32"));
    }
    let total = 1usize << n;
    let mut cell_of = vec![0u32; total];
    cell_of.par_chunks_mut(64).enumerate().for_each(|(chunk, out)| {
        let base = (chunk as u64) * 64;
        let lanes: Vec<u64> = (0..n).map(|j| input_lane(j, base)).collect();
        let res = circuit.eval_lanes(&lanes);
        for (lane, slot) in out.iter_mut().enumerate() {
            let mut psi = 0u32;
            for (k, v) in res.iter().enumerate() {
                psi |= (((v >> lane) & 1) as u32) << k;
            }
            *slot = psi;
        }
    });
    let mut sizes = BTreeMap::new();
    for &p in &cell_of {
        *sizes.entry(p).or_insert(0u64) += 1;
    }
    Ok(ObservationPartition {
        n,
        width,
        cell_of,
        sizes,
    })
}

/// Counting guard: `n <= 3`, at most two gates.
pub const COUNT_MAX_INPUTS: usize = 3;
pub const COUNT_MAX_GATES: usize = 2;

/// Number of distinct single-output functions of `n` inputs realized by
/// circuits with at most `gate_budget` gates (operands: inputs, constants,
/// earlier gates; output: any node or constant).
pub fn count_circuit_functions(n: usize, gate_budget: usize) -> Result<usize> {
    if n > COUNT_MAX_INPUTS || gate_budget > COUNT_MAX_GATES {
        return capacity(format!(
            "count_circuit_functions guard: n <= {COUNT_MAX_INPUTS}, gate_budget <= {COUNT_MAX_GATES}"
        ));
    }
    let lanes = 1usize << n;
    let mask = if lanes == 64 { u64::MAX } else { (1u64 << lanes) - 1 };
    let inputs: Vec<u64> = (0..n).map(|j| input_lane(j, 0) & mask).collect();
    let mut seen = BTreeSet::new();
    // Values available as operands, extended gate by gate.
    let mut base = inputs.clone();
    base.push(0);
    base.push(mask);
    fn rec(avail: &mut Vec<u64>, remaining: usize, mask: u64, seen: &mut BTreeSet<u64>) {
        for &v in avail.iter() {
            seen.insert(v & mask);
        }
        if remaining == 0 {
            return;
        }
        let k = avail.len();
        for tt in 0..16u8 {
            let g = Gate {
                name: String::new(),
                tt,
                left: Operand::Const(false),
                right: Operand::Const(false),
            };
            for a in 0..k {
                for b in 0..k {
                    let v = g.apply(avail[a], avail[b]) & mask;
                    avail.push(v);
                    rec(avail, remaining - 1, mask, seen);
                    avail.pop();
                }
            }
        }
    }
    rec(&mut base, gate_budget, mask, &mut seen);
    Ok(seen.len())
}

/// `(16 (n + g + 1)^2)^g`: the counting bound for circuits with `g` gate slots.
pub fn gate_count_bound(n: usize, gate_slots: usize) -> BigUint {
    let base = BigUint::from(16u32) * BigUint::from((n + gate_slots + 1) * (n + gate_slots + 1));
    Pow::pow(base, gate_slots as u32)
}

#[derive(Debug, Clone)]
pub struct CountBoundReport {
    pub n: usize,
    pub c: u64,
    pub s: u32,
    pub gate_slots: usize,
    /// `(16 (n + c n^s + 1)^2)^{c n^s}`.
    pub single_output_bound: BigUint,
    /// `log2` of `2^{n^{s+2}}`, the asymptotic bound on the whole class.
    pub class_bound_log2: BigUint,
}

pub fn bound_report(n: usize, c: u64, s: u32) -> CountBoundReport {
    let gate_slots = (c as usize) * n.pow(s);
    CountBoundReport {
        n,
        c,
        s,
        gate_slots,
        single_output_bound: gate_count_bound(n, gate_slots),
        class_bound_log2: Pow::pow(BigUint::from(n), s + 2),
    }
}

/// Realized count for `gate_budget` gates against the bound with one extra
/// slot for selecting the output node.
pub fn count_within_bound(n: usize, gate_budget: usize) -> Result<(usize, BigUint, bool)> {
    let count = count_circuit_functions(n, gate_budget)?;
    let bound = gate_count_bound(n, gate_budget + 1);
    let ok = BigUint::from(count) <= bound && bound >= BigUint::one();
    Ok((count, bound, ok))
}
