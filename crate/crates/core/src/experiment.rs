// SPDX-License-Identifier: Apache-2.0

//! Error-probability experiments: exact enumeration at tiny `n`, Monte Carlo
//! trials at moderate `n`, sweeps, and CSV/JSON persistence.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adversary::{parse_strategy, AdversaryStrategy, Observation};
use crate::analysis::check_exact_guard;
use crate::bitword::{enumerate_ball, BitWord};
use crate::circuit::{
    build_projection, constant_circuit, identity_circuit, observation_partition, parse_circuit, validate_budget, Circuit,
};
use crate::code::{decode_fails, parse_codebook, CodeMode, ConcatenatedCode, SystemParams, DECODE_MAX_INDEX_BITS};
use crate::error::{capacity, usage, Error, Result};

/// 97.5% standard normal quantile.
pub const Z95: f64 = 1.959963984540054;

/// RNG stream used to construct the strategy; trials use streams `1..`.
const STRATEGY_STREAM: u64 = u64::MAX;

/// The system parameters as written in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub n: usize,
    pub p: f64,
    pub r: f64,
    pub rate: f64,
    pub rho: f64,
    #[serde(default = "default_c")]
    pub c: u64,
    #[serde(default = "default_s")]
    pub s: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slack: Option<f64>,
}

fn default_c() -> u64 {
    1
}

fn default_s() -> u32 {
    2
}

impl ParamsConfig {
    pub fn resolve(&self) -> Result<SystemParams> {
        let sp = SystemParams::new(self.n, self.p, self.r, self.rate, self.rho)?.with_budget(self.c, self.s)?;
        match self.slack {
            Some(x) => sp.with_slack(x, x, x, x),
            None => Ok(sp),
        }
    }
}

/// How the exact computation resolves the error choice for each observation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorRule {
    /// `max_e` over the whole error ball.
    #[default]
    WorstCase,
    /// Average over errors of weight exactly `floor(pn)`, which is what the
    /// oblivious random chooser achieves.
    UniformExactWeight,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub params: ParamsConfig,
    #[serde(default = "default_mode")]
    pub mode: CodeMode,
    pub strategy: String,
    pub seed: u64,
    #[serde(default)]
    pub trials: u64,
    #[serde(default)]
    pub exact: bool,
    /// Fixed observation circuit for every trial, overriding the strategy's choice.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub circuit_file: Option<String>,
    /// Fixed code instead of one sampled from `seed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub codebook_file: Option<String>,
    /// Circuit family for exact runs: `strategy`, `identity`, `constant`,
    /// `projection:<i,j,...>` or `file:<path>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<Vec<String>>,
    #[serde(default)]
    pub error_rule: ErrorRule,
}

fn default_mode() -> CodeMode {
    CodeMode::Concat
}

/// A config file holds one experiment or a list of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConfigFile {
    Sweep { sweep: Vec<ExperimentConfig> },
    Single(ExperimentConfig),
}

impl ConfigFile {
    pub fn into_grid(self) -> Vec<ExperimentConfig> {
        match self {
            ConfigFile::Sweep { sweep } => sweep,
            ConfigFile::Single(c) => vec![c],
        }
    }
}

pub fn parse_config(text: &str) -> Result<ConfigFile> {
    serde_json::from_str(text).map_err(|e| Error::Usage(format!("invalid config: {e}")))
}

impl ExperimentConfig {
    pub fn check(&self) -> Result<SystemParams> {
        let params = self.params.resolve()?;
        if self.exact {
            check_exact_guard(params.n, params.pn)?;
        } else if self.trials == 0 {
            return usage("Monte Carlo run needs trials > 0");
        }
        Ok(params)
    }

    /// SHA-256 of the config's JSON serialization, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    MonteCarlo,
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub method: Method,
    pub p_hat: f64,
    /// Exact value as `numer/denom`, exact runs only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci_low: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci_high: Option<f64>,
    /// Monte Carlo: trials. Exact: `(f, m, e)` triples evaluated.
    pub trials: u64,
    /// Monte Carlo: failed trials. Exact: failing triples.
    pub errors: u64,
    pub wall_ms: u64,
    pub strategy: String,
    /// Circuits the maximum ranged over, exact runs only.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub family: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_rule: Option<ErrorRule>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub params: SystemParams,
    pub config: ExperimentConfig,
}

/// Wilson score interval at 95%.
pub fn wilson_interval(errors: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let nf = trials as f64;
    let ph = errors as f64 / nf;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / nf;
    let centre = (ph + z2 / (2.0 * nf)) / denom;
    let half = Z95 * (ph * (1.0 - ph) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    ((centre - half).max(0.0).min(ph), (centre + half).min(1.0).max(ph))
}

/// The per-trial RNG: stream `trial + 1` of the run seed.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial + 1);
    rng
}

fn read(path: &str) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{path}: {e}")))
}

/// The code a config refers to: loaded from its codebook file or sampled from its seed.
pub fn build_code(config: &ExperimentConfig, params: &SystemParams) -> Result<ConcatenatedCode> {
    let code = match &config.codebook_file {
        Some(path) => {
            let file = parse_codebook(&read(path)?)?;
            let code = file.into_code(params.pn, params.obs_width)?;
            if code.n() != params.n || code.params.rate_n != params.rate_n {
                return usage(format!(
                    "codebook {path} has n = {}, R_n = {}; config has n = {}, R_n = {}",
                    code.n(),
                    code.params.rate_n,
                    params.n,
                    params.rate_n
                ));
            }
            code
        }
        None => ConcatenatedCode::from_seed(params, config.mode, config.seed)?,
    };
    if code.index_bits() > DECODE_MAX_INDEX_BITS {
        return capacity(format!(
            "decoder: {} index bits exceed DECODE_MAX_INDEX_BITS = {DECODE_MAX_INDEX_BITS}",
            code.index_bits()
        ));
    }
    Ok(code)
}

fn strategy_for(config: &ExperimentConfig, params: &SystemParams) -> Result<Box<dyn AdversaryStrategy>> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(STRATEGY_STREAM);
    parse_strategy(&config.strategy, params, &mut rng)
}

fn check_circuit(circuit: &Circuit, params: &SystemParams) -> Result<()> {
    if circuit.n_inputs() != params.n {
        return usage(format!("circuit has {} inputs, n = {}", circuit.n_inputs(), params.n));
    }
    let rep = validate_budget(circuit, params.r, params.c, params.s);
    if !rep.ok {
        return Err(Error::Assertion(format!(
            "circuit outside the class: size {} vs budget {}, width {} vs {}",
            rep.size, rep.budget, rep.output_width, rep.required_width
        )));
    }
    Ok(())
}

/// Monte Carlo estimate of the decoding-error probability.
pub fn run_monte_carlo(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let start = Instant::now();
    let params = config.check()?;
    let code = build_code(config, &params)?;
    let strategy = strategy_for(config, &params)?;
    let fixed = match &config.circuit_file {
        Some(path) => {
            let c = parse_circuit(&read(path)?)?;
            check_circuit(&c, &params)?;
            Some(c)
        }
        None => None,
    };
    let m_count = code.messages();
    let pn = params.pn;
    let outcomes: Vec<Result<bool>> = (0..config.trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(config.seed, t);
            let m0 = rng.gen_range(0..m_count);
            let drawn;
            let circuit = match &fixed {
                Some(c) => c,
                None => {
                    drawn = strategy.choose_circuit(&code, &mut rng)?;
                    check_circuit(&drawn, &params)?;
                    &drawn
                }
            };
            let x = code.encode(m0)?;
            let psi = circuit.evaluate(&x)?;
            let obs = Observation {
                psi: &psi,
                x: Some(&x),
            };
            let e = strategy.choose_error(&code, circuit, &obs, &mut rng)?;
            if e.len() != params.n || e.weight() > pn {
                return Err(Error::Assertion(format!(
                    "trial {t}: strategy {} returned an error of weight {} over budget {pn}",
                    strategy.name(),
                    e.weight()
                )));
            }
            let y = x.xor(&e)?;
            Ok(decode_fails(&code, y.blocks(), m0, pn))
        })
        .collect();
    let mut errors = 0u64;
    for o in outcomes {
        errors += o? as u64;
    }
    let (lo, hi) = wilson_interval(errors, config.trials);
    Ok(ExperimentResult {
        method: Method::MonteCarlo,
        p_hat: errors as f64 / config.trials as f64,
        exact: None,
        ci_low: Some(lo),
        ci_high: Some(hi),
        trials: config.trials,
        errors,
        wall_ms: start.elapsed().as_millis() as u64,
        strategy: strategy.name(),
        family: Vec::new(),
        error_rule: None,
        note: Some("randomized error choosers report their achieved average".into()),
        params,
        config: config.clone(),
    })
}

/// Exact error probability of a code over a finite circuit family.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactPe {
    pub value: Ratio<u64>,
    pub per_circuit: Vec<Ratio<u64>>,
    /// Index of the maximizing circuit, first on ties.
    pub argmax: usize,
    pub evaluated: u64,
    pub failures: u64,
}

/// `max_f sum_psi P(Psi = psi) * [max_e | avg_e] P(fail | psi, e)` over the uniform message law.
///
/// `P(Psi = psi) P(fail | psi, e)` is the number of failing messages in the
/// cell over `M`, so every term stays an integer count until the end.
pub fn exact_pe(code: &ConcatenatedCode, circuits: &[Circuit], rule: ErrorRule) -> Result<ExactPe> {
    let n = code.n();
    let pn = code.params.pn;
    check_exact_guard(n, pn)?;
    if circuits.is_empty() {
        return usage("empty circuit family");
    }
    let errors: Vec<BitWord> = match rule {
        ErrorRule::WorstCase => enumerate_ball(&BitWord::zeros(n), pn)?.collect(),
        ErrorRule::UniformExactWeight => enumerate_ball(&BitWord::zeros(n), pn)?
            .filter(|e| e.weight() == pn)
            .collect(),
    };
    let m_count = code.messages();
    let xs: Vec<BitWord> = (0..m_count).map(|m| code.encode(m)).collect::<Result<_>>()?;
    let mut per_circuit = Vec::with_capacity(circuits.len());
    let mut evaluated = 0u64;
    let mut failures = 0u64;
    for f in circuits {
        if f.n_inputs() != n {
            return usage("circuit input count differs from n");
        }
        let part = observation_partition(f)?;
        let cells: Vec<u32> = xs.iter().map(|x| part.psi_index_of(x.index())).collect();
        let mut distinct = cells.clone();
        distinct.sort_unstable();
        distinct.dedup();
        let slot: Vec<usize> = cells.iter().map(|c| distinct.binary_search(c).unwrap()).collect();
        let per_error: Vec<Vec<u64>> = errors
            .par_iter()
            .map(|e| {
                let mut acc = vec![0u64; distinct.len()];
                for (m, x) in xs.iter().enumerate() {
                    let y = x.xor_unchecked(e);
                    if decode_fails(code, y.blocks(), m, pn) {
                        acc[slot[m]] += 1;
                    }
                }
                acc
            })
            .collect();
        let total: u64 = per_error.iter().flatten().sum();
        evaluated += (errors.len() * m_count) as u64;
        failures += total;
        let value = match rule {
            ErrorRule::WorstCase => {
                let mut best = vec![0u64; distinct.len()];
                for acc in &per_error {
                    for (b, &v) in best.iter_mut().zip(acc) {
                        *b = (*b).max(v);
                    }
                }
                Ratio::new(best.iter().sum(), m_count as u64)
            }
            ErrorRule::UniformExactWeight => Ratio::new(total, (m_count * errors.len()) as u64),
        };
        per_circuit.push(value);
    }
    let mut argmax = 0;
    for (k, v) in per_circuit.iter().enumerate() {
        if *v > per_circuit[argmax] {
            argmax = k;
        }
    }
    Ok(ExactPe {
        value: per_circuit[argmax],
        per_circuit,
        argmax,
        evaluated,
        failures,
    })
}

/// Resolves one family entry to a circuit.
pub fn family_circuit(name: &str, code: &ConcatenatedCode, strategy: &dyn AdversaryStrategy, seed: u64) -> Result<Circuit> {
    let n = code.n();
    match name.split_once(':') {
        None if name == "strategy" => {
            let mut rng = trial_rng(seed, 0);
            strategy.choose_circuit(code, &mut rng)
        }
        None if name == "identity" => Ok(identity_circuit(n)),
        None if name == "constant" => Ok(constant_circuit(n, code.params.obs_width)),
        Some(("projection", list)) => {
            let idx = list
                .split(',')
                .filter(|t| !t.trim().is_empty())
                .map(|t| t.trim().parse::<usize>().map_err(|_| Error::Usage(format!("bad projection index {t:?}"))))
                .collect::<Result<Vec<_>>>()?;
            build_projection(n, &idx)
        }
        Some(("file", path)) => parse_circuit(&read(path)?),
        _ => usage(format!("unknown circuit family entry {name:?}")),
    }
}

/// Exact error probability for a config, per its circuit family and error rule.
pub fn run_exact_pe(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let start = Instant::now();
    let params = config.check()?;
    if !config.exact {
        return usage("run_exact_pe needs \"exact\": true");
    }
    let code = build_code(config, &params)?;
    let strategy = strategy_for(config, &params)?;
    let names: Vec<String> = match (&config.family, &config.circuit_file) {
        (Some(f), _) => f.clone(),
        (None, Some(path)) => vec![format!("file:{path}")],
        (None, None) => vec!["strategy".to_string()],
    };
    let circuits = names
        .iter()
        .map(|nm| family_circuit(nm, &code, strategy.as_ref(), config.seed))
        .collect::<Result<Vec<_>>>()?;
    let res = exact_pe(&code, &circuits, config.error_rule)?;
    let note = match config.error_rule {
        ErrorRule::WorstCase => "max over the listed circuits and over every error in the ball",
        ErrorRule::UniformExactWeight => "max over the listed circuits; errors averaged over exact weight floor(pn)",
    };
    Ok(ExperimentResult {
        method: Method::Exact,
        p_hat: *res.value.numer() as f64 / *res.value.denom() as f64,
        exact: Some(format!("{}/{}", res.value.numer(), res.value.denom())),
        ci_low: None,
        ci_high: None,
        trials: res.evaluated,
        errors: res.failures,
        wall_ms: start.elapsed().as_millis() as u64,
        strategy: strategy.name(),
        family: names,
        error_rule: Some(config.error_rule),
        note: Some(note.into()),
        params,
        config: config.clone(),
    })
}

pub fn run(config: &ExperimentConfig) -> Result<ExperimentResult> {
    if config.exact {
        run_exact_pe(config)
    } else {
        run_monte_carlo(config)
    }
}

/// Runs every grid point; failures are kept per row. Row order is grid order.
pub fn sweep(grid: &[ExperimentConfig]) -> Vec<std::result::Result<ExperimentResult, String>> {
    grid.par_iter().map(|c| run(c).map_err(|e| e.to_string())).collect()
}

/// Copies of `base` at each blocklength.
pub fn grid_over_n(base: &ExperimentConfig, ns: &[usize]) -> Vec<ExperimentConfig> {
    ns.iter()
        .map(|&n| {
            let mut c = base.clone();
            c.params.n = n;
            c
        })
        .collect()
}

pub const CSV_COLUMNS: &str = "n,R,rho,p,r,mode,strategy,seed,trials,errors,p_hat,ci_low,ci_high,exact,wall_ms,error";

/// `# ` header lines: tool version, seed and config hash.
pub fn header(seed: u64, config_hash: &str) -> String {
    format!(
        "# cktchan {}\n# seed {seed}\n# config_sha256 {config_hash}\n",
        env!("CARGO_PKG_VERSION")
    )
}

/// Hash of a whole grid: SHA-256 over the concatenated per-config hashes.
pub fn grid_hash(grid: &[ExperimentConfig]) -> String {
    if grid.len() == 1 {
        return grid[0].hash();
    }
    let mut h = Sha256::new();
    for c in grid {
        h.update(c.hash().as_bytes());
    }
    hex::encode(h.finalize())
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One CSV row; `timing = false` writes `wall_ms` as 0 so reruns are byte-identical.
pub fn csv_row(cfg: &ExperimentConfig, res: &std::result::Result<ExperimentResult, String>, timing: bool) -> String {
    let p = &cfg.params;
    let lead = format!(
        "{},{},{},{},{},{},{},{}",
        p.n,
        p.rate,
        p.rho,
        p.p,
        p.r,
        cfg.mode.as_str(),
        csv_field(&cfg.strategy),
        cfg.seed
    );
    match res {
        Ok(r) => format!(
            "{lead},{},{},{},{},{},{},{},",
            r.trials,
            r.errors,
            r.p_hat,
            opt(r.ci_low),
            opt(r.ci_high),
            r.exact.clone().unwrap_or_default(),
            if timing { r.wall_ms } else { 0 }
        ),
        Err(e) => format!("{lead},{},,,,,,,{}", cfg.trials, csv_field(e)),
    }
}

/// The full CSV document for a grid run.
pub fn results_csv(grid: &[ExperimentConfig], rows: &[std::result::Result<ExperimentResult, String>], timing: bool) -> String {
    let seed = grid.first().map_or(0, |c| c.seed);
    let mut out = header(seed, &grid_hash(grid));
    out.push_str(CSV_COLUMNS);
    out.push('\n');
    for (c, r) in grid.iter().zip(rows) {
        let _ = writeln!(out, "{}", csv_row(c, r, timing));
    }
    out
}

/// JSON document; JSON has no comments, so the header is a leading `header` object.
pub fn result_json(res: &ExperimentResult, timing: bool) -> String {
    let mut r = res.clone();
    if !timing {
        r.wall_ms = 0;
    }
    let doc = serde_json::json!({
        "header": {
            "tool": format!("cktchan {}", env!("CARGO_PKG_VERSION")),
            "seed": r.config.seed,
            "config_sha256": r.config.hash(),
        },
        "result": r,
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("result serializes");
    s.push('\n');
    s
}

/// Writes `text` to `path`, creating parent directories.
pub fn write_output(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}
