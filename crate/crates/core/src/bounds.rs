// SPDX-License-Identifier: Apache-2.0

//! Closed-form rate bounds and the slack-parameter solver.

use serde::Serialize;

use crate::error::{usage, Result};

const BISECT_TOL: f64 = 1e-12;

/// Base-2 binary entropy with `H(0) = H(1) = 0`.
pub fn binary_entropy(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return usage(format!("binary_entropy: p = {p} outside [0, 1]"));
    }
    Ok(h2(p))
}

fn h2(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

/// Bisection for `f` decreasing on `[lo, hi]`: the point where `f = target`.
fn bisect_decreasing(f: impl Fn(f64) -> f64, target: f64, mut lo: f64, mut hi: f64) -> f64 {
    while hi - lo > BISECT_TOL {
        let mid = 0.5 * (lo + hi);
        if f(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// The `p in [0, 1/2]` with `H(p) = h`.
pub fn inv_entropy(h: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&h) {
        return usage(format!("inv_entropy: h = {h} outside [0, 1]"));
    }
    // H is increasing on [0, 1/2]; bisect on -H.
    Ok(bisect_decreasing(|p| -h2(p), -h, 0.0, 0.5))
}

/// First MRRW upper bound on rate at relative distance `delta`; zero for `delta >= 1/2`.
pub fn mrrw1(delta: f64) -> f64 {
    if delta >= 0.5 {
        return 0.0;
    }
    let d = delta.max(0.0);
    h2(0.5 - (d * (1.0 - d)).sqrt())
}

/// The relative distance at which [`mrrw1`] equals `rate`.
pub fn lp_inverse(rate: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&rate) {
        return usage(format!("lp_inverse: rate = {rate} outside [0, 1]"));
    }
    Ok(bisect_decreasing(mrrw1, rate, 0.0, 0.5))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Capacities {
    pub shannon: f64,
    pub gv: f64,
    pub langberg: Option<f64>,
    /// [`mrrw1`] at relative distance `2p`, the distance needed to correct `pn` flips.
    pub mrrw1: f64,
    pub stochastic: Option<f64>,
}

pub fn capacities(p: f64, r: f64, q: Option<f64>) -> Result<Capacities> {
    if !(p > 0.0 && p < 0.5) {
        return usage(format!("capacities: p = {p} outside (0, 1/2)"));
    }
    if !(0.0..=1.0).contains(&r) {
        return usage(format!("capacities: r = {r} outside [0, 1]"));
    }
    if let Some(q) = q {
        if !(0.0..=0.5).contains(&q) {
            return usage(format!("capacities: q = {q} outside [0, 1/2]"));
        }
    }
    let shannon = 1.0 - h2(p);
    let gv = if 2.0 * p >= 0.5 { 0.0 } else { (1.0 - h2(2.0 * p)).max(0.0) };
    let langberg = (r < shannon / 3.0).then_some(shannon - r);
    let stochastic = q.map(|q| 1.0 - h2(q * (1.0 - p) + p * (1.0 - q)));
    Ok(Capacities {
        shannon,
        gv,
        langberg,
        mrrw1: mrrw1(2.0 * p),
        stochastic,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeasibleParams {
    pub delta0: f64,
    pub delta1: f64,
    pub eps_rho: f64,
    pub eps_r: f64,
    pub rho: f64,
    pub rate: f64,
}

impl FeasibleParams {
    /// Condition on the total slack, the bound on `eps_R`, and `r < R < rho < C`.
    pub fn check(&self, p: f64, r: f64) -> bool {
        let cap = 1.0 - h2(p);
        let cond1 = r < cap - self.delta0 - self.delta1 - self.eps_rho - self.eps_r;
        let cond2 = self.eps_r > 0.0 && self.eps_r < (5.0 / 13.0 - 1.0 / 30.0) * self.delta0;
        let positive = [self.delta0, self.delta1, self.eps_rho, self.eps_r].iter().all(|&x| x > 0.0);
        cond1 && cond2 && positive && r < self.rate && self.rate < self.rho && self.rho < cap
    }
}

/// Equal-split slack witness; `None` when `r >= 1 - H(p)`.
pub fn find_params(p: f64, r: f64) -> Result<Option<FeasibleParams>> {
    if !(p > 0.0 && p < 0.5) {
        return usage(format!("find_params: p = {p} outside (0, 1/2)"));
    }
    if !(0.0..=1.0).contains(&r) {
        return usage(format!("find_params: r = {r} outside [0, 1]"));
    }
    let cap = 1.0 - h2(p);
    let sigma = cap - r;
    if sigma <= 0.0 {
        return Ok(None);
    }
    let d = sigma / 5.0;
    let eps_r = d.min(0.9 * (5.0 / 13.0 - 1.0 / 30.0) * d);
    let rho = cap - d;
    let fp = FeasibleParams {
        delta0: d,
        delta1: d,
        eps_rho: d,
        eps_r,
        rho,
        rate: rho - eps_r,
    };
    assert!(fp.check(p, r), "slack witness violates its own conditions: {fp:?}");
    Ok(Some(fp))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `r < 1 - H(p)`: the capacity equals `1 - H(p)`.
    Theorem,
    /// `r >= 1 - H(p)`: only the GV lower bound is reported.
    Open,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Theorem => "theorem",
            Regime::Open => "open",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundCurvePoint {
    pub p: f64,
    pub shannon: f64,
    pub gv: f64,
    pub langberg: Option<f64>,
    pub mrrw1: f64,
    pub regime: Regime,
    /// `shannon` in the theorem regime, `gv` in the open regime.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FigureCurve {
    pub r: f64,
    pub p_star: f64,
    pub points: Vec<BoundCurvePoint>,
}

/// Curve on the interior grid `p_k = k / (2N)`, `k = 1..N-1`.
pub fn figure_curve(r: f64, grid: usize) -> Result<FigureCurve> {
    if !(r > 0.0 && r < 1.0) {
        return usage(format!("figure_curve: r = {r} outside (0, 1)"));
    }
    if grid < 2 {
        return usage("figure_curve: grid must be at least 2");
    }
    let p_star = inv_entropy(1.0 - r)?;
    let mut points = Vec::with_capacity(grid - 1);
    for k in 1..grid {
        let p = 0.5 * k as f64 / grid as f64;
        let cap = capacities(p, r, None)?;
        let regime = if r < cap.shannon { Regime::Theorem } else { Regime::Open };
        let value = match regime {
            Regime::Theorem => cap.shannon,
            Regime::Open => cap.gv,
        };
        points.push(BoundCurvePoint {
            p,
            shannon: cap.shannon,
            gv: cap.gv,
            langberg: cap.langberg,
            mrrw1: cap.mrrw1,
            regime,
            value,
        });
    }
    Ok(FigureCurve { r, p_star, points })
}
