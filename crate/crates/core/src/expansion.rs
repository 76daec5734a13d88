//! Minimal expansion Aₙ(ω) = min over SM of log|D_xφ_ω⁽ⁿ⁾ v| and what is
//! built on it: supadditivity residuals, the uniform rate A, the constant
//! C(ω) = inf_{n≥1} e^{-λn} exp Aₙ(ω), its temperedness, and the variable-rate
//! reduction.
//!
//! For circle families with x-dependent derivative the minimum over x is
//! bracketed on a grid. The upper bound is the grid minimum. For the lower
//! bound, on a cell [x_j, x_{j+1}] the function f = log|Dφ⁽ⁿ⁾| varies by at
//! most `M = Σ_{i<n} Lip(log|φ'_{θⁱω}|)·δᵢ`, where δᵢ is the length of the
//! i-th lifted image of the cell, so f ≥ (f(x_j) + f(x_{j+1}) − M)/2 on the
//! cell. Because δᵢ grows with the local rather than the worst-case
//! expansion this stays sharp for moderate n; for long windows the bound is
//! additionally chained over blocks of [`CHAIN_BLOCK`] steps using
//! A_{k+m}(ω) ≥ A_k(ω) + A_m(θᵏω).
//!
//! Families whose derivative does not depend on x (the linear ones, and
//! circle maps with ε(ω) = 0) are evaluated exactly; for linear torus maps
//! the minimum over unit v is the smallest singular value of the product.

use std::sync::Arc;

use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::base::{sample_states, BaseState, BaseSystem};
use crate::cocycle::local_maps;
use crate::error::{Error, Result};
use crate::fiber::{FiberFamily, LocalMap};
use crate::linalg;
use crate::manifold::{wrap_unit, ManifoldPoint};
use crate::stats::{self, MeanEstimate};

pub const MIN_GRID: usize = 64;
pub const DEFAULT_GRID: usize = 8192;
/// Truncation depth of the infimum defining C(ω).
pub const DEFAULT_DEPTH: usize = 50;
pub const MAX_SUPADDITIVITY_N: usize = 20;
pub const DEFAULT_TEMPEREDNESS_THRESHOLD: f64 = 0.02;
/// Block length for chained lower bounds on long windows.
pub const CHAIN_BLOCK: usize = 10;
/// Residuals below this are evidence against the certified bounds.
pub const SUPADDITIVITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExpansionMethod {
    /// Derivative independent of x along the window: lower = upper.
    Exact,
    /// Grid minimum with Lipschitz margin.
    GridCertified,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpansionRow {
    pub n: usize,
    pub lower: f64,
    pub upper: f64,
}

/// Certified bounds on A₁(ω), …, A_N(ω).
#[derive(Debug, Clone, PartialEq)]
pub struct MinExpansionTable {
    pub omega: BaseState,
    pub rows: Vec<ExpansionRow>,
    /// Grid points used (1 for exact evaluation).
    pub grid_size: usize,
    /// Largest `upper - lower` over the rows.
    pub slack: f64,
    pub method: ExpansionMethod,
    /// Minimizing (x, v) for each n, ties broken by smallest x.
    pub argmin: Vec<(ManifoldPoint, Vector2<f64>)>,
}

impl MinExpansionTable {
    /// Row for Aₙ, 1-based.
    pub fn row(&self, n: usize) -> ExpansionRow {
        self.rows[n - 1]
    }

    pub fn depth(&self) -> usize {
        self.rows.len()
    }
}

/// Bounds on A₁(ω) … A_{n_max}(ω) in one pass along the orbit.
pub fn min_expansion_table(
    family: &FiberFamily,
    omega: &BaseState,
    n_max: usize,
    grid_size: usize,
) -> Result<MinExpansionTable> {
    if n_max == 0 {
        return Err(Error::Contract("Aₙ needs n ≥ 1".into()));
    }
    let maps = local_maps(family, omega, n_max)?;
    if maps.iter().all(LocalMap::x_independent) {
        return Ok(exact_table(omega, &maps));
    }
    if grid_size < MIN_GRID {
        return Err(Error::Contract(format!(
            "certified grid minimization needs grid_size ≥ {MIN_GRID}, got {grid_size}"
        )));
    }
    let mut table = grid_table(omega, &maps, grid_size);
    chain_lower_bounds(family, &mut table, grid_size)?;
    Ok(table)
}

/// (lower, upper) bounds on Aₙ(ω).
pub fn min_log_expansion(
    family: &FiberFamily,
    omega: &BaseState,
    n: usize,
    grid_size: usize,
) -> Result<(f64, f64)> {
    let row = min_expansion_table(family, omega, n, grid_size)?.row(n);
    Ok((row.lower, row.upper))
}

fn exact_table(omega: &BaseState, maps: &[LocalMap]) -> MinExpansionTable {
    let mut rows = Vec::with_capacity(maps.len());
    let mut argmin = Vec::with_capacity(maps.len());
    match maps[0] {
        LocalMap::Circle { .. } => {
            let mut sum = 0.0;
            for (i, m) in maps.iter().enumerate() {
                sum += m.circle_derivative(0.0).abs().ln();
                rows.push(ExpansionRow {
                    n: i + 1,
                    lower: sum,
                    upper: sum,
                });
                argmin.push((ManifoldPoint::circle(0.0), Vector2::new(1.0, 0.0)));
            }
        }
        LocalMap::Linear(_) => {
            // log σ_min(P) = log|det P| - log σ_max(P) on a rescaled product.
            let mut acc = Matrix2::<f64>::identity();
            let (mut log_scale, mut log_det) = (0.0, 0.0);
            for (i, m) in maps.iter().enumerate() {
                let d = match m {
                    LocalMap::Linear(d) => d,
                    LocalMap::Circle { .. } => unreachable!("families have one dimension"),
                };
                log_det += d.determinant().abs().ln();
                acc = d * acc;
                let s = acc.amax();
                acc /= s;
                log_scale += s.ln();
                let (hi, _) = linalg::singular_values(&acc);
                let value = log_det - (log_scale + hi.ln());
                rows.push(ExpansionRow {
                    n: i + 1,
                    lower: value,
                    upper: value,
                });
                let top = linalg::top_right_singular_vector(&acc);
                argmin.push((ManifoldPoint::origin(2), Vector2::new(-top[1], top[0])));
            }
        }
    }
    MinExpansionTable {
        omega: omega.clone(),
        rows,
        grid_size: 1,
        slack: 0.0,
        method: ExpansionMethod::Exact,
        argmin,
    }
}

fn grid_table(omega: &BaseState, maps: &[LocalMap], grid_size: usize) -> MinExpansionTable {
    let n_max = maps.len();
    let h = 1.0 / grid_size as f64;
    let lips: Vec<f64> = maps.iter().map(LocalMap::log_deriv_lipschitz).collect();

    // Per point: f⁽ᵏ⁾(x_j) for k = 1..=n and the distortion budget M⁽ᵏ⁾ of
    // the cell starting at x_j.
    let trace = |j: usize, f: &mut [f64], budget: &mut [f64]| {
        let mut x = j as f64 * h;
        let mut width = h;
        let (mut sum, mut m) = (0.0, 0.0);
        for (k, map) in maps.iter().enumerate() {
            sum += map.circle_derivative(x).abs().ln();
            m += lips[k] * width;
            f[k] = sum;
            budget[k] = m;
            width = image_width(map, x, width);
            x = wrap_unit(map.lift(x));
        }
    };

    let mut upper = vec![f64::INFINITY; n_max];
    let mut lower = vec![f64::INFINITY; n_max];
    let mut best_j = vec![0usize; n_max];
    let (mut f0, mut m0) = (vec![0.0; n_max], vec![0.0; n_max]);
    trace(0, &mut f0, &mut m0);
    let (mut f_prev, mut m_prev) = (f0.clone(), m0);
    let (mut f_next, mut m_next) = (vec![0.0; n_max], vec![0.0; n_max]);
    for j in 0..grid_size {
        if j + 1 < grid_size {
            trace(j + 1, &mut f_next, &mut m_next);
        } else {
            f_next.copy_from_slice(&f0);
        }
        for k in 0..n_max {
            if f_prev[k] < upper[k] {
                upper[k] = f_prev[k];
                best_j[k] = j;
            }
            let cell = 0.5 * (f_prev[k] + f_next[k] - m_prev[k]);
            lower[k] = lower[k].min(cell);
        }
        std::mem::swap(&mut f_prev, &mut f_next);
        std::mem::swap(&mut m_prev, &mut m_next);
    }

    let mut rows: Vec<ExpansionRow> = (0..n_max)
        .map(|k| ExpansionRow {
            n: k + 1,
            lower: lower[k].min(upper[k]),
            upper: upper[k],
        })
        .collect();
    let slack = rows.iter().map(|r| r.upper - r.lower).fold(0.0, f64::max);
    let argmin = best_j
        .iter()
        .map(|j| (ManifoldPoint::circle(*j as f64 * h), Vector2::new(1.0, 0.0)))
        .collect();
    rows.shrink_to_fit();
    MinExpansionTable {
        omega: omega.clone(),
        rows,
        grid_size,
        slack,
        method: ExpansionMethod::GridCertified,
        argmin,
    }
}

/// Upper bound on the length of the lifted image of [x, x + width].
fn image_width(map: &LocalMap, x: f64, width: f64) -> f64 {
    match *map {
        LocalMap::Circle { slope, eps } => {
            if width < 1.0 {
                (map.lift(x + width) - map.lift(x)).abs() * (1.0 + 1e-12)
            } else {
                slope.abs() * width + 2.0 * eps.abs()
            }
        }
        LocalMap::Linear(_) => unreachable!("grid tables are for circle maps"),
    }
}

/// Raises lower bounds for n > [`CHAIN_BLOCK`] by summing certified block
/// minima along the orbit.
fn chain_lower_bounds(
    family: &FiberFamily,
    table: &mut MinExpansionTable,
    grid_size: usize,
) -> Result<()> {
    let n_max = table.rows.len();
    if n_max <= CHAIN_BLOCK {
        return Ok(());
    }
    let mut prefix = table.row(CHAIN_BLOCK).lower;
    let mut start = CHAIN_BLOCK;
    while start < n_max {
        let len = CHAIN_BLOCK.min(n_max - start);
        let block = min_expansion_table(family, &table.omega.advance(start as i64), len, grid_size)?;
        for r in 1..=len {
            let row = &mut table.rows[start + r - 1];
            row.lower = row.lower.max(prefix + block.row(r).lower).min(row.upper);
        }
        prefix += block.row(len).lower;
        start += len;
    }
    table.slack = table
        .rows
        .iter()
        .map(|r| r.upper - r.lower)
        .fold(0.0, f64::max);
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupadditivityEntry {
    pub n: usize,
    pub m: usize,
    /// upper(A_{n+m}(ω)) − lower(Aₙ(ω)) − lower(A_m(θⁿω)).
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupadditivityReport {
    pub min_residual: f64,
    pub argmin: (usize, usize),
    /// Largest certification slack among the tables involved.
    pub slack: f64,
    pub table: Vec<SupadditivityEntry>,
}

/// Residuals of A_{n+m}(ω) ≥ Aₙ(ω) + A_m(θⁿω) for all n, m ≥ 1 with n + m ≤ N.
pub fn supadditivity_residuals(
    family: &FiberFamily,
    omega: &BaseState,
    n_total: usize,
    grid_size: usize,
) -> Result<SupadditivityReport> {
    if !(2..=MAX_SUPADDITIVITY_N).contains(&n_total) {
        return Err(Error::Contract(format!(
            "supadditivity checks use 2 ≤ N ≤ {MAX_SUPADDITIVITY_N}, got {n_total}"
        )));
    }
    let tables: Vec<MinExpansionTable> = (0..n_total)
        .map(|j| min_expansion_table(family, &omega.advance(j as i64), n_total - j, grid_size))
        .collect::<Result<_>>()?;
    let mut table = Vec::new();
    let mut min_residual = f64::INFINITY;
    let mut argmin = (0, 0);
    for n in 1..n_total {
        for m in 1..=(n_total - n) {
            let residual =
                tables[0].row(n + m).upper - tables[0].row(n).lower - tables[n].row(m).lower;
            if residual < min_residual {
                min_residual = residual;
                argmin = (n, m);
            }
            table.push(SupadditivityEntry { n, m, residual });
        }
    }
    Ok(SupadditivityReport {
        min_residual,
        argmin,
        slack: tables.iter().map(|t| t.slack).fold(0.0, f64::max),
        table,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendPoint {
    pub n: usize,
    /// Sample mean of upper(Aₙ)/n.
    pub mean_upper: f64,
    /// Sample mean of lower(Aₙ)/n.
    pub mean_lower: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    /// Mean over sampled ω of upper(A_{n_max}(ω))/n_max.
    pub a_estimate: f64,
    /// Same with certified lower bounds.
    pub a_lower: f64,
    pub std_err: f64,
    pub n_max: usize,
    pub samples: usize,
    pub method: ExpansionMethod,
    pub trend: Vec<TrendPoint>,
    /// upper(A_{n_max}(ω))/n_max per sample, in sample order.
    pub per_sample: Vec<f64>,
}

/// Estimate of A = lim Aₙ/n from `samples` draws of ω.
pub fn uniform_rate_estimate(
    family: &FiberFamily,
    system: &Arc<BaseSystem>,
    seed: u64,
    samples: usize,
    n_max: usize,
    grid_size: usize,
) -> Result<RateEstimate> {
    let states = sample_states(system, seed, samples)?;
    rate_estimate_for(family, &states, n_max, grid_size)
}

/// [`uniform_rate_estimate`] over a caller-supplied ω sample.
pub fn rate_estimate_for(
    family: &FiberFamily,
    states: &[BaseState],
    n_max: usize,
    grid_size: usize,
) -> Result<RateEstimate> {
    if n_max < 4 {
        return Err(Error::Contract(format!("rate estimates need n_max ≥ 4, got {n_max}")));
    }
    let tables: Vec<MinExpansionTable> = states
        .par_iter()
        .map(|w| min_expansion_table(family, w, n_max, grid_size))
        .collect::<Result<_>>()?;
    let count = tables.len() as f64;
    let trend = (1..=n_max)
        .map(|n| {
            let (mut up, mut lo) = (0.0, 0.0);
            for t in &tables {
                up += t.row(n).upper / n as f64;
                lo += t.row(n).lower / n as f64;
            }
            TrendPoint {
                n,
                mean_upper: up / count,
                mean_lower: lo / count,
            }
        })
        .collect::<Vec<_>>();
    let per_sample: Vec<f64> = tables
        .iter()
        .map(|t| t.row(n_max).upper / n_max as f64)
        .collect();
    let last = trend[n_max - 1];
    let method = if tables.iter().all(|t| t.method == ExpansionMethod::Exact) {
        ExpansionMethod::Exact
    } else {
        ExpansionMethod::GridCertified
    };
    Ok(RateEstimate {
        a_estimate: last.mean_upper,
        a_lower: last.mean_lower,
        std_err: stats::mean_std_err(&per_sample).std_err,
        n_max,
        samples: tables.len(),
        method,
        trend,
        per_sample,
    })
}

/// The rate λ must satisfy Λ > λ > 0; `a_estimate` stands in for Λ.
pub fn check_rate(rate: f64, a_estimate: f64) -> Result<()> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::config(
            "task_params.lambda",
            format!("λ = {rate} violates Λ > λ > 0: λ must be positive"),
        ));
    }
    if rate >= a_estimate {
        return Err(Error::config(
            "task_params.lambda",
            format!("λ = {rate} violates Λ > λ > 0: the expansion rate estimate is {a_estimate}"),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperedConstant {
    /// C(ω), the infimum truncated at `depth`.
    pub value: f64,
    pub log_value: f64,
    /// n at which the truncated infimum is attained.
    pub attained_at: usize,
    pub depth: usize,
    pub truncated: bool,
}

/// C(ω) from a table: min over 1 ≤ n ≤ depth of e^{-λn}·exp(lower Aₙ(ω)).
pub fn tempered_constant_from_table(table: &MinExpansionTable, rate: f64) -> TemperedConstant {
    let mut log_value = f64::INFINITY;
    let mut attained_at = 0;
    for row in &table.rows {
        let v = row.lower - rate * row.n as f64;
        if v < log_value {
            log_value = v;
            attained_at = row.n;
        }
    }
    TemperedConstant {
        value: log_value.exp(),
        log_value,
        attained_at,
        depth: table.depth(),
        truncated: true,
    }
}

/// C(ω) = inf_{1≤n≤depth} e^{-λn} min_{SM}|D_xφ_ω⁽ⁿ⁾ v|, using certified lower
/// bounds for the minima. Nonincreasing in `depth`.
pub fn tempered_constant(
    family: &FiberFamily,
    omega: &BaseState,
    rate: f64,
    depth: usize,
    grid_size: usize,
) -> Result<TemperedConstant> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::config(
            "task_params.lambda",
            format!("λ = {rate} violates Λ > λ > 0: λ must be positive"),
        ));
    }
    let table = min_expansion_table(family, omega, depth, grid_size)?;
    Ok(tempered_constant_from_table(&table, rate))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub n: usize,
    pub value: f64,
}

/// 1, 2, 4, … below `n_max`, then `n_max`.
pub fn doubling_schedule(n_max: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut n = 1;
    while n < n_max {
        out.push(n);
        n *= 2;
    }
    out.push(n_max.max(1));
    out
}

/// Sample-averaged (1/n)·log C(θⁿω) at n on [`doubling_schedule`].
#[allow(clippy::too_many_arguments)]
pub fn temperedness_curve(
    family: &FiberFamily,
    system: &Arc<BaseSystem>,
    seed: u64,
    rate: f64,
    n_max: usize,
    depth: usize,
    samples: usize,
    grid_size: usize,
) -> Result<Vec<CurvePoint>> {
    let states = sample_states(system, seed, samples)?;
    temperedness_curve_for(family, &states, rate, n_max, depth, grid_size)
}

pub fn temperedness_curve_for(
    family: &FiberFamily,
    states: &[BaseState],
    rate: f64,
    n_max: usize,
    depth: usize,
    grid_size: usize,
) -> Result<Vec<CurvePoint>> {
    let schedule = doubling_schedule(n_max);
    let per_state: Vec<Vec<f64>> = states
        .par_iter()
        .map(|w| {
            schedule
                .iter()
                .map(|&n| {
                    tempered_constant(family, &w.advance(n as i64), rate, depth, grid_size)
                        .map(|c| c.log_value / n as f64)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    Ok(schedule
        .iter()
        .enumerate()
        .map(|(i, &n)| CurvePoint {
            n,
            value: per_state.iter().map(|v| v[i]).sum::<f64>() / per_state.len() as f64,
        })
        .collect())
}

/// The two comparisons from the temperedness argument, evaluated on the
/// truncated constants (all values natural logs).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecursionCheck {
    pub log_c: f64,
    pub log_c_next: f64,
    pub attained_at: usize,
    /// log D₁(ω) (certified lower bound).
    pub log_d1: f64,
    /// log |Dφ_{θω}|.
    pub log_sup_next: f64,
    /// log max{|Dφ_{θω}|, e^λ} − log D₁(ω) − (log C(θω) − log C(ω)); ≥ 0 when
    /// C(θω)/C(ω) ≤ max{|Dφ_{θω}|, e^λ}/D₁(ω).
    pub ratio_margin: f64,
    /// log C(ω) − (log C(θω) − λ + log D₁(ω)) when the infimum for C(ω) is
    /// attained at n ≥ 2; ≥ 0 when C(ω) ≥ C(θω)e^{-λ}D₁(ω).
    pub step_margin: Option<f64>,
}

pub fn recursion_check(
    family: &FiberFamily,
    omega: &BaseState,
    rate: f64,
    depth: usize,
    grid_size: usize,
) -> Result<RecursionCheck> {
    let here = min_expansion_table(family, omega, depth, grid_size)?;
    let next_omega = omega.base_step();
    let next = min_expansion_table(family, &next_omega, depth, grid_size)?;
    let c = tempered_constant_from_table(&here, rate);
    let c_next = tempered_constant_from_table(&next, rate);
    let log_d1 = here.row(1).lower;
    let log_sup_next = family.local(&next_omega)?.sup_norm().ln();
    let ratio_margin =
        log_sup_next.max(rate) - log_d1 - (c_next.log_value - c.log_value);
    let step_margin =
        (c.attained_at >= 2).then_some(c.log_value - (c_next.log_value - rate + log_d1));
    Ok(RecursionCheck {
        log_c: c.log_value,
        log_c_next: c_next.log_value,
        attained_at: c.attained_at,
        log_d1,
        log_sup_next,
        ratio_margin,
        step_margin,
    })
}

/// Where the per-step rates λ(ω) of the variable-rate hypothesis come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateSource {
    /// λ(ω) = rates[symbol_at(ω, 0)] (a single entry applies to every symbol).
    PerSymbol(Vec<f64>),
    /// λ(ω) = min over (x, v) of |D_xφ_ω v|.
    MinOneStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorollaryVerdict {
    Positive,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorollaryReport {
    /// Monte Carlo estimate of ∫ log λ dℙ.
    pub mean_log_rate: MeanEstimate,
    pub verdict: CorollaryVerdict,
    /// Uniform-rate estimate A, when the hypothesis holds.
    pub a_estimate: Option<f64>,
    /// Constant-rate candidate ½·A.
    pub constant_rate: Option<f64>,
}

/// Checks ∫ log λ dℙ > 0 (beyond three standard errors) and, when it holds,
/// reduces to the constant-rate pipeline.
pub fn variable_rate_corollary(
    family: &FiberFamily,
    system: &Arc<BaseSystem>,
    seed: u64,
    samples: usize,
    rates: &RateSource,
    n_max: usize,
    grid_size: usize,
) -> Result<CorollaryReport> {
    if let RateSource::PerSymbol(r) = rates {
        if r.is_empty() || r.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
            return Err(Error::config(
                "task_params.per_step_rates",
                "rates must be a nonempty list of positive reals",
            ));
        }
        if r.len() != 1 && r.len() != system.alphabet_size() {
            return Err(Error::config(
                "task_params.per_step_rates",
                format!(
                    "has {} entries but the base alphabet has {} symbols",
                    r.len(),
                    system.alphabet_size()
                ),
            ));
        }
    }
    let states = sample_states(system, seed, samples)?;
    let logs: Vec<f64> = states
        .iter()
        .map(|w| -> Result<f64> {
            let rate = match rates {
                RateSource::PerSymbol(r) if r.len() == 1 => r[0],
                RateSource::PerSymbol(r) => r[w.symbol_at(0)?],
                RateSource::MinOneStep => family.local(w)?.min_expansion(),
            };
            Ok(rate.ln())
        })
        .collect::<Result<_>>()?;
    let mean_log_rate = stats::mean_std_err(&logs);
    let positive = mean_log_rate.mean > 0.0 && mean_log_rate.mean > 3.0 * mean_log_rate.std_err;
    if !positive {
        return Ok(CorollaryReport {
            mean_log_rate,
            verdict: CorollaryVerdict::Inconclusive,
            a_estimate: None,
            constant_rate: None,
        });
    }
    let a = rate_estimate_for(family, &states, n_max, grid_size)?.a_estimate;
    Ok(CorollaryReport {
        mean_log_rate,
        verdict: CorollaryVerdict::Positive,
        a_estimate: Some(a),
        constant_rate: (a > 0.0).then_some(0.5 * a),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExpansionVerdict {
    CertifiedExpanding,
    Inconclusive,
    Violated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifyOptions {
    pub samples: usize,
    /// n at which A is estimated.
    pub n_max: usize,
    pub grid_size: usize,
    /// λ; defaults to ½·A_estimate.
    pub rate: Option<f64>,
    pub depth: usize,
    pub supadditivity_n: usize,
    pub curve_n_max: usize,
    pub temperedness_threshold: f64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            samples: 20,
            n_max: 16,
            grid_size: DEFAULT_GRID,
            rate: None,
            depth: DEFAULT_DEPTH,
            supadditivity_n: 12,
            curve_n_max: 10_000,
            temperedness_threshold: DEFAULT_TEMPEREDNESS_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CSample {
    pub index: usize,
    pub c: f64,
    pub log_c: f64,
    pub attained_at: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionCertificate {
    pub a_estimate: f64,
    pub a_lower: f64,
    /// λ with 0 < λ < A_estimate; absent when no positive rate exists.
    pub lambda: Option<f64>,
    pub method: ExpansionMethod,
    pub grid_size: usize,
    pub depth: usize,
    pub truncated: bool,
    pub c_samples: Vec<CSample>,
    pub temperedness_curve: Vec<CurvePoint>,
    pub temperedness_threshold: f64,
    pub supadditivity_min_residual: f64,
    pub supadditivity_slack: f64,
    pub rate: RateEstimate,
    pub verdict: ExpansionVerdict,
}

/// Aggregate evidence that F is random uniformly expanding.
pub fn certify_expansion(
    family: &FiberFamily,
    system: &Arc<BaseSystem>,
    seed: u64,
    opts: &CertifyOptions,
) -> Result<ExpansionCertificate> {
    let states = sample_states(system, seed, opts.samples)?;
    let rate_est = rate_estimate_for(family, &states, opts.n_max, opts.grid_size)?;
    let a = rate_est.a_estimate;

    let supadditivity: Vec<SupadditivityReport> = states
        .par_iter()
        .map(|w| supadditivity_residuals(family, w, opts.supadditivity_n, opts.grid_size))
        .collect::<Result<_>>()?;
    let supadditivity_min_residual = supadditivity
        .iter()
        .map(|r| r.min_residual)
        .fold(f64::INFINITY, f64::min);
    let supadditivity_slack = supadditivity.iter().map(|r| r.slack).fold(0.0, f64::max);

    let rate = match opts.rate {
        Some(r) => {
            check_rate(r, a)?;
            Some(r)
        }
        None => (a > 0.0).then_some(0.5 * a),
    };

    let (c_samples, curve) = match rate {
        Some(r) => {
            let c_samples = states
                .par_iter()
                .enumerate()
                .map(|(index, w)| {
                    tempered_constant(family, w, r, opts.depth, opts.grid_size).map(|c| CSample {
                        index,
                        c: c.value,
                        log_c: c.log_value,
                        attained_at: c.attained_at,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let curve = temperedness_curve_for(
                family,
                &states,
                r,
                opts.curve_n_max,
                opts.depth,
                opts.grid_size,
            )?;
            (c_samples, curve)
        }
        None => (Vec::new(), Vec::new()),
    };

    let verdict = if a <= 0.0 || supadditivity_min_residual < -SUPADDITIVITY_TOLERANCE {
        ExpansionVerdict::Violated
    } else {
        let c_ok = !c_samples.is_empty() && c_samples.iter().all(|c| c.c > 0.0 && c.c.is_finite());
        let tempered = curve
            .last()
            .is_some_and(|p| p.value.abs() < opts.temperedness_threshold);
        if c_ok && tempered {
            ExpansionVerdict::CertifiedExpanding
        } else {
            ExpansionVerdict::Inconclusive
        }
    };

    Ok(ExpansionCertificate {
        a_estimate: a,
        a_lower: rate_est.a_lower,
        lambda: rate,
        method: rate_est.method,
        grid_size: opts.grid_size,
        depth: opts.depth,
        truncated: true,
        c_samples,
        temperedness_curve: curve,
        temperedness_threshold: opts.temperedness_threshold,
        supadditivity_min_residual,
        supadditivity_slack,
        rate: rate_est,
        verdict,
    })
}
