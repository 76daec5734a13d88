//! Task orchestration: turns a validated config into a payload, a verdict
//! and CSV tables.

use std::sync::Arc;

use randhyp_core::cocycle::tangent_orbit;
use randhyp_core::ergodic::{enumerate_periodic_orbits, lambda_estimate, LambdaOptions, LambdaReport};
use randhyp_core::expansion::{
    certify_expansion, variable_rate_corollary, CertifyOptions, CorollaryVerdict,
    ExpansionCertificate, ExpansionVerdict, RateSource,
};
use randhyp_core::lyapunov::{exponent_positivity_report, mean_log_det, PositivityReport};
use randhyp_core::splitting::{
    hyperbolicity_certificate, SplittingCertificate, SplittingOptions, SplittingVerdict,
};
use randhyp_core::{seeding, BaseKind, BaseState, BaseSystem, FiberFamily, Result, UnitTangentPoint};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, Task, TaskParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Certified,
    Complete,
    Inconclusive,
    Violated,
    Error,
}

impl Verdict {
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Certified | Verdict::Complete => 0,
            Verdict::Inconclusive | Verdict::Violated => 2,
            Verdict::Error => 1,
        }
    }
}

/// A CSV side file.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &str, headers: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push<I: IntoIterator<Item = String>>(&mut self, row: I) {
        self.rows.push(row.into_iter().collect());
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub verdict: Verdict,
    pub payload: Value,
    pub tables: Vec<Table>,
}

fn num(v: f64) -> String {
    v.to_string()
}

struct Setup {
    family: FiberFamily,
    system: Arc<BaseSystem>,
    seed: u64,
    p: TaskParams,
}

fn expect<T: Copy>(v: Option<T>) -> T {
    v.expect("parse_config fills task defaults")
}

/// Runs the configured task. Uses the ambient rayon pool.
pub fn run_task(config: &ExperimentConfig) -> Result<Outcome> {
    let s = Setup {
        family: FiberFamily::new(&config.fiber)?,
        system: BaseSystem::new(&config.base)?,
        seed: config.seed,
        p: config.task_params.clone(),
    };
    match config.task {
        Task::CertifyExpansion => {
            let cert = run_expansion(&s)?;
            let verdict = expansion_verdict(cert.verdict);
            let tables = expansion_tables(&cert, "");
            Ok(Outcome {
                verdict,
                payload: json!({ "expansion": cert }),
                tables,
            })
        }
        Task::Lyapunov => {
            let (report, sum_rule) = run_lyapunov(&s)?;
            let tables = vec![lyapunov_table(&report, "")];
            Ok(Outcome {
                verdict: Verdict::Complete,
                payload: json!({ "lyapunov": report, "sum_rule_max_error": sum_rule }),
                tables,
            })
        }
        Task::Minimize => {
            let (report, orbits) = run_minimize(&s)?;
            let mut tables = vec![birkhoff_table(&report, "")];
            if let Some(t) = orbits {
                tables.push(t);
            }
            Ok(Outcome {
                verdict: Verdict::Complete,
                payload: json!({ "minimize": report }),
                tables,
            })
        }
        Task::Splitting => {
            let cert = run_splitting(&s)?;
            let verdict = splitting_verdict(cert.verdict);
            let tables = splitting_tables(&cert, "");
            Ok(Outcome {
                verdict,
                payload: json!({ "splitting": cert }),
                tables,
            })
        }
        Task::Corollary => {
            let rates = match &s.p.per_step_rates {
                Some(r) => RateSource::PerSymbol(r.clone()),
                None => RateSource::MinOneStep,
            };
            let report = variable_rate_corollary(
                &s.family,
                &s.system,
                s.seed,
                expect(s.p.samples),
                &rates,
                expect(s.p.n_max),
                expect(s.p.grid_size),
            )?;
            let verdict = match report.verdict {
                CorollaryVerdict::Positive => Verdict::Certified,
                CorollaryVerdict::Inconclusive => Verdict::Inconclusive,
            };
            Ok(Outcome {
                verdict,
                payload: json!({ "corollary": report, "rate_source": rates }),
                tables: Vec::new(),
            })
        }
        Task::Trajectory => {
            let table = run_trajectory(&s)?;
            Ok(Outcome {
                verdict: Verdict::Complete,
                payload: json!({ "steps": table.rows.len() }),
                tables: vec![table],
            })
        }
        Task::FullPipeline => run_full(&s),
    }
}

fn expansion_verdict(v: ExpansionVerdict) -> Verdict {
    match v {
        ExpansionVerdict::CertifiedExpanding => Verdict::Certified,
        ExpansionVerdict::Inconclusive => Verdict::Inconclusive,
        ExpansionVerdict::Violated => Verdict::Violated,
    }
}

fn splitting_verdict(v: SplittingVerdict) -> Verdict {
    match v {
        SplittingVerdict::CertifiedHyperbolic => Verdict::Certified,
        SplittingVerdict::Inconclusive => Verdict::Inconclusive,
        SplittingVerdict::Violated => Verdict::Violated,
    }
}

fn run_expansion(s: &Setup) -> Result<ExpansionCertificate> {
    let opts = CertifyOptions {
        samples: expect(s.p.samples),
        n_max: expect(s.p.n_max),
        grid_size: expect(s.p.grid_size),
        rate: s.p.lambda,
        depth: expect(s.p.depth),
        supadditivity_n: expect(s.p.supadditivity_n),
        curve_n_max: expect(s.p.curve_n_max),
        temperedness_threshold: expect(s.p.temperedness_threshold),
    };
    certify_expansion(&s.family, &s.system, s.seed, &opts)
}

fn run_lyapunov(s: &Setup) -> Result<(PositivityReport, f64)> {
    let n = expect(s.p.n);
    let report = exponent_positivity_report(&s.family, &s.system, s.seed, expect(s.p.samples), n)?;
    let states = randhyp_core::base::sample_states(&s.system, s.seed, report.per_sample.len())?;
    let mut worst = 0.0f64;
    for (sample, w) in report.per_sample.iter().zip(&states) {
        let x = randhyp_core::ManifoldPoint::new(&sample.x)?;
        let det = mean_log_det(&s.family, w, &x, n)?;
        worst = worst.max((sample.exponents.iter().sum::<f64>() - det).abs());
    }
    Ok((report, worst))
}

fn run_minimize(s: &Setup) -> Result<(LambdaReport, Option<Table>)> {
    let shift = matches!(s.system.kind(), BaseKind::Bernoulli | BaseKind::Dirac);
    let opts = LambdaOptions {
        samples: expect(s.p.samples),
        n_max: expect(s.p.n_max),
        grid_size: expect(s.p.grid_size),
        birkhoff_samples: expect(s.p.birkhoff_samples),
        birkhoff_n: expect(s.p.birkhoff_n),
        p_max: if shift { s.p.p_max } else { None },
    };
    let report = lambda_estimate(&s.family, &s.system, s.seed, &opts)?;
    let orbits = match opts.p_max {
        Some(p) => {
            let records = enumerate_periodic_orbits(&s.family, &s.system, p)?;
            let mut t = Table::new(
                "periodic_orbits",
                &["word", "period", "x0", "v0", "phi_average", "residual"],
            );
            for r in records {
                let join = |v: &[f64]| v.iter().map(|c| num(*c)).collect::<Vec<_>>().join(" ");
                t.push([
                    r.symbol_word.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(""),
                    r.period.to_string(),
                    join(&r.x0),
                    join(&r.v0),
                    num(r.phi_average),
                    num(r.residual),
                ]);
            }
            Some(t)
        }
        None => None,
    };
    Ok((report, orbits))
}

fn run_splitting(s: &Setup) -> Result<SplittingCertificate> {
    let opts = SplittingOptions {
        samples: expect(s.p.samples),
        horizon: expect(s.p.horizon),
        n: expect(s.p.n),
        rate: s.p.lambda,
        depth: expect(s.p.depth),
        curve_n_max: expect(s.p.curve_n_max),
        angle_orbit_len: expect(s.p.angle_orbit_len),
        temperedness_threshold: expect(s.p.temperedness_threshold),
    };
    hyperbolicity_certificate(&s.family, &s.system, s.seed, &opts)
}

fn run_trajectory(s: &Setup) -> Result<Table> {
    let dim = s.family.manifold_dim();
    let omega = BaseState::new(&s.system, seeding::child_seed(s.seed, seeding::stream::BASE_SAMPLE, 0));
    let start = UnitTangentPoint::new(
        omega,
        seeding::fiber_point(s.seed, 0, dim),
        seeding::unit_vector(s.seed, 0, dim),
    )?;
    let mut headers = vec!["k", "symbol", "x"];
    if dim == 2 {
        headers.push("y");
    }
    headers.push("phi");
    let mut t = Table::new("trajectory", &headers);
    for step in tangent_orbit(&s.family, &start, expect(s.p.n))? {
        let mut row = vec![step.k.to_string(), step.symbol.to_string()];
        row.extend(step.point.x.coords().iter().map(|c| num(*c)));
        row.push(num(step.phi));
        t.push(row);
    }
    Ok(t)
}

fn run_full(s: &Setup) -> Result<Outcome> {
    let (lyap, sum_rule) = run_lyapunov(s)?;
    let expansion = run_expansion(s)?;
    let (minimize, orbits) = run_minimize(s)?;
    let splitting = if s.family.is_linear() && s.family.invertible() {
        Some(run_splitting(&Setup {
            family: s.family.clone(),
            system: s.system.clone(),
            seed: s.seed,
            p: TaskParams {
                curve_n_max: Some(1000.min(expect(s.p.curve_n_max))),
                ..s.p.clone()
            },
        })?)
    } else {
        None
    };
    let e = expansion_verdict(expansion.verdict);
    let h = splitting.as_ref().map(|c| splitting_verdict(c.verdict));
    let verdict = if e == Verdict::Certified || h == Some(Verdict::Certified) {
        Verdict::Certified
    } else if e == Verdict::Violated && h.is_none_or(|v| v == Verdict::Violated) {
        Verdict::Violated
    } else {
        Verdict::Inconclusive
    };
    let mut tables = expansion_tables(&expansion, "expansion_");
    tables.push(lyapunov_table(&lyap, "lyapunov_"));
    tables.push(birkhoff_table(&minimize, "minimize_"));
    if let Some(mut t) = orbits {
        t.name = format!("minimize_{}", t.name);
        tables.push(t);
    }
    if let Some(c) = &splitting {
        tables.extend(splitting_tables(c, "splitting_"));
    }
    Ok(Outcome {
        verdict,
        payload: json!({
            "lyapunov": lyap,
            "sum_rule_max_error": sum_rule,
            "expansion": expansion,
            "minimize": minimize,
            "splitting": splitting,
        }),
        tables,
    })
}

fn expansion_tables(cert: &ExpansionCertificate, prefix: &str) -> Vec<Table> {
    let mut curve = Table::new(&format!("{prefix}temperedness_curve"), &["n", "value"]);
    for p in &cert.temperedness_curve {
        curve.push([p.n.to_string(), num(p.value)]);
    }
    let mut cs = Table::new(&format!("{prefix}c_samples"), &["index", "c", "log_c", "attained_at"]);
    for c in &cert.c_samples {
        cs.push([c.index.to_string(), num(c.c), num(c.log_c), c.attained_at.to_string()]);
    }
    let mut trend = Table::new(&format!("{prefix}rate_trend"), &["n", "mean_upper", "mean_lower"]);
    for p in &cert.rate.trend {
        trend.push([p.n.to_string(), num(p.mean_upper), num(p.mean_lower)]);
    }
    vec![curve, cs, trend]
}

fn lyapunov_table(report: &PositivityReport, prefix: &str) -> Table {
    let dim = report.per_sample.first().map_or(1, |s| s.x.len());
    let mut headers = vec!["index", "x"];
    if dim == 2 {
        headers.push("y");
    }
    let exps = report.per_sample.first().map_or(1, |s| s.exponents.len());
    let names: Vec<String> = (1..=exps).map(|i| format!("exponent{i}")).collect();
    headers.extend(names.iter().map(String::as_str));
    let mut t = Table::new(&format!("{prefix}exponents"), &headers);
    for s in &report.per_sample {
        let mut row = vec![s.index.to_string()];
        row.extend(s.x.iter().map(|c| num(*c)));
        row.extend(s.exponents.iter().map(|c| num(*c)));
        t.push(row);
    }
    t
}

fn birkhoff_table(report: &LambdaReport, prefix: &str) -> Table {
    let mut t = Table::new(&format!("{prefix}birkhoff_averages"), &["index", "average"]);
    for (i, v) in report.birkhoff.per_sample.iter().enumerate() {
        t.push([i.to_string(), num(*v)]);
    }
    t
}

fn splitting_tables(cert: &SplittingCertificate, prefix: &str) -> Vec<Table> {
    let mut samples = Table::new(
        &format!("{prefix}samples"),
        &["omega", "angle", "rate1", "rate2", "residual", "horizon_gap", "c1", "c2"],
    );
    for s in &cert.samples {
        samples.push([
            s.index.to_string(),
            num(s.angle),
            num(s.rate1),
            num(s.rate2),
            num(s.residual),
            num(s.horizon_gap),
            num(s.c1),
            num(s.c2),
        ]);
    }
    let mut curves = Table::new(&format!("{prefix}c_curves"), &["n", "c1", "c2"]);
    for (a, b) in cert.c1_curve.iter().zip(&cert.c2_curve) {
        curves.push([a.n.to_string(), num(a.value), num(b.value)]);
    }
    vec![samples, curves]
}
