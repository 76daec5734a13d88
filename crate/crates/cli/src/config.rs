//! Experiment configuration: a JSON document naming the base system, the
//! fiber family, the seed, the task and its parameters.
//!
//! Parsing reports every problem it finds, each with a dotted field path.
//! Parameters a task does not set are filled with the defaults below, and
//! the filled-in config is what reports echo back.

use std::fmt;
use std::str::FromStr;

use randhyp_core::expansion::{DEFAULT_DEPTH, DEFAULT_GRID, DEFAULT_TEMPEREDNESS_THRESHOLD, MIN_GRID};
use randhyp_core::{BaseSystem, BaseSystemSpec, Error, FiberFamily, FiberFamilySpec};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    CertifyExpansion,
    Lyapunov,
    Minimize,
    Splitting,
    Corollary,
    FullPipeline,
    Trajectory,
}

impl Task {
    pub const ALL: [Task; 7] = [
        Task::CertifyExpansion,
        Task::Lyapunov,
        Task::Minimize,
        Task::Splitting,
        Task::Corollary,
        Task::FullPipeline,
        Task::Trajectory,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::CertifyExpansion => "certify-expansion",
            Task::Lyapunov => "lyapunov",
            Task::Minimize => "minimize",
            Task::Splitting => "splitting",
            Task::Corollary => "corollary",
            Task::FullPipeline => "full-pipeline",
            Task::Trajectory => "trajectory",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| format!("unknown task `{s}`"))
    }
}

/// Task parameters. Every field is optional on the wire; [`parse_config`]
/// fills the ones the task uses.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskParams {
    /// Sampled ω.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    /// Orbit length for exponents, bundle rates and trajectories.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Window for Aₙ and the empirical measures μₙ.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_size: Option<usize>,
    /// The rate λ; defaults to half of the estimated rate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// A declared bound for the expansion rate; λ must stay below it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_bound: Option<f64>,
    /// Truncation depth for C(ω).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batches: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub supadditivity_n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub curve_n_max: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temperedness_threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub birkhoff_samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub birkhoff_n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_max: Option<usize>,
    /// Per-symbol rates λ(ω) for the corollary task.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_step_rates: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub angle_orbit_len: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub base: BaseSystemSpec,
    pub fiber: FiberFamilySpec,
    pub seed: u64,
    pub task: Task,
    pub task_params: TaskParams,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
}

/// All validation failures of one document.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{}", render(.0))]
pub struct ConfigErrors(pub Vec<Error>);

fn render(errors: &[Error]) -> String {
    let lines: Vec<String> = errors.iter().map(|e| e.to_string()).collect();
    lines.join("\n")
}

impl ConfigErrors {
    pub fn fields(&self) -> Vec<String> {
        self.0
            .iter()
            .filter_map(|e| match e {
                Error::Config { field, .. } => Some(field.clone()),
                _ => None,
            })
            .collect()
    }
}

fn decode<T: serde::de::DeserializeOwned>(value: &Value, field: &str, errors: &mut Vec<Error>) -> Option<T> {
    match serde_json::from_value(value.clone()) {
        Ok(v) => Some(v),
        Err(e) => {
            errors.push(Error::config(field, e.to_string()));
            None
        }
    }
}

/// Parses and validates a config. `task_override` (from the command line)
/// takes the place of a missing `task` field and must agree with a present one.
pub fn parse_config(text: &str, task_override: Option<Task>) -> Result<ExperimentConfig, ConfigErrors> {
    let doc: Value = serde_json::from_str(text)
        .map_err(|e| ConfigErrors(vec![Error::config("$", format!("malformed JSON: {e}"))]))?;
    let Some(obj) = doc.as_object() else {
        return Err(ConfigErrors(vec![Error::config("$", "expected a JSON object")]));
    };
    let mut errors = Vec::new();
    for key in obj.keys() {
        if !["base", "fiber", "seed", "task", "task_params", "out_dir"].contains(&key.as_str()) {
            errors.push(Error::config(key.clone(), "unknown field"));
        }
    }

    let base: Option<BaseSystemSpec> = match obj.get("base") {
        Some(v) => decode(v, "base", &mut errors),
        None => {
            errors.push(Error::config("base", "missing field"));
            None
        }
    };
    let fiber: Option<FiberFamilySpec> = match obj.get("fiber") {
        Some(v) => decode(v, "fiber", &mut errors),
        None => {
            errors.push(Error::config("fiber", "missing field"));
            None
        }
    };
    let seed = match obj.get("seed") {
        Some(v) => match v.as_u64() {
            Some(s) => Some(s),
            None => {
                errors.push(Error::config("seed", "must be a nonnegative integer"));
                None
            }
        },
        None => {
            errors.push(Error::config("seed", "missing field; runs must be seeded"));
            None
        }
    };
    let task = match (obj.get("task"), task_override) {
        (Some(v), over) => match v.as_str().map(Task::from_str) {
            Some(Ok(t)) => match over {
                Some(o) if o != t => {
                    errors.push(Error::config(
                        "task",
                        format!("config names `{t}` but `{o}` was requested"),
                    ));
                    None
                }
                _ => Some(t),
            },
            Some(Err(e)) => {
                errors.push(Error::config("task", e));
                None
            }
            None => {
                errors.push(Error::config("task", "must be a string"));
                None
            }
        },
        (None, Some(o)) => Some(o),
        (None, None) => {
            errors.push(Error::config("task", "missing field"));
            None
        }
    };
    let params: Option<TaskParams> = match obj.get("task_params") {
        Some(v) => decode(v, "task_params", &mut errors),
        None => Some(TaskParams::default()),
    };
    let out_dir = match obj.get("out_dir") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => {
            errors.push(Error::config("out_dir", "must be a string"));
            None
        }
    };

    let mut system = None;
    if let Some(b) = &base {
        let found = b.check("base");
        if found.is_empty() {
            match BaseSystem::new(b) {
                Ok(s) => system = Some(s),
                Err(e) => errors.push(e),
            }
        } else {
            errors.extend(found);
        }
    }
    let mut family = None;
    if let Some(f) = &fiber {
        let found = f.check("fiber");
        if found.is_empty() {
            match FiberFamily::new(f) {
                Ok(fam) => family = Some(fam),
                Err(e) => errors.push(e),
            }
        } else {
            errors.extend(found);
        }
    }
    if let (Some(f), Some(s)) = (&family, &system) {
        errors.extend(f.check_compatible(s, "fiber"));
    }

    let mut params = params.unwrap_or_default();
    if let Some(t) = task {
        fill_defaults(t, &mut params);
        errors.extend(check_params(&params));
        if let Some(f) = &family {
            errors.extend(check_task_fit(t, f));
        }
    }

    if !errors.is_empty() {
        return Err(ConfigErrors(errors));
    }
    Ok(ExperimentConfig {
        base: base.expect("checked"),
        fiber: fiber.expect("checked"),
        seed: seed.expect("checked"),
        task: task.expect("checked"),
        task_params: params,
        out_dir,
    })
}

fn fill_defaults(task: Task, p: &mut TaskParams) {
    fn set<T>(slot: &mut Option<T>, v: T) {
        if slot.is_none() {
            *slot = Some(v);
        }
    }
    let expansion = |p: &mut TaskParams| {
        set(&mut p.samples, 20);
        set(&mut p.n_max, 16);
        set(&mut p.grid_size, DEFAULT_GRID);
        set(&mut p.depth, DEFAULT_DEPTH);
        set(&mut p.supadditivity_n, 12);
        set(&mut p.curve_n_max, 10_000);
        set(&mut p.temperedness_threshold, DEFAULT_TEMPEREDNESS_THRESHOLD);
    };
    match task {
        Task::CertifyExpansion => expansion(p),
        Task::Lyapunov => {
            set(&mut p.samples, 100);
            set(&mut p.n, 10_000);
            set(&mut p.batches, 20);
        }
        Task::Minimize => {
            set(&mut p.samples, 20);
            set(&mut p.n_max, 16);
            set(&mut p.grid_size, DEFAULT_GRID);
            set(&mut p.birkhoff_samples, 20);
            set(&mut p.birkhoff_n, 10_000);
            set(&mut p.p_max, 8);
        }
        Task::Splitting => {
            set(&mut p.samples, 50);
            set(&mut p.horizon, 50);
            set(&mut p.n, 10_000);
            set(&mut p.depth, DEFAULT_DEPTH);
            set(&mut p.curve_n_max, 1000);
            set(&mut p.angle_orbit_len, 1000);
            set(&mut p.temperedness_threshold, DEFAULT_TEMPEREDNESS_THRESHOLD);
        }
        Task::Corollary => {
            set(&mut p.samples, 1000);
            set(&mut p.n_max, 16);
            set(&mut p.grid_size, DEFAULT_GRID);
        }
        Task::FullPipeline => {
            expansion(p);
            set(&mut p.n, 2000);
            set(&mut p.batches, 20);
            set(&mut p.birkhoff_samples, 20);
            set(&mut p.birkhoff_n, 2000);
            set(&mut p.p_max, 6);
            set(&mut p.horizon, 50);
            set(&mut p.angle_orbit_len, 100);
        }
        Task::Trajectory => {
            set(&mut p.n, 1000);
        }
    }
}

fn check_params(p: &TaskParams) -> Vec<Error> {
    let mut errors = Vec::new();
    let mut range = |field: &str, v: Option<usize>, lo: usize, hi: usize| {
        if let Some(v) = v {
            if !(lo..=hi).contains(&v) {
                errors.push(Error::config(
                    format!("task_params.{field}"),
                    format!("{v} is outside {lo}..={hi}"),
                ));
            }
        }
    };
    range("samples", p.samples, 1, 1_000_000);
    range("n", p.n, 1, 10_000_000);
    range("n_max", p.n_max, 4, 1_000_000);
    range("grid_size", p.grid_size, MIN_GRID, 1 << 22);
    range("depth", p.depth, 1, 10_000);
    range("horizon", p.horizon, 3, 100_000);
    range("batches", p.batches, 1, 10_000);
    range("supadditivity_n", p.supadditivity_n, 2, 20);
    range("curve_n_max", p.curve_n_max, 1, 1_000_000);
    range("birkhoff_samples", p.birkhoff_samples, 1, 1_000_000);
    range("birkhoff_n", p.birkhoff_n, 1, 10_000_000);
    range("p_max", p.p_max, 1, 12);
    range("angle_orbit_len", p.angle_orbit_len, 1, 1_000_000);
    if let (Some(n), Some(b)) = (p.n, p.batches) {
        if n < b {
            errors.push(Error::config("task_params.n", format!("n = {n} is below batches = {b}")));
        }
    }
    if let Some(t) = p.temperedness_threshold {
        if !(t > 0.0 && t.is_finite()) {
            errors.push(Error::config("task_params.temperedness_threshold", "must be positive"));
        }
    }
    if let Some(l) = p.lambda {
        if !(l > 0.0 && l.is_finite()) {
            errors.push(Error::config(
                "task_params.lambda",
                format!("λ = {l} violates Λ > λ > 0: λ must be positive"),
            ));
        } else if let Some(a) = p.a_bound {
            if l >= a {
                errors.push(Error::config(
                    "task_params.lambda",
                    format!("λ = {l} violates Λ > λ > 0: the declared bound is {a}"),
                ));
            }
        }
    }
    if let Some(r) = &p.per_step_rates {
        if r.is_empty() || r.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
            errors.push(Error::config(
                "task_params.per_step_rates",
                "rates must be a nonempty list of positive reals",
            ));
        }
    }
    errors
}

fn check_task_fit(task: Task, family: &FiberFamily) -> Vec<Error> {
    match task {
        Task::Splitting if !(family.is_linear() && family.invertible()) => vec![Error::config(
            "fiber.family",
            format!(
                "the splitting task needs an invertible linear family, `{}` is not",
                family.id().name()
            ),
        )],
        _ => Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOUBLING: &str = r#"{
        "base": {"kind": "dirac"},
        "fiber": {"family": "doubling"},
        "seed": 7,
        "task": "certify-expansion"
    }"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config(DOUBLING, None).unwrap();
        assert_eq!(c.task, Task::CertifyExpansion);
        assert_eq!(c.task_params.grid_size, Some(DEFAULT_GRID));
        assert_eq!(c.task_params.depth, Some(DEFAULT_DEPTH));
        assert_eq!(c.task_params.n, None);
    }

    #[test]
    fn echoed_config_parses_to_itself() {
        let c = parse_config(DOUBLING, None).unwrap();
        let echoed = serde_json::to_string(&c).unwrap();
        assert_eq!(parse_config(&echoed, None).unwrap(), c);
    }

    #[test]
    fn all_errors_are_reported() {
        let text = r#"{
            "base": {"kind": "bernoulli", "probabilities": [0.5, 0.4]},
            "fiber": {"family": "random-cat"},
            "task": "lyapunov",
            "task_params": {"grid_size": 8}
        }"#;
        let err = parse_config(text, None).unwrap_err();
        let fields = err.fields();
        assert!(fields.contains(&"base.probabilities".to_string()));
        assert!(fields.contains(&"seed".to_string()));
        assert!(fields.contains(&"task_params.grid_size".to_string()));
    }

    #[test]
    fn unknown_names_are_rejected() {
        let text = r#"{"base": {"kind": "levy"}, "fiber": {"family": "baker"}, "seed": 1, "task": "dance"}"#;
        let fields = parse_config(text, None).unwrap_err().fields();
        assert_eq!(fields, vec!["base", "fiber", "task"]);
    }

    #[test]
    fn lambda_above_declared_bound() {
        let text = r#"{
            "base": {"kind": "dirac"}, "fiber": {"family": "doubling"}, "seed": 1,
            "task": "certify-expansion", "task_params": {"lambda": 0.8, "a_bound": 0.69}
        }"#;
        let err = parse_config(text, None).unwrap_err();
        assert!(err.to_string().contains("Λ > λ > 0"));
    }

    #[test]
    fn task_override_must_agree() {
        assert!(parse_config(DOUBLING, Some(Task::Lyapunov)).is_err());
        let no_task = r#"{"base": {"kind": "dirac"}, "fiber": {"family": "doubling"}, "seed": 1}"#;
        assert_eq!(parse_config(no_task, Some(Task::Trajectory)).unwrap().task, Task::Trajectory);
    }

    #[test]
    fn splitting_needs_invertible_family() {
        let text = r#"{"base": {"kind": "dirac"}, "fiber": {"family": "doubling"}, "seed": 1, "task": "splitting"}"#;
        assert_eq!(parse_config(text, None).unwrap_err().fields(), vec!["fiber.family"]);
    }
}
