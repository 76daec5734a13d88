//! Ergodic base systems (Ω, ℙ, θ).
//!
//! Four concrete families: two-sided Bernoulli shifts, two-sided stationary
//! Markov shifts, circle rotations and the one-point (Dirac) base. Shift
//! sequences are realized lazily: each state owns a seed, and the symbol at
//! an absolute position is a pure function of `(seed, position)`. The forward
//! half-line is drawn from the chain itself, the backward half-line from the
//! time-reversed chain, so the two-sided sequence is stationary and θ⁻¹ needs
//! no stored history.

use std::fmt;
use std::sync::{Arc, RwLock};

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::wrap_unit;
use crate::seeding::{self, stream};

/// Largest |absolute position| a shift state will realize.
pub const WINDOW_LIMIT: i64 = 1 << 20;

pub const MAX_ALPHABET: usize = 256;

const STOCHASTIC_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaseKind {
    Bernoulli,
    Markov,
    Rotation,
    Dirac,
}

impl BaseKind {
    pub fn is_shift(self) -> bool {
        matches!(self, BaseKind::Bernoulli | BaseKind::Markov)
    }
}

/// Wire form of a base system.
///
/// `probabilities` is the symbol distribution for Bernoulli bases and the
/// (optional, checked) stationary vector for Markov bases. For rotations the
/// symbol at a position is `floor(alphabet_size * angle)`; irrationality of
/// `rotation_number` is not checked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseSystemSpec {
    pub kind: BaseKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alphabet_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probabilities: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transition: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation_number: Option<f64>,
}

impl BaseSystemSpec {
    pub fn dirac() -> Self {
        Self {
            kind: BaseKind::Dirac,
            alphabet_size: None,
            probabilities: None,
            transition: None,
            rotation_number: None,
        }
    }

    pub fn bernoulli(probabilities: Vec<f64>) -> Self {
        Self {
            kind: BaseKind::Bernoulli,
            alphabet_size: Some(probabilities.len()),
            probabilities: Some(probabilities),
            transition: None,
            rotation_number: None,
        }
    }

    pub fn markov(transition: Vec<Vec<f64>>) -> Self {
        Self {
            kind: BaseKind::Markov,
            alphabet_size: Some(transition.len()),
            probabilities: None,
            transition: Some(transition),
            rotation_number: None,
        }
    }

    pub fn rotation(rotation_number: f64, alphabet_size: usize) -> Self {
        Self {
            kind: BaseKind::Rotation,
            alphabet_size: Some(alphabet_size),
            probabilities: None,
            transition: None,
            rotation_number: Some(rotation_number),
        }
    }

    /// Every validation problem, with field paths under `prefix`.
    pub fn check(&self, prefix: &str) -> Vec<Error> {
        match BaseSystem::build(self, prefix) {
            Ok(_) => Vec::new(),
            Err(errors) => errors,
        }
    }
}

#[derive(Debug)]
enum Law {
    Bernoulli {
        cdf: Vec<f64>,
    },
    Markov {
        stationary: Vec<f64>,
        stationary_cdf: Vec<f64>,
        forward_cdf: Vec<Vec<f64>>,
        backward_cdf: Vec<Vec<f64>>,
    },
    Rotation {
        rotation_number: f64,
    },
    Dirac,
}

/// A validated base system, shared by all states drawn from it.
#[derive(Debug)]
pub struct BaseSystem {
    spec: BaseSystemSpec,
    alphabet_size: usize,
    law: Law,
}

impl BaseSystem {
    pub fn new(spec: &BaseSystemSpec) -> Result<Arc<Self>> {
        Self::build(spec, "base")
            .map(Arc::new)
            .map_err(|mut errors| errors.remove(0))
    }

    fn build(spec: &BaseSystemSpec, prefix: &str) -> std::result::Result<Self, Vec<Error>> {
        let mut errors = Vec::new();
        let field = |name: &str| format!("{prefix}.{name}");
        let law = match spec.kind {
            BaseKind::Dirac => {
                if let Some(n) = spec.alphabet_size {
                    if n != 1 {
                        errors.push(Error::config(
                            field("alphabet_size"),
                            "the one-point base has a single symbol",
                        ));
                    }
                }
                Some((1, Law::Dirac))
            }
            BaseKind::Bernoulli => match &spec.probabilities {
                None => {
                    errors.push(Error::config(
                        field("probabilities"),
                        "required for bernoulli bases",
                    ));
                    None
                }
                Some(p) => {
                    let before = errors.len();
                    check_distribution(p, &field("probabilities"), &mut errors);
                    if let Some(n) = spec.alphabet_size {
                        if n != p.len() {
                            errors.push(Error::config(
                                field("alphabet_size"),
                                format!("{n} does not match {} probabilities", p.len()),
                            ));
                        }
                    }
                    (errors.len() == before).then(|| (p.len(), Law::Bernoulli { cdf: cdf(p) }))
                }
            },
            BaseKind::Markov => match &spec.transition {
                None => {
                    errors.push(Error::config(field("transition"), "required for markov bases"));
                    None
                }
                Some(t) => markov_law(spec, t, prefix, &mut errors),
            },
            BaseKind::Rotation => {
                let n = spec.alphabet_size.unwrap_or(2);
                if n == 0 || n > MAX_ALPHABET {
                    errors.push(Error::config(
                        field("alphabet_size"),
                        format!("must be in 1..={MAX_ALPHABET}"),
                    ));
                }
                match spec.rotation_number {
                    Some(r) if r.is_finite() => Some((
                        n,
                        Law::Rotation {
                            rotation_number: r - r.floor(),
                        },
                    )),
                    Some(_) => {
                        errors.push(Error::config(field("rotation_number"), "must be finite"));
                        None
                    }
                    None => {
                        errors.push(Error::config(
                            field("rotation_number"),
                            "required for rotation bases",
                        ));
                        None
                    }
                }
            }
        };
        match law {
            Some((alphabet_size, law)) if errors.is_empty() => Ok(Self {
                spec: spec.clone(),
                alphabet_size,
                law,
            }),
            _ => Err(errors),
        }
    }

    pub fn spec(&self) -> &BaseSystemSpec {
        &self.spec
    }

    pub fn kind(&self) -> BaseKind {
        self.spec.kind
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    /// Stationary symbol distribution (one-point for Dirac; uniform-by-arc for
    /// rotations).
    pub fn stationary(&self) -> Vec<f64> {
        match &self.law {
            Law::Bernoulli { cdf } => {
                let mut prev = 0.0;
                cdf.iter()
                    .map(|c| {
                        let p = c - prev;
                        prev = *c;
                        p
                    })
                    .collect()
            }
            Law::Markov { stationary, .. } => stationary.clone(),
            Law::Rotation { .. } => vec![1.0 / self.alphabet_size as f64; self.alphabet_size],
            Law::Dirac => vec![1.0],
        }
    }
}

fn check_distribution(p: &[f64], field: &str, errors: &mut Vec<Error>) {
    if p.is_empty() || p.len() > MAX_ALPHABET {
        errors.push(Error::config(
            field,
            format!("must have between 1 and {MAX_ALPHABET} entries"),
        ));
        return;
    }
    if p.iter().any(|x| !x.is_finite() || *x < 0.0) {
        errors.push(Error::config(field, "entries must be finite and nonnegative"));
        return;
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > STOCHASTIC_TOL {
        errors.push(Error::config(
            field,
            format!("entries must sum to 1 (got {total})"),
        ));
    }
}

fn cdf(p: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out: Vec<f64> = p
        .iter()
        .map(|x| {
            acc += x;
            acc
        })
        .collect();
    if let Some(last) = out.last_mut() {
        *last = 1.0;
    }
    out
}

fn draw(cdf: &[f64], u: f64) -> u8 {
    let i = cdf.iter().position(|c| u < *c).unwrap_or(cdf.len() - 1);
    // Zero-probability symbols are never drawn even at cdf plateaus.
    i as u8
}

fn markov_law(
    spec: &BaseSystemSpec,
    t: &[Vec<f64>],
    prefix: &str,
    errors: &mut Vec<Error>,
) -> Option<(usize, Law)> {
    let field = |name: &str| format!("{prefix}.{name}");
    let n = t.len();
    let before = errors.len();
    if n == 0 || n > MAX_ALPHABET {
        errors.push(Error::config(
            field("transition"),
            format!("must be a square matrix of size 1..={MAX_ALPHABET}"),
        ));
        return None;
    }
    for (i, row) in t.iter().enumerate() {
        let path = format!("{prefix}.transition[{i}]");
        if row.len() != n {
            errors.push(Error::config(path, format!("row has {} entries, expected {n}", row.len())));
        } else {
            check_distribution(row, &path, errors);
        }
    }
    if let Some(a) = spec.alphabet_size {
        if a != n {
            errors.push(Error::config(
                field("alphabet_size"),
                format!("{a} does not match a {n}x{n} transition matrix"),
            ));
        }
    }
    if errors.len() > before {
        return None;
    }
    if !irreducible(t) {
        errors.push(Error::config(
            field("transition"),
            "the chain must be irreducible",
        ));
        return None;
    }
    let stationary = stationary_vector(t);
    if let Some(p) = &spec.probabilities {
        let ok = p.len() == n
            && p.iter()
                .zip(&stationary)
                .all(|(a, b)| (a - b).abs() <= 1e-9);
        if !ok {
            errors.push(Error::config(
                field("probabilities"),
                "does not match the stationary vector of the transition matrix",
            ));
            return None;
        }
    }
    let forward_cdf = t.iter().map(|row| cdf(row)).collect();
    // Time reversal: R(i, j) = π_j P(j, i) / π_i.
    let backward_cdf = (0..n)
        .map(|i| {
            let row: Vec<f64> = (0..n)
                .map(|j| stationary[j] * t[j][i] / stationary[i])
                .collect();
            cdf(&row)
        })
        .collect();
    Some((
        n,
        Law::Markov {
            stationary_cdf: cdf(&stationary),
            stationary,
            forward_cdf,
            backward_cdf,
        },
    ))
}

fn irreducible(t: &[Vec<f64>]) -> bool {
    let n = t.len();
    let reach_all = |from: usize, forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![from];
        seen[from] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                let w = if forward { t[i][j] } else { t[j][i] };
                if w > 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.iter().all(|s| *s)
    };
    reach_all(0, true) && reach_all(0, false)
}

fn stationary_vector(t: &[Vec<f64>]) -> Vec<f64> {
    let n = t.len();
    // (Pᵀ - I) π = 0 with the last equation replaced by Σπ = 1.
    let mut a = DMatrix::<f64>::from_fn(n, n, |i, j| t[j][i] - if i == j { 1.0 } else { 0.0 });
    let mut b = DVector::<f64>::zeros(n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    b[n - 1] = 1.0;
    let pi = a
        .lu()
        .solve(&b)
        .expect("irreducible chains have a unique stationary vector");
    let clipped: Vec<f64> = pi.iter().map(|x| x.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    clipped.iter().map(|x| x / total).collect()
}

/// Lazily realized two-sided symbol sequence.
#[derive(Debug)]
struct SymbolTape {
    /// Positions 0, 1, 2, ...
    forward: Vec<u8>,
    /// Positions -1, -2, ...
    backward: Vec<u8>,
    forward_rng: ChaCha8Rng,
    backward_rng: ChaCha8Rng,
}

impl SymbolTape {
    fn new(seed: u64) -> Self {
        Self {
            forward: Vec::new(),
            backward: Vec::new(),
            forward_rng: seeding::stream_rng(seed, stream::SYMBOLS_FORWARD),
            backward_rng: seeding::stream_rng(seed, stream::SYMBOLS_BACKWARD),
        }
    }

    fn cached(&self, pos: i64) -> Option<u8> {
        if pos >= 0 {
            self.forward.get(pos as usize).copied()
        } else {
            self.backward.get((-pos - 1) as usize).copied()
        }
    }

    fn fill(&mut self, law: &Law, pos: i64) -> u8 {
        const CHUNK: usize = 1024;
        let forward_target = if pos >= 0 { pos as usize + 1 } else { 1 };
        if self.forward.len() < forward_target {
            let target = forward_target.max(self.forward.len() + CHUNK);
            while self.forward.len() < target {
                let u = seeding::unit_f64(self.forward_rng.next_u64());
                let s = match law {
                    Law::Bernoulli { cdf } => draw(cdf, u),
                    Law::Markov {
                        stationary_cdf,
                        forward_cdf,
                        ..
                    } => match self.forward.last() {
                        None => draw(stationary_cdf, u),
                        Some(prev) => draw(&forward_cdf[*prev as usize], u),
                    },
                    Law::Rotation { .. } | Law::Dirac => unreachable!("tapes back shift bases only"),
                };
                self.forward.push(s);
            }
        }
        if pos < 0 {
            let needed = (-pos) as usize;
            if self.backward.len() < needed {
                let target = needed.max(self.backward.len() + CHUNK);
                while self.backward.len() < target {
                    let u = seeding::unit_f64(self.backward_rng.next_u64());
                    let s = match law {
                        Law::Bernoulli { cdf } => draw(cdf, u),
                        Law::Markov { backward_cdf, .. } => {
                            let next = self.backward.last().copied().unwrap_or(self.forward[0]);
                            draw(&backward_cdf[next as usize], u)
                        }
                        Law::Rotation { .. } | Law::Dirac => unreachable!("tapes back shift bases only"),
                    };
                    self.backward.push(s);
                }
            }
        }
        self.cached(pos).expect("filled above")
    }
}

#[derive(Clone)]
enum Realization {
    Tape(Arc<RwLock<SymbolTape>>),
    Angle(f64),
    Point,
}

/// A point ω of the base together with its current shift position.
///
/// Cloning is cheap; clones and shifted copies share the memoized symbol
/// tape, which is filled idempotently under a lock and is safe for
/// concurrent readers.
#[derive(Clone)]
pub struct BaseState {
    system: Arc<BaseSystem>,
    seed: u64,
    origin_offset: i64,
    realization: Realization,
}

impl fmt::Debug for BaseState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = f.debug_struct("BaseState");
        s.field("kind", &self.system.kind())
            .field("seed", &self.seed)
            .field("origin_offset", &self.origin_offset);
        if let Realization::Angle(a) = self.realization {
            s.field("angle", &self.angle_at(0).unwrap_or(a));
        }
        s.finish()
    }
}

impl PartialEq for BaseState {
    fn eq(&self, other: &Self) -> bool {
        let same_angle = match (&self.realization, &other.realization) {
            (Realization::Angle(a), Realization::Angle(b)) => a == b,
            _ => true,
        };
        Arc::ptr_eq(&self.system, &other.system)
            && self.seed == other.seed
            && self.origin_offset == other.origin_offset
            && same_angle
    }
}

impl BaseState {
    /// The state generated by `seed` at shift position 0. Rotation states draw
    /// their initial angle uniformly from the seed.
    pub fn new(system: &Arc<BaseSystem>, seed: u64) -> Self {
        let realization = match system.law {
            Law::Bernoulli { .. } | Law::Markov { .. } => {
                Realization::Tape(Arc::new(RwLock::new(SymbolTape::new(seed))))
            }
            Law::Rotation { .. } => {
                Realization::Angle(seeding::uniform(seed, stream::ROTATION_ANGLE, 0))
            }
            Law::Dirac => Realization::Point,
        };
        Self {
            system: Arc::clone(system),
            seed,
            origin_offset: 0,
            realization,
        }
    }

    /// Rotation state at a prescribed angle.
    pub fn with_angle(system: &Arc<BaseSystem>, angle: f64) -> Result<Self> {
        if system.kind() != BaseKind::Rotation {
            return Err(Error::Contract("angles exist only on rotation bases".into()));
        }
        Ok(Self {
            system: Arc::clone(system),
            seed: 0,
            origin_offset: 0,
            realization: Realization::Angle(wrap_unit(angle)),
        })
    }

    pub fn system(&self) -> &Arc<BaseSystem> {
        &self.system
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn origin_offset(&self) -> i64 {
        self.origin_offset
    }

    /// θᵏ(ω) for any signed k. The one-point base is fixed by θ.
    pub fn advance(&self, k: i64) -> Self {
        let mut next = self.clone();
        if !matches!(self.realization, Realization::Point) {
            next.origin_offset += k;
        }
        next
    }

    pub fn base_step(&self) -> Self {
        self.advance(1)
    }

    pub fn base_inverse_step(&self) -> Self {
        self.advance(-1)
    }

    /// Rotation angle of θᵏ(ω).
    pub fn angle_at(&self, k: i64) -> Option<f64> {
        match (&self.realization, &self.system.law) {
            (Realization::Angle(a0), Law::Rotation { rotation_number }) => {
                Some(wrap_unit(a0 + (self.origin_offset + k) as f64 * rotation_number))
            }
            _ => None,
        }
    }

    pub fn angle(&self) -> Option<f64> {
        self.angle_at(0)
    }

    /// Symbol of θᵏ(ω) at coordinate 0.
    pub fn symbol_at(&self, k: i64) -> Result<usize> {
        match &self.realization {
            Realization::Point => Ok(0),
            Realization::Angle(_) => {
                let a = self.angle_at(k).expect("rotation state");
                let n = self.system.alphabet_size;
                Ok(((a * n as f64).floor() as usize).min(n - 1))
            }
            Realization::Tape(tape) => {
                let pos = self.origin_offset + k;
                if pos.abs() > WINDOW_LIMIT {
                    return Err(Error::Resource(format!(
                        "symbol position {pos} is outside the realizable window ±{WINDOW_LIMIT}"
                    )));
                }
                if let Some(s) = tape.read().expect("symbol tape lock").cached(pos) {
                    return Ok(s as usize);
                }
                let mut guard = tape.write().expect("symbol tape lock");
                Ok(guard.fill(&self.system.law, pos) as usize)
            }
        }
    }
}

/// `count` independent states distributed per ℙ, deterministic in `(spec, seed)`.
pub fn sample_base(spec: &BaseSystemSpec, seed: u64, count: usize) -> Result<Vec<BaseState>> {
    let system = BaseSystem::new(spec)?;
    sample_states(&system, seed, count)
}

pub fn sample_states(system: &Arc<BaseSystem>, seed: u64, count: usize) -> Result<Vec<BaseState>> {
    sample_states_in(system, seed, stream::BASE_SAMPLE, count)
}

/// Like [`sample_states`] but drawing child seeds from a caller-chosen stream,
/// for estimators that need an independent ω sample.
pub fn sample_states_in(
    system: &Arc<BaseSystem>,
    seed: u64,
    stream_id: u64,
    count: usize,
) -> Result<Vec<BaseState>> {
    if count == 0 {
        return Err(Error::Contract("sample count must be at least 1".into()));
    }
    Ok((0..count as u64)
        .map(|i| BaseState::new(system, seeding::child_seed(seed, stream_id, i)))
        .collect())
}
