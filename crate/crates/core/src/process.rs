//! Stationary processes `X(1), X(2), ...` with exact marginal and pair laws.
//!
//! Three families are supported: finite-state Markov chains started from
//! their stationary law, i.i.d. draws from a finite law, and the doubling
//! map `x -> 2x mod 1` under Lebesgue measure read through a bounded
//! observable. Finite models expose their marginal as a [`FiniteLaw`] over
//! the distinct observable values (the *alphabet*); trajectories of such
//! models also carry alphabet indices so that tabulated functions can be
//! evaluated without floating-point lookups.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::replica::{derive_seed, replica_rng};

const STOCHASTIC_TOL: f64 = 1e-12;
const STATIONARY_TOL: f64 = 1e-12;
/// Points used to represent a continuous marginal.
pub const SAMPLED_LAW_POINTS: usize = 100_000;
const SAMPLED_LAW_SALT: u64 = 0x5eed_0f_1a3;
const DYADIC_REFILL_PERIOD: u32 = 32;
const EMPIRICAL_BINS: usize = 64;

/// A probability law on finitely many points of `R^dim`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteLaw {
    pub support: Vec<Vec<f64>>,
    pub probs: Vec<f64>,
}

impl FiniteLaw {
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.support.first().map_or(0, Vec::len)
    }

    pub fn index_of(&self, value: &[f64]) -> Option<usize> {
        self.support.iter().position(|s| s.as_slice() == value)
    }

    /// `E|X|^theta` with `|.|` the Euclidean norm; `theta = inf` gives the
    /// largest norm on the support.
    pub fn moment(&self, theta: f64) -> f64 {
        let norms = self.support.iter().map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt());
        if theta.is_infinite() {
            return norms
                .zip(&self.probs)
                .filter(|(_, p)| **p > 0.0)
                .map(|(n, _)| n)
                .fold(0.0, f64::max);
        }
        norms.zip(&self.probs).map(|(n, p)| p * n.powf(theta)).sum::<f64>().powf(1.0 / theta)
    }
}

/// A continuous marginal represented by a fixed-seed sample.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledLaw {
    pub points: Vec<Vec<f64>>,
}

/// Marginal law `mu` of `X(n)`.
#[derive(Clone, Debug, PartialEq)]
pub enum Marginal {
    Finite(FiniteLaw),
    Sampled(SampledLaw),
}

impl Marginal {
    pub fn dim(&self) -> usize {
        match self {
            Marginal::Finite(law) => law.dim(),
            Marginal::Sampled(s) => s.points.first().map_or(0, Vec::len),
        }
    }

    pub fn as_finite(&self) -> Option<&FiniteLaw> {
        match self {
            Marginal::Finite(law) => Some(law),
            Marginal::Sampled(_) => None,
        }
    }

    /// Draws one point from the marginal (from the support, or from the
    /// stored sample for continuous laws).
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> &[f64] {
        match self {
            Marginal::Finite(law) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (i, p) in law.probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return &law.support[i];
                    }
                }
                let last = law.probs.iter().rposition(|p| *p > 0.0).unwrap_or(0);
                &law.support[last]
            }
            Marginal::Sampled(s) => &s.points[rng.random_range(0..s.points.len())],
        }
    }
}

/// Observable read off the doubling-map state `x in [0, 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DyadicObservable {
    /// `h(x) = x`.
    Identity,
    /// `h(x) = 1` when `lower <= x < upper`, else 0.
    Indicator { lower: f64, upper: f64 },
    /// `h(x) = cos(2 pi k x)`.
    Cosine { frequency: u32 },
}

impl DyadicObservable {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            DyadicObservable::Identity => x,
            DyadicObservable::Indicator { lower, upper } => {
                if (lower..upper).contains(&x) {
                    1.0
                } else {
                    0.0
                }
            }
            DyadicObservable::Cosine { frequency } => {
                (std::f64::consts::TAU * frequency as f64 * x).cos()
            }
        }
    }

    fn range(&self) -> (f64, f64) {
        match self {
            DyadicObservable::Identity => (0.0, 1.0),
            DyadicObservable::Indicator { .. } => (0.0, 1.0),
            DyadicObservable::Cosine { .. } => (-1.0, 1.0),
        }
    }

    fn validate(&self) -> Result<()> {
        if let DyadicObservable::Indicator { lower, upper } = *self {
            if !(0.0 <= lower && lower < upper && upper <= 1.0) {
                return Err(Error::InvalidModel(format!(
                    "indicator interval [{lower}, {upper}) must lie in [0, 1] and be nonempty"
                )));
            }
        }
        Ok(())
    }
}

/// JSON description of a process model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// Finite-state chain; `observable[s]` is the value of `X` in state `s`
    /// (defaults to the state index).
    FiniteMarkov {
        transition: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        observable: Option<Vec<Vec<f64>>>,
    },
    /// Two-state chain with switching probabilities `a` (0 to 1) and `b`
    /// (1 to 0), observed as the state index.
    TwoState { a: f64, b: f64 },
    /// I.i.d. draws from `probs` over `observable` (defaults to indices).
    Iid {
        probs: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        observable: Option<Vec<Vec<f64>>>,
    },
    /// I.i.d. Bernoulli(p) taking values 0 and 1.
    Bernoulli { p: f64 },
    /// Doubling map under Lebesgue measure.
    DyadicMap { observable: DyadicObservable },
}

#[derive(Clone, Debug)]
struct FiniteChain {
    transition: Vec<Vec<f64>>,
    stationary: Vec<f64>,
    iid: bool,
    state_symbol: Vec<Option<u32>>,
    alphabet: FiniteLaw,
    stationary_cum: Vec<f64>,
    transition_cum: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
enum Dynamics {
    Finite(FiniteChain),
    Dyadic {
        observable: DyadicObservable,
        /// Present when the observable has finite range.
        alphabet: Option<FiniteLaw>,
    },
}

/// Validated, immutable process model.
#[derive(Clone, Debug)]
pub struct ProcessModel {
    spec: ModelSpec,
    dim: usize,
    dynamics: Dynamics,
    marginal: Marginal,
}

/// Joint law of `(X(n), X(n+lag))` on a finite support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairLaw {
    pub lag: usize,
    pub kind: PairLawKind,
    pub support: Vec<Vec<f64>>,
    /// Row-major `support.len() x support.len()` table.
    pub table: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairLawKind {
    Joint,
    Product,
    Diagonal,
    Empirical,
}

/// A sampled path `X(1..=len)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    dim: usize,
    values: Vec<f64>,
    symbols: Option<Vec<u32>>,
    pub seed: u64,
    pub stream: u64,
}

fn validate_stochastic(p: &[Vec<f64>]) -> Result<()> {
    let s = p.len();
    if s == 0 {
        return Err(Error::NotStochastic("empty matrix".into()));
    }
    for (i, row) in p.iter().enumerate() {
        if row.len() != s {
            return Err(Error::NotStochastic(format!("row {i} has {} entries, expected {s}", row.len())));
        }
        validate_probability_row(row, i)?;
    }
    Ok(())
}

fn validate_probability_row(row: &[f64], i: usize) -> Result<()> {
    if row.is_empty() {
        return Err(Error::NotStochastic("empty probability vector".into()));
    }
    if row.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::NotStochastic(format!("row {i} has a negative or non-finite entry")));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::NotStochastic(format!("row {i} sums to {sum}")));
    }
    Ok(())
}

fn reaches_all(p: &[Vec<f64>], reverse: bool) -> bool {
    let s = p.len();
    let mut seen = vec![false; s];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        for v in 0..s {
            let w = if reverse { p[v][u] } else { p[u][v] };
            if w > 0.0 && !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen.into_iter().all(|b| b)
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Period of an irreducible chain: gcd over edges `u -> v` of
/// `level(u) + 1 - level(v)` for BFS levels from state 0.
fn period(p: &[Vec<f64>]) -> u64 {
    let s = p.len();
    let mut level = vec![u64::MAX; s];
    level[0] = 0;
    let mut queue = std::collections::VecDeque::from([0usize]);
    while let Some(u) = queue.pop_front() {
        for v in 0..s {
            if p[u][v] > 0.0 && level[v] == u64::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut g = 0;
    for u in 0..s {
        for v in 0..s {
            if p[u][v] > 0.0 {
                g = gcd(g, (level[u] + 1).abs_diff(level[v]));
            }
        }
    }
    g
}

fn stationary_residual(p: &[Vec<f64>], pi: &[f64]) -> f64 {
    let s = p.len();
    (0..s)
        .map(|y| ((0..s).map(|x| pi[x] * p[x][y]).sum::<f64>() - pi[y]).abs())
        .fold(0.0, f64::max)
}

/// Stationary vector of an irreducible aperiodic stochastic matrix.
///
/// Solves `pi (P - I) = 0, sum pi = 1` directly and falls back to power
/// iteration if the residual exceeds `1e-12`.
pub fn stationary_distribution(p: &[Vec<f64>]) -> Result<Vec<f64>> {
    validate_stochastic(p)?;
    if !reaches_all(p, false) || !reaches_all(p, true) {
        return Err(Error::NotIrreducible);
    }
    let d = period(p);
    if d != 1 {
        return Err(Error::Periodic(d));
    }
    let s = p.len();
    let mut a = DMatrix::<f64>::zeros(s, s);
    for i in 0..s {
        for j in 0..s {
            a[(i, j)] = p[j][i] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..s {
        a[(s - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(s);
    b[s - 1] = 1.0;
    let mut pi: Vec<f64> = match a.lu().solve(&b) {
        Some(x) => x.iter().copied().collect(),
        None => vec![1.0 / s as f64; s],
    };
    let mut iterations = 0;
    while stationary_residual(p, &pi) > STATIONARY_TOL && iterations < 100_000 {
        let next: Vec<f64> = (0..s).map(|y| (0..s).map(|x| pi[x] * p[x][y]).sum()).collect();
        let total: f64 = next.iter().sum();
        pi = next.into_iter().map(|v| v / total).collect();
        iterations += 1;
    }
    let residual = stationary_residual(p, &pi);
    if residual > STATIONARY_TOL {
        return Err(Error::InvalidModel(format!(
            "stationary vector residual {residual:e} above tolerance"
        )));
    }
    if pi.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::NotIrreducible);
    }
    Ok(pi)
}

fn cumulative(probs: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out: Vec<f64> = probs
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect();
    if let Some(last) = out.last_mut() {
        *last = 1.0;
    }
    out
}

#[inline]
fn draw_index(cum: &[f64], u: f64) -> usize {
    cum.iter().position(|&c| u < c).unwrap_or(cum.len() - 1)
}

fn default_observable(s: usize) -> Vec<Vec<f64>> {
    (0..s).map(|i| vec![i as f64]).collect()
}

fn validate_observable(obs: &[Vec<f64>], states: usize) -> Result<usize> {
    if obs.len() != states {
        return Err(Error::InvalidModel(format!(
            "observable table has {} rows for {states} states",
            obs.len()
        )));
    }
    let dim = obs[0].len();
    if dim == 0 || obs.iter().any(|v| v.len() != dim || v.iter().any(|x| !x.is_finite())) {
        return Err(Error::InvalidModel("observable rows must be finite with a common nonzero dimension".into()));
    }
    Ok(dim)
}

/// Merges states with equal observable values into alphabet symbols.
/// Zero-mass states get no symbol.
fn build_alphabet(obs: &[Vec<f64>], probs: &[f64]) -> (Vec<Option<u32>>, FiniteLaw) {
    let mut law = FiniteLaw { support: Vec::new(), probs: Vec::new() };
    let mut symbol = Vec::with_capacity(obs.len());
    for (value, &p) in obs.iter().zip(probs) {
        if p <= 0.0 {
            symbol.push(None);
            continue;
        }
        let idx = match law.index_of(value) {
            Some(i) => {
                law.probs[i] += p;
                i
            }
            None => {
                law.support.push(value.clone());
                law.probs.push(p);
                law.support.len() - 1
            }
        };
        symbol.push(Some(idx as u32));
    }
    (symbol, law)
}

impl FiniteChain {
    fn new(transition: Vec<Vec<f64>>, stationary: Vec<f64>, iid: bool, obs: &[Vec<f64>]) -> Self {
        let (state_symbol, alphabet) = build_alphabet(obs, &stationary);
        let stationary_cum = cumulative(&stationary);
        let transition_cum = transition.iter().map(|r| cumulative(r)).collect();
        Self { transition, stationary, iid, state_symbol, alphabet, stationary_cum, transition_cum }
    }

    fn states(&self) -> usize {
        self.stationary.len()
    }
}

impl ProcessModel {
    pub fn from_spec(spec: ModelSpec) -> Result<Self> {
        let (dim, dynamics) = match &spec {
            ModelSpec::FiniteMarkov { transition, observable } => {
                let pi = stationary_distribution(transition)?;
                let obs = observable.clone().unwrap_or_else(|| default_observable(transition.len()));
                let dim = validate_observable(&obs, transition.len())?;
                (dim, Dynamics::Finite(FiniteChain::new(transition.clone(), pi, false, &obs)))
            }
            ModelSpec::TwoState { a, b } => {
                let p = vec![vec![1.0 - a, *a], vec![*b, 1.0 - b]];
                let pi = stationary_distribution(&p)?;
                (1, Dynamics::Finite(FiniteChain::new(p, pi, false, &default_observable(2))))
            }
            ModelSpec::Iid { probs, observable } => {
                validate_probability_row(probs, 0)?;
                let obs = observable.clone().unwrap_or_else(|| default_observable(probs.len()));
                let dim = validate_observable(&obs, probs.len())?;
                let p = vec![probs.clone(); probs.len()];
                (dim, Dynamics::Finite(FiniteChain::new(p, probs.clone(), true, &obs)))
            }
            ModelSpec::Bernoulli { p } => {
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::InvalidModel(format!("Bernoulli parameter {p} outside [0, 1]")));
                }
                let probs = vec![1.0 - p, *p];
                let rows = vec![probs.clone(); 2];
                (1, Dynamics::Finite(FiniteChain::new(rows, probs, true, &default_observable(2))))
            }
            ModelSpec::DyadicMap { observable } => {
                observable.validate()?;
                let alphabet = match *observable {
                    DyadicObservable::Indicator { lower, upper } => {
                        let q = upper - lower;
                        let (_, law) = build_alphabet(&[vec![0.0], vec![1.0]], &[1.0 - q, q]);
                        Some(law)
                    }
                    _ => None,
                };
                (1, Dynamics::Dyadic { observable: observable.clone(), alphabet })
            }
        };
        let marginal = match &dynamics {
            Dynamics::Finite(chain) => Marginal::Finite(chain.alphabet.clone()),
            Dynamics::Dyadic { alphabet: Some(law), .. } => Marginal::Finite(law.clone()),
            Dynamics::Dyadic { observable, alphabet: None } => {
                let mut rng = replica_rng(derive_seed(SAMPLED_LAW_SALT, 1), 0);
                let points = (0..SAMPLED_LAW_POINTS)
                    .map(|_| vec![observable.eval(rng.random::<f64>())])
                    .collect();
                Marginal::Sampled(SampledLaw { points })
            }
        };
        Ok(Self { spec, dim, dynamics, marginal })
    }

    /// Parses and validates a JSON model description.
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ModelSpec =
            serde_json::from_str(text).map_err(|e| Error::InvalidModel(e.to_string()))?;
        Self::from_spec(spec)
    }

    pub fn bernoulli(p: f64) -> Result<Self> {
        Self::from_spec(ModelSpec::Bernoulli { p })
    }

    pub fn two_state(a: f64, b: f64) -> Result<Self> {
        Self::from_spec(ModelSpec::TwoState { a, b })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Observable dimension.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn marginal(&self) -> &Marginal {
        &self.marginal
    }

    pub fn is_iid(&self) -> bool {
        matches!(&self.dynamics, Dynamics::Finite(c) if c.iid)
    }

    /// Transition matrix and stationary vector of finite models.
    pub fn chain(&self) -> Option<(&[Vec<f64>], &[f64])> {
        match &self.dynamics {
            Dynamics::Finite(c) => Some((&c.transition, &c.stationary)),
            Dynamics::Dyadic { .. } => None,
        }
    }

    pub fn has_exact_pair_laws(&self) -> bool {
        matches!(self.dynamics, Dynamics::Finite(_))
    }

    /// Short human-readable label.
    pub fn label(&self) -> String {
        match &self.spec {
            ModelSpec::FiniteMarkov { transition, .. } => format!("finite_markov({} states)", transition.len()),
            ModelSpec::TwoState { a, b } => format!("two_state(a={a}, b={b})"),
            ModelSpec::Iid { probs, .. } => format!("iid({} outcomes)", probs.len()),
            ModelSpec::Bernoulli { p } => format!("bernoulli({p})"),
            ModelSpec::DyadicMap { observable } => format!("dyadic_map({observable:?})"),
        }
    }

    /// Samples `X(1..=length)` from the stationary law, using stream 0 of
    /// `seed`.
    pub fn sample_trajectory(&self, length: usize, seed: u64) -> Result<Trajectory> {
        let mut rng = replica_rng(seed, 0);
        let mut t = self.sample_with(length, &mut rng)?;
        t.seed = seed;
        Ok(t)
    }

    /// Samples a trajectory from an explicit generator.
    pub fn sample_with<R: RngCore>(&self, length: usize, rng: &mut R) -> Result<Trajectory> {
        if length == 0 {
            return Err(Error::InvalidModel("trajectory length must be positive".into()));
        }
        match &self.dynamics {
            Dynamics::Finite(chain) => Ok(sample_finite(chain, self.dim, length, rng)),
            Dynamics::Dyadic { observable, alphabet } => {
                Ok(sample_dyadic(observable, alphabet.as_ref(), length, rng))
            }
        }
    }

    /// Exact joint law of `(X(n), X(n+m))` pushed to the alphabet.
    pub fn pair_law(&self, m: usize) -> Result<PairLaw> {
        let chain = self.finite_chain()?;
        if m == 0 {
            return Ok(diagonal_pair_law(&chain.alphabet));
        }
        if chain.iid {
            return Ok(product_pair_law(&chain.alphabet, m));
        }
        let mut row_law = state_joint(chain);
        for _ in 1..m {
            row_law = mul_transition(&row_law, &chain.transition);
        }
        Ok(push_joint(chain, &row_law, m))
    }

    /// Exact pair laws for lags `0..=max_lag`, computed incrementally.
    pub fn pair_laws(&self, max_lag: usize) -> Result<Vec<PairLaw>> {
        let chain = self.finite_chain()?;
        let mut out = Vec::with_capacity(max_lag + 1);
        out.push(diagonal_pair_law(&chain.alphabet));
        if chain.iid {
            out.extend((1..=max_lag).map(|m| product_pair_law(&chain.alphabet, m)));
            return Ok(out);
        }
        let mut joint = state_joint(chain);
        for m in 1..=max_lag {
            if m > 1 {
                joint = mul_transition(&joint, &chain.transition);
            }
            out.push(push_joint(chain, &joint, m));
        }
        Ok(out)
    }

    /// Histogram estimate of the law of `(X(n), X(n+m))` from one
    /// stationary trajectory. Continuous observables are binned into 64
    /// equal cells and represented by the cell midpoints.
    pub fn empirical_pair_law(&self, m: usize, sample_count: usize, seed: u64) -> Result<PairLaw> {
        const MIN_SAMPLES: usize = 10_000;
        if sample_count < MIN_SAMPLES {
            return Err(Error::TooFewSamples { needed: MIN_SAMPLES, got: sample_count });
        }
        let traj = self.sample_trajectory(sample_count + m, seed)?;
        let (support, symbols): (Vec<Vec<f64>>, Vec<usize>) = match (&self.marginal, traj.symbols()) {
            (Marginal::Finite(law), Some(sym)) => {
                (law.support.clone(), sym.iter().map(|&s| s as usize).collect())
            }
            _ => {
                let (lo, hi) = match &self.dynamics {
                    Dynamics::Dyadic { observable, .. } => observable.range(),
                    Dynamics::Finite(_) => unreachable!("finite models always carry symbols"),
                };
                let width = (hi - lo) / EMPIRICAL_BINS as f64;
                let support = (0..EMPIRICAL_BINS).map(|b| vec![lo + (b as f64 + 0.5) * width]).collect();
                let symbols = (1..=traj.len())
                    .map(|n| (((traj.scalar(n) - lo) / width) as usize).min(EMPIRICAL_BINS - 1))
                    .collect();
                (support, symbols)
            }
        };
        let k = support.len();
        let mut counts = vec![0u64; k * k];
        for n in 0..sample_count {
            counts[symbols[n] * k + symbols[n + m]] += 1;
        }
        let table = counts.iter().map(|&c| c as f64 / sample_count as f64).collect();
        Ok(PairLaw { lag: m, kind: PairLawKind::Empirical, support, table })
    }

    /// Second-largest eigenvalue modulus of the transition matrix (0 for
    /// i.i.d. models).
    pub fn second_eigenvalue_modulus(&self) -> Result<f64> {
        let chain = self.finite_chain()?;
        if chain.iid {
            return Ok(0.0);
        }
        let s = chain.states();
        let m = DMatrix::from_fn(s, s, |i, j| chain.transition[i][j]);
        let mut mods: Vec<f64> = m.complex_eigenvalues().iter().map(|z| z.norm()).collect();
        mods.sort_by(|a, b| b.total_cmp(a));
        Ok(mods.get(1).copied().unwrap_or(0.0))
    }

    fn finite_chain(&self) -> Result<&FiniteChain> {
        match &self.dynamics {
            Dynamics::Finite(c) => Ok(c),
            Dynamics::Dyadic { .. } => Err(Error::UnsupportedModel(
                "exact pair laws are not available for the doubling map; use empirical_pair_law".into(),
            )),
        }
    }
}

fn sample_finite<R: RngCore>(chain: &FiniteChain, dim: usize, length: usize, rng: &mut R) -> Trajectory {
    let mut values = Vec::with_capacity(length * dim);
    let mut symbols = Vec::with_capacity(length);
    let mut state = draw_index(&chain.stationary_cum, rng.random());
    for n in 0..length {
        if n > 0 {
            let cum = if chain.iid { &chain.stationary_cum } else { &chain.transition_cum[state] };
            state = draw_index(cum, rng.random());
        }
        let sym = chain.state_symbol[state].expect("sampled states carry positive mass");
        symbols.push(sym);
        values.extend_from_slice(&chain.alphabet.support[sym as usize]);
    }
    Trajectory { dim, values, symbols: Some(symbols), seed: 0, stream: 0 }
}

/// Iterates the doubling map on a 128-bit state. The left shift is exact;
/// the 32 low bits emptied by the shifts are refilled with fresh fair bits
/// every 32 steps, so the top 64 bits always hold a uniform point.
fn sample_dyadic<R: RngCore>(
    observable: &DyadicObservable,
    alphabet: Option<&FiniteLaw>,
    length: usize,
    rng: &mut R,
) -> Trajectory {
    let mut state: u128 = ((rng.next_u64() as u128) << 64) | rng.next_u64() as u128;
    let mut values = Vec::with_capacity(length);
    let mut symbols = alphabet.map(|_| Vec::with_capacity(length));
    for n in 0..length {
        if n > 0 {
            state <<= 1;
            if n as u32 % DYADIC_REFILL_PERIOD == 0 {
                state |= rng.next_u32() as u128;
            }
        }
        let x = (((state >> 64) as u64) >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        let v = observable.eval(x);
        values.push(v);
        if let (Some(law), Some(sym)) = (alphabet, symbols.as_mut()) {
            sym.push(law.index_of(&[v]).expect("indicator values lie in the alphabet") as u32);
        }
    }
    Trajectory { dim: 1, values, symbols, seed: 0, stream: 0 }
}

fn state_joint(chain: &FiniteChain) -> Vec<Vec<f64>> {
    let s = chain.states();
    (0..s).map(|x| (0..s).map(|y| chain.stationary[x] * chain.transition[x][y]).collect()).collect()
}

fn mul_transition(joint: &[Vec<f64>], p: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let s = p.len();
    joint
        .iter()
        .map(|row| (0..s).map(|y| (0..s).map(|z| row[z] * p[z][y]).sum()).collect())
        .collect()
}

fn push_joint(chain: &FiniteChain, joint: &[Vec<f64>], lag: usize) -> PairLaw {
    let k = chain.alphabet.len();
    let mut table = vec![0.0; k * k];
    for (x, row) in joint.iter().enumerate() {
        let Some(sx) = chain.state_symbol[x] else { continue };
        for (y, &w) in row.iter().enumerate() {
            if let Some(sy) = chain.state_symbol[y] {
                table[sx as usize * k + sy as usize] += w;
            }
        }
    }
    PairLaw { lag, kind: PairLawKind::Joint, support: chain.alphabet.support.clone(), table }
}

fn diagonal_pair_law(law: &FiniteLaw) -> PairLaw {
    let k = law.len();
    let mut table = vec![0.0; k * k];
    for (i, p) in law.probs.iter().enumerate() {
        table[i * k + i] = *p;
    }
    PairLaw { lag: 0, kind: PairLawKind::Diagonal, support: law.support.clone(), table }
}

fn product_pair_law(law: &FiniteLaw, lag: usize) -> PairLaw {
    let table = law.probs.iter().flat_map(|p| law.probs.iter().map(move |q| p * q)).collect();
    PairLaw { lag, kind: PairLawKind::Product, support: law.support.clone(), table }
}

impl PairLaw {
    pub fn size(&self) -> usize {
        self.support.len()
    }

    #[inline]
    pub fn prob(&self, x: usize, y: usize) -> f64 {
        self.table[x * self.size() + y]
    }

    pub fn total_mass(&self) -> f64 {
        self.table.iter().sum()
    }

    pub fn first_marginal(&self) -> Vec<f64> {
        let k = self.size();
        (0..k).map(|x| (0..k).map(|y| self.prob(x, y)).sum()).collect()
    }

    pub fn second_marginal(&self) -> Vec<f64> {
        let k = self.size();
        (0..k).map(|y| (0..k).map(|x| self.prob(x, y)).sum()).collect()
    }

    /// Law of the swapped pair `(X(n+m), X(n))`.
    pub fn swapped(&self) -> PairLaw {
        let k = self.size();
        let table = (0..k).flat_map(|x| (0..k).map(move |y| (x, y))).map(|(x, y)| self.prob(y, x)).collect();
        PairLaw { table, ..self.clone() }
    }

    /// Total-variation distance to another law on the same support.
    pub fn tv_distance(&self, other: &PairLaw) -> f64 {
        0.5 * self.table.iter().zip(&other.table).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }

    /// Product coupling of this law's first marginal with itself.
    pub fn independent_coupling(&self) -> PairLaw {
        let mu = self.first_marginal();
        let table = mu.iter().flat_map(|p| mu.iter().map(move |q| p * q)).collect();
        PairLaw { kind: PairLawKind::Product, table, ..self.clone() }
    }
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `X(n)` for `1 <= n <= len`.
    #[inline]
    pub fn value(&self, n: usize) -> &[f64] {
        &self.values[(n - 1) * self.dim..n * self.dim]
    }

    /// First coordinate of `X(n)`.
    #[inline]
    pub fn scalar(&self, n: usize) -> f64 {
        self.values[(n - 1) * self.dim]
    }

    /// Alphabet indices, index 0 holding `X(1)`.
    pub fn symbols(&self) -> Option<&[u32]> {
        self.symbols.as_deref()
    }

    /// Builds a trajectory from explicit scalar values (dimension 1),
    /// attaching alphabet symbols when every value belongs to `alphabet`.
    pub fn from_values(values: Vec<f64>, alphabet: Option<&FiniteLaw>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("empty trajectory".into()));
        }
        let symbols = match alphabet {
            Some(law) => Some(
                values
                    .iter()
                    .map(|v| {
                        law.index_of(&[*v]).map(|i| i as u32).ok_or_else(|| {
                            Error::InvalidArgument(format!("value {v} not in the alphabet"))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?,
            ),
            None => None,
        };
        Ok(Self { dim: 1, values, symbols, seed: 0, stream: 0 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn symmetric_two_state_is_uniform() {
        let pi = stationary_distribution(&[vec![0.7, 0.3], vec![0.3, 0.7]]).unwrap();
        assert_relative_eq!(pi[0], 0.5, epsilon = 1e-14);
        assert_relative_eq!(pi[1], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn identical_rows_are_already_stationary() {
        let w = vec![0.2, 0.5, 0.3];
        let pi = stationary_distribution(&vec![w.clone(); 3]).unwrap();
        for (a, b) in pi.iter().zip(&w) {
            assert_relative_eq!(a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn flip_chain_is_periodic() {
        assert_eq!(stationary_distribution(&[vec![0.0, 1.0], vec![1.0, 0.0]]), Err(Error::Periodic(2)));
    }

    #[test]
    fn reducible_and_non_stochastic_inputs_are_rejected() {
        assert_eq!(
            stationary_distribution(&[vec![1.0, 0.0], vec![0.5, 0.5]]),
            Err(Error::NotIrreducible)
        );
        assert!(matches!(
            stationary_distribution(&[vec![0.6, 0.3], vec![0.5, 0.5]]),
            Err(Error::NotStochastic(_))
        ));
        assert!(matches!(
            stationary_distribution(&[vec![1.2, -0.2], vec![0.5, 0.5]]),
            Err(Error::NotStochastic(_))
        ));
    }

    #[test]
    fn degenerate_bernoulli_is_constant() {
        let m = ProcessModel::bernoulli(1.0).unwrap();
        let t = m.sample_trajectory(5, 3).unwrap();
        assert_eq!((1..=5).map(|n| t.scalar(n)).collect::<Vec<_>>(), vec![1.0; 5]);
    }

    #[test]
    fn trajectories_are_deterministic() {
        let m = ProcessModel::two_state(0.3, 0.2).unwrap();
        assert_eq!(m.sample_trajectory(1000, 9).unwrap(), m.sample_trajectory(1000, 9).unwrap());
        assert_ne!(m.sample_trajectory(1000, 9).unwrap(), m.sample_trajectory(1000, 10).unwrap());
    }

    #[test]
    fn pair_law_of_symmetric_chain() {
        let m = ProcessModel::two_state(0.3, 0.3).unwrap();
        let law = m.pair_law(1).unwrap();
        let expect = [0.35, 0.15, 0.15, 0.35];
        for (a, b) in law.table.iter().zip(expect) {
            assert_relative_eq!(*a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn iid_pair_laws_are_products_and_lag_zero_is_diagonal() {
        let m = ProcessModel::from_spec(ModelSpec::Iid { probs: vec![0.2, 0.5, 0.3], observable: None }).unwrap();
        let law = m.pair_law(3).unwrap();
        assert_eq!(law.kind, PairLawKind::Product);
        assert_relative_eq!(law.prob(1, 2), 0.15, epsilon = 1e-15);
        let diag = m.pair_law(0).unwrap();
        for x in 0..3 {
            for y in 0..3 {
                if x != y {
                    assert_eq!(diag.prob(x, y), 0.0);
                }
            }
        }
    }

    #[test]
    fn dyadic_pair_law_is_unsupported() {
        let m = ProcessModel::from_spec(ModelSpec::DyadicMap { observable: DyadicObservable::Identity }).unwrap();
        assert!(matches!(m.pair_law(1), Err(Error::UnsupportedModel(_))));
    }

    #[test]
    fn merged_observable_values_share_a_symbol() {
        let m = ProcessModel::from_spec(ModelSpec::FiniteMarkov {
            transition: vec![vec![0.5, 0.25, 0.25], vec![0.25, 0.5, 0.25], vec![0.25, 0.25, 0.5]],
            observable: Some(vec![vec![1.0], vec![0.0], vec![1.0]]),
        })
        .unwrap();
        let law = m.marginal().as_finite().unwrap();
        assert_eq!(law.support, vec![vec![1.0], vec![0.0]]);
        assert_relative_eq!(law.probs[0], 2.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn dyadic_orbit_stays_uniform() {
        let m = ProcessModel::from_spec(ModelSpec::DyadicMap { observable: DyadicObservable::Identity }).unwrap();
        let t = m.sample_trajectory(200_000, 5).unwrap();
        let mean = (1..=t.len()).map(|n| t.scalar(n)).sum::<f64>() / t.len() as f64;
        // the orbit is correlated (lag-k correlation 2^-k), so allow a wider band than i.i.d.
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
        // no digit depletion: late values still spread over [0, 1)
        let tail_mean = (190_001..=200_000).map(|n| t.scalar(n)).sum::<f64>() / 10_000.0;
        assert!((tail_mean - 0.5).abs() < 0.03, "tail mean {tail_mean}");
    }

    #[test]
    fn empirical_lag_zero_is_diagonal() {
        let m = ProcessModel::bernoulli(0.5).unwrap();
        let law = m.empirical_pair_law(0, 10_000, 1).unwrap();
        assert_eq!(law.prob(0, 1), 0.0);
        assert_eq!(law.prob(1, 0), 0.0);
        assert!(matches!(m.empirical_pair_law(1, 100, 1), Err(Error::TooFewSamples { .. })));
    }
}
