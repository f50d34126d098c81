//! Exact reference laws for tiny systems.
//!
//! [`enumerate_states`] builds the reachable chain by breadth-first search up
//! to a jump depth `J`; events from depth-`J` states that would create a new
//! state are routed to an absorbing escape state. [`master_equation_solve`]
//! integrates the forward equation by uniformization, which keeps every term
//! non-negative and gives a computable truncation error.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::simulator::SimConfig;
use crate::state::MassSequence;
use crate::stats::poisson_tail;

/// Default cap on enumerated states.
pub const MAX_STATES: usize = 1_000_000;
/// Largest `Lambda dt` per uniformization step.
const STEP_LOAD: f64 = 20.0;
/// Poisson weight left out per uniformization step.
const SERIES_CUTOFF: f64 = 1e-14;
/// Floor added to the escaped mass in the reported error bound.
const INTEGRATION_SLACK: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum TransitionKind {
    Coalescence,
    Fragmentation,
    /// Leaves the enumerated set.
    Escape,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Transition {
    pub from: usize,
    /// Equal to `states.len()` for escapes.
    pub to: usize,
    pub rate: f64,
    pub kind: TransitionKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateGraph<T> {
    pub states: Vec<MassSequence<T>>,
    /// BFS depth of each state.
    pub depth: Vec<usize>,
    pub transitions: Vec<Transition>,
    pub max_jumps: usize,
    /// Largest total exit rate of any state.
    pub rate_bound: f64,
}

impl<T> StateGraph<T> {
    pub fn escape_index(&self) -> usize {
        self.states.len()
    }
}

/// Canonical key: masses rounded to 12 significant digits.
fn state_key<T: Scalar>(m: &MassSequence<T>) -> String {
    let mut key = String::with_capacity(m.len() * 20);
    for &x in m.masses() {
        let _ = write!(key, "{:.11e};", x.as_f64());
    }
    key
}

/// Breadth-first closure of the initial state of `config` under all events,
/// up to `max_jumps` jumps.
pub fn enumerate_states<T: Scalar>(config: &SimConfig<T>, max_jumps: usize) -> Result<StateGraph<T>> {
    enumerate_states_capped(config, max_jumps, MAX_STATES)
}

pub fn enumerate_states_capped<T: Scalar>(
    config: &SimConfig<T>,
    max_jumps: usize,
    max_states: usize,
) -> Result<StateGraph<T>> {
    let mut states = vec![config.initial.clone()];
    let mut depth = vec![0usize];
    let mut index: HashMap<String, usize> = HashMap::new();
    index.insert(state_key(&config.initial), 0);
    // (from, to or None for escape, kind) -> rate
    let mut edges: BTreeMap<(usize, Option<usize>, TransitionKind), f64> = BTreeMap::new();
    let mut cursor = 0;
    while cursor < states.len() {
        let s = states[cursor].clone();
        let d = depth[cursor];
        let frontier = d >= max_jumps;
        let mut targets: Vec<(MassSequence<T>, f64, TransitionKind)> = Vec::new();
        let m = s.masses();
        for i in 0..m.len() {
            for j in i + 1..m.len() {
                let k = config.coag.rate(m[i], m[j]).as_f64();
                if k > 0.0 {
                    targets.push((s.coalesce(i + 1, j + 1)?, k, TransitionKind::Coalescence));
                }
            }
        }
        for (i, &x) in m.iter().enumerate() {
            let f = config.frag.rate(x).as_f64();
            if f <= 0.0 {
                continue;
            }
            for atom in config.beta.atoms() {
                let r = f * atom.weight().as_f64();
                if r > 0.0 {
                    targets.push((s.fragment(i + 1, atom)?, r, TransitionKind::Fragmentation));
                }
            }
        }
        for (next, rate, kind) in targets {
            let key = state_key(&next);
            let to = match index.get(&key) {
                Some(&t) => Some(t),
                None if frontier => None,
                None => {
                    if states.len() >= max_states {
                        return Err(Error::Truncation(format!(
                            "more than {max_states} states at depth {} of {max_jumps}; {} states still unexpanded",
                            d + 1,
                            states.len() - cursor
                        )));
                    }
                    index.insert(key, states.len());
                    states.push(next);
                    depth.push(d + 1);
                    Some(states.len() - 1)
                }
            };
            let kind = if to.is_none() { TransitionKind::Escape } else { kind };
            *edges.entry((cursor, to, kind)).or_insert(0.0) += rate;
        }
        cursor += 1;
    }
    let escape = states.len();
    let transitions: Vec<Transition> = edges
        .into_iter()
        .filter(|&((from, to, _), _)| to != Some(from))
        .map(|((from, to, kind), rate)| Transition { from, to: to.unwrap_or(escape), rate, kind })
        .collect();
    let mut exit = vec![0.0; states.len()];
    for t in &transitions {
        exit[t.from] += t.rate;
    }
    let rate_bound = exit.iter().copied().fold(0.0, f64::max);
    Ok(StateGraph { states, depth, transitions, max_jumps, rate_bound })
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleSolution {
    pub time: f64,
    /// Probability of each enumerated state at `time`.
    pub probabilities: Vec<f64>,
    /// Mass absorbed by the escape state.
    pub escaped: f64,
    /// `P(Poisson(Lambda T) > J)`.
    pub poisson_tail: f64,
    /// Uniformization series weight left out.
    pub series_error: f64,
    /// Certified total-variation error of the oracle law (escape counted
    /// as unknown mass).
    pub error_bound: f64,
}

impl OracleSolution {
    /// Total probability, escaped mass included.
    pub fn total(&self) -> f64 {
        self.probabilities.iter().sum::<f64>() + self.escaped
    }
}

/// Forward-equation solution at time `t` by uniformization.
pub fn master_equation_solve<T: Scalar>(graph: &StateGraph<T>, t: f64) -> Result<OracleSolution> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::Parameter(format!("oracle time must be finite and >= 0, got {t}")));
    }
    let n = graph.states.len();
    let mut p = vec![0.0; n + 1];
    p[0] = 1.0;
    let lambda = graph.rate_bound;
    let mut series_error = 0.0;
    if t > 0.0 && lambda > 0.0 {
        let steps = (lambda * t / STEP_LOAD).ceil().max(1.0) as usize;
        let dt = t / steps as f64;
        let load = lambda * dt;
        for step in 0..steps {
            let (next, left_out) = uniformized_step(graph, &p, lambda, load)?;
            p = next;
            series_error += left_out;
            if p.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numeric(format!(
                    "non-finite probability at step {step} of {steps} (Lambda = {lambda}, dt = {dt})"
                )));
            }
        }
    }
    let escaped = p[n];
    p.truncate(n);
    let tail = poisson_tail(lambda * t, graph.max_jumps);
    let error_bound = if t == 0.0 { 0.0 } else { tail.min(escaped + INTEGRATION_SLACK + series_error) };
    Ok(OracleSolution { time: t, probabilities: p, escaped, poisson_tail: tail, series_error, error_bound })
}

/// `p exp(Q dt)` as `sum_k Pois(k; load) p P^k` with `P = I + Q / Lambda`.
fn uniformized_step<T>(graph: &StateGraph<T>, p: &[f64], lambda: f64, load: f64) -> Result<(Vec<f64>, f64)> {
    let mut term = p.to_vec();
    let mut weight = (-load).exp();
    let mut out: Vec<f64> = term.iter().map(|x| x * weight).collect();
    let mut acc = weight;
    let mut k = 0usize;
    while 1.0 - acc > SERIES_CUTOFF {
        k += 1;
        if k > 10_000 {
            return Err(Error::Numeric(format!("uniformization series did not converge (load {load})")));
        }
        let mut flow = vec![0.0; term.len()];
        for tr in &graph.transitions {
            let moved = term[tr.from] * tr.rate / lambda;
            flow[tr.from] -= moved;
            flow[tr.to] += moved;
        }
        for (x, f) in term.iter_mut().zip(&flow) {
            *x = (*x + f).max(0.0);
        }
        weight *= load / k as f64;
        acc += weight;
        for (o, x) in out.iter_mut().zip(&term) {
            *o += weight * x;
        }
    }
    Ok((out, (1.0 - acc).max(0.0)))
}

/// Oracle law of an observable of the final state.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservableLaw<K> {
    pub probabilities: BTreeMap<K, f64>,
    /// Unresolved mass (escape).
    pub escaped: f64,
    pub error_bound: f64,
}

pub fn observable_law<T: Scalar, K: Ord + Clone>(
    graph: &StateGraph<T>,
    solution: &OracleSolution,
    observable: impl Fn(&MassSequence<T>) -> K,
) -> ObservableLaw<K> {
    let mut probabilities = BTreeMap::new();
    for (s, &p) in graph.states.iter().zip(&solution.probabilities) {
        *probabilities.entry(observable(s)).or_insert(0.0) += p;
    }
    ObservableLaw { probabilities, escaped: solution.escaped, error_bound: solution.error_bound }
}

/// `(particle count, coalesced)` where "coalesced" means the state holds a
/// particle heavier than every initial particle.
pub fn count_and_coalesced<T: Scalar>(initial: &MassSequence<T>) -> impl Fn(&MassSequence<T>) -> (usize, bool) {
    let top = initial.get(1).as_f64();
    move |s| (s.len(), s.get(1).as_f64() > top * (1.0 + 1e-12))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Comparison {
    pub tv_distance: f64,
    /// `1/2 sum 3 sqrt(p (1 - p) / n)` over the oracle categories.
    pub confidence_width: f64,
    pub tolerance: f64,
    pub oracle_error: f64,
    pub samples: usize,
    pub pass: bool,
}

/// Total-variation distance between the oracle law and the empirical law
/// of `samples`. Samples outside the oracle support are compared against
/// the escaped mass.
pub fn compare_empirical<K: Ord + Clone>(law: &ObservableLaw<K>, samples: &[K], tolerance: f64) -> Result<Comparison> {
    if samples.is_empty() {
        return Err(Error::Input("empirical comparison needs at least one sample".into()));
    }
    let n = samples.len() as f64;
    let mut counts: BTreeMap<&K, usize> = BTreeMap::new();
    let mut outside = 0usize;
    for s in samples {
        if law.probabilities.contains_key(s) {
            *counts.entry(s).or_insert(0) += 1;
        } else {
            outside += 1;
        }
    }
    let mut l1 = (outside as f64 / n - law.escaped).abs();
    let mut width = 0.0;
    for (k, &p) in &law.probabilities {
        let q = counts.get(k).copied().unwrap_or(0) as f64 / n;
        l1 += (p - q).abs();
        width += 3.0 * (p * (1.0 - p) / n).max(0.0).sqrt();
    }
    let tv = 0.5 * l1;
    let width = 0.5 * width;
    Ok(Comparison {
        tv_distance: tv,
        confidence_width: width,
        tolerance,
        oracle_error: law.error_bound,
        samples: samples.len(),
        pass: tv <= tolerance + law.error_bound + width,
    })
}

/// `state<TAB>probability` lines, escape last.
pub fn export_text<T: Scalar>(graph: &StateGraph<T>, solution: &OracleSolution) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# t = {} states = {} J = {} Lambda = {}", solution.time, graph.states.len(), graph.max_jumps, graph.rate_bound);
    let _ = writeln!(out, "# error_bound = {:e} poisson_tail = {:e}", solution.error_bound, solution.poisson_tail);
    for (s, p) in graph.states.iter().zip(&solution.probabilities) {
        let masses: Vec<String> = s.masses().iter().map(|m| format!("{}", m.as_f64())).collect();
        let _ = writeln!(out, "({})\t{:.15e}", masses.join(", "), p);
    }
    let _ = writeln!(out, "escape\t{:.15e}", solution.escaped);
    out
}
