//! Exact simulation of the finite coalescence-fragmentation process.
//!
//! Single trajectories use a direct SSA ([`simulate_replica`]); coupled pairs
//! share one thinned candidate stream ([`simulate_coupled`]). Every
//! trajectory is checked on the fly for mass non-increase and for the
//! particle-count bound `N_t <= N_0 + (k - 1) L^f(t)`; a violation is a hard
//! [`Error::Numeric`].

mod bounds;
mod coupled;
mod diagnostics;
mod engine;

use rayon::prelude::*;
use serde::Serialize;

use crate::dislocation::DislocationMeasure;
use crate::error::{Error, Result};
use crate::kernels::{CoagulationKernel, FragmentationKernel};
use crate::scalar::Scalar;
use crate::state::{check_lambda, lambda_norm, MassSequence};

pub use bounds::{
    compensator_bound, count_bound, coupling_constants, generator_bound, moment_bound,
    truncation_bound_line, CouplingConstants, TruncationLine,
};
pub use coupled::{simulate_coupled, CoupledRun};
pub use diagnostics::{
    compensator_check, generator_apply, martingale_residual, ResidualEstimate,
};
pub use engine::{simulate_observed, step, total_rates, Segment};

/// Relative slack of the mass non-increase assertion.
pub const MASS_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct SimConfig<T> {
    pub initial: MassSequence<T>,
    pub coag: CoagulationKernel<T>,
    pub frag: FragmentationKernel<T>,
    pub beta: DislocationMeasure<T>,
    pub horizon: f64,
    pub seed: u64,
    pub lambda: T,
    /// Censoring level `x`: a run stops at the first event with `|M|_lambda >= x`.
    pub stop_norm: Option<f64>,
    pub replicas: usize,
}

impl<T: Scalar> SimConfig<T> {
    /// Config with `lambda = 1`, no censoring and one replica.
    pub fn new(
        initial: MassSequence<T>,
        coag: CoagulationKernel<T>,
        frag: FragmentationKernel<T>,
        beta: DislocationMeasure<T>,
        horizon: f64,
        seed: u64,
    ) -> Self {
        Self {
            initial,
            coag,
            frag,
            beta,
            horizon,
            seed,
            lambda: T::one(),
            stop_norm: None,
            replicas: 1,
        }
    }

    pub fn with_lambda(mut self, lambda: T) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_stop_norm(mut self, x: f64) -> Self {
        self.stop_norm = Some(x);
        self
    }

    pub fn with_replicas(mut self, replicas: usize) -> Self {
        self.replicas = replicas;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon >= 0.0) {
            return Err(Error::Config(format!(
                "horizon must be finite and >= 0, got {}",
                self.horizon
            )));
        }
        check_lambda(self.lambda)?;
        if self.replicas == 0 {
            return Err(Error::Config("replicas must be positive".into()));
        }
        if let Some(x) = self.stop_norm {
            let norm = self.initial.norm_unchecked(self.lambda).as_f64();
            if !(x.is_finite() && x > norm) {
                return Err(Error::Config(format!(
                    "stop_norm {x} must exceed the initial lambda-norm {norm}"
                )));
            }
        }
        Ok(())
    }

    /// Canonical text form of everything that influences a run.
    pub fn describe(&self) -> String {
        let params = |p: Vec<(&'static str, f64)>| {
            p.iter().map(|(k, v)| format!("{k}={v:?}")).collect::<Vec<_>>().join(",")
        };
        let masses: Vec<String> = self.initial.masses().iter().map(|m| format!("{:?}", m.as_f64())).collect();
        let atoms: Vec<String> = self
            .beta
            .atoms()
            .iter()
            .map(|a| {
                let r: Vec<String> = a.ratios().iter().map(|x| format!("{:?}", x.as_f64())).collect();
                format!("({})x{:?}", r.join(","), a.weight().as_f64())
            })
            .collect();
        format!(
            "initial=[{}];coag={}({});frag={}({});beta=[{}];horizon={:?};seed={};lambda={:?};stop={:?};replicas={}",
            masses.join(","),
            self.coag.name(),
            params(self.coag.params()),
            self.frag.name(),
            params(self.frag.params()),
            atoms.join(";"),
            self.horizon,
            self.seed,
            self.lambda.as_f64(),
            self.stop_norm,
            self.replicas
        )
    }

    /// 64-bit FNV-1a hash of [`describe`](Self::describe).
    pub fn fingerprint(&self) -> u64 {
        fnv1a(self.describe().as_bytes())
    }
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Event type with 1-based particle indices. `atom` is the position of the
/// atom in the measure the process runs with.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EventKind {
    Coalescence { i: usize, j: usize },
    Fragmentation { i: usize, atom: usize },
}

impl EventKind {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Coalescence { .. } => "coalescence",
            Self::Fragmentation { .. } => "fragmentation",
        }
    }

    pub fn indices(&self) -> (usize, usize) {
        match *self {
            Self::Coalescence { i, j } => (i, j),
            Self::Fragmentation { i, atom } => (i, atom),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EventRecord {
    pub time: f64,
    pub kind: EventKind,
    pub pre_count: usize,
    pub post_count: usize,
    pub pre_mass: f64,
    pub post_mass: f64,
    pub post_norm: f64,
    /// Set on the event that hit the stop norm.
    pub stopped: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<T> {
    pub config_hash: u64,
    pub replica: u64,
    /// Empty unless events were requested in [`SimOptions`].
    pub events: Vec<EventRecord>,
    pub final_state: MassSequence<T>,
    /// `T`, or the censoring time when `stopped`.
    pub end_time: f64,
    pub sup_norm_lambda: f64,
    pub sup_count: usize,
    pub initial_count: usize,
    pub coalescences: usize,
    pub fragmentations: usize,
    pub first_event_time: Option<f64>,
    pub stopped: bool,
    pub absorbed: bool,
}

impl<T> Trajectory<T> {
    pub fn event_count(&self) -> usize {
        self.coalescences + self.fragmentations
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SimOptions {
    pub record_events: bool,
    /// Compare incremental rate sums with a full recompute after every event.
    pub audit_rates: bool,
}

impl SimOptions {
    pub fn recording() -> Self {
        Self { record_events: true, audit_rates: false }
    }
}

/// Per-trajectory bookkeeping shared by the SSA and the coupled runner.
pub(crate) struct Tracker<T> {
    hash: u64,
    replica: u64,
    n0: usize,
    k_minus_one: i64,
    lambda: T,
    stop_norm: Option<f64>,
    record: bool,
    events: Vec<EventRecord>,
    mass: f64,
    sup_norm: f64,
    sup_count: usize,
    coalescences: usize,
    fragmentations: usize,
    first_event: Option<f64>,
    stopped: bool,
}

impl<T: Scalar> Tracker<T> {
    pub(crate) fn new(
        hash: u64,
        replica: u64,
        initial: &[T],
        max_fragments: usize,
        lambda: T,
        stop_norm: Option<f64>,
        record: bool,
    ) -> Self {
        Self {
            hash,
            replica,
            n0: initial.len(),
            k_minus_one: max_fragments as i64 - 1,
            lambda,
            stop_norm,
            record,
            events: Vec::new(),
            mass: initial.iter().map(|m| m.as_f64()).sum(),
            sup_norm: lambda_norm(initial, lambda).as_f64(),
            sup_count: initial.len(),
            coalescences: 0,
            fragmentations: 0,
            first_event: None,
            stopped: false,
        }
    }

    /// Books one event given the post-event state; checks the invariants and
    /// returns whether the stop norm was reached.
    pub(crate) fn record(&mut self, time: f64, kind: EventKind, pre_count: usize, post: &[T]) -> Result<bool> {
        match kind {
            EventKind::Coalescence { .. } => self.coalescences += 1,
            EventKind::Fragmentation { .. } => self.fragmentations += 1,
        }
        self.first_event.get_or_insert(time);
        let post_mass: f64 = post.iter().map(|m| m.as_f64()).sum();
        let post_norm = lambda_norm(post, self.lambda).as_f64();
        let slack = MASS_TOLERANCE.max(T::REL_TOL * 1e-3);
        if post_mass > self.mass * (1.0 + slack) {
            return Err(Error::Numeric(format!(
                "total mass increased from {} to {post_mass} at t = {time} ({kind:?})",
                self.mass
            )));
        }
        let count_cap = self.n0 as i64 + self.k_minus_one * self.fragmentations as i64;
        if post.len() as i64 > count_cap {
            return Err(Error::Numeric(format!(
                "particle count {} exceeds N_0 + (k - 1) L^f = {count_cap} at t = {time}",
                post.len()
            )));
        }
        let stop = self.stop_norm.is_some_and(|x| post_norm >= x);
        if self.record {
            self.events.push(EventRecord {
                time,
                kind,
                pre_count,
                post_count: post.len(),
                pre_mass: self.mass,
                post_mass,
                post_norm,
                stopped: stop,
            });
        }
        self.mass = post_mass;
        self.sup_norm = self.sup_norm.max(post_norm);
        self.sup_count = self.sup_count.max(post.len());
        self.stopped |= stop;
        Ok(stop)
    }

    /// Marks the run as censored because its coupled partner hit the stop norm.
    pub(crate) fn censor(&mut self) {
        self.stopped = true;
    }

    pub(crate) fn finish(self, masses: Vec<T>, end_time: f64, absorbed: bool) -> Trajectory<T> {
        Trajectory {
            config_hash: self.hash,
            replica: self.replica,
            events: self.events,
            final_state: MassSequence::from_sorted_unchecked(masses),
            end_time,
            sup_norm_lambda: self.sup_norm,
            sup_count: self.sup_count,
            initial_count: self.n0,
            coalescences: self.coalescences,
            fragmentations: self.fragmentations,
            first_event_time: self.first_event,
            stopped: self.stopped,
            absorbed,
        }
    }
}

/// One SSA trajectory on the stream `(config.seed, replica)`.
pub fn simulate_replica<T: Scalar>(config: &SimConfig<T>, replica: u64, options: SimOptions) -> Result<Trajectory<T>> {
    simulate_observed(config, replica, options, |_| {})
}

/// Replica 0 with events recorded.
pub fn simulate<T: Scalar>(config: &SimConfig<T>) -> Result<Trajectory<T>> {
    simulate_replica(config, 0, SimOptions::recording())
}

/// All `config.replicas` trajectories, in replica order. Results do not
/// depend on the size of the rayon pool.
pub fn run_replicas<T: Scalar>(config: &SimConfig<T>, options: SimOptions) -> Result<Vec<Trajectory<T>>> {
    config.validate()?;
    (0..config.replicas as u64)
        .into_par_iter()
        .map(|r| simulate_replica(config, r, options))
        .collect()
}

/// Maps every replica through `f` in parallel without keeping trajectories.
pub fn map_replicas<T, R, F>(config: &SimConfig<T>, options: SimOptions, f: F) -> Result<Vec<R>>
where
    T: Scalar,
    R: Send,
    F: Fn(Trajectory<T>) -> R + Sync + Send,
{
    config.validate()?;
    (0..config.replicas as u64)
        .into_par_iter()
        .map(|r| simulate_replica(config, r, options).map(&f))
        .collect()
}

#[cfg(test)]
mod tests;
