//! Direct SSA with incrementally maintained rate sums.
//!
//! `rows[i] = sum_{j != i} K(m_i, m_j)` and `frag[i] = F(m_i)` are kept
//! aligned with the sorted mass vector. An event touches O(N) kernel values,
//! and the rows are rebuilt from scratch every `REFRESH_EVERY` events.

use crate::dislocation::DislocationMeasure;
use crate::error::{Error, Result};
use crate::kernels::{CoagulationKernel, FragmentationKernel};
use crate::rng::ReplicaRng;
use crate::scalar::Scalar;
use crate::state::{fragment_slot, merge_slot, MassSequence};

use super::{EventKind, EventRecord, SimConfig, SimOptions, Tracker, Trajectory};

pub(crate) const REFRESH_EVERY: usize = 1 << 16;
const AUDIT_TOL: f64 = 1e-9;

/// A holding interval `[start, end)` of the path together with its state.
#[derive(Clone, Copy, Debug)]
pub struct Segment<'a, T> {
    pub start: f64,
    pub end: f64,
    pub masses: &'a [T],
}

/// `(rho_c, rho_f)` summed over occupied slots.
pub fn total_rates<T: Scalar>(
    state: &MassSequence<T>,
    coag: &CoagulationKernel<T>,
    frag: &FragmentationKernel<T>,
    beta: &DislocationMeasure<T>,
) -> (f64, f64) {
    let m = state.masses();
    let mut rho_c = 0.0;
    for i in 0..m.len() {
        for j in i + 1..m.len() {
            rho_c += coag.rate(m[i], m[j]).as_f64();
        }
    }
    let f: f64 = m.iter().map(|&x| frag.rate(x).as_f64()).sum();
    (rho_c, beta.total_mass().as_f64() * f)
}

/// 0-based event chosen by the SSA.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Move {
    Coalesce(usize, usize),
    Fragment(usize, usize),
}

impl Move {
    fn kind(self) -> EventKind {
        match self {
            Move::Coalesce(i, j) => EventKind::Coalescence { i: i + 1, j: j + 1 },
            Move::Fragment(i, atom) => EventKind::Fragmentation { i: i + 1, atom },
        }
    }
}

/// Index `k` with `sum_{l<k} w_l <= target < sum_{l<=k} w_l`, skipping
/// `skip`. Falls back to the last positive weight when rounding leaves the
/// target past the end.
fn pick(weights: impl Iterator<Item = f64>, target: f64, skip: Option<usize>) -> Option<(usize, f64)> {
    let mut cum = 0.0;
    let mut last = None;
    for (k, w) in weights.enumerate() {
        if Some(k) == skip || w <= 0.0 {
            continue;
        }
        if target < cum + w {
            return Some((k, target - cum));
        }
        cum += w;
        last = Some(k);
    }
    last.map(|k| (k, 0.0))
}

struct Rates<T> {
    masses: Vec<T>,
    rows: Vec<f64>,
    frag: Vec<f64>,
    since_refresh: usize,
}

impl<T: Scalar> Rates<T> {
    fn new(masses: Vec<T>, coag: &CoagulationKernel<T>, frag: &FragmentationKernel<T>) -> Self {
        let mut r = Self { rows: Vec::new(), frag: Vec::new(), masses, since_refresh: 0 };
        r.refresh(coag, frag);
        r
    }

    fn full_rows(&self, coag: &CoagulationKernel<T>) -> Vec<f64> {
        let m = &self.masses;
        let mut rows = vec![0.0; m.len()];
        for i in 0..m.len() {
            for j in i + 1..m.len() {
                let k = coag.rate(m[i], m[j]).as_f64();
                rows[i] += k;
                rows[j] += k;
            }
        }
        rows
    }

    fn refresh(&mut self, coag: &CoagulationKernel<T>, frag: &FragmentationKernel<T>) {
        self.rows = self.full_rows(coag);
        self.frag = self.masses.iter().map(|&x| frag.rate(x).as_f64()).collect();
        self.since_refresh = 0;
    }

    fn audit(&self, coag: &CoagulationKernel<T>) -> Result<()> {
        let full = self.full_rows(coag);
        let scale = full.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        for (k, (&inc, &exact)) in self.rows.iter().zip(&full).enumerate() {
            if (inc - exact).abs() > AUDIT_TOL * scale.max(f64::MIN_POSITIVE) {
                return Err(Error::Numeric(format!(
                    "incremental rate row {k} drifted: {inc} vs recomputed {exact}"
                )));
            }
        }
        Ok(())
    }

    fn draw(
        &self,
        coag: &CoagulationKernel<T>,
        beta: &DislocationMeasure<T>,
        beta_mass: f64,
        rng: &mut ReplicaRng,
    ) -> Result<Option<(f64, Move)>> {
        let twice_c: f64 = self.rows.iter().sum();
        let rho_c = 0.5 * twice_c;
        let sum_f: f64 = self.frag.iter().sum();
        let rho_f = beta_mass * sum_f;
        let total = rho_c + rho_f;
        if !(total > 0.0) {
            return Ok(None);
        }
        if !total.is_finite() {
            return Err(Error::Numeric(format!("total jump rate is {total}")));
        }
        let dt = rng.exponential(total);
        let u_kind = rng.uniform();
        let u_sel = rng.uniform();
        let mv = if u_kind * total < rho_c {
            let (i, rest) = pick(self.rows.iter().copied(), u_sel * twice_c, None)
                .ok_or_else(|| Error::Numeric("no coalescing pair with positive rate".into()))?;
            let mi = self.masses[i];
            let weights = self.masses.iter().map(|&x| coag.rate(mi, x).as_f64());
            let (j, _) = pick(weights, rest, Some(i))
                .ok_or_else(|| Error::Numeric("no coalescence partner with positive rate".into()))?;
            Move::Coalesce(i.min(j), i.max(j))
        } else {
            let (i, _) = pick(self.frag.iter().copied(), u_sel * sum_f, None)
                .ok_or_else(|| Error::Numeric("no fragmenting particle with positive rate".into()))?;
            Move::Fragment(i, beta.sample_atom(rng.uniform())?)
        };
        Ok(Some((dt, mv)))
    }

    fn coalesce(&mut self, i: usize, j: usize, coag: &CoagulationKernel<T>, frag: &FragmentationKernel<T>) {
        let (mi, mj) = (self.masses[i], self.masses[j]);
        let merged = mi + mj;
        let mut new_row = 0.0;
        for k in 0..self.masses.len() {
            if k == i || k == j {
                continue;
            }
            let mk = self.masses[k];
            let kn = coag.rate(mk, merged).as_f64();
            new_row += kn;
            let r = self.rows[k] + kn - coag.rate(mk, mi).as_f64() - coag.rate(mk, mj).as_f64();
            self.rows[k] = r.max(0.0);
        }
        for v in [j, i] {
            self.masses.remove(v);
            self.rows.remove(v);
            self.frag.remove(v);
        }
        let slot = merge_slot(&self.masses, merged);
        self.masses.insert(slot, merged);
        self.rows.insert(slot, new_row);
        self.frag.insert(slot, frag.rate(merged).as_f64());
    }

    fn fragment(&mut self, i: usize, ratios: &[T], coag: &CoagulationKernel<T>, frag: &FragmentationKernel<T>) {
        let parent = self.masses[i];
        let pieces: Vec<T> = ratios.iter().map(|&r| r * parent).filter(|&f| f > T::zero()).collect();
        let mut piece_rows = vec![0.0; pieces.len()];
        for k in 0..self.masses.len() {
            if k == i {
                continue;
            }
            let mk = self.masses[k];
            let mut delta = -coag.rate(mk, parent).as_f64();
            for (l, &f) in pieces.iter().enumerate() {
                let kf = coag.rate(mk, f).as_f64();
                delta += kf;
                piece_rows[l] += kf;
            }
            self.rows[k] = (self.rows[k] + delta).max(0.0);
        }
        for a in 0..pieces.len() {
            for b in a + 1..pieces.len() {
                let kab = coag.rate(pieces[a], pieces[b]).as_f64();
                piece_rows[a] += kab;
                piece_rows[b] += kab;
            }
        }
        self.masses.remove(i);
        self.rows.remove(i);
        self.frag.remove(i);
        for (l, &f) in pieces.iter().enumerate().rev() {
            let slot = fragment_slot(&self.masses, f);
            self.masses.insert(slot, f);
            self.rows.insert(slot, piece_rows[l]);
            self.frag.insert(slot, frag.rate(f).as_f64());
        }
    }

    fn apply(&mut self, mv: Move, beta: &DislocationMeasure<T>, coag: &CoagulationKernel<T>, frag: &FragmentationKernel<T>) {
        match mv {
            Move::Coalesce(i, j) => self.coalesce(i, j, coag, frag),
            Move::Fragment(i, atom) => {
                let ratios = beta.atoms()[atom].ratios();
                self.fragment(i, ratios, coag, frag)
            }
        }
        self.since_refresh += 1;
        if self.since_refresh >= REFRESH_EVERY {
            self.refresh(coag, frag);
        }
    }
}

/// One SSA step from `state` at time `now`, with rates computed afresh.
/// Returns `None` when the state is absorbing.
pub fn step<T: Scalar>(
    state: &MassSequence<T>,
    now: f64,
    rng: &mut ReplicaRng,
    config: &SimConfig<T>,
) -> Result<Option<(EventRecord, MassSequence<T>)>> {
    let (coag, frag, beta) = (&config.coag, &config.frag, &config.beta);
    let mut rates = Rates::new(state.masses().to_vec(), coag, frag);
    let Some((dt, mv)) = rates.draw(coag, beta, beta.total_mass().as_f64(), rng)? else {
        return Ok(None);
    };
    rates.apply(mv, beta, coag, frag);
    let next = MassSequence::from_sorted_unchecked(rates.masses);
    let post_norm = next.norm_unchecked(config.lambda).as_f64();
    let record = EventRecord {
        time: now + dt,
        kind: mv.kind(),
        pre_count: state.len(),
        post_count: next.len(),
        pre_mass: state.total_mass().as_f64(),
        post_mass: next.total_mass().as_f64(),
        post_norm,
        stopped: config.stop_norm.is_some_and(|x| post_norm >= x),
    };
    Ok(Some((record, next)))
}

/// SSA trajectory that reports every holding interval to `observer`,
/// including the last one, which ends at the horizon or at the censoring
/// time (then with zero length).
pub fn simulate_observed<T, O>(
    config: &SimConfig<T>,
    replica: u64,
    options: SimOptions,
    mut observer: O,
) -> Result<Trajectory<T>>
where
    T: Scalar,
    O: FnMut(Segment<'_, T>),
{
    config.validate()?;
    let (coag, frag, beta) = (&config.coag, &config.frag, &config.beta);
    let beta_mass = beta.total_mass().as_f64();
    let mut rng = ReplicaRng::new(config.seed, replica);
    let mut tracker = Tracker::new(
        config.fingerprint(),
        replica,
        config.initial.masses(),
        beta.max_fragments(),
        config.lambda,
        config.stop_norm,
        options.record_events,
    );
    let mut rates = Rates::new(config.initial.masses().to_vec(), coag, frag);
    let horizon = config.horizon;
    let mut now = 0.0;
    let mut absorbed = false;
    let mut stopped = false;
    while now < horizon {
        let Some((dt, mv)) = rates.draw(coag, beta, beta_mass, &mut rng)? else {
            absorbed = true;
            break;
        };
        let next = now + dt;
        if next > horizon {
            break;
        }
        observer(Segment { start: now, end: next, masses: &rates.masses });
        let pre_count = rates.masses.len();
        rates.apply(mv, beta, coag, frag);
        if options.audit_rates {
            rates.audit(coag)?;
        }
        now = next;
        if tracker.record(now, mv.kind(), pre_count, &rates.masses)? {
            stopped = true;
            break;
        }
    }
    let end = if stopped { now } else { horizon };
    observer(Segment { start: now, end, masses: &rates.masses });
    Ok(tracker.finish(rates.masses, end, absorbed))
}
