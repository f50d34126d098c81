//! Two processes driven by one thinned candidate stream.
//!
//! Candidates arrive from a dominating Poisson stream over the box
//! `(0, a]`, `a = max(|m|_1, |mt|_1)`, which no state can leave since mass
//! never increases. A candidate coalescence carries a uniform pair of slots
//! among `P = max(N, Nt)` and a mark `z ~ U(0, K_bar)`; each process accepts
//! it iff both slots are occupied and `z < K`. Fragmentation candidates carry
//! a slot, an atom of the full measure and `z ~ U(0, F_bar)`; a process of
//! level `n` additionally needs the atom in `Theta(n)` and applies its first
//! `n` ratios.

use crate::dislocation::DislocationAtom;
use crate::error::{Error, Result};
use crate::metrics::dist_delta_unchecked;
use crate::rng::ReplicaRng;
use crate::scalar::Scalar;
use crate::state::{coalesce_in_place, fragment_in_place, MassSequence};

use super::{EventKind, SimConfig, SimOptions, Tracker, Trajectory};

#[derive(Clone, Debug, PartialEq)]
pub struct CoupledRun<T> {
    pub first: Trajectory<T>,
    pub second: Trajectory<T>,
    /// Sup of `delta_lambda` between the two states over the event times.
    pub sup_delta: f64,
    pub candidates: usize,
}

struct Member<T> {
    masses: Vec<T>,
    level: Option<usize>,
    tracker: Tracker<T>,
}

impl<T: Scalar> Member<T> {
    fn accepts(&self, atom: &DislocationAtom<T>) -> bool {
        self.level.is_none_or(|n| atom.in_level(n))
    }
}

/// Inverse of the colexicographic ranking `r = j (j - 1) / 2 + i`, `i < j`.
fn unrank_pair(r: u64) -> (usize, usize) {
    let mut j = ((1.0 + (1.0 + 8.0 * r as f64).sqrt()) / 2.0) as u64;
    while j * (j - 1) / 2 > r {
        j -= 1;
    }
    while (j + 1) * j / 2 <= r {
        j += 1;
    }
    let i = r - j * (j - 1) / 2;
    (i as usize, j as usize)
}

/// Couples a run from `m` at level `p` with one from `mt` at level `q`.
/// `None` uses the full measure without projection. Kernels, horizon,
/// lambda, stop norm and seed come from `config`; its initial state is
/// ignored. Fragmentation records index atoms of the full `config.beta`.
pub fn simulate_coupled<T: Scalar>(
    m: &MassSequence<T>,
    mt: &MassSequence<T>,
    p: Option<usize>,
    q: Option<usize>,
    config: &SimConfig<T>,
    replica: u64,
    options: SimOptions,
) -> Result<CoupledRun<T>> {
    config.validate()?;
    if let (Some(p), Some(q)) = (p, q) {
        if p == 0 || p > q {
            return Err(Error::Config(format!("coupling levels need 1 <= p <= q, got p = {p}, q = {q}")));
        }
    }
    if p == Some(0) || q == Some(0) {
        return Err(Error::Config("coupling level must be >= 1".into()));
    }
    if let Some(x) = config.stop_norm {
        for (name, s) in [("m", m), ("mt", mt)] {
            let norm = s.norm_unchecked(config.lambda).as_f64();
            if norm >= x {
                return Err(Error::Config(format!(
                    "stop_norm {x} must exceed the initial lambda-norm {norm} of {name}"
                )));
            }
        }
    }
    let lambda = config.lambda;
    let a = m.total_mass().max(mt.total_mass());
    let (k_bar, f_bar) = if a > T::zero() {
        (config.coag.sup_box(a)?.as_f64(), config.frag.sup_box(a)?.as_f64())
    } else {
        (0.0, 0.0)
    };
    let beta = &config.beta;
    let beta_mass = beta.total_mass().as_f64();
    let hash = config.fingerprint();
    let make = |s: &MassSequence<T>, level: Option<usize>| {
        let k = match level {
            Some(n) => beta.restrict(n).max_fragments(),
            None => beta.max_fragments(),
        };
        Member {
            masses: s.masses().to_vec(),
            level,
            tracker: Tracker::new(hash, replica, s.masses(), k, lambda, config.stop_norm, options.record_events),
        }
    };
    let mut members = [make(m, p), make(mt, q)];
    let mut rng = ReplicaRng::new(config.seed, replica);
    let mut sup_delta = dist_delta_unchecked(m.masses(), mt.masses(), lambda).as_f64();
    let mut now = 0.0;
    let mut candidates = 0usize;
    let mut stopped = false;
    let horizon = config.horizon;

    while now < horizon {
        let slots = members[0].masses.len().max(members[1].masses.len());
        let pairs = (slots * slots.saturating_sub(1) / 2) as u64;
        let rc = k_bar * pairs as f64;
        let rf = f_bar * beta_mass * slots as f64;
        let total = rc + rf;
        if !(total > 0.0) {
            break;
        }
        let next = now + rng.exponential(total);
        if next > horizon {
            break;
        }
        now = next;
        candidates += 1;
        let u_kind = rng.uniform();
        let mut any = false;
        if u_kind * total < rc {
            let (i, j) = unrank_pair(rng.below(pairs));
            let z = rng.uniform() * k_bar;
            for member in members.iter_mut() {
                let n = member.masses.len();
                if j < n && z < config.coag.rate(member.masses[i], member.masses[j]).as_f64() {
                    coalesce_in_place(&mut member.masses, i, j);
                    let kind = EventKind::Coalescence { i: i + 1, j: j + 1 };
                    stopped |= member.tracker.record(now, kind, n, &member.masses)?;
                    any = true;
                }
            }
        } else {
            let i = rng.below(slots as u64) as usize;
            let atom = beta.sample_atom(rng.uniform())?;
            let z = rng.uniform() * f_bar;
            let full = &beta.atoms()[atom];
            for member in members.iter_mut() {
                let n = member.masses.len();
                if i < n
                    && z < config.frag.rate(member.masses[i]).as_f64()
                    && member.accepts(full)
                {
                    let ratios = match member.level {
                        Some(level) => &full.ratios()[..level.min(full.len())],
                        None => full.ratios(),
                    };
                    fragment_in_place(&mut member.masses, i, ratios);
                    let kind = EventKind::Fragmentation { i: i + 1, atom };
                    stopped |= member.tracker.record(now, kind, n, &member.masses)?;
                    any = true;
                }
            }
        }
        if any {
            let d = dist_delta_unchecked(&members[0].masses, &members[1].masses, lambda).as_f64();
            sup_delta = sup_delta.max(d);
        }
        if stopped {
            break;
        }
    }
    let end = if stopped { now } else { horizon };
    let [a_member, b_member] = members;
    let finish = |mut member: Member<T>| {
        if stopped {
            member.tracker.censor();
        }
        let absorbed = !stopped && total_rate_zero(&member.masses, config, member.level);
        member.tracker.finish(member.masses, end, absorbed)
    };
    Ok(CoupledRun {
        first: finish(a_member),
        second: finish(b_member),
        sup_delta,
        candidates,
    })
}

fn total_rate_zero<T: Scalar>(masses: &[T], config: &SimConfig<T>, level: Option<usize>) -> bool {
    let has_atoms = match level {
        Some(n) => config.beta.atoms().iter().any(|a| a.in_level(n)),
        None => !config.beta.is_empty(),
    };
    let frag = has_atoms && masses.iter().any(|&x| config.frag.rate(x) > T::zero());
    let coag = (0..masses.len()).any(|i| (i + 1..masses.len()).any(|j| config.coag.rate(masses[i], masses[j]) > T::zero()));
    !frag && !coag
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unrank_covers_all_pairs_in_order() {
        let mut r = 0;
        for j in 1..40usize {
            for i in 0..j {
                assert_eq!(unrank_pair(r), (i, j));
                r += 1;
            }
        }
    }
}
