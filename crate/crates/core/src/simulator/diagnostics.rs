//! Generator evaluation and path functionals built on it.

use rayon::prelude::*;

use crate::error::Result;
use crate::metrics::dist_d;
use crate::scalar::Scalar;
use crate::state::MassSequence;
use crate::stats::mean_se;

use super::bounds::compensator_bound;
use super::engine::simulate_observed;
use super::{SimConfig, SimOptions};

/// `L Phi(m)`: the finite double sum over pairs and (particle, atom).
pub fn generator_apply<T, P>(phi: &P, m: &MassSequence<T>, config: &SimConfig<T>) -> Result<f64>
where
    T: Scalar,
    P: Fn(&MassSequence<T>) -> f64 + ?Sized,
{
    event_sum(m, config, |next| phi(next) - phi(m))
}

/// Rate-weighted sum of `g(next state)` over all possible events.
fn event_sum<T: Scalar>(
    m: &MassSequence<T>,
    config: &SimConfig<T>,
    mut g: impl FnMut(&MassSequence<T>) -> f64,
) -> Result<f64> {
    let masses = m.masses();
    let n = masses.len();
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let k = config.coag.rate(masses[i], masses[j]).as_f64();
            if k > 0.0 {
                total += k * g(&m.coalesce(i + 1, j + 1)?);
            }
        }
    }
    for (i, &x) in masses.iter().enumerate() {
        let f = config.frag.rate(x).as_f64();
        if f <= 0.0 {
            continue;
        }
        for atom in config.beta.atoms() {
            total += f * atom.weight().as_f64() * g(&m.fragment(i + 1, atom)?);
        }
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResidualEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub replicas: usize,
    /// Largest `|L Phi|` met on an integrated holding interval.
    pub max_abs_generator: f64,
    /// Largest `|M|_lambda` over those intervals.
    pub max_norm: f64,
}

impl ResidualEstimate {
    /// `|mean| <= z * std_error`, with exact zeros accepted.
    pub fn within(&self, z: f64) -> bool {
        self.mean.abs() <= z * self.std_error || self.mean == 0.0
    }
}

/// Monte-Carlo estimate of `E[Phi(M(T ^ tau)) - Phi(m) - int_0^{T ^ tau} L Phi(M_s) ds]`
/// over `replicas` trajectories (streams `0..replicas`).
pub fn martingale_residual<T, P>(phi: &P, config: &SimConfig<T>, replicas: usize) -> Result<ResidualEstimate>
where
    T: Scalar,
    P: Fn(&MassSequence<T>) -> f64 + Sync,
{
    config.validate()?;
    let phi0 = phi(&config.initial);
    let per_path: Vec<(f64, f64, f64)> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let mut integral = 0.0;
            let mut max_gen = 0.0f64;
            let mut max_norm = 0.0f64;
            let mut failure = None;
            let traj = simulate_observed(config, r, SimOptions::default(), |seg| {
                if seg.end <= seg.start || failure.is_some() {
                    return;
                }
                let state = MassSequence::from_sorted_unchecked(seg.masses.to_vec());
                match generator_apply(phi, &state, config) {
                    Ok(lphi) => {
                        integral += lphi * (seg.end - seg.start);
                        max_gen = max_gen.max(lphi.abs());
                        max_norm = max_norm.max(state.norm_unchecked(config.lambda).as_f64());
                    }
                    Err(e) => failure = Some(e),
                }
            })?;
            if let Some(e) = failure {
                return Err(e);
            }
            Ok((phi(&traj.final_state) - phi0 - integral, max_gen, max_norm))
        })
        .collect::<Result<_>>()?;
    let residuals: Vec<f64> = per_path.iter().map(|r| r.0).collect();
    let (mean, std_error) = mean_se(&residuals);
    Ok(ResidualEstimate {
        mean,
        std_error,
        replicas,
        max_abs_generator: per_path.iter().map(|r| r.1).fold(0.0, f64::max),
        max_norm: per_path.iter().map(|r| r.2).fold(0.0, f64::max),
    })
}

/// Exact compensator of `sum_k 2^-k |dM_k|` along one trajectory, and its
/// bound from [`compensator_bound`] at the run's end time.
pub fn compensator_check<T: Scalar>(config: &SimConfig<T>, replica: u64) -> Result<(f64, f64)> {
    let mut value = 0.0;
    let mut failure = None;
    let traj = simulate_observed(config, replica, SimOptions::default(), |seg| {
        if seg.end <= seg.start || failure.is_some() {
            return;
        }
        let state = MassSequence::from_sorted_unchecked(seg.masses.to_vec());
        match event_sum(&state, config, |next| dist_d(next, &state).as_f64()) {
            Ok(rate) => value += rate * (seg.end - seg.start),
            Err(e) => failure = Some(e),
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok((value, compensator_bound(config, traj.end_time)?))
}
