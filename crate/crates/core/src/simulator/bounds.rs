//! Closed-form envelopes that simulated runs are checked against.

use crate::dislocation::DislocationMeasure;
use crate::error::{Error, Result};
use crate::kernels::{CoagulationKernel, FragmentationKernel};
use crate::metrics::{dist_delta_unchecked, frag_ratio_constant};
use crate::scalar::Scalar;
use crate::state::MassSequence;

use super::SimConfig;

fn frag_sup<T: Scalar>(frag: &FragmentationKernel<T>, a: f64) -> Result<f64> {
    if a > 0.0 {
        Ok(frag.sup_box(T::lit(a))?.as_f64())
    } else {
        Ok(0.0)
    }
}

fn coag_sup<T: Scalar>(coag: &CoagulationKernel<T>, a: f64) -> Result<f64> {
    if a > 0.0 {
        Ok(coag.sup_box(T::lit(a))?.as_f64())
    } else {
        Ok(0.0)
    }
}

/// `|m|_lambda exp(F_bar C_beta^lambda t)`, with `F_bar = sup F` on `(0, |m|_1]`.
pub fn moment_bound<T: Scalar>(config: &SimConfig<T>, t: f64) -> Result<f64> {
    let m = &config.initial;
    let f_bar = frag_sup(&config.frag, m.total_mass().as_f64())?;
    let c = config.beta.c_beta_lambda(config.lambda)?.as_f64();
    Ok(m.norm(config.lambda)?.as_f64() * (f_bar * c * t).exp())
}

/// `N_0 exp((k - 1) F_bar beta(Theta) t)`.
pub fn count_bound<T: Scalar>(config: &SimConfig<T>, t: f64) -> Result<f64> {
    let m = &config.initial;
    let f_bar = frag_sup(&config.frag, m.total_mass().as_f64())?;
    let k = config.beta.max_fragments() as f64;
    let w = config.beta.total_mass().as_f64();
    Ok(m.len() as f64 * ((k - 1.0).max(0.0) * f_bar * w * t).exp())
}

/// Constants of the Gronwall estimate for `delta_lambda` between two
/// processes with the same kernels and measure.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingConstants {
    /// `max(|m|_1, |mt|_1)`.
    pub a: f64,
    /// Hölder constant of `K` at index `lambda` on `(0, a]`.
    pub kappa: f64,
    pub mu: f64,
    pub c_beta: f64,
    pub frag_ratio: f64,
    pub f_bar: f64,
    /// `max(|m|_1, |mt|_1)^alpha`.
    pub mass_alpha: f64,
    pub stop_norm: f64,
    /// `4 mu C_beta C mass_alpha + F_bar C_beta`, the part free of `x`.
    pub frag_part: f64,
    /// Rate `8 kappa x + frag_part`.
    pub rate: f64,
    /// `C_hat` with `rate <= C_hat (x + 1)`.
    pub c_hat: f64,
}

impl CouplingConstants {
    /// `ln(delta_0) + C_hat (x + 1) t`. Logs avoid overflow for large rates.
    pub fn log_bound(&self, delta0: f64, t: f64) -> f64 {
        delta0.ln() + self.c_hat * (self.stop_norm + 1.0) * t
    }

    /// `ln(delta_0) + rate t`, the sharper form before `C_hat` is factored out.
    pub fn log_rate_bound(&self, delta0: f64, t: f64) -> f64 {
        delta0.ln() + self.rate * t
    }
}

pub fn coupling_constants<T: Scalar>(
    coag: &CoagulationKernel<T>,
    frag: &FragmentationKernel<T>,
    beta: &DislocationMeasure<T>,
    lambda: T,
    m: &MassSequence<T>,
    mt: &MassSequence<T>,
    x: f64,
) -> Result<CouplingConstants> {
    let l = lambda.as_f64();
    let a = m.total_mass().max(mt.total_mass()).as_f64();
    if !(a > 0.0) {
        return Err(Error::Parameter("coupling constants need a non-empty state".into()));
    }
    if !(x.is_finite() && x > 0.0) {
        return Err(Error::Parameter(format!("stop norm must be > 0, got {x}")));
    }
    let kappa = coag.holder_at(l, a)?.constant;
    let fh = frag.holder(a)?;
    let alpha = frag.alpha();
    let c_beta = beta.c_beta_lambda(lambda)?.as_f64();
    let frag_ratio = frag_ratio_constant(alpha, l)?;
    let f_bar = frag_sup(frag, a)?;
    let mass_alpha = a.powf(alpha);
    let frag_part = 4.0 * fh.constant * c_beta * frag_ratio * mass_alpha + f_bar * c_beta;
    let rate = 8.0 * kappa * x + frag_part;
    let c_hat = 8.0 * kappa + frag_part;
    Ok(CouplingConstants {
        a,
        kappa,
        mu: fh.constant,
        c_beta,
        frag_ratio,
        f_bar,
        mass_alpha,
        stop_norm: x,
        frag_part,
        rate,
        c_hat,
    })
}

/// `|L Phi| <= (3/2 K_bar + 2 F_bar C_beta^lambda) a c^(1/lambda)` on
/// `{|m|_lambda <= c}` for `Phi` that is `a`-Lipschitz in `d`, with the
/// sups taken over `(0, c^(1/lambda)]`.
pub fn generator_bound<T: Scalar>(
    coag: &CoagulationKernel<T>,
    frag: &FragmentationKernel<T>,
    beta: &DislocationMeasure<T>,
    lambda: T,
    lipschitz: f64,
    c: f64,
) -> Result<f64> {
    let reach = c.powf(1.0 / lambda.as_f64());
    let k_bar = coag_sup(coag, reach)?;
    let f_bar = frag_sup(frag, reach)?;
    let c_beta = beta.c_beta_lambda(lambda)?.as_f64();
    Ok((1.5 * k_bar + 2.0 * f_bar * c_beta) * lipschitz * reach)
}

/// `(3/2 K_bar + 2 C_beta^lambda F_bar) t |m|_1`, bounding
/// `sum_k 2^-k C_k(t)` where `C_k` is the compensator of the total
/// variation of the k-th coordinate. Mass never increases, so `|m|_1` is
/// the sup of `|M|_1` and the kernel sups are taken over `(0, |m|_1]`.
pub fn compensator_bound<T: Scalar>(config: &SimConfig<T>, t: f64) -> Result<f64> {
    let a = config.initial.total_mass().as_f64();
    let k_bar = coag_sup(&config.coag, a)?;
    let f_bar = frag_sup(&config.frag, a)?;
    let c_beta = config.beta.c_beta_lambda(config.lambda)?.as_f64();
    Ok((1.5 * k_bar + 2.0 * c_beta * f_bar) * t * a)
}

/// Deterministic envelope of a level-`p` / level-`q` truncation pair.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncationLine {
    pub p: usize,
    pub q: usize,
    /// `delta_lambda(m^p, m^q)`.
    pub initial_gap: f64,
    pub a: f64,
    pub b: f64,
    /// `F_bar |m|_lambda exp(F_bar C_beta^lambda t) t`.
    pub d_hat: f64,
    /// `initial_gap + d_hat (A(p) + B(p))`.
    pub value: f64,
}

/// The bound line `delta_lambda(m^p, m^q) + D_hat (A(p) + B(p))` for the
/// initial state of `config` truncated to `p` and `q` particles.
pub fn truncation_bound_line<T: Scalar>(config: &SimConfig<T>, p: usize, q: usize, t: f64) -> Result<TruncationLine> {
    if p == 0 || p > q {
        return Err(Error::Parameter(format!("need 1 <= p <= q, got p = {p}, q = {q}")));
    }
    let m = &config.initial;
    let lambda = config.lambda;
    let (mp, mq) = (m.truncate(p), m.truncate(q));
    let initial_gap = dist_delta_unchecked(mp.masses(), mq.masses(), lambda).as_f64();
    let (a, b) = config.beta.truncation_tails(p, lambda)?;
    let (a, b) = (a.as_f64(), b.as_f64());
    let f_bar = frag_sup(&config.frag, m.total_mass().as_f64())?;
    let c = config.beta.c_beta_lambda(lambda)?.as_f64();
    let d_hat = f_bar * m.norm(lambda)?.as_f64() * (f_bar * c * t).exp() * t;
    Ok(TruncationLine { p, q, initial_gap, a, b, d_hat, value: initial_gap + d_hat * (a + b) })
}
