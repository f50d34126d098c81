//! Coagulation and fragmentation kernels with Hölder metadata and box suprema.
//!
//! Builtin families:
//!
//! | coagulation            | formula                                  | `lambda`        |
//! |------------------------|------------------------------------------|-----------------|
//! | `constant`             | `1`                                      | 1 (kappa = 0)   |
//! | `sum_power`            | `(x^a + y^a)^b`                          | `a b`           |
//! | `cross_power`          | `x^a y^b + x^b y^a`, `0 <= a <= b <= 1`  | `a + b`         |
//! | `product_over_sum`     | `(x y)^(a/2) (x + y)^(-b)`               | `a - b`         |
//! | `sum_power_abs_diff`   | `(x^a + y^a)^b abs(x^c - y^c)`           | `a b + c`       |
//! | `exp_cutoff`           | `(x + y)^l exp(-b (x + y)^(-a))`         | `l`             |
//!
//! Fragmentation: `constant` (`F = 1`) and `power` (`F = x^a`).
//!
//! Hölder constants are only used for diagnostic bound lines. Where no closed
//! form is at hand the constant is fitted from secant slopes on a log grid and
//! multiplied by [`FIT_SAFETY`]; such values carry `fitted = true`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::rng::ReplicaRng;
use crate::scalar::Scalar;

/// Safety factor applied to numerically fitted Hölder constants.
pub const FIT_SAFETY: f64 = 1.1;

/// Symmetric user rate function `K(x, y)`.
pub type CoagFn<T> = Arc<dyn Fn(T, T) -> T + Send + Sync>;
/// User rate function `F(x)`.
pub type FragFn<T> = Arc<dyn Fn(T) -> T + Send + Sync>;
/// Map `a -> bound` for a user supplied Hölder constant or box majorant.
pub type BoundFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Hölder index and constant valid on `(0, a]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Holder {
    pub index: f64,
    pub constant: f64,
    pub fitted: bool,
}

impl Holder {
    fn exact(index: f64, constant: f64) -> Self {
        Self { index, constant, fitted: false }
    }

    /// Re-expresses the bound for a smaller index `lambda <= index` on
    /// `(0, a]`, using that `u -> u^r` is `r a^(index - lambda)` Lipschitz
    /// on `(0, a^lambda]` with `r = index / lambda`.
    pub fn at_index(self, lambda: f64, a: f64) -> Option<Self> {
        if self.constant == 0.0 {
            return Some(Self { index: lambda, ..self });
        }
        if lambda > self.index + 1e-15 || lambda <= 0.0 {
            return None;
        }
        let r = self.index / lambda;
        Some(Self {
            index: lambda,
            constant: self.constant * r * a.powf(self.index - lambda),
            fitted: self.fitted,
        })
    }
}

#[derive(Clone)]
pub struct CustomCoagulation<T> {
    pub name: String,
    pub rate: CoagFn<T>,
    pub lambda: f64,
    pub kappa: Option<BoundFn>,
    pub sup_box: Option<BoundFn>,
}

#[derive(Clone)]
pub struct CustomFragmentation<T> {
    pub name: String,
    pub rate: FragFn<T>,
    pub alpha: f64,
    pub mu: Option<BoundFn>,
    pub sup_box: Option<BoundFn>,
}

#[derive(Clone)]
pub enum CoagulationKernel<T> {
    Zero,
    Constant,
    SumPower { alpha: T, beta: T },
    CrossPower { alpha: T, beta: T },
    ProductOverSum { alpha: T, beta: T },
    SumPowerAbsDiff { alpha: T, beta: T, gamma: T },
    ExpCutoff { lambda: T, alpha: T, beta: T },
    Custom(CustomCoagulation<T>),
}

#[derive(Clone)]
pub enum FragmentationKernel<T> {
    Zero,
    Constant,
    Power { alpha: T },
    Custom(CustomFragmentation<T>),
}

fn param_err(msg: String) -> Error {
    Error::Parameter(msg)
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(param_err(format!("{name} must be finite and > 0, got {v}")))
    }
}

fn unit_interval(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 && v <= 1.0 {
        Ok(())
    } else {
        Err(param_err(format!("{name} must lie in (0, 1], got {v}")))
    }
}

fn check_mass<T: Scalar>(position: usize, x: T) -> Result<()> {
    if x.is_finite() && x >= T::zero() {
        Ok(())
    } else {
        Err(Error::InvalidMass { position, value: x.as_f64() })
    }
}

fn check_box(a: f64) -> Result<()> {
    if a.is_finite() && a > 0.0 {
        Ok(())
    } else {
        Err(param_err(format!("box bound must be finite and > 0, got {a}")))
    }
}

/// Log grid of `n` points on `[a * 1e-8, a]`.
fn log_grid(a: f64, n: usize) -> Vec<f64> {
    let lo = (a * 1e-8).ln();
    let hi = a.ln();
    (0..n)
        .map(|k| (lo + (hi - lo) * k as f64 / (n - 1) as f64).exp())
        .map(|x| x.min(a))
        .collect()
}

/// Largest secant slope of `f(., y)` in the coordinate `x^index`, over a
/// log grid for both arguments, times the safety factor.
fn fit_two_arg(f: impl Fn(f64, f64) -> f64, index: f64, a: f64) -> f64 {
    let xs = log_grid(a, 600);
    let ys = log_grid(a, 200);
    let xs_pow: Vec<f64> = xs.iter().map(|x| x.powf(index)).collect();
    let mut best = 0.0f64;
    for &y in &ys {
        let vals: Vec<f64> = xs.iter().map(|&x| f(x, y)).collect();
        for k in 0..xs.len() - 1 {
            let dx = xs_pow[k + 1] - xs_pow[k];
            if dx > 0.0 {
                best = best.max((vals[k + 1] - vals[k]).abs() / dx);
            }
        }
    }
    best * FIT_SAFETY
}

impl<T: Scalar> CoagulationKernel<T> {
    pub fn constant() -> Self {
        Self::Constant
    }

    pub fn zero() -> Self {
        Self::Zero
    }

    pub fn sum_power(alpha: f64, beta: f64) -> Result<Self> {
        positive("sum_power.alpha", alpha)?;
        positive("sum_power.beta", beta)?;
        unit_interval("sum_power lambda = alpha * beta", alpha * beta)?;
        Ok(Self::SumPower { alpha: T::lit(alpha), beta: T::lit(beta) })
    }

    pub fn cross_power(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha >= 0.0 && alpha <= beta && beta <= 1.0) {
            return Err(param_err(format!(
                "cross_power needs 0 <= alpha <= beta <= 1, got alpha = {alpha}, beta = {beta}"
            )));
        }
        unit_interval("cross_power lambda = alpha + beta", alpha + beta)?;
        Ok(Self::CrossPower { alpha: T::lit(alpha), beta: T::lit(beta) })
    }

    pub fn product_over_sum(alpha: f64, beta: f64) -> Result<Self> {
        unit_interval("product_over_sum.alpha", alpha)?;
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(param_err(format!("product_over_sum.beta must be >= 0, got {beta}")));
        }
        unit_interval("product_over_sum lambda = alpha - beta", alpha - beta)?;
        Ok(Self::ProductOverSum { alpha: T::lit(alpha), beta: T::lit(beta) })
    }

    pub fn sum_power_abs_diff(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        positive("sum_power_abs_diff.alpha", alpha)?;
        positive("sum_power_abs_diff.beta", beta)?;
        unit_interval("sum_power_abs_diff.gamma", gamma)?;
        unit_interval(
            "sum_power_abs_diff lambda = alpha * beta + gamma",
            alpha * beta + gamma,
        )?;
        Ok(Self::SumPowerAbsDiff {
            alpha: T::lit(alpha),
            beta: T::lit(beta),
            gamma: T::lit(gamma),
        })
    }

    pub fn exp_cutoff(lambda: f64, alpha: f64, beta: f64) -> Result<Self> {
        unit_interval("exp_cutoff.lambda", lambda)?;
        positive("exp_cutoff.alpha", alpha)?;
        positive("exp_cutoff.beta", beta)?;
        Ok(Self::ExpCutoff {
            lambda: T::lit(lambda),
            alpha: T::lit(alpha),
            beta: T::lit(beta),
        })
    }

    /// User kernel. `kappa` and `sup_box` map a box bound `a` to the Hölder
    /// constant and to a majorant of `K` on `(0, a]^2`. The rate function is
    /// probed for symmetry and sign on a fixed sample.
    pub fn custom(
        name: impl Into<String>,
        rate: CoagFn<T>,
        lambda: f64,
        kappa: Option<BoundFn>,
        sup_box: Option<BoundFn>,
    ) -> Result<Self> {
        unit_interval("custom coagulation lambda", lambda)?;
        let kernel = Self::Custom(CustomCoagulation {
            name: name.into(),
            rate,
            lambda,
            kappa,
            sup_box,
        });
        let mut rng = ReplicaRng::new(0x5eed, 0);
        for _ in 0..256 {
            let x = T::lit(rng.uniform_open() * 4.0);
            let y = T::lit(rng.uniform_open() * 4.0);
            let (k1, k2) = (kernel.rate(x, y), kernel.rate(y, x));
            if !k1.is_finite() || k1 < T::zero() {
                return Err(Error::Config(format!(
                    "custom coagulation kernel returned {k1} at ({x}, {y})"
                )));
            }
            if (k1 - k2).abs().as_f64() > 1e-12 * k1.as_f64().max(1.0) {
                return Err(Error::Config(format!(
                    "custom coagulation kernel is not symmetric at ({x}, {y})"
                )));
            }
        }
        Ok(kernel)
    }

    pub fn name(&self) -> &str {
        match self {
            Self::Zero => "zero",
            Self::Constant => "constant",
            Self::SumPower { .. } => "sum_power",
            Self::CrossPower { .. } => "cross_power",
            Self::ProductOverSum { .. } => "product_over_sum",
            Self::SumPowerAbsDiff { .. } => "sum_power_abs_diff",
            Self::ExpCutoff { .. } => "exp_cutoff",
            Self::Custom(c) => &c.name,
        }
    }

    /// Named parameters, for reports.
    pub fn params(&self) -> Vec<(&'static str, f64)> {
        match self {
            Self::Zero | Self::Constant => vec![],
            Self::SumPower { alpha, beta }
            | Self::CrossPower { alpha, beta }
            | Self::ProductOverSum { alpha, beta } => {
                vec![("alpha", alpha.as_f64()), ("beta", beta.as_f64())]
            }
            Self::SumPowerAbsDiff { alpha, beta, gamma } => vec![
                ("alpha", alpha.as_f64()),
                ("beta", beta.as_f64()),
                ("gamma", gamma.as_f64()),
            ],
            Self::ExpCutoff { lambda, alpha, beta } => vec![
                ("lambda", lambda.as_f64()),
                ("alpha", alpha.as_f64()),
                ("beta", beta.as_f64()),
            ],
            Self::Custom(c) => vec![("lambda", c.lambda)],
        }
    }

    /// The catalog index `lambda` of the family.
    pub fn lambda(&self) -> f64 {
        match self {
            Self::Zero | Self::Constant => 1.0,
            Self::SumPower { alpha, beta } => alpha.as_f64() * beta.as_f64(),
            Self::CrossPower { alpha, beta } => alpha.as_f64() + beta.as_f64(),
            Self::ProductOverSum { alpha, beta } => alpha.as_f64() - beta.as_f64(),
            Self::SumPowerAbsDiff { alpha, beta, gamma } => {
                alpha.as_f64() * beta.as_f64() + gamma.as_f64()
            }
            Self::ExpCutoff { lambda, .. } => lambda.as_f64(),
            Self::Custom(c) => c.lambda,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Self::Zero)
    }

    /// `K(x, y)`, validating the masses.
    pub fn eval(&self, x: T, y: T) -> Result<T> {
        check_mass(1, x)?;
        check_mass(2, y)?;
        Ok(self.rate(x, y))
    }

    /// `K(x, y)` for masses already known to be valid.
    #[inline]
    pub fn rate(&self, x: T, y: T) -> T {
        let zero = T::zero();
        if x <= zero || y <= zero {
            return zero;
        }
        match self {
            Self::Zero => zero,
            Self::Constant => T::one(),
            Self::SumPower { alpha, beta } => {
                let one = T::one();
                let s = if *alpha == one { x + y } else { x.powf(*alpha) + y.powf(*alpha) };
                if *beta == one {
                    s
                } else {
                    s.powf(*beta)
                }
            }
            Self::CrossPower { alpha, beta } => {
                x.powf(*alpha) * y.powf(*beta) + x.powf(*beta) * y.powf(*alpha)
            }
            Self::ProductOverSum { alpha, beta } => {
                (x * y).powf(*alpha / T::lit(2.0)) * (x + y).powf(-*beta)
            }
            Self::SumPowerAbsDiff { alpha, beta, gamma } => {
                (x.powf(*alpha) + y.powf(*alpha)).powf(*beta)
                    * (x.powf(*gamma) - y.powf(*gamma)).abs()
            }
            Self::ExpCutoff { lambda, alpha, beta } => {
                let s = x + y;
                s.powf(*lambda) * (-*beta * s.powf(-*alpha)).exp()
            }
            Self::Custom(c) => (c.rate)(x, y),
        }
    }

    fn rate_f64(&self, x: f64, y: f64) -> f64 {
        self.rate(T::lit(x), T::lit(y)).as_f64()
    }

    /// Native Hölder index and constant on `(0, a]`. The index can be
    /// smaller than [`lambda`](Self::lambda) for parameter ranges where the
    /// catalog index does not control the kernel near the origin.
    pub fn holder(&self, a: f64) -> Result<Holder> {
        check_box(a)?;
        let h = match self {
            Self::Zero | Self::Constant => Holder::exact(1.0, 0.0),
            Self::SumPower { alpha, beta } => {
                let (al, be) = (alpha.as_f64(), beta.as_f64());
                if be <= 1.0 {
                    Holder::exact(al * be, 1.0)
                } else {
                    Holder::exact(al, be * (2.0 * a.powf(al)).powf(be - 1.0))
                }
            }
            Self::CrossPower { alpha, beta } => {
                let (al, be) = (alpha.as_f64(), beta.as_f64());
                if al > 0.0 {
                    Holder::exact(al, a.powf(be) * (1.0 + be / al))
                } else {
                    Holder::exact(be, 1.0)
                }
            }
            Self::ProductOverSum { alpha, beta } => {
                let (al, be) = (alpha.as_f64(), beta.as_f64());
                let index = (al - be).min(al / 2.0);
                self.fitted(index, a)
            }
            Self::SumPowerAbsDiff { alpha, gamma, .. } => {
                let index = gamma.as_f64().min(alpha.as_f64()).min(self.lambda());
                self.fitted(index, a)
            }
            Self::ExpCutoff { lambda, .. } => self.fitted(lambda.as_f64(), a),
            Self::Custom(c) => match &c.kappa {
                Some(k) => Holder::exact(c.lambda, k(a)),
                None => {
                    return Err(Error::Config(format!(
                        "custom coagulation kernel '{}' has no Hölder constant",
                        c.name
                    )))
                }
            },
        };
        Ok(h)
    }

    fn fitted(&self, index: f64, a: f64) -> Holder {
        Holder {
            index,
            constant: fit_two_arg(|x, y| self.rate_f64(x, y), index, a),
            fitted: true,
        }
    }

    /// Hölder constant for the index `lambda` on `(0, a]`. Fails when
    /// `lambda` exceeds the native index.
    pub fn holder_at(&self, lambda: f64, a: f64) -> Result<Holder> {
        let h = self.holder(a)?;
        h.at_index(lambda, a).ok_or_else(|| {
            Error::Parameter(format!(
                "{} kernel is only Hölder of index {} near the origin, cannot use lambda = {lambda}",
                self.name(),
                h.index
            ))
        })
    }

    /// An upper bound of `K` on `(0, a]^2`.
    pub fn sup_box(&self, a: T) -> Result<T> {
        check_box(a.as_f64())?;
        let value = match self {
            Self::Zero => T::zero(),
            Self::Constant => T::one(),
            Self::SumPower { .. } | Self::CrossPower { .. } | Self::ExpCutoff { .. } => {
                self.rate(a, a)
            }
            Self::ProductOverSum { alpha, beta } => {
                let (al, be) = (alpha.as_f64(), beta.as_f64());
                let shape = |r: f64| r.powf(al / 2.0) * (1.0 + r).powf(-be);
                let mut best = shape(1.0);
                if be >= al && be > 0.0 {
                    best = best.max(shape(al / (2.0 * be - al)));
                }
                T::lit(a.as_f64().powf(al - be) * best)
            }
            Self::SumPowerAbsDiff { alpha, beta, gamma } => {
                let (al, be, ga) = (alpha.as_f64(), beta.as_f64(), gamma.as_f64());
                let shape = |r: f64| (1.0 + r.powf(al)).powf(be) * (1.0 - r.powf(ga));
                let best = maximize_on_unit(shape);
                T::lit(a.as_f64().powf(self.lambda()) * best * (1.0 + 1e-6))
            }
            Self::Custom(c) => match &c.sup_box {
                Some(s) => T::lit(s(a.as_f64())),
                None => {
                    return Err(Error::Config(format!(
                        "custom coagulation kernel '{}' has no box majorant; thinning needs one",
                        c.name
                    )))
                }
            },
        };
        Ok(value)
    }

    /// Tries to falsify the declared majorant and Hölder constant on
    /// `(0, a]` by sampling. Returns a configuration error on the first
    /// violation found.
    pub fn validate_on_box(&self, a: f64, samples: usize, seed: u64) -> Result<()> {
        check_box(a)?;
        let sup = self.sup_box(T::lit(a))?.as_f64();
        let holder = self.holder(a).ok();
        let mut rng = ReplicaRng::new(seed, 0);
        for _ in 0..samples {
            let (x, y) = (rng.uniform_open() * a, rng.uniform_open() * a);
            let k = self.rate_f64(x, y);
            if k > sup * (1.0 + 1e-9) + 1e-12 {
                return Err(Error::Config(format!(
                    "{} kernel: K({x}, {y}) = {k} exceeds the box majorant {sup} for a = {a}",
                    self.name()
                )));
            }
            if let Some(h) = holder {
                let (xt, yt) = (rng.uniform_open() * a, rng.uniform_open() * a);
                let lhs = (k - self.rate_f64(xt, yt)).abs();
                let rhs = h.constant
                    * ((x.powf(h.index) - xt.powf(h.index)).abs()
                        + (y.powf(h.index) - yt.powf(h.index)).abs());
                if lhs > rhs * (1.0 + 1e-9) + 1e-12 {
                    return Err(Error::Config(format!(
                        "{} kernel: Hölder bound fails at ({x}, {y}), ({xt}, {yt}) on (0, {a}]",
                        self.name()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Maximum of a continuous function on `[0, 1]`: grid search then golden
/// section refinement around the best grid point.
fn maximize_on_unit(f: impl Fn(f64) -> f64) -> f64 {
    let n = 2000;
    let mut best_k = 0;
    let mut best = f(0.0);
    for k in 1..=n {
        let v = f(k as f64 / n as f64);
        if v > best {
            best = v;
            best_k = k;
        }
    }
    let h = 1.0 / n as f64;
    let (mut lo, mut hi) = (
        (best_k as f64 * h - h).max(0.0),
        (best_k as f64 * h + h).min(1.0),
    );
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let c = hi - g * (hi - lo);
        let d = lo + g * (hi - lo);
        if f(c) > f(d) {
            hi = d;
        } else {
            lo = c;
        }
    }
    best.max(f(0.5 * (lo + hi)))
}

impl<T: Scalar> FragmentationKernel<T> {
    pub fn constant() -> Self {
        Self::Constant
    }

    pub fn zero() -> Self {
        Self::Zero
    }

    pub fn power(alpha: f64) -> Result<Self> {
        positive("power.alpha", alpha)?;
        Ok(Self::Power { alpha: T::lit(alpha) })
    }

    pub fn custom(
        name: impl Into<String>,
        rate: FragFn<T>,
        alpha: f64,
        mu: Option<BoundFn>,
        sup_box: Option<BoundFn>,
    ) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(param_err(format!("custom fragmentation alpha must be >= 0, got {alpha}")));
        }
        let kernel = Self::Custom(CustomFragmentation { name: name.into(), rate, alpha, mu, sup_box });
        let mut rng = ReplicaRng::new(0x5eed, 1);
        for _ in 0..256 {
            let x = T::lit(rng.uniform_open() * 4.0);
            let f = kernel.rate(x);
            if !f.is_finite() || f < T::zero() {
                return Err(Error::Config(format!(
                    "custom fragmentation kernel returned {f} at {x}"
                )));
            }
        }
        Ok(kernel)
    }

    pub fn name(&self) -> &str {
        match self {
            Self::Zero => "zero",
            Self::Constant => "constant",
            Self::Power { .. } => "power",
            Self::Custom(c) => &c.name,
        }
    }

    pub fn params(&self) -> Vec<(&'static str, f64)> {
        match self {
            Self::Zero | Self::Constant => vec![],
            Self::Power { alpha } => vec![("alpha", alpha.as_f64())],
            Self::Custom(c) => vec![("alpha", c.alpha)],
        }
    }

    /// The Hölder index `alpha`.
    pub fn alpha(&self) -> f64 {
        match self {
            Self::Zero | Self::Constant => 0.0,
            Self::Power { alpha } => alpha.as_f64(),
            Self::Custom(c) => c.alpha,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Self::Zero)
    }

    pub fn eval(&self, x: T) -> Result<T> {
        check_mass(1, x)?;
        Ok(self.rate(x))
    }

    #[inline]
    pub fn rate(&self, x: T) -> T {
        if x <= T::zero() {
            return T::zero();
        }
        match self {
            Self::Zero => T::zero(),
            Self::Constant => T::one(),
            Self::Power { alpha } => {
                if *alpha == T::one() {
                    x
                } else {
                    x.powf(*alpha)
                }
            }
            Self::Custom(c) => (c.rate)(x),
        }
    }

    /// Hölder index and constant `mu_a` on `(0, a]`.
    pub fn holder(&self, a: f64) -> Result<Holder> {
        check_box(a)?;
        match self {
            Self::Zero | Self::Constant => Ok(Holder::exact(0.0, 0.0)),
            Self::Power { alpha } => Ok(Holder::exact(alpha.as_f64(), 1.0)),
            Self::Custom(c) => c.mu.as_ref().map(|m| Holder::exact(c.alpha, m(a))).ok_or_else(|| {
                Error::Config(format!(
                    "custom fragmentation kernel '{}' has no Hölder constant",
                    c.name
                ))
            }),
        }
    }

    /// An upper bound of `F` on `(0, a]`.
    pub fn sup_box(&self, a: T) -> Result<T> {
        check_box(a.as_f64())?;
        match self {
            Self::Zero => Ok(T::zero()),
            Self::Constant => Ok(T::one()),
            Self::Power { .. } => Ok(self.rate(a)),
            Self::Custom(c) => c.sup_box.as_ref().map(|s| T::lit(s(a.as_f64()))).ok_or_else(|| {
                Error::Config(format!(
                    "custom fragmentation kernel '{}' has no box majorant; thinning needs one",
                    c.name
                ))
            }),
        }
    }

    pub fn validate_on_box(&self, a: f64, samples: usize, seed: u64) -> Result<()> {
        check_box(a)?;
        let sup = self.sup_box(T::lit(a))?.as_f64();
        let holder = self.holder(a).ok();
        let mut rng = ReplicaRng::new(seed, 1);
        for _ in 0..samples {
            let x = rng.uniform_open() * a;
            let f = self.rate(T::lit(x)).as_f64();
            if f > sup * (1.0 + 1e-9) + 1e-12 {
                return Err(Error::Config(format!(
                    "{} kernel: F({x}) = {f} exceeds the box majorant {sup} for a = {a}",
                    self.name()
                )));
            }
            if let Some(h) = holder {
                let xt = rng.uniform_open() * a;
                let lhs = (f - self.rate(T::lit(xt)).as_f64()).abs();
                let rhs = h.constant * (x.powf(h.index) - xt.powf(h.index)).abs();
                if lhs > rhs * (1.0 + 1e-9) + 1e-12 {
                    return Err(Error::Config(format!(
                        "{} kernel: Hölder bound fails at ({x}, {xt}) on (0, {a}]",
                        self.name()
                    )));
                }
            }
        }
        Ok(())
    }
}

impl<T: fmt::Debug> fmt::Debug for CoagulationKernel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => write!(f, "Zero"),
            Self::Constant => write!(f, "Constant"),
            Self::SumPower { alpha, beta } => write!(f, "SumPower({alpha:?}, {beta:?})"),
            Self::CrossPower { alpha, beta } => write!(f, "CrossPower({alpha:?}, {beta:?})"),
            Self::ProductOverSum { alpha, beta } => {
                write!(f, "ProductOverSum({alpha:?}, {beta:?})")
            }
            Self::SumPowerAbsDiff { alpha, beta, gamma } => {
                write!(f, "SumPowerAbsDiff({alpha:?}, {beta:?}, {gamma:?})")
            }
            Self::ExpCutoff { lambda, alpha, beta } => {
                write!(f, "ExpCutoff({lambda:?}, {alpha:?}, {beta:?})")
            }
            Self::Custom(c) => write!(f, "Custom({:?}, lambda = {})", c.name, c.lambda),
        }
    }
}

impl<T: fmt::Debug> fmt::Debug for FragmentationKernel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => write!(f, "Zero"),
            Self::Constant => write!(f, "Constant"),
            Self::Power { alpha } => write!(f, "Power({alpha:?})"),
            Self::Custom(c) => write!(f, "Custom({:?}, alpha = {})", c.name, c.alpha),
        }
    }
}
