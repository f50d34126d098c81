//! Finite dislocation measures: weighted atoms on the ratio set.
//!
//! An atom `theta = (theta_1 >= theta_2 >= ... > 0)` with `theta_1 < 1` and
//! `sum theta_k <= 1` says a particle of mass `x` splits into `theta_k * x`.
//! The measure is a finite list of atoms with positive weights. The level-`n`
//! truncation keeps atoms with `theta_1 <= 1 - 1/n` and projects each one on
//! its first `n` ratios.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::scalar::{le_with_slack, Scalar};
use crate::state::{check_lambda, descending};

/// Slack allowed on `sum theta_k <= 1` before an atom is rejected.
pub const MASS_GAIN_SLACK: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct DislocationAtom<T> {
    ratios: Vec<T>,
    weight: T,
}

impl<T: Scalar> DislocationAtom<T> {
    /// Validates and normalizes an atom: ratios are sorted in decreasing
    /// order and zeros are dropped.
    pub fn new(ratios: Vec<T>, weight: T) -> Result<Self> {
        if !weight.is_finite() || weight <= T::zero() {
            return Err(Error::InvalidAtom(format!(
                "weight must be finite and positive, got {weight}"
            )));
        }
        for &r in &ratios {
            if !r.is_finite() || r < T::zero() {
                return Err(Error::InvalidAtom(format!(
                    "ratio {r} is not in [0, 1)"
                )));
            }
        }
        let mut ratios: Vec<T> = ratios.into_iter().filter(|&r| r > T::zero()).collect();
        ratios.sort_by(descending);
        if let Some(&first) = ratios.first() {
            if first >= T::one() {
                return Err(Error::InvalidAtom(format!(
                    "degenerate dislocation excluded: theta_1 = {first} must be < 1"
                )));
            }
        }
        let total: T = ratios.iter().copied().sum();
        if total.as_f64() > 1.0 + MASS_GAIN_SLACK {
            return Err(Error::InvalidAtom(format!(
                "ratios sum to {total} > 1: a dislocation may not gain mass"
            )));
        }
        Ok(Self { ratios, weight })
    }

    pub fn ratios(&self) -> &[T] {
        &self.ratios
    }

    pub fn weight(&self) -> T {
        self.weight
    }

    /// Number of non-zero fragments.
    pub fn len(&self) -> usize {
        self.ratios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratios.is_empty()
    }

    /// `theta_1`, zero for the empty atom.
    pub fn largest(&self) -> T {
        self.ratios.first().copied().unwrap_or_else(T::zero)
    }

    /// `theta_k` (1-based) with zero padding.
    pub fn ratio(&self, k: usize) -> T {
        if k == 0 {
            return T::zero();
        }
        self.ratios.get(k - 1).copied().unwrap_or_else(T::zero)
    }

    /// Keeps the first `n` ratios.
    pub fn project(&self, n: usize) -> Self {
        Self {
            ratios: self.ratios.iter().copied().take(n).collect(),
            weight: self.weight,
        }
    }

    /// Whether the atom lies in `{theta_1 <= 1 - 1/n}`.
    pub fn in_level(&self, n: usize) -> bool {
        if n == 0 {
            return false;
        }
        let bound = T::one() - T::one() / T::from_usize_lossy(n);
        self.largest() <= bound
    }

    pub fn power_sum(&self, lambda: T) -> T {
        self.ratios.iter().map(|&r| r.powf(lambda)).sum()
    }

    /// `sum_{k>=2} theta_k^lambda`.
    pub fn tail_power_sum(&self, lambda: T) -> T {
        self.ratios.iter().skip(1).map(|&r| r.powf(lambda)).sum()
    }

    /// `sum_{k>n} theta_k^lambda`.
    pub fn power_sum_beyond(&self, n: usize, lambda: T) -> T {
        self.ratios.iter().skip(n).map(|&r| r.powf(lambda)).sum()
    }

    /// `C(theta) = sum_{k>=2} theta_k^lambda + (1 - theta_1^lambda)`.
    pub fn dislocation_cost(&self, lambda: T) -> T {
        self.tail_power_sum(lambda) + (T::one() - self.largest().powf(lambda))
    }

    /// Integrand of `C_beta^lambda`: `sum_{k>=2} theta_k^lambda + (1 - theta_1)^lambda`.
    pub fn moment_integrand(&self, lambda: T) -> T {
        self.tail_power_sum(lambda) + (T::one() - self.largest()).powf(lambda)
    }

    fn order_key(&self, other: &Self) -> Ordering {
        let n = self.len().max(other.len());
        for k in 1..=n {
            match self.ratio(k).partial_cmp(&other.ratio(k)) {
                Some(Ordering::Equal) | None => continue,
                Some(ord) => return ord,
            }
        }
        self.weight
            .partial_cmp(&other.weight)
            .unwrap_or(Ordering::Equal)
    }
}

/// One labelled check of the ratio inequalities a measure must satisfy.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasureCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct DislocationMeasure<T> {
    atoms: Vec<DislocationAtom<T>>,
}

impl<T: Scalar> DislocationMeasure<T> {
    /// Builds a measure; atoms are put in a fixed lexicographic order
    /// (ratios, then weight) so that atom indices are replayable.
    pub fn new(mut atoms: Vec<DislocationAtom<T>>) -> Self {
        atoms.sort_by(|a, b| a.order_key(b));
        Self { atoms }
    }

    pub fn empty() -> Self {
        Self { atoms: Vec::new() }
    }

    /// Single atom `(1/2, 1/2)` with weight one.
    pub fn binary_half() -> Self {
        let half = T::lit(0.5);
        Self::new(vec![DislocationAtom::new(vec![half, half], T::one())
            .expect("valid preset")])
    }

    /// Looks up a named preset.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "binary_half" => Some(Self::binary_half()),
            "none" | "empty" => Some(Self::empty()),
            _ => None,
        }
    }

    pub fn atoms(&self) -> &[DislocationAtom<T>] {
        &self.atoms
    }

    pub fn atom(&self, index: usize) -> Option<&DislocationAtom<T>> {
        self.atoms.get(index)
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `beta(Theta)`.
    pub fn total_mass(&self) -> T {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    /// Largest fragment count `k` over the atoms.
    pub fn max_fragments(&self) -> usize {
        self.atoms.iter().map(DislocationAtom::len).max().unwrap_or(0)
    }

    /// `C_beta^lambda`.
    pub fn c_beta_lambda(&self, lambda: T) -> Result<T> {
        check_lambda(lambda)?;
        Ok(self
            .atoms
            .iter()
            .map(|a| a.weight * a.moment_integrand(lambda))
            .sum())
    }

    /// The level-`n` measure `beta_n`.
    pub fn restrict(&self, n: usize) -> Self {
        let atoms = self
            .atoms
            .iter()
            .filter(|a| a.in_level(n))
            .map(|a| a.project(n))
            .collect();
        Self::new(atoms)
    }

    /// Smallest level from which `restrict` is the identity.
    pub fn stable_level(&self) -> usize {
        let by_count = self.max_fragments().max(1);
        let theta_max = self
            .atoms
            .iter()
            .map(|a| a.largest())
            .fold(T::zero(), T::max);
        let guess = (T::one() / (T::one() - theta_max)).floor().to_usize().unwrap_or(1);
        let mut n = guess.saturating_sub(1).max(1);
        // 1 - 1/n is rounded, step until the membership test agrees
        while !self.atoms.iter().all(|a| a.in_level(n)) {
            n += 1;
        }
        by_count.max(n)
    }

    /// The error drivers `(A(n), B(n))` of a level-`n` truncation.
    pub fn truncation_tails(&self, n: usize, lambda: T) -> Result<(T, T)> {
        check_lambda(lambda)?;
        let mut a = T::zero();
        let mut b = T::zero();
        for atom in &self.atoms {
            a = a + atom.weight * atom.power_sum_beyond(n, lambda);
            if !atom.in_level(n) {
                b = b + atom.weight * atom.dislocation_cost(lambda);
            }
        }
        Ok((a, b))
    }

    /// Inverse-CDF atom selection for `u` in `[0, 1)`.
    pub fn sample_atom(&self, u: f64) -> Result<usize> {
        if self.atoms.is_empty() {
            return Err(Error::EmptyMeasure);
        }
        let target = T::lit(u.clamp(0.0, 1.0)) * self.total_mass();
        let mut cumulative = T::zero();
        for (k, atom) in self.atoms.iter().enumerate() {
            cumulative = cumulative + atom.weight;
            if target < cumulative {
                return Ok(k);
            }
        }
        Ok(self.atoms.len() - 1)
    }

    /// Per-atom ratio inequalities and their integrated forms.
    pub fn check_bounds(&self, lambda: T) -> Result<Vec<MeasureCheck>> {
        let c = self.c_beta_lambda(lambda)?.as_f64();
        let mut checks = Vec::new();
        let mut push = |name: String, lhs: f64, rhs: f64| {
            checks.push(MeasureCheck {
                pass: le_with_slack::<T>(lhs, rhs),
                name,
                lhs,
                rhs,
            });
        };
        let mut mass_loss = 0.0;
        let mut gain = 0.0;
        for (k, atom) in self.atoms.iter().enumerate() {
            let t1 = atom.largest().as_f64();
            let l = lambda.as_f64();
            push(format!("atom{k}:1-t1^l<=1-t1"), 1.0 - t1.powf(l), 1.0 - t1);
            push(format!("atom{k}:1-t1<=(1-t1)^l"), 1.0 - t1, (1.0 - t1).powf(l));
            let excess = atom.power_sum(lambda).as_f64() - 1.0;
            push(
                format!("atom{k}:sum-1<=tail"),
                excess,
                atom.tail_power_sum(lambda).as_f64(),
            );
            let w = atom.weight.as_f64();
            mass_loss += w * (1.0 - t1);
            gain += w * excess.max(0.0);
        }
        push("int(1-t1)<=C".into(), mass_loss, c);
        push("int(sum-1)+<=C".into(), gain, c);
        Ok(checks)
    }
}
