//! Ordered mass sequences and the coalescence / fragmentation event maps.
//!
//! A state is the finite, non-increasing list of strictly positive particle
//! masses. Absent particles are implicit zeros: `get(k)` past the end yields
//! zero, which is how distances between sequences of different lengths are
//! padded.
//!
//! Indices in the public API are 1-based.

use std::cmp::Ordering;

use crate::dislocation::DislocationAtom;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Default)]
pub struct MassSequence<T> {
    masses: Vec<T>,
}

/// Descending comparison used by every sort in the crate.
#[inline]
pub(crate) fn descending<T: Scalar>(a: &T, b: &T) -> Ordering {
    b.partial_cmp(a).unwrap_or(Ordering::Equal)
}

pub(crate) fn check_lambda<T: Scalar>(lambda: T) -> Result<()> {
    if lambda.is_finite() && lambda > T::zero() && lambda <= T::one() {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "lambda must lie in (0, 1], got {lambda}"
        )))
    }
}

/// Slot at which a freshly merged particle of mass `x` is inserted into a
/// sorted slice, reproducing the stable reorder of the raw sequence.
#[inline]
pub(crate) fn merge_slot<T: Scalar>(sorted: &[T], x: T) -> usize {
    sorted.partition_point(|&e| e >= x)
}

/// Slot for a fragment of mass `f`. Fragments are inserted smallest first so
/// that equal fragments keep their order and precede equal pre-existing masses.
#[inline]
pub(crate) fn fragment_slot<T: Scalar>(sorted: &[T], f: T) -> usize {
    sorted.partition_point(|&e| e > f)
}

impl<T: Scalar> MassSequence<T> {
    pub fn empty() -> Self {
        Self { masses: Vec::new() }
    }

    /// Drops zeros and sorts in decreasing order. Equal masses keep their
    /// input order.
    pub fn reorder(raw: &[T]) -> Result<Self> {
        for (position, &value) in raw.iter().enumerate() {
            if !value.is_finite() || value < T::zero() {
                return Err(Error::InvalidMass {
                    position: position + 1,
                    value: value.as_f64(),
                });
            }
        }
        let mut masses: Vec<T> = raw.iter().copied().filter(|&x| x > T::zero()).collect();
        masses.sort_by(descending);
        Ok(Self { masses })
    }

    /// `count` particles of identical mass.
    pub fn uniform(count: usize, mass: T) -> Result<Self> {
        Self::reorder(&vec![mass; count])
    }

    /// Wraps an already sorted, strictly positive vector.
    pub(crate) fn from_sorted_unchecked(masses: Vec<T>) -> Self {
        debug_assert!(masses.windows(2).all(|w| w[0] >= w[1]));
        debug_assert!(masses.iter().all(|&m| m > T::zero()));
        Self { masses }
    }

    pub fn masses(&self) -> &[T] {
        &self.masses
    }

    pub fn into_vec(self) -> Vec<T> {
        self.masses
    }

    /// Number of particles `N`.
    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    /// `m_k` with zero padding (1-based).
    pub fn get(&self, k: usize) -> T {
        if k == 0 {
            return T::zero();
        }
        self.masses.get(k - 1).copied().unwrap_or_else(T::zero)
    }

    pub fn total_mass(&self) -> T {
        self.masses.iter().copied().sum()
    }

    /// `sum_k m_k^lambda`.
    pub fn norm(&self, lambda: T) -> Result<T> {
        check_lambda(lambda)?;
        Ok(self.norm_unchecked(lambda))
    }

    pub(crate) fn norm_unchecked(&self, lambda: T) -> T {
        lambda_norm(&self.masses, lambda)
    }

    /// Keeps the `n` largest masses (the sequence `m^n`).
    pub fn truncate(&self, n: usize) -> Self {
        Self {
            masses: self.masses.iter().copied().take(n).collect(),
        }
    }

    /// Merges particles `i < j`.
    pub fn coalesce(&self, i: usize, j: usize) -> Result<Self> {
        let n = self.len();
        if i == 0 || i >= j || j > n {
            return Err(Error::Index(format!(
                "coalescence needs 1 <= i < j <= {n}, got i = {i}, j = {j}"
            )));
        }
        let mut raw = Vec::with_capacity(n - 1);
        for (k, &m) in self.masses.iter().enumerate() {
            let slot = k + 1;
            if slot == i {
                raw.push(self.masses[i - 1] + self.masses[j - 1]);
            } else if slot != j {
                raw.push(m);
            }
        }
        raw.sort_by(descending);
        Ok(Self { masses: raw })
    }

    /// Replaces particle `i` by the fragments `theta_k * m_i`.
    pub fn fragment(&self, i: usize, theta: &DislocationAtom<T>) -> Result<Self> {
        let n = self.len();
        if i == 0 || i > n {
            return Err(Error::Index(format!(
                "fragmentation needs 1 <= i <= {n}, got i = {i}"
            )));
        }
        let parent = self.masses[i - 1];
        let mut raw = Vec::with_capacity(n + theta.len());
        for (k, &m) in self.masses.iter().enumerate() {
            if k + 1 == i {
                raw.extend(
                    theta
                        .ratios()
                        .iter()
                        .map(|&r| r * parent)
                        .filter(|&f| f > T::zero()),
                );
            } else {
                raw.push(m);
            }
        }
        raw.sort_by(descending);
        Ok(Self { masses: raw })
    }
}

pub(crate) fn lambda_norm<T: Scalar>(masses: &[T], lambda: T) -> T {
    if lambda == T::one() {
        masses.iter().copied().sum()
    } else {
        masses.iter().map(|&m| m.powf(lambda)).sum()
    }
}

/// In-place coalescence on a sorted vector. Returns the slot of the merged
/// particle (0-based). Indices are 0-based, `i < j`.
pub(crate) fn coalesce_in_place<T: Scalar>(masses: &mut Vec<T>, i: usize, j: usize) -> usize {
    let merged = masses[i] + masses[j];
    masses.remove(j);
    masses.remove(i);
    let slot = merge_slot(masses, merged);
    masses.insert(slot, merged);
    slot
}

/// In-place fragmentation of slot `i` (0-based) into `ratios * m_i`.
/// Fragments are inserted smallest first; the result equals
/// [`MassSequence::fragment`]. Returns the number of fragments inserted.
pub(crate) fn fragment_in_place<T: Scalar>(masses: &mut Vec<T>, i: usize, ratios: &[T]) -> usize {
    let parent = masses.remove(i);
    let mut inserted = 0;
    for &r in ratios.iter().rev() {
        let f = r * parent;
        if f > T::zero() {
            let slot = fragment_slot(masses, f);
            masses.insert(slot, f);
            inserted += 1;
        }
    }
    inserted
}
