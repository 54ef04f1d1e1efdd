//! Mass partitions: finite, nonincreasing sequences of positive masses.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::stats::pairwise_sum;

/// Slack allowed on the total mass of any partition.
pub const TOTAL_SLACK: f64 = 1e-12;
/// Tolerance for partitions that must carry unit mass.
pub const NORMALIZED_TOL: f64 = 1e-9;

/// State of a coalescent or fragmentation: masses sorted nonincreasing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MassPartition {
    masses: Vec<f64>,
    total: f64,
}

impl MassPartition {
    /// Builds a partition from arbitrary positive masses (sorted internally, stable).
    pub fn new(mut masses: Vec<f64>) -> Result<Self> {
        if let Some(bad) = masses.iter().find(|m| !(m.is_finite() && **m > 0.0)) {
            return Err(invalid(format!("masses must be positive and finite, got {bad}")));
        }
        masses.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let total = pairwise_sum(&masses);
        if total > 1.0 + TOTAL_SLACK {
            return Err(invalid(format!("total mass {total} exceeds 1")));
        }
        Ok(Self { masses, total })
    }

    /// `n` clusters of mass `1/n`.
    pub fn monodisperse(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("monodisperse partition needs n ≥ 1"));
        }
        Ok(Self {
            masses: vec![1.0 / n as f64; n],
            total: 1.0,
        })
    }

    /// The single-fragment partition (1).
    pub fn unit() -> Self {
        Self {
            masses: vec![1.0],
            total: 1.0,
        }
    }

    /// Invariant-preserving constructor for already sorted masses with a known total.
    pub(crate) fn from_sorted(masses: Vec<f64>, total: f64) -> Self {
        debug_assert!(masses.windows(2).all(|w| w[0] >= w[1]));
        Self { masses, total }
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn into_masses(self) -> Vec<f64> {
        self.masses
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn largest(&self) -> f64 {
        self.masses.first().copied().unwrap_or(0.0)
    }

    /// The `rank`-th largest mass (1-based), zero past the end.
    pub fn nth_largest(&self, rank: usize) -> f64 {
        if rank == 0 {
            return 0.0;
        }
        self.masses.get(rank - 1).copied().unwrap_or(0.0)
    }

    pub fn is_normalized(&self) -> bool {
        (self.total - 1.0).abs() <= NORMALIZED_TOL
    }

    /// Fails with [`Error::Unnormalized`] unless the total is 1 within 10⁻⁹.
    pub fn ensure_normalized(&self) -> Result<()> {
        if self.is_normalized() {
            Ok(())
        } else {
            Err(Error::Unnormalized(self.total))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_bad_masses() {
        assert!(MassPartition::new(vec![0.5, 0.0]).is_err());
        assert!(MassPartition::new(vec![0.5, -0.1]).is_err());
        assert!(MassPartition::new(vec![0.7, 0.7]).is_err());
        assert!(MassPartition::new(vec![f64::NAN]).is_err());
        assert!(MassPartition::new(vec![0.3, 0.3]).unwrap().ensure_normalized().is_err());
    }

    #[test]
    fn ranks() {
        let p = MassPartition::new(vec![0.2, 0.5, 0.3]).unwrap();
        assert_eq!(p.masses(), &[0.5, 0.3, 0.2]);
        assert_eq!(p.nth_largest(2), 0.3);
        assert_eq!(p.nth_largest(4), 0.0);
        assert!(p.is_normalized());
    }

    proptest! {
        #[test]
        fn sorted_positive_with_consistent_total(raw in proptest::collection::vec(1e-6f64..1.0, 1..40)) {
            let s: f64 = raw.iter().sum();
            let masses: Vec<f64> = raw.iter().map(|m| m / s).collect();
            let p = MassPartition::new(masses.clone()).unwrap();
            prop_assert!(p.masses().windows(2).all(|w| w[0] >= w[1]));
            prop_assert!(p.masses().iter().all(|&m| m > 0.0));
            prop_assert!((p.total() - masses.iter().sum::<f64>()).abs() < 1e-12);
            prop_assert!(p.total() <= 1.0 + TOTAL_SLACK);
        }
    }
}
