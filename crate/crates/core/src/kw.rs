//! The Kiefer-Wolfowitz workload vector of a c-server FCFS queue.
//!
//! Coordinates are the ordered residual workloads of the servers. An arrival
//! bringing work `s` joins the least-loaded server; between arrivals every
//! coordinate drains at unit rate and is clamped at zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WorkloadVector(Vec<f64>);

impl WorkloadVector {
    pub fn zeros(servers: usize) -> Self {
        Self(vec![0.0; servers])
    }

    /// Accepts an already sorted, non-negative vector.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter("workload vector needs c >= 1".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidParameter(format!("negative or non-finite workload in {values:?}")));
        }
        if values.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidParameter(format!("workload vector {values:?} is not sorted")));
        }
        Ok(Self(values))
    }

    /// Sorts and clamps arbitrary values.
    pub fn from_unsorted(mut values: Vec<f64>) -> Result<Self> {
        for v in values.iter_mut() {
            *v = positive_part(*v);
        }
        values.sort_by(f64::total_cmp);
        Self::new(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn servers(&self) -> usize {
        self.0.len()
    }

    /// Total residual work `|V|`.
    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn zero_count(&self) -> usize {
        self.0.iter().filter(|&&v| v == 0.0).count()
    }

    /// Coordinate-wise domination `self ⊴ other`.
    pub fn dominated_by(&self, other: &Self) -> bool {
        self.0.len() == other.0.len() && self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    /// Like [`dominated_by`](Self::dominated_by) with an absolute slack, for
    /// comparing vectors produced by different arithmetic paths.
    pub fn dominated_by_within(&self, other: &Self, slack: f64) -> bool {
        self.0.len() == other.0.len() && self.0.iter().zip(&other.0).all(|(a, b)| *a <= *b + slack)
    }

    /// Adds `s` to the smallest coordinate and restores the ordering.
    pub fn add_to_smallest(&mut self, s: f64) {
        debug_assert!(s >= 0.0);
        let v = &mut self.0;
        let x = v[0] + s;
        // Only the first coordinate moved; slide it right past smaller values.
        let mut i = 0;
        while i + 1 < v.len() && v[i + 1] < x {
            v[i] = v[i + 1];
            i += 1;
        }
        v[i] = x;
    }

    /// Drains every coordinate by `dt`, clamping at zero.
    pub fn decay(&mut self, dt: f64) {
        debug_assert!(dt >= 0.0);
        if dt == 0.0 {
            return;
        }
        for v in self.0.iter_mut() {
            *v = positive_part(*v - dt);
        }
    }
}

/// `max(x, 0)` that never produces `-0.0`.
fn positive_part(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// One step of the Kiefer-Wolfowitz recursion: `R(w + s·e − gap·f)⁺`.
pub fn kw_update(w: &WorkloadVector, s: f64, gap: f64) -> WorkloadVector {
    let mut next = w.clone();
    next.add_to_smallest(s);
    next.decay(gap);
    next
}

/// Continuous drain between arrivals: `(w − dt·f)⁺`.
pub fn kw_decay(w: &WorkloadVector, dt: f64) -> WorkloadVector {
    let mut next = w.clone();
    next.decay(dt);
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn wv(v: &[f64]) -> WorkloadVector {
        WorkloadVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn update_examples() {
        assert_eq!(kw_update(&wv(&[1.0, 3.0]), 2.0, 1.5), wv(&[1.5, 1.5]));
        assert_eq!(kw_update(&wv(&[0.0, 0.0]), 0.0, 7.0), wv(&[0.0, 0.0]));
        assert_eq!(kw_update(&wv(&[2.0, 5.0]), 1.0, 4.0), wv(&[0.0, 1.0]));
    }

    #[test]
    fn decay_examples() {
        assert_eq!(kw_decay(&wv(&[1.0, 2.5]), 1.0), wv(&[0.0, 1.5]));
        assert_eq!(kw_decay(&wv(&[0.3, 2.5, 9.0]), 0.0), wv(&[0.3, 2.5, 9.0]));
        assert_eq!(kw_decay(&wv(&[3.0, 4.0]), 10.0), wv(&[0.0, 0.0]));
    }

    #[test]
    fn clamped_zero_is_positive_zero() {
        let w = kw_decay(&wv(&[1.0]), 1.0);
        assert!(w.as_slice()[0].is_sign_positive());
    }

    #[test]
    fn rejects_unsorted_or_negative() {
        assert!(WorkloadVector::new(vec![2.0, 1.0]).is_err());
        assert!(WorkloadVector::new(vec![-1.0, 1.0]).is_err());
        assert!(WorkloadVector::new(vec![]).is_err());
        assert_eq!(WorkloadVector::from_unsorted(vec![2.0, -1.0]).unwrap(), wv(&[0.0, 2.0]));
    }

    fn sorted_vec(c: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..10.0, c).prop_map(|mut v| {
            v.sort_by(f64::total_cmp);
            v
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn update_is_monotone(
            (lo, hi) in (1usize..6).prop_flat_map(|c| (sorted_vec(c), prop::collection::vec(0.0f64..3.0, c))),
            s in 0.0f64..5.0, ds in 0.0f64..5.0, gap in 0.0f64..6.0,
        ) {
            // hi = lo + non-negative increments, re-sorted, dominates lo.
            let w = wv(&lo);
            let w2 = WorkloadVector::from_unsorted(lo.iter().zip(&hi).map(|(a, b)| a + b).collect()).unwrap();
            prop_assert!(w.dominated_by(&w2));
            prop_assert!(kw_update(&w, s, gap).dominated_by(&kw_update(&w2, s + ds, gap)));
        }

        #[test]
        fn update_output_is_sorted_and_non_negative(
            v in (1usize..8).prop_flat_map(sorted_vec), s in 0.0f64..20.0, gap in 0.0f64..20.0,
        ) {
            let out = kw_update(&wv(&v), s, gap);
            prop_assert!(out.as_slice().windows(2).all(|p| p[0] <= p[1]));
            prop_assert!(out.as_slice().iter().all(|x| *x >= 0.0));
            // Insertion matches a full sort bit for bit.
            let mut reference = v.clone();
            reference[0] += s;
            reference.sort_by(f64::total_cmp);
            let reference: Vec<f64> = reference.iter().map(|x| positive_part(x - gap)).collect();
            prop_assert_eq!(out.as_slice(), &reference[..]);
        }

        #[test]
        fn decay_composes(v in (1usize..8).prop_flat_map(sorted_vec), a in 0.0f64..5.0, b in 0.0f64..5.0) {
            let w = wv(&v);
            let two_step = kw_decay(&kw_decay(&w, a), b);
            let one_step = kw_decay(&w, a + b);
            prop_assert!(two_step.dominated_by_within(&one_step, 1e-12));
            prop_assert!(one_step.dominated_by_within(&two_step, 1e-12));
        }
    }
}
