//! Exact continuous-time simulation of the finite additive coalescent.
//!
//! Each pair of clusters `(m_i, m_j)` merges at rate `m_i + m_j`, so the
//! total rate is `(k − 1)·total`. The merging pair is drawn by picking one
//! cluster size-biased and a second uniformly among the others:
//! `P({i, j}) = (m_i + m_j)/((k − 1)·total)` exactly, at O(k) per step.
//!
//! Times are coalescent times. The fragmentation clock `t_frag = e^{−t}`
//! is applied by callers comparing with [`crate::excursion`], never here.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::partition::MassPartition;
use crate::stats::pairwise_sum;

/// Sum of the merge rates of all pairs, `Σ_{i<j}(m_i + m_j) = (k − 1)·total`.
pub fn total_merge_rate(state: &MassPartition) -> Result<f64> {
    let k = state.len();
    if k <= 1 {
        return Err(Error::Absorbed(k));
    }
    Ok((k - 1) as f64 * state.total())
}

/// One transition of the embedded chain.
#[derive(Clone, Debug)]
pub struct Step {
    pub holding_time: f64,
    pub next: MassPartition,
    /// Indices (into the sorted input state, `i < j`) of the merged pair.
    pub pair: (usize, usize),
}

/// Draws the holding time and the next state.
pub fn step<R: Rng + ?Sized>(state: &MassPartition, rng: &mut R) -> Result<Step> {
    let rate = total_merge_rate(state)?;
    let masses = state.masses();
    let k = masses.len();
    let holding_time = Exp::new(rate).expect("positive rate").sample(rng);

    let target = rng.random::<f64>() * state.total();
    let mut acc = 0.0;
    let mut first = k - 1;
    for (idx, &m) in masses.iter().enumerate() {
        acc += m;
        if target < acc {
            first = idx;
            break;
        }
    }
    let mut second = rng.random_range(0..k - 1);
    if second >= first {
        second += 1;
    }
    let (i, j) = if first < second { (first, second) } else { (second, first) };

    let mut next: Vec<f64> = Vec::with_capacity(k - 1);
    next.extend(
        masses
            .iter()
            .enumerate()
            .filter(|&(idx, _)| idx != i && idx != j)
            .map(|(_, &m)| m),
    );
    next.push(masses[i] + masses[j]);
    next.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let total = pairwise_sum(&next);
    Ok(Step {
        holding_time,
        next: MassPartition::from_sorted(next, total),
        pair: (i, j),
    })
}

/// A path of the coalescent: the initial state and every merge event.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoalescentTrajectory {
    pub initial: MassPartition,
    /// `(event time, state just after the event)`, times strictly increasing.
    pub events: Vec<(f64, MassPartition)>,
}

impl CoalescentTrajectory {
    /// State at time `t` (right-continuous).
    pub fn state_at(&self, t: f64) -> &MassPartition {
        let idx = self.events.partition_point(|(time, _)| *time <= t);
        if idx == 0 {
            &self.initial
        } else {
            &self.events[idx - 1].1
        }
    }

    pub fn final_state(&self) -> &MassPartition {
        self.events.last().map(|e| &e.1).unwrap_or(&self.initial)
    }
}

/// Runs the chain from `initial` up to time `t_end` (may be infinite) or absorption.
pub fn simulate<R: Rng + ?Sized>(
    initial: &MassPartition,
    t_end: f64,
    rng: &mut R,
) -> Result<CoalescentTrajectory> {
    if !(t_end >= 0.0) {
        return Err(invalid(format!("t_end must be nonnegative, got {t_end}")));
    }
    let mut events = Vec::new();
    let mut time = 0.0;
    let mut state = initial.clone();
    while state.len() > 1 {
        let s = step(&state, rng)?;
        time += s.holding_time;
        if time > t_end {
            break;
        }
        state = s.next;
        events.push((time, state.clone()));
    }
    Ok(CoalescentTrajectory {
        initial: initial.clone(),
        events,
    })
}

/// State at time `duration` of the chain started from `initial`, without storing the path.
pub fn state_after<R: Rng + ?Sized>(
    initial: &MassPartition,
    duration: f64,
    rng: &mut R,
) -> Result<MassPartition> {
    if !(duration >= 0.0) {
        return Err(invalid(format!("duration must be nonnegative, got {duration}")));
    }
    let mut time = 0.0;
    let mut state = initial.clone();
    while state.len() > 1 {
        let s = step(&state, rng)?;
        time += s.holding_time;
        if time > duration {
            break;
        }
        state = s.next;
    }
    Ok(state)
}

/// `C^n(t + ½ ln n)` from the monodisperse start, approximating the standard
/// additive coalescent `C^∞(t)`.
pub fn standard_shifted_state<R: Rng + ?Sized>(n: usize, t: f64, rng: &mut R) -> Result<MassPartition> {
    let initial = MassPartition::monodisperse(n)?;
    let duration = t + 0.5 * (n as f64).ln();
    if !(duration >= 0.0) {
        return Err(invalid(format!(
            "t = {t} is below −½ ln n = {}",
            -0.5 * (n as f64).ln()
        )));
    }
    state_after(&initial, duration, rng)
}
