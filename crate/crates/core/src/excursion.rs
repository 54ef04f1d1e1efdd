//! Bridges with exchangeable increments on a uniform grid, the Vervaat
//! transform, and fragments as constancy intervals of the running supremum
//! of `ts − ε(s)`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::SubordinatorSpec;
use crate::partition::MassPartition;
use crate::rng::StreamId;

/// Endpoint and positivity tolerance for bridges and excursions.
pub const PATH_TOL: f64 = 1e-9;

/// A path on the grid `k/N`, `k = 0..=N`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridPath {
    values: Vec<f64>,
}

impl GridPath {
    /// Wraps `N + 1` grid values, `N ≥ 2`.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 3 {
            return Err(invalid(format!(
                "a grid path needs at least 3 values, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("grid path values must be finite"));
        }
        Ok(Self { values })
    }

    pub fn n_grid(&self) -> usize {
        self.values.len() - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, k: usize) -> f64 {
        self.values[k]
    }

    /// `value[N] − value[0]`.
    pub fn endpoint_gap(&self) -> f64 {
        self.values[self.n_grid()] - self.values[0]
    }

    pub fn is_bridge(&self) -> bool {
        self.endpoint_gap().abs() <= PATH_TOL
    }

    pub fn is_excursion(&self) -> bool {
        let n = self.n_grid();
        self.values[0].abs() <= PATH_TOL
            && self.values[n].abs() <= PATH_TOL
            && self.values.iter().all(|&v| v >= -PATH_TOL)
    }
}

/// Jump sizes `θ₁ ≥ θ₂ ≥ … ≥ 0` and the Brownian coefficient `σ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaSequence {
    theta: Vec<f64>,
    sigma: f64,
    #[serde(default)]
    literal: bool,
}

impl ThetaSequence {
    /// Explicit `(θ, σ)` with `σ² + Σθ² = 1`.
    pub fn new(mut theta: Vec<f64>, sigma: f64) -> Result<Self> {
        Self::check_theta(&mut theta)?;
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(invalid(format!("σ must be nonnegative, got {sigma}")));
        }
        let budget = sigma * sigma + theta.iter().map(|x| x * x).sum::<f64>();
        if (budget - 1.0).abs() > PATH_TOL {
            return Err(invalid(format!("σ² + Σθ² must equal 1, got {budget}")));
        }
        Ok(Self {
            theta,
            sigma,
            literal: false,
        })
    }

    /// The Brownian case: no jumps, `σ = 1`.
    pub fn brownian() -> Self {
        Self {
            theta: Vec::new(),
            sigma: 1.0,
            literal: false,
        }
    }

    /// Jumps `θ` with `σ = (1 − Σθ²)^{1/2}`.
    pub fn from_theta(mut theta: Vec<f64>) -> Result<Self> {
        let sum = Self::check_theta(&mut theta)?;
        Ok(Self {
            theta,
            sigma: (1.0 - sum).max(0.0).sqrt(),
            literal: false,
        })
    }

    /// Jumps `θ` with `σ = 1 − Σθ²` taken at face value, so that
    /// `σ² + Σθ² < 1` whenever both parts are present.
    pub fn literal(mut theta: Vec<f64>) -> Result<Self> {
        let sum = Self::check_theta(&mut theta)?;
        Ok(Self {
            theta,
            sigma: (1.0 - sum).max(0.0),
            literal: true,
        })
    }

    fn check_theta(theta: &mut [f64]) -> Result<f64> {
        if let Some(bad) = theta.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(invalid(format!("θ entries must be nonnegative, got {bad}")));
        }
        theta.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let sum: f64 = theta.iter().map(|x| x * x).sum();
        if sum > 1.0 + PATH_TOL {
            return Err(invalid(format!("Σθ² must not exceed 1, got {sum}")));
        }
        Ok(sum)
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn is_literal(&self) -> bool {
        self.literal
    }

    pub fn is_brownian(&self) -> bool {
        self.theta.iter().all(|&x| x == 0.0) && self.sigma == 1.0
    }
}

fn check_grid(n: usize) -> Result<()> {
    if n < 2 {
        return Err(invalid(format!("grid size must be at least 2, got {n}")));
    }
    Ok(())
}

/// Brownian bridge on the grid: `W[k] − (k/N)W[N]` for a random walk with
/// `N(0, 1/N)` steps, so `value[N] = 0` exactly.
pub fn brownian_bridge<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<GridPath> {
    check_grid(n)?;
    let nf = n as f64;
    let sd = nf.sqrt().recip();
    let mut values = Vec::with_capacity(n + 1);
    let mut w = 0.0f64;
    values.push(0.0);
    for _ in 0..n {
        let z: f64 = rng.sample(StandardNormal);
        w += sd * z;
        values.push(w);
    }
    let end = w;
    for (k, v) in values.iter_mut().enumerate() {
        *v -= (k as f64 / nf) * end;
    }
    Ok(GridPath { values })
}

/// `σ·b + Σθᵢ(1{s ≥ Vᵢ} − s)` with each jump at grid index `⌈Vᵢ N⌉`.
pub fn theta_bridge<R: Rng + ?Sized>(theta: &ThetaSequence, n: usize, rng: &mut R) -> Result<GridPath> {
    check_grid(n)?;
    let mut values = if theta.sigma > 0.0 {
        let mut b = brownian_bridge(n, rng)?.values;
        if theta.sigma != 1.0 {
            b.iter_mut().for_each(|v| *v *= theta.sigma);
        }
        b
    } else {
        vec![0.0; n + 1]
    };
    let nf = n as f64;
    let total: f64 = theta.theta.iter().sum();
    let mut steps = vec![0.0f64; n + 1];
    for &th in &theta.theta {
        let v = open_unit(rng);
        let j = ((v * nf).ceil() as usize).clamp(1, n);
        steps[j] += th;
    }
    let mut jumps = 0.0;
    for k in 0..=n {
        jumps += steps[k];
        values[k] += if k == n { 0.0 } else { jumps - total * (k as f64 / nf) };
    }
    Ok(GridPath { values })
}

fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let v: f64 = rng.random();
        if v > 0.0 {
            return v;
        }
    }
}

/// Cyclic shift at the first grid minimum, offset so the output starts at 0.
pub fn vervaat(path: &GridPath) -> Result<GridPath> {
    if !path.is_bridge() {
        return Err(Error::NotABridge(path.endpoint_gap()));
    }
    let n = path.n_grid();
    let v = &path.values;
    let mut m = 0;
    for k in 1..n {
        if v[k] < v[m] {
            m = k;
        }
    }
    let min = v[m];
    let values = (0..=n).map(|k| v[(m + k) % n] - min).collect();
    Ok(GridPath { values })
}

/// Strict-record indices in `0..N` of the running maximum of
/// `d[k] = t·k/N − value[k]`. Index 0 is always a record.
pub fn record_indices(excursion: &GridPath, t: f64) -> Result<Vec<usize>> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(invalid(format!("fragmentation time must be nonnegative, got {t}")));
    }
    if !excursion.is_excursion() {
        return Err(invalid("fragmentation needs an excursion (zero endpoints, nonnegative)"));
    }
    let n = excursion.n_grid();
    let nf = n as f64;
    let v = &excursion.values;
    let mut records = vec![0usize];
    let mut best = -v[0];
    for (k, &vk) in v.iter().enumerate().take(n).skip(1) {
        let d = t * (k as f64 / nf) - vk;
        if d > best {
            best = d;
            records.push(k);
        }
    }
    Ok(records)
}

/// Fragment sizes in grid cells, sorted nonincreasing.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridPartition {
    counts: Vec<u64>,
    n_grid: u64,
}

impl GridPartition {
    /// Gaps between successive records, the last one running to `N`.
    pub fn from_records(records: &[usize], n_grid: usize) -> Self {
        let mut counts: Vec<u64> = records
            .windows(2)
            .map(|w| (w[1] - w[0]) as u64)
            .chain(records.last().map(|&r| (n_grid - r) as u64))
            .collect();
        counts.sort_unstable_by(|a, b| b.cmp(a));
        Self {
            counts,
            n_grid: n_grid as u64,
        }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn n_grid(&self) -> u64 {
        self.n_grid
    }

    /// Masses `count/N`; their exact sum is 1.
    pub fn to_mass_partition(&self) -> MassPartition {
        let nf = self.n_grid as f64;
        MassPartition::from_sorted(self.counts.iter().map(|&c| c as f64 / nf).collect(), 1.0)
    }
}

/// Grid fragment counts of `F(t)` read off an excursion.
pub fn grid_fragmentation_at(excursion: &GridPath, t: f64) -> Result<GridPartition> {
    let records = record_indices(excursion, t)?;
    Ok(GridPartition::from_records(&records, excursion.n_grid()))
}

/// `F(t)`: lengths of the constancy intervals of the running supremum of `ts − ε(s)`.
pub fn fragmentation_at(excursion: &GridPath, t: f64) -> Result<MassPartition> {
    Ok(grid_fragmentation_at(excursion, t)?.to_mass_partition())
}

/// Generating law of a [`FragmentationSample`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum LawTag {
    Brownian,
    Theta { theta: ThetaSequence },
    Weighted { spec: SubordinatorSpec<f64> },
}

/// A partition together with the inputs that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FragmentationSample {
    pub partition: MassPartition,
    pub t: f64,
    pub grid_n: usize,
    pub seed: Option<StreamId>,
    pub law_tag: LawTag,
}

/// Bridge, Vervaat transform and constancy intervals at time `t`.
pub fn sample_brownian_fragmentation<R: Rng + ?Sized>(
    t: f64,
    n: usize,
    rng: &mut R,
) -> Result<FragmentationSample> {
    let exc = vervaat(&brownian_bridge(n, rng)?)?;
    Ok(FragmentationSample {
        partition: fragmentation_at(&exc, t)?,
        t,
        grid_n: n,
        seed: None,
        law_tag: LawTag::Brownian,
    })
}

/// As [`sample_brownian_fragmentation`] for the bridge `b_θ`.
pub fn sample_theta_fragmentation<R: Rng + ?Sized>(
    theta: &ThetaSequence,
    t: f64,
    n: usize,
    rng: &mut R,
) -> Result<FragmentationSample> {
    let exc = vervaat(&theta_bridge(theta, n, rng)?)?;
    Ok(FragmentationSample {
        partition: fragmentation_at(&exc, t)?,
        t,
        grid_n: n,
        seed: None,
        law_tag: if theta.is_brownian() {
            LawTag::Brownian
        } else {
            LawTag::Theta {
                theta: theta.clone(),
            }
        },
    })
}

/// [`sample_brownian_fragmentation`] on the stream `id`, recorded in the sample.
pub fn sample_brownian_fragmentation_on(t: f64, n: usize, id: StreamId) -> Result<FragmentationSample> {
    let mut rng = id.rng();
    let mut sample = sample_brownian_fragmentation(t, n, &mut rng)?;
    sample.seed = Some(id);
    Ok(sample)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{StreamTag, Streams};
    use crate::stats::Moments;
    use proptest::prelude::*;

    fn rng(i: u64) -> crate::rng::SimRng {
        Streams::new(31).stream(StreamTag::Fragmentation, i)
    }

    #[test]
    fn bridge_endpoints_are_exact() {
        let mut r = rng(0);
        for n in [2, 3, 17, 1024] {
            let b = brownian_bridge(n, &mut r).unwrap();
            assert_eq!(b.n_grid(), n);
            assert_eq!(b.value(0), 0.0);
            assert_eq!(b.value(n), 0.0);
        }
        assert!(brownian_bridge(1, &mut r).is_err());
        assert!(brownian_bridge(0, &mut r).is_err());
    }

    #[test]
    fn bridge_midpoint_variance_and_quarter_mean() {
        let n = 1 << 14;
        let mut mid = Moments::new();
        let mut quarter = Moments::new();
        for i in 0..10_000 {
            let b = brownian_bridge(n, &mut rng(1000 + i)).unwrap();
            mid.push(b.value(n / 2).powi(2));
            quarter.push(b.value(n / 4));
        }
        assert!(mid.estimate().within(0.25, 4.0, 0.0), "{:?}", mid.estimate());
        assert!(quarter.estimate().within(0.0, 4.0, 0.0));
    }

    #[test]
    fn theta_sequence_validation() {
        assert!(ThetaSequence::new(vec![0.6], 0.8).is_ok());
        assert!(ThetaSequence::new(vec![0.6], 0.6).is_err());
        assert!(ThetaSequence::new(vec![-0.1], 1.0).is_err());
        assert!(ThetaSequence::from_theta(vec![0.9, 0.9]).is_err());
        let s = ThetaSequence::from_theta(vec![0.3, 0.4]).unwrap();
        assert!((s.sigma() - (0.75f64).sqrt()).abs() < 1e-15);
        assert_eq!(s.theta(), &[0.4, 0.3]);
        let l = ThetaSequence::literal(vec![0.6]).unwrap();
        assert!((l.sigma() - 0.64).abs() < 1e-15);
        assert!(l.is_literal());
        assert!(ThetaSequence::brownian().is_brownian());
    }

    #[test]
    fn pure_jump_bridge_is_deterministic_given_v() {
        let n = 64;
        let th = ThetaSequence::new(vec![1.0], 0.0).unwrap();
        let b = theta_bridge(&th, n, &mut rng(2)).unwrap();
        let j = (1..=n).find(|&k| b.value(k) - b.value(k - 1) > 0.5).unwrap();
        for k in 0..n {
            let ind = if k >= j { 1.0 } else { 0.0 };
            assert!((b.value(k) - (ind - k as f64 / n as f64)).abs() < 1e-14);
        }
        assert_eq!(b.value(n), 0.0);
    }

    #[test]
    fn theta_bridge_has_one_detectable_jump() {
        let n = 1 << 12;
        let th = ThetaSequence::new(vec![0.6], 0.8).unwrap();
        let cut = 3.0 * 0.8 / (n as f64).sqrt();
        for i in 0..200 {
            let b = theta_bridge(&th, n, &mut rng(300 + i)).unwrap();
            assert!(b.is_bridge());
            let ups: Vec<f64> = b
                .values()
                .windows(2)
                .map(|w| w[1] - w[0])
                .filter(|&d| d > cut + 0.3)
                .collect();
            assert_eq!(ups.len(), 1);
            assert!((ups[0] - 0.6).abs() < 6.0 * cut);
        }
    }

    #[test]
    fn brownian_theta_reduces_to_bridge() {
        let a = theta_bridge(&ThetaSequence::brownian(), 128, &mut rng(4)).unwrap();
        let b = brownian_bridge(128, &mut rng(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn vervaat_identity_and_sine_oracle() {
        let id = GridPath::new(vec![0.0, 1.0, 2.0, 0.5, 0.0]).unwrap();
        assert_eq!(vervaat(&id).unwrap(), id);

        let n = 64;
        let nf = n as f64;
        let sine: Vec<f64> = (0..=n)
            .map(|k| -(2.0 * std::f64::consts::PI * k as f64 / nf).sin())
            .collect();
        let out = vervaat(&GridPath::new(sine.clone()).unwrap()).unwrap();
        let m = n / 4;
        for k in 0..=n {
            let expect = sine[(m + k) % n] - sine[m];
            assert_eq!(out.value(k), expect);
            // −sin(2π(k + N/4)/N) + 1 = 1 − cos(2πk/N)
            assert!((out.value(k) - (1.0 - (2.0 * std::f64::consts::PI * k as f64 / nf).cos())).abs() < 1e-12);
        }
        assert_eq!(out.value(0), 0.0);
        assert!(out.values().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn vervaat_rejects_non_bridges_and_breaks_ties_low() {
        assert!(matches!(
            vervaat(&GridPath::new(vec![0.0, 1.0, 0.5]).unwrap()),
            Err(Error::NotABridge(_))
        ));
        let tie = GridPath::new(vec![0.0, -1.0, 0.0, -1.0, 0.0]).unwrap();
        let out = vervaat(&tie).unwrap();
        assert_eq!(out.values(), &[0.0, 1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn random_excursions_start_at_their_minimum() {
        for i in 0..50 {
            let e = vervaat(&brownian_bridge(1000, &mut rng(500 + i)).unwrap()).unwrap();
            assert_eq!(e.value(0), 0.0);
            assert_eq!(e.value(1000), 0.0);
            assert!(e.values().iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn fragmentation_examples() {
        let e = vervaat(&brownian_bridge(4096, &mut rng(6)).unwrap()).unwrap();
        assert_eq!(fragmentation_at(&e, 0.0).unwrap().masses(), &[1.0]);
        assert!(fragmentation_at(&e, -1.0).is_err());
        let p = grid_fragmentation_at(&e, 2.0).unwrap();
        assert_eq!(p.counts().iter().sum::<u64>(), 4096);
        let bad = GridPath::new(vec![0.0, -1.0, 0.0]).unwrap();
        assert!(fragmentation_at(&bad, 1.0).is_err());
    }

    #[test]
    fn hand_computed_records() {
        // d = t·k/4 − v = [0, 0.25−1, 0.5−0.1, 0.75−0.2] at t = 1
        let e = GridPath::new(vec![0.0, 1.0, 0.1, 0.2, 0.0]).unwrap();
        let flat = GridPath::new(vec![0.0, 1.0, 0.1, 0.5, 0.0]).unwrap();
        assert_eq!(record_indices(&flat, 1.0).unwrap(), vec![0, 2]);
        assert_eq!(record_indices(&e, 1.0).unwrap(), vec![0, 2, 3]);
        let p = grid_fragmentation_at(&e, 1.0).unwrap();
        assert_eq!(p.counts(), &[2, 1, 1]);
        assert_eq!(p.to_mass_partition().masses(), &[0.5, 0.25, 0.25]);
    }

    #[test]
    fn brownian_fragments_above_tenth_are_few() {
        for i in 0..20 {
            let s = sample_brownian_fragmentation(1.0, 1 << 16, &mut rng(700 + i)).unwrap();
            assert!(s.partition.masses().iter().filter(|&&m| m >= 0.1).count() <= 10);
            assert_eq!(s.partition.total(), 1.0);
            assert_eq!(s.law_tag, LawTag::Brownian);
        }
        let id = Streams::new(5).id(StreamTag::Fragmentation, 3);
        let a = sample_brownian_fragmentation_on(1.0, 256, id).unwrap();
        let b = sample_brownian_fragmentation_on(1.0, 256, id).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.seed, Some(id));
    }

    #[test]
    fn monotone_refinement_on_many_paths() {
        for i in 0..1000 {
            let e = vervaat(&brownian_bridge(512, &mut rng(10_000 + i)).unwrap()).unwrap();
            let coarse = record_indices(&e, 0.5).unwrap();
            let fine = record_indices(&e, 1.5).unwrap();
            assert!(coarse.iter().all(|r| fine.binary_search(r).is_ok()), "path {i}");
        }
    }

    proptest! {
        #[test]
        fn partition_sums_to_one_and_refines(seed in 0u64..1_000_000, t1 in 0.0f64..3.0, dt in 0.0f64..3.0, log_n in 1u32..12) {
            let n = 1usize << log_n;
            let e = vervaat(&brownian_bridge(n.max(2), &mut rng(seed)).unwrap()).unwrap();
            let g = grid_fragmentation_at(&e, t1).unwrap();
            prop_assert_eq!(g.counts().iter().sum::<u64>(), n.max(2) as u64);
            let a = record_indices(&e, t1).unwrap();
            let b = record_indices(&e, t1 + dt).unwrap();
            prop_assert!(a.iter().all(|r| b.binary_search(r).is_ok()));
        }
    }
}
