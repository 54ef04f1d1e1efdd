//! Drift-free subordinators `Γ` together with the drift constant `c` of
//! `X = B − Γ + ct`.
//!
//! Only kinds with exact finite-time increment samplers are admitted:
//! the null subordinator, compound Poisson with a constant or exponential
//! jump law, and the gamma subordinator. Closed forms (Laplace exponent,
//! mean rate, integrated tail) are generic over [`Real`]; the samplers are
//! implemented for `f64`.
//!
//! JSON form: `{"kind":"compound_poisson","rate":1.0,"jump":{"dist":"constant","a":1.0},"c":1.0}`,
//! `{"kind":"gamma","shape":1.0,"rate":1.0,"c":1.0}` or `{"kind":"zero","c":0.0}`.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Exp, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;
use crate::stats::{MCEstimate, Moments};

/// Jump-size law of a compound-Poisson subordinator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum JumpLaw<T> {
    /// Every jump has size `a`.
    Constant { a: T },
    /// Exponential jumps with the given mean.
    Exponential { mean: T },
}

impl<T: Real> JumpLaw<T> {
    pub fn mean(&self) -> T {
        match *self {
            JumpLaw::Constant { a } => a,
            JumpLaw::Exponential { mean } => mean,
        }
    }

    /// `E exp(−qJ)` in closed form.
    pub fn laplace(&self, q: T) -> T {
        match *self {
            JumpLaw::Constant { a } => (-q * a).exp(),
            JumpLaw::Exponential { mean } => T::one() / (T::one() + q * mean),
        }
    }

    /// `P(J > t)`.
    pub fn tail(&self, t: T) -> T {
        match *self {
            JumpLaw::Constant { a } => {
                if t < a {
                    T::one()
                } else {
                    T::zero()
                }
            }
            JumpLaw::Exponential { mean } => (-t / mean).exp(),
        }
    }

    fn validate(&self) -> Result<()> {
        let p = self.mean();
        if !(p.is_finite() && p > T::zero()) {
            return Err(Error::InvalidSpec(format!(
                "jump law parameter must be positive, got {p}"
            )));
        }
        Ok(())
    }
}

impl JumpLaw<f64> {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            JumpLaw::Constant { a } => a,
            JumpLaw::Exponential { mean } => {
                // Exp::sample can return 0 only with probability 2^-53; redraw keeps jumps positive
                let law = Exp::new(1.0 / mean).expect("validated mean");
                loop {
                    let x = law.sample(rng);
                    if x > 0.0 {
                        return x;
                    }
                }
            }
        }
    }
}

/// The Lévy measure family of `Γ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SubordinatorKind<T> {
    Zero,
    CompoundPoisson { rate: T, jump: JumpLaw<T> },
    Gamma { shape: T, rate: T },
}

#[derive(Deserialize)]
#[serde(bound(deserialize = "T: Deserialize<'de>"))]
struct RawSpec<T> {
    #[serde(flatten)]
    kind: SubordinatorKind<T>,
    c: T,
}

/// A drift-free subordinator plus the drift constant `c ≥ E Γ₁`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "RawSpec<T>",
    bound(serialize = "T: Serialize", deserialize = "T: Real + Deserialize<'de>")
)]
pub struct SubordinatorSpec<T> {
    #[serde(flatten)]
    kind: SubordinatorKind<T>,
    c: T,
}

impl<T: Real> TryFrom<RawSpec<T>> for SubordinatorSpec<T> {
    type Error = Error;

    fn try_from(raw: RawSpec<T>) -> Result<Self> {
        Self::new(raw.kind, raw.c)
    }
}

/// Outcome of the finite-grid surrogate for `lim φ(x)x^{δ−1} = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquivalenceClass {
    HoldsNumerically,
    FailsNumerically,
}

impl<T: Real> SubordinatorSpec<T> {
    pub fn new(kind: SubordinatorKind<T>, c: T) -> Result<Self> {
        match kind {
            SubordinatorKind::Zero => {}
            SubordinatorKind::CompoundPoisson { rate, jump } => {
                if !(rate.is_finite() && rate > T::zero()) {
                    return Err(Error::InvalidSpec(format!(
                        "compound Poisson rate must be positive, got {rate}"
                    )));
                }
                jump.validate()?;
            }
            SubordinatorKind::Gamma { shape, rate } => {
                if !(shape.is_finite() && shape > T::zero() && rate.is_finite() && rate > T::zero())
                {
                    return Err(Error::InvalidSpec(format!(
                        "gamma shape and rate must be positive, got ({shape}, {rate})"
                    )));
                }
            }
        }
        let spec = Self { kind, c };
        if !c.is_finite() {
            return Err(Error::InvalidSpec("drift constant c must be finite".into()));
        }
        let mean = spec.mean_rate();
        if c < mean * (T::one() - T::lit(1e-12)) {
            return Err(Error::InvalidSpec(format!(
                "drift constant c = {c} is below E Γ₁ = {mean}"
            )));
        }
        Ok(spec)
    }

    /// The null subordinator with drift `c`.
    pub fn zero(c: T) -> Result<Self> {
        Self::new(SubordinatorKind::Zero, c)
    }

    pub fn compound_poisson(rate: T, jump: JumpLaw<T>, c: T) -> Result<Self> {
        Self::new(SubordinatorKind::CompoundPoisson { rate, jump }, c)
    }

    pub fn gamma(shape: T, rate: T, c: T) -> Result<Self> {
        Self::new(SubordinatorKind::Gamma { shape, rate }, c)
    }

    pub fn kind(&self) -> &SubordinatorKind<T> {
        &self.kind
    }

    pub fn c(&self) -> T {
        self.c
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, SubordinatorKind::Zero)
    }

    /// Finite Lévy measure (null or compound Poisson).
    pub fn has_finite_levy_measure(&self) -> bool {
        !matches!(self.kind, SubordinatorKind::Gamma { .. })
    }

    /// Laplace exponent `φ(q)` with `E exp(−qΓ_s) = exp(−sφ(q))`.
    pub fn laplace_exponent(&self, q: T) -> Result<T> {
        if !(q >= T::zero()) {
            return Err(invalid(format!("Laplace exponent needs q ≥ 0, got {q}")));
        }
        Ok(match self.kind {
            SubordinatorKind::Zero => T::zero(),
            SubordinatorKind::CompoundPoisson { rate, jump } => match jump {
                JumpLaw::Constant { a } => -rate * (-q * a).exp_m1(),
                JumpLaw::Exponential { mean } => rate * q * mean / (T::one() + q * mean),
            },
            SubordinatorKind::Gamma { shape, rate } => shape * (q / rate).ln_1p(),
        })
    }

    /// `E Γ₁`.
    pub fn mean_rate(&self) -> T {
        match self.kind {
            SubordinatorKind::Zero => T::zero(),
            SubordinatorKind::CompoundPoisson { rate, jump } => rate * jump.mean(),
            SubordinatorKind::Gamma { shape, rate } => shape / rate,
        }
    }

    /// Tail of the Lévy measure, `π(]t, ∞[)`.
    pub fn levy_tail(&self, t: T) -> T {
        match self.kind {
            SubordinatorKind::Zero => T::zero(),
            SubordinatorKind::CompoundPoisson { rate, jump } => rate * jump.tail(t),
            SubordinatorKind::Gamma { shape, rate } => shape * exp_integral_e1(rate * t),
        }
    }

    /// Integrated tail `I(x) = ∫₀ˣ π(]t, ∞[) dt`.
    pub fn integrated_tail(&self, x: T) -> Result<T> {
        if !(x > T::zero()) {
            return Err(invalid(format!("integrated tail needs x > 0, got {x}")));
        }
        Ok(match self.kind {
            SubordinatorKind::Zero => T::zero(),
            SubordinatorKind::CompoundPoisson { rate, jump } => match jump {
                JumpLaw::Constant { a } => rate * x.min(a),
                JumpLaw::Exponential { mean } => -rate * mean * (-x / mean).exp_m1(),
            },
            SubordinatorKind::Gamma { shape, rate } => {
                // ∫₀^∞ min(u, x) π(du) with π(du) = a u⁻¹ e^{−bu} du
                let bx = rate * x;
                shape * (-(-bx).exp_m1() / rate + x * exp_integral_e1(bx))
            }
        })
    }

    /// Values of `φ(x)·x^{δ−1}` on a geometric grid of `[1, x_max]`, ten points per decade.
    pub fn equivalence_profile(&self, delta: T, x_max: T) -> Result<Vec<(T, T)>> {
        if !(delta > T::zero() && delta < T::one()) {
            return Err(invalid(format!("δ must lie in (0,1), got {delta}")));
        }
        if !(x_max >= T::lit(1e3)) {
            return Err(invalid(format!("x_max must be at least 1e3, got {x_max}")));
        }
        let decades = x_max.log10();
        let points = (decades * T::lit(10.0)).ceil().to_usize().unwrap_or(30).max(2);
        (0..=points)
            .map(|k| {
                let x = x_max.powf(T::from_count(k) / T::from_count(points));
                Ok((x, self.laplace_exponent(x)? * x.powf(delta - T::one())))
            })
            .collect()
    }

    /// Finite-grid surrogate of the equivalence condition: the profile must be
    /// nonincreasing over its last quarter and end below `tol`.
    pub fn classify_equivalence(&self, delta: T, x_max: T, tol: T) -> Result<EquivalenceClass> {
        let profile = self.equivalence_profile(delta, x_max)?;
        let tail_start = profile.len() - (profile.len() / 4).max(2);
        let decreasing = profile[tail_start..]
            .windows(2)
            .all(|w| w[1].1 <= w[0].1 * (T::one() + T::lit(1e-12)));
        let last = profile.last().map(|p| p.1).unwrap_or(T::zero());
        Ok(if decreasing && last < tol {
            EquivalenceClass::HoldsNumerically
        } else {
            EquivalenceClass::FailsNumerically
        })
    }
}

/// Exponential integral `E₁(z) = ∫₁^∞ e^{−zs}/s ds` for `z > 0`.
pub fn exp_integral_e1<T: Real>(z: T) -> T {
    if z <= T::zero() {
        return T::infinity();
    }
    let eps = T::epsilon();
    if z <= T::one() {
        let euler = T::lit(0.577_215_664_901_532_9);
        let mut sum = T::zero();
        let mut term = T::one();
        for k in 1..200 {
            let kf = T::from_count(k);
            term = term * (-z) / kf;
            let add = term / kf;
            sum += add;
            if add.abs() < eps * sum.abs() {
                break;
            }
        }
        -euler - z.ln() - sum
    } else {
        // modified Lentz on the continued fraction for e^{z} E₁(z)
        let tiny = T::min_positive_value() / eps;
        let two = T::lit(2.0);
        let mut b = z + T::one();
        let mut c = T::one() / tiny;
        let mut d = T::one() / b;
        let mut h = d;
        for i in 1..500 {
            let fi = T::from_count(i);
            let an = -fi * fi;
            b += two;
            d = T::one() / (an * d + b);
            c = b + an / c;
            let del = c * d;
            h *= del;
            if (del - T::one()).abs() < eps {
                break;
            }
        }
        h * (-z).exp()
    }
}

/// Zero-truncated Poisson draw.
fn positive_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean < 20.0 {
        let norm = -(-mean).exp_m1();
        let u: f64 = rng.random::<f64>() * norm;
        let mut p = mean * (-mean).exp();
        let mut cdf = p;
        let mut k = 1u64;
        while cdf < u && k < 10_000 {
            k += 1;
            p *= mean / k as f64;
            cdf += p;
        }
        k
    } else {
        let law = Poisson::new(mean).expect("positive mean");
        loop {
            let k = law.sample(rng) as u64;
            if k > 0 {
                return k;
            }
        }
    }
}

impl SubordinatorSpec<f64> {
    fn check_time(s: f64) -> Result<()> {
        if s > 0.0 && s.is_finite() {
            Ok(())
        } else {
            Err(invalid(format!("increment length must be positive, got {s}")))
        }
    }

    /// Probability that `Γ_s = 0` (the compound-Poisson atom), zero for gamma.
    pub fn zero_probability(&self, s: f64) -> f64 {
        match self.kind {
            SubordinatorKind::Zero => 1.0,
            SubordinatorKind::CompoundPoisson { rate, .. } => (-rate * s).exp(),
            SubordinatorKind::Gamma { .. } => 0.0,
        }
    }

    /// One exact draw of `Γ_s`.
    pub fn sample_gamma_increment<R: Rng + ?Sized>(&self, s: f64, rng: &mut R) -> Result<f64> {
        Self::check_time(s)?;
        Ok(match self.kind {
            SubordinatorKind::Zero => 0.0,
            SubordinatorKind::CompoundPoisson { rate, jump } => {
                let count = Poisson::new(rate * s).expect("positive mean").sample(rng) as u64;
                (0..count).map(|_| jump.sample(rng)).sum()
            }
            SubordinatorKind::Gamma { shape, rate } => Gamma::new(shape * s, 1.0 / rate)
                .expect("validated gamma parameters")
                .sample(rng),
        })
    }

    /// Visits `m` i.i.d. draws of `Γ_s` as `(value, multiplicity)` pairs.
    ///
    /// For compound Poisson the draws equal to zero are counted in one
    /// binomial draw and reported once with their multiplicity; only the
    /// nonzero draws are simulated, from the law conditioned on `Γ_s > 0`.
    pub fn for_each_increment<R, F>(&self, s: f64, m: u64, rng: &mut R, mut visit: F) -> Result<()>
    where
        R: Rng + ?Sized,
        F: FnMut(f64, u64),
    {
        Self::check_time(s)?;
        match self.kind {
            SubordinatorKind::Zero => visit(0.0, m),
            SubordinatorKind::CompoundPoisson { .. } => {
                self.for_each_jump_set(s, m, rng, |jumps, mult| visit(jumps.iter().sum(), mult))?;
            }
            SubordinatorKind::Gamma { shape, rate } => {
                let law = Gamma::new(shape * s, 1.0 / rate).expect("validated gamma parameters");
                for _ in 0..m {
                    visit(law.sample(rng), 1);
                }
            }
        }
        Ok(())
    }

    /// Like [`Self::for_each_increment`] but exposes the individual jumps of
    /// each compound-Poisson draw. Fails for gamma specs.
    pub fn for_each_jump_set<R, F>(&self, s: f64, m: u64, rng: &mut R, mut visit: F) -> Result<()>
    where
        R: Rng + ?Sized,
        F: FnMut(&[f64], u64),
    {
        Self::check_time(s)?;
        match self.kind {
            SubordinatorKind::Zero => visit(&[], m),
            SubordinatorKind::CompoundPoisson { rate, jump } => {
                let p0 = (-rate * s).exp();
                let zeros = Binomial::new(m, p0).expect("probability in [0,1]").sample(rng);
                visit(&[], zeros);
                let mut jumps = Vec::new();
                for _ in 0..(m - zeros) {
                    let count = positive_poisson(rate * s, rng);
                    jumps.clear();
                    jumps.extend((0..count).map(|_| jump.sample(rng)));
                    visit(&jumps, 1);
                }
            }
            SubordinatorKind::Gamma { .. } => {
                return Err(invalid("gamma subordinator has no finite jump sets"))
            }
        }
        Ok(())
    }

    /// Monte Carlo estimate of `E f(Γ_s)` over `m` exact draws.
    pub fn expect_increment<R, F>(&self, s: f64, m: u64, rng: &mut R, f: F) -> Result<MCEstimate>
    where
        R: Rng + ?Sized,
        F: Fn(f64) -> f64,
    {
        if m == 0 {
            return Err(invalid("Monte Carlo sample count must be positive"));
        }
        if self.is_zero() {
            Self::check_time(s)?;
            return Ok(MCEstimate::exact(f(0.0), m));
        }
        let mut acc = Moments::new();
        self.for_each_increment(s, m, rng, |g, mult| {
            if mult == 1 {
                acc.push(f(g));
            } else {
                acc.push_repeated(f(g), mult);
            }
        })?;
        Ok(acc.estimate())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::{integrate, QuadOptions};
    use crate::rng::{StreamTag, Streams};
    use proptest::prelude::*;

    fn cp(rate: f64, a: f64, c: f64) -> SubordinatorSpec<f64> {
        SubordinatorSpec::compound_poisson(rate, JumpLaw::Constant { a }, c).unwrap()
    }

    fn all_kinds() -> Vec<SubordinatorSpec<f64>> {
        vec![
            SubordinatorSpec::zero(0.0).unwrap(),
            cp(1.0, 1.0, 1.0),
            cp(2.0, 0.5, 1.0),
            SubordinatorSpec::compound_poisson(1.5, JumpLaw::Exponential { mean: 0.4 }, 0.6)
                .unwrap(),
            SubordinatorSpec::gamma(1.0, 1.0, 1.0).unwrap(),
            SubordinatorSpec::gamma(3.0, 6.0, 0.5).unwrap(),
        ]
    }

    #[test]
    fn laplace_exponent_closed_forms() {
        let zero = SubordinatorSpec::zero(0.0).unwrap();
        assert_eq!(zero.laplace_exponent(5.0).unwrap(), 0.0);
        let phi = cp(1.0, 1.0, 1.0).laplace_exponent(1.0).unwrap();
        assert!((phi - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        let g = SubordinatorSpec::gamma(1.0, 1.0, 1.0).unwrap();
        assert_eq!(g.laplace_exponent(0.0).unwrap(), 0.0);
        assert!(g.laplace_exponent(-1.0).is_err());
    }

    #[test]
    fn laplace_exponent_matches_monte_carlo_oracle() {
        // E exp(−Γ₁) = exp(−φ(1)) for a rate-1 Poisson count of unit jumps
        let spec = cp(1.0, 1.0, 1.0);
        let mut rng = Streams::new(11).stream(StreamTag::Density, 0);
        let m = 1_000_000u64;
        let mut acc = Moments::new();
        for _ in 0..m {
            acc.push((-spec.sample_gamma_increment(1.0, &mut rng).unwrap()).exp());
        }
        let est = acc.estimate();
        let phi_mc = -est.value.ln();
        let se = est.stderr / est.value;
        assert!((phi_mc - (1.0 - (-1.0f64).exp())).abs() < 4.0 * se, "{phi_mc}");
    }

    #[test]
    fn mean_rate_values_and_sample_mean_oracle() {
        assert_eq!(SubordinatorSpec::zero(0.0).unwrap().mean_rate(), 0.0);
        let a = cp(2.0, 0.5, 1.0);
        let b = SubordinatorSpec::gamma(3.0, 6.0, 0.5).unwrap();
        assert_eq!(a.mean_rate(), 1.0);
        assert_eq!(b.mean_rate(), 0.5);
        let mut rng = Streams::new(12).stream(StreamTag::Density, 0);
        for (spec, expect) in [(a, 1.0), (b, 0.5)] {
            let acc: Moments = (0..1_000_000)
                .map(|_| spec.sample_gamma_increment(1.0, &mut rng).unwrap())
                .collect();
            let e = acc.estimate();
            assert!(e.within(expect, 4.0, 0.0), "{e:?} vs {expect}");
        }
    }

    #[test]
    fn increment_sampler_examples() {
        let mut rng = Streams::new(13).stream(StreamTag::Density, 0);
        let zero = SubordinatorSpec::zero(0.0).unwrap();
        for _ in 0..100 {
            assert_eq!(zero.sample_gamma_increment(1.0, &mut rng).unwrap(), 0.0);
        }
        assert!(zero.sample_gamma_increment(0.0, &mut rng).is_err());
        assert!(zero.sample_gamma_increment(-1.0, &mut rng).is_err());

        let spec = cp(1.0, 1.0, 1.0);
        let m = 1_000_000;
        let hits = (0..m)
            .filter(|_| spec.sample_gamma_increment(0.5, &mut rng).unwrap() == 0.0)
            .count() as f64;
        let p = (-0.5f64).exp();
        let se = (p * (1.0 - p) / m as f64).sqrt();
        assert!((hits / m as f64 - p).abs() < 4.0 * se);

        let g = SubordinatorSpec::gamma(1.0, 1.0, 1.0).unwrap();
        let acc: Moments = (0..200_000)
            .map(|_| g.sample_gamma_increment(1.0, &mut rng).unwrap())
            .collect();
        assert!(acc.estimate().within(1.0, 4.0, 0.0));
    }

    #[test]
    fn empirical_mean_is_s_times_mean_rate() {
        let mut rng = Streams::new(14).stream(StreamTag::Density, 0);
        for spec in all_kinds() {
            for s in [0.1, 0.7] {
                let e = spec.expect_increment(s, 100_000, &mut rng, |g| g).unwrap();
                assert!(
                    e.within(s * spec.mean_rate(), 4.0, 0.0),
                    "{spec:?} s={s}: {e:?}"
                );
            }
        }
    }

    #[test]
    fn binomial_shortcut_matches_direct_sampling() {
        // same law of the estimator: compare means of exp(−Γ) both ways
        let spec = SubordinatorSpec::compound_poisson(0.8, JumpLaw::Exponential { mean: 1.3 }, 2.0)
            .unwrap();
        let mut rng = Streams::new(15).stream(StreamTag::Density, 0);
        let fast = spec.expect_increment(0.3, 400_000, &mut rng, |g| (-g).exp()).unwrap();
        let slow: Moments = (0..400_000)
            .map(|_| (-spec.sample_gamma_increment(0.3, &mut rng).unwrap()).exp())
            .collect();
        let exact = (-0.3 * spec.laplace_exponent(1.0).unwrap()).exp();
        assert!(fast.within(exact, 4.0, 0.0));
        assert!(slow.estimate().within(exact, 4.0, 0.0));
        assert!((fast.stderr / slow.estimate().stderr - 1.0).abs() < 0.05);
    }

    #[test]
    fn mean_rate_is_derivative_at_zero() {
        for spec in all_kinds() {
            let eps = 1e-6;
            let d = (spec.laplace_exponent(eps).unwrap() - spec.laplace_exponent(0.0).unwrap()) / eps;
            let m = spec.mean_rate();
            if m == 0.0 {
                assert_eq!(d, 0.0);
            } else {
                assert!((d / m - 1.0).abs() < 0.01, "{spec:?}");
            }
        }
    }

    #[test]
    fn integrated_tail_examples_and_quadrature_oracle() {
        let spec = cp(1.0, 1.0, 1.0);
        assert!((spec.integrated_tail(0.5).unwrap() - 0.5).abs() < 1e-15);
        assert!((spec.integrated_tail(3.0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(SubordinatorSpec::zero(0.0).unwrap().integrated_tail(1.0).unwrap(), 0.0);
        assert!(spec.integrated_tail(0.0).is_err());

        // gamma: ∫₀ˣ a E₁(bt) dt by quadrature (t = x·w² removes the log singularity)
        for (a, b, x) in [(1.0, 1.0, 0.3), (2.5, 4.0, 2.0), (0.5, 0.2, 10.0)] {
            let g = SubordinatorSpec::gamma(a, b, a / b).unwrap();
            let q = integrate(
                |w: f64| 2.0 * x * w * g.levy_tail(x * w * w),
                0.0,
                1.0,
                &QuadOptions::abs(1e-12),
            )
            .unwrap();
            let closed = g.integrated_tail(x).unwrap();
            assert!((q.value - closed).abs() < 1e-9, "{a} {b} {x}: {} vs {closed}", q.value);
        }
        // exponential jumps: I(x) = λμ(1 − e^{−x/μ})
        let e = SubordinatorSpec::compound_poisson(2.0, JumpLaw::Exponential { mean: 0.5 }, 1.0)
            .unwrap();
        assert!((e.integrated_tail(1.0).unwrap() - (1.0 - (-2.0f64).exp())).abs() < 1e-14);
    }

    #[test]
    fn e1_reference_values() {
        // Abramowitz & Stegun table 5.1
        assert!((exp_integral_e1(0.5f64) - 0.559_773_594_776_160_8).abs() < 1e-14);
        assert!((exp_integral_e1(1.0f64) - 0.219_383_934_395_520_3).abs() < 1e-14);
        assert!((exp_integral_e1(2.0f64) - 0.048_900_510_708_061_1).abs() < 1e-14);
        assert!((exp_integral_e1(0.5f32) - 0.559_773_6).abs() < 1e-5);
    }

    #[test]
    fn classifier_examples() {
        use EquivalenceClass::*;
        let spec = cp(1.0, 1.0, 1.0);
        assert_eq!(spec.classify_equivalence(0.5, 1e6, 1e-2).unwrap(), HoldsNumerically);
        let g = SubordinatorSpec::gamma(1.0, 1.0, 1.0).unwrap();
        assert_eq!(g.classify_equivalence(0.5, 1e6, 1e-1).unwrap(), HoldsNumerically);
        let z = SubordinatorSpec::zero(0.0).unwrap();
        for d in [0.01, 0.5, 0.99] {
            assert_eq!(z.classify_equivalence(d, 1e3, 1e-9).unwrap(), HoldsNumerically);
        }
        // ln x · x^{−0.01} still grows at 1e6
        assert_eq!(g.classify_equivalence(0.99, 1e6, 1e-1).unwrap(), FailsNumerically);
        assert!(g.classify_equivalence(0.0, 1e6, 1e-1).is_err());
        assert!(g.classify_equivalence(1.0, 1e6, 1e-1).is_err());
        assert!(g.classify_equivalence(0.5, 10.0, 1e-1).is_err());
    }

    #[test]
    fn compound_poisson_profile_dominated_by_rate() {
        let spec = cp(1.7, 0.3, 1.0);
        for delta in [0.1, 0.5, 0.9] {
            for (x, v) in spec.equivalence_profile(delta, 1e6).unwrap() {
                assert!(v <= 1.7 * x.powf(delta - 1.0) * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn json_round_trip_and_validation() {
        let s = r#"{"kind":"compound_poisson","rate":1.0,"jump":{"dist":"constant","a":1.0},"c":1.0}"#;
        let spec: SubordinatorSpec<f64> = serde_json::from_str(s).unwrap();
        assert_eq!(spec, cp(1.0, 1.0, 1.0));
        assert_eq!(serde_json::to_string(&spec).unwrap(), s);
        let g: SubordinatorSpec<f64> =
            serde_json::from_str(r#"{"kind":"gamma","shape":3.0,"rate":6.0,"c":0.5}"#).unwrap();
        assert_eq!(g.mean_rate(), 0.5);
        let z: SubordinatorSpec<f64> = serde_json::from_str(r#"{"kind":"zero","c":0.0}"#).unwrap();
        assert!(z.is_zero());
        // c below the mean rate
        assert!(serde_json::from_str::<SubordinatorSpec<f64>>(
            r#"{"kind":"gamma","shape":3.0,"rate":6.0,"c":0.4}"#
        )
        .is_err());
        // c missing
        assert!(serde_json::from_str::<SubordinatorSpec<f64>>(r#"{"kind":"zero"}"#).is_err());
        assert!(serde_json::from_str::<SubordinatorSpec<f64>>(
            r#"{"kind":"compound_poisson","rate":-1.0,"jump":{"dist":"constant","a":1.0},"c":1.0}"#
        )
        .is_err());
    }

    proptest! {
        #[test]
        fn phi_zero_at_origin_nondecreasing_and_concave(idx in 0usize..6, q0 in 0.0f64..50.0, h in 0.01f64..10.0) {
            let spec = all_kinds()[idx];
            prop_assert_eq!(spec.laplace_exponent(0.0).unwrap(), 0.0);
            let a = spec.laplace_exponent(q0).unwrap();
            let b = spec.laplace_exponent(q0 + h).unwrap();
            let c = spec.laplace_exponent(q0 + 2.0 * h).unwrap();
            prop_assert!(b >= a);
            prop_assert!(b - a >= c - b - 1e-12 * c.abs().max(1.0));
        }
    }
}
