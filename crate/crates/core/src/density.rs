//! Gaussian densities, the ratio `q_s(u)/p_s(u)` and the densities built on it.
//!
//! `q_s` is the density of `X_s = B_s − Γ_s + cs`. Conditioning on `Γ_s`
//! gives `q_s(u)/p_s(u) = exp(cu − c²s/2)·E[exp(−Γ_s²/(2s) − Γ_s(u/s − c))]`,
//! which every estimator here averages over exact draws of `Γ_s`. With
//! `g(t,x) = e^{−xc²/2}·E[exp(−Γ_x²/(2x) + Γ_x(t+c))]` and the normalizer
//! `q₁(0)/p₁(0) = g(0,1)` the fragmentation density is
//! `𝐡(t,x) = (p₁(0)/q₁(0))·∏ g(t,xᵢ)` on unit-mass partitions.

use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erf, erf_inv};

use crate::error::{invalid, Result};
use crate::model::SubordinatorSpec;
use crate::partition::MassPartition;
use crate::rng::{StreamId, StreamTag, Streams};
use crate::scalar::Real;
use crate::stats::{LogProduct, MCEstimate};

type Spec = SubordinatorSpec<f64>;

/// Smallest Monte Carlo budget accepted by [`RatioQuery`].
pub const MIN_RATIO_MC: u64 = 1_000;
/// Default budget of the cached normalizer.
pub const NORMALIZER_MC: u64 = 1_000_000;
/// Truncation tolerance for analytic partitions.
pub const TRUNCATION_TOL: f64 = 1e-6;

/// `p_t(u) = (2πt)^{−1/2} exp(−u²/(2t))`.
pub fn gaussian_density<T: Real>(t: T, u: T) -> Result<T> {
    if !(t > T::zero()) {
        return Err(invalid(format!("Gaussian density needs t > 0, got {t}")));
    }
    let two = T::lit(2.0);
    Ok((-u * u / (two * t)).exp() / (two * T::PI() * t).sqrt())
}

/// Arguments of one evaluation of `q_s(u)/p_s(u)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioQuery {
    pub spec: Spec,
    pub s: f64,
    pub u: f64,
    pub mc_samples: u64,
}

impl RatioQuery {
    pub fn new(spec: Spec, s: f64, u: f64, mc_samples: u64) -> Result<Self> {
        let q = Self {
            spec,
            s,
            u,
            mc_samples,
        };
        q.validate()?;
        Ok(q)
    }

    fn validate(&self) -> Result<()> {
        if !(self.s > 0.0 && self.s.is_finite()) {
            return Err(invalid(format!("ratio needs s > 0, got {}", self.s)));
        }
        if !self.u.is_finite() {
            return Err(invalid("ratio needs a finite u"));
        }
        if self.mc_samples < MIN_RATIO_MC {
            return Err(invalid(format!(
                "ratio needs at least {MIN_RATIO_MC} Monte Carlo samples, got {}",
                self.mc_samples
            )));
        }
        Ok(())
    }
}

/// Unbiased estimate of `q_s(u)/p_s(u)`.
pub fn ratio_q_over_p<R: Rng + ?Sized>(q: &RatioQuery, rng: &mut R) -> Result<MCEstimate> {
    q.validate()?;
    let (s, u, c) = (q.s, q.u, q.spec.c());
    let prefactor = (c * u - 0.5 * c * c * s).exp();
    let slope = u / s - c;
    let e = q
        .spec
        .expect_increment(s, q.mc_samples, rng, |g| (-g * g / (2.0 * s) - g * slope).exp())?;
    Ok(e.scale(prefactor))
}

fn check_mc(mc: u64) -> Result<()> {
    if mc == 0 {
        return Err(invalid("Monte Carlo sample count must be positive"));
    }
    Ok(())
}

/// `g(t,x) = e^{tcx} q_x(−tx)/p_x(−tx)` through its reduced expectation; `g(t,0) = 1`.
pub fn g<R: Rng + ?Sized>(t: f64, x: f64, spec: &Spec, mc: u64, rng: &mut R) -> Result<MCEstimate> {
    check_mc(mc)?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(invalid(format!("g needs t ≥ 0, got {t}")));
    }
    if x == 0.0 {
        return Ok(MCEstimate::exact(1.0, mc));
    }
    if !(x > 0.0 && x <= 1.0) {
        return Err(invalid(format!("g needs x in (0,1], got {x}")));
    }
    let c = spec.c();
    let pre = (-0.5 * x * c * c).exp();
    if spec.is_zero() {
        return Ok(MCEstimate::exact(pre, mc));
    }
    let a = t + c;
    let e = spec.expect_increment(x, mc, rng, |gam| (-gam * gam / (2.0 * x) + gam * a).exp())?;
    Ok(e.scale(pre))
}

/// A spec with its lazily estimated, cached normalizer `q₁(0)/p₁(0)`.
#[derive(Debug)]
pub struct DensityContext {
    spec: Spec,
    normalizer_mc: u64,
    normalizer_stream: StreamId,
    normalizer: OnceLock<MCEstimate>,
}

impl DensityContext {
    /// Normalizer drawn from stream 0 of the normalizer family of `seed`.
    pub fn new(spec: Spec, seed: u64) -> Self {
        Self {
            spec,
            normalizer_mc: NORMALIZER_MC,
            normalizer_stream: Streams::new(seed).id(StreamTag::Normalizer, 0),
            normalizer: OnceLock::new(),
        }
    }

    pub fn with_normalizer_mc(mut self, mc: u64) -> Self {
        self.normalizer_mc = mc;
        self.normalizer = OnceLock::new();
        self
    }

    pub fn spec(&self) -> &Spec {
        &self.spec
    }

    pub fn normalizer_mc(&self) -> u64 {
        self.normalizer_mc
    }

    /// `q₁(0)/p₁(0) = g(0,1)`, estimated once.
    pub fn normalizer(&self) -> Result<MCEstimate> {
        if let Some(n) = self.normalizer.get() {
            return Ok(*n);
        }
        let mut rng = self.normalizer_stream.rng();
        let est = g(0.0, 1.0, &self.spec, self.normalizer_mc, &mut rng)?;
        let _ = self.normalizer.set(est);
        Ok(*self.normalizer.get().expect("set above"))
    }
}

/// `h(t,x) = (p₁(0)/q₁(0))^x · g(t,x)`.
pub fn h<R: Rng + ?Sized>(t: f64, x: f64, ctx: &DensityContext, mc: u64, rng: &mut R) -> Result<MCEstimate> {
    let gx = g(t, x, &ctx.spec, mc, rng)?;
    let norm = ctx.normalizer()?;
    let value = gx.value * norm.value.powf(-x);
    let rel = gx.rel_err().hypot(x * norm.rel_err());
    Ok(MCEstimate::new(value, value * rel, gx.n))
}

fn check_t(t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(invalid(format!("time must be nonnegative, got {t}")));
    }
    Ok(())
}

/// 𝐡(t, x) for a unit-mass partition, one independent `g` estimate per fragment.
pub fn h_product<R: Rng + ?Sized>(
    t: f64,
    partition: &MassPartition,
    ctx: &DensityContext,
    mc: u64,
    rng: &mut R,
) -> Result<MCEstimate> {
    h_product_parts(t, partition, ctx, mc, rng)?.finish(ctx)
}

/// 𝐡 split into the product of the `g` factors and the normalizer.
#[derive(Clone, Copy, Debug)]
pub struct HParts {
    /// `∏ g(t,xᵢ)` over the evaluated fragments, times `e^{tc·(dropped mass)}`.
    pub product: MCEstimate,
    /// Number of fragments evaluated.
    pub factors: usize,
}

impl HParts {
    pub fn finish(&self, ctx: &DensityContext) -> Result<MCEstimate> {
        Ok(self.product.div(ctx.normalizer()?))
    }
}

/// `∏ g(t,xᵢ)` without the normalizer.
pub fn h_product_parts<R: Rng + ?Sized>(
    t: f64,
    partition: &MassPartition,
    ctx: &DensityContext,
    mc: u64,
    rng: &mut R,
) -> Result<HParts> {
    check_t(t)?;
    partition.ensure_normalized()?;
    let mut acc = LogProduct::new();
    for &x in partition.masses() {
        acc.push(g(t, x, &ctx.spec, mc, rng)?);
    }
    Ok(HParts {
        product: acc.finish(),
        factors: partition.len(),
    })
}

/// 𝐡 for analytic partitions: fragments are evaluated in decreasing order
/// until the tail mass `m` satisfies `e^{t²m/2} − 1 < tol`; the tail then
/// contributes its exact factor `e^{tcm}`.
pub fn h_product_truncated<R: Rng + ?Sized>(
    t: f64,
    partition: &MassPartition,
    ctx: &DensityContext,
    mc: u64,
    tol: f64,
    rng: &mut R,
) -> Result<HParts> {
    check_t(t)?;
    partition.ensure_normalized()?;
    let masses = partition.masses();
    let mut tail: Vec<f64> = masses.iter().rev().scan(0.0, |s, &x| {
        *s += x;
        Some(*s)
    }).collect();
    tail.reverse();
    let mut acc = LogProduct::new();
    let mut factors = 0;
    for (i, &x) in masses.iter().enumerate() {
        if (0.5 * t * t * tail[i]).exp_m1() < tol {
            acc.push_exact_log(t * ctx.spec.c() * tail[i]);
            break;
        }
        acc.push(g(t, x, &ctx.spec, mc, rng)?);
        factors += 1;
    }
    Ok(HParts {
        product: acc.finish(),
        factors,
    })
}

/// Finite-dimensional density of the first `n` size-biased fragments.
pub fn h_n<R: Rng + ?Sized>(
    t: f64,
    xs: &[f64],
    ctx: &DensityContext,
    mc: u64,
    rng: &mut R,
) -> Result<MCEstimate> {
    check_t(t)?;
    if let Some(bad) = xs.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
        return Err(invalid(format!("h_n needs positive masses, got {bad}")));
    }
    let s: f64 = xs.iter().sum();
    if !(s < 1.0) {
        return Err(invalid(format!("h_n needs Σxᵢ < 1, got {s}")));
    }
    let spec = ctx.spec;
    let mut acc = LogProduct::new();
    acc.push_inverse(ctx.normalizer()?);
    acc.push(ratio_q_over_p(&RatioQuery::new(spec, 1.0 - s, s * t, mc)?, rng)?);
    for &x in xs {
        acc.push(ratio_q_over_p(&RatioQuery::new(spec, x, -t * x, mc)?, rng)?);
    }
    Ok(acc.finish())
}

/// Closed-form density of the size-biased pick `F̃₁(t)` of the Brownian fragmentation:
/// `t(2π)^{−1/2} z^{−1/2}(1−z)^{−3/2} exp(−t²z/(2(1−z)))`.
pub fn brownian_marginal_density<T: Real>(t: T, z: T) -> Result<T> {
    if !(z > T::zero() && z < T::one()) {
        return Err(invalid(format!("marginal density needs z in (0,1), got {z}")));
    }
    let one = T::one();
    let two = T::lit(2.0);
    let w = one - z;
    Ok(t / (two * T::PI()).sqrt() / (z.sqrt() * w * w.sqrt()) * (-t * t * z / (two * w)).exp())
}

/// CDF of `F̃₁(t)`: `√(z/(1−z))` is half-normal with scale `1/t`.
pub fn brownian_marginal_cdf(t: f64, z: f64) -> f64 {
    if z <= 0.0 {
        return 0.0;
    }
    if z >= 1.0 || t == 0.0 {
        return if z >= 1.0 { 1.0 } else { 0.0 };
    }
    erf(t * (z / (1.0 - z)).sqrt() / std::f64::consts::SQRT_2)
}

/// Quantile of `F̃₁(t)`, `t > 0`.
pub fn brownian_marginal_quantile(t: f64, p: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    let w = std::f64::consts::SQRT_2 * erf_inv(p) / t;
    w * w / (1.0 + w * w)
}

/// Density of `F̃₁(t)` under the X-driven law:
/// `t·q_z(−tz)·q_{1−z}(zt) / ((1−z)·q₁(0))`.
pub fn size_biased_marginal_density<R: Rng + ?Sized>(
    t: f64,
    z: f64,
    ctx: &DensityContext,
    mc: u64,
    rng: &mut R,
) -> Result<MCEstimate> {
    check_t(t)?;
    let base = brownian_marginal_density(t, z)?;
    if ctx.spec.is_zero() && ctx.spec.c() == 0.0 {
        return Ok(MCEstimate::exact(base, mc));
    }
    let spec = ctx.spec;
    let a = ratio_q_over_p(&RatioQuery::new(spec, z, -t * z, mc)?, rng)?;
    let b = ratio_q_over_p(&RatioQuery::new(spec, 1.0 - z, z * t, mc)?, rng)?;
    Ok(a.mul(b).div(ctx.normalizer()?).scale(base))
}

/// One point of a ratio scan.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub y: f64,
    pub ratio: MCEstimate,
    pub bound: f64,
}

impl ScanPoint {
    /// Estimate is below the bound up to `(1 + kσ)`.
    pub fn respects_bound(&self, k: f64) -> bool {
        self.ratio.value <= self.bound * (1.0 + k * self.ratio.stderr)
    }
}

/// `q_y(−ty)/p_y(−ty)` on the grid `ys`, with the deterministic bound `e^{t²y/2}`.
pub fn small_y_scan<R: Rng + ?Sized>(
    spec: &Spec,
    t: f64,
    ys: &[f64],
    mc: u64,
    rng: &mut R,
) -> Result<Vec<ScanPoint>> {
    ys.iter()
        .map(|&y| {
            Ok(ScanPoint {
                y,
                ratio: ratio_q_over_p(&RatioQuery::new(*spec, y, -t * y, mc)?, rng)?,
                bound: (0.5 * t * t * y).exp(),
            })
        })
        .collect()
}

/// Largest scanned `y*` such that every point with `y ≤ y*` lies below 1 by `kσ`.
pub fn small_y_threshold(points: &[ScanPoint], k: f64) -> Option<f64> {
    let mut sorted: Vec<&ScanPoint> = points.iter().collect();
    sorted.sort_by(|a, b| a.y.partial_cmp(&b.y).unwrap());
    let mut best = None;
    for p in sorted {
        if p.ratio.value + k * p.ratio.stderr < 1.0 {
            best = Some(p.y);
        } else {
            break;
        }
    }
    best
}

/// `q_{1−s}(st)/p_{1−s}(st)` along `s = 1 − 10^{−k}` against its limit `e^{tc}`.
pub fn large_s_profile<R: Rng + ?Sized>(
    spec: &Spec,
    t: f64,
    ks: &[u32],
    mc: u64,
    rng: &mut R,
) -> Result<Vec<(f64, MCEstimate)>> {
    ks.iter()
        .map(|&k| {
            let eps = 10f64.powi(-(k as i32));
            let s = 1.0 - eps;
            Ok((s, ratio_q_over_p(&RatioQuery::new(*spec, eps, s * t, mc)?, rng)?))
        })
        .collect()
}

/// Constructive bound `A^{1/ε}·D·p₁(0)/q₁(0)` on 𝐡 and on every `h_n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityBound {
    pub eps: f64,
    /// Upper bound of `y ↦ q_y(−ty)/p_y(−ty)` on `[ε,1]`, at least 1.
    pub a: f64,
    /// Upper bound of `S ↦ q_{1−S}(St)/p_{1−S}(St)` on `[0,1]`, at least `e^{tc}`.
    pub d: f64,
    pub bound: f64,
}

/// Scans both ratio functions on `points` grid points (values plus `4σ`).
pub fn density_bound<R: Rng + ?Sized>(
    ctx: &DensityContext,
    t: f64,
    eps: f64,
    points: usize,
    mc: u64,
    rng: &mut R,
) -> Result<DensityBound> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(invalid(format!("ε must lie in (0,1], got {eps}")));
    }
    if points < 2 {
        return Err(invalid("density bound needs at least 2 scan points"));
    }
    let spec = ctx.spec;
    let mut a = 1.0f64;
    for i in 0..points {
        let y = eps + (1.0 - eps) * i as f64 / (points - 1) as f64;
        let r = ratio_q_over_p(&RatioQuery::new(spec, y, -t * y, mc)?, rng)?;
        a = a.max(r.value + 4.0 * r.stderr);
    }
    let mut d = (t * spec.c()).exp();
    for i in 0..points {
        let s = i as f64 / points as f64;
        let r = ratio_q_over_p(&RatioQuery::new(spec, 1.0 - s, s * t, mc)?, rng)?;
        d = d.max(r.value + 4.0 * r.stderr);
    }
    let norm = ctx.normalizer()?;
    Ok(DensityBound {
        eps,
        a,
        d,
        bound: a.powf(1.0 / eps) * d / (norm.value - 4.0 * norm.stderr),
    })
}
