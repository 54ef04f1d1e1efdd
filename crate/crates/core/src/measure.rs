//! Size-biased rearrangement, the martingale check of 𝐡(t,F(t)), importance
//! weighting of Brownian fragmentations and the goodness-of-fit tests that tie
//! simulated fragments to the closed-form densities.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::density::{brownian_marginal_cdf, brownian_marginal_quantile, h_product_parts, size_biased_marginal_density, DensityContext};
use crate::error::{invalid, Result};
use crate::excursion::{sample_brownian_fragmentation, LawTag};
pub use crate::excursion::FragmentationSample;
use crate::parallel::try_map_replicates;
use crate::partition::MassPartition;
use crate::quad::gauss_legendre;
use crate::rng::{StreamTag, Streams};
use crate::stats::{chi_square_gof, chi_square_two_sample, histogram, ChiSquareResult, MCEstimate, Moments};

/// Effective sample size fraction below which a warning is attached.
pub const ESS_WARNING_FRACTION: f64 = 0.1;

/// Successive size-biased picks without replacement.
pub fn size_biased_rearrange<R: Rng + ?Sized>(partition: &MassPartition, rng: &mut R) -> Result<Vec<f64>> {
    partition.ensure_normalized()?;
    let mut rest: Vec<f64> = partition.masses().to_vec();
    let mut remaining = partition.total();
    let mut out = Vec::with_capacity(rest.len());
    while !rest.is_empty() {
        let i = pick_index(&rest, remaining, rng);
        let x = rest.swap_remove(i);
        remaining = (remaining - x).max(0.0);
        out.push(x);
    }
    Ok(out)
}

/// One size-biased pick `F̃₁`.
pub fn size_biased_pick<R: Rng + ?Sized>(partition: &MassPartition, rng: &mut R) -> Result<f64> {
    partition.ensure_normalized()?;
    Ok(partition.masses()[pick_index(partition.masses(), partition.total(), rng)])
}

fn pick_index<R: Rng + ?Sized>(masses: &[f64], total: f64, rng: &mut R) -> usize {
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, &m) in masses.iter().enumerate() {
        acc += m;
        if target < acc {
            return i;
        }
    }
    masses.len() - 1
}

fn stream_index(t_index: usize, replicate: u64) -> u64 {
    ((t_index as u64) << 32) | replicate
}

fn check_run(grid_n: usize, replicates: u64) -> Result<()> {
    if grid_n < 2 {
        return Err(invalid(format!("grid size must be at least 2, got {grid_n}")));
    }
    if replicates < 2 {
        return Err(invalid(format!("need at least 2 replicates, got {replicates}")));
    }
    Ok(())
}

/// One Brownian path evaluated under the density.
#[derive(Clone, Debug)]
struct WeightedPath {
    sample: FragmentationSample,
    product: MCEstimate,
}

fn weighted_paths(
    ctx: &DensityContext,
    t: f64,
    t_index: usize,
    grid_n: usize,
    replicates: u64,
    mc: u64,
    streams: &Streams,
) -> Result<Vec<WeightedPath>> {
    try_map_replicates(replicates, |r| {
        let idx = stream_index(t_index, r);
        let id = streams.id(StreamTag::Fragmentation, idx);
        let mut rng = id.rng();
        let mut sample = sample_brownian_fragmentation(t, grid_n, &mut rng)?;
        sample.seed = Some(id);
        sample.law_tag = LawTag::Weighted { spec: *ctx.spec() };
        let mut inner = streams.stream(StreamTag::Martingale, idx);
        let product = h_product_parts(t, &sample.partition, ctx, mc, &mut inner)?.product;
        Ok(WeightedPath { sample, product })
    })
}

/// `E^(B)[𝐡(t,F(t))]` at one time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MartingalePoint {
    pub t: f64,
    pub estimate: MCEstimate,
    /// Path-to-path standard error of the unnormalized mean.
    pub outer_stderr: f64,
    /// Part of the outer error explained by the inner Monte Carlo noise.
    pub inner_stderr: f64,
    pub normalizer: MCEstimate,
    /// `(Σw)²/Σw²` of the path weights.
    pub effective_sample_size: f64,
    pub min_weight: f64,
    pub replicates: u64,
}

/// Mean of 𝐡(t,F(t)) over Brownian fragmentations, for each `t` in `t_list`.
///
/// Each path's weight `∏ g(t,xᵢ)` is estimated with `mc` inner samples per
/// fragment. By the law of total variance the sample variance of the noisy
/// weights already contains the inner variance, so the reported stderr is the
/// sample one; the inner share is reported separately.
pub fn martingale_check(
    ctx: &DensityContext,
    t_list: &[f64],
    grid_n: usize,
    replicates: u64,
    mc: u64,
    streams: &Streams,
) -> Result<Vec<MartingalePoint>> {
    check_run(grid_n, replicates)?;
    let normalizer = ctx.normalizer()?;
    t_list
        .iter()
        .enumerate()
        .map(|(ti, &t)| {
            let paths = weighted_paths(ctx, t, ti, grid_n, replicates, mc, streams)?;
            let outer: Moments = paths.iter().map(|p| p.product.value).collect();
            let inner_var: f64 = paths.iter().map(|p| p.product.stderr.powi(2)).sum::<f64>() / replicates as f64;
            let raw = outer.estimate();
            let (sum, sum_sq, min_weight) = paths.iter().fold((0.0, 0.0, f64::INFINITY), |(a, b, m), p| {
                let w = p.product.value;
                (a + w, b + w * w, m.min(w))
            });
            Ok(MartingalePoint {
                t,
                estimate: raw.div(normalizer),
                outer_stderr: raw.stderr,
                inner_stderr: (inner_var / replicates as f64).sqrt(),
                normalizer,
                effective_sample_size: if sum_sq > 0.0 { sum * sum / sum_sq } else { 0.0 },
                min_weight,
                replicates,
            })
        })
        .collect()
}

/// Weighted estimate of `E^(X)[f(F(t))]` with weight diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub t: f64,
    pub estimate: MCEstimate,
    /// Plain Brownian mean of `f`.
    pub unweighted: MCEstimate,
    pub effective_sample_size: f64,
    pub min_weight: f64,
    pub max_weight: f64,
    pub replicates: u64,
    pub warning: Option<String>,
}

/// `mean[f(F^B(t))·𝐡(t,F^B(t))]`.
pub fn importance_expectation<F>(
    f: F,
    ctx: &DensityContext,
    t: f64,
    grid_n: usize,
    replicates: u64,
    mc: u64,
    streams: &Streams,
) -> Result<ImportanceReport>
where
    F: Fn(&MassPartition) -> f64 + Sync,
{
    check_run(grid_n, replicates)?;
    let normalizer = ctx.normalizer()?;
    let paths = weighted_paths(ctx, t, 0, grid_n, replicates, mc, streams)?;
    let mut weighted = Moments::new();
    let mut plain = Moments::new();
    let (mut sw, mut sw2) = (0.0, 0.0);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in &paths {
        let fx = f(&p.sample.partition);
        if !fx.is_finite() {
            return Err(invalid("functional returned a non-finite value"));
        }
        let w = p.product.value / normalizer.value;
        weighted.push(fx * p.product.value);
        plain.push(fx);
        sw += w;
        sw2 += w * w;
        lo = lo.min(w);
        hi = hi.max(w);
    }
    let ess = if sw2 > 0.0 { sw * sw / sw2 } else { 0.0 };
    let warning = (ess < ESS_WARNING_FRACTION * replicates as f64).then(|| {
        format!("effective sample size {ess:.1} is below 10% of {replicates} replicates")
    });
    Ok(ImportanceReport {
        t,
        estimate: weighted.estimate().div(normalizer),
        unweighted: plain.estimate(),
        effective_sample_size: ess,
        min_weight: lo,
        max_weight: hi,
        replicates,
        warning,
    })
}

/// Chi-square test of one size-biased pick per Brownian path against the closed form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginalReport {
    pub t: f64,
    pub grid_n: usize,
    pub replicates: u64,
    pub edges: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub counts: Vec<u64>,
    pub chi_square: ChiSquareResult,
}

/// Histograms `F̃₁(t)` over `bins` equal-probability bins of the Brownian marginal.
pub fn marginal_density_test(
    t: f64,
    grid_n: usize,
    replicates: u64,
    bins: usize,
    streams: &Streams,
) -> Result<MarginalReport> {
    check_run(grid_n, replicates)?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(invalid(format!("time must be nonnegative, got {t}")));
    }
    if bins < 2 {
        return Err(invalid("need at least 2 bins"));
    }
    let picks = try_map_replicates(replicates, |r| {
        let mut rng = streams.stream(StreamTag::Marginal, r);
        let s = sample_brownian_fragmentation(t, grid_n, &mut rng)?;
        size_biased_pick(&s.partition, &mut rng)
    })?;
    let (edges, probabilities) = if t == 0.0 {
        (vec![1.0, 1.0], vec![1.0])
    } else {
        let edges: Vec<f64> = (0..=bins)
            .map(|i| brownian_marginal_quantile(t, i as f64 / bins as f64))
            .collect();
        let probs = edges
            .windows(2)
            .map(|w| brownian_marginal_cdf(t, w[1]) - brownian_marginal_cdf(t, w[0]))
            .collect();
        (edges, probs)
    };
    let counts = if t == 0.0 {
        vec![picks.iter().filter(|&&z| z == 1.0).count() as u64]
    } else {
        histogram(&picks, &edges)
    };
    let chi_square = chi_square_gof(&counts, &probabilities);
    Ok(MarginalReport {
        t,
        grid_n,
        replicates,
        edges,
        probabilities,
        counts,
        chi_square,
    })
}

/// Two-sample chi-square on `bins` bins at the pooled quantiles.
///
/// With `lattice = Some(h)` the edges are moved to the nearest odd multiple
/// of `h/2`, so that samples living on the lattice `hℤ` never sit on an edge.
pub fn two_sample_test(a: &[f64], b: &[f64], bins: usize, lattice: Option<f64>) -> Result<ChiSquareResult> {
    if a.is_empty() || b.is_empty() || bins < 2 {
        return Err(invalid("two-sample test needs two nonempty samples and at least 2 bins"));
    }
    let mut pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    pooled.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut edges = vec![f64::NEG_INFINITY];
    for i in 1..bins {
        let q = pooled[(i * pooled.len()) / bins];
        let e = match lattice {
            Some(h) => ((q / h).floor() + 0.5) * h,
            None => q,
        };
        if e > *edges.last().unwrap() {
            edges.push(e);
        }
    }
    edges.push(f64::INFINITY);
    let ca = histogram(a, &edges);
    let cb = histogram(b, &edges);
    Ok(chi_square_two_sample(&ca, &cb))
}

/// `∫ₐ¹` of the X-driven marginal of `F̃₁(t)` against its importance-sampling counterpart
/// `E^(X)[Σ xᵢ 1{xᵢ > a}]`, two estimates of the same number.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailCheck {
    pub threshold: f64,
    pub quadrature: MCEstimate,
    pub importance: ImportanceReport,
    /// Difference in units of the combined standard error.
    pub z_score: f64,
}

/// Cross-check of the weighted marginal density with weighted path simulation.
#[allow(clippy::too_many_arguments)]
pub fn marginal_tail_check(
    ctx: &DensityContext,
    t: f64,
    threshold: f64,
    grid_n: usize,
    replicates: u64,
    mc: u64,
    nodes: usize,
    streams: &Streams,
) -> Result<TailCheck> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(invalid(format!("threshold must lie in (0,1), got {threshold}")));
    }
    // 1 − z = w² tames the (1−z)^{−3/2} endpoint
    let top = (1.0 - threshold).sqrt();
    let mut value = 0.0;
    let mut var = 0.0;
    for (k, (w, wt)) in gauss_legendre(nodes, 0.0, top).into_iter().enumerate() {
        let z = 1.0 - w * w;
        let mut rng = streams.stream(StreamTag::Density, k as u64);
        let d = size_biased_marginal_density(t, z, ctx, mc, &mut rng)?;
        let jac = 2.0 * w * wt;
        value += jac * d.value;
        var += (jac * d.stderr).powi(2);
    }
    let quadrature = MCEstimate::new(value, var.sqrt(), mc);
    let importance = importance_expectation(
        |p| p.masses().iter().filter(|&&x| x > threshold).sum(),
        ctx,
        t,
        grid_n,
        replicates,
        mc,
        streams,
    )?;
    let diff = importance.estimate.sub(quadrature);
    Ok(TailCheck {
        threshold,
        quadrature,
        z_score: diff.value / diff.stderr,
        importance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{JumpLaw, SubordinatorSpec};

    fn rng(i: u64) -> crate::rng::SimRng {
        Streams::new(51).stream(StreamTag::Comparison, i)
    }

    #[test]
    fn rearrange_examples() {
        assert_eq!(size_biased_rearrange(&MassPartition::unit(), &mut rng(0)).unwrap(), vec![1.0]);
        let bad = MassPartition::new(vec![0.5, 0.2]).unwrap();
        assert!(size_biased_rearrange(&bad, &mut rng(0)).is_err());
        let half = MassPartition::new(vec![0.5, 0.5]).unwrap();
        let mut r = rng(1);
        let m = 100_000;
        // both masses are equal, so track which slot is taken first
        let firsts = (0..m).filter(|_| pick_index(half.masses(), 1.0, &mut r) == 0).count() as f64;
        assert!((firsts / m as f64 - 0.5).abs() < 4.0 * (0.25 / m as f64).sqrt());
    }

    #[test]
    fn rearrange_matches_enumeration_for_three_masses() {
        let p = MassPartition::new(vec![0.7, 0.2, 0.1]).unwrap();
        let m = p.masses();
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let prob = |o: &[usize; 3]| m[o[0]] * m[o[1]] / (1.0 - m[o[0]]);
        let total: f64 = perms.iter().map(prob).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!((prob(&[0, 1, 2]) - 0.7 * (0.2 / 0.3)).abs() < 1e-15);
        let draws = 1_000_000;
        let mut counts = [0u64; 6];
        let mut r = rng(2);
        for _ in 0..draws {
            let o = size_biased_rearrange(&p, &mut r).unwrap();
            let key: Vec<usize> = o.iter().map(|x| m.iter().position(|y| y == x).unwrap()).collect();
            let idx = perms.iter().position(|q| q[..] == key[..]).unwrap();
            counts[idx] += 1;
        }
        for (k, o) in perms.iter().enumerate() {
            let pk = prob(o);
            let se = (pk * (1.0 - pk) / draws as f64).sqrt();
            assert!((counts[k] as f64 / draws as f64 - pk).abs() < 4.0 * se, "{o:?}");
        }
    }

    #[test]
    fn zero_spec_martingale_is_exactly_one() {
        let ctx = DensityContext::new(SubordinatorSpec::zero(0.0).unwrap(), 1);
        let pts = martingale_check(&ctx, &[0.5, 1.0], 256, 20, 10, &Streams::new(3)).unwrap();
        for p in pts {
            assert_eq!(p.estimate.value, 1.0);
            assert_eq!(p.estimate.stderr, 0.0);
        }
    }

    #[test]
    fn zero_spec_weights_reproduce_plain_estimate() {
        let ctx = DensityContext::new(SubordinatorSpec::zero(0.0).unwrap(), 1);
        let rep = importance_expectation(|p| p.largest(), &ctx, 1.0, 512, 50, 10, &Streams::new(4)).unwrap();
        assert_eq!(rep.estimate.value, rep.unweighted.value);
        assert_eq!(rep.effective_sample_size, 50.0);
        assert!(rep.warning.is_none());
    }

    #[test]
    fn weights_are_positive_for_compound_poisson() {
        let spec = SubordinatorSpec::compound_poisson(1.0, JumpLaw::Constant { a: 1.0 }, 1.0).unwrap();
        let ctx = DensityContext::new(spec, 5).with_normalizer_mc(20_000);
        let rep = importance_expectation(|_| 1.0, &ctx, 1.0, 1024, 200, 1000, &Streams::new(5)).unwrap();
        assert!(rep.min_weight > 0.0);
        assert!(rep.estimate.within(1.0, 4.0, 0.0), "{:?}", rep.estimate);
    }

    #[test]
    fn marginal_test_degenerate_and_probabilities() {
        let rep = marginal_density_test(0.0, 256, 10, 20, &Streams::new(6)).unwrap();
        assert_eq!(rep.counts, vec![10]);
        assert_eq!(rep.probabilities, vec![1.0]);
        let rep = marginal_density_test(1.0, 1024, 200, 20, &Streams::new(6)).unwrap();
        assert!((rep.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(rep.chi_square.dof, 19);
        assert_eq!(rep.counts.iter().sum::<u64>(), 200);
    }

    #[test]
    fn two_sample_test_on_lattice() {
        let mut r = rng(7);
        let a: Vec<f64> = (0..2000).map(|_| (r.random::<f64>() * 256.0).round() / 256.0).collect();
        let b: Vec<f64> = (0..2000).map(|_| r.random::<f64>()).collect();
        let res = two_sample_test(&a, &b, 10, Some(1.0 / 256.0)).unwrap();
        assert!(res.p_value > 1e-3);
        let c: Vec<f64> = b.iter().map(|x| x * x).collect();
        assert!(two_sample_test(&a, &c, 10, None).unwrap().p_value < 1e-6);
    }
}
