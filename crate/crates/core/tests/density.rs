use coalfrag::density::{density_bound, h_n, h_product, small_y_scan, small_y_threshold, DensityContext};
use coalfrag::excursion::sample_brownian_fragmentation;
use coalfrag::measure::{martingale_check, size_biased_rearrange};
use coalfrag::model::{EquivalenceClass, JumpLaw, SubordinatorSpec};
use coalfrag::rng::{StreamTag, Streams};
use coalfrag::stats::Moments;

type Spec = SubordinatorSpec<f64>;

fn cp_spec() -> Spec {
    SubordinatorSpec::compound_poisson(1.0, JumpLaw::Constant { a: 1.0 }, 1.0).unwrap()
}

#[test]
fn product_density_stays_below_constructive_bound() {
    let spec = cp_spec();
    let ctx = DensityContext::new(spec, 51);
    let streams = Streams::new(51);
    let mut rng = streams.stream(StreamTag::Density, 0);
    let ys: Vec<f64> = (0..20).map(|i| 10f64.powf(-4.0 + 4.0 * i as f64 / 19.0)).collect();
    let scan = small_y_scan(&spec, 1.0, &ys, 20_000, &mut rng).unwrap();
    let eps = small_y_threshold(&scan, 0.0).unwrap();
    let bound = density_bound(&ctx, 1.0, eps, 40, 20_000, &mut rng).unwrap();
    let mut worst = 0.0f64;
    for r in 0..10_000 {
        let s = sample_brownian_fragmentation(1.0, 1 << 10, &mut streams.stream(StreamTag::Fragmentation, r)).unwrap();
        let v = h_product(1.0, &s.partition, &ctx, 1000, &mut streams.stream(StreamTag::Martingale, r)).unwrap();
        worst = worst.max(v.value);
    }
    assert!(worst <= bound.bound, "max 𝐡 = {worst}, bound = {bound:?}");
}

#[test]
fn finite_dimensional_densities_have_constant_mean() {
    let ctx = DensityContext::new(cp_spec(), 52);
    let streams = Streams::new(52);
    let reps = 4000u64;
    let mut by_n = [Moments::new(); 3];
    for r in 0..reps {
        let s = sample_brownian_fragmentation(1.0, 1 << 12, &mut streams.stream(StreamTag::Fragmentation, r)).unwrap();
        let mut rng = streams.stream(StreamTag::Importance, r);
        let order = size_biased_rearrange(&s.partition, &mut rng).unwrap();
        for (n, m) in by_n.iter_mut().enumerate() {
            let prefix = &order[..(n + 1).min(order.len())];
            if prefix.iter().sum::<f64>() < 1.0 - 1e-9 {
                m.push(h_n(1.0, prefix, &ctx, 1000, &mut rng).unwrap().value);
            }
        }
    }
    let ests: Vec<_> = by_n.iter().map(|m| m.estimate()).collect();
    for (n, e) in ests.iter().enumerate() {
        assert!(e.n >= reps - 5, "n = {}: only {} usable prefixes", n + 1, e.n);
        assert!(e.within(1.0, 4.0, 0.0), "n = {}: {e:?}", n + 1);
    }
    for w in ests.windows(2) {
        assert!((w[0].value - w[1].value).abs() <= 4.0 * w[0].stderr.hypot(w[1].stderr), "{ests:?}");
    }
}

#[test]
fn weights_are_positive_for_gamma_and_ess_is_reported() {
    let spec = SubordinatorSpec::gamma(1.0, 1.0, 1.0).unwrap();
    assert_eq!(spec.classify_equivalence(0.5, 1e6, 1e-1).unwrap(), EquivalenceClass::HoldsNumerically);
    let ctx = DensityContext::new(spec, 53).with_normalizer_mc(100_000);
    let points = martingale_check(&ctx, &[0.25, 0.5, 1.0, 2.0], 1 << 10, 100, 1000, &Streams::new(53)).unwrap();
    for p in &points {
        println!("t = {}: ESS = {:.1} of {}, min weight = {:.3e}", p.t, p.effective_sample_size, p.replicates, p.min_weight);
        assert!(p.min_weight > 0.0);
    }
}
