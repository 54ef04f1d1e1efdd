use std::f64::consts::PI;

use coalfrag::excursion::{brownian_bridge, record_indices, sample_brownian_fragmentation, vervaat};
use coalfrag::measure::two_sample_test;
use coalfrag::rng::{StreamTag, Streams};

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn small_fragments_scale_as_two_over_pi() {
    // N(>ε) ≈ t√(2/π) ε^{−1/2}, so n²F↓_n → 2t²/π; small t leaves F↓_200 near the grid step
    let streams = Streams::new(31);
    for t in [1.0, 2.0] {
        let medians: Vec<f64> = (0..100)
            .map(|r| {
                let s = sample_brownian_fragmentation(t, 1 << 18, &mut streams.stream(StreamTag::Fragmentation, r)).unwrap();
                median((50..=200).map(|n| (n * n) as f64 * s.partition.nth_largest(n)).collect())
            })
            .collect();
        let m = median(medians);
        let target = 2.0 * t * t / PI;
        assert!((m - target).abs() < 0.05 * target, "t = {t}: {m} vs {target}");
    }
}

#[test]
fn largest_fragment_is_self_similar() {
    // a fragment of mass m at time s splits like m·F(√m (t − s))
    let streams = Streams::new(32);
    let n = 1 << 15;
    let reps = 2000u64;
    let mut inner = Vec::with_capacity(reps as usize);
    let mut fresh = Vec::with_capacity(reps as usize);
    for r in 0..reps {
        let mut rng = streams.stream(StreamTag::Fragmentation, r);
        let exc = vervaat(&brownian_bridge(n, &mut rng).unwrap()).unwrap();
        let coarse = record_indices(&exc, 0.5).unwrap();
        let fine = record_indices(&exc, 1.0).unwrap();
        let bounds = |rec: &[usize], i: usize| (rec[i], rec.get(i + 1).copied().unwrap_or(n));
        let (lo, hi) = (0..coarse.len())
            .map(|i| bounds(&coarse, i))
            .max_by_key(|(a, b)| (b - a, std::cmp::Reverse(*a)))
            .unwrap();
        let largest_sub = (0..fine.len())
            .map(|i| bounds(&fine, i))
            .filter(|&(a, _)| a >= lo && a < hi)
            .map(|(a, b)| b.min(hi) - a)
            .max()
            .unwrap();
        let m = (hi - lo) as f64 / n as f64;
        inner.push(largest_sub as f64 / (hi - lo) as f64);
        let s = sample_brownian_fragmentation(0.5 * m.sqrt(), n, &mut streams.stream(StreamTag::Comparison, r)).unwrap();
        fresh.push(s.partition.largest());
    }
    let res = two_sample_test(&inner, &fresh, 10, None).unwrap();
    assert!(res.p_value > 1e-3, "{res:?}");
}
