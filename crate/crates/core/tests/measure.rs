use coalfrag::measure::size_biased_rearrange;
use coalfrag::rng::{StreamTag, Streams};
use coalfrag::MassPartition;

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, k - 1);
            out.push(q);
        }
    }
    out
}

#[test]
fn rearrangement_matches_enumeration_for_four_masses() {
    let x = [0.4, 0.3, 0.2, 0.1];
    let part = MassPartition::new(x.to_vec()).unwrap();
    let perms = permutations(4);
    let exact: Vec<f64> = perms
        .iter()
        .map(|o| {
            let mut left = 1.0;
            o.iter().fold(1.0, |acc, &i| {
                let p = acc * x[i] / left;
                left -= x[i];
                p
            })
        })
        .collect();
    assert!((exact.iter().sum::<f64>() - 1.0).abs() < 1e-12);

    let draws = 1_000_000u64;
    let mut counts = vec![0u64; perms.len()];
    let mut rng = Streams::new(61).stream(StreamTag::Comparison, 0);
    for _ in 0..draws {
        let v = size_biased_rearrange(&part, &mut rng).unwrap();
        let o: Vec<usize> = v.iter().map(|m| x.iter().position(|y| y == m).unwrap()).collect();
        counts[perms.iter().position(|p| *p == o).unwrap()] += 1;
    }
    let n = draws as f64;
    let tv = 0.5 * counts.iter().zip(&exact).map(|(&c, p)| (c as f64 / n - p).abs()).sum::<f64>();
    let sigma = 0.5 * exact.iter().map(|p| (p * (1.0 - p) / n).sqrt()).sum::<f64>();
    assert!(tv < 4.0 * sigma, "tv = {tv}, σ = {sigma}");
}
