use std::time::Instant;

use grounding_core::analysis::{selection_bias, Baseline};
use grounding_core::rng;
use grounding_core::synth;
use grounding_core::world::{generate_world, validate_world, AttributeRanges};
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn chi_square_uniform(values: &[f64], lo: f64, hi: f64, bins: usize) -> f64 {
    let mut counts = vec![0usize; bins];
    for v in values {
        let b = (((v - lo) / (hi - lo)) * bins as f64).floor() as usize;
        counts[b.min(bins - 1)] += 1;
    }
    let expected = values.len() as f64 / bins as f64;
    let stat: f64 = counts
        .iter()
        .map(|c| (*c as f64 - expected).powi(2) / expected)
        .sum();
    1.0 - ChiSquared::new((bins - 1) as f64).unwrap().cdf(stat)
}

#[test]
fn ten_thousand_worlds_per_k_are_valid_and_uniform() {
    let start = Instant::now();
    let ranges = AttributeRanges::default();
    for k in 4..=6 {
        let mut sizes = Vec::new();
        let mut colors = Vec::new();
        for i in 0..10_000u64 {
            let w = generate_world(k, rng::derive_seed(k as u64, i)).unwrap();
            assert!(validate_world(&w).is_empty(), "k={k} i={i}");
            sizes.extend(w.entities.iter().map(|e| e.size));
            colors.extend(w.entities.iter().map(|e| e.color));
        }
        let ps = chi_square_uniform(&sizes, ranges.size_min, ranges.size_max, 10);
        let pc = chi_square_uniform(&colors, ranges.color_min, ranges.color_max, 10);
        assert!(ps > 0.001, "k={k} size p={ps}");
        assert!(pc > 0.001, "k={k} color p={pc}");
    }
    assert!(start.elapsed().as_secs() < 60, "{:?}", start.elapsed());
}

#[test]
fn random_selections_have_no_darkness_bias() {
    let mut corpus = synth::corpus(3000, 21);
    let mut r = rng::seeded(5);
    for t in &mut corpus {
        for agent in 0..2 {
            let ids = &t.world.views[agent].visible_ids;
            t.outcome.selections[agent] = Some(ids[rng::below(&mut r, 7) as usize]);
        }
    }
    let b = selection_bias(&corpus, &AttributeRanges::default(), Baseline::Median);
    assert_eq!(b.selections, 6000);
    assert!((b.darker_share - 0.5).abs() < 0.02, "{}", b.darker_share);
    assert!((b.larger_share - 0.5).abs() < 0.02, "{}", b.larger_share);
}
