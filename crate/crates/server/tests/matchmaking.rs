use grounding_server::matchmaker::Matchmaker;
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[test]
fn shared_count_is_uniform_over_pairings() {
    let mut m = Matchmaker::new(17, "k", 0);
    let mut counts = [0usize; 3];
    for i in 0..3000u64 {
        m.join(2 * i).unwrap();
        let p = m.join(2 * i + 1).unwrap().unwrap();
        counts[p.world.num_shared - 4] += 1;
        assert_eq!(p.world.views[0].visible_ids.len(), 7);
    }
    let expected = 1000.0;
    let stat: f64 = counts
        .iter()
        .map(|c| (*c as f64 - expected).powi(2) / expected)
        .sum();
    let p = 1.0 - ChiSquared::new(2.0).unwrap().cdf(stat);
    assert!(p > 0.001, "{counts:?} p={p}");
}

#[test]
fn first_speaker_takes_both_values() {
    let mut m = Matchmaker::new(3, "f", 0);
    let mut seen = [0; 2];
    for i in 0..200u64 {
        m.join(2 * i).unwrap();
        seen[m.join(2 * i + 1).unwrap().unwrap().first_speaker] += 1;
    }
    assert!(seen[0] > 60 && seen[1] > 60, "{seen:?}");
}
