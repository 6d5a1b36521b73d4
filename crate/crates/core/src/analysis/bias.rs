use serde::{Deserialize, Serialize};

use crate::corpus::Transcript;
use crate::world::{AttributeRanges, Entity};

pub const COLOR_BINS: usize = 30;
pub const SIZE_BIN_WIDTH: f64 = 0.5;

/// Reference value a selected dot is compared against, over the selector's
/// own seven dots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    #[default]
    Median,
    Mean,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SelectionBias {
    pub baseline: Baseline,
    pub selections: usize,
    /// Distribution of selected dots over 30 equal color bins (sums to 1).
    pub color_distribution: Vec<f64>,
    /// Distribution over size bins of width 0.5 (sums to 1).
    pub size_distribution: Vec<f64>,
    /// Per color bin: selections / visible-dot occurrences. `None` for bins
    /// no visible dot fell in.
    pub color_selection_rate: Vec<Option<f64>>,
    pub size_selection_rate: Vec<Option<f64>>,
    /// Shares among selections strictly darker or lighter than the baseline;
    /// selections equal to it are left out. `darker + lighter = 1`.
    pub darker_share: f64,
    pub lighter_share: f64,
    pub larger_share: f64,
    pub smaller_share: f64,
}

fn bin(v: f64, lo: f64, hi: f64, n: usize) -> usize {
    let b = ((v - lo) / (hi - lo) * n as f64).floor();
    (b.max(0.0) as usize).min(n - 1)
}

fn reference(values: &mut [f64], baseline: Baseline) -> f64 {
    match baseline {
        Baseline::Mean => values.iter().sum::<f64>() / values.len() as f64,
        Baseline::Median => {
            values.sort_by(f64::total_cmp);
            let n = values.len();
            if n % 2 == 1 {
                values[n / 2]
            } else {
                0.5 * (values[n / 2 - 1] + values[n / 2])
            }
        }
    }
}

fn normalize(counts: &[usize]) -> Vec<f64> {
    let total: usize = counts.iter().sum();
    counts
        .iter()
        .map(|c| {
            if total == 0 {
                0.0
            } else {
                *c as f64 / total as f64
            }
        })
        .collect()
}

pub fn selection_bias(
    transcripts: &[Transcript],
    ranges: &AttributeRanges,
    baseline: Baseline,
) -> SelectionBias {
    let size_bins = ((ranges.size_max - ranges.size_min) / SIZE_BIN_WIDTH)
        .round()
        .max(1.0) as usize;
    let mut color_sel = vec![0usize; COLOR_BINS];
    let mut color_seen = vec![0usize; COLOR_BINS];
    let mut size_sel = vec![0usize; size_bins];
    let mut size_seen = vec![0usize; size_bins];
    let (mut darker, mut lighter, mut larger, mut smaller) = (0usize, 0usize, 0usize, 0usize);
    let mut selections = 0;

    for t in transcripts {
        for agent in 0..2 {
            let Some(id) = t.outcome.selections[agent] else {
                continue;
            };
            let visible: Vec<Entity> = t.world.visible_entities(agent);
            let Some(chosen) = visible.iter().find(|e| e.id == id) else {
                continue;
            };
            selections += 1;
            let cbin = |e: &Entity| bin(e.color, ranges.color_min, ranges.color_max, COLOR_BINS);
            let sbin = |e: &Entity| bin(e.size, ranges.size_min, ranges.size_max, size_bins);
            for e in &visible {
                color_seen[cbin(e)] += 1;
                size_seen[sbin(e)] += 1;
            }
            color_sel[cbin(chosen)] += 1;
            size_sel[sbin(chosen)] += 1;

            let mut colors: Vec<f64> = visible.iter().map(|e| e.color).collect();
            let mut sizes: Vec<f64> = visible.iter().map(|e| e.size).collect();
            let c_ref = reference(&mut colors, baseline);
            let s_ref = reference(&mut sizes, baseline);
            if chosen.color < c_ref {
                darker += 1;
            } else if chosen.color > c_ref {
                lighter += 1;
            }
            if chosen.size > s_ref {
                larger += 1;
            } else if chosen.size < s_ref {
                smaller += 1;
            }
        }
    }

    let rate = |sel: &[usize], seen: &[usize]| {
        sel.iter()
            .zip(seen)
            .map(|(s, n)| (*n > 0).then(|| *s as f64 / *n as f64))
            .collect()
    };
    let share = |a: usize, b: usize| {
        if a + b == 0 {
            0.0
        } else {
            a as f64 / (a + b) as f64
        }
    };
    SelectionBias {
        baseline,
        selections,
        color_distribution: normalize(&color_sel),
        size_distribution: normalize(&size_sel),
        color_selection_rate: rate(&color_sel, &color_seen),
        size_selection_rate: rate(&size_sel, &size_seen),
        darker_share: share(darker, lighter),
        lighter_share: share(lighter, darker),
        larger_share: share(larger, smaller),
        smaller_share: share(smaller, larger),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    #[test]
    fn distributions_sum_to_one() {
        let b = selection_bias(
            &synth::corpus(100, 3),
            &AttributeRanges::default(),
            Baseline::Median,
        );
        assert_eq!(b.selections, 200);
        assert_eq!(b.color_distribution.len(), 30);
        assert_eq!(b.size_distribution.len(), 14);
        assert!((b.color_distribution.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!((b.size_distribution.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!((b.darker_share + b.lighter_share - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_selection_one_bin() {
        let mut t = synth::corpus(1, 1).remove(0);
        t.outcome.selections[1] = None;
        let b = selection_bias(&[t], &AttributeRanges::default(), Baseline::Median);
        assert_eq!(b.selections, 1);
        assert_eq!(
            b.color_distribution.iter().filter(|p| **p == 1.0).count(),
            1
        );
        assert_eq!(b.size_distribution.iter().filter(|p| **p == 1.0).count(), 1);
    }

    #[test]
    fn bin_edges() {
        assert_eq!(bin(25.0, 25.0, 205.0, 30), 0);
        assert_eq!(bin(205.0, 25.0, 205.0, 30), 29);
        assert_eq!(bin(31.0, 25.0, 205.0, 30), 1);
        assert_eq!(bin(8.49, 8.0, 15.0, 14), 0);
        assert_eq!(bin(8.5, 8.0, 15.0, 14), 1);
    }

    #[test]
    fn median_and_mean() {
        let mut v = vec![5.0, 1.0, 3.0];
        assert_eq!(reference(&mut v, Baseline::Median), 3.0);
        let mut v = vec![1.0, 2.0, 6.0];
        assert_eq!(reference(&mut v, Baseline::Mean), 3.0);
    }

    #[test]
    fn empty_is_all_zero() {
        let b = selection_bias(&[], &AttributeRanges::default(), Baseline::Median);
        assert_eq!(b.selections, 0);
        assert!(b.color_distribution.iter().all(|p| *p == 0.0));
        assert!(b.color_selection_rate.iter().all(Option::is_none));
    }
}
