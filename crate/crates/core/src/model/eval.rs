use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use super::config::Variant;
use super::network::{cross_entropy, forward, Inputs, Mode};
use super::params::Parameters;
use crate::corpus::{TargetExample, TestVariants};

const EVAL_BATCH: usize = 64;

fn logits_for(params: &Parameters, chunk: &[TargetExample]) -> ndarray::Array2<f64> {
    let refs: Vec<&TargetExample> = chunk.iter().collect();
    forward(params, &Inputs::from_examples(&refs), 0.0, Mode::Eval).logits
}

/// Argmax slot per example; ties go to the lowest slot.
pub fn predict(params: &Parameters, examples: &[TargetExample]) -> Vec<usize> {
    let mut out = Vec::with_capacity(examples.len());
    for chunk in examples.chunks(EVAL_BATCH) {
        let logits = logits_for(params, chunk);
        for row in logits.rows() {
            let mut best = 0;
            for (i, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = i;
                }
            }
            out.push(best);
        }
    }
    out
}

pub fn correctness(params: &Parameters, examples: &[TargetExample]) -> Vec<bool> {
    predict(params, examples)
        .into_iter()
        .zip(examples)
        .map(|(p, e)| p == e.label)
        .collect()
}

pub fn accuracy(params: &Parameters, examples: &[TargetExample]) -> f64 {
    if examples.is_empty() {
        return 0.0;
    }
    let c = correctness(params, examples);
    c.iter().filter(|x| **x).count() as f64 / c.len() as f64
}

/// Mean cross-entropy in eval mode.
pub fn mean_loss(params: &Parameters, examples: &[TargetExample]) -> f64 {
    if examples.is_empty() {
        return f64::NAN;
    }
    let mut total = 0.0;
    for chunk in examples.chunks(EVAL_BATCH) {
        let labels: Vec<usize> = chunk.iter().map(|e| e.label).collect();
        total += cross_entropy(&logits_for(params, chunk), &labels).0 * chunk.len() as f64;
    }
    total / examples.len() as f64
}

/// Two-sided paired t-test on per-example correctness. Identical vectors
/// give 1; a constant nonzero difference gives 0; fewer than two pairs
/// give 1.
pub fn paired_ttest(a: &[bool], b: &[bool]) -> f64 {
    assert_eq!(a.len(), b.len(), "paired samples must have equal length");
    let n = a.len();
    if n < 2 {
        return 1.0;
    }
    let d: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| *x as u8 as f64 - *y as u8 as f64)
        .collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        return if mean == 0.0 { 1.0 } else { 0.0 };
    }
    let t = mean / (var / n as f64).sqrt();
    let df = (n - 1) as f64;
    beta_reg(df / 2.0, 0.5, df / (df + t * t))
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    (mean, var.sqrt())
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub seed: u64,
    pub params: Parameters,
    pub best_valid_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantScores {
    pub variant: Variant,
    pub seeds: Vec<u64>,
    /// Full-testset accuracy per seed, in `seeds` order.
    pub full_accuracies: Vec<f64>,
    pub full_mean: f64,
    pub full_std: f64,
    /// Seed with the lowest validation loss; the rows below use it.
    pub best_seed: u64,
    pub best_full: f64,
    pub uncorrelated: f64,
    pub success_only: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTest {
    pub a: Variant,
    pub b: Variant,
    /// Examples in the uncorrelated testset.
    pub n: usize,
    pub accuracy_a: f64,
    pub accuracy_b: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub full_size: usize,
    pub uncorrelated_size: usize,
    pub success_only_size: usize,
    pub variants: Vec<VariantScores>,
    pub ttests: Vec<PairTest>,
}

pub fn evaluate(models: &[TrainedModel], tests: &TestVariants) -> EvalReport {
    let mut by_variant: BTreeMap<Variant, Vec<&TrainedModel>> = BTreeMap::new();
    for m in models {
        by_variant.entry(m.params.variant).or_default().push(m);
    }
    let mut variants = Vec::new();
    let mut best_correct: Vec<(Variant, Vec<bool>)> = Vec::new();
    for (variant, mut group) in by_variant {
        group.sort_by_key(|m| m.seed);
        let full_accuracies: Vec<f64> = group
            .iter()
            .map(|m| accuracy(&m.params, &tests.full))
            .collect();
        let (full_mean, full_std) = mean_std(&full_accuracies);
        let (bi, best) = group
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.best_valid_loss.total_cmp(&b.1.best_valid_loss))
            .expect("group is non-empty");
        best_correct.push((variant, correctness(&best.params, &tests.uncorrelated)));
        variants.push(VariantScores {
            variant,
            seeds: group.iter().map(|m| m.seed).collect(),
            full_mean,
            full_std,
            best_seed: best.seed,
            best_full: full_accuracies[bi],
            full_accuracies,
            uncorrelated: accuracy(&best.params, &tests.uncorrelated),
            success_only: accuracy(&best.params, &tests.success_only),
        });
    }
    let mut ttests = Vec::new();
    for i in 0..best_correct.len() {
        for j in i + 1..best_correct.len() {
            let (va, ca) = &best_correct[i];
            let (vb, cb) = &best_correct[j];
            let acc = |c: &[bool]| {
                if c.is_empty() {
                    0.0
                } else {
                    c.iter().filter(|x| **x).count() as f64 / c.len() as f64
                }
            };
            ttests.push(PairTest {
                a: *va,
                b: *vb,
                n: ca.len(),
                accuracy_a: acc(ca),
                accuracy_b: acc(cb),
                p_value: paired_ttest(ca, cb),
            });
        }
    }
    EvalReport {
        full_size: tests.full.len(),
        uncorrelated_size: tests.uncorrelated.len(),
        success_only_size: tests.success_only.len(),
        variants,
        ttests,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ttest_conventions() {
        let a = vec![true, false, true, true];
        assert_eq!(paired_ttest(&a, &a), 1.0);
        let ones = vec![true; 100];
        let zeros = vec![false; 100];
        assert!(paired_ttest(&ones, &zeros) < 1e-30);
        assert_eq!(paired_ttest(&[true], &[false]), 1.0);
    }

    #[test]
    fn ttest_symmetric() {
        let a = [true, true, false, true, false, true, true, false];
        let b = [false, true, false, false, false, true, false, false];
        let p = paired_ttest(&a, &b);
        assert!((p - paired_ttest(&b, &a)).abs() < 1e-15);
        assert!(p > 0.0 && p < 1.0);
    }

    #[test]
    fn mean_std_sample() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - 1.2909944487358056).abs() < 1e-12);
    }
}
