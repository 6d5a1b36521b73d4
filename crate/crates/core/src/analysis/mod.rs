//! Corpus statistics: per-shared-count basic statistics, nuanced-expression
//! rates, and selection bias toward dark or large dots.

mod bias;
mod nuance;
pub mod plot;
mod stats;

use serde::{Deserialize, Serialize};

pub use bias::{selection_bias, Baseline, SelectionBias, COLOR_BINS, SIZE_BIN_WIDTH};
pub use nuance::{nuance_counts, NuanceDictionary, NuanceRates};
pub use stats::{basic_stats, CorpusStats, GroupStats};

use crate::corpus::Transcript;
use crate::world::AttributeRanges;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub stats: CorpusStats,
    pub nuance: NuanceRates,
    pub bias: SelectionBias,
    /// The same bias computed against the per-view mean.
    pub bias_mean_baseline: SelectionBias,
}

pub fn analyze(
    transcripts: &[Transcript],
    dictionaries: &[NuanceDictionary],
    ranges: &AttributeRanges,
) -> AnalysisReport {
    AnalysisReport {
        stats: basic_stats(transcripts),
        nuance: nuance_counts(transcripts, dictionaries),
        bias: selection_bias(transcripts, ranges, Baseline::Median),
        bias_mean_baseline: selection_bias(transcripts, ranges, Baseline::Mean),
    }
}

/// Bar charts of the selection bias as `(file name, svg)` pairs.
pub fn plots(report: &AnalysisReport, ranges: &AttributeRanges) -> Vec<(String, String)> {
    let b = &report.bias;
    let color_step = (ranges.color_max - ranges.color_min) / COLOR_BINS as f64;
    let color_labels: Vec<String> = (0..COLOR_BINS)
        .map(|i| format!("{:.0}", ranges.color_min + color_step * i as f64))
        .collect();
    let size_labels: Vec<String> = (0..b.size_distribution.len())
        .map(|i| format!("{:.1}", ranges.size_min + SIZE_BIN_WIDTH * i as f64))
        .collect();
    let rates = |v: &[Option<f64>]| v.iter().map(|r| r.unwrap_or(0.0)).collect::<Vec<_>>();
    vec![
        (
            "color_selection.svg".into(),
            plot::bar_chart_svg(
                "Selection probability by color (smaller is darker)",
                &color_labels,
                &rates(&b.color_selection_rate),
            ),
        ),
        (
            "size_selection.svg".into(),
            plot::bar_chart_svg(
                "Selection probability by size",
                &size_labels,
                &rates(&b.size_selection_rate),
            ),
        ),
        (
            "color_distribution.svg".into(),
            plot::bar_chart_svg(
                "Selected dots by color",
                &color_labels,
                &b.color_distribution,
            ),
        ),
        (
            "size_distribution.svg".into(),
            plot::bar_chart_svg("Selected dots by size", &size_labels, &b.size_distribution),
        ),
    ]
}

/// Default ranges, or the observed ranges when some dot falls outside them.
pub fn ranges_for(transcripts: &[Transcript]) -> AttributeRanges {
    let default = AttributeRanges::default();
    let all = || transcripts.iter().flat_map(|t| t.world.entities.iter());
    if all().all(|e| default.contains(e)) {
        return default;
    }
    let mut r = AttributeRanges {
        size_min: f64::INFINITY,
        size_max: f64::NEG_INFINITY,
        color_min: f64::INFINITY,
        color_max: f64::NEG_INFINITY,
    };
    for e in all() {
        r.size_min = r.size_min.min(e.size);
        r.size_max = r.size_max.max(e.size);
        r.color_min = r.color_min.min(e.color);
        r.color_max = r.color_max.max(e.color);
    }
    r
}
