//! Overlap, surface distance, phenotype and distribution metrics.

pub mod distribution;
pub mod edt;
pub mod overlap;
pub mod phenotype;
pub mod report;
pub mod stats;

pub use distribution::{kl_divergence_hist, wasserstein_1d};
pub use overlap::{assd, boundary, dice, hausdorff, surface_distances, SurfaceDistances};
pub use phenotype::{
    min_volume_frame, phenotype_diff, phenotypes, PhenotypeDiff, PhenotypeRecord,
    MYOCARDIAL_DENSITY, PHENOTYPE_NAMES,
};
pub use report::{
    age_stratified_wasserstein, evaluate_completion, evaluate_generation, frame_metrics,
    sequence_metrics, write_report, write_subject_csv, Completer, CompletionReport,
    DistributionStats, GenerationReport, Generator, MetricReport, OverlapSummary, StructureMetrics,
    SubjectRow,
};
pub use stats::{mean_ci95, paired_t_test, spearman};
