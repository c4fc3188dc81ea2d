//! The evaluation experiments: false-positive rate and spill-over of
//! cluster-size correction, and CFWER versus FDR across sample sizes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{false_positive_rate, generate_synthetic_cohort, spillover_metrics, synthetic_scores, SpilloverMetrics, SyntheticSpec};
use crate::cluster::{ClusterLabeler, Connectivity};
use crate::cohort::{subsample, CohortMatrix, MaskCutoffs, ScoreVector};
use crate::correction::{
    apply_cfwer, apply_cluster_correction, cluster_size_threshold, compare_cfwer_fdr, ClusterVariant, ComparisonRow,
    CorrectionConfig, FdrDependency,
};
use crate::nullengine::{run_permutation_pass, CollectConfig, NullDistribution, PermutationPlan, DEFAULT_P_THRESHOLDS};
use crate::rng::derive_seed;
use crate::voxelstats::{voxel_t_map, StatMap, Tails, ZeroVariance};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterFprConfig {
    /// Permutations defining the thresholds.
    pub n_perms: usize,
    /// Independent permutations for the held-out false-positive rate.
    pub n_holdout: usize,
    pub p_thresholds: Vec<f64>,
    pub alpha: f64,
    pub tails: Tails,
    pub connectivity: Connectivity,
    pub cutoffs: MaskCutoffs,
    pub perm_seed: u64,
    /// Ranks for which CFWER spill-over is also reported.
    pub spill_v_list: Vec<usize>,
}

impl Default for ClusterFprConfig {
    fn default() -> Self {
        ClusterFprConfig {
            n_perms: 500,
            n_holdout: 500,
            p_thresholds: DEFAULT_P_THRESHOLDS.to_vec(),
            alpha: 0.05,
            tails: Tails::OneTailedPositive,
            connectivity: Connectivity::TwentySix,
            cutoffs: MaskCutoffs::Default,
            perm_seed: 1000,
            spill_v_list: vec![1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterFprRow {
    pub p_threshold: f64,
    pub variant: ClusterVariant,
    pub size_threshold: usize,
    pub fpr_in_sample: f64,
    pub fpr_held_out: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpilloverRow {
    /// `cluster-all`, `cluster-max` or `cfwer`.
    pub method: String,
    pub p_threshold: Option<f64>,
    pub v: Option<usize>,
    pub critical_value: f64,
    pub metrics: SpilloverMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterFprReport {
    pub config: ClusterFprConfig,
    pub n_subjects: usize,
    pub mask_len: usize,
    pub roi_len: usize,
    pub max_observed_t: f64,
    pub null_hash: String,
    pub rows: Vec<ClusterFprRow>,
    pub spillover: Vec<SpilloverRow>,
}

impl ClusterFprReport {
    pub fn row(&self, p_threshold: f64, variant: ClusterVariant) -> Option<&ClusterFprRow> {
        self.rows
            .iter()
            .find(|r| r.variant == variant && (r.p_threshold - p_threshold).abs() <= 1e-12 * p_threshold)
    }

    pub fn spill(&self, method: &str, p_threshold: Option<f64>, v: Option<usize>) -> Option<&SpilloverRow> {
        self.spillover.iter().find(|r| {
            r.method == method
                && r.v == v
                && match (r.p_threshold, p_threshold) {
                    (Some(a), Some(b)) => (a - b).abs() <= 1e-12 * b,
                    (None, None) => true,
                    _ => false,
                }
        })
    }
}

fn collect_for(cohort: &CohortMatrix, k: usize, p_thresholds: Vec<f64>, tails: Tails, connectivity: Connectivity) -> CollectConfig {
    CollectConfig {
        k: k.clamp(1, cohort.mask_len()),
        p_thresholds,
        tails,
        connectivity,
        zero_variance: ZeroVariance::Error,
    }
}

/// Cluster-size thresholds for both null variants at every p-threshold,
/// with in-sample and held-out false-positive rates, plus spill-over of
/// the corrected observed maps relative to the true ROI.
pub fn run_cluster_fpr_experiment(spec: &SyntheticSpec, config: &ClusterFprConfig) -> Result<ClusterFprReport> {
    if config.n_perms == 0 || config.n_holdout == 0 {
        return Err(Error::invalid("n_perms and n_holdout must be positive"));
    }
    let (cohort, roi) = generate_synthetic_cohort(spec)?;
    let cohort = cohort.with_mask(config.cutoffs)?;
    let scores = synthetic_scores(&cohort, spec)?;
    let collect = collect_for(
        &cohort,
        config.spill_v_list.iter().copied().max().unwrap_or(1),
        config.p_thresholds.clone(),
        config.tails,
        config.connectivity,
    );
    let observed = voxel_t_map(&cohort, &scores, &collect.t_options())?;
    let plan = PermutationPlan::generate(cohort.n_subjects(), config.n_perms + config.n_holdout, config.perm_seed);
    let null = run_permutation_pass(&cohort, &scores, &plan, &collect)?;
    let defining = null.slice(0..config.n_perms);
    let held_out = null.slice(config.n_perms..config.n_perms + config.n_holdout);

    let mask_index = cohort.mask_index();
    let labeler = ClusterLabeler::new(*cohort.grid(), mask_index.clone(), config.connectivity)?;
    let mut rows = Vec::new();
    let mut spillover = Vec::new();
    for &p in &config.p_thresholds {
        for variant in [ClusterVariant::All, ClusterVariant::Max] {
            let size = cluster_size_threshold(&defining, p, variant, config.alpha)?;
            rows.push(ClusterFprRow {
                p_threshold: p,
                variant,
                size_threshold: size,
                fpr_in_sample: false_positive_rate(&defining, p, size)?,
                fpr_held_out: false_positive_rate(&held_out, p, size)?,
            });
            let result = apply_cluster_correction(&observed, &labeler, p, size, variant)?;
            spillover.push(SpilloverRow {
                method: format!("cluster-{}", variant.name()),
                p_threshold: Some(p),
                v: None,
                critical_value: size as f64,
                metrics: spillover_metrics(&result, &mask_index, &roi),
            });
        }
    }
    for &v in &config.spill_v_list {
        if v > defining.k() {
            continue;
        }
        let result = apply_cfwer(&observed, &defining, v, config.alpha)?;
        spillover.push(SpilloverRow {
            method: "cfwer".into(),
            p_threshold: None,
            v: Some(v),
            critical_value: result.critical_value,
            metrics: spillover_metrics(&result, &mask_index, &roi),
        });
    }
    Ok(ClusterFprReport {
        config: config.clone(),
        n_subjects: cohort.n_subjects(),
        mask_len: cohort.mask_len(),
        roi_len: roi.len(),
        max_observed_t: observed.t_values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        null_hash: null.meta.content_hash.clone(),
        rows,
        spillover,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodComparisonConfig {
    pub fractions: Vec<f64>,
    pub n_repeats: usize,
    pub v_list: Vec<usize>,
    pub alpha: f64,
    pub n_perms: usize,
    pub tails: Tails,
    pub connectivity: Connectivity,
    pub cutoffs: MaskCutoffs,
    pub fdr_dependency: FdrDependency,
    pub perm_seed: u64,
    /// Keep every permutation null in the report (for re-checking cells).
    #[serde(default)]
    pub keep_nulls: bool,
}

impl Default for MethodComparisonConfig {
    fn default() -> Self {
        MethodComparisonConfig {
            fractions: vec![1.0, 0.5, 0.25],
            n_repeats: 20,
            v_list: vec![1, 10, 100, 1000],
            alpha: 0.05,
            n_perms: 500,
            tails: Tails::OneTailedPositive,
            connectivity: Connectivity::TwentySix,
            cutoffs: MaskCutoffs::Default,
            fdr_dependency: FdrDependency::Independent,
            perm_seed: 2000,
            keep_nulls: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonCell {
    pub fraction: f64,
    pub repeat: usize,
    pub n_subjects: usize,
    pub mask_len: usize,
    pub subsample_seed: u64,
    pub perm_seed: u64,
    pub null_hash: String,
    pub row: ComparisonRow,
    /// Why the cell is all-NA, when the sub-sample could not be analysed
    /// (empty mask, constant scores, ...).
    #[serde(default)]
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub fraction: f64,
    pub n_subjects: usize,
    /// Cells where both thresholds exist.
    pub n_valid: usize,
    pub n_fdr_lower: usize,
    pub share_fdr_lower: Option<f64>,
    pub mean_t_cfwer: Option<f64>,
    pub mean_t_fdr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodComparisonReport {
    pub config: MethodComparisonConfig,
    pub cells: Vec<ComparisonCell>,
    pub summary: Vec<ComparisonSummary>,
    #[serde(skip)]
    pub nulls: Vec<NullDistribution>,
}

/// Seeds used for sub-sample `repeat` of fraction index `fi`.
pub fn comparison_seeds(spec_seed: u64, perm_seed: u64, fi: usize, repeat: usize) -> (u64, u64) {
    let tag = ((fi as u64) << 32) | repeat as u64;
    (derive_seed(derive_seed(spec_seed, 0x5b5a), tag), derive_seed(perm_seed, tag))
}

struct CellOutput {
    cells: Vec<ComparisonCell>,
    null: Option<NullDistribution>,
}

fn skipped_cell(config: &MethodComparisonConfig, spec_seed: u64, fi: usize, fraction: f64, repeat: usize, n: usize, why: &Error) -> CellOutput {
    let (sub_seed, perm_seed) = comparison_seeds(spec_seed, config.perm_seed, fi, repeat);
    let cells = config
        .v_list
        .iter()
        .map(|&v| ComparisonCell {
            fraction,
            repeat,
            n_subjects: n,
            mask_len: 0,
            subsample_seed: sub_seed,
            perm_seed,
            null_hash: String::new(),
            row: ComparisonRow {
                v,
                t_cfwer: None,
                n_supra_cfwer: None,
                effective_q: None,
                t_fdr: None,
                n_supra_fdr: None,
            },
            skipped: Some(why.to_string()),
        })
        .collect();
    CellOutput { cells, null: None }
}

#[allow(clippy::too_many_arguments)]
fn comparison_cell(
    cohort: &CohortMatrix,
    scores: &ScoreVector,
    spec: &SyntheticSpec,
    config: &MethodComparisonConfig,
    fi: usize,
    fraction: f64,
    repeat: usize,
) -> Result<CellOutput> {
    let (sub_seed, perm_seed) = comparison_seeds(spec.seed, config.perm_seed, fi, repeat);
    let (sub, sub_scores) = subsample(cohort, scores, fraction, sub_seed)?;
    let collect = collect_for(
        &sub,
        config.v_list.iter().copied().max().unwrap_or(1),
        vec![0.001],
        config.tails,
        config.connectivity,
    );
    let observed: StatMap = voxel_t_map(&sub, &sub_scores, &collect.t_options())?;
    let plan = PermutationPlan::generate(sub.n_subjects(), config.n_perms, perm_seed);
    let null = run_permutation_pass(&sub, &sub_scores, &plan, &collect)?;
    let corr = CorrectionConfig {
        alpha: config.alpha,
        v_list: config.v_list.clone(),
        fdr_dependency: config.fdr_dependency,
        ..Default::default()
    };
    let rows = compare_cfwer_fdr(&observed, &null, &corr)?;
    let cells = rows
        .into_iter()
        .map(|row| ComparisonCell {
            fraction,
            repeat,
            n_subjects: sub.n_subjects(),
            mask_len: sub.mask_len(),
            subsample_seed: sub_seed,
            perm_seed,
            null_hash: null.meta.content_hash.clone(),
            row,
            skipped: None,
        })
        .collect();
    Ok(CellOutput { cells, null: Some(null) })
}

/// Regenerates the masked cohort and scores a comparison runs on.
pub fn comparison_inputs(spec: &SyntheticSpec, cutoffs: MaskCutoffs) -> Result<(CohortMatrix, ScoreVector)> {
    let (cohort, _) = generate_synthetic_cohort(spec)?;
    let cohort = cohort.with_mask(cutoffs)?;
    let scores = synthetic_scores(&cohort, spec)?;
    Ok((cohort, scores))
}

/// CFWER-vs-FDR tables for `n_repeats` random sub-samples at each fraction.
/// A fraction of 1.0 uses the full cohort.
pub fn run_method_comparison(spec: &SyntheticSpec, config: &MethodComparisonConfig) -> Result<MethodComparisonReport> {
    if config.n_repeats == 0 || config.n_perms == 0 {
        return Err(Error::invalid("n_repeats and n_perms must be positive"));
    }
    if config.fractions.iter().any(|&f| !(f > 0.0 && f <= 1.0)) {
        return Err(Error::invalid("fractions must be in (0, 1]"));
    }
    let (cohort, scores) = comparison_inputs(spec, config.cutoffs)?;
    let jobs: Vec<(usize, f64, usize)> = config
        .fractions
        .iter()
        .enumerate()
        .flat_map(|(fi, &f)| (0..config.n_repeats).map(move |r| (fi, f, r)))
        .collect();
    let outputs = jobs
        .par_iter()
        .map(|&(fi, f, r)| match comparison_cell(&cohort, &scores, spec, config, fi, f, r) {
            Err(e) if e.is_validation() => {
                let n = ((f * cohort.n_subjects() as f64).round() as usize).max(1);
                Ok(skipped_cell(config, spec.seed, fi, f, r, n, &e))
            }
            other => other,
        })
        .collect::<Result<Vec<_>>>()?;
    let mut cells = Vec::new();
    let mut nulls = Vec::new();
    for out in outputs {
        cells.extend(out.cells);
        if config.keep_nulls {
            nulls.extend(out.null);
        }
    }
    let summary = config
        .fractions
        .iter()
        .map(|&f| summarize(f, cells.iter().filter(|c| c.fraction == f)))
        .collect();
    Ok(MethodComparisonReport {
        config: config.clone(),
        cells,
        summary,
        nulls,
    })
}

fn summarize<'a>(fraction: f64, cells: impl Iterator<Item = &'a ComparisonCell>) -> ComparisonSummary {
    let mut n_subjects = 0;
    let mut n_valid = 0;
    let mut n_lower = 0;
    let (mut sum_c, mut sum_f) = (0.0, 0.0);
    for c in cells {
        n_subjects = c.n_subjects;
        if let (Some(tc), Some(tf)) = (c.row.t_cfwer, c.row.t_fdr) {
            n_valid += 1;
            sum_c += tc;
            sum_f += tf;
            if tf < tc {
                n_lower += 1;
            }
        }
    }
    let mean = |s: f64| (n_valid > 0).then(|| s / n_valid as f64);
    ComparisonSummary {
        fraction,
        n_subjects,
        n_valid,
        n_fdr_lower: n_lower,
        share_fdr_lower: mean(n_lower as f64),
        mean_t_cfwer: mean(sum_c),
        mean_t_fdr: mean(sum_f),
    }
}
