//! Voxel-based lesion-symptom mapping (VLSM) with permutation-based
//! corrections for multiple comparisons.
//!
//! The crate is organised bottom-up:
//!
//! * [`volume`]: 3D volumes and NIfTI-1 I/O.
//! * [`cohort`]: lesion matrices, analysis masks, simulated deficit scores
//!   and random sub-samples.
//! * [`voxelstats`]: the voxel-wise pooled-variance t map and Student-t
//!   tail probabilities.
//! * [`cluster`]: 3D connected-component labeling of supra-threshold voxels.
//! * [`nullengine`]: permutation plans and the fused permutation pass that
//!   collects top-K t values and cluster sizes for every voxel threshold.
//! * [`correction`]: cluster-size thresholds (all-clusters and max-cluster
//!   nulls), continuous FWER at rank `v`, Benjamini-Hochberg FDR and the
//!   CFWER-vs-FDR comparison table.
//! * [`simeval`]: synthetic cohorts with known ground truth and the
//!   evaluation experiments built on them.
//! * [`cli`]: the `vlsm` command-line front end.
//!
//! ```no_run
//! use vlsm::prelude::*;
//!
//! # fn main() -> vlsm::Result<()> {
//! let spec = SyntheticSpec::desk_scale(60, 7);
//! let (cohort, roi) = generate_synthetic_cohort(&spec)?;
//! let cohort = cohort.with_mask(MaskCutoffs::Default)?;
//! let scores = percent_damage_score(&cohort, &roi)?;
//! let observed = voxel_t_map(&cohort, &scores, &TTestOptions::default())?;
//! let plan = PermutationPlan::generate(cohort.n_subjects(), 500, 11);
//! let null = run_permutation_pass(&cohort, &scores, &plan, &CollectConfig::default_for(&cohort))?;
//! let t_crit = cfwer_threshold(&null, 1, 0.05)?;
//! let result = apply_t_threshold(&observed, t_crit);
//! println!("{} voxels survive", result.n_supra);
//! # Ok(())
//! # }
//! ```

pub mod cli;
pub mod cluster;
pub mod cohort;
pub mod correction;
mod error;
pub mod nullengine;
pub mod output;
pub mod rng;
pub mod simeval;
pub mod volume;
pub mod voxelstats;

pub use error::{Error, Result};

/// Commonly used types and operations.
pub mod prelude {
    pub use crate::cluster::{label_components, max_cluster_size, ClusterLabeler, ClusterLabeling, Connectivity};
    pub use crate::cohort::{read_roi, 
        add_noise, build_cohort, percent_damage_score, subsample, CohortMatrix, MaskCutoffs, RoiMask,
        ScoreVector,
    };
    pub use crate::correction::{
        apply_cluster_correction, apply_t_threshold, cfwer_threshold, cluster_size_threshold,
        compare_cfwer_fdr, effective_q, fdr_threshold, percentile_threshold, ClusterVariant,
        ComparisonRow, CorrectionConfig, CorrectionResult, FdrDependency,
    };
    pub use crate::nullengine::{
        kth_largest, run_permutation_pass, CollectConfig, NullDistribution, NullRecord, PermutationPlan,
    };
    pub use crate::simeval::{generate_synthetic_cohort, spillover_metrics, SyntheticSpec};
    pub use crate::volume::{binarize, read_nifti, write_nifti, DataType, Grid, Volume3D};
    pub use crate::voxelstats::{p_threshold_to_t, t_to_p, voxel_t_map, StatMap, TTestOptions, Tails};
}
