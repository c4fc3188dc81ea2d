//! Synthetic stroke cohorts with a known lesion-symptom relation, and the
//! evaluations run on them.
//!
//! Each subject has one lesion: a seed voxel drawn with probability
//! decaying exponentially with distance from a territory centre, grown by
//! repeatedly adding a uniformly chosen frontier voxel (26-adjacent to the
//! current region) until a log-normally distributed target size is reached.

mod experiments;
mod report;

pub use experiments::{
    comparison_inputs, comparison_seeds, run_cluster_fpr_experiment, run_method_comparison, ClusterFprConfig, ClusterFprReport, ClusterFprRow,
    ComparisonCell, ComparisonSummary, MethodComparisonConfig, MethodComparisonReport, SpilloverRow,
};
pub use report::{loglog_fit, render_plots, write_eval_report, EvalReport, LogLogFit, ReportManifest};

use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::Connectivity;
use crate::cohort::{add_noise, percent_damage_score, CohortMatrix, RoiMask, ScoreVector};
use crate::correction::CorrectionResult;
use crate::nullengine::NullDistribution;
use crate::rng::{derive_seed, stream_rng};
use crate::volume::Grid;
use crate::voxelstats::{voxel_t_map, TTestOptions};
use crate::{Error, Result};

/// Seed-placement gradient: weight `exp(-distance / decay)` from `center`
/// (voxel units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Territory {
    pub center: [f64; 3],
    pub decay: f64,
}

/// How deficit scores are derived from percent damage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum NoiseSpec {
    None,
    /// Gaussian noise with this standard deviation.
    Sd(f64),
    /// Noise calibrated so the largest voxel t is this fraction of the
    /// noiseless largest t.
    MaxTRatio(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub grid: Grid,
    pub n_subjects: usize,
    /// Log-normal lesion size: ln(size) ~ N(mu, sigma^2), size in voxels.
    pub lesion_log_mu: f64,
    pub lesion_log_sigma: f64,
    pub territory: Territory,
    /// Ground-truth region.
    pub roi: RoiMask,
    pub noise: NoiseSpec,
    pub seed: u64,
}

impl SyntheticSpec {
    /// 32^3 grid with a central territory and a spherical ROI of about 1000
    /// voxels offset from the territory centre. Lesions average about 1400
    /// voxels and the 60-subject analysis mask covers roughly 40% of the grid.
    pub fn desk_scale(n_subjects: usize, seed: u64) -> Self {
        let grid = Grid::cubic(32, 32, 32).expect("valid grid");
        let roi = RoiMask::sphere(&grid, [13.0, 17.0, 16.0], 6.2).expect("non-empty ROI");
        SyntheticSpec {
            grid,
            n_subjects,
            lesion_log_mu: 7.0,
            lesion_log_sigma: 0.7,
            territory: Territory {
                center: [16.0, 16.0, 16.0],
                decay: 8.0,
            },
            roi,
            noise: NoiseSpec::None,
            seed,
        }
    }

    /// Tiny configuration for smoke tests: 8^3 grid.
    pub fn smoke(n_subjects: usize, seed: u64) -> Self {
        let grid = Grid::cubic(8, 8, 8).expect("valid grid");
        let roi = RoiMask::sphere(&grid, [3.0, 4.0, 4.0], 1.5).expect("non-empty ROI");
        SyntheticSpec {
            grid,
            n_subjects,
            lesion_log_mu: 3.5,
            lesion_log_sigma: 0.4,
            territory: Territory {
                center: [4.0, 4.0, 4.0],
                decay: 2.0,
            },
            roi,
            noise: NoiseSpec::None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.n_subjects < 3 {
            return Err(Error::invalid("synthetic cohort needs at least 3 subjects"));
        }
        if !(self.lesion_log_sigma >= 0.0) || !self.lesion_log_mu.is_finite() {
            return Err(Error::invalid("lesion size parameters must be finite, sigma >= 0"));
        }
        if !(self.territory.decay > 0.0) {
            return Err(Error::invalid("territory decay must be positive"));
        }
        if self.roi.indices().last().is_some_and(|&v| v >= self.grid.n_voxels()) {
            return Err(Error::InvalidRoi("ROI outside grid".into()));
        }
        Ok(())
    }

    /// Mean of the lesion-size distribution, `exp(mu + sigma^2 / 2)`.
    pub fn mean_lesion_size(&self) -> f64 {
        (self.lesion_log_mu + 0.5 * self.lesion_log_sigma.powi(2)).exp()
    }

    fn placement_weights(&self) -> Vec<f64> {
        let g = &self.grid;
        (0..g.n_voxels())
            .map(|v| {
                let c = g.coord(v);
                let d = ((c.i as f64 - self.territory.center[0]).powi(2)
                    + (c.j as f64 - self.territory.center[1]).powi(2)
                    + (c.k as f64 - self.territory.center[2]).powi(2))
                .sqrt();
                (-d / self.territory.decay).exp()
            })
            .collect()
    }

    /// A warning when no ROI voxel can be chosen as a lesion seed.
    pub fn roi_warning(&self) -> Option<String> {
        let w = self.placement_weights();
        self.roi
            .indices()
            .iter()
            .all(|&v| w[v] == 0.0)
            .then(|| "ROI has zero seed-placement probability; only lesion growth can reach it".into())
    }
}

/// Grows one lesion; returns its grid indices.
fn grow_lesion(grid: &Grid, cumulative: &[f64], target: usize, rng: &mut impl Rng) -> Vec<usize> {
    let total = *cumulative.last().expect("non-empty grid");
    let u = rng.random::<f64>() * total;
    let seed_voxel = cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1);

    let n = grid.n_voxels();
    let offsets = Connectivity::TwentySix.offsets();
    let [nx, ny, nz] = grid.dims.map(|d| d as i64);
    // 0 = outside, 1 = frontier, 2 = lesion
    let mut state = vec![0u8; n];
    let mut region = vec![seed_voxel];
    let mut frontier: Vec<usize> = Vec::new();
    state[seed_voxel] = 2;
    let push_neighbours = |v: usize, state: &mut [u8], frontier: &mut Vec<usize>| {
        let c = grid.coord(v);
        for &[di, dj, dk] in &offsets {
            let (i, j, k) = (c.i as i64 + di as i64, c.j as i64 + dj as i64, c.k as i64 + dk as i64);
            if i < 0 || j < 0 || k < 0 || i >= nx || j >= ny || k >= nz {
                continue;
            }
            let q = (i + nx * (j + ny * k)) as usize;
            if state[q] == 0 {
                state[q] = 1;
                frontier.push(q);
            }
        }
    };
    push_neighbours(seed_voxel, &mut state, &mut frontier);
    while region.len() < target && !frontier.is_empty() {
        let pick = rng.random_range(0..frontier.len());
        let v = frontier.swap_remove(pick);
        state[v] = 2;
        region.push(v);
        push_neighbours(v, &mut state, &mut frontier);
    }
    region.sort_unstable();
    region
}

/// Generates the pre-mask cohort and returns it with the spec's ROI.
/// Subject `s` draws from stream `s` of the spec seed.
pub fn generate_synthetic_cohort(spec: &SyntheticSpec) -> Result<(CohortMatrix, RoiMask)> {
    spec.validate()?;
    let weights = spec.placement_weights();
    let cumulative: Vec<f64> = weights
        .iter()
        .scan(0.0, |acc, &w| {
            *acc += w;
            Some(*acc)
        })
        .collect();
    if !(cumulative.last().copied().unwrap_or(0.0) > 0.0) {
        return Err(Error::invalid("territory gives zero placement weight everywhere"));
    }
    let size_dist = LogNormal::new(spec.lesion_log_mu, spec.lesion_log_sigma)
        .map_err(|e| Error::invalid(e.to_string()))?;
    let lesions: Vec<Vec<usize>> = (0..spec.n_subjects)
        .into_par_iter()
        .map(|s| {
            let mut rng = stream_rng(derive_seed(spec.seed, 0x1e51), s as u64);
            let target = size_dist.sample(&mut rng).round().clamp(1.0, spec.grid.n_voxels() as f64) as usize;
            grow_lesion(&spec.grid, &cumulative, target, &mut rng)
        })
        .collect();
    let ids = (0..spec.n_subjects).map(|s| format!("sub-{:03}", s + 1)).collect();
    let cohort = CohortMatrix::from_lesion_lists(spec.grid, ids, &lesions)?;
    Ok((cohort, spec.roi.clone()))
}

/// Percent-damage scores with the spec's noise model applied.
pub fn synthetic_scores(cohort: &CohortMatrix, spec: &SyntheticSpec) -> Result<ScoreVector> {
    let clean = percent_damage_score(cohort, &spec.roi)?;
    let noise_seed = derive_seed(spec.seed, 0x4015e);
    match spec.noise {
        NoiseSpec::None => Ok(clean),
        NoiseSpec::Sd(sd) => add_noise(&clean, sd, noise_seed),
        NoiseSpec::MaxTRatio(ratio) => {
            let sd = calibrate_noise_sd(cohort, &clean, ratio, noise_seed)?;
            add_noise(&clean, sd, noise_seed)
        }
    }
}

fn max_t(cohort: &CohortMatrix, scores: &ScoreVector) -> Result<f64> {
    let m = voxel_t_map(cohort, scores, &TTestOptions::default())?;
    Ok(m.t_values.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

/// Noise sd at which the largest voxel t of `cohort` (already masked) drops
/// to `ratio` times its noiseless value, found by bisection using the noise
/// draws of `seed`.
pub fn calibrate_noise_sd(cohort: &CohortMatrix, scores: &ScoreVector, ratio: f64, seed: u64) -> Result<f64> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid(format!("t ratio must be in (0, 1), got {ratio}")));
    }
    let masked;
    let cohort = if cohort.cutoffs().is_none() {
        masked = cohort.with_mask(crate::cohort::MaskCutoffs::Default)?;
        &masked
    } else {
        cohort
    };
    let target = ratio * max_t(cohort, scores)?;
    let spread = {
        let v = scores.values();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
    };
    let (mut lo, mut hi) = (0.0, spread.max(1e-12));
    while max_t(cohort, &add_noise(scores, hi, seed)?)? > target {
        hi *= 2.0;
        if hi > 1e6 * spread.max(1e-12) {
            return Err(Error::invalid("could not reach the requested t ratio"));
        }
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if max_t(cohort, &add_noise(scores, mid, seed)?)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Fraction of records with at least one cluster strictly larger than
/// `size_threshold` at `p_threshold`.
pub fn false_positive_rate(null: &NullDistribution, p_threshold: f64, size_threshold: usize) -> Result<f64> {
    let h = null.threshold_index(p_threshold)?;
    if null.records.is_empty() {
        return Err(Error::invalid("empty null distribution"));
    }
    let hits = null
        .records
        .iter()
        .filter(|r| r.clusters[h].max as usize > size_threshold)
        .count();
    Ok(hits as f64 / null.records.len() as f64)
}

/// Overlap of a supra-threshold region with the true ROI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpilloverMetrics {
    pub n_supra: usize,
    pub n_in_roi: usize,
    pub n_out_roi: usize,
    /// `n_supra / |roi|`
    pub extent_ratio: f64,
    /// `2 n_in_roi / (n_supra + |roi|)`
    pub dice: f64,
}

impl SpilloverMetrics {
    /// Share of supra voxels outside the ROI (0 when nothing survives).
    pub fn out_fraction(&self) -> f64 {
        if self.n_supra == 0 {
            0.0
        } else {
            self.n_out_roi as f64 / self.n_supra as f64
        }
    }
}

/// Spill-over of `result` (mask positions resolved through `mask_index`)
/// relative to `roi`.
pub fn spillover_metrics(result: &CorrectionResult, mask_index: &[usize], roi: &RoiMask) -> SpilloverMetrics {
    let n_supra = result.supra.len();
    let n_in_roi = result.supra.iter().filter(|&&p| roi.contains(mask_index[p])).count();
    let roi_len = roi.len() as f64;
    SpilloverMetrics {
        n_supra,
        n_in_roi,
        n_out_roi: n_supra - n_in_roi,
        extent_ratio: n_supra as f64 / roi_len,
        dice: 2.0 * n_in_roi as f64 / (n_supra as f64 + roi_len),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::label_components;
    use crate::correction::{CorrectionParams, Method};

    fn result_with(supra: Vec<usize>) -> CorrectionResult {
        CorrectionResult {
            method: Method::Cfwer,
            params: CorrectionParams::default(),
            critical_value: 0.0,
            n_supra: supra.len(),
            supra,
            effective_q: None,
            null_hash: None,
            seed: None,
        }
    }

    #[test]
    fn single_voxel_lesions() {
        let mut spec = SyntheticSpec::smoke(10, 3);
        spec.lesion_log_mu = 0.0;
        spec.lesion_log_sigma = 0.0;
        let (c, _) = generate_synthetic_cohort(&spec).unwrap();
        for s in 0..10 {
            assert_eq!(c.lesion_of(s).len(), 1);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = SyntheticSpec::smoke(12, 8);
        assert_eq!(generate_synthetic_cohort(&spec).unwrap(), generate_synthetic_cohort(&spec).unwrap());
        let other = SyntheticSpec { seed: 9, ..spec.clone() };
        assert_ne!(generate_synthetic_cohort(&spec).unwrap(), generate_synthetic_cohort(&other).unwrap());
    }

    #[test]
    fn lesions_connected_and_sized() {
        let spec = SyntheticSpec::desk_scale(50, 21);
        let (c, _) = generate_synthetic_cohort(&spec).unwrap();
        let mut total = 0usize;
        for s in 0..50 {
            let lesion = c.lesion_of(s);
            total += lesion.len();
            let (_, l) = label_components(&lesion, &spec.grid, Connectivity::TwentySix).unwrap();
            assert_eq!(l.n_clusters(), 1, "subject {s}");
        }
        let mean = total as f64 / 50.0;
        let expected = spec.mean_lesion_size();
        assert!((mean - expected).abs() / expected < 0.15, "mean {mean} vs {expected}");
    }

    #[test]
    fn spillover_cases() {
        let grid = Grid::cubic(10, 1, 1).unwrap();
        let mask: Vec<usize> = (0..10).collect();
        let roi = RoiMask::new(&grid, vec![2, 3, 4]).unwrap();
        let m = spillover_metrics(&result_with(vec![2, 3, 4]), &mask, &roi);
        assert_eq!((m.extent_ratio, m.dice, m.n_out_roi), (1.0, 1.0, 0));
        let m = spillover_metrics(&result_with(vec![7, 8]), &mask, &roi);
        assert_eq!(m.dice, 0.0);
        assert_eq!(m.n_out_roi, 2);
        let m = spillover_metrics(&result_with(vec![1, 2, 3, 4, 5, 6]), &mask, &roi);
        assert_eq!(m.extent_ratio, 2.0);
        assert!((m.dice - 6.0 / 9.0).abs() < 1e-15);
        assert!((m.out_fraction() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn noise_calibration_halves_max_t() {
        let spec = SyntheticSpec::smoke(40, 5);
        let (c, roi) = generate_synthetic_cohort(&spec).unwrap();
        let c = c.with_mask(crate::cohort::MaskCutoffs::Default).unwrap();
        let clean = percent_damage_score(&c, &roi).unwrap();
        let sd = calibrate_noise_sd(&c, &clean, 0.5, 77).unwrap();
        let noisy = add_noise(&clean, sd, 77).unwrap();
        let ratio = max_t(&c, &noisy).unwrap() / max_t(&c, &clean).unwrap();
        assert!((ratio - 0.5).abs() < 1e-3, "ratio {ratio}");
    }
}
