//! Correction thresholds and their application to an observed t map.
//!
//! Percentiles use the order statistic at rank `ceil((1 - alpha) * n)` and
//! supra-threshold means strictly greater than the critical value, so at
//! most `alpha * n` of the defining null values exceed a threshold.

use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterLabeler, LabelScratch};
use crate::nullengine::{NullDistribution, DEFAULT_P_THRESHOLDS};
use crate::voxelstats::{p_threshold_to_t, PValueMap, StatMap, Tails};
use crate::{Error, Result};

/// Which cluster sizes enter the cluster-size null.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterVariant {
    /// Every cluster of every permutation.
    All,
    /// The largest cluster of each permutation (0 if none).
    Max,
}

impl ClusterVariant {
    pub fn name(self) -> &'static str {
        match self {
            ClusterVariant::All => "all",
            ClusterVariant::Max => "max",
        }
    }
}

/// Benjamini-Hochberg constant `c(m)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FdrDependency {
    /// `c(m) = 1`
    #[default]
    Independent,
    /// `c(m) = sum_{i=1}^m 1/i`
    Arbitrary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionConfig {
    pub alpha: f64,
    pub v_list: Vec<usize>,
    pub p_threshold_list: Vec<f64>,
    pub cluster_variant: ClusterVariant,
    pub fdr_q: f64,
    #[serde(default)]
    pub fdr_dependency: FdrDependency,
}

impl Default for CorrectionConfig {
    fn default() -> Self {
        CorrectionConfig {
            alpha: 0.05,
            v_list: vec![1, 10, 100, 1000],
            p_threshold_list: DEFAULT_P_THRESHOLDS.to_vec(),
            cluster_variant: ClusterVariant::Max,
            fdr_q: 0.05,
            fdr_dependency: FdrDependency::Independent,
        }
    }
}

impl CorrectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(format!("alpha must be in (0, 1), got {}", self.alpha)));
        }
        if !(self.fdr_q > 0.0 && self.fdr_q < 1.0) {
            return Err(Error::invalid(format!("q must be in (0, 1), got {}", self.fdr_q)));
        }
        if self.v_list.is_empty() || self.v_list[0] == 0 || self.v_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("v list must be positive and strictly increasing"));
        }
        if self.p_threshold_list.is_empty()
            || self.p_threshold_list.iter().any(|&p| !(p > 0.0 && p < 1.0))
            || self.p_threshold_list.windows(2).any(|w| w[0] <= w[1])
        {
            return Err(Error::invalid(
                "p-thresholds must lie in (0, 1) and be strictly decreasing",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ClusterAll,
    ClusterMax,
    Cfwer,
    Fdr,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::ClusterAll => "cluster-all",
            Method::ClusterMax => "cluster-max",
            Method::Cfwer => "cfwer",
            Method::Fdr => "fdr",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CorrectionParams {
    pub alpha: Option<f64>,
    pub v: Option<usize>,
    pub q: Option<f64>,
    pub p_threshold: Option<f64>,
}

/// Outcome of applying one correction to an observed map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionResult {
    pub method: Method,
    pub params: CorrectionParams,
    /// t threshold, or cluster-size threshold for cluster methods.
    pub critical_value: f64,
    /// Mask positions of surviving voxels, ascending.
    pub supra: Vec<usize>,
    pub n_supra: usize,
    pub effective_q: Option<f64>,
    pub null_hash: Option<String>,
    pub seed: Option<u64>,
}

impl CorrectionResult {
    fn new(method: Method, params: CorrectionParams, critical_value: f64, supra: Vec<usize>) -> Self {
        CorrectionResult {
            method,
            params,
            critical_value,
            n_supra: supra.len(),
            supra,
            effective_q: None,
            null_hash: None,
            seed: None,
        }
    }

    pub fn with_null(mut self, null: &NullDistribution) -> Self {
        self.null_hash = Some(null.meta.content_hash.clone());
        self.seed = null.meta.seed;
        self
    }
}

/// Rank `ceil((1 - alpha) * n)`, computed as `n - floor(alpha * n)` so that
/// `alpha * n` landing on an integer is not lost to rounding.
pub fn percentile_rank(n: usize, alpha: f64) -> usize {
    let excess = (alpha * n as f64 + 1e-9).floor() as usize;
    n.saturating_sub(excess).max(1)
}

/// The `ceil((1 - alpha) * n)`-th smallest null value.
pub fn percentile_threshold(null_values: &[f64], alpha: f64) -> Result<f64> {
    if null_values.is_empty() {
        return Err(Error::invalid("empty null distribution"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must be in (0, 1), got {alpha}")));
    }
    let m = percentile_rank(null_values.len(), alpha);
    let mut v = null_values.to_vec();
    let (_, x, _) = v.select_nth_unstable_by(m - 1, f64::total_cmp);
    Ok(*x)
}

/// Cluster-size threshold at voxel level `p_threshold`.
pub fn cluster_size_threshold(
    null: &NullDistribution,
    p_threshold: f64,
    variant: ClusterVariant,
    alpha: f64,
) -> Result<usize> {
    let h = null.threshold_index(p_threshold)?;
    let values: Vec<f64> = match variant {
        ClusterVariant::Max => null.records.iter().map(|r| r.clusters[h].max as f64).collect(),
        ClusterVariant::All => null
            .records
            .iter()
            .flat_map(|r| r.clusters[h].sizes.iter().map(|&s| s as f64))
            .collect(),
    };
    if values.is_empty() {
        // No permutation produced a cluster: nothing to exceed.
        return Ok(0);
    }
    Ok(percentile_threshold(&values, alpha)? as usize)
}

/// Keeps observed clusters at voxel level `p_threshold` larger than
/// `size_threshold`. `variant` only tags the result.
pub fn apply_cluster_correction(
    observed: &StatMap,
    labeler: &ClusterLabeler,
    p_threshold: f64,
    size_threshold: usize,
    variant: ClusterVariant,
) -> Result<CorrectionResult> {
    if labeler.len() != observed.len() {
        return Err(Error::invalid("labeler and stat map cover different voxels"));
    }
    let cut = p_threshold_to_t(p_threshold, observed.df, observed.tails)?;
    let supra: Vec<bool> = (0..observed.len()).map(|j| observed.statistic(j) > cut).collect();
    let labeling = labeler.label(&supra, &mut LabelScratch::default());
    let kept: Vec<usize> = labeling
        .labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| l > 0 && labeling.sizes[l as usize - 1] > size_threshold)
        .map(|(p, _)| p)
        .collect();
    let method = match variant {
        ClusterVariant::All => Method::ClusterAll,
        ClusterVariant::Max => Method::ClusterMax,
    };
    Ok(CorrectionResult::new(
        method,
        CorrectionParams {
            p_threshold: Some(p_threshold),
            ..Default::default()
        },
        size_threshold as f64,
        kept,
    ))
}

/// Continuous FWER threshold: percentile of the v-th largest statistic
/// across permutations. `v = 1` is the usual max-statistic threshold.
pub fn cfwer_threshold(null: &NullDistribution, v: usize, alpha: f64) -> Result<f64> {
    percentile_threshold(&null.vth_statistics(v)?, alpha)
}

/// Voxels whose statistic strictly exceeds `t_crit`.
pub fn apply_t_threshold(observed: &StatMap, t_crit: f64) -> CorrectionResult {
    let supra = (0..observed.len()).filter(|&j| observed.statistic(j) > t_crit).collect();
    CorrectionResult::new(Method::Cfwer, CorrectionParams::default(), t_crit, supra)
}

/// CFWER at rank `v`, applied to `observed`, with its effective q.
pub fn apply_cfwer(observed: &StatMap, null: &NullDistribution, v: usize, alpha: f64) -> Result<CorrectionResult> {
    let t = cfwer_threshold(null, v, alpha)?;
    let mut r = apply_t_threshold(observed, t).with_null(null);
    r.params = CorrectionParams {
        alpha: Some(alpha),
        v: Some(v),
        ..Default::default()
    };
    r.effective_q = effective_q(v, r.n_supra);
    Ok(r)
}

/// `v / n_supra`; `None` when nothing survives.
pub fn effective_q(v: usize, n_supra: usize) -> Option<f64> {
    (n_supra > 0).then(|| v as f64 / n_supra as f64)
}

/// Benjamini-Hochberg step-up result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdrThreshold {
    /// Largest p with `p(i) <= i q / (m c(m))`; `None` if no voxel qualifies.
    pub p_crit: Option<f64>,
    /// Statistic cutoff corresponding to `p_crit`.
    pub t_crit: Option<f64>,
    pub n_supra: usize,
}

/// Benjamini-Hochberg step-up over every mask voxel.
pub fn fdr_threshold(p_map: &PValueMap, q: f64, dependency: FdrDependency) -> Result<FdrThreshold> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::invalid(format!("q must be in (0, 1), got {q}")));
    }
    let m = p_map.p_values.len();
    if m == 0 {
        return Err(Error::EmptyMask);
    }
    let c = match dependency {
        FdrDependency::Independent => 1.0,
        FdrDependency::Arbitrary => (1..=m).map(|i| 1.0 / i as f64).sum(),
    };
    let mut sorted = p_map.p_values.clone();
    sorted.sort_unstable_by(f64::total_cmp);
    let p_crit = (1..=m)
        .rev()
        .find(|&i| sorted[i - 1] <= i as f64 * q / (m as f64 * c))
        .map(|i| sorted[i - 1]);
    let Some(p) = p_crit else {
        return Ok(FdrThreshold {
            p_crit: None,
            t_crit: None,
            n_supra: 0,
        });
    };
    let n_supra = p_map.p_values.iter().filter(|&&x| x <= p).count();
    let t_crit = if p >= 1.0 {
        match p_map.tails {
            Tails::OneTailedPositive => f64::NEG_INFINITY,
            Tails::TwoTailed => 0.0,
        }
    } else {
        p_threshold_to_t(p, p_map.df, p_map.tails)?
    };
    Ok(FdrThreshold {
        p_crit: Some(p),
        t_crit: Some(t_crit),
        n_supra,
    })
}

/// FDR correction applied to `observed`; survivors are voxels with
/// `p <= p_crit`.
pub fn apply_fdr(observed: &StatMap, q: f64, dependency: FdrDependency) -> Result<CorrectionResult> {
    let p = observed.p_values();
    let thr = fdr_threshold(&p, q, dependency)?;
    let supra = match thr.p_crit {
        Some(pc) => (0..p.p_values.len()).filter(|&j| p.p_values[j] <= pc).collect(),
        None => Vec::new(),
    };
    Ok(CorrectionResult::new(
        Method::Fdr,
        CorrectionParams {
            q: Some(q),
            ..Default::default()
        },
        thr.t_crit.unwrap_or(f64::INFINITY),
        supra,
    ))
}

/// One row of the CFWER-vs-FDR table. `None` marks not-applicable cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub v: usize,
    pub t_cfwer: Option<f64>,
    pub n_supra_cfwer: Option<usize>,
    pub effective_q: Option<f64>,
    pub t_fdr: Option<f64>,
    pub n_supra_fdr: Option<usize>,
}

impl ComparisonRow {
    pub const HEADER: [&'static str; 6] = ["v", "t_cfwer", "n_supra_cfwer", "effective_q", "t_fdr", "n_supra_fdr"];

    pub fn to_record(&self) -> Vec<String> {
        vec![
            self.v.to_string(),
            fmt_opt(self.t_cfwer),
            fmt_opt(self.n_supra_cfwer),
            fmt_opt(self.effective_q),
            fmt_opt(self.t_fdr),
            fmt_opt(self.n_supra_fdr),
        ]
    }

    /// Both thresholds present, i.e. the effective q was usable by FDR.
    pub fn is_comparable(&self) -> bool {
        self.t_cfwer.is_some() && self.t_fdr.is_some()
    }
}

pub fn fmt_opt<T: ToString>(x: Option<T>) -> String {
    x.map_or_else(|| "NA".to_string(), |v| v.to_string())
}

/// For each v: the CFWER threshold and survivors, the effective q, and the
/// FDR threshold obtained at that q.
pub fn compare_cfwer_fdr(
    observed: &StatMap,
    null: &NullDistribution,
    config: &CorrectionConfig,
) -> Result<Vec<ComparisonRow>> {
    let p_map = observed.p_values();
    let mut rows = Vec::with_capacity(config.v_list.len());
    for &v in &config.v_list {
        if v > null.k() {
            rows.push(ComparisonRow {
                v,
                t_cfwer: None,
                n_supra_cfwer: None,
                effective_q: None,
                t_fdr: None,
                n_supra_fdr: None,
            });
            continue;
        }
        let t_cfwer = cfwer_threshold(null, v, config.alpha)?;
        let n_supra = apply_t_threshold(observed, t_cfwer).n_supra;
        let q = effective_q(v, n_supra);
        let (t_fdr, n_fdr) = match q {
            Some(q) if q < 1.0 => {
                let f = fdr_threshold(&p_map, q, config.fdr_dependency)?;
                (f.t_crit, Some(f.n_supra))
            }
            _ => (None, None),
        };
        rows.push(ComparisonRow {
            v,
            t_cfwer: Some(t_cfwer),
            n_supra_cfwer: Some(n_supra),
            effective_q: q,
            t_fdr,
            n_supra_fdr: n_fdr,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::Connectivity;
    use crate::nullengine::{CollectConfig, NullMeta, NullRecord, ThresholdClusters};
    use crate::voxelstats::ZeroVariance;

    pub(crate) fn toy_null(top: Vec<Vec<f64>>, sizes: Vec<Vec<u32>>) -> NullDistribution {
        let k = top[0].len();
        let records: Vec<NullRecord> = top
            .into_iter()
            .zip(sizes)
            .enumerate()
            .map(|(i, (t, s))| NullRecord {
                perm_index: i,
                top_t: t,
                clusters: vec![ThresholdClusters {
                    max: s.iter().copied().max().unwrap_or(0),
                    sizes: s,
                }],
            })
            .collect();
        NullDistribution {
            meta: NullMeta {
                collect: CollectConfig {
                    k,
                    p_thresholds: vec![0.001],
                    tails: Tails::OneTailedPositive,
                    connectivity: Connectivity::TwentySix,
                    zero_variance: ZeroVariance::Error,
                },
                t_cutoffs: vec![3.0],
                df: 10,
                n_subjects: 12,
                mask_len: 100,
                n_perms: records.len(),
                seed: Some(0),
                content_hash: "test".into(),
            },
            records,
        }
    }

    #[test]
    fn percentile_order_statistic() {
        let v: Vec<f64> = (1..=20).map(|x| x as f64).collect();
        let t = percentile_threshold(&v, 0.05).unwrap();
        assert_eq!(t, 19.0);
        assert_eq!(v.iter().filter(|&&x| x > t).count(), 1);
        assert_eq!(percentile_threshold(&[2.5; 7], 0.05).unwrap(), 2.5);
        assert!(percentile_threshold(&[], 0.05).is_err());
        assert_eq!(percentile_rank(1000, 0.05), 950);
        assert_eq!(percentile_rank(500, 0.05), 475);
        assert_eq!(percentile_rank(10, 0.05), 10);
    }

    #[test]
    fn max_variant_order_statistic() {
        let null = toy_null(
            (0..20).map(|_| vec![1.0]).collect(),
            (1..=20).map(|m| vec![1, m]).collect(),
        );
        assert_eq!(cluster_size_threshold(&null, 0.001, ClusterVariant::Max, 0.05).unwrap(), 19);
        assert!(cluster_size_threshold(&null, 0.01, ClusterVariant::Max, 0.05).is_err());
    }

    #[test]
    fn cluster_free_null_gives_zero() {
        let null = toy_null((0..20).map(|_| vec![1.0]).collect(), vec![vec![]; 20]);
        assert_eq!(cluster_size_threshold(&null, 0.001, ClusterVariant::Max, 0.05).unwrap(), 0);
        assert_eq!(cluster_size_threshold(&null, 0.001, ClusterVariant::All, 0.05).unwrap(), 0);
    }

    #[test]
    fn effective_q_values() {
        assert_eq!(effective_q(10, 500), Some(0.02));
        assert_eq!(effective_q(1, 1), Some(1.0));
        let q = effective_q(100, 1527).unwrap();
        assert!((q - 0.0655).abs() < 5e-5);
        assert_eq!(format!("{:.1}%", q * 100.0), "6.5%");
        assert_eq!(effective_q(3, 0), None);
    }

    fn pmap(p: Vec<f64>) -> PValueMap {
        PValueMap {
            p_values: p,
            df: 20,
            tails: Tails::OneTailedPositive,
        }
    }

    #[test]
    fn bh_step_up_arithmetic() {
        let r = fdr_threshold(&pmap(vec![0.01, 0.02, 0.30]), 0.05, FdrDependency::Independent).unwrap();
        assert_eq!(r.p_crit, Some(0.02));
        assert_eq!(r.n_supra, 2);
        let r = fdr_threshold(&pmap(vec![1.0; 5]), 0.05, FdrDependency::Independent).unwrap();
        assert_eq!(r.p_crit, None);
        assert_eq!(r.n_supra, 0);
    }

    #[test]
    fn bh_arbitrary_dependency_is_stricter() {
        let p = pmap(vec![0.001, 0.008, 0.012, 0.04, 0.3]);
        let ind = fdr_threshold(&p, 0.05, FdrDependency::Independent).unwrap();
        let arb = fdr_threshold(&p, 0.05, FdrDependency::Arbitrary).unwrap();
        assert_eq!(ind.n_supra, 4);
        // c(5) = 2.2833: cutoffs 0.00438, 0.00876, 0.0131, 0.0175, 0.0219
        assert_eq!(arb.n_supra, 3);
    }

    #[test]
    fn config_validation() {
        assert!(CorrectionConfig::default().validate().is_ok());
        let bad = CorrectionConfig {
            v_list: vec![10, 1],
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = CorrectionConfig {
            p_threshold_list: vec![0.001, 0.01],
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
