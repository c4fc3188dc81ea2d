//! Permutation plans and the fused permutation pass.
//!
//! One pass over a plan computes, per permutation, the `K` largest voxel
//! statistics and the supra-threshold cluster sizes at every configured
//! voxel p-threshold. Every correction method reads from the resulting
//! [`NullDistribution`].

mod cache;

pub use cache::{content_hash, decode_null, encode_null, load_null_cache, save_null_cache, CACHE_MAGIC, CACHE_VERSION};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterLabeler, Connectivity, LabelScratch};
use crate::cohort::{CohortMatrix, ScoreVector};
use crate::rng::stream_rng;
use crate::voxelstats::{p_threshold_to_t, TMapKernel, TTestOptions, Tails, ZeroVariance};
use crate::{Error, Result};

/// The six voxel-wise p-thresholds, most permissive first.
pub const DEFAULT_P_THRESHOLDS: [f64; 6] = [0.05, 0.01, 0.005, 0.001, 0.0005, 0.0001];
pub const DEFAULT_N_PERMS: usize = 1000;
pub const DEFAULT_K: usize = 1000;

/// Subject orderings for each permutation. Order `i` depends only on
/// `(seed, i)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermutationPlan {
    pub seed: Option<u64>,
    pub n_subjects: usize,
    pub orders: Vec<Vec<u32>>,
}

/// Fisher-Yates shuffle of `0..n` on stream `index` of `seed`.
pub fn permutation_order(n_subjects: usize, seed: u64, index: u64) -> Vec<u32> {
    let mut order: Vec<u32> = (0..n_subjects as u32).collect();
    order.shuffle(&mut stream_rng(seed, index));
    order
}

impl PermutationPlan {
    /// Independent uniform shuffles; the identity is not excluded.
    pub fn generate(n_subjects: usize, n_perms: usize, seed: u64) -> Self {
        Self::generate_range(n_subjects, 0, n_perms, seed)
    }

    /// Orders `start..start + n_perms` of the stream family for `seed`.
    /// Disjoint ranges give independent plans (e.g. a held-out set).
    pub fn generate_range(n_subjects: usize, start: usize, n_perms: usize, seed: u64) -> Self {
        PermutationPlan {
            seed: Some(seed),
            n_subjects,
            orders: (start..start + n_perms)
                .into_par_iter()
                .map(|i| permutation_order(n_subjects, seed, i as u64))
                .collect(),
        }
    }

    pub fn from_orders(n_subjects: usize, orders: Vec<Vec<u32>>) -> Result<Self> {
        for (i, o) in orders.iter().enumerate() {
            let mut seen = vec![false; n_subjects];
            if o.len() != n_subjects {
                return Err(Error::invalid(format!("order {i} has length {}", o.len())));
            }
            for &x in o {
                let x = x as usize;
                if x >= n_subjects || seen[x] {
                    return Err(Error::invalid(format!("order {i} is not a permutation")));
                }
                seen[x] = true;
            }
        }
        Ok(PermutationPlan {
            seed: None,
            n_subjects,
            orders,
        })
    }

    pub fn n_perms(&self) -> usize {
        self.orders.len()
    }
}

/// What the permutation pass records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectConfig {
    pub k: usize,
    pub p_thresholds: Vec<f64>,
    pub tails: Tails,
    pub connectivity: Connectivity,
    pub zero_variance: ZeroVariance,
}

impl CollectConfig {
    /// Six p-thresholds, one-tailed, 26-connectivity, K = min(1000, mask).
    pub fn default_for(cohort: &CohortMatrix) -> Self {
        CollectConfig {
            k: DEFAULT_K.min(cohort.mask_len()),
            p_thresholds: DEFAULT_P_THRESHOLDS.to_vec(),
            tails: Tails::OneTailedPositive,
            connectivity: Connectivity::TwentySix,
            zero_variance: ZeroVariance::Error,
        }
    }

    pub fn t_options(&self) -> TTestOptions {
        TTestOptions {
            tails: self.tails,
            zero_variance: self.zero_variance,
        }
    }

    fn validate(&self, mask_len: usize) -> Result<()> {
        if self.k == 0 || self.k > mask_len {
            return Err(Error::invalid(format!(
                "K = {} must be in 1..={mask_len} (mask size)",
                self.k
            )));
        }
        if self.p_thresholds.is_empty() {
            return Err(Error::invalid("p-threshold list is empty"));
        }
        if let Some(p) = self.p_thresholds.iter().find(|&&p| !(p > 0.0 && p < 1.0)) {
            return Err(Error::invalid(format!("p-threshold {p} outside (0, 1)")));
        }
        Ok(())
    }
}

/// Supra-threshold clusters of one permutation at one p-threshold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThresholdClusters {
    /// Sizes in label order.
    pub sizes: Vec<u32>,
    /// Largest size, 0 when there are no clusters.
    pub max: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullRecord {
    pub perm_index: usize,
    /// K largest statistics, descending.
    pub top_t: Vec<f64>,
    /// One entry per configured p-threshold, in configuration order.
    pub clusters: Vec<ThresholdClusters>,
}

/// Configuration echo stored with every null distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullMeta {
    pub collect: CollectConfig,
    /// Statistic cutoff for each p-threshold.
    pub t_cutoffs: Vec<f64>,
    pub df: usize,
    pub n_subjects: usize,
    pub mask_len: usize,
    pub n_perms: usize,
    pub seed: Option<u64>,
    pub content_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullDistribution {
    pub meta: NullMeta,
    pub records: Vec<NullRecord>,
}

impl NullDistribution {
    pub fn n_perms(&self) -> usize {
        self.records.len()
    }

    pub fn k(&self) -> usize {
        self.meta.collect.k
    }

    /// Position of `p` in the configured threshold list.
    pub fn threshold_index(&self, p: f64) -> Result<usize> {
        self.meta
            .collect
            .p_thresholds
            .iter()
            .position(|&q| (q - p).abs() <= 1e-12 * p.abs())
            .ok_or_else(|| Error::invalid(format!("p-threshold {p} was not collected in this null")))
    }

    /// `top_t[v - 1]` of every record.
    pub fn vth_statistics(&self, v: usize) -> Result<Vec<f64>> {
        if v == 0 || v > self.k() {
            return Err(Error::invalid(format!("v = {v} outside 1..={} (collected K)", self.k())));
        }
        Ok(self.records.iter().map(|r| r.top_t[v - 1]).collect())
    }

    /// Records `range` as a separate null, e.g. to split defining and
    /// held-out permutations from one pass.
    pub fn slice(&self, range: std::ops::Range<usize>) -> NullDistribution {
        let records = self.records[range].to_vec();
        NullDistribution {
            meta: NullMeta {
                n_perms: records.len(),
                ..self.meta.clone()
            },
            records,
        }
    }
}

/// k-th largest value (1-based, duplicates counted).
pub fn kth_largest(values: &[f64], k: usize) -> Result<f64> {
    if k == 0 || k > values.len() {
        return Err(Error::invalid(format!("k = {k} outside 1..={}", values.len())));
    }
    let mut v = values.to_vec();
    let (_, kth, _) = v.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
    Ok(*kth)
}

fn top_k_descending(values: &[f64], k: usize, buf: &mut Vec<f64>) -> Vec<f64> {
    buf.clear();
    buf.extend_from_slice(values);
    if k < buf.len() {
        buf.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
        buf.truncate(k);
    }
    buf.sort_unstable_by(|a, b| b.total_cmp(a));
    buf.clone()
}

/// Per-threshold statistic cutoffs for `collect`.
pub fn threshold_cutoffs(collect: &CollectConfig, df: usize) -> Result<Vec<f64>> {
    collect
        .p_thresholds
        .iter()
        .map(|&p| p_threshold_to_t(p, df, collect.tails))
        .collect()
}

struct PassContext<'a> {
    kernel: TMapKernel<'a>,
    labeler: ClusterLabeler,
    cutoffs: Vec<f64>,
    scores: &'a [f64],
    k: usize,
    tails: Tails,
}

#[derive(Default)]
struct PassScratch {
    permuted: Vec<f64>,
    t: Vec<f64>,
    stats: Vec<f64>,
    topk: Vec<f64>,
    supra: Vec<bool>,
    labels: LabelScratch,
}

impl PassContext<'_> {
    fn record(&self, perm_index: usize, order: &[u32], s: &mut PassScratch) -> Result<NullRecord> {
        s.permuted.clear();
        s.permuted.extend(order.iter().map(|&o| self.scores[o as usize]));
        self.kernel.compute_into(&s.permuted, &mut s.t)?;
        s.stats.clear();
        s.stats.extend(s.t.iter().map(|&t| self.tails.statistic(t)));
        let top_t = top_k_descending(&s.stats, self.k, &mut s.topk);
        let mut clusters = Vec::with_capacity(self.cutoffs.len());
        for &cut in &self.cutoffs {
            s.supra.clear();
            s.supra.extend(s.stats.iter().map(|&x| x > cut));
            let sizes = self.labeler.cluster_sizes(&s.supra, &mut s.labels);
            let max = sizes.iter().copied().max().unwrap_or(0);
            clusters.push(ThresholdClusters { sizes, max });
        }
        Ok(NullRecord {
            perm_index,
            top_t,
            clusters,
        })
    }
}

/// Runs every permutation of `plan`, in parallel on the current rayon pool.
/// Records are stored by permutation index, so the output does not depend on
/// the number of workers.
pub fn run_permutation_pass(
    cohort: &CohortMatrix,
    scores: &ScoreVector,
    plan: &PermutationPlan,
    collect: &CollectConfig,
) -> Result<NullDistribution> {
    let n = cohort.n_subjects();
    scores.check_len(n)?;
    if plan.n_subjects != n {
        return Err(Error::invalid(format!(
            "plan is for {} subjects, cohort has {n}",
            plan.n_subjects
        )));
    }
    collect.validate(cohort.mask_len())?;
    let kernel = TMapKernel::new(cohort, collect.t_options())?;
    let df = kernel.df();
    let cutoffs = threshold_cutoffs(collect, df)?;
    let labeler = ClusterLabeler::new(*cohort.grid(), cohort.mask_index(), collect.connectivity)?;
    let ctx = PassContext {
        kernel,
        labeler,
        cutoffs: cutoffs.clone(),
        scores: scores.values(),
        k: collect.k,
        tails: collect.tails,
    };
    let records = plan
        .orders
        .par_iter()
        .enumerate()
        .map_init(PassScratch::default, |scratch, (i, order)| ctx.record(i, order, scratch))
        .collect::<Result<Vec<_>>>()?;
    Ok(NullDistribution {
        meta: NullMeta {
            collect: collect.clone(),
            t_cutoffs: cutoffs,
            df,
            n_subjects: n,
            mask_len: cohort.mask_len(),
            n_perms: plan.n_perms(),
            seed: plan.seed,
            content_hash: content_hash(cohort, scores, plan, collect),
        },
        records,
    })
}

/// Runs `f` on a dedicated pool of `workers` threads (all cores when `None`).
pub fn with_workers<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        if w == 0 {
            return Err(Error::invalid("workers must be at least 1"));
        }
        builder = builder.num_threads(w);
    }
    let pool = builder.build().map_err(|e| Error::invalid(e.to_string()))?;
    Ok(pool.install(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng;

    #[test]
    fn kth_largest_cases() {
        let v = [5.0, 1.0, 3.0, 2.0, 4.0];
        assert_eq!(kth_largest(&v, 1).unwrap(), 5.0);
        assert_eq!(kth_largest(&v, 2).unwrap(), 4.0);
        assert_eq!(kth_largest(&v, 5).unwrap(), 1.0);
        assert!(kth_largest(&v, 0).is_err());
        assert!(kth_largest(&v, 6).is_err());
        assert_eq!(kth_largest(&[2.0, 2.0, 1.0], 2).unwrap(), 2.0);
    }

    #[test]
    fn kth_largest_matches_sort() {
        let mut rng = stream_rng(17, 0);
        let v: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>() * 10.0 - 5.0).collect();
        let mut sorted = v.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for k in [1, 10, 100, 1000] {
            assert_eq!(kth_largest(&v, k).unwrap(), sorted[k - 1]);
        }
    }

    #[test]
    fn single_subject_plan_is_identity() {
        let p = PermutationPlan::generate(1, 5, 3);
        assert!(p.orders.iter().all(|o| o == &vec![0]));
    }

    #[test]
    fn plans_are_deterministic_and_index_addressable() {
        let a = PermutationPlan::generate(9, 20, 77);
        let b = PermutationPlan::generate(9, 20, 77);
        assert_eq!(a, b);
        let tail = PermutationPlan::generate_range(9, 10, 10, 77);
        assert_eq!(&a.orders[10..], &tail.orders[..]);
        for o in &a.orders {
            let mut s = o.clone();
            s.sort();
            assert_eq!(s, (0..9).collect::<Vec<u32>>());
        }
    }

    #[test]
    fn orders_are_uniform_over_s3() {
        // Exhaustive enumeration: 6 orders of 3 subjects, each expected 1/6.
        let n = 60_000;
        let plan = PermutationPlan::generate(3, n, 2024);
        let all: Vec<Vec<u32>> = vec![
            vec![0, 1, 2],
            vec![0, 2, 1],
            vec![1, 0, 2],
            vec![1, 2, 0],
            vec![2, 0, 1],
            vec![2, 1, 0],
        ];
        let mut counts = [0usize; 6];
        for o in &plan.orders {
            counts[all.iter().position(|a| a == o).unwrap()] += 1;
        }
        let expected = n as f64 / 6.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // chi-square(5) upper 0.001 quantile
        assert!(chi2 < 20.515, "chi2 = {chi2}, counts {counts:?}");
        for &c in &counts {
            assert!((c as f64 / n as f64 - 1.0 / 6.0).abs() < 0.01);
        }
    }

    #[test]
    fn from_orders_validates() {
        assert!(PermutationPlan::from_orders(3, vec![vec![0, 1, 2], vec![2, 0, 1]]).is_ok());
        assert!(PermutationPlan::from_orders(3, vec![vec![0, 0, 2]]).is_err());
        assert!(PermutationPlan::from_orders(3, vec![vec![0, 1]]).is_err());
    }
}
