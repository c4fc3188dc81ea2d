//! One fused permutation pass, the statistics it records, and the null cache.

use vlsm::nullengine::{load_null_cache, save_null_cache};
use vlsm::prelude::*;

fn main() -> vlsm::Result<()> {
    let spec = SyntheticSpec::desk_scale(60, 7);
    let (cohort, roi) = generate_synthetic_cohort(&spec)?;
    let cohort = cohort.with_mask(MaskCutoffs::Default)?;
    let scores = percent_damage_score(&cohort, &roi)?;

    let plan = PermutationPlan::generate(cohort.n_subjects(), 500, 2024);
    let collect = CollectConfig::default_for(&cohort);
    let start = std::time::Instant::now();
    let null = run_permutation_pass(&cohort, &scores, &plan, &collect)?;
    println!("{} permutations over {} voxels in {:.2?}", null.n_perms(), cohort.mask_len(), start.elapsed());
    println!("content hash {}", null.meta.content_hash);

    for v in [1, 10, 100] {
        let tops = null.vth_statistics(v)?;
        let mean = tops.iter().sum::<f64>() / tops.len() as f64;
        println!("v = {v:3}: mean v-th largest t {mean:.3}, 95th percentile {:.3}", cfwer_threshold(&null, v, 0.05)?);
    }
    for (p, cut) in null.meta.collect.p_thresholds.iter().zip(&null.meta.t_cutoffs) {
        let h = null.threshold_index(*p)?;
        let clusters: usize = null.records.iter().map(|r| r.clusters[h].sizes.len()).sum();
        println!("p < {p:<6} (t > {cut:.3}): {clusters} clusters across all permutations");
    }

    let path = std::env::temp_dir().join("vlsm-example.vlsmnull");
    save_null_cache(&path, &null)?;
    let back = load_null_cache(&path)?;
    println!("cache round trip identical: {}", back == null);
    Ok(())
}
