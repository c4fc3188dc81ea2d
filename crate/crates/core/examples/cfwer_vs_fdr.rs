//! Continuous FWER at several ranks v, the effective q each implies, and
//! the FDR threshold at that q.

use vlsm::correction::{apply_cfwer, apply_fdr};
use vlsm::prelude::*;

fn main() -> vlsm::Result<()> {
    let spec = SyntheticSpec::desk_scale(120, 7);
    let (cohort, roi) = generate_synthetic_cohort(&spec)?;
    let cohort = cohort.with_mask(MaskCutoffs::Default)?;
    let scores = percent_damage_score(&cohort, &roi)?;
    let observed = voxel_t_map(&cohort, &scores, &TTestOptions::default())?;
    let plan = PermutationPlan::generate(cohort.n_subjects(), 1000, 99);
    let null = run_permutation_pass(&cohort, &scores, &plan, &CollectConfig::default_for(&cohort))?;

    let config = CorrectionConfig::default();
    println!("{}", ComparisonRow::HEADER.join("\t"));
    for row in compare_cfwer_fdr(&observed, &null, &config)? {
        println!("{}", row.to_record().join("\t"));
    }

    let r = apply_cfwer(&observed, &null, 10, 0.05)?;
    println!("CFWER v=10: t > {:.3}, {} voxels, effective q {:?}", r.critical_value, r.n_supra, r.effective_q);
    let f = apply_fdr(&observed, 0.05, FdrDependency::Independent)?;
    println!("FDR q=0.05: t > {:.3}, {} voxels", f.critical_value, f.n_supra);
    println!("effective q for v=100 with 1527 survivors: {:.1}%", 100.0 * effective_q(100, 1527).unwrap());
    Ok(())
}
