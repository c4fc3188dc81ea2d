//! Voxel-wise t map for a synthetic cohort and its parametric p values.

use vlsm::prelude::*;
use vlsm::voxelstats::ZeroVariance;

fn main() -> vlsm::Result<()> {
    let spec = SyntheticSpec::desk_scale(60, 7);
    let (cohort, roi) = generate_synthetic_cohort(&spec)?;
    let cohort = cohort.with_mask(MaskCutoffs::Default)?;
    let scores = percent_damage_score(&cohort, &roi)?;

    let one = voxel_t_map(&cohort, &scores, &TTestOptions::default())?;
    let two = voxel_t_map(
        &cohort,
        &scores,
        &TTestOptions {
            tails: Tails::TwoTailed,
            zero_variance: ZeroVariance::Clamp(1e6),
        },
    )?;
    let (j, t) = one
        .t_values
        .iter()
        .copied()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty mask");
    let voxel = cohort.mask_index()[j];
    println!("df = {}, peak t = {t:.3} at voxel {voxel} (in ROI: {})", one.df, roi.contains(voxel));
    println!("one-tailed p = {:.3e}, two-tailed p = {:.3e}", t_to_p(t, one.df, Tails::OneTailedPositive), two.p_values().p_values[j]);
    for p in [0.05, 0.001, 0.0001] {
        let cut = p_threshold_to_t(p, one.df, Tails::OneTailedPositive)?;
        let n = one.t_values.iter().filter(|&&x| x > cut).count();
        println!("p < {p}: t > {cut:.3}, {n} voxels");
    }
    Ok(())
}
