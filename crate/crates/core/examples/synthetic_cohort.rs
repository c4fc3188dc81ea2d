//! Synthetic cohorts: lesion sizes, ROI damage and calibrated score noise.

use vlsm::simeval::{calibrate_noise_sd, synthetic_scores, NoiseSpec};
use vlsm::prelude::*;

fn main() -> vlsm::Result<()> {
    let mut spec = SyntheticSpec::desk_scale(120, 7);
    let (cohort, roi) = generate_synthetic_cohort(&spec)?;
    let sizes: Vec<usize> = (0..cohort.n_subjects()).map(|s| cohort.lesion_of(s).len()).collect();
    let mean = sizes.iter().sum::<usize>() as f64 / sizes.len() as f64;
    println!(
        "{} lesions, mean size {mean:.0} voxels (model mean {:.0}), range {}..{}",
        sizes.len(),
        spec.mean_lesion_size(),
        sizes.iter().min().unwrap(),
        sizes.iter().max().unwrap()
    );
    let overlap = cohort.overlap_volume();
    println!("peak overlap {} subjects", overlap.values.iter().copied().fold(0.0, f64::max));

    let masked = cohort.with_mask(MaskCutoffs::Default)?;
    let clean = percent_damage_score(&masked, &roi)?;
    let sd = calibrate_noise_sd(&masked, &clean, 0.5, 1)?;
    println!("noise sd halving the peak t: {sd:.4}");

    spec.noise = NoiseSpec::MaxTRatio(0.5);
    let noisy = synthetic_scores(&masked, &spec)?;
    let peak = |s: &ScoreVector| -> vlsm::Result<f64> {
        let m = voxel_t_map(&masked, s, &TTestOptions::default())?;
        Ok(m.t_values.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    };
    println!("peak t clean {:.3}, noisy {:.3}", peak(&clean)?, peak(&noisy)?);
    Ok(())
}
