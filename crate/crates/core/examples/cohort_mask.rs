//! Build a lesion matrix from volumes and apply the analysis-mask cutoffs.

use vlsm::cohort::percent_damage_score;
use vlsm::prelude::*;

fn main() -> vlsm::Result<()> {
    let spec = SyntheticSpec::desk_scale(60, 7);
    let (cohort, roi) = generate_synthetic_cohort(&spec)?;
    let volumes: Vec<Volume3D> = (0..cohort.n_subjects()).map(|s| cohort.lesion_volume(s)).collect();
    let rebuilt = build_cohort(&volumes, cohort.subject_ids().to_vec())?;
    println!("{} subjects, {} voxels lesioned at least once", rebuilt.n_subjects(), rebuilt.mask_len());

    for cutoffs in [
        MaskCutoffs::Default,
        MaskCutoffs::Fixed { min_lesioned: 1, min_intact: 0 },
        MaskCutoffs::Fixed { min_lesioned: 10, min_intact: 10 },
    ] {
        let masked = rebuilt.with_mask(cutoffs)?;
        let (l, i) = cutoffs.resolve(masked.n_subjects());
        println!("  >= {l} lesioned and >= {i} intact: {} voxels", masked.mask_len());
    }

    let scores = percent_damage_score(&rebuilt, &roi)?;
    let damaged = scores.values().iter().filter(|&&s| s > 0.0).count();
    println!("ROI of {} voxels damaged in {damaged} subjects", roi.len());

    let masked = rebuilt.with_mask(MaskCutoffs::Default)?;
    let (half, half_scores) = subsample(&masked, &scores, 0.5, 42)?;
    println!("half sample: {} subjects, {} mask voxels, {} scores", half.n_subjects(), half.mask_len(), half_scores.len());
    Ok(())
}
