//! Connected components of a thresholded t map under each connectivity.

use vlsm::prelude::*;

fn main() -> vlsm::Result<()> {
    let spec = SyntheticSpec::desk_scale(60, 7);
    let (cohort, roi) = generate_synthetic_cohort(&spec)?;
    let cohort = cohort.with_mask(MaskCutoffs::Default)?;
    let scores = percent_damage_score(&cohort, &roi)?;
    let map = voxel_t_map(&cohort, &scores, &TTestOptions::default())?;
    let cut = p_threshold_to_t(0.001, map.df, map.tails)?;
    let supra: Vec<usize> = cohort
        .mask_index()
        .into_iter()
        .zip(&map.t_values)
        .filter(|(_, &t)| t > cut)
        .map(|(v, _)| v)
        .collect();
    println!("{} voxels with p < 0.001", supra.len());
    for conn in [Connectivity::Six, Connectivity::Eighteen, Connectivity::TwentySix] {
        let (_, labeling) = label_components(&supra, cohort.grid(), conn)?;
        let mut sizes = labeling.sizes.clone();
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        sizes.truncate(5);
        println!(
            "{:2}-connectivity: {} clusters, largest {}, top sizes {:?}",
            conn.neighbours(),
            labeling.n_clusters(),
            max_cluster_size(&labeling),
            sizes
        );
    }
    Ok(())
}
