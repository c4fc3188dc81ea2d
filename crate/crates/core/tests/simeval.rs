use vlsm::output::{read_csv, Provenance};
use vlsm::prelude::*;
use vlsm::simeval::{
    run_cluster_fpr_experiment, run_method_comparison, write_eval_report, ClusterFprConfig, EvalReport,
    MethodComparisonConfig,
};

#[test]
fn cluster_fpr_report_covers_both_variants_and_is_consistent() {
    let spec = SyntheticSpec::smoke(20, 3);
    let config = ClusterFprConfig {
        n_perms: 100,
        n_holdout: 100,
        spill_v_list: vec![1, 5],
        ..Default::default()
    };
    let r = run_cluster_fpr_experiment(&spec, &config).unwrap();
    assert_eq!(r.rows.len(), 12);
    for row in &r.rows {
        assert!((0.0..=1.0).contains(&row.fpr_held_out));
        if row.variant == ClusterVariant::Max {
            assert!(row.fpr_in_sample <= 0.05);
        }
        let all = r.row(row.p_threshold, ClusterVariant::All).unwrap();
        let max = r.row(row.p_threshold, ClusterVariant::Max).unwrap();
        assert!(all.fpr_held_out >= max.fpr_held_out || all.size_threshold > max.size_threshold);
    }
    assert!(r.spill("cfwer", None, Some(5)).is_some());
    assert_eq!(r.roi_len, spec.roi.len());
}

#[test]
fn degenerate_subsamples_become_na_cells() {
    let spec = SyntheticSpec::smoke(12, 2);
    let config = MethodComparisonConfig {
        fractions: vec![1.0, 0.25],
        n_repeats: 2,
        v_list: vec![1, 2],
        n_perms: 30,
        ..Default::default()
    };
    let r = run_method_comparison(&spec, &config).unwrap();
    assert_eq!(r.cells.len(), 2 * 2 * 2);
    let tiny: Vec<_> = r.cells.iter().filter(|c| c.fraction == 0.25).collect();
    assert!(tiny.iter().all(|c| c.n_subjects == 3));
    for c in &tiny {
        if c.skipped.is_some() {
            assert!(!c.row.is_comparable());
            assert_eq!(c.mask_len, 0);
        }
    }
}

#[test]
fn report_directory_round_trips_tables() {
    let spec = SyntheticSpec::smoke(16, 1);
    let fpr = run_cluster_fpr_experiment(
        &spec,
        &ClusterFprConfig {
            n_perms: 40,
            n_holdout: 40,
            ..Default::default()
        },
    )
    .unwrap();
    let cmp = run_method_comparison(
        &spec,
        &MethodComparisonConfig {
            fractions: vec![1.0],
            n_repeats: 2,
            n_perms: 40,
            v_list: vec![1, 3],
            ..Default::default()
        },
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let report = EvalReport {
        spec: spec.clone(),
        cluster_fpr: Some(fpr.clone()),
        method_comparison: Some(cmp.clone()),
    };
    let manifest = write_eval_report(dir.path(), &report, &Provenance::new(serde_json::json!({}))).unwrap();
    for f in &manifest.files {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let (header, rows) = read_csv(dir.path().join("cluster_fpr.csv")).unwrap();
    assert_eq!(header[0], "p_threshold");
    assert_eq!(rows.len(), fpr.rows.len());
    let (_, rows) = read_csv(dir.path().join("method_comparison.csv")).unwrap();
    assert_eq!(rows.len(), cmp.cells.len());
    let svg = std::fs::read_to_string(dir.path().join("cluster_thresholds.svg")).unwrap();
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
}
