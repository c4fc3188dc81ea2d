//! Evaluation report directory: CSV tables, SVG plots and a JSON manifest.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::experiments::{ClusterFprReport, MethodComparisonReport};
use super::SyntheticSpec;
use crate::correction::fmt_opt;
use crate::output::{read_csv, write_csv, write_json, Plot, Provenance, Series};
use crate::{Error, Result};

pub const CLUSTER_FPR_CSV: &str = "cluster_fpr.csv";
pub const SPILLOVER_CSV: &str = "spillover.csv";
pub const COMPARISON_CSV: &str = "method_comparison.csv";
pub const COMPARISON_SUMMARY_CSV: &str = "method_comparison_summary.csv";
pub const MANIFEST_JSON: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub spec: SyntheticSpec,
    pub cluster_fpr: Option<ClusterFprReport>,
    pub method_comparison: Option<MethodComparisonReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportManifest {
    pub provenance: Provenance,
    pub spec: SyntheticSpec,
    pub cluster_fpr: Option<serde_json::Value>,
    pub method_comparison: Option<serde_json::Value>,
    /// Log-log least-squares fit of max-variant size threshold on p.
    pub max_threshold_loglog_fit: Option<LogLogFit>,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least-squares line through `(log10 x, log10 y)` for positive pairs.
pub fn loglog_fit(points: &[(f64, f64)]) -> Option<LogLogFit> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.log10(), y.log10()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(LogLogFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    })
}

fn write_cluster_tables(dir: &Path, prov: &Provenance, r: &ClusterFprReport) -> Result<()> {
    let rows: Vec<Vec<String>> = r
        .rows
        .iter()
        .map(|x| {
            vec![
                x.p_threshold.to_string(),
                x.variant.name().to_string(),
                x.size_threshold.to_string(),
                x.fpr_in_sample.to_string(),
                x.fpr_held_out.to_string(),
            ]
        })
        .collect();
    write_csv(
        dir.join(CLUSTER_FPR_CSV),
        prov,
        &["p_threshold", "variant", "size_threshold", "fpr_in_sample", "fpr_held_out"],
        &rows,
    )?;
    let rows: Vec<Vec<String>> = r
        .spillover
        .iter()
        .map(|s| {
            vec![
                s.method.clone(),
                fmt_opt(s.p_threshold),
                fmt_opt(s.v),
                s.critical_value.to_string(),
                s.metrics.n_supra.to_string(),
                s.metrics.n_in_roi.to_string(),
                s.metrics.n_out_roi.to_string(),
                s.metrics.extent_ratio.to_string(),
                s.metrics.dice.to_string(),
            ]
        })
        .collect();
    write_csv(
        dir.join(SPILLOVER_CSV),
        prov,
        &[
            "method",
            "p_threshold",
            "v",
            "critical_value",
            "n_supra",
            "n_in_roi",
            "n_out_roi",
            "extent_ratio",
            "dice",
        ],
        &rows,
    )
}

fn write_comparison_tables(dir: &Path, prov: &Provenance, r: &MethodComparisonReport) -> Result<()> {
    let rows: Vec<Vec<String>> = r
        .cells
        .iter()
        .map(|c| {
            let mut v = vec![
                c.fraction.to_string(),
                c.repeat.to_string(),
                c.n_subjects.to_string(),
                c.mask_len.to_string(),
            ];
            v.extend(c.row.to_record());
            v
        })
        .collect();
    write_csv(
        dir.join(COMPARISON_CSV),
        prov,
        &[
            "fraction",
            "repeat",
            "n_subjects",
            "mask_len",
            "v",
            "t_cfwer",
            "n_supra_cfwer",
            "effective_q",
            "t_fdr",
            "n_supra_fdr",
        ],
        &rows,
    )?;
    let rows: Vec<Vec<String>> = r
        .summary
        .iter()
        .map(|s| {
            vec![
                s.fraction.to_string(),
                s.n_subjects.to_string(),
                s.n_valid.to_string(),
                s.n_fdr_lower.to_string(),
                fmt_opt(s.share_fdr_lower),
                fmt_opt(s.mean_t_cfwer),
                fmt_opt(s.mean_t_fdr),
            ]
        })
        .collect();
    write_csv(
        dir.join(COMPARISON_SUMMARY_CSV),
        prov,
        &[
            "fraction",
            "n_subjects",
            "n_valid",
            "n_fdr_lower",
            "share_fdr_lower",
            "mean_t_cfwer",
            "mean_t_fdr",
        ],
        &rows,
    )
}

/// Writes every available section of `report` into `dir`, then renders
/// the plots from the written tables.
pub fn write_eval_report(dir: impl AsRef<Path>, report: &EvalReport, provenance: &Provenance) -> Result<ReportManifest> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    let mut fit = None;
    if let Some(c) = &report.cluster_fpr {
        let mut prov = provenance.clone();
        prov.null_hash = Some(c.null_hash.clone());
        write_cluster_tables(dir, &prov, c)?;
        files.extend([CLUSTER_FPR_CSV.to_string(), SPILLOVER_CSV.to_string()]);
        let pts: Vec<(f64, f64)> = c
            .rows
            .iter()
            .filter(|r| r.variant == crate::correction::ClusterVariant::Max)
            .map(|r| (r.p_threshold, r.size_threshold as f64))
            .collect();
        fit = loglog_fit(&pts);
    }
    if let Some(m) = &report.method_comparison {
        write_comparison_tables(dir, provenance, m)?;
        files.extend([COMPARISON_CSV.to_string(), COMPARISON_SUMMARY_CSV.to_string()]);
    }
    files.extend(render_plots(dir)?);
    files.push(MANIFEST_JSON.to_string());
    let manifest = ReportManifest {
        provenance: provenance.clone(),
        spec: report.spec.clone(),
        cluster_fpr: report.cluster_fpr.as_ref().map(|c| {
            serde_json::json!({
                "config": c.config,
                "n_subjects": c.n_subjects,
                "mask_len": c.mask_len,
                "roi_len": c.roi_len,
                "max_observed_t": c.max_observed_t,
                "null_hash": c.null_hash,
            })
        }),
        method_comparison: report
            .method_comparison
            .as_ref()
            .map(|m| serde_json::json!({ "config": m.config, "summary": m.summary })),
        max_threshold_loglog_fit: fit,
        files,
    };
    write_json(dir.join(MANIFEST_JSON), &manifest)?;
    Ok(manifest)
}

fn parse_f(s: &str) -> Option<f64> {
    s.parse().ok()
}

/// Renders SVG plots from whichever report tables exist in `dir`. Returns
/// the file names written.
pub fn render_plots(dir: impl AsRef<Path>) -> Result<Vec<String>> {
    let dir = dir.as_ref();
    let mut written = Vec::new();
    let fpr_path = dir.join(CLUSTER_FPR_CSV);
    if fpr_path.exists() {
        let (_, rows) = read_csv(&fpr_path)?;
        let series_for = |variant: &str, col: usize| -> Vec<(f64, f64)> {
            rows.iter()
                .filter(|r| r[1] == variant)
                .filter_map(|r| Some((parse_f(&r[0])?, parse_f(&r[col])?)))
                .collect()
        };
        let fit = loglog_fit(&series_for("max", 2));
        let title = match fit {
            Some(f) => format!(
                "Cluster-size threshold vs voxel p (max: log-log slope {:.2}, R^2 {:.3})",
                f.slope, f.r_squared
            ),
            None => "Cluster-size threshold vs voxel p".to_string(),
        };
        Plot {
            title,
            x_label: "voxel-wise p-threshold".into(),
            y_label: "cluster size threshold (voxels)".into(),
            log_x: true,
            log_y: true,
            identity_line: false,
            series: vec![
                Series {
                    name: "all clusters".into(),
                    points: series_for("all", 2),
                    line: true,
                },
                Series {
                    name: "max cluster".into(),
                    points: series_for("max", 2),
                    line: true,
                },
            ],
        }
        .write(dir.join("cluster_thresholds.svg"))?;
        Plot {
            title: "Permutations with a cluster above threshold".into(),
            x_label: "voxel-wise p-threshold".into(),
            y_label: "false-positive rate".into(),
            log_x: true,
            log_y: false,
            identity_line: false,
            series: vec![
                Series {
                    name: "all clusters (held out)".into(),
                    points: series_for("all", 4),
                    line: true,
                },
                Series {
                    name: "max cluster (held out)".into(),
                    points: series_for("max", 4),
                    line: true,
                },
                Series {
                    name: "all clusters (in sample)".into(),
                    points: series_for("all", 3),
                    line: true,
                },
                Series {
                    name: "max cluster (in sample)".into(),
                    points: series_for("max", 3),
                    line: true,
                },
            ],
        }
        .write(dir.join("cluster_fpr.svg"))?;
        written.extend(["cluster_thresholds.svg".to_string(), "cluster_fpr.svg".to_string()]);
    }
    let cmp_path = dir.join(COMPARISON_CSV);
    if cmp_path.exists() {
        let (_, rows) = read_csv(&cmp_path)?;
        let mut fractions: Vec<String> = rows.iter().map(|r| r[0].clone()).collect();
        fractions.dedup();
        let mut scatter = Vec::new();
        let mut qplot = Vec::new();
        for f in &fractions {
            let fr: Vec<&Vec<String>> = rows.iter().filter(|r| &r[0] == f).collect();
            let n = fr.first().map(|r| r[2].clone()).unwrap_or_default();
            scatter.push(Series {
                name: format!("N = {n}"),
                points: fr.iter().filter_map(|r| Some((parse_f(&r[5])?, parse_f(&r[8])?))).collect(),
                line: false,
            });
            qplot.push(Series {
                name: format!("N = {n}"),
                points: fr.iter().filter_map(|r| Some((parse_f(&r[4])?, parse_f(&r[7])?))).collect(),
                line: false,
            });
        }
        Plot {
            title: "Critical t: continuous FWER vs FDR at effective q".into(),
            x_label: "t threshold (CFWER)".into(),
            y_label: "t threshold (FDR)".into(),
            log_x: false,
            log_y: false,
            identity_line: true,
            series: scatter,
        }
        .write(dir.join("t_cfwer_vs_t_fdr.svg"))?;
        Plot {
            title: "Effective q by voxel rank v".into(),
            x_label: "v".into(),
            y_label: "effective q".into(),
            log_x: true,
            log_y: true,
            identity_line: false,
            series: qplot,
        }
        .write(dir.join("effective_q.svg"))?;
        written.extend(["t_cfwer_vs_t_fdr.svg".to_string(), "effective_q.svg".to_string()]);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loglog_fit_exact_power_law() {
        let pts: Vec<(f64, f64)> = [0.05, 0.01, 0.001].iter().map(|&p: &f64| (p, 3.0 * p.powf(0.7))).collect();
        let f = loglog_fit(&pts).unwrap();
        assert!((f.slope - 0.7).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert!(loglog_fit(&[(0.1, 0.0), (0.2, 1.0)]).is_none());
    }
}
