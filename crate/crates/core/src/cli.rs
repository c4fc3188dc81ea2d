//! The `vlsm` command-line front end.
//!
//! Every subcommand resolves a [`RunConfig`] from built-in defaults, an
//! optional JSON file (`--config`) and flags, in that order of precedence
//! (flags win). `--dump-config` prints the resolved configuration and
//! exits, so a run can be archived and replayed with `--config`.
//!
//! Exit codes: 0 success, 2 usage or validation error, 3 runtime failure.
//! Errors are printed to stderr as one JSON object.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterLabeler, Connectivity, LabelScratch};
use crate::cohort::{load_manifest_cohort, read_scores_csv, write_scores_csv, CohortMatrix, ManifestEntry, MaskCutoffs};
use crate::correction::{
    apply_cfwer, apply_cluster_correction, apply_fdr, cluster_size_threshold, compare_cfwer_fdr, fmt_opt, ClusterVariant,
    ComparisonRow, CorrectionConfig, CorrectionResult, FdrDependency,
};
use crate::nullengine::{
    content_hash, load_null_cache, run_permutation_pass, save_null_cache, with_workers, CollectConfig,
    NullDistribution, PermutationPlan, DEFAULT_N_PERMS, DEFAULT_P_THRESHOLDS,
};
use crate::output::{read_csv, write_csv, write_json, Plot, Provenance, Series};
use crate::rng::derive_seed;
use crate::simeval::{
    generate_synthetic_cohort, run_cluster_fpr_experiment, run_method_comparison, synthetic_scores, write_eval_report,
    ClusterFprConfig, EvalReport, MethodComparisonConfig, NoiseSpec, SyntheticSpec,
};
use crate::volume::{write_nifti, DataType, Volume3D};
use crate::voxelstats::{voxel_t_map, StatMap, Tails, ZeroVariance};
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

pub const TMAP_FILE: &str = "tmap.nii.gz";
pub const ANALYSIS_MASK_FILE: &str = "analysis_mask.nii.gz";
pub const CORRECTIONS_CSV: &str = "corrections.csv";
pub const COMPARISON_CSV: &str = "comparison.csv";
pub const COMPARISON_SVG: &str = "comparison.svg";
pub const RUN_JSON: &str = "run.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrectionChoice {
    ClusterAll,
    ClusterMax,
    Cfwer,
    Fdr,
    #[default]
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    ClusterFpr,
    MethodComparison,
    #[default]
    All,
}

/// Synthetic cohort preset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    /// 32^3 grid; see [`SyntheticSpec::desk_scale`].
    #[default]
    Desk,
    /// 8^3 grid; see [`SyntheticSpec::smoke`].
    Smoke,
}

/// Resolved configuration of one invocation. Echoed into every output's
/// provenance block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub subcommand: Option<String>,
    pub manifest: Option<PathBuf>,
    pub scores: Option<PathBuf>,
    pub roi: Option<PathBuf>,
    pub null_cache: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub tails: Tails,
    pub mask_cutoffs: MaskCutoffs,
    pub connectivity: Connectivity,
    pub alpha: f64,
    pub v_list: Vec<usize>,
    pub p_threshold_list: Vec<f64>,
    pub correction: CorrectionChoice,
    pub fdr_q: f64,
    pub fdr_dependency: FdrDependency,
    pub n_perms: usize,
    pub seed: u64,
    pub invert_scores: bool,
    pub experiment: Experiment,
    pub scale: Scale,
    /// Cohort size for `simulate` and `evaluate`; preset default when unset.
    pub n_subjects: Option<usize>,
    /// Noise calibrated to this ratio of the noiseless largest t.
    pub noise_ratio: Option<f64>,
    pub fractions: Vec<f64>,
    pub n_repeats: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let c = CorrectionConfig::default();
        RunConfig {
            subcommand: None,
            manifest: None,
            scores: None,
            roi: None,
            null_cache: None,
            out: None,
            tails: Tails::OneTailedPositive,
            mask_cutoffs: MaskCutoffs::Default,
            connectivity: Connectivity::TwentySix,
            alpha: c.alpha,
            v_list: c.v_list,
            p_threshold_list: DEFAULT_P_THRESHOLDS.to_vec(),
            correction: CorrectionChoice::All,
            fdr_q: c.fdr_q,
            fdr_dependency: c.fdr_dependency,
            n_perms: DEFAULT_N_PERMS,
            seed: 1,
            invert_scores: false,
            experiment: Experiment::All,
            scale: Scale::Desk,
            n_subjects: None,
            noise_ratio: None,
            fractions: vec![1.0, 0.5, 0.25],
            n_repeats: 20,
        }
    }
}

impl RunConfig {
    pub fn correction_config(&self) -> CorrectionConfig {
        CorrectionConfig {
            alpha: self.alpha,
            v_list: self.v_list.clone(),
            p_threshold_list: self.p_threshold_list.clone(),
            cluster_variant: ClusterVariant::Max,
            fdr_q: self.fdr_q,
            fdr_dependency: self.fdr_dependency,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.correction_config().validate()?;
        if self.n_perms == 0 {
            return Err(Error::invalid("--perms must be positive"));
        }
        if let Some(r) = self.noise_ratio {
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::invalid(format!("noise ratio must be in (0, 1), got {r}")));
            }
        }
        Ok(())
    }

    fn out_dir(&self) -> Result<&Path> {
        self.out.as_deref().ok_or_else(|| Error::invalid("--out is required"))
    }

    fn synthetic_spec(&self, default_n: usize) -> SyntheticSpec {
        let n = self.n_subjects.unwrap_or(default_n);
        let mut spec = match self.scale {
            Scale::Desk => SyntheticSpec::desk_scale(n, self.seed),
            Scale::Smoke => SyntheticSpec::smoke(n, self.seed),
        };
        spec.noise = self.noise_ratio.map_or(NoiseSpec::None, NoiseSpec::MaxTRatio);
        spec
    }
}

#[derive(Debug, Parser)]
#[command(name = "vlsm", version, about = "Voxel-based lesion-symptom mapping with permutation corrections")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic cohort (lesion NIfTIs, manifest, scores, ROI).
    Simulate(Flags),
    /// Map a cohort: t map, permutation null, corrections, comparison table.
    Run(Flags),
    /// Run the synthetic evaluation experiments into a report directory.
    Evaluate(Flags),
    /// Re-render plots from the tables in an output directory.
    Report(Flags),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Run(_) => "run",
            Command::Evaluate(_) => "evaluate",
            Command::Report(_) => "report",
        }
    }

    fn flags(&self) -> &Flags {
        match self {
            Command::Simulate(f) | Command::Run(f) | Command::Evaluate(f) | Command::Report(f) => f,
        }
    }
}

fn serde_enum<T: DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|e| e.to_string())
}

fn connectivity_arg(s: &str) -> std::result::Result<Connectivity, String> {
    let n: u8 = s.parse().map_err(|_| format!("not a number: {s}"))?;
    Connectivity::from_neighbours(n).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// JSON list of {subject_id, lesion_path}.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// CSV with header `subject_id,score`.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Region of interest (JSON index list or NIfTI), for reporting only.
    #[arg(long)]
    pub roi: Option<PathBuf>,
    #[arg(long)]
    pub null_cache: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Print the resolved configuration as JSON and exit.
    #[arg(long)]
    pub dump_config: bool,
    #[arg(long)]
    pub perms: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Comma-separated ranks for continuous FWER.
    #[arg(long = "v", value_delimiter = ',')]
    pub v: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub p_thresholds: Option<Vec<f64>>,
    /// `one-tailed-positive` or `two-tailed`.
    #[arg(long, value_parser = serde_enum::<Tails>)]
    pub tails: Option<Tails>,
    /// 6, 18 or 26.
    #[arg(long, value_parser = connectivity_arg)]
    pub connectivity: Option<Connectivity>,
    /// `cluster-all`, `cluster-max`, `cfwer`, `fdr` or `all`.
    #[arg(long, value_parser = serde_enum::<CorrectionChoice>)]
    pub correction: Option<CorrectionChoice>,
    #[arg(long)]
    pub q: Option<f64>,
    /// `independent` or `arbitrary`.
    #[arg(long, value_parser = serde_enum::<FdrDependency>)]
    pub fdr_dependency: Option<FdrDependency>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Negate scores so that lower raw scores mean worse deficits.
    #[arg(long)]
    pub invert_scores: bool,
    /// `cluster-fpr`, `method-comparison` or `all`.
    #[arg(long, value_parser = serde_enum::<Experiment>)]
    pub experiment: Option<Experiment>,
    /// `desk` or `smoke`.
    #[arg(long, value_parser = serde_enum::<Scale>)]
    pub scale: Option<Scale>,
    #[arg(long)]
    pub subjects: Option<usize>,
    #[arg(long)]
    pub noise_ratio: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub fractions: Option<Vec<f64>>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub min_lesioned: Option<usize>,
    #[arg(long)]
    pub min_intact: Option<usize>,
}

/// Defaults, then the `--config` file, then flags.
pub fn resolve_config(subcommand: &str, flags: &Flags) -> Result<RunConfig> {
    let mut c = match &flags.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            serde_json::from_str::<RunConfig>(&text).map_err(|e| Error::Parse {
                path: path.clone(),
                message: e.to_string(),
            })?
        }
        None => RunConfig::default(),
    };
    c.subcommand = Some(subcommand.to_string());
    macro_rules! set {
        ($field:ident, $flag:expr) => {
            if let Some(x) = $flag.clone() {
                c.$field = x;
            }
        };
    }
    set!(tails, flags.tails);
    set!(connectivity, flags.connectivity);
    set!(alpha, flags.alpha);
    set!(v_list, flags.v);
    set!(p_threshold_list, flags.p_thresholds);
    set!(correction, flags.correction);
    set!(fdr_q, flags.q);
    set!(fdr_dependency, flags.fdr_dependency);
    set!(n_perms, flags.perms);
    set!(seed, flags.seed);
    set!(experiment, flags.experiment);
    set!(scale, flags.scale);
    set!(fractions, flags.fractions);
    set!(n_repeats, flags.repeats);
    for (field, flag) in [
        (&mut c.manifest, &flags.manifest),
        (&mut c.scores, &flags.scores),
        (&mut c.roi, &flags.roi),
        (&mut c.null_cache, &flags.null_cache),
        (&mut c.out, &flags.out),
    ] {
        if flag.is_some() {
            *field = flag.clone();
        }
    }
    if flags.subjects.is_some() {
        c.n_subjects = flags.subjects;
    }
    if flags.noise_ratio.is_some() {
        c.noise_ratio = flags.noise_ratio;
    }
    if flags.invert_scores {
        c.invert_scores = true;
    }
    if flags.min_lesioned.is_some() || flags.min_intact.is_some() {
        let (l, i) = c.mask_cutoffs.resolve(0);
        c.mask_cutoffs = MaskCutoffs::Fixed {
            min_lesioned: flags.min_lesioned.unwrap_or(l),
            min_intact: flags.min_intact.unwrap_or(i),
        };
    }
    c.validate()?;
    Ok(c)
}

fn provenance(config: &RunConfig, workers: Option<usize>) -> Provenance {
    let mut p = Provenance::new(serde_json::to_value(config).expect("config serialises"));
    p.seed = Some(config.seed);
    p.workers = workers;
    p
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Parses `args` (including the program name) and executes the command.
/// Returns the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            if e.is_validation() {
                EXIT_VALIDATION
            } else {
                EXIT_RUNTIME
            }
        }
    }
}

/// Machine-readable form of `e`.
pub fn error_json(e: &Error) -> serde_json::Value {
    let (kind, path) = match e {
        Error::Io { path, .. } => ("io", Some(path)),
        Error::Parse { path, .. } => ("parse", Some(path)),
        Error::MalformedHeader(_) => ("malformed_header", None),
        Error::UnsupportedDatatype(_) => ("unsupported_datatype", None),
        Error::TruncatedData { .. } => ("truncated_data", None),
        Error::Unrepresentable { .. } => ("unrepresentable", None),
        Error::InvalidVolume(_) => ("invalid_volume", None),
        Error::GridMismatch(_) => ("grid_mismatch", None),
        Error::DuplicateSubject(_) => ("duplicate_subject", None),
        Error::EmptyMask => ("empty_mask", None),
        Error::InvalidScores(_) => ("invalid_scores", None),
        Error::InvalidRoi(_) => ("invalid_roi", None),
        Error::ZeroVariance { .. } => ("zero_variance", None),
        Error::InvalidArgument(_) => ("invalid_argument", None),
        Error::Cache(_) => ("cache", None),
    };
    serde_json::json!({
        "error": {
            "kind": kind,
            "message": e.to_string(),
            "path": path.map(|p| p.display().to_string()),
        }
    })
}

pub fn execute(command: &Command) -> Result<()> {
    let flags = command.flags();
    let config = resolve_config(command.name(), flags)?;
    if flags.dump_config {
        println!("{}", serde_json::to_string_pretty(&config).expect("config serialises"));
        return Ok(());
    }
    let workers = flags.workers;
    if workers == Some(0) {
        return Err(Error::invalid("--workers must be at least 1"));
    }
    match command {
        Command::Simulate(_) => with_workers(workers, || cmd_simulate(&config, workers))?,
        Command::Run(_) => with_workers(workers, || cmd_run(&config, workers).map(|_| ()))?,
        Command::Evaluate(_) => with_workers(workers, || cmd_evaluate(&config, workers).map(|_| ()))?,
        Command::Report(_) => cmd_report(&config).map(|_| ()),
    }
}

/// Writes a synthetic cohort in the same layout `run` reads:
/// `lesions/<id>.nii.gz`, `manifest.json`, `scores.csv`, `roi.json` and
/// `spec.json`.
pub fn cmd_simulate(config: &RunConfig, workers: Option<usize>) -> Result<()> {
    let out = config.out_dir()?;
    let spec = config.synthetic_spec(match config.scale {
        Scale::Desk => 60,
        Scale::Smoke => 12,
    });
    let (cohort, roi) = generate_synthetic_cohort(&spec)?;
    let scores = synthetic_scores(&cohort, &spec)?;
    let lesion_dir = out.join("lesions");
    create_dir(&lesion_dir)?;
    let mut manifest = Vec::with_capacity(cohort.n_subjects());
    for (s, id) in cohort.subject_ids().iter().enumerate() {
        let rel = PathBuf::from("lesions").join(format!("{id}.nii.gz"));
        write_nifti(&cohort.lesion_volume(s), out.join(&rel), DataType::UInt8)?;
        manifest.push(ManifestEntry {
            subject_id: id.clone(),
            lesion_path: rel,
        });
    }
    write_json(out.join("manifest.json"), &manifest)?;
    write_scores_csv(out.join("scores.csv"), cohort.subject_ids(), &scores)?;
    write_json(out.join("roi.json"), &roi)?;
    write_json(
        out.join("spec.json"),
        &serde_json::json!({ "provenance": provenance(config, workers), "spec": spec }),
    )?;
    Ok(())
}

/// What `run` produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub provenance: Provenance,
    pub n_subjects: usize,
    pub mask_len: usize,
    pub df: usize,
    pub null_cache: PathBuf,
    pub null_hash: String,
    pub null_from_cache: bool,
    pub corrections: Vec<CorrectionResult>,
    pub comparison: Vec<ComparisonRow>,
}

fn collect_config(config: &RunConfig, cohort: &CohortMatrix) -> CollectConfig {
    CollectConfig {
        k: config.v_list.iter().copied().max().unwrap_or(1).clamp(1, cohort.mask_len()),
        p_thresholds: config.p_threshold_list.clone(),
        tails: config.tails,
        connectivity: config.connectivity,
        zero_variance: ZeroVariance::Error,
    }
}

/// Loads the null from `path` when it exists and matches `expected_hash`,
/// otherwise computes and saves it.
fn null_for(
    path: &Path,
    expected_hash: &str,
    compute: impl FnOnce() -> Result<NullDistribution>,
) -> Result<(NullDistribution, bool)> {
    if path.exists() {
        let null = load_null_cache(path)?;
        if null.meta.content_hash != expected_hash {
            return Err(Error::Cache(format!(
                "{} holds a null for different inputs (hash {}, expected {expected_hash})",
                path.display(),
                null.meta.content_hash
            )));
        }
        return Ok((null, true));
    }
    let null = compute()?;
    save_null_cache(path, &null)?;
    Ok((null, false))
}

fn mask_volume(cohort: &CohortMatrix, positions: &[usize]) -> Volume3D {
    let grid = *cohort.grid();
    let index = cohort.mask_index();
    let mut values = vec![0.0; grid.n_voxels()];
    for &p in positions {
        values[index[p]] = 1.0;
    }
    Volume3D::new(grid, values, DataType::UInt8).expect("grid already validated")
}

fn result_tag(r: &CorrectionResult) -> String {
    let p = &r.params;
    match (p.p_threshold, p.v, p.q) {
        (Some(pt), _, _) => format!("{}_p{pt}", r.method.name()),
        (_, Some(v), _) => format!("{}_v{v}", r.method.name()),
        (_, _, Some(q)) => format!("{}_q{q}", r.method.name()),
        _ => r.method.name().to_string(),
    }
}

/// Full mapping pipeline on a manifest and scores file.
pub fn cmd_run(config: &RunConfig, workers: Option<usize>) -> Result<RunSummary> {
    let out = config.out_dir()?;
    let manifest = config.manifest.as_ref().ok_or_else(|| Error::invalid("run requires --manifest"))?;
    let scores_path = config.scores.as_ref().ok_or_else(|| Error::invalid("run requires --scores"))?;
    let cohort = load_manifest_cohort(manifest)?.with_mask(config.mask_cutoffs)?;
    let mut scores = read_scores_csv(scores_path, cohort.subject_ids())?;
    if config.invert_scores {
        scores = scores.inverted();
    }
    let collect = collect_config(config, &cohort);
    let observed = voxel_t_map(&cohort, &scores, &collect.t_options())?;
    let plan = PermutationPlan::generate(cohort.n_subjects(), config.n_perms, config.seed);
    let hash = content_hash(&cohort, &scores, &plan, &collect);
    create_dir(out)?;
    let cache_path = config
        .null_cache
        .clone()
        .unwrap_or_else(|| out.join(format!("null-{}.vlsmnull", &hash[..16])));
    let (null, from_cache) = null_for(&cache_path, &hash, || run_permutation_pass(&cohort, &scores, &plan, &collect))?;

    let mut prov = provenance(config, workers);
    prov.null_hash = Some(hash.clone());
    write_nifti(&observed.to_volume(&cohort), out.join(TMAP_FILE), DataType::Float32)?;
    let all: Vec<usize> = (0..cohort.mask_len()).collect();
    write_nifti(&mask_volume(&cohort, &all), out.join(ANALYSIS_MASK_FILE), DataType::UInt8)?;

    let corrections = run_corrections(config, &cohort, &observed, &null)?;
    let labeler = ClusterLabeler::new(*cohort.grid(), cohort.mask_index(), config.connectivity)?;
    let mut rows = Vec::new();
    for r in &corrections {
        let tag = result_tag(r);
        write_nifti(&mask_volume(&cohort, &r.supra), out.join(format!("{tag}_mask.nii.gz")), DataType::UInt8)?;
        let mut supra = vec![false; cohort.mask_len()];
        for &p in &r.supra {
            supra[p] = true;
        }
        let labeling = labeler.label(&supra, &mut LabelScratch::default());
        write_nifti(&labeler.to_volume(&labeling)?, out.join(format!("{tag}_labels.nii.gz")), DataType::Int16)?;
        rows.push(vec![
            r.method.name().to_string(),
            fmt_opt(r.params.p_threshold),
            fmt_opt(r.params.v),
            fmt_opt(r.params.q),
            r.critical_value.to_string(),
            r.n_supra.to_string(),
            fmt_opt(r.effective_q),
            labeling.n_clusters().to_string(),
            tag,
        ]);
    }
    write_csv(
        out.join(CORRECTIONS_CSV),
        &prov,
        &[
            "method",
            "p_threshold",
            "v",
            "q",
            "critical_value",
            "n_supra",
            "effective_q",
            "n_clusters",
            "tag",
        ],
        &rows,
    )?;
    let comparison = compare_cfwer_fdr(&observed, &null, &config.correction_config())?;
    let crow: Vec<Vec<String>> = comparison.iter().map(ComparisonRow::to_record).collect();
    write_csv(out.join(COMPARISON_CSV), &prov, &ComparisonRow::HEADER, &crow)?;
    render_comparison_plot(out)?;
    let summary = RunSummary {
        provenance: prov,
        n_subjects: cohort.n_subjects(),
        mask_len: cohort.mask_len(),
        df: observed.df,
        null_cache: cache_path,
        null_hash: hash,
        null_from_cache: from_cache,
        corrections,
        comparison,
    };
    write_json(out.join(RUN_JSON), &summary)?;
    Ok(summary)
}

/// The corrections selected by `config.correction`, in a fixed order:
/// cluster variants by p-threshold, CFWER by v, then FDR.
pub fn run_corrections(
    config: &RunConfig,
    cohort: &CohortMatrix,
    observed: &StatMap,
    null: &NullDistribution,
) -> Result<Vec<CorrectionResult>> {
    use CorrectionChoice as C;
    let want = |c: C| config.correction == c || config.correction == C::All;
    let labeler = ClusterLabeler::new(*cohort.grid(), cohort.mask_index(), config.connectivity)?;
    let mut out = Vec::new();
    for (choice, variant) in [(C::ClusterAll, ClusterVariant::All), (C::ClusterMax, ClusterVariant::Max)] {
        if !want(choice) {
            continue;
        }
        for &p in &config.p_threshold_list {
            let size = cluster_size_threshold(null, p, variant, config.alpha)?;
            let mut r = apply_cluster_correction(observed, &labeler, p, size, variant)?.with_null(null);
            r.params.alpha = Some(config.alpha);
            out.push(r);
        }
    }
    if want(C::Cfwer) {
        for &v in config.v_list.iter().filter(|&&v| v <= null.k()) {
            out.push(apply_cfwer(observed, null, v, config.alpha)?);
        }
    }
    if want(C::Fdr) {
        out.push(apply_fdr(observed, config.fdr_q, config.fdr_dependency)?);
    }
    Ok(out)
}

/// Runs the selected experiments and writes the report directory.
pub fn cmd_evaluate(config: &RunConfig, workers: Option<usize>) -> Result<EvalReport> {
    let out = config.out_dir()?;
    let (fpr_n, cmp_n) = match config.scale {
        Scale::Desk => (60, 120),
        Scale::Smoke => (12, 12),
    };
    let fpr_spec = config.synthetic_spec(fpr_n);
    let cmp_spec = config.synthetic_spec(cmp_n);
    let cluster_fpr = match config.experiment {
        Experiment::ClusterFpr | Experiment::All => {
            let mut spec = fpr_spec.clone();
            spec.noise = NoiseSpec::None;
            let c = ClusterFprConfig {
                n_perms: config.n_perms,
                n_holdout: config.n_perms,
                p_thresholds: config.p_threshold_list.clone(),
                alpha: config.alpha,
                tails: config.tails,
                connectivity: config.connectivity,
                cutoffs: config.mask_cutoffs,
                perm_seed: derive_seed(config.seed, 0xf0),
                spill_v_list: config.v_list.clone(),
            };
            Some(run_cluster_fpr_experiment(&spec, &c)?)
        }
        Experiment::MethodComparison => None,
    };
    let method_comparison = match config.experiment {
        Experiment::MethodComparison | Experiment::All => {
            let c = MethodComparisonConfig {
                fractions: config.fractions.clone(),
                n_repeats: config.n_repeats,
                v_list: config.v_list.clone(),
                alpha: config.alpha,
                n_perms: config.n_perms,
                tails: config.tails,
                connectivity: config.connectivity,
                cutoffs: config.mask_cutoffs,
                fdr_dependency: config.fdr_dependency,
                perm_seed: derive_seed(config.seed, 0xc0),
                keep_nulls: false,
            };
            Some(run_method_comparison(&cmp_spec, &c)?)
        }
        Experiment::ClusterFpr => None,
    };
    let report = EvalReport {
        spec: if method_comparison.is_some() { cmp_spec } else { fpr_spec },
        cluster_fpr,
        method_comparison,
    };
    write_eval_report(out, &report, &provenance(config, workers))?;
    Ok(report)
}

/// Re-renders every plot whose source table exists in `--out`.
pub fn cmd_report(config: &RunConfig) -> Result<Vec<String>> {
    let out = config.out_dir()?;
    if !out.is_dir() {
        return Err(Error::invalid(format!("{} is not a directory", out.display())));
    }
    let mut files = crate::simeval::render_plots(out)?;
    files.extend(render_comparison_plot(out)?);
    println!("{}", serde_json::to_string(&files).expect("file list serialises"));
    Ok(files)
}

/// Critical t against v for CFWER and FDR, from `comparison.csv`.
fn render_comparison_plot(dir: &Path) -> Result<Option<String>> {
    let path = dir.join(COMPARISON_CSV);
    if !path.exists() {
        return Ok(None);
    }
    let (_, rows) = read_csv(&path)?;
    let series = |col: usize| -> Vec<(f64, f64)> {
        rows.iter()
            .filter_map(|r| Some((r[0].parse().ok()?, r[col].parse().ok()?)))
            .collect()
    };
    Plot {
        title: "Critical t by rank v".into(),
        x_label: "v".into(),
        y_label: "critical t".into(),
        log_x: true,
        log_y: false,
        identity_line: false,
        series: vec![
            Series {
                name: "CFWER".into(),
                points: series(1),
                line: true,
            },
            Series {
                name: "FDR at effective q".into(),
                points: series(4),
                line: true,
            },
        ],
    }
    .write(dir.join(COMPARISON_SVG))?;
    Ok(Some(COMPARISON_SVG.to_string()))
}
