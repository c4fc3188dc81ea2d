//! Cohort assembly: the subject-by-voxel lesion matrix, analysis masks,
//! percent-damage deficit scores, additive noise and random sub-samples.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::rng::stream_rng;
use crate::volume::{read_nifti, DataType, Grid, Volume3D};
use crate::{Error, Result};

/// Voxel inclusion rule for the analysis mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MaskCutoffs {
    /// `max(2, ceil(0.05 * N))` for both groups, re-evaluated for every
    /// sub-sample size.
    Default,
    Fixed { min_lesioned: usize, min_intact: usize },
}

impl MaskCutoffs {
    pub fn resolve(self, n_subjects: usize) -> (usize, usize) {
        match self {
            MaskCutoffs::Default => {
                let c = ((0.05 * n_subjects as f64).ceil() as usize).max(2);
                (c, c)
            }
            MaskCutoffs::Fixed {
                min_lesioned,
                min_intact,
            } => (min_lesioned, min_intact),
        }
    }
}

/// Binary lesion status of every subject at every voxel lesioned in at
/// least one subject, plus the analysis mask over those voxels.
///
/// Columns are stored voxel-major so the per-voxel statistics loop reads
/// one contiguous run of subject bits.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortMatrix {
    subject_ids: Vec<String>,
    grid: Grid,
    /// Grid indices of stored columns, ascending.
    voxels: Vec<usize>,
    /// `voxels.len() * n_subjects` entries in {0, 1}.
    bits: Vec<u8>,
    counts: Vec<u32>,
    /// Positions into `voxels`, ascending.
    mask: Vec<u32>,
    cutoffs: Option<MaskCutoffs>,
}

impl CohortMatrix {
    /// Builds a pre-mask cohort from per-subject lists of lesioned grid
    /// indices.
    pub fn from_lesion_lists(grid: Grid, subject_ids: Vec<String>, lesions: &[Vec<usize>]) -> Result<Self> {
        grid.validate()?;
        if subject_ids.len() != lesions.len() {
            return Err(Error::invalid(format!(
                "{} subject ids for {} lesion maps",
                subject_ids.len(),
                lesions.len()
            )));
        }
        if subject_ids.is_empty() {
            return Err(Error::invalid("cohort has no subjects"));
        }
        let mut seen = HashSet::new();
        for id in &subject_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateSubject(id.clone()));
            }
        }
        let n_vox = grid.n_voxels();
        let mut grid_counts = vec![0u32; n_vox];
        for lesion in lesions {
            for &v in lesion {
                if v >= n_vox {
                    return Err(Error::invalid(format!("lesion voxel {v} outside grid of {n_vox}")));
                }
                grid_counts[v] += 1;
            }
        }
        let voxels: Vec<usize> = (0..n_vox).filter(|&v| grid_counts[v] > 0).collect();
        let mut pos = vec![u32::MAX; n_vox];
        for (p, &v) in voxels.iter().enumerate() {
            pos[v] = p as u32;
        }
        let n = subject_ids.len();
        let mut bits = vec![0u8; voxels.len() * n];
        for (s, lesion) in lesions.iter().enumerate() {
            for &v in lesion {
                bits[pos[v] as usize * n + s] = 1;
            }
        }
        // Recount so duplicate entries in a lesion list do not inflate counts.
        let counts = bits.chunks_exact(n).map(|c| c.iter().map(|&b| b as u32).sum()).collect();
        let mask = (0..voxels.len() as u32).collect();
        Ok(CohortMatrix {
            subject_ids,
            grid,
            voxels,
            bits,
            counts,
            mask,
            cutoffs: None,
        })
    }

    pub fn n_subjects(&self) -> usize {
        self.subject_ids.len()
    }

    pub fn subject_ids(&self) -> &[String] {
        &self.subject_ids
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn cutoffs(&self) -> Option<MaskCutoffs> {
        self.cutoffs
    }

    /// Number of voxels in the analysis mask.
    pub fn mask_len(&self) -> usize {
        self.mask.len()
    }

    /// Grid linear indices of the analysis mask, ascending.
    pub fn mask_index(&self) -> Vec<usize> {
        self.mask.iter().map(|&p| self.voxels[p as usize]).collect()
    }

    /// Subject lesion bits for mask voxel `j`.
    #[inline]
    pub fn column(&self, j: usize) -> &[u8] {
        let n = self.n_subjects();
        let p = self.mask[j] as usize;
        &self.bits[p * n..(p + 1) * n]
    }

    /// Number of lesioned subjects at mask voxel `j`.
    #[inline]
    pub fn lesion_count(&self, j: usize) -> usize {
        self.counts[self.mask[j] as usize] as usize
    }

    pub fn is_lesioned(&self, subject: usize, j: usize) -> bool {
        self.column(j)[subject] == 1
    }

    /// Grid indices lesioned in `subject` (over all stored voxels, not only
    /// the mask).
    pub fn lesion_of(&self, subject: usize) -> Vec<usize> {
        let n = self.n_subjects();
        self.voxels
            .iter()
            .enumerate()
            .filter(|(p, _)| self.bits[p * n + subject] == 1)
            .map(|(_, &v)| v)
            .collect()
    }

    /// Binary lesion volume of one subject.
    pub fn lesion_volume(&self, subject: usize) -> Volume3D {
        let mut values = vec![0.0; self.grid.n_voxels()];
        for v in self.lesion_of(subject) {
            values[v] = 1.0;
        }
        Volume3D::new(self.grid, values, DataType::UInt8).expect("grid already validated")
    }

    /// Voxel-wise lesion overlap counts across all subjects.
    pub fn overlap_volume(&self) -> Volume3D {
        let mut values = vec![0.0; self.grid.n_voxels()];
        for (&v, &c) in self.voxels.iter().zip(&self.counts) {
            values[v] = c as f64;
        }
        Volume3D::new(self.grid, values, DataType::Int16).expect("grid already validated")
    }

    /// Mask voxels: lesioned in at least `min_lesioned` subjects and intact
    /// in at least `min_intact`.
    pub fn compute_analysis_mask(&self, min_lesioned: usize, min_intact: usize) -> Result<Vec<usize>> {
        Ok(self
            .mask_positions(min_lesioned, min_intact)?
            .into_iter()
            .map(|p| self.voxels[p as usize])
            .collect())
    }

    fn mask_positions(&self, min_lesioned: usize, min_intact: usize) -> Result<Vec<u32>> {
        if min_lesioned < 1 {
            return Err(Error::invalid("min_lesioned must be at least 1"));
        }
        let n = self.n_subjects();
        let mask: Vec<u32> = self
            .counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c as usize >= min_lesioned && n - c as usize >= min_intact)
            .map(|(p, _)| p as u32)
            .collect();
        if mask.is_empty() {
            return Err(Error::EmptyMask);
        }
        Ok(mask)
    }

    /// Copy of the cohort restricted to the analysis mask under `cutoffs`.
    pub fn with_mask(&self, cutoffs: MaskCutoffs) -> Result<Self> {
        let (min_lesioned, min_intact) = cutoffs.resolve(self.n_subjects());
        let mask = self.mask_positions(min_lesioned, min_intact)?;
        Ok(CohortMatrix {
            mask,
            cutoffs: Some(cutoffs),
            ..self.clone()
        })
    }

    /// New cohort made of the given subjects (in the given order). The mask
    /// is recomputed with this cohort's cutoff policy, or left pre-mask if
    /// none was applied.
    pub fn select_subjects(&self, rows: &[usize]) -> Result<Self> {
        let n = self.n_subjects();
        let ids = rows
            .iter()
            .map(|&r| {
                self.subject_ids
                    .get(r)
                    .cloned()
                    .ok_or_else(|| Error::invalid(format!("subject row {r} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        let m = rows.len();
        let mut voxels = Vec::new();
        let mut bits = Vec::new();
        let mut counts = Vec::new();
        for (p, &v) in self.voxels.iter().enumerate() {
            let col = &self.bits[p * n..(p + 1) * n];
            let c: u32 = rows.iter().map(|&r| col[r] as u32).sum();
            if c > 0 {
                voxels.push(v);
                bits.extend(rows.iter().map(|&r| col[r]));
                counts.push(c);
            }
        }
        let mut seen = HashSet::new();
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateSubject(id.clone()));
            }
        }
        debug_assert_eq!(bits.len(), voxels.len() * m);
        let pre = CohortMatrix {
            subject_ids: ids,
            grid: self.grid,
            mask: (0..voxels.len() as u32).collect(),
            voxels,
            bits,
            counts,
            cutoffs: None,
        };
        match self.cutoffs {
            Some(c) => pre.with_mask(c),
            None => Ok(pre),
        }
    }
}

/// Assembles binary lesion volumes into a pre-mask cohort. All volumes must
/// share dims and voxel sizes.
pub fn build_cohort(volumes: &[Volume3D], subject_ids: Vec<String>) -> Result<CohortMatrix> {
    let first = volumes.first().ok_or_else(|| Error::invalid("no lesion volumes"))?;
    let grid = first.grid;
    let mut lesions = Vec::with_capacity(volumes.len());
    for (s, v) in volumes.iter().enumerate() {
        v.validate()?;
        if !v.grid.same_as(&grid) {
            return Err(Error::GridMismatch(format!(
                "subject {s}: dims {:?} / voxel size {:?} differ from {:?} / {:?}",
                v.grid.dims, v.grid.voxel_size, grid.dims, grid.voxel_size
            )));
        }
        if !v.is_binary() {
            return Err(Error::InvalidVolume(format!("lesion volume {s} is not binary")));
        }
        lesions.push(
            v.values
                .iter()
                .enumerate()
                .filter(|(_, &x)| x == 1.0)
                .map(|(i, _)| i)
                .collect(),
        );
    }
    CohortMatrix::from_lesion_lists(grid, subject_ids, &lesions)
}

/// Deficit scores, one per subject. Higher means a worse deficit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    values: Vec<f64>,
}

impl ScoreVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidScores(format!("need at least 2 scores, got {}", values.len())));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidScores(format!("score {i} is not finite")));
        }
        if values.iter().all(|&v| v == values[0]) {
            return Err(Error::InvalidScores("all scores are identical".into()));
        }
        Ok(ScoreVector { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Negated scores, for inputs where higher means better performance.
    pub fn inverted(&self) -> Self {
        ScoreVector {
            values: self.values.iter().map(|v| -v).collect(),
        }
    }

    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        ScoreVector::new(rows.iter().map(|&r| self.values[r]).collect())
    }

    pub(crate) fn check_len(&self, n: usize) -> Result<()> {
        if self.values.len() != n {
            return Err(Error::InvalidScores(format!(
                "{} scores for {n} subjects",
                self.values.len()
            )));
        }
        Ok(())
    }
}

/// Ground-truth region: a set of grid voxels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RoiMask {
    indices: Vec<usize>,
}

impl RoiMask {
    pub fn new(grid: &Grid, mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if indices.is_empty() {
            return Err(Error::InvalidRoi("ROI is empty".into()));
        }
        if let Some(&last) = indices.last() {
            if last >= grid.n_voxels() {
                return Err(Error::InvalidRoi(format!("voxel {last} outside grid")));
            }
        }
        Ok(RoiMask { indices })
    }

    pub fn from_volume(volume: &Volume3D) -> Result<Self> {
        let idx = volume
            .values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.0)
            .map(|(i, _)| i)
            .collect();
        RoiMask::new(&volume.grid, idx)
    }

    /// Voxels within `radius` (in voxels) of `center`.
    pub fn sphere(grid: &Grid, center: [f64; 3], radius: f64) -> Result<Self> {
        let idx = (0..grid.n_voxels())
            .filter(|&v| {
                let c = grid.coord(v);
                let d2 = (c.i as f64 - center[0]).powi(2)
                    + (c.j as f64 - center[1]).powi(2)
                    + (c.k as f64 - center[2]).powi(2);
                d2 <= radius * radius
            })
            .collect();
        RoiMask::new(grid, idx)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, v: usize) -> bool {
        self.indices.binary_search(&v).is_ok()
    }

    pub fn to_volume(&self, grid: &Grid) -> Volume3D {
        let mut values = vec![0.0; grid.n_voxels()];
        for &v in &self.indices {
            values[v] = 1.0;
        }
        Volume3D::new(*grid, values, DataType::UInt8).expect("grid already validated")
    }
}

/// Loads an ROI from a binary NIfTI volume or a JSON list of grid indices.
pub fn read_roi(path: impl AsRef<Path>, grid: &Grid) -> Result<RoiMask> {
    let path = path.as_ref();
    let name = path.to_string_lossy();
    if name.ends_with(".json") {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let idx: Vec<usize> = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.into(),
            message: e.to_string(),
        })?;
        RoiMask::new(grid, idx)
    } else {
        let v = read_nifti(path)?;
        if !v.grid.same_as(grid) {
            return Err(Error::GridMismatch(format!("ROI {name} is not on the cohort grid")));
        }
        RoiMask::from_volume(&v)
    }
}

/// Fraction of the ROI lesioned in each subject.
pub fn percent_damage_score(cohort: &CohortMatrix, roi: &RoiMask) -> Result<ScoreVector> {
    if roi.is_empty() {
        return Err(Error::InvalidRoi("ROI is empty".into()));
    }
    let n = cohort.n_subjects();
    let mut hits = vec![0usize; n];
    for &v in roi.indices() {
        if let Ok(p) = cohort.voxels.binary_search(&v) {
            let col = &cohort.bits[p * n..(p + 1) * n];
            for (h, &b) in hits.iter_mut().zip(col) {
                *h += b as usize;
            }
        }
    }
    let size = roi.len() as f64;
    ScoreVector::new(hits.into_iter().map(|h| h as f64 / size).collect())
}

/// Adds i.i.d. Gaussian noise with standard deviation `sd`.
pub fn add_noise(scores: &ScoreVector, sd: f64, seed: u64) -> Result<ScoreVector> {
    if !(sd >= 0.0) || !sd.is_finite() {
        return Err(Error::invalid(format!("noise sd must be >= 0, got {sd}")));
    }
    if sd == 0.0 {
        return Ok(scores.clone());
    }
    let normal = Normal::new(0.0, sd).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = stream_rng(seed, 0);
    ScoreVector::new(scores.values.iter().map(|&v| v + normal.sample(&mut rng)).collect())
}

/// Uniform random subset of `round(fraction * N)` subjects without
/// replacement, kept in original order. The mask is recomputed on the subset.
pub fn subsample(
    cohort: &CohortMatrix,
    scores: &ScoreVector,
    fraction: f64,
    seed: u64,
) -> Result<(CohortMatrix, ScoreVector)> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!("fraction must be in (0, 1], got {fraction}")));
    }
    let n = cohort.n_subjects();
    scores.check_len(n)?;
    let m = (fraction * n as f64).round() as usize;
    if m < 2 {
        return Err(Error::invalid(format!("sub-sample of {m} subjects is too small")));
    }
    let mut rows: Vec<usize> = if m == n {
        (0..n).collect()
    } else {
        index::sample(&mut stream_rng(seed, 0), n, m).into_vec()
    };
    rows.sort_unstable();
    let sub = cohort.select_subjects(&rows)?;
    let sub_scores = scores.select(&rows)?;
    Ok((sub, sub_scores))
}

/// One entry of a cohort manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub subject_id: String,
    pub lesion_path: PathBuf,
}

/// Reads a manifest JSON and the lesion volumes it lists. Relative lesion
/// paths resolve against the manifest's directory.
pub fn load_manifest_cohort(manifest: impl AsRef<Path>) -> Result<CohortMatrix> {
    let manifest = manifest.as_ref();
    let text = fs::read_to_string(manifest).map_err(|e| Error::io(manifest, e))?;
    let entries: Vec<ManifestEntry> = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: manifest.into(),
        message: e.to_string(),
    })?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mut volumes = Vec::with_capacity(entries.len());
    let mut ids = Vec::with_capacity(entries.len());
    for e in entries {
        let p = if e.lesion_path.is_absolute() {
            e.lesion_path.clone()
        } else {
            base.join(&e.lesion_path)
        };
        volumes.push(read_nifti(&p)?);
        ids.push(e.subject_id);
    }
    build_cohort(&volumes, ids)
}

#[derive(Debug, Deserialize, Serialize)]
struct ScoreRow {
    subject_id: String,
    score: f64,
}

/// Reads a `subject_id,score` CSV and aligns it to `subject_ids`. Lines
/// starting with `#` are ignored.
pub fn read_scores_csv(path: impl AsRef<Path>, subject_ids: &[String]) -> Result<ScoreVector> {
    let path = path.as_ref();
    let parse_err = |message: String| Error::Parse {
        path: path.into(),
        message,
    };
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => parse_err(format!("{other:?}")),
    })?;
    let headers = rdr.headers().map_err(|e| parse_err(e.to_string()))?.clone();
    if headers.len() != 2 || &headers[0] != "subject_id" || &headers[1] != "score" {
        return Err(parse_err(format!(
            "expected header `subject_id,score`, found `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut by_id = std::collections::HashMap::new();
    for row in rdr.deserialize::<ScoreRow>() {
        let row = row.map_err(|e| parse_err(e.to_string()))?;
        if by_id.insert(row.subject_id.clone(), row.score).is_some() {
            return Err(parse_err(format!("duplicate subject {}", row.subject_id)));
        }
    }
    let values = subject_ids
        .iter()
        .map(|id| {
            by_id
                .get(id)
                .copied()
                .ok_or_else(|| parse_err(format!("no score for subject {id}")))
        })
        .collect::<Result<Vec<_>>>()?;
    ScoreVector::new(values)
}

pub fn write_scores_csv(path: impl AsRef<Path>, subject_ids: &[String], scores: &ScoreVector) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Parse {
        path: path.into(),
        message: e.to_string(),
    })?;
    for (id, &score) in subject_ids.iter().zip(scores.values()) {
        w.serialize(ScoreRow {
            subject_id: id.clone(),
            score,
        })
        .map_err(|e| Error::Parse {
            path: path.into(),
            message: e.to_string(),
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("s{i:03}")).collect()
    }

    fn line_grid(n: usize) -> Grid {
        Grid::cubic(n, 1, 1).unwrap()
    }

    #[test]
    fn single_subject_single_voxel() {
        let g = line_grid(4);
        let mut v = Volume3D::zeros(g, DataType::UInt8).unwrap();
        v.values[2] = 1.0;
        let c = build_cohort(&[v], ids(1)).unwrap();
        let c = c
            .with_mask(MaskCutoffs::Fixed {
                min_lesioned: 1,
                min_intact: 0,
            })
            .unwrap();
        assert_eq!(c.mask_index(), vec![2]);
        assert_eq!(c.column(0), &[1]);
    }

    #[test]
    fn identical_volumes_give_identical_rows() {
        let g = Grid::cubic(3, 3, 3).unwrap();
        let mut v = Volume3D::zeros(g, DataType::UInt8).unwrap();
        for i in [0, 5, 13, 26] {
            v.values[i] = 1.0;
        }
        let c = build_cohort(&[v.clone(), v], ids(2)).unwrap();
        assert_eq!(c.lesion_of(0), c.lesion_of(1));
    }

    #[test]
    fn column_sums_match_direct_overlap_count() {
        let g = Grid::cubic(6, 5, 4).unwrap();
        let mut rng = stream_rng(3, 0);
        let vols: Vec<Volume3D> = (0..20)
            .map(|_| {
                let vals = (0..g.n_voxels())
                    .map(|_| if rng.random::<f64>() < 0.3 { 1.0 } else { 0.0 })
                    .collect();
                Volume3D::new(g, vals, DataType::UInt8).unwrap()
            })
            .collect();
        let c = build_cohort(&vols, ids(20)).unwrap();
        let overlap = c.overlap_volume();
        for v in 0..g.n_voxels() {
            let direct: f64 = vols.iter().map(|vol| vol.values[v]).sum();
            assert_eq!(overlap.values[v], direct);
        }
        for (j, &v) in c.mask_index().iter().enumerate() {
            let col_sum: usize = c.column(j).iter().map(|&b| b as usize).sum();
            assert_eq!(col_sum as f64, overlap.values[v]);
            assert_eq!(c.lesion_count(j), col_sum);
        }
    }

    #[test]
    fn mismatched_grids_and_duplicate_ids_fail() {
        let a = Volume3D::zeros(line_grid(4), DataType::UInt8).unwrap();
        let b = Volume3D::zeros(line_grid(5), DataType::UInt8).unwrap();
        assert!(matches!(
            build_cohort(&[a.clone(), b], ids(2)),
            Err(Error::GridMismatch(_))
        ));
        assert!(matches!(
            build_cohort(&[a.clone(), a], vec!["x".into(), "x".into()]),
            Err(Error::DuplicateSubject(_))
        ));
    }

    fn cohort_with_counts(n: usize, counts: &[usize]) -> CohortMatrix {
        let g = line_grid(counts.len());
        let lesions: Vec<Vec<usize>> = (0..n)
            .map(|s| (0..counts.len()).filter(|&v| s < counts[v]).collect())
            .collect();
        CohortMatrix::from_lesion_lists(g, ids(n), &lesions).unwrap()
    }

    #[test]
    fn mask_excludes_all_or_none_lesioned() {
        let c = cohort_with_counts(5, &[5, 0, 2]);
        assert_eq!(c.compute_analysis_mask(1, 1).unwrap(), vec![2]);
    }

    #[test]
    fn mask_boundary_counts() {
        let c = cohort_with_counts(100, &[10, 9, 90, 91]);
        assert_eq!(c.compute_analysis_mask(10, 10).unwrap(), vec![0, 2]);
    }

    #[test]
    fn empty_mask_is_an_error() {
        let c = cohort_with_counts(5, &[5, 5]);
        assert!(matches!(c.compute_analysis_mask(1, 1), Err(Error::EmptyMask)));
    }

    #[test]
    fn default_cutoffs() {
        assert_eq!(MaskCutoffs::Default.resolve(124), (7, 7));
        assert_eq!(MaskCutoffs::Default.resolve(30), (2, 2));
        assert_eq!(MaskCutoffs::Default.resolve(60), (3, 3));
    }

    #[test]
    fn percent_damage_cases() {
        let g = line_grid(20);
        let roi = RoiMask::new(&g, (0..10).collect()).unwrap();
        let lesions = vec![(0..10).collect(), (10..20).collect(), (5..15).collect()];
        let c = CohortMatrix::from_lesion_lists(g, ids(3), &lesions).unwrap();
        let s = percent_damage_score(&c, &roi).unwrap();
        assert_eq!(s.values(), &[1.0, 0.0, 0.5]);
    }

    #[test]
    fn noise_identity_and_determinism() {
        let s = ScoreVector::new(vec![0.1, 0.5, 0.9]).unwrap();
        assert_eq!(add_noise(&s, 0.0, 1).unwrap(), s);
        assert_eq!(add_noise(&s, 0.3, 9).unwrap(), add_noise(&s, 0.3, 9).unwrap());
        assert_ne!(add_noise(&s, 0.3, 9).unwrap(), add_noise(&s, 0.3, 10).unwrap());
    }

    #[test]
    fn noise_has_requested_sd() {
        let s = ScoreVector::new((0..10_000).map(|i| (i % 7) as f64).collect()).unwrap();
        let out = add_noise(&s, 1.0, 42).unwrap();
        let d: Vec<f64> = out.values().iter().zip(s.values()).map(|(a, b)| a - b).collect();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (d.len() - 1) as f64;
        assert!((var.sqrt() - 1.0).abs() < 0.05);
    }

    fn random_cohort(n: usize, seed: u64) -> (CohortMatrix, ScoreVector) {
        let g = Grid::cubic(5, 5, 2).unwrap();
        let mut rng = stream_rng(seed, 0);
        let lesions: Vec<Vec<usize>> = (0..n)
            .map(|_| (0..g.n_voxels()).filter(|_| rng.random::<f64>() < 0.4).collect())
            .collect();
        let c = CohortMatrix::from_lesion_lists(g, ids(n), &lesions).unwrap();
        let s = ScoreVector::new((0..n).map(|_| rng.random()).collect()).unwrap();
        (c.with_mask(MaskCutoffs::Default).unwrap(), s)
    }

    #[test]
    fn subsample_sizes() {
        let (c, s) = random_cohort(124, 1);
        let (h, hs) = subsample(&c, &s, 0.5, 7).unwrap();
        assert_eq!(h.n_subjects(), 62);
        assert_eq!(hs.len(), 62);
        let (q, _) = subsample(&c, &s, 0.25, 7).unwrap();
        assert_eq!(q.n_subjects(), 31);
        let (f, fs) = subsample(&c, &s, 1.0, 7).unwrap();
        assert_eq!(f.subject_ids(), c.subject_ids());
        assert_eq!(fs, s);
        assert_eq!(f.mask_index(), c.mask_index());
    }

    #[test]
    fn subsample_is_deterministic_and_rows_consistent() {
        let (c, s) = random_cohort(40, 2);
        let a = subsample(&c, &s, 0.5, 99).unwrap();
        let b = subsample(&c, &s, 0.5, 99).unwrap();
        assert_eq!(a, b);
        let (sub, sub_scores) = a;
        for (r, id) in sub.subject_ids().iter().enumerate() {
            let orig = c.subject_ids().iter().position(|x| x == id).unwrap();
            assert_eq!(sub_scores.values()[r], s.values()[orig]);
            let mut l1 = sub.lesion_of(r);
            let mut l2 = c.lesion_of(orig);
            l1.sort();
            l2.sort();
            assert_eq!(l1, l2);
        }
        assert!(subsample(&c, &s, 0.01, 1).is_err());
    }

    #[test]
    fn scores_csv_roundtrip_and_missing_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("scores.csv");
        let id = ids(3);
        let s = ScoreVector::new(vec![0.25, -1.5, 3.0]).unwrap();
        write_scores_csv(&p, &id, &s).unwrap();
        let rev: Vec<String> = id.iter().rev().cloned().collect();
        let r = read_scores_csv(&p, &rev).unwrap();
        assert_eq!(r.values(), &[3.0, -1.5, 0.25]);

        fs::write(&p, "s000,1\ns001,2\n").unwrap();
        assert!(matches!(read_scores_csv(&p, &id), Err(Error::Parse { .. })));
    }

    #[test]
    fn roi_json_and_nifti() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::cubic(4, 4, 4).unwrap();
        let roi = RoiMask::sphere(&g, [1.5, 1.5, 1.5], 1.0).unwrap();
        let jp = dir.path().join("roi.json");
        fs::write(&jp, serde_json::to_string(&roi).unwrap()).unwrap();
        assert_eq!(read_roi(&jp, &g).unwrap(), roi);
        let np = dir.path().join("roi.nii");
        crate::volume::write_nifti(&roi.to_volume(&g), &np, DataType::UInt8).unwrap();
        assert_eq!(read_roi(&np, &g).unwrap(), roi);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn damage_in_unit_interval(seed in 0u64..1000) {
                let (c, _) = random_cohort(12, seed);
                let g = *c.grid();
                let roi = RoiMask::new(&g, vec![0, 3, 7, 20, 33]).unwrap();
                if let Ok(s) = percent_damage_score(&c, &roi) {
                    for (subj, &v) in s.values().iter().enumerate() {
                        prop_assert!((0.0..=1.0).contains(&v));
                        let lesion: HashSet<usize> = c.lesion_of(subj).into_iter().collect();
                        let covered = roi.indices().iter().all(|i| lesion.contains(i));
                        prop_assert_eq!(v == 1.0, covered);
                    }
                }
            }

            #[test]
            fn raising_cutoffs_never_adds_voxels(seed in 0u64..1000, a in 1usize..6, b in 1usize..6) {
                let (c, _) = random_cohort(20, seed);
                let base: HashSet<usize> = c.compute_analysis_mask(a, b).unwrap_or_default().into_iter().collect();
                let up1 = c.compute_analysis_mask(a + 1, b).unwrap_or_default();
                let up2 = c.compute_analysis_mask(a, b + 1).unwrap_or_default();
                prop_assert!(up1.iter().all(|v| base.contains(v)));
                prop_assert!(up2.iter().all(|v| base.contains(v)));
            }
        }
    }
}
