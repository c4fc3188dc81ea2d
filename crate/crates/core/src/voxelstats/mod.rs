//! Mass-univariate voxel statistics: a pooled-variance two-sample t at every
//! mask voxel, and conversions between t and p.

pub mod tdist;

use serde::{Deserialize, Serialize};

use crate::cohort::{CohortMatrix, ScoreVector};
use crate::volume::{DataType, Volume3D};
use crate::{Error, Result};

/// Direction of the test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tails {
    /// Lesioned subjects have higher (worse) scores; statistic is t.
    OneTailedPositive,
    /// Either direction; statistic is |t|.
    TwoTailed,
}

impl Tails {
    /// The statistic that thresholds and order statistics act on.
    #[inline]
    pub fn statistic(self, t: f64) -> f64 {
        match self {
            Tails::OneTailedPositive => t,
            Tails::TwoTailed => t.abs(),
        }
    }
}

/// Handling of voxels whose pooled variance is zero while the group means differ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy", content = "t_max")]
pub enum ZeroVariance {
    Error,
    /// Report ±t_max.
    Clamp(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestOptions {
    pub tails: Tails,
    pub zero_variance: ZeroVariance,
}

impl Default for TTestOptions {
    fn default() -> Self {
        TTestOptions {
            tails: Tails::OneTailedPositive,
            zero_variance: ZeroVariance::Error,
        }
    }
}

/// t value per mask voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct StatMap {
    pub t_values: Vec<f64>,
    pub df: usize,
    pub tails: Tails,
}

/// p value per mask voxel, with the test settings that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct PValueMap {
    pub p_values: Vec<f64>,
    pub df: usize,
    pub tails: Tails,
}

impl StatMap {
    pub fn len(&self) -> usize {
        self.t_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_values.is_empty()
    }

    /// Thresholding statistic per voxel (t, or |t| when two-tailed).
    pub fn statistic(&self, j: usize) -> f64 {
        self.tails.statistic(self.t_values[j])
    }

    pub fn statistics(&self) -> Vec<f64> {
        self.t_values.iter().map(|&t| self.tails.statistic(t)).collect()
    }

    pub fn p_values(&self) -> PValueMap {
        PValueMap {
            p_values: self.t_values.iter().map(|&t| t_to_p(t, self.df, self.tails)).collect(),
            df: self.df,
            tails: self.tails,
        }
    }

    /// Full-grid float32 volume; out-of-mask voxels are 0.
    pub fn to_volume(&self, cohort: &CohortMatrix) -> Volume3D {
        let grid = *cohort.grid();
        let mut values = vec![0.0; grid.n_voxels()];
        for (&v, &t) in cohort.mask_index().iter().zip(&self.t_values) {
            values[v] = t as f32 as f64;
        }
        Volume3D::new(grid, values, DataType::Float32).expect("grid already validated")
    }
}

/// Computes t for every mask voxel from scores already arranged in subject
/// row order. Each voxel is evaluated independently, so the result does not
/// depend on evaluation order.
pub(crate) struct TMapKernel<'a> {
    cohort: &'a CohortMatrix,
    options: TTestOptions,
}

impl<'a> TMapKernel<'a> {
    pub(crate) fn new(cohort: &'a CohortMatrix, options: TTestOptions) -> Result<Self> {
        let n = cohort.n_subjects();
        if n < 3 {
            return Err(Error::invalid(format!("need at least 3 subjects for a t test, got {n}")));
        }
        for j in 0..cohort.mask_len() {
            let c = cohort.lesion_count(j);
            if c == 0 || c == n {
                return Err(Error::invalid(format!(
                    "mask voxel {} has an empty group; apply an analysis mask first",
                    cohort.mask_index()[j]
                )));
            }
        }
        Ok(TMapKernel { cohort, options })
    }

    pub(crate) fn df(&self) -> usize {
        self.cohort.n_subjects() - 2
    }

    pub(crate) fn compute_into(&self, scores: &[f64], out: &mut Vec<f64>) -> Result<()> {
        out.clear();
        out.reserve(self.cohort.mask_len());
        let n = self.cohort.n_subjects();
        let df = (n - 2) as f64;
        for j in 0..self.cohort.mask_len() {
            let bits = self.cohort.column(j);
            let n1 = self.cohort.lesion_count(j) as f64;
            let n0 = n as f64 - n1;
            let mut s1 = 0.0;
            let mut s0 = 0.0;
            for (&b, &x) in bits.iter().zip(scores) {
                if b != 0 {
                    s1 += x;
                } else {
                    s0 += x;
                }
            }
            let m1 = s1 / n1;
            let m0 = s0 / n0;
            let mut ss = 0.0;
            for (&b, &x) in bits.iter().zip(scores) {
                let d = if b != 0 { x - m1 } else { x - m0 };
                ss += d * d;
            }
            let diff = m1 - m0;
            let t = if ss == 0.0 {
                if diff == 0.0 {
                    0.0
                } else {
                    match self.options.zero_variance {
                        ZeroVariance::Error => {
                            return Err(Error::ZeroVariance {
                                voxel: self.cohort.mask_index()[j],
                            })
                        }
                        ZeroVariance::Clamp(t_max) => t_max.copysign(diff),
                    }
                }
            } else {
                diff / (ss / df * (1.0 / n1 + 1.0 / n0)).sqrt()
            };
            out.push(t);
        }
        Ok(())
    }
}

/// Pooled-variance two-sample t at every mask voxel, lesioned minus intact,
/// with `df = N - 2`.
pub fn voxel_t_map(cohort: &CohortMatrix, scores: &ScoreVector, options: &TTestOptions) -> Result<StatMap> {
    scores.check_len(cohort.n_subjects())?;
    let kernel = TMapKernel::new(cohort, *options)?;
    let mut t_values = Vec::new();
    kernel.compute_into(scores.values(), &mut t_values)?;
    Ok(StatMap {
        t_values,
        df: kernel.df(),
        tails: options.tails,
    })
}

/// Upper-tail p for one-tailed tests, `2 P(T > |t|)` for two-tailed.
pub fn t_to_p(t: f64, df: usize, tails: Tails) -> f64 {
    let df = df as f64;
    match tails {
        Tails::OneTailedPositive => tdist::t_sf(t, df),
        Tails::TwoTailed => (2.0 * tdist::t_sf(t.abs(), df)).min(1.0),
    }
}

/// Critical t for voxel-wise level `p`; inverse of [`t_to_p`].
pub fn p_threshold_to_t(p: f64, df: usize, tails: Tails) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("p threshold must be in (0, 1), got {p}")));
    }
    if df < 1 {
        return Err(Error::invalid("df must be at least 1"));
    }
    let df = df as f64;
    Ok(match tails {
        Tails::OneTailedPositive => tdist::t_isf(p, df),
        Tails::TwoTailed => tdist::t_isf(p / 2.0, df),
    })
}
