//! 3D connected-component labeling of supra-threshold voxel sets.
//!
//! Labeling runs union-find over a fixed voxel index (usually the analysis
//! mask) with neighbour offsets precomputed once per grid, so the same
//! [`ClusterLabeler`] can be reused for every permutation and threshold.

use serde::{Deserialize, Serialize};

use crate::volume::{DataType, Grid, Volume3D};
use crate::{Error, Result};

/// Voxel adjacency: faces (6), faces+edges (18), faces+edges+corners (26).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Connectivity {
    Six,
    Eighteen,
    TwentySix,
}

impl Connectivity {
    pub fn from_neighbours(n: u8) -> Result<Self> {
        match n {
            6 => Ok(Connectivity::Six),
            18 => Ok(Connectivity::Eighteen),
            26 => Ok(Connectivity::TwentySix),
            other => Err(Error::invalid(format!("connectivity must be 6, 18 or 26, got {other}"))),
        }
    }

    pub fn neighbours(self) -> u8 {
        match self {
            Connectivity::Six => 6,
            Connectivity::Eighteen => 18,
            Connectivity::TwentySix => 26,
        }
    }

    fn max_manhattan(self) -> i32 {
        match self {
            Connectivity::Six => 1,
            Connectivity::Eighteen => 2,
            Connectivity::TwentySix => 3,
        }
    }

    /// All neighbour offsets under this connectivity.
    pub fn offsets(self) -> Vec<[i32; 3]> {
        let mut out = Vec::new();
        for dk in -1..=1 {
            for dj in -1..=1 {
                for di in -1..=1 {
                    let l1 = i32::abs(di) + i32::abs(dj) + i32::abs(dk);
                    if l1 > 0 && l1 <= self.max_manhattan() {
                        out.push([di, dj, dk]);
                    }
                }
            }
        }
        out
    }

    /// Offsets pointing to voxels with a smaller linear index.
    fn backward_offsets(self) -> Vec<[i32; 3]> {
        self.offsets()
            .into_iter()
            .filter(|&[di, dj, dk]| dk < 0 || (dk == 0 && (dj < 0 || (dj == 0 && di < 0))))
            .collect()
    }
}

impl Default for Connectivity {
    fn default() -> Self {
        Connectivity::TwentySix
    }
}

impl TryFrom<u8> for Connectivity {
    type Error = Error;
    fn try_from(n: u8) -> Result<Self> {
        Connectivity::from_neighbours(n)
    }
}

impl From<Connectivity> for u8 {
    fn from(c: Connectivity) -> u8 {
        c.neighbours()
    }
}

/// Labels per indexed voxel (0 = background, clusters 1..=n) and sizes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterLabeling {
    pub labels: Vec<u32>,
    /// `sizes[l - 1]` is the voxel count of label `l`.
    pub sizes: Vec<usize>,
}

impl ClusterLabeling {
    pub fn n_clusters(&self) -> usize {
        self.sizes.len()
    }
}

/// Largest cluster size, 0 if there are none.
pub fn max_cluster_size(labeling: &ClusterLabeling) -> usize {
    labeling.sizes.iter().copied().max().unwrap_or(0)
}

/// Reusable labeler over a fixed, ascending list of grid voxels.
#[derive(Debug, Clone)]
pub struct ClusterLabeler {
    grid: Grid,
    connectivity: Connectivity,
    voxels: Vec<usize>,
    /// For each indexed voxel, positions of its backward neighbours that are
    /// also indexed.
    neighbour_start: Vec<u32>,
    neighbours: Vec<u32>,
}

/// Scratch buffers reused between labelings.
#[derive(Debug, Default, Clone)]
pub struct LabelScratch {
    parent: Vec<u32>,
    root_label: Vec<u32>,
}

impl ClusterLabeler {
    /// `voxels` must be ascending and within the grid.
    pub fn new(grid: Grid, voxels: Vec<usize>, connectivity: Connectivity) -> Result<Self> {
        if voxels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("labeler voxels must be strictly ascending"));
        }
        if voxels.last().is_some_and(|&v| v >= grid.n_voxels()) {
            return Err(Error::invalid("labeler voxel outside grid"));
        }
        let mut pos = vec![u32::MAX; grid.n_voxels()];
        for (p, &v) in voxels.iter().enumerate() {
            pos[v] = p as u32;
        }
        let offsets = connectivity.backward_offsets();
        let [nx, ny, nz] = grid.dims.map(|d| d as i64);
        let mut neighbour_start = Vec::with_capacity(voxels.len() + 1);
        let mut neighbours = Vec::new();
        for &v in &voxels {
            neighbour_start.push(neighbours.len() as u32);
            let c = grid.coord(v);
            for &[di, dj, dk] in &offsets {
                let (i, j, k) = (c.i as i64 + di as i64, c.j as i64 + dj as i64, c.k as i64 + dk as i64);
                if i < 0 || j < 0 || k < 0 || i >= nx || j >= ny || k >= nz {
                    continue;
                }
                let q = pos[(i + nx * (j + ny * k)) as usize];
                if q != u32::MAX {
                    neighbours.push(q);
                }
            }
        }
        neighbour_start.push(neighbours.len() as u32);
        Ok(ClusterLabeler {
            grid,
            connectivity,
            voxels,
            neighbour_start,
            neighbours,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn connectivity(&self) -> Connectivity {
        self.connectivity
    }

    pub fn voxels(&self) -> &[usize] {
        &self.voxels
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    fn find(parent: &mut [u32], mut x: u32) -> u32 {
        while parent[x as usize] != x {
            let p = parent[x as usize];
            parent[x as usize] = parent[p as usize];
            x = p;
        }
        x
    }

    fn union_pass(&self, supra: &[bool], scratch: &mut LabelScratch) {
        let n = self.voxels.len();
        scratch.parent.clear();
        scratch.parent.extend(0..n as u32);
        let parent = &mut scratch.parent;
        for p in 0..n {
            if !supra[p] {
                continue;
            }
            let (a, b) = (self.neighbour_start[p] as usize, self.neighbour_start[p + 1] as usize);
            for &q in &self.neighbours[a..b] {
                if supra[q as usize] {
                    let rp = Self::find(parent, p as u32);
                    let rq = Self::find(parent, q);
                    if rp != rq {
                        // Keep the smaller index as root.
                        let (lo, hi) = if rp < rq { (rp, rq) } else { (rq, rp) };
                        parent[hi as usize] = lo;
                    }
                }
            }
        }
    }

    /// Labels the supra-threshold subset (`supra[p]` for indexed voxel `p`).
    /// Labels are numbered by ascending minimum linear index.
    pub fn label(&self, supra: &[bool], scratch: &mut LabelScratch) -> ClusterLabeling {
        assert_eq!(supra.len(), self.voxels.len());
        self.union_pass(supra, scratch);
        let n = self.voxels.len();
        scratch.root_label.clear();
        scratch.root_label.resize(n, 0);
        let mut labels = vec![0u32; n];
        let mut sizes = Vec::new();
        for p in 0..n {
            if !supra[p] {
                continue;
            }
            let r = Self::find(&mut scratch.parent, p as u32) as usize;
            if scratch.root_label[r] == 0 {
                sizes.push(0);
                scratch.root_label[r] = sizes.len() as u32;
            }
            let l = scratch.root_label[r];
            labels[p] = l;
            sizes[l as usize - 1] += 1;
        }
        ClusterLabeling { labels, sizes }
    }

    /// Cluster sizes only, in label order.
    pub fn cluster_sizes(&self, supra: &[bool], scratch: &mut LabelScratch) -> Vec<u32> {
        assert_eq!(supra.len(), self.voxels.len());
        self.union_pass(supra, scratch);
        let n = self.voxels.len();
        scratch.root_label.clear();
        scratch.root_label.resize(n, 0);
        let mut sizes: Vec<u32> = Vec::new();
        for p in 0..n {
            if !supra[p] {
                continue;
            }
            let r = Self::find(&mut scratch.parent, p as u32) as usize;
            if scratch.root_label[r] == 0 {
                sizes.push(0);
                scratch.root_label[r] = sizes.len() as u32;
            }
            sizes[scratch.root_label[r] as usize - 1] += 1;
        }
        sizes
    }

    /// Int16 label volume over the full grid.
    pub fn to_volume(&self, labeling: &ClusterLabeling) -> Result<Volume3D> {
        if labeling.n_clusters() > i16::MAX as usize {
            return Err(Error::invalid("too many clusters for an int16 label volume"));
        }
        let mut values = vec![0.0; self.grid.n_voxels()];
        for (&v, &l) in self.voxels.iter().zip(&labeling.labels) {
            values[v] = l as f64;
        }
        Volume3D::new(self.grid, values, DataType::Int16)
    }
}

/// Labels a set of grid voxels directly. Returns the ascending, de-duplicated
/// voxel list alongside the labeling (labels are parallel to it).
pub fn label_components(
    supra: &[usize],
    grid: &Grid,
    connectivity: Connectivity,
) -> Result<(Vec<usize>, ClusterLabeling)> {
    let mut voxels = supra.to_vec();
    voxels.sort_unstable();
    voxels.dedup();
    let labeler = ClusterLabeler::new(*grid, voxels, connectivity)?;
    let all = vec![true; labeler.len()];
    let labeling = labeler.label(&all, &mut LabelScratch::default());
    Ok((labeler.voxels, labeling))
}
