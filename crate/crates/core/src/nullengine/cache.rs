//! Null cache file: versioned container for a [`NullDistribution`].
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic         8 bytes   "VLSMNULL"
//! version       u32       1
//! meta_len      u64
//! meta          meta_len bytes of UTF-8 JSON (NullMeta)
//! top_t         n_perms * K f64, permutation-major
//! per p-threshold, in configuration order:
//!   counts      n_perms u32   clusters per permutation
//!   max         n_perms u32   largest cluster per permutation
//!   sizes       sum(counts) u32, permutations concatenated in order
//! ```

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{CollectConfig, NullDistribution, NullMeta, NullRecord, PermutationPlan, ThresholdClusters};
use crate::cohort::{CohortMatrix, ScoreVector};
use crate::{Error, Result};

pub const CACHE_MAGIC: &[u8; 8] = b"VLSMNULL";
pub const CACHE_VERSION: u32 = 1;

/// SHA-256 over the cohort mask and lesion bits, the scores, the collect
/// configuration and the permutation orders.
pub fn content_hash(
    cohort: &CohortMatrix,
    scores: &ScoreVector,
    plan: &PermutationPlan,
    collect: &CollectConfig,
) -> String {
    let mut h = Sha256::new();
    h.update(b"vlsm-null-v1");
    for d in cohort.grid().dims {
        h.update((d as u64).to_le_bytes());
    }
    h.update((cohort.n_subjects() as u64).to_le_bytes());
    for v in cohort.mask_index() {
        h.update((v as u64).to_le_bytes());
    }
    for j in 0..cohort.mask_len() {
        h.update(cohort.column(j));
    }
    for &s in scores.values() {
        h.update(s.to_le_bytes());
    }
    h.update(serde_json::to_vec(collect).expect("config serialises"));
    h.update(plan.seed.map_or([0xff; 8], |s| s.to_le_bytes()));
    h.update((plan.n_perms() as u64).to_le_bytes());
    for o in &plan.orders {
        for &x in o {
            h.update(x.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

pub fn encode_null(null: &NullDistribution) -> Vec<u8> {
    let meta = serde_json::to_vec(&null.meta).expect("meta serialises");
    let k = null.k();
    let mut out = Vec::new();
    out.extend_from_slice(CACHE_MAGIC);
    out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    out.extend_from_slice(&meta);
    for r in &null.records {
        debug_assert_eq!(r.top_t.len(), k);
        for &t in &r.top_t {
            out.extend_from_slice(&t.to_le_bytes());
        }
    }
    for h in 0..null.meta.collect.p_thresholds.len() {
        for r in &null.records {
            out.extend_from_slice(&(r.clusters[h].sizes.len() as u32).to_le_bytes());
        }
        for r in &null.records {
            out.extend_from_slice(&r.clusters[h].max.to_le_bytes());
        }
        for r in &null.records {
            for &s in &r.clusters[h].sizes {
                out.extend_from_slice(&s.to_le_bytes());
            }
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Cache(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_null(bytes: &[u8]) -> Result<NullDistribution> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(8)? != CACHE_MAGIC {
        return Err(Error::Cache("bad magic".into()));
    }
    let version = c.u32()?;
    if version != CACHE_VERSION {
        return Err(Error::Cache(format!("unsupported version {version}")));
    }
    let meta_len = c.u64()? as usize;
    let meta: NullMeta =
        serde_json::from_slice(c.take(meta_len)?).map_err(|e| Error::Cache(format!("metadata: {e}")))?;
    let n = meta.n_perms;
    let k = meta.collect.k;
    let mut records: Vec<NullRecord> = (0..n)
        .map(|i| NullRecord {
            perm_index: i,
            top_t: Vec::with_capacity(k),
            clusters: Vec::new(),
        })
        .collect();
    for r in &mut records {
        for _ in 0..k {
            r.top_t.push(c.f64()?);
        }
    }
    for _ in 0..meta.collect.p_thresholds.len() {
        let counts = (0..n).map(|_| c.u32()).collect::<Result<Vec<_>>>()?;
        let maxes = (0..n).map(|_| c.u32()).collect::<Result<Vec<_>>>()?;
        for (r, (&count, &max)) in records.iter_mut().zip(counts.iter().zip(&maxes)) {
            let sizes = (0..count).map(|_| c.u32()).collect::<Result<Vec<_>>>()?;
            if sizes.iter().copied().max().unwrap_or(0) != max {
                return Err(Error::Cache(format!("record {} max size inconsistent", r.perm_index)));
            }
            r.clusters.push(ThresholdClusters { sizes, max });
        }
    }
    if c.pos != bytes.len() {
        return Err(Error::Cache(format!("{} trailing bytes", bytes.len() - c.pos)));
    }
    Ok(NullDistribution { meta, records })
}

pub fn save_null_cache(path: impl AsRef<Path>, null: &NullDistribution) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_null(null)).map_err(|e| Error::io(path, e))
}

pub fn load_null_cache(path: impl AsRef<Path>) -> Result<NullDistribution> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_null(&bytes)
}
