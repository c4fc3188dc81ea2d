//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use std::collections::VecDeque;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use vlsm::prelude::*;

/// Random cohort on a small grid; every subject gets a few random voxels.
pub fn random_cohort(n: usize, dims: [usize; 3], density: f64, seed: u64) -> CohortMatrix {
    let mut rng = StdRng::seed_from_u64(seed);
    let grid = Grid::cubic(dims[0], dims[1], dims[2]).unwrap();
    let lesions: Vec<Vec<usize>> = (0..n)
        .map(|_| (0..grid.n_voxels()).filter(|_| rng.random::<f64>() < density).collect())
        .collect();
    let ids = (0..n).map(|s| format!("s{s}")).collect();
    CohortMatrix::from_lesion_lists(grid, ids, &lesions).unwrap()
}

pub fn random_scores(n: usize, seed: u64) -> ScoreVector {
    let mut rng = StdRng::seed_from_u64(seed ^ 0xabcdef);
    ScoreVector::new((0..n).map(|_| rng.random::<f64>() * 10.0).collect()).unwrap()
}

/// Pooled-variance t for one column, written from the textbook formula.
pub fn brute_t(lesioned: &[bool], scores: &[f64]) -> f64 {
    let g1: Vec<f64> = scores.iter().zip(lesioned).filter(|(_, &l)| l).map(|(&s, _)| s).collect();
    let g0: Vec<f64> = scores.iter().zip(lesioned).filter(|(_, &l)| !l).map(|(&s, _)| s).collect();
    let (n1, n0) = (g1.len() as f64, g0.len() as f64);
    let m1 = g1.iter().sum::<f64>() / n1;
    let m0 = g0.iter().sum::<f64>() / n0;
    let ss = g1.iter().map(|x| (x - m1).powi(2)).sum::<f64>() + g0.iter().map(|x| (x - m0).powi(2)).sum::<f64>();
    let sp2 = ss / (n1 + n0 - 2.0);
    (m1 - m0) / (sp2 * (1.0 / n1 + 1.0 / n0)).sqrt()
}

pub fn brute_t_map(cohort: &CohortMatrix, scores: &[f64]) -> Vec<f64> {
    (0..cohort.mask_len())
        .map(|j| {
            let col: Vec<bool> = (0..cohort.n_subjects()).map(|s| cohort.is_lesioned(s, j)).collect();
            brute_t(&col, scores)
        })
        .collect()
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
}

fn adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (l, r) = (simpson(f, a, m), simpson(f, m, b));
    if depth == 0 || (l + r - whole).abs() <= 15.0 * tol {
        return l + r + (l + r - whole) / 15.0;
    }
    adaptive(f, a, m, l, 0.5 * tol, depth - 1) + adaptive(f, m, b, r, 0.5 * tol, depth - 1)
}

/// Adaptive Simpson with tolerance relative to a fine composite estimate.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let n = 64;
    let h = (b - a) / n as f64;
    let rough: f64 = (0..n).map(|i| simpson(f, a + i as f64 * h, a + (i + 1) as f64 * h)).sum();
    (0..n)
        .map(|i| {
            let (x0, x1) = (a + i as f64 * h, a + (i + 1) as f64 * h);
            adaptive(f, x0, x1, simpson(f, x0, x1), rel_tol * rough.abs() / n as f64, 40)
        })
        .sum()
}

/// P(T_df > t) by quadrature: with t = sqrt(df) tan(theta) the density is
/// proportional to cos^(df-1)(theta). Integrated as sin^(df-1)(phi) with
/// phi = pi/2 - theta so the upper tail starts at phi = 0.
pub fn quadrature_t_sf(t: f64, df: usize) -> f64 {
    let nu = df as f64;
    let f = move |phi: f64| phi.sin().powf(nu - 1.0);
    let half_pi = std::f64::consts::FRAC_PI_2;
    let total = 2.0 * integrate(&f, 0.0, half_pi, 1e-14);
    let theta = (t / nu.sqrt()).atan();
    if theta >= 0.0 {
        integrate(&f, 0.0, half_pi - theta, 1e-14) / total
    } else {
        1.0 - integrate(&f, 0.0, half_pi + theta, 1e-14) / total
    }
}

pub fn offsets(neighbours: u8) -> Vec<[i64; 3]> {
    let mut out = Vec::new();
    for dk in -1i64..=1 {
        for dj in -1i64..=1 {
            for di in -1i64..=1 {
                let nonzero = [di, dj, dk].iter().filter(|&&d| d != 0).count();
                let keep = match neighbours {
                    6 => nonzero == 1,
                    18 => nonzero == 1 || nonzero == 2,
                    26 => nonzero >= 1,
                    _ => unreachable!(),
                };
                if keep {
                    out.push([di, dj, dk]);
                }
            }
        }
    }
    out
}

/// Breadth-first flood fill. Scanning seeds in ascending index order
/// numbers components by their smallest voxel. Returns (label per voxel of
/// `voxels`, component sizes).
pub fn flood_fill(voxels: &[usize], dims: [usize; 3], neighbours: u8) -> (Vec<u32>, Vec<usize>) {
    let n = dims[0] * dims[1] * dims[2];
    let mut inside = vec![false; n];
    for &v in voxels {
        inside[v] = true;
    }
    let mut label = vec![0u32; n];
    let mut sizes = Vec::new();
    let offs = offsets(neighbours);
    let mut sorted = voxels.to_vec();
    sorted.sort_unstable();
    for &start in &sorted {
        if label[start] != 0 {
            continue;
        }
        let id = sizes.len() as u32 + 1;
        let mut size = 0;
        let mut queue = VecDeque::from([start]);
        label[start] = id;
        while let Some(v) = queue.pop_front() {
            size += 1;
            let (i, j, k) = ((v % dims[0]) as i64, ((v / dims[0]) % dims[1]) as i64, (v / (dims[0] * dims[1])) as i64);
            for o in &offs {
                let (a, b, c) = (i + o[0], j + o[1], k + o[2]);
                if a < 0 || b < 0 || c < 0 || a >= dims[0] as i64 || b >= dims[1] as i64 || c >= dims[2] as i64 {
                    continue;
                }
                let q = a as usize + dims[0] * (b as usize + dims[1] * c as usize);
                if inside[q] && label[q] == 0 {
                    label[q] = id;
                    queue.push_back(q);
                }
            }
        }
        sizes.push(size);
    }
    (sorted.iter().map(|&v| label[v]).collect(), sizes)
}

/// Benjamini-Hochberg straight from the definition: the largest i with
/// p(i) <= i q / (m c), and every p at or below p(i).
pub fn brute_bh(p: &[f64], q: f64, c: f64) -> (Option<f64>, usize) {
    let m = p.len();
    let mut sorted = p.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut best = None;
    for i in 1..=m {
        if sorted[i - 1] <= i as f64 * q / (m as f64 * c) {
            best = Some(sorted[i - 1]);
        }
    }
    let n = best.map_or(0, |b| p.iter().filter(|&&x| x <= b).count());
    (best, n)
}

/// Smallest value of the upper `1 - alpha` share: the ceil((1 - alpha) n)-th
/// order statistic, with the rank in integer arithmetic for alpha = a/100.
pub fn fwer_from_maxima(maxima: &[f64], alpha_percent: usize) -> f64 {
    let mut s = maxima.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len();
    let rank = (n * (100 - alpha_percent)).div_ceil(100);
    s[rank - 1]
}

fn ln_choose(n: u64, k: u64) -> f64 {
    (1..=k).map(|i| ((n - k + i) as f64).ln() - (i as f64).ln()).sum()
}

/// Exact two-sided binomial acceptance interval: the smallest `lo` and
/// largest `hi` counts with at most (1 - level)/2 probability below and above.
pub fn binomial_interval(n: u64, p: f64, level: f64) -> (u64, u64) {
    let pmf: Vec<f64> = (0..=n)
        .map(|k| (ln_choose(n, k) + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln()).exp())
        .collect();
    let tail = (1.0 - level) / 2.0;
    let mut lo = 0;
    let mut acc = 0.0;
    while acc + pmf[lo as usize] <= tail {
        acc += pmf[lo as usize];
        lo += 1;
    }
    let mut hi = n;
    let mut acc = 0.0;
    while acc + pmf[hi as usize] <= tail {
        acc += pmf[hi as usize];
        hi -= 1;
    }
    (lo, hi)
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            for &k in &idx[i..=j] {
                r[k] = (i + j) as f64 / 2.0 + 1.0;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

pub type Check = Result<String, String>;

/// Voxel t against [`brute_t_map`] on `n_cohorts` random cohorts.
pub fn check_t_oracle(n_cohorts: u64) -> Check {
    let mut worst = 0.0f64;
    for seed in 0..n_cohorts {
        let n = 8 + (seed as usize % 23);
        let cohort = random_cohort(n, [5, 4, 3], 0.35, seed).with_mask(MaskCutoffs::Fixed { min_lesioned: 2, min_intact: 2 });
        let Ok(cohort) = cohort else { continue };
        let scores = random_scores(n, seed);
        let map = voxel_t_map(&cohort, &scores, &TTestOptions::default()).map_err(|e| e.to_string())?;
        let brute = brute_t_map(&cohort, scores.values());
        for (a, b) in map.t_values.iter().zip(&brute) {
            worst = worst.max((a - b).abs() / b.abs().max(1e-300));
        }
    }
    if worst <= 1e-10 {
        Ok(format!("max relative error {worst:.2e}"))
    } else {
        Err(format!("max relative error {worst:.2e} > 1e-10"))
    }
}

/// Upper-tail t probability against quadrature on a 50-point grid.
pub fn check_t_tail_oracle() -> Check {
    let dfs = [1, 2, 5, 30, 118];
    let ts = [-3.0, -0.7, 0.0, 0.4, 1.0, 1.96, 3.0, 4.5, 7.0, 12.0];
    let mut worst = 0.0f64;
    for &df in &dfs {
        for &t in &ts {
            let p = t_to_p(t, df, Tails::OneTailedPositive);
            let q = quadrature_t_sf(t, df);
            worst = worst.max((p - q).abs() / q);
        }
    }
    if worst <= 1e-8 {
        Ok(format!("{} points, max relative error {worst:.2e}", dfs.len() * ts.len()))
    } else {
        Err(format!("max relative error {worst:.2e} > 1e-8"))
    }
}

/// Connected components against flood fill on random volumes.
pub fn check_components_oracle(per_connectivity: u64) -> Check {
    let dims = [9, 7, 6];
    let grid = Grid::cubic(dims[0], dims[1], dims[2]).unwrap();
    for conn in [Connectivity::Six, Connectivity::Eighteen, Connectivity::TwentySix] {
        for seed in 0..per_connectivity {
            let mut rng = StdRng::seed_from_u64(seed * 31 + conn.neighbours() as u64);
            let density = 0.1 + 0.4 * rng.random::<f64>();
            let voxels: Vec<usize> = (0..grid.n_voxels()).filter(|_| rng.random::<f64>() < density).collect();
            let (sorted, labeling) = label_components(&voxels, &grid, conn).map_err(|e| e.to_string())?;
            let (labels, sizes) = flood_fill(&voxels, dims, conn.neighbours());
            if sorted != { let mut s = voxels.clone(); s.sort_unstable(); s } || labeling.labels != labels || labeling.sizes != sizes {
                return Err(format!("mismatch at connectivity {} seed {seed}", conn.neighbours()));
            }
        }
    }
    Ok(format!("{} volumes per connectivity identical", per_connectivity))
}

pub fn check_kth_oracle() -> Check {
    let mut rng = StdRng::seed_from_u64(77);
    for _ in 0..200 {
        let n = rng.random_range(1..300);
        let values: Vec<f64> = (0..n).map(|_| (rng.random_range(0..50) as f64) * 0.5).collect();
        let k = rng.random_range(1..=n);
        let mut sorted = values.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let got = kth_largest(&values, k).map_err(|e| e.to_string())?;
        if got != sorted[k - 1] {
            return Err(format!("k = {k} of {n}: {got} != {}", sorted[k - 1]));
        }
    }
    Ok("200 random lists identical".into())
}

pub fn check_bh_oracle(n_lists: u64) -> Check {
    use vlsm::voxelstats::PValueMap;
    for seed in 0..n_lists {
        let mut rng = StdRng::seed_from_u64(seed + 5000);
        let m = rng.random_range(1..400);
        let signal = rng.random::<f64>();
        let p: Vec<f64> = (0..m)
            .map(|_| {
                let u: f64 = rng.random();
                if rng.random::<f64>() < signal { u.powi(6) } else { u }
            })
            .collect();
        let map = PValueMap {
            p_values: p.clone(),
            df: 30,
            tails: Tails::OneTailedPositive,
        };
        let q = [0.01, 0.05, 0.2][seed as usize % 3];
        for (dep, c) in [
            (FdrDependency::Independent, 1.0),
            (FdrDependency::Arbitrary, (1..=m).map(|i| 1.0 / i as f64).sum::<f64>()),
        ] {
            let got = fdr_threshold(&map, q, dep).map_err(|e| e.to_string())?;
            let (p_crit, n) = brute_bh(&p, q, c);
            if got.p_crit != p_crit || got.n_supra != n {
                return Err(format!("list {seed} ({dep:?}): {:?}/{} vs {p_crit:?}/{n}", got.p_crit, got.n_supra));
            }
        }
    }
    Ok(format!("{n_lists} random p-lists identical, both dependency constants"))
}
