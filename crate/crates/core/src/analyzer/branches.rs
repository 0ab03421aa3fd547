//! Continuous root branches over the scan window: the dispersion condition is
//! solved on a uniform grid of marginal frequencies and the root sets are
//! chained point-to-point by minimal-displacement assignment, so each branch
//! eta_b(v) varies smoothly and its real-axis crossings can be bracketed.

use crate::model::{GrowthPoint, LorentzianSpec};
use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{pencil, AnalyzerError, ScanParams};

/// Root branches eta_b(v) sampled on a uniform grid, branch-major:
/// `roots[b][i]` is branch `b` evaluated at `v_grid[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchSet {
    pub v_grid: Vec<f64>,
    pub roots: Vec<Vec<Complex64>>,
}

impl BranchSet {
    pub fn n_branches(&self) -> usize {
        self.roots.len()
    }

    pub fn point(&self, branch: usize, idx: usize) -> GrowthPoint {
        GrowthPoint {
            v: self.v_grid[idx],
            eta: self.roots[branch][idx],
        }
    }

    /// All branch values at grid index `idx`, in branch order.
    pub(crate) fn cross_section(&self, idx: usize) -> Vec<Complex64> {
        self.roots.iter().map(|b| b[idx]).collect()
    }
}

/// Solves the dispersion condition across the scan window and chains the
/// roots into branches. Fails if the root count changes between grid points
/// (a near-rank-deficient coupling), rather than stitching unrelated roots.
pub fn build_branches(
    k: &DMatrix<f64>,
    alpha: &DMatrix<f64>,
    dists: &[LorentzianSpec],
    scan: &ScanParams,
) -> Result<BranchSet, AnalyzerError> {
    scan.validate()?;
    let kbar = super::unit_complex_coupling_from(k, alpha, dists.len())?;
    build_branches_from(&kbar, dists, scan)
}

pub(crate) fn build_branches_from(
    kbar: &DMatrix<Complex64>,
    dists: &[LorentzianSpec],
    scan: &ScanParams,
) -> Result<BranchSet, AnalyzerError> {
    let v_grid = scan.grid();
    let mut roots_by_branch: Vec<Vec<Complex64>> = Vec::new();
    let mut prev: Vec<Complex64> = Vec::new();
    for (i, &v) in v_grid.iter().enumerate() {
        let roots = pencil::dispersion_roots_at(kbar, dists, v)?;
        if i == 0 {
            roots_by_branch = vec![Vec::with_capacity(v_grid.len()); roots.len()];
            prev = roots;
        } else {
            if roots.len() != prev.len() {
                return Err(AnalyzerError::BranchCountChange {
                    v,
                    expected: prev.len(),
                    found: roots.len(),
                });
            }
            prev = apply_pairing(&prev, roots);
        }
        for (b, &r) in prev.iter().enumerate() {
            roots_by_branch[b].push(r);
        }
    }
    Ok(BranchSet {
        v_grid,
        roots: roots_by_branch,
    })
}

/// Reorders `next` so that `result[b]` continues `prev[b]`.
pub(crate) fn apply_pairing(prev: &[Complex64], next: Vec<Complex64>) -> Vec<Complex64> {
    let perm = pair_roots(prev, &next);
    perm.into_iter().map(|j| next[j]).collect()
}

/// Assignment `perm` (with `next[perm[b]]` continuing `prev[b]`) minimizing
/// the total displacement: exhaustive over permutations for up to four roots,
/// greedy closest-pair beyond that.
pub(crate) fn pair_roots(prev: &[Complex64], next: &[Complex64]) -> Vec<usize> {
    let m = prev.len();
    debug_assert_eq!(m, next.len());
    if m <= 1 {
        return (0..m).collect();
    }
    if m <= 4 {
        let mut best: Vec<usize> = (0..m).collect();
        let mut best_cost = f64::INFINITY;
        let mut idx: Vec<usize> = (0..m).collect();
        for_each_permutation(&mut idx, 0, &mut |perm| {
            let cost: f64 = perm
                .iter()
                .enumerate()
                .map(|(b, &j)| (prev[b] - next[j]).norm())
                .sum();
            if cost < best_cost {
                best_cost = cost;
                best = perm.to_vec();
            }
        });
        best
    } else {
        let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(m * m);
        for (b, p) in prev.iter().enumerate() {
            for (j, n) in next.iter().enumerate() {
                pairs.push(((p - n).norm(), b, j));
            }
        }
        pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut perm = vec![usize::MAX; m];
        let mut taken = vec![false; m];
        let mut assigned = 0;
        for (_, b, j) in pairs {
            if perm[b] == usize::MAX && !taken[j] {
                perm[b] = j;
                taken[j] = true;
                assigned += 1;
                if assigned == m {
                    break;
                }
            }
        }
        perm
    }
}

fn for_each_permutation(arr: &mut [usize], k: usize, f: &mut dyn FnMut(&[usize])) {
    if k == arr.len() {
        f(arr);
        return;
    }
    for i in k..arr.len() {
        arr.swap(k, i);
        for_each_permutation(arr, k + 1, f);
        arr.swap(k, i);
    }
}
