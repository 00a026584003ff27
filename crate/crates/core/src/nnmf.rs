//! Non-negative matrix factorization baseline for unit clustering.
//!
//! `V ≈ W·H` with `W` (units × rank) and `H` (rank × features) found by
//! Lee–Seung multiplicative updates on the Frobenius error. Each unit joins
//! the factor with the largest weight in its row of `W`; rows of `H` are the
//! cluster roles.

use nalgebra::DMatrix;
use rand::RngCore;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::features::FeatureMatrix;
use crate::rng;
use crate::{Error, Result};

/// Lower bound for every factor entry.
pub const POSITIVE_FLOOR: f64 = 1e-8;

pub const INIT_MEAN: f64 = 0.5;
pub const INIT_VARIANCE: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NnmfResult {
    pub w: Vec<Vec<f64>>,
    pub h: Vec<Vec<f64>>,
    /// Final `‖V − WH‖_F`.
    pub residual: f64,
    /// Residual before the first round and after every round.
    pub residual_trace: Vec<f64>,
    pub restart_index: usize,
    pub seed: u64,
}

impl NnmfResult {
    pub fn rank(&self) -> usize {
        self.h.len()
    }
}

/// Entrywise absolute value of the correlation features.
pub fn nonneg_features(fm: &FeatureMatrix) -> Vec<Vec<f64>> {
    fm.abs_rows()
}

fn to_matrix(v: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let rows = v.len();
    let cols = v.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Err(Error::param("cannot factorize an empty matrix"));
    }
    if let Some(r) = v.iter().find(|r| r.len() != cols) {
        return Err(Error::DimensionMismatch {
            what: "matrix row length",
            expected: cols,
            actual: r.len(),
        });
    }
    if v.iter().flatten().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::param("NNMF input must be finite and non-negative"));
    }
    Ok(DMatrix::from_fn(rows, cols, |i, j| v[i][j]))
}

fn from_matrix(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn residual(v: &DMatrix<f64>, w: &DMatrix<f64>, h: &DMatrix<f64>) -> f64 {
    (v - w * h).norm()
}

/// One rank-`rank` factorization from an `N(0.5, 0.5)` start (absolute value,
/// floored), run for `iters` rounds of multiplicative updates.
pub fn nnmf_factorize(v: &[Vec<f64>], rank: usize, iters: usize, seed: u64) -> Result<NnmfResult> {
    let vm = to_matrix(v)?;
    run(&vm, rank, iters, seed, 0)
}

fn run(v: &DMatrix<f64>, rank: usize, iters: usize, seed: u64, restart_index: usize) -> Result<NnmfResult> {
    let (n, m) = v.shape();
    if rank == 0 || rank > n.min(m) {
        return Err(Error::param(format!("rank {rank} out of range 1..={}", n.min(m))));
    }
    let mut rng = rng::seeded(seed);
    let normal = Normal::new(INIT_MEAN, INIT_VARIANCE.sqrt()).expect("valid normal");
    let mut draw = || normal.sample(&mut rng).abs().max(POSITIVE_FLOOR);
    let mut w = DMatrix::from_fn(n, rank, |_, _| draw());
    let mut h = DMatrix::from_fn(rank, m, |_, _| draw());

    let mut trace = Vec::with_capacity(iters + 1);
    trace.push(residual(v, &w, &h));
    for _ in 0..iters {
        // H ← H ∘ (WᵀV) / (WᵀWH)
        let num = w.tr_mul(v);
        let den = w.tr_mul(&w) * &h;
        h.zip_zip_apply(&num, &den, |x, a, b| *x = (*x * a / b).max(POSITIVE_FLOOR));
        // W ← W ∘ (VHᵀ) / (WHHᵀ)
        let num = v * h.transpose();
        let den = &w * (&h * h.transpose());
        w.zip_zip_apply(&num, &den, |x, a, b| *x = (*x * a / b).max(POSITIVE_FLOOR));
        trace.push(residual(v, &w, &h));
    }
    Ok(NnmfResult {
        w: from_matrix(&w),
        h: from_matrix(&h),
        residual: *trace.last().unwrap(),
        residual_trace: trace,
        restart_index,
        seed,
    })
}

/// Seed used by restart `r`: the base seed for restart 0, then successive
/// draws from a stream seeded with it.
pub fn restart_seeds(seed: u64, restarts: usize) -> Vec<u64> {
    let mut stream = rng::seeded(seed);
    (0..restarts)
        .map(|r| if r == 0 { seed } else { stream.next_u64() })
        .collect()
}

/// Runs `restarts` factorizations and keeps the one with the lowest residual
/// (earliest restart on ties).
pub fn nnmf_best_of(v: &[Vec<f64>], rank: usize, iters: usize, restarts: usize, seed: u64) -> Result<NnmfResult> {
    if restarts == 0 {
        return Err(Error::param("need at least one restart"));
    }
    let vm = to_matrix(v)?;
    let mut best: Option<NnmfResult> = None;
    for (r, s) in restart_seeds(seed, restarts).into_iter().enumerate() {
        let result = run(&vm, rank, iters, s, r)?;
        if best.as_ref().is_none_or(|b| result.residual < b.residual) {
            best = Some(result);
        }
    }
    Ok(best.unwrap())
}

/// Dominant factor per unit: `argmax_m W[k][m]`, lowest `m` on ties.
pub fn nnmf_assign(result: &NnmfResult) -> Vec<usize> {
    result
        .w
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
                .0
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result_with_w(w: Vec<Vec<f64>>) -> NnmfResult {
        NnmfResult {
            h: vec![vec![1.0]; w[0].len()],
            w,
            residual: 0.0,
            residual_trace: vec![0.0],
            restart_index: 0,
            seed: 0,
        }
    }

    #[test]
    fn abs_features() {
        let fm = FeatureMatrix::from_rows(vec![vec![-0.5, 0.2], vec![0.0, 0.0]], 1).unwrap();
        assert_eq!(nonneg_features(&fm), vec![vec![0.5, 0.2], vec![0.0, 0.0]]);
    }

    #[test]
    fn assign_argmax_and_ties() {
        let r = result_with_w(vec![vec![0.1, 0.9], vec![0.5, 0.5], vec![0.7, 0.2]]);
        assert_eq!(nnmf_assign(&r), vec![1, 0, 0]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(nnmf_factorize(&[vec![1.0, -0.1]], 1, 10, 0).is_err());
        assert!(nnmf_factorize(&[vec![1.0, 0.1]], 2, 10, 0).is_err());
        assert!(nnmf_factorize(&[vec![1.0, 0.1]], 0, 10, 0).is_err());
        assert!(nnmf_best_of(&[vec![1.0, 0.1]], 1, 10, 0, 0).is_err());
    }

    #[test]
    fn rank_one_recovery() {
        let u = [0.3, 1.2, 0.7, 2.0];
        let v: Vec<Vec<f64>> = u.iter().map(|a| [0.5, 0.1, 0.9].iter().map(|b| a * b).collect()).collect();
        let r = nnmf_factorize(&v, 1, 1000, 3).unwrap();
        assert!(r.residual < 1e-6, "residual {}", r.residual);
    }

    #[test]
    fn single_restart_equals_factorize() {
        let v = vec![vec![0.2, 0.4, 0.1], vec![0.9, 0.3, 0.5], vec![0.6, 0.6, 0.0]];
        let a = nnmf_factorize(&v, 2, 50, 17).unwrap();
        let b = nnmf_best_of(&v, 2, 50, 1, 17).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn factors_respect_floor() {
        let v = vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![0.0, 0.0]];
        let r = nnmf_factorize(&v, 2, 300, 1).unwrap();
        assert!(r.w.iter().chain(&r.h).flatten().all(|&x| x >= POSITIVE_FLOOR));
    }
}
