//! Block-compressed sparse row storage with fixed `B × B` blocks.
//!
//! Vector-valued P1 operators couple nodes through small dense blocks
//! (`3 × 3` on the full space, `2 × 2` after tangent-plane reduction), so
//! storing one block per node pair keeps the reduction step a local
//! operation on blocks.

use nalgebra::{DMatrix, SMatrix};
use rayon::prelude::*;

use crate::krylov::LinearOperator;

const PAR_THRESHOLD: usize = 4096;

#[derive(Debug, Clone)]
pub struct BlockCsr<const B: usize> {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    blocks: Vec<SMatrix<f64, B, B>>,
}

impl<const B: usize> BlockCsr<B> {
    /// Builds the matrix from `(block_row, block_col, block)` triplets.
    /// Duplicates are summed in input order, so the result is
    /// bit-reproducible for a fixed triplet sequence.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, SMatrix<f64, B, B>)>) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::new();
        let mut blocks: Vec<SMatrix<f64, B, B>> = Vec::new();
        let mut last: Option<(usize, usize)> = None;
        for (r, c, b) in triplets {
            assert!(r < n && c < n, "block index out of range");
            if last == Some((r, c)) {
                *blocks.last_mut().unwrap() += b;
            } else {
                row_ptr[r + 1] += 1;
                cols.push(c);
                blocks.push(b);
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { n, row_ptr, cols, blocks }
    }

    /// Same sparsity pattern, blocks replaced by `f(row, col, block)`.
    pub fn map_blocks<const C: usize, F>(&self, f: F) -> BlockCsr<C>
    where
        F: Fn(usize, usize, &SMatrix<f64, B, B>) -> SMatrix<f64, C, C> + Sync,
    {
        let blocks = (0..self.n)
            .flat_map(|r| (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, k)))
            .map(|(r, k)| f(r, self.cols[k], &self.blocks[k]))
            .collect();
        BlockCsr {
            n: self.n,
            row_ptr: self.row_ptr.clone(),
            cols: self.cols.clone(),
            blocks,
        }
    }

    pub fn block_rows(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.n * B
    }

    pub fn nnz_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, &SMatrix<f64, B, B>)> {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[range.clone()].iter().copied().zip(&self.blocks[range])
    }

    pub fn block(&self, r: usize, c: usize) -> Option<&SMatrix<f64, B, B>> {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[range.clone()]
            .binary_search(&c)
            .ok()
            .map(|k| &self.blocks[range.start + k])
    }

    /// Scalar entry `(i, j)`.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.block(i / B, j / B).map_or(0.0, |b| b[(i % B, j % B)])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.entry(i, i)).collect()
    }

    fn row_product(&self, r: usize, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (c, b) in self.row(r) {
            let xc = &x[c * B..(c + 1) * B];
            for i in 0..B {
                let mut s = 0.0;
                for j in 0..B {
                    s += b[(i, j)] * xc[j];
                }
                out[i] += s;
            }
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.dim());
        assert_eq!(y.len(), self.dim());
        if self.n >= PAR_THRESHOLD {
            y.par_chunks_mut(B)
                .enumerate()
                .for_each(|(r, out)| self.row_product(r, x, out));
        } else {
            y.chunks_mut(B)
                .enumerate()
                .for_each(|(r, out)| self.row_product(r, x, out));
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.matvec(x, &mut y);
        y
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.mul(y))
    }

    /// Largest `|A_ij − A_ji|`.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.n {
            for (c, b) in self.row(r) {
                let t = self.block(c, r).copied().unwrap_or_else(SMatrix::zeros);
                worst = worst.max((b - t.transpose()).amax());
            }
        }
        worst
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim(), self.dim());
        for r in 0..self.n {
            for (c, b) in self.row(r) {
                for i in 0..B {
                    for j in 0..B {
                        m[(r * B + i, c * B + j)] = b[(i, j)];
                    }
                }
            }
        }
        m
    }
}

impl<const B: usize> LinearOperator for BlockCsr<B> {
    fn dim(&self) -> usize {
        BlockCsr::dim(self)
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec(x, y)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
