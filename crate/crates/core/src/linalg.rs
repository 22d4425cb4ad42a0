//! Sparse symmetric storage and a direct envelope solver.
//!
//! Stiffness matrices from P1 elements are assembled as triplets, compressed
//! to CSR, and the interior blocks are factorised with a reverse Cuthill-McKee
//! ordering followed by an envelope (skyline) Cholesky decomposition.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::error::{LabError, Result};

/// Compressed sparse row matrix with sorted column indices.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds an `n x n` matrix from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_unstable_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { n, row_ptr, cols, vals }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.cols[a..b], &self.vals[a..b])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (c, v) = self.row(i);
        match c.binary_search(&j) {
            Ok(k) => v[k],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let (c, v) = self.row(i);
                c.iter().zip(v).map(|(&j, &a)| a * x[j]).sum()
            })
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                m[(i, j)] += a;
            }
        }
        m
    }

    /// Largest absolute asymmetry `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                worst = worst.max((a - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Dense block `A[rows, cols]`.
    pub fn dense_block(&self, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        let local = local_index(self.n, cols);
        let mut m = DMatrix::zeros(rows.len(), cols.len());
        for (a, &i) in rows.iter().enumerate() {
            let (c, v) = self.row(i);
            for (&j, &x) in c.iter().zip(v) {
                if let Some(b) = local[j] {
                    m[(a, b)] += x;
                }
            }
        }
        m
    }
}

/// Maps global indices to positions within `subset`.
pub fn local_index(n: usize, subset: &[usize]) -> Vec<Option<usize>> {
    let mut local = vec![None; n];
    for (k, &i) in subset.iter().enumerate() {
        local[i] = Some(k);
    }
    local
}

// ---------------------------------------------------------------------------
// Ordering

/// Reverse Cuthill-McKee ordering of the graph induced on `subset`.
/// Returns the permutation as positions into `subset`.
fn rcm_order(matrix: &CsrMatrix, subset: &[usize], local: &[Option<usize>]) -> Vec<usize> {
    let m = subset.len();
    let adjacency: Vec<Vec<usize>> = subset
        .iter()
        .map(|&g| {
            let (c, _) = matrix.row(g);
            c.iter().filter_map(|&j| local[j]).filter(|&l| local[g] != Some(l)).collect()
        })
        .collect();
    let degree: Vec<usize> = adjacency.iter().map(Vec::len).collect();
    let mut visited = vec![false; m];
    let mut order = Vec::with_capacity(m);
    let mut by_degree: Vec<usize> = (0..m).collect();
    by_degree.sort_by_key(|&i| (degree[i], i));
    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        let start = pseudo_peripheral(&adjacency, seed);
        let mut queue = VecDeque::new();
        visited[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adjacency[v].iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| (degree[w], w));
            for w in next {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

fn pseudo_peripheral(adjacency: &[Vec<usize>], seed: usize) -> usize {
    let mut current = seed;
    let mut depth = 0;
    for _ in 0..8 {
        let (far, d) = bfs_farthest(adjacency, current);
        if d <= depth {
            break;
        }
        depth = d;
        current = far;
    }
    current
}

fn bfs_farthest(adjacency: &[Vec<usize>], start: usize) -> (usize, usize) {
    let mut dist = vec![usize::MAX; adjacency.len()];
    dist[start] = 0;
    let mut queue = VecDeque::from([start]);
    let mut best = (start, 0);
    while let Some(v) = queue.pop_front() {
        let d = dist[v];
        if d > best.1 || (d == best.1 && adjacency[v].len() < adjacency[best.0].len()) {
            best = (v, d);
        }
        for &w in &adjacency[v] {
            if dist[w] == usize::MAX {
                dist[w] = d + 1;
                queue.push_back(w);
            }
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Envelope Cholesky

/// Cholesky factor `P A P^T = L L^T` of a principal submatrix, stored by rows
/// from the first structural nonzero to the diagonal.
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    /// `perm[k]` is the position in the subset of the `k`-th eliminated unknown.
    perm: Vec<usize>,
    /// Inverse of `perm`.
    inv: Vec<usize>,
    first: Vec<usize>,
    start: Vec<usize>,
    data: Vec<f64>,
}

impl EnvelopeCholesky {
    /// Factorises `A[subset, subset]`. Fails when the block is not positive definite.
    pub fn factor(matrix: &CsrMatrix, subset: &[usize]) -> Result<Self> {
        let m = subset.len();
        let local = local_index(matrix.dim(), subset);
        let perm = rcm_order(matrix, subset, &local);
        let mut inv = vec![0usize; m];
        for (k, &p) in perm.iter().enumerate() {
            inv[p] = k;
        }
        let mut first = vec![0usize; m];
        for k in 0..m {
            let (c, _) = matrix.row(subset[perm[k]]);
            first[k] = c
                .iter()
                .filter_map(|&j| local[j])
                .map(|l| inv[l])
                .filter(|&q| q <= k)
                .min()
                .unwrap_or(k);
        }
        let mut start = vec![0usize; m + 1];
        for k in 0..m {
            start[k + 1] = start[k] + (k - first[k] + 1);
        }
        let mut data = vec![0.0; start[m]];
        for k in 0..m {
            let (c, v) = matrix.row(subset[perm[k]]);
            for (&j, &a) in c.iter().zip(v) {
                if let Some(l) = local[j] {
                    let q = inv[l];
                    if q <= k {
                        data[start[k] + q - first[k]] += a;
                    }
                }
            }
        }
        for i in 0..m {
            let fi = first[i];
            let row_i = start[i];
            for j in fi..i {
                let fj = first[j];
                let lo = fi.max(fj);
                let mut s = data[row_i + j - fi];
                let a = &data[row_i + lo - fi..row_i + j - fi];
                let b = &data[start[j] + lo - fj..start[j] + j - fj];
                s -= dot(a, b);
                let djj = data[start[j + 1] - 1];
                data[row_i + j - fi] = s / djj;
            }
            let row = &data[row_i..row_i + i - fi];
            let d = data[row_i + i - fi] - dot(row, row);
            if !(d > 0.0) || !d.is_finite() {
                return Err(LabError::Solver(format!(
                    "interior block is not positive definite (pivot {i} = {d:e})"
                )));
            }
            data[row_i + i - fi] = d.sqrt();
        }
        Ok(Self { perm, inv, first, start, data })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    /// Number of stored factor entries.
    pub fn envelope_size(&self) -> usize {
        self.data.len()
    }

    /// Solves `A x = b` where `b` and `x` are indexed like the factorised subset.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let m = self.dim();
        let mut y: Vec<f64> = (0..m).map(|k| b[self.perm[k]]).collect();
        for i in 0..m {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            let s = dot(&row[..i - fi], &y[fi..i]);
            y[i] = (y[i] - s) / row[i - fi];
        }
        for i in (0..m).rev() {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            y[i] /= row[i - fi];
            let xi = y[i];
            for (k, &l) in row[..i - fi].iter().enumerate() {
                y[fi + k] -= l * xi;
            }
        }
        let mut x = vec![0.0; m];
        for (p, &k) in self.inv.iter().enumerate() {
            x[p] = y[k];
        }
        x
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(self.solve(b.as_slice()))
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Symmetrises a dense matrix in place by averaging with its transpose.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let a = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = a;
            m[(j, i)] = a;
        }
    }
}

/// Maps `f` over `items`, in parallel when the `parallel` feature is enabled.
/// Output order always matches input order.
pub fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, t)
    }

    #[test]
    fn duplicates_are_summed() {
        let m = CsrMatrix::from_triplets(2, vec![(0, 0, 1.0), (0, 0, 2.0), (1, 0, 4.0)]);
        assert_eq!(m.get(0, 0), 3.0);
        assert_eq!(m.get(1, 0), 4.0);
        assert_eq!(m.get(0, 1), 0.0);
        assert_eq!(m.nnz(), 2);
    }

    #[test]
    fn envelope_solve_matches_dense() {
        let n = 40;
        let a = laplacian_1d(n);
        let subset: Vec<usize> = (0..n).filter(|i| i % 7 != 3).collect();
        let chol = EnvelopeCholesky::factor(&a, &subset).unwrap();
        let b: Vec<f64> = (0..subset.len()).map(|i| (i as f64 * 0.37).sin()).collect();
        let x = chol.solve(&b);
        let dense = a.dense_block(&subset, &subset);
        let r = &dense * DVector::from_vec(x) - DVector::from_vec(b);
        assert!(r.norm() < 1e-12, "residual {}", r.norm());
    }

    #[test]
    fn indefinite_block_is_rejected() {
        let m = CsrMatrix::from_triplets(2, vec![(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)]);
        assert!(EnvelopeCholesky::factor(&m, &[0, 1]).is_err());
    }
}
