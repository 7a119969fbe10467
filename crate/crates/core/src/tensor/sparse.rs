use super::{Matrix, TensorError};

/// Compressed sparse row matrix.
///
/// Column indices are strictly increasing within each row, so there are no
/// duplicate `(row, col)` entries.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a CSR matrix from `(row, col, value)` triplets. Duplicate
    /// coordinates are summed.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self, TensorError> {
        let mut sorted = triplets.to_vec();
        for &(r, c, _) in &sorted {
            if r >= rows || c >= cols {
                return Err(TensorError::IndexOutOfBounds {
                    op: "sparse_from_triplets",
                    index: r.max(c),
                    bound: if r >= rows { rows } else { cols },
                });
            }
        }
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            last = Some((r, c));
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Symmetric 0/1 adjacency from undirected edges. Each pair is stored in
    /// both directions.
    pub fn from_undirected_edges(
        n: usize,
        edges: &[(usize, usize)],
    ) -> Result<Self, TensorError> {
        let mut trip = Vec::with_capacity(edges.len() * 2);
        for &(u, v) in edges {
            trip.push((u, v, 1.0));
            trip.push((v, u, 1.0));
        }
        let mut m = Self::from_triplets(n, n, &trip)?;
        // Repeated pairs must not sum to weights above one.
        m.values.iter_mut().for_each(|v| *v = 1.0);
        Ok(m)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterates the stored entries of one row as `(col, value)`.
    pub fn row_entries(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[span.clone()].binary_search(&c) {
            Ok(pos) => self.values[span.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for (c, v) in self.row_entries(r) {
                m.set(r, c, v);
            }
        }
        m
    }

    pub fn transpose(&self) -> Self {
        let mut trip = Vec::with_capacity(self.nnz());
        for r in 0..self.rows {
            for (c, v) in self.row_entries(r) {
                trip.push((c, r, v));
            }
        }
        Self::from_triplets(self.cols, self.rows, &trip).expect("transpose keeps bounds")
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols && *self == self.transpose()
    }

    /// Sparse × dense product.
    pub fn matmul_dense(&self, x: &Matrix) -> Result<Matrix, TensorError> {
        if self.cols != x.rows() {
            return Err(TensorError::ShapeMismatch {
                op: "spmm",
                lhs: self.shape(),
                rhs: x.shape(),
            });
        }
        let f = x.cols();
        let mut out = Matrix::zeros(self.rows, f);
        for r in 0..self.rows {
            let dst = out.row_mut(r);
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let v = self.values[k];
                let src = x.row(self.col_idx[k]);
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += v * s;
                }
            }
        }
        Ok(out)
    }

    /// Principal submatrix `A(idx, idx)`; row/column `i` of the result is
    /// `idx[i]` of the input.
    pub fn principal_submatrix(&self, idx: &[usize]) -> Result<Self, TensorError> {
        let mut position = vec![usize::MAX; self.cols];
        for (new, &old) in idx.iter().enumerate() {
            if old >= self.rows || old >= self.cols {
                return Err(TensorError::IndexOutOfBounds {
                    op: "principal_submatrix",
                    index: old,
                    bound: self.rows.min(self.cols),
                });
            }
            if position[old] != usize::MAX {
                return Err(TensorError::DuplicateIndex {
                    op: "principal_submatrix",
                    index: old,
                });
            }
            position[old] = new;
        }
        let mut trip = Vec::new();
        for (new_r, &old_r) in idx.iter().enumerate() {
            for (c, v) in self.row_entries(old_r) {
                let new_c = position[c];
                if new_c != usize::MAX {
                    trip.push((new_r, new_c, v));
                }
            }
        }
        Self::from_triplets(idx.len(), idx.len(), &trip)
    }

    /// `D̃^{-1/2} (A + I) D̃^{-1/2}` with `D̃` the degree matrix of `A + I`.
    /// Any existing diagonal entries are replaced by the unit self-loop.
    pub fn gcn_normalize(&self) -> Self {
        let n = self.rows;
        let mut trip = Vec::with_capacity(self.nnz() + n);
        for r in 0..n {
            for (c, v) in self.row_entries(r) {
                if r != c {
                    trip.push((r, c, v));
                }
            }
            trip.push((r, r, 1.0));
        }
        let mut m = Self::from_triplets(n, n, &trip).expect("normalize keeps bounds");
        let inv_sqrt: Vec<f64> = (0..n)
            .map(|r| {
                let d: f64 = m.row_entries(r).map(|(_, v)| v).sum();
                1.0 / d.sqrt()
            })
            .collect();
        for r in 0..n {
            for k in m.row_ptr[r]..m.row_ptr[r + 1] {
                m.values[k] *= inv_sqrt[r] * inv_sqrt[m.col_idx[k]];
            }
        }
        m
    }

    /// Undirected edges `(u, v)` with `u < v`.
    pub fn upper_edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for r in 0..self.rows {
            for (c, _) in self.row_entries(r) {
                if r < c {
                    out.push((r, c));
                }
            }
        }
        out
    }
}
