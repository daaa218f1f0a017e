//! Sparse matrices in compressed sparse-row form, a reusable LDLᵀ
//! factorization for symmetric positive definite systems, Matrix Market
//! import/export, and a dense generalized eigensolve for the stability
//! analysis.
//!
//! The factorization is the up-looking algorithm driven by the elimination
//! tree in natural ordering; on the 5-point stencils used here the fill stays
//! within the band, which is fine at desk scale. Factorizations are counted
//! per thread so the factorize-once training contract can be asserted in
//! tests.

use std::cell::Cell;
use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

thread_local! {
    static FACTORIZE_CALLS: Cell<u64> = const { Cell::new(0) };
}

/// Number of [`CsrMatrix::factorize`] calls made on the current thread.
pub fn factorization_count() -> u64 {
    FACTORIZE_CALLS.with(|c| c.get())
}

/// Compressed sparse-row matrix with sorted, duplicate-free column indices
/// per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Assemble from triplets; duplicates are summed, exact zeros after
    /// summation are kept (they are structurally meaningful for symmetry).
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        for &(i, j, _) in triplets {
            if i >= rows || j >= cols {
                return Err(Error::IndexOutOfRange {
                    row: i,
                    col: j,
                    rows,
                    cols,
                });
            }
        }
        // count entries per row, then bucket and sort each row by column
        let mut per_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); rows];
        for &(i, j, v) in triplets {
            per_row[i].push((j, v));
        }
        let mut row_ptr = Vec::with_capacity(rows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in &mut per_row {
            row.sort_unstable_by_key(|&(j, _)| j);
            let mut k = 0;
            while k < row.len() {
                let j = row[k].0;
                let mut v = 0.0;
                while k < row.len() && row[k].0 == j {
                    v += row[k].1;
                    k += 1;
                }
                col_idx.push(j);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            row_ptr: vec![0; rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Identity scaled by `value`.
    pub fn scaled_identity(n: usize, value: f64) -> Self {
        Self {
            rows: n,
            cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![value; n],
        }
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    /// Stored entry at `(i, j)`, or zero.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        match self.col_idx[lo..hi].binary_search(&j) {
            Ok(p) => self.values[lo + p],
            Err(_) => 0.0,
        }
    }

    /// Sorted `(col, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        self.col_idx[lo..hi]
            .iter()
            .copied()
            .zip(self.values[lo..hi].iter().copied())
    }

    /// All stored entries as `(row, col, value)`.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.values {
            *v *= factor;
        }
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: x.len(),
            });
        }
        let mut y = vec![0.0; self.rows];
        for i in 0..self.rows {
            let mut acc = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[p] * x[self.col_idx[p]];
            }
            y[i] = acc;
        }
        Ok(y)
    }

    /// `y = Aᵀ x`.
    pub fn mul_transpose_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.rows {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                got: x.len(),
            });
        }
        let mut y = vec![0.0; self.cols];
        for i in 0..self.rows {
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                y[self.col_idx[p]] += self.values[p] * xi;
            }
        }
        Ok(y)
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.cols];
        for &j in &self.col_idx {
            counts[j] += 1;
        }
        let mut row_ptr = vec![0usize; self.cols + 1];
        for j in 0..self.cols {
            row_ptr[j + 1] = row_ptr[j] + counts[j];
        }
        let mut col_idx = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        let mut next = row_ptr.clone();
        for i in 0..self.rows {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[p];
                let q = next[j];
                col_idx[q] = i;
                values[q] = self.values[p];
                next[j] += 1;
            }
        }
        CsrMatrix {
            rows: self.cols,
            cols: self.rows,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Sparse-sparse product `A B`.
    pub fn matmul(&self, other: &CsrMatrix) -> Result<CsrMatrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: other.rows,
            });
        }
        let mut row_ptr = Vec::with_capacity(self.rows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        let mut acc = vec![0.0; other.cols];
        let mut touched: Vec<usize> = Vec::new();
        for i in 0..self.rows {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                let k = self.col_idx[p];
                let a = self.values[p];
                for q in other.row_ptr[k]..other.row_ptr[k + 1] {
                    let j = other.col_idx[q];
                    if acc[j] == 0.0 && !touched.contains(&j) {
                        touched.push(j);
                    }
                    acc[j] += a * other.values[q];
                }
            }
            touched.sort_unstable();
            for &j in &touched {
                col_idx.push(j);
                values.push(acc[j]);
                acc[j] = 0.0;
            }
            touched.clear();
            row_ptr.push(col_idx.len());
        }
        Ok(CsrMatrix {
            rows: self.rows,
            cols: other.cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Largest absolute difference between the matrix and its transpose.
    pub fn max_asymmetry(&self) -> f64 {
        let t = self.transpose();
        let mut worst = 0.0f64;
        for (i, j, v) in self.triplets() {
            worst = worst.max((v - t.get(i, j)).abs());
        }
        for (i, j, v) in t.triplets() {
            worst = worst.max((v - self.get(i, j)).abs());
        }
        worst
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows, self.cols);
        for (i, j, v) in self.triplets() {
            m[(i, j)] += v;
        }
        m
    }

    /// Symmetric LDLᵀ factorization (Cholesky-style, no pivoting).
    ///
    /// All Gram matrices here are SPD by construction, so a non-positive
    /// pivot signals a wrongly assembled matrix and is reported with its
    /// index.
    pub fn factorize(&self) -> Result<Factorization> {
        FACTORIZE_CALLS.with(|c| c.set(c.get() + 1));
        if self.rows != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                got: self.cols,
            });
        }
        let n = self.rows;

        // elimination tree from the strict upper triangle (by symmetry the
        // entries j < k of row k give column k of the upper triangle)
        let mut parent = vec![usize::MAX; n];
        let mut ancestor = vec![usize::MAX; n];
        for k in 0..n {
            for (j, _) in self.row(k) {
                if j >= k {
                    break;
                }
                let mut i = j;
                while i != usize::MAX && i < k {
                    let next = ancestor[i];
                    ancestor[i] = k;
                    if next == usize::MAX {
                        parent[i] = k;
                    }
                    i = next;
                }
            }
        }

        // symbolic pass: count entries per column of L
        let mut lnz = vec![0usize; n];
        let mut flag = vec![usize::MAX; n];
        for k in 0..n {
            flag[k] = k;
            for (j, _) in self.row(k) {
                if j >= k {
                    break;
                }
                let mut i = j;
                while flag[i] != k {
                    lnz[i] += 1;
                    flag[i] = k;
                    i = parent[i];
                }
            }
        }

        let mut col_ptr = vec![0usize; n + 1];
        for i in 0..n {
            col_ptr[i + 1] = col_ptr[i] + lnz[i];
        }
        let total = col_ptr[n];
        let mut row_idx = vec![0usize; total];
        let mut lx = vec![0.0f64; total];
        let mut d = vec![0.0f64; n];
        let mut fill = vec![0usize; n];

        // numeric pass (up-looking)
        let mut y = vec![0.0f64; n];
        let mut pattern = vec![0usize; n];
        let mut stack = vec![0usize; n];
        for f in &mut flag {
            *f = usize::MAX;
        }
        for k in 0..n {
            let mut top = n;
            flag[k] = k;
            let mut dk = 0.0;
            for (j, v) in self.row(k) {
                if j > k {
                    break;
                }
                if j == k {
                    dk = v;
                    continue;
                }
                y[j] += v;
                let mut len = 0;
                let mut i = j;
                while flag[i] != k {
                    stack[len] = i;
                    len += 1;
                    flag[i] = k;
                    i = parent[i];
                }
                while len > 0 {
                    len -= 1;
                    top -= 1;
                    pattern[top] = stack[len];
                }
            }
            d[k] = dk;
            for s in top..n {
                let i = pattern[s];
                let yi = y[i];
                y[i] = 0.0;
                let p2 = col_ptr[i] + fill[i];
                for p in col_ptr[i]..p2 {
                    y[row_idx[p]] -= lx[p] * yi;
                }
                let lki = yi / d[i];
                d[k] -= lki * yi;
                row_idx[p2] = k;
                lx[p2] = lki;
                fill[i] += 1;
            }
            if d[k] <= 0.0 || !d[k].is_finite() {
                return Err(Error::NonPositivePivot {
                    index: k,
                    value: d[k],
                });
            }
        }

        Ok(Factorization {
            n,
            col_ptr,
            row_idx,
            lx,
            d,
        })
    }
}

/// Reusable `A = L D Lᵀ` factorization of a symmetric positive definite
/// matrix (`L` unit lower triangular, stored by columns).
#[derive(Debug, Clone)]
pub struct Factorization {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
}

impl Factorization {
    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Stored entries of `L` below the unit diagonal.
    pub fn factor_nnz(&self) -> usize {
        self.row_idx.len()
    }

    /// Solve `A x = b` by forward substitution, diagonal scaling and backward
    /// substitution. No refactorization happens here.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: b.len(),
            });
        }
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        Ok(x)
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        for j in 0..self.n {
            let xj = x[j];
            if xj != 0.0 {
                for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                    x[self.row_idx[p]] -= self.lx[p] * xj;
                }
            }
        }
        for j in 0..self.n {
            x[j] /= self.d[j];
        }
        for j in (0..self.n).rev() {
            let mut acc = x[j];
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                acc -= self.lx[p] * x[self.row_idx[p]];
            }
            x[j] = acc;
        }
    }
}

/// Write in Matrix Market coordinate format with 17 significant digits.
pub fn write_matrix_market<W: Write>(matrix: &CsrMatrix, mut out: W) -> Result<()> {
    writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(out, "{} {} {}", matrix.nrows(), matrix.ncols(), matrix.nnz())?;
    for (i, j, v) in matrix.triplets() {
        writeln!(out, "{} {} {:.16e}", i + 1, j + 1, v)?;
    }
    Ok(())
}

pub fn write_matrix_market_file(matrix: &CsrMatrix, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_matrix_market(matrix, std::io::BufWriter::new(file))
}

/// Read a real coordinate-format Matrix Market matrix.
pub fn read_matrix_market<R: BufRead>(reader: R) -> Result<CsrMatrix> {
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::MatrixMarket("empty file".into()))??;
    let lower = header.to_ascii_lowercase();
    if !lower.starts_with("%%matrixmarket matrix coordinate real") {
        return Err(Error::MatrixMarket(format!(
            "unsupported header: {header}"
        )));
    }
    let symmetric = lower.contains("symmetric");
    let mut size_line = None;
    for line in lines.by_ref() {
        let line = line?;
        if line.starts_with('%') || line.trim().is_empty() {
            continue;
        }
        size_line = Some(line);
        break;
    }
    let size_line = size_line.ok_or_else(|| Error::MatrixMarket("missing size line".into()))?;
    let dims: Vec<usize> = size_line
        .split_whitespace()
        .map(|t| {
            t.parse::<usize>()
                .map_err(|_| Error::MatrixMarket(format!("bad size token '{t}'")))
        })
        .collect::<Result<_>>()?;
    if dims.len() != 3 {
        return Err(Error::MatrixMarket("size line needs 3 fields".into()));
    }
    let (rows, cols, nnz) = (dims[0], dims[1], dims[2]);
    let mut triplets = Vec::with_capacity(nnz);
    for line in lines {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let mut it = line.split_whitespace();
        let parse_idx = |t: Option<&str>| -> Result<usize> {
            t.and_then(|s| s.parse::<usize>().ok())
                .ok_or_else(|| Error::MatrixMarket(format!("bad entry line '{line}'")))
        };
        let i = parse_idx(it.next())?;
        let j = parse_idx(it.next())?;
        let v: f64 = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::MatrixMarket(format!("bad entry line '{line}'")))?;
        if i == 0 || j == 0 {
            return Err(Error::MatrixMarket("indices are 1-based".into()));
        }
        triplets.push((i - 1, j - 1, v));
        if symmetric && i != j {
            triplets.push((j - 1, i - 1, v));
        }
    }
    CsrMatrix::from_triplets(rows, cols, &triplets)
}

pub fn read_matrix_market_file(path: &Path) -> Result<CsrMatrix> {
    let file = std::fs::File::open(path)?;
    read_matrix_market(std::io::BufReader::new(file))
}

/// `k` smallest eigenvalues of `R v = λ G v` for dense symmetric `R`
/// (positive semidefinite) and SPD `G`, ascending. Values in `[-1e-10, 0)`
/// are clipped to zero.
pub fn generalized_eig_smallest(r: &DMatrix<f64>, g: &DMatrix<f64>, k: usize) -> Result<Vec<f64>> {
    Ok(generalized_eig_smallest_pairs(r, g, k)?
        .into_iter()
        .map(|(v, _)| v)
        .collect())
}

/// Like [`generalized_eig_smallest`] but also returns eigenvectors of the
/// original pencil (columns `v` with `R v = λ G v`).
pub fn generalized_eig_smallest_pairs(
    r: &DMatrix<f64>,
    g: &DMatrix<f64>,
    k: usize,
) -> Result<Vec<(f64, DVector<f64>)>> {
    if r.nrows() != r.ncols() || g.nrows() != g.ncols() || r.nrows() != g.nrows() {
        return Err(Error::DimensionMismatch {
            expected: g.nrows(),
            got: r.nrows(),
        });
    }
    let chol = Cholesky::new(g.clone())
        .ok_or_else(|| Error::NotSpd("Cholesky of the right-hand Gram failed".into()))?;
    let l = chol.l();
    // C = L⁻¹ R L⁻ᵀ, symmetrized against round-off
    let x = l
        .solve_lower_triangular(r)
        .ok_or_else(|| Error::EigenFailure("singular triangular factor".into()))?;
    let c_t = l
        .solve_lower_triangular(&x.transpose())
        .ok_or_else(|| Error::EigenFailure("singular triangular factor".into()))?;
    let c = (&c_t + c_t.transpose()) * 0.5;
    let eig = c.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .expect("finite eigenvalues")
    });
    let lt = l.transpose();
    let mut out = Vec::with_capacity(k.min(order.len()));
    for &idx in order.iter().take(k) {
        let mut lambda = eig.eigenvalues[idx];
        if lambda < 0.0 && lambda >= -1e-10 {
            lambda = 0.0;
        }
        let y = eig.eigenvectors.column(idx).into_owned();
        let v = lt
            .solve_upper_triangular(&y)
            .ok_or_else(|| Error::EigenFailure("singular triangular factor".into()))?;
        out.push((lambda, v));
    }
    Ok(out)
}
