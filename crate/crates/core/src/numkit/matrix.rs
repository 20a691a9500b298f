use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim("matrix data length", rows * cols, data.len()));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equally sized rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::dim("matrix row length", cols, r.len()));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// A single-row matrix.
    pub fn row_vector(values: &[f64]) -> Self {
        Self {
            rows: 1,
            cols: values.len(),
            data: values.to_vec(),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::dim("matmul inner dimension", self.cols, other.rows));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (p, &x) in self.row(i).iter().enumerate() {
                if x != 0.0 {
                    axpy(x, other.row(p), out_row);
                }
            }
        }
        Ok(out)
    }

    /// Columns `start..end` as a new matrix.
    pub fn columns(&self, start: usize, end: usize) -> Matrix {
        assert!(start <= end && end <= self.cols, "column range out of bounds");
        let width = end - start;
        let mut out = Matrix::zeros(self.rows, width);
        for r in 0..self.rows {
            out.row_mut(r).copy_from_slice(&self.row(r)[start..end]);
        }
        out
    }

    /// Concatenates matrices with equal row counts side by side.
    pub fn hconcat(parts: &[&Matrix]) -> Result<Matrix> {
        let rows = parts.first().map_or(0, |m| m.rows);
        let mut cols = 0;
        for m in parts {
            if m.rows != rows {
                return Err(Error::dim("hconcat row count", rows, m.rows));
            }
            cols += m.cols;
        }
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let dst = out.row_mut(r);
            let mut offset = 0;
            for m in parts {
                dst[offset..offset + m.cols].copy_from_slice(m.row(r));
                offset += m.cols;
            }
        }
        Ok(out)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// `y += a * x`
#[inline]
pub(crate) fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `x · w + b` for a batch `x` (B×k), weights `w` (k×n) and bias `b` (n).
pub(crate) fn affine(x: &Matrix, w: &Matrix, b: &[f64]) -> Matrix {
    debug_assert_eq!(x.cols(), w.rows());
    debug_assert_eq!(w.cols(), b.len());
    let n = w.cols();
    let mut out = Matrix::zeros(x.rows(), n);
    for i in 0..x.rows() {
        let out_row = out.row_mut(i);
        out_row.copy_from_slice(b);
        for (p, &xv) in x.row(i).iter().enumerate() {
            if xv != 0.0 {
                axpy(xv, w.row(p), out_row);
            }
        }
    }
    out
}

/// Backward pass of [`affine`]: accumulates `dw += xᵀ g`, `db += Σ g`
/// and returns `g · wᵀ`.
pub(crate) fn affine_backward(
    x: &Matrix,
    w: &Matrix,
    g: &Matrix,
    dw: Option<(&mut Matrix, &mut [f64])>,
) -> Matrix {
    if let Some((dw, db)) = dw {
        for i in 0..x.rows() {
            let g_row = g.row(i);
            axpy(1.0, g_row, db);
            for (p, &xv) in x.row(i).iter().enumerate() {
                if xv != 0.0 {
                    axpy(xv, g_row, dw.row_mut(p));
                }
            }
        }
    }
    let mut dx = Matrix::zeros(x.rows(), x.cols());
    for i in 0..x.rows() {
        let g_row = g.row(i);
        let dx_row = dx.row_mut(i);
        for (p, d) in dx_row.iter_mut().enumerate() {
            *d = dot(g_row, w.row(p));
        }
    }
    dx
}
