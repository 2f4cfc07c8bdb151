//! Dense row-major matrix carrier plus the handful of kernels everything
//! else is built from.
//!
//! Everything is f64: the verification strategy leans on central finite
//! differences at h = 1e-6, which needs more precision headroom than f32
//! offers. Every kernel fixes its summation order, so results are
//! bit-reproducible from run to run on the same build.

use crate::error::{Error, Result};

/// How the entries of one sample row are to be interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    /// A flat feature vector of the given length.
    Flat(usize),
    /// A channels × height × width image, stored channel-major within a row.
    Image {
        channels: usize,
        height: usize,
        width: usize,
    },
}

impl Shape {
    /// Number of scalar entries a sample of this shape occupies.
    pub fn len(&self) -> usize {
        match *self {
            Shape::Flat(d) => d,
            Shape::Image {
                channels,
                height,
                width,
            } => channels * height * width,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            Shape::Flat(d) => write!(f, "flat({d})"),
            Shape::Image {
                channels,
                height,
                width,
            } => write!(f, "{channels}x{height}x{width}"),
        }
    }
}

/// Dense row-major matrix of f64.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from an existing row-major buffer. Rejects length
    /// mismatches and non-finite entries up front so they cannot propagate.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Matrix> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "Matrix::new",
                format!("{rows}x{cols}"),
                format!("buffer of {}", data.len()),
            ));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "matrix entries must be finite, got {v}"
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Convenience constructor for hand-written fixtures.
    pub fn from_rows(rows: &[Vec<f64>]) -> Matrix {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        assert!(
            rows.iter().all(|row| row.len() == c),
            "ragged rows in Matrix::from_rows"
        );
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            data.extend_from_slice(row);
        }
        Matrix { rows: r, cols: c, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// Standard matrix product. For each output entry the sum over the inner
    /// index runs left to right, matching the naive triple loop bit for bit;
    /// the loop nest is merely reordered (i-k-j) so the inner update is a
    /// contiguous fused multiply-add the compiler can vectorize.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::shape(
                "matmul",
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", other.rows, other.cols),
            ));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        let n = other.cols;
        for i in 0..self.rows {
            let a_row = self.row(i);
            let out_row = &mut out.data[i * n..(i + 1) * n];
            for (k, &aik) in a_row.iter().enumerate() {
                let b_row = &other.data[k * n..(k + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += aik * b;
                }
            }
        }
        Ok(out)
    }

    /// Per-row sums.
    pub fn row_sums(&self) -> Result<Vec<f64>> {
        self.check_nonempty("row_sums")?;
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().sum())
            .collect())
    }

    /// Per-row arithmetic means.
    pub fn row_means(&self) -> Result<Vec<f64>> {
        let sums = self.row_sums()?;
        let n = self.cols as f64;
        Ok(sums.into_iter().map(|s| s / n).collect())
    }

    /// Per-row maxima.
    pub fn row_maxes(&self) -> Result<Vec<f64>> {
        self.check_nonempty("row_maxes")?;
        Ok((0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .copied()
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect())
    }

    /// Per-row index of the maximum entry; ties go to the lowest column index.
    pub fn row_argmaxes(&self) -> Result<Vec<usize>> {
        self.check_nonempty("row_argmaxes")?;
        Ok((0..self.rows)
            .map(|i| {
                let row = self.row(i);
                let mut best = 0;
                for (j, &v) in row.iter().enumerate().skip(1) {
                    if v > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect())
    }

    fn check_nonempty(&self, op: &'static str) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::shape(
                op,
                format!("{}x{}", self.rows, self.cols),
                "non-empty matrix".to_string(),
            ));
        }
        Ok(())
    }
}

/// alpha·x + y, elementwise, as a new matrix.
pub fn axpy(alpha: f64, x: &Matrix, y: &Matrix) -> Result<Matrix> {
    if x.rows != y.rows || x.cols != y.cols {
        return Err(Error::shape(
            "axpy",
            format!("{}x{}", x.rows, x.cols),
            format!("{}x{}", y.rows, y.cols),
        ));
    }
    let data = x
        .data
        .iter()
        .zip(&y.data)
        .map(|(&a, &b)| alpha * a + b)
        .collect();
    Ok(Matrix {
        rows: x.rows,
        cols: x.cols,
        data,
    })
}

/// Dot product with eight running accumulators. The split gives the compiler
/// a reassociation-free vectorizable form while keeping the summation order
/// fixed (and therefore reproducible).
#[inline]
pub(crate) fn dot_unrolled(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let chunks = a.len() / 8;
    for i in 0..chunks {
        let a8 = &a[i * 8..i * 8 + 8];
        let b8 = &b[i * 8..i * 8 + 8];
        for lane in 0..8 {
            acc[lane] += a8[lane] * b8[lane];
        }
    }
    let mut tail = 0.0;
    for i in chunks * 8..a.len() {
        tail += a[i] * b[i];
    }
    let half = [acc[0] + acc[4], acc[1] + acc[5], acc[2] + acc[6], acc[3] + acc[7]];
    (half[0] + half[2]) + (half[1] + half[3]) + tail
}

/// aᵀ·b without materializing the transpose: (k×m) from a (n×k) and b (n×m).
/// Inner loop is the same contiguous fused multiply-add as `matmul`.
pub(crate) fn matmul_tn(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows != b.rows {
        return Err(Error::shape(
            "matmul_tn",
            format!("{}x{}", a.rows, a.cols),
            format!("{}x{}", b.rows, b.cols),
        ));
    }
    let mut out = Matrix::zeros(a.cols, b.cols);
    let m = b.cols;
    for n in 0..a.rows {
        let a_row = a.row(n);
        let b_row = b.row(n);
        for (k, &ank) in a_row.iter().enumerate() {
            let out_row = &mut out.data[k * m..(k + 1) * m];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += ank * bv;
            }
        }
    }
    Ok(out)
}

/// a·bᵀ without materializing the transpose: (n×p) from a (n×k) and b (p×k).
pub(crate) fn matmul_nt(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.cols {
        return Err(Error::shape(
            "matmul_nt",
            format!("{}x{}", a.rows, a.cols),
            format!("{}x{}", b.rows, b.cols),
        ));
    }
    let mut out = Matrix::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        let a_row = a.row(i);
        let out_row = out.row_mut(i);
        for (j, o) in out_row.iter_mut().enumerate() {
            *o = dot_unrolled(a_row, b.row(j));
        }
    }
    Ok(out)
}
