//! Dense row-major matrices over a [`Field`] and the elimination routines
//! every decoder in the crate shares.

use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};
use crate::field::{Field, PrimeField, Reals};

#[derive(Clone, PartialEq)]
pub struct Matrix<F: Field> {
    field: F,
    rows: usize,
    cols: usize,
    data: Vec<F::Elem>,
}

impl<F: Field> fmt::Debug for Matrix<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix<{:?}> {}x{}", self.field, self.rows, self.cols)?;
        for r in 0..self.rows.min(8) {
            writeln!(f, "  {:?}", &self.row(r)[..self.cols.min(8)])?;
        }
        Ok(())
    }
}

/// The system has no unique solution: rank fell short of the unknown count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("singular system (rank {rank} < {needed})")]
pub struct Singular {
    pub rank: usize,
    pub needed: usize,
}

impl<F: Field> Matrix<F> {
    pub fn new(field: F, rows: usize, cols: usize, data: Vec<F::Elem>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { field, rows, cols, data })
    }

    pub fn zeros(field: F, rows: usize, cols: usize) -> Self {
        Self { field, rows, cols, data: vec![field.zero(); rows * cols] }
    }

    pub fn identity(field: F, n: usize) -> Self {
        let mut m = Self::zeros(field, n, n);
        for i in 0..n {
            m.set(i, i, field.one());
        }
        m
    }

    pub fn from_fn(field: F, rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> F::Elem) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { field, rows, cols, data }
    }

    /// Integer entries, reduced into the field.
    pub fn from_i64(field: F, rows: usize, cols: usize, values: &[i64]) -> Result<Self> {
        Self::new(field, rows, cols, values.iter().map(|&v| field.from_i64(v)).collect())
    }

    /// Uniform entries over `F_q`, standard normal entries over the reals.
    pub fn random<R: Rng + ?Sized>(field: F, rows: usize, cols: usize, rng: &mut R) -> Self {
        let data = (0..rows * cols).map(|_| field.random(rng)).collect();
        Self { field, rows, cols, data }
    }

    pub fn field(&self) -> F {
        self.field
    }
    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
    pub fn data(&self) -> &[F::Elem] {
        &self.data
    }
    pub fn into_data(self) -> Vec<F::Elem> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> F::Elem {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: F::Elem) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[F::Elem] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [F::Elem] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Matrix product. Panics on incompatible shapes.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(
            self.cols, other.rows,
            "matmul shape mismatch: {}x{} * {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let f = self.field;
        let mut out = Self::zeros(f, self.rows, other.cols);
        for r in 0..self.rows {
            let dst = &mut out.data[r * other.cols..(r + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.get(r, k);
                if f.is_zero(a) {
                    continue;
                }
                f.axpy(dst, a, other.row(k));
            }
        }
        out
    }

    fn assert_same_shape(&self, other: &Self) {
        assert_eq!(self.shape(), other.shape(), "elementwise shape mismatch");
    }

    pub fn add(&self, other: &Self) -> Self {
        self.assert_same_shape(other);
        let f = self.field;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f.add(a, b)).collect();
        Self { data, ..*self }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.assert_same_shape(other);
        let f = self.field;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f.sub(a, b)).collect();
        Self { data, ..*self }
    }

    pub fn scale(&self, factor: F::Elem) -> Self {
        let mut out = self.clone();
        self.field.scale_slice(&mut out.data, factor);
        out
    }

    /// `self += factor * other`.
    pub fn add_scaled(&mut self, factor: F::Elem, other: &Self) {
        self.assert_same_shape(other);
        self.field.axpy(&mut self.data, factor, &other.data);
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.field, self.cols, self.rows, |r, c| self.get(c, r))
    }

    /// Copy of the `height x width` window starting at `(r0, c0)`.
    pub fn block(&self, r0: usize, c0: usize, height: usize, width: usize) -> Self {
        assert!(r0 + height <= self.rows && c0 + width <= self.cols, "block out of range");
        let mut data = Vec::with_capacity(height * width);
        for r in r0..r0 + height {
            data.extend_from_slice(&self.row(r)[c0..c0 + width]);
        }
        Self { field: self.field, rows: height, cols: width, data }
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, block: &Self) {
        assert!(r0 + block.rows <= self.rows && c0 + block.cols <= self.cols, "block out of range");
        for r in 0..block.rows {
            let start = (r0 + r) * self.cols + c0;
            self.data[start..start + block.cols].copy_from_slice(block.row(r));
        }
    }

    /// Rows `indices` in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self { field: self.field, rows: indices.len(), cols: self.cols, data }
    }

    /// Reshape without moving data.
    pub fn reshape(self, rows: usize, cols: usize) -> Result<Self> {
        Self::new(self.field, rows, cols, self.data)
    }

    fn max_magnitude(&self) -> f64 {
        self.data.iter().map(|&v| self.field.magnitude(v)).fold(0.0, f64::max)
    }

    /// Row rank by elimination. Real mode treats pivots at or below
    /// `1e-10` times the largest entry as zero.
    pub fn rank(&self) -> usize {
        let scale = self.max_magnitude();
        if scale == 0.0 {
            return 0;
        }
        let mut work = self.clone();
        eliminate(&mut work, self.cols, scale).len()
    }

    /// Solve `self * X = rhs` for square `self`.
    ///
    /// Exact in finite mode. Real mode uses partial pivoting and reports
    /// [`Singular`] when a pivot falls under the relative tolerance.
    pub fn solve(&self, rhs: &Self) -> std::result::Result<Self, Singular> {
        self.solve_scaled(rhs, self.max_magnitude())
    }

    /// [`solve`](Self::solve) without the relative pivot tolerance: only an
    /// exactly zero pivot counts as singular. For measuring how badly an
    /// ill-conditioned real system decodes.
    pub fn solve_unguarded(&self, rhs: &Self) -> std::result::Result<Self, Singular> {
        self.solve_scaled(rhs, 0.0)
    }

    fn solve_scaled(&self, rhs: &Self, scale: f64) -> std::result::Result<Self, Singular> {
        assert_eq!(self.rows, self.cols, "solve needs a square system");
        assert_eq!(self.rows, rhs.rows, "solve: right-hand side has wrong row count");
        let n = self.rows;
        let f = self.field;
        if n == 0 {
            return Ok(rhs.clone());
        }
        if self.max_magnitude() == 0.0 {
            return Err(Singular { rank: 0, needed: n });
        }
        // Augmented [G | RHS].
        let width = n + rhs.cols;
        let mut aug = Self::from_fn(f, n, width, |r, c| if c < n { self.get(r, c) } else { rhs.get(r, c - n) });
        let pivots = eliminate(&mut aug, n, scale);
        if pivots.len() < n {
            return Err(Singular { rank: pivots.len(), needed: n });
        }
        // Back substitution on the upper-triangular system.
        for col in (0..n).rev() {
            let inv = f.inv(aug.get(col, col)).expect("nonzero pivot");
            f.scale_slice(aug.row_mut(col), inv);
            let pivot_row = aug.row(col).to_vec();
            for r in 0..col {
                let factor = aug.get(r, col);
                if !f.is_zero(factor) {
                    f.axpy(aug.row_mut(r), f.neg(factor), &pivot_row);
                }
            }
        }
        Ok(Self::from_fn(f, n, rhs.cols, |r, c| aug.get(r, n + c)))
    }

    /// Inverse of a square matrix.
    pub fn inverse(&self) -> std::result::Result<Self, Singular> {
        self.solve(&Self::identity(self.field, self.rows))
    }

    /// Ratio of the largest to the smallest pivot magnitude met by partial
    /// pivoting, with no tolerance applied. Cheap proxy for the condition
    /// number; infinite for exactly singular input.
    pub fn pivot_ratio(&self) -> f64 {
        let f = self.field;
        let mut work = self.clone();
        let n = self.rows.min(self.cols);
        let (mut largest, mut smallest) = (0.0f64, f64::INFINITY);
        for col in 0..n {
            let (best, mag) = (col..self.rows)
                .map(|r| (r, f.magnitude(work.get(r, col))))
                .fold((col, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if mag == 0.0 {
                return f64::INFINITY;
            }
            largest = largest.max(mag);
            smallest = smallest.min(mag);
            work.swap_rows(col, best);
            let inv = f.inv(work.get(col, col)).expect("nonzero pivot");
            let pivot_row = work.row(col).to_vec();
            for r in col + 1..self.rows {
                let factor = f.mul(work.get(r, col), inv);
                if !f.is_zero(factor) {
                    f.axpy(work.row_mut(r), f.neg(factor), &pivot_row);
                }
            }
        }
        largest / smallest
    }

    pub fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        let cols = self.cols;
        let (lo, hi) = (a.min(b), a.max(b));
        let (head, tail) = self.data.split_at_mut(hi * cols);
        head[lo * cols..(lo + 1) * cols].swap_with_slice(&mut tail[..cols]);
    }
}

/// Forward elimination with partial pivoting over the first `pivot_cols`
/// columns. Leaves `m` in row-echelon form (pivot rows on top, in column
/// order) and returns the pivot columns.
fn eliminate<F: Field>(m: &mut Matrix<F>, pivot_cols: usize, scale: f64) -> Vec<usize> {
    let f = m.field;
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..pivot_cols {
        if row == m.rows {
            break;
        }
        let (best, _) = (row..m.rows)
            .map(|r| (r, f.magnitude(m.get(r, col))))
            .fold((row, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if f.is_zero(m.get(best, col)) || f.negligible(m.get(best, col), scale) {
            continue;
        }
        m.swap_rows(row, best);
        let inv = f.inv(m.get(row, col)).expect("non-negligible pivot");
        let pivot_row = m.row(row).to_vec();
        for r in row + 1..m.rows {
            let factor = f.mul(m.get(r, col), inv);
            if !f.is_zero(factor) {
                f.axpy(m.row_mut(r), f.neg(factor), &pivot_row);
            }
        }
        pivots.push(col);
        row += 1;
    }
    pivots
}

impl Matrix<Reals> {
    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `||self - other||_F / ||other||_F`; plain difference norm when
    /// `other` is zero.
    pub fn relative_error(&self, other: &Self) -> f64 {
        let diff = self.sub(other).frobenius_norm();
        let reference = other.frobenius_norm();
        if reference == 0.0 {
            diff
        } else {
            diff / reference
        }
    }
}

/// Rank of a `rows x cols` row-major matrix over `F_q` by batch
/// elimination. When `cols * q^2` fits in 64 bits, row updates skip the
/// modular reduction and entries are reduced only when read as pivots or
/// factors.
pub fn rank_mod_prime(field: PrimeField, rows: usize, cols: usize, mut data: Vec<u64>) -> usize {
    assert_eq!(data.len(), rows * cols, "data length");
    let q = field.modulus();
    let lazy = (q as u128) * (q as u128) * (cols as u128 + 1) < (1u128 << 64);
    // Pivot rows are reduced, so they fit in 32 bits (q < 2^32).
    let mut pivot_row = vec![0u32; cols];
    let mut rank = 0;
    for col in 0..cols {
        if rank == rows {
            break;
        }
        let found = (rank..rows).find(|&r| {
            let v = &mut data[r * cols + col];
            *v %= q;
            *v != 0
        });
        let Some(p) = found else { continue };
        if p != rank {
            for j in col..cols {
                data.swap(p * cols + j, rank * cols + j);
            }
        }
        let inv = field.inv(data[rank * cols + col]).expect("nonzero pivot");
        for j in col..cols {
            pivot_row[j] = field.mul(data[rank * cols + j] % q, inv) as u32;
        }
        for r in rank + 1..rows {
            let row = &mut data[r * cols..(r + 1) * cols];
            let f = row[col] % q;
            if f == 0 {
                continue;
            }
            let g = (q - f) as u32;
            if lazy {
                for (d, &s) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                    *d += u64::from(g) * u64::from(s);
                }
            } else {
                for (d, &s) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                    *d = field.add(*d % q, field.mul(u64::from(g), u64::from(s)));
                }
            }
        }
        rank += 1;
    }
    rank
}

/// Incrementally built row-echelon basis.
///
/// Decoders feed it coefficient rows as worker results arrive and keep
/// only the rows that raise the rank; the kept rows always form a
/// full-rank set.
#[derive(Debug, Clone)]
pub struct RowEchelon<F: Field> {
    field: F,
    width: usize,
    // (pivot column, reduced row with a unit at the pivot)
    basis: Vec<(usize, Vec<F::Elem>)>,
    scratch: Vec<F::Elem>,
}

impl<F: Field> RowEchelon<F> {
    pub fn new(field: F, width: usize) -> Self {
        Self { field, width, basis: Vec::with_capacity(width), scratch: Vec::with_capacity(width) }
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn is_full(&self) -> bool {
        self.basis.len() == self.width
    }

    /// Add `row` to the span. Returns `true` when it raised the rank.
    pub fn insert(&mut self, row: &[F::Elem]) -> bool {
        assert_eq!(row.len(), self.width, "row width mismatch");
        if self.is_full() {
            return false;
        }
        let f = self.field;
        let scale = row.iter().map(|&v| f.magnitude(v)).fold(0.0, f64::max);
        if scale == 0.0 {
            return false;
        }
        self.scratch.clear();
        self.scratch.extend_from_slice(row);
        for (col, basis_row) in &self.basis {
            let factor = self.scratch[*col];
            if !f.is_zero(factor) {
                f.axpy(&mut self.scratch, f.neg(factor), basis_row);
            }
        }
        let (col, mag) = self
            .scratch
            .iter()
            .enumerate()
            .map(|(c, &v)| (c, f.magnitude(v)))
            .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        // Exact fields report magnitude 1 for every nonzero entry, so this
        // picks the first nonzero column; reals take the largest entry.
        if f.negligible(self.scratch[col], scale) || mag <= 0.0 {
            return false;
        }
        let inv = f.inv(self.scratch[col]).expect("nonzero pivot");
        let mut new_row = std::mem::take(&mut self.scratch);
        f.scale_slice(&mut new_row, inv);
        self.basis.push((col, new_row));
        true
    }
}
