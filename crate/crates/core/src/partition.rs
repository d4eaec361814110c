//! Block grids for `A: (xP) x (zS)` and `B: (zS) x (yQ)`, and the
//! flattening of block products into coefficient rows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::matrix::Matrix;

/// Partition type `(x, y, z)` with per-block sizes `P x S` for `A` and
/// `S x Q` for `B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockPartition {
    pub x: usize,
    pub y: usize,
    pub z: usize,
    pub p: usize,
    pub s: usize,
    pub q: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `A`, split into `x` block-rows and `z` block-columns.
    A,
    /// `B`, split into `z` block-rows and `y` block-columns.
    B,
}

impl BlockPartition {
    pub fn new(x: usize, y: usize, z: usize, p: usize, s: usize, q: usize) -> Result<Self> {
        if [x, y, z, p, s, q].contains(&0) {
            return Err(Error::InvalidParameter(format!(
                "partition dimensions must be positive, got (x,y,z)=({x},{y},{z}) blocks ({p},{s},{q})"
            )));
        }
        Ok(Self { x, y, z, p, s, q })
    }

    /// Infer block sizes from the operand shapes.
    pub fn for_shapes(x: usize, y: usize, z: usize, a: (usize, usize), b: (usize, usize)) -> Result<Self> {
        if a.1 != b.0 {
            return Err(Error::Shape(format!("inner dimensions differ: {} vs {}", a.1, b.0)));
        }
        if x == 0 || y == 0 || z == 0 || a.0 % x != 0 || a.1 % z != 0 || b.1 % y != 0 {
            return Err(Error::Shape(format!(
                "A {}x{} / B {}x{} not divisible by (x,y,z)=({x},{y},{z})",
                a.0, a.1, b.0, b.1
            )));
        }
        Self::new(x, y, z, a.0 / x, a.1 / z, b.1 / y)
    }

    pub fn a_shape(&self) -> (usize, usize) {
        (self.x * self.p, self.z * self.s)
    }

    pub fn b_shape(&self) -> (usize, usize) {
        (self.z * self.s, self.y * self.q)
    }

    pub fn c_shape(&self) -> (usize, usize) {
        (self.x * self.p, self.y * self.q)
    }

    /// Grid dimensions `(block rows, block cols, block height, block width)`.
    fn grid(&self, side: Side) -> (usize, usize, usize, usize) {
        match side {
            Side::A => (self.x, self.z, self.p, self.s),
            Side::B => (self.z, self.y, self.s, self.q),
        }
    }
}

/// Blocks of one operand, row-major over the block grid: `A_{i,k}` sits at
/// `i * z + k`, `B_{k,j}` at `k * y + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockGrid<F: Field> {
    pub partition: BlockPartition,
    pub side: Side,
    pub blocks: Vec<Matrix<F>>,
}

impl<F: Field> BlockGrid<F> {
    pub fn block_rows(&self) -> usize {
        self.partition.grid(self.side).0
    }

    pub fn block_cols(&self) -> usize {
        self.partition.grid(self.side).1
    }

    pub fn get(&self, r: usize, c: usize) -> &Matrix<F> {
        &self.blocks[r * self.block_cols() + c]
    }

    /// Inverse of [`split`].
    pub fn reassemble(&self) -> Matrix<F> {
        let (gr, gc, h, w) = self.partition.grid(self.side);
        let field = self.blocks[0].field();
        let mut out = Matrix::zeros(field, gr * h, gc * w);
        for r in 0..gr {
            for c in 0..gc {
                out.set_block(r * h, c * w, self.get(r, c));
            }
        }
        out
    }
}

pub fn split<F: Field>(m: &Matrix<F>, side: Side, partition: BlockPartition) -> Result<BlockGrid<F>> {
    let expected = match side {
        Side::A => partition.a_shape(),
        Side::B => partition.b_shape(),
    };
    if m.shape() != expected {
        return Err(Error::Shape(format!(
            "{side:?} is {}x{}, partition expects {}x{}",
            m.rows(),
            m.cols(),
            expected.0,
            expected.1
        )));
    }
    let (gr, gc, h, w) = partition.grid(side);
    let mut blocks = Vec::with_capacity(gr * gc);
    for r in 0..gr {
        for c in 0..gc {
            blocks.push(m.block(r * h, c * w, h, w));
        }
    }
    Ok(BlockGrid { partition, side, blocks })
}

/// Split `m` into `parts` equal horizontal strips (top to bottom).
pub fn row_strips<F: Field>(m: &Matrix<F>, parts: usize) -> Result<Vec<Matrix<F>>> {
    if parts == 0 || m.rows() % parts != 0 {
        return Err(Error::Shape(format!("{} rows not divisible into {parts} strips", m.rows())));
    }
    let h = m.rows() / parts;
    Ok((0..parts).map(|i| m.block(i * h, 0, h, m.cols())).collect())
}

/// Split `m` into `parts` equal vertical strips (left to right).
pub fn col_strips<F: Field>(m: &Matrix<F>, parts: usize) -> Result<Vec<Matrix<F>>> {
    if parts == 0 || m.cols() % parts != 0 {
        return Err(Error::Shape(format!("{} cols not divisible into {parts} strips", m.cols())));
    }
    let w = m.cols() / parts;
    Ok((0..parts).map(|j| m.block(0, j * w, m.rows(), w)).collect())
}

/// Stack `x * y` equally shaped blocks into one matrix, block `(i, j)` at
/// block position `(i, j)`. `blocks` is in `(i, j)` lexicographic order.
pub fn assemble<F: Field>(blocks: &[Matrix<F>], x: usize, y: usize) -> Result<Matrix<F>> {
    if blocks.len() != x * y || blocks.is_empty() {
        return Err(Error::Shape(format!("{} blocks for a {x}x{y} grid", blocks.len())));
    }
    let (h, w) = blocks[0].shape();
    if blocks.iter().any(|b| b.shape() != (h, w)) {
        return Err(Error::Shape("ragged blocks".into()));
    }
    let mut out = Matrix::zeros(blocks[0].field(), x * h, y * w);
    for i in 0..x {
        for j in 0..y {
            out.set_block(i * h, j * w, &blocks[i * y + j]);
        }
    }
    Ok(out)
}

/// One row per block, each row the block's row-major vectorization.
/// Row order is the order of `blocks`, which callers keep `(i, j)`
/// lexicographic to match the columns of `G_C`.
pub fn flatten_products<F: Field>(blocks: &[Matrix<F>]) -> Result<Matrix<F>> {
    let first = blocks.first().ok_or_else(|| Error::Shape("no blocks to flatten".into()))?;
    let (h, w) = first.shape();
    if blocks.iter().any(|b| b.shape() != (h, w)) {
        return Err(Error::Shape("ragged blocks".into()));
    }
    let mut data = Vec::with_capacity(blocks.len() * h * w);
    for b in blocks {
        data.extend_from_slice(b.data());
    }
    Matrix::new(first.field(), blocks.len(), h * w, data)
}

/// Inverse of [`flatten_products`] for blocks of shape `height x width`.
pub fn unflatten_products<F: Field>(flat: &Matrix<F>, height: usize, width: usize) -> Result<Vec<Matrix<F>>> {
    if flat.cols() != height * width {
        return Err(Error::Shape(format!(
            "row length {} does not match {height}x{width} blocks",
            flat.cols()
        )));
    }
    (0..flat.rows())
        .map(|r| Matrix::new(flat.field(), height, width, flat.row(r).to_vec()))
        .collect()
}

/// `C_{i,j} = sum_k A_{i,k} B_{k,j}` computed block by block.
pub fn block_product<F: Field>(a: &BlockGrid<F>, b: &BlockGrid<F>) -> Result<Vec<Matrix<F>>> {
    if a.side != Side::A || b.side != Side::B || a.partition != b.partition {
        return Err(Error::Shape("block grids do not belong to one partition".into()));
    }
    let BlockPartition { x, y, z, .. } = a.partition;
    let mut out = Vec::with_capacity(x * y);
    for i in 0..x {
        for j in 0..y {
            let mut acc = a.get(i, 0).matmul(b.get(0, j));
            for k in 1..z {
                acc = acc.add(&a.get(i, k).matmul(b.get(k, j)));
            }
            out.push(acc);
        }
    }
    Ok(out)
}
