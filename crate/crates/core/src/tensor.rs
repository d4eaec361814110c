//! Bilinear decompositions of block matrix multiplication.
//!
//! A decomposition acts on an outer block grid: `A` is split `x x z`, `B`
//! is split `z x y` and `C` is `x x y`. Term `t` forms one product
//! `E^t_1(A) * E^t_2(B)` of signed block combinations and adds it with
//! signed weights `D_t` into output blocks. Blocks are numbered row-major
//! from 1 in the JSON form (`A1..`, `B1..`, `C1..`) and from 0 in code.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::matrix::Matrix;

/// Signed integer combination of blocks: `Σ weight * blocks[index]`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LinearCombMap {
    weights: Vec<(usize, i64)>,
}

impl LinearCombMap {
    pub fn new(weights: impl IntoIterator<Item = (usize, i64)>) -> Self {
        let mut merged: BTreeMap<usize, i64> = BTreeMap::new();
        for (index, w) in weights {
            *merged.entry(index).or_default() += w;
        }
        Self { weights: merged.into_iter().filter(|&(_, w)| w != 0).collect() }
    }

    pub fn weights(&self) -> &[(usize, i64)] {
        &self.weights
    }

    pub fn weight(&self, index: usize) -> i64 {
        self.weights.iter().find(|(i, _)| *i == index).map_or(0, |&(_, w)| w)
    }

    fn max_index(&self) -> Option<usize> {
        self.weights.iter().map(|&(i, _)| i).max()
    }

    pub fn apply<F: Field>(&self, blocks: &[Matrix<F>]) -> Result<Matrix<F>> {
        let first = blocks.first().ok_or_else(|| Error::Shape("no blocks".into()))?;
        let f = first.field();
        let mut acc = Matrix::zeros(f, first.rows(), first.cols());
        for &(index, w) in &self.weights {
            let block = blocks
                .get(index)
                .ok_or_else(|| Error::Decomposition(format!("block index {index} out of range")))?;
            if block.shape() != first.shape() {
                return Err(Error::Shape("blocks differ in shape".into()));
            }
            acc.add_scaled(f.from_i64(w), block);
        }
        Ok(acc)
    }
}

/// Outer block grid of the multiplication a decomposition computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OuterShape {
    pub x: usize,
    pub y: usize,
    pub z: usize,
}

impl OuterShape {
    pub fn a_blocks(&self) -> usize {
        self.x * self.z
    }
    pub fn b_blocks(&self) -> usize {
        self.z * self.y
    }
    pub fn c_blocks(&self) -> usize {
        self.x * self.y
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecompTerm {
    /// One input map per argument (`E^t_1` acts on `A`, `E^t_2` on `B`).
    pub inputs: Vec<LinearCombMap>,
    /// Output map `D_t`.
    pub output: LinearCombMap,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorDecomposition {
    shape: OuterShape,
    terms: Vec<DecompTerm>,
}

fn term(a: &[(usize, i64)], b: &[(usize, i64)], c: &[(usize, i64)]) -> DecompTerm {
    DecompTerm {
        inputs: vec![LinearCombMap::new(a.iter().copied()), LinearCombMap::new(b.iter().copied())],
        output: LinearCombMap::new(c.iter().copied()),
    }
}

/// Result of [`TensorDecomposition::verify`].
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub passed: bool,
    pub trials: usize,
    /// Finite mode: largest centred residue of any output entry. Real mode:
    /// largest relative Frobenius error over trials.
    pub max_deviation: f64,
    /// Output blocks (0-based) whose integer coefficients are wrong.
    pub mismatched_outputs: Vec<usize>,
    /// Terms (0-based) whose rank-one contribution explains the mismatch.
    pub implicated_terms: Vec<usize>,
}

impl TensorDecomposition {
    pub fn new(shape: OuterShape, terms: Vec<DecompTerm>) -> Result<Self> {
        if shape.x == 0 || shape.y == 0 || shape.z == 0 {
            return Err(Error::Decomposition("outer shape dimensions must be positive".into()));
        }
        if terms.is_empty() {
            return Err(Error::Decomposition("decomposition has no terms".into()));
        }
        for (t, term) in terms.iter().enumerate() {
            if term.inputs.is_empty() {
                return Err(Error::Decomposition(format!("term {} has no input maps", t + 1)));
            }
            let limits = [shape.a_blocks(), shape.b_blocks()];
            for (arg, (map, limit)) in term.inputs.iter().zip(limits).enumerate() {
                if map.max_index().is_some_and(|i| i >= limit) {
                    return Err(Error::Decomposition(format!(
                        "term {} argument {} references a block outside the grid",
                        t + 1,
                        arg + 1
                    )));
                }
            }
            if term.output.max_index().is_some_and(|i| i >= shape.c_blocks()) {
                return Err(Error::Decomposition(format!("term {} writes outside the output grid", t + 1)));
            }
        }
        Ok(Self { shape, terms })
    }

    /// One level of Strassen on a 2x2x2 grid, `A^1..A^4` row-major.
    pub fn strassen() -> Self {
        let terms = vec![
            term(&[(0, 1), (3, 1)], &[(0, 1), (3, 1)], &[(0, 1), (3, 1)]),
            term(&[(2, 1), (3, 1)], &[(0, 1)], &[(2, 1), (3, -1)]),
            term(&[(0, 1)], &[(1, 1), (3, -1)], &[(1, 1), (3, 1)]),
            term(&[(3, 1)], &[(2, 1), (0, -1)], &[(0, 1), (2, 1)]),
            term(&[(0, 1), (1, 1)], &[(3, 1)], &[(0, -1), (1, 1)]),
            term(&[(2, 1), (0, -1)], &[(0, 1), (1, 1)], &[(3, 1)]),
            term(&[(1, 1), (3, -1)], &[(2, 1), (3, 1)], &[(0, 1)]),
        ];
        Self::new(OuterShape { x: 2, y: 2, z: 2 }, terms).expect("static decomposition is well formed")
    }

    /// Schoolbook decomposition: one term per block product `A_{i,k} B_{k,j}`,
    /// ordered `(i, j, k)` lexicographically.
    pub fn trivial(x: usize, y: usize, z: usize) -> Result<Self> {
        let shape = OuterShape { x, y, z };
        let mut terms = Vec::with_capacity(x * y * z);
        for i in 0..x {
            for j in 0..y {
                for k in 0..z {
                    terms.push(term(&[(i * z + k, 1)], &[(k * y + j, 1)], &[(i * y + j, 1)]));
                }
            }
        }
        Self::new(shape, terms)
    }

    pub fn shape(&self) -> OuterShape {
        self.shape
    }

    /// Number of worker multiplications.
    pub fn rank(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> &[DecompTerm] {
        &self.terms
    }

    /// Mutable access for building variants (used by mutation tests).
    pub fn terms_mut(&mut self) -> &mut [DecompTerm] {
        &mut self.terms
    }

    fn require_bilinear(&self) -> Result<()> {
        if self.terms.iter().any(|t| t.inputs.len() != 2) {
            return Err(Error::Decomposition("only bilinear (two-argument) terms can be evaluated".into()));
        }
        Ok(())
    }

    /// Input images `(E^t_1(A), E^t_2(B))` for term `t`.
    pub fn term_inputs<F: Field>(&self, t: usize, a_blocks: &[Matrix<F>], b_blocks: &[Matrix<F>]) -> Result<(Matrix<F>, Matrix<F>)> {
        self.require_bilinear()?;
        let term = &self.terms[t];
        Ok((term.inputs[0].apply(a_blocks)?, term.inputs[1].apply(b_blocks)?))
    }

    /// `Σ_t D_t(value_t)` for per-term products `values`.
    pub fn recombine<F: Field>(&self, values: &[Matrix<F>]) -> Result<Vec<Matrix<F>>> {
        if values.len() != self.terms.len() {
            return Err(Error::Shape(format!("{} term values for rank {}", values.len(), self.rank())));
        }
        let first = &values[0];
        let f = first.field();
        let mut out = vec![Matrix::zeros(f, first.rows(), first.cols()); self.shape.c_blocks()];
        for (term, value) in self.terms.iter().zip(values) {
            for &(c, w) in term.output.weights() {
                out[c].add_scaled(f.from_i64(w), value);
            }
        }
        Ok(out)
    }

    /// Output blocks `C` (row-major `x x y`) computed through the terms.
    pub fn evaluate<F: Field>(&self, a_blocks: &[Matrix<F>], b_blocks: &[Matrix<F>]) -> Result<Vec<Matrix<F>>> {
        if a_blocks.len() != self.shape.a_blocks() || b_blocks.len() != self.shape.b_blocks() {
            return Err(Error::Shape(format!(
                "decomposition expects {} A and {} B blocks",
                self.shape.a_blocks(),
                self.shape.b_blocks()
            )));
        }
        let values = (0..self.rank())
            .map(|t| self.term_inputs(t, a_blocks, b_blocks).map(|(a, b)| a.matmul(&b)))
            .collect::<Result<Vec<_>>>()?;
        self.recombine(&values)
    }

    /// Integer residual `target - Σ_t E^t_1 ⊗ E^t_2 ⊗ D_t` over
    /// `(a, b, c)` block indices, flattened row-major.
    pub fn structure_residual(&self) -> Result<Vec<i64>> {
        self.require_bilinear()?;
        let OuterShape { x, y, z } = self.shape;
        let (na, nb, nc) = (self.shape.a_blocks(), self.shape.b_blocks(), self.shape.c_blocks());
        let idx = |a: usize, b: usize, c: usize| (a * nb + b) * nc + c;
        let mut residual = vec![0i64; na * nb * nc];
        for i in 0..x {
            for j in 0..y {
                for k in 0..z {
                    residual[idx(i * z + k, k * y + j, i * y + j)] += 1;
                }
            }
        }
        for term in &self.terms {
            for &(a, wa) in term.inputs[0].weights() {
                for &(b, wb) in term.inputs[1].weights() {
                    for &(c, wc) in term.output.weights() {
                        residual[idx(a, b, c)] -= wa * wb * wc;
                    }
                }
            }
        }
        Ok(residual)
    }

    /// Output blocks with a nonzero residual, and the terms whose
    /// rank-one slice `E^t_1 ⊗ E^t_2` is proportional to that residual.
    fn diagnose(&self) -> Result<(Vec<usize>, Vec<usize>)> {
        let residual = self.structure_residual()?;
        let (na, nb, nc) = (self.shape.a_blocks(), self.shape.b_blocks(), self.shape.c_blocks());
        let at = |a: usize, b: usize, c: usize| residual[(a * nb + b) * nc + c];
        let mut mismatched = Vec::new();
        let mut implicated = Vec::new();
        for c in 0..nc {
            if (0..na).all(|a| (0..nb).all(|b| at(a, b, c) == 0)) {
                continue;
            }
            mismatched.push(c);
            for (t, term) in self.terms.iter().enumerate() {
                if term.output.weight(c) == 0 {
                    continue;
                }
                let outer = |a: usize, b: usize| term.inputs[0].weight(a) * term.inputs[1].weight(b);
                let Some((a0, b0)) = (0..na).flat_map(|a| (0..nb).map(move |b| (a, b))).find(|&(a, b)| outer(a, b) != 0)
                else {
                    continue;
                };
                let (num, den) = (at(a0, b0, c), outer(a0, b0));
                let proportional = (0..na).all(|a| (0..nb).all(|b| at(a, b, c) * den == num * outer(a, b)));
                if proportional && !implicated.contains(&t) {
                    implicated.push(t);
                }
            }
        }
        implicated.sort_unstable();
        Ok((mismatched, implicated))
    }

    /// Check the defining identity on `trials` random inputs with square
    /// blocks of side `block`. Finite mode must match exactly; real mode
    /// within `1e-10` relative Frobenius error.
    pub fn verify<F: Field, R: Rng + ?Sized>(&self, field: F, trials: usize, block: usize, rng: &mut R) -> Result<Verdict> {
        self.require_bilinear()?;
        let OuterShape { x, y, z } = self.shape;
        let exact = matches!(field.mode(), crate::field::ScalarMode::Finite(_));
        let mut max_deviation = 0.0f64;
        let mut passed = true;
        for _ in 0..trials {
            let a: Vec<_> = (0..x * z).map(|_| Matrix::random(field, block, block, rng)).collect();
            let b: Vec<_> = (0..z * y).map(|_| Matrix::random(field, block, block, rng)).collect();
            let got = self.evaluate(&a, &b)?;
            let mut err_sq = 0.0;
            let mut ref_sq = 0.0;
            for i in 0..x {
                for j in 0..y {
                    let mut want = Matrix::zeros(field, block, block);
                    for k in 0..z {
                        want = want.add(&a[i * z + k].matmul(&b[k * y + j]));
                    }
                    let diff = got[i * y + j].sub(&want);
                    if exact {
                        let q = field.mode().modulus().unwrap_or(1) as f64;
                        for &d in diff.data() {
                            let v = field.to_f64(d);
                            max_deviation = max_deviation.max(v.min(q - v));
                        }
                    } else {
                        err_sq += diff.data().iter().map(|&d| field.to_f64(d).powi(2)).sum::<f64>();
                        ref_sq += want.data().iter().map(|&d| field.to_f64(d).powi(2)).sum::<f64>();
                    }
                }
            }
            if exact {
                passed &= max_deviation == 0.0;
            } else {
                let rel = if ref_sq > 0.0 { (err_sq / ref_sq).sqrt() } else { err_sq.sqrt() };
                max_deviation = max_deviation.max(rel);
                passed &= rel <= 1e-10;
            }
        }
        let (mismatched_outputs, implicated_terms) = self.diagnose()?;
        Ok(Verdict { passed, trials, max_deviation, mismatched_outputs, implicated_terms })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&DecompositionFile::from(self)).expect("plain data serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: DecompositionFile =
            serde_json::from_str(text).map_err(|e| Error::Decomposition(format!("bad JSON: {e}")))?;
        file.try_into()
    }
}

/// On-disk form:
/// `{"rank":7,"shapes":{"x":2,"y":2,"z":2},"terms":[{"E":[{"A1":1,"A4":1},{"B1":1}],"D":{"C3":1}}]}`.
#[derive(Debug, Serialize, Deserialize)]
struct DecompositionFile {
    rank: usize,
    shapes: OuterShape,
    terms: Vec<TermFile>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TermFile {
    #[serde(rename = "E")]
    inputs: Vec<BTreeMap<String, i64>>,
    #[serde(rename = "D")]
    output: BTreeMap<String, i64>,
}

const ARG_PREFIXES: [char; 2] = ['A', 'B'];

fn block_name(prefix: char, index: usize) -> String {
    format!("{prefix}{}", index + 1)
}

fn parse_block(name: &str, prefix: char) -> Result<usize> {
    let rest = name
        .strip_prefix(prefix)
        .ok_or_else(|| Error::Decomposition(format!("block `{name}` should start with `{prefix}`")))?;
    match rest.parse::<usize>() {
        Ok(i) if i >= 1 => Ok(i - 1),
        _ => Err(Error::Decomposition(format!("bad block name `{name}`"))),
    }
}

fn to_map(entries: &BTreeMap<String, i64>, prefix: char) -> Result<LinearCombMap> {
    let weights = entries
        .iter()
        .map(|(name, &w)| parse_block(name, prefix).map(|i| (i, w)))
        .collect::<Result<Vec<_>>>()?;
    Ok(LinearCombMap::new(weights))
}

fn from_map(map: &LinearCombMap, prefix: char) -> BTreeMap<String, i64> {
    map.weights().iter().map(|&(i, w)| (block_name(prefix, i), w)).collect()
}

impl From<&TensorDecomposition> for DecompositionFile {
    fn from(d: &TensorDecomposition) -> Self {
        let terms = d
            .terms
            .iter()
            .map(|t| TermFile {
                inputs: t
                    .inputs
                    .iter()
                    .enumerate()
                    .map(|(arg, m)| from_map(m, ARG_PREFIXES.get(arg).copied().unwrap_or('X')))
                    .collect(),
                output: from_map(&t.output, 'C'),
            })
            .collect();
        Self { rank: d.rank(), shapes: d.shape, terms }
    }
}

impl TryFrom<DecompositionFile> for TensorDecomposition {
    type Error = Error;

    fn try_from(file: DecompositionFile) -> Result<Self> {
        if file.rank != file.terms.len() {
            return Err(Error::Decomposition(format!(
                "rank {} but {} terms listed",
                file.rank,
                file.terms.len()
            )));
        }
        let terms = file
            .terms
            .iter()
            .map(|t| {
                if t.inputs.len() != ARG_PREFIXES.len() {
                    return Err(Error::Decomposition(format!(
                        "expected {} input maps per term, got {}",
                        ARG_PREFIXES.len(),
                        t.inputs.len()
                    )));
                }
                let inputs = t
                    .inputs
                    .iter()
                    .zip(ARG_PREFIXES)
                    .map(|(m, p)| to_map(m, p))
                    .collect::<Result<Vec<_>>>()?;
                Ok(DecompTerm { inputs, output: to_map(&t.output, 'C')? })
            })
            .collect::<Result<Vec<_>>>()?;
        TensorDecomposition::new(file.shapes, terms)
    }
}
