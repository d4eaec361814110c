//! Global random p-adic codes.
//!
//! Worker `k` receives `Ã_k = Σ_i (g_A)^k_i A_i` and `B̃_k = Σ_j (g_B)^k_j B_j`
//! and returns `Ã_k B̃_k = Σ_{i,j} (g_C)^k_{i,j} A_i B_j`, where the output
//! coefficients are the star product `(g_C)^k_{i,j} = (g_A)^k_i (g_B)^k_j`.
//! Input coefficients follow the p-adic law, whose `l`-fold products are
//! uniform on `F_q`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::field::{Field, PrimeField, Reals};
use crate::matrix::{Matrix, RowEchelon};
use crate::partition::{assemble, col_strips, row_strips};

/// Coefficient law whose `order`-fold products are uniform on `F_q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PadicDistribution {
    q: u64,
    order: u32,
    p_zero: f64,
    p_nonzero: f64,
}

impl PadicDistribution {
    pub fn new(q: u64, order: u32) -> Result<Self> {
        PrimeField::new(q)?;
        if order == 0 {
            return Err(Error::InvalidParameter("product order must be at least 1".into()));
        }
        let qf = q as f64;
        let l = f64::from(order);
        let p_zero = 1.0 - ((qf - 1.0) / qf).powf(1.0 / l);
        let p_nonzero = (qf * (qf - 1.0).powf(l - 1.0)).powf(-1.0 / l);
        Ok(Self { q, order, p_zero, p_nonzero })
    }

    pub fn q(&self) -> u64 {
        self.q
    }
    pub fn order(&self) -> u32 {
        self.order
    }
    pub fn p_zero(&self) -> f64 {
        self.p_zero
    }
    /// Mass on each individual nonzero residue.
    pub fn p_nonzero(&self) -> f64 {
        self.p_nonzero
    }

    /// Zero with probability `p_zero`, otherwise a uniform nonzero residue.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        if rng.random::<f64>() < self.p_zero {
            0
        } else {
            rng.random_range(1..self.q)
        }
    }
}

/// How a field draws code coefficients: the p-adic law over `F_q`,
/// standard normals over the reals.
pub trait CoefficientLaw: Field {
    fn sample_coefficient<R: Rng + ?Sized>(&self, order: u32, rng: &mut R) -> Self::Elem;
}

impl CoefficientLaw for PrimeField {
    fn sample_coefficient<R: Rng + ?Sized>(&self, order: u32, rng: &mut R) -> u64 {
        PadicDistribution::new(self.modulus(), order)
            .expect("field modulus is prime")
            .sample(rng)
    }
}

impl CoefficientLaw for Reals {
    fn sample_coefficient<R: Rng + ?Sized>(&self, _order: u32, rng: &mut R) -> f64 {
        self.random(rng)
    }
}

/// Generator triple `(G_A, G_B, G_C)` for `n` workers on an `x x y` grid of
/// output blocks. Column `(i, j)` of `G_C` is at `i * y + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeBook<F: Field> {
    g_a: Matrix<F>,
    g_b: Matrix<F>,
    g_c: Matrix<F>,
}

impl<F: Field> CodeBook<F> {
    /// Build from explicit input coefficients; `G_C` is their star product.
    pub fn from_parts(g_a: Matrix<F>, g_b: Matrix<F>) -> Result<Self> {
        if g_a.rows() != g_b.rows() {
            return Err(Error::Shape(format!(
                "G_A has {} rows, G_B has {}",
                g_a.rows(),
                g_b.rows()
            )));
        }
        let f = g_a.field();
        let (x, y) = (g_a.cols(), g_b.cols());
        let g_c = Matrix::from_fn(f, g_a.rows(), x * y, |k, col| f.mul(g_a.get(k, col / y), g_b.get(k, col % y)));
        Ok(Self { g_a, g_b, g_c })
    }

    pub fn n(&self) -> usize {
        self.g_a.rows()
    }
    pub fn x(&self) -> usize {
        self.g_a.cols()
    }
    pub fn y(&self) -> usize {
        self.g_b.cols()
    }
    pub fn g_a(&self) -> &Matrix<F> {
        &self.g_a
    }
    pub fn g_b(&self) -> &Matrix<F> {
        &self.g_b
    }
    pub fn g_c(&self) -> &Matrix<F> {
        &self.g_c
    }

    /// Encoded operands for worker `k`.
    pub fn encode(&self, a_blocks: &[Matrix<F>], b_blocks: &[Matrix<F>], k: usize) -> Result<(Matrix<F>, Matrix<F>)> {
        if k >= self.n() {
            return Err(Error::InvalidParameter(format!("worker {k} out of range (n = {})", self.n())));
        }
        if a_blocks.len() != self.x() || b_blocks.len() != self.y() {
            return Err(Error::Shape(format!(
                "expected {} A blocks and {} B blocks, got {} and {}",
                self.x(),
                self.y(),
                a_blocks.len(),
                b_blocks.len()
            )));
        }
        Ok((combine(self.g_a.row(k), a_blocks)?, combine(self.g_b.row(k), b_blocks)?))
    }
}

impl<F: CoefficientLaw> CodeBook<F> {
    /// Sample a codebook. Rows are drawn worker by worker (`g_A` row then
    /// `g_B` row), so the first `n` rows do not depend on the total count.
    pub fn generate<R: Rng + ?Sized>(field: F, n: usize, x: usize, y: usize, rng: &mut R) -> Self {
        let mut a = Vec::with_capacity(n * x);
        let mut b = Vec::with_capacity(n * y);
        for _ in 0..n {
            a.extend((0..x).map(|_| field.sample_coefficient(2, rng)));
            b.extend((0..y).map(|_| field.sample_coefficient(2, rng)));
        }
        let g_a = Matrix::new(field, n, x, a).expect("sized above");
        let g_b = Matrix::new(field, n, y, b).expect("sized above");
        Self::from_parts(g_a, g_b).expect("row counts agree")
    }
}

/// `Σ_i coefficients[i] * blocks[i]`.
pub fn combine<F: Field>(coefficients: &[F::Elem], blocks: &[Matrix<F>]) -> Result<Matrix<F>> {
    let first = blocks.first().ok_or_else(|| Error::Shape("no blocks to combine".into()))?;
    if coefficients.len() != blocks.len() {
        return Err(Error::Shape(format!("{} coefficients for {} blocks", coefficients.len(), blocks.len())));
    }
    let mut acc = Matrix::zeros(first.field(), first.rows(), first.cols());
    for (&c, block) in coefficients.iter().zip(blocks) {
        if block.shape() != first.shape() {
            return Err(Error::Shape("blocks differ in shape".into()));
        }
        acc.add_scaled(c, block);
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    /// Returned rows span less than the `x*y` unknowns.
    #[error("need more rows: rank {rank} of {needed}")]
    NeedMoreRows { rank: usize, needed: usize },
}

/// Incremental decoder: accepts worker results in arrival order and keeps
/// only those whose `G_C` row raises the rank.
#[derive(Debug, Clone)]
pub struct ProductDecoder<'a, F: Field> {
    codebook: &'a CodeBook<F>,
    span: RowEchelon<F>,
    kept: Vec<(usize, Matrix<F>)>,
}

impl<'a, F: Field> ProductDecoder<'a, F> {
    pub fn new(codebook: &'a CodeBook<F>) -> Self {
        let width = codebook.x() * codebook.y();
        Self { codebook, span: RowEchelon::new(codebook.g_a.field(), width), kept: Vec::with_capacity(width) }
    }

    /// Whether worker `k`'s row would raise the rank. Callers can skip
    /// computing useless products.
    pub fn offer_row(&mut self, k: usize) -> bool {
        self.span.insert(self.codebook.g_c.row(k))
    }

    /// Record worker `k`'s result. Returns `true` if it was kept.
    pub fn offer(&mut self, k: usize, result: Matrix<F>) -> bool {
        if self.offer_row(k) {
            self.kept.push((k, result));
            true
        } else {
            false
        }
    }

    /// Record a result whose row was already accepted by `offer_row`.
    pub fn push_accepted(&mut self, k: usize, result: Matrix<F>) {
        self.kept.push((k, result));
    }

    pub fn rank(&self) -> usize {
        self.span.rank()
    }

    pub fn is_ready(&self) -> bool {
        self.span.is_full()
    }

    pub fn kept_workers(&self) -> Vec<usize> {
        self.kept.iter().map(|(k, _)| *k).collect()
    }

    /// Solve for the `x*y` products `A_i B_j`, `(i, j)` lexicographic.
    pub fn finish(&self) -> std::result::Result<Vec<Matrix<F>>, DecodeError> {
        let needed = self.codebook.x() * self.codebook.y();
        if !self.is_ready() || self.kept.len() != needed {
            return Err(DecodeError::NeedMoreRows { rank: self.rank(), needed });
        }
        let workers = self.kept_workers();
        let system = self.codebook.g_c.select_rows(&workers);
        let (h, w) = self.kept[0].1.shape();
        let f = system.field();
        let mut rhs = Vec::with_capacity(needed * h * w);
        for (_, result) in &self.kept {
            rhs.extend_from_slice(result.data());
        }
        let rhs = Matrix::new(f, needed, h * w, rhs).expect("uniform result shapes");
        let solution = system
            .solve(&rhs)
            .map_err(|s| DecodeError::NeedMoreRows { rank: s.rank, needed })?;
        Ok((0..needed)
            .map(|r| Matrix::new(f, h, w, solution.row(r).to_vec()).expect("row length h*w"))
            .collect())
    }
}

/// Decode from an unordered set of results, scanning them in the given
/// order and dropping rows that add nothing.
pub fn decode<F: Field>(
    codebook: &CodeBook<F>,
    returned: &[(usize, Matrix<F>)],
) -> std::result::Result<Vec<Matrix<F>>, DecodeError> {
    let mut decoder = ProductDecoder::new(codebook);
    for (k, result) in returned {
        if decoder.is_ready() {
            break;
        }
        decoder.offer(*k, result.clone());
    }
    decoder.finish()
}

/// Outcome of [`coded_multiply`].
#[derive(Debug, Clone, PartialEq)]
pub struct CodedProduct<F: Field> {
    pub product: Matrix<F>,
    /// Arrivals consumed before decoding became possible.
    pub arrivals_used: usize,
    /// Workers whose results entered the solve.
    pub kept: Vec<usize>,
}

/// End-to-end global code: split `A` into `x` row blocks and `B` into `y`
/// column blocks, feed worker results in `arrivals` order and decode as
/// soon as the kept rows reach full rank. Only useful workers' products
/// are computed.
pub fn coded_multiply<F: Field>(
    codebook: &CodeBook<F>,
    a: &Matrix<F>,
    b: &Matrix<F>,
    arrivals: &[usize],
) -> Result<std::result::Result<CodedProduct<F>, DecodeError>> {
    if a.cols() != b.rows() {
        return Err(Error::Shape(format!("A is {}x{}, B is {}x{}", a.rows(), a.cols(), b.rows(), b.cols())));
    }
    let a_blocks = row_strips(a, codebook.x())?;
    let b_blocks = col_strips(b, codebook.y())?;
    let mut decoder = ProductDecoder::new(codebook);
    let mut used = 0;
    for &k in arrivals {
        if decoder.is_ready() {
            break;
        }
        used += 1;
        if decoder.offer_row(k) {
            let (ta, tb) = codebook.encode(&a_blocks, &b_blocks, k)?;
            decoder.push_accepted(k, ta.matmul(&tb));
        }
    }
    Ok(decoder.finish().map(|blocks| CodedProduct {
        product: assemble(&blocks, codebook.x(), codebook.y()).expect("decoded grid is complete"),
        arrivals_used: used,
        kept: decoder.kept_workers(),
    }))
}

/// `Π_{i=1..k} (1 - q^{-i})`: the probability that a `k x k` matrix with
/// i.i.d. uniform entries over `F_q` is invertible.
pub fn success_probability(q: u64, k: u32) -> f64 {
    let qf = q as f64;
    (1..=k).map(|i| 1.0 - qf.powi(-(i as i32))).product()
}

/// Probability that the first `x*y` rows of a sampled codebook over `F_q`
/// are invertible, by weighted enumeration of every codebook. Only for
/// tiny cases: at most `2^24` codebooks.
pub fn star_invertibility_exact(q: u64, x: usize, y: usize) -> Result<f64> {
    let field = PrimeField::new(q)?;
    let dist = PadicDistribution::new(q, 2)?;
    let k = x * y;
    let entries = k * (x + y);
    let total = (q as f64).powi(entries as i32);
    if total > (1u64 << 24) as f64 {
        return Err(Error::InvalidParameter(format!("{total} codebooks is too many to enumerate")));
    }
    let mut digits = vec![0u64; entries];
    let mut probability = 0.0;
    for _ in 0..total as u64 {
        let weight: f64 = digits
            .iter()
            .map(|&d| if d == 0 { dist.p_zero() } else { dist.p_nonzero() })
            .product();
        let (a, b): (Vec<u64>, Vec<u64>) = (
            digits.chunks(x + y).flat_map(|r| r[..x].to_vec()).collect(),
            digits.chunks(x + y).flat_map(|r| r[x..].to_vec()).collect(),
        );
        let book = CodeBook::from_parts(
            Matrix::new(field, k, x, a).expect("sized"),
            Matrix::new(field, k, y, b).expect("sized"),
        )?;
        if book.g_c().rank() == k {
            probability += weight;
        }
        for d in digits.iter_mut() {
            *d += 1;
            if *d < q {
                break;
            }
            *d = 0;
        }
    }
    Ok(probability)
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniformityReport {
    pub q: u64,
    pub order: u32,
    pub samples: u64,
    /// Empirical frequency of each residue in `0..q`.
    pub frequencies: Vec<f64>,
    pub total_variation: f64,
}

/// Draw `samples` products of `order` independent p-adic coefficients and
/// measure the distance of their law from uniform on `F_q`.
pub fn uniformity_report<R: Rng + ?Sized>(q: u64, order: u32, samples: u64, rng: &mut R) -> Result<UniformityReport> {
    let dist = PadicDistribution::new(q, order)?;
    let field = PrimeField::new(q)?;
    let mut counts = vec![0u64; q as usize];
    for _ in 0..samples {
        let v = (0..order).fold(field.one(), |acc, _| field.mul(acc, dist.sample(rng)));
        counts[v as usize] += 1;
    }
    let frequencies: Vec<f64> = counts.iter().map(|&c| c as f64 / samples as f64).collect();
    let uniform = 1.0 / q as f64;
    let total_variation = 0.5 * frequencies.iter().map(|p| (p - uniform).abs()).sum::<f64>();
    Ok(UniformityReport { q, order, samples, frequencies, total_variation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn f(q: u64) -> PrimeField {
        PrimeField::new(q).unwrap()
    }

    #[test]
    fn distribution_masses() {
        let d = PadicDistribution::new(2, 2).unwrap();
        assert!((d.p_zero() - (1.0 - 0.5f64.sqrt())).abs() < 1e-15);
        assert!((d.p_zero() - 0.29289).abs() < 1e-5);
        assert!((d.p_nonzero() - 0.70711).abs() < 1e-5);

        let d = PadicDistribution::new(7, 2).unwrap();
        assert!((d.p_zero() - 0.07417).abs() < 1e-5);

        for q in [2u64, 3, 5, 7, 11, 101] {
            for l in 1..=4 {
                let d = PadicDistribution::new(q, l).unwrap();
                let total = d.p_zero() + (q - 1) as f64 * d.p_nonzero();
                assert!((total - 1.0).abs() < 1e-12, "q={q} l={l}");
            }
        }
        assert!(PadicDistribution::new(6, 2).is_err());
        assert!(PadicDistribution::new(7, 0).is_err());
    }

    #[test]
    fn product_law_is_uniform_in_closed_form() {
        // P(product = 0) = u^2 + 2(q-1)uv and P(product = z) = (q-1)v^2 for z != 0.
        for q in [2u64, 3, 7, 101] {
            let d = PadicDistribution::new(q, 2).unwrap();
            let (u, v) = (d.p_zero(), d.p_nonzero());
            let qf = q as f64;
            assert!((u * u + 2.0 * (qf - 1.0) * u * v - 1.0 / qf).abs() < 1e-12);
            assert!(((qf - 1.0) * v * v - 1.0 / qf).abs() < 1e-12);
        }
    }

    #[test]
    fn empirical_frequencies_within_three_standard_errors() {
        let d = PadicDistribution::new(7, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 1_000_000u32;
        let mut counts = [0u32; 7];
        for _ in 0..n {
            counts[d.sample(&mut rng) as usize] += 1;
        }
        for (value, &c) in counts.iter().enumerate() {
            let p = if value == 0 { d.p_zero() } else { d.p_nonzero() };
            let se = (p * (1.0 - p) / f64::from(n)).sqrt();
            let observed = f64::from(c) / f64::from(n);
            assert!((observed - p).abs() < 3.0 * se, "value {value}: {observed} vs {p}");
        }
    }

    #[test]
    fn star_product_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cb = CodeBook::generate(f(7), 9, 3, 2, &mut rng);
        assert_eq!(cb.g_c().shape(), (9, 6));
        let fld = f(7);
        for k in 0..9 {
            for i in 0..3 {
                for j in 0..2 {
                    assert_eq!(cb.g_c().get(k, i * 2 + j), fld.mul(cb.g_a().get(k, i), cb.g_b().get(k, j)));
                }
            }
        }
        let cb = CodeBook::generate(f(101), 5, 2, 2, &mut rng);
        assert_eq!(cb.g_c().shape(), (5, 4));
    }

    #[test]
    fn generation_is_prefix_consistent() {
        let a = CodeBook::generate(f(11), 6, 2, 3, &mut ChaCha8Rng::seed_from_u64(8));
        let b = CodeBook::generate(f(11), 9, 2, 3, &mut ChaCha8Rng::seed_from_u64(8));
        assert_eq!(a.g_c().data(), &b.g_c().data()[..a.g_c().data().len()]);
    }

    #[test]
    fn unit_rows_select_blocks() {
        let fld = f(2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a_blocks: Vec<_> = (0..2).map(|_| Matrix::random(fld, 2, 2, &mut rng)).collect();
        let b_blocks: Vec<_> = (0..2).map(|_| Matrix::random(fld, 2, 2, &mut rng)).collect();
        let g_a = Matrix::from_i64(fld, 2, 2, &[1, 0, 1, 1]).unwrap();
        let g_b = Matrix::from_i64(fld, 2, 2, &[1, 0, 0, 1]).unwrap();
        let cb = CodeBook::from_parts(g_a, g_b).unwrap();
        let (ta, tb) = cb.encode(&a_blocks, &b_blocks, 0).unwrap();
        assert_eq!(ta, a_blocks[0]);
        assert_eq!(tb, b_blocks[0]);
        let (ta, _) = cb.encode(&a_blocks, &b_blocks, 1).unwrap();
        assert_eq!(ta, a_blocks[0].add(&a_blocks[1]));
        assert!(cb.encode(&a_blocks, &b_blocks, 2).is_err());
        assert!(cb.encode(&a_blocks[..1], &b_blocks, 0).is_err());
    }

    #[test]
    fn worker_product_is_bilinear_combination() {
        let fld = f(101);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let cb = CodeBook::generate(fld, 6, 2, 3, &mut rng);
        let a_blocks: Vec<_> = (0..2).map(|_| Matrix::random(fld, 4, 4, &mut rng)).collect();
        let b_blocks: Vec<_> = (0..3).map(|_| Matrix::random(fld, 4, 4, &mut rng)).collect();
        for k in 0..6 {
            let (ta, tb) = cb.encode(&a_blocks, &b_blocks, k).unwrap();
            let mut expected = Matrix::zeros(fld, 4, 4);
            for i in 0..2 {
                for j in 0..3 {
                    expected.add_scaled(cb.g_c().get(k, i * 3 + j), &a_blocks[i].matmul(&b_blocks[j]));
                }
            }
            assert_eq!(ta.matmul(&tb), expected);
        }
    }

    #[test]
    fn single_block_code_decodes_from_any_nonzero_row() {
        let fld = f(7);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cb = CodeBook::generate(fld, 20, 1, 1, &mut rng);
        let a = Matrix::random(fld, 3, 2, &mut rng);
        let b = Matrix::random(fld, 2, 3, &mut rng);
        for k in 0..20 {
            let out = coded_multiply(&cb, &a, &b, &[k]).unwrap();
            assert_eq!(out.is_ok(), cb.g_c().get(k, 0) != 0);
            if let Ok(p) = out {
                assert_eq!(p.product, a.matmul(&b));
            }
        }
    }

    #[test]
    fn decode_all_rows_matches_direct_product() {
        let fld = f(101);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a = Matrix::random(fld, 4, 6, &mut rng);
        let b = Matrix::random(fld, 6, 4, &mut rng);
        let cb = loop {
            let cb = CodeBook::generate(fld, 6, 2, 2, &mut rng);
            if cb.g_c().rank() == 4 {
                break cb;
            }
        };
        let all: Vec<usize> = (0..6).collect();
        let out = coded_multiply(&cb, &a, &b, &all).unwrap().unwrap();
        assert_eq!(out.product, a.matmul(&b));
        assert_eq!(out.kept.len(), 4);
    }

    #[test]
    fn too_few_rows_needs_more() {
        let fld = f(101);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cb = CodeBook::generate(fld, 5, 2, 2, &mut rng);
        let returned: Vec<_> = (0..3).map(|k| (k, Matrix::random(fld, 2, 2, &mut rng))).collect();
        assert!(matches!(decode(&cb, &returned), Err(DecodeError::NeedMoreRows { needed: 4, .. })));
    }

    #[test]
    fn closed_form_values() {
        assert!((success_probability(2, 4) - 315.0 / 1024.0).abs() < 1e-15);
        assert!((success_probability(7, 4) - 0.83685).abs() < 1e-5);
        for q in [2u64, 3, 7, 101] {
            assert!((success_probability(q, 1) - (1.0 - 1.0 / q as f64)).abs() < 1e-15);
            for k in 2..10 {
                assert!(success_probability(q, k) > (1.0 - 1.0 / q as f64).powi(k as i32));
            }
        }
    }

    #[test]
    fn uniform_matrix_invertibility_oracle_q2() {
        // Independent oracle for the closed form: sample uniform 4x4 matrices over F_2.
        let fld = f(2);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let trials = 100_000;
        let hits = (0..trials).filter(|_| Matrix::random(fld, 4, 4, &mut rng).rank() == 4).count();
        let p = success_probability(2, 4);
        let se = (p * (1.0 - p) / trials as f64).sqrt();
        assert!((hits as f64 / trials as f64 - p).abs() < 3.0 * se);
    }

    #[test]
    fn uniformity_small_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let r = uniformity_report(2, 1, 100_000, &mut rng).unwrap();
        // Order 1 with q = 2: p_zero = 1/2, plain uniform.
        assert!(r.total_variation < 0.01);
        let r = uniformity_report(11, 3, 200_000, &mut rng).unwrap();
        assert!(r.total_variation < 0.01);
        assert_eq!(r.frequencies.len(), 11);
    }
}
