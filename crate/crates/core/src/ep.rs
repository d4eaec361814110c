//! Entangled polynomial (EP) baseline.
//!
//! With `A` split `m x p` and `B` split `p x n`, worker `k` evaluates
//!
//! ```text
//! Ã(α) = Σ_{i,s} A_{i,s} α^{(p-1-s) + p·i}      B̃(α) = Σ_{s,j} B_{s,j} α^{s + p·m·j}
//! ```
//!
//! at its point `α_k`. The product is a polynomial of degree `pmn + p - 2`
//! whose coefficient at `p - 1 + p·i + p·m·j` is `C_{i,j} = Σ_s A_{i,s} B_{s,j}`,
//! so any `pmn + p - 1` evaluations determine `C`.

use crate::error::{Error, Result};
use crate::field::{Field, ScalarMode};
use crate::matrix::Matrix;
use crate::partition::{flatten_products, unflatten_products};

/// Recovery threshold `p·m·n + p - 1`.
pub fn ep_threshold(m: usize, n: usize, p: usize) -> usize {
    p * m * n + p - 1
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpCode<F: Field> {
    field: F,
    m: usize,
    n: usize,
    p: usize,
    points: Vec<F::Elem>,
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum EpError {
    #[error("need more rows: have {have}, threshold {needed}")]
    NeedMoreRows { have: usize, needed: usize },
    #[error("Vandermonde system numerically singular (condition estimate {condition_estimate:.3e})")]
    IllConditioned { condition_estimate: f64 },
}

impl<F: Field> EpCode<F> {
    /// Code for `workers` workers on the `(m, n, p) = (x, y, z)` partition.
    /// Evaluation points are `1..=workers`; finite fields need `q > workers`.
    pub fn new(field: F, x: usize, y: usize, z: usize, workers: usize) -> Result<Self> {
        if x == 0 || y == 0 || z == 0 {
            return Err(Error::InvalidParameter("EP partition dimensions must be positive".into()));
        }
        if let ScalarMode::Finite(q) = field.mode() {
            if workers as u64 >= q {
                return Err(Error::InvalidParameter(format!(
                    "EP needs {workers} distinct nonzero points but F_{q} has only {}",
                    q - 1
                )));
            }
        }
        let points = (1..=workers as i64).map(|v| field.from_i64(v)).collect();
        Ok(Self { field, m: x, n: y, p: z, points })
    }

    pub fn threshold(&self) -> usize {
        ep_threshold(self.m, self.n, self.p)
    }

    pub fn workers(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[F::Elem] {
        &self.points
    }

    fn a_exponent(&self, i: usize, s: usize) -> usize {
        (self.p - 1 - s) + self.p * i
    }

    fn b_exponent(&self, s: usize, j: usize) -> usize {
        s + self.p * self.m * j
    }

    fn c_exponent(&self, i: usize, j: usize) -> usize {
        self.p - 1 + self.p * i + self.p * self.m * j
    }

    fn powers(&self, alpha: F::Elem, count: usize) -> Vec<F::Elem> {
        let f = self.field;
        let mut out = Vec::with_capacity(count);
        let mut acc = f.one();
        for _ in 0..count {
            out.push(acc);
            acc = f.mul(acc, alpha);
        }
        out
    }

    /// Encoded operands for worker `k`. `a_blocks` are `A_{i,s}` row-major
    /// (`i * p + s`), `b_blocks` are `B_{s,j}` row-major (`s * n + j`).
    pub fn encode(&self, a_blocks: &[Matrix<F>], b_blocks: &[Matrix<F>], k: usize) -> Result<(Matrix<F>, Matrix<F>)> {
        let (m, n, p) = (self.m, self.n, self.p);
        if a_blocks.len() != m * p || b_blocks.len() != p * n {
            return Err(Error::Shape(format!(
                "EP ({m},{n},{p}) expects {} A and {} B blocks",
                m * p,
                p * n
            )));
        }
        let alpha = *self
            .points
            .get(k)
            .ok_or_else(|| Error::InvalidParameter(format!("worker {k} out of range")))?;
        let pw = self.powers(alpha, self.threshold());
        let f = self.field;
        let (ar, ac) = a_blocks[0].shape();
        let (br, bc) = b_blocks[0].shape();
        if a_blocks.iter().any(|b| b.shape() != (ar, ac)) || b_blocks.iter().any(|b| b.shape() != (br, bc)) {
            return Err(Error::Shape("ragged EP blocks".into()));
        }
        let mut ta = Matrix::zeros(f, ar, ac);
        for i in 0..m {
            for s in 0..p {
                ta.add_scaled(pw[self.a_exponent(i, s)], &a_blocks[i * p + s]);
            }
        }
        let mut tb = Matrix::zeros(f, br, bc);
        for s in 0..p {
            for j in 0..n {
                tb.add_scaled(pw[self.b_exponent(s, j)], &b_blocks[s * n + j]);
            }
        }
        Ok((ta, tb))
    }

    /// Vandermonde matrix for the given workers, one row per worker.
    pub fn vandermonde(&self, workers: &[usize]) -> Matrix<F> {
        let t = self.threshold();
        let rows: Vec<Vec<F::Elem>> = workers.iter().map(|&k| self.powers(self.points[k], t)).collect();
        Matrix::from_fn(self.field, workers.len(), t, |r, c| rows[r][c])
    }

    /// Interpolate from the first `threshold` results and return the output
    /// blocks `C_{i,j}` row-major.
    pub fn decode(&self, returned: &[(usize, Matrix<F>)]) -> std::result::Result<Vec<Matrix<F>>, EpError> {
        self.interpolate(returned, true).map(|(blocks, _)| blocks)
    }

    /// Like [`decode`](Self::decode) but solves the Vandermonde system
    /// however badly conditioned it is, and returns the condition estimate
    /// with the blocks. Fails only on an exactly singular system.
    pub fn decode_unguarded(&self, returned: &[(usize, Matrix<F>)]) -> std::result::Result<(Vec<Matrix<F>>, f64), EpError> {
        self.interpolate(returned, false)
    }

    fn interpolate(&self, returned: &[(usize, Matrix<F>)], guarded: bool) -> std::result::Result<(Vec<Matrix<F>>, f64), EpError> {
        let t = self.threshold();
        if returned.len() < t {
            return Err(EpError::NeedMoreRows { have: returned.len(), needed: t });
        }
        let used = &returned[..t];
        let workers: Vec<usize> = used.iter().map(|(k, _)| *k).collect();
        let (h, w) = used[0].1.shape();
        let results: Vec<Matrix<F>> = used.iter().map(|(_, r)| r.clone()).collect();
        let rhs = flatten_products(&results).expect("worker results share a shape");
        let v = self.vandermonde(&workers);
        let solved = if guarded { v.solve(&rhs) } else { v.solve_unguarded(&rhs) };
        let coefficients = solved.map_err(|_| EpError::IllConditioned { condition_estimate: v.pivot_ratio() })?;
        let wanted: Vec<usize> = (0..self.m)
            .flat_map(|i| (0..self.n).map(move |j| (i, j)))
            .map(|(i, j)| self.c_exponent(i, j))
            .collect();
        let picked = coefficients.select_rows(&wanted);
        let blocks = unflatten_products(&picked, h, w).expect("row length h*w");
        Ok((blocks, v.pivot_ratio()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{PrimeField, Reals};
    use crate::partition::{assemble, block_product, split, BlockPartition, Side};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn f101() -> PrimeField {
        PrimeField::new(101).unwrap()
    }

    #[test]
    fn threshold_formula() {
        assert_eq!(ep_threshold(4, 4, 2), 33);
        assert_eq!(ep_threshold(2, 2, 1), 4);
        assert_eq!(ep_threshold(1, 1, 1), 1);
    }

    #[test]
    fn useful_exponents_are_distinct_and_collision_free() {
        for (m, n, p) in [(1, 1, 1), (2, 2, 1), (2, 2, 2), (4, 4, 2), (3, 2, 3)] {
            let code = EpCode::new(Reals, m, n, p, 1).unwrap();
            let mut useful = std::collections::BTreeSet::new();
            for i in 0..m {
                for j in 0..n {
                    assert!(useful.insert(code.c_exponent(i, j)));
                }
            }
            for i in 0..m {
                for j in 0..n {
                    for s in 0..p {
                        for s2 in 0..p {
                            let e = code.a_exponent(i, s) + code.b_exponent(s2, j);
                            assert!(e < code.threshold());
                            // Cross terms never land on another block's coefficient.
                            if s != s2 {
                                assert!(!useful.contains(&e));
                            } else {
                                assert_eq!(e, code.c_exponent(i, j));
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn trivial_partition_passes_operands_through() {
        let f = f101();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = Matrix::random(f, 2, 3, &mut rng);
        let b = Matrix::random(f, 3, 2, &mut rng);
        let code = EpCode::new(f, 1, 1, 1, 3).unwrap();
        assert_eq!(code.threshold(), 1);
        let (ta, tb) = code.encode(std::slice::from_ref(&a), std::slice::from_ref(&b), 2).unwrap();
        assert_eq!((ta, tb), (a, b));
    }

    fn round_trip(x: usize, y: usize, z: usize, workers: usize, pick: &[usize], seed: u64) -> bool {
        let f = f101();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let part = BlockPartition::new(x, y, z, 2, 2, 2).unwrap();
        let (ar, ac) = part.a_shape();
        let (br, bc) = part.b_shape();
        let a = Matrix::random(f, ar, ac, &mut rng);
        let b = Matrix::random(f, br, bc, &mut rng);
        let ga = split(&a, Side::A, part).unwrap();
        let gb = split(&b, Side::B, part).unwrap();
        let code = EpCode::new(f, x, y, z, workers).unwrap();
        let returned: Vec<_> = pick
            .iter()
            .map(|&k| {
                let (ta, tb) = code.encode(&ga.blocks, &gb.blocks, k).unwrap();
                (k, ta.matmul(&tb))
            })
            .collect();
        let decoded = code.decode(&returned).unwrap();
        assert_eq!(decoded, block_product(&ga, &gb).unwrap());
        assemble(&decoded, x, y).unwrap() == a.matmul(&b)
    }

    #[test]
    fn decode_round_trip_222_with_36_workers() {
        let all: Vec<usize> = (0..36).rev().collect();
        assert!(round_trip(2, 2, 2, 36, &all, 5));
    }

    #[test]
    fn any_threshold_subset_decodes_221() {
        // Exhaustive over all 4-subsets of 7 workers.
        let n = 7;
        for mask in 0u32..(1 << n) {
            if mask.count_ones() != 4 {
                continue;
            }
            let pick: Vec<usize> = (0..n).filter(|&k| mask & (1 << k) != 0).collect();
            assert!(round_trip(2, 2, 1, n, &pick, u64::from(mask)), "subset {pick:?}");
        }
    }

    #[test]
    fn any_threshold_subset_decodes_112() {
        // p = 2: threshold 3, all 3-subsets of 6 workers.
        for a in 0..6 {
            for b in a + 1..6 {
                for c in b + 1..6 {
                    assert!(round_trip(1, 1, 2, 6, &[a, b, c], (a * 36 + b * 6 + c) as u64));
                }
            }
        }
    }

    #[test]
    fn short_of_threshold() {
        let f = f101();
        let code = EpCode::new(f, 2, 2, 1, 6).unwrap();
        let returned: Vec<_> = (0..3).map(|k| (k, Matrix::zeros(f, 1, 1))).collect();
        assert_eq!(code.decode(&returned), Err(EpError::NeedMoreRows { have: 3, needed: 4 }));
    }

    #[test]
    fn finite_field_too_small_rejected() {
        assert!(EpCode::new(PrimeField::new(31).unwrap(), 4, 4, 2, 33).is_err());
        assert!(EpCode::new(f101(), 4, 4, 2, 33).is_ok());
    }

    #[test]
    fn real_33_point_vandermonde_is_flagged() {
        let code = EpCode::new(Reals, 4, 4, 2, 33).unwrap();
        let returned: Vec<_> = (0..33).map(|k| (k, Matrix::zeros(Reals, 1, 1))).collect();
        match code.decode(&returned) {
            Err(EpError::IllConditioned { condition_estimate }) => assert!(condition_estimate > 1e20),
            other => panic!("expected ill-conditioning, got {other:?}"),
        }
    }

    #[test]
    fn unguarded_decode_loses_accuracy_with_more_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut errors = Vec::new();
        for (x, y) in [(2, 2), (4, 4)] {
            let part = BlockPartition::new(x, y, 1, 8, 8, 8).unwrap();
            let (ar, ac) = part.a_shape();
            let (br, bc) = part.b_shape();
            let a = Matrix::random(Reals, ar, ac, &mut rng);
            let b = Matrix::random(Reals, br, bc, &mut rng);
            let ga = split(&a, Side::A, part).unwrap();
            let gb = split(&b, Side::B, part).unwrap();
            let code = EpCode::new(Reals, x, y, 1, x * y).unwrap();
            let returned: Vec<_> = (0..x * y)
                .map(|k| {
                    let (ta, tb) = code.encode(&ga.blocks, &gb.blocks, k).unwrap();
                    (k, ta.matmul(&tb))
                })
                .collect();
            let (blocks, cond) = code.decode_unguarded(&returned).unwrap();
            assert!(cond.is_finite() && cond > 1.0);
            errors.push(assemble(&blocks, x, y).unwrap().relative_error(&a.matmul(&b)));
        }
        assert!(errors[0] < 1e-12, "{errors:?}");
        assert!(errors[1] > 100.0 * errors[0], "{errors:?}");
    }
}
