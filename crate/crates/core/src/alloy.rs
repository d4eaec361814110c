//! Locally random p-adic alloy codes.
//!
//! An outer tensor decomposition with `r` terms splits the job into `r`
//! smaller products. Each term gets its own group of workers and its own
//! independently sampled inner p-adic code over an `x' x y'` split of the
//! term's input images. Groups decode independently; the master then
//! recombines the term products through the output maps.
//!
//! Worker `w` belongs to group `w mod r` with local index `w div r`, which
//! gives every group `floor(n/r)` workers plus one for the first `n mod r`
//! groups.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{RoundOutcome, simulate_round, ChannelConfig};
use crate::ep::ep_threshold;
use crate::error::{Error, Result};
use crate::field::Field;
use crate::matrix::{Matrix, RowEchelon};
use crate::padic::{CodeBook, CoefficientLaw, ProductDecoder};
use crate::partition::{assemble, col_strips, row_strips, split, BlockPartition, Side};
use crate::tensor::TensorDecomposition;

#[derive(Debug, Clone, PartialEq)]
pub struct GroupPlan<F: Field> {
    pub codebook: CodeBook<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlloyPlan<F: Field> {
    decomp: TensorDecomposition,
    inner: (usize, usize),
    n: usize,
    groups: Vec<GroupPlan<F>>,
}

/// Encoded operands for worker `(group, local)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerTask<F: Field> {
    pub worker: usize,
    pub group: usize,
    pub local: usize,
    pub a: Matrix<F>,
    pub b: Matrix<F>,
}

impl<F: Field> WorkerTask<F> {
    pub fn compute(&self) -> Matrix<F> {
        self.a.matmul(&self.b)
    }
}

/// Which arrivals the master keeps, and when it can stop listening.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    /// Local indices kept per group, in arrival order.
    pub accepted: Vec<Vec<usize>>,
    /// Arrivals delivered to each group before it decoded (or ran out).
    pub workers_used: Vec<usize>,
    /// Arrivals processed up to and including the completing one.
    pub arrivals_used: usize,
    /// Time of the arrival that completed the last group.
    pub completion_time: Option<f64>,
    /// Groups whose rows never reached full rank.
    pub under_ranked: Vec<usize>,
}

impl Schedule {
    pub fn success(&self) -> bool {
        self.under_ranked.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlloyOutcome<F: Field> {
    pub product: Matrix<F>,
    pub schedule: Schedule,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("alloy decode failed: groups {under_ranked:?} never reached full rank")]
pub struct AlloyFailure {
    pub under_ranked: Vec<usize>,
    pub schedule: Schedule,
}

impl<F: CoefficientLaw> AlloyPlan<F> {
    /// Sample one inner codebook per term. Group `t` draws from its own
    /// stream seeded by the `t`-th output of `rng`, so its coefficients do
    /// not depend on `n`.
    pub fn plan<R: Rng + ?Sized>(
        decomp: TensorDecomposition,
        n: usize,
        inner: (usize, usize),
        field: F,
        rng: &mut R,
    ) -> Result<Self> {
        let r = decomp.rank();
        if n < r {
            return Err(Error::InvalidParameter(format!("{n} workers cannot cover {r} groups")));
        }
        if inner.0 == 0 || inner.1 == 0 {
            return Err(Error::InvalidParameter("inner partition must be positive".into()));
        }
        let groups = (0..r)
            .map(|t| {
                let mut group_rng = ChaCha8Rng::seed_from_u64(rng.next_u64());
                let size = n / r + usize::from(t < n % r);
                GroupPlan { codebook: CodeBook::generate(field, size, inner.0, inner.1, &mut group_rng) }
            })
            .collect();
        Ok(Self { decomp, inner, n, groups })
    }
}

impl<F: Field> AlloyPlan<F> {
    pub fn decomposition(&self) -> &TensorDecomposition {
        &self.decomp
    }
    pub fn inner(&self) -> (usize, usize) {
        self.inner
    }
    pub fn workers(&self) -> usize {
        self.n
    }
    pub fn groups(&self) -> &[GroupPlan<F>] {
        &self.groups
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.groups.iter().map(|g| g.codebook.n()).collect()
    }

    /// `(group, local index)` of worker `w`.
    pub fn locate(&self, worker: usize) -> (usize, usize) {
        let r = self.groups.len();
        (worker % r, worker / r)
    }

    /// Fewest results that could possibly decode: `r * x' * y'`.
    pub fn minimum_rows(&self) -> usize {
        self.groups.len() * self.inner.0 * self.inner.1
    }

    /// Decide, from coefficient rows alone, which arrivals each group keeps.
    pub fn schedule(&self, round: &RoundOutcome) -> Schedule {
        let r = self.groups.len();
        let width = self.inner.0 * self.inner.1;
        let field = self.groups[0].codebook.g_c().field();
        let mut spans: Vec<RowEchelon<F>> = (0..r).map(|_| RowEchelon::new(field, width)).collect();
        let mut accepted = vec![Vec::new(); r];
        let mut workers_used = vec![0; r];
        let mut done = 0;
        let mut arrivals_used = 0;
        let mut completion_time = None;
        for arrival in &round.arrivals {
            if arrival.worker >= self.n {
                continue;
            }
            arrivals_used += 1;
            let (t, k) = self.locate(arrival.worker);
            if spans[t].is_full() {
                // Group already decoded; the master drops the result.
                continue;
            }
            workers_used[t] += 1;
            if spans[t].insert(self.groups[t].codebook.g_c().row(k)) {
                accepted[t].push(k);
                if spans[t].is_full() {
                    done += 1;
                    if done == r {
                        completion_time = Some(arrival.time);
                        break;
                    }
                }
            }
        }
        let under_ranked = (0..r).filter(|&t| !spans[t].is_full()).collect();
        Schedule { accepted, workers_used, arrivals_used, completion_time, under_ranked }
    }

    fn term_operands(&self, a: &Matrix<F>, b: &Matrix<F>) -> Result<Vec<(Vec<Matrix<F>>, Vec<Matrix<F>>)>> {
        let shape = self.decomp.shape();
        let part = BlockPartition::for_shapes(shape.x, shape.y, shape.z, a.shape(), b.shape())?;
        let a_grid = split(a, Side::A, part)?;
        let b_grid = split(b, Side::B, part)?;
        (0..self.decomp.rank())
            .map(|t| {
                let (ea, eb) = self.decomp.term_inputs(t, &a_grid.blocks, &b_grid.blocks)?;
                Ok((row_strips(&ea, self.inner.0)?, col_strips(&eb, self.inner.1)?))
            })
            .collect()
    }

    /// Every worker's encoded operands.
    pub fn encode_tasks(&self, a: &Matrix<F>, b: &Matrix<F>) -> Result<Vec<WorkerTask<F>>> {
        let operands = self.term_operands(a, b)?;
        (0..self.n)
            .map(|worker| {
                let (group, local) = self.locate(worker);
                let (sa, sb) = &operands[group];
                let (ta, tb) = self.groups[group].codebook.encode(sa, sb, local)?;
                Ok(WorkerTask { worker, group, local, a: ta, b: tb })
            })
            .collect()
    }

    /// Run against a given channel outcome: compute only the kept workers'
    /// products, decode every group and recombine.
    pub fn run_round(
        &self,
        a: &Matrix<F>,
        b: &Matrix<F>,
        round: &RoundOutcome,
    ) -> Result<std::result::Result<AlloyOutcome<F>, AlloyFailure>> {
        let operands = self.term_operands(a, b)?;
        let schedule = self.schedule(round);
        if !schedule.success() {
            return Ok(Err(AlloyFailure { under_ranked: schedule.under_ranked.clone(), schedule }));
        }
        let mut term_values = Vec::with_capacity(self.groups.len());
        for (t, group) in self.groups.iter().enumerate() {
            let (sa, sb) = &operands[t];
            let mut decoder = ProductDecoder::new(&group.codebook);
            for &k in &schedule.accepted[t] {
                let (ta, tb) = group.codebook.encode(sa, sb, k)?;
                decoder.offer(k, ta.matmul(&tb));
            }
            let blocks = decoder.finish().expect("schedule only completes full-rank groups");
            term_values.push(assemble(&blocks, self.inner.0, self.inner.1)?);
        }
        let shape = self.decomp.shape();
        let c_blocks = self.decomp.recombine(&term_values)?;
        let product = assemble(&c_blocks, shape.x, shape.y)?;
        Ok(Ok(AlloyOutcome { product, schedule }))
    }

    /// Simulate the channel and run.
    pub fn run<R: Rng + ?Sized>(
        &self,
        a: &Matrix<F>,
        b: &Matrix<F>,
        channel: &ChannelConfig,
        rng: &mut R,
    ) -> Result<std::result::Result<AlloyOutcome<F>, AlloyFailure>> {
        let round = simulate_round(self.n, channel, rng);
        self.run_round(a, b, &round)
    }
}

/// Worker counts for the Strassen alloy code and EP on an `(x, y, z)`
/// partition: `(7 * (x/2) * (y/2), pxy + z - 1)`.
pub fn ep_comparison_point(x: usize, y: usize, z: usize) -> Result<(usize, usize)> {
    if x % 2 != 0 || y % 2 != 0 || z % 2 != 0 || x == 0 || y == 0 || z == 0 {
        return Err(Error::InvalidParameter(format!(
            "Strassen alloy needs even (x,y,z), got ({x},{y},{z})"
        )));
    }
    Ok((7 * (x / 2) * (y / 2), ep_threshold(x, y, z)))
}
