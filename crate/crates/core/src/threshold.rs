//! Monte Carlo over whole schemes: per-trial decodability, the typical
//! recovery threshold, and rate sweeps against capacity.
//!
//! Decodability depends only on the coefficient rows that arrive, never on
//! the matrix data, so trials here track ranks and skip the products.
//! Trial `i` always draws its codebook and channel from the streams
//! `(seed, i)`; comparing two worker counts therefore compares the same
//! random codes and faults (paired seeds).

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alloy::AlloyPlan;
use crate::channel::{simulate_round, trial_rng, ChannelConfig, RoundOutcome, StreamPurpose};
use crate::ep::ep_threshold;
use crate::error::{Error, Result};
use crate::field::{PrimeField, Reals, ScalarMode};
use crate::matrix::{rank_mod_prime, RowEchelon};
use crate::padic::{CodeBook, CoefficientLaw};
use crate::tensor::TensorDecomposition;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "global-padic")]
    GlobalPadic,
    #[serde(rename = "alloy-strassen")]
    AlloyStrassen,
    #[serde(rename = "ep")]
    Ep,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::GlobalPadic, Scheme::AlloyStrassen, Scheme::Ep];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::GlobalPadic => "global-padic",
            Scheme::AlloyStrassen => "alloy-strassen",
            Scheme::Ep => "ep",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|scheme| scheme.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown scheme `{s}` (global-padic, alloy-strassen, ep)")))
    }
}

/// Partition type `(x, y, z)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub x: usize,
    pub y: usize,
    pub z: usize,
}

impl Shape {
    pub fn new(x: usize, y: usize, z: usize) -> Self {
        Self { x, y, z }
    }
}

/// A scheme applied to a partition over a chosen field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemeSpec {
    pub scheme: Scheme,
    pub shape: Shape,
    pub mode: ScalarMode,
}

impl SchemeSpec {
    pub fn new(scheme: Scheme, shape: Shape, mode: ScalarMode) -> Result<Self> {
        let Shape { x, y, z } = shape;
        if x == 0 || y == 0 || z == 0 {
            return Err(Error::InvalidParameter("partition dimensions must be positive".into()));
        }
        if scheme == Scheme::AlloyStrassen && (x % 2 != 0 || y % 2 != 0 || z % 2 != 0) {
            return Err(Error::InvalidParameter(format!(
                "alloy-strassen needs even (x,y,z), got ({x},{y},{z})"
            )));
        }
        mode.validate()?;
        Ok(Self { scheme, shape, mode })
    }

    /// Fewest worker results that can ever decode.
    pub fn minimum_rows(&self) -> usize {
        let Shape { x, y, z } = self.shape;
        match self.scheme {
            Scheme::GlobalPadic => x * y,
            Scheme::AlloyStrassen => 7 * (x / 2) * (y / 2),
            Scheme::Ep => ep_threshold(x, y, z),
        }
    }

    /// Largest worker count the scheme can be built for.
    pub fn max_workers(&self) -> usize {
        match (self.scheme, self.mode) {
            (Scheme::Ep, ScalarMode::Finite(q)) => (q - 1) as usize,
            _ => usize::MAX,
        }
    }
}

/// One simulated round of one scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    pub success: bool,
    /// Arrivals the master processed before it could decode (all arrivals
    /// on failure).
    pub workers_used: usize,
    /// Arrival time of the result that made decoding possible.
    pub sim_time: Option<f64>,
}

fn global_trial<F: CoefficientLaw>(field: F, x: usize, y: usize, n: usize, round: &RoundOutcome, seed: u64, trial: u64) -> TrialOutcome {
    let needed = x * y;
    if round.arrivals.len() < needed {
        return TrialOutcome { success: false, workers_used: round.arrivals.len(), sim_time: None };
    }
    let codebook = CodeBook::generate(field, n, x, y, &mut trial_rng(seed, trial, StreamPurpose::Code));
    let mut span = RowEchelon::new(field, needed);
    for (used, arrival) in round.arrivals.iter().enumerate() {
        span.insert(codebook.g_c().row(arrival.worker));
        if span.is_full() {
            return TrialOutcome { success: true, workers_used: used + 1, sim_time: Some(arrival.time) };
        }
    }
    TrialOutcome { success: false, workers_used: round.arrivals.len(), sim_time: None }
}

fn alloy_trial<F: CoefficientLaw>(field: F, shape: Shape, n: usize, round: &RoundOutcome, seed: u64, trial: u64) -> TrialOutcome {
    let plan = AlloyPlan::plan(
        TensorDecomposition::strassen(),
        n,
        (shape.x / 2, shape.y / 2),
        field,
        &mut trial_rng(seed, trial, StreamPurpose::Code),
    )
    .expect("n >= minimum rows >= 7");
    let schedule = plan.schedule(round);
    TrialOutcome {
        success: schedule.success(),
        workers_used: schedule.arrivals_used,
        sim_time: schedule.completion_time,
    }
}

fn trial_with<F: CoefficientLaw>(field: F, spec: &SchemeSpec, n: usize, channel: &ChannelConfig, seed: u64, trial: u64) -> TrialOutcome {
    let round = simulate_round(n, channel, &mut trial_rng(seed, trial, StreamPurpose::Channel));
    let Shape { x, y, .. } = spec.shape;
    match spec.scheme {
        Scheme::GlobalPadic => global_trial(field, x, y, n, &round, seed, trial),
        Scheme::AlloyStrassen => alloy_trial(field, spec.shape, n, &round, seed, trial),
        Scheme::Ep => {
            // Any threshold-many distinct evaluations decode.
            let t = spec.minimum_rows();
            match round.arrivals.get(t.wrapping_sub(1)) {
                Some(a) if t > 0 => TrialOutcome { success: true, workers_used: t, sim_time: Some(a.time) },
                _ => TrialOutcome { success: false, workers_used: round.arrivals.len(), sim_time: None },
            }
        }
    }
}

/// Simulate trial `trial` of `spec` with `n` workers.
pub fn simulate_trial(spec: &SchemeSpec, n: usize, channel: &ChannelConfig, seed: u64, trial: u64) -> Result<TrialOutcome> {
    if n < spec.minimum_rows() {
        return Ok(TrialOutcome { success: false, workers_used: 0, sim_time: None });
    }
    if n > spec.max_workers() {
        return Err(Error::InvalidParameter(format!("{} cannot be built for {n} workers over {}", spec.scheme, spec.mode)));
    }
    Ok(match spec.mode {
        ScalarMode::Finite(q) => trial_with(PrimeField::new(q)?, spec, n, channel, seed, trial),
        ScalarMode::Real => trial_with(Reals, spec, n, channel, seed, trial),
    })
}

/// Trials `0..trials`, in trial order.
pub fn simulate_trials(spec: &SchemeSpec, n: usize, channel: &ChannelConfig, seed: u64, trials: usize) -> Result<Vec<TrialOutcome>> {
    (0..trials as u64)
        .into_par_iter()
        .map(|t| simulate_trial(spec, n, channel, seed, t))
        .collect()
}

pub fn failure_rate(spec: &SchemeSpec, n: usize, channel: &ChannelConfig, seed: u64, trials: usize) -> Result<f64> {
    let outcomes = simulate_trials(spec, n, channel, seed, trials)?;
    Ok(outcomes.iter().filter(|o| !o.success).count() as f64 / trials as f64)
}

fn first_rows_invertible<F: CoefficientLaw>(field: F, x: usize, y: usize, seed: u64, trial: u64) -> bool {
    let k = x * y;
    let book = CodeBook::generate(field, k, x, y, &mut trial_rng(seed, trial, StreamPurpose::Code));
    let mut span = RowEchelon::new(field, k);
    (0..k).for_each(|w| {
        span.insert(book.g_c().row(w));
    });
    span.is_full()
}

/// Fraction of trials in which the first `x*y` rows of a fresh codebook
/// are invertible.
pub fn invertibility_rate(mode: ScalarMode, x: usize, y: usize, trials: usize, seed: u64) -> Result<f64> {
    if x == 0 || y == 0 || trials == 0 {
        return Err(Error::InvalidParameter("x, y and trials must be positive".into()));
    }
    let hits = match mode.validate()? {
        ScalarMode::Finite(q) => {
            let f = PrimeField::new(q)?;
            (0..trials as u64).into_par_iter().filter(|&t| first_rows_invertible(f, x, y, seed, t)).count()
        }
        ScalarMode::Real => (0..trials as u64).into_par_iter().filter(|&t| first_rows_invertible(Reals, x, y, seed, t)).count(),
    };
    Ok(hits as f64 / trials as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdEstimate {
    pub spec: SchemeSpec,
    pub fault_probability: f64,
    pub epsilon: f64,
    pub trials: usize,
    /// Smallest `n` whose failure rate is at most `epsilon`; `None` when
    /// the search cap was hit.
    pub threshold: Option<usize>,
    /// Failure rate at `threshold`.
    pub failure_at_threshold: f64,
    /// Failure rate at `threshold - 1`, when that was evaluated.
    pub failure_below: Option<f64>,
    /// 95% normal-approximation half-width of `failure_at_threshold`.
    pub ci95: f64,
}

/// Largest worker count tried is this multiple of the minimum rows.
pub const SEARCH_CAP_FACTOR: usize = 64;

fn half_width(p: f64, trials: usize) -> f64 {
    1.96 * (p * (1.0 - p) / trials as f64).sqrt()
}

/// Smallest worker count whose empirical failure rate is at most `epsilon`.
///
/// Starts at the minimum row count, doubles until the rate drops under
/// `epsilon`, then bisects. Every candidate reuses the same trial streams,
/// which makes the estimated failure rate non-increasing in `n` for all
/// three schemes.
pub fn estimate_threshold(spec: &SchemeSpec, channel: &ChannelConfig, epsilon: f64, trials: usize, seed: u64) -> Result<ThresholdEstimate> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!("epsilon {epsilon} outside (0, 1)")));
    }
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be positive".into()));
    }
    let lo = spec.minimum_rows();
    let cap = (SEARCH_CAP_FACTOR * lo).min(spec.max_workers());
    let mut cache = std::collections::BTreeMap::new();
    let mut rate_at = |n: usize| -> Result<f64> {
        if let Some(&r) = cache.get(&n) {
            return Ok(r);
        }
        let r = failure_rate(spec, n, channel, seed, trials)?;
        cache.insert(n, r);
        Ok(r)
    };
    let not_found = |failure: f64| ThresholdEstimate {
        spec: *spec,
        fault_probability: channel.fault_probability,
        epsilon,
        trials,
        threshold: None,
        failure_at_threshold: failure,
        failure_below: None,
        ci95: half_width(failure, trials),
    };
    if lo > cap {
        return Ok(not_found(1.0));
    }
    // Bracket: rate(bad) > eps >= rate(good).
    let mut good = lo;
    let mut bad = None;
    loop {
        let r = rate_at(good)?;
        if r <= epsilon {
            break;
        }
        bad = Some(good);
        if good == cap {
            return Ok(not_found(r));
        }
        good = (good * 2).min(cap);
    }
    if let Some(mut b) = bad {
        while good - b > 1 {
            let mid = b + (good - b) / 2;
            if rate_at(mid)? <= epsilon {
                good = mid;
            } else {
                b = mid;
            }
        }
    }
    let failure = rate_at(good)?;
    let below = if good > lo { Some(rate_at(good - 1)?) } else { None };
    Ok(ThresholdEstimate {
        spec: *spec,
        fault_probability: channel.fault_probability,
        epsilon,
        trials,
        threshold: Some(good),
        failure_at_threshold: failure,
        failure_below: below,
        ci95: half_width(failure, trials),
    })
}

/// Whether all non-erased rows of a global code span the product space.
/// Same outcome as [`simulate_trial`] but ignores arrival order, which
/// allows a batch rank computation.
pub fn global_decodable(mode: ScalarMode, x: usize, y: usize, n: usize, channel: &ChannelConfig, seed: u64, trial: u64) -> bool {
    let round = simulate_round(n, channel, &mut trial_rng(seed, trial, StreamPurpose::Channel));
    let k = x * y;
    if round.arrivals.len() < k {
        return false;
    }
    match mode {
        ScalarMode::Finite(q) => {
            let f = PrimeField::new(q).expect("validated mode");
            let book = CodeBook::generate(f, n, x, y, &mut trial_rng(seed, trial, StreamPurpose::Code));
            let data: Vec<u64> = round.arrivals.iter().flat_map(|a| book.g_c().row(a.worker).iter().copied()).collect();
            rank_mod_prime(f, round.arrivals.len(), k, data) == k
        }
        ScalarMode::Real => global_trial(Reals, x, y, n, &round, seed, trial).success,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub x: usize,
    pub y: usize,
    /// Worker count `ceil(xy / (rate_fraction * (1 - p_f)))`.
    pub n: usize,
    pub rate: f64,
    pub failures: usize,
    pub failure_probability: f64,
}

/// Worker count that runs a 2-D code on `x*y` blocks at `rate_fraction`
/// of capacity.
pub fn workers_for_rate(xy: usize, rate_fraction: f64, fault_probability: f64) -> Result<usize> {
    let target = rate_fraction * crate::channel::capacity(fault_probability);
    if !(target > 0.0) || !rate_fraction.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "rate fraction {rate_fraction} at p_f {fault_probability} gives no positive rate"
        )));
    }
    // Guard against 16 / 1.0 landing a hair above an integer.
    Ok(((xy as f64 / target) - 1e-9).ceil().max(1.0) as usize)
}

/// Global p-adic codes on `(x, y, 1)` partitions at a fixed fraction of
/// capacity. A trial fails when the non-erased rows span less than `xy`.
pub fn achievability_sweep(
    fault_probability: f64,
    rate_fraction: f64,
    sizes: &[(usize, usize)],
    mode: ScalarMode,
    trials: usize,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    let channel = ChannelConfig::new(fault_probability)?;
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be positive".into()));
    }
    sizes
        .iter()
        .map(|&(x, y)| {
            let n = workers_for_rate(x * y, rate_fraction, fault_probability)?;
            SchemeSpec::new(Scheme::GlobalPadic, Shape::new(x, y, 1), mode)?;
            let failures = (0..trials as u64)
                .into_par_iter()
                .filter(|&t| !global_decodable(mode, x, y, n, &channel, seed, t))
                .count();
            Ok(SweepRow {
                x,
                y,
                n,
                rate: crate::channel::rate(x, y, n),
                failures,
                failure_probability: failures as f64 / trials as f64,
            })
        })
        .collect()
}
