//! The worker erasure channel: i.i.d. faults plus a latency model that
//! fixes the order in which surviving results reach the master.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shifted-exponential completion time: `shift + Exp(rate)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Latency {
    pub shift: f64,
    pub rate: f64,
}

impl Default for Latency {
    fn default() -> Self {
        Self { shift: 1.0, rate: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    /// Per-worker fault probability `p_f`.
    pub fault_probability: f64,
    #[serde(default)]
    pub latency: Latency,
}

impl ChannelConfig {
    pub fn new(fault_probability: f64) -> Result<Self> {
        Self { fault_probability, latency: Latency::default() }.validated()
    }

    pub fn validated(self) -> Result<Self> {
        if !(0.0..=1.0).contains(&self.fault_probability) {
            return Err(Error::InvalidParameter(format!(
                "fault probability {} outside [0, 1]",
                self.fault_probability
            )));
        }
        if !(self.latency.shift >= 0.0 && self.latency.rate > 0.0 && self.latency.rate.is_finite()) {
            return Err(Error::InvalidParameter("latency needs shift >= 0 and rate > 0".into()));
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WorkerStatus {
    Returned { time: f64 },
    Erased,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arrival {
    pub worker: usize,
    pub time: f64,
}

/// One use of the channel by `n` workers.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub statuses: Vec<WorkerStatus>,
    /// Non-erased workers sorted by completion time.
    pub arrivals: Vec<Arrival>,
}

impl RoundOutcome {
    pub fn erasures(&self) -> usize {
        self.statuses.iter().filter(|s| matches!(s, WorkerStatus::Erased)).count()
    }

    /// Build an outcome from an explicit arrival order (unit spacing);
    /// workers not listed are erased.
    pub fn from_order(n: usize, order: &[usize]) -> Self {
        let mut statuses = vec![WorkerStatus::Erased; n];
        let arrivals: Vec<Arrival> = order
            .iter()
            .enumerate()
            .map(|(rank, &worker)| Arrival { worker, time: (rank + 1) as f64 })
            .collect();
        for a in &arrivals {
            statuses[a.worker] = WorkerStatus::Returned { time: a.time };
        }
        Self { statuses, arrivals }
    }

    pub fn order(&self) -> Vec<usize> {
        self.arrivals.iter().map(|a| a.worker).collect()
    }
}

/// Draw one round. Worker `w` consumes exactly two draws (fault, latency)
/// in index order, so a round over `n + 1` workers extends the round over
/// `n` workers drawn from the same stream.
pub fn simulate_round<R: Rng + ?Sized>(n: usize, config: &ChannelConfig, rng: &mut R) -> RoundOutcome {
    let exp = Exp::new(config.latency.rate).expect("validated rate");
    let mut statuses = Vec::with_capacity(n);
    let mut arrivals = Vec::with_capacity(n);
    for worker in 0..n {
        let erased = rng.random::<f64>() < config.fault_probability;
        let time = config.latency.shift + exp.sample(rng);
        if erased {
            statuses.push(WorkerStatus::Erased);
        } else {
            statuses.push(WorkerStatus::Returned { time });
            arrivals.push(Arrival { worker, time });
        }
    }
    arrivals.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.worker.cmp(&b.worker)));
    RoundOutcome { statuses, arrivals }
}

/// Computational rate `xy / n` in units of `log(|Y| - 1)`.
pub fn rate(x: usize, y: usize, n: usize) -> f64 {
    (x * y) as f64 / n as f64
}

/// Capacity `1 - p_f` in the same units (uniform non-erasure outputs).
pub fn capacity(fault_probability: f64) -> f64 {
    1.0 - fault_probability
}

/// Independent random stream for `(seed, trial, purpose)`. Trials drawn
/// from these streams give the same statistics whether they run serially
/// or in parallel.
pub fn trial_rng(seed: u64, trial: u64, purpose: StreamPurpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial.wrapping_mul(StreamPurpose::COUNT).wrapping_add(purpose as u64));
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamPurpose {
    Code = 0,
    Channel = 1,
    Data = 2,
}

impl StreamPurpose {
    const COUNT: u64 = 4;
}
