//! Experiment configuration and the CSV-producing commands behind
//! `padic-sim`.
//!
//! Every report starts with a `#` line holding the command name and the
//! resolved configuration (seed included), then a header row. Numbers are
//! written with Rust's shortest round-trip float formatting and trials are
//! collected in trial order, so a rerun reproduces the file exactly.

use std::fmt::Write as _;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alloy::AlloyPlan;
use crate::channel::{simulate_round, trial_rng, ChannelConfig, StreamPurpose};
use crate::ep::{ep_threshold, EpCode};
use crate::error::{Error, Result};
use crate::field::{PrimeField, Reals, ScalarMode};
use crate::matrix::Matrix;
use crate::padic::{coded_multiply, star_invertibility_exact, success_probability, uniformity_report, CodeBook, CoefficientLaw};
use crate::partition::{split, BlockPartition, Side};
use crate::tensor::{LinearCombMap, TensorDecomposition};
use crate::threshold::{
    achievability_sweep, estimate_threshold, invertibility_rate, simulate_trials, Scheme, SchemeSpec, Shape,
};

fn default_schemes() -> Vec<Scheme> {
    Scheme::ALL.to_vec()
}
fn default_shape() -> (usize, usize, usize) {
    (4, 4, 2)
}
fn default_field() -> ScalarMode {
    ScalarMode::Finite(101)
}
fn default_epsilon() -> f64 {
    0.05
}
fn default_seed() -> u64 {
    1
}
fn default_delta() -> usize {
    7
}
fn default_sizes() -> Vec<(usize, usize)> {
    vec![(4, 4), (8, 8), (16, 16)]
}
fn default_rate_fraction() -> f64 {
    0.9
}

/// One experiment. Every field has a default, so `{}` is a valid config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_schemes")]
    pub schemes: Vec<Scheme>,
    /// Partition `(x, y, z)`.
    #[serde(default = "default_shape")]
    pub shape: (usize, usize, usize),
    /// Block size `(P, S, Q)`: `A` blocks are `P x S`, `B` blocks `S x Q`.
    #[serde(default)]
    pub block: Option<(usize, usize, usize)>,
    #[serde(default = "default_field")]
    pub field: ScalarMode,
    #[serde(default)]
    pub p_f: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Defaults per command: 1000 (threshold, compare), 200 (stability),
    /// 10000 (sweep).
    #[serde(default)]
    pub trials: Option<usize>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Fixed worker count for `compare`; by default the largest minimum
    /// row count among the schemes.
    #[serde(default)]
    pub workers: Option<usize>,
    /// Extra workers over each scheme's minimum in `compare`.
    #[serde(default = "default_delta")]
    pub delta: usize,
    /// Grid sizes `(x, y)` for `sweep`.
    #[serde(default = "default_sizes")]
    pub sizes: Vec<(usize, usize)>,
    /// Rate as a fraction of capacity for `sweep`.
    #[serde(default = "default_rate_fraction")]
    pub rate_fraction: f64,
    /// Extra decomposition (JSON file) for `verify` to check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decomposition: Option<PathBuf>,
    #[serde(default, skip_serializing)]
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields default")
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidParameter(format!("config: {e}")))
    }

    pub fn shape(&self) -> Shape {
        Shape::new(self.shape.0, self.shape.1, self.shape.2)
    }

    fn channel(&self) -> Result<ChannelConfig> {
        ChannelConfig::new(self.p_f)
    }

    fn trials_or(&self, default: usize) -> Result<usize> {
        match self.trials.unwrap_or(default) {
            0 => Err(Error::InvalidParameter("trials must be positive".into())),
            t => Ok(t),
        }
    }

    fn preamble(&self, command: &str) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        format!("# padic-sim {command} {json}\n")
    }
}

/// Output of a command. `passed` is false only when `verify` found a
/// failing check.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub csv: String,
    pub passed: bool,
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        (values[mid - 1] + values[mid]) / 2.0
    }
}

/// Typical recovery threshold of every configured scheme.
pub fn cmd_threshold(config: &ExperimentConfig) -> Result<Report> {
    let channel = config.channel()?;
    let trials = config.trials_or(1000)?;
    let mut csv = config.preamble("threshold");
    csv.push_str("scheme,x,y,z,q,p_f,epsilon,trials,threshold,ci95,seed\n");
    for &scheme in &config.schemes {
        let spec = SchemeSpec::new(scheme, config.shape(), config.field)?;
        let est = estimate_threshold(&spec, &channel, config.epsilon, trials, config.seed)?;
        let threshold = est.threshold.map_or(-1, |t| t as i64);
        let Shape { x, y, z } = spec.shape;
        writeln!(
            csv,
            "{scheme},{x},{y},{z},{},{},{},{trials},{threshold},{},{}",
            config.field, config.p_f, config.epsilon, est.ci95, config.seed
        )
        .unwrap();
    }
    Ok(Report { csv, passed: true })
}

/// Per-trial completion for every scheme at a shared worker count and at
/// each scheme's own minimum plus `delta`.
pub fn cmd_compare(config: &ExperimentConfig) -> Result<Report> {
    if config.schemes.len() < 2 {
        return Err(Error::InvalidParameter("compare needs at least two schemes".into()));
    }
    let channel = config.channel()?;
    let trials = config.trials_or(1000)?;
    let specs = config
        .schemes
        .iter()
        .map(|&s| SchemeSpec::new(s, config.shape(), config.field))
        .collect::<Result<Vec<_>>>()?;
    let shared = config
        .workers
        .unwrap_or_else(|| specs.iter().map(SchemeSpec::minimum_rows).max().unwrap_or(1));
    let mut csv = config.preamble("compare");
    csv.push_str("scheme,n,trial,success,workers_used,sim_time\n");
    for own_minimum in [false, true] {
        for spec in &specs {
            let n = if own_minimum { spec.minimum_rows() + config.delta } else { shared };
            let outcomes = simulate_trials(spec, n, &channel, config.seed, trials)?;
            for (t, o) in outcomes.iter().enumerate() {
                let time = o.sim_time.unwrap_or(f64::INFINITY);
                writeln!(csv, "{},{n},{t},{},{},{time}", spec.scheme, o.success, o.workers_used).unwrap();
            }
            let successes = outcomes.iter().filter(|o| o.success).count() as f64 / trials as f64;
            let mut used: Vec<f64> = outcomes.iter().map(|o| o.workers_used as f64).collect();
            let mut times: Vec<f64> = outcomes.iter().map(|o| o.sim_time.unwrap_or(f64::INFINITY)).collect();
            writeln!(
                csv,
                "{},{n},median,{successes},{},{}",
                spec.scheme,
                median(&mut used),
                median(&mut times)
            )
            .unwrap();
        }
    }
    Ok(Report { csv, passed: true })
}

/// log10 relative error of one decode from exactly threshold-many rows;
/// `inf` when the decoder reports a singular system.
fn log10_error(decoded: Option<Matrix<Reals>>, exact: &Matrix<Reals>) -> f64 {
    match decoded {
        Some(c) => c.relative_error(exact).log10(),
        None => f64::INFINITY,
    }
}

fn stability_trial(x: usize, y: usize, block: (usize, usize, usize), seed: u64, trial: u64) -> Result<(f64, f64)> {
    let (p, s, q) = block;
    let part = BlockPartition::new(x, y, 1, p, s, q)?;
    let mut data = trial_rng(seed, trial, StreamPurpose::Data);
    let (ar, ac) = part.a_shape();
    let (br, bc) = part.b_shape();
    let a = Matrix::random(Reals, ar, ac, &mut data);
    let b = Matrix::random(Reals, br, bc, &mut data);
    let exact = a.matmul(&b);
    let k = x * y;

    let book = CodeBook::generate(Reals, k, x, y, &mut trial_rng(seed, trial, StreamPurpose::Code));
    let order: Vec<usize> = (0..k).collect();
    let random = coded_multiply(&book, &a, &b, &order)?.ok().map(|r| r.product);

    let ep = EpCode::new(Reals, x, y, 1, ep_threshold(x, y, 1))?;
    let ga = split(&a, Side::A, part)?;
    let gb = split(&b, Side::B, part)?;
    let returned = (0..ep.workers())
        .map(|w| {
            let (ta, tb) = ep.encode(&ga.blocks, &gb.blocks, w)?;
            Ok((w, ta.matmul(&tb)))
        })
        .collect::<Result<Vec<_>>>()?;
    let poly = ep
        .decode_unguarded(&returned)
        .ok()
        .map(|(blocks, _)| crate::partition::assemble(&blocks, x, y).expect("complete grid"));
    Ok((log10_error(random, &exact), log10_error(poly, &exact)))
}

/// Decode accuracy of the real random code against the EP Vandermonde
/// decoder on Gaussian data. Both decode from exactly `xy` rows.
pub fn cmd_stability(config: &ExperimentConfig) -> Result<Report> {
    if config.field != ScalarMode::Real {
        return Err(Error::InvalidParameter("stability runs in real mode (--q real)".into()));
    }
    let Shape { x, y, z } = config.shape();
    if z != 1 || x == 0 || y == 0 {
        return Err(Error::InvalidParameter(format!("stability compares 2-D codes: need z = 1, got ({x},{y},{z})")));
    }
    let block = config.block.unwrap_or((100, 100, 100));
    if block.0 == 0 || block.1 == 0 || block.2 == 0 {
        return Err(Error::InvalidParameter("block dimensions must be positive".into()));
    }
    let trials = config.trials_or(200)?;
    let errors = (0..trials as u64)
        .into_par_iter()
        .map(|t| stability_trial(x, y, block, config.seed, t))
        .collect::<Result<Vec<_>>>()?;
    let mut csv = config.preamble("stability");
    csv.push_str("scheme,x,y,trial,log10_rel_err\n");
    for (scheme, pick) in [(Scheme::GlobalPadic, 0), (Scheme::Ep, 1)] {
        for (t, e) in errors.iter().enumerate() {
            let v = if pick == 0 { e.0 } else { e.1 };
            writeln!(csv, "{scheme},{x},{y},{t},{v}").unwrap();
        }
    }
    Ok(Report { csv, passed: true })
}

/// Achievability sweep of the global code at `rate_fraction` of capacity.
pub fn cmd_sweep(config: &ExperimentConfig) -> Result<Report> {
    let trials = config.trials_or(10_000)?;
    if config.sizes.iter().any(|&(x, y)| x == 0 || y == 0) {
        return Err(Error::InvalidParameter("sweep sizes must be positive".into()));
    }
    let rows = achievability_sweep(config.p_f, config.rate_fraction, &config.sizes, config.field, trials, config.seed)?;
    let mut csv = config.preamble("sweep");
    csv.push_str("x,y,size,n,rate,capacity,failures,trials,failure_probability\n");
    let capacity = crate::channel::capacity(config.p_f);
    for r in rows {
        writeln!(
            csv,
            "{},{},{},{},{},{capacity},{},{trials},{}",
            r.x,
            r.y,
            r.x * r.y,
            r.n,
            r.rate,
            r.failures,
            r.failure_probability
        )
        .unwrap();
    }
    Ok(Report { csv, passed: true })
}

/// One line of the `verify` report.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub observed: String,
    pub expected: String,
    /// `None` for informational lines that never fail the run.
    pub passed: Option<bool>,
}

impl Check {
    fn new(name: &str, observed: impl ToString, expected: impl ToString, passed: bool) -> Self {
        Self { name: name.into(), observed: observed.to_string(), expected: expected.to_string(), passed: Some(passed) }
    }

    fn info(name: &str, observed: impl ToString, expected: impl ToString) -> Self {
        Self { name: name.into(), observed: observed.to_string(), expected: expected.to_string(), passed: None }
    }
}

/// Strassen with the output signs of term 5 flipped.
pub fn corrupted_strassen() -> TensorDecomposition {
    let mut s = TensorDecomposition::strassen();
    let t5 = &mut s.terms_mut()[4];
    t5.output = LinearCombMap::new(t5.output.weights().iter().map(|&(c, w)| (c, -w)));
    s
}

fn strassen_checks(seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = TensorDecomposition::strassen();
    let finite = s.verify(PrimeField::new(101)?, 100, 4, &mut rng)?;
    let real = s.verify(Reals, 100, 64, &mut rng)?;
    let broken = corrupted_strassen().verify(PrimeField::new(101)?, 10, 2, &mut rng)?;
    let located = !broken.passed && broken.implicated_terms == [4];
    Ok(vec![
        Check::new("strassen-f101", format!("{}/{}", if finite.passed { finite.trials } else { 0 }, finite.trials), "100/100", finite.passed),
        Check::new("strassen-real-b64", real.max_deviation, "<=1e-10", real.passed && real.max_deviation <= 1e-10),
        Check::new(
            "strassen-sign-flip-located",
            format!("terms {:?}", broken.implicated_terms.iter().map(|t| t + 1).collect::<Vec<_>>()),
            "terms [5]",
            located,
        ),
    ])
}

/// Check a user-supplied decomposition over `F_101`.
pub fn decomposition_check(decomp: &TensorDecomposition, seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = decomp.verify(PrimeField::new(101)?, 100, 4, &mut rng)?;
    let one_based = |xs: &[usize]| xs.iter().map(|i| i + 1).collect::<Vec<_>>();
    let observed = if v.passed {
        format!("{}/{}", v.trials, v.trials)
    } else {
        format!("wrong outputs C{:?} terms {:?}", one_based(&v.mismatched_outputs), one_based(&v.implicated_terms))
    };
    let shape = decomp.shape();
    let name = format!("decomposition-{}{}{}-rank{}", shape.x, shape.y, shape.z, decomp.rank());
    Ok(Check::new(&name, observed.replace(',', ""), format!("{}/{}", v.trials, v.trials), v.passed))
}

/// Decode `trials` random products end to end and count mismatches.
fn decode_mismatches<F: CoefficientLaw>(field: F, scheme: Scheme, shape: Shape, trials: u64, seed: u64) -> Result<usize>
where
    F::Elem: PartialEq,
{
    let Shape { x, y, z } = shape;
    let part = BlockPartition::new(x, y, z, 2, 3, 2)?;
    let channel = ChannelConfig::new(0.1)?;
    let mut bad = 0;
    for t in 0..trials {
        let mut data = trial_rng(seed, t, StreamPurpose::Data);
        let (ar, ac) = part.a_shape();
        let (br, bc) = part.b_shape();
        let a = Matrix::random(field, ar, ac, &mut data);
        let b = Matrix::random(field, br, bc, &mut data);
        let exact = a.matmul(&b);
        let mut code_rng = trial_rng(seed, t, StreamPurpose::Code);
        let mut chan = trial_rng(seed, t, StreamPurpose::Channel);
        let decoded = match scheme {
            Scheme::GlobalPadic => {
                let n = x * y + 8;
                let book = CodeBook::generate(field, n, x, y, &mut code_rng);
                let round = simulate_round(n, &channel, &mut chan);
                coded_multiply(&book, &a, &b, &round.order())?.ok().map(|r| r.product)
            }
            Scheme::AlloyStrassen => {
                let plan = AlloyPlan::plan(TensorDecomposition::strassen(), 7 * (x / 2) * (y / 2) + 14, (x / 2, y / 2), field, &mut code_rng)?;
                plan.run(&a, &b, &channel, &mut chan)?.ok().map(|o| o.product)
            }
            Scheme::Ep => {
                let n = ep_threshold(x, y, z) + 8;
                let ep = EpCode::new(field, x, y, z, n)?;
                let ga = split(&a, Side::A, part)?;
                let gb = split(&b, Side::B, part)?;
                let round = simulate_round(n, &channel, &mut chan);
                let returned = round
                    .order()
                    .into_iter()
                    .map(|w| {
                        let (ta, tb) = ep.encode(&ga.blocks, &gb.blocks, w)?;
                        Ok((w, ta.matmul(&tb)))
                    })
                    .collect::<Result<Vec<_>>>()?;
                ep.decode(&returned)
                    .ok()
                    .map(|blocks| crate::partition::assemble(&blocks, x, y).expect("complete grid"))
            }
        };
        // A round that could not decode is not a mismatch; a wrong product is.
        if let Some(c) = decoded {
            if c != exact {
                bad += 1;
            }
        }
    }
    Ok(bad)
}

/// Every invariant check `verify` runs, in report order.
pub fn verify_checks(seed: u64) -> Result<Vec<Check>> {
    let mut checks = Vec::new();

    checks.push(Check::new("ep-threshold-442", ep_threshold(4, 4, 2), 33, ep_threshold(4, 4, 2) == 33));
    let plan = AlloyPlan::plan(
        TensorDecomposition::strassen(),
        28,
        (2, 2),
        PrimeField::new(101)?,
        &mut ChaCha8Rng::seed_from_u64(seed),
    )?;
    let sizes = plan.group_sizes();
    checks.push(Check::new("alloy-workers-442", plan.workers(), 28, plan.workers() == 28 && sizes.iter().all(|&s| s == 4)));

    let trials = 100_000;
    let exact = star_invertibility_exact(2, 2, 2)?;
    let observed = invertibility_rate(ScalarMode::Finite(2), 2, 2, trials, seed)?;
    let se = (exact * (1.0 - exact) / trials as f64).sqrt();
    checks.push(Check::new("invertibility-q2-exact", observed, exact, (observed - exact).abs() <= 4.0 * se));
    for q in [2u64, 7] {
        let observed = invertibility_rate(ScalarMode::Finite(q), 2, 2, trials, seed)?;
        checks.push(Check::info(&format!("invertibility-q{q}-uniform-closed-form"), observed, success_probability(q, 4)));
        let bound = (1.0 - 1.0 / q as f64).powi(4);
        checks.push(Check::info(&format!("invertibility-q{q}-above-bound"), observed, format!(">{bound}")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for q in [2u64, 5, 11] {
        for order in [2u32, 3] {
            let r = uniformity_report(q, order, 1_000_000, &mut rng)?;
            checks.push(Check::new(&format!("uniformity-q{q}-l{order}"), r.total_variation, "<=0.01", r.total_variation <= 0.01));
        }
    }

    checks.extend(strassen_checks(seed)?);

    let f = PrimeField::new(101)?;
    for scheme in Scheme::ALL {
        for shape in [Shape::new(2, 2, 2), Shape::new(4, 4, 2)] {
            let bad = decode_mismatches(f, scheme, shape, 20, seed)?;
            let name = format!("decode-{scheme}-{}{}{}-f101", shape.x, shape.y, shape.z);
            checks.push(Check::new(&name, bad, 0, bad == 0));
        }
    }
    Ok(checks)
}

/// Run the invariant suite. `passed` is false when any non-informational
/// check fails.
pub fn cmd_verify(config: &ExperimentConfig) -> Result<Report> {
    let mut checks = verify_checks(config.seed)?;
    if let Some(path) = &config.decomposition {
        let text = std::fs::read_to_string(path).map_err(|e| Error::InvalidParameter(format!("{}: {e}", path.display())))?;
        let decomp = TensorDecomposition::from_json(&text)?;
        checks.push(decomposition_check(&decomp, config.seed)?);
    }
    let mut csv = config.preamble("verify");
    csv.push_str("check,observed,expected,status\n");
    let mut passed = true;
    for c in &checks {
        let status = match c.passed {
            Some(true) => "pass",
            Some(false) => {
                passed = false;
                "FAIL"
            }
            None => "info",
        };
        writeln!(csv, "{},{},{},{status}", c.name, c.observed, c.expected).unwrap();
    }
    Ok(Report { csv, passed })
}
