//! Browser bindings. Every export returns a JSON string; errors come back
//! as `{"error": "..."}` so the page never has to catch.

use padic_alloy::channel::ChannelConfig;
use padic_alloy::padic::{success_probability, PadicDistribution};
use padic_alloy::threshold::{failure_rate, invertibility_rate, Scheme, SchemeSpec, Shape};
use padic_alloy::ScalarMode;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn respond(result: padic_alloy::Result<Value>) -> String {
    match result {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e.to_string() }).to_string(),
    }
}

/// Law of one p-adic coefficient and of the product of `order` of them.
#[wasm_bindgen]
pub fn padic_distribution(q: u32, order: u32, samples: u32, seed: u32) -> String {
    respond((|| {
        let dist = PadicDistribution::new(u64::from(q), order)?;
        let mut rng = ChaCha8Rng::seed_from_u64(u64::from(seed));
        let report = padic_alloy::padic::uniformity_report(u64::from(q), order, u64::from(samples.max(1)), &mut rng)?;
        Ok(json!({
            "q": q,
            "order": order,
            "p_zero": dist.p_zero(),
            "p_nonzero": dist.p_nonzero(),
            "product_frequencies": report.frequencies,
            "total_variation": report.total_variation,
        }))
    })())
}

/// Invertibility of the first `x*y` codebook rows for each prime in
/// `primes`, next to the uniform-matrix closed form.
#[wasm_bindgen]
pub fn invertibility(primes: &[u32], x: u32, y: u32, trials: u32, seed: u32) -> String {
    respond((|| {
        let (x, y) = (x as usize, y as usize);
        let rows = primes
            .iter()
            .map(|&q| {
                let observed = invertibility_rate(ScalarMode::Finite(u64::from(q)).validate()?, x, y, trials.max(1) as usize, u64::from(seed))?;
                Ok(json!({
                    "q": q,
                    "observed": observed,
                    "uniform_closed_form": success_probability(u64::from(q), (x * y) as u32),
                    "lower_bound": (1.0 - 1.0 / f64::from(q)).powi((x * y) as i32),
                }))
            })
            .collect::<padic_alloy::Result<Vec<_>>>()?;
        Ok(Value::Array(rows))
    })())
}

/// Failure probability against worker count for one scheme, from its
/// minimum row count up to `extra` workers beyond it.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn failure_curve(scheme: &str, x: u32, y: u32, z: u32, q: u32, p_f: f64, extra: u32, trials: u32, seed: u32) -> String {
    respond((|| {
        let scheme: Scheme = scheme.parse()?;
        let spec = SchemeSpec::new(scheme, Shape::new(x as usize, y as usize, z as usize), ScalarMode::Finite(u64::from(q)))?;
        let channel = ChannelConfig::new(p_f)?;
        let lo = spec.minimum_rows();
        let hi = (lo + extra as usize).min(spec.max_workers());
        let points = (lo..=hi)
            .map(|n| Ok(json!({ "n": n, "failure": failure_rate(&spec, n, &channel, u64::from(seed), trials.max(1) as usize)? })))
            .collect::<padic_alloy::Result<Vec<_>>>()?;
        Ok(json!({ "scheme": scheme.name(), "minimum_rows": lo, "points": points }))
    })())
}
