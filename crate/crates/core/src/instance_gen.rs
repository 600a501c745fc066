//! Seeded random scenarios for optimality sweeps and property tests.
//!
//! Devices get a speed factor between 1 and the sampled heterogeneity
//! (slow devices also get small memory budgets, like an embedded board next
//! to a workstation). Encoder work is proportional to parameter count.
//! Scenarios without a feasible placement are rejected and redrawn.

use std::ops::RangeInclusive;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::placement::{brute_force_place, greedy_place};
use crate::scenario::{
    ComputeEntry, DeviceSpec, Link, ModelSpec, ModuleSpec, Request, Scenario,
};
use crate::sharing::build_shared_catalog;

pub const MODALITIES: [&str; 6] = ["vision", "text", "audio", "depth", "imu", "thermal"];

/// Seconds per 100M parameters on the fastest device.
const WORK_PER_100M: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenParams {
    pub seed: u64,
    pub n_devices: RangeInclusive<usize>,
    pub n_models: RangeInclusive<usize>,
    pub encoders_per_model: RangeInclusive<usize>,
    pub requests_per_model: RangeInclusive<usize>,
    /// Multiplier on a 40M-parameter base encoder.
    pub memory_spread: RangeInclusive<f64>,
    /// Slowest-to-fastest device speed ratio.
    pub heterogeneity: RangeInclusive<f64>,
    /// Chance that an encoder reuses an existing module of its modality.
    pub share_prob: f64,
    /// Requests arrive uniformly in `[0, arrival_window]`.
    pub arrival_window: f64,
    pub serialize_uplinks: bool,
    pub max_retries: u32,
    /// Two speed tiers instead of speeds spread over the whole range.
    pub tiers: Option<Tiers>,
}

/// A fast tier of `fast` devices with speeds in `[1, spread]` and a slow
/// tier with speeds in `[heterogeneity / spread, heterogeneity]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tiers {
    pub fast: usize,
    pub spread: f64,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            seed: 0,
            n_devices: 3..=5,
            n_models: 1..=3,
            encoders_per_model: 1..=3,
            requests_per_model: 1..=1,
            memory_spread: 0.5..=8.0,
            heterogeneity: 10.0..=20.0,
            share_prob: 0.5,
            arrival_window: 0.0,
            serialize_uplinks: false,
            max_retries: 200,
            tiers: None,
        }
    }
}

impl GenParams {
    /// A small home testbed: three workstation-class devices within 1.5x
    /// of each other, two embedded boards 10-20x slower, and one model of
    /// two to four modules.
    pub fn testbed_like(seed: u64) -> Self {
        Self {
            seed,
            n_devices: 5..=5,
            n_models: 1..=1,
            encoders_per_model: 1..=3,
            tiers: Some(Tiers { fast: 3, spread: 1.5 }),
            ..Self::default()
        }
    }

    fn check(&self) -> Result<(), GenerationError> {
        let bad = |what: &str| Err(GenerationError::InvalidParams(what.to_owned()));
        if self.n_devices.is_empty() || *self.n_devices.start() == 0 {
            return bad("n_devices must be a non-empty range of positive counts");
        }
        if self.n_models.is_empty() || *self.n_models.start() == 0 {
            return bad("n_models must be a non-empty range of positive counts");
        }
        if self.encoders_per_model.is_empty()
            || *self.encoders_per_model.start() == 0
            || *self.encoders_per_model.end() > MODALITIES.len()
        {
            return bad("encoders_per_model must lie within 1..=6");
        }
        if self.requests_per_model.is_empty() {
            return bad("requests_per_model must be non-empty");
        }
        let positive = |r: &RangeInclusive<f64>| r.start() <= r.end() && *r.start() > 0.0;
        if !positive(&self.memory_spread) || !positive(&self.heterogeneity) || *self.heterogeneity.start() < 1.0 {
            return bad("memory_spread must be positive and heterogeneity at least 1");
        }
        if !(0.0..=1.0).contains(&self.share_prob) {
            return bad("share_prob must lie in [0, 1]");
        }
        if !(self.arrival_window >= 0.0) {
            return bad("arrival_window must be non-negative");
        }
        if let Some(t) = self.tiers {
            if t.fast == 0 || t.fast > *self.n_devices.start() || !(t.spread >= 1.0) {
                return bad("tiers need 1..=n_devices fast devices and a spread of at least 1");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenerationError {
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
    #[error("no feasible scenario after {0} attempts")]
    GenerationFailed(u32),
}

fn sample_f64(rng: &mut ChaCha8Rng, r: &RangeInclusive<f64>) -> f64 {
    if r.start() == r.end() {
        *r.start()
    } else {
        rng.gen_range(r.clone())
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        return lo;
    }
    (rng.gen_range(lo.ln()..=hi.ln())).exp()
}

fn draw(rng: &mut ChaCha8Rng, params: &GenParams, attempt: u32) -> Scenario {
    let mut s = Scenario {
        name: Some(format!("gen-{}-{attempt}", params.seed)),
        ..Scenario::default()
    };

    let n_dev = rng.gen_range(params.n_devices.clone());
    let hetero = sample_f64(rng, &params.heterogeneity);
    // speed factor 1 is the fastest device; later devices are not ordered
    let mut speed: Vec<f64> = (0..n_dev).map(|_| log_uniform(rng, 1.0, hetero)).collect();
    if let Some(t) = params.tiers {
        let mut order: Vec<usize> = (0..n_dev).collect();
        order.shuffle(rng);
        let spread = t.spread.min(hetero);
        for (rank, &i) in order.iter().enumerate() {
            speed[i] = if rank < t.fast {
                log_uniform(rng, 1.0, spread)
            } else {
                log_uniform(rng, hetero / spread, hetero)
            };
        }
        speed[order[0]] = 1.0;
    } else if n_dev > 1 {
        let fast = rng.gen_range(0..n_dev);
        let slow = (fast + rng.gen_range(1..n_dev)) % n_dev;
        speed[fast] = 1.0;
        speed[slow] = hetero;
    } else {
        speed[0] = 1.0;
    }
    for (i, &f) in speed.iter().enumerate() {
        // 8B parameters on the fastest device, ~200M on the slowest
        let frac = if hetero > 1.0 { f.ln() / hetero.ln() } else { 0.0 };
        let capacity = (8e9f64.ln() * (1.0 - frac) + 2e8f64.ln() * frac).exp();
        let jitter = rng.gen_range(0.8..=1.25);
        let mut d = DeviceSpec::new(format!("dev{i}"), (capacity * jitter) as u64);
        d.uplink_serialized = params.serialize_uplinks;
        s.devices.push(d);
    }

    let n_models = rng.gen_range(params.n_models.clone());
    let mut encoder_pool: Vec<ModuleSpec> = Vec::new();
    for k in 0..n_models {
        let n_enc = rng.gen_range(params.encoders_per_model.clone());
        let modalities: Vec<&str> = MODALITIES.choose_multiple(rng, n_enc).copied().collect();
        let mut encoder_ids = Vec::new();
        for modality in modalities {
            let existing: Vec<&ModuleSpec> = encoder_pool
                .iter()
                .filter(|m| m.kind.modality() == Some(modality))
                .collect();
            let reuse = !existing.is_empty() && rng.gen_bool(params.share_prob);
            let id = if reuse {
                existing[rng.gen_range(0..existing.len())].module_id.clone()
            } else {
                let id = format!("{modality}-{}", encoder_pool.len());
                let memory = (4e7 * sample_f64(rng, &params.memory_spread)) as u64;
                let input = log_uniform(rng, 1e3, 2e5).round();
                encoder_pool.push(
                    ModuleSpec::encoder(id.clone(), id.clone(), modality, memory)
                        .with_sizes(input, 2048.0),
                );
                id
            };
            encoder_ids.push(id);
        }
        let head_id = format!("head-{k}");
        let head_mem = rng.gen_range(0..=1_000_000u64);
        s.modules
            .push(ModuleSpec::head(head_id.clone(), head_id.clone(), head_mem));
        s.models.push(ModelSpec {
            model_id: format!("model-{k}"),
            encoder_ids,
            head_id,
        });
    }
    let heads = std::mem::take(&mut s.modules);
    s.modules = encoder_pool;
    s.modules.extend(heads);

    for m in &s.modules {
        let work = if m.is_head() {
            rng.gen_range(0.005..=0.05)
        } else {
            m.memory_req as f64 / 1e8 * WORK_PER_100M
        };
        for (d, f) in s.devices.iter().zip(&speed) {
            let noise = rng.gen_range(0.8..=1.25);
            let comp = work * f * noise;
            let mut e = ComputeEntry::new(comp);
            e.load_time = m.memory_req as f64 / 1e8 * f;
            s.compute.insert(&m.function_key, &d.device_id, e);
        }
    }

    for a in &s.devices {
        for b in &s.devices {
            if a.device_id != b.device_id {
                let link = Link {
                    latency: rng.gen_range(0.001..=0.01),
                    bandwidth: log_uniform(rng, 1e7, 1e8),
                };
                s.network.insert(&a.device_id, &b.device_id, link);
            }
        }
    }

    for model in &s.models {
        let n_req = rng.gen_range(params.requests_per_model.clone());
        for j in 0..n_req {
            let src = rng.gen_range(0..n_dev);
            let arrival = if params.arrival_window > 0.0 {
                rng.gen_range(0.0..=params.arrival_window)
            } else {
                0.0
            };
            s.trace.push(Request {
                request_id: format!("{}-r{j}", model.model_id),
                model_id: model.model_id.clone(),
                source_device: s.devices[src].device_id.clone(),
                arrival_time: arrival,
            });
        }
    }
    s.trace
        .sort_by(|a, b| a.arrival_time.total_cmp(&b.arrival_time));
    s
}

fn feasible(s: &Scenario) -> bool {
    let Ok(catalog) = build_shared_catalog(s) else {
        return false;
    };
    greedy_place(s, &catalog).is_ok() || brute_force_place(s, &catalog, &[]).is_ok()
}

/// Generates a valid scenario with at least one feasible placement.
/// Deterministic per `params.seed`.
pub fn generate(params: &GenParams) -> Result<Scenario, GenerationError> {
    params.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    for attempt in 0..params.max_retries {
        let s = draw(&mut rng, params, attempt);
        if feasible(&s) {
            return Ok(s);
        }
    }
    Err(GenerationError::GenerationFailed(params.max_retries))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{emit_scenario, parse_scenario, validate_scenario};
    use std::collections::hash_map::DefaultHasher;
    use std::collections::HashSet;
    use std::hash::{Hash, Hasher};

    #[test]
    fn same_seed_same_scenario() {
        let p = GenParams {
            seed: 42,
            ..GenParams::default()
        };
        assert_eq!(generate(&p).unwrap(), generate(&p).unwrap());
    }

    #[test]
    fn distinct_seeds_differ() {
        let mut hashes = HashSet::new();
        for seed in 0..200 {
            let s = generate(&GenParams {
                seed,
                ..GenParams::default()
            })
            .unwrap();
            let mut h = DefaultHasher::new();
            emit_scenario(&s).hash(&mut h);
            hashes.insert(h.finish());
        }
        assert!(hashes.len() >= 199);
    }

    #[test]
    fn generated_scenarios_validate_and_round_trip() {
        for seed in 0..100 {
            let s = generate(&GenParams {
                seed,
                requests_per_model: 1..=3,
                arrival_window: 5.0,
                serialize_uplinks: seed % 2 == 0,
                ..GenParams::default()
            })
            .unwrap();
            assert_eq!(validate_scenario(&s), vec![], "seed {seed}");
            let back = parse_scenario(&emit_scenario(&s)).unwrap();
            assert_eq!(back, s);
        }
    }

    #[test]
    fn forced_sharing_reuses_modules() {
        let p = GenParams {
            seed: 3,
            n_models: 2..=2,
            encoders_per_model: 6..=6,
            share_prob: 1.0,
            ..GenParams::default()
        };
        let s = generate(&p).unwrap();
        let c = build_shared_catalog(&s).unwrap();
        let references: usize = s.models.iter().map(|m| m.encoder_ids.len() + 1).sum();
        assert!(c.c() < references);
        assert_eq!(c.c(), 6 + 2);
    }

    #[test]
    fn no_sharing_keeps_modules_apart() {
        let p = GenParams {
            seed: 5,
            n_models: 3..=3,
            share_prob: 0.0,
            ..GenParams::default()
        };
        let s = generate(&p).unwrap();
        let c = build_shared_catalog(&s).unwrap();
        let references: usize = s.models.iter().map(|m| m.encoder_ids.len() + 1).sum();
        assert_eq!(c.c(), references);
    }

    #[test]
    fn heterogeneity_spans_the_requested_ratio() {
        let s = generate(&GenParams::testbed_like(11)).unwrap();
        let m = &s.modules[0];
        let times: Vec<f64> = s
            .devices
            .iter()
            .map(|d| s.compute.get(&m.function_key, &d.device_id).unwrap().comp_time)
            .collect();
        let ratio = times.iter().cloned().fold(0.0, f64::max) / times.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(ratio > 10.0 * 0.8 / 1.25 && ratio < 20.0 * 1.25 / 0.8, "{ratio}");
    }

    #[test]
    fn testbed_like_instances_fit_the_guard() {
        for seed in 0..1000 {
            let s = generate(&GenParams::testbed_like(seed)).unwrap();
            let c = build_shared_catalog(&s).unwrap();
            brute_force_place(&s, &c, &s.trace).unwrap();
        }
    }

    #[test]
    fn bad_params_are_rejected() {
        let p = GenParams {
            share_prob: 1.5,
            ..GenParams::default()
        };
        assert!(matches!(generate(&p), Err(GenerationError::InvalidParams(_))));
        let p = GenParams {
            encoders_per_model: 1..=7,
            ..GenParams::default()
        };
        assert!(generate(&p).is_err());
    }

    #[test]
    fn impossible_memory_fails_after_retries() {
        let p = GenParams {
            memory_spread: 1e6..=1e6,
            max_retries: 3,
            ..GenParams::default()
        };
        assert_eq!(generate(&p), Err(GenerationError::GenerationFailed(3)));
    }
}
