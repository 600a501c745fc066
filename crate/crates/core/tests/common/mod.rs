#![allow(dead_code)]

use std::path::PathBuf;

use splitshare_core::routing::route_trace;
use splitshare_core::simengine::route_map;
use splitshare_core::{
    build_shared_catalog, generate, greedy_place, parse_scenario, replicate_leftover, simulate,
    AdmissionMode, GenParams, Placement, Scenario, SimOptions, SimResult,
};

pub fn scenario(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    parse_scenario(&text).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Generator settings for the invariant suite: several requests per model
/// arriving over a few seconds, uplinks serialized on even seeds.
pub fn invariant_params(seed: u64) -> GenParams {
    GenParams {
        seed,
        requests_per_model: 1..=3,
        arrival_window: 5.0 * (seed % 3) as f64,
        serialize_uplinks: seed % 2 == 0,
        ..GenParams::default()
    }
}

pub fn sim(s: &Scenario, p: &Placement, opts: SimOptions) -> SimResult {
    let routes = route_trace(s, p).expect("greedy placements route");
    simulate(s, p, &route_map(routes), opts).expect("routes are valid")
}

/// Checks route-once, memory feasibility, placement and simulator
/// determinism, and pipelined makespan <= serial makespan on one instance.
pub fn check_invariants(s: &Scenario) -> Result<(), String> {
    let catalog = build_shared_catalog(s).map_err(|e| e.to_string())?;
    let Ok((p, trace)) = greedy_place(s, &catalog) else {
        return Ok(());
    };

    let (again, trace_again) = greedy_place(s, &catalog).map_err(|e| e.to_string())?;
    if again != p || trace_again != trace {
        return Err("greedy placement is not deterministic".into());
    }

    for placement in [p.clone(), replicate_leftover(s, &catalog, &p)] {
        for (d, used) in placement.memory_by_device(s, &catalog) {
            let cap = s.device(&d).unwrap().memory_capacity;
            if used > cap {
                return Err(format!("device {d} holds {used} > {cap}"));
            }
        }
    }

    let routes = route_trace(s, &p).map_err(|e| e.to_string())?;
    if routes.len() != s.trace.len() {
        return Err("not every request was routed".into());
    }
    for (q, r) in s.trace.iter().zip(&routes) {
        let model = s.model(&q.model_id).unwrap();
        let modules = s.model_modules(model);
        let (encoders, head) = modules.split_at(modules.len() - 1);
        if r.encoders.len() != encoders.len() {
            return Err(format!("{}: {} encoder hops for {} encoders", q.request_id, r.encoders.len(), encoders.len()));
        }
        let hops = r.encoders.iter().chain(std::iter::once(&r.head));
        for (hop, m) in hops.zip(encoders.iter().chain(head)) {
            if hop.function_key != m.function_key {
                return Err(format!("{}: hop {} for module {}", q.request_id, hop.function_key, m.function_key));
            }
            if !p.is_hosted(&hop.function_key, &hop.device) {
                return Err(format!("{}: {} not placed on {}", q.request_id, hop.function_key, hop.device));
            }
        }
    }

    let a = sim(s, &p, SimOptions::default());
    let b = sim(s, &p, SimOptions::default());
    if a != b || a.timeline != b.timeline {
        return Err("simulation is not deterministic".into());
    }
    let serial = sim(
        s,
        &p,
        SimOptions {
            admission: AdmissionMode::Serial,
            ..SimOptions::default()
        },
    );
    if a.makespan > serial.makespan + 1e-9 {
        return Err(format!("pipelined makespan {} > serial {}", a.makespan, serial.makespan));
    }
    Ok(())
}

pub fn generated(seed: u64) -> Scenario {
    generate(&invariant_params(seed)).expect("default params generate")
}
