use std::fmt::Write as _;

use anyhow::anyhow;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use splitshare_core::placement::PlacementError;
use splitshare_core::routing::{route_requests, RoutingError};
use splitshare_core::simengine::{compare_modes, model_table, route_map};
use splitshare_core::table::{fmt_params, Table};
use splitshare_core::{
    analytic_latency, brute_force_place, brute_force_route, build_shared_catalog,
    greedy_place_with, memory_accounting, replicate_leftover, total_latency,
    AdmissionMode, PlaceOptions, Placement, RoutingSession, Scenario, SimOptions, SimResult,
};

use crate::{
    load_scenario, Admission, Cli, CmdResult, CompareArgs, Failure, Format, PlaceArgs,
    PlacementSource, RouteArgs, ScenarioArg, SimulateArgs,
};

fn placement_failure(e: PlacementError) -> Failure {
    match e {
        PlacementError::Infeasible { .. } => Failure::Infeasible(anyhow!(e)),
        PlacementError::SearchSpaceTooLarge { .. } => Failure::Guard(anyhow!(e)),
        other => Failure::Input(anyhow!(other)),
    }
}

fn routing_failure(e: RoutingError) -> Failure {
    match e {
        RoutingError::ModuleUnplaced { .. } | RoutingError::CapacityExhausted { .. } => {
            Failure::Infeasible(anyhow!(e))
        }
        RoutingError::SearchSpaceTooLarge { .. } => Failure::Guard(anyhow!(e)),
        other => Failure::Input(anyhow!(other)),
    }
}

fn edge(s: Scenario, edge_only: bool) -> Result<Scenario, Failure> {
    if edge_only {
        s.edge_view().map_err(|e| Failure::Input(anyhow!(e)))
    } else {
        Ok(s)
    }
}

fn render(format: Format, table: &Table) -> String {
    match format {
        Format::Csv => table.to_csv(),
        _ => table.to_text(),
    }
}

fn json_out(v: serde_json::Value) -> String {
    let mut out = serde_json::to_string_pretty(&v).expect("json values serialize");
    out.push('\n');
    out
}

fn placement_table(s: &Scenario, p: &Placement) -> Result<Table, Failure> {
    let catalog = build_shared_catalog(s).map_err(|e| Failure::Input(anyhow!(e)))?;
    let mut t = Table::new(["module", "kind", "params", "devices"]);
    for m in &catalog.distinct_modules {
        t.push([
            m.function_key.clone(),
            if m.is_head() { "head".into() } else { "encoder".to_string() },
            fmt_params(m.memory_req),
            p.hosts(&m.function_key).join(","),
        ]);
    }
    Ok(t)
}

fn memory_table(s: &Scenario, p: &Placement) -> Result<Table, Failure> {
    let catalog = build_shared_catalog(s).map_err(|e| Failure::Input(anyhow!(e)))?;
    let mut t = Table::new(["device", "used", "capacity", "residual"]);
    for (d, used) in p.memory_by_device(s, &catalog) {
        let spec = s.device(&d).expect("device from scenario");
        t.push([
            d.clone(),
            fmt_params(used),
            fmt_params(spec.memory_capacity),
            fmt_params(spec.memory_capacity - used),
        ]);
    }
    Ok(t)
}

/// Loads `--placement` or computes a greedy one.
fn obtain_placement(s: &Scenario, src: &PlacementSource) -> Result<Placement, Failure> {
    match &src.placement {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Input(anyhow!("reading {}: {e}", path.display())))?;
            Placement::from_json(s, &text).map_err(|e| Failure::Input(anyhow!("{}: {e}", path.display())))
        }
        None => {
            let catalog = build_shared_catalog(s).map_err(|e| Failure::Input(anyhow!(e)))?;
            greedy_place_with(s, &catalog, PlaceOptions::default())
                .map(|(p, _)| p)
                .map_err(placement_failure)
        }
    }
}

pub fn validate(cli: &Cli, a: &ScenarioArg) -> CmdResult {
    let s = load_scenario(&a.scenario)?;
    Ok(match cli.format {
        Format::Json => json_out(json!({
            "valid": true,
            "devices": s.devices.len(),
            "modules": s.modules.len(),
            "models": s.models.len(),
            "requests": s.trace.len(),
        })),
        _ => format!(
            "ok: {} devices, {} modules, {} models, {} requests\n",
            s.devices.len(),
            s.modules.len(),
            s.models.len(),
            s.trace.len()
        ),
    })
}

pub fn place(cli: &Cli, a: &PlaceArgs) -> CmdResult {
    let s = edge(load_scenario(&a.scenario.scenario)?, a.edge_only)?;
    let catalog = build_shared_catalog(&s).map_err(|e| Failure::Input(anyhow!(e)))?;
    let opts = PlaceOptions {
        accumulate_heads: !a.encoders_only_sum,
    };
    let greedy = greedy_place_with(&s, &catalog, opts);
    let (mut p, trace, upper) = if a.upper {
        let (p, objective) = brute_force_place(&s, &catalog, &s.trace).map_err(placement_failure)?;
        (p, None, Some(objective))
    } else {
        let (p, trace) = greedy.clone().map_err(placement_failure)?;
        (p, Some(trace), None)
    };
    if a.replicate {
        p = replicate_leftover(&s, &catalog, &p);
    }
    let objective = total_latency(&s, &p, &s.trace).map_err(routing_failure)?;
    let greedy_objective = greedy
        .as_ref()
        .ok()
        .and_then(|(g, _)| total_latency(&s, g, &s.trace).ok());
    if let Some(path) = &a.out {
        std::fs::write(path, p.to_json() + "\n")
            .map_err(|e| Failure::Input(anyhow!("writing {}: {e}", path.display())))?;
    }

    let mut out = String::new();
    match cli.format {
        Format::Json => {
            out = json_out(json!({
                "placement": p,
                "trace": trace,
                "objective": objective,
                "greedy_objective": greedy_objective,
                "upper_objective": upper,
            }));
        }
        Format::Csv => out.push_str(&placement_table(&s, &p)?.to_csv()),
        Format::Table => {
            if let Some(trace) = &trace {
                let _ = writeln!(out, "{trace}");
            }
            out.push_str(&placement_table(&s, &p)?.to_text());
            out.push('\n');
            out.push_str(&memory_table(&s, &p)?.to_text());
            let _ = writeln!(out, "\nsummed latency over the trace: {objective:.4} s");
            if let (Some(u), Some(g)) = (upper, greedy_objective) {
                let gap = if u > 0.0 { (g / u - 1.0) * 100.0 } else { 0.0 };
                let _ = writeln!(out, "greedy: {g:.4} s (gap {gap:.2}%)");
            }
        }
    }
    Ok(out)
}

pub fn route(cli: &Cli, a: &RouteArgs) -> CmdResult {
    let s = edge(load_scenario(&a.scenario.scenario)?, a.source.edge_only)?;
    let p = obtain_placement(&s, &a.source)?;
    let mut session = RoutingSession::new(&s, &p);
    let mut routes = Vec::new();
    for q in &s.trace {
        let r = if a.brute {
            let (r, _) = brute_force_route(&session, q).map_err(routing_failure)?;
            session.charge(&r);
            r
        } else {
            session.route_request(q).map_err(routing_failure)?
        };
        routes.push(r);
    }
    let mut breakdowns = Vec::new();
    for r in &routes {
        let b = analytic_latency(&s, r).map_err(routing_failure)?;
        if cli.verbose > 0 {
            for w in &b.warnings {
                eprintln!("warning: {}: {w}", r.request_id);
            }
        }
        breakdowns.push(b);
    }
    if cli.format == Format::Json {
        return Ok(json_out(json!({ "routes": routes, "latency": breakdowns })));
    }
    let mut t = Table::new(["request", "module", "device", "in (s)", "comp (s)", "out (s)", "path (s)"]);
    for (r, b) in routes.iter().zip(&breakdowns) {
        for path in &b.paths {
            t.push([
                r.request_id.clone(),
                path.function_key.clone(),
                path.device.clone(),
                format!("{:.4}", path.input_comm),
                format!("{:.4}", path.comp),
                format!("{:.4}", path.output_comm),
                format!("{:.4}", path.total),
            ]);
        }
        t.push([
            r.request_id.clone(),
            r.head.function_key.clone(),
            r.head.device.clone(),
            String::new(),
            format!("{:.4}", b.head_comp),
            String::new(),
            format!("{:.4}", b.t_total),
        ]);
    }
    let mut out = String::new();
    if cli.format == Format::Table {
        for r in &routes {
            let _ = writeln!(out, "{r}");
        }
        out.push('\n');
    }
    out.push_str(&render(cli.format, &t));
    Ok(out)
}

fn sim_options(a: &SimulateArgs) -> SimOptions {
    SimOptions {
        parallel_encoders: !a.sequential,
        admission: match a.admission {
            Admission::Pipelined => AdmissionMode::Pipelined,
            Admission::Coarse => AdmissionMode::Coarse,
            Admission::Serial => AdmissionMode::Serial,
        },
        end_to_end: a.end_to_end,
    }
}

fn run_once(s: &Scenario, p: &Placement, opts: SimOptions) -> Result<SimResult, Failure> {
    let routes = route_requests(s, p, &s.trace).map_err(routing_failure)?;
    splitshare_core::simulate(s, p, &route_map(routes), opts).map_err(|e| Failure::Input(anyhow!(e)))
}

pub fn simulate(cli: &Cli, a: &SimulateArgs) -> CmdResult {
    let base = edge(load_scenario(&a.scenario.scenario)?, a.source.edge_only)?;
    let memory = build_shared_catalog(&base)
        .map(|c| memory_accounting(&base, &c))
        .map_err(|e| Failure::Input(anyhow!(e)))?;
    let s = if a.no_share { base.unshared() } else { base.clone() };
    if a.no_share && a.source.placement.is_some() {
        return Err(Failure::Input(anyhow!(
            "--no-share computes its own placement; drop --placement"
        )));
    }
    let p = obtain_placement(&s, &a.source)?;
    let catalog = build_shared_catalog(&s).map_err(|e| Failure::Input(anyhow!(e)))?;
    let opts = sim_options(a);
    let result = run_once(&s, &p, opts)?;

    let repeats = a.repeat.max(1);
    let (mut mean_sum, mut makespan_sum) = (result.mean_t_total(), result.makespan);
    if repeats > 1 {
        let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
        for _ in 1..repeats {
            let mut jittered = s.clone();
            for q in &mut jittered.trace {
                q.arrival_time += rng.gen_range(0.0..=a.jitter.max(0.0));
            }
            let r = run_once(&jittered, &p, opts)?;
            mean_sum += r.mean_t_total();
            makespan_sum += r.makespan;
        }
    }
    let mean = mean_sum / repeats as f64;
    let makespan = makespan_sum / repeats as f64;
    let placed_total = p.total_memory(&catalog);

    if cli.format == Format::Json {
        return Ok(json_out(json!({
            "share": !a.no_share,
            "options": opts,
            "result": result,
            "timeline": if a.timeline { serde_json::to_value(&result.timeline).ok() } else { None },
            "repeats": repeats,
            "mean_t_total": mean,
            "mean_makespan": makespan,
            "placed_memory": placed_total,
            "memory": memory,
        })));
    }
    if a.timeline && cli.format == Format::Csv {
        return Ok(result.timeline_csv());
    }

    let mut t = Table::new(["request", "model", "arrival", "t_enc (s)", "t_head (s)", "t_total (s)", "queue (s)"]);
    for r in &result.requests {
        t.push([
            r.request_id.clone(),
            r.model_id.clone(),
            format!("{:.2}", r.arrival),
            format!("{:.4}", r.t_enc),
            format!("{:.4}", r.t_head),
            format!("{:.4}", r.t_total),
            format!("{:.4}", r.queue_wait),
        ]);
    }
    if cli.format == Format::Csv {
        return Ok(t.to_csv());
    }

    let mut out = String::new();
    out.push_str(&t.to_text());
    let _ = writeln!(out);
    if repeats > 1 {
        let _ = writeln!(out, "runs: {repeats} (arrival jitter up to {:.3} s, seed {})", a.jitter, a.seed);
    }
    let _ = writeln!(out, "mean latency: {mean:.4} s");
    let _ = writeln!(out, "makespan: {makespan:.4} s");
    let _ = writeln!(
        out,
        "placed parameters: {} ({})",
        fmt_params(placed_total),
        if a.no_share { "no sharing" } else { "shared" }
    );
    if cli.verbose > 0 {
        let mut m = Table::new(["module", "device", "runs", "busy (s)", "util", "mean queue"]);
        for x in &result.modules {
            m.push([
                x.function_key.clone(),
                x.device_id.clone(),
                x.executions.to_string(),
                format!("{:.3}", x.busy),
                format!("{:.3}", x.utilization),
                format!("{:.3}", x.mean_queue_length),
            ]);
        }
        let _ = writeln!(out);
        out.push_str(&m.to_text());
    }
    let _ = writeln!(out);
    out.push_str(&memory.share_table().to_text());
    if a.timeline {
        let _ = writeln!(out);
        out.push_str(&result.gantt(&s, 60));
    }
    Ok(out)
}

pub fn compare(cli: &Cli, a: &CompareArgs) -> CmdResult {
    let s = edge(load_scenario(&a.scenario.scenario)?, a.source.edge_only)?;
    let models = model_table(&s);
    let (split_view, p) = if a.source.placement.is_some() || a.source.edge_only {
        (s.clone(), obtain_placement(&s, &a.source)?)
    } else {
        // the split-share rows run on the edge devices; the cloud keeps its
        // centralized row
        let e = s.edge_view().map_err(|e| Failure::Input(anyhow!(e)))?;
        let p = obtain_placement(&e, &a.source)?;
        (e, p)
    };
    let mut modes = compare_modes(&split_view, &p);
    if split_view.devices.len() != s.devices.len() {
        let full = compare_modes(&s, &p);
        for row in full.rows {
            if row.mode.starts_with("centralized ")
                && !modes.rows.iter().any(|r| r.mode == row.mode)
            {
                modes.rows.push(row);
            }
        }
    }
    match cli.format {
        Format::Json => Ok(json_out(json!({ "models": models, "modes": modes }))),
        Format::Csv => Ok(models.table().to_csv()),
        Format::Table => {
            let mut out = models.table().to_text();
            out.push('\n');
            out.push_str(&modes.table().to_text());
            Ok(out)
        }
    }
}
