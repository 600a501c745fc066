//! Deployment-mode comparisons built on the simulator.

use serde::Serialize;

use super::{route_map, simulate, SimOptions, SimResult};
use crate::placement::{centralized_place, greedy_place, Placement};
use crate::routing::route_trace;
use crate::scenario::{Request, Scenario};
use crate::sharing::{build_shared_catalog, memory_accounting};
use crate::table::{fmt_params, fmt_secs, Table};

fn run(s: &Scenario, p: &Placement, opts: SimOptions) -> Option<SimResult> {
    let routes = route_trace(s, p).ok()?;
    simulate(s, p, &route_map(routes), opts).ok()
}

fn greedy(s: &Scenario) -> Option<Placement> {
    let catalog = build_shared_catalog(s).ok()?;
    greedy_place(s, &catalog).ok().map(|(p, _)| p)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeRow {
    pub mode: String,
    pub mean_t_total: Option<f64>,
    pub makespan: Option<f64>,
    pub max_device_memory: Option<u64>,
    pub total_memory: Option<u64>,
}

impl ModeRow {
    fn infeasible(mode: String) -> Self {
        Self {
            mode,
            mean_t_total: None,
            makespan: None,
            max_device_memory: None,
            total_memory: None,
        }
    }

    fn measure(mode: String, s: &Scenario, p: Option<&Placement>, opts: SimOptions) -> Self {
        let Some(p) = p else { return Self::infeasible(mode) };
        let Ok(catalog) = build_shared_catalog(s) else {
            return Self::infeasible(mode);
        };
        let sim = run(s, p, opts);
        Self {
            mode,
            mean_t_total: sim.as_ref().map(SimResult::mean_t_total),
            makespan: sim.as_ref().map(|r| r.makespan),
            max_device_memory: Some(p.max_device_memory(s, &catalog)),
            total_memory: Some(p.total_memory(&catalog)),
        }
    }
}

/// The trace under each deployment mode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub rows: Vec<ModeRow>,
}

impl ComparisonReport {
    pub fn row(&self, mode: &str) -> Option<&ModeRow> {
        self.rows.iter().find(|r| r.mode == mode)
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new(["mode", "mean latency (s)", "makespan (s)", "max device", "total"]);
        for r in &self.rows {
            t.push([
                r.mode.clone(),
                fmt_secs(r.mean_t_total),
                fmt_secs(r.makespan),
                r.max_device_memory.map_or("--".into(), fmt_params),
                r.total_memory.map_or("--".into(), fmt_params),
            ]);
        }
        t
    }
}

/// Runs the trace with placement `p` (parallel and sequential encoding),
/// with everything on each single device, and with a greedy placement of
/// unshared modules. Modes that cannot be deployed have empty cells.
pub fn compare_modes(s: &Scenario, p: &Placement) -> ComparisonReport {
    let mut rows = vec![
        ModeRow::measure("split-share".into(), s, Some(p), SimOptions::default()),
        ModeRow::measure("split-share sequential".into(), s, Some(p), SimOptions::sequential()),
    ];
    for d in &s.devices {
        let c = centralized_place(s, &d.device_id, true);
        rows.push(ModeRow::measure(
            format!("centralized {}", d.device_id),
            s,
            c.as_ref(),
            SimOptions::default(),
        ));
    }
    let unshared = s.unshared();
    rows.push(ModeRow::measure(
        "no-share".into(),
        &unshared,
        greedy(&unshared).as_ref(),
        SimOptions::default(),
    ));
    ComparisonReport { rows }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelRow {
    pub model_id: String,
    pub centralized: u64,
    pub split_max: u64,
    /// Rounded half-up to a whole percent.
    pub saving_pct: f64,
    pub cloud: Option<f64>,
    pub local: Option<f64>,
    pub split: Option<f64>,
}

/// Per-model deployment cost and single-request latency.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelTable {
    pub cloud_device: Option<String>,
    pub rows: Vec<ModelRow>,
}

impl ModelTable {
    pub fn row(&self, model_id: &str) -> Option<&ModelRow> {
        self.rows.iter().find(|r| r.model_id == model_id)
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new([
            "model",
            "centralized",
            "split max",
            "delta",
            "cloud (s)",
            "local (s)",
            "split-share (s)",
        ]);
        for r in &self.rows {
            t.push([
                r.model_id.clone(),
                fmt_params(r.centralized),
                fmt_params(r.split_max),
                format!("-{}%", r.saving_pct),
                fmt_secs(r.cloud),
                fmt_secs(r.local),
                fmt_secs(r.split),
            ]);
        }
        t
    }
}

/// For every model: its centralized and split memory, and the latency of
/// one request at time zero when served by the cloud device, by the
/// requesting device alone, and by a greedy split over the edge devices.
///
/// The requester is the source of the model's first request in the trace,
/// falling back to the trace's first source and then the first edge device.
pub fn model_table(s: &Scenario) -> ModelTable {
    let cloud = s.devices.iter().find(|d| d.cloud).map(|d| d.device_id.clone());
    let fallback = s
        .trace
        .first()
        .map(|q| q.source_device.clone())
        .or_else(|| s.devices.iter().find(|d| !d.cloud).map(|d| d.device_id.clone()));
    let report = build_shared_catalog(s).ok().map(|c| memory_accounting(s, &c));

    let mut rows = Vec::new();
    for model in &s.models {
        let modules = s.model_modules(model);
        let centralized: u64 = modules.iter().map(|m| m.memory_req).sum();
        let split_max = modules.iter().map(|m| m.memory_req).max().unwrap_or(0);
        let saving_pct = report
            .as_ref()
            .and_then(|r| r.models.iter().find(|m| m.model_id == model.model_id))
            .map_or(0.0, |m| m.split_saving.percent(0));
        let source = s
            .trace
            .iter()
            .find(|q| q.model_id == model.model_id)
            .map(|q| q.source_device.clone())
            .or_else(|| fallback.clone());

        let (mut cloud_t, mut local_t, mut split_t) = (None, None, None);
        if let Some(source) = source {
            let mut sub = s.restrict_models(&[model.model_id.as_str()]);
            sub.trace = vec![Request {
                request_id: format!("{}-0", model.model_id),
                model_id: model.model_id.clone(),
                source_device: source.clone(),
                arrival_time: 0.0,
            }];
            let single = |sub: &Scenario, device: &str| {
                let p = centralized_place(sub, device, true)?;
                run(sub, &p, SimOptions::default()).map(|r| r.mean_t_total())
            };
            cloud_t = cloud.as_deref().and_then(|c| single(&sub, c));
            local_t = single(&sub, &source);
            split_t = sub.edge_view().ok().and_then(|edge| {
                let p = greedy(&edge)?;
                run(&edge, &p, SimOptions::default()).map(|r| r.mean_t_total())
            });
        }
        rows.push(ModelRow {
            model_id: model.model_id.clone(),
            centralized,
            split_max,
            saving_pct,
            cloud: cloud_t,
            local: local_t,
            split: split_t,
        });
    }
    ModelTable {
        cloud_device: cloud,
        rows,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TradeoffRow {
    pub model_id: String,
    pub no_share_memory: Option<u64>,
    pub shared_memory: Option<u64>,
    pub no_share_makespan: Option<f64>,
    pub shared_makespan: Option<f64>,
}

/// Memory against queuing as models are added one at a time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TradeoffTable {
    pub rows: Vec<TradeoffRow>,
}

impl TradeoffTable {
    pub fn last(&self) -> Option<&TradeoffRow> {
        self.rows.last()
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new([
            "task",
            "no-share params",
            "shared params",
            "no-share makespan (s)",
            "shared makespan (s)",
        ]);
        for r in &self.rows {
            t.push([
                r.model_id.clone(),
                r.no_share_memory.map_or("--".into(), fmt_params),
                r.shared_memory.map_or("--".into(), fmt_params),
                fmt_secs(r.no_share_makespan),
                fmt_secs(r.shared_makespan),
            ]);
        }
        t
    }
}

/// For each prefix of the scenario's models, places the prefix with and
/// without sharing and simulates the requests addressed to it.
pub fn sharing_tradeoff(s: &Scenario) -> TradeoffTable {
    let ids: Vec<&str> = s.models.iter().map(|m| m.model_id.as_str()).collect();
    let mut rows = Vec::new();
    for k in 1..=ids.len() {
        let sub = s.restrict_models(&ids[..k]);
        let measure = |sc: &Scenario| -> (Option<u64>, Option<f64>) {
            let Some(p) = greedy(sc) else { return (None, None) };
            let mem = build_shared_catalog(sc).ok().map(|c| p.total_memory(&c));
            (mem, run(sc, &p, SimOptions::default()).map(|r| r.makespan))
        };
        let (shared_memory, shared_makespan) = measure(&sub);
        let (no_share_memory, no_share_makespan) = measure(&sub.unshared());
        rows.push(TradeoffRow {
            model_id: ids[k - 1].to_owned(),
            no_share_memory,
            shared_memory,
            no_share_makespan,
            shared_makespan,
        });
    }
    TradeoffTable { rows }
}
