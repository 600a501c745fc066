//! Module-to-device placement.
//!
//! [`greedy_place`] walks the distinct modules from largest to smallest and
//! puts each one on the device with the shortest completion time that still
//! has room for it. Encoders are ranked by the accumulated computation time
//! of everything already on the device plus their own; heads only by their
//! own computation time, since they run after all encoders have finished.
//!
//! [`brute_force_place`] enumerates every memory-feasible single-copy
//! placement and is the oracle the greedy result is measured against.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network_cost::{comm_time, TransferQuery};
use crate::scenario::{ComputeProfile, DeviceId, DeviceSpec, FunctionKey, ModuleSpec, Request, Scenario};
use crate::sharing::{build_shared_catalog, SharedCatalog};

/// Largest number of candidate placements [`brute_force_place`] will enumerate.
pub const BRUTE_FORCE_PLACEMENT_LIMIT: u128 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlacementError {
    #[error("no device can host module `{function_key}`")]
    Infeasible { function_key: FunctionKey },
    #[error("search space of {candidates} placements exceeds the limit of {limit}")]
    SearchSpaceTooLarge { candidates: u128, limit: u128 },
    #[error("unknown device `{0}` in placement")]
    UnknownDevice(String),
    #[error("unknown module `{0}` in placement")]
    UnknownModule(String),
    #[error("device `{device}` cannot run module `{function_key}`")]
    NotHostable { function_key: String, device: String },
    #[error("device `{device}` over capacity: {used} > {capacity}")]
    OverCapacity { device: String, used: u64, capacity: u64 },
    #[error(transparent)]
    MissingLink(#[from] crate::network_cost::MissingLink),
    #[error("request `{request}` refers to an unknown model or module")]
    BadRequest { request: String },
}

/// Binary module-to-device assignment, with replicas.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    /// Hosting devices per function key, in scenario device order.
    pub assign: BTreeMap<FunctionKey, Vec<DeviceId>>,
    #[serde(default)]
    pub residual_memory: BTreeMap<DeviceId, u64>,
}

impl Placement {
    /// An empty placement with every device at full capacity.
    pub fn empty(s: &Scenario) -> Self {
        Self {
            assign: BTreeMap::new(),
            residual_memory: s
                .devices
                .iter()
                .map(|d| (d.device_id.clone(), d.memory_capacity))
                .collect(),
        }
    }

    /// Builds and checks a placement from a plain assignment map, recomputing
    /// residual memory.
    pub fn from_assignments(
        s: &Scenario,
        catalog: &SharedCatalog,
        assign: BTreeMap<FunctionKey, Vec<DeviceId>>,
    ) -> Result<Self, PlacementError> {
        let mut p = Placement::empty(s);
        for (fk, devices) in assign {
            let m = catalog
                .get(&fk)
                .ok_or_else(|| PlacementError::UnknownModule(fk.clone()))?;
            for d in devices {
                if s.device(&d).is_none() {
                    return Err(PlacementError::UnknownDevice(d));
                }
                if s.compute.get(&fk, &d).is_none() {
                    return Err(PlacementError::NotHostable {
                        function_key: fk.clone(),
                        device: d,
                    });
                }
                if p.hosts(&fk).contains(&d) {
                    continue;
                }
                let capacity = s.device(&d).map_or(0, |x| x.memory_capacity);
                let residual = p.residual_memory.get_mut(&d).expect("device present");
                if *residual < m.memory_req {
                    return Err(PlacementError::OverCapacity {
                        used: capacity - *residual + m.memory_req,
                        device: d,
                        capacity,
                    });
                }
                *residual -= m.memory_req;
                p.add(s, &fk, &d);
            }
        }
        Ok(p)
    }

    pub fn from_json(s: &Scenario, text: &str) -> Result<Self, PlacementLoadError> {
        #[derive(Deserialize)]
        struct Doc {
            assign: BTreeMap<FunctionKey, Vec<DeviceId>>,
        }
        let doc: Doc = serde_json::from_str(text).map_err(PlacementLoadError::Json)?;
        let catalog = build_shared_catalog(s).map_err(|e| PlacementLoadError::Catalog(e.to_string()))?;
        Placement::from_assignments(s, &catalog, doc.assign).map_err(PlacementLoadError::Placement)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("placements always serialize")
    }

    pub fn hosts(&self, function_key: &str) -> &[DeviceId] {
        self.assign
            .get(function_key)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn is_hosted(&self, function_key: &str, device: &str) -> bool {
        self.hosts(function_key).iter().any(|d| d == device)
    }

    /// Function keys hosted on `device`.
    pub fn hosted_on<'a>(&'a self, device: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.assign
            .iter()
            .filter(move |(_, ds)| ds.iter().any(|d| d == device))
            .map(|(k, _)| k.as_str())
    }

    /// Every distinct module has at least one host.
    pub fn is_complete(&self, catalog: &SharedCatalog) -> bool {
        catalog
            .distinct_modules
            .iter()
            .all(|m| !self.hosts(&m.function_key).is_empty())
    }

    fn add(&mut self, s: &Scenario, function_key: &str, device: &str) {
        let hosts = self.assign.entry(function_key.to_owned()).or_default();
        hosts.push(device.to_owned());
        hosts.sort_by_key(|d| s.device_index(d).unwrap_or(usize::MAX));
    }

    /// Memory in use on each device, in scenario device order.
    pub fn memory_by_device(&self, s: &Scenario, catalog: &SharedCatalog) -> Vec<(DeviceId, u64)> {
        s.devices
            .iter()
            .map(|d| {
                let used = self
                    .hosted_on(&d.device_id)
                    .filter_map(|fk| catalog.get(fk))
                    .map(|m| m.memory_req)
                    .sum();
                (d.device_id.clone(), used)
            })
            .collect()
    }

    pub fn total_memory(&self, catalog: &SharedCatalog) -> u64 {
        self.assign
            .iter()
            .filter_map(|(fk, ds)| catalog.get(fk).map(|m| m.memory_req * ds.len() as u64))
            .sum()
    }

    pub fn max_device_memory(&self, s: &Scenario, catalog: &SharedCatalog) -> u64 {
        self.memory_by_device(s, catalog)
            .into_iter()
            .map(|(_, m)| m)
            .max()
            .unwrap_or(0)
    }
}

#[derive(Debug, Error)]
pub enum PlacementLoadError {
    #[error("malformed placement file: {0}")]
    Json(serde_json::Error),
    #[error("{0}")]
    Catalog(String),
    #[error(transparent)]
    Placement(PlacementError),
}

/// Tuning knobs for the greedy placement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlaceOptions {
    /// Count already-placed heads in the encoder completion-time sum. The
    /// formula sums over every placed module; turning this off restricts the
    /// sum to encoders.
    pub accumulate_heads: bool,
}

impl Default for PlaceOptions {
    fn default() -> Self {
        Self {
            accumulate_heads: true,
        }
    }
}

/// Completion time of encoder `m` on `n`: its own computation time plus
/// that of every module already placed on `n`. `None` if `n` cannot run `m`.
pub fn completion_time_encoder(
    m: &ModuleSpec,
    n: &DeviceSpec,
    partial: &Placement,
    profile: &ComputeProfile,
) -> Option<f64> {
    let own = profile.get(&m.function_key, &n.device_id)?.comp_time;
    let placed: f64 = partial
        .hosted_on(&n.device_id)
        .filter_map(|fk| profile.get(fk, &n.device_id))
        .map(|e| e.comp_time)
        .sum();
    Some(own + placed)
}

/// Completion time of head `m` on `n`: just its computation time.
pub fn completion_time_head(m: &ModuleSpec, n: &DeviceSpec, profile: &ComputeProfile) -> Option<f64> {
    profile
        .get(&m.function_key, &n.device_id)
        .map(|e| e.comp_time)
}

fn completion_time(
    m: &ModuleSpec,
    n: &DeviceSpec,
    partial: &Placement,
    s: &Scenario,
    catalog: &SharedCatalog,
    opts: PlaceOptions,
) -> Option<f64> {
    if m.is_head() {
        return completion_time_head(m, n, &s.compute);
    }
    if opts.accumulate_heads {
        return completion_time_encoder(m, n, partial, &s.compute);
    }
    let own = s.compute.get(&m.function_key, &n.device_id)?.comp_time;
    let placed: f64 = partial
        .hosted_on(&n.device_id)
        .filter(|fk| catalog.get(fk).is_some_and(|x| !x.is_head()))
        .filter_map(|fk| s.compute.get(fk, &n.device_id))
        .map(|e| e.comp_time)
        .sum();
    Some(own + placed)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    pub device: DeviceId,
    /// `None` when the device cannot run the module.
    pub t_place: Option<f64>,
    pub residual: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlacementStep {
    pub function_key: FunctionKey,
    pub memory_req: u64,
    pub is_head: bool,
    /// Feasible devices by ascending completion time, then the infeasible ones.
    pub candidates: Vec<Candidate>,
    pub chosen: Option<DeviceId>,
}

/// Record of a greedy run, one step per module in processing order.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PlacementTrace {
    pub steps: Vec<PlacementStep>,
}

impl fmt::Display for PlacementTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, step) in self.steps.iter().enumerate() {
            let kind = if step.is_head { "head" } else { "encoder" };
            writeln!(
                f,
                "step {}: {} ({}, {} params)",
                i + 1,
                step.function_key,
                kind,
                step.memory_req
            )?;
            for c in &step.candidates {
                let t = c
                    .t_place
                    .map_or_else(|| "cannot run".to_owned(), |t| format!("t_place={t:.4}s"));
                let fits = if c.t_place.is_some() && c.residual < step.memory_req {
                    " (no room)"
                } else {
                    ""
                };
                writeln!(f, "    {:<16} {} residual={}{}", c.device, t, c.residual, fits)?;
            }
            match &step.chosen {
                Some(d) => writeln!(f, "    -> {d}")?,
                None => writeln!(f, "    -> infeasible")?,
            }
        }
        Ok(())
    }
}

/// Processing order: descending memory, ties by function key.
fn greedy_order(catalog: &SharedCatalog) -> Vec<&ModuleSpec> {
    let mut order: Vec<&ModuleSpec> = catalog.distinct_modules.iter().collect();
    order.sort_by(|a, b| {
        b.memory_req
            .cmp(&a.memory_req)
            .then_with(|| a.function_key.cmp(&b.function_key))
    });
    order
}

fn rank_candidates(
    m: &ModuleSpec,
    s: &Scenario,
    catalog: &SharedCatalog,
    p: &Placement,
    opts: PlaceOptions,
    skip: impl Fn(&DeviceSpec) -> bool,
) -> Vec<Candidate> {
    let mut feasible = Vec::new();
    let mut infeasible = Vec::new();
    for d in s.devices.iter().filter(|d| !skip(d)) {
        let c = Candidate {
            device: d.device_id.clone(),
            t_place: completion_time(m, d, p, s, catalog, opts),
            residual: p.residual_memory.get(&d.device_id).copied().unwrap_or(0),
        };
        if c.t_place.is_some() {
            feasible.push(c);
        } else {
            infeasible.push(c);
        }
    }
    // Stable sort keeps scenario device order among equal times.
    feasible.sort_by(|a, b| a.t_place.unwrap().total_cmp(&b.t_place.unwrap()));
    feasible.extend(infeasible);
    feasible
}

pub fn greedy_place(
    s: &Scenario,
    catalog: &SharedCatalog,
) -> Result<(Placement, PlacementTrace), PlacementError> {
    greedy_place_with(s, catalog, PlaceOptions::default())
}

pub fn greedy_place_with(
    s: &Scenario,
    catalog: &SharedCatalog,
    opts: PlaceOptions,
) -> Result<(Placement, PlacementTrace), PlacementError> {
    let mut p = Placement::empty(s);
    let mut trace = PlacementTrace::default();
    for m in greedy_order(catalog) {
        let candidates = rank_candidates(m, s, catalog, &p, opts, |_| false);
        let chosen = candidates
            .iter()
            .find(|c| c.t_place.is_some() && c.residual >= m.memory_req)
            .map(|c| c.device.clone());
        trace.steps.push(PlacementStep {
            function_key: m.function_key.clone(),
            memory_req: m.memory_req,
            is_head: m.is_head(),
            candidates,
            chosen: chosen.clone(),
        });
        let Some(device) = chosen else {
            return Err(PlacementError::Infeasible {
                function_key: m.function_key.clone(),
            });
        };
        *p.residual_memory.get_mut(&device).expect("device present") -= m.memory_req;
        p.add(s, &m.function_key, &device);
    }
    Ok((p, trace))
}

/// Fills leftover memory with replicas, largest modules first, each on the
/// device with the shortest completion time that does not host it yet.
pub fn replicate_leftover(s: &Scenario, catalog: &SharedCatalog, p: &Placement) -> Placement {
    let mut out = p.clone();
    let opts = PlaceOptions::default();
    for m in greedy_order(catalog) {
        loop {
            let candidates = rank_candidates(m, s, catalog, &out, opts, |d| {
                out.is_hosted(&m.function_key, &d.device_id)
            });
            let Some(c) = candidates
                .into_iter()
                .find(|c| c.t_place.is_some() && c.residual >= m.memory_req)
            else {
                break;
            };
            *out.residual_memory.get_mut(&c.device).expect("device present") -= m.memory_req;
            out.add(s, &m.function_key, &c.device);
        }
    }
    out
}

/// All modules on one device. With `share == false` each model gets its own
/// copies and the placement refers to the function keys of
/// [`Scenario::unshared`]. `None` when the device lacks memory or cannot run
/// some module.
pub fn centralized_place(s: &Scenario, device: &str, share: bool) -> Option<Placement> {
    let owned;
    let s = if share {
        s
    } else {
        owned = s.unshared();
        &owned
    };
    let d = s.device(device)?;
    let catalog = build_shared_catalog(s).ok()?;
    let total: u64 = catalog.distinct_modules.iter().map(|m| m.memory_req).sum();
    if total > d.memory_capacity {
        return None;
    }
    if catalog
        .distinct_modules
        .iter()
        .any(|m| s.compute.get(&m.function_key, device).is_none())
    {
        return None;
    }
    let mut p = Placement::empty(s);
    for m in &catalog.distinct_modules {
        p.add(s, &m.function_key, device);
    }
    *p.residual_memory.get_mut(device).expect("device present") -= total;
    Some(p)
}

/// Dense cost tables for enumerating single-copy placements.
struct Enumerator<'a> {
    catalog: &'a SharedCatalog,
    n_dev: usize,
    capacity: Vec<u64>,
    /// `comp[key * n_dev + dev]`
    comp: Vec<Option<f64>>,
    /// Feasible hosts per module, in device order.
    hosts: Vec<Vec<usize>>,
    requests: Vec<RequestCosts>,
}

struct RequestCosts {
    encoders: Vec<usize>,
    head: usize,
    /// `input[enc_pos * n_dev + dev]`: source to encoder device.
    input: Vec<f64>,
    /// `output[(enc_pos * n_dev + dev) * n_dev + head_dev]`.
    output: Vec<f64>,
}

impl<'a> Enumerator<'a> {
    fn new(
        s: &'a Scenario,
        catalog: &'a SharedCatalog,
        requests: &[Request],
    ) -> Result<Self, PlacementError> {
        let n_dev = s.devices.len();
        let mut comp = Vec::with_capacity(catalog.c() * n_dev);
        let mut hosts = Vec::with_capacity(catalog.c());
        for m in &catalog.distinct_modules {
            let mut h = Vec::new();
            for (j, d) in s.devices.iter().enumerate() {
                let t = s.compute.get(&m.function_key, &d.device_id).map(|e| e.comp_time);
                if t.is_some() {
                    h.push(j);
                }
                comp.push(t);
            }
            hosts.push(h);
        }
        let mut reqs = Vec::with_capacity(requests.len());
        for q in requests {
            let bad = || PlacementError::BadRequest {
                request: q.request_id.clone(),
            };
            let model = s.model(&q.model_id).ok_or_else(bad)?;
            let mut encoders = Vec::new();
            let mut input = Vec::new();
            let mut output = Vec::new();
            for id in &model.encoder_ids {
                let m = s.module(id).ok_or_else(bad)?;
                encoders.push(catalog.position(&m.function_key).ok_or_else(bad)?);
                for d in &s.devices {
                    input.push(comm_time(
                        &TransferQuery {
                            from: &q.source_device,
                            to: &d.device_id,
                            size: m.input_size,
                        },
                        &s.network,
                    )?);
                }
                for d in &s.devices {
                    for h in &s.devices {
                        output.push(comm_time(
                            &TransferQuery {
                                from: &d.device_id,
                                to: &h.device_id,
                                size: m.output_size,
                            },
                            &s.network,
                        )?);
                    }
                }
            }
            let head = s.module(&model.head_id).ok_or_else(bad)?;
            reqs.push(RequestCosts {
                encoders,
                head: catalog.position(&head.function_key).ok_or_else(bad)?,
                input,
                output,
            });
        }
        Ok(Self {
            catalog,
            n_dev,
            capacity: s.devices.iter().map(|d| d.memory_capacity).collect(),
            comp,
            hosts,
            requests: reqs,
        })
    }

    fn candidates(&self) -> u128 {
        self.hosts.iter().map(|h| h.len() as u128).product()
    }

    /// Decodes candidate `idx` (module 0 is the most significant digit).
    fn decode(&self, mut idx: u128, out: &mut [usize]) {
        for k in (0..self.hosts.len()).rev() {
            let radix = self.hosts[k].len() as u128;
            out[k] = self.hosts[k][(idx % radix) as usize];
            idx /= radix;
        }
    }

    fn fits(&self, devs: &[usize], used: &mut [u64]) -> bool {
        used.iter_mut().for_each(|u| *u = 0);
        for (k, &d) in devs.iter().enumerate() {
            used[d] += self.catalog.distinct_modules[k].memory_req;
            if used[d] > self.capacity[d] {
                return false;
            }
        }
        true
    }

    /// Sum of per-request latencies; the arithmetic mirrors
    /// [`crate::routing::analytic_latency`] term for term.
    fn objective(&self, devs: &[usize]) -> f64 {
        let n = self.n_dev;
        let mut total = 0.0;
        for r in &self.requests {
            let hd = devs[r.head];
            let mut t_enc: f64 = 0.0;
            for (pos, &k) in r.encoders.iter().enumerate() {
                let d = devs[k];
                let comp = self.comp[k * n + d].expect("feasible host");
                let path = r.input[pos * n + d] + comp + r.output[(pos * n + d) * n + hd];
                t_enc = t_enc.max(path);
            }
            let t_head = self.comp[r.head * n + hd].expect("feasible host");
            total += t_enc + t_head;
        }
        total
    }
}

/// Exhaustive search over single-copy placements minimizing the summed
/// analytic latency of `requests`. Among equal objectives the first
/// candidate in enumeration order wins (modules in catalog order, devices in
/// scenario order), regardless of how the search is parallelized.
pub fn brute_force_place(
    s: &Scenario,
    catalog: &SharedCatalog,
    requests: &[Request],
) -> Result<(Placement, f64), PlacementError> {
    let e = Enumerator::new(s, catalog, requests)?;
    if let Some(k) = e.hosts.iter().position(Vec::is_empty) {
        return Err(PlacementError::Infeasible {
            function_key: catalog.distinct_modules[k].function_key.clone(),
        });
    }
    let total = e.candidates();
    if total > BRUTE_FORCE_PLACEMENT_LIMIT {
        return Err(PlacementError::SearchSpaceTooLarge {
            candidates: total,
            limit: BRUTE_FORCE_PLACEMENT_LIMIT,
        });
    }

    let k = catalog.c();
    let n_dev = s.devices.len();
    let best = (0..total as u64)
        .into_par_iter()
        .fold(
            || (None::<(f64, u64)>, vec![0usize; k], vec![0u64; n_dev]),
            |(best, mut devs, mut used), idx| {
                e.decode(idx as u128, &mut devs);
                if !e.fits(&devs, &mut used) {
                    return (best, devs, used);
                }
                let obj = e.objective(&devs);
                let better = match best {
                    None => true,
                    Some((b, bi)) => match obj.total_cmp(&b) {
                        Ordering::Less => true,
                        Ordering::Equal => idx < bi,
                        Ordering::Greater => false,
                    },
                };
                (if better { Some((obj, idx)) } else { best }, devs, used)
            },
        )
        .map(|(best, _, _)| best)
        .reduce(
            || None,
            |a, b| match (a, b) {
                (None, x) | (x, None) => x,
                (Some(a), Some(b)) => match a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)) {
                    Ordering::Greater => Some(b),
                    _ => Some(a),
                },
            },
        );

    let Some((objective, idx)) = best else {
        // Every single-copy assignment overflows some device; name the
        // largest module as the culprit.
        let m = greedy_order(catalog)[0];
        return Err(PlacementError::Infeasible {
            function_key: m.function_key.clone(),
        });
    };
    let mut devs = vec![0usize; k];
    e.decode(idx as u128, &mut devs);
    let assign = catalog
        .distinct_modules
        .iter()
        .zip(&devs)
        .map(|(m, &d)| (m.function_key.clone(), vec![s.devices[d].device_id.clone()]))
        .collect();
    let p = Placement::from_assignments(s, catalog, assign)?;
    Ok((p, objective))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::routing::total_latency;
    use crate::scenario::{ComputeEntry, Link, ModelSpec};

    /// Two devices, a CLIP-like model, comm-free network.
    fn two_devices(fast: [f64; 3], slow: [f64; 3]) -> Scenario {
        let mut s = Scenario::default();
        s.devices = vec![DeviceSpec::new("A", 100_000_000), DeviceSpec::new("B", 100_000_000)];
        s.modules = vec![
            ModuleSpec::encoder("v", "vision", "vision", 86_000_000),
            ModuleSpec::encoder("t", "text", "text", 38_000_000),
            ModuleSpec::head("h", "head", 0),
        ];
        s.models = vec![ModelSpec {
            model_id: "clip".into(),
            encoder_ids: vec!["v".into(), "t".into()],
            head_id: "h".into(),
        }];
        for (i, fk) in ["vision", "text", "head"].into_iter().enumerate() {
            s.compute.insert(fk, "A", ComputeEntry::new(fast[i]));
            s.compute.insert(fk, "B", ComputeEntry::new(slow[i]));
        }
        s.network.insert_symmetric("A", "B", Link { latency: 0.0, bandwidth: 1e9 });
        s.trace.push(Request {
            request_id: "q".into(),
            model_id: "clip".into(),
            source_device: "A".into(),
            arrival_time: 0.0,
        });
        s
    }

    fn catalog(s: &Scenario) -> SharedCatalog {
        build_shared_catalog(s).unwrap()
    }

    #[test]
    fn encoder_completion_accumulates() {
        let s = two_devices([3.0, 2.0, 0.1], [9.0, 9.0, 9.0]);
        let c = catalog(&s);
        let v = c.get("vision").unwrap();
        let t = c.get("text").unwrap();
        let a = &s.devices[0];
        let empty = Placement::empty(&s);
        assert_eq!(completion_time_encoder(v, a, &empty, &s.compute), Some(3.0));
        let mut p = Placement::empty(&s);
        p.add(&s, "text", "A");
        assert_eq!(completion_time_encoder(v, a, &p, &s.compute), Some(5.0));
        assert_eq!(completion_time_encoder(t, a, &p, &s.compute), Some(4.0));
    }

    #[test]
    fn encoder_completion_infeasible_without_entry() {
        let mut s = two_devices([3.0, 2.0, 0.1], [9.0, 9.0, 9.0]);
        s.compute.entries.remove(&("vision".into(), "B".into()));
        let c = catalog(&s);
        let v = c.get("vision").unwrap();
        assert_eq!(completion_time_encoder(v, &s.devices[1], &Placement::empty(&s), &s.compute), None);
        let h = c.get("head").unwrap();
        s.compute.entries.remove(&("head".into(), "B".into()));
        assert_eq!(completion_time_head(h, &s.devices[1], &s.compute), None);
    }

    #[test]
    fn head_completion_ignores_what_is_placed() {
        let s = two_devices([3.0, 2.0, 0.5], [9.0, 9.0, 9.0]);
        let c = catalog(&s);
        let h = c.get("head").unwrap();
        let v = c.get("vision").unwrap();
        let mut busy = Placement::empty(&s);
        busy.add(&s, "text", "A");
        assert_eq!(completion_time_head(h, &s.devices[0], &s.compute), Some(0.5));
        // the encoder on the same busy device does accumulate
        assert_eq!(completion_time_encoder(v, &s.devices[0], &busy, &s.compute), Some(5.0));
        let via_internal =
            completion_time(h, &s.devices[0], &busy, &s, &c, PlaceOptions::default());
        assert_eq!(via_internal, Some(0.5));
    }

    #[test]
    fn greedy_splits_encoders_and_matches_brute_force() {
        // A: vision 2.0, text 1.0; B: vision 6.0, text 1.5.
        // vision -> A (2.0 < 6.0); text: A accumulates 3.0 vs B 1.5 -> B;
        // head: A 0.1 vs B 0.3 -> A.
        let s = two_devices([2.0, 1.0, 0.1], [6.0, 1.5, 0.3]);
        let c = catalog(&s);
        let (p, trace) = greedy_place(&s, &c).unwrap();
        assert_eq!(p.hosts("vision"), ["A"]);
        assert_eq!(p.hosts("text"), ["B"]);
        assert_eq!(p.hosts("head"), ["A"]);
        assert_eq!(trace.steps.len(), 3);
        assert_eq!(trace.steps[1].candidates[0].device, "B");
        assert_eq!(trace.steps[1].candidates[1].t_place, Some(3.0));

        let greedy = total_latency(&s, &p, &s.trace).unwrap();
        assert!((greedy - 2.1).abs() < 1e-12);

        // Oracle: every (vision, text, head) assignment evaluated by hand.
        let mut best = f64::INFINITY;
        let times = |d: usize| if d == 0 { [2.0, 1.0, 0.1] } else { [6.0, 1.5, 0.3] };
        for v in 0..2 {
            for t in 0..2 {
                for h in 0..2 {
                    let cost = f64::max(times(v)[0], times(t)[1]) + times(h)[2];
                    best = best.min(cost);
                }
            }
        }
        let (_, brute) = brute_force_place(&s, &c, &s.trace).unwrap();
        assert!((brute - best).abs() < 1e-12);
        assert!((greedy - brute).abs() < 1e-12);
    }

    #[test]
    fn oversized_module_is_infeasible() {
        let mut s = two_devices([1.0, 1.0, 1.0], [1.0, 1.0, 1.0]);
        s.modules[0].memory_req = 200_000_000;
        let c = catalog(&s);
        assert_eq!(
            greedy_place(&s, &c).unwrap_err(),
            PlacementError::Infeasible {
                function_key: "vision".into()
            }
        );
        assert!(matches!(
            brute_force_place(&s, &c, &s.trace),
            Err(PlacementError::Infeasible { .. })
        ));
    }

    #[test]
    fn single_device_takes_everything() {
        let mut s = two_devices([1.0, 1.0, 1.0], [1.0, 1.0, 1.0])
            .restrict_devices(|d| d.device_id == "A")
            .unwrap();
        s.devices[0].memory_capacity = 200_000_000;
        let c = catalog(&s);
        let (p, _) = greedy_place(&s, &c).unwrap();
        assert_eq!(p.residual_memory["A"], 76_000_000);
        assert!(p.assign.values().all(|d| d == &["A"]));
        let (bp, bo) = brute_force_place(&s, &c, &s.trace).unwrap();
        assert_eq!(bp, p);
        assert_eq!(bo, total_latency(&s, &p, &s.trace).unwrap());
    }

    #[test]
    fn memory_ties_break_by_function_key() {
        let mut s = two_devices([1.0, 1.0, 1.0], [1.0, 1.0, 1.0]);
        s.modules[1].memory_req = 86_000_000;
        let c = catalog(&s);
        let (_, trace) = greedy_place(&s, &c).unwrap();
        let order: Vec<_> = trace.steps.iter().map(|s| s.function_key.as_str()).collect();
        assert_eq!(order, ["text", "vision", "head"]);
    }

    #[test]
    fn head_exclusion_flag_changes_accumulation() {
        let s = two_devices([1.0, 1.0, 5.0], [1.0, 1.0, 5.0]);
        let c = catalog(&s);
        let mut p = Placement::empty(&s);
        p.add(&s, "head", "A");
        let v = c.get("vision").unwrap();
        let with = completion_time(v, &s.devices[0], &p, &s, &c, PlaceOptions::default());
        let without = completion_time(
            v,
            &s.devices[0],
            &p,
            &s,
            &c,
            PlaceOptions {
                accumulate_heads: false,
            },
        );
        assert_eq!(with, Some(6.0));
        assert_eq!(without, Some(1.0));
    }

    #[test]
    fn replication_fills_slack_once() {
        // A is full after the greedy pass; B keeps room for exactly one
        // vision replica.
        let mut s = two_devices([2.0, 1.0, 0.1], [6.0, 1.5, 0.3]);
        s.devices[0].memory_capacity = 86_000_000;
        s.devices[1].memory_capacity = 38_000_000 + 86_000_000 + 30;
        s.modules[2].memory_req = 20;
        let c = catalog(&s);
        let (p, _) = greedy_place(&s, &c).unwrap();
        assert_eq!(p.hosts("vision"), ["A"]);
        let r = replicate_leftover(&s, &c, &p);
        assert_eq!(r.hosts("vision"), ["A", "B"]);
        assert_eq!(r.hosts("text"), ["B"]);
        assert_eq!(r.residual_memory["B"], 10);
        for (dev, used) in r.memory_by_device(&s, &c) {
            assert!(used <= s.device(&dev).unwrap().memory_capacity);
        }
    }

    #[test]
    fn replication_on_full_devices_is_a_no_op() {
        let mut s = two_devices([2.0, 1.0, 0.1], [6.0, 1.5, 0.3]);
        s.devices[0].memory_capacity = 86_000_000;
        s.devices[1].memory_capacity = 38_000_000;
        s.modules[2].memory_req = 1;
        s.devices[1].memory_capacity += 1;
        let c = catalog(&s);
        let (p, _) = greedy_place(&s, &c).unwrap();
        assert_eq!(replicate_leftover(&s, &c, &p), p);
    }

    #[test]
    fn centralized_respects_memory_and_compute() {
        let s = two_devices([1.0, 1.0, 1.0], [1.0, 1.0, 1.0]);
        assert!(centralized_place(&s, "A", true).is_none());
        let mut big = s.clone();
        big.devices[0].memory_capacity = 124_000_000;
        let p = centralized_place(&big, "A", true).unwrap();
        assert_eq!(p.residual_memory["A"], 0);
        assert!(centralized_place(&big, "nope", true).is_none());
        big.compute.entries.remove(&("text".into(), "A".into()));
        assert!(centralized_place(&big, "A", true).is_none());
    }

    #[test]
    fn centralized_without_sharing_duplicates_modules() {
        let mut s = two_devices([1.0, 1.0, 1.0], [1.0, 1.0, 1.0]);
        s.models.push(ModelSpec {
            model_id: "cls".into(),
            encoder_ids: vec!["v".into()],
            head_id: "h".into(),
        });
        s.devices[0].memory_capacity = 210_000_000;
        let shared = centralized_place(&s, "A", true).unwrap();
        assert_eq!(shared.residual_memory["A"], 210_000_000 - 124_000_000);
        let unshared = centralized_place(&s, "A", false).unwrap();
        assert_eq!(unshared.residual_memory["A"], 0);
        assert_eq!(unshared.assign.len(), 5);
    }

    #[test]
    fn centralized_with_no_modules_is_feasible() {
        let mut s = Scenario::default();
        s.devices.push(DeviceSpec::new("solo", 0));
        let p = centralized_place(&s, "solo", true).unwrap();
        assert!(p.assign.is_empty());
    }

    #[test]
    fn placement_json_round_trip_and_checks() {
        let s = two_devices([2.0, 1.0, 0.1], [6.0, 1.5, 0.3]);
        let c = catalog(&s);
        let (p, _) = greedy_place(&s, &c).unwrap();
        assert_eq!(Placement::from_json(&s, &p.to_json()).unwrap(), p);
        let bad = r#"{"assign": {"vision": ["A"], "text": ["A"], "head": ["Z"]}}"#;
        assert!(Placement::from_json(&s, bad).is_err());
        let over = r#"{"assign": {"vision": ["A"], "text": ["A"]}}"#;
        assert!(matches!(
            Placement::from_json(&s, over),
            Err(PlacementLoadError::Placement(PlacementError::OverCapacity { .. }))
        ));
    }

    #[test]
    fn guard_rejects_huge_search_spaces() {
        let mut s = Scenario::default();
        for i in 0..10 {
            s.devices.push(DeviceSpec::new(format!("d{i}"), u64::MAX / 64));
        }
        let mut encoders = Vec::new();
        for k in 0..7 {
            let id = format!("e{k}");
            s.modules.push(ModuleSpec::encoder(id.clone(), id.clone(), id.clone(), 1));
            encoders.push(id);
        }
        s.modules.push(ModuleSpec::head("h", "h", 0));
        s.models.push(ModelSpec {
            model_id: "m".into(),
            encoder_ids: encoders,
            head_id: "h".into(),
        });
        for m in &s.modules {
            for d in &s.devices {
                s.compute.insert(&m.function_key, &d.device_id, ComputeEntry::new(1.0));
            }
        }
        let c = catalog(&s);
        assert!(matches!(
            brute_force_place(&s, &c, &[]),
            Err(PlacementError::SearchSpaceTooLarge { .. })
        ));
    }
}
