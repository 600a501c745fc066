//! Request routing over a placement and the analytic latency model.
//!
//! Each module of a request goes to the hosting device with the shortest
//! computation time among those that still have routing capacity left.
//! A request's latency is the slowest encoder path (input transfer,
//! computation, output transfer to the head) plus the head's computation.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::network_cost::{comm_time, MissingLink, TransferQuery};
use crate::placement::Placement;
use crate::scenario::{DeviceId, FunctionKey, ModelId, Request, Scenario};

/// Largest number of joint routes [`brute_force_route`] will enumerate.
pub const BRUTE_FORCE_ROUTE_LIMIT: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RoutingError {
    #[error("request `{request}`: module `{function_key}` is not placed on any device")]
    ModuleUnplaced { request: String, function_key: String },
    #[error("request `{request}`: every host of `{function_key}` has used up its capacity")]
    CapacityExhausted { request: String, function_key: String },
    #[error("request `{request}` names unknown model `{model}`")]
    UnknownModel { request: String, model: String },
    #[error("model `{model}` references unknown module `{module}`")]
    UnknownModule { model: String, module: String },
    #[error(transparent)]
    MissingLink(#[from] MissingLink),
    #[error("search space of {candidates} routes exceeds the limit of {limit}")]
    SearchSpaceTooLarge { candidates: u128, limit: u128 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Hop {
    pub function_key: FunctionKey,
    pub device: DeviceId,
}

/// Devices chosen for one request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Route {
    pub request_id: String,
    pub model_id: ModelId,
    pub source: DeviceId,
    /// In the model's encoder order.
    pub encoders: Vec<Hop>,
    pub head: Hop,
}

impl fmt::Display for Route {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({}) from {}:", self.request_id, self.model_id, self.source)?;
        for h in &self.encoders {
            write!(f, " {}@{}", h.function_key, h.device)?;
        }
        write!(f, " -> {}@{}", self.head.function_key, self.head.device)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathLatency {
    pub function_key: FunctionKey,
    pub device: DeviceId,
    pub input_comm: f64,
    pub comp: f64,
    pub output_comm: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyBreakdown {
    pub request_id: String,
    pub paths: Vec<PathLatency>,
    pub t_enc: f64,
    pub head_comp: f64,
    pub t_total: f64,
    /// Encoders of this request that landed on the same device; the model
    /// assumes they run in parallel, which such a device cannot do.
    pub warnings: Vec<String>,
}

struct ModuleRef<'a> {
    function_key: &'a str,
    input_size: f64,
    output_size: f64,
}

fn request_modules<'a>(
    s: &'a Scenario,
    q: &Request,
) -> Result<(Vec<ModuleRef<'a>>, ModuleRef<'a>), RoutingError> {
    let model = s.model(&q.model_id).ok_or_else(|| RoutingError::UnknownModel {
        request: q.request_id.clone(),
        model: q.model_id.clone(),
    })?;
    let lookup = |id: &str| {
        s.module(id)
            .map(|m| ModuleRef {
                function_key: &m.function_key,
                input_size: m.input_size,
                output_size: m.output_size,
            })
            .ok_or_else(|| RoutingError::UnknownModule {
                model: model.model_id.clone(),
                module: id.to_owned(),
            })
    };
    let encoders = model
        .encoder_ids
        .iter()
        .map(|id| lookup(id))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((encoders, lookup(&model.head_id)?))
}

fn comp_of(s: &Scenario, function_key: &str, device: &str) -> f64 {
    s.compute
        .get(function_key, device)
        .map_or(f64::INFINITY, |e| e.comp_time)
}

/// Routes requests against one placement, tracking how much routing
/// capacity each (module, device) pair has consumed.
#[derive(Debug, Clone)]
pub struct RoutingSession<'a> {
    s: &'a Scenario,
    placement: &'a Placement,
    used: BTreeMap<(FunctionKey, DeviceId), u64>,
}

impl<'a> RoutingSession<'a> {
    pub fn new(s: &'a Scenario, placement: &'a Placement) -> Self {
        Self {
            s,
            placement,
            used: BTreeMap::new(),
        }
    }

    /// Requests already routed to `function_key` on `device`.
    pub fn used(&self, function_key: &str, device: &str) -> u64 {
        self.used
            .get(&(function_key.to_owned(), device.to_owned()))
            .copied()
            .unwrap_or(0)
    }

    fn has_room(&self, function_key: &str, device: &str, pending: &[Hop]) -> bool {
        match self.s.capacity_of(function_key, device) {
            None => true,
            Some(limit) => {
                let claimed = pending
                    .iter()
                    .filter(|h| h.function_key == function_key && h.device == device)
                    .count() as u64;
                self.used(function_key, device) + claimed < limit
            }
        }
    }

    /// Hosts of `function_key` that still have room, in device order.
    fn open_hosts(&self, function_key: &str, pending: &[Hop]) -> Vec<&'a str> {
        self.placement
            .hosts(function_key)
            .iter()
            .map(String::as_str)
            .filter(|d| self.has_room(function_key, d, pending))
            .collect()
    }

    fn pick(&self, request: &str, function_key: &str, pending: &[Hop]) -> Result<Hop, RoutingError> {
        if self.placement.hosts(function_key).is_empty() {
            return Err(RoutingError::ModuleUnplaced {
                request: request.to_owned(),
                function_key: function_key.to_owned(),
            });
        }
        let mut best: Option<(&str, f64)> = None;
        for d in self.open_hosts(function_key, pending) {
            let t = comp_of(self.s, function_key, d);
            if best.is_none_or(|(_, bt)| t < bt) {
                best = Some((d, t));
            }
        }
        let (device, _) = best.ok_or_else(|| RoutingError::CapacityExhausted {
            request: request.to_owned(),
            function_key: function_key.to_owned(),
        })?;
        Ok(Hop {
            function_key: function_key.to_owned(),
            device: device.to_owned(),
        })
    }

    /// Routes one request and charges its capacity. Nothing is charged when
    /// routing fails.
    pub fn route_request(&mut self, q: &Request) -> Result<Route, RoutingError> {
        let (encoders, head) = request_modules(self.s, q)?;
        let mut hops: Vec<Hop> = Vec::with_capacity(encoders.len() + 1);
        for m in encoders.iter().chain(std::iter::once(&head)) {
            let hop = self.pick(&q.request_id, m.function_key, &hops)?;
            hops.push(hop);
        }
        let head = hops.pop().expect("head hop");
        let route = Route {
            request_id: q.request_id.clone(),
            model_id: q.model_id.clone(),
            source: q.source_device.clone(),
            encoders: hops,
            head,
        };
        self.charge(&route);
        Ok(route)
    }

    /// Charges one use of every (module, device) pair on `route`.
    pub fn charge(&mut self, route: &Route) {
        for h in route.encoders.iter().chain(std::iter::once(&route.head)) {
            *self
                .used
                .entry((h.function_key.clone(), h.device.clone()))
                .or_insert(0) += 1;
        }
    }
}

/// Routes the scenario's trace in order with one session.
pub fn route_trace(s: &Scenario, placement: &Placement) -> Result<Vec<Route>, RoutingError> {
    route_requests(s, placement, &s.trace)
}

pub fn route_requests(
    s: &Scenario,
    placement: &Placement,
    requests: &[Request],
) -> Result<Vec<Route>, RoutingError> {
    let mut session = RoutingSession::new(s, placement);
    requests.iter().map(|q| session.route_request(q)).collect()
}

/// Latency of `route` under the analytic model, assuming idle devices and
/// independent transfers.
pub fn analytic_latency(s: &Scenario, route: &Route) -> Result<LatencyBreakdown, RoutingError> {
    let q = Request {
        request_id: route.request_id.clone(),
        model_id: route.model_id.clone(),
        source_device: route.source.clone(),
        arrival_time: 0.0,
    };
    let (encoders, _) = request_modules(s, &q)?;
    let mut paths = Vec::with_capacity(encoders.len());
    let mut t_enc: f64 = 0.0;
    for (m, hop) in encoders.iter().zip(&route.encoders) {
        let input_comm = comm_time(
            &TransferQuery {
                from: &route.source,
                to: &hop.device,
                size: m.input_size,
            },
            &s.network,
        )?;
        let comp = comp_of(s, &hop.function_key, &hop.device);
        let output_comm = comm_time(
            &TransferQuery {
                from: &hop.device,
                to: &route.head.device,
                size: m.output_size,
            },
            &s.network,
        )?;
        let total = input_comm + comp + output_comm;
        t_enc = t_enc.max(total);
        paths.push(PathLatency {
            function_key: hop.function_key.clone(),
            device: hop.device.clone(),
            input_comm,
            comp,
            output_comm,
            total,
        });
    }
    let head_comp = comp_of(s, &route.head.function_key, &route.head.device);
    let mut warnings = Vec::new();
    for (i, a) in route.encoders.iter().enumerate() {
        for b in &route.encoders[i + 1..] {
            if a.device == b.device {
                warnings.push(format!(
                    "encoders `{}` and `{}` share device `{}`; parallel execution is optimistic",
                    a.function_key, b.function_key, a.device
                ));
            }
        }
    }
    Ok(LatencyBreakdown {
        request_id: route.request_id.clone(),
        paths,
        t_enc,
        head_comp,
        t_total: t_enc + head_comp,
        warnings,
    })
}

/// Routes `requests` in order and sums their analytic latencies.
pub fn total_latency(s: &Scenario, placement: &Placement, requests: &[Request]) -> Result<f64, RoutingError> {
    let mut total = 0.0;
    for route in route_requests(s, placement, requests)? {
        total += analytic_latency(s, &route)?.t_total;
    }
    Ok(total)
}

/// Exhaustive search for the route of `q` with the smallest analytic
/// latency, over hosts that still have capacity in `session`. Ties go to
/// the first route in enumeration order (modules in model order, hosts in
/// device order). Nothing is charged to the session.
pub fn brute_force_route(session: &RoutingSession<'_>, q: &Request) -> Result<(Route, f64), RoutingError> {
    let s = session.s;
    let (encoders, head) = request_modules(s, q)?;
    let keys: Vec<&str> = encoders
        .iter()
        .chain(std::iter::once(&head))
        .map(|m| m.function_key)
        .collect();
    let mut choices: Vec<Vec<&str>> = Vec::with_capacity(keys.len());
    for fk in &keys {
        if session.placement.hosts(fk).is_empty() {
            return Err(RoutingError::ModuleUnplaced {
                request: q.request_id.clone(),
                function_key: (*fk).to_owned(),
            });
        }
        let open = session.open_hosts(fk, &[]);
        if open.is_empty() {
            return Err(RoutingError::CapacityExhausted {
                request: q.request_id.clone(),
                function_key: (*fk).to_owned(),
            });
        }
        choices.push(open);
    }
    let candidates: u128 = choices.iter().map(|c| c.len() as u128).product();
    if candidates > BRUTE_FORCE_ROUTE_LIMIT {
        return Err(RoutingError::SearchSpaceTooLarge {
            candidates,
            limit: BRUTE_FORCE_ROUTE_LIMIT,
        });
    }

    let build = |idx: u128| {
        let mut idx = idx;
        let mut hops: Vec<Hop> = vec![
            Hop {
                function_key: String::new(),
                device: String::new()
            };
            keys.len()
        ];
        for k in (0..keys.len()).rev() {
            let radix = choices[k].len() as u128;
            hops[k] = Hop {
                function_key: keys[k].to_owned(),
                device: choices[k][(idx % radix) as usize].to_owned(),
            };
            idx /= radix;
        }
        let head = hops.pop().expect("head hop");
        Route {
            request_id: q.request_id.clone(),
            model_id: q.model_id.clone(),
            source: q.source_device.clone(),
            encoders: hops,
            head,
        }
    };

    let mut best: Option<(Route, f64)> = None;
    for idx in 0..candidates {
        let route = build(idx);
        // A route that needs a pair twice must fit both uses.
        let mut pending: Vec<Hop> = Vec::new();
        let mut fits = true;
        for h in route.encoders.iter().chain(std::iter::once(&route.head)) {
            if !session.has_room(&h.function_key, &h.device, &pending) {
                fits = false;
                break;
            }
            pending.push(h.clone());
        }
        if !fits {
            continue;
        }
        let t = analytic_latency(s, &route)?.t_total;
        if best
            .as_ref()
            .is_none_or(|(_, bt)| t.total_cmp(bt) == Ordering::Less)
        {
            best = Some((route, t));
        }
    }
    best.ok_or_else(|| RoutingError::CapacityExhausted {
        request: q.request_id.clone(),
        function_key: keys[0].to_owned(),
    })
}
