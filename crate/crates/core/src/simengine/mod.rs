//! Discrete-event simulation of a request trace over a placement.
//!
//! Each request sends its modality inputs from the source device to the
//! encoder devices, runs the encoders, forwards the embeddings to the head
//! device and runs the head. Devices execute up to `compute_slots` module
//! runs at a time and queue the rest FIFO. A source device with a
//! serialized uplink sends one input at a time, longest-encoding first.

mod report;

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap, VecDeque};
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

pub use report::{
    compare_modes, model_table, sharing_tradeoff, ComparisonReport, ModeRow, ModelRow,
    ModelTable, TradeoffRow, TradeoffTable,
};

use crate::network_cost::{comm_time, TransferQuery};
use crate::placement::Placement;
use crate::routing::Route;
use crate::scenario::{DeviceId, FunctionKey, Scenario};
use crate::sharing::build_shared_catalog;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("invalid route for request `{request}`: {reason}")]
    RouteInvalid { request: String, reason: String },
}

/// When a request may start sending its inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AdmissionMode {
    /// At its arrival time; it queues at whatever modules are still busy.
    #[default]
    Pipelined,
    /// Once every encoder of the previous request has finished.
    Coarse,
    /// Once the previous request has completed.
    Serial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SimOptions {
    /// Run a request's encoders concurrently. When off, each encoder's input
    /// is sent only after the previous encoder's output reached the head.
    pub parallel_encoders: bool,
    pub admission: AdmissionMode,
    /// Load every placed module from time zero, one after another per device
    /// in catalog order; a module cannot run before it is loaded.
    pub end_to_end: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            parallel_encoders: true,
            admission: AdmissionMode::Pipelined,
            end_to_end: false,
        }
    }
}

impl SimOptions {
    pub fn sequential() -> Self {
        Self {
            parallel_encoders: false,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum EventKind {
    SendStart,
    SendEnd,
    EncodeStart,
    EncodeEnd,
    ForwardStart,
    ForwardEnd,
    HeadStart,
    HeadEnd,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::SendStart => "send_start",
            EventKind::SendEnd => "send_end",
            EventKind::EncodeStart => "encode_start",
            EventKind::EncodeEnd => "encode_end",
            EventKind::ForwardStart => "forward_start",
            EventKind::ForwardEnd => "forward_end",
            EventKind::HeadStart => "head_start",
            EventKind::HeadEnd => "head_end",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    pub request_id: String,
    pub function_key: FunctionKey,
    /// Executing device, or the sender for transfers.
    pub device_id: DeviceId,
    /// Receiver of a transfer.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub peer: Option<DeviceId>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RequestMetrics {
    pub request_id: String,
    pub model_id: String,
    pub arrival: f64,
    /// Last encoder output at the head device, relative to arrival.
    pub t_enc: f64,
    /// From the last encoder output to head completion.
    pub t_head: f64,
    pub t_total: f64,
    /// Time this request's module runs spent queued behind other work.
    pub queue_wait: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModuleMetrics {
    pub function_key: FunctionKey,
    pub device_id: DeviceId,
    pub executions: u32,
    pub busy: f64,
    pub utilization: f64,
    /// Time-averaged number of runs waiting for this instance.
    pub mean_queue_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    #[serde(skip)]
    pub timeline: Vec<Event>,
    pub requests: Vec<RequestMetrics>,
    pub makespan: f64,
    pub modules: Vec<ModuleMetrics>,
}

impl SimResult {
    pub fn mean_t_total(&self) -> f64 {
        if self.requests.is_empty() {
            return 0.0;
        }
        self.requests.iter().map(|r| r.t_total).sum::<f64>() / self.requests.len() as f64
    }

    pub fn request(&self, request_id: &str) -> Option<&RequestMetrics> {
        self.requests.iter().find(|r| r.request_id == request_id)
    }

    /// Summary without the timeline.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("results always serialize")
    }

    pub fn timeline_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["time", "kind", "request", "module", "device", "peer"])
            .expect("in-memory write");
        for e in &self.timeline {
            w.write_record([
                format!("{:.6}", e.time),
                e.kind.as_str().to_owned(),
                e.request_id.clone(),
                e.function_key.clone(),
                e.device_id.clone(),
                e.peer.clone().unwrap_or_default(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
    }

    /// Text Gantt chart with one block per device: its uplink transfers,
    /// then encoder and head runs, each with a bar scaled to the makespan.
    pub fn gantt(&self, s: &Scenario, width: usize) -> String {
        let start = self.requests.iter().map(|r| r.arrival).fold(f64::INFINITY, f64::min);
        let start = if start.is_finite() { start } else { 0.0 };
        let end = self
            .timeline
            .iter()
            .map(|e| e.time)
            .fold(start, f64::max);
        let span = (end - start).max(f64::MIN_POSITIVE);
        let col = |t: f64| (((t - start) / span) * width as f64).round() as usize;

        let mut out = String::new();
        for d in &s.devices {
            let mut rows = Vec::new();
            for (open, close, tag) in [
                (EventKind::SendStart, EventKind::SendEnd, "send"),
                (EventKind::ForwardStart, EventKind::ForwardEnd, "fwd"),
                (EventKind::EncodeStart, EventKind::EncodeEnd, "enc"),
                (EventKind::HeadStart, EventKind::HeadEnd, "head"),
            ] {
                for (i, e) in self.timeline.iter().enumerate() {
                    if e.kind != open || e.device_id != d.device_id {
                        continue;
                    }
                    let Some(fin) = self.timeline[i..].iter().find(|x| {
                        x.kind == close
                            && x.request_id == e.request_id
                            && x.function_key == e.function_key
                            && x.device_id == e.device_id
                    }) else {
                        continue;
                    };
                    let label = match &e.peer {
                        Some(p) => format!("{tag} {} {} -> {p}", e.request_id, e.function_key),
                        None => format!("{tag} {} {}", e.request_id, e.function_key),
                    };
                    rows.push((e.time, fin.time, label));
                }
            }
            if rows.is_empty() {
                continue;
            }
            rows.sort_by(|a, b| a.0.total_cmp(&b.0));
            let _ = writeln!(out, "{}", d.device_id);
            let label_w = rows.iter().map(|r| r.2.len()).max().unwrap_or(0);
            for (a, b, label) in rows {
                let (ca, cb) = (col(a), col(b).max(col(a) + 1).min(width.max(1)));
                let mut bar = vec![' '; width.max(1)];
                for c in bar.iter_mut().take(cb).skip(ca.min(cb.saturating_sub(1))) {
                    *c = '#';
                }
                let bar: String = bar.into_iter().collect();
                let _ = writeln!(out, "  {label:<label_w$} |{bar}| {a:.3}-{b:.3}");
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
struct EncoderPlan {
    function_key: FunctionKey,
    device: usize,
    in_comm: f64,
    comp: f64,
    out_comm: f64,
}

#[derive(Debug, Clone)]
struct RequestPlan {
    request_id: String,
    model_id: String,
    arrival: f64,
    source: usize,
    encoders: Vec<EncoderPlan>,
    head_key: FunctionKey,
    head_device: usize,
    head_comp: f64,
    /// Encoder indices in the order their inputs leave the source.
    send_order: Vec<usize>,
}

fn plan_requests(
    s: &Scenario,
    p: &Placement,
    routes: &BTreeMap<String, Route>,
) -> Result<Vec<RequestPlan>, SimError> {
    let mut order: Vec<usize> = (0..s.trace.len()).collect();
    order.sort_by(|&a, &b| s.trace[a].arrival_time.total_cmp(&s.trace[b].arrival_time).then(a.cmp(&b)));

    let mut plans = Vec::with_capacity(order.len());
    for i in order {
        let q = &s.trace[i];
        let bad = |reason: String| SimError::RouteInvalid {
            request: q.request_id.clone(),
            reason,
        };
        let route = routes
            .get(&q.request_id)
            .ok_or_else(|| bad("no route".into()))?;
        let model = s
            .model(&q.model_id)
            .ok_or_else(|| bad(format!("unknown model `{}`", q.model_id)))?;
        if route.model_id != q.model_id || route.source != q.source_device {
            return Err(bad("route does not match the request".into()));
        }
        if route.encoders.len() != model.encoder_ids.len() {
            return Err(bad("wrong number of encoders".into()));
        }
        let source = s
            .device_index(&q.source_device)
            .ok_or_else(|| bad(format!("unknown source `{}`", q.source_device)))?;
        let head_mod = s
            .module(&model.head_id)
            .ok_or_else(|| bad(format!("unknown head `{}`", model.head_id)))?;
        let check = |fk: &str, device: &str| -> Result<(usize, f64), SimError> {
            if !p.is_hosted(fk, device) {
                return Err(bad(format!("`{fk}` is not placed on `{device}`")));
            }
            let idx = s
                .device_index(device)
                .ok_or_else(|| bad(format!("unknown device `{device}`")))?;
            let comp = s
                .compute
                .get(fk, device)
                .ok_or_else(|| bad(format!("`{device}` cannot run `{fk}`")))?
                .comp_time;
            Ok((idx, comp))
        };
        if route.head.function_key != head_mod.function_key {
            return Err(bad("head does not match the model".into()));
        }
        let (head_device, head_comp) = check(&route.head.function_key, &route.head.device)?;
        let mut encoders = Vec::with_capacity(route.encoders.len());
        for (id, hop) in model.encoder_ids.iter().zip(&route.encoders) {
            let m = s
                .module(id)
                .ok_or_else(|| bad(format!("unknown module `{id}`")))?;
            if m.function_key != hop.function_key {
                return Err(bad(format!("encoder `{}` does not match the model", hop.function_key)));
            }
            let (device, comp) = check(&hop.function_key, &hop.device)?;
            let link = |from: &str, to: &str, size: f64| {
                comm_time(&TransferQuery { from, to, size }, &s.network).map_err(|e| bad(e.to_string()))
            };
            encoders.push(EncoderPlan {
                function_key: hop.function_key.clone(),
                device,
                in_comm: link(&q.source_device, &hop.device, m.input_size)?,
                comp,
                out_comm: link(&hop.device, &route.head.device, m.output_size)?,
            });
        }
        let mut send_order: Vec<usize> = (0..encoders.len()).collect();
        send_order.sort_by(|&a, &b| encoders[b].comp.total_cmp(&encoders[a].comp).then(a.cmp(&b)));
        plans.push(RequestPlan {
            request_id: q.request_id.clone(),
            model_id: q.model_id.clone(),
            arrival: q.arrival_time,
            source,
            encoders,
            head_key: route.head.function_key.clone(),
            head_device,
            head_comp,
            send_order,
        });
    }
    Ok(plans)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Action {
    Release(usize),
    SendEnd(usize, usize),
    JobEnd(usize),
    ForwardEnd(usize, usize),
    Loaded,
}

/// Heap entry ordered by (time, request order, function key, device, seq).
struct Pending {
    time: f64,
    request: usize,
    function_key: FunctionKey,
    device: usize,
    seq: u64,
    action: Action,
}

impl Pending {
    fn cmp_key(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.request.cmp(&other.request))
            .then_with(|| self.function_key.cmp(&other.function_key))
            .then(self.device.cmp(&other.device))
            .then(self.seq.cmp(&other.seq))
    }
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp_key(other) == Ordering::Equal
    }
}
impl Eq for Pending {}
impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cmp_key(other)
    }
}

#[derive(Debug, Clone)]
struct Job {
    request: usize,
    /// `None` for the head.
    encoder: Option<usize>,
    function_key: FunctionKey,
    device: usize,
    comp: f64,
    enqueued: f64,
    seq: u64,
}

#[derive(Debug, Clone, Default)]
struct RequestState {
    released: bool,
    next_encoder: usize,
    encoders_done: usize,
    outputs_arrived: usize,
    last_output: f64,
    head_end: Option<f64>,
    queue_wait: f64,
}

#[derive(Debug, Clone, Default)]
struct ModuleState {
    executions: u32,
    busy: f64,
    waited: f64,
}

struct Engine<'a> {
    s: &'a Scenario,
    plans: Vec<RequestPlan>,
    opts: SimOptions,
    heap: BinaryHeap<Reverse<Pending>>,
    seq: u64,
    timeline: Vec<Event>,
    state: Vec<RequestState>,
    jobs: Vec<Job>,
    /// Waiting job ids per device, in FIFO order.
    queues: Vec<Vec<usize>>,
    running: Vec<u32>,
    uplinks: Vec<VecDeque<(usize, usize)>>,
    uplink_busy: Vec<bool>,
    /// Time each (function key, device) instance finishes loading.
    ready: BTreeMap<(FunctionKey, usize), f64>,
    modules: BTreeMap<(FunctionKey, usize), ModuleState>,
}

impl<'a> Engine<'a> {
    fn push(&mut self, time: f64, request: usize, function_key: &str, device: usize, action: Action) {
        self.seq += 1;
        self.heap.push(Reverse(Pending {
            time,
            request,
            function_key: function_key.to_owned(),
            device,
            seq: self.seq,
            action,
        }));
    }

    fn record(&mut self, time: f64, kind: EventKind, r: usize, function_key: &str, device: usize, peer: Option<usize>) {
        self.timeline.push(Event {
            time,
            kind,
            request_id: self.plans[r].request_id.clone(),
            function_key: function_key.to_owned(),
            device_id: self.s.devices[device].device_id.clone(),
            peer: peer.map(|p| self.s.devices[p].device_id.clone()),
        });
    }

    fn release(&mut self, r: usize, t: f64) {
        if self.state[r].released {
            return;
        }
        self.state[r].released = true;
        if self.opts.parallel_encoders {
            for k in 0..self.plans[r].send_order.len() {
                let i = self.plans[r].send_order[k];
                self.start_encoder(r, i, t);
            }
        } else {
            self.state[r].next_encoder = 1;
            self.start_encoder(r, 0, t);
        }
    }

    fn start_encoder(&mut self, r: usize, i: usize, t: f64) {
        let plan = &self.plans[r];
        if plan.source == plan.encoders[i].device {
            self.enqueue(r, Some(i), t);
        } else {
            self.uplinks[plan.source].push_back((r, i));
        }
    }

    fn enqueue(&mut self, r: usize, encoder: Option<usize>, t: f64) {
        let plan = &self.plans[r];
        let (function_key, device, comp) = match encoder {
            Some(i) => {
                let e = &plan.encoders[i];
                (e.function_key.clone(), e.device, e.comp)
            }
            None => (plan.head_key.clone(), plan.head_device, plan.head_comp),
        };
        self.seq += 1;
        let id = self.jobs.len();
        self.jobs.push(Job {
            request: r,
            encoder,
            function_key,
            device,
            comp,
            enqueued: t,
            seq: self.seq,
        });
        let jobs = &self.jobs;
        let queue = &mut self.queues[device];
        let key = |j: &Job| (j.enqueued, j.request, j.seq);
        let pos = queue
            .iter()
            .position(|&other| {
                let (a, b) = (key(&jobs[other]), key(&jobs[id]));
                a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)) == Ordering::Greater
            })
            .unwrap_or(queue.len());
        queue.insert(pos, id);
    }

    fn output_arrived(&mut self, r: usize, t: f64) {
        let st = &mut self.state[r];
        st.outputs_arrived += 1;
        st.last_output = st.last_output.max(t);
        let n = self.plans[r].encoders.len();
        if !self.opts.parallel_encoders && st.next_encoder < n {
            let i = st.next_encoder;
            st.next_encoder += 1;
            self.start_encoder(r, i, t);
        }
        if self.state[r].outputs_arrived == n {
            self.enqueue(r, None, t);
        }
    }

    fn gate_next(&mut self, r: usize, t: f64) {
        if r + 1 < self.plans.len() {
            let at = self.plans[r + 1].arrival.max(t);
            self.push(at, r + 1, "", 0, Action::Release(r + 1));
        }
    }

    fn handle(&mut self, p: Pending) {
        let t = p.time;
        match p.action {
            Action::Release(r) => self.release(r, t),
            Action::SendEnd(r, i) => {
                let (src, dev, fk) = {
                    let plan = &self.plans[r];
                    (plan.source, plan.encoders[i].device, plan.encoders[i].function_key.clone())
                };
                self.record(t, EventKind::SendEnd, r, &fk, src, Some(dev));
                if self.s.devices[src].uplink_serialized {
                    self.uplink_busy[src] = false;
                }
                self.enqueue(r, Some(i), t);
            }
            Action::ForwardEnd(r, i) => {
                let (dev, head, fk) = {
                    let plan = &self.plans[r];
                    (plan.encoders[i].device, plan.head_device, plan.encoders[i].function_key.clone())
                };
                self.record(t, EventKind::ForwardEnd, r, &fk, dev, Some(head));
                self.output_arrived(r, t);
            }
            Action::JobEnd(id) => {
                let job = self.jobs[id].clone();
                self.running[job.device] -= 1;
                let r = job.request;
                match job.encoder {
                    Some(i) => {
                        self.record(t, EventKind::EncodeEnd, r, &job.function_key, job.device, None);
                        self.state[r].encoders_done += 1;
                        if self.opts.admission == AdmissionMode::Coarse
                            && self.state[r].encoders_done == self.plans[r].encoders.len()
                        {
                            self.gate_next(r, t);
                        }
                        let head = self.plans[r].head_device;
                        if job.device == head {
                            self.output_arrived(r, t);
                        } else {
                            self.record(t, EventKind::ForwardStart, r, &job.function_key, job.device, Some(head));
                            let at = t + self.plans[r].encoders[i].out_comm;
                            self.push(at, r, &job.function_key, job.device, Action::ForwardEnd(r, i));
                        }
                    }
                    None => {
                        self.record(t, EventKind::HeadEnd, r, &job.function_key, job.device, None);
                        self.state[r].head_end = Some(t);
                        if self.opts.admission == AdmissionMode::Serial {
                            self.gate_next(r, t);
                        }
                    }
                }
            }
            Action::Loaded => {}
        }
    }

    fn dispatch(&mut self, t: f64) {
        for d in 0..self.s.devices.len() {
            let serialized = self.s.devices[d].uplink_serialized;
            while !(serialized && self.uplink_busy[d]) {
                let Some((r, i)) = self.uplinks[d].pop_front() else { break };
                let (dev, fk, comm) = {
                    let e = &self.plans[r].encoders[i];
                    (e.device, e.function_key.clone(), e.in_comm)
                };
                self.record(t, EventKind::SendStart, r, &fk, d, Some(dev));
                if serialized {
                    self.uplink_busy[d] = true;
                }
                self.push(t + comm, r, &fk, dev, Action::SendEnd(r, i));
            }
        }
        for d in 0..self.s.devices.len() {
            let slots = self.s.devices[d].compute_slots;
            while self.running[d] < slots {
                let Some(pos) = self.queues[d].iter().position(|&id| {
                    let j = &self.jobs[id];
                    self.ready
                        .get(&(j.function_key.clone(), d))
                        .is_none_or(|&at| at <= t)
                }) else {
                    break;
                };
                let id = self.queues[d].remove(pos);
                let job = self.jobs[id].clone();
                let wait = t - job.enqueued;
                self.running[d] += 1;
                self.state[job.request].queue_wait += wait;
                let m = self
                    .modules
                    .entry((job.function_key.clone(), d))
                    .or_default();
                m.executions += 1;
                m.busy += job.comp;
                m.waited += wait;
                let kind = if job.encoder.is_some() {
                    EventKind::EncodeStart
                } else {
                    EventKind::HeadStart
                };
                self.record(t, kind, job.request, &job.function_key, d, None);
                self.push(t + job.comp, job.request, &job.function_key, d, Action::JobEnd(id));
            }
        }
    }

    fn run(&mut self) {
        while let Some(Reverse(top)) = self.heap.peek() {
            let t = top.time;
            while self.heap.peek().is_some_and(|Reverse(p)| p.time == t) {
                let Reverse(p) = self.heap.pop().expect("peeked");
                self.handle(p);
            }
            self.dispatch(t);
        }
    }
}

/// Simulates the scenario's trace with the given routes (keyed by request
/// id). Deterministic: identical inputs give identical timelines.
pub fn simulate(
    s: &Scenario,
    p: &Placement,
    routes: &BTreeMap<String, Route>,
    opts: SimOptions,
) -> Result<SimResult, SimError> {
    let plans = plan_requests(s, p, routes)?;
    let n_dev = s.devices.len();
    let n_req = plans.len();
    let mut engine = Engine {
        s,
        opts,
        heap: BinaryHeap::new(),
        seq: 0,
        timeline: Vec::new(),
        state: vec![RequestState::default(); n_req],
        jobs: Vec::new(),
        queues: vec![Vec::new(); n_dev],
        running: vec![0; n_dev],
        uplinks: vec![VecDeque::new(); n_dev],
        uplink_busy: vec![false; n_dev],
        ready: BTreeMap::new(),
        modules: BTreeMap::new(),
        plans,
    };

    for (fk, devices) in &p.assign {
        for d in devices {
            if let Some(idx) = s.device_index(d) {
                engine.modules.entry((fk.clone(), idx)).or_default();
            }
        }
    }
    if opts.end_to_end {
        let order: Vec<FunctionKey> = match build_shared_catalog(s) {
            Ok(c) => c.distinct_modules.into_iter().map(|m| m.function_key).collect(),
            Err(_) => p.assign.keys().cloned().collect(),
        };
        for (idx, d) in s.devices.iter().enumerate() {
            let mut at = 0.0;
            for fk in order.iter().filter(|fk| p.is_hosted(fk, &d.device_id)) {
                at += s.compute.get(fk, &d.device_id).map_or(0.0, |e| e.load_time);
                engine.ready.insert((fk.clone(), idx), at);
                engine.push(at, usize::MAX, fk, idx, Action::Loaded);
            }
        }
    }
    match opts.admission {
        AdmissionMode::Pipelined => {
            for r in 0..n_req {
                let at = engine.plans[r].arrival;
                engine.push(at, r, "", 0, Action::Release(r));
            }
        }
        AdmissionMode::Coarse | AdmissionMode::Serial => {
            if n_req > 0 {
                let at = engine.plans[0].arrival;
                engine.push(at, 0, "", 0, Action::Release(0));
            }
        }
    }
    engine.run();

    let mut requests = Vec::with_capacity(n_req);
    let mut first = f64::INFINITY;
    let mut last = f64::NEG_INFINITY;
    for (plan, st) in engine.plans.iter().zip(&engine.state) {
        let end = st.head_end.expect("every request completes");
        first = first.min(plan.arrival);
        last = last.max(end);
        requests.push(RequestMetrics {
            request_id: plan.request_id.clone(),
            model_id: plan.model_id.clone(),
            arrival: plan.arrival,
            t_enc: st.last_output - plan.arrival,
            t_head: end - st.last_output,
            t_total: end - plan.arrival,
            queue_wait: st.queue_wait,
        });
    }
    let makespan = if n_req == 0 { 0.0 } else { last - first };
    let modules = engine
        .modules
        .iter()
        .map(|((fk, d), m)| ModuleMetrics {
            function_key: fk.clone(),
            device_id: s.devices[*d].device_id.clone(),
            executions: m.executions,
            busy: m.busy,
            utilization: if makespan > 0.0 { m.busy / makespan } else { 0.0 },
            mean_queue_length: if makespan > 0.0 { m.waited / makespan } else { 0.0 },
        })
        .collect();
    Ok(SimResult {
        timeline: engine.timeline,
        requests,
        makespan,
        modules,
    })
}

/// Routes keyed by request id, as [`simulate`] expects.
pub fn route_map(routes: Vec<Route>) -> BTreeMap<String, Route> {
    routes.into_iter().map(|r| (r.request_id.clone(), r)).collect()
}
