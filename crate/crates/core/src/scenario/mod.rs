//! Domain types for devices, modules, models, network links and request traces.
//!
//! A [`Scenario`] is an immutable value. It is built either by [`parse_scenario`]
//! from the JSON scenario format or programmatically (the instance generator does
//! this), and checked with [`validate_scenario`].

mod doc;
mod validate;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use doc::{emit_scenario, parse_scenario};
pub use validate::{validate_scenario, Violation};

pub type DeviceId = String;
pub type ModuleId = String;
pub type ModelId = String;
/// Sharing identity of a module: architecture plus parameter version.
pub type FunctionKey = String;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSpec {
    pub device_id: DeviceId,
    /// Memory budget in parameter counts.
    pub memory_capacity: u64,
    pub compute_slots: u32,
    pub uplink_serialized: bool,
    /// Cloud devices take part in centralized baselines but are left out of
    /// edge-only deployments.
    pub cloud: bool,
}

impl DeviceSpec {
    pub fn new(device_id: impl Into<DeviceId>, memory_capacity: u64) -> Self {
        Self {
            device_id: device_id.into(),
            memory_capacity,
            compute_slots: 1,
            uplink_serialized: true,
            cloud: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModuleKind {
    Encoder { modality: String },
    Head,
}

impl ModuleKind {
    pub fn is_head(&self) -> bool {
        matches!(self, ModuleKind::Head)
    }

    pub fn modality(&self) -> Option<&str> {
        match self {
            ModuleKind::Encoder { modality } => Some(modality),
            ModuleKind::Head => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleSpec {
    pub module_id: ModuleId,
    pub function_key: FunctionKey,
    pub kind: ModuleKind,
    /// Parameter count.
    pub memory_req: u64,
    /// Embedding size for encoders, answer size for heads (data units).
    pub output_size: f64,
    /// Raw modality payload for encoders; zero for heads.
    pub input_size: f64,
}

impl ModuleSpec {
    pub fn encoder(
        module_id: impl Into<ModuleId>,
        function_key: impl Into<FunctionKey>,
        modality: impl Into<String>,
        memory_req: u64,
    ) -> Self {
        Self {
            module_id: module_id.into(),
            function_key: function_key.into(),
            kind: ModuleKind::Encoder {
                modality: modality.into(),
            },
            memory_req,
            output_size: 0.0,
            input_size: 0.0,
        }
    }

    pub fn head(
        module_id: impl Into<ModuleId>,
        function_key: impl Into<FunctionKey>,
        memory_req: u64,
    ) -> Self {
        Self {
            module_id: module_id.into(),
            function_key: function_key.into(),
            kind: ModuleKind::Head,
            memory_req,
            output_size: 0.0,
            input_size: 0.0,
        }
    }

    pub fn with_sizes(mut self, input_size: f64, output_size: f64) -> Self {
        self.input_size = input_size;
        self.output_size = output_size;
        self
    }

    pub fn is_head(&self) -> bool {
        self.kind.is_head()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComputeEntry {
    /// Seconds per execution, strictly positive.
    pub comp_time: f64,
    /// One-off load time in seconds, charged in end-to-end runs.
    pub load_time: f64,
}

impl ComputeEntry {
    pub fn new(comp_time: f64) -> Self {
        Self {
            comp_time,
            load_time: 0.0,
        }
    }
}

/// Per-(function key, device) execution table. A missing entry means the
/// device cannot host that module.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ComputeProfile {
    pub entries: BTreeMap<(FunctionKey, DeviceId), ComputeEntry>,
}

impl ComputeProfile {
    pub fn get(&self, function_key: &str, device_id: &str) -> Option<&ComputeEntry> {
        // BTreeMap<(String, String), _> cannot be queried with borrowed halves.
        self.entries
            .get(&(function_key.to_owned(), device_id.to_owned()))
    }

    pub fn insert(&mut self, function_key: &str, device_id: &str, entry: ComputeEntry) {
        self.entries
            .insert((function_key.to_owned(), device_id.to_owned()), entry);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Link {
    /// Seconds.
    pub latency: f64,
    /// Data units per second.
    pub bandwidth: f64,
}

/// Directed link table. Self-links are implicit and free.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NetworkProfile {
    pub links: BTreeMap<(DeviceId, DeviceId), Link>,
}

impl NetworkProfile {
    pub fn link(&self, from: &str, to: &str) -> Option<&Link> {
        self.links.get(&(from.to_owned(), to.to_owned()))
    }

    pub fn insert(&mut self, from: &str, to: &str, link: Link) {
        self.links.insert((from.to_owned(), to.to_owned()), link);
    }

    /// Inserts the same link in both directions.
    pub fn insert_symmetric(&mut self, a: &str, b: &str, link: Link) {
        self.insert(a, b, link);
        self.insert(b, a, link);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub model_id: ModelId,
    pub encoder_ids: Vec<ModuleId>,
    pub head_id: ModuleId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub request_id: String,
    pub model_id: ModelId,
    pub source_device: DeviceId,
    pub arrival_time: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Scenario {
    pub name: Option<String>,
    pub description: Option<String>,
    pub devices: Vec<DeviceSpec>,
    pub modules: Vec<ModuleSpec>,
    pub models: Vec<ModelSpec>,
    pub compute: ComputeProfile,
    pub network: NetworkProfile,
    pub trace: Vec<Request>,
    /// Per-(function key, device) cap on requests routed over a whole run.
    /// Absent means unlimited.
    pub capacity: BTreeMap<(FunctionKey, DeviceId), u64>,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("reference error: {0}")]
    Reference(String),
    #[error("invalid scenario: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("cannot restrict scenario: {0}")]
    Restrict(String),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

impl Scenario {
    pub fn device(&self, id: &str) -> Option<&DeviceSpec> {
        self.devices.iter().find(|d| d.device_id == id)
    }

    pub fn device_index(&self, id: &str) -> Option<usize> {
        self.devices.iter().position(|d| d.device_id == id)
    }

    pub fn module(&self, id: &str) -> Option<&ModuleSpec> {
        self.modules.iter().find(|m| m.module_id == id)
    }

    /// First module carrying `function_key`, in scenario order.
    pub fn module_by_key(&self, function_key: &str) -> Option<&ModuleSpec> {
        self.modules.iter().find(|m| m.function_key == function_key)
    }

    pub fn model(&self, id: &str) -> Option<&ModelSpec> {
        self.models.iter().find(|m| m.model_id == id)
    }

    /// Resolved modules of a model: encoders in declaration order, then the head.
    pub fn model_modules(&self, model: &ModelSpec) -> Vec<&ModuleSpec> {
        model
            .encoder_ids
            .iter()
            .chain(std::iter::once(&model.head_id))
            .filter_map(|id| self.module(id))
            .collect()
    }

    pub fn capacity_of(&self, function_key: &str, device_id: &str) -> Option<u64> {
        self.capacity
            .get(&(function_key.to_owned(), device_id.to_owned()))
            .copied()
    }

    /// Keeps only the devices accepted by `keep`, dropping their compute,
    /// network and capacity entries. Fails if a request originates on a
    /// removed device.
    pub fn restrict_devices(
        &self,
        keep: impl Fn(&DeviceSpec) -> bool,
    ) -> Result<Scenario, ScenarioError> {
        let kept: HashMap<&str, ()> = self
            .devices
            .iter()
            .filter(|d| keep(d))
            .map(|d| (d.device_id.as_str(), ()))
            .collect();
        if let Some(q) = self
            .trace
            .iter()
            .find(|q| !kept.contains_key(q.source_device.as_str()))
        {
            return Err(ScenarioError::Restrict(format!(
                "request `{}` originates on removed device `{}`",
                q.request_id, q.source_device
            )));
        }
        let mut out = self.clone();
        out.devices.retain(|d| kept.contains_key(d.device_id.as_str()));
        out.compute
            .entries
            .retain(|(_, dev), _| kept.contains_key(dev.as_str()));
        out.network
            .links
            .retain(|(a, b), _| kept.contains_key(a.as_str()) && kept.contains_key(b.as_str()));
        out.capacity
            .retain(|(_, dev), _| kept.contains_key(dev.as_str()));
        Ok(out)
    }

    /// The scenario without its cloud devices.
    pub fn edge_view(&self) -> Result<Scenario, ScenarioError> {
        self.restrict_devices(|d| !d.cloud)
    }

    /// Keeps only the listed models, the modules they reference and the
    /// requests addressed to them.
    pub fn restrict_models(&self, model_ids: &[&str]) -> Scenario {
        let mut out = self.clone();
        out.models.retain(|m| model_ids.contains(&m.model_id.as_str()));
        let used: Vec<&str> = out
            .models
            .iter()
            .flat_map(|m| m.encoder_ids.iter().chain(std::iter::once(&m.head_id)))
            .map(String::as_str)
            .collect();
        out.modules.retain(|m| used.contains(&m.module_id.as_str()));
        let keys: Vec<&str> = out.modules.iter().map(|m| m.function_key.as_str()).collect();
        out.compute
            .entries
            .retain(|(fk, _), _| keys.contains(&fk.as_str()));
        out.capacity.retain(|(fk, _), _| keys.contains(&fk.as_str()));
        out.trace
            .retain(|q| model_ids.contains(&q.model_id.as_str()));
        out
    }

    /// Rewrites the scenario so that no two models share a module: every
    /// module reference gets its own module id and function key
    /// (`<model>/<key>`), with compute and capacity entries copied over.
    pub fn unshared(&self) -> Scenario {
        let mut out = self.clone();
        out.modules.clear();
        out.compute.entries.clear();
        out.capacity.clear();
        for model in &mut out.models {
            let mut rename = |id: &mut ModuleId| {
                let Some(orig) = self.module(id) else { return };
                let mut m = orig.clone();
                m.module_id = format!("{}/{}", model.model_id, orig.module_id);
                m.function_key = format!("{}/{}", model.model_id, orig.function_key);
                for ((fk, dev), e) in &self.compute.entries {
                    if *fk == orig.function_key {
                        out.compute
                            .entries
                            .insert((m.function_key.clone(), dev.clone()), *e);
                    }
                }
                for ((fk, dev), cap) in &self.capacity {
                    if *fk == orig.function_key {
                        out.capacity
                            .insert((m.function_key.clone(), dev.clone()), *cap);
                    }
                }
                *id = m.module_id.clone();
                if !out.modules.iter().any(|x| x.module_id == m.module_id) {
                    out.modules.push(m);
                }
            };
            for id in &mut model.encoder_ids {
                rename(id);
            }
            rename(&mut model.head_id);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn two_model_scenario() -> Scenario {
        let mut s = Scenario::default();
        s.devices = vec![DeviceSpec::new("a", 500), DeviceSpec::new("b", 500)];
        s.modules = vec![
            ModuleSpec::encoder("v", "vis", "vision", 100),
            ModuleSpec::encoder("t", "txt", "text", 40),
            ModuleSpec::head("h1", "cos", 0),
            ModuleSpec::head("h2", "cls", 1),
        ];
        s.models = vec![
            ModelSpec {
                model_id: "ret".into(),
                encoder_ids: vec!["v".into(), "t".into()],
                head_id: "h1".into(),
            },
            ModelSpec {
                model_id: "cls".into(),
                encoder_ids: vec!["v".into()],
                head_id: "h2".into(),
            },
        ];
        for fk in ["vis", "txt", "cos", "cls"] {
            s.compute.insert(fk, "a", ComputeEntry::new(1.0));
            s.compute.insert(fk, "b", ComputeEntry::new(2.0));
        }
        s.network.insert_symmetric(
            "a",
            "b",
            Link {
                latency: 0.001,
                bandwidth: 1e6,
            },
        );
        s
    }

    #[test]
    fn unshared_duplicates_every_reference() {
        let s = two_model_scenario();
        let u = s.unshared();
        assert_eq!(u.modules.len(), 5);
        assert!(u.module_by_key("ret/vis").is_some());
        assert!(u.module_by_key("cls/vis").is_some());
        assert_eq!(u.compute.entries.len(), 10);
        assert!(validate_scenario(&u).is_empty());
    }

    #[test]
    fn restrict_devices_refuses_to_orphan_requests() {
        let mut s = two_model_scenario();
        s.trace.push(Request {
            request_id: "q".into(),
            model_id: "ret".into(),
            source_device: "b".into(),
            arrival_time: 0.0,
        });
        assert!(s.restrict_devices(|d| d.device_id == "a").is_err());
        let r = s.restrict_devices(|d| d.device_id == "b").unwrap();
        assert_eq!(r.devices.len(), 1);
        assert!(r.network.links.is_empty());
        assert!(r.compute.entries.keys().all(|(_, d)| d == "b"));
    }

    #[test]
    fn restrict_models_drops_unreferenced_modules() {
        let s = two_model_scenario();
        let r = s.restrict_models(&["cls"]);
        assert_eq!(r.modules.len(), 2);
        assert!(r.compute.entries.keys().all(|(fk, _)| fk == "vis" || fk == "cls"));
    }
}
