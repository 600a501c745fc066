//! JSON scenario file format.
//!
//! ```json
//! {
//!   "name": "...", "description": "...",
//!   "devices":  [{"id": "laptop", "memory_capacity": 4500000000, "compute_slots": 1,
//!                 "uplink_serialized": true, "cloud": false}],
//!   "modules":  [{"id": "vit", "function_key": "vit-b16-vision", "kind": "encoder",
//!                 "modality": "vision", "memory_req": 86000000,
//!                 "input_size": 150528, "output_size": 2048}],
//!   "models":   [{"id": "clip", "encoders": ["vit", "trf"], "head": "cos"}],
//!   "compute":  {"entries": [{"function_key": "vit-b16-vision", "device": "laptop",
//!                             "comp_time": 2.47, "load_time": 1.6}],
//!                "work": {"vit-b16-vision": 2.4}, "speed": {"laptop": 1.0}},
//!   "network":  {"default": {"latency": 0.003, "bandwidth": 2e7},
//!                "links": [{"from": "a", "to": "b", "latency": 0.003,
//!                           "bandwidth": 2e7, "symmetric": true}]},
//!   "trace":    [{"id": "q0", "model": "clip", "source": "jetson-a", "arrival": 0.0}],
//!   "capacity": [{"function_key": "vit-b16-vision", "device": "laptop", "limit": 4}]
//! }
//! ```
//!
//! `work`/`speed`, `default` and `symmetric` are shorthands that expand at
//! parse time; [`emit_scenario`] always writes the expanded form.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::error::Category;

use super::{
    validate_scenario, ComputeEntry, ComputeProfile, DeviceSpec, Link, ModelSpec, ModuleKind,
    ModuleSpec, NetworkProfile, Request, Scenario, ScenarioError, Violation,
};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    description: Option<String>,
    devices: Vec<DeviceDoc>,
    modules: Vec<ModuleDoc>,
    models: Vec<ModelDoc>,
    compute: ComputeDoc,
    #[serde(default)]
    network: NetworkDoc,
    #[serde(default)]
    trace: Vec<RequestDoc>,
    #[serde(default)]
    capacity: Vec<CapacityDoc>,
}

fn default_slots() -> u32 {
    1
}

fn default_true() -> bool {
    true
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DeviceDoc {
    id: String,
    memory_capacity: u64,
    #[serde(default = "default_slots")]
    compute_slots: u32,
    #[serde(default = "default_true")]
    uplink_serialized: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    cloud: bool,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum KindTag {
    Encoder,
    Head,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModuleDoc {
    id: String,
    function_key: String,
    kind: KindTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    modality: Option<String>,
    memory_req: u64,
    #[serde(default)]
    input_size: f64,
    #[serde(default)]
    output_size: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    id: String,
    encoders: Vec<String>,
    head: String,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ComputeDoc {
    #[serde(default)]
    entries: Vec<ComputeEntryDoc>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    work: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    speed: BTreeMap<String, f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ComputeEntryDoc {
    function_key: String,
    device: String,
    comp_time: f64,
    #[serde(default)]
    load_time: f64,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    default: Option<Link>,
    #[serde(default)]
    links: Vec<LinkDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkDoc {
    from: String,
    to: String,
    latency: f64,
    bandwidth: f64,
    #[serde(default, skip_serializing_if = "is_false")]
    symmetric: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RequestDoc {
    id: String,
    model: String,
    source: String,
    #[serde(default)]
    arrival: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CapacityDoc {
    function_key: String,
    device: String,
    limit: u64,
}

/// Parses and validates a scenario document.
///
/// Malformed JSON is a [`ScenarioError::Syntax`], type or field mismatches a
/// [`ScenarioError::Schema`], dangling ids a [`ScenarioError::Reference`];
/// any other invariant violation is reported as [`ScenarioError::Invalid`].
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let doc: ScenarioDoc = serde_json::from_str(text).map_err(|e| match e.classify() {
        Category::Data => ScenarioError::Schema(e.to_string()),
        _ => ScenarioError::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        },
    })?;
    let scenario = from_doc(doc)?;
    let violations = validate_scenario(&scenario);
    if let Some(v) = violations.iter().find(|v| v.is_reference()) {
        return Err(ScenarioError::Reference(v.to_string()));
    }
    if !violations.is_empty() {
        return Err(ScenarioError::Invalid(violations));
    }
    Ok(scenario)
}

fn from_doc(doc: ScenarioDoc) -> Result<Scenario, ScenarioError> {
    let devices: Vec<DeviceSpec> = doc
        .devices
        .into_iter()
        .map(|d| DeviceSpec {
            device_id: d.id,
            memory_capacity: d.memory_capacity,
            compute_slots: d.compute_slots,
            uplink_serialized: d.uplink_serialized,
            cloud: d.cloud,
        })
        .collect();

    let mut modules = Vec::with_capacity(doc.modules.len());
    for m in doc.modules {
        let kind = match (m.kind, m.modality) {
            (KindTag::Encoder, Some(modality)) => ModuleKind::Encoder { modality },
            (KindTag::Encoder, None) => {
                return Err(ScenarioError::Schema(format!(
                    "encoder module `{}` is missing field `modality`",
                    m.id
                )))
            }
            (KindTag::Head, None) => ModuleKind::Head,
            (KindTag::Head, Some(_)) => {
                return Err(ScenarioError::Schema(format!(
                    "head module `{}` must not declare a modality",
                    m.id
                )))
            }
        };
        modules.push(ModuleSpec {
            module_id: m.id,
            function_key: m.function_key,
            kind,
            memory_req: m.memory_req,
            output_size: m.output_size,
            input_size: m.input_size,
        });
    }

    let models = doc
        .models
        .into_iter()
        .map(|m| ModelSpec {
            model_id: m.id,
            encoder_ids: m.encoders,
            head_id: m.head,
        })
        .collect();

    let mut compute = ComputeProfile::default();
    for e in doc.compute.entries {
        compute.entries.insert(
            (e.function_key, e.device),
            ComputeEntry {
                comp_time: e.comp_time,
                load_time: e.load_time,
            },
        );
    }
    for (fk, work) in &doc.compute.work {
        for (dev, speed) in &doc.compute.speed {
            compute
                .entries
                .entry((fk.clone(), dev.clone()))
                .or_insert_with(|| ComputeEntry::new(work / speed));
        }
    }

    let mut network = NetworkProfile::default();
    for l in doc.network.links {
        let link = Link {
            latency: l.latency,
            bandwidth: l.bandwidth,
        };
        network.insert(&l.from, &l.to, link);
        if l.symmetric {
            network.insert(&l.to, &l.from, link);
        }
    }
    if let Some(default) = doc.network.default {
        for a in &devices {
            for b in &devices {
                if a.device_id != b.device_id {
                    network
                        .links
                        .entry((a.device_id.clone(), b.device_id.clone()))
                        .or_insert(default);
                }
            }
        }
    }

    let trace = doc
        .trace
        .into_iter()
        .map(|q| Request {
            request_id: q.id,
            model_id: q.model,
            source_device: q.source,
            arrival_time: q.arrival,
        })
        .collect();

    let mut capacity = BTreeMap::new();
    for c in doc.capacity {
        capacity.insert((c.function_key, c.device), c.limit);
    }

    Ok(Scenario {
        name: doc.name,
        description: doc.description,
        devices,
        modules,
        models,
        compute,
        network,
        trace,
        capacity,
    })
}

/// Writes a scenario in the canonical (fully expanded) JSON form.
pub fn emit_scenario(s: &Scenario) -> String {
    let doc = ScenarioDoc {
        name: s.name.clone(),
        description: s.description.clone(),
        devices: s
            .devices
            .iter()
            .map(|d| DeviceDoc {
                id: d.device_id.clone(),
                memory_capacity: d.memory_capacity,
                compute_slots: d.compute_slots,
                uplink_serialized: d.uplink_serialized,
                cloud: d.cloud,
            })
            .collect(),
        modules: s
            .modules
            .iter()
            .map(|m| ModuleDoc {
                id: m.module_id.clone(),
                function_key: m.function_key.clone(),
                kind: if m.is_head() {
                    KindTag::Head
                } else {
                    KindTag::Encoder
                },
                modality: m.kind.modality().map(str::to_owned),
                memory_req: m.memory_req,
                input_size: m.input_size,
                output_size: m.output_size,
            })
            .collect(),
        models: s
            .models
            .iter()
            .map(|m| ModelDoc {
                id: m.model_id.clone(),
                encoders: m.encoder_ids.clone(),
                head: m.head_id.clone(),
            })
            .collect(),
        compute: ComputeDoc {
            entries: s
                .compute
                .entries
                .iter()
                .map(|((fk, dev), e)| ComputeEntryDoc {
                    function_key: fk.clone(),
                    device: dev.clone(),
                    comp_time: e.comp_time,
                    load_time: e.load_time,
                })
                .collect(),
            work: BTreeMap::new(),
            speed: BTreeMap::new(),
        },
        network: NetworkDoc {
            default: None,
            links: s
                .network
                .links
                .iter()
                .map(|((a, b), l)| LinkDoc {
                    from: a.clone(),
                    to: b.clone(),
                    latency: l.latency,
                    bandwidth: l.bandwidth,
                    symmetric: false,
                })
                .collect(),
        },
        trace: s
            .trace
            .iter()
            .map(|q| RequestDoc {
                id: q.request_id.clone(),
                model: q.model_id.clone(),
                source: q.source_device.clone(),
                arrival: q.arrival_time,
            })
            .collect(),
        capacity: s
            .capacity
            .iter()
            .map(|((fk, dev), limit)| CapacityDoc {
                function_key: fk.clone(),
                device: dev.clone(),
                limit: *limit,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("scenario documents always serialize")
}

impl Violation {
    pub(crate) fn is_reference(&self) -> bool {
        matches!(
            self,
            Violation::UnknownModule { .. }
                | Violation::UnknownModel { .. }
                | Violation::UnknownDevice { .. }
                | Violation::UnknownFunctionKey { .. }
        )
    }
}
