use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::Serialize;

use super::{ModuleKind, ModuleSpec, Scenario};

/// A single broken invariant. Violations are data: [`validate_scenario`]
/// collects all of them instead of stopping at the first.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum Violation {
    DuplicateDevice { device: String },
    ZeroComputeSlots { device: String },
    DuplicateModule { module: String },
    InvalidModuleSize { module: String },
    FunctionKeyConflict { function_key: String, first: String, second: String },
    DuplicateModel { model: String },
    EmptyEncoders { model: String },
    UnknownModule { model: String, module: String },
    NotAnEncoder { model: String, module: String },
    NotAHead { model: String, module: String },
    DuplicateModality { model: String, modality: String },
    UnknownFunctionKey { function_key: String },
    UnknownDevice { context: String, device: String },
    InvalidComputeEntry { function_key: String, device: String },
    InvalidLink { from: String, to: String },
    MissingLink { from: String, to: String },
    DuplicateRequest { request: String },
    UnknownModel { request: String, model: String },
    InvalidArrival { request: String },
    InvalidCapacity { function_key: String, device: String },
}

impl Violation {
    /// Sort key: violation type first, then the id it concerns.
    fn sort_key(&self) -> (u8, String) {
        use Violation::*;
        match self {
            DuplicateDevice { device } => (0, device.clone()),
            ZeroComputeSlots { device } => (1, device.clone()),
            DuplicateModule { module } => (2, module.clone()),
            InvalidModuleSize { module } => (3, module.clone()),
            FunctionKeyConflict { function_key, second, .. } => {
                (4, format!("{function_key}/{second}"))
            }
            DuplicateModel { model } => (5, model.clone()),
            EmptyEncoders { model } => (6, model.clone()),
            UnknownModule { model, module } => (7, format!("{model}/{module}")),
            NotAnEncoder { model, module } => (8, format!("{model}/{module}")),
            NotAHead { model, module } => (9, format!("{model}/{module}")),
            DuplicateModality { model, modality } => (10, format!("{model}/{modality}")),
            UnknownFunctionKey { function_key } => (11, function_key.clone()),
            UnknownDevice { context, device } => (12, format!("{context}/{device}")),
            InvalidComputeEntry { function_key, device } => {
                (13, format!("{function_key}/{device}"))
            }
            InvalidLink { from, to } => (14, format!("{from}/{to}")),
            MissingLink { from, to } => (15, format!("{from}/{to}")),
            DuplicateRequest { request } => (16, request.clone()),
            UnknownModel { request, model } => (17, format!("{request}/{model}")),
            InvalidArrival { request } => (18, request.clone()),
            InvalidCapacity { function_key, device } => (19, format!("{function_key}/{device}")),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            DuplicateDevice { device } => write!(f, "device `{device}` declared twice"),
            ZeroComputeSlots { device } => write!(f, "device `{device}` has zero compute slots"),
            DuplicateModule { module } => write!(f, "module `{module}` declared twice"),
            InvalidModuleSize { module } => {
                write!(f, "module `{module}` has a negative or non-finite size")
            }
            FunctionKeyConflict { function_key, first, second } => write!(
                f,
                "modules `{first}` and `{second}` share function key `{function_key}` but differ in kind, memory or output size"
            ),
            DuplicateModel { model } => write!(f, "model `{model}` declared twice"),
            EmptyEncoders { model } => write!(f, "model `{model}` has no encoders"),
            UnknownModule { model, module } => {
                write!(f, "model `{model}` references unknown module `{module}`")
            }
            NotAnEncoder { model, module } => {
                write!(f, "model `{model}` lists head `{module}` as an encoder")
            }
            NotAHead { model, module } => {
                write!(f, "model `{model}` uses encoder `{module}` as its head")
            }
            DuplicateModality { model, modality } => {
                write!(f, "model `{model}` has two `{modality}` encoders")
            }
            UnknownFunctionKey { function_key } => {
                write!(f, "entry refers to unknown function key `{function_key}`")
            }
            UnknownDevice { context, device } => {
                write!(f, "{context} refers to unknown device `{device}`")
            }
            InvalidComputeEntry { function_key, device } => write!(
                f,
                "compute entry ({function_key}, {device}) needs comp_time > 0 and load_time >= 0"
            ),
            InvalidLink { from, to } => {
                write!(f, "link {from} -> {to} needs latency >= 0 and bandwidth > 0")
            }
            MissingLink { from, to } => write!(f, "no link from `{from}` to `{to}`"),
            DuplicateRequest { request } => write!(f, "request `{request}` declared twice"),
            UnknownModel { request, model } => {
                write!(f, "request `{request}` refers to unknown model `{model}`")
            }
            InvalidArrival { request } => {
                write!(f, "request `{request}` has a negative or non-finite arrival time")
            }
            InvalidCapacity { function_key, device } => write!(
                f,
                "capacity ({function_key}, {device}) must be positive and on a hostable pair"
            ),
        }
    }
}

fn non_negative(x: f64) -> bool {
    x.is_finite() && x >= 0.0
}

fn same_function(a: &ModuleSpec, b: &ModuleSpec) -> bool {
    a.kind == b.kind && a.memory_req == b.memory_req && a.output_size == b.output_size
}

/// Returns every invariant violation, ordered by (type, id). Empty means valid.
pub fn validate_scenario(s: &Scenario) -> Vec<Violation> {
    let mut out = Vec::new();

    let mut devices = HashSet::new();
    for d in &s.devices {
        if !devices.insert(d.device_id.as_str()) {
            out.push(Violation::DuplicateDevice {
                device: d.device_id.clone(),
            });
        }
        if d.compute_slots == 0 {
            out.push(Violation::ZeroComputeSlots {
                device: d.device_id.clone(),
            });
        }
    }

    let mut modules: HashMap<&str, &ModuleSpec> = HashMap::new();
    let mut by_key: BTreeMap<&str, &ModuleSpec> = BTreeMap::new();
    for m in &s.modules {
        if modules.insert(m.module_id.as_str(), m).is_some() {
            out.push(Violation::DuplicateModule {
                module: m.module_id.clone(),
            });
        }
        if !non_negative(m.input_size) || !non_negative(m.output_size) {
            out.push(Violation::InvalidModuleSize {
                module: m.module_id.clone(),
            });
        }
        match by_key.get(m.function_key.as_str()) {
            Some(first) if !same_function(first, m) => {
                out.push(Violation::FunctionKeyConflict {
                    function_key: m.function_key.clone(),
                    first: first.module_id.clone(),
                    second: m.module_id.clone(),
                })
            }
            Some(_) => {}
            None => {
                by_key.insert(m.function_key.as_str(), m);
            }
        }
    }

    let mut models = HashSet::new();
    for model in &s.models {
        if !models.insert(model.model_id.as_str()) {
            out.push(Violation::DuplicateModel {
                model: model.model_id.clone(),
            });
        }
        if model.encoder_ids.is_empty() {
            out.push(Violation::EmptyEncoders {
                model: model.model_id.clone(),
            });
        }
        let mut modalities = BTreeSet::new();
        for id in &model.encoder_ids {
            match modules.get(id.as_str()) {
                None => out.push(Violation::UnknownModule {
                    model: model.model_id.clone(),
                    module: id.clone(),
                }),
                Some(m) => match &m.kind {
                    ModuleKind::Head => out.push(Violation::NotAnEncoder {
                        model: model.model_id.clone(),
                        module: id.clone(),
                    }),
                    ModuleKind::Encoder { modality } => {
                        if !modalities.insert(modality.as_str()) {
                            out.push(Violation::DuplicateModality {
                                model: model.model_id.clone(),
                                modality: modality.clone(),
                            });
                        }
                    }
                },
            }
        }
        match modules.get(model.head_id.as_str()) {
            None => out.push(Violation::UnknownModule {
                model: model.model_id.clone(),
                module: model.head_id.clone(),
            }),
            Some(m) if !m.is_head() => out.push(Violation::NotAHead {
                model: model.model_id.clone(),
                module: model.head_id.clone(),
            }),
            Some(_) => {}
        }
    }

    let mut unknown_keys = BTreeSet::new();
    for ((fk, dev), e) in &s.compute.entries {
        if !by_key.contains_key(fk.as_str()) {
            unknown_keys.insert(fk.clone());
        }
        if !devices.contains(dev.as_str()) {
            out.push(Violation::UnknownDevice {
                context: format!("compute entry for `{fk}`"),
                device: dev.clone(),
            });
        }
        if !(e.comp_time.is_finite() && e.comp_time > 0.0) || !non_negative(e.load_time) {
            out.push(Violation::InvalidComputeEntry {
                function_key: fk.clone(),
                device: dev.clone(),
            });
        }
    }

    for ((a, b), l) in &s.network.links {
        for d in [a, b] {
            if !devices.contains(d.as_str()) {
                out.push(Violation::UnknownDevice {
                    context: format!("link {a} -> {b}"),
                    device: d.clone(),
                });
            }
        }
        if !non_negative(l.latency) || !(l.bandwidth > 0.0) || l.bandwidth.is_nan() {
            out.push(Violation::InvalidLink {
                from: a.clone(),
                to: b.clone(),
            });
        }
    }
    for a in &s.devices {
        for b in &s.devices {
            if a.device_id != b.device_id && s.network.link(&a.device_id, &b.device_id).is_none()
            {
                out.push(Violation::MissingLink {
                    from: a.device_id.clone(),
                    to: b.device_id.clone(),
                });
            }
        }
    }

    let mut requests = HashSet::new();
    for q in &s.trace {
        if !requests.insert(q.request_id.as_str()) {
            out.push(Violation::DuplicateRequest {
                request: q.request_id.clone(),
            });
        }
        if !models.contains(q.model_id.as_str()) {
            out.push(Violation::UnknownModel {
                request: q.request_id.clone(),
                model: q.model_id.clone(),
            });
        }
        if !devices.contains(q.source_device.as_str()) {
            out.push(Violation::UnknownDevice {
                context: format!("request `{}`", q.request_id),
                device: q.source_device.clone(),
            });
        }
        if !non_negative(q.arrival_time) {
            out.push(Violation::InvalidArrival {
                request: q.request_id.clone(),
            });
        }
    }

    for ((fk, dev), limit) in &s.capacity {
        if *limit == 0 || s.compute.get(fk, dev).is_none() {
            out.push(Violation::InvalidCapacity {
                function_key: fk.clone(),
                device: dev.clone(),
            });
        }
    }

    out.extend(
        unknown_keys
            .into_iter()
            .map(|function_key| Violation::UnknownFunctionKey { function_key }),
    );
    out.sort_by_key(Violation::sort_key);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{ComputeEntry, DeviceSpec, Link, ModelSpec, ModuleSpec, Request};

    fn valid() -> Scenario {
        let mut s = Scenario::default();
        s.devices = vec![DeviceSpec::new("a", 100), DeviceSpec::new("b", 100)];
        s.modules = vec![
            ModuleSpec::encoder("v", "vit-b16-vision", "vision", 86_000_000),
            ModuleSpec::encoder("t", "clip-trf", "text", 38_000_000),
            ModuleSpec::head("h", "cos", 0),
        ];
        s.models = vec![ModelSpec {
            model_id: "clip".into(),
            encoder_ids: vec!["v".into(), "t".into()],
            head_id: "h".into(),
        }];
        for fk in ["vit-b16-vision", "clip-trf", "cos"] {
            s.compute.insert(fk, "a", ComputeEntry::new(1.0));
        }
        s.network.insert_symmetric(
            "a",
            "b",
            Link {
                latency: 0.0,
                bandwidth: 1.0,
            },
        );
        s.trace.push(Request {
            request_id: "q".into(),
            model_id: "clip".into(),
            source_device: "a".into(),
            arrival_time: 0.0,
        });
        s
    }

    #[test]
    fn valid_scenario_has_no_violations() {
        assert!(validate_scenario(&valid()).is_empty());
    }

    #[test]
    fn conflicting_function_key_is_reported_once() {
        let mut s = valid();
        s.modules.push(ModuleSpec::encoder("v2", "vit-b16-vision", "vision", 88_000_000));
        let v = validate_scenario(&s);
        assert_eq!(v.len(), 1);
        assert!(matches!(v[0], Violation::FunctionKeyConflict { .. }));
    }

    #[test]
    fn duplicate_modality_is_reported() {
        let mut s = valid();
        s.modules.push(ModuleSpec::encoder("v2", "vit-b32-vision", "vision", 88_000_000));
        s.models[0].encoder_ids.push("v2".into());
        let v = validate_scenario(&s);
        assert_eq!(
            v,
            vec![Violation::DuplicateModality {
                model: "clip".into(),
                modality: "vision".into()
            }]
        );
    }

    #[test]
    fn violations_come_out_sorted_and_complete() {
        let mut s = valid();
        s.network.links.clear();
        s.trace[0].model_id = "ghost".into();
        s.devices[1].compute_slots = 0;
        s.capacity.insert(("cos".into(), "b".into()), 1);
        let v = validate_scenario(&s);
        assert_eq!(v.len(), 5, "{v:?}");
        assert!(matches!(v[0], Violation::ZeroComputeSlots { .. }));
        assert!(matches!(v[1], Violation::MissingLink { .. }));
        assert!(matches!(v[2], Violation::MissingLink { .. }));
        assert!(matches!(v[3], Violation::UnknownModel { .. }));
        assert!(matches!(v[4], Violation::InvalidCapacity { .. }));
    }

    #[test]
    fn invalid_numbers_are_caught() {
        let mut s = valid();
        s.compute.insert("cos", "b", ComputeEntry::new(0.0));
        s.trace[0].arrival_time = f64::NAN;
        s.modules[0].input_size = -1.0;
        let v = validate_scenario(&s);
        assert_eq!(v.len(), 3, "{v:?}");
    }
}
