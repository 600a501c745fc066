//! Module deduplication across models and split/share memory accounting.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::scenario::{FunctionKey, ModelId, ModuleSpec, Scenario};
use crate::table::{fmt_params, Table};

/// The deduplicated global module set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SharedCatalog {
    /// One representative per function key, in first-occurrence order.
    pub distinct_modules: Vec<ModuleSpec>,
    pub owners: BTreeMap<FunctionKey, BTreeSet<ModelId>>,
}

impl SharedCatalog {
    /// Number of distinct modules.
    pub fn c(&self) -> usize {
        self.distinct_modules.len()
    }

    pub fn get(&self, function_key: &str) -> Option<&ModuleSpec> {
        self.distinct_modules
            .iter()
            .find(|m| m.function_key == function_key)
    }

    pub fn position(&self, function_key: &str) -> Option<usize> {
        self.distinct_modules
            .iter()
            .position(|m| m.function_key == function_key)
    }

    /// Function keys owned by more than one model.
    pub fn shared_keys(&self) -> impl Iterator<Item = &str> {
        self.owners
            .iter()
            .filter(|(_, o)| o.len() > 1)
            .map(|(k, _)| k.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SharingError {
    #[error("modules `{first}` and `{second}` share function key `{function_key}` but are not the same module")]
    FunctionKeyConflict {
        function_key: String,
        first: String,
        second: String,
    },
    #[error("model `{model}` references unknown module `{module}`")]
    UnknownModule { model: String, module: String },
}

/// Deduplicates the modules referenced by the scenario's models by exact
/// function-key equality.
pub fn build_shared_catalog(s: &Scenario) -> Result<SharedCatalog, SharingError> {
    let mut distinct: Vec<ModuleSpec> = Vec::new();
    let mut owners: BTreeMap<FunctionKey, BTreeSet<ModelId>> = BTreeMap::new();
    for model in &s.models {
        for id in model.encoder_ids.iter().chain(std::iter::once(&model.head_id)) {
            let m = s.module(id).ok_or_else(|| SharingError::UnknownModule {
                model: model.model_id.clone(),
                module: id.clone(),
            })?;
            match distinct.iter().find(|d| d.function_key == m.function_key) {
                Some(d) => {
                    if d.kind != m.kind || d.memory_req != m.memory_req {
                        return Err(SharingError::FunctionKeyConflict {
                            function_key: m.function_key.clone(),
                            first: d.module_id.clone(),
                            second: m.module_id.clone(),
                        });
                    }
                }
                None => distinct.push(m.clone()),
            }
            owners
                .entry(m.function_key.clone())
                .or_default()
                .insert(model.model_id.clone());
        }
    }
    Ok(SharedCatalog {
        distinct_modules: distinct,
        owners,
    })
}

/// Rewrites the scenario so every model references the catalog's
/// representative module for each function key and duplicate module
/// declarations are dropped.
pub fn deduplicate(s: &Scenario, catalog: &SharedCatalog) -> Scenario {
    let mut out = s.clone();
    let representative = |id: &str| -> String {
        s.module(id)
            .and_then(|m| catalog.get(&m.function_key))
            .map(|r| r.module_id.clone())
            .unwrap_or_else(|| id.to_owned())
    };
    for model in &mut out.models {
        for id in &mut model.encoder_ids {
            *id = representative(id);
        }
        model.head_id = representative(&model.head_id);
    }
    out.modules = catalog.distinct_modules.clone();
    out
}

/// An exact fraction `saved / base`, rounded only for display.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Saving {
    pub saved: u64,
    pub base: u64,
}

impl Saving {
    pub fn new(before: u64, after: u64) -> Self {
        Self {
            saved: before.saturating_sub(after),
            base: before,
        }
    }

    /// Percentage rounded half-up to `decimals` places, computed in integers.
    pub fn percent(&self, decimals: u32) -> f64 {
        if self.base == 0 {
            return 0.0;
        }
        let scale = 100u128 * 10u128.pow(decimals);
        let num = 2 * self.saved as u128 * scale + self.base as u128;
        let rounded = num / (2 * self.base as u128);
        rounded as f64 / 10f64.powi(decimals as i32)
    }

    pub fn ratio(&self) -> f64 {
        if self.base == 0 {
            0.0
        } else {
            self.saved as f64 / self.base as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelMemory {
    pub model_id: ModelId,
    /// Whole model on one device.
    pub monolithic: u64,
    /// Largest single module: the worst per-device cost once split.
    pub split_max: u64,
    pub split_saving: Saving,
}

/// One row of the cumulative deployment table: models are added in
/// scenario order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CumulativeRow {
    pub model_id: ModelId,
    pub no_share_added: u64,
    pub no_share_total: u64,
    pub shared_added: u64,
    pub shared_total: u64,
    pub saving: Saving,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemoryReport {
    pub models: Vec<ModelMemory>,
    pub cumulative: Vec<CumulativeRow>,
    pub module_references: usize,
    pub distinct_modules: usize,
    pub no_share_total: u64,
    pub shared_total: u64,
    pub share_saving: Saving,
}

pub fn memory_accounting(s: &Scenario, catalog: &SharedCatalog) -> MemoryReport {
    let mut models = Vec::new();
    let mut cumulative = Vec::new();
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    let (mut no_share_total, mut shared_total) = (0u64, 0u64);
    let mut references = 0;

    for model in &s.models {
        let modules = s.model_modules(model);
        references += modules.len();
        let monolithic: u64 = modules.iter().map(|m| m.memory_req).sum();
        let split_max = modules.iter().map(|m| m.memory_req).max().unwrap_or(0);
        models.push(ModelMemory {
            model_id: model.model_id.clone(),
            monolithic,
            split_max,
            split_saving: Saving::new(monolithic, split_max),
        });

        let mut shared_added = 0;
        for m in &modules {
            if seen.insert(m.function_key.as_str()) {
                shared_added += catalog
                    .get(&m.function_key)
                    .map_or(m.memory_req, |r| r.memory_req);
            }
        }
        no_share_total += monolithic;
        shared_total += shared_added;
        cumulative.push(CumulativeRow {
            model_id: model.model_id.clone(),
            no_share_added: monolithic,
            no_share_total,
            shared_added,
            shared_total,
            saving: Saving::new(no_share_total, shared_total),
        });
    }

    MemoryReport {
        models,
        cumulative,
        module_references: references,
        distinct_modules: catalog.c(),
        no_share_total,
        shared_total,
        share_saving: Saving::new(no_share_total, shared_total),
    }
}

impl MemoryReport {
    /// Per-model split table: centralized vs worst single-device cost.
    pub fn split_table(&self) -> Table {
        let mut t = Table::new(["model", "centralized", "split max", "saving"]);
        for m in &self.models {
            t.push([
                m.model_id.clone(),
                fmt_params(m.monolithic),
                fmt_params(m.split_max),
                format!("-{}%", m.split_saving.percent(0)),
            ]);
        }
        t
    }

    /// Cumulative with/without sharing table.
    pub fn share_table(&self) -> Table {
        let mut t = Table::new([
            "task",
            "no-share added",
            "no-share total",
            "shared added",
            "shared total",
            "saving",
        ]);
        for r in &self.cumulative {
            t.push([
                r.model_id.clone(),
                format!("+{}", fmt_params(r.no_share_added)),
                fmt_params(r.no_share_total),
                format!("+{}", fmt_params(r.shared_added)),
                fmt_params(r.shared_total),
                format!("{:.1}%", r.saving.percent(1)),
            ]);
        }
        t
    }

    /// Machine-readable cumulative table with exact parameter counts.
    pub fn to_csv(&self) -> String {
        let mut t = Table::new([
            "model",
            "monolithic",
            "split_max",
            "split_saving_pct",
            "no_share_cumulative",
            "shared_cumulative",
            "shared_delta",
            "saving_pct",
        ]);
        for (m, r) in self.models.iter().zip(&self.cumulative) {
            t.push([
                m.model_id.clone(),
                m.monolithic.to_string(),
                m.split_max.to_string(),
                format!("{:.1}", m.split_saving.percent(1)),
                r.no_share_total.to_string(),
                r.shared_total.to_string(),
                r.shared_added.to_string(),
                format!("{:.1}", r.saving.percent(1)),
            ]);
        }
        t.to_csv()
    }
}
