//! Communication and computation time primitives.

use thiserror::Error;

use crate::scenario::{ComputeProfile, DeviceSpec, ModuleSpec, NetworkProfile};

#[derive(Debug, Clone, PartialEq)]
pub struct TransferQuery<'a> {
    pub from: &'a str,
    pub to: &'a str,
    /// Payload in data units.
    pub size: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no link from `{from}` to `{to}`")]
pub struct MissingLink {
    pub from: String,
    pub to: String,
}

/// `latency + size / bandwidth`; zero between a device and itself.
pub fn comm_time(q: &TransferQuery<'_>, net: &NetworkProfile) -> Result<f64, MissingLink> {
    if q.from == q.to {
        return Ok(0.0);
    }
    let link = net.link(q.from, q.to).ok_or_else(|| MissingLink {
        from: q.from.to_owned(),
        to: q.to.to_owned(),
    })?;
    Ok(link.latency + q.size / link.bandwidth)
}

/// Execution time of `m` on `n`, or `None` when the device cannot run it.
pub fn comp_time(m: &ModuleSpec, n: &DeviceSpec, profile: &ComputeProfile) -> Option<f64> {
    profile
        .get(&m.function_key, &n.device_id)
        .map(|e| e.comp_time)
}
