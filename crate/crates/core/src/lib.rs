//! Split-and-share placement, routing and simulation of modular multi-modal
//! models on a pool of edge devices.
//!
//! A model is a set of modality encoders feeding a task head. Encoders with
//! the same function key are stored once and shared by every model that
//! uses them ([`sharing`]); the distinct modules are spread over devices
//! ([`placement`]); each request is routed to concrete replicas
//! ([`routing`]) and its latency estimated analytically or by discrete-event
//! simulation ([`simengine`]).

pub mod instance_gen;
pub mod network_cost;
pub mod placement;
pub mod routing;
pub mod scenario;
pub mod sharing;
pub mod simengine;
pub mod table;

pub use instance_gen::{generate, GenParams, GenerationError, Tiers};
pub use network_cost::{comm_time, comp_time, MissingLink, TransferQuery};
pub use placement::{
    brute_force_place, centralized_place, greedy_place, greedy_place_with, replicate_leftover,
    PlaceOptions, Placement, PlacementError, PlacementTrace,
};
pub use routing::{
    analytic_latency, brute_force_route, route_trace, total_latency, LatencyBreakdown, Route,
    RoutingError, RoutingSession,
};
pub use scenario::{
    emit_scenario, parse_scenario, validate_scenario, ComputeEntry, ComputeProfile, DeviceSpec,
    Link, ModelSpec, ModuleKind, ModuleSpec, NetworkProfile, Request, Scenario, ScenarioError,
    Violation,
};
pub use sharing::{build_shared_catalog, memory_accounting, MemoryReport, SharedCatalog};
pub use simengine::{simulate, AdmissionMode, SimError, SimOptions, SimResult};
