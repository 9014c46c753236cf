//! Toolchain for linear pure resistive circuits (LPRC): synthesizes paired
//! diagram layouts and SPICE-subset descriptions, simulates DC operating
//! points via modified nodal analysis, scores perception-model output, and
//! orchestrates a simulate-then-reason loop over pluggable clients.

pub mod dataset;
pub mod eval;
pub mod layout;
pub mod linalg;
pub mod netlist;
pub mod oracle;
pub mod pipeline;
pub mod scalar;
pub mod sim;
pub mod spice;
pub mod tikz;
pub mod units;

/// Schema version stamped on every persisted artifact (layout JSON, netlist
/// JSON, sampler configs, dataset manifests and records). Loaders reject
/// other versions.
pub const SCHEMA_VERSION: u32 = 1;

/// Default scalar for the whole toolchain. The solver itself is generic
/// over [`scalar::Scalar`]; everything downstream pins f64.
pub type Float = f64;

/// Exact rational used for component values (SI units).
pub type Rat = num_rational::Ratio<i64>;

/// MNA system over the default scalar.
pub type Mna = sim::MnaSystem<Float>;

/// Simulation result over the default scalar.
pub type SimResult = sim::SimulationResult<Float>;

pub use eval::PpmScore;
pub use layout::{DiagramLayout, EdgeSpec, SamplerConfig};
pub use netlist::Netlist;
pub use sim::{check_valid, simulate};
pub use spice::SpiceDeck;
