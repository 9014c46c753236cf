//! Diagram layouts: a planar grid with component-annotated edges, plus the
//! seeded hierarchical sampler that draws them.

mod sampler;
mod stats;

pub use sampler::{sample_layout, sample_rng};
pub use stats::{component_counts, layout_stats, ComponentCounts, StatRow, StatsReport};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::units::{rat_serde, Unit};
use crate::{Rat, SCHEMA_VERSION};

/// What occupies a grid edge. `Short` is an ideal wire (it merges its
/// endpoints unless it carries a current observation); `Open` leaves the
/// edge empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ComponentKind {
    Resistor,
    VSource,
    ISource,
    Vcvs,
    Vccs,
    Ccvs,
    Cccs,
    Short,
    Open,
}

impl ComponentKind {
    pub fn is_controlled(self) -> bool {
        matches!(self, Self::Vcvs | Self::Vccs | Self::Ccvs | Self::Cccs)
    }

    pub fn is_independent_source(self) -> bool {
        matches!(self, Self::VSource | Self::ISource)
    }

    /// Kinds that carry a sampled value in numerical circuits.
    pub fn carries_value(self) -> bool {
        !matches!(self, Self::Short | Self::Open)
    }

    /// Voltage-controlled kinds sense a voltage observation, current-controlled
    /// kinds a current observation.
    pub fn control_obs_kind(self) -> Option<MeasurementKind> {
        match self {
            Self::Vcvs | Self::Vccs => Some(MeasurementKind::VoltageObs),
            Self::Ccvs | Self::Cccs => Some(MeasurementKind::CurrentObs),
            _ => None,
        }
    }
}

/// Whether component annotations are numeric values or symbolic labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CircuitKind {
    Numerical,
    Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MeasurementKind {
    VoltageObs,
    CurrentObs,
}

/// Voltage or current observation attached to an edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub kind: MeasurementKind,
    pub label: String,
    /// Flips the observation's reference direction.
    pub polarity: bool,
}

/// Sampled magnitude plus its annotation unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueSpec {
    #[serde(with = "rat_serde")]
    pub magnitude: Rat,
    pub unit: Unit,
}

impl ValueSpec {
    /// Magnitude normalized to SI units.
    pub fn si_value(&self) -> Rat {
        self.magnitude * self.unit.si_scale()
    }
}

/// Grid position as (row, col); row 0 is the bottom row.
pub type GridPoint = (u32, u32);

/// One grid edge and everything annotated on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeSpec {
    /// Ordered endpoint pair; horizontal edges run (r,c)→(r,c+1), vertical
    /// edges (r,c)→(r+1,c).
    pub endpoints: (GridPoint, GridPoint),
    pub kind: ComponentKind,
    /// Polarity flag: `false` puts the positive terminal at `endpoints.0`.
    pub direction: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<ValueSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measurement: Option<Measurement>,
    /// Measurement label a controlled source senses.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control_ref: Option<String>,
}

/// A sampled circuit diagram: grid dimensions, physical spacings, and the
/// full edge list covering every horizontal and vertical grid edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagramLayout {
    pub schema_version: u32,
    /// Grid node rows.
    pub m: u32,
    /// Grid node columns.
    pub n: u32,
    pub h_spacing: Vec<f64>,
    pub v_spacing: Vec<f64>,
    pub edges: Vec<EdgeSpec>,
    pub circuit_kind: CircuitKind,
}

#[derive(Debug, thiserror::Error)]
pub enum LayoutError {
    #[error("no valid layout after {attempts} attempts; config is likely pathological")]
    RetryExhausted { attempts: u32 },
    #[error("invalid sampler config: {0}")]
    InvalidConfig(String),
    #[error("invalid layout: {0}")]
    InvalidLayout(String),
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(String),
}

impl DiagramLayout {
    /// Expected edge-list length: m·(n−1) horizontal plus (m−1)·n vertical.
    pub fn expected_edge_count(m: u32, n: u32) -> usize {
        (m * (n - 1) + (m - 1) * n) as usize
    }

    pub fn validate(&self) -> Result<(), LayoutError> {
        let fail = |msg: String| Err(LayoutError::InvalidLayout(msg));
        if self.schema_version != SCHEMA_VERSION {
            return fail(format!("schema_version {} != {}", self.schema_version, SCHEMA_VERSION));
        }
        if self.m < 2 || self.n < 2 {
            return fail(format!("grid {}x{} too small", self.m, self.n));
        }
        if self.edges.len() != Self::expected_edge_count(self.m, self.n) {
            return fail(format!(
                "edge list length {} != m(n-1)+(m-1)n = {}",
                self.edges.len(),
                Self::expected_edge_count(self.m, self.n)
            ));
        }
        if self.h_spacing.len() != (self.n - 1) as usize || self.v_spacing.len() != (self.m - 1) as usize {
            return fail("spacing vector lengths do not match grid".to_string());
        }
        let mut labels = std::collections::BTreeSet::new();
        for edge in &self.edges {
            if let Some(m) = &edge.measurement {
                if !labels.insert(m.label.clone()) {
                    return fail(format!("duplicate measurement label {}", m.label));
                }
            }
        }
        for edge in &self.edges {
            match edge.kind {
                ComponentKind::Open => {
                    if edge.value.is_some() || edge.measurement.is_some() {
                        return fail("open edge carries annotations".to_string());
                    }
                }
                kind => {
                    if kind.is_controlled() {
                        let ref_label = edge
                            .control_ref
                            .as_ref()
                            .ok_or_else(|| LayoutError::InvalidLayout("controlled source without control_ref".into()))?;
                        let want = kind.control_obs_kind().unwrap();
                        let found = self.edges.iter().any(|e| {
                            e.measurement
                                .as_ref()
                                .map(|m| &m.label == ref_label && m.kind == want)
                                .unwrap_or(false)
                        });
                        if !found {
                            return fail(format!("control_ref {ref_label} does not name a {want:?}"));
                        }
                    } else if edge.control_ref.is_some() {
                        return fail("control_ref on a non-controlled edge".to_string());
                    }
                    match self.circuit_kind {
                        CircuitKind::Numerical => {
                            if kind.carries_value() && edge.value.is_none() {
                                return fail(format!("{kind:?} edge missing value in numerical circuit"));
                            }
                        }
                        CircuitKind::Label => {
                            if kind.carries_value() && edge.label.is_none() {
                                return fail(format!("{kind:?} edge missing label in label circuit"));
                            }
                        }
                    }
                }
            }
        }
        let any_component = self.edges.iter().any(|e| e.kind != ComponentKind::Open);
        if any_component {
            let has_source = self.edges.iter().any(|e| e.kind.is_independent_source());
            let has_resistor = self.edges.iter().any(|e| e.kind == ComponentKind::Resistor);
            if !has_source || !has_resistor {
                return fail("layout needs at least one independent source and one resistor".to_string());
            }
        }
        Ok(())
    }

    /// Cumulative x coordinate of grid column `c`.
    pub fn x_of(&self, c: u32) -> f64 {
        self.h_spacing[..c as usize].iter().sum()
    }

    /// Cumulative y coordinate of grid row `r` (row 0 at the bottom).
    pub fn y_of(&self, r: u32) -> f64 {
        self.v_spacing[..r as usize].iter().sum()
    }
}

/// Integer value range and the units it may be annotated with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueRange {
    pub min: i64,
    pub max: i64,
    pub units: Vec<Unit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementProbs {
    pub voltage: f64,
    pub current: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementPrefixes {
    pub voltage: String,
    pub current: String,
}

/// Weighted (m, n) grid-dimension choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDimsEntry {
    pub dims: (u32, u32),
    pub p: f64,
}

/// Everything the hierarchical sampler needs. The file form (TOML or JSON)
/// is the reproducibility record; experiments log `config_hash()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub circuit_kind: CircuitKind,
    pub max_retries: u32,
    /// (d_min, d_max) for edge spacings.
    pub spacing_range: (f64, f64),
    pub grid_dims: Vec<GridDimsEntry>,
    pub component_types: BTreeMap<ComponentKind, f64>,
    pub value_ranges: BTreeMap<ComponentKind, ValueRange>,
    pub label_prefixes: BTreeMap<ComponentKind, String>,
    pub measurement_probs: MeasurementProbs,
    pub measurement_prefixes: MeasurementPrefixes,
}

const PROB_SUM_TOL: f64 = 1e-12;

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), LayoutError> {
        let fail = |msg: String| Err(LayoutError::InvalidConfig(msg));
        if self.schema_version != SCHEMA_VERSION {
            return fail(format!("schema_version {} != {}", self.schema_version, SCHEMA_VERSION));
        }
        if self.grid_dims.is_empty() {
            return fail("grid_dims is empty".into());
        }
        let dim_sum: f64 = self.grid_dims.iter().map(|e| e.p).sum();
        if (dim_sum - 1.0).abs() > PROB_SUM_TOL {
            return fail(format!("grid_dims probabilities sum to {dim_sum}, expected 1"));
        }
        for entry in &self.grid_dims {
            if entry.p < 0.0 {
                return fail("negative grid_dims probability".into());
            }
            if entry.dims.0 < 2 || entry.dims.1 < 2 {
                return fail(format!("grid dims {:?} must be at least 2x2", entry.dims));
            }
        }
        if self.component_types.is_empty() {
            return fail("component_types is empty".into());
        }
        let kind_sum: f64 = self.component_types.values().sum();
        if (kind_sum - 1.0).abs() > PROB_SUM_TOL {
            return fail(format!("component_types probabilities sum to {kind_sum}, expected 1"));
        }
        if self.component_types.values().any(|p| *p < 0.0) {
            return fail("negative component_types probability".into());
        }
        let (d_min, d_max) = self.spacing_range;
        if d_min >= d_max || d_min <= 0.0 || !d_min.is_finite() || !d_max.is_finite() {
            return fail(format!("spacing_range ({d_min}, {d_max}) requires 0 < d_min < d_max"));
        }
        for (&kind, &p) in &self.component_types {
            if p <= 0.0 || !kind.carries_value() {
                continue;
            }
            let range = self
                .value_ranges
                .get(&kind)
                .ok_or_else(|| LayoutError::InvalidConfig(format!("no value range for {kind:?}")))?;
            if range.min > range.max {
                return fail(format!("{kind:?} value range min > max"));
            }
            if range.units.is_empty() {
                return fail(format!("{kind:?} value range has no units"));
            }
            if kind == ComponentKind::Resistor && range.min <= 0 {
                return fail("resistor values must be positive".into());
            }
            if !self.label_prefixes.contains_key(&kind) {
                return fail(format!("no label prefix for {kind:?}"));
            }
        }
        let mp = &self.measurement_probs;
        if !(0.0..=1.0).contains(&mp.voltage) || !(0.0..=1.0).contains(&mp.current) || mp.voltage + mp.current > 1.0 {
            return fail("measurement probabilities must lie in [0,1] and sum to at most 1".into());
        }
        if self.measurement_prefixes.voltage.is_empty() || self.measurement_prefixes.current.is_empty() {
            return fail("measurement prefixes must be non-empty".into());
        }
        Ok(())
    }

    /// Loads a config from a `.toml` or `.json` file.
    pub fn from_path(path: &std::path::Path) -> Result<Self, LayoutError> {
        let text = std::fs::read_to_string(path)?;
        let config: SamplerConfig = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text).map_err(|e| LayoutError::Parse(e.to_string()))?,
            _ => toml::from_str(&text).map_err(|e| LayoutError::Parse(e.to_string()))?,
        };
        config.validate()?;
        Ok(config)
    }

    /// Stable FNV-1a hash of the canonical JSON form, recorded alongside
    /// every generated dataset.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        format!("{:016x}", fnv1a64(json.as_bytes()))
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

impl Default for SamplerConfig {
    /// Default hierarchical distribution: 2–5 nodes per grid side (smaller
    /// grids favored), kinds weighted toward resistors and empty edges,
    /// integer values. Tuned so sampled sets land near 11 branches per
    /// circuit on average with roughly 70% of circuits solvable.
    fn default() -> Self {
        let side_weights = [(2u32, 0.30), (3, 0.30), (4, 0.25), (5, 0.15)];
        let mut grid_dims = Vec::new();
        for (m, wm) in side_weights {
            for (n, wn) in side_weights {
                grid_dims.push(GridDimsEntry { dims: (m, n), p: wm * wn });
            }
        }
        let component_types = BTreeMap::from([
            (ComponentKind::Resistor, 0.48),
            (ComponentKind::VSource, 0.095),
            (ComponentKind::ISource, 0.05),
            (ComponentKind::Vcvs, 0.015),
            (ComponentKind::Vccs, 0.015),
            (ComponentKind::Ccvs, 0.015),
            (ComponentKind::Cccs, 0.015),
            (ComponentKind::Short, 0.17),
            (ComponentKind::Open, 0.145),
        ]);
        let gain_range = ValueRange { min: 1, max: 10, units: vec![Unit::Gain] };
        let value_ranges = BTreeMap::from([
            (ComponentKind::Resistor, ValueRange { min: 1, max: 100, units: vec![Unit::Ohm, Unit::KiloOhm] }),
            (ComponentKind::VSource, ValueRange { min: 1, max: 50, units: vec![Unit::Volt] }),
            (ComponentKind::ISource, ValueRange { min: 1, max: 20, units: vec![Unit::Ampere, Unit::MilliAmpere] }),
            (ComponentKind::Vcvs, gain_range.clone()),
            (ComponentKind::Vccs, gain_range.clone()),
            (ComponentKind::Ccvs, gain_range.clone()),
            (ComponentKind::Cccs, gain_range),
        ]);
        let label_prefixes = BTreeMap::from([
            (ComponentKind::Resistor, "R".to_string()),
            (ComponentKind::VSource, "V".to_string()),
            (ComponentKind::ISource, "I".to_string()),
            (ComponentKind::Vcvs, "E".to_string()),
            (ComponentKind::Vccs, "G".to_string()),
            (ComponentKind::Ccvs, "H".to_string()),
            (ComponentKind::Cccs, "F".to_string()),
        ]);
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            circuit_kind: CircuitKind::Numerical,
            max_retries: 64,
            spacing_range: (1.0, 2.5),
            grid_dims,
            component_types,
            value_ranges,
            label_prefixes,
            measurement_probs: MeasurementProbs { voltage: 0.10, current: 0.03 },
            measurement_prefixes: MeasurementPrefixes { voltage: "U".to_string(), current: "A".to_string() },
        }
    }
}
