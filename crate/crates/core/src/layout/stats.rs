//! Dataset statistics over sampled layouts, one row per circuit quantity.

use serde::{Deserialize, Serialize};

use super::{ComponentKind, DiagramLayout, LayoutError, MeasurementKind};
use crate::netlist;

/// Per-layout object counts. Branches exclude measurement plumbing: a
/// current observation on a component edge inserts an ammeter that is not a
/// branch, while a short carrying a current observation materializes as one.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentCounts {
    pub nodes: usize,
    pub resistors: usize,
    pub voltage_sources: usize,
    pub current_sources: usize,
    pub controlled_sources: usize,
    pub shorts: usize,
    pub voltage_measurements: usize,
    pub current_measurements: usize,
}

impl ComponentCounts {
    pub fn branches(&self) -> usize {
        self.resistors + self.voltage_sources + self.current_sources + self.controlled_sources + self.shorts
    }
}

/// Counts one layout; node count comes from the extracted netlist.
pub fn component_counts(layout: &DiagramLayout) -> Result<ComponentCounts, LayoutError> {
    let net = netlist::extract_netlist(layout)
        .map_err(|e| LayoutError::InvalidLayout(format!("netlist extraction failed: {e}")))?;
    let mut counts = ComponentCounts { nodes: net.nodes.len(), ..Default::default() };
    for edge in &layout.edges {
        match edge.kind {
            ComponentKind::Resistor => counts.resistors += 1,
            ComponentKind::VSource => counts.voltage_sources += 1,
            ComponentKind::ISource => counts.current_sources += 1,
            k if k.is_controlled() => counts.controlled_sources += 1,
            ComponentKind::Short
                if edge.measurement.as_ref().map(|m| m.kind == MeasurementKind::CurrentObs).unwrap_or(false) =>
            {
                counts.shorts += 1;
            }
            _ => {}
        }
        if let Some(m) = &edge.measurement {
            match m.kind {
                MeasurementKind::VoltageObs => counts.voltage_measurements += 1,
                MeasurementKind::CurrentObs => counts.current_measurements += 1,
            }
        }
    }
    Ok(counts)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StatRow {
    pub mean: f64,
    pub std: f64,
    pub max: f64,
    pub min: f64,
}

impl StatRow {
    fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
            max: samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            min: samples.iter().cloned().fold(f64::INFINITY, f64::min),
        }
    }
}

/// Mean/std/max/min for node count, branch count, and each object kind.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub n_samples: usize,
    pub nodes: StatRow,
    pub branches: StatRow,
    pub resistors: StatRow,
    pub voltage_sources: StatRow,
    pub current_sources: StatRow,
    pub controlled_sources: StatRow,
    pub shorts: StatRow,
    pub voltage_measurements: StatRow,
    pub current_measurements: StatRow,
}

pub fn layout_stats(layouts: &[DiagramLayout]) -> Result<StatsReport, LayoutError> {
    if layouts.is_empty() {
        return Err(LayoutError::InvalidLayout("layout_stats requires a non-empty list".into()));
    }
    let counts: Vec<ComponentCounts> = layouts.iter().map(component_counts).collect::<Result<_, _>>()?;
    let column = |f: &dyn Fn(&ComponentCounts) -> usize| -> Vec<f64> { counts.iter().map(|c| f(c) as f64).collect() };
    Ok(StatsReport {
        n_samples: layouts.len(),
        nodes: StatRow::from_samples(&column(&|c| c.nodes)),
        branches: StatRow::from_samples(&column(&|c| c.branches())),
        resistors: StatRow::from_samples(&column(&|c| c.resistors)),
        voltage_sources: StatRow::from_samples(&column(&|c| c.voltage_sources)),
        current_sources: StatRow::from_samples(&column(&|c| c.current_sources)),
        controlled_sources: StatRow::from_samples(&column(&|c| c.controlled_sources)),
        shorts: StatRow::from_samples(&column(&|c| c.shorts)),
        voltage_measurements: StatRow::from_samples(&column(&|c| c.voltage_measurements)),
        current_measurements: StatRow::from_samples(&column(&|c| c.current_measurements)),
    })
}
