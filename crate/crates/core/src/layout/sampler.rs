//! Hierarchical layout sampling: grid scale, then per-edge component types
//! and directions, then values/labels, then observations, then observation
//! assignment to controlled sources. Candidates that do not yield a usable
//! netlist are resampled from the same stream, so the whole procedure is a
//! pure function of (config, seed stream).

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    CircuitKind, ComponentKind, DiagramLayout, EdgeSpec, LayoutError, Measurement, MeasurementKind,
    SamplerConfig, ValueSpec,
};
use crate::{netlist, Rat, SCHEMA_VERSION};

/// Per-sample stream derived from (dataset seed, sample index), so batch
/// generation parallelizes without ordering effects.
pub fn sample_rng(dataset_seed: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&dataset_seed.to_le_bytes());
    key[8..16].copy_from_slice(&index.to_le_bytes());
    key[16..24].copy_from_slice(b"lprcsamp");
    ChaCha8Rng::from_seed(key)
}

/// Draws layouts until one yields a connected netlist that contains the
/// reference node, at least one independent source, and at least one
/// resistor. Fails with `RetryExhausted` once the budget is spent.
pub fn sample_layout<R: Rng>(config: &SamplerConfig, rng: &mut R) -> Result<DiagramLayout, LayoutError> {
    config.validate()?;
    for _ in 0..config.max_retries {
        let Some(layout) = sample_candidate(config, rng) else {
            continue;
        };
        let has_source = layout.edges.iter().any(|e| e.kind.is_independent_source());
        let has_resistor = layout.edges.iter().any(|e| e.kind == ComponentKind::Resistor);
        if !has_source || !has_resistor {
            continue;
        }
        if netlist::extract_netlist(&layout).is_ok() {
            debug_assert!(layout.validate().is_ok());
            return Ok(layout);
        }
    }
    Err(LayoutError::RetryExhausted { attempts: config.max_retries })
}

fn sample_discrete<R: Rng, T: Copy>(rng: &mut R, entries: &[(T, f64)]) -> T {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for &(item, p) in entries {
        acc += p;
        if u < acc {
            return item;
        }
    }
    entries.last().expect("non-empty distribution").0
}

fn sample_candidate<R: Rng>(config: &SamplerConfig, rng: &mut R) -> Option<DiagramLayout> {
    let dims: Vec<((u32, u32), f64)> = config.grid_dims.iter().map(|e| (e.dims, e.p)).collect();
    let (m, n) = sample_discrete(rng, &dims);
    let (d_min, d_max) = config.spacing_range;
    let h_spacing: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(d_min..=d_max)).collect();
    let v_spacing: Vec<f64> = (0..m - 1).map(|_| rng.gen_range(d_min..=d_max)).collect();

    // Edge order is fixed: horizontal edges row-major, then vertical edges
    // row-major. Every later pass iterates in this order.
    let mut endpoints: Vec<((u32, u32), (u32, u32))> = Vec::with_capacity(DiagramLayout::expected_edge_count(m, n));
    for r in 0..m {
        for c in 0..n - 1 {
            endpoints.push(((r, c), (r, c + 1)));
        }
    }
    for r in 0..m - 1 {
        for c in 0..n {
            endpoints.push(((r, c), (r + 1, c)));
        }
    }

    let kind_entries: Vec<(ComponentKind, f64)> = config.component_types.iter().map(|(&k, &p)| (k, p)).collect();
    let kinds: Vec<ComponentKind> = endpoints.iter().map(|_| sample_discrete(rng, &kind_entries)).collect();
    let directions: Vec<bool> = endpoints.iter().map(|_| rng.gen_bool(0.5)).collect();

    let mut edges: Vec<EdgeSpec> = endpoints
        .into_iter()
        .zip(kinds)
        .zip(directions)
        .map(|((endpoints, kind), direction)| EdgeSpec {
            endpoints,
            kind,
            direction,
            value: None,
            label: None,
            measurement: None,
            control_ref: None,
        })
        .collect();

    // Values (numerical circuits) or labels (label circuits).
    match config.circuit_kind {
        CircuitKind::Numerical => {
            for edge in edges.iter_mut().filter(|e| e.kind.carries_value()) {
                let range = &config.value_ranges[&edge.kind];
                let magnitude = Rat::new(rng.gen_range(range.min..=range.max), 1);
                let unit = range.units[rng.gen_range(0..range.units.len())];
                edge.value = Some(ValueSpec { magnitude, unit });
            }
        }
        CircuitKind::Label => {
            let mut counters: std::collections::BTreeMap<ComponentKind, u32> = Default::default();
            for edge in edges.iter_mut().filter(|e| e.kind.carries_value()) {
                let counter = counters.entry(edge.kind).or_insert(0);
                *counter += 1;
                edge.label = Some(format!("{}{}", config.label_prefixes[&edge.kind], counter));
            }
        }
    }

    // Observations: at most one per edge. Voltage observations attach to
    // component edges; current observations also to shorts (a short carrying
    // a current observation later materializes as a 0 V branch).
    let mut v_count = 0u32;
    let mut c_count = 0u32;
    let probs = &config.measurement_probs;
    for edge in edges.iter_mut() {
        let (v_ok, c_ok) = match edge.kind {
            ComponentKind::Open => (false, false),
            ComponentKind::Short => (false, true),
            _ => (true, true),
        };
        if !v_ok && !c_ok {
            continue;
        }
        let u: f64 = rng.gen();
        let kind = if v_ok && u < probs.voltage {
            Some(MeasurementKind::VoltageObs)
        } else if c_ok && u < probs.voltage + probs.current {
            Some(MeasurementKind::CurrentObs)
        } else {
            None
        };
        if let Some(kind) = kind {
            let (prefix, counter) = match kind {
                MeasurementKind::VoltageObs => {
                    v_count += 1;
                    (&config.measurement_prefixes.voltage, v_count)
                }
                MeasurementKind::CurrentObs => {
                    c_count += 1;
                    (&config.measurement_prefixes.current, c_count)
                }
            };
            edge.measurement = Some(Measurement {
                kind,
                label: format!("{prefix}{counter}"),
                polarity: rng.gen_bool(0.5),
            });
        }
    }

    // Give every controlled source an observation of the matching kind,
    // forcing one onto another edge when none exists yet.
    for i in 0..edges.len() {
        let Some(want) = edges[i].kind.control_obs_kind() else {
            continue;
        };
        let candidates: Vec<String> = edges
            .iter()
            .enumerate()
            .filter(|(j, e)| *j != i && e.measurement.as_ref().map(|m| m.kind == want).unwrap_or(false))
            .map(|(_, e)| e.measurement.as_ref().unwrap().label.clone())
            .collect();
        let label = if candidates.is_empty() {
            let hosts: Vec<usize> = edges
                .iter()
                .enumerate()
                .filter(|(j, e)| {
                    *j != i
                        && e.measurement.is_none()
                        && match want {
                            MeasurementKind::VoltageObs => e.kind.carries_value(),
                            MeasurementKind::CurrentObs => e.kind.carries_value() || e.kind == ComponentKind::Short,
                        }
                })
                .map(|(j, _)| j)
                .collect();
            if hosts.is_empty() {
                return None;
            }
            let host = hosts[rng.gen_range(0..hosts.len())];
            let (prefix, counter) = match want {
                MeasurementKind::VoltageObs => {
                    v_count += 1;
                    (&config.measurement_prefixes.voltage, v_count)
                }
                MeasurementKind::CurrentObs => {
                    c_count += 1;
                    (&config.measurement_prefixes.current, c_count)
                }
            };
            let label = format!("{prefix}{counter}");
            edges[host].measurement = Some(Measurement { kind: want, label: label.clone(), polarity: rng.gen_bool(0.5) });
            label
        } else {
            candidates[rng.gen_range(0..candidates.len())].clone()
        };
        edges[i].control_ref = Some(label);
    }

    Some(DiagramLayout {
        schema_version: SCHEMA_VERSION,
        m,
        n,
        h_spacing,
        v_spacing,
        edges,
        circuit_kind: config.circuit_kind,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::GridDimsEntry;

    fn fixed_2x2_config() -> SamplerConfig {
        SamplerConfig {
            grid_dims: vec![GridDimsEntry { dims: (2, 2), p: 1.0 }],
            ..SamplerConfig::default()
        }
    }

    #[test]
    fn fixed_2x2_grid_has_four_edges() {
        let config = fixed_2x2_config();
        let mut rng = sample_rng(1, 0);
        let layout = sample_layout(&config, &mut rng).unwrap();
        assert_eq!((layout.m, layout.n), (2, 2));
        assert_eq!(layout.edges.len(), 4);
    }

    #[test]
    fn identical_seed_gives_byte_identical_layouts() {
        let config = SamplerConfig::default();
        let a = sample_layout(&config, &mut sample_rng(42, 3)).unwrap();
        let b = sample_layout(&config, &mut sample_rng(42, 3)).unwrap();
        assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
        let c = sample_layout(&config, &mut sample_rng(42, 4)).unwrap();
        assert_ne!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&c).unwrap());
    }

    #[test]
    fn sampled_layouts_satisfy_invariants() {
        let config = SamplerConfig::default();
        for index in 0..50 {
            let layout = sample_layout(&config, &mut sample_rng(7, index)).unwrap();
            layout.validate().unwrap();
            assert_eq!(layout.edges.len(), DiagramLayout::expected_edge_count(layout.m, layout.n));
            let (d_min, d_max) = config.spacing_range;
            for s in layout.h_spacing.iter().chain(&layout.v_spacing) {
                assert!((d_min..=d_max).contains(s));
            }
        }
    }

    #[test]
    fn label_circuits_label_every_component() {
        let config = SamplerConfig { circuit_kind: CircuitKind::Label, ..SamplerConfig::default() };
        let layout = sample_layout(&config, &mut sample_rng(5, 0)).unwrap();
        for edge in layout.edges.iter().filter(|e| e.kind.carries_value()) {
            assert!(edge.label.is_some());
            assert!(edge.value.is_none());
        }
    }

    #[test]
    fn retry_exhaustion_on_pathological_config() {
        // All edges open: no candidate can ever contain a source.
        let mut config = SamplerConfig::default();
        for p in config.component_types.values_mut() {
            *p = 0.0;
        }
        config.component_types.insert(ComponentKind::Open, 1.0);
        config.max_retries = 8;
        let err = sample_layout(&config, &mut sample_rng(1, 0)).unwrap_err();
        assert!(matches!(err, LayoutError::RetryExhausted { attempts: 8 }));
    }

    #[test]
    fn controlled_sources_always_resolve() {
        let config = SamplerConfig::default();
        for index in 100..200 {
            let layout = sample_layout(&config, &mut sample_rng(11, index)).unwrap();
            for edge in layout.edges.iter().filter(|e| e.kind.is_controlled()) {
                let want = edge.kind.control_obs_kind().unwrap();
                let label = edge.control_ref.as_ref().unwrap();
                let matches = layout
                    .edges
                    .iter()
                    .filter(|e| e.measurement.as_ref().map(|m| &m.label == label && m.kind == want).unwrap_or(false))
                    .count();
                assert_eq!(matches, 1, "control_ref must resolve to exactly one measurement");
            }
        }
    }
}
