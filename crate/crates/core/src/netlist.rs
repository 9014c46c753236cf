//! Physical structure of a circuit: equipotential nodes and component
//! branches. Extraction merges grid nodes joined by plain wires (union-find),
//! drops open edges, and turns observations into measurement specs.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::layout::{ComponentKind, DiagramLayout, MeasurementKind as ObsKind};
use crate::spice::{ElementKind, Probe, SpiceDeck};
use crate::units::rat_serde;
use crate::{Rat, SCHEMA_VERSION};

pub type NodeId = String;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BranchKind {
    Resistor,
    VSource,
    ISource,
    Vcvs,
    Vccs,
    Ccvs,
    Cccs,
    /// 0 V series element inserted to expose a measured branch current.
    Ammeter,
}

impl BranchKind {
    /// SPICE element-name prefix letter.
    pub fn letter(self) -> char {
        match self {
            Self::Resistor => 'R',
            Self::VSource | Self::Ammeter => 'V',
            Self::ISource => 'I',
            Self::Vcvs => 'E',
            Self::Vccs => 'G',
            Self::Ccvs => 'H',
            Self::Cccs => 'F',
        }
    }

    /// Resistors are polarity-free for equality purposes; every other kind
    /// keeps its terminal orientation.
    pub fn polarity_free(self) -> bool {
        self == Self::Resistor
    }

    /// In SPICE text an ammeter is indistinguishable from a 0 V source.
    fn normalized(self) -> Self {
        if self == Self::Ammeter {
            Self::VSource
        } else {
            self
        }
    }
}

/// Controlling quantity of a dependent source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Control {
    /// Voltage-controlled kinds sense v(plus) − v(minus).
    Nodes { plus: NodeId, minus: NodeId },
    /// Current-controlled kinds sense the internal current of a
    /// voltage-defined branch.
    Branch(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub name: String,
    pub kind: BranchKind,
    pub n_plus: NodeId,
    pub n_minus: NodeId,
    /// SI value; `None` stands for an unannotated (label-type) component and
    /// emits as the `<Empty>` token.
    #[serde(default, with = "opt_rat_serde", skip_serializing_if = "Option::is_none")]
    pub value: Option<Rat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<Control>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum MeasurementRef {
    VoltageObs { plus: NodeId, minus: NodeId },
    CurrentObs { branch: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSpec {
    pub label: String,
    pub kind: MeasurementRef,
}

/// Directed component graph over equipotential nodes. Node "0" is the
/// reference: the equipotential class of the bottom-left grid node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Netlist {
    pub schema_version: u32,
    pub nodes: Vec<NodeId>,
    pub branches: Vec<Branch>,
    pub measurements: Vec<MeasurementSpec>,
}

mod opt_rat_serde {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Rat>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(r) => rat_serde::serialize(r, s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Rat>, D::Error> {
        let text: Option<String> = Option::deserialize(d)?;
        match text {
            None => Ok(None),
            Some(t) => rat_serde::parse_rat_str(&t)
                .map(Some)
                .ok_or_else(|| serde::de::Error::custom(format!("bad rational `{t}`"))),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum NetlistError {
    #[error("component graph is disconnected or misses the reference node")]
    Disconnected,
    #[error("controlled source references unknown measurement `{0}`")]
    DanglingControl(String),
    #[error("invalid netlist: {0}")]
    Invalid(String),
}

impl Netlist {
    /// Branch count in the dataset-statistics sense: ammeters are
    /// measurement plumbing, not branches.
    pub fn branch_count(&self) -> usize {
        self.branches.iter().filter(|b| b.kind != BranchKind::Ammeter).count()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect(), rank: vec![0; n] }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// Distills the physical structure from a diagram layout.
///
/// Shorts without a current observation merge their endpoints into one
/// equipotential node; shorts with one become 0 V source branches. Current
/// observations on component edges insert a series ammeter at the edge
/// midpoint. Open edges vanish. Grid classes that end up with no branches
/// are dropped.
pub fn extract_netlist(layout: &DiagramLayout) -> Result<Netlist, NetlistError> {
    let n_cols = layout.n as usize;
    let grid_index = |p: (u32, u32)| p.0 as usize * n_cols + p.1 as usize;
    let mut uf = UnionFind::new((layout.m as usize) * n_cols);
    for edge in &layout.edges {
        if edge.kind == ComponentKind::Short && edge.measurement.is_none() {
            uf.union(grid_index(edge.endpoints.0), grid_index(edge.endpoints.1));
        }
    }

    let reference_root = uf.find(0); // grid point (0,0)

    // Node ids in demand order: "0" for the reference class, "1", "2", ...
    // for everything else including inserted midpoints.
    struct NodeTable {
        ids: BTreeMap<usize, NodeId>,
        next: u32,
        order: Vec<NodeId>,
        reference_root: usize,
    }
    impl NodeTable {
        fn of_root(&mut self, root: usize) -> NodeId {
            if let Some(id) = self.ids.get(&root) {
                return id.clone();
            }
            let id = if root == self.reference_root {
                "0".to_string()
            } else {
                let id = self.next.to_string();
                self.next += 1;
                id
            };
            self.ids.insert(root, id.clone());
            self.order.push(id.clone());
            id
        }

        fn fresh(&mut self) -> NodeId {
            let id = self.next.to_string();
            self.next += 1;
            self.order.push(id.clone());
            id
        }
    }
    let mut table = NodeTable { ids: BTreeMap::new(), next: 1, order: Vec::new(), reference_root };

    let mut branches: Vec<Branch> = Vec::new();
    let mut measurements: Vec<MeasurementSpec> = Vec::new();
    let mut counters: BTreeMap<char, u32> = BTreeMap::new();
    // Controlled sources resolve their observation after all measurements
    // exist: (branch index, wanted obs kind, label).
    let mut pending_controls: Vec<(usize, ObsKind, String)> = Vec::new();

    for edge in &layout.edges {
        let kind = match edge.kind {
            ComponentKind::Open => continue,
            ComponentKind::Short => {
                let Some(obs) = &edge.measurement else { continue };
                // Observation-carrying short: a named 0 V source whose
                // internal current is the measured quantity.
                let (mut plus, mut minus) = (
                    table.of_root(uf.find(grid_index(edge.endpoints.0))),
                    table.of_root(uf.find(grid_index(edge.endpoints.1))),
                );
                if edge.direction {
                    std::mem::swap(&mut plus, &mut minus);
                }
                if obs.polarity {
                    std::mem::swap(&mut plus, &mut minus);
                }
                let name = format!("V_{}", obs.label);
                branches.push(Branch {
                    name: name.clone(),
                    kind: BranchKind::VSource,
                    n_plus: plus,
                    n_minus: minus,
                    value: Some(Rat::new(0, 1)),
                    control: None,
                });
                measurements.push(MeasurementSpec {
                    label: obs.label.clone(),
                    kind: MeasurementRef::CurrentObs { branch: name },
                });
                continue;
            }
            ComponentKind::Resistor => BranchKind::Resistor,
            ComponentKind::VSource => BranchKind::VSource,
            ComponentKind::ISource => BranchKind::ISource,
            ComponentKind::Vcvs => BranchKind::Vcvs,
            ComponentKind::Vccs => BranchKind::Vccs,
            ComponentKind::Ccvs => BranchKind::Ccvs,
            ComponentKind::Cccs => BranchKind::Cccs,
        };

        let (mut plus, mut minus) = (
            table.of_root(uf.find(grid_index(edge.endpoints.0))),
            table.of_root(uf.find(grid_index(edge.endpoints.1))),
        );
        if edge.direction {
            std::mem::swap(&mut plus, &mut minus);
        }

        let name = match &edge.label {
            Some(label) => label.clone(),
            None => {
                let counter = counters.entry(kind.letter()).or_insert(0);
                *counter += 1;
                format!("{}{}", kind.letter(), counter)
            }
        };
        let value = edge.value.as_ref().map(|v| v.si_value());

        match &edge.measurement {
            Some(obs) if obs.kind == ObsKind::CurrentObs => {
                // Split the edge: component runs plus→mid, the ammeter
                // mid→minus (orientation flipped by the observation
                // polarity).
                let mid = table.fresh();
                let branch_index = branches.len();
                branches.push(Branch {
                    name: name.clone(),
                    kind,
                    n_plus: plus,
                    n_minus: mid.clone(),
                    value,
                    control: None,
                });
                if let Some(label) = &edge.control_ref {
                    pending_controls.push((branch_index, edge.kind.control_obs_kind().unwrap(), label.clone()));
                }
                let (am_plus, am_minus) = if obs.polarity { (minus.clone(), mid) } else { (mid, minus.clone()) };
                let am_name = format!("V_{}", obs.label);
                branches.push(Branch {
                    name: am_name.clone(),
                    kind: BranchKind::Ammeter,
                    n_plus: am_plus,
                    n_minus: am_minus,
                    value: Some(Rat::new(0, 1)),
                    control: None,
                });
                measurements.push(MeasurementSpec {
                    label: obs.label.clone(),
                    kind: MeasurementRef::CurrentObs { branch: am_name },
                });
            }
            other => {
                let branch_index = branches.len();
                branches.push(Branch {
                    name: name.clone(),
                    kind,
                    n_plus: plus.clone(),
                    n_minus: minus.clone(),
                    value,
                    control: None,
                });
                if let Some(label) = &edge.control_ref {
                    pending_controls.push((branch_index, edge.kind.control_obs_kind().unwrap(), label.clone()));
                }
                if let Some(obs) = other {
                    let (p, m) = if obs.polarity { (minus, plus) } else { (plus, minus) };
                    measurements.push(MeasurementSpec {
                        label: obs.label.clone(),
                        kind: MeasurementRef::VoltageObs { plus: p, minus: m },
                    });
                }
            }
        }
    }

    // Resolve controlled-source observations.
    for (branch_index, want, label) in pending_controls {
        let observation = measurements
            .iter()
            .find(|m| m.label == label)
            .ok_or_else(|| NetlistError::DanglingControl(label.clone()))?;
        let control = match (&observation.kind, want) {
            (MeasurementRef::VoltageObs { plus, minus }, ObsKind::VoltageObs) => {
                Control::Nodes { plus: plus.clone(), minus: minus.clone() }
            }
            (MeasurementRef::CurrentObs { branch }, ObsKind::CurrentObs) => Control::Branch(branch.clone()),
            _ => return Err(NetlistError::DanglingControl(label)),
        };
        branches[branch_index].control = Some(control);
    }

    // Connectivity over branch endpoints; the reference class must appear.
    if !table.ids.contains_key(&reference_root) {
        return Err(NetlistError::Disconnected);
    }
    let netlist = Netlist { schema_version: SCHEMA_VERSION, nodes: table.order, branches, measurements };
    if !is_connected(&netlist) {
        return Err(NetlistError::Disconnected);
    }
    validate(&netlist)?;
    Ok(netlist)
}

fn is_connected(net: &Netlist) -> bool {
    if net.nodes.is_empty() || net.branches.is_empty() {
        return false;
    }
    let index: BTreeMap<&str, usize> = net.nodes.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); net.nodes.len()];
    for b in &net.branches {
        let (a, c) = (index[b.n_plus.as_str()], index[b.n_minus.as_str()]);
        adj[a].push(c);
        adj[c].push(a);
    }
    let mut seen = vec![false; net.nodes.len()];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for &j in &adj[i] {
            if !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen.iter().all(|&s| s)
}

fn validate(net: &Netlist) -> Result<(), NetlistError> {
    let nodes: BTreeSet<&str> = net.nodes.iter().map(String::as_str).collect();
    if nodes.len() != net.nodes.len() {
        return Err(NetlistError::Invalid("duplicate node ids".into()));
    }
    if !nodes.contains("0") {
        return Err(NetlistError::Disconnected);
    }
    let mut names = BTreeSet::new();
    for b in &net.branches {
        if !names.insert(b.name.as_str()) {
            return Err(NetlistError::Invalid(format!("duplicate branch name {}", b.name)));
        }
        if !nodes.contains(b.n_plus.as_str()) || !nodes.contains(b.n_minus.as_str()) {
            return Err(NetlistError::Invalid(format!("branch {} endpoint not in node set", b.name)));
        }
        if let Some(v) = b.value {
            if b.kind == BranchKind::Resistor && v <= Rat::new(0, 1) {
                return Err(NetlistError::Invalid(format!("resistor {} must be positive", b.name)));
            }
            if b.kind == BranchKind::Ammeter && v != Rat::new(0, 1) {
                return Err(NetlistError::Invalid(format!("ammeter {} must be 0 V", b.name)));
            }
        }
        match (&b.kind, &b.control) {
            (BranchKind::Vcvs | BranchKind::Vccs, Some(Control::Nodes { plus, minus })) => {
                if !nodes.contains(plus.as_str()) || !nodes.contains(minus.as_str()) {
                    return Err(NetlistError::Invalid(format!("branch {} control nodes unknown", b.name)));
                }
            }
            (BranchKind::Ccvs | BranchKind::Cccs, Some(Control::Branch(sense))) => {
                if !net.branches.iter().any(|s| &s.name == sense) {
                    return Err(NetlistError::DanglingControl(sense.clone()));
                }
            }
            (k, Some(_)) if !matches!(k, BranchKind::Vcvs | BranchKind::Vccs | BranchKind::Ccvs | BranchKind::Cccs) => {
                return Err(NetlistError::Invalid(format!("branch {} cannot carry a control", b.name)));
            }
            (BranchKind::Vcvs | BranchKind::Vccs | BranchKind::Ccvs | BranchKind::Cccs, None) => {
                return Err(NetlistError::Invalid(format!("controlled source {} has no control", b.name)));
            }
            (BranchKind::Vcvs | BranchKind::Vccs, Some(Control::Branch(_)))
            | (BranchKind::Ccvs | BranchKind::Cccs, Some(Control::Nodes { .. })) => {
                return Err(NetlistError::Invalid(format!("branch {} control kind mismatch", b.name)));
            }
            _ => {}
        }
    }
    let mut labels = BTreeSet::new();
    for m in &net.measurements {
        if !labels.insert(m.label.as_str()) {
            return Err(NetlistError::Invalid(format!("duplicate measurement label {}", m.label)));
        }
        match &m.kind {
            MeasurementRef::VoltageObs { plus, minus } => {
                if !nodes.contains(plus.as_str()) || !nodes.contains(minus.as_str()) {
                    return Err(NetlistError::Invalid(format!("measurement {} references unknown node", m.label)));
                }
            }
            MeasurementRef::CurrentObs { branch } => {
                if !net.branches.iter().any(|b| &b.name == branch) {
                    return Err(NetlistError::Invalid(format!("measurement {} references unknown branch", m.label)));
                }
            }
        }
    }
    Ok(())
}

/// Reconstructs a netlist from a parsed deck. The inverse of emission up to
/// measurement labels: voltage probes carry no observation label in SPICE
/// text, so reconstructed voltage measurements are labeled by probe text.
pub fn netlist_from_deck(deck: &SpiceDeck) -> Result<Netlist, NetlistError> {
    // Collect nodes in first-occurrence order.
    let mut nodes: Vec<NodeId> = Vec::new();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    for el in &deck.elements {
        for n in el.connected_nodes() {
            if seen.insert(n.to_string()) {
                nodes.push(n.to_string());
            }
        }
    }
    let branches: Vec<Branch> = deck
        .elements
        .iter()
        .map(|el| Branch {
            name: el.name.clone(),
            kind: match el.kind {
                ElementKind::Resistor => BranchKind::Resistor,
                ElementKind::VSource => BranchKind::VSource,
                ElementKind::ISource => BranchKind::ISource,
                ElementKind::Vcvs => BranchKind::Vcvs,
                ElementKind::Vccs => BranchKind::Vccs,
                ElementKind::Ccvs => BranchKind::Ccvs,
                ElementKind::Cccs => BranchKind::Cccs,
            },
            n_plus: el.n_plus.clone(),
            n_minus: el.n_minus.clone(),
            value: el.value.as_rat(),
            control: match (&el.ctrl_nodes, &el.ctrl_branch) {
                (Some((p, m)), _) => Some(Control::Nodes { plus: p.clone(), minus: m.clone() }),
                (_, Some(b)) => Some(Control::Branch(b.clone())),
                _ => None,
            },
        })
        .collect();
    let mut measurements = Vec::new();
    let mut used_labels: BTreeSet<String> = BTreeSet::new();
    for probe in deck.probes() {
        let (label, kind) = match probe {
            Probe::NodeVoltage(n) => {
                (probe.canonical_text(), MeasurementRef::VoltageObs { plus: n.clone(), minus: "0".to_string() })
            }
            Probe::VoltageDiff(a, b) => {
                (probe.canonical_text(), MeasurementRef::VoltageObs { plus: a.clone(), minus: b.clone() })
            }
            Probe::BranchCurrent(name) => {
                let label = name.strip_prefix("V_").unwrap_or(name).to_string();
                (label, MeasurementRef::CurrentObs { branch: name.clone() })
            }
        };
        // Repeated probes (two observations over one node pair) still need
        // distinct labels; what matters downstream is the probe content.
        let mut unique = label.clone();
        let mut suffix = 1;
        while !used_labels.insert(unique.clone()) {
            suffix += 1;
            unique = format!("{label}#{suffix}");
        }
        measurements.push(MeasurementSpec { label: unique, kind });
    }
    let netlist = Netlist { schema_version: SCHEMA_VERSION, nodes, branches, measurements };
    validate(&netlist)?;
    Ok(netlist)
}

/// Structural equality up to node relabeling ("0" is pinned). Branch names,
/// kinds, values and controls must match exactly; resistors may flip
/// terminals. Measurements match pairwise in order on kind and referenced
/// content; labels are diagram-side metadata and are not compared.
pub fn netlist_equal(a: &Netlist, b: &Netlist) -> bool {
    if a.nodes.len() != b.nodes.len() || a.branches.len() != b.branches.len() {
        return false;
    }
    if a.measurements.len() != b.measurements.len() {
        return false;
    }
    let by_name: BTreeMap<&str, &Branch> = b.branches.iter().map(|br| (br.name.as_str(), br)).collect();
    if by_name.len() != b.branches.len() {
        return false;
    }

    let mut fixed: Vec<(&str, &str)> = vec![("0", "0")];
    // (a-side pair, b-side pair) with two admissible orientations.
    let mut flexible: Vec<(NodePair, NodePair)> = Vec::new();

    for br_a in &a.branches {
        let Some(br_b) = by_name.get(br_a.name.as_str()) else {
            return false;
        };
        if br_a.kind.normalized() != br_b.kind.normalized() || br_a.value != br_b.value {
            return false;
        }
        match (&br_a.control, &br_b.control) {
            (None, None) => {}
            (Some(Control::Branch(x)), Some(Control::Branch(y))) if x == y => {}
            (Some(Control::Nodes { plus: pa, minus: ma }), Some(Control::Nodes { plus: pb, minus: mb })) => {
                fixed.push((pa, pb));
                fixed.push((ma, mb));
            }
            _ => return false,
        }
        if br_a.kind.polarity_free() && br_b.kind.polarity_free() {
            flexible.push(((&br_a.n_plus, &br_a.n_minus), (&br_b.n_plus, &br_b.n_minus)));
        } else {
            fixed.push((&br_a.n_plus, &br_b.n_plus));
            fixed.push((&br_a.n_minus, &br_b.n_minus));
        }
    }

    for (m_a, m_b) in a.measurements.iter().zip(&b.measurements) {
        match (&m_a.kind, &m_b.kind) {
            (MeasurementRef::CurrentObs { branch: x }, MeasurementRef::CurrentObs { branch: y }) => {
                if x != y {
                    return false;
                }
            }
            (
                MeasurementRef::VoltageObs { plus: pa, minus: ma },
                MeasurementRef::VoltageObs { plus: pb, minus: mb },
            ) => {
                fixed.push((pa, pb));
                fixed.push((ma, mb));
            }
            _ => return false,
        }
    }

    let mut forward: BTreeMap<&str, &str> = BTreeMap::new();
    let mut backward: BTreeMap<&str, &str> = BTreeMap::new();
    for (x, y) in fixed {
        if !bind(&mut forward, &mut backward, x, y) {
            return false;
        }
    }
    solve_flexible(&mut forward, &mut backward, &flexible)
}

fn bind<'a>(
    forward: &mut BTreeMap<&'a str, &'a str>,
    backward: &mut BTreeMap<&'a str, &'a str>,
    x: &'a str,
    y: &'a str,
) -> bool {
    match (forward.get(x), backward.get(y)) {
        (Some(&fy), _) if fy != y => false,
        (_, Some(&bx)) if bx != x => false,
        _ => {
            forward.insert(x, y);
            backward.insert(y, x);
            true
        }
    }
}

type NodePair<'a> = (&'a str, &'a str);

fn solve_flexible<'a>(
    forward: &mut BTreeMap<&'a str, &'a str>,
    backward: &mut BTreeMap<&'a str, &'a str>,
    remaining: &[(NodePair<'a>, NodePair<'a>)],
) -> bool {
    let Some((&((ap, am), (bp, bm)), rest)) = remaining.split_first() else {
        return true;
    };
    for (x0, y0, x1, y1) in [(ap, bp, am, bm), (ap, bm, am, bp)] {
        let (saved_f, saved_b) = (forward.clone(), backward.clone());
        if bind(forward, backward, x0, y0) && bind(forward, backward, x1, y1) && solve_flexible(forward, backward, rest)
        {
            return true;
        }
        *forward = saved_f;
        *backward = saved_b;
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{CircuitKind, EdgeSpec, Measurement, ValueSpec};
    use crate::units::Unit;

    fn edge(a: (u32, u32), b: (u32, u32), kind: ComponentKind) -> EdgeSpec {
        let value = kind.carries_value().then(|| ValueSpec {
            magnitude: Rat::new(10, 1),
            unit: match kind {
                ComponentKind::Resistor => Unit::Ohm,
                ComponentKind::VSource => Unit::Volt,
                ComponentKind::ISource => Unit::Ampere,
                _ => Unit::Gain,
            },
        });
        EdgeSpec { endpoints: (a, b), kind, direction: false, value, label: None, measurement: None, control_ref: None }
    }

    fn grid_2x2(edges: Vec<EdgeSpec>) -> DiagramLayout {
        DiagramLayout {
            schema_version: SCHEMA_VERSION,
            m: 2,
            n: 2,
            h_spacing: vec![1.0],
            v_spacing: vec![1.0],
            edges,
            circuit_kind: CircuitKind::Numerical,
        }
    }

    #[test]
    fn wire_merges_top_edge() {
        // Bottom V, top wire, left/right R: 3 equipotential nodes, 3 branches.
        let layout = grid_2x2(vec![
            edge((0, 0), (0, 1), ComponentKind::VSource),
            edge((1, 0), (1, 1), ComponentKind::Short),
            edge((0, 0), (1, 0), ComponentKind::Resistor),
            edge((0, 1), (1, 1), ComponentKind::Resistor),
        ]);
        let net = extract_netlist(&layout).unwrap();
        assert_eq!(net.nodes.len(), 3);
        assert_eq!(net.branches.len(), 3);
        assert!(net.nodes.contains(&"0".to_string()));
    }

    #[test]
    fn disconnected_when_reference_unreachable() {
        // Only a resistor on the top edge; grid point (0,0) has no branches.
        let layout = grid_2x2(vec![
            edge((0, 0), (0, 1), ComponentKind::Open),
            edge((1, 0), (1, 1), ComponentKind::Resistor),
            edge((0, 0), (1, 0), ComponentKind::Open),
            edge((0, 1), (1, 1), ComponentKind::Open),
        ]);
        assert!(matches!(extract_netlist(&layout), Err(NetlistError::Disconnected)));
    }

    #[test]
    fn observed_short_becomes_zero_volt_source() {
        let mut short = edge((1, 0), (1, 1), ComponentKind::Short);
        short.measurement = Some(Measurement { kind: ObsKind::CurrentObs, label: "I1".into(), polarity: false });
        let layout = grid_2x2(vec![
            edge((0, 0), (0, 1), ComponentKind::VSource),
            short,
            edge((0, 0), (1, 0), ComponentKind::Resistor),
            edge((0, 1), (1, 1), ComponentKind::Resistor),
        ]);
        let net = extract_netlist(&layout).unwrap();
        let short_branch = net.branches.iter().find(|b| b.name == "V_I1").unwrap();
        assert_eq!(short_branch.kind, BranchKind::VSource);
        assert_eq!(short_branch.value, Some(Rat::new(0, 1)));
        assert!(net
            .measurements
            .iter()
            .any(|m| m.label == "I1" && m.kind == MeasurementRef::CurrentObs { branch: "V_I1".into() }));
        // Four nodes now: the wire no longer merges.
        assert_eq!(net.nodes.len(), 4);
    }

    #[test]
    fn current_obs_on_component_inserts_series_ammeter() {
        let mut r = edge((0, 0), (1, 0), ComponentKind::Resistor);
        r.measurement = Some(Measurement { kind: ObsKind::CurrentObs, label: "A1".into(), polarity: false });
        let layout = grid_2x2(vec![
            edge((0, 0), (0, 1), ComponentKind::VSource),
            edge((1, 0), (1, 1), ComponentKind::Short),
            r,
            edge((0, 1), (1, 1), ComponentKind::Resistor),
        ]);
        let net = extract_netlist(&layout).unwrap();
        let ammeter = net.branches.iter().find(|b| b.name == "V_A1").unwrap();
        assert_eq!(ammeter.kind, BranchKind::Ammeter);
        let resistor = net.branches.iter().find(|b| b.name == "R1").unwrap();
        // Chain: component then ammeter share the midpoint node.
        assert_eq!(resistor.n_minus, ammeter.n_plus);
    }

    #[test]
    fn extraction_is_idempotent() {
        let layout = grid_2x2(vec![
            edge((0, 0), (0, 1), ComponentKind::VSource),
            edge((1, 0), (1, 1), ComponentKind::Short),
            edge((0, 0), (1, 0), ComponentKind::Resistor),
            edge((0, 1), (1, 1), ComponentKind::Resistor),
        ]);
        let a = extract_netlist(&layout).unwrap();
        let b = extract_netlist(&layout).unwrap();
        assert!(netlist_equal(&a, &b));
    }

    #[test]
    fn equality_invariant_under_node_relabeling() {
        let layout = grid_2x2(vec![
            edge((0, 0), (0, 1), ComponentKind::VSource),
            edge((1, 0), (1, 1), ComponentKind::Resistor),
            edge((0, 0), (1, 0), ComponentKind::Resistor),
            edge((0, 1), (1, 1), ComponentKind::Resistor),
        ]);
        let a = extract_netlist(&layout).unwrap();
        let mut b = a.clone();
        let rename = |n: &mut String| {
            *n = match n.as_str() {
                "1" => "2".to_string(),
                "2" => "1".to_string(),
                other => other.to_string(),
            }
        };
        for node in &mut b.nodes {
            rename(node);
        }
        for br in &mut b.branches {
            rename(&mut br.n_plus);
            rename(&mut br.n_minus);
        }
        for m in &mut b.measurements {
            if let MeasurementRef::VoltageObs { plus, minus } = &mut m.kind {
                rename(plus);
                rename(minus);
            }
        }
        assert!(netlist_equal(&a, &b));
    }

    #[test]
    fn equality_detects_value_change_and_allows_resistor_flip() {
        let layout = grid_2x2(vec![
            edge((0, 0), (0, 1), ComponentKind::VSource),
            edge((1, 0), (1, 1), ComponentKind::Resistor),
            edge((0, 0), (1, 0), ComponentKind::Resistor),
            edge((0, 1), (1, 1), ComponentKind::Resistor),
        ]);
        let a = extract_netlist(&layout).unwrap();

        let mut changed = a.clone();
        changed.branches.iter_mut().find(|b| b.name == "R1").unwrap().value = Some(Rat::new(6, 1));
        assert!(!netlist_equal(&a, &changed));

        let mut flipped_r = a.clone();
        {
            let r = flipped_r.branches.iter_mut().find(|b| b.name == "R1").unwrap();
            std::mem::swap(&mut r.n_plus, &mut r.n_minus);
        }
        assert!(netlist_equal(&a, &flipped_r));

        let mut flipped_v = a.clone();
        {
            let v = flipped_v.branches.iter_mut().find(|b| b.name == "V1").unwrap();
            std::mem::swap(&mut v.n_plus, &mut v.n_minus);
        }
        assert!(!netlist_equal(&a, &flipped_v));
    }

    #[test]
    fn node_count_never_exceeds_grid_size() {
        use crate::layout::{sample_layout, sample_rng, SamplerConfig};
        let config = SamplerConfig::default();
        for i in 0..30 {
            let layout = sample_layout(&config, &mut sample_rng(19, i)).unwrap();
            let net = extract_netlist(&layout).unwrap();
            let midpoints = net.branches.iter().filter(|b| b.kind == BranchKind::Ammeter).count();
            assert!(net.nodes.len() <= (layout.m * layout.n) as usize + midpoints);
        }
    }
}
