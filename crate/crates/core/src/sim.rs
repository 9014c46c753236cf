//! DC operating-point simulation via Modified Nodal Analysis.
//!
//! Sign convention (ACC_sim comparisons depend on it): positive branch
//! current flows n_plus → n_minus inside every element, and `I(name)`
//! probes report that internal current. A voltage source delivering power
//! therefore reports a negative current.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::linalg::{DenseMatrix, LinalgError};
use crate::scalar::Scalar;
use crate::spice::{ElementCard, ElementKind, Probe, SpiceDeck};

/// Simulator ambient temperature in °C, recorded in result metadata. The
/// DC resistive model has no thermal dependence; this is bookkeeping.
pub const TEMPERATURE_C: f64 = 27.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SimStatus {
    Ok,
    /// Structurally singular system: voltage-source loop, current-source
    /// cutset, or floating subcircuit.
    Singular,
    /// Deck still contains `<Empty>` values.
    Incomplete,
    /// Deck text or semantics invalid (unparseable input, bad sense branch,
    /// zero-valued resistor, unanswerable probe).
    ParseFailed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimMeta {
    pub temperature_c: f64,
}

impl Default for SimMeta {
    fn default() -> Self {
        Self { temperature_c: TEMPERATURE_C }
    }
}

/// Dictionary-style simulation output: one entry per `.PRINT` probe, keyed
/// by canonical probe text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult<S> {
    pub status: SimStatus,
    pub values: BTreeMap<String, S>,
    pub meta: SimMeta,
    pub raw_node_voltages: BTreeMap<String, S>,
}

impl<S: Scalar> SimulationResult<S> {
    fn failed(status: SimStatus) -> Self {
        Self { status, values: BTreeMap::new(), meta: SimMeta::default(), raw_node_voltages: BTreeMap::new() }
    }
}

/// True iff the run succeeded and every value is finite.
pub fn check_valid<S: Scalar>(result: &SimulationResult<S>) -> bool {
    result.status == SimStatus::Ok && result.values.values().all(|v| v.is_finite())
}

#[derive(Debug, thiserror::Error)]
pub enum MnaError {
    #[error("deck contains <Empty> values")]
    IncompleteDeck,
    #[error("`{0}` is not a voltage-defined branch")]
    UnknownSenseBranch(String),
    #[error("element {name}: {reason}")]
    InvalidElement { name: String, reason: String },
}

/// Assembled MNA system: N node-voltage unknowns plus M branch-current
/// unknowns for voltage-defined elements (V/E/H cards).
#[derive(Debug, Clone)]
pub struct MnaSystem<S> {
    pub node_order: Vec<String>,
    pub node_index: BTreeMap<String, usize>,
    pub aux_order: Vec<String>,
    pub aux_index: BTreeMap<String, usize>,
    pub matrix: DenseMatrix<S>,
    pub rhs: Vec<S>,
}

#[derive(Debug, Clone)]
pub struct Solution<S> {
    pub node_voltages: BTreeMap<String, S>,
    /// Internal currents of voltage-defined branches.
    pub branch_currents: BTreeMap<String, S>,
}

impl<S: Scalar> Solution<S> {
    pub fn voltage(&self, node: &str) -> Option<S> {
        if node == "0" {
            Some(S::zero())
        } else {
            self.node_voltages.get(node).copied()
        }
    }
}

/// Stamps a complete deck into an MNA system.
pub fn build_mna<S: Scalar>(deck: &SpiceDeck) -> Result<MnaSystem<S>, MnaError> {
    if deck.has_empty() {
        return Err(MnaError::IncompleteDeck);
    }
    // Node rows in first-occurrence order, reference "0" excluded.
    let mut node_order: Vec<String> = Vec::new();
    let mut node_index: BTreeMap<String, usize> = BTreeMap::new();
    for el in &deck.elements {
        for n in el.connected_nodes() {
            if n != "0" && !node_index.contains_key(n) {
                node_index.insert(n.to_string(), node_order.len());
                node_order.push(n.to_string());
            }
        }
    }
    // One auxiliary current row per voltage-defined element, in card order.
    let mut aux_order: Vec<String> = Vec::new();
    let mut aux_index: BTreeMap<String, usize> = BTreeMap::new();
    for el in &deck.elements {
        if el.kind.voltage_defined() {
            aux_index.insert(el.name.clone(), aux_order.len());
            aux_order.push(el.name.clone());
        }
    }
    let n = node_order.len();
    let size = n + aux_order.len();
    let mut a = DenseMatrix::<S>::zeros(size, size);
    let mut b = vec![S::zero(); size];

    let row_of = |node: &str| -> Option<usize> { if node == "0" { None } else { Some(node_index[node]) } };

    for el in &deck.elements {
        let value = el.value.as_rat().expect("checked non-empty");
        let v = S::from_rat(value);
        let plus = row_of(&el.n_plus);
        let minus = row_of(&el.n_minus);
        match el.kind {
            ElementKind::Resistor => {
                if value == crate::Rat::new(0, 1) {
                    return Err(MnaError::InvalidElement { name: el.name.clone(), reason: "zero resistance".into() });
                }
                let g = S::one() / v;
                stamp_conductance(&mut a, plus, minus, g);
            }
            ElementKind::ISource => {
                // Internal current J flows n+ → n−: leaves the circuit at
                // n+ and re-enters at n−.
                if let Some(p) = plus {
                    b[p] = b[p] - v;
                }
                if let Some(m) = minus {
                    b[m] = b[m] + v;
                }
            }
            ElementKind::VSource => {
                let k = n + aux_index[&el.name];
                stamp_branch_current(&mut a, plus, minus, k);
                b[k] = v;
            }
            ElementKind::Vcvs => {
                let k = n + aux_index[&el.name];
                stamp_branch_current(&mut a, plus, minus, k);
                let (cp, cm) = ctrl_rows(el, &row_of);
                // v(n+) − v(n−) − gain·(v(c+) − v(c−)) = 0
                if let Some(cp) = cp {
                    a.add(k, cp, -v);
                }
                if let Some(cm) = cm {
                    a.add(k, cm, v);
                }
            }
            ElementKind::Ccvs => {
                let k = n + aux_index[&el.name];
                stamp_branch_current(&mut a, plus, minus, k);
                let sense = sense_row(el, n, &aux_index)?;
                // v(n+) − v(n−) − r·i_sense = 0
                a.add(k, sense, -v);
            }
            ElementKind::Vccs => {
                let (cp, cm) = ctrl_rows(el, &row_of);
                // Current gain·(v(c+) − v(c−)) flows n+ → n−.
                for (node, sign) in [(plus, S::one()), (minus, -S::one())] {
                    if let Some(r) = node {
                        if let Some(cp) = cp {
                            a.add(r, cp, sign * v);
                        }
                        if let Some(cm) = cm {
                            a.add(r, cm, -sign * v);
                        }
                    }
                }
            }
            ElementKind::Cccs => {
                let sense = sense_row(el, n, &aux_index)?;
                // Current gain·i_sense flows n+ → n−.
                if let Some(p) = plus {
                    a.add(p, sense, v);
                }
                if let Some(m) = minus {
                    a.add(m, sense, -v);
                }
            }
        }
    }

    Ok(MnaSystem { node_order, node_index, aux_order, aux_index, matrix: a, rhs: b })
}

fn stamp_conductance<S: Scalar>(a: &mut DenseMatrix<S>, plus: Option<usize>, minus: Option<usize>, g: S) {
    if let Some(p) = plus {
        a.add(p, p, g);
    }
    if let Some(m) = minus {
        a.add(m, m, g);
    }
    if let (Some(p), Some(m)) = (plus, minus) {
        a.add(p, m, -g);
        a.add(m, p, -g);
    }
}

/// ±1 couplings between a voltage-defined branch's current unknown and its
/// terminal nodes, plus the terminal part of its constraint row.
fn stamp_branch_current<S: Scalar>(a: &mut DenseMatrix<S>, plus: Option<usize>, minus: Option<usize>, k: usize) {
    if let Some(p) = plus {
        a.add(p, k, S::one());
        a.add(k, p, S::one());
    }
    if let Some(m) = minus {
        a.add(m, k, -S::one());
        a.add(k, m, -S::one());
    }
}

fn ctrl_rows<'a>(el: &'a ElementCard, row_of: &dyn Fn(&str) -> Option<usize>) -> (Option<usize>, Option<usize>) {
    let (cp, cm) = el.ctrl_nodes.as_ref().expect("VC element carries control nodes");
    (row_of(cp), row_of(cm))
}

fn sense_row(el: &ElementCard, n: usize, aux_index: &BTreeMap<String, usize>) -> Result<usize, MnaError> {
    let sense = el.ctrl_branch.as_ref().expect("CC element carries sense branch");
    aux_index
        .get(sense)
        .map(|k| n + k)
        .ok_or_else(|| MnaError::UnknownSenseBranch(sense.clone()))
}

/// Solves the assembled system by LU with partial pivoting.
pub fn solve<S: Scalar>(system: &MnaSystem<S>) -> Result<Solution<S>, LinalgError> {
    solve_with_conditioning(system).map(|(solution, _)| solution)
}

/// Like [`solve`], also returning the smallest pivot ratio as a conditioning
/// hint (values near the singularity threshold mean the solution digits are
/// not trustworthy).
pub fn solve_with_conditioning<S: Scalar>(system: &MnaSystem<S>) -> Result<(Solution<S>, S), LinalgError> {
    let lu = crate::linalg::lu_solve_full(&system.matrix, &system.rhs)?;
    let x = lu.x;
    let n = system.node_order.len();
    let solution = Solution {
        node_voltages: system.node_order.iter().enumerate().map(|(i, name)| (name.clone(), x[i])).collect(),
        branch_currents: system.aux_order.iter().enumerate().map(|(k, name)| (name.clone(), x[n + k])).collect(),
    };
    Ok((solution, lu.min_pivot_ratio))
}

/// Internal n+ → n− current of every element, derived from the solution.
pub fn element_currents<S: Scalar>(deck: &SpiceDeck, solution: &Solution<S>) -> BTreeMap<String, S> {
    let v = |node: &str| solution.voltage(node).unwrap_or_else(S::zero);
    let mut currents = BTreeMap::new();
    for el in &deck.elements {
        let i = match el.kind {
            ElementKind::Resistor => {
                let r = S::from_rat(el.value.as_rat().unwrap());
                (v(&el.n_plus) - v(&el.n_minus)) / r
            }
            ElementKind::ISource => S::from_rat(el.value.as_rat().unwrap()),
            ElementKind::VSource | ElementKind::Vcvs | ElementKind::Ccvs => solution.branch_currents[&el.name],
            ElementKind::Vccs => {
                let g = S::from_rat(el.value.as_rat().unwrap());
                let (cp, cm) = el.ctrl_nodes.as_ref().unwrap();
                g * (v(cp) - v(cm))
            }
            ElementKind::Cccs => {
                let beta = S::from_rat(el.value.as_rat().unwrap());
                let sense = el.ctrl_branch.as_ref().unwrap();
                beta * solution.branch_currents.get(sense).copied().unwrap_or_else(S::zero)
            }
        };
        currents.insert(el.name.clone(), i);
    }
    currents
}

/// Runs a deck end to end. Never returns an error: the status channel
/// carries every failure mode.
pub fn simulate<S: Scalar>(deck: &SpiceDeck) -> SimulationResult<S> {
    if deck.has_empty() {
        return SimulationResult::failed(SimStatus::Incomplete);
    }
    let system = match build_mna::<S>(deck) {
        Ok(system) => system,
        Err(MnaError::IncompleteDeck) => return SimulationResult::failed(SimStatus::Incomplete),
        Err(_) => return SimulationResult::failed(SimStatus::ParseFailed),
    };
    let solution = match solve(&system) {
        Ok(solution) => solution,
        Err(LinalgError::Singular) => return SimulationResult::failed(SimStatus::Singular),
    };
    let currents = element_currents(deck, &solution);
    let mut values = BTreeMap::new();
    for probe in deck.probes() {
        let value = match probe {
            Probe::NodeVoltage(node) => solution.voltage(node),
            Probe::VoltageDiff(a, b) => match (solution.voltage(a), solution.voltage(b)) {
                (Some(x), Some(y)) => Some(x - y),
                _ => None,
            },
            Probe::BranchCurrent(name) => currents.get(name.as_str()).copied(),
        };
        let Some(value) = value else {
            return SimulationResult::failed(SimStatus::ParseFailed);
        };
        values.insert(probe.canonical_text(), value);
    }
    SimulationResult {
        status: SimStatus::Ok,
        values,
        meta: SimMeta::default(),
        raw_node_voltages: solution.node_voltages.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spice::parse_spice;

    fn run(text: &str) -> SimulationResult<f64> {
        simulate(&parse_spice(text).unwrap())
    }

    #[test]
    fn single_loop_ohms_law() {
        // 10 V across 5 Ω: v = 10, source current −2 (2 A out of the + terminal).
        let result = run("V1 1 0 10\nR1 1 0 5\n.OP\n.PRINT V(1) I(V1)\n.END\n");
        assert_eq!(result.status, SimStatus::Ok);
        assert!((result.values["V(1)"] - 10.0).abs() < 1e-12);
        assert!((result.values["I(V1)"] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn voltage_divider_midpoint() {
        let result = run("V1 1 0 10\nR1 1 2 5\nR2 2 0 5\n.OP\n.PRINT V(2)\n.END\n");
        assert_eq!(result.status, SimStatus::Ok);
        assert!((result.values["V(2)"] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn node_ids_are_arbitrary_strings() {
        let result = run("V1 in 0 10\nR1 in mid 5\nR2 mid 0 5\n.OP\n.PRINT V(mid)\n.END\n");
        assert_eq!(result.status, SimStatus::Ok);
        assert_eq!(result.values["V(mid)"], 5.0);
    }

    #[test]
    fn current_probes_cover_every_element_kind() {
        // I1 drives 2 A through R1 (2 Ω): v1 = -4 V (current leaves at the
        // source's minus node). G1 mirrors v(1) * 0.5 into a grounded branch.
        let result = run("I1 1 0 2\nR1 1 0 2\nG1 2 0 1 0 0.5\nR2 2 0 1\n.OP\n.PRINT I(I1) I(R1) I(G1)\n.END\n");
        assert_eq!(result.status, SimStatus::Ok);
        assert_eq!(result.values["I(I1)"], 2.0);
        assert!((result.values["I(R1)"] + 2.0).abs() < 1e-12, "resistor current is (v+-v-)/R");
        assert!((result.values["I(G1)"] + 2.0).abs() < 1e-12, "VCCS current is gain*(vc+-vc-)");
    }

    #[test]
    fn parallel_voltage_sources_are_singular() {
        let result = run("V1 1 0 10\nV2 1 0 5\nR1 1 0 5\n.OP\n.END\n");
        assert_eq!(result.status, SimStatus::Singular);
        assert!(!check_valid(&result));
    }

    #[test]
    fn balanced_wheatstone_bridge_has_zero_bridge_current() {
        let text = "V1 1 0 10\nR1 1 2 100\nR2 2 0 100\nR3 1 3 100\nR4 3 0 100\nV_A1 2 3 0\n.OP\n.PRINT I(V_A1)\n.END\n";
        let result = run(text);
        assert_eq!(result.status, SimStatus::Ok);
        assert!(result.values["I(V_A1)"].abs() < 1e-12);
    }

    #[test]
    fn cccs_loop_matches_hand_solution() {
        // KCL at node 2 with F1 injecting 2·i(V1) gives v2 = 20, i(V1) = 2.
        let result = run("V1 1 0 10\nR1 1 2 5\nF1 0 2 V1 2\nR2 2 0 10\n.OP\n.PRINT V(2) I(V1)\n.END\n");
        assert_eq!(result.status, SimStatus::Ok);
        assert!((result.values["V(2)"] - 20.0).abs() < 1e-9);
        assert!((result.values["I(V1)"] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn incomplete_deck_reports_incomplete() {
        let result = run("V1 1 0 <Empty>\nR1 1 0 5\n.OP\n.PRINT V(1)\n.END\n");
        assert_eq!(result.status, SimStatus::Incomplete);
        assert!(result.values.is_empty());
    }

    #[test]
    fn cccs_sensing_a_resistor_is_rejected() {
        let deck = parse_spice("V1 1 0 10\nR1 1 2 5\nF1 2 0 R1 2\nR2 2 0 10\n.OP\n.END\n").unwrap();
        match build_mna::<f64>(&deck) {
            Err(MnaError::UnknownSenseBranch(name)) => assert_eq!(name, "R1"),
            other => panic!("expected UnknownSenseBranch, got {other:?}"),
        }
        assert_eq!(simulate::<f64>(&deck).status, SimStatus::ParseFailed);
    }

    #[test]
    fn check_valid_rejects_non_finite_values() {
        let mut result = run("V1 1 0 10\nR1 1 0 5\n.OP\n.PRINT V(1)\n.END\n");
        assert!(check_valid(&result));
        result.values.insert("V(1)".into(), f64::NAN);
        assert!(!check_valid(&result));
    }

    #[test]
    fn result_serializes_with_temperature_meta() {
        let result = run("V1 1 0 10\nR1 1 0 5\n.OP\n.PRINT V(1)\n.END\n");
        let json = serde_json::to_value(&result).unwrap();
        assert_eq!(json["meta"]["temperature_c"], 27.0);
        assert_eq!(json["status"], "Ok");
    }

    #[test]
    fn solver_is_generic_over_f32() {
        let deck = parse_spice("V1 1 0 10\nR1 1 2 5\nR2 2 0 5\n.OP\n.PRINT V(2)\n.END\n").unwrap();
        let result = simulate::<f32>(&deck);
        assert_eq!(result.status, SimStatus::Ok);
        assert!((result.values["V(2)"] - 5.0f32).abs() < 1e-5);
    }
}
