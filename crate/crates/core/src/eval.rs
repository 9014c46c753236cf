//! Perception-model scoring: component-quantity accuracy, component-value
//! accuracy, simulation-consistency accuracy, and complexity-binned
//! aggregation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::layout::CircuitKind;
use crate::netlist::Netlist;
use crate::scalar::Scalar;
use crate::sim::{simulate, SimStatus};
use crate::spice::{parse_spice, ElementKind, SpiceDeck};
use crate::{Float, Rat};

/// Default simulation-consistency tolerances. Solutions of integer-valued
/// circuits are rationals and solver noise is far below 1e-9; the loose
/// relative guard tolerates alternate-solver cross-checks.
pub const SIM_REL_TOL: f64 = 1e-4;
pub const SIM_ABS_TOL: f64 = 1e-9;

/// Relative tolerance for component-value matching; integer values make
/// this effectively exact.
pub const VALUE_REL_TOL: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("ACC_CV is not applicable to label-type decks")]
    NotApplicable,
}

/// Per-sample metric outcomes. `acc_cv` is absent for label-type circuits;
/// `acc_sim` is absent when the gold deck itself cannot be simulated (such
/// samples leave the ACC_sim denominator).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpmScore {
    pub acc_cq: bool,
    pub acc_cv: Option<bool>,
    pub acc_sim: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_reason: Option<String>,
}

/// ACC_CQ: per-kind element counts must match for every kind in
/// {R, V, I, E, G, H, F}. Topology is not this metric's concern.
pub fn score_quantity(pred: &SpiceDeck, gold: &SpiceDeck) -> bool {
    pred.kind_counts() == gold.kind_counts()
}

/// ACC_CV: quantity accuracy plus a per-kind multiset match of SI values.
pub fn score_value(pred: &SpiceDeck, gold: &SpiceDeck) -> Result<bool, EvalError> {
    if pred.has_empty() || gold.has_empty() {
        return Err(EvalError::NotApplicable);
    }
    if !score_quantity(pred, gold) {
        return Ok(false);
    }
    let values = |deck: &SpiceDeck| -> BTreeMap<ElementKind, Vec<Rat>> {
        let mut map: BTreeMap<ElementKind, Vec<Rat>> = BTreeMap::new();
        for el in &deck.elements {
            map.entry(el.kind).or_default().push(el.value.as_rat().unwrap());
        }
        for list in map.values_mut() {
            list.sort();
        }
        map
    };
    let (p, g) = (values(pred), values(gold));
    if p.keys().ne(g.keys()) {
        return Ok(false);
    }
    for (kind, pv) in &p {
        let gv = &g[kind];
        if pv.len() != gv.len() {
            return Ok(false);
        }
        for (a, b) in pv.iter().zip(gv) {
            let (a, b) = (rat_f64(*a), rat_f64(*b));
            // Symmetric in (pred, gold).
            if (a - b).abs() > VALUE_REL_TOL * a.abs().max(b.abs()).max(1.0) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn rat_f64(r: Rat) -> f64 {
    f64::from_rat(r)
}

/// ACC_sim: simulate both decks and require equal probe-key sets with
/// value agreement inside the tolerances. A pred that fails to simulate
/// scores false, with the failure mode reported.
pub fn score_simulation(pred: &SpiceDeck, gold: &SpiceDeck, rel_tol: f64, abs_tol: f64) -> (bool, Option<String>) {
    let gold_result = simulate::<Float>(gold);
    if gold_result.status != SimStatus::Ok {
        return (false, Some(format!("gold deck not simulatable: {:?}", gold_result.status)));
    }
    let pred_result = simulate::<Float>(pred);
    if pred_result.status != SimStatus::Ok {
        return (false, Some(format!("pred deck not simulatable: {:?}", pred_result.status)));
    }
    if pred_result.values.keys().ne(gold_result.values.keys()) {
        return (false, Some("probe sets differ".into()));
    }
    for (key, &g) in &gold_result.values {
        let p = pred_result.values[key];
        // Symmetric in (pred, gold); only pred failures set failure_reason.
        if !p.is_finite() || (p - g).abs() > abs_tol + rel_tol * p.abs().max(g.abs()) {
            return (false, Some(format!("{key}: pred {p} vs gold {g}")));
        }
    }
    (true, None)
}

/// Scores one prediction against its gold deck, folding parse failures and
/// non-simulatable decks into the record the way the aggregate metrics
/// expect.
pub fn score_pair(pred_text: &str, gold: &SpiceDeck, kind: CircuitKind) -> PpmScore {
    let gold_simulatable = simulate::<Float>(gold).status == SimStatus::Ok;
    let acc_sim_denominator = |failed_reason: Option<String>, value: Option<bool>| -> (Option<bool>, Option<String>) {
        if gold_simulatable {
            (value, failed_reason)
        } else {
            (None, Some("gold deck not simulatable".into()))
        }
    };
    let pred = match parse_spice(pred_text) {
        Ok(deck) => deck,
        Err(e) => {
            let (acc_sim, failure_reason) = acc_sim_denominator(Some(format!("pred parse error: {e}")), Some(false));
            return PpmScore {
                acc_cq: false,
                acc_cv: (kind == CircuitKind::Numerical).then_some(false),
                acc_sim,
                failure_reason,
            };
        }
    };
    let acc_cq = score_quantity(&pred, gold);
    let acc_cv = match kind {
        CircuitKind::Numerical => Some(score_value(&pred, gold).unwrap_or(false)),
        CircuitKind::Label => None,
    };
    let (acc_sim, failure_reason) = if gold_simulatable {
        let (ok, reason) = score_simulation(&pred, gold, SIM_REL_TOL, SIM_ABS_TOL);
        (Some(ok), reason)
    } else {
        (None, Some("gold deck not simulatable".into()))
    };
    PpmScore { acc_cq, acc_cv, acc_sim, failure_reason }
}

/// Aggregate rates, one row per circuit kind (Table-style layout).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateRow {
    pub circuit_kind: CircuitKind,
    pub n: usize,
    pub acc_cq: f64,
    /// Absent for label-type rows.
    pub acc_cv: Option<f64>,
    /// Rate over samples whose gold deck simulates.
    pub acc_sim: Option<f64>,
    pub n_sim_scored: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateReport {
    pub rows: Vec<AggregateRow>,
}

pub fn aggregate(scores: &[(CircuitKind, PpmScore)]) -> AggregateReport {
    let mut rows = Vec::new();
    for kind in [CircuitKind::Numerical, CircuitKind::Label] {
        let of_kind: Vec<&PpmScore> = scores.iter().filter(|(k, _)| *k == kind).map(|(_, s)| s).collect();
        if of_kind.is_empty() {
            continue;
        }
        let n = of_kind.len();
        let rate = |hits: usize, total: usize| hits as f64 / total as f64;
        let cq = rate(of_kind.iter().filter(|s| s.acc_cq).count(), n);
        let cv_scored: Vec<bool> = of_kind.iter().filter_map(|s| s.acc_cv).collect();
        let cv = (!cv_scored.is_empty()).then(|| rate(cv_scored.iter().filter(|b| **b).count(), cv_scored.len()));
        let sim_scored: Vec<bool> = of_kind.iter().filter_map(|s| s.acc_sim).collect();
        let sim = (!sim_scored.is_empty()).then(|| rate(sim_scored.iter().filter(|b| **b).count(), sim_scored.len()));
        rows.push(AggregateRow {
            circuit_kind: kind,
            n,
            acc_cq: cq,
            acc_cv: if kind == CircuitKind::Label { None } else { cv },
            acc_sim: sim,
            n_sim_scored: sim_scored.len(),
        });
    }
    AggregateReport { rows }
}

/// One complexity bucket: scale range, sample volume, and the ACC_sim rate
/// over the samples that carry a score.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Bucket {
    pub lo: usize,
    pub hi: usize,
    pub n_samples: usize,
    pub n_scored: usize,
    pub acc_sim: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub bin_width: usize,
    pub by_nodes: Vec<Bucket>,
    pub by_branches: Vec<Bucket>,
}

/// Buckets ACC_sim by gold node count and branch count.
pub fn complexity_report<'a, I>(samples: I, bin_width: usize) -> ComplexityReport
where
    I: IntoIterator<Item = (&'a Netlist, &'a PpmScore)>,
{
    assert!(bin_width > 0, "bin width must be positive");
    let mut nodes: BTreeMap<usize, (usize, usize, usize)> = BTreeMap::new();
    let mut branches: BTreeMap<usize, (usize, usize, usize)> = BTreeMap::new();
    for (netlist, score) in samples {
        for (map, key) in [(&mut nodes, netlist.node_count()), (&mut branches, netlist.branch_count())] {
            let entry = map.entry(key / bin_width).or_insert((0, 0, 0));
            entry.0 += 1;
            if let Some(ok) = score.acc_sim {
                entry.1 += 1;
                if ok {
                    entry.2 += 1;
                }
            }
        }
    }
    let to_buckets = |map: BTreeMap<usize, (usize, usize, usize)>| -> Vec<Bucket> {
        map.into_iter()
            .map(|(bin, (n_samples, n_scored, hits))| Bucket {
                lo: bin * bin_width,
                hi: (bin + 1) * bin_width - 1,
                n_samples,
                n_scored,
                acc_sim: (n_scored > 0).then(|| hits as f64 / n_scored as f64),
            })
            .collect()
    };
    ComplexityReport { bin_width, by_nodes: to_buckets(nodes), by_branches: to_buckets(branches) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::netlist_from_deck;

    fn deck(text: &str) -> SpiceDeck {
        parse_spice(text).unwrap()
    }

    #[test]
    fn quantity_ignores_topology() {
        let gold = deck("V1 1 0 10\nR1 1 2 5\nR2 2 0 5\n.OP\n.END\n");
        let series = deck("V1 1 0 10\nR1 1 2 7\nR2 2 0 9\n.OP\n.END\n");
        let parallel = deck("V1 1 0 10\nR1 1 0 7\nR2 1 0 9\n.OP\n.END\n");
        assert!(score_quantity(&series, &gold));
        assert!(score_quantity(&parallel, &gold));
        let missing = deck("V1 1 0 10\nR1 1 0 5\n.OP\n.END\n");
        assert!(!score_quantity(&missing, &gold));
    }

    #[test]
    fn value_needs_unit_normalization_and_multiset_semantics() {
        let gold = deck("V1 1 0 10\nR1 1 2 5\nR2 2 0 5000\n.OP\n.END\n");
        assert!(score_value(&deck("V1 1 0 10\nR1 1 2 5k\nR2 2 0 5\n.OP\n.END\n"), &gold).unwrap());
        assert!(!score_value(&deck("V1 1 0 10\nR1 1 2 5\nR2 2 0 5\n.OP\n.END\n"), &gold).unwrap());
        let label = deck("V1 1 0 <Empty>\nR1 1 2 <Empty>\nR2 2 0 <Empty>\n.OP\n.END\n");
        assert!(matches!(score_value(&label, &gold), Err(EvalError::NotApplicable)));
    }

    #[test]
    fn value_implies_quantity() {
        let gold = deck("V1 1 0 10\nR1 1 2 5\nR2 2 0 5\n.OP\n.END\n");
        let wrong_count = deck("V1 1 0 10\nR1 1 0 5\n.OP\n.END\n");
        assert!(!score_value(&wrong_count, &gold).unwrap());
    }

    #[test]
    fn simulation_is_reflexive_and_detects_value_shift() {
        let gold = deck("V1 1 0 10\nR1 1 2 5\nR2 2 0 5\n.OP\n.PRINT V(2)\n.END\n");
        let (ok, _) = score_simulation(&gold, &gold, SIM_REL_TOL, SIM_ABS_TOL);
        assert!(ok);
        // R1 +10%: midpoint moves from 5 V to 10·5/10.5 ≈ 4.762 V, far
        // outside tolerance.
        let shifted = deck("V1 1 0 10\nR1 1 2 5.5\nR2 2 0 5\n.OP\n.PRINT V(2)\n.END\n");
        let (ok, reason) = score_simulation(&shifted, &gold, SIM_REL_TOL, SIM_ABS_TOL);
        assert!(!ok);
        assert!(reason.unwrap().contains("V(2)"));
    }

    #[test]
    fn electrically_equivalent_topologies_pass_simulation() {
        let gold = deck("V1 1 0 10\nR1 1 2 10\nR2 2 0 10\n.OP\n.PRINT I(V1)\n.END\n");
        let merged = deck("V1 1 0 10\nR1 1 0 20\n.OP\n.PRINT I(V1)\n.END\n");
        let (ok, _) = score_simulation(&merged, &gold, SIM_REL_TOL, SIM_ABS_TOL);
        assert!(ok);
        assert!(!score_quantity(&merged, &gold));
    }

    #[test]
    fn score_pair_handles_unparseable_pred() {
        let gold = deck("V1 1 0 10\nR1 1 0 5\n.OP\n.PRINT V(1)\n.END\n");
        let score = score_pair("not spice at all &&&\n", &gold, CircuitKind::Numerical);
        assert!(!score.acc_cq);
        assert_eq!(score.acc_cv, Some(false));
        assert_eq!(score.acc_sim, Some(false));
        assert!(score.failure_reason.unwrap().contains("parse error"));
    }

    #[test]
    fn score_pair_excludes_unsimulatable_gold_from_sim_denominator() {
        let gold = deck("V1 1 0 10\nV2 1 0 5\nR1 1 0 5\n.OP\n.PRINT V(1)\n.END\n");
        let score = score_pair(&gold.to_text(), &gold, CircuitKind::Numerical);
        assert!(score.acc_cq);
        assert_eq!(score.acc_sim, None);
    }

    #[test]
    fn complexity_report_buckets_by_scale() {
        let small = netlist_from_deck(&deck("V1 1 0 10\nR1 1 0 5\n.OP\n.END\n")).unwrap();
        let large = netlist_from_deck(&deck(
            "V1 1 0 10\nR1 1 2 5\nR2 2 3 5\nR3 3 4 5\nR4 4 5 5\nR5 5 6 5\nR6 6 7 5\nR7 7 8 5\nR8 8 9 5\nR9 9 10 5\nR10 10 11 5\nR11 11 0 5\n.OP\n.END\n",
        ))
        .unwrap();
        let yes = PpmScore { acc_cq: true, acc_cv: Some(true), acc_sim: Some(true), failure_reason: None };
        let no = PpmScore { acc_cq: true, acc_cv: Some(true), acc_sim: Some(false), failure_reason: None };
        let samples = vec![(&small, &yes), (&large, &no)];
        let report = complexity_report(samples, 10);
        assert_eq!(report.by_nodes.len(), 2);
        assert_eq!(report.by_nodes[0].acc_sim, Some(1.0));
        assert_eq!(report.by_nodes[1].acc_sim, Some(0.0));
    }

    #[test]
    fn aggregate_reports_cv_only_for_numerical() {
        let yes = PpmScore { acc_cq: true, acc_cv: Some(true), acc_sim: Some(true), failure_reason: None };
        let label_score = PpmScore { acc_cq: true, acc_cv: None, acc_sim: None, failure_reason: None };
        let report = aggregate(&[
            (CircuitKind::Numerical, yes),
            (CircuitKind::Label, label_score),
        ]);
        let numerical = report.rows.iter().find(|r| r.circuit_kind == CircuitKind::Numerical).unwrap();
        assert_eq!(numerical.acc_cv, Some(1.0));
        let label = report.rows.iter().find(|r| r.circuit_kind == CircuitKind::Label).unwrap();
        assert_eq!(label.acc_cv, None);
    }
}
