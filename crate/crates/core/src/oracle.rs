//! Independent cross-check solver. Enumerates the full KCL + constitutive
//! equation system over every node voltage and every branch current, then
//! solves it by exact rational Gaussian elimination. Shares no code with the
//! MNA path; used to validate it.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

use crate::spice::{ElementKind, Probe, SpiceDeck};

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("deck contains <Empty> values")]
    Incomplete,
    #[error("deck invalid for the oracle: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleOutcome {
    Solved {
        /// Probe values keyed by canonical probe text, exactly like the
        /// simulator's dictionary.
        values: BTreeMap<String, f64>,
        node_voltages: BTreeMap<String, f64>,
    },
    /// Rank-deficient equation system: no unique operating point.
    Singular,
}

fn big(r: crate::Rat) -> BigRational {
    BigRational::new(BigInt::from(*r.numer()), BigInt::from(*r.denom()))
}

/// Solves the deck by direct equation enumeration.
pub fn solve_oracle(deck: &SpiceDeck) -> Result<OracleOutcome, OracleError> {
    if deck.has_empty() {
        return Err(OracleError::Incomplete);
    }
    // Unknowns: node voltages (non-reference, first occurrence) followed by
    // one branch current per element in card order.
    let mut node_names: Vec<String> = Vec::new();
    let mut node_col: BTreeMap<String, usize> = BTreeMap::new();
    for el in &deck.elements {
        for n in el.connected_nodes() {
            if n != "0" && !node_col.contains_key(n) {
                node_col.insert(n.to_string(), node_names.len());
                node_names.push(n.to_string());
            }
        }
    }
    let n = node_names.len();
    let b = deck.elements.len();
    let size = n + b;
    let mut rows: Vec<Vec<BigRational>> = vec![vec![BigRational::zero(); size + 1]; size];

    let vcol = |name: &str| -> Option<usize> { if name == "0" { None } else { Some(node_col[name]) } };
    let icol = |index: usize| n + index;
    let current_index: BTreeMap<&str, usize> =
        deck.elements.iter().enumerate().map(|(i, e)| (e.name.as_str(), i)).collect();

    // KCL at every non-reference node: sum of internal currents leaving the
    // node (sign + at n_plus, − at n_minus) is zero.
    for (index, el) in deck.elements.iter().enumerate() {
        for (node, sign) in [(&el.n_plus, 1), (&el.n_minus, -1)] {
            if let Some(col) = vcol(node) {
                rows[col][icol(index)] += BigInt::from(sign);
            }
        }
    }

    // One constitutive equation per element.
    for (index, el) in deck.elements.iter().enumerate() {
        let row = n + index;
        let value = big(el.value.as_rat().expect("checked non-empty"));
        let add_v = |r: usize, node: &str, sign: BigRational, rows: &mut Vec<Vec<BigRational>>| {
            if let Some(col) = vcol(node) {
                rows[r][col] += sign;
            }
        };
        let one = BigRational::from(BigInt::from(1));
        match el.kind {
            ElementKind::Resistor => {
                // v+ − v− − R·i = 0
                add_v(row, &el.n_plus, one.clone(), &mut rows);
                add_v(row, &el.n_minus, -one, &mut rows);
                rows[row][icol(index)] = -value;
            }
            ElementKind::VSource => {
                // v+ − v− = E
                add_v(row, &el.n_plus, one.clone(), &mut rows);
                add_v(row, &el.n_minus, -one, &mut rows);
                rows[row][size] = value;
            }
            ElementKind::ISource => {
                // i = J
                rows[row][icol(index)] = one;
                rows[row][size] = value;
            }
            ElementKind::Vcvs => {
                // v+ − v− − gain·(vc+ − vc−) = 0
                let (cp, cm) = el.ctrl_nodes.as_ref().unwrap();
                add_v(row, &el.n_plus, one.clone(), &mut rows);
                add_v(row, &el.n_minus, -one, &mut rows);
                add_v(row, cp, -value.clone(), &mut rows);
                add_v(row, cm, value, &mut rows);
            }
            ElementKind::Vccs => {
                // i − gain·(vc+ − vc−) = 0
                let (cp, cm) = el.ctrl_nodes.as_ref().unwrap();
                rows[row][icol(index)] = one;
                add_v(row, cp, -value.clone(), &mut rows);
                add_v(row, cm, value, &mut rows);
            }
            ElementKind::Ccvs => {
                // v+ − v− − r·i_sense = 0
                let sense = sense_index(el, &current_index)?;
                add_v(row, &el.n_plus, one.clone(), &mut rows);
                add_v(row, &el.n_minus, -one, &mut rows);
                rows[row][icol(sense)] -= value;
            }
            ElementKind::Cccs => {
                // i − gain·i_sense = 0
                let sense = sense_index(el, &current_index)?;
                rows[row][icol(index)] = one;
                rows[row][icol(sense)] -= value;
            }
        }
    }

    let Some(solution) = gaussian_elimination(&mut rows, size) else {
        return Ok(OracleOutcome::Singular);
    };

    let node_voltages: BTreeMap<String, f64> = node_names
        .iter()
        .enumerate()
        .map(|(i, name)| (name.clone(), to_f64(&solution[i])))
        .collect();
    let voltage = |node: &str| -> Option<f64> {
        if node == "0" {
            Some(0.0)
        } else {
            node_voltages.get(node).copied()
        }
    };
    let mut values = BTreeMap::new();
    for probe in deck.probes() {
        let value = match probe {
            Probe::NodeVoltage(node) => voltage(node),
            Probe::VoltageDiff(a, c) => match (voltage(a), voltage(c)) {
                (Some(x), Some(y)) => Some(x - y),
                _ => None,
            },
            Probe::BranchCurrent(name) => current_index.get(name.as_str()).map(|&i| to_f64(&solution[n + i])),
        };
        let value = value.ok_or_else(|| OracleError::Invalid(format!("probe {} unanswerable", probe.canonical_text())))?;
        values.insert(probe.canonical_text(), value);
    }
    Ok(OracleOutcome::Solved { values, node_voltages })
}

fn sense_index(el: &crate::spice::ElementCard, index: &BTreeMap<&str, usize>) -> Result<usize, OracleError> {
    let sense = el.ctrl_branch.as_ref().unwrap();
    index
        .get(sense.as_str())
        .copied()
        .ok_or_else(|| OracleError::Invalid(format!("sense branch {sense} unknown")))
}

fn to_f64(r: &BigRational) -> f64 {
    r.numer().to_f64().unwrap_or(f64::NAN) / r.denom().to_f64().unwrap_or(f64::NAN)
}

/// Exact forward elimination with row swaps and back substitution. Returns
/// `None` when some pivot column is entirely zero (rank deficiency).
#[allow(clippy::needless_range_loop)]
fn gaussian_elimination(rows: &mut [Vec<BigRational>], size: usize) -> Option<Vec<BigRational>> {
    for k in 0..size {
        let pivot_row = (k..size).find(|&r| !rows[r][k].is_zero())?;
        rows.swap(k, pivot_row);
        let pivot = rows[k][k].clone();
        for r in k + 1..size {
            if rows[r][k].is_zero() {
                continue;
            }
            let factor = &rows[r][k] / &pivot;
            for c in k..=size {
                let delta = &factor * &rows[k][c];
                rows[r][c] -= delta;
            }
        }
    }
    let mut x = vec![BigRational::zero(); size];
    for k in (0..size).rev() {
        let mut acc = rows[k][size].clone();
        for c in k + 1..size {
            acc -= &rows[k][c] * &x[c];
        }
        x[k] = acc / rows[k][k].clone();
    }
    Some(x)
}
