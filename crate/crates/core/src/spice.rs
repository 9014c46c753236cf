//! SPICE-subset decks: emission from netlists, parsing, and value
//! refinement. The grammar is the closed subset documented in
//! `docs/spice-subset.md`; round-trips through it are byte-exact.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::netlist::{Branch, BranchKind, Control, MeasurementRef, Netlist};
use crate::units::{format_rat, parse_decimal};
use crate::Rat;

/// Literal token marking a component whose value is not annotated.
pub const EMPTY_TOKEN: &str = "<Empty>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ElementKind {
    Resistor,
    VSource,
    ISource,
    Vcvs,
    Vccs,
    Ccvs,
    Cccs,
}

impl ElementKind {
    pub fn letter(self) -> char {
        match self {
            Self::Resistor => 'R',
            Self::VSource => 'V',
            Self::ISource => 'I',
            Self::Vcvs => 'E',
            Self::Vccs => 'G',
            Self::Ccvs => 'H',
            Self::Cccs => 'F',
        }
    }

    pub fn from_letter(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'R' => Some(Self::Resistor),
            'V' => Some(Self::VSource),
            'I' => Some(Self::ISource),
            'E' => Some(Self::Vcvs),
            'G' => Some(Self::Vccs),
            'H' => Some(Self::Ccvs),
            'F' => Some(Self::Cccs),
            _ => None,
        }
    }

    /// Elements that carry an MNA current unknown (usable as CC sense
    /// branches).
    pub fn voltage_defined(self) -> bool {
        matches!(self, Self::VSource | Self::Vcvs | Self::Ccvs)
    }

    pub fn all() -> [ElementKind; 7] {
        [Self::Resistor, Self::VSource, Self::ISource, Self::Vcvs, Self::Vccs, Self::Ccvs, Self::Cccs]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ValueToken {
    Num(#[serde(with = "crate::units::rat_serde")] Rat),
    Empty,
}

impl ValueToken {
    pub fn as_rat(&self) -> Option<Rat> {
        match self {
            Self::Num(r) => Some(*r),
            Self::Empty => None,
        }
    }

    fn text(&self) -> String {
        match self {
            Self::Num(r) => format_rat(*r),
            Self::Empty => EMPTY_TOKEN.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementCard {
    pub name: String,
    pub kind: ElementKind,
    pub n_plus: String,
    pub n_minus: String,
    /// Controlling node pair for E/G elements.
    pub ctrl_nodes: Option<(String, String)>,
    /// Sensed element name for H/F elements.
    pub ctrl_branch: Option<String>,
    pub value: ValueToken,
}

impl ElementCard {
    pub fn connected_nodes(&self) -> impl Iterator<Item = &str> {
        [Some(self.n_plus.as_str()), Some(self.n_minus.as_str())]
            .into_iter()
            .flatten()
            .chain(self.ctrl_nodes.iter().flat_map(|(a, b)| [a.as_str(), b.as_str()]))
    }

    fn line(&self) -> String {
        let mut parts = vec![self.name.clone(), self.n_plus.clone(), self.n_minus.clone()];
        if let Some((a, b)) = &self.ctrl_nodes {
            parts.push(a.clone());
            parts.push(b.clone());
        }
        if let Some(b) = &self.ctrl_branch {
            parts.push(b.clone());
        }
        parts.push(self.value.text());
        parts.join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Probe {
    /// V(n): node voltage against the reference.
    NodeVoltage(String),
    /// V(a,b): differential voltage.
    VoltageDiff(String, String),
    /// I(name): internal current of an element, positive n+ → n−.
    BranchCurrent(String),
}

impl Probe {
    /// Canonical probe text; simulation results are keyed by it.
    pub fn canonical_text(&self) -> String {
        match self {
            Self::NodeVoltage(n) => format!("V({n})"),
            Self::VoltageDiff(a, b) => format!("V({a},{b})"),
            Self::BranchCurrent(n) => format!("I({n})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ControlCard {
    Op,
    Print(Vec<Probe>),
}

/// A parsed or emitted deck. `to_text` is the single source of canonical
/// text; emission order is deterministic so dataset text is byte-stable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpiceDeck {
    pub title: String,
    pub elements: Vec<ElementCard>,
    pub controls: Vec<ControlCard>,
    pub end_marker: bool,
}

impl SpiceDeck {
    pub fn has_empty(&self) -> bool {
        self.elements.iter().any(|e| e.value == ValueToken::Empty)
    }

    pub fn probes(&self) -> impl Iterator<Item = &Probe> {
        self.controls.iter().flat_map(|c| match c {
            ControlCard::Print(ps) => ps.as_slice(),
            ControlCard::Op => &[],
        })
    }

    /// Element counts per kind letter, the quantity ACC_CQ compares.
    pub fn kind_counts(&self) -> BTreeMap<ElementKind, usize> {
        let mut counts: BTreeMap<ElementKind, usize> = ElementKind::all().into_iter().map(|k| (k, 0)).collect();
        for el in &self.elements {
            *counts.get_mut(&el.kind).unwrap() += 1;
        }
        counts
    }

    pub fn to_text(&self) -> String {
        let mut lines = Vec::new();
        if !self.title.is_empty() {
            lines.push(format!("* {}", self.title));
        }
        for el in &self.elements {
            lines.push(el.line());
        }
        for control in &self.controls {
            match control {
                ControlCard::Op => lines.push(".OP".to_string()),
                ControlCard::Print(probes) => {
                    let body: Vec<String> = probes.iter().map(Probe::canonical_text).collect();
                    lines.push(format!(".PRINT {}", body.join(" ")));
                }
            }
        }
        if self.end_marker {
            lines.push(".END".to_string());
        }
        lines.join("\n") + "\n"
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SpiceError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("line {line}: unknown element kind `{letter}`")]
    UnknownElementKind { line: usize, letter: char },
    #[error("line {line}: `{name}` references nothing")]
    DanglingReference { line: usize, name: String },
}

/// Translates a netlist into a deck: one element card per branch in branch
/// order, one `.OP`, one `.PRINT` per measurement, and `.END`.
pub fn emit_spice(netlist: &Netlist) -> (SpiceDeck, String) {
    let elements = netlist.branches.iter().map(card_from_branch).collect();
    let mut controls = vec![ControlCard::Op];
    for m in &netlist.measurements {
        let probe = match &m.kind {
            MeasurementRef::VoltageObs { plus, minus } => Probe::VoltageDiff(plus.clone(), minus.clone()),
            MeasurementRef::CurrentObs { branch } => Probe::BranchCurrent(branch.clone()),
        };
        controls.push(ControlCard::Print(vec![probe]));
    }
    let deck = SpiceDeck { title: String::new(), elements, controls, end_marker: true };
    let text = deck.to_text();
    (deck, text)
}

fn card_from_branch(branch: &Branch) -> ElementCard {
    let kind = match branch.kind {
        BranchKind::Resistor => ElementKind::Resistor,
        BranchKind::VSource | BranchKind::Ammeter => ElementKind::VSource,
        BranchKind::ISource => ElementKind::ISource,
        BranchKind::Vcvs => ElementKind::Vcvs,
        BranchKind::Vccs => ElementKind::Vccs,
        BranchKind::Ccvs => ElementKind::Ccvs,
        BranchKind::Cccs => ElementKind::Cccs,
    };
    let (ctrl_nodes, ctrl_branch) = match &branch.control {
        Some(Control::Nodes { plus, minus }) => (Some((plus.clone(), minus.clone())), None),
        Some(Control::Branch(name)) => (None, Some(name.clone())),
        None => (None, None),
    };
    ElementCard {
        name: branch.name.clone(),
        kind,
        n_plus: branch.n_plus.clone(),
        n_minus: branch.n_minus.clone(),
        ctrl_nodes,
        ctrl_branch,
        value: match branch.value {
            Some(r) => ValueToken::Num(r),
            None => ValueToken::Empty,
        },
    }
}

/// Parses deck text. Line-oriented: `*` comments (the first one is kept as
/// the title), element cards, `.OP`/`.PRINT`/`.END` controls. Scale suffixes
/// k/meg/m/u are normalized to SI with longest-match, case-insensitive
/// resolution; trailing unit letters are ignored as in classical SPICE.
pub fn parse_spice(text: &str) -> Result<SpiceDeck, SpiceError> {
    let mut deck = SpiceDeck { title: String::new(), elements: Vec::new(), controls: Vec::new(), end_marker: false };
    let mut seen_op = false;
    let mut names: BTreeSet<String> = BTreeSet::new();
    let mut probe_lines: Vec<(usize, Probe)> = Vec::new();

    for (index, raw) in text.lines().enumerate() {
        let line_no = index + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('*') {
            if deck.title.is_empty() {
                deck.title = comment.trim().to_string();
            }
            continue;
        }
        if let Some(control) = line.strip_prefix('.') {
            let mut tokens = control.split_whitespace();
            let keyword = tokens.next().unwrap_or("").to_ascii_uppercase();
            match keyword.as_str() {
                "OP" => {
                    if seen_op {
                        return Err(SpiceError::Syntax { line: line_no, reason: "duplicate .OP".into() });
                    }
                    seen_op = true;
                    deck.controls.push(ControlCard::Op);
                }
                "PRINT" => {
                    let probes: Vec<Probe> = tokens
                        .map(|t| parse_probe(t, line_no))
                        .collect::<Result<_, _>>()?;
                    if probes.is_empty() {
                        return Err(SpiceError::Syntax { line: line_no, reason: ".PRINT without probes".into() });
                    }
                    for p in &probes {
                        probe_lines.push((line_no, p.clone()));
                    }
                    deck.controls.push(ControlCard::Print(probes));
                }
                "END" => {
                    deck.end_marker = true;
                    break;
                }
                other => {
                    return Err(SpiceError::Syntax { line: line_no, reason: format!("unknown control .{other}") });
                }
            }
            continue;
        }
        let element = parse_element(line, line_no)?;
        if !names.insert(element.name.clone()) {
            return Err(SpiceError::Syntax { line: line_no, reason: format!("duplicate element name {}", element.name) });
        }
        deck.elements.push(element);
    }

    // Reference validation: controls and probes must name declared things.
    let node_set: BTreeSet<&str> = deck.elements.iter().flat_map(|e| e.connected_nodes()).collect();
    for el in &deck.elements {
        if let Some(sense) = &el.ctrl_branch {
            if !names.contains(sense) {
                return Err(SpiceError::DanglingReference { line: 0, name: sense.clone() });
            }
        }
        if let Some((a, b)) = &el.ctrl_nodes {
            for n in [a, b] {
                if !node_set.contains(n.as_str()) && n != "0" {
                    return Err(SpiceError::DanglingReference { line: 0, name: n.clone() });
                }
            }
        }
    }
    for (line, probe) in &probe_lines {
        match probe {
            Probe::NodeVoltage(n) => {
                if !node_set.contains(n.as_str()) && n != "0" {
                    return Err(SpiceError::DanglingReference { line: *line, name: n.clone() });
                }
            }
            Probe::VoltageDiff(a, b) => {
                for n in [a, b] {
                    if !node_set.contains(n.as_str()) && n != "0" {
                        return Err(SpiceError::DanglingReference { line: *line, name: n.clone() });
                    }
                }
            }
            Probe::BranchCurrent(name) => {
                if !names.contains(name) {
                    return Err(SpiceError::DanglingReference { line: *line, name: name.clone() });
                }
            }
        }
    }
    Ok(deck)
}

fn parse_probe(token: &str, line: usize) -> Result<Probe, SpiceError> {
    let syntax = |reason: String| SpiceError::Syntax { line, reason };
    let open = token.find('(').ok_or_else(|| syntax(format!("bad probe `{token}`")))?;
    if !token.ends_with(')') {
        return Err(syntax(format!("bad probe `{token}`")));
    }
    let head = token[..open].to_ascii_uppercase();
    let inner = &token[open + 1..token.len() - 1];
    let args: Vec<&str> = inner.split(',').map(str::trim).collect();
    match (head.as_str(), args.as_slice()) {
        ("V", [n]) if !n.is_empty() => Ok(Probe::NodeVoltage(n.to_string())),
        ("V", [a, b]) if !a.is_empty() && !b.is_empty() => Ok(Probe::VoltageDiff(a.to_string(), b.to_string())),
        ("I", [n]) if !n.is_empty() => Ok(Probe::BranchCurrent(n.to_string())),
        _ => Err(syntax(format!("bad probe `{token}`"))),
    }
}

fn parse_element(line: &str, line_no: usize) -> Result<ElementCard, SpiceError> {
    let syntax = |reason: String| SpiceError::Syntax { line: line_no, reason };
    let tokens: Vec<&str> = line.split_whitespace().collect();
    let name = tokens[0].to_string();
    let letter = name.chars().next().unwrap();
    let kind = ElementKind::from_letter(letter)
        .ok_or(SpiceError::UnknownElementKind { line: line_no, letter })?;
    let arity = match kind {
        ElementKind::Resistor | ElementKind::VSource | ElementKind::ISource => 4,
        ElementKind::Vcvs | ElementKind::Vccs => 6,
        ElementKind::Ccvs | ElementKind::Cccs => 5,
    };
    if tokens.len() != arity {
        return Err(syntax(format!("`{name}` expects {arity} fields, got {}", tokens.len())));
    }
    let value_token = tokens[arity - 1];
    let value = if value_token == EMPTY_TOKEN {
        ValueToken::Empty
    } else {
        ValueToken::Num(parse_spice_value(value_token).ok_or_else(|| syntax(format!("bad value `{value_token}`")))?)
    };
    let (ctrl_nodes, ctrl_branch) = match kind {
        ElementKind::Vcvs | ElementKind::Vccs => (Some((tokens[3].to_string(), tokens[4].to_string())), None),
        ElementKind::Ccvs | ElementKind::Cccs => (None, Some(tokens[3].to_string())),
        _ => (None, None),
    };
    Ok(ElementCard {
        name,
        kind,
        n_plus: tokens[1].to_string(),
        n_minus: tokens[2].to_string(),
        ctrl_nodes,
        ctrl_branch,
        value,
    })
}

/// Numeric field with optional scale suffix: `5k` → 5000, `10m` → 0.01,
/// `3MEG` → 3e6, `2u` → 2e-6. Trailing unit letters (`10V`, `5kOhm`) are
/// ignored.
pub fn parse_spice_value(token: &str) -> Option<Rat> {
    let bytes = token.as_bytes();
    let mut i = 0;
    if matches!(bytes.first(), Some(b'+') | Some(b'-')) {
        i = 1;
    }
    let digits_start = i;
    while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
        i += 1;
    }
    if i == digits_start {
        return None;
    }
    // Exponent: e/E followed by an optionally signed digit.
    if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
        let mut j = i + 1;
        if j < bytes.len() && matches!(bytes[j], b'+' | b'-') {
            j += 1;
        }
        if j < bytes.len() && bytes[j].is_ascii_digit() {
            i = j;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
        }
    }
    let base = parse_decimal(&token[..i])?;
    let rest = token[i..].to_ascii_lowercase();
    let scale = if rest.starts_with("meg") {
        Rat::new(1_000_000, 1)
    } else if rest.starts_with('k') {
        Rat::new(1000, 1)
    } else if rest.starts_with('m') {
        Rat::new(1, 1000)
    } else if rest.starts_with('u') {
        Rat::new(1, 1_000_000)
    } else if rest.chars().all(|c| c.is_ascii_alphabetic()) {
        Rat::new(1, 1)
    } else {
        return None;
    };
    Some(base * scale)
}

/// Result of value refinement; an unresolved `<Empty>` is a flag, not an
/// error; the validity check downstream decides what to do with it.
#[derive(Debug, Clone)]
pub struct RefineOutcome {
    pub deck: SpiceDeck,
    pub incomplete: bool,
    pub used_fallback: bool,
}

/// Fallback used when deterministic substitution leaves `<Empty>` tokens:
/// given the current deck text, return a refined full deck text.
pub trait RefineFallback {
    fn refine(&self, deck_text: &str) -> Option<String>;
}

/// Substitutes `<Empty>` values from `value_map` (element label → SI value),
/// then hands any still-incomplete deck to the optional fallback.
pub fn refine_deck(
    deck: &SpiceDeck,
    value_map: &BTreeMap<String, Rat>,
    fallback: Option<&dyn RefineFallback>,
) -> RefineOutcome {
    let mut deck = deck.clone();
    for el in &mut deck.elements {
        if el.value == ValueToken::Empty {
            if let Some(&v) = value_map.get(&el.name) {
                el.value = ValueToken::Num(v);
            }
        }
    }
    let mut used_fallback = false;
    if deck.has_empty() {
        if let Some(fallback) = fallback {
            if let Some(text) = fallback.refine(&deck.to_text()) {
                used_fallback = true;
                if let Ok(refined) = parse_spice(&text) {
                    deck = refined;
                }
            }
        }
    }
    let incomplete = deck.has_empty();
    RefineOutcome { deck, incomplete, used_fallback }
}

/// Deterministic `LABEL = NUMBER UNIT` scan over question text, run before
/// any reasoning-client call so the offline path stays testable.
pub fn extract_value_map(text: &str) -> BTreeMap<String, Rat> {
    let mut map = BTreeMap::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        if !chars[i].is_ascii_alphabetic() {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
            i += 1;
        }
        let label: String = chars[start..i].iter().collect();
        let mut j = i;
        while j < chars.len() && chars[j] == ' ' {
            j += 1;
        }
        if chars.get(j) != Some(&'=') {
            continue;
        }
        j += 1;
        while j < chars.len() && chars[j] == ' ' {
            j += 1;
        }
        let num_start = j;
        if chars.get(j) == Some(&'-') {
            j += 1;
        }
        let mut saw_digit = false;
        while j < chars.len() && chars[j].is_ascii_digit() {
            saw_digit = true;
            j += 1;
        }
        // A decimal point only belongs to the number when digits follow;
        // otherwise it ends the sentence.
        if chars.get(j) == Some(&'.') && chars.get(j + 1).map(|c| c.is_ascii_digit()).unwrap_or(false) {
            j += 1;
            while j < chars.len() && chars[j].is_ascii_digit() {
                j += 1;
            }
        }
        if !saw_digit {
            continue;
        }
        let number: String = chars[num_start..j].iter().collect();
        let Some(base) = parse_decimal(&number) else {
            i = j;
            continue;
        };
        let mut k = j;
        while k < chars.len() && chars[k] == ' ' {
            k += 1;
        }
        let unit_start = k;
        while k < chars.len() && chars[k].is_alphabetic() {
            k += 1;
        }
        let unit: String = chars[unit_start..k].iter().collect();
        match unit_scale(&unit) {
            Some(scale) => {
                map.insert(label, base * scale);
                i = k;
            }
            // An unrecognized word is following prose, not a unit.
            None => {
                map.insert(label, base);
                i = j;
            }
        }
    }
    map
}

fn unit_scale(unit: &str) -> Option<Rat> {
    let lower = unit.to_lowercase();
    match lower.as_str() {
        "" => Some(Rat::new(1, 1)),
        "ohm" | "ohms" | "Ω" | "ω" => Some(Rat::new(1, 1)),
        "kohm" | "kohms" | "kΩ" | "kω" => Some(Rat::new(1000, 1)),
        "v" | "volt" | "volts" => Some(Rat::new(1, 1)),
        "mv" => Some(Rat::new(1, 1000)),
        "a" | "amp" | "amps" | "ampere" | "amperes" => Some(Rat::new(1, 1)),
        "ma" => Some(Rat::new(1, 1000)),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::{MeasurementSpec, Netlist};
    use crate::SCHEMA_VERSION;

    fn divider_netlist() -> Netlist {
        Netlist {
            schema_version: SCHEMA_VERSION,
            nodes: vec!["0".into(), "1".into()],
            branches: vec![
                Branch {
                    name: "V1".into(),
                    kind: BranchKind::VSource,
                    n_plus: "1".into(),
                    n_minus: "0".into(),
                    value: Some(Rat::new(10, 1)),
                    control: None,
                },
                Branch {
                    name: "R1".into(),
                    kind: BranchKind::Resistor,
                    n_plus: "1".into(),
                    n_minus: "0".into(),
                    value: Some(Rat::new(5, 1)),
                    control: None,
                },
            ],
            measurements: vec![MeasurementSpec {
                label: "U".into(),
                kind: MeasurementRef::VoltageObs { plus: "1".into(), minus: "0".into() },
            }],
        }
    }

    #[test]
    fn emits_expected_cards() {
        let (_, text) = emit_spice(&divider_netlist());
        assert_eq!(text, "V1 1 0 10\nR1 1 0 5\n.OP\n.PRINT V(1,0)\n.END\n");
    }

    #[test]
    fn emit_parse_emit_is_byte_identical() {
        let (_, text) = emit_spice(&divider_netlist());
        let deck = parse_spice(&text).unwrap();
        assert_eq!(deck.to_text(), text);
    }

    #[test]
    fn label_branches_emit_empty_token() {
        let mut net = divider_netlist();
        for b in &mut net.branches {
            b.value = None;
        }
        let (deck, text) = emit_spice(&net);
        assert!(deck.has_empty());
        assert!(text.contains("V1 1 0 <Empty>"));
        assert!(text.contains("R1 1 0 <Empty>"));
    }

    #[test]
    fn parses_scale_suffixes() {
        assert_eq!(parse_spice_value("5k"), Some(Rat::new(5000, 1)));
        assert_eq!(parse_spice_value("10m"), Some(Rat::new(1, 100)));
        assert_eq!(parse_spice_value("3MEG"), Some(Rat::new(3_000_000, 1)));
        assert_eq!(parse_spice_value("2u"), Some(Rat::new(1, 500_000)));
        assert_eq!(parse_spice_value("10V"), Some(Rat::new(10, 1)));
        assert_eq!(parse_spice_value("5kOhm"), Some(Rat::new(5000, 1)));
        assert_eq!(parse_spice_value("1e3"), Some(Rat::new(1000, 1)));
        let deck = parse_spice("R1 1 0 5k\nV1 1 0 10\n.OP\n.END\n").unwrap();
        assert_eq!(deck.elements[0].value, ValueToken::Num(Rat::new(5000, 1)));
    }

    #[test]
    fn parses_cccs_card() {
        let deck = parse_spice("V1 1 0 10\nR1 1 2 5\nF1 2 0 V1 2\nR2 2 0 10\n.OP\n.END\n").unwrap();
        let f1 = &deck.elements[2];
        assert_eq!(f1.kind, ElementKind::Cccs);
        assert_eq!(f1.ctrl_branch.as_deref(), Some("V1"));
        assert_eq!(f1.value, ValueToken::Num(Rat::new(2, 1)));
    }

    #[test]
    fn missing_value_is_a_syntax_error_with_line() {
        let err = parse_spice("R1 1 0\n").unwrap_err();
        match err {
            SpiceError::Syntax { line, .. } => assert_eq!(line, 1),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_kind_and_dangling_references_are_rejected() {
        assert!(matches!(
            parse_spice("Q1 1 0 5\n"),
            Err(SpiceError::UnknownElementKind { letter: 'Q', .. })
        ));
        assert!(matches!(
            parse_spice("R1 1 0 5\nV1 1 0 10\n.PRINT I(V9)\n.END\n"),
            Err(SpiceError::DanglingReference { .. })
        ));
        assert!(matches!(
            parse_spice("R1 1 0 5\nF1 1 0 V9 2\n"),
            Err(SpiceError::DanglingReference { .. })
        ));
    }

    #[test]
    fn refine_substitutes_from_value_map() {
        let mut net = divider_netlist();
        for b in &mut net.branches {
            b.value = None;
        }
        let (deck, _) = emit_spice(&net);
        let map = BTreeMap::from([("R1".to_string(), Rat::new(10, 1))]);
        let outcome = refine_deck(&deck, &map, None);
        assert!(outcome.incomplete); // V1 still empty
        let r1 = outcome.deck.elements.iter().find(|e| e.name == "R1").unwrap();
        assert_eq!(r1.value, ValueToken::Num(Rat::new(10, 1)));
    }

    #[test]
    fn refine_is_noop_on_complete_deck() {
        let (deck, text) = emit_spice(&divider_netlist());
        struct Panics;
        impl RefineFallback for Panics {
            fn refine(&self, _: &str) -> Option<String> {
                panic!("fallback must not run for complete decks");
            }
        }
        let outcome = refine_deck(&deck, &BTreeMap::new(), Some(&Panics));
        assert!(!outcome.incomplete);
        assert!(!outcome.used_fallback);
        assert_eq!(outcome.deck.to_text(), text);
    }

    #[test]
    fn refine_uses_fallback_for_leftover_empties() {
        let deck = parse_spice("R1 1 0 <Empty>\nV1 1 0 10\n.OP\n.END\n").unwrap();
        struct Fills;
        impl RefineFallback for Fills {
            fn refine(&self, deck_text: &str) -> Option<String> {
                Some(deck_text.replace(EMPTY_TOKEN, "42"))
            }
        }
        let outcome = refine_deck(&deck, &BTreeMap::new(), Some(&Fills));
        assert!(!outcome.incomplete);
        assert!(outcome.used_fallback);
        assert_eq!(outcome.deck.elements[0].value, ValueToken::Num(Rat::new(42, 1)));
    }

    #[test]
    fn value_map_extraction_normalizes_units() {
        let map = extract_value_map("Given R1 = 10 kOhm, R2=5Ω and I1 = 20 mA, find the voltage. X = 3");
        assert_eq!(map.get("R1"), Some(&Rat::new(10_000, 1)));
        assert_eq!(map.get("R2"), Some(&Rat::new(5, 1)));
        assert_eq!(map.get("I1"), Some(&Rat::new(1, 50)));
        assert_eq!(map.get("X"), Some(&Rat::new(3, 1)));
        assert!(!map.contains_key("voltage"));
    }

    #[test]
    fn value_map_survives_sentence_punctuation() {
        let map = extract_value_map("R6 = 10. Determine the marked currents; V1 = 2.5V.");
        assert_eq!(map.get("R6"), Some(&Rat::new(10, 1)));
        assert_eq!(map.get("V1"), Some(&Rat::new(5, 2)));
        assert!(!map.contains_key("Determine"));
    }
}
