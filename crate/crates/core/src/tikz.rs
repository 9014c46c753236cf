//! Plotting-language emission for diagram layouts, plus an optional
//! shell-out to a LaTeX toolchain. Compilation is best-effort tooling and
//! stays out of the hermetic test path; the emitted source is the artifact.

use std::path::{Path, PathBuf};
use std::process::Command;

use crate::layout::{CircuitKind, ComponentKind, DiagramLayout, MeasurementKind};

/// Environment variable overriding the LaTeX compiler binary.
pub const COMPILER_ENV: &str = "LPRC_TIKZ_COMPILER";
const DEFAULT_COMPILER: &str = "pdflatex";

#[derive(Debug, Clone, PartialEq)]
pub struct PlotProgram {
    pub source_text: String,
    pub compiler_hint: String,
}

#[derive(Debug, thiserror::Error)]
pub enum TikzError {
    #[error("compiler `{0}` not found on PATH")]
    CompilerMissing(String),
    #[error("compilation failed with {status}: {log}")]
    CompileFailed { status: String, log: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Deterministically renders a layout: one drawing statement per non-open
/// edge, coordinates scaled by the sampled spacings, the component annotated
/// with its value or label and any observation.
pub fn render_tikz(layout: &DiagramLayout) -> PlotProgram {
    let mut lines = vec![
        "\\documentclass[border=4pt]{standalone}".to_string(),
        "\\usepackage{circuitikz}".to_string(),
        "\\begin{document}".to_string(),
        "\\begin{circuitikz}".to_string(),
    ];
    for edge in &layout.edges {
        if edge.kind == ComponentKind::Open {
            continue;
        }
        let (a, b) = if edge.direction {
            (edge.endpoints.1, edge.endpoints.0)
        } else {
            (edge.endpoints.0, edge.endpoints.1)
        };
        let coord = |p: (u32, u32)| format!("({:.4},{:.4})", layout.x_of(p.1), layout.y_of(p.0));
        let mut options = vec![shape_keyword(edge.kind).to_string()];
        if let Some(annotation) = annotation_text(layout.circuit_kind, edge) {
            options.push(format!("l=${annotation}$"));
        }
        if let Some(obs) = &edge.measurement {
            let key = match (obs.kind, obs.polarity) {
                (MeasurementKind::VoltageObs, false) => "v=",
                (MeasurementKind::VoltageObs, true) => "v_=",
                (MeasurementKind::CurrentObs, false) => "i=",
                (MeasurementKind::CurrentObs, true) => "i_=",
            };
            options.push(format!("{key}${}$", subscripted(&obs.label)));
        }
        lines.push(format!("\\draw {} to[{}] {};", coord(a), options.join(", "), coord(b)));
    }
    lines.push("\\end{circuitikz}".to_string());
    lines.push("\\end{document}".to_string());
    PlotProgram { source_text: lines.join("\n") + "\n", compiler_hint: "latex+circuitikz".to_string() }
}

fn shape_keyword(kind: ComponentKind) -> &'static str {
    match kind {
        ComponentKind::Resistor => "R",
        ComponentKind::VSource => "V",
        ComponentKind::ISource => "I",
        ComponentKind::Vcvs | ComponentKind::Ccvs => "cV",
        ComponentKind::Vccs | ComponentKind::Cccs => "cI",
        ComponentKind::Short => "short",
        ComponentKind::Open => unreachable!("open edges are skipped"),
    }
}

/// `R1` → `R_{1}` for typeset annotations.
fn subscripted(label: &str) -> String {
    let split = label.find(|c: char| c.is_ascii_digit()).unwrap_or(label.len());
    if split == label.len() {
        label.to_string()
    } else {
        format!("{}_{{{}}}", &label[..split], &label[split..])
    }
}

fn annotation_text(kind: CircuitKind, edge: &crate::layout::EdgeSpec) -> Option<String> {
    match kind {
        CircuitKind::Label => edge.label.as_deref().map(subscripted),
        CircuitKind::Numerical => {
            let value = edge.value.as_ref()?;
            let magnitude = crate::units::format_rat(value.magnitude);
            if edge.kind.is_controlled() {
                // Gain times the sensed observation, textbook style: 3U_{1}.
                let control = edge.control_ref.as_deref().unwrap_or("");
                Some(format!("{magnitude}{}", subscripted(control)))
            } else {
                Some(format!("{magnitude}{}", value.unit.symbol()))
            }
        }
    }
}

fn compiler_binary() -> String {
    std::env::var(COMPILER_ENV).unwrap_or_else(|_| DEFAULT_COMPILER.to_string())
}

/// Writes the program next to `out_path` and invokes the configured LaTeX
/// compiler. Returns the produced PDF path.
pub fn compile_tikz(program: &PlotProgram, out_path: &Path) -> Result<PathBuf, TikzError> {
    let binary = compiler_binary();
    let dir = out_path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let tex_path = out_path.with_extension("tex");
    std::fs::write(&tex_path, &program.source_text)?;
    let output = Command::new(&binary)
        .arg("-interaction=nonstopmode")
        .arg("-halt-on-error")
        .arg(format!("-output-directory={}", dir.display()))
        .arg(&tex_path)
        .output();
    let output = match output {
        Ok(output) => output,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(TikzError::CompilerMissing(binary)),
        Err(e) => return Err(TikzError::Io(e)),
    };
    if !output.status.success() {
        let mut log = String::from_utf8_lossy(&output.stdout).to_string();
        log.push_str(&String::from_utf8_lossy(&output.stderr));
        let tail: String = log.lines().rev().take(20).collect::<Vec<_>>().into_iter().rev().collect::<Vec<_>>().join("\n");
        return Err(TikzError::CompileFailed { status: output.status.to_string(), log: tail });
    }
    let produced = tex_path.with_extension("pdf");
    if produced != out_path && produced.exists() {
        std::fs::rename(&produced, out_path)?;
        return Ok(out_path.to_path_buf());
    }
    Ok(produced)
}
