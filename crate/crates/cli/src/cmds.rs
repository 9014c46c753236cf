//! Subcommand implementations, thin wrappers over the core library.

use std::collections::BTreeMap;
use std::path::Path;

use lprc_core::dataset::{self, Split, SplitRatio};
use lprc_core::eval::{self, PpmScore};
use lprc_core::layout::{CircuitKind, SamplerConfig};
use lprc_core::netlist::{extract_netlist, Netlist};
use lprc_core::pipeline::{
    self, EchoClient, FileClient, PerceptionClient, ReasoningClient, RemotePerceptionClient, RemoteReasoningClient,
};
use lprc_core::spice::parse_spice;

use crate::AppError;

fn config_err(e: impl std::fmt::Display) -> AppError {
    AppError::Config(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> AppError {
    AppError::Runtime(e.to_string())
}

#[allow(clippy::too_many_arguments)]
pub fn gen(
    n: u64,
    seed: Option<u64>,
    split: &str,
    out: &Path,
    config_path: Option<&Path>,
    kind: Option<&str>,
    jobs: usize,
    json: bool,
) -> Result<(), AppError> {
    let ratio = SplitRatio::parse(split).map_err(config_err)?;
    let mut config = match config_path {
        Some(path) => SamplerConfig::from_path(path).map_err(config_err)?,
        None => SamplerConfig::default(),
    };
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(kind) = kind {
        config.circuit_kind = match kind {
            "numerical" => CircuitKind::Numerical,
            "label" => CircuitKind::Label,
            other => return Err(AppError::Config(format!("unknown circuit kind `{other}`"))),
        };
    }
    config.validate().map_err(config_err)?;
    crate::log_info(format!("generating {n} records with config {} into {}", config.config_hash(), out.display()));
    let manifest = dataset::generate_dataset(&config, n, ratio, out, jobs).map_err(runtime_err)?;
    if json {
        println!("{}", serde_json::to_string(&manifest).map_err(runtime_err)?);
    } else {
        println!(
            "generated {} records into {} (config {}, simulatable {}/{})",
            manifest.n_records,
            out.display(),
            manifest.config_hash,
            manifest.n_simulatable,
            manifest.n_records
        );
        for (split, count) in &manifest.counts {
            println!("  {split}: {count}");
        }
        println!(
            "  mean nodes {:.3}, mean branches {:.3}",
            manifest.stats.nodes.mean, manifest.stats.branches.mean
        );
    }
    Ok(())
}

pub fn simulate(deck_path: &Path, _json: bool) -> Result<(), AppError> {
    let text = std::fs::read_to_string(deck_path)
        .map_err(|e| AppError::Config(format!("cannot read {}: {e}", deck_path.display())))?;
    let deck = parse_spice(&text).map_err(runtime_err)?;
    // A singular or incomplete circuit is a valid analytical answer, not a
    // tool failure: always exit 0 with the status in the payload.
    let result = lprc_core::simulate::<f64>(&deck);
    println!("{}", serde_json::to_string(&result).map_err(runtime_err)?);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn eval_ppm(
    pred_dir: &Path,
    gold_dir: &Path,
    split: &str,
    bin_width: usize,
    out: Option<&Path>,
    jobs: usize,
    json: bool,
) -> Result<(), AppError> {
    let split = Split::parse(split).ok_or_else(|| AppError::Config(format!("unknown split `{split}`")))?;
    if !pred_dir.is_dir() {
        return Err(AppError::Config(format!("prediction directory {} not found", pred_dir.display())));
    }
    let records: Vec<_> = dataset::load_split(gold_dir, split)
        .map_err(config_err)?
        .collect::<Result<_, _>>()
        .map_err(runtime_err)?;
    if records.is_empty() {
        return Err(AppError::Runtime("gold split is empty".into()));
    }

    let score_one = |record: &lprc_core::dataset::DatasetRecord| -> Result<(String, CircuitKind, Netlist, PpmScore), AppError> {
        let gold_deck = parse_spice(&record.spice).map_err(runtime_err)?;
        let gold_netlist = extract_netlist(&record.layout).map_err(runtime_err)?;
        let pred_path = pred_dir.join(format!("{}.sp", record.id));
        let score = match std::fs::read_to_string(&pred_path) {
            Ok(pred_text) => eval::score_pair(&pred_text, &gold_deck, record.circuit_kind),
            Err(_) => PpmScore {
                acc_cq: false,
                acc_cv: (record.circuit_kind == CircuitKind::Numerical).then_some(false),
                acc_sim: record.simulatable.then_some(false),
                failure_reason: Some("missing prediction file".into()),
            },
        };
        Ok((record.id.clone(), record.circuit_kind, gold_netlist, score))
    };

    // Scoring is per-sample parallel.
    let slots: std::sync::Mutex<Vec<Option<Result<_, AppError>>>> =
        std::sync::Mutex::new((0..records.len()).map(|_| None).collect());
    let next = std::sync::atomic::AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..jobs.max(1) {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                let Some(record) = records.get(index) else { break };
                let result = score_one(record);
                slots.lock().unwrap()[index] = Some(result);
            });
        }
    });
    let mut scored: Vec<(String, CircuitKind, Netlist, PpmScore)> = Vec::with_capacity(records.len());
    for slot in slots.into_inner().unwrap() {
        scored.push(slot.expect("all records scored")?);
    }

    if let Some(out) = out {
        let mut lines = String::new();
        for (id, _, _, score) in &scored {
            let mut value = serde_json::to_value(score).map_err(runtime_err)?;
            value["id"] = serde_json::Value::String(id.clone());
            lines.push_str(&value.to_string());
            lines.push('\n');
        }
        std::fs::write(out, lines).map_err(runtime_err)?;
    }

    let aggregate = eval::aggregate(&scored.iter().map(|(_, k, _, s)| (*k, s.clone())).collect::<Vec<_>>());
    let complexity = eval::complexity_report(scored.iter().map(|(_, _, n, s)| (n, s)), bin_width);

    if json {
        let payload = serde_json::json!({ "aggregate": aggregate, "complexity": complexity });
        println!("{payload}");
        return Ok(());
    }
    println!("{:<12} {:>6} {:>8} {:>8} {:>8}", "kind", "n", "ACC_CQ", "ACC_CV", "ACC_sim");
    for row in &aggregate.rows {
        let pct = |r: Option<f64>| r.map(|v| format!("{:.1}", v * 100.0)).unwrap_or_else(|| "-".into());
        println!(
            "{:<12} {:>6} {:>8.1} {:>8} {:>8}",
            format!("{:?}", row.circuit_kind),
            row.n,
            row.acc_cq * 100.0,
            pct(row.acc_cv),
            pct(row.acc_sim),
        );
    }
    println!("\nACC_sim by branch count (bin width {bin_width}):");
    for bucket in &complexity.by_branches {
        let rate = bucket.acc_sim.map(|r| format!("{:.1}%", r * 100.0)).unwrap_or_else(|| "-".into());
        println!("  [{:>3}-{:>3}] n={:<5} scored={:<5} {}", bucket.lo, bucket.hi, bucket.n_samples, bucket.n_scored, rate);
    }
    println!("\nACC_sim by node count (bin width {bin_width}):");
    for bucket in &complexity.by_nodes {
        let rate = bucket.acc_sim.map(|r| format!("{:.1}%", r * 100.0)).unwrap_or_else(|| "-".into());
        println!("  [{:>3}-{:>3}] n={:<5} scored={:<5} {}", bucket.lo, bucket.hi, bucket.n_samples, bucket.n_scored, rate);
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn run(
    problems_path: &Path,
    ppm: &str,
    mllm: &str,
    dataset_dir: Option<&Path>,
    split: &str,
    out: &Path,
    resume: bool,
    jobs: usize,
    json: bool,
) -> Result<(), AppError> {
    let text = std::fs::read_to_string(problems_path)
        .map_err(|e| AppError::Config(format!("cannot read {}: {e}", problems_path.display())))?;
    let problems: Vec<pipeline::Problem> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect::<Result<_, _>>()
        .map_err(|e| AppError::Config(format!("bad problems file: {e}")))?;

    let perception: Box<dyn PerceptionClient> = if ppm == "oracle" {
        let dir = dataset_dir.ok_or_else(|| AppError::Config("--ppm oracle requires --dataset".into()))?;
        let split = Split::parse(split).ok_or_else(|| AppError::Config(format!("unknown split `{split}`")))?;
        let mut decks = BTreeMap::new();
        for record in dataset::load_split(dir, split).map_err(config_err)? {
            let record = record.map_err(runtime_err)?;
            decks.insert(record.id, record.spice);
        }
        Box::new(pipeline::OracleClient::new(decks))
    } else if let Some(dir) = ppm.strip_prefix("file:") {
        Box::new(FileClient::new(dir))
    } else if ppm == "remote" {
        Box::new(RemotePerceptionClient::from_env().map_err(config_err)?)
    } else {
        return Err(AppError::Config(format!("unknown perception client `{ppm}`")));
    };

    let reasoning: Box<dyn ReasoningClient> = match mllm {
        "echo" => Box::new(EchoClient),
        "remote" => Box::new(RemoteReasoningClient::from_env().map_err(config_err)?),
        other => return Err(AppError::Config(format!("unknown reasoning client `{other}`"))),
    };

    if !resume && out.exists() {
        std::fs::remove_file(out).map_err(runtime_err)?;
    }
    let report = pipeline::run_batch(&problems, perception.as_ref(), reasoning.as_ref(), out, jobs)
        .map_err(runtime_err)?;
    if json {
        println!("{}", serde_json::to_string(&report).map_err(runtime_err)?);
    } else {
        println!(
            "batch: {} total, {} completed, {} skipped, {} ok, {} failed ({} sar / {} sl)",
            report.total, report.completed, report.skipped, report.ok, report.failed, report.sar, report.sl
        );
    }
    Ok(())
}
