//! Paired dataset generation, persistence and loading: JSONL per split plus
//! a manifest. Records carry the layout, the plotting-language source, the
//! gold SPICE text and the gold simulation result, so the dataset stays
//! text-only and diffable.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::layout::{layout_stats, sample_layout, sample_rng, CircuitKind, DiagramLayout, LayoutError, SamplerConfig, StatsReport};
use crate::netlist::extract_netlist;
use crate::pipeline::{Diagram, OracleClient, Problem};
use crate::sim::{simulate, SimStatus};
use crate::spice::emit_spice;
use crate::tikz::render_tikz;
use crate::{Float, SimResult, SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn file_name(self) -> &'static str {
        match self {
            Self::Train => "train.jsonl",
            Self::Val => "val.jsonl",
            Self::Test => "test.jsonl",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "train" => Some(Self::Train),
            "val" => Some(Self::Val),
            "test" => Some(Self::Test),
            _ => None,
        }
    }
}

/// Split ratio in tenths (e.g. 8:1:1). Membership is a pure function of the
/// sample index (index mod 10 walks the pattern), so re-generation never
/// reshuffles and sizes are exact whenever n is a multiple of 10.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRatio {
    pub train: u32,
    pub val: u32,
    pub test: u32,
}

impl SplitRatio {
    pub fn parse(text: &str) -> Result<Self, DatasetError> {
        let parts: Vec<&str> = text.split(':').collect();
        let bad = || DatasetError::Ratio(format!("`{text}` is not of the form a:b:c with a+b+c = 10"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let nums: Vec<u32> = parts.iter().map(|p| p.parse().map_err(|_| bad())).collect::<Result<_, _>>()?;
        let ratio = Self { train: nums[0], val: nums[1], test: nums[2] };
        ratio.validate()?;
        Ok(ratio)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.train + self.val + self.test != 10 {
            return Err(DatasetError::Ratio(format!(
                "split parts {}:{}:{} must sum to 10",
                self.train, self.val, self.test
            )));
        }
        Ok(())
    }

    pub fn assign(&self, index: u64) -> Split {
        let slot = (index % 10) as u32;
        if slot < self.train {
            Split::Train
        } else if slot < self.train + self.val {
            Split::Val
        } else {
            Split::Test
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub schema_version: u32,
    pub id: String,
    pub index: u64,
    pub seed: u64,
    pub config_hash: String,
    pub circuit_kind: CircuitKind,
    pub layout: DiagramLayout,
    pub tikz: String,
    pub spice: String,
    pub sim_result: SimResult,
    /// False when the sampled circuit is structurally singular; such records
    /// stay in the dataset but leave ACC_sim denominators.
    pub simulatable: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub seed: u64,
    pub config_hash: String,
    pub ratio: SplitRatio,
    pub n_requested: u64,
    pub n_records: u64,
    pub n_simulatable: u64,
    pub counts: BTreeMap<String, u64>,
    pub stats: StatsReport,
}

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("bad split ratio: {0}")]
    Ratio(String),
    #[error("schema version mismatch: found {found}, expected {expected}")]
    SchemaMismatch { found: u32, expected: u32 },
    #[error("corrupt record at {path}:{line}: {reason}")]
    CorruptRecord { path: PathBuf, line: usize, reason: String },
    #[error("missing manifest in {0}")]
    MissingManifest(PathBuf),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Builds one record from its sample index; pure given (config, index).
pub fn generate_record(config: &SamplerConfig, config_hash: &str, index: u64) -> Result<DatasetRecord, LayoutError> {
    let mut rng = sample_rng(config.seed, index);
    let layout = sample_layout(config, &mut rng)?;
    let tikz = render_tikz(&layout).source_text;
    let netlist = extract_netlist(&layout)
        .map_err(|e| LayoutError::InvalidLayout(format!("sampled layout failed extraction: {e}")))?;
    let (deck, spice) = emit_spice(&netlist);
    let sim_result = simulate::<Float>(&deck);
    let simulatable = sim_result.status == SimStatus::Ok;
    Ok(DatasetRecord {
        schema_version: SCHEMA_VERSION,
        id: format!("lprc-{:08x}-{index:06}", config.seed),
        index,
        seed: config.seed,
        config_hash: config_hash.to_string(),
        circuit_kind: config.circuit_kind,
        layout,
        tikz,
        spice,
        sim_result,
        simulatable,
    })
}

/// Generates `n` records, shards them across splits by index, and writes
/// `train.jsonl` / `val.jsonl` / `test.jsonl` plus `manifest.json`.
/// Deterministic under (config, seed): records are generated in parallel but
/// written in index order.
pub fn generate_dataset(
    config: &SamplerConfig,
    n: u64,
    ratio: SplitRatio,
    out_dir: &Path,
    jobs: usize,
) -> Result<Manifest, DatasetError> {
    ratio.validate()?;
    config.validate()?;
    let config_hash = config.config_hash();
    std::fs::create_dir_all(out_dir)?;

    let slots: Mutex<Vec<Option<Result<DatasetRecord, LayoutError>>>> = Mutex::new((0..n).map(|_| None).collect());
    let next = std::sync::atomic::AtomicU64::new(0);
    std::thread::scope(|scope| {
        for _ in 0..jobs.max(1) {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if index >= n {
                    break;
                }
                let record = generate_record(config, &config_hash, index);
                slots.lock().unwrap()[index as usize] = Some(record);
            });
        }
    });

    let mut records = Vec::with_capacity(n as usize);
    for slot in slots.into_inner().unwrap() {
        records.push(slot.expect("all indices generated")?);
    }

    let mut writers: BTreeMap<Split, std::io::BufWriter<std::fs::File>> = BTreeMap::new();
    for split in [Split::Train, Split::Val, Split::Test] {
        let file = std::fs::File::create(out_dir.join(split.file_name()))?;
        writers.insert(split, std::io::BufWriter::new(file));
    }
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    let mut n_simulatable = 0u64;
    for record in &records {
        let split = ratio.assign(record.index);
        let writer = writers.get_mut(&split).unwrap();
        writeln!(writer, "{}", serde_json::to_string(record)?)?;
        *counts.entry(format!("{split:?}").to_lowercase()).or_insert(0) += 1;
        if record.simulatable {
            n_simulatable += 1;
        }
    }
    for (_, mut writer) in writers {
        writer.flush()?;
    }

    let layouts: Vec<DiagramLayout> = records.iter().map(|r| r.layout.clone()).collect();
    let stats = layout_stats(&layouts)?;
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        seed: config.seed,
        config_hash,
        ratio,
        n_requested: n,
        n_records: records.len() as u64,
        n_simulatable,
        counts,
        stats,
    };
    let manifest_json = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(out_dir.join(MANIFEST_FILE), manifest_json + "\n")?;
    Ok(manifest)
}

pub fn load_manifest(dir: &Path) -> Result<Manifest, DatasetError> {
    let path = dir.join(MANIFEST_FILE);
    if !path.exists() {
        return Err(DatasetError::MissingManifest(dir.to_path_buf()));
    }
    let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(DatasetError::SchemaMismatch { found: manifest.schema_version, expected: SCHEMA_VERSION });
    }
    Ok(manifest)
}

/// Streaming split reader; every record is schema-validated as it passes.
pub struct RecordIter {
    path: PathBuf,
    lines: std::io::Lines<std::io::BufReader<std::fs::File>>,
    line_no: usize,
}

impl Iterator for RecordIter {
    type Item = Result<DatasetRecord, DatasetError>;

    fn next(&mut self) -> Option<Self::Item> {
        let line = self.lines.next()?;
        self.line_no += 1;
        Some(line.map_err(DatasetError::from).and_then(|text| self.validate(&text)))
    }
}

impl RecordIter {
    fn validate(&self, text: &str) -> Result<DatasetRecord, DatasetError> {
        let corrupt = |reason: String| DatasetError::CorruptRecord {
            path: self.path.clone(),
            line: self.line_no,
            reason,
        };
        let record: DatasetRecord = serde_json::from_str(text).map_err(|e| corrupt(e.to_string()))?;
        if record.schema_version != SCHEMA_VERSION {
            return Err(DatasetError::SchemaMismatch { found: record.schema_version, expected: SCHEMA_VERSION });
        }
        crate::spice::parse_spice(&record.spice).map_err(|e| corrupt(format!("stored spice does not parse: {e}")))?;
        Ok(record)
    }
}

pub fn load_split(dir: &Path, split: Split) -> Result<RecordIter, DatasetError> {
    load_manifest(dir)?;
    let path = dir.join(split.file_name());
    let file = std::fs::File::open(&path)?;
    Ok(RecordIter { path, lines: std::io::BufReader::new(file).lines(), line_no: 0 })
}

/// Problems plus the oracle perception client over a generated split: each
/// record becomes a question whose diagram is the stored plotting source.
pub fn problems_from_split(dir: &Path, split: Split) -> Result<(Vec<Problem>, OracleClient), DatasetError> {
    let mut problems = Vec::new();
    let mut decks = BTreeMap::new();
    for record in load_split(dir, split)? {
        let record = record?;
        let text = match record.circuit_kind {
            CircuitKind::Numerical => {
                "Determine every measured voltage and current marked in the circuit diagram.".to_string()
            }
            CircuitKind::Label => {
                // Label-type questions state the values in text.
                let netlist = extract_netlist(&record.layout)
                    .map_err(|e| LayoutError::InvalidLayout(e.to_string()))?;
                let givens: Vec<String> = netlist
                    .branches
                    .iter()
                    .filter(|b| b.value.is_none())
                    .map(|b| format!("{} = 10", b.name))
                    .collect();
                format!(
                    "In the circuit, {}. Determine every measured voltage and current marked in the diagram.",
                    givens.join(", ")
                )
            }
        };
        problems.push(Problem {
            id: record.id.clone(),
            text,
            diagram: Diagram::Tikz(record.tikz.clone()),
            gold_answer: None,
        });
        decks.insert(record.id, record.spice);
    }
    Ok((problems, OracleClient::new(decks)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn temp_dir(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("lprc-dataset-{tag}-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn ratio_parsing_enforces_tenths() {
        assert_eq!(SplitRatio::parse("8:1:1").unwrap(), SplitRatio { train: 8, val: 1, test: 1 });
        assert!(SplitRatio::parse("9:2:1").is_err());
        assert!(SplitRatio::parse("8:1").is_err());
        assert!(SplitRatio::parse("a:b:c").is_err());
    }

    #[test]
    fn split_sizes_are_exact() {
        let ratio = SplitRatio { train: 8, val: 1, test: 1 };
        let mut counts = BTreeMap::new();
        for i in 0..1000u64 {
            *counts.entry(ratio.assign(i)).or_insert(0u64) += 1;
        }
        assert_eq!(counts[&Split::Train], 800);
        assert_eq!(counts[&Split::Val], 100);
        assert_eq!(counts[&Split::Test], 100);
    }

    #[test]
    fn generation_is_deterministic_and_loadable() {
        let config = SamplerConfig { seed: 42, ..SamplerConfig::default() };
        let ratio = SplitRatio { train: 8, val: 1, test: 1 };
        let dir_a = temp_dir("a");
        let dir_b = temp_dir("b");
        let manifest_a = generate_dataset(&config, 30, ratio, &dir_a, 4).unwrap();
        let manifest_b = generate_dataset(&config, 30, ratio, &dir_b, 1).unwrap();
        assert_eq!(manifest_a.config_hash, manifest_b.config_hash);
        for split in [Split::Train, Split::Val, Split::Test] {
            let a = std::fs::read(dir_a.join(split.file_name())).unwrap();
            let b = std::fs::read(dir_b.join(split.file_name())).unwrap();
            assert_eq!(a, b, "parallel and serial generation must agree byte-for-byte");
        }
        let records: Vec<_> = load_split(&dir_a, Split::Train).unwrap().collect::<Result<_, _>>().unwrap();
        assert_eq!(records.len() as u64, manifest_a.counts["train"]);
        std::fs::remove_dir_all(&dir_a).unwrap();
        std::fs::remove_dir_all(&dir_b).unwrap();
    }

    #[test]
    fn truncated_file_reports_corrupt_record() {
        let config = SamplerConfig { seed: 3, ..SamplerConfig::default() };
        let dir = temp_dir("corrupt");
        generate_dataset(&config, 10, SplitRatio { train: 8, val: 1, test: 1 }, &dir, 1).unwrap();
        let path = dir.join(Split::Train.file_name());
        let text = std::fs::read_to_string(&path).unwrap();
        let truncated: String = text.lines().next().unwrap().chars().take(40).collect();
        std::fs::write(&path, truncated + "\n").unwrap();
        let result: Result<Vec<_>, _> = load_split(&dir, Split::Train).unwrap().collect();
        match result {
            Err(DatasetError::CorruptRecord { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected CorruptRecord, got {other:?}"),
        }
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn wrong_schema_version_is_rejected() {
        let config = SamplerConfig { seed: 4, ..SamplerConfig::default() };
        let dir = temp_dir("schema");
        generate_dataset(&config, 10, SplitRatio { train: 8, val: 1, test: 1 }, &dir, 1).unwrap();
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).unwrap().replace("\"schema_version\": 1", "\"schema_version\": 99");
        std::fs::write(&path, text).unwrap();
        assert!(matches!(load_manifest(&dir), Err(DatasetError::SchemaMismatch { found: 99, .. })));
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
