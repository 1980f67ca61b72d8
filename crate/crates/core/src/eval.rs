//! Benchmark harness and metrics: value normalization, denotation
//! accuracy for QA, binary accuracy for fact verification.
//!
//! Normalization rules (documented here because they gate the metric):
//! a raw string is tried as a number first (commas removed, one leading
//! currency symbol of $ € £ ¥ stripped, a leading or trailing percent sign
//! stripped), then as a date (ISO `YYYY[-MM[-DD]]` or `Month D, YYYY` with
//! full or three-letter month names), and otherwise normalized as a string
//! (lowercased, every character that is neither alphanumeric nor
//! whitespace dropped, whitespace collapsed). Values of different classes
//! never compare equal.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::answer::{answer_base, answer_cot};
use crate::llm::CallTag;
use crate::retrieval::{Engine, QuestionSession, TableContext};
use crate::table::{load_table, DatasetExample, TableFormat};

#[derive(Debug, Clone, PartialEq)]
pub enum NormalizedValue {
    Number(f64),
    Date {
        year: i32,
        month: Option<u32>,
        day: Option<u32>,
    },
    Str(String),
}

impl NormalizedValue {
    fn rank(&self) -> u8 {
        match self {
            NormalizedValue::Number(_) => 0,
            NormalizedValue::Date { .. } => 1,
            NormalizedValue::Str(_) => 2,
        }
    }

    fn cmp_key(&self, other: &Self) -> Ordering {
        match (self, other) {
            (NormalizedValue::Number(a), NormalizedValue::Number(b)) => a.total_cmp(b),
            (
                NormalizedValue::Date { year: ya, month: ma, day: da },
                NormalizedValue::Date { year: yb, month: mb, day: db },
            ) => (ya, ma, da).cmp(&(yb, mb, db)),
            (NormalizedValue::Str(a), NormalizedValue::Str(b)) => a.cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

static MONTHS: &[(&str, u32)] = &[
    ("january", 1),
    ("february", 2),
    ("march", 3),
    ("april", 4),
    ("may", 5),
    ("june", 6),
    ("july", 7),
    ("august", 8),
    ("september", 9),
    ("october", 10),
    ("november", 11),
    ("december", 12),
];

fn month_number(name: &str) -> Option<u32> {
    let lower = name.to_lowercase();
    MONTHS
        .iter()
        .find(|(full, _)| **full == lower || full[..3] == lower)
        .map(|(_, n)| *n)
}

fn try_number(raw: &str) -> Option<f64> {
    let mut s = raw.trim();
    if s.is_empty() {
        return None;
    }
    for symbol in ['$', '€', '£', '¥'] {
        if let Some(rest) = s.strip_prefix(symbol) {
            s = rest.trim_start();
            break;
        }
    }
    let s = s.strip_prefix('%').unwrap_or(s);
    let s = s.strip_suffix('%').unwrap_or(s);
    let cleaned = s.replace(',', "");
    let cleaned = cleaned.trim();
    if cleaned.is_empty() {
        return None;
    }
    cleaned.parse::<f64>().ok().filter(|f| f.is_finite())
}

fn try_date(raw: &str) -> Option<NormalizedValue> {
    let s = raw.trim();
    let iso = regex::Regex::new(r"^(\d{4})-(\d{1,2})(?:-(\d{1,2}))?$").expect("static regex");
    if let Some(caps) = iso.captures(s) {
        let year: i32 = caps[1].parse().ok()?;
        let month: u32 = caps[2].parse().ok()?;
        let day: Option<u32> = caps.get(3).map(|m| m.as_str().parse().ok()).flatten();
        if !(1..=12).contains(&month) || day.map(|d| !(1..=31).contains(&d)).unwrap_or(false) {
            return None;
        }
        return Some(NormalizedValue::Date {
            year,
            month: Some(month),
            day,
        });
    }
    let textual =
        regex::Regex::new(r"^([A-Za-z]+)\.?\s+(\d{1,2}),?\s+(\d{4})$").expect("static regex");
    if let Some(caps) = textual.captures(s) {
        let month = month_number(&caps[1])?;
        let day: u32 = caps[2].parse().ok()?;
        let year: i32 = caps[3].parse().ok()?;
        if !(1..=31).contains(&day) {
            return None;
        }
        return Some(NormalizedValue::Date {
            year,
            month: Some(month),
            day: Some(day),
        });
    }
    None
}

fn normalize_str(raw: &str) -> String {
    let kept: String = raw
        .to_lowercase()
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect();
    kept.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Total normalization: number, then date, then string.
pub fn normalize(raw: &str) -> NormalizedValue {
    if let Some(n) = try_number(raw) {
        return NormalizedValue::Number(n);
    }
    if let Some(d) = try_date(raw) {
        return d;
    }
    NormalizedValue::Str(normalize_str(raw))
}

/// True iff the normalized multisets are equal, regardless of order.
pub fn denotation_match(pred: &[String], gold: &[String]) -> bool {
    if pred.len() != gold.len() {
        return false;
    }
    let mut a: Vec<NormalizedValue> = pred.iter().map(|s| normalize(s)).collect();
    let mut b: Vec<NormalizedValue> = gold.iter().map(|s| normalize(s)).collect();
    a.sort_by(|x, y| x.cmp_key(y));
    b.sort_by(|x, y| x.cmp_key(y));
    a == b
}

/// Splits a predicted answer string into a denotation list: on `|` when
/// present, otherwise on commas when the gold set is multi-valued.
pub fn split_prediction(answer: &str, gold_len: usize) -> Vec<String> {
    let parts: Vec<String> = answer
        .split('|')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    if parts.len() > 1 || gold_len <= 1 {
        return if parts.is_empty() {
            vec![answer.trim().to_string()]
        } else {
            parts
        };
    }
    let by_comma: Vec<String> = answer
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    if by_comma.len() > 1 {
        by_comma
    } else {
        vec![answer.trim().to_string()]
    }
}

// ---------------------------------------------------------------------------
// Benchmark harness
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchMode {
    Base,
    Cot,
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub mode: BenchMode,
    pub parallelism: usize,
    /// Zeroes recorded latencies so report bytes are run-independent.
    pub deterministic_timing: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            mode: BenchMode::Base,
            parallelism: 1,
            deterministic_timing: false,
        }
    }
}

/// In iterative mode a question may spend at most 8 calls: 2 amortized
/// identification + 3 searching + 3 answering.
pub const COT_CALL_BUDGET: u32 = 8;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExampleResult {
    pub example_id: String,
    pub question: String,
    pub predicted: Vec<String>,
    pub gold: Vec<String>,
    pub correct: bool,
    pub iterations: u32,
    pub llm_calls: u32,
    pub latency_ms: u64,
    pub cypher_failed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_flag: Option<String>,
    pub budget_violation: bool,
}

#[derive(Debug, Serialize)]
pub struct BenchReport {
    pub examples: usize,
    /// Mean of `correct`; absent for an empty dataset.
    pub accuracy: Option<f64>,
    pub budget_violations: usize,
    pub by_error_flag: BTreeMap<String, usize>,
    pub per_example: Vec<ExampleResult>,
}

impl BenchReport {
    fn assemble(per_example: Vec<ExampleResult>) -> BenchReport {
        let examples = per_example.len();
        let accuracy = if examples == 0 {
            None
        } else {
            Some(per_example.iter().filter(|e| e.correct).count() as f64 / examples as f64)
        };
        let mut by_error_flag = BTreeMap::new();
        for e in &per_example {
            if let Some(flag) = &e.error_flag {
                *by_error_flag.entry(flag.clone()).or_insert(0) += 1;
            }
        }
        BenchReport {
            examples,
            accuracy,
            budget_violations: per_example.iter().filter(|e| e.budget_violation).count(),
            by_error_flag,
            per_example,
        }
    }

    /// One JSON line per example.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.per_example {
            out.push_str(&serde_json::to_string(e).expect("example serializes"));
            out.push('\n');
        }
        out
    }

    /// Fixed-format summary table.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        out.push_str("examples  accuracy  cypher_failed  budget_violations\n");
        let accuracy = self
            .accuracy
            .map(|a| format!("{a:.3}"))
            .unwrap_or_else(|| "n/a (0 examples)".to_string());
        out.push_str(&format!(
            "{:<9} {:<9} {:<14} {}\n",
            self.examples,
            accuracy,
            self.per_example.iter().filter(|e| e.cypher_failed).count(),
            self.budget_violations,
        ));
        if !self.by_error_flag.is_empty() {
            out.push_str("error flags:");
            for (flag, n) in &self.by_error_flag {
                out.push_str(&format!(" {flag}={n}"));
            }
            out.push('\n');
        }
        out
    }
}

fn score_example(example: &DatasetExample, answer: &str) -> (Vec<String>, bool) {
    let predicted = split_prediction(answer, example.gold.len());
    let correct = denotation_match(&predicted, &example.gold);
    (predicted, correct)
}

fn run_one(
    engine: &Engine,
    ctx: &TableContext,
    example: &DatasetExample,
    example_id: String,
    identification_calls: u32,
    mode: BenchMode,
) -> ExampleResult {
    let start = Instant::now();
    let mut session = QuestionSession::new(engine, ctx);
    let outcome = match mode {
        BenchMode::Base => answer_base(&mut session, &example.question, example.task),
        BenchMode::Cot => answer_cot(&mut session, &example.question, example.task),
    };
    let latency_ms = start.elapsed().as_millis() as u64;
    let llm_calls = session.ledger.total() + identification_calls;

    match outcome {
        Ok((answer, retrieval)) => {
            let (predicted, correct) = score_example(example, &answer.answer);
            let error_flag = if ctx.used_fallback {
                Some("entity".to_string())
            } else if retrieval.cypher_failed() {
                Some("search".to_string())
            } else if !answer.warnings.is_empty() || answer.answer.is_empty() {
                Some("answer".to_string())
            } else {
                None
            };
            ExampleResult {
                example_id,
                question: example.question.clone(),
                predicted,
                gold: example.gold.clone(),
                correct,
                iterations: answer.iterations,
                llm_calls,
                latency_ms,
                cypher_failed: retrieval.cypher_failed(),
                error_flag,
                budget_violation: mode == BenchMode::Cot && llm_calls > COT_CALL_BUDGET,
            }
        }
        Err(e) => ExampleResult {
            example_id,
            question: example.question.clone(),
            predicted: vec![format!("<error: {e}>")],
            gold: example.gold.clone(),
            correct: false,
            iterations: 0,
            llm_calls,
            latency_ms,
            cypher_failed: false,
            error_flag: Some("answer".to_string()),
            budget_violation: mode == BenchMode::Cot && llm_calls > COT_CALL_BUDGET,
        },
    }
}

struct CachedContext {
    ctx: Result<TableContext, String>,
    /// Identification calls spent building this context; billed to the
    /// example that triggered the build, amortized for the rest.
    identification_calls: u32,
    builder: usize,
}

/// Runs the whole dataset: one graph and index build per table (cached),
/// one pipeline run per example, metrics per task kind. Per-example
/// failures are recorded, never fatal.
pub fn run_benchmark(
    engine: &Engine,
    dataset: &[DatasetExample],
    base_dir: &Path,
    options: &BenchOptions,
) -> BenchReport {
    let cache: Mutex<BTreeMap<PathBuf, std::sync::Arc<CachedContext>>> = Mutex::new(BTreeMap::new());
    let results: Mutex<Vec<Option<ExampleResult>>> = Mutex::new(vec![None; dataset.len()]);
    let next: AtomicUsize = AtomicUsize::new(0);
    let workers = options.parallelism.max(1).min(dataset.len().max(1));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, AtomicOrdering::SeqCst);
                if idx >= dataset.len() {
                    break;
                }
                let example = &dataset[idx];
                let example_id = format!("q{:04}", idx + 1);

                let table_path = if example.table_path.is_absolute() {
                    example.table_path.clone()
                } else {
                    base_dir.join(&example.table_path)
                };
                let entry = {
                    let mut cache = cache.lock().unwrap();
                    match cache.get(&table_path) {
                        Some(hit) => std::sync::Arc::clone(hit),
                        None => {
                            let ledger = crate::llm::CallLedger::new();
                            let built = load_table(
                                &table_path,
                                TableFormat::from_path(&table_path),
                            )
                            .map_err(|e| e.to_string())
                            .and_then(|table| {
                                TableContext::build(engine, &table, &ledger)
                                    .map_err(|e| e.to_string())
                            });
                            let identification_calls = ledger.count(CallTag::PrimaryKey)
                                + ledger.count(CallTag::Relations);
                            let entry = std::sync::Arc::new(CachedContext {
                                ctx: built,
                                identification_calls,
                                builder: idx,
                            });
                            cache.insert(table_path.clone(), std::sync::Arc::clone(&entry));
                            entry
                        }
                    }
                };

                let result = match &entry.ctx {
                    Ok(ctx) => {
                        let identification = if entry.builder == idx {
                            entry.identification_calls
                        } else {
                            0
                        };
                        run_one(engine, ctx, example, example_id, identification, options.mode)
                    }
                    Err(e) => ExampleResult {
                        example_id,
                        question: example.question.clone(),
                        predicted: vec![format!("<error: {e}>")],
                        gold: example.gold.clone(),
                        correct: false,
                        iterations: 0,
                        llm_calls: 0,
                        latency_ms: 0,
                        cypher_failed: false,
                        error_flag: Some("entity".to_string()),
                        budget_violation: false,
                    },
                };
                results.lock().unwrap()[idx] = Some(result);
            });
        }
    });

    let mut per_example: Vec<ExampleResult> = results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every example produced a result"))
        .collect();
    if options.deterministic_timing {
        for e in &mut per_example {
            e.latency_ms = 0;
        }
    }
    BenchReport::assemble(per_example)
}

// ---------------------------------------------------------------------------
// Search latency measurement
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub struct LatencyReport {
    pub entities: usize,
    pub queries: usize,
    pub median_ms: f64,
}

/// Times one fused search round (BM25 scoring + cosine scoring + fusion)
/// over a synthetic index; embedding calls happen before the clock starts.
pub fn measure_fused_search_latency(n_entities: usize, n_queries: usize) -> LatencyReport {
    use crate::graph::{Graph, NodeKind};
    use crate::retrieval::fuse;
    use crate::vector::{EmbeddingProvider, HashedBagProvider, VectorIndex};

    let mut graph = Graph::new();
    for i in 0..n_entities {
        // Overlapping token families so queries hit many documents.
        let value = format!(
            "record {} alpha{} beta{} gamma{} delta{}",
            i,
            i % 997,
            i % 101,
            i % 31,
            i % 7
        );
        graph.add_node(NodeKind::Entity, "Entity", value, Default::default(), Default::default());
    }
    let provider = HashedBagProvider::new(256);
    let bm25 = crate::lexical::Bm25Index::from_graph(&graph, crate::lexical::DEFAULT_K1, crate::lexical::DEFAULT_B);
    let vectors = VectorIndex::build(&graph, &provider, 0).expect("hashed provider is infallible");

    let questions: Vec<String> = (0..n_queries.max(1))
        .map(|q| format!("which record has alpha{} and beta{} gamma{}", q % 997, q % 101, q % 31))
        .collect();
    let question_vecs = provider.embed(&questions).expect("hashed provider is infallible");

    let cfg = crate::retrieval::SearchConfig::default();
    let entity_ids = graph.entity_ids();
    let mut times_ms: Vec<f64> = Vec::with_capacity(questions.len());
    for (question, qvec) in questions.iter().zip(&question_vecs) {
        let start = Instant::now();
        let raw = bm25.score(question);
        let bm25_scores: BTreeMap<crate::value::NodeId, f64> = entity_ids
            .iter()
            .map(|id| (*id, raw.get(id).copied().unwrap_or(0.0)))
            .collect();
        let semantic_scores = vectors.score(qvec).expect("dimensions match");
        let hits = fuse(&bm25_scores, &semantic_scores, &cfg);
        std::hint::black_box(hits.len());
        times_ms.push(start.elapsed().as_secs_f64() * 1e3);
    }
    times_ms.sort_by(f64::total_cmp);
    let median_ms = times_ms[times_ms.len() / 2];
    LatencyReport {
        entities: n_entities,
        queries: questions.len(),
        median_ms,
    }
}
