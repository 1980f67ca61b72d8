//! Acceptance suite: every release criterion as one test, each printing a
//! single PASS/FAIL line (run with `--nocapture` to see them all).
//!
//! Headline benchmark accuracies depend on hosted LLMs and are out of
//! scope; these checks are property-based and fixture-anchored instead.

mod common;

use std::collections::BTreeMap;
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use common::run_differential;
use tunes_core::answer::answer_cot;
use tunes_core::config::Config;
use tunes_core::cypher::{run_query_in, Budget, Overlay};
use tunes_core::eval::{
    denotation_match, measure_fused_search_latency, normalize, run_benchmark, BenchMode,
    BenchOptions, COT_CALL_BUDGET,
};
use tunes_core::graph::{disambiguate, GraphView};
use tunes_core::lexical::{tokenize, Bm25Index, EntityDocument};
use tunes_core::retrieval::{fuse, QuestionSession, RunFlags, TableContext};
use tunes_core::table::{load_dataset, load_table, CellAddress, TableFormat, TaskKind};
use tunes_core::value::{NodeId, Value};
use tunes_core::vector::HashedBagProvider;

fn fixture(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn mock_engine(flags: RunFlags) -> tunes_core::retrieval::Engine {
    Config::default().build_engine(true, flags).unwrap()
}

fn show_context(engine: &tunes_core::retrieval::Engine) -> TableContext {
    let table = load_table(&fixture("shows.csv"), TableFormat::Csv).unwrap();
    let ledger = tunes_core::llm::CallLedger::new();
    TableContext::build(engine, &table, &ledger).unwrap()
}

#[test]
fn criterion_01_cypher_differential_suite() {
    let elapsed = run_differential(1000, 0x7ab1e5);
    assert!(
        elapsed.as_secs() < 30,
        "differential suite exceeded 30 s: {elapsed:?}"
    );
    println!(
        "ACCEPTANCE 01 PASS - 1000 random queries match the brute-force oracle exactly ({} ms)",
        elapsed.as_millis()
    );
}

#[test]
fn criterion_02_bundled_query_replay() {
    let engine = mock_engine(RunFlags::default());
    let ctx = show_context(&engine);

    // Oracle: row counts straight off the fixture grid (column 1 = Title).
    let table = load_table(&fixture("shows.csv"), TableFormat::Csv).unwrap();
    let count_rows = |title: &str| {
        (1..table.n_rows())
            .filter(|r| table.cell(*r, 1) == title)
            .count() as i64
    };
    let expected_difference = count_rows("Loose Women") - count_rows("This Morning");

    let hash_before = ctx.graph.content_hash();
    let mut overlay = Overlay::new(&ctx.graph);
    let outcome = run_query_in(
        include_str!("../fixtures/airing_difference.cypher"),
        &mut overlay,
        &Budget::default(),
    )
    .expect("bundled query text parses and executes verbatim");

    assert_eq!(outcome.created_node_ids.len(), 4, "4 created nodes");
    assert_eq!(outcome.created_rel_count, 3, "3 created relationships");
    let diff_node = overlay.get_node(outcome.created_node_ids[2]).unwrap();
    assert_eq!(
        diff_node.props.get("difference"),
        Some(&Value::Int(expected_difference)),
        "difference equals the grid oracle"
    );
    assert_eq!(ctx.graph.content_hash(), hash_before, "base graph untouched");
    println!(
        "ACCEPTANCE 02 PASS - bundled airing-difference query replays verbatim, difference = {expected_difference}, \
         4 nodes / 3 relationships created, base hash unchanged"
    );
}

#[test]
fn criterion_03_disambiguation_fixture() {
    let engine = mock_engine(RunFlags::default());
    let ctx = show_context(&engine);
    let years_2010: Vec<_> = ctx
        .graph
        .nodes()
        .filter(|n| n.label == "Year" && n.value == "2010")
        .collect();
    assert_eq!(years_2010.len(), 1, "exactly one merged 2010 node");
    let expected: std::collections::BTreeSet<CellAddress> = [(1, 0), (2, 0), (3, 0)]
        .iter()
        .map(|(r, c)| CellAddress::new(*r, *c))
        .collect();
    assert_eq!(years_2010[0].addresses, expected, "exactly the three cited cells");

    // idempotence on the already-disambiguated graph
    let mut graph = ctx.graph.clone();
    let provider = HashedBagProvider::new(256);
    let before = graph.to_json();
    let report = disambiguate(&mut graph, Some(&provider), 0.95).unwrap();
    assert_eq!(report.merges, 0);
    assert_eq!(graph.to_json(), before);
    println!(
        "ACCEPTANCE 03 PASS - the three 2010 cells merge into one node at (1,0),(2,0),(3,0); \
         disambiguation is idempotent"
    );
}

#[test]
fn criterion_04_bm25_formula_oracle() {
    // Independent straight-line implementation of the formula.
    fn oracle(docs: &[Vec<String>], query: &[String], target: usize, k1: f64, b: f64) -> f64 {
        let n = docs.len() as f64;
        let avgdl = docs.iter().map(|d| d.len() as f64).sum::<f64>() / n;
        let dl = docs[target].len() as f64;
        let mut score = 0.0;
        for q in query {
            let df = docs.iter().filter(|d| d.contains(q)).count() as f64;
            if df == 0.0 {
                continue;
            }
            let f = docs[target].iter().filter(|t| *t == q).count() as f64;
            if f == 0.0 {
                continue;
            }
            let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
            score += idf * f * (k1 + 1.0) / (f + k1 * (1.0 - b + b * dl / avgdl));
        }
        score
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0xb2500);
    let vocab: Vec<String> = (0..8).map(|i| format!("t{i}")).collect();
    let mut max_err = 0.0f64;
    for _ in 0..100 {
        let n_docs = rng.random_range(1..=10);
        let docs: Vec<Vec<String>> = (0..n_docs)
            .map(|_| {
                (0..rng.random_range(1..=8))
                    .map(|_| vocab[rng.random_range(0..vocab.len())].clone())
                    .collect()
            })
            .collect();
        let query: Vec<String> = (0..rng.random_range(1..=4))
            .map(|_| vocab[rng.random_range(0..vocab.len())].clone())
            .collect();
        let query_text = query.join(" ");
        assert_eq!(tokenize(&query_text), query, "tokenizer preserves the vocab");

        let index = Bm25Index::build(
            docs.iter()
                .enumerate()
                .map(|(i, d)| {
                    let mut terms = BTreeMap::new();
                    for t in d {
                        *terms.entry(t.clone()).or_insert(0u32) += 1;
                    }
                    EntityDocument {
                        entity_id: i as NodeId,
                        length: d.len() as u32,
                        terms,
                    }
                })
                .collect(),
            tunes_core::lexical::DEFAULT_K1,
            tunes_core::lexical::DEFAULT_B,
        );
        let scores = index.score(&query_text);
        for (i, doc) in docs.iter().enumerate() {
            let got = scores.get(&(i as NodeId)).copied().unwrap_or(0.0);
            let want = oracle(
                &docs,
                &query,
                i,
                tunes_core::lexical::DEFAULT_K1,
                tunes_core::lexical::DEFAULT_B,
            );
            assert!(got >= 0.0, "negative BM25 score for doc {doc:?}");
            let err = (got - want).abs();
            max_err = max_err.max(err);
            assert!(err <= 1e-9, "doc {i}: got {got}, oracle {want}");
        }
    }
    println!("ACCEPTANCE 04 PASS - BM25 agrees with the formula oracle on 100 corpora (max err {max_err:.2e}); all scores non-negative");
}

#[test]
fn criterion_05_fusion_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xf05e);

    // (a) degenerate weights reproduce the single-family orderings
    for _ in 0..20 {
        let n = rng.random_range(2..=12);
        let bm25: BTreeMap<NodeId, f64> =
            (0..n).map(|i| (i as NodeId, rng.random_range(0.0..5.0))).collect();
        let cos: BTreeMap<NodeId, f64> =
            (0..n).map(|i| (i as NodeId, rng.random_range(-1.0..1.0))).collect();

        let sort_family = |scores: &BTreeMap<NodeId, f64>| {
            let mut ids: Vec<NodeId> = scores.keys().copied().collect();
            ids.sort_by(|a, b| scores[b].total_cmp(&scores[a]).then(a.cmp(b)));
            ids
        };
        let cfg_b = tunes_core::retrieval::SearchConfig {
            w_semantic: 0.0,
            ..Default::default()
        };
        let got: Vec<NodeId> = fuse(&bm25, &cos, &cfg_b).iter().map(|h| h.entity_id).collect();
        assert_eq!(got, sort_family(&bm25), "(1,0) must equal the BM25 ordering");
        let cfg_s = tunes_core::retrieval::SearchConfig {
            w_fulltext: 0.0,
            ..Default::default()
        };
        let got: Vec<NodeId> = fuse(&bm25, &cos, &cfg_s).iter().map(|h| h.entity_id).collect();
        assert_eq!(got, sort_family(&cos), "(0,1) must equal the semantic ordering");

        // (b) positive scaling of raw BM25 leaves the fused ordering unchanged
        let cfg = tunes_core::retrieval::SearchConfig::default();
        let base: Vec<NodeId> = fuse(&bm25, &cos, &cfg).iter().map(|h| h.entity_id).collect();
        for scale in [0.25, 3.0, 1875.0] {
            let scaled: BTreeMap<NodeId, f64> = bm25.iter().map(|(k, v)| (*k, v * scale)).collect();
            let after: Vec<NodeId> = fuse(&scaled, &cos, &cfg).iter().map(|h| h.entity_id).collect();
            assert_eq!(base, after, "scaling by {scale} changed the ordering");
        }
    }

    // (c) |fusion hits| = min(K, #entities) across K in {1, 3, 50}
    for k in [1usize, 3, 50] {
        let mut cfg = Config::default();
        cfg.search.k = k;
        let engine = cfg
            .build_engine(true, RunFlags { no_graph_search: true, ..Default::default() })
            .unwrap();
        let ctx = show_context(&engine);
        let entities = ctx.graph.entity_ids().len();
        let mut session = QuestionSession::new(&engine, &ctx);
        let result = session.retrieve("loose women 2010");
        let fusion_hits = result.hits.iter().filter(|h| h.via.fusion).count();
        assert_eq!(fusion_hits, k.min(entities), "K={k}");
    }
    println!("ACCEPTANCE 05 PASS - weight degeneration, scaling invariance, and K clamping all hold");
}

#[test]
fn criterion_06_deterministic_end_to_end() {
    let engine = mock_engine(RunFlags::default());
    let dataset = load_dataset(&fixture("shows_questions.jsonl")).unwrap();
    let opts = BenchOptions {
        mode: BenchMode::Base,
        parallelism: 1,
        deterministic_timing: true,
    };
    let r1 = run_benchmark(&engine, &dataset, &fixture(""), &opts);
    let r2 = run_benchmark(&engine, &dataset, &fixture(""), &opts);
    assert_eq!(r1.accuracy, Some(1.0), "mock benchmark scores accuracy 1.0");
    assert_eq!(r1.to_jsonl().into_bytes(), r2.to_jsonl().into_bytes(), "byte-identical reports");

    let ablated = mock_engine(RunFlags {
        no_graph_search: true,
        ..Default::default()
    });
    let r3 = run_benchmark(&ablated, &dataset, &fixture(""), &opts);
    assert_eq!(r3.examples, 6);
    assert!(
        r3.per_example.iter().all(|e| !e.predicted[0].starts_with("<error")),
        "fusion-only fallback answers every question"
    );
    println!("ACCEPTANCE 06 PASS - 6-question mock benchmark is byte-identical at accuracy 1.0; --no-graph-search completes every question");
}

#[test]
fn criterion_07_cot_call_budget() {
    let mut config = Config::default();
    config.llm.mock_rules = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures/cot_retry_rules.json")
        .to_string_lossy()
        .into_owned();
    let engine = config.build_engine(true, RunFlags::default()).unwrap();
    let table = load_table(&fixture("shows.csv"), TableFormat::Csv).unwrap();
    let identification = tunes_core::llm::CallLedger::new();
    let ctx = TableContext::build(&engine, &table, &identification).unwrap();

    let mut session = QuestionSession::new(&engine, &ctx);
    let (outcome, _) = answer_cot(
        &mut session,
        "How many more times does Loose Women air than This Morning?",
        TaskKind::Qa,
    )
    .unwrap();
    assert_eq!(outcome.iterations, 3, "scripted scenario takes all 3 iterations");
    let total = identification.total() + session.ledger.total();
    assert!(
        total <= COT_CALL_BUDGET,
        "per-question ledger {total} exceeds {COT_CALL_BUDGET}"
    );
    println!(
        "ACCEPTANCE 07 PASS - scripted 3-iteration question spent {total} of {COT_CALL_BUDGET} allowed LLM calls"
    );
}

#[test]
fn criterion_08_search_latency_soft_target() {
    let report = measure_fused_search_latency(10_000, 21);
    // Soft target: a miss warns but does not gate the build.
    if report.median_ms < 50.0 {
        println!(
            "ACCEPTANCE 08 PASS - median fused search over {} entities: {:.2} ms (< 50 ms)",
            report.entities, report.median_ms
        );
    } else {
        println!(
            "ACCEPTANCE 08 WARN - median fused search over {} entities: {:.2} ms (target < 50 ms); \
             soft criterion, not a gate",
            report.entities, report.median_ms
        );
    }
}

#[derive(Deserialize)]
struct NormPair {
    a: String,
    b: String,
    equal: bool,
}

#[test]
fn criterion_09_denotation_metric() {
    let pairs: Vec<NormPair> =
        serde_json::from_str(include_str!("../fixtures/normalization_pairs.json")).unwrap();
    assert_eq!(pairs.len(), 50);
    let mut passed = 0;
    for (i, p) in pairs.iter().enumerate() {
        let equal = normalize(&p.a) == normalize(&p.b);
        assert_eq!(
            equal, p.equal,
            "pair {i}: '{}' vs '{}' expected equal={}",
            p.a, p.b, p.equal
        );
        passed += 1;
    }

    // symmetry + order insensitivity over random shuffles
    let mut rng = ChaCha8Rng::seed_from_u64(0xde90);
    let pool: Vec<String> = ["5", "5.0", "a", "b", "2,010", "2010", "July 14, 2010", "x y"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for _ in 0..200 {
        let n = rng.random_range(1..=5);
        let mut gold: Vec<String> = (0..n)
            .map(|_| pool[rng.random_range(0..pool.len())].clone())
            .collect();
        let mut pred = gold.clone();
        pred.shuffle(&mut rng);
        assert!(denotation_match(&pred, &gold), "shuffle broke equality");
        assert_eq!(
            denotation_match(&pred, &gold),
            denotation_match(&gold, &pred),
            "asymmetric match"
        );
        gold.shuffle(&mut rng);
        let with_extra = {
            let mut v = gold.clone();
            v.push("unmatched-extra".to_string());
            v
        };
        assert!(!denotation_match(&with_extra, &gold));
    }
    println!("ACCEPTANCE 09 PASS - normalization fixture {passed}/50; denotation match symmetric and order-insensitive over 200 shuffles");
}

#[test]
fn criterion_10_ablation_structure() {
    // Row-oriented mode: |rows| relationship-free nodes, no identification.
    let engine = mock_engine(RunFlags {
        row_oriented: true,
        ..Default::default()
    });
    let table = load_table(&fixture("shows.csv"), TableFormat::Csv).unwrap();
    let ledger = tunes_core::llm::CallLedger::new();
    let ctx = TableContext::build(&engine, &table, &ledger).unwrap();
    assert_eq!(ctx.graph.entity_ids().len(), table.n_rows());
    assert_eq!(ctx.graph.edge_count(), 0);
    assert_eq!(ledger.total(), 0);

    // --no-semantic zeroes the semantic column of every hit.
    let engine = mock_engine(RunFlags {
        no_semantic: true,
        no_graph_search: true,
        ..Default::default()
    });
    let ctx = show_context(&engine);
    let mut session = QuestionSession::new(&engine, &ctx);
    let result = session.retrieve("loose women 2011");
    assert!(result.hits.iter().all(|h| h.semantic == 0.0));

    // --no-fulltext zeroes BM25; --no-graph-search leaves no cypher trace.
    let engine = mock_engine(RunFlags {
        no_fulltext: true,
        no_graph_search: true,
        ..Default::default()
    });
    let ctx = show_context(&engine);
    let mut session = QuestionSession::new(&engine, &ctx);
    let result = session.retrieve("loose women 2011");
    assert!(result.hits.iter().all(|h| h.bm25 == 0.0));
    assert!(result.cypher_query.is_none());

    println!("ACCEPTANCE 10 PASS - row-oriented, --no-semantic, --no-fulltext and --no-graph-search pipelines differ observably");
}
