//! Answer generation: entity-paragraph context assembly, single-shot
//! answering, and the iterative search-answer loop.

use std::collections::BTreeMap;

use crate::graph::GraphView;
use crate::llm::{CallTag, LlmError, TemplateId};
use crate::retrieval::{QuestionSession, RetrievalResult};
use crate::table::TaskKind;

/// Appended to the answer prompt in the iterative mode.
pub const STEP_BY_STEP_SUFFIX: &str =
    "Please reason step by step before delivering the final answer.";

#[derive(Debug, Clone)]
pub struct Paragraph {
    pub heading: String,
    pub lines: Vec<String>,
}

/// The context block handed to the answer prompt: one paragraph per
/// retrieved entity (heading = primary key value, body = relation lines),
/// plus computed facts from Cypher execution.
#[derive(Debug, Clone, Default)]
pub struct AnswerContext {
    pub paragraphs: Vec<Paragraph>,
    pub computed_facts: String,
    pub cypher_failure_note: Option<String>,
}

impl AnswerContext {
    pub fn render(&self) -> String {
        let mut out = String::new();
        if self.paragraphs.is_empty() {
            out.push_str("No entities retrieved.\n");
        }
        for p in &self.paragraphs {
            out.push_str(&p.heading);
            out.push('\n');
            for line in &p.lines {
                out.push_str(line);
                out.push('\n');
            }
            out.push('\n');
        }
        if !self.computed_facts.is_empty() {
            out.push_str("Computed facts:\n");
            out.push_str(&self.computed_facts);
            if !self.computed_facts.ends_with('\n') {
                out.push('\n');
            }
        }
        if let Some(note) = &self.cypher_failure_note {
            out.push_str("Note: ");
            out.push_str(note);
            out.push('\n');
        }
        out
    }
}

/// One paragraph per hit, in retrieval order. Body lines follow table
/// column order: `relation: Label = value`.
pub fn build_context(result: &RetrievalResult, session: &QuestionSession) -> AnswerContext {
    let view = &session.overlay;
    let mut paragraphs = Vec::with_capacity(result.hits.len());
    for hit in &result.hits {
        let Some(node) = view.get_node(hit.entity_id) else {
            continue;
        };
        let mut edges = view.out_edges(hit.entity_id);
        edges.sort_by_key(|e| {
            view.get_node(e.dst)
                .map(|n| {
                    let col = n.addresses.iter().map(|a| a.col).min().unwrap_or(i32::MAX);
                    let row = n.addresses.iter().map(|a| a.row).min().unwrap_or(i32::MAX);
                    (col, row, n.id)
                })
                .unwrap_or((i32::MAX, i32::MAX, e.dst))
        });
        let lines = edges
            .iter()
            .filter_map(|e| {
                view.get_node(e.dst)
                    .map(|dst| format!("{}: {} = {}", e.rel, dst.label, dst.value))
            })
            .collect();
        paragraphs.push(Paragraph {
            heading: node.value.clone(),
            lines,
        });
    }

    let mut facts = String::new();
    if !result.cypher_rows.is_empty() {
        if !result.cypher_columns.is_empty() {
            facts.push_str(&result.cypher_columns.join("\t"));
            facts.push('\n');
        }
        for row in &result.cypher_rows {
            facts.push_str(&row.join("\t"));
            facts.push('\n');
        }
    }
    for created in &result.cypher_created {
        facts.push_str(&created.to_string());
        facts.push('\n');
    }

    AnswerContext {
        paragraphs,
        computed_facts: facts,
        cypher_failure_note: result
            .cypher_failure
            .as_ref()
            .map(|f| format!("the graph query failed: {f}")),
    }
}

#[derive(Debug, Clone)]
pub struct AnswerOutcome {
    pub answer: String,
    pub explanation: String,
    pub confidence: Option<f64>,
    pub iterations: u32,
    pub raw: String,
    pub warnings: Vec<String>,
}

/// Parses the reply contract: first non-empty line is the answer, a
/// `confidence: X` line is the confidence, remaining lines are the
/// explanation. Fact-verification answers map onto {entailed, refuted}.
pub fn parse_answer_reply(raw: &str, task: TaskKind) -> AnswerOutcome {
    let mut answer = String::new();
    let mut explanation_lines: Vec<String> = Vec::new();
    let mut confidence = None;
    let mut warnings = Vec::new();

    let conf_re = regex::Regex::new(
        r"(?i)^\s*confidence(?:\s*score)?\s*[:=]\s*([0-9]*\.?[0-9]+)\s*(%?)\s*\.?\s*$",
    )
    .expect("static regex");

    for line in raw.lines() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(caps) = conf_re.captures(trimmed) {
            if confidence.is_none() {
                let mut v: f64 = caps[1].parse().unwrap_or(f64::NAN);
                if !caps[2].is_empty() || (v > 1.0 && v <= 100.0) {
                    v /= 100.0;
                }
                if v.is_finite() {
                    confidence = Some(v.clamp(0.0, 1.0));
                }
            }
            continue;
        }
        if answer.is_empty() {
            let stripped = trimmed
                .strip_prefix("Answer:")
                .or_else(|| trimmed.strip_prefix("answer:"))
                .unwrap_or(trimmed)
                .trim();
            answer = stripped.to_string();
        } else {
            let stripped = trimmed
                .strip_prefix("Explanation:")
                .or_else(|| trimmed.strip_prefix("explanation:"))
                .unwrap_or(trimmed)
                .trim();
            explanation_lines.push(stripped.to_string());
        }
    }

    if task == TaskKind::FactVerification {
        let token: String = answer
            .chars()
            .filter(|c| c.is_alphanumeric())
            .collect::<String>()
            .to_lowercase();
        answer = if token.starts_with("yes") || token.starts_with("true") || token.starts_with("entail")
        {
            "entailed".to_string()
        } else if token.starts_with("no") || token.starts_with("false") || token.starts_with("refut")
        {
            "refuted".to_string()
        } else {
            warnings.push(format!(
                "unparseable fact-verification reply '{answer}'; defaulting to refuted"
            ));
            "refuted".to_string()
        };
    }

    AnswerOutcome {
        answer,
        explanation: explanation_lines.join(" "),
        confidence,
        iterations: 1,
        raw: raw.to_string(),
        warnings,
    }
}

/// Renders the answer prompt over the given context and asks once, at the
/// answer temperature.
pub fn answer_once(
    session: &QuestionSession,
    question: &str,
    context: &str,
    task: TaskKind,
    step_by_step: bool,
) -> Result<AnswerOutcome, LlmError> {
    let mut vars = BTreeMap::new();
    vars.insert("context", context.to_string());
    vars.insert("question", question.to_string());
    let mut prompt = session
        .engine
        .prompts
        .render(TemplateId::Answer, &vars)
        .map_err(|e| LlmError::BadResponse(format!("prompt render failed: {e}")))?;
    if step_by_step {
        if !prompt.ends_with('\n') {
            prompt.push('\n');
        }
        prompt.push_str(STEP_BY_STEP_SUFFIX);
    }
    let reply = session.engine.gateway.complete(
        &session.engine.chat_request(CallTag::Answer, prompt),
        &session.ledger,
    )?;
    Ok(parse_answer_reply(&reply, task))
}

/// The whole single-pass pipeline for one question: retrieve, build the
/// context, answer.
pub fn answer_base(
    session: &mut QuestionSession,
    question: &str,
    task: TaskKind,
) -> Result<(AnswerOutcome, RetrievalResult), LlmError> {
    let retrieval = session.retrieve(question);
    let context = build_context(&retrieval, session).render();
    let outcome = answer_once(session, question, &context, task, false)?;
    Ok((outcome, retrieval))
}

/// Iterative search-answer loop: up to `max_iterations` rounds, stopping
/// early when the answer is non-empty with confidence at or above the
/// threshold. On continuation the Cypher prompt is re-issued with the
/// previous failure or low-confidence answer appended as feedback; the
/// overlay persists across iterations.
pub fn answer_cot(
    session: &mut QuestionSession,
    question: &str,
    task: TaskKind,
) -> Result<(AnswerOutcome, RetrievalResult), LlmError> {
    let max_iterations = session.engine.cot.max_iterations.max(1);
    let threshold = session.engine.cot.confidence_threshold;

    let mut best: Option<(AnswerOutcome, RetrievalResult)> = None;
    let mut feedback: Option<String> = None;

    for iteration in 1..=max_iterations {
        let question_slot = match &feedback {
            Some(f) => format!("{question}\nPrevious attempt: {f}"),
            None => question.to_string(),
        };
        let retrieval = session.retrieve(&question_slot);
        let context = build_context(&retrieval, session).render();
        let mut outcome = answer_once(session, question, &context, task, true)?;
        outcome.iterations = iteration;

        let confident =
            outcome.confidence.map(|c| c >= threshold).unwrap_or(false) && !outcome.answer.is_empty();
        if confident {
            return Ok((outcome, retrieval));
        }

        feedback = Some(match &retrieval.cypher_failure {
            Some(failure) => failure.to_string(),
            None => format!("low-confidence answer: {}", outcome.answer),
        });

        let better = match &best {
            None => true,
            Some((b, _)) => outcome.confidence.unwrap_or(-1.0) > b.confidence.unwrap_or(-1.0),
        };
        if better {
            best = Some((outcome, retrieval));
        }
    }

    let (mut outcome, retrieval) = best.expect("at least one iteration ran");
    outcome.iterations = max_iterations;
    Ok((outcome, retrieval))
}
