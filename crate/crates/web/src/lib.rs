//! Browser demo: compile a `.pm` program, match a pattern with a step trace,
//! and rewrite a term. Every entry point returns a JSON string.

use corpm::frontend::{compile_source, parse_term, serialize_ruleset};
use corpm::machine::{Machine, MachineConfig, Outcome, TraceEvent};
use corpm::rewrite::{rewrite_fixpoint, RewriteConfig, RuleSet};
use corpm::term::{DefaultInterpreter, Term};
use serde_json::{json, Map, Value};
use wasm_bindgen::prelude::*;

/// Trace events kept for the chart; later steps are counted but dropped.
pub const TRACE_CAP: usize = 4000;

pub struct Example {
    pub name: &'static str,
    pub program: &'static str,
    pub term: &'static str,
    pub pattern: &'static str,
}

pub const EXAMPLES: &[Example] = &[
    Example {
        name: "cuBLAS",
        program: include_str!("../../core/fixtures/cublas.pm"),
        term: include_str!("../../core/fixtures/cublas_f32.term"),
        pattern: "MMxyT",
    },
    Example {
        name: "GELU",
        program: include_str!("../../core/fixtures/gelu.pm"),
        term: include_str!("../../core/fixtures/gelu_mul.term"),
        pattern: "Gelu",
    },
    Example {
        name: "UnaryChain",
        program: include_str!("../../core/fixtures/unary_chain.pm"),
        term: include_str!("../../core/fixtures/unary_chain.term"),
        pattern: "UnaryChain",
    },
    Example {
        name: "Local match",
        program: include_str!("../../core/fixtures/local_match.pm"),
        term: include_str!("../../core/fixtures/local_match.term"),
        pattern: "P",
    },
    Example {
        name: "FMHA",
        program: include_str!("../../core/fixtures/fmha.pm"),
        term: "MatMul(Softmax(Div(MatMul(Q, Trans(K)), S)), V)",
        pattern: "Attention",
    },
];

fn load(program: &str, term: &str) -> Result<(RuleSet, Term), String> {
    let rs = compile_source(program).map_err(|e| format!("program {e}"))?;
    let t = parse_term(rs.signature(), term).map_err(|e| format!("term: {e}"))?;
    Ok((rs, t))
}

pub fn examples() -> Value {
    EXAMPLES
        .iter()
        .map(|e| json!({"name": e.name, "program": e.program, "term": e.term.trim(), "pattern": e.pattern}))
        .collect()
}

pub fn compile(program: &str) -> Result<Value, String> {
    let rs = compile_source(program).map_err(|e| e.to_string())?;
    let pmb = String::from_utf8(serialize_ruleset(&rs)).expect("portable output is UTF-8");
    let patterns: Vec<&str> = rs.patterns().iter().map(|p| &*p.name).collect();
    Ok(json!({
        "ops": rs.signature().len(),
        "patterns": patterns,
        "rules": rs.rules().len(),
        "pmb": pmb,
    }))
}

pub fn match_term(program: &str, term: &str, pattern: &str, step_budget: u64) -> Result<Value, String> {
    if step_budget == 0 {
        return Err("step budget must be positive".into());
    }
    let (rs, t) = load(program, term)?;
    let def = rs.pattern(pattern).ok_or_else(|| format!("unknown pattern `{pattern}`"))?;
    let mut trace = Vec::new();
    let mut dropped = 0u64;
    let mut record = |e: &TraceEvent| {
        if trace.len() < TRACE_CAP {
            trace.push(json!({"rule": e.rule.name(), "theta": e.theta, "phi": e.phi, "stack": e.stack, "k": e.k}));
        } else {
            dropped += 1;
        }
    };
    let machine = Machine::new(&DefaultInterpreter, MachineConfig { step_budget, mutation: None });
    let report = machine.run(&def.body, &t, Some(&mut record));
    let (outcome, theta, phi) = match &report.outcome {
        Outcome::Matched(theta, phi) => (
            "matched",
            theta.iter().map(|(x, v)| (x.to_string(), json!(v.to_string()))).collect(),
            phi.iter().map(|(f, op)| (f.to_string(), json!(op.to_string()))).collect(),
        ),
        Outcome::NoMatch => ("no-match", Map::new(), Map::new()),
        Outcome::BudgetExhausted => ("budget-exhausted", Map::new(), Map::new()),
        Outcome::StuckState(s) => return Err(format!("stuck: {s}")),
    };
    Ok(json!({
        "outcome": outcome,
        "theta": theta,
        "phi": phi,
        "steps": report.steps,
        "max_stack": report.max_stack,
        "trace": trace,
        "trace_dropped": dropped,
    }))
}

pub fn rewrite_term(program: &str, term: &str, pass_limit: u64) -> Result<Value, String> {
    if pass_limit == 0 {
        return Err("pass limit must be positive".into());
    }
    let (rs, t) = load(program, term)?;
    let config = RewriteConfig { pass_limit, ..RewriteConfig::default() };
    let (out, stats) = rewrite_fixpoint(&rs, &DefaultInterpreter, &t, config).map_err(|e| e.to_string())?;
    Ok(json!({
        "term": out.to_string(),
        "fires": stats.fires,
        "traversals": stats.traversals,
        "vm_steps": stats.vm_steps,
        "non_terminating": stats.non_terminating,
    }))
}

fn wrap(r: Result<Value, String>) -> String {
    match r {
        Ok(v) => json!({"ok": true, "value": v}).to_string(),
        Err(e) => json!({"ok": false, "error": e}).to_string(),
    }
}

#[wasm_bindgen(js_name = examples)]
pub fn examples_js() -> String {
    examples().to_string()
}

#[wasm_bindgen(js_name = compile)]
pub fn compile_js(program: &str) -> String {
    wrap(compile(program))
}

#[wasm_bindgen(js_name = matchTerm)]
pub fn match_term_js(program: &str, term: &str, pattern: &str, step_budget: u32) -> String {
    wrap(match_term(program, term, pattern, step_budget.into()))
}

#[wasm_bindgen(js_name = rewriteTerm)]
pub fn rewrite_term_js(program: &str, term: &str, pass_limit: u32) -> String {
    wrap(rewrite_term(program, term, pass_limit.into()))
}
