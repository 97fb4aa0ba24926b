use corpm_web::{compile, compile_js, examples, match_term, match_term_js, rewrite_term, EXAMPLES, TRACE_CAP};
use serde_json::Value;

#[test]
fn every_example_compiles_and_matches() {
    for e in EXAMPLES {
        let c = compile(e.program).unwrap_or_else(|err| panic!("{}: {err}", e.name));
        assert!(c["patterns"].as_array().unwrap().iter().any(|p| p == e.pattern), "{}", e.name);
        let m = match_term(e.program, e.term, e.pattern, 100_000).unwrap();
        assert_eq!(m["outcome"], "matched", "{}", e.name);
        assert_eq!(m["steps"].as_u64().unwrap() as usize, m["trace"].as_array().unwrap().len(), "{}", e.name);
    }
    assert_eq!(examples().as_array().unwrap().len(), EXAMPLES.len());
}

#[test]
fn cublas_bindings_and_rewrite() {
    let e = &EXAMPLES[0];
    let m = match_term(e.program, e.term, "MMxyT", 100_000).unwrap();
    assert_eq!(m["theta"]["x"], "A{eltType=0, rank=2}()");
    let r = rewrite_term(e.program, e.term, 100).unwrap();
    assert_eq!(r["term"], "cublasMM_xyT_f32(A{eltType=0, rank=2}(), B{eltType=0, rank=2}())");
    assert_eq!(r["fires"]["MMxyT"], 1);
    assert_eq!(r["non_terminating"], false);
}

#[test]
fn trace_rows_have_state_sizes() {
    let e = EXAMPLES.iter().find(|e| e.name == "UnaryChain").unwrap();
    let m = match_term(e.program, e.term, "UnaryChain", 100_000).unwrap();
    let first = &m["trace"][0];
    assert_eq!(first["rule"], "ST-Match-Mu");
    for key in ["theta", "phi", "stack", "k"] {
        assert!(first[key].is_u64(), "{key}");
    }
    let max_stack = m["trace"].as_array().unwrap().iter().map(|r| r["stack"].as_u64().unwrap()).max().unwrap();
    assert_eq!(max_stack, m["max_stack"].as_u64().unwrap());
}

#[test]
fn long_traces_are_capped() {
    let program = "op f/1; op C/0;\npattern P(x) { return P(x); }\n";
    let m = match_term(program, "C", "P", 10_000).unwrap();
    assert_eq!(m["outcome"], "budget-exhausted");
    assert_eq!(m["trace"].as_array().unwrap().len(), TRACE_CAP);
    assert_eq!(m["trace_dropped"].as_u64().unwrap(), 10_000 - TRACE_CAP as u64);
}

#[test]
fn errors_are_reported_as_json() {
    let v: Value = serde_json::from_str(&compile_js("op f/1;\npattern P(x) { return g(x); }")).unwrap();
    assert_eq!(v["ok"], false);
    assert!(v["error"].as_str().unwrap().starts_with("2:"), "{v}");

    let v: Value = serde_json::from_str(&match_term_js("op C/0;", "D", "P", 10)).unwrap();
    assert_eq!(v["ok"], false);
    assert!(v["error"].as_str().unwrap().starts_with("term:"), "{v}");

    assert!(match_term("op C/0;", "C", "Nope", 10).unwrap_err().contains("unknown pattern"));
    assert!(match_term("op C/0;", "C", "Nope", 0).is_err());
    assert!(rewrite_term("op C/0;", "C", 0).is_err());
}
