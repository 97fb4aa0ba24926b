mod common;

use common::{parse, ruleset, term};
use corpm::declarative::{check_match, enumerate_witnesses, Bounds, Verdict, DEFAULT_FUEL};
use corpm::machine::{run_match, Outcome, DEFAULT_STEP_BUDGET};
use corpm::rewrite::{rewrite_fixpoint, RewriteConfig, RuleSet};
use corpm::term::{DefaultInterpreter, FunSubstitution, Substitution, Term};

fn run(rs: &RuleSet, pattern: &str, t: &Term) -> Outcome {
    let def = rs.pattern(pattern).unwrap();
    run_match(&DefaultInterpreter, &def.body, t, DEFAULT_STEP_BUDGET)
}

fn matched(rs: &RuleSet, pattern: &str, t: &Term) -> (Substitution, FunSubstitution) {
    match run(rs, pattern, t) {
        Outcome::Matched(theta, phi) => {
            let body = &rs.pattern(pattern).unwrap().body;
            let v = check_match(rs.signature(), &DefaultInterpreter, body, t, &theta, &phi, DEFAULT_FUEL);
            assert_eq!(v, Verdict::Derivable);
            (theta, phi)
        }
        other => panic!("{pattern} on {t}: {other:?}"),
    }
}

fn rewrite(rs: &RuleSet, t: &Term) -> Term {
    let (out, stats) = rewrite_fixpoint(rs, &DefaultInterpreter, t, RewriteConfig::default()).unwrap();
    assert!(!stats.non_terminating);
    out
}

#[test]
fn cublas_rewrites_by_element_type() {
    let rs = ruleset("cublas.pm");
    let f32 = rewrite(&rs, &term(&rs, "cublas_f32.term"));
    assert_eq!(
        f32.to_string(),
        "cublasMM_xyT_f32(A{eltType=0, rank=2}(), B{eltType=0, rank=2}())"
    );
    let i8 = rewrite(&rs, &term(&rs, "cublas_i8.term"));
    assert_eq!(
        i8.to_string(),
        "cublasMM_xyT_i8(A{eltType=1, rank=2}(), B{eltType=1, rank=2}())"
    );
    let mixed = term(&rs, "cublas_mixed.term");
    assert_eq!(rewrite(&rs, &mixed), mixed);
    // the pattern itself still matches; only the rules decline
    assert!(run(&rs, "MMxyT", &mixed).is_matched());
}

#[test]
fn cublas_binds_operands() {
    let rs = ruleset("cublas.pm");
    let t = term(&rs, "cublas_f32.term");
    let (theta, _) = matched(&rs, "MMxyT", &t);
    assert_eq!(theta.get("x").unwrap(), &t.children()[0]);
    assert_eq!(theta.get("y").unwrap(), &t.children()[1].children()[0]);
    let rank1 = parse(&rs, "MatMul(A{rank=1}, Trans(B{rank=2}))");
    assert_eq!(run(&rs, "MMxyT", &rank1), Outcome::NoMatch);
}

#[test]
fn gelu_alternates() {
    let rs = ruleset("gelu.pm");
    for file in ["gelu_div.term", "gelu_mul.term"] {
        let t = term(&rs, file);
        let (theta, _) = matched(&rs, "Gelu", &t);
        assert_eq!(theta.get("x").unwrap().to_string(), "X{rank=2}()");
        assert_eq!(rewrite(&rs, &t).to_string(), "FastGelu(X{rank=2}())");
    }
    let t = term(&rs, "gelu_div3.term");
    assert_eq!(run(&rs, "Gelu", &t), Outcome::NoMatch);
    assert!(enumerate_witnesses(rs.signature(), &DefaultInterpreter, &rs.pattern("Gelu").unwrap().body, &t, Bounds::default()).is_empty());
}

#[test]
fn gelu_requires_the_same_operand() {
    let rs = ruleset("gelu.pm");
    let t = parse(&rs, "Mul(Div(X{rank=2}, 2), Plus(1, Erf(Div(X{rank=3}, 1.41))))");
    assert_eq!(run(&rs, "Gelu", &t), Outcome::NoMatch);
}

fn tower(op: &str, depth: usize) -> Term {
    (0..depth).fold(Term::constant("C"), |t, _| Term::app(op, vec![t]))
}

#[test]
fn unary_chain_towers() {
    let rs = ruleset("unary_chain.pm");
    for depth in 1..=10 {
        let (theta, phi) = matched(&rs, "UnaryChain", &tower("RELU", depth));
        assert_eq!(theta.get("x").unwrap(), &Term::constant("C"), "depth {depth}");
        assert_eq!(phi.get("F").map(|f| &**f), Some("RELU"));
    }
    // the base alternate accepts the outer RELU alone; what fails is
    // reading the whole term as one tower down to the leaf
    let mixed = term(&rs, "unary_mixed.term");
    let (theta, _) = matched(&rs, "UnaryChain", &mixed);
    assert_eq!(theta.get("x").unwrap().to_string(), "GELU(C())");
    let body = &rs.pattern("UnaryChain").unwrap().body;
    let witnesses = enumerate_witnesses(rs.signature(), &DefaultInterpreter, body, &mixed, Bounds::default());
    assert!(!witnesses.is_empty());
    assert!(witnesses.iter().all(|(theta, _)| theta.get("x") != Some(&Term::constant("C"))));
}

#[test]
fn repeated_unary_collapses() {
    let rs = ruleset("unary_chain.pm");
    let t = term(&rs, "unary_chain.term");
    assert_eq!(rewrite(&rs, &t).to_string(), "RELU(C())");
    let mixed = term(&rs, "unary_mixed.term");
    assert_eq!(rewrite(&rs, &mixed), mixed);
}

#[test]
fn local_match_binds_root() {
    let rs = ruleset("local_match.pm");
    let shapes = [
        "g(f(leaf1), leaf2)",
        "g(f(f(leaf1)), g(leaf2, f(leaf1)))",
        "f(g(f(leaf1), f(leaf2)))",
        "leaf1",
    ];
    for s in shapes {
        let t = parse(&rs, s);
        let (theta, _) = matched(&rs, "P", &t);
        assert_eq!(theta.get("x").unwrap(), &t, "{s}");
    }
    let t = term(&rs, "local_match.term");
    let (_, phi) = matched(&rs, "P", &t);
    assert_eq!(phi.get("b").map(|f| &**f), Some("g"));
}

#[test]
fn pw_subgraph_as_written() {
    let rs = ruleset("pw_subgraph.pm");
    let t = term(&rs, "pw_subgraph.term");
    let (theta, phi) = matched(&rs, "PwSubgraph", &t);
    assert_eq!(theta.get("x").unwrap(), &t);
    assert_eq!(phi.get("UnaryOp").map(|f| &**f), Some("Relu"));
    // x is the root of the chain, so the argument of PwSubgraph constrains
    // the root: MatMulEpilog only accepts a bare product
    assert_eq!(run(&rs, "MatMulEpilog", &t), Outcome::NoMatch);
    let bare = parse(&rs, "MatMul(A, B)");
    let (theta, _) = matched(&rs, "MatMulEpilog", &bare);
    assert_eq!(theta.get("a").unwrap(), &Term::constant("A"));
}

#[test]
fn fmha_fires() {
    let rs = ruleset("fmha.pm");
    let t = term(&rs, "fmha.term");
    let (out, stats) = rewrite_fixpoint(&rs, &DefaultInterpreter, &t, RewriteConfig::default()).unwrap();
    assert_eq!(out.to_string(), "Add(FMHA(Q(), K(), V(), S()), Relu(V()))");
    assert_eq!(stats.fires.get("Attention"), Some(&1));
    assert_eq!(stats.fires.get("DoubleRelu"), Some(&1));
    let plain = parse(&rs, "MatMul(Softmax(MatMul(Q, Trans(K))), V)");
    assert_eq!(rewrite(&rs, &plain).to_string(), "FMHA(Q(), K(), V(), LitNat_1())");
}

#[test]
fn selfloop_reports_non_termination() {
    let rs = ruleset("selfloop.pm");
    let t = term(&rs, "selfloop.term");
    let config = RewriteConfig { pass_limit: 8, ..RewriteConfig::default() };
    let (out, stats) = rewrite_fixpoint(&rs, &DefaultInterpreter, &t, config).unwrap();
    assert_eq!(out, t);
    assert!(stats.non_terminating);
    assert_eq!(stats.fires.get("Loop"), Some(&8));
}

#[test]
fn divergent_pattern_exhausts_budget() {
    let rs = ruleset("diverge.pm");
    let t = term(&rs, "diverge.term");
    let body = &rs.pattern("P").unwrap().body;
    assert_eq!(run_match(&DefaultInterpreter, body, &t, 10_000), Outcome::BudgetExhausted);
    let v = check_match(rs.signature(), &DefaultInterpreter, body, &t, &Substitution::new(), &FunSubstitution::new(), 16);
    assert_eq!(v, Verdict::FuelExhausted);
}

#[test]
fn fuzz_fixture_has_six_operators() {
    let rs = ruleset("fuzz.pm");
    assert_eq!(rs.signature().len(), 6);
    assert_eq!(rs.signature(), &corpm::differential::fuzz_signature());
}
