use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn scratch(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name)
}

fn corpm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_corpm"))
        .args(args)
        .env_remove("CORPM_SEED")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn compile_is_deterministic() {
    let (a, b) = (scratch("a.pmb"), scratch("b.pmb"));
    let src = fixture("cublas.pm");
    assert_eq!(corpm(&["compile", &src, a.to_str().unwrap()]).status.code(), Some(0));
    assert_eq!(corpm(&["compile", &src, b.to_str().unwrap()]).status.code(), Some(0));
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn compile_diagnostics_and_io() {
    let bad = scratch("bad.pm");
    fs::write(&bad, "op f/1;\npattern P(x) { return g(x); }\n").unwrap();
    let o = corpm(&["compile", bad.to_str().unwrap(), scratch("bad.pmb").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bad.pm:2:"), "{}", stderr(&o));

    let o = corpm(&["compile", "/definitely/not/here.pm", scratch("x.pmb").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn match_from_portable_file() {
    let pmb = scratch("cublas_match.pmb");
    corpm(&["compile", &fixture("cublas.pm"), pmb.to_str().unwrap()]);
    let o = corpm(&["match", pmb.to_str().unwrap(), &fixture("cublas_f32.term"), "--pattern", "MMxyT"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        stdout(&o),
        "Matched\n  x = A{eltType=0, rank=2}()\n  y = B{eltType=0, rank=2}()\n"
    );
}

#[test]
fn match_gelu_mul_variant_machine_format() {
    let o = corpm(&[
        "match",
        &fixture("gelu.pm"),
        &fixture("gelu_mul.term"),
        "--pattern",
        "Gelu",
        "--format",
        "machine",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.starts_with("outcome=matched\n"));
    assert!(out.contains("theta.x=X{rank=2}()\n"));
}

#[test]
fn match_exit_codes() {
    let constant = scratch("const.term");
    fs::write(&constant, "X").unwrap();
    let o = corpm(&["match", &fixture("gelu.pm"), constant.to_str().unwrap(), "--pattern", "Gelu"]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(stdout(&o), "NoMatch\n");

    let o = corpm(&["match", &fixture("gelu.pm"), constant.to_str().unwrap(), "--pattern", "Nope"]);
    assert_eq!(o.status.code(), Some(1));

    let o = corpm(&[
        "match",
        &fixture("diverge.pm"),
        &fixture("diverge.term"),
        "--pattern",
        "P",
        "--step-budget",
        "10000",
    ]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn match_all_subterms() {
    let o = corpm(&[
        "match",
        &fixture("fmha.pm"),
        &fixture("fmha.term"),
        "--pattern",
        "DoubleRelu",
        "--all-subterms",
        "--format",
        "machine",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("positions=14\nmatched=2\n"), "{out}");
    assert!(out.lines().any(|l| l.starts_with("site.root.1.outcome=matched")), "{out}");
}

#[test]
fn trace_goes_to_stderr() {
    let o = corpm(&[
        "match",
        &fixture("unary_chain.pm"),
        &fixture("unary_chain.term"),
        "--pattern",
        "UnaryChain",
        "--trace",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let err = stderr(&o);
    let first = err.lines().next().unwrap();
    assert_eq!(first, "rule=ST-Match-Mu theta=0 phi=0 stack=0 k=1");
    assert!(err.lines().all(|l| l.starts_with("rule=")));
    assert!(!stdout(&o).contains("rule="));
}

#[test]
fn rewrite_cublas_and_selfloop() {
    let o = corpm(&["rewrite", &fixture("cublas.pm"), &fixture("cublas_f32.term")]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("cublasMM_xyT_f32(A{eltType=0, rank=2}(), B{eltType=0, rank=2}())\n"));

    let o = corpm(&[
        "rewrite",
        &fixture("selfloop.pm"),
        &fixture("selfloop.term"),
        "--pass-limit",
        "16",
        "--format",
        "machine",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("non_terminating=true\n"));
    assert!(out.contains("fires.Loop=16\n"));
}

#[test]
fn rewrite_with_empty_ruleset_echoes() {
    let empty = scratch("empty.pm");
    fs::write(&empty, "op f/1; op C/0;\n").unwrap();
    let o = corpm(&["rewrite", empty.to_str().unwrap(), &fixture("selfloop.term"), "--format", "machine"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("term=f(C())\nfires=0\n"));
}

#[test]
fn check_clean_and_mutant() {
    let o = corpm(&["check", &fixture("fuzz.pm"), "--cases", "300", "--seed", "4", "--format", "machine"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("violations=0\n"));

    let o = corpm(&["check", &fixture("fuzz.pm"), "--cases", "300", "--seed", "4", "--mutant"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("violation kind="));

    let o = corpm(&["check", &fixture("fuzz.pm"), "--cases", "0"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn check_seed_from_environment() {
    let run = |env: Option<&str>, flag: &str| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_corpm"));
        cmd.args(["check", &fixture("fuzz.pm"), "--cases", "100", "--seed", flag, "--format", "machine"]);
        match env {
            Some(v) => cmd.env("CORPM_SEED", v),
            None => cmd.env_remove("CORPM_SEED"),
        };
        cmd.output().unwrap()
    };
    let by_env = stdout(&run(Some("11"), "3"));
    let by_flag = stdout(&run(None, "11"));
    assert!(by_env.contains("seed=11\n"));
    assert_eq!(by_env, by_flag);
    assert_eq!(run(Some("eleven"), "3").status.code(), Some(1));
}

#[test]
fn bench_reports_and_rejects_zero_trials() {
    let o = corpm(&[
        "bench",
        &fixture("fmha.pm"),
        "--nodes",
        "1",
        "--trials",
        "2",
        "--format",
        "machine",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("trials=2\n"));
    assert!(out.contains("median_ms="));
    assert!(out.contains("fires=0\n"));

    let o = corpm(&["bench", &fixture("fmha.pm"), "--trials", "0"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn invalid_config_is_exit_one() {
    let o = corpm(&["rewrite", &fixture("fmha.pm"), &fixture("fmha.term"), "--step-budget", "0"]);
    assert_eq!(o.status.code(), Some(1));
    let o = corpm(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
}
