#![allow(dead_code)]

use std::fs;
use std::path::PathBuf;

use corpm::frontend::{compile_source, parse_term};
use corpm::rewrite::RuleSet;
use corpm::term::Term;

pub fn fixture_path(file: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(file)
}

pub fn ruleset(file: &str) -> RuleSet {
    let text = fs::read_to_string(fixture_path(file)).unwrap();
    compile_source(&text).unwrap_or_else(|e| panic!("{file}: {e}"))
}

pub fn term(rs: &RuleSet, file: &str) -> Term {
    let text = fs::read_to_string(fixture_path(file)).unwrap();
    parse_term(rs.signature(), &text).unwrap_or_else(|e| panic!("{file}: {e}"))
}

pub fn parse(rs: &RuleSet, text: &str) -> Term {
    parse_term(rs.signature(), text).unwrap()
}
