//! Differential testing of the machine against the declarative semantics.
//!
//! Each case is a random (pattern, term) pair. `Matched(θ, φ)` must be
//! derivable with exactly that witness; `NoMatch` must leave the bounded
//! witness enumeration empty. Random patterns stay inside a fragment where
//! the left-to-right machine and the order-free declarative rules agree:
//! existential binders are distinct, never free elsewhere and always bound
//! by their body; guard variables and match-constraint variables are bound
//! by the pattern they constrain.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::thread;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::declarative::{check_match_bounded, has_witness, Bounds, Verdict};
use crate::frontend::portable::pattern_to_json;
use crate::machine::{
    initial_state, Machine, MachineConfig, MachineState, Mutation, Outcome, Rule, Step,
    DEFAULT_STEP_BUDGET,
};
use crate::pattern::{
    free_pattern_vars, map_children, must_bind, number_sites, rename_binders, rename_free,
    unfold_mu, well_formed, Env, Expr, Guard, PatRef, Pattern,
};
use crate::rewrite::RuleSet;
use crate::term::{
    name, Annotations, AttributeInterpreter, FunSubstitution, Name, OperatorSignature,
    Substitution, Term,
};

/// Relative weights of App, Var, Alt, Guarded, Exists, MatchConstr, FunApp.
pub const PATTERN_WEIGHTS: [u32; 7] = [40, 15, 15, 10, 8, 7, 5];

/// Per-path limit on Alt/Guarded/Exists/MatchConstr nodes in random patterns.
const WRAPPER_LIMIT: usize = 3;

const VARS: [&str; 4] = ["v0", "v1", "v2", "v3"];
const FUN_VARS: [&str; 2] = ["F0", "F1"];
const ATTRS: [&str; 3] = ["rank", "eltType", "size"];

/// The six-operator signature used by the standalone fuzzer.
pub fn fuzz_signature() -> OperatorSignature {
    let mut sig = OperatorSignature::new();
    for (op, arity) in [("A", 0), ("B", 0), ("Neg", 1), ("Relu", 1), ("Add", 2), ("Mul", 2)] {
        sig.declare(op, arity).expect("distinct");
    }
    sig
}

/// Per-case generator stream: the same `(seed, index)` always gives the same case.
pub fn case_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CheckError {
    #[error("the signature has no nullary operator, so no finite terms exist")]
    NoLeafOperator,
}

fn require_leaf(sig: &OperatorSignature) -> Result<(), CheckError> {
    if sig.iter().any(|(_, a)| a == 0) {
        Ok(())
    } else {
        Err(CheckError::NoLeafOperator)
    }
}

#[derive(Debug, Clone)]
pub struct CheckConfig {
    pub cases: u64,
    pub seed: u64,
    pub max_depth: usize,
    pub step_budget: u64,
    pub bounds: Bounds,
    pub threads: usize,
    pub mutation: Option<Mutation>,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            cases: 1000,
            seed: 0,
            max_depth: 5,
            step_budget: DEFAULT_STEP_BUDGET,
            bounds: Bounds::default(),
            threads: thread::available_parallelism().map_or(1, |n| n.get()),
            mutation: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    /// The machine matched but its witness is not derivable.
    Unsound,
    /// The machine reported no match but a bounded witness exists.
    MissedWitness,
    /// The machine reached a state no rule applies to.
    Stuck,
}

impl ViolationKind {
    pub fn label(self) -> &'static str {
        match self {
            ViolationKind::Unsound => "unsound",
            ViolationKind::MissedWitness => "missed-witness",
            ViolationKind::Stuck => "stuck",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Violation {
    pub index: u64,
    pub seed: u64,
    pub kind: ViolationKind,
    pub pattern: PatRef,
    pub term: Term,
    pub outcome: Outcome,
}

impl Violation {
    /// A self-contained reproduction: seed, case index and the shrunk pair.
    pub fn bundle(&self) -> String {
        let outcome = match &self.outcome {
            Outcome::Matched(theta, phi) => format!("matched {}", show_witness(theta, phi)),
            Outcome::NoMatch => "no-match".to_string(),
            Outcome::BudgetExhausted => "budget-exhausted".to_string(),
            Outcome::StuckState(s) => format!("stuck {s}"),
        };
        format!(
            "violation kind={} seed={} case={}\n  pattern: {}\n  pattern_json: {}\n  term: {}\n  machine: {}",
            self.kind.label(),
            self.seed,
            self.index,
            self.pattern,
            pattern_to_json(&self.pattern),
            self.term,
            outcome
        )
    }
}

pub fn show_witness(theta: &Substitution, phi: &FunSubstitution) -> String {
    let th: Vec<String> = theta.iter().map(|(x, t)| format!("{x}={t}")).collect();
    let ph: Vec<String> = phi.iter().map(|(f, op)| format!("{f}={op}")).collect();
    format!("theta{{{}}} phi{{{}}}", th.join(", "), ph.join(", "))
}

#[derive(Debug, Clone, Default)]
pub struct CheckReport {
    pub cases: u64,
    pub matched: u64,
    pub no_match: u64,
    pub budget_exhausted: u64,
    /// Matched cases where the checker ran out of fuel before deciding.
    pub inconclusive: u64,
    /// Ruleset patterns left out because they fall outside the checked fragment.
    pub excluded_patterns: Vec<String>,
    pub violations: Vec<Violation>,
}

enum CaseResult {
    Matched,
    NoMatch,
    Budget,
    Inconclusive,
    Violation(Box<Violation>),
}

/// Checks one (pattern, term) pair. Returns the violation kind, if any.
pub fn check_case(
    sig: &OperatorSignature,
    interp: &dyn AttributeInterpreter,
    p: &PatRef,
    t: &Term,
    machine: MachineConfig,
    bounds: Bounds,
) -> (Outcome, Option<ViolationKind>, bool) {
    let outcome = Machine::new(interp, machine).run(p, t, None).outcome;
    let (violation, inconclusive) = match &outcome {
        Outcome::Matched(theta, phi) => match check_match_bounded(sig, interp, p, t, theta, phi, bounds) {
            Verdict::Derivable => (None, false),
            Verdict::NotDerivable => (Some(ViolationKind::Unsound), false),
            Verdict::FuelExhausted => (None, true),
        },
        Outcome::NoMatch => (
            has_witness(sig, interp, p, t, bounds).then_some(ViolationKind::MissedWitness),
            false,
        ),
        Outcome::BudgetExhausted => (None, false),
        Outcome::StuckState(_) => (Some(ViolationKind::Stuck), false),
    };
    (outcome, violation, inconclusive)
}

/// Runs `config.cases` random cases over the signature (and patterns) of `rs`.
pub fn run_check(
    rs: &RuleSet,
    interp: &dyn AttributeInterpreter,
    config: &CheckConfig,
) -> Result<CheckReport, CheckError> {
    let sig = rs.signature();
    require_leaf(sig)?;
    let (usable, excluded) = fragment_patterns(rs);
    let threads = config.threads.max(1);
    let machine = MachineConfig {
        step_budget: config.step_budget,
        mutation: config.mutation,
    };
    let run_one = |index: u64| -> CaseResult {
        let mut rng = case_rng(config.seed, index);
        let mut gen = Generator::new(sig, &usable, config.max_depth);
        let (p, t) = gen.case(&mut rng);
        let (outcome, violation, inconclusive) = check_case(sig, interp, &p, &t, machine, config.bounds);
        if let Some(kind) = violation {
            let (p, t) = shrink(sig, &p, &t, |p, t| {
                check_case(sig, interp, p, t, machine, config.bounds).1 == Some(kind)
            });
            let outcome = Machine::new(interp, machine).run(&p, &t, None).outcome;
            return CaseResult::Violation(Box::new(Violation {
                index,
                seed: config.seed,
                kind,
                pattern: p,
                term: t,
                outcome,
            }));
        }
        match outcome {
            Outcome::Matched(..) if inconclusive => CaseResult::Inconclusive,
            Outcome::Matched(..) => CaseResult::Matched,
            Outcome::NoMatch => CaseResult::NoMatch,
            _ => CaseResult::Budget,
        }
    };
    let mut results: Vec<(u64, CaseResult)> = thread::scope(|s| {
        let workers: Vec<_> = (0..threads as u64)
            .map(|w| {
                let run_one = &run_one;
                s.spawn(move || {
                    (w..config.cases)
                        .step_by(threads)
                        .map(|i| (i, run_one(i)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        workers
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    results.sort_by_key(|(i, _)| *i);
    let mut report = CheckReport {
        cases: config.cases,
        excluded_patterns: excluded,
        ..CheckReport::default()
    };
    for (_, r) in results {
        match r {
            CaseResult::Matched => report.matched += 1,
            CaseResult::NoMatch => report.no_match += 1,
            CaseResult::Budget => report.budget_exhausted += 1,
            CaseResult::Inconclusive => report.inconclusive += 1,
            CaseResult::Violation(v) => report.violations.push(*v),
        }
    }
    Ok(report)
}

fn fragment_patterns(rs: &RuleSet) -> (Vec<PatRef>, Vec<String>) {
    let mut usable = Vec::new();
    let mut excluded = Vec::new();
    for def in rs.patterns() {
        if in_fragment(&def.body) {
            usable.push(def.body.clone());
        } else {
            excluded.push(def.name.to_string());
        }
    }
    (usable, excluded)
}

/// Whether `p` lies in the fragment the checker compares exactly (see the
/// module documentation). `Mu` bodies are not inspected.
pub fn in_fragment(p: &Pattern) -> bool {
    fn binders(p: &Pattern, out: &mut Vec<Name>) {
        if let Pattern::Exists(x, _) = p {
            out.push(x.clone());
        }
        if !matches!(p, Pattern::Mu(_)) {
            p.children().iter().for_each(|c| binders(c, out));
        }
    }
    fn local(p: &Pattern) -> bool {
        let ok = match p {
            Pattern::Exists(x, body) => must_bind(body).contains(x),
            Pattern::Guarded(body, g) => g.vars().is_subset(&must_bind(body)),
            Pattern::MatchConstr { body, var, .. } => must_bind(body).contains(var),
            _ => true,
        };
        ok && (matches!(p, Pattern::Mu(_)) || p.children().iter().all(|c| local(c)))
    }
    let mut bs = Vec::new();
    binders(p, &mut bs);
    let distinct: BTreeSet<&Name> = bs.iter().collect();
    let (free, _) = free_pattern_vars(p);
    distinct.len() == bs.len() && bs.iter().all(|b| !free.contains(b)) && local(p)
}

// ---------------------------------------------------------------------------
// Generators

pub struct Generator<'a> {
    sig: &'a OperatorSignature,
    ops: Vec<(Name, usize)>,
    library: &'a [PatRef],
    max_depth: usize,
    next_binder: usize,
}

impl<'a> Generator<'a> {
    /// The signature must contain a nullary operator.
    /// `library` holds ruleset pattern bodies that may be embedded; they are
    /// the only source of recursive patterns.
    pub fn new(sig: &'a OperatorSignature, library: &'a [PatRef], max_depth: usize) -> Self {
        Generator {
            sig,
            ops: sig.iter().map(|(n, a)| (n.clone(), a)).collect(),
            library,
            max_depth,
            next_binder: 0,
        }
    }

    /// A pattern (numbered, in the fragment) and a term; half of the terms
    /// are built to follow the pattern's shape.
    pub fn case(&mut self, rng: &mut impl Rng) -> (PatRef, Term) {
        let p = if !self.library.is_empty() && rng.gen_bool(0.2) {
            let i = rng.gen_range(0..self.library.len());
            self.embed(&self.library[i].clone(), rng)
        } else {
            self.pattern(rng)
        };
        let t = if rng.gen_bool(0.5) {
            self.guided_term(&p, rng)
        } else {
            self.term(rng, self.max_depth)
        };
        (p, t)
    }

    pub fn pattern(&mut self, rng: &mut impl Rng) -> PatRef {
        let p = self.pattern_at(rng, 0, 0);
        number_sites(&Arc::new(p))
    }

    fn fresh_binder(&mut self) -> Name {
        self.next_binder += 1;
        name(&format!("e{}", self.next_binder))
    }

    fn ops_of_arity(&self, pred: impl Fn(usize) -> bool) -> Vec<&(Name, usize)> {
        self.ops.iter().filter(|(_, a)| pred(*a)).collect()
    }

    fn pattern_at(&mut self, rng: &mut impl Rng, depth: usize, wrappers: usize) -> Pattern {
        if depth >= self.max_depth {
            let leaves = self.ops_of_arity(|a| a == 0);
            if leaves.is_empty() || rng.gen_bool(0.5) {
                return Pattern::var(VARS[rng.gen_range(0..VARS.len())]);
            }
            return Pattern::App(leaves[rng.gen_range(0..leaves.len())].0.clone(), Vec::new());
        }
        let mut weights = PATTERN_WEIGHTS;
        if wrappers >= WRAPPER_LIMIT {
            for i in [2, 3, 4, 5] {
                weights[i] = 0;
            }
        }
        if self.ops_of_arity(|a| a > 0).is_empty() {
            weights[6] = 0;
        }
        let choice = WeightedIndex::new(weights).expect("positive weights").sample(rng);
        match choice {
            0 => {
                if !self.library.is_empty() && rng.gen_bool(0.1) {
                    let i = rng.gen_range(0..self.library.len());
                    return Arc::unwrap_or_clone(self.embed(&self.library[i].clone(), rng));
                }
                let (op, arity) = self.ops[rng.gen_range(0..self.ops.len())].clone();
                let args = (0..arity)
                    .map(|_| Arc::new(self.pattern_at(rng, depth + 1, wrappers)))
                    .collect();
                Pattern::App(op, args)
            }
            1 => Pattern::var(VARS[rng.gen_range(0..VARS.len())]),
            2 => Pattern::alt(
                self.pattern_at(rng, depth, wrappers + 1),
                self.pattern_at(rng, depth, wrappers + 1),
            ),
            3 => {
                let body = self.pattern_at(rng, depth, wrappers + 1);
                let bound: Vec<Name> = must_bind(&body).into_iter().collect();
                if bound.is_empty() {
                    return body;
                }
                let g = self.guard(rng, &bound, 2);
                Pattern::guarded(body, g)
            }
            4 => {
                let body = Arc::new(self.pattern_at(rng, depth, wrappers + 1));
                let bound: Vec<Name> = must_bind(&body)
                    .into_iter()
                    .filter(|x| VARS.contains(&&**x))
                    .collect();
                if bound.is_empty() {
                    return Arc::unwrap_or_clone(body);
                }
                let x = bound[rng.gen_range(0..bound.len())].clone();
                let e = self.fresh_binder();
                let env: Env = [(x, e.clone())].into_iter().collect();
                Pattern::Exists(e, rename_free(&body, &env))
            }
            5 => {
                let body = self.pattern_at(rng, depth, wrappers + 1);
                let bound: Vec<Name> = must_bind(&body).into_iter().collect();
                if bound.is_empty() {
                    return body;
                }
                let x = bound[rng.gen_range(0..bound.len())].clone();
                let c = self.pattern_at(rng, depth, wrappers + 1);
                Pattern::MatchConstr {
                    body: Arc::new(body),
                    var: x,
                    constraint: Arc::new(c),
                }
            }
            _ => {
                let arities: Vec<usize> = self.ops_of_arity(|a| a > 0).iter().map(|(_, a)| *a).collect();
                let arity = arities[rng.gen_range(0..arities.len())];
                let args = (0..arity)
                    .map(|_| Arc::new(self.pattern_at(rng, depth + 1, wrappers)))
                    .collect();
                Pattern::FunApp(name(FUN_VARS[rng.gen_range(0..FUN_VARS.len())]), args)
            }
        }
    }

    fn guard(&self, rng: &mut impl Rng, vars: &[Name], depth: usize) -> Guard {
        let attr = |rng: &mut dyn rand::RngCore| {
            let x = &vars[rng.gen_range(0..vars.len())];
            Expr::VarAttr(x.clone(), name(ATTRS[rng.gen_range(0..ATTRS.len())]))
        };
        let operand = |rng: &mut dyn rand::RngCore| {
            if rng.gen_bool(0.6) {
                Expr::lit(rng.gen_range(0..4))
            } else {
                attr(rng)
            }
        };
        match if depth == 0 { 0 } else { rng.gen_range(0..5) } {
            0 | 1 => {
                let l = attr(rng);
                let r = operand(rng);
                if rng.gen_bool(0.5) {
                    Guard::Eq(l, r)
                } else {
                    Guard::Lt(l, if rng.gen_bool(0.3) { Expr::Add(Box::new(r), Box::new(Expr::lit(1))) } else { r })
                }
            }
            2 => Guard::and(self.guard(rng, vars, depth - 1), self.guard(rng, vars, depth - 1)),
            3 => Guard::or(self.guard(rng, vars, depth - 1), self.guard(rng, vars, depth - 1)),
            _ => Guard::not(self.guard(rng, vars, depth - 1)),
        }
    }

    /// A library pattern with fresh binders and its parameters mapped to
    /// generator variables.
    fn embed(&mut self, p: &PatRef, rng: &mut impl Rng) -> PatRef {
        let body = rename_binders(p, &mut |_| {
            self.next_binder += 1;
            name(&format!("e{}", self.next_binder))
        });
        let (pv, fv) = free_pattern_vars(&body);
        let mut env = Env::new();
        for x in pv {
            env.insert(x, name(VARS[rng.gen_range(0..VARS.len())]));
        }
        for f in fv {
            env.insert(f, name(FUN_VARS[rng.gen_range(0..FUN_VARS.len())]));
        }
        number_sites(&rename_free(&body, &env))
    }

    fn annotations(&self, rng: &mut impl Rng) -> Annotations {
        let mut ann = Annotations::new();
        if rng.gen_bool(0.5) {
            ann.insert(name("rank"), rng.gen_range(0..4));
        }
        if rng.gen_bool(0.3) {
            ann.insert(name("eltType"), rng.gen_range(0..2));
        }
        ann
    }

    /// A random term of depth at most `depth`.
    pub fn term(&self, rng: &mut impl Rng, depth: usize) -> Term {
        let candidates = if depth == 0 {
            self.ops_of_arity(|a| a == 0)
        } else {
            self.ops.iter().collect()
        };
        let (op, arity) = candidates[rng.gen_range(0..candidates.len())].clone();
        let children = (0..arity).map(|_| self.term(rng, depth.saturating_sub(1))).collect();
        Term::from_parts(op, children, self.annotations(rng))
    }

    /// A term shaped after `p`: alternates are chosen at random, variables
    /// are instantiated consistently and recursive patterns are unfolded a
    /// few times.
    pub fn guided_term(&self, p: &Pattern, rng: &mut impl Rng) -> Term {
        let mut theta = BTreeMap::new();
        let mut phi = BTreeMap::new();
        self.guided(p, rng, &mut theta, &mut phi, 0, 4)
    }

    fn guided(
        &self,
        p: &Pattern,
        rng: &mut impl Rng,
        theta: &mut BTreeMap<Name, Term>,
        phi: &mut BTreeMap<Name, Name>,
        depth: usize,
        unfoldings: usize,
    ) -> Term {
        let remaining = self.max_depth.saturating_sub(depth);
        match p {
            Pattern::Var(x) => theta
                .entry(x.clone())
                .or_insert_with(|| self.term(rng, remaining.min(2)))
                .clone(),
            Pattern::App(op, args) if depth < self.max_depth || args.is_empty() => {
                let children = args
                    .iter()
                    .map(|a| self.guided(a, rng, theta, phi, depth + 1, unfoldings))
                    .collect();
                Term::from_parts(op.clone(), children, self.annotations(rng))
            }
            Pattern::FunApp(f, args) if depth < self.max_depth => {
                let op = match phi.get(f) {
                    Some(op) if self.sig.arity(op) == Some(args.len()) => Some(op.clone()),
                    _ => {
                        let ops = self.ops_of_arity(|a| a == args.len());
                        (!ops.is_empty()).then(|| ops[rng.gen_range(0..ops.len())].0.clone())
                    }
                };
                let Some(op) = op else {
                    return self.term(rng, remaining);
                };
                phi.entry(f.clone()).or_insert_with(|| op.clone());
                let children = args
                    .iter()
                    .map(|a| self.guided(a, rng, theta, phi, depth + 1, unfoldings))
                    .collect();
                Term::from_parts(op, children, self.annotations(rng))
            }
            Pattern::Alt(l, r) => {
                let side = if rng.gen_bool(0.5) { l } else { r };
                self.guided(side, rng, theta, phi, depth, unfoldings)
            }
            Pattern::Guarded(body, _) | Pattern::Exists(_, body) => {
                self.guided(body, rng, theta, phi, depth, unfoldings)
            }
            Pattern::MatchConstr {
                body,
                var,
                constraint,
            } => {
                if !theta.contains_key(var) {
                    let c = self.guided(constraint, rng, theta, phi, depth, unfoldings);
                    theta.insert(var.clone(), c);
                }
                self.guided(body, rng, theta, phi, depth, unfoldings)
            }
            Pattern::Mu(mu) if unfoldings > 0 => {
                self.guided(&unfold_mu(mu), rng, theta, phi, depth, unfoldings - 1)
            }
            _ => self.term(rng, remaining),
        }
    }
}

/// A random term with exactly `nodes` nodes when the signature has a unary
/// operator, and close to it otherwise. Binary operators are preferred so
/// depth stays logarithmic in expectation.
pub fn random_term_of_size(sig: &OperatorSignature, nodes: usize, rng: &mut impl Rng) -> Term {
    let ops: Vec<(Name, usize)> = sig.iter().map(|(n, a)| (n.clone(), a)).collect();
    let by_arity = |a: usize| -> Vec<&Name> { ops.iter().filter(|(_, k)| *k == a).map(|(n, _)| n).collect() };
    let leaves = by_arity(0);
    let inner: Vec<(usize, Vec<&Name>)> = (1..=ops.iter().map(|(_, a)| *a).max().unwrap_or(0))
        .map(|a| (a, by_arity(a)))
        .filter(|(_, v)| !v.is_empty())
        .collect();
    assert!(!leaves.is_empty(), "signature needs a nullary operator");

    // children are built before parents, so an explicit stack avoids deep recursion
    enum Task {
        Build(usize),
        Assemble(Name, usize),
    }
    let mut tasks = vec![Task::Build(nodes.max(1))];
    let mut done: Vec<Term> = Vec::new();
    while let Some(task) = tasks.pop() {
        match task {
            Task::Build(n) => {
                let fitting: Vec<&(usize, Vec<&Name>)> = inner.iter().filter(|(a, _)| *a < n).collect();
                if n == 1 || fitting.is_empty() {
                    let op = leaves[rng.gen_range(0..leaves.len())].clone();
                    done.push(Term::from_parts(op, vec![], Annotations::new()));
                    continue;
                }
                let (arity, names) = if rng.gen_bool(0.8) {
                    fitting[fitting.len() - 1]
                } else {
                    fitting[rng.gen_range(0..fitting.len())]
                };
                let op = names[rng.gen_range(0..names.len())].clone();
                let mut rest = n - 1;
                let mut sizes = Vec::with_capacity(*arity);
                for i in 0..*arity {
                    let left = arity - i - 1;
                    let s = if left == 0 { rest } else { rng.gen_range(1..=rest - left) };
                    sizes.push(s);
                    rest -= s;
                }
                tasks.push(Task::Assemble(op, *arity));
                for s in sizes.into_iter().rev() {
                    tasks.push(Task::Build(s));
                }
            }
            Task::Assemble(op, arity) => {
                let children = done.split_off(done.len() - arity);
                let mut ann = Annotations::new();
                ann.insert(name("rank"), rng.gen_range(1..4));
                ann.insert(name("eltType"), rng.gen_range(0..2));
                done.push(Term::from_parts(op, children, ann));
            }
        }
    }
    done.pop().expect("one root")
}

/// A random valid rule set over `sig`: a few generated patterns (possibly
/// embedding `library` bodies) with parameters = their free variables, and
/// rules whose guards and templates use those parameters.
pub fn random_ruleset(
    sig: &OperatorSignature,
    library: &[PatRef],
    rng: &mut impl Rng,
    max_depth: usize,
) -> RuleSet {
    let mut gen = Generator::new(sig, library, max_depth);
    let mut defs = Vec::new();
    let mut rules = Vec::new();
    for i in 0..rng.gen_range(1..=4) {
        let body = gen.pattern(rng);
        let (pv, fv) = free_pattern_vars(&body);
        let params: Vec<Name> = pv.iter().chain(fv.iter()).cloned().collect();
        let pname = name(&format!("P{i}"));
        if rng.gen_bool(0.7) {
            let clauses = (0..rng.gen_range(1..=2))
                .map(|_| {
                    let vars: Vec<Name> = pv.iter().cloned().collect();
                    let guard = if vars.is_empty() || rng.gen_bool(0.3) {
                        Guard::True
                    } else {
                        let mut g = gen.guard(rng, &vars, 2);
                        if rng.gen_bool(0.2) {
                            let big = Expr::Lit(num_bigint::BigInt::from(u64::MAX) * 1000);
                            g = Guard::and(g, Guard::Lt(Expr::VarAttr(vars[0].clone(), name("rank")), big));
                        }
                        g
                    };
                    crate::rewrite::RuleClause {
                        guard,
                        template: gen.template(rng, &pv, &fv, 3),
                    }
                })
                .collect();
            rules.push(crate::rewrite::Rule {
                pattern_name: pname.clone(),
                clauses,
            });
        }
        defs.push(crate::rewrite::PatternDef {
            name: pname,
            params,
            body,
        });
    }
    RuleSet::new(sig.clone(), defs, rules).expect("generated rule sets are valid")
}

impl Generator<'_> {
    fn template(
        &self,
        rng: &mut impl Rng,
        pv: &BTreeSet<Name>,
        fv: &BTreeSet<Name>,
        depth: usize,
    ) -> crate::rewrite::Template {
        use crate::rewrite::Template;
        if !pv.is_empty() && (depth == 0 || rng.gen_bool(0.3)) {
            let vars: Vec<&Name> = pv.iter().collect();
            return Template::Var(vars[rng.gen_range(0..vars.len())].clone());
        }
        let funs: Vec<(&Name, usize)> = if depth > 0 {
            fv.iter()
                .flat_map(|f| self.ops.iter().map(move |(_, a)| (f, *a)))
                .filter(|(_, a)| *a > 0)
                .collect()
        } else {
            Vec::new()
        };
        if !funs.is_empty() && rng.gen_bool(0.2) {
            let (f, arity) = funs[rng.gen_range(0..funs.len())];
            let args = (0..arity).map(|_| self.template(rng, pv, fv, depth - 1)).collect();
            return Template::FunApp(f.clone(), args);
        }
        let candidates = if depth == 0 {
            self.ops_of_arity(|a| a == 0)
        } else {
            self.ops.iter().collect()
        };
        let (op, arity) = candidates[rng.gen_range(0..candidates.len())].clone();
        let args = (0..arity)
            .map(|_| self.template(rng, pv, fv, depth.saturating_sub(1)))
            .collect();
        Template::App(op, args)
    }
}

// ---------------------------------------------------------------------------
// Shrinking

/// Greedily replaces the pattern by sub-patterns and the term by subterms
/// (or drops annotations) while `fails` keeps holding.
pub fn shrink(
    sig: &OperatorSignature,
    p: &PatRef,
    t: &Term,
    mut fails: impl FnMut(&PatRef, &Term) -> bool,
) -> (PatRef, Term) {
    let mut p = p.clone();
    let mut t = t.clone();
    loop {
        let next_p = pattern_candidates(&p).into_iter().find(|c| {
            let c = number_sites(c);
            well_formed(sig, &c).is_empty() && in_fragment(&c) && fails(&c, &t)
        });
        if let Some(c) = next_p {
            p = number_sites(&c);
            continue;
        }
        if let Some(c) = term_candidates(&t).into_iter().find(|c| fails(&p, c)) {
            t = c;
            continue;
        }
        return (p, t);
    }
}

fn pattern_candidates(p: &PatRef) -> Vec<PatRef> {
    if matches!(**p, Pattern::Mu(_)) {
        return Vec::new();
    }
    let kids = p.children();
    let mut out: Vec<PatRef> = kids.clone();
    for (i, kid) in kids.iter().enumerate() {
        for c in pattern_candidates(kid) {
            let mut at = 0;
            out.push(Arc::new(map_children(p, |orig| {
                let r = if at == i { c.clone() } else { orig.clone() };
                at += 1;
                r
            })));
        }
    }
    out
}

fn term_candidates(t: &Term) -> Vec<Term> {
    let mut out: Vec<Term> = t.children().to_vec();
    if !t.annotations().is_empty() {
        out.push(Term::from_parts(t.op().clone(), t.children().to_vec(), Annotations::new()));
    }
    for (i, kid) in t.children().iter().enumerate() {
        for c in term_candidates(kid) {
            let mut children = t.children().to_vec();
            children[i] = c;
            out.push(Term::from_parts(t.op().clone(), children, t.annotations().clone()));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Weakening and rule exclusivity

#[derive(Debug, Clone, Default)]
pub struct WeakeningReport {
    pub witnesses: usize,
    pub attempts: u64,
    pub violations: Vec<String>,
}

/// Takes derivable witnesses produced by the machine, extends each with one
/// to three fresh bindings, and checks the extension is still derivable.
pub fn weakening_check(
    rs: &RuleSet,
    interp: &dyn AttributeInterpreter,
    target: usize,
    seed: u64,
    max_depth: usize,
) -> Result<WeakeningReport, CheckError> {
    let sig = rs.signature();
    require_leaf(sig)?;
    let (usable, _) = fragment_patterns(rs);
    let bounds = Bounds::default();
    let mut report = WeakeningReport::default();
    let max_attempts = 200 * target as u64 + 1000;
    while report.witnesses < target && report.attempts < max_attempts {
        let mut rng = case_rng(seed, report.attempts);
        report.attempts += 1;
        let mut gen = Generator::new(sig, &usable, max_depth);
        let (p, t) = gen.case(&mut rng);
        let Outcome::Matched(theta, phi) = Machine::new(interp, MachineConfig::default()).run(&p, &t, None).outcome
        else {
            continue;
        };
        if check_match_bounded(sig, interp, &p, &t, &theta, &phi, bounds) != Verdict::Derivable {
            continue;
        }
        report.witnesses += 1;
        let (mut theta2, mut phi2) = (theta.clone(), phi.clone());
        let extra = rng.gen_range(1..=3);
        for i in 0..extra {
            if rng.gen_bool(0.8) {
                theta2.insert(name(&format!("_w{i}")), gen.term(&mut rng, 2));
            } else {
                let (op, _) = gen.ops[rng.gen_range(0..gen.ops.len())].clone();
                phi2.insert(name(&format!("_G{i}")), op);
            }
        }
        if check_match_bounded(sig, interp, &p, &t, &theta2, &phi2, bounds) != Verdict::Derivable {
            report.violations.push(format!(
                "pattern {p} term {t} witness {} extended {}",
                show_witness(&theta, &phi),
                show_witness(&theta2, &phi2)
            ));
        }
    }
    Ok(report)
}

/// Steps the machine and checks that in every non-terminal state exactly
/// one transition rule's premises hold, and that it is the rule taken.
/// Returns the number of steps checked.
pub fn check_rule_exclusivity(
    interp: &dyn AttributeInterpreter,
    p: &PatRef,
    t: &Term,
    budget: u64,
) -> Result<u64, String> {
    let machine = Machine::new(interp, MachineConfig::default());
    let mut state = initial_state(p.clone(), t.clone());
    let mut steps = 0;
    while let MachineState::Running(st) = &state {
        if steps >= budget {
            break;
        }
        let applicable: Vec<Rule> = Rule::ALL.iter().copied().filter(|r| r.applies(interp, st)).collect();
        match machine.step(st) {
            Step::Next(next, rule) => {
                if applicable != [rule] {
                    return Err(format!("step {steps}: took {rule}, applicable {applicable:?}"));
                }
                state = next;
            }
            Step::Stuck(desc) => {
                if !applicable.is_empty() {
                    return Err(format!("step {steps}: stuck ({desc}) but {applicable:?} apply"));
                }
                break;
            }
        }
        steps += 1;
    }
    Ok(steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::term::DefaultInterpreter;

    fn fuzz_rs() -> RuleSet {
        RuleSet::new(fuzz_signature(), vec![], vec![]).unwrap()
    }

    #[test]
    fn generated_patterns_are_well_formed_and_in_fragment() {
        let sig = fuzz_signature();
        for i in 0..500 {
            let mut rng = case_rng(7, i);
            let mut gen = Generator::new(&sig, &[], 5);
            let p = gen.pattern(&mut rng);
            assert!(well_formed(&sig, &p).is_empty(), "{p}");
            assert!(in_fragment(&p), "{p}");
        }
    }

    #[test]
    fn cases_are_reproducible() {
        let sig = fuzz_signature();
        let mk = || {
            let mut rng = case_rng(3, 11);
            Generator::new(&sig, &[], 5).case(&mut rng)
        };
        let (p1, t1) = mk();
        let (p2, t2) = mk();
        assert_eq!(p1, p2);
        assert_eq!(t1, t2);
    }

    #[test]
    fn fragment_rejects_shadowing_and_unbound_guards() {
        let shadow = Pattern::app(
            "Add",
            vec![
                Pattern::exists("x", Pattern::var("x")),
                Pattern::var("x"),
            ],
        );
        assert!(!in_fragment(&shadow));
        let unbound = Pattern::guarded(Pattern::var("x"), Guard::eq(Expr::var_attr("y", "rank"), Expr::lit(1)));
        assert!(!in_fragment(&unbound));
        let ok = Pattern::exists("e", Pattern::app("Neg", vec![Pattern::var("e")]));
        assert!(in_fragment(&ok));
    }

    #[test]
    fn small_check_is_clean_and_deterministic() {
        let rs = fuzz_rs();
        let config = CheckConfig {
            cases: 300,
            seed: 5,
            threads: 3,
            ..CheckConfig::default()
        };
        let a = run_check(&rs, &DefaultInterpreter, &config).unwrap();
        assert!(a.violations.is_empty(), "{}", a.violations[0].bundle());
        assert!(a.matched > 20 && a.no_match > 20, "{a:?}");
        let b = run_check(&rs, &DefaultInterpreter, &CheckConfig { threads: 1, ..config }).unwrap();
        assert_eq!((a.matched, a.no_match), (b.matched, b.no_match));
    }

    #[test]
    fn mutant_is_caught_and_shrunk() {
        let rs = fuzz_rs();
        let config = CheckConfig {
            cases: 300,
            seed: 1,
            mutation: Some(Mutation::SkipAltPush),
            ..CheckConfig::default()
        };
        let report = run_check(&rs, &DefaultInterpreter, &config).unwrap();
        assert!(!report.violations.is_empty());
        let v = &report.violations[0];
        assert_eq!(v.kind, ViolationKind::MissedWitness);
        assert!(v.pattern.size() <= 5, "{}", v.bundle());
    }

    #[test]
    fn sized_terms() {
        let sig = fuzz_signature();
        let mut rng = case_rng(0, 0);
        for n in [1, 2, 7, 100, 2000] {
            assert_eq!(random_term_of_size(&sig, n, &mut rng).size(), n);
        }
    }

    #[test]
    fn exclusivity_on_generated_cases() {
        let sig = fuzz_signature();
        for i in 0..200 {
            let mut rng = case_rng(9, i);
            let (p, t) = Generator::new(&sig, &[], 4).case(&mut rng);
            check_rule_exclusivity(&DefaultInterpreter, &p, &t, 10_000).unwrap();
        }
    }
}
