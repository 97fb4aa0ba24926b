//! The declarative matching relation as an executable witness checker, plus
//! a bounded witness enumerator used to refute "no match" answers.

use std::collections::HashSet;
use std::sync::Arc;

use crate::pattern::{eval_guard, unfold_mu, Guard, PatRef, Pattern, Truth};
use crate::term::{AttributeInterpreter, FunSubstitution, Name, OperatorSignature, Substitution, Term};

pub const DEFAULT_FUEL: usize = 64;
pub const DEFAULT_TERM_DEPTH_BOUND: usize = 2;

/// Upper bound on the number of invented terms in an existential search pool.
pub const POOL_CAP: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Derivable,
    NotDerivable,
    FuelExhausted,
}

impl Verdict {
    fn and(self, other: impl FnOnce() -> Verdict) -> Verdict {
        match self {
            Verdict::NotDerivable => Verdict::NotDerivable,
            Verdict::Derivable => other(),
            Verdict::FuelExhausted => match other() {
                Verdict::NotDerivable => Verdict::NotDerivable,
                _ => Verdict::FuelExhausted,
            },
        }
    }

    fn or(self, other: impl FnOnce() -> Verdict) -> Verdict {
        match self {
            Verdict::Derivable => Verdict::Derivable,
            Verdict::NotDerivable => other(),
            Verdict::FuelExhausted => match other() {
                Verdict::Derivable => Verdict::Derivable,
                _ => Verdict::FuelExhausted,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bounds {
    /// Maximum number of nested μ-unfoldings along any derivation path.
    pub fuel: usize,
    /// Depth bound for terms invented as existential witnesses.
    pub term_depth_bound: usize,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            fuel: DEFAULT_FUEL,
            term_depth_bound: DEFAULT_TERM_DEPTH_BOUND,
        }
    }
}

/// All terms over `sig` of depth at most `depth` (leaves have depth 0), without
/// annotations, in a deterministic order, stopping after `cap` terms.
pub fn bounded_terms(sig: &OperatorSignature, depth: usize, cap: usize) -> Vec<Term> {
    let mut levels: Vec<Term> = Vec::new();
    for d in 0..=depth {
        let mut next = Vec::new();
        for (op, arity) in sig.iter() {
            if arity == 0 {
                next.push(Term::from_parts(op.clone(), Vec::new(), Default::default()));
                continue;
            }
            if d == 0 {
                continue;
            }
            let mut idx = vec![0usize; arity];
            if levels.is_empty() {
                continue;
            }
            'tuples: loop {
                let children = idx.iter().map(|&i| levels[i].clone()).collect();
                next.push(Term::from_parts(op.clone(), children, Default::default()));
                if next.len() >= cap {
                    break;
                }
                for slot in (0..arity).rev() {
                    idx[slot] += 1;
                    if idx[slot] < levels.len() {
                        continue 'tuples;
                    }
                    idx[slot] = 0;
                }
                break;
            }
            if next.len() >= cap {
                break;
            }
        }
        levels = next;
        if levels.len() >= cap {
            levels.truncate(cap);
            break;
        }
    }
    levels
}

/// Candidate existential witnesses: subterms of `t`, then invented terms.
pub fn witness_pool(sig: &OperatorSignature, t: &Term, term_depth_bound: usize) -> Vec<Term> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for s in t.subterms().into_iter().chain(bounded_terms(sig, term_depth_bound, POOL_CAP)) {
        if seen.insert(s.clone()) {
            out.push(s);
        }
    }
    out
}

/// Decides `θ, φ ⊢ p ≍ t` using at most `fuel` nested μ-unfoldings.
pub fn check_match(
    sig: &OperatorSignature,
    interp: &dyn AttributeInterpreter,
    p: &Pattern,
    t: &Term,
    theta: &Substitution,
    phi: &FunSubstitution,
    fuel: usize,
) -> Verdict {
    check_match_bounded(
        sig,
        interp,
        p,
        t,
        theta,
        phi,
        Bounds {
            fuel,
            ..Bounds::default()
        },
    )
}

pub fn check_match_bounded(
    sig: &OperatorSignature,
    interp: &dyn AttributeInterpreter,
    p: &Pattern,
    t: &Term,
    theta: &Substitution,
    phi: &FunSubstitution,
    bounds: Bounds,
) -> Verdict {
    let checker = Checker {
        sig,
        interp,
        phi,
        term_depth_bound: bounds.term_depth_bound,
        pool: Default::default(),
        root: t,
    };
    checker.check(p, t, theta, bounds.fuel)
}

struct Checker<'a> {
    sig: &'a OperatorSignature,
    interp: &'a dyn AttributeInterpreter,
    phi: &'a FunSubstitution,
    term_depth_bound: usize,
    pool: std::cell::OnceCell<Vec<Term>>,
    root: &'a Term,
}

impl Checker<'_> {
    fn pool(&self) -> &[Term] {
        self.pool
            .get_or_init(|| witness_pool(self.sig, self.root, self.term_depth_bound))
    }

    fn check(&self, p: &Pattern, t: &Term, theta: &Substitution, fuel: usize) -> Verdict {
        match p {
            Pattern::Var(x) => {
                if theta.get(x) == Some(t) {
                    Verdict::Derivable
                } else {
                    Verdict::NotDerivable
                }
            }
            Pattern::App(f, args) => {
                if t.op() != f || t.arity() != args.len() {
                    return Verdict::NotDerivable;
                }
                self.all(args, t.children(), theta, fuel)
            }
            Pattern::FunApp(fv, args) => match self.phi.get(fv) {
                Some(f) if f == t.op() && t.arity() == args.len() => {
                    self.all(args, t.children(), theta, fuel)
                }
                _ => Verdict::NotDerivable,
            },
            Pattern::Alt(l, r) => self
                .check(l, t, theta, fuel)
                .or(|| self.check(r, t, theta, fuel)),
            Pattern::Guarded(body, g) => self.check(body, t, theta, fuel).and(|| {
                if eval_guard(self.interp, theta, g) == Truth::True {
                    Verdict::Derivable
                } else {
                    Verdict::NotDerivable
                }
            }),
            Pattern::Exists(x, body) => {
                if theta.contains(x) {
                    return self.check(body, t, theta, fuel);
                }
                if !self.may_hold(body, t, theta, &mut vec![x.clone()]) {
                    return Verdict::NotDerivable;
                }
                let mut verdict = Verdict::NotDerivable;
                for candidate in self.pool() {
                    let mut extended = theta.clone();
                    extended.insert(x.clone(), candidate.clone());
                    verdict = verdict.or(|| self.check(body, t, &extended, fuel));
                    if verdict == Verdict::Derivable {
                        break;
                    }
                }
                verdict
            }
            Pattern::MatchConstr {
                body,
                var,
                constraint,
            } => self.check(body, t, theta, fuel).and(|| match theta.get(var) {
                Some(bound) => self.check(constraint, bound, theta, fuel),
                None => Verdict::NotDerivable,
            }),
            Pattern::Mu(mu) => {
                if fuel == 0 {
                    Verdict::FuelExhausted
                } else {
                    self.check(&unfold_mu(mu), t, theta, fuel - 1)
                }
            }
            Pattern::RecCall(..) => Verdict::NotDerivable,
        }
    }

    /// False only if `check` is NotDerivable for every binding of the
    /// `wild` variables. Recursive patterns are assumed to hold.
    fn may_hold(&self, p: &Pattern, t: &Term, theta: &Substitution, wild: &mut Vec<Name>) -> bool {
        match p {
            Pattern::Var(x) => wild.contains(x) || theta.get(x) == Some(t),
            Pattern::App(f, args) => {
                t.op() == f
                    && t.arity() == args.len()
                    && args.iter().zip(t.children()).all(|(a, c)| self.may_hold(a, c, theta, wild))
            }
            Pattern::FunApp(fv, args) => match self.phi.get(fv) {
                Some(f) if f == t.op() && t.arity() == args.len() => {
                    args.iter().zip(t.children()).all(|(a, c)| self.may_hold(a, c, theta, wild))
                }
                _ => false,
            },
            Pattern::Alt(l, r) => self.may_hold(l, t, theta, wild) || self.may_hold(r, t, theta, wild),
            Pattern::Guarded(body, g) => {
                self.may_hold(body, t, theta, wild)
                    && (g.vars().iter().any(|v| wild.contains(v)) || eval_guard(self.interp, theta, g) == Truth::True)
            }
            Pattern::Exists(x, body) => {
                if theta.contains(x) || wild.contains(x) {
                    return self.may_hold(body, t, theta, wild);
                }
                wild.push(x.clone());
                let out = self.may_hold(body, t, theta, wild);
                wild.pop();
                out
            }
            Pattern::MatchConstr {
                body,
                var,
                constraint,
            } => {
                self.may_hold(body, t, theta, wild)
                    && (wild.contains(var)
                        || theta.get(var).is_some_and(|bound| self.may_hold(constraint, bound, theta, wild)))
            }
            Pattern::Mu(_) => true,
            Pattern::RecCall(..) => false,
        }
    }

    fn all(&self, ps: &[PatRef], ts: &[Term], theta: &Substitution, fuel: usize) -> Verdict {
        let mut verdict = Verdict::Derivable;
        for (p, t) in ps.iter().zip(ts) {
            verdict = verdict.and(|| self.check(p, t, theta, fuel));
            if verdict == Verdict::NotDerivable {
                break;
            }
        }
        verdict
    }
}

// ---------------------------------------------------------------------------
// Enumeration

/// Every witness `(θ, φ)` of `p ≍ t` reachable within the bounds, without
/// duplicates. Variables are bound from the structure of `t` where possible
/// and otherwise drawn from [`witness_pool`]; existential binders are
/// included in θ.
pub fn enumerate_witnesses(
    sig: &OperatorSignature,
    interp: &dyn AttributeInterpreter,
    p: &Pattern,
    t: &Term,
    bounds: Bounds,
) -> Vec<(Substitution, FunSubstitution)> {
    let mut solver = Solver::new(sig, interp, t, bounds, false);
    solver.run(p, t);
    solver.results
}

/// Whether any witness exists within the bounds.
pub fn has_witness(
    sig: &OperatorSignature,
    interp: &dyn AttributeInterpreter,
    p: &Pattern,
    t: &Term,
    bounds: Bounds,
) -> bool {
    let mut solver = Solver::new(sig, interp, t, bounds, true);
    solver.run(p, t);
    !solver.results.is_empty()
}

#[derive(Clone)]
enum Goal {
    Match(PatRef, Term, usize),
    Guard(Arc<Guard>),
    Back(Name, PatRef, usize),
    Exists(Name),
}

#[derive(Clone)]
struct Branch {
    goals: Vec<Goal>,
    deferred: Vec<Goal>,
    existentials: Vec<Name>,
    theta: Substitution,
    phi: FunSubstitution,
}

struct Solver<'a> {
    interp: &'a dyn AttributeInterpreter,
    pool: Vec<Term>,
    fuel: usize,
    first_only: bool,
    seen: HashSet<(Substitution, FunSubstitution)>,
    results: Vec<(Substitution, FunSubstitution)>,
}

impl<'a> Solver<'a> {
    fn new(
        sig: &'a OperatorSignature,
        interp: &'a dyn AttributeInterpreter,
        t: &Term,
        bounds: Bounds,
        first_only: bool,
    ) -> Self {
        Solver {
            interp,
            pool: witness_pool(sig, t, bounds.term_depth_bound),
            fuel: bounds.fuel,
            first_only,
            seen: HashSet::new(),
            results: Vec::new(),
        }
    }

    fn done(&self) -> bool {
        self.first_only && !self.results.is_empty()
    }

    fn run(&mut self, p: &Pattern, t: &Term) {
        let branch = Branch {
            goals: vec![Goal::Match(Arc::new(p.clone()), t.clone(), self.fuel)],
            deferred: Vec::new(),
            existentials: Vec::new(),
            theta: Substitution::new(),
            phi: FunSubstitution::new(),
        };
        self.solve(branch);
    }

    fn solve(&mut self, mut b: Branch) {
        loop {
            if self.done() {
                return;
            }
            let Some(goal) = b.goals.pop() else {
                return self.finish(b);
            };
            match goal {
                Goal::Match(p, t, fuel) => match &*p {
                    Pattern::Var(x) => match b.theta.extend_consistent(x, &t) {
                        Some(th) => b.theta = th,
                        None => return,
                    },
                    Pattern::App(f, args) => {
                        if t.op() != f || t.arity() != args.len() {
                            return;
                        }
                        for (a, c) in args.iter().zip(t.children()).rev() {
                            b.goals.push(Goal::Match(a.clone(), c.clone(), fuel));
                        }
                    }
                    Pattern::FunApp(fv, args) => {
                        if t.arity() != args.len() {
                            return;
                        }
                        match b.phi.extend_consistent(fv, t.op()) {
                            Some(ph) => b.phi = ph,
                            None => return,
                        }
                        for (a, c) in args.iter().zip(t.children()).rev() {
                            b.goals.push(Goal::Match(a.clone(), c.clone(), fuel));
                        }
                    }
                    Pattern::Alt(l, r) => {
                        let mut left = b.clone();
                        left.goals.push(Goal::Match(l.clone(), t.clone(), fuel));
                        self.solve(left);
                        b.goals.push(Goal::Match(r.clone(), t, fuel));
                    }
                    Pattern::Guarded(body, g) => {
                        b.goals.push(Goal::Guard(g.clone()));
                        b.goals.push(Goal::Match(body.clone(), t, fuel));
                    }
                    Pattern::Exists(x, body) => {
                        b.goals.push(Goal::Exists(x.clone()));
                        b.goals.push(Goal::Match(body.clone(), t, fuel));
                    }
                    Pattern::MatchConstr {
                        body,
                        var,
                        constraint,
                    } => {
                        b.goals.push(Goal::Back(var.clone(), constraint.clone(), fuel));
                        b.goals.push(Goal::Match(body.clone(), t, fuel));
                    }
                    Pattern::Mu(mu) => {
                        if fuel == 0 {
                            return;
                        }
                        b.goals.push(Goal::Match(unfold_mu(mu), t, fuel - 1));
                    }
                    Pattern::RecCall(..) => return,
                },
                Goal::Guard(g) => {
                    if g.vars().iter().all(|x| b.theta.contains(x)) {
                        if eval_guard(self.interp, &b.theta, &g) != Truth::True {
                            return;
                        }
                    } else {
                        b.deferred.push(Goal::Guard(g));
                    }
                }
                Goal::Back(x, c, fuel) => match b.theta.get(&x) {
                    Some(bound) => {
                        let bound = bound.clone();
                        b.goals.push(Goal::Match(c, bound, fuel));
                    }
                    None => b.deferred.push(Goal::Back(x, c, fuel)),
                },
                Goal::Exists(x) => {
                    if !b.theta.contains(&x) {
                        b.existentials.push(x);
                    }
                }
            }
        }
    }

    /// Resolves deferred obligations, grounding variables over the pool.
    fn finish(&mut self, mut b: Branch) {
        if let Some(i) = b.deferred.iter().position(|g| ready(g, &b.theta)) {
            let g = b.deferred.remove(i);
            b.goals.push(g);
            return self.solve(b);
        }
        let pending = b
            .deferred
            .iter()
            .find_map(|g| first_unbound(g, &b.theta))
            .or_else(|| {
                b.existentials
                    .iter()
                    .find(|x| !b.theta.contains(x))
                    .cloned()
            });
        let Some(x) = pending else {
            if self.seen.insert((b.theta.clone(), b.phi.clone())) {
                self.results.push((b.theta, b.phi));
            }
            return;
        };
        let unconstrained = b.deferred.is_empty();
        for i in 0..self.pool.len() {
            if self.done() {
                return;
            }
            let mut next = b.clone();
            next.theta.insert(x.clone(), self.pool[i].clone());
            self.finish(next);
            if unconstrained && self.first_only {
                return;
            }
        }
    }
}

fn ready(g: &Goal, theta: &Substitution) -> bool {
    first_unbound(g, theta).is_none()
}

fn first_unbound(g: &Goal, theta: &Substitution) -> Option<Name> {
    match g {
        Goal::Guard(g) => g.vars().into_iter().find(|x| !theta.contains(x)),
        Goal::Back(x, ..) => (!theta.contains(x)).then(|| x.clone()),
        Goal::Match(..) | Goal::Exists(_) => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pattern::{number_sites, Expr};
    use crate::term::{name, DefaultInterpreter};

    fn sig() -> OperatorSignature {
        OperatorSignature::new()
            .with_op("MatMul", 2)
            .unwrap()
            .with_op("Trans", 1)
            .unwrap()
            .with_op("A", 0)
            .unwrap()
            .with_op("B", 0)
            .unwrap()
            .with_op("C", 0)
            .unwrap()
            .with_op("C1", 0)
            .unwrap()
            .with_op("C2", 0)
            .unwrap()
            .with_op("f", 2)
            .unwrap()
            .with_op("g", 1)
            .unwrap()
            .with_op("h", 1)
            .unwrap()
    }

    fn th(pairs: &[(&str, Term)]) -> Substitution {
        pairs.iter().map(|(k, v)| (name(k), v.clone())).collect()
    }

    fn c(op: &str) -> Term {
        Term::constant(op)
    }

    fn swap() -> Pattern {
        Pattern::alt(
            Pattern::app("f", vec![Pattern::var("x"), Pattern::var("y")]),
            Pattern::app("f", vec![Pattern::var("y"), Pattern::var("x")]),
        )
    }

    #[test]
    fn bounded_terms_counts() {
        let s = OperatorSignature::new()
            .with_op("C", 0)
            .unwrap()
            .with_op("u", 1)
            .unwrap()
            .with_op("b", 2)
            .unwrap();
        assert_eq!(bounded_terms(&s, 0, usize::MAX).len(), 1);
        // C, u(C), b(C,C)
        assert_eq!(bounded_terms(&s, 1, usize::MAX).len(), 3);
        // C + u(3) + b(9)
        assert_eq!(bounded_terms(&s, 2, usize::MAX).len(), 13);
        assert!(bounded_terms(&s, 2, usize::MAX).iter().all(|t| t.depth() <= 2));
        assert_eq!(bounded_terms(&s, 5, 10).len(), 10);
    }

    #[test]
    fn check_cublas_core() {
        let p = Pattern::app(
            "MatMul",
            vec![Pattern::var("x"), Pattern::app("Trans", vec![Pattern::var("y")])],
        );
        let t = Term::app("MatMul", vec![c("A"), Term::app("Trans", vec![c("B")])]);
        let theta = th(&[("x", c("A")), ("y", c("B"))]);
        let v = check_match(&sig(), &DefaultInterpreter, &p, &t, &theta, &FunSubstitution::new(), 64);
        assert_eq!(v, Verdict::Derivable);
        let wrong = th(&[("x", c("B")), ("y", c("B"))]);
        let v = check_match(&sig(), &DefaultInterpreter, &p, &t, &wrong, &FunSubstitution::new(), 64);
        assert_eq!(v, Verdict::NotDerivable);
    }

    #[test]
    fn check_clairvoyant_alternate() {
        let t = Term::app("f", vec![c("C1"), c("C2")]);
        let theta = th(&[("x", c("C2")), ("y", c("C1"))]);
        let v = check_match(&sig(), &DefaultInterpreter, &swap(), &t, &theta, &FunSubstitution::new(), 64);
        assert_eq!(v, Verdict::Derivable);
    }

    #[test]
    fn check_self_loop_exhausts_fuel() {
        let p = Pattern::mu("P", &["x"], &["y"], Pattern::rec_call("P", &["x"]));
        let v = check_match(&sig(), &DefaultInterpreter, &p, &c("C"), &Substitution::new(), &FunSubstitution::new(), 16);
        assert_eq!(v, Verdict::FuelExhausted);
    }

    #[test]
    fn check_exists_invents_witness() {
        let p = Pattern::exists("y", Pattern::app("g", vec![Pattern::var("x")]));
        let t = Term::app("g", vec![c("C")]);
        let v = check_match(&sig(), &DefaultInterpreter, &p, &t, &th(&[("x", c("C"))]), &FunSubstitution::new(), 4);
        assert_eq!(v, Verdict::Derivable);
    }

    #[test]
    fn check_guard_needs_true() {
        let p = Pattern::guarded(Pattern::var("x"), Guard::eq(Expr::var_attr("x", "rank"), Expr::lit(2)));
        let t = c("A");
        let theta = th(&[("x", t.clone())]);
        let v = check_match(&sig(), &DefaultInterpreter, &p, &t, &theta, &FunSubstitution::new(), 4);
        assert_eq!(v, Verdict::NotDerivable);
        let t2 = c("A").with_annotation("rank", 2);
        let v = check_match(&sig(), &DefaultInterpreter, &p, &t2, &th(&[("x", t2.clone())]), &FunSubstitution::new(), 4);
        assert_eq!(v, Verdict::Derivable);
    }

    #[test]
    fn enumerate_both_alternates() {
        let t = Term::app("f", vec![c("C1"), c("C2")]);
        let ws = enumerate_witnesses(&sig(), &DefaultInterpreter, &swap(), &t, Bounds::default());
        let thetas: Vec<_> = ws.iter().map(|(t, _)| t.clone()).collect();
        assert_eq!(
            thetas,
            vec![th(&[("x", c("C1")), ("y", c("C2"))]), th(&[("x", c("C2")), ("y", c("C1"))])]
        );
    }

    #[test]
    fn enumerate_head_mismatch_is_empty() {
        let p = Pattern::app("g", vec![Pattern::var("x")]);
        let t = Term::app("h", vec![c("C")]);
        assert!(enumerate_witnesses(&sig(), &DefaultInterpreter, &p, &t, Bounds::default()).is_empty());
        assert!(!has_witness(&sig(), &DefaultInterpreter, &p, &t, Bounds::default()));
    }

    #[test]
    fn enumerate_unconstrained_existential_over_pool() {
        let p = Pattern::exists("y", Pattern::app("g", vec![Pattern::var("x")]));
        let t = Term::app("g", vec![c("C")]);
        let s = sig();
        let ws = enumerate_witnesses(&s, &DefaultInterpreter, &p, &t, Bounds::default());
        assert_eq!(ws.len(), witness_pool(&s, &t, 2).len());
        for (theta, phi) in &ws {
            assert_eq!(theta.get("x"), Some(&c("C")));
            assert!(theta.contains("y"));
            assert_eq!(check_match(&s, &DefaultInterpreter, &p, &t, theta, phi, 64), Verdict::Derivable);
        }
    }

    #[test]
    fn enumerate_function_variables() {
        let p = Pattern::fun_app("F", vec![Pattern::fun_app("F", vec![Pattern::var("x")])]);
        let t = Term::app("g", vec![Term::app("g", vec![c("C")])]);
        let ws = enumerate_witnesses(&sig(), &DefaultInterpreter, &p, &t, Bounds::default());
        assert_eq!(ws.len(), 1);
        assert_eq!(ws[0].1.get("F").map(|n| &**n), Some("g"));
        let t = Term::app("g", vec![Term::app("h", vec![c("C")])]);
        assert!(!has_witness(&sig(), &DefaultInterpreter, &p, &t, Bounds::default()));
    }

    #[test]
    fn enumerate_deferred_guard_and_backmatch() {
        // guard on y, which is bound by the second argument
        let p = Pattern::app(
            "f",
            vec![
                Pattern::guarded(Pattern::var("x"), Guard::eq(Expr::var_attr("y", "size"), Expr::lit(2))),
                Pattern::match_constr(Pattern::var("y"), "x", Pattern::constant("C1")),
            ],
        );
        let good = Term::app("f", vec![c("C1"), Term::app("g", vec![c("C")])]);
        let ws = enumerate_witnesses(&sig(), &DefaultInterpreter, &p, &good, Bounds::default());
        assert_eq!(ws.len(), 1);
        let bad = Term::app("f", vec![c("C2"), Term::app("g", vec![c("C")])]);
        assert!(!has_witness(&sig(), &DefaultInterpreter, &p, &bad, Bounds::default()));
    }

    #[test]
    fn enumerate_recursive_chain() {
        // μP(x)[r]. g(P(x)) ‖ g(x)
        let body = Pattern::alt(
            Pattern::app("g", vec![Pattern::rec_call("P", &["x"])]),
            Pattern::app("g", vec![Pattern::var("x")]),
        );
        let p = number_sites(&Arc::new(Pattern::mu("P", &["x"], &["r"], body)));
        let mut t = c("C");
        for _ in 0..5 {
            t = Term::app("g", vec![t]);
        }
        let ws = enumerate_witnesses(&sig(), &DefaultInterpreter, &p, &t, Bounds::default());
        // r can be any proper subterm
        assert_eq!(ws.len(), 5);
        for (theta, phi) in &ws {
            assert_eq!(check_match(&sig(), &DefaultInterpreter, &p, &t, theta, phi, 64), Verdict::Derivable);
        }
        let short = Bounds { fuel: 2, ..Bounds::default() };
        assert_eq!(enumerate_witnesses(&sig(), &DefaultInterpreter, &p, &t, short).len(), 2);
    }
}
