//! Pattern AST, guard expressions, well-formedness and one-step μ-unfolding.
//!
//! Recursive patterns carry a *site*: a path identifying the position of the
//! `Mu` node in the (lazily) unfolded pattern tree. Unfolding renames every
//! existential binder of the body to `name@site`, so each unfolding level
//! gets its own locals and two routes that unfold the same `Mu` (the
//! matching machine and the declarative checker) agree on variable names.
//! [`number_sites`] gives the `Mu` nodes of a freshly built pattern distinct
//! sites; patterns handed to the matcher are expected to be numbered.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use thiserror::Error;

use crate::term::{name, AttributeInterpreter, Name, OperatorSignature, Substitution, Term};

pub type PatRef = Arc<Pattern>;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Pattern {
    Var(Name),
    App(Name, Vec<PatRef>),
    Alt(PatRef, PatRef),
    Guarded(PatRef, Arc<Guard>),
    Exists(Name, PatRef),
    /// `body` must match, and the term bound to `var` must match `constraint`.
    MatchConstr {
        body: PatRef,
        var: Name,
        constraint: PatRef,
    },
    FunApp(Name, Vec<PatRef>),
    Mu(Arc<MuPattern>),
    RecCall(Name, Vec<Name>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MuPattern {
    pub name: Name,
    pub formals: Vec<Name>,
    pub actuals: Vec<Name>,
    pub body: PatRef,
    pub site: Site,
}

impl MuPattern {
    pub fn site_label(&self) -> String {
        self.site
            .to_vec()
            .iter()
            .map(u32::to_string)
            .collect::<Vec<_>>()
            .join(".")
    }
}

/// A path of child indices, stored as a shared parent chain so that
/// extending it during unfolding is O(1).
#[derive(Clone, Default)]
pub struct Site(Option<Arc<SiteNode>>);

struct SiteNode {
    parent: Site,
    index: u32,
    len: usize,
}

impl Site {
    pub fn root(index: u32) -> Site {
        Site::default().child(index)
    }

    pub fn child(&self, index: u32) -> Site {
        Site(Some(Arc::new(SiteNode {
            parent: self.clone(),
            index,
            len: self.len() + 1,
        })))
    }

    pub fn len(&self) -> usize {
        self.0.as_ref().map_or(0, |n| n.len)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_none()
    }

    pub fn to_vec(&self) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.len());
        let mut cur = self;
        while let Some(n) = &cur.0 {
            out.push(n.index);
            cur = &n.parent;
        }
        out.reverse();
        out
    }
}

impl From<&[u32]> for Site {
    fn from(path: &[u32]) -> Site {
        path.iter().fold(Site::default(), |s, &i| s.child(i))
    }
}

impl PartialEq for Site {
    fn eq(&self, other: &Site) -> bool {
        let (mut a, mut b) = (self, other);
        if a.len() != b.len() {
            return false;
        }
        loop {
            match (&a.0, &b.0) {
                (None, None) => return true,
                (Some(x), Some(y)) => {
                    if Arc::ptr_eq(x, y) {
                        return true;
                    }
                    if x.index != y.index {
                        return false;
                    }
                    a = &x.parent;
                    b = &y.parent;
                }
                _ => return false,
            }
        }
    }
}

impl Eq for Site {}

impl std::hash::Hash for Site {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.to_vec().hash(state);
    }
}

impl fmt::Debug for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.to_vec()).finish()
    }
}

impl Pattern {
    pub fn var(x: &str) -> Pattern {
        Pattern::Var(name(x))
    }

    pub fn app(f: &str, args: Vec<Pattern>) -> Pattern {
        Pattern::App(name(f), args.into_iter().map(Arc::new).collect())
    }

    pub fn constant(f: &str) -> Pattern {
        Pattern::app(f, Vec::new())
    }

    pub fn alt(left: Pattern, right: Pattern) -> Pattern {
        Pattern::Alt(Arc::new(left), Arc::new(right))
    }

    pub fn guarded(body: Pattern, guard: Guard) -> Pattern {
        Pattern::Guarded(Arc::new(body), Arc::new(guard))
    }

    pub fn exists(x: &str, body: Pattern) -> Pattern {
        Pattern::Exists(name(x), Arc::new(body))
    }

    pub fn match_constr(body: Pattern, x: &str, constraint: Pattern) -> Pattern {
        Pattern::MatchConstr {
            body: Arc::new(body),
            var: name(x),
            constraint: Arc::new(constraint),
        }
    }

    pub fn fun_app(f: &str, args: Vec<Pattern>) -> Pattern {
        Pattern::FunApp(name(f), args.into_iter().map(Arc::new).collect())
    }

    pub fn mu(p: &str, formals: &[&str], actuals: &[&str], body: Pattern) -> Pattern {
        Pattern::Mu(Arc::new(MuPattern {
            name: name(p),
            formals: formals.iter().map(|s| name(s)).collect(),
            actuals: actuals.iter().map(|s| name(s)).collect(),
            body: Arc::new(body),
            site: Site::default(),
        }))
    }

    pub fn rec_call(p: &str, args: &[&str]) -> Pattern {
        Pattern::RecCall(name(p), args.iter().map(|s| name(s)).collect())
    }

    /// Folds alternates right-nested: `a ‖ (b ‖ c)`.
    pub fn alts(mut items: Vec<Pattern>) -> Option<Pattern> {
        let mut acc = items.pop()?;
        while let Some(p) = items.pop() {
            acc = Pattern::alt(p, acc);
        }
        Some(acc)
    }

    /// Number of nodes, not looking inside `Mu` bodies more than once.
    pub fn size(&self) -> usize {
        1 + match self {
            Pattern::Var(_) | Pattern::RecCall(..) => 0,
            Pattern::App(_, args) | Pattern::FunApp(_, args) => args.iter().map(|a| a.size()).sum(),
            Pattern::Alt(l, r) => l.size() + r.size(),
            Pattern::Guarded(p, _) | Pattern::Exists(_, p) => p.size(),
            Pattern::MatchConstr {
                body, constraint, ..
            } => body.size() + constraint.size(),
            Pattern::Mu(mu) => mu.body.size(),
        }
    }

    /// Immediate sub-patterns (used by shrinking and generators).
    pub fn children(&self) -> Vec<PatRef> {
        match self {
            Pattern::Var(_) | Pattern::RecCall(..) => Vec::new(),
            Pattern::App(_, args) | Pattern::FunApp(_, args) => args.clone(),
            Pattern::Alt(l, r) => vec![l.clone(), r.clone()],
            Pattern::Guarded(p, _) | Pattern::Exists(_, p) => vec![p.clone()],
            Pattern::MatchConstr {
                body, constraint, ..
            } => vec![body.clone(), constraint.clone()],
            Pattern::Mu(mu) => vec![mu.body.clone()],
        }
    }
}

// ---------------------------------------------------------------------------
// Guards

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    TermAttr(Term, Name),
    VarAttr(Name, Name),
    Lit(BigInt),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn var_attr(x: &str, key: &str) -> Expr {
        Expr::VarAttr(name(x), name(key))
    }

    pub fn lit(n: i64) -> Expr {
        Expr::Lit(BigInt::from(n))
    }

    fn vars_into(&self, out: &mut BTreeSet<Name>) {
        match self {
            Expr::VarAttr(x, _) => {
                out.insert(x.clone());
            }
            Expr::TermAttr(..) | Expr::Lit(_) => {}
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
                a.vars_into(out);
                b.vars_into(out);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Guard {
    True,
    Eq(Expr, Expr),
    Lt(Expr, Expr),
    And(Box<Guard>, Box<Guard>),
    Or(Box<Guard>, Box<Guard>),
    Not(Box<Guard>),
}

impl Guard {
    pub fn eq(a: Expr, b: Expr) -> Guard {
        Guard::Eq(a, b)
    }

    pub fn lt(a: Expr, b: Expr) -> Guard {
        Guard::Lt(a, b)
    }

    pub fn and(a: Guard, b: Guard) -> Guard {
        Guard::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Guard, b: Guard) -> Guard {
        Guard::Or(Box::new(a), Box::new(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(g: Guard) -> Guard {
        Guard::Not(Box::new(g))
    }

    /// Conjunction of a list; `True` when empty.
    pub fn all(guards: Vec<Guard>) -> Guard {
        guards
            .into_iter()
            .reduce(Guard::and)
            .unwrap_or(Guard::True)
    }

    pub fn vars(&self) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        self.vars_into(&mut out);
        out
    }

    fn vars_into(&self, out: &mut BTreeSet<Name>) {
        match self {
            Guard::True => {}
            Guard::Eq(a, b) | Guard::Lt(a, b) => {
                a.vars_into(out);
                b.vars_into(out);
            }
            Guard::And(a, b) | Guard::Or(a, b) => {
                a.vars_into(out);
                b.vars_into(out);
            }
            Guard::Not(g) => g.vars_into(out),
        }
    }
}

/// Three-valued guard outcome; `Undefined` arises from partial attributes
/// and unbound variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Truth {
    True,
    False,
    Undefined,
}

impl From<bool> for Truth {
    fn from(b: bool) -> Self {
        if b {
            Truth::True
        } else {
            Truth::False
        }
    }
}

pub fn eval_expr(interp: &dyn AttributeInterpreter, theta: &Substitution, e: &Expr) -> Option<BigInt> {
    Some(match e {
        Expr::TermAttr(t, key) => BigInt::from(interp.eval(key, t)?),
        Expr::VarAttr(x, key) => BigInt::from(interp.eval(key, theta.get(x)?)?),
        Expr::Lit(n) => n.clone(),
        Expr::Add(a, b) => eval_expr(interp, theta, a)? + eval_expr(interp, theta, b)?,
        Expr::Sub(a, b) => eval_expr(interp, theta, a)? - eval_expr(interp, theta, b)?,
        Expr::Mul(a, b) => eval_expr(interp, theta, a)? * eval_expr(interp, theta, b)?,
    })
}

/// Strict three-valued evaluation: an `Undefined` operand makes the result
/// `Undefined`, even under `And`/`Or`.
pub fn eval_guard(interp: &dyn AttributeInterpreter, theta: &Substitution, g: &Guard) -> Truth {
    fn cmp(
        interp: &dyn AttributeInterpreter,
        theta: &Substitution,
        a: &Expr,
        b: &Expr,
        f: impl Fn(&BigInt, &BigInt) -> bool,
    ) -> Truth {
        match (eval_expr(interp, theta, a), eval_expr(interp, theta, b)) {
            (Some(x), Some(y)) => f(&x, &y).into(),
            _ => Truth::Undefined,
        }
    }
    match g {
        Guard::True => Truth::True,
        Guard::Eq(a, b) => cmp(interp, theta, a, b, |x, y| x == y),
        Guard::Lt(a, b) => cmp(interp, theta, a, b, |x, y| x < y),
        Guard::And(a, b) => match (eval_guard(interp, theta, a), eval_guard(interp, theta, b)) {
            (Truth::Undefined, _) | (_, Truth::Undefined) => Truth::Undefined,
            (x, y) => (x == Truth::True && y == Truth::True).into(),
        },
        Guard::Or(a, b) => match (eval_guard(interp, theta, a), eval_guard(interp, theta, b)) {
            (Truth::Undefined, _) | (_, Truth::Undefined) => Truth::Undefined,
            (x, y) => (x == Truth::True || y == Truth::True).into(),
        },
        Guard::Not(g) => match eval_guard(interp, theta, g) {
            Truth::True => Truth::False,
            Truth::False => Truth::True,
            Truth::Undefined => Truth::Undefined,
        },
    }
}

// ---------------------------------------------------------------------------
// Variables

/// For each formal of `mu`, whether it is used as a function variable in the body.
pub fn formal_kinds(mu: &MuPattern) -> Vec<bool> {
    let mut heads = BTreeSet::new();
    collect_fun_heads(&mu.body, &mut heads);
    mu.formals.iter().map(|f| heads.contains(f)).collect()
}

/// Every name used as a function-variable head anywhere in `p`.
pub fn fun_heads(p: &Pattern) -> BTreeSet<Name> {
    let mut out = BTreeSet::new();
    collect_fun_heads(p, &mut out);
    out
}

fn collect_fun_heads(p: &Pattern, out: &mut BTreeSet<Name>) {
    if let Pattern::FunApp(f, _) = p {
        out.insert(f.clone());
    }
    for c in p.children() {
        collect_fun_heads(&c, out);
    }
}

/// Free pattern variables (not under a binding `Exists`) and all function variables.
pub fn free_pattern_vars(p: &Pattern) -> (BTreeSet<Name>, BTreeSet<Name>) {
    let mut pv = BTreeSet::new();
    let mut fv = BTreeSet::new();
    free_vars_in(p, true, &BTreeMap::new(), &mut pv, &mut fv);
    (pv, fv)
}

fn free_vars_in(
    p: &Pattern,
    guards: bool,
    rec_kinds: &BTreeMap<Name, Vec<bool>>,
    pv: &mut BTreeSet<Name>,
    fv: &mut BTreeSet<Name>,
) {
    match p {
        Pattern::Var(x) => {
            pv.insert(x.clone());
        }
        Pattern::App(_, args) => {
            for a in args {
                free_vars_in(a, guards, rec_kinds, pv, fv);
            }
        }
        Pattern::FunApp(f, args) => {
            fv.insert(f.clone());
            for a in args {
                free_vars_in(a, guards, rec_kinds, pv, fv);
            }
        }
        Pattern::Alt(l, r) => {
            free_vars_in(l, guards, rec_kinds, pv, fv);
            free_vars_in(r, guards, rec_kinds, pv, fv);
        }
        Pattern::Guarded(body, g) => {
            free_vars_in(body, guards, rec_kinds, pv, fv);
            if guards {
                pv.extend(g.vars());
            }
        }
        Pattern::Exists(x, body) => {
            let mut inner = BTreeSet::new();
            free_vars_in(body, guards, rec_kinds, &mut inner, fv);
            inner.remove(x);
            pv.extend(inner);
        }
        Pattern::MatchConstr {
            body,
            var,
            constraint,
        } => {
            free_vars_in(body, guards, rec_kinds, pv, fv);
            free_vars_in(constraint, guards, rec_kinds, pv, fv);
            pv.insert(var.clone());
        }
        Pattern::Mu(mu) => {
            let kinds = formal_kinds(mu);
            let mut env = rec_kinds.clone();
            env.insert(mu.name.clone(), kinds.clone());
            let mut ipv = BTreeSet::new();
            let mut ifv = BTreeSet::new();
            free_vars_in(&mu.body, guards, &env, &mut ipv, &mut ifv);
            for f in &mu.formals {
                ipv.remove(f);
                ifv.remove(f);
            }
            pv.extend(ipv);
            fv.extend(ifv);
            for (a, is_fun) in mu.actuals.iter().zip(kinds) {
                if is_fun {
                    fv.insert(a.clone());
                } else {
                    pv.insert(a.clone());
                }
            }
        }
        Pattern::RecCall(pname, args) => {
            let kinds = rec_kinds.get(pname);
            for (i, a) in args.iter().enumerate() {
                if kinds.and_then(|k| k.get(i)).copied().unwrap_or(false) {
                    fv.insert(a.clone());
                } else {
                    pv.insert(a.clone());
                }
            }
        }
    }
}

/// Every variable name occurring anywhere in `p`, bound or free, of either kind.
pub fn all_names(p: &Pattern) -> BTreeSet<Name> {
    let mut out = BTreeSet::new();
    all_names_into(p, &mut out);
    out
}

fn all_names_into(p: &Pattern, out: &mut BTreeSet<Name>) {
    match p {
        Pattern::Var(x) => {
            out.insert(x.clone());
        }
        Pattern::FunApp(f, _) => {
            out.insert(f.clone());
        }
        Pattern::Guarded(_, g) => out.extend(g.vars()),
        Pattern::Exists(x, _) => {
            out.insert(x.clone());
        }
        Pattern::MatchConstr { var, .. } => {
            out.insert(var.clone());
        }
        Pattern::Mu(mu) => {
            out.extend(mu.formals.iter().cloned());
            out.extend(mu.actuals.iter().cloned());
        }
        Pattern::RecCall(_, args) => out.extend(args.iter().cloned()),
        Pattern::App(..) | Pattern::Alt(..) => {}
    }
    for c in p.children() {
        all_names_into(&c, out);
    }
}

/// Existentially bound variables whose `Exists` node is reachable without
/// entering a `Mu` body.
pub fn existential_names(p: &Pattern) -> BTreeSet<Name> {
    let mut out = BTreeSet::new();
    fn go(p: &Pattern, out: &mut BTreeSet<Name>) {
        if let Pattern::Exists(x, _) = p {
            out.insert(x.clone());
        }
        if !matches!(p, Pattern::Mu(_)) {
            for c in p.children() {
                go(&c, out);
            }
        }
    }
    go(p, &mut out);
    out
}

/// Pattern variables that are bound in θ after *any* successful match of `p`
/// (an under-approximation).
pub fn must_bind(p: &Pattern) -> BTreeSet<Name> {
    match p {
        Pattern::Var(x) => BTreeSet::from([x.clone()]),
        Pattern::App(_, args) | Pattern::FunApp(_, args) => {
            args.iter().flat_map(|a| must_bind(a)).collect()
        }
        Pattern::Alt(l, r) => must_bind(l).intersection(&must_bind(r)).cloned().collect(),
        Pattern::Guarded(body, _) => must_bind(body),
        Pattern::Exists(x, body) => {
            let mut s = must_bind(body);
            s.remove(x);
            s
        }
        Pattern::MatchConstr {
            body, constraint, ..
        } => {
            let mut s = must_bind(body);
            s.extend(must_bind(constraint));
            s
        }
        Pattern::Mu(mu) => {
            let inner = must_bind(&mu.body);
            mu.formals
                .iter()
                .zip(&mu.actuals)
                .filter(|(f, _)| inner.contains(*f))
                .map(|(_, a)| a.clone())
                .collect()
        }
        Pattern::RecCall(..) => BTreeSet::new(),
    }
}

// ---------------------------------------------------------------------------
// Well-formedness

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Diagnostic {
    #[error("unknown operator `{0}`")]
    UnknownOperator(String),
    #[error("operator `{op}` expects {expected} argument(s), found {found}")]
    ArityMismatch {
        op: String,
        expected: usize,
        found: usize,
    },
    #[error("recursive call `{0}` is not bound by an enclosing mu")]
    UnboundRecCall(String),
    #[error("recursive call `{name}` passes {found} argument(s), expected {expected}")]
    RecCallArity {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("mu `{name}` has {formals} formal(s) but {actuals} actual(s)")]
    MuArity {
        name: String,
        formals: usize,
        actuals: usize,
    },
    #[error("guard variable `{0}` is not in scope")]
    GuardVarUnscoped(String),
}

/// Returns every violated grammar side condition; empty means well formed.
pub fn well_formed(sig: &OperatorSignature, p: &Pattern) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let mut top_free = BTreeSet::new();
    free_vars_in(p, false, &BTreeMap::new(), &mut top_free, &mut BTreeSet::new());
    let mut ctx = WfCtx {
        sig,
        diags: &mut diags,
        rec: Vec::new(),
        scope: top_free.into_iter().collect(),
    };
    ctx.visit(p);
    diags
}

struct WfCtx<'a> {
    sig: &'a OperatorSignature,
    diags: &'a mut Vec<Diagnostic>,
    rec: Vec<(Name, usize)>,
    scope: Vec<Name>,
}

impl WfCtx<'_> {
    fn visit(&mut self, p: &Pattern) {
        match p {
            Pattern::Var(_) => {}
            Pattern::App(f, args) => {
                match self.sig.arity(f) {
                    None => self.diags.push(Diagnostic::UnknownOperator(f.to_string())),
                    Some(n) if n != args.len() => self.diags.push(Diagnostic::ArityMismatch {
                        op: f.to_string(),
                        expected: n,
                        found: args.len(),
                    }),
                    Some(_) => {}
                }
                args.iter().for_each(|a| self.visit(a));
            }
            Pattern::FunApp(_, args) => args.iter().for_each(|a| self.visit(a)),
            Pattern::Alt(l, r) => {
                self.visit(l);
                self.visit(r);
            }
            Pattern::Guarded(body, g) => {
                for x in g.vars() {
                    if !self.scope.contains(&x) {
                        self.diags.push(Diagnostic::GuardVarUnscoped(x.to_string()));
                    }
                }
                self.visit(body);
            }
            Pattern::Exists(x, body) => {
                self.scope.push(x.clone());
                self.visit(body);
                self.scope.pop();
            }
            Pattern::MatchConstr {
                body, constraint, ..
            } => {
                self.visit(body);
                self.visit(constraint);
            }
            Pattern::Mu(mu) => {
                if mu.formals.len() != mu.actuals.len() {
                    self.diags.push(Diagnostic::MuArity {
                        name: mu.name.to_string(),
                        formals: mu.formals.len(),
                        actuals: mu.actuals.len(),
                    });
                }
                self.rec.push((mu.name.clone(), mu.formals.len()));
                let saved = self.scope.len();
                self.scope.extend(mu.formals.iter().cloned());
                self.visit(&mu.body);
                self.scope.truncate(saved);
                self.rec.pop();
            }
            Pattern::RecCall(pname, args) => {
                match self.rec.iter().rev().find(|(n, _)| n == pname) {
                    None => self.diags.push(Diagnostic::UnboundRecCall(pname.to_string())),
                    Some(&(_, n)) if n != args.len() => {
                        self.diags.push(Diagnostic::RecCallArity {
                            name: pname.to_string(),
                            expected: n,
                            found: args.len(),
                        })
                    }
                    Some(_) => {}
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Renaming and unfolding

pub type Env = BTreeMap<Name, Name>;

fn lookup(env: &Env, x: &Name) -> Name {
    env.get(x).cloned().unwrap_or_else(|| x.clone())
}

fn rename_guard(g: &Guard, env: &Env) -> Guard {
    fn expr(e: &Expr, env: &Env) -> Expr {
        match e {
            Expr::VarAttr(x, k) => Expr::VarAttr(lookup(env, x), k.clone()),
            Expr::TermAttr(..) | Expr::Lit(_) => e.clone(),
            Expr::Add(a, b) => Expr::Add(Box::new(expr(a, env)), Box::new(expr(b, env))),
            Expr::Sub(a, b) => Expr::Sub(Box::new(expr(a, env)), Box::new(expr(b, env))),
            Expr::Mul(a, b) => Expr::Mul(Box::new(expr(a, env)), Box::new(expr(b, env))),
        }
    }
    match g {
        Guard::True => Guard::True,
        Guard::Eq(a, b) => Guard::Eq(expr(a, env), expr(b, env)),
        Guard::Lt(a, b) => Guard::Lt(expr(a, env), expr(b, env)),
        Guard::And(a, b) => Guard::and(rename_guard(a, env), rename_guard(b, env)),
        Guard::Or(a, b) => Guard::or(rename_guard(a, env), rename_guard(b, env)),
        Guard::Not(a) => Guard::not(rename_guard(a, env)),
    }
}

/// Names free in `p` (pattern and function variables alike).
fn free_names(p: &Pattern) -> BTreeSet<Name> {
    let (mut pv, fv) = free_pattern_vars(p);
    pv.extend(fv);
    pv
}

fn prime_away(base: &Name, avoid: &BTreeSet<Name>) -> Name {
    let mut candidate = format!("{base}'");
    while avoid.contains(candidate.as_str()) {
        candidate.push('\'');
    }
    name(&candidate)
}

/// Capture-avoiding renaming of free names.
pub fn rename_free(p: &PatRef, env: &Env) -> PatRef {
    let relevant: Env = {
        let free = free_names(p);
        env.iter()
            .filter(|(k, v)| free.contains(*k) && k != v)
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    };
    if relevant.is_empty() {
        return p.clone();
    }
    Renamer { unfold: None }.go(p, &relevant)
}

struct UnfoldCtx<'a> {
    mu: &'a MuPattern,
    suffix: std::cell::OnceCell<String>,
    next_child: u32,
}

struct Renamer<'a> {
    unfold: Option<UnfoldCtx<'a>>,
}

impl Renamer<'_> {
    fn child_site(&mut self) -> Site {
        let ctx = self.unfold.as_mut().expect("child sites only exist while unfolding");
        let site = ctx.mu.site.child(ctx.next_child);
        ctx.next_child += 1;
        site
    }

    fn bind(&self, x: &Name, body: &Pattern, env: &Env) -> (Name, Env) {
        let mut inner = env.clone();
        match &self.unfold {
            Some(ctx) => {
                let suffix = ctx.suffix.get_or_init(|| ctx.mu.site_label());
                let fresh = name(&format!("{x}@{suffix}"));
                inner.insert(x.clone(), fresh.clone());
                (fresh, inner)
            }
            None => {
                inner.remove(x);
                let range: BTreeSet<Name> = inner.values().cloned().collect();
                if range.contains(x) {
                    let mut avoid = range;
                    avoid.extend(all_names(body));
                    let fresh = prime_away(x, &avoid);
                    inner.insert(x.clone(), fresh.clone());
                    (fresh, inner)
                } else {
                    (x.clone(), inner)
                }
            }
        }
    }

    fn go(&mut self, p: &PatRef, env: &Env) -> PatRef {
        let out = match &**p {
            Pattern::Var(x) => Pattern::Var(lookup(env, x)),
            Pattern::App(f, args) => {
                Pattern::App(f.clone(), args.iter().map(|a| self.go(a, env)).collect())
            }
            Pattern::FunApp(f, args) => Pattern::FunApp(
                lookup(env, f),
                args.iter().map(|a| self.go(a, env)).collect(),
            ),
            Pattern::Alt(l, r) => Pattern::Alt(self.go(l, env), self.go(r, env)),
            Pattern::Guarded(body, g) => {
                Pattern::Guarded(self.go(body, env), Arc::new(rename_guard(g, env)))
            }
            Pattern::Exists(x, body) => {
                let (x2, inner) = self.bind(x, body, env);
                Pattern::Exists(x2, self.go(body, &inner))
            }
            Pattern::MatchConstr {
                body,
                var,
                constraint,
            } => Pattern::MatchConstr {
                body: self.go(body, env),
                var: lookup(env, var),
                constraint: self.go(constraint, env),
            },
            Pattern::RecCall(pname, args) => {
                let args: Vec<Name> = args.iter().map(|a| lookup(env, a)).collect();
                match &self.unfold {
                    Some(ctx) if &ctx.mu.name == pname => {
                        let mu = ctx.mu;
                        let site = self.child_site();
                        Pattern::Mu(Arc::new(MuPattern {
                            name: mu.name.clone(),
                            formals: mu.formals.clone(),
                            actuals: args,
                            body: mu.body.clone(),
                            site,
                        }))
                    }
                    _ => Pattern::RecCall(pname.clone(), args),
                }
            }
            Pattern::Mu(inner) => {
                let actuals = inner.actuals.iter().map(|a| lookup(env, a)).collect();
                let site = if self.unfold.is_some() {
                    self.child_site()
                } else {
                    inner.site.clone()
                };
                let mut body_env = env.clone();
                for f in &inner.formals {
                    body_env.remove(f);
                }
                let body = rename_free(&inner.body, &body_env);
                Pattern::Mu(Arc::new(MuPattern {
                    name: inner.name.clone(),
                    formals: inner.formals.clone(),
                    actuals,
                    body,
                    site,
                }))
            }
        };
        Arc::new(out)
    }
}

/// One-step unfolding: each recursive call `P(z̄)` in the body becomes
/// `μP(x̄)[z̄].body`, then formals are renamed to actuals. Existential
/// binders of the body are renamed to `name@site` so every level has its
/// own locals, and nested `Mu` nodes receive child sites.
pub fn unfold_mu(mu: &MuPattern) -> PatRef {
    let env: Env = mu
        .formals
        .iter()
        .cloned()
        .zip(mu.actuals.iter().cloned())
        .collect();
    let mut renamer = Renamer {
        unfold: Some(UnfoldCtx {
            mu,
            suffix: std::cell::OnceCell::new(),
            next_child: 0,
        }),
    };
    renamer.go(&mu.body, &env)
}

/// Rebuilds `p` with each immediate sub-pattern (including a `Mu` body) replaced by `f` of it.
pub fn map_children(p: &Pattern, mut f: impl FnMut(&PatRef) -> PatRef) -> Pattern {
    match p {
        Pattern::Var(_) | Pattern::RecCall(..) => p.clone(),
        Pattern::App(op, args) => Pattern::App(op.clone(), args.iter().map(&mut f).collect()),
        Pattern::FunApp(fv, args) => Pattern::FunApp(fv.clone(), args.iter().map(&mut f).collect()),
        Pattern::Alt(l, r) => Pattern::Alt(f(l), f(r)),
        Pattern::Guarded(b, g) => Pattern::Guarded(f(b), g.clone()),
        Pattern::Exists(x, b) => Pattern::Exists(x.clone(), f(b)),
        Pattern::MatchConstr {
            body,
            var,
            constraint,
        } => Pattern::MatchConstr {
            body: f(body),
            var: var.clone(),
            constraint: f(constraint),
        },
        Pattern::Mu(mu) => Pattern::Mu(Arc::new(MuPattern {
            body: f(&mu.body),
            ..(**mu).clone()
        })),
    }
}

/// Renames every existential binder outside `Mu` bodies to `fresh(binder)`,
/// which must return names not occurring in `p`.
pub fn rename_binders(p: &PatRef, fresh: &mut dyn FnMut(&Name) -> Name) -> PatRef {
    match &**p {
        Pattern::Mu(_) | Pattern::Var(_) | Pattern::RecCall(..) => p.clone(),
        Pattern::Exists(x, body) => {
            let x2 = fresh(x);
            let body = rename_binders(body, fresh);
            let env: Env = [(x.clone(), x2.clone())].into_iter().collect();
            Arc::new(Pattern::Exists(x2, rename_free(&body, &env)))
        }
        other => Arc::new(map_children(other, |c| rename_binders(c, fresh))),
    }
}

/// Assigns distinct root sites `[0]`, `[1]`, ... to the `Mu` nodes of `p`
/// reachable without entering a `Mu` body, in pre-order. Idempotent.
pub fn number_sites(p: &PatRef) -> PatRef {
    fn go(p: &PatRef, next: &mut u32) -> PatRef {
        let rebuilt = match &**p {
            Pattern::Var(_) | Pattern::RecCall(..) => return p.clone(),
            Pattern::App(f, args) => Pattern::App(f.clone(), args.iter().map(|a| go(a, next)).collect()),
            Pattern::FunApp(f, args) => {
                Pattern::FunApp(f.clone(), args.iter().map(|a| go(a, next)).collect())
            }
            Pattern::Alt(l, r) => Pattern::Alt(go(l, next), go(r, next)),
            Pattern::Guarded(b, g) => Pattern::Guarded(go(b, next), g.clone()),
            Pattern::Exists(x, b) => Pattern::Exists(x.clone(), go(b, next)),
            Pattern::MatchConstr {
                body,
                var,
                constraint,
            } => Pattern::MatchConstr {
                body: go(body, next),
                var: var.clone(),
                constraint: go(constraint, next),
            },
            Pattern::Mu(mu) => {
                let site = Site::root(*next);
                *next += 1;
                if mu.site == site {
                    return p.clone();
                }
                Pattern::Mu(Arc::new(MuPattern {
                    site,
                    ..(**mu).clone()
                }))
            }
        };
        if rebuilt == **p {
            p.clone()
        } else {
            Arc::new(rebuilt)
        }
    }
    go(p, &mut 0)
}

/// Removes site information, for comparing patterns up to site numbering.
pub fn erase_sites(p: &Pattern) -> Pattern {
    match p {
        Pattern::Var(_) | Pattern::RecCall(..) => p.clone(),
        Pattern::App(f, args) => Pattern::App(
            f.clone(),
            args.iter().map(|a| Arc::new(erase_sites(a))).collect(),
        ),
        Pattern::FunApp(f, args) => Pattern::FunApp(
            f.clone(),
            args.iter().map(|a| Arc::new(erase_sites(a))).collect(),
        ),
        Pattern::Alt(l, r) => Pattern::Alt(Arc::new(erase_sites(l)), Arc::new(erase_sites(r))),
        Pattern::Guarded(b, g) => Pattern::Guarded(Arc::new(erase_sites(b)), g.clone()),
        Pattern::Exists(x, b) => Pattern::Exists(x.clone(), Arc::new(erase_sites(b))),
        Pattern::MatchConstr {
            body,
            var,
            constraint,
        } => Pattern::MatchConstr {
            body: Arc::new(erase_sites(body)),
            var: var.clone(),
            constraint: Arc::new(erase_sites(constraint)),
        },
        Pattern::Mu(mu) => Pattern::Mu(Arc::new(MuPattern {
            name: mu.name.clone(),
            formals: mu.formals.clone(),
            actuals: mu.actuals.clone(),
            body: Arc::new(erase_sites(&mu.body)),
            site: Site::default(),
        })),
    }
}

// ---------------------------------------------------------------------------
// Display

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::TermAttr(t, k) => write!(f, "[{t}].{k}"),
            Expr::VarAttr(x, k) => write!(f, "{x}.{k}"),
            Expr::Lit(n) => write!(f, "{n}"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
        }
    }
}

impl fmt::Display for Guard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Guard::True => f.write_str("true"),
            Guard::Eq(a, b) => write!(f, "{a} == {b}"),
            Guard::Lt(a, b) => write!(f, "{a} < {b}"),
            Guard::And(a, b) => write!(f, "({a} && {b})"),
            Guard::Or(a, b) => write!(f, "({a} || {b})"),
            Guard::Not(g) => write!(f, "!({g})"),
        }
    }
}

fn write_args(f: &mut fmt::Formatter<'_>, args: &[PatRef]) -> fmt::Result {
    f.write_str("(")?;
    for (i, a) in args.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{a}")?;
    }
    f.write_str(")")
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pattern::Var(x) => f.write_str(x),
            Pattern::App(op, args) => {
                f.write_str(op)?;
                write_args(f, args)
            }
            Pattern::FunApp(fv, args) => {
                write!(f, "${fv}")?;
                write_args(f, args)
            }
            Pattern::Alt(l, r) => write!(f, "({l} | {r})"),
            Pattern::Guarded(p, g) => write!(f, "({p} where {g})"),
            Pattern::Exists(x, p) => write!(f, "(exists {x}. {p})"),
            Pattern::MatchConstr {
                body,
                var,
                constraint,
            } => write!(f, "({body} with {var} <= {constraint})"),
            Pattern::Mu(mu) => write!(
                f,
                "(mu {}({})[{}]. {})",
                mu.name,
                mu.formals.join(", "),
                mu.actuals.join(", "),
                mu.body
            ),
            Pattern::RecCall(p, args) => write!(f, "{p}({})", args.join(", ")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::term::DefaultInterpreter;

    fn sig() -> OperatorSignature {
        let mut s = OperatorSignature::new();
        for (n, a) in [("MatMul", 2), ("Trans", 1), ("f", 1), ("g", 2), ("C", 0)] {
            s.declare(n, a).unwrap();
        }
        s
    }

    fn set(xs: &[&str]) -> BTreeSet<Name> {
        xs.iter().map(|s| name(s)).collect()
    }

    fn mmxyt() -> Pattern {
        Pattern::guarded(
            Pattern::app(
                "MatMul",
                vec![Pattern::var("x"), Pattern::app("Trans", vec![Pattern::var("y")])],
            ),
            Guard::and(
                Guard::eq(Expr::var_attr("x", "rank"), Expr::lit(2)),
                Guard::eq(Expr::var_attr("y", "rank"), Expr::lit(2)),
            ),
        )
    }

    #[test]
    fn free_vars_examples() {
        let p = Pattern::app(
            "MatMul",
            vec![Pattern::var("x"), Pattern::app("Trans", vec![Pattern::var("y")])],
        );
        assert_eq!(free_pattern_vars(&p), (set(&["x", "y"]), set(&[])));
        let p = Pattern::exists("y", Pattern::app("g", vec![Pattern::var("x"), Pattern::var("y")]));
        assert_eq!(free_pattern_vars(&p), (set(&["x"]), set(&[])));
        let p = Pattern::fun_app("F", vec![Pattern::fun_app("F", vec![Pattern::var("x")])]);
        assert_eq!(free_pattern_vars(&p), (set(&["x"]), set(&["F"])));
    }

    #[test]
    fn free_vars_classify_mu_actuals_by_use() {
        let body = Pattern::alt(
            Pattern::fun_app("F", vec![Pattern::rec_call("UC", &["x", "F"])]),
            Pattern::fun_app("F", vec![Pattern::var("x")]),
        );
        let p = Pattern::mu("UC", &["x", "F"], &["a", "G"], body);
        assert_eq!(free_pattern_vars(&p), (set(&["a"]), set(&["G"])));
    }

    #[test]
    fn well_formed_examples() {
        let s = sig();
        assert!(well_formed(&s, &mmxyt()).is_empty());
        assert_eq!(
            well_formed(&s, &Pattern::app("Trans", vec![Pattern::var("x"), Pattern::var("y")])),
            vec![Diagnostic::ArityMismatch {
                op: "Trans".into(),
                expected: 1,
                found: 2
            }]
        );
        assert_eq!(
            well_formed(&s, &Pattern::rec_call("Q", &["x"])),
            vec![Diagnostic::UnboundRecCall("Q".into())]
        );
        assert_eq!(
            well_formed(&s, &Pattern::mu("P", &["x"], &["y"], Pattern::rec_call("P", &["x", "x"]))),
            vec![Diagnostic::RecCallArity {
                name: "P".into(),
                expected: 1,
                found: 2
            }]
        );
        assert_eq!(
            well_formed(&s, &Pattern::app("Nope", vec![])),
            vec![Diagnostic::UnknownOperator("Nope".into())]
        );
        // guard mentions a variable that occurs nowhere
        let p = Pattern::guarded(Pattern::var("x"), Guard::eq(Expr::var_attr("z", "rank"), Expr::lit(1)));
        assert_eq!(well_formed(&s, &p), vec![Diagnostic::GuardVarUnscoped("z".into())]);
        // ...but a guard over a variable bound later in the pattern is accepted
        let p = Pattern::app(
            "g",
            vec![
                Pattern::guarded(Pattern::var("x"), Guard::eq(Expr::var_attr("y", "rank"), Expr::lit(1))),
                Pattern::var("y"),
            ],
        );
        assert!(well_formed(&s, &p).is_empty());
    }

    #[test]
    fn unfold_pure_renaming() {
        let mu = MuPattern {
            name: name("P"),
            formals: vec![name("x")],
            actuals: vec![name("y")],
            body: Arc::new(Pattern::var("x")),
            site: Site::default(),
        };
        assert_eq!(*unfold_mu(&mu), Pattern::var("y"));
    }

    #[test]
    fn unfold_self_call_is_alpha_equivalent_to_itself() {
        let p = Pattern::mu("P", &["x"], &["y"], Pattern::rec_call("P", &["x"]));
        let Pattern::Mu(mu) = &p else { unreachable!() };
        let once = unfold_mu(mu);
        assert_eq!(erase_sites(&once), erase_sites(&p));
    }

    /// Hand-expanded two-step unfolding of `μP(x)[y]. f(P(x))`.
    #[test]
    fn unfold_two_steps_matches_hand_expansion() {
        let body = Pattern::app("f", vec![Pattern::rec_call("P", &["x"])]);
        let p = Pattern::mu("P", &["x"], &["y"], body.clone());
        let Pattern::Mu(mu) = &p else { unreachable!() };

        let step1 = unfold_mu(mu);
        let expected1 = Pattern::app("f", vec![Pattern::mu("P", &["x"], &["y"], body.clone())]);
        assert_eq!(erase_sites(&step1), expected1);

        let Pattern::App(_, args) = &*step1 else { unreachable!() };
        let Pattern::Mu(inner) = &*args[0] else { unreachable!() };
        assert_eq!(inner.site, Site::root(0));
        let step2 = unfold_mu(inner);
        assert_eq!(erase_sites(&step2), expected1);
    }

    #[test]
    fn unfold_freshens_existentials_per_level() {
        // μP(x)[r]. ∃y. (x with x <= f(P(y)))  |  x
        let body = Pattern::alt(
            Pattern::exists(
                "y",
                Pattern::match_constr(
                    Pattern::var("x"),
                    "x",
                    Pattern::app("f", vec![Pattern::rec_call("P", &["y"])]),
                ),
            ),
            Pattern::var("x"),
        );
        let p = number_sites(&Arc::new(Pattern::mu("P", &["x"], &["r"], body)));
        let Pattern::Mu(mu) = &*p else { unreachable!() };
        let level1 = unfold_mu(mu);
        let expected = format!("((exists y@0. (r with r <= f((mu P(x)[y@0]. {})))) | r)", mu.body);
        assert_eq!(level1.to_string(), expected);
        // the nested mu sits at site 0.0 and will freshen to y@0.0
        assert_eq!(existential_names(&level1), set(&["y@0"]));
    }

    #[test]
    fn number_sites_is_idempotent() {
        let m = Pattern::mu("P", &["x"], &["a"], Pattern::var("x"));
        let p = Arc::new(Pattern::app("g", vec![m.clone(), m]));
        let once = number_sites(&p);
        let twice = number_sites(&once);
        assert_eq!(once, twice);
        let Pattern::App(_, args) = &*once else { unreachable!() };
        let sites: Vec<_> = args
            .iter()
            .map(|a| match &**a {
                Pattern::Mu(m) => m.site.to_vec(),
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(sites, vec![vec![0], vec![1]]);
    }

    #[test]
    fn rename_free_avoids_capture() {
        let p = Arc::new(Pattern::exists(
            "y",
            Pattern::app("g", vec![Pattern::var("x"), Pattern::var("y")]),
        ));
        let env: Env = [(name("x"), name("y"))].into_iter().collect();
        let r = rename_free(&p, &env);
        assert_eq!(r.to_string(), "(exists y'. g(y, y'))");
    }

    #[test]
    fn expr_and_guard_evaluation() {
        let interp = DefaultInterpreter;
        let theta: Substitution = [(name("x"), Term::constant("C").with_annotation("rank", 2))]
            .into_iter()
            .collect();
        let e = Expr::Add(Box::new(Expr::var_attr("x", "rank")), Box::new(Expr::lit(1)));
        assert_eq!(eval_expr(&interp, &theta, &e), Some(BigInt::from(3)));
        assert_eq!(eval_expr(&interp, &Substitution::new(), &Expr::var_attr("x", "rank")), None);
        let e = Expr::Sub(Box::new(Expr::lit(5)), Box::new(Expr::lit(7)));
        assert_eq!(eval_expr(&interp, &theta, &e), Some(BigInt::from(-2)));

        assert_eq!(
            eval_guard(&interp, &theta, &Guard::not(Guard::lt(Expr::lit(1), Expr::lit(2)))),
            Truth::False
        );
        let unannotated: Substitution = [(name("x"), Term::constant("C"))].into_iter().collect();
        let g = Guard::eq(Expr::var_attr("x", "rank"), Expr::lit(2));
        assert_eq!(eval_guard(&interp, &unannotated, &g), Truth::Undefined);
        // strictness: false && undefined is still undefined
        let g = Guard::and(Guard::lt(Expr::lit(2), Expr::lit(1)), g);
        assert_eq!(eval_guard(&interp, &unannotated, &g), Truth::Undefined);
    }

    #[test]
    fn cublas_guard_holds_on_rank_two_operands() {
        let interp = DefaultInterpreter;
        let theta: Substitution = [
            (name("x"), Term::constant("A").with_annotation("rank", 2)),
            (name("y"), Term::constant("B").with_annotation("rank", 2)),
        ]
        .into_iter()
        .collect();
        let Pattern::Guarded(_, g) = mmxyt() else { unreachable!() };
        assert_eq!(eval_guard(&interp, &theta, &g), Truth::True);
    }

    #[test]
    fn must_bind_under_approximates() {
        let p = Pattern::alt(
            Pattern::app("g", vec![Pattern::var("x"), Pattern::var("y")]),
            Pattern::app("f", vec![Pattern::var("x")]),
        );
        assert_eq!(must_bind(&p), set(&["x"]));
    }
}
