//! Name resolution and compilation of surface programs to rule sets.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use super::lexer::Pos;
use super::program::{AExpr, GExpr, PExpr, PatternDecl, RuleDecl, Stmt, SurfaceProgram};
use super::term_syntax::literal_op;
use crate::pattern::{fun_heads, rename_binders, rename_free, Env, Expr, Guard, PatRef, Pattern, Site};
use crate::rewrite::{PatternDef, Rule, RuleClause, RuleSet, RuleSetError, Template};
use crate::term::{name, Name, OperatorSignature, TermError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompileErrorKind {
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("unknown pattern `{0}`")]
    UnknownPattern(String),
    #[error("`{0}` is neither an operator nor a pattern")]
    UnknownName(String),
    #[error("patterns refer to each other cyclically: {}", .0.join(" -> "))]
    CyclicPatternReference(Vec<String>),
    #[error(transparent)]
    Signature(#[from] TermError),
    #[error("`{name}` takes {expected} argument(s), found {found}")]
    ArgumentCount {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("alternates of `{name}` disagree on parameter count ({expected} vs {found})")]
    AlternateParams {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("`{0}` is both an operator and a pattern")]
    NameClash(String),
    #[error("`{0}` is declared twice")]
    Duplicate(String),
    #[error("recursive call arguments must be variables")]
    RecursiveCallArgument,
    #[error("argument for function variable `{0}` must be a name")]
    FunctionArgument(String),
    #[error("`{0}` in a match constraint must be a parameter or local")]
    ConstraintTarget(String),
    #[error("alias `{0}` refers to itself")]
    CyclicAlias(String),
    #[error("`{var}` is not a parameter of `{pattern}`")]
    NotAParameter { pattern: String, var: String },
    #[error("patterns cannot be called from a rule template")]
    PatternInTemplate,
    #[error(transparent)]
    RuleSet(#[from] RuleSetError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct CompileError {
    pub pos: Pos,
    pub kind: CompileErrorKind,
}

impl fmt::Display for CompileError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.pos, self.kind)
    }
}

fn err<T>(pos: Pos, kind: CompileErrorKind) -> Result<T, CompileError> {
    Err(CompileError { pos, kind })
}

#[derive(Clone)]
struct Compiled {
    params: Vec<Name>,
    body: PatRef,
}

enum State {
    Visiting,
    Done(Compiled),
}

struct Compiler<'a> {
    sig: OperatorSignature,
    groups: BTreeMap<&'a str, Vec<&'a PatternDecl>>,
    state: BTreeMap<&'a str, State>,
    stack: Vec<&'a str>,
    fresh: usize,
}

pub fn compile_program(sp: &SurfaceProgram) -> Result<RuleSet, CompileError> {
    let mut sig = OperatorSignature::new();
    for decl in &sp.op_decls {
        sig.declare(&decl.name, decl.arity)
            .map_err(|e| CompileError { pos: decl.pos, kind: e.into() })?;
    }
    let mut literals = Vec::new();
    for def in &sp.pattern_defs {
        collect_literals(&def.ret, &mut literals);
        for stmt in &def.stmts {
            if let Stmt::Constraint { body, .. } | Stmt::Alias { body, .. } = stmt {
                collect_literals(body, &mut literals);
            }
        }
    }
    for rule in &sp.rule_defs {
        collect_literals(&rule.template, &mut literals);
    }
    for (lit, pos) in literals {
        sig.declare(&literal_op(&lit), 0)
            .map_err(|e| CompileError { pos, kind: e.into() })?;
    }

    let mut order: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<&str, Vec<&PatternDecl>> = BTreeMap::new();
    for def in &sp.pattern_defs {
        if sig.contains(&def.name) {
            return err(def.pos, CompileErrorKind::NameClash(def.name.clone()));
        }
        let alts = groups.entry(&def.name).or_default();
        if alts.is_empty() {
            order.push(&def.name);
        }
        alts.push(def);
    }
    let mut c = Compiler {
        sig,
        groups,
        state: BTreeMap::new(),
        stack: Vec::new(),
        fresh: 0,
    };
    let mut defs = Vec::new();
    for pname in &order {
        let compiled = c.group(pname, c.groups[pname][0].pos)?;
        defs.push(PatternDef {
            name: name(pname),
            params: compiled.params,
            body: compiled.body,
        });
    }

    let mut rule_order: Vec<&str> = Vec::new();
    let mut rules: BTreeMap<&str, Rule> = BTreeMap::new();
    for rd in &sp.rule_defs {
        let Some(def) = defs.iter().find(|d| *d.name == rd.pattern) else {
            return err(rd.pos, CompileErrorKind::UnknownPattern(rd.pattern.clone()));
        };
        let clause = c.clause(def, rd)?;
        rules
            .entry(&rd.pattern)
            .or_insert_with(|| {
                rule_order.push(&rd.pattern);
                Rule {
                    pattern_name: def.name.clone(),
                    clauses: Vec::new(),
                }
            })
            .clauses
            .push(clause);
    }
    let rules = rule_order.iter().map(|p| rules.remove(p).expect("collected")).collect();
    RuleSet::new(c.sig, defs, rules).map_err(|e| CompileError {
        pos: Pos::default(),
        kind: e.into(),
    })
}

fn collect_literals(e: &PExpr, out: &mut Vec<(String, Pos)>) {
    match e {
        PExpr::Num(n, pos) => out.push((n.clone(), *pos)),
        PExpr::Name(..) => {}
        PExpr::Call(_, args, _) | PExpr::FunCall(_, args, _) => {
            args.iter().for_each(|a| collect_literals(a, out))
        }
    }
}

/// Per-alternate scope.
struct Scope<'a> {
    pattern: &'a str,
    params: Vec<Name>,
    vars: BTreeSet<String>,
    aliases: BTreeMap<&'a str, &'a PExpr>,
    expanding: Vec<&'a str>,
    recursive: bool,
}

impl<'a> Compiler<'a> {
    fn next_fresh(&mut self, prefix: &str) -> Name {
        self.fresh += 1;
        name(&format!("{prefix}#{}", self.fresh))
    }

    fn group(&mut self, pname: &'a str, pos: Pos) -> Result<Compiled, CompileError> {
        match self.state.get(pname) {
            Some(State::Done(c)) => return Ok(c.clone()),
            Some(State::Visiting) => {
                let start = self.stack.iter().position(|p| *p == pname).unwrap_or(0);
                let mut cycle: Vec<String> = self.stack[start..].iter().map(|s| s.to_string()).collect();
                cycle.push(pname.to_string());
                return err(pos, CompileErrorKind::CyclicPatternReference(cycle));
            }
            None => {}
        }
        let Some(alts) = self.groups.get(pname).cloned() else {
            return err(pos, CompileErrorKind::UnknownPattern(pname.to_string()));
        };
        self.state.insert(pname, State::Visiting);
        self.stack.push(pname);

        let canonical: Vec<Name> = alts[0].params.iter().map(|p| name(p)).collect();
        let mut bodies = Vec::new();
        let mut recursive = false;
        for alt in &alts {
            if alt.params.len() != canonical.len() {
                return err(
                    alt.pos,
                    CompileErrorKind::AlternateParams {
                        name: pname.to_string(),
                        expected: canonical.len(),
                        found: alt.params.len(),
                    },
                );
            }
            let (body, rec) = self.alternate(alt)?;
            recursive |= rec;
            let env: Env = alt
                .params
                .iter()
                .map(|p| name(p))
                .zip(canonical.iter().cloned())
                .collect();
            bodies.push(Arc::unwrap_or_clone(rename_free(&body, &env)));
        }
        let mut body = Pattern::alts(bodies).expect("at least one alternate");
        if recursive {
            body = Pattern::Mu(Arc::new(crate::pattern::MuPattern {
                name: name(pname),
                formals: canonical.clone(),
                actuals: canonical.clone(),
                body: Arc::new(body),
                site: Site::default(),
            }));
        }
        let compiled = Compiled {
            params: canonical,
            body: Arc::new(body),
        };
        self.stack.pop();
        self.state.insert(pname, State::Done(compiled.clone()));
        Ok(compiled)
    }

    fn alternate(&mut self, def: &'a PatternDecl) -> Result<(PatRef, bool), CompileError> {
        let mut scope = Scope {
            pattern: &def.name,
            params: def.params.iter().map(|p| name(p)).collect(),
            vars: BTreeSet::new(),
            aliases: BTreeMap::new(),
            expanding: Vec::new(),
            recursive: false,
        };
        let mut locals: Vec<Name> = Vec::new();
        for p in &def.params {
            if !scope.vars.insert(p.clone()) {
                return err(def.pos, CompileErrorKind::Duplicate(p.clone()));
            }
        }
        for stmt in &def.stmts {
            match stmt {
                Stmt::Local { name: l, pos } => {
                    if !scope.vars.insert(l.clone()) {
                        return err(*pos, CompileErrorKind::Duplicate(l.clone()));
                    }
                    locals.push(name(l));
                }
                Stmt::Alias { name: a, body, pos } => {
                    if scope.vars.contains(a) || scope.aliases.insert(a, body).is_some() {
                        return err(*pos, CompileErrorKind::Duplicate(a.clone()));
                    }
                }
                Stmt::Constraint { .. } | Stmt::Assert { .. } => {}
            }
        }
        // aliases mentioned in guards need a variable; bind it with a match constraint
        let mut materialized: Vec<(&'a str, &'a PExpr)> = Vec::new();
        for stmt in &def.stmts {
            if let Stmt::Assert { guard, .. } = stmt {
                let mut used = Vec::new();
                guard_vars(guard, &mut used);
                for (v, _) in used {
                    if let Some((a, body)) = scope.aliases.get_key_value(v.as_str()) {
                        if !materialized.iter().any(|(m, _)| m == a) {
                            materialized.push((a, body));
                        }
                    }
                }
            }
        }
        for (a, _) in &materialized {
            scope.aliases.remove(a);
            scope.vars.insert(a.to_string());
            locals.push(name(a));
        }

        let mut body = self.pexpr(&def.ret, &mut scope)?;
        for (a, alias_body) in &materialized {
            let c = self.pexpr(alias_body, &mut scope)?;
            body = Pattern::MatchConstr {
                body: Arc::new(body),
                var: name(a),
                constraint: Arc::new(c),
            };
        }
        let mut guards = Vec::new();
        for stmt in &def.stmts {
            match stmt {
                Stmt::Constraint { var, body: c, pos } => {
                    if !scope.vars.contains(var) {
                        return err(*pos, CompileErrorKind::ConstraintTarget(var.clone()));
                    }
                    let c = self.pexpr(c, &mut scope)?;
                    body = Pattern::MatchConstr {
                        body: Arc::new(body),
                        var: name(var),
                        constraint: Arc::new(c),
                    };
                }
                Stmt::Assert { guard, .. } => {
                    guards.push(lower_guard(guard, &|v, pos| {
                        if scope.vars.contains(v) {
                            Ok(name(v))
                        } else {
                            err(pos, CompileErrorKind::UnboundVariable(v.to_string()))
                        }
                    })?);
                }
                Stmt::Local { .. } | Stmt::Alias { .. } => {}
            }
        }
        if !guards.is_empty() {
            body = Pattern::guarded(body, Guard::all(guards));
        }
        for l in locals.iter().rev() {
            body = Pattern::Exists(l.clone(), Arc::new(body));
        }
        Ok((Arc::new(body), scope.recursive))
    }

    fn pexpr(&mut self, e: &'a PExpr, scope: &mut Scope<'a>) -> Result<Pattern, CompileError> {
        match e {
            PExpr::Num(n, _) => Ok(Pattern::constant(&literal_op(n))),
            PExpr::Name(x, pos) => {
                if scope.vars.contains(x) {
                    return Ok(Pattern::var(x));
                }
                if let Some(&alias) = scope.aliases.get(x.as_str()) {
                    if scope.expanding.contains(&x.as_str()) {
                        return err(*pos, CompileErrorKind::CyclicAlias(x.clone()));
                    }
                    scope.expanding.push(x);
                    let out = self.pexpr(alias, scope);
                    scope.expanding.pop();
                    return out;
                }
                if let Some(arity) = self.sig.arity(x) {
                    if arity != 0 {
                        return err(
                            *pos,
                            CompileErrorKind::ArgumentCount {
                                name: x.clone(),
                                expected: arity,
                                found: 0,
                            },
                        );
                    }
                    return Ok(Pattern::constant(x));
                }
                if self.groups.contains_key(x.as_str()) {
                    return self.call(x, &[], *pos, scope);
                }
                err(*pos, CompileErrorKind::UnboundVariable(x.clone()))
            }
            PExpr::Call(f, args, pos) => {
                if self.groups.contains_key(f.as_str()) {
                    return self.call(f, args, *pos, scope);
                }
                match self.sig.arity(f) {
                    Some(n) if n == args.len() => {
                        let args = args
                            .iter()
                            .map(|a| self.pexpr(a, scope))
                            .collect::<Result<Vec<_>, _>>()?;
                        Ok(Pattern::app(f, args))
                    }
                    Some(n) => err(
                        *pos,
                        CompileErrorKind::ArgumentCount {
                            name: f.clone(),
                            expected: n,
                            found: args.len(),
                        },
                    ),
                    None => err(*pos, CompileErrorKind::UnknownName(f.clone())),
                }
            }
            PExpr::FunCall(fv, args, _) => {
                let args = args
                    .iter()
                    .map(|a| self.pexpr(a, scope))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(Pattern::fun_app(fv, args))
            }
        }
    }

    fn call(
        &mut self,
        callee: &'a str,
        args: &'a [PExpr],
        pos: Pos,
        scope: &mut Scope<'a>,
    ) -> Result<Pattern, CompileError> {
        if callee == scope.pattern {
            if args.len() != scope.params.len() {
                return err(
                    pos,
                    CompileErrorKind::ArgumentCount {
                        name: callee.to_string(),
                        expected: scope.params.len(),
                        found: args.len(),
                    },
                );
            }
            let mut names = Vec::new();
            for a in args {
                match a {
                    PExpr::Name(x, _) if scope.vars.contains(x) => names.push(name(x)),
                    _ => return err(a.pos(), CompileErrorKind::RecursiveCallArgument),
                }
            }
            scope.recursive = true;
            return Ok(Pattern::RecCall(name(callee), names));
        }
        let compiled = self.group(callee, pos)?;
        if args.len() != compiled.params.len() {
            return err(
                pos,
                CompileErrorKind::ArgumentCount {
                    name: callee.to_string(),
                    expected: compiled.params.len(),
                    found: args.len(),
                },
            );
        }
        let fun_params = fun_heads(&compiled.body);
        let body = rename_binders(&compiled.body, &mut |_| self.next_fresh("v"));
        let mut env = Env::new();
        let mut pending = Vec::new();
        for (param, arg) in compiled.params.iter().zip(args) {
            let direct = match arg {
                PExpr::Name(x, _) if scope.vars.contains(x) => Some(name(x)),
                PExpr::Name(x, _) if fun_params.contains(param) => Some(name(x)),
                _ if fun_params.contains(param) => {
                    return err(arg.pos(), CompileErrorKind::FunctionArgument(param.to_string()))
                }
                _ => None,
            };
            match direct {
                Some(x) => {
                    env.insert(param.clone(), x);
                }
                None => {
                    let w = self.next_fresh("w");
                    env.insert(param.clone(), w.clone());
                    pending.push((w, self.pexpr(arg, scope)?));
                }
            }
        }
        let mut out = Arc::unwrap_or_clone(rename_free(&body, &env));
        for (w, c) in &pending {
            out = Pattern::MatchConstr {
                body: Arc::new(out),
                var: w.clone(),
                constraint: Arc::new(c.clone()),
            };
        }
        for (w, _) in pending.iter().rev() {
            out = Pattern::Exists(w.clone(), Arc::new(out));
        }
        Ok(out)
    }

    fn clause(&self, def: &PatternDef, rd: &RuleDecl) -> Result<RuleClause, CompileError> {
        let is_param = |v: &str| def.params.iter().any(|p| &**p == v);
        let not_param = |v: &str, pos| CompileError {
            pos,
            kind: CompileErrorKind::NotAParameter {
                pattern: rd.pattern.clone(),
                var: v.to_string(),
            },
        };
        let guard = match &rd.guard {
            None => Guard::True,
            Some(g) => lower_guard(g, &|v, pos| {
                if is_param(v) {
                    Ok(name(v))
                } else {
                    Err(not_param(v, pos))
                }
            })?,
        };
        let template = self.template(&rd.template, &is_param, &not_param)?;
        Ok(RuleClause { guard, template })
    }

    fn template(
        &self,
        e: &PExpr,
        is_param: &dyn Fn(&str) -> bool,
        not_param: &dyn Fn(&str, Pos) -> CompileError,
    ) -> Result<Template, CompileError> {
        let args = |xs: &[PExpr]| -> Result<Vec<Template>, CompileError> {
            xs.iter().map(|a| self.template(a, is_param, not_param)).collect()
        };
        match e {
            PExpr::Num(n, _) => Ok(Template::app(&literal_op(n), vec![])),
            PExpr::Name(x, pos) => {
                if is_param(x) {
                    Ok(Template::var(x))
                } else if self.sig.arity(x) == Some(0) {
                    Ok(Template::app(x, vec![]))
                } else {
                    Err(not_param(x, *pos))
                }
            }
            PExpr::Call(f, xs, pos) => {
                if self.groups.contains_key(f.as_str()) {
                    return err(*pos, CompileErrorKind::PatternInTemplate);
                }
                match self.sig.arity(f) {
                    Some(n) if n == xs.len() => Ok(Template::app(f, args(xs)?)),
                    Some(n) => err(
                        *pos,
                        CompileErrorKind::ArgumentCount {
                            name: f.clone(),
                            expected: n,
                            found: xs.len(),
                        },
                    ),
                    None => err(*pos, CompileErrorKind::UnknownName(f.clone())),
                }
            }
            PExpr::FunCall(fv, xs, pos) => {
                if !is_param(fv) {
                    return Err(not_param(fv, *pos));
                }
                Ok(Template::fun_app(fv, args(xs)?))
            }
        }
    }
}

fn guard_vars(g: &GExpr, out: &mut Vec<(String, Pos)>) {
    fn arith(a: &AExpr, out: &mut Vec<(String, Pos)>) {
        match a {
            AExpr::Attr { var, pos, .. } => out.push((var.clone(), *pos)),
            AExpr::Num(_) => {}
            AExpr::Add(x, y) | AExpr::Sub(x, y) | AExpr::Mul(x, y) => {
                arith(x, out);
                arith(y, out);
            }
        }
    }
    match g {
        GExpr::True => {}
        GExpr::Eq(a, b) | GExpr::Lt(a, b) => {
            arith(a, out);
            arith(b, out);
        }
        GExpr::And(a, b) | GExpr::Or(a, b) => {
            guard_vars(a, out);
            guard_vars(b, out);
        }
        GExpr::Not(a) => guard_vars(a, out),
    }
}

type Resolve<'r> = dyn Fn(&str, Pos) -> Result<Name, CompileError> + 'r;

fn lower_guard(g: &GExpr, resolve: &Resolve<'_>) -> Result<Guard, CompileError> {
    fn arith(a: &AExpr, resolve: &Resolve<'_>) -> Result<Expr, CompileError> {
        Ok(match a {
            AExpr::Attr { var, key, pos } => Expr::VarAttr(resolve(var, *pos)?, name(key)),
            AExpr::Num(n) => Expr::Lit(n.clone()),
            AExpr::Add(x, y) => Expr::Add(Box::new(arith(x, resolve)?), Box::new(arith(y, resolve)?)),
            AExpr::Sub(x, y) => Expr::Sub(Box::new(arith(x, resolve)?), Box::new(arith(y, resolve)?)),
            AExpr::Mul(x, y) => Expr::Mul(Box::new(arith(x, resolve)?), Box::new(arith(y, resolve)?)),
        })
    }
    Ok(match g {
        GExpr::True => Guard::True,
        GExpr::Eq(a, b) => Guard::Eq(arith(a, resolve)?, arith(b, resolve)?),
        GExpr::Lt(a, b) => Guard::Lt(arith(a, resolve)?, arith(b, resolve)?),
        GExpr::And(a, b) => Guard::and(lower_guard(a, resolve)?, lower_guard(b, resolve)?),
        GExpr::Or(a, b) => Guard::or(lower_guard(a, resolve)?, lower_guard(b, resolve)?),
        GExpr::Not(a) => Guard::not(lower_guard(a, resolve)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::program::parse_program;
    use crate::pattern::erase_sites;

    fn compile(src: &str) -> Result<RuleSet, CompileError> {
        compile_program(&parse_program(src).unwrap())
    }

    fn body(rs: &RuleSet, p: &str) -> Pattern {
        erase_sites(&rs.pattern(p).unwrap().body)
    }

    #[test]
    fn unary_chain_compiles_to_mu() {
        let rs = compile(
            "op RELU/1;
             pattern UnaryChain(x, F) { return $F(UnaryChain(x, F)); }
             pattern UnaryChain(x, F) { return $F(x); }",
        )
        .unwrap();
        let expected = Pattern::mu(
            "UnaryChain",
            &["x", "F"],
            &["x", "F"],
            Pattern::alt(
                Pattern::fun_app("F", vec![Pattern::rec_call("UnaryChain", &["x", "F"])]),
                Pattern::fun_app("F", vec![Pattern::var("x")]),
            ),
        );
        assert_eq!(body(&rs, "UnaryChain"), expected);
    }

    #[test]
    fn half_alternates_with_literals() {
        let rs = compile(
            "op Div/2; op Mul/2;
             pattern Half(x) { return Div(x, 2); }
             pattern Half(x) { return Mul(x, 0.5); }",
        )
        .unwrap();
        let expected = Pattern::alt(
            Pattern::app("Div", vec![Pattern::var("x"), Pattern::constant("LitNat_2")]),
            Pattern::app("Mul", vec![Pattern::var("x"), Pattern::constant("LitStr_0p5")]),
        );
        assert_eq!(body(&rs, "Half"), expected);
        assert_eq!(rs.signature().arity("LitNat_2"), Some(0));
    }

    #[test]
    fn alternates_are_renamed_to_first_parameters() {
        let rs = compile(
            "op f/2;
             pattern P(x, y) { return f(x, y); }
             pattern P(a, b) { return f(b, a); }",
        )
        .unwrap();
        assert_eq!(body(&rs, "P").to_string(), "(f(x, y) | f(y, x))");
    }

    #[test]
    fn locals_constraints_and_asserts() {
        let rs = compile(
            "op f/1; op g/2;
             pattern P(x) {
                local y;
                x <= g(y, y);
                assert y.rank == 1;
                return f(x);
             }",
        )
        .unwrap();
        assert_eq!(
            body(&rs, "P").to_string(),
            "(exists y. ((f(x) with x <= g(y, y)) where y.rank == 1))"
        );
    }

    #[test]
    fn inlining_freshens_callee_locals() {
        let rs = compile(
            "op f/1; op g/2;
             pattern Q(z) { local w; z <= f(w); return z; }
             pattern P(x, y) { return g(Q(x), Q(y)); }",
        )
        .unwrap();
        assert_eq!(
            body(&rs, "P").to_string(),
            "g((exists v#1. (x with x <= f(v#1))), (exists v#2. (y with y <= f(v#2))))"
        );
    }

    #[test]
    fn non_variable_arguments_become_constraints() {
        let rs = compile(
            "op f/1; op C/0;
             pattern Q(z) { return f(z); }
             pattern P() { return Q(C); }",
        )
        .unwrap();
        assert_eq!(body(&rs, "P").to_string(), "(exists w#1. (f(w#1) with w#1 <= C()))");
    }

    #[test]
    fn alias_inlines_and_materializes_for_guards() {
        let rs = compile(
            "op f/1; op T/1;
             pattern P(x) { t = T(x); return f(t); }
             pattern Q(x) { t = T(x); assert t.rank == 2; return f(t); }",
        )
        .unwrap();
        assert_eq!(body(&rs, "P").to_string(), "f(T(x))");
        assert_eq!(
            body(&rs, "Q").to_string(),
            "(exists t. ((f(t) with t <= T(x)) where t.rank == 2))"
        );
    }

    #[test]
    fn rules_merge_and_default_guard() {
        let rs = compile(
            "op f/1; op A/1; op B/1;
             pattern P(x) { return f(x); }
             rule P when x.rank == 1 => A(x);
             rule P => B(x);",
        )
        .unwrap();
        assert_eq!(rs.rules().len(), 1);
        assert_eq!(rs.rules()[0].clauses.len(), 2);
        assert_eq!(rs.rules()[0].clauses[1].guard, Guard::True);
    }

    #[test]
    fn errors() {
        let kind = |src: &str| compile(src).unwrap_err().kind;
        assert_eq!(
            kind("pattern Bad(x) { return y; }"),
            CompileErrorKind::UnboundVariable("y".into())
        );
        assert!(matches!(
            kind("op f/1; pattern A(x) { return f(B(x)); } pattern B(x) { return f(A(x)); }"),
            CompileErrorKind::CyclicPatternReference(_)
        ));
        assert_eq!(
            kind("op f/1; pattern P(x) { return f(P(f(x))); }"),
            CompileErrorKind::RecursiveCallArgument
        );
        assert!(matches!(
            kind("op f/1; pattern P(x) { return f(x, x); }"),
            CompileErrorKind::ArgumentCount { .. }
        ));
        assert_eq!(
            kind("op f/1; pattern P(x) { return f(x); } rule P => f(y);"),
            CompileErrorKind::NotAParameter {
                pattern: "P".into(),
                var: "y".into()
            }
        );
        assert_eq!(kind("op f/1; rule Q => f;"), CompileErrorKind::UnknownPattern("Q".into()));
        assert!(matches!(kind("op f/1; op f/2;"), CompileErrorKind::Signature(_)));
        assert_eq!(
            kind("op f/1; pattern f(x) { return x; }"),
            CompileErrorKind::NameClash("f".into())
        );
        let e = compile("op f/1;\npattern P(x) {\n  return g(x);\n}").unwrap_err();
        assert_eq!(e.to_string(), "3:10: `g` is neither an operator nor a pattern");
    }
}
