//! Rules, templates and the destructive fixpoint rewriter.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::machine::{Machine, MachineConfig, Outcome, DEFAULT_STEP_BUDGET};
use crate::pattern::{eval_guard, free_pattern_vars, number_sites, well_formed, Diagnostic, Guard, PatRef, Pattern, Truth};
use crate::term::{AttributeInterpreter, FunSubstitution, Name, OperatorSignature, Substitution, Term};

pub const DEFAULT_PASS_LIMIT: u64 = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Template {
    Var(Name),
    App(Name, Vec<Template>),
    FunApp(Name, Vec<Template>),
}

impl Template {
    pub fn var(x: &str) -> Template {
        Template::Var(Name::from(x))
    }

    pub fn app(f: &str, args: Vec<Template>) -> Template {
        Template::App(Name::from(f), args)
    }

    pub fn fun_app(f: &str, args: Vec<Template>) -> Template {
        Template::FunApp(Name::from(f), args)
    }

    fn vars_into(&self, pv: &mut BTreeSet<Name>, fv: &mut BTreeSet<Name>) {
        match self {
            Template::Var(x) => {
                pv.insert(x.clone());
            }
            Template::App(_, args) => args.iter().for_each(|a| a.vars_into(pv, fv)),
            Template::FunApp(f, args) => {
                fv.insert(f.clone());
                args.iter().for_each(|a| a.vars_into(pv, fv));
            }
        }
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (head, args) = match self {
            Template::Var(x) => return f.write_str(x),
            Template::App(op, args) => (op.to_string(), args),
            Template::FunApp(fv, args) => (format!("${fv}"), args),
        };
        write!(f, "{head}(")?;
        for (i, a) in args.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(")")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleClause {
    pub guard: Guard,
    pub template: Template,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub pattern_name: Name,
    pub clauses: Vec<RuleClause>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternDef {
    pub name: Name,
    pub params: Vec<Name>,
    pub body: PatRef,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuleSetError {
    #[error("rule refers to unknown pattern `{0}`")]
    UnknownPattern(String),
    #[error("pattern `{0}` is defined twice")]
    DuplicatePattern(String),
    #[error("rule for `{0}` has no clauses")]
    EmptyRule(String),
    #[error("rule for `{pattern}` uses `{var}`, which is not a parameter")]
    NotAParameter { pattern: String, var: String },
    #[error("pattern `{pattern}`: {diagnostic}")]
    IllFormed { pattern: String, diagnostic: Diagnostic },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("template variable `{0}` is unbound")]
    UnboundTemplateVar(String),
    #[error("template function variable `{0}` is unbound")]
    UnboundTemplateFunVar(String),
    #[error("operator `{op}` expects {expected} argument(s), found {found}")]
    ArityMismatch { op: String, expected: usize, found: usize },
    #[error("unknown operator `{0}`")]
    UnknownOperator(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RewriteError {
    #[error("pattern `{pattern}` exhausted the step budget")]
    BudgetExhausted { pattern: String },
    #[error("pattern `{pattern}` reached a stuck state: {description}")]
    Stuck { pattern: String, description: String },
    #[error("rule for `{pattern}`: {source}")]
    Template {
        pattern: String,
        #[source]
        source: TemplateError,
    },
}

/// A compiled, validated set of patterns and rules.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleSet {
    signature: OperatorSignature,
    patterns: Vec<PatternDef>,
    rules: Vec<Rule>,
    rules_by_pattern: Vec<Vec<usize>>,
    heads: Vec<Option<BTreeSet<Name>>>,
}

impl RuleSet {
    pub fn new(
        signature: OperatorSignature,
        patterns: Vec<PatternDef>,
        rules: Vec<Rule>,
    ) -> Result<RuleSet, RuleSetError> {
        let mut index: BTreeMap<Name, usize> = BTreeMap::new();
        let mut defs = Vec::with_capacity(patterns.len());
        for (i, def) in patterns.into_iter().enumerate() {
            if index.insert(def.name.clone(), i).is_some() {
                return Err(RuleSetError::DuplicatePattern(def.name.to_string()));
            }
            if let Some(d) = well_formed(&signature, &def.body).into_iter().next() {
                return Err(RuleSetError::IllFormed {
                    pattern: def.name.to_string(),
                    diagnostic: d,
                });
            }
            defs.push(PatternDef {
                body: number_sites(&def.body),
                ..def
            });
        }
        let mut rules_by_pattern = vec![Vec::new(); defs.len()];
        for (ri, rule) in rules.iter().enumerate() {
            let pi = *index
                .get(&rule.pattern_name)
                .ok_or_else(|| RuleSetError::UnknownPattern(rule.pattern_name.to_string()))?;
            if rule.clauses.is_empty() {
                return Err(RuleSetError::EmptyRule(rule.pattern_name.to_string()));
            }
            let params: BTreeSet<&Name> = defs[pi].params.iter().collect();
            for clause in &rule.clauses {
                let mut pv = BTreeSet::new();
                let mut fv = BTreeSet::new();
                clause.template.vars_into(&mut pv, &mut fv);
                pv.extend(clause.guard.vars());
                if let Some(v) = pv.iter().chain(&fv).find(|v| !params.contains(v)) {
                    return Err(RuleSetError::NotAParameter {
                        pattern: rule.pattern_name.to_string(),
                        var: v.to_string(),
                    });
                }
                check_template_ops(&signature, &clause.template).map_err(|d| {
                    RuleSetError::IllFormed {
                        pattern: rule.pattern_name.to_string(),
                        diagnostic: d,
                    }
                })?;
            }
            rules_by_pattern[pi].push(ri);
        }
        let heads = defs.iter().map(|d| root_heads(&d.body)).collect();
        Ok(RuleSet {
            signature,
            patterns: defs,
            rules,
            rules_by_pattern,
            heads,
        })
    }

    pub fn signature(&self) -> &OperatorSignature {
        &self.signature
    }

    pub fn patterns(&self) -> &[PatternDef] {
        &self.patterns
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn pattern(&self, name: &str) -> Option<&PatternDef> {
        self.patterns.iter().find(|d| &*d.name == name)
    }

    /// Rules attached to the pattern at `index`, in declaration order.
    pub fn rules_for(&self, index: usize) -> impl Iterator<Item = &Rule> + '_ {
        self.rules_by_pattern[index].iter().map(|&i| &self.rules[i])
    }

    /// Whether pattern `index` can only match terms headed by one of a known set of operators.
    fn may_match(&self, index: usize, t: &Term) -> bool {
        self.heads[index].as_ref().is_none_or(|ops| ops.contains(t.op()))
    }
}

fn check_template_ops(sig: &OperatorSignature, r: &Template) -> Result<(), Diagnostic> {
    match r {
        Template::Var(_) => Ok(()),
        Template::App(f, args) => {
            match sig.arity(f) {
                None => return Err(Diagnostic::UnknownOperator(f.to_string())),
                Some(n) if n != args.len() => {
                    return Err(Diagnostic::ArityMismatch {
                        op: f.to_string(),
                        expected: n,
                        found: args.len(),
                    })
                }
                Some(_) => {}
            }
            args.iter().try_for_each(|a| check_template_ops(sig, a))
        }
        Template::FunApp(_, args) => args.iter().try_for_each(|a| check_template_ops(sig, a)),
    }
}

/// The operators a match at the root must have, or `None` if unconstrained.
fn root_heads(p: &Pattern) -> Option<BTreeSet<Name>> {
    match p {
        Pattern::App(f, _) => Some(BTreeSet::from([f.clone()])),
        Pattern::Alt(l, r) => {
            let mut s = root_heads(l)?;
            s.extend(root_heads(r)?);
            Some(s)
        }
        Pattern::Guarded(b, _) | Pattern::Exists(_, b) => root_heads(b),
        Pattern::MatchConstr { body, .. } => root_heads(body),
        Pattern::Mu(mu) => root_heads(&mu.body),
        Pattern::Var(_) | Pattern::FunApp(..) | Pattern::RecCall(..) => None,
    }
}

pub fn instantiate_template(
    sig: &OperatorSignature,
    r: &Template,
    theta: &Substitution,
    phi: &FunSubstitution,
) -> Result<Term, TemplateError> {
    let build = |op: &Name, args: &[Template]| -> Result<Term, TemplateError> {
        let expected = sig
            .arity(op)
            .ok_or_else(|| TemplateError::UnknownOperator(op.to_string()))?;
        if expected != args.len() {
            return Err(TemplateError::ArityMismatch {
                op: op.to_string(),
                expected,
                found: args.len(),
            });
        }
        let children = args
            .iter()
            .map(|a| instantiate_template(sig, a, theta, phi))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Term::from_parts(op.clone(), children, Default::default()))
    };
    match r {
        Template::Var(x) => theta
            .get(x)
            .cloned()
            .ok_or_else(|| TemplateError::UnboundTemplateVar(x.to_string())),
        Template::App(f, args) => build(f, args),
        Template::FunApp(fv, args) => {
            let f = phi
                .get(fv)
                .ok_or_else(|| TemplateError::UnboundTemplateFunVar(fv.to_string()))?;
            build(f, args)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RewriteConfig {
    pub pass_limit: u64,
    pub step_budget: u64,
}

impl Default for RewriteConfig {
    fn default() -> Self {
        RewriteConfig {
            pass_limit: DEFAULT_PASS_LIMIT,
            step_budget: DEFAULT_STEP_BUDGET,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RewriteStats {
    /// Fires per pattern name.
    pub fires: BTreeMap<String, u64>,
    pub traversals: u64,
    pub vm_steps: u64,
    pub non_terminating: bool,
}

impl RewriteStats {
    pub fn total_fires(&self) -> u64 {
        self.fires.values().sum()
    }
}

/// A successful rewrite at one node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fire {
    pub pattern: usize,
    pub replacement: Term,
}

/// Tries each pattern in declaration order; the first pattern that matches
/// and has a clause whose guard holds fires.
pub fn try_rewrite_at(
    rs: &RuleSet,
    interp: &dyn AttributeInterpreter,
    t: &Term,
    step_budget: u64,
    vm_steps: &mut u64,
) -> Result<Option<Fire>, RewriteError> {
    let machine = Machine::new(
        interp,
        MachineConfig {
            step_budget,
            mutation: None,
        },
    );
    for (pi, def) in rs.patterns.iter().enumerate() {
        if rs.rules_by_pattern[pi].is_empty() || !rs.may_match(pi, t) {
            continue;
        }
        let report = machine.run(&def.body, t, None);
        *vm_steps += report.steps;
        let (theta, phi) = match report.outcome {
            Outcome::Matched(theta, phi) => (theta, phi),
            Outcome::NoMatch => continue,
            Outcome::BudgetExhausted => {
                return Err(RewriteError::BudgetExhausted {
                    pattern: def.name.to_string(),
                })
            }
            Outcome::StuckState(description) => {
                return Err(RewriteError::Stuck {
                    pattern: def.name.to_string(),
                    description,
                })
            }
        };
        for rule in rs.rules_for(pi) {
            for clause in &rule.clauses {
                if eval_guard(interp, &theta, &clause.guard) == Truth::True {
                    let replacement = instantiate_template(&rs.signature, &clause.template, &theta, &phi)
                        .map_err(|source| RewriteError::Template {
                            pattern: def.name.to_string(),
                            source,
                        })?;
                    return Ok(Some(Fire {
                        pattern: pi,
                        replacement,
                    }));
                }
            }
        }
    }
    Ok(None)
}

/// Greedy destructive rewriting to a fixpoint.
///
/// Each traversal visits nodes in pre-order; on a fire the replacement is
/// spliced in and traversal restarts from the root. Nodes that precede the
/// last fire in pre-order and are not its ancestors are unchanged and
/// already known not to fire, so the restart resumes from the ancestors of
/// the fire site and then from the site itself.
pub fn rewrite_fixpoint(
    rs: &RuleSet,
    interp: &dyn AttributeInterpreter,
    t: &Term,
    config: RewriteConfig,
) -> Result<(Term, RewriteStats), RewriteError> {
    let mut stats = RewriteStats::default();
    let mut term = t.clone();
    let mut resume: Vec<usize> = Vec::new();
    let mut fired = 0u64;
    loop {
        stats.traversals += 1;
        let hit = scan_from(rs, interp, &term, &resume, config.step_budget, &mut stats.vm_steps)?;
        let Some((path, fire)) = hit else {
            return Ok((term, stats));
        };
        if fired >= config.pass_limit {
            stats.non_terminating = true;
            return Ok((term, stats));
        }
        fired += 1;
        *stats
            .fires
            .entry(rs.patterns[fire.pattern].name.to_string())
            .or_default() += 1;
        term = term.replace_at(&path, fire.replacement);
        resume = path;
    }
}

type Hit = Option<(Vec<usize>, Fire)>;

/// Finds the first firing node in pre-order, given that every node before
/// `start` that is not an ancestor of it is known not to fire.
fn scan_from(
    rs: &RuleSet,
    interp: &dyn AttributeInterpreter,
    root: &Term,
    start: &[usize],
    budget: u64,
    vm_steps: &mut u64,
) -> Result<Hit, RewriteError> {
    // ancestors of the resume point, root first
    let mut node = root;
    let mut spine = vec![root];
    for (depth, &i) in start.iter().enumerate() {
        if let Some(fire) = try_rewrite_at(rs, interp, node, budget, vm_steps)? {
            return Ok(Some((start[..depth].to_vec(), fire)));
        }
        node = &node.children()[i];
        spine.push(node);
    }
    // the subtree at the resume point, then everything after it
    let mut path = start.to_vec();
    if let Some(hit) = scan_subtree(rs, interp, node, &mut path, budget, vm_steps)? {
        return Ok(Some(hit));
    }
    for depth in (0..start.len()).rev() {
        let parent = spine[depth];
        for j in start[depth] + 1..parent.arity() {
            let mut path = start[..depth].to_vec();
            path.push(j);
            if let Some(hit) = scan_subtree(rs, interp, &parent.children()[j], &mut path, budget, vm_steps)? {
                return Ok(Some(hit));
            }
        }
    }
    Ok(None)
}

fn scan_subtree(
    rs: &RuleSet,
    interp: &dyn AttributeInterpreter,
    t: &Term,
    path: &mut Vec<usize>,
    budget: u64,
    vm_steps: &mut u64,
) -> Result<Hit, RewriteError> {
    if let Some(fire) = try_rewrite_at(rs, interp, t, budget, vm_steps)? {
        return Ok(Some((path.clone(), fire)));
    }
    // explicit stack of (node, next child index); `path` tracks the top node
    let base = path.len();
    let mut stack: Vec<(&Term, usize)> = vec![(t, 0)];
    while let Some(&(node, next)) = stack.last() {
        if next == node.arity() {
            stack.pop();
            if path.len() > base {
                path.pop();
            }
            continue;
        }
        stack.last_mut().expect("non-empty").1 += 1;
        let child = &node.children()[next];
        path.push(next);
        if let Some(fire) = try_rewrite_at(rs, interp, child, budget, vm_steps)? {
            return Ok(Some((path.clone(), fire)));
        }
        stack.push((child, 0));
    }
    path.truncate(base);
    Ok(None)
}

/// Every rule-bearing pattern that fires somewhere in `t`, as (path, pattern index).
pub fn firing_sites(
    rs: &RuleSet,
    interp: &dyn AttributeInterpreter,
    t: &Term,
    step_budget: u64,
) -> Result<Vec<(Vec<usize>, usize)>, RewriteError> {
    let mut out = Vec::new();
    let mut steps = 0;
    let mut stack = vec![(t.clone(), Vec::new())];
    while let Some((node, path)) = stack.pop() {
        if let Some(fire) = try_rewrite_at(rs, interp, &node, step_budget, &mut steps)? {
            out.push((path.clone(), fire.pattern));
        }
        for (i, c) in node.children().iter().enumerate().rev() {
            let mut p = path.clone();
            p.push(i);
            stack.push((c.clone(), p));
        }
    }
    Ok(out)
}

/// Parameters of a compiled pattern that occur free in its body.
pub fn bound_params(def: &PatternDef) -> Vec<Name> {
    let (pv, fv) = free_pattern_vars(&def.body);
    def.params
        .iter()
        .filter(|p| pv.contains(*p) || fv.contains(*p))
        .cloned()
        .collect()
}

pub fn pattern_def(name: &str, params: &[&str], body: Pattern) -> PatternDef {
    PatternDef {
        name: Name::from(name),
        params: params.iter().map(|p| Name::from(*p)).collect(),
        body: Arc::new(body),
    }
}
