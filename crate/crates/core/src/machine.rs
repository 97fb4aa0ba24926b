//! The backtracking matching machine.
//!
//! A running state is `(θ, φ, stack, k)`: the substitutions built so far, a
//! stack of saved choice points and a continuation of pending actions. Both
//! lists are persistent, so saving a continuation in a frame costs O(1).

use std::fmt;
use std::sync::Arc;

use crate::pattern::{eval_guard, unfold_mu, Guard, PatRef, Pattern, Truth};
use crate::term::{AttributeInterpreter, FunSubstitution, Name, Substitution, Term};

pub const DEFAULT_STEP_BUDGET: u64 = 100_000;

#[derive(Debug, Clone)]
pub enum Action {
    DoMatch(PatRef, Term),
    CheckGuard(Arc<Guard>),
    CheckBound(Name),
    BackMatch(Name, PatRef),
}

struct ContNode {
    head: Action,
    tail: Continuation,
    len: usize,
}

/// A persistent list of actions; the head is the next obligation.
#[derive(Clone, Default)]
pub struct Continuation(Option<Arc<ContNode>>);

impl Continuation {
    pub fn new() -> Self {
        Continuation(None)
    }

    pub fn cons(&self, head: Action) -> Continuation {
        Continuation(Some(Arc::new(ContNode {
            head,
            tail: self.clone(),
            len: self.len() + 1,
        })))
    }

    pub fn uncons(&self) -> Option<(&Action, &Continuation)> {
        self.0.as_deref().map(|n| (&n.head, &n.tail))
    }

    pub fn len(&self) -> usize {
        self.0.as_ref().map_or(0, |n| n.len)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_none()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Action> + '_ {
        let mut cur = self;
        std::iter::from_fn(move || {
            let (head, tail) = cur.uncons()?;
            cur = tail;
            Some(head)
        })
    }
}

impl fmt::Debug for Continuation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.iter()).finish()
    }
}

#[derive(Debug, Clone)]
pub struct Frame {
    pub theta: Substitution,
    pub phi: FunSubstitution,
    pub k: Continuation,
}

struct StackNode {
    frame: Frame,
    rest: Stack,
    depth: usize,
}

/// Persistent stack of backtracking frames.
#[derive(Clone, Default)]
pub struct Stack(Option<Arc<StackNode>>);

impl Stack {
    pub fn new() -> Self {
        Stack(None)
    }

    pub fn push(&self, frame: Frame) -> Stack {
        Stack(Some(Arc::new(StackNode {
            frame,
            rest: self.clone(),
            depth: self.depth() + 1,
        })))
    }

    pub fn pop(&self) -> Option<(&Frame, &Stack)> {
        self.0.as_deref().map(|n| (&n.frame, &n.rest))
    }

    pub fn depth(&self) -> usize {
        self.0.as_ref().map_or(0, |n| n.depth)
    }
}

impl fmt::Debug for Stack {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Stack(depth={})", self.depth())
    }
}

#[derive(Debug, Clone)]
pub struct Running {
    pub theta: Substitution,
    pub phi: FunSubstitution,
    pub stack: Stack,
    pub k: Continuation,
}

#[derive(Debug, Clone)]
pub enum MachineState {
    Running(Running),
    Success(Substitution, FunSubstitution),
    Failure,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Matched(Substitution, FunSubstitution),
    NoMatch,
    BudgetExhausted,
    StuckState(String),
}

impl Outcome {
    pub fn is_matched(&self) -> bool {
        matches!(self, Outcome::Matched(..))
    }
}

/// Transition rules, named after the small-step rules they implement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rule {
    Success,
    MatchVarBind,
    MatchVarBound,
    MatchVarConflict,
    MatchFun,
    MatchFunConflict,
    MatchAlt,
    MatchGuard,
    CheckGuardContinue,
    CheckGuardBacktrack,
    MatchExists,
    CheckName,
    CheckNameUnbound,
    MatchMatchConstr,
    MatchConstr,
    MatchConstrUnbound,
    MatchFunVarBind,
    MatchFunVarBound,
    MatchFunVarConflict,
    MatchMu,
}

impl Rule {
    pub const ALL: [Rule; 20] = [
        Rule::Success,
        Rule::MatchVarBind,
        Rule::MatchVarBound,
        Rule::MatchVarConflict,
        Rule::MatchFun,
        Rule::MatchFunConflict,
        Rule::MatchAlt,
        Rule::MatchGuard,
        Rule::CheckGuardContinue,
        Rule::CheckGuardBacktrack,
        Rule::MatchExists,
        Rule::CheckName,
        Rule::CheckNameUnbound,
        Rule::MatchMatchConstr,
        Rule::MatchConstr,
        Rule::MatchConstrUnbound,
        Rule::MatchFunVarBind,
        Rule::MatchFunVarBound,
        Rule::MatchFunVarConflict,
        Rule::MatchMu,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Rule::Success => "ST-Success",
            Rule::MatchVarBind => "ST-Match-Var-Bind",
            Rule::MatchVarBound => "ST-Match-Var-Bound",
            Rule::MatchVarConflict => "ST-Match-Var-Conflict",
            Rule::MatchFun => "ST-Match-Fun",
            Rule::MatchFunConflict => "ST-Match-Fun-Conflict",
            Rule::MatchAlt => "ST-Match-Alt",
            Rule::MatchGuard => "ST-Match-Guard",
            Rule::CheckGuardContinue => "ST-CheckGuard-Continue",
            Rule::CheckGuardBacktrack => "ST-CheckGuard-Backtrack",
            Rule::MatchExists => "ST-Match-Exists",
            Rule::CheckName => "ST-CheckName",
            Rule::CheckNameUnbound => "ST-CheckName-Unbound",
            Rule::MatchMatchConstr => "ST-Match-MatchConstr",
            Rule::MatchConstr => "ST-MatchConstr",
            Rule::MatchConstrUnbound => "ST-MatchConstr-Unbound",
            Rule::MatchFunVarBind => "ST-Match-Fun-Var-Bind",
            Rule::MatchFunVarBound => "ST-Match-Fun-Var-Bound",
            Rule::MatchFunVarConflict => "ST-Match-Fun-Var-Conflict",
            Rule::MatchMu => "ST-Match-Mu",
        }
    }

    /// Whether the rule's premises hold in `st`. Each rule is decided here
    /// independently of [`Machine::step`], so the two can be cross-checked.
    pub fn applies(self, interp: &dyn AttributeInterpreter, st: &Running) -> bool {
        let Some((head, _)) = st.k.uncons() else {
            return self == Rule::Success;
        };
        match (self, head) {
            (Rule::MatchVarBind, Action::DoMatch(p, _)) => {
                matches!(&**p, Pattern::Var(x) if !st.theta.contains(x))
            }
            (Rule::MatchVarBound, Action::DoMatch(p, t)) => {
                matches!(&**p, Pattern::Var(x) if st.theta.get(x) == Some(t))
            }
            (Rule::MatchVarConflict, Action::DoMatch(p, t)) => {
                matches!(&**p, Pattern::Var(x) if st.theta.get(x).is_some_and(|u| u != t))
            }
            (Rule::MatchFun, Action::DoMatch(p, t)) => {
                matches!(&**p, Pattern::App(f, args) if f == t.op() && args.len() == t.arity())
            }
            (Rule::MatchFunConflict, Action::DoMatch(p, t)) => {
                matches!(&**p, Pattern::App(f, args) if f != t.op() || args.len() != t.arity())
            }
            (Rule::MatchAlt, Action::DoMatch(p, _)) => matches!(&**p, Pattern::Alt(..)),
            (Rule::MatchGuard, Action::DoMatch(p, _)) => matches!(&**p, Pattern::Guarded(..)),
            (Rule::MatchExists, Action::DoMatch(p, _)) => matches!(&**p, Pattern::Exists(..)),
            (Rule::MatchMatchConstr, Action::DoMatch(p, _)) => {
                matches!(&**p, Pattern::MatchConstr { .. })
            }
            (Rule::MatchFunVarBind, Action::DoMatch(p, t)) => matches!(
                &**p,
                Pattern::FunApp(fv, args) if !st.phi.contains(fv) && args.len() == t.arity()
            ),
            (Rule::MatchFunVarBound, Action::DoMatch(p, t)) => matches!(
                &**p,
                Pattern::FunApp(fv, args)
                    if st.phi.get(fv) == Some(t.op()) && args.len() == t.arity()
            ),
            (Rule::MatchFunVarConflict, Action::DoMatch(p, t)) => matches!(
                &**p,
                Pattern::FunApp(fv, args)
                    if args.len() != t.arity()
                        || st.phi.get(fv).is_some_and(|f| f != t.op())
            ),
            (Rule::MatchMu, Action::DoMatch(p, _)) => matches!(&**p, Pattern::Mu(_)),
            (Rule::CheckGuardContinue, Action::CheckGuard(g)) => {
                eval_guard(interp, &st.theta, g) == Truth::True
            }
            (Rule::CheckGuardBacktrack, Action::CheckGuard(g)) => {
                eval_guard(interp, &st.theta, g) != Truth::True
            }
            (Rule::CheckName, Action::CheckBound(x)) => st.theta.contains(x),
            (Rule::CheckNameUnbound, Action::CheckBound(x)) => !st.theta.contains(x),
            (Rule::MatchConstr, Action::BackMatch(x, _)) => st.theta.contains(x),
            (Rule::MatchConstrUnbound, Action::BackMatch(x, _)) => !st.theta.contains(x),
            _ => false,
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Deliberate defects, used to check that the differential checker notices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mutation {
    /// `ST-Match-Alt` pursues the left alternate without saving a choice point.
    SkipAltPush,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MachineConfig {
    pub step_budget: u64,
    pub mutation: Option<Mutation>,
}

impl Default for MachineConfig {
    fn default() -> Self {
        MachineConfig {
            step_budget: DEFAULT_STEP_BUDGET,
            mutation: None,
        }
    }
}

/// One trace line: the rule fired and the sizes of the resulting state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceEvent {
    pub rule: Rule,
    pub theta: usize,
    pub phi: usize,
    pub stack: usize,
    pub k: usize,
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "rule={} theta={} phi={} stack={} k={}",
            self.rule, self.theta, self.phi, self.stack, self.k
        )
    }
}

#[derive(Debug)]
pub enum Step {
    Next(MachineState, Rule),
    Stuck(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunReport {
    pub outcome: Outcome,
    pub steps: u64,
    pub max_stack: usize,
}

pub fn initial_state(p: PatRef, t: Term) -> MachineState {
    MachineState::Running(Running {
        theta: Substitution::new(),
        phi: FunSubstitution::new(),
        stack: Stack::new(),
        k: Continuation::new().cons(Action::DoMatch(p, t)),
    })
}

pub fn backtrack(stack: &Stack) -> MachineState {
    match stack.pop() {
        None => MachineState::Failure,
        Some((frame, rest)) => MachineState::Running(Running {
            theta: frame.theta.clone(),
            phi: frame.phi.clone(),
            stack: rest.clone(),
            k: frame.k.clone(),
        }),
    }
}

pub struct Machine<'a> {
    pub interp: &'a dyn AttributeInterpreter,
    pub config: MachineConfig,
}

impl<'a> Machine<'a> {
    pub fn new(interp: &'a dyn AttributeInterpreter, config: MachineConfig) -> Self {
        Machine { interp, config }
    }

    pub fn step(&self, st: &Running) -> Step {
        let Some((head, k)) = st.k.uncons() else {
            return Step::Next(
                MachineState::Success(st.theta.clone(), st.phi.clone()),
                Rule::Success,
            );
        };
        let running = |theta: Substitution, phi: FunSubstitution, k: Continuation| {
            MachineState::Running(Running {
                theta,
                phi,
                stack: st.stack.clone(),
                k,
            })
        };
        let same = |k: Continuation| running(st.theta.clone(), st.phi.clone(), k);
        let next = match head {
            Action::DoMatch(p, t) => match &**p {
                Pattern::Var(x) => match st.theta.get(x) {
                    None => {
                        let mut theta = st.theta.clone();
                        theta.insert(x.clone(), t.clone());
                        (running(theta, st.phi.clone(), k.clone()), Rule::MatchVarBind)
                    }
                    Some(u) if u == t => (same(k.clone()), Rule::MatchVarBound),
                    Some(_) => (backtrack(&st.stack), Rule::MatchVarConflict),
                },
                Pattern::App(f, args) => {
                    if f == t.op() && args.len() == t.arity() {
                        (same(push_children(args, t, k)), Rule::MatchFun)
                    } else {
                        (backtrack(&st.stack), Rule::MatchFunConflict)
                    }
                }
                Pattern::Alt(l, r) => {
                    let stack = if self.config.mutation == Some(Mutation::SkipAltPush) {
                        st.stack.clone()
                    } else {
                        st.stack.push(Frame {
                            theta: st.theta.clone(),
                            phi: st.phi.clone(),
                            k: k.cons(Action::DoMatch(r.clone(), t.clone())),
                        })
                    };
                    let st2 = MachineState::Running(Running {
                        theta: st.theta.clone(),
                        phi: st.phi.clone(),
                        stack,
                        k: k.cons(Action::DoMatch(l.clone(), t.clone())),
                    });
                    (st2, Rule::MatchAlt)
                }
                Pattern::Guarded(body, g) => {
                    let k2 = k
                        .cons(Action::CheckGuard(g.clone()))
                        .cons(Action::DoMatch(body.clone(), t.clone()));
                    (same(k2), Rule::MatchGuard)
                }
                Pattern::Exists(x, body) => {
                    let k2 = k
                        .cons(Action::CheckBound(x.clone()))
                        .cons(Action::DoMatch(body.clone(), t.clone()));
                    (same(k2), Rule::MatchExists)
                }
                Pattern::MatchConstr {
                    body,
                    var,
                    constraint,
                } => {
                    let k2 = k
                        .cons(Action::BackMatch(var.clone(), constraint.clone()))
                        .cons(Action::DoMatch(body.clone(), t.clone()));
                    (same(k2), Rule::MatchMatchConstr)
                }
                Pattern::FunApp(fv, args) => {
                    if args.len() != t.arity() {
                        (backtrack(&st.stack), Rule::MatchFunVarConflict)
                    } else {
                        match st.phi.get(fv) {
                            None => {
                                let mut phi = st.phi.clone();
                                phi.insert(fv.clone(), t.op().clone());
                                (
                                    running(st.theta.clone(), phi, push_children(args, t, k)),
                                    Rule::MatchFunVarBind,
                                )
                            }
                            Some(f) if f == t.op() => {
                                (same(push_children(args, t, k)), Rule::MatchFunVarBound)
                            }
                            Some(_) => (backtrack(&st.stack), Rule::MatchFunVarConflict),
                        }
                    }
                }
                Pattern::Mu(mu) => {
                    let k2 = k.cons(Action::DoMatch(unfold_mu(mu), t.clone()));
                    (same(k2), Rule::MatchMu)
                }
                Pattern::RecCall(name, _) => {
                    return Step::Stuck(format!("recursive call `{name}` outside its mu binder"))
                }
            },
            Action::CheckGuard(g) => {
                if eval_guard(self.interp, &st.theta, g) == Truth::True {
                    (same(k.clone()), Rule::CheckGuardContinue)
                } else {
                    (backtrack(&st.stack), Rule::CheckGuardBacktrack)
                }
            }
            Action::CheckBound(x) => {
                if st.theta.contains(x) {
                    (same(k.clone()), Rule::CheckName)
                } else {
                    (backtrack(&st.stack), Rule::CheckNameUnbound)
                }
            }
            Action::BackMatch(x, c) => match st.theta.get(x) {
                Some(u) => (
                    same(k.cons(Action::DoMatch(c.clone(), u.clone()))),
                    Rule::MatchConstr,
                ),
                None => (backtrack(&st.stack), Rule::MatchConstrUnbound),
            },
        };
        Step::Next(next.0, next.1)
    }

    /// Runs from `initial_state(p, t)` until a terminal state, a stuck
    /// state, or the step budget.
    pub fn run(&self, p: &PatRef, t: &Term, mut trace: Option<&mut dyn FnMut(&TraceEvent)>) -> RunReport {
        let mut state = initial_state(p.clone(), t.clone());
        let mut steps = 0u64;
        let mut max_stack = 0usize;
        loop {
            let st = match state {
                MachineState::Success(theta, phi) => {
                    return RunReport {
                        outcome: Outcome::Matched(theta, phi),
                        steps,
                        max_stack,
                    }
                }
                MachineState::Failure => {
                    return RunReport {
                        outcome: Outcome::NoMatch,
                        steps,
                        max_stack,
                    }
                }
                MachineState::Running(st) => st,
            };
            if steps >= self.config.step_budget {
                return RunReport {
                    outcome: Outcome::BudgetExhausted,
                    steps,
                    max_stack,
                };
            }
            match self.step(&st) {
                Step::Stuck(desc) => {
                    return RunReport {
                        outcome: Outcome::StuckState(desc),
                        steps,
                        max_stack,
                    }
                }
                Step::Next(next, rule) => {
                    steps += 1;
                    if let MachineState::Running(r) = &next {
                        max_stack = max_stack.max(r.stack.depth());
                    }
                    if let Some(cb) = trace.as_mut() {
                        let (theta, phi, stack, k) = match &next {
                            MachineState::Running(r) => {
                                (r.theta.len(), r.phi.len(), r.stack.depth(), r.k.len())
                            }
                            MachineState::Success(theta, phi) => (theta.len(), phi.len(), 0, 0),
                            MachineState::Failure => (0, 0, 0, 0),
                        };
                        cb(&TraceEvent {
                            rule,
                            theta,
                            phi,
                            stack,
                            k,
                        });
                    }
                    state = next;
                }
            }
        }
    }
}

fn push_children(args: &[PatRef], t: &Term, k: &Continuation) -> Continuation {
    args.iter()
        .zip(t.children())
        .rev()
        .fold(k.clone(), |acc, (p, c)| acc.cons(Action::DoMatch(p.clone(), c.clone())))
}

/// Runs the machine with the given step budget.
pub fn run_match(
    interp: &dyn AttributeInterpreter,
    p: &PatRef,
    t: &Term,
    step_budget: u64,
) -> Outcome {
    let config = MachineConfig {
        step_budget,
        mutation: None,
    };
    Machine::new(interp, config).run(p, t, None).outcome
}
