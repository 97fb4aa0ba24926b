//! Operator signatures, ground terms and the two substitution maps.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Interned-by-refcount identifier used for operators, variables and attributes.
pub type Name = Arc<str>;

pub fn name(s: &str) -> Name {
    Arc::from(s)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TermError {
    #[error("operator `{name}` already declared with arity {existing}, cannot redeclare with arity {requested}")]
    SignatureConflict {
        name: String,
        existing: usize,
        requested: usize,
    },
    #[error("operator names must be non-empty")]
    EmptyOperatorName,
    #[error("unknown operator `{0}`")]
    UnknownOperator(String),
    #[error("operator `{op}` expects {expected} argument(s), found {found}")]
    ArityMismatch {
        op: String,
        expected: usize,
        found: usize,
    },
}

/// The set of declared operators together with their arities.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OperatorSignature {
    entries: BTreeMap<Name, usize>,
}

impl OperatorSignature {
    pub fn new() -> Self {
        Self::default()
    }

    /// Declares `name/arity`. Redeclaring with the same arity is a no-op.
    pub fn declare(&mut self, name: &str, arity: usize) -> Result<(), TermError> {
        if name.is_empty() {
            return Err(TermError::EmptyOperatorName);
        }
        match self.entries.get(name) {
            Some(&existing) if existing != arity => Err(TermError::SignatureConflict {
                name: name.to_string(),
                existing,
                requested: arity,
            }),
            Some(_) => Ok(()),
            None => {
                self.entries.insert(Arc::from(name), arity);
                Ok(())
            }
        }
    }

    /// Builder form of [`declare`](Self::declare).
    pub fn with_op(mut self, name: &str, arity: usize) -> Result<Self, TermError> {
        self.declare(name, arity)?;
        Ok(self)
    }

    pub fn arity(&self, name: &str) -> Option<usize> {
        self.entries.get(name).copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    /// Operators in lexicographic order.
    pub fn iter(&self) -> impl Iterator<Item = (&Name, usize)> + '_ {
        self.entries.iter().map(|(k, v)| (k, *v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn check_arity(&self, op: &str, found: usize) -> Result<(), TermError> {
        match self.arity(op) {
            None => Err(TermError::UnknownOperator(op.to_string())),
            Some(expected) if expected != found => Err(TermError::ArityMismatch {
                op: op.to_string(),
                expected,
                found,
            }),
            Some(_) => Ok(()),
        }
    }
}

pub type Annotations = BTreeMap<Name, u64>;

#[derive(Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct TermNode {
    op: Name,
    children: Vec<Term>,
    annotations: Annotations,
}

/// A ground operator tree. Cloning is O(1); subtrees are shared.
#[derive(Clone, PartialOrd, Ord)]
pub struct Term(Arc<TermNode>);

impl std::hash::Hash for Term {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.0.hash(state);
    }
}

impl PartialEq for Term {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.0 == other.0
    }
}

impl Eq for Term {}

impl Term {
    /// Checked constructor: the operator must be declared and saturated.
    pub fn new(
        sig: &OperatorSignature,
        op: &str,
        children: Vec<Term>,
        annotations: Annotations,
    ) -> Result<Term, TermError> {
        sig.check_arity(op, children.len())?;
        Ok(Term::from_parts(Arc::from(op), children, annotations))
    }

    /// Unchecked constructor; callers are responsible for arity.
    pub fn from_parts(op: Name, children: Vec<Term>, annotations: Annotations) -> Term {
        Term(Arc::new(TermNode {
            op,
            children,
            annotations,
        }))
    }

    /// Unchecked, unannotated application.
    pub fn app(op: &str, children: Vec<Term>) -> Term {
        Term::from_parts(Arc::from(op), children, Annotations::new())
    }

    pub fn constant(op: &str) -> Term {
        Term::app(op, Vec::new())
    }

    pub fn with_annotation(&self, key: &str, value: u64) -> Term {
        let mut annotations = self.0.annotations.clone();
        annotations.insert(Arc::from(key), value);
        Term::from_parts(self.0.op.clone(), self.0.children.clone(), annotations)
    }

    pub fn op(&self) -> &Name {
        &self.0.op
    }

    pub fn children(&self) -> &[Term] {
        &self.0.children
    }

    pub fn annotations(&self) -> &Annotations {
        &self.0.annotations
    }

    pub fn arity(&self) -> usize {
        self.0.children.len()
    }

    pub fn ptr_eq(&self, other: &Term) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }

    /// Node count.
    pub fn size(&self) -> usize {
        let mut total = 0;
        let mut stack = vec![self];
        while let Some(t) = stack.pop() {
            total += 1;
            stack.extend(t.children());
        }
        total
    }

    /// Height; a leaf has depth 0.
    pub fn depth(&self) -> usize {
        let mut best = 0;
        let mut stack = vec![(self, 0usize)];
        while let Some((t, d)) = stack.pop() {
            best = best.max(d);
            stack.extend(t.children().iter().map(|c| (c, d + 1)));
        }
        best
    }

    /// All subterms in pre-order, including `self`.
    pub fn subterms(&self) -> Vec<Term> {
        let mut out = Vec::new();
        let mut stack = vec![self.clone()];
        while let Some(t) = stack.pop() {
            stack.extend(t.children().iter().rev().cloned());
            out.push(t);
        }
        out
    }

    /// Checks every node against `sig`.
    pub fn validate(&self, sig: &OperatorSignature) -> Result<(), TermError> {
        let mut stack = vec![self];
        while let Some(t) = stack.pop() {
            sig.check_arity(t.op(), t.arity())?;
            stack.extend(t.children());
        }
        Ok(())
    }

    /// Returns the subterm at `path` (child indices from the root).
    pub fn at_path(&self, path: &[usize]) -> Option<&Term> {
        let mut cur = self;
        for &i in path {
            cur = cur.children().get(i)?;
        }
        Some(cur)
    }

    /// Rebuilds the spine down to `path`, putting `replacement` there.
    pub fn replace_at(&self, path: &[usize], replacement: Term) -> Term {
        match path.split_first() {
            None => replacement,
            Some((&i, rest)) => {
                let mut children = self.children().to_vec();
                children[i] = children[i].replace_at(rest, replacement);
                Term::from_parts(self.op().clone(), children, self.annotations().clone())
            }
        }
    }
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Canonical printed form, e.g. `MatMul(A{rank=2}(), Trans(B()))`.
impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.op())?;
        if !self.annotations().is_empty() {
            f.write_str("{")?;
            for (i, (k, v)) in self.annotations().iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{k}={v}")?;
            }
            f.write_str("}")?;
        }
        f.write_str("(")?;
        for (i, c) in self.children().iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            fmt::Display::fmt(c, f)?;
        }
        f.write_str(")")
    }
}

/// θ: pattern variables to terms. Copy-on-write, so saving it in a
/// backtracking frame is O(1).
#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct Substitution(Arc<BTreeMap<Name, Term>>);

impl Substitution {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, x: &str) -> Option<&Term> {
        self.0.get(x)
    }

    pub fn contains(&self, x: &str) -> bool {
        self.0.contains_key(x)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Name, &Term)> + '_ {
        self.0.iter()
    }

    /// Inserts without a consistency check, overwriting any existing binding.
    pub fn insert(&mut self, x: Name, t: Term) {
        Arc::make_mut(&mut self.0).insert(x, t);
    }

    /// Consistent union `θ ∪ {x ↦ t}`: `None` when `x` is already bound elsewhere.
    pub fn extend_consistent(&self, x: &str, t: &Term) -> Option<Substitution> {
        match self.get(x) {
            Some(existing) if existing == t => Some(self.clone()),
            Some(_) => None,
            None => {
                let mut out = self.clone();
                out.insert(Arc::from(x), t.clone());
                Some(out)
            }
        }
    }

    /// `self ⊆ other` as finite maps.
    pub fn is_subset_of(&self, other: &Substitution) -> bool {
        self.iter().all(|(k, v)| other.get(k) == Some(v))
    }
}

impl FromIterator<(Name, Term)> for Substitution {
    fn from_iter<I: IntoIterator<Item = (Name, Term)>>(iter: I) -> Self {
        Substitution(Arc::new(iter.into_iter().collect()))
    }
}

impl fmt::Debug for Substitution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map().entries(self.0.iter()).finish()
    }
}

/// φ: function variables to operator names.
#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct FunSubstitution(Arc<BTreeMap<Name, Name>>);

impl FunSubstitution {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, f: &str) -> Option<&Name> {
        self.0.get(f)
    }

    pub fn contains(&self, f: &str) -> bool {
        self.0.contains_key(f)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Name, &Name)> + '_ {
        self.0.iter()
    }

    pub fn insert(&mut self, f: Name, op: Name) {
        Arc::make_mut(&mut self.0).insert(f, op);
    }

    pub fn extend_consistent(&self, f: &str, op: &Name) -> Option<FunSubstitution> {
        match self.get(f) {
            Some(existing) if existing == op => Some(self.clone()),
            Some(_) => None,
            None => {
                let mut out = self.clone();
                out.insert(Arc::from(f), op.clone());
                Some(out)
            }
        }
    }

    pub fn is_subset_of(&self, other: &FunSubstitution) -> bool {
        self.iter().all(|(k, v)| other.get(k) == Some(v))
    }
}

impl FromIterator<(Name, Name)> for FunSubstitution {
    fn from_iter<I: IntoIterator<Item = (Name, Name)>>(iter: I) -> Self {
        FunSubstitution(Arc::new(iter.into_iter().collect()))
    }
}

impl fmt::Debug for FunSubstitution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map().entries(self.0.iter()).finish()
    }
}

/// Interpretation of attributes as a partial function `(key, term) ⇀ ℕ`.
///
/// Implementations must be deterministic.
pub trait AttributeInterpreter: Sync {
    fn eval(&self, key: &str, t: &Term) -> Option<u64>;
}

/// Annotations first, then the structural attributes `depth`, `size` and
/// `arity`; anything else is undefined.
#[derive(Debug, Clone, Copy, Default)]
pub struct DefaultInterpreter;

impl AttributeInterpreter for DefaultInterpreter {
    fn eval(&self, key: &str, t: &Term) -> Option<u64> {
        if let Some(&v) = t.annotations().get(key) {
            return Some(v);
        }
        match key {
            "depth" => Some(t.depth() as u64),
            "size" => Some(t.size() as u64),
            "arity" => Some(t.arity() as u64),
            _ => None,
        }
    }
}

/// Convenience for building annotation maps in tests and fixtures.
pub fn annotations<'a>(pairs: impl IntoIterator<Item = (&'a str, u64)>) -> Annotations {
    pairs.into_iter().map(|(k, v)| (Arc::from(k), v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cublas_sig() -> OperatorSignature {
        OperatorSignature::new()
            .with_op("MatMul", 2)
            .and_then(|s| s.with_op("Trans", 1))
            .and_then(|s| s.with_op("A", 0))
            .and_then(|s| s.with_op("B", 0))
            .and_then(|s| s.with_op("C", 0))
            .unwrap()
    }

    #[test]
    fn declare_is_idempotent_and_detects_conflicts() {
        let mut sig = OperatorSignature::new();
        sig.declare("C", 0).unwrap();
        let before = sig.clone();
        sig.declare("C", 0).unwrap();
        assert_eq!(sig, before);

        sig.declare("F", 1).unwrap();
        assert_eq!(
            sig.declare("F", 2),
            Err(TermError::SignatureConflict {
                name: "F".into(),
                existing: 1,
                requested: 2
            })
        );
        assert_eq!(sig.declare("", 0), Err(TermError::EmptyOperatorName));
    }

    #[test]
    fn mk_term_checks_arity() {
        let sig = cublas_sig();
        let a = Term::new(&sig, "A", vec![], Annotations::new()).unwrap();
        let b = Term::new(&sig, "B", vec![], Annotations::new()).unwrap();
        let tb = Term::new(&sig, "Trans", vec![b.clone()], Annotations::new()).unwrap();
        let mm = Term::new(&sig, "MatMul", vec![a.clone(), tb], Annotations::new()).unwrap();
        assert_eq!(mm.to_string(), "MatMul(A(), Trans(B()))");
        assert_eq!(
            Term::new(&sig, "Trans", vec![a, b], Annotations::new()),
            Err(TermError::ArityMismatch {
                op: "Trans".into(),
                expected: 1,
                found: 2
            })
        );
        assert_eq!(
            Term::new(&sig, "Nope", vec![], Annotations::new()),
            Err(TermError::UnknownOperator("Nope".into()))
        );
    }

    #[test]
    fn equality_observes_annotations() {
        let c = Term::constant("C");
        assert_eq!(c, Term::constant("C"));
        assert_ne!(
            Term::app("f", vec![Term::constant("C")]),
            Term::app("f", vec![Term::constant("D")])
        );
        let r2 = c.with_annotation("rank", 2);
        let r3 = c.with_annotation("rank", 3);
        assert_ne!(r2, r3);
        // A rank guard tells the two apart, so identity must as well.
        let interp = DefaultInterpreter;
        assert_ne!(interp.eval("rank", &r2), interp.eval("rank", &r3));
    }

    #[test]
    fn default_interpreter_resolution_order() {
        let interp = DefaultInterpreter;
        let c = Term::constant("C");
        assert_eq!(interp.eval("rank", &c.with_annotation("rank", 2)), Some(2));
        assert_eq!(interp.eval("rank", &c), None);
        let t = Term::app("f", vec![c.clone(), c.clone()]);
        assert_eq!(interp.eval("size", &t), Some(3));
        assert_eq!(interp.eval("depth", &t), Some(1));
        assert_eq!(interp.eval("arity", &t), Some(2));
        // annotations shadow builtins
        assert_eq!(interp.eval("size", &t.with_annotation("size", 9)), Some(9));
    }

    #[test]
    fn extend_consistent_cases() {
        let c = Term::constant("C");
        let d = Term::constant("D");
        let theta = Substitution::new().extend_consistent("x", &c).unwrap();
        assert_eq!(theta.get("x"), Some(&c));
        assert_eq!(theta.extend_consistent("x", &c), Some(theta.clone()));
        assert_eq!(theta.extend_consistent("x", &d), None);
    }

    #[test]
    fn replace_at_rebuilds_spine_only() {
        let t = Term::app("f", vec![Term::constant("C"), Term::app("g", vec![Term::constant("D")])]);
        let r = t.replace_at(&[1, 0], Term::constant("E"));
        assert_eq!(r.to_string(), "f(C(), g(E()))");
        assert!(r.children()[0].ptr_eq(&t.children()[0]));
        assert_eq!(t.at_path(&[1, 0]), Some(&Term::constant("D")));
    }

    fn brute_size(t: &Term) -> usize {
        1 + t.children().iter().map(brute_size).sum::<usize>()
    }

    fn brute_depth(t: &Term) -> usize {
        t.children().iter().map(|c| 1 + brute_depth(c)).max().unwrap_or(0)
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        pub(super) fn arb_term() -> impl Strategy<Value = Term> {
            let leaf = prop_oneof![Just("C"), Just("D")].prop_map(Term::constant);
            leaf.prop_recursive(5, 40, 3, |inner| {
                prop_oneof![
                    inner.clone().prop_map(|t| Term::app("u", vec![t])),
                    (inner.clone(), inner.clone()).prop_map(|(a, b)| Term::app("f", vec![a, b])),
                    (inner, 0u64..4).prop_map(|(t, r)| t.with_annotation("rank", r)),
                ]
            })
        }

        proptest! {
            #[test]
            fn structural_attributes_agree_with_recursion(t in arb_term()) {
                prop_assert_eq!(t.size(), brute_size(&t));
                prop_assert_eq!(t.depth(), brute_depth(&t));
                prop_assert!(t.size() >= 1);
                prop_assert!(t.depth() < t.size());
            }

            #[test]
            fn extend_consistent_never_shrinks(
                t in arb_term(), u in arb_term(), x in prop_oneof![Just("x"), Just("y")]
            ) {
                let theta = Substitution::new().extend_consistent("x", &t).unwrap();
                if let Some(next) = theta.extend_consistent(x, &u) {
                    prop_assert!(theta.is_subset_of(&next));
                    prop_assert_eq!(next.get(x), Some(&u));
                } else {
                    prop_assert!(theta.get(x).is_some_and(|old| old != &u));
                }
            }

            #[test]
            fn rebuilding_from_parts_is_identity(t in arb_term()) {
                let rebuilt = Term::from_parts(
                    t.op().clone(), t.children().to_vec(), t.annotations().clone());
                prop_assert_eq!(rebuilt, t);
            }
        }
    }
}
