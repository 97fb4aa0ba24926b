//! The portable rule-set format: canonical JSON with sorted keys and no
//! insignificant whitespace.
//!
//! ```text
//! {"ops":[{"arity":N,"name":S}],
//!  "patterns":[{"body":P,"name":S,"params":[S]}],
//!  "rules":[{"clauses":[{"guard":G,"template":T}],"pattern":S}],
//!  "version":1}
//! ```
//!
//! Pattern nodes carry a `"k"` tag: `var`, `app`, `alt`, `guard`, `exists`,
//! `mconstr`, `funapp`, `mu`, `reccall`. Integer literals in guards are
//! decimal strings.

use std::sync::Arc;

use num_bigint::BigInt;
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::pattern::{Expr, Guard, MuPattern, PatRef, Pattern, Site};
use crate::rewrite::{PatternDef, Rule, RuleClause, RuleSet, RuleSetError, Template};
use crate::term::{name, Annotations, Name, OperatorSignature, Term, TermError};

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PortableError {
    #[error("not valid JSON: {0}")]
    Json(String),
    #[error("unsupported format version {found} (expected {FORMAT_VERSION})")]
    VersionMismatch { found: Value },
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error(transparent)]
    Invalid(#[from] RuleSetError),
    #[error(transparent)]
    Signature(#[from] TermError),
}

pub fn serialize_ruleset(rs: &RuleSet) -> Vec<u8> {
    let ops: Vec<Value> = rs
        .signature()
        .iter()
        .map(|(n, a)| json!({"name": &**n, "arity": a}))
        .collect();
    let patterns: Vec<Value> = rs
        .patterns()
        .iter()
        .map(|d| json!({"name": &*d.name, "params": names(&d.params), "body": pattern_json(&d.body)}))
        .collect();
    let rules: Vec<Value> = rs
        .rules()
        .iter()
        .map(|r| {
            let clauses: Vec<Value> = r
                .clauses
                .iter()
                .map(|c| json!({"guard": guard_json(&c.guard), "template": template_json(&c.template)}))
                .collect();
            json!({"pattern": &*r.pattern_name, "clauses": clauses})
        })
        .collect();
    let doc = json!({"version": FORMAT_VERSION, "ops": ops, "patterns": patterns, "rules": rules});
    serde_json::to_vec(&doc).expect("in-memory JSON")
}

pub fn deserialize_ruleset(bytes: &[u8]) -> Result<RuleSet, PortableError> {
    let doc: Value = serde_json::from_slice(bytes).map_err(|e| PortableError::Json(e.to_string()))?;
    let r = Reader::root();
    let obj = r.object(&doc)?;
    let version = obj.get("version").ok_or_else(|| r.field("version").error("missing"))?;
    if version.as_u64() != Some(FORMAT_VERSION) {
        return Err(PortableError::VersionMismatch {
            found: version.clone(),
        });
    }
    r.only(obj, &["version", "ops", "patterns", "rules"])?;

    let mut sig = OperatorSignature::new();
    for (i, op) in r.field("ops").array(obj.get("ops"))?.iter().enumerate() {
        let at = r.field("ops").index(i);
        let o = at.object(op)?;
        at.only(o, &["name", "arity"])?;
        let n = at.field("name").string(o.get("name"))?;
        let a = at.field("arity").natural(o.get("arity"))?;
        sig.declare(n, a as usize)?;
    }

    let mut patterns = Vec::new();
    for (i, p) in r.field("patterns").array(obj.get("patterns"))?.iter().enumerate() {
        let at = r.field("patterns").index(i);
        let o = at.object(p)?;
        at.only(o, &["name", "params", "body"])?;
        patterns.push(PatternDef {
            name: name(at.field("name").string(o.get("name"))?),
            params: at.field("params").names(o.get("params"))?,
            body: Arc::new(at.field("body").pattern(o.get("body"))?),
        });
    }

    let mut rules = Vec::new();
    for (i, rv) in r.field("rules").array(obj.get("rules"))?.iter().enumerate() {
        let at = r.field("rules").index(i);
        let o = at.object(rv)?;
        at.only(o, &["pattern", "clauses"])?;
        let mut clauses = Vec::new();
        for (j, c) in at.field("clauses").array(o.get("clauses"))?.iter().enumerate() {
            let cat = at.field("clauses").index(j);
            let co = cat.object(c)?;
            cat.only(co, &["guard", "template"])?;
            clauses.push(RuleClause {
                guard: cat.field("guard").guard(co.get("guard"))?,
                template: cat.field("template").template(co.get("template"))?,
            });
        }
        rules.push(Rule {
            pattern_name: name(at.field("pattern").string(o.get("pattern"))?),
            clauses,
        });
    }
    Ok(RuleSet::new(sig, patterns, rules)?)
}

pub fn term_to_json(t: &Term) -> Value {
    let ann: Map<String, Value> = t
        .annotations()
        .iter()
        .map(|(k, v)| (k.to_string(), json!(v)))
        .collect();
    let args: Vec<Value> = t.children().iter().map(term_to_json).collect();
    json!({"op": &**t.op(), "args": args, "ann": ann})
}

pub fn term_from_json(sig: &OperatorSignature, v: &Value) -> Result<Term, PortableError> {
    Reader::root().term(sig, v)
}

pub fn pattern_to_json(p: &Pattern) -> Value {
    pattern_json(p)
}

pub fn pattern_from_json(v: &Value) -> Result<Pattern, PortableError> {
    Reader::root().pattern(Some(v))
}

fn names(xs: &[Name]) -> Vec<&str> {
    xs.iter().map(|x| &**x).collect()
}

fn pattern_json(p: &Pattern) -> Value {
    match p {
        Pattern::Var(x) => json!({"k": "var", "x": &**x}),
        Pattern::App(f, args) => {
            json!({"k": "app", "f": &**f, "args": args.iter().map(|a| pattern_json(a)).collect::<Vec<_>>()})
        }
        Pattern::Alt(l, r) => json!({"k": "alt", "l": pattern_json(l), "r": pattern_json(r)}),
        Pattern::Guarded(b, g) => json!({"k": "guard", "p": pattern_json(b), "g": guard_json(g)}),
        Pattern::Exists(x, b) => json!({"k": "exists", "x": &**x, "p": pattern_json(b)}),
        Pattern::MatchConstr {
            body,
            var,
            constraint,
        } => json!({"k": "mconstr", "p": pattern_json(body), "x": &**var, "c": pattern_json(constraint)}),
        Pattern::FunApp(fv, args) => {
            json!({"k": "funapp", "fv": &**fv, "args": args.iter().map(|a| pattern_json(a)).collect::<Vec<_>>()})
        }
        Pattern::Mu(mu) => {
            let mut v = json!({
                "k": "mu",
                "name": &*mu.name,
                "formals": names(&mu.formals),
                "actuals": names(&mu.actuals),
                "body": pattern_json(&mu.body),
            });
            if !mu.site.is_empty() {
                v["site"] = json!(mu.site.to_vec());
            }
            v
        }
        Pattern::RecCall(p, args) => json!({"k": "reccall", "name": &**p, "args": names(args)}),
    }
}

fn guard_json(g: &Guard) -> Value {
    match g {
        Guard::True => json!({"k": "true"}),
        Guard::Eq(a, b) => json!({"k": "eq", "l": expr_json(a), "r": expr_json(b)}),
        Guard::Lt(a, b) => json!({"k": "lt", "l": expr_json(a), "r": expr_json(b)}),
        Guard::And(a, b) => json!({"k": "and", "l": guard_json(a), "r": guard_json(b)}),
        Guard::Or(a, b) => json!({"k": "or", "l": guard_json(a), "r": guard_json(b)}),
        Guard::Not(a) => json!({"k": "not", "g": guard_json(a)}),
    }
}

fn expr_json(e: &Expr) -> Value {
    match e {
        Expr::TermAttr(t, a) => json!({"k": "tattr", "t": term_to_json(t), "a": &**a}),
        Expr::VarAttr(x, a) => json!({"k": "vattr", "x": &**x, "a": &**a}),
        Expr::Lit(n) => json!({"k": "lit", "n": n.to_string()}),
        Expr::Add(a, b) => json!({"k": "add", "l": expr_json(a), "r": expr_json(b)}),
        Expr::Sub(a, b) => json!({"k": "sub", "l": expr_json(a), "r": expr_json(b)}),
        Expr::Mul(a, b) => json!({"k": "mul", "l": expr_json(a), "r": expr_json(b)}),
    }
}

fn template_json(t: &Template) -> Value {
    match t {
        Template::Var(x) => json!({"k": "tvar", "x": &**x}),
        Template::App(f, args) => {
            json!({"k": "tapp", "f": &**f, "args": args.iter().map(template_json).collect::<Vec<_>>()})
        }
        Template::FunApp(fv, args) => {
            json!({"k": "tfunapp", "fv": &**fv, "args": args.iter().map(template_json).collect::<Vec<_>>()})
        }
    }
}

/// Schema reader that tracks a JSON path for error messages.
#[derive(Clone)]
struct Reader {
    path: String,
}

type Obj = Map<String, Value>;

impl Reader {
    fn root() -> Reader {
        Reader { path: "$".into() }
    }

    fn field(&self, key: &str) -> Reader {
        Reader {
            path: format!("{}.{key}", self.path),
        }
    }

    fn index(&self, i: usize) -> Reader {
        Reader {
            path: format!("{}[{i}]", self.path),
        }
    }

    fn error(&self, message: &str) -> PortableError {
        PortableError::Schema {
            path: self.path.clone(),
            message: message.to_string(),
        }
    }

    fn present<'v>(&self, v: Option<&'v Value>) -> Result<&'v Value, PortableError> {
        v.ok_or_else(|| self.error("missing"))
    }

    fn object<'v>(&self, v: &'v Value) -> Result<&'v Obj, PortableError> {
        v.as_object().ok_or_else(|| self.error("expected an object"))
    }

    fn only(&self, o: &Obj, keys: &[&str]) -> Result<(), PortableError> {
        match o.keys().find(|k| !keys.contains(&k.as_str())) {
            Some(k) => Err(self.field(k).error("unexpected key")),
            None => Ok(()),
        }
    }

    fn array<'v>(&self, v: Option<&'v Value>) -> Result<&'v Vec<Value>, PortableError> {
        self.present(v)?
            .as_array()
            .ok_or_else(|| self.error("expected an array"))
    }

    fn string<'v>(&self, v: Option<&'v Value>) -> Result<&'v str, PortableError> {
        self.present(v)?
            .as_str()
            .ok_or_else(|| self.error("expected a string"))
    }

    fn natural(&self, v: Option<&Value>) -> Result<u64, PortableError> {
        self.present(v)?
            .as_u64()
            .ok_or_else(|| self.error("expected a natural number"))
    }

    fn names(&self, v: Option<&Value>) -> Result<Vec<Name>, PortableError> {
        self.array(v)?
            .iter()
            .enumerate()
            .map(|(i, x)| self.index(i).string(Some(x)).map(name))
            .collect()
    }

    fn tagged<'v>(&self, v: Option<&'v Value>) -> Result<(&'v Obj, &'v str), PortableError> {
        let o = self.object(self.present(v)?)?;
        let k = self.field("k").string(o.get("k"))?;
        Ok((o, k))
    }

    fn patterns(&self, v: Option<&Value>) -> Result<Vec<PatRef>, PortableError> {
        self.array(v)?
            .iter()
            .enumerate()
            .map(|(i, x)| self.index(i).pattern(Some(x)).map(Arc::new))
            .collect()
    }

    fn pattern(&self, v: Option<&Value>) -> Result<Pattern, PortableError> {
        let (o, k) = self.tagged(v)?;
        let sub = |key: &str| self.field(key).pattern(o.get(key)).map(Arc::new);
        let s = |key: &str| self.field(key).string(o.get(key)).map(name);
        let p = match k {
            "var" => {
                self.only(o, &["k", "x"])?;
                Pattern::Var(s("x")?)
            }
            "app" => {
                self.only(o, &["k", "f", "args"])?;
                Pattern::App(s("f")?, self.field("args").patterns(o.get("args"))?)
            }
            "alt" => {
                self.only(o, &["k", "l", "r"])?;
                Pattern::Alt(sub("l")?, sub("r")?)
            }
            "guard" => {
                self.only(o, &["k", "p", "g"])?;
                Pattern::Guarded(sub("p")?, Arc::new(self.field("g").guard(o.get("g"))?))
            }
            "exists" => {
                self.only(o, &["k", "x", "p"])?;
                Pattern::Exists(s("x")?, sub("p")?)
            }
            "mconstr" => {
                self.only(o, &["k", "p", "x", "c"])?;
                Pattern::MatchConstr {
                    body: sub("p")?,
                    var: s("x")?,
                    constraint: sub("c")?,
                }
            }
            "funapp" => {
                self.only(o, &["k", "fv", "args"])?;
                Pattern::FunApp(s("fv")?, self.field("args").patterns(o.get("args"))?)
            }
            "mu" => {
                self.only(o, &["k", "name", "formals", "actuals", "body", "site"])?;
                let site: Vec<u32> = match o.get("site") {
                    None => Vec::new(),
                    Some(v) => {
                        let at = self.field("site");
                        at.array(Some(v))?
                            .iter()
                            .enumerate()
                            .map(|(i, x)| {
                                let n = at.index(i).natural(Some(x))?;
                                u32::try_from(n).map_err(|_| at.index(i).error("out of range"))
                            })
                            .collect::<Result<_, _>>()?
                    }
                };
                Pattern::Mu(Arc::new(MuPattern {
                    name: s("name")?,
                    formals: self.field("formals").names(o.get("formals"))?,
                    actuals: self.field("actuals").names(o.get("actuals"))?,
                    body: sub("body")?,
                    site: Site::from(&site[..]),
                }))
            }
            "reccall" => {
                self.only(o, &["k", "name", "args"])?;
                Pattern::RecCall(s("name")?, self.field("args").names(o.get("args"))?)
            }
            other => return Err(self.field("k").error(&format!("unknown pattern kind `{other}`"))),
        };
        Ok(p)
    }

    fn guard(&self, v: Option<&Value>) -> Result<Guard, PortableError> {
        let (o, k) = self.tagged(v)?;
        let g = |key: &str| self.field(key).guard(o.get(key)).map(Box::new);
        let e = |key: &str| self.field(key).expr(o.get(key));
        Ok(match k {
            "true" => {
                self.only(o, &["k"])?;
                Guard::True
            }
            "eq" | "lt" => {
                self.only(o, &["k", "l", "r"])?;
                if k == "eq" {
                    Guard::Eq(e("l")?, e("r")?)
                } else {
                    Guard::Lt(e("l")?, e("r")?)
                }
            }
            "and" | "or" => {
                self.only(o, &["k", "l", "r"])?;
                if k == "and" {
                    Guard::And(g("l")?, g("r")?)
                } else {
                    Guard::Or(g("l")?, g("r")?)
                }
            }
            "not" => {
                self.only(o, &["k", "g"])?;
                Guard::Not(g("g")?)
            }
            other => return Err(self.field("k").error(&format!("unknown guard kind `{other}`"))),
        })
    }

    fn expr(&self, v: Option<&Value>) -> Result<Expr, PortableError> {
        let (o, k) = self.tagged(v)?;
        let e = |key: &str| self.field(key).expr(o.get(key)).map(Box::new);
        let s = |key: &str| self.field(key).string(o.get(key)).map(name);
        Ok(match k {
            "tattr" => {
                self.only(o, &["k", "t", "a"])?;
                let t = self.field("t").untyped_term(self.field("t").present(o.get("t"))?)?;
                Expr::TermAttr(t, s("a")?)
            }
            "vattr" => {
                self.only(o, &["k", "x", "a"])?;
                Expr::VarAttr(s("x")?, s("a")?)
            }
            "lit" => {
                self.only(o, &["k", "n"])?;
                let at = self.field("n");
                let text = at.string(o.get("n"))?;
                Expr::Lit(
                    text.parse::<BigInt>()
                        .map_err(|_| at.error("expected a decimal integer string"))?,
                )
            }
            "add" | "sub" | "mul" => {
                self.only(o, &["k", "l", "r"])?;
                let (l, r) = (e("l")?, e("r")?);
                match k {
                    "add" => Expr::Add(l, r),
                    "sub" => Expr::Sub(l, r),
                    _ => Expr::Mul(l, r),
                }
            }
            other => return Err(self.field("k").error(&format!("unknown expression kind `{other}`"))),
        })
    }

    fn template(&self, v: Option<&Value>) -> Result<Template, PortableError> {
        let (o, k) = self.tagged(v)?;
        let s = |key: &str| self.field(key).string(o.get(key)).map(name);
        let args = || -> Result<Vec<Template>, PortableError> {
            let at = self.field("args");
            at.array(o.get("args"))?
                .iter()
                .enumerate()
                .map(|(i, x)| at.index(i).template(Some(x)))
                .collect()
        };
        Ok(match k {
            "tvar" => {
                self.only(o, &["k", "x"])?;
                Template::Var(s("x")?)
            }
            "tapp" => {
                self.only(o, &["k", "f", "args"])?;
                Template::App(s("f")?, args()?)
            }
            "tfunapp" => {
                self.only(o, &["k", "fv", "args"])?;
                Template::FunApp(s("fv")?, args()?)
            }
            other => return Err(self.field("k").error(&format!("unknown template kind `{other}`"))),
        })
    }

    fn term_parts(&self, v: &Value) -> Result<(Name, Vec<Term>, Annotations), PortableError> {
        let o = self.object(v)?;
        self.only(o, &["op", "args", "ann"])?;
        let op = name(self.field("op").string(o.get("op"))?);
        let at = self.field("args");
        let children = at
            .array(o.get("args"))?
            .iter()
            .enumerate()
            .map(|(i, c)| at.index(i).untyped_term(c))
            .collect::<Result<Vec<_>, _>>()?;
        let mut ann = Annotations::new();
        if let Some(a) = o.get("ann") {
            let at = self.field("ann");
            for (k, v) in at.object(a)? {
                ann.insert(name(k), at.field(k).natural(Some(v))?);
            }
        }
        Ok((op, children, ann))
    }

    fn untyped_term(&self, v: &Value) -> Result<Term, PortableError> {
        let (op, children, ann) = self.term_parts(v)?;
        Ok(Term::from_parts(op, children, ann))
    }

    fn term(&self, sig: &OperatorSignature, v: &Value) -> Result<Term, PortableError> {
        let t = self.untyped_term(v)?;
        t.validate(sig)?;
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::compile_source;

    const CUBLAS: &str = "
        op MatMul/2; op Trans/1; op cublasMM_xyT_f32/2; op cublasMM_xyT_i8/2;
        pattern MMxyT(x, y) {
            assert x.rank == 2 && y.rank == 2;
            return MatMul(x, Trans(y));
        }
        rule MMxyT when x.eltType == 0 && y.eltType == 0 => cublasMM_xyT_f32(x, y);
        rule MMxyT when x.eltType == 1 && y.eltType == 1 => cublasMM_xyT_i8(x, y);
    ";

    #[test]
    fn round_trip_and_canonical_bytes() {
        let rs = compile_source(CUBLAS).unwrap();
        let bytes = serialize_ruleset(&rs);
        let back = deserialize_ruleset(&bytes).unwrap();
        assert_eq!(back, rs);
        assert_eq!(serialize_ruleset(&back), bytes);
        let text = String::from_utf8(bytes).unwrap();
        assert!(text.starts_with(r#"{"ops":[{"arity":2,"name":"MatMul"}"#), "{text}");
        assert!(text.ends_with(r#""version":1}"#));
        assert!(!text.contains(' '));
    }

    #[test]
    fn recursive_round_trip_keeps_sites() {
        let rs = compile_source(
            "pattern UC(x, F) { return $F(UC(x, F)); } pattern UC(x, F) { return $F(x); }",
        )
        .unwrap();
        let bytes = serialize_ruleset(&rs);
        assert!(String::from_utf8_lossy(&bytes).contains(r#""site":[0]"#));
        assert_eq!(deserialize_ruleset(&bytes).unwrap(), rs);
    }

    #[test]
    fn version_mismatch() {
        let err = deserialize_ruleset(br#"{"ops":[],"patterns":[],"rules":[],"version":2}"#).unwrap_err();
        assert!(matches!(err, PortableError::VersionMismatch { .. }));
    }

    #[test]
    fn schema_errors_carry_paths() {
        let bad = br#"{"ops":[{"arity":1,"name":"f"}],"patterns":[{"body":{"k":"app","f":"f","args":[{"k":"bogus"}]},"name":"P","params":[]}],"rules":[],"version":1}"#;
        let err = deserialize_ruleset(bad).unwrap_err();
        assert_eq!(
            err.to_string(),
            "$.patterns[0].body.args[0].k: unknown pattern kind `bogus`"
        );
        let err = deserialize_ruleset(br#"{"ops":[{"name":"f"}],"patterns":[],"rules":[],"version":1}"#)
            .unwrap_err();
        assert_eq!(err.to_string(), "$.ops[0].arity: missing");
        assert!(matches!(deserialize_ruleset(b"{"), Err(PortableError::Json(_))));
    }

    #[test]
    fn ill_formed_bodies_are_rejected() {
        let bad = br#"{"ops":[{"arity":1,"name":"f"}],"patterns":[{"body":{"k":"app","f":"f","args":[]},"name":"P","params":[]}],"rules":[],"version":1}"#;
        assert!(matches!(deserialize_ruleset(bad), Err(PortableError::Invalid(_))));
    }

    #[test]
    fn term_codec() {
        let sig = OperatorSignature::new().with_op("f", 1).unwrap().with_op("C", 0).unwrap();
        let t = Term::app("f", vec![Term::constant("C").with_annotation("rank", 2)]);
        let v = term_to_json(&t);
        assert_eq!(v.to_string(), r#"{"ann":{},"args":[{"ann":{"rank":2},"args":[],"op":"C"}],"op":"f"}"#);
        assert_eq!(term_from_json(&sig, &v).unwrap(), t);
    }
}
