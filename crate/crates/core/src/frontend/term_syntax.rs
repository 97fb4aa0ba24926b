//! Term text: `Op{key=value, ...}(child, ...)`.

use thiserror::Error;

use super::lexer::{Cursor, Pos, SyntaxError, Tok};
use crate::term::{name, Annotations, OperatorSignature, Term, TermError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TermParseError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error("{pos}: {source}")]
    Invalid {
        pos: Pos,
        #[source]
        source: TermError,
    },
}

/// Operator name standing for a numeric literal: `2` is `LitNat_2`, `0.5` is `LitStr_0p5`.
pub fn literal_op(lit: &str) -> String {
    if lit.contains('.') {
        format!("LitStr_{}", lit.replace('.', "p"))
    } else {
        format!("LitNat_{lit}")
    }
}

pub fn is_literal_op(op: &str) -> bool {
    op.starts_with("LitNat_") || op.starts_with("LitStr_")
}

pub fn parse_term(sig: &OperatorSignature, text: &str) -> Result<Term, TermParseError> {
    let mut cur = Cursor::new(text)?;
    let t = term(sig, &mut cur)?;
    if *cur.peek() != Tok::Eof {
        return Err(cur.unexpected("end of input").into());
    }
    Ok(t)
}

pub fn print_term(t: &Term) -> String {
    t.to_string()
}

fn term(sig: &OperatorSignature, cur: &mut Cursor) -> Result<Term, TermParseError> {
    let pos = cur.pos();
    let op = match cur.bump() {
        Tok::Ident(s) => s,
        Tok::Num(n) => literal_op(&n),
        other => {
            return Err(SyntaxError::new(pos, format!("expected operator name, found {other}")).into())
        }
    };
    let mut ann = Annotations::new();
    if cur.eat(&Tok::LBrace) {
        loop {
            let key_pos = cur.pos();
            let key = cur.ident()?;
            cur.expect(&Tok::Assign)?;
            let value = match cur.bump() {
                Tok::Num(n) if !n.contains('.') => n
                    .parse::<u64>()
                    .map_err(|_| SyntaxError::new(key_pos, format!("annotation `{key}` is out of range")))?,
                other => {
                    return Err(SyntaxError::new(
                        key_pos,
                        format!("annotation `{key}` needs a natural number, found {other}"),
                    )
                    .into())
                }
            };
            if ann.insert(name(&key), value).is_some() {
                return Err(SyntaxError::new(key_pos, format!("duplicate annotation `{key}`")).into());
            }
            if !cur.eat(&Tok::Comma) {
                break;
            }
        }
        cur.expect(&Tok::RBrace)?;
    }
    let mut children = Vec::new();
    if cur.eat(&Tok::LParen) && !cur.eat(&Tok::RParen) {
        loop {
            children.push(term(sig, cur)?);
            if !cur.eat(&Tok::Comma) {
                break;
            }
        }
        cur.expect(&Tok::RParen)?;
    }
    if is_literal_op(&op) && !sig.contains(&op) {
        // numerals denote themselves even when no program mentions them
        if !children.is_empty() {
            let source = TermError::ArityMismatch {
                op,
                expected: 0,
                found: children.len(),
            };
            return Err(TermParseError::Invalid { pos, source });
        }
        return Ok(Term::from_parts(name(&op), children, ann));
    }
    Term::new(sig, &op, children, ann).map_err(|source| TermParseError::Invalid { pos, source })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::term::annotations;

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
            .with_op("f", 1)
            .unwrap()
            .with_op("LitNat_2", 0)
            .unwrap()
    }

    #[test]
    fn parse_cublas_fixture() {
        let t = parse_term(&sig(), "MatMul(A{rank=2}(), Trans(B{rank=2}()))").unwrap();
        let a = Term::from_parts(name("A"), vec![], annotations([("rank", 2)]));
        let b = Term::from_parts(name("B"), vec![], annotations([("rank", 2)]));
        assert_eq!(t, Term::app("MatMul", vec![a, Term::app("Trans", vec![b])]));
    }

    #[test]
    fn constants_with_and_without_parens() {
        assert_eq!(parse_term(&sig(), "C()").unwrap(), Term::constant("C"));
        assert_eq!(parse_term(&sig(), " C ").unwrap(), Term::constant("C"));
        assert_eq!(parse_term(&sig(), "f(2)").unwrap().to_string(), "f(LitNat_2())");
        assert_eq!(parse_term(&sig(), "f(0.5)").unwrap().to_string(), "f(LitStr_0p5())");
        assert!(parse_term(&sig(), "f(3(C))").is_err());
        let t = parse_term(&sig(), "f(7)").unwrap();
        assert_eq!(parse_term(&sig(), &print_term(&t)).unwrap(), t);
    }

    #[test]
    fn print_sorts_keys() {
        let t = Term::constant("C").with_annotation("b", 1).with_annotation("a", 2);
        assert_eq!(print_term(&t), "C{a=2, b=1}()");
        assert_eq!(print_term(&Term::app("f", vec![Term::constant("C")])), "f(C())");
    }

    #[test]
    fn errors() {
        assert!(matches!(
            parse_term(&sig(), "Trans(A(), B())"),
            Err(TermParseError::Invalid {
                source: TermError::ArityMismatch { .. },
                ..
            })
        ));
        assert!(matches!(
            parse_term(&sig(), "Nope()"),
            Err(TermParseError::Invalid {
                source: TermError::UnknownOperator(_),
                ..
            })
        ));
        let err = parse_term(&sig(), "f(C()").unwrap_err();
        assert_eq!(err.to_string(), "1:6: expected `)`, found end of input");
        assert!(parse_term(&sig(), "C{rank=1, rank=2}").is_err());
    }

    #[test]
    fn literal_names() {
        assert_eq!(literal_op("2"), "LitNat_2");
        assert_eq!(literal_op("0.5"), "LitStr_0p5");
    }
}
