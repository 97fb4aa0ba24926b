//! Surface syntax of `.pm` programs.

use num_bigint::BigInt;

use super::lexer::{Cursor, Pos, SyntaxError, Tok};

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SurfaceProgram {
    pub op_decls: Vec<OpDecl>,
    pub pattern_defs: Vec<PatternDecl>,
    pub rule_defs: Vec<RuleDecl>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpDecl {
    pub name: String,
    pub arity: usize,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternDecl {
    pub name: String,
    pub params: Vec<String>,
    pub stmts: Vec<Stmt>,
    pub ret: PExpr,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stmt {
    Local { name: String, pos: Pos },
    Constraint { var: String, body: PExpr, pos: Pos },
    Assert { guard: GExpr, pos: Pos },
    Alias { name: String, body: PExpr, pos: Pos },
}

/// Pattern and template expressions share one shape.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PExpr {
    Name(String, Pos),
    Call(String, Vec<PExpr>, Pos),
    FunCall(String, Vec<PExpr>, Pos),
    Num(String, Pos),
}

impl PExpr {
    pub fn pos(&self) -> Pos {
        match self {
            PExpr::Name(_, p) | PExpr::Call(_, _, p) | PExpr::FunCall(_, _, p) | PExpr::Num(_, p) => *p,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AExpr {
    Attr { var: String, key: String, pos: Pos },
    Num(BigInt),
    Add(Box<AExpr>, Box<AExpr>),
    Sub(Box<AExpr>, Box<AExpr>),
    Mul(Box<AExpr>, Box<AExpr>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GExpr {
    True,
    Eq(AExpr, AExpr),
    Lt(AExpr, AExpr),
    And(Box<GExpr>, Box<GExpr>),
    Or(Box<GExpr>, Box<GExpr>),
    Not(Box<GExpr>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleDecl {
    pub pattern: String,
    pub guard: Option<GExpr>,
    pub template: PExpr,
    pub pos: Pos,
}

pub fn parse_program(text: &str) -> Result<SurfaceProgram, SyntaxError> {
    let mut cur = Cursor::new(text)?;
    let mut prog = SurfaceProgram::default();
    loop {
        let pos = cur.pos();
        if *cur.peek() == Tok::Eof {
            return Ok(prog);
        }
        if cur.keyword("op") {
            let name = cur.ident()?;
            cur.expect(&Tok::Slash)?;
            let arity = natural(&mut cur)?;
            cur.expect(&Tok::Semi)?;
            prog.op_decls.push(OpDecl { name, arity, pos });
        } else if cur.keyword("pattern") {
            prog.pattern_defs.push(pattern_decl(&mut cur, pos)?);
        } else if cur.keyword("rule") {
            let pattern = cur.ident()?;
            let guard = if cur.keyword("when") {
                Some(gexpr(&mut cur)?)
            } else {
                None
            };
            cur.expect(&Tok::Arrow)?;
            let template = pexpr(&mut cur)?;
            cur.expect(&Tok::Semi)?;
            prog.rule_defs.push(RuleDecl {
                pattern,
                guard,
                template,
                pos,
            });
        } else {
            return Err(cur.unexpected("`op`, `pattern` or `rule`"));
        }
    }
}

fn natural(cur: &mut Cursor) -> Result<usize, SyntaxError> {
    let pos = cur.pos();
    match cur.bump() {
        Tok::Num(n) if !n.contains('.') => n
            .parse()
            .map_err(|_| SyntaxError::new(pos, format!("number `{n}` is out of range"))),
        other => Err(SyntaxError::new(pos, format!("expected natural number, found {other}"))),
    }
}

fn pattern_decl(cur: &mut Cursor, pos: Pos) -> Result<PatternDecl, SyntaxError> {
    let name = cur.ident()?;
    cur.expect(&Tok::LParen)?;
    let mut params = Vec::new();
    if !cur.eat(&Tok::RParen) {
        loop {
            params.push(cur.ident()?);
            if !cur.eat(&Tok::Comma) {
                break;
            }
        }
        cur.expect(&Tok::RParen)?;
    }
    cur.expect(&Tok::LBrace)?;
    let mut stmts = Vec::new();
    loop {
        let spos = cur.pos();
        if cur.keyword("return") {
            let ret = pexpr(cur)?;
            cur.expect(&Tok::Semi)?;
            cur.expect(&Tok::RBrace)?;
            return Ok(PatternDecl {
                name,
                params,
                stmts,
                ret,
                pos,
            });
        }
        if cur.keyword("local") {
            let name = cur.ident()?;
            cur.expect(&Tok::Semi)?;
            stmts.push(Stmt::Local { name, pos: spos });
        } else if cur.keyword("assert") {
            let guard = gexpr(cur)?;
            cur.expect(&Tok::Semi)?;
            stmts.push(Stmt::Assert { guard, pos: spos });
        } else {
            let var = cur.ident()?;
            let stmt = match cur.bump() {
                Tok::Le => Stmt::Constraint {
                    var,
                    body: pexpr(cur)?,
                    pos: spos,
                },
                Tok::Assign => Stmt::Alias {
                    name: var,
                    body: pexpr(cur)?,
                    pos: spos,
                },
                other => {
                    return Err(SyntaxError::new(
                        spos,
                        format!("expected `<=` or `=` after `{var}`, found {other}"),
                    ))
                }
            };
            cur.expect(&Tok::Semi)?;
            stmts.push(stmt);
        }
    }
}

pub(crate) fn pexpr(cur: &mut Cursor) -> Result<PExpr, SyntaxError> {
    let pos = cur.pos();
    match cur.bump() {
        Tok::Num(n) => Ok(PExpr::Num(n, pos)),
        Tok::Dollar => {
            let f = cur.ident()?;
            cur.expect(&Tok::LParen)?;
            Ok(PExpr::FunCall(f, pargs(cur)?, pos))
        }
        Tok::Ident(name) => {
            if cur.eat(&Tok::LParen) {
                Ok(PExpr::Call(name, pargs(cur)?, pos))
            } else {
                Ok(PExpr::Name(name, pos))
            }
        }
        other => Err(SyntaxError::new(pos, format!("expected pattern, found {other}"))),
    }
}

/// Arguments after the opening parenthesis, through the closing one.
fn pargs(cur: &mut Cursor) -> Result<Vec<PExpr>, SyntaxError> {
    let mut args = Vec::new();
    if cur.eat(&Tok::RParen) {
        return Ok(args);
    }
    loop {
        args.push(pexpr(cur)?);
        if !cur.eat(&Tok::Comma) {
            break;
        }
    }
    cur.expect(&Tok::RParen)?;
    Ok(args)
}

/// Guard and arithmetic share precedence levels; sorts are checked as we go.
enum Sx {
    Bool(GExpr),
    Arith(AExpr),
}

fn as_bool(e: Sx, pos: Pos) -> Result<GExpr, SyntaxError> {
    match e {
        Sx::Bool(g) => Ok(g),
        Sx::Arith(_) => Err(SyntaxError::new(pos, "expected a condition, found an arithmetic expression")),
    }
}

fn as_arith(e: Sx, pos: Pos) -> Result<AExpr, SyntaxError> {
    match e {
        Sx::Arith(a) => Ok(a),
        Sx::Bool(_) => Err(SyntaxError::new(pos, "expected an arithmetic expression, found a condition")),
    }
}

pub(crate) fn gexpr(cur: &mut Cursor) -> Result<GExpr, SyntaxError> {
    let pos = cur.pos();
    let e = sx_or(cur)?;
    as_bool(e, pos)
}

fn sx_or(cur: &mut Cursor) -> Result<Sx, SyntaxError> {
    let pos = cur.pos();
    let mut e = sx_and(cur)?;
    while cur.eat(&Tok::OrOr) {
        let rpos = cur.pos();
        let r = sx_and(cur)?;
        e = Sx::Bool(GExpr::Or(Box::new(as_bool(e, pos)?), Box::new(as_bool(r, rpos)?)));
    }
    Ok(e)
}

fn sx_and(cur: &mut Cursor) -> Result<Sx, SyntaxError> {
    let pos = cur.pos();
    let mut e = sx_not(cur)?;
    while cur.eat(&Tok::AndAnd) {
        let rpos = cur.pos();
        let r = sx_not(cur)?;
        e = Sx::Bool(GExpr::And(Box::new(as_bool(e, pos)?), Box::new(as_bool(r, rpos)?)));
    }
    Ok(e)
}

fn sx_not(cur: &mut Cursor) -> Result<Sx, SyntaxError> {
    if cur.eat(&Tok::Bang) {
        let pos = cur.pos();
        let inner = sx_not(cur)?;
        return Ok(Sx::Bool(GExpr::Not(Box::new(as_bool(inner, pos)?))));
    }
    sx_cmp(cur)
}

fn sx_cmp(cur: &mut Cursor) -> Result<Sx, SyntaxError> {
    let pos = cur.pos();
    let l = sx_add(cur)?;
    let eq = match cur.peek() {
        Tok::EqEq => true,
        Tok::Lt => false,
        _ => return Ok(l),
    };
    cur.bump();
    let rpos = cur.pos();
    let r = sx_add(cur)?;
    let (l, r) = (as_arith(l, pos)?, as_arith(r, rpos)?);
    Ok(Sx::Bool(if eq { GExpr::Eq(l, r) } else { GExpr::Lt(l, r) }))
}

fn sx_add(cur: &mut Cursor) -> Result<Sx, SyntaxError> {
    let pos = cur.pos();
    let mut e = sx_mul(cur)?;
    loop {
        let add = match cur.peek() {
            Tok::Plus => true,
            Tok::Minus => false,
            _ => return Ok(e),
        };
        cur.bump();
        let rpos = cur.pos();
        let r = sx_mul(cur)?;
        let (l, r) = (Box::new(as_arith(e, pos)?), Box::new(as_arith(r, rpos)?));
        e = Sx::Arith(if add { AExpr::Add(l, r) } else { AExpr::Sub(l, r) });
    }
}

fn sx_mul(cur: &mut Cursor) -> Result<Sx, SyntaxError> {
    let pos = cur.pos();
    let mut e = sx_atom(cur)?;
    while cur.eat(&Tok::Star) {
        let rpos = cur.pos();
        let r = sx_atom(cur)?;
        e = Sx::Arith(AExpr::Mul(
            Box::new(as_arith(e, pos)?),
            Box::new(as_arith(r, rpos)?),
        ));
    }
    Ok(e)
}

fn sx_atom(cur: &mut Cursor) -> Result<Sx, SyntaxError> {
    let pos = cur.pos();
    match cur.bump() {
        Tok::LParen => {
            let e = sx_or(cur)?;
            cur.expect(&Tok::RParen)?;
            Ok(e)
        }
        Tok::Num(n) => {
            if n.contains('.') {
                return Err(SyntaxError::new(pos, "guard arithmetic is over naturals"));
            }
            Ok(Sx::Arith(AExpr::Num(n.parse().expect("digits"))))
        }
        Tok::Ident(s) if s == "true" => Ok(Sx::Bool(GExpr::True)),
        Tok::Ident(var) => {
            cur.expect(&Tok::Dot)?;
            let key = cur.ident()?;
            Ok(Sx::Arith(AExpr::Attr { var, key, pos }))
        }
        other => Err(SyntaxError::new(pos, format!("expected guard expression, found {other}"))),
    }
}
