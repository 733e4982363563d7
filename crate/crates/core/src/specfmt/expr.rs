//! The arithmetic expression language used inside chain-spec documents.
//!
//! Grammar, loosest to tightest: or, and, not, comparison (non-associative),
//! additive, multiplicative, unary minus, `^` (right-associative, its left
//! side an atom), atoms. Atoms are numeric literals, `i`, `n`, `true`,
//! `false`, function calls, and parenthesized expressions.
//!
//! Numbers evaluate in double precision. `i` and `n` are integers; `floor`
//! rounds toward negative infinity and `mod` follows floored division, so
//! block arithmetic on step indices is exact. `and`/`or` short-circuit left
//! to right. Printing inserts the minimal parentheses, so print-then-parse
//! returns the same tree.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    I,
    N,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Or,
    And,
    Lt,
    Le,
    Eq,
    Ge,
    Gt,
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Floor,
    Abs,
    Pow,
    Mod,
    Min,
    Max,
}

impl Func {
    fn by_name(name: &str) -> Option<Func> {
        match name {
            "floor" => Some(Func::Floor),
            "abs" => Some(Func::Abs),
            "pow" => Some(Func::Pow),
            "mod" => Some(Func::Mod),
            "min" => Some(Func::Min),
            "max" => Some(Func::Max),
            _ => None,
        }
    }

    fn arity(self) -> usize {
        match self {
            Func::Floor | Func::Abs => 1,
            Func::Pow | Func::Mod | Func::Min | Func::Max => 2,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Func::Floor => "floor",
            Func::Abs => "abs",
            Func::Pow => "pow",
            Func::Mod => "mod",
            Func::Min => "min",
            Func::Max => "max",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Bool(bool),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

/// Evaluation point: `n` is always defined, `i` only where a step index
/// exists (kernel entries, schedule conditions, per-step functions).
#[derive(Debug, Clone, Copy)]
pub struct EvalCtx {
    pub i: Option<u64>,
    pub n: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Num(f64),
    Bool(bool),
}

impl Value {
    fn as_num(self, context: &str) -> Result<f64> {
        match self {
            Value::Num(v) => Ok(v),
            Value::Bool(_) => Err(Error::TypeMismatch {
                context: context.into(),
                expected: "number",
                found: "boolean",
            }),
        }
    }

    fn as_bool(self, context: &str) -> Result<bool> {
        match self {
            Value::Bool(v) => Ok(v),
            Value::Num(_) => Err(Error::TypeMismatch {
                context: context.into(),
                expected: "boolean",
                found: "number",
            }),
        }
    }
}

// --- lexer -----------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    Lt,
    Le,
    Eq,
    Ge,
    Gt,
    LParen,
    RParen,
    Comma,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Caret => "`^`".into(),
            Tok::Lt => "`<`".into(),
            Tok::Le => "`<=`".into(),
            Tok::Eq => "`=`".into(),
            Tok::Ge => "`>=`".into(),
            Tok::Gt => "`>`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::End => "end of expression".into(),
        }
    }
}

struct Token {
    tok: Tok,
    col: usize,
}

fn lex(text: &str, context: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < chars.len() {
        let col = pos + 1;
        let c = chars[pos];
        match c {
            ' ' | '\t' | '\n' | '\r' => pos += 1,
            '+' => {
                out.push(Token { tok: Tok::Plus, col });
                pos += 1;
            }
            '-' => {
                out.push(Token { tok: Tok::Minus, col });
                pos += 1;
            }
            '*' => {
                out.push(Token { tok: Tok::Star, col });
                pos += 1;
            }
            '/' => {
                out.push(Token { tok: Tok::Slash, col });
                pos += 1;
            }
            '^' => {
                out.push(Token { tok: Tok::Caret, col });
                pos += 1;
            }
            '(' => {
                out.push(Token { tok: Tok::LParen, col });
                pos += 1;
            }
            ')' => {
                out.push(Token { tok: Tok::RParen, col });
                pos += 1;
            }
            ',' => {
                out.push(Token { tok: Tok::Comma, col });
                pos += 1;
            }
            '<' | '>' => {
                let eq = chars.get(pos + 1) == Some(&'=');
                let tok = match (c, eq) {
                    ('<', true) => Tok::Le,
                    ('<', false) => Tok::Lt,
                    ('>', true) => Tok::Ge,
                    _ => Tok::Gt,
                };
                out.push(Token { tok, col });
                pos += if eq { 2 } else { 1 };
            }
            '=' => {
                out.push(Token { tok: Tok::Eq, col });
                pos += 1;
            }
            '0'..='9' => {
                let start = pos;
                while pos < chars.len() && chars[pos].is_ascii_digit() {
                    pos += 1;
                }
                if pos < chars.len()
                    && chars[pos] == '.'
                    && chars.get(pos + 1).is_some_and(|d| d.is_ascii_digit())
                {
                    pos += 1;
                    while pos < chars.len() && chars[pos].is_ascii_digit() {
                        pos += 1;
                    }
                }
                if pos < chars.len() && (chars[pos] == 'e' || chars[pos] == 'E') {
                    let mut probe = pos + 1;
                    if matches!(chars.get(probe), Some('+') | Some('-')) {
                        probe += 1;
                    }
                    if chars.get(probe).is_some_and(|d| d.is_ascii_digit()) {
                        pos = probe;
                        while pos < chars.len() && chars[pos].is_ascii_digit() {
                            pos += 1;
                        }
                    }
                }
                let lexeme: String = chars[start..pos].iter().collect();
                let value: f64 = lexeme.parse().expect("digit pattern is a valid float");
                if !value.is_finite() {
                    return Err(Error::Syntax {
                        context: context.into(),
                        col,
                        found: lexeme,
                        expected: vec!["finite number".into()],
                    });
                }
                out.push(Token {
                    tok: Tok::Num(value),
                    col,
                });
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = pos;
                while pos < chars.len()
                    && (chars[pos].is_ascii_alphanumeric() || chars[pos] == '_')
                {
                    pos += 1;
                }
                out.push(Token {
                    tok: Tok::Ident(chars[start..pos].iter().collect()),
                    col,
                });
            }
            other => {
                return Err(Error::Syntax {
                    context: context.into(),
                    col,
                    found: format!("`{other}`"),
                    expected: vec!["a token".into()],
                });
            }
        }
    }
    out.push(Token {
        tok: Tok::End,
        col: chars.len() + 1,
    });
    Ok(out)
}

// --- parser ----------------------------------------------------------------

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    context: &'a str,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn col(&self) -> usize {
        self.tokens[self.pos].col
    }

    fn advance(&mut self) {
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
    }

    fn keyword(&self, word: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == word)
    }

    fn syntax(&self, expected: &[&str]) -> Error {
        Error::Syntax {
            context: self.context.into(),
            col: self.col(),
            found: self.peek().describe(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn parse_or(&mut self) -> Result<Expr> {
        let mut lhs = self.parse_and()?;
        while self.keyword("or") {
            self.advance();
            let rhs = self.parse_and()?;
            lhs = Expr::Binary(BinOp::Or, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_and(&mut self) -> Result<Expr> {
        let mut lhs = self.parse_not()?;
        while self.keyword("and") {
            self.advance();
            let rhs = self.parse_not()?;
            lhs = Expr::Binary(BinOp::And, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_not(&mut self) -> Result<Expr> {
        if self.keyword("not") {
            self.advance();
            let inner = self.parse_not()?;
            return Ok(Expr::Unary(UnaryOp::Not, Box::new(inner)));
        }
        self.parse_cmp()
    }

    fn parse_cmp(&mut self) -> Result<Expr> {
        let lhs = self.parse_add()?;
        let op = match self.peek() {
            Tok::Lt => BinOp::Lt,
            Tok::Le => BinOp::Le,
            Tok::Eq => BinOp::Eq,
            Tok::Ge => BinOp::Ge,
            Tok::Gt => BinOp::Gt,
            _ => return Ok(lhs),
        };
        self.advance();
        let rhs = self.parse_add()?;
        // Comparisons do not chain; a following comparison operator is left
        // for the caller, where it fails as an unexpected token.
        Ok(Expr::Binary(op, Box::new(lhs), Box::new(rhs)))
    }

    fn parse_add(&mut self) -> Result<Expr> {
        let mut lhs = self.parse_mul()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.advance();
            let rhs = self.parse_mul()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn parse_mul(&mut self) -> Result<Expr> {
        let mut lhs = self.parse_unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.advance();
            let rhs = self.parse_unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn parse_unary(&mut self) -> Result<Expr> {
        if matches!(self.peek(), Tok::Minus) {
            self.advance();
            let inner = self.parse_unary()?;
            // Fold a negated literal so `-0.25` is one node and printing
            // reproduces the source token.
            if let Expr::Num(v) = inner {
                return Ok(Expr::Num(-v));
            }
            return Ok(Expr::Unary(UnaryOp::Neg, Box::new(inner)));
        }
        self.parse_pow()
    }

    fn parse_pow(&mut self) -> Result<Expr> {
        let base = self.parse_atom()?;
        if matches!(self.peek(), Tok::Caret) {
            self.advance();
            let exponent = self.parse_unary()?;
            return Ok(Expr::Binary(
                BinOp::Pow,
                Box::new(base),
                Box::new(exponent),
            ));
        }
        Ok(base)
    }

    fn parse_atom(&mut self) -> Result<Expr> {
        match self.peek().clone() {
            Tok::Num(v) => {
                self.advance();
                Ok(Expr::Num(v))
            }
            Tok::LParen => {
                self.advance();
                let inner = self.parse_or()?;
                if !matches!(self.peek(), Tok::RParen) {
                    return Err(self.syntax(&["`)`"]));
                }
                self.advance();
                Ok(inner)
            }
            Tok::Ident(name) => match name.as_str() {
                "i" => {
                    self.advance();
                    Ok(Expr::Var(Var::I))
                }
                "n" => {
                    self.advance();
                    Ok(Expr::Var(Var::N))
                }
                "true" => {
                    self.advance();
                    Ok(Expr::Bool(true))
                }
                "false" => {
                    self.advance();
                    Ok(Expr::Bool(false))
                }
                "and" | "or" | "not" => Err(self.syntax(&["an operand"])),
                _ => self.parse_call(name),
            },
            _ => Err(self.syntax(&[
                "number",
                "`i`",
                "`n`",
                "`true`",
                "`false`",
                "function call",
                "`(`",
            ])),
        }
    }

    fn parse_call(&mut self, name: String) -> Result<Expr> {
        let name_col = self.col();
        self.advance();
        if !matches!(self.peek(), Tok::LParen) {
            return Err(Error::UnknownVariable {
                name,
                context: self.context.into(),
                col: name_col,
            });
        }
        let func = Func::by_name(&name).ok_or_else(|| Error::UnknownFunction {
            name: name.clone(),
            context: self.context.into(),
            col: name_col,
        })?;
        self.advance();
        let mut args = vec![self.parse_or()?];
        loop {
            match self.peek() {
                Tok::Comma => {
                    self.advance();
                    args.push(self.parse_or()?);
                }
                Tok::RParen => {
                    self.advance();
                    break;
                }
                _ => return Err(self.syntax(&["`,`", "`)`"])),
            }
        }
        if args.len() != func.arity() {
            return Err(Error::ArityMismatch {
                name,
                context: self.context.into(),
                expected: func.arity(),
                found: args.len(),
            });
        }
        Ok(Expr::Call(func, args))
    }
}

impl Expr {
    /// Parses an expression, labeling any diagnostic with `context` (the
    /// document field the text came from).
    pub fn parse_in(text: &str, context: &str) -> Result<Expr> {
        let tokens = lex(text, context)?;
        let mut parser = Parser {
            tokens,
            pos: 0,
            context,
        };
        let expr = parser.parse_or()?;
        if !matches!(parser.peek(), Tok::End) {
            return Err(parser.syntax(&["end of expression"]));
        }
        Ok(expr)
    }

    pub fn parse(text: &str) -> Result<Expr> {
        Expr::parse_in(text, "expression")
    }

    /// True when the tree mentions the step variable `i` anywhere.
    pub fn references_i(&self) -> bool {
        match self {
            Expr::Var(Var::I) => true,
            Expr::Num(_) | Expr::Var(Var::N) | Expr::Bool(_) => false,
            Expr::Unary(_, inner) => inner.references_i(),
            Expr::Binary(_, lhs, rhs) => lhs.references_i() || rhs.references_i(),
            Expr::Call(_, args) => args.iter().any(Expr::references_i),
        }
    }

    pub fn eval(&self, ctx: &EvalCtx, context: &str) -> Result<Value> {
        match self {
            Expr::Num(v) => Ok(Value::Num(*v)),
            Expr::Bool(b) => Ok(Value::Bool(*b)),
            Expr::Var(Var::N) => Ok(Value::Num(ctx.n as f64)),
            Expr::Var(Var::I) => match ctx.i {
                Some(i) => Ok(Value::Num(i as f64)),
                None => Err(Error::VariableNotAllowed {
                    name: "i".into(),
                    field: context.into(),
                }),
            },
            Expr::Unary(UnaryOp::Neg, inner) => {
                Ok(Value::Num(-inner.eval(ctx, context)?.as_num(context)?))
            }
            Expr::Unary(UnaryOp::Not, inner) => {
                Ok(Value::Bool(!inner.eval(ctx, context)?.as_bool(context)?))
            }
            Expr::Binary(op, lhs, rhs) => self.eval_binary(*op, lhs, rhs, ctx, context),
            Expr::Call(func, args) => {
                let a = args[0].eval(ctx, context)?.as_num(context)?;
                match func {
                    Func::Floor => Ok(Value::Num(a.floor())),
                    Func::Abs => Ok(Value::Num(a.abs())),
                    _ => {
                        let b = args[1].eval(ctx, context)?.as_num(context)?;
                        match func {
                            Func::Pow => Ok(Value::Num(a.powf(b))),
                            Func::Mod => floored_mod(a, b, ctx, context),
                            Func::Min => Ok(Value::Num(a.min(b))),
                            Func::Max => Ok(Value::Num(a.max(b))),
                            Func::Floor | Func::Abs => unreachable!(),
                        }
                    }
                }
            }
        }
    }

    fn eval_binary(
        &self,
        op: BinOp,
        lhs: &Expr,
        rhs: &Expr,
        ctx: &EvalCtx,
        context: &str,
    ) -> Result<Value> {
        // and/or short-circuit so a guarded division like
        // `i = 1 or mod(n, i - 1) = 0` is total.
        if op == BinOp::And {
            let l = lhs.eval(ctx, context)?.as_bool(context)?;
            if !l {
                return Ok(Value::Bool(false));
            }
            return Ok(Value::Bool(rhs.eval(ctx, context)?.as_bool(context)?));
        }
        if op == BinOp::Or {
            let l = lhs.eval(ctx, context)?.as_bool(context)?;
            if l {
                return Ok(Value::Bool(true));
            }
            return Ok(Value::Bool(rhs.eval(ctx, context)?.as_bool(context)?));
        }
        let a = lhs.eval(ctx, context)?.as_num(context)?;
        let b = rhs.eval(ctx, context)?.as_num(context)?;
        match op {
            BinOp::Add => Ok(Value::Num(a + b)),
            BinOp::Sub => Ok(Value::Num(a - b)),
            BinOp::Mul => Ok(Value::Num(a * b)),
            BinOp::Div => {
                if b == 0.0 {
                    Err(Error::DivisionByZero {
                        context: context.into(),
                        i: ctx.i,
                        n: ctx.n,
                    })
                } else {
                    Ok(Value::Num(a / b))
                }
            }
            BinOp::Pow => Ok(Value::Num(a.powf(b))),
            BinOp::Lt => Ok(Value::Bool(a < b)),
            BinOp::Le => Ok(Value::Bool(a <= b)),
            BinOp::Eq => Ok(Value::Bool(a == b)),
            BinOp::Ge => Ok(Value::Bool(a >= b)),
            BinOp::Gt => Ok(Value::Bool(a > b)),
            BinOp::And | BinOp::Or => unreachable!(),
        }
    }

    pub fn eval_num(&self, ctx: &EvalCtx, context: &str) -> Result<f64> {
        self.eval(ctx, context)?.as_num(context)
    }

    pub fn eval_bool(&self, ctx: &EvalCtx, context: &str) -> Result<bool> {
        self.eval(ctx, context)?.as_bool(context)
    }
}

fn floored_mod(a: f64, b: f64, ctx: &EvalCtx, context: &str) -> Result<Value> {
    if b == 0.0 {
        return Err(Error::DivisionByZero {
            context: context.into(),
            i: ctx.i,
            n: ctx.n,
        });
    }
    Ok(Value::Num(a - b * (a / b).floor()))
}

// --- printing --------------------------------------------------------------

const PREC_OR: u8 = 1;
const PREC_AND: u8 = 2;
const PREC_NOT: u8 = 3;
const PREC_CMP: u8 = 4;
const PREC_ADD: u8 = 5;
const PREC_MUL: u8 = 6;
const PREC_NEG: u8 = 7;
const PREC_POW: u8 = 8;
const PREC_ATOM: u8 = 10;

impl BinOp {
    fn precedence(self) -> u8 {
        match self {
            BinOp::Or => PREC_OR,
            BinOp::And => PREC_AND,
            BinOp::Lt | BinOp::Le | BinOp::Eq | BinOp::Ge | BinOp::Gt => PREC_CMP,
            BinOp::Add | BinOp::Sub => PREC_ADD,
            BinOp::Mul | BinOp::Div => PREC_MUL,
            BinOp::Pow => PREC_POW,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            BinOp::Or => "or",
            BinOp::And => "and",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Eq => "=",
            BinOp::Ge => ">=",
            BinOp::Gt => ">",
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

impl Expr {
    fn precedence(&self) -> u8 {
        match self {
            Expr::Num(v) if *v < 0.0 => PREC_NEG,
            Expr::Num(_) | Expr::Var(_) | Expr::Bool(_) | Expr::Call(..) => PREC_ATOM,
            Expr::Unary(UnaryOp::Neg, _) => PREC_NEG,
            Expr::Unary(UnaryOp::Not, _) => PREC_NOT,
            Expr::Binary(op, ..) => op.precedence(),
        }
    }

    fn write(&self, out: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        let wrap = self.precedence() < min_prec;
        if wrap {
            write!(out, "(")?;
        }
        match self {
            Expr::Num(v) => write!(out, "{v}")?,
            Expr::Var(Var::I) => write!(out, "i")?,
            Expr::Var(Var::N) => write!(out, "n")?,
            Expr::Bool(b) => write!(out, "{b}")?,
            Expr::Unary(UnaryOp::Neg, inner) => {
                write!(out, "-")?;
                inner.write(out, PREC_NEG)?;
            }
            Expr::Unary(UnaryOp::Not, inner) => {
                write!(out, "not ")?;
                inner.write(out, PREC_NOT)?;
            }
            Expr::Binary(op, lhs, rhs) => {
                let prec = op.precedence();
                if *op == BinOp::Pow {
                    // The grammar requires an atom to the left of `^` and
                    // allows a signed operand to the right.
                    lhs.write(out, PREC_ATOM)?;
                    write!(out, " ^ ")?;
                    rhs.write(out, PREC_NEG)?;
                } else {
                    let (lmin, rmin) = if prec == PREC_CMP {
                        (PREC_ADD, PREC_ADD)
                    } else {
                        (prec, prec + 1)
                    };
                    lhs.write(out, lmin)?;
                    write!(out, " {} ", op.symbol())?;
                    rhs.write(out, rmin)?;
                }
            }
            Expr::Call(func, args) => {
                write!(out, "{}(", func.name())?;
                for (idx, arg) in args.iter().enumerate() {
                    if idx > 0 {
                        write!(out, ", ")?;
                    }
                    arg.write(out, PREC_OR)?;
                }
                write!(out, ")")?;
            }
        }
        if wrap {
            write!(out, ")")?;
        }
        Ok(())
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(out, PREC_OR)
    }
}
