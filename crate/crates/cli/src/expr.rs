//! A small arithmetic grammar over the state `x0, x1, …` and control
//! `u0, u1, …`:
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' unary)?
//! atom    := number | 'pi' | var | func '(' expr ')' | '(' expr ')'
//! func    := 'sin' | 'cos' | 'exp'
//! ```
//!
//! `^` binds tighter than unary minus and associates to the right, so
//! `-x0^2^3` is `-(x0^(2^3))`.

use std::fmt;

use nalgebra::DVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Exp => x.exp(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X(usize),
    U(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Call(Func, Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

/// A parse failure at a byte offset of the source text.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub offset: usize,
    pub token: String,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at token {:?}", self.message, self.token)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    End,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    text: String,
    offset: usize,
}

fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || c == '.' {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            // exponent, only when followed by digits
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text = &src[start..i];
            let value = text.parse::<f64>().map_err(|_| ParseError {
                offset: start,
                token: text.to_string(),
                message: "malformed number".into(),
            })?;
            out.push(Token {
                tok: Tok::Num(value),
                text: text.to_string(),
                offset: start,
            });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            let text = &src[start..i];
            out.push(Token {
                tok: Tok::Ident(text.to_string()),
                text: text.to_string(),
                offset: start,
            });
            continue;
        }
        let tok = match c {
            '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            _ => {
                let ch = src[start..].chars().next().unwrap_or(c);
                return Err(ParseError {
                    offset: start,
                    token: ch.to_string(),
                    message: "unexpected character".into(),
                });
            }
        };
        i += 1;
        out.push(Token {
            tok,
            text: c.to_string(),
            offset: start,
        });
    }
    out.push(Token {
        tok: Tok::End,
        text: "<end>".into(),
        offset: src.len(),
    });
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error(t: &Token, message: &str) -> ParseError {
        ParseError {
            offset: t.offset,
            token: t.text.clone(),
            message: message.into(),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        while let Tok::Op(c @ ('+' | '-')) = self.peek().tok {
            self.next();
            let op = if c == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(self.term()?));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Tok::Op(c @ ('*' | '/')) = self.peek().tok {
            self.next();
            let op = if c == '*' { BinOp::Mul } else { BinOp::Div };
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(self.unary()?));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.peek().tok == Tok::Op('-') {
            self.next();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.peek().tok == Tok::Op('^') {
            self.next();
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let t = self.next();
        match &t.tok {
            Tok::Num(v) => Ok(Expr::Num(*v)),
            Tok::LParen => {
                let e = self.expr()?;
                let close = self.next();
                if close.tok != Tok::RParen {
                    return Err(Self::error(&close, "expected ')'"));
                }
                Ok(e)
            }
            Tok::Ident(name) => {
                if name == "pi" {
                    return Ok(Expr::Num(std::f64::consts::PI));
                }
                let func = match name.as_str() {
                    "sin" => Some(Func::Sin),
                    "cos" => Some(Func::Cos),
                    "exp" => Some(Func::Exp),
                    _ => None,
                };
                if let Some(f) = func {
                    let open = self.next();
                    if open.tok != Tok::LParen {
                        return Err(Self::error(&open, "expected '(' after function name"));
                    }
                    let arg = self.expr()?;
                    let close = self.next();
                    if close.tok != Tok::RParen {
                        return Err(Self::error(&close, "expected ')'"));
                    }
                    return Ok(Expr::Call(f, Box::new(arg)));
                }
                parse_var(name).map(Expr::Var).ok_or_else(|| Self::error(&t, "unknown identifier"))
            }
            Tok::End => Err(Self::error(&t, "unexpected end of expression")),
            _ => Err(Self::error(&t, "unexpected token")),
        }
    }
}

fn parse_var(name: &str) -> Option<Var> {
    let (head, digits) = name.split_at(1);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let i = digits.parse().ok()?;
    match head {
        "x" => Some(Var::X(i)),
        "u" => Some(Var::U(i)),
        _ => None,
    }
}

pub fn parse(src: &str) -> Result<Expr, ParseError> {
    let mut p = Parser {
        tokens: tokenize(src)?,
        pos: 0,
    };
    let e = p.expr()?;
    let rest = p.peek();
    if rest.tok != Tok::End {
        return Err(Parser::error(rest, "unexpected trailing token"));
    }
    Ok(e)
}

impl Expr {
    pub fn eval(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(Var::X(i)) => x[*i],
            Expr::Var(Var::U(i)) => u[*i],
            Expr::Neg(e) => -e.eval(x, u),
            Expr::Call(f, e) => f.apply(e.eval(x, u)),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(x, u), b.eval(x, u));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => a.powf(b),
                }
            }
        }
    }

    /// Value and gradient with respect to `x`, in forward mode.
    pub fn eval_grad(&self, x: &DVector<f64>, u: &DVector<f64>) -> (f64, DVector<f64>) {
        let m = x.len();
        match self {
            Expr::Num(v) => (*v, DVector::zeros(m)),
            Expr::Var(Var::X(i)) => {
                let mut g = DVector::zeros(m);
                g[*i] = 1.0;
                (x[*i], g)
            }
            Expr::Var(Var::U(i)) => (u[*i], DVector::zeros(m)),
            Expr::Neg(e) => {
                let (v, g) = e.eval_grad(x, u);
                (-v, -g)
            }
            Expr::Call(f, e) => {
                let (v, g) = e.eval_grad(x, u);
                let d = match f {
                    Func::Sin => v.cos(),
                    Func::Cos => -v.sin(),
                    Func::Exp => v.exp(),
                };
                (f.apply(v), g * d)
            }
            Expr::Bin(op, a, b) => {
                let (va, ga) = a.eval_grad(x, u);
                let (vb, gb) = b.eval_grad(x, u);
                match op {
                    BinOp::Add => (va + vb, ga + gb),
                    BinOp::Sub => (va - vb, ga - gb),
                    BinOp::Mul => (va * vb, ga * vb + gb * va),
                    BinOp::Div => (va / vb, (ga * vb - gb * va) / (vb * vb)),
                    BinOp::Pow => {
                        let v = va.powf(vb);
                        // the log term only exists when the exponent moves
                        let mut g = ga * (vb * va.powf(vb - 1.0));
                        if gb.iter().any(|c| *c != 0.0) {
                            g += gb * (v * va.ln());
                        }
                        (v, g)
                    }
                }
            }
        }
    }

    /// Largest state and control indices used, as counts.
    pub fn arity(&self) -> (usize, usize) {
        match self {
            Expr::Num(_) => (0, 0),
            Expr::Var(Var::X(i)) => (i + 1, 0),
            Expr::Var(Var::U(i)) => (0, i + 1),
            Expr::Neg(e) | Expr::Call(_, e) => e.arity(),
            Expr::Bin(_, a, b) => {
                let (a, b) = (a.arity(), b.arity());
                (a.0.max(b.0), a.1.max(b.1))
            }
        }
    }

    /// First variable name out of range for `m` states and `k` controls.
    pub fn out_of_range(&self, m: usize, k: usize) -> Option<String> {
        match self {
            Expr::Num(_) => None,
            Expr::Var(Var::X(i)) if *i >= m => Some(format!("x{i}")),
            Expr::Var(Var::U(i)) if *i >= k => Some(format!("u{i}")),
            Expr::Var(_) => None,
            Expr::Neg(e) | Expr::Call(_, e) => e.out_of_range(m, k),
            Expr::Bin(_, a, b) => a.out_of_range(m, k).or_else(|| b.out_of_range(m, k)),
        }
    }
}

/// Fully parenthesized except at atoms, so printing and parsing round-trip.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(Var::X(i)) => write!(f, "x{i}"),
            Expr::Var(Var::U(i)) => write!(f, "u{i}"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Call(func, e) => write!(f, "{}({e})", func.name()),
            Expr::Bin(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
        }
    }
}
