//! Expression trees for right-hand sides and a small recursive-descent
//! parser.
//!
//! Grammar (whitespace insensitive):
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' ['-'] integer)?
//! atom  := number | 't' | 'x'k | 'pi' | func '(' expr ')' | '(' expr ')'
//! func  := sin | cos | exp
//! ```

use super::jet::{Jet, Scalar};
use super::SystemError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    /// The time variable `t`.
    Time,
    /// State component `x_{k+1}` (zero based).
    State(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Call(Func, Box<Expr>),
}

impl Expr {
    /// Plain floating point evaluation at `(t, x)`.
    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Time => t,
            Expr::State(k) => x[*k],
            Expr::Neg(a) => -a.eval(t, x),
            Expr::Add(a, b) => a.eval(t, x) + b.eval(t, x),
            Expr::Sub(a, b) => a.eval(t, x) - b.eval(t, x),
            Expr::Mul(a, b) => a.eval(t, x) * b.eval(t, x),
            Expr::Div(a, b) => a.eval(t, x) / b.eval(t, x),
            Expr::Pow(a, k) => a.eval(t, x).powi(*k),
            Expr::Call(f, a) => {
                let v = a.eval(t, x);
                match f {
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Exp => v.exp(),
                }
            }
        }
    }

    /// Jet evaluation; `vars[0]` is the time jet, `vars[k+1]` the jet of `x_{k+1}`.
    /// Returns `None` where a reciprocal has no enclosure (division by an
    /// interval containing zero, or by exact zero).
    pub fn eval_jet<S: Scalar>(&self, vars: &[Jet<S>]) -> Option<Jet<S>> {
        let dim = vars[0].dim;
        let order = vars[0].order;
        Some(match self {
            Expr::Const(c) => Jet::constant(S::constant(*c), dim, order),
            Expr::Time => vars[0].clone(),
            Expr::State(k) => vars[k + 1].clone(),
            Expr::Neg(a) => a.eval_jet(vars)?.neg(),
            Expr::Add(a, b) => a.eval_jet(vars)?.add(&b.eval_jet(vars)?),
            Expr::Sub(a, b) => a.eval_jet(vars)?.sub(&b.eval_jet(vars)?),
            Expr::Mul(a, b) => a.eval_jet(vars)?.mul(&b.eval_jet(vars)?),
            Expr::Div(a, b) => a.eval_jet(vars)?.mul(&b.eval_jet(vars)?.recip()?),
            Expr::Pow(a, k) => a.eval_jet(vars)?.powi(*k)?,
            Expr::Call(f, a) => {
                let v = a.eval_jet(vars)?;
                match f {
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Exp => v.exp(),
                }
            }
        })
    }

    pub fn uses_time(&self) -> bool {
        match self {
            Expr::Time => true,
            Expr::Const(_) | Expr::State(_) => false,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.uses_time(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.uses_time() || b.uses_time()
            }
        }
    }
}

/// Parses one expression. `offset` is the byte position of `src` inside the
/// enclosing text and is used to tag errors. `dim` bounds the admissible
/// state indices; `None` admits constants only.
pub fn parse_expr(src: &str, offset: usize, dim: Option<usize>) -> Result<Expr, SystemError> {
    let mut p = Parser { src: src.as_bytes(), text: src, offset, pos: 0, dim };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.syntax(format!("unexpected `{}`", p.src[p.pos] as char)));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    text: &'a str,
    offset: usize,
    pos: usize,
    dim: Option<usize>,
}

impl Parser<'_> {
    fn syntax(&self, message: impl Into<String>) -> SystemError {
        SystemError::Syntax { position: self.offset + self.pos, message: message.into() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr, SystemError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(b'-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, SystemError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat(b'/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, SystemError> {
        if self.eat(b'-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat(b'+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, SystemError> {
        let base = self.atom()?;
        if !self.eat(b'^') {
            return Ok(base);
        }
        let negative = self.eat(b'-');
        self.skip_ws();
        let start = self.pos;
        let value = self.number().map_err(|_| {
            SystemError::Syntax {
                position: self.offset + start,
                message: "integer exponent expected".into(),
            }
        })?;
        if value.fract() != 0.0 || value.abs() > 64.0 {
            return Err(SystemError::Syntax {
                position: self.offset + start,
                message: "integer exponent expected".into(),
            });
        }
        let k = value as i32;
        Ok(Expr::Pow(Box::new(base), if negative { -k } else { k }))
    }

    fn number(&mut self) -> Result<f64, SystemError> {
        self.skip_ws();
        let start = self.pos;
        let s = self.src;
        while self.pos < s.len() && (s[self.pos].is_ascii_digit() || s[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < s.len() && (s[self.pos] == b'e' || s[self.pos] == b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < s.len() && (s[self.pos] == b'+' || s[self.pos] == b'-') {
                self.pos += 1;
            }
            let digits = self.pos;
            while self.pos < s.len() && s[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if digits == self.pos {
                self.pos = save;
            }
        }
        let lit = &self.text[start..self.pos];
        lit.parse::<f64>().map_err(|_| {
            self.pos = start;
            self.syntax("number expected")
        })
    }

    fn atom(&mut self) -> Result<Expr, SystemError> {
        match self.peek() {
            None => Err(self.syntax("unexpected end of expression")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.syntax("`)` expected"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => Ok(Expr::Const(self.number()?)),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.identifier(),
            Some(c) => Err(self.syntax(format!("unexpected `{}`", c as char))),
        }
    }

    fn identifier(&mut self) -> Result<Expr, SystemError> {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = &self.text[start..self.pos];
        let position = self.offset + start;
        let unknown = || SystemError::UnknownSymbol { name: name.to_string(), position };
        let func = match name {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            _ => None,
        };
        if let Some(func) = func {
            if !self.eat(b'(') {
                return Err(self.syntax("`(` expected after function name"));
            }
            let arg = self.expr()?;
            if !self.eat(b')') {
                return Err(self.syntax("`)` expected"));
            }
            return Ok(Expr::Call(func, Box::new(arg)));
        }
        if self.peek() == Some(b'(') {
            return Err(unknown());
        }
        match name {
            "pi" => Ok(Expr::Const(std::f64::consts::PI)),
            "t" if self.dim.is_some() => Ok(Expr::Time),
            _ => {
                let index = name
                    .strip_prefix('x')
                    .and_then(|d| d.parse::<usize>().ok())
                    .filter(|&k| k >= 1 && self.dim.is_some_and(|n| k <= n));
                index.map(|k| Expr::State(k - 1)).ok_or_else(unknown)
            }
        }
    }
}
