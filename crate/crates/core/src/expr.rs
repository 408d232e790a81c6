//! Arithmetic expressions over `x` and `y`, used for intensity functions.
//!
//! ```text
//! expr    := term (("+" | "-") term)*
//! term    := unary (("*" | "/") unary)*
//! unary   := "-" unary | power
//! power   := atom ("^" unary)?          right associative
//! atom    := number | "x" | "y" | "pi" | "π"
//!          | ("exp" | "sin" | "cos") "(" expr ")"
//!          | "(" expr ")"
//! number  := digits ["." digits] [("e" | "E") ["+" | "-"] digits]
//! ```
//!
//! Whitespace is ignored. `-x^2` parses as `-(x^2)`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    X,
    Y,
    Neg(Box<Node>),
    Bin(Op, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Func {
    Exp,
    Sin,
    Cos,
}

/// A parsed expression together with its source text.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
}

impl Expr {
    pub fn parse(source: &str) -> Result<Self> {
        let mut p = Parser {
            chars: source.char_indices().collect(),
            pos: 0,
            source,
        };
        let root = p.expr()?;
        p.skip_ws();
        if let Some(&(at, c)) = p.chars.get(p.pos) {
            return Err(p.error(at, &format!("unexpected '{c}'")));
        }
        Ok(Expr {
            source: source.to_string(),
            root,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        eval(&self.root, x, y)
    }
}

impl FromStr for Expr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Expr::parse(s)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

fn eval(n: &Node, x: f64, y: f64) -> f64 {
    match n {
        Node::Num(v) => *v,
        Node::X => x,
        Node::Y => y,
        Node::Neg(a) => -eval(a, x, y),
        Node::Bin(op, a, b) => {
            let (a, b) = (eval(a, x, y), eval(b, x, y));
            match op {
                Op::Add => a + b,
                Op::Sub => a - b,
                Op::Mul => a * b,
                Op::Div => a / b,
                Op::Pow => a.powf(b),
            }
        }
        Node::Call(f, a) => {
            let a = eval(a, x, y);
            match f {
                Func::Exp => a.exp(),
                Func::Sin => a.sin(),
                Func::Cos => a.cos(),
            }
        }
    }
}

struct Parser<'a> {
    chars: Vec<(usize, char)>,
    pos: usize,
    source: &'a str,
}

impl Parser<'_> {
    fn error(&self, at: usize, msg: &str) -> Error {
        Error::param(format!("expression {:?}, offset {at}: {msg}", self.source))
    }

    fn end_offset(&self) -> usize {
        self.source.len()
    }

    fn skip_ws(&mut self) {
        while self.chars.get(self.pos).is_some_and(|c| c.1.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).map(|c| c.1)
    }

    fn offset(&self) -> usize {
        self.chars.get(self.pos).map_or(self.end_offset(), |c| c.0)
    }

    fn expect(&mut self, want: char) -> Result<()> {
        match self.peek() {
            Some(c) if c == want => {
                self.pos += 1;
                Ok(())
            }
            Some(c) => Err(self.error(self.offset(), &format!("expected '{want}', found '{c}'"))),
            None => Err(self.error(self.offset(), &format!("expected '{want}' at end of input"))),
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        while let Some(c @ ('+' | '-')) = self.peek() {
            self.pos += 1;
            let op = if c == '+' { Op::Add } else { Op::Sub };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(self.term()?));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        while let Some(c @ ('*' | '/')) = self.peek() {
            self.pos += 1;
            let op = if c == '*' { Op::Mul } else { Op::Div };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(self.unary()?));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node> {
        if self.peek() == Some('-') {
            self.pos += 1;
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.peek() == Some('^') {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(Node::Bin(Op::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        let at = self.offset();
        match self.peek() {
            None => Err(self.error(at, "unexpected end of input")),
            Some('(') => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect(')')?;
                Ok(inner)
            }
            Some('π') => {
                self.pos += 1;
                Ok(Node::Num(PI))
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.chars.get(self.pos).is_some_and(|c| c.1.is_ascii_alphanumeric()) {
                    self.pos += 1;
                }
                let name: String = self.chars[start..self.pos].iter().map(|c| c.1).collect();
                let func = match name.as_str() {
                    "x" => return Ok(Node::X),
                    "y" => return Ok(Node::Y),
                    "pi" => return Ok(Node::Num(PI)),
                    "exp" => Func::Exp,
                    "sin" => Func::Sin,
                    "cos" => Func::Cos,
                    _ => return Err(self.error(at, &format!("unknown name '{name}'"))),
                };
                self.expect('(')?;
                let arg = self.expr()?;
                self.expect(')')?;
                Ok(Node::Call(func, Box::new(arg)))
            }
            Some(c) => Err(self.error(at, &format!("unexpected '{c}'"))),
        }
    }

    fn number(&mut self) -> Result<Node> {
        let at = self.offset();
        let start = self.pos;
        let digits = |p: &mut Self| {
            while p.chars.get(p.pos).is_some_and(|c| c.1.is_ascii_digit()) {
                p.pos += 1;
            }
        };
        digits(self);
        if self.chars.get(self.pos).is_some_and(|c| c.1 == '.') {
            self.pos += 1;
            digits(self);
        }
        if self.chars.get(self.pos).is_some_and(|c| c.1 == 'e' || c.1 == 'E') {
            let save = self.pos;
            self.pos += 1;
            if self.chars.get(self.pos).is_some_and(|c| c.1 == '+' || c.1 == '-') {
                self.pos += 1;
            }
            let before = self.pos;
            digits(self);
            if self.pos == before {
                // not an exponent after all, e.g. "2exp(x)" is rejected later
                self.pos = save;
            }
        }
        let text: String = self.chars[start..self.pos].iter().map(|c| c.1).collect();
        text.parse::<f64>()
            .map(Node::Num)
            .map_err(|_| self.error(at, &format!("malformed number '{text}'")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(s: &str, x: f64, y: f64) -> f64 {
        Expr::parse(s).unwrap().eval(x, y)
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("1 + 2 * 3", 0.0, 0.0), 7.0);
        assert_eq!(ev("(1 + 2) * 3", 0.0, 0.0), 9.0);
        assert_eq!(ev("2 ^ 3 ^ 2", 0.0, 0.0), 512.0);
        assert_eq!(ev("-x^2", 3.0, 0.0), -9.0);
        assert_eq!(ev("8 / 4 / 2", 0.0, 0.0), 1.0);
        assert_eq!(ev("10 - 4 - 3", 0.0, 0.0), 3.0);
        assert_eq!(ev("2 * -y", 0.0, 5.0), -10.0);
    }

    #[test]
    fn trend_form() {
        let e = Expr::parse("0.1*exp(0.2*sin(4*pi*x) + 0.1*y)").unwrap();
        let (x, y) = (0.3, 12.0);
        let want = 0.1 * (0.2 * (4.0 * PI * x).sin() + 0.1 * y).exp();
        assert_eq!(e.eval(x, y), want);
        assert_eq!(ev("cos(π)", 0.0, 0.0), -1.0);
        assert_eq!(ev("1.5e-1 + 2E1", 0.0, 0.0), 20.15);
    }

    #[test]
    fn errors_name_the_problem() {
        for bad in ["", "1 +", "foo(x)", "sin x", "(1", "1 2", "x $ y", "exp()"] {
            assert!(Expr::parse(bad).is_err(), "{bad:?} should fail");
        }
        let msg = Expr::parse("2 * z").unwrap_err().to_string();
        assert!(msg.contains("'z'"), "{msg}");
    }
}
