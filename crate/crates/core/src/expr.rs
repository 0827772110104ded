//! Closed-form scalar expressions in one or more named variables.
//!
//! Used by countable edge families, whose maps and weights are given as
//! formulas in the index `n` (and tail bounds as formulas in the truncation
//! index `M`). Grammar: numbers, identifiers, `+ - * / ^`, parentheses and
//! the functions `ln`, `log` (natural), `log2`, `sqrt`, `exp`, `abs`.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(String),
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
    Ln,
    Log2,
    Sqrt,
    Exp,
    Abs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl Expr {
    pub fn parse(source: &str) -> Result<Self> {
        let tokens = tokenize(source)?;
        let mut parser = Parser {
            tokens,
            pos: 0,
            source,
        };
        let root = parser.expr()?;
        if parser.pos != parser.tokens.len() {
            return Err(parser.error("trailing input"));
        }
        Ok(Expr {
            source: source.to_string(),
            root,
        })
    }

    /// Evaluates with `lookup` resolving variable names.
    pub fn eval(&self, lookup: &dyn Fn(&str) -> Option<f64>) -> Result<f64> {
        eval(&self.root, lookup).map_err(|name| Error::Expression {
            expr: self.source.clone(),
            reason: format!("unbound variable {name:?}"),
        })
    }

    pub fn variables(&self) -> Vec<String> {
        let mut out = Vec::new();
        collect_vars(&self.root, &mut out);
        out.sort();
        out.dedup();
        out
    }
}

fn collect_vars(node: &Node, out: &mut Vec<String>) {
    match node {
        Node::Num(_) => {}
        Node::Var(v) => out.push(v.clone()),
        Node::Neg(a) | Node::Call(_, a) => collect_vars(a, out),
        Node::Bin(_, a, b) => {
            collect_vars(a, out);
            collect_vars(b, out);
        }
    }
}

fn eval(node: &Node, lookup: &dyn Fn(&str) -> Option<f64>) -> std::result::Result<f64, String> {
    Ok(match node {
        Node::Num(x) => *x,
        Node::Var(v) => lookup(v).ok_or_else(|| v.clone())?,
        Node::Neg(a) => -eval(a, lookup)?,
        Node::Bin(op, a, b) => {
            let (a, b) = (eval(a, lookup)?, eval(b, lookup)?);
            match op {
                Op::Add => a + b,
                Op::Sub => a - b,
                Op::Mul => a * b,
                Op::Div => a / b,
                Op::Pow => a.powf(b),
            }
        }
        Node::Call(func, a) => {
            let a = eval(a, lookup)?;
            match func {
                Func::Ln => a.ln(),
                Func::Log2 => a.log2(),
                Func::Sqrt => a.sqrt(),
                Func::Exp => a.exp(),
                Func::Abs => a.abs(),
            }
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
}

fn tokenize(source: &str) -> Result<Vec<Tok>> {
    let chars: Vec<char> = source.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let value = text.parse::<f64>().map_err(|_| Error::Expression {
                expr: source.to_string(),
                reason: format!("bad number {text:?}"),
            })?;
            out.push(Tok::Num(value));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^()".contains(c) {
            out.push(Tok::Sym(c));
            i += 1;
        } else {
            return Err(Error::Expression {
                expr: source.to_string(),
                reason: format!("unexpected character {c:?}"),
            });
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Tok>,
    pos: usize,
    source: &'a str,
}

impl Parser<'_> {
    fn error(&self, reason: &str) -> Error {
        Error::Expression {
            expr: self.source.to_string(),
            reason: format!("{reason} at token {}", self.pos),
        }
    }

    fn peek_sym(&self) -> Option<char> {
        match self.tokens.get(self.pos) {
            Some(Tok::Sym(c)) => Some(*c),
            _ => None,
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        while let Some(c @ ('+' | '-')) = self.peek_sym() {
            self.pos += 1;
            let rhs = self.term()?;
            let op = if c == '+' { Op::Add } else { Op::Sub };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        while let Some(c @ ('*' | '/')) = self.peek_sym() {
            self.pos += 1;
            let rhs = self.unary()?;
            let op = if c == '*' { Op::Mul } else { Op::Div };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node> {
        if self.peek_sym() == Some('-') {
            self.pos += 1;
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if self.peek_sym() == Some('+') {
            self.pos += 1;
            return self.unary();
        }
        self.power()
    }

    // `^` is right-associative and binds tighter than unary minus on its left.
    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.peek_sym() == Some('^') {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(Node::Bin(Op::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        match self.tokens.get(self.pos).cloned() {
            Some(Tok::Num(x)) => {
                self.pos += 1;
                Ok(Node::Num(x))
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if self.peek_sym() == Some('(') {
                    let func = match name.as_str() {
                        "ln" | "log" => Func::Ln,
                        "log2" => Func::Log2,
                        "sqrt" => Func::Sqrt,
                        "exp" => Func::Exp,
                        "abs" => Func::Abs,
                        _ => return Err(self.error(&format!("unknown function {name:?}"))),
                    };
                    self.pos += 1;
                    let arg = self.expr()?;
                    self.expect(')')?;
                    Ok(Node::Call(func, Box::new(arg)))
                } else {
                    Ok(Node::Var(name))
                }
            }
            Some(Tok::Sym('(')) => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect(')')?;
                Ok(inner)
            }
            _ => Err(self.error("expected a value")),
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.peek_sym() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("expected {c:?}")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval_n(src: &str, n: f64) -> f64 {
        Expr::parse(src)
            .unwrap()
            .eval(&|v| (v == "n").then_some(n))
            .unwrap()
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(eval_n("1+2*3", 0.0), 7.0);
        assert_eq!(eval_n("(1+2)*3", 0.0), 9.0);
        assert_eq!(eval_n("2^3^2", 0.0), 512.0);
        assert_eq!(eval_n("-2^2", 0.0), -4.0);
        assert_eq!(eval_n("8/4/2", 0.0), 1.0);
        assert_eq!(eval_n("1.5e2", 0.0), 150.0);
    }

    #[test]
    fn functions_and_variables() {
        let v = eval_n("1/(n*ln(n)^2)", 3.0);
        let expected = 1.0 / (3.0 * 3f64.ln().powi(2));
        assert!((v - expected).abs() < 1e-15);
        assert_eq!(eval_n("sqrt(n)+abs(-1)", 16.0), 5.0);
    }

    #[test]
    fn errors_are_reported() {
        assert!(Expr::parse("1+").is_err());
        assert!(Expr::parse("foo(2)").is_err());
        assert!(Expr::parse("(1").is_err());
        assert!(Expr::parse("1 $ 2").is_err());
        let e = Expr::parse("n+m").unwrap();
        assert!(e.eval(&|v| (v == "n").then_some(1.0)).is_err());
        assert_eq!(e.variables(), vec!["m".to_string(), "n".to_string()]);
    }
}
