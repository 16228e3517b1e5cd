//! Rate expressions in N: numbers, `N`, `+ - * /`, parentheses and integer
//! powers. Unicode `−`, `×`, `·`, `÷` and superscript exponents are accepted.

use std::fmt;
use std::str::FromStr;

use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    N,
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, i32),
}

impl Node {
    fn eval(&self, n: f64) -> f64 {
        match self {
            Node::Num(v) => *v,
            Node::N => n,
            Node::Neg(a) => -a.eval(n),
            Node::Add(a, b) => a.eval(n) + b.eval(n),
            Node::Sub(a, b) => a.eval(n) - b.eval(n),
            Node::Mul(a, b) => a.eval(n) * b.eval(n),
            Node::Div(a, b) => a.eval(n) / b.eval(n),
            Node::Pow(a, k) => a.eval(n).powi(*k),
        }
    }
}

/// A parsed expression; keeps its source text for serialization.
#[derive(Debug, Clone)]
pub struct Expr {
    source: String,
    root: Node,
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source
    }
}

impl Eq for Expr {}

impl Expr {
    pub fn parse(source: &str) -> Result<Expr> {
        Self::parse_at(source, 1)
    }

    /// Parses with errors attributed to `line`.
    pub fn parse_at(source: &str, line: usize) -> Result<Expr> {
        let mut p = Parser {
            chars: source.chars().collect(),
            pos: 0,
        };
        let fail = |p: &Parser, msg: String| Error::Parse {
            line,
            message: format!("{msg} at column {} in `{source}`", p.pos + 1),
        };
        let root = p.expr().map_err(|m| fail(&p, m))?;
        p.skip_ws();
        if p.pos < p.chars.len() {
            let c = p.chars[p.pos];
            return Err(fail(&p, format!("unexpected `{c}`")));
        }
        Ok(Expr {
            source: source.to_string(),
            root,
        })
    }

    pub fn constant(value: f64) -> Expr {
        Expr {
            source: format!("{value}"),
            root: Node::Num(value),
        }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval(&self, n: f64) -> f64 {
        self.root.eval(n)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl FromStr for Expr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Expr> {
        Expr::parse(s)
    }
}

impl Serialize for Expr {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.source)
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Expr, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Int(i64),
            Float(f64),
        }
        let text = match Raw::deserialize(d)? {
            Raw::Text(s) => s,
            Raw::Int(v) => v.to_string(),
            Raw::Float(v) => v.to_string(),
        };
        Expr::parse(&text).map_err(|e| match e {
            Error::Parse { message, .. } => de::Error::custom(message),
            other => de::Error::custom(other),
        })
    }
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
}

type PResult<T> = std::result::Result<T, String>;

fn superscript_digit(c: char) -> Option<u32> {
    match c {
        '⁰' => Some(0),
        '¹' => Some(1),
        '²' => Some(2),
        '³' => Some(3),
        '⁴' => Some(4),
        '⁵' => Some(5),
        '⁶' => Some(6),
        '⁷' => Some(7),
        '⁸' => Some(8),
        '⁹' => Some(9),
        _ => None,
    }
}

impl Parser {
    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn next_token(&mut self) -> Option<char> {
        self.skip_ws();
        self.peek()
    }

    fn expr(&mut self) -> PResult<Node> {
        let mut lhs = self.term()?;
        loop {
            match self.next_token() {
                Some('+') => {
                    self.pos += 1;
                    lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some('-' | '−') => {
                    self.pos += 1;
                    lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> PResult<Node> {
        let mut lhs = self.unary()?;
        loop {
            match self.next_token() {
                Some('*' | '×' | '·') => {
                    self.pos += 1;
                    lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some('/' | '÷') => {
                    self.pos += 1;
                    lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> PResult<Node> {
        match self.next_token() {
            Some('-' | '−') => {
                self.pos += 1;
                Ok(Node::Neg(Box::new(self.unary()?)))
            }
            Some('+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> PResult<Node> {
        let base = self.primary()?;
        match self.next_token() {
            Some('^') => {
                self.pos += 1;
                let k = self.integer_exponent()?;
                Ok(Node::Pow(Box::new(base), k))
            }
            Some(c) if c == '⁻' || superscript_digit(c).is_some() => {
                let k = self.superscript_exponent()?;
                Ok(Node::Pow(Box::new(base), k))
            }
            _ => Ok(base),
        }
    }

    fn integer_exponent(&mut self) -> PResult<i32> {
        let wrapped = match self.next_token() {
            Some('(') => {
                self.pos += 1;
                true
            }
            Some('{') => {
                self.pos += 1;
                true
            }
            _ => false,
        };
        let mut negative = false;
        while let Some(c @ ('-' | '−' | '+')) = self.next_token() {
            negative ^= c != '+';
            self.pos += 1;
        }
        self.skip_ws();
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(match self.peek() {
                Some(c) => format!("expected an integer exponent, found `{c}`"),
                None => "expected an integer exponent".into(),
            });
        }
        let digits: String = self.chars[start..self.pos].iter().collect();
        let k: i32 = digits
            .parse()
            .map_err(|_| format!("exponent `{digits}` is too large"))?;
        if wrapped {
            match self.next_token() {
                Some(')' | '}') => self.pos += 1,
                _ => return Err("unclosed exponent".into()),
            }
        }
        Ok(if negative { -k } else { k })
    }

    fn superscript_exponent(&mut self) -> PResult<i32> {
        let negative = self.peek() == Some('⁻');
        if negative {
            self.pos += 1;
        }
        let mut k: i32 = 0;
        let mut any = false;
        while let Some(d) = self.peek().and_then(superscript_digit) {
            k = k
                .checked_mul(10)
                .and_then(|v| v.checked_add(d as i32))
                .ok_or("exponent is too large")?;
            any = true;
            self.pos += 1;
        }
        if !any {
            return Err("expected superscript digits".into());
        }
        Ok(if negative { -k } else { k })
    }

    fn primary(&mut self) -> PResult<Node> {
        match self.next_token() {
            Some('N') => {
                self.pos += 1;
                Ok(Node::N)
            }
            Some('(') => {
                self.pos += 1;
                let inner = self.expr()?;
                match self.next_token() {
                    Some(')') => {
                        self.pos += 1;
                        Ok(inner)
                    }
                    _ => Err("expected `)`".into()),
                }
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) => Err(format!("unexpected `{c}`")),
            None => Err("unexpected end of expression".into()),
        }
    }

    fn number(&mut self) -> PResult<Node> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit() || c == '.') {
            self.pos += 1;
        }
        // scientific notation: 1e-3, 2.5E4
        if matches!(self.peek(), Some('e' | 'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.peek(), Some('+' | '-')) {
                self.pos += 1;
            }
            if self.peek().is_some_and(|c| c.is_ascii_digit()) {
                while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                    self.pos += 1;
                }
            } else {
                self.pos = save;
            }
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        text.parse::<f64>()
            .map(Node::Num)
            .map_err(|_| format!("malformed number `{text}`"))
    }
}
