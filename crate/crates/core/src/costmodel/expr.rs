//! A small scalar expression language over the variable `y`.
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?
//! primary := number | 'y' | 'pi' | 'e' | func '(' expr ')' | '(' expr ')'
//! func    := sin | cos | exp | ln | sqrt
//! ```
//!
//! `^` is right-associative and binds tighter than unary minus, so `-y^2`
//! is `-(y^2)`. Derivatives come from evaluating the tree on [`Dual`]s.

use std::fmt;

use thiserror::Error;

use super::dual::Dual;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("parse error at position {position}: expected {expected}, found {found}")]
pub struct ParseError {
    /// 0-based character offset into the source text.
    pub position: usize,
    pub expected: String,
    pub found: String,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("ln of non-positive argument {0}")]
    LogNonPositive(f64),
    #[error("sqrt of negative argument {0}")]
    SqrtNegative(f64),
    #[error("division by zero")]
    DivisionByZero,
    #[error("non-integer power of non-positive base {0}")]
    PowerOfNonPositive(f64),
    #[error("expression evaluated to a non-finite value at y = {0}")]
    NonFinite(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Ln,
    Sqrt,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Self::Sin,
            "cos" => Self::Cos,
            "exp" => Self::Exp,
            "ln" => Self::Ln,
            "sqrt" => Self::Sqrt,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Self::Sin => "sin",
            Self::Cos => "cos",
            Self::Exp => "exp",
            Self::Ln => "ln",
            Self::Sqrt => "sqrt",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    Var,
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

impl Node {
    fn depends_on_var(&self) -> bool {
        match self {
            Node::Const(_) => false,
            Node::Var => true,
            Node::Neg(a) | Node::Call(_, a) => a.depends_on_var(),
            Node::Bin(_, a, b) => a.depends_on_var() || b.depends_on_var(),
        }
    }

    fn eval(&self, y: Dual) -> Result<Dual, DomainError> {
        let out = match self {
            Node::Const(c) => Dual::constant(*c),
            Node::Var => y,
            Node::Neg(a) => -a.eval(y)?,
            Node::Bin(op, a, b) => {
                let lhs = a.eval(y)?;
                match op {
                    BinOp::Add => lhs + b.eval(y)?,
                    BinOp::Sub => lhs - b.eval(y)?,
                    BinOp::Mul => lhs * b.eval(y)?,
                    BinOp::Div => {
                        let rhs = b.eval(y)?;
                        if rhs.re == 0.0 {
                            return Err(DomainError::DivisionByZero);
                        }
                        lhs / rhs
                    }
                    BinOp::Pow => {
                        let rhs = b.eval(y)?;
                        if !b.depends_on_var() {
                            let p = rhs.re;
                            if p.fract() == 0.0 && p.abs() <= 64.0 {
                                if p < 0.0 && lhs.re == 0.0 {
                                    return Err(DomainError::DivisionByZero);
                                }
                                lhs.powi(p as i32)
                            } else if lhs.re > 0.0 {
                                lhs.powf(p)
                            } else {
                                return Err(DomainError::PowerOfNonPositive(lhs.re));
                            }
                        } else if lhs.re > 0.0 {
                            lhs.pow(rhs)
                        } else {
                            return Err(DomainError::PowerOfNonPositive(lhs.re));
                        }
                    }
                }
            }
            Node::Call(f, a) => {
                let arg = a.eval(y)?;
                match f {
                    Func::Sin => arg.sin(),
                    Func::Cos => arg.cos(),
                    Func::Exp => arg.exp(),
                    Func::Ln => {
                        if arg.re <= 0.0 {
                            return Err(DomainError::LogNonPositive(arg.re));
                        }
                        arg.ln()
                    }
                    Func::Sqrt => {
                        if arg.re < 0.0 {
                            return Err(DomainError::SqrtNegative(arg.re));
                        }
                        arg.sqrt()
                    }
                }
            }
        };
        if out.re.is_finite() && out.eps.is_finite() {
            Ok(out)
        } else {
            Err(DomainError::NonFinite(y.re))
        }
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Const(c) => write!(f, "{c}"),
            Node::Var => write!(f, "y"),
            Node::Neg(a) => write!(f, "(-{a})"),
            Node::Bin(op, a, b) => {
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                write!(f, "({a} {sym} {b})")
            }
            Node::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

/// A parsed scalar cost expression; keeps its source text for round-tripping.
#[derive(Debug, Clone, PartialEq)]
pub struct CostExpr {
    source: String,
    root: Node,
}

impl CostExpr {
    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let tokens = tokenize(text)?;
        let mut parser = Parser { tokens, pos: 0 };
        let root = parser.expr()?;
        let tok = parser.peek();
        if tok.kind != Tok::End {
            return Err(ParseError {
                position: tok.position,
                expected: "operator or end of input".into(),
                found: tok.kind.describe(),
            });
        }
        Ok(Self {
            source: text.to_string(),
            root,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn value(&self, y: f64) -> Result<f64, DomainError> {
        Ok(self.root.eval(Dual::constant(y))?.re)
    }

    /// `(f(y), f'(y))` by forward-mode propagation.
    pub fn value_and_derivative(&self, y: f64) -> Result<(f64, f64), DomainError> {
        let d = self.root.eval(Dual::variable(y))?;
        Ok((d.re, d.eps))
    }

    pub fn derivative(&self, y: f64) -> Result<f64, DomainError> {
        Ok(self.value_and_derivative(y)?.1)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier '{s}'"),
            Tok::Plus => "'+'".into(),
            Tok::Minus => "'-'".into(),
            Tok::Star => "'*'".into(),
            Tok::Slash => "'/'".into(),
            Tok::Caret => "'^'".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::End => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: Tok,
    position: usize,
}

fn tokenize(text: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let start = i;
        let kind = match c {
            ' ' | '\t' | '\n' | '\r' => {
                i += 1;
                continue;
            }
            '+' => Tok::Plus,
            '-' => Tok::Minus,
            '*' => Tok::Star,
            '/' => Tok::Slash,
            '^' => Tok::Caret,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            c if c.is_ascii_digit() || c == '.' => {
                let mut j = i;
                while j < chars.len() && (chars[j].is_ascii_digit() || chars[j] == '.') {
                    j += 1;
                }
                // optional exponent: e[+-]digits
                if j < chars.len() && (chars[j] == 'e' || chars[j] == 'E') {
                    let mut k = j + 1;
                    if k < chars.len() && (chars[k] == '+' || chars[k] == '-') {
                        k += 1;
                    }
                    if k < chars.len() && chars[k].is_ascii_digit() {
                        while k < chars.len() && chars[k].is_ascii_digit() {
                            k += 1;
                        }
                        j = k;
                    }
                }
                let lexeme: String = chars[i..j].iter().collect();
                let value = lexeme.parse::<f64>().map_err(|_| ParseError {
                    position: start,
                    expected: "number".into(),
                    found: format!("'{lexeme}'"),
                })?;
                i = j;
                out.push(Token {
                    kind: Tok::Num(value),
                    position: start,
                });
                continue;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut j = i;
                while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_') {
                    j += 1;
                }
                let name: String = chars[i..j].iter().collect();
                i = j;
                out.push(Token {
                    kind: Tok::Ident(name),
                    position: start,
                });
                continue;
            }
            other => {
                return Err(ParseError {
                    position: start,
                    expected: "number, identifier, operator or parenthesis".into(),
                    found: format!("'{other}'"),
                })
            }
        };
        i += 1;
        out.push(Token {
            kind,
            position: start,
        });
    }
    out.push(Token {
        kind: Tok::End,
        position: chars.len(),
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

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if t.kind != Tok::End {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &str) -> ParseError {
        let t = self.peek();
        ParseError {
            position: t.position,
            expected: expected.into(),
            found: t.kind.describe(),
        }
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek().kind {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek().kind {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Node, ParseError> {
        if self.peek().kind == Tok::Minus {
            self.bump();
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ParseError> {
        let base = self.primary()?;
        if self.peek().kind == Tok::Caret {
            self.bump();
            let exponent = self.unary()?;
            return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Node, ParseError> {
        let tok = self.peek().clone();
        match tok.kind {
            Tok::Num(v) => {
                self.bump();
                Ok(Node::Const(v))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Tok::Ident(ref name) => {
                self.bump();
                match name.as_str() {
                    "y" => Ok(Node::Var),
                    "pi" => Ok(Node::Const(std::f64::consts::PI)),
                    "e" => Ok(Node::Const(std::f64::consts::E)),
                    other => {
                        let Some(func) = Func::from_name(other) else {
                            return Err(ParseError {
                                position: tok.position,
                                expected: "'y', 'pi', 'e' or one of sin, cos, exp, ln, sqrt"
                                    .into(),
                                found: format!("identifier '{other}'"),
                            });
                        };
                        if self.peek().kind != Tok::LParen {
                            return Err(self.error("'(' after function name"));
                        }
                        self.bump();
                        let arg = self.expr()?;
                        self.expect_rparen()?;
                        Ok(Node::Call(func, Box::new(arg)))
                    }
                }
            }
            _ => Err(self.error("number, 'y', function call or '('")),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        if self.peek().kind != Tok::RParen {
            return Err(self.error("')'"));
        }
        self.bump();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_one_quadratic() {
        let e = CostExpr::parse("0.2*y^2 - 2*y + 1").unwrap();
        assert_eq!(e.value(0.0).unwrap(), 1.0);
        assert!((e.derivative(5.0).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn ratio_with_sqrt_is_zero_at_origin() {
        let e = CostExpr::parse("0.3*y^2/sqrt(y^2+5)").unwrap();
        assert_eq!(e.value(0.0).unwrap(), 0.0);
    }

    #[test]
    fn chain_rule_at_symmetric_point() {
        let e = CostExpr::parse("sin(0.2*y - (pi/2))").unwrap();
        let (v, d) = e.value_and_derivative(0.0).unwrap();
        assert!((v + 1.0).abs() < 1e-15);
        assert!(d.abs() < 1e-15);
    }

    #[test]
    fn precedence() {
        let e = CostExpr::parse("-y^2").unwrap();
        assert_eq!(e.value(3.0).unwrap(), -9.0);
        let e = CostExpr::parse("2^3^2").unwrap();
        assert_eq!(e.value(0.0).unwrap(), 512.0);
        let e = CostExpr::parse("1 - 2 - 3").unwrap();
        assert_eq!(e.value(0.0).unwrap(), -4.0);
        let e = CostExpr::parse("y^-1").unwrap();
        assert_eq!(e.value(4.0).unwrap(), 0.25);
        let e = CostExpr::parse("1.5e-1*y").unwrap();
        assert!((e.value(2.0).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = CostExpr::parse("0.2*y^^2").unwrap_err();
        assert_eq!(err.position, 6);
        let err = CostExpr::parse("sin y").unwrap_err();
        assert_eq!(err.position, 4);
        let err = CostExpr::parse("(y + 1").unwrap_err();
        assert_eq!(err.position, 6);
        assert_eq!(err.found, "end of input");
        let err = CostExpr::parse("tan(y)").unwrap_err();
        assert_eq!(err.position, 0);
        let err = CostExpr::parse("y # 2").unwrap_err();
        assert_eq!(err.position, 2);
        let err = CostExpr::parse("y 2").unwrap_err();
        assert_eq!(err.position, 2);
    }

    #[test]
    fn domain_errors_are_lazy() {
        let e = CostExpr::parse("ln(y)").unwrap();
        assert_eq!(e.value(-1.0), Err(DomainError::LogNonPositive(-1.0)));
        assert!(e.value(1.0).is_ok());
        let e = CostExpr::parse("1/y").unwrap();
        assert_eq!(e.value(0.0), Err(DomainError::DivisionByZero));
        let e = CostExpr::parse("y^0.5").unwrap();
        assert!(matches!(e.value(-1.0), Err(DomainError::PowerOfNonPositive(_))));
        let e = CostExpr::parse("sqrt(y)").unwrap();
        assert!(matches!(e.value(-4.0), Err(DomainError::SqrtNegative(_))));
    }

    #[test]
    fn variable_exponent() {
        let e = CostExpr::parse("2^y").unwrap();
        let (v, d) = e.value_and_derivative(3.0).unwrap();
        assert!((v - 8.0).abs() < 1e-12);
        assert!((d - 8.0 * 2f64.ln()).abs() < 1e-12);
    }
}
