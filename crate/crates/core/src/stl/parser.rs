//! Recursive-descent parser for the textual formula syntax.
//!
//! ```text
//! formula := term (("or" | "->") term)*
//! term    := factor ("and" factor)*
//! factor  := "not" factor | "G[" num "," num "]" factor | "F[" num "," num "]" factor
//!          | "X" factor | "(" formula ")" | atom
//! atom    := ident "." axis ["not"] "in" "(" num "," num ")"
//!          | "dist(" ident "," ident ")" ">=" num
//!          | "bladedist(" ident "," ident ")" "in" "(" num "," num ")"
//!          | "speed(" ident ")" "in" "(" num "," num ")"
//!          | ident
//! ```
//!
//! Window bounds are seconds; [`Expr::bind`] converts them to samples. `inf` and `-inf` are
//! accepted wherever a number is.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geometry::Segment;
use crate::stl::{Formula, Interval, Predicate};
use crate::units::seconds_to_samples;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Dot,
    Ge,
    Arrow,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Num(x) => format!("number {x}"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Ge => "`>=`".into(),
            Tok::Arrow => "`->`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

const KEYWORDS: &[&str] = &["and", "or", "not", "in", "X", "G", "F", "dist", "bladedist", "speed"];

fn lex(text: &str) -> Result<Vec<Spanned>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        let (l0, c0) = (line, col);
        let mut push = |tok, len: usize, i: &mut usize, col: &mut usize| {
            out.push(Spanned {
                tok,
                line: l0,
                column: c0,
            });
            *i += len;
            *col += len;
        };
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => {
                i += 1;
                col += 1;
            }
            '(' => push(Tok::LParen, 1, &mut i, &mut col),
            ')' => push(Tok::RParen, 1, &mut i, &mut col),
            '[' => push(Tok::LBracket, 1, &mut i, &mut col),
            ']' => push(Tok::RBracket, 1, &mut i, &mut col),
            ',' => push(Tok::Comma, 1, &mut i, &mut col),
            '.' if !chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()) => {
                push(Tok::Dot, 1, &mut i, &mut col)
            }
            '>' if chars.get(i + 1) == Some(&'=') => push(Tok::Ge, 2, &mut i, &mut col),
            '-' if chars.get(i + 1) == Some(&'>') => push(Tok::Arrow, 2, &mut i, &mut col),
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                let mut j = i;
                while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_') {
                    j += 1;
                }
                let word: String = chars[start..j].iter().collect();
                let tok = if word == "inf" {
                    Tok::Num(f64::INFINITY)
                } else {
                    Tok::Ident(word)
                };
                push(tok, j - start, &mut i, &mut col);
            }
            c if c.is_ascii_digit() || c == '.' || c == '-' || c == '+' => {
                let start = i;
                let mut j = i + 1;
                if (c == '-' || c == '+') && chars[start..].iter().skip(1).take(3).collect::<String>() == "inf" {
                    let v = if c == '-' { f64::NEG_INFINITY } else { f64::INFINITY };
                    push(Tok::Num(v), 4, &mut i, &mut col);
                    continue;
                }
                while j < chars.len() {
                    let d = chars[j];
                    let exp_sign = (d == '-' || d == '+') && matches!(chars[j - 1], 'e' | 'E');
                    if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                        j += 1;
                    } else {
                        break;
                    }
                }
                let word: String = chars[start..j].iter().collect();
                match word.parse::<f64>() {
                    Ok(v) => push(Tok::Num(v), j - start, &mut i, &mut col),
                    Err(_) => {
                        return Err(Error::Syntax {
                            line: l0,
                            column: c0,
                            expected: vec!["number".into()],
                            found: format!("`{word}`"),
                        })
                    }
                }
            }
            other => {
                return Err(Error::Syntax {
                    line,
                    column: col,
                    expected: vec!["token".into()],
                    found: format!("`{other}`"),
                })
            }
        }
    }
    out.push(Spanned {
        tok: Tok::Eof,
        line,
        column: col,
    });
    Ok(out)
}

/// Identifier occurrence with its source position.
#[derive(Debug, Clone, PartialEq)]
pub struct Name {
    pub text: String,
    pub line: usize,
    pub column: usize,
}

/// Unbound syntax tree: names are unresolved and window bounds are in seconds.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Not(Box<Expr>),
    And(Vec<Expr>),
    Or(Vec<Expr>),
    Implies(Box<Expr>, Box<Expr>),
    Always(f64, f64, Box<Expr>),
    Eventually(f64, f64, Box<Expr>),
    Next(Box<Expr>),
    AxisIn {
        vehicle: Name,
        axis: usize,
        lo: f64,
        hi: f64,
        negated: bool,
    },
    Dist {
        a: Name,
        b: Name,
        threshold: f64,
    },
    BladeDist {
        vehicle: Name,
        segment: Name,
        lo: f64,
        hi: f64,
    },
    Speed {
        vehicle: Name,
        lo: f64,
        hi: f64,
    },
    Macro(Name),
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    expected: Vec<String>,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn bump(&mut self) -> Spanned {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        self.expected.clear();
        t
    }

    fn error(&self) -> Error {
        let here = &self.toks[self.pos];
        let mut expected = self.expected.clone();
        expected.sort();
        expected.dedup();
        Error::Syntax {
            line: here.line,
            column: here.column,
            expected,
            found: here.tok.describe(),
        }
    }

    fn at_keyword(&mut self, kw: &str) -> bool {
        self.expected.push(format!("`{kw}`"));
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.at_keyword(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<()> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            Err(self.error())
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<()> {
        self.expected.push(tok.describe());
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.error())
        }
    }

    fn number(&mut self) -> Result<f64> {
        self.expected.push("number".into());
        match *self.peek() {
            Tok::Num(v) => {
                self.bump();
                Ok(v)
            }
            _ => Err(self.error()),
        }
    }

    fn ident(&mut self) -> Result<Name> {
        self.expected.push("identifier".into());
        let here = &self.toks[self.pos];
        match &here.tok {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                let name = Name {
                    text: s.clone(),
                    line: here.line,
                    column: here.column,
                };
                self.bump();
                Ok(name)
            }
            _ => Err(self.error()),
        }
    }

    fn formula(&mut self) -> Result<Expr> {
        let mut acc = self.term()?;
        let mut in_or_chain = false;
        loop {
            if self.eat_keyword("or") {
                let rhs = self.term()?;
                match (&mut acc, in_or_chain) {
                    (Expr::Or(children), true) => children.push(rhs),
                    _ => acc = Expr::Or(vec![acc, rhs]),
                }
                in_or_chain = true;
            } else {
                self.expected.push(Tok::Arrow.describe());
                if *self.peek() == Tok::Arrow {
                    self.bump();
                    let rhs = self.term()?;
                    acc = Expr::Implies(Box::new(acc), Box::new(rhs));
                    in_or_chain = false;
                } else {
                    return Ok(acc);
                }
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let first = self.factor()?;
        let mut children = vec![first];
        while self.eat_keyword("and") {
            children.push(self.factor()?);
        }
        Ok(if children.len() == 1 {
            children.pop().unwrap()
        } else {
            Expr::And(children)
        })
    }

    fn window(&mut self) -> Result<(f64, f64)> {
        self.expect(Tok::LBracket)?;
        let a = self.number()?;
        self.expect(Tok::Comma)?;
        let b = self.number()?;
        self.expect(Tok::RBracket)?;
        Ok((a, b))
    }

    fn open_interval(&mut self) -> Result<(f64, f64)> {
        self.expect(Tok::LParen)?;
        let a = self.number()?;
        self.expect(Tok::Comma)?;
        let b = self.number()?;
        self.expect(Tok::RParen)?;
        Ok((a, b))
    }

    fn factor(&mut self) -> Result<Expr> {
        if self.eat_keyword("not") {
            return Ok(Expr::Not(Box::new(self.factor()?)));
        }
        if self.eat_keyword("G") {
            let (a, b) = self.window()?;
            return Ok(Expr::Always(a, b, Box::new(self.factor()?)));
        }
        if self.eat_keyword("F") {
            let (a, b) = self.window()?;
            return Ok(Expr::Eventually(a, b, Box::new(self.factor()?)));
        }
        if self.eat_keyword("X") {
            return Ok(Expr::Next(Box::new(self.factor()?)));
        }
        self.expected.push(Tok::LParen.describe());
        if *self.peek() == Tok::LParen {
            self.bump();
            let inner = self.formula()?;
            self.expect(Tok::RParen)?;
            return Ok(inner);
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr> {
        if self.eat_keyword("dist") {
            self.expect(Tok::LParen)?;
            let a = self.ident()?;
            self.expect(Tok::Comma)?;
            let b = self.ident()?;
            self.expect(Tok::RParen)?;
            self.expect(Tok::Ge)?;
            let threshold = self.number()?;
            return Ok(Expr::Dist { a, b, threshold });
        }
        if self.eat_keyword("bladedist") {
            self.expect(Tok::LParen)?;
            let vehicle = self.ident()?;
            self.expect(Tok::Comma)?;
            let segment = self.ident()?;
            self.expect(Tok::RParen)?;
            self.expect_keyword("in")?;
            let (lo, hi) = self.open_interval()?;
            return Ok(Expr::BladeDist {
                vehicle,
                segment,
                lo,
                hi,
            });
        }
        if self.eat_keyword("speed") {
            self.expect(Tok::LParen)?;
            let vehicle = self.ident()?;
            self.expect(Tok::RParen)?;
            self.expect_keyword("in")?;
            let (lo, hi) = self.open_interval()?;
            return Ok(Expr::Speed { vehicle, lo, hi });
        }
        let name = self.ident()?;
        self.expected.push(Tok::Dot.describe());
        if *self.peek() != Tok::Dot {
            return Ok(Expr::Macro(name));
        }
        self.bump();
        let axis = ["x", "y", "z"]
            .iter()
            .position(|a| {
                self.expected.push(format!("`{a}`"));
                matches!(self.peek(), Tok::Ident(s) if s == a)
            })
            .ok_or_else(|| self.error())?;
        self.bump();
        let negated = self.eat_keyword("not");
        self.expect_keyword("in")?;
        let (lo, hi) = self.open_interval()?;
        Ok(Expr::AxisIn {
            vehicle: name,
            axis,
            lo,
            hi,
            negated,
        })
    }
}

/// Parses text into an unbound [`Expr`].
pub fn parse_expr(text: &str) -> Result<Expr> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
        expected: Vec::new(),
    };
    let e = p.formula()?;
    p.expected.push(Tok::Eof.describe());
    if *p.peek() != Tok::Eof {
        return Err(p.error());
    }
    Ok(e)
}

/// Name resolution context for [`Expr::bind`].
#[derive(Debug, Clone, Default)]
pub struct Binding {
    /// Sampling period used to convert window seconds to samples.
    pub ts: f64,
    /// Vehicle names; position is the vehicle index.
    pub vehicles: Vec<String>,
    /// Blade segment names and geometry; position is the segment index.
    pub segments: Vec<(String, Segment)>,
    /// Named sub-formulas usable as bare identifiers.
    pub macros: BTreeMap<String, Formula>,
}

impl Binding {
    /// Vehicles `p1..pn` and segments `b1..bm`.
    pub fn canonical(ts: f64, vehicles: usize, segments: &[Segment]) -> Self {
        Self {
            ts,
            vehicles: (1..=vehicles).map(|d| format!("p{d}")).collect(),
            segments: segments
                .iter()
                .enumerate()
                .map(|(q, s)| (format!("b{}", q + 1), *s))
                .collect(),
            macros: BTreeMap::new(),
        }
    }

    fn vehicle(&self, n: &Name) -> Result<usize> {
        self.vehicles
            .iter()
            .position(|v| *v == n.text)
            .ok_or_else(|| unknown(n))
    }

    fn segment(&self, n: &Name) -> Result<(usize, Segment)> {
        self.segments
            .iter()
            .position(|(s, _)| *s == n.text)
            .map(|q| (q, self.segments[q].1))
            .ok_or_else(|| unknown(n))
    }

    fn window(&self, a: f64, b: f64) -> Result<Interval> {
        let lo = seconds_to_samples(a, self.ts)?;
        let hi = seconds_to_samples(b, self.ts)?;
        Interval::new(lo, hi)
    }
}

fn unknown(n: &Name) -> Error {
    Error::UnknownIdentifier {
        name: n.text.clone(),
        line: n.line,
        column: n.column,
    }
}

impl Expr {
    /// Resolves names and converts window seconds to samples.
    pub fn bind(&self, env: &Binding) -> Result<Formula> {
        let f = match self {
            Expr::Not(c) => Formula::not(c.bind(env)?),
            Expr::And(cs) => Formula::And(cs.iter().map(|c| c.bind(env)).collect::<Result<_>>()?),
            Expr::Or(cs) => Formula::Or(cs.iter().map(|c| c.bind(env)).collect::<Result<_>>()?),
            Expr::Implies(l, r) => Formula::implies(l.bind(env)?, r.bind(env)?),
            Expr::Always(a, b, c) => Formula::Always(env.window(*a, *b)?, Box::new(c.bind(env)?)),
            Expr::Eventually(a, b, c) => Formula::Eventually(env.window(*a, *b)?, Box::new(c.bind(env)?)),
            Expr::Next(c) => Formula::next(c.bind(env)?),
            Expr::AxisIn {
                vehicle,
                axis,
                lo,
                hi,
                negated,
            } => Formula::Pred(Predicate::AxisBand {
                vehicle: env.vehicle(vehicle)?,
                axis: *axis,
                lo: *lo,
                hi: *hi,
                negated: *negated,
            }),
            Expr::Dist { a, b, threshold } => Formula::Pred(Predicate::PairDistance {
                a: env.vehicle(a)?,
                b: env.vehicle(b)?,
                threshold: *threshold,
            }),
            Expr::BladeDist {
                vehicle,
                segment,
                lo,
                hi,
            } => {
                let (segment_id, segment) = env.segment(segment)?;
                Formula::Pred(Predicate::SegmentDistanceBand {
                    vehicle: env.vehicle(vehicle)?,
                    segment_id,
                    segment,
                    lo: *lo,
                    hi: *hi,
                })
            }
            Expr::Speed { vehicle, lo, hi } => Formula::Pred(Predicate::SpeedBand {
                vehicle: env.vehicle(vehicle)?,
                lo: *lo,
                hi: *hi,
            }),
            Expr::Macro(n) => env.macros.get(&n.text).cloned().ok_or_else(|| unknown(n))?,
        };
        Ok(f)
    }
}

/// Parses and binds in one step; the result is validated.
pub fn parse(text: &str, env: &Binding) -> Result<Formula> {
    let f = parse_expr(text)?.bind(env)?;
    f.validate()?;
    Ok(f)
}
