//! Concrete syntax.
//!
//! ```text
//! sink(x)  := all y. !E(x,y)
//! trap(S,x) := all y. (E(y,x) -> S(y))
//! acyclic  := all u. lfp S,x. trap(S,x) @ u
//! ```
//!
//! Connectives by increasing binding strength: `->` (right associative), `|`,
//! `&`, `!`. Quantifiers `all v.`, `ex v.` and `lfp S,x. body @ u` extend as
//! far right as possible. Counting is `C v (body) op k` with `op` one of
//! `< <= = >= >`. Edge atoms are `E(x,y)`, `E_2(x,y)`, `E_{1,3}(x,y)` and
//! `E#k(x,y)`; agents are one-based. A name bound by an enclosing `lfp` is a
//! set variable, anything else applied to arguments is a graph predicate.
//!
//! Definitions `name(params) := body` become macros for later lines and are
//! expanded token by token.

use std::collections::{HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use super::ast::{Comparator, EdgeRel, Formula, Predicate};
use super::vars::{validate, WellFormedError};
use crate::graph::Coalition;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.column, self.message)
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum LogicError {
    #[error("syntax error at {0}")]
    Syntax(#[from] ParseError),
    #[error("ill-formed formula: {0}")]
    WellFormed(#[from] WellFormedError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Number(u64),
    LParen,
    RParen,
    Comma,
    Dot,
    Bang,
    Amp,
    Pipe,
    Arrow,
    At,
    Define,
    Cmp(Comparator),
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "{s}"),
            Tok::Number(n) => write!(f, "{n}"),
            Tok::LParen => write!(f, "("),
            Tok::RParen => write!(f, ")"),
            Tok::Comma => write!(f, ","),
            Tok::Dot => write!(f, "."),
            Tok::Bang => write!(f, "!"),
            Tok::Amp => write!(f, "&"),
            Tok::Pipe => write!(f, "|"),
            Tok::Arrow => write!(f, "->"),
            Tok::At => write!(f, "@"),
            Tok::Define => write!(f, ":="),
            Tok::Cmp(c) => write!(f, "{}", c.symbol()),
        }
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(text: &str, first_line: usize) -> Result<Vec<Spanned>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, first_line, 1);
    let err = |line, column, message: String| ParseError {
        line,
        column,
        message,
    };
    while i < chars.len() {
        let c = chars[i];
        let (start_line, start_col) = (line, col);
        let mut push = |tok: Tok| {
            out.push(Spanned {
                tok,
                line: start_line,
                column: start_col,
            })
        };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let mut j = i;
            while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_') {
                j += 1;
            }
            let mut name: String = chars[i..j].iter().collect();
            if name == "E" && j < chars.len() && chars[j] == '#' {
                let mut k = j + 1;
                while k < chars.len() && chars[k].is_ascii_digit() {
                    k += 1;
                }
                if k == j + 1 {
                    return Err(err(line, col + (j - i), "expected digits after E#".into()));
                }
                name = chars[i..k].iter().collect();
                j = k;
            } else if name == "E_" && j < chars.len() && chars[j] == '{' {
                let close = chars[j..]
                    .iter()
                    .position(|&ch| ch == '}' || ch == '\n')
                    .map(|p| p + j)
                    .filter(|&p| chars[p] == '}')
                    .ok_or_else(|| err(line, col, "unterminated coalition E_{...}".into()))?;
                name = chars[i..=close].iter().filter(|ch| !ch.is_whitespace()).collect();
                j = close + 1;
            }
            push(Tok::Ident(name));
            col += j - i;
            i = j;
            continue;
        }
        if c.is_ascii_digit() {
            let mut j = i;
            while j < chars.len() && chars[j].is_ascii_digit() {
                j += 1;
            }
            let digits: String = chars[i..j].iter().collect();
            let n = digits
                .parse()
                .map_err(|_| err(line, col, format!("number {digits} too large")))?;
            push(Tok::Number(n));
            col += j - i;
            i = j;
            continue;
        }
        let next = chars.get(i + 1).copied();
        let (tok, width) = match (c, next) {
            ('-', Some('>')) => (Tok::Arrow, 2),
            (':', Some('=')) => (Tok::Define, 2),
            ('<', Some('=')) => (Tok::Cmp(Comparator::Le), 2),
            ('>', Some('=')) => (Tok::Cmp(Comparator::Ge), 2),
            ('<', _) => (Tok::Cmp(Comparator::Lt), 1),
            ('>', _) => (Tok::Cmp(Comparator::Gt), 1),
            ('=', _) => (Tok::Cmp(Comparator::Eq), 1),
            ('(', _) => (Tok::LParen, 1),
            (')', _) => (Tok::RParen, 1),
            (',', _) => (Tok::Comma, 1),
            ('.', _) => (Tok::Dot, 1),
            ('!', _) => (Tok::Bang, 1),
            ('&', _) => (Tok::Amp, 1),
            ('|', _) => (Tok::Pipe, 1),
            ('@', _) => (Tok::At, 1),
            _ => return Err(err(line, col, format!("unexpected character {c:?}"))),
        };
        push(tok);
        i += width;
        col += width;
    }
    Ok(out)
}

#[derive(Debug, Clone)]
struct Macro {
    params: Vec<String>,
    body: Vec<Spanned>,
}

type Macros = HashMap<String, Macro>;

fn is_keyword(name: &str) -> bool {
    matches!(name, "all" | "ex" | "lfp")
}

/// Variables bound inside a token stream (quantified, counted, or fixpoint-bound).
fn bound_names(body: &[Spanned]) -> HashSet<String> {
    let mut names = HashSet::new();
    let ident = |k: usize| match body.get(k).map(|s| &s.tok) {
        Some(Tok::Ident(s)) => Some(s.clone()),
        _ => None,
    };
    for (k, s) in body.iter().enumerate() {
        match &s.tok {
            Tok::Ident(kw) if kw == "all" || kw == "ex" => {
                let mut j = k + 1;
                while let Some(v) = ident(j) {
                    names.insert(v);
                    j += 1;
                }
            }
            Tok::Ident(kw) if kw == "lfp" => {
                names.extend(ident(k + 1));
                names.extend(ident(k + 3));
            }
            Tok::Ident(kw) if kw == "C" => {
                if let Some(v) = ident(k + 1) {
                    names.insert(v);
                }
            }
            _ => {}
        }
    }
    names
}

fn expand(tokens: Vec<Spanned>, macros: &Macros) -> Result<Vec<Spanned>, ParseError> {
    let mut out = Vec::with_capacity(tokens.len());
    let mut i = 0;
    let mut fresh = 0usize;
    while i < tokens.len() {
        let t = &tokens[i];
        let Tok::Ident(name) = &t.tok else {
            out.push(t.clone());
            i += 1;
            continue;
        };
        let Some(mac) = macros.get(name) else {
            out.push(t.clone());
            i += 1;
            continue;
        };
        let mut args = Vec::new();
        if matches!(tokens.get(i + 1).map(|s| &s.tok), Some(Tok::LParen)) {
            let mut j = i + 2;
            loop {
                match tokens.get(j).map(|s| &s.tok) {
                    Some(Tok::Ident(a)) => args.push(a.clone()),
                    _ => {
                        return Err(ParseError {
                            line: t.line,
                            column: t.column,
                            message: format!("macro {name} expects variable arguments"),
                        })
                    }
                }
                match tokens.get(j + 1).map(|s| &s.tok) {
                    Some(Tok::Comma) => j += 2,
                    Some(Tok::RParen) => {
                        i = j + 2;
                        break;
                    }
                    _ => {
                        return Err(ParseError {
                            line: t.line,
                            column: t.column,
                            message: format!("unterminated argument list for {name}"),
                        })
                    }
                }
            }
        } else {
            i += 1;
        }
        if args.len() != mac.params.len() {
            return Err(ParseError {
                line: t.line,
                column: t.column,
                message: format!(
                    "macro {name} takes {} argument(s), got {}",
                    mac.params.len(),
                    args.len()
                ),
            });
        }
        let mut rename: HashMap<String, String> = mac
            .params
            .iter()
            .cloned()
            .zip(args.iter().cloned())
            .collect();
        // keep bound variables of the body from capturing arguments
        for b in bound_names(&mac.body) {
            if args.contains(&b) && !mac.params.contains(&b) {
                fresh += 1;
                rename.insert(b.clone(), format!("{b}_{fresh}"));
            }
        }
        out.push(Spanned {
            tok: Tok::LParen,
            line: t.line,
            column: t.column,
        });
        for s in &mac.body {
            let tok = match &s.tok {
                Tok::Ident(v) => Tok::Ident(rename.get(v).cloned().unwrap_or_else(|| v.clone())),
                other => other.clone(),
            };
            out.push(Spanned {
                tok,
                line: t.line,
                column: t.column,
            });
        }
        out.push(Spanned {
            tok: Tok::RParen,
            line: t.line,
            column: t.column,
        });
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    end: (usize, usize),
    set_vars: Vec<String>,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn peek_at(&self, offset: usize) -> Option<&Tok> {
        self.toks.get(self.pos + offset).map(|s| &s.tok)
    }

    fn here(&self) -> (usize, usize) {
        self.toks
            .get(self.pos)
            .map(|s| (s.line, s.column))
            .unwrap_or(self.end)
    }

    fn error(&self, message: impl Into<String>) -> LogicError {
        let (line, column) = self.here();
        LogicError::Syntax(ParseError {
            line,
            column,
            message: message.into(),
        })
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|s| s.tok.clone());
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: Tok) -> Result<(), LogicError> {
        match self.peek() {
            Some(t) if *t == want => {
                self.pos += 1;
                Ok(())
            }
            Some(t) => Err(self.error(format!("expected `{want}`, found `{t}`"))),
            None => Err(self.error(format!("expected `{want}`, found end of input"))),
        }
    }

    fn variable(&mut self) -> Result<String, LogicError> {
        match self.peek() {
            Some(Tok::Ident(v)) if !is_keyword(v) => {
                let v = v.clone();
                self.pos += 1;
                Ok(v)
            }
            Some(t) => Err(self.error(format!("expected a variable, found `{t}`"))),
            None => Err(self.error("expected a variable, found end of input")),
        }
    }

    fn formula(&mut self) -> Result<Formula, LogicError> {
        let lhs = self.disjunction()?;
        if self.peek() == Some(&Tok::Arrow) {
            self.pos += 1;
            let rhs = self.formula()?;
            return Ok(lhs.implies(rhs));
        }
        Ok(lhs)
    }

    fn disjunction(&mut self) -> Result<Formula, LogicError> {
        let mut acc = self.conjunction()?;
        while self.peek() == Some(&Tok::Pipe) {
            self.pos += 1;
            acc = acc.or(self.conjunction()?);
        }
        Ok(acc)
    }

    fn conjunction(&mut self) -> Result<Formula, LogicError> {
        let mut acc = self.unary()?;
        while self.peek() == Some(&Tok::Amp) {
            self.pos += 1;
            acc = acc.and(self.unary()?);
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<Formula, LogicError> {
        match self.peek() {
            Some(Tok::Bang) => {
                self.pos += 1;
                Ok(self.unary()?.not())
            }
            Some(Tok::Ident(kw)) if kw == "all" || kw == "ex" => {
                let universal = kw == "all";
                self.pos += 1;
                let mut vars = vec![self.variable()?];
                while let Some(Tok::Ident(v)) = self.peek() {
                    if is_keyword(v) {
                        break;
                    }
                    vars.push(self.variable()?);
                }
                self.expect(Tok::Dot)?;
                let mut body = self.formula()?;
                for v in vars.iter().rev() {
                    body = if universal {
                        Formula::forall(v, body)
                    } else {
                        Formula::exists(v, body)
                    };
                }
                Ok(body)
            }
            Some(Tok::Ident(kw)) if kw == "lfp" => {
                self.pos += 1;
                let set = self.variable()?;
                self.expect(Tok::Comma)?;
                let var = self.variable()?;
                self.expect(Tok::Dot)?;
                self.set_vars.push(set.clone());
                let body = self.formula();
                self.set_vars.pop();
                let body = body?;
                self.expect(Tok::At)?;
                let arg = self.variable()?;
                Ok(Formula::lfp(&set, &var, body, &arg))
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> Result<Formula, LogicError> {
        match self.peek().cloned() {
            Some(Tok::LParen) => {
                self.pos += 1;
                let f = self.formula()?;
                self.expect(Tok::RParen)?;
                Ok(f)
            }
            Some(Tok::Ident(name))
                if name == "C" && matches!(self.peek_at(1), Some(Tok::Ident(_))) =>
            {
                self.pos += 1;
                let var = self.variable()?;
                let body = self.unary()?;
                let cmp = match self.next() {
                    Some(Tok::Cmp(c)) => c,
                    _ => {
                        self.pos -= 1;
                        return Err(self.error("expected a comparator after counting body"));
                    }
                };
                let bound = match self.next() {
                    Some(Tok::Number(k)) => k,
                    _ => {
                        self.pos -= 1;
                        return Err(self.error("expected a numeric bound"));
                    }
                };
                Ok(Formula::count(&var, body, cmp, bound))
            }
            Some(Tok::Ident(name)) if !is_keyword(&name) => {
                let (line, column) = self.here();
                self.pos += 1;
                match self.peek() {
                    Some(Tok::Cmp(Comparator::Eq)) => {
                        self.pos += 1;
                        let rhs = self.variable()?;
                        Ok(Formula::Eq(name, rhs))
                    }
                    Some(Tok::LParen) => {
                        self.pos += 1;
                        let mut args = vec![self.variable()?];
                        while self.peek() == Some(&Tok::Comma) {
                            self.pos += 1;
                            args.push(self.variable()?);
                        }
                        self.expect(Tok::RParen)?;
                        self.application(name, args, line, column)
                    }
                    _ => Err(self.error(format!("expected `(` or `=` after `{name}`"))),
                }
            }
            Some(t) => Err(self.error(format!("unexpected `{t}`"))),
            None => Err(self.error("unexpected end of input")),
        }
    }

    fn application(
        &self,
        name: String,
        mut args: Vec<String>,
        line: usize,
        column: usize,
    ) -> Result<Formula, LogicError> {
        if self.set_vars.contains(&name) {
            if args.len() != 1 {
                return Err(WellFormedError::Arity {
                    pred: name,
                    expected: 1,
                    found: args.len(),
                }
                .into());
            }
            return Ok(Formula::SoAtom(name, args.pop().unwrap()));
        }
        let bad = |message: String| {
            LogicError::Syntax(ParseError {
                line,
                column,
                message,
            })
        };
        let pred = if name == "E" {
            Predicate::Edge(EdgeRel::Union)
        } else if let Some(k) = name.strip_prefix("E#") {
            let k: usize = k.parse().map_err(|_| bad(format!("bad bound in {name}")))?;
            if k == 0 {
                return Err(bad("E#k needs k >= 1".into()));
            }
            Predicate::Edge(EdgeRel::UpTo(k))
        } else if let Some(rest) = name.strip_prefix("E_") {
            let list = rest
                .strip_prefix('{')
                .and_then(|r| r.strip_suffix('}'))
                .unwrap_or(rest);
            let agents = list
                .split(',')
                .map(|a| a.parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| bad(format!("bad coalition in {name}")))?;
            let u = Coalition::from_one_based(&agents).map_err(|e| bad(e.to_string()))?;
            Predicate::Edge(EdgeRel::Coalition(u))
        } else {
            Predicate::Named(name)
        };
        if let Some(expected) = pred.expected_arity() {
            if expected != args.len() {
                return Err(WellFormedError::Arity {
                    pred: pred.to_string(),
                    expected,
                    found: args.len(),
                }
                .into());
            }
        }
        Ok(Formula::Atom(pred, args))
    }
}

fn parse_tokens(toks: Vec<Spanned>, end: (usize, usize)) -> Result<Formula, LogicError> {
    let mut p = Parser {
        toks,
        pos: 0,
        end,
        set_vars: Vec::new(),
    };
    let f = p.formula()?;
    if let Some(t) = p.peek() {
        return Err(p.error(format!("unexpected trailing `{t}`")));
    }
    validate(&f)?;
    Ok(f)
}

/// A `name(params) := body` line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Definition {
    pub name: String,
    pub params: Vec<String>,
    pub body: Formula,
}

/// Splits an optional `name(params) :=` header off a token line.
fn split_header(
    toks: &[Spanned],
) -> Result<Option<(String, Vec<String>, usize)>, ParseError> {
    let Some(def_at) = toks.iter().position(|s| s.tok == Tok::Define) else {
        return Ok(None);
    };
    let bad = |s: &Spanned, message: &str| ParseError {
        line: s.line,
        column: s.column,
        message: message.into(),
    };
    let head = &toks[..def_at];
    let Some(Spanned {
        tok: Tok::Ident(name),
        ..
    }) = head.first()
    else {
        return Err(bad(&toks[def_at], "definition needs a name"));
    };
    let mut params = Vec::new();
    if head.len() > 1 {
        if head[1].tok != Tok::LParen || head.last().map(|s| &s.tok) != Some(&Tok::RParen) {
            return Err(bad(&head[1], "malformed parameter list"));
        }
        for (k, s) in head[2..head.len() - 1].iter().enumerate() {
            match (&s.tok, k % 2) {
                (Tok::Ident(p), 0) => params.push(p.clone()),
                (Tok::Comma, 1) => {}
                _ => return Err(bad(s, "malformed parameter list")),
            }
        }
    }
    Ok(Some((name.clone(), params, def_at + 1)))
}

/// Parses one formula, optionally preceded by a `name(params) :=` header.
pub fn parse(text: &str) -> Result<Formula, LogicError> {
    let toks = lex(text, 1)?;
    let start = split_header(&toks)?.map_or(0, |(_, _, s)| s);
    let end = end_position(text);
    parse_tokens(toks[start..].to_vec(), end)
}

fn end_position(text: &str) -> (usize, usize) {
    let line = text.lines().count().max(1);
    let column = text.lines().last().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

/// A parsed formula file: named definitions plus an optional trailing query.
#[derive(Debug, Clone, Default)]
pub struct FormulaFile {
    pub definitions: Vec<Definition>,
    /// The last line if it is an anonymous formula.
    pub query: Option<Formula>,
}

impl FormulaFile {
    /// Formula to check: the trailing anonymous formula, else the last
    /// parameterless definition.
    pub fn main(&self) -> Option<&Formula> {
        self.query.as_ref().or_else(|| {
            self.definitions
                .iter()
                .rev()
                .find(|d| d.params.is_empty())
                .map(|d| &d.body)
        })
    }

    pub fn get(&self, name: &str) -> Option<&Definition> {
        self.definitions.iter().find(|d| d.name == name)
    }
}

/// Parses a definitions file: one definition per line, `#` comments, each
/// name usable as a macro on later lines.
pub fn parse_file(text: &str) -> Result<FormulaFile, LogicError> {
    let mut macros = Macros::new();
    let mut file = FormulaFile::default();
    let lines: Vec<&str> = text.lines().collect();
    for (idx, line) in lines.iter().enumerate() {
        let lineno = idx + 1;
        let toks = lex(line, lineno)?;
        if toks.is_empty() {
            continue;
        }
        if file.query.is_some() {
            return Err(ParseError {
                line: lineno,
                column: 1,
                message: "an anonymous query must be the last line".into(),
            }
            .into());
        }
        let end = (lineno, line.chars().count() + 1);
        match split_header(&toks)? {
            Some((name, params, start)) => {
                let body_toks = toks[start..].to_vec();
                if let Some(s) = body_toks
                    .iter()
                    .find(|s| matches!(&s.tok, Tok::Ident(v) if *v == name))
                {
                    return Err(ParseError {
                        line: s.line,
                        column: s.column,
                        message: format!("definition of {name} refers to itself"),
                    }
                    .into());
                }
                if macros.contains_key(&name) {
                    return Err(ParseError {
                        line: lineno,
                        column: 1,
                        message: format!("{name} is already defined"),
                    }
                    .into());
                }
                let expanded = expand(body_toks, &macros)?;
                let body = parse_tokens(expanded.clone(), end)?;
                macros.insert(
                    name.clone(),
                    Macro {
                        params: params.clone(),
                        body: expanded,
                    },
                );
                file.definitions.push(Definition { name, params, body });
            }
            None => {
                let expanded = expand(toks, &macros)?;
                file.query = Some(parse_tokens(expanded, end)?);
            }
        }
    }
    Ok(file)
}
