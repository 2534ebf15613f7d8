//! A SPARQL SELECT parser for the fragment used by benchmark query sets, and
//! the restriction of a query to a conjunctive query.
//!
//! Operators outside the conjunctive fragment (OPTIONAL, UNION, BIND, nested
//! groups, ...) are parsed and recorded rather than rejected, so that the
//! restriction step can name them.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rust_decimal::Decimal;
use thiserror::Error;

use crate::rdf::{Literal, RdfTerm, RDF_TYPE, XSD_BOOLEAN, XSD_DATE, XSD_DATETIME, XSD_DECIMAL, XSD_DOUBLE, XSD_INTEGER, XSD_NS, XSD_STRING};
use crate::sqlgen::{CompareOp, FilterCondition, FilterValue};
use crate::vrdf::{OntologyCQ, QueryAtom, QueryTerm};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SparqlError {
    #[error("line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("line {line}, column {column}: unknown prefix '{prefix}:'")]
    UnknownPrefix { line: usize, column: usize, prefix: String },
}

/// Why a query is outside the conjunctive fragment.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unsupported {operator}: {reason}")]
pub struct Rejection {
    pub operator: String,
    pub reason: String,
}

impl Rejection {
    fn new(operator: &str, reason: impl Into<String>) -> Self {
        Rejection {
            operator: operator.to_string(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Feature {
    Bind,
    Optional,
    Union,
    NestedGroup,
    Minus,
    Values,
    Graph,
    Service,
    Having,
}

impl Feature {
    pub fn name(self) -> &'static str {
        match self {
            Feature::Bind => "BIND",
            Feature::Optional => "OPTIONAL",
            Feature::Union => "UNION",
            Feature::NestedGroup => "nested group",
            Feature::Minus => "MINUS",
            Feature::Values => "VALUES",
            Feature::Graph => "GRAPH",
            Feature::Service => "SERVICE",
            Feature::Having => "HAVING",
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum PTerm {
    Var(String),
    Term(RdfTerm),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TriplePattern {
    pub subject: PTerm,
    pub predicate: PTerm,
    pub object: PTerm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Var(String),
    Const(RdfTerm),
    Star,
    Cmp(Box<Expr>, CmpOp, Box<Expr>),
    And(Vec<Expr>),
    Or(Vec<Expr>),
    Not(Box<Expr>),
    Arith(Box<Expr>, char, Box<Expr>),
    Call { name: String, distinct: bool, args: Vec<Expr> },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SelectItem {
    Var(String),
    Aggregate {
        function: String,
        distinct: bool,
        /// `None` for `COUNT(*)`.
        arg: Option<String>,
        alias: String,
    },
    Expression { expr: Expr, alias: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OrderKey {
    pub expr: Expr,
    pub descending: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SparqlQuery {
    pub prefixes: BTreeMap<String, String>,
    pub distinct: bool,
    /// `None` is `SELECT *`.
    pub select: Option<Vec<SelectItem>>,
    pub patterns: Vec<TriplePattern>,
    pub filters: Vec<Expr>,
    /// Unsupported graph-pattern operators, in order of appearance.
    pub features: Vec<Feature>,
    pub group_by: Vec<Expr>,
    pub order_by: Vec<OrderKey>,
    pub limit: Option<u64>,
    pub offset: Option<u64>,
}

const AGGREGATES: [&str; 7] = ["COUNT", "SUM", "AVG", "MIN", "MAX", "SAMPLE", "GROUP_CONCAT"];

/// Prefix for variables standing in for blank nodes in the query text.
pub const BLANK_VAR_PREFIX: &str = "_b";

impl SparqlQuery {
    /// Variables of the basic graph pattern in order of first occurrence,
    /// excluding those introduced for blank nodes.
    pub fn pattern_vars(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for p in &self.patterns {
            for t in [&p.subject, &p.predicate, &p.object] {
                if let PTerm::Var(v) = t {
                    if !v.starts_with(BLANK_VAR_PREFIX) && !out.contains(&v.as_str()) {
                        out.push(v);
                    }
                }
            }
        }
        out
    }
}

// ---- lexer ----

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Iri(String),
    PName(String, String),
    Var(String),
    Str(String),
    Lang(String),
    Num(String),
    Blank(String),
    Word(String),
    Sym(&'static str),
}

struct Lexed {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(text: &str) -> Result<Vec<Lexed>, SparqlError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let err = |line, column, message: String| SparqlError::Syntax { line, column, message };

    while i < chars.len() {
        let c = chars[i];
        let (l0, c0) = (line, col);
        let mut advance = |n: usize, i: &mut usize| {
            for _ in 0..n {
                if chars[*i] == '\n' {
                    line += 1;
                    col = 1;
                } else {
                    col += 1;
                }
                *i += 1;
            }
        };
        if c.is_whitespace() {
            advance(1, &mut i);
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                advance(1, &mut i);
            }
            continue;
        }
        let start = i;
        let tok = if c == '<' && is_iri_ahead(&chars[i + 1..]) {
            let end = i + 1 + chars[i + 1..].iter().position(|&c| c == '>').expect("checked");
            let iri: String = chars[i + 1..end].iter().collect();
            advance(end + 1 - i, &mut i);
            Tok::Iri(iri)
        } else if (c == '?' || c == '$') && chars.get(i + 1).is_some_and(|c| is_name_char(*c)) {
            let mut j = i + 1;
            while j < chars.len() && is_name_char(chars[j]) {
                j += 1;
            }
            let name: String = chars[i + 1..j].iter().collect();
            advance(j - i, &mut i);
            Tok::Var(name)
        } else if c == '"' || c == '\'' {
            let long = chars.get(i + 1) == Some(&c) && chars.get(i + 2) == Some(&c);
            let q = if long { 3 } else { 1 };
            let mut j = i + q;
            let mut s = String::new();
            loop {
                match chars.get(j) {
                    None => return Err(err(l0, c0, "unterminated string".into())),
                    Some('\\') => {
                        let e = chars.get(j + 1).copied().ok_or_else(|| err(l0, c0, "unterminated string".into()))?;
                        s.push(match e {
                            'n' => '\n',
                            't' => '\t',
                            'r' => '\r',
                            other => other,
                        });
                        j += 2;
                    }
                    Some(&ch) if ch == c && (!long || (chars.get(j + 1) == Some(&c) && chars.get(j + 2) == Some(&c))) => {
                        j += q;
                        break;
                    }
                    Some('\n') if !long => return Err(err(l0, c0, "line break in string".into())),
                    Some(&ch) => {
                        s.push(ch);
                        j += 1;
                    }
                }
            }
            advance(j - i, &mut i);
            Tok::Str(s)
        } else if c == '@' {
            let mut j = i + 1;
            while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '-') {
                j += 1;
            }
            if j == i + 1 {
                return Err(err(l0, c0, "empty language tag".into()));
            }
            let tag: String = chars[i + 1..j].iter().collect();
            advance(j - i, &mut i);
            Tok::Lang(tag)
        } else if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let mut j = i;
            while j < chars.len() && chars[j].is_ascii_digit() {
                j += 1;
            }
            if chars.get(j) == Some(&'.') && chars.get(j + 1).is_some_and(|d| d.is_ascii_digit()) {
                j += 1;
                while j < chars.len() && chars[j].is_ascii_digit() {
                    j += 1;
                }
            }
            if matches!(chars.get(j), Some('e' | 'E')) {
                let mut k = j + 1;
                if matches!(chars.get(k), Some('+' | '-')) {
                    k += 1;
                }
                if chars.get(k).is_some_and(|d| d.is_ascii_digit()) {
                    j = k;
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                }
            }
            let n: String = chars[i..j].iter().collect();
            advance(j - i, &mut i);
            Tok::Num(n)
        } else if c == '_' && chars.get(i + 1) == Some(&':') {
            let mut j = i + 2;
            while j < chars.len() && (is_name_char(chars[j]) || chars[j] == '-' || chars[j] == '.') {
                j += 1;
            }
            while j > i + 2 && chars[j - 1] == '.' {
                j -= 1;
            }
            let label: String = chars[i + 2..j].iter().collect();
            advance(j - i, &mut i);
            Tok::Blank(label)
        } else if c.is_alphabetic() || c == '_' || c == ':' {
            let mut j = i;
            while j < chars.len() && (is_name_char(chars[j]) || chars[j] == '-') {
                j += 1;
            }
            let first: String = chars[i..j].iter().collect();
            if chars.get(j) == Some(&':') {
                let mut k = j + 1;
                while k < chars.len() && (is_name_char(chars[k]) || matches!(chars[k], '-' | '.' | ':' | '%')) {
                    k += 1;
                }
                while k > j + 1 && chars[k - 1] == '.' {
                    k -= 1;
                }
                let local: String = chars[j + 1..k].iter().collect();
                advance(k - i, &mut i);
                Tok::PName(first, local)
            } else {
                advance(j - i, &mut i);
                Tok::Word(first)
            }
        } else {
            let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
            let sym = match two.as_str() {
                "^^" => Some("^^"),
                "&&" => Some("&&"),
                "||" => Some("||"),
                "!=" => Some("!="),
                "<=" => Some("<="),
                ">=" => Some(">="),
                _ => None,
            };
            match sym {
                Some(s) => {
                    advance(2, &mut i);
                    Tok::Sym(s)
                }
                None => {
                    let s = match c {
                        '{' => "{",
                        '}' => "}",
                        '(' => "(",
                        ')' => ")",
                        '[' => "[",
                        ']' => "]",
                        '.' => ".",
                        ';' => ";",
                        ',' => ",",
                        '*' => "*",
                        '=' => "=",
                        '<' => "<",
                        '>' => ">",
                        '!' => "!",
                        '+' => "+",
                        '-' => "-",
                        '/' => "/",
                        other => return Err(err(l0, c0, format!("unexpected character '{other}'"))),
                    };
                    advance(1, &mut i);
                    Tok::Sym(s)
                }
            }
        };
        debug_assert!(i > start);
        out.push(Lexed {
            tok,
            line: l0,
            column: c0,
        });
    }
    Ok(out)
}

fn is_name_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// `<` starts an IRI when a `>` follows with no whitespace in between.
fn is_iri_ahead(rest: &[char]) -> bool {
    for &c in rest {
        match c {
            '>' => return true,
            c if c.is_whitespace() || matches!(c, '<' | '"' | '{' | '}' | '|' | '^' | '`' | '\\') => return false,
            _ => {}
        }
    }
    false
}

// ---- parser ----

struct Parser {
    toks: Vec<Lexed>,
    pos: usize,
    prefixes: BTreeMap<String, String>,
    base: Option<String>,
    fresh: usize,
    labels: BTreeMap<String, String>,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|l| &l.tok)
    }

    fn location(&self) -> (usize, usize) {
        match self.toks.get(self.pos).or_else(|| self.toks.last()) {
            Some(l) => (l.line, l.column),
            None => (1, 1),
        }
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, SparqlError> {
        let (line, column) = self.location();
        Err(SparqlError::Syntax {
            line,
            column,
            message: message.into(),
        })
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|l| l.tok.clone());
        self.pos += 1;
        t
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Some(Tok::Sym(x)) if *x == s)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> Result<(), SparqlError> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.err(format!("expected '{s}'"))
        }
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(w)) if w.eq_ignore_ascii_case(kw))
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), SparqlError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            self.err(format!("expected {kw}"))
        }
    }

    fn expand(&self, prefix: &str, local: &str) -> Result<String, SparqlError> {
        match self.prefixes.get(prefix) {
            Some(ns) => Ok(format!("{ns}{local}")),
            None => {
                let (line, column) = self.location();
                Err(SparqlError::UnknownPrefix {
                    line,
                    column,
                    prefix: prefix.to_string(),
                })
            }
        }
    }

    fn resolve(&self, iri: &str) -> String {
        match &self.base {
            Some(b) if !iri.contains(':') => format!("{b}{iri}"),
            _ => iri.to_string(),
        }
    }

    fn fresh_var(&mut self) -> String {
        let v = format!("{BLANK_VAR_PREFIX}{}", self.fresh);
        self.fresh += 1;
        v
    }

    fn iri_tok(&mut self) -> Result<Option<String>, SparqlError> {
        match self.peek().cloned() {
            Some(Tok::Iri(i)) => {
                self.pos += 1;
                Ok(Some(self.resolve(&i)))
            }
            Some(Tok::PName(p, l)) => {
                let iri = self.expand(&p, &l)?;
                self.pos += 1;
                Ok(Some(iri))
            }
            _ => Ok(None),
        }
    }

    fn query(&mut self) -> Result<SparqlQuery, SparqlError> {
        loop {
            if self.eat_kw("PREFIX") {
                let Some(Tok::PName(p, l)) = self.next() else {
                    self.pos -= 1;
                    return self.err("expected a prefix name");
                };
                if !l.is_empty() {
                    self.pos -= 1;
                    return self.err("expected a prefix name");
                }
                let Some(Tok::Iri(ns)) = self.next() else {
                    self.pos -= 1;
                    return self.err("expected an IRI");
                };
                let ns = self.resolve(&ns);
                self.prefixes.insert(p, ns);
            } else if self.eat_kw("BASE") {
                let Some(Tok::Iri(b)) = self.next() else {
                    self.pos -= 1;
                    return self.err("expected an IRI");
                };
                self.base = Some(b);
            } else {
                break;
            }
        }
        let mut q = SparqlQuery {
            prefixes: self.prefixes.clone(),
            ..Default::default()
        };
        self.expect_kw("SELECT")?;
        if self.eat_kw("DISTINCT") {
            q.distinct = true;
        } else {
            self.eat_kw("REDUCED");
        }
        if self.eat_sym("*") {
            q.select = None;
        } else {
            let mut items = Vec::new();
            loop {
                match self.peek().cloned() {
                    Some(Tok::Var(v)) => {
                        self.pos += 1;
                        items.push(SelectItem::Var(v));
                    }
                    Some(Tok::Sym("(")) => {
                        self.pos += 1;
                        let expr = self.expr()?;
                        self.expect_kw("AS")?;
                        let Some(Tok::Var(alias)) = self.next() else {
                            self.pos -= 1;
                            return self.err("expected a variable after AS");
                        };
                        self.expect_sym(")")?;
                        items.push(select_item(expr, alias));
                    }
                    _ => break,
                }
            }
            if items.is_empty() {
                return self.err("expected '*' or a projection");
            }
            q.select = Some(items);
        }
        self.eat_kw("WHERE");
        let mut patterns = Vec::new();
        let mut filters = Vec::new();
        let mut features = Vec::new();
        self.group(&mut patterns, &mut filters, &mut features)?;
        q.patterns = patterns;
        q.filters = filters;
        q.features = features;

        loop {
            if self.eat_kw("GROUP") {
                self.expect_kw("BY")?;
                while let Some(e) = self.order_operand()? {
                    q.group_by.push(e);
                }
            } else if self.eat_kw("HAVING") {
                q.features.push(Feature::Having);
                self.primary()?;
            } else if self.eat_kw("ORDER") {
                self.expect_kw("BY")?;
                loop {
                    let descending = if self.eat_kw("DESC") {
                        true
                    } else {
                        self.eat_kw("ASC");
                        false
                    };
                    match self.order_operand()? {
                        Some(expr) => q.order_by.push(OrderKey { expr, descending }),
                        None => break,
                    }
                }
                if q.order_by.is_empty() {
                    return self.err("expected an ordering key");
                }
            } else if self.eat_kw("LIMIT") {
                q.limit = Some(self.integer()?);
            } else if self.eat_kw("OFFSET") {
                q.offset = Some(self.integer()?);
            } else {
                break;
            }
        }
        if self.pos < self.toks.len() {
            return self.err("unexpected trailing input");
        }
        Ok(q)
    }

    fn integer(&mut self) -> Result<u64, SparqlError> {
        match self.next() {
            Some(Tok::Num(n)) => match n.parse() {
                Ok(v) => Ok(v),
                Err(_) => {
                    self.pos -= 1;
                    self.err("expected an integer")
                }
            },
            _ => {
                self.pos -= 1;
                self.err("expected an integer")
            }
        }
    }

    fn order_operand(&mut self) -> Result<Option<Expr>, SparqlError> {
        match self.peek() {
            Some(Tok::Var(v)) => {
                let v = v.clone();
                self.pos += 1;
                Ok(Some(Expr::Var(v)))
            }
            Some(Tok::Sym("(")) => self.primary().map(Some),
            Some(Tok::Word(w)) if !is_keyword(w) && self.toks.get(self.pos + 1).is_some_and(|l| l.tok == Tok::Sym("(")) => {
                self.primary().map(Some)
            }
            _ => Ok(None),
        }
    }

    fn group(
        &mut self,
        patterns: &mut Vec<TriplePattern>,
        filters: &mut Vec<Expr>,
        features: &mut Vec<Feature>,
    ) -> Result<(), SparqlError> {
        self.expect_sym("{")?;
        loop {
            if self.eat_sym("}") {
                return Ok(());
            }
            if self.eat_sym(".") {
                continue;
            }
            if self.peek().is_none() {
                return self.err("unterminated group");
            }
            if self.eat_kw("FILTER") {
                let e = self.constraint()?;
                filters.push(e);
            } else if self.eat_kw("OPTIONAL") {
                features.push(Feature::Optional);
                self.group(&mut Vec::new(), &mut Vec::new(), features)?;
            } else if self.eat_kw("MINUS") {
                features.push(Feature::Minus);
                self.group(&mut Vec::new(), &mut Vec::new(), features)?;
            } else if self.eat_kw("BIND") {
                features.push(Feature::Bind);
                self.expect_sym("(")?;
                self.expr()?;
                self.expect_kw("AS")?;
                match self.next() {
                    Some(Tok::Var(_)) => {}
                    _ => {
                        self.pos -= 1;
                        return self.err("expected a variable after AS");
                    }
                }
                self.expect_sym(")")?;
            } else if self.is_kw("GRAPH") || self.is_kw("SERVICE") {
                features.push(if self.is_kw("GRAPH") { Feature::Graph } else { Feature::Service });
                self.pos += 1;
                self.eat_kw("SILENT");
                self.next();
                self.group(&mut Vec::new(), &mut Vec::new(), features)?;
            } else if self.eat_kw("VALUES") {
                features.push(Feature::Values);
                let mut depth = 0i32;
                loop {
                    match self.next() {
                        Some(Tok::Sym("{")) => depth += 1,
                        Some(Tok::Sym("}")) => {
                            depth -= 1;
                            if depth == 0 {
                                break;
                            }
                        }
                        Some(_) => {}
                        None => return self.err("unterminated VALUES block"),
                    }
                }
            } else if self.is_sym("{") {
                let mut inner = Vec::new();
                let mut inner_filters = Vec::new();
                self.group(&mut inner, &mut inner_filters, features)?;
                let mut union = false;
                while self.eat_kw("UNION") {
                    union = true;
                    self.group(&mut inner, &mut inner_filters, features)?;
                }
                features.push(if union { Feature::Union } else { Feature::NestedGroup });
            } else {
                self.triples(patterns)?;
            }
        }
    }

    fn constraint(&mut self) -> Result<Expr, SparqlError> {
        if self.is_sym("(") || matches!(self.peek(), Some(Tok::Word(_))) {
            self.primary()
        } else {
            self.err("expected a parenthesized FILTER expression")
        }
    }

    fn is_verb_start(&self) -> bool {
        match self.peek() {
            Some(Tok::Var(_) | Tok::Iri(_) | Tok::PName(..)) => true,
            Some(Tok::Word(w)) => w == "a",
            _ => false,
        }
    }

    fn triples(&mut self, out: &mut Vec<TriplePattern>) -> Result<(), SparqlError> {
        if self.eat_sym("[") {
            let subject = PTerm::Var(self.fresh_var());
            if !self.eat_sym("]") {
                self.property_list(&subject, out)?;
                self.expect_sym("]")?;
                if self.is_verb_start() {
                    self.property_list(&subject, out)?;
                }
            } else {
                self.property_list(&subject, out)?;
            }
            return Ok(());
        }
        let subject = self.term()?;
        self.property_list(&subject, out)
    }

    fn property_list(&mut self, subject: &PTerm, out: &mut Vec<TriplePattern>) -> Result<(), SparqlError> {
        loop {
            let predicate = if self.is_kw("a") && matches!(self.peek(), Some(Tok::Word(w)) if w == "a") {
                self.pos += 1;
                PTerm::Term(RdfTerm::iri(RDF_TYPE))
            } else {
                match self.peek() {
                    Some(Tok::Var(_) | Tok::Iri(_) | Tok::PName(..)) => self.term()?,
                    _ => return self.err("expected a predicate"),
                }
            };
            loop {
                let object = self.object(out)?;
                out.push(TriplePattern {
                    subject: subject.clone(),
                    predicate: predicate.clone(),
                    object,
                });
                if !self.eat_sym(",") {
                    break;
                }
            }
            if !self.eat_sym(";") {
                return Ok(());
            }
            while self.eat_sym(";") {}
            if !self.is_verb_start() {
                return Ok(());
            }
        }
    }

    fn object(&mut self, out: &mut Vec<TriplePattern>) -> Result<PTerm, SparqlError> {
        if self.eat_sym("[") {
            let v = PTerm::Var(self.fresh_var());
            if !self.eat_sym("]") {
                self.property_list(&v, out)?;
                self.expect_sym("]")?;
            }
            return Ok(v);
        }
        self.term()
    }

    fn term(&mut self) -> Result<PTerm, SparqlError> {
        if let Some(iri) = self.iri_tok()? {
            return Ok(PTerm::Term(RdfTerm::Iri(iri)));
        }
        match self.peek().cloned() {
            Some(Tok::Var(v)) => {
                self.pos += 1;
                Ok(PTerm::Var(v))
            }
            Some(Tok::Blank(label)) => {
                self.pos += 1;
                let v = match self.labels.get(&label) {
                    Some(v) => v.clone(),
                    None => {
                        let v = self.fresh_var();
                        self.labels.insert(label, v.clone());
                        v
                    }
                };
                Ok(PTerm::Var(v))
            }
            _ => match self.literal()? {
                Some(l) => Ok(PTerm::Term(l)),
                None => self.err("expected a term"),
            },
        }
    }

    fn literal(&mut self) -> Result<Option<RdfTerm>, SparqlError> {
        match self.peek().cloned() {
            Some(Tok::Str(s)) => {
                self.pos += 1;
                if let Some(Tok::Lang(l)) = self.peek().cloned() {
                    self.pos += 1;
                    return Ok(Some(RdfTerm::Literal(Literal::lang(s, l))));
                }
                if self.eat_sym("^^") {
                    return match self.iri_tok()? {
                        Some(dt) => Ok(Some(RdfTerm::Literal(Literal::typed(s, dt)))),
                        None => self.err("expected a datatype IRI"),
                    };
                }
                Ok(Some(RdfTerm::Literal(Literal::string(s))))
            }
            Some(Tok::Num(n)) => {
                self.pos += 1;
                Ok(Some(number_literal(&n)))
            }
            Some(Tok::Sym(sign @ ("-" | "+"))) if matches!(self.toks.get(self.pos + 1).map(|l| &l.tok), Some(Tok::Num(_))) => {
                self.pos += 1;
                let Some(Tok::Num(n)) = self.next() else { unreachable!() };
                let text = if sign == "-" { format!("-{n}") } else { n };
                Ok(Some(number_literal(&text)))
            }
            Some(Tok::Word(w)) if w == "true" || w == "false" => {
                self.pos += 1;
                Ok(Some(RdfTerm::Literal(Literal::typed(w, XSD_BOOLEAN))))
            }
            _ => Ok(None),
        }
    }

    fn expr(&mut self) -> Result<Expr, SparqlError> {
        let mut parts = vec![self.and_expr()?];
        while self.eat_sym("||") {
            parts.push(self.and_expr()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { Expr::Or(parts) })
    }

    fn and_expr(&mut self) -> Result<Expr, SparqlError> {
        let mut parts = vec![self.relational()?];
        while self.eat_sym("&&") {
            parts.push(self.relational()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { Expr::And(parts) })
    }

    fn relational(&mut self) -> Result<Expr, SparqlError> {
        let left = self.additive()?;
        let op = match self.peek() {
            Some(Tok::Sym("=")) => CmpOp::Eq,
            Some(Tok::Sym("!=")) => CmpOp::Ne,
            Some(Tok::Sym("<")) => CmpOp::Lt,
            Some(Tok::Sym("<=")) => CmpOp::Le,
            Some(Tok::Sym(">")) => CmpOp::Gt,
            Some(Tok::Sym(">=")) => CmpOp::Ge,
            _ => return Ok(left),
        };
        self.pos += 1;
        let right = self.additive()?;
        Ok(Expr::Cmp(Box::new(left), op, Box::new(right)))
    }

    fn additive(&mut self) -> Result<Expr, SparqlError> {
        let mut left = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Sym("+")) => '+',
                Some(Tok::Sym("-")) => '-',
                Some(Tok::Sym("*")) => '*',
                Some(Tok::Sym("/")) => '/',
                _ => return Ok(left),
            };
            self.pos += 1;
            let right = self.unary()?;
            left = Expr::Arith(Box::new(left), op, Box::new(right));
        }
    }

    fn unary(&mut self) -> Result<Expr, SparqlError> {
        if self.eat_sym("!") {
            return Ok(Expr::Not(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, SparqlError> {
        if self.eat_sym("(") {
            let e = self.expr()?;
            self.expect_sym(")")?;
            return Ok(e);
        }
        if let Some(Tok::Var(v)) = self.peek().cloned() {
            self.pos += 1;
            return Ok(Expr::Var(v));
        }
        if let Some(Tok::Word(w)) = self.peek().cloned() {
            if w != "true" && w != "false" {
                self.pos += 1;
                self.expect_sym("(")?;
                let distinct = self.eat_kw("DISTINCT");
                let mut args = Vec::new();
                if !self.eat_sym(")") {
                    loop {
                        if self.eat_sym("*") {
                            args.push(Expr::Star);
                        } else {
                            args.push(self.expr()?);
                        }
                        if self.eat_sym(";") {
                            // GROUP_CONCAT separator
                            self.expect_kw("SEPARATOR")?;
                            self.expect_sym("=")?;
                            self.literal()?;
                        }
                        if !self.eat_sym(",") {
                            break;
                        }
                    }
                    self.expect_sym(")")?;
                }
                return Ok(Expr::Call {
                    name: w.to_ascii_uppercase(),
                    distinct,
                    args,
                });
            }
        }
        if let Some(iri) = self.iri_tok()? {
            return Ok(Expr::Const(RdfTerm::Iri(iri)));
        }
        match self.literal()? {
            Some(l) => Ok(Expr::Const(l)),
            None => self.err("expected an expression"),
        }
    }
}

fn is_keyword(w: &str) -> bool {
    ["ORDER", "GROUP", "LIMIT", "OFFSET", "HAVING", "ASC", "DESC", "BY"]
        .iter()
        .any(|k| w.eq_ignore_ascii_case(k))
}

fn select_item(expr: Expr, alias: String) -> SelectItem {
    if let Expr::Call { name, distinct, args } = &expr {
        if AGGREGATES.contains(&name.as_str()) && args.len() == 1 {
            match &args[0] {
                Expr::Var(v) => {
                    return SelectItem::Aggregate {
                        function: name.clone(),
                        distinct: *distinct,
                        arg: Some(v.clone()),
                        alias,
                    }
                }
                Expr::Star => {
                    return SelectItem::Aggregate {
                        function: name.clone(),
                        distinct: *distinct,
                        arg: None,
                        alias,
                    }
                }
                _ => {}
            }
        }
    }
    SelectItem::Expression { expr, alias }
}

fn number_literal(n: &str) -> RdfTerm {
    let dt = if n.contains(['e', 'E']) {
        XSD_DOUBLE
    } else if n.contains('.') {
        XSD_DECIMAL
    } else {
        XSD_INTEGER
    };
    RdfTerm::Literal(Literal::typed(n, dt))
}

pub fn parse_sparql(text: &str) -> Result<SparqlQuery, SparqlError> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
        prefixes: BTreeMap::new(),
        base: None,
        fresh: 0,
        labels: BTreeMap::new(),
    };
    p.query()
}

// ---- restriction ----

fn check_filter(e: &Expr) -> Result<(), Rejection> {
    match e {
        Expr::And(parts) => parts.iter().try_for_each(check_filter),
        Expr::Or(_) => Err(Rejection::new("||", "disjunctive FILTER conditions are not conjunctive")),
        Expr::Cmp(a, op, b) => {
            if *op == CmpOp::Ne {
                return Err(Rejection::new("!=", "only <, <=, =, >=, > comparisons are supported"));
            }
            match (a.as_ref(), b.as_ref()) {
                (Expr::Var(_), Expr::Const(c)) | (Expr::Const(c), Expr::Var(_)) => filter_value(c).map(|_| ()),
                _ => Err(Rejection::new(
                    "FILTER expression",
                    "comparisons must be between a variable and a constant",
                )),
            }
        }
        _ => Err(Rejection::new("FILTER expression", "only conjunctions of comparisons are supported")),
    }
}

fn filter_value(c: &RdfTerm) -> Result<FilterValue, Rejection> {
    let unsupported = || Rejection::new("FILTER expression", format!("cannot compare against {c}"));
    let l = c.as_literal().ok_or_else(unsupported)?;
    let dt = l.datatype();
    let lex = l.lexical().trim();
    let local = dt.strip_prefix(XSD_NS).unwrap_or("");
    if dt == XSD_STRING {
        return Ok(FilterValue::Str(l.lexical().to_string()));
    }
    if dt == XSD_DATE || dt == XSD_DATETIME {
        return Ok(FilterValue::DateTime(lex.to_string()));
    }
    if matches!(
        local,
        "integer" | "int" | "long" | "short" | "byte" | "nonNegativeInteger" | "positiveInteger" | "unsignedInt"
    ) {
        return Ok(match lex.parse::<i64>() {
            Ok(i) => FilterValue::Int(i),
            Err(_) => FilterValue::Decimal(Decimal::from_str(lex).map_err(|_| unsupported())?),
        });
    }
    if matches!(local, "decimal" | "double" | "float") {
        let d = Decimal::from_str(lex)
            .or_else(|_| Decimal::from_scientific(lex))
            .map_err(|_| unsupported())?;
        return Ok(FilterValue::Decimal(d));
    }
    Err(unsupported())
}

/// The conjunctive part of `q`: ORDER BY and GROUP BY are dropped and
/// aggregates are replaced by their argument; queries using operators with
/// no conjunctive counterpart are rejected.
pub fn restrict_to_cq(q: &SparqlQuery) -> Result<SparqlQuery, Rejection> {
    if let Some(f) = q.features.iter().min() {
        return Err(Rejection::new(f.name(), format!("{f} has no conjunctive-query counterpart")));
    }
    if q.limit.is_some() {
        return Err(Rejection::new("LIMIT", "result slicing has no conjunctive-query counterpart"));
    }
    if q.offset.is_some() {
        return Err(Rejection::new("OFFSET", "result slicing has no conjunctive-query counterpart"));
    }
    let select = match &q.select {
        None => None,
        Some(items) => {
            let mut out: Vec<SelectItem> = Vec::new();
            for item in items {
                let v = match item {
                    SelectItem::Var(v) => v.clone(),
                    SelectItem::Aggregate { arg: Some(v), .. } => v.clone(),
                    SelectItem::Aggregate { function, arg: None, .. } => {
                        return Err(Rejection::new(&format!("{function}(*)"), "the aggregate has no argument variable"))
                    }
                    SelectItem::Expression { alias, .. } => {
                        return Err(Rejection::new(
                            "projection expression",
                            format!("?{alias} is computed by an expression"),
                        ))
                    }
                };
                if !out.contains(&SelectItem::Var(v.clone())) {
                    out.push(SelectItem::Var(v));
                }
            }
            Some(out)
        }
    };
    for f in &q.filters {
        check_filter(f)?;
    }
    Ok(SparqlQuery {
        select,
        group_by: Vec::new(),
        order_by: Vec::new(),
        ..q.clone()
    })
}

fn flatten<'a>(e: &'a Expr, out: &mut Vec<&'a Expr>) {
    match e {
        Expr::And(parts) => parts.iter().for_each(|p| flatten(p, out)),
        other => out.push(other),
    }
}

fn query_term(t: &PTerm) -> QueryTerm {
    match t {
        PTerm::Var(v) => QueryTerm::Var(v.clone()),
        PTerm::Term(t) => QueryTerm::Const(t.clone()),
    }
}

/// Restricts `q` and translates it to a conjunctive query over class and
/// property atoms.
pub fn to_ontology_cq(q: &SparqlQuery) -> Result<OntologyCQ, Rejection> {
    let r = restrict_to_cq(q)?;
    let mut atoms = Vec::new();
    for p in &r.patterns {
        let predicate = match &p.predicate {
            PTerm::Term(RdfTerm::Iri(i)) => i.clone(),
            _ => return Err(Rejection::new("variable predicate", "predicates must be IRIs")),
        };
        if predicate == RDF_TYPE {
            match &p.object {
                PTerm::Term(RdfTerm::Iri(c)) => atoms.push(QueryAtom::class(c, query_term(&p.subject))),
                _ => return Err(Rejection::new("variable class", "rdf:type objects must be IRIs")),
            }
        } else {
            atoms.push(QueryAtom::property(&predicate, query_term(&p.subject), query_term(&p.object)));
        }
    }
    let mut filters = Vec::new();
    for f in &r.filters {
        let mut parts = Vec::new();
        flatten(f, &mut parts);
        for part in parts {
            let Expr::Cmp(a, op, b) = part else { unreachable!("checked by restrict_to_cq") };
            let (var, op, c) = match (a.as_ref(), b.as_ref()) {
                (Expr::Var(v), Expr::Const(c)) => (v, *op, c),
                (Expr::Const(c), Expr::Var(v)) => (v, flip(*op), c),
                _ => unreachable!("checked by restrict_to_cq"),
            };
            let op = match op {
                CmpOp::Eq => CompareOp::Eq,
                CmpOp::Lt => CompareOp::Lt,
                CmpOp::Le => CompareOp::Le,
                CmpOp::Gt => CompareOp::Gt,
                CmpOp::Ge => CompareOp::Ge,
                CmpOp::Ne => unreachable!("checked by restrict_to_cq"),
            };
            filters.push(FilterCondition {
                var: var.clone(),
                op,
                constant: filter_value(c)?,
            });
        }
    }
    let answer_vars = match &r.select {
        None => r.pattern_vars().into_iter().map(str::to_string).collect(),
        Some(items) => items
            .iter()
            .map(|i| match i {
                SelectItem::Var(v) => v.clone(),
                _ => unreachable!("restricted projections are variables"),
            })
            .collect(),
    };
    Ok(OntologyCQ {
        answer_vars,
        atoms,
        filters,
        distinct: r.distinct,
    })
}

fn flip(op: CmpOp) -> CmpOp {
    match op {
        CmpOp::Lt => CmpOp::Gt,
        CmpOp::Le => CmpOp::Ge,
        CmpOp::Gt => CmpOp::Lt,
        CmpOp::Ge => CmpOp::Le,
        other => other,
    }
}

// ---- rendering ----

fn render_term(t: &RdfTerm, prefixes: &BTreeMap<String, String>) -> String {
    match t {
        RdfTerm::Iri(i) if i == RDF_TYPE => "a".to_string(),
        RdfTerm::Iri(i) => compact(i, prefixes),
        RdfTerm::BlankNode(b) => format!("_:{b}"),
        RdfTerm::Literal(l) => {
            let lex = format!("\"{}\"", l.lexical().replace('\\', "\\\\").replace('"', "\\\""));
            match l.language() {
                Some(lang) => format!("{lex}@{lang}"),
                None if l.datatype() == XSD_STRING => lex,
                None => format!("{lex}^^{}", compact(l.datatype(), prefixes)),
            }
        }
    }
}

fn compact(iri: &str, prefixes: &BTreeMap<String, String>) -> String {
    for (p, ns) in prefixes {
        if let Some(local) = iri.strip_prefix(ns.as_str()) {
            if !local.is_empty() && local.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '-') {
                return format!("{p}:{local}");
            }
        }
    }
    format!("<{iri}>")
}

fn render_pterm(t: &PTerm, prefixes: &BTreeMap<String, String>) -> String {
    match t {
        PTerm::Var(v) => format!("?{v}"),
        PTerm::Term(t) => render_term(t, prefixes),
    }
}

fn render_expr(e: &Expr, prefixes: &BTreeMap<String, String>) -> String {
    match e {
        Expr::Var(v) => format!("?{v}"),
        Expr::Const(c) => render_term(c, prefixes).replace("^^a", &format!("^^<{RDF_TYPE}>")),
        Expr::Star => "*".into(),
        Expr::Cmp(a, op, b) => {
            let op = match op {
                CmpOp::Eq => "=",
                CmpOp::Ne => "!=",
                CmpOp::Lt => "<",
                CmpOp::Le => "<=",
                CmpOp::Gt => ">",
                CmpOp::Ge => ">=",
            };
            format!("{} {op} {}", render_expr(a, prefixes), render_expr(b, prefixes))
        }
        Expr::And(ps) => ps.iter().map(|p| render_expr(p, prefixes)).collect::<Vec<_>>().join(" && "),
        Expr::Or(ps) => format!("({})", ps.iter().map(|p| render_expr(p, prefixes)).collect::<Vec<_>>().join(" || ")),
        Expr::Not(x) => format!("!({})", render_expr(x, prefixes)),
        Expr::Arith(a, op, b) => format!("({} {op} {})", render_expr(a, prefixes), render_expr(b, prefixes)),
        Expr::Call { name, distinct, args } => format!(
            "{name}({}{})",
            if *distinct { "DISTINCT " } else { "" },
            args.iter().map(|a| render_expr(a, prefixes)).collect::<Vec<_>>().join(", ")
        ),
    }
}

/// Writes a query in the conjunctive fragment back as SPARQL text. Blank
/// node variables are written as variables.
pub fn render_sparql(q: &SparqlQuery) -> String {
    let mut out = String::new();
    for (p, ns) in &q.prefixes {
        out.push_str(&format!("PREFIX {p}: <{ns}>\n"));
    }
    if !q.prefixes.is_empty() {
        out.push('\n');
    }
    out.push_str("SELECT ");
    if q.distinct {
        out.push_str("DISTINCT ");
    }
    match &q.select {
        None => out.push('*'),
        Some(items) => {
            let rendered: Vec<String> = items
                .iter()
                .map(|i| match i {
                    SelectItem::Var(v) => format!("?{v}"),
                    SelectItem::Aggregate { function, distinct, arg, alias } => format!(
                        "({function}({}{}) AS ?{alias})",
                        if *distinct { "DISTINCT " } else { "" },
                        arg.as_ref().map_or("*".to_string(), |a| format!("?{a}"))
                    ),
                    SelectItem::Expression { expr, alias } => format!("({} AS ?{alias})", render_expr(expr, &q.prefixes)),
                })
                .collect();
            out.push_str(&rendered.join(" "));
        }
    }
    out.push_str("\nWHERE {\n");
    for p in &q.patterns {
        let pred = match &p.predicate {
            PTerm::Term(RdfTerm::Iri(i)) if i == RDF_TYPE => "a".to_string(),
            other => render_pterm(other, &q.prefixes),
        };
        let obj = match &p.object {
            PTerm::Term(RdfTerm::Iri(i)) if i == RDF_TYPE => format!("<{RDF_TYPE}>"),
            other => render_pterm(other, &q.prefixes),
        };
        out.push_str(&format!("  {} {pred} {obj} .\n", render_pterm(&p.subject, &q.prefixes)));
    }
    for f in &q.filters {
        out.push_str(&format!("  FILTER({})\n", render_expr(f, &q.prefixes)));
    }
    out.push('}');
    if !q.group_by.is_empty() {
        out.push_str(" GROUP BY ");
        out.push_str(&q.group_by.iter().map(|e| render_expr(e, &q.prefixes)).collect::<Vec<_>>().join(" "));
    }
    if !q.order_by.is_empty() {
        out.push_str(" ORDER BY ");
        let keys: Vec<String> = q
            .order_by
            .iter()
            .map(|k| {
                let e = render_expr(&k.expr, &q.prefixes);
                if k.descending {
                    format!("DESC({e})")
                } else {
                    e
                }
            })
            .collect();
        out.push_str(&keys.join(" "));
    }
    if let Some(l) = q.limit {
        out.push_str(&format!(" LIMIT {l}"));
    }
    if let Some(o) = q.offset {
        out.push_str(&format!(" OFFSET {o}"));
    }
    out.push('\n');
    out
}
