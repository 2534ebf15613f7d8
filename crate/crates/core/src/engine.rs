//! A small in-memory relational engine: typed tables loaded from CSV and an
//! evaluator for the select-project-join SQL produced by this crate.
//!
//! Grammar:
//!
//! ```text
//! query   := SELECT ( '*' | item (',' item)* ) FROM source (',' source)* [ WHERE cond (AND cond)* ]
//! item    := [ident '.'] ident [ [AS] ident ]
//! source  := ident [ [AS] ident ] | '(' query ')' [AS] ident
//! cond    := operand op operand        op := = | <> | != | < | <= | > | >=
//! operand := [ident '.'] ident | number | 'string'
//! ```
//!
//! Identifiers and keywords are case-insensitive; values are case-sensitive.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{NaiveDate, NaiveDateTime};
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("SQL parse error at offset {position}: {message}")]
    Parse { position: usize, message: String },
    #[error("unknown table {0}")]
    UnknownTable(String),
    #[error("unknown column {0}")]
    UnknownColumn(String),
    #[error("ambiguous column {0}")]
    AmbiguousColumn(String),
    #[error("duplicate table {0}")]
    DuplicateTable(String),
    #[error("{table}: row has {found} values, expected {expected}")]
    RowWidth {
        table: String,
        expected: usize,
        found: usize,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("{table}: CSV header {found:?} does not match schema columns {expected:?}")]
    HeaderMismatch {
        table: String,
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("{table}, line {line}, column {column}: cannot read '{value}' as {expected}")]
    Coercion {
        table: String,
        line: usize,
        column: String,
        value: String,
        expected: ColumnType,
    },
    #[error("schema: {0}")]
    Schema(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    String,
    Integer,
    Decimal,
    #[serde(alias = "timestamp")]
    Datetime,
}

impl fmt::Display for ColumnType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ColumnType::String => "string",
            ColumnType::Integer => "integer",
            ColumnType::Decimal => "decimal",
            ColumnType::Datetime => "datetime",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Value {
    Null,
    Int(i64),
    /// Keeps the scale it was read with, so `12.00` prints as `12.00`.
    Decimal(Decimal),
    Str(String),
    /// Canonical `YYYY-MM-DDTHH:MM:SS[.fff]`.
    DateTime(String),
}

impl Value {
    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    pub fn parse(ty: ColumnType, text: &str) -> Option<Value> {
        match ty {
            ColumnType::String => Some(Value::Str(text.to_string())),
            ColumnType::Integer => text.trim().parse().ok().map(Value::Int),
            ColumnType::Decimal => Decimal::from_str(text.trim()).ok().map(Value::Decimal),
            ColumnType::Datetime => canonical_datetime(text.trim()).map(Value::DateTime),
        }
    }

    fn numeric(&self) -> Option<Decimal> {
        match self {
            Value::Int(i) => Some(Decimal::from(*i)),
            Value::Decimal(d) => Some(*d),
            _ => None,
        }
    }

    fn key(&self) -> Option<Key> {
        match self {
            Value::Null => None,
            Value::Int(_) | Value::Decimal(_) => self.numeric().map(|d| Key::Num(d.normalize())),
            Value::Str(s) => Some(Key::Str(s.clone())),
            Value::DateTime(s) => Some(Key::Dt(s.clone())),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => f.write_str("NULL"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Decimal(d) => write!(f, "{d}"),
            Value::Str(s) | Value::DateTime(s) => f.write_str(s),
        }
    }
}

/// Accepts `YYYY-MM-DD`, `YYYY-MM-DD HH:MM:SS` and the `T`-separated form.
pub fn canonical_datetime(s: &str) -> Option<String> {
    const FORMATS: [&str; 2] = ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"];
    for fmt in FORMATS {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.format("%Y-%m-%dT%H:%M:%S%.f").to_string());
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .map(|d| format!("{}T00:00:00", d.format("%Y-%m-%d")))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Key {
    Num(Decimal),
    Str(String),
    Dt(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Column {
    pub name: String,
    pub ty: ColumnType,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<Column>,
    rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[(&str, ColumnType)]) -> Self {
        Table {
            name: name.into(),
            columns: columns
                .iter()
                .map(|(n, ty)| Column { name: n.to_string(), ty: *ty })
                .collect(),
            rows: Vec::new(),
        }
    }

    pub fn rows(&self) -> &[Vec<Value>] {
        &self.rows
    }

    /// Appends a row; values must be NULL or match the column types.
    pub fn push(&mut self, row: Vec<Value>) -> Result<(), EngineError> {
        if row.len() != self.columns.len() {
            return Err(EngineError::RowWidth {
                table: self.name.clone(),
                expected: self.columns.len(),
                found: row.len(),
            });
        }
        for (v, c) in row.iter().zip(&self.columns) {
            let ok = matches!(
                (v, c.ty),
                (Value::Null, _)
                    | (Value::Int(_), ColumnType::Integer)
                    | (Value::Decimal(_), ColumnType::Decimal)
                    | (Value::Str(_), ColumnType::String)
                    | (Value::DateTime(_), ColumnType::Datetime)
            );
            if !ok {
                return Err(EngineError::Coercion {
                    table: self.name.clone(),
                    line: self.rows.len() + 1,
                    column: c.name.clone(),
                    value: v.to_string(),
                    expected: c.ty,
                });
            }
        }
        self.rows.push(row);
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Database {
    tables: BTreeMap<String, Table>,
}

impl Database {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_table(&mut self, table: Table) -> Result<(), EngineError> {
        let key = table.name.to_ascii_lowercase();
        if self.tables.contains_key(&key) {
            return Err(EngineError::DuplicateTable(table.name));
        }
        self.tables.insert(key, table);
        Ok(())
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.get(&name.to_ascii_lowercase())
    }

    pub fn tables(&self) -> impl Iterator<Item = &Table> {
        self.tables.values()
    }

    pub fn total_rows(&self) -> usize {
        self.tables.values().map(|t| t.rows.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub tables: Vec<TableSchema>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableSchema {
    pub name: String,
    /// CSV file relative to the schema; defaults to `<name>.csv`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    pub columns: Vec<ColumnSchema>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnSchema {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: ColumnType,
}

impl Schema {
    pub fn parse(text: &str) -> Result<Schema, EngineError> {
        serde_json::from_str(text).map_err(|e| EngineError::Schema(e.to_string()))
    }
}

/// Reads a schema file and the CSV files next to it.
pub fn load_database(schema_path: &Path) -> Result<Database, EngineError> {
    let text = std::fs::read_to_string(schema_path).map_err(|source| EngineError::Io {
        path: schema_path.to_path_buf(),
        source,
    })?;
    let schema = Schema::parse(&text)?;
    load_csv(&schema, schema_path.parent().unwrap_or(Path::new(".")))
}

/// Loads one CSV file per schema table from `dir`. Empty fields are NULL.
pub fn load_csv(schema: &Schema, dir: &Path) -> Result<Database, EngineError> {
    let mut db = Database::new();
    for ts in &schema.tables {
        let path = dir.join(ts.file.clone().unwrap_or_else(|| format!("{}.csv", ts.name)));
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(&path)
            .map_err(|e| csv_error(&path, e))?;
        let header: Vec<String> = reader
            .headers()
            .map_err(|e| csv_error(&path, e))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let expected: Vec<String> = ts.columns.iter().map(|c| c.name.clone()).collect();
        let matches = header.len() == expected.len()
            && header.iter().zip(&expected).all(|(h, e)| h.eq_ignore_ascii_case(e));
        if !matches {
            return Err(EngineError::HeaderMismatch {
                table: ts.name.clone(),
                expected,
                found: header,
            });
        }
        let cols: Vec<(&str, ColumnType)> = ts.columns.iter().map(|c| (c.name.as_str(), c.ty)).collect();
        let mut table = Table::new(&ts.name, &cols);
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| csv_error(&path, e))?;
            let line = i + 2;
            let mut row = Vec::with_capacity(cols.len());
            for (field, c) in rec.iter().zip(&ts.columns) {
                if field.is_empty() {
                    row.push(Value::Null);
                    continue;
                }
                match Value::parse(c.ty, field) {
                    Some(v) => row.push(v),
                    None => {
                        return Err(EngineError::Coercion {
                            table: ts.name.clone(),
                            line,
                            column: c.name.clone(),
                            value: field.to_string(),
                            expected: c.ty,
                        })
                    }
                }
            }
            table.push(row)?;
        }
        db.add_table(table)?;
    }
    Ok(db)
}

fn csv_error(path: &Path, e: csv::Error) -> EngineError {
    match e.kind() {
        csv::ErrorKind::Io(_) => {
            let kind = match e.into_kind() {
                csv::ErrorKind::Io(io) => io,
                _ => unreachable!(),
            };
            EngineError::Io {
                path: path.to_path_buf(),
                source: kind,
            }
        }
        _ => EngineError::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnRef {
    pub qualifier: Option<String>,
    pub name: String,
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.qualifier {
            Some(q) => write!(f, "{q}.{}", self.name),
            None => f.write_str(&self.name),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowSet {
    pub columns: Vec<ColumnRef>,
    pub rows: Vec<Vec<Value>>,
}

impl RowSet {
    /// Position of a column; names and qualifiers match case-insensitively.
    pub fn index_of(&self, qualifier: Option<&str>, name: &str) -> Result<usize, EngineError> {
        let mut found = None;
        for (i, c) in self.columns.iter().enumerate() {
            let q_ok = match (qualifier, &c.qualifier) {
                (None, _) => true,
                (Some(q), Some(cq)) => q.eq_ignore_ascii_case(cq),
                (Some(_), None) => false,
            };
            if q_ok && c.name.eq_ignore_ascii_case(name) {
                if found.is_some() {
                    return Err(EngineError::AmbiguousColumn(show_ref(qualifier, name)));
                }
                found = Some(i);
            }
        }
        found.ok_or_else(|| EngineError::UnknownColumn(show_ref(qualifier, name)))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

fn show_ref(q: Option<&str>, name: &str) -> String {
    match q {
        Some(q) => format!("{q}.{name}"),
        None => name.to_string(),
    }
}

// ---- parsing ----

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(String),
    Str(String),
    Sym(&'static str),
}

fn tokenize(sql: &str) -> Result<Vec<(usize, Tok)>, EngineError> {
    let chars: Vec<(usize, char)> = sql.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |position: usize, message: &str| EngineError::Parse {
        position,
        message: message.to_string(),
    };
    while i < chars.len() {
        let (pos, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].1.is_alphanumeric() || chars[i].1 == '_' || chars[i].1 == '$') {
                i += 1;
            }
            let s: String = chars[start..i].iter().map(|(_, c)| c).collect();
            out.push((pos, Tok::Ident(s)));
        } else if c == '"' {
            i += 1;
            let mut s = String::new();
            loop {
                match chars.get(i) {
                    Some((_, '"')) if chars.get(i + 1).map(|x| x.1) == Some('"') => {
                        s.push('"');
                        i += 2;
                    }
                    Some((_, '"')) => {
                        i += 1;
                        break;
                    }
                    Some((_, c)) => {
                        s.push(*c);
                        i += 1;
                    }
                    None => return Err(err(pos, "unterminated quoted identifier")),
                }
            }
            out.push((pos, Tok::Ident(s)));
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].1.is_ascii_digit() {
                i += 1;
            }
            if i + 1 < chars.len() && chars[i].1 == '.' && chars[i + 1].1.is_ascii_digit() {
                i += 1;
                while i < chars.len() && chars[i].1.is_ascii_digit() {
                    i += 1;
                }
            }
            let s: String = chars[start..i].iter().map(|(_, c)| c).collect();
            out.push((pos, Tok::Num(s)));
        } else if c == '\'' {
            i += 1;
            let mut s = String::new();
            loop {
                match chars.get(i) {
                    Some((_, '\'')) if chars.get(i + 1).map(|x| x.1) == Some('\'') => {
                        s.push('\'');
                        i += 2;
                    }
                    Some((_, '\'')) => {
                        i += 1;
                        break;
                    }
                    Some((_, c)) => {
                        s.push(*c);
                        i += 1;
                    }
                    None => return Err(err(pos, "unterminated string literal")),
                }
            }
            out.push((pos, Tok::Str(s)));
        } else {
            let next = chars.get(i + 1).map(|x| x.1);
            let (sym, len) = match (c, next) {
                ('<', Some('=')) => ("<=", 2),
                ('>', Some('=')) => (">=", 2),
                ('<', Some('>')) => ("<>", 2),
                ('!', Some('=')) => ("<>", 2),
                ('<', _) => ("<", 1),
                ('>', _) => (">", 1),
                ('=', _) => ("=", 1),
                (',', _) => (",", 1),
                ('(', _) => ("(", 1),
                (')', _) => (")", 1),
                ('.', _) => (".", 1),
                ('*', _) => ("*", 1),
                ('-', _) => ("-", 1),
                (';', _) => (";", 1),
                _ => return Err(err(pos, &format!("unexpected character '{c}'"))),
            };
            out.push((pos, Tok::Sym(sym)));
            i += len;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Op {
    Lt,
    Le,
    Eq,
    Ne,
    Ge,
    Gt,
}

impl Op {
    fn holds(self, ord: Ordering) -> bool {
        match self {
            Op::Lt => ord == Ordering::Less,
            Op::Le => ord != Ordering::Greater,
            Op::Eq => ord == Ordering::Equal,
            Op::Ne => ord != Ordering::Equal,
            Op::Ge => ord != Ordering::Less,
            Op::Gt => ord == Ordering::Greater,
        }
    }

    fn flip(self) -> Op {
        match self {
            Op::Lt => Op::Gt,
            Op::Le => Op::Ge,
            Op::Ge => Op::Le,
            Op::Gt => Op::Lt,
            other => other,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Lit {
    Num(Decimal),
    Str(String),
}

#[derive(Debug, Clone, PartialEq)]
enum Operand {
    Col(Option<String>, String),
    Lit(Lit),
}

#[derive(Debug, Clone, PartialEq)]
struct Cond {
    left: Operand,
    op: Op,
    right: Operand,
}

#[derive(Debug, Clone, PartialEq)]
enum Source {
    Table(String),
    Sub(Box<Select>),
}

#[derive(Debug, Clone, PartialEq)]
struct FromItem {
    source: Source,
    alias: Option<String>,
}

/// Qualifier, column and alias of a projected column.
type SelectItem = (Option<String>, String, Option<String>);

#[derive(Debug, Clone, PartialEq)]
struct Select {
    /// `None` is `SELECT *`.
    items: Option<Vec<SelectItem>>,
    from: Vec<FromItem>,
    conds: Vec<Cond>,
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    i: usize,
    end: usize,
}

const RESERVED: [&str; 5] = ["SELECT", "FROM", "WHERE", "AS", "AND"];

impl Parser {
    fn pos(&self) -> usize {
        self.toks.get(self.i).map_or(self.end, |t| t.0)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, EngineError> {
        Err(EngineError::Parse {
            position: self.pos(),
            message: message.into(),
        })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.i).map(|t| &t.1)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s.eq_ignore_ascii_case(kw))
    }

    fn kw(&mut self, kw: &str) -> Result<(), EngineError> {
        if self.is_kw(kw) {
            self.i += 1;
            Ok(())
        } else {
            self.err(format!("expected {kw}"))
        }
    }

    fn sym(&mut self, s: &str) -> bool {
        if self.peek() == Some(&Tok::Sym(match s {
            "," => ",",
            "(" => "(",
            ")" => ")",
            "." => ".",
            "*" => "*",
            "-" => "-",
            ";" => ";",
            _ => return false,
        })) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Result<String, EngineError> {
        match self.peek() {
            Some(Tok::Ident(s)) if !RESERVED.iter().any(|k| s.eq_ignore_ascii_case(k)) => {
                let s = s.clone();
                self.i += 1;
                Ok(s)
            }
            _ => self.err("expected an identifier"),
        }
    }

    fn alias(&mut self) -> Result<Option<String>, EngineError> {
        if self.is_kw("AS") {
            self.i += 1;
            return self.ident().map(Some);
        }
        match self.peek() {
            Some(Tok::Ident(s)) if !RESERVED.iter().any(|k| s.eq_ignore_ascii_case(k)) => self.ident().map(Some),
            _ => Ok(None),
        }
    }

    fn select(&mut self) -> Result<Select, EngineError> {
        self.kw("SELECT")?;
        let items = if self.sym("*") {
            None
        } else {
            let mut items = Vec::new();
            loop {
                let first = self.ident()?;
                let (q, name) = if self.sym(".") {
                    (Some(first), self.ident()?)
                } else {
                    (None, first)
                };
                let alias = self.alias()?;
                items.push((q, name, alias));
                if !self.sym(",") {
                    break;
                }
            }
            Some(items)
        };
        self.kw("FROM")?;
        let mut from = Vec::new();
        loop {
            if self.sym("(") {
                let sub = self.select()?;
                if !self.sym(")") {
                    return self.err("expected ')'");
                }
                let alias = self.alias()?;
                if alias.is_none() {
                    return self.err("a subquery in FROM needs an alias");
                }
                from.push(FromItem {
                    source: Source::Sub(Box::new(sub)),
                    alias,
                });
            } else {
                let name = self.ident()?;
                let alias = self.alias()?;
                from.push(FromItem {
                    source: Source::Table(name),
                    alias,
                });
            }
            if !self.sym(",") {
                break;
            }
        }
        let mut conds = Vec::new();
        if self.is_kw("WHERE") {
            self.i += 1;
            loop {
                let left = self.operand()?;
                let op = match self.peek() {
                    Some(Tok::Sym("=")) => Op::Eq,
                    Some(Tok::Sym("<>")) => Op::Ne,
                    Some(Tok::Sym("<")) => Op::Lt,
                    Some(Tok::Sym("<=")) => Op::Le,
                    Some(Tok::Sym(">")) => Op::Gt,
                    Some(Tok::Sym(">=")) => Op::Ge,
                    _ => return self.err("expected a comparison operator"),
                };
                self.i += 1;
                let right = self.operand()?;
                conds.push(Cond { left, op, right });
                if self.is_kw("AND") {
                    self.i += 1;
                } else {
                    break;
                }
            }
        }
        Ok(Select { items, from, conds })
    }

    fn operand(&mut self) -> Result<Operand, EngineError> {
        let negative = self.sym("-");
        match self.peek().cloned() {
            Some(Tok::Num(n)) => {
                self.i += 1;
                let text = if negative { format!("-{n}") } else { n };
                match Decimal::from_str(&text) {
                    Ok(d) => Ok(Operand::Lit(Lit::Num(d))),
                    Err(_) => self.err(format!("number out of range: {text}")),
                }
            }
            _ if negative => self.err("expected a number after '-'"),
            Some(Tok::Str(s)) => {
                self.i += 1;
                Ok(Operand::Lit(Lit::Str(s)))
            }
            Some(Tok::Ident(_)) => {
                let first = self.ident()?;
                if self.sym(".") {
                    Ok(Operand::Col(Some(first), self.ident()?))
                } else {
                    Ok(Operand::Col(None, first))
                }
            }
            _ => self.err("expected a column, number or string"),
        }
    }
}

fn parse(sql: &str) -> Result<Select, EngineError> {
    let mut p = Parser {
        toks: tokenize(sql)?,
        i: 0,
        end: sql.len(),
    };
    let sel = p.select()?;
    p.sym(";");
    if p.i != p.toks.len() {
        return p.err("unexpected trailing input");
    }
    Ok(sel)
}

/// Checks that `sql` is inside the supported grammar.
pub fn check_sql(sql: &str) -> Result<(), EngineError> {
    parse(sql).map(|_| ())
}

// ---- evaluation ----

fn compare_values(a: &Value, op: Op, b: &Value) -> bool {
    let ord = match (a, b) {
        (Value::Null, _) | (_, Value::Null) => return false,
        (Value::Str(x), Value::Str(y)) | (Value::DateTime(x), Value::DateTime(y)) => x.cmp(y),
        _ => match (a.numeric(), b.numeric()) {
            (Some(x), Some(y)) => x.cmp(&y),
            _ => return false,
        },
    };
    op.holds(ord)
}

fn compare_literal(v: &Value, op: Op, lit: &Lit) -> bool {
    match (v, lit) {
        (Value::Null, _) => false,
        (Value::Int(_) | Value::Decimal(_), Lit::Num(n)) => op.holds(v.numeric().unwrap().cmp(n)),
        // numbers against text only support (in)equality on the printed form
        (Value::Int(_) | Value::Decimal(_), Lit::Str(s)) => match op {
            Op::Eq => v.to_string() == *s,
            Op::Ne => v.to_string() != *s,
            _ => false,
        },
        (Value::Str(x), Lit::Str(s)) => op.holds(x.as_str().cmp(s.as_str())),
        (Value::DateTime(x), Lit::Str(s)) => {
            let norm = canonical_datetime(s).unwrap_or_else(|| s.replacen(' ', "T", 1));
            op.holds(x.as_str().cmp(norm.as_str()))
        }
        _ => false,
    }
}

fn literal_cmp(a: &Lit, op: Op, b: &Lit) -> bool {
    match (a, b) {
        (Lit::Num(x), Lit::Num(y)) => op.holds(x.cmp(y)),
        (Lit::Str(x), Lit::Str(y)) => op.holds(x.cmp(y)),
        _ => false,
    }
}

#[derive(Debug, Clone, Copy)]
enum Resolved<'a> {
    Col(usize, usize),
    Lit(&'a Lit),
}

struct Part {
    columns: Vec<ColumnRef>,
    rows: Vec<Vec<Value>>,
}

fn resolve<'a>(parts: &[Part], o: &'a Operand) -> Result<Resolved<'a>, EngineError> {
    let (q, name) = match o {
        Operand::Lit(l) => return Ok(Resolved::Lit(l)),
        Operand::Col(q, n) => (q.as_deref(), n.as_str()),
    };
    let mut found = None;
    for (pi, p) in parts.iter().enumerate() {
        for (ci, c) in p.columns.iter().enumerate() {
            let q_ok = match (q, &c.qualifier) {
                (None, _) => true,
                (Some(q), Some(cq)) => q.eq_ignore_ascii_case(cq),
                (Some(_), None) => false,
            };
            if q_ok && c.name.eq_ignore_ascii_case(name) {
                if found.is_some() {
                    return Err(EngineError::AmbiguousColumn(show_ref(q, name)));
                }
                found = Some((pi, ci));
            }
        }
    }
    found
        .map(|(p, c)| Resolved::Col(p, c))
        .ok_or_else(|| EngineError::UnknownColumn(show_ref(q, name)))
}

fn eval_source(item: &FromItem, db: &Database) -> Result<Part, EngineError> {
    match &item.source {
        Source::Table(name) => {
            let t = db.table(name).ok_or_else(|| EngineError::UnknownTable(name.clone()))?;
            let q = item.alias.clone().unwrap_or_else(|| name.clone());
            Ok(Part {
                columns: t
                    .columns
                    .iter()
                    .map(|c| ColumnRef {
                        qualifier: Some(q.clone()),
                        name: c.name.clone(),
                    })
                    .collect(),
                rows: t.rows.clone(),
            })
        }
        Source::Sub(sel) => {
            let rs = eval_select(sel, db)?;
            Ok(Part {
                columns: rs
                    .columns
                    .into_iter()
                    .map(|c| ColumnRef {
                        qualifier: item.alias.clone(),
                        name: c.name,
                    })
                    .collect(),
                rows: rs.rows,
            })
        }
    }
}

struct Check<'a> {
    left: Resolved<'a>,
    op: Op,
    right: Resolved<'a>,
}

impl Check<'_> {
    fn parts(&self) -> Vec<usize> {
        let mut v = Vec::new();
        for r in [self.left, self.right] {
            if let Resolved::Col(p, _) = r {
                if !v.contains(&p) {
                    v.push(p);
                }
            }
        }
        v
    }

    /// Evaluates against a row laid out with `offsets[part]`.
    fn eval(&self, row: &[Value], offsets: &[usize]) -> bool {
        match (self.left, self.right) {
            (Resolved::Col(p1, c1), Resolved::Col(p2, c2)) => {
                compare_values(&row[offsets[p1] + c1], self.op, &row[offsets[p2] + c2])
            }
            (Resolved::Col(p, c), Resolved::Lit(l)) => compare_literal(&row[offsets[p] + c], self.op, l),
            (Resolved::Lit(l), Resolved::Col(p, c)) => compare_literal(&row[offsets[p] + c], self.op.flip(), l),
            (Resolved::Lit(a), Resolved::Lit(b)) => literal_cmp(a, self.op, b),
        }
    }
}

fn eval_select(sel: &Select, db: &Database) -> Result<RowSet, EngineError> {
    let mut parts = sel
        .from
        .iter()
        .map(|f| eval_source(f, db))
        .collect::<Result<Vec<_>, _>>()?;
    let n = parts.len();

    let mut checks = Vec::with_capacity(sel.conds.len());
    for c in &sel.conds {
        checks.push(Check {
            left: resolve(&parts, &c.left)?,
            op: c.op,
            right: resolve(&parts, &c.right)?,
        });
    }
    let mut applied = vec![false; checks.len()];

    // constant and single-source conditions first
    for (k, ch) in checks.iter().enumerate() {
        let ps = ch.parts();
        if ps.is_empty() {
            applied[k] = true;
            if !ch.eval(&[], &[]) {
                for p in parts.iter_mut() {
                    p.rows.clear();
                }
            }
        } else if ps.len() == 1 {
            applied[k] = true;
            let p = ps[0];
            let mut offsets = vec![0; n];
            offsets[p] = 0;
            parts[p].rows.retain(|r| ch.eval(r, &offsets));
        }
    }

    // greedy join: grow from the first source, preferring connected ones
    let mut joined = vec![0usize];
    let mut offsets = vec![usize::MAX; n];
    offsets[0] = 0;
    let mut width = parts[0].columns.len();
    let mut rows = std::mem::take(&mut parts[0].rows);

    while joined.len() < n {
        let is_edge = |ch: &Check, candidate: usize, joined: &[usize]| -> Option<(usize, usize)> {
            if ch.op != Op::Eq {
                return None;
            }
            match (ch.left, ch.right) {
                (Resolved::Col(p1, c1), Resolved::Col(p2, c2)) => {
                    if p2 == candidate && joined.contains(&p1) {
                        Some((offsets[p1] + c1, c2))
                    } else if p1 == candidate && joined.contains(&p2) {
                        Some((offsets[p2] + c2, c1))
                    } else {
                        None
                    }
                }
                _ => None,
            }
        };
        let remaining: Vec<usize> = (0..n).filter(|p| !joined.contains(p)).collect();
        let next = remaining
            .iter()
            .copied()
            .find(|&cand| {
                checks
                    .iter()
                    .enumerate()
                    .any(|(k, ch)| !applied[k] && is_edge(ch, cand, &joined).is_some())
            })
            .unwrap_or(remaining[0]);

        let mut keys: Vec<(usize, usize)> = Vec::new();
        for (k, ch) in checks.iter().enumerate() {
            if applied[k] {
                continue;
            }
            if let Some(pair) = is_edge(ch, next, &joined) {
                keys.push(pair);
                applied[k] = true;
            }
        }

        let right = std::mem::take(&mut parts[next].rows);
        let mut out = Vec::new();
        if keys.is_empty() {
            for l in &rows {
                for r in &right {
                    let mut row = Vec::with_capacity(width + r.len());
                    row.extend_from_slice(l);
                    row.extend_from_slice(r);
                    out.push(row);
                }
            }
        } else {
            let mut index: HashMap<Vec<Key>, Vec<usize>> = HashMap::new();
            'rows: for (i, r) in right.iter().enumerate() {
                let mut key = Vec::with_capacity(keys.len());
                for &(_, rc) in &keys {
                    match r[rc].key() {
                        Some(k) => key.push(k),
                        None => continue 'rows,
                    }
                }
                index.entry(key).or_default().push(i);
            }
            'left: for l in &rows {
                let mut key = Vec::with_capacity(keys.len());
                for &(lc, _) in &keys {
                    match l[lc].key() {
                        Some(k) => key.push(k),
                        None => continue 'left,
                    }
                }
                if let Some(matches) = index.get(&key) {
                    for &i in matches {
                        let mut row = Vec::with_capacity(width + right[i].len());
                        row.extend_from_slice(l);
                        row.extend_from_slice(&right[i]);
                        out.push(row);
                    }
                }
            }
        }
        offsets[next] = width;
        width += parts[next].columns.len();
        joined.push(next);
        rows = out;

        for (k, ch) in checks.iter().enumerate() {
            if !applied[k] && ch.parts().iter().all(|p| joined.contains(p)) {
                applied[k] = true;
                rows.retain(|r| ch.eval(r, &offsets));
            }
        }
    }

    // back to FROM order
    let columns: Vec<ColumnRef> = parts.iter().flat_map(|p| p.columns.iter().cloned()).collect();
    let identity = joined.iter().enumerate().all(|(i, &p)| i == p);
    if !identity {
        let mut perm = Vec::with_capacity(width);
        for (p, part) in parts.iter().enumerate() {
            perm.extend((0..part.columns.len()).map(|c| offsets[p] + c));
        }
        rows = rows
            .into_iter()
            .map(|r| perm.iter().map(|&i| r[i].clone()).collect())
            .collect();
    }
    let all = RowSet { columns, rows };

    match &sel.items {
        None => Ok(all),
        Some(items) => {
            let mut idx = Vec::with_capacity(items.len());
            let mut columns = Vec::with_capacity(items.len());
            for (q, name, alias) in items {
                idx.push(all.index_of(q.as_deref(), name)?);
                columns.push(ColumnRef {
                    qualifier: None,
                    name: alias.clone().unwrap_or_else(|| name.clone()),
                });
            }
            let rows = all
                .rows
                .into_iter()
                .map(|r| idx.iter().map(|&i| r[i].clone()).collect())
                .collect();
            Ok(RowSet { columns, rows })
        }
    }
}

/// Evaluates a query with bag semantics.
pub fn eval_sql(sql: &str, db: &Database) -> Result<RowSet, EngineError> {
    eval_select(&parse(sql)?, db)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn figure_db() -> Database {
        let mut db = Database::new();
        let mut c = Table::new("customers", &[("C_ID", ColumnType::Integer), ("C_NAME", ColumnType::String)]);
        c.push(vec![Value::Int(3211), Value::Str("Alice".into())]).unwrap();
        c.push(vec![Value::Int(3253), Value::Str("Bob".into())]).unwrap();
        db.add_table(c).unwrap();
        let mut o = Table::new(
            "orders",
            &[
                ("O_ID", ColumnType::Integer),
                ("C_ID", ColumnType::Integer),
                ("P_ID", ColumnType::Integer),
                ("QUANTITY", ColumnType::Integer),
            ],
        );
        for r in [[4301, 3211, 2532, 1], [4302, 3211, 2533, 1], [4303, 3253, 2532, 3]] {
            o.push(r.iter().map(|&v| Value::Int(v)).collect()).unwrap();
        }
        db.add_table(o).unwrap();
        db
    }

    #[test]
    fn projection_keeps_select_order() {
        let rs = eval_sql("SELECT C_NAME, c_id FROM Customers", &figure_db()).unwrap();
        assert_eq!(rs.columns.iter().map(|c| c.name.as_str()).collect::<Vec<_>>(), ["C_NAME", "c_id"]);
        assert_eq!(rs.rows[0], [Value::Str("Alice".into()), Value::Int(3211)]);
    }

    #[test]
    fn empty_filter_result() {
        let rs = eval_sql("SELECT * FROM customers WHERE C_ID = 9999", &figure_db()).unwrap();
        assert!(rs.is_empty());
        assert_eq!(rs.columns.len(), 2);
    }

    #[test]
    fn star_over_subqueries_is_qualified() {
        let rs = eval_sql(
            "SELECT * FROM (SELECT C_ID, C_NAME FROM customers) AS parent, (SELECT * FROM orders) AS child WHERE child.C_ID=parent.C_ID",
            &figure_db(),
        )
        .unwrap();
        assert_eq!(rs.len(), 3);
        assert_eq!(rs.columns.len(), 6);
        assert_eq!(rs.index_of(Some("parent"), "C_ID").unwrap(), 0);
        assert_eq!(rs.index_of(Some("CHILD"), "c_id").unwrap(), 3);
        assert!(matches!(rs.index_of(None, "C_ID"), Err(EngineError::AmbiguousColumn(_))));
    }

    #[test]
    fn join_order_does_not_change_columns() {
        // the second source is joined to the third before the first
        let db = figure_db();
        let rs = eval_sql(
            "SELECT * FROM customers AS a, orders AS b, orders AS c WHERE b.O_ID=c.O_ID AND a.C_ID=c.C_ID AND b.QUANTITY > 1",
            &db,
        )
        .unwrap();
        assert_eq!(rs.len(), 1);
        assert_eq!(rs.rows[0][0], Value::Int(3253));
        assert_eq!(rs.rows[0][2], Value::Int(4303));
    }

    #[test]
    fn literal_comparisons() {
        let mut db = Database::new();
        let mut t = Table::new(
            "t",
            &[("I", ColumnType::Integer), ("D", ColumnType::Decimal), ("T", ColumnType::Datetime)],
        );
        t.push(vec![
            Value::Int(5),
            Value::Decimal(Decimal::from_str("12.00").unwrap()),
            Value::DateTime("1980-01-01T00:00:00".into()),
        ])
        .unwrap();
        t.push(vec![Value::Null, Value::Null, Value::Null]).unwrap();
        db.add_table(t).unwrap();
        let count = |w: &str| eval_sql(&format!("SELECT * FROM t WHERE {w}"), &db).unwrap().len();
        assert_eq!(count("I = 5"), 1);
        assert_eq!(count("I = '5'"), 1);
        assert_eq!(count("I = '05'"), 0);
        assert_eq!(count("I < '6'"), 0);
        assert_eq!(count("D = 12"), 1);
        assert_eq!(count("D > 11.5"), 1);
        assert_eq!(count("D = '12.00'"), 1);
        assert_eq!(count("T > '1979-12-31 00:00:00'"), 1);
        assert_eq!(count("T > '1980-01-01'"), 0);
        assert_eq!(count("T >= '1980-01-01'"), 1);
        assert_eq!(count("I <> 4"), 1);
        assert_eq!(count("-1 < I"), 1);
        assert_eq!(count("1 = 2"), 0);
    }

    #[test]
    fn null_never_joins() {
        let mut db = Database::new();
        let mut a = Table::new("a", &[("X", ColumnType::Integer)]);
        a.push(vec![Value::Null]).unwrap();
        a.push(vec![Value::Int(1)]).unwrap();
        db.add_table(a.clone()).unwrap();
        let mut b = a;
        b.name = "b".into();
        db.add_table(b).unwrap();
        let rs = eval_sql("SELECT a.X FROM a, b WHERE a.X=b.X", &db).unwrap();
        assert_eq!(rs.rows, vec![vec![Value::Int(1)]]);
    }

    #[test]
    fn errors() {
        let db = figure_db();
        assert!(matches!(eval_sql("SELECT * FROM nope", &db), Err(EngineError::UnknownTable(_))));
        assert!(matches!(eval_sql("SELECT X FROM customers", &db), Err(EngineError::UnknownColumn(_))));
        assert!(matches!(
            eval_sql("SELECT C_ID FROM customers, orders", &db),
            Err(EngineError::AmbiguousColumn(_))
        ));
        assert!(matches!(eval_sql("SELECT FROM customers", &db), Err(EngineError::Parse { .. })));
        assert!(matches!(
            eval_sql("SELECT * FROM (SELECT * FROM customers)", &db),
            Err(EngineError::Parse { .. })
        ));
        assert!(matches!(eval_sql("SELECT * FROM customers WHERE C_ID = 1 OR", &db), Err(EngineError::Parse { .. })));
    }

    #[test]
    fn csv_loading() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("p.csv"), "P_ID,P_PRICE,WHEN\n1,12.00,2020-01-02\n2,,\n").unwrap();
        std::fs::write(dir.path().join("e.csv"), "A\n").unwrap();
        let schema = Schema::parse(
            r#"{"tables":[
                {"name":"p","columns":[{"name":"P_ID","type":"integer"},{"name":"P_PRICE","type":"decimal"},{"name":"WHEN","type":"datetime"}]},
                {"name":"e","columns":[{"name":"A","type":"string"}]}]}"#,
        )
        .unwrap();
        let db = load_csv(&schema, dir.path()).unwrap();
        let p = db.table("P").unwrap();
        assert_eq!(p.rows().len(), 2);
        assert_eq!(p.rows()[0][1].to_string(), "12.00");
        assert_eq!(p.rows()[0][2], Value::DateTime("2020-01-02T00:00:00".into()));
        assert!(p.rows()[1][1].is_null());
        assert!(db.table("e").unwrap().rows().is_empty());

        std::fs::write(dir.path().join("p.csv"), "P_ID,P_PRICE,WHEN\n1,12.00,\nx,1,\n").unwrap();
        match load_csv(&schema, dir.path()) {
            Err(EngineError::Coercion { line, column, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(column, "P_ID");
            }
            other => panic!("{other:?}"),
        }
        std::fs::remove_file(dir.path().join("e.csv")).unwrap();
        assert!(matches!(load_csv(&schema, dir.path()), Err(EngineError::Coercion { .. } | EngineError::Io { .. })));
    }
}
