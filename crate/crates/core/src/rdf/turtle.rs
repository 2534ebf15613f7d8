//! Turtle subset reader and writer.
//!
//! Supported: `@prefix`/`PREFIX`, `@base`/`BASE`, IRIs, prefixed names,
//! labeled and anonymous blank nodes (with property lists), `;` and `,`
//! lists, short and long strings, language tags, `^^` datatypes, integers,
//! decimals, doubles, booleans and the `a` keyword. RDF collections are not.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use super::{Graph, Literal, RdfError, RdfTerm, Triple};
use super::{RDF_TYPE, XSD_BOOLEAN, XSD_DECIMAL, XSD_DOUBLE, XSD_INTEGER, XSD_STRING};

pub fn parse_turtle(text: &str) -> Result<Graph, RdfError> {
    let mut p = Parser {
        chars: text.chars().collect(),
        pos: 0,
        line: 1,
        col: 1,
        prefixes: BTreeMap::new(),
        base: None,
        bnodes: HashMap::new(),
        next_bnode: 0,
        graph: Graph::new(),
    };
    p.document()?;
    let mut graph = p.graph;
    graph.prefixes = p.prefixes;
    Ok(graph)
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
    line: usize,
    col: usize,
    prefixes: BTreeMap<String, String>,
    base: Option<String>,
    bnodes: HashMap<String, String>,
    next_bnode: usize,
    graph: Graph,
}

impl Parser {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn peek_at(&self, off: usize) -> Option<char> {
        self.chars.get(self.pos + off).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.get(self.pos).copied()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, RdfError> {
        Err(RdfError::Syntax {
            line: self.line,
            column: self.col,
            message: message.into(),
        })
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.bump();
            } else if c == '#' {
                while let Some(c) = self.bump() {
                    if c == '\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn expect(&mut self, c: char) -> Result<(), RdfError> {
        self.skip_ws();
        match self.peek() {
            Some(x) if x == c => {
                self.bump();
                Ok(())
            }
            Some(x) => self.err(format!("expected '{c}', found '{x}'")),
            None => self.err(format!("expected '{c}', found end of input")),
        }
    }

    fn looking_at_keyword(&self, kw: &str) -> bool {
        let n = kw.chars().count();
        let word: String = self.chars[self.pos..].iter().take(n).collect();
        word.eq_ignore_ascii_case(kw)
            && self
                .peek_at(n)
                .is_none_or(|c| c.is_whitespace() || c == '<' || c == '#')
    }

    fn fresh_bnode(&mut self) -> RdfTerm {
        let label = format!("b{}", self.next_bnode);
        self.next_bnode += 1;
        RdfTerm::BlankNode(label)
    }

    fn document(&mut self) -> Result<(), RdfError> {
        loop {
            self.skip_ws();
            match self.peek() {
                None => return Ok(()),
                Some('@') => self.at_directive()?,
                Some(_) if self.looking_at_keyword("PREFIX") => {
                    for _ in 0..6 {
                        self.bump();
                    }
                    self.prefix_decl()?;
                }
                Some(_) if self.looking_at_keyword("BASE") => {
                    for _ in 0..4 {
                        self.bump();
                    }
                    self.skip_ws();
                    let iri = self.iri_ref()?;
                    self.base = Some(iri);
                }
                Some(_) => {
                    self.triples()?;
                    self.expect('.')?;
                }
            }
        }
    }

    fn at_directive(&mut self) -> Result<(), RdfError> {
        self.bump();
        let word = self.word();
        match word.as_str() {
            "prefix" => {
                self.prefix_decl()?;
                self.expect('.')
            }
            "base" => {
                self.skip_ws();
                let iri = self.iri_ref()?;
                self.base = Some(iri);
                self.expect('.')
            }
            other => self.err(format!("unknown directive @{other}")),
        }
    }

    fn word(&mut self) -> String {
        let mut out = String::new();
        while let Some(c) = self.peek() {
            if c.is_alphanumeric() || c == '_' || c == '-' {
                out.push(c);
                self.bump();
            } else {
                break;
            }
        }
        out
    }

    fn prefix_decl(&mut self) -> Result<(), RdfError> {
        self.skip_ws();
        let mut prefix = String::new();
        while let Some(c) = self.peek() {
            if c == ':' {
                break;
            }
            if c.is_alphanumeric() || c == '_' || c == '-' || c == '.' {
                prefix.push(c);
                self.bump();
            } else {
                return self.err(format!("invalid character '{c}' in prefix name"));
            }
        }
        self.expect(':')?;
        self.skip_ws();
        let iri = self.iri_ref()?;
        self.prefixes.insert(prefix, iri);
        Ok(())
    }

    fn triples(&mut self) -> Result<(), RdfError> {
        self.skip_ws();
        if self.peek() == Some('[') {
            let subject = self.blank_node_property_list()?;
            self.skip_ws();
            if self.peek() != Some('.') {
                self.predicate_object_list(&subject)?;
            }
            return Ok(());
        }
        let subject = self.subject()?;
        self.predicate_object_list(&subject)
    }

    fn subject(&mut self) -> Result<RdfTerm, RdfError> {
        self.skip_ws();
        match self.peek() {
            Some('<') => Ok(RdfTerm::Iri(self.iri_ref()?)),
            Some('_') if self.peek_at(1) == Some(':') => self.blank_label(),
            Some('"') | Some('\'') => self.err("literal in subject position"),
            Some(c) if c.is_ascii_digit() || c == '+' || c == '-' => {
                self.err("literal in subject position")
            }
            Some(_) => Ok(RdfTerm::Iri(self.prefixed_name()?)),
            None => self.err("expected subject, found end of input"),
        }
    }

    fn predicate_object_list(&mut self, subject: &RdfTerm) -> Result<(), RdfError> {
        loop {
            let predicate = self.verb()?;
            self.object_list(subject, &predicate)?;
            self.skip_ws();
            if self.peek() != Some(';') {
                return Ok(());
            }
            while self.peek() == Some(';') {
                self.bump();
                self.skip_ws();
            }
            match self.peek() {
                Some('.') | Some(']') | None => return Ok(()),
                _ => {}
            }
        }
    }

    fn verb(&mut self) -> Result<RdfTerm, RdfError> {
        self.skip_ws();
        if self.peek() == Some('a')
            && self
                .peek_at(1)
                .is_none_or(|c| c.is_whitespace() || c == '<' || c == '[' || c == '"')
        {
            self.bump();
            return Ok(RdfTerm::Iri(RDF_TYPE.to_string()));
        }
        match self.peek() {
            Some('<') => Ok(RdfTerm::Iri(self.iri_ref()?)),
            Some('_') | Some('[') => self.err("blank node in predicate position"),
            Some('"') | Some('\'') => self.err("literal in predicate position"),
            Some(_) => Ok(RdfTerm::Iri(self.prefixed_name()?)),
            None => self.err("expected predicate, found end of input"),
        }
    }

    fn object_list(&mut self, subject: &RdfTerm, predicate: &RdfTerm) -> Result<(), RdfError> {
        loop {
            let object = self.object()?;
            self.graph.insert(Triple {
                subject: subject.clone(),
                predicate: predicate.clone(),
                object,
            });
            self.skip_ws();
            if self.peek() == Some(',') {
                self.bump();
            } else {
                return Ok(());
            }
        }
    }

    fn object(&mut self) -> Result<RdfTerm, RdfError> {
        self.skip_ws();
        match self.peek() {
            Some('<') => Ok(RdfTerm::Iri(self.iri_ref()?)),
            Some('_') if self.peek_at(1) == Some(':') => self.blank_label(),
            Some('[') => self.blank_node_property_list(),
            Some('(') => self.err("RDF collections are not supported"),
            Some('"') | Some('\'') => self.literal(),
            Some(c) if c.is_ascii_digit() || c == '+' || c == '-' || c == '.' => self.numeric(),
            Some(_) => {
                let save = (self.pos, self.line, self.col);
                let w = self.word();
                if (w == "true" || w == "false") && self.peek() != Some(':') {
                    return Ok(RdfTerm::Literal(Literal::typed(w, XSD_BOOLEAN)));
                }
                (self.pos, self.line, self.col) = save;
                Ok(RdfTerm::Iri(self.prefixed_name()?))
            }
            None => self.err("expected object, found end of input"),
        }
    }

    fn blank_label(&mut self) -> Result<RdfTerm, RdfError> {
        self.bump();
        self.bump();
        let mut label = String::new();
        while let Some(c) = self.peek() {
            let dot_inside = c == '.'
                && self
                    .peek_at(1)
                    .is_some_and(|n| n.is_alphanumeric() || n == '_' || n == '-');
            if c.is_alphanumeric() || c == '_' || c == '-' || dot_inside {
                label.push(c);
                self.bump();
            } else {
                break;
            }
        }
        if label.is_empty() {
            return self.err("empty blank node label");
        }
        if let Some(existing) = self.bnodes.get(&label) {
            return Ok(RdfTerm::BlankNode(existing.clone()));
        }
        let fresh = self.fresh_bnode();
        if let RdfTerm::BlankNode(l) = &fresh {
            self.bnodes.insert(label, l.clone());
        }
        Ok(fresh)
    }

    fn blank_node_property_list(&mut self) -> Result<RdfTerm, RdfError> {
        self.expect('[')?;
        let node = self.fresh_bnode();
        self.skip_ws();
        if self.peek() == Some(']') {
            self.bump();
            return Ok(node);
        }
        self.predicate_object_list(&node)?;
        self.expect(']')?;
        Ok(node)
    }

    fn iri_ref(&mut self) -> Result<String, RdfError> {
        let (line, column) = (self.line, self.col);
        if self.peek() != Some('<') {
            return self.err("expected '<'");
        }
        self.bump();
        let mut iri = String::new();
        loop {
            match self.bump() {
                Some('>') => break,
                Some('\\') => match self.bump() {
                    Some('u') => iri.push(self.hex_escape(4)?),
                    Some('U') => iri.push(self.hex_escape(8)?),
                    _ => return self.err("invalid escape in IRI"),
                },
                Some(c) if c.is_whitespace() || c == '<' || c == '"' => {
                    return self.err(format!("invalid character {c:?} in IRI"))
                }
                Some(c) => iri.push(c),
                None => return self.err("unterminated IRI"),
            }
        }
        self.resolve(iri, line, column)
    }

    fn resolve(&self, iri: String, line: usize, column: usize) -> Result<String, RdfError> {
        if is_absolute(&iri) {
            return Ok(iri);
        }
        let Some(base) = &self.base else {
            return Err(RdfError::RelativeIri { iri, line, column });
        };
        Ok(resolve_against(base, &iri))
    }

    fn hex_escape(&mut self, n: usize) -> Result<char, RdfError> {
        let mut s = String::new();
        for _ in 0..n {
            match self.bump() {
                Some(c) if c.is_ascii_hexdigit() => s.push(c),
                _ => return self.err("invalid unicode escape"),
            }
        }
        let code = u32::from_str_radix(&s, 16).unwrap_or(u32::MAX);
        match char::from_u32(code) {
            Some(c) => Ok(c),
            None => self.err("invalid unicode code point"),
        }
    }

    fn prefixed_name(&mut self) -> Result<String, RdfError> {
        let (line, column) = (self.line, self.col);
        let mut prefix = String::new();
        while let Some(c) = self.peek() {
            if c == ':' {
                break;
            }
            if c.is_alphanumeric() || c == '_' || c == '-' || c == '.' {
                prefix.push(c);
                self.bump();
            } else {
                break;
            }
        }
        if self.peek() != Some(':') {
            return self.err(format!("expected prefixed name, found '{prefix}'"));
        }
        self.bump();
        let mut local = String::new();
        while let Some(c) = self.peek() {
            if c == '\\' {
                self.bump();
                match self.bump() {
                    Some(e) if "_~.-!$&'()*+,;=/?#@%".contains(e) => local.push(e),
                    _ => return self.err("invalid escape in local name"),
                }
                continue;
            }
            let dot_inside = c == '.'
                && self
                    .peek_at(1)
                    .is_some_and(|n| n.is_alphanumeric() || "_-:%".contains(n));
            if c.is_alphanumeric() || "_-:%".contains(c) || dot_inside {
                local.push(c);
                self.bump();
            } else {
                break;
            }
        }
        match self.prefixes.get(&prefix) {
            Some(ns) => Ok(format!("{ns}{local}")),
            None => Err(RdfError::UnknownPrefix {
                prefix,
                line,
                column,
            }),
        }
    }

    fn literal(&mut self) -> Result<RdfTerm, RdfError> {
        let lexical = self.string()?;
        match self.peek() {
            Some('@') => {
                self.bump();
                let mut lang = String::new();
                while let Some(c) = self.peek() {
                    if c.is_ascii_alphanumeric() || c == '-' {
                        lang.push(c);
                        self.bump();
                    } else {
                        break;
                    }
                }
                if lang.is_empty() {
                    return self.err("empty language tag");
                }
                Ok(RdfTerm::Literal(Literal::lang(lexical, lang)))
            }
            Some('^') if self.peek_at(1) == Some('^') => {
                self.bump();
                self.bump();
                let dt = match self.peek() {
                    Some('<') => self.iri_ref()?,
                    _ => self.prefixed_name()?,
                };
                Ok(RdfTerm::Literal(Literal::typed(lexical, dt)))
            }
            _ => Ok(RdfTerm::Literal(Literal::string(lexical))),
        }
    }

    fn string(&mut self) -> Result<String, RdfError> {
        let q = self.bump().unwrap_or('"');
        let long = self.peek() == Some(q) && self.peek_at(1) == Some(q);
        if long {
            self.bump();
            self.bump();
        }
        let mut out = String::new();
        loop {
            match self.bump() {
                None => return self.err("unterminated string"),
                Some(c) if c == q => {
                    if !long {
                        return Ok(out);
                    }
                    if self.peek() == Some(q) && self.peek_at(1) == Some(q) {
                        self.bump();
                        self.bump();
                        // a long string may end with extra quotes: """a""""
                        while self.peek() == Some(q) {
                            out.push(q);
                            self.bump();
                        }
                        return Ok(out);
                    }
                    out.push(c);
                }
                Some('\\') => {
                    let e = match self.bump() {
                        Some('t') => '\t',
                        Some('b') => '\u{8}',
                        Some('n') => '\n',
                        Some('r') => '\r',
                        Some('f') => '\u{c}',
                        Some('"') => '"',
                        Some('\'') => '\'',
                        Some('\\') => '\\',
                        Some('u') => self.hex_escape(4)?,
                        Some('U') => self.hex_escape(8)?,
                        _ => return self.err("invalid string escape"),
                    };
                    out.push(e);
                }
                Some('\n') | Some('\r') if !long => return self.err("newline in short string"),
                Some(c) => out.push(c),
            }
        }
    }

    fn numeric(&mut self) -> Result<RdfTerm, RdfError> {
        let mut s = String::new();
        if let Some(c @ ('+' | '-')) = self.peek() {
            s.push(c);
            self.bump();
        }
        let mut has_dot = false;
        let mut has_exp = false;
        while let Some(c) = self.peek() {
            if c.is_ascii_digit() {
                s.push(c);
                self.bump();
            } else if c == '.' && !has_dot && !has_exp && self.peek_at(1).is_some_and(|n| n.is_ascii_digit()) {
                has_dot = true;
                s.push(c);
                self.bump();
            } else if (c == 'e' || c == 'E') && !has_exp {
                has_exp = true;
                s.push(c);
                self.bump();
                if let Some(sign @ ('+' | '-')) = self.peek() {
                    s.push(sign);
                    self.bump();
                }
            } else {
                break;
            }
        }
        if !s.chars().any(|c| c.is_ascii_digit()) {
            return self.err(format!("invalid number '{s}'"));
        }
        let dt = if has_exp {
            XSD_DOUBLE
        } else if has_dot {
            XSD_DECIMAL
        } else {
            XSD_INTEGER
        };
        Ok(RdfTerm::Literal(Literal::typed(s, dt)))
    }
}

fn is_absolute(iri: &str) -> bool {
    let Some(colon) = iri.find(':') else {
        return false;
    };
    let scheme = &iri[..colon];
    !scheme.is_empty()
        && scheme.chars().next().is_some_and(|c| c.is_ascii_alphabetic())
        && scheme
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || "+-.".contains(c))
}

fn resolve_against(base: &str, rel: &str) -> String {
    if rel.is_empty() {
        return base.split('#').next().unwrap_or(base).to_string();
    }
    if rel.starts_with('#') {
        return format!("{}{rel}", base.split('#').next().unwrap_or(base));
    }
    if rel.starts_with("//") {
        let scheme = base.split(':').next().unwrap_or("");
        return format!("{scheme}:{rel}");
    }
    if rel.starts_with('/') {
        // scheme://authority
        if let Some(i) = base.find("://") {
            let rest = &base[i + 3..];
            let end = rest.find('/').map_or(base.len(), |j| i + 3 + j);
            return format!("{}{rel}", &base[..end]);
        }
        return format!("{base}{rel}");
    }
    let stem = base.split(['?', '#']).next().unwrap_or(base);
    match stem.rfind('/') {
        Some(i) => format!("{}{rel}", &stem[..=i]),
        None => format!("{stem}{rel}"),
    }
}

pub(crate) fn escape_string(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out
}

/// Writes the graph as Turtle, grouping triples by subject and inlining
/// blank nodes that are referenced exactly once.
pub fn serialize_turtle(g: &Graph) -> String {
    let mut out = String::new();
    for (prefix, ns) in &g.prefixes {
        let _ = writeln!(out, "@prefix {prefix}: <{ns}> .");
    }
    if g.is_empty() {
        return out;
    }
    if !g.prefixes.is_empty() {
        out.push('\n');
    }

    let mut by_subject: BTreeMap<&RdfTerm, Vec<&Triple>> = BTreeMap::new();
    let mut refs: HashMap<&RdfTerm, usize> = HashMap::new();
    for t in g.iter() {
        by_subject.entry(&t.subject).or_default().push(t);
        if t.object.is_blank() {
            *refs.entry(&t.object).or_default() += 1;
        }
    }

    let mut inline: BTreeSet<&RdfTerm> = refs
        .iter()
        .filter(|(_, &n)| n == 1)
        .map(|(&b, _)| b)
        .collect();

    let w = Writer {
        prefixes: &g.prefixes,
        by_subject: &by_subject,
    };
    let mut emitted: BTreeSet<&RdfTerm> = BTreeSet::new();
    let mut blocks: Vec<String> = Vec::new();

    // Roots first; blank nodes caught only in cycles of single references
    // are promoted to labeled roots afterwards.
    let mut roots: Vec<&RdfTerm> = by_subject
        .keys()
        .copied()
        .filter(|s| !inline.contains(s))
        .collect();
    loop {
        for root in roots.drain(..) {
            let mut block = String::new();
            w.subject_block(root, &inline, &mut emitted, &mut block);
            blocks.push(block);
        }
        let leftover = by_subject
            .keys()
            .copied()
            .find(|s| !emitted.contains(s) && inline.contains(s));
        match leftover {
            Some(s) => {
                inline.remove(s);
                roots.push(s);
            }
            None => break,
        }
    }
    out.push_str(&blocks.join("\n"));
    out
}

struct Writer<'a> {
    prefixes: &'a BTreeMap<String, String>,
    by_subject: &'a BTreeMap<&'a RdfTerm, Vec<&'a Triple>>,
}

impl<'a> Writer<'a> {
    fn subject_block(
        &self,
        subject: &'a RdfTerm,
        inline: &BTreeSet<&'a RdfTerm>,
        emitted: &mut BTreeSet<&'a RdfTerm>,
        out: &mut String,
    ) {
        emitted.insert(subject);
        out.push_str(&self.term(subject));
        self.property_list(subject, inline, emitted, out, 1);
        out.push_str(" .\n");
    }

    fn property_list(
        &self,
        subject: &'a RdfTerm,
        inline: &BTreeSet<&'a RdfTerm>,
        emitted: &mut BTreeSet<&'a RdfTerm>,
        out: &mut String,
        depth: usize,
    ) {
        let Some(triples) = self.by_subject.get(subject) else {
            return;
        };
        let indent = "    ".repeat(depth);
        let mut first = true;
        let mut i = 0;
        while i < triples.len() {
            let pred = &triples[i].predicate;
            let mut objects = Vec::new();
            while i < triples.len() && &triples[i].predicate == pred {
                objects.push(&triples[i].object);
                i += 1;
            }
            if !first {
                out.push_str(" ;");
            }
            first = false;
            let _ = write!(out, "\n{indent}{} ", self.predicate(pred));
            for (k, o) in objects.into_iter().enumerate() {
                if k > 0 {
                    out.push_str(", ");
                }
                if inline.contains(o) && !emitted.contains(o) {
                    emitted.insert(o);
                    if self.by_subject.contains_key(o) {
                        out.push('[');
                        self.property_list(o, inline, emitted, out, depth + 1);
                        let _ = write!(out, "\n{indent}]");
                    } else {
                        out.push_str("[]");
                    }
                } else {
                    out.push_str(&self.term(o));
                }
            }
        }
    }

    fn predicate(&self, p: &RdfTerm) -> String {
        if p.as_iri() == Some(RDF_TYPE) {
            "a".to_string()
        } else {
            self.term(p)
        }
    }

    fn iri(&self, iri: &str) -> String {
        for (prefix, ns) in self.prefixes {
            if let Some(local) = iri.strip_prefix(ns.as_str()) {
                if is_safe_local(local) {
                    return format!("{prefix}:{local}");
                }
            }
        }
        format!("<{iri}>")
    }

    fn term(&self, t: &RdfTerm) -> String {
        match t {
            RdfTerm::Iri(i) => self.iri(i),
            RdfTerm::BlankNode(b) => format!("_:{b}"),
            RdfTerm::Literal(l) => {
                if l.language.is_none()
                    && l.datatype == XSD_INTEGER
                    && is_plain_integer(&l.lexical)
                {
                    return l.lexical.clone();
                }
                let mut s = format!("\"{}\"", escape_string(&l.lexical));
                match &l.language {
                    Some(lang) => {
                        let _ = write!(s, "@{lang}");
                    }
                    None if l.datatype == XSD_STRING => {}
                    None => {
                        let _ = write!(s, "^^{}", self.iri(&l.datatype));
                    }
                }
                s
            }
        }
    }
}

fn is_safe_local(local: &str) -> bool {
    let mut chars = local.chars();
    match chars.next() {
        None => true,
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {
            chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        }
        _ => false,
    }
}

fn is_plain_integer(s: &str) -> bool {
    let digits = s.strip_prefix(['+', '-']).unwrap_or(s);
    !digits.is_empty() && digits.chars().all(|c| c.is_ascii_digit())
}
