//! A small RDF data model: terms, triples and set-semantics graphs.

mod turtle;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

pub use turtle::{parse_turtle, serialize_turtle};

pub const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";
pub const RDF_LANG_STRING: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#langString";
pub const RDF_NS: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#";
pub const XSD_NS: &str = "http://www.w3.org/2001/XMLSchema#";
pub const XSD_STRING: &str = "http://www.w3.org/2001/XMLSchema#string";
pub const XSD_INTEGER: &str = "http://www.w3.org/2001/XMLSchema#integer";
pub const XSD_DECIMAL: &str = "http://www.w3.org/2001/XMLSchema#decimal";
pub const XSD_DOUBLE: &str = "http://www.w3.org/2001/XMLSchema#double";
pub const XSD_BOOLEAN: &str = "http://www.w3.org/2001/XMLSchema#boolean";
pub const XSD_DATE: &str = "http://www.w3.org/2001/XMLSchema#date";
pub const XSD_DATETIME: &str = "http://www.w3.org/2001/XMLSchema#dateTime";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RdfError {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown prefix '{prefix}' at {line}:{column}")]
    UnknownPrefix {
        prefix: String,
        line: usize,
        column: usize,
    },
    #[error("relative IRI <{iri}> at {line}:{column} with no base IRI")]
    RelativeIri {
        iri: String,
        line: usize,
        column: usize,
    },
    #[error("invalid triple: {0}")]
    InvalidTriple(String),
}

/// An RDF literal. The datatype is always explicit; plain literals carry
/// `xsd:string` and language-tagged ones `rdf:langString`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Literal {
    lexical: String,
    datatype: String,
    language: Option<String>,
}

impl Literal {
    pub fn string(lexical: impl Into<String>) -> Self {
        Literal {
            lexical: lexical.into(),
            datatype: XSD_STRING.to_string(),
            language: None,
        }
    }

    pub fn typed(lexical: impl Into<String>, datatype: impl Into<String>) -> Self {
        Literal {
            lexical: lexical.into(),
            datatype: datatype.into(),
            language: None,
        }
    }

    pub fn lang(lexical: impl Into<String>, language: impl Into<String>) -> Self {
        Literal {
            lexical: lexical.into(),
            datatype: RDF_LANG_STRING.to_string(),
            language: Some(language.into().to_ascii_lowercase()),
        }
    }

    pub fn lexical(&self) -> &str {
        &self.lexical
    }

    pub fn datatype(&self) -> &str {
        &self.datatype
    }

    pub fn language(&self) -> Option<&str> {
        self.language.as_deref()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum RdfTerm {
    Iri(String),
    BlankNode(String),
    Literal(Literal),
}

impl RdfTerm {
    pub fn iri(iri: impl Into<String>) -> Self {
        RdfTerm::Iri(iri.into())
    }

    pub fn blank(label: impl Into<String>) -> Self {
        RdfTerm::BlankNode(label.into())
    }

    pub fn as_iri(&self) -> Option<&str> {
        match self {
            RdfTerm::Iri(i) => Some(i),
            _ => None,
        }
    }

    pub fn as_literal(&self) -> Option<&Literal> {
        match self {
            RdfTerm::Literal(l) => Some(l),
            _ => None,
        }
    }

    pub fn is_blank(&self) -> bool {
        matches!(self, RdfTerm::BlankNode(_))
    }

    fn rank(&self) -> u8 {
        match self {
            RdfTerm::Iri(_) => 0,
            RdfTerm::BlankNode(_) => 1,
            RdfTerm::Literal(_) => 2,
        }
    }
}

/// Compares `b2` before `b10`: a trailing run of digits is compared numerically.
fn natural_cmp(a: &str, b: &str) -> Ordering {
    fn split(s: &str) -> (&str, Option<u64>) {
        let digits = s.bytes().rev().take_while(u8::is_ascii_digit).count();
        let (head, tail) = s.split_at(s.len() - digits);
        (head, tail.parse().ok())
    }
    let (ha, na) = split(a);
    let (hb, nb) = split(b);
    ha.cmp(hb).then(na.cmp(&nb)).then_with(|| a.cmp(b))
}

impl Ord for RdfTerm {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (RdfTerm::Iri(a), RdfTerm::Iri(b)) => a.cmp(b),
            (RdfTerm::BlankNode(a), RdfTerm::BlankNode(b)) => natural_cmp(a, b),
            (RdfTerm::Literal(a), RdfTerm::Literal(b)) => a.cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl PartialOrd for RdfTerm {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for RdfTerm {
    /// N-Triples style rendering.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RdfTerm::Iri(i) => write!(f, "<{i}>"),
            RdfTerm::BlankNode(b) => write!(f, "_:{b}"),
            RdfTerm::Literal(l) => {
                write!(f, "\"{}\"", turtle::escape_string(&l.lexical))?;
                match &l.language {
                    Some(lang) => write!(f, "@{lang}"),
                    None if l.datatype == XSD_STRING => Ok(()),
                    None => write!(f, "^^<{}>", l.datatype),
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub subject: RdfTerm,
    pub predicate: RdfTerm,
    pub object: RdfTerm,
}

impl Triple {
    pub fn new(subject: RdfTerm, predicate: RdfTerm, object: RdfTerm) -> Result<Self, RdfError> {
        if matches!(subject, RdfTerm::Literal(_)) {
            return Err(RdfError::InvalidTriple(format!(
                "literal {subject} in subject position"
            )));
        }
        if !matches!(predicate, RdfTerm::Iri(_)) {
            return Err(RdfError::InvalidTriple(format!(
                "{predicate} in predicate position"
            )));
        }
        Ok(Triple {
            subject,
            predicate,
            object,
        })
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} .", self.subject, self.predicate, self.object)
    }
}

/// A set of triples plus the prefix map used to read or write them.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Graph {
    triples: BTreeSet<Triple>,
    prefixes: BTreeMap<String, String>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns `true` if the triple was not already present.
    pub fn insert(&mut self, triple: Triple) -> bool {
        self.triples.insert(triple)
    }

    pub fn add(&mut self, s: RdfTerm, p: RdfTerm, o: RdfTerm) -> Result<bool, RdfError> {
        Ok(self.insert(Triple::new(s, p, o)?))
    }

    pub fn extend(&mut self, triples: impl IntoIterator<Item = Triple>) {
        self.triples.extend(triples);
    }

    pub fn contains(&self, triple: &Triple) -> bool {
        self.triples.contains(triple)
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Triple> {
        self.triples.iter()
    }

    pub fn triples(&self) -> &BTreeSet<Triple> {
        &self.triples
    }

    pub fn into_triples(self) -> BTreeSet<Triple> {
        self.triples
    }

    pub fn prefixes(&self) -> &BTreeMap<String, String> {
        &self.prefixes
    }

    pub fn set_prefix(&mut self, prefix: impl Into<String>, namespace: impl Into<String>) {
        self.prefixes.insert(prefix.into(), namespace.into());
    }

    pub fn set_prefixes(&mut self, prefixes: &BTreeMap<String, String>) {
        self.prefixes
            .extend(prefixes.iter().map(|(k, v)| (k.clone(), v.clone())));
    }

    /// Triples with the given subject, in graph order.
    pub fn with_subject<'a>(&'a self, subject: &RdfTerm) -> impl Iterator<Item = &'a Triple> + 'a {
        let subject = subject.clone();
        let lo = Triple {
            subject: subject.clone(),
            predicate: RdfTerm::Iri(String::new()),
            object: RdfTerm::Iri(String::new()),
        };
        self.triples
            .range(lo..)
            .take_while(move |t| t.subject == subject)
    }

    /// Objects of `(subject, predicate, ?)`.
    pub fn objects<'a>(&'a self, subject: &RdfTerm, predicate: &str) -> impl Iterator<Item = &'a RdfTerm> + 'a {
        let predicate = predicate.to_string();
        self.with_subject(subject)
            .filter(move |t| t.predicate.as_iri() == Some(predicate.as_str()))
            .map(|t| &t.object)
    }

    pub fn subjects_with_predicate<'a>(
        &'a self,
        predicate: &'a str,
    ) -> impl Iterator<Item = &'a RdfTerm> {
        self.triples
            .iter()
            .filter(move |t| t.predicate.as_iri() == Some(predicate))
            .map(|t| &t.subject)
    }
}

impl FromIterator<Triple> for Graph {
    fn from_iter<I: IntoIterator<Item = Triple>>(iter: I) -> Self {
        Graph {
            triples: iter.into_iter().collect(),
            prefixes: BTreeMap::new(),
        }
    }
}

/// Checks whether two triple sets are equal up to a renaming of blank nodes.
///
/// Backtracking search over candidate blank-node bijections, pruned by
/// per-node signatures. Fine for the small graphs used in tests and CLI checks.
pub fn isomorphic(a: &BTreeSet<Triple>, b: &BTreeSet<Triple>) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let ground = |t: &Triple| !t.subject.is_blank() && !t.object.is_blank();
    let ga: BTreeSet<_> = a.iter().filter(|t| ground(t)).collect();
    let gb: BTreeSet<_> = b.iter().filter(|t| ground(t)).collect();
    if ga != gb {
        return false;
    }
    let na: Vec<&Triple> = a.iter().filter(|t| !ground(t)).collect();
    let nb: Vec<&Triple> = b.iter().filter(|t| !ground(t)).collect();

    let blanks = |ts: &[&Triple]| {
        let mut out = BTreeSet::new();
        for t in ts {
            for x in [&t.subject, &t.object] {
                if let RdfTerm::BlankNode(l) = x {
                    out.insert(l.clone());
                }
            }
        }
        out.into_iter().collect::<Vec<_>>()
    };
    let ba = blanks(&na);
    let bb = blanks(&nb);
    if ba.len() != bb.len() {
        return false;
    }
    // Signature: multiset of (direction, predicate, ground neighbour or "_").
    let signature = |ts: &[&Triple], label: &str| {
        let mut sig: Vec<String> = Vec::new();
        for t in ts {
            let subj = matches!(&t.subject, RdfTerm::BlankNode(l) if l == label);
            let obj = matches!(&t.object, RdfTerm::BlankNode(l) if l == label);
            let show = |x: &RdfTerm| if x.is_blank() { "_".to_string() } else { x.to_string() };
            if subj {
                sig.push(format!("s {} {}", t.predicate, show(&t.object)));
            }
            if obj {
                sig.push(format!("o {} {}", t.predicate, show(&t.subject)));
            }
        }
        sig.sort();
        sig
    };
    let sa: Vec<_> = ba.iter().map(|l| signature(&na, l)).collect();
    let sb: Vec<_> = bb.iter().map(|l| signature(&nb, l)).collect();
    let target: BTreeSet<&Triple> = nb.iter().copied().collect();

    #[allow(clippy::too_many_arguments)]
    fn search(
        i: usize,
        ba: &[String],
        bb: &[String],
        sa: &[Vec<String>],
        sb: &[Vec<String>],
        used: &mut Vec<bool>,
        map: &mut BTreeMap<String, String>,
        na: &[&Triple],
        target: &BTreeSet<&Triple>,
    ) -> bool {
        if i == ba.len() {
            let rename = |x: &RdfTerm| match x {
                RdfTerm::BlankNode(l) => RdfTerm::BlankNode(map[l].clone()),
                other => other.clone(),
            };
            return na.iter().all(|t| {
                let mapped = Triple {
                    subject: rename(&t.subject),
                    predicate: t.predicate.clone(),
                    object: rename(&t.object),
                };
                target.contains(&mapped)
            });
        }
        for j in 0..bb.len() {
            if used[j] || sa[i] != sb[j] {
                continue;
            }
            used[j] = true;
            map.insert(ba[i].clone(), bb[j].clone());
            if search(i + 1, ba, bb, sa, sb, used, map, na, target) {
                return true;
            }
            used[j] = false;
        }
        map.remove(&ba[i]);
        false
    }

    let mut used = vec![false; bb.len()];
    let mut map = BTreeMap::new();
    search(0, &ba, &bb, &sa, &sb, &mut used, &mut map, &na, &target)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literal_subject_is_rejected() {
        let err = Triple::new(
            RdfTerm::Literal(Literal::string("x")),
            RdfTerm::iri("http://e/p"),
            RdfTerm::iri("http://e/o"),
        );
        assert!(err.is_err());
        let err = Triple::new(
            RdfTerm::iri("http://e/s"),
            RdfTerm::blank("b0"),
            RdfTerm::iri("http://e/o"),
        );
        assert!(err.is_err());
    }

    #[test]
    fn blank_nodes_sort_naturally() {
        let mut v = vec![RdfTerm::blank("b10"), RdfTerm::blank("b2"), RdfTerm::blank("b1")];
        v.sort();
        assert_eq!(v, vec![RdfTerm::blank("b1"), RdfTerm::blank("b2"), RdfTerm::blank("b10")]);
    }

    #[test]
    fn graph_has_set_semantics() {
        let mut g = Graph::new();
        let t = Triple::new(
            RdfTerm::iri("http://e/s"),
            RdfTerm::iri("http://e/p"),
            RdfTerm::Literal(Literal::string("v")),
        )
        .unwrap();
        assert!(g.insert(t.clone()));
        assert!(!g.insert(t));
        assert_eq!(g.len(), 1);
    }

    #[test]
    fn isomorphism_ignores_blank_labels() {
        let p = RdfTerm::iri("http://e/p");
        let q = RdfTerm::iri("http://e/q");
        let s = RdfTerm::iri("http://e/s");
        let a: BTreeSet<Triple> = [
            Triple::new(s.clone(), p.clone(), RdfTerm::blank("x")).unwrap(),
            Triple::new(RdfTerm::blank("x"), q.clone(), RdfTerm::blank("y")).unwrap(),
        ]
        .into();
        let b: BTreeSet<Triple> = [
            Triple::new(s.clone(), p.clone(), RdfTerm::blank("b7")).unwrap(),
            Triple::new(RdfTerm::blank("b7"), q.clone(), RdfTerm::blank("b3")).unwrap(),
        ]
        .into();
        let c: BTreeSet<Triple> = [
            Triple::new(s, p, RdfTerm::blank("b7")).unwrap(),
            Triple::new(RdfTerm::blank("b3"), q, RdfTerm::blank("b7")).unwrap(),
        ]
        .into();
        assert!(isomorphic(&a, &b));
        assert!(!isomorphic(&a, &c));
    }
}
