//! Typed R2RML documents: extraction from RDF graphs, the effective and joint
//! SQL queries, and conversion back to RDF.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

use crate::rdf::{Graph, Literal, RdfTerm, Triple, RDF_TYPE};
use crate::template::{Template, TemplateError};

pub const RR: &str = "http://www.w3.org/ns/r2rml#";

fn rr(local: &str) -> String {
    format!("{RR}{local}")
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum R2rmlError {
    #[error("{0}: no logical table")]
    MissingLogicalTable(String),
    #[error("{0}: no subject map")]
    MissingSubjectMap(String),
    #[error("{0}: term map has more than one of rr:column, rr:template, rr:constant")]
    MultipleValueKinds(String),
    #[error("{0}: term map has none of rr:column, rr:template, rr:constant")]
    MissingTermValue(String),
    #[error("{map}: parent triples map {parent} is not defined")]
    DanglingParentTriplesMap { map: String, parent: String },
    #[error("{0}: subject maps cannot produce literals")]
    LiteralSubject(String),
    #[error("{element}: {feature} is not supported")]
    UnsupportedFeature { element: String, feature: String },
    #[error("{0}: logical table must have exactly one of rr:tableName, rr:sqlQuery")]
    InvalidLogicalTable(String),
    #[error("{element}: {source}")]
    InvalidTemplate {
        element: String,
        source: TemplateError,
    },
    #[error("{0}: template has no placeholders")]
    TemplateWithoutPlaceholders(String),
    #[error("{0}: referencing object map over a different logical table needs a join condition")]
    MissingJoinCondition(String),
    #[error("{element}: {message}")]
    Invalid { element: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LogicalTable {
    BaseTable(String),
    View(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TermType {
    Iri,
    BlankNode,
    Literal,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum TermValue {
    Column(String),
    Template(Template),
    Constant(RdfTerm),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct TermMap {
    pub value: TermValue,
    pub term_type: TermType,
    pub datatype: Option<String>,
    pub language: Option<String>,
}

impl TermMap {
    pub fn template(t: Template) -> Self {
        TermMap {
            value: TermValue::Template(t),
            term_type: TermType::Iri,
            datatype: None,
            language: None,
        }
    }

    pub fn column(name: impl Into<String>, datatype: Option<String>) -> Self {
        TermMap {
            value: TermValue::Column(name.into()),
            term_type: TermType::Literal,
            datatype,
            language: None,
        }
    }

    pub fn constant(term: RdfTerm) -> Self {
        let term_type = match &term {
            RdfTerm::Iri(_) => TermType::Iri,
            RdfTerm::BlankNode(_) => TermType::BlankNode,
            RdfTerm::Literal(_) => TermType::Literal,
        };
        TermMap {
            value: TermValue::Constant(term),
            term_type,
            datatype: None,
            language: None,
        }
    }

    /// Column names read by this term map, in placeholder order.
    pub fn columns(&self) -> Vec<&str> {
        match &self.value {
            TermValue::Column(c) => vec![c.as_str()],
            TermValue::Template(t) => t.columns().collect(),
            TermValue::Constant(_) => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct JoinCondition {
    pub child: String,
    pub parent: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct RefObjectMap {
    pub parent: RdfTerm,
    pub joins: Vec<JoinCondition>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum ObjectMap {
    Term(TermMap),
    Ref(RefObjectMap),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredicateObjectMap {
    pub predicates: Vec<String>,
    pub objects: Vec<ObjectMap>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriplesMap {
    pub id: RdfTerm,
    pub logical_table: LogicalTable,
    pub subject_map: TermMap,
    pub subject_classes: Vec<String>,
    pub poms: Vec<PredicateObjectMap>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct R2rmlDocument {
    pub triples_maps: Vec<TriplesMap>,
    pub prefixes: BTreeMap<String, String>,
}

impl R2rmlDocument {
    pub fn get(&self, id: &RdfTerm) -> Option<&TriplesMap> {
        self.triples_maps.iter().find(|tm| &tm.id == id)
    }
}

pub fn effective_sql_query(lt: &LogicalTable) -> String {
    match lt {
        LogicalTable::BaseTable(t) => format!("SELECT * FROM {t}"),
        LogicalTable::View(q) => q.trim().to_string(),
    }
}

pub fn joint_sql_query(child: &LogicalTable, parent: &LogicalTable, joins: &[JoinCondition]) -> String {
    let mut sql = format!(
        "SELECT * FROM ({}) AS parent, ({}) AS child",
        effective_sql_query(parent),
        effective_sql_query(child)
    );
    if !joins.is_empty() {
        let conds: Vec<String> = joins
            .iter()
            .map(|j| format!("child.{}=parent.{}", j.child, j.parent))
            .collect();
        sql.push_str(" WHERE ");
        sql.push_str(&conds.join(" AND "));
    }
    sql
}

fn show(t: &RdfTerm) -> String {
    match t {
        RdfTerm::Iri(i) => format!("<{i}>"),
        other => other.to_string(),
    }
}

struct Extractor<'g> {
    g: &'g Graph,
}

impl<'g> Extractor<'g> {
    fn objects(&self, s: &RdfTerm, local: &str) -> Vec<&'g RdfTerm> {
        let p = rr(local);
        self.g.objects(s, &p).collect()
    }

    fn one(&self, s: &RdfTerm, local: &str, element: &str) -> Result<Option<&'g RdfTerm>, R2rmlError> {
        let objs = self.objects(s, local);
        match objs.len() {
            0 => Ok(None),
            1 => Ok(Some(objs[0])),
            _ => Err(R2rmlError::Invalid {
                element: element.to_string(),
                message: format!("more than one rr:{local}"),
            }),
        }
    }

    fn string(&self, s: &RdfTerm, local: &str, element: &str) -> Result<Option<String>, R2rmlError> {
        match self.one(s, local, element)? {
            None => Ok(None),
            Some(RdfTerm::Literal(l)) => Ok(Some(l.lexical().to_string())),
            Some(other) => Err(R2rmlError::Invalid {
                element: element.to_string(),
                message: format!("rr:{local} must be a literal, found {other}"),
            }),
        }
    }

    fn iri(&self, s: &RdfTerm, local: &str, element: &str) -> Result<Option<String>, R2rmlError> {
        match self.one(s, local, element)? {
            None => Ok(None),
            Some(RdfTerm::Iri(i)) => Ok(Some(i.clone())),
            Some(other) => Err(R2rmlError::Invalid {
                element: element.to_string(),
                message: format!("rr:{local} must be an IRI, found {other}"),
            }),
        }
    }

    fn reject(&self, node: &RdfTerm, locals: &[&str], element: &str) -> Result<(), R2rmlError> {
        for local in locals {
            if !self.objects(node, local).is_empty() {
                return Err(R2rmlError::UnsupportedFeature {
                    element: element.to_string(),
                    feature: format!("rr:{local}"),
                });
            }
        }
        Ok(())
    }

    fn triples_map_ids(&self) -> BTreeSet<&'g RdfTerm> {
        let lt = rr("logicalTable");
        let table_nodes: BTreeSet<&RdfTerm> = self
            .g
            .iter()
            .filter(|t| t.predicate.as_iri() == Some(lt.as_str()))
            .map(|t| &t.object)
            .collect();
        let mut ids = BTreeSet::new();
        for t in self.g.iter() {
            let Some(p) = t.predicate.as_iri() else { continue };
            let is_tm = p == rr("logicalTable")
                || p == rr("subjectMap")
                || p == rr("subject")
                || (p == RDF_TYPE && t.object.as_iri() == Some(&rr("TriplesMap")))
                || ((p == rr("tableName") || p == rr("sqlQuery")) && !table_nodes.contains(&t.subject));
            if is_tm {
                ids.insert(&t.subject);
            }
        }
        ids
    }

    fn logical_table(&self, tm: &RdfTerm, el: &str) -> Result<LogicalTable, R2rmlError> {
        let node = match self.one(tm, "logicalTable", el)? {
            Some(n) => n,
            // rr:tableName directly on the triples map
            None if !self.objects(tm, "tableName").is_empty() || !self.objects(tm, "sqlQuery").is_empty() => tm,
            None => return Err(R2rmlError::MissingLogicalTable(el.to_string())),
        };
        let table = self.string(node, "tableName", el)?;
        let query = self.string(node, "sqlQuery", el)?;
        if !self.objects(node, "sqlVersion").is_empty() {
            log::warn!("{el}: rr:sqlVersion ignored");
        }
        match (table, query) {
            (Some(t), None) => Ok(LogicalTable::BaseTable(t)),
            (None, Some(q)) => Ok(LogicalTable::View(q)),
            _ => Err(R2rmlError::InvalidLogicalTable(el.to_string())),
        }
    }

    fn term_map(&self, node: &RdfTerm, position: Position, el: &str) -> Result<TermMap, R2rmlError> {
        self.reject(node, &["inverseExpression", "graphMap", "graph"], el)?;
        let column = self.string(node, "column", el)?;
        let template = self.string(node, "template", el)?;
        let constant = self.one(node, "constant", el)?.cloned();
        let kinds = column.is_some() as u8 + template.is_some() as u8 + constant.is_some() as u8;
        if kinds > 1 {
            return Err(R2rmlError::MultipleValueKinds(el.to_string()));
        }
        let datatype = self.iri(node, "datatype", el)?;
        let language = self.string(node, "language", el)?;
        let explicit = match self.iri(node, "termType", el)? {
            None => None,
            Some(t) if t == rr("IRI") => Some(TermType::Iri),
            Some(t) if t == rr("BlankNode") => Some(TermType::BlankNode),
            Some(t) if t == rr("Literal") => Some(TermType::Literal),
            Some(t) => {
                return Err(R2rmlError::Invalid {
                    element: el.to_string(),
                    message: format!("unknown rr:termType <{t}>"),
                })
            }
        };
        let value = if let Some(c) = column {
            TermValue::Column(c)
        } else if let Some(t) = template {
            let parsed = Template::parse(&t).map_err(|source| R2rmlError::InvalidTemplate {
                element: el.to_string(),
                source,
            })?;
            if parsed.arity() == 0 {
                return Err(R2rmlError::TemplateWithoutPlaceholders(el.to_string()));
            }
            TermValue::Template(parsed)
        } else if let Some(c) = constant {
            TermValue::Constant(c)
        } else {
            return Err(R2rmlError::MissingTermValue(el.to_string()));
        };
        let term_type = match (&value, explicit) {
            (TermValue::Constant(RdfTerm::Iri(_)), _) => TermType::Iri,
            (TermValue::Constant(RdfTerm::Literal(_)), _) => TermType::Literal,
            (TermValue::Constant(RdfTerm::BlankNode(_)), _) => TermType::BlankNode,
            (_, Some(t)) => t,
            _ if position != Position::Object => TermType::Iri,
            (TermValue::Column(_), None) => TermType::Literal,
            _ if datatype.is_some() || language.is_some() => TermType::Literal,
            _ => TermType::Iri,
        };
        if term_type != TermType::Literal && (datatype.is_some() || language.is_some()) {
            return Err(R2rmlError::UnsupportedFeature {
                element: el.to_string(),
                feature: "rr:datatype or rr:language on a non-literal term map".into(),
            });
        }
        if datatype.is_some() && language.is_some() {
            return Err(R2rmlError::Invalid {
                element: el.to_string(),
                message: "both rr:datatype and rr:language".into(),
            });
        }
        if term_type == TermType::Literal && position != Position::Object {
            return Err(R2rmlError::LiteralSubject(el.to_string()));
        }
        Ok(TermMap {
            value,
            term_type,
            datatype,
            language,
        })
    }

    fn subject_map(&self, tm: &RdfTerm, el: &str) -> Result<(TermMap, Vec<String>), R2rmlError> {
        if let Some(node) = self.one(tm, "subjectMap", el)? {
            if self.one(tm, "subject", el)?.is_some() {
                return Err(R2rmlError::Invalid {
                    element: el.to_string(),
                    message: "both rr:subjectMap and rr:subject".into(),
                });
            }
            let map = self.term_map(node, Position::Subject, el)?;
            let mut classes = Vec::new();
            for c in self.objects(node, "class") {
                match c {
                    RdfTerm::Iri(i) => classes.push(i.clone()),
                    other => {
                        return Err(R2rmlError::Invalid {
                            element: el.to_string(),
                            message: format!("rr:class must be an IRI, found {other}"),
                        })
                    }
                }
            }
            return Ok((map, classes));
        }
        match self.one(tm, "subject", el)? {
            Some(RdfTerm::Literal(_)) => Err(R2rmlError::LiteralSubject(el.to_string())),
            Some(c) => Ok((TermMap::constant(c.clone()), Vec::new())),
            None => Err(R2rmlError::MissingSubjectMap(el.to_string())),
        }
    }

    fn pom(&self, node: &RdfTerm, el: &str) -> Result<PredicateObjectMap, R2rmlError> {
        self.reject(node, &["graphMap", "graph"], el)?;
        let mut predicates = Vec::new();
        for p in self.objects(node, "predicate") {
            match p {
                RdfTerm::Iri(i) => predicates.push(i.clone()),
                other => {
                    return Err(R2rmlError::Invalid {
                        element: el.to_string(),
                        message: format!("rr:predicate must be an IRI, found {other}"),
                    })
                }
            }
        }
        for pm in self.objects(node, "predicateMap") {
            match self.term_map(pm, Position::Predicate, el)?.value {
                TermValue::Constant(RdfTerm::Iri(i)) => predicates.push(i),
                _ => {
                    return Err(R2rmlError::UnsupportedFeature {
                        element: el.to_string(),
                        feature: "non-constant predicate map".into(),
                    })
                }
            }
        }
        if predicates.is_empty() {
            return Err(R2rmlError::Invalid {
                element: el.to_string(),
                message: "predicate-object map without predicates".into(),
            });
        }
        predicates.sort();
        predicates.dedup();

        let mut objects = Vec::new();
        for om in self.objects(node, "objectMap") {
            if let Some(parent) = self.one(om, "parentTriplesMap", el)? {
                let mut joins = Vec::new();
                for j in self.objects(om, "joinCondition") {
                    let child = self.string(j, "child", el)?;
                    let parent_col = self.string(j, "parent", el)?;
                    match (child, parent_col) {
                        (Some(c), Some(p)) if !c.is_empty() && !p.is_empty() => joins.push(JoinCondition { child: c, parent: p }),
                        _ => {
                            return Err(R2rmlError::Invalid {
                                element: el.to_string(),
                                message: "join condition needs non-empty rr:child and rr:parent".into(),
                            })
                        }
                    }
                }
                objects.push(ObjectMap::Ref(RefObjectMap {
                    parent: parent.clone(),
                    joins,
                }));
            } else {
                objects.push(ObjectMap::Term(self.term_map(om, Position::Object, el)?));
            }
        }
        for o in self.objects(node, "object") {
            objects.push(ObjectMap::Term(TermMap::constant(o.clone())));
        }
        if objects.is_empty() {
            return Err(R2rmlError::Invalid {
                element: el.to_string(),
                message: "predicate-object map without objects".into(),
            });
        }
        Ok(PredicateObjectMap { predicates, objects })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Position {
    Subject,
    Predicate,
    Object,
}

/// Reads every triples map in `g`. The result is normalized: triples maps are
/// sorted by id, classes and predicates are sorted, and predicate-object maps
/// and join conditions keep document order.
pub fn extract_mapping(g: &Graph) -> Result<R2rmlDocument, R2rmlError> {
    let x = Extractor { g };
    let mut triples_maps = Vec::new();
    for id in x.triples_map_ids() {
        let el = show(id);
        let logical_table = x.logical_table(id, &el)?;
        let (subject_map, mut subject_classes) = x.subject_map(id, &el)?;
        if !x.objects(id, "graphMap").is_empty() {
            return Err(R2rmlError::UnsupportedFeature {
                element: el,
                feature: "rr:graphMap".into(),
            });
        }
        subject_classes.sort();
        subject_classes.dedup();
        let mut poms = Vec::new();
        for node in x.objects(id, "predicateObjectMap") {
            poms.push(x.pom(node, &el)?);
        }
        triples_maps.push(TriplesMap {
            id: id.clone(),
            logical_table,
            subject_map,
            subject_classes,
            poms,
        });
    }

    let tables: HashMap<&RdfTerm, String> = triples_maps
        .iter()
        .map(|tm| (&tm.id, effective_sql_query(&tm.logical_table)))
        .collect();
    for tm in &triples_maps {
        for pom in &tm.poms {
            for o in &pom.objects {
                let ObjectMap::Ref(r) = o else { continue };
                let Some(parent_sql) = tables.get(&r.parent) else {
                    return Err(R2rmlError::DanglingParentTriplesMap {
                        map: show(&tm.id),
                        parent: show(&r.parent),
                    });
                };
                if r.joins.is_empty() && tables[&tm.id].split_whitespace().ne(parent_sql.split_whitespace()) {
                    return Err(R2rmlError::MissingJoinCondition(show(&tm.id)));
                }
            }
        }
    }

    Ok(R2rmlDocument {
        triples_maps,
        prefixes: g.prefixes().clone(),
    })
}

struct Emitter {
    graph: Graph,
    next: usize,
    taken: BTreeSet<String>,
}

impl Emitter {
    fn fresh(&mut self) -> RdfTerm {
        loop {
            let label = format!("g{}", self.next);
            self.next += 1;
            if !self.taken.contains(&label) {
                return RdfTerm::BlankNode(label);
            }
        }
    }

    fn add(&mut self, s: &RdfTerm, local: &str, o: RdfTerm) {
        self.graph.insert(Triple {
            subject: s.clone(),
            predicate: RdfTerm::Iri(rr(local)),
            object: o,
        });
    }

    fn term_map(&mut self, node: &RdfTerm, tm: &TermMap, position: Position) {
        match &tm.value {
            TermValue::Column(c) => self.add(node, "column", RdfTerm::Literal(Literal::string(c.clone()))),
            TermValue::Template(t) => self.add(node, "template", RdfTerm::Literal(Literal::string(t.to_string()))),
            TermValue::Constant(c) => self.add(node, "constant", c.clone()),
        }
        let default = match (&tm.value, position) {
            (TermValue::Constant(_), _) => tm.term_type,
            (_, Position::Subject | Position::Predicate) => TermType::Iri,
            (TermValue::Column(_), _) => TermType::Literal,
            _ if tm.datatype.is_some() || tm.language.is_some() => TermType::Literal,
            _ => TermType::Iri,
        };
        if tm.term_type != default {
            let local = match tm.term_type {
                TermType::Iri => "IRI",
                TermType::BlankNode => "BlankNode",
                TermType::Literal => "Literal",
            };
            self.add(node, "termType", RdfTerm::Iri(rr(local)));
        }
        if let Some(dt) = &tm.datatype {
            self.add(node, "datatype", RdfTerm::Iri(dt.clone()));
        }
        if let Some(lang) = &tm.language {
            self.add(node, "language", RdfTerm::Literal(Literal::string(lang.clone())));
        }
    }
}

/// Writes the document back as RDF. Triples maps with equal logical tables
/// share one logical table node.
pub fn to_graph(doc: &R2rmlDocument) -> Graph {
    let taken = doc
        .triples_maps
        .iter()
        .filter_map(|tm| match &tm.id {
            RdfTerm::BlankNode(l) => Some(l.clone()),
            _ => None,
        })
        .collect();
    let mut e = Emitter {
        graph: Graph::new(),
        next: 0,
        taken,
    };
    e.graph.set_prefixes(&doc.prefixes);
    if !doc.triples_maps.is_empty() && !doc.prefixes.values().any(|ns| ns == RR) {
        e.graph.set_prefix("rr", RR);
    }

    let mut tables: BTreeMap<&LogicalTable, RdfTerm> = BTreeMap::new();
    for tm in &doc.triples_maps {
        let table_node = match tables.get(&tm.logical_table) {
            Some(n) => n.clone(),
            None => {
                let n = e.fresh();
                match &tm.logical_table {
                    LogicalTable::BaseTable(t) => e.add(&n, "tableName", RdfTerm::Literal(Literal::string(t.clone()))),
                    LogicalTable::View(q) => e.add(&n, "sqlQuery", RdfTerm::Literal(Literal::string(q.clone()))),
                }
                tables.insert(&tm.logical_table, n.clone());
                n
            }
        };
        e.add(&tm.id, "logicalTable", table_node);

        let sm = e.fresh();
        e.add(&tm.id, "subjectMap", sm.clone());
        e.term_map(&sm, &tm.subject_map, Position::Subject);
        for c in &tm.subject_classes {
            e.add(&sm, "class", RdfTerm::Iri(c.clone()));
        }

        for pom in &tm.poms {
            let node = e.fresh();
            e.add(&tm.id, "predicateObjectMap", node.clone());
            for p in &pom.predicates {
                e.add(&node, "predicate", RdfTerm::Iri(p.clone()));
            }
            for o in &pom.objects {
                let om = e.fresh();
                e.add(&node, "objectMap", om.clone());
                match o {
                    ObjectMap::Term(t) => e.term_map(&om, t, Position::Object),
                    ObjectMap::Ref(r) => {
                        e.add(&om, "parentTriplesMap", r.parent.clone());
                        for j in &r.joins {
                            let jn = e.fresh();
                            e.add(&om, "joinCondition", jn.clone());
                            e.add(&jn, "child", RdfTerm::Literal(Literal::string(j.child.clone())));
                            e.add(&jn, "parent", RdfTerm::Literal(Literal::string(j.parent.clone())));
                        }
                    }
                }
            }
        }
    }
    e.graph
}

impl fmt::Display for LogicalTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LogicalTable::BaseTable(t) => write!(f, "table {t}"),
            LogicalTable::View(q) => write!(f, "view \"{}\"", q.trim()),
        }
    }
}
