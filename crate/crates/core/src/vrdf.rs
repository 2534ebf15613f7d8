//! The virtual RDF graph of a mapping over a database: materialization, and
//! conjunctive query answering by unfolding through the ontology mappings.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::str::FromStr;
use std::time::Instant;

use rust_decimal::Decimal;
use thiserror::Error;

use crate::engine::{canonical_datetime, eval_sql, Database, EngineError, RowSet, Value};
use crate::exec::Execution;
use crate::mapping::{MappingSet, OntologyMapping, Term, ViewAtom};
use crate::r2rml::{effective_sql_query, joint_sql_query, ObjectMap, R2rmlDocument, TermMap, TermType, TermValue, TriplesMap};
use crate::rdf::{
    Graph, Literal, RdfTerm, Triple, RDF_TYPE, XSD_DATE, XSD_DATETIME, XSD_DECIMAL, XSD_DOUBLE, XSD_INTEGER, XSD_STRING,
};
use crate::sqlgen::{unfold_view_query, unfold_view_query_with, CompareOp, FilterCondition, FilterValue, SqlGenError};

#[derive(Debug, Error)]
pub enum VrdfError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    SqlGen(#[from] SqlGenError),
    #[error("FILTER on ?{0} is not supported: the variable is bound to IRIs built from templates")]
    UnsupportedFilter(String),
    #[error("{map}: {reason}")]
    UnsupportedTermMap { map: String, reason: String },
    #[error("{map}: unknown parent triples map {parent}")]
    UnknownParent { map: String, parent: String },
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("{0}")]
    InvalidTriple(String),
}

pub fn natural_datatype(v: &Value) -> &'static str {
    match v {
        Value::Int(_) => XSD_INTEGER,
        Value::Decimal(_) => XSD_DECIMAL,
        Value::DateTime(_) => XSD_DATETIME,
        Value::Str(_) | Value::Null => XSD_STRING,
    }
}

/// The literal for a column value, `None` for NULL.
pub fn value_literal(v: &Value, datatype: Option<&str>) -> Option<RdfTerm> {
    if v.is_null() {
        return None;
    }
    let dt = datatype.unwrap_or_else(|| natural_datatype(v));
    Some(RdfTerm::Literal(Literal::typed(v.to_string(), dt)))
}

/// Builds a head term from a row; `None` when a referenced value is NULL.
fn build_term<'v>(t: &Term, get: &impl Fn(&str) -> &'v Value) -> Option<RdfTerm> {
    match t {
        Term::Constant(c) => Some(c.clone()),
        Term::Var(v) => value_literal(get(v), None),
        Term::Column { var, datatype } => value_literal(get(var), datatype.as_deref()),
        Term::Function { symbol, args } => {
            let mut vals = Vec::with_capacity(args.len());
            for a in args {
                let v = get(a);
                if v.is_null() {
                    return None;
                }
                vals.push(v.to_string());
            }
            Some(RdfTerm::Iri(symbol.template().expand_iri(&vals)))
        }
    }
}

fn triple(s: RdfTerm, p: &str, o: RdfTerm) -> Result<Triple, VrdfError> {
    Triple::new(s, RdfTerm::iri(p), o).map_err(|e| VrdfError::InvalidTriple(e.to_string()))
}

fn dedup<'a>(vars: impl IntoIterator<Item = &'a str>) -> Vec<&'a str> {
    let mut seen = HashSet::new();
    vars.into_iter().filter(|v| seen.insert(*v)).collect()
}

fn mapping_triples(ms: &MappingSet, m: &OntologyMapping, db: &Database) -> Result<Vec<Triple>, VrdfError> {
    let vars = dedup(m.head.vars());
    let projection: Vec<(String, String)> = vars
        .iter()
        .enumerate()
        .map(|(i, v)| (v.to_string(), format!("c{i}")))
        .collect();
    let sql = unfold_view_query(&m.body, &projection, &[], &ms.views)?;
    let rs = eval_sql(&sql, db)?;
    let index: HashMap<&str, usize> = vars.iter().enumerate().map(|(i, v)| (*v, i)).collect();
    let mut out = Vec::with_capacity(rs.rows.len());
    for row in &rs.rows {
        let get = |v: &str| &row[index[v]];
        let Some(s) = build_term(&m.head.subject, &get) else {
            continue;
        };
        match &m.head.object {
            None => out.push(triple(s, RDF_TYPE, RdfTerm::iri(&m.head.predicate))?),
            Some(o) => {
                if let Some(o) = build_term(o, &get) {
                    out.push(triple(s, &m.head.predicate, o)?);
                }
            }
        }
    }
    Ok(out)
}

/// The triple set of a mapping set over `db`.
pub fn materialize_with(ms: &MappingSet, db: &Database, exec: Execution) -> Result<Graph, VrdfError> {
    let parts = exec.try_map(&ms.mappings, |m| mapping_triples(ms, m, db))?;
    let mut g = Graph::new();
    g.set_prefixes(&ms.prefixes);
    for p in parts {
        g.extend(p);
    }
    Ok(g)
}

pub fn materialize(ms: &MappingSet, db: &Database) -> Result<Graph, VrdfError> {
    materialize_with(ms, db, Execution::default())
}

/// Direct R2RML semantics over the logical tables and joint queries,
/// independent of any mapping set.
pub fn materialize_document_with(doc: &R2rmlDocument, db: &Database, exec: Execution) -> Result<Graph, VrdfError> {
    let parts = exec.try_map(&doc.triples_maps, |tm| triples_map_triples(doc, tm, db))?;
    let mut g = Graph::new();
    g.set_prefixes(&doc.prefixes);
    for p in parts {
        g.extend(p);
    }
    Ok(g)
}

pub fn materialize_document(doc: &R2rmlDocument, db: &Database) -> Result<Graph, VrdfError> {
    materialize_document_with(doc, db, Execution::default())
}

fn map_name(tm: &TriplesMap) -> String {
    match &tm.id {
        RdfTerm::Iri(i) => format!("<{i}>"),
        other => other.to_string(),
    }
}

fn column_index(rs: &RowSet, qualifier: Option<&str>, maps: &[&TermMap]) -> Result<HashMap<String, usize>, VrdfError> {
    let mut out = HashMap::new();
    for tm in maps {
        for c in tm.columns() {
            out.insert(c.to_string(), rs.index_of(qualifier, c)?);
        }
    }
    Ok(out)
}

fn generate<'v>(map: &str, tm: &TermMap, get: &impl Fn(&str) -> &'v Value) -> Result<Option<RdfTerm>, VrdfError> {
    if tm.term_type == TermType::BlankNode && !matches!(tm.value, TermValue::Constant(_)) {
        return Err(VrdfError::UnsupportedTermMap {
            map: map.to_string(),
            reason: "blank node term maps are not supported".into(),
        });
    }
    let literal = |lex: String| {
        RdfTerm::Literal(match (&tm.language, &tm.datatype) {
            (Some(l), _) => Literal::lang(lex, l.as_str()),
            (None, Some(d)) => Literal::typed(lex, d.as_str()),
            (None, None) => Literal::string(lex),
        })
    };
    Ok(match &tm.value {
        TermValue::Constant(c) => Some(c.clone()),
        TermValue::Column(c) => {
            let v = get(c);
            if v.is_null() {
                None
            } else if tm.term_type == TermType::Iri {
                Some(RdfTerm::Iri(v.to_string()))
            } else if tm.language.is_some() {
                Some(literal(v.to_string()))
            } else {
                value_literal(v, tm.datatype.as_deref())
            }
        }
        TermValue::Template(t) => {
            let mut vals = Vec::new();
            for c in t.columns() {
                let v = get(c);
                if v.is_null() {
                    return Ok(None);
                }
                vals.push(v.to_string());
            }
            if tm.term_type == TermType::Iri {
                Some(RdfTerm::Iri(t.expand_iri(&vals)))
            } else {
                Some(literal(t.expand_plain(&vals)))
            }
        }
    })
}

fn triples_map_triples(doc: &R2rmlDocument, tm: &TriplesMap, db: &Database) -> Result<Vec<Triple>, VrdfError> {
    let name = map_name(tm);
    let mut out = Vec::new();

    let rs = eval_sql(&effective_sql_query(&tm.logical_table), db)?;
    let mut maps = vec![&tm.subject_map];
    for pom in &tm.poms {
        for o in &pom.objects {
            if let ObjectMap::Term(t) = o {
                maps.push(t);
            }
        }
    }
    let index = column_index(&rs, None, &maps)?;
    for row in &rs.rows {
        let get = |c: &str| &row[index[c]];
        let Some(s) = generate(&name, &tm.subject_map, &get)? else {
            continue;
        };
        for class in &tm.subject_classes {
            out.push(triple(s.clone(), RDF_TYPE, RdfTerm::iri(class))?);
        }
        for pom in &tm.poms {
            for o in &pom.objects {
                let ObjectMap::Term(om) = o else { continue };
                if let Some(o) = generate(&name, om, &get)? {
                    for p in &pom.predicates {
                        out.push(triple(s.clone(), p, o.clone())?);
                    }
                }
            }
        }
    }

    for pom in &tm.poms {
        for o in &pom.objects {
            let ObjectMap::Ref(r) = o else { continue };
            let parent = doc.get(&r.parent).ok_or_else(|| VrdfError::UnknownParent {
                map: name.clone(),
                parent: r.parent.to_string(),
            })?;
            let rs = eval_sql(&joint_sql_query(&tm.logical_table, &parent.logical_table, &r.joins), db)?;
            let child_index = column_index(&rs, Some("child"), &[&tm.subject_map])?;
            let parent_index = column_index(&rs, Some("parent"), &[&parent.subject_map])?;
            for row in &rs.rows {
                let Some(s) = generate(&name, &tm.subject_map, &|c: &str| &row[child_index[c]])? else {
                    continue;
                };
                let Some(obj) = generate(&name, &parent.subject_map, &|c: &str| &row[parent_index[c]])? else {
                    continue;
                };
                for p in &pom.predicates {
                    out.push(triple(s.clone(), p, obj.clone())?);
                }
            }
        }
    }
    Ok(out)
}

// ---- conjunctive queries ----

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum QueryTerm {
    Var(String),
    Const(RdfTerm),
}

impl QueryTerm {
    pub fn var(name: &str) -> Self {
        QueryTerm::Var(name.to_string())
    }
}

/// `C(t)` when `args` has one element, `P(t1, t2)` when it has two.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QueryAtom {
    pub predicate: String,
    pub args: Vec<QueryTerm>,
}

impl QueryAtom {
    pub fn class(class: &str, t: QueryTerm) -> Self {
        QueryAtom {
            predicate: class.to_string(),
            args: vec![t],
        }
    }

    pub fn property(p: &str, s: QueryTerm, o: QueryTerm) -> Self {
        QueryAtom {
            predicate: p.to_string(),
            args: vec![s, o],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OntologyCQ {
    pub answer_vars: Vec<String>,
    pub atoms: Vec<QueryAtom>,
    pub filters: Vec<FilterCondition>,
    pub distinct: bool,
}

impl OntologyCQ {
    /// Variables of the atoms in order of first occurrence.
    pub fn vars(&self) -> Vec<&str> {
        dedup(self.atoms.iter().flat_map(|a| {
            a.args.iter().filter_map(|t| match t {
                QueryTerm::Var(v) => Some(v.as_str()),
                QueryTerm::Const(_) => None,
            })
        }))
    }

    pub fn check(&self) -> Result<(), VrdfError> {
        if self.atoms.is_empty() {
            return Err(VrdfError::InvalidQuery("the query has no atoms".into()));
        }
        let vars: HashSet<&str> = self.vars().into_iter().collect();
        for a in &self.atoms {
            if a.args.is_empty() || a.args.len() > 2 {
                return Err(VrdfError::InvalidQuery(format!("atom {} has {} arguments", a.predicate, a.args.len())));
            }
        }
        for v in &self.answer_vars {
            if !vars.contains(v.as_str()) {
                return Err(VrdfError::InvalidQuery(format!("answer variable ?{v} does not occur in the atoms")));
            }
        }
        for f in &self.filters {
            if !vars.contains(f.var.as_str()) {
                return Err(VrdfError::InvalidQuery(format!("filtered variable ?{} does not occur in the atoms", f.var)));
            }
        }
        Ok(())
    }
}

/// Whether a literal satisfies a comparison, by value: numbers numerically,
/// strings and date-times lexically after normalization. Mismatched kinds
/// never compare.
pub fn filter_matches(term: &RdfTerm, f: &FilterCondition) -> bool {
    let Some(l) = term.as_literal() else {
        return false;
    };
    let ord = match &f.constant {
        FilterValue::Int(_) | FilterValue::Decimal(_) => {
            if !is_numeric(l.datatype()) {
                return false;
            }
            let Some(x) = parse_number(l.lexical()) else {
                return false;
            };
            let y = match &f.constant {
                FilterValue::Int(i) => Decimal::from(*i),
                FilterValue::Decimal(d) => *d,
                _ => unreachable!(),
            };
            x.cmp(&y)
        }
        FilterValue::Str(s) => {
            if l.datatype() != XSD_STRING {
                return false;
            }
            l.lexical().cmp(s.as_str())
        }
        FilterValue::DateTime(d) => {
            if l.datatype() != XSD_DATETIME && l.datatype() != XSD_DATE {
                return false;
            }
            match (canonical_datetime(l.lexical()), canonical_datetime(d)) {
                (Some(x), Some(y)) => x.cmp(&y),
                _ => return false,
            }
        }
    };
    f.op.holds(ord)
}

fn is_numeric(dt: &str) -> bool {
    let Some(local) = dt.strip_prefix(crate::rdf::XSD_NS) else {
        return false;
    };
    dt == XSD_DOUBLE
        || matches!(
            local,
            "integer"
                | "decimal"
                | "float"
                | "int"
                | "long"
                | "short"
                | "byte"
                | "nonNegativeInteger"
                | "positiveInteger"
                | "nonPositiveInteger"
                | "negativeInteger"
                | "unsignedInt"
                | "unsignedLong"
        )
}

fn parse_number(s: &str) -> Option<Decimal> {
    let s = s.trim();
    Decimal::from_str(s).ok().or_else(|| Decimal::from_scientific(s).ok())
}

/// One SQL query of an unfolding, with what is needed to turn its rows into
/// answer tuples.
#[derive(Debug, Clone, PartialEq)]
pub struct Unfolding {
    pub sql: String,
    columns: Vec<String>,
    answers: Vec<Term>,
    checks: Vec<(Term, Term)>,
    filters: Vec<(Term, FilterCondition)>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct UnfoldResult {
    pub unfoldings: Vec<Unfolding>,
    /// Number of atom-to-mapping assignments considered, before unification
    /// discards any.
    pub combinations: u128,
}

impl UnfoldResult {
    pub fn sqls(&self) -> Vec<&str> {
        self.unfoldings.iter().map(|u| u.sql.as_str()).collect()
    }
}

#[derive(Clone, Default)]
struct State {
    parent: HashMap<String, String>,
    bindings: HashMap<String, Term>,
    filters: Vec<FilterCondition>,
    checks: Vec<(Term, Term)>,
}

impl State {
    fn find(&self, v: &str) -> String {
        let mut cur = v;
        while let Some(p) = self.parent.get(cur) {
            cur = p;
        }
        cur.to_string()
    }

    fn union(&mut self, a: &str, b: &str) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent.insert(rb, ra);
        }
    }
}

fn str_filter(var: &str, value: &str) -> FilterCondition {
    FilterCondition {
        var: var.to_string(),
        op: CompareOp::Eq,
        constant: FilterValue::Str(value.to_string()),
    }
}

/// Unifies two RDF-valued terms; each returned state is one way they can
/// denote the same term.
fn unify(a: &Term, b: &Term, mut st: State) -> Vec<State> {
    match (a, b) {
        (Term::Function { symbol: s1, args: a1 }, Term::Function { symbol: s2, args: a2 }) => {
            if s1 != s2 {
                return Vec::new();
            }
            for (x, y) in a1.iter().zip(a2) {
                st.union(x, y);
            }
            // SQL equality is numeric, IRI equality is lexical: 1.50 = 1.5
            st.checks.push((a.clone(), b.clone()));
            vec![st]
        }
        (Term::Function { symbol, args }, Term::Constant(c)) | (Term::Constant(c), Term::Function { symbol, args }) => {
            let Some(iri) = c.as_iri() else {
                return Vec::new();
            };
            symbol
                .template()
                .inverse_match(iri)
                .into_iter()
                .map(|values| {
                    let mut s = st.clone();
                    for (var, val) in args.iter().zip(&values) {
                        s.filters.push(str_filter(var, val));
                    }
                    s
                })
                .collect()
        }
        (Term::Column { var: v1, datatype: d1 }, Term::Column { var: v2, datatype: d2 }) => {
            if let (Some(x), Some(y)) = (d1, d2) {
                if x != y {
                    return Vec::new();
                }
            }
            st.union(v1, v2);
            st.checks.push((a.clone(), b.clone()));
            vec![st]
        }
        (Term::Column { var, datatype }, Term::Constant(c)) | (Term::Constant(c), Term::Column { var, datatype }) => {
            let Some(l) = c.as_literal() else {
                return Vec::new();
            };
            if l.language().is_some() || datatype.as_deref().is_some_and(|d| d != l.datatype()) {
                return Vec::new();
            }
            st.filters.push(str_filter(var, l.lexical()));
            st.checks.push((a.clone(), b.clone()));
            vec![st]
        }
        (Term::Constant(x), Term::Constant(y)) => {
            if x == y {
                vec![st]
            } else {
                Vec::new()
            }
        }
        // IRIs never equal literals; bare variables were normalized away
        _ => Vec::new(),
    }
}

fn solve(pairs: &[(QueryTerm, Term)], st: State, out: &mut Vec<State>) {
    let Some(((qt, ht), rest)) = pairs.split_first() else {
        out.push(st);
        return;
    };
    let next = match qt {
        QueryTerm::Var(v) => match st.bindings.get(v).cloned() {
            None => {
                let mut s = st;
                s.bindings.insert(v.clone(), ht.clone());
                vec![s]
            }
            Some(bound) => unify(&bound, ht, st),
        },
        QueryTerm::Const(c) => unify(&Term::Constant(c.clone()), ht, st),
    };
    for s in next {
        solve(rest, s, out);
    }
}

fn normalize(t: &Term, prefix: &str) -> Term {
    let t = match t {
        Term::Var(v) => Term::column(v),
        other => other.clone(),
    };
    t.rename(&|v| format!("{prefix}{v}"))
}

/// Rewrites `q` into a union of SQL queries over the views of `ms`: one per
/// way of assigning each atom to a mapping whose head unifies with it.
pub fn unfold_ontology_query(q: &OntologyCQ, ms: &MappingSet) -> Result<UnfoldResult, VrdfError> {
    q.check()?;
    let candidates: Vec<Vec<&OntologyMapping>> = q
        .atoms
        .iter()
        .map(|a| {
            ms.mappings
                .iter()
                .filter(|m| m.head.predicate == a.predicate && m.head.is_class() == (a.args.len() == 1))
                .collect()
        })
        .collect();
    let combinations = candidates.iter().fold(1u128, |acc, c| acc.saturating_mul(c.len() as u128));
    let mut result = UnfoldResult {
        unfoldings: Vec::new(),
        combinations,
    };
    if combinations == 0 {
        return Ok(result);
    }

    let mut choice = vec![0usize; q.atoms.len()];
    loop {
        unfold_combination(q, ms, &candidates, &choice, &mut result.unfoldings)?;
        // odometer over the candidate lists, last atom fastest
        let mut k = choice.len();
        loop {
            if k == 0 {
                return Ok(result);
            }
            k -= 1;
            choice[k] += 1;
            if choice[k] < candidates[k].len() {
                break;
            }
            choice[k] = 0;
        }
    }
}

fn unfold_combination(
    q: &OntologyCQ,
    ms: &MappingSet,
    candidates: &[Vec<&OntologyMapping>],
    choice: &[usize],
    out: &mut Vec<Unfolding>,
) -> Result<(), VrdfError> {
    let mut body: Vec<ViewAtom> = Vec::new();
    let mut pairs = Vec::new();
    let mut guards: Vec<String> = Vec::new();
    for (i, atom) in q.atoms.iter().enumerate() {
        let m = candidates[i][choice[i]];
        let prefix = format!("a{i}_");
        body.extend(m.body.iter().map(|b| ViewAtom {
            view: b.view.clone(),
            args: b.args.iter().map(|v| format!("{prefix}{v}")).collect(),
        }));
        let subject = normalize(&m.head.subject, &prefix);
        guards.extend(subject.vars().into_iter().map(str::to_string));
        pairs.push((atom.args[0].clone(), subject));
        if let Some(o) = &m.head.object {
            let object = normalize(o, &prefix);
            guards.extend(object.vars().into_iter().map(str::to_string));
            pairs.push((atom.args[1].clone(), object));
        }
    }

    let mut states = Vec::new();
    solve(&pairs, State::default(), &mut states);

    'states: for st in states {
        let mut sql_filters: Vec<FilterCondition> = st
            .filters
            .iter()
            .map(|f| FilterCondition {
                var: st.find(&f.var),
                ..f.clone()
            })
            .collect();
        let mut post_filters = Vec::new();
        for f in &q.filters {
            match &st.bindings[&f.var] {
                Term::Column { var, .. } | Term::Var(var) => {
                    sql_filters.push(FilterCondition {
                        var: st.find(var),
                        ..f.clone()
                    });
                    post_filters.push((st.bindings[&f.var].clone(), f.clone()));
                }
                Term::Constant(c) => {
                    if !filter_matches(c, f) {
                        continue 'states;
                    }
                }
                Term::Function { .. } => return Err(VrdfError::UnsupportedFilter(f.var.clone())),
            }
        }
        // every variable keeps its own column so that checks compare the
        // values each side actually produced
        let columns: Vec<String> = dedup(guards.iter().map(String::as_str))
            .into_iter()
            .map(str::to_string)
            .collect();
        let projection: Vec<(String, String)> = columns
            .iter()
            .enumerate()
            .map(|(i, v)| (v.clone(), format!("c{i}")))
            .collect();
        // each variable is equated with the first-seen member of its class
        let mut equalities: Vec<(String, String)> = Vec::new();
        let mut first_seen: HashMap<String, String> = HashMap::new();
        for v in body.iter().flat_map(|a| &a.args) {
            match first_seen.get(&st.find(v)) {
                None => {
                    first_seen.insert(st.find(v), v.clone());
                }
                Some(f) if f != v && !equalities.iter().any(|(_, x)| x == v) => equalities.push((f.clone(), v.clone())),
                Some(_) => {}
            }
        }
        let sql = unfold_view_query_with(&body, &projection, &equalities, &sql_filters, &ms.views)?;
        out.push(Unfolding {
            sql,
            answers: q.answer_vars.iter().map(|v| st.bindings[v].clone()).collect(),
            checks: st.checks.clone(),
            filters: post_filters,
            columns,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Timing {
    pub unfold_ms: f64,
    pub sql_ms: f64,
    pub result_ms: f64,
}

impl Timing {
    pub fn total_ms(&self) -> f64 {
        self.unfold_ms + self.sql_ms + self.result_ms
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnswerSet {
    pub vars: Vec<String>,
    pub rows: Vec<Vec<RdfTerm>>,
    pub unfoldings: usize,
    pub combinations: u128,
    pub timing: Timing,
}

impl AnswerSet {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row_set(&self) -> BTreeSet<Vec<RdfTerm>> {
        self.rows.iter().cloned().collect()
    }
}

fn unfolding_rows(u: &Unfolding, rs: &RowSet) -> Vec<Vec<RdfTerm>> {
    let index: HashMap<&str, usize> = u.columns.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let mut out = Vec::new();
    'rows: for row in &rs.rows {
        if row.iter().any(Value::is_null) {
            continue;
        }
        let get = |v: &str| &row[index[v]];
        for (a, b) in &u.checks {
            if build_term(a, &get) != build_term(b, &get) {
                continue 'rows;
            }
        }
        for (t, f) in &u.filters {
            match build_term(t, &get) {
                Some(term) if filter_matches(&term, f) => {}
                _ => continue 'rows,
            }
        }
        let answer: Option<Vec<RdfTerm>> = u.answers.iter().map(|t| build_term(t, &get)).collect();
        if let Some(a) = answer {
            out.push(a);
        }
    }
    out
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1000.0
}

pub fn answer_cq_with(q: &OntologyCQ, ms: &MappingSet, db: &Database, exec: Execution) -> Result<AnswerSet, VrdfError> {
    let t0 = Instant::now();
    let unfolded = unfold_ontology_query(q, ms)?;
    let unfold_ms = ms_since(t0);

    let t1 = Instant::now();
    let results = exec.try_map(&unfolded.unfoldings, |u| eval_sql(&u.sql, db))?;
    let sql_ms = ms_since(t1);

    let t2 = Instant::now();
    let pairs: Vec<(&Unfolding, &RowSet)> = unfolded.unfoldings.iter().zip(&results).collect();
    let parts = exec.map(&pairs, |(u, rs)| unfolding_rows(u, rs));
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for part in parts {
        for r in part {
            if !q.distinct || seen.insert(r.clone()) {
                rows.push(r);
            }
        }
    }
    let result_ms = ms_since(t2);

    Ok(AnswerSet {
        vars: q.answer_vars.clone(),
        rows,
        unfoldings: unfolded.unfoldings.len(),
        combinations: unfolded.combinations,
        timing: Timing {
            unfold_ms,
            sql_ms,
            result_ms,
        },
    })
}

pub fn answer_cq(q: &OntologyCQ, ms: &MappingSet, db: &Database) -> Result<AnswerSet, VrdfError> {
    answer_cq_with(q, ms, db, Execution::default())
}
