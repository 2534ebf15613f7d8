//! Independent oracles and random instance generators shared by the
//! integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::RngExt;
use rand_chacha::ChaCha8Rng;
use rust_decimal::Decimal;

use vkgmap::engine::{eval_sql, ColumnType, Database, Table, Value};
use vkgmap::mapping::{Head, MappingSet, OntologyMapping, Term, ViewAtom, ViewMapping};
use vkgmap::r2rml::{JoinCondition, LogicalTable, ObjectMap, PredicateObjectMap, R2rmlDocument, RefObjectMap, TermMap, TermValue, TriplesMap};
use vkgmap::rdf::{Graph, Literal, RdfTerm, Triple, RDF_TYPE, XSD_DATETIME, XSD_DECIMAL, XSD_INTEGER, XSD_STRING};
use vkgmap::sqlgen::{CompareOp, FilterCondition, FilterValue};
use vkgmap::template::{Segment, Template};
use vkgmap::vrdf::{OntologyCQ, QueryAtom, QueryTerm};

pub const R: &str = "http://r.example/";

// ---- term generation ----

fn encode(s: &str) -> String {
    let mut out = String::new();
    for b in s.bytes() {
        if b.is_ascii_alphanumeric() || b"-._~".contains(&b) {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

pub fn lexical(v: &Value) -> Option<String> {
    match v {
        Value::Null => None,
        Value::Int(i) => Some(i.to_string()),
        Value::Decimal(d) => Some(d.to_string()),
        Value::Str(s) | Value::DateTime(s) => Some(s.clone()),
    }
}

pub fn literal(v: &Value, datatype: Option<&str>) -> Option<RdfTerm> {
    let natural = match v {
        Value::Int(_) => XSD_INTEGER,
        Value::Decimal(_) => XSD_DECIMAL,
        Value::DateTime(_) => XSD_DATETIME,
        _ => XSD_STRING,
    };
    Some(RdfTerm::Literal(Literal::typed(lexical(v)?, datatype.unwrap_or(natural))))
}

pub fn expand(t: &Template, get: &dyn Fn(&str) -> Value) -> Option<String> {
    let mut out = String::new();
    for seg in t.segments() {
        match seg {
            Segment::Text(s) => out.push_str(s),
            Segment::Column(c) => out.push_str(&encode(&lexical(&get(c))?)),
        }
    }
    Some(out)
}

fn term_of(tm: &TermMap, get: &dyn Fn(&str) -> Value) -> Option<RdfTerm> {
    match &tm.value {
        TermValue::Constant(c) => Some(c.clone()),
        TermValue::Template(t) => expand(t, get).map(RdfTerm::Iri),
        TermValue::Column(c) => literal(&get(c), tm.datatype.as_deref()),
    }
}

/// Equality as the database sees it; NULL equals nothing.
pub fn sql_eq(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Null, _) | (_, Value::Null) => false,
        (Value::Int(x), Value::Int(y)) => x == y,
        (Value::Int(x), Value::Decimal(y)) | (Value::Decimal(y), Value::Int(x)) => Decimal::from(*x) == *y,
        (Value::Decimal(x), Value::Decimal(y)) => x == y,
        (Value::Str(x), Value::Str(y)) | (Value::DateTime(x), Value::DateTime(y)) => x == y,
        _ => false,
    }
}

struct Rows {
    columns: Vec<String>,
    rows: Vec<Vec<Value>>,
}

impl Rows {
    fn get(&self, row: usize, col: &str) -> Value {
        let i = self
            .columns
            .iter()
            .position(|c| c.eq_ignore_ascii_case(col))
            .unwrap_or_else(|| panic!("no column {col} in {:?}", self.columns));
        self.rows[row][i].clone()
    }
}

fn logical_rows(lt: &LogicalTable, db: &Database) -> Rows {
    match lt {
        LogicalTable::BaseTable(t) => {
            let t = db.table(t).expect("table exists");
            Rows {
                columns: t.columns.iter().map(|c| c.name.clone()).collect(),
                rows: t.rows().to_vec(),
            }
        }
        // Views go through the engine, which has its own oracle.
        LogicalTable::View(sql) => {
            let rs = eval_sql(sql, db).expect("view evaluates");
            Rows {
                columns: rs.columns.iter().map(|c| c.name.clone()).collect(),
                rows: rs.rows,
            }
        }
    }
}

/// Row-by-row R2RML term generation with nested-loop joins for
/// referencing object maps.
pub fn r2rml_oracle(doc: &R2rmlDocument, db: &Database) -> BTreeSet<Triple> {
    let mut out = BTreeSet::new();
    let mut add = |s: Option<RdfTerm>, p: &str, o: Option<RdfTerm>| {
        if let (Some(s), Some(o)) = (s, o) {
            out.insert(Triple {
                subject: s,
                predicate: RdfTerm::iri(p),
                object: o,
            });
        }
    };
    for tm in &doc.triples_maps {
        let rows = logical_rows(&tm.logical_table, db);
        for r in 0..rows.rows.len() {
            let get = |c: &str| rows.get(r, c);
            let subject = term_of(&tm.subject_map, &get);
            for c in &tm.subject_classes {
                add(subject.clone(), RDF_TYPE, Some(RdfTerm::iri(c)));
            }
            for pom in &tm.poms {
                for om in &pom.objects {
                    let objects: Vec<Option<RdfTerm>> = match om {
                        ObjectMap::Term(t) => vec![term_of(t, &get)],
                        ObjectMap::Ref(rm) => {
                            let parent = doc.get(&rm.parent).expect("parent exists");
                            if rm.joins.is_empty() && parent.logical_table == tm.logical_table {
                                vec![term_of(&parent.subject_map, &get)]
                            } else {
                                let prows = logical_rows(&parent.logical_table, db);
                                (0..prows.rows.len())
                                    .filter(|&pr| rm.joins.iter().all(|j| sql_eq(&rows.get(r, &j.child), &prows.get(pr, &j.parent))))
                                    .map(|pr| term_of(&parent.subject_map, &|c| prows.get(pr, c)))
                                    .collect()
                            }
                        }
                    };
                    for o in objects {
                        for p in &pom.predicates {
                            add(subject.clone(), p, o.clone());
                        }
                    }
                }
            }
        }
    }
    out
}

/// Mapping-assertion semantics by nested loops over the view rows.
pub fn mapping_oracle(ms: &MappingSet, db: &Database) -> BTreeSet<Triple> {
    let mut out = BTreeSet::new();
    for m in &ms.mappings {
        let views: Vec<(Vec<String>, Rows)> = m
            .body
            .iter()
            .map(|a| {
                let v = ms.view(&a.view).expect("view exists");
                let rs = eval_sql(&v.sql, db).expect("view evaluates");
                (
                    a.args.clone(),
                    Rows {
                        columns: v.attributes.clone(),
                        rows: rs.rows,
                    },
                )
            })
            .collect();
        let mut binding: BTreeMap<String, Value> = BTreeMap::new();
        bind_atoms(&views, 0, &mut binding, &mut |b| {
            let get = |v: &str| b[v].clone();
            let term = |t: &Term| -> Option<RdfTerm> {
                match t {
                    Term::Constant(c) => Some(c.clone()),
                    Term::Var(v) => literal(&get(v), None),
                    Term::Column { var, datatype } => literal(&get(var), datatype.as_deref()),
                    Term::Function { symbol, args } => {
                        let t = symbol.template();
                        let cols: Vec<String> = t.columns().map(str::to_string).collect();
                        expand(t, &|c| get(&args[cols.iter().position(|x| x == c).unwrap()]))
                            .map(RdfTerm::Iri)
                    }
                }
            };
            let s = term(&m.head.subject);
            let (p, o) = match &m.head.object {
                None => (RdfTerm::iri(RDF_TYPE), Some(RdfTerm::iri(&m.head.predicate))),
                Some(o) => (RdfTerm::iri(&m.head.predicate), term(o)),
            };
            if let (Some(s), Some(o)) = (s, o) {
                out.insert(Triple {
                    subject: s,
                    predicate: p,
                    object: o,
                });
            }
        });
    }
    out
}

fn bind_atoms(atoms: &[(Vec<String>, Rows)], i: usize, b: &mut BTreeMap<String, Value>, emit: &mut dyn FnMut(&BTreeMap<String, Value>)) {
    if i == atoms.len() {
        emit(b);
        return;
    }
    let (args, rows) = &atoms[i];
    for r in 0..rows.rows.len() {
        let saved = b.clone();
        let mut ok = true;
        for (k, var) in args.iter().enumerate() {
            let v = rows.rows[r][k].clone();
            match b.get(var) {
                Some(prev) if !sql_eq(prev, &v) => {
                    ok = false;
                    break;
                }
                Some(_) => {}
                None => {
                    b.insert(var.clone(), v);
                }
            }
        }
        if ok {
            bind_atoms(atoms, i + 1, b, emit);
        }
        *b = saved;
    }
}

// ---- CQ evaluation by subgraph matching ----

fn canonical_dt(s: &str) -> Option<chrono::NaiveDateTime> {
    chrono::NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S%.f")
        .or_else(|_| chrono::NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S%.f"))
        .ok()
        .or_else(|| chrono::NaiveDate::parse_from_str(s, "%Y-%m-%d").ok().and_then(|d| d.and_hms_opt(0, 0, 0)))
}

fn holds(ord: std::cmp::Ordering, op: CompareOp) -> bool {
    use std::cmp::Ordering::*;
    match op {
        CompareOp::Lt => ord == Less,
        CompareOp::Le => ord != Greater,
        CompareOp::Eq => ord == Equal,
        CompareOp::Ge => ord != Less,
        CompareOp::Gt => ord == Greater,
    }
}

pub fn filter_holds(t: &RdfTerm, f: &FilterCondition) -> bool {
    let RdfTerm::Literal(l) = t else { return false };
    let dt = l.datatype();
    match &f.constant {
        FilterValue::Int(_) | FilterValue::Decimal(_) => {
            if dt != XSD_INTEGER && dt != XSD_DECIMAL {
                return false;
            }
            let c = match &f.constant {
                FilterValue::Int(i) => Decimal::from(*i),
                FilterValue::Decimal(d) => *d,
                _ => unreachable!(),
            };
            match l.lexical().parse::<Decimal>() {
                Ok(v) => holds(v.cmp(&c), f.op),
                Err(_) => false,
            }
        }
        FilterValue::Str(s) => dt == XSD_STRING && holds(l.lexical().cmp(s.as_str()), f.op),
        FilterValue::DateTime(s) => {
            if dt != XSD_DATETIME && dt != vkgmap::rdf::XSD_DATE {
                return false;
            }
            match (canonical_dt(l.lexical()), canonical_dt(s)) {
                (Some(a), Some(b)) => holds(a.cmp(&b), f.op),
                _ => false,
            }
        }
    }
}

pub fn match_cq(g: &BTreeSet<Triple>, q: &OntologyCQ) -> BTreeSet<Vec<RdfTerm>> {
    let patterns: Vec<(QueryTerm, RdfTerm, QueryTerm)> = q
        .atoms
        .iter()
        .map(|a| match a.args.as_slice() {
            [s] => (s.clone(), RdfTerm::iri(RDF_TYPE), QueryTerm::Const(RdfTerm::iri(&a.predicate))),
            [s, o] => (s.clone(), RdfTerm::iri(&a.predicate), o.clone()),
            _ => panic!("bad arity"),
        })
        .collect();
    let mut out = BTreeSet::new();
    let mut b = BTreeMap::new();
    match_from(g, &patterns, 0, &mut b, &mut |b| {
        if q.filters.iter().all(|f| b.get(&f.var).is_some_and(|t| filter_holds(t, f))) {
            out.insert(q.answer_vars.iter().map(|v| b[v].clone()).collect());
        }
    });
    out
}

fn match_from(
    g: &BTreeSet<Triple>,
    ps: &[(QueryTerm, RdfTerm, QueryTerm)],
    i: usize,
    b: &mut BTreeMap<String, RdfTerm>,
    emit: &mut dyn FnMut(&BTreeMap<String, RdfTerm>),
) {
    if i == ps.len() {
        emit(b);
        return;
    }
    let (s, p, o) = &ps[i];
    for t in g {
        if &t.predicate != p {
            continue;
        }
        let saved = b.clone();
        if bind(b, s, &t.subject) && bind(b, o, &t.object) {
            match_from(g, ps, i + 1, b, emit);
        }
        *b = saved;
    }
}

fn bind(b: &mut BTreeMap<String, RdfTerm>, q: &QueryTerm, t: &RdfTerm) -> bool {
    match q {
        QueryTerm::Const(c) => c == t,
        QueryTerm::Var(v) => match b.get(v) {
            Some(x) => x == t,
            None => {
                b.insert(v.clone(), t.clone());
                true
            }
        },
    }
}

// ---- generators ----

const COLUMN_NAMES: [&str; 3] = ["A", "B", "C"];
const STRINGS: [&str; 6] = ["a", "b", "a b", "x/y", "\u{e9}t\u{e9}", "Z"];
const DECIMALS: [&str; 5] = ["1.50", "1.5", "2", "0.25", "10.00"];
const DATETIMES: [&str; 3] = ["2020-01-01T00:00:00", "2021-06-15T12:30:00", "2019-12-31T23:59:59"];

pub fn random_value(rng: &mut ChaCha8Rng, ty: ColumnType, nullable: bool) -> Value {
    if nullable && rng.random_bool(0.05) {
        return Value::Null;
    }
    match ty {
        ColumnType::Integer => Value::Int(rng.random_range(0..6)),
        ColumnType::String => Value::Str(STRINGS.choose(rng).unwrap().to_string()),
        ColumnType::Decimal => Value::Decimal(DECIMALS.choose(rng).unwrap().parse().unwrap()),
        ColumnType::Datetime => Value::DateTime(DATETIMES.choose(rng).unwrap().to_string()),
    }
}

/// Up to three tables `t0..`, each with an integer `ID` and up to three
/// more columns, holding at most 50 rows.
pub fn random_database(rng: &mut ChaCha8Rng) -> Database {
    let mut db = Database::new();
    let types = [ColumnType::Integer, ColumnType::String, ColumnType::Decimal, ColumnType::Datetime];
    for t in 0..rng.random_range(1..=3) {
        let mut cols = vec![("ID", ColumnType::Integer)];
        for c in COLUMN_NAMES.iter().take(rng.random_range(1..=3)) {
            cols.push((c, *types.choose(rng).unwrap()));
        }
        let mut table = Table::new(format!("t{t}"), &cols);
        for _ in 0..rng.random_range(0..=50) {
            let row = cols.iter().enumerate().map(|(i, (_, ty))| random_value(rng, *ty, i > 0)).collect();
            table.push(row).unwrap();
        }
        db.add_table(table).unwrap();
    }
    db
}

fn table_columns(db: &Database, t: &str) -> Vec<(String, ColumnType)> {
    db.table(t).unwrap().columns.iter().map(|c| (c.name.clone(), c.ty)).collect()
}

/// Template `k`; odd `k` has two placeholders.
pub fn template_for(k: usize) -> String {
    if k % 2 == 1 {
        format!("{R}t{k}/{{A}}/{{B}}")
    } else {
        format!("{R}t{k}/{{A}}")
    }
}

fn arity(k: usize) -> usize {
    1 + k % 2
}

pub fn random_mapping_set(rng: &mut ChaCha8Rng, db: &Database) -> MappingSet {
    let mut views = Vec::new();
    for t in db.tables() {
        let cols: Vec<String> = t.columns.iter().map(|c| c.name.clone()).collect();
        let mut sql = format!("SELECT {} FROM {}", cols.join(", "), t.name);
        if rng.random_bool(0.3) {
            sql.push_str(&format!(" WHERE ID > {}", rng.random_range(0..3)));
        }
        views.push(ViewMapping {
            name: format!("v_{}", t.name),
            attributes: cols,
            sql,
        });
    }
    let mut mappings = Vec::new();
    for m in 0..rng.random_range(1..=5) {
        let n_atoms = if rng.random_bool(0.4) { 2 } else { 1 };
        let mut body: Vec<ViewAtom> = Vec::new();
        let mut vars: Vec<String> = Vec::new();
        for a in 0..n_atoms {
            let v = views.choose(rng).unwrap();
            let mut args: Vec<String> = v.attributes.iter().map(|c| format!("x{a}_{c}")).collect();
            if a == 1 {
                // join the new atom's ID with an integer variable of the first
                let tname = body[0].view.trim_start_matches("v_").to_string();
                let ints: Vec<String> = table_columns(db, &tname)
                    .into_iter()
                    .filter(|(_, ty)| *ty == ColumnType::Integer)
                    .map(|(c, _)| format!("x0_{c}"))
                    .collect();
                args[0] = ints.choose(rng).unwrap().clone();
            }
            for x in &args {
                if !vars.contains(x) {
                    vars.push(x.clone());
                }
            }
            body.push(ViewAtom {
                view: v.name.clone(),
                args,
            });
        }
        let fun = |rng: &mut ChaCha8Rng| {
            let k = rng.random_range(0..3);
            let args: Vec<&str> = (0..arity(k)).map(|_| vars.choose(rng).unwrap().as_str()).collect();
            Term::function(&template_for(k), &args).unwrap()
        };
        let subject = fun(rng);
        let head = if rng.random_bool(0.4) {
            Head {
                predicate: format!("{R}C{}", rng.random_range(0..3)),
                subject,
                object: None,
            }
        } else {
            let object = if rng.random_bool(0.5) {
                fun(rng)
            } else {
                Term::column(vars.choose(rng).unwrap())
            };
            Head {
                predicate: format!("{R}p{}", rng.random_range(0..4)),
                subject,
                object: Some(object),
            }
        };
        mappings.push(OntologyMapping {
            id: format!("m{m}"),
            body,
            head,
        });
    }
    let ms = MappingSet {
        prefixes: [("r".to_string(), R.to_string())].into(),
        views,
        mappings,
    };
    assert_eq!(ms.validate(), vec![], "generated mapping set is valid");
    ms
}

fn template_map(rng: &mut ChaCha8Rng, cols: &[(String, ColumnType)]) -> TermMap {
    let k = rng.random_range(0..3);
    let mut s = format!("{R}t{k}");
    for _ in 0..arity(k) {
        s.push_str(&format!("/{{{}}}", cols.choose(rng).unwrap().0));
    }
    TermMap::template(Template::parse(&s).unwrap())
}

pub fn random_document(rng: &mut ChaCha8Rng, db: &Database) -> R2rmlDocument {
    let tables: Vec<String> = db.tables().map(|t| t.name.clone()).collect();
    let mut tms: Vec<TriplesMap> = Vec::new();
    for (i, t) in tables.iter().enumerate() {
        let cols = table_columns(db, t);
        let logical_table = if rng.random_bool(0.5) {
            LogicalTable::BaseTable(t.clone())
        } else {
            let names: Vec<&str> = cols.iter().map(|c| c.0.as_str()).collect();
            LogicalTable::View(format!("SELECT {} FROM {t} WHERE ID >= {}", names.join(", "), rng.random_range(0..2)))
        };
        let classes = (0..rng.random_range(0..=2)).map(|c| format!("{R}C{c}")).collect();
        let mut poms = Vec::new();
        for _ in 0..rng.random_range(0..=3) {
            let object = match rng.random_range(0..4) {
                0 => ObjectMap::Term(template_map(rng, &cols)),
                1 => ObjectMap::Term(TermMap::constant(RdfTerm::iri(format!("{R}k{}", rng.random_range(0..2))))),
                _ => ObjectMap::Term(TermMap::column(cols.choose(rng).unwrap().0.clone(), None)),
            };
            poms.push(PredicateObjectMap {
                predicates: vec![format!("{R}p{}", rng.random_range(0..4))],
                objects: vec![object],
            });
        }
        tms.push(TriplesMap {
            id: RdfTerm::iri(format!("{R}map{i}")),
            logical_table,
            subject_map: template_map(rng, &cols),
            subject_classes: classes,
            poms,
        });
    }
    // referencing object maps, joined on integer columns
    for i in 0..tms.len() {
        if !rng.random_bool(0.5) {
            continue;
        }
        let j = rng.random_range(0..tms.len());
        let child_ints: Vec<String> = table_columns(db, &tables[i]).into_iter().filter(|c| c.1 == ColumnType::Integer).map(|c| c.0).collect();
        let parent_ints: Vec<String> = table_columns(db, &tables[j]).into_iter().filter(|c| c.1 == ColumnType::Integer).map(|c| c.0).collect();
        let joins = vec![JoinCondition {
            child: child_ints.choose(rng).unwrap().clone(),
            parent: parent_ints.choose(rng).unwrap().clone(),
        }];
        let parent = tms[j].id.clone();
        tms[i].poms.push(PredicateObjectMap {
            predicates: vec![format!("{R}p{}", rng.random_range(0..4))],
            objects: vec![ObjectMap::Ref(RefObjectMap { parent, joins })],
        });
    }
    R2rmlDocument {
        triples_maps: tms,
        prefixes: BTreeMap::new(),
    }
}

pub fn random_filter(rng: &mut ChaCha8Rng, var: &str) -> FilterCondition {
    let op = *[CompareOp::Lt, CompareOp::Le, CompareOp::Eq, CompareOp::Ge, CompareOp::Gt].choose(rng).unwrap();
    let constant = match rng.random_range(0..4) {
        0 => FilterValue::Int(rng.random_range(0..6)),
        1 => FilterValue::Decimal(DECIMALS.choose(rng).unwrap().parse().unwrap()),
        2 => FilterValue::Str(STRINGS.choose(rng).unwrap().to_string()),
        _ => FilterValue::DateTime(DATETIMES.choose(rng).unwrap().to_string()),
    };
    FilterCondition {
        var: var.to_string(),
        op,
        constant,
    }
}

/// A CQ with at most four atoms over the predicates of `ms`, occasionally
/// an unmapped one, with constants drawn from `graph`.
pub fn random_cq(rng: &mut ChaCha8Rng, ms: &MappingSet, graph: &Graph) -> Option<OntologyCQ> {
    let mut preds: Vec<(String, bool)> = ms
        .mappings
        .iter()
        .map(|m| (m.head.predicate.clone(), m.head.object.is_none()))
        .collect();
    preds.push((format!("{R}p9"), false));
    let terms: Vec<RdfTerm> = graph.iter().flat_map(|t| [t.subject.clone(), t.object.clone()]).collect();
    let var_pool = ["x", "y", "z", "w"];
    let term = |rng: &mut ChaCha8Rng| {
        if !terms.is_empty() && rng.random_bool(0.15) {
            QueryTerm::Const(terms.choose(rng).unwrap().clone())
        } else {
            QueryTerm::var(var_pool.choose(rng).unwrap())
        }
    };
    let mut atoms = Vec::new();
    for _ in 0..rng.random_range(1..=4) {
        let (p, is_class) = preds.choose(rng).unwrap().clone();
        atoms.push(if is_class {
            QueryAtom::class(&p, term(rng))
        } else {
            QueryAtom::property(&p, term(rng), term(rng))
        });
    }
    let mut vars: Vec<String> = Vec::new();
    for a in &atoms {
        for t in &a.args {
            if let QueryTerm::Var(v) = t {
                if !vars.contains(v) {
                    vars.push(v.clone());
                }
            }
        }
    }
    if vars.is_empty() {
        return None;
    }
    let mut answer_vars: Vec<String> = vars.iter().filter(|_| rng.random_bool(0.6)).cloned().collect();
    if answer_vars.is_empty() {
        answer_vars.push(vars[0].clone());
    }
    let filters = if rng.random_bool(0.3) {
        let v = vars.choose(rng).unwrap().clone();
        vec![random_filter(rng, &v)]
    } else {
        vec![]
    };
    Some(OntologyCQ {
        answer_vars,
        atoms,
        filters,
        distinct: true,
    })
}
