//! Translation between R2RML documents and two-level mapping sets.
//!
//! Import turns each logical table into a view and each generated
//! assertion into an ontology mapping; referencing object maps become a
//! two-atom body joined by shared variables. Export goes the other way and
//! unfolds every multi-atom body into a generated SQL view.

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::engine::Database;
use crate::mapping::{template_to_function, Diagnostic, Head, MappingError, MappingSet, OntologyMapping, Term, ViewAtom, ViewMapping};
use crate::r2rml::{
    effective_sql_query, LogicalTable, ObjectMap, PredicateObjectMap, R2rmlDocument, TermMap, TermType, TermValue,
    TriplesMap,
};
use crate::rdf::RdfTerm;
use crate::sqlgen::{unfold_view_query, SqlGenError};
use crate::vrdf::{materialize, materialize_document, VrdfError};

#[derive(Debug, Error)]
pub enum TranslateError {
    #[error("{map}: {feature} cannot be expressed as a mapping assertion")]
    UnsupportedFeature { map: String, feature: String },
    #[error("{mapping}: the head subject must be a function term or an IRI")]
    NonFunctionSubject { mapping: String },
    #[error("{mapping}: unknown view {view}")]
    UnknownView { mapping: String, view: String },
    #[error("{map}: unknown parent triples map {parent}")]
    UnknownParent { map: String, parent: String },
    #[error("invalid mapping set:\n{}", .0.iter().map(|d| format!("  {d}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Diagnostic>),
    #[error(transparent)]
    Mapping(#[from] MappingError),
    #[error(transparent)]
    SqlGen(#[from] SqlGenError),
    #[error(transparent)]
    Vrdf(#[from] VrdfError),
}

fn normalize_ws(sql: &str) -> String {
    sql.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn local_name(id: &RdfTerm) -> String {
    match id {
        RdfTerm::Iri(i) => i.rsplit(['#', '/']).next().unwrap_or(i).to_string(),
        RdfTerm::BlankNode(b) => b.clone(),
        RdfTerm::Literal(l) => l.lexical().to_string(),
    }
}

fn show_map(tm: &TriplesMap) -> String {
    match &tm.id {
        RdfTerm::Iri(i) => format!("<{i}>"),
        other => other.to_string(),
    }
}

fn is_identifier(s: &str) -> bool {
    let mut cs = s.chars();
    matches!(cs.next(), Some(c) if c.is_ascii_alphabetic() || c == '_') && cs.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// `customers` for `SELECT C_ID, C_NAME FROM customers`.
fn first_from_table(sql: &str) -> Option<String> {
    let mut words = sql.split_whitespace();
    words.find(|w| w.eq_ignore_ascii_case("FROM"))?;
    let next = words.next()?.trim_end_matches([',', ';', ')']);
    is_identifier(next).then(|| next.to_string())
}

fn base_view_name(tm: &TriplesMap) -> String {
    let raw = match &tm.logical_table {
        LogicalTable::BaseTable(t) => t.clone(),
        LogicalTable::View(sql) => first_from_table(sql).unwrap_or_else(|| {
            let l = local_name(&tm.id);
            l.strip_suffix("Map").filter(|s| !s.is_empty()).unwrap_or(&l).to_string()
        }),
    };
    let mut name: String = raw
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c.to_ascii_lowercase() } else { '_' })
        .collect();
    if !name.starts_with(|c: char| c.is_ascii_alphabetic() || c == '_') {
        name.insert(0, 'v');
    }
    format!("{name}_view")
}

struct ImportedView {
    name: String,
    sql: String,
    attributes: Vec<String>,
}

impl ImportedView {
    fn add(&mut self, column: &str) {
        if !self.attributes.iter().any(|a| a.eq_ignore_ascii_case(column)) {
            self.attributes.push(column.to_string());
        }
    }

    fn attr(&self, column: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.eq_ignore_ascii_case(column))
    }
}

fn check_term(map: &str, tm: &TermMap, subject: bool) -> Result<(), TranslateError> {
    let unsupported = |feature: &str| {
        Err(TranslateError::UnsupportedFeature {
            map: map.to_string(),
            feature: feature.to_string(),
        })
    };
    match (&tm.value, tm.term_type) {
        (TermValue::Constant(_), _) => Ok(()),
        (_, TermType::BlankNode) => unsupported("a blank node term map"),
        (TermValue::Template(_), TermType::Iri) => Ok(()),
        (TermValue::Template(_), _) => unsupported("a literal-valued template"),
        (TermValue::Column(_), TermType::Iri) => unsupported("an IRI-valued column"),
        (TermValue::Column(_), _) if subject => unsupported("a literal subject"),
        (TermValue::Column(_), _) if tm.language.is_some() => unsupported("a language-tagged column"),
        (TermValue::Column(_), _) => Ok(()),
    }
}

fn head_term(tm: &TermMap, var: &impl Fn(&str) -> String) -> Result<Term, TranslateError> {
    Ok(match &tm.value {
        TermValue::Constant(c) => Term::Constant(c.clone()),
        TermValue::Template(t) => Term::Function {
            symbol: template_to_function(&t.to_string())?,
            args: t.columns().map(var).collect(),
        },
        TermValue::Column(c) => Term::Column {
            var: var(c),
            datatype: tm.datatype.clone(),
        },
    })
}

/// Imports a document as a view per distinct logical table plus one
/// ontology mapping per generated assertion.
pub fn import_r2rml(doc: &R2rmlDocument) -> Result<MappingSet, TranslateError> {
    let mut views: Vec<ImportedView> = Vec::new();
    let mut by_sql: HashMap<String, usize> = HashMap::new();
    let mut view_of: Vec<usize> = Vec::with_capacity(doc.triples_maps.len());

    for tm in &doc.triples_maps {
        let sql = effective_sql_query(&tm.logical_table);
        let key = normalize_ws(&sql);
        let idx = match by_sql.get(&key) {
            Some(&i) => i,
            None => {
                let base = base_view_name(tm);
                let mut name = base.clone();
                let mut n = 2;
                while views.iter().any(|v| v.name == name) {
                    name = format!("{base}_{n}");
                    n += 1;
                }
                views.push(ImportedView {
                    name,
                    sql,
                    attributes: Vec::new(),
                });
                by_sql.insert(key, views.len() - 1);
                views.len() - 1
            }
        };
        view_of.push(idx);
    }

    let index_of = |id: &RdfTerm| doc.triples_maps.iter().position(|t| &t.id == id);

    // attributes in first-mention order
    for (i, tm) in doc.triples_maps.iter().enumerate() {
        let map = show_map(tm);
        check_term(&map, &tm.subject_map, true)?;
        for c in tm.subject_map.columns() {
            views[view_of[i]].add(c);
        }
        for pom in &tm.poms {
            for o in &pom.objects {
                match o {
                    ObjectMap::Term(t) => {
                        check_term(&map, t, false)?;
                        for c in t.columns() {
                            views[view_of[i]].add(c);
                        }
                    }
                    ObjectMap::Ref(r) => {
                        let p = index_of(&r.parent).ok_or_else(|| TranslateError::UnknownParent {
                            map: map.clone(),
                            parent: r.parent.to_string(),
                        })?;
                        for j in &r.joins {
                            views[view_of[i]].add(&j.child);
                            views[view_of[p]].add(&j.parent);
                        }
                    }
                }
            }
        }
    }

    let mut mappings = Vec::new();
    for (i, tm) in doc.triples_maps.iter().enumerate() {
        let map = show_map(tm);
        let local = local_name(&tm.id);
        let view = &views[view_of[i]];
        let canonical = |c: &str| -> String {
            view.attr(c)
                .map(|k| view.attributes[k].clone())
                .unwrap_or_else(|| c.to_string())
        };
        let atom = ViewAtom {
            view: view.name.clone(),
            args: view.attributes.clone(),
        };
        let subject = head_term(&tm.subject_map, &canonical)?;
        let mut n = 0;
        let mut push = |body: Vec<ViewAtom>, predicate: &str, subject: Term, object: Option<Term>| {
            n += 1;
            mappings.push(OntologyMapping {
                id: format!("{local}-{n}"),
                body,
                head: Head {
                    predicate: predicate.to_string(),
                    subject,
                    object,
                },
            });
        };
        for class in &tm.subject_classes {
            push(vec![atom.clone()], class, subject.clone(), None);
        }
        for PredicateObjectMap { predicates, objects } in &tm.poms {
            for o in objects {
                match o {
                    ObjectMap::Term(t) => {
                        let object = head_term(t, &canonical)?;
                        for p in predicates {
                            push(vec![atom.clone()], p, subject.clone(), Some(object.clone()));
                        }
                    }
                    ObjectMap::Ref(r) => {
                        let pi = index_of(&r.parent).ok_or_else(|| TranslateError::UnknownParent {
                            map: map.clone(),
                            parent: r.parent.to_string(),
                        })?;
                        let parent_view = &views[view_of[pi]];
                        let (pvars, cvars) = join_variables(parent_view, view, r);
                        let child_var = |c: &str| view.attr(c).map_or_else(|| c.to_string(), |k| cvars[k].clone());
                        let parent_var =
                            |c: &str| parent_view.attr(c).map_or_else(|| c.to_string(), |k| pvars[k].clone());
                        let s = head_term(&tm.subject_map, &child_var)?;
                        let obj = head_term(&doc.triples_maps[pi].subject_map, &parent_var)?;
                        let body = vec![
                            ViewAtom {
                                view: parent_view.name.clone(),
                                args: pvars.clone(),
                            },
                            ViewAtom {
                                view: view.name.clone(),
                                args: cvars.clone(),
                            },
                        ];
                        for p in predicates {
                            push(body.clone(), p, s.clone(), Some(obj.clone()));
                        }
                    }
                }
            }
        }
    }

    let ms = MappingSet {
        prefixes: doc.prefixes.clone(),
        views: views
            .into_iter()
            .map(|v| ViewMapping {
                name: v.name,
                attributes: v.attributes,
                sql: v.sql,
            })
            .collect(),
        mappings,
    };
    let diags = ms.validate();
    if !diags.is_empty() {
        return Err(TranslateError::Invalid(diags));
    }
    Ok(ms)
}

/// Variable names for the parent and child atoms of a referencing object
/// map: join columns are unified, and a unified group is named after its
/// parent attribute.
fn join_variables(
    parent: &ImportedView,
    child: &ImportedView,
    r: &crate::r2rml::RefObjectMap,
) -> (Vec<String>, Vec<String>) {
    let np = parent.attributes.len();
    let n = np + child.attributes.len();
    let mut uf: Vec<usize> = (0..n).collect();
    fn find(uf: &mut [usize], mut x: usize) -> usize {
        while uf[x] != x {
            uf[x] = uf[uf[x]];
            x = uf[x];
        }
        x
    }
    for j in &r.joins {
        if let (Some(p), Some(c)) = (parent.attr(&j.parent), child.attr(&j.child)) {
            let (a, b) = (find(&mut uf, p), find(&mut uf, np + c));
            // the smaller index is the root, so parent attributes win
            uf[a.max(b)] = a.min(b);
        }
    }
    let mut names: BTreeMap<usize, String> = BTreeMap::new();
    let mut taken: Vec<String> = Vec::new();
    for (k, a) in parent.attributes.iter().enumerate() {
        let root = find(&mut uf, k);
        if root == k {
            names.insert(root, a.clone());
            taken.push(a.clone());
        }
    }
    for (k, a) in child.attributes.iter().enumerate() {
        let root = find(&mut uf, np + k);
        if root == np + k {
            let mut name = a.clone();
            while taken.contains(&name) {
                name.push_str("_child");
            }
            taken.push(name.clone());
            names.insert(root, name);
        }
    }
    let pvars = (0..np).map(|k| names[&find(&mut uf, k)].clone()).collect();
    let cvars = (np..n).map(|k| names[&find(&mut uf, k)].clone()).collect();
    (pvars, cvars)
}

fn mapping_label(i: usize, m: &OntologyMapping) -> String {
    if m.id.is_empty() {
        format!("mapping #{}", i + 1)
    } else {
        format!("mapping {}", m.id)
    }
}

fn export_term(t: &Term, column: &impl Fn(&str) -> String) -> TermMap {
    match t {
        Term::Function { symbol, args } => {
            let cols: Vec<String> = args.iter().map(|a| column(a)).collect();
            TermMap::template(symbol.template().with_columns(&cols))
        }
        Term::Column { var, datatype } => TermMap::column(column(var), datatype.clone()),
        Term::Var(v) => TermMap::column(column(v), None),
        Term::Constant(c) => TermMap::constant(c.clone()),
    }
}

/// Exports one triples map per ontology mapping. Single-atom bodies reuse
/// the view query as logical table; conjunctions become a generated view.
pub fn export_r2rml(ms: &MappingSet) -> Result<R2rmlDocument, TranslateError> {
    for (i, m) in ms.mappings.iter().enumerate() {
        if !matches!(m.head.subject, Term::Function { .. } | Term::Constant(RdfTerm::Iri(_))) {
            return Err(TranslateError::NonFunctionSubject {
                mapping: mapping_label(i, m),
            });
        }
        if let Some(a) = m.body.iter().find(|a| ms.view(&a.view).is_none()) {
            return Err(TranslateError::UnknownView {
                mapping: mapping_label(i, m),
                view: a.view.clone(),
            });
        }
    }
    let diags = ms.validate();
    if !diags.is_empty() {
        return Err(TranslateError::Invalid(diags));
    }

    let mut triples_maps: Vec<TriplesMap> = Vec::new();
    for m in &ms.mappings {
        let head_vars: Vec<&str> = m.head.vars();
        let single = m.body.len() == 1 && {
            let args = &m.body[0].args;
            (0..args.len()).all(|i| !args[..i].contains(&args[i]))
        };
        let (logical_table, columns): (LogicalTable, HashMap<String, String>) = if single {
            let atom = &m.body[0];
            let view = ms.view(&atom.view).expect("checked above");
            let cols = atom.args.iter().cloned().zip(view.attributes.iter().cloned()).collect();
            (LogicalTable::View(view.sql.trim().to_string()), cols)
        } else {
            // head variables in order of first occurrence in the body
            let mut order: Vec<&str> = Vec::new();
            for a in &m.body {
                for v in &a.args {
                    if head_vars.contains(&v.as_str()) && !order.contains(&v.as_str()) {
                        order.push(v);
                    }
                }
            }
            let mut aliases: Vec<String> = Vec::new();
            for (k, v) in order.iter().enumerate() {
                let mut alias = if is_identifier(v) { v.to_string() } else { format!("col{}", k + 1) };
                let base = alias.clone();
                let mut n = 2;
                while aliases.iter().any(|a| a.eq_ignore_ascii_case(&alias)) {
                    alias = format!("{base}_{n}");
                    n += 1;
                }
                aliases.push(alias);
            }
            let projection: Vec<(String, String)> =
                order.iter().map(|v| v.to_string()).zip(aliases.iter().cloned()).collect();
            let sql = unfold_view_query(&m.body, &projection, &[], &ms.views)?;
            (LogicalTable::View(sql), projection.into_iter().collect())
        };
        let column = |v: &str| columns.get(v).cloned().unwrap_or_else(|| v.to_string());

        let base = format!("{}Map", m.head.predicate);
        let mut id = base.clone();
        let mut n = 2;
        while triples_maps.iter().any(|t| t.id.as_iri() == Some(id.as_str())) {
            id = format!("{base}{n}");
            n += 1;
        }
        let subject_map = export_term(&m.head.subject, &column);
        let (subject_classes, poms) = match &m.head.object {
            None => (vec![m.head.predicate.clone()], Vec::new()),
            Some(o) => (
                Vec::new(),
                vec![PredicateObjectMap {
                    predicates: vec![m.head.predicate.clone()],
                    objects: vec![ObjectMap::Term(export_term(o, &column))],
                }],
            ),
        };
        triples_maps.push(TriplesMap {
            id: RdfTerm::Iri(id),
            logical_table,
            subject_map,
            subject_classes,
            poms,
        });
    }
    Ok(R2rmlDocument {
        triples_maps,
        prefixes: ms.prefixes.clone(),
    })
}

/// Whether exporting and re-importing `ms` keeps its virtual graph over `db`.
pub fn semantic_roundtrip_check(ms: &MappingSet, db: &Database) -> Result<bool, TranslateError> {
    let before = materialize(ms, db)?;
    let after = materialize(&import_r2rml(&export_r2rml(ms)?)?, db)?;
    Ok(before.triples() == after.triples())
}

/// Whether importing `doc` keeps the graph its R2RML semantics give over `db`.
pub fn import_preserves_semantics(doc: &R2rmlDocument, db: &Database) -> Result<bool, TranslateError> {
    let direct = materialize_document(doc, db)?;
    let imported = materialize(&import_r2rml(doc)?, db)?;
    Ok(direct.triples() == imported.triples())
}
