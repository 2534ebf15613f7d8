//! The two-level mapping pair: view mappings (SQL query to view predicate)
//! and ontology mappings (conjunction of view atoms to one ontology atom).

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::rdf::{Literal, RdfTerm, XSD_STRING};
use crate::template::{Template, TemplateError};

#[derive(Debug, Error)]
pub enum MappingError {
    #[error("template '{0}' has no placeholders")]
    NoPlaceholders(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("malformed mapping document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid mapping set:\n{}", render_diagnostics(.0))]
    Invalid(Vec<Diagnostic>),
}

fn render_diagnostics(ds: &[Diagnostic]) -> String {
    ds.iter().map(|d| format!("  {d}")).collect::<Vec<_>>().join("\n")
}

/// An IRI template seen as a function symbol. Symbols compare by template
/// skeleton, so `http://e/{A}` and `http://e/{B}` are the same function.
#[derive(Debug, Clone)]
pub struct FunctionSymbol {
    pub name: String,
    template: Template,
    source: String,
}

impl FunctionSymbol {
    pub fn template(&self) -> &Template {
        &self.template
    }

    pub fn arity(&self) -> usize {
        self.template.arity()
    }

    pub fn skeleton(&self) -> String {
        self.template.skeleton()
    }
}

impl PartialEq for FunctionSymbol {
    fn eq(&self, other: &Self) -> bool {
        self.skeleton() == other.skeleton()
    }
}

impl Eq for FunctionSymbol {}

impl Hash for FunctionSymbol {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.skeleton().hash(state);
    }
}

pub fn template_to_function(template: &str) -> Result<FunctionSymbol, MappingError> {
    let parsed = Template::parse(template)?;
    if parsed.arity() == 0 {
        return Err(MappingError::NoPlaceholders(template.to_string()));
    }
    Ok(FunctionSymbol {
        name: base_name(&parsed),
        template: parsed,
        source: template.to_string(),
    })
}

pub fn function_to_template(f: &FunctionSymbol) -> String {
    f.source.clone()
}

/// `http://data.example.com/customer/{C_ID}` is named `customer`.
fn base_name(t: &Template) -> String {
    let prefix = match t.segments().first() {
        Some(crate::template::Segment::Text(s)) => s.as_str(),
        _ => "",
    };
    let trimmed = prefix.trim_end_matches(|c: char| !c.is_alphanumeric());
    let last = trimmed
        .rsplit(['/', '#', ':', '?', '=', '&'])
        .next()
        .unwrap_or("");
    let mut name: String = last
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
        .collect();
    if name.is_empty() || name.starts_with(|c: char| c.is_ascii_digit()) {
        name.insert(0, 'f');
    }
    name
}

/// Display names for a set of templates, made unique by suffixing a hash of
/// the template where base names collide.
pub fn symbol_names<'a>(templates: impl IntoIterator<Item = &'a FunctionSymbol>) -> BTreeMap<String, String> {
    let mut by_skeleton: BTreeMap<String, &FunctionSymbol> = BTreeMap::new();
    for f in templates {
        by_skeleton.entry(f.skeleton()).or_insert(f);
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for f in by_skeleton.values() {
        *counts.entry(f.name.as_str()).or_default() += 1;
    }
    by_skeleton
        .iter()
        .map(|(sk, f)| {
            let name = if counts[f.name.as_str()] > 1 {
                let digest = Sha256::digest(sk.as_bytes());
                let hex: String = digest.iter().take(4).map(|b| format!("{b:02x}")).collect();
                format!("{}_{hex}", f.name)
            } else {
                f.name.clone()
            };
            (sk.clone(), name)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "TermRepr", into = "TermRepr")]
pub enum Term {
    Var(String),
    Function { symbol: FunctionSymbol, args: Vec<String> },
    Column { var: String, datatype: Option<String> },
    Constant(RdfTerm),
}

impl Term {
    pub fn function(template: &str, args: &[&str]) -> Result<Term, MappingError> {
        Ok(Term::Function {
            symbol: template_to_function(template)?,
            args: args.iter().map(|a| a.to_string()).collect(),
        })
    }

    pub fn column(var: &str) -> Term {
        Term::Column {
            var: var.to_string(),
            datatype: None,
        }
    }

    pub fn vars(&self) -> Vec<&str> {
        match self {
            Term::Var(v) | Term::Column { var: v, .. } => vec![v.as_str()],
            Term::Function { args, .. } => args.iter().map(String::as_str).collect(),
            Term::Constant(_) => Vec::new(),
        }
    }

    pub fn rename(&self, f: &impl Fn(&str) -> String) -> Term {
        match self {
            Term::Var(v) => Term::Var(f(v)),
            Term::Function { symbol, args } => Term::Function {
                symbol: symbol.clone(),
                args: args.iter().map(|a| f(a)).collect(),
            },
            Term::Column { var, datatype } => Term::Column {
                var: f(var),
                datatype: datatype.clone(),
            },
            Term::Constant(c) => Term::Constant(c.clone()),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TermRepr {
    #[serde(skip_serializing_if = "Option::is_none")]
    var: Option<String>,
    #[serde(rename = "fn", skip_serializing_if = "Option::is_none")]
    function: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    args: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    col: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    iri: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    literal: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    datatype: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lang: Option<String>,
}

impl TryFrom<TermRepr> for Term {
    type Error = String;

    fn try_from(r: TermRepr) -> Result<Self, String> {
        let kinds = [r.var.is_some(), r.function.is_some(), r.col.is_some(), r.iri.is_some(), r.literal.is_some()];
        if kinds.iter().filter(|&&k| k).count() != 1 {
            return Err("a term needs exactly one of var, fn, col, iri, literal".into());
        }
        if r.args.is_some() && r.function.is_none() {
            return Err("args only apply to fn terms".into());
        }
        if r.datatype.is_some() && r.col.is_none() && r.literal.is_none() {
            return Err("datatype only applies to col and literal terms".into());
        }
        if r.lang.is_some() && r.literal.is_none() {
            return Err("lang only applies to literal terms".into());
        }
        if let Some(v) = r.var {
            return Ok(Term::Var(v));
        }
        if let Some(t) = r.function {
            let symbol = template_to_function(&t).map_err(|e| e.to_string())?;
            let args = r.args.unwrap_or_default();
            if args.len() != symbol.arity() {
                return Err(format!(
                    "fn '{t}' has arity {} but {} args were given",
                    symbol.arity(),
                    args.len()
                ));
            }
            return Ok(Term::Function { symbol, args });
        }
        if let Some(c) = r.col {
            return Ok(Term::Column { var: c, datatype: r.datatype });
        }
        if let Some(i) = r.iri {
            return Ok(Term::Constant(RdfTerm::Iri(i)));
        }
        let lex = r.literal.unwrap_or_default();
        let lit = match (r.lang, r.datatype) {
            (Some(_), Some(_)) => return Err("a literal cannot have both lang and datatype".into()),
            (Some(l), None) => Literal::lang(lex, l),
            (None, Some(d)) => Literal::typed(lex, d),
            (None, None) => Literal::string(lex),
        };
        Ok(Term::Constant(RdfTerm::Literal(lit)))
    }
}

impl From<Term> for TermRepr {
    fn from(t: Term) -> Self {
        match t {
            Term::Var(v) => TermRepr { var: Some(v), ..Default::default() },
            Term::Function { symbol, args } => TermRepr {
                function: Some(function_to_template(&symbol)),
                args: Some(args),
                ..Default::default()
            },
            Term::Column { var, datatype } => TermRepr { col: Some(var), datatype, ..Default::default() },
            Term::Constant(RdfTerm::Iri(i)) => TermRepr { iri: Some(i), ..Default::default() },
            Term::Constant(RdfTerm::Literal(l)) => TermRepr {
                literal: Some(l.lexical().to_string()),
                lang: l.language().map(str::to_string),
                datatype: (l.language().is_none() && l.datatype() != XSD_STRING).then(|| l.datatype().to_string()),
                ..Default::default()
            },
            // blank node constants are not produced by import; keep them readable
            Term::Constant(RdfTerm::BlankNode(b)) => TermRepr { iri: Some(format!("_:{b}")), ..Default::default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewMapping {
    pub name: String,
    pub attributes: Vec<String>,
    pub sql: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewAtom {
    pub view: String,
    pub args: Vec<String>,
}

impl ViewAtom {
    pub fn new(view: &str, args: &[&str]) -> Self {
        ViewAtom {
            view: view.to_string(),
            args: args.iter().map(|a| a.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Head {
    pub predicate: String,
    pub subject: Term,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<Term>,
}

impl Head {
    pub fn is_class(&self) -> bool {
        self.object.is_none()
    }

    pub fn terms(&self) -> impl Iterator<Item = &Term> {
        std::iter::once(&self.subject).chain(self.object.as_ref())
    }

    pub fn vars(&self) -> Vec<&str> {
        self.terms().flat_map(|t| t.vars()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OntologyMapping {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub id: String,
    pub body: Vec<ViewAtom>,
    pub head: Head,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MappingSet {
    #[serde(default)]
    pub prefixes: BTreeMap<String, String>,
    #[serde(default)]
    pub views: Vec<ViewMapping>,
    #[serde(default)]
    pub mappings: Vec<OntologyMapping>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub element: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.element, self.message)
    }
}

impl MappingSet {
    pub fn view(&self, name: &str) -> Option<&ViewMapping> {
        self.views.iter().find(|v| v.name == name)
    }

    pub fn function_symbols(&self) -> Vec<&FunctionSymbol> {
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        for m in &self.mappings {
            for t in m.head.terms() {
                if let Term::Function { symbol, .. } = t {
                    if seen.insert(symbol.skeleton()) {
                        out.push(symbol);
                    }
                }
            }
        }
        out
    }

    fn compact(&self, iri: &str) -> String {
        for (p, ns) in &self.prefixes {
            if let Some(local) = iri.strip_prefix(ns.as_str()) {
                if !local.is_empty() && local.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '-') {
                    return format!("{p}:{local}");
                }
            }
        }
        format!("<{iri}>")
    }

    /// One-line rendering such as
    /// `customers_view(C_ID, C_NAME) ~> ex:name(customer(C_ID), C_NAME)`.
    pub fn render_mapping(&self, m: &OntologyMapping) -> String {
        let names = symbol_names(self.function_symbols());
        let body: Vec<String> = m
            .body
            .iter()
            .map(|a| format!("{}({})", a.view, a.args.join(", ")))
            .collect();
        let term = |t: &Term| match t {
            Term::Var(v) => v.clone(),
            Term::Column { var, .. } => var.clone(),
            Term::Function { symbol, args } => {
                let name = names.get(&symbol.skeleton()).cloned().unwrap_or_else(|| symbol.name.clone());
                format!("{name}({})", args.join(", "))
            }
            Term::Constant(RdfTerm::Iri(i)) => self.compact(i),
            Term::Constant(c) => c.to_string(),
        };
        let head_args: Vec<String> = m.head.terms().map(term).collect();
        format!(
            "{} ~> {}({})",
            body.join(", "),
            self.compact(&m.head.predicate),
            head_args.join(", ")
        )
    }

    /// Checks every invariant of the set; an empty result means it is valid.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let mut diag = |element: String, message: String| out.push(Diagnostic { element, message });

        let mut names = BTreeSet::new();
        for v in &self.views {
            let el = format!("view {}", v.name);
            if v.name.is_empty() {
                diag(el.clone(), "empty view name".into());
            }
            if !names.insert(v.name.as_str()) {
                diag(el.clone(), "duplicate view name".into());
            }
            let mut attrs = BTreeSet::new();
            for a in &v.attributes {
                if !attrs.insert(a.to_ascii_lowercase()) {
                    diag(el.clone(), format!("duplicate attribute {a}"));
                }
            }
            if v.sql.trim().is_empty() {
                diag(el.clone(), "empty SQL query".into());
            }
        }

        let mut ids = BTreeSet::new();
        for (i, m) in self.mappings.iter().enumerate() {
            let el = if m.id.is_empty() {
                format!("mapping #{}", i + 1)
            } else {
                format!("mapping {}", m.id)
            };
            if !m.id.is_empty() && !ids.insert(m.id.as_str()) {
                diag(el.clone(), "duplicate mapping id".into());
            }
            if m.body.is_empty() {
                diag(el.clone(), "empty body".into());
            }
            let mut body_vars = BTreeSet::new();
            for a in &m.body {
                match self.view(&a.view) {
                    None => diag(el.clone(), format!("unknown view {}", a.view)),
                    Some(v) if v.attributes.len() != a.args.len() => diag(
                        el.clone(),
                        format!(
                            "atom {} has {} arguments but the view has {} attributes",
                            a.view,
                            a.args.len(),
                            v.attributes.len()
                        ),
                    ),
                    Some(_) => {}
                }
                body_vars.extend(a.args.iter().map(String::as_str));
            }
            if !is_absolute_iri(&m.head.predicate) {
                diag(el.clone(), format!("predicate '{}' is not an absolute IRI", m.head.predicate));
            }
            for t in m.head.terms() {
                match t {
                    Term::Var(v) => diag(el.clone(), format!("bare variable {v} in head; use fn or col")),
                    Term::Function { symbol, args } if symbol.arity() != args.len() => {
                        diag(el.clone(), format!("function term arity mismatch for {}", function_to_template(symbol)))
                    }
                    _ => {}
                }
                for v in t.vars() {
                    if !body_vars.contains(v) {
                        diag(el.clone(), format!("head variable {v} does not occur in the body"));
                    }
                }
            }
            if matches!(m.head.subject, Term::Column { .. } | Term::Constant(RdfTerm::Literal(_))) {
                diag(el.clone(), "head subject must be an IRI-valued term".into());
            }
        }
        out
    }
}

fn is_absolute_iri(s: &str) -> bool {
    match s.find(':') {
        Some(i) if i > 0 => s[..i]
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || "+-.".contains(c)),
        _ => false,
    }
}

/// Parses the JSON interchange format without validating it.
pub fn parse_mapping_set(text: &str) -> Result<MappingSet, MappingError> {
    Ok(serde_json::from_str(text)?)
}

/// Parses and validates.
pub fn load_mapping_set(text: &str) -> Result<MappingSet, MappingError> {
    let ms = parse_mapping_set(text)?;
    let ds = ms.validate();
    if ds.is_empty() {
        Ok(ms)
    } else {
        Err(MappingError::Invalid(ds))
    }
}

pub fn save_mapping_set(ms: &MappingSet) -> String {
    let mut s = serde_json::to_string_pretty(ms).expect("mapping sets always serialize");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const CUST: &str = "http://data.example.com/customer/{C_ID}";

    fn example3() -> MappingSet {
        let atom = ViewAtom::new("customers_view", &["C_ID", "C_NAME"]);
        MappingSet {
            prefixes: [("ex".to_string(), "http://example.com/ns#".to_string())].into(),
            views: vec![ViewMapping {
                name: "customers_view".into(),
                attributes: vec!["C_ID".into(), "C_NAME".into()],
                sql: "SELECT C_ID, C_NAME FROM customers".into(),
            }],
            mappings: vec![
                OntologyMapping {
                    id: "m1".into(),
                    body: vec![atom.clone()],
                    head: Head {
                        predicate: "http://example.com/ns#Customer".into(),
                        subject: Term::function(CUST, &["C_ID"]).unwrap(),
                        object: None,
                    },
                },
                OntologyMapping {
                    id: "m2".into(),
                    body: vec![atom],
                    head: Head {
                        predicate: "http://example.com/ns#name".into(),
                        subject: Term::function(CUST, &["C_ID"]).unwrap(),
                        object: Some(Term::column("C_NAME")),
                    },
                },
            ],
        }
    }

    #[test]
    fn template_symbols() {
        let f = template_to_function(CUST).unwrap();
        assert_eq!(f.arity(), 1);
        assert_eq!(f.name, "customer");
        assert_eq!(function_to_template(&f), CUST);
        assert_eq!(template_to_function("http://e/{A}/{B}").unwrap().arity(), 2);
        assert!(matches!(template_to_function("http://e/const"), Err(MappingError::NoPlaceholders(_))));
    }

    #[test]
    fn colliding_names_get_hash_suffix() {
        let a = template_to_function("http://a.org/item/{X}").unwrap();
        let b = template_to_function("http://b.org/item/{X}").unwrap();
        let c = template_to_function("http://c.org/thing/{X}").unwrap();
        let names = symbol_names([&a, &b, &c]);
        let na = &names[&a.skeleton()];
        let nb = &names[&b.skeleton()];
        assert!(na.starts_with("item_") && nb.starts_with("item_") && na != nb);
        assert_eq!(names[&c.skeleton()], "thing");
    }

    #[test]
    fn example3_round_trips_and_renders() {
        let ms = example3();
        assert!(ms.validate().is_empty());
        let text = save_mapping_set(&ms);
        assert_eq!(load_mapping_set(&text).unwrap(), ms);
        assert_eq!(
            ms.render_mapping(&ms.mappings[1]),
            "customers_view(C_ID, C_NAME) ~> ex:name(customer(C_ID), C_NAME)"
        );
    }

    #[test]
    fn empty_set_serializes_to_empty_arrays() {
        let text = save_mapping_set(&MappingSet::default());
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["views"], serde_json::json!([]));
        assert_eq!(v["mappings"], serde_json::json!([]));
    }

    #[test]
    fn diagnostics() {
        let mut ms = example3();
        ms.mappings[1].head.object = Some(Term::column("AGE"));
        let ds = ms.validate();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds[0].element, "mapping m2");
        assert!(ds[0].message.contains("AGE"));

        let mut ms = example3();
        ms.views.push(ms.views[0].clone());
        let ds = ms.validate();
        assert_eq!(ds.len(), 1);
        assert!(ds[0].message.contains("duplicate view"));

        let mut ms = example3();
        ms.mappings[0].body[0].view = "nope".into();
        let err = load_mapping_set(&save_mapping_set(&ms)).unwrap_err();
        assert!(err.to_string().contains("unknown view nope"), "{err}");
    }

    #[test]
    fn term_encoding() {
        let json = r#"[{"var":"x"},{"fn":"http://e/{A}","args":["a"]},{"col":"c","datatype":"http://www.w3.org/2001/XMLSchema#integer"},{"iri":"http://e/k"},{"literal":"hi","lang":"en"}]"#;
        let terms: Vec<Term> = serde_json::from_str(json).unwrap();
        assert_eq!(terms.len(), 5);
        assert_eq!(serde_json::to_string(&terms).unwrap(), json);
        assert!(serde_json::from_str::<Term>(r#"{"fn":"http://e/{A}","args":[]}"#).is_err());
        assert!(serde_json::from_str::<Term>(r#"{"var":"x","col":"y"}"#).is_err());
    }
}
