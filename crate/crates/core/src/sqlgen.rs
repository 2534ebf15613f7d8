//! Unfolding of a conjunction of view atoms into one select-project-join query.

use std::collections::BTreeMap;
use std::fmt;

use rust_decimal::Decimal;
use thiserror::Error;

use crate::mapping::{ViewAtom, ViewMapping};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SqlGenError {
    #[error("unknown view {0}")]
    UnknownView(String),
    #[error("atom {view} has {args} arguments but the view has {attributes} attributes")]
    ArityMismatch {
        view: String,
        args: usize,
        attributes: usize,
    },
    #[error("projected variable {0} does not occur in the body")]
    UnboundProjectionVariable(String),
    #[error("filtered variable {0} does not occur in the body")]
    UnboundFilterVariable(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CompareOp {
    Lt,
    Le,
    Eq,
    Ge,
    Gt,
}

impl CompareOp {
    pub fn as_str(self) -> &'static str {
        match self {
            CompareOp::Lt => "<",
            CompareOp::Le => "<=",
            CompareOp::Eq => "=",
            CompareOp::Ge => ">=",
            CompareOp::Gt => ">",
        }
    }

    pub fn holds(self, ord: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            CompareOp::Lt => ord == Less,
            CompareOp::Le => ord != Greater,
            CompareOp::Eq => ord == Equal,
            CompareOp::Ge => ord != Less,
            CompareOp::Gt => ord == Greater,
        }
    }

    /// The operator with its operands swapped: `a < b` iff `b > a`.
    pub fn flip(self) -> Self {
        match self {
            CompareOp::Lt => CompareOp::Gt,
            CompareOp::Le => CompareOp::Ge,
            CompareOp::Eq => CompareOp::Eq,
            CompareOp::Ge => CompareOp::Le,
            CompareOp::Gt => CompareOp::Lt,
        }
    }
}

impl fmt::Display for CompareOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum FilterValue {
    Str(String),
    Int(i64),
    Decimal(Decimal),
    /// ISO-8601, with or without a time part.
    DateTime(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FilterCondition {
    pub var: String,
    pub op: CompareOp,
    pub constant: FilterValue,
}

fn quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', "''"))
}

pub fn render_filter(f: &FilterCondition, column: &str) -> String {
    let lit = match &f.constant {
        FilterValue::Str(s) => quote(s),
        FilterValue::Int(i) => i.to_string(),
        FilterValue::Decimal(d) => d.to_string(),
        FilterValue::DateTime(d) => quote(&d.replacen('T', " ", 1)),
    };
    format!("{column} {} {lit}", f.op)
}

/// Builds `SELECT ... FROM (q1) AS v1, (q2) AS v2 WHERE ...` for a body of
/// view atoms. Shared variables become chained equalities in order of first
/// occurrence; filters are rendered against the first binding of their
/// variable. An empty projection selects `*`.
pub fn unfold_view_query(
    body: &[ViewAtom],
    projection: &[(String, String)],
    filters: &[FilterCondition],
    views: &[ViewMapping],
) -> Result<String, SqlGenError> {
    unfold_view_query_with(body, projection, &[], filters, views)
}

/// As [`unfold_view_query`], additionally equating the given pairs of
/// distinct variables.
pub fn unfold_view_query_with(
    body: &[ViewAtom],
    projection: &[(String, String)],
    equalities: &[(String, String)],
    filters: &[FilterCondition],
    views: &[ViewMapping],
) -> Result<String, SqlGenError> {
    let by_name: BTreeMap<&str, &ViewMapping> = views.iter().map(|v| (v.name.as_str(), v)).collect();

    let mut from = Vec::with_capacity(body.len());
    // variable -> qualified columns in occurrence order
    let mut occurrences: Vec<(&str, Vec<String>)> = Vec::new();
    for (i, atom) in body.iter().enumerate() {
        let view = by_name
            .get(atom.view.as_str())
            .ok_or_else(|| SqlGenError::UnknownView(atom.view.clone()))?;
        if view.attributes.len() != atom.args.len() {
            return Err(SqlGenError::ArityMismatch {
                view: atom.view.clone(),
                args: atom.args.len(),
                attributes: view.attributes.len(),
            });
        }
        let alias = format!("v{}", i + 1);
        from.push(format!("({}) AS {alias}", view.sql.trim()));
        for (arg, attr) in atom.args.iter().zip(&view.attributes) {
            let col = format!("{alias}.{attr}");
            match occurrences.iter_mut().find(|(v, _)| *v == arg.as_str()) {
                Some((_, cols)) => cols.push(col),
                None => occurrences.push((arg.as_str(), vec![col])),
            }
        }
    }
    let first = |var: &str| {
        occurrences
            .iter()
            .find(|(v, _)| *v == var)
            .map(|(_, cols)| cols[0].clone())
    };

    let select = if projection.is_empty() {
        "*".to_string()
    } else {
        let mut items = Vec::with_capacity(projection.len());
        for (var, out) in projection {
            let col = first(var).ok_or_else(|| SqlGenError::UnboundProjectionVariable(var.clone()))?;
            items.push(format!("{col} AS {out}"));
        }
        items.join(", ")
    };

    let mut conds: Vec<String> = Vec::new();
    for (_, cols) in &occurrences {
        for pair in cols.windows(2) {
            conds.push(format!("{}={}", pair[0], pair[1]));
        }
    }
    for (a, b) in equalities {
        let ca = first(a).ok_or_else(|| SqlGenError::UnboundFilterVariable(a.clone()))?;
        let cb = first(b).ok_or_else(|| SqlGenError::UnboundFilterVariable(b.clone()))?;
        conds.push(format!("{ca}={cb}"));
    }
    for f in filters {
        let col = first(&f.var).ok_or_else(|| SqlGenError::UnboundFilterVariable(f.var.clone()))?;
        conds.push(render_filter(f, &col));
    }

    let mut sql = format!("SELECT {select} FROM {}", from.join(", "));
    if !conds.is_empty() {
        sql.push_str(" WHERE ");
        sql.push_str(&conds.join(" AND "));
    }
    Ok(sql)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn views() -> Vec<ViewMapping> {
        vec![
            ViewMapping {
                name: "customers_view".into(),
                attributes: vec!["C_ID".into(), "C_NAME".into()],
                sql: "SELECT C_ID, C_NAME FROM customers".into(),
            },
            ViewMapping {
                name: "orders_view".into(),
                attributes: vec!["O_ID".into(), "C_ID".into()],
                sql: "SELECT O_ID, C_ID FROM orders".into(),
            },
        ]
    }

    fn proj(vars: &[&str]) -> Vec<(String, String)> {
        vars.iter().map(|v| (v.to_string(), v.to_string())).collect()
    }

    #[test]
    fn two_atom_join() {
        let body = [
            ViewAtom::new("customers_view", &["C_ID", "C_NAME"]),
            ViewAtom::new("orders_view", &["O_ID", "C_ID"]),
        ];
        let sql = unfold_view_query(&body, &proj(&["C_ID", "O_ID"]), &[], &views()).unwrap();
        assert_eq!(
            sql,
            "SELECT v1.C_ID AS C_ID, v2.O_ID AS O_ID FROM (SELECT C_ID, C_NAME FROM customers) AS v1, \
             (SELECT O_ID, C_ID FROM orders) AS v2 WHERE v1.C_ID=v2.C_ID"
        );
    }

    #[test]
    fn single_atom() {
        let body = [ViewAtom::new("customers_view", &["C_ID", "C_NAME"])];
        let sql = unfold_view_query(&body, &proj(&["C_ID"]), &[], &views()).unwrap();
        assert_eq!(sql, "SELECT v1.C_ID AS C_ID FROM (SELECT C_ID, C_NAME FROM customers) AS v1");
    }

    #[test]
    fn chained_equalities_and_filters() {
        let body = [
            ViewAtom::new("customers_view", &["X", "N"]),
            ViewAtom::new("orders_view", &["O", "X"]),
            ViewAtom::new("orders_view", &["O2", "X"]),
        ];
        let f = FilterCondition {
            var: "O".into(),
            op: CompareOp::Gt,
            constant: FilterValue::Int(4301),
        };
        let sql = unfold_view_query(&body, &[], &[f], &views()).unwrap();
        assert!(sql.starts_with("SELECT * FROM"));
        assert!(sql.ends_with("WHERE v1.C_ID=v2.C_ID AND v2.C_ID=v3.C_ID AND v2.O_ID > 4301"), "{sql}");
    }

    #[test]
    fn unbound_variables() {
        let body = [ViewAtom::new("customers_view", &["C_ID", "C_NAME"])];
        assert_eq!(
            unfold_view_query(&body, &proj(&["Z"]), &[], &views()),
            Err(SqlGenError::UnboundProjectionVariable("Z".into()))
        );
        let f = FilterCondition {
            var: "Z".into(),
            op: CompareOp::Eq,
            constant: FilterValue::Int(1),
        };
        assert_eq!(
            unfold_view_query(&body, &[], &[f], &views()),
            Err(SqlGenError::UnboundFilterVariable("Z".into()))
        );
    }

    #[test]
    fn filters_render() {
        let f = |op, constant| FilterCondition { var: "x".into(), op, constant };
        assert_eq!(render_filter(&f(CompareOp::Gt, FilterValue::Int(400000)), "v1.ID"), "v1.ID > 400000");
        assert_eq!(render_filter(&f(CompareOp::Eq, FilterValue::Str("Alice".into())), "v1.N"), "v1.N = 'Alice'");
        assert_eq!(render_filter(&f(CompareOp::Eq, FilterValue::Str("O'Neil".into())), "v1.N"), "v1.N = 'O''Neil'");
        assert_eq!(
            render_filter(&f(CompareOp::Gt, FilterValue::DateTime("1979-12-31T00:00:00".into())), "v1.D"),
            "v1.D > '1979-12-31 00:00:00'"
        );
    }
}
