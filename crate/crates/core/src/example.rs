//! The customers/products/orders running example: database, R2RML
//! document and hand-written mapping sets.

use crate::engine::{ColumnType, Database, Table, Value};
use crate::mapping::{Head, MappingSet, OntologyMapping, Term, ViewAtom, ViewMapping};
use crate::r2rml::{extract_mapping, R2rmlDocument};
use crate::rdf::parse_turtle;

pub const EX: &str = "http://example.com/ns#";
pub const CUSTOMER_TEMPLATE: &str = "http://data.example.com/customer/{C_ID}";
pub const ORDER_TEMPLATE: &str = "http://data.example.com/order/{O_ID}";
pub const PRODUCT_TEMPLATE: &str = "http://data.example.com/product/{P_ID}";

pub const CUSTOMERS_R2RML: &str = include_str!("../data/customers/customers-r2rml.ttl");

pub fn ex(local: &str) -> String {
    format!("{EX}{local}")
}

pub fn customers_document() -> R2rmlDocument {
    let g = parse_turtle(CUSTOMERS_R2RML).expect("bundled document parses");
    extract_mapping(&g).expect("bundled document is valid")
}

/// The three-table example database; `scale` copies every row with
/// identifiers shifted so that copies never join with each other.
pub fn scaled_database(scale: usize) -> Database {
    let mut customers = Table::new("customers", &[("C_ID", ColumnType::Integer), ("C_NAME", ColumnType::String)]);
    let mut products = Table::new("products", &[("P_ID", ColumnType::Integer), ("P_PRICE", ColumnType::Decimal)]);
    let mut orders = Table::new(
        "orders",
        &[
            ("O_ID", ColumnType::Integer),
            ("C_ID", ColumnType::Integer),
            ("P_ID", ColumnType::Integer),
            ("QUANTITY", ColumnType::Integer),
        ],
    );
    let price = |s: &str| Value::Decimal(s.parse().expect("valid decimal"));
    for k in 0..scale.max(1) as i64 {
        let off = k * 100_000;
        let name = |n: &str| if k == 0 { n.to_string() } else { format!("{n} {k}") };
        for (id, n) in [(3211, "Alice"), (3253, "Bob")] {
            customers.push(vec![Value::Int(id + off), Value::Str(name(n))]).expect("well-typed row");
        }
        for (id, p) in [(2532, "12.00"), (2533, "41.00")] {
            products.push(vec![Value::Int(id + off), price(p)]).expect("well-typed row");
        }
        for (o, c, p, q) in [(4301, 3211, 2532, 1), (4302, 3211, 2533, 1), (4303, 3253, 2532, 3)] {
            orders
                .push(vec![Value::Int(o + off), Value::Int(c + off), Value::Int(p + off), Value::Int(q)])
                .expect("well-typed row");
        }
    }
    let mut db = Database::new();
    for t in [customers, products, orders] {
        db.add_table(t).expect("distinct table names");
    }
    db
}

pub fn figure_database() -> Database {
    scaled_database(1)
}

fn prefixes() -> std::collections::BTreeMap<String, String> {
    [("ex".to_string(), EX.to_string())].into()
}

fn view(name: &str, attrs: &[&str], sql: &str) -> ViewMapping {
    ViewMapping {
        name: name.into(),
        attributes: attrs.iter().map(|a| a.to_string()).collect(),
        sql: sql.into(),
    }
}

fn mapping(id: &str, body: Vec<ViewAtom>, predicate: &str, subject: Term, object: Option<Term>) -> OntologyMapping {
    OntologyMapping {
        id: id.into(),
        body,
        head: Head {
            predicate: ex(predicate),
            subject,
            object,
        },
    }
}

fn fun(template: &str, arg: &str) -> Term {
    Term::function(template, &[arg]).expect("constant template is valid")
}

/// One view over customers with a class mapping and a name mapping.
pub fn customers_mapping_set() -> MappingSet {
    let c = || ViewAtom::new("customers_view", &["C_ID", "C_NAME"]);
    MappingSet {
        prefixes: prefixes(),
        views: vec![view("customers_view", &["C_ID", "C_NAME"], "SELECT C_ID, C_NAME FROM customers")],
        mappings: vec![
            mapping("m1", vec![c()], "Customer", fun(CUSTOMER_TEMPLATE, "C_ID"), None),
            mapping("m2", vec![c()], "name", fun(CUSTOMER_TEMPLATE, "C_ID"), Some(Term::column("C_NAME"))),
        ],
    }
}

/// The customers set extended with the orders and products views and the
/// order mappings, with joins expressed by shared variables.
pub fn orders_mapping_set() -> MappingSet {
    let mut ms = customers_mapping_set();
    ms.views.push(view("products_view", &["P_ID", "P_PRICE"], "SELECT P_ID, P_PRICE FROM products"));
    ms.views.push(view(
        "orders_view",
        &["O_ID", "C_ID", "P_ID", "QUANTITY"],
        "SELECT O_ID, C_ID, P_ID, QUANTITY FROM orders",
    ));
    let o = || ViewAtom::new("orders_view", &["O_ID", "C_ID", "P_ID", "QUANTITY"]);
    ms.mappings.push(mapping("m3", vec![o()], "Order", fun(ORDER_TEMPLATE, "O_ID"), None));
    ms.mappings.push(mapping(
        "m4",
        vec![ViewAtom::new("customers_view", &["C_ID", "C_NAME"]), o()],
        "customer",
        fun(ORDER_TEMPLATE, "O_ID"),
        Some(fun(CUSTOMER_TEMPLATE, "C_ID")),
    ));
    ms.mappings.push(mapping(
        "m5",
        vec![ViewAtom::new("products_view", &["P_ID", "P_PRICE"]), o()],
        "product",
        fun(ORDER_TEMPLATE, "O_ID"),
        Some(fun(PRODUCT_TEMPLATE, "P_ID")),
    ));
    ms
}

/// The customer role over a two-column orders view, the shape whose export
/// is the `v1`/`v2` unfolded query.
pub fn customer_role_mapping_set() -> MappingSet {
    MappingSet {
        prefixes: prefixes(),
        views: vec![
            view("customers_view", &["C_ID", "C_NAME"], "SELECT C_ID, C_NAME FROM customers"),
            view("orders_view", &["O_ID", "C_ID"], "SELECT O_ID, C_ID FROM orders"),
        ],
        mappings: vec![mapping(
            "m1",
            vec![
                ViewAtom::new("customers_view", &["C_ID", "C_NAME"]),
                ViewAtom::new("orders_view", &["O_ID", "C_ID"]),
            ],
            "customer",
            fun(ORDER_TEMPLATE, "O_ID"),
            Some(fun(CUSTOMER_TEMPLATE, "C_ID")),
        )],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_valid() {
        for ms in [customers_mapping_set(), orders_mapping_set(), customer_role_mapping_set()] {
            assert_eq!(ms.validate(), vec![]);
        }
        assert_eq!(customers_document().triples_maps.len(), 3);
    }

    #[test]
    fn scaling_multiplies_rows() {
        assert_eq!(figure_database().total_rows(), 7);
        assert_eq!(scaled_database(10).total_rows(), 70);
        assert_eq!(scaled_database(10).table("customers").unwrap().rows()[2][1], Value::Str("Alice 1".into()));
    }
}
