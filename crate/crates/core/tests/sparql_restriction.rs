use std::fs;
use std::path::PathBuf;

use vkgmap::sparqlcq::{parse_sparql, restrict_to_cq, to_ontology_cq, SparqlQuery};

fn load(dir: &str, name: &str) -> SparqlQuery {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(dir).join(name);
    let text = fs::read_to_string(&path).unwrap();
    parse_sparql(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn npd_pairs_restrict_to_their_listings() {
    for n in [1, 2, 3, 4, 5, 7, 8, 9, 10, 15, 16, 17, 18, 19, 20] {
        let original = load("npd", &format!("q{n}.rq"));
        let listing = load("npd", &format!("q{n}_cq.rq"));
        assert_eq!(restrict_to_cq(&original).unwrap(), listing, "q{n}");
        assert_eq!(restrict_to_cq(&listing).unwrap(), listing, "q{n}");
        to_ontology_cq(&listing).unwrap();
    }
}

#[test]
fn npd_rejections() {
    for (n, op) in [(6, "nested group"), (11, "nested group"), (12, "BIND"), (13, "OPTIONAL"), (14, "OPTIONAL"), (30, "BIND")] {
        let err = restrict_to_cq(&load("npd", &format!("q{n}.rq"))).unwrap_err();
        assert_eq!(err.operator, op, "q{n}: {err}");
    }
}

#[test]
fn npd_conjunctive_queries_pass_through() {
    let q21 = restrict_to_cq(&load("npd", "q21.rq")).unwrap();
    assert_eq!(q21, load("npd", "q20_cq.rq"));
    for n in 22..=29 {
        let q = load("npd", &format!("q{n}.rq"));
        assert_eq!(restrict_to_cq(&q).unwrap(), q, "q{n}");
    }
}

#[test]
fn aci_queries_are_conjunctive() {
    for n in 1..=10 {
        let q = load("aci", &format!("q{n}.rq"));
        let cq = to_ontology_cq(&q).unwrap();
        assert!(!cq.atoms.is_empty(), "q{n}");
    }
}
