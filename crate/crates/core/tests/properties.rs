use proptest::prelude::*;

use vkgmap::rdf::{parse_turtle, serialize_turtle, Graph, Literal, RdfTerm, Triple};
use vkgmap::template::Template;

fn value() -> impl Strategy<Value = String> {
    prop_oneof![
        "[a-zA-Z0-9]{1,8}",
        "[ -~]{0,10}",
        any::<String>().prop_map(|s| s.chars().take(8).collect()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn template_expansion_inverts(a in value(), b in value()) {
        let t = Template::parse("http://e.example/x/{A}-{B}").unwrap();
        let iri = t.expand_iri(&[&a, &b]);
        let matches = t.inverse_match(&iri);
        prop_assert!(matches.contains(&vec![a.clone(), b.clone()]), "{} -> {:?}", iri, matches);
        for m in &matches {
            prop_assert_eq!(t.expand_iri(m), iri.clone());
        }
    }

    #[test]
    fn single_placeholder_inverse_is_unique(a in value()) {
        let t = Template::parse("http://e.example/c/{ID}").unwrap();
        prop_assert_eq!(t.inverse_match(&t.expand_iri(&[&a])), vec![vec![a]]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn turtle_round_trips(triples in prop::collection::vec((0..4usize, 0..3usize, value(), 0..3usize), 0..12)) {
        let mut g = Graph::new();
        for (s, p, o, kind) in triples {
            let object = match kind {
                0 => RdfTerm::iri(format!("http://e.example/o/{}", o.len())),
                1 => RdfTerm::Literal(Literal::string(o)),
                _ => RdfTerm::Literal(Literal::typed(o, "http://e.example/dt")),
            };
            g.insert(Triple::new(RdfTerm::iri(format!("http://e.example/s{s}")), RdfTerm::iri(format!("http://e.example/p{p}")), object).unwrap());
        }
        let text = serialize_turtle(&g);
        let back = parse_turtle(&text).unwrap_or_else(|e| panic!("{e}\n{text}"));
        prop_assert_eq!(back.triples(), g.triples());
    }
}
