mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use vkgmap::example::{customers_document, ex, figure_database, orders_mapping_set};
use vkgmap::exec::Execution;
use vkgmap::rdf::{Literal, RdfTerm, Triple, RDF_TYPE};
use vkgmap::vrdf::{materialize_document_with, materialize_with};

#[test]
fn example_document_matches_the_row_oracle() {
    let db = figure_database();
    let doc = customers_document();
    let g = materialize_document_with(&doc, &db, Execution::Sequential).unwrap();
    assert_eq!(g.triples(), &common::r2rml_oracle(&doc, &db));
    let alice = RdfTerm::iri("http://data.example.com/customer/3211");
    assert!(g.contains(&Triple::new(alice.clone(), RdfTerm::iri(RDF_TYPE), RdfTerm::iri(ex("Customer"))).unwrap()));
    assert!(g.contains(&Triple::new(alice, RdfTerm::iri(ex("name")), RdfTerm::Literal(Literal::string("Alice"))).unwrap()));
    assert_eq!(g.len(), 2 * 2 + 2 * 2 + 3 * 3);
}

#[test]
fn example_mapping_set_matches_the_nested_loop_oracle() {
    let db = figure_database();
    let ms = orders_mapping_set();
    let g = materialize_with(&ms, &db, Execution::Sequential).unwrap();
    assert_eq!(g.triples(), &common::mapping_oracle(&ms, &db));
}

#[test]
fn parallel_and_sequential_agree() {
    let db = vkgmap::example::scaled_database(20);
    let doc = customers_document();
    assert_eq!(
        materialize_document_with(&doc, &db, Execution::Sequential).unwrap(),
        materialize_document_with(&doc, &db, Execution::Parallel).unwrap()
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_documents_match_the_row_oracle(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let db = common::random_database(&mut rng);
        let doc = common::random_document(&mut rng, &db);
        let g = materialize_document_with(&doc, &db, Execution::Sequential).unwrap();
        prop_assert_eq!(g.triples(), &common::r2rml_oracle(&doc, &db));
    }

    #[test]
    fn random_mapping_sets_match_the_nested_loop_oracle(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let db = common::random_database(&mut rng);
        let ms = common::random_mapping_set(&mut rng, &db);
        let g = materialize_with(&ms, &db, Execution::Sequential).unwrap();
        prop_assert_eq!(g.triples(), &common::mapping_oracle(&ms, &db));
    }
}
