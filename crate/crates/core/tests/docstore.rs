use saskit_core::docstore::{load_user_docs, DocStore, DocStoreError, Index};
use saskit_core::models::ModelRegistry;

fn store() -> DocStore {
    DocStore::build(&ModelRegistry::standard(), None).unwrap()
}

#[test]
fn bundled_corpus_has_one_doc_per_model() {
    let index = store().snapshot();
    assert_eq!(index.len(), 4);
    let ids: Vec<_> = index.doc_ids().collect();
    assert_eq!(ids, ["cylinder", "ellipsoid", "lamellar", "sphere"]);
}

#[test]
fn model_name_query_ranks_that_model_first() {
    let store = store();
    for name in ModelRegistry::standard().names() {
        let hits = store.search(name, 1).unwrap();
        assert_eq!(hits[0].doc_id, name);
    }
}

#[test]
fn multi_term_query() {
    let hits = store().search("sphere radius solvent", 4).unwrap();
    assert_eq!(hits[0].doc_id, "sphere");
    assert!(hits.windows(2).all(|w| w[0].score >= w[1].score));
}

#[test]
fn unknown_terms_and_docs() {
    let store = store();
    assert!(store.search("zzzz", 4).unwrap().is_empty());
    assert_eq!(
        store.get_doc("nope"),
        Err(DocStoreError::UnknownDoc("nope".into()))
    );
    let sphere = store.get_doc("sphere").unwrap();
    assert!(sphere.body.contains("\nParameters\n"));
    assert!(sphere.title.starts_with("Sphere"));
}

#[test]
fn snippets_come_from_the_body() {
    let store = store();
    for hit in store
        .search("orientation averaged cylinder length radius", 4)
        .unwrap()
    {
        let doc = store.get_doc(&hit.doc_id).unwrap();
        assert!(doc.body.contains(&hit.snippet));
        assert!(hit.snippet.chars().count() <= 400);
    }
}

#[test]
fn reingest_is_idempotent() {
    let registry = ModelRegistry::standard();
    let a = DocStore::corpus_index(&registry, None).unwrap();
    let b = DocStore::corpus_index(&registry, None).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.vocabulary_size(), b.vocabulary_size());
}

#[test]
fn user_documents_join_the_corpus() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("guinier.md"),
        "# Guinier analysis\n\nRadius of gyration from the low-q slope.\n",
    )
    .unwrap();
    std::fs::write(dir.path().join("notes.txt"), "Porod law at high q.").unwrap();
    std::fs::write(dir.path().join("image.png"), [0u8, 1, 2]).unwrap();
    let docs = load_user_docs(dir.path()).unwrap();
    assert_eq!(docs.len(), 2);
    assert_eq!(docs[0].doc_id, "guinier");
    assert_eq!(docs[0].title, "Guinier analysis");

    let store = DocStore::build(&ModelRegistry::standard(), Some(dir.path())).unwrap();
    assert_eq!(store.snapshot().len(), 6);
    assert_eq!(store.search("gyration", 1).unwrap()[0].doc_id, "guinier");
}

#[test]
fn user_document_clashing_with_model_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("sphere.txt"), "my own sphere notes").unwrap();
    let err = DocStore::build(&ModelRegistry::standard(), Some(dir.path())).unwrap_err();
    assert_eq!(err, DocStoreError::DuplicateDocId("sphere".into()));
}

#[test]
fn missing_directory_is_an_io_error() {
    let err = load_user_docs(std::path::Path::new("/definitely/not/here")).unwrap_err();
    assert!(matches!(err, DocStoreError::Io { .. }));
}

#[test]
fn concurrent_searches_during_swap() {
    let store = std::sync::Arc::new(store());
    let registry = ModelRegistry::standard();
    std::thread::scope(|s| {
        for _ in 0..4 {
            let store = store.clone();
            s.spawn(move || {
                for _ in 0..200 {
                    let hits = store.search("sphere", 1).unwrap();
                    assert_eq!(hits[0].doc_id, "sphere");
                }
            });
        }
        for _ in 0..20 {
            store.replace(Index::ingest(saskit_core::docstore::model_docs(&registry)).unwrap());
        }
    });
}
