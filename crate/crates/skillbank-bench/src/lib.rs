//! Shared input builders for the engine benchmarks.

use skillbank_core::modelgw::FixtureBackend;
use skillbank_core::skillparse::VerbLexicon;
use skillbank_core::synthetic::corpus_50;
use skillbank_core::taxonomy::Repository;

/// Ingests the bundled synthetic corpus with the fixture embedder.
pub fn corpus_repository(dim: usize) -> Repository {
    let embedder = FixtureBackend::new(dim);
    let mut repo = Repository::new(dim);
    for slice in corpus_50().slices {
        repo.insert_slice(slice, VerbLexicon::bundled(), &embedder, 0.8)
            .expect("corpus inserts cleanly");
    }
    repo
}
