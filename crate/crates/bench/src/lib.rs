//! Seeded synthetic inputs shared by the benchmarks.

use std::collections::BTreeSet;

use rand::rngs::StdRng;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use relext_core::retrieval::{Chunk, EmbeddingVector};
use relext_core::thesaurus::Thesaurus;

const SYLLABLES: &[&str] = &["ba", "ko", "ri", "tes", "mon", "al", "phy", "lo", "sis", "ter", "gen", "ox"];

fn word(rng: &mut StdRng) -> String {
    (0..rng.random_range(1..=4)).map(|_| *SYLLABLES.choose(rng).unwrap()).collect()
}

/// `terms` random one to three word surfaces.
pub fn thesaurus(terms: usize, seed: u64) -> Thesaurus {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut th = Thesaurus::new();
    let types = BTreeSet::from(["Sign or Symptom".to_string()]);
    while th.len() < terms {
        let n = rng.random_range(1..=3);
        let surface = (0..n).map(|_| word(&mut rng)).collect::<Vec<_>>().join(" ");
        th.insert(&surface, &format!("C{:07}", th.len()), types.clone());
    }
    th
}

/// Text of `words` words with list markers and punctuation mixed in.
pub fn text(words: usize, seed: u64) -> String {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut out = String::new();
    for i in 0..words {
        if i > 0 {
            out.push_str([" ", " ", " ", ", ", ". ", " ||", "|| "].choose(&mut rng).unwrap());
        }
        out.push_str(&word(&mut rng));
    }
    out
}

/// `n` chunks with random `dim`-dimensional embeddings; one is the anchor.
pub fn scored_chunks(n: usize, dim: usize, seed: u64) -> (EmbeddingVector, Vec<(Chunk, EmbeddingVector)>) {
    let mut rng = StdRng::seed_from_u64(seed);
    let vector = |rng: &mut StdRng| {
        EmbeddingVector::new((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("finite values")
    };
    let anchor = rng.random_range(0..n);
    let chunks = (0..n)
        .map(|i| {
            let c = Chunk { text: format!("chunk {i}"), word_span: [i * 96, i * 96 + 128], is_anchor: i == anchor };
            (c, vector(&mut rng))
        })
        .collect();
    (vector(&mut rng), chunks)
}
