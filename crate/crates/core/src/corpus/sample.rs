use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CorpusError, Document};

/// Draws `n` documents without replacement.
///
/// The corpus is first sorted by `doc_id` (stable), then shuffled with a
/// Fisher-Yates pass driven by ChaCha8 seeded from `seed`, and the first `n`
/// are returned. The result depends only on the doc_id multiset, `n` and
/// `seed`, not on file order.
pub fn sample_subset(docs: &[Document], n: usize, seed: u64) -> Result<Vec<Document>, CorpusError> {
    if n == 0 || n > docs.len() {
        return Err(CorpusError::Sample { requested: n, available: docs.len() });
    }
    let mut order: Vec<&Document> = docs.iter().collect();
    order.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    Ok(order.into_iter().take(n).cloned().collect())
}
