use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::EmbeddingTable;
use crate::error::{Error, Result};
use crate::Matrix;

/// Reassigns embedding rows to items by a seeded uniform permutation.
///
/// Ids stay in place; each id receives some other item's vector, so the
/// table keeps its value distribution but loses item correspondence.
pub fn shuffled_control(table: &EmbeddingTable, seed: u64) -> Result<EmbeddingTable> {
    if table.len() < 2 {
        return Err(Error::InvalidConfig("shuffled control needs at least two items".into()));
    }
    let mut perm: Vec<usize> = (0..table.len()).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let shuffled: Matrix = table.vectors().select_rows(&perm);
    let mut out = table.with_vectors(shuffled)?;
    out.set_label(table.label());
    Ok(out)
}
