//! Epoch chunking: large datasets are consumed in fixed-size segments, one
//! per epoch, tiling the index space with a wrap-around cycle.

use crate::error::{DataError, Result};

/// Index range (start, length) covered by one epoch. Successive epochs tile
/// `0..n_items` sequentially; the last segment of a cycle is truncated at the
/// end of the dataset and the next epoch wraps back to index 0.
pub fn epoch_partition(n_items: usize, chunk_size: usize, epoch_index: usize) -> Result<(usize, usize)> {
    if chunk_size == 0 {
        return Err(DataError::Generation("chunk_size must be > 0".into()));
    }
    if n_items == 0 {
        return Ok((0, 0));
    }
    let epochs_per_cycle = n_items.div_ceil(chunk_size);
    let k = epoch_index % epochs_per_cycle;
    let start = k * chunk_size;
    Ok((start, chunk_size.min(n_items - start)))
}
