//! Internal helpers for the seq/par split.
//!
//! Every parallel entry point writes to disjoint, index-addressed output
//! slots (or collects in input order), so results are bit-identical to the
//! sequential fallback regardless of thread count.

/// Apply `f(i, chunk_i)` to each fixed-size chunk of `data`, in parallel
/// when the `parallel` feature is enabled.
pub(crate) fn for_each_chunk_indexed<F>(data: &mut [f64], chunk: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    debug_assert_eq!(data.len() % chunk.max(1), 0);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        data.par_chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    }
}

/// `(0..n).map(f)` collected in index order, in parallel when enabled.
pub(crate) fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

pub(crate) fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, &x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_range_preserves_order() {
        let v = map_range(100, |i| i * i);
        assert_eq!(v[7], 49);
        assert_eq!(v.len(), 100);
    }

    #[test]
    fn chunked_writes_cover_all_slots() {
        let mut data = vec![0.0; 12];
        for_each_chunk_indexed(&mut data, 3, |i, c| {
            for (k, slot) in c.iter_mut().enumerate() {
                *slot = (i * 10 + k) as f64;
            }
        });
        assert_eq!(data[4], 11.0);
        assert_eq!(data[11], 32.0);
    }
}
