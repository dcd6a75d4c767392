//! Deterministic data-parallel primitives.
//!
//! Every reduction here splits its input into fixed-size chunks, reduces each
//! chunk sequentially in f64, and combines the per-chunk results in chunk
//! order. The result is therefore bit-identical whether the `parallel`
//! feature is enabled or not, and for any rayon thread count. Mutating
//! primitives only hand out disjoint slices, so they are deterministic for
//! free.
//!
//! The `*_seq` variants are always compiled; the dispatching functions pick
//! the rayon path when the `parallel` feature is on. Benches compare the two.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Chunk size for all deterministic reductions.
pub const CHUNK: usize = 4096;

/// Sum `f(x)` over the slice, accumulated in f64 per chunk.
pub fn map_sum<F>(xs: &[f32], f: F) -> f64
where
    F: Fn(f32) -> f64 + Sync,
{
    #[cfg(feature = "parallel")]
    {
        let partial: Vec<f64> = xs
            .par_chunks(CHUNK)
            .map(|c| c.iter().map(|&x| f(x)).sum())
            .collect();
        partial.iter().sum()
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_sum_seq(xs, f)
    }
}

/// Sequential twin of [`map_sum`]; same chunking, same bits.
pub fn map_sum_seq<F>(xs: &[f32], f: F) -> f64
where
    F: Fn(f32) -> f64,
{
    xs.chunks(CHUNK)
        .map(|c| c.iter().map(|&x| f(x)).sum::<f64>())
        .sum()
}

pub fn abs_sum(xs: &[f32]) -> f64 {
    map_sum(xs, |x| x.abs() as f64)
}

/// Mean of |x| over the slice. Zero-length input yields 0.
pub fn abs_mean(xs: &[f32]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        abs_sum(xs) / xs.len() as f64
    }
}

/// Elementwise map into a fresh vector.
pub fn map<F>(xs: &[f32], f: F) -> Vec<f32>
where
    F: Fn(f32) -> f32 + Sync,
{
    #[cfg(feature = "parallel")]
    {
        xs.par_chunks(CHUNK)
            .flat_map_iter(|c| c.iter().map(|&x| f(x)).collect::<Vec<_>>())
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_seq(xs, f)
    }
}

/// Sequential twin of [`map`].
pub fn map_seq<F>(xs: &[f32], f: F) -> Vec<f32>
where
    F: Fn(f32) -> f32,
{
    xs.iter().map(|&x| f(x)).collect()
}

/// Map elements in place.
pub fn map_in_place<F>(xs: &mut [f32], f: F)
where
    F: Fn(f32) -> f32 + Sync,
{
    #[cfg(feature = "parallel")]
    {
        xs.par_chunks_mut(CHUNK)
            .for_each(|c| c.iter_mut().for_each(|x| *x = f(*x)));
    }
    #[cfg(not(feature = "parallel"))]
    {
        xs.iter_mut().for_each(|x| *x = f(*x));
    }
}

/// Fill disjoint rows of `out`; `fill(i, row)` writes row `i` of length
/// `row_len`. `out.len()` must be a multiple of `row_len`.
pub fn fill_rows<F>(out: &mut [f32], row_len: usize, fill: F)
where
    F: Fn(usize, &mut [f32]) + Sync,
{
    debug_assert_eq!(out.len() % row_len.max(1), 0);
    #[cfg(feature = "parallel")]
    {
        out.par_chunks_mut(row_len)
            .enumerate()
            .for_each(|(i, row)| fill(i, row));
    }
    #[cfg(not(feature = "parallel"))]
    {
        fill_rows_seq(out, row_len, fill);
    }
}

/// Sequential twin of [`fill_rows`].
pub fn fill_rows_seq<F>(out: &mut [f32], row_len: usize, fill: F)
where
    F: Fn(usize, &mut [f32]),
{
    out.chunks_mut(row_len)
        .enumerate()
        .for_each(|(i, row)| fill(i, row));
}

/// Fill paired disjoint rows of two buffers in lockstep; used where one pass
/// produces both an output row and a scratch row (e.g. conv output + its
/// im2col patch matrix).
pub fn fill_row_pairs<F>(a: &mut [f32], a_row: usize, b: &mut [f32], b_row: usize, fill: F)
where
    F: Fn(usize, &mut [f32], &mut [f32]) + Sync,
{
    debug_assert_eq!(a.len() / a_row.max(1), b.len() / b_row.max(1));
    #[cfg(feature = "parallel")]
    {
        a.par_chunks_mut(a_row)
            .zip(b.par_chunks_mut(b_row))
            .enumerate()
            .for_each(|(i, (ra, rb))| fill(i, ra, rb));
    }
    #[cfg(not(feature = "parallel"))]
    {
        a.chunks_mut(a_row)
            .zip(b.chunks_mut(b_row))
            .enumerate()
            .for_each(|(i, (ra, rb))| fill(i, ra, rb));
    }
}

/// Evaluate `eval(i)` for `i in 0..n`, returning results in index order.
pub fn eval_indexed<T, F>(n: usize, eval: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(eval).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(eval).collect()
    }
}

/// Sequential twin of [`eval_indexed`].
pub fn eval_indexed_seq<T, F>(n: usize, eval: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(eval).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn par_and_seq_sums_are_bit_identical() {
        let xs: Vec<f32> = (0..20_000).map(|i| (i as f32 * 0.37).sin()).collect();
        let a = map_sum(&xs, |x| x.abs() as f64);
        let b = map_sum_seq(&xs, |x| x.abs() as f64);
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn fill_rows_matches_seq() {
        let mut a = vec![0.0f32; 12 * 7];
        let mut b = vec![0.0f32; 12 * 7];
        let f = |i: usize, row: &mut [f32]| {
            for (j, x) in row.iter_mut().enumerate() {
                *x = (i * 31 + j) as f32;
            }
        };
        fill_rows(&mut a, 7, f);
        fill_rows_seq(&mut b, 7, f);
        assert_eq!(a, b);
    }

    #[test]
    fn abs_mean_of_empty_is_zero() {
        assert_eq!(abs_mean(&[]), 0.0);
    }
}
