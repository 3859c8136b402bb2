//! Vector kernels with a rayon backend and a sequential fallback.
//!
//! Reductions split their input into fixed-size chunks and combine the
//! partial sums in chunk order, so results are bit-identical whether or not
//! the `parallel` feature is enabled and independent of the thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Chunk length shared by every kernel in this module.
pub const CHUNK: usize = 4096;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    #[cfg(feature = "parallel")]
    {
        dot_par(a, b)
    }
    #[cfg(not(feature = "parallel"))]
    {
        dot_seq(a, b)
    }
}

pub fn dot_seq(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.chunks(CHUNK).zip(b.chunks(CHUNK)).map(|(x, y)| chunk_dot(x, y)).fold(0.0, |acc, s| acc + s)
}

#[cfg(feature = "parallel")]
pub fn dot_par(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    if a.len() <= CHUNK {
        return chunk_dot(a, b);
    }
    let partial: Vec<f64> = a.par_chunks(CHUNK).zip(b.par_chunks(CHUNK)).map(|(x, y)| chunk_dot(x, y)).collect();
    partial.into_iter().fold(0.0, |acc, s| acc + s)
}

#[inline]
fn chunk_dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(p, q)| p * q).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    #[cfg(feature = "parallel")]
    if y.len() > CHUNK {
        y.par_chunks_mut(CHUNK)
            .zip(x.par_chunks(CHUNK))
            .for_each(|(yc, xc)| yc.iter_mut().zip(xc).for_each(|(p, q)| *p += alpha * q));
        return;
    }
    y.iter_mut().zip(x).for_each(|(p, q)| *p += alpha * q);
}

/// Weighted sum `out = Σ_k coeff_k · vecs_k`, accumulated in `k` order for
/// every component.
pub fn weighted_sum(out: &mut [f64], coeffs: &[f64], vecs: &[&[f64]]) {
    #[cfg(feature = "parallel")]
    {
        weighted_sum_par(out, coeffs, vecs)
    }
    #[cfg(not(feature = "parallel"))]
    {
        weighted_sum_seq(out, coeffs, vecs)
    }
}

pub fn weighted_sum_seq(out: &mut [f64], coeffs: &[f64], vecs: &[&[f64]]) {
    debug_assert_eq!(coeffs.len(), vecs.len());
    for (c, oc) in out.chunks_mut(CHUNK).enumerate() {
        weighted_sum_chunk(oc, c * CHUNK, coeffs, vecs);
    }
}

#[cfg(feature = "parallel")]
pub fn weighted_sum_par(out: &mut [f64], coeffs: &[f64], vecs: &[&[f64]]) {
    debug_assert_eq!(coeffs.len(), vecs.len());
    out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, oc)| weighted_sum_chunk(oc, c * CHUNK, coeffs, vecs));
}

fn weighted_sum_chunk(out: &mut [f64], offset: usize, coeffs: &[f64], vecs: &[&[f64]]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    let len = out.len();
    for (&w, v) in coeffs.iter().zip(vecs) {
        let src = &v[offset..offset + len];
        out.iter_mut().zip(src).for_each(|(o, s)| *o += w * s);
    }
}

/// Map `f` over `items`, in parallel when the feature is on. Output order
/// always matches input order.
pub fn map_collect<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}
