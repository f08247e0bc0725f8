//! Walker-level data parallelism.
//!
//! With the `parallel` feature (default) [`Backend::Parallel`] runs on the
//! current rayon pool. Without it every backend runs sequentially. Outputs
//! are identical either way because randomness is keyed per walker and all
//! reductions are done serially in index order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Backend {
    Sequential,
    #[default]
    Parallel,
}

impl Backend {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Backend::Parallel
    }

    /// `(0..n).map(f).collect()`, order preserved.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Calls `f(i, chunk_i)` on consecutive `chunk`-sized pieces of `data`.
    pub fn for_each_chunk<F>(self, data: &mut [f64], chunk: usize, f: F)
    where
        F: Fn(usize, &mut [f64]) + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            data.par_chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
            return;
        }
        data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    }

    /// Splits `0..n` into consecutive blocks of `block` indices, calls
    /// `f(block_index, range)` on each and concatenates the results in order.
    pub fn map_blocks<T, F>(self, n: usize, block: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize, std::ops::Range<usize>) -> Vec<T> + Sync + Send,
    {
        let blocks = n.div_ceil(block);
        let range = |b: usize| b * block..((b + 1) * block).min(n);
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            let parts: Vec<Vec<T>> = (0..blocks).into_par_iter().map(|b| f(b, range(b))).collect();
            return parts.into_iter().flatten().collect();
        }
        (0..blocks).flat_map(|b| f(b, range(b))).collect()
    }

    /// Calls `f(block_index, first_item, slice)` on consecutive pieces of
    /// `data` holding `block` items of `item_len` values each.
    pub fn for_each_block<F>(self, data: &mut [f64], item_len: usize, block: usize, f: F)
    where
        F: Fn(usize, usize, &mut [f64]) + Sync + Send,
    {
        let size = item_len * block;
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            data.par_chunks_mut(size).enumerate().for_each(|(b, c)| f(b, b * block, c));
            return;
        }
        data.chunks_mut(size).enumerate().for_each(|(b, c)| f(b, b * block, c));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backends_agree() {
        let f = |i: usize| (i as f64).sqrt();
        assert_eq!(Backend::Sequential.map(1000, f), Backend::Parallel.map(1000, f));
        let mut a = vec![1.0; 12];
        let mut b = a.clone();
        Backend::Sequential.for_each_chunk(&mut a, 3, |i, c| c.iter_mut().for_each(|v| *v += i as f64));
        Backend::Parallel.for_each_chunk(&mut b, 3, |i, c| c.iter_mut().for_each(|v| *v += i as f64));
        assert_eq!(a, b);
        let g = |b: usize, r: std::ops::Range<usize>| r.map(|i| (b, i)).collect::<Vec<_>>();
        let seq = Backend::Sequential.map_blocks(10, 4, g);
        assert_eq!(seq, Backend::Parallel.map_blocks(10, 4, g));
        assert_eq!(seq.len(), 10);
        assert_eq!(seq[9], (2, 9));
        let mut c = vec![0.0; 10];
        Backend::Parallel.for_each_block(&mut c, 2, 2, |b, first, s| {
            assert_eq!(s.len(), 4.min(10 - 2 * first));
            s.iter_mut().for_each(|v| *v = b as f64);
        });
        assert_eq!(c, vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 2.0, 2.0]);
    }
}
