//! Execution strategy for the data-parallel inner loops.
//!
//! The engine maps work over junctions and over in-roads once per cycle.
//! Both maps are order-preserving and every mutable item (RNG streams,
//! vehicle tags) is owned by exactly one in-road, so the parallel and
//! sequential paths produce identical results bit for bit.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How per-cycle work is dispatched. `Parallel` is only available when the
/// crate is built with the `parallel` feature (on by default).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    #[cfg(feature = "parallel")]
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        #[cfg(feature = "parallel")]
        {
            Execution::Parallel
        }
        #[cfg(not(feature = "parallel"))]
        {
            Execution::Sequential
        }
    }
}

/// Maps `f` over `0..n`, collecting results in index order.
pub fn map_indexed<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        Execution::Sequential => (0..n).map(f).collect(),
        #[cfg(feature = "parallel")]
        Execution::Parallel => (0..n).into_par_iter().map(f).collect(),
    }
}

/// Maps `f` over mutable items, collecting results in item order.
pub(crate) fn map_items_mut<S, T, F>(exec: Execution, items: &mut [S], f: F) -> Vec<T>
where
    S: Send,
    T: Send,
    F: Fn(usize, &mut S) -> T + Sync + Send,
{
    match exec {
        Execution::Sequential => items
            .iter_mut()
            .enumerate()
            .map(|(i, item)| f(i, item))
            .collect(),
        #[cfg(feature = "parallel")]
        Execution::Parallel => items
            .par_iter_mut()
            .enumerate()
            .map(|(i, item)| f(i, item))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        let seq = map_indexed(Execution::Sequential, 100, |i| i * 3);
        assert_eq!(seq, (0..100).map(|i| i * 3).collect::<Vec<_>>());
        #[cfg(feature = "parallel")]
        {
            let par = map_indexed(Execution::Parallel, 100, |i| i * 3);
            assert_eq!(seq, par);
        }
    }

    #[test]
    fn map_items_mut_matches() {
        let mut a: Vec<u64> = (0..64).collect();
        let out_seq = map_items_mut(Execution::Sequential, &mut a, |i, v| {
            *v += 1;
            *v * i as u64
        });
        #[cfg(feature = "parallel")]
        {
            let mut b: Vec<u64> = (0..64).collect();
            let out_par = map_items_mut(Execution::Parallel, &mut b, |i, v| {
                *v += 1;
                *v * i as u64
            });
            assert_eq!(out_seq, out_par);
            assert_eq!(a, b);
        }
        let _ = out_seq;
    }
}
