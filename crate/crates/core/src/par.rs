//! Sample-level data parallelism.
//!
//! Every scan and evaluation in this crate is a map over independent samples
//! followed by an order-preserving reduction. With the `parallel` feature the
//! map runs on the rayon pool; without it (or with [`Execution::Sequential`])
//! it is a plain iterator. Results are collected in input order either way, so
//! reductions that follow are bit-identical across execution modes.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How a per-sample map is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Uses the rayon pool when the `parallel` feature is enabled, otherwise
    /// falls back to sequential.
    #[default]
    Parallel,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Maps `f` over `items`, preserving order.
pub fn map<T, R, F>(items: &[T], exec: Execution, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

/// Like [`map`], but short-circuits on the first error (in input order for the
/// sequential path; some error for the parallel path).
pub fn try_map<T, R, E, F>(items: &[T], exec: Execution, f: F) -> Result<Vec<R>, E>
where
    T: Sync,
    R: Send,
    E: Send,
    F: Fn(&T) -> Result<R, E> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved_in_both_modes() {
        let xs: Vec<u64> = (0..1000).collect();
        let a = map(&xs, Execution::Sequential, |x| x * x);
        let b = map(&xs, Execution::Parallel, |x| x * x);
        assert_eq!(a, b);
    }

    #[test]
    fn try_map_propagates_errors() {
        let xs: Vec<i32> = vec![1, 2, -3, 4];
        let r: Result<Vec<i32>, String> = try_map(&xs, Execution::Sequential, |&x| {
            if x < 0 {
                Err(format!("neg {x}"))
            } else {
                Ok(x)
            }
        });
        assert_eq!(r.unwrap_err(), "neg -3");
    }
}
