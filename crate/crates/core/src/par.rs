//! Data-parallel helpers.
//!
//! With the `parallel` feature (on by default) [`Execution::Parallel`] fans work
//! out over the rayon pool. Without it, every call runs sequentially. Results
//! are always collected in index order, so output never depends on the
//! execution mode or on thread scheduling.

/// How a data-parallel loop is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// Whether this mode actually runs on the thread pool in the current build.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Evaluates `f(i)` for `i in 0..n` and returns the results in index order.
pub fn map_range<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Maps over a slice, preserving order.
pub fn map_slice<S, T, F>(exec: Execution, items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    map_range(exec, items.len(), |i| f(&items[i]))
}

/// Fills the upper triangle (including the diagonal) of an `n x n` table with
/// `f(i, j)` and mirrors it. Pairs are evaluated in parallel when enabled.
pub fn symmetric_table<F>(exec: Execution, n: usize, f: F) -> Vec<Vec<f64>>
where
    F: Fn(usize, usize) -> f64 + Sync + Send,
{
    let rows: Vec<Vec<f64>> = map_range(exec, n, |i| (i..n).map(|j| f(i, j)).collect());
    let mut out = vec![vec![0.0; n]; n];
    for (i, row) in rows.into_iter().enumerate() {
        for (off, v) in row.into_iter().enumerate() {
            let j = i + off;
            out[i][j] = v;
            out[j][i] = v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let f = |i: usize| (i as f64).sqrt().sin();
        let a = map_range(Execution::Sequential, 1000, f);
        let b = map_range(Execution::Parallel, 1000, f);
        assert_eq!(a, b);
    }

    #[test]
    fn symmetric_table_mirrors() {
        let t = symmetric_table(Execution::Parallel, 5, |i, j| (i * 10 + j) as f64);
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(t[i][j], t[j][i]);
            }
        }
        assert_eq!(t[1][3], 13.0);
    }
}
