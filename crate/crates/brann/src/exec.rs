//! Data-parallel execution helpers.
//!
//! All parallel work in this crate goes through this module so that builds
//! without the `parallel` feature fall back to plain sequential iteration
//! with identical results. Parallel maps preserve input order and never
//! reduce floating-point values across threads, so outputs are bitwise
//! identical regardless of thread count.

/// How many workers a parallel section may use.
///
/// `Jobs::Serial` always runs on the calling thread; `Jobs::Parallel(n)`
/// uses a rayon pool of `n` threads (or the default pool size when `n` is 0).
/// Without the `parallel` feature every variant degrades to sequential.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Jobs {
    Serial,
    Parallel(usize),
}

impl Jobs {
    /// Interpret a CLI-style job count: 1 means serial, anything else parallel.
    pub fn from_count(jobs: usize) -> Self {
        if jobs == 1 {
            Jobs::Serial
        } else {
            Jobs::Parallel(jobs)
        }
    }
}

impl Default for Jobs {
    fn default() -> Self {
        Jobs::Parallel(0)
    }
}

/// Order-preserving map over a slice, parallel when requested and available.
#[cfg(feature = "parallel")]
pub fn map_indexed<T, U, F>(jobs: Jobs, items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(usize, &T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    match jobs {
        Jobs::Serial => items.iter().enumerate().map(|(i, t)| f(i, t)).collect(),
        Jobs::Parallel(n) => {
            let run = || {
                items
                    .par_iter()
                    .enumerate()
                    .map(|(i, t)| f(i, t))
                    .collect::<Vec<U>>()
            };
            if n == 0 {
                run()
            } else {
                // A dedicated pool keeps `--jobs` an actual bound instead of a hint.
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .expect("failed to build worker pool");
                pool.install(run)
            }
        }
    }
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, U, F>(_jobs: Jobs, items: &[T], f: F) -> Vec<U>
where
    F: Fn(usize, &T) -> U,
{
    items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

/// Order-preserving map without the index argument.
pub fn map<T, U, F>(jobs: Jobs, items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    map_indexed(jobs, items, |_, t| f(t))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        let xs: Vec<usize> = (0..1000).collect();
        let serial = map(Jobs::Serial, &xs, |x| x * 3);
        let parallel = map(Jobs::Parallel(4), &xs, |x| x * 3);
        assert_eq!(serial, parallel);
        assert_eq!(serial[999], 2997);
    }

    #[test]
    fn jobs_from_count() {
        assert_eq!(Jobs::from_count(1), Jobs::Serial);
        assert_eq!(Jobs::from_count(8), Jobs::Parallel(8));
    }
}
