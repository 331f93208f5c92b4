//! Indexed map over independent work items.
//!
//! With the `parallel` feature the items run on the current rayon pool;
//! without it they run in order on the calling thread. Output order is the
//! index order in both cases, and every work item derives its own random
//! stream from its index, so results are identical either way.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub fn map_indexed<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..count).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_indexed_sequential(count, f)
    }
}

/// Sequential reference path, always available (used by the benches).
pub fn map_indexed_sequential<T, F>(count: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..count).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let out = map_indexed(100, |i| i * i);
        assert_eq!(out, map_indexed_sequential(100, |i| i * i));
    }
}
