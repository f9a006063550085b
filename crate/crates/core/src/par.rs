//! Ordered map over independent work items.
//!
//! With the `parallel` feature the default is a rayon fan-out; without it
//! everything runs on the calling thread. Output order always follows input
//! order, so results are identical either way.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[cfg_attr(not(feature = "parallel"), default)]
    Sequential,
    #[cfg(feature = "parallel")]
    #[default]
    Parallel,
}

pub fn map_ordered<T, R, F>(items: &[T], exec: Execution, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec {
        Execution::Sequential => items.iter().map(f).collect(),
        #[cfg(feature = "parallel")]
        Execution::Parallel => items.par_iter().map(f).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_order() {
        let xs: Vec<u64> = (0..1000).collect();
        let seq = map_ordered(&xs, Execution::Sequential, |x| x * x);
        let def = map_ordered(&xs, Execution::default(), |x| x * x);
        assert_eq!(seq, def);
        assert_eq!(seq[999], 999 * 999);
    }
}
