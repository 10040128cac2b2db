pub mod geometry;
pub mod mechanics;
pub mod qp;
pub mod cpf;
pub mod scope;
pub mod synth;

/// Map over a slice, in parallel when the `parallel` feature is enabled.
/// Output order follows input order either way.
#[cfg(feature = "parallel")]
pub(crate) fn par_map<T: Sync, U: Send, F: Fn(&T) -> U + Sync + Send>(items: &[T], f: F) -> Vec<U> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn par_map<T, U, F: Fn(&T) -> U>(items: &[T], f: F) -> Vec<U> {
    items.iter().map(f).collect()
}
