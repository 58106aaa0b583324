//! Exact dyadic arithmetic, polyhedral norms and the digit constructions of
//! sharp fractal examples for polyhedral-norm distance sets.

pub mod construct;
pub mod dimension;
pub mod distset;
pub mod dyadic;
pub mod io;
pub mod norms;
pub mod rational;
pub mod schedule;

/// Caps the global rayon pool at `POLYFRAC_THREADS` threads when that variable is set.
pub fn init_threads() {
    if let Some(n) = std::env::var("POLYFRAC_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}
