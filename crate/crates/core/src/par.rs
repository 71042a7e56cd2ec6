//! Order-preserving map over an index range, parallel when the `parallel`
//! feature is enabled.

#[cfg(feature = "parallel")]
pub(crate) fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    F: Fn(usize) -> R,
{
    (0..n).map(f).collect()
}

#[cfg(feature = "parallel")]
pub(crate) fn configure_threads(n: usize) -> crate::Result<()> {
    if n == 0 {
        return Err(crate::Error::Config("thread count must be positive".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| crate::Error::Config(format!("cannot configure {n} threads: {e}")))
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn configure_threads(n: usize) -> crate::Result<()> {
    if n == 1 {
        Ok(())
    } else {
        Err(crate::Error::Config(format!(
            "built without the `parallel` feature; {n} threads unavailable"
        )))
    }
}
