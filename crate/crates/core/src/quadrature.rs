//! Composite Simpson rule over uniform grids.

use std::ops::{Add, Mul};

/// Integrates `f` over `[a, b]` with `intervals` subintervals (rounded up to
/// an even count). Summation order is fixed, so results are reproducible.
pub fn simpson<T, F>(a: f64, b: f64, intervals: usize, mut f: F) -> T
where
    T: Copy + Default + Add<Output = T> + Mul<f64, Output = T>,
    F: FnMut(f64) -> T,
{
    let n = even_intervals(intervals);
    let h = (b - a) / n as f64;
    let mut odd = T::default();
    let mut even = T::default();
    for i in 1..n {
        let v = f(a + i as f64 * h);
        if i % 2 == 1 {
            odd = odd + v;
        } else {
            even = even + v;
        }
    }
    (f(a) + f(b) + odd * 4.0 + even * 2.0) * (h / 3.0)
}

/// Simpson weights and nodes for `[a, b]`; integrating several functions on
/// the same grid reuses them.
pub fn simpson_nodes(a: f64, b: f64, intervals: usize) -> Vec<(f64, f64)> {
    let n = even_intervals(intervals);
    let h = (b - a) / n as f64;
    (0..=n)
        .map(|i| {
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            (a + i as f64 * h, w * h / 3.0)
        })
        .collect()
}

fn even_intervals(n: usize) -> usize {
    let n = n.max(2);
    n + n % 2
}
