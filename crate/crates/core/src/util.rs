//! Small numeric helpers shared across the crate.

/// Pairwise (cascade) summation.
///
/// Used for every spectral reduction in the crate: the error grows like
/// O(log n) in the term count instead of O(n) for naive left-to-right
/// accumulation, which matters at cutoffs of 10⁵–10⁶ terms. The reduction
/// order is a pure function of the slice length, so results are
/// reproducible across runs and thread counts.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        let mut acc = 0.0;
        for &x in xs {
            acc += x;
        }
        acc
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

/// Pairwise sum of `f(0), f(1), ..., f(n-1)` without materializing the terms.
pub fn pairwise_sum_by<F: Fn(usize) -> f64>(n: usize, f: F) -> f64 {
    fn rec<F: Fn(usize) -> f64>(lo: usize, hi: usize, f: &F) -> f64 {
        if hi - lo <= 32 {
            let mut acc = 0.0;
            for i in lo..hi {
                acc += f(i);
            }
            acc
        } else {
            let mid = lo + (hi - lo) / 2;
            rec(lo, mid, f) + rec(mid, hi, f)
        }
    }
    rec(0, n, &f)
}
