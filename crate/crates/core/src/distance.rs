//! Euclidean distance kernels.

#[inline]
pub fn sq_l2(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub fn l2(a: &[f64], b: &[f64]) -> f64 {
    sq_l2(a, b).sqrt()
}

/// Index of the nearest candidate by squared distance; ties go to the lowest
/// index.
#[inline]
pub fn nearest<C: AsRef<[f64]>>(x: &[f64], candidates: &[C]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (j, c) in candidates.iter().enumerate() {
        let d = sq_l2(x, c.as_ref());
        if best.map_or(true, |(_, b)| d < b) {
            best = Some((j, d));
        }
    }
    best
}
