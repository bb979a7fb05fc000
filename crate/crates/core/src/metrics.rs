//! Quality and diagnostic metrics over point clouds (samples or embeddings).

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distance;
use crate::error::{PeError, Result};
use crate::matching;
use crate::voting::VoteHistogram;

pub const DEFAULT_EXACT_CAP: usize = 256;

/// Order `p` of a Wasserstein distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Order {
    Finite(f64),
    Infinity,
}

impl Order {
    pub fn finite(p: f64) -> Result<Self> {
        if !(p >= 1.0 && p.is_finite()) {
            return Err(PeError::InvalidArgument(format!("Wasserstein order must be >= 1, got {p}")));
        }
        Ok(Order::Finite(p))
    }
}

/// Optimal pairing between two equal-size multisets.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    /// `assignment[i]` is the index in B matched to A's `i`-th point.
    pub assignment: Vec<usize>,
    pub cost: f64,
}

fn check_nonempty<P>(a: &[P], b: &[P]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(PeError::NoSamples);
    }
    Ok(())
}

fn check_dims<A: AsRef<[f64]>>(a: &[A], b: &[A]) -> Result<usize> {
    let dim = a[0].as_ref().len();
    for p in a.iter().chain(b) {
        if p.as_ref().len() != dim {
            return Err(PeError::DimensionMismatch {
                expected: dim,
                found: p.as_ref().len(),
                row: None,
            });
        }
    }
    Ok(dim)
}

fn distance_matrix<A: AsRef<[f64]> + Sync>(a: &[A], b: &[A], power: f64) -> Vec<Vec<f64>> {
    a.par_iter()
        .map(|x| {
            b.iter()
                .map(|y| {
                    let d = distance::l2(x.as_ref(), y.as_ref());
                    if power == 1.0 {
                        d
                    } else {
                        d.powf(power)
                    }
                })
                .collect()
        })
        .collect()
}

/// Exact `W_p` between two equal-size uniform multisets via optimal
/// assignment (`p` finite) or bottleneck matching (`p = ∞`).
pub fn wasserstein_p<A: AsRef<[f64]> + Sync>(
    a: &[A],
    b: &[A],
    p: Order,
    cap: usize,
) -> Result<Coupling> {
    check_nonempty(a, b)?;
    check_dims(a, b)?;
    if a.len() != b.len() {
        return Err(PeError::SizeMismatch(format!(
            "exact Wasserstein needs equal sizes, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() > cap {
        return Err(PeError::SizeCap { size: a.len(), cap });
    }
    let n = a.len() as f64;
    match p {
        Order::Finite(p) => {
            let cost = distance_matrix(a, b, p);
            let (assignment, total) = matching::min_cost_assignment(&cost)?;
            Ok(Coupling {
                assignment,
                cost: (total.max(0.0) / n).powf(1.0 / p),
            })
        }
        Order::Infinity => {
            let cost = distance_matrix(a, b, 1.0);
            let (assignment, value) = matching::bottleneck_assignment(&cost)?;
            Ok(Coupling {
                assignment,
                cost: value,
            })
        }
    }
}

/// Exact `W_p` (finite `p`) between the uniform distributions on two
/// multisets of any sizes, solved as a transportation problem over their
/// distinct points.
pub fn wasserstein_transport<A: AsRef<[f64]> + Sync>(a: &[A], b: &[A], p: f64) -> Result<f64> {
    check_nonempty(a, b)?;
    check_dims(a, b)?;
    let (da, wa) = matching::compress(a);
    let (db, wb) = matching::compress(b);
    wasserstein_weighted(&da, &wa, &db, &wb, p)
}

/// Exact `W_p` between two integer-weighted discrete measures.
pub fn wasserstein_weighted(
    a: &[Vec<f64>],
    wa: &[u64],
    b: &[Vec<f64>],
    wb: &[u64],
    p: f64,
) -> Result<f64> {
    Order::finite(p)?;
    check_nonempty(a, b)?;
    check_dims(a, b)?;
    if a.len() != wa.len() || b.len() != wb.len() {
        return Err(PeError::SizeMismatch("one weight per point required".into()));
    }
    let cost = distance_matrix(a, b, p);
    let c = matching::transport_cost(&cost, wa, wb)?;
    Ok(c.max(0.0).powf(1.0 / p))
}

/// `max_x min_z d(x, z)`: the largest distance from a private point to its
/// nearest generated point.
pub fn coverage_radius<A: AsRef<[f64]> + Sync, B: AsRef<[f64]> + Sync>(
    private: &[A],
    generated: &[B],
) -> Result<f64> {
    Ok(nn_distances(private, generated)?
        .into_iter()
        .fold(0.0, f64::max))
}

fn nn_distances<A: AsRef<[f64]> + Sync, B: AsRef<[f64]> + Sync>(
    from: &[A],
    to: &[B],
) -> Result<Vec<f64>> {
    if from.is_empty() || to.is_empty() {
        return Err(PeError::NoSamples);
    }
    let dim = to[0].as_ref().len();
    if let Some(bad) = from
        .iter()
        .map(|x| x.as_ref().len())
        .chain(to.iter().map(|x| x.as_ref().len()))
        .find(|&l| l != dim)
    {
        return Err(PeError::DimensionMismatch {
            expected: dim,
            found: bad,
            row: None,
        });
    }
    Ok(from
        .par_iter()
        .map(|x| {
            distance::nearest(x.as_ref(), to)
                .map(|(_, d2)| d2.sqrt())
                .expect("nonempty")
        })
        .collect())
}

/// Nearest-neighbor distance from every point of `from` to `to`, sorted
/// ascending (an empirical CDF).
pub fn nn_distance_cdf<A: AsRef<[f64]> + Sync, B: AsRef<[f64]> + Sync>(
    from: &[A],
    to: &[B],
) -> Result<Vec<f64>> {
    let mut d = nn_distances(from, to)?;
    d.sort_by(f64::total_cmp);
    Ok(d)
}

/// Value at quantile `q ∈ [0, 1]` of a sorted sample (nearest rank).
pub fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let idx = ((q.clamp(0.0, 1.0) * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    Some(sorted[idx - 1])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrechetReport {
    pub distance: f64,
    /// Total magnitude of negative eigenvalues zeroed before square roots.
    pub clamped: f64,
}

fn mean_and_cov<A: AsRef<[f64]>>(pts: &[A], dim: usize) -> (DVector<f64>, DMatrix<f64>) {
    let n = pts.len();
    let m = DMatrix::from_fn(n, dim, |i, j| pts[i].as_ref()[j]);
    let mean = DVector::from_fn(dim, |j, _| m.column(j).sum() / n as f64);
    let mut centered = m;
    for j in 0..dim {
        let mu = mean[j];
        centered.column_mut(j).add_scalar_mut(-mu);
    }
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    (mean, cov)
}

fn sym_sqrt(m: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut clamped = 0.0;
    let roots = eig.eigenvalues.map(|l| {
        if l < 0.0 {
            clamped += -l;
            0.0
        } else {
            l.sqrt()
        }
    });
    let q = &eig.eigenvectors;
    (q * DMatrix::from_diagonal(&roots) * q.transpose(), clamped)
}

/// Fréchet distance between Gaussian fits of two clouds:
/// `‖μ₁−μ₂‖² + Tr(Σ₁ + Σ₂ − 2(Σ₁^{1/2} Σ₂ Σ₁^{1/2})^{1/2})`.
pub fn frechet_distance<A: AsRef<[f64]>>(a: &[A], b: &[A]) -> Result<FrechetReport> {
    if a.len() < 2 || b.len() < 2 {
        return Err(PeError::InvalidArgument(
            "Fréchet distance needs at least 2 points per set".into(),
        ));
    }
    let dim = a[0].as_ref().len();
    if let Some(bad) = a.iter().chain(b).map(|p| p.as_ref().len()).find(|&l| l != dim) {
        return Err(PeError::DimensionMismatch {
            expected: dim,
            found: bad,
            row: None,
        });
    }
    let (mu1, s1) = mean_and_cov(a, dim);
    let (mu2, s2) = mean_and_cov(b, dim);
    let (s1_half, c1) = sym_sqrt(&s1);
    let inner = &s1_half * &s2 * &s1_half;
    let (inner_half, c2) = sym_sqrt(&inner);
    let mean_term = (&mu1 - &mu2).norm_squared();
    let trace_term = s1.trace() + s2.trace() - 2.0 * inner_half.trace();
    Ok(FrechetReport {
        distance: (mean_term + trace_term).max(0.0),
        clamped: c1 + c2,
    })
}

/// Smallest number of singular directions of the mean-centered matrix whose
/// squared singular values reach `threshold` of the total. All-identical
/// input returns 0.
pub fn intrinsic_dimension<A: AsRef<[f64]>>(variations: &[A], threshold: f64) -> Result<usize> {
    if variations.len() < 2 {
        return Err(PeError::InvalidArgument(
            "intrinsic dimension needs at least 2 points".into(),
        ));
    }
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(PeError::InvalidArgument(format!(
            "variance threshold must lie in (0, 1], got {threshold}"
        )));
    }
    let dim = variations[0].as_ref().len();
    if let Some(bad) = variations.iter().map(|p| p.as_ref().len()).find(|&l| l != dim) {
        return Err(PeError::DimensionMismatch {
            expected: dim,
            found: bad,
            row: None,
        });
    }
    let n = variations.len();
    let mut m = DMatrix::from_fn(n, dim, |i, j| variations[i].as_ref()[j]);
    let scale = m.norm_squared();
    for j in 0..dim {
        let mu = m.column(j).sum() / n as f64;
        m.column_mut(j).add_scalar_mut(-mu);
    }
    let mut sq: Vec<f64> = m.singular_values().iter().map(|s| s * s).collect();
    sq.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = sq.iter().sum();
    // Identical rows can leave rounding residue after centering.
    if total <= 1e-24 * scale.max(f64::MIN_POSITIVE) {
        return Ok(0);
    }
    let mut acc = 0.0;
    for (k, s) in sq.iter().enumerate() {
        acc += s;
        // Relative slack so that exact ratios like 8/10 are not lost to
        // summation rounding.
        if acc / total >= threshold - 1e-12 {
            return Ok(k + 1);
        }
    }
    Ok(sq.len())
}

/// Population standard deviation of a vector.
pub fn population_std(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
}

/// Standard deviation of raw and released histogram counts.
pub fn histogram_std(h: &VoteHistogram) -> (f64, f64) {
    (population_std(&h.raw), population_std(&h.released))
}
