//! Independent reference computations shared by the integration and
//! acceptance tests. Nothing here calls into the library.

#![allow(dead_code)]

/// `δ(ε)` of a sensitivity-1 Gaussian mechanism with noise `s`, as the
/// hockey-stick integral `∫ (p(x) − e^ε q(x))_+ dx` with `p = N(0, s²)` and
/// `q = N(1, s²)`, by composite Simpson on `[x* − 40s, x*]` where
/// `x* = 1/2 − ε s²` is the crossing point.
pub fn hockey_stick_delta(s: f64, eps: f64) -> f64 {
    let x_star = 0.5 - eps * s * s;
    let lo = x_star - 40.0 * s;
    let n = 400_000usize;
    let h = (x_star - lo) / n as f64;
    let norm = -(s * (2.0 * std::f64::consts::PI).sqrt()).ln();
    let f = |x: f64| {
        let lp = norm - x * x / (2.0 * s * s);
        let lq = eps + norm - (x - 1.0) * (x - 1.0) / (2.0 * s * s);
        (lp.exp() - lq.exp()).max(0.0)
    };
    let mut acc = f(lo) + f(x_star);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(lo + i as f64 * h);
    }
    acc * h / 3.0
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Exact `W_p` between equal-size uniform multisets by trying every
/// bijection.
pub fn brute_force_wp(a: &[Vec<f64>], b: &[Vec<f64>], p: f64) -> f64 {
    let n = a.len();
    permutations(n)
        .iter()
        .map(|perm| {
            let total: f64 = (0..n).map(|i| dist(&a[i], &b[perm[i]]).powf(p)).sum();
            (total / n as f64).powf(1.0 / p)
        })
        .fold(f64::INFINITY, f64::min)
}

/// `W_∞` by brute force: the smallest achievable largest matched distance.
pub fn brute_force_winf(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let n = a.len();
    permutations(n)
        .iter()
        .map(|perm| (0..n).map(|i| dist(&a[i], &b[perm[i]])).fold(0.0, f64::max))
        .fold(f64::INFINITY, f64::min)
}

/// Squared 2-Wasserstein distance between the Gaussians fitted to two 1-D
/// samples: `(μ₁ − μ₂)² + (s₁ − s₂)²` with the unbiased sample standard
/// deviation.
pub fn frechet_1d(a: &[f64], b: &[f64]) -> f64 {
    let stats = |v: &[f64]| {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        (m, var.sqrt())
    };
    let (m1, s1) = stats(a);
    let (m2, s2) = stats(b);
    (m1 - m2).powi(2) + (s1 - s2).powi(2)
}

/// Nearest-neighbor vote counts with lowest-index tie breaking, written
/// out longhand.
pub fn vote_counts(private: &[Vec<f64>], population: &[Vec<f64>]) -> Vec<u64> {
    let mut h = vec![0u64; population.len()];
    for x in private {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (j, z) in population.iter().enumerate() {
            let d: f64 = x.iter().zip(z).map(|(u, v)| (u - v) * (u - v)).sum();
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        h[best] += 1;
    }
    h
}
