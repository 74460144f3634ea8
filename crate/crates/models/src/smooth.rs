//! Least-squares cubic smoothing of predicted trajectories.

/// Result of [`smooth_trajectory`]. `fitted` is false when the input was too
/// short for a cubic and was returned unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct Smoothed {
    pub points: Vec<[f64; 2]>,
    pub fitted: bool,
}

/// Fits `x(t)` and `y(t)` with cubics over `t = 1..=len` and resamples them
/// at the same times.
pub fn smooth_trajectory(points: &[[f64; 2]]) -> Smoothed {
    let n = points.len();
    if n < 4 {
        return Smoothed {
            points: points.to_vec(),
            fitted: false,
        };
    }
    let basis = orthonormal_cubic_basis(n);
    let mut out = vec![[0.0; 2]; n];
    for axis in 0..2 {
        for q in &basis {
            let coef: f64 = q.iter().zip(points).map(|(a, p)| a * p[axis]).sum();
            for (o, a) in out.iter_mut().zip(q) {
                o[axis] += coef * a;
            }
        }
    }
    Smoothed {
        points: out,
        fitted: true,
    }
}

/// Orthonormal basis of the cubic polynomials sampled at `n` equally spaced
/// times, by modified Gram-Schmidt on `1, s, s², s³` with `s ∈ [-1, 1]`.
fn orthonormal_cubic_basis(n: usize) -> Vec<Vec<f64>> {
    let s: Vec<f64> = (0..n).map(|i| 2.0 * i as f64 / (n - 1) as f64 - 1.0).collect();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(4);
    for degree in 0..4 {
        let mut v: Vec<f64> = s.iter().map(|x| x.powi(degree)).collect();
        // Two passes keep the basis orthogonal to rounding error.
        for _ in 0..2 {
            for q in &basis {
                let dot: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= dot * qi;
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        basis.push(v);
    }
    basis
}
