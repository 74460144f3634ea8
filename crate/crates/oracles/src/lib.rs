//! Slow, independent reference computations for cross-checking the library.
//! Nothing here shares code with the implementations under test.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

fn exact(v: f64) -> BigRational {
    BigRational::from_float(v).expect("finite input")
}

fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().expect("representable")
}

/// Distance between two points from an exactly computed squared norm.
pub fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = exact(a[0]) - exact(b[0]);
    let dy = exact(a[1]) - exact(b[1]);
    to_f64(&(dx.clone() * dx + dy.clone() * dy)).sqrt()
}

/// Unsigned angle between two vectors from exact dot and cross products.
/// Returns `None` for a zero vector.
pub fn angle(u: [f64; 2], v: [f64; 2]) -> Option<f64> {
    let (ux, uy, vx, vy) = (exact(u[0]), exact(u[1]), exact(v[0]), exact(v[1]));
    if (ux.is_zero() && uy.is_zero()) || (vx.is_zero() && vy.is_zero()) {
        return None;
    }
    let dot = ux.clone() * vx.clone() + uy.clone() * vy.clone();
    let cross = ux * vy - uy * vx;
    Some(to_f64(&cross).abs().atan2(to_f64(&dot)))
}

/// Interior angle at `vertex`, exact differences.
pub fn joint_angle(a: [f64; 2], vertex: [f64; 2], b: [f64; 2]) -> Option<f64> {
    let d = |p: [f64; 2]| [exact(p[0]) - exact(vertex[0]), exact(p[1]) - exact(vertex[1])];
    let (u, v) = (d(a), d(b));
    if (u[0].is_zero() && u[1].is_zero()) || (v[0].is_zero() && v[1].is_zero()) {
        return None;
    }
    let dot = u[0].clone() * v[0].clone() + u[1].clone() * v[1].clone();
    let cross = u[0].clone() * v[1].clone() - u[1].clone() * v[0].clone();
    Some(to_f64(&cross).abs().atan2(to_f64(&dot)))
}

/// Angle between the vectors a1->a2 and b1->b2.
pub fn segment_angle(a1: [f64; 2], a2: [f64; 2], b1: [f64; 2], b2: [f64; 2]) -> Option<f64> {
    let ux = exact(a2[0]) - exact(a1[0]);
    let uy = exact(a2[1]) - exact(a1[1]);
    let vx = exact(b2[0]) - exact(b1[0]);
    let vy = exact(b2[1]) - exact(b1[1]);
    if (ux.is_zero() && uy.is_zero()) || (vx.is_zero() && vy.is_zero()) {
        return None;
    }
    let dot = ux.clone() * vx.clone() + uy.clone() * vy.clone();
    let cross = ux * vy - uy * vx;
    Some(to_f64(&cross).abs().atan2(to_f64(&dot)))
}

pub fn exact_midpoint(a: f64, b: f64) -> f64 {
    to_f64(&((exact(a) + exact(b)) / BigRational::from_integer(BigInt::from(2))))
}

pub type Dense = Vec<Vec<f64>>;

pub fn identity(n: usize) -> Dense {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

pub fn matmul(a: &Dense, b: &Dense) -> Dense {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            let mut s = 0.0;
            for t in 0..k {
                s += a[i][t] * b[t][j];
            }
            out[i][j] = s;
        }
    }
    out
}

pub fn transpose(a: &Dense) -> Dense {
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

pub fn add(a: &Dense, b: &Dense) -> Dense {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect()).collect()
}

pub fn sub(a: &Dense, b: &Dense) -> Dense {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p - q).collect()).collect()
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn inverse(a: &Dense) -> Option<Dense> {
    let n = a.len();
    let mut m: Dense = a.iter().zip(identity(n)).map(|(r, e)| r.iter().copied().chain(e).collect()).collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))?;
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        let p = m[col][col];
        for v in &mut m[col] {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                if f != 0.0 {
                    for c in 0..2 * n {
                        m[r][c] -= f * m[col][c];
                    }
                }
            }
        }
    }
    Some(m.into_iter().map(|r| r[n..].to_vec()).collect())
}

/// Constant-velocity prediction for an (x, v) state split in halves.
pub fn kalman_predict(mean: &[f64], cov: &Dense, dt: f64, q_pos: f64, q_vel: f64) -> (Vec<f64>, Dense) {
    let n = mean.len();
    let half = n / 2;
    let mut f = identity(n);
    for i in 0..half {
        f[i][i + half] = dt;
    }
    let mut q = vec![vec![0.0; n]; n];
    for i in 0..n {
        q[i][i] = if i < half { q_pos * dt } else { q_vel * dt };
    }
    let m = matmul(&f, &mean.iter().map(|&v| vec![v]).collect());
    let p = add(&matmul(&matmul(&f, cov), &transpose(&f)), &q);
    (m.into_iter().map(|r| r[0]).collect(), p)
}

/// Textbook update with explicit inverse and the simple posterior form.
pub fn kalman_update(mean: &[f64], cov: &Dense, obs: &[f64], r: f64) -> Option<(Vec<f64>, Dense)> {
    let n = mean.len();
    let k = obs.len();
    let h: Dense = (0..k).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    let ht = transpose(&h);
    let mut s = matmul(&matmul(&h, cov), &ht);
    for (i, row) in s.iter_mut().enumerate() {
        row[i] += r;
    }
    let gain = matmul(&matmul(cov, &ht), &inverse(&s)?);
    let pred: Vec<f64> = (0..k).map(|i| mean[i]).collect();
    let innov: Dense = obs.iter().zip(&pred).map(|(o, p)| vec![o - p]).collect();
    let dm = matmul(&gain, &innov);
    let new_mean = mean.iter().zip(&dm).map(|(m, d)| m + d[0]).collect();
    let new_cov = matmul(&sub(&identity(n), &matmul(&gain, &h)), cov);
    Some((new_mean, new_cov))
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

/// Best total weight over all partial one-to-one matchings, where a pair
/// contributes only if its weight is at least `min`.
pub fn best_assignment(weights: &[Vec<f64>], min: f64) -> f64 {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    let n = rows.max(cols);
    let mut best = 0.0f64;
    for perm in permutations(n) {
        let mut total = 0.0;
        for (i, &j) in perm.iter().enumerate() {
            if i < rows && j < cols && weights[i][j] >= min && weights[i][j] > 0.0 {
                total += weights[i][j];
            }
        }
        best = best.max(total);
    }
    best
}

/// Intersection over union from corner coordinates.
pub fn iou(a: [f64; 4], b: [f64; 4]) -> f64 {
    let corners = |r: [f64; 4]| (r[0] - r[2] / 2.0, r[1] - r[3] / 2.0, r[0] + r[2] / 2.0, r[1] + r[3] / 2.0);
    let (ax0, ay0, ax1, ay1) = corners(a);
    let (bx0, by0, bx1, by1) = corners(b);
    let w = (ax1.min(bx1) - ax0.max(bx0)).max(0.0);
    let h = (ay1.min(by1) - ay0.max(by0)).max(0.0);
    let inter = w * h;
    let union = a[2] * a[3] + b[2] * b[3] - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// AP by enumerating each distinct threshold and counting directly.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> f64 {
    let positives = labels.iter().filter(|&&l| l).count() as f64;
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for t in thresholds {
        let selected: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] >= t).collect();
        let tp = selected.iter().filter(|&&i| labels[i]).count() as f64;
        let precision = tp / selected.len() as f64;
        let recall = tp / positives;
        ap += precision * (recall - prev_recall);
        prev_recall = recall;
    }
    ap
}

pub fn displacement(pred: &[[f64; 2]], gt: &[[f64; 2]]) -> (f64, f64) {
    let mut total = 0.0;
    let mut last = 0.0;
    for t in 0..pred.len() {
        let dx = pred[t][0] - gt[t][0];
        let dy = pred[t][1] - gt[t][1];
        last = (dx * dx + dy * dy).sqrt();
        total += last;
    }
    (total / pred.len() as f64, last)
}

/// Start indices of sliding windows by direct enumeration.
pub fn window_starts(len: usize, span: usize, stride: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut s = 0;
    while s + span <= len {
        out.push(s);
        s += stride;
    }
    out
}
