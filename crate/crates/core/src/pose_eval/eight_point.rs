//! Normalised eight-point essential-matrix fit.

use nalgebra::{DMatrix, Matrix3, Vector3};

/// Similarity taking the dehomogenised points to zero mean and mean distance
/// `sqrt(2)`.
pub(crate) fn hartley(points: &[Vector3<f64>]) -> Option<Matrix3<f64>> {
    let n = points.len() as f64;
    let (mut mx, mut my) = (0.0, 0.0);
    for p in points {
        mx += p.x / p.z;
        my += p.y / p.z;
    }
    mx /= n;
    my /= n;
    let spread = points
        .iter()
        .map(|p| ((p.x / p.z - mx).powi(2) + (p.y / p.z - my).powi(2)).sqrt())
        .sum::<f64>()
        / n;
    if !(spread > 1e-300) || !spread.is_finite() {
        return None;
    }
    let s = std::f64::consts::SQRT_2 / spread;
    Some(Matrix3::new(
        s,
        0.0,
        -s * mx,
        0.0,
        s,
        -s * my,
        0.0,
        0.0,
        1.0,
    ))
}

/// Closest matrix with singular values `(1, 1, 0)`; `None` below rank 2.
pub(crate) fn project_essential(m: &Matrix3<f64>) -> Option<Matrix3<f64>> {
    if m.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let svd = m.svd(true, true);
    let (u, v_t) = (svd.u?, svd.v_t?);
    let sv = svd.singular_values;
    let mut order = [0usize, 1, 2];
    order.sort_by(|a, b| sv[*b].total_cmp(&sv[*a]));
    if !(sv[order[1]] > 1e-12 * sv[order[0]]) {
        return None;
    }
    let mut d = Matrix3::zeros();
    d[(order[0], order[0])] = 1.0;
    d[(order[1], order[1])] = 1.0;
    Some(u * d * v_t)
}

/// Least-squares essential matrix from `n >= 8` normalised correspondences.
pub fn fit(x1: &[Vector3<f64>], x2: &[Vector3<f64>]) -> Option<Matrix3<f64>> {
    fit_weighted(x1, x2, &vec![1.0; x1.len()])
}

/// Weighted least-squares fit; each constraint row is scaled by `sqrt(w)`.
pub fn fit_weighted(
    x1: &[Vector3<f64>],
    x2: &[Vector3<f64>],
    weights: &[f64],
) -> Option<Matrix3<f64>> {
    let n = x1.len();
    if n < 8 || x2.len() != n || weights.len() != n || weights.iter().any(|w| !(*w >= 0.0)) {
        return None;
    }
    let t1 = hartley(x1)?;
    let t2 = hartley(x2)?;
    let mut a = DMatrix::<f64>::zeros(n.max(9), 9);
    for k in 0..n {
        let p = t1 * (x1[k] / x1[k].z);
        let q = t2 * (x2[k] / x2[k].z);
        let s = weights[k].sqrt();
        for r in 0..3 {
            for c in 0..3 {
                a[(k, r * 3 + c)] = s * q[r] * p[c];
            }
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t?;
    let sv = &svd.singular_values;
    if !(sv[7] > 1e-12 * sv[0]) {
        return None;
    }
    let last = v_t.nrows() - 1;
    let e_hat = Matrix3::from_fn(|r, c| v_t[(last, r * 3 + c)]);
    project_essential(&(t2.transpose() * e_hat * t1))
}
