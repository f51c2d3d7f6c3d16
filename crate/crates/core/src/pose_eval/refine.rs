//! Levenberg-Marquardt polish of a relative pose on Sampson residuals.

use nalgebra::{Matrix3, Matrix5, Rotation3, Vector3, Vector5};

use super::skew;

const MAX_ITERS: usize = 50;
const STEP: f64 = 1e-7;

/// Signed Sampson residual `x2^T E x1 / |grad|`.
fn residual(e: &Matrix3<f64>, x1: &Vector3<f64>, x2: &Vector3<f64>) -> f64 {
    let ex1 = e * x1;
    let etx2 = e.transpose() * x2;
    let denom = (ex1.x * ex1.x + ex1.y * ex1.y + etx2.x * etx2.x + etx2.y * etx2.y).sqrt();
    if denom > 0.0 {
        x2.dot(&ex1) / denom
    } else {
        0.0
    }
}

/// Two unit vectors spanning the tangent plane of the sphere at `t`.
fn tangent_basis(t: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let helper = if t.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let b1 = t.cross(&helper).normalize();
    (b1, t.cross(&b1))
}

struct Chart {
    r: Matrix3<f64>,
    t: Vector3<f64>,
    b1: Vector3<f64>,
    b2: Vector3<f64>,
}

impl Chart {
    fn new(r: Matrix3<f64>, t: Vector3<f64>) -> Self {
        let (b1, b2) = tangent_basis(&t);
        Self { r, t, b1, b2 }
    }

    fn at(&self, d: &Vector5<f64>) -> (Matrix3<f64>, Vector3<f64>) {
        let r = self.r * Rotation3::new(Vector3::new(d[0], d[1], d[2])).into_inner();
        let t = (self.t + self.b1 * d[3] + self.b2 * d[4]).normalize();
        (r, t)
    }
}

fn residuals(
    r: &Matrix3<f64>,
    t: &Vector3<f64>,
    x1: &[Vector3<f64>],
    x2: &[Vector3<f64>],
) -> Vec<f64> {
    let e = skew(t) * r;
    x1.iter().zip(x2).map(|(a, b)| residual(&e, a, b)).collect()
}

fn cost(res: &[f64]) -> f64 {
    res.iter().map(|v| v * v).sum()
}

/// Minimises the summed squared Sampson distance over `(R, t)` with `|t| = 1`,
/// starting from `(r, t)`. Returns the start unchanged when no step helps.
pub(crate) fn refine_pose(
    r: &Matrix3<f64>,
    t: &Vector3<f64>,
    x1: &[Vector3<f64>],
    x2: &[Vector3<f64>],
) -> (Matrix3<f64>, Vector3<f64>) {
    let mut chart = Chart::new(*r, t.normalize());
    let mut res = residuals(&chart.r, &chart.t, x1, x2);
    let mut current = cost(&res);
    let mut lambda = 1e-3;
    for _ in 0..MAX_ITERS {
        // Central-difference Jacobian, one column per chart coordinate.
        let cols: Vec<Vec<f64>> = (0..5)
            .map(|k| {
                let mut d = Vector5::zeros();
                d[k] = STEP;
                let (rp, tp) = chart.at(&d);
                let (rm, tm) = chart.at(&-d);
                let plus = residuals(&rp, &tp, x1, x2);
                let minus = residuals(&rm, &tm, x1, x2);
                plus.iter()
                    .zip(&minus)
                    .map(|(p, m)| (p - m) / (2.0 * STEP))
                    .collect()
            })
            .collect();
        let mut jtj = Matrix5::zeros();
        let mut jtr = Vector5::zeros();
        for i in 0..res.len() {
            let row = Vector5::from_fn(|k, _| cols[k][i]);
            jtj += row * row.transpose();
            jtr += row * res[i];
        }
        let mut improved = false;
        while lambda < 1e12 {
            let mut damped = jtj;
            for k in 0..5 {
                damped[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = damped.cholesky().map(|c| c.solve(&-jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let (rn, tn) = chart.at(&step);
            let next = residuals(&rn, &tn, x1, x2);
            let next_cost = cost(&next);
            if next_cost < current {
                let gain = (current - next_cost) / current.max(f64::MIN_POSITIVE);
                chart = Chart::new(rn, tn);
                res = next;
                current = next_cost;
                lambda = (lambda / 10.0).max(1e-12);
                improved = gain > 1e-12;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (chart.r, chart.t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng as _;

    #[test]
    fn recovers_pose_from_perturbed_start() {
        let mut r = rng::seeded(4);
        let rot = Rotation3::new(Vector3::new(0.1, -0.2, 0.05)).into_inner();
        let t = Vector3::new(0.8, 0.1, 0.2).normalize();
        let (mut x1, mut x2) = (Vec::new(), Vec::new());
        for _ in 0..40 {
            let p = Vector3::new(
                r.random_range(-1.0..1.0),
                r.random_range(-1.0..1.0),
                r.random_range(3.0..8.0),
            );
            let q = rot * p + t;
            x1.push(p / p.z);
            x2.push(q / q.z);
        }
        let start_r = rot * Rotation3::new(Vector3::new(0.01, 0.0, -0.01)).into_inner();
        let start_t = (t + Vector3::new(0.0, 0.05, -0.03)).normalize();
        let (rr, tt) = refine_pose(&start_r, &start_t, &x1, &x2);
        assert!((rr - rot).norm() < 1e-8, "{}", (rr - rot).norm());
        assert!((tt - t).norm() < 1e-8);
    }

    #[test]
    fn residual_is_distance_for_horizontal_epipolar_lines() {
        // Pure x translation: epipolar lines are horizontal, so the Sampson
        // distance is half the vertical disparity over sqrt(2) per image.
        let e = skew(&Vector3::x());
        let d = residual(
            &e,
            &Vector3::new(0.0, 0.0, 1.0),
            &Vector3::new(0.3, 0.2, 1.0),
        );
        assert!((d.abs() - 0.2 / 2f64.sqrt()).abs() < 1e-15);
    }
}
