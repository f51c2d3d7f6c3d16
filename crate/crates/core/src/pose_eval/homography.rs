use nalgebra::{DMatrix, Matrix3, Vector3};
use rand::seq::index;

use super::eight_point::hartley;
use super::{required_iterations, PixelMatch, DEFAULT_CONFIDENCE};
use crate::error::invalid;
use crate::{rng, Error, Pixel, Result};

const SAMPLE: usize = 4;

/// Maps `p` through `h`; `None` when it lands on the line at infinity.
pub fn apply_homography(h: &Matrix3<f64>, p: &Pixel) -> Option<Pixel> {
    let v = h * Vector3::new(p.x, p.y, 1.0);
    if v.z.abs() < 1e-12 * v.x.abs().max(v.y.abs()).max(1.0) {
        return None;
    }
    let q = Pixel::new(v.x / v.z, v.y / v.z);
    (q.x.is_finite() && q.y.is_finite()).then_some(q)
}

fn collinear(a: &Pixel, b: &Pixel, c: &Pixel) -> bool {
    let (u, v) = (b - a, c - a);
    let area = (u.x * v.y - u.y * v.x).abs();
    area <= 1e-9 * (u.norm_squared().max(v.norm_squared())).max(1e-300)
}

fn sample_degenerate(pts: &[Pixel]) -> bool {
    (0..pts.len()).any(|i| {
        (i + 1..pts.len()).any(|j| (j + 1..pts.len()).any(|k| collinear(&pts[i], &pts[j], &pts[k])))
    })
}

fn all_collinear(pts: &[Pixel]) -> bool {
    let n = pts.len() as f64;
    let mean = pts.iter().fold(Pixel::zeros(), |a, p| a + p) / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in pts {
        let d = p - mean;
        sxx += d.x * d.x;
        sxy += d.x * d.y;
        syy += d.y * d.y;
    }
    let tr = sxx + syy;
    let det = sxx * syy - sxy * sxy;
    // Smaller eigenvalue of the scatter matrix relative to the larger.
    let disc = ((tr * tr / 4.0) - det).max(0.0).sqrt();
    let (hi, lo) = (tr / 2.0 + disc, tr / 2.0 - disc);
    !(lo > 1e-12 * hi)
}

/// Normalised DLT over all given matches (`>= 4`), scaled so `H[2][2] = 1`
/// when possible.
pub fn homography_dlt(matches: &[PixelMatch]) -> Option<Matrix3<f64>> {
    let n = matches.len();
    if n < SAMPLE {
        return None;
    }
    let src: Vec<Vector3<f64>> = matches
        .iter()
        .map(|(p, _)| Vector3::new(p.x, p.y, 1.0))
        .collect();
    let dst: Vec<Vector3<f64>> = matches
        .iter()
        .map(|(_, q)| Vector3::new(q.x, q.y, 1.0))
        .collect();
    let t1 = hartley(&src)?;
    let t2 = hartley(&dst)?;
    let mut a = DMatrix::<f64>::zeros((2 * n).max(9), 9);
    for k in 0..n {
        let p = t1 * src[k];
        let q = t2 * dst[k];
        let row = [
            [-p.x, -p.y, -1.0, 0.0, 0.0, 0.0, q.x * p.x, q.x * p.y, q.x],
            [0.0, 0.0, 0.0, -p.x, -p.y, -1.0, q.y * p.x, q.y * p.y, q.y],
        ];
        for (r, coeffs) in row.iter().enumerate() {
            for (c, v) in coeffs.iter().enumerate() {
                a[(2 * k + r, c)] = *v;
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
    let h_hat = Matrix3::from_fn(|r, c| v_t[(last, r * 3 + c)]);
    let h = t2.try_inverse()? * h_hat * t1;
    let scale = if h[(2, 2)].abs() > 1e-12 * h.norm() {
        h[(2, 2)]
    } else {
        h.norm()
    };
    let h = h / scale;
    h.iter().all(|v| v.is_finite()).then_some(h)
}

fn transfer_sq(h: &Matrix3<f64>, m: &PixelMatch) -> f64 {
    apply_homography(h, &m.0).map_or(f64::INFINITY, |q| (q - m.1).norm_squared())
}

fn score(h: &Matrix3<f64>, matches: &[PixelMatch], thr_sq: f64) -> (usize, f64) {
    matches
        .iter()
        .map(|m| transfer_sq(h, m))
        .filter(|e| *e <= thr_sq)
        .fold((0, 0.0), |(c, s), e| (c + 1, s + e))
}

fn better(a: (usize, f64), b: (usize, f64)) -> bool {
    a.0 > b.0 || (a.0 == b.0 && a.1 < b.1)
}

/// Four-point RANSAC with normalised DLT and refit on inliers. Iteration `i`
/// draws from substream `i` of `seed`.
pub fn estimate_homography_ransac(
    matches: &[PixelMatch],
    inlier_px: f64,
    max_iters: usize,
    seed: u64,
) -> Result<Matrix3<f64>> {
    let n = matches.len();
    if n < SAMPLE {
        return Err(invalid(format!(
            "homography needs at least 4 matches, got {n}"
        )));
    }
    if !(inlier_px.is_finite() && inlier_px > 0.0) || max_iters == 0 {
        return Err(invalid(
            "inlier threshold must be positive and max_iters nonzero",
        ));
    }
    if matches
        .iter()
        .any(|(p, q)| !(p.x.is_finite() && p.y.is_finite() && q.x.is_finite() && q.y.is_finite()))
    {
        return Err(invalid("matches must be finite"));
    }
    let src: Vec<Pixel> = matches.iter().map(|m| m.0).collect();
    let dst: Vec<Pixel> = matches.iter().map(|m| m.1).collect();
    if all_collinear(&src) || all_collinear(&dst) {
        return Err(Error::Degenerate("all matches are collinear".into()));
    }
    let thr_sq = inlier_px * inlier_px;
    let mut best: Option<(Matrix3<f64>, (usize, f64))> = None;
    let mut budget = max_iters;
    let mut it = 0;
    while it < budget {
        let mut r = rng::substream(seed, it as u64);
        it += 1;
        let idx = index::sample(&mut r, n, SAMPLE).into_vec();
        let s: Vec<PixelMatch> = idx.iter().map(|&i| matches[i]).collect();
        let (ps, qs): (Vec<Pixel>, Vec<Pixel>) = s.iter().copied().unzip();
        if sample_degenerate(&ps) || sample_degenerate(&qs) {
            continue;
        }
        let Some(h) = homography_dlt(&s) else {
            continue;
        };
        let sc = score(&h, matches, thr_sq);
        if best.as_ref().is_none_or(|(_, b)| better(sc, *b)) {
            budget = budget.min(required_iterations(
                sc.0 as f64 / n as f64,
                SAMPLE,
                DEFAULT_CONFIDENCE,
            ));
            best = Some((h, sc));
        }
    }
    let (mut h, mut sc) =
        best.ok_or_else(|| Error::Degenerate("no non-degenerate 4-point sample".into()))?;
    for _ in 0..3 {
        let inl: Vec<PixelMatch> = matches
            .iter()
            .copied()
            .filter(|m| transfer_sq(&h, m) <= thr_sq)
            .collect();
        let Some(refit) = homography_dlt(&inl) else {
            break;
        };
        let rs = score(&refit, matches, thr_sq);
        if rs.0 < sc.0 {
            break;
        }
        let done = rs.0 == sc.0 && (h - refit).norm() < 1e-15 * h.norm();
        h = refit;
        sc = rs;
        if done {
            break;
        }
    }
    Ok(h)
}

/// Mean distance between the four image corners mapped by `h_est` and by
/// `h_gt`. Corners are `(0,0)`, `(w-1,0)`, `(w-1,h-1)`, `(0,h-1)`.
pub fn homography_corner_error(
    h_est: &Matrix3<f64>,
    h_gt: &Matrix3<f64>,
    image_h: usize,
    image_w: usize,
) -> Result<f64> {
    if image_h == 0 || image_w == 0 {
        return Err(invalid("image size must be positive"));
    }
    for h in [h_est, h_gt] {
        let det = h.determinant();
        if !det.is_finite() || det.abs() <= 1e-12 * h.norm().powi(3) {
            return Err(Error::Degenerate("homography is not invertible".into()));
        }
    }
    let (w, hh) = ((image_w - 1) as f64, (image_h - 1) as f64);
    let corners = [
        Pixel::new(0.0, 0.0),
        Pixel::new(w, 0.0),
        Pixel::new(w, hh),
        Pixel::new(0.0, hh),
    ];
    let mut total = 0.0;
    for c in &corners {
        let a = apply_homography(h_est, c);
        let b = apply_homography(h_gt, c);
        match (a, b) {
            (Some(a), Some(b)) => total += (a - b).norm(),
            _ => return Err(Error::Degenerate("corner maps to infinity".into())),
        }
    }
    Ok(total / 4.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    fn random_h(r: &mut rng::Rng) -> Matrix3<f64> {
        Matrix3::new(
            1.0 + r.random_range(-0.2..0.2),
            r.random_range(-0.2..0.2),
            r.random_range(-20.0..20.0),
            r.random_range(-0.2..0.2),
            1.0 + r.random_range(-0.2..0.2),
            r.random_range(-20.0..20.0),
            r.random_range(-3e-4..3e-4),
            r.random_range(-3e-4..3e-4),
            1.0,
        )
    }

    fn exact_matches(h: &Matrix3<f64>, n: usize, r: &mut rng::Rng) -> Vec<PixelMatch> {
        (0..n)
            .map(|_| {
                let p = Pixel::new(r.random_range(0.0..320.0), r.random_range(0.0..240.0));
                (p, apply_homography(h, &p).unwrap())
            })
            .collect()
    }

    #[test]
    fn corner_error_examples() {
        let mut r = rng::seeded(1);
        let h = random_h(&mut r);
        assert_eq!(homography_corner_error(&h, &h, 240, 320).unwrap(), 0.0);
        let shift = Matrix3::new(1.0, 0.0, 2.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        let e = homography_corner_error(&(shift * h), &h, 240, 320).unwrap();
        assert!((e - 2.0).abs() < 1e-10);
        let singular = Matrix3::new(1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 0.0, 0.0, 1.0);
        assert!(homography_corner_error(&singular, &h, 240, 320).is_err());
    }

    #[test]
    fn corner_error_matches_per_corner_oracle() {
        let mut r = rng::seeded(2);
        for _ in 0..50 {
            let gt = random_h(&mut r);
            let est = gt + Matrix3::from_fn(|_, _| r.random_range(-1e-3..1e-3));
            let (h, w) = (r.random_range(2..500), r.random_range(2..500));
            let mut oracle = 0.0;
            for (x, y) in [
                (0.0, 0.0),
                ((w - 1) as f64, 0.0),
                ((w - 1) as f64, (h - 1) as f64),
                (0.0, (h - 1) as f64),
            ] {
                let a = est * Vector3::new(x, y, 1.0);
                let b = gt * Vector3::new(x, y, 1.0);
                oracle +=
                    ((a.x / a.z - b.x / b.z).powi(2) + (a.y / a.z - b.y / b.z).powi(2)).sqrt();
            }
            assert_eq!(
                homography_corner_error(&est, &gt, h, w).unwrap(),
                oracle / 4.0
            );
        }
    }

    #[test]
    fn exact_matches_recover_h() {
        let mut r = rng::seeded(3);
        for _ in 0..10 {
            let gt = random_h(&mut r);
            let m = exact_matches(&gt, 60, &mut r);
            let est = estimate_homography_ransac(&m, 1.0, 2000, 9).unwrap();
            assert!(homography_corner_error(&est, &gt, 240, 320).unwrap() < 1e-6);
        }
    }

    #[test]
    fn planted_outliers_are_rejected() {
        let mut r = rng::seeded(4);
        for _ in 0..10 {
            let gt = random_h(&mut r);
            let mut m = exact_matches(&gt, 70, &mut r);
            for _ in 0..30 {
                let p = Pixel::new(r.random_range(0.0..320.0), r.random_range(0.0..240.0));
                let q = Pixel::new(r.random_range(0.0..320.0), r.random_range(0.0..240.0));
                m.push((p, q));
            }
            let est = estimate_homography_ransac(&m, 1.0, 2000, 11).unwrap();
            assert!(homography_corner_error(&est, &gt, 240, 320).unwrap() < 0.1);
        }
    }

    #[test]
    fn degenerate_inputs_fail() {
        let line: Vec<PixelMatch> = (0..20)
            .map(|k| {
                (
                    Pixel::new(k as f64, 2.0 * k as f64),
                    Pixel::new(3.0 * k as f64, 1.0),
                )
            })
            .collect();
        assert!(matches!(
            estimate_homography_ransac(&line, 1.0, 2000, 0),
            Err(Error::Degenerate(_))
        ));
        assert!(estimate_homography_ransac(&line[..3], 1.0, 2000, 0).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let mut r = rng::seeded(5);
        let gt = random_h(&mut r);
        let mut m = exact_matches(&gt, 30, &mut r);
        for k in 0..10 {
            m.push((
                Pixel::new(k as f64 * 7.0, 3.0),
                Pixel::new(100.0, k as f64 * 9.0),
            ));
        }
        let a = estimate_homography_ransac(&m, 1.0, 500, 42).unwrap();
        let b = estimate_homography_ransac(&m, 1.0, 500, 42).unwrap();
        assert_eq!(a, b);
    }
}
