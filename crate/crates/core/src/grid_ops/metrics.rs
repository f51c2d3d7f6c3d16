use super::{BoolMask, DenseMap};
use crate::error::{shape, Error, Result};

/// Side length of the SSIM window.
pub const SSIM_WINDOW: usize = 11;
/// Standard deviation of the Gaussian SSIM window.
pub const SSIM_SIGMA: f64 = 1.5;
/// SSIM stabiliser `(0.01 * 255)^2`.
pub const SSIM_C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
/// SSIM stabiliser `(0.03 * 255)^2`.
pub const SSIM_C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ReconMetrics {
    pub l1: f64,
    pub one_minus_ssim: f64,
}

fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as isize;
    let mut taps = [0.0; SSIM_WINDOW];
    for (k, t) in taps.iter_mut().enumerate() {
        let d = k as isize - r;
        *t = (-((d * d) as f64) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    taps
}

// Gaussian-weighted local mean over a single-channel plane. Windows are
// truncated at the border and renormalised over the taps that remain.
fn blur(plane: &[f64], h: usize, w: usize, taps: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as isize;
    let pass = |src: &[f64], along_rows: bool| -> Vec<f64> {
        let mut dst = vec![0.0; h * w];
        for i in 0..h {
            for j in 0..w {
                let (mut acc, mut norm) = (0.0, 0.0);
                for (k, t) in taps.iter().enumerate() {
                    let d = k as isize - r;
                    let (ii, jj) = if along_rows {
                        (i as isize, j as isize + d)
                    } else {
                        (i as isize + d, j as isize)
                    };
                    if ii < 0 || jj < 0 || ii >= h as isize || jj >= w as isize {
                        continue;
                    }
                    acc += t * src[ii as usize * w + jj as usize];
                    norm += t;
                }
                dst[i * w + j] = acc / norm;
            }
        }
        dst
    };
    pass(&pass(plane, true), false)
}

/// Per-pixel SSIM averaged over channels.
pub fn ssim_map(a: &DenseMap, b: &DenseMap) -> Result<Vec<f64>> {
    if !a.same_shape(b) {
        return Err(shape("SSIM inputs differ in shape"));
    }
    let (h, w, ch) = (a.height(), a.width(), a.channels());
    let taps = gaussian_taps();
    let mut out = vec![0.0; h * w];
    let plane = |m: &DenseMap, c: usize, f: &dyn Fn(f64) -> f64| -> Vec<f64> {
        m.values()
            .iter()
            .skip(c)
            .step_by(ch)
            .map(|v| f(*v))
            .collect()
    };
    for c in 0..ch {
        let pa = plane(a, c, &|v| v);
        let pb = plane(b, c, &|v| v);
        let mu_a = blur(&pa, h, w, &taps);
        let mu_b = blur(&pb, h, w, &taps);
        let aa = blur(&plane(a, c, &|v| v * v), h, w, &taps);
        let bb = blur(&plane(b, c, &|v| v * v), h, w, &taps);
        let ab: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x * y).collect();
        let ab = blur(&ab, h, w, &taps);
        for k in 0..h * w {
            let var_a = aa[k] - mu_a[k] * mu_a[k];
            let var_b = bb[k] - mu_b[k] * mu_b[k];
            let cov = ab[k] - mu_a[k] * mu_b[k];
            let num = (2.0 * mu_a[k] * mu_b[k] + SSIM_C1) * (2.0 * cov + SSIM_C2);
            let den = (mu_a[k] * mu_a[k] + mu_b[k] * mu_b[k] + SSIM_C1) * (var_a + var_b + SSIM_C2);
            out[k] += num / den;
        }
    }
    for v in &mut out {
        *v /= ch as f64;
    }
    Ok(out)
}

/// Mean absolute difference and `1 - SSIM` over the pixels selected by `mask`.
pub fn recon_metrics(a: &DenseMap, b: &DenseMap, mask: &BoolMask) -> Result<ReconMetrics> {
    if !a.same_shape(b) {
        return Err(shape("reconstruction metric inputs differ in shape"));
    }
    if mask.height() != a.height() || mask.width() != a.width() {
        return Err(shape("mask does not match image size"));
    }
    let n = mask.count();
    if n == 0 {
        return Err(Error::EmptySet("reconstruction mask"));
    }
    let ch = a.channels();
    let ssim = ssim_map(a, b)?;
    let (mut l1, mut s) = (0.0, 0.0);
    for (i, j) in mask.positions() {
        let d: f64 = a
            .pixel(i, j)
            .iter()
            .zip(b.pixel(i, j))
            .map(|(x, y)| (x - y).abs())
            .sum();
        l1 += d / ch as f64;
        s += ssim[i * a.width() + j];
    }
    Ok(ReconMetrics {
        l1: l1 / n as f64,
        one_minus_ssim: 1.0 - s / n as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn textured(seed: usize) -> DenseMap {
        DenseMap::from_fn(16, 20, 3, |i, j, c| {
            ((i * 37 + j * 91 + c * 13 + seed) % 256) as f64
        })
        .unwrap()
    }

    #[test]
    fn identical_images_are_exact() {
        let a = textured(5);
        let m = recon_metrics(&a, &a, &BoolMask::filled(16, 20, true)).unwrap();
        assert_eq!(m.l1, 0.0);
        assert_eq!(m.one_minus_ssim, 0.0);
    }

    #[test]
    fn extreme_contrast_l1() {
        let a = DenseMap::filled(8, 8, 3, 0.0);
        let b = DenseMap::filled(8, 8, 3, 255.0);
        let m = recon_metrics(&a, &b, &BoolMask::filled(8, 8, true)).unwrap();
        assert_eq!(m.l1, 255.0);
    }

    #[test]
    fn constant_images_closed_form() {
        let a = DenseMap::filled(12, 12, 1, 100.0);
        let b = DenseMap::filled(12, 12, 1, 110.0);
        let m = recon_metrics(&a, &b, &BoolMask::filled(12, 12, true)).unwrap();
        assert!((m.l1 - 10.0).abs() < 1e-12);
        let expected =
            1.0 - (2.0 * 100.0 * 110.0 + SSIM_C1) / (100.0f64.powi(2) + 110.0f64.powi(2) + SSIM_C1);
        assert!(
            (m.one_minus_ssim - expected).abs() < 1e-12,
            "{} vs {expected}",
            m.one_minus_ssim
        );
    }

    #[test]
    fn empty_mask_errors() {
        let a = textured(0);
        assert!(matches!(
            recon_metrics(&a, &a, &BoolMask::filled(16, 20, false)),
            Err(Error::EmptySet(_))
        ));
    }

    #[test]
    fn l1_metric_axioms_on_constant_maps() {
        let full = BoolMask::filled(4, 4, true);
        let vals = [3.0, 77.5, 200.0, 12.25, 140.0];
        for &x in &vals {
            for &y in &vals {
                let (a, b) = (DenseMap::filled(4, 4, 1, x), DenseMap::filled(4, 4, 1, y));
                let ab = recon_metrics(&a, &b, &full).unwrap().l1;
                assert_eq!(ab, recon_metrics(&b, &a, &full).unwrap().l1);
                for &z in &vals {
                    let c = DenseMap::filled(4, 4, 1, z);
                    let ac = recon_metrics(&a, &c, &full).unwrap().l1;
                    let cb = recon_metrics(&c, &b, &full).unwrap().l1;
                    assert!(ab <= ac + cb + 1e-12);
                }
            }
            let a = DenseMap::filled(4, 4, 1, x);
            assert_eq!(recon_metrics(&a, &a, &full).unwrap().l1, 0.0);
        }
    }

    #[test]
    fn ssim_drops_with_noise() {
        let a = textured(1);
        let b = textured(2);
        let m = recon_metrics(&a, &b, &BoolMask::filled(16, 20, true)).unwrap();
        assert!(m.one_minus_ssim > 0.0);
    }
}
