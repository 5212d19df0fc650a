//! Image fidelity metrics on single-channel images with values in `[0, 1]`.

use crate::error::{Error, Result};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn check_pair(op: &'static str, a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Usage(format!(
            "{op}: images differ in size ({} vs {} pixels)",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::Usage(format!("{op}: empty image")));
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB. Identical images give `f64::INFINITY`.
pub fn psnr(a: &[f64], b: &[f64], peak: f64) -> Result<f64> {
    check_pair("psnr", a, b)?;
    if !(peak > 0.0) {
        return Err(Error::Domain(format!("psnr peak must be positive, got {peak}")));
    }
    let mse = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - c;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Valid-mode separable filtering: output is `(h−k+1) × (w−k+1)`.
fn filter_valid(x: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for r in 0..h {
        for c in 0..ow {
            let mut s = 0.0;
            for (t, &g) in taps.iter().enumerate() {
                s += g * x[r * w + c + t];
            }
            rows[r * ow + c] = s;
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            let mut s = 0.0;
            for (t, &g) in taps.iter().enumerate() {
                s += g * rows[(r + t) * ow + c];
            }
            out[r * ow + c] = s;
        }
    }
    out
}

/// Mean structural similarity over all fully contained 11×11 Gaussian
/// windows (σ = 1.5, dynamic range 1).
pub fn ssim(a: &[f64], b: &[f64], height: usize, width: usize) -> Result<f64> {
    check_pair("ssim", a, b)?;
    if a.len() != height * width {
        return Err(Error::Usage(format!(
            "ssim: {} pixels do not form a {height}×{width} image",
            a.len()
        )));
    }
    if height < SSIM_WINDOW || width < SSIM_WINDOW {
        return Err(Error::Domain(format!(
            "ssim needs at least {SSIM_WINDOW}×{SSIM_WINDOW} pixels, got {height}×{width}"
        )));
    }
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| x * y).collect::<Vec<_>>();
    let mu_a = filter_valid(a, height, width, &taps);
    let mu_b = filter_valid(b, height, width, &taps);
    let e_aa = filter_valid(&prod(a, a), height, width, &taps);
    let e_bb = filter_valid(&prod(b, b), height, width, &taps);
    let e_ab = filter_valid(&prod(a, b), height, width, &taps);
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / mu_a.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_identical_is_infinite() {
        let a = vec![0.3; 16];
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn psnr_zeros_vs_ones_is_zero_db() {
        assert_eq!(psnr(&[0.0; 9], &[1.0; 9], 1.0).unwrap(), 0.0);
    }

    #[test]
    fn psnr_rejects_mismatched_sizes() {
        assert!(matches!(psnr(&[0.0; 4], &[0.0; 5], 1.0), Err(Error::Usage(_))));
    }

    #[test]
    fn ssim_identical_is_exactly_one() {
        let a: Vec<f64> = (0..256).map(|i| ((i * 37) % 101) as f64 / 100.0).collect();
        assert_eq!(ssim(&a, &a, 16, 16).unwrap(), 1.0);
    }

    #[test]
    fn ssim_constant_patches() {
        let (c1, c2) = (1e-4, 9e-4);
        let want = (2.0 * 0.2 * 0.8 + c1) * c2 / ((0.04 + 0.64 + c1) * c2);
        let got = ssim(&[0.2; 144], &[0.8; 144], 12, 12).unwrap();
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }

    #[test]
    fn ssim_small_image_is_domain_error() {
        assert!(matches!(ssim(&[0.0; 100], &[0.0; 100], 10, 10), Err(Error::Domain(_))));
    }

    #[test]
    fn taps_sum_to_one() {
        let t = gaussian_taps(11, 1.5);
        assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(t[0], t[10]);
    }
}
