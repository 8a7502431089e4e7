//! Sampled isotropic Gaussian kernels and multi-scale filtering.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::pixelgrid::GrayImage;

/// Default standard deviations of the scale bank.
pub const DEFAULT_SIGMAS: [f64; 3] = [0.5, 0.8, 1.0];

/// A normalized `(2r+1) x (2r+1)` Gaussian, `r = ceil(3 sigma)`.
///
/// `weights` is the full 2D kernel (row-major, offset `-r..=r` on both axes).
/// `taps` is the normalized 1D factor used by [`filter`].
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKernel {
    sigma: f64,
    radius: usize,
    weights: Vec<f64>,
    taps: Vec<f64>,
}

impl GaussianKernel {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::NonPositiveSigma(sigma));
        }
        let radius = (3.0 * sigma).ceil() as usize;
        let r = radius as i64;
        let two_var = 2.0 * sigma * sigma;

        let mut weights: Vec<f64> = (-r..=r)
            .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
            .map(|(dx, dy)| (-((dx * dx + dy * dy) as f64) / two_var).exp())
            .collect();
        let sum: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= sum);

        let mut taps: Vec<f64> = (-r..=r).map(|d| (-((d * d) as f64) / two_var).exp()).collect();
        let sum: f64 = taps.iter().sum();
        taps.iter_mut().for_each(|w| *w /= sum);

        Ok(GaussianKernel {
            sigma,
            radius,
            weights,
            taps,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    /// Side length `2r + 1`.
    pub fn size(&self) -> usize {
        2 * self.radius + 1
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weight at offset `(dx, dy)` from the center.
    pub fn weight(&self, dx: i64, dy: i64) -> f64 {
        let r = self.radius as i64;
        assert!(dx.abs() <= r && dy.abs() <= r, "offset outside kernel support");
        self.weights[((dy + r) as usize) * self.size() + (dx + r) as usize]
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }
}

/// Convenience wrapper for [`GaussianKernel::new`].
pub fn build_kernel(sigma: f64) -> Result<GaussianKernel> {
    GaussianKernel::new(sigma)
}

/// Ordered, strictly increasing list of positive standard deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleBank {
    sigmas: Vec<f64>,
}

impl ScaleBank {
    pub fn new(sigmas: Vec<f64>) -> Result<Self> {
        if sigmas.is_empty() {
            return Err(Error::InvalidScaleBank("no sigmas".into()));
        }
        if let Some(&s) = sigmas.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::NonPositiveSigma(s));
        }
        if sigmas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidScaleBank(format!(
                "sigmas must be strictly increasing: {sigmas:?}"
            )));
        }
        Ok(ScaleBank { sigmas })
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn len(&self) -> usize {
        self.sigmas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigmas.is_empty()
    }

    pub fn kernels(&self) -> Vec<GaussianKernel> {
        self.sigmas
            .iter()
            .map(|&s| GaussianKernel::new(s).expect("bank sigmas validated"))
            .collect()
    }
}

impl Default for ScaleBank {
    fn default() -> Self {
        ScaleBank {
            sigmas: DEFAULT_SIGMAS.to_vec(),
        }
    }
}

impl FromStr for ScaleBank {
    type Err = Error;

    /// Parses a comma-separated list such as `0.5,0.8,1`.
    fn from_str(s: &str) -> Result<Self> {
        let sigmas = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidScaleBank(format!("bad sigma {t:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        ScaleBank::new(sigmas)
    }
}

impl fmt::Display for ScaleBank {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.sigmas.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

/// Convolves with replicate (clamp-to-edge) borders and re-quantizes to
/// 8 bits, rounding half to even.
///
/// Runs as two 1D passes in `f64`; nothing is rounded between passes.
pub fn filter(image: &GrayImage, kernel: &GaussianKernel) -> GrayImage {
    let (w, h) = (image.width(), image.height());
    let r = kernel.radius as isize;
    let taps = &kernel.taps;
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;

    // horizontal pass
    let mut horiz = vec![0.0f64; w * h];
    let mut padded = vec![0.0f64; w + 2 * r as usize];
    for y in 0..h {
        let row = image.row(y);
        for (i, p) in padded.iter_mut().enumerate() {
            *p = f64::from(row[clamp(i as isize - r, w)]);
        }
        let out = &mut horiz[y * w..(y + 1) * w];
        for (x, o) in out.iter_mut().enumerate() {
            *o = padded[x..x + taps.len()]
                .iter()
                .zip(taps)
                .map(|(p, t)| p * t)
                .sum();
        }
    }

    // vertical pass
    let mut pixels = vec![0u8; w * h];
    let mut acc = vec![0.0f64; w];
    for y in 0..h {
        acc.iter_mut().for_each(|a| *a = 0.0);
        for (i, t) in taps.iter().enumerate() {
            let sy = clamp(y as isize + i as isize - r, h);
            let src = &horiz[sy * w..(sy + 1) * w];
            for (a, s) in acc.iter_mut().zip(src) {
                *a += t * s;
            }
        }
        for (p, a) in pixels[y * w..(y + 1) * w].iter_mut().zip(&acc) {
            *p = quantize(*a);
        }
    }
    GrayImage::new(w, h, pixels).expect("dimensions preserved")
}

#[inline]
pub(crate) fn quantize(v: f64) -> u8 {
    v.round_ties_even().clamp(0.0, 255.0) as u8
}

/// One filtered image per sigma, in bank order.
pub fn scale_stack(image: &GrayImage, bank: &ScaleBank) -> Vec<GrayImage> {
    bank.kernels().iter().map(|k| filter(image, k)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(w: usize, h: usize, seed: u64) -> GrayImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GrayImage::from_fn(w, h, |_, _| rng.random()).unwrap()
    }

    /// Direct 2D convolution straight from the full kernel.
    fn direct_filter(image: &GrayImage, k: &GaussianKernel) -> GrayImage {
        let r = k.radius() as i64;
        let (w, h) = (image.width() as i64, image.height() as i64);
        GrayImage::from_fn(image.width(), image.height(), |x, y| {
            let mut acc = 0.0;
            for dy in -r..=r {
                for dx in -r..=r {
                    let sx = (x as i64 + dx).clamp(0, w - 1) as usize;
                    let sy = (y as i64 + dy).clamp(0, h - 1) as usize;
                    acc += k.weight(dx, dy) * f64::from(image.get(sx, sy));
                }
            }
            quantize(acc)
        })
        .unwrap()
    }

    #[test]
    fn kernel_radius_rule() {
        assert_eq!(build_kernel(0.5).unwrap().radius(), 2);
        assert_eq!(build_kernel(0.8).unwrap().radius(), 3);
        assert_eq!(build_kernel(1.0).unwrap().radius(), 3);
        assert_eq!(build_kernel(0.5).unwrap().weights().len(), 25);
    }

    #[test]
    fn kernel_shape() {
        for sigma in [0.3, 0.5, 0.8, 1.0, 1.7] {
            let k = build_kernel(sigma).unwrap();
            let r = k.radius() as i64;
            let sum: f64 = k.weights().iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            let center = k.weight(0, 0);
            for dy in -r..=r {
                for dx in -r..=r {
                    let v = k.weight(dx, dy);
                    assert!(v > 0.0);
                    assert_eq!(v, k.weight(-dx, dy));
                    assert_eq!(v, k.weight(dx, -dy));
                    assert_eq!(v, k.weight(dy, dx));
                    if (dx, dy) != (0, 0) {
                        assert!(center > v);
                    }
                }
            }
            let ratio = k.weight(0, 0) / k.weight(1, 0);
            let analytic = (1.0 / (2.0 * sigma * sigma)).exp();
            assert!((ratio - analytic).abs() / analytic < 1e-12);
        }
    }

    #[test]
    fn sigma_must_be_positive() {
        assert_eq!(build_kernel(0.0), Err(Error::NonPositiveSigma(0.0)));
        assert!(build_kernel(-1.0).is_err());
        assert!(build_kernel(f64::NAN).is_err());
    }

    #[test]
    fn constant_image_is_fixed() {
        let img = GrayImage::filled(9, 7, 100).unwrap();
        for s in [0.5, 0.8, 1.0, 2.0] {
            assert_eq!(filter(&img, &build_kernel(s).unwrap()), img);
        }
    }

    #[test]
    fn impulse_response() {
        let mut px = vec![0u8; 15 * 15];
        px[7 * 15 + 7] = 255;
        let img = GrayImage::new(15, 15, px).unwrap();
        let k = build_kernel(0.5).unwrap();
        let out = filter(&img, &k);
        for dy in -2i64..=2 {
            for dx in -2i64..=2 {
                let expected = (255.0 * k.weight(dx, dy)).round_ties_even();
                let got = out.get((7 + dx) as usize, (7 + dy) as usize);
                assert_eq!(f64::from(got), expected, "offset ({dx},{dy})");
            }
        }
        assert_eq!(out.get(0, 0), 0);
    }

    #[test]
    fn separable_matches_direct() {
        for seed in 0..8 {
            let img = random_image(23, 17, seed);
            for s in [0.5, 0.8, 1.0] {
                let k = build_kernel(s).unwrap();
                let fast = filter(&img, &k);
                let slow = direct_filter(&img, &k);
                for (a, b) in fast.pixels().iter().zip(slow.pixels()) {
                    assert!((i16::from(*a) - i16::from(*b)).abs() <= 1);
                }
            }
        }
    }

    #[test]
    fn stack_shape() {
        let img = random_image(12, 10, 3);
        let stack = scale_stack(&img, &ScaleBank::default());
        assert_eq!(stack.len(), 3);
        assert!(stack.iter().all(|s| s.width() == 12 && s.height() == 10));
        let one = ScaleBank::new(vec![0.8]).unwrap();
        assert_eq!(scale_stack(&img, &one).len(), 1);
        let flat = GrayImage::filled(8, 8, 77).unwrap();
        assert!(scale_stack(&flat, &ScaleBank::default()).iter().all(|s| *s == flat));
    }

    #[test]
    fn bank_parsing() {
        let b: ScaleBank = "0.5,0.8,1".parse().unwrap();
        assert_eq!(b, ScaleBank::default());
        assert_eq!(b.to_string(), "0.5,0.8,1");
        assert!("0.8,0.5".parse::<ScaleBank>().is_err());
        assert!("0.5,0".parse::<ScaleBank>().is_err());
        assert!("".parse::<ScaleBank>().is_err());
        assert!("a,b".parse::<ScaleBank>().is_err());
    }

    proptest! {
        #[test]
        fn mean_is_preserved(seed in any::<u64>(), s in 0.3f64..=1.0) {
            let img = random_image(64, 64, seed);
            let out = filter(&img, &build_kernel(s).unwrap());
            let mean = |i: &GrayImage| i.pixels().iter().map(|&p| f64::from(p)).sum::<f64>() / 4096.0;
            prop_assert!((mean(&img) - mean(&out)).abs() <= 0.5);
        }

        #[test]
        fn translation_equivariant_on_interior(seed in any::<u64>(), sx in 0usize..4, sy in 0usize..4) {
            let big = random_image(30, 30, seed);
            let k = build_kernel(0.8).unwrap();
            let a = big.crop(0, 0, 24, 24).unwrap();
            let b = big.crop(sx, sy, 24, 24).unwrap();
            let fa = filter(&a, &k);
            let fb = filter(&b, &k);
            let r = k.radius();
            for y in r..24 - r - sy {
                for x in r..24 - r - sx {
                    if x >= r + sx && y >= r + sy {
                        prop_assert_eq!(fb.get(x - sx, y - sy), fa.get(x, y));
                    }
                }
            }
        }
    }
}
