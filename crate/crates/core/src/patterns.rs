//! LBP and FLNIP pixel coders, pattern maps and their histograms.
//!
//! A 3x3 window is stored row-major as `[u8; 9]`. Neighbors are numbered
//! `1..=8` counter-clockwise in image coordinates starting from east:
//!
//! ```text
//! I6 I7 I8
//! I5 Ic I1
//! I4 I3 I2
//! ```
//!
//! so `k` and `k +/- 1 (mod 8)` are always spatially adjacent on the ring.

use rayon::prelude::*;

use crate::decimal::quantize9;
use crate::error::{Error, Result};
use crate::gaussian::{scale_stack, ScaleBank};
use crate::pixelgrid::GrayImage;
use crate::{BINS, FEATURE_LEN};

/// A 3x3 neighborhood, row-major.
pub type Window = [u8; 9];

/// Index of the center in a [`Window`].
pub const CENTER: usize = 4;

/// Window index of neighbor `I_k`, for `k = 1..=8` (slot 0 unused).
pub const NEIGHBOR: [usize; 9] = [usize::MAX, 5, 8, 7, 6, 3, 0, 1, 2];

/// `(dx, dy)` offset of neighbor `I_k` from the center, image rows growing downwards.
pub const NEIGHBOR_OFFSET: [(i8, i8); 9] = [
    (0, 0),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];

#[inline]
const fn ring(k: usize, step: isize) -> usize {
    ((k as isize - 1 + step).rem_euclid(8) + 1) as usize
}

const ADJACENT: [&[usize]; 9] = [
    &[],
    &[ring(1, -2), ring(1, -1), ring(1, 1), ring(1, 2)],
    &[ring(2, -1), ring(2, 1)],
    &[ring(3, -2), ring(3, -1), ring(3, 1), ring(3, 2)],
    &[ring(4, -1), ring(4, 1)],
    &[ring(5, -2), ring(5, -1), ring(5, 1), ring(5, 2)],
    &[ring(6, -1), ring(6, 1)],
    &[ring(7, -2), ring(7, -1), ring(7, 1), ring(7, 2)],
    &[ring(8, -1), ring(8, 1)],
];

/// Ring neighbors of `I_k` inside the window: four for edge midpoints (odd
/// `k`), two for corners (even `k`).
pub fn adjacent_set(k: usize) -> Result<&'static [usize]> {
    if !(1..=8).contains(&k) {
        return Err(Error::IndexOutOfRange(k));
    }
    Ok(ADJACENT[k])
}

/// Mean absolute difference of `adjacent` from `reference`, relative to
/// `reference`. Inputs are intensities already shifted into `[1, 256]`.
pub fn fractional_change(adjacent: &[u32], reference: u32) -> Result<f64> {
    if reference == 0 {
        return Err(Error::ZeroReference);
    }
    if adjacent.len() != 2 && adjacent.len() != 4 {
        return Err(Error::BadAdjacentCount(adjacent.len()));
    }
    let r = f64::from(reference);
    let sum: f64 = adjacent.iter().map(|&a| (f64::from(a) - r).abs() / r).sum();
    Ok(sum / adjacent.len() as f64)
}

/// Classic 8-neighbor LBP: bit `k-1` is set iff `I_k >= I_c`.
#[inline]
pub fn lbp_code(window: &Window) -> u8 {
    let c = window[CENTER];
    let mut code = 0u8;
    for k in 1..=8 {
        code |= u8::from(window[NEIGHBOR[k]] >= c) << (k - 1);
    }
    code
}

/// FLNIP code of a window.
///
/// Bit `k-1` is set iff the fractional change of `I_k`'s adjacent set
/// measured against `I_k` is at least the fractional change of the same set
/// measured against the center. Ties (including a flat window) set the bit.
///
/// Both sides share the factor `1/M`, so the comparison
/// `S_k / I_k >= S_c / I_c` is evaluated exactly as `S_k * I_c >= S_c * I_k`
/// on the shifted integers.
#[inline]
pub fn flnip_code(window: &Window) -> u8 {
    let mut v = [0u32; 9];
    for (d, s) in v.iter_mut().zip(window) {
        *d = u32::from(*s) + 1;
    }
    let c = v[CENTER];
    let mut code = 0u8;
    for k in 1..=8 {
        let ik = v[NEIGHBOR[k]];
        let (mut sk, mut sc) = (0u32, 0u32);
        for &m in ADJACENT[k] {
            let a = v[NEIGHBOR[m]];
            sk += a.abs_diff(ik);
            sc += a.abs_diff(c);
        }
        code |= u8::from(sk * c >= sc * ik) << (k - 1);
    }
    code
}

/// Selects the per-pixel coder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Coder {
    Lbp,
    Flnip,
}

impl Coder {
    #[inline]
    pub fn code(self, window: &Window) -> u8 {
        match self {
            Coder::Lbp => lbp_code(window),
            Coder::Flnip => flnip_code(window),
        }
    }
}

/// One code per interior pixel; border pixels have no full window and are
/// skipped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternMap {
    width: usize,
    height: usize,
    codes: Vec<u8>,
}

impl PatternMap {
    pub fn new(width: usize, height: usize, codes: Vec<u8>) -> Result<Self> {
        if codes.len() != width * height {
            return Err(Error::SizeMismatch {
                expected: width * height,
                actual: codes.len(),
            });
        }
        Ok(PatternMap {
            width,
            height,
            codes,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn codes(&self) -> &[u8] {
        &self.codes
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }
}

/// The 3x3 window centered on `(x, y)`; both coordinates must be interior.
#[inline]
pub fn window_at(image: &GrayImage, x: usize, y: usize) -> Window {
    let (a, b, c) = (image.row(y - 1), image.row(y), image.row(y + 1));
    [
        a[x - 1], a[x], a[x + 1],
        b[x - 1], b[x], b[x + 1],
        c[x - 1], c[x], c[x + 1],
    ]
}

/// Codes every interior pixel. Rows are processed in parallel.
pub fn pattern_map(image: &GrayImage, coder: Coder) -> PatternMap {
    let (iw, ih) = (image.width() - 2, image.height() - 2);
    let mut codes = vec![0u8; iw * ih];
    codes.par_chunks_mut(iw).enumerate().for_each(|(row, out)| {
        let y = row + 1;
        let (a, b, c) = (image.row(y - 1), image.row(y), image.row(y + 1));
        for (i, o) in out.iter_mut().enumerate() {
            let w: Window = [
                a[i], a[i + 1], a[i + 2],
                b[i], b[i + 1], b[i + 2],
                c[i], c[i + 1], c[i + 2],
            ];
            *o = coder.code(&w);
        }
    });
    PatternMap {
        width: iw,
        height: ih,
        codes,
    }
}

/// 256-bin histogram of pattern codes.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorHistogram {
    bins: Vec<f64>,
    normalized: bool,
}

impl DescriptorHistogram {
    pub fn bins(&self) -> &[f64] {
        &self.bins
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn into_bins(self) -> Vec<f64> {
        self.bins
    }
}

/// Code counts, optionally divided by the number of codes.
pub fn histogram(map: &PatternMap, normalize: bool) -> Result<DescriptorHistogram> {
    if map.is_empty() {
        return Err(Error::EmptyMap);
    }
    let mut counts = [0u64; BINS];
    for &c in &map.codes {
        counts[usize::from(c)] += 1;
    }
    let total = map.len() as f64;
    let bins = counts
        .iter()
        .map(|&n| if normalize { n as f64 / total } else { n as f64 })
        .collect();
    Ok(DescriptorHistogram {
        bins,
        normalized: normalize,
    })
}

/// A labeled 1024-long feature: normalized FLNIP histograms of the raw image
/// followed by the three filtered images, in bank order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub id: String,
    pub category: String,
    pub feature: Vec<f64>,
}

impl FeatureRecord {
    pub fn new(id: impl Into<String>, category: impl Into<String>, feature: Vec<f64>) -> Result<Self> {
        if feature.len() != FEATURE_LEN {
            return Err(Error::LengthMismatch(feature.len(), FEATURE_LEN));
        }
        Ok(FeatureRecord {
            id: id.into(),
            category: category.into(),
            feature,
        })
    }

    /// The `j`th 256-bin block (0 = raw image).
    pub fn block(&self, j: usize) -> &[f64] {
        &self.feature[j * BINS..(j + 1) * BINS]
    }
}

/// Builds the feature record of `image`. `bank` must hold exactly three sigmas.
///
/// Stored values are rounded to 9 significant digits so that the text
/// database format reproduces them exactly.
pub fn extract_feature(
    image: &GrayImage,
    bank: &ScaleBank,
    id: impl Into<String>,
    category: impl Into<String>,
) -> Result<FeatureRecord> {
    if bank.len() != 3 {
        return Err(Error::InvalidScaleBank(format!(
            "a 1024-long feature needs 3 sigmas, got {}",
            bank.len()
        )));
    }
    let mut feature = Vec::with_capacity(FEATURE_LEN);
    let stack = scale_stack(image, bank);
    for img in std::iter::once(image).chain(stack.iter()) {
        let h = histogram(&pattern_map(img, Coder::Flnip), true)?;
        feature.extend(h.bins.iter().map(|&v| quantize9(v)));
    }
    FeatureRecord::new(id, category, feature)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const FIG1: Window = [85, 30, 39, 10, 42, 55, 54, 27, 38];

    fn random_image(w: usize, h: usize, seed: u64) -> GrayImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GrayImage::from_fn(w, h, |_, _| rng.random()).unwrap()
    }

    #[test]
    fn layout_matches_offsets() {
        for k in 1..=8 {
            let (dx, dy) = NEIGHBOR_OFFSET[k];
            let idx = ((dy + 1) * 3 + dx + 1) as usize;
            assert_eq!(NEIGHBOR[k], idx);
            // consecutive indices are spatially adjacent
            let (nx, ny) = NEIGHBOR_OFFSET[ring(k, 1)];
            assert!((dx - nx).abs() <= 1 && (dy - ny).abs() <= 1);
        }
    }

    #[test]
    fn lbp_examples() {
        assert_eq!(lbp_code(&FIG1), 41);
        assert_eq!(lbp_code(&[7; 9]), 255);
        assert_eq!(lbp_code(&[0, 0, 0, 0, 255, 0, 0, 0, 0]), 0);
    }

    #[test]
    fn adjacent_sets() {
        assert_eq!(adjacent_set(1).unwrap(), &[7, 8, 2, 3]);
        assert_eq!(adjacent_set(8).unwrap(), &[7, 1]);
        assert_eq!(adjacent_set(3).unwrap(), &[1, 2, 4, 5]);
        assert_eq!(adjacent_set(2).unwrap(), &[1, 3]);
        assert_eq!(adjacent_set(0), Err(Error::IndexOutOfRange(0)));
        assert_eq!(adjacent_set(9), Err(Error::IndexOutOfRange(9)));
        for k in 1..=8 {
            let set = adjacent_set(k).unwrap();
            assert_eq!(set.len(), if k % 2 == 1 { 4 } else { 2 });
            for &m in set {
                let d = (m as isize - k as isize).rem_euclid(8);
                assert!(d.min(8 - d) <= 2 && m != k);
                // every member touches I_k in the window
                let (a, b) = (NEIGHBOR_OFFSET[k], NEIGHBOR_OFFSET[m]);
                assert!((a.0 - b.0).abs() <= 1 && (a.1 - b.1).abs() <= 1);
            }
        }
    }

    #[test]
    fn fractional_change_examples() {
        assert_eq!(fractional_change(&[9, 9, 9, 9], 9).unwrap(), 0.0);
        let mu_k = fractional_change(&[31, 40, 39, 28], 56).unwrap();
        assert!((mu_k - 86.0 / 224.0).abs() < 1e-15);
        let mu_c = fractional_change(&[31, 40, 39, 28], 43).unwrap();
        assert!((mu_c - 34.0 / 172.0).abs() < 1e-15);
        assert_eq!(fractional_change(&[1, 2], 0), Err(Error::ZeroReference));
        assert_eq!(fractional_change(&[1, 2, 3], 4), Err(Error::BadAdjacentCount(3)));
    }

    #[test]
    fn flnip_flat_window_is_all_ones() {
        for v in [0u8, 1, 128, 255] {
            assert_eq!(flnip_code(&[v; 9]), 255);
        }
    }

    #[test]
    fn flnip_fig1_first_bit() {
        // mu_1 = 86/224 >= mu_c = 34/172
        assert_eq!(flnip_code(&FIG1) & 1, 1);
    }

    #[test]
    fn pattern_map_shapes() {
        assert_eq!(pattern_map(&random_image(3, 3, 1), Coder::Flnip).len(), 1);
        let m = pattern_map(&random_image(5, 4, 1), Coder::Lbp);
        assert_eq!((m.width(), m.height(), m.len()), (3, 2, 6));
    }

    #[test]
    fn pattern_map_matches_per_pixel_coding() {
        let img = random_image(64, 64, 7);
        for coder in [Coder::Lbp, Coder::Flnip] {
            let m = pattern_map(&img, coder);
            for y in 1..63 {
                for x in 1..63 {
                    let w = window_at(&img, x, y);
                    assert_eq!(m.codes()[(y - 1) * 62 + x - 1], coder.code(&w));
                }
            }
        }
    }

    #[test]
    fn histogram_counts() {
        let m = PatternMap::new(3, 2, vec![41; 6]).unwrap();
        let h = histogram(&m, false).unwrap();
        assert_eq!(h.bins()[41], 6.0);
        assert_eq!(h.bins().iter().sum::<f64>(), 6.0);
        let n = histogram(&m, true).unwrap();
        assert_eq!(n.bins()[41], 1.0);
        assert!(n.is_normalized());
        let empty = PatternMap::new(0, 0, vec![]).unwrap();
        assert_eq!(histogram(&empty, true), Err(Error::EmptyMap));
    }

    #[test]
    fn feature_of_constant_image() {
        let img = GrayImage::filled(16, 16, 90).unwrap();
        let rec = extract_feature(&img, &ScaleBank::default(), "a", "c").unwrap();
        assert_eq!(rec.feature.len(), 1024);
        for j in 0..4 {
            let b = rec.block(j);
            assert_eq!(b[255], 1.0);
            assert_eq!(b.iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn feature_decomposes_into_block_histograms() {
        let img = random_image(32, 32, 11);
        let bank = ScaleBank::default();
        let rec = extract_feature(&img, &bank, "x", "y").unwrap();
        let mut images = vec![img.clone()];
        images.extend(scale_stack(&img, &bank));
        for (j, im) in images.iter().enumerate() {
            let h = histogram(&pattern_map(im, Coder::Flnip), true).unwrap();
            for (a, b) in rec.block(j).iter().zip(h.bins()) {
                assert!((a - b).abs() <= 5e-9 * b);
            }
            let s: f64 = rec.block(j).iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
            assert!(rec.block(j).iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn feature_needs_three_sigmas() {
        let img = random_image(8, 8, 1);
        let bank = ScaleBank::new(vec![0.5]).unwrap();
        assert!(matches!(
            extract_feature(&img, &bank, "a", "b"),
            Err(Error::InvalidScaleBank(_))
        ));
    }

    proptest! {
        #[test]
        fn histogram_mass_is_interior_count(w in 3usize..40, h in 3usize..40, seed in any::<u64>()) {
            let img = random_image(w, h, seed);
            let hist = histogram(&pattern_map(&img, Coder::Flnip), false).unwrap();
            prop_assert_eq!(hist.bins().iter().sum::<f64>(), ((w - 2) * (h - 2)) as f64);
        }

        #[test]
        fn lbp_invariant_under_monotone_remap(win in any::<[u8; 9]>(), a in 1u32..4, b in 0u32..10) {
            // v -> a*v^2 + b is strictly increasing on [0,255]
            let mapped: Vec<u32> = win.iter().map(|&v| a * u32::from(v) * u32::from(v) + b).collect();
            let c = mapped[CENTER];
            let mut code = 0u8;
            for k in 1..=8 {
                code |= u8::from(mapped[NEIGHBOR[k]] >= c) << (k - 1);
            }
            prop_assert_eq!(code, lbp_code(&win));
        }

        #[test]
        fn flnip_bits_invariant_under_scaling_of_shifted_values(win in any::<[u8; 9]>(), c in 1u32..50) {
            // fractional changes are ratios, so scaling every shifted value
            // by c leaves each comparison unchanged
            let shifted: Vec<u32> = win.iter().map(|&v| (u32::from(v) + 1) * c).collect();
            let center = shifted[CENTER];
            let mut code = 0u8;
            for k in 1..=8 {
                let ik = shifted[NEIGHBOR[k]];
                let adj: Vec<u32> = adjacent_set(k).unwrap().iter().map(|&m| shifted[NEIGHBOR[m]]).collect();
                let sk: u64 = adj.iter().map(|&x| u64::from(x.abs_diff(ik))).sum();
                let sc: u64 = adj.iter().map(|&x| u64::from(x.abs_diff(center))).sum();
                code |= u8::from(sk * u64::from(center) >= sc * u64::from(ik)) << (k - 1);
            }
            prop_assert_eq!(code, flnip_code(&win));
        }
    }
}
