//! Independent reference implementations used only by tests.
//!
//! Nothing here calls into the library's coding path: neighbor sets come from
//! the printed modular index formulas, fractional changes are exact rationals.

#![allow(dead_code)]

use num_rational::Ratio;

/// Window labels as drawn: top row I6 I7 I8, middle I5 Ic I1, bottom I4 I3 I2.
/// 0 stands for the center.
const DRAWN: [[usize; 3]; 3] = [[6, 7, 8], [5, 0, 1], [4, 3, 2]];

/// Intensities indexed by label (`[0]` = center, `[k]` = I_k).
pub fn labeled(window: &[u8; 9]) -> [i64; 9] {
    let mut out = [0i64; 9];
    for (r, row) in DRAWN.iter().enumerate() {
        for (c, &label) in row.iter().enumerate() {
            out[label] = i64::from(window[r * 3 + c]);
        }
    }
    out
}

fn modulo(a: i64, m: i64) -> i64 {
    a.rem_euclid(m)
}

/// Adjacent-set indices exactly as printed: odd k uses the four-term
/// formula, even k the two-term one.
pub fn printed_adjacent(k: i64) -> Vec<i64> {
    if k % 2 == 1 {
        vec![1 + modulo(k + 5, 7), 1 + modulo(k + 6, 9), k + 1, modulo(k + 2, 8)]
    } else {
        vec![k - 1, modulo(k + 1, 8)]
    }
}

pub fn literal_flnip(window: &[u8; 9]) -> u8 {
    // domain shift [0,255] -> [1,256]
    let i = labeled(window).map(|v| v + 1);
    let ic = i[0];
    let mut code = 0u32;
    for k in 1..=8i64 {
        let alpha: Vec<i64> = printed_adjacent(k).iter().map(|&m| i[m as usize]).collect();
        let m = alpha.len() as i64;
        let ik = i[k as usize];
        let mu_k: Ratio<i64> = alpha
            .iter()
            .map(|&a| Ratio::new((a - ik).abs(), ik))
            .fold(Ratio::from_integer(0), |s, t| s + t)
            / m;
        let mu_c: Ratio<i64> = alpha
            .iter()
            .map(|&a| Ratio::new((a - ic).abs(), ic))
            .fold(Ratio::from_integer(0), |s, t| s + t)
            / m;
        let bit = u32::from(mu_k >= mu_c);
        code += (1 << (k - 1)) * bit;
    }
    code as u8
}

pub fn literal_lbp(window: &[u8; 9]) -> u8 {
    let i = labeled(window);
    (1..=8).map(|k| u32::from(i[k] >= i[0]) << (k - 1)).sum::<u32>() as u8
}

/// Tiny deterministic generator for test data (splitmix64).
pub struct SplitMix(pub u64);

impl SplitMix {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn byte(&mut self) -> u8 {
        (self.next_u64() >> 56) as u8
    }

    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }
}
