use rug::float::Constant;
use rug::Float;

use super::{ClassTag, FrequencyVector, LiouvilleWitness};
use crate::error::{Error, Result};
use crate::numeric::{pow2, ulp};

/// Largest depth whose witness denominators 2^{a_m} fit in i64.
pub const MAX_DEPTH: usize = 3;

const FILLER_PRIMES: [u32; 12] = [3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41];

/// a_1 = 2, a_{m+1} = m 2^{a_m}; `None` once the exponent no longer fits in u64.
pub fn tower_exponent(m: usize) -> Option<u64> {
    let mut a: u64 = 2;
    for i in 1..m {
        if a >= 62 {
            return None;
        }
        a = (i as u64).checked_mul(1u64 << a)?;
    }
    Some(a)
}

/// w = (1, alpha, sqrt 3, sqrt 5, ...) with alpha = sum_m 2^{-a_m} and witnesses (-p_m, q_m, 0, ...), m = 1..depth.
pub fn construct_superliouville(d: usize, depth: usize, prec: u32) -> Result<(FrequencyVector, Vec<LiouvilleWitness>)> {
    if d < 3 {
        return Err(Error::Invalid(format!("dimension {d} < 3")));
    }
    if d - 2 > FILLER_PRIMES.len() {
        return Err(Error::Capacity(format!("no filler components beyond d = {}", FILLER_PRIMES.len() + 2)));
    }
    if depth == 0 {
        return Err(Error::Resonance("depth 0 leaves alpha = 1/4 rational with no witness".into()));
    }
    if depth > MAX_DEPTH {
        return Err(Error::Capacity(format!(
            "depth {depth} needs witness denominator 2^{} beyond 64-bit integers (max depth {MAX_DEPTH})",
            tower_exponent(depth).map(|a| a.to_string()).unwrap_or_else(|| "(tower)".into())
        )));
    }
    let cut = prec as u64 + 64;
    let mut alpha = Float::new(prec + 64);
    let mut m = 1;
    while let Some(a) = tower_exponent(m) {
        if a > cut {
            break;
        }
        alpha += pow2(prec + 64, -(a as i32));
        m += 1;
    }
    let alpha_stored = Float::with_val(prec, &alpha);
    let mut alpha_rad = pow2(prec, -(cut as i32 - 1));
    if alpha_stored != alpha {
        alpha_rad += ulp(&alpha_stored);
    }

    let mut comps = vec![Float::with_val(prec, 1), alpha_stored];
    let mut rads = vec![Float::new(prec), alpha_rad];
    for p in FILLER_PRIMES.iter().take(d - 2) {
        let c = Float::with_val(prec, *p).sqrt();
        rads.push(ulp(&c));
        comps.push(c);
    }

    let wprec = prec + 64;
    let ln2 = Float::with_val(wprec, Constant::Log2);
    let mut witnesses = Vec::with_capacity(depth);
    for m in 1..=depth {
        let a_m = tower_exponent(m).expect("depth bounded");
        let q: i64 = 1i64 << a_m;
        let p: i64 = (1..=m).map(|i| 1i64 << (a_m - tower_exponent(i).unwrap())).sum();
        let a_next = tower_exponent(m + 1).expect("a_{m+1} finite for m <= MAX_DEPTH");
        let mut tail = Float::new(wprec);
        let mut i = m + 2;
        while let Some(a_i) = tower_exponent(i) {
            let gap = a_i - a_next;
            if gap > wprec as u64 + 64 {
                break;
            }
            tail += pow2(wprec, -(gap as i32));
            i += 1;
        }
        let lead = Float::with_val(wprec, &ln2 * (a_m as f64 - a_next as f64));
        let inner_log = lead + tail.ln_1p();
        let ratio = Float::with_val(wprec, &inner_log / q);
        let mut k_bar = vec![0i64; d - 1];
        k_bar[0] = -p;
        k_bar[1] = q;
        witnesses.push(LiouvilleWitness { k_bar, inner_log, ratio });
    }

    let mut omega = FrequencyVector::new(comps, rads)?;
    omega.class_tag = ClassTag::LiouvilleConstructed;
    omega.witnesses = witnesses.clone();
    Ok((omega, witnesses))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tower() {
        assert_eq!(tower_exponent(1), Some(2));
        assert_eq!(tower_exponent(2), Some(4));
        assert_eq!(tower_exponent(3), Some(32));
        assert_eq!(tower_exponent(4), Some(3 << 32));
        assert_eq!(tower_exponent(5), None);
    }

    #[test]
    fn depth_two_witness() {
        let (w, wit) = construct_superliouville(3, 2, 256).unwrap();
        let alpha = Float::with_val(256, 0.25) + 0.0625 + pow2(256, -32);
        assert_eq!(w.components()[1], alpha);
        assert_eq!(wit[1].k_bar, vec![-5, 16]);
        let expect = -28.0 * std::f64::consts::LN_2;
        assert!((wit[1].inner_log.to_f64() - expect).abs() < 1e-12);
        assert!((wit[1].ratio.to_f64() + 1.2130).abs() < 1e-4);
        let b = Float::with_val(256, &w.components()[1] * 16) - 5u32;
        assert_eq!(b, pow2(256, -28));
    }

    #[test]
    fn depth_one_witness() {
        let (_, wit) = construct_superliouville(3, 1, 256).unwrap();
        assert_eq!(wit[0].k_bar, vec![-1, 4]);
        let v = Float::with_val(320, wit[0].inner_log.exp_ref());
        let want = Float::with_val(320, 0.25) + pow2(320, -30);
        let rel = Float::with_val(320, &v - &want).abs() / &want;
        assert!(rel < 1e-60);
    }

    #[test]
    fn guards() {
        assert!(matches!(construct_superliouville(3, 0, 256), Err(Error::Resonance(_))));
        assert!(matches!(construct_superliouville(3, 4, 256), Err(Error::Capacity(_))));
        assert!(construct_superliouville(2, 1, 256).is_err());
    }

    #[test]
    fn ratios_decrease() {
        let (_, wit) = construct_superliouville(5, 3, 256).unwrap();
        for pair in wit.windows(2) {
            assert!(pair[1].ratio < pair[0].ratio);
        }
        let ln2 = std::f64::consts::LN_2;
        for (i, w) in wit.iter().enumerate().skip(1) {
            let m = (i + 1) as f64;
            let a_m = tower_exponent(i + 1).unwrap() as f64;
            let exact = -(m - a_m / 2f64.powf(a_m)) * ln2;
            assert!((w.ratio.to_f64() - exact).abs() < 1e-9);
        }
        assert!(wit[2].ratio.to_f64() <= -0.9 * 3.0 * ln2);
    }
}
