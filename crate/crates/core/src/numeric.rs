//! High-precision helpers shared by every module.

use std::cmp::Ordering;

use rug::float::{Constant, Round, Special};
use rug::{Float, Integer, Rational};

use crate::error::{Error, Result};

pub mod logamp;

pub use logamp::LogAmplitude;

pub const DEFAULT_PREC: u32 = 256;

/// Upper limit for adaptive working precision in bits.
pub const MAX_WORK_PREC: u32 = 1 << 22;

pub fn pi(prec: u32) -> Float {
    Float::with_val(prec, Constant::Pi)
}

pub fn two_pi(prec: u32) -> Float {
    pi(prec) * 2u32
}

pub fn zero(prec: u32) -> Float {
    Float::new(prec)
}

pub fn neg_inf(prec: u32) -> Float {
    Float::with_val(prec, Special::NegInfinity)
}

pub fn int(prec: u32, k: i64) -> Float {
    Float::with_val(prec, k)
}

/// 2^e exactly.
pub fn pow2(prec: u32, e: i32) -> Float {
    Float::with_val(prec, Float::i_exp(1, e))
}

pub fn sqrt_of(prec: u32, x: u32) -> Float {
    Float::with_val(prec, x).sqrt()
}

/// Number of decimal digits that round-trip a `prec`-bit float.
pub fn decimal_digits(prec: u32) -> usize {
    (prec as f64 * std::f64::consts::LOG10_2).ceil() as usize + 2
}

pub fn to_decimal(x: &Float) -> String {
    if x.is_zero() {
        return "0".into();
    }
    x.to_string_radix(10, Some(decimal_digits(x.prec())))
}

pub fn to_decimal_short(x: &Float, digits: usize) -> String {
    if x.is_zero() {
        return "0".into();
    }
    x.to_string_radix(10, Some(digits))
}

/// A parsed real number together with a bound on its rounding error.
#[derive(Clone, Debug)]
pub struct ParsedReal {
    pub value: Float,
    pub radius: Float,
    pub exact: Option<Rational>,
}

/// Parses a decimal string, a rational `p/q`, or `sqrt(x)` with an optional leading sign.
pub fn parse_real(text: &str, prec: u32) -> Result<ParsedReal> {
    let t = text.trim();
    let (neg, body) = match t.strip_prefix('-') {
        Some(rest) if rest.trim_start().starts_with("sqrt") => (true, rest.trim()),
        _ => (false, t),
    };
    if let Some(inner) = body.strip_prefix("sqrt(").and_then(|b| b.strip_suffix(')')) {
        let arg = parse_real(inner, prec + 64)?;
        if arg.value.is_sign_negative() && !arg.value.is_zero() {
            return Err(Error::Parse(format!("sqrt of negative value in {text:?}")));
        }
        let (mut v, ord) = Float::with_val_round(prec, arg.value.sqrt_ref(), Round::Nearest);
        let exact_sqrt = ord == Ordering::Equal && arg.exact.is_some();
        if neg {
            v = -v;
        }
        let radius = if exact_sqrt { zero(prec) } else { ulp(&v) };
        let exact = if exact_sqrt { v.to_rational() } else { None };
        return Ok(ParsedReal { value: v, radius, exact });
    }
    if body.contains('/') {
        let q: Rational = body
            .parse()
            .map_err(|e| Error::Parse(format!("bad rational {text:?}: {e}")))?;
        let (v, ord) = Float::with_val_round(prec, &q, Round::Nearest);
        let radius = if ord == Ordering::Equal { zero(prec) } else { ulp(&v) };
        return Ok(ParsedReal { value: v, radius, exact: Some(q) });
    }
    let parsed = Float::parse(body).map_err(|e| Error::Parse(format!("bad real {text:?}: {e}")))?;
    let (v, ord) = Float::with_val_round(prec, parsed, Round::Nearest);
    if !v.is_finite() {
        return Err(Error::Parse(format!("non-finite real {text:?}")));
    }
    let exact = decimal_rational(body);
    let radius = if ord == Ordering::Equal { zero(prec) } else { ulp(&v) };
    Ok(ParsedReal { value: v, radius, exact })
}

/// Exact rational value of a plain decimal literal like `-12.5e-3`.
fn decimal_rational(s: &str) -> Option<Rational> {
    let s = s.trim();
    let (mant, exp) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().ok()?),
        None => (s, 0),
    };
    let (neg, mant) = match mant.strip_prefix('-') {
        Some(m) => (true, m),
        None => (false, mant.strip_prefix('+').unwrap_or(mant)),
    };
    let (ip, fp) = match mant.find('.') {
        Some(i) => (&mant[..i], &mant[i + 1..]),
        None => (mant, ""),
    };
    if ip.is_empty() && fp.is_empty() {
        return None;
    }
    let digits = format!("{ip}{fp}");
    if !digits.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let mut num: Integer = digits.parse().ok()?;
    if neg {
        num = -num;
    }
    let e10 = exp - fp.len() as i32;
    let q = if e10 >= 0 {
        Rational::from(num * Integer::from(Integer::u_pow_u(10, e10 as u32)))
    } else {
        Rational::from((num, Integer::from(Integer::u_pow_u(10, (-e10) as u32))))
    };
    Some(q)
}

/// One unit in the last place of `x` (2^(exp - prec)); the smallest positive value for zero.
pub fn ulp(x: &Float) -> Float {
    let prec = x.prec();
    match x.get_exp() {
        Some(e) => Float::with_val(prec, Float::i_exp(1, e - prec as i32)),
        None => Float::with_val(prec, Float::i_exp(1, -(prec as i32) - 1024)),
    }
}

/// Binary exponent of |x| (x in [2^(e-1), 2^e)); `None` for zero.
pub fn exp2_of(x: &Float) -> Option<i64> {
    x.get_exp().map(|e| e as i64)
}

/// Splits x = n + f with n integer and f in [0, 1).
pub fn split_unit(x: &Float) -> (Float, Integer) {
    let fl = Float::with_val(x.prec(), x.floor_ref());
    let n = fl.to_integer().unwrap_or_default();
    let mut f = Float::with_val(x.prec(), x - &fl);
    if f >= 1u32 {
        f -= 1u32;
    }
    (f, n)
}

pub fn frac(x: &Float) -> Float {
    split_unit(x).0
}

/// (sin 2πx, cos 2πx) with x reduced to [-1/2, 1/2] first.
pub fn sin_cos_2pi(x: &Float, prec: u32) -> (Float, Float) {
    let r = Float::with_val(x.prec(), x - Float::with_val(x.prec(), x.round_ref()));
    let arg = Float::with_val(prec, &r * two_pi(prec));
    let (s, c) = arg.sin_cos(Float::new(prec));
    (s, c)
}

pub fn sin_2pi(x: &Float, prec: u32) -> Float {
    sin_cos_2pi(x, prec).0
}

/// Neumaier compensated sum.
pub fn compensated_sum<'a, I>(prec: u32, terms: I) -> Float
where
    I: IntoIterator<Item = &'a Float>,
{
    let mut sum = Float::new(prec);
    let mut comp = Float::new(prec);
    for x in terms {
        let t = Float::with_val(prec, &sum + x);
        let corr = if sum.cmp_abs(x) != Some(Ordering::Less) {
            Float::with_val(prec, &sum - &t) + x
        } else {
            Float::with_val(prec, x - &t) + &sum
        };
        comp += corr;
        sum = t;
    }
    sum + comp
}

pub fn dot_int(prec: u32, k: &[i64], x: &[Float]) -> Float {
    let terms: Vec<Float> = k.iter().zip(x).map(|(ki, xi)| Float::with_val(prec, xi * *ki)).collect();
    compensated_sum(prec, &terms)
}

/// Directed-rounding enclosure [lo, hi] of <k, x> where each x_i carries an absolute radius.
pub fn dot_int_enclosure(prec: u32, k: &[i64], x: &[Float], radius: &[Float]) -> (Float, Float) {
    let mut lo = Float::new(prec);
    let mut hi = Float::new(prec);
    let mut rad = Float::new(prec);
    for ((ki, xi), ri) in k.iter().zip(x).zip(radius) {
        if *ki == 0 {
            continue;
        }
        let pl = Float::with_val_round(prec, xi * *ki, Round::Down).0;
        let ph = Float::with_val_round(prec, xi * *ki, Round::Up).0;
        lo = Float::with_val_round(prec, &lo + &pl, Round::Down).0;
        hi = Float::with_val_round(prec, &hi + &ph, Round::Up).0;
        let rr = Float::with_val_round(prec, ri * ki.unsigned_abs(), Round::Up).0;
        rad = Float::with_val_round(prec, &rad + &rr, Round::Up).0;
    }
    lo = Float::with_val_round(prec, &lo - &rad, Round::Down).0;
    hi = Float::with_val_round(prec, &hi + &rad, Round::Up).0;
    (lo, hi)
}

/// Enclosure of |y| for y in [lo, hi].
pub fn abs_enclosure(lo: &Float, hi: &Float) -> (Float, Float) {
    let prec = lo.prec().max(hi.prec());
    if *lo >= 0u32 {
        (lo.clone(), hi.clone())
    } else if *hi <= 0u32 {
        (Float::with_val(prec, -hi), Float::with_val(prec, -lo))
    } else {
        let a = Float::with_val(prec, -lo);
        let m = if a > *hi { a } else { hi.clone() };
        (Float::new(prec), m)
    }
}

pub fn sup_norm(k: &[i64]) -> u64 {
    k.iter().map(|x| x.unsigned_abs()).max().unwrap_or(0)
}

pub fn l1_norm(k: &[i64]) -> u64 {
    k.iter().map(|x| x.unsigned_abs()).sum()
}

/// Bits needed to hold integers up to `n` in magnitude.
pub fn bits_of(n: u64) -> u32 {
    64 - n.leading_zeros()
}

pub fn max_abs(xs: &[Float]) -> Float {
    let prec = xs.first().map(|x| x.prec()).unwrap_or(DEFAULT_PREC);
    let mut m = Float::new(prec);
    for x in xs {
        if x.cmp_abs(&m) == Some(Ordering::Greater) {
            m = Float::with_val(prec, x.abs_ref());
        }
    }
    m
}

/// Relative difference |a-b| / max(1, |a|, |b|).
pub fn rel_diff(a: &Float, b: &Float) -> Float {
    let prec = a.prec().max(b.prec());
    let d = Float::with_val(prec, a - b).abs();
    let mut scale = Float::with_val(prec, 1u32);
    for v in [a, b] {
        if v.cmp_abs(&scale) == Some(Ordering::Greater) {
            scale = Float::with_val(prec, v.abs_ref());
        }
    }
    d / scale
}

/// Circular distance between two angles measured in turns.
pub fn circ_dist(a: &Float, b: &Float) -> Float {
    let prec = a.prec().max(b.prec());
    let d = Float::with_val(prec, a - b);
    let r = Float::with_val(prec, &d - Float::with_val(prec, d.round_ref()));
    r.abs()
}

pub fn circ_dist_f64(a: f64, b: f64) -> f64 {
    let d = a - b;
    (d - d.round()).abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_forms() {
        let p = parse_real("sqrt(2)", 256).unwrap();
        let two = Float::with_val(256, p.value.square_ref());
        assert!(Float::with_val(256, &two - 2u32).abs() < 1e-70);
        assert!(p.exact.is_none());
        let q = parse_real("-1/9", 128).unwrap();
        assert_eq!(q.exact.unwrap(), Rational::from((-1, 9)));
        let d = parse_real("0.125", 64).unwrap();
        assert!(d.radius.is_zero());
        assert_eq!(d.exact.unwrap(), Rational::from((1, 8)));
        let e = parse_real("-2.5e-3", 64).unwrap();
        assert_eq!(e.exact.unwrap(), Rational::from((-1, 400)));
        assert!(parse_real("abc", 64).is_err());
        let neg = parse_real("-sqrt(4)", 64).unwrap();
        assert_eq!(neg.value, -2);
    }

    #[test]
    fn decimal_roundtrip() {
        let x = sqrt_of(256, 3);
        let back = parse_real(&to_decimal(&x), 256).unwrap().value;
        assert_eq!(x, back);
    }

    #[test]
    fn unit_split() {
        let (f, n) = split_unit(&Float::with_val(64, -2.25));
        assert_eq!(n, -3);
        assert_eq!(f, 0.75);
    }

    #[test]
    fn compensated_beats_naive() {
        let prec = 53;
        let big = Float::with_val(prec, 1e16);
        let one = Float::with_val(prec, 1.0);
        let terms = [big.clone(), one.clone(), one.clone(), Float::with_val(prec, -1e16)];
        assert_eq!(compensated_sum(prec, &terms), 2.0);
    }

    #[test]
    fn enclosure_contains_value() {
        let prec = 128;
        let w = [Float::with_val(prec, 1), sqrt_of(prec, 2), sqrt_of(prec, 3)];
        let rad: Vec<Float> = w.iter().map(ulp).collect();
        let (lo, hi) = dot_int_enclosure(prec, &[-3, -4, 5], &w, &rad);
        let exact = -3.0 - 4.0 * 2f64.sqrt() + 5.0 * 3f64.sqrt();
        assert!(lo < hi);
        assert!((lo.to_f64() - exact).abs() < 1e-14);
    }
}
