use std::cmp::Ordering;
use std::fmt;
use std::ops::{Div, Mul, Neg};

use rug::float::Special;
use rug::Float;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Sign plus natural-log magnitude.
#[derive(Clone, Debug, PartialEq)]
pub struct LogAmplitude {
    sign: i8,
    log_mag: Float,
}

impl LogAmplitude {
    pub fn zero(prec: u32) -> Self {
        LogAmplitude { sign: 0, log_mag: Float::with_val(prec, Special::NegInfinity) }
    }

    pub fn one(prec: u32) -> Self {
        LogAmplitude { sign: 1, log_mag: Float::new(prec) }
    }

    pub fn from_parts(sign: i8, log_mag: Float) -> Self {
        if sign == 0 || log_mag.is_infinite() && log_mag.is_sign_negative() {
            let p = log_mag.prec();
            return Self::zero(p);
        }
        LogAmplitude { sign: sign.signum(), log_mag }
    }

    /// e^x.
    pub fn exp(x: Float) -> Self {
        LogAmplitude { sign: 1, log_mag: x }
    }

    pub fn from_float(x: &Float) -> Self {
        let prec = x.prec() + 32;
        if x.is_zero() {
            return Self::zero(prec);
        }
        let sign = if x.is_sign_negative() { -1 } else { 1 };
        LogAmplitude { sign, log_mag: Float::with_val(prec, x.abs_ref()).ln() }
    }

    pub fn from_i64(prec: u32, k: i64) -> Self {
        Self::from_float(&Float::with_val(prec, k))
    }

    pub fn sign(&self) -> i8 {
        self.sign
    }

    pub fn log_mag(&self) -> &Float {
        &self.log_mag
    }

    pub fn prec(&self) -> u32 {
        self.log_mag.prec()
    }

    pub fn is_zero(&self) -> bool {
        self.sign == 0
    }

    pub fn abs(&self) -> Self {
        let mut a = self.clone();
        if a.sign != 0 {
            a.sign = 1;
        }
        a
    }

    pub fn recip(&self) -> Self {
        assert!(self.sign != 0, "reciprocal of zero amplitude");
        LogAmplitude { sign: self.sign, log_mag: Float::with_val(self.prec(), -&self.log_mag) }
    }

    pub fn powi(&self, e: i32) -> Self {
        if e == 0 {
            return Self::one(self.prec());
        }
        if self.sign == 0 {
            assert!(e > 0, "negative power of zero amplitude");
            return self.clone();
        }
        let sign = if e % 2 == 0 { 1 } else { self.sign };
        LogAmplitude { sign, log_mag: Float::with_val(self.prec(), &self.log_mag * e) }
    }

    /// Multiplies by e^delta.
    pub fn scale_exp(&self, delta: &Float) -> Self {
        if self.sign == 0 {
            return self.clone();
        }
        LogAmplitude { sign: self.sign, log_mag: Float::with_val(self.prec(), &self.log_mag + delta) }
    }

    /// Sum via factoring out the larger magnitude.
    pub fn add(&self, other: &Self) -> Self {
        let prec = self.prec().max(other.prec());
        if self.sign == 0 {
            return other.with_prec(prec);
        }
        if other.sign == 0 {
            return self.with_prec(prec);
        }
        let (big, small) = if self.log_mag >= other.log_mag { (self, other) } else { (other, self) };
        let diff = Float::with_val(prec, &small.log_mag - &big.log_mag);
        let ratio = diff.exp();
        let corr = if big.sign == small.sign {
            ratio.ln_1p()
        } else {
            if ratio == 1u32 {
                return Self::zero(prec);
            }
            Float::with_val(prec, -ratio).ln_1p()
        };
        LogAmplitude { sign: big.sign, log_mag: Float::with_val(prec, &big.log_mag + &corr) }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&-other.clone())
    }

    pub fn sum<'a, I: IntoIterator<Item = &'a LogAmplitude>>(prec: u32, items: I) -> Self {
        items.into_iter().fold(Self::zero(prec), |acc, x| acc.add(x))
    }

    pub fn to_float(&self, prec: u32) -> Float {
        if self.sign == 0 {
            return Float::new(prec);
        }
        let m = Float::with_val(prec, self.log_mag.exp_ref());
        if self.sign < 0 {
            -m
        } else {
            m
        }
    }

    pub fn to_f64(&self) -> f64 {
        if self.sign == 0 {
            return 0.0;
        }
        self.sign as f64 * self.log_mag.to_f64().exp()
    }

    /// log10 of the magnitude, for display.
    pub fn log10(&self) -> f64 {
        self.log_mag.to_f64() / std::f64::consts::LN_10
    }

    pub fn cmp_abs(&self, other: &Self) -> Ordering {
        match (self.sign == 0, other.sign == 0) {
            (true, true) => Ordering::Equal,
            (true, false) => Ordering::Less,
            (false, true) => Ordering::Greater,
            _ => self.log_mag.partial_cmp(&other.log_mag).unwrap_or(Ordering::Equal),
        }
    }

    pub fn cmp_value(&self, other: &Self) -> Ordering {
        match self.sign.cmp(&other.sign) {
            Ordering::Equal => match self.sign {
                0 => Ordering::Equal,
                1 => self.cmp_abs(other),
                _ => other.cmp_abs(self),
            },
            o => o,
        }
    }

    fn with_prec(&self, prec: u32) -> Self {
        LogAmplitude { sign: self.sign, log_mag: Float::with_val(prec, &self.log_mag) }
    }
}

impl Mul for &LogAmplitude {
    type Output = LogAmplitude;
    fn mul(self, rhs: &LogAmplitude) -> LogAmplitude {
        let prec = self.prec().max(rhs.prec());
        if self.sign == 0 || rhs.sign == 0 {
            return LogAmplitude::zero(prec);
        }
        LogAmplitude { sign: self.sign * rhs.sign, log_mag: Float::with_val(prec, &self.log_mag + &rhs.log_mag) }
    }
}

impl Mul for LogAmplitude {
    type Output = LogAmplitude;
    fn mul(self, rhs: LogAmplitude) -> LogAmplitude {
        &self * &rhs
    }
}

impl Div for &LogAmplitude {
    type Output = LogAmplitude;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, rhs: &LogAmplitude) -> LogAmplitude {
        self * &rhs.recip()
    }
}

impl Neg for LogAmplitude {
    type Output = LogAmplitude;
    fn neg(mut self) -> LogAmplitude {
        self.sign = -self.sign;
        self
    }
}

impl fmt::Display for LogAmplitude {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.sign {
            0 => write!(f, "0"),
            s => write!(f, "{}exp({})", if s < 0 { "-" } else { "" }, self.log_mag.to_string_radix(10, Some(20))),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Repr {
    sign: i8,
    log_mag: String,
}

impl Serialize for LogAmplitude {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let log_mag = if self.sign == 0 { "-inf".to_string() } else { super::to_decimal(&self.log_mag) };
        Repr { sign: self.sign, log_mag }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for LogAmplitude {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = Repr::deserialize(d)?;
        if r.sign == 0 {
            return Ok(LogAmplitude::zero(super::DEFAULT_PREC));
        }
        let v = Float::parse(&r.log_mag).map_err(serde::de::Error::custom)?;
        let prec = super::DEFAULT_PREC + 64;
        Ok(LogAmplitude::from_parts(r.sign, Float::with_val(prec, v)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn la(x: f64) -> LogAmplitude {
        LogAmplitude::from_float(&Float::with_val(128, x))
    }

    #[test]
    fn tiny_products_do_not_underflow() {
        let a = LogAmplitude::exp(Float::with_val(128, -1e12));
        let b = LogAmplitude::exp(Float::with_val(128, 5e11));
        let p = &a * &b;
        assert_eq!(p.log_mag().to_f64(), -5e11);
        assert_eq!(p.to_f64(), 0.0);
    }

    #[test]
    fn cancellation_gives_zero() {
        let a = la(3.5);
        assert!(a.sub(&a).is_zero());
    }

    #[test]
    fn serde_roundtrip() {
        let a = la(-2.75);
        let s = serde_json::to_string(&a).unwrap();
        let b: LogAmplitude = serde_json::from_str(&s).unwrap();
        assert_eq!(b.sign(), -1);
        assert!((b.to_f64() + 2.75).abs() < 1e-15);
        let z: LogAmplitude = serde_json::from_str(&serde_json::to_string(&LogAmplitude::zero(64)).unwrap()).unwrap();
        assert!(z.is_zero());
    }

    proptest! {
        #[test]
        fn add_matches_floats(x in -1e6f64..1e6, y in -1e6f64..1e6) {
            let s = la(x).add(&la(y)).to_f64();
            prop_assert!((s - (x + y)).abs() <= 1e-9 * (1.0 + x.abs() + y.abs()));
        }

        #[test]
        fn mul_matches_floats(x in -1e3f64..1e3, y in -1e3f64..1e3) {
            let p = (&la(x) * &la(y)).to_f64();
            prop_assert!((p - x * y).abs() <= 1e-12 * (1.0 + (x * y).abs()));
        }

        #[test]
        fn powi_matches(x in 0.01f64..10.0, e in -5i32..6) {
            let p = la(x).powi(e).to_f64();
            prop_assert!((p / x.powi(e) - 1.0).abs() < 1e-12);
        }
    }
}
