use std::cmp::Ordering;

use rayon::prelude::*;
use rug::float::Round;
use rug::ops::Pow;
use rug::Float;

use super::FrequencyVector;
use crate::error::{Error, Result};
use crate::numeric::{abs_enclosure, sup_norm};

#[derive(Clone, Debug)]
pub struct DiophantineCertificate {
    pub pass: bool,
    pub worst_k: Vec<i64>,
    /// Midpoint of the enclosure of |<w,k>| * |k|^tau at worst_k.
    pub worst_value: Float,
    pub worst_lower: Float,
    pub worst_upper: Float,
    pub k_max: u64,
    pub tau: Float,
    pub gamma: Float,
}

#[derive(Clone, Debug)]
pub(crate) struct Scored {
    pub k: Vec<i64>,
    pub lo: Float,
    pub hi: Float,
    pub mid: Float,
}

/// Ordering used for every argmin: value, then sup-norm, then lexicographic.
pub(crate) fn rank(a_val: &Float, a_k: &[i64], b_val: &Float, b_k: &[i64]) -> Ordering {
    a_val
        .partial_cmp(b_val)
        .unwrap_or(Ordering::Equal)
        .then(sup_norm(a_k).cmp(&sup_norm(b_k)))
        .then(a_k.cmp(b_k))
}

fn f64_upper(x: &Float) -> f64 {
    x.to_f64_round(Round::Up)
}

struct FastOmega {
    w: Vec<f64>,
    err: Vec<f64>,
}

impl FastOmega {
    fn new(omega: &FrequencyVector) -> Self {
        let w: Vec<f64> = omega.components().iter().map(|c| c.to_f64()).collect();
        let err = omega
            .components()
            .iter()
            .zip(&w)
            .zip(omega.radius())
            .map(|((c, wi), r)| {
                let d = Float::with_val(c.prec(), c - *wi).abs();
                f64_upper(&d) + f64_upper(r)
            })
            .collect();
        FastOmega { w, err }
    }

    /// Rigorous f64 bounds on |<w,k>| * n^tau.
    fn bounds(&self, k: &[i64], tau: f64) -> (f64, f64) {
        let mut s = 0.0f64;
        let mut mag = 0.0f64;
        let mut e = 0.0f64;
        for ((ki, wi), ei) in k.iter().zip(&self.w).zip(&self.err) {
            let kf = *ki as f64;
            s += kf * wi;
            mag += (kf * wi).abs();
            e += kf.abs() * ei;
        }
        let u = f64::EPSILON;
        let eb = (k.len() as f64 + 2.0) * u * mag * 1.01 + e * (1.0 + 4.0 * u) + f64::MIN_POSITIVE;
        let n = sup_norm(k) as f64;
        let p = n.powf(tau);
        let lo = ((s.abs() - eb).max(0.0) * p * (1.0 - 1e-12)).max(0.0);
        let hi = (s.abs() + eb) * p * (1.0 + 1e-12);
        (lo, hi)
    }
}

fn for_each_in_box<F: FnMut(&[i64])>(d: usize, k_max: i64, first: i64, mut f: F) {
    let mut k = vec![-k_max; d];
    k[0] = first;
    if d == 1 {
        if first != 0 {
            f(&k);
        }
        return;
    }
    loop {
        if k.iter().any(|x| *x != 0) {
            f(&k);
        }
        let mut i = d - 1;
        loop {
            if k[i] < k_max {
                k[i] += 1;
                break;
            }
            k[i] = -k_max;
            i -= 1;
            if i == 0 {
                return;
            }
        }
    }
}

/// Candidates that may realize min |<w,k>| |k|^tau over 0 < |k| <= k_max, refined and sorted.
pub(crate) fn scan_min(omega: &FrequencyVector, k_max: u64, tau: &Float) -> Vec<Scored> {
    let d = omega.d();
    let km = k_max as i64;
    let fast = FastOmega::new(omega);
    let tau_f = tau.to_f64();
    let firsts: Vec<i64> = (-km..=km).collect();
    let upper = firsts
        .par_iter()
        .map(|&a| {
            let mut best = f64::INFINITY;
            for_each_in_box(d, km, a, |k| {
                let (_, hi) = fast.bounds(k, tau_f);
                if hi < best {
                    best = hi;
                }
            });
            best
        })
        .reduce(|| f64::INFINITY, f64::min);
    let kept: Vec<Vec<i64>> = firsts
        .par_iter()
        .map(|&a| {
            let mut out = vec![];
            for_each_in_box(d, km, a, |k| {
                if fast.bounds(k, tau_f).0 <= upper {
                    out.push(k.to_vec());
                }
            });
            out
        })
        .flatten()
        .collect();
    let prec = omega.prec() + 64;
    let mut scored: Vec<Scored> = kept
        .into_par_iter()
        .map(|k| {
            let (lo, hi) = omega.dot_enclosure(&k);
            let (alo, ahi) = abs_enclosure(&lo, &hi);
            let n = Float::with_val(prec, sup_norm(&k));
            let plo = Float::with_val_round(prec, (&n).pow(tau), Round::Down).0;
            let phi = Float::with_val_round(prec, (&n).pow(tau), Round::Up).0;
            let slo = Float::with_val_round(prec, &alo * &plo, Round::Down).0;
            let shi = Float::with_val_round(prec, &ahi * &phi, Round::Up).0;
            let mid = Float::with_val(prec, &slo + &shi) / 2u32;
            Scored { k, lo: slo, hi: shi, mid }
        })
        .collect();
    scored.sort_by(|a, b| rank(&a.mid, &a.k, &b.mid, &b.k));
    scored
}

/// Finite-range Diophantine certificate: min over 0 < |k| <= K of |<w,k>| |k|^tau against gamma.
pub fn diophantine_check(omega: &FrequencyVector, k_max: u64, tau: &Float, gamma: &Float) -> Result<DiophantineCertificate> {
    if k_max < 1 || *tau <= 0u32 || *gamma <= 0u32 {
        return Err(Error::Invalid("diophantine_check needs K >= 1, tau > 0, gamma > 0".into()));
    }
    let need = 2.0 * ((k_max as f64).powf(tau.to_f64()) / gamma.to_f64()).log2();
    if (omega.prec() as f64) < need {
        return Err(Error::precision("frequency components too coarse for the requested range", need.ceil() as u64));
    }
    let scored = scan_min(omega, k_max, tau);
    let worst = scored.first().expect("non-empty box").clone();
    let definitely_below = scored.iter().any(|s| s.hi < *gamma);
    let straddles = scored.iter().any(|s| s.lo < *gamma && s.hi >= *gamma);
    if !definitely_below && straddles {
        return Err(Error::precision("enclosure straddles gamma", omega.prec() as u64 * 2));
    }
    let pass = scored.iter().all(|s| s.lo >= *gamma);
    Ok(DiophantineCertificate {
        pass,
        worst_k: worst.k,
        worst_value: worst.mid,
        worst_lower: worst.lo,
        worst_upper: worst.hi,
        k_max,
        tau: tau.clone(),
        gamma: gamma.clone(),
    })
}

impl FrequencyVector {
    /// Runs the finite-range check and records the class tag on pass.
    pub fn certify_diophantine(&mut self, k_max: u64, tau: &Float, gamma: &Float) -> Result<DiophantineCertificate> {
        let cert = diophantine_check(self, k_max, tau, gamma)?;
        if cert.pass {
            self.class_tag = super::ClassTag::DiophantineChecked { k_max, tau: tau.clone(), gamma: gamma.clone() };
        }
        Ok(cert)
    }
}

#[derive(Clone, Debug)]
pub struct DirichletOutcome {
    pub k: [i64; 2],
    pub value: Float,
    /// The inner product vanished exactly: k is a resonance relation.
    pub resonant: bool,
    /// |<w',k'>| < (|w1| + |w2|) / |k'|.
    pub dirichlet_ok: bool,
}

/// Best approximation min |k1 w1 + k2 w2| over 0 < |k| <= K, one candidate per k2.
pub fn dirichlet_best(w1: &Float, w2: &Float, k_max: u64) -> Result<DirichletOutcome> {
    if k_max < 2 {
        return Err(Error::Invalid("dirichlet_best needs K >= 2".into()));
    }
    if w1.is_zero() {
        return Err(Error::Invalid("dirichlet_best needs w1 != 0".into()));
    }
    let prec = 2 * w1.prec().max(w2.prec()) + 160;
    let km = k_max as i64;
    let x = Float::with_val(prec, w2 / w1);
    let eval = |k1: i64, k2: i64| -> Float {
        let a = Float::with_val(prec, w1 * k1);
        let b = Float::with_val(prec, w2 * k2);
        (a + b).abs()
    };
    let best = (-km..=km)
        .into_par_iter()
        .map(|k2| {
            let mut local: Option<(Float, [i64; 2])> = None;
            let mut consider = |k1: i64| {
                if k1.abs() > km || (k1 == 0 && k2 == 0) {
                    return;
                }
                let v = eval(k1, k2);
                let k = [k1, k2];
                let better = match &local {
                    None => true,
                    Some((bv, bk)) => rank(&v, &k, bv, bk) == Ordering::Less,
                };
                if better {
                    local = Some((v, k));
                }
            };
            if k2 == 0 {
                consider(1);
                consider(-1);
            } else {
                let t = Float::with_val(prec, &x * -k2);
                let fl = t.floor().to_integer().and_then(|i| i.to_i64()).unwrap_or(i64::MAX / 2);
                for k1 in [fl, fl + 1] {
                    consider(k1.clamp(-km, km));
                }
            }
            local
        })
        .flatten()
        .reduce_with(|a, b| if rank(&a.0, &a.1, &b.0, &b.1) == Ordering::Greater { b } else { a })
        .expect("non-empty range");
    let (value, k) = best;
    let resonant = value.is_zero();
    let c = Float::with_val(prec, w1.abs_ref()) + Float::with_val(prec, w2.abs_ref());
    let dirichlet_ok = value < c / sup_norm(&k);
    Ok(DirichletOutcome { k, value, resonant, dirichlet_ok })
}

/// Continued-fraction convergents p/q of x with 1 <= q <= max_q, as long as they are trustworthy at x's precision.
pub fn convergents(x: &Float, max_q: u64) -> Vec<(i64, i64)> {
    let prec = x.prec();
    let limit_bits = (prec as i64 - 24) / 2;
    let mut out = vec![];
    let (mut h1, mut h2): (i128, i128) = (1, 0);
    let (mut q1, mut q2): (i128, i128) = (0, 1);
    let mut y = x.clone();
    for _ in 0..10_000 {
        let a_f = Float::with_val(prec, y.floor_ref());
        let a = match a_f.to_integer().and_then(|i| i.to_i64()) {
            Some(a) => a as i128,
            None => break,
        };
        let h = a * h1 + h2;
        let q = a * q1 + q2;
        if q > max_q as i128 || h.abs() > (i64::MAX / 4) as i128 || q > (i64::MAX / 4) as i128 {
            break;
        }
        if q >= 1 && (128 - q.leading_zeros() as i64) <= limit_bits {
            out.push((h as i64, q as i64));
        } else if q >= 1 {
            break;
        }
        let rem = Float::with_val(prec, &y - &a_f);
        if rem.is_zero() {
            break;
        }
        y = Float::with_val(prec, rem.recip_ref());
        h2 = h1;
        h1 = h;
        q2 = q1;
        q1 = q;
    }
    out
}
