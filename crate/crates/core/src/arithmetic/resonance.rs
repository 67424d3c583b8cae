use std::cmp::Ordering;

use rug::ops::Pow;
use rug::{Float, Integer, Rational};
use serde::{Deserialize, Serialize};

use super::diophantine::{convergents, dirichlet_best};
use super::FrequencyVector;
use crate::error::{Error, Result};
use crate::numeric::{abs_enclosure, neg_inf, sup_norm};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapVariant {
    Hat,
    Bar,
    Const,
}

#[derive(Clone, Debug)]
pub struct ResonancePair {
    pub k: Vec<i64>,
    /// Resonance parameter; `None` while free (const maps).
    pub s: Option<Float>,
    pub s_exact: Option<Rational>,
    /// ln |<w~(s), k>| after refinement (-inf when exact).
    pub residual_log: Option<Float>,
}

impl ResonancePair {
    pub fn free(k: Vec<i64>) -> Self {
        ResonancePair { k, s: None, s_exact: None, residual_log: None }
    }

    pub fn norm(&self) -> u64 {
        sup_norm(&self.k)
    }
}

#[derive(Clone, Debug)]
pub struct ResonanceOptions {
    pub count: usize,
    /// Gap factor: |k_{j+1}| >= growth |k_j|.
    pub growth: f64,
    pub tau: Option<Float>,
    /// Search bound for the first pair.
    pub start_bound: u64,
    pub tolerance: Float,
}

impl Default for ResonanceOptions {
    fn default() -> Self {
        ResonanceOptions {
            count: 1,
            growth: 2.0,
            tau: None,
            start_bound: 10,
            tolerance: Float::with_val(128, 1e-30),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Branch {
    Generic,
    /// w' = (w1, w2) satisfies m1 w1 + m2 w2 = 0.
    Resonant { relation: [i64; 2] },
    Witness,
}

#[derive(Clone, Debug)]
pub struct ResonanceSequence {
    pub pairs: Vec<ResonancePair>,
    pub branch: Branch,
    pub shortfall: Option<String>,
}

fn work_prec(omega: &FrequencyVector) -> u32 {
    omega.prec() + 64
}

/// Exact <w~, k> when every component used is an exact rational.
fn exact_dot(omega: &FrequencyVector, k: &[i64]) -> Option<Rational> {
    let mut acc = Rational::new();
    for (i, ki) in k.iter().enumerate() {
        if *ki != 0 {
            acc += omega.exact(i)?.clone() * Integer::from(*ki);
        }
    }
    Some(acc)
}

/// <w~(s), k> for the hat or bar map at working precision.
pub(crate) fn inner_at(omega: &FrequencyVector, map: MapVariant, k: &[i64], s: &Float) -> Float {
    let prec = work_prec(omega) + s.prec();
    let w = omega.components();
    let mut terms = Vec::with_capacity(k.len());
    for (i, ki) in k.iter().enumerate() {
        if *ki == 0 {
            continue;
        }
        let shift = match map {
            MapVariant::Hat if i == 0 => Float::with_val(prec, s),
            MapVariant::Bar => Float::with_val(prec, s.pow(i as u32 + 1)),
            _ => Float::new(prec),
        };
        terms.push((Float::with_val(prec, &w[i] + &shift)) * *ki);
    }
    crate::numeric::compensated_sum(prec, &terms)
}

fn ln_abs(x: &Float) -> Float {
    if x.is_zero() {
        neg_inf(x.prec())
    } else {
        Float::with_val(x.prec(), x.abs_ref()).ln()
    }
}

fn finish(omega: &FrequencyVector, map: MapVariant, k: &[i64], s: Float, s_exact: Option<Rational>, tol: &Float) -> Option<ResonancePair> {
    if s.is_zero() {
        return None;
    }
    let res = inner_at(omega, map, k, &s);
    let residual_log = if s_exact.is_some() && exact_residual_zero(omega, map, k, s_exact.as_ref().unwrap()) {
        neg_inf(res.prec())
    } else {
        ln_abs(&res)
    };
    if Float::with_val(res.prec(), res.abs_ref()) >= *tol {
        return None;
    }
    let s = Float::with_val(omega.prec(), &s);
    Some(ResonancePair { k: k.to_vec(), s: Some(s), s_exact, residual_log: Some(residual_log) })
}

fn exact_residual_zero(omega: &FrequencyVector, map: MapVariant, k: &[i64], s: &Rational) -> bool {
    let mut acc = Rational::new();
    for (i, ki) in k.iter().enumerate() {
        if *ki == 0 {
            continue;
        }
        let Some(w) = omega.exact(i) else { return false };
        let shift = match map {
            MapVariant::Hat if i == 0 => s.clone(),
            MapVariant::Bar => Rational::from(s.pow(i as i32 + 1)),
            _ => Rational::new(),
        };
        acc += (w.clone() + shift) * Integer::from(*ki);
    }
    acc == 0
}

/// Hat map: k1 (w1 + s) + sum_{i>=2} k_i w_i = 0.
pub fn solve_hat(omega: &FrequencyVector, k: &[i64], tol: &Float) -> Option<ResonancePair> {
    if k.first().copied().unwrap_or(0) == 0 {
        return None;
    }
    let prec = work_prec(omega);
    let c = crate::numeric::dot_int(prec, k, &omega.components()[..k.len()]);
    let s = Float::with_val(prec, -c / k[0]);
    let s_exact = exact_dot(omega, k).map(|c| -c / Integer::from(k[0]));
    let s = match &s_exact {
        Some(q) => Float::with_val(prec, q),
        None => s,
    };
    finish(omega, MapVariant::Hat, k, s, s_exact, tol)
}

fn is_square(q: &Rational) -> Option<Rational> {
    if *q < 0 {
        return None;
    }
    let (n, d) = (q.numer(), q.denom());
    if n.is_perfect_square() && d.is_perfect_square() {
        Some(Rational::from((n.clone().sqrt(), d.clone().sqrt())))
    } else {
        None
    }
}

fn nearest_zero(a: Float, b: Float) -> Float {
    let candidates: Vec<Float> = [a, b].into_iter().filter(|r| !r.is_zero()).collect();
    let mut best: Option<Float> = None;
    for r in candidates {
        best = Some(match best {
            None => r,
            Some(cur) => match r.cmp_abs(&cur) {
                Some(Ordering::Less) => r,
                Some(Ordering::Equal) if r.is_sign_positive() => r,
                _ => cur,
            },
        });
    }
    best.unwrap_or_else(|| Float::new(53))
}

fn poly(c: &Float, k: &[i64], s: &Float) -> Float {
    let prec = c.prec();
    let mut acc = c.clone();
    for (i, ki) in k.iter().enumerate() {
        if *ki != 0 {
            acc += Float::with_val(prec, s.pow(i as u32 + 1)) * *ki;
        }
    }
    acc
}

/// Bar map: c + sum_i k_i s^i = 0 with c = <w~, k>; root nearest 0, refined by bisection.
pub fn solve_bar(omega: &FrequencyVector, k: &[i64], tol: &Float) -> Option<ResonancePair> {
    let prec = work_prec(omega);
    let c = crate::numeric::dot_int(prec, k, &omega.components()[..k.len()]);
    let degree = k.iter().rposition(|x| *x != 0)? + 1;
    let mut s_exact = None;
    let root = if degree <= 2 {
        let a = Float::with_val(prec, k.get(1).copied().unwrap_or(0));
        let b = Float::with_val(prec, k[0]);
        if a.is_zero() {
            if b.is_zero() {
                return None;
            }
            -Float::with_val(prec, &c / &b)
        } else {
            let disc = Float::with_val(prec, b.square_ref()) - Float::with_val(prec, &a * &c) * 4u32;
            if disc <= 0u32 {
                return None;
            }
            if let Some(cq) = exact_dot(omega, k) {
                let (aq, bq) = (Rational::from(k[1]), Rational::from(k[0]));
                let dq = (bq.clone() * &bq) - Rational::from(4) * &aq * &cq;
                if let Some(sq) = is_square(&dq) {
                    let two_a = Rational::from(2) * &aq;
                    let r1 = (-bq.clone() + &sq) / &two_a;
                    let r2 = (-bq - &sq) / &two_a;
                    let pick = nearest_zero(Float::with_val(prec, &r1), Float::with_val(prec, &r2));
                    let exact = if Float::with_val(prec, &r1) == pick { r1 } else { r2 };
                    s_exact = Some(exact);
                }
            }
            let sq = disc.sqrt();
            let q = if b.is_sign_negative() {
                Float::with_val(prec, &sq - &b) / 2u32
            } else {
                -(Float::with_val(prec, &b + &sq) / 2u32)
            };
            nearest_zero(Float::with_val(prec, &q / &a), Float::with_val(prec, &c / &q))
        }
    } else {
        if k[0] == 0 {
            return None;
        }
        let mut s = -Float::with_val(prec, &c / k[0]);
        for _ in 0..200 {
            let f = poly(&c, k, &s);
            let mut df = Float::new(prec);
            for (i, ki) in k.iter().enumerate() {
                if *ki != 0 {
                    df += Float::with_val(prec, (&s).pow(i as u32)) * (*ki * (i as i64 + 1));
                }
            }
            if df.is_zero() {
                return None;
            }
            let step = f / df;
            s -= &step;
            if step.is_zero() {
                break;
            }
        }
        s
    };
    if let Some(q) = &s_exact {
        return finish(omega, MapVariant::Bar, k, Float::with_val(prec, q), s_exact, tol);
    }
    let s = refine_by_bisection(&c, k, root, tol)?;
    finish(omega, MapVariant::Bar, k, s, None, tol)
}

fn refine_by_bisection(c: &Float, k: &[i64], root: Float, tol: &Float) -> Option<Float> {
    let prec = c.prec();
    let f0 = poly(c, k, &root);
    if Float::with_val(prec, f0.abs_ref()) < *tol {
        let mut h = Float::with_val(prec, root.abs_ref()) >> (prec / 2);
        for _ in 0..64 {
            let lo = Float::with_val(prec, &root - &h);
            let hi = Float::with_val(prec, &root + &h);
            let (fl, fh) = (poly(c, k, &lo), poly(c, k, &hi));
            if fl.is_zero() || fh.is_zero() || fl.is_sign_negative() != fh.is_sign_negative() {
                return Some(root);
            }
            h <<= 1;
        }
        return None;
    }
    let mut h = Float::with_val(prec, root.abs_ref()) >> 8;
    for _ in 0..64 {
        let mut lo = Float::with_val(prec, &root - &h);
        let mut hi = Float::with_val(prec, &root + &h);
        let mut fl = poly(c, k, &lo);
        let fh = poly(c, k, &hi);
        if fl.is_sign_negative() != fh.is_sign_negative() {
            for _ in 0..4 * prec {
                let mid = Float::with_val(prec, &lo + &hi) / 2u32;
                let fm = poly(c, k, &mid);
                if Float::with_val(prec, fm.abs_ref()) < *tol {
                    return Some(mid);
                }
                if fm.is_sign_negative() == fl.is_sign_negative() {
                    lo = mid;
                    fl = fm;
                } else {
                    hi = mid;
                }
            }
            return None;
        }
        h <<= 1;
    }
    None
}

fn solve(omega: &FrequencyVector, map: MapVariant, k: &[i64], tol: &Float) -> Option<ResonancePair> {
    match map {
        MapVariant::Hat => solve_hat(omega, k, tol),
        MapVariant::Bar => solve_bar(omega, k, tol),
        MapVariant::Const => Some(ResonancePair::free(k.to_vec())),
    }
}

fn dir2_ok(pair: &ResonancePair, tau: &Option<Float>) -> bool {
    let (Some(tau), Some(s)) = (tau, &pair.s) else { return true };
    let prec = s.prec() + 32;
    let lhs = Float::with_val(prec, pair.norm()).ln();
    let rhs = -Float::with_val(prec, s.abs_ref()).ln() / (Float::with_val(prec, tau) + 1u32);
    lhs < rhs
}

fn extends(prev: Option<&ResonancePair>, cand: &ResonancePair, growth: f64) -> bool {
    let Some(p) = prev else { return true };
    if (cand.norm() as f64) < growth * p.norm() as f64 || cand.norm() <= p.norm() {
        return false;
    }
    match (&p.s, &cand.s) {
        (Some(a), Some(b)) => b.cmp_abs(a) == Some(Ordering::Less),
        _ => true,
    }
}

fn embed(k2: [i64; 2], len: usize) -> Vec<i64> {
    let mut k = vec![0; len];
    k[0] = k2[0];
    k[1] = k2[1];
    k
}

/// Resonance data (k_j, s_j), j = 2, 3, ... for the given frequency map.
pub fn resonance_sequence(omega: &FrequencyVector, map: MapVariant, opts: &ResonanceOptions) -> Result<ResonanceSequence> {
    if opts.count == 0 {
        return Err(Error::Invalid("count must be >= 1".into()));
    }
    if omega.d() < 3 {
        return Err(Error::Invalid("resonance data needs d >= 3".into()));
    }
    let len = omega.d() - 1;
    let tol = &opts.tolerance;
    let mut pairs: Vec<ResonancePair> = vec![];

    if map == MapVariant::Const {
        if omega.witnesses.is_empty() {
            return Err(Error::Invalid("const map needs Liouville witnesses".into()));
        }
        let mut next_m = 2usize;
        while pairs.len() < opts.count {
            let pick = omega.witnesses.iter().enumerate().skip(next_m - 1).find(|(_, w)| {
                let (lo, hi) = omega.dot_enclosure(&w.k_bar);
                let nonzero = abs_enclosure(&lo, &hi).0 > 0u32;
                nonzero && extends(pairs.last(), &ResonancePair::free(w.k_bar.clone()), opts.growth)
            });
            match pick {
                Some((idx, w)) => {
                    pairs.push(ResonancePair::free(w.k_bar.clone()));
                    next_m = idx + 2;
                }
                None => break,
            }
        }
        let shortfall = (pairs.len() < opts.count).then(|| {
            format!(
                "only {} of {} witnesses with nonzero <w~,k> at {} bits satisfy the growth gap",
                pairs.len(),
                opts.count,
                omega.prec()
            )
        });
        return Ok(ResonanceSequence { pairs, branch: Branch::Witness, shortfall });
    }

    let w = omega.components();
    let first = dirichlet_best(&w[0], &w[1], opts.start_bound.max(2))?;
    if first.resonant {
        let mut m = first.k;
        if m[0] < 0 || (m[0] == 0 && m[1] < 0) {
            m = [-m[0], -m[1]];
        }
        let norm_of = |a: i64| sup_norm(&[a * m[0] + 1, a * m[1]]);
        let mut a: i64 = 1;
        while norm_of(a) < opts.start_bound {
            a += 1;
        }
        let mut tries = 0u64;
        while pairs.len() < opts.count && tries < 1_000_000 {
            tries += 1;
            let k = embed([a * m[0] + 1, a * m[1]], len);
            if let Some(p) = solve(omega, map, &k, tol) {
                if extends(pairs.last(), &p, opts.growth) && dir2_ok(&p, &opts.tau) {
                    pairs.push(p);
                }
            }
            a += 1;
        }
        let shortfall = (pairs.len() < opts.count).then(|| format!("resonant branch produced {} of {}", pairs.len(), opts.count));
        return Ok(ResonanceSequence { pairs, branch: Branch::Resonant { relation: m }, shortfall });
    }

    if let Some(p) = solve(omega, map, &embed(first.k, len), tol) {
        if dir2_ok(&p, &opts.tau) {
            pairs.push(p);
        }
    }
    let x = Float::with_val(omega.prec(), &w[1] / &w[0]);
    for (p, q) in convergents(&x, u64::MAX / 8) {
        if pairs.len() >= opts.count {
            break;
        }
        let k = embed([-p, q], len);
        if let Some(pair) = solve(omega, map, &k, tol) {
            if extends(pairs.last(), &pair, opts.growth) && dir2_ok(&pair, &opts.tau) {
                pairs.push(pair);
            }
        }
    }
    let shortfall = (pairs.len() < opts.count).then(|| {
        format!(
            "convergents trustworthy at {} bits gave {} of {} pairs with growth {}",
            omega.prec(),
            pairs.len(),
            opts.count,
            opts.growth
        )
    });
    Ok(ResonanceSequence { pairs, branch: Branch::Generic, shortfall })
}
