use rug::ops::Pow;
use rug::Float;
use serde::ser::SerializeSeq;
use serde::{Serialize, Serializer};

use crate::arithmetic::MapVariant;
use crate::error::{Error, Result};
use crate::flow::PhaseState;
use crate::hamiltonian::{HamiltonianFamily, Variant};
use crate::numeric::{compensated_sum, dot_int, sin_cos_2pi, to_decimal, two_pi, LogAmplitude};

/// c · cos(2π<k, Θ~>).
#[derive(Clone, Debug, PartialEq)]
pub struct TrigTerm {
    pub k: Vec<i64>,
    pub coeff: LogAmplitude,
}

/// Finite cosine sum with distinct frequencies.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrigPolynomial {
    pub terms: Vec<TrigTerm>,
}

impl TrigPolynomial {
    pub fn add_term(&mut self, k: Vec<i64>, coeff: LogAmplitude) {
        if let Some(t) = self.terms.iter_mut().find(|t| t.k == k) {
            t.coeff = t.coeff.add(&coeff);
        } else {
            self.terms.push(TrigTerm { k, coeff });
        }
        self.terms.retain(|t| !t.coeff.is_zero());
    }

    pub fn eval(&self, theta: &[Float], prec: u32) -> Float {
        let terms: Vec<Float> = self
            .terms
            .iter()
            .map(|t| {
                let a = dot_int(prec + 64, &t.k, &theta[..t.k.len()]);
                let (_, c) = sin_cos_2pi(&a, prec);
                c * t.coeff.to_float(prec)
            })
            .collect();
        compensated_sum(prec, &terms)
    }

    /// ∂_Θ~ of the sum: -2π Σ c k sin(2π<k, Θ~>).
    pub fn gradient(&self, theta: &[Float], prec: u32) -> Vec<Float> {
        let m = self.terms.first().map(|t| t.k.len()).unwrap_or(0);
        let mut parts: Vec<Vec<Float>> = vec![vec![]; m];
        let tp = two_pi(prec);
        for t in &self.terms {
            let a = dot_int(prec + 64, &t.k, &theta[..t.k.len()]);
            let (sn, _) = sin_cos_2pi(&a, prec);
            let amp = -(sn * t.coeff.to_float(prec) * &tp);
            for (i, ki) in t.k.iter().enumerate() {
                parts[i].push(Float::with_val(prec, &amp * *ki));
            }
        }
        parts.iter().map(|p| compensated_sum(prec, p)).collect()
    }
}

#[derive(Serialize)]
struct TermRepr<'a> {
    k: &'a [i64],
    log_coeff: String,
    sign: i8,
}

impl Serialize for TrigPolynomial {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.terms.len()))?;
        for t in &self.terms {
            seq.serialize_element(&TermRepr { k: &t.k, log_coeff: to_decimal(t.coeff.log_mag()), sign: t.coeff.sign() })?;
        }
        seq.end()
    }
}

fn check_supported(fam: &HamiltonianFamily) -> Result<()> {
    if fam.variant() == Variant::Iv {
        return Err(Error::Unsupported(
            "variant iv has no Birkhoff normal form statement: every φ_j starts at s^2".into(),
        ));
    }
    Ok(())
}

fn ln_factorial(m: u32, prec: u32) -> Float {
    let mut acc = Float::new(prec);
    for i in 2..=m {
        acc += Float::with_val(prec, i).ln();
    }
    acc
}

/// Coefficients of 1/<ω~(s), k> in powers of s, up to s^m.
fn reciprocal_series(fam: &HamiltonianFamily, j: usize, m: usize, prec: u32) -> Vec<Float> {
    let k = &fam.pairs()[j - 2].k;
    let d = fam.d();
    let mut beta = vec![Float::with_val(prec, fam.base_inner(j))];
    match fam.map().variant {
        MapVariant::Hat => beta.push(Float::with_val(prec, k[0])),
        MapVariant::Bar => beta.extend((0..d - 1).map(|i| Float::with_val(prec, k[i]))),
        MapVariant::Const => {}
    }
    let mut c = vec![Float::with_val(prec, beta[0].recip_ref())];
    for q in 1..=m {
        let terms: Vec<Float> =
            (1..=q.min(beta.len() - 1)).map(|i| Float::with_val(prec, &beta[i] * &c[q - i])).collect();
        c.push(-(compensated_sum(prec, &terms) / &beta[0]));
    }
    c
}

/// Coefficient of s^p in g_j(s) = φ_j(s) / <ω~(s), k_j>.
fn g_coefficient(fam: &HamiltonianFamily, j: usize, p: u32, prec: u32) -> LogAmplitude {
    let zero = LogAmplitude::zero(prec);
    let j32 = j as u32;
    if p < j32 {
        return zero;
    }
    let l = p - j32;
    let sh = fam.shape(j);
    let norm = Float::with_val(prec, fam.pairs()[j - 2].norm());
    match fam.variant() {
        Variant::V => {
            let lm = Float::with_val(prec, norm.ln_ref()) * l - ln_factorial(l, prec);
            LogAmplitude::exp(lm)
        }
        Variant::Vii => {
            if l % 2 == 1 {
                return zero;
            }
            let m = l / 2;
            let lm = Float::with_val(prec, norm.ln_ref()) * m - ln_factorial(m, prec);
            LogAmplitude::exp(lm)
        }
        Variant::Vi => {
            if l == 0 {
                LogAmplitude::exp(Float::with_val(prec, &sh.e0))
            } else {
                zero
            }
        }
        _ => {
            let c = reciprocal_series(fam, j, l as usize, prec);
            LogAmplitude::from_float(&c[l as usize]).scale_exp(&sh.e0)
        }
    }
}

/// Coefficient of s^p of the formal f with H(θ, r + ∂_θ f) = <ω(s), r>, f = -(1/2π) Σ g_j cos.
pub fn bnf_coefficient(fam: &HamiltonianFamily, p: u32) -> Result<TrigPolynomial> {
    check_supported(fam)?;
    if p < 2 {
        return Err(Error::Invalid(format!("order p = {p} < 2")));
    }
    let prec = fam.wp();
    let ln2pi = two_pi(prec).ln();
    let mut poly = TrigPolynomial::default();
    for j in 2..=fam.n().min(p as usize) {
        let c = g_coefficient(fam, j, p, prec);
        if c.is_zero() {
            continue;
        }
        let c = -c.scale_exp(&Float::with_val(prec, -&ln2pi));
        poly.add_term(fam.pairs()[j - 2].k.clone(), c);
    }
    Ok(poly)
}

fn probe_angles(d: usize, prec: u32) -> Vec<Float> {
    let golden = (Float::with_val(prec, 5).sqrt() - 1u32) / 2u32;
    (0..d)
        .map(|i| {
            let x = Float::with_val(prec, &golden * (i as u32 + 1)) + 0.1 * i as f64;
            let f = Float::with_val(prec, x.floor_ref());
            x - f
        })
        .collect()
}

/// Log-log slope of |H_n(Θ, r + ∂_Θ f_P) - <ω(s), r>| over s = s0·{1e-2, 1e-3, 1e-4}.
pub fn bnf_remainder_order(fam: &HamiltonianFamily, n: usize, order: u32) -> Result<f64> {
    check_supported(fam)?;
    if order < 2 {
        return Err(Error::Invalid(format!("order P = {order} < 2")));
    }
    let fam_n = fam.truncated(n)?;
    if fam_n.n() == 1 {
        return Ok(f64::INFINITY);
    }
    let prec = fam_n.wp();
    let d = fam_n.d();
    let coeffs = (2..=order).map(|p| bnf_coefficient(&fam_n, p)).collect::<Result<Vec<_>>>()?;

    let mut s0 = Float::with_val(prec, 1u32);
    for j in 2..=fam_n.n() {
        let p = &fam_n.pairs()[j - 2];
        let lim = match fam_n.map().variant {
            MapVariant::Const => Float::with_val(prec, p.norm()).recip(),
            _ => {
                let beta = crate::numeric::l1_norm(&p.k);
                Float::with_val(prec, fam_n.base_inner(j).abs_ref()) / beta
            }
        };
        if lim < s0 {
            s0 = lim;
        }
    }
    let theta = probe_angles(d, prec);
    let mut pts = vec![];
    let mut scale = Float::new(prec);
    for e in [2u32, 3, 4] {
        let s = Float::with_val(prec, &s0 / Float::with_val(prec, 10u32).pow(e));
        let mut grad = vec![Float::new(prec); d - 1];
        let mut sp = Float::with_val(prec, &s * &s);
        for poly in &coeffs {
            for (g, x) in grad.iter_mut().zip(poly.gradient(&theta, prec)) {
                *g += Float::with_val(prec, &x * &sp);
            }
            sp *= &s;
        }
        let mut r = grad;
        r.push(s.clone());
        let z = PhaseState { theta: theta.clone(), r, winding: None };
        let w = fam_n.map().eval(&s);
        let res = Float::with_val(prec, fam_n.eval_h(&z) - Float::with_val(prec, &w[d - 1] * &s)).abs();
        let lead = fam_n.coupling(2, &s).0.abs().to_float(prec);
        if lead > scale {
            scale = lead;
        }
        pts.push((s, res));
    }
    let floor = Float::with_val(prec, &scale * Float::with_val(prec, Float::i_exp(1, -(prec as i32) + 40)));
    let usable: Vec<(f64, f64)> = pts
        .iter()
        .filter(|(_, r)| *r > floor)
        .map(|(s, r)| (s.clone().log10().to_f64(), r.clone().log10().to_f64()))
        .collect();
    if usable.len() < 2 {
        return Ok(f64::INFINITY);
    }
    let m = usable.len() as f64;
    let mx = usable.iter().map(|p| p.0).sum::<f64>() / m;
    let my = usable.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = usable.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = usable.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}
