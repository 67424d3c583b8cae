//! The truncated families H_n(θ, r) = <ω(s), r> - Σ_j φ_j(s) sin(2π<k_j, θ~>), s = r_d.

use std::fmt;

use rug::ops::Pow;
use rug::Float;
use serde::{Deserialize, Serialize};

use crate::arithmetic::{FrequencyVector, MapVariant, ResonancePair};
use crate::error::{Error, Result};
use crate::flow::PhaseState;
use crate::numeric::{self, compensated_sum, dot_int, sin_cos_2pi, two_pi, LogAmplitude};

mod serial;
mod tail;

pub use tail::{choose_next_k, lipschitz_bound, tail_bound, Horizon, NextK, TailGrowth, TH2_MARGIN};

/// ω(s) for one of the three frequency maps.
#[derive(Clone, Debug)]
pub struct FrequencyMap {
    pub variant: MapVariant,
    pub base: FrequencyVector,
}

impl FrequencyMap {
    pub fn new(variant: MapVariant, base: FrequencyVector) -> Self {
        FrequencyMap { variant, base }
    }

    pub fn d(&self) -> usize {
        self.base.d()
    }

    fn wp(&self, s: &Float) -> u32 {
        self.base.prec().max(s.prec()) + 64
    }

    pub fn eval(&self, s: &Float) -> Vec<Float> {
        let prec = self.wp(s);
        let d = self.d();
        self.base
            .components()
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let mut x = Float::with_val(prec, w);
                match self.variant {
                    MapVariant::Hat if i == 0 => x += s,
                    MapVariant::Bar if i + 1 < d => x += Float::with_val(prec, s.pow(i as u32 + 1)),
                    _ => {}
                }
                x
            })
            .collect()
    }

    /// ∂_s ω(s).
    pub fn deriv(&self, s: &Float) -> Vec<Float> {
        let prec = self.wp(s);
        let d = self.d();
        (0..d)
            .map(|i| match self.variant {
                MapVariant::Hat if i == 0 => Float::with_val(prec, 1u32),
                MapVariant::Bar if i + 1 < d => {
                    Float::with_val(prec, s.pow(i as u32)) * (i as u32 + 1)
                }
                _ => Float::new(prec),
            })
            .collect()
    }

    /// ∂²_s ω(s).
    pub fn deriv2(&self, s: &Float) -> Vec<Float> {
        let prec = self.wp(s);
        let d = self.d();
        (0..d)
            .map(|i| match self.variant {
                MapVariant::Bar if i >= 1 && i + 1 < d => {
                    Float::with_val(prec, s.pow(i as u32 - 1)) * ((i as u32 + 1) * i as u32)
                }
                _ => Float::new(prec),
            })
            .collect()
    }

    /// <ω~(s), k>.
    pub fn inner(&self, k: &[i64], s: &Float) -> Float {
        let w = self.eval(s);
        dot_int(w[0].prec(), k, &w[..k.len()])
    }

    /// ∂_s <ω~(s), k>.
    pub fn inner_deriv(&self, k: &[i64], s: &Float) -> Float {
        let w = self.deriv(s);
        dot_int(w[0].prec(), k, &w[..k.len()])
    }

    /// Absolute uncertainty of <ω~(s), k> inherited from the base frequency.
    pub fn inner_radius(&self, k: &[i64]) -> Float {
        let prec = self.base.prec() + 64;
        let mut r = Float::new(prec);
        for (ki, ri) in k.iter().zip(self.base.radius()) {
            r += Float::with_val(prec, ri * ki.unsigned_abs());
        }
        r
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    I,
    Ii,
    Iii,
    Iv,
    V,
    Vi,
    Vii,
}

impl Variant {
    pub const ALL: [Variant; 7] = [Variant::I, Variant::Ii, Variant::Iii, Variant::Iv, Variant::V, Variant::Vi, Variant::Vii];

    pub fn map_allowed(self, map: MapVariant) -> bool {
        match self {
            Variant::I => matches!(map, MapVariant::Hat | MapVariant::Bar),
            Variant::Ii => map == MapVariant::Hat,
            _ => map == MapVariant::Const,
        }
    }

    /// Carries the factor <ω~, k_j>.
    pub fn has_inner_factor(self) -> bool {
        matches!(self, Variant::V | Variant::Vi | Variant::Vii)
    }

    pub fn parse(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_lowercase()))
            .map_err(|_| Error::Parse(format!("unknown schedule variant {s:?}")))
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Variant::I => "i",
            Variant::Ii => "ii",
            Variant::Iii => "iii",
            Variant::Iv => "iv",
            Variant::V => "v",
            Variant::Vi => "vi",
            Variant::Vii => "vii",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug)]
pub struct CouplingSchedule {
    pub variant: Variant,
    /// C of variant ii.
    pub c: Option<Float>,
    /// l of variant vi.
    pub l: Option<u32>,
}

impl CouplingSchedule {
    pub fn new(variant: Variant) -> Self {
        CouplingSchedule { variant, c: None, l: None }
    }

    pub fn with_c(mut self, c: Float) -> Self {
        self.c = Some(c);
        self
    }

    pub fn with_l(mut self, l: u32) -> Self {
        self.l = Some(l);
        self
    }

    fn validate(&self) -> Result<()> {
        match self.variant {
            Variant::Ii => match &self.c {
                Some(c) if *c > 0u32 => Ok(()),
                _ => Err(Error::Invalid("variant ii needs C > 0".into())),
            },
            Variant::Vi if self.l.is_none() => Err(Error::Invalid("variant vi needs l".into())),
            _ => Ok(()),
        }
    }
}

/// φ(s) = b · s^a · exp(e0 + N s^p), with b present only for variants v-vii.
#[derive(Clone, Debug)]
pub struct Shape {
    pub b: Option<Float>,
    pub a: u32,
    pub e0: Float,
    pub n_exp: Float,
    pub p: u32,
}

impl Shape {
    fn prefactor(&self, prec: u32) -> LogAmplitude {
        match &self.b {
            Some(b) => LogAmplitude::from_float(b),
            None => LogAmplitude::one(prec),
        }
    }

    fn exponent(&self, s: &Float) -> Float {
        let prec = self.e0.prec().max(s.prec());
        let mut g = Float::with_val(prec, &self.e0);
        if !self.n_exp.is_zero() {
            g += Float::with_val(prec, s.pow(self.p)) * &self.n_exp;
        }
        g
    }

    fn pow_s(s: &Float, e: u32) -> LogAmplitude {
        LogAmplitude::from_float(s).powi(e as i32)
    }

    /// a + pN s^p
    fn h(&self, s: &Float) -> Float {
        let prec = self.e0.prec().max(s.prec());
        Float::with_val(prec, s.pow(self.p)) * &self.n_exp * self.p + self.a
    }

    /// φ without the b factor.
    pub fn rest(&self, s: &Float) -> LogAmplitude {
        Self::pow_s(s, self.a).scale_exp(&self.exponent(s))
    }

    pub fn rest_deriv(&self, s: &Float) -> LogAmplitude {
        let core = Self::pow_s(s, self.a - 1).scale_exp(&self.exponent(s));
        &core * &LogAmplitude::from_float(&self.h(s))
    }

    pub fn rest_deriv2(&self, s: &Float) -> LogAmplitude {
        let prec = self.e0.prec().max(s.prec());
        let h = self.h(s);
        let pns = Float::with_val(prec, s.pow(self.p)) * &self.n_exp * self.p;
        let br = Float::with_val(prec, &h * (pns.clone() + (self.a as i64 - 1))) + pns * self.p;
        let core = Self::pow_s(s, self.a - 2);
        &core.scale_exp(&self.exponent(s)) * &LogAmplitude::from_float(&br)
    }

    pub fn value(&self, s: &Float) -> LogAmplitude {
        &self.prefactor(s.prec()) * &self.rest(s)
    }

    pub fn deriv(&self, s: &Float) -> LogAmplitude {
        &self.prefactor(s.prec()) * &self.rest_deriv(s)
    }

    pub fn deriv2(&self, s: &Float) -> LogAmplitude {
        &self.prefactor(s.prec()) * &self.rest_deriv2(s)
    }

    /// Upper bound of |φ^{(m)}| on |s| <= x (m <= 2), from the majorant series.
    pub fn majorant(&self, x: &Float, m: u32) -> LogAmplitude {
        let x = Float::with_val(x.prec(), x.abs_ref());
        let mut sh = self.clone();
        sh.n_exp = Float::with_val(self.n_exp.prec(), self.n_exp.abs_ref());
        sh.b = self.b.as_ref().map(|b| Float::with_val(b.prec(), b.abs_ref()));
        let v = match m {
            0 => sh.value(&x),
            1 => sh.deriv(&x),
            2 => sh.deriv2(&x),
            _ => panic!("majorant order {m} > 2"),
        };
        v.abs()
    }
}

/// H_n with n = pairs.len() + 1; pairs[0] is j = 2.
#[derive(Clone, Debug)]
pub struct HamiltonianFamily {
    map: FrequencyMap,
    schedule: CouplingSchedule,
    pairs: Vec<ResonancePair>,
    base_inner: Vec<Float>,
    tolerance: Float,
}

impl HamiltonianFamily {
    pub fn new(map: FrequencyMap, schedule: CouplingSchedule, pairs: Vec<ResonancePair>, tolerance: Float) -> Result<Self> {
        if map.d() < 3 {
            return Err(Error::Invalid("family dimension must be >= 3".into()));
        }
        if !schedule.variant.map_allowed(map.variant) {
            return Err(Error::VariantMismatch(format!(
                "schedule {} cannot use the {:?} frequency map",
                schedule.variant, map.variant
            )));
        }
        schedule.validate()?;
        if !(tolerance > 0u32) {
            return Err(Error::Invalid("residual tolerance must be positive".into()));
        }
        let mut fam = HamiltonianFamily { map, schedule, pairs: vec![], base_inner: vec![], tolerance };
        for p in pairs {
            fam.push(p)?;
        }
        Ok(fam)
    }

    fn push(&mut self, p: ResonancePair) -> Result<()> {
        let d = self.d();
        if p.k.len() != d - 1 {
            return Err(Error::Invalid(format!("k has length {}, expected {}", p.k.len(), d - 1)));
        }
        if p.k.iter().all(|x| *x == 0) {
            return Err(Error::Invalid("k = 0".into()));
        }
        let j = self.pairs.len() + 2;
        let (lo, hi) = self.map.base.dot_enclosure(&p.k);
        let b = Float::with_val(lo.prec(), &lo + &hi) / 2u32;
        if self.schedule.variant.has_inner_factor() {
            let (alo, _) = numeric::abs_enclosure(&lo, &hi);
            if !(alo > 0u32) {
                return Err(Error::Resonance(format!(
                    "<w~, k_{j}> is not separated from 0 at {} bits",
                    self.prec()
                )));
            }
        }
        self.base_inner.push(b);
        self.pairs.push(p);
        Ok(())
    }

    pub fn d(&self) -> usize {
        self.map.d()
    }

    pub fn n(&self) -> usize {
        self.pairs.len() + 1
    }

    pub fn prec(&self) -> u32 {
        self.map.base.prec()
    }

    pub fn map(&self) -> &FrequencyMap {
        &self.map
    }

    pub fn schedule(&self) -> &CouplingSchedule {
        &self.schedule
    }

    pub fn variant(&self) -> Variant {
        self.schedule.variant
    }

    pub fn tolerance(&self) -> &Float {
        &self.tolerance
    }

    pub fn pairs(&self) -> &[ResonancePair] {
        &self.pairs
    }

    /// Pair with index j (2 <= j <= n).
    pub fn pair(&self, j: usize) -> Result<&ResonancePair> {
        if j < 2 || j > self.n() {
            return Err(Error::Index(format!("pair index {j} outside 2..={}", self.n())));
        }
        Ok(&self.pairs[j - 2])
    }

    /// <ω~, k_j> at the base frequency.
    pub fn base_inner(&self, j: usize) -> &Float {
        &self.base_inner[j - 2]
    }

    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n < 1 || n > self.n() {
            return Err(Error::Index(format!("truncation {n} outside 1..={}", self.n())));
        }
        let mut f = self.clone();
        f.pairs.truncate(n - 1);
        f.base_inner.truncate(n - 1);
        Ok(f)
    }

    pub fn with_pair(&self, p: ResonancePair) -> Result<Self> {
        let mut f = self.clone();
        f.push(p)?;
        Ok(f)
    }

    pub fn wp(&self) -> u32 {
        self.prec() + 64
    }

    /// Shape of φ_j for a pair of norm `norm`; `b` is <ω~, k_j> for v-vii.
    pub fn shape_for(&self, j: usize, norm: &Float, b: Option<Float>) -> Shape {
        let prec = self.wp().max(norm.prec());
        let jf = Float::with_val(prec, j as u32);
        let zero = Float::new(prec);
        let (a, e0, n_exp, p) = match self.schedule.variant {
            Variant::I | Variant::Iii => (j as u32, Float::with_val(prec, -(jf * norm)), zero, 1),
            Variant::Ii => {
                let c = self.schedule.c.as_ref().expect("validated");
                (j as u32, Float::with_val(prec, -(Float::with_val(prec, c * norm) / 2u32)), zero, 1)
            }
            Variant::Iv => (2, Float::with_val(prec, -(jf * norm)), zero, 1),
            Variant::V => (j as u32, zero, Float::with_val(prec, norm), 1),
            Variant::Vi => {
                let l = self.schedule.l.expect("validated");
                let e = Float::with_val(prec, norm.ln_ref()) * (l as i64 + 1) + Float::with_val(prec, jf.ln_ref()) * 2u32;
                (j as u32, -e, zero, 1)
            }
            Variant::Vii => (j as u32, zero, Float::with_val(prec, norm), 2),
        };
        let b = if self.schedule.variant.has_inner_factor() { b } else { None };
        Shape { b, a, e0, n_exp, p }
    }

    pub fn shape(&self, j: usize) -> Shape {
        let norm = Float::with_val(self.wp(), self.pairs[j - 2].norm());
        self.shape_for(j, &norm, Some(self.base_inner[j - 2].clone()))
    }

    /// (φ_j(s), φ_j'(s)).
    pub fn coupling(&self, j: usize, s: &Float) -> (LogAmplitude, LogAmplitude) {
        let sh = self.shape(j);
        (sh.value(s), sh.deriv(s))
    }

    fn phases(&self, theta: &[Float]) -> Vec<Float> {
        let prec = self.wp().max(theta[0].prec()) + 64;
        self.pairs.iter().map(|p| dot_int(prec, &p.k, &theta[..p.k.len()])).collect()
    }

    fn check_dim(&self, z: &PhaseState) {
        assert_eq!(z.d(), self.d(), "state dimension {} does not match family dimension {}", z.d(), self.d());
    }

    /// H_n(z).
    pub fn eval_h(&self, z: &PhaseState) -> Float {
        self.check_dim(z);
        let s = z.s();
        let prec = self.wp().max(s.prec());
        let w = self.map.eval(s);
        let mut terms: Vec<Float> = w.iter().zip(&z.r).map(|(wi, ri)| Float::with_val(prec, wi * ri)).collect();
        for (idx, a) in self.phases(&z.theta).iter().enumerate() {
            let (sn, _) = sin_cos_2pi(a, prec);
            if sn.is_zero() {
                continue;
            }
            let phi = self.shape(idx + 2).value(s).to_float(prec);
            terms.push(-(phi * sn));
        }
        compensated_sum(prec, &terms)
    }

    /// (θ', r') = (∂_r H, -∂_θ H).
    pub fn vector_field(&self, z: &PhaseState) -> (Vec<Float>, Vec<Float>) {
        self.check_dim(z);
        let d = self.d();
        let s = z.s();
        let prec = self.wp().max(s.prec());
        let w = self.map.eval(s);
        let dw = self.map.deriv(s);
        let mut theta_dot: Vec<Float> = w.iter().map(|x| Float::with_val(prec, x)).collect();
        let mut td = vec![Float::with_val(prec, &w[d - 1])];
        for i in 0..d - 1 {
            if !dw[i].is_zero() {
                td.push(Float::with_val(prec, &dw[i] * &z.r[i]));
            }
        }
        let mut r_terms: Vec<Vec<Float>> = vec![vec![]; d - 1];
        let tp = two_pi(prec);
        for (idx, a) in self.phases(&z.theta).iter().enumerate() {
            let j = idx + 2;
            let sh = self.shape(j);
            let (sn, cs) = sin_cos_2pi(a, prec);
            let dphi = sh.deriv(s).to_float(prec);
            td.push(-(dphi * &sn));
            let phi = sh.value(s).to_float(prec);
            let amp = Float::with_val(prec, &phi * &cs) * &tp;
            for (i, ki) in self.pairs[idx].k.iter().enumerate() {
                if *ki != 0 {
                    r_terms[i].push(Float::with_val(prec, &amp * *ki));
                }
            }
        }
        theta_dot[d - 1] = compensated_sum(prec, &td);
        let mut r_dot: Vec<Float> = r_terms.iter().map(|t| compensated_sum(prec, t)).collect();
        r_dot.push(Float::new(prec));
        (theta_dot, r_dot)
    }
}
