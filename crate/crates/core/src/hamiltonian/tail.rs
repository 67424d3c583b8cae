use std::cmp::Ordering;

use rug::ops::Pow;
use rug::Float;

use super::{HamiltonianFamily, Variant};
use crate::arithmetic::ResonancePair;
use crate::error::{Error, Result};
use crate::flow::{gronwall_bound, gronwall_inverse};
use crate::numeric::{pi, LogAmplitude};

/// Relative margin by which ρ must stay below C/(8πd) in variant ii.
pub const TH2_MARGIN: f64 = 1e-6;

/// Norms of k_j beyond the built pairs: N_{j+1} = ratio · N_j.
#[derive(Clone, Debug)]
pub struct TailGrowth {
    pub ratio: f64,
    /// Norm of k_2 when the family has no pairs.
    pub first_norm: u64,
    /// u with |<ω~, k_j>| <= e^{-u N_j}; variants v-vii only.
    pub min_decay: Option<Float>,
}

impl TailGrowth {
    pub fn new(ratio: f64) -> Self {
        TailGrowth { ratio, first_norm: 10, min_decay: None }
    }

    pub fn with_decay(mut self, u: Float) -> Self {
        self.min_decay = Some(u);
        self
    }
}

fn check_domain(fam: &HamiltonianFamily, delta: &Float, rho: &Float) -> Result<()> {
    if !(*delta > 0u32 && *rho > 0u32) {
        return Err(Error::Invalid("tail bound needs Δ > 0 and ρ > 0".into()));
    }
    if fam.variant() == Variant::Ii {
        let c = fam.schedule().c.as_ref().expect("validated");
        let prec = fam.wp();
        let limit = Float::with_val(prec, c / (pi(prec) * 8u32 * fam.d() as u32)) * (1.0 - TH2_MARGIN);
        if *rho >= limit {
            return Err(Error::Invalid(format!(
                "variant ii needs ρ < C/(8πd)·(1 - {TH2_MARGIN:e}) = {}",
                limit.to_f64()
            )));
        }
    }
    Ok(())
}

/// Upper bound of sup |φ_j sin(2π<k_j,θ~>)| over |s| <= R, |Im θ| <= ρ.
fn term(fam: &HamiltonianFamily, j: usize, norm: &Float, b: Option<Float>, r: &Float, rho: &Float) -> LogAmplitude {
    let sh = fam.shape_for(j, norm, b);
    let strip = Float::with_val(fam.wp(), pi(fam.wp()) * 2u32 * fam.d() as u32) * rho * norm;
    sh.majorant(r, 0).scale_exp(&strip)
}

/// Coefficient of N_j in ln(term_j).
fn kappa(fam: &HamiltonianFamily, j: usize, r: &Float, rho: &Float, u: Option<&Float>) -> Float {
    let prec = fam.wp();
    let strip = Float::with_val(prec, pi(prec) * 2u32 * fam.d() as u32) * rho;
    let u = || u.cloned().unwrap_or_else(|| Float::new(prec));
    let k = match fam.variant() {
        Variant::I | Variant::Iii | Variant::Iv => Float::with_val(prec, -(j as i64)),
        Variant::Ii => -Float::with_val(prec, fam.schedule().c.as_ref().unwrap()) / 2u32,
        Variant::V => Float::with_val(prec, r - u()),
        Variant::Vi => -u(),
        Variant::Vii => Float::with_val(prec, r.clone().square() - u()),
    };
    k + strip
}

fn norm_law(fam: &HamiltonianFamily, growth: &TailGrowth, j: usize) -> Float {
    let prec = fam.wp();
    let (base_j, base_n) = match fam.pairs().last() {
        Some(p) => (fam.n(), Float::with_val(prec, p.norm())),
        None => (1, Float::with_val(prec, growth.first_norm) / growth.ratio),
    };
    Float::with_val(prec, growth.ratio).pow((j - base_j) as u32) * base_n
}

/// Bound on ||H_to - H_from||_{Δ,ρ}; `to = None` is the infinite tail (needs a growth law).
pub fn tail_bound(
    fam: &HamiltonianFamily,
    from: usize,
    to: Option<usize>,
    delta: &Float,
    rho: &Float,
    growth: Option<&TailGrowth>,
) -> Result<LogAmplitude> {
    check_domain(fam, delta, rho)?;
    let prec = fam.wp();
    let r = Float::with_val(prec, delta + rho);
    let from = from.max(1);
    if let Some(t) = to {
        if t <= from {
            return Ok(LogAmplitude::zero(prec));
        }
    }
    let built_to = to.unwrap_or(usize::MAX).min(fam.n());
    let mut terms = vec![];
    for j in from + 1..=built_to {
        let norm = Float::with_val(prec, fam.pair(j)?.norm());
        terms.push(term(fam, j, &norm, Some(fam.base_inner(j).clone()), &r, rho));
    }
    if to.is_some_and(|t| t <= fam.n()) {
        return Ok(LogAmplitude::sum(prec, &terms));
    }
    let g = growth.ok_or_else(|| Error::Invalid("terms beyond the built pairs need a growth law".into()))?;
    if !(g.ratio >= 1.0) {
        return Err(Error::Invalid("growth ratio must be >= 1".into()));
    }
    let u = g.min_decay.as_ref();
    if fam.variant().has_inner_factor() && u.is_none() {
        return Err(Error::Invalid(format!("variant {} needs a decay rate u for extrapolated <w~,k_j>", fam.variant())));
    }
    let extrap = |j: usize| {
        let n = norm_law(fam, g, j);
        let b = u.map(|u| Float::with_val(prec, -(Float::with_val(prec, u * &n))).exp());
        (term(fam, j, &n, b, &r, rho), n)
    };
    let start = from.max(fam.n()) + 1;
    if let Some(t) = to {
        for j in start..=t {
            terms.push(extrap(j).0);
        }
        return Ok(LogAmplitude::sum(prec, &terms));
    }
    let j_dependent = matches!(fam.variant(), Variant::I | Variant::Iii | Variant::Iv);
    let da = if fam.variant() == Variant::Iv { 0 } else { 1 };
    let ln_r = Float::with_val(prec, r.ln_ref());
    let ln2 = Float::with_val(prec, 2u32).ln();
    for j in start..start + 100_000 {
        let (t, n) = extrap(j);
        terms.push(t);
        let k = kappa(fam, j, &r, rho, u);
        if k >= 0u32 {
            if j_dependent {
                continue;
            }
            return Err(Error::DivergentBound(format!(
                "terms of variant {} grow like exp({} N_j) on this domain",
                fam.variant(),
                k.to_f64()
            )));
        }
        let dj = Float::with_val(prec, &ln_r * da) + k * (g.ratio - 1.0) * n;
        if dj <= Float::with_val(prec, -&ln2) {
            let next = extrap(j + 1).0;
            terms.push(next.scale_exp(&ln2));
            return Ok(LogAmplitude::sum(prec, &terms));
        }
    }
    Err(Error::DivergentBound(format!(
        "tail terms are not eventually geometric (ratio {}, Δ+ρ = {})",
        g.ratio,
        r.to_f64()
    )))
}

/// Domain and time horizon over which a perturbed orbit must stay close.
#[derive(Clone, Debug)]
pub struct Horizon {
    pub s_radius: Float,
    /// Complex fattening used by the Cauchy estimates.
    pub rho: Float,
    pub time: Float,
    /// Lipschitz constant of the field on the domain.
    pub lipschitz: Float,
}

#[derive(Clone, Debug)]
pub struct NextK {
    pub pair: ResonancePair,
    pub c1_bound: LogAmplitude,
    pub divergence: Float,
}

fn by_norm_lex(a: &ResonancePair, b: &ResonancePair) -> Ordering {
    a.norm().cmp(&b.norm()).then_with(|| a.k.cmp(&b.k))
}

fn cauchy_factor(rho: &Float) -> Float {
    let inv = Float::with_val(rho.prec(), rho.recip_ref());
    let inv2 = Float::with_val(rho.prec(), inv.clone().square());
    (if inv > inv2 { inv } else { inv2 }) * 2u32
}

/// Smallest-norm candidate for k_{n+1} whose C¹ perturbation, pushed through Gronwall, stays below δ.
pub fn choose_next_k(
    fam: &HamiltonianFamily,
    delta: &Float,
    horizon: &Horizon,
    candidates: &[ResonancePair],
    property: Option<&dyn Fn(&HamiltonianFamily) -> bool>,
) -> Result<NextK> {
    if candidates.is_empty() {
        return Err(Error::NoCandidate("candidate list is empty".into()));
    }
    if !(*delta > 0u32) {
        return Err(Error::Invalid("δ must be positive".into()));
    }
    let prec = fam.wp();
    let n = fam.n();
    let mut order: Vec<&ResonancePair> = candidates.iter().collect();
    order.sort_by(|a, b| by_norm_lex(a, b));
    let factor = cauchy_factor(&horizon.rho);
    let mut last: Option<(LogAmplitude, Float, Float)> = None;
    for cand in order {
        let Ok(ext) = fam.with_pair(cand.clone()) else { continue };
        let m = tail_bound(&ext, n, Some(n + 1), &horizon.s_radius, &horizon.rho, None)?;
        let c1 = m.scale_exp(&Float::with_val(prec, factor.ln_ref()));
        let div = gronwall_bound(&c1.to_float(prec), &horizon.lipschitz, &horizon.time);
        let u = ext.variant().has_inner_factor().then(|| {
            -Float::with_val(prec, ext.base_inner(n + 1).abs_ref()).ln() / cand.norm()
        });
        let r = Float::with_val(prec, &horizon.s_radius + &horizon.rho);
        last = Some((m, Float::with_val(prec, cand.norm()), kappa(&ext, n + 1, &r, &horizon.rho, u.as_ref())));
        if div <= *delta && property.is_none_or(|p| p(&ext)) {
            return Ok(NextK { pair: cand.clone(), c1_bound: c1, divergence: div });
        }
    }
    let needed = match last {
        Some((m, norm, k)) if k < 0u32 && !m.is_zero() => {
            let c1_req = gronwall_inverse(delta, &horizon.lipschitz, &horizon.time);
            let log_m_req = Float::with_val(prec, c1_req.ln_ref()) - Float::with_val(prec, factor.ln_ref());
            let extra = Float::with_val(prec, log_m_req - m.log_mag()) / k;
            let est = norm + if extra > 0u32 { extra } else { Float::new(prec) };
            format!("estimated ||k_{}|| >= {:.0}", n + 1, est.to_f64().ceil())
        }
        Some(_) => "the bound does not decrease with ||k|| on this domain".to_string(),
        None => "no candidate extends the family".to_string(),
    };
    Err(Error::NoCandidate(format!("no candidate meets δ = {}: {needed}", delta.to_f64())))
}

/// Max row sum of the Jacobian of the field over |s| <= S, ||r~|| <= R, all θ.
pub fn lipschitz_bound(fam: &HamiltonianFamily, s_radius: &Float, r_radius: &Float) -> Float {
    let prec = fam.wp();
    let d = fam.d();
    let s = Float::with_val(prec, s_radius.abs_ref());
    let tp = Float::with_val(prec, pi(prec) * 2u32);
    let map = fam.map();
    let dw: Vec<Float> = map.deriv(&s).into_iter().map(|x| x.abs()).collect();
    let d2w: Vec<Float> = map.deriv2(&s).into_iter().map(|x| x.abs()).collect();
    let mut m = vec![vec![]; 3];
    for j in 2..=fam.n() {
        let sh = fam.shape(j);
        for (o, slot) in m.iter_mut().enumerate() {
            slot.push(sh.majorant(&s, o as u32).to_float(prec));
        }
    }
    let mut rows = vec![];
    for i in 0..d - 1 {
        rows.push(Float::with_val(prec, &dw[i]));
    }
    let mut td = Float::new(prec);
    for (idx, p) in fam.pairs().iter().enumerate() {
        let l1: u64 = p.k.iter().map(|x| x.unsigned_abs()).sum();
        td += Float::with_val(prec, &m[1][idx] * &tp) * l1;
        td += &m[2][idx];
    }
    for i in 0..d - 1 {
        td += &dw[i];
        td += Float::with_val(prec, &d2w[i] * r_radius);
    }
    rows.push(td);
    for i in 0..d - 1 {
        let mut row = Float::new(prec);
        for (idx, p) in fam.pairs().iter().enumerate() {
            let ki = p.k[i].unsigned_abs();
            if ki == 0 {
                continue;
            }
            let l1: u64 = p.k.iter().map(|x| x.unsigned_abs()).sum();
            row += Float::with_val(prec, &m[0][idx] * &tp) * &tp * ki * l1;
            row += Float::with_val(prec, &m[1][idx] * &tp) * ki;
        }
        rows.push(row);
    }
    let mut out = Float::new(prec);
    for r in rows {
        if r > out {
            out = r;
        }
    }
    out * (1.0 + 1e-30)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arithmetic::{construct_superliouville, FrequencyVector, MapVariant};
    use crate::flow::PhaseState;
    use crate::hamiltonian::{CouplingSchedule, FrequencyMap};

    fn liouville_family(variant: Variant, n: usize) -> HamiltonianFamily {
        let omega = construct_superliouville(3, 2, 256).unwrap().0;
        let pairs = [vec![-5, 16], vec![-1, 4]].into_iter().take(n - 1).map(ResonancePair::free).collect();
        HamiltonianFamily::new(
            FrequencyMap::new(MapVariant::Const, omega),
            CouplingSchedule::new(variant).with_l(2),
            pairs,
            Float::with_val(64, 1e-30),
        )
        .unwrap()
    }

    fn hat_family(variant: Variant, ks: &[[i64; 2]]) -> HamiltonianFamily {
        let omega = FrequencyVector::parse(&["1", "sqrt(2)", "sqrt(3)"], 256).unwrap();
        let pairs = ks.iter().map(|k| ResonancePair::free(k.to_vec())).collect();
        HamiltonianFamily::new(
            FrequencyMap::new(MapVariant::Hat, omega),
            CouplingSchedule::new(variant).with_c(Float::with_val(256, 1)),
            pairs,
            Float::with_val(64, 1e-30),
        )
        .unwrap()
    }

    fn f(x: f64) -> Float {
        Float::with_val(256, x)
    }

    #[test]
    fn empty_tail_is_zero() {
        let fam = hat_family(Variant::I, &[[-7, 5]]);
        assert!(tail_bound(&fam, 2, Some(2), &f(1.0), &f(1.0), None).unwrap().is_zero());
    }

    #[test]
    fn single_term_formula() {
        let fam = hat_family(Variant::I, &[[-7, 5], [40, -3]]);
        let b = tail_bound(&fam, 2, Some(3), &f(1.0), &f(1.0), None).unwrap();
        let oracle = 3.0 * 2f64.ln() - 40.0 * (3.0 - 2.0 * std::f64::consts::PI * 3.0);
        assert!((b.log_mag().to_f64() - oracle).abs() < 1e-12);
    }

    #[test]
    fn variant_ii_radius_enforced() {
        let fam = hat_family(Variant::Ii, &[[-7, 5]]);
        let edge = 1.0 / (24.0 * std::f64::consts::PI);
        assert!(tail_bound(&fam, 1, Some(2), &f(0.1), &f(edge), None).is_err());
        assert!(tail_bound(&fam, 1, Some(2), &f(0.1), &f(edge * 0.99), None).is_ok());
    }

    #[test]
    fn infinite_tail_closes_and_dominates_finite() {
        let fam = hat_family(Variant::I, &[[-7, 5], [-17, 12]]);
        let g = TailGrowth::new(2.0);
        let inf = tail_bound(&fam, 1, None, &f(1.0), &f(1.0), Some(&g)).unwrap();
        let fin = tail_bound(&fam, 1, Some(8), &f(1.0), &f(1.0), Some(&g)).unwrap();
        assert!(inf.cmp_abs(&fin) == Ordering::Greater);
        assert!(inf.log_mag().is_finite());
    }

    #[test]
    fn liouville_v_tail_decreases() {
        let fam = liouville_family(Variant::V, 3);
        let g = TailGrowth::new(4.0).with_decay(f(5.0));
        for to in [Some(2), Some(3), Some(5), None] {
            let a = tail_bound(&fam, 1, to, &f(0.1), &f(0.1), Some(&g)).unwrap();
            let b = tail_bound(&fam, 2, to, &f(0.1), &f(0.1), Some(&g)).unwrap();
            assert!(b.cmp_abs(&a) != Ordering::Greater);
        }
        let mut prev: Option<LogAmplitude> = None;
        for from in 1..6 {
            let b = tail_bound(&fam, from, None, &f(0.1), &f(0.1), Some(&g)).unwrap();
            if let Some(p) = &prev {
                assert!(b.cmp_abs(p) != Ordering::Greater);
            }
            prev = Some(b);
        }
    }

    #[test]
    fn slow_decay_diverges() {
        let fam = liouville_family(Variant::V, 2);
        let g = TailGrowth::new(2.0).with_decay(f(0.01));
        let r = tail_bound(&fam, 1, None, &f(1.0), &f(1.0), Some(&g));
        assert!(matches!(r, Err(Error::DivergentBound(_))));
    }

    #[test]
    fn choose_next_k_unconstrained_takes_smallest() {
        let fam = hat_family(Variant::I, &[[-7, 5]]);
        let h = Horizon { s_radius: f(0.1), rho: f(0.1), time: f(10.0), lipschitz: f(1.0) };
        let cands = vec![ResonancePair::free(vec![-41, 29]), ResonancePair::free(vec![-17, 12])];
        let inf = Float::with_val(64, rug::float::Special::Infinity);
        let got = choose_next_k(&fam, &inf, &h, &cands, None).unwrap();
        assert_eq!(got.pair.k, vec![-17, 12]);
        assert!(matches!(choose_next_k(&fam, &inf, &h, &[], None), Err(Error::NoCandidate(_))));
        let tiny = f(1e-300);
        match choose_next_k(&fam, &tiny, &h, &cands, None) {
            Err(Error::NoCandidate(msg)) => assert!(msg.contains("estimated")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn lipschitz_zero_for_integrable_const() {
        let omega = FrequencyVector::parse(&["1", "sqrt(2)", "sqrt(3)"], 128).unwrap();
        let fam = HamiltonianFamily::new(
            FrequencyMap::new(MapVariant::Const, omega),
            CouplingSchedule::new(Variant::Iii),
            vec![],
            Float::with_val(64, 1e-30),
        )
        .unwrap();
        assert!(lipschitz_bound(&fam, &f(1.0), &f(1.0)).is_zero());
    }

    #[test]
    fn lipschitz_dominates_sampled_jacobian() {
        let fam = hat_family(Variant::I, &[[-7, 5]]);
        let l = lipschitz_bound(&fam, &f(1.0), &f(1.0)).to_f64();
        let h = 1e-20;
        let mut worst: f64 = 0.0;
        for a in 0..5 {
            for b in 0..5 {
                let th = [a as f64 / 5.0, b as f64 / 7.0, 0.0];
                let r = [0.5 - b as f64 / 5.0, 0.3, 1.0 - a as f64 / 2.5];
                let z = PhaseState::from_f64(&th, &r, 256);
                let mut jac = vec![vec![0.0; 6]; 6];
                for c in 0..6 {
                    let (mut zp, mut zm) = (z.clone(), z.clone());
                    let hh = f(h);
                    if c < 3 {
                        zp.theta[c] += &hh;
                        zm.theta[c] -= &hh;
                    } else {
                        zp.r[c - 3] += &hh;
                        zm.r[c - 3] -= &hh;
                    }
                    let (tp, rp) = fam.vector_field(&zp);
                    let (tm, rm) = fam.vector_field(&zm);
                    for row in 0..6 {
                        let (p, m) = if row < 3 { (&tp[row], &tm[row]) } else { (&rp[row - 3], &rm[row - 3]) };
                        jac[row][c] = Float::with_val(256, p - m).to_f64() / (2.0 * h);
                    }
                }
                for row in jac {
                    worst = worst.max(row.iter().map(|x| x.abs()).sum());
                }
            }
        }
        assert!(l >= worst, "{l} < {worst}");
        assert!(lipschitz_bound(&fam, &f(2.0), &f(2.0)).to_f64() >= l);
    }
}
