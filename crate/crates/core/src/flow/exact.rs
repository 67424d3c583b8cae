use rug::float::Round;
use rug::{Float, Integer};

use crate::error::{Error, Result};
use crate::hamiltonian::HamiltonianFamily;
use crate::numeric::{compensated_sum, dot_int, exp2_of, pi, sin_2pi, sin_cos_2pi, MAX_WORK_PREC};

use super::PhaseState;

/// Angles must be known to this many bits after multiplication by t.
pub const PHASE_BITS: i64 = 96;

/// Contribution of one coupling to r~(t) - r~(0).
#[derive(Clone, Debug)]
pub struct CouplingIncrement {
    pub j: usize,
    /// <k_j, ω~(s)>, zero when snapped to the resonance.
    pub b: Float,
    pub secular: bool,
    pub dr: Vec<Float>,
}

#[derive(Clone, Debug)]
pub struct FlowEval {
    pub state: PhaseState,
    pub increments: Vec<CouplingIncrement>,
    pub work_prec: u32,
}

fn bits_above(x: &Float) -> i64 {
    if x.is_zero() {
        0
    } else {
        exp2_of(x).unwrap_or(0).max(0)
    }
}

fn check_radius(fam: &HamiltonianFamily, t: &Float) -> Result<()> {
    if t.is_zero() {
        return Ok(());
    }
    let prec = fam.wp();
    let at = Float::with_val(prec, t.abs_ref());
    let mut worst = Float::new(prec);
    for r in fam.map().base.radius() {
        if *r > worst {
            worst = r.clone();
        }
    }
    for p in fam.pairs() {
        let r = fam.map().inner_radius(&p.k);
        if r > worst {
            worst = r;
        }
    }
    if worst.is_zero() {
        return Ok(());
    }
    let err = Float::with_val(prec, &worst * &at);
    if let Some(e) = exp2_of(&err) {
        if e > -PHASE_BITS {
            let need = fam.prec() as i64 + e + PHASE_BITS + 1;
            return Err(Error::precision(
                format!("phases at t = {:.6e} from a {}-bit frequency", t.to_f64(), fam.prec()),
                need.max(0) as u64,
            ));
        }
    }
    Ok(())
}

/// Closed-form Φ^t(z) together with the per-coupling increments of r~.
pub fn exact_flow_detailed(fam: &HamiltonianFamily, z: &PhaseState, t: &Float) -> Result<FlowEval> {
    let d = fam.d();
    if z.d() != d {
        return Err(Error::Invalid(format!("state dimension {} does not match family dimension {d}", z.d())));
    }
    if !t.is_finite() {
        return Err(Error::Invalid("flow time must be finite".into()));
    }
    check_radius(fam, t)?;
    let s = z.s().clone();
    let out_prec = fam.wp().max(z.r[0].prec());
    let w0 = fam.map().eval(&s);
    let mut wbits = 0;
    for w in &w0 {
        wbits = wbits.max(bits_above(w));
    }
    let kbits = fam
        .pairs()
        .iter()
        .map(|p| crate::numeric::bits_of(crate::numeric::l1_norm(&p.k)) as i64)
        .max()
        .unwrap_or(0);
    let wp = out_prec as i64 + bits_above(t) + wbits + kbits + 32;
    if wp > MAX_WORK_PREC as i64 {
        return Err(Error::precision(format!("closed-form flow at t = {:.3e}", t.to_f64()), wp as u64));
    }
    let wp = wp as u32;
    let t = Float::with_val(wp, t);
    let w = fam.map().eval(&Float::with_val(wp, &s));
    let dw = fam.map().deriv(&Float::with_val(wp, &s));
    let theta: Vec<Float> = z.theta.iter().map(|x| Float::with_val(wp, x)).collect();

    let mut new_theta: Vec<Float> = (0..d).map(|i| Float::with_val(wp, &w[i] * &t) + &theta[i]).collect();
    let mut new_r: Vec<Float> = z.r.iter().map(|x| Float::with_val(wp, x)).collect();
    let mut td_terms = vec![Float::with_val(wp, &w[d - 1] * &t)];
    for i in 0..d - 1 {
        if !dw[i].is_zero() {
            td_terms.push(Float::with_val(wp, &dw[i] * &z.r[i]) * &t);
        }
    }
    let snap = Float::with_val(wp, fam.tolerance() * 10u32);
    let pi_w = pi(wp);
    let mut increments = vec![];
    let mut r_terms: Vec<Vec<Float>> = vec![vec![]; d - 1];
    for (idx, p) in fam.pairs().iter().enumerate() {
        let j = idx + 2;
        let a = dot_int(wp, &p.k, &theta[..d - 1]);
        let mut b = dot_int(wp, &p.k, &w[..d - 1]);
        let secular = b.cmp_abs(&snap) == Some(std::cmp::Ordering::Less);
        let (sa, ca) = sin_cos_2pi(&a, wp);
        let (g, is, ig);
        if secular {
            b = Float::new(wp);
            g = Float::with_val(wp, &ca * &t) * &pi_w * 2u32;
            is = Float::with_val(wp, &sa * &t);
            ig = Float::with_val(wp, t.clone().square()) * &ca * &pi_w;
        } else {
            let bt = Float::with_val(wp, &b * &t);
            let extra = match exp2_of(&bt) {
                Some(e) if e < 0 => (-e) as u32 + 16,
                _ => 16,
            };
            let hp = wp + extra;
            if hp > MAX_WORK_PREC {
                return Err(Error::precision("near-resonant integral of a coupling", hp as u64));
            }
            let bh = Float::with_val(hp, &b);
            let th = Float::with_val(hp, &t);
            let half = Float::with_val(hp, &bh * &th) / 2u32;
            let ph = Float::with_val(hp, &a + &half);
            let (sp, cp) = sin_cos_2pi(&ph, hp);
            let sh = sin_2pi(&half, hp);
            g = Float::with_val(wp, Float::with_val(hp, &cp * &sh) * 2u32 / &bh);
            let is_h = Float::with_val(hp, &sp * &sh) / (pi(hp) * &bh);
            let lin = Float::with_val(hp, &th * Float::with_val(hp, sin_2pi(&a, hp)));
            ig = Float::with_val(wp, Float::with_val(hp, &is_h - &lin) / &bh);
            is = Float::with_val(wp, &is_h);
        }
        let sh = fam.shape(j);
        let phi = sh.value(&s).to_float(wp);
        let dphi = sh.deriv(&s).to_float(wp);
        let amp = Float::with_val(wp, &phi * &g);
        let mut dr = vec![];
        for (i, ki) in p.k.iter().enumerate() {
            let x = Float::with_val(wp, &amp * *ki);
            r_terms[i].push(x.clone());
            dr.push(Float::with_val(out_prec, &x));
        }
        for i in 0..d - 1 {
            if !dw[i].is_zero() && p.k[i] != 0 {
                td_terms.push(Float::with_val(wp, &dw[i] * &phi) * &ig * p.k[i]);
            }
        }
        td_terms.push(-Float::with_val(wp, &dphi * &is));
        increments.push(CouplingIncrement { j, b: Float::with_val(out_prec, &b), secular, dr });
    }
    for i in 0..d - 1 {
        let mut terms = std::mem::take(&mut r_terms[i]);
        terms.push(new_r[i].clone());
        new_r[i] = compensated_sum(wp, &terms);
    }
    td_terms.push(theta[d - 1].clone());
    new_theta[d - 1] = compensated_sum(wp, &td_terms);

    let mut winding = z.winding.clone().unwrap_or_else(|| vec![Integer::new(); d]);
    let mut th_out = Vec::with_capacity(d);
    for (i, x) in new_theta.iter().enumerate() {
        let (f, n) = crate::numeric::split_unit(x);
        winding[i] += n;
        let mut f = Float::with_val_round(out_prec, &f, Round::Nearest).0;
        if f >= 1u32 {
            f -= 1u32;
            winding[i] += 1;
        }
        th_out.push(f);
    }
    let r_out = new_r.iter().map(|x| Float::with_val(out_prec, x)).collect();
    let winding = winding.iter().any(|w| *w != 0).then_some(winding);
    Ok(FlowEval { state: PhaseState { theta: th_out, r: r_out, winding }, increments, work_prec: wp })
}

/// Φ^t(z) of H_n in closed form.
pub fn exact_flow(fam: &HamiltonianFamily, z: &PhaseState, t: &Float) -> Result<PhaseState> {
    exact_flow_detailed(fam, z, t).map(|e| e.state)
}
