//! Generating-function maps Ψ_n, conjugacy checks, Birkhoff coefficients and the C^l probe.
//!
//! Sign convention: Ψ_n(θ, r) = (Θ, R) with Θ~ = θ~, R_d = s,
//! R~ = r~ - Σ_j k_j g_j(s) sin(2π<k_j, θ~>), Θ_d = θ_d - (1/2π) Σ_j g_j'(s) cos(2π<k_j, θ~>),
//! g_j = φ_j / <ω~(s), k_j>. With it H_n = H_0 ∘ Ψ_n exactly.

use rug::Float;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::PhaseState;
use crate::hamiltonian::HamiltonianFamily;
use crate::numeric::{compensated_sum, dot_int, exp2_of, sin_cos_2pi, two_pi};

mod bnf;
mod regularity;

pub use bnf::{bnf_coefficient, bnf_remainder_order, TrigPolynomial, TrigTerm};
pub use regularity::{probe_family, regularity_probe, RegularityPoint};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Inverse,
}

/// Ψ_n (forward) or Ψ_n^{-1} (inverse) for a family truncated at n.
#[derive(Clone, Debug)]
pub struct CanonicalMap {
    fam: HamiltonianFamily,
    direction: Direction,
}

impl CanonicalMap {
    pub fn new(fam: &HamiltonianFamily, n: usize, direction: Direction) -> Result<Self> {
        Ok(CanonicalMap { fam: fam.truncated(n)?, direction })
    }

    pub fn family(&self) -> &HamiltonianFamily {
        &self.fam
    }

    pub fn n(&self) -> usize {
        self.fam.n()
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn inverse(&self) -> Self {
        let direction = match self.direction {
            Direction::Forward => Direction::Inverse,
            Direction::Inverse => Direction::Forward,
        };
        CanonicalMap { fam: self.fam.clone(), direction }
    }
}

/// (g_j(s), g_j'(s)) for every coupling.
pub(crate) fn generating_terms(fam: &HamiltonianFamily, s: &Float, prec: u32) -> Result<Vec<(Float, Float)>> {
    let variant = fam.variant();
    let thresh = Float::with_val(prec, fam.tolerance() * 10u32);
    let mut out = vec![];
    for j in 2..=fam.n() {
        let sh = fam.shape(j);
        if variant.has_inner_factor() {
            out.push((sh.rest(s).to_float(prec), sh.rest_deriv(s).to_float(prec)));
            continue;
        }
        let k = &fam.pairs()[j - 2].k;
        let b = Float::with_val(prec, fam.map().inner(k, s));
        if b.cmp_abs(&thresh) != Some(std::cmp::Ordering::Greater) {
            let log_b = if b.is_zero() { f64::NEG_INFINITY } else { Float::with_val(64, b.abs_ref()).ln().to_f64() };
            return Err(Error::ResonantDenominator { j, log_b });
        }
        let db = Float::with_val(prec, fam.map().inner_deriv(k, s));
        let phi = sh.value(s).to_float(prec);
        let dphi = sh.deriv(s).to_float(prec);
        let g = Float::with_val(prec, &phi / &b);
        let num = Float::with_val(prec, &dphi * &b) - Float::with_val(prec, &phi * &db);
        let dg = num / Float::with_val(prec, b.square_ref());
        out.push((g, dg));
    }
    Ok(out)
}

/// Corrections (ΔR~, ΔΘ_d) of the forward map; they depend only on (θ~, s).
fn corrections(fam: &HamiltonianFamily, z: &PhaseState, prec: u32) -> Result<(Vec<Float>, Float)> {
    let d = fam.d();
    let s = z.s();
    let terms = generating_terms(fam, s, prec)?;
    let mut dr: Vec<Vec<Float>> = vec![vec![]; d - 1];
    let mut dt = vec![];
    let phase_prec = prec + 64;
    for ((g, dg), p) in terms.iter().zip(fam.pairs()) {
        let a = dot_int(phase_prec, &p.k, &z.theta[..d - 1]);
        let (sn, cs) = sin_cos_2pi(&a, prec);
        let amp = Float::with_val(prec, g * &sn);
        for (i, ki) in p.k.iter().enumerate() {
            if *ki != 0 {
                dr[i].push(-Float::with_val(prec, &amp * *ki));
            }
        }
        dt.push(-Float::with_val(prec, dg * &cs));
    }
    let dr = dr.iter().map(|t| compensated_sum(prec, t)).collect();
    let dt = compensated_sum(prec, &dt) / two_pi(prec);
    Ok((dr, dt))
}

/// Applies the map; the inverse negates the corrections evaluated at the shared (θ~, s).
pub fn psi_n(map: &CanonicalMap, z: &PhaseState) -> Result<PhaseState> {
    let fam = &map.fam;
    let d = fam.d();
    if z.d() != d {
        return Err(Error::Invalid(format!("state dimension {} does not match family dimension {d}", z.d())));
    }
    let prec = fam.wp().max(z.r[0].prec()).max(z.theta[0].prec());
    let (dr, dt) = corrections(fam, z, prec)?;
    let sign = if map.direction == Direction::Forward { 1 } else { -1 };
    let mut theta: Vec<Float> = z.theta.iter().map(|x| Float::with_val(prec, x)).collect();
    let mut r: Vec<Float> = z.r.iter().map(|x| Float::with_val(prec, x)).collect();
    for (ri, x) in r.iter_mut().zip(&dr) {
        *ri += Float::with_val(prec, x * sign);
    }
    theta[d - 1] += dt * sign;
    Ok(PhaseState::new(theta, r))
}

/// H_0(Z) = <ω(R_d), R>.
pub fn h0(fam: &HamiltonianFamily, z: &PhaseState) -> Float {
    fam.truncated(1).expect("n >= 1").eval_h(z)
}

/// Φ_0^t: Θ_i += ω_i(s) t, Θ_d += (ω_d + Σ ω_i'(s) R_i) t.
pub fn linear_flow(fam: &HamiltonianFamily, z: &PhaseState, t: &Float) -> PhaseState {
    let d = fam.d();
    let s = z.s();
    let prec = fam.wp().max(z.r[0].prec()) + exp2_of(t).unwrap_or(0).max(0) as u32;
    let w = fam.map().eval(s);
    let dw = fam.map().deriv(s);
    let mut theta: Vec<Float> = z.theta.iter().map(|x| Float::with_val(prec, x)).collect();
    for i in 0..d - 1 {
        theta[i] += Float::with_val(prec, &w[i] * t);
    }
    let mut rate = vec![Float::with_val(prec, &w[d - 1])];
    for i in 0..d - 1 {
        rate.push(Float::with_val(prec, &dw[i] * &z.r[i]));
    }
    theta[d - 1] += compensated_sum(prec, &rate) * t;
    PhaseState::new(theta, z.r.clone())
}

#[derive(Clone, Debug, Serialize)]
pub struct ConjugacyReport {
    pub n: usize,
    pub points: usize,
    #[serde(serialize_with = "ser_float")]
    pub max_residual: Float,
    pub worst: Option<usize>,
    pub pass: bool,
    /// Points where Ψ_n is undefined, with the reason.
    pub rejected: Vec<(usize, String)>,
}

fn ser_float<S: serde::Serializer>(x: &Float, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&crate::numeric::to_decimal_short(x, 12))
}

/// max |H_n(z) - H_0(Ψ_n(z))| over the points.
pub fn verify_conjugacy(fam: &HamiltonianFamily, n: usize, points: &[PhaseState], tol: &Float) -> Result<ConjugacyReport> {
    let map = CanonicalMap::new(fam, n, Direction::Forward)?;
    let fam_n = map.family();
    let mut max_residual = Float::new(fam.wp());
    let mut worst = None;
    let mut rejected = vec![];
    for (i, z) in points.iter().enumerate() {
        let img = match psi_n(&map, z) {
            Ok(img) => img,
            Err(e) => {
                rejected.push((i, e.to_string()));
                continue;
            }
        };
        let res = Float::with_val(fam.wp(), fam_n.eval_h(z) - h0(fam_n, &img)).abs();
        if worst.is_none() || res > max_residual {
            max_residual = res;
            worst = Some(i);
        }
    }
    let pass = worst.is_some() && max_residual <= *tol;
    Ok(ConjugacyReport { n, points: points.len(), max_residual, worst, pass, rejected })
}

fn wrap_diff(a: &Float, b: &Float, prec: u32) -> Float {
    let x = Float::with_val(prec, a - b);
    let n = Float::with_val(prec, x.round_ref());
    x - n
}

/// Finite-difference Jacobian of the map in coordinates (θ, r), rows are outputs.
pub fn jacobian(map: &CanonicalMap, z: &PhaseState) -> Result<Vec<Vec<Float>>> {
    let d = z.d();
    let prec = map.fam.wp() + 64;
    let h = Float::with_val(prec, Float::i_exp(1, -(prec as i32) / 3));
    let z = PhaseState {
        theta: z.theta.iter().map(|x| Float::with_val(prec, x)).collect(),
        r: z.r.iter().map(|x| Float::with_val(prec, x)).collect(),
        winding: None,
    };
    let mut jac = vec![vec![Float::new(prec); 2 * d]; 2 * d];
    for c in 0..2 * d {
        let mut zp = z.clone();
        let mut zm = z.clone();
        let (vp, vm) = if c < d { (&mut zp.theta[c], &mut zm.theta[c]) } else { (&mut zp.r[c - d], &mut zm.r[c - d]) };
        *vp += &h;
        *vm -= &h;
        let fp = psi_n(map, &zp)?;
        let fm = psi_n(map, &zm)?;
        for row in 0..2 * d {
            let diff = if row < d {
                wrap_diff(&fp.theta[row], &fm.theta[row], prec)
            } else {
                Float::with_val(prec, &fp.r[row - d] - &fm.r[row - d])
            };
            jac[row][c] = diff / Float::with_val(prec, &h * 2u32);
        }
    }
    Ok(jac)
}

/// max_ij |(J^T Ω J - Ω)_ij| / max(1, max |J_ij|^2).
pub fn symplectic_defect(map: &CanonicalMap, z: &PhaseState) -> Result<Float> {
    let jac = jacobian(map, z)?;
    let m = jac.len();
    let d = m / 2;
    let prec = jac[0][0].prec();
    let mut scale = Float::with_val(prec, 1u32);
    for row in &jac {
        for x in row {
            let a = Float::with_val(prec, x.abs_ref());
            if a > scale {
                scale = a;
            }
        }
    }
    scale.square_mut();
    let mut worst = Float::new(prec);
    for a in 0..m {
        for b in 0..m {
            // (J^T Ω J)_ab = Σ_i J_ia J_{i+d,b} - J_{i+d,a} J_ib
            let mut terms = vec![];
            for i in 0..d {
                terms.push(Float::with_val(prec, &jac[i][a] * &jac[i + d][b]));
                terms.push(-Float::with_val(prec, &jac[i + d][a] * &jac[i][b]));
            }
            let mut v = compensated_sum(prec, &terms);
            if b == a + d {
                v -= 1u32;
            } else if a == b + d {
                v += 1u32;
            }
            let v = v.abs();
            if v > worst {
                worst = v;
            }
        }
    }
    Ok(worst / scale)
}

#[cfg(test)]
mod tests;
