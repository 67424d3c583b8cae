//! Flows of H_n: closed form at arbitrary times, a numeric oracle, and Gronwall bounds.

use rug::Float;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hamiltonian::HamiltonianFamily;
use crate::numeric::to_decimal;

mod dop853;
mod exact;
mod state;

pub use exact::{exact_flow, exact_flow_detailed, CouplingIncrement, FlowEval, PHASE_BITS};
pub use state::PhaseState;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    Numeric,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Method::ClosedForm => "closed_form",
            Method::Numeric => "numeric",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub samples: Vec<(Float, PhaseState)>,
    pub method: Method,
    /// Largest accepted local error estimate (numeric only).
    pub max_error: Option<f64>,
    pub complete: bool,
}

/// r~(t) = r~(0) + A(t) + B(t); A collects the secular (or designated) coupling.
#[derive(Clone, Debug)]
pub struct AbDecomposition {
    pub a: Vec<Float>,
    pub b: Vec<Float>,
    pub resonant_index: Option<usize>,
}

/// Closed-form samples at the given times.
pub fn exact_trajectory(fam: &HamiltonianFamily, z: &PhaseState, times: &[Float]) -> Result<Trajectory> {
    for w in times.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::Invalid("sample times must be strictly increasing".into()));
        }
    }
    let samples = times
        .iter()
        .map(|t| Ok((t.clone(), exact_flow(fam, z, t)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory { samples, method: Method::ClosedForm, max_error: None, complete: true })
}

struct F64Field {
    d: usize,
    w: Vec<f64>,
    dw: Vec<f64>,
    phi: Vec<f64>,
    dphi: Vec<f64>,
    k: Vec<Vec<f64>>,
}

impl F64Field {
    fn new(fam: &HamiltonianFamily, s: &Float) -> Self {
        let d = fam.d();
        let mut phi = vec![];
        let mut dphi = vec![];
        for j in 2..=fam.n() {
            let (p, dp) = fam.coupling(j, s);
            phi.push(p.to_f64());
            dphi.push(dp.to_f64());
        }
        F64Field {
            d,
            w: fam.map().eval(s).iter().map(|x| x.to_f64()).collect(),
            dw: fam.map().deriv(s).iter().map(|x| x.to_f64()).collect(),
            phi,
            dphi,
            k: fam.pairs().iter().map(|p| p.k.iter().map(|x| *x as f64).collect()).collect(),
        }
    }

    /// y = (θ_1..θ_d unwrapped, r_1..r_{d-1}).
    fn eval(&self, y: &[f64], dy: &mut [f64]) {
        let d = self.d;
        let tp = std::f64::consts::TAU;
        dy[..d].copy_from_slice(&self.w);
        for i in 0..d - 1 {
            dy[d - 1] += self.dw[i] * y[d + i];
            dy[d + i] = 0.0;
        }
        for (idx, k) in self.k.iter().enumerate() {
            let a: f64 = k.iter().zip(&y[..d - 1]).map(|(ki, th)| ki * th).sum();
            let (sn, cs) = (tp * a).sin_cos();
            dy[d - 1] -= self.dphi[idx] * sn;
            let amp = tp * self.phi[idx] * cs;
            for i in 0..d - 1 {
                dy[d + i] += amp * k[i];
            }
        }
    }
}

fn to_state(y: &[f64], z: &PhaseState, prec: u32) -> PhaseState {
    let d = z.d();
    let theta = (0..d).map(|i| Float::with_val(prec, &z.theta[i]) + y[i]).collect();
    let mut r: Vec<Float> = (0..d - 1).map(|i| Float::with_val(prec, &z.r[i]) + y[d + i]).collect();
    r.push(z.s().clone());
    PhaseState::new(theta, r)
}

/// Adaptive DOP853 in double precision, sampled exactly at `times` (ascending, >= 0).
pub fn numeric_flow_at(fam: &HamiltonianFamily, z: &PhaseState, times: &[f64], tol: f64, max_steps: usize) -> Result<Trajectory> {
    run_numeric(fam, z, times, tol, max_steps, false)
}

fn run_numeric(
    fam: &HamiltonianFamily,
    z: &PhaseState,
    times: &[f64],
    tol: f64,
    max_steps: usize,
    every_step: bool,
) -> Result<Trajectory> {
    if !(tol > 0.0) {
        return Err(Error::Invalid("tolerance must be positive".into()));
    }
    if times.iter().any(|t| !(*t >= 0.0)) || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Invalid("sample times must be non-negative and increasing".into()));
    }
    let d = fam.d();
    let field = F64Field::new(fam, z.s());
    let base: Vec<f64> = z.theta.iter().map(|x| x.to_f64()).collect();
    let r0: Vec<f64> = z.r.iter().map(|x| x.to_f64()).collect();
    let y0 = vec![0.0; 2 * d - 1];
    let f = |_t: f64, y: &[f64], dy: &mut [f64]| {
        let mut full = y.to_vec();
        for i in 0..d {
            full[i] += base[i];
        }
        for i in 0..d - 1 {
            full[d + i] += r0[i];
        }
        field.eval(&full, dy);
    };
    let out = dop853::integrate(f, &y0, times, tol, max_steps, every_step);
    let prec = fam.wp();
    let samples = out.samples.iter().map(|(t, y)| (Float::with_val(prec, *t), to_state(y, z, prec))).collect();
    Ok(Trajectory { samples, method: Method::Numeric, max_error: Some(out.max_error), complete: out.complete })
}

/// Adaptive DOP853 from 0 to `t_end`, one sample per accepted step.
pub fn numeric_flow(fam: &HamiltonianFamily, z: &PhaseState, t_end: f64, tol: f64) -> Result<Trajectory> {
    if t_end == 0.0 {
        return run_numeric(fam, z, &[0.0], tol, 1, false);
    }
    run_numeric(fam, z, &[0.0, t_end], tol, 2_000_000, true)
}

/// CSV with columns t, θ_1..θ_d, r_1..r_d, H, method.
pub fn trajectory_csv(fam: &HamiltonianFamily, tr: &Trajectory) -> String {
    let d = fam.d();
    let mut out = String::from("t");
    for i in 1..=d {
        out.push_str(&format!(",theta_{i}"));
    }
    for i in 1..=d {
        out.push_str(&format!(",r_{i}"));
    }
    out.push_str(",H,method\n");
    for (t, z) in &tr.samples {
        out.push_str(&to_decimal(t));
        for x in z.theta.iter().chain(&z.r) {
            out.push(',');
            out.push_str(&to_decimal(x));
        }
        out.push(',');
        out.push_str(&to_decimal(&fam.eval_h(z)));
        out.push(',');
        out.push_str(tr.method.tag());
        out.push('\n');
    }
    out
}

/// Upper bound 2 Σ φ_j ||k_j|| / |b_j| on the oscillation of the non-secular couplings.
pub fn oscillation_bound(fam: &HamiltonianFamily, s: &Float, skip: Option<usize>) -> Option<Float> {
    let prec = fam.wp();
    let mut total = Float::new(prec);
    for j in 2..=fam.n() {
        if Some(j) == skip {
            continue;
        }
        let p = &fam.pairs()[j - 2];
        let b = fam.map().inner(&p.k, s);
        if b.is_zero() {
            return None;
        }
        let phi = fam.coupling(j, s).0.abs().to_float(prec);
        total += Float::with_val(prec, &phi * p.norm()) * 2u32 / Float::with_val(prec, b.abs_ref());
    }
    Some(total)
}

/// δ (e^{LT} - 1) / L, or δ T when L = 0.
pub fn gronwall_bound(delta: &Float, l: &Float, t: &Float) -> Float {
    let prec = delta.prec().max(l.prec()).max(t.prec());
    if delta.is_zero() {
        return Float::new(prec);
    }
    if l.is_zero() {
        return Float::with_val(prec, delta * t);
    }
    let lt = Float::with_val(prec, l * t);
    Float::with_val(prec, lt.exp_m1()) * delta / l
}

/// Largest field difference δ with gronwall_bound(δ, L, T) <= `divergence`.
pub fn gronwall_inverse(divergence: &Float, l: &Float, t: &Float) -> Float {
    let prec = divergence.prec().max(l.prec()).max(t.prec());
    if t.is_zero() {
        return Float::with_val(prec, rug::float::Special::Infinity);
    }
    if l.is_zero() {
        return Float::with_val(prec, divergence / t);
    }
    let lt = Float::with_val(prec, l * t);
    Float::with_val(prec, divergence * l) / lt.exp_m1()
}
