use rayon::prelude::*;
use rug::Float;

use crate::error::{Error, Result};
use crate::flow::{exact_flow, oscillation_bound, PhaseState};
use crate::hamiltonian::{lipschitz_bound, HamiltonianFamily, Variant};
use crate::numeric::{sin_2pi, two_pi, LogAmplitude};

use super::{
    canonical_initial_condition, canonical_log_s, distance, escape_time, persistence_delta, predicted_escape_time,
    Check, DiffusionReport, PropertyId, Strategy,
};

#[derive(Clone, Debug)]
pub struct CheckOptions {
    /// Points per axis of the P5/P6 grid (over θ~ and r).
    pub grid: usize,
    /// P1 searches up to this multiple of the predicted time.
    pub ceiling_factor: f64,
    pub strategy: Strategy,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions { grid: 5, ceiling_factor: 10.0, strategy: Strategy::ClosedFormRoot }
    }
}

fn nudge(x: &Float, prec: u32) -> Float {
    let eps = Float::with_val(prec, Float::i_exp(1, -(prec as i32) / 2));
    Float::with_val(prec, x * (eps + 1u32))
}

fn ln64(x: &Float) -> f64 {
    Float::with_val(64, x.abs_ref()).ln().to_f64()
}

fn norm_check(z: &PhaseState, n: usize) -> Check {
    let norm = distance(z);
    let holds = Float::with_val(norm.prec(), &norm * n as u64) <= 1u32;
    Check::new("‖z‖ <= 1/n", holds, format!("ln ‖z‖ = {:.6}", ln64(&norm)))
}

fn b_bound_check(fam_n: &HamiltonianFamily, s: &Float, n: usize) -> Check {
    match oscillation_bound(fam_n, s, Some(n)) {
        Some(b) => Check::new("‖B‖ < 1", b < 1u32, format!("2 Σ φ_j ‖k_j‖ / |b_j| = {:.6e}", b.to_f64())),
        None => Check::new("‖B‖ < 1", false, "a coupling j < n is resonant"),
    }
}

/// |sin(2π b_n t)| > |b_n| t.
fn sin_dominance(fam_n: &HamiltonianFamily, n: usize, s: &Float, t: &LogAmplitude) -> Check {
    let prec = fam_n.wp();
    let b = Float::with_val(prec, fam_n.map().inner(&fam_n.pairs()[n - 2].k, s).abs());
    if b.is_zero() {
        return Check::new("|sin(2πbt)| > |b|t", false, "b_n = 0");
    }
    let ln_bt = Float::with_val(prec, b.ln_ref()) + t.log_mag();
    if ln_bt >= 0u32 {
        return Check::new(
            "|sin(2πbt)| > |b|t",
            false,
            format!("ln(|b|t) = {:.4} >= 0, so |b|t >= 1 >= |sin(2πbt)|", ln_bt.to_f64()),
        );
    }
    let bt = ln_bt.clone().exp();
    let sn = sin_2pi(&bt, prec).abs();
    let holds = sn > bt;
    Check::new("|sin(2πbt)| > |b|t", holds, format!("ln|b|t = {:.4}, ln|sin| = {:.4}", ln_bt.to_f64(), ln64(&sn)))
}

fn attach(mut rep: DiffusionReport, prop: &PropertyId, mut checks: Vec<Check>, bounds: Vec<(String, LogAmplitude)>) -> DiffusionReport {
    checks.append(&mut rep.checks);
    rep.checks = checks;
    rep.pass = rep.pass && rep.checks.iter().all(|c| c.holds);
    if !rep.pass && rep.label == "certified" {
        rep.label = "side-condition-failed".into();
    }
    rep.time_bounds = bounds;
    rep.property = Some(prop.clone());
    rep.n = prop.n;
    rep
}

/// Evaluates predicate P^index_n for the truncation H_n.
pub fn check_property(fam: &HamiltonianFamily, n: usize, prop: &PropertyId, opts: &CheckOptions) -> Result<DiffusionReport> {
    if prop.variant() != fam.variant() {
        return Err(Error::VariantMismatch(format!(
            "P{} is the predicate of case {}, the family is case {}",
            prop.index,
            prop.variant(),
            fam.variant()
        )));
    }
    if prop.n != n {
        return Err(Error::Invalid(format!("property carries n = {}, asked for n = {n}", prop.n)));
    }
    fam.pair(n)?;
    match prop.index {
        1 => p1(fam, n, prop, opts),
        2 => p2(fam, n, prop),
        3 | 4 => p34(fam, n, prop),
        _ => grid_property(fam, n, prop, opts),
    }
}

fn p1(fam: &HamiltonianFamily, n: usize, prop: &PropertyId, opts: &CheckOptions) -> Result<DiffusionReport> {
    let prec = fam.wp();
    let z = canonical_initial_condition(fam, n)?;
    let target = nudge(&Float::with_val(prec, n as u64), prec);
    let predicted = predicted_escape_time(fam, n, &target)?;
    let t_max = predicted.scale_exp(&Float::with_val(prec, opts.ceiling_factor.ln()));
    let rep = escape_time(fam, n, &z, &target, &t_max, opts.strategy)?;
    let checks = vec![norm_check(&z, n)];
    Ok(attach(rep, prop, checks, vec![("predicted".into(), predicted)]))
}

fn p2(fam: &HamiltonianFamily, n: usize, prop: &PropertyId) -> Result<DiffusionReport> {
    let prec = fam.wp();
    let c = prop
        .c
        .clone()
        .or_else(|| fam.schedule().c.clone())
        .ok_or_else(|| Error::Invalid("P2 needs C".into()))?;
    let tau = prop.tau.clone().unwrap_or_else(|| Float::with_val(prec, 1u32));
    let z = canonical_initial_condition(fam, n)?;
    let fam_n = fam.truncated(n)?;
    let s = Float::with_val(prec, z.s().abs_ref());
    if s.is_zero() {
        return Err(Error::Invalid("canonical s_n = 0".into()));
    }
    let ln_s = Float::with_val(prec, s.ln_ref());
    // ln t = C s^{-1/(τ+1)}
    let expo = Float::with_val(prec, Float::with_val(prec, -&ln_s) / (Float::with_val(prec, &tau) + 1u32)).exp() * &c;
    let t_bound = LogAmplitude::exp(expo.clone());
    let k_norm = fam.pairs()[n - 2].norm();
    let ln_a = Float::with_val(prec, Float::with_val(prec, two_pi(prec) * k_norm).ln())
        + fam.coupling(n, &s).0.log_mag()
        + &expo;
    let ln_need = Float::with_val(prec, 2u32).ln() - &ln_s;
    let mut checks = vec![norm_check(&z, n)];
    checks.push(Check::new(
        "‖A(t)‖ >= 2/|s_n|",
        ln_a >= ln_need,
        format!("ln‖A‖ = {:.6}, ln(2/|s_n|) = {:.6}", ln_a.to_f64(), ln_need.to_f64()),
    ));
    checks.push(b_bound_check(&fam_n, &s, n));
    let target = nudge(&Float::with_val(prec, s.recip_ref()), prec);
    let rep = escape_time(fam, n, &z, &target, &t_bound, Strategy::ClosedFormRoot)?;
    if let Some(t) = &rep.escape_time {
        checks.push(Check::new(
            "ln T <= C|s_n|^(-1/(τ+1))",
            *t.log_mag() <= expo,
            format!("ln T = {:.6}, bound = {:.6}", t.log_mag().to_f64(), expo.to_f64()),
        ));
    }
    Ok(attach(rep, prop, checks, vec![("exp(C|s|^(-1/(tau+1)))".into(), t_bound)]))
}

fn p34(fam: &HamiltonianFamily, n: usize, prop: &PropertyId) -> Result<DiffusionReport> {
    let prec = fam.wp();
    let fam_n = fam.truncated(n)?;
    let z = canonical_initial_condition(fam, n)?;
    let s_log = canonical_log_s(fam, n)?;
    let s = z.s().clone();
    let (t_bound, bounds) = if prop.index == 3 {
        let t = s_log.powi(-2 * n as i32);
        (t.clone(), vec![("r^-2n".to_string(), t), ("r^-n".to_string(), s_log.powi(-(n as i32)))])
    } else {
        let t = s_log.powi(-4);
        (t.clone(), vec![("r^-4".to_string(), t)])
    };
    let mut checks = vec![norm_check(&z, n), b_bound_check(&fam_n, &s, n), sin_dominance(&fam_n, n, &s, &t_bound)];
    let inv_s = s_log.recip();
    let target = nudge(&inv_s.to_float(prec), prec);
    match exact_flow(&fam_n, &z, &t_bound.to_float(prec)) {
        Ok(zt) => {
            let r = zt.r_tilde_norm();
            let holds = r > target;
            let ln_r = if r.is_zero() { f64::NEG_INFINITY } else { ln64(&r) };
            checks.push(Check::new(
                "‖r~(t_bound)‖ > 1/s_n",
                holds,
                format!("ln‖r~‖ = {:.4}, ln(1/s_n) = {:.4}", ln_r, inv_s.log_mag().to_f64()),
            ));
        }
        Err(e) => checks.push(Check::new("‖r~(t_bound)‖ > 1/s_n", false, e.to_string())),
    }
    let rep = escape_time(fam, n, &z, &target, &t_bound, Strategy::ClosedFormRoot)?;
    Ok(attach(rep, prop, checks, bounds))
}

struct PointOutcome {
    z: PhaseState,
    escape: Option<(Float, Float)>,
    max_seen: Float,
}

fn linspace(lo: f64, hi: f64, m: usize) -> Vec<f64> {
    if m == 1 {
        return vec![(lo + hi) / 2.0];
    }
    (0..m).map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64).collect()
}

fn grid_points(d: usize, n: usize, g: usize, both_signs: bool) -> Vec<(Vec<f64>, Vec<f64>)> {
    let nf = n as f64;
    let thetas: Vec<f64> = (0..g).map(|i| i as f64 / g as f64).collect();
    let rs = linspace(-nf, nf, g);
    let mut ss = linspace(1.0 / nf, nf, g);
    if both_signs {
        let neg: Vec<f64> = ss.iter().map(|x| -x).collect();
        ss.extend(neg);
    }
    let mut axes: Vec<&[f64]> = vec![];
    for _ in 0..d - 1 {
        axes.push(&thetas);
    }
    for _ in 0..d - 1 {
        axes.push(&rs);
    }
    axes.push(&ss);
    let total: usize = axes.iter().map(|a| a.len()).product();
    (0..total)
        .map(|mut idx| {
            let mut v = Vec::with_capacity(axes.len());
            for a in &axes {
                v.push(a[idx % a.len()]);
                idx /= a.len();
            }
            let mut theta = v[..d - 1].to_vec();
            theta.push(0.0);
            (theta, v[d - 1..].to_vec())
        })
        .collect()
}

/// ln of the proof's lower bound ‖k_n‖ n^{-n} e^{‖k_n‖ h(1/n)} - Σ_{j<n} n^j ‖k_j‖ e^{‖k_j‖ h(n)} - n, against n.
fn amplitude_check(fam: &HamiltonianFamily, n: usize) -> Check {
    let prec = fam.wp();
    let nf = Float::with_val(prec, n as u64);
    let ln_n = Float::with_val(prec, nf.ln_ref());
    let pw = if fam.variant() == Variant::Vii { 2 } else { 1 };
    let kn = Float::with_val(prec, fam.pairs()[n - 2].norm());
    let lead = Float::with_val(prec, kn.ln_ref()) - Float::with_val(prec, &ln_n * n as u64)
        + Float::with_val(prec, &kn / Float::with_val(prec, (n as u64).pow(pw)));
    let mut total = LogAmplitude::exp(lead);
    for j in 2..n {
        let kj = Float::with_val(prec, fam.pairs()[j - 2].norm());
        let e = Float::with_val(prec, kj.ln_ref())
            + Float::with_val(prec, &ln_n * j as u64)
            + Float::with_val(prec, &kj * Float::with_val(prec, (n as u64).pow(pw)));
        total = total.sub(&LogAmplitude::exp(e));
    }
    total = total.sub(&LogAmplitude::from_float(&nf));
    let holds = total.cmp_value(&LogAmplitude::from_float(&nf)) == std::cmp::Ordering::Greater;
    Check::new("proof amplitude bound > n", holds, format!("bound = {}", total))
}

fn grid_property(fam: &HamiltonianFamily, n: usize, prop: &PropertyId, opts: &CheckOptions) -> Result<DiffusionReport> {
    if opts.grid == 0 {
        return Err(Error::Invalid("grid density must be >= 1".into()));
    }
    let prec = fam.wp();
    let fam_n = fam.truncated(n)?;
    let d = fam.d();
    let both = prop.index == 6;
    let b = Float::with_val(prec, fam.base_inner(n).abs_ref());
    let tau = Float::with_val(prec, b.recip_ref());
    let times: Vec<Float> = (1..=17).map(|m| Float::with_val(prec, &tau * m) / 16u32).collect();
    let target = nudge(&Float::with_val(prec, n as u64), prec);
    let pts = grid_points(d, n, opts.grid, both);
    let outcomes = pts
        .par_iter()
        .map(|(th, r)| {
            let z = PhaseState::from_f64(th, r, prec);
            let mut max_seen = distance(&z);
            for t in &times {
                let dist = distance(&exact_flow(&fam_n, &z, t)?);
                if dist >= target {
                    return Ok(PointOutcome { z, escape: Some((t.clone(), dist)), max_seen });
                }
                if dist > max_seen {
                    max_seen = dist;
                }
            }
            Ok(PointOutcome { z, escape: None, max_seen })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut checks = vec![amplitude_check(fam, n)];
    let bounds = vec![
        ("tau_n".to_string(), LogAmplitude::from_float(&tau)),
        ("sampled up to".to_string(), LogAmplitude::from_float(times.last().expect("17 samples"))),
    ];
    let failing = outcomes.iter().find(|o| o.escape.is_none());
    let mut rep = if let Some(f) = failing {
        let failed = outcomes.iter().filter(|o| o.escape.is_none()).count();
        checks.push(Check::new("every grid point escapes", false, format!("{failed} of {} grid points stay within n", outcomes.len())));
        DiffusionReport {
            property: None,
            n,
            pass: false,
            label: "not-reached".into(),
            witness: f.z.clone(),
            escape_time: None,
            threshold: target.clone(),
            threshold_reached: f.max_seen.clone(),
            margin: Float::with_val(prec, &f.max_seen / &target),
            persistence_delta: None,
            time_bounds: vec![],
            checks: vec![],
            strategy: Strategy::Bisection,
            points_checked: outcomes.len(),
        }
    } else {
        let worst = outcomes
            .iter()
            .min_by(|a, b| a.escape.as_ref().unwrap().1.partial_cmp(&b.escape.as_ref().unwrap().1).unwrap())
            .expect("non-empty grid");
        let (tw, dw) = worst.escape.clone().unwrap();
        let t_all = outcomes.iter().map(|o| o.escape.as_ref().unwrap().0.clone()).fold(Float::new(prec), |a, b| a.max(&b));
        let reach = outcomes.iter().map(|o| o.escape.as_ref().unwrap().1.clone()).fold(Float::new(prec), |a, b| a.max(&b));
        let slack = Float::with_val(prec, &dw - &target);
        let delta = persistence_delta(&fam_n, &worst.z, &LogAmplitude::from_float(&tw), &reach, &slack);
        // grid spacing in the sup norm, then the Gronwall growth e^{L t} of that spacing
        let g = opts.grid as f64;
        let nf = n as f64;
        let h = if opts.grid > 1 { (1.0 / g).max(2.0 * nf / (g - 1.0)).max((nf - 1.0 / nf) / (g - 1.0)) } else { 2.0 * nf };
        let l = lipschitz_bound(&fam_n, &Float::with_val(prec, n as u64), &reach);
        let closed = outcomes.iter().all(|o| {
            let (t, dist) = o.escape.as_ref().unwrap();
            let slack = Float::with_val(prec, dist - &target);
            let ln_spread = Float::with_val(prec, &l * t) + h.ln();
            slack > 0u32 && Float::with_val(prec, slack.ln_ref()) > ln_spread
        });
        checks.push(Check::new("every grid point escapes", true, format!("{} grid points", outcomes.len())));
        DiffusionReport {
            property: None,
            n,
            pass: true,
            label: if closed { "certified".into() } else { "grid-verified".into() },
            witness: worst.z.clone(),
            escape_time: Some(LogAmplitude::from_float(&t_all)),
            threshold: target.clone(),
            threshold_reached: dw.clone(),
            margin: Float::with_val(prec, &dw / &target),
            persistence_delta: Some(delta),
            time_bounds: vec![],
            checks: vec![],
            strategy: Strategy::Bisection,
            points_checked: outcomes.len(),
        }
    };
    rep.checks = checks;
    rep.pass = rep.pass && rep.checks.iter().all(|c| c.holds);
    rep.time_bounds = bounds;
    rep.property = Some(prop.clone());
    Ok(rep)
}
