//! Diffusion predicates P1-P6, canonical initial conditions, escape times.
//!
//! Distances are sup norms of the action r (the torus T_0 is r = 0).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rug::Float;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::flow::{exact_flow_detailed, AbDecomposition, PhaseState};
use crate::hamiltonian::{lipschitz_bound, HamiltonianFamily, Variant};
use crate::numeric::{compensated_sum, to_decimal_short, two_pi, LogAmplitude};

mod escape;
mod property;

pub use escape::{escape_sweep, escape_time, recheck_witness};
pub use property::{check_property, CheckOptions};

#[derive(Clone, Debug, PartialEq)]
pub struct PropertyId {
    pub index: u8,
    pub n: usize,
    /// C and τ of P2.
    pub c: Option<Float>,
    pub tau: Option<Float>,
}

impl PropertyId {
    pub fn new(index: u8, n: usize) -> Result<Self> {
        if !(1..=6).contains(&index) {
            return Err(Error::Invalid(format!("property index {index} outside 1..=6")));
        }
        if n < 1 {
            return Err(Error::Invalid("n must be >= 1".into()));
        }
        Ok(PropertyId { index, n, c: None, tau: None })
    }

    pub fn p2(n: usize, c: Float, tau: Float) -> Self {
        PropertyId { index: 2, n, c: Some(c), tau: Some(tau) }
    }

    /// The predicate proved for a schedule variant (vi has none).
    pub fn for_variant(variant: Variant, n: usize) -> Result<Self> {
        let index = match variant {
            Variant::I => 1,
            Variant::Ii => 2,
            Variant::Iii => 3,
            Variant::Iv => 4,
            Variant::V => 5,
            Variant::Vii => 6,
            Variant::Vi => return Err(Error::Unsupported("variant vi carries no diffusion predicate".into())),
        };
        PropertyId::new(index, n)
    }

    pub fn variant(&self) -> Variant {
        match self.index {
            1 => Variant::I,
            2 => Variant::Ii,
            3 => Variant::Iii,
            4 => Variant::Iv,
            5 => Variant::V,
            _ => Variant::Vii,
        }
    }
}

impl Serialize for PropertyId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr {
            index: u8,
            n: usize,
            #[serde(skip_serializing_if = "Option::is_none")]
            c: Option<String>,
            #[serde(skip_serializing_if = "Option::is_none")]
            tau: Option<String>,
        }
        Repr {
            index: self.index,
            n: self.n,
            c: self.c.as_ref().map(|x| to_decimal_short(x, 20)),
            tau: self.tau.as_ref().map(|x| to_decimal_short(x, 20)),
        }
        .serialize(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    ClosedFormRoot,
    Bisection,
    Numeric,
}

impl std::str::FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "closed_form_root" | "closed-form" => Ok(Strategy::ClosedFormRoot),
            "bisection" | "bisection_on_exact_flow" => Ok(Strategy::Bisection),
            "numeric" => Ok(Strategy::Numeric),
            _ => Err(Error::Parse(format!("unknown strategy '{s}'"))),
        }
    }
}

/// A side condition of a proof, evaluated.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub holds: bool,
    pub detail: String,
}

impl Check {
    pub(crate) fn new(name: &str, holds: bool, detail: impl Into<String>) -> Self {
        Check { name: name.into(), holds, detail: detail.into() }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DiffusionReport {
    pub property: Option<PropertyId>,
    pub n: usize,
    pub pass: bool,
    /// "certified", "grid-verified" or "not-reached".
    pub label: String,
    #[serde(serialize_with = "ser_state")]
    pub witness: PhaseState,
    pub escape_time: Option<LogAmplitude>,
    #[serde(serialize_with = "ser_float")]
    pub threshold: Float,
    /// Distance at the escape time, or the largest distance seen.
    #[serde(serialize_with = "ser_float")]
    pub threshold_reached: Float,
    #[serde(serialize_with = "ser_float")]
    pub margin: Float,
    pub persistence_delta: Option<LogAmplitude>,
    pub time_bounds: Vec<(String, LogAmplitude)>,
    pub checks: Vec<Check>,
    pub strategy: Strategy,
    pub points_checked: usize,
}

impl DiffusionReport {
    pub fn failed_checks(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.holds).collect()
    }
}

pub(crate) fn ser_float<S: Serializer>(x: &Float, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&to_decimal_short(x, 20))
}

fn ser_state<S: Serializer>(z: &PhaseState, s: S) -> std::result::Result<S::Ok, S::Error> {
    #[derive(Serialize)]
    struct Repr {
        theta: Vec<String>,
        r: Vec<String>,
    }
    Repr {
        theta: z.theta.iter().map(|x| to_decimal_short(x, 30)).collect(),
        r: z.r.iter().map(|x| to_decimal_short(x, 30)).collect(),
    }
    .serialize(s)
}

/// dist(z, T_0) = ‖r‖_∞.
pub fn distance(z: &PhaseState) -> Float {
    z.action_norm()
}

/// ln s_n = -n²‖k_n‖ for cases iii and iv.
pub fn canonical_log_s(fam: &HamiltonianFamily, n: usize) -> Result<LogAmplitude> {
    let p = fam.pair(n)?;
    if !matches!(fam.variant(), Variant::Iii | Variant::Iv) {
        return Err(Error::VariantMismatch(format!("s_n = e^(-n²‖k_n‖) belongs to cases iii/iv, not {}", fam.variant())));
    }
    let e = Float::with_val(fam.wp(), p.norm()) * (n * n) as u64;
    Ok(LogAmplitude::exp(-e))
}

fn box_sample(fam: &HamiltonianFamily, n: usize, both_signs: bool) -> PhaseState {
    let d = fam.d();
    let prec = fam.wp();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 + n as u64);
    let nf = n as f64;
    let theta: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();
    let mut r: Vec<f64> = (0..d - 1).map(|_| rng.gen_range(-nf..=nf)).collect();
    let mut s = rng.gen_range(1.0 / nf..=nf);
    if both_signs && rng.gen::<bool>() {
        s = -s;
    }
    r.push(s);
    PhaseState::from_f64(&theta, &r, prec)
}

/// The initial condition used in the proof for the family's case.
pub fn canonical_initial_condition(fam: &HamiltonianFamily, n: usize) -> Result<PhaseState> {
    let p = fam.pair(n)?;
    let d = fam.d();
    let prec = fam.wp();
    match fam.variant() {
        Variant::I | Variant::Ii => match &p.s {
            Some(s) => Ok(PhaseState::on_axis(d, Float::with_val(prec, s))),
            None => Err(Error::Invalid(format!("pair {n} has no resonance parameter s"))),
        },
        Variant::Iii | Variant::Iv => {
            let s = canonical_log_s(fam, n)?.to_float(prec);
            Ok(PhaseState::on_axis(d, s))
        }
        Variant::V => Ok(box_sample(fam, n, false)),
        Variant::Vii => Ok(box_sample(fam, n, true)),
        Variant::Vi => Err(Error::Unsupported("variant vi has no diffusing initial condition".into())),
    }
}

/// r~(t) - r~(0) = A + B along the canonical orbit; A is coupling n.
pub fn decompose_ab(fam: &HamiltonianFamily, n: usize, t: &Float) -> Result<AbDecomposition> {
    let z = canonical_initial_condition(fam, n)?;
    decompose_ab_at(fam, n, &z, t)
}

pub(crate) fn decompose_ab_at(fam: &HamiltonianFamily, n: usize, z: &PhaseState, t: &Float) -> Result<AbDecomposition> {
    let fam_n = fam.truncated(n)?;
    let eval = exact_flow_detailed(&fam_n, z, t)?;
    let d = fam.d();
    let prec = eval.work_prec;
    let mut a = vec![Float::new(prec); d - 1];
    let mut b_terms: Vec<Vec<Float>> = vec![vec![]; d - 1];
    for inc in &eval.increments {
        for (i, x) in inc.dr.iter().enumerate() {
            if inc.j == n {
                a[i] = x.clone();
            } else {
                b_terms[i].push(x.clone());
            }
        }
    }
    let b = b_terms.iter().map(|ts| compensated_sum(prec, ts)).collect();
    Ok(AbDecomposition { a, b, resonant_index: Some(n) })
}

/// Closed-form escape time of the canonical orbit (cases i-iv).
pub fn predicted_escape_time(fam: &HamiltonianFamily, n: usize, target: &Float) -> Result<LogAmplitude> {
    let prec = fam.wp();
    if matches!(fam.variant(), Variant::V | Variant::Vi | Variant::Vii) {
        return Err(Error::Unsupported(format!("case {} has no secular term to invert", fam.variant())));
    }
    if target.is_zero() {
        return Ok(LogAmplitude::zero(prec));
    }
    let p = fam.pair(n)?;
    match fam.variant() {
        Variant::I | Variant::Ii => {
            let z = canonical_initial_condition(fam, n)?;
            let phi = fam.coupling(n, z.s()).0.abs();
            let rate = &phi * &LogAmplitude::from_float(&Float::with_val(prec, two_pi(prec) * p.norm()));
            Ok(&LogAmplitude::from_float(&Float::with_val(prec, target.abs_ref())) / &rate)
        }
        Variant::Iii => Ok(canonical_log_s(fam, n)?.powi(-2 * n as i32)),
        _ => Ok(canonical_log_s(fam, n)?.powi(-4)),
    }
}

/// Largest C¹ field perturbation δ keeping the orbit within `slack` of itself up to `t`.
pub fn persistence_delta(fam: &HamiltonianFamily, z: &PhaseState, t: &LogAmplitude, reach: &Float, slack: &Float) -> LogAmplitude {
    let prec = fam.wp();
    if !(*slack > 0u32) {
        return LogAmplitude::zero(prec);
    }
    let s_rad = Float::with_val(prec, z.s().abs_ref());
    let l = lipschitz_bound(fam, &s_rad, reach);
    let ln_slack = Float::with_val(prec, slack.ln_ref());
    if t.is_zero() {
        return LogAmplitude::exp(Float::with_val(prec, rug::float::Special::Infinity));
    }
    if l.is_zero() {
        return LogAmplitude::exp(ln_slack - t.log_mag());
    }
    // ln(e^{LT} - 1) in log form
    let ln_lt = Float::with_val(prec, l.ln_ref()) + t.log_mag();
    let lt = Float::with_val(prec, ln_lt.exp_ref());
    let ln_growth = if lt > 64u32 { lt } else { lt.exp_m1().ln() };
    LogAmplitude::exp(ln_slack + Float::with_val(prec, l.ln_ref()) - ln_growth)
}

/// One row per report: property, n, pass, label, log10 times and distances.
pub fn sweep_csv(reports: &[DiffusionReport]) -> String {
    let mut out = String::from("property,n,pass,label,log10_escape_time,threshold,threshold_reached,margin,log10_persistence_delta\n");
    for r in reports {
        let idx = r.property.as_ref().map(|p| p.index.to_string()).unwrap_or_default();
        let lt = r.escape_time.as_ref().map(|t| format!("{:.12}", t.log10())).unwrap_or_default();
        let lp = r.persistence_delta.as_ref().map(|t| format!("{:.6}", t.log10())).unwrap_or_default();
        out.push_str(&format!(
            "{idx},{},{},{},{lt},{},{},{},{lp}\n",
            r.n,
            r.pass,
            r.label,
            to_decimal_short(&r.threshold, 17),
            to_decimal_short(&r.threshold_reached, 17),
            to_decimal_short(&r.margin, 17),
        ));
    }
    out
}
