use rug::Float;

use crate::error::{Error, Result};
use crate::flow::{exact_flow, numeric_flow_at, oscillation_bound, PhaseState};
use crate::hamiltonian::{HamiltonianFamily, Variant};
use crate::numeric::{dot_int, sin_cos_2pi, two_pi, LogAmplitude};

use super::{distance, persistence_delta, Check, DiffusionReport, Strategy};

const NUMERIC_T_MAX: f64 = 1e7;
const SCAN_POINTS: usize = 96;

struct Ctx<'a> {
    fam: HamiltonianFamily,
    z: &'a PhaseState,
    target: &'a Float,
    t_max: Float,
    prec: u32,
}

impl Ctx<'_> {
    fn dist_at(&self, t: &Float) -> Result<Float> {
        if t.is_zero() {
            return Ok(distance(self.z));
        }
        Ok(distance(&exact_flow(&self.fam, self.z, t)?))
    }

    fn reached(&self, d: &Float) -> bool {
        d >= self.target
    }

    /// Persistence is measured a little past the crossing (at most t_max), where the overshoot is not 0.
    fn persistence(&self, t: &Float, reached: &Float) -> Result<LogAmplitude> {
        let prec = self.prec;
        let mut tp = Float::with_val(prec, t * 1.25f64);
        if tp > self.t_max {
            tp = self.t_max.clone();
        }
        let (tp, dp) = if tp > *t { (tp.clone(), self.dist_at(&tp)?) } else { (t.clone(), reached.clone()) };
        let (tp, dp) = if dp > *reached { (tp, dp) } else { (t.clone(), reached.clone()) };
        let slack = Float::with_val(prec, &dp - self.target);
        Ok(persistence_delta(&self.fam, self.z, &LogAmplitude::from_float(&tp), &dp, &slack))
    }

    fn success(&self, t: Float, reached: Float, strategy: Strategy, label: &str) -> DiffusionReport {
        let prec = self.prec;
        let t_log = LogAmplitude::from_float(&t);
        let delta = match self.persistence(&t, &reached) {
            Ok(d) => d,
            Err(_) => LogAmplitude::zero(prec),
        };
        let margin = Float::with_val(prec, &reached / self.target);
        DiffusionReport {
            property: None,
            n: self.fam.n(),
            pass: true,
            label: label.into(),
            witness: self.z.clone(),
            escape_time: Some(t_log),
            threshold: self.target.clone(),
            threshold_reached: reached,
            margin,
            persistence_delta: Some(delta),
            time_bounds: vec![],
            checks: vec![],
            strategy,
            points_checked: 1,
        }
    }

    fn failure(&self, max_seen: Float, strategy: Strategy, checks: Vec<Check>) -> DiffusionReport {
        let margin = Float::with_val(self.prec, &max_seen / self.target);
        DiffusionReport {
            property: None,
            n: self.fam.n(),
            pass: false,
            label: "not-reached".into(),
            witness: self.z.clone(),
            escape_time: None,
            threshold: self.target.clone(),
            threshold_reached: max_seen,
            margin,
            persistence_delta: None,
            time_bounds: vec![],
            checks,
            strategy,
            points_checked: 1,
        }
    }

    /// Least crossing in (lo, hi], given dist(lo) < target <= dist(hi).
    fn bisect(&self, mut lo: Float, mut hi: Float, mut d_hi: Float) -> Result<(Float, Float)> {
        for _ in 0..400 {
            let gap = Float::with_val(self.prec, &hi - &lo);
            let scale = Float::with_val(self.prec, &hi >> 100u32);
            if gap <= scale {
                break;
            }
            let mid = Float::with_val(self.prec, &lo + &hi) / 2u32;
            let dm = self.dist_at(&mid)?;
            if self.reached(&dm) {
                hi = mid;
                d_hi = dm;
            } else {
                lo = mid;
            }
        }
        Ok((hi, d_hi))
    }

    fn scan(&self, from: &Float, t_max: &Float) -> Result<DiffusionReport> {
        let prec = self.prec;
        let one = Float::with_val(prec, 1u32);
        let t_min = if *from > 0u32 {
            from.clone()
        } else {
            Float::with_val(prec, if *t_max < one { t_max.clone() } else { one }) >> 10u32
        };
        let l0 = Float::with_val(prec, t_min.ln_ref());
        let l1 = Float::with_val(prec, t_max.ln_ref());
        let mut prev = if *from > 0u32 { from.clone() } else { Float::new(prec) };
        let mut max_seen = self.dist_at(&prev)?;
        for k in 0..SCAN_POINTS {
            let frac = k as f64 / (SCAN_POINTS - 1) as f64;
            let t = if k + 1 == SCAN_POINTS {
                t_max.clone()
            } else {
                (Float::with_val(prec, &l1 - &l0) * frac + &l0).exp()
            };
            if t <= prev {
                continue;
            }
            let d = self.dist_at(&t)?;
            if self.reached(&d) {
                let (t, d) = self.bisect(prev, t, d)?;
                return Ok(self.success(t, d, Strategy::Bisection, "certified"));
            }
            if d > max_seen {
                max_seen = d;
            }
            prev = t;
        }
        Ok(self.failure(max_seen, Strategy::Bisection, vec![]))
    }

    fn bracket(&self, t_lo: Float, t_hi: Float, t_max: &Float) -> Result<DiffusionReport> {
        let prec = self.prec;
        let eps = Float::with_val(prec, Float::i_exp(1, -60));
        let lo = Float::with_val(prec, &t_lo * (Float::with_val(prec, 1u32) - &eps));
        if lo > *t_max {
            let d = self.dist_at(t_max)?;
            let chk = Check::new("root beyond t_max", false, format!("lower root bound {:.6e} > t_max", t_lo.to_f64()));
            return Ok(self.failure(d, Strategy::ClosedFormRoot, vec![chk]));
        }
        let mut hi = Float::with_val(prec, &t_hi * (Float::with_val(prec, 1u32) + &eps));
        if hi > *t_max {
            hi = t_max.clone();
        }
        let d_hi = self.dist_at(&hi)?;
        if !self.reached(&d_hi) {
            return self.scan(&Float::new(prec), t_max);
        }
        let (lo, d_lo) = if lo > 0u32 { (lo.clone(), self.dist_at(&lo)?) } else { (Float::new(prec), distance(self.z)) };
        let lo = if self.reached(&d_lo) { Float::new(prec) } else { lo };
        let (t, d) = self.bisect(lo, hi, d_hi)?;
        Ok(self.success(t, d, Strategy::ClosedFormRoot, "certified"))
    }

    fn closed_form(&self, t_max: &Float) -> Result<DiffusionReport> {
        let fam = &self.fam;
        let prec = self.prec;
        let d = fam.d();
        let s = self.z.s();
        let snap = Float::with_val(prec, fam.tolerance() * 10u32);
        let mut designated = None;
        for j in 2..=fam.n() {
            let b = fam.map().inner(&fam.pairs()[j - 2].k, s);
            if b.cmp_abs(&snap) == Some(std::cmp::Ordering::Less) {
                designated = Some((j, true));
                break;
            }
        }
        if designated.is_none() && matches!(fam.variant(), Variant::Iii | Variant::Iv) {
            designated = Some((fam.n(), false));
        }
        let Some((j, secular)) = designated else {
            return self.scan(&Float::new(prec), t_max);
        };
        let p = &fam.pairs()[j - 2];
        let Some(bmax) = oscillation_bound(fam, s, Some(j)) else {
            return self.scan(&Float::new(prec), t_max);
        };
        let r0 = self.z.r_tilde_norm();
        let spread = Float::with_val(prec, &r0 + &bmax);
        let phi = fam.coupling(j, s).0.abs().to_float(prec);
        let a = dot_int(prec + 64, &p.k, &self.z.theta[..d - 1]);
        let (sa, ca) = sin_cos_2pi(&a, prec);
        let norm = p.norm();
        let below = Float::with_val(prec, self.target - &spread);
        let above = Float::with_val(prec, self.target + &spread);
        if secular {
            let rate = Float::with_val(prec, &phi * two_pi(prec)) * norm * ca.abs();
            if rate.is_zero() {
                return self.scan(&Float::new(prec), t_max);
            }
            let t_lo = if below > 0u32 { below / &rate } else { Float::new(prec) };
            let t_hi = above / &rate;
            return self.bracket(t_lo, t_hi, t_max);
        }
        if !sa.is_zero() {
            return self.scan(&Float::new(prec), t_max);
        }
        let b = Float::with_val(prec, fam.map().inner(&p.k, s).abs());
        let amp = Float::with_val(prec, &phi * norm) / &b;
        let quarter = Float::with_val(prec, b.recip_ref()) / 4u32;
        let x_lo = Float::with_val(prec, &below / &amp);
        if x_lo > 1u32 {
            let t_peak = if quarter < *t_max { quarter } else { t_max.clone() };
            let d_peak = self.dist_at(&t_peak)?;
            let ceiling = Float::with_val(prec, &amp + &spread);
            let chk = Check::new(
                "oscillation amplitude",
                false,
                format!(
                    "‖k‖φ/|b| + ‖r~(0)‖ + ‖B‖ = e^{:.4} < target e^{:.4}",
                    Float::with_val(64, ceiling.ln_ref()).to_f64(),
                    Float::with_val(64, self.target.ln_ref()).to_f64()
                ),
            );
            return Ok(self.failure(d_peak, Strategy::ClosedFormRoot, vec![chk]));
        }
        let w = Float::with_val(prec, &b * two_pi(prec));
        let t_lo = if below > 0u32 { Float::with_val(prec, x_lo.asin_ref()) / &w } else { Float::new(prec) };
        let x_hi = Float::with_val(prec, &above / &amp);
        let t_hi = if x_hi < 1u32 { x_hi.asin() / &w } else { quarter };
        self.bracket(t_lo, t_hi, t_max)
    }

    fn numeric(&self, t_max: &Float) -> Result<DiffusionReport> {
        let tm = t_max.to_f64();
        if tm > NUMERIC_T_MAX {
            return Err(Error::Invalid(format!("numeric strategy is limited to t <= {NUMERIC_T_MAX:e}, got {tm:e}")));
        }
        let m = 2000;
        let times: Vec<f64> = (1..=m).map(|i| tm * i as f64 / m as f64).collect();
        let tr = numeric_flow_at(&self.fam, self.z, &times, 1e-12, 50_000_000)?;
        let mut prev_t = 0.0;
        let mut prev_d = distance(self.z).to_f64();
        let mut max_seen = distance(self.z);
        let target = self.target.to_f64();
        for (t, st) in &tr.samples {
            let dist = distance(st);
            let df = dist.to_f64();
            if self.reached(&dist) {
                let tf = t.to_f64();
                let est = if df > prev_d { prev_t + (tf - prev_t) * (target - prev_d) / (df - prev_d) } else { tf };
                let t_est = Float::with_val(self.prec, est.max(f64::MIN_POSITIVE));
                let mut rep = self.success(t_est, dist, Strategy::Numeric, "numeric");
                rep.checks.push(Check::new(
                    "integrator error",
                    true,
                    format!("DOP853 error estimate {:.3e}", tr.max_error.unwrap_or(0.0)),
                ));
                return Ok(rep);
            }
            if dist > max_seen {
                max_seen = dist;
            }
            prev_t = t.to_f64();
            prev_d = df;
        }
        let mut checks = vec![];
        if !tr.complete {
            checks.push(Check::new("integration complete", false, "step budget exhausted"));
        }
        Ok(self.failure(max_seen, Strategy::Numeric, checks))
    }
}

/// Least t <= t_max with dist(Φ_n^t(z), T_0) >= target.
pub fn escape_time(
    fam: &HamiltonianFamily,
    n: usize,
    z: &PhaseState,
    target: &Float,
    t_max: &LogAmplitude,
    strategy: Strategy,
) -> Result<DiffusionReport> {
    let fam_n = fam.truncated(n)?;
    if z.d() != fam.d() {
        return Err(Error::Invalid(format!("state dimension {} does not match family dimension {}", z.d(), fam.d())));
    }
    let prec = fam.wp().max(z.r[0].prec());
    if !(*target > distance(z)) {
        return Err(Error::Invalid("target distance must exceed ‖z‖".into()));
    }
    if t_max.sign() <= 0 || !t_max.log_mag().is_finite() {
        return Err(Error::Invalid("t_max must be positive and finite".into()));
    }
    let t_max = t_max.to_float(prec);
    if !t_max.is_finite() {
        return Err(Error::Capacity("t_max exceeds the float exponent range".into()));
    }
    let ctx = Ctx { fam: fam_n, z, target, t_max: t_max.clone(), prec };
    if ctx.fam.n() == 1 {
        let chk = Check::new("integrable", false, "H_1 leaves r invariant");
        return Ok(ctx.failure(distance(z), strategy, vec![chk]));
    }
    match strategy {
        Strategy::ClosedFormRoot => ctx.closed_form(&t_max),
        Strategy::Bisection => ctx.scan(&Float::new(prec), &t_max),
        Strategy::Numeric => ctx.numeric(&t_max),
    }
}

/// escape_time for each target in turn.
pub fn escape_sweep(
    fam: &HamiltonianFamily,
    n: usize,
    z: &PhaseState,
    targets: &[Float],
    t_max: &LogAmplitude,
    strategy: Strategy,
) -> Result<Vec<DiffusionReport>> {
    targets.iter().map(|t| escape_time(fam, n, z, t, t_max, strategy)).collect()
}

/// Whether the witness still crosses the threshold under H_{n+1} at the reported time.
pub fn recheck_witness(extended: &HamiltonianFamily, report: &DiffusionReport) -> Result<bool> {
    let Some(t) = &report.escape_time else {
        return Ok(false);
    };
    let m = (report.n + 1).min(extended.n());
    let fam = extended.truncated(m)?;
    let t = t.to_float(fam.wp());
    let z = exact_flow(&fam, &report.witness, &t)?;
    Ok(distance(&z) >= report.threshold)
}
