use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rug::Float;
use serde::Serialize;
use serde_json::{json, Value};

use qp_tori::arithmetic::{
    construct_superliouville, extend_frequency, resonance_sequence, Branch, FrequencyVector, MapVariant,
    ResonanceOptions, ResonancePair,
};
use qp_tori::diffusion::{
    canonical_initial_condition, check_property, escape_time, CheckOptions, DiffusionReport, PropertyId, Strategy,
};
use qp_tori::flow::{exact_flow, numeric_flow_at, trajectory_csv, Method, PhaseState, Trajectory};
use qp_tori::hamiltonian::{
    choose_next_k, lipschitz_bound, tail_bound, CouplingSchedule, FrequencyMap, HamiltonianFamily, Horizon, Variant,
};
use qp_tori::normalform::{
    bnf_remainder_order, psi_n, regularity_probe, symplectic_defect, verify_conjugacy, CanonicalMap, Direction,
};
use qp_tori::numeric::{circ_dist, pi, to_decimal, to_decimal_short, LogAmplitude};
use qp_tori::{Error, Result};

use crate::config::ExperimentConfig;

fn dec(x: &Float) -> String {
    to_decimal_short(x, 20)
}

fn pair_json(p: &ResonancePair) -> Value {
    json!({
        "k": p.k,
        "s": p.s.as_ref().map(to_decimal),
        "s_exact": p.s_exact.as_ref().map(|q| q.to_string()),
        "log_residual": p.residual_log.as_ref().map(|r| if r.is_infinite() { "-inf".to_string() } else { dec(r) }),
    })
}

fn branch_json(b: &Branch) -> Value {
    match b {
        Branch::Generic => json!("generic"),
        Branch::Witness => json!("witness"),
        Branch::Resonant { relation } => json!({ "resonant": relation }),
    }
}

fn frequency(cfg: &ExperimentConfig) -> Result<FrequencyVector> {
    match cfg.components() {
        Some(c) => FrequencyVector::parse(&c, cfg.prec),
        None => match cfg.frequency {
            crate::config::FrequencySpec::SuperliouvilleDepth(depth) => Ok(construct_superliouville(cfg.d, depth, cfg.prec)?.0),
            _ => unreachable!(),
        },
    }
}

fn resonance_options(cfg: &ExperimentConfig, count: usize) -> ResonanceOptions {
    ResonanceOptions {
        count,
        tau: cfg.tau.clone().or_else(|| (cfg.schedule == Some(Variant::Ii)).then(|| Float::with_val(cfg.prec, 1u32))),
        tolerance: cfg.tolerance.clone(),
        ..Default::default()
    }
}

/// `resonances`: the (k_j, s_j) sequence of a frequency map.
pub fn resonances(cfg: &ExperimentConfig) -> Result<(Value, bool)> {
    let omega = frequency(cfg)?;
    let seq = resonance_sequence(&omega, cfg.map, &resonance_options(cfg, cfg.count))?;
    let pass = seq.shortfall.is_none();
    Ok((
        json!({
            "map": cfg.map,
            "branch": branch_json(&seq.branch),
            "pairs": seq.pairs.iter().map(pair_json).collect::<Vec<_>>(),
            "shortfall": seq.shortfall,
            "pass": pass,
        }),
        pass,
    ))
}

/// `extend-frequency`: Diophantine last components for the configured ω~.
pub fn extend(cfg: &ExperimentConfig) -> Result<(Value, bool)> {
    let omega = frequency(cfg)?;
    let tau = cfg.tau.clone().unwrap_or_else(|| Float::with_val(cfg.prec, 1u32));
    let found = extend_frequency(&omega, &tau, cfg.k_max, cfg.samples, (&cfg.interval.0, &cfg.interval.1))?;
    let pass = !found.is_empty();
    let rows: Vec<Value> = found
        .iter()
        .map(|c| json!({ "omega_d": to_decimal(&c.omega_d), "gamma": dec(&c.gamma), "worst_k": c.worst_k }))
        .collect();
    Ok((
        json!({
            "tau": dec(&tau),
            "k_max": cfg.k_max,
            "samples": cfg.samples,
            "interval": [dec(&cfg.interval.0), dec(&cfg.interval.1)],
            "candidates": rows,
            "pass": pass,
        }),
        pass,
    ))
}

fn probe_pairs(d: usize, n: usize) -> Result<Vec<ResonancePair>> {
    if n > 7 {
        return Err(Error::Capacity(format!("k_j = (2^(j^2), -1) needs j <= 7, got n = {n}")));
    }
    Ok((2..=n)
        .map(|j| {
            let mut k = vec![0i64; d - 1];
            k[0] = 1i64 << (j * j);
            k[1] = -1;
            ResonancePair::free(k)
        })
        .collect())
}

fn property_gate(variant: Variant, n: usize, c: Option<Float>, tau: Float) -> Option<PropertyId> {
    match variant {
        Variant::I => PropertyId::new(1, n).ok(),
        Variant::Ii => Some(PropertyId::p2(n, c.expect("validated"), tau)),
        _ => None,
    }
}

/// `build`: resonance data, then k_2..k_n by the divergence criterion.
pub fn build(cfg: &ExperimentConfig) -> Result<(HamiltonianFamily, Value)> {
    let theorem = cfg.require_theorem()?;
    let variant = theorem.schedule();
    let prec = cfg.prec;
    let omega = frequency(cfg)?;
    let mut schedule = CouplingSchedule::new(variant);
    if let Some(c) = &cfg.c {
        schedule = schedule.with_c(c.clone());
    }
    if let Some(l) = cfg.l {
        schedule = schedule.with_l(l);
    }
    let mut fam = HamiltonianFamily::new(FrequencyMap::new(cfg.map, omega.clone()), schedule, vec![], cfg.tolerance.clone())?;

    let (pinned, mut pool, source) = match (&cfg.pairs, cfg.map) {
        (Some(ks), _) => (true, ks.iter().map(|k| ResonancePair::free(k.clone())).collect::<Vec<_>>(), "explicit"),
        (None, MapVariant::Const) if variant == Variant::Vi && cfg.components().is_some() => {
            (true, probe_pairs(cfg.d, cfg.n)?, "probe growth (2^(j^2), -1)")
        }
        (None, map) => {
            let extra = if map == MapVariant::Const { 0 } else { 4 };
            let seq = resonance_sequence(&omega, map, &resonance_options(cfg, cfg.n - 1 + extra))?;
            (map == MapVariant::Const, seq.pairs, if map == MapVariant::Const { "liouville witnesses" } else { "resonance sequence" })
        }
    };
    let tau = cfg.tau.clone().unwrap_or_else(|| Float::with_val(prec, 1u32));
    let mut steps = vec![];
    while fam.n() < cfg.n {
        let j = fam.n() + 1;
        let horizon = Horizon {
            s_radius: cfg.domain.clone(),
            rho: cfg.rho.clone(),
            time: cfg.horizon_time.clone(),
            lipschitz: lipschitz_bound(&fam, &cfg.domain, &cfg.domain),
        };
        let gate = property_gate(variant, j, cfg.c.clone(), tau.clone());
        let pred = |ext: &HamiltonianFamily| match &gate {
            Some(p) => check_property(ext, j, p, &CheckOptions::default()).map(|r| r.pass).unwrap_or(false),
            None => true,
        };
        let (next, within) = if pinned {
            if pool.is_empty() {
                return Err(Error::NoCandidate(format!("{source} supplies no k_{j}")));
            }
            let cand = pool.remove(0);
            let inf = Float::with_val(prec, rug::float::Special::Infinity);
            let next = choose_next_k(&fam, &inf, &horizon, &[cand], None)?;
            let within = next.divergence <= cfg.delta;
            (next, within)
        } else {
            let next = choose_next_k(&fam, &cfg.delta, &horizon, &pool, gate.as_ref().map(|_| &pred as &dyn Fn(&HamiltonianFamily) -> bool))?;
            let norm = next.pair.norm();
            pool.retain(|p| p.norm() > norm);
            (next, true)
        };
        steps.push(json!({
            "j": j,
            "pair": pair_json(&next.pair),
            "c1_bound": next.c1_bound,
            "divergence": dec(&next.divergence),
            "within_delta": within,
            "property_gate": gate.as_ref().map(|p| format!("P{}", p.index)),
        }));
        fam = fam.with_pair(next.pair)?;
    }

    let mut log = json!({
        "theorem": format!("{theorem:?}").to_lowercase(),
        "map": cfg.map,
        "schedule": variant.to_string(),
        "pair_source": source,
        "delta": dec(&cfg.delta),
        "horizon": { "s_radius": dec(&cfg.domain), "rho": dec(&cfg.rho), "time": dec(&cfg.horizon_time) },
        "steps": steps,
        "frequency_class": format!("{:?}", omega.class_tag),
    });
    if variant == Variant::Ii {
        let c = cfg.c.as_ref().expect("validated");
        let limit = Float::with_val(prec, c / (pi(prec) * 8u32 * cfg.d as u32));
        log["analyticity"] = json!({
            "requirement": "rho < C/(8 pi d)",
            "rho_limit": dec(&limit),
            "rho": dec(&cfg.rho),
            "holds": cfg.rho < limit,
        });
    }
    Ok((fam, log))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Conjugacy,
    Convergence,
    Bnf,
    FlowOracle,
    Regularity,
}

impl std::str::FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "conjugacy" => Suite::Conjugacy,
            "convergence" => Suite::Convergence,
            "bnf" => Suite::Bnf,
            "flow-oracle" | "flow_oracle" => Suite::FlowOracle,
            "regularity" => Suite::Regularity,
            _ => return Err(Error::Parse(format!("unknown suite {s:?}"))),
        })
    }
}

fn s_range(v: Variant) -> (f64, f64) {
    match v {
        Variant::V => (-1.0, -0.1),
        Variant::Vii => (-0.3, 0.3),
        _ => (-0.5, 0.5),
    }
}

pub fn sample_points(fam: &HamiltonianFamily, seed: u64, count: usize) -> Vec<PhaseState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = fam.d();
    let (lo, hi) = s_range(fam.variant());
    (0..count)
        .map(|_| {
            let theta: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();
            let mut r: Vec<f64> = (0..d - 1).map(|_| rng.gen_range(-1.0..1.0)).collect();
            r.push(rng.gen_range(lo..hi));
            PhaseState::from_f64(&theta, &r, fam.prec())
        })
        .collect()
}

fn state_gap(a: &PhaseState, b: &PhaseState, prec: u32) -> Float {
    let mut worst = Float::new(prec);
    for (x, y) in a.theta.iter().zip(&b.theta) {
        worst.max_mut(&circ_dist(x, y));
    }
    for (x, y) in a.r.iter().zip(&b.r) {
        worst.max_mut(&Float::with_val(prec, x - y).abs());
    }
    worst
}

pub struct CertifyOptions {
    pub seed: u64,
    pub points: usize,
    pub delta: Option<Float>,
    pub rho: Option<Float>,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions { seed: 0, points: 100, delta: None, rho: None }
    }
}

pub fn certify(fam: &HamiltonianFamily, suite: Suite, opts: &CertifyOptions) -> Result<(Value, bool)> {
    let body = match suite {
        Suite::Conjugacy => conjugacy(fam, opts)?,
        Suite::Convergence => convergence(fam, opts)?,
        Suite::Bnf => bnf(fam),
        Suite::FlowOracle => flow_oracle(fam, opts),
        Suite::Regularity => regularity(fam)?,
    };
    let pass = body["pass"].as_bool().unwrap_or(false);
    Ok((json!({ "suite": suite, "n": fam.n(), "variant": fam.variant().to_string(), "result": body, "pass": pass }), pass))
}

fn conjugacy(fam: &HamiltonianFamily, opts: &CertifyOptions) -> Result<Value> {
    let prec = fam.wp();
    let tol = Float::with_val(prec, 1e-25);
    let sym_tol = 1e-15;
    let pts = sample_points(fam, opts.seed, opts.points);
    let mut rows = vec![];
    let mut pass = true;
    for n in 1..=fam.n() {
        let rep = verify_conjugacy(fam, n, &pts, &tol)?;
        let fwd = CanonicalMap::new(fam, n, Direction::Forward)?;
        let inv = fwd.inverse();
        let mut round = Float::new(prec);
        for z in &pts {
            if let Ok(img) = psi_n(&fwd, z) {
                if let Ok(back) = psi_n(&inv, &img) {
                    round.max_mut(&state_gap(&back, z, prec));
                }
            }
        }
        let mut sym = Float::new(prec);
        for z in pts.iter().take(20) {
            if let Ok(e) = symplectic_defect(&fwd, z) {
                sym.max_mut(&e);
            }
        }
        let ok = rep.pass && round < tol && sym < sym_tol;
        pass &= ok;
        rows.push(json!({
            "n": n,
            "max_residual": dec(&rep.max_residual),
            "worst_point": rep.worst,
            "rejected": rep.rejected,
            "round_trip": dec(&round),
            "symplectic_defect": dec(&sym),
            "pass": ok,
        }));
    }
    Ok(json!({
        "points": pts.len(),
        "seed": opts.seed,
        "s_range": s_range(fam.variant()),
        "tolerances": { "residual": "1e-25", "round_trip": "1e-25", "symplectic": "1e-15" },
        "rows": rows,
        "pass": pass,
    }))
}

/// sup over a real grid of |H_n - H_from| with |s| <= Δ.
pub fn sampled_tail(fam: &HamiltonianFamily, from: usize, delta: &Float, per_axis: usize) -> Result<Float> {
    let prec = fam.wp();
    let d = fam.d();
    let lo = fam.truncated(from)?;
    let mut worst = Float::new(prec);
    let dims = d - 1;
    let total = per_axis.pow(dims as u32);
    let s_steps = 4 * per_axis + 1;
    for idx in 0..total {
        let mut theta = vec![Float::new(prec); d];
        let mut rest = idx;
        for t in theta.iter_mut().take(dims) {
            *t = Float::with_val(prec, (rest % per_axis) as f64 / per_axis as f64 + 0.0371);
            rest /= per_axis;
        }
        for m in 0..s_steps {
            let frac = -1.0 + 2.0 * m as f64 / (s_steps - 1) as f64;
            let s = Float::with_val(prec, delta * frac);
            let mut r = vec![Float::new(prec); d];
            r[d - 1] = s;
            let z = PhaseState::new(theta.clone(), r);
            let gap = Float::with_val(prec, fam.eval_h(&z) - lo.eval_h(&z)).abs();
            worst.max_mut(&gap);
        }
    }
    Ok(worst)
}

fn convergence(fam: &HamiltonianFamily, opts: &CertifyOptions) -> Result<Value> {
    let prec = fam.wp();
    let delta = opts.delta.clone().unwrap_or_else(|| Float::with_val(prec, 1u32));
    let rho = match (&opts.rho, fam.variant()) {
        (Some(r), _) => r.clone(),
        (None, Variant::Ii) => {
            let c = fam.schedule().c.clone().expect("validated");
            c / (pi(prec) * 16u32 * fam.d() as u32)
        }
        (None, _) => Float::with_val(prec, 1u32),
    };
    let n = fam.n();
    let mut rows = vec![];
    let mut prev: Option<LogAmplitude> = None;
    let mut monotone = true;
    let mut sound = true;
    for from in 1..=n {
        let bound = tail_bound(fam, from, Some(n), &delta, &rho, None)?;
        let sampled = sampled_tail(fam, from, &delta, 8)?;
        let ok = LogAmplitude::from_float(&sampled).cmp_abs(&bound) != std::cmp::Ordering::Greater;
        if let Some(p) = &prev {
            if bound.cmp_abs(p) == std::cmp::Ordering::Greater {
                monotone = false;
            }
        }
        sound &= ok;
        rows.push(json!({ "from": from, "to": n, "bound": bound, "sampled_sup": dec(&sampled), "sound": ok }));
        prev = Some(bound);
    }
    Ok(json!({
        "domain": dec(&delta),
        "rho": dec(&rho),
        "rows": rows,
        "decreasing": monotone,
        "sound": sound,
        "pass": monotone && sound,
    }))
}

fn bnf(fam: &HamiltonianFamily) -> Value {
    let mut rows = vec![];
    let mut pass = true;
    for p in [2u32, 3] {
        match bnf_remainder_order(fam, fam.n(), p) {
            Ok(slope) => {
                let ok = slope >= p as f64 + 0.9;
                pass &= ok;
                rows.push(json!({ "order": p, "slope": if slope.is_finite() { json!(slope) } else { json!("inf") }, "required": p as f64 + 0.9, "pass": ok }));
            }
            Err(e) => {
                pass = false;
                rows.push(json!({ "order": p, "error": e.to_string(), "pass": false }));
            }
        }
    }
    json!({ "rows": rows, "pass": pass })
}

fn flow_oracle(fam: &HamiltonianFamily, opts: &CertifyOptions) -> Value {
    let prec = fam.wp();
    let times = [1.0, 10.0, 100.0, 250.0, 500.0, 750.0, 1000.0];
    let pts = sample_points(fam, opts.seed, 3);
    let mut worst_num = 0f64;
    let mut worst_group = Float::new(prec);
    let mut worst_energy = Float::new(prec);
    let mut errors = vec![];
    for z in &pts {
        let tr = match numeric_flow_at(fam, z, &times, 1e-15, 5_000_000) {
            Ok(tr) => tr,
            Err(e) => {
                errors.push(e.to_string());
                continue;
            }
        };
        let h0 = fam.eval_h(z);
        for (t, zn) in &tr.samples {
            let ze = match exact_flow(fam, z, t) {
                Ok(ze) => ze,
                Err(e) => {
                    errors.push(e.to_string());
                    continue;
                }
            };
            for (a, b) in zn.theta.iter().zip(&ze.theta) {
                worst_num = worst_num.max(circ_dist(a, b).to_f64());
            }
            for (a, b) in zn.r.iter().zip(&ze.r) {
                let scale = b.to_f64().abs().max(1.0);
                worst_num = worst_num.max(Float::with_val(prec, a - b).abs().to_f64() / scale);
            }
            let h = fam.eval_h(&ze);
            let scale = Float::with_val(prec, h0.abs_ref()).max(&Float::with_val(prec, 1u32));
            worst_energy.max_mut(&(Float::with_val(prec, &h - &h0).abs() / scale));
            let half = Float::with_val(prec, t / 2u32);
            let split = exact_flow(fam, z, &half).and_then(|m| exact_flow(fam, &m, &half));
            match split {
                Ok(zz) => {
                    worst_group.max_mut(&state_gap(&zz, &ze, prec));
                }
                Err(e) => errors.push(e.to_string()),
            }
        }
    }
    let pass = errors.is_empty() && worst_num < 1e-8 && worst_group < 1e-20 && worst_energy < 1e-20;
    json!({
        "times": times,
        "points": pts.len(),
        "max_coordinate_gap": worst_num,
        "max_group_law_gap": dec(&worst_group),
        "max_energy_drift": dec(&worst_energy),
        "tolerances": { "coordinate": "1e-8", "group_law": "1e-20", "energy": "1e-20" },
        "errors": errors,
        "pass": pass,
    })
}

fn regularity(fam: &HamiltonianFamily) -> Result<Value> {
    if fam.variant() != Variant::Vi {
        return Err(Error::VariantMismatch(format!("regularity suite needs variant vi, got {}", fam.variant())));
    }
    let l = fam.schedule().l.expect("validated");
    if fam.n() < 3 {
        return Err(Error::Invalid("regularity suite needs n >= 3".into()));
    }
    let d = fam.d();
    let mut theta = vec![0.0; d];
    theta[0] = 0.1;
    theta[1] = 0.2;
    let mut r = vec![0.0; d];
    r[d - 1] = 0.5;
    let probe = PhaseState::from_f64(&theta, &r, fam.prec());
    let mut orders = vec![];
    let mut flags = vec![];
    for m in [l, l + 1] {
        let seq = regularity_probe(fam, m, &probe, 2..=fam.n())?;
        let incr: Vec<Float> = seq
            .windows(2)
            .map(|w| Float::with_val(fam.wp(), &w[1].derivative[0] - &w[0].derivative[0]).abs())
            .collect();
        let last = incr.last().cloned().unwrap_or_else(|| Float::new(fam.wp()));
        let convergent = last < 1e-6;
        let divergent = last > 1e6;
        flags.push((convergent, divergent));
        orders.push(json!({
            "order": m,
            "values": seq.iter().map(|p| json!({ "n": p.n, "value": dec(&p.value), "error": dec(&p.error) })).collect::<Vec<_>>(),
            "increments": incr.iter().map(dec).collect::<Vec<_>>(),
            "convergent": convergent,
            "divergent": divergent,
        }));
    }
    let pass = flags[0].0 && flags[1].1;
    Ok(json!({ "l": l, "probe": { "theta": theta, "s": 0.5 }, "orders": orders, "pass": pass }))
}

pub struct DiffuseOptions {
    pub property: Option<u8>,
    pub n: Option<usize>,
    pub grid: usize,
    pub strategy: Strategy,
    pub tau: Option<Float>,
    pub target: Option<Float>,
    pub log_t_max: f64,
}

impl Default for DiffuseOptions {
    fn default() -> Self {
        DiffuseOptions { property: None, n: None, grid: 5, strategy: Strategy::ClosedFormRoot, tau: None, target: None, log_t_max: 100.0 }
    }
}

pub fn resolve_property(fam: &HamiltonianFamily, n: usize, opts: &DiffuseOptions) -> Result<PropertyId> {
    let index = match opts.property {
        Some(i) => i,
        None => PropertyId::for_variant(fam.variant(), n)?.index,
    };
    if index == 2 {
        let c = fam
            .schedule()
            .c
            .clone()
            .ok_or_else(|| Error::VariantMismatch(format!("P2 needs a variant ii family, got {}", fam.variant())))?;
        let tau = opts.tau.clone().unwrap_or_else(|| Float::with_val(fam.prec(), 1u32));
        return Ok(PropertyId::p2(n, c, tau));
    }
    PropertyId::new(index, n)
}

pub fn diffuse(fam: &HamiltonianFamily, opts: &DiffuseOptions) -> Result<(DiffusionReport, String)> {
    let n = opts.n.unwrap_or(fam.n());
    let report = match &opts.target {
        Some(target) => {
            let z = canonical_initial_condition(fam, n)?;
            let t_max = LogAmplitude::exp(Float::with_val(fam.wp(), opts.log_t_max));
            escape_time(fam, n, &z, target, &t_max, opts.strategy)?
        }
        None => {
            let prop = resolve_property(fam, n, opts)?;
            let copts = CheckOptions { grid: opts.grid, strategy: opts.strategy, ..Default::default() };
            check_property(fam, n, &prop, &copts)?
        }
    };
    let csv = witness_csv(fam, n, &report)?;
    Ok((report, csv))
}

/// Witness orbit at 1000 log-spaced times up to twice the escape time; stops at the first failing sample.
pub fn witness_csv(fam: &HamiltonianFamily, n: usize, report: &DiffusionReport) -> Result<String> {
    let fam_n = fam.truncated(n)?;
    let prec = fam_n.wp();
    let ln_end = match (&report.escape_time, report.time_bounds.first()) {
        (Some(t), _) if !t.is_zero() => Float::with_val(prec, t.log_mag() + Float::with_val(prec, 2u32).ln()),
        (_, Some((_, t))) if !t.is_zero() => t.log_mag().clone(),
        _ => Float::new(prec),
    };
    let six_decades = Float::with_val(prec, 10u32).ln() * 6u32;
    let ln_lo = Float::with_val(prec, &ln_end - &six_decades).min(&Float::new(prec));
    let mut samples = vec![];
    let mut complete = true;
    for i in 0..1000u32 {
        let ln_t = Float::with_val(prec, &ln_end - &ln_lo) * i / 999u32 + &ln_lo;
        let t = ln_t.exp();
        match exact_flow(&fam_n, &report.witness, &t) {
            Ok(z) => samples.push((t, z)),
            Err(_) => {
                complete = false;
                break;
            }
        }
    }
    let tr = Trajectory { samples, method: Method::ClosedForm, max_error: None, complete };
    Ok(trajectory_csv(&fam_n, &tr))
}
