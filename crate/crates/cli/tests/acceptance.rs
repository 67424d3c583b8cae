use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rug::ops::Pow;
use rug::{Float, Rational};

use qp_tori::arithmetic::{
    construct_superliouville, resonance_sequence, solve_bar, solve_hat, Branch, FrequencyVector, MapVariant,
    ResonanceOptions, ResonancePair,
};
use qp_tori::diffusion::{
    canonical_initial_condition, canonical_log_s, check_property, distance, escape_time, CheckOptions, PropertyId,
    Strategy,
};
use qp_tori::flow::{exact_flow, numeric_flow_at, oscillation_bound, PhaseState};
use qp_tori::hamiltonian::{CouplingSchedule, FrequencyMap, HamiltonianFamily, Variant};
use qp_tori::normalform::{
    bnf_coefficient, bnf_remainder_order, probe_family, psi_n, symplectic_defect, verify_conjugacy, CanonicalMap,
    Direction,
};
use qp_tori::numeric::{circ_dist, pi, rel_diff, LogAmplitude};
use qp_tori::Error;
use qptori_cli::commands::{self, CertifyOptions, Suite};
use qptori_cli::config::ExperimentConfig;

const P: u32 = 256;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn build(json: &str) -> HamiltonianFamily {
    let cfg = ExperimentConfig::parse(json, None).expect("config");
    commands::build(&cfg).expect("build").0
}

fn sqrt2(prec: u32) -> Float {
    Float::with_val(prec, 2u32).sqrt()
}

fn omega(prec: u32) -> FrequencyVector {
    FrequencyVector::parse(&["1", "sqrt(2)", "sqrt(3)"], prec).unwrap()
}

fn hat_family(variant: Variant, count: usize, prec: u32) -> HamiltonianFamily {
    let opts = ResonanceOptions { count, tolerance: Float::with_val(prec, 1e-30), ..Default::default() };
    let seq = resonance_sequence(&omega(prec), MapVariant::Hat, &opts).unwrap();
    HamiltonianFamily::new(
        FrequencyMap::new(MapVariant::Hat, omega(prec)),
        CouplingSchedule::new(variant).with_c(Float::with_val(prec, 1u32)),
        seq.pairs,
        Float::with_val(prec, 1e-30),
    )
    .unwrap()
}

const FREE_K: [[i64; 2]; 4] = [[-5, 16], [3, -7], [11, -40], [-29, 100]];

fn const_family(variant: Variant, ks: &[[i64; 2]], prec: u32) -> HamiltonianFamily {
    let w = construct_superliouville(3, 2, prec).unwrap().0;
    HamiltonianFamily::new(
        FrequencyMap::new(MapVariant::Const, w),
        CouplingSchedule::new(variant).with_l(2),
        ks.iter().map(|k| ResonancePair::free(k.to_vec())).collect(),
        Float::with_val(prec, 1e-30),
    )
    .unwrap()
}

fn family(variant: Variant, pairs: usize) -> HamiltonianFamily {
    match variant {
        Variant::I | Variant::Ii => hat_family(variant, pairs, P),
        _ => const_family(variant, &FREE_K[..pairs], P),
    }
}

fn state_gap(a: &PhaseState, b: &PhaseState) -> Float {
    let mut worst = Float::new(P);
    for (x, y) in a.theta.iter().zip(&b.theta) {
        worst.max_mut(&circ_dist(x, y));
    }
    for (x, y) in a.r.iter().zip(&b.r) {
        worst.max_mut(&Float::with_val(P, x - y).abs());
    }
    worst
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let w = omega(P);
    let tol = Float::with_val(P, 1e-60);
    let hat = solve_hat(&w, &[-7, 5], &tol).expect("hat root");
    let s = hat.s.unwrap();
    let hat_res = (Float::with_val(P, &s + 1u32) * -7i32 + sqrt2(P) * 5u32).abs();
    let bar = solve_bar(&w, &[-7, 5], &tol).expect("bar root");
    let sb = bar.s.unwrap();
    let c = sqrt2(P) * 5u32 - 7u32;
    let bar_res = (Float::with_val(P, sb.square_ref()) * 5u32 - Float::with_val(P, &sb * 7u32) + c).abs();
    let wr = FrequencyVector::parse(&["1", "-1", "sqrt(3)"], P).unwrap();
    let seq = resonance_sequence(&wr, MapVariant::Bar, &ResonanceOptions::default()).unwrap();
    let exact = seq.pairs.first().and_then(|p| p.s_exact.clone());
    let root_ok = exact == Some(Rational::from((-1, 9)))
        && seq.branch == Branch::Resonant { relation: [1, 1] }
        && seq.pairs[0].k == vec![10, 9];
    let oracle = {
        let q = Rational::from((-1, 9));
        (q.clone().square() * 9u32) + Rational::from(&q * 10u32) + 1u32 == 0u32
    };
    let secs = start.elapsed().as_secs_f64();
    let pass = hat_res < 1e-60 && bar_res < 1e-30 && root_ok && oracle && secs < 1.0;
    outcome(
        pass,
        format!(
            "hat residual {:.3e} (< 1e-60), bar residual {:.3e} (< 1e-30), resonant root {} exact, {:.3}s",
            hat_res.to_f64(),
            bar_res.to_f64(),
            exact.map(|q| q.to_string()).unwrap_or_else(|| "none".into()),
            secs
        ),
    )
}

fn random_points(rng: &mut ChaCha8Rng, count: usize, s: (f64, f64)) -> Vec<PhaseState> {
    (0..count)
        .map(|_| {
            let theta: Vec<f64> = (0..3).map(|_| rng.gen::<f64>()).collect();
            let r = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(s.0..s.1)];
            PhaseState::from_f64(&theta, &r, P)
        })
        .collect()
}

fn s_range(v: Variant) -> (f64, f64) {
    match v {
        Variant::V => (-1.0, -0.1),
        Variant::Vii => (-0.3, 0.3),
        _ => (-0.5, 0.5),
    }
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let tol = Float::with_val(P, 1e-25);
    let (mut res, mut round, mut sym) = (Float::new(P), Float::new(P), Float::new(P));
    let mut rejected = 0;
    for v in Variant::ALL {
        let fam = family(v, 4);
        let pts = random_points(&mut rng, 100, s_range(v));
        for n in 1..=5 {
            let rep = verify_conjugacy(&fam, n, &pts, &tol).unwrap();
            res.max_mut(&rep.max_residual);
            rejected += rep.rejected.len();
            let fwd = CanonicalMap::new(&fam, n, Direction::Forward).unwrap();
            let inv = fwd.inverse();
            for z in &pts {
                let back = psi_n(&inv, &psi_n(&fwd, z).unwrap()).unwrap();
                round.max_mut(&state_gap(&back, z));
                sym.max_mut(&symplectic_defect(&fwd, z).unwrap());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = res < 1e-25 && round < 1e-25 && sym < 1e-15 && rejected == 0 && secs < 10.0;
    outcome(
        pass,
        format!(
            "7 variants, n = 1..5, 100 points: max |H_n - H_0∘Ψ_n| {:.3e}, round trip {:.3e}, symplectic defect {:.3e}, {rejected} rejected, {:.2}s",
            res.to_f64(),
            round.to_f64(),
            sym.to_f64(),
            secs
        ),
    )
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let hat_pairs = {
        let opts = ResonanceOptions { count: 2, tolerance: Float::with_val(P, 1e-30), ..Default::default() };
        (
            resonance_sequence(&omega(P), MapVariant::Hat, &opts).unwrap().pairs,
            resonance_sequence(&omega(P), MapVariant::Bar, &opts).unwrap().pairs,
        )
    };
    let times: Vec<f64> = std::iter::once(1.0).chain((1..=10).map(|i| i as f64 * 100.0)).collect();
    let (mut coord, mut group, mut energy) = (0f64, Float::new(P), Float::new(P));
    let mut failures = vec![];
    for i in 0..20 {
        let v = Variant::ALL[i % 7];
        let n = 1 + rng.gen_range(0..3usize);
        let fam = match v {
            Variant::I | Variant::Ii => {
                let bar = v == Variant::I && rng.gen_bool(0.5);
                let (map, pairs) = if bar { (MapVariant::Bar, &hat_pairs.1) } else { (MapVariant::Hat, &hat_pairs.0) };
                let c = [0.5, 1.0, 2.0][rng.gen_range(0..3)];
                HamiltonianFamily::new(
                    FrequencyMap::new(map, omega(P)),
                    CouplingSchedule::new(v).with_c(Float::with_val(P, c)),
                    pairs[..n - 1].to_vec(),
                    Float::with_val(P, 1e-30),
                )
                .unwrap()
            }
            _ => {
                let ks: Vec<[i64; 2]> = (1..n)
                    .map(|_| loop {
                        let k = [rng.gen_range(-12..=12i64), rng.gen_range(-12..=12i64)];
                        if k != [0, 0] {
                            break k;
                        }
                    })
                    .collect();
                const_family(v, &ks, P)
            }
        };
        let z = random_points(&mut rng, 1, s_range(v)).remove(0);
        let tr = match numeric_flow_at(&fam, &z, &times, 1e-15, 5_000_000) {
            Ok(tr) => tr,
            Err(e) => {
                failures.push(format!("family {i}: {e}"));
                continue;
            }
        };
        let h0 = fam.eval_h(&z);
        for (t, zn) in &tr.samples {
            let ze = exact_flow(&fam, &z, t).unwrap();
            for (a, b) in zn.theta.iter().zip(&ze.theta) {
                coord = coord.max(circ_dist(a, b).to_f64());
            }
            for (a, b) in zn.r.iter().zip(&ze.r) {
                coord = coord.max(Float::with_val(P, a - b).abs().to_f64() / b.to_f64().abs().max(1.0));
            }
            energy.max_mut(&rel_diff(&fam.eval_h(&ze), &h0));
            let third = Float::with_val(P, t / 3u32);
            let rest = Float::with_val(P, t - &third);
            let split = exact_flow(&fam, &exact_flow(&fam, &z, &third).unwrap(), &rest).unwrap();
            for (a, b) in split.theta.iter().zip(&ze.theta) {
                group.max_mut(&circ_dist(a, b));
            }
            for (a, b) in split.r.iter().zip(&ze.r) {
                group.max_mut(&rel_diff(a, b));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = failures.is_empty() && coord < 1e-8 && group < 1e-20 && energy < 1e-20 && secs < 60.0;
    outcome(
        pass,
        format!(
            "20 families over t in [0, 1e3]: max coordinate gap {coord:.3e}, group law {:.3e}, energy {:.3e}, {} failures, {:.2}s",
            group.to_f64(),
            energy.to_f64(),
            failures.len(),
            secs
        ),
    )
}

fn criterion_4() -> Outcome {
    let fam = build(r#"{"theorem":"th1","frequency":{"components":["1","sqrt(2)","sqrt(3)"]},"n":2}"#);
    let k_ok = fam.pair(2).unwrap().k == vec![-7, 5];
    let s2 = fam.pair(2).unwrap().s.clone().unwrap();
    let z = canonical_initial_condition(&fam, 2).unwrap();
    let oracle = |target: u32| {
        let phi = Float::with_val(P, s2.square_ref()) * Float::with_val(P, -14).exp();
        Float::with_val(P, target) / (pi(P) * 2u32 * 7u32 * phi)
    };
    let t_max = LogAmplitude::exp(Float::with_val(P, 40u32));
    let run = |target: u32| {
        let rep = escape_time(&fam, 2, &z, &Float::with_val(P, target), &t_max, Strategy::ClosedFormRoot).unwrap();
        rep.escape_time.map(|t| t.to_float(P))
    };
    let (Some(t1), Some(t2)) = (run(2), run(4)) else {
        return outcome(false, "escape not reached");
    };
    let rel = rel_diff(&t1, &oracle(2));
    let reached = distance(&exact_flow(&fam, &z, &t1).unwrap());
    let confirm = rel_diff(&reached, &Float::with_val(P, 2u32));
    let ratio = Float::with_val(P, &t2 / &t1);
    let doubling = Float::with_val(P, &ratio - 2u32).abs() / 2u32;
    let pass = k_ok && rel < 1e-8 && confirm < 1e-8 && doubling < 1e-10;
    outcome(
        pass,
        format!(
            "k_2 = (-7,5), t* = {:.6e} vs oracle {:.6e} (rel {:.2e}), exact_flow distance 2 to rel {:.2e}, doubling ratio off by {:.2e}",
            t1.to_f64(),
            oracle(2).to_f64(),
            rel.to_f64(),
            confirm.to_f64(),
            doubling.to_f64()
        ),
    )
}

fn criterion_5() -> Outcome {
    let prec = 512;
    let fam = build(
        r#"{"theorem":"th2","precision_bits":512,"frequency":{"components":["1","sqrt(2)","sqrt(3)"]},"C":"1","tau":"1","n":4}"#,
    );
    let one = Float::with_val(prec, 1u32);
    let mut pass = true;
    let mut parts = vec![];
    for n in 2..=4 {
        let pair = fam.pair(n).unwrap();
        let s = pair.s.clone().unwrap().abs();
        let dir2 = Float::with_val(prec, pair.norm()) < Float::with_val(prec, s.clone().sqrt().recip());
        let rep = check_property(&fam, n, &PropertyId::p2(n, one.clone(), one.clone()), &CheckOptions::default()).unwrap();
        let bound = Float::with_val(prec, s.sqrt_ref()).recip();
        let within = rep.escape_time.as_ref().map(|t| *t.log_mag() <= bound).unwrap_or(false);
        let ok = dir2 && rep.pass && within;
        pass &= ok;
        parts.push(format!(
            "k_{n} = {:?}: ln T = {:.2} <= {:.2}, checks {}",
            pair.k,
            rep.escape_time.as_ref().map(|t| t.log_mag().to_f64()).unwrap_or(f64::NAN),
            bound.to_f64(),
            if rep.failed_checks().is_empty() { "all hold".to_string() } else { format!("{} failed", rep.failed_checks().len()) }
        ));
    }
    outcome(pass, parts.join("; "))
}

fn criterion_6() -> Outcome {
    let fam = build(r#"{"theorem":"th03b","precision_bits":512,"frequency":{"superliouville_depth":2},"d":3,"n":2}"#);
    let log_s = canonical_log_s(&fam, 2).unwrap();
    let s_ok = *log_s.log_mag() == -64i32;
    let rep = check_property(&fam, 2, &PropertyId::new(4, 2).unwrap(), &CheckOptions::default()).unwrap();
    let failed: Vec<String> = rep.failed_checks().iter().map(|c| format!("{} ({})", c.name, c.detail)).collect();
    outcome(
        s_ok && rep.pass,
        format!(
            "ln s_2 = {}, label {}, failed: {}",
            log_s.log_mag().to_f64(),
            rep.label,
            if failed.is_empty() { "none".into() } else { failed.join("; ") }
        ),
    )
}

fn criterion_7() -> Outcome {
    let fam = build(r#"{"theorem":"th3","frequency":{"superliouville_depth":2},"d":3,"n":2}"#);
    let rep = check_property(&fam, 2, &PropertyId::new(5, 2).unwrap(), &CheckOptions { grid: 5, ..Default::default() }).unwrap();
    let tau = Float::with_val(P, fam.base_inner(2).abs_ref()).recip();
    let t_ok = rep.escape_time.as_ref().map(|t| t.to_float(P) <= Float::with_val(P, &tau * 1.1)).unwrap_or(false);

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut spot = 0;
    for _ in 0..20 {
        let theta: Vec<f64> = (0..3).map(|_| rng.gen::<f64>()).collect();
        let r = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(0.5..2.0)];
        let z = PhaseState::from_f64(&theta, &r, P);
        let escaped = (1..=110).any(|m| {
            let t = Float::with_val(P, &tau * m) / 100u32;
            distance(&exact_flow(&fam, &z, &t).unwrap()) > 2u32
        });
        spot += escaped as usize;
    }

    let hp = build(r#"{"theorem":"th3","precision_bits":1024,"frequency":{"superliouville_depth":2},"d":3,"n":2}"#);
    let hprec = hp.prec();
    let mut osc_ok = true;
    let mut worst_ratio = 0f64;
    for s in [-0.1, -0.3, -1.0] {
        let theta: Vec<f64> = (0..3).map(|_| rng.gen::<f64>()).collect();
        let z = PhaseState::from_f64(&theta, &[rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), s], hprec);
        let bound = oscillation_bound(&hp, z.s(), None).unwrap();
        for e in (0..=100).step_by(4) {
            let t = Float::with_val(hprec, 10u32).pow(e as u32);
            let zt = exact_flow(&hp, &z, &t).unwrap();
            for i in 0..2 {
                let dev = Float::with_val(hprec, &zt.r[i] - &z.r[i]).abs();
                worst_ratio = worst_ratio.max((dev.clone() / &bound).to_f64());
                osc_ok &= dev <= bound;
            }
        }
    }
    let pts = random_points(&mut rng, 100, (-1.0, -0.1));
    let conj = verify_conjugacy(&fam, 2, &pts, &Float::with_val(P, 1e-25)).unwrap();
    let pass = rep.pass && t_ok && spot == 20 && osc_ok && conj.pass;
    outcome(
        pass,
        format!(
            "n = 2 (depth 2 has one witness pair): P5 {} over {} grid points, escape <= 1.1/|<k_2,w~>|: {t_ok}, random spot checks {spot}/20; s <= -0.1 deviation / oscillation bound <= {worst_ratio:.3} up to t = 1e100; conjugacy on s < 0 residual {:.3e}",
            rep.label,
            rep.points_checked,
            conj.max_residual.to_f64()
        ),
    )
}

fn criterion_8() -> Outcome {
    let th1 = build(r#"{"theorem":"th1","frequency":{"components":["1","sqrt(2)","sqrt(3)"]},"n":3}"#);
    let th3 = build(r#"{"theorem":"th3","frequency":{"superliouville_depth":2},"d":3,"n":2}"#);
    let th03b = build(r#"{"theorem":"th03b","frequency":{"superliouville_depth":2},"d":3,"n":2}"#);
    let mut pass = true;
    let mut parts = vec![];
    for (name, fam) in [("i", &th1), ("v", &th3)] {
        for p in [2u32, 3] {
            let slope = bnf_remainder_order(fam, fam.n(), p).unwrap();
            pass &= slope >= p as f64 + 0.9;
            parts.push(format!("{name} P={p} slope {slope:.3}"));
        }
    }
    let loud = matches!(bnf_coefficient(&th03b, 2), Err(Error::Unsupported(_)))
        && matches!(bnf_remainder_order(&th03b, 2, 2), Err(Error::Unsupported(_)));
    pass &= loud;
    parts.push(format!("iv rejected: {loud}"));
    outcome(pass, parts.join(", "))
}

fn criterion_9() -> Outcome {
    let fam = probe_family(2, 6, P).unwrap();
    let (body, pass) = commands::certify(&fam, Suite::Regularity, &CertifyOptions::default()).unwrap();
    let orders = body["result"]["orders"].as_array().unwrap();
    let last = |i: usize| orders[i]["increments"].as_array().unwrap().last().unwrap().as_str().unwrap().to_string();
    outcome(
        pass,
        format!(
            "order 2 last increment {} (needs < 1e-6, convergent {}), order 3 last increment {} (needs > 1e6, divergent {})",
            last(0),
            orders[0]["convergent"],
            last(1),
            orders[1]["divergent"]
        ),
    )
}

fn criterion_10() -> Outcome {
    let mut pass = true;
    let mut parts = vec![];
    for v in Variant::ALL {
        let fam = family(v, 3);
        let (body, ok) = commands::certify(&fam, Suite::Convergence, &CertifyOptions::default()).unwrap();
        pass &= ok;
        parts.push(format!(
            "{v}: decreasing {} sound {}",
            body["result"]["decreasing"], body["result"]["sound"]
        ));
    }
    outcome(pass, parts.join(", "))
}

/// Known unattainable: 6 (sin dominance), 9 (order-l convergence at this depth).
const EXPECTED_FAILURES: [usize; 2] = [6, 9];

fn main() {
    let criteria: [(usize, fn() -> Outcome); 10] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
    ];
    let only: Option<usize> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let mut surprises = vec![];
    for (i, f) in criteria {
        if only.is_some_and(|o| o != i) {
            continue;
        }
        let o = f();
        let expected = EXPECTED_FAILURES.contains(&i);
        let tag = match (o.pass, expected) {
            (true, false) => "PASS",
            (false, false) => "FAIL",
            (false, true) => "FAIL (expected)",
            (true, true) => "PASS (unexpected)",
        };
        println!("criterion {i:>2}: {tag} | {}", o.detail);
        if o.pass == expected {
            surprises.push(i);
        }
    }
    if !surprises.is_empty() {
        println!("unexpected outcomes: {surprises:?}");
        std::process::exit(1);
    }
}
