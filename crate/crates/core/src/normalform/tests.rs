use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rug::Float;

use super::*;
use crate::arithmetic::{construct_superliouville, resonance_sequence, FrequencyVector, MapVariant, ResonanceOptions, ResonancePair};
use crate::flow::exact_flow;
use crate::hamiltonian::{CouplingSchedule, FrequencyMap, Variant};
use crate::numeric::{circ_dist, pi, sin_cos_2pi, LogAmplitude};

const P: u32 = 256;

fn f(x: f64) -> Float {
    Float::with_val(P, x)
}

fn hat_family(variant: Variant, count: usize) -> HamiltonianFamily {
    let omega = FrequencyVector::parse(&["1", "sqrt(2)", "sqrt(3)"], P).unwrap();
    let opts = ResonanceOptions { count, tolerance: Float::with_val(P, 1e-30), ..Default::default() };
    let seq = resonance_sequence(&omega, MapVariant::Hat, &opts).unwrap();
    assert_eq!(seq.pairs.len(), count);
    HamiltonianFamily::new(
        FrequencyMap::new(MapVariant::Hat, omega),
        CouplingSchedule::new(variant).with_c(f(1.0)),
        seq.pairs,
        Float::with_val(P, 1e-30),
    )
    .unwrap()
}

const FREE_K: [[i64; 2]; 4] = [[-5, 16], [3, -7], [11, -40], [-29, 100]];

fn const_family(variant: Variant, count: usize) -> HamiltonianFamily {
    let omega = construct_superliouville(3, 2, P).unwrap().0;
    HamiltonianFamily::new(
        FrequencyMap::new(MapVariant::Const, omega),
        CouplingSchedule::new(variant).with_l(2),
        FREE_K[..count].iter().map(|k| ResonancePair::free(k.to_vec())).collect(),
        Float::with_val(P, 1e-30),
    )
    .unwrap()
}

fn family(variant: Variant, count: usize) -> HamiltonianFamily {
    match variant {
        Variant::I | Variant::Ii => hat_family(variant, count),
        _ => const_family(variant, count),
    }
}

fn s_range(variant: Variant) -> (f64, f64) {
    match variant {
        Variant::V => (-1.0, -0.1),
        Variant::Vii => (-0.3, 0.3),
        _ => (-0.5, 0.5),
    }
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

fn state_dist(a: &PhaseState, b: &PhaseState) -> Float {
    let mut worst = Float::new(P);
    for (x, y) in a.theta.iter().zip(&b.theta) {
        let e = circ_dist(x, y);
        if e > worst {
            worst = Float::with_val(P, e);
        }
    }
    for (x, y) in a.r.iter().zip(&b.r) {
        let e = Float::with_val(P, x - y).abs();
        if e > worst {
            worst = e;
        }
    }
    worst
}

#[test]
fn zero_phase_shifts_only_theta_d() {
    let fam = hat_family(Variant::I, 1);
    let z = PhaseState::from_f64(&[0.0, 0.0, 0.25], &[0.3, -0.2, 0.05], P);
    let map = CanonicalMap::new(&fam, 2, Direction::Forward).unwrap();
    let img = psi_n(&map, &z).unwrap();
    assert_eq!(img.r, z.r);
    let (_, dg) = generating_terms(&fam, z.s(), P + 64).unwrap()[0].clone();
    let expect = Float::with_val(P, 0.25) - dg / (pi(P + 64) * 2u32);
    assert!(Float::with_val(P, &img.theta[2] - &expect).abs() < 1e-70);
}

#[test]
fn liouville_v_theta_shift_example() {
    let fam = const_family(Variant::V, 1);
    let z = PhaseState::from_f64(&[0.0, 0.0, 0.0], &[0.0, 0.0, -0.5], P);
    let map = CanonicalMap::new(&fam, 2, Direction::Forward).unwrap();
    let img = psi_n(&map, &z).unwrap();
    assert!(img.r[0].is_zero() && img.r[1].is_zero());
    // Θ_d = -(1/2π) ∂_s[s² e^{16 s}] at s = -1/2, i.e. -(1/2π)·3e^{-8}, reduced mod 1
    let g = |s: &Float| Float::with_val(P, s.clone().square()) * Float::with_val(P, s * 16u32).exp();
    let h = f(1e-30);
    let s = f(-0.5);
    let fd = (g(&Float::with_val(P, &s + &h)) - g(&Float::with_val(P, &s - &h))) / Float::with_val(P, &h * 2u32);
    let closed = Float::with_val(P, -8).exp() * 3u32;
    assert!(Float::with_val(P, &fd - &closed).abs() < 1e-50);
    let shift = -closed / (pi(P) * 2u32);
    assert!((shift.to_f64() + 1.60172e-4).abs() < 1e-9);
    let expect = shift + 1u32;
    assert!(Float::with_val(P, &img.theta[2] - &expect).abs() < 1e-70);
}

#[test]
fn round_trip_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for v in Variant::ALL {
        let fam = family(v, 4);
        let pts = random_points(&mut rng, 100, s_range(v));
        for n in 1..=5 {
            let fwd = CanonicalMap::new(&fam, n, Direction::Forward).unwrap();
            let inv = fwd.inverse();
            for z in &pts {
                let back = psi_n(&inv, &psi_n(&fwd, z).unwrap()).unwrap();
                assert!(state_dist(&back, z) < 1e-25, "{v} n={n}");
            }
        }
    }
}

#[test]
fn conjugacy_all_variants() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let tol = f(1e-25);
    for v in Variant::ALL {
        let fam = family(v, 4);
        let pts = random_points(&mut rng, 100, s_range(v));
        for n in 1..=5 {
            let rep = verify_conjugacy(&fam, n, &pts, &tol).unwrap();
            assert!(rep.pass, "{v} n={n}: {}", rep.max_residual);
            assert!(rep.rejected.is_empty());
            if n == 1 {
                assert!(rep.max_residual.is_zero());
            }
        }
    }
}

#[test]
fn printed_sign_breaks_conjugacy() {
    let fam = hat_family(Variant::I, 1);
    let z = PhaseState::from_f64(&[0.1, 0.37, 0.0], &[0.2, 0.1, 0.3], P);
    let map = CanonicalMap::new(&fam, 2, Direction::Inverse).unwrap();
    let img = psi_n(&map, &z).unwrap();
    let gap = Float::with_val(P, fam.eval_h(&z) - h0(&fam, &img));
    let a = crate::numeric::dot_int(P + 64, &[-7, 5], &z.theta[..2]);
    let (sn, _) = sin_cos_2pi(&a, P);
    let phi = fam.coupling(2, z.s()).0.to_float(P);
    let expect = -(phi * sn) * 2u32;
    assert!(Float::with_val(P, &gap - &expect).abs() < 1e-60);
}

#[test]
fn resonant_point_reported_not_fatal() {
    let fam = hat_family(Variant::I, 1);
    let s2 = fam.pair(2).unwrap().s.clone().unwrap();
    let bad = PhaseState::new(vec![f(0.1), f(0.2), f(0.3)], vec![f(0.0), f(0.0), s2]);
    let good = PhaseState::from_f64(&[0.1, 0.2, 0.3], &[0.0, 0.0, 0.2], P);
    let map = CanonicalMap::new(&fam, 2, Direction::Forward).unwrap();
    assert!(matches!(psi_n(&map, &bad), Err(Error::ResonantDenominator { j: 2, .. })));
    let rep = verify_conjugacy(&fam, 2, &[bad, good], &f(1e-25)).unwrap();
    assert!(rep.pass);
    assert_eq!(rep.worst, Some(1));
    assert_eq!(rep.rejected.len(), 1);
}

#[test]
fn symplectic_jacobian() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for v in [Variant::I, Variant::Ii, Variant::Iv, Variant::V, Variant::Vii] {
        let fam = family(v, 3);
        let map = CanonicalMap::new(&fam, 4, Direction::Forward).unwrap();
        for z in random_points(&mut rng, 20, s_range(v)) {
            let e = symplectic_defect(&map, &z).unwrap();
            assert!(e < 1e-15, "{v}: {e}");
        }
    }
}

#[test]
fn flow_conjugacy_to_linear_flow() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for v in [Variant::I, Variant::Iii, Variant::V] {
        let fam = family(v, 2);
        let map = CanonicalMap::new(&fam, 3, Direction::Forward).unwrap();
        for z in random_points(&mut rng, 5, s_range(v)) {
            for t in [0.0, 1.0, 5.0, 10.0] {
                let t = f(t);
                let lhs = psi_n(&map, &exact_flow(map.family(), &z, &t).unwrap()).unwrap();
                let rhs = linear_flow(&fam, &psi_n(&map, &z).unwrap(), &t);
                assert!(state_dist(&lhs, &rhs) < 1e-15, "{v}");
            }
        }
    }
}

#[test]
fn bnf_order_two_is_direct_term() {
    let fam = hat_family(Variant::I, 2);
    let poly = bnf_coefficient(&fam, 2).unwrap();
    assert_eq!(poly.terms.len(), 1);
    assert_eq!(poly.terms[0].k, vec![-7, 5]);
    let c2 = Float::with_val(P, -14).exp();
    let direct = -(c2 / fam.base_inner(2)) / (pi(P) * 2u32);
    assert!(crate::numeric::rel_diff(&poly.terms[0].coeff.to_float(P), &direct) < 1e-60);

    let fam = const_family(Variant::V, 2);
    let poly = bnf_coefficient(&fam, 2).unwrap();
    let expect = -(pi(P) * 2u32).recip();
    assert!(crate::numeric::rel_diff(&poly.terms[0].coeff.to_float(P), &expect) < 1e-60);
}

#[test]
fn bnf_order_three_liouville() {
    let fam = const_family(Variant::V, 2);
    let poly = bnf_coefficient(&fam, 3).unwrap();
    assert_eq!(poly.terms.len(), 2);
    let base = -(pi(P) * 2u32).recip();
    assert_eq!(poly.terms[0].k, vec![-5, 16]);
    assert!(crate::numeric::rel_diff(&poly.terms[0].coeff.to_float(P), &Float::with_val(P, &base * 16u32)) < 1e-60);
    assert_eq!(poly.terms[1].k, vec![3, -7]);
    assert!(crate::numeric::rel_diff(&poly.terms[1].coeff.to_float(P), &base) < 1e-60);
    // s^4 of s^2 e^{16 s}: 16^2/2!
    let poly = bnf_coefficient(&fam, 4).unwrap();
    assert!(crate::numeric::rel_diff(&poly.terms[0].coeff.to_float(P), &Float::with_val(P, &base * 128u32)) < 1e-60);
}

#[test]
fn bnf_hat_series_matches_expansion() {
    // c_j/b (-k_1/b)^l with l = p - j
    let fam = hat_family(Variant::I, 2);
    let poly = bnf_coefficient(&fam, 4).unwrap();
    let tp = pi(P) * 2u32;
    for t in &poly.terms {
        let j = if t.k == fam.pairs()[0].k { 2 } else { 3 };
        let b = fam.base_inner(j).clone();
        let c = Float::with_val(P, -(j as f64)) * fam.pairs()[j - 2].norm();
        let c = c.exp();
        let ratio = Float::with_val(P, -t.k[0]) / &b;
        let l = 4 - j as i32;
        let expect = -(c / &b) * Float::with_val(P, rug::ops::Pow::pow(&ratio, l)) / &tp;
        assert!(crate::numeric::rel_diff(&t.coeff.to_float(P), &expect) < 1e-60);
    }
}

#[test]
fn bnf_variant_iv_fails_loudly() {
    let fam = const_family(Variant::Iv, 2);
    assert!(matches!(bnf_coefficient(&fam, 2), Err(Error::Unsupported(_))));
    assert!(matches!(bnf_remainder_order(&fam, 3, 2), Err(Error::Unsupported(_))));
}

#[test]
fn remainder_order_slopes() {
    assert_eq!(bnf_remainder_order(&hat_family(Variant::I, 2), 1, 2).unwrap(), f64::INFINITY);
    for v in [Variant::I, Variant::V] {
        let fam = family(v, 3);
        for order in [2u32, 3] {
            let slope = bnf_remainder_order(&fam, 4, order).unwrap();
            assert!(slope >= order as f64 + 0.9, "{v} P={order}: {slope}");
        }
    }
    // vi is a finite sum: exact at P >= n
    let fam = const_family(Variant::Vi, 1);
    assert_eq!(bnf_remainder_order(&fam, 2, 2).unwrap(), f64::INFINITY);
}

#[test]
fn trig_polynomial_json_and_merge() {
    let mut p = TrigPolynomial::default();
    p.add_term(vec![1, 2], LogAmplitude::from_float(&f(0.5)));
    p.add_term(vec![1, 2], LogAmplitude::from_float(&f(0.25)));
    p.add_term(vec![0, 1], LogAmplitude::from_float(&f(-1.0)));
    assert_eq!(p.terms.len(), 2);
    let js = serde_json::to_value(&p).unwrap();
    assert_eq!(js[0]["k"], serde_json::json!([1, 2]));
    assert_eq!(js[1]["sign"], -1);
    assert!(js[0]["log_coeff"].as_str().unwrap().starts_with("-2.8768207"));
    let v = p.eval(&[f(0.0), f(0.0)], P);
    assert!(Float::with_val(P, v + 0.25).abs() < 1e-70);
}

fn analytic_derivative(fam: &HamiltonianFamily, n: usize, m: u32, z: &PhaseState) -> Float {
    let prec = 1024;
    let tp = pi(prec) * 2u32;
    let s = Float::with_val(prec, z.s());
    let mut acc = Float::new(prec);
    for j in 2..=n {
        let k = &fam.pairs()[j - 2].k;
        let g = fam.shape(j).rest(&s).to_float(prec);
        let a = crate::numeric::dot_int(prec, k, &z.theta[..2]) + Float::with_val(prec, m) / 4u32;
        let (sn, _) = sin_cos_2pi(&a, prec);
        let fac = Float::with_val(prec, &tp * k[0]);
        acc -= g * k[0] * Float::with_val(prec, rug::ops::Pow::pow(&fac, m)) * sn;
    }
    acc
}

#[test]
fn regularity_probe_matches_analytic_derivatives() {
    let fam = probe_family(2, 5, P).unwrap();
    let z = PhaseState::from_f64(&[0.137, 0.291, 0.0], &[0.0, 0.0, 0.5], P);
    for m in 0..=3 {
        let seq = regularity_probe(&fam, m, &z, 2..=5).unwrap();
        for pt in &seq {
            let oracle = analytic_derivative(&fam, pt.n, m, &z);
            let got = Float::with_val(1024, &pt.derivative[0]);
            assert!(crate::numeric::rel_diff(&got, &oracle) < 1e-30, "m={m} n={}", pt.n);
            assert!(pt.error <= Float::with_val(P, pt.value.clone().abs() * 1e-30) + 1e-70);
        }
    }
}

#[test]
fn regularity_orders_l_and_l_plus_one() {
    let fam = probe_family(2, 6, P).unwrap();
    let z = PhaseState::from_f64(&[0.137, 0.291, 0.0], &[0.0, 0.0, 0.5], P);
    let incr = |m: u32| -> Vec<f64> {
        let seq = regularity_probe(&fam, m, &z, 2..=6).unwrap();
        seq.windows(2)
            .map(|w| Float::with_val(P, &w[1].derivative[0] - &w[0].derivative[0]).abs().to_f64())
            .collect()
    };
    // order l: term bounds |s|^j j^-2 (2π)^l shrink geometrically
    let bound = |j: i32| 0.5f64.powi(j) / (j * j) as f64 * (2.0 * std::f64::consts::PI).powi(2) * 1.0001;
    for (i, x) in incr(2).iter().enumerate() {
        assert!(*x <= bound(i as i32 + 3), "j={} {x}", i + 3);
    }
    let big = incr(3);
    assert!(big.windows(2).all(|w| w[1] > w[0] * 10.0), "{big:?}");
}

#[test]
fn regularity_guards() {
    let fam = const_family(Variant::V, 1);
    let z = PhaseState::from_f64(&[0.1, 0.2, 0.0], &[0.0, 0.0, 0.5], P);
    assert!(matches!(regularity_probe(&fam, 1, &z, 2..=2), Err(Error::VariantMismatch(_))));
    let fam = probe_family(2, 3, P).unwrap();
    assert!(regularity_probe(&fam, 5, &z, 2..=3).is_err());
    let z0 = PhaseState::from_f64(&[0.1, 0.2, 0.0], &[0.0, 0.0, 0.0], P);
    assert!(regularity_probe(&fam, 1, &z0, 2..=3).is_err());
    assert!(matches!(probe_family(2, 8, P), Err(Error::Capacity(_))));
}
