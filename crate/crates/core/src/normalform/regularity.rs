use std::ops::RangeInclusive;

use rug::ops::Pow;
use rug::Float;
use serde::Serialize;

use crate::arithmetic::{FrequencyVector, MapVariant, ResonancePair};
use crate::error::{Error, Result};
use crate::flow::PhaseState;
use crate::hamiltonian::{CouplingSchedule, FrequencyMap, HamiltonianFamily, Variant};
use crate::numeric::{max_abs, to_decimal_short, MAX_WORK_PREC};

use super::{psi_n, CanonicalMap, Direction};

#[derive(Clone, Debug, Serialize)]
pub struct RegularityPoint {
    pub n: usize,
    #[serde(serialize_with = "ser_float")]
    pub value: Float,
    /// Richardson error estimate.
    #[serde(serialize_with = "ser_float")]
    pub error: Float,
    /// The derivative vector itself (R~ components).
    #[serde(skip)]
    pub derivative: Vec<Float>,
}

fn ser_float<S: serde::Serializer>(x: &Float, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&to_decimal_short(x, 12))
}

/// Variant vi family on ω = (1, √2, √3) with k_j = (2^{j²}, -1), j = 2..=n (n <= 7).
pub fn probe_family(l: u32, n: usize, prec: u32) -> Result<HamiltonianFamily> {
    if !(1..=7).contains(&n) {
        return Err(Error::Capacity(format!("probe family supports n <= 7 (k_8 needs 2^64), got {n}")));
    }
    let omega = FrequencyVector::parse(&["1", "sqrt(2)", "sqrt(3)"], prec)?;
    let pairs = (2..=n).map(|j| ResonancePair::free(vec![1i64 << (j * j), -1])).collect();
    HamiltonianFamily::new(
        FrequencyMap::new(MapVariant::Const, omega),
        CouplingSchedule::new(Variant::Vi).with_l(l),
        pairs,
        Float::with_val(prec, Float::i_exp(1, -(prec as i32) / 2)),
    )
}

fn binomial(m: u32, i: u32) -> u64 {
    (0..i).fold(1u64, |acc, q| acc * (m - q) as u64 / (q + 1) as u64)
}

/// m-th central difference quotient of R~ along θ_1 with step h.
fn central_difference(map: &CanonicalMap, z: &PhaseState, m: u32, h: &Float, prec: u32) -> Result<Vec<Float>> {
    let dm = z.d() - 1;
    let mut acc = vec![Float::new(prec); dm];
    for i in 0..=m {
        let offset = Float::with_val(prec, h * (m as i64 - 2 * i as i64)) / 2u32;
        let mut zz = z.clone();
        zz.theta[0] += &offset;
        let img = psi_n(map, &zz)?;
        let w = binomial(m, i) as f64 * if i % 2 == 0 { 1.0 } else { -1.0 };
        for (a, x) in acc.iter_mut().zip(&img.r[..dm]) {
            *a += Float::with_val(prec, x * w);
        }
    }
    let hm = Float::with_val(prec, h.pow(m));
    Ok(acc.into_iter().map(|a| a / &hm).collect())
}

/// |∂^m_{θ_1} R~(Ψ_n(probe))| for each n, by Richardson-extrapolated central differences.
pub fn regularity_probe(fam: &HamiltonianFamily, m: u32, probe: &PhaseState, n_range: RangeInclusive<usize>) -> Result<Vec<RegularityPoint>> {
    if fam.variant() != Variant::Vi {
        return Err(Error::VariantMismatch(format!("regularity probe needs variant vi, got {}", fam.variant())));
    }
    let l = fam.schedule().l.expect("validated");
    if m > l + 2 {
        return Err(Error::Invalid(format!("derivative order {m} > l + 2 = {}", l + 2)));
    }
    if probe.s().is_zero() {
        return Err(Error::Invalid("probe must have s != 0".into()));
    }
    let mut out = vec![];
    for n in n_range {
        let map = CanonicalMap::new(fam, n, Direction::Forward)?;
        let kmax = map.family().pairs().iter().map(|p| p.k[0].unsigned_abs()).max().unwrap_or(1).max(1);
        let kbits = 64 - kmax.leading_zeros();
        let prec = fam.wp() + 48 * (m + 1);
        let rel_bits = prec / (m + 2);
        if kbits + rel_bits + 32 > prec {
            let need = (kbits + 32) as u64 * (m as u64 + 2) / (m as u64 + 1) + 64;
            return Err(Error::precision(format!("difference step for ‖k‖ = {kmax}"), need));
        }
        if prec > MAX_WORK_PREC {
            return Err(Error::precision("regularity probe", prec as u64));
        }
        let z = PhaseState {
            theta: probe.theta.iter().map(|x| Float::with_val(prec, x)).collect(),
            r: probe.r.iter().map(|x| Float::with_val(prec, x)).collect(),
            winding: None,
        };
        if m == 0 {
            let img = psi_n(&map, &z)?;
            let dm = z.d() - 1;
            let v = img.r[..dm].to_vec();
            out.push(RegularityPoint { n, value: max_abs(&v), error: Float::new(prec), derivative: v });
            continue;
        }
        let h = Float::with_val(prec, Float::i_exp(1, -(rel_bits as i32))) / (kmax as f64 * 2.0 * std::f64::consts::PI);
        let coarse = central_difference(&map, &z, m, &h, prec)?;
        let half = Float::with_val(prec, &h / 2u32);
        let fine = central_difference(&map, &z, m, &half, prec)?;
        let rich: Vec<Float> =
            fine.iter().zip(&coarse).map(|(f, c)| (Float::with_val(prec, f * 4u32) - c) / 3u32).collect();
        let diffs: Vec<Float> = rich.iter().zip(&fine).map(|(r, f)| Float::with_val(prec, r - f)).collect();
        out.push(RegularityPoint { n, value: max_abs(&rich), error: max_abs(&diffs), derivative: rich });
    }
    Ok(out)
}
