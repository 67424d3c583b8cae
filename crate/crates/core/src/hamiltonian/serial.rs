use rug::{Float, Rational};
use serde::{Deserialize, Serialize};

use super::{CouplingSchedule, FrequencyMap, HamiltonianFamily, Variant};
use crate::arithmetic::{FrequencyVector, MapVariant, ResonancePair};
use crate::error::{Error, Result};
use crate::numeric::{parse_real, to_decimal};

pub const FAMILY_VERSION: &str = "family-v1";

#[derive(Serialize, Deserialize)]
struct ScheduleRepr {
    variant: Variant,
    #[serde(rename = "C")]
    c: Option<String>,
    l: Option<u32>,
}

#[derive(Serialize, Deserialize)]
struct PairRepr {
    k: Vec<i64>,
    s: Option<String>,
    s_exact: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct FamilyRepr {
    version: String,
    d: usize,
    precision: u32,
    map: MapVariant,
    schedule: ScheduleRepr,
    frequency: serde_json::Value,
    residual_tolerance: String,
    pairs: Vec<PairRepr>,
}

impl HamiltonianFamily {
    pub fn to_json(&self) -> serde_json::Value {
        let repr = FamilyRepr {
            version: FAMILY_VERSION.into(),
            d: self.d(),
            precision: self.prec(),
            map: self.map.variant,
            schedule: ScheduleRepr {
                variant: self.schedule.variant,
                c: self.schedule.c.as_ref().map(to_decimal),
                l: self.schedule.l,
            },
            frequency: self.map.base.to_json(),
            residual_tolerance: to_decimal(&self.tolerance),
            pairs: self
                .pairs
                .iter()
                .map(|p| PairRepr {
                    k: p.k.clone(),
                    s: p.s.as_ref().map(to_decimal),
                    s_exact: p.s_exact.as_ref().map(|q| q.to_string()),
                })
                .collect(),
        };
        serde_json::to_value(repr).expect("family serialization")
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let r: FamilyRepr = serde_json::from_value(v.clone()).map_err(|e| Error::Parse(e.to_string()))?;
        if r.version != FAMILY_VERSION {
            return Err(Error::Parse(format!("unsupported family version {:?}", r.version)));
        }
        let base = FrequencyVector::from_json(&r.frequency)?;
        if base.d() != r.d {
            return Err(Error::Parse("family dimension disagrees with its frequency".into()));
        }
        let prec = r.precision;
        let mut schedule = CouplingSchedule::new(r.schedule.variant);
        if let Some(c) = &r.schedule.c {
            schedule = schedule.with_c(parse_real(c, prec)?.value);
        }
        if let Some(l) = r.schedule.l {
            schedule = schedule.with_l(l);
        }
        let tol = parse_real(&r.residual_tolerance, prec)?.value;
        let pairs = r
            .pairs
            .into_iter()
            .map(|p| {
                let s_exact = match &p.s_exact {
                    Some(q) => Some(q.parse::<Rational>().map_err(|e| Error::Parse(format!("s_exact {q:?}: {e}")))?),
                    None => None,
                };
                let s = match (&p.s, &s_exact) {
                    (_, Some(q)) => Some(Float::with_val(prec, q)),
                    (Some(s), None) => Some(parse_real(s, prec)?.value),
                    (None, None) => None,
                };
                let residual_log = None;
                Ok(ResonancePair { k: p.k, s, s_exact, residual_log })
            })
            .collect::<Result<Vec<_>>>()?;
        HamiltonianFamily::new(FrequencyMap::new(r.map, base), schedule, pairs, tol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arithmetic::{construct_superliouville, solve_hat};

    #[test]
    fn round_trip_hat_and_liouville() {
        let omega = FrequencyVector::parse(&["1", "sqrt(2)", "sqrt(3)"], 256).unwrap();
        let tol = Float::with_val(256, 1e-30);
        let p = solve_hat(&omega, &[-7, 5], &tol).unwrap();
        let fam = HamiltonianFamily::new(
            FrequencyMap::new(MapVariant::Hat, omega),
            CouplingSchedule::new(Variant::Ii).with_c(Float::with_val(256, 1)),
            vec![p],
            tol,
        )
        .unwrap();
        let back = HamiltonianFamily::from_json(&fam.to_json()).unwrap();
        assert_eq!(back.to_json(), fam.to_json());
        assert_eq!(back.pair(2).unwrap().s, fam.pair(2).unwrap().s);

        let (omega, _) = construct_superliouville(3, 2, 256).unwrap();
        let fam = HamiltonianFamily::new(
            FrequencyMap::new(MapVariant::Const, omega),
            CouplingSchedule::new(Variant::Vi).with_l(2),
            vec![ResonancePair::free(vec![-5, 16])],
            Float::with_val(64, 1e-30),
        )
        .unwrap();
        let js = fam.to_json();
        assert_eq!(js["version"], "family-v1");
        assert_eq!(js["schedule"]["variant"], "vi");
        let back = HamiltonianFamily::from_json(&js).unwrap();
        assert_eq!(back.base_inner(2), fam.base_inner(2));
    }

    #[test]
    fn wrong_version_rejected() {
        let mut js = serde_json::json!({"version": "family-v0"});
        assert!(HamiltonianFamily::from_json(&js).is_err());
        js["version"] = "x".into();
        assert!(HamiltonianFamily::from_json(&js).is_err());
    }
}
