//! Frequency vectors and their arithmetic: Diophantine certificates, Liouville witnesses, resonances.

use rug::{Float, Rational};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{self, parse_real, to_decimal};

mod diophantine;
mod extend;
mod liouville;
mod resonance;

pub use diophantine::{diophantine_check, dirichlet_best, convergents, DiophantineCertificate, DirichletOutcome};
pub use extend::{extend_frequency, ExtensionCandidate};
pub use liouville::{construct_superliouville, tower_exponent, MAX_DEPTH};
pub use resonance::{
    resonance_sequence, solve_bar, solve_hat, Branch, MapVariant, ResonanceOptions, ResonancePair, ResonanceSequence,
};

#[derive(Clone, Debug, PartialEq)]
pub enum ClassTag {
    Unknown,
    DiophantineChecked { k_max: u64, tau: Float, gamma: Float },
    LiouvilleConstructed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LiouvilleWitness {
    pub k_bar: Vec<i64>,
    pub inner_log: Float,
    pub ratio: Float,
}

/// A real frequency vector at fixed precision, each component enclosed by an absolute radius.
#[derive(Clone, Debug)]
pub struct FrequencyVector {
    components: Vec<Float>,
    radius: Vec<Float>,
    exact: Vec<Option<Rational>>,
    pub class_tag: ClassTag,
    pub witnesses: Vec<LiouvilleWitness>,
    prec: u32,
}

impl FrequencyVector {
    /// Full frequency vector (d >= 3).
    pub fn new(components: Vec<Float>, radius: Vec<Float>) -> Result<Self> {
        if components.len() < 3 {
            return Err(Error::Invalid(format!("frequency dimension {} < 3", components.len())));
        }
        Self::partial(components, radius)
    }

    /// Sub-vector such as the first d-1 components; any positive length.
    pub fn partial(components: Vec<Float>, radius: Vec<Float>) -> Result<Self> {
        if components.is_empty() || components.len() != radius.len() {
            return Err(Error::Invalid("component/radius length mismatch".into()));
        }
        let prec = components.iter().map(|c| c.prec()).max().unwrap_or(numeric::DEFAULT_PREC);
        let exact = components
            .iter()
            .zip(&radius)
            .map(|(c, r)| if r.is_zero() { c.to_rational() } else { None })
            .collect();
        Ok(FrequencyVector { components, radius, exact, class_tag: ClassTag::Unknown, witnesses: vec![], prec })
    }

    pub fn parse(texts: &[&str], prec: u32) -> Result<Self> {
        let mut comps = vec![];
        let mut rads = vec![];
        let mut exact = vec![];
        for t in texts {
            let p = parse_real(t, prec)?;
            comps.push(p.value);
            rads.push(p.radius);
            exact.push(p.exact);
        }
        let mut fv = if comps.len() >= 3 { Self::new(comps, rads)? } else { Self::partial(comps, rads)? };
        fv.exact = exact;
        Ok(fv)
    }

    pub fn d(&self) -> usize {
        self.components.len()
    }

    pub fn prec(&self) -> u32 {
        self.prec
    }

    pub fn components(&self) -> &[Float] {
        &self.components
    }

    pub fn radius(&self) -> &[Float] {
        &self.radius
    }

    /// Exact rational value of a component when known.
    pub fn exact(&self, i: usize) -> Option<&Rational> {
        self.exact.get(i).and_then(|e| e.as_ref())
    }

    /// First `m` components.
    pub fn head(&self, m: usize) -> FrequencyVector {
        FrequencyVector {
            components: self.components[..m].to_vec(),
            radius: self.radius[..m].to_vec(),
            exact: self.exact[..m].to_vec(),
            class_tag: ClassTag::Unknown,
            witnesses: vec![],
            prec: self.prec,
        }
    }

    pub fn appended(&self, x: Float, radius: Float) -> FrequencyVector {
        let mut out = self.head(self.d());
        out.exact.push(if radius.is_zero() { x.to_rational() } else { None });
        out.components.push(x);
        out.radius.push(radius);
        out
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.to_f64()).collect()
    }

    /// Enclosure of <omega, k>.
    pub fn dot_enclosure(&self, k: &[i64]) -> (Float, Float) {
        numeric::dot_int_enclosure(self.prec + 64, k, &self.components[..k.len()], &self.radius[..k.len()])
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(FrequencyRepr::from(self)).expect("frequency serialization")
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let r: FrequencyRepr = serde_json::from_value(v.clone()).map_err(|e| Error::Parse(e.to_string()))?;
        r.into_vector()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ClassRepr {
    Unknown,
    DiophantineChecked { k_max: u64, tau: String, gamma: String },
    LiouvilleConstructed,
}

#[derive(Serialize, Deserialize)]
struct WitnessRepr {
    k_bar: Vec<i64>,
    inner_log: String,
    ratio: String,
}

#[derive(Serialize, Deserialize)]
struct FrequencyRepr {
    d: usize,
    precision: u32,
    components: Vec<String>,
    radius: Vec<String>,
    class_tag: ClassRepr,
    #[serde(default)]
    witnesses: Vec<WitnessRepr>,
}

impl From<&FrequencyVector> for FrequencyRepr {
    fn from(f: &FrequencyVector) -> Self {
        FrequencyRepr {
            d: f.d(),
            precision: f.prec,
            components: f.components.iter().map(to_decimal).collect(),
            radius: f.radius.iter().map(to_decimal).collect(),
            class_tag: match &f.class_tag {
                ClassTag::Unknown => ClassRepr::Unknown,
                ClassTag::DiophantineChecked { k_max, tau, gamma } => ClassRepr::DiophantineChecked {
                    k_max: *k_max,
                    tau: to_decimal(tau),
                    gamma: to_decimal(gamma),
                },
                ClassTag::LiouvilleConstructed => ClassRepr::LiouvilleConstructed,
            },
            witnesses: f
                .witnesses
                .iter()
                .map(|w| WitnessRepr { k_bar: w.k_bar.clone(), inner_log: to_decimal(&w.inner_log), ratio: to_decimal(&w.ratio) })
                .collect(),
        }
    }
}

impl FrequencyRepr {
    fn into_vector(self) -> Result<FrequencyVector> {
        let prec = self.precision;
        if self.components.len() != self.d || self.radius.len() != self.d {
            return Err(Error::Parse("frequency length mismatch".into()));
        }
        let p = |s: &str| parse_real(s, prec).map(|x| x.value);
        let comps = self.components.iter().map(|s| p(s)).collect::<Result<Vec<_>>>()?;
        let rads = self
            .radius
            .iter()
            .map(|s| parse_real(s, prec).map(|x| x.value.abs()))
            .collect::<Result<Vec<_>>>()?;
        let mut fv = FrequencyVector::partial(comps, rads)?;
        fv.prec = prec;
        fv.class_tag = match self.class_tag {
            ClassRepr::Unknown => ClassTag::Unknown,
            ClassRepr::DiophantineChecked { k_max, tau, gamma } => {
                ClassTag::DiophantineChecked { k_max, tau: p(&tau)?, gamma: p(&gamma)? }
            }
            ClassRepr::LiouvilleConstructed => ClassTag::LiouvilleConstructed,
        };
        let wprec = prec + 64;
        fv.witnesses = self
            .witnesses
            .into_iter()
            .map(|w| {
                Ok(LiouvilleWitness {
                    k_bar: w.k_bar,
                    inner_log: parse_real(&w.inner_log, wprec)?.value,
                    ratio: parse_real(&w.ratio, wprec)?.value,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if fv.class_tag == ClassTag::LiouvilleConstructed && fv.witnesses.is_empty() {
            return Err(Error::Parse("liouville_constructed vector without witnesses".into()));
        }
        Ok(fv)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimension_guard() {
        assert!(FrequencyVector::parse(&["1", "2"], 64).unwrap().d() == 2);
        let c = vec![Float::with_val(64, 1), Float::with_val(64, 2)];
        let r = vec![Float::new(64), Float::new(64)];
        assert!(FrequencyVector::new(c, r).is_err());
    }

    #[test]
    fn json_roundtrip() {
        let (w, _) = construct_superliouville(4, 2, 256).unwrap();
        let j = w.to_json();
        let back = FrequencyVector::from_json(&j).unwrap();
        assert_eq!(back.components(), w.components());
        assert_eq!(back.witnesses.len(), 2);
        assert_eq!(back.class_tag, ClassTag::LiouvilleConstructed);
        assert_eq!(back.witnesses[1].k_bar, vec![-5, 16, 0]);
    }

    #[test]
    fn exact_components_tracked() {
        let f = FrequencyVector::parse(&["1", "-1", "sqrt(3)"], 256).unwrap();
        assert_eq!(f.exact(1), Some(&Rational::from(-1)));
        assert!(f.exact(2).is_none());
    }
}
