use qp_tori::arithmetic::MapVariant;
use qp_tori::hamiltonian::Variant;
use qp_tori::numeric::{parse_real, pi};
use qp_tori::{Error, Result, DEFAULT_PREC};
use rug::Float;
use serde::Deserialize;
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Theorem {
    Th1,
    Th2,
    Th03a,
    Th03b,
    Th3,
    Th3bis,
    Th4,
}

impl Theorem {
    pub fn schedule(self) -> Variant {
        match self {
            Theorem::Th1 => Variant::I,
            Theorem::Th2 => Variant::Ii,
            Theorem::Th03a => Variant::Iii,
            Theorem::Th03b => Variant::Iv,
            Theorem::Th3 => Variant::V,
            Theorem::Th3bis => Variant::Vi,
            Theorem::Th4 => Variant::Vii,
        }
    }

    pub fn default_map(self) -> MapVariant {
        match self {
            Theorem::Th1 | Theorem::Th2 => MapVariant::Hat,
            _ => MapVariant::Const,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum FrequencySpec {
    Components(Vec<String>),
    SuperliouvilleDepth(usize),
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    pub family: Option<String>,
    pub report: Option<String>,
    pub csv: Option<String>,
}

/// The JSON experiment file. Reals are decimal strings.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    theorem: Option<Theorem>,
    d: Option<usize>,
    precision_bits: Option<u32>,
    frequency: Option<FrequencySpec>,
    map: Option<MapVariant>,
    schedule: Option<Variant>,
    #[serde(rename = "C")]
    c: Option<String>,
    l: Option<u32>,
    tau: Option<String>,
    n: Option<usize>,
    pairs: Option<Vec<Vec<i64>>>,
    residual_tolerance: Option<String>,
    delta: Option<String>,
    domain: Option<String>,
    rho: Option<String>,
    horizon_time: Option<String>,
    count: Option<usize>,
    k_max: Option<u64>,
    samples: Option<usize>,
    interval: Option<[String; 2]>,
    #[serde(default)]
    outputs: Outputs,
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub theorem: Option<Theorem>,
    pub d: usize,
    pub prec: u32,
    pub frequency: FrequencySpec,
    pub map: MapVariant,
    pub schedule: Option<Variant>,
    pub c: Option<Float>,
    pub l: Option<u32>,
    pub tau: Option<Float>,
    pub n: usize,
    pub pairs: Option<Vec<Vec<i64>>>,
    pub tolerance: Float,
    /// δ allowed divergence per added coupling.
    pub delta: Float,
    /// Δ: real |s| radius of the domain.
    pub domain: Float,
    pub rho: Float,
    pub horizon_time: Float,
    pub count: usize,
    pub k_max: u64,
    pub samples: usize,
    pub interval: (Float, Float),
    pub outputs: Outputs,
    /// sha256 of the canonical JSON text.
    pub hash: String,
}

pub fn canonical_hash(v: &serde_json::Value) -> String {
    let text = serde_json::to_string(v).expect("json value");
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn real(field: &str, text: &Option<String>, prec: u32) -> Result<Option<Float>> {
    match text {
        Some(t) => parse_real(t, prec)
            .map(|p| Some(p.value))
            .map_err(|e| Error::Parse(format!("{field}: {e}"))),
        None => Ok(None),
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str, precision_override: Option<u32>) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))?;
        Self::from_value(&value, precision_override)
    }

    pub fn from_value(value: &serde_json::Value, precision_override: Option<u32>) -> Result<Self> {
        let raw: RawConfig = serde_json::from_value(value.clone()).map_err(|e| Error::Parse(format!("config: {e}")))?;
        let prec = precision_override.or(raw.precision_bits).unwrap_or(DEFAULT_PREC);
        if prec < 64 {
            return Err(Error::Parse(format!("precision_bits = {prec} is below 64")));
        }
        let theorem = raw.theorem;
        let frequency = raw.frequency.ok_or_else(|| Error::Parse("config: missing frequency".into()))?;
        let d = match (&frequency, raw.d) {
            (FrequencySpec::Components(c), Some(d)) if c.len() != d => {
                return Err(Error::Parse(format!("d = {d} but {} frequency components", c.len())))
            }
            (FrequencySpec::Components(c), _) => c.len(),
            (FrequencySpec::SuperliouvilleDepth(_), Some(d)) => d,
            (FrequencySpec::SuperliouvilleDepth(_), None) => 3,
        };
        let map = match (theorem, raw.map) {
            (Some(t), Some(m)) => {
                let allowed = match t {
                    Theorem::Th1 => matches!(m, MapVariant::Hat | MapVariant::Bar),
                    _ => m == t.default_map(),
                };
                if !allowed {
                    return Err(Error::Parse(format!("{t:?} fixes the frequency map; {m:?} is not allowed")));
                }
                m
            }
            (Some(t), None) => t.default_map(),
            (None, Some(m)) => m,
            (None, None) => MapVariant::Hat,
        };
        if let (Some(t), Some(v)) = (theorem, raw.schedule) {
            if t.schedule() != v {
                return Err(Error::Parse(format!("{t:?} fixes schedule {}, config says {v}", t.schedule())));
            }
        }
        let schedule = theorem.map(|t| t.schedule()).or(raw.schedule);
        let c = real("C", &raw.c, prec)?;
        if c.is_some() && schedule.is_some() && schedule != Some(Variant::Ii) {
            return Err(Error::Parse("C only applies to th2 (schedule ii)".into()));
        }
        if raw.l.is_some() && schedule.is_some() && schedule != Some(Variant::Vi) {
            return Err(Error::Parse("l only applies to th3bis (schedule vi)".into()));
        }
        if schedule == Some(Variant::Ii) && c.is_none() {
            return Err(Error::Parse("th2 needs C".into()));
        }
        if schedule == Some(Variant::Vi) && raw.l.is_none() {
            return Err(Error::Parse("th3bis needs l".into()));
        }
        if map == MapVariant::Const && matches!(frequency, FrequencySpec::Components(_)) && raw.pairs.is_none() && schedule != Some(Variant::Vi) {
            return Err(Error::Parse("a const-map family needs a super-Liouville frequency or explicit pairs".into()));
        }
        let n = raw.n.unwrap_or(2);
        if n < 1 {
            return Err(Error::Parse("n must be >= 1".into()));
        }
        let tau = real("tau", &raw.tau, prec)?;
        let default_rho = {
            let base = Float::with_val(prec, pi(prec) * 16u32 * d as u32).recip();
            match &c {
                Some(c) => base * c,
                None => base,
            }
        };
        let one = Float::with_val(prec, 1u32);
        let [lo, hi] = raw.interval.unwrap_or_else(|| ["0".into(), "1".into()]);
        Ok(ExperimentConfig {
            theorem,
            d,
            prec,
            frequency,
            map,
            schedule,
            c,
            l: raw.l,
            tau,
            n,
            pairs: raw.pairs,
            tolerance: real("residual_tolerance", &raw.residual_tolerance.or(Some("1e-30".into())), prec)?.unwrap(),
            delta: real("delta", &raw.delta.or(Some("0.1".into())), prec)?.unwrap(),
            domain: real("domain", &raw.domain.or(Some("0.5".into())), prec)?.unwrap(),
            rho: real("rho", &raw.rho, prec)?.unwrap_or(default_rho),
            horizon_time: real("horizon_time", &raw.horizon_time, prec)?.unwrap_or(one),
            count: raw.count.unwrap_or(5),
            k_max: raw.k_max.unwrap_or(20),
            samples: raw.samples.unwrap_or(64),
            interval: (real("interval", &Some(lo), prec)?.unwrap(), real("interval", &Some(hi), prec)?.unwrap()),
            outputs: raw.outputs,
            hash: canonical_hash(value),
        })
    }

    pub fn require_theorem(&self) -> Result<Theorem> {
        self.theorem.ok_or_else(|| Error::Parse("config: missing theorem tag".into()))
    }

    pub fn components(&self) -> Option<Vec<&str>> {
        match &self.frequency {
            FrequencySpec::Components(c) => Some(c.iter().map(|s| s.as_str()).collect()),
            FrequencySpec::SuperliouvilleDepth(_) => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theorem_fixes_map_and_schedule() {
        let c = ExperimentConfig::parse(r#"{"theorem":"th2","frequency":{"components":["1","sqrt(2)","sqrt(3)"]},"C":"1"}"#, None).unwrap();
        assert_eq!(c.map, MapVariant::Hat);
        assert_eq!(c.schedule, Some(Variant::Ii));
        let bad = ExperimentConfig::parse(r#"{"theorem":"th2","map":"bar","frequency":{"components":["1","2","3"]},"C":"1"}"#, None);
        assert!(matches!(bad, Err(Error::Parse(_))));
        let bad = ExperimentConfig::parse(r#"{"theorem":"th1","schedule":"iv","frequency":{"components":["1","2","3"]}}"#, None);
        assert!(matches!(bad, Err(Error::Parse(_))));
        let bar = ExperimentConfig::parse(r#"{"theorem":"th1","map":"bar","frequency":{"components":["1","2","3"]}}"#, None).unwrap();
        assert_eq!(bar.map, MapVariant::Bar);
    }

    #[test]
    fn reals_are_strings_and_unknown_fields_fail() {
        let bad = ExperimentConfig::parse(r#"{"theorem":"th2","frequency":{"components":["1","2","3"]},"C":1}"#, None);
        assert!(bad.is_err());
        let bad = ExperimentConfig::parse(r#"{"theorem":"th1","frequency":{"components":["1","2","3"]},"colour":"red"}"#, None);
        assert!(bad.is_err());
        assert!(ExperimentConfig::parse("{not json", None).is_err());
    }

    #[test]
    fn hash_ignores_key_order_and_whitespace() {
        let a = ExperimentConfig::parse(r#"{"theorem":"th1","frequency":{"components":["1","2","3"]}}"#, None).unwrap();
        let b = ExperimentConfig::parse("{ \"frequency\": {\"components\": [\"1\",\"2\",\"3\"]},\n \"theorem\": \"th1\" }", None).unwrap();
        assert_eq!(a.hash, b.hash);
        assert_eq!(a.hash.len(), 64);
    }

    #[test]
    fn precision_override_wins() {
        let c = ExperimentConfig::parse(r#"{"theorem":"th1","precision_bits":128,"frequency":{"components":["1","2","3"]}}"#, Some(512)).unwrap();
        assert_eq!(c.prec, 512);
        assert_eq!(c.tolerance.prec(), 512);
    }
}
