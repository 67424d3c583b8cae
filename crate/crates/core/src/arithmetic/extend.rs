use std::cmp::Ordering;

use rayon::prelude::*;
use rug::Float;

use super::diophantine::scan_min;
use super::FrequencyVector;
use crate::error::{Error, Result};
use crate::numeric::{frac, ulp};

#[derive(Clone, Debug)]
pub struct ExtensionCandidate {
    pub omega_d: Float,
    /// Largest gamma for which (w~, w_d) passes the finite-range check.
    pub gamma: Float,
    pub worst_k: Vec<i64>,
}

/// Samples w_d on an interval (golden-ratio sequence) and keeps those for which (w~, w_d) is Diophantine on |k| <= K.
pub fn extend_frequency(
    omega_tilde: &FrequencyVector,
    tau: &Float,
    k_max: u64,
    samples: usize,
    interval: (&Float, &Float),
) -> Result<Vec<ExtensionCandidate>> {
    if samples == 0 {
        return Ok(vec![]);
    }
    if *tau <= 0u32 || k_max < 1 {
        return Err(Error::Invalid("extend_frequency needs tau > 0 and K >= 1".into()));
    }
    let base = scan_min(omega_tilde, k_max, tau);
    if base.first().map(|s| s.lo <= 0u32).unwrap_or(true) {
        return Err(Error::Invalid("w~ is not Diophantine on the searched range".into()));
    }
    let prec = omega_tilde.prec();
    let (lo, hi) = interval;
    let width = Float::with_val(prec, hi - lo);
    let golden = (Float::with_val(prec, 5).sqrt() - 1u32) / 2u32;
    let mut out: Vec<ExtensionCandidate> = (1..=samples)
        .into_par_iter()
        .filter_map(|i| {
            let u = frac(&Float::with_val(prec, &golden * i as u64));
            let x = Float::with_val(prec, &width * &u) + lo;
            let full = omega_tilde.appended(x.clone(), ulp(&x));
            let scored = scan_min(&full, k_max, tau);
            let worst = scored.iter().min_by(|a, b| a.lo.partial_cmp(&b.lo).unwrap_or(Ordering::Equal))?;
            (worst.lo > 0u32).then(|| ExtensionCandidate {
                omega_d: x,
                gamma: worst.lo.clone(),
                worst_k: scored[0].k.clone(),
            })
        })
        .collect();
    out.sort_by(|a, b| b.gamma.partial_cmp(&a.gamma).unwrap_or(Ordering::Equal).then(a.omega_d.partial_cmp(&b.omega_d).unwrap_or(Ordering::Equal)));
    Ok(out)
}
