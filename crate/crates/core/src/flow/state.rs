use rug::{Float, Integer};

use crate::numeric::split_unit;

/// A point of T^d × R^d; angles in turns, kept in [0, 1).
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseState {
    pub theta: Vec<Float>,
    pub r: Vec<Float>,
    /// Integer parts removed from the angles, when tracked.
    pub winding: Option<Vec<Integer>>,
}

impl PhaseState {
    /// Reduces the angles mod 1.
    pub fn new(theta: Vec<Float>, r: Vec<Float>) -> Self {
        assert_eq!(theta.len(), r.len(), "theta and r lengths differ");
        let mut z = PhaseState { theta, r, winding: None };
        z.normalize();
        z
    }

    pub fn zeros(d: usize, prec: u32) -> Self {
        PhaseState { theta: vec![Float::new(prec); d], r: vec![Float::new(prec); d], winding: None }
    }

    /// θ = 0, r = (0, ..., 0, s).
    pub fn on_axis(d: usize, s: Float) -> Self {
        let prec = s.prec();
        let mut z = Self::zeros(d, prec);
        z.r[d - 1] = s;
        z
    }

    pub fn from_f64(theta: &[f64], r: &[f64], prec: u32) -> Self {
        Self::new(
            theta.iter().map(|x| Float::with_val(prec, *x)).collect(),
            r.iter().map(|x| Float::with_val(prec, *x)).collect(),
        )
    }

    pub fn d(&self) -> usize {
        self.theta.len()
    }

    pub fn s(&self) -> &Float {
        &self.r[self.r.len() - 1]
    }

    fn normalize(&mut self) {
        let mut wind = self.winding.take().unwrap_or_else(|| vec![Integer::new(); self.theta.len()]);
        for (t, w) in self.theta.iter_mut().zip(wind.iter_mut()) {
            let (f, n) = split_unit(t);
            *t = f;
            *w += n;
        }
        if wind.iter().any(|w| *w != 0) {
            self.winding = Some(wind);
        }
    }

    /// Sup norm of the action.
    pub fn action_norm(&self) -> Float {
        crate::numeric::max_abs(&self.r)
    }

    /// Sup norm of r~.
    pub fn r_tilde_norm(&self) -> Float {
        crate::numeric::max_abs(&self.r[..self.r.len() - 1])
    }

    pub fn to_f64(&self) -> (Vec<f64>, Vec<f64>) {
        (self.theta.iter().map(|x| x.to_f64()).collect(), self.r.iter().map(|x| x.to_f64()).collect())
    }
}
