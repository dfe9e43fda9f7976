//! Front shapes `V(s)` and the composed voltage `v(x, t) = V(t - psi(x))`.

use thiserror::Error;

use crate::activation::ActivationMap;
use crate::ionic::{Ms0dTrace, PLATEAU};
use crate::spline::NaturalCubicSpline;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrontError {
    #[error("front duration epsilon must be > 0, got {0}")]
    InvalidEpsilon(f64),
    #[error("0D trace cannot be centred: {0}")]
    InvalidTrace(String),
}

/// Upstroke level used to centre the 0D trace on the activation time.
pub const CENTERING_LEVEL: f64 = 0.5;

/// Single-cell action potential centred on its upstroke crossing.
#[derive(Debug, Clone, PartialEq)]
pub struct Ms0dFront {
    spline: NaturalCubicSpline,
    offset: f64,
}

impl Ms0dFront {
    pub fn from_trace(trace: &Ms0dTrace) -> Result<Self, FrontError> {
        let spline = NaturalCubicSpline::new(&trace.t, &trace.v)
            .ok_or_else(|| FrontError::InvalidTrace("needs increasing sample times".into()))?;
        let offset = spline
            .first_upward_crossing(CENTERING_LEVEL)
            .ok_or_else(|| FrontError::InvalidTrace("trace never reaches 0.5".into()))?;
        Ok(Ms0dFront { spline, offset })
    }

    /// Trace time aligned with `s = 0`.
    pub fn offset(&self) -> f64 {
        self.offset
    }

    fn eval(&self, s: f64) -> f64 {
        let t = s + self.offset;
        let (lo, hi) = self.spline.domain();
        let values = self.spline.values();
        if t <= lo {
            values[0]
        } else if t >= hi {
            values[values.len() - 1]
        } else {
            self.spline.eval(t)
        }
    }

    fn deriv(&self, s: f64) -> f64 {
        let t = s + self.offset;
        let (lo, hi) = self.spline.domain();
        if t <= lo || t >= hi {
            0.0
        } else {
            self.spline.deriv(t)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FrontShape {
    /// 0 for `s < -eps`, 0.94 for `s > eps`, cubic blend in between.
    SmoothedHeaviside { epsilon: f64 },
    Ms0d(Ms0dFront),
}

impl FrontShape {
    pub fn heaviside(epsilon: f64) -> Result<Self, FrontError> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(FrontError::InvalidEpsilon(epsilon));
        }
        Ok(FrontShape::SmoothedHeaviside { epsilon })
    }

    pub fn ms0d(trace: &Ms0dTrace) -> Result<Self, FrontError> {
        Ms0dFront::from_trace(trace).map(FrontShape::Ms0d)
    }

    pub fn eval(&self, s: f64) -> f64 {
        match self {
            FrontShape::SmoothedHeaviside { epsilon } => {
                let e = *epsilon;
                if s < -e {
                    0.0
                } else if s > e {
                    PLATEAU
                } else {
                    PLATEAU * (-s * s * s / (4.0 * e * e * e) + 3.0 * s / (4.0 * e) + 0.5)
                }
            }
            FrontShape::Ms0d(f) => f.eval(s),
        }
    }

    /// `dV/ds`
    pub fn deriv(&self, s: f64) -> f64 {
        match self {
            FrontShape::SmoothedHeaviside { epsilon } => {
                let e = *epsilon;
                if s.abs() > e {
                    0.0
                } else {
                    PLATEAU * (-3.0 * s * s / (4.0 * e * e * e) + 3.0 / (4.0 * e))
                }
            }
            FrontShape::Ms0d(f) => f.deriv(s),
        }
    }

    pub fn epsilon(&self) -> Option<f64> {
        match self {
            FrontShape::SmoothedHeaviside { epsilon } => Some(*epsilon),
            FrontShape::Ms0d(_) => None,
        }
    }

    /// Short label for reports (`heaviside` / `ms0d`).
    pub fn label(&self) -> &'static str {
        match self {
            FrontShape::SmoothedHeaviside { .. } => "heaviside",
            FrontShape::Ms0d(_) => "ms0d",
        }
    }
}

/// `V(t - psi_i)` on evaluated vertices; unactivated and unevaluated vertices
/// get the resting value 0.
pub fn build_vtilde(shape: &FrontShape, psi: &ActivationMap, t: f64) -> Vec<f64> {
    psi.psi()
        .iter()
        .map(|p| p.map_or(0.0, |tp| shape.eval(t - tp)))
        .collect()
}

/// `V'(t - psi_i)`, the analytic time derivative of [`build_vtilde`].
pub fn build_vtilde_rate(shape: &FrontShape, psi: &ActivationMap, t: f64) -> Vec<f64> {
    psi.psi()
        .iter()
        .map(|p| p.map_or(0.0, |tp| shape.deriv(t - tp)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ionic::{solve_ms_0d, MsParams, SmoothPulse};

    #[test]
    fn heaviside_reference_values() {
        let eps = 2.0;
        let h = FrontShape::heaviside(eps).unwrap();
        assert!(h.eval(-eps).abs() < 1e-15);
        assert!((h.eval(eps) - 0.94).abs() < 1e-15);
        assert!((h.eval(0.0) - 0.47).abs() < 1e-15);
        assert!((h.deriv(0.0) - 0.705 / eps).abs() < 1e-15);
        assert_eq!(h.eval(-10.0), 0.0);
        assert_eq!(h.eval(10.0), 0.94);
        assert!(FrontShape::heaviside(0.0).is_err());
        assert!(FrontShape::heaviside(-1.0).is_err());
    }

    #[test]
    fn heaviside_is_c1_and_monotone() {
        for eps in [0.5, 1.0, 2.5, 5.0] {
            let h = FrontShape::heaviside(eps).unwrap();
            assert!(h.deriv(eps).abs() < 1e-12);
            assert!(h.deriv(-eps).abs() < 1e-12);
            let mut prev = h.eval(-eps);
            for k in 1..=1000 {
                let s = -eps + 2.0 * eps * k as f64 / 1000.0;
                assert!(h.deriv(s) >= -1e-15);
                let v = h.eval(s);
                assert!(v >= prev - 1e-15);
                prev = v;
            }
        }
    }

    #[test]
    fn heaviside_derivative_matches_finite_differences() {
        let h = FrontShape::heaviside(1.7).unwrap();
        for k in -20..=20 {
            let s = k as f64 * 0.081;
            let fd = (h.eval(s + 1e-6) - h.eval(s - 1e-6)) / 2e-6;
            assert!((fd - h.deriv(s)).abs() < 1e-7);
        }
    }

    #[test]
    fn ms0d_front_is_centred() {
        let trace = solve_ms_0d(
            &MsParams::default(),
            &SmoothPulse::default(),
            0.05,
            330.0,
        )
        .unwrap();
        let f = FrontShape::ms0d(&trace).unwrap();
        assert!((f.eval(0.0) - 0.5).abs() < 1e-8);
        assert!(f.eval(-1000.0) == 0.0);
        assert!(f.deriv(0.0) > 0.0);
    }

    #[test]
    fn vtilde_composition() {
        let psi = ActivationMap::from_parts(
            vec![Some(3.0), Some(3.0), None, None],
            vec![true, true, true, false],
            0.5,
        );
        let h = FrontShape::heaviside(1.0).unwrap();
        assert!(build_vtilde(&h, &psi, -100.0).iter().all(|&v| v == 0.0));
        let late = build_vtilde(&h, &psi, 100.0);
        assert_eq!(late, vec![0.94, 0.94, 0.0, 0.0]);
        let mid = build_vtilde(&h, &psi, 3.2);
        assert_eq!(mid[0], mid[1]);
        assert_eq!(mid[0], h.eval(3.2 - 3.0));
    }
}
