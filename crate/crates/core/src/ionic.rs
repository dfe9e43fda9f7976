//! Mitchell-Schaeffer ionic dynamics, the single-cell (0D) action potential
//! trace, and the cubic ionic term constrained to vanish at 0 and 0.94.

use thiserror::Error;

/// Plateau value used for the front shapes and the cubic constraint.
pub const PLATEAU: f64 = 0.94;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IonicError {
    #[error("invalid ionic parameters: {0}")]
    InvalidParameters(String),
    #[error("stimulus below threshold: peak v = {peak}")]
    BelowThreshold { peak: f64 },
    #[error("point {point}: {reason}")]
    DegenerateFit { point: usize, reason: String },
}

/// Mitchell-Schaeffer time constants and gate threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MsParams {
    pub tau_in: f64,
    pub tau_out: f64,
    pub tau_open: f64,
    pub tau_close: f64,
    pub v_gate: f64,
}

impl Default for MsParams {
    fn default() -> Self {
        MsParams {
            tau_in: 0.3,
            tau_out: 6.0,
            tau_open: 120.0,
            tau_close: 150.0,
            v_gate: 0.13,
        }
    }
}

impl MsParams {
    pub fn validate(&self) -> Result<(), IonicError> {
        let taus = [
            ("tau_in", self.tau_in),
            ("tau_out", self.tau_out),
            ("tau_open", self.tau_open),
            ("tau_close", self.tau_close),
        ];
        for (name, tau) in taus {
            if !(tau > 0.0 && tau.is_finite()) {
                return Err(IonicError::InvalidParameters(format!(
                    "{name} must be > 0, got {tau}"
                )));
            }
        }
        if !(self.v_gate > 0.0 && self.v_gate < 1.0) {
            return Err(IonicError::InvalidParameters(format!(
                "v_gate must lie in (0, 1), got {}",
                self.v_gate
            )));
        }
        Ok(())
    }

    /// Gate rate for a given branch (`open == true` when `v < v_gate`).
    fn gate_rate(&self, h: f64, open: bool) -> f64 {
        if open {
            (1.0 - h) / self.tau_open
        } else {
            -h / self.tau_close
        }
    }
}

/// Right-hand side `(dv/dt, dh/dt)` of the Mitchell-Schaeffer model.
pub fn ms_rhs(v: f64, h: f64, p: &MsParams) -> (f64, f64) {
    let dv = h * v * v * (1.0 - v) / p.tau_in - v / p.tau_out;
    (dv, p.gate_rate(h, v < p.v_gate))
}

/// Ionic rate with the gate fully open (`h = 1`), as seen on the front.
pub fn f_ms_reduced(v: f64, p: &MsParams) -> f64 {
    v * v * (1.0 - v) / p.tau_in - v / p.tau_out
}

/// Compactly supported C-infinity pulse
/// `amplitude * exp(1 - 1 / (1 - ((t - t0) / half_width)^2))` on `|t - t0| < half_width`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothPulse {
    pub amplitude: f64,
    pub t0: f64,
    pub half_width: f64,
}

impl Default for SmoothPulse {
    fn default() -> Self {
        SmoothPulse {
            amplitude: 0.5,
            t0: 5.0,
            half_width: 1.0,
        }
    }
}

impl SmoothPulse {
    pub fn value(&self, t: f64) -> f64 {
        let x = (t - self.t0) / self.half_width;
        if x.abs() >= 1.0 || self.amplitude == 0.0 {
            return 0.0;
        }
        self.amplitude * (1.0 - 1.0 / (1.0 - x * x)).exp()
    }

    pub fn validate(&self) -> Result<(), IonicError> {
        if !(self.half_width > 0.0 && self.half_width.is_finite()) {
            return Err(IonicError::InvalidParameters(format!(
                "stimulus half width must be > 0, got {}",
                self.half_width
            )));
        }
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(IonicError::InvalidParameters(format!(
                "stimulus amplitude must be >= 0, got {}",
                self.amplitude
            )));
        }
        Ok(())
    }
}

/// Sampled single-cell trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Ms0dTrace {
    pub t: Vec<f64>,
    pub v: Vec<f64>,
    pub h: Vec<f64>,
}

/// One classical RK4 step with the gate branch frozen.
fn rk4_step(
    v: f64,
    h: f64,
    t: f64,
    dt: f64,
    open: bool,
    p: &MsParams,
    stim: &SmoothPulse,
) -> (f64, f64) {
    let f = |v: f64, h: f64, t: f64| {
        (
            h * v * v * (1.0 - v) / p.tau_in - v / p.tau_out + stim.value(t),
            p.gate_rate(h, open),
        )
    };
    let (k1v, k1h) = f(v, h, t);
    let (k2v, k2h) = f(v + 0.5 * dt * k1v, h + 0.5 * dt * k1h, t + 0.5 * dt);
    let (k3v, k3h) = f(v + 0.5 * dt * k2v, h + 0.5 * dt * k2h, t + 0.5 * dt);
    let (k4v, k4h) = f(v + dt * k3v, h + dt * k3h, t + dt);
    (
        v + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v),
        h + dt / 6.0 * (k1h + 2.0 * k2h + 2.0 * k3h + k4h),
    )
}

/// Integrates the single-cell model from rest `(v, h) = (0, 1)` with fixed
/// step RK4. Steps in which `v` crosses `v_gate` are split at the crossing so
/// the discontinuous gate rate does not degrade the order.
pub fn solve_ms_0d(
    p: &MsParams,
    stim: &SmoothPulse,
    dt: f64,
    t_end: f64,
) -> Result<Ms0dTrace, IonicError> {
    p.validate()?;
    stim.validate()?;
    if !(dt > 0.0 && t_end >= dt) {
        return Err(IonicError::InvalidParameters(format!(
            "need 0 < dt <= T, got dt = {dt}, T = {t_end}"
        )));
    }
    let steps = (t_end / dt).round() as usize;
    let mut trace = Ms0dTrace {
        t: Vec::with_capacity(steps + 1),
        v: Vec::with_capacity(steps + 1),
        h: Vec::with_capacity(steps + 1),
    };
    let (mut v, mut h) = (0.0, 1.0);
    trace.t.push(0.0);
    trace.v.push(v);
    trace.h.push(h);
    for n in 0..steps {
        let t = n as f64 * dt;
        let mut local_t = t;
        let mut remaining = dt;
        let mut open = v < p.v_gate;
        // at most a couple of crossings can occur in one step
        for _ in 0..4 {
            let (v1, h1) = rk4_step(v, h, local_t, remaining, open, p, stim);
            if (v1 < p.v_gate) == open {
                v = v1;
                h = h1;
                remaining = 0.0;
                break;
            }
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                let (vm, _) = rk4_step(v, h, local_t, mid * remaining, open, p, stim);
                if (vm < p.v_gate) == open {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let step = hi * remaining;
            let (vc, hc) = rk4_step(v, h, local_t, step, open, p, stim);
            v = vc;
            h = hc;
            local_t += step;
            remaining -= step;
            open = !open;
        }
        if remaining > 0.0 {
            let (v1, h1) = rk4_step(v, h, local_t, remaining, open, p, stim);
            v = v1;
            h = h1;
        }
        trace.t.push((n + 1) as f64 * dt);
        trace.v.push(v);
        trace.h.push(h);
    }
    if stim.amplitude > 0.0 {
        let peak = trace.v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if peak < 0.5 {
            return Err(IonicError::BelowThreshold { peak });
        }
    }
    Ok(trace)
}

/// `f(v) = a v (v - 0.94) (v - r)`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicIonic {
    pub a: f64,
    pub r: f64,
}

impl CubicIonic {
    pub fn eval(&self, v: f64) -> f64 {
        self.a * v * (v - PLATEAU) * (v - self.r)
    }
}

/// Constrained least-squares cubic through the per-point samples.
///
/// For every point, `f = v (v - 0.94) (c3 v + c2)` is fitted linearly in
/// `(c3, c2)`; then `a = c3`, `r = -c2 / c3`. The result is the mean of the
/// per-point coefficients.
pub fn fit_cubic_ionic(samples: &[Vec<(f64, f64)>]) -> Result<CubicIonic, IonicError> {
    if samples.is_empty() {
        return Err(IonicError::DegenerateFit {
            point: 0,
            reason: "no sample points".into(),
        });
    }
    let mut sum_a = 0.0;
    let mut sum_r = 0.0;
    for (point, pts) in samples.iter().enumerate() {
        if pts.len() < 4 {
            return Err(IonicError::DegenerateFit {
                point,
                reason: format!("need at least 4 samples, got {}", pts.len()),
            });
        }
        let (mut s11, mut s12, mut s22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(v, f) in pts {
            let phi2 = v * (v - PLATEAU);
            let phi1 = v * phi2;
            s11 += phi1 * phi1;
            s12 += phi1 * phi2;
            s22 += phi2 * phi2;
            b1 += phi1 * f;
            b2 += phi2 * f;
        }
        let det = s11 * s22 - s12 * s12;
        if !(det > 1e-12 * s11 * s22) {
            return Err(IonicError::DegenerateFit {
                point,
                reason: "rank-deficient normal equations".into(),
            });
        }
        let c3 = (b1 * s22 - b2 * s12) / det;
        let c2 = (s11 * b2 - s12 * b1) / det;
        if c3 == 0.0 || !c3.is_finite() {
            return Err(IonicError::DegenerateFit {
                point,
                reason: "vanishing leading coefficient".into(),
            });
        }
        sum_a += c3;
        sum_r += -c2 / c3;
    }
    let n = samples.len() as f64;
    Ok(CubicIonic {
        a: sum_a / n,
        r: sum_r / n,
    })
}
