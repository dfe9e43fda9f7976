//! Natural cubic interpolating splines.

/// Natural cubic spline through `(x_k, y_k)` with strictly increasing `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct NaturalCubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    /// second derivatives at the knots
    m: Vec<f64>,
}

impl NaturalCubicSpline {
    /// Returns `None` for fewer than two knots or non-increasing abscissae.
    pub fn new(x: &[f64], y: &[f64]) -> Option<Self> {
        let n = x.len();
        if n < 2 || y.len() != n || x.windows(2).any(|w| !(w[1] > w[0])) {
            return None;
        }
        let mut m = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm on the interior equations
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut upper = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            for i in 1..n - 1 {
                let h0 = x[i] - x[i - 1];
                let h1 = x[i + 1] - x[i];
                diag[i - 1] = 2.0 * (h0 + h1);
                upper[i - 1] = h1;
                rhs[i - 1] = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
            }
            for i in 1..k {
                let lower = x[i + 1] - x[i];
                let w = lower / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            m[k] = rhs[k - 1] / diag[k - 1];
            for i in (0..k - 1).rev() {
                m[i + 1] = (rhs[i] - upper[i] * m[i + 2]) / diag[i];
            }
        }
        Some(NaturalCubicSpline {
            x: x.to_vec(),
            y: y.to_vec(),
            m,
        })
    }

    pub fn knots(&self) -> &[f64] {
        &self.x
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], self.x[self.x.len() - 1])
    }

    fn interval(&self, t: f64) -> usize {
        let i = self.x.partition_point(|&xk| xk <= t);
        i.clamp(1, self.x.len() - 1) - 1
    }

    /// Value on segment `i` (extrapolates the segment cubic outside it).
    pub fn eval_segment(&self, i: usize, t: f64) -> f64 {
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }

    pub fn deriv_segment(&self, i: usize, t: f64) -> f64 {
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        (self.y[i + 1] - self.y[i]) / h
            + ((1.0 - 3.0 * a * a) * self.m[i] + (3.0 * b * b - 1.0) * self.m[i + 1]) * h / 6.0
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.eval_segment(self.interval(t), t)
    }

    pub fn deriv(&self, t: f64) -> f64 {
        self.deriv_segment(self.interval(t), t)
    }

    /// First upward crossing of `level`: the first knot interval with
    /// `y_k < level <= y_{k+1}` is refined by bisection on the spline.
    pub fn first_upward_crossing(&self, level: f64) -> Option<f64> {
        let k = (0..self.x.len() - 1).find(|&k| self.y[k] < level && self.y[k + 1] >= level)?;
        let (mut lo, mut hi) = (self.x[k], self.x[k + 1]);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.eval_segment(k, mid) < level {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        // return whichever bracket end sits closer to the level
        let r_lo = (self.eval_segment(k, lo) - level).abs();
        let r_hi = (self.eval_segment(k, hi) - level).abs();
        Some(if r_lo < r_hi { lo } else { hi })
    }
}
