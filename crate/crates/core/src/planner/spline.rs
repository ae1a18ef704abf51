use super::PlannerError;

/// Natural cubic spline through scalar knots.
///
/// Segment `i` is `a + b*dx + c*dx^2 + d*dx^3` with `dx = t - times[i]`.
/// Outside the knot range the end values are held.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicSpline {
    times: Vec<f64>,
    values: Vec<f64>,
    coeffs: Vec<[f64; 4]>,
}

pub fn fit_natural_spline(times: &[f64], values: &[f64]) -> Result<CubicSpline, PlannerError> {
    if times.len() != values.len() {
        return Err(PlannerError::InvalidSpline(format!(
            "{} times but {} values",
            times.len(),
            values.len()
        )));
    }
    if times.len() < 2 {
        return Err(PlannerError::InvalidSpline("need at least 2 waypoints".into()));
    }
    if times.iter().chain(values).any(|v| !v.is_finite()) {
        return Err(PlannerError::InvalidSpline("non-finite waypoint".into()));
    }
    if let Some(w) = times.windows(2).find(|w| w[1] <= w[0]) {
        return Err(PlannerError::InvalidSpline(format!(
            "times must strictly increase ({} then {})",
            w[0], w[1]
        )));
    }

    let n = times.len();
    let h: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    let slope: Vec<f64> = (0..n - 1).map(|i| (values[i + 1] - values[i]) / h[i]).collect();

    // Second derivatives; natural ends are zero. Interior rows form a
    // symmetric diagonally dominant tridiagonal system, solved by Thomas.
    let mut m = vec![0.0; n];
    if n > 2 {
        let k = n - 2;
        let mut diag: Vec<f64> = (0..k).map(|i| 2.0 * (h[i] + h[i + 1])).collect();
        let mut rhs: Vec<f64> = (0..k).map(|i| 6.0 * (slope[i + 1] - slope[i])).collect();
        for i in 1..k {
            let w = h[i] / diag[i - 1];
            diag[i] -= w * h[i];
            rhs[i] -= w * rhs[i - 1];
        }
        m[k] = rhs[k - 1] / diag[k - 1];
        for i in (0..k - 1).rev() {
            m[i + 1] = (rhs[i] - h[i + 1] * m[i + 2]) / diag[i];
        }
    }

    let coeffs = (0..n - 1)
        .map(|i| {
            let a = values[i];
            let b = slope[i] - h[i] * (2.0 * m[i] + m[i + 1]) / 6.0;
            let c = m[i] / 2.0;
            let d = (m[i + 1] - m[i]) / (6.0 * h[i]);
            [a, b, c, d]
        })
        .collect();

    Ok(CubicSpline {
        times: times.to_vec(),
        values: values.to_vec(),
        coeffs,
    })
}

impl CubicSpline {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn coefficients(&self) -> &[[f64; 4]] {
        &self.coeffs
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let i = match self.times.partition_point(|&k| k <= t) {
            0 => 0,
            p => (p - 1).min(self.coeffs.len() - 1),
        };
        (i, t - self.times[i])
    }

    pub fn value(&self, t: f64) -> f64 {
        if t <= self.start() {
            return self.values[0];
        }
        if t >= self.end() {
            return self.values[self.values.len() - 1];
        }
        let (i, dx) = self.locate(t);
        let [a, b, c, d] = self.coeffs[i];
        a + dx * (b + dx * (c + dx * d))
    }

    pub fn derivative(&self, t: f64) -> f64 {
        if t < self.start() || t > self.end() {
            return 0.0;
        }
        let (i, dx) = self.locate(t);
        let [_, b, c, d] = self.coeffs[i];
        b + dx * (2.0 * c + 3.0 * d * dx)
    }

    pub fn second_derivative(&self, t: f64) -> f64 {
        if t < self.start() || t > self.end() {
            return 0.0;
        }
        let (i, dx) = self.locate(t);
        let [_, _, c, d] = self.coeffs[i];
        2.0 * c + 6.0 * d * dx
    }

    /// Second derivative approaching `t` from the left segment.
    pub fn second_derivative_left(&self, t: f64) -> f64 {
        let i = match self.times.partition_point(|&k| k < t) {
            0 => 0,
            p => (p - 1).min(self.coeffs.len() - 1),
        };
        let [_, _, c, d] = self.coeffs[i];
        2.0 * c + 6.0 * d * (t - self.times[i])
    }
}
