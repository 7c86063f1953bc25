use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Abscissae of the default piecewise-linear sigmoid table.
///
/// ±3 sits between ±2 and ±4: without it the chord over [2, 4] misses the
/// sigmoid by about 0.0215 near x = 2.9.
pub const DEFAULT_PWL_XS: [f64; 13] = [-8.0, -4.0, -3.0, -2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 3.0, 4.0, 8.0];

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Breakpoints `(x, y)` of a piecewise-linear sigmoid approximation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PwlTable {
    points: Vec<(f64, f64)>,
}

impl PwlTable {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::argument("pwl table needs at least one breakpoint"));
        }
        for &(x, y) in &points {
            if !x.is_finite() || !(0.0..=1.0).contains(&y) {
                return Err(Error::argument(format!("pwl breakpoint ({x}, {y}) out of range")));
            }
        }
        for w in points.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::argument("pwl breakpoints must be strictly increasing in x"));
            }
            if w[1].1 < w[0].1 {
                return Err(Error::argument("pwl breakpoints must be non-decreasing in y"));
            }
        }
        Ok(PwlTable { points })
    }

    /// Table whose breakpoints sit on the exact sigmoid at `xs`.
    pub fn sampled(xs: &[f64]) -> Result<Self> {
        Self::new(xs.iter().map(|&x| (x, sigmoid(x))).collect())
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// Linear interpolation between breakpoints, clamped to the end values.
    pub fn eval(&self, x: f64) -> f64 {
        let pts = &self.points;
        let (x0, y0) = pts[0];
        if x <= x0 {
            return y0;
        }
        let (xn, yn) = pts[pts.len() - 1];
        if x >= xn {
            return yn;
        }
        // first breakpoint strictly greater than x; 1 <= hi < len here
        let hi = pts.partition_point(|&(px, _)| px <= x);
        let (xa, ya) = pts[hi - 1];
        let (xb, yb) = pts[hi];
        ya + (x - xa) * (yb - ya) / (xb - xa)
    }

    /// Slope of the segment containing `x` (0 outside the table).
    pub fn slope(&self, x: f64) -> f64 {
        let pts = &self.points;
        if pts.len() < 2 || x <= pts[0].0 || x >= pts[pts.len() - 1].0 {
            return 0.0;
        }
        let hi = pts.partition_point(|&(px, _)| px <= x);
        let (xa, ya) = pts[hi - 1];
        let (xb, yb) = pts[hi];
        (yb - ya) / (xb - xa)
    }
}

impl Default for PwlTable {
    fn default() -> Self {
        PwlTable::sampled(&DEFAULT_PWL_XS).expect("default table is valid")
    }
}

/// Free-function form of [`PwlTable::eval`].
pub fn pwl_sigmoid(x: f64, table: &PwlTable) -> f64 {
    table.eval(x)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ActivationKind {
    #[default]
    ExactSigmoid,
    PwlSigmoid(PwlTable),
}

impl ActivationKind {
    pub fn pwl_default() -> Self {
        ActivationKind::PwlSigmoid(PwlTable::default())
    }

    #[inline]
    pub fn apply(&self, z: f64) -> f64 {
        match self {
            ActivationKind::ExactSigmoid => sigmoid(z),
            ActivationKind::PwlSigmoid(t) => t.eval(z),
        }
    }

    /// d activation / dz, given the pre-activation `z` and the output `y`.
    #[inline]
    pub fn derivative(&self, z: f64, y: f64) -> f64 {
        match self {
            ActivationKind::ExactSigmoid => y * (1.0 - y),
            ActivationKind::PwlSigmoid(t) => t.slope(z),
        }
    }
}
