use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::cf::CfCurve;
use crate::{Error, Result};

/// Minimum grid size accepted by [`esseen_numeric`].
pub const ESSEEN_MIN_POINTS: usize = 129;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EsseenResult {
    pub y: f64,
    /// `(1/pi) * integral_{-y}^{y} |c(t) - e^{-t^2/2}| / |t| dt` (trapezoid).
    pub integral: f64,
    /// `24 / (pi sqrt(2 pi) y)`.
    pub smoothing: f64,
    /// `integral + smoothing`.
    pub value: f64,
    /// `|T(grid) - T(every other point)| / pi`, a trapezoid error estimate.
    pub quadrature_error: f64,
}

/// Smoothing-inequality right-hand side from estimated CF values.
///
/// At `t = 0` the integrand is replaced by its limit `|c'(0)|`, estimated by
/// the central difference over the two grid points adjacent to zero.
pub fn esseen_numeric(curve: &CfCurve, y: f64) -> Result<EsseenResult> {
    let t = &curve.t;
    let m = t.len();
    if m < ESSEEN_MIN_POINTS || curve.c.len() != m {
        return Err(Error::Usage(format!(
            "smoothing integral needs at least {ESSEEN_MIN_POINTS} grid points, got {m}"
        )));
    }
    if !(y.is_finite() && y > 0.0) {
        return Err(Error::Domain(format!(
            "smoothing parameter y = {y} must be positive"
        )));
    }
    let tol = 1e-12 * y;
    if (t[0] + y).abs() > tol || (t[m - 1] - y).abs() > tol || !t.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::Usage(format!(
            "grid must increase from -y to y = {y}, got [{}, {}]",
            t[0],
            t[m - 1]
        )));
    }

    let integrand: Vec<f64> = (0..m)
        .map(|i| {
            if t[i] != 0.0 {
                let g = (-0.5 * t[i] * t[i]).exp();
                (curve.c[i] - g).norm() / t[i].abs()
            } else if i > 0 && i + 1 < m {
                ((curve.c[i + 1] - curve.c[i - 1]) / (t[i + 1] - t[i - 1])).norm()
            } else {
                0.0
            }
        })
        .collect();

    let trapezoid = |idx: &[usize]| -> f64 {
        idx.windows(2)
            .map(|w| 0.5 * (integrand[w[0]] + integrand[w[1]]) * (t[w[1]] - t[w[0]]))
            .sum::<f64>()
    };
    let all: Vec<usize> = (0..m).collect();
    let mut coarse: Vec<usize> = (0..m).step_by(2).collect();
    if coarse.last() != Some(&(m - 1)) {
        coarse.push(m - 1);
    }
    let fine = trapezoid(&all);
    let rough = trapezoid(&coarse);

    let integral = fine / PI;
    let smoothing = 24.0 / (PI * (2.0 * PI).sqrt() * y);
    Ok(EsseenResult {
        y,
        integral,
        smoothing,
        value: integral + smoothing,
        quadrature_error: (fine - rough).abs() / PI,
    })
}
