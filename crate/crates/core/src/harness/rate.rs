use serde::{Deserialize, Serialize};

use super::bounds::BoundReport;
use crate::{Error, Result};

/// One-sided pass threshold on the fitted slope of `log d` against `log n`.
pub const RATE_SLOPE_CEILING: f64 = -0.15;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub points: usize,
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    /// `slope <= RATE_SLOPE_CEILING`.
    pub pass: bool,
}

/// Least-squares slope of `log d_F` over `log n` across distance reports.
pub fn rate_fit(reports: &[BoundReport]) -> Result<RateFit> {
    let pts: Vec<(f64, f64)> = reports.iter().map(|r| (r.n, r.d_f.d_sup)).collect();
    rate_fit_points(&pts)
}

/// Least-squares fit of `log d = intercept + slope * log n`.
pub fn rate_fit_points(points: &[(f64, f64)]) -> Result<RateFit> {
    let mut ns: Vec<f64> = points.iter().map(|p| p.0).collect();
    ns.sort_by(f64::total_cmp);
    ns.dedup();
    if ns.len() < 4 {
        return Err(Error::Usage(format!(
            "rate fit needs at least 4 distinct n values, got {}",
            ns.len()
        )));
    }
    if let Some(p) = points.iter().find(|p| !(p.0 > 0.0 && p.1 > 0.0)) {
        return Err(Error::Domain(format!(
            "rate fit needs positive (n, d), got {p:?}"
        )));
    }
    let m = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let e = y - intercept - slope * x;
            e * e
        })
        .sum();
    let stderr = (ssr.max(0.0) / (m - 2.0) / sxx).sqrt();
    Ok(RateFit {
        points: points.len(),
        slope,
        stderr,
        intercept,
        pass: slope <= RATE_SLOPE_CEILING,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(power: f64) -> Vec<(f64, f64)> {
        [64.0, 256.0, 1024.0, 4096.0]
            .iter()
            .map(|&n: &f64| (n, 0.7 * n.powf(power)))
            .collect()
    }

    #[test]
    fn exact_power_laws() {
        let half = rate_fit_points(&synthetic(-0.5)).unwrap();
        assert!((half.slope + 0.5).abs() < 1e-12);
        assert!(half.stderr < 1e-12);
        assert!(half.pass);
        let quarter = rate_fit_points(&synthetic(-0.25)).unwrap();
        assert!((quarter.slope + 0.25).abs() < 1e-12);
        assert!((quarter.intercept - 0.7f64.ln()).abs() < 1e-12);
        let flat = rate_fit_points(&synthetic(-0.1)).unwrap();
        assert!(!flat.pass);
    }

    #[test]
    fn needs_four_levels() {
        let mut p = synthetic(-0.5);
        p.pop();
        assert!(matches!(rate_fit_points(&p), Err(Error::Usage(_))));
        p.push(p[0]);
        assert!(rate_fit_points(&p).is_err());
    }

    #[test]
    fn rejects_zero_distance() {
        let mut p = synthetic(-0.5);
        p[1].1 = 0.0;
        assert!(matches!(rate_fit_points(&p), Err(Error::Domain(_))));
    }
}
