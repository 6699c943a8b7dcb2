use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub slope_se: f64,
    pub intercept: f64,
}

/// Weighted least squares of `ln estimate` on `ln n` over `(n, estimate, se)`
/// triples. Weights are `(estimate / se)²` (delta method); if any SE is zero
/// the fit falls back to ordinary least squares. The slope SE is inflated by
/// the residual scatter when that exceeds the quoted errors.
pub fn fit_loglog_slope(points: &[(f64, f64, f64)]) -> Result<SlopeFit> {
    if points.len() < 3 {
        return Err(Error::Domain(format!(
            "slope fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    if let Some(bad) = points
        .iter()
        .find(|(n, e, s)| !(*n > 0.0 && *e > 0.0 && e.is_finite() && *s >= 0.0))
    {
        return Err(Error::Domain(format!(
            "slope fit needs positive n and estimates, got {bad:?}"
        )));
    }
    let weighted = points.iter().all(|(_, _, s)| *s > 0.0 && s.is_finite());
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let ws: Vec<f64> = points
        .iter()
        .map(|(_, e, s)| if weighted { (e / s).powi(2) } else { 1.0 })
        .collect();
    let sw: f64 = ws.iter().sum();
    let xbar = ws.iter().zip(&xs).map(|(w, x)| w * x).sum::<f64>() / sw;
    let ybar = ws.iter().zip(&ys).map(|(w, y)| w * y).sum::<f64>() / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for ((w, x), y) in ws.iter().zip(&xs).zip(&ys) {
        sxx += w * (x - xbar) * (x - xbar);
        sxy += w * (x - xbar) * (y - ybar);
    }
    if !(sxx > 0.0) {
        return Err(Error::Domain(
            "slope fit needs at least two distinct n".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let dof = (points.len() - 2) as f64;
    let chi2: f64 = ws
        .iter()
        .zip(&xs)
        .zip(&ys)
        .map(|((w, x), y)| w * (y - intercept - slope * x).powi(2))
        .sum();
    let scale = if weighted {
        (chi2 / dof).max(1.0)
    } else {
        chi2 / dof
    };
    Ok(SlopeFit {
        slope,
        slope_se: (scale / sxx).sqrt(),
        intercept,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law() {
        let pts: Vec<_> = [64.0, 128.0, 256.0, 512.0]
            .iter()
            .map(|n: &f64| (*n, 3.0 * n.powf(-0.5), 0.0))
            .collect();
        let fit = fit_loglog_slope(&pts).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-9);
    }

    #[test]
    fn constant_is_flat() {
        let pts = [(1.0, 2.0, 0.1), (2.0, 2.0, 0.1), (4.0, 2.0, 0.1)];
        assert_eq!(fit_loglog_slope(&pts).unwrap().slope, 0.0);
    }

    #[test]
    fn rejects_bad_points() {
        assert!(fit_loglog_slope(&[(1.0, 1.0, 0.1), (2.0, 1.0, 0.1)]).is_err());
        assert!(fit_loglog_slope(&[(1.0, 1.0, 0.1), (2.0, 0.0, 0.1), (3.0, 1.0, 0.1)]).is_err());
    }
}
