use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Least-squares line through `(ln x, ln value)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub metric: String,
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Fits `log value` against `log N`.
pub fn fit_rate(metric: &str, points: &[(usize, f64)]) -> Result<RateFit> {
    let pts: Vec<(f64, f64)> = points.iter().map(|&(n, v)| (n as f64, v)).collect();
    fit_loglog(metric, &pts)
}

/// Fits `log value` against `log x` for arbitrary positive abscissae.
pub fn fit_loglog(metric: &str, points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "rate fit for `{metric}` needs at least 3 points, got {}",
            points.len()
        )));
    }
    if let Some(&(_, value)) = points.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::NonPositive {
            metric: metric.to_string(),
            value,
        });
    }
    if let Some(&(x, _)) = points.iter().find(|(x, _)| !(*x > 0.0)) {
        return Err(Error::InvalidArgument(format!("rate fit abscissa must be positive, got {x}")));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|(x, v)| (x.ln(), v.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = logs.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument(format!(
            "rate fit for `{metric}` needs distinct abscissae"
        )));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = logs
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(RateFit {
        metric: metric.to_string(),
        points: points.to_vec(),
        slope,
        intercept,
        r_squared,
    })
}
