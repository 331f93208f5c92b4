//! Sample moments and log-log slope fits.

/// Mean and unbiased variance of a sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Moments {
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
}

impl Moments {
    pub fn of(values: &[f64]) -> Self {
        let count = values.len();
        if count == 0 {
            return Moments {
                count,
                mean: f64::NAN,
                variance: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / count as f64;
        let variance = if count > 1 {
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (count - 1) as f64
        } else {
            0.0
        };
        Moments { count, mean, variance }
    }

    pub fn std_error(&self) -> f64 {
        (self.variance / self.count as f64).sqrt()
    }
}

/// Ordinary least squares fit of `log y = intercept + slope·log x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub std_error: f64,
    pub points: usize,
}

/// Fits a line to `(ln x, ln y)`. Needs two points with distinct `x`;
/// points with nonpositive coordinates are skipped.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<SlopeFit> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    linear_fit(&pts)
}

pub fn linear_fit(pts: &[(f64, f64)]) -> Option<SlopeFit> {
    let n = pts.len();
    if n < 2 {
        return None;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n as f64;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let std_error = if n > 2 {
        let rss: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
        (rss / (n - 2) as f64 / sxx).sqrt()
    } else {
        f64::NAN
    };
    Some(SlopeFit {
        slope,
        intercept,
        std_error,
        points: n,
    })
}
