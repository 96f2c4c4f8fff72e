//! Ordinary least squares on a line, used by the power-law and box-counting
//! fits.

pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope; zero when there are no residual degrees
    /// of freedom.
    pub stderr_slope: f64,
}

/// Fit y = intercept + slope * x.  Requires at least two distinct x values.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> LineFit {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    assert!(xs.len() >= 2, "need at least two points for a line fit");

    let xbar = xs.iter().sum::<f64>() / n;
    let ybar = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - xbar) * (x - xbar)).sum();
    assert!(sxx > 0.0, "need at least two distinct x values");
    let sxy: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (x - xbar) * (y - ybar))
        .sum();

    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;

    let dof = xs.len() as isize - 2;
    let stderr_slope = if dof > 0 {
        let ssr: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| {
                let r = y - (intercept + slope * x);
                r * r
            })
            .sum();
        (ssr / dof as f64 / sxx).sqrt()
    } else {
        0.0
    };

    LineFit {
        slope,
        intercept,
        stderr_slope,
    }
}
