//! Small fitting helpers shared by the exponent estimators.

/// Least-squares line fit y = a + b x.
#[derive(Clone, Copy, Debug)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    /// Standard error of the slope.
    pub stderr: f64,
    /// Root-mean-square residual.
    pub rms_residual: f64,
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    let n = xs.len();
    if n < 2 || n != ys.len() {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let dof = (n as f64 - 2.0).max(1.0);
    let stderr = (ss_res / dof / sxx).sqrt();
    Some(LineFit {
        intercept,
        slope,
        stderr,
        rms_residual: (ss_res / nf).sqrt(),
    })
}

/// Fit y = c x^b from positive samples by regressing log y on log x.
pub fn fit_power_law(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    if lx.iter().chain(ly.iter()).any(|v| !v.is_finite()) {
        return None;
    }
    fit_line(&lx, &ly)
}

/// Geometric grid with `points` entries from `start` to `stop` inclusive.
pub fn geometric_grid(start: f64, stop: f64, points: usize) -> Vec<f64> {
    assert!(points >= 2 && start > 0.0 && stop > 0.0);
    let ratio = (stop / start).powf(1.0 / (points as f64 - 1.0));
    (0..points)
        .map(|i| start * ratio.powi(i as i32))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line_is_recovered() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [3.0, 5.0, 7.0, 9.0];
        let fit = fit_line(&xs, &ys).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-12);
        assert!((fit.intercept - 1.0).abs() < 1e-12);
        assert!(fit.stderr < 1e-12);
    }

    #[test]
    fn power_law_slope() {
        let xs = [1.0, 10.0, 100.0, 1000.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 2.5 * x.powf(0.5)).collect();
        let fit = fit_power_law(&xs, &ys).unwrap();
        assert!((fit.slope - 0.5).abs() < 1e-12);
    }

    #[test]
    fn geometric_grid_endpoints() {
        let g = geometric_grid(1e-6, 1e-3, 8);
        assert_eq!(g.len(), 8);
        assert!((g[0] - 1e-6).abs() < 1e-18);
        assert!((g[7] - 1e-3).abs() < 1e-15);
    }
}
