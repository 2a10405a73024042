//! Locally weighted scatterplot smoothing (local linear, tricube weights).

use super::StatsError;

/// Fitted values at each input `x`, using the `frac * n` nearest neighbors
/// of each point. No robustness iterations.
pub fn lowess(x: &[f64], y: &[f64], frac: f64) -> Result<Vec<f64>, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch);
    }
    let n = x.len();
    if n < 5 {
        return Err(StatsError::TooFewPoints { need: 5, got: n });
    }
    if !(frac > 0.0 && frac <= 1.0) {
        return Err(StatsError::InvalidFraction { got: frac });
    }
    let q = ((frac * n as f64).ceil() as usize).clamp(2, n);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).unwrap().then(a.cmp(&b)));
    let xs: Vec<f64> = order.iter().map(|&i| x[i]).collect();
    let ys: Vec<f64> = order.iter().map(|&i| y[i]).collect();

    let mut fitted_sorted = vec![0.0; n];
    for i in 0..n {
        // nearest-q window over sorted x: slide a contiguous window
        let (mut lo, mut hi) = (i, i);
        while hi - lo + 1 < q {
            let extend_left = lo > 0
                && (hi + 1 >= n || xs[i] - xs[lo - 1] <= xs[hi + 1] - xs[i]);
            if extend_left {
                lo -= 1;
            } else {
                hi += 1;
            }
        }
        let dmax = (xs[i] - xs[lo]).max(xs[hi] - xs[i]);
        fitted_sorted[i] = weighted_local_line(&xs[lo..=hi], &ys[lo..=hi], xs[i], dmax);
    }

    let mut fitted = vec![0.0; n];
    for (rank, &orig) in order.iter().enumerate() {
        fitted[orig] = fitted_sorted[rank];
    }
    Ok(fitted)
}

/// Weighted least-squares line through the window, evaluated at `x0`.
pub(crate) fn weighted_local_line(xw: &[f64], yw: &[f64], x0: f64, dmax: f64) -> f64 {
    let weight = |xi: f64| -> f64 {
        if dmax <= 0.0 {
            return 1.0;
        }
        let u = ((xi - x0).abs() / dmax).min(1.0);
        (1.0 - u.powi(3)).powi(3)
    };
    let mut sw = 0.0;
    let mut swx = 0.0;
    let mut swy = 0.0;
    let mut swxx = 0.0;
    let mut swxy = 0.0;
    for (&xi, &yi) in xw.iter().zip(yw) {
        let w = weight(xi);
        sw += w;
        swx += w * xi;
        swy += w * yi;
        swxx += w * xi * xi;
        swxy += w * xi * yi;
    }
    if sw == 0.0 {
        return yw.iter().sum::<f64>() / yw.len() as f64;
    }
    let det = sw * swxx - swx * swx;
    if det.abs() < 1e-12 * sw * sw.max(swxx) {
        return swy / sw;
    }
    let slope = (sw * swxy - swx * swy) / det;
    let intercept = (swy - slope * swx) / sw;
    intercept + slope * x0
}
