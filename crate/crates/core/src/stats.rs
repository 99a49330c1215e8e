//! Small summary-statistics helpers shared by the Monte-Carlo harnesses.

/// Pairwise (cascade) summation; error grows like O(log n) instead of O(n).
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 64;
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(xs) / xs.len() as f64
}

/// Unbiased sample variance (two-pass).
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    let dev: Vec<f64> = xs.iter().map(|&x| (x - m) * (x - m)).collect();
    pairwise_sum(&dev) / (xs.len() - 1) as f64
}

/// Standard error of the mean.
pub fn std_error(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

/// Linear-interpolation quantile (type 7), `q` in [0, 1].
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < v.len() {
        v[i] + frac * (v[i + 1] - v[i])
    } else {
        v[i]
    }
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

/// Ordinary least-squares slope of y on x.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    if x.len() < 2 {
        return f64::NAN;
    }
    let mx = mean(x);
    let my = mean(y);
    let sxy: Vec<f64> = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).collect();
    let sxx: Vec<f64> = x.iter().map(|a| (a - mx) * (a - mx)).collect();
    pairwise_sum(&sxy) / pairwise_sum(&sxx)
}

/// Result of a log10–log10 fit over a window of the x-axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub x_lo: f64,
    pub x_hi: f64,
    pub points: usize,
}

/// Log–log OLS slope using the points with x in [x_lo, x_hi]; non-positive
/// values are skipped.
pub fn loglog_slope_window(x: &[f64], y: &[f64], x_lo: f64, x_hi: f64) -> SlopeFit {
    let (lx, ly): (Vec<f64>, Vec<f64>) = x
        .iter()
        .zip(y)
        .filter(|(&a, &b)| a >= x_lo && a <= x_hi && a > 0.0 && b > 0.0)
        .map(|(a, b)| (a.log10(), b.log10()))
        .unzip();
    SlopeFit {
        slope: ols_slope(&lx, &ly),
        x_lo,
        x_hi,
        points: lx.len(),
    }
}

/// Log–log slope over the last decade of the x-axis, [x_max/10, x_max].
pub fn loglog_slope_last_decade(x: &[f64], y: &[f64]) -> SlopeFit {
    let x_max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // tolerate rounding in x_max/10 so a point placed exactly there is kept
    loglog_slope_window(x, y, x_max / 10.0 * (1.0 - 1e-12), x_max)
}

/// Log–log slope over every point.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> SlopeFit {
    loglog_slope_window(x, y, f64::NEG_INFINITY, f64::INFINITY)
}

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..n)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64))
        .collect()
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}
