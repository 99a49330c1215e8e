//! Kernel density estimates of order 2 and 4, tabulated once on a fixed grid.

use rayon::prelude::*;

use crate::densities::{DensityModel, Side};
use crate::error::{Error, Result};
use crate::quad::{integrate, QuadConfig};
use crate::stats;

/// Number of grid nodes spanning the support.
pub const GRID_NODES: usize = 4096;

const CHUNK: usize = 1 << 15;

/// Compactly supported C¹ kernels on [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    /// `(15/16)(1 - t²)²`, order 2.
    Biweight,
    /// `(105/64)(1 - t²)²(1 - 3t²)`, order 4.
    Biweight4,
}

impl Kernel {
    pub fn of_order(s: u32) -> Result<Self> {
        match s {
            2 => Ok(Kernel::Biweight),
            4 => Ok(Kernel::Biweight4),
            _ => Err(Error::Config(format!("kernel order must be 2 or 4, got {s}"))),
        }
    }

    pub fn order(self) -> u32 {
        match self {
            Kernel::Biweight => 2,
            Kernel::Biweight4 => 4,
        }
    }

    #[inline]
    pub fn value(self, t: f64) -> f64 {
        if t.abs() >= 1.0 {
            return 0.0;
        }
        let u = 1.0 - t * t;
        match self {
            Kernel::Biweight => 15.0 / 16.0 * u * u,
            Kernel::Biweight4 => 105.0 / 64.0 * u * u * (1.0 - 3.0 * t * t),
        }
    }

    #[inline]
    pub fn derivative(self, t: f64) -> f64 {
        if t.abs() >= 1.0 {
            return 0.0;
        }
        let u = 1.0 - t * t;
        match self {
            Kernel::Biweight => -15.0 / 4.0 * t * u,
            // d/dt [u²(1 - 3t²)] = -4t u (1 - 3t²) - 6t u²
            Kernel::Biweight4 => 105.0 / 64.0 * (-4.0 * t * u * (1.0 - 3.0 * t * t) - 6.0 * t * u * u),
        }
    }

    /// `∫ t^j κ(t) dt`.
    pub fn moment(self, j: i32) -> f64 {
        integrate(|t| t.powi(j) * self.value(t), -1.0, 1.0, &[0.0], &QuadConfig::new(1e-15, 1e-15)).value
    }

    /// Checks `∫κ = 1` and vanishing moments `1..order-1`, all to 1e-12.
    pub fn verify_moments(self) -> Result<()> {
        let m0 = self.moment(0);
        if (m0 - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("kernel mass {m0} != 1")));
        }
        for j in 1..self.order() as i32 {
            let mj = self.moment(j);
            if mj.abs() > 1e-12 {
                return Err(Error::Config(format!("kernel moment {j} = {mj:e} does not vanish")));
            }
        }
        Ok(())
    }
}

/// Kernel density estimate with `ρ̂` and `ρ̂'` tabulated on [`GRID_NODES`]
/// equispaced nodes of the support; queries interpolate linearly.
#[derive(Debug, Clone, PartialEq)]
pub struct KdeModel {
    kernel: Kernel,
    bandwidth: f64,
    c_h: f64,
    sigma_hat: f64,
    n_samples: usize,
    lo: f64,
    hi: f64,
    step: f64,
    pdf: Vec<f64>,
    dpdf: Vec<f64>,
    interior_nodes: Vec<f64>,
}

/// `h = c_h σ̂ (log n / n)^{1/(2s+1)}`.
pub fn bandwidth(c_h: f64, sigma_hat: f64, n: usize, s: u32) -> f64 {
    let n = n as f64;
    c_h * sigma_hat * (n.ln() / n).powf(1.0 / (2.0 * s as f64 + 1.0))
}

/// Build an order-`s` estimate from `samples` on the grid over `support`.
pub fn build_kde(samples: &[f64], order_s: u32, c_h: f64, support: (f64, f64)) -> Result<KdeModel> {
    let kernel = Kernel::of_order(order_s)?;
    kernel.verify_moments()?;
    let (lo, hi) = support;
    if !(lo < hi) {
        return Err(Error::Config(format!("empty support [{lo}, {hi}]")));
    }
    if samples.len() < 2 {
        return Err(Error::Config("need at least two samples".into()));
    }
    if !(c_h > 0.0) {
        return Err(Error::Config(format!("c_h must be positive, got {c_h}")));
    }
    let n = samples.len();
    let sigma_hat = stats::variance(samples).sqrt();
    let h = bandwidth(c_h, sigma_hat, n, order_s);
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Config(format!("degenerate bandwidth {h}")));
    }
    let step = (hi - lo) / (GRID_NODES - 1) as f64;
    let node = |j: usize| lo + j as f64 * step;

    // fixed-size chunks summed in order keep the grid independent of thread count
    let partials: Vec<(Vec<f64>, Vec<f64>)> = samples
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut p = vec![0.0; GRID_NODES];
            let mut dp = vec![0.0; GRID_NODES];
            for &b in chunk {
                let first = (((b - h - lo) / step).ceil().max(0.0)) as usize;
                let last = ((b + h - lo) / step).floor();
                if last < 0.0 {
                    continue;
                }
                let last = (last as usize).min(GRID_NODES - 1);
                for j in first..=last {
                    let t = (node(j) - b) / h;
                    p[j] += kernel.value(t);
                    dp[j] += kernel.derivative(t);
                }
            }
            (p, dp)
        })
        .collect();
    let mut pdf = vec![0.0; GRID_NODES];
    let mut dpdf = vec![0.0; GRID_NODES];
    for (p, dp) in &partials {
        for j in 0..GRID_NODES {
            pdf[j] += p[j];
            dpdf[j] += dp[j];
        }
    }
    let scale = 1.0 / (n as f64 * h);
    for j in 0..GRID_NODES {
        pdf[j] *= scale;
        dpdf[j] *= scale / h;
    }
    Ok(KdeModel {
        kernel,
        bandwidth: h,
        c_h,
        sigma_hat,
        n_samples: n,
        lo,
        hi,
        step,
        pdf,
        dpdf,
        interior_nodes: (1..GRID_NODES - 1).map(node).collect(),
    })
}

impl KdeModel {
    pub fn order(&self) -> u32 {
        self.kernel.order()
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn c_h(&self) -> f64 {
        self.c_h
    }

    pub fn sigma_hat(&self) -> f64 {
        self.sigma_hat
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn node(&self, j: usize) -> f64 {
        self.lo + j as f64 * self.step
    }

    /// Tabulated `(ρ̂, ρ̂')` values at the nodes.
    pub fn grid(&self) -> (&[f64], &[f64]) {
        (&self.pdf, &self.dpdf)
    }

    #[inline]
    fn interp(&self, table: &[f64], b: f64) -> f64 {
        let pos = (b - self.lo) / self.step;
        let i = (pos.floor().max(0.0) as usize).min(GRID_NODES - 2);
        let frac = (pos - i as f64).clamp(0.0, 1.0);
        if frac == 0.0 {
            table[i]
        } else {
            (1.0 - frac) * table[i] + frac * table[i + 1]
        }
    }

    pub fn kde_pdf(&self, b: f64) -> Result<f64> {
        self.pdf(b)
    }

    pub fn kde_dpdf(&self, b: f64) -> Result<f64> {
        self.dpdf(b, Side::Right)
    }
}

impl DensityModel for KdeModel {
    fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    /// Every interior node is a kink of the interpolant.
    fn breakpoints(&self) -> &[f64] {
        &self.interior_nodes
    }

    fn pdf_raw(&self, b: f64) -> f64 {
        self.interp(&self.pdf, b)
    }

    fn dpdf_raw(&self, b: f64, _side: Side) -> f64 {
        self.interp(&self.dpdf, b)
    }
}

/// Sup-norm errors of `ρ̂` and `ρ̂'` on a 2001-point grid of `interval`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupError {
    pub nu: f64,
    pub nu_prime: f64,
}

pub fn kde_sup_error<D: DensityModel + ?Sized>(m: &KdeModel, d: &D, interval: (f64, f64)) -> Result<SupError> {
    let (a, b) = interval;
    let (lo, hi) = d.support();
    if !(a > lo && b < hi && a < b) {
        return Err(Error::Config(format!("interval [{a}, {b}] not inside ({lo}, {hi})")));
    }
    let mut nu: f64 = 0.0;
    let mut nu_prime: f64 = 0.0;
    for x in stats::linspace(a, b, 2001) {
        nu = nu.max((m.pdf(x)? - d.pdf(x)?).abs());
        nu_prime = nu_prime.max((m.dpdf(x, Side::Right)? - d.dpdf(x, Side::Right)?).abs());
    }
    Ok(SupError { nu, nu_prime })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densities::{DensityId, NoiseDensity};

    #[test]
    fn kernel_moments() {
        for k in [Kernel::Biweight, Kernel::Biweight4] {
            k.verify_moments().unwrap();
            assert!(k.moment(k.order() as i32).abs() > 1e-3);
        }
        assert!(Kernel::of_order(3).is_err());
    }

    #[test]
    fn kernel_derivative_matches_finite_difference() {
        let h = 1e-6;
        for k in [Kernel::Biweight, Kernel::Biweight4] {
            for i in -19..=19 {
                let t = i as f64 / 20.0;
                let fd = (k.value(t + h) - k.value(t - h)) / (2.0 * h);
                assert!((fd - k.derivative(t)).abs() < 1e-8);
            }
            // C¹ at the support edge
            assert!(k.value(1.0 - 1e-9).abs() < 1e-15 && k.derivative(1.0 - 1e-9).abs() < 1e-7);
        }
    }

    #[test]
    fn node_values_equal_direct_sums() {
        let d = NoiseDensity::builtin(DensityId::D2);
        let xs = d.sample(20_000, 4);
        let m = build_kde(&xs, 2, 1.0, (0.5, 1.5)).unwrap();
        let h = m.bandwidth();
        for &j in &[1usize, 700, 2048, 3000, 4094] {
            let x = m.node(j);
            let direct: f64 = xs.iter().map(|&b| Kernel::Biweight.value((x - b) / h)).sum::<f64>() / (xs.len() as f64 * h);
            let direct_d: f64 =
                xs.iter().map(|&b| Kernel::Biweight.derivative((x - b) / h)).sum::<f64>() / (xs.len() as f64 * h * h);
            assert!((m.kde_pdf(x).unwrap() - direct).abs() < 1e-12);
            assert!((m.kde_dpdf(x).unwrap() - direct_d).abs() < 1e-10);
        }
    }

    #[test]
    fn derivative_consistent_with_pdf() {
        // the biweight is C¹ only: each sample puts a jump of 7.5/(n h³) into ρ̂''
        // at both kernel edges, so the centred difference of the interpolant
        // scatters around ρ̂' at the 1e-3 level; the mean error is what is bounded
        let d = NoiseDensity::builtin(DensityId::D2);
        for n in [10_000, 100_000, 1_000_000] {
            let m = build_kde(&d.sample(n, 9), 2, 1.0, (0.5, 1.5)).unwrap();
            let errs: Vec<f64> = (400..3700)
                .step_by(10)
                .map(|j| {
                    let x = m.node(j);
                    let fd = (m.kde_pdf(x + 1e-4).unwrap() - m.kde_pdf(x - 1e-4).unwrap()) / 2e-4;
                    (fd - m.kde_dpdf(x).unwrap()).abs()
                })
                .collect();
            let mean = stats::mean(&errs);
            let max = errs.iter().copied().fold(0.0, f64::max);
            eprintln!("n={n}: mean {mean:.2e} max {max:.2e}");
            assert!(mean < 1e-3, "n={n}: mean {mean:e}");
            assert!(max < 5e-3, "n={n}: max {max:e}");
        }
    }

    #[test]
    fn biweight_estimate_is_nonnegative_and_deterministic() {
        let d = NoiseDensity::builtin(DensityId::D3);
        let xs = d.sample(5_000, 2);
        let a = build_kde(&xs, 2, 1.0, (0.5, 1.5)).unwrap();
        let b = build_kde(&xs, 2, 1.0, (0.5, 1.5)).unwrap();
        assert_eq!(a, b);
        assert!(a.grid().0.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn uniform_estimate_is_close_in_the_interior() {
        let d = NoiseDensity::builtin(DensityId::D1);
        let m = build_kde(&d.sample(100_000, 1), 2, 1.0, (0.5, 1.5)).unwrap();
        let e = kde_sup_error(&m, &d, (0.55, 1.45)).unwrap();
        assert!(e.nu <= 0.05, "{e:?}");
    }

    #[test]
    fn domain_and_config_errors() {
        let m = build_kde(&[0.9, 1.0, 1.1], 2, 1.0, (0.5, 1.5)).unwrap();
        assert!(m.kde_pdf(1.6).is_err());
        assert!(build_kde(&[1.0], 2, 1.0, (0.5, 1.5)).is_err());
        assert!(build_kde(&[0.9, 1.0], 3, 1.0, (0.5, 1.5)).is_err());
    }
}
