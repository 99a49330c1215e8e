//! Population oracle: cost, principal-value gradient, regularized family,
//! Hessian decomposition, optimal gains and local constants.
//!
//! Every integral with a kernel odd in `v = 1 + bK` is evaluated by the
//! parity shell: on a symmetric shell of radius `r` around the pole
//! `p = -1/K` the integrand is folded, `∫_{-r}^{r} f(p+s) w(Ks) ds =
//! ∫_0^r [f(p+s) - f(p-s)] w(Ks) ds`, which removes the odd part exactly.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::densities::{DensityModel, Side};
use crate::error::{Error, Result};
use crate::quad::{integrate, QuadConfig, QuadOutcome};
use crate::roots::brent;

/// Pole of the closed-loop multiplier, `b_sing(K) = -1/K`.
#[inline]
pub fn pole(k: f64) -> f64 {
    -1.0 / k
}

/// A nonzero feedback gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainPoint {
    k: f64,
}

impl GainPoint {
    pub fn new(k: f64) -> Result<Self> {
        if k == 0.0 || !k.is_finite() {
            return Err(Error::Config(format!("gain must be finite and nonzero, got {k}")));
        }
        Ok(GainPoint { k })
    }

    pub fn k(self) -> f64 {
        self.k
    }

    pub fn pole(self) -> f64 {
        pole(self.k)
    }
}

/// Closed interval of gains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Config(format!("empty interval [{lo}, {hi}]")));
        }
        Ok(Interval { lo, hi })
    }

    pub fn around(center: f64, half_width: f64) -> Result<Self> {
        Self::new(center - half_width, center + half_width)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn grid(&self, n: usize) -> Vec<f64> {
        crate::stats::linspace(self.lo, self.hi, n)
    }
}

/// Pole-to-edge distance `min(p - b_min, b_max - p)`; negative when the pole
/// lies outside the support.
pub fn pole_margin<D: DensityModel + ?Sized>(d: &D, k: f64) -> f64 {
    let (lo, hi) = d.support();
    let p = pole(k);
    (p - lo).min(hi - p)
}

/// Quadrature settings and the kink switch used by the oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    pub quad: QuadConfig,
    /// Register density breakpoints with the integrator.
    pub use_breakpoints: bool,
}

impl OracleOptions {
    pub const SMOOTH: OracleOptions = OracleOptions {
        quad: QuadConfig::new(1e-13, 1e-14),
        use_breakpoints: true,
    };
    pub const LOG_SINGULAR: OracleOptions = OracleOptions {
        quad: QuadConfig::new(1e-12, 1e-14),
        use_breakpoints: true,
    };

    pub fn without_breakpoints(mut self) -> Self {
        self.use_breakpoints = false;
        self
    }
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self::SMOOTH
    }
}

const ENDPOINT_GUARD: f64 = 1e-12;

fn breakpoints_of<D: DensityModel + ?Sized>(d: &D, opts: &OracleOptions) -> Vec<f64> {
    if opts.use_breakpoints {
        d.breakpoints().to_vec()
    } else {
        Vec::new()
    }
}

/// `∫_lo^hi f(b) w(1 + bK) db` with `w(v) = v / (v² + eps²)`; at `eps = 0`
/// this is the principal value of `∫ f / (1 + bK)`.
///
/// `fprime_at_pole` supplies the continuous extension of the folded
/// integrand at the pole (only consulted if a node lands exactly there).
pub fn odd_kernel_integral<D, F>(
    d: &D,
    f: F,
    fprime_at_pole: f64,
    k: f64,
    eps: f64,
    opts: &OracleOptions,
) -> Result<f64>
where
    D: DensityModel + ?Sized,
    F: Fn(f64) -> f64,
{
    GainPoint::new(k)?;
    let (lo, hi) = d.support();
    let p = pole(k);
    let bps = breakpoints_of(d, opts);
    let eps2 = eps * eps;
    // v = 1 + bK is formed as K (b - p), which avoids cancellation near the pole
    let w = |v: f64| v / (v * v + eps2);
    let margin = (p - lo).min(hi - p);

    if margin <= 0.0 || !(p > lo && p < hi) {
        if eps == 0.0 && margin.abs() < ENDPOINT_GUARD {
            return Err(Error::IllConditioned(format!(
                "pole {p} within {ENDPOINT_GUARD:e} of a support endpoint"
            )));
        }
        return integrate(|b| f(b) * w(k * (b - p)), lo, hi, &bps, &opts.quad).checked();
    }
    if margin < ENDPOINT_GUARD {
        if eps == 0.0 {
            return Err(Error::IllConditioned(format!(
                "pole {p} within {ENDPOINT_GUARD:e} of a support endpoint"
            )));
        }
        let mut pts = bps.clone();
        pts.push(p);
        return integrate(|b| f(b) * w(k * (b - p)), lo, hi, &pts, &opts.quad).checked();
    }

    let r = 0.5 * margin;
    let far_left = integrate(|b| f(b) * w(k * (b - p)), lo, p - r, &bps, &opts.quad).checked()?;
    let far_right = integrate(|b| f(b) * w(k * (b - p)), p + r, hi, &bps, &opts.quad).checked()?;
    let shell_bps: Vec<f64> = bps.iter().map(|&c| (c - p).abs()).filter(|&s| s > 0.0 && s < r).collect();
    let limit = if eps == 0.0 { 2.0 * fprime_at_pole / k } else { 0.0 };
    let near = integrate(
        |s| {
            if s == 0.0 {
                limit
            } else {
                (f(p + s) - f(p - s)) * w(k * s)
            }
        },
        0.0,
        r,
        &shell_bps,
        &opts.quad,
    )
    .checked()?;
    Ok(far_left + near + far_right)
}

/// `J(K) = ∫ ρ(b) log|1 + bK| db`.
pub fn cost_j<D: DensityModel + ?Sized>(d: &D, k: f64) -> Result<f64> {
    cost_j_with(d, k, &OracleOptions::LOG_SINGULAR)
}

pub fn cost_j_with<D: DensityModel + ?Sized>(d: &D, k: f64, opts: &OracleOptions) -> Result<f64> {
    GainPoint::new(k)?;
    let (lo, hi) = d.support();
    let mut bps = breakpoints_of(d, opts);
    let p = pole(k);
    bps.push(p);
    integrate(
        |b| {
            let v = k * (b - p);
            if v == 0.0 {
                0.0
            } else {
                d.pdf_raw(b) * v.abs().ln()
            }
        },
        lo,
        hi,
        &bps,
        &opts.quad,
    )
    .checked()
}

/// `J_eps(K) = ∫ ρ(b) ½ log((1 + bK)² + eps²) db`.
pub fn reg_cost<D: DensityModel + ?Sized>(d: &D, k: f64, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::Config(format!("eps must be positive, got {eps}")));
    }
    GainPoint::new(k)?;
    let opts = OracleOptions::LOG_SINGULAR;
    let (lo, hi) = d.support();
    let mut bps = breakpoints_of(d, &opts);
    let p = pole(k);
    bps.push(p);
    let eps2 = eps * eps;
    integrate(
        |b| {
            let v = k * (b - p);
            0.5 * d.pdf_raw(b) * (v * v + eps2).ln()
        },
        lo,
        hi,
        &bps,
        &opts.quad,
    )
    .checked()
}

/// `J_eps(K) - J(K) = ∫ ρ ½ log(1 + eps²/v²)`, computed without cancellation.
pub fn reg_gap<D: DensityModel + ?Sized>(d: &D, k: f64, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::Config(format!("eps must be positive, got {eps}")));
    }
    GainPoint::new(k)?;
    let opts = OracleOptions::LOG_SINGULAR;
    let (lo, hi) = d.support();
    let mut bps = breakpoints_of(d, &opts);
    let p = pole(k);
    bps.push(p);
    // resolve the eps-wide bump around the pole
    let width = eps / k.abs();
    for m in [1.0, 10.0, 100.0] {
        bps.push(p - m * width);
        bps.push(p + m * width);
    }
    let eps2 = eps * eps;
    integrate(
        |b| {
            let v = k * (b - p);
            if v == 0.0 {
                0.0
            } else {
                0.5 * d.pdf_raw(b) * (eps2 / (v * v)).ln_1p()
            }
        },
        lo,
        hi,
        &bps,
        &opts.quad,
    )
    .checked()
}

fn h_prime<D: DensityModel + ?Sized>(d: &D, b: f64) -> f64 {
    d.pdf_raw(b) + b * d.dpdf_raw(b, Side::Right)
}

/// Principal-value gradient `PV ∫ bρ(b) / (1 + bK) db`.
pub fn pv_gradient<D: DensityModel + ?Sized>(d: &D, k: f64) -> Result<f64> {
    pv_gradient_with(d, k, &OracleOptions::SMOOTH)
}

pub fn pv_gradient_with<D: DensityModel + ?Sized>(d: &D, k: f64, opts: &OracleOptions) -> Result<f64> {
    let p = pole(k);
    let (lo, hi) = d.support();
    let fp = if p > lo && p < hi { h_prime(d, p) } else { 0.0 };
    odd_kernel_integral(d, |b| b * d.pdf_raw(b), fp, k, 0.0, opts)
}

/// Regularized gradient `∫ ρ b (1 + bK) / ((1 + bK)² + eps²) db`.
pub fn reg_gradient<D: DensityModel + ?Sized>(d: &D, k: f64, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::Config(format!("eps must be positive, got {eps}")));
    }
    odd_kernel_integral(d, |b| b * d.pdf_raw(b), 0.0, k, eps, &OracleOptions::SMOOTH)
}

/// Second derivative split into its boundary and integral parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HessianParts {
    pub boundary_term: f64,
    pub integral_term: f64,
    pub total: f64,
}

/// `d²J_eps/dK² = B_eps + I_eps`. At `eps = 0` the integral part is a
/// principal value and the sum is the Hadamard finite part.
pub fn hessian_decomposition<D: DensityModel + ?Sized>(d: &D, k: f64, eps: f64) -> Result<HessianParts> {
    hessian_decomposition_with(d, k, eps, &OracleOptions::SMOOTH)
}

pub fn hessian_decomposition_with<D: DensityModel + ?Sized>(
    d: &D,
    k: f64,
    eps: f64,
    opts: &OracleOptions,
) -> Result<HessianParts> {
    if !(eps >= 0.0) {
        return Err(Error::Config(format!("eps must be nonnegative, got {eps}")));
    }
    GainPoint::new(k)?;
    let (lo, hi) = d.support();
    let p = pole(k);
    if eps == 0.0 && ((p - lo).abs() < ENDPOINT_GUARD || (hi - p).abs() < ENDPOINT_GUARD) {
        return Err(Error::IllConditioned(format!("pole {p} at a support endpoint")));
    }
    let eps2 = eps * eps;
    let edge = |b: f64| {
        let v = k * (b - p);
        d.pdf_raw(b) * b * b * v / (v * v + eps2)
    };
    let boundary_term = (edge(hi) - edge(lo)) / k;
    let g = |b: f64| 2.0 * b * d.pdf_raw(b) + b * b * d.dpdf_raw(b, Side::Right);
    let gp = if p > lo && p < hi {
        let step = 1e-6 * (p - lo).min(hi - p);
        (g(p + step) - g(p - step)) / (2.0 * step)
    } else {
        0.0
    };
    let integral_term = -odd_kernel_integral(d, g, gp, k, eps, opts)? / k;
    Ok(HessianParts {
        boundary_term,
        integral_term,
        total: boundary_term + integral_term,
    })
}

/// Gradient from the adaptive integrator with the pole withheld from the
/// break-point list, as a generic black-box user would call it. Returns
/// whatever the integrator reaches together with its outcome.
pub fn naive_gradient<D: DensityModel + ?Sized>(d: &D, k: f64, quad: &QuadConfig) -> QuadOutcome {
    let (lo, hi) = d.support();
    integrate(|b| b * d.pdf_raw(b) / (1.0 + b * k), lo, hi, d.breakpoints(), quad)
}

/// Gradient with the symmetric window `(p - h, p + h)` around the pole cut
/// out. Carries an `O(h)` bias from the even part of the integrand.
pub fn cutoff_gradient<D: DensityModel + ?Sized>(d: &D, k: f64, h: f64) -> Result<f64> {
    GainPoint::new(k)?;
    if !(h > 0.0) {
        return Err(Error::Config(format!("cutoff must be positive, got {h}")));
    }
    let (lo, hi) = d.support();
    let p = pole(k);
    let quad = OracleOptions::SMOOTH.quad;
    let f = |b: f64| b * d.pdf_raw(b) / (k * (b - p));
    let bps = d.breakpoints();
    let mut total = 0.0;
    if p - h > lo {
        total += integrate(f, lo, (p - h).min(hi), bps, &quad).checked()?;
    }
    if p + h < hi {
        total += integrate(f, (p + h).max(lo), hi, bps, &quad).checked()?;
    }
    Ok(total)
}

/// `∫_{|b - p| > r} |bρ(b) / (1 + bK)| db`. At an interior pole this grows
/// like `log(1/r)`, so the gradient integrand is not absolutely integrable.
pub fn abs_integral_outside<D: DensityModel + ?Sized>(d: &D, k: f64, r: f64) -> Result<f64> {
    GainPoint::new(k)?;
    let (lo, hi) = d.support();
    let p = pole(k);
    let quad = OracleOptions::SMOOTH.quad;
    let f = |b: f64| (b * d.pdf_raw(b) / (k * (b - p))).abs();
    let mut total = 0.0;
    if p - r > lo {
        total += integrate(f, lo, (p - r).min(hi), d.breakpoints(), &quad).checked()?;
    }
    if p + r < hi {
        total += integrate(f, (p + r).max(lo), hi, d.breakpoints(), &quad).checked()?;
    }
    Ok(total)
}

/// Unique stationary point of `J` in `(-1/b_min, -1/b_max)`.
pub fn find_kstar<D: DensityModel + ?Sized>(d: &D) -> Result<f64> {
    let (lo, hi) = d.support();
    let (a, b) = (-1.0 / lo, -1.0 / hi);
    let pad = 1e-6 * (b - a);
    let k = brent(|k| pv_gradient(d, k), a + pad, b - pad, 1e-13, 200)?;
    let p = pole(k);
    if !(p > lo && p < hi) {
        return Err(Error::Precondition(format!("optimal pole {p} not interior to [{lo}, {hi}]")));
    }
    Ok(k)
}

/// Minimizer of `J_eps` on `basin`.
pub fn find_kstar_eps<D: DensityModel + ?Sized>(d: &D, eps: f64, basin: Interval) -> Result<f64> {
    match brent(|k| reg_gradient(d, k, eps), basin.lo, basin.hi, 1e-14, 200) {
        Err(Error::RootNotFound(_)) => Err(Error::PersistenceViolated {
            lo: basin.lo,
            hi: basin.hi,
            eps,
        }),
        other => other,
    }
}

/// Curvature and geometry constants on the basin `[K* - delta, K* + delta]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalConstants {
    pub mu0: f64,
    pub l0: f64,
    /// Pole-to-edge margin at `K*`.
    pub tau: f64,
    /// Smallest pole-to-edge margin over the whole basin.
    pub basin_margin: f64,
    pub delta: f64,
    /// `sup π ρ(b_sing(K)) / |K|` over the basin grid.
    pub cbar_b: f64,
    pub kstar: f64,
    /// Largest regularization in the curvature sweep.
    pub eps0: f64,
}

impl LocalConstants {
    pub fn basin(&self) -> Interval {
        Interval {
            lo: self.kstar - self.delta,
            hi: self.kstar + self.delta,
        }
    }

    pub fn condition_number(&self) -> f64 {
        self.l0 / self.mu0
    }
}

/// Grid and regularization range for [`local_constants`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepConfig {
    pub grid_points: usize,
    pub eps0: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            grid_points: 41,
            eps0: 1e-3,
        }
    }
}

pub fn local_constants<D: DensityModel + ?Sized>(d: &D, kstar: f64, delta: f64) -> Result<LocalConstants> {
    local_constants_with(d, kstar, delta, &SweepConfig::default())
}

pub fn local_constants_with<D: DensityModel + ?Sized>(
    d: &D,
    kstar: f64,
    delta: f64,
    cfg: &SweepConfig,
) -> Result<LocalConstants> {
    if !(delta > 0.0) || cfg.grid_points < 2 {
        return Err(Error::Config(format!("delta must be positive, got {delta}")));
    }
    let basin = Interval::around(kstar, delta)?;
    let grid = basin.grid(cfg.grid_points);
    let basin_margin = grid.iter().map(|&k| pole_margin(d, k)).fold(f64::INFINITY, f64::min);
    if !(basin_margin > 0.0) || grid.contains(&0.0) {
        return Err(Error::Precondition(format!(
            "pole leaves the support interior on [{}, {}]",
            basin.lo, basin.hi
        )));
    }
    let eps_grid = [0.0, 0.5 * cfg.eps0, cfg.eps0];
    let cells: Vec<(f64, f64)> = grid.iter().flat_map(|&k| eps_grid.iter().map(move |&e| (k, e))).collect();
    let curv: Vec<f64> = cells
        .par_iter()
        .map(|&(k, e)| hessian_decomposition(d, k, e).map(|h| h.total))
        .collect::<Result<_>>()?;
    let mu0 = curv.iter().copied().fold(f64::INFINITY, f64::min);
    let l0 = curv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(mu0 > 0.0) {
        return Err(Error::Precondition(format!("curvature not positive on the basin (min {mu0})")));
    }
    let cbar_b = grid
        .iter()
        .map(|&k| PI * d.pdf_raw(pole(k)) / k.abs())
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(LocalConstants {
        mu0,
        l0,
        tau: pole_margin(d, kstar),
        basin_margin,
        delta,
        cbar_b,
        kstar,
        eps0: cfg.eps0,
    })
}

/// Largest basin half-width in {0.05, 0.06, ..., 0.20} whose pole margin
/// stays at least 0.05.
pub fn default_delta<D: DensityModel + ?Sized>(d: &D, kstar: f64) -> f64 {
    (5..=20)
        .rev()
        .map(|i| i as f64 / 100.0)
        .find(|&delta| {
            [kstar - delta, kstar + delta]
                .iter()
                .all(|&k| k < 0.0 && pole_margin(d, k) >= 0.05)
        })
        .unwrap_or(0.05)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::{beta22_h_coeffs, pv_polynomial, uniform_cost, uniform_pv_gradient};
    use crate::densities::{DensityId, NoiseDensity};

    fn d(id: DensityId) -> NoiseDensity {
        NoiseDensity::builtin(id)
    }

    #[test]
    fn cost_matches_uniform_antiderivative() {
        let d1 = d(DensityId::D1);
        for &k in &[-0.835, -0.3, -1.2, -1.9, 0.4] {
            let c = cost_j(&d1, k).unwrap();
            assert!((c - uniform_cost(0.5, 1.5, k)).abs() < 1e-10, "K={k}");
        }
        assert!(cost_j(&d1, -1e-9).unwrap().abs() < 1e-8);
        assert!(cost_j(&d1, 0.0).is_err());
    }

    #[test]
    fn optimum_is_stabilizing() {
        let d2 = d(DensityId::D2);
        assert!(cost_j(&d2, -0.928).unwrap() < 0.0);
    }

    #[test]
    fn pv_gradient_matches_closed_forms() {
        let d1 = d(DensityId::D1);
        let d2 = d(DensityId::D2);
        let c2 = beta22_h_coeffs(0.5, 1.5);
        for i in 0..=20 {
            let k = -0.7 - 0.5 * i as f64 / 20.0;
            assert!((pv_gradient(&d1, k).unwrap() - uniform_pv_gradient(0.5, 1.5, k)).abs() < 1e-12);
            assert!((pv_gradient(&d2, k).unwrap() - pv_polynomial(&c2, k, 0.5, 1.5)).abs() < 1e-12);
        }
    }

    #[test]
    fn pole_outside_is_plain_quadrature() {
        let d2 = d(DensityId::D2);
        let plain = integrate(
            |b| b * d2.pdf_raw(b) / (1.0 - 0.1 * b),
            0.5,
            1.5,
            &[],
            &QuadConfig::new(1e-14, 1e-14),
        )
        .value;
        assert!((pv_gradient(&d2, -0.1).unwrap() - plain).abs() < 1e-12);
    }

    #[test]
    fn endpoint_pole_is_rejected() {
        let d1 = d(DensityId::D1);
        assert!(matches!(pv_gradient(&d1, -2.0), Err(Error::IllConditioned(_))));
        assert!(matches!(hessian_decomposition(&d1, -2.0, 0.0), Err(Error::IllConditioned(_))));
    }

    #[test]
    fn gradient_is_derivative_of_cost() {
        let h = 1e-5;
        for id in DensityId::ALL {
            let dd = d(id);
            for &k in &[-0.8, -0.95, -1.1] {
                let fd = (cost_j(&dd, k + h).unwrap() - cost_j(&dd, k - h).unwrap()) / (2.0 * h);
                assert!((fd - pv_gradient(&dd, k).unwrap()).abs() < 1e-4, "{id} K={k}");
            }
        }
    }

    #[test]
    fn regularized_gradient_is_derivative_of_regularized_cost() {
        let h = 1e-5;
        let d3 = d(DensityId::D3);
        for &k in &[-0.8, -0.93, -1.1] {
            for &e in &[1e-2, 1e-1, 1.0] {
                let fd = (reg_cost(&d3, k + h, e).unwrap() - reg_cost(&d3, k - h, e).unwrap()) / (2.0 * h);
                assert!((fd - reg_gradient(&d3, k, e).unwrap()).abs() < 1e-6, "K={k} eps={e}");
            }
        }
    }

    #[test]
    fn regularization_dominates_cost() {
        let d1 = d(DensityId::D1);
        for &k in &[-0.6, -0.835, -1.3] {
            for &e in &[1e-3, 1e-1, 1.0] {
                assert!(reg_cost(&d1, k, e).unwrap() >= cost_j(&d1, k).unwrap());
                assert!(reg_gap(&d1, k, e).unwrap() >= 0.0);
            }
        }
    }

    #[test]
    fn hessian_total_is_sum_of_parts() {
        let d2 = d(DensityId::D2);
        let hp = hessian_decomposition(&d2, -0.9, 0.01).unwrap();
        assert_eq!(hp.total, hp.boundary_term + hp.integral_term);
    }

    #[test]
    fn smooth_hessian_matches_second_difference() {
        let h = 1e-4;
        for id in DensityId::ALL {
            let dd = d(id);
            let k = -0.9;
            let fd = (reg_cost(&dd, k + h, 1.0).unwrap() - 2.0 * reg_cost(&dd, k, 1.0).unwrap()
                + reg_cost(&dd, k - h, 1.0).unwrap())
                / (h * h);
            let hp = hessian_decomposition(&dd, k, 1.0).unwrap();
            assert!((fd - hp.total).abs() < 1e-5, "{id}: fd={fd} total={}", hp.total);
        }
    }

    #[test]
    fn finite_part_hessian_matches_second_difference_of_cost() {
        let h = 1e-4;
        for id in DensityId::ALL {
            let dd = d(id);
            let k = find_kstar(&dd).unwrap();
            let fd = (cost_j(&dd, k + h).unwrap() - 2.0 * cost_j(&dd, k).unwrap() + cost_j(&dd, k - h).unwrap())
                / (h * h);
            let hp = hessian_decomposition(&dd, k, 0.0).unwrap();
            assert!((fd - hp.total).abs() / hp.total < 1e-3, "{id}: fd={fd} total={}", hp.total);
        }
    }

    #[test]
    fn kstar_of_uniform_matches_closed_form_root() {
        let k = find_kstar(&d(DensityId::D1)).unwrap();
        let oracle = brent(|k| Ok(uniform_pv_gradient(0.5, 1.5, k)), -1.9, -0.7, 1e-14, 200).unwrap();
        assert!((k - oracle).abs() < 1e-10);
    }

    #[test]
    fn regularized_optimum_persists() {
        let d2 = d(DensityId::D2);
        let k = find_kstar(&d2).unwrap();
        let basin = Interval::around(k, 0.14).unwrap();
        let ke = find_kstar_eps(&d2, 1e-8, basin).unwrap();
        assert!((ke - k).abs() < 1e-7);
        assert!(reg_gradient(&d2, ke, 1e-8).unwrap().abs() < 1e-9);
        assert!(matches!(
            find_kstar_eps(&d2, 1e-3, Interval::new(-0.5, -0.4).unwrap()),
            Err(Error::PersistenceViolated { .. })
        ));
    }

    #[test]
    fn default_delta_keeps_margin() {
        for id in DensityId::ALL {
            let dd = d(id);
            let k = find_kstar(&dd).unwrap();
            let delta = default_delta(&dd, k);
            assert!(pole_margin(&dd, k - delta) >= 0.05 && pole_margin(&dd, k + delta) >= 0.05);
        }
    }

    #[test]
    fn local_constants_reject_escaping_basin() {
        let d1 = d(DensityId::D1);
        assert!(matches!(local_constants(&d1, -0.835, 0.3), Err(Error::Precondition(_))));
    }

    #[test]
    fn interval_helpers() {
        let b = Interval::new(-1.0, -0.5).unwrap();
        assert_eq!(b.clamp(0.0), -0.5);
        assert_eq!(b.clamp(-3.0), -1.0);
        assert!(b.contains(-0.7));
        assert!(Interval::new(1.0, 0.0).is_err());
    }
}
