//! Single-sample gradient estimators and Monte-Carlo harnesses.

use rayon::prelude::*;

use crate::densities::{DensityModel, NoiseDensity};
use crate::error::{Error, Result};
use crate::pvcore::pole;
use crate::rng::{self, branch, StreamRng};
use crate::stats;

/// Smallest admissible `ρ̂(B) + ρ̂(B̄)` for the plug-in pair weight.
pub const KDE_FLOOR: f64 = 1e-12;

/// `ψ(B; K, eps) = B (1 + BK) / ((1 + BK)² + eps²)`.
#[inline]
pub fn psi_naive(b: f64, k: f64, eps: f64) -> f64 {
    let v = k * (b - pole(k));
    b * v / (v * v + eps * eps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    Naive,
    PairedOracle,
    PairedPlugin,
}

impl EstimatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::Naive => "naive",
            EstimatorKind::PairedOracle => "paired",
            EstimatorKind::PairedPlugin => "plugin",
        }
    }
}

/// Pair value on the reflection zone, in the closed form
/// `K s [h(p+s) - h(p-s)] / ((K²s² + eps²)(ρ(p+s) + ρ(p-s)))`, `h = bρ`.
///
/// `b` must lie in the zone; the caller has already checked `|b - p| ≤ R`.
fn pair_value<D: DensityModel + ?Sized>(d: &D, b: f64, k: f64, eps: f64) -> Result<f64> {
    let p = pole(k);
    // the closed form is even in s; working from |s| makes b and its mirror
    // evaluate the same expression
    let s = (b - p).abs();
    if s == 0.0 {
        return Ok(0.0);
    }
    let (lo, hi) = d.support();
    let (up, down) = (p + s, p - s);
    let slack = 1e-12 * (hi - lo);
    for x in [up, down] {
        if x < lo - slack || x > hi + slack {
            return Err(Error::Domain {
                what: "reflected sample",
                value: x,
                lo,
                hi,
            });
        }
    }
    let (up, down) = (up.clamp(lo, hi), down.clamp(lo, hi));
    let (r1, r2) = (d.pdf_raw(up), d.pdf_raw(down));
    let mass = r1 + r2;
    if !(mass >= KDE_FLOOR) {
        return Err(Error::DegenerateKde(mass));
    }
    let ks = k * s;
    Ok(ks * (up * r1 - down * r2) / ((ks * ks + eps * eps) * mass))
}

/// Density-aware symmetric-pairing estimator with the maximal radius
/// `δ_K = min(p - b_min, b_max - p)`.
pub fn psi_paired<D: DensityModel + ?Sized>(b: f64, k: f64, eps: f64, d: &D) -> Result<f64> {
    d.check(b)?;
    let (lo, hi) = d.support();
    let p = pole(k);
    if !(p > lo && p < hi) {
        return Ok(psi_naive(b, k, eps));
    }
    let radius = (p - lo).min(hi - p);
    if (b - p).abs() <= radius {
        pair_value(d, b, k, eps)
    } else {
        Ok(psi_naive(b, k, eps))
    }
}

/// Plug-in pairing estimator: pair weights from `kde`, reflection radius `r`.
pub fn psi_plugin<D: DensityModel + ?Sized>(b: f64, k: f64, eps: f64, kde: &D, r: f64) -> Result<f64> {
    if (b - pole(k)).abs() <= r {
        kde.check(b)?;
        pair_value(kde, b, k, eps)
    } else {
        Ok(psi_naive(b, k, eps))
    }
}

/// Pair weight `w(b) = ρ(b) / (ρ(b) + ρ(2p - b))`.
pub fn pair_weight<D: DensityModel + ?Sized>(d: &D, b: f64, k: f64) -> Result<f64> {
    let mirror = 2.0 * pole(k) - b;
    let (r1, r2) = (d.pdf(b)?, d.pdf(mirror)?);
    Ok(r1 / (r1 + r2))
}

/// `Δ(b) = w_est(b) - w_true(b)`; odd under reflection through the pole.
pub fn weight_discrepancy<E, T>(est: &E, truth: &T, b: f64, k: f64) -> Result<f64>
where
    E: DensityModel + ?Sized,
    T: DensityModel + ?Sized,
{
    Ok(pair_weight(est, b, k)? - pair_weight(truth, b, k)?)
}

/// Uniform-in-eps bound `‖h'‖_∞ / (|K| ρ_min(K))` on the paired estimator,
/// with `ρ_min` the smallest pair average `(ρ(p+s) + ρ(p-s))/2` over
/// `|s| ≤ δ_K` (1001-point grid) and `‖h'‖_∞` over a 10001-point grid.
pub fn paired_bound<D: DensityModel + ?Sized>(d: &D, k: f64) -> f64 {
    use crate::densities::Side;
    let (lo, hi) = d.support();
    let p = pole(k);
    let radius = (p - lo).min(hi - p);
    let rho_min = (0..=1000)
        .map(|i| {
            let s = radius * i as f64 / 1000.0;
            0.5 * (d.pdf_raw((p + s).min(hi)) + d.pdf_raw((p - s).max(lo)))
        })
        .fold(f64::INFINITY, f64::min);
    let hprime_sup = (0..=10_000)
        .map(|i| {
            let b = lo + (hi - lo) * i as f64 / 10_000.0;
            let l = (d.pdf_raw(b) + b * d.dpdf_raw(b, Side::Left)).abs();
            let r = (d.pdf_raw(b) + b * d.dpdf_raw(b, Side::Right)).abs();
            l.max(r)
        })
        .fold(0.0, f64::max);
    hprime_sup / (k.abs() * rho_min)
}

/// Estimator selector with its parameters.
#[derive(Clone, Copy)]
pub struct EstimatorSpec<'a> {
    pub kind: EstimatorKind,
    pub eps: f64,
    /// Reflection radius; plug-in only.
    pub radius: Option<f64>,
    /// Weighting density: the true law (oracle) or an estimate (plug-in).
    pub source: Option<&'a dyn DensityModel>,
}

impl std::fmt::Debug for EstimatorSpec<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EstimatorSpec")
            .field("kind", &self.kind)
            .field("eps", &self.eps)
            .field("radius", &self.radius)
            .finish()
    }
}

impl<'a> EstimatorSpec<'a> {
    fn check_eps(eps: f64) -> Result<()> {
        if eps > 0.0 && eps.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!("eps must be positive, got {eps}")))
        }
    }

    pub fn naive(eps: f64) -> Result<Self> {
        Self::check_eps(eps)?;
        Ok(EstimatorSpec {
            kind: EstimatorKind::Naive,
            eps,
            radius: None,
            source: None,
        })
    }

    pub fn paired_oracle(eps: f64, density: &'a dyn DensityModel) -> Result<Self> {
        Self::check_eps(eps)?;
        Ok(EstimatorSpec {
            kind: EstimatorKind::PairedOracle,
            eps,
            radius: None,
            source: Some(density),
        })
    }

    /// `tau` is the pole-to-edge margin; the radius must lie in (0, tau/2].
    pub fn paired_plugin(eps: f64, kde: &'a dyn DensityModel, radius: f64, tau: f64) -> Result<Self> {
        Self::check_eps(eps)?;
        if !(radius > 0.0 && radius <= 0.5 * tau) {
            return Err(Error::Config(format!("radius {radius} outside (0, tau/2 = {}]", 0.5 * tau)));
        }
        Ok(EstimatorSpec {
            kind: EstimatorKind::PairedPlugin,
            eps,
            radius: Some(radius),
            source: Some(kde),
        })
    }

    #[inline]
    pub fn evaluate(&self, b: f64, k: f64) -> Result<f64> {
        match (self.kind, self.source, self.radius) {
            (EstimatorKind::Naive, _, _) => Ok(psi_naive(b, k, self.eps)),
            (EstimatorKind::PairedOracle, Some(d), _) => psi_paired(b, k, self.eps, d),
            (EstimatorKind::PairedPlugin, Some(d), Some(r)) => psi_plugin(b, k, self.eps, d, r),
            _ => Err(Error::Config("estimator spec is missing its density source".into())),
        }
    }

    fn values(&self, draws: &[f64], k: f64) -> Result<Vec<f64>> {
        draws.iter().map(|&b| self.evaluate(b, k)).collect()
    }
}

/// Mini-batch mean over `n` fresh i.i.d. draws from `sampler`.
pub fn mc_batch_mean(
    spec: &EstimatorSpec<'_>,
    sampler: &NoiseDensity,
    k: f64,
    n: usize,
    rng: &mut StreamRng,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    let draws = sampler.sample_from(rng, n);
    Ok(stats::mean(&spec.values(&draws, k)?))
}

/// [`mc_batch_mean`] on a stream seeded by `seed`.
pub fn mc_batch_mean_seeded(
    spec: &EstimatorSpec<'_>,
    sampler: &NoiseDensity,
    k: f64,
    n: usize,
    seed: u64,
) -> Result<f64> {
    mc_batch_mean(spec, sampler, k, n, &mut rng::stream(seed, &[branch::BATCH]))
}

/// Mean with its standard error from `n` i.i.d. draws.
pub fn mc_mean_se(
    spec: &EstimatorSpec<'_>,
    sampler: &NoiseDensity,
    k: f64,
    n: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let draws = sampler.sample_from(&mut rng::stream(seed, &[branch::BATCH]), n);
    let v = spec.values(&draws, k)?;
    Ok((stats::mean(&v), stats::std_error(&v)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceEstimate {
    pub mean_var: f64,
    /// Standard error of `mean_var` across seeds.
    pub se: f64,
    pub per_seed: Vec<f64>,
}

/// Per-seed sample variance of the estimator over `m` stratified draws,
/// averaged over `n_seeds` independent seeds.
pub fn mc_variance(
    spec: &EstimatorSpec<'_>,
    sampler: &NoiseDensity,
    k: f64,
    m: usize,
    n_seeds: usize,
    seed_base: u64,
) -> Result<VarianceEstimate> {
    if m < 1000 || n_seeds < 2 {
        return Err(Error::Config(format!("need m >= 1000 and n_seeds >= 2, got {m}, {n_seeds}")));
    }
    let per_seed: Vec<f64> = (0..n_seeds as u64)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed_base, &[branch::VARIANCE, i]);
            let draws = sampler.sample_stratified(&mut r, m);
            spec.values(&draws, k).map(|v| stats::variance(&v))
        })
        .collect::<Result<_>>()?;
    Ok(VarianceEstimate {
        mean_var: stats::mean(&per_seed),
        se: stats::std_error(&per_seed),
        per_seed,
    })
}
