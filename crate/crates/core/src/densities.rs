//! Noise densities on compact positive supports and the four built-in test laws.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use statrs::function::erf::{erf, erf_inv};

use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};

/// Which one-sided derivative to return at a breakpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Side {
    Left,
    #[default]
    Right,
}

/// Anything that can stand in for a noise density inside the population
/// oracle: closed-form laws and kernel estimates alike.
///
/// The `_raw` methods skip the support check; callers must keep `b` inside
/// [`support`](Self::support).
pub trait DensityModel: Sync {
    fn support(&self) -> (f64, f64);
    /// Interior points where the derivative may jump, sorted.
    fn breakpoints(&self) -> &[f64];
    fn pdf_raw(&self, b: f64) -> f64;
    fn dpdf_raw(&self, b: f64, side: Side) -> f64;

    fn pdf(&self, b: f64) -> Result<f64> {
        self.check(b)?;
        Ok(self.pdf_raw(b))
    }

    fn dpdf(&self, b: f64, side: Side) -> Result<f64> {
        self.check(b)?;
        Ok(self.dpdf_raw(b, side))
    }

    fn check(&self, b: f64) -> Result<()> {
        let (lo, hi) = self.support();
        if b >= lo && b <= hi {
            Ok(())
        } else {
            Err(Error::Domain {
                what: "b",
                value: b,
                lo,
                hi,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DensityId {
    D1,
    D2,
    D3,
    D4,
}

impl DensityId {
    pub const ALL: [DensityId; 4] = [DensityId::D1, DensityId::D2, DensityId::D3, DensityId::D4];

    pub fn as_str(self) -> &'static str {
        match self {
            DensityId::D1 => "D1",
            DensityId::D2 => "D2",
            DensityId::D3 => "D3",
            DensityId::D4 => "D4",
        }
    }
}

impl fmt::Display for DensityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DensityId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "D1" => Ok(DensityId::D1),
            "D2" => Ok(DensityId::D2),
            "D3" => Ok(DensityId::D3),
            "D4" => Ok(DensityId::D4),
            other => Err(Error::Config(format!("unknown density id '{other}' (expected D1..D4)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Shape {
    Uniform,
    /// Beta(2,2) mapped affinely onto the support.
    Beta22,
    TruncatedNormal { mean: f64, sd: f64, cdf_lo: f64, mass: f64 },
    Triangular { apex: f64 },
}

/// A probability density on `[lo, hi]` with `0 < lo < hi`. Immutable.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseDensity {
    lo: f64,
    hi: f64,
    smoothness: u32,
    breakpoints: Vec<f64>,
    shape: Shape,
    id: Option<DensityId>,
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / SQRT_2))
}

impl NoiseDensity {
    fn validate(lo: f64, hi: f64) -> Result<()> {
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && hi > lo) {
            return Err(Error::Config(format!("support must satisfy 0 < lo < hi, got [{lo}, {hi}]")));
        }
        Ok(())
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        Self::validate(lo, hi)?;
        Ok(NoiseDensity {
            lo,
            hi,
            smoothness: u32::MAX,
            breakpoints: Vec::new(),
            shape: Shape::Uniform,
            id: None,
        })
    }

    pub fn scaled_beta22(lo: f64, hi: f64) -> Result<Self> {
        Self::validate(lo, hi)?;
        Ok(NoiseDensity {
            lo,
            hi,
            smoothness: u32::MAX,
            breakpoints: Vec::new(),
            shape: Shape::Beta22,
            id: None,
        })
    }

    pub fn truncated_normal(mean: f64, sd: f64, lo: f64, hi: f64) -> Result<Self> {
        Self::validate(lo, hi)?;
        if !(sd > 0.0 && sd.is_finite() && mean.is_finite()) {
            return Err(Error::Config(format!("normal sd must be positive, got {sd}")));
        }
        let cdf_lo = std_normal_cdf((lo - mean) / sd);
        let mass = std_normal_cdf((hi - mean) / sd) - cdf_lo;
        Ok(NoiseDensity {
            lo,
            hi,
            smoothness: u32::MAX,
            breakpoints: Vec::new(),
            shape: Shape::TruncatedNormal { mean, sd, cdf_lo, mass },
            id: None,
        })
    }

    pub fn triangular(lo: f64, apex: f64, hi: f64) -> Result<Self> {
        Self::validate(lo, hi)?;
        if !(apex > lo && apex < hi) {
            return Err(Error::Config(format!("apex {apex} must lie inside ({lo}, {hi})")));
        }
        Ok(NoiseDensity {
            lo,
            hi,
            smoothness: 0,
            breakpoints: vec![apex],
            shape: Shape::Triangular { apex },
            id: None,
        })
    }

    pub fn builtin(id: DensityId) -> Self {
        let mut d = match id {
            DensityId::D1 => Self::uniform(0.5, 1.5),
            DensityId::D2 => Self::scaled_beta22(0.5, 1.5),
            DensityId::D3 => Self::truncated_normal(1.0, 0.3, 0.5, 1.5),
            DensityId::D4 => Self::triangular(0.5, 1.0, 1.5),
        }
        .expect("built-in parameters are valid");
        d.id = Some(id);
        d
    }

    pub fn id(&self) -> Option<DensityId> {
        self.id
    }

    pub fn smoothness(&self) -> u32 {
        self.smoothness
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// Inverse CDF. `u` is clamped to [0, 1].
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let w = self.hi - self.lo;
        let b = match self.shape {
            Shape::Uniform => self.lo + u * w,
            Shape::Beta22 => {
                let x = 0.5 + (((1.0 - 2.0 * u).clamp(-1.0, 1.0).acos() + 4.0 * PI) / 3.0).cos();
                self.lo + x.clamp(0.0, 1.0) * w
            }
            Shape::TruncatedNormal { mean, sd, cdf_lo, mass } => {
                let p = cdf_lo + u * mass;
                mean + sd * SQRT_2 * erf_inv((2.0 * p - 1.0).clamp(-1.0, 1.0))
            }
            Shape::Triangular { apex } => {
                let c = (apex - self.lo) / w;
                if u < c {
                    self.lo + (u * w * (apex - self.lo)).sqrt()
                } else {
                    self.hi - ((1.0 - u) * w * (self.hi - apex)).sqrt()
                }
            }
        };
        b.clamp(self.lo, self.hi)
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.random::<f64>())
    }

    /// `n` i.i.d. draws, deterministic in `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut r = rng::stream(seed, &[]);
        self.sample_from(&mut r, n)
    }

    pub fn sample_from(&self, rng: &mut StreamRng, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.draw(rng)).collect()
    }

    /// Stratified draws: the i-th draw is the quantile of (i + V_i)/n with
    /// V_i uniform, one draw per probability stratum. A uniformly chosen
    /// element is distributed as the density.
    pub fn sample_stratified(&self, rng: &mut StreamRng, n: usize) -> Vec<f64> {
        let inv = 1.0 / n as f64;
        (0..n)
            .map(|i| self.quantile((i as f64 + rng.random::<f64>()) * inv))
            .collect()
    }
}

impl DensityModel for NoiseDensity {
    fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    fn pdf_raw(&self, b: f64) -> f64 {
        let w = self.hi - self.lo;
        match self.shape {
            Shape::Uniform => 1.0 / w,
            Shape::Beta22 => {
                let x = (b - self.lo) / w;
                6.0 * x * (1.0 - x) / w
            }
            Shape::TruncatedNormal { mean, sd, mass, .. } => {
                let z = (b - mean) / sd;
                (-0.5 * z * z).exp() / (sd * (2.0 * PI).sqrt() * mass)
            }
            Shape::Triangular { apex } => {
                let height = 2.0 / w;
                if b <= apex {
                    height * (b - self.lo) / (apex - self.lo)
                } else {
                    height * (self.hi - b) / (self.hi - apex)
                }
            }
        }
    }

    fn dpdf_raw(&self, b: f64, side: Side) -> f64 {
        let w = self.hi - self.lo;
        match self.shape {
            Shape::Uniform => 0.0,
            Shape::Beta22 => {
                let x = (b - self.lo) / w;
                6.0 * (1.0 - 2.0 * x) / (w * w)
            }
            Shape::TruncatedNormal { mean, sd, .. } => -(b - mean) / (sd * sd) * self.pdf_raw(b),
            Shape::Triangular { apex } => {
                let height = 2.0 / w;
                let rising = b < apex || (b == apex && side == Side::Left);
                if rising {
                    height / (apex - self.lo)
                } else {
                    -height / (self.hi - apex)
                }
            }
        }
    }
}

/// Look up a built-in density by its id string.
pub fn make_builtin(name: &str) -> Result<NoiseDensity> {
    Ok(NoiseDensity::builtin(name.parse()?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::{integrate, QuadConfig};

    fn all() -> Vec<NoiseDensity> {
        DensityId::ALL.iter().map(|&id| NoiseDensity::builtin(id)).collect()
    }

    #[test]
    fn builtin_examples() {
        let d1 = make_builtin("D1").unwrap();
        assert_eq!(d1.pdf(0.7).unwrap(), 1.0);
        let d2 = make_builtin("D2").unwrap();
        assert!((d2.pdf(1.0).unwrap() - 1.5).abs() < 1e-15);
        let d4 = make_builtin("d4").unwrap();
        assert!((d4.pdf(1.0).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(d4.breakpoints(), &[1.0]);
        assert_eq!(d4.dpdf(1.0, Side::Left).unwrap(), 4.0);
        assert_eq!(d4.dpdf(1.0, Side::Right).unwrap(), -4.0);
        let d3 = make_builtin("D3").unwrap();
        assert_eq!(d3.dpdf(1.0, Side::Right).unwrap(), 0.0);
        assert!(matches!(make_builtin("D5"), Err(Error::Config(_))));
    }

    #[test]
    fn domain_is_enforced() {
        let d = NoiseDensity::builtin(DensityId::D2);
        assert!(matches!(d.pdf(0.49), Err(Error::Domain { .. })));
        assert!(matches!(d.dpdf(1.51, Side::Left), Err(Error::Domain { .. })));
        assert!(d.pdf(0.5).is_ok() && d.pdf(1.5).is_ok());
    }

    #[test]
    fn normalization() {
        let cfg = QuadConfig::new(1e-14, 1e-14);
        for d in all() {
            let (lo, hi) = d.support();
            let m = integrate(|b| d.pdf_raw(b), lo, hi, d.breakpoints(), &cfg).checked().unwrap();
            assert!((m - 1.0).abs() < 1e-10, "{:?}: {m}", d.id());
        }
    }

    #[test]
    fn truncated_normal_constant_matches_closed_form() {
        let d = NoiseDensity::builtin(DensityId::D3);
        let z = 0.3 * (2.0 * PI).sqrt() * erf(0.5 / (0.3 * SQRT_2));
        assert!((d.pdf_raw(1.0) - 1.0 / z).abs() < 1e-12);
    }

    #[test]
    fn positive_inside_and_symmetric() {
        for d in all() {
            for i in 1..100 {
                let u = 0.5 * i as f64 / 100.0;
                assert!(d.pdf_raw(1.0 + u) > 0.0);
                assert!((d.pdf_raw(1.0 + u) - d.pdf_raw(1.0 - u)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let h = 1e-6;
        for d in all() {
            for i in 1..40 {
                let b = 0.5 + i as f64 / 40.0;
                if d.breakpoints().iter().any(|&c| (c - b).abs() < 1e-3) {
                    continue;
                }
                let fd = (d.pdf_raw(b + h) - d.pdf_raw(b - h)) / (2.0 * h);
                assert!((fd - d.dpdf_raw(b, Side::Right)).abs() < 1e-6, "{:?} at {b}", d.id());
            }
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        let cfg = QuadConfig::new(1e-14, 1e-14);
        for d in all() {
            for i in 0..=20 {
                let u = i as f64 / 20.0;
                let b = d.quantile(u);
                let (lo, _) = d.support();
                let cdf = integrate(|x| d.pdf_raw(x), lo, b, d.breakpoints(), &cfg).value;
                assert!((cdf - u).abs() < 1e-10, "{:?} u={u}: cdf={cdf}", d.id());
            }
        }
    }

    #[test]
    fn sampling_is_deterministic_and_in_support() {
        let d1 = NoiseDensity::builtin(DensityId::D1);
        assert_eq!(d1.sample(3, 7), d1.sample(3, 7));
        let d3 = NoiseDensity::builtin(DensityId::D3);
        assert!(d3.sample(100_000, 11).iter().all(|&b| (0.5..=1.5).contains(&b)));
    }

    #[test]
    fn sample_mean_of_beta22() {
        let d = NoiseDensity::builtin(DensityId::D2);
        let xs = d.sample(1_000_000, 1);
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let sd = (0.05f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * sd / 1000.0, "{mean}");
    }

    #[test]
    fn histogram_matches_pdf() {
        for d in all() {
            let xs = d.sample(1_000_000, 5);
            let bins = 200;
            let width = 1.0 / bins as f64;
            let mut counts = vec![0usize; bins];
            for &x in &xs {
                counts[(((x - 0.5) / width) as usize).min(bins - 1)] += 1;
            }
            let cfg = QuadConfig::new(1e-13, 1e-13);
            let mut worst: f64 = 0.0;
            let mut peak: f64 = 0.0;
            for (k, &c) in counts.iter().enumerate() {
                let a = 0.5 + k as f64 * width;
                let mid = a + 0.5 * width;
                peak = peak.max(d.pdf_raw(mid));
                if !(0.55..=1.45).contains(&mid) {
                    continue;
                }
                let bin_mean = integrate(|x| d.pdf_raw(x), a, a + width, d.breakpoints(), &cfg).value / width;
                let est = c as f64 / (xs.len() as f64 * width);
                worst = worst.max((est - bin_mean).abs());
            }
            let worst = worst / peak;
            assert!(worst < 0.05, "{:?}: {worst}", d.id());
        }
    }

    #[test]
    fn rejects_bad_supports() {
        assert!(NoiseDensity::uniform(0.0, 1.0).is_err());
        assert!(NoiseDensity::uniform(1.0, 1.0).is_err());
        assert!(NoiseDensity::triangular(0.5, 1.5, 1.5).is_err());
        assert!(NoiseDensity::truncated_normal(1.0, 0.0, 0.5, 1.5).is_err());
    }
}
