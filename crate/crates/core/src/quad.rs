//! Globally adaptive Gauss–Kronrod (10/21) quadrature with user break-points.
//!
//! The integrator never evaluates the integrand at interval endpoints, so an
//! integrable endpoint singularity placed on a break-point is safe.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// Relative rounding floor on the integral of |f|.
const ROUNDOFF: f64 = 100.0 * f64::EPSILON;

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_980_284_740,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

/// Tolerances and work limit for [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Bisections allowed beyond the initial break-point partition.
    pub max_subdivisions: usize,
}

impl QuadConfig {
    pub const fn new(abs_tol: f64, rel_tol: f64) -> Self {
        QuadConfig {
            abs_tol,
            rel_tol,
            max_subdivisions: 2000,
        }
    }

    pub const fn with_limit(mut self, max_subdivisions: usize) -> Self {
        self.max_subdivisions = max_subdivisions;
        self
    }
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig::new(1e-12, 1e-13)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOutcome {
    pub value: f64,
    pub abs_err: f64,
    pub intervals: usize,
    pub converged: bool,
    requested: f64,
}

impl QuadOutcome {
    /// The value, or a quadrature error carrying the achieved tolerance.
    pub fn checked(self) -> Result<f64> {
        if self.converged && self.value.is_finite() {
            Ok(self.value)
        } else {
            Err(Error::Quadrature {
                achieved: self.abs_err,
                requested: self.requested,
            })
        }
    }
}

/// One application of the 21-point Kronrod rule.
/// Returns (kronrod value, error estimate, integral of |f|).
pub fn qk21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let abs_half = half.abs();
    let fc = f(center);
    let mut resg = 0.0;
    let mut resk = fc * WGK[10];
    let mut resabs = resk.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..5 {
        let jtw = 2 * j + 1;
        let dx = half * XGK[jtw];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[jtw] = f1;
        fv2[jtw] = f2;
        resg += WG[j] * (f1 + f2);
        resk += WGK[jtw] * (f1 + f2);
        resabs += WGK[jtw] * (f1.abs() + f2.abs());
    }
    for j in 0..5 {
        let jtwm1 = 2 * j;
        let dx = half * XGK[jtwm1];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[jtwm1] = f1;
        fv2[jtwm1] = f2;
        resk += WGK[jtwm1] * (f1 + f2);
        resabs += WGK[jtwm1] * (f1.abs() + f2.abs());
    }
    let mean = resk * 0.5;
    let mut resasc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        resasc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let result = resk * half;
    resabs *= abs_half;
    resasc *= abs_half;
    let mut err = ((resk - resg) * half).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * resabs);
    }
    (result, err, resabs)
}

#[derive(Debug, Clone, Copy)]
struct Piece {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
    abs: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Sorted, de-duplicated break-points strictly inside (a, b), with the ends attached.
pub fn partition(a: f64, b: f64, breakpoints: &[f64]) -> Vec<f64> {
    let mut pts: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|&x| x > a && x < b && x.is_finite())
        .collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut out = Vec::with_capacity(pts.len() + 2);
    out.push(a);
    out.extend(pts);
    out.push(b);
    out
}

/// Adaptive integration of `f` over [a, b], first splitting at `breakpoints`.
///
/// Never fails: a run that exhausts its subdivision budget, or that would
/// bisect below floating-point resolution, returns its best estimate with
/// `converged = false`.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    cfg: &QuadConfig,
) -> QuadOutcome {
    if a == b {
        return QuadOutcome {
            value: 0.0,
            abs_err: 0.0,
            intervals: 0,
            converged: true,
            requested: cfg.abs_tol,
        };
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let pts = partition(lo, hi, breakpoints);
    let mut heap = BinaryHeap::with_capacity(pts.len() + cfg.max_subdivisions + 1);
    for w in pts.windows(2) {
        let (value, err, abs) = qk21(&f, w[0], w[1]);
        heap.push(Piece {
            a: w[0],
            b: w[1],
            value,
            err,
            abs,
        });
    }
    let totals = |heap: &BinaryHeap<Piece>| -> (f64, f64, f64) {
        let mut v = 0.0;
        let mut e = 0.0;
        let mut m = 0.0;
        for p in heap.iter() {
            v += p.value;
            e += p.err;
            m += p.abs;
        }
        (v, e, m)
    };
    // the requested tolerance, floored at what rounding in the sum allows
    let target = |value: f64, mass: f64| cfg.abs_tol.max(cfg.rel_tol * value.abs()).max(ROUNDOFF * mass);
    let (mut value, mut err, mut mass) = totals(&heap);
    let mut subdivisions = 0;
    let mut converged = false;
    loop {
        if err <= target(value, mass) {
            // running sums drift; confirm with an exact recount
            (value, err, mass) = totals(&heap);
            if err <= target(value, mass) {
                converged = true;
                break;
            }
        }
        if subdivisions >= cfg.max_subdivisions {
            break;
        }
        let worst = match heap.pop() {
            Some(p) => p,
            None => break,
        };
        let mid = 0.5 * (worst.a + worst.b);
        let scale = worst.a.abs().max(worst.b.abs()).max(f64::MIN_POSITIVE);
        if worst.b - worst.a <= 1000.0 * f64::EPSILON * scale || mid <= worst.a || mid >= worst.b {
            heap.push(worst);
            break;
        }
        let (v1, e1, m1) = qk21(&f, worst.a, mid);
        let (v2, e2, m2) = qk21(&f, mid, worst.b);
        value += v1 + v2 - worst.value;
        err += e1 + e2 - worst.err;
        mass += m1 + m2 - worst.abs;
        heap.push(Piece {
            a: worst.a,
            b: mid,
            value: v1,
            err: e1,
            abs: m1,
        });
        heap.push(Piece {
            a: mid,
            b: worst.b,
            value: v2,
            err: e2,
            abs: m2,
        });
        subdivisions += 1;
    }
    let (value, err, mass) = totals(&heap);
    QuadOutcome {
        value: sign * value,
        abs_err: err,
        intervals: heap.len(),
        converged,
        requested: target(value, mass),
    }
}
