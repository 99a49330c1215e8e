//! Projected policy-gradient learners and the deterministic Newton solver.
//!
//! * [`pg_density_known`]: constant-step mini-batch SGD with oracle pairing.
//! * [`pg_density_unknown`]: the same with a KDE plug-in built on a split sample.
//! * [`pg_robbins_monro`]: single-sample steps `2/(μ0(n+50))` with tail averaging.
//! * [`preliminary_phase`]: reaches the basin from afar on the `eps = 1` surrogate.
//! * [`plug_and_solve`], [`newton_naive`]: Newton on the first-order condition.

use rayon::prelude::*;

use crate::densities::{DensityModel, NoiseDensity};
use crate::error::{Error, Result};
use crate::estimators::{mc_batch_mean, mc_variance, EstimatorKind, EstimatorSpec};
use crate::kde::{build_kde, KdeModel};
use crate::pvcore::{
    find_kstar, hessian_decomposition, naive_gradient, pv_gradient, reg_gradient, GainPoint, Interval,
    LocalConstants, OracleOptions,
};
use crate::quad::{integrate, QuadConfig};
use crate::rng::{self, branch};

/// Euclidean projection onto the closed interval.
#[inline]
pub fn project(k: f64, basin: Interval) -> f64 {
    basin.clamp(k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgMode {
    Alg1,
    Alg2,
    RobbinsMonro,
}

impl PgMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PgMode::Alg1 => "alg1",
            PgMode::Alg2 => "alg2",
            PgMode::RobbinsMonro => "robbins_monro",
        }
    }
}

/// Kernel order and the constants `(c_R, c_1, c_h, C_σ)` of the plug-in learner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alg2Params {
    pub s: u32,
    pub c_r: f64,
    pub c1: f64,
    pub c_h: f64,
    pub c_sigma: f64,
}

impl Default for Alg2Params {
    fn default() -> Self {
        Alg2Params {
            s: 2,
            c_r: 0.6,
            c1: 0.5,
            c_h: 1.0,
            c_sigma: 1.0,
        }
    }
}

/// Settings of the diminishing-step learner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmParams {
    pub eps: f64,
    pub estimator: EstimatorKind,
    /// Step offset `n0` in `α_n = 2 / (μ0 (n + n0))`.
    pub offset: f64,
}

impl Default for RmParams {
    fn default() -> Self {
        RmParams {
            eps: 1e-5,
            estimator: EstimatorKind::PairedOracle,
            offset: 50.0,
        }
    }
}

/// Optimum and curvature used for the quadratic gap proxy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapReference {
    pub kstar: f64,
    pub hessian: f64,
}

impl GapReference {
    pub fn of<D: DensityModel + ?Sized>(d: &D) -> Result<Self> {
        let kstar = find_kstar(d)?;
        Ok(GapReference {
            kstar,
            hessian: hessian_decomposition(d, kstar, 0.0)?.total,
        })
    }

    /// `(H/2)(K - K*)²`.
    #[inline]
    pub fn gap(&self, k: f64) -> f64 {
        0.5 * self.hessian * (k - self.kstar).powi(2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PgConfig {
    pub eta: f64,
    pub k0: f64,
    pub basin: Interval,
    pub consts: LocalConstants,
    pub mode: PgMode,
    pub alg2_params: Option<Alg2Params>,
    /// Seed of the iteration streams.
    pub seed: u64,
    /// Seed of the KDE sample; defaults to `seed` (a disjoint branch either way).
    pub kde_seed: Option<u64>,
    pub rm: RmParams,
    /// Replaces the computed mini-batch size.
    pub batch_override: Option<usize>,
    /// Replaces the measured paired-variance bound of the density-known learner.
    pub sigma_star_sq: Option<f64>,
    pub reference: Option<GapReference>,
}

impl PgConfig {
    /// Basin taken from `consts`; plug-in constants filled in for `Alg2`.
    pub fn new(mode: PgMode, consts: LocalConstants, eta: f64, k0: f64, seed: u64) -> Self {
        PgConfig {
            eta,
            k0,
            basin: consts.basin(),
            consts,
            mode,
            alg2_params: (mode == PgMode::Alg2).then(Alg2Params::default),
            seed,
            kde_seed: None,
            rm: RmParams::default(),
            batch_override: None,
            sigma_star_sq: None,
            reference: None,
        }
    }

    pub fn with_reference(mut self, r: GapReference) -> Self {
        self.reference = Some(r);
        self
    }

    fn validate(&self, expected: PgMode) -> Result<()> {
        if self.mode != expected {
            return Err(Error::Config(format!(
                "mode {} passed to the {} learner",
                self.mode.as_str(),
                expected.as_str()
            )));
        }
        if !(self.basin.lo < self.basin.hi) || self.basin.contains(0.0) {
            return Err(Error::Config(format!("bad basin [{}, {}]", self.basin.lo, self.basin.hi)));
        }
        if !self.basin.contains(self.k0) {
            return Err(Error::Config(format!(
                "K0 = {} outside the basin [{}, {}]",
                self.k0, self.basin.lo, self.basin.hi
            )));
        }
        if expected != PgMode::RobbinsMonro && !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!("eta must be positive, got {}", self.eta)));
        }
        Ok(())
    }
}

/// One step: `k` is `K^(n)`, `g` the estimate that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Iterate {
    pub n: usize,
    pub k: f64,
    pub g: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SampleCount {
    pub kde_phase: usize,
    pub iteration_phase: usize,
}

impl SampleCount {
    pub fn total(&self) -> usize {
        self.kde_phase + self.iteration_phase
    }
}

/// Derived run parameters, recorded for the output files.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunParams {
    pub eps: f64,
    pub batch: usize,
    pub n_iter: usize,
    pub n1: usize,
    pub radius: Option<f64>,
    pub bandwidth: Option<f64>,
    pub sigma_star_sq: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct PgTrace {
    pub mode: PgMode,
    pub k0: f64,
    pub iterates: Vec<Iterate>,
    /// Tail average of the last half of the iterates (alg2 and Robbins–Monro).
    pub tail_average: Option<f64>,
    /// Reported estimate: the tail average when present, else the last iterate.
    pub k_hat: f64,
    pub samples: SampleCount,
    pub params: RunParams,
    pub final_gap_estimate: Option<f64>,
    pub kde: Option<KdeModel>,
}

impl PgTrace {
    fn finish(
        mode: PgMode,
        k0: f64,
        iterates: Vec<Iterate>,
        averaged: bool,
        samples: SampleCount,
        params: RunParams,
        reference: Option<GapReference>,
    ) -> Self {
        let ks: Vec<f64> = iterates.iter().map(|it| it.k).collect();
        let tail_average = (averaged && !ks.is_empty()).then(|| tail_average(&ks));
        let k_hat = tail_average.unwrap_or_else(|| ks.last().copied().unwrap_or(k0));
        PgTrace {
            mode,
            k0,
            iterates,
            tail_average,
            k_hat,
            samples,
            params,
            final_gap_estimate: reference.map(|r| r.gap(k_hat)),
            kde: None,
        }
    }

    pub fn ks(&self) -> Vec<f64> {
        self.iterates.iter().map(|it| it.k).collect()
    }
}

/// Mean of `K_k` for `k = ⌊n/2⌋+1 ..= n` (1-based), `n = ks.len()`.
pub fn tail_average(ks: &[f64]) -> f64 {
    let n = ks.len();
    assert!(n > 0, "tail average of an empty trace");
    let w = &ks[n / 2..];
    w.iter().sum::<f64>() / w.len() as f64
}

/// Tail averages at each checkpoint `n` (1 ≤ n ≤ ks.len()) from one prefix sum.
pub fn tail_averages(ks: &[f64], checkpoints: &[usize]) -> Vec<f64> {
    let mut prefix = Vec::with_capacity(ks.len() + 1);
    prefix.push(0.0);
    // centre on the first iterate so the differences keep their digits
    let c = ks.first().copied().unwrap_or(0.0);
    let mut acc = 0.0;
    for &k in ks {
        acc += k - c;
        prefix.push(acc);
    }
    checkpoints
        .iter()
        .map(|&n| {
            assert!(n >= 1 && n <= ks.len(), "checkpoint {n} outside 1..={}", ks.len());
            let m = n / 2;
            c + (prefix[n] - prefix[m]) / (n - m) as f64
        })
        .collect()
}

fn ceil_count(x: f64, what: &str) -> Result<usize> {
    if !(x.is_finite() && x >= 0.0 && x < 1e12) {
        return Err(Error::Config(format!("{what} = {x} is not a usable count")));
    }
    Ok((x.ceil() as usize).max(1))
}

/// Largest paired-estimator variance over a 9-point grid of `basin`,
/// measured with 2·10⁴ stratified draws on two seeds.
pub fn probe_sigma_star(d: &NoiseDensity, basin: Interval, eps: f64, seed: u64) -> Result<f64> {
    let spec = EstimatorSpec::paired_oracle(eps, d)?;
    let grid = basin.grid(9);
    let vars: Vec<f64> = grid
        .par_iter()
        .enumerate()
        .map(|(i, &k)| {
            let s = rng::derive_seed(seed, &[branch::SIGMA_PROBE, i as u64]);
            mc_variance(&spec, d, k, 20_000, 2, s).map(|v| v.mean_var)
        })
        .collect::<Result<_>>()?;
    Ok(vars.into_iter().fold(0.0, f64::max))
}

fn run_constant_step(
    spec: &EstimatorSpec<'_>,
    sampler: &NoiseDensity,
    cfg: &PgConfig,
    batch: usize,
    n_iter: usize,
) -> Result<Vec<Iterate>> {
    let step = 1.0 / cfg.consts.l0;
    let mut k = cfg.k0;
    let mut out = Vec::with_capacity(n_iter);
    for t in 0..n_iter {
        let mut r = rng::stream(cfg.seed, &[branch::ITERATION, t as u64]);
        let g = mc_batch_mean(spec, sampler, k, batch, &mut r)?;
        k = project(k - step * g, cfg.basin);
        out.push(Iterate { n: t + 1, k, g });
    }
    Ok(out)
}

/// Density-known learner: `eps = η/(3C̄_b)`, batch `⌈3σ★²/(2μ0η)⌉`,
/// `⌈(L0/μ0) log(3L0δ²/(2η))⌉` projected steps of size `1/L0`.
pub fn pg_density_known(d: &NoiseDensity, cfg: &PgConfig) -> Result<PgTrace> {
    cfg.validate(PgMode::Alg1)?;
    let c = &cfg.consts;
    let eta = cfg.eta;
    let eps = eta / (3.0 * c.cbar_b);
    let sigma2 = match cfg.sigma_star_sq {
        Some(s) => s,
        None => probe_sigma_star(d, cfg.basin, eps, cfg.seed)?,
    };
    let batch = match cfg.batch_override {
        Some(n) => n,
        None => ceil_count(3.0 * sigma2 / (2.0 * c.mu0 * eta), "batch size")?,
    };
    let n_iter = ceil_count(
        (c.l0 / c.mu0) * (3.0 * c.l0 * c.delta * c.delta / (2.0 * eta)).ln().max(0.0),
        "iteration count",
    )?;
    let spec = EstimatorSpec::paired_oracle(eps, d)?;
    let iterates = run_constant_step(&spec, d, cfg, batch, n_iter)?;
    Ok(PgTrace::finish(
        PgMode::Alg1,
        cfg.k0,
        iterates,
        false,
        SampleCount {
            kde_phase: 0,
            iteration_phase: n_iter * batch,
        },
        RunParams {
            eps,
            batch,
            n_iter,
            sigma_star_sq: Some(sigma2),
            ..RunParams::default()
        },
        cfg.reference,
    ))
}

/// Derived plug-in schedule for accuracy `eta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alg2Schedule {
    pub radius: f64,
    pub eps: f64,
    pub n1: usize,
    pub batch: usize,
    pub n_iter: usize,
}

/// `R = min(c_R η^{1/(2s)}, τ/2)` (further capped by the basin's own pole
/// margin), `eps = η/(4C̄_b)`, `n₁ = ⌈c₁ η^{-(2s+1)/(2s)}⌉`,
/// `N = ⌈2C_σ/(μ0 R η)⌉`, `n★ = ⌈(L0/μ0) log(4Δ̄/η)⌉`, `Δ̄ = L0δ²/2`.
pub fn alg2_schedule(consts: &LocalConstants, basin: Interval, eta: f64, p: &Alg2Params) -> Result<Alg2Schedule> {
    if !(eta > 0.0) {
        return Err(Error::Config(format!("eta must be positive, got {eta}")));
    }
    let s = p.s as f64;
    let radius = (p.c_r * eta.powf(1.0 / (2.0 * s)))
        .min(0.5 * consts.tau)
        .min(consts.basin_margin);
    let eps = eta / (4.0 * consts.cbar_b);
    let k_min = basin.lo.abs().min(basin.hi.abs());
    if eps > k_min * radius {
        return Err(Error::Config(format!(
            "eta = {eta} too large: eps = {eps:e} exceeds K_min R = {:e}",
            k_min * radius
        )));
    }
    let n1 = ceil_count(p.c1 * eta.powf(-(2.0 * s + 1.0) / (2.0 * s)), "KDE sample size")?;
    let batch = ceil_count(2.0 * p.c_sigma / (consts.mu0 * radius * eta), "batch size")?;
    let delta_bar = 0.5 * consts.l0 * consts.delta * consts.delta;
    let n_iter = ceil_count(
        (consts.l0 / consts.mu0) * (4.0 * delta_bar / eta).ln().max(0.0),
        "iteration count",
    )?;
    Ok(Alg2Schedule {
        radius,
        eps,
        n1,
        batch,
        n_iter,
    })
}

/// Density-unknown learner. The KDE is built from `n₁` draws on the KDE
/// branch of the seed tree; iterations draw from the iteration branch.
pub fn pg_density_unknown(sampler: &NoiseDensity, cfg: &PgConfig) -> Result<PgTrace> {
    cfg.validate(PgMode::Alg2)?;
    let p = cfg
        .alg2_params
        .ok_or_else(|| Error::Config("alg2 requires alg2_params".into()))?;
    let mut sched = alg2_schedule(&cfg.consts, cfg.basin, cfg.eta, &p)?;
    if let Some(n) = cfg.batch_override {
        sched.batch = n;
    }
    let kde_seed = cfg.kde_seed.unwrap_or(cfg.seed);
    let draws = sampler.sample_from(&mut rng::stream(kde_seed, &[branch::KDE]), sched.n1);
    let kde = build_kde(&draws, p.s, p.c_h, sampler.support())?;
    let spec = EstimatorSpec::paired_plugin(sched.eps, &kde, sched.radius, cfg.consts.tau)?;
    let iterates = run_constant_step(&spec, sampler, cfg, sched.batch, sched.n_iter)?;
    let mut trace = PgTrace::finish(
        PgMode::Alg2,
        cfg.k0,
        iterates,
        true,
        SampleCount {
            kde_phase: sched.n1,
            iteration_phase: sched.n_iter * sched.batch,
        },
        RunParams {
            eps: sched.eps,
            batch: sched.batch,
            n_iter: sched.n_iter,
            n1: sched.n1,
            radius: Some(sched.radius),
            bandwidth: Some(kde.bandwidth()),
            sigma_star_sq: None,
        },
        cfg.reference,
    );
    trace.kde = Some(kde);
    Ok(trace)
}

/// Single-sample projected SGD with `α_n = 2/(μ0(n + n0))`, `n = 0, 1, ...`,
/// on one stream; the trace carries the tail average over all `n_iter` steps.
pub fn pg_robbins_monro(d: &NoiseDensity, n_iter: usize, cfg: &PgConfig) -> Result<PgTrace> {
    cfg.validate(PgMode::RobbinsMonro)?;
    if n_iter == 0 {
        return Err(Error::Config("n_iter must be positive".into()));
    }
    let spec = match cfg.rm.estimator {
        EstimatorKind::Naive => EstimatorSpec::naive(cfg.rm.eps)?,
        EstimatorKind::PairedOracle => EstimatorSpec::paired_oracle(cfg.rm.eps, d)?,
        EstimatorKind::PairedPlugin => {
            return Err(Error::Config("the Robbins–Monro learner takes naive or paired".into()))
        }
    };
    let mu0 = cfg.consts.mu0;
    let mut r = rng::stream(cfg.seed, &[branch::ITERATION]);
    let mut k = cfg.k0;
    let mut iterates = Vec::with_capacity(n_iter);
    for n in 0..n_iter {
        let b = d.draw(&mut r);
        let g = spec.evaluate(b, k)?;
        k = project(k - 2.0 / (mu0 * (n as f64 + cfg.rm.offset)) * g, cfg.basin);
        iterates.push(Iterate { n: n + 1, k, g });
    }
    Ok(PgTrace::finish(
        PgMode::RobbinsMonro,
        cfg.k0,
        iterates,
        true,
        SampleCount {
            kde_phase: 0,
            iteration_phase: n_iter,
        },
        RunParams {
            eps: cfg.rm.eps,
            batch: 1,
            n_iter,
            ..RunParams::default()
        },
        cfg.reference,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreliminaryResult {
    pub k: f64,
    pub samples: usize,
    pub iterations: usize,
    pub batch: usize,
    pub t_max: usize,
    pub mu1: f64,
    pub l1: f64,
    pub sigma1_sq: f64,
    pub path: Vec<f64>,
}

/// `Var ψ(B; K, 1)` by quadrature.
fn surrogate_variance<D: DensityModel + ?Sized>(d: &D, k: f64) -> Result<f64> {
    let (lo, hi) = d.support();
    let psi = |b: f64| {
        let v = 1.0 + b * k;
        b * v / (v * v + 1.0)
    };
    let second = integrate(|b| d.pdf_raw(b) * psi(b).powi(2), lo, hi, d.breakpoints(), &QuadConfig::default())
        .checked()?;
    let first = reg_gradient(d, k, 1.0)?;
    Ok(second - first * first)
}

/// Mini-batch SGD on `J_1` until the iterate enters `target`.
///
/// Constants come from sweeps of 41 points over `k_set`; the batch is
/// `⌈σ₁²/(μ₁²δ⁴)⌉` with `δ` the half-width of `target`, and at most
/// `⌈4(L₁/μ₁) log(|K_set|/δ)⌉` steps are taken. No step depends on any
/// accuracy target.
pub fn preliminary_phase(
    d: &NoiseDensity,
    k0: f64,
    k_set: Interval,
    target: Interval,
    seed: u64,
) -> Result<PreliminaryResult> {
    if !k_set.contains(k0) {
        return Err(Error::Config(format!("K0 = {k0} outside K_set [{}, {}]", k_set.lo, k_set.hi)));
    }
    let grid = k_set.grid(41);
    if grid.iter().any(|&k| GainPoint::new(k).is_err()) {
        return Err(Error::Config("K_set contains K = 0".into()));
    }
    let rows: Vec<(f64, f64)> = grid
        .par_iter()
        .map(|&k| Ok((hessian_decomposition(d, k, 1.0)?.total, surrogate_variance(d, k)?)))
        .collect::<Result<_>>()?;
    let mu1 = rows.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let l1 = rows.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max);
    let sigma1_sq = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    if !(mu1 > 0.0) {
        return Err(Error::Precondition(format!("J_1 not strongly convex on K_set (min curvature {mu1})")));
    }
    let delta = 0.5 * target.width();
    let batch = ceil_count(sigma1_sq / (mu1 * mu1 * delta.powi(4)), "preliminary batch")?;
    let t_max = ceil_count(4.0 * (l1 / mu1) * (k_set.width() / delta).ln().max(0.0), "preliminary steps")?;
    let mut result = PreliminaryResult {
        k: k0,
        samples: 0,
        iterations: 0,
        batch,
        t_max,
        mu1,
        l1,
        sigma1_sq,
        path: vec![k0],
    };
    if target.contains(k0) {
        return Ok(result);
    }
    let spec = EstimatorSpec::naive(1.0)?;
    let mut k = k0;
    for t in 0..t_max {
        let mut r = rng::stream(seed, &[branch::PRELIMINARY, t as u64]);
        let g = mc_batch_mean(&spec, d, k, batch, &mut r)?;
        k = project(k - g / l1, k_set);
        result.samples += batch;
        result.iterations = t + 1;
        result.path.push(k);
        if target.contains(k) {
            result.k = k;
            return Ok(result);
        }
    }
    Err(Error::PhaseFailure {
        iterations: t_max,
        k,
    })
}

/// Preliminary phase from `k_start` followed by the density-known learner
/// started at the point where the phase entered the basin.
pub fn pg_density_known_from(
    d: &NoiseDensity,
    k_start: f64,
    k_set: Interval,
    cfg: &PgConfig,
) -> Result<(PreliminaryResult, PgTrace)> {
    let pre = preliminary_phase(d, k_start, k_set, cfg.basin, cfg.seed)?;
    let mut inner = cfg.clone();
    inner.k0 = pre.k;
    let trace = pg_density_known(d, &inner)?;
    Ok((pre, trace))
}

/// Stopping rule and safeguards of the Newton solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub max_iter: usize,
    pub tol: f64,
    /// Abort when the Hessian drops below this (typically `μ0/2`).
    pub curvature_floor: Option<f64>,
    /// Settings for `G`; these decide the attainable residual.
    pub oracle: OracleOptions,
    /// Settings for the Hessian, which only steers the step.
    pub hessian_oracle: OracleOptions,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            max_iter: 20,
            tol: 1e-12,
            curvature_floor: None,
            oracle: OracleOptions::SMOOTH,
            hessian_oracle: OracleOptions {
                quad: QuadConfig::new(1e-10, 1e-10),
                use_breakpoints: true,
            },
        }
    }
}

/// Outcome of a Newton run; `residuals[i] = |G(K_i)|` with `K_0` the warm start.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonReport {
    pub k: f64,
    pub iterates: Vec<f64>,
    pub residuals: Vec<f64>,
    pub converged: bool,
}

impl NewtonReport {
    pub fn iterations(&self) -> usize {
        self.iterates.len() - 1
    }
}

/// Newton on the principal-value first-order condition, with the Hadamard
/// finite-part Hessian as derivative. Works for any density model, so a KDE
/// can be plugged in directly. Stops at `|G| ≤ tol` or after `max_iter` steps;
/// non-convergence is reported, not raised.
pub fn plug_and_solve<D: DensityModel + ?Sized>(
    d: &D,
    k_warm: f64,
    basin: Interval,
    opts: &NewtonOptions,
) -> Result<NewtonReport> {
    if !basin.contains(k_warm) {
        return Err(Error::Config(format!(
            "warm start {k_warm} outside the basin [{}, {}]",
            basin.lo, basin.hi
        )));
    }
    let mut k = k_warm;
    let mut report = NewtonReport {
        k,
        iterates: vec![k],
        residuals: Vec::new(),
        converged: false,
    };
    for it in 0..=opts.max_iter {
        let g = crate::pvcore::pv_gradient_with(d, k, &opts.oracle)?;
        report.residuals.push(g.abs());
        if g.abs() <= opts.tol {
            report.converged = true;
            break;
        }
        if it == opts.max_iter {
            break;
        }
        let h = crate::pvcore::hessian_decomposition_with(d, k, 0.0, &opts.hessian_oracle)?.total;
        let floor = opts.curvature_floor.unwrap_or(0.0);
        if !(h > floor) {
            return Err(Error::IllConditioned(format!("Hessian {h} below {floor} at K = {k}")));
        }
        k = project(k - g / h, basin);
        report.iterates.push(k);
    }
    report.k = k;
    Ok(report)
}

/// Newton driven by [`naive_gradient`] with a central finite-difference
/// derivative of step `fd_step`. The residual is the scheme's own `|G|`.
pub fn newton_naive<D: DensityModel + ?Sized>(
    d: &D,
    k_warm: f64,
    basin: Interval,
    iterations: usize,
    fd_step: f64,
) -> NewtonReport {
    let quad = OracleOptions::SMOOTH.quad;
    let g = |k: f64| naive_gradient(d, k, &quad).value;
    let mut k = k_warm;
    let mut report = NewtonReport {
        k,
        iterates: vec![k],
        residuals: Vec::new(),
        converged: false,
    };
    for it in 0..=iterations {
        let gk = g(k);
        report.residuals.push(gk.abs());
        if it == iterations {
            break;
        }
        let h = (g(k + fd_step) - g(k - fd_step)) / (2.0 * fd_step);
        let next = k - gk / h;
        // a non-finite step leaves the iterate where it is
        if next.is_finite() {
            k = project(next, basin);
        }
        report.iterates.push(k);
    }
    report.k = k;
    report
}

/// `|G|` at `k` from the parity-shell oracle; convenience for reports.
pub fn pv_residual<D: DensityModel + ?Sized>(d: &D, k: f64) -> Result<f64> {
    pv_gradient(d, k).map(f64::abs)
}
