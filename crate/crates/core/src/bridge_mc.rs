//! Monte Carlo over bridges pinned at both ends, via free paths and endpoint
//! reweighting, and the Feynman–Kac estimator of the heat-trace difference.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, NhtError, Result};
use crate::levy_kernels::{eval_kernel, fixed_time_kernel, kernel_at_zero, FixedTimeKernel, KernelSpec, Variant};
use crate::potentials::{eval_potential, exact_norms, PotentialSpec};
use crate::quadrature::{pairwise_sum, QuadratureConfig};
use crate::rng::SeedStream;
use crate::subordinators::sample_standard;

/// Sampled path skeleton on `0 < s_1 < ... < s_k < t`, started at `endpoint`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeSkeleton {
    pub t: f64,
    pub times: Vec<f64>,
    pub positions: Vec<Vec<f64>>,
    pub endpoint: Vec<f64>,
    /// `p_{t - s_k}(Y_k - x) / p_t(0)`.
    pub importance_weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Mc,
    Duhamel,
    Spectral,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Mc => "mc",
            Method::Duhamel => "duhamel",
            Method::Spectral => "spectral",
        }
    }
}

/// A trace-difference value with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEstimate {
    pub value: f64,
    /// Statistical standard error; present for Monte Carlo only.
    pub std_error: Option<f64>,
    /// Deterministic error bar: discretization budget (spectral) or
    /// truncation bound of the dropped series terms (Duhamel).
    pub budget: Option<f64>,
    pub n_samples: usize,
    pub method: Method,
    pub skeleton_k: Option<usize>,
    pub t: f64,
    pub spec: String,
    pub potential: String,
}

/// Mean and standard error of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n: usize,
}

fn mean_and_error(values: &[f64]) -> McEstimate {
    let n = values.len();
    let mean = pairwise_sum(values) / n as f64;
    let dev: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = if n > 1 { pairwise_sum(&dev) / (n - 1) as f64 } else { 0.0 };
    McEstimate {
        value: mean,
        std_error: (var / n as f64).sqrt(),
        n,
    }
}

/// Default number of interior skeleton times: `max(8, ceil(t / 0.01))`, at most 64.
pub fn default_skeleton_k(t: f64) -> usize {
    ((t / 0.01).ceil() as usize).clamp(8, 64)
}

/// Exact sampler of process increments over a time step.
#[derive(Debug, Clone, Copy)]
pub struct IncrementSampler {
    variant: Variant,
    d: usize,
}

impl IncrementSampler {
    pub fn new(spec: &KernelSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            variant: spec.variant,
            d: spec.dimension,
        })
    }

    /// Variance parameter `S` of the conditionally Gaussian increment `sqrt(2 S) Z`.
    fn mixing_level<R: Rng + ?Sized>(&self, dt: f64, rng: &mut R) -> Result<f64> {
        Ok(match self.variant {
            Variant::Stable { alpha } => {
                if alpha == 2.0 {
                    dt
                } else {
                    dt.powf(2.0 / alpha) * sample_standard(alpha / 2.0, rng)
                }
            }
            Variant::StableSum {
                alpha,
                beta,
                weight_a,
            } => {
                let sa = dt.powf(2.0 / alpha) * sample_standard(alpha / 2.0, rng);
                if weight_a == 0.0 {
                    sa
                } else {
                    sa + weight_a * weight_a * dt.powf(2.0 / beta) * sample_standard(beta / 2.0, rng)
                }
            }
            Variant::Relativistic { alpha, mass_m } => {
                // Tempered law e^{m dt} e^{-mu s} eta_dt(s): rejection from the
                // untempered law, acceptance probability e^{-m dt} on average.
                if mass_m * dt > 30.0 {
                    return Err(NhtError::Unsupported(format!(
                        "relativistic increment with m dt = {} (rejection rate too low)",
                        mass_m * dt
                    )));
                }
                let mu = mass_m.powf(2.0 / alpha);
                let scale = dt.powf(2.0 / alpha);
                loop {
                    let s = scale * sample_standard(alpha / 2.0, rng);
                    if rng.random::<f64>() < (-mu * s).exp() {
                        break s;
                    }
                }
            }
        })
    }

    /// Adds an increment over `dt` to `pos`.
    pub fn step<R: Rng + ?Sized>(&self, dt: f64, pos: &mut [f64], rng: &mut R) -> Result<()> {
        let s = self.mixing_level(dt, rng)?;
        let scale = (2.0 * s).sqrt();
        for p in pos.iter_mut().take(self.d) {
            *p += scale * rng.sample::<f64, _>(StandardNormal);
        }
        Ok(())
    }
}

fn norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn check_common(spec: &KernelSpec, t: f64, k: usize) -> Result<()> {
    spec.validate()?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(invalid(format!("time must be positive, got {t}")));
    }
    if k == 0 {
        return Err(invalid("skeleton needs k >= 1 interior times"));
    }
    Ok(())
}

/// A free path from `x` on `s_j = j t / (k + 1)`, `j = 1..k`, with its bridge weight.
pub fn sample_free_skeleton(
    spec: &KernelSpec,
    x: &[f64],
    t: f64,
    k: usize,
    rng: &mut ChaCha8Rng,
    cfg: &QuadratureConfig,
) -> Result<BridgeSkeleton> {
    check_common(spec, t, k)?;
    if x.len() != spec.dimension {
        return Err(invalid(format!("start point has {} coordinates, expected {}", x.len(), spec.dimension)));
    }
    let sampler = IncrementSampler::new(spec)?;
    let h = t / (k + 1) as f64;
    let mut pos = x.to_vec();
    let mut times = Vec::with_capacity(k);
    let mut positions = Vec::with_capacity(k);
    for j in 1..=k {
        sampler.step(h, &mut pos, rng)?;
        times.push(j as f64 * h);
        positions.push(pos.clone());
    }
    let p0 = fixed_time_kernel(spec, t, cfg)?.at_zero()?;
    let last = positions.last().expect("k >= 1");
    let weight = fixed_time_kernel(spec, t - times[k - 1], cfg)?.eval(norm(last, x))? / p0;
    Ok(BridgeSkeleton {
        t,
        times,
        positions,
        endpoint: x.to_vec(),
        importance_weight: weight,
    })
}

/// One draw of `weight * (exp(-R) - 1)`, `R` the left Riemann sum of `V` along
/// a free skeleton from `x`.
#[allow(clippy::too_many_arguments)]
fn bridge_sample(
    v: &PotentialSpec,
    x: &[f64],
    t: f64,
    k: usize,
    p0: f64,
    sampler: &IncrementSampler,
    last_step: &FixedTimeKernel,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let h = t / (k + 1) as f64;
    let mut pos = x.to_vec();
    let mut sum = eval_potential(v, x);
    for _ in 1..=k {
        sampler.step(h, &mut pos, rng)?;
        sum += eval_potential(v, &pos);
    }
    let w = last_step.eval(norm(&pos, x))? / p0;
    Ok(w * (-h * sum).exp_m1())
}

/// `E^t_{x,x}[exp(-int_0^t V(X_s) ds) - 1]` with the left-endpoint Riemann rule on the skeleton.
#[allow(clippy::too_many_arguments)]
pub fn bridge_expectation(
    spec: &KernelSpec,
    v: &PotentialSpec,
    x: &[f64],
    t: f64,
    k: usize,
    n: usize,
    stream: &SeedStream,
    cfg: &QuadratureConfig,
) -> Result<McEstimate> {
    check_common(spec, t, k)?;
    if n < 100 {
        return Err(invalid(format!("bridge expectation needs n >= 100 samples, got {n}")));
    }
    if v.dimension != spec.dimension || x.len() != spec.dimension {
        return Err(invalid("kernel, potential and point dimensions differ"));
    }
    let p0 = kernel_at_zero(spec, t, cfg)?;
    let sampler = IncrementSampler::new(spec)?;
    let last_step = fixed_time_kernel(spec, t / (k + 1) as f64, cfg)?;
    let values: Vec<f64> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream.rng(i);
            bridge_sample(v, x, t, k, p0, &sampler, &last_step, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(mean_and_error(&values))
}

/// Gaussian proposal for the outer `x` integral: centred on the `|V|` mass,
/// standard deviation twice the per-coordinate spread of `|V|`.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub mean: Vec<f64>,
    pub std: f64,
}

impl Proposal {
    pub fn for_potential(v: &PotentialSpec) -> Self {
        let (mean, second) = v.spread();
        Self {
            mean,
            std: 2.0 * second.sqrt().max(1e-12),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, f64) {
        let d = self.mean.len();
        let mut x = Vec::with_capacity(d);
        let mut r2 = 0.0;
        for m in &self.mean {
            let z: f64 = rng.sample(StandardNormal);
            r2 += z * z;
            x.push(m + self.std * z);
        }
        let log_q = -0.5 * r2 - d as f64 * (self.std * (2.0 * std::f64::consts::PI).sqrt()).ln();
        (x, log_q)
    }
}

/// Trace estimate together with the first two series terms estimated on the same paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMcDetail {
    pub estimate: TraceEstimate,
    /// `-p_t(0) int E_{x,x}[R] dx`.
    pub series1: McEstimate,
    /// `p_t(0)/2 int E_{x,x}[R^2] dx`.
    pub series2: McEstimate,
    pub effective_sample_size: f64,
}

/// `Tr(e^{-tH} - e^{-tH_0}) = p_t(0) int E^t_{x,x}[e^{-int V} - 1] dx` by Monte Carlo.
/// Each of the `n_x` outer points carries `n_paths` independent paths.
#[allow(clippy::too_many_arguments)]
pub fn trace_mc(
    spec: &KernelSpec,
    v: &PotentialSpec,
    t: f64,
    k: usize,
    n_paths: usize,
    n_x: usize,
    stream: &SeedStream,
    cfg: &QuadratureConfig,
) -> Result<TraceEstimate> {
    Ok(trace_mc_detailed(spec, v, t, k, n_paths, n_x, stream, cfg)?.estimate)
}

#[allow(clippy::too_many_arguments)]
pub fn trace_mc_detailed(
    spec: &KernelSpec,
    v: &PotentialSpec,
    t: f64,
    k: usize,
    n_paths: usize,
    n_x: usize,
    stream: &SeedStream,
    cfg: &QuadratureConfig,
) -> Result<TraceMcDetail> {
    check_common(spec, t, k)?;
    if v.dimension != spec.dimension {
        return Err(invalid("kernel and potential dimensions differ"));
    }
    if n_paths == 0 || n_x < 2 {
        return Err(invalid("trace estimate needs n_paths >= 1 and n_x >= 2"));
    }
    let mk = |value: f64, se: f64| TraceEstimate {
        value,
        std_error: Some(se),
        budget: None,
        n_samples: n_paths * n_x,
        method: Method::Mc,
        skeleton_k: Some(k),
        t,
        spec: spec.label(),
        potential: serde_json::to_string(v).expect("potential serializes"),
    };
    let zero = McEstimate {
        value: 0.0,
        std_error: 0.0,
        n: n_x,
    };
    if v.is_zero() {
        return Ok(TraceMcDetail {
            estimate: mk(0.0, 0.0),
            series1: zero,
            series2: zero,
            effective_sample_size: n_x as f64,
        });
    }
    let p0 = kernel_at_zero(spec, t, cfg)?;
    let sampler = IncrementSampler::new(spec)?;
    let proposal = Proposal::for_potential(v);
    let last_step = fixed_time_kernel(spec, t / (k + 1) as f64, cfg)?;
    let outer = stream.substream(1);
    let inner = stream.substream(2);
    let rows: Vec<[f64; 3]> = (0..n_x as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = outer.rng(i);
            let (x, log_q) = proposal.sample(&mut rng);
            let scale = p0 * (-log_q).exp();
            let mut acc = [0.0; 3];
            for j in 0..n_paths as u64 {
                let mut prng = inner.rng(i * n_paths as u64 + j);
                let h = t / (k + 1) as f64;
                let mut pos = x.clone();
                let mut sum = eval_potential(v, &x);
                for _ in 1..=k {
                    sampler.step(h, &mut pos, &mut prng)?;
                    sum += eval_potential(v, &pos);
                }
                let r = h * sum;
                let w = last_step.eval(norm(&pos, &x))? / p0;
                acc[0] += w * (-r).exp_m1();
                acc[1] += -w * r;
                acc[2] += 0.5 * w * r * r;
            }
            let m = n_paths as f64;
            Ok([scale * acc[0] / m, scale * acc[1] / m, scale * acc[2] / m])
        })
        .collect::<Result<Vec<_>>>()?;
    let col = |c: usize| -> Vec<f64> { rows.iter().map(|r| r[c]).collect() };
    let full = mean_and_error(&col(0));
    let abs: Vec<f64> = rows.iter().map(|r| r[0].abs()).collect();
    let sq: Vec<f64> = abs.iter().map(|a| a * a).collect();
    let s1 = pairwise_sum(&abs);
    let s2 = pairwise_sum(&sq);
    let ess = if s2 > 0.0 { s1 * s1 / s2 } else { 0.0 };
    if s1 == 0.0 {
        return Err(NhtError::DegenerateEstimate(format!(
            "all {n_x} trace samples vanished at t = {t}"
        )));
    }
    if ess < 0.01 * n_x as f64 {
        return Err(NhtError::DegenerateEstimate(format!(
            "effective sample size {ess:.1} below 1% of {n_x}: proposal does not cover the integrand"
        )));
    }
    Ok(TraceMcDetail {
        estimate: mk(full.value, full.std_error),
        series1: mean_and_error(&col(1)),
        series2: mean_and_error(&col(2)),
        effective_sample_size: ess,
    })
}

/// Both sides of `int E^t_{x,x}[int_0^t |V(X_s)| ds] dx = t ||V||_1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OccupationCheck {
    pub lhs_estimate: f64,
    pub lhs_std_error: f64,
    pub rhs_exact: f64,
}

/// Draws the single-time bridge marginal at a uniform time `s`. By time
/// reversal the shorter of `s` and `t - s` is sampled freely, so the weight
/// `p_{t - sigma}(Y) / p_t(0)` never exceeds `2^{d/alpha}`.
fn single_time_draw(
    spec: &KernelSpec,
    sampler: &IncrementSampler,
    t: f64,
    p0: f64,
    rng: &mut ChaCha8Rng,
    cfg: &QuadratureConfig,
) -> Result<(Vec<f64>, f64)> {
    let s = t * rng.random::<f64>();
    let sigma = s.min(t - s).max(1e-300);
    let mut y = vec![0.0; spec.dimension];
    sampler.step(sigma, &mut y, rng)?;
    let r = y.iter().map(|c| c * c).sum::<f64>().sqrt();
    let w = eval_kernel(spec, t - sigma, r, cfg)? / p0;
    Ok((y, w))
}

/// Single-time skeletons (`k = 1`, `s_1` uniform on `(0, t)`). The outer
/// integral is taken over the position `y` of the bridge at time `s_1`,
/// drawn from the proposal; the start point is `x = y - X_sigma`.
pub fn occupation_identity_check(
    spec: &KernelSpec,
    v: &PotentialSpec,
    t: f64,
    n: usize,
    stream: &SeedStream,
    cfg: &QuadratureConfig,
) -> Result<OccupationCheck> {
    check_common(spec, t, 1)?;
    if v.dimension != spec.dimension {
        return Err(invalid("kernel and potential dimensions differ"));
    }
    let rhs = t * exact_norms(v)?.l1;
    if v.is_zero() {
        return Ok(OccupationCheck {
            lhs_estimate: 0.0,
            lhs_std_error: 0.0,
            rhs_exact: rhs,
        });
    }
    if n < 2 {
        return Err(invalid("occupation check needs n >= 2"));
    }
    let p0 = kernel_at_zero(spec, t, cfg)?;
    let sampler = IncrementSampler::new(spec)?;
    let proposal = Proposal::for_potential(v);
    let values: Vec<f64> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream.rng(i);
            let (y, log_q) = proposal.sample(&mut rng);
            let (_, w) = single_time_draw(spec, &sampler, t, p0, &mut rng, cfg)?;
            Ok(t * eval_potential(v, &y).abs() * w * (-log_q).exp())
        })
        .collect::<Result<Vec<_>>>()?;
    let est = mean_and_error(&values);
    Ok(OccupationCheck {
        lhs_estimate: est.value,
        lhs_std_error: est.std_error,
        rhs_exact: rhs,
    })
}

/// `E^t_{0,0} int_0^t |X_s|^gamma ds` from single-time skeletons.
pub fn bridge_moment_estimate(
    spec: &KernelSpec,
    t: f64,
    gamma: f64,
    n: usize,
    stream: &SeedStream,
    cfg: &QuadratureConfig,
) -> Result<McEstimate> {
    check_common(spec, t, 1)?;
    let alpha = spec.alpha();
    if !(gamma >= 0.0) {
        return Err(invalid(format!("moment order must be >= 0, got {gamma}")));
    }
    let bound = match spec.variant {
        Variant::Stable { alpha } if alpha == 2.0 => f64::INFINITY,
        _ => alpha,
    };
    if gamma >= bound {
        return Err(NhtError::HypothesisViolation(format!(
            "fractional moment of order {gamma} is infinite for index {alpha}"
        )));
    }
    if gamma == 0.0 {
        return Ok(McEstimate {
            value: t,
            std_error: 0.0,
            n,
        });
    }
    if n < 2 {
        return Err(invalid("moment estimate needs n >= 2"));
    }
    let p0 = kernel_at_zero(spec, t, cfg)?;
    let sampler = IncrementSampler::new(spec)?;
    let values: Vec<f64> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream.rng(i);
            let (y, w) = single_time_draw(spec, &sampler, t, p0, &mut rng, cfg)?;
            let r = y.iter().map(|c| c * c).sum::<f64>().sqrt();
            Ok(t * r.powf(gamma) * w)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(mean_and_error(&values))
}

/// Brownian bridge `B_s - (s/t) B_t` at the given times (coordinate variance `2s`).
pub fn brownian_bridge_path<R: Rng + ?Sized>(t: f64, times: &[f64], d: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut b = vec![0.0; d];
    let mut prev = 0.0;
    let mut path = Vec::with_capacity(times.len());
    for &s in times {
        let sd = (2.0 * (s - prev)).sqrt();
        for c in b.iter_mut() {
            *c += sd * rng.sample::<f64, _>(StandardNormal);
        }
        path.push(b.clone());
        prev = s;
    }
    let sd = (2.0 * (t - prev).max(0.0)).sqrt();
    let mut bt = b.clone();
    for c in bt.iter_mut() {
        *c += sd * rng.sample::<f64, _>(StandardNormal);
    }
    for (p, &s) in path.iter_mut().zip(times) {
        for (c, e) in p.iter_mut().zip(&bt) {
            *c -= s / t * e;
        }
    }
    path
}

/// `E int_0^t |B_s - (s/t) B_t|^gamma ds` with `s` uniform, by direct simulation in `R^d`.
pub fn brownian_bridge_moment(t: f64, gamma: f64, d: usize, n: usize, stream: &SeedStream) -> Result<McEstimate> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(invalid(format!("time must be positive, got {t}")));
    }
    if !(gamma > 0.0) {
        return Err(invalid(format!("moment order must be positive, got {gamma}")));
    }
    if d == 0 || n < 2 {
        return Err(invalid("need d >= 1 and n >= 2"));
    }
    let values: Vec<f64> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream.rng(i);
            let s = t * rng.random::<f64>();
            let p = brownian_bridge_path(t, &[s], d, &mut rng);
            let r = p[0].iter().map(|c| c * c).sum::<f64>().sqrt();
            t * r.powf(gamma)
        })
        .collect();
    Ok(mean_and_error(&values))
}
