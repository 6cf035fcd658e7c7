//! Deterministic trace computations: the first two terms of the
//! Feynman–Kac series, truncation and theorem-shape bounds, and an
//! independent spectral oracle on a periodic grid.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bridge_mc::{Method, TraceEstimate};
use crate::error::{invalid, NhtError, Result};
use crate::levy_kernels::{char_exponent, kernel_at_zero, FixedTimeKernel, KernelSpec, Variant};
use crate::potentials::{eval_potential, exact_norms, holder_certificate, PotentialSpec, Shape};
use crate::quadrature::{self, pairwise_sum, CompositeRule, QuadratureConfig};
use crate::special::sphere_area;

/// The `k = 1` and `k = 2` terms of the trace series and a bound on the rest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesTerms {
    pub term1: f64,
    pub term2: f64,
    pub truncation_bound: f64,
}

fn check_time(t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(invalid(format!("time must be positive and finite, got {t}")));
    }
    Ok(())
}

fn check_dims(spec: &KernelSpec, v: &PotentialSpec) -> Result<()> {
    spec.validate()?;
    v.validate()?;
    if spec.dimension != v.dimension {
        return Err(invalid(format!(
            "kernel dimension {} differs from potential dimension {}",
            spec.dimension, v.dimension
        )));
    }
    Ok(())
}

/// `-t p_t(0) int V`.
pub fn duhamel_term1(spec: &KernelSpec, v: &PotentialSpec, t: f64, cfg: &QuadratureConfig) -> Result<f64> {
    check_dims(spec, v)?;
    check_time(t)?;
    if v.is_zero() {
        return Ok(0.0);
    }
    let p0 = kernel_at_zero(spec, t, cfg)?;
    Ok(-t * p0 * exact_norms(v)?.int_v)
}

/// `A(z) = int V(y) V(y + z) dy`.
pub fn autocorrelation(v: &PotentialSpec, z: &[f64]) -> Result<f64> {
    let leaves = v.leaves();
    let mut total = 0.0;
    for a in &leaves {
        for b in &leaves {
            total += cross_correlation(a, b, z, v.dimension)?;
        }
    }
    Ok(total)
}

fn cross_correlation(a: &Shape, b: &Shape, z: &[f64], d: usize) -> Result<f64> {
    match (a, b) {
        (
            Shape::GaussianWell {
                depth: c1,
                width: s1,
                center: m1,
            },
            Shape::GaussianWell {
                depth: c2,
                width: s2,
                center: m2,
            },
        ) => {
            let p = s1 * s1;
            let q = s2 * s2;
            let dist2: f64 = (0..d).map(|i| (m1[i] - m2[i] + z[i]).powi(2)).sum();
            Ok(c1 * c2 * (PI * p * q / (p + q)).powf(d as f64 / 2.0) * (-dist2 / (p + q)).exp())
        }
        _ if d == 1 => {
            let (lo, hi) = leaf_interval(a);
            let la = PotentialSpec {
                shape: a.clone(),
                dimension: 1,
            };
            let lb = PotentialSpec {
                shape: b.clone(),
                dimension: 1,
            };
            let (blo, bhi) = leaf_interval(b);
            let lo = lo.max(blo - z[0]);
            let hi = hi.min(bhi - z[0]);
            if lo >= hi {
                return Ok(0.0);
            }
            let f = |y: f64| eval_potential(&la, &[y]) * eval_potential(&lb, &[y + z[0]]);
            Ok(quadrature::integrate(f, lo, hi, 1e-15, 1e-11, 4000)?.value)
        }
        _ => Err(NhtError::Unsupported(
            "autocorrelation of compact bumps is implemented for d = 1 only".into(),
        )),
    }
}

fn leaf_interval(s: &Shape) -> (f64, f64) {
    match s {
        Shape::GaussianWell { width, center, .. } => (center[0] - 9.0 * width, center[0] + 9.0 * width),
        Shape::CompactBump { radius, center, .. } => (center[0] - radius, center[0] + radius),
        Shape::Sum(_) => (0.0, 0.0),
    }
}

/// Spherical average of `A` at radius `r` (`A` is even).
fn radial_autocorrelation(v: &PotentialSpec, r: f64, angles: &CompositeRule) -> Result<f64> {
    match v.dimension {
        1 => autocorrelation(v, &[r]),
        2 => {
            let mut acc = Vec::with_capacity(angles.len());
            for (&th, &w) in angles.nodes.iter().zip(&angles.weights) {
                acc.push(w * autocorrelation(v, &[r * th.cos(), r * th.sin()])?);
            }
            Ok(pairwise_sum(&acc) / PI)
        }
        d => Err(NhtError::Unsupported(format!("second series term needs d <= 2, got {d}"))),
    }
}

fn small_time_scale(spec: &KernelSpec, u: f64) -> (f64, f64) {
    let idx = match spec.variant {
        Variant::Stable { alpha } | Variant::Relativistic { alpha, .. } => vec![alpha],
        Variant::StableSum { alpha, beta, .. } => vec![alpha, beta],
    };
    let pw: Vec<f64> = idx.iter().map(|a| u.powf(1.0 / a)).collect();
    (pw.iter().copied().fold(f64::INFINITY, f64::min), pw.iter().copied().fold(0.0, f64::max))
}

/// The `k = 2` term `int_0^t (t - u) J(u) du`,
/// `J(u) = int p_{t-u}(z) p_u(z) A(z) dz`, split as
/// `t^2/2 p_t(0) int V^2 + t int_0^{t/2} K(u) du` with `K` the same integral
/// against `A(z) - A(0)`; `K(u) = K(t - u)`.
pub fn duhamel_term2(spec: &KernelSpec, v: &PotentialSpec, t: f64, cfg: &QuadratureConfig) -> Result<f64> {
    check_dims(spec, v)?;
    check_time(t)?;
    if v.dimension > 2 {
        return Err(NhtError::Unsupported(format!(
            "second series term needs d <= 2, got {}",
            v.dimension
        )));
    }
    if v.is_zero() {
        return Ok(0.0);
    }
    let d = v.dimension;
    let a0 = exact_norms(v)?.int_v2;
    let p0 = kernel_at_zero(spec, t, cfg)?;
    let diagonal = 0.5 * t * t * p0 * a0;

    let angles = CompositeRule::uniform(0.0, PI, PI / 4.0, 16);
    let width = v.length_scale();
    let offset = v
        .leaves()
        .iter()
        .map(|l| match l {
            Shape::GaussianWell { center, .. } | Shape::CompactBump { center, .. } => {
                center.iter().map(|c| c * c).sum::<f64>().sqrt()
            }
            Shape::Sum(_) => 0.0,
        })
        .fold(0.0, f64::max);
    let (_, t_scale) = small_time_scale(spec, t);

    let mut u_breaks: Vec<f64> = (0..=24).map(|j| 0.5 * t * 0.5f64.powi(j)).collect();
    u_breaks.reverse();
    let u_rule = CompositeRule::gauss_legendre(&u_breaks, 8);

    let k_values: Vec<f64> = u_rule
        .nodes
        .par_iter()
        .map(|&u| -> Result<f64> {
            let ku = FixedTimeKernel::new(spec, u, cfg)?;
            let kt = FixedTimeKernel::new(spec, t - u, cfg)?;
            let (small, _) = small_time_scale(spec, u);
            let r_lo = 1e-3 * small.min(width);
            let r_hi = (1e3 * t_scale).max(1e3 * width + 2.0 * offset);
            let mut breaks = vec![0.0, r_lo];
            while *breaks.last().expect("nonempty") < r_hi {
                let next = 2.0 * breaks.last().expect("nonempty");
                breaks.push(next);
            }
            let rule = CompositeRule::gauss_legendre(&breaks, 8);
            let surface = sphere_area(d);
            let mut terms = Vec::with_capacity(rule.len());
            for (&r, &w) in rule.nodes.iter().zip(&rule.weights) {
                let a = radial_autocorrelation(v, r, &angles)? - a0;
                if a == 0.0 {
                    continue;
                }
                terms.push(w * surface * r.powi(d as i32 - 1) * ku.eval(r)? * kt.eval(r)? * a);
            }
            Ok(pairwise_sum(&terms))
        })
        .collect::<Result<Vec<_>>>()?;
    let weighted: Vec<f64> = k_values.iter().zip(&u_rule.weights).map(|(k, w)| k * w).collect();
    Ok(diagonal + t * pairwise_sum(&weighted))
}

/// `p_t(0) t^{N+1} ||V||_inf^N ||V||_1 e^{t ||V||_inf} / (N+1)!`, a bound on
/// the series terms of order above `N`.
pub fn series_remainder_bound(
    spec: &KernelSpec,
    v: &PotentialSpec,
    t: f64,
    n: usize,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    check_dims(spec, v)?;
    check_time(t)?;
    if n < 1 {
        return Err(invalid("truncation order must be >= 1"));
    }
    if v.is_zero() {
        return Ok(0.0);
    }
    let norms = exact_norms(v)?;
    let p0 = kernel_at_zero(spec, t, cfg)?;
    let mut factorial = 1.0;
    for i in 2..=(n + 1) {
        factorial *= i as f64;
    }
    let np = n as i32;
    Ok(p0 * t.powi(np + 1) * norms.sup.powi(np) * norms.l1 * (t * norms.sup).exp() / factorial)
}

/// Both series terms with the `N = 2` truncation bound.
pub fn series_terms(spec: &KernelSpec, v: &PotentialSpec, t: f64, cfg: &QuadratureConfig) -> Result<SeriesTerms> {
    Ok(SeriesTerms {
        term1: duhamel_term1(spec, v, t, cfg)?,
        term2: duhamel_term2(spec, v, t, cfg)?,
        truncation_bound: series_remainder_bound(spec, v, t, 2, cfg)?,
    })
}

/// `term1 + term2` as a trace estimate whose budget is the truncation bound.
pub fn duhamel_trace(spec: &KernelSpec, v: &PotentialSpec, t: f64, cfg: &QuadratureConfig) -> Result<TraceEstimate> {
    let s = series_terms(spec, v, t, cfg)?;
    Ok(TraceEstimate {
        value: s.term1 + s.term2,
        std_error: None,
        budget: Some(s.truncation_bound),
        n_samples: 0,
        method: Method::Duhamel,
        skeleton_k: None,
        t,
        spec: spec.label(),
        potential: serde_json::to_string(v).expect("potential serializes"),
    })
}

/// `p_t(0) t ||V||_1 e^{t ||V||_inf}`, valid for every potential and every `t`.
pub fn general_bound(spec: &KernelSpec, v: &PotentialSpec, t: f64, cfg: &QuadratureConfig) -> Result<f64> {
    check_dims(spec, v)?;
    check_time(t)?;
    let n = exact_norms(v)?;
    Ok(kernel_at_zero(spec, t, cfg)? * t * n.l1 * (t * n.sup).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sandwich {
    pub lower: f64,
    pub upper: f64,
}

/// Two-sided bound on the trace difference for nonpositive `V`.
pub fn theorem1_sandwich(spec: &KernelSpec, v: &PotentialSpec, t: f64, cfg: &QuadratureConfig) -> Result<Sandwich> {
    check_dims(spec, v)?;
    check_time(t)?;
    if !v.is_nonpositive() {
        return Err(NhtError::HypothesisViolation(
            "the sandwich bound needs a nonpositive potential".into(),
        ));
    }
    let n = exact_norms(v)?;
    let p0 = kernel_at_zero(spec, t, cfg)?;
    let lower = p0 * t * n.l1;
    Ok(Sandwich {
        lower,
        upper: p0 * (t * n.l1 + 0.5 * t * t * n.l1 * n.sup * (t * n.sup).exp()),
    })
}

/// Which remainder estimate to evaluate: the stable one, the sum of two
/// stables, or the relativistic one (the latter on `t <= 1` only).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TheoremVariant {
    Stable,
    Sum,
    Relativistic,
}

impl TheoremVariant {
    pub fn from_number(n: u32) -> Result<Self> {
        match n {
            2 => Ok(Self::Stable),
            3 => Ok(Self::Sum),
            4 => Ok(Self::Relativistic),
            _ => Err(invalid(format!("theorem variant must be 2, 3 or 4, got {n}"))),
        }
    }
}

fn check_holder_order(index: f64, gamma: f64, name: &str) -> Result<()> {
    if index <= 1.0 {
        if !(gamma > 0.0 && gamma < index) {
            return Err(NhtError::HypothesisViolation(format!(
                "need 0 < gamma < {name} = {index} when {name} <= 1, got gamma = {gamma}"
            )));
        }
    } else if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(NhtError::HypothesisViolation(format!(
            "need 0 < gamma <= 1 when {name} = {index} > 1, got gamma = {gamma}"
        )));
    }
    Ok(())
}

/// `||V||_1 p_t(0) (||V||_inf^2 e^{t ||V||_inf} t^3 + t^{gamma/alpha + 2} [+ t^{gamma/beta + 2}])`
/// with the unknown constant set to one. Only its dependence on `t` is meaningful.
pub fn theorem_bound_rhs(
    spec: &KernelSpec,
    v: &PotentialSpec,
    t: f64,
    gamma: f64,
    holder_m: f64,
    variant: TheoremVariant,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    check_dims(spec, v)?;
    check_time(t)?;
    let extra = match (variant, spec.variant) {
        (TheoremVariant::Stable, Variant::Stable { alpha }) => {
            check_holder_order(alpha, gamma, "alpha")?;
            None
        }
        (TheoremVariant::Sum, Variant::StableSum { beta, .. }) => {
            check_holder_order(beta, gamma, "beta")?;
            Some(beta)
        }
        (TheoremVariant::Relativistic, Variant::Relativistic { alpha, .. }) => {
            check_holder_order(alpha, gamma, "alpha")?;
            if t > 1.0 {
                return Err(NhtError::HypothesisViolation(format!(
                    "the relativistic estimate holds for t <= 1, got t = {t}"
                )));
            }
            None
        }
        _ => {
            return Err(NhtError::HypothesisViolation(format!(
                "theorem variant {variant:?} does not apply to {}",
                spec.label()
            )))
        }
    };
    if !(holder_m > 0.0 && holder_m.is_finite()) {
        return Err(invalid(format!("Holder constant must be positive, got {holder_m}")));
    }
    let certified = holder_certificate(v, gamma)?;
    if holder_m < certified {
        return Err(NhtError::HypothesisViolation(format!(
            "Holder constant {holder_m} is below the certified constant {certified} for gamma = {gamma}"
        )));
    }
    let n = exact_norms(v)?;
    let alpha = spec.alpha();
    let p0 = kernel_at_zero(spec, t, cfg)?;
    let mut shape = n.sup * n.sup * (t * n.sup).exp() * t.powi(3) + t.powf(gamma / alpha + 2.0);
    if let Some(beta) = extra {
        shape += t.powf(gamma / beta + 2.0);
    }
    Ok(n.l1 * p0 * shape)
}

/// Periodic collocation grid on `[-L, L)` in one dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralGrid {
    pub half_length: f64,
    pub modes: usize,
    pub dimension: usize,
}

impl SpectralGrid {
    pub fn new(half_length: f64, modes: usize) -> Result<Self> {
        let g = Self {
            half_length,
            modes,
            dimension: 1,
        };
        g.validate()?;
        Ok(g)
    }

    /// `L = 20` length scales beyond the farthest centre, `N = 256`.
    pub fn for_potential(v: &PotentialSpec) -> Result<Self> {
        Self::new(20.0 * v.length_scale().max(0.05) + max_center(v), 256)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension != 1 {
            return Err(NhtError::Unsupported("the spectral oracle is one-dimensional".into()));
        }
        if !(self.half_length > 0.0 && self.half_length.is_finite()) {
            return Err(invalid(format!("box half-length must be positive, got {}", self.half_length)));
        }
        if !self.modes.is_power_of_two() || !(32..=512).contains(&self.modes) {
            return Err(invalid(format!("modes must be a power of two in [32, 512], got {}", self.modes)));
        }
        Ok(())
    }

    fn check_potential(&self, v: &PotentialSpec) -> Result<()> {
        let need = 5.0 * v.length_scale() + max_center(v);
        if self.half_length < need {
            return Err(invalid(format!(
                "box half-length {} is below five potential widths plus the largest centre offset ({need})",
                self.half_length
            )));
        }
        Ok(())
    }
}

fn max_center(v: &PotentialSpec) -> f64 {
    v.leaves()
        .iter()
        .map(|l| match l {
            Shape::GaussianWell { center, .. } | Shape::CompactBump { center, .. } => center[0].abs(),
            Shape::Sum(_) => 0.0,
        })
        .fold(0.0, f64::max)
}

/// Discretized operator on a periodic grid: multiplier eigenvalues of `H_0`
/// and the spectrum of `H_0 + diag(V)`.
#[derive(Debug, Clone)]
pub struct SpectralModel {
    pub half_length: f64,
    pub free_spectrum: Vec<f64>,
    pub spectrum: Vec<f64>,
}

impl SpectralModel {
    /// `potential_values` are `V` at the nodes `x_j = -L + 2 L j / N`.
    pub fn from_values(spec: &KernelSpec, half_length: f64, potential_values: &[f64]) -> Result<Self> {
        let n = potential_values.len();
        if n < 2 || n % 2 != 0 {
            return Err(invalid(format!("need an even number of nodes, got {n}")));
        }
        if spec.dimension != 1 {
            return Err(NhtError::Unsupported("the spectral oracle is one-dimensional".into()));
        }
        let half = (n / 2) as i64;
        let free: Vec<f64> = (-half + 1..=half)
            .map(|k| char_exponent(spec, PI * k.unsigned_abs() as f64 / half_length))
            .collect::<Result<_>>()?;
        // circulant first row c_m = (1/N) sum_k psi_k cos(2 pi k m / N), mirrored exactly
        let mut row = vec![0.0; n];
        for m in 0..=n / 2 {
            let terms: Vec<f64> = (-half + 1..=half)
                .zip(&free)
                .map(|(k, psi)| psi * (2.0 * PI * (k * m as i64) as f64 / n as f64).cos())
                .collect();
            row[m] = pairwise_sum(&terms) / n as f64;
            row[(n - m) % n] = row[m];
        }
        let mut h = DMatrix::from_fn(n, n, |i, j| row[(i + n - j) % n]);
        for (i, v) in potential_values.iter().enumerate() {
            h[(i, i)] += v;
        }
        let asym = (0..n)
            .flat_map(|i| (0..i).map(move |j| (i, j)))
            .map(|(i, j)| (h[(i, j)] - h[(j, i)]).abs())
            .fold(0.0, f64::max);
        if asym > 1e-10 {
            return Err(NhtError::Internal(format!("assembled operator is not symmetric ({asym:e})")));
        }
        let spectrum = h.symmetric_eigenvalues().iter().copied().collect();
        Ok(Self {
            half_length,
            free_spectrum: free,
            spectrum,
        })
    }

    pub fn from_potential(spec: &KernelSpec, v: &PotentialSpec, half_length: f64, modes: usize) -> Result<Self> {
        let values: Vec<f64> = (0..modes)
            .map(|j| eval_potential(v, &[-half_length + 2.0 * half_length * j as f64 / modes as f64]))
            .collect();
        Self::from_values(spec, half_length, &values)
    }

    pub fn free_trace(&self, t: f64) -> f64 {
        let terms: Vec<f64> = self.free_spectrum.iter().map(|l| (-t * l).exp()).collect();
        pairwise_sum(&terms)
    }

    /// `tr e^{-tH} - tr e^{-tH_0}` of the discrete model.
    pub fn raw_difference(&self, t: f64) -> f64 {
        let mut terms: Vec<f64> = self.spectrum.iter().map(|l| (-t * l).exp()).collect();
        terms.extend(self.free_spectrum.iter().map(|l| -(-t * l).exp()));
        pairwise_sum(&terms)
    }

    /// The raw difference rescaled so that the model's free kernel on the
    /// diagonal, `tr e^{-tH_0} / 2L`, is replaced by the exact `p_t(0)`.
    pub fn normalized_difference(&self, t: f64, p0: f64) -> f64 {
        let p_disc = self.free_trace(t) / (2.0 * self.half_length);
        self.raw_difference(t) * p0 / p_disc
    }

    fn rounding_floor(&self, t: f64, p0: f64) -> f64 {
        let top = self.free_spectrum.iter().copied().fold(0.0, f64::max);
        let p_disc = self.free_trace(t) / (2.0 * self.half_length);
        1e-13 * self.spectrum.len() as f64 * (1.0 + t * top) * p0 / p_disc
    }
}

/// Spectral traces at several times from one set of eigendecompositions.
/// The budget is the larger change under `(N, L) -> (2N, 2L)` and
/// `(N, L) -> (2N, L)`, plus a rounding floor.
pub fn spectral_oracle_traces(
    spec: &KernelSpec,
    v: &PotentialSpec,
    times: &[f64],
    grid: &SpectralGrid,
    cfg: &QuadratureConfig,
) -> Result<Vec<TraceEstimate>> {
    check_dims(spec, v)?;
    grid.validate()?;
    grid.check_potential(v)?;
    for &t in times {
        check_time(t)?;
    }
    let label = spec.label();
    let pot = serde_json::to_string(v).expect("potential serializes");
    let mk = |t: f64, value: f64, budget: f64| TraceEstimate {
        value,
        std_error: None,
        budget: Some(budget),
        n_samples: grid.modes,
        method: Method::Spectral,
        skeleton_k: None,
        t,
        spec: label.clone(),
        potential: pot.clone(),
    };
    if v.is_zero() {
        return Ok(times.iter().map(|&t| mk(t, 0.0, 0.0)).collect());
    }
    let (l, n) = (grid.half_length, grid.modes);
    let configs = [(l, n), (2.0 * l, 2 * n), (l, 2 * n)];
    let models: Vec<SpectralModel> = configs
        .par_iter()
        .map(|&(hl, m)| SpectralModel::from_potential(spec, v, hl, m))
        .collect::<Result<_>>()?;
    times
        .iter()
        .map(|&t| {
            let p0 = kernel_at_zero(spec, t, cfg)?;
            let base = models[0].normalized_difference(t, p0);
            let d1 = (models[1].normalized_difference(t, p0) - base).abs();
            let d2 = (models[2].normalized_difference(t, p0) - base).abs();
            Ok(mk(t, base, d1.max(d2) + models[0].rounding_floor(t, p0)))
        })
        .collect()
}

pub fn spectral_oracle_trace(
    spec: &KernelSpec,
    v: &PotentialSpec,
    t: f64,
    grid: &SpectralGrid,
    cfg: &QuadratureConfig,
) -> Result<TraceEstimate> {
    Ok(spectral_oracle_traces(spec, v, &[t], grid, cfg)?.remove(0))
}
