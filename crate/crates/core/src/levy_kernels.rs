//! Transition densities of the symmetric stable, sum-of-stables and
//! relativistic stable processes: characteristic exponents, evaluation by
//! subordination and by radial Fourier inversion, closed forms, envelopes and
//! the fractional Laplacian of test functions.
//!
//! Densities are radial; every evaluator takes `|x|` as `radius`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, NhtError, Result};
use crate::quadrature::{self, QuadratureConfig};
use crate::special::{gamma, ln_gamma, radial_fourier_kernel, sphere_area};
use crate::subordinators::stable_law_table;

/// Operator family and its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Variant {
    Stable { alpha: f64 },
    StableSum { alpha: f64, beta: f64, weight_a: f64 },
    Relativistic { alpha: f64, mass_m: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelSpecJson", into = "KernelSpecJson")]
pub struct KernelSpec {
    pub variant: Variant,
    pub dimension: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelSpecJson {
    variant: String,
    alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    m: Option<f64>,
    d: usize,
}

impl TryFrom<KernelSpecJson> for KernelSpec {
    type Error = NhtError;

    fn try_from(j: KernelSpecJson) -> Result<Self> {
        let reject = |name: &str, present: bool| {
            if present {
                Err(invalid(format!("field `{name}` does not apply to variant `{}`", j.variant)))
            } else {
                Ok(())
            }
        };
        let variant = match j.variant.as_str() {
            "stable" => {
                reject("beta", j.beta.is_some())?;
                reject("a", j.a.is_some())?;
                reject("m", j.m.is_some())?;
                Variant::Stable { alpha: j.alpha }
            }
            "sum" => {
                reject("m", j.m.is_some())?;
                Variant::StableSum {
                    alpha: j.alpha,
                    beta: j.beta.ok_or_else(|| invalid("variant `sum` needs `beta`"))?,
                    weight_a: j.a.ok_or_else(|| invalid("variant `sum` needs `a`"))?,
                }
            }
            "relativistic" => {
                reject("beta", j.beta.is_some())?;
                reject("a", j.a.is_some())?;
                Variant::Relativistic {
                    alpha: j.alpha,
                    mass_m: j.m.ok_or_else(|| invalid("variant `relativistic` needs `m`"))?,
                }
            }
            other => return Err(invalid(format!("unknown kernel variant `{other}`"))),
        };
        let spec = KernelSpec {
            variant,
            dimension: j.d,
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl From<KernelSpec> for KernelSpecJson {
    fn from(s: KernelSpec) -> Self {
        let (variant, alpha, beta, a, m) = match s.variant {
            Variant::Stable { alpha } => ("stable", alpha, None, None, None),
            Variant::StableSum {
                alpha,
                beta,
                weight_a,
            } => ("sum", alpha, Some(beta), Some(weight_a), None),
            Variant::Relativistic { alpha, mass_m } => ("relativistic", alpha, None, None, Some(mass_m)),
        };
        KernelSpecJson {
            variant: variant.into(),
            alpha,
            beta,
            a,
            m,
            d: s.dimension,
        }
    }
}

impl KernelSpec {
    pub fn stable(alpha: f64, d: usize) -> Result<Self> {
        let s = Self {
            variant: Variant::Stable { alpha },
            dimension: d,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn stable_sum(alpha: f64, beta: f64, weight_a: f64, d: usize) -> Result<Self> {
        let s = Self {
            variant: Variant::StableSum {
                alpha,
                beta,
                weight_a,
            },
            dimension: d,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn relativistic(alpha: f64, mass_m: f64, d: usize) -> Result<Self> {
        let s = Self {
            variant: Variant::Relativistic { alpha, mass_m },
            dimension: d,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(invalid("dimension must be at least 1"));
        }
        match self.variant {
            Variant::Stable { alpha } => {
                if !(alpha > 0.0 && alpha <= 2.0) {
                    return Err(invalid(format!("stable index must lie in (0, 2], got {alpha}")));
                }
            }
            Variant::StableSum {
                alpha,
                beta,
                weight_a,
            } => {
                if !(beta > 0.0 && beta < alpha && alpha < 2.0) {
                    return Err(invalid(format!(
                        "sum of stables needs 0 < beta < alpha < 2, got alpha={alpha}, beta={beta}"
                    )));
                }
                if !(weight_a >= 0.0 && weight_a.is_finite()) {
                    return Err(invalid(format!("weight a must be >= 0, got {weight_a}")));
                }
            }
            Variant::Relativistic { alpha, mass_m } => {
                if !(alpha > 0.0 && alpha < 2.0) {
                    return Err(invalid(format!(
                        "relativistic index must lie in (0, 2), got {alpha}"
                    )));
                }
                if !(mass_m > 0.0 && mass_m.is_finite()) {
                    return Err(invalid(format!("mass must be positive, got {mass_m}")));
                }
            }
        }
        Ok(())
    }

    /// The leading (largest) stability index.
    pub fn alpha(&self) -> f64 {
        match self.variant {
            Variant::Stable { alpha }
            | Variant::StableSum { alpha, .. }
            | Variant::Relativistic { alpha, .. } => alpha,
        }
    }

    /// A sum with `a = 0` is the plain stable kernel; every evaluator routes it there.
    fn reduced(&self) -> KernelSpec {
        match self.variant {
            Variant::StableSum {
                alpha, weight_a, ..
            } if weight_a == 0.0 => KernelSpec {
                variant: Variant::Stable { alpha },
                dimension: self.dimension,
            },
            _ => *self,
        }
    }

    /// Short, stable identifier used in cache keys and reports.
    pub fn label(&self) -> String {
        serde_json::to_string(self).expect("kernel spec serializes")
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(invalid(format!("time must be positive and finite, got {t}")));
    }
    Ok(())
}

fn check_radius(r: f64) -> Result<()> {
    if !(r >= 0.0 && r.is_finite()) {
        return Err(invalid(format!("radius must be finite and >= 0, got {r}")));
    }
    Ok(())
}

/// Characteristic exponent `psi(|xi|)`, so that `E e^{i xi.X_t} = e^{-t psi(|xi|)}`.
pub fn char_exponent(spec: &KernelSpec, xi_norm: f64) -> Result<f64> {
    spec.validate()?;
    if !(xi_norm >= 0.0 && xi_norm.is_finite()) {
        return Err(invalid(format!("frequency norm must be finite and >= 0, got {xi_norm}")));
    }
    Ok(psi(spec, xi_norm))
}

fn psi(spec: &KernelSpec, k: f64) -> f64 {
    match spec.variant {
        Variant::Stable { alpha } => k.powf(alpha),
        Variant::StableSum {
            alpha,
            beta,
            weight_a,
        } => k.powf(alpha) + weight_a.powf(beta) * k.powf(beta),
        Variant::Relativistic { alpha, mass_m } => {
            let mu = mass_m.powf(2.0 / alpha);
            // m ((1 + k^2/mu)^{alpha/2} - 1) without cancellation at small k.
            mass_m * (alpha / 2.0 * (k * k / mu).ln_1p()).exp_m1()
        }
    }
}

/// `p_1(0)` of the symmetric `alpha`-stable law in `R^d`.
pub fn stable_p1_zero(alpha: f64, d: usize) -> f64 {
    let df = d as f64;
    sphere_area(d) * gamma(df / alpha) / ((2.0 * PI).powf(df) * alpha)
}

/// `p_t(0)`. Closed form for the stable family, radial quadrature of the
/// inverse Fourier transform otherwise.
pub fn kernel_at_zero(spec: &KernelSpec, t: f64, cfg: &QuadratureConfig) -> Result<f64> {
    spec.validate()?;
    cfg.validate()?;
    check_time(t)?;
    match spec.reduced().variant {
        Variant::Stable { alpha } => {
            Ok(t.powf(-(spec.dimension as f64) / alpha) * stable_p1_zero(alpha, spec.dimension))
        }
        _ => kernel_at_zero_quadrature(spec, t, cfg),
    }
}

/// `(2 pi)^{-d} omega_d int_0^inf e^{-t psi(k)} k^{d-1} dk` by adaptive quadrature,
/// for any variant.
pub fn kernel_at_zero_quadrature(spec: &KernelSpec, t: f64, cfg: &QuadratureConfig) -> Result<f64> {
    spec.validate()?;
    cfg.validate()?;
    check_time(t)?;
    let d = spec.dimension;
    let df = d as f64;
    let k0 = level_frequency(spec, t, 1.0);
    let f = |k: f64| (-t * psi(spec, k)).exp() * k.powf(df - 1.0);
    let mut total = 0.0;
    let mut a = 0.0;
    let mut b = k0;
    loop {
        let piece = quadrature::integrate(f, a, b, 0.0, 0.1 * cfg.rel_tol, 400)?;
        total += piece.value;
        if t * psi(spec, b) > 745.0 + df * b.ln().max(0.0) {
            break;
        }
        if b > cfg.radial_cutoff {
            return Err(NhtError::QuadratureNonConvergence {
                what: format!("radial cutoff {} reached before e^(-t psi) decayed", cfg.radial_cutoff),
                estimate: total,
                error: f(b) * b,
            });
        }
        a = b;
        b *= 2.0;
    }
    Ok(sphere_area(d) * total / (2.0 * PI).powf(df))
}

/// Frequency `k` with `t psi(k) = level`.
fn level_frequency(spec: &KernelSpec, t: f64, level: f64) -> f64 {
    let g = |k: f64| t * psi(spec, k) - level;
    let mut lo = 1.0;
    let mut hi = 1.0;
    while g(lo) > 0.0 && lo > 1e-300 {
        lo *= 0.5;
    }
    while g(hi) < 0.0 && hi < 1e300 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// How `eval_kernel_with` should compute the density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalRoute {
    /// Closed form when one exists, subordination otherwise.
    Auto,
    Subordination,
    Fourier,
    /// Subordination and Fourier inversion, failing if they disagree.
    CrossChecked,
}

/// Cauchy density (`alpha = 1`) in `R^d`.
pub fn cauchy_density(t: f64, r: f64, d: usize) -> f64 {
    let h = (d as f64 + 1.0) / 2.0;
    gamma(h) / PI.powf(h) * t / (t * t + r * r).powf(h)
}

/// Gaussian density with coordinate variance `2t`.
pub fn gauss_density(t: f64, r: f64, d: usize) -> f64 {
    (4.0 * PI * t).powf(-(d as f64) / 2.0) * (-r * r / (4.0 * t)).exp()
}

/// `p_t(x)` at `|x| = radius`.
pub fn eval_kernel(spec: &KernelSpec, t: f64, radius: f64, cfg: &QuadratureConfig) -> Result<f64> {
    eval_kernel_with(spec, t, radius, cfg, EvalRoute::Auto)
}

pub fn eval_kernel_with(
    spec: &KernelSpec,
    t: f64,
    radius: f64,
    cfg: &QuadratureConfig,
    route: EvalRoute,
) -> Result<f64> {
    spec.validate()?;
    cfg.validate()?;
    check_time(t)?;
    check_radius(radius)?;
    let spec = spec.reduced();
    let d = spec.dimension;
    match route {
        EvalRoute::Auto => match spec.variant {
            Variant::Stable { alpha } if alpha == 2.0 => Ok(gauss_density(t, radius, d)),
            Variant::Stable { alpha } if alpha == 1.0 => Ok(cauchy_density(t, radius, d)),
            _ => subordination_kernel(&spec, t, radius),
        },
        EvalRoute::Subordination => subordination_kernel(&spec, t, radius),
        EvalRoute::Fourier => fourier_kernel(&spec, t, radius, cfg),
        EvalRoute::CrossChecked => {
            let sub = subordination_kernel(&spec, t, radius)?;
            let fou = fourier_kernel(&spec, t, radius, cfg)?;
            if (sub - fou).abs() > 10.0 * cfg.rel_tol * sub.abs().max(fou.abs()) + cfg.abs_tol {
                return Err(NhtError::RouteDisagreement {
                    t,
                    r: radius,
                    subordination: sub,
                    fourier: fou,
                });
            }
            Ok(sub)
        }
    }
}

fn heat(s: f64, r2: f64, d: f64) -> f64 {
    (4.0 * PI * s).powf(-d / 2.0) * (-r2 / (4.0 * s)).exp()
}

/// The kernel at one fixed time, prepared for many radial evaluations.
///
/// For sums of stables the two-level mixture over `(S, S')` is collapsed
/// onto bins of width 0.01 in `ln v`; each bin keeps its mass, mean and
/// variance as a two-point rule. Relative error is below `1e-6` wherever
/// the density is not negligible; intended for Monte Carlo weights.
/// Other variants delegate to [`eval_kernel`].
#[derive(Debug, Clone)]
pub struct FixedTimeKernel {
    spec: KernelSpec,
    t: f64,
    at_zero: OnceLock<f64>,
    mixture: Option<Vec<(f64, f64)>>,
    cfg: QuadratureConfig,
}

impl FixedTimeKernel {
    pub fn new(spec: &KernelSpec, t: f64, cfg: &QuadratureConfig) -> Result<Self> {
        spec.validate()?;
        check_time(t)?;
        let spec = spec.reduced();
        let mixture = match spec.variant {
            Variant::StableSum {
                alpha,
                beta,
                weight_a,
            } => Some(binned_sum_mixture(alpha, beta, weight_a, t, spec.dimension)?),
            _ => None,
        };
        Ok(Self {
            spec,
            t,
            at_zero: OnceLock::new(),
            mixture,
            cfg: *cfg,
        })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    /// `p_t(0)` as returned by [`kernel_at_zero`].
    pub fn at_zero(&self) -> Result<f64> {
        if let Some(v) = self.at_zero.get() {
            return Ok(*v);
        }
        let v = kernel_at_zero(&self.spec, self.t, &self.cfg)?;
        Ok(*self.at_zero.get_or_init(|| v))
    }

    pub fn eval(&self, radius: f64) -> Result<f64> {
        match &self.mixture {
            None => eval_kernel(&self.spec, self.t, radius, &self.cfg),
            Some(mix) => {
                if !(radius >= 0.0 && radius.is_finite()) {
                    return Err(invalid(format!("radius must be finite and >= 0, got {radius}")));
                }
                let r2 = radius * radius;
                let terms: Vec<f64> = mix.iter().map(|&(w, q)| w * (-r2 * q).exp()).collect();
                Ok(quadrature::pairwise_sum(&terms))
            }
        }
    }
}

/// Atoms `(m (4 pi v)^{-d/2}, 1 / (4 v))` of the binned mixture over `v`.
fn binned_sum_mixture(alpha: f64, beta: f64, weight_a: f64, t: f64, d: usize) -> Result<Vec<(f64, f64)>> {
    const WIDTH: f64 = 0.01;
    let ta = stable_law_table(alpha / 2.0)?;
    let tb = stable_law_table(beta / 2.0)?;
    let sa = t.powf(2.0 / alpha);
    let sb = weight_a * weight_a * t.powf(2.0 / beta);
    let lo = |l: &[f64]| l.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = |l: &[f64]| l.iter().copied().fold(0.0, f64::max);
    let first = ((sa * lo(&ta.levels) + sb * lo(&tb.levels)).ln() / WIDTH).floor() as i64 - 1;
    let last = ((sa * hi(&ta.levels) + sb * hi(&tb.levels)).ln() / WIDTH).floor() as i64 + 1;
    let centres: Vec<f64> = (first..=last).map(|b| ((b as f64 + 0.5) * WIDTH).exp()).collect();
    // per bin: mass, sum m (v - c), sum m (v - c)^2 about the bin centre c
    let mut bins = vec![(0.0, 0.0, 0.0); centres.len()];
    for (&s1, &m1) in ta.levels.iter().zip(&ta.masses) {
        for (&s2, &m2) in tb.levels.iter().zip(&tb.masses) {
            let m = m1 * m2;
            if m < 1e-30 {
                continue;
            }
            let v = sa * s1 + sb * s2;
            let i = (((v.ln() / WIDTH).floor() as i64) - first).clamp(0, centres.len() as i64 - 1) as usize;
            let dv = v - centres[i];
            let e = &mut bins[i];
            e.0 += m;
            e.1 += m * dv;
            e.2 += m * dv * dv;
        }
    }
    let df = d as f64;
    let atom = |v: f64, m: f64| (m * (4.0 * PI * v).powf(-df / 2.0), 0.25 / v);
    let mut out = Vec::with_capacity(2 * bins.len());
    for (&(m, s1, s2), &c) in bins.iter().zip(&centres) {
        if m == 0.0 {
            continue;
        }
        let shift = s1 / m;
        let sd = (s2 / m - shift * shift).max(0.0).sqrt();
        let mean = c + shift;
        if sd > 0.0 && mean - sd > 0.0 {
            out.push(atom(mean - sd, 0.5 * m));
            out.push(atom(mean + sd, 0.5 * m));
        } else {
            out.push(atom(mean, m));
        }
    }
    Ok(out)
}

/// Shared [`FixedTimeKernel`] for `(spec, t)`; at most 256 are kept.
pub fn fixed_time_kernel(spec: &KernelSpec, t: f64, cfg: &QuadratureConfig) -> Result<Arc<FixedTimeKernel>> {
    static CACHE: OnceLock<Mutex<HashMap<String, Arc<FixedTimeKernel>>>> = OnceLock::new();
    let key = format!("{:?}|{}|{:?}", spec.reduced(), t.to_bits(), cfg);
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(k) = cache.lock().expect("kernel cache poisoned").get(&key) {
        return Ok(k.clone());
    }
    let k = Arc::new(FixedTimeKernel::new(spec, t, cfg)?);
    let mut guard = cache.lock().expect("kernel cache poisoned");
    if guard.len() >= 256 {
        guard.clear();
    }
    Ok(guard.entry(key).or_insert(k).clone())
}

/// `E G(S_t, r)` over the tabulated subordinator law(s).
fn subordination_kernel(spec: &KernelSpec, t: f64, r: f64) -> Result<f64> {
    let df = spec.dimension as f64;
    match spec.variant {
        Variant::Stable { alpha } => {
            if alpha == 2.0 {
                return Ok(gauss_density(t, r, spec.dimension));
            }
            let table = stable_law_table(alpha / 2.0)?;
            let scale = t.powf(2.0 / alpha);
            let r2 = r * r / scale;
            Ok(scale.powf(-df / 2.0) * table.expect(|s| heat(s, r2, df)))
        }
        Variant::StableSum {
            alpha,
            beta,
            weight_a,
        } => {
            let ta = stable_law_table(alpha / 2.0)?;
            let tb = stable_law_table(beta / 2.0)?;
            let sa = t.powf(2.0 / alpha);
            let sb = weight_a * weight_a * t.powf(2.0 / beta);
            let r2 = r * r;
            let inner: Vec<(f64, f64)> = tb
                .levels
                .iter()
                .zip(&tb.masses)
                .filter(|(_, &m)| m > 1e-20)
                .map(|(&s, &m)| (sb * s, m))
                .collect();
            Ok(ta.expect(|s| {
                let base = sa * s;
                let mut acc = 0.0;
                for &(x, m) in &inner {
                    acc += m * heat(base + x, r2, df);
                }
                acc
            }))
        }
        Variant::Relativistic { alpha, mass_m } => {
            let table = stable_law_table(alpha / 2.0)?;
            let scale = t.powf(2.0 / alpha);
            let mu = mass_m.powf(2.0 / alpha);
            let r2 = r * r;
            let mt = mass_m * t;
            // e^{mt} folded into the exponent so that large m t does not overflow.
            let v = table.expect(|s| {
                let level = scale * s;
                (4.0 * PI * level).powf(-df / 2.0) * (mt - mu * level - r2 / (4.0 * level)).exp()
            });
            Ok(v)
        }
    }
}

/// Radial Fourier inversion `int_0^inf e^{-t psi(k)} k^{d-1} K_d(k r) dk`, `d <= 3`.
fn fourier_kernel(spec: &KernelSpec, t: f64, r: f64, cfg: &QuadratureConfig) -> Result<f64> {
    let d = spec.dimension;
    if d > 3 {
        return Err(NhtError::Unsupported(format!(
            "Fourier inversion route implemented for d <= 3, got d = {d}"
        )));
    }
    if r == 0.0 {
        return kernel_at_zero_quadrature(spec, t, cfg);
    }
    let df = d as f64;
    let k0 = level_frequency(spec, t, 1.0);
    let scale = k0.powf(df);
    let f = |k: f64| (-t * psi(spec, k)).exp() * k.powf(df - 1.0) * radial_fourier_kernel(d, k * r);
    // Panels no wider than half an oscillation, nor wider than the decay scale.
    let period = PI / r;
    let mut total = 0.0;
    let mut a = 0.0;
    loop {
        let width = period.min(k0.max(0.25 * a));
        let b = a + width;
        let piece = quadrature::integrate(f, a, b, 1e-17 * scale, 1e-12, 200)?;
        total += piece.value;
        let tpsi = t * psi(spec, b);
        // Tail bound for a monotone envelope e^{-t psi} k^{d-1}.
        let tail = (-tpsi).exp() * b.powf(df) / tpsi.max(1.0);
        if tpsi > 1.0 && tail < 1e-16 * scale {
            break;
        }
        if b > cfg.radial_cutoff {
            return Err(NhtError::QuadratureNonConvergence {
                what: format!("Fourier inversion reached radial cutoff {}", cfg.radial_cutoff),
                estimate: total,
                error: tail,
            });
        }
        a = b;
    }
    Ok(total)
}

/// Two-sided envelope `shape / C <= p_t(r) <= C shape`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopePair {
    pub lower: f64,
    pub upper: f64,
    pub constant_hint: f64,
}

/// The envelope shape function without constants.
pub fn envelope_shape(spec: &KernelSpec, t: f64, radius: f64, cfg: &QuadratureConfig) -> Result<f64> {
    spec.validate()?;
    check_time(t)?;
    check_radius(radius)?;
    let spec = spec.reduced();
    let df = spec.dimension as f64;
    let r = radius;
    Ok(match spec.variant {
        Variant::Stable { alpha } => {
            let diag = t.powf(-df / alpha);
            if r == 0.0 {
                diag
            } else {
                diag.min(t / r.powf(df + alpha))
            }
        }
        Variant::StableSum {
            alpha,
            beta,
            weight_a,
        } => {
            let ab = weight_a.powf(beta);
            let diag = (ab * t).powf(-df / beta).min(t.powf(-df / alpha));
            if r == 0.0 {
                diag
            } else {
                diag.min(t / r.powf(df + alpha) + ab * t / r.powf(df + beta))
            }
        }
        Variant::Relativistic { alpha, mass_m } => {
            if t > 1.0 {
                return Err(NhtError::OutOfValidityRange(format!(
                    "relativistic envelope holds for t <= 1, got t = {t}"
                )));
            }
            let diag = t.powf(-df / alpha);
            if r == 0.0 {
                diag
            } else {
                let psi_val = psi_envelope(mass_m.powf(1.0 / alpha) * r, cfg, spec.dimension, alpha)?;
                diag.min(t * psi_val / r.powf(df + alpha))
            }
        }
    })
}

pub fn envelope_bounds(
    spec: &KernelSpec,
    t: f64,
    radius: f64,
    cfg: &QuadratureConfig,
) -> Result<EnvelopePair> {
    let shape = envelope_shape(spec, t, radius, cfg)?;
    let c = envelope_constant(spec, cfg)?;
    Ok(EnvelopePair {
        lower: shape / c,
        upper: shape * c,
        constant_hint: c,
    })
}

/// Ratio `p_t(r) / shape(t, r)` over the calibration grid.
pub fn envelope_ratios(spec: &KernelSpec, cfg: &QuadratureConfig) -> Result<Vec<(f64, f64, f64)>> {
    let spec = spec.reduced();
    let (times, r_max): (Vec<f64>, f64) = match spec.variant {
        Variant::Relativistic { .. } => (vec![0.01, 0.03, 0.1, 0.3, 1.0], 30.0),
        _ => (vec![0.01, 0.1, 1.0, 10.0], 1e3),
    };
    let mut out = Vec::new();
    for &t in &times {
        let mut radii = vec![0.0];
        let n = 36;
        for i in 0..n {
            radii.push(1e-3 * (r_max / 1e-3_f64).powf(i as f64 / (n - 1) as f64));
        }
        for r in radii {
            let p = eval_kernel(&spec, t, r, cfg)?;
            let shape = envelope_shape(&spec, t, r, cfg)?;
            if p > 1e-290 && shape > 1e-290 {
                out.push((t, r, p / shape));
            }
        }
    }
    Ok(out)
}

/// Smallest `C` with `shape / C <= p <= C shape` on the calibration grid.
/// Computed once per kernel specification and then shared.
pub fn envelope_constant(spec: &KernelSpec, cfg: &QuadratureConfig) -> Result<f64> {
    static CACHE: OnceLock<Mutex<HashMap<String, f64>>> = OnceLock::new();
    let key = spec.reduced().label();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(&c) = cache.lock().expect("envelope cache poisoned").get(&key) {
        return Ok(c);
    }
    let ratios = envelope_ratios(spec, cfg)?;
    let mut c: f64 = 1.0;
    for (_, _, q) in ratios {
        c = c.max(q).max(1.0 / q);
    }
    cache.lock().expect("envelope cache poisoned").insert(key, c);
    Ok(c)
}

struct PsiTable {
    log_r: Vec<f64>,
    log_v: Vec<f64>,
    slopes: Vec<f64>,
    tail: [f64; 3],
    exponent: f64,
}

const PSI_R_MIN: f64 = 1e-3;
const PSI_R_MAX: f64 = 10.0;

/// `Psi(r)` by quadrature of its defining integral.
pub fn psi_envelope_direct(r: f64, d: usize, alpha: f64, cfg: &QuadratureConfig) -> Result<f64> {
    let nu = (d as f64 + alpha) / 2.0;
    let r2 = r * r;
    let norm = (d as f64 + alpha) * 2f64.ln() + ln_gamma(nu);
    let g = |u: f64| (nu * u - 0.25 * u.exp() - r2 * (-u).exp() - norm).exp();
    // Peak of the log-integrand: nu - e^u/4 + r^2 e^{-u} = 0.
    let s_peak = 2.0 * (nu + (nu * nu + r2).sqrt());
    let up = s_peak.ln();
    let hi = up.max((4.0 * (800.0 + nu * 10.0)).ln());
    let mut lo = up - 800.0 / nu;
    if r > 0.0 {
        lo = lo.max((r2 / 800.0).ln().min(up - 1.0));
    }
    let tol = cfg.rel_tol.min(1e-10);
    let a = quadrature::integrate(g, lo, up, 0.0, tol, 500)?;
    let b = quadrature::integrate(g, up, hi, 0.0, tol, 500)?;
    Ok((a.value + b.value).min(1.0))
}

fn psi_table(d: usize, alpha: f64, cfg: &QuadratureConfig) -> Result<Arc<PsiTable>> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, u64), Arc<PsiTable>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (d, alpha.to_bits());
    if let Some(t) = cache.lock().expect("psi cache poisoned").get(&key) {
        return Ok(t.clone());
    }
    let n = 241;
    let (l0, l1) = (PSI_R_MIN.ln(), PSI_R_MAX.ln());
    let mut log_r = Vec::with_capacity(n);
    let mut log_v = Vec::with_capacity(n);
    for i in 0..n {
        let lr = l0 + (l1 - l0) * i as f64 / (n - 1) as f64;
        log_r.push(lr);
        log_v.push(psi_envelope_direct(lr.exp(), d, alpha, cfg)?.ln());
    }
    let slopes = pchip_slopes(&log_r, &log_v);
    // Psi(r) ~ e^{-r} r^{(d+alpha-1)/2} (c0 + c1/r + c2/r^2), matched at r = 10, 20, 50.
    let exponent = (d as f64 + alpha - 1.0) / 2.0;
    let mut rows = [[0.0; 3]; 3];
    let mut rhs = [0.0; 3];
    for (i, r) in [10.0f64, 20.0, 50.0].into_iter().enumerate() {
        rows[i] = [1.0, 1.0 / r, 1.0 / (r * r)];
        rhs[i] = psi_envelope_direct(r, d, alpha, cfg)? * r.exp() * r.powf(-exponent);
    }
    let m = nalgebra::Matrix3::from_fn(|i, j| rows[i][j]);
    let tail = m
        .lu()
        .solve(&nalgebra::Vector3::from(rhs))
        .ok_or_else(|| NhtError::Internal("singular tail fit for Psi".into()))?;
    let tail = [tail[0], tail[1], tail[2]];
    let table = Arc::new(PsiTable {
        log_r,
        log_v,
        slopes,
        tail,
        exponent,
    });
    let mut guard = cache.lock().expect("psi cache poisoned");
    Ok(guard.entry(key).or_insert(table).clone())
}

/// Fritsch–Carlson derivative estimates for monotone cubic Hermite interpolation.
fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = (0..n - 1).map(|i| x[i + 1] - x[i]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    let mut m = vec![0.0; n];
    m[0] = delta[0];
    m[n - 1] = delta[n - 2];
    for i in 1..n - 1 {
        if delta[i - 1] * delta[i] <= 0.0 {
            m[i] = 0.0;
        } else {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            m[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    m
}

fn pchip_eval(x: &[f64], y: &[f64], m: &[f64], xq: f64) -> f64 {
    let n = x.len();
    let i = match x.binary_search_by(|v| v.total_cmp(&xq)) {
        Ok(i) => return y[i],
        Err(i) => i.clamp(1, n - 1) - 1,
    };
    let h = x[i + 1] - x[i];
    let s = (xq - x[i]) / h;
    let (s2, s3) = (s * s, s * s * s);
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    h00 * y[i] + h10 * h * m[i] + h01 * y[i + 1] + h11 * h * m[i + 1]
}

/// `Psi(r) = 2^{-(d+alpha)} Gamma((d+alpha)/2)^{-1} int_0^inf s^{(d+alpha)/2-1} e^{-s/4} e^{-r^2/s} ds`.
///
/// Direct quadrature below `r = 1e-3`, monotone interpolation of a cached log
/// grid up to `r = 10`, fitted exponential asymptotics beyond.
pub fn psi_envelope(r: f64, cfg: &QuadratureConfig, d: usize, alpha: f64) -> Result<f64> {
    check_radius(r)?;
    if d == 0 || !(alpha > 0.0 && alpha <= 2.0) {
        return Err(invalid(format!("psi envelope needs d >= 1, alpha in (0, 2]; got d={d}, alpha={alpha}")));
    }
    if r == 0.0 {
        return Ok(1.0);
    }
    if r < PSI_R_MIN {
        return psi_envelope_direct(r, d, alpha, cfg);
    }
    let table = psi_table(d, alpha, cfg)?;
    if r <= PSI_R_MAX {
        let lv = pchip_eval(&table.log_r, &table.log_v, &table.slopes, r.ln());
        return Ok(lv.exp().min(1.0));
    }
    let [c0, c1, c2] = table.tail;
    Ok((-r).exp() * r.powf(table.exponent) * (c0 + c1 / r + c2 / (r * r)))
}

/// Smooth, rapidly decaying test functions with known Fourier transforms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    Constant { value: f64 },
    /// `exp(-|x - center|^2 / (2 width^2))`.
    Gaussian { width: f64, center: Vec<f64> },
    /// `cos(k x) exp(-x^2 / (2 width^2))` on the line.
    WindowedCosine { k: f64, width: f64 },
}

impl TestFunction {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            TestFunction::Constant { value } => *value,
            TestFunction::Gaussian { width, center } => {
                let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                (-r2 / (2.0 * width * width)).exp()
            }
            TestFunction::WindowedCosine { k, width } => {
                (k * x[0]).cos() * (-x[0] * x[0] / (2.0 * width * width)).exp()
            }
        }
    }

    fn laplacian(&self, x: &[f64]) -> f64 {
        match self {
            TestFunction::Constant { .. } => 0.0,
            TestFunction::Gaussian { width, center } => {
                let w2 = width * width;
                let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                self.eval(x) * (r2 / (w2 * w2) - x.len() as f64 / w2)
            }
            TestFunction::WindowedCosine { k, width } => {
                let w2 = width * width;
                let y = x[0];
                let g = (-y * y / (2.0 * w2)).exp();
                let (s, c) = (k * y).sin_cos();
                (-k * k * c + 2.0 * k * s * y / w2 + c * (y * y / (w2 * w2) - 1.0 / w2)) * g
            }
        }
    }

    fn check(&self, d: usize) -> Result<()> {
        match self {
            TestFunction::Constant { .. } => Ok(()),
            TestFunction::Gaussian { width, center } => {
                if center.len() != d {
                    return Err(invalid(format!("test function center has {} coordinates, expected {d}", center.len())));
                }
                if !(*width > 0.0) {
                    return Err(invalid("test function width must be positive"));
                }
                Ok(())
            }
            TestFunction::WindowedCosine { width, .. } => {
                if d != 1 {
                    return Err(invalid("windowed cosine is defined on the line only"));
                }
                if !(*width > 0.0) {
                    return Err(invalid("test function width must be positive"));
                }
                Ok(())
            }
        }
    }

    /// Radius around `x` beyond which `f(x + y)` is negligible.
    fn reach(&self, x: &[f64]) -> f64 {
        match self {
            TestFunction::Constant { .. } => 0.0,
            TestFunction::Gaussian { width, center } => {
                let dist: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                dist + 40.0 * width
            }
            TestFunction::WindowedCosine { width, .. } => x[0].abs() + 40.0 * width,
        }
    }
}

/// Both evaluations of `Delta^{alpha/2} f(x)` and their normalizations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorEvaluation {
    /// `PV int (f(x+y) - f(x)) |y|^{-d-alpha} dy`, no constant applied.
    pub pv_integral: f64,
    /// The constant under which the PV form equals the multiplier `-|xi|^alpha`.
    pub standard_constant: f64,
    /// `Gamma((d-alpha)/2) / (2^alpha pi^{d/2} Gamma(alpha/2))`; `None` at its pole `d = alpha`.
    pub paper_constant: Option<f64>,
    pub pv_with_paper_constant: Option<f64>,
    /// `-(2 pi)^{-d} int |xi|^alpha f^(xi) e^{i x.xi} d xi`, when available.
    pub multiplier: Option<f64>,
    /// `multiplier / pv_integral`: the empirical constant.
    pub empirical_constant: Option<f64>,
}

pub fn standard_generator_constant(d: usize, alpha: f64) -> f64 {
    let df = d as f64;
    alpha * 2f64.powf(alpha - 1.0) * gamma((df + alpha) / 2.0) / (PI.powf(df / 2.0) * gamma(1.0 - alpha / 2.0))
}

pub fn paper_generator_constant(d: usize, alpha: f64) -> Option<f64> {
    let df = d as f64;
    let z = (df - alpha) / 2.0;
    if z <= 0.0 && (z - z.round()).abs() < 1e-12 {
        return None;
    }
    Some(gamma(z) / (2f64.powf(alpha) * PI.powf(df / 2.0) * gamma(alpha / 2.0)))
}

/// Fractional Laplacian of a test function by the principal-value integral and,
/// where the Fourier transform is tractable, by the multiplier.
pub fn apply_generator(
    spec: &KernelSpec,
    f: &TestFunction,
    x: &[f64],
    cfg: &QuadratureConfig,
) -> Result<GeneratorEvaluation> {
    spec.validate()?;
    cfg.validate()?;
    let alpha = match spec.variant {
        Variant::Stable { alpha } => alpha,
        _ => return Err(NhtError::Unsupported("generator evaluation is implemented for the stable family".into())),
    };
    if alpha == 2.0 {
        return Err(invalid("alpha = 2 is a local operator; the principal-value form needs alpha < 2"));
    }
    let d = spec.dimension;
    if x.len() != d {
        return Err(invalid(format!("point has {} coordinates, expected {d}", x.len())));
    }
    if d > 3 {
        return Err(NhtError::Unsupported("generator evaluation implemented for d <= 3".into()));
    }
    f.check(d)?;
    let pv = pv_integral(f, x, alpha, cfg)?;
    let multiplier = multiplier_route(f, x, alpha, cfg)?;
    let standard = standard_generator_constant(d, alpha);
    let paper = paper_generator_constant(d, alpha);
    let empirical = multiplier.and_then(|m| if pv != 0.0 { Some(m / pv) } else { None });
    Ok(GeneratorEvaluation {
        pv_integral: pv,
        standard_constant: standard,
        paper_constant: paper,
        pv_with_paper_constant: paper.map(|c| c * pv),
        multiplier,
        empirical_constant: empirical,
    })
}

/// Directions and weights of a rule on the unit sphere, total weight `omega_d`.
fn sphere_rule(d: usize, n: usize) -> Vec<(Vec<f64>, f64)> {
    match d {
        1 => vec![(vec![1.0], 1.0), (vec![-1.0], 1.0)],
        2 => (0..n)
            .map(|j| {
                let th = 2.0 * PI * (j as f64 + 0.5) / n as f64;
                (vec![th.cos(), th.sin()], 2.0 * PI / n as f64)
            })
            .collect(),
        _ => {
            let (zs, ws) = quadrature::gauss_legendre(n);
            let mut out = Vec::with_capacity(2 * n * n);
            for (z, w) in zs.iter().zip(&ws) {
                let rho = (1.0 - z * z).sqrt();
                for j in 0..2 * n {
                    let th = PI * (j as f64 + 0.5) / n as f64;
                    out.push((vec![rho * th.cos(), rho * th.sin(), *z], w * PI / n as f64));
                }
            }
            out
        }
    }
}

fn pv_integral(f: &TestFunction, x: &[f64], alpha: f64, cfg: &QuadratureConfig) -> Result<f64> {
    let d = x.len();
    let omega = sphere_area(d);
    let fx = f.eval(x);
    let reach = f.reach(x);
    if reach == 0.0 {
        return Ok(0.0);
    }
    let rule = sphere_rule(d, cfg.radial_nodes);
    let mut y = vec![0.0; d];
    let mut y2 = vec![0.0; d];
    let mut shell = |rho: f64| -> f64 {
        let mut acc = 0.0;
        for (dir, w) in &rule {
            for i in 0..d {
                y[i] = x[i] + rho * dir[i];
                y2[i] = x[i] - rho * dir[i];
            }
            acc += w * 0.5 * (f.eval(&y) + f.eval(&y2) - 2.0 * fx);
        }
        acc
    };
    // Below rho_min the shell average is replaced by its Taylor term
    // omega_d rho^2 Delta f / (2d), avoiding cancellation in the second difference.
    let rho_min = 1e-3 * reach / 40.0;
    let near = omega * f.laplacian(x) / (2.0 * d as f64) * rho_min.powf(2.0 - alpha) / (2.0 - alpha);
    let mid = quadrature::integrate(
        |u| {
            let rho = u.exp();
            shell(rho) * rho.powf(-alpha)
        },
        rho_min.ln(),
        reach.ln(),
        cfg.abs_tol,
        cfg.rel_tol,
        4000,
    )?;
    let far = -fx * omega * reach.powf(-alpha) / alpha;
    Ok(near + mid.value + far)
}

fn multiplier_route(f: &TestFunction, x: &[f64], alpha: f64, cfg: &QuadratureConfig) -> Result<Option<f64>> {
    let d = x.len();
    let df = d as f64;
    match f {
        TestFunction::Constant { .. } => Ok(Some(0.0)),
        TestFunction::Gaussian { width, center } => {
            let w = *width;
            let dist: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let pref = (2.0 * PI * w * w).powf(df / 2.0);
            let g = |k: f64| {
                k.powf(alpha + df - 1.0) * (-0.5 * w * w * k * k).exp() * radial_fourier_kernel(d, k * dist)
            };
            let top = 40.0 / w;
            let breaks = multiplier_breaks(top, dist);
            let mut total = 0.0;
            for p in breaks.windows(2) {
                total += quadrature::integrate(g, p[0], p[1], 0.1 * cfg.abs_tol, cfg.rel_tol, 400)?.value;
            }
            Ok(Some(-pref * total))
        }
        TestFunction::WindowedCosine { k, width } => {
            let w = *width;
            let y = x[0];
            let fhat = |xi: f64| {
                0.5 * (2.0 * PI).sqrt() * w
                    * ((-0.5 * w * w * (xi - k) * (xi - k)).exp() + (-0.5 * w * w * (xi + k) * (xi + k)).exp())
            };
            let g = |xi: f64| xi.powf(alpha) * fhat(xi) * (xi * y).cos();
            let top = k.abs() + 40.0 / w;
            let mut breaks = multiplier_breaks(top, y.abs());
            breaks.push(k.abs());
            breaks.sort_by(f64::total_cmp);
            breaks.dedup();
            let mut total = 0.0;
            for p in breaks.windows(2) {
                total += quadrature::integrate(g, p[0], p[1], 0.1 * cfg.abs_tol, cfg.rel_tol, 400)?.value;
            }
            Ok(Some(-total / PI))
        }
    }
}

fn multiplier_breaks(top: f64, dist: f64) -> Vec<f64> {
    let width = if dist > 0.0 { (PI / dist).min(top / 8.0) } else { top / 8.0 };
    let n = (top / width).ceil() as usize;
    (0..=n).map(|i| top * i as f64 / n as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> QuadratureConfig {
        QuadratureConfig::default()
    }

    #[test]
    fn fixed_time_sum_kernel_matches_direct_evaluation() {
        let c = QuadratureConfig::default();
        let spec = KernelSpec::stable_sum(1.5, 0.5, 1.0, 1).unwrap();
        for t in [0.02, 0.3] {
            let fixed = FixedTimeKernel::new(&spec, t, &c).unwrap();
            for r in [0.0, 0.05, 0.4, 2.0, 15.0] {
                let a = fixed.eval(r).unwrap();
                let b = eval_kernel(&spec, t, r, &c).unwrap();
                assert!(((a - b) / b).abs() < 1e-6, "t={t} r={r}: {a} vs {b}");
            }
        }
        let stable = KernelSpec::stable(1.2, 2).unwrap();
        let k = fixed_time_kernel(&stable, 0.7, &c).unwrap();
        assert_eq!(k.eval(0.9).unwrap(), eval_kernel(&stable, 0.7, 0.9, &c).unwrap());
    }

    #[test]
    fn exponent_values() {
        let s = KernelSpec::stable(1.5, 1).unwrap();
        assert!((char_exponent(&s, 2.0).unwrap() - 2f64.powf(1.5)).abs() < 1e-14);
        let r = KernelSpec::relativistic(1.0, 1.0, 1).unwrap();
        assert_eq!(char_exponent(&r, 0.0).unwrap(), 0.0);
        let z = KernelSpec::stable_sum(1.5, 0.5, 0.0, 1).unwrap();
        assert_eq!(char_exponent(&z, 3.0).unwrap(), 3f64.powf(1.5));
        assert!(char_exponent(&s, -1.0).is_err());
        assert!(char_exponent(&s, f64::NAN).is_err());
    }

    #[test]
    fn relativistic_exponent_has_no_small_frequency_cancellation() {
        let r = KernelSpec::relativistic(1.3, 2.0, 1).unwrap();
        let mu = 2f64.powf(2.0 / 1.3);
        // Leading term m (alpha/2) k^2 / mu.
        let k = 1e-6;
        let lead = 2.0 * 0.65 * k * k / mu;
        assert!((psi(&r, k) / lead - 1.0).abs() < 1e-10);
        let big = psi(&r, 50.0);
        let exact = (2500.0 + mu).powf(0.65) - 2.0;
        assert!((big / exact - 1.0).abs() < 1e-13);
    }

    #[test]
    fn kernel_at_zero_closed_forms() {
        let c = cfg();
        let v = kernel_at_zero(&KernelSpec::stable(1.0, 1).unwrap(), 1.0, &c).unwrap();
        assert!((v - 1.0 / PI).abs() < 1e-15);
        let v = kernel_at_zero(&KernelSpec::stable(1.0, 3).unwrap(), 1.0, &c).unwrap();
        assert!((v - 1.0 / (PI * PI)).abs() < 1e-15);
        let v = kernel_at_zero(&KernelSpec::stable(2.0, 1).unwrap(), 1.0, &c).unwrap();
        assert!((v - (4.0 * PI).powf(-0.5)).abs() < 1e-15);
    }

    #[test]
    fn stable_kernel_matches_cauchy_by_subordination() {
        let c = cfg();
        for d in 1..=3 {
            let s = KernelSpec::stable(1.0, d).unwrap();
            for &r in &[0.0, 0.3, 1.0, 4.0, 10.0] {
                let v = eval_kernel_with(&s, 1.0, r, &c, EvalRoute::Subordination).unwrap();
                let e = cauchy_density(1.0, r, d);
                assert!((v / e - 1.0).abs() < 1e-9, "d={d} r={r} {v} {e}");
            }
        }
    }

    #[test]
    fn fourier_route_matches_cauchy() {
        let c = cfg();
        for d in 1..=3 {
            let s = KernelSpec::stable(1.0, d).unwrap();
            for &r in &[0.0, 0.5, 2.0, 7.0] {
                let v = eval_kernel_with(&s, 0.7, r, &c, EvalRoute::Fourier).unwrap();
                let e = cauchy_density(0.7, r, d);
                assert!((v / e - 1.0).abs() < 1e-7, "d={d} r={r} {v} {e}");
            }
        }
    }

    #[test]
    fn relativistic_cauchy_closed_form() {
        // alpha = 1, d = 1: p_t(x) = (m t / pi) e^{m t} K_1(m sqrt(x^2 + t^2)) / sqrt(x^2 + t^2).
        fn k1(z: f64) -> f64 {
            quadrature::integrate(|u| (-z * u.cosh()).exp() * u.cosh(), 0.0, 40.0, 0.0, 1e-13, 500)
                .unwrap()
                .value
        }
        let s = KernelSpec::relativistic(1.0, 1.0, 1).unwrap();
        for &(t, x) in &[(0.5, 0.7), (1.0, 0.0), (0.1, 2.0)] {
            let rho: f64 = (x * x + t * t as f64).sqrt();
            let exact = t / PI * t.exp() * k1(rho) / rho;
            let v = eval_kernel(&s, t, x, &cfg()).unwrap();
            assert!((v / exact - 1.0).abs() < 1e-8, "t={t} x={x} {v} {exact}");
        }
    }

    #[test]
    fn cross_checked_route_reports_disagreement_only_when_real() {
        let c = QuadratureConfig {
            rel_tol: 1e-7,
            ..cfg()
        };
        let s = KernelSpec::stable(1.5, 2).unwrap();
        eval_kernel_with(&s, 0.5, 0.8, &c, EvalRoute::CrossChecked).unwrap();
        let s4 = KernelSpec::stable(1.5, 4).unwrap();
        assert!(matches!(
            eval_kernel_with(&s4, 0.5, 0.8, &c, EvalRoute::Fourier),
            Err(NhtError::Unsupported(_))
        ));
    }

    #[test]
    fn zero_weight_sum_is_bitwise_stable() {
        let c = cfg();
        let a = KernelSpec::stable(1.3, 2).unwrap();
        let b = KernelSpec::stable_sum(1.3, 0.4, 0.0, 2).unwrap();
        for &r in &[0.0, 0.4, 3.0] {
            assert_eq!(
                eval_kernel(&a, 0.3, r, &c).unwrap().to_bits(),
                eval_kernel(&b, 0.3, r, &c).unwrap().to_bits()
            );
            assert_eq!(
                envelope_shape(&a, 0.3, r, &c).unwrap().to_bits(),
                envelope_shape(&b, 0.3, r, &c).unwrap().to_bits()
            );
        }
        assert_eq!(
            kernel_at_zero(&a, 0.3, &c).unwrap().to_bits(),
            kernel_at_zero(&b, 0.3, &c).unwrap().to_bits()
        );
    }

    #[test]
    fn envelope_shape_examples() {
        let c = cfg();
        let s = KernelSpec::stable(1.0, 1).unwrap();
        assert_eq!(envelope_shape(&s, 1.0, 2.0, &c).unwrap(), 0.25);
        assert_eq!(envelope_shape(&s, 1.0, 0.0, &c).unwrap(), 1.0);
        let z = KernelSpec::stable_sum(1.5, 0.5, 1.0, 1).unwrap();
        let v = envelope_shape(&z, 0.01, 0.0, &c).unwrap();
        assert!((v - 0.01f64.powf(-2.0 / 3.0)).abs() < 1e-10);
        let r = KernelSpec::relativistic(1.0, 1.0, 1).unwrap();
        assert!(matches!(
            envelope_shape(&r, 1.5, 0.2, &c),
            Err(NhtError::OutOfValidityRange(_))
        ));
    }

    #[test]
    fn psi_envelope_values() {
        let c = cfg();
        assert_eq!(psi_envelope(0.0, &c, 1, 1.0).unwrap(), 1.0);
        let a = psi_envelope(0.25, &c, 1, 1.0).unwrap();
        let b = psi_envelope(0.5, &c, 1, 1.0).unwrap();
        assert!(0.0 < b && b < a && a < 1.0);
        // nu = 1: Psi(r) = r K_1(r).
        let k1 = |z: f64| {
            quadrature::integrate(|u| (-z * u.cosh()).exp() * u.cosh(), 0.0, 40.0, 0.0, 1e-13, 500)
                .unwrap()
                .value
        };
        for &r in &[1e-4, 0.01, 0.5, 3.0, 9.5, 15.0, 30.0] {
            let v = psi_envelope(r, &c, 1, 1.0).unwrap();
            let e = r * k1(r);
            assert!((v / e - 1.0).abs() < 1e-5, "r={r} {v} {e}");
        }
    }

    #[test]
    fn generator_constants() {
        assert!(paper_generator_constant(1, 1.0).is_none());
        assert!(paper_generator_constant(1, 1.5).unwrap() < 0.0);
        // alpha = 1, d = 1: the standard constant is 1/pi.
        assert!((standard_generator_constant(1, 1.0) - 1.0 / PI).abs() < 1e-15);
    }

    #[test]
    fn generator_of_constant_is_zero() {
        let s = KernelSpec::stable(1.2, 2).unwrap();
        let g = apply_generator(&s, &TestFunction::Constant { value: 3.0 }, &[0.1, 0.2], &cfg()).unwrap();
        assert_eq!(g.pv_integral, 0.0);
        assert_eq!(g.multiplier, Some(0.0));
    }

    #[test]
    fn generator_routes_agree_under_standard_constant() {
        for (d, alpha) in [(1usize, 1.0), (1, 0.5), (2, 1.5), (3, 0.8)] {
            let s = KernelSpec::stable(alpha, d).unwrap();
            let f = TestFunction::Gaussian {
                width: 1.0,
                center: vec![0.0; d],
            };
            let mut x = vec![0.0; d];
            x[0] = 0.3;
            let g = apply_generator(&s, &f, &x, &cfg()).unwrap();
            let ratio = g.empirical_constant.unwrap() / g.standard_constant;
            assert!((ratio - 1.0).abs() < 1e-6, "d={d} alpha={alpha} ratio {ratio}");
        }
    }

    #[test]
    fn json_round_trip_and_rejections() {
        let s: KernelSpec = serde_json::from_str(r#"{"variant":"sum","alpha":1.5,"beta":0.5,"a":2.0,"d":2}"#).unwrap();
        assert_eq!(s, KernelSpec::stable_sum(1.5, 0.5, 2.0, 2).unwrap());
        let back: KernelSpec = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
        for bad in [
            r#"{"variant":"stable","alpha":1.5,"d":1,"extra":1}"#,
            r#"{"variant":"stable","alpha":1.5,"m":1,"d":1}"#,
            r#"{"variant":"relativistic","alpha":1.5,"d":1}"#,
            r#"{"variant":"stable","alpha":2.5,"d":1}"#,
            r#"{"variant":"cubic","alpha":1.5,"d":1}"#,
        ] {
            assert!(serde_json::from_str::<KernelSpec>(bad).is_err(), "{bad}");
        }
    }
}
