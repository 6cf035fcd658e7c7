//! Numerical witnesses for the inequality toolkit (3P, 5P, the scalar
//! exponential inequality, fractional moments) and for the kernel identities
//! (normalization, scaling, semigroup, subordination round trips, sup bound,
//! radial monotonicity, relativistic limit).

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{invalid, NhtError, Result};
use crate::levy_kernels::{
    envelope_ratios, eval_kernel, fixed_time_kernel, kernel_at_zero, stable_p1_zero, standard_generator_constant,
    KernelSpec, Variant,
};
use crate::quadrature::{self, pairwise_sum, CompositeRule, QuadratureConfig};
use crate::special::sphere_area;
use crate::subordinators::{eta_density, SubordinatorSpec};

/// Largest ratio seen on a radial grid and where it occurred.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioWitness {
    pub max_ratio: f64,
    pub argmax_radius: f64,
    pub grid_points: usize,
}

fn check_times(spec: &KernelSpec, t: f64, s: f64) -> Result<()> {
    spec.validate()?;
    if !(t > 0.0 && t.is_finite() && s > 0.0 && s < t) {
        return Err(invalid(format!("need 0 < s < t, got s = {s}, t = {t}")));
    }
    if matches!(spec.variant, Variant::Relativistic { .. }) && t > 1.0 {
        return Err(NhtError::OutOfValidityRange(format!(
            "relativistic witnesses are checked for t <= 1, got t = {t}"
        )));
    }
    Ok(())
}

fn ratio_scan<F>(spec: &KernelSpec, t: f64, s: f64, radii: &[f64], cfg: &QuadratureConfig, f: F) -> Result<RatioWitness>
where
    F: Fn(f64, f64, f64) -> f64 + Sync,
{
    check_times(spec, t, s)?;
    if radii.is_empty() || radii.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
        return Err(invalid("radial grid must be nonempty with finite radii >= 0"));
    }
    let ks = fixed_time_kernel(spec, s, cfg)?;
    let kr = fixed_time_kernel(spec, t - s, cfg)?;
    let p0 = kernel_at_zero(spec, t, cfg)?;
    let ratios: Vec<f64> = radii
        .par_iter()
        .map(|&r| Ok(f(ks.eval(r)?, kr.eval(r)?, p0)))
        .collect::<Result<_>>()?;
    let (i, m) = ratios
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    Ok(RatioWitness {
        max_ratio: m,
        argmax_radius: radii[i],
        grid_points: radii.len(),
    })
}

/// `max_x (p_s(x) ∧ p_{t-s}(x)) / p_t(0)` over the radii.
pub fn check_3p(spec: &KernelSpec, t: f64, s: f64, radii: &[f64], cfg: &QuadratureConfig) -> Result<RatioWitness> {
    ratio_scan(spec, t, s, radii, cfg, |a, b, p0| a.min(b) / p0)
}

/// `max_x [p_s(x) p_{t-s}(x) / p_t(0)] / [p_s(x) + p_{t-s}(x)]` over the radii.
pub fn check_5p(spec: &KernelSpec, t: f64, s: f64, radii: &[f64], cfg: &QuadratureConfig) -> Result<RatioWitness> {
    ratio_scan(spec, t, s, radii, cfg, |a, b, p0| if a + b > 0.0 { a * b / p0 / (a + b) } else { 0.0 })
}

fn time_scale(spec: &KernelSpec, t: f64) -> f64 {
    match spec.variant {
        Variant::Stable { alpha } | Variant::Relativistic { alpha, .. } => t.powf(1.0 / alpha),
        Variant::StableSum {
            alpha,
            beta,
            weight_a,
        } => t.powf(1.0 / alpha).max(weight_a * t.powf(1.0 / beta)),
    }
}

/// `n` equispaced radii on `[0, 10 t^{1/alpha}]`; refining `n -> 2n - 1` nests.
pub fn radius_grid(spec: &KernelSpec, t: f64, n: usize) -> Vec<f64> {
    let top = 10.0 * time_scale(spec, t);
    (0..n).map(|i| top * i as f64 / (n - 1).max(1) as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinedWitness {
    pub coarse: RatioWitness,
    pub fine: RatioWitness,
    /// `|fine - coarse| / coarse`.
    pub drift: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PointInequality {
    ThreeP,
    FiveP,
}

/// The witness on an `n`-point grid and on its nested refinement.
pub fn refined_witness(
    which: PointInequality,
    spec: &KernelSpec,
    t: f64,
    s: f64,
    n: usize,
    cfg: &QuadratureConfig,
) -> Result<RefinedWitness> {
    let run = |m: usize| {
        let g = radius_grid(spec, t, m);
        match which {
            PointInequality::ThreeP => check_3p(spec, t, s, &g, cfg),
            PointInequality::FiveP => check_5p(spec, t, s, &g, cfg),
        }
    };
    let coarse = run(n)?;
    let fine = run(2 * n - 1)?;
    Ok(RefinedWitness {
        coarse,
        fine,
        drift: ((fine.max_ratio - coarse.max_ratio) / coarse.max_ratio).abs(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarCheck {
    pub checked: usize,
    /// Pairs outside `-b <= a <= 0, b >= 0`.
    pub skipped: usize,
    pub violations: usize,
    pub worst_a: f64,
    pub worst_b: f64,
    /// Smallest slack of the two inequalities relative to their size.
    pub min_slack: f64,
}

/// `-a <= e^{-a} - 1 <= -a (1 + b e^b / 2)` for every admissible pair.
pub fn check_scalar_inequality(a_grid: &[f64], b_grid: &[f64]) -> ScalarCheck {
    let mut out = ScalarCheck {
        checked: 0,
        skipped: 0,
        violations: 0,
        worst_a: f64::NAN,
        worst_b: f64::NAN,
        min_slack: f64::INFINITY,
    };
    for &b in b_grid {
        for &a in a_grid {
            if !(b >= 0.0 && a <= 0.0 && a >= -b) {
                out.skipped += 1;
                continue;
            }
            out.checked += 1;
            let lower = -a;
            let mid = (-a).exp_m1();
            let upper = -a * (1.0 + 0.5 * b * b.exp());
            let tol = 4.0 * f64::EPSILON * upper.abs();
            let scale = upper.abs().max(f64::MIN_POSITIVE);
            let slack = ((mid - lower) / scale).min((upper - mid) / scale);
            if slack < out.min_slack {
                out.min_slack = slack;
                out.worst_a = a;
                out.worst_b = b;
            }
            if mid < lower - tol || mid > upper + tol {
                out.violations += 1;
            }
        }
    }
    out
}

/// `n_b` values of `b` on `[0, b_max]` times `n_f` values of `a = -f b`, `f` on `[0, 1]`.
pub fn dense_scalar_check(b_max: f64, n_b: usize, n_f: usize) -> ScalarCheck {
    let mut total = check_scalar_inequality(&[], &[]);
    for i in 0..n_b {
        let b = b_max * i as f64 / (n_b - 1).max(1) as f64;
        let a: Vec<f64> = (0..n_f).map(|j| -b * j as f64 / (n_f - 1).max(1) as f64).collect();
        let c = check_scalar_inequality(&a, &[b]);
        total.checked += c.checked;
        total.skipped += c.skipped;
        total.violations += c.violations;
        if c.min_slack < total.min_slack {
            total.min_slack = c.min_slack;
            total.worst_a = c.worst_a;
            total.worst_b = c.worst_b;
        }
    }
    total
}

/// Radial integral `omega_d int_0^R r^{power + d - 1} p_t(r) dr` on geometric panels.
fn radial_moment_to(spec: &KernelSpec, t: f64, power: f64, lo: f64, hi: f64, cfg: &QuadratureConfig) -> Result<f64> {
    let d = spec.dimension;
    let k = fixed_time_kernel(spec, t, cfg)?;
    let mut breaks = vec![0.0, lo];
    while *breaks.last().expect("nonempty") < hi {
        let next = (2.0 * breaks.last().expect("nonempty")).min(hi);
        breaks.push(next);
    }
    let rule = CompositeRule::gauss_legendre(&breaks, 16);
    let terms: Vec<f64> = rule
        .nodes
        .par_iter()
        .zip(&rule.weights)
        .map(|(&r, &w)| Ok(w * r.powf(power + d as f64 - 1.0) * k.eval(r)?))
        .collect::<Result<_>>()?;
    Ok(sphere_area(d) * pairwise_sum(&terms))
}

/// Coefficient `c` of the tail `p_t(r) ~ t c r^{-d-index}`, per stable component.
fn tail_terms(spec: &KernelSpec) -> Vec<(f64, f64)> {
    let d = spec.dimension;
    match spec.variant {
        Variant::Stable { alpha } if alpha < 2.0 => vec![(alpha, standard_generator_constant(d, alpha))],
        Variant::StableSum {
            alpha,
            beta,
            weight_a,
        } => vec![
            (alpha, standard_generator_constant(d, alpha)),
            (beta, weight_a.powf(beta) * standard_generator_constant(d, beta)),
        ],
        _ => Vec::new(),
    }
}

fn truncation_radius(spec: &KernelSpec, t: f64) -> f64 {
    let scale = time_scale(spec, t);
    match spec.variant {
        Variant::Relativistic { alpha, mass_m } => 1e3 * scale + 80.0 / mass_m.powf(1.0 / alpha),
        Variant::Stable { alpha } if alpha == 2.0 => 40.0 * scale,
        _ => 1e5 * scale,
    }
}

/// `|omega_d int_0^inf p_t(r) r^{d-1} dr - 1|`, with the power-law tail added analytically.
pub fn normalization_defect(spec: &KernelSpec, t: f64, cfg: &QuadratureConfig) -> Result<f64> {
    spec.validate()?;
    let hi = truncation_radius(spec, t);
    let body = radial_moment_to(spec, t, 0.0, 1e-6 * time_scale(spec, t), hi, cfg)?;
    let d = spec.dimension;
    let tail: f64 = tail_terms(spec)
        .iter()
        .map(|&(idx, c)| sphere_area(d) * t * c * hi.powf(-idx) / idx)
        .sum();
    Ok((body + tail - 1.0).abs())
}

/// `E |X_1|^gamma` of the `alpha`-stable law in `R^d`.
///
/// The radial integral runs to `R = 10^4` with the tail `c r^{-d-alpha}`
/// added analytically. For `gamma >= alpha` the truncated integral is
/// doubled in `R` and its growth reported as the divergence diagnosis.
pub fn check_fractional_moment(alpha: f64, gamma: f64, d: usize, cfg: &QuadratureConfig) -> Result<f64> {
    let spec = KernelSpec::stable(alpha, d)?;
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(invalid(format!("moment order must be positive, got {gamma}")));
    }
    let lo = 1e-6;
    if alpha < 2.0 && gamma >= alpha {
        let r0 = 1e3;
        let a = radial_moment_to(&spec, 1.0, gamma, lo, r0, cfg)?;
        let b = radial_moment_to(&spec, 1.0, gamma, lo, 2.0 * r0, cfg)?;
        let c = radial_moment_to(&spec, 1.0, gamma, lo, 4.0 * r0, cfg)?;
        return Err(NhtError::MomentInfinite(format!(
            "E|X_1|^{gamma} with alpha = {alpha}: truncated integral {a:.6} -> {b:.6} -> {c:.6} under cutoff doubling, increments ratio {:.4}",
            (c - b) / (b - a)
        )));
    }
    let hi = if alpha == 2.0 { 40.0 } else { 1e4 };
    let body = radial_moment_to(&spec, 1.0, gamma, lo, hi, cfg)?;
    let head = sphere_area(d) * stable_p1_zero(alpha, d) * lo.powf(gamma + d as f64) / (gamma + d as f64);
    let tail: f64 = tail_terms(&spec)
        .iter()
        .map(|&(idx, c)| sphere_area(d) * c * hi.powf(gamma - idx) / (idx - gamma))
        .sum();
    Ok(head + body + tail)
}

/// Largest relative deviation from `p_t(r) = t^{-d/alpha} p_1(t^{-1/alpha} r)`
/// (stable) or `p^{(m)}_t(r) = m^{d/alpha} p^{(1)}_{m t}(m^{1/alpha} r)` (relativistic).
pub fn scaling_defect(spec: &KernelSpec, cfg: &QuadratureConfig) -> Result<f64> {
    spec.validate()?;
    let df = spec.dimension as f64;
    let mut worst: f64 = 0.0;
    for &t in &[0.1, 0.5, 1.0] {
        for &r in &[0.0, 0.05, 0.3, 1.0, 3.0] {
            let (lhs, rhs) = match spec.variant {
                Variant::Stable { alpha } => (
                    eval_kernel(spec, t, r, cfg)?,
                    t.powf(-df / alpha) * eval_kernel(spec, 1.0, t.powf(-1.0 / alpha) * r, cfg)?,
                ),
                Variant::Relativistic { alpha, mass_m } => {
                    let unit = KernelSpec::relativistic(alpha, 1.0, spec.dimension)?;
                    (
                        eval_kernel(spec, t, r, cfg)?,
                        mass_m.powf(df / alpha) * eval_kernel(&unit, mass_m * t, mass_m.powf(1.0 / alpha) * r, cfg)?,
                    )
                }
                Variant::StableSum { .. } => {
                    return Err(NhtError::Unsupported("sums of stables have no single scaling law".into()))
                }
            };
            worst = worst.max(((lhs - rhs) / rhs).abs());
        }
    }
    Ok(worst)
}

/// In `d = 1`, the largest relative deviation of `(p_s * p_{t-s})(x)` from `p_t(x)`
/// over a few `x`, the convolution by adaptive quadrature.
pub fn semigroup_defect(spec: &KernelSpec, t: f64, s: f64, cfg: &QuadratureConfig) -> Result<f64> {
    check_times(spec, t, s).or_else(|e| match e {
        NhtError::OutOfValidityRange(_) => Ok(()),
        e => Err(e),
    })?;
    if spec.dimension != 1 {
        return Err(NhtError::Unsupported("semigroup check is one-dimensional".into()));
    }
    let ks = fixed_time_kernel(spec, s, cfg)?;
    let kr = fixed_time_kernel(spec, t - s, cfg)?;
    let kt = fixed_time_kernel(spec, t, cfg)?;
    let scale = time_scale(spec, t);
    let big = 1e4 * scale;
    let mut worst: f64 = 0.0;
    for &x in &[0.0, 0.5 * scale, 2.0 * scale] {
        let f = |y: f64| ks.eval(y.abs()).unwrap_or(f64::NAN) * kr.eval((x - y).abs()).unwrap_or(f64::NAN);
        let mut pieces = vec![-big, -scale, 0.0, x.max(1e-300), scale + x, big];
        pieces.dedup();
        let mut total = 0.0;
        for w in pieces.windows(2) {
            if w[1] > w[0] {
                total += quadrature::integrate(f, w[0], w[1], 1e-14, 1e-8, 4000)?.value;
            }
        }
        if total.is_nan() {
            return Err(NhtError::Internal("kernel evaluation failed inside convolution".into()));
        }
        let exact = kt.eval(x)?;
        worst = worst.max(((total - exact) / exact).abs());
    }
    Ok(worst)
}

/// Largest relative deviation between `int G(s, r) eta_t(s) ds`, computed
/// from the subordinator density directly, and the kernel.
pub fn roundtrip_defect(spec: &KernelSpec, cfg: &QuadratureConfig) -> Result<f64> {
    spec.validate()?;
    let (sub, alpha) = match spec.variant {
        Variant::Stable { alpha } if alpha < 2.0 => (SubordinatorSpec::stable(alpha / 2.0)?, alpha),
        Variant::Relativistic { alpha, mass_m } => (SubordinatorSpec::tempered(alpha, mass_m)?, alpha),
        _ => return Err(NhtError::Unsupported("round trip needs a stable or relativistic kernel with alpha < 2".into())),
    };
    let df = spec.dimension as f64;
    let mut worst: f64 = 0.0;
    for &t in &[0.1f64, 0.5, 1.0] {
        for &r in &[0.0, 0.3, 1.5] {
            let centre = (2.0 / alpha) * t.ln();
            let g = |s: f64| {
                let eta = eta_density(&sub, t, s, cfg).map(|v| v.value).unwrap_or(f64::NAN);
                (4.0 * PI * s).powf(-df / 2.0) * (-r * r / (4.0 * s)).exp() * eta
            };
            let mut val = 0.0;
            let mut u = centre - 25.0;
            while u < centre + 80.0 {
                val += quadrature::integrate_log(&g, u, u + 5.0, 1e-18, 1e-9, 400)?.value;
                u += 5.0;
            }
            let exact = eval_kernel(spec, t, r, cfg)?;
            worst = worst.max(((val - exact) / exact).abs());
        }
    }
    Ok(worst)
}

/// Radii where `p_t(r) > p_t(0)` and adjacent pairs where the kernel increases.
pub fn sup_and_monotonicity_violations(spec: &KernelSpec, t: f64, cfg: &QuadratureConfig) -> Result<(usize, usize)> {
    spec.validate()?;
    let p0 = kernel_at_zero(spec, t, cfg)?;
    let k = fixed_time_kernel(spec, t, cfg)?;
    let scale = time_scale(spec, t);
    let radii: Vec<f64> = (0..200).map(|i| scale * 1e-3 * 1.06f64.powi(i)).collect();
    let vals: Vec<f64> = radii.iter().map(|&r| k.eval(r)).collect::<Result<_>>()?;
    let sup = vals.iter().filter(|v| **v > p0 * (1.0 + 1e-9)).count();
    let mono = vals.windows(2).filter(|w| w[1] > w[0] * (1.0 + 1e-12)).count();
    Ok((sup, mono))
}

/// `e^{-mt} t^{d/alpha} p^{(m)}_t(0)` for each `t`.
pub fn relativistic_limit(alpha: f64, mass_m: f64, d: usize, times: &[f64], cfg: &QuadratureConfig) -> Result<Vec<f64>> {
    let spec = KernelSpec::relativistic(alpha, mass_m, d)?;
    times
        .iter()
        .map(|&t| Ok((-mass_m * t).exp() * t.powf(d as f64 / alpha) * kernel_at_zero(&spec, t, cfg)?))
        .collect()
}

/// A named family of checks, selectable from the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    #[serde(rename = "3p")]
    ThreeP,
    #[serde(rename = "5p")]
    FiveP,
    Scalar,
    Moment,
    Normalization,
    Scaling,
    Semigroup,
    Roundtrip,
    SupMonotone,
    RelativisticLimit,
    Envelope,
}

impl CheckKind {
    pub const ALL: [CheckKind; 11] = [
        CheckKind::ThreeP,
        CheckKind::FiveP,
        CheckKind::Scalar,
        CheckKind::Moment,
        CheckKind::Normalization,
        CheckKind::Scaling,
        CheckKind::Semigroup,
        CheckKind::Roundtrip,
        CheckKind::SupMonotone,
        CheckKind::RelativisticLimit,
        CheckKind::Envelope,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            CheckKind::ThreeP => "3p",
            CheckKind::FiveP => "5p",
            CheckKind::Scalar => "scalar",
            CheckKind::Moment => "moment",
            CheckKind::Normalization => "normalization",
            CheckKind::Scaling => "scaling",
            CheckKind::Semigroup => "semigroup",
            CheckKind::Roundtrip => "roundtrip",
            CheckKind::SupMonotone => "sup_monotone",
            CheckKind::RelativisticLimit => "relativistic_limit",
            CheckKind::Envelope => "envelope",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        CheckKind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == name)
            .ok_or_else(|| {
                let names: Vec<&str> = CheckKind::ALL.iter().map(|k| k.name()).collect();
                invalid(format!("unknown check `{name}`; expected one of {}", names.join(", ")))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessRecord {
    pub check: String,
    pub params: serde_json::Value,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessReport {
    pub records: Vec<WitnessRecord>,
    pub all_passed: bool,
}

impl HarnessReport {
    pub fn failures(&self) -> impl Iterator<Item = &WitnessRecord> {
        self.records.iter().filter(|r| !r.passed)
    }
}

fn record(check: CheckKind, params: serde_json::Value, value: f64, threshold: f64, passed: bool, detail: String) -> WitnessRecord {
    WitnessRecord {
        check: check.name().to_string(),
        params,
        value,
        threshold,
        passed,
        detail,
    }
}

fn failed(check: CheckKind, params: serde_json::Value, e: NhtError) -> WitnessRecord {
    record(check, params, f64::NAN, f64::NAN, false, e.to_string())
}

const ALPHAS: [f64; 3] = [0.6, 1.0, 1.5];
const TIMES: [f64; 3] = [0.1, 0.5, 1.0];

/// Operators of the default matrix: three stable indices, a sum and a
/// relativistic kernel, each in one and two dimensions.
pub fn default_families() -> Vec<KernelSpec> {
    let mut out = Vec::new();
    for d in [1, 2] {
        for a in ALPHAS {
            out.push(KernelSpec::stable(a, d).expect("valid"));
        }
        out.push(KernelSpec::stable_sum(1.5, 0.5, 1.0, d).expect("valid"));
        out.push(KernelSpec::relativistic(1.0, 1.0, d).expect("valid"));
    }
    out
}

fn spec_json(spec: &KernelSpec) -> serde_json::Value {
    serde_json::to_value(spec).unwrap_or(serde_json::Value::Null)
}

fn point_records(which: PointInequality, families: &[KernelSpec], cfg: &QuadratureConfig) -> Vec<WitnessRecord> {
    let kind = match which {
        PointInequality::ThreeP => CheckKind::ThreeP,
        PointInequality::FiveP => CheckKind::FiveP,
    };
    let mut out = Vec::new();
    for &spec in families {
        for t in TIMES {
            for frac in [0.25, 0.5] {
                let s = frac * t;
                let params = json!({"spec": spec_json(&spec), "t": t, "s": s});
                match refined_witness(which, &spec, t, s, 65, cfg) {
                    Ok(w) => {
                        let mut passed = w.drift < 0.01 && w.fine.max_ratio.is_finite();
                        let mut detail = format!("max ratio {:.6} at r = {:.4}", w.fine.max_ratio, w.fine.argmax_radius);
                        if let (Variant::Stable { alpha }, true) = (spec.variant, frac == 0.5) {
                            let d = spec.dimension as f64;
                            let expect = match which {
                                PointInequality::ThreeP => 2f64.powf(d / alpha),
                                PointInequality::FiveP => 2f64.powf(d / alpha) / 2.0,
                            };
                            let rel = ((w.fine.max_ratio - expect) / expect).abs();
                            passed &= rel < 1e-6;
                            detail.push_str(&format!("; on-diagonal value {expect:.6}, relative deviation {rel:.1e}"));
                        }
                        out.push(record(kind, params, w.drift, 0.01, passed, detail));
                    }
                    Err(e) => out.push(failed(kind, params, e)),
                }
            }
        }
    }
    out
}

/// Runs the selected checks over the default parameter matrix.
pub fn run_matrix(selection: &[CheckKind], cfg: &QuadratureConfig) -> HarnessReport {
    run_matrix_with(selection, &default_families(), cfg)
}

/// As [`run_matrix`], with the kernel-wide checks (3P, 5P, normalization,
/// sup bound and monotonicity, envelope) run over `families`.
pub fn run_matrix_with(selection: &[CheckKind], families: &[KernelSpec], cfg: &QuadratureConfig) -> HarnessReport {
    let mut records = Vec::new();
    for &kind in selection {
        match kind {
            CheckKind::ThreeP => records.extend(point_records(PointInequality::ThreeP, families, cfg)),
            CheckKind::FiveP => records.extend(point_records(PointInequality::FiveP, families, cfg)),
            CheckKind::Scalar => {
                let c = dense_scalar_check(5.0, 100, 100);
                records.push(record(
                    kind,
                    json!({"b_max": 5.0, "points": c.checked}),
                    c.violations as f64,
                    0.0,
                    c.violations == 0 && c.checked == 10_000,
                    format!("min relative slack {:.3e} at a = {}, b = {}", c.min_slack, c.worst_a, c.worst_b),
                ));
            }
            CheckKind::Moment => {
                let params = json!({"alpha": 1.0, "gamma": 0.5, "d": 1});
                match check_fractional_moment(1.0, 0.5, 1, cfg) {
                    Ok(m) => {
                        let dev = (m - 2f64.sqrt()).abs();
                        records.push(record(kind, params, dev, 1e-4, dev < 1e-4, format!("moment {m:.8}, exact sqrt(2)")));
                    }
                    Err(e) => records.push(failed(kind, params, e)),
                }
                let params = json!({"alpha": 1.0, "gamma": 1.0, "d": 1});
                let r = check_fractional_moment(1.0, 1.0, 1, cfg);
                let ok = matches!(r, Err(NhtError::MomentInfinite(_)));
                let detail = match r {
                    Err(e) => e.to_string(),
                    Ok(v) => format!("returned a finite value {v}"),
                };
                records.push(record(kind, params, if ok { 1.0 } else { 0.0 }, 1.0, ok, detail));
                for a in ALPHAS {
                    let g = 0.5 * a;
                    let params = json!({"alpha": a, "gamma": g, "d": 1});
                    match check_fractional_moment(a, g, 1, cfg) {
                        Ok(m) => records.push(record(kind, params, m, f64::INFINITY, m.is_finite() && m > 0.0, "finite".into())),
                        Err(e) => records.push(failed(kind, params, e)),
                    }
                }
            }
            CheckKind::Normalization => {
                for &spec in families {
                    for t in [0.5, 1.0, 2.0] {
                        let params = json!({"spec": spec_json(&spec), "t": t});
                        match normalization_defect(&spec, t, cfg) {
                            Ok(v) => records.push(record(kind, params, v, 1e-4, v < 1e-4, "|mass - 1|".into())),
                            Err(e) => records.push(failed(kind, params, e)),
                        }
                    }
                }
            }
            CheckKind::Scaling => {
                let mut specs: Vec<KernelSpec> = ALPHAS.iter().map(|&a| KernelSpec::stable(a, 1).expect("valid")).collect();
                specs.extend(ALPHAS.iter().map(|&a| KernelSpec::relativistic(a, 2.0, 1).expect("valid")));
                for spec in specs {
                    let params = json!({"spec": spec_json(&spec)});
                    let tol = 10.0 * cfg.rel_tol;
                    match scaling_defect(&spec, cfg) {
                        Ok(v) => records.push(record(kind, params, v, tol, v < tol, "max relative deviation".into())),
                        Err(e) => records.push(failed(kind, params, e)),
                    }
                }
            }
            CheckKind::Semigroup => {
                for a in ALPHAS {
                    let spec = KernelSpec::stable(a, 1).expect("valid");
                    for t in TIMES {
                        let params = json!({"spec": spec_json(&spec), "t": t, "s": 0.4 * t});
                        match semigroup_defect(&spec, t, 0.4 * t, cfg) {
                            Ok(v) => records.push(record(kind, params, v, 1e-3, v < 1e-3, "max relative deviation".into())),
                            Err(e) => records.push(failed(kind, params, e)),
                        }
                    }
                }
            }
            CheckKind::Roundtrip => {
                let mut specs: Vec<KernelSpec> = ALPHAS.iter().map(|&a| KernelSpec::stable(a, 1).expect("valid")).collect();
                specs.push(KernelSpec::relativistic(1.0, 1.0, 1).expect("valid"));
                specs.push(KernelSpec::relativistic(1.5, 1.0, 1).expect("valid"));
                for spec in specs {
                    let params = json!({"spec": spec_json(&spec)});
                    match roundtrip_defect(&spec, cfg) {
                        Ok(v) => records.push(record(kind, params, v, 1e-4, v < 1e-4, "max relative deviation".into())),
                        Err(e) => records.push(failed(kind, params, e)),
                    }
                }
            }
            CheckKind::SupMonotone => {
                for &spec in families {
                    for t in TIMES {
                        let params = json!({"spec": spec_json(&spec), "t": t});
                        match sup_and_monotonicity_violations(&spec, t, cfg) {
                            Ok((a, b)) => records.push(record(
                                kind,
                                params,
                                (a + b) as f64,
                                0.0,
                                a + b == 0,
                                format!("{a} sup-bound and {b} monotonicity violations"),
                            )),
                            Err(e) => records.push(failed(kind, params, e)),
                        }
                    }
                }
            }
            CheckKind::RelativisticLimit => {
                let times = [1e-1, 1e-2, 1e-3];
                let params = json!({"alpha": 1.0, "m": 1.0, "d": 1, "t": times});
                match relativistic_limit(1.0, 1.0, 1, &times, cfg) {
                    Ok(v) => {
                        let target = 1.0 / PI;
                        let devs: Vec<f64> = v.iter().map(|x| (x / target - 1.0).abs()).collect();
                        let monotone = devs.windows(2).all(|w| w[1] <= w[0]);
                        records.push(record(
                            kind,
                            params,
                            devs[2],
                            0.01,
                            devs[2] < 0.01 && monotone,
                            format!("relative deviations {devs:?}"),
                        ));
                    }
                    Err(e) => records.push(failed(kind, params, e)),
                }
            }
            CheckKind::Envelope => {
                for &spec in families.iter().filter(|s| s.dimension == 1) {
                    let params = json!({"spec": spec_json(&spec)});
                    match envelope_ratios(&spec, cfg) {
                        Ok(r) => {
                            let lo = r.iter().map(|x| x.2).fold(f64::INFINITY, f64::min);
                            let hi = r.iter().map(|x| x.2).fold(0.0, f64::max);
                            let spread = hi / lo;
                            records.push(record(
                                kind,
                                params,
                                spread,
                                1e3,
                                lo > 0.0 && spread.is_finite() && spread < 1e3,
                                format!("ratio range [{lo:.4}, {hi:.4}]"),
                            ));
                        }
                        Err(e) => records.push(failed(kind, params, e)),
                    }
                }
            }
        }
    }
    let all_passed = records.iter().all(|r| r.passed);
    HarnessReport { records, all_passed }
}
