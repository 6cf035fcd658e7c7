//! Potentials with closed-form norms: Gaussian wells, C^2 compact bumps and
//! finite sums of them.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, NhtError, Result};
use crate::quadrature;
use crate::rng::SeedStream;
use crate::special::{gamma, sphere_area};

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    /// `-depth * exp(-|x - center|^2 / width^2)`.
    GaussianWell { depth: f64, width: f64, center: Vec<f64> },
    /// `height * (1 - |x - center|^2 / radius^2)^2` inside the ball, zero outside.
    CompactBump { height: f64, radius: f64, center: Vec<f64> },
    Sum(Vec<Shape>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PotentialJson", into = "PotentialJson")]
pub struct PotentialSpec {
    pub shape: Shape,
    pub dimension: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PotentialJson {
    shape: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    depth: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    height: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    center: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    components: Option<Vec<PotentialJson>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    d: Option<usize>,
}

fn shape_from_json(j: PotentialJson, d: usize) -> Result<Shape> {
    let need = |v: Option<f64>, name: &str| v.ok_or_else(|| invalid(format!("shape `{}` needs `{name}`", j.shape)));
    let forbid = |present: bool, name: &str| {
        if present {
            Err(invalid(format!("field `{name}` does not apply to shape `{}`", j.shape)))
        } else {
            Ok(())
        }
    };
    if let Some(dj) = j.d {
        if dj != d {
            return Err(invalid(format!("component dimension {dj} differs from {d}")));
        }
    }
    let center = || j.center.clone().unwrap_or_else(|| vec![0.0; d]);
    match j.shape.as_str() {
        "gaussian_well" => {
            forbid(j.height.is_some(), "height")?;
            forbid(j.radius.is_some(), "radius")?;
            forbid(j.components.is_some(), "components")?;
            Ok(Shape::GaussianWell {
                depth: need(j.depth, "depth")?,
                width: need(j.width, "width")?,
                center: center(),
            })
        }
        "compact_bump" => {
            forbid(j.depth.is_some(), "depth")?;
            forbid(j.width.is_some(), "width")?;
            forbid(j.components.is_some(), "components")?;
            Ok(Shape::CompactBump {
                height: need(j.height, "height")?,
                radius: need(j.radius, "radius")?,
                center: center(),
            })
        }
        "sum" => {
            for (present, name) in [
                (j.depth.is_some(), "depth"),
                (j.width.is_some(), "width"),
                (j.height.is_some(), "height"),
                (j.radius.is_some(), "radius"),
                (j.center.is_some(), "center"),
            ] {
                forbid(present, name)?;
            }
            let parts = j.components.clone().unwrap_or_default();
            Ok(Shape::Sum(
                parts
                    .into_iter()
                    .map(|p| shape_from_json(p, d))
                    .collect::<Result<Vec<_>>>()?,
            ))
        }
        other => Err(invalid(format!("unknown potential shape `{other}`"))),
    }
}

fn shape_to_json(s: &Shape, d: Option<usize>) -> PotentialJson {
    let blank = |shape: &str| PotentialJson {
        shape: shape.into(),
        depth: None,
        width: None,
        height: None,
        radius: None,
        center: None,
        components: None,
        d,
    };
    match s {
        Shape::GaussianWell { depth, width, center } => PotentialJson {
            depth: Some(*depth),
            width: Some(*width),
            center: Some(center.clone()),
            ..blank("gaussian_well")
        },
        Shape::CompactBump { height, radius, center } => PotentialJson {
            height: Some(*height),
            radius: Some(*radius),
            center: Some(center.clone()),
            ..blank("compact_bump")
        },
        Shape::Sum(parts) => PotentialJson {
            components: Some(parts.iter().map(|p| shape_to_json(p, None)).collect()),
            ..blank("sum")
        },
    }
}

impl TryFrom<PotentialJson> for PotentialSpec {
    type Error = NhtError;

    fn try_from(j: PotentialJson) -> Result<Self> {
        let d = j.d.ok_or_else(|| invalid("potential needs a dimension `d`"))?;
        let shape = shape_from_json(j, d)?;
        let spec = PotentialSpec { shape, dimension: d };
        spec.validate()?;
        Ok(spec)
    }
}

impl From<PotentialSpec> for PotentialJson {
    fn from(p: PotentialSpec) -> Self {
        shape_to_json(&p.shape, Some(p.dimension))
    }
}

/// Norms and integrals of a potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub l1: f64,
    pub sup: f64,
    pub int_v: f64,
    pub int_v2: f64,
    /// Names of the fields obtained by numerical quadrature rather than in closed form.
    pub numeric: Vec<String>,
}

fn beta_fn(a: f64, b: f64) -> f64 {
    gamma(a) * gamma(b) / gamma(a + b)
}

impl PotentialSpec {
    pub fn gaussian_well(depth: f64, width: f64, center: Vec<f64>) -> Result<Self> {
        let d = center.len();
        let s = Self {
            shape: Shape::GaussianWell { depth, width, center },
            dimension: d,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn compact_bump(height: f64, radius: f64, center: Vec<f64>) -> Result<Self> {
        let d = center.len();
        let s = Self {
            shape: Shape::CompactBump { height, radius, center },
            dimension: d,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn sum(parts: Vec<PotentialSpec>, d: usize) -> Result<Self> {
        if parts.iter().any(|p| p.dimension != d) {
            return Err(invalid("all summands must share the dimension"));
        }
        let s = Self {
            shape: Shape::Sum(parts.into_iter().map(|p| p.shape).collect()),
            dimension: d,
        };
        s.validate()?;
        Ok(s)
    }

    /// The zero potential (an empty sum).
    pub fn zero(d: usize) -> Self {
        Self {
            shape: Shape::Sum(Vec::new()),
            dimension: d,
        }
    }

    /// Multiplies the potential by `eps`.
    pub fn scaled(&self, eps: f64) -> Self {
        fn go(s: &Shape, eps: f64) -> Shape {
            match s {
                Shape::GaussianWell { depth, width, center } => Shape::GaussianWell {
                    depth: depth * eps,
                    width: *width,
                    center: center.clone(),
                },
                Shape::CompactBump { height, radius, center } => Shape::CompactBump {
                    height: height * eps,
                    radius: *radius,
                    center: center.clone(),
                },
                Shape::Sum(parts) => Shape::Sum(parts.iter().map(|p| go(p, eps)).collect()),
            }
        }
        Self {
            shape: go(&self.shape, eps),
            dimension: self.dimension,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(invalid("dimension must be at least 1"));
        }
        fn go(s: &Shape, d: usize) -> Result<()> {
            match s {
                Shape::GaussianWell { depth, width, center } => {
                    if !(depth.is_finite() && *width > 0.0 && width.is_finite()) {
                        return Err(invalid(format!("gaussian well needs finite depth and width > 0, got {depth}, {width}")));
                    }
                    if center.len() != d || center.iter().any(|c| !c.is_finite()) {
                        return Err(invalid(format!("center must have {d} finite coordinates")));
                    }
                }
                Shape::CompactBump { height, radius, center } => {
                    if !(height.is_finite() && *radius > 0.0 && radius.is_finite()) {
                        return Err(invalid(format!("bump needs finite height and radius > 0, got {height}, {radius}")));
                    }
                    if center.len() != d || center.iter().any(|c| !c.is_finite()) {
                        return Err(invalid(format!("center must have {d} finite coordinates")));
                    }
                }
                Shape::Sum(parts) => {
                    for p in parts {
                        go(p, d)?;
                    }
                }
            }
            Ok(())
        }
        go(&self.shape, self.dimension)
    }

    /// Non-sum components in depth-first order.
    pub fn leaves(&self) -> Vec<&Shape> {
        fn go<'a>(s: &'a Shape, out: &mut Vec<&'a Shape>) {
            match s {
                Shape::Sum(parts) => parts.iter().for_each(|p| go(p, out)),
                leaf => out.push(leaf),
            }
        }
        let mut out = Vec::new();
        go(&self.shape, &mut out);
        out
    }

    /// Largest leaf width or radius; zero for the empty sum.
    pub fn length_scale(&self) -> f64 {
        self.leaves()
            .into_iter()
            .map(|l| match l {
                Shape::GaussianWell { width, .. } => *width,
                Shape::CompactBump { radius, .. } => *radius,
                Shape::Sum(_) => 0.0,
            })
            .fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.leaves().iter().all(|l| match l {
            Shape::GaussianWell { depth, .. } => *depth == 0.0,
            Shape::CompactBump { height, .. } => *height == 0.0,
            Shape::Sum(_) => true,
        })
    }

    /// `V <= 0` everywhere, decided from the shape parameters.
    pub fn is_nonpositive(&self) -> bool {
        self.leaves().iter().all(|l| match l {
            Shape::GaussianWell { depth, .. } => *depth >= 0.0,
            Shape::CompactBump { height, .. } => *height <= 0.0,
            Shape::Sum(_) => true,
        })
    }

    pub fn is_nonnegative(&self) -> bool {
        self.leaves().iter().all(|l| match l {
            Shape::GaussianWell { depth, .. } => *depth <= 0.0,
            Shape::CompactBump { height, .. } => *height >= 0.0,
            Shape::Sum(_) => true,
        })
    }

    /// Centre and radius of a ball outside which `|V|` is below `1e-16 sup|V|`.
    pub fn support_ball(&self) -> (Vec<f64>, f64) {
        let leaves = self.leaves();
        let d = self.dimension;
        if leaves.is_empty() {
            return (vec![0.0; d], 0.0);
        }
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for l in &leaves {
            let (c, r) = leaf_ball(l);
            for i in 0..d {
                lo[i] = lo[i].min(c[i] - r);
                hi[i] = hi[i].max(c[i] + r);
            }
        }
        let center: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
        let radius = lo
            .iter()
            .zip(&hi)
            .map(|(a, b)| 0.5 * (b - a))
            .map(|h| h * h)
            .sum::<f64>()
            .sqrt();
        (center, radius)
    }

    /// `|V|`-weighted mean and per-coordinate second central moment.
    pub fn spread(&self) -> (Vec<f64>, f64) {
        let d = self.dimension;
        let df = d as f64;
        let mut mass = 0.0;
        let mut mean = vec![0.0; d];
        let mut second = 0.0;
        let parts: Vec<(f64, Vec<f64>, f64)> = self
            .leaves()
            .into_iter()
            .map(|l| match l {
                Shape::GaussianWell { width, center, .. } => (leaf_l1(l, d), center.clone(), 0.5 * width * width),
                Shape::CompactBump { radius, center, .. } => {
                    let e_rho2 = beta_fn((df + 2.0) / 2.0, 3.0) / beta_fn(df / 2.0, 3.0);
                    (leaf_l1(l, d), center.clone(), radius * radius * e_rho2 / df)
                }
                Shape::Sum(_) => unreachable!("leaves are not sums"),
            })
            .collect();
        for (w, c, _) in &parts {
            mass += w;
            for i in 0..d {
                mean[i] += w * c[i];
            }
        }
        if mass == 0.0 {
            return (vec![0.0; d], 0.0);
        }
        mean.iter_mut().for_each(|m| *m /= mass);
        for (w, c, v) in &parts {
            let off: f64 = c.iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / df;
            second += w * (v + off);
        }
        (mean, second / mass)
    }
}

fn dist2(x: &[f64], c: &[f64]) -> f64 {
    x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn leaf_ball(s: &Shape) -> (Vec<f64>, f64) {
    match s {
        Shape::GaussianWell { width, center, .. } => (center.clone(), 6.1 * width),
        Shape::CompactBump { radius, center, .. } => (center.clone(), *radius),
        Shape::Sum(_) => unreachable!("leaves are not sums"),
    }
}

fn eval_shape(s: &Shape, x: &[f64]) -> f64 {
    match s {
        Shape::GaussianWell { depth, width, center } => -depth * (-dist2(x, center) / (width * width)).exp(),
        Shape::CompactBump { height, radius, center } => {
            let q = dist2(x, center) / (radius * radius);
            if q >= 1.0 {
                0.0
            } else {
                height * (1.0 - q) * (1.0 - q)
            }
        }
        Shape::Sum(parts) => parts.iter().map(|p| eval_shape(p, x)).sum(),
    }
}

fn leaf_int(s: &Shape, d: usize) -> (f64, f64) {
    let df = d as f64;
    match s {
        Shape::GaussianWell { depth, width, .. } => (
            -depth * (PI.sqrt() * width).powf(df),
            depth * depth * ((PI / 2.0).sqrt() * width).powf(df),
        ),
        Shape::CompactBump { height, radius, .. } => {
            let vol = sphere_area(d) * radius.powf(df);
            (
                height * vol * 0.5 * beta_fn(df / 2.0, 3.0),
                height * height * vol * 0.5 * beta_fn(df / 2.0, 5.0),
            )
        }
        Shape::Sum(_) => unreachable!("leaves are not sums"),
    }
}

fn leaf_l1(s: &Shape, d: usize) -> f64 {
    leaf_int(s, d).0.abs()
}

fn leaf_amp(s: &Shape) -> f64 {
    match s {
        Shape::GaussianWell { depth, .. } => depth.abs(),
        Shape::CompactBump { height, .. } => height.abs(),
        Shape::Sum(_) => unreachable!("leaves are not sums"),
    }
}

fn leaf_lipschitz(s: &Shape) -> f64 {
    match s {
        Shape::GaussianWell { depth, width, .. } => depth.abs() * 2f64.sqrt() / width * (-0.5f64).exp(),
        Shape::CompactBump { height, radius, .. } => 8.0 * height.abs() / (3.0 * 3f64.sqrt() * radius),
        Shape::Sum(_) => unreachable!("leaves are not sums"),
    }
}

/// Cross integral of two Gaussian wells.
fn gaussian_cross(a: &Shape, b: &Shape, d: usize) -> Option<f64> {
    match (a, b) {
        (
            Shape::GaussianWell { depth: c1, width: s1, center: x1 },
            Shape::GaussianWell { depth: c2, width: s2, center: x2 },
        ) => {
            let p = 1.0 / (s1 * s1) + 1.0 / (s2 * s2);
            Some(c1 * c2 * (PI / p).powf(d as f64 / 2.0) * (-dist2(x1, x2) / (s1 * s1 + s2 * s2)).exp())
        }
        _ => None,
    }
}

/// Tensor Gauss–Legendre integral of `f` over the box `[lo, hi]`, `d <= 3`.
fn box_integral<F: Fn(&[f64]) -> f64>(f: F, lo: &[f64], hi: &[f64], panels: usize) -> Result<f64> {
    let d = lo.len();
    if d > 3 {
        return Err(NhtError::Unsupported(format!("numerical norms implemented for d <= 3, got {d}")));
    }
    let rules: Vec<quadrature::CompositeRule> = (0..d)
        .map(|i| quadrature::CompositeRule::uniform(lo[i], hi[i], (hi[i] - lo[i]) / panels as f64, 8))
        .collect();
    fn level<F: Fn(&[f64]) -> f64>(f: &F, rules: &[quadrature::CompositeRule], x: &mut Vec<f64>, k: usize) -> f64 {
        let rule = &rules[k];
        let mut terms = Vec::with_capacity(rule.len());
        for (node, w) in rule.nodes.iter().zip(&rule.weights) {
            x[k] = *node;
            let v = if k + 1 == rules.len() { f(x) } else { level(f, rules, x, k + 1) };
            terms.push(w * v);
        }
        quadrature::pairwise_sum(&terms)
    }
    let mut x = vec![0.0; d];
    Ok(level(&f, &rules, &mut x, 0))
}

fn panels_for(d: usize) -> usize {
    match d {
        1 => 400,
        2 => 120,
        _ => 40,
    }
}

/// Pointwise value `V(x)`.
pub fn eval_potential(spec: &PotentialSpec, x: &[f64]) -> f64 {
    eval_shape(&spec.shape, x)
}

/// `||V||_1`, `||V||_inf`, `int V` and `int V^2`.
pub fn exact_norms(spec: &PotentialSpec) -> Result<Norms> {
    spec.validate()?;
    let d = spec.dimension;
    let leaves = spec.leaves();
    let mut numeric = Vec::new();
    let mut int_v = 0.0;
    let mut int_v2 = 0.0;
    for l in &leaves {
        let (a, b) = leaf_int(l, d);
        int_v += a;
        int_v2 += b;
    }
    let (center, radius) = spec.support_ball();
    let lo: Vec<f64> = center.iter().map(|c| c - radius).collect();
    let hi: Vec<f64> = center.iter().map(|c| c + radius).collect();
    for i in 0..leaves.len() {
        for j in i + 1..leaves.len() {
            let cross = match gaussian_cross(leaves[i], leaves[j], d) {
                Some(v) => v,
                None => {
                    if !numeric.iter().any(|n| n == "int_v2") {
                        numeric.push("int_v2".to_string());
                    }
                    let (a, b) = (leaves[i], leaves[j]);
                    box_integral(|x| eval_shape(a, x) * eval_shape(b, x), &lo, &hi, panels_for(d))?
                }
            };
            int_v2 += 2.0 * cross;
        }
    }
    let one_signed = spec.is_nonpositive() || spec.is_nonnegative();
    let l1 = if one_signed {
        int_v.abs()
    } else {
        numeric.push("l1".to_string());
        box_integral(|x| eval_shape(&spec.shape, x).abs(), &lo, &hi, panels_for(d))?
    };
    let sup = if leaves.len() <= 1 {
        leaves.first().map(|l| leaf_amp(l)).unwrap_or(0.0)
    } else {
        numeric.push("sup".to_string());
        numeric_sup(spec, &lo, &hi)
    };
    Ok(Norms {
        l1,
        sup,
        int_v,
        int_v2,
        numeric,
    })
}

/// Grid search for `sup |V|` followed by coordinate refinement around the best node.
fn numeric_sup(spec: &PotentialSpec, lo: &[f64], hi: &[f64]) -> f64 {
    let d = spec.dimension;
    let n = match d {
        1 => 4001,
        2 => 201,
        _ => 41,
    };
    let mut best = 0.0;
    let mut arg = lo.to_vec();
    let mut idx = vec![0usize; d];
    let mut x = vec![0.0; d];
    loop {
        for i in 0..d {
            x[i] = lo[i] + (hi[i] - lo[i]) * idx[i] as f64 / (n - 1) as f64;
        }
        let v = eval_potential(spec, &x).abs();
        if v > best {
            best = v;
            arg.copy_from_slice(&x);
        }
        let mut k = 0;
        while k < d {
            idx[k] += 1;
            if idx[k] < n {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == d {
            break;
        }
    }
    let mut step: Vec<f64> = (0..d).map(|i| (hi[i] - lo[i]) / (n - 1) as f64).collect();
    for _ in 0..60 {
        for i in 0..d {
            for dir in [-1.0, 1.0] {
                let mut y = arg.clone();
                y[i] += dir * step[i];
                let v = eval_potential(spec, &y).abs();
                if v > best {
                    best = v;
                    arg = y;
                }
            }
            step[i] *= 0.7;
        }
    }
    best
}

/// A constant `M` with `|V(x) - V(y)| <= M |x - y|^gamma` for all `x, y`.
///
/// Uses `min(L r, osc) <= L^gamma osc^{1-gamma} r^gamma` with the Lipschitz
/// constant `L` and oscillation bound `osc` summed over the components.
pub fn holder_certificate(spec: &PotentialSpec, gamma: f64) -> Result<f64> {
    spec.validate()?;
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(invalid(format!("Holder order must lie in (0, 1], got {gamma}")));
    }
    let leaves = spec.leaves();
    let lip: f64 = leaves.iter().map(|l| leaf_lipschitz(l)).sum();
    let osc: f64 = leaves.iter().map(|l| leaf_amp(l)).sum();
    if lip == 0.0 {
        return Ok(0.0);
    }
    Ok(lip.powf(gamma) * osc.powf(1.0 - gamma))
}

/// Counts pairs violating the Hölder bound among `n` random pairs. Distances
/// are drawn log-uniformly so that both the small-scale and the
/// oscillation-dominated regimes are probed.
pub fn holder_violations(spec: &PotentialSpec, gamma: f64, m: f64, n: usize, seed: u64) -> usize {
    let d = spec.dimension;
    let (center, radius) = spec.support_ball();
    let radius = radius.max(1.0);
    let stream = SeedStream::new(seed).substream(0x486f_6c64);
    let mut rng = stream.rng(0);
    let mut violations = 0;
    let mut x = vec![0.0; d];
    let mut y = vec![0.0; d];
    for _ in 0..n {
        for i in 0..d {
            x[i] = center[i] + radius * (2.0 * rng.random::<f64>() - 1.0);
        }
        let dist = radius * 10f64.powf(-8.0 + 9.0 * rng.random::<f64>());
        let mut dir: Vec<f64> = (0..d).map(|_| rng.random::<f64>() - 0.5).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        dir.iter_mut().for_each(|v| *v /= norm);
        for i in 0..d {
            y[i] = x[i] + dist * dir[i];
        }
        let h: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let diff = (eval_potential(spec, &x) - eval_potential(spec, &y)).abs();
        // Allow for rounding in the two evaluations.
        if diff > m * h.powf(gamma) + 4.0 * f64::EPSILON * spec_scale(spec) {
            violations += 1;
        }
    }
    violations
}

fn spec_scale(spec: &PotentialSpec) -> f64 {
    spec.leaves().iter().map(|l| leaf_amp(l)).sum()
}

/// Integral of `|V|` over a box by tensor quadrature; used to cross-check `l1`.
pub fn numeric_l1(spec: &PotentialSpec, half_width: f64) -> Result<f64> {
    let (center, _) = spec.support_ball();
    let lo: Vec<f64> = center.iter().map(|c| c - half_width).collect();
    let hi: Vec<f64> = center.iter().map(|c| c + half_width).collect();
    box_integral(|x| eval_potential(spec, x).abs(), &lo, &hi, panels_for(spec.dimension))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn well() -> PotentialSpec {
        PotentialSpec::gaussian_well(1.0, 1.0, vec![0.0]).unwrap()
    }

    #[test]
    fn pointwise_examples() {
        assert_eq!(eval_potential(&well(), &[0.0]), -1.0);
        let bump = PotentialSpec::compact_bump(2.0, 1.5, vec![0.0, 0.0]).unwrap();
        assert_eq!(eval_potential(&bump, &[1.0, 1.2]), 0.0);
        let a = PotentialSpec::gaussian_well(1.0, 1.0, vec![-1.0]).unwrap();
        let b = PotentialSpec::gaussian_well(1.0, 1.0, vec![1.0]).unwrap();
        let s = PotentialSpec::sum(vec![a.clone(), b], 1).unwrap();
        assert_eq!(eval_potential(&s, &[0.0]), 2.0 * eval_potential(&a, &[0.0]));
    }

    #[test]
    fn gaussian_norms() {
        let n = exact_norms(&well()).unwrap();
        assert!((n.int_v + PI.sqrt()).abs() < 1e-15);
        assert!((n.l1 - PI.sqrt()).abs() < 1e-15);
        assert!((n.int_v2 - (PI / 2.0).sqrt()).abs() < 1e-15);
        assert!(n.numeric.is_empty());
        let deep = PotentialSpec::gaussian_well(2.0, 1.0, vec![0.0]).unwrap();
        assert_eq!(exact_norms(&deep).unwrap().sup, 2.0);
    }

    #[test]
    fn bump_norms_match_quadrature() {
        for d in 1..=3 {
            let bump = PotentialSpec::compact_bump(1.5, 0.8, vec![0.1; d]).unwrap();
            let n = exact_norms(&bump).unwrap();
            let q = numeric_l1(&bump, 0.8).unwrap();
            assert!((n.l1 / q - 1.0).abs() < 1e-6, "d={d} {} {q}", n.l1);
            let (c, _) = bump.support_ball();
            let lo: Vec<f64> = c.iter().map(|v| v - 0.8).collect();
            let hi: Vec<f64> = c.iter().map(|v| v + 0.8).collect();
            let q2 = box_integral(|x| eval_potential(&bump, x).powi(2), &lo, &hi, panels_for(d)).unwrap();
            assert!((n.int_v2 / q2 - 1.0).abs() < 1e-6, "d={d}");
        }
    }

    #[test]
    fn sum_cross_terms() {
        let a = PotentialSpec::gaussian_well(1.0, 1.0, vec![-0.5]).unwrap();
        let b = PotentialSpec::compact_bump(0.7, 1.0, vec![0.5]).unwrap();
        let s = PotentialSpec::sum(vec![a, b], 1).unwrap();
        let n = exact_norms(&s).unwrap();
        assert!(n.numeric.contains(&"int_v2".to_string()));
        assert!(n.numeric.contains(&"l1".to_string()));
        let q2 = box_integral(|x| eval_potential(&s, x).powi(2), &[-12.0], &[12.0], 2000).unwrap();
        assert!((n.int_v2 - q2).abs() < 1e-9);
        let ql1 = box_integral(|x| eval_potential(&s, x).abs(), &[-12.0], &[12.0], 4000).unwrap();
        assert!((n.l1 - ql1).abs() < 1e-6);
    }

    #[test]
    fn two_gaussians_cross_term_closed_form() {
        let a = PotentialSpec::gaussian_well(1.0, 0.7, vec![0.0, 0.3]).unwrap();
        let b = PotentialSpec::gaussian_well(-0.5, 1.2, vec![0.4, -0.2]).unwrap();
        let s = PotentialSpec::sum(vec![a, b], 2).unwrap();
        let n = exact_norms(&s).unwrap();
        let (c, r) = s.support_ball();
        let lo: Vec<f64> = c.iter().map(|v| v - r).collect();
        let hi: Vec<f64> = c.iter().map(|v| v + r).collect();
        let q2 = box_integral(|x| eval_potential(&s, x).powi(2), &lo, &hi, 160).unwrap();
        assert!((n.int_v2 - q2).abs() < 1e-8, "{} {q2}", n.int_v2);
    }

    #[test]
    fn l1_by_box_quadrature() {
        let q = numeric_l1(&well(), 12.0).unwrap();
        assert!((q - PI.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn lipschitz_constant_of_reference_well() {
        let m = holder_certificate(&well(), 1.0).unwrap();
        assert!((m - (2.0 / std::f64::consts::E).sqrt()).abs() < 1e-14);
        // Grid search of |V'| as an independent check.
        let mut best: f64 = 0.0;
        for i in 0..200_001 {
            let x = -5.0 + 10.0 * i as f64 / 200_000.0;
            best = best.max((2.0 * x * (-x * x).exp()).abs());
        }
        assert!((best - m).abs() < 1e-9);
    }

    #[test]
    fn zero_potential_certificate() {
        let z = PotentialSpec::zero(2);
        assert_eq!(holder_certificate(&z, 0.5).unwrap(), 0.0);
        assert!(z.is_zero() && z.is_nonpositive());
        let n = exact_norms(&z).unwrap();
        assert_eq!((n.l1, n.sup, n.int_v, n.int_v2), (0.0, 0.0, 0.0, 0.0));
        assert!(holder_certificate(&well(), 0.0).is_err());
        assert!(holder_certificate(&well(), 1.5).is_err());
    }

    #[test]
    fn holder_pairs_have_no_violations() {
        let s = PotentialSpec::sum(
            vec![
                PotentialSpec::gaussian_well(1.0, 0.5, vec![0.0, 0.0]).unwrap(),
                PotentialSpec::compact_bump(-0.8, 1.3, vec![0.7, -0.2]).unwrap(),
            ],
            2,
        )
        .unwrap();
        for gamma in [1.0, 0.5, 0.2] {
            let m = holder_certificate(&s, gamma).unwrap();
            assert_eq!(holder_violations(&s, gamma, m, 100_000, 7), 0, "gamma={gamma}");
        }
        // A deliberately too small constant is caught.
        let m = holder_certificate(&well(), 1.0).unwrap();
        assert!(holder_violations(&well(), 1.0, 0.5 * m, 100_000, 7) > 0);
    }

    #[test]
    fn sign_flags() {
        assert!(well().is_nonpositive());
        assert!(!well().scaled(-1.0).is_nonpositive());
        let bump = PotentialSpec::compact_bump(-1.0, 1.0, vec![0.0]).unwrap();
        assert!(bump.is_nonpositive());
    }

    #[test]
    fn json_round_trip() {
        let text = r#"{"shape":"sum","components":[{"shape":"gaussian_well","depth":1.0,"width":1.0,"center":[0.0]},{"shape":"compact_bump","height":0.5,"radius":2.0}],"d":1}"#;
        let p: PotentialSpec = serde_json::from_str(text).unwrap();
        assert_eq!(p.leaves().len(), 2);
        let back: PotentialSpec = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(back, p);
        for bad in [
            r#"{"shape":"gaussian_well","depth":1.0,"width":1.0,"d":1,"color":3}"#,
            r#"{"shape":"gaussian_well","depth":1.0,"width":-1.0,"d":1}"#,
            r#"{"shape":"gaussian_well","depth":1.0,"radius":1.0,"width":1.0,"d":1}"#,
            r#"{"shape":"gaussian_well","depth":1.0,"width":1.0}"#,
        ] {
            assert!(serde_json::from_str::<PotentialSpec>(bad).is_err(), "{bad}");
        }
    }

    proptest! {
        #[test]
        fn holder_constant_is_monotone_in_depth(c in 0.01f64..10.0, w in 0.1f64..5.0, g in 0.05f64..1.0) {
            let v = PotentialSpec::gaussian_well(c, w, vec![0.0]).unwrap();
            let v2 = v.scaled(2.0);
            let m1 = holder_certificate(&v, g).unwrap();
            let m2 = holder_certificate(&v2, g).unwrap();
            prop_assert!((m2 / m1 - 2.0).abs() < 1e-12);
        }

        #[test]
        fn gaussian_norm_identities(c in -5.0f64..5.0, w in 0.1f64..4.0, d in 1usize..4) {
            let v = PotentialSpec::gaussian_well(c, w, vec![0.3; d]).unwrap();
            let n = exact_norms(&v).unwrap();
            prop_assert!((n.l1 - n.int_v.abs()).abs() <= 1e-12 * n.l1.max(1e-300));
            prop_assert!(n.int_v2 <= n.sup * n.l1 * (1.0 + 1e-12));
            prop_assert_eq!(v.is_nonpositive(), c >= 0.0);
        }
    }
}
