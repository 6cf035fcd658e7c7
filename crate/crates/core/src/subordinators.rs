//! One-sided stable subordinators: density evaluation, exact sampling and the
//! tempered weighting used by the relativistic kernel.
//!
//! Convention: the subordinator of index `q` has Laplace transform
//! `E exp(-lambda S_t) = exp(-t lambda^q)`. Subordinating a Brownian motion
//! with generator `Delta` (coordinate variance `2s` at time `s`) by it yields
//! the symmetric stable process with characteristic exponent `|xi|^{2q}`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, NhtError, Result};
use crate::quadrature::{self, kronrod15, QuadratureConfig};

/// Exponential tempering `e^{m t} e^{-m^{2/alpha} s}` of a stable subordinator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tempering {
    pub mass_m: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubordinatorSpec {
    /// Stability index in `(0, 1)`; equals `alpha / 2`.
    pub index: f64,
    pub tempering: Option<Tempering>,
}

impl SubordinatorSpec {
    pub fn stable(index: f64) -> Result<Self> {
        let s = Self {
            index,
            tempering: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn tempered(alpha: f64, mass_m: f64) -> Result<Self> {
        let s = Self {
            index: alpha / 2.0,
            tempering: Some(Tempering { mass_m, alpha }),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.index > 0.0 && self.index < 1.0) {
            return Err(invalid(format!(
                "subordinator index must lie in (0, 1), got {}",
                self.index
            )));
        }
        if let Some(tm) = self.tempering {
            if !(tm.mass_m > 0.0 && tm.mass_m.is_finite()) {
                return Err(invalid(format!("tempering mass must be positive, got {}", tm.mass_m)));
            }
            if (tm.alpha - 2.0 * self.index).abs() > 1e-12 {
                return Err(invalid(format!(
                    "tempering alpha {} inconsistent with index {}",
                    tm.alpha, self.index
                )));
            }
        }
        Ok(())
    }

    /// `t^{1/q}`: the factor with `S_t = t^{1/q} S_1` in law.
    pub fn time_scale(&self, t: f64) -> f64 {
        t.powf(1.0 / self.index)
    }
}

/// Density value together with a flag marking left-tail underflow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityValue {
    pub value: f64,
    pub underflow: bool,
}

/// `ln A(phi)` for the Zolotarev/Kanter function
/// `A(phi) = (sin(q phi)/sin phi)^{1/(1-q)} sin((1-q) phi)/sin(q phi)`,
/// given `phi` and its reflection `theta = pi - phi` (whichever is small is
/// passed exactly so that `sin phi` keeps full relative precision).
fn ln_kanter(q: f64, phi: f64, theta: f64) -> f64 {
    let sin_phi = if phi <= theta { phi.sin() } else { theta.sin() };
    let ln_sq = (q * phi).sin().ln();
    (ln_sq - sin_phi.ln()) / (1.0 - q) + ((1.0 - q) * phi).sin().ln() - ln_sq
}

/// Density of `ln S_1` at `u`, i.e. `e^u eta_1(e^u)`.
///
/// Evaluated from the single-integral representation
/// `w(u) = q/((1-q) pi) int_0^pi exp(z(phi) - e^{z(phi)}) dphi`,
/// `z(phi) = -q u/(1-q) + ln A(phi)`.
pub fn log_density(q: f64, u: f64, rel_tol: f64) -> Result<f64> {
    let shift = -q * u / (1.0 - q);
    let core = |z: f64| if z > 700.0 { 0.0 } else { (z - z.exp()).exp() };
    // ln A carries roundoff amplified by 1/(1-q); do not ask for more than that.
    let rel_tol = rel_tol.max(4.0 * f64::EPSILON / (1.0 - q));
    let half = 0.5 * PI;
    // z is increasing in phi. Its peak can be far narrower than [0, pi], so
    // the level sets z = -45, 0, 4 are located and used as breakpoints. The
    // upper half is integrated in theta = pi - phi, where z is decreasing.
    let z_lo = |phi: f64| shift + ln_kanter(q, phi, PI - phi);
    let z_hi = |theta: f64| shift + ln_kanter(q, PI - theta, theta);
    let mut total = 0.0;
    for upper in [false, true] {
        let z = |x: f64| if upper { -z_hi(x) } else { z_lo(x) };
        let levels: [f64; 3] = if upper { [-4.0, 0.0, 45.0] } else { [-45.0, 0.0, 4.0] };
        let mut breaks = vec![0.0];
        for level in levels {
            if let Some(x) = level_crossing(&z, level, half) {
                breaks.push(x);
            }
        }
        breaks.push(half);
        for w in breaks.windows(2) {
            if w[1] <= w[0] {
                continue;
            }
            let part = settle(quadrature::integrate(
                |x| core(if upper { z_hi(x) } else { z_lo(x) }),
                w[0],
                w[1],
                1e-300,
                rel_tol,
                2000,
            ))?;
            total += part.value;
        }
    }
    Ok(q / ((1.0 - q) * PI) * total)
}

// Root of the increasing function `z - level` on (0, end), if it changes sign.
// Bisection switches to geometric midpoints so roots near 0 keep relative precision.
fn level_crossing<F: Fn(f64) -> f64>(z: &F, level: f64, end: f64) -> Option<f64> {
    let mut lo = 1e-300;
    let mut hi = end;
    if !(z(lo) < level && z(hi) > level) {
        return None;
    }
    while hi - lo > 1e-12 * hi {
        let mid = if hi > 4.0 * lo { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
        if mid <= lo || mid >= hi {
            break;
        }
        if z(mid) < level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

// Near q = 1 the phase integrand is so steep that the Kronrod error estimate
// stalls on roundoff; an estimate that is still accurate to 1e-8 is kept.
fn settle(r: Result<quadrature::Integral>) -> Result<quadrature::Integral> {
    match r {
        Err(NhtError::QuadratureNonConvergence { estimate, error, .. })
            if error <= 1e-8 * estimate.abs() =>
        {
            Ok(quadrature::Integral {
                value: estimate,
                error,
                evaluations: 0,
            })
        }
        other => other,
    }
}

/// `eta_t(s)`, the subordinator density at time `t`, including tempering when present.
pub fn eta_density(
    spec: &SubordinatorSpec,
    t: f64,
    s: f64,
    cfg: &QuadratureConfig,
) -> Result<DensityValue> {
    spec.validate()?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(invalid(format!("time must be positive, got {t}")));
    }
    if !(s > 0.0 && s.is_finite()) {
        return Err(invalid(format!("subordinator level must be positive, got {s}")));
    }
    let q = spec.index;
    let scale = spec.time_scale(t);
    let x = s / scale;
    let w = log_density(q, x.ln(), cfg.rel_tol.min(1e-10))?;
    let mut value = w / x / scale;
    if let Some(tm) = spec.tempering {
        value *= (tm.mass_m * t - tm.mass_m.powf(2.0 / tm.alpha) * s).exp();
    }
    let value = value.max(0.0);
    Ok(DensityValue {
        value,
        underflow: value == 0.0,
    })
}

/// A discrete approximation of the law of `S_1`: atoms `levels[i]` with
/// probabilities `masses[i]`, obtained from a graded composite Kronrod rule
/// for the density of `ln S_1`. Expectations `E g(S_1)` of functions smooth in
/// `ln s` are integrated to near machine precision.
#[derive(Debug, Clone)]
pub struct StableLawTable {
    pub index: f64,
    pub levels: Vec<f64>,
    pub masses: Vec<f64>,
}

impl StableLawTable {
    pub fn build(q: f64) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) {
            return Err(invalid(format!("subordinator index must lie in (0, 1), got {q}")));
        }
        let w = |u: f64| log_density(q, u, 1e-12);
        // Width of the bulk of ln S_1 shrinks like (1-q)|ln(1-q)| as q -> 1.
        let fine = (0.25 * (1.0 - q) * (-(1.0 - q).ln()).max(1.0)).min(0.25);
        let mut mode = 0.0;
        let mut best = -1.0;
        let steps = (6.0 / fine).ceil() as usize;
        for i in 0..=steps {
            let u = -3.0 + 6.0 * i as f64 / steps as f64;
            let v = w(u)?;
            if v > best {
                best = v;
                mode = u;
            }
        }
        // Right truncation: P(S_1 > e^U) ~ Gamma(1+q) sin(pi q)/(pi q) e^{-qU}.
        let tail_c = crate::special::gamma(1.0 + q) * (PI * q).sin() / (PI * q);
        let u_hi = mode + ((tail_c.ln() + 39.0) / q).max(8.0);

        let mut left = vec![mode];
        let mut width = fine;
        let mut u = mode;
        loop {
            u -= width;
            left.push(u);
            if w(u)? < 1e-280 {
                break;
            }
            width = (width * 1.25).min(0.5);
            if u < mode - 400.0 {
                return Err(NhtError::Internal(format!(
                    "left tail of stable law with index {q} did not decay"
                )));
            }
        }
        left.reverse();
        let mut breaks = left;
        let mut width = fine;
        let mut u = mode;
        while u < u_hi {
            u += width;
            breaks.push(u);
            width = (width * 1.25).min(1.0);
        }

        let (xk, wk) = kronrod15();
        let mut levels = Vec::new();
        let mut masses = Vec::new();
        let mut stack: Vec<(f64, f64, u32)> = breaks
            .windows(2)
            .rev()
            .map(|p| (p[0], p[1], 0u32))
            .collect();
        while let Some((a, b, depth)) = stack.pop() {
            let c = 0.5 * (a + b);
            let h = 0.5 * (b - a);
            let mut fv = [0.0; 15];
            for j in 0..15 {
                fv[j] = w(c + h * xk[j])?;
            }
            let kron: f64 = (0..15).map(|j| wk[j] * fv[j]).sum::<f64>() * h;
            let (xg, wg) = quadrature::gauss_legendre(7);
            let mut gauss = 0.0;
            for j in 0..7 {
                gauss += wg[j] * w(c + h * xg[j])?;
            }
            gauss *= h;
            if (kron - gauss).abs() > 1e-13 && depth < 20 {
                stack.push((c, b, depth + 1));
                stack.push((a, c, depth + 1));
                continue;
            }
            for j in 0..15 {
                let m = wk[j] * fv[j] * h;
                if m > 1e-300 {
                    levels.push((c + h * xk[j]).exp());
                    masses.push(m);
                }
            }
        }
        let total: f64 = quadrature::pairwise_sum(&masses);
        if (total - 1.0).abs() > 1e-9 {
            return Err(NhtError::Internal(format!(
                "stable law table for index {q} has total mass {total}"
            )));
        }
        Ok(Self {
            index: q,
            levels,
            masses,
        })
    }

    /// `E g(S_1)`, accumulated with Neumaier compensation in table order.
    pub fn expect<F: FnMut(f64) -> f64>(&self, mut g: F) -> f64 {
        let mut sum = 0.0;
        let mut comp = 0.0;
        for (&s, &m) in self.levels.iter().zip(&self.masses) {
            let x = m * g(s);
            let t = sum + x;
            if sum.abs() >= x.abs() {
                comp += (sum - t) + x;
            } else {
                comp += (x - t) + sum;
            }
            sum = t;
        }
        sum + comp
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

/// Shared, lazily built table for index `q`. Tables are immutable once built.
pub fn stable_law_table(q: f64) -> Result<Arc<StableLawTable>> {
    static CACHE: OnceLock<Mutex<HashMap<u64, Arc<StableLawTable>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(t) = cache.lock().expect("table cache poisoned").get(&q.to_bits()) {
        return Ok(t.clone());
    }
    let table = Arc::new(StableLawTable::build(q)?);
    let mut guard = cache.lock().expect("table cache poisoned");
    Ok(guard.entry(q.to_bits()).or_insert(table).clone())
}

fn open01<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Exact draw of `S_1` for the untempered index-`q` subordinator (Kanter's
/// representation of the Chambers–Mallows–Stuck method).
pub fn sample_standard<R: Rng + ?Sized>(q: f64, rng: &mut R) -> f64 {
    let phi = PI * open01(rng);
    let e: f64 = rng.sample(Exp1);
    let ln_sq = (q * phi).sin().ln();
    let ln_s = (ln_sq - phi.sin().ln()) / q + (1.0 - q) / q * (((1.0 - q) * phi).sin().ln() - ln_sq - e.ln());
    ln_s.exp()
}

/// Exact sample of the subordinator at time `t`.
pub fn sample_subordinator<R: Rng + ?Sized>(
    spec: &SubordinatorSpec,
    t: f64,
    rng: &mut R,
) -> Result<f64> {
    spec.validate()?;
    if spec.tempering.is_some() {
        return Err(NhtError::Unsupported(
            "exact sampling of tempered subordinators".into(),
        ));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(invalid(format!("time must be positive, got {t}")));
    }
    Ok(spec.time_scale(t) * sample_standard(spec.index, rng))
}

/// `sqrt(2 S_t) Z` with `Z` standard normal in `R^d`: a draw of the symmetric
/// `2q`-stable law at time `t`.
pub fn subordinated_gaussian_sample<R: Rng + ?Sized>(
    spec: &SubordinatorSpec,
    t: f64,
    d: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if d == 0 {
        return Err(invalid("dimension must be at least 1"));
    }
    let s = sample_subordinator(spec, t, rng)?;
    let scale = (2.0 * s).sqrt();
    Ok((0..d)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect())
}
