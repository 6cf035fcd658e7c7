//! Fits of small-time expansions to computed traces: the two leading
//! coefficients, the remainder exponent, and power laws of bridge moments.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bridge_mc::Method;
use crate::error::{invalid, NhtError, Result};
use crate::levy_kernels::{kernel_at_zero, KernelSpec};
use crate::potentials::{exact_norms, PotentialSpec};
use crate::quadrature::QuadratureConfig;
use crate::rng::SeedStream;

/// One computed trace value with its error bar (standard error or budget).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub t: f64,
    pub value: f64,
    pub error: f64,
    pub method: Method,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticFit {
    /// `(t, trace / p_t(0))`, sorted by `t`.
    pub normalized_samples: Vec<(f64, f64)>,
    pub fitted_c1: f64,
    pub fitted_c2: f64,
    pub predicted_c1: f64,
    pub predicted_c2: f64,
    /// `None` when the remainder is below the noise floor everywhere.
    pub remainder_exponent: Option<f64>,
    pub exponent_ci: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentEstimate {
    pub exponent: f64,
    pub ci: (f64, f64),
    /// Number of points that entered the fit.
    pub points: usize,
}

fn check_span(ts: &[f64], min_points: usize) -> Result<()> {
    if ts.len() < min_points {
        return Err(NhtError::IllConditioned(format!(
            "need at least {min_points} samples, got {}",
            ts.len()
        )));
    }
    if ts.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(invalid("sample times must be positive and finite"));
    }
    let lo = ts.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ts.iter().copied().fold(0.0, f64::max);
    if hi < 10.0 * lo * (1.0 - 1e-12) {
        return Err(NhtError::IllConditioned(format!(
            "sample times span [{lo}, {hi}], less than a decade"
        )));
    }
    Ok(())
}

/// Weighted least squares `y ~ X b`, weights `1/sigma^2`. Columns are scaled
/// to unit norm before the SVD solve.
fn weighted_lsq(x: &DMatrix<f64>, y: &[f64], sigma: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (n, p) = x.shape();
    let mut a = DMatrix::zeros(n, p);
    let mut b = DVector::zeros(n);
    for i in 0..n {
        for j in 0..p {
            a[(i, j)] = x[(i, j)] / sigma[i];
        }
        b[i] = y[i] / sigma[i];
    }
    let scales: Vec<f64> = (0..p).map(|j| a.column(j).norm()).collect();
    if scales.iter().any(|s| *s == 0.0) {
        return Err(NhtError::IllConditioned("design matrix has a zero column".into()));
    }
    for (j, s) in scales.iter().enumerate() {
        a.column_mut(j).scale_mut(1.0 / s);
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin <= 1e-10 * smax {
        return Err(NhtError::IllConditioned(format!(
            "design matrix condition number {:e}",
            smax / smin
        )));
    }
    let z = svd
        .solve(&b, 0.0)
        .map_err(|e| NhtError::IllConditioned(format!("least-squares solve failed: {e}")))?;
    let ata_inv = (a.transpose() * &a)
        .try_inverse()
        .ok_or_else(|| NhtError::IllConditioned("singular normal matrix".into()))?;
    let mut coef = z;
    let mut cov = ata_inv;
    for j in 0..p {
        coef[j] /= scales[j];
        for k in 0..p {
            cov[(j, k)] /= scales[j] * scales[k];
        }
    }
    Ok((coef, cov))
}

/// Per-sample fit weights: the reported errors, with a floor so that exact
/// data (zero errors) falls back to an unweighted fit.
fn sigmas(errors: &[f64], values: &[f64]) -> Vec<f64> {
    let scale = values.iter().map(|v| v.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    errors
        .iter()
        .map(|e| e.abs().max(1e-14 * scale))
        .collect()
}

/// Least-squares fit of `trace / p_t(0) ~ c1 t + c2 t^2`, compared with
/// `c1 = -int V`, `c2 = int V^2 / 2`.
pub fn fit_expansion(
    spec: &KernelSpec,
    samples: &[TraceSample],
    v: &PotentialSpec,
    cfg: &QuadratureConfig,
) -> Result<AsymptoticFit> {
    if samples.len() < 5 {
        return Err(NhtError::IllConditioned(format!(
            "need at least 5 samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|s| s.method != samples[0].method) {
        return Err(invalid("samples mix several methods"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.t.total_cmp(&b.t));
    let ts: Vec<f64> = sorted.iter().map(|s| s.t).collect();
    check_span(&ts, 5)?;
    let norms = exact_norms(v)?;
    let mut normalized = Vec::with_capacity(sorted.len());
    let mut errors = Vec::with_capacity(sorted.len());
    for s in &sorted {
        let p0 = kernel_at_zero(spec, s.t, cfg)?;
        normalized.push((s.t, s.value / p0));
        errors.push(s.error / p0);
    }
    let (c1, c2) = fit_two_term(&normalized, &errors)?;
    let predicted_c1 = -norms.int_v;
    let predicted_c2 = 0.5 * norms.int_v2;
    let (remainder_exponent, exponent_ci) =
        match remainder_exponent_normalized(&normalized, &errors, predicted_c1, predicted_c2) {
            Ok(e) => (Some(e.exponent), Some(e.ci)),
            Err(NhtError::RemainderUnresolvable(_)) => (None, None),
            Err(e) => return Err(e),
        };
    Ok(AsymptoticFit {
        normalized_samples: normalized,
        fitted_c1: c1,
        fitted_c2: c2,
        predicted_c1,
        predicted_c2,
        remainder_exponent,
        exponent_ci,
    })
}

/// Weighted fit of `r(t) ~ c1 t + c2 t^2` on already normalized samples.
pub fn fit_two_term(normalized: &[(f64, f64)], errors: &[f64]) -> Result<(f64, f64)> {
    let ts: Vec<f64> = normalized.iter().map(|p| p.0).collect();
    check_span(&ts, 3)?;
    let ys: Vec<f64> = normalized.iter().map(|p| p.1).collect();
    let x = DMatrix::from_fn(ts.len(), 2, |i, j| if j == 0 { ts[i] } else { ts[i] * ts[i] });
    let (coef, _) = weighted_lsq(&x, &ys, &sigmas(errors, &ys))?;
    Ok((coef[0], coef[1]))
}

fn theil_sen(x: &[f64], y: &[f64]) -> Option<f64> {
    let mut slopes = Vec::new();
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            if x[j] != x[i] {
                slopes.push((y[j] - y[i]) / (x[j] - x[i]));
            }
        }
    }
    if slopes.is_empty() {
        return None;
    }
    slopes.sort_by(f64::total_cmp);
    let m = slopes.len();
    Some(if m % 2 == 1 {
        slopes[m / 2]
    } else {
        0.5 * (slopes[m / 2 - 1] + slopes[m / 2])
    })
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Theil–Sen slope of `ln y` against `ln t` with a 95% bootstrap interval
/// (2000 resamples, fixed seed).
pub fn robust_log_slope(ts: &[f64], ys: &[f64]) -> Result<ExponentEstimate> {
    if ts.len() < 3 || ts.len() != ys.len() {
        return Err(invalid("a log-log slope needs at least 3 matched points"));
    }
    let lx: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let slope = theil_sen(&lx, &ly).ok_or_else(|| invalid("all sample times coincide"))?;
    let stream = SeedStream::new(0x5eed_51de);
    let n = lx.len();
    let mut boot = Vec::with_capacity(2000);
    for b in 0..2000u64 {
        let mut rng = stream.rng(b);
        let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let bx: Vec<f64> = idx.iter().map(|&i| lx[i]).collect();
        let by: Vec<f64> = idx.iter().map(|&i| ly[i]).collect();
        if let Some(s) = theil_sen(&bx, &by) {
            boot.push(s);
        }
    }
    boot.sort_by(f64::total_cmp);
    let (lo, hi) = if boot.is_empty() {
        (slope, slope)
    } else {
        (quantile(&boot, 0.025).min(slope), quantile(&boot, 0.975).max(slope))
    };
    Ok(ExponentEstimate {
        exponent: slope,
        ci: (lo, hi),
        points: n,
    })
}

fn remainder_exponent_normalized(
    normalized: &[(f64, f64)],
    errors: &[f64],
    c1: f64,
    c2: f64,
) -> Result<ExponentEstimate> {
    let mut ts = Vec::new();
    let mut rs = Vec::new();
    for (&(t, r), e) in normalized.iter().zip(errors) {
        let rho = r - c1 * t - c2 * t * t;
        let floor = (2.0 * e.abs()).max(1e-12 * r.abs());
        if rho.abs() > floor && rho != 0.0 {
            ts.push(t);
            rs.push(rho.abs());
        }
    }
    if ts.len() < 3 {
        return Err(NhtError::RemainderUnresolvable(format!(
            "only {} of {} samples have a remainder above the noise floor",
            ts.len(),
            normalized.len()
        )));
    }
    robust_log_slope(&ts, &rs)
}

/// Slope of `ln |r(t) + t int V - t^2/2 int V^2|` against `ln t`.
pub fn remainder_exponent(
    spec: &KernelSpec,
    samples: &[TraceSample],
    v: &PotentialSpec,
    cfg: &QuadratureConfig,
) -> Result<ExponentEstimate> {
    let norms = exact_norms(v)?;
    let mut normalized = Vec::with_capacity(samples.len());
    let mut errors = Vec::with_capacity(samples.len());
    for s in samples {
        let p0 = kernel_at_zero(spec, s.t, cfg)?;
        normalized.push((s.t, s.value / p0));
        errors.push(s.error / p0);
    }
    remainder_exponent_normalized(&normalized, &errors, -norms.int_v, 0.5 * norms.int_v2)
}

/// Log-log slope of `(t, estimate, std_error)` triples by weighted least
/// squares with `sigma = std_error / estimate`; 95% normal interval.
pub fn moment_exponent_fit(estimates: &[(f64, f64, f64)]) -> Result<ExponentEstimate> {
    let ts: Vec<f64> = estimates.iter().map(|e| e.0).collect();
    check_span(&ts, 4)?;
    if estimates.iter().any(|e| !(e.1 > 0.0)) {
        return Err(NhtError::RemainderUnresolvable(
            "moment estimates must be positive for a log-log fit".into(),
        ));
    }
    let ly: Vec<f64> = estimates.iter().map(|e| e.1.ln()).collect();
    let rel: Vec<f64> = estimates.iter().map(|e| e.2 / e.1).collect();
    let x = DMatrix::from_fn(ts.len(), 2, |i, j| if j == 0 { 1.0 } else { ts[i].ln() });
    let sig = sigmas(&rel, &[1.0]);
    let (coef, cov) = weighted_lsq(&x, &ly, &sig)?;
    let slope = coef[1];
    let weighted = rel.iter().any(|r| *r > 0.0);
    let se = if weighted {
        cov[(1, 1)].sqrt()
    } else {
        let n = ts.len();
        let rss: f64 = (0..n).map(|i| (ly[i] - coef[0] - slope * ts[i].ln()).powi(2)).sum();
        let lm = ts.iter().map(|t| t.ln()).sum::<f64>() / n as f64;
        let sxx: f64 = ts.iter().map(|t| (t.ln() - lm).powi(2)).sum();
        (rss / (n - 2) as f64 / sxx).sqrt()
    };
    Ok(ExponentEstimate {
        exponent: slope,
        ci: (slope - 1.96 * se, slope + 1.96 * se),
        points: ts.len(),
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    t: f64,
    value: Option<f64>,
    error: Option<f64>,
    method: Method,
}

/// Reads `t, value, error, method` columns by header name. Other columns
/// and lines starting with `#` are ignored, as are rows without a value.
pub fn read_samples_csv<R: Read>(reader: R) -> Result<Vec<TraceSample>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize::<CsvRow>() {
        let row = row.map_err(|e| invalid(format!("malformed sample CSV: {e}")))?;
        if let Some(value) = row.value {
            out.push(TraceSample {
                t: row.t,
                value,
                error: row.error.unwrap_or(0.0),
                method: row.method,
            });
        }
    }
    Ok(out)
}

pub fn write_samples_csv<W: Write>(writer: W, samples: &[TraceSample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for s in samples {
        w.serialize(CsvRow {
            t: s.t,
            value: Some(s.value),
            error: Some(s.error),
            method: s.method,
        })
        .map_err(|e| NhtError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| NhtError::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn log_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| (a.ln() + (b.ln() - a.ln()) * i as f64 / (n - 1) as f64).exp())
            .collect()
    }

    #[test]
    fn exact_two_term_recovery() {
        let ts = log_grid(0.02, 0.4, 8);
        let pts: Vec<(f64, f64)> = ts.iter().map(|&t| (t, 2.0 * t - 3.0 * t * t)).collect();
        let (c1, c2) = fit_two_term(&pts, &[0.0; 8]).unwrap();
        assert!((c1 - 2.0).abs() < 1e-12 && (c2 + 3.0).abs() < 1e-11, "{c1} {c2}");
    }

    #[test]
    fn narrow_span_is_rejected() {
        let ts = log_grid(0.1, 0.5, 6);
        let pts: Vec<(f64, f64)> = ts.iter().map(|&t| (t, t)).collect();
        assert!(matches!(fit_two_term(&pts, &[0.0; 6]), Err(NhtError::IllConditioned(_))));
    }

    #[test]
    fn exact_power_slope() {
        let ts = log_grid(0.01, 0.5, 8);
        let ys: Vec<f64> = ts.iter().map(|t| t.powf(3.2)).collect();
        let e = robust_log_slope(&ts, &ys).unwrap();
        assert!((e.exponent - 3.2).abs() < 1e-12);
        assert!(e.ci.0 <= e.exponent && e.exponent <= e.ci.1);
        let est: Vec<(f64, f64, f64)> = ts.iter().zip(&ys).map(|(&t, &y)| (t, y, 0.0)).collect();
        assert!((moment_exponent_fit(&est).unwrap().exponent - 3.2).abs() < 1e-10);
    }

    #[test]
    fn zero_potential_remainder_unresolvable() {
        let spec = KernelSpec::stable(1.5, 1).unwrap();
        let v = PotentialSpec::zero(1);
        let samples: Vec<TraceSample> = log_grid(0.02, 0.4, 8)
            .into_iter()
            .map(|t| TraceSample {
                t,
                value: 0.0,
                error: 0.0,
                method: Method::Spectral,
            })
            .collect();
        assert!(matches!(
            remainder_exponent(&spec, &samples, &v, &QuadratureConfig::default()),
            Err(NhtError::RemainderUnresolvable(_))
        ));
    }

    #[test]
    fn csv_round_trip_with_extra_columns() {
        let samples = vec![
            TraceSample {
                t: 0.1,
                value: 1.25,
                error: 0.01,
                method: Method::Mc,
            },
            TraceSample {
                t: 0.2,
                value: -2.5e-3,
                error: 0.0,
                method: Method::Spectral,
            },
        ];
        let mut buf = Vec::new();
        write_samples_csv(&mut buf, &samples).unwrap();
        assert_eq!(read_samples_csv(buf.as_slice()).unwrap(), samples);
        let text = "# config line\nt,method,value,error,k,n\n0.1,duhamel,0.5,,,\n0.2,spectral,,,,\n";
        let got = read_samples_csv(text.as_bytes()).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].method, Method::Duhamel);
    }

    proptest! {
        #[test]
        fn polynomial_plus_power_recovery(c1 in -5.0f64..5.0, c2 in -5.0f64..5.0, amp in 0.1f64..2.0, p in 2.6f64..4.0) {
            // remainder exponent of an exact polynomial-plus-power signal
            let ts = log_grid(0.01, 0.3, 8);
            let ys: Vec<f64> = ts.iter().map(|&t| amp * t.powf(p)).collect();
            let e = robust_log_slope(&ts, &ys).unwrap();
            prop_assert!((e.exponent - p).abs() < 1e-9);
            let pts: Vec<(f64, f64)> = ts.iter().map(|&t| (t, c1 * t + c2 * t * t)).collect();
            let (a, b) = fit_two_term(&pts, &[0.0; 8]).unwrap();
            prop_assert!((a - c1).abs() < 1e-9 && (b - c2).abs() < 1e-8);
        }
    }
}
