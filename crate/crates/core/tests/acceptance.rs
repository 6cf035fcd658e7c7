//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the
//! libtest harness so the lines always reach stdout; exits nonzero if any
//! criterion fails.

use std::f64::consts::PI;
use std::time::Instant;

use nht_core::asymptotics::{fit_expansion, moment_exponent_fit, remainder_exponent, TraceSample};
use nht_core::bridge_mc::{
    bridge_moment_estimate, brownian_bridge_moment, occupation_identity_check, trace_mc, Method,
};
use nht_core::inequality_harness::{check_fractional_moment, relativistic_limit, run_matrix, CheckKind};
use nht_core::levy_kernels::{
    cauchy_density, eval_kernel_with, gauss_density, kernel_at_zero, kernel_at_zero_quadrature, EvalRoute,
    KernelSpec,
};
use nht_core::potentials::PotentialSpec;
use nht_core::trace_engine::{
    duhamel_term1, duhamel_term2, series_remainder_bound, spectral_oracle_traces, theorem1_sandwich, SpectralGrid,
};
use nht_core::{NhtError, QuadratureConfig, SeedStream};

type Outcome = Result<(bool, String), NhtError>;

fn cfg() -> QuadratureConfig {
    QuadratureConfig::default()
}

fn reference_well() -> PotentialSpec {
    PotentialSpec::gaussian_well(1.0, 1.0, vec![0.0]).expect("valid well")
}

fn log_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (a.ln() + (b.ln() - a.ln()) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn closed_forms() -> Outcome {
    let c = cfg();
    let radii: Vec<f64> = (0..=40).map(|i| 0.25 * i as f64).collect();
    let mut worst: f64 = 0.0;
    for d in 1..=3 {
        let cauchy = KernelSpec::stable(1.0, d)?;
        let gauss = KernelSpec::stable(2.0, d)?;
        for &t in &[0.5, 1.0] {
            for &r in &radii {
                let e = cauchy_density(t, r, d);
                worst = worst.max(rel(eval_kernel_with(&cauchy, t, r, &c, EvalRoute::Subordination)?, e));
                worst = worst.max(rel(eval_kernel_with(&cauchy, t, r, &c, EvalRoute::Fourier)?, e));
                worst = worst.max(rel(eval_kernel_with(&cauchy, t, r, &c, EvalRoute::Auto)?, e));
                let g = gauss_density(t, r, d);
                worst = worst.max(rel(eval_kernel_with(&gauss, t, r, &c, EvalRoute::Auto)?, g));
                if r <= 6.0 {
                    worst = worst.max(rel(eval_kernel_with(&gauss, t, r, &c, EvalRoute::Fourier)?, g));
                }
            }
        }
    }
    Ok((worst <= 1e-6, format!("max relative error {worst:.2e} over routes, d = 1..3, r in [0, 10]")))
}

fn constant_at_zero() -> Outcome {
    let c = cfg();
    let d1 = KernelSpec::stable(1.0, 1)?;
    let d3 = KernelSpec::stable(1.0, 3)?;
    let e1 = rel(kernel_at_zero(&d1, 1.0, &c)?, 1.0 / PI);
    let e3 = rel(kernel_at_zero(&d3, 1.0, &c)?, 1.0 / (PI * PI));
    let q1 = rel(kernel_at_zero_quadrature(&d1, 1.0, &c)?, 1.0 / PI);
    let q3 = rel(kernel_at_zero_quadrature(&d3, 1.0, &c)?, 1.0 / (PI * PI));
    let ok = e1 <= 1e-8 && e3 <= 1e-8 && q1 <= 1e-5 && q3 <= 1e-5;
    Ok((ok, format!("closed form {e1:.1e}, {e3:.1e}; quadrature {q1:.1e}, {q3:.1e}")))
}

fn identity_suite() -> Outcome {
    let sel = [
        CheckKind::Normalization,
        CheckKind::Scaling,
        CheckKind::Semigroup,
        CheckKind::Roundtrip,
        CheckKind::SupMonotone,
    ];
    let report = run_matrix(&sel, &cfg());
    let failed: Vec<String> = report.failures().map(|f| format!("{} {}", f.check, f.params)).collect();
    Ok((
        report.all_passed,
        format!("{} witnesses, {} failed {:?}", report.records.len(), failed.len(), failed),
    ))
}

fn occupation() -> Outcome {
    let s = KernelSpec::stable(1.5, 1)?;
    let o = occupation_identity_check(&s, &reference_well(), 0.5, 100_000, &SeedStream::new(4), &cfg())?;
    let z = (o.lhs_estimate - o.rhs_exact).abs() / o.lhs_std_error;
    let exact_ok = (o.rhs_exact - 0.886227).abs() < 1e-6;
    Ok((
        z <= 3.0 && exact_ok,
        format!("estimate {:.6} +- {:.6}, exact {:.6}, {z:.2} standard errors", o.lhs_estimate, o.lhs_std_error, o.rhs_exact),
    ))
}

fn sandwich() -> Outcome {
    let c = cfg();
    let v = reference_well();
    let times = [0.05, 0.1, 0.2];
    let grid = SpectralGrid::for_potential(&v)?;
    let mut ok = true;
    let mut notes = Vec::new();
    for &alpha in &[0.8, 1.5] {
        let s = KernelSpec::stable(alpha, 1)?;
        let spectral = spectral_oracle_traces(&s, &v, &times, &grid, &c)?;
        for (i, &t) in times.iter().enumerate() {
            let w = theorem1_sandwich(&s, &v, t, &c)?;
            let sp = &spectral[i];
            let b = sp.budget.unwrap_or(0.0);
            let sp_ok = sp.value >= w.lower - b && sp.value <= w.upper + b;
            let mc = trace_mc(&s, &v, t, 16, 40, 500, &SeedStream::new(5).substream(i as u64), &c)?;
            let se = mc.std_error.unwrap_or(0.0);
            let mc_ok = mc.value >= w.lower - 3.0 * se && mc.value <= w.upper + 3.0 * se;
            ok &= sp_ok && mc_ok;
            if !(sp_ok && mc_ok) {
                notes.push(format!("alpha {alpha} t {t}: [{:.5}, {:.5}] spectral {:.5} mc {:.5}", w.lower, w.upper, sp.value, mc.value));
            }
        }
    }
    Ok((ok, if ok { "6 of 6 settings inside the sandwich".into() } else { notes.join("; ") }))
}

fn two_term() -> Outcome {
    let c = cfg();
    let s = KernelSpec::stable(1.5, 1)?;
    let v = reference_well();
    let times = log_grid(0.02, 0.4, 8);
    let grid = SpectralGrid::for_potential(&v)?;
    let samples: Vec<TraceSample> = spectral_oracle_traces(&s, &v, &times, &grid, &c)?
        .into_iter()
        .map(|e| TraceSample {
            t: e.t,
            value: e.value,
            error: e.budget.unwrap_or(0.0),
            method: Method::Spectral,
        })
        .collect();
    let fit = fit_expansion(&s, &samples, &v, &c)?;
    let e1 = rel(fit.fitted_c1, fit.predicted_c1);
    let e2 = rel(fit.fitted_c2, fit.predicted_c2);
    let ex = remainder_exponent(&s, &samples, &v, &c)?;
    let threshold = 1.0 / 1.5 + 2.0 - 0.2;
    Ok((
        e1 <= 0.02 && e2 <= 0.10 && ex.exponent >= threshold,
        format!(
            "c1 error {:.2}%, c2 error {:.2}%, remainder slope {:.3} (CI {:.3}..{:.3}) vs {threshold:.3}",
            100.0 * e1,
            100.0 * e2,
            ex.exponent,
            ex.ci.0,
            ex.ci.1
        ),
    ))
}

fn three_way() -> Outcome {
    let c = cfg();
    let v = reference_well();
    let times = [0.05, 0.1, 0.2];
    let grid = SpectralGrid::for_potential(&v)?;
    let mut ok = true;
    let mut worst: f64 = 0.0;
    for &alpha in &[0.8, 1.0, 1.5] {
        let s = KernelSpec::stable(alpha, 1)?;
        let spectral = spectral_oracle_traces(&s, &v, &times, &grid, &c)?;
        for (i, &t) in times.iter().enumerate() {
            let series = duhamel_term1(&s, &v, t, &c)? + duhamel_term2(&s, &v, t, &c)?;
            let allowed = series_remainder_bound(&s, &v, t, 2, &c)? + spectral[i].budget.unwrap_or(0.0);
            let gap = (spectral[i].value - series).abs();
            worst = worst.max(gap / allowed);
            ok &= gap <= allowed;
        }
    }
    let s = KernelSpec::stable(1.5, 1)?;
    let sp = &spectral_oracle_traces(&s, &v, &[0.2], &grid, &c)?[0];
    let mc = trace_mc(&s, &v, 0.2, 20, 100, 1000, &SeedStream::new(7), &c)?;
    let se = mc.std_error.unwrap_or(0.0);
    let z = (mc.value - sp.value).abs() / (3.0 * se + sp.budget.unwrap_or(0.0));
    ok &= z <= 1.0;
    Ok((
        ok,
        format!(
            "series gap at most {:.2} of allowance; mc {:.5} +- {:.5} vs spectral {:.5} (n = {})",
            worst, mc.value, se, sp.value, mc.n_samples
        ),
    ))
}

fn moment_slope(spec: &KernelSpec, gamma: f64, times: &[f64], n: usize, seed: u64) -> Result<f64, NhtError> {
    let est = times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let m = bridge_moment_estimate(spec, t, gamma, n, &SeedStream::new(seed).substream(i as u64), &cfg())?;
            Ok((t, m.value, m.std_error))
        })
        .collect::<Result<Vec<_>, NhtError>>()?;
    Ok(moment_exponent_fit(&est)?.exponent)
}

fn moments() -> Outcome {
    let times = log_grid(0.04, 0.4, 5);
    let mut ok = true;
    let mut notes = Vec::new();
    for &(alpha, gamma) in &[(1.5, 0.7), (1.0, 0.4)] {
        let slope = moment_slope(&KernelSpec::stable(alpha, 1)?, gamma, &times, 20_000, 8)?;
        let target = gamma / alpha + 1.0;
        ok &= (slope - target).abs() <= 0.1;
        notes.push(format!("stable({alpha}, {gamma}) {slope:.3} vs {target:.3}"));
    }
    let bb = times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let m = brownian_bridge_moment(t, 0.7, 1, 20_000, &SeedStream::new(9).substream(i as u64))?;
            Ok((t, m.value, m.std_error))
        })
        .collect::<Result<Vec<_>, NhtError>>()?;
    let slope = moment_exponent_fit(&bb)?.exponent;
    ok &= (slope - 1.35).abs() <= 0.1;
    notes.push(format!("brownian(0.7) {slope:.3} vs 1.350"));
    let rel_spec = KernelSpec::relativistic(1.0, 1.0, 1)?;
    let slope = moment_slope(&rel_spec, 0.4, &times, 20_000, 10)?;
    ok &= (slope - 1.4).abs() <= 0.1;
    notes.push(format!("relativistic(1, 0.4) {slope:.3} vs 1.400"));
    Ok((ok, notes.join("; ")))
}

fn inequalities() -> Outcome {
    let report = run_matrix(&[CheckKind::ThreeP, CheckKind::FiveP, CheckKind::Scalar], &cfg());
    let m = check_fractional_moment(1.0, 0.5, 1, &cfg())?;
    let dev = (m - 2f64.sqrt()).abs();
    let worst_drift = report
        .records
        .iter()
        .filter(|r| r.check == "3p" || r.check == "5p")
        .map(|r| r.value)
        .fold(0.0, f64::max);
    Ok((
        report.all_passed && dev <= 1e-4,
        format!(
            "{} witnesses ({} failed), worst refinement drift {:.2e}, moment deviation {dev:.1e}",
            report.records.len(),
            report.failures().count(),
            worst_drift
        ),
    ))
}

fn relativistic() -> Outcome {
    let v = relativistic_limit(1.0, 1.0, 1, &[1e-3], &cfg())?;
    let dev = rel(v[0], 1.0 / PI);
    Ok((dev <= 0.01, format!("relative deviation {dev:.2e} at t = 1e-3")))
}

fn reproducibility() -> Outcome {
    let run = |threads: usize| -> Result<Vec<u64>, NhtError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| NhtError::Internal(e.to_string()))?;
        pool.install(|| {
            let c = cfg();
            let s = KernelSpec::stable(1.5, 1)?;
            let v = reference_well();
            let a = trace_mc(&s, &v, 0.1, 12, 20, 500, &SeedStream::new(42), &c)?;
            let b = occupation_identity_check(&s, &v, 0.5, 5_000, &SeedStream::new(43), &c)?;
            let m = bridge_moment_estimate(&s, 0.1, 0.7, 5_000, &SeedStream::new(44), &c)?;
            Ok(vec![
                a.value.to_bits(),
                a.std_error.unwrap_or(0.0).to_bits(),
                b.lhs_estimate.to_bits(),
                m.value.to_bits(),
            ])
        })
    };
    let one = run(1)?;
    let ok = [2, 3, 8].iter().map(|&n| run(n)).collect::<Result<Vec<_>, _>>()?.iter().all(|r| *r == one);
    Ok((ok, "bitwise comparison across pools of 1, 2, 3 and 8 threads".into()))
}

fn main() {
    // Under `cargo test -- --list` the harness only enumerates tests.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("closed-form kernel agreement", closed_forms),
        ("constant p_1(0)", constant_at_zero),
        ("identity suite", identity_suite),
        ("occupation identity", occupation),
        ("sandwich bounds", sandwich),
        ("two-term expansion", two_term),
        ("three-way trace consistency", three_way),
        ("moment exponents", moments),
        ("inequality witnesses", inequalities),
        ("relativistic limit", relativistic),
        ("reproducibility", reproducibility),
    ];
    let mut failures = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (ok, detail) = match f() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            failures += 1;
        }
        println!(
            "{} criterion {:>2} {name}: {detail} [{:.1}s]",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of 11 criteria passed", 11 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
