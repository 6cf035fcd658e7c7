use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, ValueEnum};
use nht_core::asymptotics::{fit_expansion, read_samples_csv, remainder_exponent, TraceSample};
use nht_core::bridge_mc::{default_skeleton_k, trace_mc, Method, TraceEstimate};
use nht_core::inequality_harness::{default_families, run_matrix_with, CheckKind};
use nht_core::levy_kernels::{eval_kernel_with, EvalRoute, KernelSpec, Variant};
use nht_core::trace_engine::{duhamel_trace, spectral_oracle_traces, SpectralGrid};
use nht_core::{NhtError, QuadratureConfig, SeedStream};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::io::{self, CliError};

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Route {
    Auto,
    Subordination,
    Fourier,
    CrossChecked,
}

#[derive(Args, Debug)]
pub struct KernelArgs {
    /// Kernel specification (JSON).
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub t: f64,
    /// Comma-separated radii; output is sorted by radius.
    #[arg(long, default_value = "0")]
    pub r: String,
    #[arg(long, value_enum, default_value = "auto")]
    pub route: Route,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TraceArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub potential: PathBuf,
    /// `a:b:logN`, `a:b:linN` or a comma list.
    #[arg(long)]
    pub t_grid: String,
    #[arg(long, default_value = "mc,duhamel,spectral")]
    pub methods: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Bridge paths per starting point.
    #[arg(long, default_value_t = 100)]
    pub n_paths: usize,
    /// Starting points drawn from the proposal.
    #[arg(long, default_value_t = 1000)]
    pub n_x: usize,
    /// Skeleton size; by default it grows with `t`.
    #[arg(long)]
    pub k: Option<usize>,
    /// Spectral box half-length.
    #[arg(long)]
    pub half_length: Option<f64>,
    /// Spectral collocation modes (power of two).
    #[arg(long)]
    pub modes: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub potential: PathBuf,
    /// Trace CSV as written by `nht trace`.
    #[arg(long)]
    pub input: PathBuf,
    /// Method whose rows are fitted; spectral when present, else the most frequent.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Comma-separated check names; all checks when absent.
    #[arg(long)]
    pub only: Option<String>,
    /// Restrict the kernel-wide checks to this operator.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value = "verify_report.json")]
    pub report: PathBuf,
}

fn route_name(spec: &KernelSpec, route: Route) -> &'static str {
    match route {
        Route::Auto => match spec.variant {
            Variant::Stable { alpha } if alpha == 1.0 || alpha == 2.0 => "closed_form",
            _ => "subordination",
        },
        Route::Subordination => "subordination",
        Route::Fourier => "fourier",
        Route::CrossChecked => "cross_checked",
    }
}

#[derive(Serialize)]
struct KernelRow {
    t: f64,
    r: f64,
    density: f64,
    method: &'static str,
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>, CliError> {
    w.into_inner().map_err(|e| CliError::failure(format!("cannot assemble CSV: {e}")))
}

fn csv_error(e: csv::Error) -> CliError {
    CliError::failure(format!("cannot write CSV: {e}"))
}

pub fn kernel(args: &KernelArgs, cfg: &QuadratureConfig) -> Result<ExitCode, CliError> {
    let spec = io::load_spec(&args.spec)?;
    let mut radii = io::parse_list(&args.r)?;
    if radii.is_empty() {
        return Err(CliError::usage("no radii given"));
    }
    radii.sort_by(f64::total_cmp);
    let route = match args.route {
        Route::Auto => EvalRoute::Auto,
        Route::Subordination => EvalRoute::Subordination,
        Route::Fourier => EvalRoute::Fourier,
        Route::CrossChecked => EvalRoute::CrossChecked,
    };
    let densities: Vec<f64> = radii
        .par_iter()
        .map(|&r| eval_kernel_with(&spec, args.t, r, cfg, route))
        .collect::<Result<_, NhtError>>()?;
    let config = json!({
        "command": "kernel",
        "version": io::version(),
        "spec": spec,
        "t": args.t,
        "cfg": cfg,
    });
    let mut buf = io::config_header(&config).into_bytes();
    let mut w = csv::Writer::from_writer(Vec::new());
    for (&r, &density) in radii.iter().zip(&densities) {
        w.serialize(KernelRow {
            t: args.t,
            r,
            density,
            method: route_name(&spec, args.route),
        })
        .map_err(csv_error)?;
    }
    buf.extend(finish_csv(w)?);
    io::emit(args.out.as_ref(), &buf)?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Clone, Serialize)]
struct TraceRow {
    t: f64,
    method: &'static str,
    value: Option<f64>,
    error: Option<f64>,
    k: Option<usize>,
    n: Option<usize>,
    spec_hash: String,
    potential_hash: String,
    /// Method the row was compared with.
    reference: Option<&'static str>,
    /// `|value - reference| / tolerance`; at most 1 means consistent.
    agreement: Option<f64>,
    status: String,
}

fn parse_methods(text: &str) -> Result<Vec<Method>, CliError> {
    let mut out = Vec::new();
    for name in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let m = match name {
            "mc" => Method::Mc,
            "duhamel" => Method::Duhamel,
            "spectral" => Method::Spectral,
            other => return Err(CliError::usage(format!("unknown method `{other}`; expected mc, duhamel or spectral"))),
        };
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(CliError::usage("no methods requested"));
    }
    Ok(out)
}

/// Error bar of a row: standard error for Monte Carlo, budget otherwise.
fn error_of(e: &TraceEstimate) -> Option<f64> {
    e.std_error.or(e.budget)
}

/// Monte Carlo rows are compared at three standard errors.
fn tolerance_width(method: Method, err: f64) -> f64 {
    match method {
        Method::Mc => 3.0 * err,
        _ => err,
    }
}

fn fill_agreement(rows: &mut [TraceRow]) {
    let order = ["spectral", "duhamel"];
    let mut i = 0;
    while i < rows.len() {
        let mut j = i;
        while j < rows.len() && rows[j].t == rows[i].t {
            j += 1;
        }
        let group = &mut rows[i..j];
        let reference = order.iter().find_map(|name| {
            group
                .iter()
                .find(|r| r.method == *name && r.value.is_some())
                .map(|r| (r.method, r.value.unwrap_or(0.0), r.error.unwrap_or(0.0)))
        });
        if let Some((name, ref_value, ref_err)) = reference {
            for row in group.iter_mut().filter(|r| r.method != name) {
                if let (Some(v), Some(e)) = (row.value, row.error) {
                    let method = if row.method == "mc" { Method::Mc } else { Method::Duhamel };
                    let tol = tolerance_width(method, e) + ref_err;
                    let diff = (v - ref_value).abs();
                    row.reference = Some(name);
                    row.agreement = Some(if tol > 0.0 { diff / tol } else if diff == 0.0 { 0.0 } else { f64::INFINITY });
                }
            }
        }
        i = j;
    }
}

pub fn trace(args: &TraceArgs, cfg: &QuadratureConfig) -> Result<ExitCode, CliError> {
    let spec = io::load_spec(&args.spec)?;
    let potential = io::load_potential(&args.potential)?;
    if potential.dimension != spec.dimension {
        return Err(CliError::usage(format!(
            "potential dimension {} differs from kernel dimension {}",
            potential.dimension, spec.dimension
        )));
    }
    let times = io::parse_t_grid(&args.t_grid)?;
    let methods = parse_methods(&args.methods)?;
    if args.n_paths == 0 || args.n_x == 0 {
        return Err(CliError::usage("--n-paths and --n-x must be positive"));
    }
    let spec_hash = io::short_hash(&spec);
    let potential_hash = io::short_hash(&potential);
    let row = |t: f64, method: Method, res: Result<TraceEstimate, NhtError>| match res {
        Ok(e) => TraceRow {
            t,
            method: method.as_str(),
            value: Some(e.value),
            error: error_of(&e),
            k: e.skeleton_k,
            n: Some(e.n_samples),
            spec_hash: spec_hash.clone(),
            potential_hash: potential_hash.clone(),
            reference: None,
            agreement: None,
            status: "ok".into(),
        },
        Err(err) => TraceRow {
            t,
            method: method.as_str(),
            value: None,
            error: None,
            k: None,
            n: None,
            spec_hash: spec_hash.clone(),
            potential_hash: potential_hash.clone(),
            reference: None,
            agreement: None,
            status: err.to_string(),
        },
    };
    let mut rows = Vec::new();
    let mut grid_used = None;
    for &method in &methods {
        match method {
            Method::Spectral => {
                let grid = match (args.half_length, args.modes) {
                    (None, None) => SpectralGrid::for_potential(&potential),
                    (l, n) => {
                        let default = SpectralGrid::for_potential(&potential).ok();
                        let l = l.or(default.map(|g| g.half_length)).unwrap_or(20.0);
                        SpectralGrid::new(l, n.unwrap_or(256))
                    }
                };
                let res = grid.and_then(|g| {
                    grid_used = Some(g);
                    spectral_oracle_traces(&spec, &potential, &times, &g, cfg)
                });
                match res {
                    Ok(est) => rows.extend(times.iter().zip(est).map(|(&t, e)| row(t, method, Ok(e)))),
                    Err(e) => rows.extend(times.iter().map(|&t| row(t, method, Err(e.clone())))),
                }
            }
            Method::Duhamel => {
                let out: Vec<TraceRow> = times
                    .par_iter()
                    .map(|&t| row(t, method, duhamel_trace(&spec, &potential, t, cfg)))
                    .collect();
                rows.extend(out);
            }
            Method::Mc => {
                let root = SeedStream::new(args.seed);
                let out: Vec<TraceRow> = times
                    .par_iter()
                    .map(|&t| {
                        let k = args.k.unwrap_or_else(|| default_skeleton_k(t));
                        let stream = root.substream(t.to_bits());
                        row(t, method, trace_mc(&spec, &potential, t, k, args.n_paths, args.n_x, &stream, cfg))
                    })
                    .collect();
                rows.extend(out);
            }
        }
    }
    rows.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.method.cmp(b.method)));
    fill_agreement(&mut rows);

    let config = json!({
        "command": "trace",
        "version": io::version(),
        "spec": spec,
        "potential": potential,
        "cfg": cfg,
        "seed": args.seed,
        "t_grid": args.t_grid,
        "methods": methods.iter().map(|m| m.as_str()).collect::<Vec<_>>(),
        "mc": {"n_paths": args.n_paths, "n_x": args.n_x, "k": args.k},
        "spectral_grid": grid_used,
    });
    let mut buf = io::config_header(&config).into_bytes();
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r).map_err(csv_error)?;
    }
    buf.extend(finish_csv(w)?);
    io::emit(args.out.as_ref(), &buf)?;
    for r in rows.iter().filter(|r| r.status != "ok") {
        eprintln!("nht: t = {} {}: {}", r.t, r.method, r.status);
    }
    Ok(ExitCode::SUCCESS)
}

fn pick_method(samples: &[TraceSample], requested: Option<&str>) -> Result<Method, CliError> {
    if let Some(name) = requested {
        return Ok(parse_methods(name)?[0]);
    }
    let count = |m: Method| samples.iter().filter(|s| s.method == m).count();
    if count(Method::Spectral) > 0 {
        return Ok(Method::Spectral);
    }
    [Method::Duhamel, Method::Mc]
        .into_iter()
        .max_by_key(|m| count(*m))
        .filter(|m| count(*m) > 0)
        .ok_or_else(|| CliError::usage("the input holds no trace values"))
}

pub fn fit(args: &FitArgs, cfg: &QuadratureConfig) -> Result<ExitCode, CliError> {
    let spec = io::load_spec(&args.spec)?;
    let potential = io::load_potential(&args.potential)?;
    let file = std::fs::File::open(&args.input)
        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", args.input.display())))?;
    let all = read_samples_csv(file)?;
    let method = pick_method(&all, args.method.as_deref())?;
    let samples: Vec<TraceSample> = all.into_iter().filter(|s| s.method == method).collect();
    let fit = fit_expansion(&spec, &samples, &potential, cfg)?;
    let remainder = match remainder_exponent(&spec, &samples, &potential, cfg) {
        Ok(e) => json!({"exponent": e.exponent, "ci": [e.ci.0, e.ci.1], "points": e.points}),
        Err(e) => json!({"error": e.to_string()}),
    };
    let report = json!({
        "config": {
            "command": "fit",
            "version": io::version(),
            "spec": spec,
            "potential": potential,
            "cfg": cfg,
            "input": args.input,
            "method": method.as_str(),
        },
        "samples": samples.len(),
        "fitted_c1": fit.fitted_c1,
        "fitted_c2": fit.fitted_c2,
        "predicted_c1": fit.predicted_c1,
        "predicted_c2": fit.predicted_c2,
        "relative_error_c1": (fit.fitted_c1 - fit.predicted_c1).abs() / fit.predicted_c1.abs(),
        "relative_error_c2": (fit.fitted_c2 - fit.predicted_c2).abs() / fit.predicted_c2.abs(),
        "normalized_samples": fit.normalized_samples,
        "remainder": remainder,
    });
    let mut text = serde_json::to_string_pretty(&report).expect("serializable");
    text.push('\n');
    io::emit(args.out.as_ref(), text.as_bytes())?;
    Ok(ExitCode::SUCCESS)
}

pub fn verify(args: &VerifyArgs, cfg: &QuadratureConfig) -> Result<ExitCode, CliError> {
    let selection = match &args.only {
        Some(list) => list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(CheckKind::parse)
            .collect::<Result<Vec<_>, NhtError>>()?,
        None => CheckKind::ALL.to_vec(),
    };
    if selection.is_empty() {
        return Err(CliError::usage("--only selects no checks"));
    }
    let spec = args.spec.as_deref().map(io::load_spec).transpose()?;
    let families = match spec {
        Some(s) => vec![s],
        None => default_families(),
    };
    let report = run_matrix_with(&selection, &families, cfg);
    let out = json!({
        "config": {
            "command": "verify",
            "version": io::version(),
            "cfg": cfg,
            "checks": selection.iter().map(|c| c.name()).collect::<Vec<_>>(),
            "spec": spec,
        },
        "all_passed": report.all_passed,
        "records": report.records,
    });
    let mut text = serde_json::to_string_pretty(&out).expect("serializable");
    text.push('\n');
    io::emit(Some(&args.report), text.as_bytes())?;
    let failed = report.failures().count();
    println!(
        "{} of {} witnesses passed; report written to {}",
        report.records.len() - failed,
        report.records.len(),
        args.report.display()
    );
    for f in report.failures() {
        eprintln!("FAIL {} {}: {}", f.check, f.params, f.detail);
    }
    Ok(if report.all_passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(io::EXIT_VERIFY)
    })
}
