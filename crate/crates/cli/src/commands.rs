//! One function per subcommand; each writes its artifacts through a [`ManifestWriter`].

use std::f64::consts::PI;
use std::path::Path;

use serde_json::json;

use dnlab_core::dn::{DnKind, LoopCondition, StiffnessSystem};
use dnlab_core::evolution::{rayleigh_trace, tautological_residual, TraceOptions};
use dnlab_core::geometry::{build_annulus, build_disk, composite_metric, nested_family, MetricField, Profile, TriMesh};
use dnlab_core::identities::{reference_inclusion_mesh, spectral_gap_check, verify_identities_on};
use dnlab_core::probe::{log_stability_fit, probe_frequency_ladder, reference_probe_patch, stability_sweep};
use dnlab_core::runge::{
    adjoint_experiment_with, cylinder_operators, fit_cost_exponent, fit_smoothness_constant, interface_modes,
    li_bound_curve, random_interface_functions, recurrence_sandwich_check, recurrence_simulate, reference_runge_mesh,
    reference_target, runge_iterate, FitConstants, IterateOptions, LiEvaluator, RungeOperators, StepRule,
};
use dnlab_core::LabError;

use crate::config::{positive, spd, sym2, Settings};
use crate::error::{CliError, CliResult};
use crate::manifest::{Manifest, ManifestWriter};

/// `|xi| r0` from which the probe ratio is held to its tolerance.
pub const PROBE_ASYMPTOTIC_PRODUCT: f64 = 40.0;

fn load_or_build(name: &str, resolution: usize, s: &Settings) -> CliResult<TriMesh> {
    if Path::new(name).is_file() {
        let text = std::fs::read_to_string(name).map_err(CliError::io(name))?;
        return Ok(TriMesh::from_text(&text)?);
    }
    Ok(match name {
        "disk" => build_disk(1.0, resolution)?,
        "annulus" => build_annulus(s.file.geometry.inner_radius.unwrap_or(0.5), 1.0, resolution)?,
        "inclusion" => reference_inclusion_mesh(resolution)?,
        "collar" => reference_runge_mesh(resolution)?.0,
        "patch" => reference_probe_patch(2.0 * PI / resolution as f64)?,
        _ => return Err(CliError::Usage(format!("unknown mesh {name:?}; expected disk, annulus, inclusion, collar, patch or a file"))),
    })
}

fn background(s: &Settings, mesh: &TriMesh) -> CliResult<MetricField> {
    let g = spd(s.file.metric.g.unwrap_or([1.0, 0.0, 1.0]), "metric.g")?;
    Ok(MetricField::constant(mesh.triangle_count(), g)?)
}

fn fmt_row(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",") + "\n"
}

pub fn mesh(s: &Settings) -> CliResult<Manifest> {
    let (name, res) = (s.mesh("disk"), s.resolution(64));
    let m = load_or_build(&name, res, s)?;
    let mut w = ManifestWriter::create(&s.out())?;
    w.write("mesh.txt", &m.to_text())?;
    let summary = json!({
        "nodes": m.node_count(),
        "triangles": m.triangle_count(),
        "loops": m.loops().iter().map(|l| l.len()).collect::<Vec<_>>(),
        "euler_characteristic": m.euler_characteristic(),
        "area": m.total_area(),
        "max_edge": m.max_edge_length(),
    });
    w.write("mesh.json", &(summary.to_string() + "\n"))?;
    w.finish("mesh", s.seed(), json!({"mesh": name, "resolution": res}))
}

pub fn dn(s: &Settings) -> CliResult<Manifest> {
    let (name, res, tol) = (s.mesh("disk"), s.resolution(64), s.tol(1e-10));
    let m = load_or_build(&name, res, s)?;
    let g = background(s, &m)?;
    // every boundary loop carries data, so constants span the kernel
    let loops: Vec<usize> = (0..m.loop_count()).collect();
    let op = StiffnessSystem::assemble(&m, &g)?.dn_map(&loops, LoopCondition::Zero, DnKind::Full)?;
    let ev = op.eigenvalues();
    let top = ev.last().copied().unwrap_or(1.0);
    let mut spectrum = String::from("index,eigenvalue\n");
    for (i, e) in ev.iter().enumerate() {
        spectrum.push_str(&format!("{i},{e}\n"));
    }
    let constant_response = op.apply(&vec![1.0; op.len()])?.iter().fold(0.0f64, |a, v| a.max(v.abs())) / top;
    let asymmetry = op.mass_asymmetry();
    let mut w = ManifestWriter::create(&s.out())?;
    w.write("dn.csv", &op.to_csv())?;
    w.write("spectrum.csv", &spectrum)?;
    let pass = asymmetry <= tol && constant_response <= tol;
    w.suite("dn_structure", pass, "spectrum.csv", &[("asymmetry", asymmetry), ("constant_response", constant_response), ("gap", ev.get(1).copied().unwrap_or(0.0))]);
    w.finish("dn", s.seed(), json!({"mesh": name, "resolution": res, "tol": tol, "g": s.file.metric.g}))
}

pub fn verify_identities(s: &Settings) -> CliResult<Manifest> {
    let (name, res, tol, seed) = (s.mesh("inclusion"), s.resolution(32), s.tol(1e-9), s.seed());
    let trials = s.file.identities.trials.unwrap_or(50);
    // identities need an inclusion, so the named disk carries the reference one
    let m = if name == "disk" { reference_inclusion_mesh(res)? } else { load_or_build(&name, res, s)? };
    let g = background(s, &m)?;
    let h_value = spd(s.file.metric.h.unwrap_or([2.0, 0.0, 1.0]), "metric.h")?;
    let h = composite_metric(&g, &MetricField::constant(m.triangle_count(), h_value)?, &m)?.field;
    let reports = verify_identities_on(&m, &g, &h, trials, seed, tol)?;
    let (gaps, ladder) = spectral_gap_check(&[res, 2 * res], seed)?;
    let mut w = ManifestWriter::create(&s.out())?;
    let lines: String = reports.iter().map(|r| r.to_json_line() + "\n").collect();
    w.write("identities.jsonl", &lines)?;
    let gap_lines: String = gaps.iter().map(|g| serde_json::to_string(g).expect("finite") + "\n").collect::<String>() + &ladder.to_json_line() + "\n";
    w.write("spectral_gap.jsonl", &gap_lines)?;
    let worst = reports.iter().map(|r| r.rel).fold(0.0, f64::max);
    w.suite("identities", reports.iter().all(|r| r.pass), "identities.jsonl", &[("max_rel", worst)]);
    let last = gaps.last().expect("two resolutions");
    w.suite("spectral_gap", ladder.stable, "spectral_gap.jsonl", &[("gap", last.gap), ("constant", last.constant)]);
    w.finish("verify-identities", seed, json!({"mesh": name, "resolution": res, "tol": tol, "trials": trials, "h": h_value}))
}

fn profile(s: &Settings) -> CliResult<Profile> {
    let e = &s.file.evolve;
    let rate = e.rate.unwrap_or(0.5);
    Ok(match e.profile.as_deref().unwrap_or("linear") {
        "linear" => Profile::LinearShrink { rate },
        "exponential" => Profile::ExponentialShrink { rate },
        "wobble" => Profile::Wobble { rate, amplitude: e.amplitude.unwrap_or(0.1), mode: e.mode.unwrap_or(3) },
        other => return Err(CliError::Config(format!("unknown profile {other:?}; expected linear, exponential or wobble"))),
    })
}

pub fn evolve(s: &Settings) -> CliResult<Manifest> {
    let (name, res) = (s.mesh("disk"), s.resolution(64));
    let levels = s.file.evolve.levels.unwrap_or(8);
    let freq = s.file.evolve.frequency.unwrap_or(2.0);
    let p = profile(s)?;
    let m = load_or_build(&name, res, s)?;
    let g = spd(s.file.metric.g.unwrap_or([1.0, 0.0, 1.0]), "metric.g")?;
    let fam = nested_family(&m, g, levels, p.clone())?;
    let f: Vec<f64> = fam.theta.iter().map(|t| (freq * t).cos()).collect();
    let trace = rayleigh_trace(&fam, &f, TraceOptions::default())?;
    let transport = tautological_residual(&fam, &f)?;
    let mut w = ManifestWriter::create(&s.out())?;
    w.write("trace.csv", &trace.to_csv())?;
    let mut tcsv = String::from("t,residual,relative\n");
    for i in 0..transport.times.len() {
        tcsv.push_str(&fmt_row(&[transport.times[i], transport.residuals[i], transport.relative[i]]));
    }
    w.write("transport.csv", &tcsv)?;
    let under = trace.lambda.iter().zip(&trace.bound).all(|(l, b)| *l <= b * (1.0 + 1e-9));
    let lmax = trace.lambda.iter().copied().fold(0.0, f64::max);
    w.suite("rayleigh_bound", under && trace.forms_nonnegative(), "trace.csv", &[("c1", trace.c1), ("c2", trace.c2), ("lambda_max", lmax)]);
    let settings = json!({"mesh": name, "resolution": res, "levels": levels, "frequency": freq, "profile": format!("{p:?}"), "g": g});
    w.finish("evolve", s.seed(), settings)
}

fn step_rule(name: &str) -> CliResult<StepRule> {
    match name {
        "scheduled" => Ok(StepRule::Scheduled),
        "line-search" => Ok(StepRule::LineSearch),
        "exact" => Ok(StepRule::ExactSolve),
        other => Err(CliError::Config(format!("unknown step rule {other:?}; expected scheduled, line-search or exact"))),
    }
}

pub fn runge(s: &Settings) -> CliResult<Manifest> {
    let (name, res, seed) = (s.mesh("collar"), s.resolution(32), s.seed());
    let r = &s.file.runge;
    let eps = positive(r.eps.unwrap_or(0.2), "runge.eps")?;
    let length = r.cylinder_length.unwrap_or(0.0);
    let rule_name = r.rule.clone().unwrap_or_else(|| "line-search".into());
    let options = IterateOptions { rule: step_rule(&rule_name)?, max_iterations: r.max_iterations.unwrap_or(1000) };
    let ladder = r.eps_ladder.clone().unwrap_or_else(|| vec![0.5, 0.3, 0.2, 0.1]);
    let (m, g) = if name == "collar" { reference_runge_mesh(res)? } else {
        let m = load_or_build(&name, res, s)?;
        let g = MetricField::euclidean(&m);
        (m, g)
    };
    let ops = if length > 0.0 { cylinder_operators(&m, &g, length)? } else { RungeOperators::new(&m, &g)? };
    let exp = adjoint_experiment_with(&ops, length, &interface_modes(&ops, 50))?;
    let c = fit_smoothness_constant(&ops, exp.k, &random_interface_functions(&ops, 20, 8, seed))?;
    let mut consts = FitConstants::default();
    consts.set("K", exp.k, "adjoint lower bound")?;
    consts.set("C", c.max(1e-3), "smoothness fit")?;
    let li = LiEvaluator::default();
    let f = reference_target(&ops)?;
    let trace = runge_iterate(&f, eps, &consts, &ops, &li, options)?;
    consts.set("sigma0", trace.sigma0, "initial smoothness ratio")?;
    let mut costs = Vec::new();
    for &e in &ladder {
        costs.push(*runge_iterate(&f, e, &consts, &ops, &li, options)?.cost.last().expect("nonempty trace"));
    }
    match fit_cost_exponent(trace.sigma0, &ladder, &costs) {
        Ok(a) => consts.set("alpha", a, "cost exponent fit")?,
        Err(e) => eprintln!("warning: cost exponent not fitted: {e}"),
    }
    let mut w = ManifestWriter::create(&s.out())?;
    w.write("trace.csv", &trace.to_csv())?;
    w.write("constants.json", &(consts.to_json() + "\n"))?;
    let final_res = *trace.residual.last().expect("nonempty trace");
    let pass = trace.converged && trace.monotone() && trace.dominated();
    w.suite("runge", pass, "trace.csv", &[("K", exp.k), ("C", consts.get("C")?), ("residual", final_res), ("iterations", (trace.residual.len() - 1) as f64)]);
    let settings = json!({"mesh": name, "resolution": res, "eps": eps, "rule": rule_name, "cylinder_length": length, "eps_ladder": ladder, "max_iterations": options.max_iterations});
    w.finish("runge", seed, settings)
}

pub fn probe(s: &Settings) -> CliResult<Manifest> {
    let p = &s.file.probe;
    let tol = s.tol(0.1);
    let spacing = positive(p.spacing.unwrap_or(0.005), "probe.spacing")?;
    let radius = positive(p.radius.unwrap_or(0.5), "probe.radius")?;
    let freqs = p.frequencies.clone().unwrap_or_else(|| vec![10.0, 20.0, 40.0, 80.0]);
    let h = spd(s.file.metric.h.unwrap_or([4.0, 0.0, 1.0]), "metric.h")?;
    let m = reference_probe_patch(spacing)?;
    let est = probe_frequency_ladder(&m, [0.0, 1.0], [1.0, 0.0], h, radius, &freqs)?;
    let mut csv = String::from("frequency,product,ratio,expected,deviation\n");
    for (k, e) in freqs.iter().zip(&est) {
        csv.push_str(&fmt_row(&[*k, k * radius, e.ratio, e.expected, e.deviation]));
    }
    let improving = est.windows(2).all(|w| w[1].deviation < w[0].deviation);
    let high: Vec<f64> = freqs.iter().zip(&est).filter(|(k, _)| *k * radius >= PROBE_ASYMPTOTIC_PRODUCT).map(|(_, e)| e.deviation).collect();
    let worst_high = high.iter().copied().fold(0.0, f64::max);
    let mut w = ManifestWriter::create(&s.out())?;
    w.write("probe.csv", &csv)?;
    let last = est.last().map(|e| e.deviation).unwrap_or(f64::NAN);
    w.suite("probe_ratio", improving && !high.is_empty() && worst_high <= tol, "probe.csv", &[("deviation_last", last), ("deviation_asymptotic", worst_high)]);
    w.finish("probe", s.seed(), json!({"spacing": spacing, "radius": radius, "frequencies": freqs, "h": h, "tol": tol}))
}

pub fn stability(s: &Settings) -> CliResult<Manifest> {
    let (name, res) = (s.mesh("inclusion"), s.resolution(64));
    let m = if name == "disk" { reference_inclusion_mesh(res)? } else { load_or_build(&name, res, s)? };
    let g = background(s, &m)?;
    let delta = sym2(s.file.metric.delta.unwrap_or([1.0, 0.0, -0.5]), "metric.delta")?;
    let scales = s.file.metric.contrasts.clone().unwrap_or_else(|| vec![0.05, 0.1, 0.2, 0.4, 0.8]);
    let curve = stability_sweep(&m, &g, delta, &scales, None)?;
    let fit = log_stability_fit(&curve)?;
    let mut w = ManifestWriter::create(&s.out())?;
    w.write("curve.csv", &curve.to_csv())?;
    w.write("fit.json", &(fit.to_json() + "\n"))?;
    let pass = curve.strictly_increasing() && fit.holds;
    w.suite("stability", pass, "fit.json", &[("C1", fit.c1_envelope), ("C2", fit.c2), ("fit_residual", fit.residual)]);
    w.finish("stability", s.seed(), json!({"mesh": name, "resolution": res, "delta": delta, "contrasts": scales}))
}

pub fn recurrence(s: &Settings) -> CliResult<Manifest> {
    let r = &s.file.recurrence;
    let sigma0 = r.sigma0.unwrap_or(4.0);
    let c = r.c.unwrap_or(1.0);
    let steps = r.steps.unwrap_or(100_000);
    let every = r.every.unwrap_or(100).max(1);
    let li = LiEvaluator::default();
    let report = recurrence_sandwich_check(&li, sigma0, c, steps)?;
    let seq = recurrence_simulate(sigma0, c, steps)?;
    let lower = li_bound_curve(&li, sigma0, c, steps)?;
    let mut csv = String::from("k,s,lower,upper\n");
    for k in (0..=steps).filter(|k| k % every == 0 || *k == steps) {
        csv.push_str(&format!("{k},{},{},{}\n", seq.values[k], lower[k], lower[k] + 1.0));
    }
    let mut w = ManifestWriter::create(&s.out())?;
    w.write("recurrence.csv", &csv)?;
    w.write("sandwich.json", &(serde_json::to_string(&report).expect("finite") + "\n"))?;
    w.suite("sandwich", report.pass, "sandwich.json", &[("min_lower_margin", report.min_lower_margin), ("min_upper_margin", report.min_upper_margin)]);
    w.finish("recurrence", s.seed(), json!({"sigma0": sigma0, "c": c, "steps": steps, "every": every}))
}

/// Conformal directions are an input mistake rather than a numerical failure.
pub fn classify(e: CliError) -> CliError {
    match e {
        CliError::Lab(LabError::Conformal { norm }) => {
            CliError::Config(format!("contrast direction is conformal to the background (DN difference {norm:e})"))
        }
        other => other,
    }
}
