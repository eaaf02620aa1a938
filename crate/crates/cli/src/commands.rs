use std::fs;
use std::path::{Path, PathBuf};

use outerfactor::highd::{kf_highd_steady, KalmanFilter};
use outerfactor::innerouter::{
    factorize_discrete, green_factorize_estimation, outer_min_singular_value, verify_inner, FactorizationConfig,
    FactorizationResult, Route, VerificationReport,
};
use outerfactor::inputstats::{estimate_stats, recover_d_stats, PsdConfig};
use outerfactor::linalg::{Mat, Vector};
use outerfactor::matrixeq::regularize_feedthrough;
use outerfactor::simharness::run_experiment;
use outerfactor::sise::{run_sise, SiseInit};
use outerfactor::statespace::FrequencyGrid;
use outerfactor::{Domain, StateSpaceModel};
use serde::Serialize;
use serde_json::json;

use crate::failure::Failure;
use crate::io::{fmt_num, indexed, load_scenario, load_system, read_signal, write_json, write_system, Table};

/// Flags shared by every subcommand.
#[derive(Debug, Clone)]
pub struct Common {
    pub grid_points: Option<usize>,
    pub tol: Option<f64>,
    pub epsilon: Option<f64>,
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
}

impl Common {
    fn factorization(&self) -> FactorizationConfig {
        let mut cfg = FactorizationConfig::default();
        if let Some(n) = self.grid_points {
            cfg.grid_points = n;
        }
        if let Some(tol) = self.tol {
            cfg.inner_tol = tol;
            cfg.product_tol = tol;
        }
        cfg
    }

    fn output(&self, name: &str) -> Result<PathBuf, Failure> {
        fs::create_dir_all(&self.out_dir).map_err(|e| Failure::io(format!("{}: {e}", self.out_dir.display())))?;
        Ok(self.out_dir.join(name))
    }
}

fn factorize_any(plant: &StateSpaceModel, cfg: &FactorizationConfig) -> Result<FactorizationResult, Failure> {
    Ok(match plant.domain() {
        Domain::DiscreteZ => factorize_discrete(plant, cfg)?,
        Domain::ContinuousS => green_factorize_estimation(plant, cfg)?,
    })
}

fn vec_of(v: &Vector) -> Vec<f64> {
    v.iter().copied().collect()
}

fn rows_of(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

#[derive(Serialize)]
struct FactorizeSummary<'a> {
    ell: usize,
    route: Route,
    already_outer: bool,
    q_minus_x_eigenvalues: &'a [f64],
    rank_gap: f64,
    verification: &'a VerificationReport,
}

pub fn factorize(system: &Path, regularize: Option<f64>, common: &Common) -> Result<String, Failure> {
    let mut plant = load_system(system)?;
    if let Some(eps) = regularize {
        plant = regularize_feedthrough(&plant, eps)?;
    }
    let fac = factorize_any(&plant, &common.factorization())?;
    let stage = &fac.stage;
    let summary = FactorizeSummary {
        ell: fac.ell,
        route: fac.route,
        already_outer: fac.ell == 0,
        q_minus_x_eigenvalues: &stage.eigenvalues,
        rank_gap: stage.gap,
        verification: &fac.verification,
    };
    write_system(&common.output("outer.json")?, &fac.outer, json!({ "role": "outer factor" }))?;
    write_system(&common.output("inner.json")?, &fac.inner, json!({ "role": "inner factor" }))?;
    write_json(&common.output("factorization.json")?, &summary)?;
    let v = &fac.verification;
    if !v.passed {
        return Err(Failure::verification(format!(
            "verification failed: inner residual {:.3e}, product residual {:.3e} (bound {:.3e}), outer min singular value {:.3e}",
            v.inner_residual, v.product_residual, v.product_bound, v.outer_min_singular_value
        )));
    }
    let note = if fac.ell == 0 { " (system is already outer)" } else { "" };
    Ok(format!("ell={} route={:?} verification=passed{note}", fac.ell, fac.route))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Method {
    Sise,
    Highd,
}

fn measurements(path: &Path, outputs: usize) -> Result<Vec<Vector>, Failure> {
    let (header, rows) = read_signal(path)?;
    if !rows.is_empty() && header.len() != outputs {
        return Err(Failure::parse(format!(
            "{}: {} columns, the system has {outputs} outputs",
            path.display(),
            header.len()
        )));
    }
    Ok(rows)
}

pub fn estimate(system: &Path, data: &Path, method: Method, use_outer: bool, common: &Common) -> Result<String, Failure> {
    let plant = load_system(system)?;
    let ys = measurements(data, plant.outputs())?;
    let n = plant.n();
    let path = common.output("estimate.csv")?;
    match method {
        Method::Sise => {
            let target = if use_outer { factorize_any(&plant, &common.factorization())?.outer } else { plant.clone() };
            let run = run_sise(&target, &ys, &SiseInit::standard(n))?;
            let mut header = vec!["t".to_owned()];
            header.extend(indexed("x_hat", n));
            header.extend(indexed("d_hat", target.inputs()));
            header.push("P_trace".into());
            let mut table = Table::create(&path, &header)?;
            for (k, (x, d)) in run.x_hat.iter().zip(&run.d_hat).enumerate() {
                let mut row = vec![(k + 1).to_string()];
                row.extend(x.iter().chain(d.iter()).map(|&v| fmt_num(v)));
                row.push(fmt_num(run.p_trace[k]));
                table.row(&row)?;
            }
            table.finish()?;
            write_json(
                &common.output("estimate.json")?,
                &json!({
                    "method": "sise",
                    "system": if use_outer { "outer factor" } else { "plant" },
                    "steps": run.x_hat.len(),
                    "diverged": run.diverged,
                    "divergence_onset": run.divergence_onset,
                    "warning": run.warning,
                }),
            )?;
            Ok(format!("sise steps={} diverged={}", run.x_hat.len(), run.diverged))
        }
        Method::Highd => {
            let eps = common.epsilon.unwrap_or(1e-8);
            if !(eps > 0.0) {
                return Err(Failure::new(crate::failure::PRECONDITION, "epsilon must be positive"));
            }
            let m = plant.inputs();
            let d_cov = Mat::identity(m, m) / eps;
            let steady = kf_highd_steady(&plant, &d_cov)?;
            let mut kf = KalmanFilter::steady(&plant, &d_cov, &Vector::zeros(n))?;
            let mut header = vec!["t".to_owned()];
            header.extend(indexed("x_hat", n));
            header.extend(indexed("innovation", plant.outputs()));
            let mut table = Table::create(&path, &header)?;
            for (k, y) in ys.iter().enumerate() {
                let step = kf.step(y)?;
                let mut row = vec![(k + 1).to_string()];
                row.extend(step.x_hat.iter().chain(step.innovation.iter()).map(|&v| fmt_num(v)));
                table.row(&row)?;
            }
            table.finish()?;
            write_json(
                &common.output("estimate.json")?,
                &json!({
                    "method": "highd",
                    "epsilon": eps,
                    "steps": ys.len(),
                    "gain": rows_of(&steady.gain),
                    "riccati_relative_residual": steady.relative_residual,
                    "closed_loop_radius": steady.closed_loop_radius,
                }),
            )?;
            Ok(format!("highd steps={} epsilon={eps:e}", ys.len()))
        }
    }
}

pub fn experiment(scenario: &Path, trials: Option<usize>, common: &Common) -> Result<String, Failure> {
    let mut cfg = load_scenario(scenario)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(eps) = common.epsilon {
        cfg.epsilon = eps;
    }
    if let Some(t) = trials {
        cfg.trials = t;
    }
    cfg.factorization = common.factorization();
    let report = run_experiment(&cfg)?;
    let agg = &report.aggregate;

    let trial_rows: Vec<_> = report
        .trials
        .iter()
        .map(|t| {
            json!({
                "trial": t.trial,
                "output_mismatch": t.output_mismatch,
                "initial_gap": t.gap_curve.first(),
                "final_gap": t.gap_curve.last(),
                "sise_plant": t.sise_plant,
                "sise_outer": t.sise_outer,
                "error_at_checkpoint": t.error_at_checkpoint.as_ref().map(vec_of),
                "equivalence": t.equivalence,
                "errors": t.errors,
            })
        })
        .collect();
    let stats = report.stats.as_ref().map(|s| {
        json!({
            "f_mean": vec_of(&s.f_stats.mean),
            "d_mean": vec_of(&s.recovered.mean),
            "max_relative_error": s.max_relative_error,
        })
    });
    let summary = json!({
        "seed": cfg.seed,
        "horizon": cfg.horizon,
        "factorization": {
            "ell": report.factorization.ell,
            "route": report.factorization.route,
            "verification": report.factorization.verification,
        },
        "aggregate": {
            "trials": agg.trials,
            "completed": agg.completed,
            "checkpoint": agg.checkpoint,
            "mean_error": agg.mean_error.as_ref().map(vec_of),
            "standard_error": agg.standard_error.as_ref().map(vec_of),
            "within_three_se": agg.within_three_se,
            "fitted_rate": agg.fitted_rate,
            "terminal_gap_ratio": agg.terminal_gap_ratio,
            "max_eig_a": agg.max_eig_a,
            "max_eig_inner": agg.max_eig_inner,
            "rate_bound": agg.rate_bound,
            "sise_plant_divergences": agg.sise_plant_divergences,
            "sise_outer_divergences": agg.sise_outer_divergences,
            "max_equivalence_ratio": agg.max_equivalence_ratio,
            "max_output_mismatch": agg.max_output_mismatch,
        },
        "trials": trial_rows,
        "stats": stats,
    });
    write_json(&common.output("experiment.json")?, &summary)?;

    if let Some(rep) = &report.representative {
        let (n, m, p) = (cfg.plant.n(), cfg.plant.inputs(), cfg.plant.outputs());
        let mut header = vec!["t".to_owned()];
        header.extend(indexed("x", n));
        header.extend(indexed("x_outer", n));
        header.push("gap".into());
        header.push("mean_gap".into());
        header.extend(indexed("d", m));
        header.extend(indexed("f", m));
        header.extend(indexed("y", p));
        let outer = rep.sise_outer.as_ref();
        let plant_run = rep.sise_plant.as_ref();
        let highd = rep.highd_x_hat.as_ref();
        if outer.is_some() {
            header.extend(indexed("x_hat_outer", n));
            header.extend(indexed("d_hat_outer", m));
            header.push("P_trace_outer".into());
        }
        if plant_run.is_some() {
            header.push("P_trace_plant".into());
        }
        if highd.is_some() {
            header.extend(indexed("x_hat_highd", n));
        }
        let mut table = Table::create(&common.output("trajectories.csv")?, &header)?;
        let traj = &rep.plant;
        for t in 0..traj.x.len() {
            let mut row = vec![t.to_string()];
            let x = &traj.x[t];
            let xo = &rep.factored.x_outer[t];
            row.extend(x.iter().chain(xo.iter()).map(|&v| fmt_num(v)));
            row.push(fmt_num((x - xo).norm()));
            row.push(fmt_num(agg.mean_gap_curve[t]));
            row.extend(traj.d[t].iter().chain(rep.factored.f[t].iter()).chain(traj.y[t].iter()).map(|&v| fmt_num(v)));
            // Estimator entry k belongs to time k + 1.
            let k = t.checked_sub(1);
            let cell = |v: Option<f64>| v.map(fmt_num).unwrap_or_default();
            if let Some(r) = outer {
                let at = k.filter(|&k| k < r.x_hat.len());
                row.extend((0..n).map(|i| cell(at.map(|k| r.x_hat[k][i]))));
                row.extend((0..m).map(|j| cell(at.map(|k| r.d_hat[k][j]))));
                row.push(cell(at.map(|k| r.p_trace[k])));
            }
            if let Some(r) = plant_run {
                row.push(cell(k.filter(|&k| k < r.p_trace.len()).map(|k| r.p_trace[k])));
            }
            if let Some(xs) = highd {
                let at = k.filter(|&k| k < xs.len());
                row.extend((0..n).map(|i| cell(at.map(|k| xs[k][i]))));
            }
            table.row(&row)?;
        }
        table.finish()?;
    }
    if let Some(s) = &report.stats {
        let m = cfg.plant.inputs();
        let mut header = vec!["omega".to_owned()];
        for i in 0..m {
            for j in 0..m {
                header.push(format!("phi_dd[{i}][{j}].re"));
                header.push(format!("phi_dd[{i}][{j}].im"));
                if s.reference_psd.is_some() {
                    header.push(format!("reference[{i}][{j}].re"));
                }
            }
        }
        let mut table = Table::create(&common.output("stats_psd.csv")?, &header)?;
        for (k, w) in s.recovered.frequencies.iter().enumerate() {
            let mut row = vec![fmt_num(*w)];
            for i in 0..m {
                for j in 0..m {
                    let v = s.recovered.psd[k][(i, j)];
                    row.push(fmt_num(v.re));
                    row.push(fmt_num(v.im));
                    if let Some(r) = &s.reference_psd {
                        row.push(fmt_num(r[k][(i, j)].re));
                    }
                }
            }
            table.row(&row)?;
        }
        table.finish()?;
    }
    let rate = agg.fitted_rate.map_or("n/a".to_owned(), |r| format!("{r:.4}"));
    Ok(format!(
        "trials={} ell={} fitted_rate={rate} bound={:.4} sise_plant_divergences={} sise_outer_divergences={}",
        agg.completed, report.factorization.ell, agg.rate_bound, agg.sise_plant_divergences, agg.sise_outer_divergences
    ))
}

pub fn stats(samples: &Path, inner: &Path, tau_max: usize, segment_len: usize, burn_in: usize, common: &Common) -> Result<String, Failure> {
    let inner = load_system(inner)?;
    let (_, rows) = read_signal(samples)?;
    let cfg = PsdConfig {
        tau_max,
        intervals: common.grid_points.unwrap_or(PsdConfig::default().intervals),
        segment_len,
        burn_in,
    };
    let f = estimate_stats(&rows, &cfg)?;
    let d = recover_d_stats(&f, &inner)?;
    let m = d.dim();
    let mut header = vec!["omega".to_owned()];
    for i in 0..m {
        for j in 0..m {
            header.push(format!("phi_dd[{i}][{j}].re"));
            header.push(format!("phi_dd[{i}][{j}].im"));
        }
    }
    let mut table = Table::create(&common.output("d_psd.csv")?, &header)?;
    for (w, phi) in d.frequencies.iter().zip(&d.psd) {
        let mut row = vec![fmt_num(*w)];
        for i in 0..m {
            for j in 0..m {
                row.push(fmt_num(phi[(i, j)].re));
                row.push(fmt_num(phi[(i, j)].im));
            }
        }
        table.row(&row)?;
    }
    table.finish()?;
    write_json(
        &common.output("d_stats.json")?,
        &json!({
            "samples": rows.len(),
            "f_mean": vec_of(&f.mean),
            "d_mean": vec_of(&d.mean),
            "d_autocov": d.autocov.iter().map(rows_of).collect::<Vec<_>>(),
        }),
    )?;
    Ok(format!("stats samples={} dim={m} grid={}", rows.len(), d.frequencies.len()))
}

pub fn verify(inner: &Path, plant: Option<&Path>, outer: Option<&Path>, common: &Common) -> Result<String, Failure> {
    let inner = load_system(inner)?;
    let cfg = common.factorization();
    let tol = common.tol.unwrap_or(1e-8);
    let grid = FrequencyGrid::log_clustered(cfg.grid_points, inner.domain());
    let inner_report = verify_inner(&inner, grid.points(), tol)?;
    let mut passed = inner_report.passed;
    let mut summary = json!({ "grid_points": grid.points().len(), "inner": inner_report });
    match (plant, outer) {
        (Some(plant), Some(outer)) => {
            let (plant, outer) = (load_system(plant)?, load_system(outer)?);
            let rp = plant.frequency_response(grid.points())?;
            let ro = outer.frequency_response(grid.points())?;
            let ri = inner.frequency_response(grid.points())?;
            if ro[0].ncols() != ri[0].nrows() || rp[0].shape() != (ro[0].nrows(), ri[0].ncols()) {
                return Err(Failure::parse("plant, outer and inner factors have incompatible shapes"));
            }
            let product = rp.iter().zip(&ro).zip(&ri).map(|((p, o), i)| (p - o * i).norm()).fold(0.0, f64::max);
            let scale = 1.0 + rp.iter().map(|p| p.norm()).fold(0.0, f64::max);
            let sigma = outer_min_singular_value(&outer, cfg.omega0)?;
            let product_passed = product < tol * scale;
            let outer_passed = sigma > cfg.outer_threshold;
            passed &= product_passed && outer_passed;
            summary["product_residual"] = json!(product);
            summary["product_bound"] = json!(tol * scale);
            summary["outer_min_singular_value"] = json!(sigma);
            summary["product_passed"] = json!(product_passed);
            summary["outer_passed"] = json!(outer_passed);
        }
        (None, None) => {}
        _ => return Err(Failure::parse("--plant and --outer must be given together")),
    }
    summary["passed"] = json!(passed);
    write_json(&common.output("verify.json")?, &summary)?;
    if !passed {
        return Err(Failure::verification(format!(
            "verification failed: inner residual {:.3e}",
            inner_report.max_residual
        )));
    }
    Ok(format!("verify passed: inner residual {:.3e}", inner_report.max_residual))
}
