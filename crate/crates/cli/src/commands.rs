//! One function per subcommand; each writes its files through [`Output`] and
//! returns a one-line summary for the terminal.

use fkdmc::analysis::{self, asymptotic_variance_terms, clt_empirical, convergence_sweep, divergence_experiment};
use fkdmc::engine::{energy_estimate, run, GaussianFk, Observable, RunConfig};
use fkdmc::exec::Backend;
use fkdmc::gaussian::{exact_flow, ground_state, updated_flow};
use fkdmc::importance::{build_k_step, build_updated_k_step, min_stable_k, stability_gap, KStepModel};
use fkdmc::{linalg, GaussianMeasure, GaussianModel, GroundStateTriple, Vector};
use serde::Serialize;

use crate::config::{Config, KStepFlow};
use crate::error::{CliError, CliResult};
use crate::output::{num, Output};

fn strings<I: IntoIterator<Item = S>, S: Into<String>>(items: I) -> Vec<String> {
    items.into_iter().map(Into::into).collect()
}

fn measure_header(d: usize) -> Vec<String> {
    let mut h: Vec<String> = (0..d).map(|i| format!("mean_{i}")).collect();
    for i in 0..d {
        for j in 0..d {
            h.push(format!("cov_{i}{j}"));
        }
    }
    h
}

fn measure_cells(mu: &GaussianMeasure) -> Vec<String> {
    mu.mean.iter().copied().chain(linalg::to_row_major(&mu.cov)).map(num).collect()
}

fn solve_ground_state(config: &Config, model: &GaussianModel) -> CliResult<GroundStateTriple> {
    Ok(ground_state(model, config.exact.tolerance, config.exact.max_iter)?)
}

fn one_dimensional(model: &GaussianModel, what: &str) -> CliResult<()> {
    if model.dim() == 1 {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "`{what}` needs a one-dimensional model, got dimension {}",
            model.dim()
        )))
    }
}

#[derive(Serialize)]
struct GroundStateSummary {
    e0: f64,
    /// `-ln(E0) / delta` when the model has a time step.
    energy: Option<f64>,
    s_inf: Vec<f64>,
    p_inf: Vec<f64>,
    riccati_residual: f64,
    covariance_residual: f64,
    iterations: usize,
}

pub fn exact(config: &Config, out: &mut Output) -> CliResult<String> {
    let model = config.model()?;
    let eta0 = config.initial()?;
    let n = config.exact.steps;
    let gs = solve_ground_state(config, &model)?;
    let predicted = exact_flow(&model, &eta0, n)?;
    let updated = updated_flow(&model, &eta0, n)?;

    let mut header = strings(["step", "kind"]);
    header.extend(measure_header(model.dim()));
    header.push("eta_g".into());
    let mut rows = Vec::new();
    for (step, (p, u)) in predicted.iter().zip(&updated).enumerate() {
        let mut row = vec![step.to_string(), "predicted".into()];
        row.extend(measure_cells(p));
        row.push(num(model.expected_potential(p)?));
        rows.push(row);
        let mut row = vec![step.to_string(), "updated".into()];
        row.extend(measure_cells(u));
        row.push(String::new());
        rows.push(row);
    }
    out.csv(None, &header, &rows)?;
    out.json(&GroundStateSummary {
        e0: gs.e0,
        energy: model.time_step().map(|dt| gs.energy(dt)),
        s_inf: linalg::to_row_major(&gs.s_inf),
        p_inf: linalg::to_row_major(&gs.p_inf),
        riccati_residual: gs.riccati_residual,
        covariance_residual: gs.covariance_residual,
        iterations: gs.iterations,
    })?;
    Ok(format!("E0 = {}", gs.e0))
}

fn observables(config: &Config, dim: usize) -> CliResult<Vec<Observable>> {
    if config.run.observables.is_empty() {
        return Ok(analysis::coordinate_observables(dim));
    }
    config
        .run
        .observables
        .iter()
        .map(|name| {
            Observable::parse(name, dim).ok_or_else(|| {
                CliError::Config(format!(
                    "field `run.observables`: unknown observable `{name}` (use x<i> or x<i>^2 with i < {dim})"
                ))
            })
        })
        .collect()
}

#[derive(Serialize)]
struct DmcSummary {
    n_walkers: usize,
    n_steps: usize,
    policy: String,
    estimate: fkdmc::engine::EnergyEstimate,
    exact_e0: f64,
    exact_energy: Option<f64>,
}

pub fn dmc(config: &Config, backend: Backend, out: &mut Output) -> CliResult<String> {
    let model = config.model()?;
    let eta0 = config.initial()?;
    let obs = observables(config, model.dim())?;
    let fk = GaussianFk::new(model.clone(), eta0.clone())?;
    let run_config = RunConfig {
        n_walkers: config.run.walkers,
        n_steps: config.run.steps,
        seed: config.seed,
        policy: config.run.policy,
    };
    let series = run(&fk, run_config, &obs, backend)?;
    let exact = exact_flow(&model, &eta0, config.run.steps)?;

    let d = model.dim();
    let mut header = strings(["step"]);
    header.extend((0..d).map(|i| format!("mean_{i}")));
    header.extend((0..d).map(|i| format!("exact_mean_{i}")));
    // Observables are estimated under the updated (reweighted) measure.
    header.extend(obs.iter().map(|o| format!("psi_{}", o.name)));
    header.extend(strings(["eta_g", "exact_eta_g"]));
    let mut rows = Vec::new();
    for (rec, mu) in series.records.iter().zip(&exact) {
        let mut row = vec![rec.step.to_string()];
        row.extend(rec.mean.iter().copied().map(num));
        row.extend(mu.mean.iter().copied().map(num));
        row.extend(rec.updated.iter().copied().map(num));
        row.push(num(rec.eta_g()));
        row.push(num(model.expected_potential(mu)?));
        rows.push(row);
    }
    out.csv(None, &header, &rows)?;

    let estimate = energy_estimate(&series, config.run.burn_in())?;
    let gs = solve_ground_state(config, &model)?;
    out.json(&DmcSummary {
        n_walkers: config.run.walkers,
        n_steps: config.run.steps,
        policy: config.run.policy.to_string(),
        estimate,
        exact_e0: gs.e0,
        exact_energy: model.time_step().map(|dt| gs.energy(dt)),
    })?;
    Ok(format!(
        "E0 estimate {} +- {} (exact {})",
        estimate.e0, estimate.std_error, gs.e0
    ))
}

pub fn sweep(config: &Config, backend: Backend, out: &mut Output) -> CliResult<String> {
    let model = config.model()?;
    let eta0 = config.initial()?;
    let report = convergence_sweep(
        &model,
        &eta0,
        &config.sweep.walkers,
        config.run.steps,
        config.run.reps,
        config.seed,
        config.run.burn_in(),
        backend,
    )?;
    let header = strings(["n_walkers", "sup_l2_error", "argmax_step", "energy", "energy_std_error"]);
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.n_walkers.to_string(),
                num(r.sup_l2_error),
                r.argmax_step.to_string(),
                num(r.energy),
                num(r.energy_std_error),
            ]
        })
        .collect();
    out.csv(None, &header, &rows)?;
    out.json(&report)?;
    Ok(format!("fitted slope {:.4}", report.slope))
}

#[derive(Serialize)]
struct DivergeSummary<'a> {
    #[serde(flatten)]
    report: &'a analysis::DivergenceReport,
    early: usize,
    late: usize,
    ratio: f64,
}

pub fn diverge(config: &Config, backend: Backend, out: &mut Output) -> CliResult<String> {
    let model = config.model()?;
    one_dimensional(&model, "diverge")?;
    let eta0 = config.initial()?;
    let s = &config.diverge;
    if s.early > s.steps {
        return Err(CliError::Config(format!(
            "field `diverge.early`: {} exceeds `diverge.steps` = {}",
            s.early, s.steps
        )));
    }
    let report = divergence_experiment(&model, &eta0, s.walkers, s.steps, s.reps, config.seed, backend)?;
    let header = strings(["step", "mean_abs_error", "std_error"]);
    let rows: Vec<Vec<String>> = report
        .mean_abs_error
        .iter()
        .zip(&report.std_error)
        .enumerate()
        .map(|(n, (m, se))| vec![n.to_string(), num(*m), num(*se)])
        .collect();
    out.csv(None, &header, &rows)?;
    let ratio = report.ratio(s.early, s.steps);
    out.json(&DivergeSummary {
        report: &report,
        early: s.early,
        late: s.steps,
        ratio,
    })?;
    Ok(format!(
        "growth {} (slope {:.4}, 95% CI [{:.4}, {:.4}], error ratio {:.3e})",
        report.growth, report.slope, report.slope_ci[0], report.slope_ci[1], ratio
    ))
}

#[derive(Serialize)]
struct VarianceSummary {
    #[serde(flatten)]
    clt: analysis::CltReport,
    relative_error: f64,
    /// Largest partial sum of the asymptotic variance series over the horizon.
    sup_partial_sum: f64,
    horizon: usize,
}

pub fn variance(config: &Config, backend: Backend, out: &mut Output) -> CliResult<String> {
    let model = config.model()?;
    one_dimensional(&model, "variance")?;
    let s = &config.variance;
    let terms = asymptotic_variance_terms(&model, s.horizon)?;
    let mut partial = 0.0;
    let mut sup: f64 = 0.0;
    let mut rows = Vec::with_capacity(terms.len());
    for (j, t) in terms.iter().enumerate() {
        partial += t;
        sup = sup.max(partial);
        rows.push(vec![j.to_string(), num(*t), num(partial)]);
    }
    out.csv(None, &strings(["term", "value", "partial_sum"]), &rows)?;
    let clt = clt_empirical(&model, s.step, s.walkers, s.reps, config.seed, backend)?;
    let relative_error = clt.relative_error();
    let line = format!(
        "N*Var = {:.5} vs asymptotic variance {:.5} (relative error {:.3})",
        clt.scaled_variance, clt.reference, relative_error
    );
    out.json(&VarianceSummary {
        clt,
        relative_error,
        sup_partial_sum: sup,
        horizon: s.horizon,
    })?;
    Ok(line)
}

pub fn stability(config: &Config, out: &mut Output) -> CliResult<String> {
    let model = config.model()?;
    let report = analysis::stability(&model)?;
    out.json(&report)?;
    Ok(format!("stable: {} (rho = {:.6})", report.holds, report.rho))
}

#[derive(Serialize)]
struct ImportanceSummary {
    k: usize,
    searched: bool,
    flow: KStepFlow,
    stability_gap: f64,
    n_walkers: usize,
    reps: usize,
    first_l2_error: f64,
    last_l2_error: f64,
}

pub fn importance(config: &Config, backend: Backend, out: &mut Output) -> CliResult<String> {
    let model = config.model()?;
    let eta0 = config.initial()?;
    let s = &config.importance;
    let k = match s.k {
        Some(0) => return Err(CliError::Config("field `importance.k`: must be at least 1".into())),
        Some(k) => k,
        None => min_stable_k(&model, s.k_max)?,
    };
    let ks: KStepModel = match s.flow {
        KStepFlow::Predicted => build_k_step(&model, k, &eta0)?,
        KStepFlow::Updated => build_updated_k_step(&model, k, &eta0)?,
    };
    let steps = config.run.steps;
    let targets: Vec<Vector> = ks.target_flow(&eta0, steps)?.into_iter().map(|m| m.mean).collect();
    let table = analysis::replicated_errors(
        &ks,
        &targets,
        config.run.walkers,
        config.run.reps,
        config.seed,
        config.run.policy,
        backend,
    )?;
    let l2 = table.l2();
    let mean_abs = table.mean_abs();
    let rows: Vec<Vec<String>> = (0..=steps)
        .map(|n| vec![n.to_string(), (n * k).to_string(), num(l2[n]), num(mean_abs[n])])
        .collect();
    out.csv(None, &strings(["step", "base_step", "l2_error", "mean_abs_error"]), &rows)?;
    out.json(&ImportanceSummary {
        k,
        searched: s.k.is_none(),
        flow: s.flow,
        stability_gap: stability_gap(&ks.powers),
        n_walkers: config.run.walkers,
        reps: config.run.reps,
        first_l2_error: l2[0],
        last_l2_error: l2[steps],
    })?;
    Ok(format!("k = {k}; L2 error at step {steps}: {:.4e}", l2[steps]))
}
