use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::builder::{LaggedKernelSetup, BuildReport};
use crate::contrast::ContrastTable;
use crate::error::{Error, Result};
use crate::estimators::{
    aalen_additive, cox_fit, extended_km, log_surv_ratio, nelson_aalen_by_treatment, ByTreatment,
    CoxCovariates, IdentityCheck, StepFunction,
};
use crate::frailty::{
    collider_table, marginal_hazard, markov_violation_gap, ColliderScenario, ConditionalHazardSpec, TreatmentPath,
};
use crate::model_core::{cumulative, read_rows_csv, write_rows_csv, FrailtySpec, GridFunction, IllnessDeathModel};
use crate::numerics::SolverConfig;
use crate::rate_engine::{rate_treated, rate_untreated};
use crate::simulate::{simulate, to_counting_rows, SimConfig};

use super::format::sig6;
use super::{Command, FrailtyKind, Method, ModelArgs, ModelSource};

pub fn run(cmd: &Command, out_dir: &Path) -> Result<()> {
    match cmd {
        Command::Construct { params, .. } => construct(params, out_dir),
        Command::Rates { source, .. } => rates(source, out_dir),
        Command::Simulate { source, n, seed, censor, out, .. } => {
            let model = load_model(source)?;
            let cfg = SimConfig::new(*n, *seed, censor.unwrap_or(model.t_max()))?;
            let rows = to_counting_rows(&simulate(&model, &cfg)?)?;
            let path = out.clone().unwrap_or_else(|| out_dir.join("rows.csv"));
            write_rows_csv(BufWriter::new(File::create(&path)?), &rows)?;
            println!("wrote {} rows for {} subjects to {}", rows.len(), n, path.display());
            Ok(())
        }
        Command::Estimate { input, method, out, .. } => estimate(input, *method, out.as_deref(), out_dir),
        Command::Contrast { source, at, .. } => contrast(source, *at, out_dir),
        Command::FrailtyDemo { grid, h0, h1, frailty, variance, scale, u1, u2, at, .. } => {
            let spec = ConditionalHazardSpec::constant(grid.tmax, grid.step, *h0, *h1)?;
            let frailty = match frailty {
                FrailtyKind::Gamma => FrailtySpec::gamma(*variance)?,
                FrailtyKind::Degenerate => FrailtySpec::degenerate(*scale)?,
            };
            frailty_demo(&spec, &frailty, *u1, *u2, *at, out_dir)
        }
        Command::Collider { p1, effect, z, pz, .. } => {
            let (z, pz) = (parse_list(z)?, parse_list(pz)?);
            if z.len() != pz.len() {
                return Err(Error::InvalidParameter(format!("{} frailty values but {} probabilities", z.len(), pz.len())));
            }
            let scenario = ColliderScenario { p1: *p1, effect: *effect, frailty_levels: z.into_iter().zip(pz).collect() };
            collider(&scenario, out_dir)
        }
        Command::Reproduce { section, params, n, seed, .. } => {
            if *section != 5 {
                return Err(Error::InvalidParameter(format!("no reproduction recipe for section {section}")));
            }
            reproduce(params, *n, *seed, out_dir)
        }
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| Error::InvalidParameter(format!("cannot parse `{p}` as a number"))))
        .collect()
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    Ok(csv::Writer::from_path(path)?)
}

fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

fn setup(p: &ModelArgs) -> LaggedKernelSetup {
    LaggedKernelSetup {
        lambda01: p.lambda01,
        early: p.early,
        late: p.late,
        lag: p.lag,
        beta: p.beta,
        t_max: p.grid.tmax,
        step: p.grid.step,
    }
}

fn solver(p: &ModelArgs) -> Result<SolverConfig> {
    SolverConfig::new(p.solver.tol, p.solver.max_iter, p.solver.damping)
}

/// Builds the model and fails with a non-convergence error if the fixed
/// point was not reached.
fn construct_model(p: &ModelArgs) -> Result<(IllnessDeathModel, BuildReport)> {
    let (model, report) = setup(p).construct(&solver(p)?)?;
    if !report.converged {
        return Err(Error::NonConvergence {
            iterations: report.iterations.len() - 1,
            residual: report.final_deviation(),
        });
    }
    Ok((model, report))
}

fn load_model(src: &ModelSource) -> Result<IllnessDeathModel> {
    match &src.model {
        None => Ok(construct_model(&src.params)?.0),
        Some(path) => read_model_csv(path, &src.params),
    }
}

fn read_model_csv(path: &Path, p: &ModelArgs) -> Result<IllnessDeathModel> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    if header != ["t", "lambda01", "lambda02"] {
        return Err(Error::InvalidParameter(format!(
            "{}: expected header t,lambda01,lambda02, got {}",
            path.display(),
            header.join(",")
        )));
    }
    let (mut t, mut l01, mut l02) = (Vec::new(), Vec::new(), Vec::new());
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i).and_then(|s| s.parse().ok()).ok_or_else(|| {
                Error::InvalidParameter(format!("{} line {}: bad number", path.display(), line + 2))
            })
        };
        t.push(num(0)?);
        l01.push(num(1)?);
        l02.push(num(2)?);
    }
    if t.len() < 2 || t[0] != 0.0 {
        return Err(Error::InvalidGrid(format!("{}: grid must start at 0 with two or more nodes", path.display())));
    }
    let step = t[1] - t[0];
    if t.iter().enumerate().any(|(k, &x)| (x - k as f64 * step).abs() > 1e-6) {
        return Err(Error::InvalidGrid(format!("{}: times are not equally spaced", path.display())));
    }
    let t_max = step * (t.len() - 1) as f64;
    let kernel = setup(p).kernel()?;
    IllnessDeathModel::new(GridFunction::new(t_max, step, l01)?, GridFunction::new(t_max, step, l02)?, kernel)
}

fn write_model(path: &Path, model: &IllnessDeathModel) -> Result<()> {
    write_table(
        path,
        &["t", "lambda01", "lambda02"],
        model
            .lambda01()
            .nodes()
            .zip(model.lambda02().values())
            .map(|((t, a), b)| vec![sig6(t), sig6(a), sig6(*b)]),
    )
}

fn construct(p: &ModelArgs, out_dir: &Path) -> Result<()> {
    let (model, report) = setup(p).construct(&solver(p)?)?;
    write_model(&out_dir.join("model.csv"), &model)?;
    write_table(
        &out_dir.join("iterations.csv"),
        &["iter", "sup_deviation"],
        report.iterations.iter().map(|r| vec![r.iter.to_string(), sig6(r.sup_deviation)]),
    )?;
    let mut rows = Vec::new();
    for rec in &report.iterations {
        for ((t, l02), r12) in rec.lambda02.nodes().zip(rec.r12.values()) {
            let ratio = if l02 > 0.0 { r12 / l02 } else { f64::NAN };
            rows.push(vec![rec.iter.to_string(), sig6(t), sig6(l02), sig6(*r12), sig6(ratio)]);
        }
    }
    write_table(&out_dir.join("iterates.csv"), &["iter", "t", "lambda02", "r12", "rate_ratio"], rows)?;
    for r in &report.iterations {
        println!("iter {}: sup|RR - e^beta| = {}", r.iter, sig6(r.sup_deviation));
    }
    if !report.converged {
        return Err(Error::NonConvergence {
            iterations: report.iterations.len() - 1,
            residual: report.final_deviation(),
        });
    }
    println!("converged after {} iterations", report.iterations.len() - 1);
    Ok(())
}

fn rates(src: &ModelSource, out_dir: &Path) -> Result<()> {
    let model = load_model(src)?;
    let r12 = rate_treated(&model);
    let r02 = rate_untreated(&model);
    write_table(
        &out_dir.join("rates.csv"),
        &["t", "r12", "r02", "rate_ratio"],
        r12.nodes().zip(r02.values()).map(|((t, a), b)| {
            let ratio = if *b > 0.0 { a / b } else { f64::NAN };
            vec![sig6(t), sig6(a), sig6(*b), sig6(ratio)]
        }),
    )
}

fn step_rows(est: &ByTreatment<StepFunction>) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for a in [0u8, 1] {
        let s = est.level(a);
        rows.push(vec![a.to_string(), "0".into(), sig6(s.initial())]);
        for (t, v) in s.jump_times().iter().zip(s.values()) {
            rows.push(vec![a.to_string(), sig6(*t), sig6(*v)]);
        }
    }
    rows
}

fn estimate(input: &Path, method: Method, out: Option<&Path>, out_dir: &Path) -> Result<()> {
    let rows = read_rows_csv(File::open(input)?)?;
    let name = match method {
        Method::Ekm => "ekm",
        Method::Na => "na",
        Method::Cox => "cox",
        Method::CoxDuration => "cox_duration",
        Method::Aalen => "aalen",
    };
    let path: PathBuf = out.map(Path::to_path_buf).unwrap_or_else(|| out_dir.join(format!("estimate_{name}.csv")));
    match method {
        Method::Ekm => write_table(&path, &["level", "t", "survival"], step_rows(&extended_km(&rows)?))?,
        Method::Na => write_table(&path, &["level", "t", "cumulative_rate"], step_rows(&nelson_aalen_by_treatment(&rows)?))?,
        Method::Cox => {
            let fit = cox_fit(&rows, CoxCovariates::CurrentLevel)?;
            let line = vec![
                sig6(fit.beta()),
                sig6(fit.model_se[0]),
                sig6(fit.robust_se[0]),
                sig6(fit.loglik),
                fit.iterations.to_string(),
            ];
            println!("beta_hat,model_se,robust_se,loglik,iters\n{}", line.join(","));
            write_table(&path, &["beta_hat", "model_se", "robust_se", "loglik", "iters"], [line])?;
        }
        Method::CoxDuration => {
            let fit = cox_fit(&rows, CoxCovariates::CurrentLevelPlusDuration)?;
            let header = [
                "beta_hat", "gamma_hat", "beta_model_se", "gamma_model_se", "beta_robust_se", "gamma_robust_se", "loglik", "iters",
            ];
            let line = vec![
                sig6(fit.coef[0]),
                sig6(fit.coef[1]),
                sig6(fit.model_se[0]),
                sig6(fit.model_se[1]),
                sig6(fit.robust_se[0]),
                sig6(fit.robust_se[1]),
                sig6(fit.loglik),
                fit.iterations.to_string(),
            ];
            println!("{}\n{}", header.join(","), line.join(","));
            write_table(&path, &header, [line])?;
        }
        Method::Aalen => {
            let fit = aalen_additive(&rows)?;
            write_table(
                &path,
                &["t", "B0", "B1"],
                fit.b0
                    .jump_times()
                    .iter()
                    .zip(fit.b0.values().iter().zip(fit.b1.values()))
                    .map(|(t, (a, b))| vec![sig6(*t), sig6(*a), sig6(*b)]),
            )?;
            let chk = IdentityCheck::compute(&rows)?;
            let verdict = if chk.passes(1e-12) { "PASS" } else { "FAIL" };
            println!("aalen_na_identity: {verdict}");
            println!(
                "compared {} event times, {} singular, max deviation {}",
                chk.compared,
                chk.singular,
                sig6(chk.max_abs_dev)
            );
        }
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn contrast(src: &ModelSource, at: Option<f64>, out_dir: &Path) -> Result<()> {
    let model = load_model(src)?;
    let table = ContrastTable::compute(&model)?;
    write_table(
        &out_dir.join("contrast.csv"),
        &["t", "S_always_true", "S_never_true", "S_treated_ratebased", "S_untreated_ratebased", "causal_hr", "rate_ratio"],
        table.rows().map(|r| r.iter().map(|v| sig6(*v)).collect()),
    )?;
    let t = at.unwrap_or(model.t_max());
    let (c, r) = (table.causal_contrast(t), table.rate_based_contrast(t));
    println!("causal_contrast at t={}: {:.2} (unrounded {})", sig6(t), c, sig6(c));
    println!("rate_based_contrast at t={}: {:.2} (unrounded {})", sig6(t), r, sig6(r));
    Ok(())
}

fn frailty_demo(
    spec: &ConditionalHazardSpec,
    frailty: &FrailtySpec,
    u1: f64,
    u2: f64,
    at: f64,
    out_dir: &Path,
) -> Result<()> {
    let m1 = marginal_hazard(spec, frailty, TreatmentPath::from(u1))?;
    let m2 = marginal_hazard(spec, frailty, TreatmentPath::from(u2))?;
    let from = u1.max(u2);
    let mut rows = Vec::new();
    for ((t, a), b) in m1.nodes().zip(m2.values()) {
        let gap = if t >= from { sig6(markov_violation_gap(spec, frailty, t, u1, u2)?) } else { String::new() };
        rows.push(vec![sig6(t), sig6(a), sig6(*b), gap]);
    }
    write_table(&out_dir.join("frailty_demo.csv"), &["t", "marginal_path_u1", "marginal_path_u2", "gap"], rows)?;
    let gap = markov_violation_gap(spec, frailty, at, u1, u2)?;
    println!("markov_violation_gap at t={} (u1={}, u2={}): {}", sig6(at), sig6(u1), sig6(u2), sig6(gap));
    Ok(())
}

fn collider(s: &ColliderScenario, out_dir: &Path) -> Result<()> {
    let table = collider_table(s)?;
    let mut rows = Vec::new();
    for a1 in 0..2 {
        for a2 in 0..2 {
            rows.push(vec![a1.to_string(), a2.to_string(), sig6(table.death[a1][a2])]);
            println!("P(N2=1 | N1=0, A1={a1}, A2={a2}) = {}", sig6(table.death[a1][a2]));
        }
    }
    write_table(&out_dir.join("collider.csv"), &["a1", "a2", "p_death"], rows)
}

struct Check {
    name: String,
    value: String,
    target: String,
    pass: bool,
}

fn reproduce(p: &ModelArgs, n: usize, seed: u64, out_dir: &Path) -> Result<()> {
    let mut checks = Vec::new();
    let mut check = |name: &str, value: String, target: &str, pass: bool| {
        checks.push(Check { name: name.into(), value, target: target.into(), pass })
    };

    let (model, report) = construct_model(p)?;
    write_model(&out_dir.join("model.csv"), &model)?;
    let first = report.first_below(1e-3);
    let shown = match first {
        Some(k) => format!("{} at iteration {k}", sig6(report.iterations[k].sup_deviation)),
        None => sig6(report.final_deviation()),
    };
    check(
        "rate_ratio_sup_deviation",
        shown,
        "< 0.001 within 5 iterations, strictly decreasing",
        first.is_some_and(|k| k <= 5) && report.deviations_strictly_decrease(),
    );
    let slice = model
        .lambda02()
        .nodes()
        .filter(|&(t, _)| t <= 1.0 + 1e-9)
        .fold(0.0f64, |m, (_, v)| m.max((v - 0.6).abs()));
    check("lambda02_slice_max_dev", sig6(slice), "< 1e-4 from 0.6 on [0, 1]", slice < 1e-4);

    let table = ContrastTable::compute(&model)?;
    let t_end = model.t_max();
    let (c, r) = (table.causal_contrast(t_end), table.rate_based_contrast(t_end));
    check("causal_contrast", format!("{c:.2} ({})", sig6(c)), "0.22 +/- 0.005", (c - 0.22).abs() <= 0.005);
    check("rate_based_contrast", format!("{r:.2} ({})", sig6(r)), "0.14 +/- 0.005", (r - 0.14).abs() <= 0.005);

    let rows = to_counting_rows(&simulate(&model, &SimConfig::new(n, seed, t_end)?)?)?;
    write_rows_csv(BufWriter::new(File::create(out_dir.join("rows.csv"))?), &rows)?;
    let na = nelson_aalen_by_treatment(&rows)?;
    let exact = [cumulative(&rate_untreated(&model)), cumulative(&rate_treated(&model))];
    for a in [0u8, 1] {
        let sup = sup_step_vs_grid(na.level(a), &exact[a as usize], 2.5);
        check(&format!("nelson_aalen_sup_dev_level{a}"), sig6(sup), "< 0.02 on [0, 2.5]", sup < 0.02);
    }
    let km = extended_km(&rows)?;
    let mut worst = 0.0f64;
    let mut t = 0.5;
    while t <= 2.5 + 1e-9 {
        worst = worst.max((log_surv_ratio(&km.treated, &km.untreated, t)? - 2.0 / 3.0).abs());
        t += p.grid.step;
    }
    check("ekm_log_ratio_max_dev", sig6(worst), "< 0.05 from 2/3 on [0.5, 2.5]", worst < 0.05);
    let fit = cox_fit(&rows, CoxCovariates::CurrentLevel)?;
    check(
        "cox_beta_hat",
        format!("{} (model se {}, robust se {})", sig6(fit.beta()), sig6(fit.model_se[0]), sig6(fit.robust_se[0])),
        "log(2/3) +/- 0.03",
        (fit.beta() - (2.0f64 / 3.0).ln()).abs() <= 0.03,
    );

    let mut out = BufWriter::new(File::create(out_dir.join("reproduce_summary.txt"))?);
    for c in &checks {
        let line = format!("{}: {} [target {}] {}", c.name, c.value, c.target, if c.pass { "PASS" } else { "FAIL" });
        println!("{line}");
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

/// Sup over `[0, upto]` of `|step - exact|`, checking both sides of every
/// jump and every grid node.
fn sup_step_vs_grid(step: &StepFunction, exact: &GridFunction, upto: f64) -> f64 {
    let mut sup = 0.0f64;
    for (t, v) in exact.nodes().take_while(|&(t, _)| t <= upto + 1e-12) {
        sup = sup.max((step.eval(t) - v).abs());
    }
    for (k, &t) in step.jump_times().iter().enumerate().take_while(|(_, &t)| t <= upto) {
        let before = if k == 0 { step.initial() } else { step.values()[k - 1] };
        let e = exact.eval(t);
        sup = sup.max((before - e).abs()).max((step.values()[k] - e).abs());
    }
    sup
}
