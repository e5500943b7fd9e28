use std::path::Path;

use multibubble::configuration::{
    classify as classify_cfg, lozenge_family, multi_kernel_family, root_q0, Configuration,
};
use multibubble::dynamics::{
    bubble_tower_scenario, dipole_scenario, fit_series, integrate, BubbleState, IntegrateOptions,
    RateFit, Trajectory,
};
use multibubble::io::{
    config_to_json, parse_config_str, parse_trajectory_csv, to_canonical_json, TrajectoryTable,
};
use multibubble::rectangle::{
    approx_solution_constants, backward_verification, degenerate_rate_prefactor,
    drift_vectors_rectangle, linearization_matrix, reduction_fidelity, shoot_degenerate,
    shoot_from_coefficients, ShootingReport, SymmetricState,
};
use multibubble::selfsimilar::{renormalized_flow_check, solve_ratio_set, terminal_interaction};
use multibubble::{universal_constants, Error, UniversalConstants};
use serde_json::{json, Value};

use crate::output::{invalid, Context, Failure, Report};
use crate::{RatesArgs, RectangleRun, SimulateArgs};

const RATE_TOL: f64 = 0.02;
const PREFACTOR_TOL: f64 = 0.05;
const CONSERVATION_TOL: f64 = 1e-8;

type Outcome = Result<Report, Failure>;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path)
        .map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))
}

/// Parses a configuration and records the digest of its canonical form.
fn load_config(
    ctx: &mut Context,
    path: &Path,
) -> Result<(Configuration, UniversalConstants), Failure> {
    let cfg = parse_config_str(&read(path)?)?;
    ctx.dimension(Some(cfg.dim().get()))?;
    ctx.set_input(&config_to_json(&cfg));
    let consts = universal_constants(cfg.dim())?;
    Ok((cfg, consts))
}

fn load_table(path: &Path) -> Result<(String, TrajectoryTable), Failure> {
    let text = read(path)?;
    let table = parse_trajectory_csv(&text)?;
    Ok((text.replace("\r\n", "\n"), table))
}

fn consts_from_flags(ctx: &Context) -> Result<UniversalConstants, Failure> {
    Ok(universal_constants(ctx.dimension(None)?)?)
}

pub fn constants(ctx: &mut Context) -> Outcome {
    let c = consts_from_flags(ctx)?;
    let mut r = Report::new(true);
    r.set("N", c.dim.get());
    r.set("D", c.d);
    r.set("kappa0", c.kappa0);
    r.set("kappa1", c.kappa1);
    r.set("kappaInf", c.kappa_inf);
    r.set("integrals", c.integrals);
    Ok(r)
}

pub fn classify(ctx: &mut Context, config: &Path) -> Outcome {
    let (cfg, c) = load_config(ctx, config)?;
    let report = classify_cfg(&cfg, &c, ctx.global.tol)?;
    let mut r = Report::new(true);
    r.set("bubbles", cfg.len());
    r.set("N", cfg.dim().get());
    r.set("report", report);
    Ok(r)
}

fn emit_config(
    ctx: &mut Context,
    cfg: &Configuration,
    out: Option<&Path>,
    mut r: Report,
) -> Outcome {
    let text = config_to_json(cfg);
    ctx.set_input(&text);
    match ctx.artifact_path(out, "config.json") {
        Some(path) => {
            ctx.write_text(&path, &text)?;
        }
        None => r.stdout = Some(text),
    }
    Ok(r)
}

pub fn family_lozenge(ctx: &mut Context, d3: f64, out: Option<&Path>) -> Outcome {
    let m = lozenge_family(ctx.dimension(None)?, d3)?;
    let mut r = Report::new(true);
    r.set("d3", m.d3);
    r.set("d4", m.d4);
    r.set("kernel", m.kernel);
    r.set("residual", m.residual);
    emit_config(ctx, &m.config, out, r)
}

pub fn family_multikernel(ctx: &mut Context, l: usize, out: Option<&Path>) -> Outcome {
    let cfg = multi_kernel_family(ctx.dimension(None)?, l)?;
    let mut r = Report::new(true);
    r.set("L", l);
    r.set("bubbles", cfg.len());
    emit_config(ctx, &cfg, out, r)
}

fn initial_state(cfg: &Configuration, lambda0: &[f64]) -> Result<BubbleState, Failure> {
    let scales = match lambda0.len() {
        1 => vec![lambda0[0]; cfg.len()],
        k if k == cfg.len() => lambda0.to_vec(),
        k => {
            return Err(invalid(format!(
                "{k} initial scales for {} bubbles",
                cfg.len()
            )))
        }
    };
    Ok(BubbleState::new(0.0, scales, cfg.points().to_vec())?)
}

/// Writes the trajectory CSV and its events sidecar.
fn write_trajectory(
    ctx: &mut Context,
    traj: &Trajectory,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let Some(path) = ctx.artifact_path(out, "trajectory.csv") else {
        return Ok(());
    };
    let digest = ctx.digest();
    let w = ctx.create(&path)?;
    multibubble::io::write_trajectory_csv(traj, Some(&digest), w)?;
    let sidecar = path.with_extension("events.json");
    let events = to_canonical_json(&json!({"input_digest": digest, "events": traj.events}));
    ctx.write_text(&sidecar, &events)?;
    Ok(())
}

fn run_simulation(ctx: &mut Context, args: &SimulateArgs) -> Result<(Trajectory, Report), Failure> {
    let (cfg, c) = load_config(ctx, &args.config)?;
    if !(args.horizon > 0.0 && args.t_first > 0.0 && args.per_decade > 0) {
        return Err(invalid("horizon, t-first and per-decade must be positive"));
    }
    let initial = initial_state(&cfg, &args.lambda0)?;
    let mut opts = IntegrateOptions::default().with_log_checkpoints(
        args.t_first.min(args.horizon),
        args.horizon,
        args.per_decade,
    );
    if let Some(rtol) = ctx.global.rtol {
        opts.rtol = rtol;
    }
    let traj = integrate(&c, cfg.signs(), &initial, args.horizon, &opts)?;
    let drift = traj.conservation_drift();
    let mut r = Report::new(drift.within(CONSERVATION_TOL));
    r.set("samples", traj.len());
    r.set("stop", traj.stop_event());
    r.set("final_scales", &traj.last().scales);
    r.set("conservation", drift);
    r.set("rtol", opts.rtol);
    write_trajectory(ctx, &traj, args.out.as_deref())?;
    Ok((traj, r))
}

pub fn simulate(ctx: &mut Context, args: &SimulateArgs) -> Outcome {
    Ok(run_simulation(ctx, args)?.1)
}

fn component_index(component: usize, bubbles: usize) -> Result<usize, Failure> {
    if component == 0 || component > bubbles {
        return Err(invalid(format!(
            "component {component} outside 1..={bubbles}"
        )));
    }
    Ok(component - 1)
}

fn check_expectation(r: &mut Report, fit: &RateFit, expect: Option<f64>, tol: f64) {
    if let Some(e) = expect {
        let err = rel(fit.exponent, e);
        r.set("expected_exponent", e);
        r.set("exponent_rel_error", err);
        r.passed &= err <= tol;
    }
}

pub fn rates(ctx: &mut Context, args: &RatesArgs) -> Outcome {
    let (text, table) = load_table(&args.traj)?;
    ctx.set_input(&text);
    let i = component_index(args.component, table.bubbles)?;
    let fit = fit_series(&table.times(), &table.scale_series(i), args.decades)?;
    let mut r = Report::new(true);
    r.set("component", args.component);
    r.set("fit", fit);
    check_expectation(&mut r, &fit, args.expect, args.expect_tol);
    Ok(r)
}

pub fn selfsim_solve(ctx: &mut Context, config: &Path, seed: &[f64]) -> Outcome {
    let (cfg, c) = load_config(ctx, config)?;
    let a = multibubble::configuration::interaction_matrix(&cfg, &c)?;
    let cp = solve_ratio_set(&a, c.d, seed)?;
    let mut r = Report::new(cp.residual <= 1e-10);
    r.set("critical_point", cp);
    Ok(r)
}

pub fn selfsim_check(ctx: &mut Context, traj: &Path, config: &Path, decades: f64) -> Outcome {
    let (cfg, c) = load_config(ctx, config)?;
    let (text, table) = load_table(traj)?;
    ctx.set_input(&format!("{}{}", config_to_json(&cfg), text));
    let trajectory = table.into_trajectory(&c, cfg.signs())?;
    let a = terminal_interaction(&c, &trajectory)?;
    let check = renormalized_flow_check(&trajectory, &a, c.d, decades)?;
    let mut r = Report::new(check.max_increase <= 1e-6 && check.limit_point.is_some());
    match solve_ratio_set(&a, c.d, &check.terminal_mu) {
        Ok(cp) => {
            let off = check
                .terminal_mu
                .iter()
                .zip(&cp.mu)
                .fold(0.0f64, |m, (x, y)| m.max(rel(*x, *y)));
            r.passed &= off <= 0.01 && cp.residual <= 1e-10;
            r.set("newton_distance", off);
            r.set("critical_point", cp);
        }
        Err(e) => {
            r.passed = false;
            r.set("newton_error", e.code());
        }
    }
    r.set("flow", check);
    Ok(r)
}

fn shooting_body(r: &mut Report, shot: &ShootingReport) {
    let mut v = serde_json::to_value(shot).unwrap_or(Value::Null);
    if let Value::Object(map) = &mut v {
        map.remove("trajectory");
    }
    r.set("shooting", v);
    r.set("samples", shot.trajectory.samples.len());
    r.set("stop", shot.trajectory.stop);
}

fn shooting_verdict(shot: &ShootingReport) -> bool {
    rel(shot.fit.exponent, shot.expected_exponent) <= RATE_TOL
        && rel(shot.fit.prefactor, shot.formula_prefactor) <= PREFACTOR_TOL
        && shot.max_h <= shot.tube_bound
}

fn write_rectangle(
    ctx: &mut Context,
    traj: &multibubble::rectangle::RectangleTrajectory,
    out: Option<&Path>,
) -> Result<(), Failure> {
    if let Some(path) = ctx.artifact_path(out, "trajectory.csv") {
        let digest = ctx.digest();
        let w = ctx.create(&path)?;
        multibubble::io::write_rectangle_csv(traj, Some(&digest), w)?;
    }
    Ok(())
}

pub fn rectangle_shoot(
    ctx: &mut Context,
    run: &RectangleRun,
    radius: f64,
    coefficients: Option<&[f64]>,
) -> Outcome {
    let c = consts_from_flags(ctx)?;
    let result = match coefficients {
        Some(p) if p.len() != 2 => return Err(invalid("--coefficients takes exactly two values")),
        Some(p) => shoot_from_coefficients(&c, run.t0, run.horizon, [p[0], p[1]]),
        None => shoot_degenerate(&c, run.t0, run.horizon, radius),
    };
    match result {
        Ok(shot) => {
            let mut r = Report::new(shooting_verdict(&shot));
            shooting_body(&mut r, &shot);
            write_rectangle(ctx, &shot.trajectory, run.out.as_deref())?;
            Ok(r)
        }
        // Leaving the tube is a scientific outcome, not a crash.
        Err(Error::ShootingFailed { reason, exit_time }) => {
            let mut r = Report::new(false);
            r.set("verdict", "shooting_failed");
            r.set("reason", reason);
            r.set("exit_time", exit_time);
            Ok(r)
        }
        Err(e) => Err(e.into()),
    }
}

pub fn rectangle_spectrum(ctx: &mut Context) -> Outcome {
    let c = consts_from_flags(ctx)?;
    let mut r = Report::new(true);
    r.set("N", c.dim.get());
    r.set("linearization", linearization_matrix(&c));
    Ok(r)
}

pub fn rectangle_constants(ctx: &mut Context) -> Outcome {
    let c = consts_from_flags(ctx)?;
    let mut r = Report::new(true);
    r.set("N", c.dim.get());
    r.set("q0", root_q0(c.dim));
    r.set("approximate_solution", approx_solution_constants(&c));
    r.set("rate_prefactor", degenerate_rate_prefactor(&c)?);
    r.set("drift", drift_vectors_rectangle(&c)?);
    Ok(r)
}

pub fn rectangle_verify(ctx: &mut Context, run: &RectangleRun) -> Outcome {
    let c = consts_from_flags(ctx)?;
    let traj = backward_verification(&c, run.t0, run.horizon)?;
    let fit = traj.lambda_fit(2.0)?;
    let expected = -1.0 / (2.0 * c.d - 1.0);
    let mut r = Report::new(rel(fit.exponent, expected) <= RATE_TOL);
    r.set("fit", fit);
    r.set("expected_exponent", expected);
    r.set("quadratic_drift", traj.quadratic_drift());
    r.set("stop", traj.stop);
    write_rectangle(ctx, &traj, run.out.as_deref())?;
    Ok(r)
}

pub fn scenario_dipole(ctx: &mut Context, lambda0: f64, separation: f64, horizon: f64) -> Outcome {
    ctx.default_out_dir("runs/dipole");
    let rep = dipole_scenario(ctx.dimension(None)?, lambda0, separation, horizon)?;
    let mut r = Report::new(
        rel(rep.fit.exponent, rep.expected_exponent) <= RATE_TOL
            && rep.drift.within(CONSERVATION_TOL),
    );
    r.set("fit", rep.fit);
    r.set("expected_exponent", rep.expected_exponent);
    r.set("conservation", rep.drift);
    r.set("stop", rep.trajectory.stop_event());
    write_trajectory(ctx, &rep.trajectory, None)?;
    Ok(r)
}

pub fn scenario_tower(
    ctx: &mut Context,
    big: f64,
    small: f64,
    separation: f64,
    horizon: f64,
    same_signs: bool,
) -> Outcome {
    ctx.default_out_dir("runs/tower");
    let rep = bubble_tower_scenario(
        ctx.dimension(None)?,
        big,
        small,
        separation,
        horizon,
        same_signs,
    )?;
    let passed = rep.opposite_signs
        && rel(rep.small_fit.exponent, rep.expected_exponent) <= RATE_TOL
        && rep.big_final > 0.0
        && rel(rep.small_fit.prefactor, rep.predicted_prefactor) <= PREFACTOR_TOL
        && rep.drift.within(CONSERVATION_TOL);
    let mut r = Report::new(passed);
    r.set("small_fit", rep.small_fit);
    r.set("expected_exponent", rep.expected_exponent);
    r.set("big_initial", rep.big_initial);
    r.set("big_final", rep.big_final);
    r.set("predicted_prefactor", rep.predicted_prefactor);
    r.set("opposite_signs", rep.opposite_signs);
    r.set("conservation", rep.drift);
    r.set("stop", rep.trajectory.stop_event());
    write_trajectory(ctx, &rep.trajectory, None)?;
    Ok(r)
}

pub fn scenario_rectangle(ctx: &mut Context, t0: f64, horizon: f64) -> Outcome {
    ctx.default_out_dir("runs/rectangle");
    let c = consts_from_flags(ctx)?;
    let shot = shoot_degenerate(&c, t0, horizon, 0.1)?;
    let s0 = shot.trajectory.samples[0];
    let fidelity = reduction_fidelity(
        &c,
        &SymmetricState::new(s0.t, s0.lambda, s0.d, s0.q)?,
        horizon,
    )?;
    let drift = shot.trajectory.embedded(&c).conservation_drift();
    let mut r = Report::new(
        shooting_verdict(&shot)
            && drift.within(CONSERVATION_TOL)
            && fidelity.max_rel_diff <= CONSERVATION_TOL,
    );
    shooting_body(&mut r, &shot);
    r.set("conservation", drift);
    r.set("fidelity", fidelity);
    write_rectangle(ctx, &shot.trajectory, None)?;
    Ok(r)
}

pub fn scenario_custom(
    ctx: &mut Context,
    sim: &SimulateArgs,
    component: usize,
    decades: f64,
    expect: Option<f64>,
    expect_tol: f64,
) -> Outcome {
    ctx.default_out_dir("runs/custom");
    let (traj, mut r) = run_simulation(ctx, sim)?;
    let i = component_index(component, traj.signs.len())?;
    let fit = fit_series(&traj.times(), &traj.scale_series(i), decades)?;
    r.set("component", component);
    r.set("fit", fit);
    check_expectation(&mut r, &fit, expect, expect_tol);
    Ok(r)
}
