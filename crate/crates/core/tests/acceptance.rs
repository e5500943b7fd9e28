//! Acceptance harness: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test -p multibubble --test acceptance`.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use multibubble::configuration::{
    classify, interaction_matrix, lozenge_family, multi_kernel_family, nonnegative_kernel_witness,
    root_q0, Configuration, Verdict, DEFAULT_TOL,
};
use multibubble::constants::{kappa_infinity, universal_constants, Dimension, UniversalConstants};
use multibubble::dynamics::{bubble_tower_scenario, dipole_scenario, EventKind, Trajectory};
use multibubble::rectangle::{
    approx_solution_constants, degenerate_rate_prefactor, degenerate_rectangle,
    linearization_matrix, rectangle_configuration, reduction_fidelity, shoot_degenerate,
    ShootingReport, SymmetricState,
};
use multibubble::selfsimilar::{
    functional_i, gradient, renormalized_flow_check, solve_ratio_set, terminal_interaction,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::RngExt;
use proptest::test_runner::{RngAlgorithm, TestRng};

mod common;
use common::{beta_oracle, simplex_oracle, well_separated};

type Outcome = Result<String, String>;

fn dim(n: u32) -> Dimension {
    Dimension::new(n).unwrap()
}

fn consts(n: u32) -> UniversalConstants {
    universal_constants(dim(n)).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rng(stream: u8) -> TestRng {
    let mut seed = [0u8; 32];
    seed[0] = stream;
    TestRng::from_seed(RngAlgorithm::ChaCha, &seed)
}

fn embed(n: usize, coords: &[f64]) -> Vec<f64> {
    let mut p = vec![0.0; n];
    p[..coords.len()].copy_from_slice(coords);
    p
}

fn decades(traj: &Trajectory) -> f64 {
    let first = traj
        .samples
        .iter()
        .find(|s| s.t > 0.0)
        .map_or(f64::NAN, |s| s.t);
    (traj.last().t / first).log10()
}

fn spectral() -> Outcome {
    let mut worst = 0.0f64;
    for n in 7..=12 {
        let c = consts(n);
        let lin = linearization_matrix(&c);
        let a = 1.0 / (2.0 * c.d - 1.0);
        for (got, want) in lin.eigenvalues.iter().zip([-2.0 * c.d * a, 0.0, a]) {
            worst = worst.max((got - want).abs());
        }
        for (got, want) in lin.shifted_eigenvalues.iter().zip([-1.0, a, 2.0 * a]) {
            worst = worst.max((got - want).abs());
        }
    }
    ensure(worst <= 1e-12, || format!("max eigenvalue error {worst:e}"))?;
    Ok(format!("max eigenvalue error {worst:.2e}, N=7..12"))
}

fn roots_and_constants() -> Outcome {
    let (mut q_res, mut k_rel, mut ratio_rel) = (0.0f64, 0.0f64, 0.0f64);
    for n in 7..=12 {
        let c = consts(n);
        let d = c.d;
        let q0 = root_q0(c.dim);
        q_res = q_res.max((q0.powf(-2.0 * d) + (1.0 + q0 * q0).powf(-d) - 1.0).abs());
        let closed = ((n * (n - 2)) as f64).powf(d);
        ensure(kappa_infinity(c.dim) == closed, || {
            format!("N={n}: kappa_inf {} vs {closed}", c.kappa_inf)
        })?;
        ensure(c.kappa_inf == closed, || {
            format!("N={n}: constants kappa_inf differs")
        })?;
        let o = beta_oracle(n);
        k_rel = k_rel.max(rel(c.kappa0, d * o.w_p / o.lambda_sq));
        k_rel = k_rel.max(rel(
            c.kappa1,
            (n as f64 - 2.0) * o.w_p / (o.grad_sq / n as f64),
        ));
        let ap = approx_solution_constants(&c);
        ratio_rel = ratio_rel.max(rel(ap.c_d / ap.c_q, -q0));
        let want = -(d * c.kappa0 * (1.0 + q0 * q0) / c.kappa1).sqrt();
        ratio_rel = ratio_rel.max(rel(ap.c_lambda / ap.c_q, want));
    }
    ensure(q_res <= 1e-13, || format!("q0 residual {q_res:e}"))?;
    ensure(k_rel <= 1e-10, || {
        format!("kappa0/kappa1 vs Beta oracle {k_rel:e}")
    })?;
    ensure(ratio_rel <= 1e-12, || {
        format!("coefficient ratios {ratio_rel:e}")
    })?;
    Ok(format!(
        "q0 residual {q_res:.1e}, kappa rel {k_rel:.1e}, ratio rel {ratio_rel:.1e}"
    ))
}

fn random_rotation(rng: &mut TestRng, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0))
        .qr()
        .q()
}

fn moved(cfg: &Configuration, r: &DMatrix<f64>, scale: f64) -> Configuration {
    let pts = cfg
        .points()
        .iter()
        .map(|p| {
            (r * DVector::from_column_slice(p) * scale)
                .iter()
                .copied()
                .collect()
        })
        .collect();
    Configuration::new(cfg.dim(), cfg.signs().to_vec(), pts).unwrap()
}

fn random_points(rng: &mut TestRng, j: usize) -> Vec<Vec<f64>> {
    (0..j)
        .map(|_| {
            embed(
                7,
                &[
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ],
            )
        })
        .collect()
}

fn classification() -> Outcome {
    let c = consts(7);
    let n7 = dim(7);

    let rect =
        classify(&degenerate_rectangle(n7).unwrap(), &c, DEFAULT_TOL).map_err(|e| e.to_string())?;
    ensure(rect.verdict == Verdict::MinimallyDegenerate, || {
        format!("rectangle verdict {:?}", rect.verdict)
    })?;
    let pk = rect
        .positive_kernel
        .clone()
        .ok_or("rectangle without positive kernel")?;
    let spread = pk.iter().fold(0.0f64, |m, x| m.max((x - 0.5).abs()));
    ensure(spread <= 1e-10, || format!("rectangle kernel {pk:?}"))?;
    let drift = rect.drift_norm_sq.unwrap_or(0.0);
    ensure(drift > 0.0, || "rectangle drift vanishes".into())?;

    let mk = classify(&multi_kernel_family(n7, 2).unwrap(), &c, DEFAULT_TOL)
        .map_err(|e| e.to_string())?;
    ensure(mk.nonnegative_kernel_rank >= 2, || {
        format!("L=2 rank {}", mk.nonnegative_kernel_rank)
    })?;

    let mut rng = rng(3);
    let (mut lone, mut skipped) = (0, 0);
    while lone < 100 {
        let j = rng.random_range(2..=6usize);
        let pts = random_points(&mut rng, j);
        if !well_separated(&pts) {
            continue;
        }
        let base: i8 = if rng.random_bool(0.5) { 1 } else { -1 };
        let mut signs = vec![base; j];
        signs[rng.random_range(0..j)] = -base;
        let cfg = Configuration::new(n7, signs, pts).unwrap();
        match classify(&cfg, &c, DEFAULT_TOL) {
            Ok(r) => ensure(r.verdict == Verdict::TotallyNonDegenerate, || {
                format!("lone sign {cfg:?}: {:?}", r.verdict)
            })?,
            Err(e) if e.code() == "ill_conditioned" => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e.to_string()),
        }
        lone += 1;
    }

    for k in 0..50 {
        let d3 = -1.0 + 6.0 * k as f64 / 49.0;
        let m = lozenge_family(n7, d3).map_err(|e| format!("d3={d3}: {e}"))?;
        let r = classify(&m.config, &c, DEFAULT_TOL).map_err(|e| e.to_string())?;
        ensure(r.verdict.is_degenerate(), || {
            format!("lozenge d3={d3}: {:?}", r.verdict)
        })?;
    }

    let q0 = root_q0(n7);
    let (mut agree, mut degenerate) = (0, 0);
    while agree < 200 {
        let cfg = match rng.random_range(0..4u8) {
            0 => {
                let w = rng.random_range(0.3..3.0);
                rectangle_configuration(n7, w, w * q0).unwrap()
            }
            1 => {
                lozenge_family(n7, rng.random_range(-1.0..5.0))
                    .map_err(|e| e.to_string())?
                    .config
            }
            _ => {
                let j = rng.random_range(2..=4usize);
                let pts = random_points(&mut rng, j);
                if !well_separated(&pts) {
                    continue;
                }
                let signs = (0..j)
                    .map(|_| if rng.random_bool(0.5) { 1 } else { -1 })
                    .collect();
                Configuration::new(n7, signs, pts).unwrap()
            }
        };
        let rot = random_rotation(&mut rng, 7);
        let cfg = moved(&cfg, &rot, rng.random_range(0.5..2.0));
        let a = interaction_matrix(&cfg, &c).map_err(|e| e.to_string())?;
        let witness = match nonnegative_kernel_witness(&a, DEFAULT_TOL) {
            Ok(w) => w,
            Err(e) if e.code() == "ill_conditioned" => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e.to_string()),
        };
        let oracle = simplex_oracle(&a);
        ensure(witness.is_some() == (oracle <= DEFAULT_TOL), || {
            format!("oracle disagrees ({oracle:e}) on {cfg:?}")
        })?;
        degenerate += usize::from(witness.is_some());
        agree += 1;
    }
    Ok(format!(
        "rectangle minimal, drift {drift:.3e}; L=2 rank {}; 100 lone-sign; 50 lozenge; 200 oracle ({degenerate} degenerate); {skipped} ill-conditioned draws skipped",
        mk.nonnegative_kernel_rank
    ))
}

fn shooting() -> Result<ShootingReport, String> {
    shoot_degenerate(&consts(7), 1e4, 1e8, 0.1).map_err(|e| e.to_string())
}

fn conservation() -> Outcome {
    let n7 = dim(7);
    let mut lines = Vec::new();
    let mut check = |name: &str, traj: &Trajectory, started: Instant| -> Result<(), String> {
        let drift = traj.conservation_drift();
        let dec = decades(traj);
        let secs = started.elapsed().as_secs_f64();
        ensure(drift.within(1e-8), || format!("{name}: {drift:?}"))?;
        ensure(dec >= 4.0, || format!("{name}: only {dec:.2} decades"))?;
        ensure(secs < 60.0, || format!("{name}: {secs:.1} s"))?;
        lines.push(format!(
            "{name} {:.1e}/{:.1e} over {dec:.1} dec",
            drift.center_sum / drift.center_scale,
            drift.quadratic_rel
        ));
        Ok(())
    };
    let t = Instant::now();
    let dipole = dipole_scenario(n7, 0.1, 1.0, 1e8).map_err(|e| e.to_string())?;
    check("dipole", &dipole.trajectory, t)?;
    let t = Instant::now();
    let tower = bubble_tower_scenario(n7, 0.5, 0.01, 1.0, 1e8, false).map_err(|e| e.to_string())?;
    check("tower", &tower.trajectory, t)?;
    let t = Instant::now();
    let shot = shooting()?;
    check("rectangle", &shot.trajectory.embedded(&consts(7)), t)?;
    Ok(lines.join("; "))
}

fn rates() -> Outcome {
    let n7 = dim(7);
    let budget = Duration::from_secs(300);

    let t = Instant::now();
    let dipole = dipole_scenario(n7, 0.1, 1.0, 1e8).map_err(|e| e.to_string())?;
    ensure(rel(dipole.fit.exponent, -1.0 / 3.0) <= 0.02, || {
        format!("dipole exponent {}", dipole.fit.exponent)
    })?;
    ensure(t.elapsed() < budget, || "dipole over budget".into())?;

    let t = Instant::now();
    let tower = bubble_tower_scenario(n7, 0.5, 0.01, 1.0, 1e8, false).map_err(|e| e.to_string())?;
    ensure(rel(tower.small_fit.exponent, -2.0) <= 0.02, || {
        format!("tower exponent {}", tower.small_fit.exponent)
    })?;
    // Converging big scale: its change over the last two decades is small.
    let big = tower.trajectory.scale_series(0);
    let times = tower.trajectory.times();
    let t_end = *times.last().unwrap();
    let k = times.iter().position(|&s| s >= 1e-2 * t_end).unwrap();
    let settle = rel(big[big.len() - 1], big[k]);
    ensure(tower.big_final > 0.0 && settle <= 1e-3, || {
        format!("big scale {} moved {settle:e}", tower.big_final)
    })?;
    let same = bubble_tower_scenario(n7, 0.5, 0.01, 1.0, 1e8, true).map_err(|e| e.to_string())?;
    let small = same.trajectory.scale_series(1);
    ensure(
        same.small_fit.exponent.is_nan() && small.last().unwrap() > &small[0],
        || {
            format!(
                "same-sign pair produced a tower rate {}",
                same.small_fit.exponent
            )
        },
    )?;
    let stop = same.trajectory.stop_event().map(|e| e.kind);
    ensure(stop == Some(EventKind::Collision), || {
        format!("same-sign stop {stop:?}")
    })?;
    ensure(t.elapsed() < budget, || "tower over budget".into())?;

    let t = Instant::now();
    let shot = shooting()?;
    ensure(rel(shot.fit.exponent, -0.25) <= 0.02, || {
        format!("rectangle exponent {}", shot.fit.exponent)
    })?;
    ensure(shot.max_h <= shot.tube_bound, || {
        format!("tube {} > {}", shot.max_h, shot.tube_bound)
    })?;
    ensure(t.elapsed() < budget, || "rectangle over budget".into())?;

    Ok(format!(
        "dipole {:.4}, tower {:.4} (big limit {:.4}, same signs collide), rectangle {:.4}",
        dipole.fit.exponent, tower.small_fit.exponent, tower.big_final, shot.fit.exponent
    ))
}

fn prefactors() -> Outcome {
    let c = consts(7);
    let shot = shooting()?;
    let formula = degenerate_rate_prefactor(&c).map_err(|e| e.to_string())?;
    let r_rect = rel(shot.fit.prefactor, formula);
    ensure(r_rect <= 0.05, || {
        format!("rectangle prefactor {} vs {formula}", shot.fit.prefactor)
    })?;
    let tower =
        bubble_tower_scenario(dim(7), 0.5, 0.01, 1.0, 1e8, false).map_err(|e| e.to_string())?;
    let r_tower = rel(tower.small_fit.prefactor, tower.predicted_prefactor);
    ensure(r_tower <= 0.05, || {
        format!(
            "tower prefactor {} vs {}",
            tower.small_fit.prefactor, tower.predicted_prefactor
        )
    })?;
    Ok(format!(
        "rectangle {:.5} vs {formula:.5} ({r_rect:.2e}); tower rel {r_tower:.2e}",
        shot.fit.prefactor
    ))
}

fn self_similar() -> Outcome {
    let mut rng = rng(7);
    let mut worst = 0.0f64;
    let mut cases = 0;
    while cases < 30 {
        let n = 7 + (cases % 3) as u32;
        let c = consts(n);
        let j = rng.random_range(2..=4usize);
        let pts: Vec<Vec<f64>> = (0..j)
            .map(|_| {
                embed(
                    n as usize,
                    &[
                        rng.random_range(-1.5..1.5),
                        rng.random_range(-1.5..1.5),
                        rng.random_range(-1.5..1.5),
                    ],
                )
            })
            .collect();
        let signs: Vec<i8> = (0..j)
            .map(|_| if rng.random_bool(0.5) { 1 } else { -1 })
            .collect();
        let Ok(a) = multibubble::configuration::interaction_matrix_for(&c, &signs, &pts) else {
            continue;
        };
        let mu: Vec<f64> = (0..j).map(|_| rng.random_range(0.05..2.0)).collect();
        let g = gradient(&a, c.d, &mu);
        let scale = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for i in 0..j {
            let h = 1e-6 * mu[i];
            let (mut p, mut m) = (mu.clone(), mu.clone());
            p[i] += h;
            m[i] -= h;
            let fd = (functional_i(&a, c.d, &p) - functional_i(&a, c.d, &m)) / (2.0 * h);
            worst = worst.max((g[i] - fd).abs() / scale);
        }
        cases += 1;
    }
    ensure(worst <= 1e-6, || {
        format!("gradient vs finite differences {worst:e}")
    })?;

    let c = consts(7);
    let r = dipole_scenario(dim(7), 0.1, 1.0, 1e8).map_err(|e| e.to_string())?;
    let a = terminal_interaction(&c, &r.trajectory).map_err(|e| e.to_string())?;
    let check = renormalized_flow_check(&r.trajectory, &a, c.d, 4.0).map_err(|e| e.to_string())?;
    ensure(check.max_increase <= 1e-6, || {
        format!("I increases by {:e}", check.max_increase)
    })?;
    let cp = solve_ratio_set(&a, c.d, &check.terminal_mu).map_err(|e| e.to_string())?;
    ensure(cp.residual <= 1e-10, || {
        format!("ratio set residual {:e}", cp.residual)
    })?;
    let off = check
        .terminal_mu
        .iter()
        .zip(&cp.mu)
        .fold(0.0f64, |m, (x, y)| m.max(rel(*x, *y)));
    ensure(off <= 0.01, || format!("terminal mu off by {off:e}"))?;
    Ok(format!(
        "grad FD {worst:.1e}; max I increase {:.1e}; terminal mu within {off:.2e}; residual {:.1e}",
        check.max_increase, cp.residual
    ))
}

fn fidelity() -> Outcome {
    let c = consts(7);
    let shot = shooting()?;
    let s0 = shot.trajectory.samples[0];
    let init = SymmetricState::new(s0.t, s0.lambda, s0.d, s0.q).map_err(|e| e.to_string())?;
    let f = reduction_fidelity(&c, &init, 1e8).map_err(|e| e.to_string())?;
    ensure(f.decades >= 4.0, || format!("{:.2} decades", f.decades))?;
    ensure(f.max_rel_diff <= 1e-8, || {
        format!("max rel diff {:e}", f.max_rel_diff)
    })?;
    Ok(format!(
        "max rel diff {:.1e} over {:.1} decades ({} samples)",
        f.max_rel_diff, f.decades, f.samples
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome, Duration); 8] = [
        ("spectral", spectral, Duration::from_secs(1)),
        (
            "roots/constants",
            roots_and_constants,
            Duration::from_secs(5),
        ),
        ("classification", classification, Duration::from_secs(30)),
        ("conservation", conservation, Duration::from_secs(180)),
        ("rates", rates, Duration::from_secs(900)),
        ("prefactors", prefactors, Duration::from_secs(600)),
        ("self-similar", self_similar, Duration::from_secs(300)),
        ("reduction fidelity", fidelity, Duration::from_secs(300)),
    ];
    let mut failed = 0;
    for (k, (name, run, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        let outcome = outcome.and_then(|d| {
            if secs <= budget.as_secs_f64() {
                Ok(d)
            } else {
                Err(format!(
                    "{d}; runtime {secs:.2} s over {} s budget",
                    budget.as_secs()
                ))
            }
        });
        match outcome {
            Ok(detail) => println!("PASS {} {name} [{secs:.2} s]: {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {} {name} [{secs:.2} s]: {detail}", k + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
