use multibubble::configuration::root_q0;
use multibubble::dynamics::vector_field;
use multibubble::rectangle::{
    approx_solution_constants, backward_verification, degenerate_rate_prefactor,
    drift_vectors_rectangle, embed, linearization_matrix, reduce, reduction_fidelity,
    scale_bracket, shoot_degenerate, shoot_from_coefficients, symmetric_vector_field,
    taylor_coefficients, RectangleStop, SymmetricState,
};
use multibubble::{universal_constants, Dimension, UniversalConstants};
use proptest::prelude::*;

fn consts(n: u32) -> UniversalConstants {
    universal_constants(Dimension::new(n).unwrap()).unwrap()
}

fn mat_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn max_diff(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> f64 {
    let mut m = 0.0f64;
    for i in 0..3 {
        for j in 0..3 {
            m = m.max((a[i][j] - b[i][j]).abs());
        }
    }
    m
}

const IDENTITY: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
const ZERO: [[f64; 3]; 3] = [[0.0; 3]; 3];

#[test]
fn spectrum_closed_forms() {
    for n in 7..=12 {
        let c = consts(n);
        let lin = linearization_matrix(&c);
        let d = c.d;
        let a = 1.0 / (2.0 * d - 1.0);
        let want = [-2.0 * d * a, 0.0, a];
        let shifted = [-1.0, a, 2.0 * a];
        for k in 0..3 {
            assert!((lin.eigenvalues[k] - want[k]).abs() <= 1e-12, "N={n}");
            assert!(
                (lin.shifted_eigenvalues[k] - shifted[k]).abs() <= 1e-12,
                "N={n}"
            );
        }
        let (ps, pu) = (&lin.stable_projector, &lin.unstable_projector);
        assert!(max_diff(&mat_mul(ps, ps), ps) <= 1e-12);
        assert!(max_diff(&mat_mul(pu, pu), pu) <= 1e-12);
        assert!(max_diff(&mat_mul(ps, pu), &ZERO) <= 1e-12);
        let mut sum = *ps;
        for i in 0..3 {
            for j in 0..3 {
                sum[i][j] += pu[i][j];
            }
        }
        assert!(max_diff(&sum, &IDENTITY) <= 1e-12);
        // The unstable basis spans the range of P_u.
        for b in &lin.unstable_basis {
            let pb: Vec<f64> = (0..3)
                .map(|i| (0..3).map(|j| pu[i][j] * b[j]).sum())
                .collect();
            for i in 0..3 {
                assert!((pb[i] - b[i]).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn n7_eigenvalues() {
    let lin = linearization_matrix(&consts(7));
    for (got, want) in lin.eigenvalues.iter().zip([-1.25, 0.0, 0.25]) {
        assert!((got - want).abs() <= 1e-12);
    }
    for (got, want) in lin.shifted_eigenvalues.iter().zip([-1.0, 0.25, 0.5]) {
        assert!((got - want).abs() <= 1e-12);
    }
}

#[test]
fn approximate_solution_ratios() {
    for n in 7..=12 {
        let c = consts(n);
        let ap = approx_solution_constants(&c);
        assert!(
            ap.residuals.iter().all(|r| *r <= 1e-12),
            "N={n}: {:?}",
            ap.residuals
        );
        assert!((ap.c_d / ap.c_q + ap.q0).abs() <= 1e-12 * ap.q0);
        let want = -(c.d * c.kappa0 * (1.0 + ap.q0 * ap.q0) / c.kappa1).sqrt();
        assert!(
            (ap.c_lambda / ap.c_q - want).abs() <= 1e-12 * want.abs(),
            "N={n}"
        );
        assert!(ap.c_lambda > 0.0 && ap.c_d > 0.0 && ap.c_q < 0.0);
    }
    let ap = approx_solution_constants(&consts(7));
    assert!((ap.c_lambda - 0.020856364783289214).abs() <= 1e-12);
}

#[test]
fn prefactor_formula_agrees_with_closed_chain() {
    for n in 7..=12 {
        let c = consts(n);
        let ap = approx_solution_constants(&c);
        let f = degenerate_rate_prefactor(&c).unwrap();
        assert!(
            (f / ap.c_lambda - 1.0).abs() <= 1e-10,
            "N={n}: {f} vs {}",
            ap.c_lambda
        );
    }
}

#[test]
fn stationary_scale_at_degenerate_rectangle() {
    for n in 7..=12 {
        let c = consts(n);
        let q0 = root_q0(c.dim);
        let s = SymmetricState::new(1.0, 0.1, 1.0, q0).unwrap();
        let f = symmetric_vector_field(&c, &s);
        let scale = c.kappa0 * c.kappa_inf * 0.1f64.powf(2.0 * c.d - 1.0);
        assert!(f[0].abs() <= 1e-13 * scale, "N={n}");
    }
}

#[test]
fn taylor_coefficients_match_finite_differences() {
    for n in 7..=12 {
        let c = consts(n);
        let q0 = root_q0(c.dim);
        let coef = taylor_coefficients(c.d, q0);
        let h = 2e-4;
        // Fourth-order central stencil.
        let stencil = |f: &dyn Fn(f64) -> f64| {
            (-f(2.0 * h) + 8.0 * f(h) - 8.0 * f(-h) + f(-2.0 * h)) / (12.0 * h)
        };
        let dd = stencil(&|e| scale_bracket(c.d, 1.0 + e, q0));
        let dq = stencil(&|e| scale_bracket(c.d, 1.0, q0 + e));
        assert!(
            (dd - coef[0]).abs() <= 1e-10 * coef[0].abs(),
            "N={n}: {dd} vs {}",
            coef[0]
        );
        assert!(
            (dq - coef[1]).abs() <= 1e-10 * coef[1].abs(),
            "N={n}: {dq} vs {}",
            coef[1]
        );
    }
}

fn approx_residual(c: &UniversalConstants, t: f64) -> f64 {
    let ap = approx_solution_constants(c);
    let s = ap.state_at(t);
    let a = ap.exponent;
    let dt = [
        -a * ap.c_lambda * t.powf(-a - 1.0),
        -a * ap.c_d * t.powf(-a - 1.0),
        -a * ap.c_q * t.powf(-a - 1.0),
    ];
    let f = symmetric_vector_field(c, &s);
    (0..3).map(|k| (dt[k] - f[k]).abs()).fold(0.0, f64::max)
}

#[test]
fn approximate_solution_residual_decays() {
    // Leading orders cancel; the remainder is O(t^(-1-2a)).
    for n in [7u32, 9, 12] {
        let c = consts(n);
        let a = 1.0 / (2.0 * c.d - 1.0);
        let (r4, r6) = (approx_residual(&c, 1e4), approx_residual(&c, 1e6));
        let slope = (r6 / r4).log10() / 2.0;
        assert!(
            (slope + 1.0 + 2.0 * a).abs() <= 0.05,
            "N={n}: slope {slope}"
        );
    }
}

#[test]
fn h_coordinate_examples() {
    let c = consts(7);
    let ap = approx_solution_constants(&c);
    for t in [1e3, 1e5, 1e8] {
        assert_eq!(ap.h_coordinates(&ap.state_at(t)), [0.0, 0.0, 0.0]);
        let eps = 1e-3;
        let mut s = ap.state_at(t);
        s.lambda += eps * t.powf(-ap.exponent);
        let h = ap.h_coordinates(&s);
        assert!((h[0] - eps).abs() <= 1e-12 && h[1] == 0.0 && h[2] == 0.0);
        let h = [0.01, -0.02, 0.005];
        let back = ap.h_coordinates(&ap.from_h(t, h).unwrap());
        for k in 0..3 {
            assert!((back[k] - h[k]).abs() <= 1e-14, "{back:?}");
        }
    }
    assert!((ap.center_unit - (2.0 * c.kappa1 / c.kappa0).sqrt()).abs() <= 1e-15 * ap.center_unit);
}

#[test]
fn drift_vector_symmetry() {
    for n in 7..=12 {
        let c = consts(n);
        let r = drift_vectors_rectangle(&c).unwrap();
        assert!(r.sum_norm_sq > 0.0);
        let norms: Vec<f64> = r
            .vectors
            .iter()
            .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect();
        for m in &norms {
            assert!((m - norms[0]).abs() <= 1e-12 * norms[0]);
        }
        for v in &r.vectors {
            assert!(v[2..].iter().all(|x| *x == 0.0));
        }
    }
}

#[test]
fn shooting_realizes_degenerate_rate() {
    let c = consts(7);
    let r = shoot_degenerate(&c, 1e4, 1e8, 0.1).unwrap();
    assert_eq!(r.trajectory.stop, RectangleStop::HorizonReached);
    assert!((r.fit.exponent / -0.25 - 1.0).abs() <= 0.02, "{:?}", r.fit);
    assert!((r.fit.prefactor / r.c_lambda - 1.0).abs() <= 0.05);
    assert!((r.fit.prefactor / r.formula_prefactor - 1.0).abs() <= 0.05);
    assert!(r.max_h <= r.tube_bound);
    assert!(r.trajectory.quadratic_drift() <= 1e-8);
    assert!(r.terminal_unstable < 1e-6);
}

#[test]
fn offset_seed_leaves_the_tube() {
    let c = consts(7);
    let e = shoot_from_coefficients(&c, 1e4, 1e8, [0.0, 0.05]).unwrap_err();
    assert_eq!(e.code(), "shooting_failed");
    match e {
        multibubble::Error::ShootingFailed { exit_time, .. } => {
            let t = exit_time.unwrap();
            assert!(t > 1e4 && t < 1e8);
        }
        _ => unreachable!(),
    }
}

#[test]
fn shooting_validates_inputs() {
    let c = consts(7);
    assert_eq!(
        shoot_degenerate(&c, 1e4, 1e8, 0.5).unwrap_err().code(),
        "validation_error"
    );
    assert_eq!(
        shoot_degenerate(&c, 10.0, 1e8, 0.1).unwrap_err().code(),
        "validation_error"
    );
    assert_eq!(
        shoot_degenerate(&c, 1e4, 1e5, 0.1).unwrap_err().code(),
        "validation_error"
    );
}

#[test]
fn reduced_path_matches_full_system() {
    let c = consts(7);
    let r = shoot_degenerate(&c, 1e4, 1e8, 0.1).unwrap();
    let s0 = r.trajectory.samples[0];
    let init = SymmetricState::new(s0.t, s0.lambda, s0.d, s0.q).unwrap();
    let f = reduction_fidelity(&c, &init, 1e8).unwrap();
    assert!(f.decades >= 4.0);
    assert!(f.max_rel_diff <= 1e-8, "{f:?}");
    assert!(f.max_scale_asymmetry <= 1e-9);
}

#[test]
fn backward_run_approaches_degenerate_rate() {
    // Backward, the stable mode grows from the start; only the trailing
    // decades near the approximate solution carry the rate.
    let c = consts(7);
    let t = backward_verification(&c, 1e4, 1e8).unwrap();
    assert_eq!(t.stop, RectangleStop::HorizonReached);
    assert!((t.samples[0].t - 1e4).abs() <= 1e-6 * 1e4);
    let fit = t.lambda_fit(2.0).unwrap();
    assert!((fit.exponent / -0.25 - 1.0).abs() <= 0.02, "{fit:?}");
    assert!(t.quadratic_drift() <= 1e-8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn center_spacing_signs(lambda in 1e-3f64..1.0, d in 0.1f64..5.0, q in 0.1f64..5.0, n in 7u32..=12) {
        let c = consts(n);
        let f = symmetric_vector_field(&c, &SymmetricState::new(0.0, lambda, d, q).unwrap());
        prop_assert!(f[1] < 0.0);
        prop_assert!(f[2] > 0.0);
    }

    #[test]
    fn embedding_reproduces_reduced_field(lambda in 1e-3f64..1.0, d in 0.1f64..5.0, q in 0.1f64..5.0, n in 7u32..=12) {
        let c = consts(n);
        let s = SymmetricState::new(0.0, lambda, d, q).unwrap();
        let f = symmetric_vector_field(&c, &s);
        let full = embed(n as usize, &s);
        let (dl, dz) = vector_field(&c, &multibubble::rectangle::RECTANGLE_SIGNS, &full).unwrap();
        let got = [dl[0], dz[0][0] - dz[1][0], dz[0][1] - dz[2][1]];
        for k in 0..3 {
            prop_assert!((got[k] - f[k]).abs() <= 1e-12 * f[k].abs().max(f64::MIN_POSITIVE), "k={} {} vs {}", k, got[k], f[k]);
        }
        for i in 1..4 {
            prop_assert!((dl[i] - dl[0]).abs() <= 1e-12 * dl[0].abs());
        }
        let back = reduce(&full).unwrap();
        prop_assert!((back.d - d).abs() <= 1e-15 * d && (back.q - q).abs() <= 1e-15 * q);
    }
}
