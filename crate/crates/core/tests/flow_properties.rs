use eigenflow::flows::{forward_step, run_forward_observed, run_inverse_observed, TraceRecord};
use eigenflow::grid::null_project;
use eigenflow::ipm::run_ipm_observed;
use eigenflow::solver::{relative_sharpness, subgradient_at, DEFAULT_SHARPNESS};
use eigenflow::{tv_value, FlowConfig, FunctionalKind, GridField, SolverParams};
use proptest::prelude::*;

fn field(n: usize) -> impl Strategy<Value = GridField> {
    prop::collection::vec(-1.0f64..1.0, n).prop_filter_map("near-constant", |v| {
        let f = null_project(&GridField::from_column(v).unwrap(), &FunctionalKind::Tv);
        (f.norm() > 0.1).then_some(f)
    })
}

fn short(max_outer: usize) -> FlowConfig {
    FlowConfig {
        max_outer,
        ..FlowConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    // Per step the scheme only guarantees
    //   J(u₁) − J(u₀) ≤ Δt (J(u₁)/‖u₀‖ − ‖p₁‖²/‖p₀‖),
    // which follows from J(u₀) ≥ ⟨p₁, u₀⟩ and the update identity; it is not
    // sign-definite, so J itself may rise slightly near an eigenfunction.
    #[test]
    fn forward_step_identity_and_energy_bound(f in field(24), scale in 1.0f64..4.0) {
        let kind = FunctionalKind::Tv;
        let u0 = f.scaled(scale / f.norm());
        let cfg = FlowConfig {
            inner: SolverParams::default().with_tol(1e-9).with_max_iters(400_000),
            ..FlowConfig::default()
        };
        let alpha = relative_sharpness(&kind, &u0, DEFAULT_SHARPNESS);
        let p0 = subgradient_at(&kind, &u0, alpha, &cfg.inner).unwrap();
        let (u1, p1) = forward_step(&u0, &p0, &kind, &cfg).unwrap();

        prop_assert!(u1.norm() >= u0.norm() * (1.0 - 1e-6));
        prop_assert!(u1.sum().abs() < 1e-8);

        let (n0, np0) = (u0.norm(), p0.norm());
        let rhs = u0
            .lin_comb(1.0, &u1, cfg.dt / n0).unwrap()
            .lin_comb(1.0, &p1, -cfg.dt / np0).unwrap();
        prop_assert!(u1.rel_dist(&rhs).unwrap() < 1e-5, "identity off by {}", u1.rel_dist(&rhs).unwrap());

        let (j0, j1) = (tv_value(&u0), tv_value(&u1));
        let bound = cfg.dt * (j1 / n0 - p1.norm().powi(2) / np0);
        prop_assert!(j1 - j0 <= bound + 1e-6 * (1.0 + j0), "ΔJ {} > {}", j1 - j0, bound);
    }

    #[test]
    fn forward_run_grows_norm_and_keeps_zero_mean(f in field(24)) {
        let mut prev: Option<TraceRecord> = None;
        let mut bad = None;
        run_forward_observed(&f, &FunctionalKind::Tv, &short(40), &mut |rec, u| {
            if u.sum().abs() > 1e-8 {
                bad = Some(format!("mean {}", u.sum()));
            }
            if let Some(p) = prev {
                if rec.norm_sq < p.norm_sq * (1.0 - 1e-6) {
                    bad = Some(format!("k={}: |u|² {} -> {}", rec.k, p.norm_sq, rec.norm_sq));
                }
            }
            prev = Some(*rec);
        }).unwrap();
        prop_assert!(bad.is_none(), "{:?}", bad);
    }

    #[test]
    fn forward_lambda_below_initial_rayleigh_quotient(f in field(16)) {
        let r = run_forward_observed(&f, &FunctionalKind::Tv, &FlowConfig::default(), &mut |_, _| {}).unwrap();
        let bound = eigenflow::tv_value(&f) / f.norm().powi(2);
        prop_assert!(r.lambda > 0.0);
        prop_assert!(r.lambda <= bound * (1.0 + 1e-9), "{} > {}", r.lambda, bound);
    }

    #[test]
    fn inverse_increases_j_and_shrinks_norm(f in field(16)) {
        let mut prev: Option<TraceRecord> = None;
        let mut bad = None;
        run_inverse_observed(&f, &FunctionalKind::Tv, &short(40), &mut |rec, _| {
            if let Some(p) = prev {
                if rec.j < p.j * (1.0 - 1e-4) || rec.norm_sq > p.norm_sq * (1.0 + 1e-4) {
                    bad = Some(format!("k={}: J {} -> {}, |u|² {} -> {}", rec.k, p.j, rec.j, p.norm_sq, rec.norm_sq));
                }
            }
            prev = Some(*rec);
        }).unwrap();
        prop_assert!(bad.is_none(), "{:?}", bad);
    }

    #[test]
    fn ipm_eigenvalue_estimates_never_increase(f in field(16)) {
        let mut lambdas = Vec::new();
        run_ipm_observed(&f, &FunctionalKind::Tv, &short(30), &mut |rec, u| {
            lambdas.push(rec.lambda_est);
            assert!((u.norm() - 1.0).abs() < 1e-9 || rec.k == 0);
        }).unwrap();
        for w in lambdas.windows(2).skip(1) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-6), "{:?}", lambdas);
        }
    }
}
