//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line to
//! stderr (not captured by the harness) before asserting.

use std::io::Write;
use std::sync::OnceLock;
use std::time::Instant;

use eigenflow::analysis::{spectral_filter, spectral_transform};
use eigenflow::cli::init::NormalStream;
use eigenflow::cli::{generate_init, run_experiment, ExperimentConfig, InitSpec, Method, Preset};
use eigenflow::flows::{run_forward_observed, run_inverse_observed, TraceRecord};
use eigenflow::functional::{one_hom_check, subgrad_inequality_check};
use eigenflow::ipm::run_ipm;
use eigenflow::operators::{assemble_dense, div, div2, grad, sym_grad, LinearOperator, NegLaplacian};
use eigenflow::{
    evaluate, prox, run_forward, run_linear, tv_value, validate_eigenfunction, EigenResult, FlowConfig,
    FunctionalKind, GridField, Shape, SolverParams, SymTensorField, VecField,
};

fn report(n: u32, name: &str, pass: bool, detail: &str) {
    let line = format!(
        "{} criterion {n:>2} ({name}): {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn normals(seed: u64, n: usize) -> Vec<f64> {
    let mut g = NormalStream::new(seed);
    (0..n).map(|_| g.sample()).collect()
}

fn unit(f: GridField) -> GridField {
    let n = f.norm();
    f.scaled(1.0 / n)
}

fn cos1() -> f64 {
    1f64.to_radians().cos()
}

/// Forward and inverse runs share this input: a centered 16×16 square on
/// 64×64, zero mean, unit norm.
fn square() -> &'static GridField {
    static F: OnceLock<GridField> = OnceLock::new();
    F.get_or_init(|| {
        let spec = InitSpec::Square {
            side: 16,
            offset: None,
        };
        unit(generate_init(&spec, Shape::new(64, 64), 0, &FunctionalKind::Tv).unwrap())
    })
}

struct Observed {
    result: EigenResult,
    records: Vec<TraceRecord>,
    max_abs_mean: f64,
}

fn observe_forward(f: &GridField, kind: &FunctionalKind) -> Observed {
    let mut records = Vec::new();
    let mut max_abs_mean = 0.0f64;
    let result = run_forward_observed(f, kind, &FlowConfig::default(), &mut |rec, u| {
        records.push(*rec);
        max_abs_mean = max_abs_mean.max(u.mean().abs());
    })
    .unwrap();
    Observed {
        result,
        records,
        max_abs_mean,
    }
}

fn forward_square() -> &'static Observed {
    static R: OnceLock<Observed> = OnceLock::new();
    R.get_or_init(|| observe_forward(square(), &FunctionalKind::Tv))
}

fn inverse_square() -> &'static Observed {
    static R: OnceLock<Observed> = OnceLock::new();
    R.get_or_init(|| {
        let mut records = Vec::new();
        let result = run_inverse_observed(square(), &FunctionalKind::Tv, &FlowConfig::default(), &mut |rec, _| {
            records.push(*rec)
        })
        .unwrap();
        Observed {
            result,
            records,
            max_abs_mean: 0.0,
        }
    })
}

/// Seeded white noise on 64×64, zero mean, unit norm.
fn noise() -> &'static GridField {
    static F: OnceLock<GridField> = OnceLock::new();
    F.get_or_init(|| {
        let spec = InitSpec::GaussianNoise { sigma: 1.0 };
        unit(generate_init(&spec, Shape::new(64, 64), 1, &FunctionalKind::Tv).unwrap())
    })
}

fn forward_noise() -> &'static Observed {
    static R: OnceLock<Observed> = OnceLock::new();
    R.get_or_init(|| observe_forward(noise(), &FunctionalKind::Tv))
}

fn signal_1d(preset: Preset, kind: &FunctionalKind) -> GridField {
    let spec = InitSpec::Composite1d { preset, sigma: 0.1 };
    generate_init(&spec, Shape::line(128), 1, kind).unwrap()
}

struct OneD {
    kind: FunctionalKind,
    f: GridField,
    ipm: EigenResult,
    forward: EigenResult,
}

fn one_d() -> &'static [OneD; 2] {
    static R: OnceLock<[OneD; 2]> = OnceLock::new();
    R.get_or_init(|| {
        let mk = |preset, kind: FunctionalKind| {
            let f = signal_1d(preset, &kind);
            let cfg = FlowConfig::default();
            OneD {
                ipm: run_ipm(&f, &kind, &cfg).unwrap(),
                forward: run_forward(&f, &kind, &cfg).unwrap(),
                kind,
                f,
            }
        };
        [
            mk(Preset::PointNoise, FunctionalKind::Tv),
            mk(Preset::RampNoise, FunctionalKind::tgv2_default()),
        ]
    })
}

fn monotone(records: &[TraceRecord], slack: f64, j_up: bool) -> (usize, usize, String) {
    let mut j_bad = 0;
    let mut n_bad = 0;
    let mut worst = String::new();
    let mut worst_rel = 0.0;
    for w in records.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let dj = if j_up { (a.j - b.j) / a.j } else { (b.j - a.j) / a.j };
        let dn = if j_up {
            (b.norm_sq - a.norm_sq) / a.norm_sq
        } else {
            (a.norm_sq - b.norm_sq) / a.norm_sq
        };
        if dj > slack {
            j_bad += 1;
            if dj > worst_rel {
                worst_rel = dj;
                worst = format!("worst J step k={} rel {dj:.2e}", b.k);
            }
        }
        if dn > slack {
            n_bad += 1;
        }
    }
    (j_bad, n_bad, worst)
}

#[test]
fn c01_adjointness() {
    let start = Instant::now();
    let shape = Shape::new(32, 32);
    let n = shape.len();
    let mut worst = 0.0f64;
    let mut worst2 = 0.0f64;
    for pair in 0..100u64 {
        let u = GridField::new(shape, normals(2 * pair, n)).unwrap();
        let z = VecField::new(shape, normals(2 * pair + 1, shape.vec_comps() * n)).unwrap();
        let lhs = grad(&u).inner(&z).unwrap() + u.inner(&div(&z)).unwrap();
        worst = worst.max(lhs.abs() / (u.norm() * z.norm()));
        let t = SymTensorField::new(shape, normals(1000 + pair, shape.sym_comps() * n)).unwrap();
        let lhs2 = sym_grad(&z).inner(&t).unwrap() + z.inner(&div2(&t)).unwrap();
        worst2 = worst2.max(lhs2.abs() / (z.norm() * t.norm()));
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst <= 1e-10 && worst2 <= 1e-10 && secs < 1.0;
    report(
        1,
        "adjointness",
        pass,
        &format!("grad/div {worst:.1e}, sym_grad/div2 {worst2:.1e}, {secs:.3} s"),
    );
    assert!(pass);
}

#[test]
fn c02_one_homogeneous_identities() {
    let start = Instant::now();
    let shape = Shape::new(16, 16);
    let n = shape.len();
    let params = SolverParams::default().with_tol(1e-8).with_max_iters(400_000);
    let mut failures = Vec::new();
    for s in 0..50u64 {
        let u = GridField::new(shape, normals(5000 + s, n)).unwrap();
        let v = GridField::new(shape, normals(6000 + s, n)).unwrap();
        // one-homogeneity
        for a in [-1.0, 0.0, 2.5, -0.3] {
            if !one_hom_check(tv_value, &u, a) {
                failures.push(format!("one-hom s={s} a={a}"));
            }
        }
        let r = prox(&FunctionalKind::Tv, &u, 1.0, &params).unwrap();
        let (w, p) = (&r.u, &r.p);
        let jw = tv_value(w);
        // J(w) = ⟨w, p⟩
        if (w.inner(p).unwrap() - jw).abs() > 1e-6 * (1.0 + jw) {
            failures.push(format!("J=<u,p> s={s}: {} vs {jw}", w.inner(p).unwrap()));
        }
        // J(v) ≥ ⟨p, v⟩, for v random and for v = ±w
        for d in [&v, &u, w, &w.scaled(-1.0)] {
            if !subgrad_inequality_check(tv_value, p, d).unwrap() {
                failures.push(format!("subgradient inequality s={s}"));
            }
        }
        // triangle inequality
        if tv_value(&u.add(&v).unwrap()) > tv_value(&u) + tv_value(&v) + 1e-12 {
            failures.push(format!("triangle s={s}"));
        }
        // J(u) ≤ ‖u‖‖p‖
        if jw > w.norm() * p.norm() * (1.0 + 1e-9) {
            failures.push(format!("cauchy-schwarz s={s}"));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = failures.is_empty() && secs < 30.0;
    report(
        2,
        "one-homogeneous identities",
        pass,
        &format!("50 fields, {} failures {:?}, {secs:.1} s", failures.len(), failures.first()),
    );
    assert!(pass);
}

#[test]
fn c03_prox_shrinkage() {
    let r = &forward_square().result;
    let params = SolverParams::default().with_tol(1e-8).with_max_iters(400_000);
    let pr = prox(&FunctionalKind::Tv, &r.u_star, 2.0 * r.lambda, &params).unwrap();
    let err = pr.u.rel_dist(&r.u_star.scaled(0.5)).unwrap();
    let pass = r.converged && err <= 0.02;
    report(
        3,
        "prox shrinkage",
        pass,
        &format!("lambda {:.6}, ‖prox − u*/2‖/‖u*/2‖ = {err:.4}", r.lambda),
    );
    assert!(pass);
}

#[test]
fn c04_forward_monotonicity_on_noise() {
    let o = forward_noise();
    let (j_bad, n_bad, worst) = monotone(&o.records, 1e-6, false);
    let k = o.records.last().map_or(0, |r| r.k);
    let r = &o.result;
    let conv = r.converged && r.affinity >= cos1() && k <= 2000;
    let pass = j_bad == 0 && n_bad == 0 && o.max_abs_mean <= 1e-8 && conv;
    report(
        4,
        "forward monotonicity on noise",
        pass,
        &format!(
            "{k} iterations, converged {}, A {:.6}, J increases {j_bad} ({worst}), norm decreases {n_bad}, max |mean| {:.1e}",
            r.converged, r.affinity, o.max_abs_mean
        ),
    );
    assert!(pass);
}

#[test]
fn c05_eigenvalue_bound() {
    let params = SolverParams::default().with_tol(1e-8).with_max_iters(400_000);
    let mut lines = Vec::new();
    let mut pass = true;
    let mut check = |name: &str, f: &GridField, kind: &FunctionalKind, r: &EigenResult| {
        if !r.converged {
            lines.push(format!("{name}: not converged, skipped"));
            return;
        }
        let jf = evaluate(kind, f, &params).unwrap();
        let bound = jf / f.norm().powi(2);
        // TGV values come from an iterative solve
        let slack = if matches!(kind, FunctionalKind::Tv) { 1e-12 } else { 1e-6 };
        let ok = r.lambda > 0.0 && r.lambda <= bound * (1.0 + slack);
        pass &= ok;
        lines.push(format!("{name}: {:.6} ≤ {bound:.6} {}", r.lambda, if ok { "ok" } else { "violated" }));
    };
    check("square", square(), &FunctionalKind::Tv, &forward_square().result);
    check("noise", noise(), &FunctionalKind::Tv, &forward_noise().result);
    for d in one_d() {
        check(&format!("1d {}", d.kind.name()), &d.f, &d.kind, &d.forward);
    }
    report(5, "eigenvalue bound", pass, &lines.join("; "));
    assert!(pass);
}

#[test]
fn c06_gradient_flow_extinction() {
    let cfg = FlowConfig::default();
    let mut lines = Vec::new();
    let mut pass = true;
    let mut pairs: Vec<(String, &FunctionalKind, &EigenResult)> = vec![
        ("forward square".into(), &FunctionalKind::Tv, &forward_square().result),
        ("forward noise".into(), &FunctionalKind::Tv, &forward_noise().result),
        ("inverse square".into(), &FunctionalKind::Tv, &inverse_square().result),
    ];
    for d in one_d() {
        pairs.push((format!("ipm 1d {}", d.kind.name()), &d.kind, &d.ipm));
        pairs.push((format!("forward 1d {}", d.kind.name()), &d.kind, &d.forward));
    }
    for (name, kind, r) in pairs {
        if !r.converged {
            lines.push(format!("{name}: not converged, skipped"));
            continue;
        }
        let v = validate_eigenfunction(&r.u_star, r.lambda, kind, &cfg).unwrap();
        let ok = v.correlation_ok && v.extinction_ok;
        pass &= ok;
        let ext = v.extinction_time.map_or("none".into(), |t| format!("{:.3}", t * r.lambda));
        lines.push(format!("{name}: corr {:.4}, λ·t_ext {ext}", v.min_correlation));
    }
    report(6, "gradient-flow extinction", pass, &lines.join("; "));
    assert!(pass);
}

#[test]
fn c07_linear_case() {
    let n = 64;
    let f = eigenflow::grid::null_project(
        &GridField::from_column(normals(77, n)).unwrap(),
        &FunctionalKind::Tv,
    );
    let cfg = FlowConfig {
        max_outer: 200_000,
        ..FlowConfig::default()
    };
    let r = run_linear(&f, &NegLaplacian, &cfg).unwrap();
    let dense = assemble_dense(n, n, |x| {
        NegLaplacian
            .apply(&GridField::from_column(x.to_vec()).unwrap())
            .into_values()
    });
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| dense[j][i]);
    let eig = nalgebra::SymmetricEigen::new(m);
    let nearest = eig
        .eigenvalues
        .iter()
        .map(|e| (e - r.lambda).abs())
        .fold(f64::INFINITY, f64::min);
    let lu = NegLaplacian.apply(&r.u_star);
    let resid = lu.lin_comb(1.0, &r.u_star, -r.lambda).unwrap().norm() / r.u_star.norm();
    let pass = r.converged && resid <= 1e-3 && nearest <= 1e-3;
    report(
        7,
        "linear case",
        pass,
        &format!(
            "{} iterations, lambda {:.6}, residual {resid:.1e}, distance to dense spectrum {nearest:.1e}",
            r.trace.len(),
            r.lambda
        ),
    );
    assert!(pass);
}

#[test]
fn c08_spectral_concentration() {
    let r = &forward_square().result;
    let lambda = r.lambda;
    let dt = 1.0 / (100.0 * lambda);
    let sr = spectral_transform(&r.u_star, &FunctionalKind::Tv, dt, 1.5 / lambda, &SolverParams::default()).unwrap();
    let frac = sr.mass_fraction(0.8 / lambda, 1.2 / lambda);
    let recon = spectral_filter(&sr, |_| 1.0, true);
    let exact = recon == r.u_star;
    let pass = r.converged && frac >= 0.9 && exact;
    report(
        8,
        "spectral concentration",
        pass,
        &format!("mass in [0.8/λ, 1.2/λ] = {frac:.4}, H≡1 reconstruction exact {exact}"),
    );
    assert!(pass);
}

#[test]
fn c09_inverse_flow() {
    let inv = inverse_square();
    let fwd = &forward_square().result;
    let (j_bad, n_bad, worst) = monotone(&inv.records, 1e-4, true);
    let r = &inv.result;
    let pass = j_bad == 0 && n_bad == 0 && r.converged && r.affinity >= cos1() && r.lambda > fwd.lambda;
    report(
        9,
        "inverse flow",
        pass,
        &format!(
            "{} iterations, converged {}, A {:.6}, J decreases {j_bad} {worst}, norm increases {n_bad}, lambda inverse {:.4} vs forward {:.4}",
            inv.records.len().saturating_sub(1),
            r.converged,
            r.affinity,
            r.lambda,
            fwd.lambda
        ),
    );
    assert!(pass);
}

#[test]
fn c10_ipm_parity() {
    let mut pass = true;
    let mut lines = Vec::new();
    for d in one_d() {
        let ok = d.ipm.converged && d.ipm.affinity >= cos1();
        pass &= ok;
        lines.push(format!(
            "{}: ipm lambda {:.6} (A {:.6}, {} iterations) | forward lambda {:.6} ({} iterations)",
            d.kind.name(),
            d.ipm.lambda,
            d.ipm.affinity,
            d.ipm.trace.len().saturating_sub(1),
            d.forward.lambda,
            d.forward.trace.len().saturating_sub(1)
        ));
    }
    report(10, "IPM parity", pass, &lines.join("; "));
    assert!(pass);
}

#[test]
fn c11_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let mut traces = Vec::new();
    for sub in ["a", "b"] {
        let cfg = ExperimentConfig {
            method: Method::Forward,
            grid: Shape::new(24, 24),
            init: InitSpec::GaussianNoise { sigma: 1.0 },
            init_norm: Some(1.0),
            seed: 11,
            validate_result: false,
            output_dir: dir.path().join(sub),
            ..ExperimentConfig::default()
        };
        run_experiment(&cfg).unwrap();
        traces.push(std::fs::read(dir.path().join(sub).join("trace.csv")).unwrap());
    }
    let pass = !traces[0].is_empty() && traces[0] == traces[1];
    report(
        11,
        "determinism",
        pass,
        &format!("trace.csv {} bytes, identical {}", traces[0].len(), traces[0] == traces[1]),
    );
    assert!(pass);
}
