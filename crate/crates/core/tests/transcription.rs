use octrans::backend::Backend;
use octrans::dsl::parse_ocp;
use octrans::problems;
use octrans::transcription::{initial_point, transcribe, GroupKind, InitPolicy, Scheme, StructuredNlp};

fn nlp(src: &str, scheme: Scheme, n: usize) -> StructuredNlp {
    let p = parse_ocp(src).unwrap();
    transcribe(&p, "test", scheme, n, &InitPolicy::default()).unwrap()
}

fn cons(nlp: &StructuredNlp, x: &[f64]) -> Vec<f64> {
    let mut ws = nlp.workspace();
    let mut c = vec![0.0; nlp.ncon()];
    nlp.constraints(x, &Backend::serial(), &mut ws, &mut c).unwrap();
    c
}

fn obj(nlp: &StructuredNlp, x: &[f64], b: &Backend) -> f64 {
    let mut ws = nlp.workspace();
    nlp.objective(x, b, &mut ws).unwrap()
}

#[test]
fn double_integrator_trapezoid_first_residual() {
    let nlp = nlp(problems::DOUBLE_INTEGRATOR, Scheme::Trapezoid, 2);
    let l = nlp.layout;
    let mut x = nlp.x_start.clone();
    for (j, (a, b)) in [(-1.0, 0.0), (-0.75, 1.0), (0.0, 0.0)].into_iter().enumerate() {
        x[l.state(0, j)] = a;
        x[l.state(1, j)] = b;
    }
    let c = cons(&nlp, &x);
    // (-0.75 - (-1)) - 0.5 * (0 + 1) / 2
    assert_eq!(c[0], 0.0);
}

#[test]
fn euler_residual() {
    let src = "t in [0, 0.1], time\nx in R, state\nu in R, control\nderivative(x)(t) == u(t)\nx(0.1) => min\n";
    let nlp = nlp(src, Scheme::Euler, 1);
    let l = nlp.layout;
    let mut x = vec![0.0; l.nvar];
    x[l.state(0, 0)] = 1.0;
    x[l.state(0, 1)] = 1.2;
    x[l.control(0, 0)] = 2.0;
    let c = cons(&nlp, &x);
    assert!(c[0].abs() < 1e-15, "{}", c[0]);
    // U_N is never read and is pinned to its start value
    assert_eq!(nlp.lvar[l.control(0, 1)], 0.1);
    assert_eq!(nlp.uvar[l.control(0, 1)], 0.1);
}

#[test]
fn trapezoid_objective_quadrature() {
    let nlp = nlp(problems::DOUBLE_INTEGRATOR, Scheme::Trapezoid, 2);
    let mut x = nlp.x_start.clone();
    for j in 0..3 {
        x[nlp.layout.control(0, j)] = 2.0;
    }
    assert_eq!(obj(&nlp, &x, &Backend::serial()), 2.0);
    assert_eq!(obj(&nlp, &x, &Backend::parallel(4).unwrap()), 2.0);
    let weights: Vec<f64> = nlp.objective_groups.iter().map(|g| g.weight).collect();
    assert_eq!(weights, vec![0.5, 1.0]);
}

#[test]
fn dimension_formulas() {
    let di = nlp(problems::DOUBLE_INTEGRATOR, Scheme::Trapezoid, 2);
    assert_eq!((di.nvar(), di.ncon()), (9, 8));
    for n in [1, 7, 100] {
        let g = nlp(problems::GODDARD, Scheme::Trapezoid, n);
        assert_eq!(g.nvar(), 3 * (n + 1) + (n + 1) + 1);
        assert_eq!(g.ncon(), 3 * n + 3 + 1);
        let q = nlp(problems::QUADROTOR, Scheme::Trapezoid, n);
        assert_eq!(q.nvar(), 9 * (n + 1) + 4 * (n + 1));
        assert_eq!(q.ncon(), 9 * n + 9);
    }
}

#[test]
fn path_constraint_ranges() {
    let src = format!("{}\n-5 <= u(t) + x1(t) <= 5\nu(t)^2 <= 30\n", problems::DOUBLE_INTEGRATOR);
    for (scheme, expect) in [(Scheme::Trapezoid, [11, 11]), (Scheme::Euler, [11, 10])] {
        let nlp = nlp(&src, scheme, 10);
        let paths: Vec<usize> = nlp
            .constraint_groups
            .iter()
            .filter(|g| g.kind == GroupKind::Path)
            .map(|g| g.range.len())
            .collect();
        assert_eq!(paths, expect);
    }
}

#[test]
fn initial_point_policies() {
    let di = nlp(problems::DOUBLE_INTEGRATOR, Scheme::Trapezoid, 4);
    assert!(di.x_start.iter().all(|&v| v == 0.1));

    let mut g = nlp(problems::GODDARD, Scheme::Trapezoid, 10);
    let l = g.layout;
    assert!((0..=10).all(|j| g.x_start[l.control(0, j)] == 0.1));
    // r >= 1 clips the default 0.1 up to the bound
    assert!((0..=10).all(|j| g.x_start[l.state(0, j)] == 1.0));
    assert!(g.lvar.iter().zip(&g.x_start).zip(&g.uvar).all(|((lo, x), hi)| lo <= x && x <= hi));

    let slabs = InitPolicy::Slabs { variable: vec![0.2], state: vec![1.0, 0.05, 1.0], control: vec![2.0] };
    initial_point(&mut g, &slabs).unwrap();
    assert_eq!(g.x_start[l.free(0)], 0.2);
    assert_eq!(g.x_start[l.state(1, 4)], 0.05);
    assert_eq!(g.x_start[l.control(0, 3)], 1.0);

    let bad = InitPolicy::Slabs { variable: vec![0.2], state: vec![1.0; 5], control: vec![2.0] };
    assert!(initial_point(&mut g, &bad).is_err());
}

#[test]
fn zero_grid_is_rejected() {
    let p = parse_ocp(problems::DOUBLE_INTEGRATOR).unwrap();
    assert!(transcribe(&p, "di", Scheme::Euler, 0, &InitPolicy::default()).is_err());
}

#[test]
fn zero_dynamics_keep_constant_states() {
    let src = "t in [0, 2], time\nx in R^2, state\nu in R, control\nderivative(x1)(t) == 0\n\
               derivative(x2)(t) == 0 * u(t)\nintegral(u(t)^2) => min\n";
    for scheme in [Scheme::Euler, Scheme::Trapezoid] {
        let nlp = nlp(src, scheme, 13);
        let mut x: Vec<f64> = (0..nlp.nvar()).map(|i| (i as f64).cos()).collect();
        for j in 0..=13 {
            x[nlp.layout.state(0, j)] = 1.5;
            x[nlp.layout.state(1, j)] = -0.25;
        }
        assert!(cons(&nlp, &x).iter().all(|&c| c == 0.0));
    }
}

fn analytic_double_integrator(nlp: &StructuredNlp) -> Vec<f64> {
    let l = nlp.layout;
    let n = l.grid_size;
    let mut x = vec![0.0; l.nvar];
    for j in 0..=n {
        let t = j as f64 / n as f64;
        x[l.state(0, j)] = -1.0 + 3.0 * t * t - 2.0 * t * t * t;
        x[l.state(1, j)] = 6.0 * t - 6.0 * t * t;
        x[l.control(0, j)] = 6.0 - 12.0 * t;
    }
    x
}

#[test]
fn trapezoid_residuals_shrink_at_second_order() {
    let mut errs = Vec::new();
    for n in [10, 20, 40, 80] {
        let nlp = nlp(problems::DOUBLE_INTEGRATOR, Scheme::Trapezoid, n);
        let x = analytic_double_integrator(&nlp);
        let c = cons(&nlp, &x);
        errs.push(c[..2 * n].iter().fold(0.0f64, |a, v| a.max(v.abs())));
    }
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order >= 1.9, "{errs:?}");
    }
}

#[test]
fn free_horizon_enters_every_dynamics_row() {
    let nlp = nlp(problems::GODDARD, Scheme::Trapezoid, 20);
    let l = nlp.layout;
    let mut x: Vec<f64> = (0..l.nvar).map(|i| 0.5 + 0.3 * ((i as f64) * 0.7).sin().abs()).collect();
    x[l.free(0)] = 0.2;
    let c0 = cons(&nlp, &x);
    x[l.free(0)] = 0.25;
    let c1 = cons(&nlp, &x);
    let dyn_rows = 3 * 20;
    assert!((0..dyn_rows).all(|r| c0[r] != c1[r]));
}

#[test]
fn rows_depend_only_on_their_stencil() {
    let nlp = nlp(problems::DOUBLE_INTEGRATOR, Scheme::Trapezoid, 6);
    let (rows, cols) = nlp.jacobian_pattern();
    let x: Vec<f64> = (0..nlp.nvar()).map(|i| (i as f64 * 0.37).sin()).collect();
    let c0 = cons(&nlp, &x);
    for s in 0..nlp.nvar() {
        let mut xp = x.clone();
        xp[s] += 0.5;
        let c1 = cons(&nlp, &xp);
        for r in 0..nlp.ncon() {
            let touches = rows.iter().zip(cols).any(|(&rr, &cc)| rr == r && cc == s);
            if !touches {
                assert_eq!(c0[r], c1[r], "row {r} slot {s}");
            }
        }
    }
}

#[test]
fn dynamics_rows_read_their_stencil_only() {
    for scheme in [Scheme::Euler, Scheme::Trapezoid] {
        let nlp = nlp(problems::GODDARD, scheme, 9);
        let l = nlp.layout;
        let (rows, cols) = nlp.jacobian_pattern();
        for (&r, &c) in rows.iter().zip(cols) {
            if r >= 3 * 9 {
                continue;
            }
            let i = r / 3;
            let mut allowed: Vec<usize> = (0..3).flat_map(|k| [l.state(k, i), l.state(k, i + 1)]).collect();
            allowed.push(l.control(0, i));
            if scheme == Scheme::Trapezoid {
                allowed.push(l.control(0, i + 1));
            }
            allowed.push(l.free(0));
            assert!(allowed.contains(&c), "{scheme:?} row {r} reads slot {c}");
        }
    }
}

#[test]
fn debug_dump_matches_golden() {
    let nlp = nlp(problems::DOUBLE_INTEGRATOR, Scheme::Trapezoid, 2);
    let dump = serde_json::to_string_pretty(&nlp.debug_dump()).unwrap();
    let golden = include_str!("golden/double_integrator_trapezoid_n2.json");
    assert_eq!(dump.trim(), golden.trim());
}
