mod common;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use octrans::backend::Backend;
use octrans::dsl::parse_ocp;
use octrans::ipm::{assemble_kkt, solve, IpmOptions, Solution, Status};
use octrans::problems;
use octrans::transcription::{transcribe, InitPolicy, Scheme, StructuredNlp};

use common::{brute_force, qp_nlp, random_qp};

fn bundled(name: &str, n: usize) -> StructuredNlp {
    let p = parse_ocp(problems::by_name(name).unwrap()).unwrap();
    transcribe(&p, name, Scheme::Trapezoid, n, &InitPolicy::default()).unwrap()
}

fn run(nlp: &StructuredNlp, backend: &Backend) -> Solution {
    solve(nlp, &IpmOptions::default(), backend)
}

#[test]
fn double_integrator_reaches_analytic_optimum() {
    let s = run(&bundled("double_integrator", 1000), &Backend::serial());
    assert_eq!(s.status, Status::Optimal, "{:?}", s.message);
    assert!((s.objective - 6.0).abs() <= 1e-3, "{}", s.objective);
    assert_eq!(s.symbolic_analyses, 1);
    assert!(s.residuals.scaled <= 1e-8);
}

#[test]
fn trapezoid_is_second_order_on_double_integrator() {
    let err: Vec<f64> = [10, 20, 40, 80]
        .iter()
        .map(|&n| {
            let s = run(&bundled("double_integrator", n), &Backend::serial());
            assert_eq!(s.status, Status::Optimal);
            (s.objective - 6.0).abs()
        })
        .collect();
    // least-squares slope of log(err) against log(h)
    let pts: Vec<(f64, f64)> = [10.0f64, 20.0, 40.0, 80.0].iter().zip(&err).map(|(n, e)| ((1.0 / n).ln(), e.ln())).collect();
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / 4.0;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / 4.0;
    let num: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let den: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let order = num / den;
    assert!(order >= 1.9, "order {order}, errors {err:?}");
}

#[test]
fn serial_and_parallel_agree_bitwise() {
    let par = Backend::parallel(4).unwrap();
    for (name, n) in [("double_integrator", 200), ("goddard", 200), ("quadrotor", 200)] {
        let nlp = bundled(name, n);
        let a = run(&nlp, &Backend::serial());
        let b = run(&nlp, &par);
        assert_eq!(a.status, Status::Optimal, "{name}");
        assert_eq!(a.iterations, b.iterations, "{name}");
        assert_eq!(a.objective.to_bits(), b.objective.to_bits(), "{name}");
        assert_eq!(a.x, b.x, "{name}");
    }
}

#[test]
fn assemble_kkt_single_bounded_variable() {
    // Σ = z / (x - l) = 2 / 0.5
    let nlp = qp_nlp(&DMatrix::from_element(1, 1, 3.0), &[0.0], vec![0.0], vec![f64::INFINITY]);
    let k = assemble_kkt(&nlp, &[3.0], &[], &[4.0], 0.25, 0.0);
    assert_eq!(k.n, 1);
    assert_eq!(k.to_dense(), vec![vec![7.25]]);
}

#[test]
fn assemble_kkt_dual_regularization() {
    let src = "t in [0, 1], time\nx in R, state\nu in R, control\nx(0) == 0\nderivative(x)(t) == u(t)\n0.5 * integral(u(t)^2) => min\n";
    let nlp = transcribe(&parse_ocp(src).unwrap(), "t", Scheme::Euler, 1, &InitPolicy::default()).unwrap();
    assert_eq!(nlp.ncon(), 2);
    let hess = vec![0.0; nlp.nnz_hessian()];
    let jac = vec![1.0; nlp.nnz_jacobian()];
    let sigma = vec![0.0; nlp.nvar()];
    let k = assemble_kkt(&nlp, &hess, &jac, &sigma, 0.0, 1e-3);
    let d = k.to_dense();
    let nf = k.n - 2;
    assert_eq!(d[nf][nf], -1e-3);
    assert_eq!(d[nf + 1][nf + 1], -1e-3);
}

#[test]
fn assemble_kkt_double_integrator_dimension() {
    let nlp = bundled("double_integrator", 2);
    let hess = vec![1.0; nlp.nnz_hessian()];
    let jac = vec![1.0; nlp.nnz_jacobian()];
    let sigma = vec![0.0; nlp.nvar()];
    let k = assemble_kkt(&nlp, &hess, &jac, &sigma, 0.0, 0.0);
    let fixed = (0..nlp.nvar()).filter(|&i| nlp.lvar[i] == nlp.uvar[i]).count();
    assert_eq!(k.n, nlp.nvar() - fixed + nlp.ncon());
    let d = k.to_dense();
    for i in 0..k.n {
        for j in 0..k.n {
            assert_eq!(d[i][j], d[j][i]);
        }
    }
}

#[test]
fn ordering_keeps_fill_low_on_double_integrator() {
    let s = run(&bundled("double_integrator", 100), &Backend::serial());
    assert!(s.nnz_l as f64 <= 3.0 * s.nnz_kkt as f64, "nnz(L) {} nnz(KKT) {}", s.nnz_l, s.nnz_kkt);
}

#[test]
fn convex_box_qps_match_active_set_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..50 {
        let (q, c, l, u) = random_qp(&mut rng);
        let want = brute_force(&q, &c, &l, &u, 4).expect("enumeration finds the optimum");
        let nlp = qp_nlp(&q, &c, l, u);
        let s = run(&nlp, &Backend::serial());
        assert_eq!(s.status, Status::Optimal, "case {case}");
        for (i, (a, b)) in s.x.iter().zip(&want).enumerate() {
            assert!((a - b).abs() <= 1e-7, "case {case} x[{i}] {a} vs {b}");
        }
    }
}
