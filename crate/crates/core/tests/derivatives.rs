mod common;

use octrans::backend::Backend;
use octrans::diagnostics::derivative_check;
use octrans::dsl::parse_ocp;
use octrans::problems;
use octrans::transcription::{transcribe, InitPolicy, Scheme, StructuredNlp};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::random_point;

fn build(src: &str, scheme: Scheme, n: usize) -> StructuredNlp {
    transcribe(&parse_ocp(src).unwrap(), "t", scheme, n, &InitPolicy::default()).unwrap()
}

#[test]
fn ad_matches_finite_differences_on_benchmarks() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (name, src) in problems::ALL {
        for scheme in [Scheme::Trapezoid, Scheme::Euler] {
            let nlp = build(src, scheme, 6);
            for _ in 0..10 {
                let x = random_point(&nlp, &mut rng);
                let lambda: Vec<f64> = (0..nlp.ncon()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let r = derivative_check(&nlp, &x, 0.7, &lambda, 1e-6).unwrap();
                assert!(r.gradient <= 1e-6, "{name} {scheme:?} {r:?}");
                assert!(r.jacobian <= 1e-6, "{name} {scheme:?} {r:?}");
                assert!(r.hessian <= 1e-5, "{name} {scheme:?} {r:?}");
                assert_eq!((r.missing_jacobian, r.missing_hessian), (0, 0), "{name} {r:?}");
            }
        }
    }
}

#[test]
fn evaluations_are_deterministic_and_backend_invariant() {
    let nlp = build(problems::QUADROTOR, Scheme::Trapezoid, 1000);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random_point(&nlp, &mut rng);
    let lambda: Vec<f64> = (0..nlp.ncon()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let run = |b: &Backend| {
        let mut ws = nlp.workspace();
        let mut jac = vec![0.0; nlp.nnz_jacobian()];
        let mut hess = vec![0.0; nlp.nnz_hessian()];
        let mut c = vec![0.0; nlp.ncon()];
        nlp.jacobian(&x, b, &mut ws, &mut jac).unwrap();
        nlp.hessian(&x, 1.0, &lambda, b, &mut ws, &mut hess).unwrap();
        nlp.constraints(&x, b, &mut ws, &mut c).unwrap();
        let f = nlp.objective(&x, b, &mut ws).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        (bits(&jac), bits(&hess), bits(&c), f.to_bits())
    };
    let serial = run(&Backend::serial());
    assert_eq!(serial, run(&Backend::serial()));
    assert_eq!(serial, run(&Backend::parallel(1).unwrap()));
    assert_eq!(serial, run(&Backend::parallel(8).unwrap()));

    let g = build(problems::GODDARD, Scheme::Trapezoid, 3000);
    let f = |b: &Backend| g.objective(&g.x_start, b, &mut g.workspace()).unwrap().to_bits();
    assert_eq!(f(&Backend::serial()), f(&Backend::parallel(4).unwrap()));
}

#[test]
fn domain_errors_surface_from_nlp_evaluation() {
    let src = "t in [0, 1], time\nx in R, state\nu in R, control\nderivative(x)(t) == log(u(t))\nintegral(u(t)^2) => min\n";
    let nlp = build(src, Scheme::Trapezoid, 600);
    let mut x = vec![1.0; nlp.nvar()];
    x[nlp.layout.control(0, 555)] = -1.0;
    let mut c = vec![0.0; nlp.ncon()];
    for b in [Backend::serial(), Backend::parallel(3).unwrap()] {
        assert!(nlp.constraints(&x, &b, &mut nlp.workspace(), &mut c).is_err());
    }
}
