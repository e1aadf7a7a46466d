mod common;

use nalgebra::SymmetricEigen;
use octrans::sparse::{analyze, analyze_paired, analyze_with_order, factorize, refine, Inertia, SparseSym};
use proptest::prelude::*;

use common::{abs_product, eigen_inertia, quasi_definite, saddle_point, to_nalgebra};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quasi_definite_factorization_matches_dense_oracle(
        np in 1usize..12, nd in 0usize..8, density in 0.05f64..0.6, seed in any::<u64>()
    ) {
        let a = quasi_definite(np, nd, density, seed);
        let m = to_nalgebra(&a);
        let sym = analyze(&a).unwrap();
        let mut f = factorize(&a, &sym, np, 0.0, 0.0);
        prop_assert_eq!(f.inertia, eigen_inertia(&m));
        prop_assert_eq!(f.inertia, Inertia { positive: np, negative: nd, zero: 0 });

        // L D Lᵀ reproduces P A Pᵀ
        let rec = f.reconstruct();
        let norm = a.max_abs();
        for i in 0..a.n {
            for j in 0..a.n {
                let want = m[(sym.perm[i], sym.perm[j])];
                prop_assert!((rec[i][j] - want).abs() <= 1e-10 * norm, "({i},{j}) {} vs {want}", rec[i][j]);
            }
        }

        let b: Vec<f64> = (0..a.n).map(|i| (i as f64 + 1.0).sin()).collect();
        let x = f.solve(&b).unwrap();
        let want = m.clone().lu().solve(&nalgebra::DVector::from_vec(b.clone())).unwrap();
        for i in 0..a.n {
            prop_assert!((x[i] - want[i]).abs() <= 1e-9 * (1.0 + want[i].abs()));
        }
    }

    #[test]
    fn inertia_counts_indefinite_symmetric(n in 1usize..10, seed in any::<u64>()) {
        use rand::{RngExt, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let (mut r, mut c, mut v) = (vec![], vec![], vec![]);
        for i in 0..n {
            for j in 0..=i {
                r.push(i);
                c.push(j);
                v.push(rng.random_range(-1.0..1.0));
            }
        }
        let a = SparseSym::from_triplets(n, &r, &c, &v);
        let sym = analyze(&a).unwrap();
        let f = factorize(&a, &sym, n, 0.0, 0.0);
        // Sylvester's law: a completed LDLᵀ has the eigenvalue sign counts
        if f.inertia.zero == 0 {
            let d_tiny = f.d.iter().any(|d| d.abs() < 1e-8);
            prop_assume!(!d_tiny);
            prop_assert_eq!(f.inertia, eigen_inertia(&to_nalgebra(&a)));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { max_global_rejects: 1 << 20, ..ProptestConfig::with_cases(64) })]

    #[test]
    fn paired_pivots_factor_saddle_points(
        np in 2usize..12, nd_frac in 0.0f64..1.0, density in 0.05f64..0.6, seed in any::<u64>()
    ) {
        let nd = ((np as f64) * nd_frac) as usize;
        let (a, pairs) = saddle_point(np, nd, density, seed);
        let m = to_nalgebra(&a);
        let e = SymmetricEigen::new(m.clone());
        let scale = e.eigenvalues.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        let gap = e.eigenvalues.iter().fold(f64::INFINITY, |s, v| s.min(v.abs()));
        prop_assume!(gap > 1e-6 * scale);

        let sym = analyze_paired(&a, &pairs).unwrap();
        prop_assert_eq!(sym.blocks(), np + nd - pairs.len());
        let mut f = factorize(&a, &sym, np, 0.0, 0.0);
        if f.is_singular() {
            // a 1×1 pivot on an unpaired zero diagonal may legitimately vanish
            return Ok(());
        }
        prop_assert_eq!(f.inertia, eigen_inertia(&m));

        // static pivots carry no growth bound off the quasi-definite class;
        // past heavy growth only the inertia is meaningful
        let abs = abs_product(&f);
        let norm = a.max_abs();
        let growth = abs.iter().flatten().fold(0.0f64, |s, v| s.max(*v)) / norm;
        if growth > 1e6 {
            return Ok(());
        }
        // 2×2 pivots go through an explicit inverse, which adds their condition
        let kappa = (0..a.n)
            .filter(|&k| f.d_off[k] != 0.0)
            .map(|k| {
                let (p, o, q) = (f.d[k], f.d_off[k], f.d[k + 1]);
                (p.abs() + o.abs()).max(o.abs() + q.abs()).powi(2) / (p * q - o * o).abs()
            })
            .fold(1.0f64, f64::max);
        let rec = f.reconstruct();
        for i in 0..a.n {
            for j in 0..a.n {
                let want = m[(sym.perm[i], sym.perm[j])];
                let bound = 4.0 * a.n as f64 * f64::EPSILON * kappa * (abs[i][j] + norm);
                prop_assert!((rec[i][j] - want).abs() <= bound, "({i},{j}) {} vs {want}", rec[i][j]);
            }
        }
        let b: Vec<f64> = (0..a.n).map(|i| (i as f64 + 1.0).cos()).collect();
        let x = f.solve(&b).unwrap();
        let (x, _) = refine(&a, &mut f, &b, &x, 5).unwrap();
        let want = m.clone().lu().solve(&nalgebra::DVector::from_vec(b.clone())).unwrap();
        let xn = want.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        for i in 0..a.n {
            prop_assert!((x[i] - want[i]).abs() <= 1e-7 * (1.0 + xn));
        }
    }
}

#[test]
fn pairing_removes_the_need_for_dual_regularization() {
    // x1 has no curvature: every 1×1 order meets a zero pivot first
    let a = SparseSym::from_triplets(3, &[0, 2, 2], &[0, 1, 0], &[1.0, 1.0, 1.0]);
    let natural = analyze_with_order(&a, vec![1, 2, 0]);
    assert!(factorize(&a, &natural, 2, 0.0, 0.0).is_singular());
    let sym = analyze_paired(&a, &[(1, 2)]).unwrap();
    let mut f = factorize(&a, &sym, 2, 0.0, 0.0);
    assert_eq!(f.inertia, Inertia { positive: 2, negative: 1, zero: 0 });
    let x = f.solve(&[1.0, 2.0, 3.0]).unwrap();
    let mut y = vec![0.0; 3];
    a.mul_vec(&x, &mut y);
    for (yi, bi) in y.iter().zip([1.0, 2.0, 3.0]) {
        assert!((yi - bi).abs() < 1e-12);
    }
}

#[test]
fn ordering_handles_patterns_sparser_than_the_diagonal() {
    let a = SparseSym::from_triplets(4, &[3], &[1], &[2.0]);
    let sym = analyze(&a).unwrap();
    let mut p = sym.perm.clone();
    p.sort_unstable();
    assert_eq!(p, vec![0, 1, 2, 3]);
    assert!(factorize(&a, &sym, 2, 0.0, 0.0).is_singular());
}

#[test]
fn invalid_pairs_are_rejected() {
    let a = SparseSym::from_triplets(3, &[0, 1, 2], &[0, 1, 2], &[1.0, 1.0, 1.0]);
    assert!(analyze_paired(&a, &[(0, 1), (1, 2)]).is_err());
    assert!(analyze_paired(&a, &[(0, 3)]).is_err());
}

fn arrowhead(n: usize) -> SparseSym {
    let (mut r, mut c, mut v) = (vec![], vec![], vec![]);
    for i in 0..n {
        r.push(i);
        c.push(i);
        v.push(n as f64 + 1.0);
        if i > 0 {
            r.push(i);
            c.push(0);
            v.push(1.0);
        }
    }
    SparseSym::from_triplets(n, &r, &c, &v)
}

#[test]
fn arrowhead_fill_depends_on_order() {
    let a = arrowhead(200);
    let natural = analyze_with_order(&a, (0..200).collect());
    assert_eq!(natural.nnz_l(), 199 * 200 / 2);
    let amd = analyze(&a).unwrap();
    assert_eq!(amd.nnz_l(), 199);
    let mut f = factorize(&a, &amd, 200, 0.0, 0.0);
    let b = vec![1.0; 200];
    let x = f.solve(&b).unwrap();
    let (x2, rep) = refine(&a, &mut f, &b, &x, 5).unwrap();
    assert!(rep.residual <= 1e-12 * (a.norm_inf() * x2.iter().fold(0.0f64, |m, v| m.max(v.abs())) + 1.0));
}

#[test]
fn regularization_shifts_the_diagonal() {
    let a = SparseSym::from_triplets(3, &[0, 1, 2, 2], &[0, 1, 0, 1], &[0.0, 0.0, 1.0, 1.0]);
    let sym = analyze(&a).unwrap();
    assert!(factorize(&a, &sym, 2, 0.0, 0.0).is_singular());
    let mut f = factorize(&a, &sym, 2, 1e-2, 1e-6);
    assert_eq!(f.inertia, Inertia { positive: 2, negative: 1, zero: 0 });
    let b = [1.0, 2.0, 3.0];
    let x = f.solve(&b).unwrap();
    let mut y = vec![0.0; 3];
    f.apply_regularized(&a, &x, &mut y);
    for i in 0..3 {
        assert!((y[i] - b[i]).abs() < 1e-10);
    }
}
