use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

use optomech::fockspace::{compose, expectation, ladder, number, FockConfig, QuantumState};

fn dims() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(2usize..5, 1..4)
}

fn config(d: &[usize]) -> Arc<FockConfig> {
    let labels: Vec<String> = (0..d.len()).map(|i| format!("m{i}")).collect();
    Arc::new(FockConfig::new(d, &labels).unwrap())
}

fn random_density(n: usize, seed: &[f64]) -> DMatrix<Complex64> {
    let m = DMatrix::from_fn(n, n, |i, j| {
        let k = (i * n + j) % seed.len();
        Complex64::new(seed[k] + 0.1 * i as f64, seed[(k + 1) % seed.len()] - 0.05 * j as f64)
    });
    let rho = &m * m.adjoint();
    let tr = rho.trace();
    rho / tr
}

proptest! {
    #[test]
    fn distinct_modes_commute(d in dims()) {
        let c = config(&d);
        for i in 0..d.len() {
            for j in 0..d.len() {
                if i == j {
                    continue;
                }
                let a = ladder(&c, i).unwrap();
                let b = ladder(&c, j).unwrap();
                for comm in [a.commutator(&b).unwrap(), a.commutator(&b.dag()).unwrap()] {
                    prop_assert!(comm.matrix().iter().all(|(_, _, v)| v == Complex64::new(0.0, 0.0)));
                }
            }
        }
    }

    #[test]
    fn ladder_entries_follow_sqrt_rule(d in dims(), pick in 0usize..3) {
        let c = config(&d);
        let m = pick % d.len();
        let a = ladder(&c, m).unwrap();
        for col in 0..c.total_dim() {
            let occ = c.occupations(col);
            for row in 0..c.total_dim() {
                let v = a.matrix().get(row, col);
                let mut lowered = occ.clone();
                let expected = if occ[m] > 0 {
                    lowered[m] -= 1;
                    if c.index_of(&lowered).unwrap() == row { (occ[m] as f64).sqrt() } else { 0.0 }
                } else {
                    0.0
                };
                prop_assert_eq!(v, Complex64::new(expected, 0.0));
            }
        }
    }

    #[test]
    fn compose_is_linear(d in dims(), x in -3.0f64..3.0, y in -3.0f64..3.0) {
        let c = config(&d);
        let a = ladder(&c, 0).unwrap();
        let ad = a.dag();
        let n = number(&c, 0).unwrap();
        let got = compose(&[(Complex64::new(x, 0.0), vec![&ad, &a]), (Complex64::new(0.0, y), vec![&a])]).unwrap();
        let want = &n.scaled(x) + &a.scaled(Complex64::new(0.0, y));
        prop_assert!(got.matrix().max_abs_diff(want.matrix()) < 1e-14);
    }

    #[test]
    fn hermitian_expectations_are_real(d in dims(), seed in prop::collection::vec(-1.0f64..1.0, 7..20)) {
        let c = config(&d);
        let state = QuantumState::density(c.clone(), random_density(c.total_dim(), &seed)).unwrap();
        let a = ladder(&c, d.len() - 1).unwrap();
        let x = &a + &a.dag();
        let n2 = &(&a.dag() * &a) * &(&a.dag() * &a);
        for op in [x, n2] {
            prop_assert!(expectation(&state, &op).unwrap().im.abs() < 1e-12);
        }
        prop_assert!((state.trace() - Complex64::new(1.0, 0.0)).norm() < 1e-10);
    }
}

#[test]
fn truncated_commutator_has_cutoff_entry() {
    let c = config(&[5]);
    let a = ladder(&c, 0).unwrap();
    let comm = a.commutator(&a.dag()).unwrap().to_dense();
    for k in 0..4 {
        assert!((comm[(k, k)].re - 1.0).abs() < 1e-14);
    }
    assert!((comm[(4, 4)].re + 4.0).abs() < 1e-14);
}
