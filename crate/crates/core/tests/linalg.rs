use nalgebra::DMatrix as NaMatrix;
use platoon_core::linalg::{cholesky, solve_lower, symmetric_eigen, symmetric_eigenvalues, DMatrix};
use proptest::prelude::*;

fn symmetric(n: usize, entries: &[f64]) -> DMatrix {
    DMatrix::from_fn(n, n, |i, j| {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        entries[a * n + b]
    })
}

#[test]
fn small_known_spectra() {
    let a = DMatrix::from_fn(2, 2, |i, j| if i == j { 2.0 } else { 1.0 });
    let v = symmetric_eigenvalues(&a).unwrap();
    assert!((v[0] - 1.0).abs() < 1e-14 && (v[1] - 3.0).abs() < 1e-14);
    assert_eq!(symmetric_eigenvalues(&DMatrix::from_fn(1, 1, |_, _| -4.0)).unwrap(), vec![-4.0]);
    let diag = DMatrix::from_fn(3, 3, |i, j| if i == j { [3.0, -1.0, 2.0][i] } else { 0.0 });
    assert_eq!(symmetric_eigenvalues(&diag).unwrap(), vec![-1.0, 2.0, 3.0]);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    /// Householder/QL, cyclic Jacobi and nalgebra agree on the spectrum.
    #[test]
    fn three_routes_agree(n in 1usize..24, entries in prop::collection::vec(-5.0..5.0_f64, 24 * 24)) {
        let a = symmetric(n, &entries);
        let ql = symmetric_eigenvalues(&a).unwrap();
        let jac = symmetric_eigen(&a).unwrap();
        let na = NaMatrix::from_fn(n, n, |i, j| a[(i, j)]);
        let mut theirs: Vec<f64> = na.symmetric_eigen().eigenvalues.iter().copied().collect();
        theirs.sort_by(f64::total_cmp);
        let scale = a.max_abs().max(1.0) * n as f64;
        for k in 0..n {
            prop_assert!((ql[k] - theirs[k]).abs() <= 1e-11 * scale);
            prop_assert!((jac.values[k] - theirs[k]).abs() <= 1e-11 * scale);
        }
        // A v = λ v for the Jacobi vectors.
        for k in 0..n {
            for i in 0..n {
                let av: f64 = (0..n).map(|j| a[(i, j)] * jac.vectors[(j, k)]).sum();
                prop_assert!((av - jac.values[k] * jac.vectors[(i, k)]).abs() <= 1e-10 * scale);
            }
        }
    }

    #[test]
    fn cholesky_reconstructs(n in 1usize..12, entries in prop::collection::vec(-1.0..1.0_f64, 144)) {
        let b = DMatrix::from_fn(n, n, |i, j| entries[i * 12 + j]);
        let a = DMatrix::from_fn(n, n, |i, j| (0..n).map(|k| b[(i, k)] * b[(j, k)]).sum::<f64>() + if i == j { 0.5 } else { 0.0 });
        let l = cholesky(&a).unwrap();
        for i in 0..n {
            for j in 0..n {
                let llt: f64 = (0..n).map(|k| l[(i, k)] * l[(j, k)]).sum();
                prop_assert!((llt - a[(i, j)]).abs() <= 1e-12 * (1.0 + a.max_abs()));
            }
        }
        let x = solve_lower(&l, &a).unwrap();
        for i in 0..n {
            for j in 0..n {
                let lx: f64 = (0..n).map(|k| l[(i, k)] * x[(k, j)]).sum();
                prop_assert!((lx - a[(i, j)]).abs() <= 1e-10 * (1.0 + a.max_abs()));
            }
        }
    }
}
