use dikernel::kernels::kernel_matrix;
use dikernel::numerics::{center_cols, pinv_psd, sym_eig};
use dikernel::objectives::{di, kdca_oracle, mrlse, nys_di};
use dikernel::{DIConfig, KernelConfig, Matrix, NystromMap, Targets};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-1.0f64..1.0, rows * cols)
        .prop_map(move |v| Matrix::from_column_slice(rows, cols, &v))
}

/// `(phi, y)` with `J` features, `N` samples and `L` outputs.
fn instance() -> impl Strategy<Value = (Matrix, Targets)> {
    (1usize..6, 3usize..20, 1usize..4).prop_flat_map(|(j, n, l)| {
        (matrix(j, n), matrix(n, l)).prop_map(|(phi, y)| (phi, Targets::raw(y)))
    })
}

fn rho() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), 1e-6f64..1.0]
}

proptest! {
    #[test]
    fn di_within_bounds((phi, y) in instance(), rho in rho()) {
        let v = di(&phi, &y, &DIConfig::new(rho).unwrap()).unwrap();
        prop_assert!(v >= -1e-10);
        prop_assert!(v <= y.centered_norm2());
    }

    #[test]
    fn di_plus_mrlse_is_target_energy((phi, y) in instance(), rho in rho()) {
        let cfg = DIConfig::new(rho).unwrap();
        let total = di(&phi, &y, &cfg).unwrap() + mrlse(&phi, &y, &cfg).unwrap();
        prop_assert!((total - y.centered_norm2()).abs() <= 1e-10 * y.centered_norm2().max(1.0));
    }

    #[test]
    fn di_non_increasing_in_rho((phi, y) in instance(), a in 1e-6f64..1.0, b in 1e-6f64..1.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let v_lo = di(&phi, &y, &DIConfig::new(lo).unwrap()).unwrap();
        let v_hi = di(&phi, &y, &DIConfig::new(hi).unwrap()).unwrap();
        prop_assert!(v_hi <= v_lo + 1e-10 * v_lo.abs().max(1.0));
    }

    #[test]
    fn di_invariant_to_sample_order((phi, y) in instance(), shift in 0usize..100) {
        let n = phi.ncols();
        let perm: Vec<usize> = (0..n).map(|i| (i * 7 + shift) % n).collect();
        // only a permutation when gcd(7, n) = 1
        prop_assume!(n % 7 != 0);
        let cfg = DIConfig::default();
        let a = di(&phi, &y, &cfg).unwrap();
        let b = di(
            &phi.select_columns(perm.iter()),
            &Targets::raw(y.y.select_rows(perm.iter())),
            &cfg,
        ).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn di_invariant_to_feature_shift((phi, y) in instance(), c in -5.0f64..5.0) {
        let cfg = DIConfig::default();
        let a = di(&phi, &y, &cfg).unwrap();
        let b = di(&phi.add_scalar(c), &y, &cfg).unwrap();
        prop_assert!((a - b).abs() <= 1e-8 * a.abs().max(1.0));
    }

    #[test]
    fn linear_nystrom_bounded_by_raw_di(
        x in matrix(3, 15),
        reps in matrix(3, 2),
        y in matrix(15, 2),
        rho in 1e-6f64..1.0,
    ) {
        let y = Targets::raw(y);
        let cfg = DIConfig::new(rho).unwrap();
        let map = NystromMap::new(reps, KernelConfig::linear()).unwrap();
        prop_assert!(nys_di(&x, &y, &map, &cfg).unwrap() <= di(&x, &y, &cfg).unwrap() + 1e-8);
    }

    #[test]
    fn nystrom_on_all_samples_is_kdca(x in matrix(2, 8), y in matrix(8, 2), rho in 1e-3f64..1.0) {
        let y = Targets::raw(y);
        let cfg = DIConfig::new(rho).unwrap();
        let kernel = KernelConfig::gaussian(3.0).unwrap();
        let map = NystromMap::new(x.clone(), kernel).unwrap();
        let ours = nys_di(&x, &y, &map, &cfg).unwrap();
        let oracle = kdca_oracle(&kernel_matrix(&x, &x, &kernel).unwrap(), &y, &cfg).unwrap();
        prop_assert!((ours - oracle).abs() <= 1e-6 * oracle.abs().max(1e-3));
    }

    #[test]
    fn pinv_penrose_conditions(a in matrix(4, 3)) {
        let m = &a * a.transpose();
        let p = pinv_psd(&m, 1e-10).unwrap();
        let scale = m.amax().max(1.0);
        prop_assert!((&m * &p * &m - &m).amax() <= 1e-8 * scale);
        prop_assert!((&p * &m * &p - &p).amax() <= 1e-8 * p.amax().max(1.0));
    }

    #[test]
    fn eig_reconstructs_gram(a in matrix(3, 5)) {
        let m = a.transpose() * &a;
        let f = sym_eig(&m).unwrap();
        prop_assert!((f.reconstruct() - &m).amax() <= 1e-10 * m.amax().max(1.0));
        prop_assert!(f.values.iter().zip(f.values.iter().skip(1)).all(|(a, b)| a >= b));
    }

    #[test]
    fn centering_gives_zero_row_means(a in matrix(3, 7)) {
        let c = center_cols(&a);
        prop_assert!(c.column_mean().amax() < 1e-14);
        prop_assert!((center_cols(&c) - &c).amax() < 1e-14);
    }
}
