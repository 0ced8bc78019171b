use covspec::datafile::DataMatrix;
use covspec::identity::{frobenius_from_traces, frobenius_test, lrt_constants};
use covspec::montecarlo::{gram_eigenvalues, gram_traces};
use covspec::stats::normal_cdf;
use covspec::stieltjes::{companion, solve, solve_reflected, SolverOptions};
use covspec::{AspectRatios, Complex64, MomentProfile, SpectralMeasure};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn measure() -> impl Strategy<Value = SpectralMeasure> {
    prop::collection::vec((0.05f64..1.0, 0.1f64..1.0), 1..5).prop_map(|v| {
        let (a, w): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
        SpectralMeasure::from_weighted(&a, &w).unwrap()
    })
}

fn upper_half_plane() -> impl Strategy<Value = Complex64> {
    (-1.0f64..2.0, -3.0f64..1.0).prop_map(|(x, lv)| Complex64::new(x, 10f64.powf(lv)))
}

fn real_matrix() -> impl Strategy<Value = DMatrix<f64>> {
    (1usize..7, 1usize..9).prop_flat_map(|(p, n)| {
        prop::collection::vec(-1e3f64..1e3, p * n).prop_map(move |v| DMatrix::from_vec(p, n, v))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn solutions_are_nevanlinna(z in upper_half_plane(), p in 1usize..5000, n in 1usize..5000, h in measure()) {
        let r = AspectRatios::new(p, n).unwrap();
        let s = solve(z, &r, &h, &SolverOptions::default()).unwrap();
        prop_assert!(s.m.im > 0.0);
        prop_assert!(companion(z, r.c1, r.c2, s.m).im > 0.0);
        prop_assert!(s.residual <= 1e-12 * s.m.norm().max(1.0));
    }

    #[test]
    fn reflection_conjugates(z in upper_half_plane(), p in 1usize..500, n in 1usize..500, h in measure()) {
        let r = AspectRatios::new(p, n).unwrap();
        let opts = SolverOptions::default();
        let up = solve(z, &r, &h, &opts).unwrap().m;
        let down = solve_reflected(z.conj(), &r, &h, &opts).unwrap().m;
        prop_assert!((down - up.conj()).norm() <= 1e-12 * up.norm().max(1.0));
    }

    #[test]
    fn binary_round_trip_is_bitwise(m in real_matrix()) {
        let x = DataMatrix::Real(m);
        let mut buf = Vec::new();
        x.write_binary_to(&mut buf).unwrap();
        let back = DataMatrix::read_from(&buf[..]).unwrap();
        prop_assert_eq!(back, x);
    }

    #[test]
    fn csv_round_trip_is_exact(m in real_matrix()) {
        let x = DataMatrix::Real(m.map(|v| v / 7.0));
        let mut buf = Vec::new();
        x.write_csv_to(&mut buf).unwrap();
        let back = DataMatrix::read_from(&buf[..]).unwrap();
        prop_assert_eq!(back, x);
    }

    #[test]
    fn frobenius_traces_agree_with_eigenvalues(m in real_matrix()) {
        let (p, n) = (m.nrows(), m.ncols());
        let x = DataMatrix::Real(m);
        let scale = 1.0 / n as f64;
        let eigs = gram_eigenvalues(&x, scale).unwrap();
        let (t1, t2) = gram_traces(&x, scale);
        let prof = MomentProfile::real_gaussian();
        let a = frobenius_test(&eigs, p, n, &prof).unwrap().z_score;
        let b = frobenius_from_traces(t1, t2, p, n, &prof).unwrap().z_score;
        prop_assert!((a - b).abs() <= 1e-8 * a.abs().max(1.0));
    }

    #[test]
    fn lrt_variance_is_positive(c in 1e-6f64..0.999, real in any::<bool>(), delta in -1.0f64..3.0) {
        let m = if real { MomentProfile::new(1.0, delta - 1.0).unwrap() } else { MomentProfile::new(0.0, delta).unwrap() };
        let (a, _, cn) = lrt_constants(c, &m).unwrap();
        prop_assert!(cn > 0.0 && cn.is_finite());
        prop_assert!(a > 0.0);
    }

    #[test]
    fn normal_cdf_is_symmetric(x in -30.0f64..30.0) {
        prop_assert!((normal_cdf(x) + normal_cdf(-x) - 1.0).abs() < 1e-15);
    }
}
