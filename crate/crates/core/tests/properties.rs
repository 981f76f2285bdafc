use ctxbo::gp::{Dataset, GPRegressor, KernelSpec};
use ctxbo::mogp::{CoregionalizationMatrix, MOGPRegressor, MultiOutputDataset};
use ctxbo::sim::{mpc_objective, rollout, MPCConfig, MPCWeights, PredictedTrajectory, VehicleState};
use ctxbo::solution::{adapt, SolutionConfig, SolutionModel};
use ctxbo::BoxDomain;
use proptest::prelude::*;

fn point(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, dim)
}

fn kernel(dim: usize) -> impl Strategy<Value = KernelSpec> {
    (prop::collection::vec(0.1f64..2.0, dim), 0.1f64..3.0, any::<bool>()).prop_map(|(ls, var, se)| {
        if se {
            KernelSpec::squared_exponential(ls, var).unwrap()
        } else {
            KernelSpec::matern32(ls, var).unwrap()
        }
    })
}

fn min_eigenvalue(m: nalgebra::DMatrix<f64>) -> f64 {
    m.symmetric_eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernel_is_symmetric_and_bounded((k, x, y) in (1usize..4).prop_flat_map(|d| (kernel(d), point(d), point(d)))) {
        let kxy = k.eval(&x, &y).unwrap();
        prop_assert_eq!(kxy, k.eval(&y, &x).unwrap());
        prop_assert!((k.eval(&x, &x).unwrap() - k.prior_variance()).abs() <= 1e-12);
        prop_assert!(kxy > 0.0 && kxy <= k.prior_variance() + 1e-12);
    }

    #[test]
    fn gp_variance_is_nonnegative_and_covariance_psd(
        (k, xs, x) in (1usize..3).prop_flat_map(|d| (kernel(d), prop::collection::vec(point(d), 1..8), point(d))),
        noise in 1e-4f64..1e-1,
    ) {
        let ys = xs.iter().map(|p| p.iter().sum::<f64>().sin()).collect();
        let gp = GPRegressor::new(Dataset::new(xs, ys).unwrap(), k, noise).unwrap();
        let (_, var) = gp.predict(&x).unwrap();
        prop_assert!(var >= 0.0);
        prop_assert!(min_eigenvalue(gp.covariance_matrix()) > 0.0);
    }

    #[test]
    fn mogp_predictive_covariance_is_symmetric_psd(
        xs in prop::collection::vec(point(2), 1..6),
        a in prop::collection::vec(-1.0f64..1.0, 2),
        d in prop::collection::vec(0.01f64..0.5, 2),
        x in point(2),
    ) {
        let ys = xs.iter().map(|p| vec![p[0] - p[1], p[0] * p[1]]).collect();
        let b = CoregionalizationMatrix::new(vec![vec![a[0]], vec![a[1]]], d).unwrap();
        let k = KernelSpec::matern32(vec![0.5, 0.5], 1.0).unwrap();
        let gp = MOGPRegressor::new(MultiOutputDataset::new(xs, ys).unwrap(), k, b, 1e-3).unwrap();
        let (_, cov) = gp.predict(&x).unwrap();
        prop_assert!((cov[(0, 1)] - cov[(1, 0)]).abs() <= 1e-12);
        prop_assert!(min_eigenvalue(cov) >= -1e-10);
    }

    #[test]
    fn domain_unit_round_trip(lo in -5.0f64..5.0, width in 0.1f64..10.0, u in prop::collection::vec(0.0f64..=1.0, 3)) {
        let dom = BoxDomain::cube(3, lo, lo + width).unwrap();
        let x = dom.from_unit(&u);
        prop_assert!(dom.contains(&x, 1e-12));
        for (a, b) in dom.to_unit(&x).iter().zip(&u) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        let far: Vec<f64> = x.iter().map(|v| v * 100.0 + 1000.0).collect();
        prop_assert!(dom.contains(&dom.clamp(&far), 0.0));
    }

    #[test]
    fn rollout_composes(v0 in 0.0f64..10.0, u in prop::collection::vec(-3.0f64..3.0, 12), cut in 0usize..12) {
        let dt = MPCConfig::default().dt;
        let whole = rollout(VehicleState::new(-20.0, v0), &u, dt);
        let head = rollout(VehicleState::new(-20.0, v0), &u[..cut], dt);
        let tail = rollout(*head.last().unwrap(), &u[cut..], dt);
        let (a, b) = (whole.last().unwrap(), tail.last().unwrap());
        prop_assert!((a.p - b.p).abs() <= 1e-9 && (a.v - b.v).abs() <= 1e-9);
    }

    #[test]
    fn objective_is_linear_in_weights(
        z in prop::collection::vec(-2.0f64..2.0, 2),
        theta in prop::collection::vec(-2.0f64..2.0, 2),
        u in prop::collection::vec(-3.0f64..3.0, 24),
        c in 0.1f64..100.0,
    ) {
        let cfg = MPCConfig::default();
        let w = MPCWeights::from_log10(&z, &theta).unwrap();
        let traj = PredictedTrajectory::from_inputs(
            VehicleState::new(-15.0, 5.0), VehicleState::new(-12.0, 6.0),
            u[..12].to_vec(), u[12..].to_vec(), cfg.dt, [cfg.v_max, cfg.v_max],
        );
        let f = mpc_objective(&traj, &w, &cfg).unwrap();
        let fc = mpc_objective(&traj, &w.scaled(c), &cfg).unwrap();
        prop_assert!((fc - c * f).abs() <= 1e-9 * (1.0 + fc.abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn adapt_stays_in_domain_and_state_round_trips(
        pairs in prop::collection::vec((point(2), point(2)), 2..6),
        queries in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2), 1..5),
    ) {
        let dom = BoxDomain::cube(2, -1.0, 1.0).unwrap();
        let mut model = SolutionModel::new(dom.clone(), dom.clone(), SolutionConfig::default()).unwrap();
        for (t, z) in &pairs {
            model.add_pair(t, z).unwrap();
        }
        let restored = SolutionModel::from_state(
            serde_json::from_str(&serde_json::to_string(&model.to_state()).unwrap()).unwrap(),
        ).unwrap();
        for q in &queries {
            let z = adapt(&model, q).unwrap();
            prop_assert!(dom.contains(&z, 0.0));
            prop_assert_eq!(z, adapt(&restored, q).unwrap());
        }
    }
}
