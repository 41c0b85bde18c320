use std::f64::consts::{FRAC_PI_4, PI};

use koopman_core::control::{care_residual, linearize, lqr_gain, solve_care, LqrWeights};
use koopman_core::dynamics::{simulate, FeedbackLaw, System, SystemKind};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn check_care(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>, p: &DMatrix<f64>) {
    let res = care_residual(a, b, q, r, p);
    assert!(res < 1e-8 * (1.0 + p.norm()), "residual {res}");
    assert!((p - p.transpose()).norm() < 1e-10);
    assert!(SymmetricEigen::new(p.clone()).eigenvalues.min() > -1e-9 * (1.0 + p.norm()));
}

#[test]
fn pendulum_closed_loop_settles() {
    let system = System::default_for(SystemKind::Pendulum);
    let model = linearize(&system, &[0.0, 0.0]).unwrap();
    let w = LqrWeights::diagonal(&[0.0, 10.0], &[1.0]).unwrap();
    let ctrl = lqr_gain(&model, &w, &[0.0, 0.0]).unwrap();
    check_care(&model.a, &model.b, &w.q, &w.r, &ctrl.p);
    assert!(ctrl.closed_loop.iter().all(|l| l.re < 0.0));
    let traj = simulate(&system, &[FRAC_PI_4, 0.0], 0.01, 1000, Some(&ctrl as &dyn FeedbackLaw)).unwrap();
    assert!(traj.last_state().amax() < 1e-2, "{}", traj.last_state());
    assert_eq!(ctrl.control(&DVector::zeros(2)), 0.0);
}

#[test]
fn cartpole_closed_loop_reaches_the_set_point() {
    let system = System::default_for(SystemKind::CartPole);
    let target = [1.0, 0.0, PI, 0.0];
    let model = linearize(&system, &target).unwrap();
    let w = LqrWeights::diagonal(&[5.0, 10.0, 0.0, 0.0], &[1.0]).unwrap();
    let ctrl = lqr_gain(&model, &w, &target).unwrap();
    check_care(&model.a, &model.b, &w.q, &w.r, &ctrl.p);
    assert!(ctrl.closed_loop.iter().all(|l| l.re < 0.0));
    let traj = simulate(&system, &[-1.0, 0.0, PI, 0.0], 0.01, 2000, Some(&ctrl as &dyn FeedbackLaw)).unwrap();
    let err = traj.last_state() - DVector::from_column_slice(&target);
    assert!(err.amax() < 1e-2, "{err}");
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn riccati_contract_on_random_controllable_plants(seed in any::<u64>(), n in 1usize..=5, l in 1usize..=2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-2.0..2.0));
        let b = DMatrix::from_fn(n, l, |_, _| rng.random_range(-1.0..1.0));
        // Keep the controllability matrix well conditioned.
        let mut ctrb = DMatrix::zeros(n, n * l);
        let mut blk = b.clone();
        for k in 0..n {
            ctrb.columns_mut(k * l, l).copy_from(&blk);
            blk = &a * blk;
        }
        let sv = ctrb.singular_values();
        prop_assume!(sv.min() > 1e-2 * sv.max());
        let q = DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| rng.random_range(0.1..10.0)));
        let r = DMatrix::from_diagonal(&DVector::from_fn(l, |_, _| rng.random_range(0.1..10.0)));
        let p = solve_care(&a, &b, &q, &r).unwrap();
        let res = care_residual(&a, &b, &q, &r, &p);
        prop_assert!(res < 1e-8 * (1.0 + p.norm()), "residual {}", res);
        prop_assert!((&p - p.transpose()).norm() < 1e-10 * (1.0 + p.norm()));
        let k = r.try_inverse().unwrap() * b.transpose() * &p;
        let closed = (&a - &b * k).complex_eigenvalues();
        prop_assert!(closed.iter().all(|z| z.re < 0.0));
    }
}
