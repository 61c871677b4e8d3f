use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use riccomp::linalg::{is_self_adjoint, random_self_adjoint, InnerSpace, Operator};
use riccomp::ode::Controls;
use riccomp::riccati::{integrate_jacobi, integrate_riccati, random_profile_pair, CurvatureProfile};
use riccomp::suites;

fn space_for(i: usize) -> Arc<InnerSpace<f64>> {
    let n = 2 + i % 3;
    Arc::new(InnerSpace::standard(n, (i / 3) % (n + 1)).unwrap())
}

fn relative_adjoint_defect(op: &Operator<f64>) -> f64 {
    let ga = op.space().gram() * op.matrix();
    (&ga - ga.transpose()).amax() / (1.0 + ga.amax())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn profile_evaluation_is_self_adjoint_and_deterministic(seed in any::<u64>(), i in 0usize..30, t in 0.0f64..1.0) {
        let space = space_for(i);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lo, hi) = random_profile_pair(&space, 1.0, 4, 1.0, 1.0, &mut rng);
        for p in [&lo, &hi] {
            let (a, again) = (p.eval(t), p.eval(t));
            prop_assert!(is_self_adjoint(&a));
            prop_assert_eq!(a.matrix(), again.matrix());
        }
        prop_assert!(riccomp::riccati::profiles_ordered(&lo, &hi, 1.0).unwrap());
    }

    #[test]
    fn trajectory_samples_are_ordered_and_self_adjoint(seed in any::<u64>(), i in 0usize..30) {
        let space = space_for(i);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (r, _) = random_profile_pair(&space, 2.0, 4, 1.0, 0.0, &mut rng);
        let s0 = random_self_adjoint(&space, 0.5, &mut rng);
        let tr = integrate_riccati(&r, &s0, 2.0, &Controls::default()).unwrap();
        let samples = tr.samples();
        prop_assert!(samples.windows(2).all(|w| w[0].0 < w[1].0));
        for (t, s) in &samples {
            let d = relative_adjoint_defect(s);
            prop_assert!(d <= 1e-9, "t = {t}: defect {d:e}");
        }
        if let Some(bu) = tr.blow_up() {
            let (t_last, s_last) = samples.last().unwrap();
            prop_assert!(s_last.norm() > 1e8);
            prop_assert!(bu.bracket_width <= 1e-6);
            prop_assert!((t_last - bu.t_star).abs() <= 1e-6);
        } else {
            prop_assert!(tr.reaches(2.0));
        }
    }

    #[test]
    fn riccati_residual_is_small_inside_steps(seed in any::<u64>(), i in 0usize..30) {
        let space = space_for(i);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (r, _) = random_profile_pair(&space, 1.0, 3, 0.3, 0.0, &mut rng);
        let s0 = random_self_adjoint(&space, 0.3, &mut rng);
        let tr = integrate_riccati(&r, &s0, 1.0, &Controls::default()).unwrap();
        let end = tr.domain_end();
        for k in 1..40 {
            let t = end * k as f64 / 40.0;
            if r.breakpoints().iter().any(|b| (b - t).abs() < 1e-9) {
                continue;
            }
            let s = tr.at(t).unwrap();
            let res = tr.residual_at(t).unwrap();
            // Dense-output derivative: fourth order in the step.
            prop_assert!(res <= 1e-6 * (1.0 + s.norm() * s.norm()), "t = {t}: residual {res:e}");
        }
    }

    #[test]
    fn wronskian_is_conserved(seed in any::<u64>(), i in 0usize..30) {
        let space = space_for(i);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (r, _) = random_profile_pair(&space, 3.0, 4, 1.0, 0.0, &mut rng);
        let f0 = Operator::identity(space.clone());
        let df0 = random_self_adjoint(&space, 1.0, &mut rng);
        let jt = integrate_jacobi(&r, &f0, &df0, 3.0, &Controls::default()).unwrap();
        prop_assert!(jt.wronskian_drift() <= 1e-9, "drift {:e}", jt.wronskian_drift());
    }
}

#[test]
fn jacobi_and_riccati_agree() {
    let rep = suites::jacobi_consistency_suite(7, 100);
    assert!(rep.passed, "{}\n{:#?}", rep.summary(), rep.failures);
}

#[test]
fn comparison_holds_without_reaching_b() {
    // Draws that blow up before b still compare on the common domain.
    let g = Arc::new(InnerSpace::<f64>::from_gram(nalgebra::dmatrix![1.0, 0.0; 0.0, -1.0]).unwrap());
    let c = Controls::default();
    let lo = CurvatureProfile::zero(g.clone());
    let hi = CurvatureProfile::constant(Operator::diagonal(g.clone(), &[1.0, 0.0]).unwrap()).unwrap();
    let zero = Operator::zero(g);
    let t1 = integrate_riccati(&lo, &zero, 3.0, &c).unwrap();
    let t2 = integrate_riccati(&hi, &zero, 3.0, &c).unwrap();
    assert!(t2.blow_up().is_some());
    let cmp = riccomp::riccati::compare_trajectories(&t1, &t2).unwrap();
    assert!(cmp.holds);
    assert!(cmp.t_common < std::f64::consts::FRAC_PI_2 + 1e-6);
}

#[test]
fn suites_are_deterministic() {
    let a = suites::comparison_suite(11, 12);
    let b = suites::comparison_suite(11, 12);
    assert_eq!(a, b);
}
