use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use riccomp::linalg::{
    is_self_adjoint, kernel_lemma_witness, psd_check, random_psd, random_psd_operator, random_self_adjoint,
    wedge_leq, wedge_value, InnerSpace, Operator, WedgeSampler,
};

fn space_for(i: usize) -> Arc<InnerSpace<f64>> {
    let n = 1 + i % 4;
    let k = (i / 4) % (n + 1);
    Arc::new(InnerSpace::standard(n, k).unwrap())
}

/// `n ∈ {2, 3, 4}`: Λ² of a line is zero, so wedge checks need `n ≥ 2`.
fn plane_or_larger(i: usize) -> Arc<InnerSpace<f64>> {
    let n = 2 + i % 3;
    Arc::new(InnerSpace::standard(n, (i / 3) % (n + 1)).unwrap())
}

fn gaussian(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Random nondegenerate Gram matrix `Pᵀ D P` with a prescribed number of
/// negative entries in `D`.
fn random_gram(n: usize, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let d = DMatrix::from_fn(n, n, |i, j| if i != j { 0.0 } else if i < k { -rng.random_range(0.5..2.0) } else { rng.random_range(0.5..2.0) });
    let p = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { rng.random_range(-0.4..0.4) });
    p.transpose() * d * p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn gram_index_matches_negative_eigenvalues(seed in any::<u64>(), n in 1usize..=5, k_raw in 0usize..=5) {
        let k = k_raw % (n + 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_gram(n, k, &mut rng);
        let space = InnerSpace::from_gram(g.clone()).unwrap();
        prop_assert_eq!(space.index(), k);
        prop_assert!((space.gram() - space.gram().transpose()).amax() == 0.0);
        let neg = g.symmetric_eigenvalues().iter().filter(|v| **v < 0.0).count();
        prop_assert_eq!(neg, k);
    }

    #[test]
    fn generated_operators_are_self_adjoint(seed in any::<u64>(), i in 0usize..40) {
        let space = space_for(i);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_self_adjoint(&space, 2.0, &mut rng);
        let ga = space.gram() * a.matrix();
        let defect = (&ga - ga.transpose()).amax();
        prop_assert!(defect <= 1e-12 * (1.0 + ga.amax()), "defect {defect:e}");
        prop_assert!(is_self_adjoint(&a));
        // ⟨Ax, y⟩ = ⟨x, Ay⟩.
        let (x, y) = (gaussian(space.dim(), &mut rng), gaussian(space.dim(), &mut rng));
        let lhs = space.inner(&a.apply(&x), &y);
        let rhs = space.inner(&x, &a.apply(&y));
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn wedge_value_is_symmetric_and_shear_invariant(seed in any::<u64>(), i in 0usize..40, lambda in -3.0f64..3.0) {
        let space = space_for(i);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_self_adjoint(&space, 1.0, &mut rng);
        let (x, y) = (gaussian(space.dim(), &mut rng), gaussian(space.dim(), &mut rng));
        let w = wedge_value(&a, &x, &y).unwrap();
        let swapped = wedge_value(&a, &y, &x).unwrap();
        let sheared = wedge_value(&a, &(&x + &y * lambda), &y).unwrap();
        // Terms are products of two forms; that sets the rounding scale.
        let fx = a.form(&x, &x).abs() + a.form(&x, &y).abs() + a.form(&y, &y).abs();
        let scale = (1.0 + lambda.abs()).powi(2) * fx * fx + 1e-300;
        prop_assert!((w - swapped).abs() <= 1e-12 * scale);
        prop_assert!((w - sheared).abs() <= 1e-10 * scale, "{w} vs {sheared}");
    }
}

#[test]
fn psd_check_agrees_with_random_search() {
    for i in 0..200 {
        let space = space_for(i);
        let n = space.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
        let a = if i % 2 == 0 { random_psd_operator(&space, 1.0, &mut rng) } else { random_self_adjoint(&space, 1.0, &mut rng) };
        let rep = psd_check(&a).unwrap();
        let tol = 1e-9 * (1.0 + rep.scale);
        let mut lowest = f64::INFINITY;
        for _ in 0..10_000 {
            let x = gaussian(n, &mut rng);
            let x = &x / x.norm();
            let v = a.form(&x, &x);
            lowest = lowest.min(v);
            // Rayleigh bound: no unit vector goes below the smallest eigenvalue.
            assert!(v >= rep.min_quadratic_eigenvalue - 1e-12 * (1.0 + rep.scale));
        }
        if rep.psd {
            assert!(lowest >= -tol, "instance {i}: psd but ⟨Ax,x⟩ = {lowest:e}");
        }
        if i % 2 == 0 {
            assert!(rep.psd, "instance {i}: generated PSD operator rejected");
        }
    }
}

#[test]
fn kernel_lemma_on_quadratic_null_set() {
    for i in 0..500 {
        let space = space_for(i + 1);
        let n = space.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + i as u64);
        let rank = rng.random_range(0..n);
        let q = random_psd::<f64, _>(n, rank, 1.0, &mut rng);
        let a = Operator::from_quadratic(space.clone(), &q).unwrap();
        // Project a random vector onto ker Q, where ⟨Ax,x⟩ = xᵀQx = 0.
        let z = gaussian(n, &mut rng);
        let pinv = q.clone().pseudo_inverse(1e-12).unwrap();
        let x0 = &z - &q * (&pinv * &z);
        let ax = kernel_lemma_witness(&a, &x0).unwrap();
        assert!(ax.norm() <= 1e-8 * (1.0 + a.norm()) * (1.0 + x0.norm()), "instance {i}: ‖Ax₀‖ = {:e}", ax.norm());
    }
}

#[test]
fn wedge_order_on_a_line_is_inconclusive() {
    let space = Arc::new(InnerSpace::<f64>::euclidean(1).unwrap());
    let a = Operator::identity(space.clone());
    assert!(wedge_leq(&Operator::zero(space), &a, &WedgeSampler::default()).is_err());
}

#[test]
fn kernel_lemma_rejects_non_psd() {
    let space = Arc::new(InnerSpace::<f64>::standard(2, 1).unwrap());
    let a = Operator::diagonal(space, &[1.0, 1.0]).unwrap();
    assert!(kernel_lemma_witness(&a, &DVector::from_vec(vec![1.0, 1.0])).is_err());
}

#[test]
fn wedge_positivity_for_semidefinite_operators() {
    let sampler = WedgeSampler::default();
    for i in 0..500 {
        let space = plane_or_larger(i);
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + i as u64);
        let a = random_psd_operator(&space, 1.0, &mut rng);
        let a = if i % 2 == 0 { a } else { a.scaled(-1.0) };
        let rep = wedge_leq(&Operator::zero(space.clone()), &a, &sampler).unwrap();
        assert!(rep.holds, "instance {i}: gap {:e}", rep.worst_gap);
    }
}

#[test]
fn wedge_monotonicity_along_chains() {
    let sampler = WedgeSampler::default();
    for i in 0..500 {
        let space = plane_or_larger(i);
        let mut rng = ChaCha8Rng::seed_from_u64(3000 + i as u64);
        let a = random_psd_operator(&space, 1.0, &mut rng);
        let b = &a + &random_psd_operator(&space, 1.0, &mut rng);
        let rep = wedge_leq(&a, &b, &sampler).unwrap();
        assert!(rep.holds, "instance {i}: gap {:e}", rep.worst_gap);
    }
}

#[test]
fn wedge_order_detects_a_reversed_chain() {
    // 0 ≤ A ≤ B with B − A of full rank: the reverse comparison must fail.
    let space = Arc::new(InnerSpace::<f64>::euclidean(3).unwrap());
    let a = Operator::diagonal(space.clone(), &[1.0, 1.0, 1.0]).unwrap();
    let b = Operator::diagonal(space, &[2.0, 2.0, 2.0]).unwrap();
    let rep = wedge_leq(&b, &a, &WedgeSampler::default()).unwrap();
    assert!(!rep.holds);
    assert!(rep.worst_gap < -1.0);
}

#[test]
fn f32_instantiation_matches_f64() {
    let s64 = Arc::new(InnerSpace::<f64>::standard(3, 1).unwrap());
    let s32 = Arc::new(InnerSpace::<f32>::standard(3, 1).unwrap());
    let a64 = Operator::diagonal(s64, &[1.0, 2.0, 3.0]).unwrap();
    let a32 = Operator::diagonal(s32, &[1.0f32, 2.0, 3.0]).unwrap();
    assert_eq!(psd_check(&a64).unwrap().psd, psd_check(&a32).unwrap().psd);
    assert!(is_self_adjoint(&a32));
}
