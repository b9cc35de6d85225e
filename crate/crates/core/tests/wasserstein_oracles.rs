mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wfilter_core::wasserstein::w2_weighted_nodes_dirac;
use wfilter_core::{
    sample_gaussian, w2, w2_empirical, w2_gaussian_dirac, w2_gaussian_gaussian, w2_mixture_dirac,
    DiracPoint, EmpiricalCloud, Gaussian, GaussianMixture,
};

#[test]
fn gaussian_pair_symmetry_and_triangle() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for _ in 0..200 {
        let n = [1, 2, 3, 5][rng.random_range(0..4)];
        let a = random_gaussian(n, &mut rng);
        let b = random_gaussian(n, &mut rng);
        let c = random_gaussian(n, &mut rng);
        let ab = w2_gaussian_gaussian(&a, &b).unwrap();
        let ba = w2_gaussian_gaussian(&b, &a).unwrap();
        assert!((ab - ba).abs() < 1e-10 * ab.max(1.0));
        let bc = w2_gaussian_gaussian(&b, &c).unwrap();
        let ac = w2_gaussian_gaussian(&a, &c).unwrap();
        assert!(w2(ac) <= w2(ab) + w2(bc) + 1e-8);
        assert!(w2_gaussian_gaussian(&a, &a).unwrap() < 1e-10);
    }
}

#[test]
fn dirac_is_the_vanishing_covariance_limit() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for n in 1..=4 {
        let g = random_gaussian(n, &mut rng);
        let center = random_vector(n, 2.0, &mut rng);
        let exact = w2_gaussian_dirac(&g, &DiracPoint::new(center.clone()).unwrap()).unwrap();
        let root_trace = wfilter_core::linalg::psd_sqrt_trace(g.cov());
        for eps in [1e-4, 1e-6, 1e-8] {
            let near = Gaussian::with_floor(center.clone(), DMatrix::identity(n, n) * eps, 0.0).unwrap();
            let gap = exact - w2_gaussian_gaussian(&g, &near).unwrap();
            // N(c, εI) against δ(c): W₂² differs by exactly 2√ε·tr√Σ − nε
            let predicted = 2.0 * eps.sqrt() * root_trace - n as f64 * eps;
            assert!((gap - predicted).abs() < 1e-9 * exact.max(1.0), "n={n} eps={eps}");
        }
        let tight = Gaussian::with_floor(center.clone(), DMatrix::identity(n, n) * 1e-16, 0.0).unwrap();
        assert!((w2_gaussian_gaussian(&g, &tight).unwrap() - exact).abs() < 1e-5);
    }
}

#[test]
fn mixture_dirac_term_by_term_and_linear() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    for _ in 0..50 {
        let mix = random_mixture(3, 2, &mut rng);
        let d = DiracPoint::new(random_vector(2, 1.0, &mut rng)).unwrap();
        let by_hand: f64 = mix
            .components()
            .map(|(w, g)| w * ((g.mean() - d.location()).norm_squared() + g.cov().trace()))
            .sum();
        assert!((w2_mixture_dirac(&mix, &d).unwrap() - by_hand).abs() < 1e-12);

        let other = random_weights(3, &mut rng);
        let theta: f64 = rng.random_range(0.0..1.0);
        let blend: Vec<f64> = mix
            .weights()
            .iter()
            .zip(&other)
            .map(|(a, b)| theta * a + (1.0 - theta) * b)
            .collect();
        let lhs = w2_weighted_nodes_dirac(&blend, mix.nodes(), &d).unwrap();
        let rhs = theta * w2_weighted_nodes_dirac(mix.weights(), mix.nodes(), &d).unwrap()
            + (1.0 - theta) * w2_weighted_nodes_dirac(&other, mix.nodes(), &d).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}

#[test]
fn empirical_one_dimensional_matches_sorted_pairing() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    for n in [1usize, 5, 40, 128] {
        let mut a: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mut b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..5.0)).collect();
        let ca = EmpiricalCloud::new(DMatrix::from_column_slice(n, 1, &a)).unwrap();
        let cb = EmpiricalCloud::new(DMatrix::from_column_slice(n, 1, &b)).unwrap();
        a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let quantile: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / n as f64;
        assert!((w2_empirical(&ca, &cb).unwrap() - quantile).abs() < 1e-12);
    }
}

#[test]
fn empirical_shifted_standard_normals_approach_mean_gap() {
    let m = DVector::from_vec(vec![3.0, -2.0]);
    let a = Gaussian::<f64>::standard(2);
    let b = Gaussian::new(m.clone(), DMatrix::identity(2, 2)).unwrap();
    let n = 256;
    let ca = sample_gaussian(&a, n, &mut ChaCha8Rng::seed_from_u64(104)).unwrap();
    let cb = sample_gaussian(&b, n, &mut ChaCha8Rng::seed_from_u64(105)).unwrap();
    let est = w2_empirical(&ca, &cb).unwrap();
    let exact = m.norm_squared();
    assert!((est - exact).abs() / exact < 0.15, "{est} vs {exact}");
}

#[test]
fn mixture_of_identical_nodes() {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let g = random_gaussian(3, &mut rng);
    let d = DiracPoint::origin(3);
    let twin = GaussianMixture::new(vec![0.4, 0.6], vec![g.clone(), g.clone()]).unwrap();
    assert!((w2_mixture_dirac(&twin, &d).unwrap() - w2_gaussian_dirac(&g, &d).unwrap()).abs() < 1e-13);
}
