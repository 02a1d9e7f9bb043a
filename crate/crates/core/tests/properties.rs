//! Randomized invariants. Instances are drawn from seeded generators so that
//! proptest only has to shrink a seed.

mod common;

use capcount::reference::{coeff_sum_brute, CoefficientTable};
use capcount::{bound_m, cap, count_estimate, CapacityOptions, MatroidSpec, Membership, PolynomialOracle, ProductSpec};
use common::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

fn opts() -> CapacityOptions {
    CapacityOptions::default().with_eps(1e-7)
}

fn any_matroid(rng: &mut rand_chacha::ChaCha8Rng, max_m: usize) -> MatroidSpec {
    match rng.random_range(0..3) {
        0 => random_uniform(rng, 2, max_m),
        1 => random_partition(rng, 2, max_m),
        _ => any_graphic(rng, max_m),
    }
}

fn positive_point(rng: &mut rand_chacha::ChaCha8Rng, m: usize) -> Vec<f64> {
    (0..m).map(|_| rng.random_range(0.2..3.0)).collect()
}

fn stable_poly(rng: &mut rand_chacha::ChaCha8Rng, n: usize, m: usize) -> PolynomialOracle {
    if rng.random_bool(0.5) {
        random_product(rng, n, m)
    } else {
        random_determinantal(rng, n, m)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn homogeneity_and_euler(seed in any::<u64>(), lambda in 0.3f64..4.0) {
        let mut rng = rng(seed);
        let m = rng.random_range(2..=6);
        let n = rng.random_range(1..=m);
        let g = stable_poly(&mut rng, n, m);
        let z = positive_point(&mut rng, m);
        let gz = g.evaluate(&z).unwrap();
        let scaled: Vec<f64> = z.iter().map(|v| v * lambda).collect();
        prop_assert!(rel(g.evaluate(&scaled).unwrap(), lambda.powi(n as i32) * gz) < 1e-9);
        let euler: f64 = (0..m).map(|i| z[i] * g.partial_derivative(i, &z).unwrap()).sum();
        prop_assert!(rel(euler, n as f64 * gz) < 1e-6, "{} vs {}", euler, n as f64 * gz);
    }

    #[test]
    fn derivative_matches_finite_difference(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let m = rng.random_range(2..=5);
        let n = rng.random_range(1..=m);
        let g = stable_poly(&mut rng, n, m);
        let z = positive_point(&mut rng, m);
        let i = rng.random_range(0..m);
        let h = 1e-5 * z[i];
        let mut up = z.clone();
        up[i] += h;
        let mut down = z.clone();
        down[i] -= h;
        let fd = (g.evaluate(&up).unwrap() - g.evaluate(&down).unwrap()) / (2.0 * h);
        prop_assert!(rel(g.partial_derivative(i, &z).unwrap(), fd) < 1e-5);
    }

    #[test]
    fn coefficient_table_reproduces_values(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let m = rng.random_range(2..=5);
        let n = rng.random_range(1..=3.min(m));
        let g = stable_poly(&mut rng, n, m);
        let table = CoefficientTable::expand(&g).unwrap();
        let z = positive_point(&mut rng, m);
        prop_assert!(rel(table.evaluate(&z), g.evaluate(&z).unwrap()) < 1e-8);
    }

    #[test]
    fn greedy_matches_enumeration(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let mat = any_matroid(&mut rng, 10);
        let bases = mat.enumerate_bases(100_000).unwrap();
        let w: Vec<f64> = (0..mat.m()).map(|_| rng.random_range(-5.0..5.0)).collect();
        let (base, weight) = mat.min_weight_base(&w).unwrap();
        prop_assert!(mat.is_base(&base));
        let brute = bases.iter().map(|s| s.iter().map(|&i| w[i]).sum::<f64>()).fold(f64::INFINITY, f64::min);
        prop_assert!((weight - brute).abs() < 1e-9);
    }

    #[test]
    fn dual_is_an_involution(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let mat = any_matroid(&mut rng, 9);
        let bases = mat.enumerate_bases(100_000).unwrap();
        let dual = mat.dual();
        prop_assert_eq!(dual.rank(), mat.m() - mat.rank());
        let mut complements: Vec<Vec<usize>> = bases
            .iter()
            .map(|s| (0..mat.m()).filter(|i| !s.contains(i)).collect())
            .collect();
        complements.sort();
        prop_assert_eq!(&dual.enumerate_bases(100_000).unwrap(), &complements);
        prop_assert_eq!(dual.dual().enumerate_bases(100_000).unwrap(), bases);
    }

    #[test]
    fn marginals_complement_under_duality(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let mat = any_matroid(&mut rng, 8);
        let bases = mat.enumerate_bases(100_000).unwrap();
        let mut x = vec![0.0; mat.m()];
        let weights: Vec<f64> = bases.iter().map(|_| rng.random_range(0.0..1.0)).collect();
        let total: f64 = weights.iter().sum();
        for (s, w) in bases.iter().zip(&weights) {
            for &i in s {
                x[i] += w / total;
            }
        }
        prop_assert_eq!(mat.membership_p(&x, 1e-7).unwrap(), Membership::Inside);
        let co: Vec<f64> = x.iter().map(|v| 1.0 - v).collect();
        prop_assert_eq!(mat.dual().membership_p(&co, 1e-7).unwrap(), Membership::Inside);
    }

    #[test]
    fn capacity_scaling_laws(seed in any::<u64>(), c in 0.1f64..10.0) {
        let mut rng = rng(seed);
        let mat = random_partition(&mut rng, 2, 6);
        let g = stable_poly(&mut rng, mat.rank(), mat.m());
        let base = cap(&g, &mat, &opts()).unwrap();
        let scaled = cap(&g.scaled(c).unwrap(), &mat, &opts()).unwrap();
        prop_assert!(rel(scaled.value, c * base.value) < 1e-5);

        // Cap(g(λ·)) = λ^n Cap(g) for homogeneous g.
        let lambda = rng.random_range(0.5..2.0);
        let dilated = cap(&g.restrict_scale(&vec![lambda; mat.m()]).unwrap(), &mat, &opts()).unwrap();
        prop_assert!(rel(dilated.value, lambda.powi(mat.rank() as i32) * base.value) < 1e-5);
    }

    #[test]
    fn capacity_bounds_count_from_above(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let mat = any_matroid(&mut rng, 7);
        let g = stable_poly(&mut rng, mat.rank(), mat.m()).assert_real_stable();
        let truth = coeff_sum_brute(&g, &mat).unwrap();
        let c = cap(&g, &mat, &opts()).unwrap();
        prop_assert!(truth <= c.value * (1.0 + 1e-5), "g_B {} > cap {}", truth, c.value);
        prop_assert!(c.value <= g.evaluate(&vec![1.0; mat.m()]).unwrap() * (1.0 + 1e-9));

        let e = count_estimate(&g, &mat, &opts()).unwrap();
        let bound = bound_m(&mat, g.is_multilinear()).unwrap().best.value;
        prop_assert!(e.lower <= e.point && e.point <= e.upper);
        prop_assert!(e.upper / e.lower <= bound * (1.0 + 1e-9));
    }

    #[test]
    fn capacity_is_monotone_in_coefficients(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let mat = any_matroid(&mut rng, 6);
        let (n, m) = (mat.rank(), mat.m());
        let a = DMatrix::from_fn(n, m, |_, _| rng.random_range(0.1..2.0));
        let bump = DMatrix::from_fn(n, m, |_, _| rng.random_range(0.0..1.0));
        // Raising every entry of A raises every coefficient of the product.
        let g = PolynomialOracle::linear_product(ProductSpec::new(a.clone()).unwrap());
        let larger = PolynomialOracle::linear_product(ProductSpec::new(a + bump).unwrap());
        let lo = cap(&g, &mat, &opts()).unwrap().value;
        let hi = cap(&larger, &mat, &opts()).unwrap().value;
        prop_assert!(hi >= lo * (1.0 - 1e-6), "{} < {}", hi, lo);
    }
}
