use excite::pce::{
    basis_size, build_multi_index_set, gauss_quadrature, pce_moments, project, ChaosBasis, Marginal,
    ParameterEnsemble,
};
use proptest::prelude::*;
use rand::SeedableRng;

fn binom(n: usize, k: usize) -> usize {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

fn mixed(a: (f64, f64), b: (f64, f64)) -> ParameterEnsemble {
    ParameterEnsemble::new([
        ("u", Marginal::uniform(a.0, a.0 + a.1).unwrap()),
        ("g", Marginal::gaussian(b.0, b.1).unwrap()),
    ])
    .unwrap()
}

proptest! {
    #[test]
    fn basis_size_is_binomial(q in 1usize..6, d in 0usize..6) {
        prop_assert_eq!(basis_size(q, d).unwrap(), binom(q + d, d));
        prop_assert_eq!(build_multi_index_set(q, d).unwrap().len(), binom(q + d, d));
    }

    #[test]
    fn gram_matrix_is_diagonal_with_stated_norms(
        lo in -3.0f64..3.0, w in 0.1f64..4.0, mu in -2.0f64..2.0, sd in 0.05f64..2.0, d in 0usize..4,
    ) {
        let basis = ChaosBasis::new(mixed((lo, w), (mu, sd)), d).unwrap();
        let grid = gauss_quadrature(basis.ensemble(), d + 1).unwrap();
        let g = basis.gram(&grid);
        for r in 0..basis.len() {
            for c in 0..basis.len() {
                let want = if r == c { basis.norms()[r] } else { 0.0 };
                prop_assert!((g[(r, c)] - want).abs() <= 1e-9 * basis.norms()[r].max(1.0));
            }
        }
    }

    #[test]
    fn polynomials_within_degree_are_reproduced(
        c0 in -2.0f64..2.0, c1 in -2.0f64..2.0, c2 in -2.0f64..2.0,
        x in 0.0f64..1.0, y in -3.0f64..3.0,
    ) {
        let basis = ChaosBasis::new(mixed((0.0, 1.0), (0.0, 1.0)), 2).unwrap();
        let grid = gauss_quadrature(basis.ensemble(), 3).unwrap();
        let f = |t: &[f64]| c0 + c1 * t[0] * t[1] + c2 * t[1] * t[1];
        let coef = project(&basis, &grid, 1, |t| vec![f(t)]).unwrap();
        let row: Vec<f64> = coef.row(0).iter().copied().collect();
        prop_assert!((basis.reconstruct(&row, &[x, y]).unwrap() - f(&[x, y])).abs() < 1e-10);
    }
}

#[test]
fn chaos_moments_agree_with_monte_carlo() {
    let ens = mixed((1.0, 2.0), (0.5, 0.3));
    let basis = ChaosBasis::new(ens.clone(), 6).unwrap();
    let grid = gauss_quadrature(&ens, 8).unwrap();
    let f = |t: &[f64]| (0.4 * t[0]).exp() * (1.0 + t[1] * t[1]);
    let coef = project(&basis, &grid, 1, |t| vec![f(t)]).unwrap();
    let row: Vec<f64> = coef.row(0).iter().copied().collect();
    let (mean, var) = pce_moments(&basis, &row).unwrap();

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let n = 200_000;
    let vals: Vec<f64> = (0..n)
        .map(|_| {
            let t: Vec<f64> = ens.marginals().iter().map(|m| m.sample(&mut rng)).collect();
            f(&t)
        })
        .collect();
    let mc_mean = vals.iter().sum::<f64>() / n as f64;
    let mc_var = vals.iter().map(|v| (v - mc_mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se = (mc_var / n as f64).sqrt();
    assert!((mean - mc_mean).abs() < 4.0 * se, "{mean} vs {mc_mean}");
    assert!((var / mc_var - 1.0).abs() < 0.02, "{var} vs {mc_var}");
}
