use bl_core::finiteness::{general_finiteness, Certificate, FinitenessStatus};
use bl_core::linalg::Mat;
use bl_core::model::{apply_equivalence, validate_datum};
use bl_core::solver::{self, SolveStatus};
use bl_core::structure::SearchBudget;
use bl_core::{catalog, BlDatum, EquivalenceTransform, GaussianInput, Tolerances};
use nalgebra::DVector;
use proptest::prelude::*;

fn tol() -> Tolerances {
    Tolerances::default()
}

fn invertible(k: usize) -> impl Strategy<Value = Mat> {
    proptest::collection::vec(-1.0..1.0f64, k * k).prop_map(move |v| Mat::from_vec(k, k, v) + Mat::identity(k, k) * 2.5)
}

/// Generic vectors in the plane with exponents near 2/m, inside the
/// rank-one polytope.
fn simple_planar() -> impl Strategy<Value = BlDatum> {
    (3usize..=5).prop_flat_map(|m| {
        (
            proptest::collection::vec(0.0..std::f64::consts::PI, m),
            proptest::collection::vec(-0.1..0.1f64, m),
        )
            .prop_filter_map("angles too close", move |(angles, jitter)| {
                let mut sorted = angles.clone();
                sorted.sort_by(f64::total_cmp);
                if sorted.windows(2).any(|w| w[1] - w[0] < 0.15)
                    || sorted[0] + std::f64::consts::PI - sorted[m - 1] < 0.15
                {
                    return None;
                }
                let vs: Vec<Vec<f64>> = angles.iter().map(|a| vec![a.cos(), a.sin()]).collect();
                let base = 2.0 / m as f64;
                let mean = jitter.iter().sum::<f64>() / m as f64;
                let p: Vec<f64> = jitter.iter().map(|e| base + (e - mean) * base).collect();
                Some(catalog::rank_one(&vs, &p))
            })
    })
}

fn some_datum() -> impl Strategy<Value = BlDatum> {
    prop_oneof![
        Just(catalog::young(&[2.0 / 3.0; 3])),
        Just(catalog::loomis_whitney()),
        Just(catalog::holder(2, &[0.25, 0.75])),
        simple_planar(),
    ]
}

#[test]
fn json_round_trip_preserves_the_constant() {
    let d = catalog::young(&[2.0 / 3.0; 3]);
    let back = BlDatum::from_json_str(&d.to_json().to_string()).unwrap();
    assert_eq!(back, d);
    let a = GaussianInput::scalars(&d, &[4.5; 3]).unwrap();
    let a_back = GaussianInput::from_json(&a.to_json(), &back).unwrap();
    assert_eq!(
        solver::gaussian_functional(&back, &a_back, &tol()).unwrap(),
        solver::gaussian_functional(&d, &a, &tol()).unwrap()
    );
}

#[test]
fn normalization_of_young_is_the_frame() {
    let d = catalog::young(&[2.0 / 3.0; 3]);
    let a = GaussianInput::scalars(&d, &[4.5; 3]).unwrap();
    let (geo, t) = solver::normalize_to_geometric(&d, &a, &tol()).unwrap();
    assert!(solver::is_geometric(&geo, 1e-10));
    let (again, _) = apply_equivalence(&d, &t, &tol()).unwrap();
    assert!(bl_core::model::data_close(&again, &geo, 1e-10));
    // The images of e_1, e_2 and e_1 - e_2 become unit vectors 120 degrees apart.
    let v: Vec<DVector<f64>> = (0..3).map(|j| geo.matrix(j).row(0).transpose()).collect();
    for j in 0..3 {
        assert!((v[j].norm() - 1.0).abs() < 1e-10);
        assert!((v[j].dot(&v[(j + 1) % 3]).abs() - 0.5).abs() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn constants_transform_covariantly(d in some_datum(), seed in 1u64..1000, c in invertible(3), c1 in invertible(2)) {
        let n = d.dim();
        let t = EquivalenceTransform {
            c: c.view((0, 0), (n, n)).into_owned(),
            c_list: d.target_dims().into_iter().map(|k| c1.view((0, 0), (k, k)).into_owned()).collect(),
        };
        let a = solver::random_input(&d, seed);
        let (moved, scale) = apply_equivalence(&d, &t, &tol()).unwrap();
        // Inputs follow the targets: C_j^T A_j C_j.
        let moved_a = t.transform_input(&a);
        let before = solver::gaussian_functional(&d, &a, &tol()).unwrap();
        let after = solver::gaussian_functional(&moved, &moved_a, &tol()).unwrap();
        prop_assert!((after - scale * before).abs() <= 1e-8 * after.abs().max(1.0), "{after} vs {}", scale * before);
    }

    #[test]
    fn centred_gaussians_dominate(d in simple_planar(), seed in 1u64..1000, w in proptest::collection::vec(-1.5..1.5f64, 10)) {
        let a = solver::random_input(&d, seed);
        let shifts: Vec<DVector<f64>> = (0..d.m())
            .map(|j| d.matrix(j) * DVector::from_column_slice(&w[2 * (j % 5)..2 * (j % 5) + 2]))
            .collect();
        let centred = solver::quadrature_oracle(&d, &a, &tol()).unwrap();
        let shifted = solver::quadrature_oracle_shifted(&d, &a, &shifts, &tol()).unwrap();
        prop_assert!(shifted <= centred + 1e-6, "{shifted} > {centred}");
    }

    #[test]
    fn converged_solves_are_stationary(d in some_datum(), seed in 0u64..50) {
        let out = solver::fixed_point_solve(&d, None, &tol(), solver::DEFAULT_MAX_ITER, seed).unwrap();
        prop_assert_eq!(out.status, SolveStatus::Converged);
        let a = out.extremiser.unwrap();
        prop_assert!(solver::stationarity_residual(&d, &a, &tol()).unwrap() <= tol().stat_tol);
        prop_assert_eq!(solver::gaussian_functional(&d, &a, &tol()).unwrap(), out.blg_value.unwrap());
    }

    #[test]
    fn simple_data_have_one_extremiser(d in simple_planar()) {
        let first = solver::fixed_point_solve(&d, None, &tol(), solver::DEFAULT_MAX_ITER, 0).unwrap().extremiser.unwrap();
        for seed in 1..16u64 {
            let other = solver::fixed_point_solve(&d, None, &tol(), solver::DEFAULT_MAX_ITER, seed).unwrap().extremiser.unwrap();
            prop_assert!(first.distance_up_to_scale(&other) <= 1e-6);
        }
    }

    #[test]
    fn geometric_data_are_non_degenerate(d in simple_planar()) {
        let a = solver::fixed_point_solve(&d, None, &tol(), solver::DEFAULT_MAX_ITER, 0).unwrap().extremiser.unwrap();
        let (geo, _) = solver::normalize_to_geometric(&d, &a, &tol()).unwrap();
        prop_assert!(validate_datum(&geo, &tol()).non_degenerate);
    }

    #[test]
    fn extremiser_certificates_are_scale_free(d in prop_oneof![Just(catalog::loomis_whitney()), Just(catalog::holder(2, &[0.5, 0.5]))]) {
        let verdict = general_finiteness(&d, &SearchBudget::default(), &tol(), 0).unwrap();
        prop_assert_eq!(verdict.status, FinitenessStatus::ProvenFinite);
        match verdict.certificate {
            Some(Certificate::Extremiser { input, blg_value, .. }) => {
                prop_assert!(solver::stationarity_residual(&d, &input, &tol()).unwrap() <= tol().stat_tol);
                for lambda in [0.5, 2.0] {
                    let v = solver::gaussian_functional(&d, &input.scaled(lambda), &tol()).unwrap();
                    prop_assert!((v - blg_value).abs() <= 1e-10 * blg_value);
                }
            }
            other => prop_assert!(false, "unexpected certificate {other:?}"),
        }
    }
}
