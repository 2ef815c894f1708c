use bl_core::catalog;
use bl_heatflow::*;
use proptest::prelude::*;

fn bump(c: f64, w: f64, weight: f64) -> Bump {
    Bump {
        center: vec![c],
        width: w,
        weight,
    }
}

fn line_inputs(a: &[(f64, f64)], b: &[(f64, f64)]) -> Vec<GridField> {
    [a, b]
        .iter()
        .map(|spec| {
            let bumps: Vec<Bump> = spec.iter().map(|&(c, w)| bump(c, w, 1.0)).collect();
            GridField::from_bumps(1, 401, 8.0, &bumps).unwrap().normalized()
        })
        .collect()
}

#[test]
fn frame_heat_flow_rises_to_its_limit() {
    let frame = catalog::frame_120();
    let specs = [
        vec![bump(-0.8, 0.35, 1.0), bump(0.9, 0.5, 2.0)],
        vec![bump(0.4, 0.3, 1.0)],
        vec![bump(-0.2, 0.6, 1.0), bump(1.5, 0.25, 0.5)],
    ];
    let inputs: Vec<GridField> = specs
        .iter()
        .map(|b| GridField::from_bumps(1, 401, 8.0, b).unwrap().normalized())
        .collect();
    let tr = evolve_geometric_heat(&frame, &inputs, &default_times(), &HeatOptions::default()).unwrap();
    let check = assert_monotone(&tr, Direction::NonDecreasing);
    assert!(check.passed, "{check:?}");
    let limit = tr.limit.unwrap();
    assert!((limit - 1.0).abs() < 1e-12);
    let last = *tr.values.last().unwrap();
    assert!((last - limit).abs() < 0.02 * limit, "{last}");
    assert!(last <= limit + tr.error_bound.last().unwrap());
    assert!(tr.values[0] < 0.98 * limit);
    assert!(tr.mass_drift.unwrap() < 1e-6);
}

#[test]
fn sliding_gaussians_on_a_geometric_datum_hold_at_identity() {
    let frame = catalog::frame_120();
    let a = bl_core::GaussianInput::identity(&frame);
    let mu = PointMassList::new(vec![vec![-1.0], vec![0.5]], vec![1.0, 2.0]).unwrap();
    let tr = sliding_gaussian_trace(&frame, &a, &[mu.clone(), mu.clone(), mu], &[0.0, 0.3, 0.6, 0.9, 1.2]).unwrap();
    assert!(assert_monotone(&tr, Direction::NonIncreasing).passed);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn evolutions_conserve_mass(c1 in -2.0..2.0f64, c2 in -2.0..2.0f64, w1 in 0.2..0.8f64, w2 in 0.2..0.8f64) {
        let h = catalog::holder(1, &[0.5, 0.5]);
        let inputs = line_inputs(&[(c1, w1)], &[(c2, w2), (-c2, w1)]);
        let tr = evolve_geometric_heat(&h, &inputs, &geometric_times(0.05, 1.8, 6), &HeatOptions::default()).unwrap();
        prop_assert!(tr.mass_drift.unwrap() < 1e-6);
    }

    #[test]
    fn halving_the_grid_moves_q_within_its_bound(c1 in -1.5..1.5f64, c2 in -1.5..1.5f64, w in 0.25..0.7f64) {
        let h = catalog::holder(1, &[0.5, 0.5]);
        let inputs = line_inputs(&[(c1, w)], &[(c2, 0.4)]);
        let times = geometric_times(0.05, 2.0, 5);
        let fine = evolve_geometric_heat(&h, &inputs, &times, &HeatOptions::default()).unwrap();
        let opts = HeatOptions { domain_points: Some(4097), spacing_per_width: 1.0 / 32.0 };
        let finer = evolve_geometric_heat(&h, &inputs, &times, &opts).unwrap();
        for (k, t) in times.iter().enumerate() {
            let diff = (fine.values[k] - finer.values[k]).abs();
            prop_assert!(diff <= 4.0 * fine.error_bound[k], "t={} diff={} eb={}", t, diff, fine.error_bound[k]);
        }
    }

    #[test]
    fn heat_flow_stays_below_its_limit(c1 in -1.5..1.5f64, c2 in -1.5..1.5f64, w in 0.25..0.7f64) {
        let h = catalog::holder(1, &[0.5, 0.5]);
        let inputs = line_inputs(&[(c1, w)], &[(c2, 0.4)]);
        let tr = evolve_geometric_heat(&h, &inputs, &geometric_times(0.05, 2.0, 6), &HeatOptions::default()).unwrap();
        let k = tr.len() - 1;
        prop_assert!(tr.values[k] <= tr.limit.unwrap() + tr.error_bound[k]);
        prop_assert!(assert_monotone(&tr, Direction::NonDecreasing).passed);
    }

    #[test]
    fn center_of_mass_field_has_nonnegative_divergence(
        curv in 0.01..1.0f64,
        slope in 0.0..2.0f64,
        x1 in -3.0..3.0f64,
        x2 in -3.0..3.0f64,
        w1 in 0.1..5.0f64,
        w2 in 0.1..5.0f64,
    ) {
        let xs: Vec<f64> = (-40..=40).map(|k| k as f64 * 0.25).collect();
        let vals: Vec<f64> = xs.iter().map(|x| (-curv * x * x - slope * x.abs()).exp()).collect();
        let kernel = KernelSpec::tabulated(xs, vals).unwrap();
        let mu = PointMassList::new(vec![vec![x1], vec![x2]], vec![w1, w2]).unwrap();
        let grid: Vec<f64> = (0..601).map(|i| -9.0 + i as f64 * 0.03).collect();
        let div = center_of_mass_divergence(&kernel, &mu, &grid).unwrap();
        prop_assert!(div.iter().all(|&v| v >= -1e-8));
    }
}
