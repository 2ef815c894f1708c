//! Standard data used throughout the test suites and as CLI examples.

use crate::linalg::Mat;
use crate::model::BlDatum;

/// `m` identity maps on `R^n`.
pub fn holder(n: usize, p: &[f64]) -> BlDatum {
    BlDatum::from_parts(n, vec![Mat::identity(n, n); p.len()], p).expect("valid shapes")
}

/// The three coordinate projections `R^3 -> R^2`, each exponent 1/2.
pub fn loomis_whitney() -> BlDatum {
    let drop = |k: usize| {
        let keep: Vec<usize> = (0..3).filter(|&i| i != k).collect();
        Mat::from_fn(2, 3, |r, c| if keep[r] == c { 1.0 } else { 0.0 })
    };
    BlDatum::from_parts(3, vec![drop(0), drop(1), drop(2)], &[0.5; 3]).expect("valid shapes")
}

/// `B_1(x, y) = x`, `B_2(x, y) = y`, `B_3(x, y) = x - y`.
pub fn young(p: &[f64]) -> BlDatum {
    rank_one(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, -1.0]], p)
}

/// Three unit vectors in `R^2` at 0, 120 and 240 degrees, exponents 2/3.
pub fn frame_120() -> BlDatum {
    let vs: Vec<Vec<f64>> = (0..3)
        .map(|k| {
            let a = 2.0 * std::f64::consts::PI * k as f64 / 3.0;
            vec![a.cos(), a.sin()]
        })
        .collect();
    rank_one(&vs, &[2.0 / 3.0; 3])
}

/// Maps `x -> <v_j, x>`.
pub fn rank_one(vectors: &[Vec<f64>], p: &[f64]) -> BlDatum {
    let n = vectors.first().map_or(0, Vec::len);
    let maps = vectors.iter().map(|v| Mat::from_row_slice(1, n, v)).collect();
    BlDatum::from_parts(n, maps, p).expect("valid shapes")
}
