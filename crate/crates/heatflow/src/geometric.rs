//! Heat flow of the inputs of a geometric datum.
//!
//! Each input is evolved on its own target by the heat kernel
//! `(4πt)^{-k/2} exp(-|z|²/4t)` (a discrete convolution over the input grid,
//! tabulated on an evaluation grid), and
//! `Q(t) = ∫_H Π_j u_j(t, B_j x)^{p_j} dx` is integrated by the trapezoid
//! rule on a cube large enough that the integrand is negligible outside it.

use crate::grid::{apply_axis, trapezoid_weights, GridField, TensorGrid};
use crate::quad::trapezoid_cube;
use crate::trace::{check_times, richardson, MonotonicityTrace};
use bl_core::linalg::{self, Mat};
use bl_core::{BlDatum, Error, Result};
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatOptions {
    /// Domain quadrature points per axis; `None` picks 2049, 256 or 64 for
    /// one, two or three dimensions.
    pub domain_points: Option<usize>,
    /// Evaluation-grid spacing relative to the kernel width `sqrt(2t)`.
    pub spacing_per_width: f64,
}

impl Default for HeatOptions {
    fn default() -> Self {
        HeatOptions {
            domain_points: None,
            spacing_per_width: 1.0 / 16.0,
        }
    }
}

impl HeatOptions {
    pub fn points_for(&self, dim: usize) -> usize {
        self.domain_points.unwrap_or(match dim {
            1 => 2049,
            2 => 256,
            _ => 64,
        })
    }
}

/// Tolerance for recognising geometric data.
const GEOMETRIC_TOL: f64 = 1e-8;
/// Cap on evaluation-grid points per axis by target dimension.
const EVAL_CAP: [usize; 4] = [1, 8192, 1024, 160];

struct Evolved {
    grid: TensorGrid,
    mass: f64,
}

/// Heat evolution of `f` at time `t`, tabulated on `[-r, r]^k` with spacing
/// close to `h`.
fn evolve(f: &GridField, t: f64, r: f64, h: f64) -> Evolved {
    let k = f.ndim();
    let n = ((2.0 * r / h).ceil() as usize + 1).clamp(4, EVAL_CAP[k]);
    let h = 2.0 * r / (n - 1) as f64;
    let norm = (4.0 * std::f64::consts::PI * t).sqrt();
    let mut data = f.values().to_vec();
    let mut dims = f.dims().to_vec();
    for axis in 0..k {
        let w = trapezoid_weights(f.dims()[axis], f.spacing(axis));
        let mat: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let z = -r + i as f64 * h;
                (0..f.dims()[axis])
                    .map(|q| {
                        let d = z - f.coordinate(axis, q);
                        w[q] * (-d * d / (4.0 * t)).exp() / norm
                    })
                    .collect()
            })
            .collect();
        (data, dims) = apply_axis(&data, &dims, axis, &mat);
    }
    let grid = TensorGrid {
        dims,
        origin: vec![-r; k],
        spacing: vec![h; k],
        values: data,
    };
    Evolved {
        mass: grid.mass(),
        grid,
    }
}

/// `Q(t)` on a domain grid of `points` per axis, with evaluation spacing
/// scaled by `coarsen`. Returns `(Q, largest relative mass drift)`.
#[allow(clippy::too_many_arguments)]
fn q_at(
    maps: &[(Mat, f64, &GridField, f64)],
    n: usize,
    t: f64,
    domain_r: f64,
    points: usize,
    coarsen: f64,
    opts: &HeatOptions,
) -> (f64, f64) {
    let width = (2.0 * t).sqrt();
    let mut drift: f64 = 0.0;
    let evolved: Vec<Evolved> = maps
        .iter()
        .map(|(b, _, f, mass)| {
            let h_in = (0..f.ndim()).map(|a| f.spacing(a)).fold(f64::INFINITY, f64::min);
            let h = coarsen * h_in.max(width * opts.spacing_per_width);
            let reach = linalg::spectral_norm(b) * (n as f64).sqrt() * domain_r + 4.0 * h;
            let e = evolve(f, t, reach, h);
            drift = drift.max((e.mass - mass).abs() / mass);
            e
        })
        .collect();
    let integrand = |x: &[f64]| {
        let mut log_sum = 0.0;
        let mut z = [0.0; 3];
        for ((b, p, _, _), e) in maps.iter().zip(&evolved) {
            for (r, zr) in z.iter_mut().enumerate().take(b.nrows()) {
                *zr = (0..n).map(|c| b[(r, c)] * x[c]).sum();
            }
            let u = e.grid.interpolate(&z[..b.nrows()]);
            if u <= 0.0 {
                return 0.0;
            }
            log_sum += p * u.ln();
        }
        log_sum.exp()
    };
    (trapezoid_cube(n, points, domain_r, &integrand), drift)
}

/// Samples `Q(t)` for a geometric datum with one grid input per map.
///
/// The error bound is `|Q_h - Q_2h| / 3` with every grid (domain and
/// evaluation) coarsened by two. The trace also records the limit
/// `Π (∫ f_j)^{p_j}` and the worst relative mass drift of the evolutions.
pub fn evolve_geometric_heat(
    datum: &BlDatum,
    inputs: &[GridField],
    times: &[f64],
    opts: &HeatOptions,
) -> Result<MonotonicityTrace> {
    if !bl_core::solver::is_geometric(datum, GEOMETRIC_TOL) {
        return Err(Error::Precondition(
            "datum is not geometric; bring it to geometric normal form first".into(),
        ));
    }
    let n = datum.dim();
    if n == 0 || n > 3 {
        return Err(Error::Unsupported(format!("domain dimension {n} (supported: 1 to 3)")));
    }
    if inputs.len() != datum.m() {
        return Err(Error::Dimension(format!(
            "{} inputs for {} maps",
            inputs.len(),
            datum.m()
        )));
    }
    check_times(times, false)?;
    let mut maps = Vec::new();
    for (j, (map, f)) in datum.maps().iter().zip(inputs).enumerate() {
        if map.exponent == 0.0 {
            continue;
        }
        if f.ndim() != map.matrix.nrows() {
            return Err(Error::Dimension(format!(
                "input {} has {} axes but target {} has dimension {}",
                j + 1,
                f.ndim(),
                j + 1,
                map.matrix.nrows()
            )));
        }
        maps.push((map.matrix.clone(), map.exponent, f, f.mass()));
    }
    let limit: f64 = maps.iter().map(|(_, p, _, m)| m.powf(*p)).product();
    let p_min = maps.iter().map(|m| m.1).fold(f64::INFINITY, f64::min);
    let p_sum: f64 = maps.iter().map(|m| m.1).sum();
    let r_in = inputs.iter().map(|f| f.half_width()).fold(0.0, f64::max);
    let points = opts.points_for(n);
    let coarse_points = points / 2;
    let samples: Vec<(f64, f64, f64)> = times
        .par_iter()
        .map(|&t| {
            // Outside this cube some |B_j x| exceeds r_in by enough kernel
            // widths that u_j^{p_j} < e^-40.
            let rho = r_in + (2.0 * t).sqrt() * (80.0 / p_min).sqrt();
            let domain_r = p_sum.sqrt() * rho;
            let (fine, drift) = q_at(&maps, n, t, domain_r, points, 1.0, opts);
            let (coarse, _) = q_at(&maps, n, t, domain_r, coarse_points, 2.0, opts);
            (fine, richardson(fine, coarse), drift)
        })
        .collect();
    let mut trace = MonotonicityTrace::new(
        "geometric heat flow Q(t)",
        times.to_vec(),
        samples.iter().map(|s| s.0).collect(),
        samples.iter().map(|s| s.1).collect(),
    )?;
    trace.limit = Some(limit);
    trace.mass_drift = Some(samples.iter().map(|s| s.2).fold(0.0, f64::max));
    Ok(trace)
}
