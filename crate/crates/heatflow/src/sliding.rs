//! Sliding gaussians and sliding log-concave kernels.

use crate::kernel::{KernelSpec, PointMassList};
use crate::quad::{composite, rule, trapezoid_cube};
use crate::trace::{check_times, richardson, MonotonicityTrace};
use bl_core::linalg::{self, Mat};
use bl_core::{BlDatum, Error, GaussianInput, Result, Tolerances};
use rayon::prelude::*;
use std::f64::consts::PI;

/// Trapezoid points per axis for the two-dimensional quadratures; the
/// error estimate uses half as many intervals.
pub const PLANE_POINTS: usize = 401;
/// Allowed excess in `B_jᵀ A_j B_j <= Σ p_i B_iᵀ A_i B_i`.
pub const HYPOTHESIS_TOL: f64 = 1e-10;

/// Samples `∫_H Π_j (Σ_v w_v exp(-π⟨A_j(B_j y - v s), B_j y - v s⟩))^{p_j} dy`
/// at each `s`, for `dim H <= 2`.
pub fn sliding_gaussian_trace(
    datum: &BlDatum,
    a: &GaussianInput,
    masses: &[PointMassList],
    s_values: &[f64],
) -> Result<MonotonicityTrace> {
    let n = datum.dim();
    if n == 0 || n > 2 {
        return Err(Error::Unsupported(format!("domain dimension {n} (supported: 1 or 2)")));
    }
    a.check_against(datum)?;
    if masses.len() != datum.m() {
        return Err(Error::Dimension(format!(
            "{} measures for {} maps",
            masses.len(),
            datum.m()
        )));
    }
    check_times(s_values, true)?;
    let tol = Tolerances::default();
    let report = bl_core::model::validate_datum(datum, &tol);
    if let Some(j) = report.surjective.iter().position(|s| !s) {
        return Err(Error::Precondition(format!("map {} is not surjective", j + 1)));
    }
    let m = bl_core::solver::build_m(datum, a);
    for (j, (map, aj)) in datum.maps().iter().zip(a.matrices()).enumerate() {
        let gap = &map.matrix.transpose() * aj * &map.matrix - &m;
        let top = linalg::sym_eig(&linalg::symmetrize(&gap))
            .values
            .last()
            .copied()
            .unwrap_or(0.0);
        if top > HYPOTHESIS_TOL * (1.0 + m.norm()) {
            return Err(Error::Precondition(format!(
                "B_{0}ᵀ A_{0} B_{0} exceeds Σ p_i B_iᵀ A_i B_i (largest eigenvalue of the difference {top:.3e})",
                j + 1
            )));
        }
        if masses[j].dim() != map.matrix.nrows() {
            return Err(Error::Dimension(format!(
                "measure {} lives in the wrong dimension",
                j + 1
            )));
        }
    }
    let lmin = linalg::sym_eig(&m).values[0];
    if lmin <= 0.0 {
        return Err(Error::Precondition(
            "Σ p_j B_jᵀ A_j B_j is not positive definite".into(),
        ));
    }
    let s_max = s_values.last().copied().unwrap_or(0.0);
    let shift: f64 = datum
        .maps()
        .iter()
        .zip(masses)
        .map(|(map, mu)| {
            let pinv = linalg::pseudo_inverse(&map.matrix, 1e-12);
            mu.points().iter().map(|v| (&pinv * v).norm()).fold(0.0, f64::max)
        })
        .sum();
    let r = s_max * shift + (45.0 / (PI * lmin)).sqrt();
    let maps: Vec<(Mat, Mat, f64, &PointMassList)> = datum
        .maps()
        .iter()
        .zip(a.matrices())
        .zip(masses)
        .filter(|((map, _), _)| map.exponent > 0.0)
        .map(|((map, aj), mu)| (map.matrix.clone(), aj.clone(), map.exponent, mu))
        .collect();
    let samples: Vec<(f64, f64)> = s_values
        .par_iter()
        .map(|&s| {
            let integrand = |y: &[f64]| {
                let yv = nalgebra::DVector::from_column_slice(y);
                let mut log_sum = 0.0;
                for (b, aj, p, mu) in &maps {
                    let z = b * &yv;
                    let mut sum = 0.0;
                    for (v, w) in mu.points().iter().zip(mu.weights()) {
                        let d = &z - v * s;
                        sum += w * (-PI * d.dot(&(aj * &d))).exp();
                    }
                    if sum <= 0.0 {
                        return 0.0;
                    }
                    log_sum += p * sum.ln();
                }
                log_sum.exp()
            };
            let (fine_pts, coarse_pts) = if n == 1 {
                (4001, 2001)
            } else {
                (PLANE_POINTS, PLANE_POINTS / 2 + 1)
            };
            let fine = trapezoid_cube(n, fine_pts, r, &integrand);
            let coarse = trapezoid_cube(n, coarse_pts, r, &integrand);
            (fine, richardson(fine, coarse))
        })
        .collect();
    MonotonicityTrace::new(
        "sliding gaussians",
        s_values.to_vec(),
        samples.iter().map(|x| x.0).collect(),
        samples.iter().map(|x| x.1).collect(),
    )
}

fn check_kernel(kernel: &KernelSpec, mass: &PointMassList) -> Result<usize> {
    let d = mass.dim();
    if d == 0 || d > 2 {
        return Err(Error::Unsupported(format!("ambient dimension {d} (supported: 1 or 2)")));
    }
    if let Some(k) = kernel.fixed_dim() {
        if k != d {
            return Err(Error::Dimension(format!(
                "kernel lives in dimension {k}, masses in {d}"
            )));
        }
    }
    if !kernel.log_concave {
        return Err(Error::Precondition("kernel is not log-concave".into()));
    }
    Ok(d)
}

/// `u(t, x) = Σ_v w_v ψ(x - v t)`.
fn superposition(kernel: &KernelSpec, mass: &PointMassList, t: f64, x: &[f64]) -> f64 {
    let mut y = [0.0; 2];
    mass.points()
        .iter()
        .zip(mass.weights())
        .map(|(v, w)| {
            for (k, yk) in y.iter_mut().enumerate().take(x.len()) {
                *yk = x[k] - v[k] * t;
            }
            w * kernel.eval(&y[..x.len()])
        })
        .sum()
}

/// Samples `Q(t) = ∫ (Σ_v w_v ψ(x - v t))^p dx` for `p >= 1`.
///
/// In one dimension the integral is split at every translated kink of `ψ`
/// and evaluated by composite Gauss–Legendre; the error bound compares
/// panels of width `ℓ/2` and `ℓ` for the kernel length scale `ℓ`. In two
/// dimensions the trapezoid rule is used.
pub fn log_concave_trace(
    kernel: &KernelSpec,
    mass: &PointMassList,
    p: f64,
    times: &[f64],
) -> Result<MonotonicityTrace> {
    if p.is_nan() || p < 1.0 || p.is_infinite() {
        return Err(Error::Unsupported(format!(
            "p = {p}: below 1 the monotonicity reverses and is not asserted here"
        )));
    }
    let d = check_kernel(kernel, mass)?;
    check_times(times, true)?;
    let (tail_lo, tail_hi) = kernel.tail_length();
    let scale = kernel.scale();
    let samples: Vec<(f64, f64)> = times
        .par_iter()
        .map(|&t| {
            let reach = mass.radius() * t;
            let f = |x: &[f64]| superposition(kernel, mass, t, x).powf(p);
            if d == 1 {
                let gl = rule();
                let mut kinks = Vec::new();
                for v in mass.points() {
                    for k in kernel.kinks() {
                        kinks.push(k + v[0] * t);
                    }
                }
                let g = |x: f64| f(&[x]);
                let (lo, hi) = (tail_lo - reach, tail_hi + reach);
                let fine = composite(&gl, lo, hi, &kinks, scale / 2.0, &g);
                let coarse = composite(&gl, lo, hi, &kinks, scale, &g);
                (fine, richardson(fine, coarse))
            } else {
                let r = tail_hi.max(-tail_lo) + reach;
                let fine = trapezoid_cube(2, PLANE_POINTS, r, &f);
                let coarse = trapezoid_cube(2, PLANE_POINTS / 2 + 1, r, &f);
                (fine, richardson(fine, coarse))
            }
        })
        .collect();
    MonotonicityTrace::new(
        format!("log-concave sliding kernel, p = {p}"),
        times.to_vec(),
        samples.iter().map(|x| x.0).collect(),
        samples.iter().map(|x| x.1).collect(),
    )
}

/// Centred differences of the centre-of-mass field
/// `ȳ(x) = Σ w_v v ψ(x - v) / Σ w_v ψ(x - v)` on a uniform 1D grid.
pub fn center_of_mass_divergence(kernel: &KernelSpec, mass: &PointMassList, grid: &[f64]) -> Result<Vec<f64>> {
    if check_kernel(kernel, mass)? != 1 {
        return Err(Error::Unsupported("the divergence check is one-dimensional".into()));
    }
    if grid.len() < 3 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("grid must be increasing with at least 3 points".into()));
    }
    let ybar = |x: f64| {
        // Shift logs by their maximum so distant points do not underflow.
        let logs: Vec<f64> = mass
            .points()
            .iter()
            .zip(mass.weights())
            .map(|(v, w)| w.ln() + kernel.eval(&[x - v[0]]).ln())
            .collect();
        let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut num = 0.0;
        let mut den = 0.0;
        for (l, v) in logs.iter().zip(mass.points()) {
            let e = (l - top).exp();
            num += e * v[0];
            den += e;
        }
        num / den
    };
    let values: Vec<f64> = grid.iter().map(|&x| ybar(x)).collect();
    Ok((1..grid.len() - 1)
        .map(|i| (values[i + 1] - values[i - 1]) / (grid[i + 1] - grid[i - 1]))
        .collect())
}
