//! Growth of the heat extension of a discrete measure on the line.

use crate::kernel::PointMassList;
use crate::quad::{composite, rule};
use crate::trace::{check_times, richardson, MonotonicityTrace};
use bl_core::{Error, Result};
use rayon::prelude::*;
use std::f64::consts::PI;

/// `t^{1/(2p')} ‖u(t)‖_p` for `u(t,x) = (4πt)^{-1/2} Σ w_v exp(-(x-v)²/4t)`.
pub fn heat_extension_norm_trace(mass: &PointMassList, p: f64, times: &[f64]) -> Result<MonotonicityTrace> {
    if p.is_nan() || p < 1.0 || p.is_infinite() {
        return Err(Error::Unsupported(format!("p = {p} (requires p >= 1)")));
    }
    if mass.dim() != 1 {
        return Err(Error::Dimension("heat extensions are taken on the line".into()));
    }
    check_times(times, false)?;
    let xs: Vec<f64> = mass.points().iter().map(|v| v[0]).collect();
    let lo_v = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi_v = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // 1/(2p') with 1/p + 1/p' = 1.
    let power = (p - 1.0) / (2.0 * p);
    let samples: Vec<(f64, f64)> = times
        .par_iter()
        .map(|&t| {
            let width = (2.0 * t).sqrt();
            let norm = (4.0 * PI * t).sqrt();
            let u = |x: f64| {
                xs.iter()
                    .zip(mass.weights())
                    .map(|(v, w)| w * (-(x - v) * (x - v) / (4.0 * t)).exp())
                    .sum::<f64>()
                    / norm
            };
            let g = |x: f64| u(x).powf(p);
            // e^{-x²/2σ²} < e^-40 beyond 9 widths.
            let (lo, hi) = (lo_v - 9.0 * width, hi_v + 9.0 * width);
            let gl = rule();
            let fine = composite(&gl, lo, hi, &xs, width / 2.0, &g);
            let coarse = composite(&gl, lo, hi, &xs, width, &g);
            let scale = t.powf(power);
            let value = scale * fine.powf(1.0 / p);
            let coarse_value = scale * coarse.powf(1.0 / p);
            (value, richardson(value, coarse_value))
        })
        .collect();
    MonotonicityTrace::new(
        format!("heat extension norm, p = {p}"),
        times.to_vec(),
        samples.iter().map(|x| x.0).collect(),
        samples.iter().map(|x| x.1).collect(),
    )
}

/// The constant value for a unit point mass: `(4π)^{-1/(2p')} p^{-1/(2p)}`.
pub fn point_mass_constant(p: f64) -> f64 {
    (4.0 * PI).powf(-(p - 1.0) / (2.0 * p)) * p.powf(-1.0 / (2.0 * p))
}
