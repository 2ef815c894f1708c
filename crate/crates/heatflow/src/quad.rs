use crate::grid::trapezoid_weights;
use gauss_quad::GaussLegendre;
use rayon::prelude::*;
use std::num::NonZeroUsize;

/// Gauss–Legendre nodes per panel.
pub const GL_NODES: usize = 16;

pub(crate) fn rule() -> GaussLegendre {
    GaussLegendre::new(NonZeroUsize::new(GL_NODES).expect("nonzero"))
}

/// Composite Gauss–Legendre over `[lo, hi]`, split at every breakpoint
/// inside the interval and into panels no wider than `max_panel`.
pub(crate) fn composite(
    rule: &GaussLegendre,
    lo: f64,
    hi: f64,
    breakpoints: &[f64],
    max_panel: f64,
    f: &(dyn Fn(f64) -> f64 + Sync),
) -> f64 {
    let mut cuts: Vec<f64> = breakpoints.iter().copied().filter(|&b| b > lo && b < hi).collect();
    cuts.push(lo);
    cuts.push(hi);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    cuts.windows(2)
        .map(|w| {
            let panels = ((w[1] - w[0]) / max_panel).ceil().max(1.0) as usize;
            let h = (w[1] - w[0]) / panels as f64;
            (0..panels)
                .map(|k| {
                    let a = w[0] + k as f64 * h;
                    rule.integrate(a, a + h, f)
                })
                .sum::<f64>()
        })
        .sum()
}

/// Trapezoid rule on the cube `[-r, r]^d` (`d <= 3`) with `n` points per
/// axis, parallel over the first axis.
pub(crate) fn trapezoid_cube(d: usize, n: usize, r: f64, f: &(dyn Fn(&[f64]) -> f64 + Sync)) -> f64 {
    let h = 2.0 * r / (n - 1) as f64;
    let w = trapezoid_weights(n, h);
    let coord = |i: usize| -r + i as f64 * h;
    let rows: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut x = [coord(i), 0.0, 0.0];
            match d {
                1 => w[i] * f(&x[..1]),
                2 => (0..n)
                    .map(|j| {
                        x[1] = coord(j);
                        w[i] * w[j] * f(&x[..2])
                    })
                    .sum(),
                _ => (0..n)
                    .map(|j| {
                        x[1] = coord(j);
                        (0..n)
                            .map(|k| {
                                x[2] = coord(k);
                                w[i] * w[j] * w[k] * f(&x[..3])
                            })
                            .sum::<f64>()
                    })
                    .sum(),
            }
        })
        .collect();
    rows.iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn composite_handles_kinks() {
        let f = |x: f64| (-(x - 0.3).abs()).exp();
        let r = rule();
        let exact = 2.0 - (-40.3f64).exp() - (-39.7f64).exp();
        let q = composite(&r, -40.0, 40.0, &[0.3], 1.0, &f);
        assert!((q - exact).abs() < 1e-13);
    }

    #[test]
    fn trapezoid_integrates_gaussians() {
        let q = trapezoid_cube(2, 101, 8.0, &|x| {
            (-std::f64::consts::PI * (x[0] * x[0] + x[1] * x[1])).exp()
        });
        assert!((q - 1.0).abs() < 1e-12);
    }
}
