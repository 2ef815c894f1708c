//! Sliding kernels and discrete measures.

use bl_core::linalg::Mat;
use bl_core::{Error, Result};
use nalgebra::DVector;

/// Finite positive combination of point masses.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMassList {
    points: Vec<DVector<f64>>,
    weights: Vec<f64>,
}

impl PointMassList {
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Domain("at least one point mass is required".into()));
        }
        if points.len() != weights.len() {
            return Err(Error::Dimension("one weight per point is required".into()));
        }
        let d = points[0].len();
        if points.iter().any(|p| p.len() != d) {
            return Err(Error::Dimension("points differ in dimension".into()));
        }
        if points.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Domain("point coordinates must be finite".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::Domain("weights must be finite and positive".into()));
        }
        Ok(PointMassList {
            points: points.into_iter().map(DVector::from_vec).collect(),
            weights,
        })
    }

    /// Unit mass at `point`.
    pub fn single(point: Vec<f64>) -> Self {
        Self::new(vec![point], vec![1.0]).expect("a single finite point is valid")
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[DVector<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn radius(&self) -> f64 {
        self.points.iter().map(|p| p.norm()).fold(0.0, f64::max)
    }

    /// Whether the measure is supported on a single point.
    pub fn is_point_mass(&self) -> bool {
        self.points.iter().all(|p| (p - &self.points[0]).norm() == 0.0)
    }
}

/// A one-dimensional kernel given by samples of `ψ`, with `log ψ`
/// interpolated linearly between nodes and extended linearly beyond them.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedKernel {
    xs: Vec<f64>,
    log_values: Vec<f64>,
}

impl TabulatedKernel {
    pub fn nodes(&self) -> &[f64] {
        &self.xs
    }

    fn slope(&self, k: usize) -> f64 {
        (self.log_values[k + 1] - self.log_values[k]) / (self.xs[k + 1] - self.xs[k])
    }

    pub fn log_eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        let k = match self.xs.partition_point(|&t| t <= x) {
            0 => 0,
            i if i >= n => n - 2,
            i => i - 1,
        };
        self.log_values[k] + self.slope(k) * (x - self.xs[k])
    }

    /// Decay rates of the two exponential tails.
    pub fn tail_rates(&self) -> (f64, f64) {
        let n = self.xs.len();
        (self.slope(0), -self.slope(n - 2))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelKind {
    /// `exp(-π ⟨A x, x⟩)`.
    Gaussian(Mat),
    /// `exp(-rate |x|)`.
    Exponential {
        rate: f64,
    },
    UserTabulated(TabulatedKernel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub log_concave: bool,
}

impl KernelSpec {
    pub fn gaussian(a: Mat) -> Result<Self> {
        if a.nrows() != a.ncols() || a.nrows() == 0 || a.nrows() > 2 {
            return Err(Error::Dimension("gaussian kernels need a 1x1 or 2x2 matrix".into()));
        }
        if (&a - a.transpose()).amax() > 1e-12 || bl_core::linalg::sym_eig(&a).values[0] <= 0.0 {
            return Err(Error::Domain(
                "gaussian kernel matrix must be symmetric positive definite".into(),
            ));
        }
        Ok(KernelSpec {
            kind: KernelKind::Gaussian(a),
            log_concave: true,
        })
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::Domain("decay rate must be positive".into()));
        }
        Ok(KernelSpec {
            kind: KernelKind::Exponential { rate },
            log_concave: true,
        })
    }

    /// Validates log-concavity through second differences of `log ψ`
    /// (at most 1e-8) and decay at both ends.
    pub fn tabulated(xs: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if xs.len() < 3 || xs.len() != values.len() {
            return Err(Error::Dimension(
                "a tabulated kernel needs at least 3 matching samples".into(),
            ));
        }
        if xs
            .windows(2)
            .any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater))
            || xs.iter().any(|x| !x.is_finite())
        {
            return Err(Error::Domain(
                "kernel nodes must be finite and strictly increasing".into(),
            ));
        }
        if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Domain("kernel samples must be finite and positive".into()));
        }
        let t = TabulatedKernel {
            xs,
            log_values: values.iter().map(|v| v.ln()).collect(),
        };
        for k in 0..t.xs.len() - 2 {
            if t.slope(k + 1) - t.slope(k) > 1e-8 {
                return Err(Error::Precondition(format!(
                    "kernel is not log-concave near node {}",
                    k + 1
                )));
            }
        }
        let (left, right) = t.tail_rates();
        if left <= 0.0 || right <= 0.0 {
            return Err(Error::Precondition(
                "kernel must decay at both ends of the table".into(),
            ));
        }
        Ok(KernelSpec {
            kind: KernelKind::UserTabulated(t),
            log_concave: true,
        })
    }

    /// Ambient dimension, if fixed by the kernel.
    pub fn fixed_dim(&self) -> Option<usize> {
        match &self.kind {
            KernelKind::Gaussian(a) => Some(a.nrows()),
            KernelKind::Exponential { .. } => None,
            KernelKind::UserTabulated(_) => Some(1),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match &self.kind {
            KernelKind::Gaussian(a) => {
                let mut q = 0.0;
                for r in 0..x.len() {
                    for c in 0..x.len() {
                        q += a[(r, c)] * x[r] * x[c];
                    }
                }
                (-std::f64::consts::PI * q).exp()
            }
            KernelKind::Exponential { rate } => (-rate * x.iter().map(|v| v * v).sum::<f64>().sqrt()).exp(),
            KernelKind::UserTabulated(t) => t.log_eval(x[0]).exp(),
        }
    }

    /// Length beyond which the kernel (raised to any power `>= 1`) is below
    /// `e^-40` relative to its peak, measured from the kernel's support centre.
    pub(crate) fn tail_length(&self) -> (f64, f64) {
        match &self.kind {
            KernelKind::Gaussian(a) => {
                let lmin = bl_core::linalg::sym_eig(a).values[0];
                let l = (40.0 / (std::f64::consts::PI * lmin)).sqrt();
                (-l, l)
            }
            KernelKind::Exponential { rate } => (-40.0 / rate, 40.0 / rate),
            KernelKind::UserTabulated(t) => {
                let (left, right) = t.tail_rates();
                let peak = t.log_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lo = t.xs[0] - (40.0 + peak - t.log_values[0]).max(0.0) / left;
                let hi = t.xs[t.xs.len() - 1] + (40.0 + peak - t.log_values[t.xs.len() - 1]).max(0.0) / right;
                (lo, hi)
            }
        }
    }

    /// Length scale on which the kernel varies.
    pub(crate) fn scale(&self) -> f64 {
        match &self.kind {
            KernelKind::Gaussian(a) => {
                let lmax = bl_core::linalg::sym_eig(a).values.last().copied().unwrap_or(1.0);
                1.0 / (std::f64::consts::PI * lmax).sqrt()
            }
            KernelKind::Exponential { rate } => 1.0 / rate,
            KernelKind::UserTabulated(t) => {
                let (l, r) = t.tail_rates();
                let gaps = t.xs.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
                (1.0 / l.max(r)).min(gaps.max(1e-6) * 4.0)
            }
        }
    }

    /// Points where the kernel is not smooth (1D only).
    pub(crate) fn kinks(&self) -> Vec<f64> {
        match &self.kind {
            KernelKind::Gaussian(_) => vec![],
            KernelKind::Exponential { .. } => vec![0.0],
            KernelKind::UserTabulated(t) => t.xs.clone(),
        }
    }
}
