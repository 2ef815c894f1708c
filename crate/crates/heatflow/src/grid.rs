//! Tabulated fields on centred tensor grids.

use bl_core::{Error, Result};

/// Largest number of axes.
pub const MAX_AXES: usize = 3;
/// Largest number of points per axis.
pub const MAX_POINTS: usize = 512;

/// Nonnegative samples on the grid `[-R, R]^d` with `dims[a]` equally spaced
/// points on axis `a`, stored row-major (last axis fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    dims: Vec<usize>,
    half_width: f64,
    values: Vec<f64>,
}

impl GridField {
    pub fn new(dims: Vec<usize>, half_width: f64, values: Vec<f64>) -> Result<Self> {
        if dims.is_empty() || dims.len() > MAX_AXES {
            return Err(Error::Dimension(format!("grids have 1 to {MAX_AXES} axes")));
        }
        if dims.iter().any(|&n| !(2..=MAX_POINTS).contains(&n)) {
            return Err(Error::Dimension(format!("each axis needs 2 to {MAX_POINTS} points")));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::Domain("half-width must be positive".into()));
        }
        if values.len() != dims.iter().product::<usize>() {
            return Err(Error::Dimension("value count does not match the grid shape".into()));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Domain("grid values must be finite and nonnegative".into()));
        }
        let field = GridField {
            dims,
            half_width,
            values,
        };
        if field.mass() <= 0.0 {
            return Err(Error::Domain("grid field has zero mass".into()));
        }
        Ok(field)
    }

    /// Samples `f` at every grid point.
    pub fn sample(dims: Vec<usize>, half_width: f64, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let total: usize = dims.iter().product();
        let h: Vec<f64> = dims.iter().map(|&n| 2.0 * half_width / (n.max(2) - 1) as f64).collect();
        let mut x = vec![0.0; dims.len()];
        let values = (0..total)
            .map(|flat| {
                let mut rest = flat;
                for a in (0..dims.len()).rev() {
                    x[a] = -half_width + (rest % dims[a]) as f64 * h[a];
                    rest /= dims[a];
                }
                f(&x)
            })
            .collect();
        Self::new(dims, half_width, values)
    }

    /// Sum of normalized gaussian bumps sampled on a cube grid.
    pub fn from_bumps(ndim: usize, points: usize, half_width: f64, bumps: &[Bump]) -> Result<Self> {
        if bumps.is_empty() {
            return Err(Error::Domain("at least one bump is required".into()));
        }
        for b in bumps {
            b.check(ndim)?;
        }
        Self::sample(vec![points; ndim], half_width, |x| {
            bumps.iter().map(|b| b.eval(x)).sum()
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        2.0 * self.half_width / (self.dims[axis] - 1) as f64
    }

    pub fn coordinate(&self, axis: usize, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing(axis)
    }

    /// Trapezoid-rule integral.
    pub fn mass(&self) -> f64 {
        let w: Vec<Vec<f64>> = (0..self.ndim())
            .map(|a| trapezoid_weights(self.dims[a], self.spacing(a)))
            .collect();
        let mut total = 0.0;
        for (flat, v) in self.values.iter().enumerate() {
            let mut rest = flat;
            let mut weight = 1.0;
            for a in (0..self.ndim()).rev() {
                weight *= w[a][rest % self.dims[a]];
                rest /= self.dims[a];
            }
            total += weight * v;
        }
        total
    }

    /// Rescaled to unit mass.
    pub fn normalized(&self) -> Self {
        let m = self.mass();
        GridField {
            dims: self.dims.clone(),
            half_width: self.half_width,
            values: self.values.iter().map(|v| v / m).collect(),
        }
    }
}

/// `weight · N(center, width² I)` density.
#[derive(Debug, Clone, PartialEq)]
pub struct Bump {
    pub center: Vec<f64>,
    pub width: f64,
    pub weight: f64,
}

impl Bump {
    fn check(&self, ndim: usize) -> Result<()> {
        if self.center.len() != ndim {
            return Err(Error::Dimension(format!(
                "bump centre has {} coordinates, grid has {ndim} axes",
                self.center.len()
            )));
        }
        if !(self.width > 0.0 && self.weight > 0.0 && self.width.is_finite() && self.weight.is_finite()) {
            return Err(Error::Domain("bump width and weight must be positive".into()));
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let d = self.center.len() as i32;
        let r2: f64 = x.iter().zip(&self.center).map(|(a, b)| (a - b) * (a - b)).sum();
        let norm = (2.0 * std::f64::consts::PI * self.width * self.width).powi(d).sqrt();
        self.weight * (-r2 / (2.0 * self.width * self.width)).exp() / norm
    }
}

pub(crate) fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n];
    if n > 1 {
        w[0] = 0.5 * h;
        w[n - 1] = 0.5 * h;
    }
    w
}

/// Values on a uniform tensor grid, interpolated by 4-point Lagrange
/// stencils along each axis.
#[derive(Debug, Clone)]
pub(crate) struct TensorGrid {
    pub dims: Vec<usize>,
    pub origin: Vec<f64>,
    pub spacing: Vec<f64>,
    pub values: Vec<f64>,
}

impl TensorGrid {
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        let k = self.dims.len();
        let mut base = [0usize; MAX_AXES];
        let mut weights = [[0.0f64; 4]; MAX_AXES];
        for a in 0..k {
            let n = self.dims[a];
            let s = (x[a] - self.origin[a]) / self.spacing[a];
            let i0 = (s.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
            let u = s - i0 as f64;
            // Lagrange basis on nodes 0, 1, 2, 3.
            weights[a] = [
                -(u - 1.0) * (u - 2.0) * (u - 3.0) / 6.0,
                u * (u - 2.0) * (u - 3.0) / 2.0,
                -u * (u - 1.0) * (u - 3.0) / 2.0,
                u * (u - 1.0) * (u - 2.0) / 6.0,
            ];
            base[a] = i0;
        }
        let mut total = 0.0;
        let combos = 4usize.pow(k as u32);
        for c in 0..combos {
            let mut rest = c;
            let mut flat = 0usize;
            let mut w = 1.0;
            for a in 0..k {
                let o = rest % 4;
                rest /= 4;
                w *= weights[a][o];
                flat = flat * self.dims[a] + base[a] + o;
            }
            total += w * self.values[flat];
        }
        total
    }

    /// Trapezoid-rule integral.
    pub fn mass(&self) -> f64 {
        let w: Vec<Vec<f64>> = (0..self.dims.len())
            .map(|a| trapezoid_weights(self.dims[a], self.spacing[a]))
            .collect();
        self.values
            .iter()
            .enumerate()
            .map(|(flat, v)| {
                let mut rest = flat;
                let mut weight = 1.0;
                for a in (0..self.dims.len()).rev() {
                    weight *= w[a][rest % self.dims[a]];
                    rest /= self.dims[a];
                }
                weight * v
            })
            .sum()
    }
}

/// Contracts axis `axis` of a row-major tensor with `mat` (`out × in`).
pub(crate) fn apply_axis(data: &[f64], dims: &[usize], axis: usize, mat: &[Vec<f64>]) -> (Vec<f64>, Vec<usize>) {
    let n_in = dims[axis];
    let n_out = mat.len();
    let outer: usize = dims[..axis].iter().product();
    let inner: usize = dims[axis + 1..].iter().product();
    let mut out = vec![0.0; outer * n_out * inner];
    for o in 0..outer {
        for (i, row) in mat.iter().enumerate() {
            let dst = (o * n_out + i) * inner;
            for (k, &c) in row.iter().enumerate().take(n_in) {
                if c == 0.0 {
                    continue;
                }
                let src = (o * n_in + k) * inner;
                for r in 0..inner {
                    out[dst + r] += c * data[src + r];
                }
            }
        }
    }
    let mut new_dims = dims.to_vec();
    new_dims[axis] = n_out;
    (out, new_dims)
}
