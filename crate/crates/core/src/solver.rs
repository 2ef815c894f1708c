//! Gaussian Brascamp–Lieb functional, stationarity residual, and the
//! fixed-point solver for gaussian extremisers.
//!
//! For a gaussian input `A = (A_j)` put `M = Σ p_j B_jᵀ A_j B_j`. Then
//!
//! ```text
//! BL_g(B, p; A) = ( Π det(A_j)^{p_j} / det M )^{1/2}
//! ```
//!
//! and stationary points satisfy `A_j^{-1} = B_j M^{-1} B_jᵀ`. The solver
//! iterates the update `A_j <- (B_j M^{-1} B_jᵀ)^{-1}` with a global rescale
//! enforcing `det M = 1`. Every step also evaluates two accelerated
//! candidates (a geodesic extrapolation of the update and a safeguarded
//! Newton step on `log BL_g` in logarithmic coordinates around the current
//! input) and keeps whichever candidate has the largest value. The value is
//! therefore non-decreasing and the fixed points are those of the plain
//! update.

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::model::{apply_equivalence, BlDatum, EquivalenceTransform, GaussianInput, Tolerances};
use crate::subspace::Subspace;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::{json, Value};

pub const DEFAULT_MAX_ITER: usize = 10_000;

/// Gain (in `log BL_g²`) below which a step counts as no progress.
const GAIN_TOL: f64 = 1e-13;
/// Consecutive no-progress steps with a large residual before giving up.
const STALL_STEPS: usize = 10;
const MAX_EXTRAPOLATION: f64 = 1.125899906842624e15; // 2^50

/// `Σ p_j B_jᵀ A_j B_j`.
pub fn build_m(datum: &BlDatum, a: &GaussianInput) -> Mat {
    let n = datum.dim();
    let mut m = Mat::zeros(n, n);
    for (map, aj) in datum.maps().iter().zip(a.matrices()) {
        if map.exponent == 0.0 || map.matrix.nrows() == 0 {
            continue;
        }
        m += map.matrix.transpose() * aj * &map.matrix * map.exponent;
    }
    linalg::symmetrize(&m)
}

/// Span of the eigenvectors of `m` whose eigenvalues lie below the
/// geometric mean of the spectrum (non-positive eigenvalues are clamped to a
/// tiny positive floor).
pub fn low_eigenspace(m: &Mat) -> Subspace {
    let n = m.nrows();
    let e = linalg::sym_eig(m);
    if n == 0 {
        return Subspace::zero(0);
    }
    let top = e.values[n - 1].abs().max(f64::MIN_POSITIVE);
    let floor = top * 1e-300_f64.max(f64::MIN_POSITIVE / top);
    let logs: Vec<f64> = e.values.iter().map(|&x| x.max(floor).ln()).collect();
    let mean = logs.iter().sum::<f64>() / n as f64;
    let keep: Vec<usize> = (0..n).filter(|&i| logs[i] < mean).collect();
    let mut b = Mat::zeros(n, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        b.set_column(c, &e.vectors.column(i));
    }
    Subspace::from_orthonormal_unchecked(b)
}

fn singular_error(m: &Mat, cond: f64) -> Error {
    Error::Singular {
        reason: format!("M has condition number {cond:.3e}"),
        null_space: Some(low_eigenspace(m)),
    }
}

fn checked_m(datum: &BlDatum, a: &GaussianInput, tol: &Tolerances) -> Result<Mat> {
    a.check_against(datum)?;
    let m = build_m(datum, a);
    let cond = linalg::condition_spd(&m);
    if cond.is_nan() || cond > tol.cond_max {
        return Err(singular_error(&m, cond));
    }
    Ok(m)
}

/// `BL_g(B, p; A)`, evaluated in log space.
pub fn gaussian_functional(datum: &BlDatum, a: &GaussianInput, tol: &Tolerances) -> Result<f64> {
    let m = checked_m(datum, a, tol)?;
    let ld_m = linalg::log_det_spd(&m).ok_or_else(|| singular_error(&m, f64::INFINITY))?;
    let mut s = -ld_m;
    for (map, aj) in datum.maps().iter().zip(a.matrices()) {
        if map.exponent > 0.0 {
            let ld =
                linalg::log_det_spd(aj).ok_or_else(|| Error::Domain("input matrix is not positive definite".into()))?;
            s += map.exponent * ld;
        }
    }
    Ok((0.5 * s).exp())
}

/// `max_j ‖A_j^{-1} - B_j M^{-1} B_jᵀ‖ / ‖A_j^{-1}‖` over maps with `p_j > 0`.
pub fn stationarity_residual(datum: &BlDatum, a: &GaussianInput, tol: &Tolerances) -> Result<f64> {
    let m = checked_m(datum, a, tol)?;
    let m_inv = linalg::spd_inverse(&m).ok_or_else(|| singular_error(&m, f64::INFINITY))?;
    Ok(residual_with(datum, a, &m_inv))
}

fn residual_with(datum: &BlDatum, a: &GaussianInput, m_inv: &Mat) -> f64 {
    let mut worst: f64 = 0.0;
    for (map, aj) in datum.maps().iter().zip(a.matrices()) {
        if map.exponent == 0.0 || map.matrix.nrows() == 0 {
            continue;
        }
        let Some(a_inv) = linalg::spd_inverse(aj) else {
            return f64::INFINITY;
        };
        let r = &a_inv - &map.matrix * m_inv * map.matrix.transpose();
        worst = worst.max(linalg::spectral_norm(&r) / linalg::spectral_norm(&a_inv));
    }
    worst
}

/// True iff `‖B_j B_jᵀ - I‖ <= tol` for all `j` and `‖Σ p_j B_jᵀ B_j - I‖ <= tol`.
pub fn is_geometric(datum: &BlDatum, tol: f64) -> bool {
    let n = datum.dim();
    let mut sum = Mat::zeros(n, n);
    for map in datum.maps() {
        let k = map.matrix.nrows();
        let bbt = &map.matrix * map.matrix.transpose();
        if k > 0 && linalg::spectral_norm(&(bbt - Mat::identity(k, k))) > tol {
            return false;
        }
        sum += map.matrix.transpose() * &map.matrix * map.exponent;
    }
    n == 0 || linalg::spectral_norm(&(sum - Mat::identity(n, n))) <= tol
}

/// Geometric normal form `B'_j = A_j^{1/2} B_j M^{-1/2}` of a datum at a
/// stationary input, with the transform `C = M^{-1/2}`, `C_j = A_j^{-1/2}`.
pub fn normalize_to_geometric(
    datum: &BlDatum,
    a: &GaussianInput,
    tol: &Tolerances,
) -> Result<(BlDatum, EquivalenceTransform)> {
    let residual = stationarity_residual(datum, a, tol)?;
    if residual > tol.stat_tol {
        return Err(Error::NotExtremal {
            residual,
            bound: tol.stat_tol,
        });
    }
    let m = build_m(datum, a);
    let t = EquivalenceTransform {
        c: linalg::inv_sqrt_spd(&m),
        c_list: a.matrices().iter().map(linalg::inv_sqrt_spd).collect(),
    };
    let (geo, _) = apply_equivalence(datum, &t, tol)?;
    Ok((geo, t))
}

/// Random start `Q D Qᵀ` with `Q` Haar-orthogonal and `D` log-uniform in
/// `[0.1, 10]`, reproducible from `seed`.
pub fn random_input(datum: &BlDatum, seed: u64) -> GaussianInput {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = datum
        .target_dims()
        .into_iter()
        .map(|k| {
            if k == 0 {
                return Mat::zeros(0, 0);
            }
            let g = Mat::from_fn(k, k, |_, _| rng.sample::<f64, _>(StandardNormal));
            let q = g.qr().q();
            let d = Mat::from_diagonal(&DVector::from_fn(k, |_, _| {
                (rng.random_range(0.1f64.ln()..10f64.ln())).exp()
            }));
            linalg::symmetrize(&(&q * d * q.transpose()))
        })
        .collect();
    GaussianInput::new_unchecked(a)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    Degenerated,
    BudgetExhausted,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Converged => "Converged",
            SolveStatus::Degenerated => "Degenerated",
            SolveStatus::BudgetExhausted => "BudgetExhausted",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub iter: usize,
    pub value: f64,
    pub residual: f64,
    pub cond: f64,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    /// Present when converged.
    pub extremiser: Option<GaussianInput>,
    pub blg_value: Option<f64>,
    /// Present when degenerated.
    pub degeneration_subspace: Option<Subspace>,
    /// Last iterate, normalized to `det M = 1`.
    pub final_input: GaussianInput,
    pub residual: f64,
    pub iterations: usize,
    /// The value stopped improving while the residual stayed above tolerance.
    pub stalled: bool,
    pub trace: Vec<TraceEntry>,
}

impl SolveOutcome {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }

    pub fn to_json(&self) -> Value {
        json!({
            "status": self.status.as_str(),
            "blg_value": self.blg_value,
            "extremiser": self.extremiser.as_ref().map(GaussianInput::to_json),
            "degeneration_subspace": self.degeneration_subspace.as_ref().map(|s| linalg::to_rows(&s.basis().transpose())),
            "residual": finite_or_null(self.residual),
            "iterations": self.iterations,
            "stalled": self.stalled,
            "trace": self.trace.iter().map(|t| json!([t.iter, finite_or_null(t.value), finite_or_null(t.residual), finite_or_null(t.cond)])).collect::<Vec<_>>(),
        })
    }
}

fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

/// A point of the iteration: input rescaled to `det M = 1` and `log BL_g²`.
struct Point {
    a: GaussianInput,
    m: Mat,
    log_value: f64,
}

/// Rescales `a` to `det M = 1` and evaluates `log BL_g²` directly.
fn evaluate(datum: &BlDatum, a: GaussianInput) -> Option<Point> {
    if !a.matrices().iter().all(linalg::is_finite) {
        return None;
    }
    let n = datum.dim();
    let m = build_m(datum, &a);
    let ld_m = linalg::log_det_spd(&m)?;
    let s = if n > 0 { (-ld_m / n as f64).exp() } else { 1.0 };
    if !(s.is_finite() && s > 0.0) {
        return None;
    }
    let a = a.scaled(s);
    let m = m * s;
    let mut v = 0.0;
    for (map, aj) in datum.maps().iter().zip(a.matrices()) {
        if map.matrix.nrows() > 0 {
            v += map.exponent * linalg::log_det_spd(aj)?;
        }
    }
    let v = v - linalg::log_det_spd(&m)?;
    v.is_finite().then_some(Point { a, m, log_value: v })
}

/// The plain update `A_j <- (B_j M^{-1} B_jᵀ)^{-1}`.
fn plain_step(datum: &BlDatum, m_inv: &Mat) -> Option<GaussianInput> {
    let a = datum
        .maps()
        .iter()
        .map(|map| {
            let s = &map.matrix * m_inv * map.matrix.transpose();
            linalg::spd_inverse(&s)
        })
        .collect::<Option<Vec<_>>>()?;
    Some(GaussianInput::new_unchecked(a))
}

/// `A^{1/2} (A^{-1/2} T A^{-1/2})^w A^{1/2}`, the geodesic through `A`
/// (at `w = 0`) and `T` (at `w = 1`).
fn geodesic(a: &GaussianInput, t: &GaussianInput, w: f64) -> GaussianInput {
    GaussianInput::new_unchecked(
        a.matrices()
            .iter()
            .zip(t.matrices())
            .map(|(aj, tj)| {
                if aj.nrows() == 0 {
                    return aj.clone();
                }
                let h = linalg::sqrt_spd(aj);
                let hi = linalg::inv_sqrt_spd(aj);
                let inner = linalg::sym_apply(&(&hi * tj * &hi), |x| x.max(0.0).powf(w));
                linalg::symmetrize(&(&h * inner * &h))
            })
            .collect(),
    )
}

/// Orthonormal basis of symmetric `k x k` matrices.
fn sym_basis(k: usize) -> Vec<Mat> {
    let mut out = Vec::with_capacity(k * (k + 1) / 2);
    let r = std::f64::consts::FRAC_1_SQRT_2;
    for a in 0..k {
        for b in a..k {
            let mut e = Mat::zeros(k, k);
            if a == b {
                e[(a, a)] = 1.0;
            } else {
                e[(a, b)] = r;
                e[(b, a)] = r;
            }
            out.push(e);
        }
    }
    out
}

/// The datum seen from the current point: `B̃_j = A_j^{1/2} B_j M^{-1/2}`,
/// so that `Σ p_j B̃_jᵀ B̃_j = I`. A candidate `A'_j = A_j^{1/2} Y_j A_j^{1/2}`
/// changes `log BL_g²` by `Σ p_j log det Y_j - log det Σ p_j B̃_jᵀ Y_j B̃_j`,
/// which stays accurate when `M` itself is badly conditioned.
struct Frame {
    p: Vec<f64>,
    b: Vec<Mat>,
    halves: Vec<Mat>,
}

impl Frame {
    fn new(datum: &BlDatum, pt: &Point) -> Self {
        let w = linalg::inv_sqrt_spd(&pt.m);
        let halves: Vec<Mat> = pt.a.matrices().iter().map(linalg::sqrt_spd).collect();
        let b = datum
            .maps()
            .iter()
            .zip(&halves)
            .map(|(map, h)| h * &map.matrix * &w)
            .collect();
        Frame {
            p: datum.exponents(),
            b,
            halves,
        }
    }

    fn dim(&self) -> usize {
        self.b.first().map_or(0, |b| b.ncols())
    }

    /// Value increment of the candidate `Y`, with `log det Y_j` supplied.
    fn delta(&self, y: &[Mat], log_det_y: &[f64]) -> Option<f64> {
        if !y.iter().all(linalg::is_finite) {
            return None;
        }
        let n = self.dim();
        let mut m = Mat::zeros(n, n);
        let mut s = 0.0;
        for (((b, yj), &p), &ld) in self.b.iter().zip(y).zip(&self.p).zip(log_det_y) {
            if b.nrows() == 0 {
                continue;
            }
            m += b.transpose() * yj * b * p;
            s += p * ld;
        }
        let d = s - linalg::log_det_spd(&linalg::symmetrize(&m))?;
        d.is_finite().then_some(d)
    }

    fn input(&self, y: &[Mat]) -> GaussianInput {
        GaussianInput::new_unchecked(
            self.halves
                .iter()
                .zip(y)
                .map(|(h, yj)| linalg::symmetrize(&(h * yj * h)))
                .collect(),
        )
    }

    /// `Y_j = (B̃_j B̃_jᵀ)^{-w}`: `w = 1` is the plain update, larger `w`
    /// extrapolates along the geodesic through it.
    fn power_step(&self, w: f64) -> (Vec<Mat>, Vec<f64>) {
        let mut ys = Vec::with_capacity(self.b.len());
        let mut lds = Vec::with_capacity(self.b.len());
        for b in &self.b {
            let s = b * b.transpose();
            let e = linalg::sym_eig(&s);
            lds.push(e.values.iter().map(|&x| -w * x.ln()).sum());
            ys.push(linalg::sym_apply(&s, |x| x.powf(-w)));
        }
        (ys, lds)
    }

    fn exp_step(&self, xs: &[Mat], t: f64) -> (Vec<Mat>, Vec<f64>) {
        let ys = xs.iter().map(|x| linalg::sym_apply(&(x * t), f64::exp)).collect();
        let lds = xs.iter().map(|x| t * x.trace()).collect();
        (ys, lds)
    }

    /// Newton direction for the increment as a function of `X_j` with
    /// `Y_j = exp(X_j)`. The Hessian has a null direction (the scale gauge),
    /// handled by a small Levenberg shift.
    fn newton_direction(&self) -> Option<Vec<Mat>> {
        struct Param {
            j: usize,
            e: Mat,
            g: Mat,
        }
        let mut params = Vec::new();
        let mut grad = Vec::new();
        let mut s_list = Vec::with_capacity(self.b.len());
        for (j, (b, &p)) in self.b.iter().zip(&self.p).enumerate() {
            let s = b * b.transpose();
            let nj = b.nrows();
            for e in sym_basis(nj) {
                let g = b.transpose() * &e * b * p;
                grad.push(p * ((Mat::identity(nj, nj) - &s) * &e).trace());
                params.push(Param { j, e, g });
            }
            s_list.push(s);
        }
        let np = params.len();
        if np == 0 {
            return None;
        }
        let mut neg_h = Mat::zeros(np, np);
        for x in 0..np {
            for y in x..np {
                let (px, py) = (&params[x], &params[y]);
                let mut h = px.g.component_mul(&py.g.transpose()).sum();
                if px.j == py.j {
                    h -= self.p[px.j] * (&s_list[px.j] * &px.e * &py.e).trace();
                }
                neg_h[(x, y)] = -h;
                neg_h[(y, x)] = -h;
            }
        }
        let g = DVector::from_vec(grad);
        // Flat directions carrying only rounding noise in the gradient are
        // dropped; damping alone would turn that noise into steps along a
        // manifold of extremisers.
        let eig = neg_h.clone().symmetric_eigen();
        let top = eig.eigenvalues.amax();
        if !top.is_finite() {
            return None;
        }
        let lowest = eig.eigenvalues.min();
        let mut mu = 1e-12 * neg_h.diagonal().amax().max(1.0);
        for _ in 0..8 {
            if lowest + mu > 0.0 {
                break;
            }
            mu *= 100.0;
        }
        if lowest + mu <= 0.0 {
            return None;
        }
        let mut d = DVector::zeros(np);
        for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
            let u = eig.eigenvectors.column(k);
            let slope = u.dot(&g);
            if lambda <= CURVATURE_CUTOFF * top && slope.abs() <= GRADIENT_NOISE {
                continue;
            }
            d += u * (slope / (lambda + mu));
        }
        if d.iter().all(|x| x.is_finite()) {
            let mut xs: Vec<Mat> = self.b.iter().map(|b| Mat::zeros(b.nrows(), b.nrows())).collect();
            for (c, p) in d.iter().zip(&params) {
                xs[p.j] += &p.e * *c;
            }
            return Some(xs);
        }
        None
    }
}

/// Outcome of one step: the new point, its value gain and the size of the
/// move in logarithmic coordinates.
struct Step {
    point: Point,
    gain: f64,
    moved: f64,
}

fn log_size(y: &[Mat]) -> f64 {
    y.iter()
        .filter(|m| m.nrows() > 0)
        .flat_map(|m| linalg::sym_eig(m).values)
        .map(|x| x.ln().abs())
        .fold(0.0, f64::max)
}

/// Relative curvature and gradient size below which a Newton direction counts
/// as flat noise.
const CURVATURE_CUTOFF: f64 = 1e-10;
const GRADIENT_NOISE: f64 = 1e-12;

/// Extrapolation continues only while it gains more than this.
const NOISE: f64 = 1e-14;

/// Best candidate reachable from `pt` in one step.
fn improve(datum: &BlDatum, pt: &Point) -> Option<Step> {
    let frame = Frame::new(datum, pt);
    let (y, ld) = frame.power_step(1.0);
    let mut best = (frame.delta(&y, &ld)?, y);

    let mut w = 1.0;
    while w < MAX_EXTRAPOLATION {
        w *= 2.0;
        let (y, ld) = frame.power_step(w);
        match frame.delta(&y, &ld) {
            Some(d) if d > best.0 + NOISE => best = (d, y),
            _ => break,
        }
    }

    if let Some(xs) = frame.newton_direction() {
        let mut t = 1.0;
        let (y, ld) = frame.exp_step(&xs, t);
        match frame.delta(&y, &ld) {
            Some(d) if d > best.0 => {
                best = (d, y);
                while t < MAX_EXTRAPOLATION {
                    t *= 2.0;
                    let (y, ld) = frame.exp_step(&xs, t);
                    match frame.delta(&y, &ld) {
                        Some(d) if d > best.0 + NOISE => best = (d, y),
                        _ => break,
                    }
                }
            }
            _ => {
                for _ in 0..30 {
                    t *= 0.5;
                    let (y, ld) = frame.exp_step(&xs, t);
                    if let Some(d) = frame.delta(&y, &ld) {
                        if d > best.0 {
                            best = (d, y);
                            break;
                        }
                    }
                }
            }
        }
    }
    let (gain, y) = best;
    let mut point = evaluate(datum, frame.input(&y))?;
    // The increment is more accurate than re-evaluating from scratch.
    point.log_value = pt.log_value + gain;
    // Measured after normalization so that the scale gauge does not count.
    let rel: Vec<Mat> =
        pt.a.matrices()
            .iter()
            .zip(point.a.matrices())
            .map(|(old, new)| {
                let hi = linalg::inv_sqrt_spd(old);
                &hi * new * &hi
            })
            .collect();
    Some(Step {
        point,
        gain,
        moved: log_size(&rel),
    })
}

/// Largest accepted move (log-eigenvalue scale) still compatible with
/// convergence; moves along a degenerating ray stay large.
const MOVE_TOL: f64 = 1e-6;

/// Solves for a gaussian extremiser. With no explicit `start`, seed 0 starts
/// from identities and any other seed from [`random_input`].
///
/// `Converged` requires the stationarity residual to be at most `stat_tol`
/// and the last step to have been negligible both in value and in size.
pub fn fixed_point_solve(
    datum: &BlDatum,
    start: Option<&GaussianInput>,
    tol: &Tolerances,
    max_iter: usize,
    seed: u64,
) -> Result<SolveOutcome> {
    tol.validate()?;
    if datum.has_zero_exponent() {
        return Err(Error::Precondition(
            "datum has zero exponents; call normalized() to drop those maps first".into(),
        ));
    }
    let lhs = datum.dim() as f64;
    let rhs: f64 = datum.maps().iter().map(|m| m.exponent * m.matrix.nrows() as f64).sum();
    if (lhs - rhs).abs() > 1e-9 {
        return Err(Error::Precondition(format!(
            "scaling condition fails ({lhs} vs {rhs}); no stationary input exists"
        )));
    }
    let a0 = match start {
        Some(a) => {
            a.check_against(datum)?;
            a.clone()
        }
        None if seed == 0 => GaussianInput::identity(datum),
        None => random_input(datum, seed),
    };

    let mut trace = Vec::new();
    let Some(mut pt) = evaluate(datum, a0.clone()) else {
        let m = build_m(datum, &a0);
        return Ok(SolveOutcome {
            status: SolveStatus::Degenerated,
            extremiser: None,
            blg_value: None,
            degeneration_subspace: Some(low_eigenspace(&m)),
            final_input: a0,
            residual: f64::INFINITY,
            iterations: 0,
            stalled: false,
            trace,
        });
    };
    let mut last = (f64::INFINITY, f64::INFINITY);
    let mut stall = 0usize;
    for iter in 0..=max_iter {
        let cond = linalg::condition_spd(&pt.m);
        let residual = if cond <= tol.cond_max {
            linalg::spd_inverse(&pt.m).map_or(f64::INFINITY, |mi| residual_with(datum, &pt.a, &mi))
        } else {
            f64::INFINITY
        };
        trace.push(TraceEntry {
            iter,
            value: (0.5 * pt.log_value).exp(),
            residual,
            cond,
        });
        let outcome = |status, stalled, pt: Point, trace| SolveOutcome {
            status,
            extremiser: None,
            blg_value: None,
            degeneration_subspace: None,
            final_input: pt.a,
            residual,
            iterations: iter,
            stalled,
            trace,
        };
        if cond.is_nan() || cond > tol.cond_max {
            let sub = low_eigenspace(&pt.m);
            let mut o = outcome(SolveStatus::Degenerated, false, pt, trace);
            o.degeneration_subspace = Some(sub);
            return Ok(o);
        }
        if residual <= tol.stat_tol && last.0 <= GAIN_TOL && last.1 <= MOVE_TOL {
            let value = gaussian_functional(datum, &pt.a, tol)?;
            let a = pt.a.clone();
            let mut o = outcome(SolveStatus::Converged, false, pt, trace);
            o.extremiser = Some(a);
            o.blg_value = Some(value);
            return Ok(o);
        }
        if stall >= STALL_STEPS || iter == max_iter {
            return Ok(outcome(SolveStatus::BudgetExhausted, stall >= STALL_STEPS, pt, trace));
        }
        match improve(datum, &pt) {
            Some(step) => {
                last = (step.gain.max(0.0), step.moved);
                pt = step.point;
            }
            None => last = (0.0, 0.0),
        }
        let tiny = last.0 <= GAIN_TOL * 0.1 && last.1 <= MOVE_TOL;
        stall = if tiny && residual > tol.stat_tol { stall + 1 } else { 0 };
    }
    unreachable!("loop returns at iter == max_iter")
}

/// Fixed gaussian weight `exp(-π<Gx, x>)` on the domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Localizer {
    g: Mat,
}

impl Localizer {
    pub fn new(g: Mat) -> Result<Self> {
        if g.nrows() != g.ncols() {
            return Err(Error::Dimension("G must be square".into()));
        }
        if g.nrows() > 0 && linalg::condition_spd(&g).partial_cmp(&1e15) != Some(std::cmp::Ordering::Less) {
            return Err(Error::Precondition("G must be symmetric positive definite".into()));
        }
        Ok(Localizer {
            g: linalg::symmetrize(&g),
        })
    }

    pub fn matrix(&self) -> &Mat {
        &self.g
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LocalizedOutcome {
    Finite {
        k: f64,
        input: GaussianInput,
        iterations: usize,
    },
    Infinite {
        iterations: usize,
    },
    BudgetExhausted {
        best: f64,
        iterations: usize,
    },
}

/// Best constant `K = sup_A (Π det A_j^{p_j} / det(G + M))^{1/2}` of the
/// localized inequality.
///
/// Iterates `A_j <- (B_j (G+M)^{-1} B_jᵀ)^{-1}` with geodesic extrapolation.
/// `Finite` is returned when the stationarity residual vanishes or the
/// objective stops improving (the supremum may be approached only as some
/// `A_j` diverges); `Infinite` when the objective grows by more than
/// `log(cond_max)` above its starting value.
pub fn localized_constant(
    datum: &BlDatum,
    g: &Localizer,
    tol: &Tolerances,
    max_iter: usize,
) -> Result<LocalizedOutcome> {
    if g.g.nrows() != datum.dim() {
        return Err(Error::Dimension("G does not match the domain".into()));
    }
    if datum.has_zero_exponent() {
        return Err(Error::Precondition(
            "datum has zero exponents; call normalized() to drop those maps first".into(),
        ));
    }
    let objective = |a: &GaussianInput| -> Option<f64> {
        if !a.matrices().iter().all(|m| linalg::is_finite(m) && m.amax() < 1e150) {
            return None;
        }
        let gm = &g.g + build_m(datum, a);
        let mut v = -linalg::log_det_spd(&gm)?;
        for (map, aj) in datum.maps().iter().zip(a.matrices()) {
            if map.matrix.nrows() > 0 {
                v += map.exponent * linalg::log_det_spd(aj)?;
            }
        }
        v.is_finite().then_some(v)
    };
    let update = |a: &GaussianInput| -> Option<(GaussianInput, f64)> {
        let gm_inv = linalg::spd_inverse(&(&g.g + build_m(datum, a)))?;
        let res = residual_with(datum, a, &gm_inv);
        Some((plain_step(datum, &gm_inv)?, res))
    };

    let mut a = GaussianInput::identity(datum);
    let mut v = objective(&a).ok_or_else(|| Error::Domain("objective undefined at start".into()))?;
    let v0 = v;
    let mut stall = 0;
    for iter in 0..max_iter {
        let Some((t, res)) = update(&a) else {
            return Ok(LocalizedOutcome::Infinite { iterations: iter });
        };
        if res <= tol.stat_tol || stall >= STALL_STEPS {
            return Ok(LocalizedOutcome::Finite {
                k: (0.5 * v).exp(),
                input: a,
                iterations: iter,
            });
        }
        let mut best = match objective(&t) {
            Some(vt) => (t.clone(), vt),
            None => (a.clone(), v),
        };
        let mut w = 1.0;
        while w < MAX_EXTRAPOLATION {
            w *= 2.0;
            let c = geodesic(&a, &t, w);
            match objective(&c) {
                Some(vc) if vc > best.1 => best = (c, vc),
                _ => break,
            }
        }
        let gain = best.1 - v;
        if best.1 >= v {
            a = best.0;
            v = best.1;
        }
        if v - v0 > tol.cond_max.ln() {
            return Ok(LocalizedOutcome::Infinite { iterations: iter + 1 });
        }
        stall = if gain <= GAIN_TOL * v.abs().max(1.0) {
            stall + 1
        } else {
            0
        };
    }
    Ok(LocalizedOutcome::BudgetExhausted {
        best: (0.5 * v).exp(),
        iterations: max_iter,
    })
}

/// Number of grid points per axis used by [`quadrature_oracle`].
pub const QUADRATURE_POINTS: usize = 257;
/// Half-width of the integration box in standard deviations; the gaussian
/// tail beyond it carries less than 1e-12 of the mass.
const TRUNCATION_SIGMAS: f64 = 7.5;

/// `∫ exp(-π <Q (x - c), x - c>)`-shaped integrand evaluated by tensor
/// trapezoid quadrature in the principal axes of `q`.
fn integrate_gaussian_shaped(q: &Mat, center: &DVector<f64>, f: impl Fn(&DVector<f64>) -> f64) -> Option<f64> {
    let n = q.nrows();
    let e = linalg::sym_eig(q);
    if n > 0 && e.values[0] <= 0.0 {
        return None;
    }
    let radii: Vec<f64> = e
        .values
        .iter()
        .map(|&l| TRUNCATION_SIGMAS / (2.0 * std::f64::consts::PI * l).sqrt())
        .collect();
    let np = QUADRATURE_POINTS;
    let steps: Vec<f64> = radii.iter().map(|r| 2.0 * r / (np - 1) as f64).collect();
    let total = np.pow(n as u32);
    let mut sum = 0.0;
    let mut idx = vec![0usize; n];
    let mut y = DVector::zeros(n);
    for _ in 0..total {
        let mut w = 1.0;
        for i in 0..n {
            y[i] = -radii[i] + idx[i] as f64 * steps[i];
            if idx[i] == 0 || idx[i] == np - 1 {
                w *= 0.5;
            }
        }
        let x = center + &e.vectors * &y;
        sum += w * f(&x);
        for i in idx.iter_mut() {
            *i += 1;
            if *i < np {
                break;
            }
            *i = 0;
        }
    }
    Some(sum * steps.iter().product::<f64>())
}

/// Direct numerical evaluation of the gaussian functional by quadrature
/// (domain dimension at most 3).
pub fn quadrature_oracle(datum: &BlDatum, a: &GaussianInput, tol: &Tolerances) -> Result<f64> {
    let shifts: Vec<DVector<f64>> = datum.target_dims().into_iter().map(DVector::zeros).collect();
    quadrature_oracle_shifted(datum, a, &shifts, tol)
}

/// As [`quadrature_oracle`] with the j-th gaussian translated by `shifts[j]`.
pub fn quadrature_oracle_shifted(
    datum: &BlDatum,
    a: &GaussianInput,
    shifts: &[DVector<f64>],
    tol: &Tolerances,
) -> Result<f64> {
    let n = datum.dim();
    if n > 3 {
        return Err(Error::Unsupported(format!(
            "quadrature needs domain dimension <= 3 (got {n})"
        )));
    }
    let m = checked_m(datum, a, tol)?;
    if shifts.len() != datum.m() {
        return Err(Error::Dimension("one shift per map is required".into()));
    }
    let mut rhs = DVector::zeros(n);
    for ((map, aj), xi) in datum.maps().iter().zip(a.matrices()).zip(shifts) {
        if xi.len() != map.matrix.nrows() {
            return Err(Error::Dimension("shift does not match its target".into()));
        }
        rhs += map.matrix.transpose() * (aj * xi) * map.exponent;
    }
    let center = linalg::spd_inverse(&m).ok_or_else(|| singular_error(&m, f64::INFINITY))? * rhs;
    let pi = std::f64::consts::PI;
    let numerator = integrate_gaussian_shaped(&m, &center, |x| {
        let mut s = 0.0;
        for ((map, aj), xi) in datum.maps().iter().zip(a.matrices()).zip(shifts) {
            let r = &map.matrix * x - xi;
            s += map.exponent * r.dot(&(aj * &r));
        }
        (-pi * s).exp()
    })
    .ok_or_else(|| singular_error(&m, f64::INFINITY))?;
    let mut denominator = 1.0;
    for (map, aj) in datum.maps().iter().zip(a.matrices()) {
        if map.exponent == 0.0 {
            continue;
        }
        let zero = DVector::zeros(aj.nrows());
        let mass = integrate_gaussian_shaped(aj, &zero, |y| (-pi * y.dot(&(aj * y))).exp())
            .ok_or_else(|| Error::Domain("input matrix is not positive definite".into()))?;
        denominator *= mass.powf(map.exponent);
    }
    Ok(numerator / denominator)
}
