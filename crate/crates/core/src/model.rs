//! Brascamp–Lieb data and the constructions acting on them: validation,
//! restriction to a subspace, quotient by a subspace, direct sums and
//! equivalence transforms.
//!
//! A datum is a domain dimension `n` together with maps `B_j : R^n -> R^{n_j}`
//! and exponents `p_j >= 0`. Quotients `H/V` are represented concretely as
//! `V⊥` with an orthonormal basis, and targets `H_j / B_j V` as `(B_j V)⊥`.

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::subspace::{Subspace, PROJECTOR_TOL};
use serde_json::{json, Map, Value};

/// Numerical tolerances surfaced in every report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Relative singular-value cutoff for rank decisions.
    pub rank_tol: f64,
    /// Bound on the relative stationarity residual.
    pub stat_tol: f64,
    /// Condition number of `M` above which a solve is declared degenerate.
    pub cond_max: f64,
    /// Projector distance below which two subspaces are identified.
    pub projector_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rank_tol: 1e-9,
            stat_tol: 1e-10,
            cond_max: 1e12,
            projector_tol: PROJECTOR_TOL,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        let all = [self.rank_tol, self.stat_tol, self.cond_max, self.projector_tol];
        if all.iter().all(|x| x.is_finite() && *x > 0.0) {
            Ok(())
        } else {
            Err(Error::Precondition(
                "tolerances must be finite and strictly positive".into(),
            ))
        }
    }

    pub fn to_json(&self) -> Value {
        json!({
            "rank_tol": self.rank_tol,
            "stat_tol": self.stat_tol,
            "cond_max": self.cond_max,
            "projector_tol": self.projector_tol,
        })
    }
}

/// One map `B_j` with its exponent.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap {
    pub matrix: Mat,
    pub exponent: f64,
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlDatum {
    dim: usize,
    maps: Vec<LinearMap>,
}

impl BlDatum {
    /// Builds a datum, checking shapes, finiteness and `p_j >= 0`.
    pub fn new(dim: usize, maps: Vec<LinearMap>) -> Result<Self> {
        for (j, m) in maps.iter().enumerate() {
            if m.matrix.ncols() != dim {
                return Err(Error::Dimension(format!(
                    "map {j} has {} columns but the domain has dimension {dim}",
                    m.matrix.ncols()
                )));
            }
            if !linalg::is_finite(&m.matrix) {
                return Err(Error::Domain(format!("map {j} has a non-finite entry")));
            }
            if !(m.exponent.is_finite() && m.exponent >= 0.0) {
                return Err(Error::Domain(format!(
                    "map {j} has exponent {} (must be finite and nonnegative)",
                    m.exponent
                )));
            }
        }
        Ok(BlDatum { dim, maps })
    }

    /// Convenience constructor from matrices and exponents.
    pub fn from_parts(dim: usize, matrices: Vec<Mat>, exponents: &[f64]) -> Result<Self> {
        if matrices.len() != exponents.len() {
            return Err(Error::Dimension(format!(
                "{} matrices but {} exponents",
                matrices.len(),
                exponents.len()
            )));
        }
        let maps = matrices
            .into_iter()
            .zip(exponents)
            .map(|(matrix, &exponent)| LinearMap {
                matrix,
                exponent,
                label: None,
            })
            .collect();
        Self::new(dim, maps)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn maps(&self) -> &[LinearMap] {
        &self.maps
    }

    pub fn m(&self) -> usize {
        self.maps.len()
    }

    pub fn matrix(&self, j: usize) -> &Mat {
        &self.maps[j].matrix
    }

    pub fn exponents(&self) -> Vec<f64> {
        self.maps.iter().map(|m| m.exponent).collect()
    }

    pub fn target_dims(&self) -> Vec<usize> {
        self.maps.iter().map(|m| m.matrix.nrows()).collect()
    }

    /// True when every target is one-dimensional.
    pub fn is_rank_one(&self) -> bool {
        self.maps.iter().all(|m| m.matrix.nrows() == 1)
    }

    pub fn has_zero_exponent(&self) -> bool {
        self.maps.iter().any(|m| m.exponent == 0.0)
    }

    /// Same datum with new exponents.
    pub fn with_exponents(&self, p: &[f64]) -> Result<Self> {
        if p.len() != self.m() {
            return Err(Error::Dimension(format!("{} exponents for {} maps", p.len(), self.m())));
        }
        let maps = self
            .maps
            .iter()
            .zip(p)
            .map(|(m, &e)| LinearMap {
                exponent: e,
                ..m.clone()
            })
            .collect();
        Self::new(self.dim, maps)
    }

    /// Drops maps with `p_j = 0`; they do not affect any constant. Returns
    /// the reduced datum and the original indices of the retained maps.
    pub fn normalized(&self) -> (BlDatum, Vec<usize>) {
        let keep: Vec<usize> = (0..self.m()).filter(|&j| self.maps[j].exponent > 0.0).collect();
        let maps = keep.iter().map(|&j| self.maps[j].clone()).collect();
        (BlDatum { dim: self.dim, maps }, keep)
    }

    /// Parses the datum JSON format, reporting the JSON path of any problem.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(s).map_err(|e| Error::parse("$", e.to_string()))?;
        Self::from_json(&v)
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let obj = v.as_object().ok_or_else(|| Error::parse("$", "expected an object"))?;
        let dim = obj
            .get("dim")
            .ok_or_else(|| Error::parse("$.dim", "missing"))?
            .as_u64()
            .ok_or_else(|| Error::parse("$.dim", "expected a nonnegative integer"))? as usize;
        let maps_v = obj
            .get("maps")
            .ok_or_else(|| Error::parse("$.maps", "missing"))?
            .as_array()
            .ok_or_else(|| Error::parse("$.maps", "expected an array"))?;
        let mut maps = Vec::with_capacity(maps_v.len());
        for (j, mv) in maps_v.iter().enumerate() {
            let path = format!("$.maps[{j}]");
            let mo = mv
                .as_object()
                .ok_or_else(|| Error::parse(&path, "expected an object"))?;
            let rows_v = mo
                .get("matrix")
                .ok_or_else(|| Error::parse(format!("{path}.matrix"), "missing"))?;
            let rows = parse_rows(rows_v, &format!("{path}.matrix"), Some(dim))?;
            let exponent = mo
                .get("exponent")
                .ok_or_else(|| Error::parse(format!("{path}.exponent"), "missing"))?
                .as_f64()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::parse(format!("{path}.exponent"), "expected a finite number"))?;
            if exponent < 0.0 {
                return Err(Error::parse(format!("{path}.exponent"), "must be nonnegative"));
            }
            let label = match mo.get("label") {
                None | Some(Value::Null) => None,
                Some(Value::String(s)) => Some(s.clone()),
                Some(_) => return Err(Error::parse(format!("{path}.label"), "expected a string")),
            };
            maps.push(LinearMap {
                matrix: linalg::from_rows(&rows, dim),
                exponent,
                label,
            });
        }
        Self::new(dim, maps)
    }

    pub fn to_json(&self) -> Value {
        let maps: Vec<Value> = self
            .maps
            .iter()
            .map(|m| {
                let mut o = Map::new();
                o.insert("matrix".into(), json!(linalg::to_rows(&m.matrix)));
                o.insert("exponent".into(), json!(m.exponent));
                if let Some(l) = &m.label {
                    o.insert("label".into(), json!(l));
                }
                Value::Object(o)
            })
            .collect();
        json!({ "dim": self.dim, "maps": maps })
    }
}

/// Parses a row-major matrix. `cols` fixes the row length when known.
pub fn parse_rows(v: &Value, path: &str, cols: Option<usize>) -> Result<Vec<Vec<f64>>> {
    let rows = v
        .as_array()
        .ok_or_else(|| Error::parse(path, "expected an array of rows"))?;
    let mut out = Vec::with_capacity(rows.len());
    let mut width = cols;
    for (i, r) in rows.iter().enumerate() {
        let rp = format!("{path}[{i}]");
        let entries = r.as_array().ok_or_else(|| Error::parse(&rp, "expected an array"))?;
        match width {
            Some(w) if w != entries.len() => {
                return Err(Error::parse(
                    &rp,
                    format!("row has {} entries, expected {w}", entries.len()),
                ))
            }
            None => width = Some(entries.len()),
            _ => {}
        }
        let mut row = Vec::with_capacity(entries.len());
        for (k, e) in entries.iter().enumerate() {
            let x = e
                .as_f64()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::parse(format!("{rp}[{k}]"), "expected a finite number"))?;
            row.push(x);
        }
        out.push(row);
    }
    Ok(out)
}

/// Per-map report of surjectivity and the common kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub ranks: Vec<usize>,
    pub surjective: Vec<bool>,
    pub common_kernel: Subspace,
    pub non_degenerate: bool,
    pub zero_exponents: Vec<usize>,
}

impl ValidationReport {
    pub fn all_surjective(&self) -> bool {
        self.surjective.iter().all(|&s| s)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "ranks": self.ranks,
            "surjective": self.surjective,
            "common_kernel_dim": self.common_kernel.dim(),
            "common_kernel_basis": linalg::to_rows(&self.common_kernel.basis().transpose()),
            "non_degenerate": self.non_degenerate,
            "zero_exponent_maps": self.zero_exponents,
        })
    }
}

pub fn validate_datum(datum: &BlDatum, tol: &Tolerances) -> ValidationReport {
    let ranks: Vec<usize> = datum
        .maps
        .iter()
        .map(|m| linalg::numerical_rank(&m.matrix, tol.rank_tol, 0.0))
        .collect();
    let surjective = ranks.iter().zip(datum.target_dims()).map(|(&r, nj)| r == nj).collect();
    let total_rows: usize = datum.target_dims().iter().sum();
    let mut stacked = Mat::zeros(total_rows, datum.dim);
    let mut row = 0;
    for m in &datum.maps {
        stacked
            .view_mut((row, 0), (m.matrix.nrows(), datum.dim))
            .copy_from(&m.matrix);
        row += m.matrix.nrows();
    }
    let common_kernel = Subspace::from_orthonormal_unchecked(linalg::null_space(&stacked, tol.rank_tol));
    ValidationReport {
        ranks,
        surjective,
        non_degenerate: common_kernel.dim() == 0,
        common_kernel,
        zero_exponents: (0..datum.m()).filter(|&j| datum.maps[j].exponent == 0.0).collect(),
    }
}

/// Restriction `B_V`: each map becomes `V -> B_j V` in orthonormal bases of
/// both spaces. Exponents are unchanged.
pub fn restrict_datum(datum: &BlDatum, v: &Subspace, tol: &Tolerances) -> Result<BlDatum> {
    check_sub(datum, v)?;
    if v.dim() == 0 {
        return Err(Error::Domain("cannot restrict to the zero subspace".into()));
    }
    let q = v.basis();
    let maps = datum
        .maps
        .iter()
        .map(|m| {
            let img = v.image(&m.matrix, tol.rank_tol)?;
            Ok(LinearMap {
                matrix: img.basis().transpose() * &m.matrix * q,
                ..m.clone()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    BlDatum::new(v.dim(), maps)
}

/// Quotient `B_{H/V}` on `V⊥`, with targets `(B_j V)⊥`.
pub fn quotient_datum(datum: &BlDatum, v: &Subspace, tol: &Tolerances) -> Result<BlDatum> {
    check_sub(datum, v)?;
    if v.dim() == datum.dim {
        return Err(Error::Domain("quotient by the whole space is empty".into()));
    }
    let perp = v.orthocomplement();
    let p = perp.basis();
    let maps = datum
        .maps
        .iter()
        .map(|m| {
            let img_perp = v.image(&m.matrix, tol.rank_tol)?.orthocomplement();
            Ok(LinearMap {
                matrix: img_perp.basis().transpose() * &m.matrix * p,
                ..m.clone()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    BlDatum::new(perp.dim(), maps)
}

fn check_sub(datum: &BlDatum, v: &Subspace) -> Result<()> {
    if v.ambient_dim() != datum.dim {
        return Err(Error::Dimension(format!(
            "subspace lives in R^{} but the domain is R^{}",
            v.ambient_dim(),
            datum.dim
        )));
    }
    Ok(())
}

/// Block-diagonal direct sum. Exponent vectors must agree.
pub fn direct_sum_datum(d1: &BlDatum, d2: &BlDatum) -> Result<BlDatum> {
    if d1.m() != d2.m() {
        return Err(Error::Dimension(format!(
            "direct sum needs equal map counts ({} vs {})",
            d1.m(),
            d2.m()
        )));
    }
    for (j, (a, b)) in d1.maps.iter().zip(&d2.maps).enumerate() {
        if (a.exponent - b.exponent).abs() > 1e-12 {
            return Err(Error::Dimension(format!(
                "exponent {j} differs ({} vs {})",
                a.exponent, b.exponent
            )));
        }
    }
    let maps = d1
        .maps
        .iter()
        .zip(&d2.maps)
        .map(|(a, b)| LinearMap {
            matrix: linalg::block_diag(&a.matrix, &b.matrix),
            exponent: a.exponent,
            label: a.label.clone().or_else(|| b.label.clone()),
        })
        .collect();
    BlDatum::new(d1.dim + d2.dim, maps)
}

/// Invertible changes of coordinates `C` on the domain and `C_j` on each
/// target. The transformed datum is `B'_j = C_j^{-1} B_j C`.
#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceTransform {
    pub c: Mat,
    pub c_list: Vec<Mat>,
}

impl EquivalenceTransform {
    pub fn identity(datum: &BlDatum) -> Self {
        EquivalenceTransform {
            c: Mat::identity(datum.dim, datum.dim),
            c_list: datum.target_dims().into_iter().map(|k| Mat::identity(k, k)).collect(),
        }
    }

    /// The transform equal to applying `self` and then `next`.
    pub fn then(&self, next: &EquivalenceTransform) -> EquivalenceTransform {
        EquivalenceTransform {
            c: &self.c * &next.c,
            c_list: self.c_list.iter().zip(&next.c_list).map(|(a, b)| a * b).collect(),
        }
    }

    /// Transported gaussian input `C_j^T A_j C_j`.
    pub fn transform_input(&self, a: &GaussianInput) -> GaussianInput {
        GaussianInput::new_unchecked(
            a.matrices()
                .iter()
                .zip(&self.c_list)
                .map(|(aj, cj)| linalg::symmetrize(&(cj.transpose() * aj * cj)))
                .collect(),
        )
    }

    pub fn to_json(&self) -> Value {
        json!({
            "C": linalg::to_rows(&self.c),
            "C_j": self.c_list.iter().map(linalg::to_rows).collect::<Vec<_>>(),
        })
    }
}

fn check_invertible(m: &Mat, what: &str, tol: f64) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!("{what} must be square")));
    }
    if m.nrows() == 0 {
        return Ok(());
    }
    let s = linalg::singular_values(m);
    let (hi, lo) = (s[0], *s.last().unwrap());
    if lo.is_nan() || lo <= tol * hi {
        return Err(Error::Singular {
            reason: format!("{what} is not invertible (sigma_min {lo:.3e}, sigma_max {hi:.3e})"),
            null_space: Some(Subspace::from_orthonormal_unchecked(linalg::null_space(m, tol))),
        });
    }
    Ok(())
}

/// Applies `t` and returns the new datum together with the factor
/// `prod |det C_j|^{p_j} / |det C|` relating constants of the new datum to
/// those of the old one.
pub fn apply_equivalence(datum: &BlDatum, t: &EquivalenceTransform, tol: &Tolerances) -> Result<(BlDatum, f64)> {
    if t.c_list.len() != datum.m() {
        return Err(Error::Dimension(format!(
            "{} target transforms for {} maps",
            t.c_list.len(),
            datum.m()
        )));
    }
    check_invertible(&t.c, "C", tol.rank_tol)?;
    if t.c.nrows() != datum.dim {
        return Err(Error::Dimension("C does not match the domain".into()));
    }
    let mut log_scale = -linalg::det(&t.c).abs().ln();
    let mut maps = Vec::with_capacity(datum.m());
    for (j, (m, cj)) in datum.maps.iter().zip(&t.c_list).enumerate() {
        check_invertible(cj, &format!("C_{j}"), tol.rank_tol)?;
        if cj.nrows() != m.matrix.nrows() {
            return Err(Error::Dimension(format!("C_{j} does not match target {j}")));
        }
        let inv = cj.clone().try_inverse().ok_or_else(|| Error::Singular {
            reason: format!("C_{j} could not be inverted"),
            null_space: None,
        })?;
        log_scale += m.exponent * linalg::det(cj).abs().ln();
        maps.push(LinearMap {
            matrix: inv * &m.matrix * &t.c,
            ..m.clone()
        });
    }
    Ok((BlDatum::new(datum.dim, maps)?, log_scale.exp()))
}

/// One symmetric positive-definite matrix per target space.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianInput {
    a: Vec<Mat>,
}

impl GaussianInput {
    /// Checks symmetry (1e-12 relative) and positive definiteness.
    pub fn new(a: Vec<Mat>) -> Result<Self> {
        for (j, m) in a.iter().enumerate() {
            if m.nrows() != m.ncols() {
                return Err(Error::Dimension(format!("A_{j} is not square")));
            }
            if !linalg::is_finite(m) {
                return Err(Error::Domain(format!("A_{j} has a non-finite entry")));
            }
            let scale = m.amax().max(f64::MIN_POSITIVE);
            if (m - m.transpose()).amax() > 1e-12 * scale {
                return Err(Error::Domain(format!("A_{j} is not symmetric")));
            }
            if m.nrows() > 0 && linalg::sym_eig(m).values[0] <= 0.0 {
                return Err(Error::Domain(format!("A_{j} is not positive definite")));
            }
        }
        Ok(GaussianInput { a })
    }

    pub(crate) fn new_unchecked(a: Vec<Mat>) -> Self {
        GaussianInput { a }
    }

    pub fn identity(datum: &BlDatum) -> Self {
        GaussianInput {
            a: datum.target_dims().into_iter().map(|k| Mat::identity(k, k)).collect(),
        }
    }

    /// `A_j = c_j I`.
    pub fn scalars(datum: &BlDatum, c: &[f64]) -> Result<Self> {
        Self::new(
            datum
                .target_dims()
                .into_iter()
                .zip(c)
                .map(|(k, &x)| Mat::identity(k, k) * x)
                .collect(),
        )
    }

    pub fn matrices(&self) -> &[Mat] {
        &self.a
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        GaussianInput {
            a: self.a.iter().map(|m| m * lambda).collect(),
        }
    }

    pub fn check_against(&self, datum: &BlDatum) -> Result<()> {
        if self.a.len() != datum.m() {
            return Err(Error::Dimension(format!(
                "{} input matrices for {} maps",
                self.a.len(),
                datum.m()
            )));
        }
        for (j, (a, k)) in self.a.iter().zip(datum.target_dims()).enumerate() {
            if a.nrows() != k {
                return Err(Error::Dimension(format!(
                    "A_{j} is {}x{} but target {j} has dimension {k}",
                    a.nrows(),
                    a.ncols()
                )));
            }
        }
        Ok(())
    }

    /// Largest entrywise deviation from `other` after rescaling `other` by
    /// the least-squares scalar; measures agreement up to a global scale.
    pub fn distance_up_to_scale(&self, other: &GaussianInput) -> f64 {
        let dot: f64 = self.a.iter().zip(&other.a).map(|(x, y)| x.dot(y)).sum();
        let nn: f64 = other.a.iter().map(|y| y.norm_squared()).sum();
        if nn == 0.0 {
            return f64::INFINITY;
        }
        let s = dot / nn;
        let scale: f64 = self.a.iter().map(|x| x.amax()).fold(0.0, f64::max).max(1e-300);
        self.a
            .iter()
            .zip(&other.a)
            .map(|(x, y)| (x - y * s).amax())
            .fold(0.0, f64::max)
            / scale
    }

    pub fn to_json(&self) -> Value {
        json!(self.a.iter().map(linalg::to_rows).collect::<Vec<_>>())
    }

    pub fn from_json(v: &Value, datum: &BlDatum) -> Result<Self> {
        let arr = v
            .as_array()
            .ok_or_else(|| Error::parse("$", "expected an array of matrices"))?;
        let dims = datum.target_dims();
        if arr.len() != dims.len() {
            return Err(Error::parse("$", format!("expected {} matrices", dims.len())));
        }
        let a = arr
            .iter()
            .zip(dims)
            .enumerate()
            .map(|(j, (m, k))| {
                let rows = parse_rows(m, &format!("$[{j}]"), Some(k))?;
                if rows.len() != k {
                    return Err(Error::parse(format!("$[{j}]"), format!("expected {k} rows")));
                }
                Ok(linalg::from_rows(&rows, k))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(a)
    }
}

/// Whether two data agree map by map up to `tol` in max-norm.
pub fn data_close(a: &BlDatum, b: &BlDatum, tol: f64) -> bool {
    a.dim == b.dim
        && a.m() == b.m()
        && a.maps.iter().zip(&b.maps).all(|(x, y)| {
            x.matrix.shape() == y.matrix.shape()
                && (x.exponent - y.exponent).abs() <= tol
                && (x.matrix.nrows() == 0 || x.matrix.ncols() == 0 || (&x.matrix - &y.matrix).amax() <= tol)
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use proptest::prelude::*;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn holder_is_non_degenerate() {
        let r = validate_datum(&catalog::holder(2, &[0.5, 0.5]), &tol());
        assert!(r.non_degenerate && r.all_surjective());
    }

    #[test]
    fn zero_map_fails_surjectivity() {
        let d = BlDatum::from_parts(2, vec![Mat::zeros(1, 2)], &[1.0]).unwrap();
        let r = validate_datum(&d, &tol());
        assert_eq!(r.surjective, vec![false]);
    }

    #[test]
    fn single_coordinate_map_is_degenerate() {
        let d = BlDatum::from_parts(2, vec![Mat::from_row_slice(1, 2, &[1.0, 0.0])], &[1.0]).unwrap();
        let r = validate_datum(&d, &tol());
        assert!(!r.non_degenerate);
        assert!(r.common_kernel.approx_eq(&Subspace::coordinate(2, &[1]), 1e-8));
    }

    #[test]
    fn column_mismatch_is_rejected() {
        let e = BlDatum::from_parts(3, vec![Mat::identity(2, 2)], &[1.0]).unwrap_err();
        assert!(matches!(e, Error::Dimension(_)));
    }

    #[test]
    fn loomis_whitney_restriction_to_plane() {
        let d = catalog::loomis_whitney();
        let r = restrict_datum(&d, &Subspace::coordinate(3, &[0, 1]), &tol()).unwrap();
        assert_eq!(r.dim(), 2);
        assert_eq!(r.target_dims(), vec![1, 1, 2]);
        let q = quotient_datum(&d, &Subspace::coordinate(3, &[0, 1]), &tol()).unwrap();
        assert_eq!(q.dim(), 1);
        assert_eq!(q.target_dims(), vec![1, 1, 0]);
    }

    #[test]
    fn holder_restriction_and_quotient_are_holder() {
        let d = catalog::holder(2, &[0.5, 0.5]);
        let line = Subspace::coordinate(2, &[0]);
        for r in [
            restrict_datum(&d, &line, &tol()).unwrap(),
            quotient_datum(&d, &line, &tol()).unwrap(),
        ] {
            assert_eq!(r.dim(), 1);
            for m in r.maps() {
                assert!((m.matrix[(0, 0)].abs() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn quotient_by_zero_is_a_copy() {
        let d = catalog::young(&[2.0 / 3.0; 3]);
        let q = quotient_datum(&d, &Subspace::zero(2), &tol()).unwrap();
        assert_eq!(q, d);
        assert!(quotient_datum(&d, &Subspace::full(2), &tol()).is_err());
        assert!(restrict_datum(&d, &Subspace::zero(2), &tol()).is_err());
    }

    #[test]
    fn restriction_to_everything_is_orthogonally_equivalent() {
        let d = catalog::young(&[2.0 / 3.0; 3]);
        let r = restrict_datum(&d, &Subspace::full(2), &tol()).unwrap();
        for (a, b) in d.maps().iter().zip(r.maps()) {
            // 1x2 maps: rows agree up to sign.
            let s = (a.matrix.clone() - b.matrix.clone())
                .amax()
                .min((a.matrix.clone() + b.matrix.clone()).amax());
            assert!(s < 1e-12);
        }
    }

    #[test]
    fn direct_sum_of_one_dimensional_holder() {
        let h1 = catalog::holder(1, &[0.5, 0.5]);
        let s = direct_sum_datum(&h1, &h1).unwrap();
        assert!(data_close(&s, &catalog::holder(2, &[0.5, 0.5]), 0.0));
        let empty = BlDatum::from_parts(0, vec![Mat::zeros(0, 0), Mat::zeros(0, 0)], &[0.5, 0.5]).unwrap();
        assert_eq!(direct_sum_datum(&h1, &empty).unwrap(), h1);
        assert!(direct_sum_datum(&h1, &catalog::holder(1, &[0.5, 0.4])).is_err());
    }

    #[test]
    fn identity_transform_has_unit_scale() {
        let d = catalog::young(&[2.0 / 3.0; 3]);
        let (d2, s) = apply_equivalence(&d, &EquivalenceTransform::identity(&d), &tol()).unwrap();
        assert_eq!(d2, d);
        assert_eq!(s, 1.0);
    }

    #[test]
    fn holder_rescaling_scale() {
        // C = 2, C_1 = C_2 = 1: scale = 1/|det C| = 1/2.
        let d = catalog::holder(1, &[0.5, 0.5]);
        let t = EquivalenceTransform {
            c: Mat::from_element(1, 1, 2.0),
            c_list: vec![Mat::identity(1, 1); 2],
        };
        let (_, s) = apply_equivalence(&d, &t, &tol()).unwrap();
        assert!((s - 0.5).abs() < 1e-15);
    }

    #[test]
    fn singular_transform_is_rejected() {
        let d = catalog::holder(2, &[0.5, 0.5]);
        let mut t = EquivalenceTransform::identity(&d);
        t.c = Mat::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(apply_equivalence(&d, &t, &tol()), Err(Error::Singular { .. })));
    }

    #[test]
    fn json_round_trip_and_error_paths() {
        let d = catalog::young(&[2.0 / 3.0; 3]);
        let back = BlDatum::from_json(&d.to_json()).unwrap();
        assert_eq!(back, d);
        let bad = r#"{"dim": 2, "maps": [{"matrix": [[1, 0]], "exponent": 1}, {"matrix": [[1, "x"]], "exponent": 1}]}"#;
        match BlDatum::from_json_str(bad) {
            Err(Error::Parse { path, .. }) => assert_eq!(path, "$.maps[1].matrix[0][1]"),
            other => panic!("unexpected {other:?}"),
        }
        let short = r#"{"dim": 2, "maps": [{"matrix": [[1]], "exponent": 1}]}"#;
        assert!(matches!(BlDatum::from_json_str(short), Err(Error::Parse { .. })));
        let huge = r#"{"dim": 1, "maps": [{"matrix": [[1e999]], "exponent": 1}]}"#;
        assert!(BlDatum::from_json_str(huge).is_err());
    }

    #[test]
    fn normalization_drops_zero_exponents() {
        let d = catalog::holder(2, &[1.0, 0.0]);
        let (n, keep) = d.normalized();
        assert_eq!(n.m(), 1);
        assert_eq!(keep, vec![0]);
    }

    fn random_matrix(r: usize, c: usize) -> impl Strategy<Value = Mat> {
        prop::collection::vec(-2.0f64..2.0, r * c).prop_map(move |v| Mat::from_vec(r, c, v))
    }

    fn invertible(k: usize) -> impl Strategy<Value = Mat> {
        random_matrix(k, k).prop_map(move |m| m + Mat::identity(k, k) * 5.0)
    }

    fn transform() -> impl Strategy<Value = EquivalenceTransform> {
        (invertible(2), invertible(1), invertible(1), invertible(1)).prop_map(|(c, a, b, d)| EquivalenceTransform {
            c,
            c_list: vec![a, b, d],
        })
    }

    proptest! {
        #[test]
        fn equivalence_is_functorial(t1 in transform(), t2 in transform()) {
            let d = catalog::young(&[0.9, 0.9, 0.2]);
            let (d1, s1) = apply_equivalence(&d, &t1, &tol()).unwrap();
            let (d12, s2) = apply_equivalence(&d1, &t2, &tol()).unwrap();
            let (dc, sc) = apply_equivalence(&d, &t1.then(&t2), &tol()).unwrap();
            prop_assert!(data_close(&d12, &dc, 1e-9));
            prop_assert!(((s1 * s2) / sc - 1.0).abs() < 1e-10);
        }

        #[test]
        fn restriction_quotient_dimensions(
            n in 2usize..=5,
            seed in prop::collection::vec(-1.0f64..1.0, 64),
            k in 1usize..=4,
        ) {
            let k = k.min(n - 1);
            let maps = vec![
                Mat::from_fn(2.min(n), n, |i, j| seed[(i * n + j) % 64]),
                Mat::from_fn(1, n, |_, j| seed[(17 + j) % 64]),
            ];
            let d = BlDatum::from_parts(n, maps, &[0.5, 0.5]).unwrap();
            let v = Subspace::span(&Mat::from_fn(n, k, |i, j| seed[(31 + i * k + j) % 64]), 1e-9);
            prop_assume!(v.dim() >= 1 && v.dim() < n);
            let r = restrict_datum(&d, &v, &tol()).unwrap();
            let q = quotient_datum(&d, &v, &tol()).unwrap();
            prop_assert_eq!(r.dim() + q.dim(), n);
            for j in 0..d.m() {
                prop_assert_eq!(r.target_dims()[j] + q.target_dims()[j], d.target_dims()[j]);
            }
        }
    }
}
