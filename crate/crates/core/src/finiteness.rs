//! Finiteness of the Brascamp–Lieb constant.
//!
//! Rank-one data are decided exactly through the flats of the vector
//! configuration. General data get a scaling check, a search for subspaces
//! violating the dimension condition, and a finiteness certificate from the
//! extremisability classification; anything else is `Undetermined`.

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::model::{BlDatum, GaussianInput, Tolerances};
use crate::solver;
use crate::structure::{self, criticality_threshold, dimension_sum, Decomposition, Extremisability, SearchBudget};
use crate::subspace::Subspace;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::{json, Value};

/// Tolerance on `n = Σ p_j n_j` and on subset inequalities.
pub const SCALING_TOL: f64 = 1e-9;
/// Largest map count for which every subset is materialized as a facet.
pub const MAX_FACET_MAPS: usize = 20;

/// Returns `(holds, n, Σ p_j n_j)`.
pub fn check_scaling(datum: &BlDatum) -> (bool, usize, f64) {
    let rhs: f64 = datum.maps().iter().map(|m| m.exponent * m.matrix.nrows() as f64).sum();
    let lhs = datum.dim();
    ((lhs as f64 - rhs).abs() <= SCALING_TOL, lhs, rhs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FinitenessStatus {
    ProvenFinite,
    ProvenInfinite,
    Undetermined,
}

impl FinitenessStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            FinitenessStatus::ProvenFinite => "ProvenFinite",
            FinitenessStatus::ProvenInfinite => "ProvenInfinite",
            FinitenessStatus::Undetermined => "Undetermined",
        }
    }
}

#[derive(Debug, Clone)]
pub enum Certificate {
    Extremiser {
        input: GaussianInput,
        blg_value: f64,
        residual: f64,
    },
    SemisimpleDecomposition(Decomposition),
    /// Every flat `F` of the vectors satisfies `Σ_{j∈F} p_j <= rank F`.
    RankOnePolytopeMembership {
        flats_checked: usize,
        max_slack_violation: f64,
    },
}

#[derive(Debug, Clone)]
pub enum Witness {
    ScalingFailure {
        lhs: usize,
        rhs: f64,
    },
    /// `dim V > Σ p_j dim(B_j V)`. For rank-one data `subset` lists the
    /// violating index set `I` (1-based) and `V = span{v_j : j ∈ I}⊥`.
    DimensionViolation {
        subspace: Subspace,
        dim: usize,
        dimension_sum: f64,
        defect: f64,
        subset: Option<Vec<usize>>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BudgetReport {
    pub budget: SearchBudget,
    pub candidates_examined: usize,
    pub random_subspaces_tested: usize,
    pub depth_reached: usize,
    pub extremisability: Option<&'static str>,
}

#[derive(Debug, Clone)]
pub struct FinitenessVerdict {
    pub status: FinitenessStatus,
    pub certificate: Option<Certificate>,
    pub witness: Option<Witness>,
    pub budget_report: Option<BudgetReport>,
}

impl FinitenessVerdict {
    fn finite(certificate: Certificate) -> Self {
        FinitenessVerdict {
            status: FinitenessStatus::ProvenFinite,
            certificate: Some(certificate),
            witness: None,
            budget_report: None,
        }
    }

    fn infinite(witness: Witness) -> Self {
        FinitenessVerdict {
            status: FinitenessStatus::ProvenInfinite,
            certificate: None,
            witness: Some(witness),
            budget_report: None,
        }
    }

    pub fn to_json(&self) -> Value {
        let certificate = self.certificate.as_ref().map(|c| match c {
            Certificate::Extremiser {
                input,
                blg_value,
                residual,
            } => json!({
                "kind": "Extremiser",
                "input": input.to_json(),
                "blg_value": blg_value,
                "residual": residual,
            }),
            Certificate::SemisimpleDecomposition(d) => json!({
                "kind": "SemisimpleDecomposition",
                "decomposition": d.to_json(),
            }),
            Certificate::RankOnePolytopeMembership {
                flats_checked,
                max_slack_violation,
            } => json!({
                "kind": "RankOnePolytopeMembership",
                "flats_checked": flats_checked,
                "max_subset_excess": max_slack_violation,
            }),
        });
        let witness = self.witness.as_ref().map(|w| match w {
            Witness::ScalingFailure { lhs, rhs } => json!({
                "kind": "ScalingFailure",
                "lhs": lhs,
                "rhs": rhs,
            }),
            Witness::DimensionViolation {
                subspace,
                dim,
                dimension_sum,
                defect,
                subset,
            } => json!({
                "kind": "DimensionViolation",
                "dim": dim,
                "dimension_sum": dimension_sum,
                "defect": defect,
                "subset": subset,
                "basis_rows": crate::linalg::to_rows(&subspace.basis().transpose()),
            }),
        });
        json!({
            "status": self.status.as_str(),
            "certificate": certificate,
            "witness": witness,
            "budget": self.budget_report.as_ref().map(|b| json!({
                "limits": b.budget.to_json(),
                "candidates_examined": b.candidates_examined,
                "random_subspaces_tested": b.random_subspaces_tested,
                "depth_reached": b.depth_reached,
                "extremisability": b.extremisability,
            })),
        })
    }
}

/// The vectors `v_j` of a rank-one datum.
fn rank_one_vectors(datum: &BlDatum) -> Result<Vec<DVector<f64>>> {
    if !datum.is_rank_one() {
        return Err(Error::Precondition("every target must be one-dimensional".into()));
    }
    Ok(datum
        .maps()
        .iter()
        .map(|m| DVector::from_iterator(datum.dim(), m.matrix.row(0).iter().copied()))
        .collect())
}

/// Incremental orthonormal basis for rank decisions on vector subsets.
#[derive(Clone)]
struct Span {
    q: Vec<DVector<f64>>,
    tol: f64,
}

impl Span {
    fn new(tol: f64) -> Self {
        Span { q: Vec::new(), tol }
    }

    fn residual(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut r = v.clone();
        // Two Gram-Schmidt passes keep the basis orthonormal to roundoff.
        for _ in 0..2 {
            for q in &self.q {
                let c = q.dot(&r);
                r.axpy(-c, q, 1.0);
            }
        }
        r
    }

    fn contains(&self, v: &DVector<f64>) -> bool {
        self.residual(v).norm() <= self.tol * v.norm()
    }

    /// Adds `v`; returns false (and leaves the span unchanged) if dependent.
    fn push(&mut self, v: &DVector<f64>) -> bool {
        let r = self.residual(v);
        let norm = r.norm();
        if norm <= self.tol * v.norm() || norm == 0.0 {
            return false;
        }
        self.q.push(r / norm);
        true
    }

    fn rank(&self) -> usize {
        self.q.len()
    }
}

/// Visits independent index sets of size `0..=max_size` in lexicographic
/// depth-first order, stopping early when `f` returns false.
fn for_each_independent(vs: &[DVector<f64>], max_size: usize, tol: f64, f: &mut dyn FnMut(&[usize], &Span) -> bool) {
    fn rec(
        vs: &[DVector<f64>],
        start: usize,
        max_size: usize,
        idx: &mut Vec<usize>,
        span: &Span,
        f: &mut dyn FnMut(&[usize], &Span) -> bool,
    ) -> bool {
        if !f(idx, span) {
            return false;
        }
        if idx.len() == max_size {
            return true;
        }
        for i in start..vs.len() {
            let mut next = span.clone();
            if next.push(&vs[i]) {
                idx.push(i);
                let go_on = rec(vs, i + 1, max_size, idx, &next, f);
                idx.pop();
                if !go_on {
                    return false;
                }
            }
        }
        true
    }
    rec(vs, 0, max_size, &mut Vec::new(), &Span::new(tol), f);
}

/// Exact finiteness decision for rank-one data: scaling, then
/// `Σ_{j∈F} p_j <= rank F` over every proper flat `F`. Flats are enumerated
/// as closures of independent sets, which covers every subset inequality
/// since nonnegative exponents make the closure the tightest set of a rank.
pub fn rank_one_finiteness(datum: &BlDatum, tol: &Tolerances) -> Result<FinitenessVerdict> {
    let vs = rank_one_vectors(datum)?;
    let (ok, lhs, rhs) = check_scaling(datum);
    if !ok {
        return Ok(FinitenessVerdict::infinite(Witness::ScalingFailure { lhs, rhs }));
    }
    let n = datum.dim();
    let p = datum.exponents();
    let mut flats = 0usize;
    let mut worst: Option<(f64, Vec<usize>, Span)> = None;
    for_each_independent(&vs, n.saturating_sub(1), tol.rank_tol, &mut |_, span| {
        flats += 1;
        let closure: Vec<usize> = (0..vs.len()).filter(|&j| span.contains(&vs[j])).collect();
        let excess = closure.iter().map(|&j| p[j]).sum::<f64>() - span.rank() as f64;
        if worst.as_ref().is_none_or(|(e, _, _)| excess > *e) {
            worst = Some((excess, closure, span.clone()));
        }
        true
    });
    let (excess, closure, span) = worst.expect("the empty set is always visited");
    if excess <= SCALING_TOL {
        return Ok(FinitenessVerdict::finite(Certificate::RankOnePolytopeMembership {
            flats_checked: flats,
            max_slack_violation: excess.max(0.0),
        }));
    }
    let mut basis = Mat::zeros(n, span.rank());
    for (c, q) in span.q.iter().enumerate() {
        basis.set_column(c, q);
    }
    let v = Subspace::span(&basis, tol.rank_tol).orthocomplement();
    let sum = dimension_sum(datum, &v, tol);
    Ok(FinitenessVerdict::infinite(Witness::DimensionViolation {
        dim: v.dim(),
        dimension_sum: sum,
        defect: sum - v.dim() as f64,
        subspace: v,
        subset: Some(closure.iter().map(|j| j + 1).collect()),
    }))
}

/// The finiteness region of a rank-one datum: vertices are basis indicators
/// and facets are `Σ_{j∈I} p_j <= d_I` over all nonempty subsets.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOnePolytope {
    pub n: usize,
    pub m: usize,
    pub vertices: Vec<Vec<u8>>,
    /// `(bitmask of I, d_I)`; bit `j` stands for map `j` (0-based).
    pub facets: Vec<(u32, usize)>,
}

impl RankOnePolytope {
    /// 1-based members of a facet subset.
    pub fn subset(mask: u32) -> Vec<usize> {
        (0..32).filter(|j| mask & (1 << j) != 0).map(|j| j + 1).collect()
    }

    /// Whether `p` lies in the polytope, up to `slack`.
    pub fn contains(&self, p: &[f64], slack: f64) -> bool {
        if p.len() != self.m || p.iter().any(|&x| x < -slack) {
            return false;
        }
        if (p.iter().sum::<f64>() - self.n as f64).abs() > slack {
            return false;
        }
        self.facets.iter().all(|&(mask, d)| {
            let s: f64 = (0..self.m).filter(|j| mask & (1 << j) != 0).map(|j| p[j]).sum();
            s <= d as f64 + slack
        })
    }

    /// One inequality per line: scaling as a pair of inequalities,
    /// nonnegativity, then `sum p[I] <= d_I` for each subset.
    pub fn h_representation(&self) -> String {
        let all: Vec<String> = (1..=self.m).map(|j| j.to_string()).collect();
        let mut out = String::new();
        out.push_str(&format!("sum p[{}] <= {}\n", all.join(" "), self.n));
        out.push_str(&format!("-sum p[{}] <= -{}\n", all.join(" "), self.n));
        for j in 1..=self.m {
            out.push_str(&format!("-p[{j}] <= 0\n"));
        }
        for &(mask, d) in &self.facets {
            let idx: Vec<String> = Self::subset(mask).iter().map(|j| j.to_string()).collect();
            out.push_str(&format!("sum p[{}] <= {}\n", idx.join(" "), d));
        }
        out
    }

    pub fn to_json(&self) -> Value {
        json!({
            "n": self.n,
            "m": self.m,
            "vertices": self.vertices,
            "facets": self.facets.iter().map(|&(mask, d)| json!({
                "subset": Self::subset(mask),
                "rank": d,
            })).collect::<Vec<_>>(),
        })
    }
}

pub fn rank_one_polytope(datum: &BlDatum, tol: &Tolerances) -> Result<RankOnePolytope> {
    let vs = rank_one_vectors(datum)?;
    let (n, m) = (datum.dim(), datum.m());
    if m > MAX_FACET_MAPS {
        return Err(Error::Budget(format!(
            "{m} maps exceed the facet enumeration cap of {MAX_FACET_MAPS}; \
             test membership per exponent with the finiteness command instead"
        )));
    }
    let mut vertices = Vec::new();
    for_each_independent(&vs, n, tol.rank_tol, &mut |idx, _| {
        if idx.len() == n {
            let mut v = vec![0u8; m];
            for &j in idx {
                v[j] = 1;
            }
            vertices.push(v);
        }
        true
    });
    if vertices.is_empty() {
        return Err(Error::Precondition("the vectors do not span the domain".into()));
    }
    let mut facets = Vec::with_capacity((1usize << m) - 1);
    fn rec(vs: &[DVector<f64>], start: usize, mask: u32, span: &Span, out: &mut Vec<(u32, usize)>) {
        for i in start..vs.len() {
            let mut next = span.clone();
            next.push(&vs[i]);
            let mask = mask | (1 << i);
            out.push((mask, next.rank()));
            rec(vs, i + 1, mask, &next, out);
        }
    }
    rec(&vs, 0, 0, &Span::new(tol.rank_tol), &mut facets);
    Ok(RankOnePolytope { n, m, vertices, facets })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedySelection {
    /// `I_j` as 1-based basis positions.
    pub index_sets: Vec<Vec<usize>>,
    /// `‖∧_{i∈I_j} B_j e_i‖`.
    pub wedge_norms: Vec<f64>,
}

impl GreedySelection {
    /// Values of `k` for which `Σ_j p_j |I_j ∩ {1..k}| > k + slack`.
    pub fn prefix_violations(&self, p: &[f64], slack: f64) -> Vec<usize> {
        let n = self
            .index_sets
            .iter()
            .flat_map(|s| s.iter().copied())
            .max()
            .unwrap_or(0);
        (0..=n)
            .filter(|&k| {
                let s: f64 = self
                    .index_sets
                    .iter()
                    .zip(p)
                    .map(|(set, pj)| pj * set.iter().filter(|&&i| i <= k).count() as f64)
                    .sum();
                s > k as f64 + slack
            })
            .collect()
    }

    pub fn to_json(&self) -> Value {
        json!({ "index_sets": self.index_sets, "wedge_norms": self.wedge_norms })
    }
}

/// Backwards greedy selection: `i ∈ I_j` iff `B_j e_i` is not in the span of
/// `{B_j e_i' : i' > i}`. `basis` holds `e_1..e_n` as orthonormal columns.
pub fn greedy_index_selection(datum: &BlDatum, basis: &Mat, tol: &Tolerances) -> Result<GreedySelection> {
    let n = datum.dim();
    if basis.nrows() != n || basis.ncols() != n {
        return Err(Error::Dimension(format!("basis must be {n}x{n}")));
    }
    if (basis.transpose() * basis - Mat::identity(n, n)).amax() > 1e-8 {
        return Err(Error::Precondition("basis is not orthonormal".into()));
    }
    let mut index_sets = Vec::with_capacity(datum.m());
    let mut wedge_norms = Vec::with_capacity(datum.m());
    for map in datum.maps() {
        let images = &map.matrix * basis;
        let scale = crate::linalg::spectral_norm(&map.matrix);
        let mut span = Span::new(tol.rank_tol);
        let mut chosen = Vec::new();
        for i in (0..n).rev() {
            let v = images.column(i).into_owned();
            if v.norm() > tol.rank_tol * scale && span.push(&v) {
                chosen.push(i);
            }
        }
        chosen.reverse();
        let mut sel = Mat::zeros(images.nrows(), chosen.len());
        for (c, &i) in chosen.iter().enumerate() {
            sel.set_column(c, &images.column(i));
        }
        wedge_norms.push(crate::linalg::det(&(sel.transpose() * &sel)).max(0.0).sqrt());
        index_sets.push(chosen.iter().map(|i| i + 1).collect());
    }
    Ok(GreedySelection {
        index_sets,
        wedge_norms,
    })
}

/// Orthonormalized standard-gaussian frames of every dimension `1..n-1`.
pub fn random_subspaces(n: usize, per_dim: usize, seed: u64) -> Vec<Subspace> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(per_dim * n.saturating_sub(1));
    for k in 1..n {
        for _ in 0..per_dim {
            let g = Mat::from_fn(n, k, |_, _| StandardNormal.sample(&mut rng));
            out.push(Subspace::span(&g, 1e-12));
        }
    }
    out
}

/// Finiteness pipeline for arbitrary data.
pub fn general_finiteness(
    datum: &BlDatum,
    budget: &SearchBudget,
    tol: &Tolerances,
    seed: u64,
) -> Result<FinitenessVerdict> {
    tol.validate()?;
    let (ok, lhs, rhs) = check_scaling(datum);
    if !ok {
        return Ok(FinitenessVerdict::infinite(Witness::ScalingFailure { lhs, rhs }));
    }
    if datum.is_rank_one() {
        return rank_one_finiteness(datum, tol);
    }
    let (reduced, kept) = datum.normalized();
    let n = reduced.dim();
    let threshold = criticality_threshold(&reduced);
    let violation = |v: &Subspace| -> Option<Witness> {
        let sum = dimension_sum(&reduced, v, tol);
        let defect = sum - v.dim() as f64;
        (defect < -threshold).then(|| Witness::DimensionViolation {
            subspace: v.clone(),
            dim: v.dim(),
            dimension_sum: sum,
            defect,
            subset: None,
        })
    };
    let mut report = BudgetReport {
        budget: *budget,
        candidates_examined: 0,
        random_subspaces_tested: 0,
        depth_reached: 0,
        extremisability: None,
    };
    // The whole space comes first: a nonzero common kernel violates the
    // condition on its own.
    let mut structured = Vec::new();
    if n > 0 {
        structured.push(Subspace::full(n));
    }
    let mut randoms = Vec::new();
    if n >= 2 {
        let (cands, depth) = structure::candidate_subspaces(&reduced, budget, tol, seed);
        report.depth_reached = depth;
        structured.extend(cands.into_iter().map(|c| c.subspace));
        randoms = random_subspaces(n, budget.random_per_dim, seed);
    }
    for (v, is_random) in structured
        .iter()
        .map(|v| (v, false))
        .chain(randoms.iter().map(|v| (v, true)))
    {
        if is_random {
            report.random_subspaces_tested += 1;
        } else {
            report.candidates_examined += 1;
        }
        if let Some(w) = violation(v) {
            let mut verdict = FinitenessVerdict::infinite(w);
            verdict.budget_report = Some(report);
            return Ok(verdict);
        }
    }
    classify_and_certify(datum, &reduced, &kept, budget, tol, seed, report)
}

fn classify_and_certify(
    datum: &BlDatum,
    reduced: &BlDatum,
    kept: &[usize],
    budget: &SearchBudget,
    tol: &Tolerances,
    seed: u64,
    mut report: BudgetReport,
) -> Result<FinitenessVerdict> {
    let verdict = structure::classify_extremisability(reduced, budget, tol, seed)?;
    report.extremisability = Some(verdict.status.as_str());
    if verdict.status == Extremisability::Extremisable {
        let outcome = solver::fixed_point_solve(reduced, None, tol, budget.solver_iterations, seed)?;
        let certificate = match (outcome.extremiser, outcome.blg_value) {
            (Some(a), Some(value)) => Certificate::Extremiser {
                input: lift_input(datum, kept, &a),
                blg_value: value,
                residual: outcome.residual,
            },
            _ => Certificate::SemisimpleDecomposition(verdict.decomposition),
        };
        let mut v = FinitenessVerdict::finite(certificate);
        v.budget_report = Some(report);
        return Ok(v);
    }
    Ok(FinitenessVerdict {
        status: FinitenessStatus::Undetermined,
        certificate: None,
        witness: None,
        budget_report: Some(report),
    })
}

/// Extends an input on the maps with positive exponents by identities.
fn lift_input(datum: &BlDatum, kept: &[usize], a: &GaussianInput) -> GaussianInput {
    let mut full: Vec<Mat> = datum.target_dims().into_iter().map(|k| Mat::identity(k, k)).collect();
    for (slot, &j) in kept.iter().enumerate() {
        full[j] = a.matrices()[slot].clone();
    }
    GaussianInput::new_unchecked(full)
}
