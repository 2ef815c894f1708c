//! Critical subspaces, critical pairs, decomposition into indecomposable
//! components and the extremisability classification.
//!
//! A nonzero proper subspace `V` is critical when its defect
//! `Σ p_j dim(B_j V) - dim V` vanishes. Defects are integer combinations of
//! the exponents, so a threshold separates zero from the nearest achievable
//! nonzero value.

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::model::{restrict_datum, BlDatum, EquivalenceTransform, Tolerances};
use crate::solver::{self, SolveStatus};
use crate::subspace::Subspace;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::{json, Value};

/// Tolerance used to recognise geometric data inside the search routines.
pub const GEOMETRIC_TOL: f64 = 1e-9;

/// Limits on the candidate searches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchBudget {
    /// Rounds of sum/intersection closure over the kernel/range generators.
    pub lattice_depth: usize,
    /// Cap on distinct candidate subspaces examined.
    pub max_candidates: usize,
    /// Iteration cap for the solves run by the searches.
    pub solver_iterations: usize,
    /// Random subspaces per dimension for dimension-condition falsification.
    pub random_per_dim: usize,
    /// Largest map count for exhaustive subset enumeration.
    pub max_subset_maps: usize,
}

impl SearchBudget {
    pub fn small() -> Self {
        SearchBudget {
            lattice_depth: 1,
            max_candidates: 200,
            solver_iterations: 3,
            random_per_dim: 20,
            max_subset_maps: 12,
        }
    }

    pub fn large() -> Self {
        SearchBudget {
            lattice_depth: 4,
            max_candidates: 200_000,
            solver_iterations: solver::DEFAULT_MAX_ITER,
            random_per_dim: 1000,
            max_subset_maps: 20,
        }
    }

    pub fn to_json(&self) -> Value {
        json!({
            "lattice_depth": self.lattice_depth,
            "max_candidates": self.max_candidates,
            "solver_iterations": self.solver_iterations,
            "random_per_dim": self.random_per_dim,
            "max_subset_maps": self.max_subset_maps,
        })
    }
}

impl Default for SearchBudget {
    fn default() -> Self {
        SearchBudget {
            lattice_depth: 3,
            max_candidates: 20_000,
            solver_iterations: solver::DEFAULT_MAX_ITER,
            random_per_dim: 200,
            max_subset_maps: 20,
        }
    }
}

/// `Σ p_j rank(B_j V) - dim V` for a nonzero proper `V`.
pub fn criticality_defect(datum: &BlDatum, v: &Subspace, tol: &Tolerances) -> Result<f64> {
    if v.ambient_dim() != datum.dim() {
        return Err(Error::Dimension("subspace does not live in the domain".into()));
    }
    if v.is_zero() || v.is_full() {
        return Err(Error::Precondition(
            "criticality is defined for nonzero proper subspaces".into(),
        ));
    }
    Ok(dimension_sum(datum, v, tol) - v.dim() as f64)
}

/// `Σ p_j dim(B_j V)` with ranks measured against `‖B_j‖`.
pub fn dimension_sum(datum: &BlDatum, v: &Subspace, tol: &Tolerances) -> f64 {
    datum
        .maps()
        .iter()
        .filter(|m| m.exponent > 0.0)
        .map(|m| {
            let scale = linalg::spectral_norm(&m.matrix);
            m.exponent * linalg::numerical_rank(&(&m.matrix * v.basis()), tol.rank_tol, scale) as f64
        })
        .sum()
}

/// Acceptance threshold for `|defect|`: `min(0.25, δ/2)` where `δ` is the
/// smallest nonzero `|Σ p_j k_j - d|` over `0 <= k_j <= n_j`, `0 < d < n`,
/// when that set is small enough to enumerate.
pub fn criticality_threshold(datum: &BlDatum) -> f64 {
    let dims = datum.target_dims();
    let p = datum.exponents();
    let count: f64 = dims.iter().map(|&k| (k + 1) as f64).product();
    if count > 2e5 || datum.dim() < 2 {
        return 0.25;
    }
    let mut sums = vec![0.0f64];
    for (k, pj) in dims.iter().zip(&p) {
        let mut next = Vec::with_capacity(sums.len() * (k + 1));
        for s in &sums {
            for c in 0..=*k {
                next.push(s + pj * c as f64);
            }
        }
        sums = next;
    }
    let mut smallest = f64::INFINITY;
    for s in &sums {
        for d in 1..datum.dim() {
            let x = (s - d as f64).abs();
            if x > 1e-9 {
                smallest = smallest.min(x);
            }
        }
    }
    0.25f64.min(smallest / 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CriticalSource {
    Lattice,
    Eigenspace,
    RankOne,
    UserSupplied,
}

impl CriticalSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            CriticalSource::Lattice => "Lattice",
            CriticalSource::Eigenspace => "Eigenspace",
            CriticalSource::RankOne => "RankOne",
            CriticalSource::UserSupplied => "UserSupplied",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticalReport {
    pub subspace: Subspace,
    pub defect: f64,
    pub source: CriticalSource,
}

impl CriticalReport {
    /// Report for a caller-chosen subspace.
    pub fn user(datum: &BlDatum, v: Subspace, tol: &Tolerances) -> Result<Self> {
        let defect = criticality_defect(datum, &v, tol)?;
        Ok(CriticalReport {
            subspace: v,
            defect,
            source: CriticalSource::UserSupplied,
        })
    }

    pub fn to_json(&self) -> Value {
        json!({
            "dim": self.subspace.dim(),
            "basis_rows": linalg::to_rows(&self.subspace.basis().transpose()),
            "defect": self.defect,
            "source": self.source.as_str(),
        })
    }
}

/// A candidate subspace together with where it came from.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub subspace: Subspace,
    pub source: CriticalSource,
}

/// Deduplicating candidate pool with cached projectors.
struct Pool {
    items: Vec<Candidate>,
    projectors: Vec<Mat>,
    cap: usize,
    tol: f64,
}

impl Pool {
    fn new(cap: usize, tol: f64) -> Self {
        Pool {
            items: Vec::new(),
            projectors: Vec::new(),
            cap,
            tol,
        }
    }

    fn full(&self) -> bool {
        self.items.len() >= self.cap
    }

    /// Adds a nonzero proper subspace unless already present.
    fn add(&mut self, v: Subspace, source: CriticalSource) -> bool {
        if v.is_zero() || v.is_full() || self.full() {
            return false;
        }
        let p = v.projector();
        let dup = self
            .items
            .iter()
            .zip(&self.projectors)
            .any(|(c, q)| c.subspace.dim() == v.dim() && (q - &p).norm() < self.tol);
        if dup {
            return false;
        }
        self.items.push(Candidate { subspace: v, source });
        self.projectors.push(p);
        true
    }
}

/// Generators `range(B_jᵀ)` then `ker(B_j)`, closed under sums and
/// intersections for `depth` rounds.
fn lattice_candidates(datum: &BlDatum, depth: usize, tol: &Tolerances, pool: &mut Pool) -> usize {
    let start = pool.items.len();
    let n = datum.dim();
    for m in datum.maps().iter().filter(|m| m.exponent > 0.0) {
        let range = Subspace::span(&m.matrix.transpose(), tol.rank_tol);
        pool.add(range, CriticalSource::Lattice);
    }
    for m in datum.maps().iter().filter(|m| m.exponent > 0.0) {
        let ker = Subspace::from_orthonormal_unchecked(linalg::null_space(&m.matrix, tol.rank_tol));
        if ker.ambient_dim() == n {
            pool.add(ker, CriticalSource::Lattice);
        }
    }
    let mut frontier: Vec<usize> = (start..pool.items.len()).collect();
    let mut reached = 0;
    for level in 1..=depth {
        if frontier.is_empty() || pool.full() {
            break;
        }
        reached = level;
        let upto = pool.items.len();
        let mut fresh = Vec::new();
        for &f in &frontier {
            for other in start..upto {
                if pool.full() {
                    break;
                }
                let (a, b) = (pool.items[f].subspace.clone(), pool.items[other].subspace.clone());
                for c in [a.sum(&b, tol.rank_tol), a.intersection(&b, tol.rank_tol)]
                    .into_iter()
                    .flatten()
                {
                    if pool.add(c, CriticalSource::Lattice) {
                        fresh.push(pool.items.len() - 1);
                    }
                }
            }
        }
        frontier = fresh;
    }
    reached
}

/// Eigenspace clusters and low-eigenvalue spans of `M` from a solve.
fn eigen_candidates(datum: &BlDatum, budget: &SearchBudget, tol: &Tolerances, seed: u64, pool: &mut Pool) {
    let Ok(outcome) = solver::fixed_point_solve(datum, None, tol, budget.solver_iterations, seed) else {
        return;
    };
    if let Some(v) = outcome.degeneration_subspace.clone() {
        pool.add(v.clone(), CriticalSource::Eigenspace);
        pool.add(v.orthocomplement(), CriticalSource::Eigenspace);
    }
    // Commutant eigenspaces of the normal form pull back to critical
    // subspaces, as do their partial sums.
    if let Some(a) = outcome.extremiser.as_ref() {
        if let Ok((geo, t)) = solver::normalize_to_geometric(datum, a, tol) {
            if let Ok(parts) = commutant_split(&geo, seed) {
                let mut acc = Subspace::zero(datum.dim());
                for part in parts {
                    if let Ok(v) = part.transform(&t.c, tol.rank_tol) {
                        pool.add(v.clone(), CriticalSource::Eigenspace);
                        if let Ok(s) = acc.sum(&v, tol.rank_tol) {
                            acc = s;
                            pool.add(acc.clone(), CriticalSource::Eigenspace);
                        }
                    }
                }
            }
        }
    }
    let m = solver::build_m(datum, &outcome.final_input);
    let e = linalg::sym_eig(&m);
    let n = e.values.len();
    let span_of = |idx: &[usize]| {
        let mut b = Mat::zeros(n, idx.len());
        for (c, &i) in idx.iter().enumerate() {
            b.set_column(c, &e.vectors.column(i));
        }
        Subspace::from_orthonormal_unchecked(b)
    };
    for cluster in eigen_clusters(&e.values, 1e-6) {
        pool.add(span_of(&cluster), CriticalSource::Eigenspace);
    }
    for k in 1..n {
        let idx: Vec<usize> = (0..k).collect();
        pool.add(span_of(&idx), CriticalSource::Eigenspace);
    }
}

/// Groups ascending eigenvalues whose consecutive relative gaps are at most `rel`.
fn eigen_clusters(values: &[f64], rel: f64) -> Vec<Vec<usize>> {
    let scale = values
        .iter()
        .map(|x| x.abs())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut out: Vec<Vec<usize>> = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        match out.last_mut() {
            Some(c) if (v - values[*c.last().unwrap()]).abs() <= rel * scale => c.push(i),
            _ => out.push(vec![i]),
        }
    }
    out
}

/// Calls `f` on every subset of `0..m` of size `1..=max_size` in
/// lexicographic order until it returns false or `limit` subsets were seen.
pub(crate) fn for_each_subset(m: usize, max_size: usize, limit: usize, mut f: impl FnMut(&[usize]) -> bool) -> bool {
    let mut seen = 0usize;
    let mut stack: Vec<usize> = Vec::new();
    fn rec(
        start: usize,
        m: usize,
        max_size: usize,
        limit: usize,
        seen: &mut usize,
        stack: &mut Vec<usize>,
        f: &mut dyn FnMut(&[usize]) -> bool,
    ) -> bool {
        for i in start..m {
            if *seen >= limit {
                return false;
            }
            stack.push(i);
            *seen += 1;
            if !f(stack) {
                stack.pop();
                return false;
            }
            if stack.len() < max_size && !rec(i + 1, m, max_size, limit, seen, stack, f) {
                stack.pop();
                return false;
            }
            stack.pop();
        }
        true
    }
    rec(0, m, max_size, limit, &mut seen, &mut stack, &mut f)
}

/// For rank-one data: spans of independent sets of vectors `v_j` (size below
/// `n`) and their orthogonal complements.
fn rank_one_candidates(datum: &BlDatum, budget: &SearchBudget, tol: &Tolerances, pool: &mut Pool) {
    if !datum.is_rank_one() || datum.m() > budget.max_subset_maps {
        return;
    }
    let n = datum.dim();
    let vectors: Vec<Mat> = datum.maps().iter().map(|m| m.matrix.transpose()).collect();
    for_each_subset(datum.m(), n.saturating_sub(1), budget.max_candidates, |idx| {
        let mut b = Mat::zeros(n, idx.len());
        for (c, &j) in idx.iter().enumerate() {
            b.set_column(c, &vectors[j].column(0));
        }
        if linalg::numerical_rank(&b, tol.rank_tol, 0.0) == idx.len() {
            let s = Subspace::span(&b, tol.rank_tol);
            pool.add(s.orthocomplement(), CriticalSource::RankOne);
            pool.add(s, CriticalSource::RankOne);
        }
        !pool.full()
    });
}

/// All structured candidate subspaces: lattice closure, solver eigenspaces
/// and, for rank-one data, spans of vector subsets.
pub fn candidate_subspaces(
    datum: &BlDatum,
    budget: &SearchBudget,
    tol: &Tolerances,
    seed: u64,
) -> (Vec<Candidate>, usize) {
    let mut pool = Pool::new(budget.max_candidates, tol.projector_tol);
    let depth = lattice_candidates(datum, budget.lattice_depth, tol, &mut pool);
    eigen_candidates(datum, budget, tol, seed, &mut pool);
    rank_one_candidates(datum, budget, tol, &mut pool);
    (pool.items, depth)
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub report: Option<CriticalReport>,
    pub candidates_examined: usize,
    pub depth_reached: usize,
}

impl SearchOutcome {
    pub fn to_json(&self) -> Value {
        json!({
            "critical": self.report.as_ref().map(CriticalReport::to_json),
            "candidates_examined": self.candidates_examined,
            "depth_reached": self.depth_reached,
        })
    }
}

/// First candidate with `|defect| <= criticality_threshold`, if any.
pub fn find_critical_subspace(
    datum: &BlDatum,
    budget: &SearchBudget,
    tol: &Tolerances,
    seed: u64,
) -> Result<SearchOutcome> {
    let threshold = criticality_threshold(datum);
    let (cands, depth) = candidate_subspaces(datum, budget, tol, seed);
    for (i, c) in cands.iter().enumerate() {
        let defect = criticality_defect(datum, &c.subspace, tol)?;
        if defect.abs() <= threshold {
            return Ok(SearchOutcome {
                report: Some(CriticalReport {
                    subspace: c.subspace.clone(),
                    defect,
                    source: c.source,
                }),
                candidates_examined: i + 1,
                depth_reached: depth,
            });
        }
    }
    Ok(SearchOutcome {
        report: None,
        candidates_examined: cands.len(),
        depth_reached: depth,
    })
}

/// Whether `B_j V` and `B_j W` are complementary in every target and `V`, `W`
/// are complementary in the domain.
pub fn is_critical_pair(datum: &BlDatum, v: &Subspace, w: &Subspace, tol: &Tolerances) -> Result<bool> {
    let complementary = |a: &Subspace, b: &Subspace, total: usize| -> Result<bool> {
        Ok(a.dim() + b.dim() == total && a.sum(b, tol.rank_tol)?.dim() == total)
    };
    if !complementary(v, w, datum.dim())? {
        return Ok(false);
    }
    for m in datum.maps() {
        let bv = v.image(&m.matrix, tol.rank_tol)?;
        let bw = w.image(&m.matrix, tol.rank_tol)?;
        if !complementary(&bv, &bw, m.matrix.nrows())? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Completes `V` to a critical pair `(V, W)`. Geometric data test `W = V⊥`;
/// other data are first brought to geometric normal form with a converged
/// extremiser, and `W` is pulled back through the transform.
pub fn find_critical_pair(
    datum: &BlDatum,
    v: &Subspace,
    tol: &Tolerances,
    max_iter: usize,
) -> Result<Option<(Subspace, Subspace)>> {
    if v.ambient_dim() != datum.dim() {
        return Err(Error::Dimension("subspace does not live in the domain".into()));
    }
    if v.is_zero() || v.is_full() {
        return Err(Error::Precondition("V must be nonzero and proper".into()));
    }
    let w = if solver::is_geometric(datum, GEOMETRIC_TOL) {
        v.orthocomplement()
    } else {
        let (reduced, _) = datum.normalized();
        let outcome = solver::fixed_point_solve(&reduced, None, tol, max_iter, 0)?;
        let Some(a) = outcome.extremiser else {
            return Ok(None);
        };
        let (_, t) = solver::normalize_to_geometric(&reduced, &a, tol)?;
        let c_inv = t.c.clone().try_inverse().ok_or_else(|| Error::Singular {
            reason: "normalizing transform".into(),
            null_space: None,
        })?;
        let v_geo = v.transform(&c_inv, tol.rank_tol)?;
        v_geo.orthocomplement().transform(&t.c, tol.rank_tol)?
    };
    Ok(is_critical_pair(datum, v, &w, tol)?.then(|| (v.clone(), w)))
}

#[derive(Debug, Clone)]
pub struct Component {
    pub subspace: Subspace,
    pub datum: BlDatum,
}

#[derive(Debug, Clone)]
pub struct Decomposition {
    pub components: Vec<Component>,
    /// `C` stacks the component bases and `C_j` the bases of their images,
    /// so that applying it yields the direct sum of the component data.
    pub transform: EquivalenceTransform,
    pub method: &'static str,
}

impl Decomposition {
    pub fn to_json(&self) -> Value {
        json!({
            "method": self.method,
            "components": self.components.iter().map(|c| json!({
                "dim": c.subspace.dim(),
                "basis_rows": linalg::to_rows(&c.subspace.basis().transpose()),
                "target_dims": c.datum.target_dims(),
            })).collect::<Vec<_>>(),
        })
    }
}

/// Splits the datum into components along critical pairs.
///
/// Rank-one data use the connected components of the relation `i ⋈ j`
/// (some `I` makes both `I ∪ {i}` and `I ∪ {j}` bases). Geometric data use
/// the eigenspaces of a random symmetric matrix commuting with every
/// `B_jᵀ B_j`; these are common invariant subspaces. Other data are
/// normalized to geometric form through a converged extremiser first; when
/// no extremiser is found the datum is returned as a single component.
pub fn decompose(datum: &BlDatum, budget: &SearchBudget, tol: &Tolerances, seed: u64) -> Result<Decomposition> {
    if datum.has_zero_exponent() {
        return Err(Error::Precondition(
            "datum has zero exponents; call normalized() first".into(),
        ));
    }
    let n = datum.dim();
    let (parts, method) = if n == 0 {
        (vec![], "trivial")
    } else if datum.is_rank_one() {
        (rank_one_components(datum, tol), "rank-one relation")
    } else if solver::is_geometric(datum, GEOMETRIC_TOL) {
        (commutant_split(datum, seed)?, "commutant eigenspaces")
    } else {
        let outcome = solver::fixed_point_solve(datum, None, tol, budget.solver_iterations, seed)?;
        match outcome.extremiser {
            Some(a) => {
                let (geo, t) = solver::normalize_to_geometric(datum, &a, tol)?;
                let parts = commutant_split(&geo, seed)?
                    .into_iter()
                    .map(|v| v.transform(&t.c, tol.rank_tol))
                    .collect::<Result<Vec<_>>>()?;
                (parts, "normal form + commutant eigenspaces")
            }
            None => (vec![Subspace::full(n)], "none (no extremiser within budget)"),
        }
    };
    assemble(datum, parts, method, tol)
}

fn assemble(datum: &BlDatum, parts: Vec<Subspace>, method: &'static str, tol: &Tolerances) -> Result<Decomposition> {
    let n = datum.dim();
    let whole = || vec![Subspace::full(n)];
    let parts = if parts.is_empty() && n > 0 { whole() } else { parts };
    let build = |parts: &[Subspace]| -> Result<Option<Decomposition>> {
        let mut c = Mat::zeros(n, 0);
        let mut c_list: Vec<Mat> = datum.target_dims().into_iter().map(|k| Mat::zeros(k, 0)).collect();
        let mut components = Vec::with_capacity(parts.len());
        for v in parts {
            c = linalg::hstack(&c, v.basis());
            for (cj, m) in c_list.iter_mut().zip(datum.maps()) {
                *cj = linalg::hstack(cj, v.image(&m.matrix, tol.rank_tol)?.basis());
            }
            components.push(Component {
                subspace: v.clone(),
                datum: restrict_datum(datum, v, tol)?,
            });
        }
        let square = c.ncols() == n && c_list.iter().all(|m| m.ncols() == m.nrows());
        Ok(square.then_some(Decomposition {
            components,
            transform: EquivalenceTransform { c, c_list },
            method,
        }))
    };
    match build(&parts)? {
        Some(d) => Ok(d),
        None => Ok(build(&whole())?.expect("a single component is always square")),
    }
}

/// Matroid components of the vectors `v_j`: unions of fundamental circuits
/// with respect to a greedy basis. Component `c` lives on the subspace
/// annihilated by every `v_j` outside `c`.
fn rank_one_components(datum: &BlDatum, tol: &Tolerances) -> Vec<Subspace> {
    let n = datum.dim();
    let m = datum.m();
    let vec_of = |j: usize| datum.matrix(j).transpose();
    let mut basis: Vec<usize> = Vec::new();
    let mut cols = Mat::zeros(n, 0);
    for j in 0..m {
        let trial = linalg::hstack(&cols, &vec_of(j));
        if linalg::numerical_rank(&trial, tol.rank_tol, 0.0) > basis.len() {
            basis.push(j);
            cols = trial;
        }
    }
    // Union-find over map indices.
    let mut parent: Vec<usize> = (0..m).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        p[x] = r;
        r
    }
    if basis.len() == n {
        let pinv = linalg::pseudo_inverse(&cols, 1e-14);
        for j in (0..m).filter(|j| !basis.contains(j)) {
            let coeffs = &pinv * vec_of(j);
            let scale = coeffs.amax().max(1e-300);
            for (k, &b) in basis.iter().enumerate() {
                if coeffs[k].abs() > 1e-9 * scale {
                    let (ra, rb) = (find(&mut parent, j), find(&mut parent, b));
                    parent[ra] = rb;
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut roots: Vec<usize> = Vec::new();
    for j in 0..m {
        let r = find(&mut parent, j);
        match roots.iter().position(|&x| x == r) {
            Some(g) => groups[g].push(j),
            None => {
                roots.push(r);
                groups.push(vec![j]);
            }
        }
    }
    if groups.len() < 2 || basis.len() < n {
        return vec![Subspace::full(n)];
    }
    groups
        .iter()
        .map(|g| {
            let others: Vec<usize> = (0..m).filter(|j| !g.contains(j)).collect();
            let mut rows = Mat::zeros(others.len(), n);
            for (r, &j) in others.iter().enumerate() {
                rows.set_row(r, &datum.matrix(j).row(0));
            }
            Subspace::from_orthonormal_unchecked(linalg::null_space(&rows, tol.rank_tol))
        })
        .collect()
}

/// Basis of the symmetric matrices commuting with every `B_jᵀ B_j`.
fn commutant_basis(datum: &BlDatum) -> Vec<Mat> {
    let n = datum.dim();
    let mut params = Vec::new();
    for a in 0..n {
        for b in a..n {
            let mut e = Mat::zeros(n, n);
            e[(a, b)] = 1.0;
            e[(b, a)] = 1.0;
            params.push(e);
        }
    }
    let projectors: Vec<Mat> = datum.maps().iter().map(|m| m.matrix.transpose() * &m.matrix).collect();
    let per = n * n;
    let mut l = Mat::zeros(per * projectors.len(), params.len());
    for (k, e) in params.iter().enumerate() {
        for (j, p) in projectors.iter().enumerate() {
            let c = e * p - p * e;
            for (idx, x) in c.iter().enumerate() {
                l[(j * per + idx, k)] = *x;
            }
        }
    }
    let null = if projectors.is_empty() {
        Mat::identity(params.len(), params.len())
    } else {
        // Absolute cutoff: for orthogonal maps the equations vanish to roundoff.
        let scale = projectors.iter().map(linalg::spectral_norm).fold(1.0, f64::max);
        linalg::orth_complement(&linalg::column_space(&l.transpose(), 1e-8, scale))
    };
    (0..null.ncols())
        .map(|c| {
            let mut x = Mat::zeros(n, n);
            for (k, e) in params.iter().enumerate() {
                x += e * null[(k, c)];
            }
            x
        })
        .collect()
}

/// Eigenspaces of a random element of the commutant; retried up to 8 times
/// when two eigenvalue clusters are suspiciously close.
fn commutant_split(datum: &BlDatum, seed: u64) -> Result<Vec<Subspace>> {
    let n = datum.dim();
    let basis = commutant_basis(datum);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c0de);
    let mut last = vec![Subspace::full(n)];
    for _ in 0..8 {
        let mut x = Mat::zeros(n, n);
        for b in &basis {
            let r: f64 = StandardNormal.sample(&mut rng);
            x += b * r;
        }
        let e = linalg::sym_eig(&x);
        let clusters = eigen_clusters(&e.values, 1e-7);
        let spread = e.values.last().copied().unwrap_or(0.0) - e.values.first().copied().unwrap_or(0.0);
        let min_gap = clusters
            .windows(2)
            .map(|w| e.values[w[1][0]] - e.values[*w[0].last().unwrap()])
            .fold(f64::INFINITY, f64::min);
        last = clusters
            .iter()
            .map(|c| {
                let mut b = Mat::zeros(n, c.len());
                for (k, &i) in c.iter().enumerate() {
                    b.set_column(k, &e.vectors.column(i));
                }
                Subspace::from_orthonormal_unchecked(b)
            })
            .collect();
        if clusters.len() < 2 || min_gap > 1e-4 * spread.max(1e-300) {
            break;
        }
    }
    Ok(last)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extremisability {
    Extremisable,
    NotExtremisable,
    Undetermined,
}

impl Extremisability {
    pub fn as_str(&self) -> &'static str {
        match self {
            Extremisability::Extremisable => "Extremisable",
            Extremisability::NotExtremisable => "NotExtremisable",
            Extremisability::Undetermined => "Undetermined",
        }
    }
}

/// What was learned about one component.
#[derive(Debug, Clone)]
pub struct ComponentEvidence {
    pub dim: usize,
    pub search: Option<SearchOutcome>,
    pub solve_status: SolveStatus,
    pub blg_value: Option<f64>,
}

impl ComponentEvidence {
    pub fn simple_within_budget(&self) -> bool {
        self.search.as_ref().is_none_or(|s| s.report.is_none())
    }
}

#[derive(Debug, Clone)]
pub struct ExtremisabilityVerdict {
    pub status: Extremisability,
    pub decomposition: Decomposition,
    pub evidence: Vec<ComponentEvidence>,
}

impl ExtremisabilityVerdict {
    /// A certified critical subspace of some component, mapped back into the
    /// domain of the datum.
    pub fn certified_critical(&self) -> Option<(usize, &CriticalReport)> {
        self.evidence
            .iter()
            .enumerate()
            .find_map(|(i, e)| e.search.as_ref().and_then(|s| s.report.as_ref()).map(|r| (i, r)))
    }

    pub fn to_json(&self) -> Value {
        json!({
            "status": self.status.as_str(),
            "decomposition": self.decomposition.to_json(),
            "components": self.evidence.iter().map(|e| json!({
                "dim": e.dim,
                "simple_within_budget": e.simple_within_budget(),
                "search": e.search.as_ref().map(SearchOutcome::to_json),
                "solve_status": e.solve_status.as_str(),
                "blg_value": e.blg_value,
            })).collect::<Vec<_>>(),
        })
    }
}

/// Classifies extremisability: decomposes, then searches each component for
/// critical subspaces and runs the solver on it.
pub fn classify_extremisability(
    datum: &BlDatum,
    budget: &SearchBudget,
    tol: &Tolerances,
    seed: u64,
) -> Result<ExtremisabilityVerdict> {
    let lhs = datum.dim() as f64;
    let rhs: f64 = datum.maps().iter().map(|m| m.exponent * m.matrix.nrows() as f64).sum();
    if (lhs - rhs).abs() > 1e-9 {
        return Err(Error::NotApplicable(format!(
            "scaling condition fails ({lhs} vs {rhs}); the constant is infinite"
        )));
    }
    let decomposition = decompose(datum, budget, tol, seed)?;
    let mut evidence = Vec::with_capacity(decomposition.components.len());
    for comp in &decomposition.components {
        let dim = comp.datum.dim();
        let search = if dim >= 2 {
            Some(find_critical_subspace(&comp.datum, budget, tol, seed)?)
        } else {
            None
        };
        let solve = solver::fixed_point_solve(&comp.datum, None, tol, budget.solver_iterations, seed)?;
        evidence.push(ComponentEvidence {
            dim,
            search,
            solve_status: solve.status,
            blg_value: solve.blg_value,
        });
    }
    let all_simple = evidence
        .iter()
        .all(|e| e.simple_within_budget() && e.solve_status == SolveStatus::Converged);
    let some_broken = evidence
        .iter()
        .any(|e| !e.simple_within_budget() && e.solve_status == SolveStatus::Degenerated);
    let status = if all_simple {
        Extremisability::Extremisable
    } else if some_broken {
        Extremisability::NotExtremisable
    } else {
        Extremisability::Undetermined
    };
    Ok(ExtremisabilityVerdict {
        status,
        decomposition,
        evidence,
    })
}

/// Constants of a datum and of its restriction and quotient through a
/// critical subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorizationCheck {
    pub blg: Option<f64>,
    pub blg_restricted: Option<f64>,
    pub blg_quotient: Option<f64>,
    /// `|BL_g(B) - BL_g(B_V) BL_g(B_{H/V})| / BL_g(B)` when all three exist.
    pub relative_error: Option<f64>,
}

impl FactorizationCheck {
    pub fn to_json(&self) -> Value {
        json!({
            "blg": self.blg,
            "blg_restricted": self.blg_restricted,
            "blg_quotient": self.blg_quotient,
            "relative_error": self.relative_error,
        })
    }
}

pub fn verify_factorization(
    datum: &BlDatum,
    report: &CriticalReport,
    tol: &Tolerances,
    max_iter: usize,
) -> Result<FactorizationCheck> {
    let defect = criticality_defect(datum, &report.subspace, tol)?;
    if defect.abs() > 0.25 {
        return Err(Error::Precondition(format!(
            "subspace is not critical (defect {defect})"
        )));
    }
    let solve = |d: &BlDatum| -> Result<Option<f64>> {
        let (reduced, _) = d.normalized();
        Ok(solver::fixed_point_solve(&reduced, None, tol, max_iter, 0)?.blg_value)
    };
    let blg = solve(datum)?;
    let blg_restricted = solve(&crate::model::restrict_datum(datum, &report.subspace, tol)?)?;
    let blg_quotient = solve(&crate::model::quotient_datum(datum, &report.subspace, tol)?)?;
    let relative_error = match (blg, blg_restricted, blg_quotient) {
        (Some(a), Some(b), Some(c)) => Some((a - b * c).abs() / a),
        _ => None,
    };
    Ok(FactorizationCheck {
        blg,
        blg_restricted,
        blg_quotient,
        relative_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::model::{apply_equivalence, data_close, direct_sum_datum};

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn defect_examples() {
        let lw = catalog::loomis_whitney();
        let plane = Subspace::coordinate(3, &[0, 1]);
        assert!(criticality_defect(&lw, &plane, &tol()).unwrap().abs() < 1e-12);
        let h = catalog::holder(2, &[0.5, 0.5]);
        let line = Subspace::span(&Mat::from_column_slice(2, 1, &[0.3, -1.2]), 1e-9);
        assert!(criticality_defect(&h, &line, &tol()).unwrap().abs() < 1e-12);
        let y = catalog::young(&[2.0 / 3.0; 3]);
        let x_axis = Subspace::coordinate(2, &[0]);
        assert!((criticality_defect(&y, &x_axis, &tol()).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!(criticality_defect(&y, &Subspace::full(2), &tol()).is_err());
        assert!(criticality_defect(&y, &Subspace::zero(2), &tol()).is_err());
    }

    #[test]
    fn threshold_halves_small_gaps() {
        assert_eq!(criticality_threshold(&catalog::loomis_whitney()), 0.25);
        // Young with 2/3 exponents: nonzero defects are multiples of 1/3.
        let t = criticality_threshold(&catalog::young(&[2.0 / 3.0; 3]));
        assert!((t - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn search_examples() {
        let lw = catalog::loomis_whitney();
        let r = find_critical_subspace(&lw, &SearchBudget::default(), &tol(), 0).unwrap();
        let rep = r.report.unwrap();
        assert_eq!(rep.subspace.dim(), 2);
        assert!(rep.defect.abs() < 1e-12);
        let is_coordinate_plane = (0..3).any(|k| {
            let axes: Vec<usize> = (0..3).filter(|&i| i != k).collect();
            rep.subspace.approx_eq(&Subspace::coordinate(3, &axes), 1e-8)
        });
        assert!(is_coordinate_plane);

        let y = catalog::young(&[2.0 / 3.0; 3]);
        assert!(find_critical_subspace(&y, &SearchBudget::default(), &tol(), 0)
            .unwrap()
            .report
            .is_none());

        let edge = catalog::young(&[1.0, 0.5, 0.5]);
        let rep = find_critical_subspace(&edge, &SearchBudget::default(), &tol(), 0)
            .unwrap()
            .report
            .unwrap();
        assert!(rep.subspace.approx_eq(&Subspace::coordinate(2, &[1]), 1e-8));
    }

    #[test]
    fn critical_pair_examples() {
        let h = catalog::holder(2, &[0.5, 0.5]);
        let (_, w) = find_critical_pair(&h, &Subspace::coordinate(2, &[0]), &tol(), 1000)
            .unwrap()
            .unwrap();
        assert!(w.approx_eq(&Subspace::coordinate(2, &[1]), 1e-8));

        let lw = catalog::loomis_whitney();
        let (_, w) = find_critical_pair(&lw, &Subspace::coordinate(3, &[0, 1]), &tol(), 1000)
            .unwrap()
            .unwrap();
        assert!(w.approx_eq(&Subspace::coordinate(3, &[2]), 1e-8));

        let y = catalog::young(&[2.0 / 3.0; 3]);
        for v in [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.3, -0.7]] {
            let line = Subspace::span(&Mat::from_column_slice(2, 1, &v), 1e-9);
            assert!(find_critical_pair(&y, &line, &tol(), 1000).unwrap().is_none());
        }
    }

    #[test]
    fn decomposition_examples() {
        let h = decompose(&catalog::holder(2, &[0.5, 0.5]), &SearchBudget::default(), &tol(), 0).unwrap();
        assert_eq!(
            h.components.iter().map(|c| c.subspace.dim()).collect::<Vec<_>>(),
            vec![1, 1]
        );
        let y = decompose(&catalog::young(&[2.0 / 3.0; 3]), &SearchBudget::default(), &tol(), 0).unwrap();
        assert_eq!(y.components.len(), 1);
        let lw = decompose(&catalog::loomis_whitney(), &SearchBudget::default(), &tol(), 0).unwrap();
        assert_eq!(lw.components.len(), 3);
    }

    #[test]
    fn decomposition_reassembles() {
        let young = catalog::young(&[2.0 / 3.0; 3]);
        let sum = direct_sum_datum(&young, &young).unwrap();
        let dec = decompose(&sum, &SearchBudget::default(), &tol(), 1).unwrap();
        assert_eq!(dec.components.len(), 2);
        let mut product = 1.0;
        for c in &dec.components {
            assert_eq!(c.subspace.dim(), 2);
            let o = solver::fixed_point_solve(&c.datum, None, &tol(), 1000, 0).unwrap();
            product *= o.blg_value.unwrap();
        }
        let (moved, scale) = apply_equivalence(&sum, &dec.transform, &tol()).unwrap();
        let rebuilt = dec.components[1..]
            .iter()
            .fold(dec.components[0].datum.clone(), |acc, c| {
                direct_sum_datum(&acc, &c.datum).unwrap()
            });
        assert!(data_close(&moved, &rebuilt, 1e-9));
        // Components need not be in normal form, but their constants multiply
        // to the transformed whole.
        assert!(
            (product - scale * 0.75).abs() < 1e-8 * product,
            "{product} vs {}",
            scale * 0.75
        );
    }

    #[test]
    fn classification_examples() {
        let b = SearchBudget::default();
        let v = classify_extremisability(&catalog::young(&[2.0 / 3.0; 3]), &b, &tol(), 0).unwrap();
        assert_eq!(v.status, Extremisability::Extremisable);
        let v = classify_extremisability(&catalog::young(&[1.0, 0.5, 0.5]), &b, &tol(), 0).unwrap();
        assert_eq!(v.status, Extremisability::NotExtremisable);
        let (_, rep) = v.certified_critical().unwrap();
        assert!(rep.defect.abs() <= 0.25);
        let v = classify_extremisability(&catalog::holder(2, &[0.5, 0.5]), &b, &tol(), 0).unwrap();
        assert_eq!(v.status, Extremisability::Extremisable);
        assert_eq!(v.decomposition.components.len(), 2);
        assert!(matches!(
            classify_extremisability(&catalog::young(&[1.0, 1.0, 1.0]), &b, &tol(), 0),
            Err(Error::NotApplicable(_))
        ));
    }

    #[test]
    fn factorization_examples() {
        let lw = catalog::loomis_whitney();
        let rep = CriticalReport::user(&lw, Subspace::coordinate(3, &[0, 1]), &tol()).unwrap();
        let f = verify_factorization(&lw, &rep, &tol(), 1000).unwrap();
        assert!(f.relative_error.unwrap() < 1e-8);
        let h = catalog::holder(2, &[0.5, 0.5]);
        let rep = CriticalReport::user(&h, Subspace::coordinate(2, &[0]), &tol()).unwrap();
        let f = verify_factorization(&h, &rep, &tol(), 1000).unwrap();
        assert!((f.blg.unwrap() - 1.0).abs() < 1e-12 && f.relative_error.unwrap() < 1e-12);
        let y = catalog::young(&[2.0 / 3.0; 3]);
        let rep = CriticalReport::user(&y, Subspace::coordinate(2, &[0]), &tol());
        assert!(verify_factorization(&y, &rep.unwrap(), &tol(), 100).is_err());
    }

    #[test]
    fn direct_sum_factorization_through_summand() {
        let young = catalog::young(&[2.0 / 3.0; 3]);
        let frame = catalog::frame_120();
        let sum = direct_sum_datum(&young, &frame).unwrap();
        let rep = CriticalReport::user(&sum, Subspace::coordinate(4, &[0, 1]), &tol()).unwrap();
        assert!(rep.defect.abs() < 1e-12);
        let f = verify_factorization(&sum, &rep, &tol(), 1000).unwrap();
        assert!(f.relative_error.unwrap() < 1e-8);
    }

    /// Well-conditioned random matrix `I + 0.3 G`.
    fn perturbation(n: usize, rng: &mut ChaCha8Rng) -> Mat {
        Mat::identity(n, n)
            + Mat::from_fn(n, n, |_, _| {
                let g: f64 = StandardNormal.sample(&mut *rng);
                0.3 * g
            })
    }

    fn scrambled(d: &BlDatum, seed: u64) -> BlDatum {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = EquivalenceTransform {
            c: perturbation(d.dim(), &mut rng),
            c_list: d.target_dims().into_iter().map(|k| perturbation(k, &mut rng)).collect(),
        };
        apply_equivalence(d, &t, &tol()).unwrap().0
    }

    /// A direct sum of two equal-exponent summands and its component dimensions.
    fn summed(kind: usize, a: f64) -> (BlDatum, Vec<usize>) {
        match kind % 3 {
            0 => {
                let b = 2.0 - 2.0 * a;
                let y = catalog::young(&[a, a, b]);
                (direct_sum_datum(&y, &y).unwrap(), vec![2, 2])
            }
            1 => {
                let h1 = catalog::holder(1, &[a, 1.0 - a]);
                let h2 = catalog::holder(2, &[a, 1.0 - a]);
                (direct_sum_datum(&h1, &h2).unwrap(), vec![1, 1, 1])
            }
            _ => {
                let f = catalog::frame_120();
                (
                    direct_sum_datum(&f, &catalog::young(&[2.0 / 3.0; 3])).unwrap(),
                    vec![2, 2],
                )
            }
        }
    }

    fn geometric(kind: usize) -> BlDatum {
        match kind % 4 {
            0 => catalog::holder(3, &[0.25, 0.75]),
            1 => catalog::loomis_whitney(),
            2 => catalog::frame_120(),
            _ => {
                let (d, _) = summed(2, 0.0);
                let a = solver::fixed_point_solve(&d, None, &tol(), 1000, 0)
                    .unwrap()
                    .extremiser
                    .unwrap();
                solver::normalize_to_geometric(&d, &a, &tol()).unwrap().0
            }
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]

        #[test]
        fn decomposition_is_honest(kind in 0usize..3, a in 0.55f64..0.95, seed in 1u64..1000) {
            let (sum, dims) = summed(kind, a);
            let d = scrambled(&sum, seed);
            let dec = decompose(&d, &SearchBudget::default(), &tol(), seed).unwrap();
            let mut got: Vec<usize> = dec.components.iter().map(|c| c.subspace.dim()).collect();
            got.sort();
            proptest::prop_assert_eq!(got, dims);
            let (moved, _) = apply_equivalence(&d, &dec.transform, &tol()).unwrap();
            let rebuilt = dec.components[1..]
                .iter()
                .fold(dec.components[0].datum.clone(), |acc, c| direct_sum_datum(&acc, &c.datum).unwrap());
            for (x, y) in moved.maps().iter().zip(rebuilt.maps()) {
                let kx = Subspace::from_orthonormal_unchecked(linalg::null_space(&x.matrix, 1e-9));
                let ky = Subspace::from_orthonormal_unchecked(linalg::null_space(&y.matrix, 1e-9));
                proptest::prop_assert!(kx.distance(&ky) < 1e-6);
            }
            for c in &dec.components {
                proptest::prop_assert!(crate::model::validate_datum(&c.datum, &tol()).non_degenerate);
            }
        }

        #[test]
        fn eigenspaces_of_geometric_extremisers_are_critical(kind in 0usize..4, seed in 1u64..1000) {
            let d = geometric(kind);
            let o = solver::fixed_point_solve(&d, None, &tol(), 1000, seed).unwrap();
            proptest::prop_assert!(o.converged());
            let m = solver::build_m(&d, o.extremiser.as_ref().unwrap());
            let e = linalg::sym_eig(&m);
            for cluster in eigen_clusters(&e.values, 1e-5) {
                if cluster.len() == d.dim() {
                    continue;
                }
                let mut b = Mat::zeros(d.dim(), cluster.len());
                for (k, &i) in cluster.iter().enumerate() {
                    b.set_column(k, &e.vectors.column(i));
                }
                let v = Subspace::from_orthonormal_unchecked(b);
                proptest::prop_assert!(criticality_defect(&d, &v, &tol()).unwrap().abs() <= 0.25);
            }
        }

        #[test]
        fn critical_pairs_are_critical(kind in 0usize..4, seed in 0u64..1000, k in 1usize..3) {
            let d = geometric(kind);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // Mix random lines with coordinate subspaces, which are often critical.
            let v = if seed % 2 == 0 {
                let k = k.min(d.dim() - 1);
                Subspace::span(&Mat::from_fn(d.dim(), k, |_, _| StandardNormal.sample(&mut rng)), 1e-12)
            } else {
                let k = k.min(d.dim() - 1);
                Subspace::coordinate(d.dim(), &(0..k).collect::<Vec<_>>())
            };
            if let Some((v, w)) = find_critical_pair(&d, &v, &tol(), 1000).unwrap() {
                proptest::prop_assert!(criticality_defect(&d, &v, &tol()).unwrap().abs() <= 0.25);
                proptest::prop_assert!(criticality_defect(&d, &w, &tol()).unwrap().abs() <= 0.25);
            }
        }

        #[test]
        fn found_critical_subspaces_split_scaling(kind in 0usize..3, a in 0.55f64..0.95, seed in 1u64..1000) {
            let (sum, _) = summed(kind, a);
            let d = scrambled(&sum, seed);
            let out = find_critical_subspace(&d, &SearchBudget::default(), &tol(), seed).unwrap();
            let rep = out.report.unwrap();
            if matches!(rep.source, CriticalSource::Lattice | CriticalSource::Eigenspace) {
                for part in [
                    restrict_datum(&d, &rep.subspace, &tol()).unwrap(),
                    crate::model::quotient_datum(&d, &rep.subspace, &tol()).unwrap(),
                ] {
                    let rhs: f64 = part.maps().iter().map(|m| m.exponent * m.matrix.nrows() as f64).sum();
                    proptest::prop_assert!((part.dim() as f64 - rhs).abs() <= 0.25);
                }
            }
        }
    }

    #[test]
    fn subsets_are_enumerated_in_order() {
        let mut seen = Vec::new();
        for_each_subset(3, 2, 100, |s| {
            seen.push(s.to_vec());
            true
        });
        assert_eq!(
            seen,
            vec![vec![0], vec![0, 1], vec![0, 2], vec![1], vec![1, 2], vec![2]]
        );
    }
}
