use crate::args::{Cli, Verb};
use crate::heat;
use crate::report::{list, matrix_lines, sig6, Report};
use bl_core::finiteness::{self, Certificate, FinitenessStatus, Witness};
use bl_core::solver::{self, SolveOutcome, SolveStatus};
use bl_core::structure::{self, Extremisability};
use bl_core::{model, BlDatum, Error, Result};
use bl_heatflow::assert_monotone;
use serde_json::{json, Value};
use std::time::Instant;

/// Slack for membership of the datum's own exponents in its polytope.
const MEMBERSHIP_SLACK: f64 = 1e-9;

struct Outcome {
    status: String,
    exit_code: u8,
    result: Value,
    lines: Vec<String>,
    csv: Option<String>,
}

impl Outcome {
    fn new(status: impl Into<String>, exit_code: u8, result: Value, lines: Vec<String>) -> Self {
        Outcome {
            status: status.into(),
            exit_code,
            result,
            lines,
            csv: None,
        }
    }
}

pub fn run(cli: &Cli) -> Result<Report> {
    let tol = cli.tolerances();
    tol.validate()?;
    let text = std::fs::read_to_string(&cli.input)
        .map_err(|e| Error::Domain(format!("cannot read {}: {e}", cli.input.display())))?;
    let start = Instant::now();
    let mut settings = json!({
        "tolerances": tol.to_json(),
        "seed": cli.seed,
    });
    let (digest, outcome) = if cli.verb == Verb::Heatflow {
        (None, heatflow(&text)?)
    } else {
        let datum = BlDatum::from_json_str(&text)?;
        settings["max_iter"] = json!(cli.max_iter);
        settings["budget"] = json!({ "preset": cli.budget.as_str(), "limits": cli.budget.budget().to_json() });
        let digest = json!({
            "dim": datum.dim(),
            "target_dims": datum.target_dims(),
            "exponents": datum.exponents(),
        });
        let outcome = match cli.verb {
            Verb::Validate => validate(&datum, cli),
            Verb::Finiteness => finiteness(&datum, cli),
            Verb::Constant => solve(&datum, cli, false),
            Verb::Extremiser => solve(&datum, cli, true),
            Verb::Structure => structure(&datum, cli),
            Verb::Polytope => polytope(&datum, cli),
            Verb::Heatflow => unreachable!(),
        }?;
        (Some(digest), outcome)
    };
    Ok(Report {
        verb: cli.verb.as_str(),
        status: outcome.status,
        exit_code: outcome.exit_code,
        datum: digest,
        settings,
        result: outcome.result,
        lines: outcome.lines,
        csv: outcome.csv,
        elapsed: start.elapsed(),
    })
}

fn validate(datum: &BlDatum, cli: &Cli) -> Result<Outcome> {
    let tol = cli.tolerances();
    let report = model::validate_datum(datum, &tol);
    let (scaling, lhs, rhs) = finiteness::check_scaling(datum);
    let geometric = solver::is_geometric(datum, structure::GEOMETRIC_TOL);
    let mut result = report.to_json();
    result["scaling_holds"] = json!(scaling);
    result["rank_one"] = json!(datum.is_rank_one());
    result["geometric"] = json!(geometric);
    let mut lines = vec![
        format!("ranks: {:?}", report.ranks),
        format!("all surjective: {}", report.all_surjective()),
        format!("common kernel dimension: {}", report.common_kernel.dim()),
        format!("scaling: dim H = {lhs}, sum p_j dim H_j = {}", sig6(rhs)),
        format!("rank one: {}", datum.is_rank_one()),
        format!("geometric: {geometric}"),
    ];
    if !report.zero_exponents.is_empty() {
        lines.push(format!("zero exponents at maps {:?}", report.zero_exponents));
    }
    let status = if report.non_degenerate {
        "NonDegenerate"
    } else {
        "Degenerate"
    };
    Ok(Outcome::new(status, 0, result, lines))
}

fn finiteness(datum: &BlDatum, cli: &Cli) -> Result<Outcome> {
    let verdict = finiteness::general_finiteness(datum, &cli.budget.budget(), &cli.tolerances(), cli.seed)?;
    let mut lines = Vec::new();
    match &verdict.certificate {
        Some(Certificate::Extremiser {
            blg_value, residual, ..
        }) => {
            lines.push("certificate: gaussian extremiser".into());
            lines.push(format!("BL_g = {}", sig6(*blg_value)));
            lines.push(format!("residual: {residual:.3e}"));
        }
        Some(Certificate::SemisimpleDecomposition(d)) => {
            let dims: Vec<usize> = d.components.iter().map(|c| c.subspace.dim()).collect();
            lines.push(format!(
                "certificate: decomposition into simple components of dimensions {dims:?}"
            ));
        }
        Some(Certificate::RankOnePolytopeMembership {
            flats_checked,
            max_slack_violation,
        }) => {
            lines.push(format!(
                "certificate: exponent lies in the rank-one polytope ({flats_checked} flats, largest excess {})",
                sig6(*max_slack_violation)
            ));
        }
        None => {}
    }
    match &verdict.witness {
        Some(Witness::ScalingFailure { lhs, rhs }) => {
            lines.push(format!(
                "witness: scaling fails, dim H = {lhs} but sum p_j dim H_j = {}",
                sig6(*rhs)
            ));
        }
        Some(Witness::DimensionViolation {
            subspace,
            dim,
            dimension_sum,
            subset,
            ..
        }) => {
            lines.push(format!(
                "witness: dim V = {dim} exceeds sum p_j dim(B_j V) = {}",
                sig6(*dimension_sum)
            ));
            if let Some(s) = subset {
                lines.push(format!("witness subset: {s:?}"));
            }
            lines.extend(matrix_lines("witness basis", &subspace.basis().transpose()));
        }
        None => {}
    }
    if let Some(b) = &verdict.budget_report {
        lines.push(format!(
            "budget: {} candidates, {} random subspaces, depth {}",
            b.candidates_examined, b.random_subspaces_tested, b.depth_reached
        ));
        if let Some(e) = b.extremisability {
            lines.push(format!("extremisability: {e}"));
        }
    }
    let code = if verdict.status == FinitenessStatus::Undetermined {
        2
    } else {
        0
    };
    Ok(Outcome::new(verdict.status.as_str(), code, verdict.to_json(), lines))
}

fn solver_csv(out: &SolveOutcome) -> String {
    let mut s = String::from("iter,value,residual,cond\n");
    for t in &out.trace {
        s.push_str(&format!("{},{:e},{:e},{:e}\n", t.iter, t.value, t.residual, t.cond));
    }
    s
}

fn solve(datum: &BlDatum, cli: &Cli, extremiser: bool) -> Result<Outcome> {
    let tol = cli.tolerances();
    let (reduced, kept) = datum.normalized();
    let out = solver::fixed_point_solve(&reduced, None, &tol, cli.max_iter, cli.seed)?;
    let mut lines = Vec::new();
    // Every iterate is admissible, so the best one bounds the constant below.
    let lower = out
        .trace
        .iter()
        .map(|t| t.value)
        .filter(|v| v.is_finite())
        .fold(None, |best: Option<f64>, v| Some(best.map_or(v, |b| b.max(v))));
    match out.status {
        SolveStatus::Converged => {
            lines.push(format!("BL_g = {}", sig6(out.blg_value.unwrap_or(f64::NAN))));
        }
        _ => {
            if let Some(v) = lower {
                lines.push(format!("BL_g >= {} (best value reached)", sig6(v)));
            }
        }
    }
    lines.push(format!("iterations: {}", out.iterations));
    lines.push(format!("residual: {:.3e}", out.residual));
    if let Some(v) = &out.degeneration_subspace {
        lines.push(format!("degeneration subspace dimension: {}", v.dim()));
        lines.extend(matrix_lines("degeneration basis", &v.basis().transpose()));
    }
    let mut result = json!({
        "status": out.status.as_str(),
        "blg_value": out.blg_value,
        "best_value": lower,
        "iterations": out.iterations,
        "residual": if out.residual.is_finite() { json!(out.residual) } else { Value::Null },
        "stalled": out.stalled,
        "degeneration_subspace": out.degeneration_subspace.as_ref().map(|v| bl_core::linalg::to_rows(&v.basis().transpose())),
        "kept_maps": kept.iter().map(|j| j + 1).collect::<Vec<_>>(),
    });
    if extremiser {
        result["extremiser"] = out.extremiser.as_ref().map_or(Value::Null, |a| a.to_json());
        if let Some(a) = &out.extremiser {
            for (a_j, &j) in a.matrices().iter().zip(&kept) {
                lines.extend(matrix_lines(&format!("A_{}", j + 1), a_j));
            }
        }
    }
    let code = match out.status {
        SolveStatus::Converged | SolveStatus::Degenerated => 0,
        SolveStatus::BudgetExhausted => 2,
    };
    let mut o = Outcome::new(out.status.as_str(), code, result, lines);
    o.csv = Some(solver_csv(&out));
    Ok(o)
}

fn structure(datum: &BlDatum, cli: &Cli) -> Result<Outcome> {
    let tol = cli.tolerances();
    let budget = cli.budget.budget();
    let (reduced, _) = datum.normalized();
    let search = structure::find_critical_subspace(&reduced, &budget, &tol, cli.seed)?;
    let verdict = structure::classify_extremisability(&reduced, &budget, &tol, cli.seed)?;
    let mut lines = vec![format!(
        "threshold: {}",
        sig6(structure::criticality_threshold(&reduced))
    )];
    let mut factorization = Value::Null;
    match &search.report {
        Some(r) => {
            lines.push(format!(
                "critical subspace: dim {}, defect {}, source {}",
                r.subspace.dim(),
                sig6(r.defect),
                r.source.as_str()
            ));
            lines.extend(matrix_lines("critical basis", &r.subspace.basis().transpose()));
            if r.defect.abs() <= 1e-9 {
                let check = structure::verify_factorization(&reduced, r, &tol, cli.max_iter)?;
                if let Some(e) = check.relative_error {
                    lines.push(format!("factorization relative error: {e:.3e}"));
                }
                factorization = check.to_json();
            }
        }
        None => lines.push(format!(
            "no critical subspace among {} candidates",
            search.candidates_examined
        )),
    }
    let dims: Vec<usize> = verdict
        .decomposition
        .components
        .iter()
        .map(|c| c.subspace.dim())
        .collect();
    lines.push(format!("components ({}): {dims:?}", verdict.decomposition.method));
    lines.push(format!("extremisability: {}", verdict.status.as_str()));
    let code = if verdict.status == Extremisability::Undetermined {
        2
    } else {
        0
    };
    let result = json!({
        "search": search.to_json(),
        "factorization": factorization,
        "extremisability": verdict.to_json(),
    });
    Ok(Outcome::new(verdict.status.as_str(), code, result, lines))
}

fn polytope(datum: &BlDatum, cli: &Cli) -> Result<Outcome> {
    let poly = finiteness::rank_one_polytope(datum, &cli.tolerances())?;
    let p = datum.exponents();
    let member = poly.contains(&p, MEMBERSHIP_SLACK);
    let mut lines = vec![format!("vertices ({}):", poly.vertices.len())];
    lines.extend(
        poly.vertices
            .iter()
            .map(|v| format!("  ({})", v.iter().map(u8::to_string).collect::<Vec<_>>().join(", "))),
    );
    lines.push(format!("exponents {} in polytope: {member}", list(p)));
    lines.push("inequalities:".into());
    lines.extend(poly.h_representation().lines().map(|l| format!("  {l}")));
    let mut result = poly.to_json();
    result["exponents_in_polytope"] = json!(member);
    let status = if member { "Member" } else { "NotMember" };
    Ok(Outcome::new(status, 0, result, lines))
}

fn heatflow(text: &str) -> Result<Outcome> {
    let (kind, trace, direction) = heat::run(text)?;
    let check = assert_monotone(&trace, direction);
    let mut lines = vec![
        format!("trace: {}", trace.label),
        format!("samples: {}", trace.len()),
        format!(
            "direction {}: {} ({} violations)",
            direction.as_str(),
            if check.passed { "pass" } else { "fail" },
            check.violations
        ),
        format!(
            "first Q = {}, last Q = {}",
            sig6(trace.values[0]),
            sig6(*trace.values.last().unwrap_or(&f64::NAN))
        ),
        format!(
            "largest error bound: {:.3e}",
            trace.error_bound.iter().copied().fold(0.0, f64::max)
        ),
    ];
    if let Some(l) = trace.limit {
        lines.push(format!("limit = {}", sig6(l)));
    }
    if let Some(d) = trace.mass_drift {
        lines.push(format!("mass drift: {d:.3e}"));
    }
    if direction == bl_heatflow::Direction::NonDecreasing {
        lines.push(format!(
            "strictly increasing (3x error bound): {}",
            trace.strictly_increasing(3.0)
        ));
    }
    let result = json!({
        "kind": kind,
        "trace": trace.to_json(),
        "check": check.to_json(),
    });
    let status = if check.passed { "MonotonePass" } else { "MonotoneFail" };
    let mut o = Outcome::new(status, if check.passed { 0 } else { 1 }, result, lines);
    o.csv = Some(trace.to_csv());
    Ok(o)
}
