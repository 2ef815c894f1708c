//! Heat-flow spec files.
//!
//! ```json
//! {"kind": "geometric", "datum": {...}, "inputs": [{"bumps": [{"center": [0], "width": 0.5}]}]}
//! {"kind": "sliding_gaussian", "datum": {...}, "gaussian": [[[4.5]], ...], "masses": [...], "s_values": [...]}
//! {"kind": "log_concave", "kernel": {"exponential": 1}, "mass": {...}, "p": 2}
//! {"kind": "heat_extension", "mass": {"points": [[-1], [1]], "weights": [1, 1]}, "p": 3}
//! ```
//! `times` is optional everywhere except sliding gaussians (`s_values`).

use bl_core::linalg;
use bl_core::{BlDatum, Error, GaussianInput, Result};
use bl_heatflow::{
    default_times, evolve_geometric_heat, heat_extension_norm_trace, log_concave_trace, sliding_gaussian_trace, Bump,
    Direction, GridField, HeatOptions, KernelSpec, MonotonicityTrace, PointMassList,
};
use serde_json::{Map, Value};

fn parse_err(path: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.into(),
        message: message.into(),
    }
}

fn field<'a>(obj: &'a Map<String, Value>, path: &str, key: &str) -> Result<&'a Value> {
    obj.get(key)
        .ok_or_else(|| parse_err(&format!("{path}.{key}"), "missing"))
}

fn number(v: &Value, path: &str) -> Result<f64> {
    v.as_f64()
        .filter(|x| x.is_finite())
        .ok_or_else(|| parse_err(path, "expected a finite number"))
}

fn numbers(v: &Value, path: &str) -> Result<Vec<f64>> {
    let arr = v
        .as_array()
        .ok_or_else(|| parse_err(path, "expected an array of numbers"))?;
    arr.iter()
        .enumerate()
        .map(|(i, x)| number(x, &format!("{path}[{i}]")))
        .collect()
}

fn object<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>> {
    v.as_object().ok_or_else(|| parse_err(path, "expected an object"))
}

fn datum(obj: &Map<String, Value>) -> Result<BlDatum> {
    BlDatum::from_json(field(obj, "$", "datum")?).map_err(|e| match e {
        Error::Parse { path, message } => parse_err(&path.replacen('$', "$.datum", 1), message),
        other => other,
    })
}

fn mass(v: &Value, path: &str) -> Result<PointMassList> {
    let o = object(v, path)?;
    let pts = field(o, path, "points")?
        .as_array()
        .ok_or_else(|| parse_err(&format!("{path}.points"), "expected an array of points"))?;
    let points = pts
        .iter()
        .enumerate()
        .map(|(i, p)| numbers(p, &format!("{path}.points[{i}]")))
        .collect::<Result<Vec<_>>>()?;
    let weights = match o.get("weights") {
        Some(w) => numbers(w, &format!("{path}.weights"))?,
        None => vec![1.0; points.len()],
    };
    PointMassList::new(points, weights)
}

fn times(obj: &Map<String, Value>, key: &str) -> Result<Vec<f64>> {
    match obj.get(key) {
        Some(v) => numbers(v, &format!("$.{key}")),
        None if key == "times" => Ok(default_times()),
        None => Err(parse_err(&format!("$.{key}"), "missing")),
    }
}

fn grid_input(v: &Value, path: &str, ndim: usize) -> Result<GridField> {
    let o = object(v, path)?;
    let half_width = match o.get("half_width") {
        Some(r) => number(r, &format!("{path}.half_width"))?,
        None => 8.0,
    };
    if let Some(values) = o.get("values") {
        let dims = numbers(field(o, path, "dims")?, &format!("{path}.dims"))?
            .into_iter()
            .map(|d| d as usize)
            .collect();
        return GridField::new(dims, half_width, numbers(values, &format!("{path}.values"))?);
    }
    let points = match o.get("points") {
        Some(n) => number(n, &format!("{path}.points"))? as usize,
        None => 401,
    };
    let list = field(o, path, "bumps")?
        .as_array()
        .ok_or_else(|| parse_err(&format!("{path}.bumps"), "expected an array"))?;
    let bumps = list
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let bp = format!("{path}.bumps[{i}]");
            let bo = object(b, &bp)?;
            Ok(Bump {
                center: numbers(field(bo, &bp, "center")?, &format!("{bp}.center"))?,
                width: number(field(bo, &bp, "width")?, &format!("{bp}.width"))?,
                weight: match bo.get("weight") {
                    Some(w) => number(w, &format!("{bp}.weight"))?,
                    None => 1.0,
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let field = GridField::from_bumps(ndim, points, half_width, &bumps)?;
    let normalize = o.get("normalize").and_then(Value::as_bool).unwrap_or(true);
    Ok(if normalize { field.normalized() } else { field })
}

fn kernel(v: &Value) -> Result<KernelSpec> {
    let o = object(v, "$.kernel")?;
    if let Some(rate) = o.get("exponential") {
        return KernelSpec::exponential(number(rate, "$.kernel.exponential")?);
    }
    if let Some(a) = o.get("gaussian") {
        let rows = bl_core::model::parse_rows(a, "$.kernel.gaussian", None)?;
        let k = rows.len();
        return KernelSpec::gaussian(linalg::from_rows(&rows, k));
    }
    if let Some(t) = o.get("tabulated") {
        let to = object(t, "$.kernel.tabulated")?;
        return KernelSpec::tabulated(
            numbers(field(to, "$.kernel.tabulated", "x")?, "$.kernel.tabulated.x")?,
            numbers(field(to, "$.kernel.tabulated", "values")?, "$.kernel.tabulated.values")?,
        );
    }
    Err(parse_err(
        "$.kernel",
        "expected one of exponential, gaussian, tabulated",
    ))
}

/// Runs a heat-flow spec file and returns the trace with the direction it must follow.
pub fn run(text: &str) -> Result<(String, MonotonicityTrace, Direction)> {
    let v: Value = serde_json::from_str(text).map_err(|e| parse_err("$", e.to_string()))?;
    let obj = object(&v, "$")?;
    let kind = field(obj, "$", "kind")?
        .as_str()
        .ok_or_else(|| parse_err("$.kind", "expected a string"))?
        .to_string();
    let (trace, direction) = match kind.as_str() {
        "geometric" => {
            let d = datum(obj)?;
            let list = field(obj, "$", "inputs")?
                .as_array()
                .ok_or_else(|| parse_err("$.inputs", "expected an array"))?;
            if list.len() != d.m() {
                return Err(parse_err("$.inputs", format!("expected {} inputs", d.m())));
            }
            let inputs = list
                .iter()
                .enumerate()
                .map(|(j, f)| grid_input(f, &format!("$.inputs[{j}]"), d.target_dims()[j]))
                .collect::<Result<Vec<_>>>()?;
            let opts = HeatOptions {
                domain_points: obj.get("domain_points").and_then(Value::as_u64).map(|n| n as usize),
                ..HeatOptions::default()
            };
            (
                evolve_geometric_heat(&d, &inputs, &times(obj, "times")?, &opts)?,
                Direction::NonDecreasing,
            )
        }
        "sliding_gaussian" => {
            let d = datum(obj)?;
            let a = match obj.get("gaussian") {
                Some(a) => GaussianInput::from_json(a, &d)?,
                None => GaussianInput::identity(&d),
            };
            let list = field(obj, "$", "masses")?
                .as_array()
                .ok_or_else(|| parse_err("$.masses", "expected an array"))?;
            let masses = list
                .iter()
                .enumerate()
                .map(|(j, m)| mass(m, &format!("$.masses[{j}]")))
                .collect::<Result<Vec<_>>>()?;
            (
                sliding_gaussian_trace(&d, &a, &masses, &times(obj, "s_values")?)?,
                Direction::NonIncreasing,
            )
        }
        "log_concave" => {
            let p = number(field(obj, "$", "p")?, "$.p")?;
            let k = kernel(field(obj, "$", "kernel")?)?;
            let mu = mass(field(obj, "$", "mass")?, "$.mass")?;
            (
                log_concave_trace(&k, &mu, p, &times(obj, "times")?)?,
                Direction::NonIncreasing,
            )
        }
        "heat_extension" => {
            let p = number(field(obj, "$", "p")?, "$.p")?;
            let mu = mass(field(obj, "$", "mass")?, "$.mass")?;
            (
                heat_extension_norm_trace(&mu, p, &times(obj, "times")?)?,
                Direction::NonDecreasing,
            )
        }
        other => {
            return Err(parse_err(
                "$.kind",
                format!("unknown kind {other:?} (geometric, sliding_gaussian, log_concave, heat_extension)"),
            ))
        }
    };
    Ok((kind, trace, direction))
}
