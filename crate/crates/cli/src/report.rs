use nalgebra::DMatrix;
use serde_json::{json, Value};
use std::path::Path;
use std::time::Duration;

/// Bumped whenever the JSON layout changes.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug)]
pub struct Report {
    pub verb: &'static str,
    pub status: String,
    pub exit_code: u8,
    /// `{dim, target_dims, exponents}` for datum inputs.
    pub datum: Option<Value>,
    pub settings: Value,
    pub result: Value,
    /// Verb-specific text lines.
    pub lines: Vec<String>,
    pub csv: Option<String>,
    pub elapsed: Duration,
}

impl Report {
    /// Timings are left out so identical runs give identical bytes.
    pub fn to_json(&self) -> Value {
        json!({
            "schema_version": SCHEMA_VERSION,
            "tool": "bl",
            "tool_version": env!("CARGO_PKG_VERSION"),
            "verb": self.verb,
            "status": self.status,
            "exit_code": self.exit_code,
            "datum": self.datum,
            "settings": self.settings,
            "result": self.result,
        })
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_json()).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "bl {} {}\nstatus: {}\n",
            env!("CARGO_PKG_VERSION"),
            self.verb,
            self.status
        );
        if let Some(d) = &self.datum {
            out.push_str(&format!(
                "datum: dim {}, target dims {}, exponents {}\n",
                d["dim"],
                d["target_dims"],
                list(
                    d["exponents"]
                        .as_array()
                        .map(|a| a.iter().filter_map(Value::as_f64).collect())
                        .unwrap_or_default()
                )
            ));
        }
        for line in &self.lines {
            out.push_str(line);
            out.push('\n');
        }
        out.push_str(&format!("settings: {}\n", self.settings));
        out.push_str(&format!("elapsed: {:.3} s\n", self.elapsed.as_secs_f64()));
        out
    }
}

/// `x` to six significant digits.
pub fn sig6(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".into();
    }
    // Round first so that e.g. 0.9999999 is placed in the right decade.
    let x: f64 = format!("{x:.5e}").parse().expect("float round-trips");
    let mag = x.abs().log10().floor() as i32;
    if !(-4..6).contains(&mag) {
        return format!("{x:.5e}");
    }
    let decimals = (5 - mag).max(0) as usize;
    format!("{x:.decimals$}")
}

pub fn list(xs: Vec<f64>) -> String {
    format!("({})", xs.iter().map(|&x| sig6(x)).collect::<Vec<_>>().join(", "))
}

/// One line per row: `<label> row k: (a, b, ...)`.
pub fn matrix_lines(label: &str, m: &DMatrix<f64>) -> Vec<String> {
    (0..m.nrows())
        .map(|r| format!("{label} row {}: {}", r + 1, list(m.row(r).iter().copied().collect())))
        .collect()
}

pub fn gnuplot_script(csv: &Path, title: &str) -> String {
    format!(
        "set datafile separator ','\nset key autotitle columnhead\nset logscale x\nset xlabel 't'\nset ylabel 'Q'\nset title '{}'\nplot '{}' using 1:2:3 with yerrorbars, '' using 1:2 with lines notitle\n",
        title.replace('\'', ""),
        csv.display()
    )
}
