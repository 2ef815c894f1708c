use bl_core::structure::SearchBudget;
use bl_core::Tolerances;
use clap::{Parser, ValueEnum};
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Verb {
    /// Rank, surjectivity and non-degeneracy checks.
    Validate,
    /// Decide whether the Brascamp–Lieb constant is finite.
    Finiteness,
    /// Gaussian constant by fixed-point iteration.
    Constant,
    /// Gaussian extremiser by fixed-point iteration.
    Extremiser,
    /// Critical subspaces, decomposition and extremisability.
    Structure,
    /// Vertices and facets of the rank-one exponent polytope.
    Polytope,
    /// Monotonicity traces from a heat-flow spec file.
    Heatflow,
}

impl Verb {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verb::Validate => "validate",
            Verb::Finiteness => "finiteness",
            Verb::Constant => "constant",
            Verb::Extremiser => "extremiser",
            Verb::Structure => "structure",
            Verb::Polytope => "polytope",
            Verb::Heatflow => "heatflow",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BudgetPreset {
    Small,
    Default,
    Large,
}

impl BudgetPreset {
    pub fn budget(&self) -> SearchBudget {
        match self {
            BudgetPreset::Small => SearchBudget::small(),
            BudgetPreset::Default => SearchBudget::default(),
            BudgetPreset::Large => SearchBudget::large(),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            BudgetPreset::Small => "small",
            BudgetPreset::Default => "default",
            BudgetPreset::Large => "large",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

/// Brascamp–Lieb data analysis.
///
/// Exit status: 0 for a definitive result, 2 when the budget ran out before
/// a decision, 1 on errors or a failed monotonicity check.
#[derive(Debug, Parser)]
#[command(name = "bl", version)]
pub struct Cli {
    #[arg(value_enum)]
    pub verb: Verb,
    /// Datum JSON file (a heat-flow spec for `heatflow`).
    pub input: PathBuf,
    /// Relative singular-value cutoff for rank decisions.
    #[arg(long, default_value_t = Tolerances::default().rank_tol)]
    pub tol: f64,
    /// Stationarity residual required for convergence.
    #[arg(long, default_value_t = Tolerances::default().stat_tol)]
    pub stat_tol: f64,
    /// Solver iteration cap.
    #[arg(long, default_value_t = bl_core::solver::DEFAULT_MAX_ITER)]
    pub max_iter: usize,
    #[arg(long, value_enum, default_value_t = BudgetPreset::Default)]
    pub budget: BudgetPreset,
    /// 0 starts the solver from identities; other seeds pick random starts.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Write the trace (heat flow or solver iterations) as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// With --csv, also write a gnuplot script plotting it.
    #[arg(long, requires = "csv")]
    pub plot: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Cli {
    pub fn tolerances(&self) -> Tolerances {
        Tolerances {
            rank_tol: self.tol,
            stat_tol: self.stat_tol,
            ..Tolerances::default()
        }
    }
}
