//! Command-line surface: `fit`, `predict`, `simulate`, `diagnose`, `plot`.
//!
//! All data interchange is plain text. Numbers in generated files are
//! written with 17 significant digits so 64-bit floats round-trip exactly.
//!
//! ## Exit codes
//!
//! 0 success, 2 user/config/parse error, 3 computational failure.
//!
//! ## Config file
//!
//! Flat `key = value` lines, `#` comments. Keys:
//!
//! | key          | meaning                                             |
//! |--------------|-----------------------------------------------------|
//! | `structure`  | `toeplitz` or `equicorrelation`                     |
//! | `p`          | ambient dimension                                   |
//! | `s`          | support size (even)                                 |
//! | `rho`        | block correlation                                   |
//! | `groups`     | group count (the built-in scenario requires 3)      |
//! | `priors`     | comma-separated, positive, sum 1 (default uniform)  |
//! | `theta`      | comma-separated rescaled sample sizes (simulate)    |
//! | `replicates` | runs per grid point (default 100)                   |
//! | `seed`       | base seed (default 0)                               |
//! | `lambda_rule`| `calibrated` (default), `sim`, `thm2`, or a number  |
//! | `lambda`     | fixed penalty (same as a numeric `lambda_rule`)     |
//! | `n`          | sample size (diagnose)                              |
//! | `tol`        | solver tolerance (default 1e-8)                     |
//! | `max_sweeps` | solver sweep cap (default 50000)                    |
//!
//! ## Model file
//!
//! `key=value` lines: `mgsda_model`, `p`, `groups`, `n`, `lambda`,
//! `iterations`, `objective`, `kkt_residual`, `converged`, `counts`,
//! optional `feature_names` / `label_names`, one `mean_<g>` line per group,
//! `support` (0-based column indices), one `v_<i>` line per support row, and
//! one `gram_<r>` line per discriminant direction (the cached VᵀWV block,
//! which classification needs and which V alone cannot reproduce).
//!
//! ## Diagnose report
//!
//! Fixed key set: `p`, `s`, `groups`, `n`, `irrepresentability_exact`,
//! `irrepresentability_worst`, `alpha`, `psi_min`, `lambda_max`,
//! `lambda_max_sqrt_s`, `psi_min_requirement`, `sample_complexity_core`,
//! `lambda_recovery`, `lambda_sim`, `lambda_calibrated`, `lambda_sim_form`.
//!
//! `MGSDA_THREADS` caps simulate's worker threads (0 or unset = auto).

use std::fs;

use crate::classifier::{build_model, ClassifierModel};
use crate::diagnostics::{
    build_report, lambda_calibrated_rule, lambda_recovery_rule, lambda_simulation_rule,
    DiagnosticsReport, DEFAULT_K_LAMBDA,
};
use crate::experiments::{
    aggregates_csv, format_g17, records_csv, run_sweep, LambdaRule, ScenarioConfig,
};
use crate::linalg::Matrix;
use crate::population::{build_sigma, scenario_means, PopulationSpec, SigmaStructure};
use crate::solver::{solve, Problem, SolverOptions};
use crate::stats::{compute_stats, LabeledDataset, SampleStatistics};

const USAGE: &str = "\
mgsda — multi-group sparse discriminant analysis

USAGE:
  mgsda fit      --data data.csv --out model.txt [--labels NAME]
                 [--lambda X | --lambda-rule calibrated|sim|thm2|value --config scenario.cfg]
                 [--tol X] [--max-iter N]
  mgsda predict  --model model.txt --data features.csv --out labels.csv
  mgsda simulate --config scenario.cfg --out records.csv --aggregate agg.csv
                 [--seed N] [--replicates N] [--tol X] [--max-iter N]
  mgsda diagnose --config scenario.cfg --out report.txt [--n N]
  mgsda plot     --data agg.csv --out figure.svg

Exit codes: 0 ok, 2 user/config error, 3 computational failure.
MGSDA_THREADS caps simulate's concurrency (0 = auto).
";

/// Failure with an exit code: 2 for user errors, 3 for computational ones.
#[derive(Debug)]
enum Failure {
    User(String),
    Compute(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::User(_) => 2,
            Failure::Compute(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::User(m) | Failure::Compute(m) => m,
        }
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn user<T>(message: impl Into<String>) -> std::result::Result<T, Failure> {
    Err(Failure::User(message.into()))
}

/// Entry point used by the binary; returns the process exit code.
pub fn run(args: &[String]) -> i32 {
    let Some(command) = args.first() else {
        eprint!("{USAGE}");
        return 2;
    };
    let flags = match parse_flags(&args[1..]) {
        Ok(flags) => flags,
        Err(failure) => {
            eprintln!("mgsda: {}", failure.message());
            return failure.code();
        }
    };
    let outcome = match command.as_str() {
        "fit" => cmd_fit(&flags),
        "predict" => cmd_predict(&flags),
        "simulate" => cmd_simulate(&flags),
        "diagnose" => cmd_diagnose(&flags),
        "plot" => cmd_plot(&flags),
        "help" | "--help" | "-h" => {
            print!("{USAGE}");
            Ok(())
        }
        other => {
            eprintln!("mgsda: unknown command '{other}'\n");
            eprint!("{USAGE}");
            return 2;
        }
    };
    match outcome {
        Ok(()) => 0,
        Err(failure) => {
            eprintln!("mgsda {command}: {}", failure.message());
            failure.code()
        }
    }
}

// ---------------------------------------------------------------------------
// Flags

struct Flags(Vec<(String, String)>);

fn parse_flags(args: &[String]) -> std::result::Result<Flags, Failure> {
    let mut flags = Vec::new();
    let mut iter = args.iter();
    while let Some(flag) = iter.next() {
        if !flag.starts_with("--") {
            return user(format!("expected a --flag, got '{flag}'"));
        }
        let Some(value) = iter.next() else {
            return user(format!("flag '{flag}' needs a value"));
        };
        flags.push((flag.clone(), value.clone()));
    }
    Ok(Flags(flags))
}

impl Flags {
    fn get(&self, name: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
    }

    fn require(&self, name: &str) -> std::result::Result<&str, Failure> {
        self.get(name).ok_or_else(|| Failure::User(format!("missing required flag '{name}'")))
    }

    fn parse_f64(&self, name: &str) -> std::result::Result<Option<f64>, Failure> {
        match self.get(name) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|_| Failure::User(format!("flag '{name}': invalid number '{raw}'"))),
        }
    }

    fn parse_usize(&self, name: &str) -> std::result::Result<Option<usize>, Failure> {
        match self.get(name) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|_| Failure::User(format!("flag '{name}': invalid integer '{raw}'"))),
        }
    }

    fn parse_u64(&self, name: &str) -> std::result::Result<Option<u64>, Failure> {
        match self.get(name) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|_| Failure::User(format!("flag '{name}': invalid integer '{raw}'"))),
        }
    }
}

fn solver_options(flags: &Flags) -> std::result::Result<SolverOptions, Failure> {
    let mut opts = SolverOptions::default();
    if let Some(tol) = flags.parse_f64("--tol")? {
        if !(tol > 0.0) {
            return user(format!("--tol must be positive, got {tol}"));
        }
        opts.tol = tol;
    }
    if let Some(max_iter) = flags.parse_usize("--max-iter")? {
        if max_iter == 0 {
            return user("--max-iter must be at least 1");
        }
        opts.max_sweeps = max_iter;
    }
    Ok(opts)
}

fn read_to_string(path: &str) -> std::result::Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::User(format!("cannot read '{path}': {e}")))
}

fn write_file(path: &str, contents: &str) -> CmdResult {
    fs::write(path, contents).map_err(|e| Failure::User(format!("cannot write '{path}': {e}")))
}

// ---------------------------------------------------------------------------
// Config files

#[derive(Default, Debug)]
struct ConfigFile {
    structure: Option<SigmaStructure>,
    p: Option<usize>,
    s: Option<usize>,
    rho: Option<f64>,
    groups: Option<usize>,
    priors: Option<Vec<f64>>,
    thetas: Option<Vec<f64>>,
    replicates: Option<usize>,
    seed: Option<u64>,
    lambda_rule: Option<String>,
    lambda: Option<f64>,
    n: Option<usize>,
    tol: Option<f64>,
    max_sweeps: Option<usize>,
}

fn parse_config(text: &str) -> std::result::Result<ConfigFile, Failure> {
    let mut config = ConfigFile::default();
    for (line_no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return user(format!("config line {}: expected key = value", line_no + 1));
        };
        let key = key.trim();
        let value = value.trim();
        let bad = |what: &str| {
            Failure::User(format!("config line {}: invalid {what} '{value}'", line_no + 1))
        };
        match key {
            "structure" => {
                config.structure =
                    Some(SigmaStructure::parse(value).ok_or_else(|| bad("structure"))?);
            }
            "p" => config.p = Some(value.parse().map_err(|_| bad("integer"))?),
            "s" => config.s = Some(value.parse().map_err(|_| bad("integer"))?),
            "rho" => config.rho = Some(value.parse().map_err(|_| bad("number"))?),
            "groups" => config.groups = Some(value.parse().map_err(|_| bad("integer"))?),
            "priors" => {
                let priors: std::result::Result<Vec<f64>, _> =
                    value.split(',').map(|v| v.trim().parse()).collect();
                config.priors = Some(priors.map_err(|_| bad("prior list"))?);
            }
            "theta" => {
                let thetas: std::result::Result<Vec<f64>, _> =
                    value.split(',').map(|v| v.trim().parse()).collect();
                config.thetas = Some(thetas.map_err(|_| bad("theta list"))?);
            }
            "replicates" => config.replicates = Some(value.parse().map_err(|_| bad("integer"))?),
            "seed" => config.seed = Some(value.parse().map_err(|_| bad("integer"))?),
            "lambda_rule" => config.lambda_rule = Some(value.to_string()),
            "lambda" => config.lambda = Some(value.parse().map_err(|_| bad("number"))?),
            "n" => config.n = Some(value.parse().map_err(|_| bad("integer"))?),
            "tol" => config.tol = Some(value.parse().map_err(|_| bad("number"))?),
            "max_sweeps" => config.max_sweeps = Some(value.parse().map_err(|_| bad("integer"))?),
            other => {
                return user(format!("config line {}: unknown key '{other}'", line_no + 1));
            }
        }
    }
    Ok(config)
}

fn require_key<T: Copy>(value: Option<T>, key: &str) -> std::result::Result<T, Failure> {
    value.ok_or_else(|| Failure::User(format!("config is missing required key '{key}'")))
}

fn population_from_config(config: &ConfigFile) -> std::result::Result<PopulationSpec, Failure> {
    let structure = require_key(config.structure, "structure")?;
    let p = require_key(config.p, "p")?;
    let s = require_key(config.s, "s")?;
    let rho = require_key(config.rho, "rho")?;
    let groups = config.groups.unwrap_or(3);
    if groups != 3 {
        return user(format!("the built-in scenario has exactly 3 groups, got {groups}"));
    }
    let priors = config.priors.clone().unwrap_or_else(|| vec![1.0 / 3.0; 3]);
    let means = scenario_means(p, s).map_err(|e| Failure::User(e.to_string()))?;
    let sigma =
        build_sigma(structure, s, rho, p).map_err(|e| Failure::User(e.to_string()))?;
    PopulationSpec::derive(priors, means, sigma).map_err(|e| Failure::User(e.to_string()))
}

fn lambda_rule_from_config(config: &ConfigFile) -> std::result::Result<LambdaRule, Failure> {
    match (config.lambda_rule.as_deref(), config.lambda) {
        (Some("calibrated"), _) | (None, None) => Ok(LambdaRule::Calibrated),
        (Some("sim"), _) => Ok(LambdaRule::Simulation),
        (Some("thm2"), _) => Ok(LambdaRule::Recovery { k_lambda: DEFAULT_K_LAMBDA }),
        (Some(raw), _) => match raw.parse::<f64>() {
            Ok(value) if value >= 0.0 => Ok(LambdaRule::Fixed(value)),
            _ => user(format!(
                "lambda_rule must be calibrated, sim, thm2, or a number; got '{raw}'"
            )),
        },
        (None, Some(value)) => Ok(LambdaRule::Fixed(value)),
    }
}

// ---------------------------------------------------------------------------
// CSV data files

struct DataTable {
    dataset: LabeledDataset,
    feature_names: Vec<String>,
    /// Sorted original names when the labels were strings.
    label_names: Option<Vec<String>>,
}

fn split_csv_line(line: &str) -> Vec<String> {
    line.split(',').map(|cell| cell.trim().to_string()).collect()
}

fn read_labeled_csv(path: &str, label_column: &str) -> std::result::Result<DataTable, Failure> {
    let text = read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let Some(header) = lines.next() else {
        return user(format!("'{path}' is empty"));
    };
    let columns = split_csv_line(header);
    let Some(label_index) = columns.iter().position(|c| c == label_column) else {
        return user(format!("'{path}': label column '{label_column}' not found in header"));
    };
    let feature_names: Vec<String> =
        columns.iter().enumerate().filter(|&(i, _)| i != label_index).map(|(_, c)| c.clone()).collect();

    let mut raw_labels = Vec::new();
    let mut data = Vec::new();
    for (row_no, line) in lines.enumerate() {
        let cells = split_csv_line(line);
        if cells.len() != columns.len() {
            return user(format!(
                "'{path}' row {}: expected {} cells, got {}",
                row_no + 2,
                columns.len(),
                cells.len()
            ));
        }
        for (i, cell) in cells.iter().enumerate() {
            if i == label_index {
                raw_labels.push(cell.clone());
            } else {
                let value: f64 = cell.parse().map_err(|_| {
                    Failure::User(format!(
                        "'{path}' row {}, column '{}': invalid number '{cell}'",
                        row_no + 2,
                        columns[i]
                    ))
                })?;
                data.push(value);
            }
        }
    }
    if raw_labels.is_empty() {
        return user(format!("'{path}' has no data rows"));
    }

    let n = raw_labels.len();
    let p = feature_names.len();
    let features = Matrix::from_vec(n, p, data)
        .map_err(|e| Failure::User(format!("'{path}': {e}")))?;

    // Integer labels must already be 1..G; anything else is treated as
    // categorical strings mapped in sorted order.
    let integers: Option<Vec<usize>> = raw_labels.iter().map(|l| l.parse().ok()).collect();
    let (labels, label_names) = match integers {
        Some(values) => {
            let mut distinct: Vec<usize> = values.clone();
            distinct.sort_unstable();
            distinct.dedup();
            let groups = distinct.len();
            if distinct.first() != Some(&1) || distinct.last() != Some(&groups) {
                return user(format!(
                    "'{path}': integer labels must cover 1..G exactly, found {distinct:?}"
                ));
            }
            (values, None)
        }
        None => {
            let mut names: Vec<String> = raw_labels.clone();
            names.sort();
            names.dedup();
            let labels = raw_labels
                .iter()
                .map(|l| names.iter().position(|n| n == l).unwrap() + 1)
                .collect();
            (labels, Some(names))
        }
    };
    let groups = label_names.as_ref().map_or_else(
        || labels.iter().copied().max().unwrap_or(0),
        |names| names.len(),
    );

    let dataset = LabeledDataset::new(features, labels, groups)
        .map_err(|e| Failure::User(format!("'{path}': {e}")))?;
    Ok(DataTable { dataset, feature_names, label_names })
}

fn read_feature_csv(path: &str) -> std::result::Result<(Matrix, Vec<String>), Failure> {
    let text = read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let Some(header) = lines.next() else {
        return user(format!("'{path}' is empty"));
    };
    let columns = split_csv_line(header);
    let mut data = Vec::new();
    let mut rows = 0;
    for (row_no, line) in lines.enumerate() {
        let cells = split_csv_line(line);
        if cells.len() != columns.len() {
            return user(format!(
                "'{path}' row {}: expected {} cells, got {}",
                row_no + 2,
                columns.len(),
                cells.len()
            ));
        }
        for (i, cell) in cells.iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| {
                Failure::User(format!(
                    "'{path}' row {}, column '{}': invalid number '{cell}'",
                    row_no + 2,
                    columns[i]
                ))
            })?;
            data.push(value);
        }
        rows += 1;
    }
    let features = Matrix::from_vec(rows, columns.len(), data)
        .map_err(|e| Failure::User(format!("'{path}': {e}")))?;
    Ok((features, columns))
}

// ---------------------------------------------------------------------------
// Model files

struct StoredModel {
    v: Matrix,
    means: Matrix,
    counts: Vec<usize>,
    gram: Matrix,
    support: Vec<usize>,
    lambda: f64,
    iterations: usize,
    objective: f64,
    kkt_residual: f64,
    converged: bool,
    feature_names: Vec<String>,
    label_names: Option<Vec<String>>,
}

impl StoredModel {
    fn classifier(&self) -> std::result::Result<ClassifierModel, Failure> {
        ClassifierModel::from_cached_gram(
            self.v.clone(),
            self.means.clone(),
            self.counts.clone(),
            self.gram.clone(),
        )
        .map_err(|e| Failure::User(format!("model schema: {e}")))
    }
}

fn join_floats(values: impl Iterator<Item = f64>) -> String {
    values.map(format_g17).collect::<Vec<_>>().join(",")
}

fn render_model(model: &StoredModel) -> String {
    let p = model.v.rows();
    let groups = model.counts.len();
    let mut out = String::new();
    out.push_str("mgsda_model=1\n");
    out.push_str(&format!("p={p}\n"));
    out.push_str(&format!("groups={groups}\n"));
    out.push_str(&format!("n={}\n", model.counts.iter().sum::<usize>()));
    out.push_str(&format!("lambda={}\n", format_g17(model.lambda)));
    out.push_str(&format!("iterations={}\n", model.iterations));
    out.push_str(&format!("objective={}\n", format_g17(model.objective)));
    out.push_str(&format!("kkt_residual={}\n", format_g17(model.kkt_residual)));
    out.push_str(&format!("converged={}\n", model.converged));
    out.push_str(&format!(
        "counts={}\n",
        model.counts.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")
    ));
    if !model.feature_names.is_empty() {
        out.push_str(&format!("feature_names={}\n", model.feature_names.join(",")));
    }
    if let Some(names) = &model.label_names {
        out.push_str(&format!("label_names={}\n", names.join(",")));
    }
    for g in 0..groups {
        out.push_str(&format!(
            "mean_{}={}\n",
            g + 1,
            join_floats(model.means.row(g).iter().copied())
        ));
    }
    out.push_str(&format!(
        "support={}\n",
        model.support.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",")
    ));
    for &i in &model.support {
        out.push_str(&format!("v_{i}={}\n", join_floats(model.v.row(i).iter().copied())));
    }
    for r in 0..model.gram.rows() {
        out.push_str(&format!("gram_{r}={}\n", join_floats(model.gram.row(r).iter().copied())));
    }
    out
}

fn parse_model(text: &str) -> std::result::Result<StoredModel, Failure> {
    let mut pairs = Vec::new();
    for (line_no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return user(format!("model line {}: expected key=value", line_no + 1));
        };
        pairs.push((key.trim().to_string(), value.trim().to_string()));
    }
    let find = |key: &str| pairs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
    let need = |key: &str| {
        find(key).ok_or_else(|| Failure::User(format!("model is missing key '{key}'")))
    };
    let parse_usize = |key: &str| -> std::result::Result<usize, Failure> {
        need(key)?.parse().map_err(|_| Failure::User(format!("model key '{key}' is not an integer")))
    };
    let parse_f64 = |key: &str| -> std::result::Result<f64, Failure> {
        need(key)?.parse().map_err(|_| Failure::User(format!("model key '{key}' is not a number")))
    };
    let parse_float_list = |value: &str, key: &str| -> std::result::Result<Vec<f64>, Failure> {
        if value.is_empty() {
            return Ok(Vec::new());
        }
        value
            .split(',')
            .map(|v| v.trim().parse())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|_| Failure::User(format!("model key '{key}' has a bad number")))
    };

    if need("mgsda_model")? != "1" {
        return user("unsupported model version");
    }
    let p = parse_usize("p")?;
    let groups = parse_usize("groups")?;
    let lambda = parse_f64("lambda")?;
    let iterations = parse_usize("iterations")?;
    let objective = parse_f64("objective")?;
    let kkt_residual = parse_f64("kkt_residual")?;
    let converged = match need("converged")? {
        "true" => true,
        "false" => false,
        other => return user(format!("model key 'converged' must be true/false, got '{other}'")),
    };
    let counts: Vec<usize> = need("counts")?
        .split(',')
        .map(|v| v.trim().parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Failure::User("model key 'counts' has a bad integer".into()))?;
    if counts.len() != groups {
        return user(format!("model has {} counts for {} groups", counts.len(), groups));
    }
    let feature_names: Vec<String> = match find("feature_names") {
        Some(value) if !value.is_empty() => value.split(',').map(|s| s.to_string()).collect(),
        _ => Vec::new(),
    };
    let label_names = find("label_names")
        .map(|value| value.split(',').map(|s| s.to_string()).collect::<Vec<_>>());
    if let Some(names) = &label_names {
        if names.len() != groups {
            return user(format!("model has {} label names for {} groups", names.len(), groups));
        }
    }

    let mut means = Matrix::zeros(groups, p);
    for g in 0..groups {
        let key = format!("mean_{}", g + 1);
        let row = parse_float_list(need(&key)?, &key)?;
        if row.len() != p {
            return user(format!("model key '{key}' has {} values for p = {p}", row.len()));
        }
        for (j, value) in row.iter().enumerate() {
            means.set(g, j, *value);
        }
    }

    let support: Vec<usize> = match need("support")? {
        "" => Vec::new(),
        value => value
            .split(',')
            .map(|v| v.trim().parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Failure::User("model key 'support' has a bad index".into()))?,
    };
    let k = groups - 1;
    let mut v = Matrix::zeros(p, k);
    for &i in &support {
        if i >= p {
            return user(format!("model support index {i} out of range for p = {p}"));
        }
        let key = format!("v_{i}");
        let row = parse_float_list(need(&key)?, &key)?;
        if row.len() != k {
            return user(format!("model key '{key}' has {} values for {k} directions", row.len()));
        }
        for (j, value) in row.iter().enumerate() {
            v.set(i, j, *value);
        }
    }
    let mut gram = Matrix::zeros(k, k);
    for r in 0..k {
        let key = format!("gram_{r}");
        let row = parse_float_list(need(&key)?, &key)?;
        if row.len() != k {
            return user(format!("model key '{key}' has {} values for {k} directions", row.len()));
        }
        for (c, value) in row.iter().enumerate() {
            gram.set(r, c, *value);
        }
    }

    Ok(StoredModel {
        v,
        means,
        counts,
        gram,
        support,
        lambda,
        iterations,
        objective,
        kkt_residual,
        converged,
        feature_names,
        label_names,
    })
}

// ---------------------------------------------------------------------------
// fit

fn resolve_fit_lambda(
    flags: &Flags,
    stats: &SampleStatistics,
) -> std::result::Result<f64, Failure> {
    let rule = flags.get("--lambda-rule").unwrap_or("value");
    match rule {
        "value" => {
            let lambda = flags
                .parse_f64("--lambda")?
                .ok_or_else(|| Failure::User("fit needs --lambda (or --lambda-rule)".into()))?;
            if !(lambda >= 0.0) {
                return user(format!("--lambda must be non-negative, got {lambda}"));
            }
            Ok(lambda)
        }
        "calibrated" | "sim" | "thm2" => {
            let config_path = flags.require("--config").map_err(|_| {
                Failure::User(format!(
                    "--lambda-rule {rule} derives the penalty from a population scenario; \
                     pass --config"
                ))
            })?;
            let config = parse_config(&read_to_string(config_path)?)?;
            let spec = population_from_config(&config)?;
            if spec.p() != stats.p() {
                eprintln!(
                    "warning: scenario dimension p = {} differs from the data's {} features; \
                     the penalty rule uses the scenario's population",
                    spec.p(),
                    stats.p()
                );
            }
            let n = stats.n();
            let lambda = match rule {
                "calibrated" => lambda_calibrated_rule(&spec, n),
                "sim" => lambda_simulation_rule(&spec, n),
                _ => lambda_recovery_rule(&spec, n, DEFAULT_K_LAMBDA),
            };
            lambda.map_err(|e| Failure::Compute(e.to_string()))
        }
        other => {
            user(format!("--lambda-rule must be calibrated, sim, thm2, or value; got '{other}'"))
        }
    }
}

fn cmd_fit(flags: &Flags) -> CmdResult {
    let data_path = flags.require("--data")?;
    let out_path = flags.require("--out")?;
    let label_column = flags.get("--labels").unwrap_or("label");
    let opts = solver_options(flags)?;

    let table = read_labeled_csv(data_path, label_column)?;
    let stats = compute_stats(&table.dataset)
        .map_err(|e| Failure::User(format!("'{data_path}': {e}")))?;
    for &group in stats.singleton_groups() {
        eprintln!("warning: group {group} has a single observation and adds no scatter");
    }

    let lambda = resolve_fit_lambda(flags, &stats)?;
    let prob =
        Problem::from_stats(&stats, lambda).map_err(|e| Failure::Compute(e.to_string()))?;
    let (coef, report) = solve(&prob, &opts).map_err(|e| Failure::Compute(e.to_string()))?;

    if coef.support().is_empty() {
        eprintln!("warning: empty support — lambda = {lambda} zeroed every row");
    }
    if !report.converged {
        eprintln!(
            "warning: not converged after {} sweeps (kkt residual {:.3e})",
            report.sweeps, report.kkt_residual
        );
    }
    println!("support {} of {} features", coef.support_size(), stats.p());
    println!(
        "lambda {:.6e}  kkt_residual {:.3e}  converged {}  sweeps {}",
        lambda, report.kkt_residual, report.converged, report.sweeps
    );

    let classifier = build_model(&stats, coef.matrix())
        .map_err(|e| Failure::Compute(e.to_string()))?;
    let stored = StoredModel {
        v: coef.matrix().clone(),
        means: stats.means().clone(),
        counts: stats.counts().to_vec(),
        gram: classifier.gram().clone(),
        support: coef.support().to_vec(),
        lambda,
        iterations: report.sweeps,
        objective: report.objective,
        kkt_residual: report.kkt_residual,
        converged: report.converged,
        feature_names: table.feature_names,
        label_names: table.label_names,
    };
    write_file(out_path, &render_model(&stored))
}

// ---------------------------------------------------------------------------
// predict

fn cmd_predict(flags: &Flags) -> CmdResult {
    let model_path = flags.require("--model")?;
    let data_path = flags.require("--data")?;
    let out_path = flags.require("--out")?;

    let stored = parse_model(&read_to_string(model_path)?)?;
    let (features, _) = read_feature_csv(data_path)?;
    if features.cols() != stored.v.rows() {
        return user(format!(
            "'{data_path}' has {} feature columns, model wants {}",
            features.cols(),
            stored.v.rows()
        ));
    }
    let classifier = stored.classifier()?;
    let results = classifier
        .classify_batch(&features)
        .map_err(|e| Failure::User(format!("'{data_path}': {e}")))?;

    let groups = classifier.groups();
    let mut out = String::from("label");
    for g in 1..=groups {
        out.push_str(&format!(",score_{g}"));
    }
    out.push('\n');
    for result in &results {
        match &stored.label_names {
            Some(names) => out.push_str(&names[result.label - 1]),
            None => out.push_str(&result.label.to_string()),
        }
        for score in &result.scores {
            out.push(',');
            out.push_str(&format_g17(*score));
        }
        out.push('\n');
    }
    write_file(out_path, &out)?;
    println!("predicted {} rows into '{out_path}'", results.len());
    Ok(())
}

// ---------------------------------------------------------------------------
// simulate

fn scenario_from_config(
    config: &ConfigFile,
    flags: &Flags,
) -> std::result::Result<ScenarioConfig, Failure> {
    let structure = require_key(config.structure, "structure")?;
    let p = require_key(config.p, "p")?;
    let s = require_key(config.s, "s")?;
    let rho = require_key(config.rho, "rho")?;
    let mut scenario = ScenarioConfig::new(structure, p, s, rho);
    if let Some(groups) = config.groups {
        scenario.groups = groups;
    }
    scenario.priors = config.priors.clone();
    scenario.thetas = config
        .thetas
        .clone()
        .ok_or_else(|| Failure::User("config is missing required key 'theta'".into()))?;
    if let Some(replicates) = flags.parse_usize("--replicates")?.or(config.replicates) {
        scenario.replicates = replicates;
    }
    if let Some(seed) = flags.parse_u64("--seed")?.or(config.seed) {
        scenario.base_seed = seed;
    }
    scenario.lambda_rule = lambda_rule_from_config(config)?;
    if let Some(tol) = flags.parse_f64("--tol")?.or(config.tol) {
        scenario.tol = tol;
    }
    if let Some(max_sweeps) = flags.parse_usize("--max-iter")?.or(config.max_sweeps) {
        scenario.max_sweeps = max_sweeps;
    }
    scenario.validate().map_err(|e| Failure::User(e.to_string()))?;
    Ok(scenario)
}

fn thread_cap() -> std::result::Result<usize, Failure> {
    match std::env::var("MGSDA_THREADS") {
        Ok(raw) => raw
            .parse()
            .map_err(|_| Failure::User(format!("MGSDA_THREADS: invalid integer '{raw}'"))),
        Err(_) => Ok(0),
    }
}

fn cmd_simulate(flags: &Flags) -> CmdResult {
    let config_path = flags.require("--config")?;
    let out_path = flags.require("--out")?;
    let aggregate_path = flags.require("--aggregate")?;

    let config = parse_config(&read_to_string(config_path)?)?;
    let scenario = scenario_from_config(&config, flags)?;
    let threads = thread_cap()?;

    let result = run_sweep(&scenario, threads).map_err(|e| Failure::User(e.to_string()))?;
    write_file(out_path, &records_csv(&result))?;
    write_file(aggregate_path, &aggregates_csv(&result))?;

    for aggregate in &result.aggregates {
        println!(
            "theta {:>8.3}  n {:>6}  mean hamming {:>8.3}  stderr {:>7.3}  used {}/{}",
            aggregate.theta,
            scenario.sample_size(aggregate.theta),
            aggregate.mean_hamming,
            aggregate.stderr,
            aggregate.replicates_used,
            scenario.replicates
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// diagnose

fn render_report(report: &DiagnosticsReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("p={}\n", report.p));
    out.push_str(&format!("s={}\n", report.s));
    out.push_str(&format!("groups={}\n", report.groups));
    out.push_str(&format!("n={}\n", report.n));
    out.push_str(&format!(
        "irrepresentability_exact={}\n",
        format_g17(report.irrepresentability_exact)
    ));
    out.push_str(&format!(
        "irrepresentability_worst={}\n",
        format_g17(report.irrepresentability_worst)
    ));
    out.push_str(&format!("alpha={}\n", format_g17(report.alpha)));
    out.push_str(&format!("psi_min={}\n", format_g17(report.psi_min)));
    out.push_str(&format!("lambda_max={}\n", format_g17(report.lambda_max)));
    out.push_str(&format!("lambda_max_sqrt_s={}\n", format_g17(report.lambda_max_sqrt_s)));
    out.push_str(&format!(
        "psi_min_requirement={}\n",
        format_g17(report.psi_min_requirement)
    ));
    out.push_str(&format!(
        "sample_complexity_core={}\n",
        format_g17(report.sample_complexity_core)
    ));
    out.push_str(&format!("lambda_recovery={}\n", format_g17(report.lambda_recovery)));
    out.push_str(&format!("lambda_sim={}\n", format_g17(report.lambda_sim)));
    out.push_str(&format!("lambda_calibrated={}\n", format_g17(report.lambda_calibrated)));
    // The exact expression behind lambda_sim, so report consumers never
    // have to guess the orientation of the quadratic form.
    out.push_str(
        "lambda_sim_form=0.5/(1+opnorm(Delta_A'*inv(Sigma_AA)*Delta_A))*sqrt(log(p-s)/n)\n",
    );
    out
}

fn cmd_diagnose(flags: &Flags) -> CmdResult {
    let config_path = flags.require("--config")?;
    let out_path = flags.require("--out")?;
    let config = parse_config(&read_to_string(config_path)?)?;
    let spec = population_from_config(&config)?;
    let n = flags
        .parse_usize("--n")?
        .or(config.n)
        .ok_or_else(|| Failure::User("diagnose needs 'n' in the config or --n".into()))?;

    let report = build_report(&spec, n).map_err(|e| Failure::Compute(e.to_string()))?;
    write_file(out_path, &render_report(&report))?;
    println!("wrote diagnostics for p={} s={} n={} to '{out_path}'", report.p, report.s, n);
    Ok(())
}

// ---------------------------------------------------------------------------
// plot

const PLOT_LEFT: f64 = 80.0;
const PLOT_RIGHT: f64 = 740.0;
const PLOT_TOP: f64 = 60.0;
const PLOT_BOTTOM: f64 = 520.0;
const TICKS: usize = 10;
const PALETTE: [&str; 6] =
    ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn trim_number(value: f64) -> String {
    let mut text = format!("{value:.3}");
    while text.contains('.') && (text.ends_with('0') || text.ends_with('.')) {
        text.pop();
    }
    text
}

/// Self-contained SVG line chart: one polyline per series over a fixed
/// 800x600 view box with 10 ticks per axis.
fn render_plot(series: &[(String, Vec<(f64, f64)>)]) -> String {
    let xs: Vec<f64> = series.iter().flat_map(|(_, pts)| pts.iter().map(|p| p.0)).collect();
    let ys: Vec<f64> = series.iter().flat_map(|(_, pts)| pts.iter().map(|p| p.1)).collect();
    let x_min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let x_max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let y_min = 0.0f64.min(ys.iter().copied().fold(f64::INFINITY, f64::min));
    let y_max = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(y_min + 1e-9);
    let x_span = if x_max > x_min { x_max - x_min } else { 1.0 };
    let y_span = if y_max > y_min { y_max - y_min } else { 1.0 };

    let px = |x: f64| PLOT_LEFT + (x - x_min) / x_span * (PLOT_RIGHT - PLOT_LEFT);
    let py = |y: f64| PLOT_BOTTOM - (y - y_min) / y_span * (PLOT_BOTTOM - PLOT_TOP);

    let mut svg = String::new();
    svg.push_str(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 800 600\" \
         font-family=\"sans-serif\" font-size=\"13\">\n",
    );
    svg.push_str("<rect x=\"0\" y=\"0\" width=\"800\" height=\"600\" fill=\"white\"/>\n");

    for i in 0..TICKS {
        let f = i as f64 / (TICKS - 1) as f64;
        let x_val = x_min + f * x_span;
        let y_val = y_min + f * y_span;
        let x = px(x_val);
        let y = py(y_val);
        svg.push_str(&format!(
            "<line x1=\"{x:.3}\" y1=\"{PLOT_BOTTOM}\" x2=\"{x:.3}\" y2=\"{:.3}\" \
             stroke=\"#dddddd\"/>\n",
            PLOT_BOTTOM + 6.0
        ));
        svg.push_str(&format!(
            "<text x=\"{x:.3}\" y=\"{:.3}\" text-anchor=\"middle\">{}</text>\n",
            PLOT_BOTTOM + 22.0,
            trim_number(x_val)
        ));
        svg.push_str(&format!(
            "<line x1=\"{:.3}\" y1=\"{y:.3}\" x2=\"{PLOT_LEFT}\" y2=\"{y:.3}\" \
             stroke=\"#dddddd\"/>\n",
            PLOT_LEFT - 6.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.3}\" y=\"{:.3}\" text-anchor=\"end\">{}</text>\n",
            PLOT_LEFT - 10.0,
            y + 4.0,
            trim_number(y_val)
        ));
    }
    svg.push_str(&format!(
        "<line x1=\"{PLOT_LEFT}\" y1=\"{PLOT_BOTTOM}\" x2=\"{PLOT_RIGHT}\" y2=\"{PLOT_BOTTOM}\" \
         stroke=\"black\"/>\n"
    ));
    svg.push_str(&format!(
        "<line x1=\"{PLOT_LEFT}\" y1=\"{PLOT_TOP}\" x2=\"{PLOT_LEFT}\" y2=\"{PLOT_BOTTOM}\" \
         stroke=\"black\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{:.3}\" y=\"560\" text-anchor=\"middle\">theta = n / (s log p)</text>\n",
        (PLOT_LEFT + PLOT_RIGHT) / 2.0
    ));
    svg.push_str(&format!(
        "<text x=\"22\" y=\"{:.3}\" text-anchor=\"middle\" \
         transform=\"rotate(-90 22 {:.3})\">mean Hamming distance</text>\n",
        (PLOT_TOP + PLOT_BOTTOM) / 2.0,
        (PLOT_TOP + PLOT_BOTTOM) / 2.0
    ));

    for (index, (label, points)) in series.iter().enumerate() {
        let color = PALETTE[index % PALETTE.len()];
        let coords: Vec<String> =
            points.iter().map(|&(x, y)| format!("{:.3},{:.3}", px(x), py(y))).collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
            coords.join(" ")
        ));
        let legend_y = PLOT_TOP + 18.0 * index as f64;
        svg.push_str(&format!(
            "<line x1=\"620\" y1=\"{legend_y:.3}\" x2=\"650\" y2=\"{legend_y:.3}\" \
             stroke=\"{color}\" stroke-width=\"2\"/>\n"
        ));
        svg.push_str(&format!(
            "<text x=\"656\" y=\"{:.3}\">{label}</text>\n",
            legend_y + 4.0
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn cmd_plot(flags: &Flags) -> CmdResult {
    let data_path = flags.require("--data")?;
    let out_path = flags.require("--out")?;
    let text = read_to_string(data_path)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = "theta,p,s,rho,structure,mean_hamming,stderr,replicates_used";
    match lines.next() {
        Some(first) if first.trim() == header => {}
        Some(first) => {
            return user(format!(
                "'{data_path}': expected aggregate header '{header}', got '{}'",
                first.trim()
            ));
        }
        None => return user(format!("'{data_path}' is empty")),
    }

    // One series per problem size p.
    let mut series: Vec<(usize, Vec<(f64, f64)>)> = Vec::new();
    for (row_no, line) in lines.enumerate() {
        let cells = split_csv_line(line);
        if cells.len() != 8 {
            return user(format!(
                "'{data_path}' row {}: expected 8 cells, got {}",
                row_no + 2,
                cells.len()
            ));
        }
        let bad = |col: &str| {
            Failure::User(format!("'{data_path}' row {}: invalid {col}", row_no + 2))
        };
        let theta: f64 = cells[0].parse().map_err(|_| bad("theta"))?;
        let p: usize = cells[1].parse().map_err(|_| bad("p"))?;
        let mean: f64 = cells[5].parse().map_err(|_| bad("mean_hamming"))?;
        if !mean.is_finite() {
            continue; // cells with no usable replicates
        }
        match series.iter_mut().find(|(size, _)| *size == p) {
            Some((_, points)) => points.push((theta, mean)),
            None => series.push((p, vec![(theta, mean)])),
        }
    }
    if series.is_empty() {
        return user(format!("'{data_path}' has no plottable rows"));
    }
    series.sort_by_key(|(p, _)| *p);
    for (_, points) in series.iter_mut() {
        points.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite theta"));
    }
    let labeled: Vec<(String, Vec<(f64, f64)>)> =
        series.into_iter().map(|(p, pts)| (format!("p = {p}"), pts)).collect();
    write_file(out_path, &render_plot(&labeled))?;
    println!("wrote figure to '{out_path}'");
    Ok(())
}
