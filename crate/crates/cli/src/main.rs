//! `cfx`: counterfactual explanations from the command line.
//!
//! Exit codes: 0 success, 2 no counterfactual, 3 invalid input.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cfx_core::regularizers::{read_dataset, transpose_columns};
use cfx_core::{
    compute_blackbox, compute_counterfactual, load_model, mad_weights, CounterfactualQuery, CounterfactualReport,
    Label, ModelSpec, Prediction, Regularizer,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

#[derive(Parser, Debug)]
#[command(name = "cfx", version, about = "Compute counterfactual explanations for a model")]
#[command(args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate inverse-MAD feature weights from a CSV dataset (header row required).
    Weights {
        csv: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Model JSON document.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Input vector: a JSON array, comma-separated values, or a file holding either.
    #[arg(long, conflicts_with = "batch", allow_hyphen_values = true)]
    input: Option<String>,
    /// CSV of inputs (header row, one instance per row).
    #[arg(long)]
    batch: Option<PathBuf>,
    /// Requested prediction: a class label, or a number for regressors.
    #[arg(long, allow_hyphen_values = true)]
    target: Option<String>,
    #[arg(long, value_enum, default_value_t = RegularizerKind::L2)]
    regularizer: RegularizerKind,
    /// `uniform`, `mad:<csv>` or `file:<json array>`; applies to l1.
    #[arg(long, default_value = "uniform")]
    weights: String,
    #[arg(long, default_value_t = cfx_core::engine::DEFAULT_MARGIN, allow_hyphen_values = true)]
    margin: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    tolerance: f64,
    #[arg(long, value_enum, default_value_t = MethodChoice::Auto)]
    method: MethodChoice,
    /// Write the report here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum RegularizerKind {
    L1,
    L2,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodChoice {
    Auto,
    Blackbox,
}

#[derive(Debug)]
enum Failure {
    /// Exit 3.
    Invalid { reason: String, message: String },
    /// Exit 2.
    NoCounterfactual { reason: String, message: String },
}

impl Failure {
    fn invalid(message: impl Into<String>) -> Self {
        Failure::Invalid {
            reason: "InvalidInput".into(),
            message: message.into(),
        }
    }

    fn code(&self) -> u8 {
        match self {
            Failure::Invalid { .. } => 3,
            Failure::NoCounterfactual { .. } => 2,
        }
    }

    fn to_json(&self) -> Value {
        let (Failure::Invalid { reason, message } | Failure::NoCounterfactual { reason, message }) = self;
        json!({ "error": { "reason": reason, "message": message } })
    }
}

impl From<cfx_core::Error> for Failure {
    fn from(e: cfx_core::Error) -> Self {
        let reason = e.reason().to_string();
        let message = e.to_string();
        if e.is_no_counterfactual() {
            Failure::NoCounterfactual { reason, message }
        } else {
            Failure::Invalid { reason, message }
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::invalid(format!("cannot read {}: {e}", path.display())))
}

fn parse_vector(text: &str) -> Result<Vec<f64>, Failure> {
    let t = text.trim();
    let values: Vec<f64> = if t.starts_with('[') {
        serde_json::from_str(t).map_err(|e| Failure::invalid(format!("input is not a numeric JSON array: {e}")))?
    } else {
        t.split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| Failure::invalid(format!("`{v}` is not a number"))))
            .collect::<Result<_, _>>()?
    };
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Failure::invalid("input contains non-finite values"));
    }
    Ok(values)
}

fn input_vector(arg: &str) -> Result<Vec<f64>, Failure> {
    let path = Path::new(arg);
    if !arg.trim_start().starts_with('[') && path.is_file() {
        parse_vector(&read(path)?)
    } else {
        parse_vector(arg)
    }
}

fn target_for(model: &ModelSpec, text: &str) -> Result<Prediction, Failure> {
    if model.is_regression() {
        let v: f64 = text
            .trim()
            .parse()
            .map_err(|_| Failure::invalid(format!("regression target `{text}` is not a number")))?;
        Ok(Prediction::Value(v))
    } else {
        Ok(Prediction::Label(Label::parse(text)))
    }
}

fn regularizer(kind: RegularizerKind, weights: &str, dim: usize) -> Result<Regularizer, Failure> {
    let alpha = match weights.split_once(':') {
        None if weights == "uniform" => None,
        Some(("mad", path)) => Some(mad_weights(&read_dataset(read(Path::new(path))?.as_bytes())?)?),
        Some(("file", path)) => Some(
            serde_json::from_str::<Vec<f64>>(&read(Path::new(path))?)
                .map_err(|e| Failure::invalid(format!("weights file is not a JSON array: {e}")))?,
        ),
        _ => return Err(Failure::invalid(format!("unknown weights mode `{weights}`"))),
    };
    match (kind, alpha) {
        (RegularizerKind::L2, None) => Ok(Regularizer::Euclidean),
        (RegularizerKind::L2, Some(_)) => Err(Failure::invalid("feature weights apply to the l1 regularizer only")),
        (RegularizerKind::L1, None) => Ok(Regularizer::uniform_manhattan(dim)),
        (RegularizerKind::L1, Some(w)) => Ok(Regularizer::manhattan(w)?),
    }
}

fn solve(model: &ModelSpec, query: &CounterfactualQuery, method: MethodChoice) -> Result<CounterfactualReport, Failure> {
    let report = match method {
        MethodChoice::Auto => compute_counterfactual(model, query)?,
        MethodChoice::Blackbox => compute_blackbox(model, query)?,
    };
    Ok(report)
}

fn emit(value: &Value, output: Option<&Path>) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).expect("reports serialize");
    match output {
        Some(path) => fs::write(path, text + "\n")
            .map_err(|e| Failure::invalid(format!("cannot write {}: {e}", path.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            writeln!(out, "{text}").map_err(|e| Failure::invalid(format!("cannot write to stdout: {e}")))
        }
    }
}

struct Run {
    model: ModelSpec,
    target: Prediction,
    regularizer: Regularizer,
    args: RunArgs,
}

impl Run {
    fn prepare(args: RunArgs) -> Result<Self, Failure> {
        let model_path = args.model.as_deref().ok_or_else(|| Failure::invalid("--model is required"))?;
        let model = load_model(&read(model_path)?)?;
        let target_text = args.target.as_deref().ok_or_else(|| Failure::invalid("--target is required"))?;
        let target = target_for(&model, target_text)?;
        let regularizer = regularizer(args.regularizer, &args.weights, model.dimension())?;
        if !(args.margin > 0.0 && args.margin.is_finite()) {
            return Err(Failure::invalid("--margin must be positive"));
        }
        if !(args.tolerance >= 0.0 && args.tolerance.is_finite()) {
            return Err(Failure::invalid("--tolerance must be non-negative"));
        }
        Ok(Self { model, target, regularizer, args })
    }

    fn query(&self, x: Vec<f64>) -> CounterfactualQuery {
        CounterfactualQuery::new(x, self.target.clone(), self.regularizer.clone())
            .with_margin(self.args.margin)
            .with_tolerance(self.args.tolerance)
    }

    fn one(&self, x: Vec<f64>) -> Result<CounterfactualReport, Failure> {
        solve(&self.model, &self.query(x), self.args.method)
    }
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let run = Run::prepare(args)?;
    let output = run.args.output.clone();
    if let Some(batch) = &run.args.batch {
        let rows = transpose_columns(&read_dataset(read(batch)?.as_bytes())?);
        let mut worst: Option<Failure> = None;
        let records: Vec<Value> = rows
            .into_iter()
            .map(|x| match run.one(x) {
                Ok(r) => serde_json::to_value(r).expect("reports serialize"),
                Err(f) => {
                    let v = f.to_json();
                    if worst.as_ref().is_none_or(|w| f.code() > w.code()) {
                        worst = Some(f);
                    }
                    v
                }
            })
            .collect();
        emit(&Value::Array(records), output.as_deref())?;
        return worst.map_or(Ok(()), Err);
    }
    let arg = run.args.input.as_deref().ok_or_else(|| Failure::invalid("--input or --batch is required"))?;
    let report = run.one(input_vector(arg)?)?;
    emit(&serde_json::to_value(report).expect("reports serialize"), output.as_deref())
}

fn weights(csv: &Path, output: Option<&Path>) -> Result<(), Failure> {
    let w = mad_weights(&read_dataset(read(csv)?.as_bytes())?)?;
    emit(&json!(w), output)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(3) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Some(Command::Weights { csv, output }) => weights(&csv, output.as_deref()),
        None => {
            let output = cli.run.output.clone();
            let batch = cli.run.batch.is_some();
            run(cli.run).inspect_err(|f| {
                // Batch mode has already written its records.
                if !batch {
                    let _ = emit(&f.to_json(), output.as_deref());
                }
            })
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Invalid { reason, message } | Failure::NoCounterfactual { reason, message }) = &f;
            eprintln!("cfx: {reason}: {message}");
            ExitCode::from(f.code())
        }
    }
}
