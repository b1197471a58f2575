//! The `m2v` command line.
//!
//! Exit codes: 0 success, 1 domain error (bad VL, failed layout, failed
//! generation, malformed dataset rows), 2 usage or configuration error.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fs;
use std::io::{Read, Write};
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use m2v_core::bridge::{generate_vl, GenerationRequest, Provider, DEFAULT_MAX_RETRIES};
use m2v_core::icons::IconLibrary;
use m2v_core::layout::DivisionForm;
use m2v_core::metrics::{evaluate_item, EvalReport, LogicMatchOptions, MetricsError};
use m2v_core::model::validate;
use m2v_core::render::render_style;
use m2v_core::{parse, serialize, ParseError, StyleConfig, VisualStyle};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::dataset::{read_jsonl, to_jsonl, write_atomic, DatasetError, Row};
use crate::manifest::load_manifest;
use crate::provider::{load_replay, HttpProvider};

const MAX_DEFAULT_JOBS: usize = 8;

#[derive(Debug, Parser)]
#[command(name = "m2v", version, about = "Render, check, score and generate math word problem visual language (VL)")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and validate one VL; print its canonical form.
    Validate {
        /// VL file; stdin when omitted or `-`.
        input: Option<PathBuf>,
    },
    /// Render VL files to `{stem}_{style}.svg`.
    Render(RenderArgs),
    /// Score `pred_vl` against `gold_vl` over a JSONL dataset.
    Eval(EvalArgs),
    /// Fill `pred_vl` for each dataset row using a text-generation provider.
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StyleChoice {
    Formal,
    Intuitive,
    Both,
}

impl StyleChoice {
    fn styles(self) -> &'static [VisualStyle] {
        match self {
            StyleChoice::Formal => &[VisualStyle::Formal],
            StyleChoice::Intuitive => &[VisualStyle::Intuitive],
            StyleChoice::Both => &[VisualStyle::Formal, VisualStyle::Intuitive],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DivisionFormArg {
    PerGroupUnknown,
    GroupCountUnknown,
}

impl From<DivisionFormArg> for DivisionForm {
    fn from(arg: DivisionFormArg) -> Self {
        match arg {
            DivisionFormArg::PerGroupUnknown => DivisionForm::PerGroupUnknown,
            DivisionFormArg::GroupCountUnknown => DivisionForm::GroupCountUnknown,
        }
    }
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// VL files; `-` reads stdin (written as `stdin_{style}.svg`).
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = StyleChoice::Both)]
    pub style: StyleChoice,
    /// Icon manifest (JSON). Without it every icon is a labelled placeholder.
    #[arg(long)]
    pub icons: Option<PathBuf>,
    /// Output directory, created if needed.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Override the inferred reading of every division.
    #[arg(long, value_enum)]
    pub division_form: Option<DivisionFormArg>,
    /// Worker threads; defaults to the number of inputs, at most 8.
    #[arg(long)]
    pub jobs: Option<NonZeroUsize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub dataset: PathBuf,
    /// Directory for report.json and report.txt.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Count result-container quantities in logic match.
    #[arg(long)]
    pub lm_include_result: bool,
    /// Worker threads; defaults to the number of rows, at most 8.
    #[arg(long)]
    pub jobs: Option<NonZeroUsize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProviderKind {
    /// OpenAI-compatible endpoint configured by M2V_LLM_API_KEY,
    /// M2V_LLM_BASE_URL and M2V_LLM_MODEL.
    Http,
    /// Canned responses from `--replay`; never touches the network.
    Replay,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    pub dataset: PathBuf,
    #[arg(long, value_enum)]
    pub provider: ProviderKind,
    /// JSONL of `{"prompt_sha256", "response"}` for the replay provider.
    #[arg(long, required_if_eq("provider", "replay"))]
    pub replay: Option<PathBuf>,
    /// Output JSONL; defaults to rewriting the dataset in place. Rows already
    /// filled here (matched by id) are kept.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Add each row's `solution_expression` to the prompt.
    #[arg(long)]
    pub with_expression: bool,
    /// Provider calls allowed per row.
    #[arg(long, default_value_t = DEFAULT_MAX_RETRIES as u32, value_parser = clap::value_parser!(u32).range(1..))]
    pub max_retries: u32,
    /// In-context examples: VL texts separated by blank lines.
    #[arg(long)]
    pub examples: Option<PathBuf>,
    /// Rows in flight; defaults to 1.
    #[arg(long)]
    pub jobs: Option<NonZeroUsize>,
}

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    fn domain(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<DatasetError> for Failure {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Io { .. } => Failure::usage(e.to_string()),
            _ => Failure::domain(e.to_string()),
        }
    }
}

/// Runs the process-level command line.
pub fn main() -> i32 {
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(std::env::args_os(), &mut stdin.lock(), &mut stdout.lock(), &mut stderr.lock())
}

pub fn run<I, T>(args: I, stdin: &mut dyn Read, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
                return 2;
            }
            let _ = write!(out, "{}", e.render());
            return 0;
        }
    };
    let result = match cli.command {
        Command::Validate { input } => cmd_validate(input.as_deref(), stdin, out, err),
        Command::Render(args) => cmd_render(&args, stdin, out, err),
        Command::Eval(args) => cmd_eval(&args, out, err),
        Command::Generate(args) => cmd_generate(&args, err),
    };
    match result {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn read_source(input: Option<&Path>, stdin: &mut dyn Read) -> Result<(String, String), Failure> {
    match input {
        None => read_stdin(stdin).map(|t| ("stdin".to_string(), t)),
        Some(p) if p == Path::new("-") => read_stdin(stdin).map(|t| ("stdin".to_string(), t)),
        Some(p) => fs::read_to_string(p)
            .map(|t| (p.display().to_string(), t))
            .map_err(|e| Failure::usage(format!("cannot read {}: {e}", p.display()))),
    }
}

fn read_stdin(stdin: &mut dyn Read) -> Result<String, Failure> {
    let mut text = String::new();
    stdin
        .read_to_string(&mut text)
        .map_err(|e| Failure::usage(format!("cannot read stdin: {e}")))?;
    Ok(text)
}

/// `name:line:col: message` followed by the offending line and a caret.
pub fn parse_diagnostic(name: &str, text: &str, e: &ParseError) -> String {
    let start = e.span.byte_start.min(text.len());
    let line_start = text[..start].rfind('\n').map_or(0, |i| i + 1);
    let line_end = text[start..].find('\n').map_or(text.len(), |i| start + i);
    let line = &text[line_start..line_end];
    let col = text[line_start..start].chars().count();
    let width = text[start..e.span.byte_end.clamp(start, line_end)].chars().count().max(1);
    format!(
        "{name}:{}:{}: {e}\n  | {line}\n  | {}{}",
        e.span.line,
        col + 1,
        " ".repeat(col),
        "^".repeat(width)
    )
}

/// Parses and validates; warnings go to `warnings`.
fn load_tree(name: &str, text: &str, warnings: &mut Vec<String>) -> Result<m2v_core::Node, Failure> {
    if text.trim().is_empty() {
        return Err(Failure::usage(format!("{name}: empty input")));
    }
    let tree = parse(text).map_err(|e| Failure::domain(parse_diagnostic(name, text, &e)))?;
    let report = validate(&tree);
    warnings.extend(report.warnings().map(|w| format!("{name}: {w}")));
    let errors: Vec<String> = report.errors().map(|e| format!("{name}: {e}")).collect();
    if !errors.is_empty() {
        return Err(Failure::domain(errors.join("\n")));
    }
    Ok(tree)
}

fn cmd_validate(input: Option<&Path>, stdin: &mut dyn Read, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Failure> {
    let (name, text) = read_source(input, stdin)?;
    if text.trim().is_empty() {
        return Err(Failure::usage("empty input"));
    }
    let mut warnings = Vec::new();
    let tree = load_tree(&name, &text, &mut warnings);
    for w in &warnings {
        let _ = writeln!(err, "warning: {w}");
    }
    let _ = writeln!(out, "{}", serialize(&tree?));
    Ok(())
}

fn pool(jobs: Option<NonZeroUsize>, items: usize, cap: usize) -> Result<rayon::ThreadPool, Failure> {
    let threads = jobs.map_or_else(|| items.clamp(1, cap), NonZeroUsize::get);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Failure::usage(format!("cannot start worker threads: {e}")))
}

fn load_icons(path: Option<&Path>) -> Result<IconLibrary, Failure> {
    let Some(path) = path else {
        return Ok(IconLibrary::new());
    };
    let manifest = load_manifest(path).map_err(|e| Failure::usage(e.to_string()))?;
    manifest.load_library().map_err(|e| Failure::usage(e.to_string()))
}

#[derive(Default)]
struct RenderOutcome {
    written: Vec<PathBuf>,
    warnings: Vec<String>,
    errors: Vec<String>,
}

fn cmd_render(args: &RenderArgs, stdin: &mut dyn Read, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Failure> {
    let icons = load_icons(args.icons.as_deref())?;
    let mut sources = Vec::new();
    let mut stems = BTreeSet::new();
    for input in &args.inputs {
        let stem = if input == Path::new("-") {
            "stdin".to_string()
        } else {
            input
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .ok_or_else(|| Failure::usage(format!("{} has no file name", input.display())))?
        };
        if !stems.insert(stem.clone()) {
            return Err(Failure::usage(format!("two inputs would both write `{stem}_*.svg`")));
        }
        let (name, text) = read_source(Some(input), stdin)?;
        sources.push((stem, name, text));
    }
    fs::create_dir_all(&args.out).map_err(|e| Failure::usage(format!("cannot create {}: {e}", args.out.display())))?;

    let cfg = StyleConfig {
        division_form: args.division_form.map(DivisionForm::from),
        ..StyleConfig::default()
    };
    let outcomes: Vec<RenderOutcome> = pool(args.jobs, sources.len(), MAX_DEFAULT_JOBS)?.install(|| {
        sources
            .par_iter()
            .map(|(stem, name, text)| render_one(stem, name, text, args, &icons, &cfg))
            .collect()
    });

    let mut failed = 0;
    for outcome in &outcomes {
        for path in &outcome.written {
            let _ = writeln!(out, "wrote {}", path.display());
        }
        for w in &outcome.warnings {
            let _ = writeln!(err, "warning: {w}");
        }
        for e in &outcome.errors {
            let _ = writeln!(err, "error: {e}");
        }
        failed += outcome.errors.len();
    }
    if failed > 0 {
        return Err(Failure::domain(format!("{failed} rendering failure(s)")));
    }
    Ok(())
}

fn render_one(stem: &str, name: &str, text: &str, args: &RenderArgs, icons: &IconLibrary, cfg: &StyleConfig) -> RenderOutcome {
    let mut outcome = RenderOutcome::default();
    let tree = match load_tree(name, text, &mut outcome.warnings) {
        Ok(tree) => tree,
        Err(f) => {
            outcome.errors.push(f.message);
            return outcome;
        }
    };
    for &style in args.style.styles() {
        match render_style(&tree, style, icons, cfg) {
            Ok(doc) => {
                for w in doc.warnings {
                    let w = format!("{name}: {w}");
                    if !outcome.warnings.contains(&w) {
                        outcome.warnings.push(w);
                    }
                }
                let path = args.out.join(format!("{stem}_{}.svg", style.name()));
                match fs::write(&path, doc.text) {
                    Ok(()) => outcome.written.push(path),
                    Err(e) => outcome.errors.push(format!("cannot write {}: {e}", path.display())),
                }
            }
            Err(e) => outcome.errors.push(format!("{name} ({}): {e}", style.name())),
        }
    }
    outcome
}

fn cmd_eval(args: &EvalArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Failure> {
    let rows = read_jsonl(&args.dataset)?;
    if rows.is_empty() {
        return Err(Failure::usage(format!("{}: empty input", args.dataset.display())));
    }
    let items = rows.iter().map(Row::to_eval_item).collect::<Result<Vec<_>, _>>()?;
    let opts = LogicMatchOptions {
        include_result: args.lm_include_result,
    };
    let results: Vec<_> = pool(args.jobs, items.len(), MAX_DEFAULT_JOBS)?.install(|| items.par_iter().map(|item| evaluate_item(item, opts)).collect());
    let mut per_item = Vec::with_capacity(results.len());
    for (row, result) in rows.iter().zip(results) {
        match result {
            Ok(r) => per_item.push(r),
            Err(e @ MetricsError::MalformedGold { .. }) => return Err(Failure::domain(format!("line {}: {e}", row.line))),
        }
    }
    let report = EvalReport::from_items(per_item);
    let table = report.to_table();
    let document = json!({
        "dataset": args.dataset.display().to_string(),
        "options": { "lm_include_result": args.lm_include_result },
        "aggregate": report.aggregate,
        "strata": report.strata,
        "per_item": report.per_item,
    });
    fs::create_dir_all(&args.out).map_err(|e| Failure::usage(format!("cannot create {}: {e}", args.out.display())))?;
    let mut json_text = serde_json::to_string_pretty(&document).map_err(|e| Failure::domain(e.to_string()))?;
    json_text.push('\n');
    for (file, contents) in [("report.json", json_text.as_str()), ("report.txt", table.as_str())] {
        let path = args.out.join(file);
        write_atomic(&path, contents.as_bytes()).map_err(|e| Failure::usage(format!("cannot write {}: {e}", path.display())))?;
    }
    let _ = write!(out, "{table}");
    if report.aggregate.parse_failures > 0 {
        let _ = writeln!(err, "note: {} prediction(s) did not parse and are left out of Edit Dist", report.aggregate.parse_failures);
    }
    Ok(())
}

fn load_examples(path: &Path) -> Result<Vec<String>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))?;
    let mut examples = Vec::new();
    let mut current = String::new();
    for line in text.lines().chain(std::iter::once("")) {
        if line.trim().is_empty() {
            if !current.trim().is_empty() {
                examples.push(std::mem::take(&mut current).trim().to_string());
            }
            current.clear();
        } else {
            current.push_str(line);
            current.push('\n');
        }
    }
    for (i, example) in examples.iter().enumerate() {
        if let Err(e) = parse(example) {
            return Err(Failure::usage(format!("{}: example {} does not parse: {e}", path.display(), i + 1)));
        }
    }
    if examples.is_empty() {
        return Err(Failure::usage(format!("{}: no examples", path.display())));
    }
    Ok(examples)
}

fn cmd_generate(args: &GenerateArgs, err: &mut dyn Write) -> Result<(), Failure> {
    let provider: Box<dyn Provider + Sync> = match args.provider {
        ProviderKind::Http => Box::new(HttpProvider::from_env().map_err(|e| Failure::usage(e.to_string()))?),
        ProviderKind::Replay => {
            let path = args.replay.as_deref().ok_or_else(|| Failure::usage("--replay is required with --provider replay"))?;
            Box::new(load_replay(path).map_err(|e| Failure::usage(e.to_string()))?)
        }
    };
    let examples = args.examples.as_deref().map(load_examples).transpose()?;

    let mut rows = read_jsonl(&args.dataset)?;
    if rows.is_empty() {
        return Err(Failure::usage(format!("{}: empty input", args.dataset.display())));
    }
    let mut index = BTreeMap::new();
    for (i, row) in rows.iter().enumerate() {
        if let Some(first) = index.insert(row.id()?, i) {
            return Err(Failure::domain(format!("line {}: id repeats line {}", row.line, rows[first].line)));
        }
    }

    let out_path = args.out.clone().unwrap_or_else(|| args.dataset.clone());
    if out_path != args.dataset && out_path.exists() {
        for done in read_jsonl(&out_path)?.into_iter().filter(Row::is_filled) {
            if let Some(&i) = index.get(&done.id()?) {
                rows[i].fields.insert("pred_vl".to_string(), done.fields["pred_vl"].clone());
                rows[i].fields.shift_remove("error");
            }
        }
    }

    let pending: Vec<usize> = (0..rows.len()).filter(|&i| !rows[i].is_filled()).collect();
    for &i in &pending {
        let row = &rows[i];
        if row.text("mwp")?.is_none_or(|t| t.trim().is_empty()) {
            return Err(Failure::domain(format!("line {}: missing `mwp`", row.line)));
        }
        if args.with_expression && row.text("solution_expression")?.is_none_or(|t| t.trim().is_empty()) {
            return Err(Failure::domain(format!("line {}: --with-expression needs `solution_expression`", row.line)));
        }
    }

    let jobs = args.jobs.map_or(1, NonZeroUsize::get);
    let workers = pool(args.jobs, 1, 1)?;
    let persist = |rows: &[Row]| {
        write_atomic(&out_path, to_jsonl(rows).as_bytes()).map_err(|e| Failure::usage(format!("cannot write {}: {e}", out_path.display())))
    };
    let mut failed = 0;
    for chunk in pending.chunks(jobs) {
        let outcomes: Vec<Result<String, String>> = workers.install(|| {
            chunk
                .par_iter()
                .map(|&i| generate_row(provider.as_ref(), &rows[i], args, examples.as_deref()))
                .collect()
        });
        for (&i, outcome) in chunk.iter().zip(outcomes) {
            let fields = &mut rows[i].fields;
            match outcome {
                Ok(vl) => {
                    fields.insert("pred_vl".to_string(), Value::String(vl));
                    fields.shift_remove("error");
                }
                Err(message) => {
                    let _ = writeln!(err, "warning: line {}: {message}", rows[i].line);
                    let fields = &mut rows[i].fields;
                    fields.insert("pred_vl".to_string(), Value::Null);
                    fields.insert("error".to_string(), Value::String(message));
                    failed += 1;
                }
            }
        }
        persist(&rows)?;
    }
    if pending.is_empty() {
        persist(&rows)?;
    }
    let _ = writeln!(
        err,
        "generated {} of {} pending row(s); {} already filled",
        pending.len() - failed,
        pending.len(),
        rows.len() - pending.len()
    );
    if failed > 0 {
        return Err(Failure::domain(format!("{failed} row(s) failed; rerun to retry them")));
    }
    Ok(())
}

fn generate_row(provider: &(dyn Provider + Sync), row: &Row, args: &GenerateArgs, examples: Option<&[String]>) -> Result<String, String> {
    let mwp = row.text("mwp").map_err(|e| e.to_string())?.unwrap_or_default();
    let mut req = GenerationRequest::new(mwp);
    if let Some(examples) = examples {
        req.in_context_examples = examples.to_vec();
    }
    req.max_retries = args.max_retries as usize;
    if args.with_expression {
        req = req.with_expression(row.text("solution_expression").map_err(|e| e.to_string())?.unwrap_or_default());
    }
    generate_vl(&provider, &req).map(|g| serialize(&g.tree)).map_err(|e| e.to_string())
}
