// SPDX-License-Identifier: Apache-2.0

//! `oodbench` command-line front end.
//!
//! Sets are given as `features.glmc:manifest.csv`; OOD sets take an optional
//! name, `name=features.glmc:manifest.csv`. Data goes to stdout or `--out`,
//! diagnostics to stderr. Exit codes: 0 success, 1 validation or
//! configuration failure, 2 usage error.

use std::collections::HashMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::embedding_store::{
    join, read_embedding_set, read_manifest, DatasetManifest, EmbeddingSet, Split,
};
use crate::harness::{
    self, evaluate, extract_id, histogram, score_map, write_report, BenchmarkSpec, HarnessError,
    Report, ReportFormat, SetRef, SweepParameter,
};
use crate::scores::{score_images, ScoreConfig, ScoreFunction, Scorer};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "oodbench",
    version,
    about = "Zero-shot OOD detection scoring and evaluation over pre-extracted features"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check feature files and manifests and report how they join
    Validate(ValidateArgs),
    /// FPR95 and AUROC for every (score config, OOD set) pair
    Eval(EvalArgs),
    /// Mean FPR95 and AUROC across a range of lambda or tau values
    Sweep(SweepArgs),
    /// Binned score counts for one set
    Histogram(HistogramArgs),
    /// Images scoring at or above a threshold, with per-category counts
    Extract(ExtractArgs),
    /// Per-region best class and score for every image of a set
    Scoremap(ScoremapArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Json => ReportFormat::Json,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ParamArg {
    Lambda,
    Tau,
}

#[derive(Debug, Clone, PartialEq)]
struct SetArg {
    features: PathBuf,
    manifest: Option<PathBuf>,
}

impl SetArg {
    fn manifest(&self) -> Result<&Path, CliError> {
        self.manifest.as_deref().ok_or_else(|| {
            CliError::Usage(format!(
                "{} needs a manifest: use FEATURES.glmc:MANIFEST.csv",
                self.features.display()
            ))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
struct NamedSetArg {
    name: String,
    set: SetArg,
}

fn parse_set(s: &str) -> Result<SetArg, String> {
    if s.is_empty() {
        return Err("empty set reference".into());
    }
    match s.rsplit_once(':') {
        Some((features, manifest)) if !features.is_empty() && !manifest.is_empty() => Ok(SetArg {
            features: features.into(),
            manifest: Some(manifest.into()),
        }),
        Some(_) => Err(format!(
            "malformed set reference {s:?}, expected FEATURES:MANIFEST"
        )),
        None => Ok(SetArg {
            features: s.into(),
            manifest: None,
        }),
    }
}

fn parse_named_set(s: &str) -> Result<NamedSetArg, String> {
    let (name, rest) = match s.split_once('=') {
        Some((name, rest)) if !name.is_empty() => (Some(name.to_string()), rest),
        Some(_) => return Err(format!("empty set name in {s:?}")),
        None => (None, s),
    };
    let set = parse_set(rest)?;
    let name = name.unwrap_or_else(|| {
        let source = set.manifest.as_ref().unwrap_or(&set.features);
        source
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| rest.to_string())
    });
    Ok(NamedSetArg { name, set })
}

fn parse_values(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|e| format!("bad value {v:?}: {e}"))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
struct ValueList(Vec<f64>);

fn parse_value_list(s: &str) -> Result<ValueList, String> {
    parse_values(s).map(ValueList)
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    match parse_values(s)?.as_slice() {
        [lo, hi] => Ok((*lo, *hi)),
        _ => Err(format!("range must be LO,HI, got {s:?}")),
    }
}

fn parse_real(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|e| format!("{e}"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{s:?} is not a finite number"))
    }
}

#[derive(Debug, Args)]
struct OutputArgs {
    /// Output format
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    /// Write data to this file instead of stdout
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ParamArgs {
    /// Softmax temperature
    #[arg(long, default_value_t = ScoreConfig::DEFAULT_TAU, value_parser = parse_real)]
    tau: f64,
    /// Weight of the local term for glmcm
    #[arg(long, default_value_t = ScoreConfig::DEFAULT_LAMBDA, value_parser = parse_real)]
    lambda: f64,
}

#[derive(Debug, Args)]
struct JobsArg {
    /// Worker threads (0 = one per core)
    #[arg(long, default_value_t = 0, value_name = "N")]
    jobs: usize,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// ID set, FEATURES.glmc[:MANIFEST.csv]
    #[arg(long, value_name = "SET", value_parser = parse_set)]
    id: Option<SetArg>,
    /// OOD set, [NAME=]FEATURES.glmc[:MANIFEST.csv]; repeatable
    #[arg(long, value_name = "SET", value_parser = parse_named_set)]
    ood: Vec<NamedSetArg>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// ID set, FEATURES.glmc:MANIFEST.csv
    #[arg(long, value_name = "SET", value_parser = parse_set)]
    id: SetArg,
    /// OOD set, [NAME=]FEATURES.glmc:MANIFEST.csv; repeatable
    #[arg(long, value_name = "SET", required = true, value_parser = parse_named_set)]
    ood: Vec<NamedSetArg>,
    /// Score function; repeatable
    #[arg(long, value_name = "FUNCTION", default_value = "glmcm", value_parser = clap::value_parser!(ScoreFunction))]
    score: Vec<ScoreFunction>,
    #[command(flatten)]
    params: ParamArgs,
    #[command(flatten)]
    output: OutputArgs,
    #[command(flatten)]
    jobs: JobsArg,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// ID set, FEATURES.glmc:MANIFEST.csv
    #[arg(long, value_name = "SET", value_parser = parse_set)]
    id: SetArg,
    /// OOD set, [NAME=]FEATURES.glmc:MANIFEST.csv; repeatable
    #[arg(long, value_name = "SET", required = true, value_parser = parse_named_set)]
    ood: Vec<NamedSetArg>,
    /// Parameter to vary
    #[arg(long, value_enum)]
    param: ParamArg,
    /// Comma-separated parameter values
    #[arg(long, value_name = "LIST", value_parser = parse_value_list)]
    values: ValueList,
    /// Score function held fixed during the sweep
    #[arg(long, value_name = "FUNCTION", default_value = "glmcm", value_parser = clap::value_parser!(ScoreFunction))]
    score: ScoreFunction,
    #[command(flatten)]
    params: ParamArgs,
    #[command(flatten)]
    output: OutputArgs,
    #[command(flatten)]
    jobs: JobsArg,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["id", "ood"]))]
struct HistogramArgs {
    /// Histogram the ID entries of this set
    #[arg(long, value_name = "SET", value_parser = parse_set)]
    id: Option<SetArg>,
    /// Histogram the OOD entries of this set
    #[arg(long, value_name = "SET", value_parser = parse_named_set)]
    ood: Option<NamedSetArg>,
    #[arg(long, value_name = "FUNCTION", default_value = "glmcm", value_parser = clap::value_parser!(ScoreFunction))]
    score: ScoreFunction,
    #[command(flatten)]
    params: ParamArgs,
    /// Number of bins
    #[arg(long, default_value_t = harness::DEFAULT_BINS as u32, value_parser = clap::value_parser!(u32).range(1..))]
    bins: u32,
    /// Bin range LO,HI (default: observed min..max)
    #[arg(long, value_name = "LO,HI", value_parser = parse_range)]
    range: Option<(f64, f64)>,
    #[command(flatten)]
    output: OutputArgs,
    #[command(flatten)]
    jobs: JobsArg,
}

#[derive(Debug, Args)]
struct ExtractArgs {
    /// Set to extract from (all manifest entries are scored)
    #[arg(long, value_name = "SET", value_parser = parse_set)]
    id: SetArg,
    #[arg(long, value_name = "FUNCTION", default_value = "glmcm", value_parser = clap::value_parser!(ScoreFunction))]
    score: ScoreFunction,
    #[command(flatten)]
    params: ParamArgs,
    /// Images scoring at or above this value are extracted
    #[arg(long, value_parser = parse_real)]
    threshold: f64,
    #[command(flatten)]
    output: OutputArgs,
    #[command(flatten)]
    jobs: JobsArg,
}

#[derive(Debug, Args)]
struct ScoremapArgs {
    /// Set to map, FEATURES.glmc[:MANIFEST.csv]
    #[arg(long, value_name = "SET", value_parser = parse_set)]
    id: SetArg,
    /// Only map this image; repeatable (default: every image)
    #[arg(long, value_name = "IMAGE_ID")]
    image: Vec<String>,
    /// Softmax temperature
    #[arg(long, default_value_t = ScoreConfig::DEFAULT_TAU, value_parser = parse_real)]
    tau: f64,
    /// Output format
    #[arg(long, value_enum, default_value = "json")]
    format: FormatArg,
    /// Write data to this file instead of stdout
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Failed(#[from] HarnessError),
}

impl From<crate::embedding_store::StoreError> for CliError {
    fn from(e: crate::embedding_store::StoreError) -> Self {
        CliError::Failed(e.into())
    }
}

impl From<crate::scores::ScoreError> for CliError {
    fn from(e: crate::scores::ScoreError) -> Self {
        CliError::Failed(e.into())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Failed(e.into())
    }
}

/// Loads each distinct file once.
#[derive(Default)]
struct Loader {
    sets: HashMap<PathBuf, EmbeddingSet>,
    manifests: HashMap<PathBuf, DatasetManifest>,
}

impl Loader {
    fn load(&mut self, set: &SetArg) -> Result<(), CliError> {
        if !self.sets.contains_key(&set.features) {
            let file = File::open(&set.features).map_err(|e| {
                HarnessError::Config(format!("cannot open {}: {e}", set.features.display()))
            })?;
            let loaded = read_embedding_set(BufReader::new(file))
                .map_err(|e| HarnessError::Config(format!("{}: {e}", set.features.display())))?;
            log::info!(
                "loaded {}: {} classes, dim {}, {} images",
                set.features.display(),
                loaded.text.num_classes(),
                loaded.dim(),
                loaded.images.len()
            );
            self.sets.insert(set.features.clone(), loaded);
        }
        if let Some(path) = &set.manifest {
            if !self.manifests.contains_key(path) {
                let file = File::open(path).map_err(|e| {
                    HarnessError::Config(format!("cannot open {}: {e}", path.display()))
                })?;
                let manifest = read_manifest(BufReader::new(file))
                    .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
                self.manifests.insert(path.clone(), manifest);
            }
        }
        Ok(())
    }

    fn set_ref(&self, set: &SetArg) -> Result<SetRef<'_>, CliError> {
        Ok(SetRef::new(
            &self.sets[&set.features],
            &self.manifests[set.manifest()?],
        ))
    }
}

fn config(function: ScoreFunction, params: &ParamArgs) -> Result<ScoreConfig, CliError> {
    ScoreConfig::new(function, params.tau, params.lambda).map_err(|e| CliError::Failed(e.into()))
}

fn emit<R: Report + ?Sized>(
    report: &R,
    format: FormatArg,
    out_path: Option<&Path>,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    match out_path {
        Some(path) => {
            let file = File::create(path)?;
            write_report(report, format.into(), BufWriter::new(file))?;
        }
        None => write_report(report, format.into(), stdout)?,
    }
    Ok(())
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{}", e.render());
                    EXIT_OK
                }
                _ => {
                    let _ = write!(stderr, "{}", e.render());
                    EXIT_USAGE
                }
            };
        }
    };
    match dispatch(cli.command, stdout, stderr) {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_USAGE
        }
        Err(CliError::Failed(e)) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_FAILURE
        }
    }
}

fn dispatch(
    command: Command,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<(), CliError> {
    match command {
        Command::Validate(args) => validate(args, stdout, stderr),
        Command::Eval(args) => run_eval(args, stdout),
        Command::Sweep(args) => run_sweep(args, stdout),
        Command::Histogram(args) => run_histogram(args, stdout),
        Command::Extract(args) => run_extract(args, stdout, stderr),
        Command::Scoremap(args) => run_scoremap(args, stdout),
    }
}

struct ValidationSummary {
    rows: Vec<ValidationRow>,
}

struct ValidationRow {
    role: String,
    features: String,
    classes: usize,
    dim: usize,
    images: usize,
    joined: Option<(usize, usize, usize, usize, usize)>,
}

impl Report for ValidationSummary {
    fn write_csv(&self, out: &mut dyn Write) -> std::io::Result<()> {
        writeln!(
            out,
            "set,features,classes,dim,images,joined,id_entries,ood_entries,unlabeled_features,missing_features"
        )?;
        for r in &self.rows {
            let joined = match r.joined {
                Some((j, i, o, u, m)) => format!("{j},{i},{o},{u},{m}"),
                None => ",,,,".to_string(),
            };
            writeln!(
                out,
                "{},{},{},{},{},{joined}",
                r.role, r.features, r.classes, r.dim, r.images
            )?;
        }
        Ok(())
    }

    fn to_json(&self) -> serde_json::Value {
        let rows: Vec<_> = self
            .rows
            .iter()
            .map(|r| {
                let mut v = json!({
                    "set": r.role,
                    "features": r.features,
                    "classes": r.classes,
                    "dim": r.dim,
                    "images": r.images,
                });
                if let Some((j, i, o, u, m)) = r.joined {
                    v["joined"] = json!(j);
                    v["id_entries"] = json!(i);
                    v["ood_entries"] = json!(o);
                    v["unlabeled_features"] = json!(u);
                    v["missing_features"] = json!(m);
                }
                v
            })
            .collect();
        json!(rows)
    }
}

fn validate(
    args: ValidateArgs,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<(), CliError> {
    let mut sets: Vec<(String, SetArg)> = Vec::new();
    if let Some(id) = args.id {
        sets.push(("id".into(), id));
    }
    sets.extend(args.ood.into_iter().map(|n| (n.name, n.set)));
    if sets.is_empty() {
        return Err(CliError::Usage("validate needs --id or --ood".into()));
    }
    let mut loader = Loader::default();
    let mut summary = ValidationSummary { rows: Vec::new() };
    for (role, set) in &sets {
        loader.load(set)?;
        let embeddings = &loader.sets[&set.features];
        let joined = match &set.manifest {
            Some(path) => {
                let table = join(embeddings, &loader.manifests[path])?;
                for id in &table.unlabeled_features {
                    let _ = writeln!(
                        stderr,
                        "warning: {role}: feature {id} has no manifest entry"
                    );
                }
                for id in &table.missing_features {
                    let _ = writeln!(
                        stderr,
                        "warning: {role}: manifest entry {id} has no features"
                    );
                }
                Some((
                    table.len(),
                    table.split(Split::Id).count(),
                    table.split(Split::Ood).count(),
                    table.unlabeled_features.len(),
                    table.missing_features.len(),
                ))
            }
            None => None,
        };
        summary.rows.push(ValidationRow {
            role: role.clone(),
            features: set.features.display().to_string(),
            classes: embeddings.text.num_classes(),
            dim: embeddings.dim(),
            images: embeddings.images.len(),
            joined,
        });
    }
    emit(
        &summary,
        args.output.format,
        args.output.out.as_deref(),
        stdout,
    )
}

fn load_benchmark(id: &SetArg, ood: &[NamedSetArg]) -> Result<Loader, CliError> {
    let mut loader = Loader::default();
    id.manifest()?;
    loader.load(id)?;
    for set in ood {
        set.set.manifest()?;
        loader.load(&set.set)?;
    }
    Ok(loader)
}

fn benchmark<'a>(
    loader: &'a Loader,
    id: &SetArg,
    ood: &[NamedSetArg],
    configs: Vec<ScoreConfig>,
) -> Result<BenchmarkSpec<'a>, CliError> {
    let ood_sets = ood
        .iter()
        .map(|n| Ok((n.name.clone(), loader.set_ref(&n.set)?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(BenchmarkSpec {
        id_set: loader.set_ref(id)?,
        ood_sets,
        configs,
    })
}

fn run_eval(args: EvalArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let loader = load_benchmark(&args.id, &args.ood)?;
    let mut configs = Vec::new();
    for f in &args.score {
        let c = config(*f, &args.params)?;
        if !configs.contains(&c) {
            configs.push(c);
        }
    }
    let spec = benchmark(&loader, &args.id, &args.ood, configs)?;
    let report = harness::with_workers(args.jobs.jobs, || evaluate(&spec))??;
    for avg in &report.averages {
        log::info!(
            "{}: mean FPR95 {:.4}, mean AUROC {:.4}",
            avg.config.name(),
            avg.mean_fpr95,
            avg.mean_auroc
        );
    }
    emit(
        &report,
        args.output.format,
        args.output.out.as_deref(),
        stdout,
    )
}

fn run_sweep(args: SweepArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let loader = load_benchmark(&args.id, &args.ood)?;
    let base = config(args.score, &args.params)?;
    let spec = benchmark(&loader, &args.id, &args.ood, vec![base])?;
    let parameter = match args.param {
        ParamArg::Lambda => SweepParameter::Lambda,
        ParamArg::Tau => SweepParameter::Tau,
    };
    let result = harness::with_workers(args.jobs.jobs, || {
        harness::sweep(&spec, parameter, &args.values.0)
    })??;
    emit(
        &result,
        args.output.format,
        args.output.out.as_deref(),
        stdout,
    )
}

fn run_histogram(args: HistogramArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let (set, split) = match (&args.id, &args.ood) {
        (Some(id), None) => (id, Split::Id),
        (None, Some(ood)) => (&ood.set, Split::Ood),
        _ => return Err(CliError::Usage("give exactly one of --id or --ood".into())),
    };
    set.manifest()?;
    let mut loader = Loader::default();
    loader.load(set)?;
    let set_ref = loader.set_ref(set)?;
    let cfg = config(args.score, &args.params)?;
    let images = set_ref.images(split)?;
    let scorer = Scorer::new(&set_ref.embeddings.text)?;
    let records = harness::with_workers(args.jobs.jobs, || score_images(&scorer, &images, &cfg))??;
    let hist = histogram(&records, args.bins as usize, args.range)?;
    emit(
        &hist,
        args.output.format,
        args.output.out.as_deref(),
        stdout,
    )
}

fn run_extract(
    args: ExtractArgs,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<(), CliError> {
    args.id.manifest()?;
    let mut loader = Loader::default();
    loader.load(&args.id)?;
    let set_ref = loader.set_ref(&args.id)?;
    let cfg = config(args.score, &args.params)?;
    let table = join(set_ref.embeddings, set_ref.manifest)?;
    let images: Vec<_> = table.rows.iter().map(|r| r.image).collect();
    let scorer = Scorer::new(&set_ref.embeddings.text)?;
    let records = harness::with_workers(args.jobs.jobs, || score_images(&scorer, &images, &cfg))??;
    let extraction = extract_id(&records, set_ref.manifest, args.threshold);
    let _ = writeln!(
        stderr,
        "extracted {} of {} images ({} ID, {} OOD) at threshold {}",
        extraction.extracted.len(),
        extraction.n_scored,
        extraction.extracted_id,
        extraction.extracted_ood,
        args.threshold
    );
    emit(
        &extraction,
        args.output.format,
        args.output.out.as_deref(),
        stdout,
    )
}

fn run_scoremap(args: ScoremapArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let mut loader = Loader::default();
    loader.load(&args.id)?;
    let set = &loader.sets[&args.id.features];
    let images = if args.image.is_empty() {
        set.images_canonical()
    } else {
        args.image
            .iter()
            .map(|id| {
                set.image(id).ok_or_else(|| {
                    CliError::Failed(HarnessError::Config(format!("no image {id:?} in set")))
                })
            })
            .collect::<Result<Vec<_>, _>>()?
    };
    let cfg = ScoreConfig::new(ScoreFunction::Lmcm, args.tau, 0.0)?;
    let maps = images
        .into_iter()
        .map(|image| score_map(image, &set.text, &cfg))
        .collect::<Result<Vec<_>, _>>()?;
    emit(maps.as_slice(), args.format, args.out.as_deref(), stdout)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let argv = std::iter::once("oodbench").chain(args.iter().copied());
        let code = run(argv, &mut out, &mut err);
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn set_reference_syntax() {
        assert_eq!(
            parse_set("a.glmc:b.csv").unwrap(),
            SetArg {
                features: "a.glmc".into(),
                manifest: Some("b.csv".into())
            }
        );
        assert_eq!(parse_set("a.glmc").unwrap().manifest, None);
        assert!(parse_set("a.glmc:").is_err());
        let named = parse_named_set("inat=f.glmc:inat.csv").unwrap();
        assert_eq!(named.name, "inat");
        assert_eq!(parse_named_set("f.glmc:sun.csv").unwrap().name, "sun");
        assert!(parse_named_set("=f.glmc:x.csv").is_err());
    }

    #[test]
    fn value_lists() {
        assert_eq!(parse_values("0,0.25, 0.5").unwrap(), vec![0.0, 0.25, 0.5]);
        assert!(parse_values("0,x").is_err());
        assert_eq!(parse_range("0,1").unwrap(), (0.0, 1.0));
        assert!(parse_range("0").is_err());
    }

    #[test]
    fn bogus_score_is_a_usage_error() {
        let (code, _, err) = run_args(&["eval", "--id", "a:b", "--ood", "c:d", "--score", "bogus"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("bogus"), "{err}");
    }

    #[test]
    fn unknown_flag_and_format_are_usage_errors() {
        assert_eq!(
            run_args(&["eval", "--id", "a:b", "--ood", "c:d", "--frobnicate"]).0,
            EXIT_USAGE
        );
        assert_eq!(
            run_args(&["eval", "--id", "a:b", "--ood", "c:d", "--format", "xml"]).0,
            EXIT_USAGE
        );
        assert_eq!(run_args(&[]).0, EXIT_USAGE);
    }

    #[test]
    fn missing_file_is_a_failure() {
        let (code, _, err) = run_args(&[
            "eval",
            "--id",
            "/nonexistent.glmc:/x.csv",
            "--ood",
            "o=/n.glmc:/y.csv",
        ]);
        assert_eq!(code, EXIT_FAILURE);
        assert!(err.contains("nonexistent"), "{err}");
    }

    #[test]
    fn help_lists_every_flag() {
        let expected: &[(&str, &[&str])] = &[
            ("validate", &["--id", "--ood", "--format", "--out"]),
            (
                "eval",
                &[
                    "--id", "--ood", "--score", "--tau", "--lambda", "--format", "--out", "--jobs",
                ],
            ),
            (
                "sweep",
                &[
                    "--id", "--ood", "--param", "--values", "--score", "--tau", "--lambda",
                    "--format", "--out", "--jobs",
                ],
            ),
            (
                "histogram",
                &[
                    "--id", "--ood", "--score", "--tau", "--lambda", "--bins", "--range",
                    "--format", "--out", "--jobs",
                ],
            ),
            (
                "extract",
                &[
                    "--id",
                    "--score",
                    "--tau",
                    "--lambda",
                    "--threshold",
                    "--format",
                    "--out",
                    "--jobs",
                ],
            ),
            (
                "scoremap",
                &["--id", "--image", "--tau", "--format", "--out"],
            ),
        ];
        for (sub, flags) in expected {
            let (code, out, _) = run_args(&[sub, "--help"]);
            assert_eq!(code, EXIT_OK);
            for flag in *flags {
                assert!(out.contains(flag), "{sub} --help is missing {flag}:\n{out}");
            }
        }
    }
}
