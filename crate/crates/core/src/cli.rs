//! Command-line frontend: `bands`, `filter`, `similarity`, `sweep`.
//!
//! Failures print one line `error[<class>]: <message>` to stderr and exit with
//! 1 (usage), 2 (data) or 3 (numeric degeneracy). Success writes nothing to stderr.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_traits::ToPrimitive;
use rayon::prelude::*;

use crate::bands::{default_scheme, parse_band_spec, BandCombination, ComboName};
use crate::error::{Error, ErrorClass, Result};
use crate::io;
use crate::report::{
    self, rank_combinations, CombinationScore, FilterInfo, ItemStatus, ProjectionInfo, ReportMetadata, SimilarityItem,
    SimilarityReport, SimilaritySummary, SweepDocument,
};
use crate::scalar::Scalar;
use crate::similarity::{
    cosine_similarity, directional_loss, filtered_class_token, frequency_sweep, mean_std, projected_similarity,
    score_filter, threshold_patch_losses, DirectionalLossInputs, Embedding, ProjectionMatrix, DEFAULT_TAU,
};
use crate::spectral::{filter_sequence, BandFilter, EmbeddingSequence};

#[derive(Debug, Parser)]
#[command(name = "spectralclip", version, about = "Band-stop DCT filtering of token-embedding sequences")]
struct Cli {
    /// Compute in double precision (files are always single precision).
    #[arg(long = "f64", global = true)]
    f64: bool,

    /// Worker threads for batch work; output order never depends on it.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    jobs: u16,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the default band scheme for a sequence length.
    Bands(BandsArgs),
    /// Band-stop filter a sequence file.
    Filter(FilterArgs),
    /// Score stylized/content pairs against style and source text embeddings.
    Similarity(SimilarityArgs),
    /// Mask each frequency in turn and score against a text embedding.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args)]
struct OutputArgs {
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Report format.
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Debug, Args)]
struct BandsArgs {
    /// Sequence length.
    n: usize,

    /// Emit JSON instead of the text table.
    #[arg(long)]
    json: bool,

    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FilterArgs {
    /// Input sequence (.json for JSON, anything else binary).
    input: PathBuf,

    /// Band spec: c1|c2|c3, band names (b1,b4) or index ranges (0-1,8-15); "" masks nothing.
    #[arg(long = "bands", allow_hyphen_values = true)]
    bands: String,

    /// Output sequence (.json for JSON, anything else binary).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SimilarityArgs {
    /// Stylized image sequences, one per item.
    #[arg(long, num_args = 1.., required = true)]
    stylized: Vec<PathBuf>,

    /// Content image sequences, paired with --stylized by position.
    #[arg(long, num_args = 1.., required = true)]
    content: Vec<PathBuf>,

    /// Style text embedding (one-token sequence file).
    #[arg(long)]
    style: PathBuf,

    /// Source text embedding (one-token sequence file).
    #[arg(long)]
    source: PathBuf,

    /// Band spec applied to every image sequence; "" masks nothing.
    #[arg(long = "bands", default_value = "", allow_hyphen_values = true)]
    bands: String,

    /// Patch-rejection threshold.
    #[arg(long, default_value_t = DEFAULT_TAU, allow_negative_numbers = true)]
    tau: f64,

    /// Projection matrix file for projected scores.
    #[arg(long)]
    proj: Option<PathBuf>,

    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Image sequences, all of the same shape.
    #[arg(required = true)]
    sequences: Vec<PathBuf>,

    /// Text embedding to score against (one-token sequence file).
    #[arg(long)]
    text: PathBuf,

    /// Projection matrix file for projected scores.
    #[arg(long)]
    proj: Option<PathBuf>,

    #[command(flatten)]
    output: OutputArgs,
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return 0;
            }
            let rendered = e.to_string();
            let first = rendered.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid arguments");
            let msg = first.trim_start_matches("error: ").to_string();
            return report_error(stderr, &Error::Usage(msg));
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.jobs as usize).build() {
        Ok(pool) => pool,
        Err(e) => return report_error(stderr, &Error::Usage(format!("cannot start {} worker threads: {e}", cli.jobs))),
    };
    let result = pool.install(|| if cli.f64 { dispatch::<f64>(&cli) } else { dispatch::<f32>(&cli) });
    match result.and_then(|output| output.emit(stdout)) {
        Ok(()) => 0,
        Err(e) => report_error(stderr, &e),
    }
}

fn report_error(stderr: &mut dyn Write, e: &Error) -> i32 {
    let class: ErrorClass = e.class();
    let msg = e.to_string().replace('\n', " ");
    let _ = writeln!(stderr, "error[{}]: {msg}", class.tag());
    class.exit_code()
}

fn precision<T: Scalar>() -> &'static str {
    if std::mem::size_of::<T>() == 8 {
        "f64"
    } else {
        "f32"
    }
}

fn dispatch<T: Scalar>(cli: &Cli) -> Result<Output> {
    match &cli.command {
        Command::Bands(a) => cmd_bands(a),
        Command::Filter(a) => cmd_filter::<T>(a).map(|()| Output::Done),
        Command::Similarity(a) => cmd_similarity::<T>(a),
        Command::Sweep(a) => cmd_sweep::<T>(a),
    }
}

/// What a command produced; written only after the command fully succeeded.
enum Output {
    Done,
    Text { path: Option<PathBuf>, text: String },
}

impl Output {
    fn text(path: Option<&Path>, text: String) -> Self {
        Output::Text { path: path.map(Path::to_path_buf), text }
    }

    fn emit(self, stdout: &mut dyn Write) -> Result<()> {
        match self {
            Output::Done => Ok(()),
            Output::Text { path: Some(path), text } => io::write_atomically(&path, text.as_bytes()),
            Output::Text { path: None, text } => stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Error::io("writing stdout", e)),
        }
    }
}

/// Renders the band table for `n`.
pub fn band_table(n: usize) -> Result<String> {
    let scheme = default_scheme(n)?;
    let mut text = String::from("band index period\n");
    for row in scheme.table() {
        text.push_str(&row.to_string());
        text.push('\n');
    }
    Ok(text)
}

fn cmd_bands(args: &BandsArgs) -> Result<Output> {
    let text = if args.json {
        let scheme = default_scheme(args.n)?;
        report::to_json(&serde_json::json!({ "n": args.n, "bands": scheme.table() }))
    } else {
        band_table(args.n)?
    };
    Ok(Output::text(args.out.as_deref(), text))
}

fn resolve(spec: &str, n: usize) -> Result<(BandCombination, BandFilter)> {
    let combo = parse_band_spec(spec)?;
    let filter = combo.resolve_for_length(n)?;
    Ok((combo, filter))
}

fn cmd_filter<T: Scalar>(args: &FilterArgs) -> Result<()> {
    let seq = io::load_sequence::<T>(&args.input)?;
    let (_, filter) = resolve(&args.bands, seq.n())?;
    let out = filter_sequence(&seq, &filter)?;
    io::save_sequence(&args.out, &out)
}

fn load_all<T: Scalar>(paths: &[PathBuf]) -> Result<Vec<EmbeddingSequence<T>>> {
    paths.par_iter().map(|p| io::load_sequence::<T>(p)).collect()
}

fn load_projection<T: Scalar>(path: Option<&Path>) -> Result<Option<(ProjectionMatrix<T>, ProjectionInfo)>> {
    let Some(path) = path else { return Ok(None) };
    let (proj, sha256) = io::load_projection::<T>(path)?;
    let info =
        ProjectionInfo { path: path.display().to_string(), sha256, out_dim: proj.out_dim(), in_dim: proj.in_dim() };
    Ok(Some((proj, info)))
}

fn render<R: serde::Serialize>(format: Format, doc: &R, csv: impl FnOnce() -> Result<String>) -> Result<String> {
    match format {
        Format::Json => Ok(report::to_json(doc)),
        Format::Csv => csv(),
    }
}

fn to_f64<A: ToPrimitive>(v: A) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

/// Per-item scores; degenerate outcomes are recorded, not raised.
struct ItemScores {
    clip: Option<f64>,
    projected: Option<f64>,
    loss: Result<f64>,
    diagnostics: Vec<String>,
}

fn score_item<T: Scalar>(
    stylized: &EmbeddingSequence<T>,
    content: &EmbeddingSequence<T>,
    style: &Embedding<T>,
    source: &Embedding<T>,
    filter: &BandFilter,
    proj: Option<&ProjectionMatrix<T>>,
) -> Result<ItemScores> {
    let zs = filtered_class_token(stylized, filter)?;
    let zc = filtered_class_token(content, filter)?;
    let mut diagnostics = Vec::new();
    let mut soft = |r: Result<T::Acc>, what: &str| -> Result<Option<f64>> {
        match r {
            Ok(v) => Ok(Some(to_f64(v))),
            Err(e) if e.class() == ErrorClass::Degenerate => {
                diagnostics.push(format!("{what}: {e}"));
                Ok(None)
            }
            Err(e) => Err(e),
        }
    };
    let clip = soft(cosine_similarity(&zs, style), "clip_score")?;
    let projected = match proj {
        Some(p) => soft(projected_similarity(&zs, style, p), "projected_score")?,
        None => None,
    };
    let inputs = DirectionalLossInputs::new(zs, zc, style.clone(), source.clone())?;
    let loss = match directional_loss(&inputs) {
        Ok(v) => Ok(to_f64(v)),
        Err(e) if e.class() == ErrorClass::Degenerate => {
            diagnostics.push(format!("directional_loss: {e}"));
            Err(e)
        }
        Err(e) => return Err(e),
    };
    Ok(ItemScores { clip, projected, loss, diagnostics })
}

fn cmd_similarity<T: Scalar>(args: &SimilarityArgs) -> Result<Output> {
    if args.stylized.len() != args.content.len() {
        return Err(Error::Usage(format!(
            "{} stylized files but {} content files; they are paired by position",
            args.stylized.len(),
            args.content.len()
        )));
    }
    if !args.tau.is_finite() {
        return Err(Error::Usage("--tau must be finite".into()));
    }
    let stylized = load_all::<T>(&args.stylized)?;
    let content = load_all::<T>(&args.content)?;
    let style = io::load_embedding::<T>(&args.style)?;
    let source = io::load_embedding::<T>(&args.source)?;
    let projection = load_projection::<T>(args.proj.as_deref())?;

    let n = stylized[0].n();
    for (k, (s, c)) in stylized.iter().zip(&content).enumerate() {
        for (path, seq) in [(&args.stylized[k], s), (&args.content[k], c)] {
            if seq.n() != n || seq.d() != style.dim() {
                return Err(Error::Shape(format!(
                    "{} is {}x{}, expected n = {n} and d = {}",
                    path.display(),
                    seq.n(),
                    seq.d(),
                    style.dim()
                )));
            }
        }
    }
    if source.dim() != style.dim() {
        return Err(Error::Shape(format!("source dim {} differs from style dim {}", source.dim(), style.dim())));
    }
    // A shared degenerate text direction would flag every item; fail the batch instead.
    crate::similarity::direction_norm(&style.sub(&source)?, "text direction (style - source)")?;

    let (combo, filter) = resolve(&args.bands, n)?;
    let proj = projection.as_ref().map(|(p, _)| p);
    let scored: Vec<ItemScores> = stylized
        .par_iter()
        .zip(content.par_iter())
        .map(|(s, c)| score_item(s, c, &style, &source, &filter, proj))
        .collect::<Result<_>>()?;

    let losses: Vec<Result<f64>> = scored
        .iter()
        .map(|s| s.loss.as_ref().map(|v| *v).map_err(|e| Error::DegenerateDirection(e.to_string())))
        .collect();
    let patch = threshold_patch_losses(&losses, args.tau);

    let items: Vec<SimilarityItem> = scored
        .into_iter()
        .zip(&patch.patches)
        .enumerate()
        .map(|(k, (s, p))| SimilarityItem {
            index: k,
            stylized: args.stylized[k].display().to_string(),
            content: args.content[k].display().to_string(),
            clip_score: s.clip,
            projected_score: s.projected,
            directional_loss: s.loss.ok(),
            patch_rejected: p.rejected,
            status: if s.diagnostics.is_empty() { ItemStatus::Ok } else { ItemStatus::Degenerate },
            diagnostics: s.diagnostics,
        })
        .collect();

    let column = |f: fn(&SimilarityItem) -> Option<f64>| mean_std(&items.iter().filter_map(f).collect::<Vec<_>>());
    let summary = SimilaritySummary {
        clip_score: column(|i| i.clip_score),
        projected_score: column(|i| i.projected_score),
        directional_loss: column(|i| i.directional_loss),
        patch_loss: patch.total,
        degenerate_items: items.iter().filter(|i| i.status == ItemStatus::Degenerate).count(),
    };
    let mut metadata = ReportMetadata::new("similarity", precision::<T>());
    metadata.filter = Some(FilterInfo::new(combo.to_string(), &filter));
    metadata.tau = Some(args.tau);
    metadata.projection = projection.map(|(_, info)| info);
    let doc = SimilarityReport { metadata, items, summary };
    let text = render(args.output.format, &doc, || report::similarity_csv(&doc))?;
    Ok(Output::text(args.output.out.as_deref(), text))
}

fn cmd_sweep<T: Scalar>(args: &SweepArgs) -> Result<Output> {
    let seqs = load_all::<T>(&args.sequences)?;
    let text_emb = io::load_embedding::<T>(&args.text)?;
    let projection = load_projection::<T>(args.proj.as_deref())?;
    let proj = projection.as_ref().map(|(p, _)| p);
    let sweep = frequency_sweep(&seqs, &text_emb, proj)?;

    let mut combinations = Vec::new();
    if let Ok(scheme) = default_scheme(sweep.n) {
        for name in ComboName::NAMED {
            let filter = BandCombination::named(name).resolve(&scheme)?;
            let row = score_filter(&seqs, &text_emb, proj, &filter)?;
            combinations.push(CombinationScore {
                name: name.as_str().to_string(),
                masked: filter.masked().to_vec(),
                mean: row.mean,
                std: row.std,
                scored: row.scored,
                skipped: row.skipped,
                rank: None,
            });
        }
        rank_combinations(&mut combinations);
    }

    let mut metadata = ReportMetadata::new("sweep", precision::<T>());
    metadata.projection = projection.map(|(_, info)| info);
    let doc = SweepDocument { metadata, sweep, combinations };
    let text = render(args.output.format, &doc, || report::sweep_csv(&doc.sweep))?;
    Ok(Output::text(args.output.out.as_deref(), text))
}
