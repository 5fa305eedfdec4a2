//! `msunique`: train filter banks, score image pairs, evaluate metrics.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 corrupt artifact.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand};
use msunique::decoder::{LossScale, TrainingConfig};
use msunique::evaluation::{evaluate, export_scatter};
use msunique::filterbank::{
    export_filter_mosaic, label_counts, load_bank, save_bank, train_bank, FilterBank, KindSelection,
};
use msunique::imageio::{load_image, parse_manifest, SubjectiveEntry};
use msunique::patchpipe::{extract_random_patches, PatchMatrix};
use msunique::scoring::quality_score;
use msunique::{colorspace, format_sig17, Error};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

#[derive(Parser)]
#[command(
    name = "msunique",
    version,
    about = "Unsupervised multi-model image quality estimation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a filter bank from a directory of PPM images.
    Train(TrainArgs),
    /// Score one (reference, distorted) pair or a manifest of pairs.
    Score(ScoreArgs),
    /// Regress scores onto subjective ratings and report agreement statistics.
    Evaluate(EvaluateArgs),
    /// Summarize a bank file.
    Inspect(InspectArgs),
    /// Write per-model filter mosaics as PPM images.
    ExportFilters(ExportArgs),
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    images: PathBuf,
    /// Randomly sample this many images instead of using all of them.
    #[arg(long)]
    num_images: Option<usize>,
    #[arg(long, default_value_t = 100)]
    patches_per_image: usize,
    #[arg(long, default_value_t = 8)]
    patch_side: usize,
    #[arg(long, value_delimiter = ',', default_value = "81,121,169,400,625")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 400)]
    epochs: usize,
    #[arg(long, default_value_t = 0.035)]
    rho: f64,
    #[arg(long, default_value_t = 5.0)]
    beta: f64,
    #[arg(long, default_value_t = 0.003)]
    lambda: f64,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.025)]
    tau: f64,
    #[arg(long, default_value = "mean")]
    loss_scale: String,
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    seed: i64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
#[command(group(ArgGroup::new("input").required(true).args(["ref", "batch"])))]
struct ScoreArgs {
    #[arg(long)]
    bank: PathBuf,
    #[arg(long, requires = "dist", conflicts_with = "batch")]
    r#ref: Option<PathBuf>,
    #[arg(long, requires = "ref")]
    dist: Option<PathBuf>,
    /// Manifest CSV of pairs to score.
    #[arg(long, requires = "out")]
    batch: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Bank used to score every manifest pair.
    #[arg(long, conflicts_with = "scores", required_unless_present = "scores")]
    bank: Option<PathBuf>,
    /// Precomputed scores CSV with `dist_path` and `score` columns.
    #[arg(long)]
    scores: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    bins: usize,
    /// Scatter CSV path; the report CSV is written beside it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    bank: PathBuf,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    bank: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "all")]
    kind: String,
}

enum Failure {
    Usage(String),
    Data(Error),
    Corrupt(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_corrupt_artifact() {
            Failure::Corrupt(e)
        } else {
            Failure::Data(e)
        }
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Score(a) => cmd_score(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Inspect(a) => cmd_inspect(a),
        Command::ExportFilters(a) => cmd_export_filters(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Corrupt(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}

fn list_images(dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let rd = fs::read_dir(dir)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = rd
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|x| x.to_str())
                    .is_some_and(|x| x.eq_ignore_ascii_case("ppm"))
        })
        .collect();
    files.sort();
    Ok(files)
}

fn cmd_train(a: TrainArgs) -> CmdResult {
    let loss_scale: LossScale = a
        .loss_scale
        .parse()
        .map_err(|e: Error| Failure::Usage(e.to_string()))?;
    if a.patch_side == 0 || a.patches_per_image == 0 {
        return Err(Failure::Usage(
            "--patch-side and --patches-per-image must be positive".into(),
        ));
    }
    let mut files = list_images(&a.images)?;
    if files.is_empty() {
        return Err(Failure::Data(Error::InvalidArgument(format!(
            "no .ppm images in {}",
            a.images.display()
        ))));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed as u64);
    if let Some(n) = a.num_images {
        if n == 0 || n > files.len() {
            return Err(Failure::Usage(format!(
                "--num-images {n} must be between 1 and {} (images found)",
                files.len()
            )));
        }
        let mut picked = sample(&mut rng, files.len(), n).into_vec();
        picked.sort_unstable();
        files = picked.into_iter().map(|i| files[i].clone()).collect();
    }
    let mut parts = Vec::with_capacity(files.len());
    for f in &files {
        let img = colorspace::to_ygcr(&load_image(f)?);
        parts.push(extract_random_patches(
            &img,
            a.patches_per_image,
            a.patch_side,
            &mut rng,
        )?);
    }
    let patches = PatchMatrix::hstack(&parts)?;
    let cfg = TrainingConfig {
        rho: a.rho,
        beta: a.beta,
        lambda: a.lambda,
        epochs: a.epochs,
        seed: a.seed,
        loss_scale,
    };
    println!(
        "config: images={} patches={} patch_side={} sizes={:?} epochs={} rho={} beta={} lambda={} epsilon={} tau={} loss_scale={} seed={}",
        files.len(),
        patches.count(),
        a.patch_side,
        a.sizes,
        cfg.epochs,
        cfg.rho,
        cfg.beta,
        cfg.lambda,
        a.epsilon,
        a.tau,
        cfg.loss_scale,
        cfg.seed
    );
    let (bank, summaries) = train_bank(&patches, &a.sizes, &cfg, a.epsilon, a.tau)?;
    for s in &summaries {
        println!(
            "model h={}: J {} -> {} ({} iterations) edge={} color={} neutral={}",
            s.hidden,
            format_sig17(s.initial_objective()),
            format_sig17(s.final_objective()),
            s.trace.len() - 1,
            s.edge,
            s.color,
            s.neutral
        );
    }
    save_bank(&bank, &a.out)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn score_entries(
    bank: &FilterBank,
    entries: &[SubjectiveEntry],
) -> Result<Vec<msunique::scoring::Quality>, Error> {
    entries
        .par_iter()
        .map(|e| {
            let reference = load_image(&e.reference_path)?;
            let distorted = load_image(&e.distorted_path)?;
            quality_score(bank, &reference, &distorted)
        })
        .collect()
}

fn cmd_score(a: ScoreArgs) -> CmdResult {
    let bank = load_bank(&a.bank)?;
    match (a.r#ref, a.dist, a.batch) {
        (Some(r), Some(d), None) => {
            let q = quality_score(&bank, &load_image(r)?, &load_image(d)?)?;
            println!(
                "rho={} score={}",
                format_sig17(q.rho),
                format_sig17(q.score)
            );
            Ok(())
        }
        (None, None, Some(manifest)) => {
            let out = a.out.expect("clap enforces --out with --batch");
            let entries = parse_manifest(&manifest)?;
            let scores = score_entries(&bank, &entries)?;
            let mut w = csv::Writer::from_path(&out).map_err(|e| Failure::Data(e.into()))?;
            let io = |e: csv::Error| Failure::Data(e.into());
            w.write_record(["dist_path", "ref_path", "rho", "score"])
                .map_err(io)?;
            for (e, q) in entries.iter().zip(&scores) {
                w.write_record([
                    e.distorted_key.as_str(),
                    e.reference_key.as_str(),
                    &format_sig17(q.rho),
                    &format_sig17(q.score),
                ])
                .map_err(io)?;
            }
            w.flush().map_err(|e| {
                Failure::Data(Error::Io {
                    path: out.clone(),
                    source: e,
                })
            })?;
            println!("scored {} pairs -> {}", entries.len(), out.display());
            Ok(())
        }
        _ => Err(Failure::Usage(
            "give either --ref and --dist, or --batch with --out".into(),
        )),
    }
}

/// Reads `dist_path,score` columns (other columns ignored) keyed by path.
fn read_scores(path: &Path) -> Result<HashMap<String, f64>, Failure> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Failure::Data(e.into()))?;
    let headers = r.headers().map_err(|e| Failure::Data(e.into()))?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            Failure::Data(Error::InvalidArgument(format!(
                "scores file lacks a `{name}` column"
            )))
        })
    };
    let (dist_col, score_col) = (col("dist_path")?, col("score")?);
    let mut out = HashMap::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Failure::Data(e.into()))?;
        let value: f64 = rec
            .get(score_col)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| {
                Failure::Data(Error::InvalidArgument(format!(
                    "bad score in row {:?}",
                    rec
                )))
            })?;
        out.insert(rec.get(dist_col).unwrap_or_default().to_string(), value);
    }
    Ok(out)
}

fn cmd_evaluate(a: EvaluateArgs) -> CmdResult {
    let entries = parse_manifest(&a.manifest)?;
    let objective: Vec<f64> = match (&a.bank, &a.scores) {
        (Some(bank), None) => {
            let bank = load_bank(bank)?;
            println!(
                "bank: patch_side={} sizes={:?} epochs={} rho={} beta={} lambda={} epsilon={} tau={} seed={}",
                bank.patch_side,
                bank.models.iter().map(|m| m.hidden()).collect::<Vec<_>>(),
                bank.config.epochs,
                bank.config.rho,
                bank.config.beta,
                bank.config.lambda,
                bank.whitening.epsilon(),
                bank.suppression_tau,
                bank.config.seed
            );
            score_entries(&bank, &entries)?
                .into_iter()
                .map(|q| q.score)
                .collect()
        }
        (None, Some(path)) => {
            let table = read_scores(path)?;
            entries
                .iter()
                .map(|e| {
                    table.get(&e.distorted_key).copied().ok_or_else(|| {
                        Failure::Data(Error::InvalidArgument(format!(
                            "no score for `{}` in {}",
                            e.distorted_key,
                            path.display()
                        )))
                    })
                })
                .collect::<Result<_, _>>()?
        }
        _ => {
            return Err(Failure::Usage(
                "give exactly one of --bank or --scores".into(),
            ))
        }
    };
    let report = evaluate(&objective, &entries, a.bins)?;
    if report.outlier_ratio.is_none() {
        eprintln!("notice: outlier ratio omitted (manifest lacks score std for some entries)");
    }
    print!("{}", report.to_key_value());
    if let Some(out) = &a.out {
        let subjective: Vec<f64> = entries.iter().map(|e| e.subjective_score).collect();
        export_scatter(&objective, &report.fit.regressed, &subjective, out)?;
        let report_path = out.with_extension("report.csv");
        let mut f = fs::File::create(&report_path).map_err(|e| {
            Failure::Data(Error::Io {
                path: report_path.clone(),
                source: e,
            })
        })?;
        f.write_all(report.to_csv().as_bytes()).map_err(|e| {
            Failure::Data(Error::Io {
                path: report_path.clone(),
                source: e,
            })
        })?;
        println!("wrote {} and {}", out.display(), report_path.display());
    }
    Ok(())
}

fn cmd_inspect(a: InspectArgs) -> CmdResult {
    let bank = load_bank(&a.bank)?;
    println!(
        "patch_side={} input_dim={}",
        bank.patch_side,
        bank.input_dim()
    );
    println!(
        "models={} filters={}",
        bank.models.len(),
        bank.filter_count()
    );
    println!(
        "config: epochs={} rho={} beta={} lambda={} epsilon={} tau={} seed={}",
        bank.config.epochs,
        bank.config.rho,
        bank.config.beta,
        bank.config.lambda,
        bank.whitening.epsilon(),
        bank.suppression_tau,
        bank.config.seed
    );
    for (i, (m, labels)) in bank.models.iter().zip(&bank.labels).enumerate() {
        let (edge, color, neutral) = label_counts(labels);
        let (lo, hi) = labels
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), l| {
                (lo.min(l.kurtosis), hi.max(l.kurtosis))
            });
        println!(
            "model {i}: h={} edge={edge} color={color} neutral={neutral} kurtosis=[{lo:.4}, {hi:.4}]",
            m.hidden()
        );
    }
    Ok(())
}

fn cmd_export_filters(a: ExportArgs) -> CmdResult {
    let kind: KindSelection = a
        .kind
        .parse()
        .map_err(|e: Error| Failure::Usage(e.to_string()))?;
    let bank = load_bank(&a.bank)?;
    fs::create_dir_all(&a.out).map_err(|e| {
        Failure::Data(Error::Io {
            path: a.out.clone(),
            source: e,
        })
    })?;
    for (i, m) in bank.models.iter().enumerate() {
        let path = a
            .out
            .join(format!("model{}_h{}_{}.ppm", i, m.hidden(), a.kind));
        let tiles = export_filter_mosaic(&bank, i, kind, &path)?;
        if tiles == 0 {
            println!(
                "model {i} (h={}): no {} filters, nothing written",
                m.hidden(),
                a.kind
            );
        } else {
            println!(
                "model {i} (h={}): {tiles} tiles -> {}",
                m.hidden(),
                path.display()
            );
        }
    }
    Ok(())
}
