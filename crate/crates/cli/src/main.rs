//! `adaptcd` — run, evaluate, generate fixtures, inspect provider files.
//!
//! Exit codes: 0 success, 1 usage error (bad flags, unreadable or invalid
//! inputs), 2 runtime/pipeline error, 3 some dataset pairs failed.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adaptcd::eval::{self, DatasetManifest};
use adaptcd::formats::{self, inspect, masks::MaskManifest};
use adaptcd::identify::TextPrototypes;
use adaptcd::imaging::io;
use adaptcd::pipeline::{self, Pipeline, PipelineConfig};
use adaptcd::providers::ProviderSelection;
use adaptcd::synth;
use anyhow::Context;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "adaptcd", version, about = "Training-free open-vocabulary change detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detect changes in one image pair.
    Run(RunArgs),
    /// Score a dataset manifest against its ground truth.
    Eval(EvalArgs),
    /// Write the constructed-scene fixture set.
    Synth(SynthArgs),
    /// Validate and summarise a .dfm, .masks.json or .emb.json file.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct StageOverrides {
    /// Disable adaptive radiometric alignment.
    #[arg(long)]
    no_ara: bool,
    /// Disable adaptive change thresholding (fixed percentile instead).
    #[arg(long)]
    no_act: bool,
    /// Disable adaptive confidence filtering.
    #[arg(long)]
    no_acf: bool,
    /// seg=<kind>:<param>,feat=<kind>:<param>,emb=<kind>:<param>
    #[arg(long, value_name = "SPEC")]
    provider: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    image_a: PathBuf,
    #[arg(long)]
    image_b: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    prompts: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also write every intermediate product under <out>/intermediate.
    #[arg(long)]
    dump_intermediate: bool,
    #[command(flatten)]
    stages: StageOverrides,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    stages: StageOverrides,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Number of pairs in the noisy suite.
    #[arg(long, default_value_t = 20)]
    noisy_count: usize,
}

#[derive(Args)]
struct InspectArgs {
    path: PathBuf,
}

enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
    Partial { failed: usize, total: usize },
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Runtime(_) => 2,
            Failure::Partial { .. } => 3,
        }
    }
}

type Outcome = Result<(), Failure>;

fn usage<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Usage(e.into())
}

fn runtime<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Runtime(e.into())
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    std::fs::write(path, bytes)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(runtime)
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(runtime)
}

fn json<T: serde::Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("serialisable");
    out.push(b'\n');
    out
}

fn load_config(path: &Path, stages: &StageOverrides) -> Result<PipelineConfig, Failure> {
    let mut cfg = PipelineConfig::read(path)
        .with_context(|| format!("loading config {}", path.display()))
        .map_err(usage)?;
    if let Some(flag) = &stages.provider {
        ProviderSelection::parse(flag)
            .and_then(|sel| sel.apply(&mut cfg))
            .map_err(usage)?;
    }
    cfg.ara.enabled &= !stages.no_ara;
    cfg.act.enabled &= !stages.no_act;
    cfg.acf.enabled &= !stages.no_acf;
    Ok(cfg)
}

fn cmd_run(args: RunArgs) -> Outcome {
    let mut cfg = load_config(&args.config, &args.stages)?;
    let prompts = || format!("loading prompts {}", args.prompts.display());
    let bytes = std::fs::read(&args.prompts).with_context(prompts).map_err(usage)?;
    let prototypes = TextPrototypes::from_json(&bytes).with_context(prompts).map_err(usage)?;
    cfg.prototypes = Some(prototypes.clone());
    cfg.dump_intermediate |= args.dump_intermediate;
    let pipeline = Pipeline::new(cfg).map_err(usage)?;
    let image_a = io::read_image(&args.image_a).map_err(usage)?;
    let image_b = io::read_image(&args.image_b).map_err(usage)?;

    let out = pipeline.run(&image_a, &image_b).map_err(runtime)?;
    for (stage, t) in &out.timings {
        log::info!("{stage}: {:.1} ms", t.as_secs_f64() * 1e3);
    }
    create_dir(&args.out)?;
    let mask = &out.identification.change.mask;
    write(&args.out.join("mask.png"), &io::encode_mask_png(mask))?;
    write(
        &args.out.join("mask.masks.json"),
        &formats::masks::encode(&MaskManifest::single(mask)),
    )?;
    write(&args.out.join("summary.json"), &json(&out.summary(&prototypes)))?;
    let dumped = pipeline::dump_if_enabled(&out, pipeline.config(), &args.out.join("intermediate"))
        .map_err(runtime)?;
    println!(
        "changed pixels: {} of {}",
        mask.count(),
        mask.height() * mask.width()
    );
    if !dumped.is_empty() {
        println!("intermediate files: {}", dumped.len());
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Outcome {
    let cfg = load_config(&args.config, &args.stages)?;
    let manifest = DatasetManifest::read(&args.manifest)
        .with_context(|| format!("loading manifest {}", args.manifest.display()))
        .map_err(usage)?;
    let report = eval::evaluate_dataset(&manifest, &cfg).map_err(usage)?;
    create_dir(&args.out)?;
    let table = report.to_table();
    write(&args.out.join("report.json"), &report.to_json())?;
    write(&args.out.join("report.txt"), table.as_bytes())?;
    print!("{table}");
    match (report.scored, report.failed) {
        (_, 0) => Ok(()),
        (0, _) => Err(runtime(anyhow::anyhow!("every pair failed"))),
        (_, failed) => Err(Failure::Partial {
            failed,
            total: report.pairs.len(),
        }),
    }
}

fn cmd_synth(args: SynthArgs) -> Outcome {
    let summary = synth::write_fixtures(&args.out, args.seed, args.noisy_count).map_err(runtime)?;
    println!(
        "wrote {} files, {} pairs, seed {} to {}",
        summary.files,
        summary.pairs.len(),
        summary.seed,
        args.out.display()
    );
    Ok(())
}

fn cmd_inspect(args: InspectArgs) -> Outcome {
    if inspect::FileKind::from_path(&args.path).is_none() {
        return Err(usage(anyhow::anyhow!(
            "{}: expected a .dfm, .masks.json or .emb.json file",
            args.path.display()
        )));
    }
    let text = inspect::inspect_file(&args.path).map_err(runtime)?;
    print!("{text}");
    Ok(())
}

/// Join the error chain, skipping causes the library already folded into
/// the message above them.
fn render(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ADAPTCD_LOG", "warn")).init();
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
    let outcome = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Inspect(a) => cmd_inspect(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(e) | Failure::Runtime(e) => eprintln!("error: {}", render(e)),
                Failure::Partial { failed, total } => {
                    eprintln!("error: {failed} of {total} pairs failed")
                }
            }
            ExitCode::from(f.code())
        }
    }
}
