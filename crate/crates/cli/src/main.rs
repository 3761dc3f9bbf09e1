use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use crowdsplat::fsio::{config_dir, load_config, write_json};
use crowdsplat::{
    build_scene_command, eval_command, make_occlusion_pairs, make_refiner_pairs, refine_command, EvalConfig,
    OcclusionPairsConfig, PipelineError, PipelineResult, RefineConfig, RefinerPairsConfig, SceneConfig,
};

/// Crowd Gaussian-splat scenes: dataset generation, refinement and evaluation.
#[derive(Parser, Debug)]
#[command(name = "crowdsplat", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Skin persons from a scene config and write PLYs plus a scene manifest.
    BuildScene(Common),
    /// Render occluded/full training pairs with clean orbit targets.
    MakeOcclusionPairs(Common),
    /// Render coarse/ground-truth pairs with normal maps on a hemisphere.
    MakeRefinerPairs(Common),
    /// Cluster persons and distill each cluster against refined renders.
    Refine(Common),
    /// Compare two directories of identically named PNGs.
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// JSON config, or a manifest written by an earlier run.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; falls back to CROWDSPLAT_THREADS, then all cores.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long, required_unless_present_all = ["a", "b"])]
    config: Option<PathBuf>,
    /// First image directory (overrides the config).
    #[arg(long)]
    a: Option<PathBuf>,
    /// Second image directory (overrides the config).
    #[arg(long)]
    b: Option<PathBuf>,
    /// Feature extractor seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    threads: Option<usize>,
}

fn init_threads(flag: Option<usize>) -> PipelineResult<()> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var("CROWDSPLAT_THREADS") {
            Ok(v) => Some(
                v.trim()
                    .parse()
                    .map_err(|_| PipelineError::invalid(format!("CROWDSPLAT_THREADS=`{v}` is not a thread count")))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(PipelineError::invalid("thread count must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| PipelineError::invalid(format!("cannot start {n} threads: {e}")))?;
    }
    Ok(())
}

fn run(command: Command) -> PipelineResult<()> {
    match command {
        Command::BuildScene(c) => {
            init_threads(c.threads)?;
            let mut cfg: SceneConfig = load_config(&c.config)?;
            cfg.resolve_paths(&config_dir(&c.config));
            if let Some(s) = c.seed {
                cfg.seed = s;
            }
            let m = build_scene_command(&cfg, &c.out)?;
            println!("wrote {} persons to {}", m.persons.len(), c.out.display());
        }
        Command::MakeOcclusionPairs(c) => {
            init_threads(c.threads)?;
            let mut cfg: OcclusionPairsConfig = load_config(&c.config)?;
            cfg.resolve_paths(&config_dir(&c.config));
            if let Some(s) = c.seed {
                cfg.seed = s;
            }
            let m = make_occlusion_pairs(&cfg, &c.out)?;
            println!("wrote {} occlusion samples to {}", m.entries.len(), c.out.display());
        }
        Command::MakeRefinerPairs(c) => {
            init_threads(c.threads)?;
            let mut cfg: RefinerPairsConfig = load_config(&c.config)?;
            cfg.resolve_paths(&config_dir(&c.config));
            if let Some(s) = c.seed {
                cfg.seed = s;
            }
            let m = make_refiner_pairs(&cfg, &c.out)?;
            println!(
                "wrote {} entries ({} train / {} test scenes) to {}",
                m.entries.len(),
                m.split.train,
                m.split.test,
                c.out.display()
            );
        }
        Command::Refine(c) => {
            init_threads(c.threads)?;
            let mut cfg: RefineConfig = load_config(&c.config)?;
            cfg.resolve_paths(&config_dir(&c.config));
            if let Some(s) = c.seed {
                cfg.optim.seed = s;
            }
            let report = refine_command(&cfg, &c.out)?;
            for cl in &report.clusters {
                match (&cl.metrics, &cl.error) {
                    (Some(m), _) => println!(
                        "cluster {} {:?}: psnr {:.3} -> {:.3}",
                        cl.index, cl.persons, m.mean_psnr_before, m.mean_psnr_after
                    ),
                    (None, Some(e)) => println!("cluster {} {:?}: failed: {e}", cl.index, cl.persons),
                    (None, None) => {}
                }
            }
            let failed = report.failed();
            if !failed.is_empty() {
                return Err(PipelineError::Component(crowdsplat_core::Error::Scene(format!(
                    "{} of {} clusters failed; see report.json",
                    failed.len(),
                    report.clusters.len()
                ))));
            }
        }
        Command::Eval(e) => {
            init_threads(e.threads)?;
            let mut cfg = match &e.config {
                Some(path) => {
                    let mut cfg: EvalConfig = load_config(path)?;
                    cfg.resolve_paths(&config_dir(path));
                    cfg
                }
                None => EvalConfig {
                    a: PathBuf::new(),
                    b: PathBuf::new(),
                    extractor_seed: 0,
                    ssim: Default::default(),
                },
            };
            let cwd = Path::new(".");
            if let Some(a) = &e.a {
                cfg.a = crowdsplat::fsio::resolve(cwd, a);
            }
            if let Some(b) = &e.b {
                cfg.b = crowdsplat::fsio::resolve(cwd, b);
            }
            if let Some(s) = e.seed {
                cfg.extractor_seed = s;
            }
            let report = eval_command(&cfg, &e.out)?;
            print!("{}", crowdsplat::eval::format_table(&report));
        }
    }
    Ok(())
}

fn out_dir(command: &Command) -> &Path {
    match command {
        Command::BuildScene(c) | Command::MakeOcclusionPairs(c) | Command::MakeRefinerPairs(c) | Command::Refine(c) => &c.out,
        Command::Eval(e) => &e.out,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let out = out_dir(&cli.command).to_path_buf();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Err(w) = write_json(&out.join("error.json"), &e.record()) {
                eprintln!("could not write error.json: {w}");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
