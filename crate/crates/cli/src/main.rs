use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use curiolab::harness::{
    analyze, design, export_report, generate_synthetic_ratings, ingest_ratings, rerender,
    write_ratings, Aliases, EvalReport, FitConfig, Pipeline, PipelineConfig, ReportFormat,
};
use curiolab::irf::read_ir_table;
use curiolab::{Error, Result};

/// Desk-scale laboratory for physical intrinsic motivation.
#[derive(Parser)]
#[command(name = "curiolab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Pipeline config (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, overriding the config's `output`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate and store the train and test trajectories.
    Generate(RunArgs),
    /// Train the world-model ensemble (generating trajectories if needed).
    Train(RunArgs),
    /// Score every IRF over the checkpoint and rollout grids into ir_table.csv.
    Score(RunArgs),
    /// Run the whole pipeline and write the report.
    Run(RunArgs),
    /// Generate synthetic ratings for the stimuli of an IR table.
    SynthRatings {
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Rater model is read from this config's [raters] section.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the rater seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit single and composite models of an IR table against ratings.
    Fit {
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        ratings: PathBuf,
        #[arg(long, default_value_t = 10)]
        splits: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Other fit settings are read from this config's [fit] section.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Re-render report files of a finished run directory.
    Report {
        #[arg(long)]
        run: PathBuf,
        /// json, csv, svg or all.
        #[arg(long, default_value = "all")]
        format: String,
    },
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::load(p),
        None => Ok(PipelineConfig::default()),
    }
}

fn pipeline(args: &RunArgs) -> Result<Pipeline> {
    let mut config = load_config(args.config.as_deref())?;
    if let Some(out) = &args.out {
        config.output = out.clone();
    }
    Pipeline::new(config)
}

fn summarize(report: &EvalReport) {
    println!("config hash    {}", report.config_hash);
    println!("stimuli        {}", report.stimuli);
    println!(
        "noise ceiling  {:.3} ± {:.3} per scenario, {:.3} pooled",
        report.reliability.mean, report.reliability.sem, report.reliability.pooled
    );
    println!("top single     {}", report.top_single);
    for s in report.singles.iter().take(4) {
        println!("  {:<22} r = {:.3} ± {:.3}", s.name, s.mean, s.se);
    }
    for s in &report.composites {
        println!("  {:<22} r = {:.3} ± {:.3}", s.name, s.mean, s.se);
    }
    if let Some(best) = report.complementarity.first() {
        println!(
            "best complement to {}: {}",
            report.complement_base, best.name
        );
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(args) => {
            let p = pipeline(&args)?;
            let data = p.generate()?;
            println!(
                "{} train + {} test trajectories in {}",
                data.train.len(),
                data.test.len(),
                p.dir.display()
            );
        }
        Command::Train(args) => {
            let p = pipeline(&args)?;
            let ensemble = p.train(&p.generate()?)?;
            println!(
                "{} models × {} checkpoints",
                ensemble.len(),
                ensemble[0].len()
            );
        }
        Command::Score(args) => {
            let p = pipeline(&args)?;
            let data = p.generate()?;
            let ensemble = p.train(&data)?;
            let (table, _) = p.score(&data, &ensemble)?;
            println!(
                "{} rows in {}",
                table.rows.len(),
                p.dir.join("ir_table.csv").display()
            );
        }
        Command::Run(args) => {
            let p = pipeline(&args)?;
            summarize(&p.run()?);
            println!("report written to {}", p.dir.join("report").display());
        }
        Command::SynthRatings {
            table,
            out,
            config,
            seed,
        } => {
            let raters = load_config(config.as_deref())?.raters;
            let ir = read_ir_table(&table)?;
            let ids: Vec<String> = ir.stimuli.iter().map(|s| s.trajectory_id.clone()).collect();
            let features = design(&ir, &ids, &Aliases::for_table(&ir)?)?;
            let mut data =
                generate_synthetic_ratings(&raters, &features, seed.unwrap_or(raters.seed))?;
            data.config_hash = ir.config_hash.clone();
            write_ratings(&out, &data)?;
            println!(
                "{} stimuli × {} raters → {}",
                data.stimuli.len(),
                raters.raters,
                out.display()
            );
        }
        Command::Fit {
            table,
            ratings,
            splits,
            seed,
            out,
            config,
        } => {
            let fit = FitConfig {
                splits,
                split_seed: seed,
                ..config.map_or(Ok(FitConfig::default()), |c| {
                    PipelineConfig::load(&c).map(|c| c.fit)
                })?
            };
            let ir = read_ir_table(&table)?;
            let data = ingest_ratings(&ratings)?;
            if let (Some(a), Some(b)) = (&ir.config_hash, &data.config_hash) {
                if a != b {
                    return Err(Error::HashMismatch(format!(
                        "{} and {} come from different configurations",
                        table.display(),
                        ratings.display()
                    )));
                }
            }
            let hash = ir.config_hash.clone().unwrap_or_default();
            let report = analyze(&ir, &data, &fit, Vec::new(), &hash)?;
            export_report(&report, &out, ReportFormat::All)?;
            summarize(&report);
        }
        Command::Report { run, format } => {
            let format: ReportFormat = format.parse()?;
            for path in rerender(&run, format)? {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}
