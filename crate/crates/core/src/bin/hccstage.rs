//! Command-line entry point for the staging pipeline.
//!
//! Exit codes: 0 success, 1 configuration error, 2 data error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hccstage::cohortgen::{generate_cohort, CohortSpec};
use hccstage::config::RunConfig;
use hccstage::error::{Error, Result};
use hccstage::evaluate::ModalityMask;
use hccstage::pipeline::{
    cell_summary_of, extract_all, format_summary, run_evaluate, run_extract, run_pipeline,
    run_select, run_train, CellSummary,
};

#[derive(Parser)]
#[command(name = "hccstage", version, about = "Multimodal TNM staging pipeline")]
struct Cli {
    /// JSON run configuration (cohort spec JSON for `synth`)
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the configured RNG seed
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Modalities to use, e.g. `ct+mri/redcap+lab`, `ct,lab`, or `all`
    #[arg(long, global = true)]
    modalities: Option<String>,

    /// Run the full modality-ablation grid instead of a single cell
    #[arg(long, global = true)]
    grid: bool,

    /// Override the output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic cohort
    Synth,
    /// Extract radiomics features for every listed image
    Extract,
    /// Rank features by mutual information and pick a subset with RFECV
    Select,
    /// Fit one booster on the full dataset after selection
    Train,
    /// Cross-validated evaluation (extracts features in memory)
    Evaluate,
    /// Extract, evaluate, and write every artifact
    Pipeline,
}

fn load_run_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => {
            return Err(Error::Config(
                "--config is required for this command".into(),
            ))
        }
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(m) = &cli.modalities {
        config.modalities = m.parse::<ModalityMask>()?;
    }
    if let Some(out) = &cli.out {
        config.out_dir = out.clone();
    }
    Ok(config)
}

fn run(cli: &Cli) -> Result<()> {
    match cli.command {
        Command::Synth => {
            let mut spec = match &cli.config {
                Some(path) => {
                    let text = std::fs::read_to_string(path)
                        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                    serde_json::from_str::<CohortSpec>(&text)
                        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
                }
                None => CohortSpec::default(),
            };
            if let Some(seed) = cli.seed {
                spec.seed = seed;
            }
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("cohort"));
            let manifest = generate_cohort(&spec, &out)?;
            println!(
                "wrote cohort of {} patients ({} files) to {}",
                manifest.patients.len(),
                manifest.files.len(),
                out.display()
            );
        }
        Command::Extract => {
            let config = load_run_config(cli)?;
            let (extraction, _) = run_extract(&config)?;
            let n_ok = extraction.ct.as_ref().map_or(0, |t| t.ids.len())
                + extraction.mri.as_ref().map_or(0, |t| t.ids.len());
            println!(
                "extracted {n_ok} images ({} failures) to {}",
                extraction.failures.len(),
                config.out_dir.display()
            );
            if !extraction.failures.is_empty() {
                for f in &extraction.failures {
                    eprintln!("  {}: {}", f.image_id, f.error);
                }
                return Err(Error::Input(format!(
                    "{} image(s) failed extraction",
                    extraction.failures.len()
                )));
            }
        }
        Command::Select => {
            let config = load_run_config(cli)?;
            let selection = run_select(&config)?;
            println!("selected {} features:", selection.k);
            for name in &selection.chosen {
                println!("  {name}");
            }
        }
        Command::Train => {
            let config = load_run_config(cli)?;
            let booster = run_train(&config)?;
            println!(
                "trained booster: {} rounds x {} classes on {} features -> {}",
                booster.trees.len(),
                booster.n_classes,
                booster.n_features,
                config.out_dir.join("model.json").display()
            );
        }
        Command::Evaluate => {
            let config = load_run_config(cli)?;
            config.validate()?;
            let extraction = extract_all(&config)?;
            let output = run_evaluate(&config, &extraction, cli.grid)?;
            print_metrics(&output.primary, output.grid.as_ref());
        }
        Command::Pipeline => {
            let config = load_run_config(cli)?;
            let output = run_pipeline(&config, cli.grid)?;
            if !output.failures.is_empty() {
                eprintln!("{} image(s) failed extraction", output.failures.len());
            }
            print_metrics(&output.primary, output.grid.as_ref());
            println!("{} artifacts written", output.artifacts.len());
        }
    }
    Ok(())
}

fn print_metrics(
    primary: &hccstage::evaluate::CVReport<hccstage::Real>,
    grid: Option<&hccstage::evaluate::GridReport<hccstage::Real>>,
) {
    let cells: Vec<CellSummary> = match grid {
        Some(g) => g.cells.iter().map(|c| cell_summary_of(&c.report)).collect(),
        None => vec![cell_summary_of(primary)],
    };
    print!("{}", format_summary(&cells));
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version print and exit clean; bad flags are config errors
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
