use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dancegen_cli::{
    cmd_evaluate, cmd_gen_data, cmd_generate, cmd_gradcheck, cmd_reconstruct, cmd_train_gpt,
    cmd_train_vqvae, exit_code_for, GenerateArgs,
};
use dancegen_core::config::RunConfig;
use dancegen_core::error::{Error, Result};
use dancegen_core::gpt::FeatureSet;

#[derive(Parser)]
#[command(
    name = "dancegen",
    version,
    about = "Frequency-complemented motion codec and music-conditioned dance generation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Configuration source plus the most common overrides. Precedence is
/// flags > file > defaults; the effective configuration is printed at
/// startup.
#[derive(Args)]
struct ConfigArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Use the small synthetic-data profile when no file is given.
    #[arg(long)]
    desk: bool,
    /// Override the training seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Override the learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Ablations: no-fcm (plain autoencoder decoder, spectral loss off),
    /// no-ffl (keep complement blocks, drop spectral loss terms).
    #[arg(long, value_name = "WHICH")]
    ablate: Vec<String>,
    /// Conditioning blocks: both, pretrained, handcrafted.
    #[arg(long)]
    feature_set: Option<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_json_file(path)?,
            None if self.desk => RunConfig::desk(),
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.training.seed = seed;
        }
        if let Some(epochs) = self.epochs {
            cfg.training.epochs = epochs;
        }
        if let Some(lr) = self.lr {
            cfg.training.learning_rate = lr;
        }
        for ablation in &self.ablate {
            match ablation.as_str() {
                "no-fcm" => {
                    cfg.ablation.fcm_enabled = false;
                    cfg.ablation.ffl_enabled = false;
                }
                "no-ffl" => cfg.ablation.ffl_enabled = false,
                other => {
                    return Err(Error::config(format!(
                        "unknown ablation {other:?}; use no-fcm or no-ffl"
                    )))
                }
            }
        }
        if let Some(set) = &self.feature_set {
            cfg.ablation.feature_set = match set.as_str() {
                "both" => FeatureSet::Both,
                "pretrained" => FeatureSet::Pretrained,
                "handcrafted" => FeatureSet::Handcrafted,
                other => {
                    return Err(Error::config(format!(
                        "unknown feature set {other:?}; use both, pretrained, or handcrafted"
                    )))
                }
            };
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus (motion, feature tracks, beat lists).
    GenData {
        /// Dataset spec (JSON).
        spec: PathBuf,
        /// Output directory.
        out_dir: PathBuf,
    },
    /// Train the upper- and lower-body motion autoencoders.
    TrainVqvae {
        #[command(flatten)]
        config: ConfigArgs,
        /// Directory of .fmot clips.
        #[arg(long)]
        data: PathBuf,
        /// Output directory for checkpoints and loss curves.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the pose-code model on top of frozen autoencoders.
    TrainGpt {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        vq_upper: PathBuf,
        #[arg(long)]
        vq_lower: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Round-trip a clip through encode / quantize / decode.
    Reconstruct {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        vq_upper: PathBuf,
        #[arg(long)]
        vq_lower: PathBuf,
        /// Input .fmot clip.
        #[arg(long, value_name = "FILE")]
        input: PathBuf,
        /// Output .fmot clip.
        #[arg(long, value_name = "FILE")]
        output: PathBuf,
    },
    /// Autoregressively generate motion from feature tracks.
    Generate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        gpt: PathBuf,
        #[arg(long)]
        vq_upper: PathBuf,
        #[arg(long)]
        vq_lower: PathBuf,
        /// Pretrained-kind feature track (.ftrk).
        #[arg(long)]
        pretrained: Option<PathBuf>,
        /// Handcrafted-kind feature track (.ftrk).
        #[arg(long)]
        handcrafted: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        init_upper: usize,
        #[arg(long, default_value_t = 0)]
        init_lower: usize,
        /// Pose-code steps to generate (motion frames = steps x rate).
        #[arg(long)]
        steps: usize,
        #[arg(long, value_name = "FILE")]
        output: PathBuf,
        /// Also write the generated code streams ("<base>.upper.fcod").
        #[arg(long, value_name = "BASE")]
        codes_out: Option<PathBuf>,
    },
    /// Compute the metric report of a generated corpus against a reference.
    Evaluate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_name = "DIR")]
        reference: PathBuf,
        #[arg(long, value_name = "DIR")]
        generated: PathBuf,
        /// Report base path; writes <base>.txt, <base>.csv, <base>.speed.csv.
        #[arg(long, value_name = "BASE")]
        out: PathBuf,
    },
    /// Finite-difference verification of gradients.
    Gradcheck {
        /// ops, ffl, model, or all.
        #[arg(default_value = "all")]
        scope: String,
        /// Seeds per op check.
        #[arg(long, default_value_t = 20)]
        seeds: usize,
    },
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::GenData { spec, out_dir } => {
            let manifest = cmd_gen_data(&spec, &out_dir)?;
            for line in manifest {
                println!("{line}");
            }
        }
        Command::TrainVqvae { config, data, out } => {
            let cfg = config.resolve()?;
            println!("effective configuration:\n{}", cfg.to_json_pretty());
            let outcome = cmd_train_vqvae(&cfg, &data, &out)?;
            println!(
                "upper: final loss {:.6} -> {}",
                outcome.final_loss_upper,
                outcome.upper_checkpoint.display()
            );
            println!(
                "lower: final loss {:.6} -> {}",
                outcome.final_loss_lower,
                outcome.lower_checkpoint.display()
            );
        }
        Command::TrainGpt {
            config,
            data,
            vq_upper,
            vq_lower,
            out,
        } => {
            let cfg = config.resolve()?;
            println!("effective configuration:\n{}", cfg.to_json_pretty());
            let outcome = cmd_train_gpt(&cfg, &data, &vq_upper, &vq_lower, &out)?;
            println!(
                "final loss {:.6} -> {}",
                outcome.final_loss,
                outcome.checkpoint.display()
            );
        }
        Command::Reconstruct {
            config,
            vq_upper,
            vq_lower,
            input,
            output,
        } => {
            let cfg = config.resolve()?;
            cmd_reconstruct(&cfg, &vq_upper, &vq_lower, &input, &output)?;
            println!("wrote {}", output.display());
        }
        Command::Generate {
            config,
            gpt,
            vq_upper,
            vq_lower,
            pretrained,
            handcrafted,
            init_upper,
            init_lower,
            steps,
            output,
            codes_out,
        } => {
            let cfg = config.resolve()?;
            cmd_generate(&GenerateArgs {
                config: &cfg,
                gpt_ckpt: &gpt,
                upper_ckpt: &vq_upper,
                lower_ckpt: &vq_lower,
                pretrained: pretrained.as_deref(),
                handcrafted: handcrafted.as_deref(),
                init_upper,
                init_lower,
                steps,
                output: &output,
                codes_out: codes_out.as_deref(),
            })?;
            println!("wrote {}", output.display());
        }
        Command::Evaluate {
            config,
            reference,
            generated,
            out,
        } => {
            let cfg = config.resolve()?;
            let report = cmd_evaluate(&cfg, &reference, &generated, &out)?;
            print!("{}", dancegen_core::io::report_to_text(&report));
            println!("wrote {}.txt / .csv / .speed.csv", out.display());
        }
        Command::Gradcheck { scope, seeds } => {
            let outcomes = cmd_gradcheck(&scope, seeds)?;
            let mut failed = 0usize;
            for c in &outcomes {
                let tag = if c.passed { "ok  " } else { "FAIL" };
                println!("[{tag}] {}: {}", c.name, c.detail);
                if !c.passed {
                    failed += 1;
                }
            }
            println!("{} checks, {failed} failed", outcomes.len());
            if failed > 0 {
                return Err(Error::numeric(format!(
                    "{failed} gradient checks above tolerance"
                )));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err) as u8)
        }
    }
}
