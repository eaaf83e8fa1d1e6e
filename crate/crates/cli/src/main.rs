use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use malvis::cgan::{self, Cgan};
use malvis::cnn::{self, CnnModel};
use malvis::dataset::{self, LabeledImage};
use malvis::eval::{compare_runs, EvalReport};
use malvis::pipeline::{self, ArtifactWriter, PipelineConfig};
use malvis::prs::{derive_layout, Label, SampleRecord};
use malvis::smote::balance_with_smote;
use malvis::Error;

/// Malware-behavior images: encode count tables as two-color pictures,
/// rebalance them with SMOTE or a conditional GAN, and train a CNN detector.
#[derive(Parser, Debug)]
#[command(name = "malvis", version)]
struct Cli {
    /// TOML pipeline configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for all outputs and default inputs.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthesize a labeled table and split it into data/train.csv and data/test.csv.
    Synth,
    /// Encode every row of a sample CSV as a PGM image.
    Encode {
        #[arg(long)]
        input: PathBuf,
        /// Output directory [default: <out-dir>/images].
        #[arg(long)]
        output: Option<PathBuf>,
        /// The CSV has a header line.
        #[arg(long)]
        header: bool,
    },
    /// Balance a sample CSV by oversampling the minority class.
    Smote {
        /// [default: <out-dir>/data/train.csv]
        #[arg(long)]
        input: Option<PathBuf>,
        /// [default: <out-dir>/data/train_smote.csv]
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Train the detector on a sample CSV, optionally plus extra image sets.
    TrainCnn {
        /// [default: <out-dir>/data/train_smote.csv]
        #[arg(long)]
        train: Option<PathBuf>,
        /// index.csv of an additional image set (repeatable).
        #[arg(long)]
        extra: Vec<PathBuf>,
        /// [default: <out-dir>/cnn.ckpt]
        #[arg(long)]
        model: Option<PathBuf>,
        /// Also run stratified k-fold cross-validation.
        #[arg(long)]
        cv: bool,
    },
    /// Train the conditional GAN on a sample CSV.
    TrainCgan {
        /// [default: <out-dir>/data/train.csv]
        #[arg(long)]
        train: Option<PathBuf>,
        /// [default: <out-dir>/cgan.ckpt]
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Generate binarized malign images from a trained GAN.
    Generate {
        /// [default: <out-dir>/cgan.ckpt]
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        count: usize,
        /// [default: <out-dir>/generated]
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Score a trained detector on a sample CSV.
    Evaluate {
        /// [default: <out-dir>/cnn.ckpt]
        #[arg(long)]
        model: Option<PathBuf>,
        /// [default: <out-dir>/data/test.csv]
        #[arg(long)]
        test: Option<PathBuf>,
        /// Output file stem [default: <out-dir>/report].
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Side-by-side comparison of two JSON reports (A minus B).
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Output file stem [default: <out-dir>/comparison].
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Both experimental arms end to end.
    RunAll,
}

struct Ctx {
    config: PipelineConfig,
    out_dir: PathBuf,
}

impl Ctx {
    fn or_default(&self, given: Option<PathBuf>, rel: &str) -> PathBuf {
        given.unwrap_or_else(|| self.out_dir.join(rel))
    }
}

fn ensure_parent(path: &Path) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn with_suffix(stem: &Path, suffix: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Encodes samples with the layout implied by their width.
fn encode(samples: &[SampleRecord]) -> malvis::Result<Vec<LabeledImage>> {
    let dim = samples
        .first()
        .map(SampleRecord::dim)
        .ok_or_else(|| Error::Dataset("no samples".into()))?;
    dataset::encode_all(samples, &derive_layout(dim))
}

fn write_report(report: &EvalReport, stem: &Path) -> anyhow::Result<()> {
    ensure_parent(stem)?;
    fs::write(
        with_suffix(stem, ".json"),
        serde_json::to_string_pretty(report)? + "\n",
    )?;
    fs::write(with_suffix(stem, ".txt"), report.to_table())?;
    fs::write(with_suffix(stem, "_confusion.csv"), report.confusion_csv())?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let ctx = Ctx {
        config: config.resolved()?,
        out_dir: cli.out_dir,
    };
    let config = &ctx.config;

    match cli.command {
        Command::Synth => {
            let (train, test) = pipeline::synth_split(config)?;
            let dir = ctx.out_dir.join("data");
            fs::create_dir_all(&dir)?;
            dataset::write_samples(dir.join("train.csv"), &train)?;
            dataset::write_samples(dir.join("test.csv"), &test)?;
            eprintln!(
                "wrote {} training and {} test samples to {}",
                train.len(),
                test.len(),
                dir.display()
            );
        }
        Command::Encode {
            input,
            output,
            header,
        } => {
            let samples = dataset::read_samples(&input, header)?;
            let images = encode(&samples)?;
            let dir = ctx.or_default(output, "images");
            let index = dataset::write_image_set(&dir, "img", &images)?;
            eprintln!(
                "encoded {} images; index at {}",
                images.len(),
                index.display()
            );
        }
        Command::Smote { input, output } => {
            let input = ctx.or_default(input, "data/train.csv");
            let output = ctx.or_default(output, "data/train_smote.csv");
            let samples = dataset::read_samples(&input, false)?;
            let balanced = balance_with_smote(&samples, &config.smote)?;
            ensure_parent(&output)?;
            dataset::write_samples(&output, &balanced)?;
            eprintln!(
                "added {} synthetic samples; wrote {}",
                balanced.len() - samples.len(),
                output.display()
            );
        }
        Command::TrainCnn {
            train,
            extra,
            model,
            cv,
        } => {
            let train = ctx.or_default(train, "data/train_smote.csv");
            let model = ctx.or_default(model, "cnn.ckpt");
            let mut images = encode(&dataset::read_samples(&train, false)?)?;
            for index in &extra {
                images.extend(dataset::read_image_set(index)?);
            }
            let mut cnn_config = config.cnn.clone();
            cnn_config.input_side = images[0].image.side();
            let (net, history) = cnn::train_cnn(&images, &cnn_config)?;
            ensure_parent(&model)?;
            net.save(&model)?;
            fs::write(with_suffix(&model, ".history.csv"), history.to_csv())?;
            if let Some(last) = history.epochs.last() {
                eprintln!(
                    "final epoch: loss {:.4}, accuracy {:.4}",
                    last.loss, last.accuracy
                );
            }
            if cv {
                let report = cnn::kfold_cv(&images, &cnn_config)?;
                fs::write(
                    with_suffix(&model, ".cv.json"),
                    serde_json::to_string_pretty(&report)? + "\n",
                )?;
                eprintln!("cross-validation mean accuracy {:.4}", report.mean_accuracy);
            }
        }
        Command::TrainCgan { train, model } => {
            let train = ctx.or_default(train, "data/train.csv");
            let model = ctx.or_default(model, "cgan.ckpt");
            let images = encode(&dataset::read_samples(&train, false)?)?;
            let mut gan_config = config.cgan.clone();
            gan_config.image_side = images[0].image.side();
            let mut trace = cgan::GanLossTrace::default();
            let trained = cgan::train_cgan_traced(&images, &gan_config, &mut trace);
            let trace_path = with_suffix(&model, ".trace.csv");
            ensure_parent(&model)?;
            fs::write(&trace_path, trace.to_csv())?;
            if let Err(Error::Diverged { .. }) = &trained {
                eprintln!("partial loss trace at {}", trace_path.display());
            }
            trained?.save(&model)?;
            if let Some(tail) = trace.tail_means(100) {
                eprintln!(
                    "last 100 iterations: d_loss_real {:.3}, d_loss_fake {:.3}, g_loss {:.3}, d_acc_real {:.3}, d_acc_fake {:.3}",
                    tail.d_loss_real, tail.d_loss_fake, tail.g_loss, tail.d_acc_real, tail.d_acc_fake
                );
            }
        }
        Command::Generate {
            model,
            count,
            output,
        } => {
            let model = ctx.or_default(model, "cgan.ckpt");
            let mut gan = Cgan::load(&model)?;
            let images: Vec<LabeledImage> =
                cgan::generate_malign(&mut gan.generator, count, config.seeds().generate)?
                    .into_iter()
                    .map(|image| LabeledImage {
                        image,
                        label: Label::Malign,
                    })
                    .collect();
            let index =
                dataset::write_image_set(ctx.or_default(output, "generated"), "gen", &images)?;
            eprintln!("generated {count} images; index at {}", index.display());
        }
        Command::Evaluate {
            model,
            test,
            output,
        } => {
            let mut net = CnnModel::load(ctx.or_default(model, "cnn.ckpt"))?;
            let test = encode(&dataset::read_samples(
                ctx.or_default(test, "data/test.csv"),
                false,
            )?)?;
            let report = net.evaluate(&test)?;
            write_report(&report, &ctx.or_default(output, "report"))?;
            print!("{}", report.to_table());
        }
        Command::Compare { a, b, output } => {
            let read = |p: &Path| -> anyhow::Result<EvalReport> {
                let text =
                    fs::read_to_string(p).map_err(|_| Error::MissingArtifact(p.to_path_buf()))?;
                Ok(serde_json::from_str(&text)?)
            };
            let cmp = compare_runs(&read(&a)?, &read(&b)?)?;
            let stem = ctx.or_default(output, "comparison");
            ensure_parent(&stem)?;
            fs::write(
                with_suffix(&stem, ".json"),
                serde_json::to_string_pretty(&cmp)? + "\n",
            )?;
            fs::write(with_suffix(&stem, ".txt"), cmp.to_table())?;
            print!("{}", cmp.to_table());
        }
        Command::RunAll => {
            let result =
                pipeline::run_all(config, &ctx.out_dir, |stage| eprintln!("[run-all] {stage}"));
            if let Err(Error::Diverged { .. }) = &result {
                eprintln!(
                    "partial loss trace at {}",
                    ArtifactWriter::new(&ctx.out_dir)?
                        .path(pipeline::TRACE)
                        .display()
                );
            }
            let run = result?;
            println!("arm A (SMOTE)\n{}", run.arm_a.report.to_table());
            println!("arm B (cGAN)\n{}", run.arm_b.report.to_table());
            print!("{}", run.comparison.to_table());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = err.downcast_ref::<Error>().map_or(1, pipeline::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
