//! `claret`: synthesize data, train, evaluate, predict, and verify gradients.

mod config;
mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use claret_core::autodiff::Fault;
use claret_core::checkpoint::{import_backbone, load_checkpoint, save_checkpoint};
use claret_core::data::{self, load_dataset, probe_shape, read_image, SYNTH_CLASS_NAMES, SYNTH_NOISE};
use claret_core::model::{build_claret, freeze_backbone, Backbone};
use claret_core::training::{argmax_rows, evaluate, split_dataset, train};
use claret_core::verify::gradcheck_suite;
use claret_core::{Error, ErrorKind, Result};

use crate::config::RunConfig;

#[derive(Parser)]
#[command(name = "claret", version, about = "Train and evaluate ClaRet image classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic four-class dataset as a PGM tree.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        per_class: usize,
        #[arg(long, default_value_t = 32)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Split, train, and test a model on a class-per-directory tree.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Checkpoint whose `backbone.*` tensors seed a VGG-19 backbone.
        #[arg(long)]
        backbone: Option<PathBuf>,
        /// Number of leading backbone layers to freeze.
        #[arg(long)]
        freeze: Option<usize>,
        /// Per-epoch loss and accuracy as CSV.
        #[arg(long)]
        curves: Option<PathBuf>,
    },
    /// Score a checkpoint on a whole tree.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Classify one image.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        image: PathBuf,
    },
    /// Finite-difference check of every layer family.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, hide = true)]
        inject_fault: Option<FaultArg>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    Relu,
}

/// A failed command: the exit status and what to print.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e.kind() {
            ErrorKind::Config => 1,
            ErrorKind::Io => 2,
            ErrorKind::Shape => 3,
            ErrorKind::Verification => 4,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::IoWrite {
        path: path.into(),
        source,
    })
}

fn cmd_synth(out: &Path, per_class: usize, size: usize, seed: u64) -> CmdResult {
    let images = data::synth_images(per_class, size, seed, SYNTH_NOISE)?;
    let names: Vec<String> = SYNTH_CLASS_NAMES.iter().map(|s| s.to_string()).collect();
    data::write_tree(out, &names, &images)?;
    println!(
        "wrote {} images ({} classes x {per_class}, {size}x{size}) to {}",
        images.len(),
        names.len(),
        out.display()
    );
    Ok(())
}

fn cmd_train(
    data_dir: &Path,
    config: Option<&Path>,
    out: &Path,
    backbone: Option<&Path>,
    freeze: Option<usize>,
    curves: Option<&Path>,
) -> CmdResult {
    let mut run = match config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.into(),
                source,
            })?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::parse("")?,
    };
    if !run.input_shape_set {
        run.model.input_shape = probe_shape(data_dir)?;
    }
    let dataset = load_dataset(data_dir, run.model.input_shape)?;
    if !run.n_classes_set {
        run.model.n_classes = dataset.n_classes();
    }
    if backbone.is_some() {
        run.model.backbone = Backbone::Vgg19;
    }

    let mut model = build_claret(&run.model)?;
    if let Some(path) = backbone {
        model = import_backbone(model, path, false)?;
    }
    let depth = freeze.unwrap_or(run.model.resolved_freeze_depth());
    model = freeze_backbone(model, depth)?;
    model.class_names = dataset.class_names.clone();

    let (model, history) = train(model, &dataset, &run.train)?;
    for r in &history {
        println!("{}", report::epoch_line(r));
    }
    save_checkpoint(&model, out)?;
    if let Some(path) = curves {
        write_text(path, &report::curves_csv(&history))?;
    }

    let (_, _, test) = split_dataset(&dataset, run.train.split, run.train.seed)?;
    println!("test samples {}", test.len());
    if test.is_empty() {
        println!("test split is empty; no metrics");
    } else {
        let m = evaluate(&model, &test)?;
        print!("{}", report::metrics_summary(&m, &dataset.class_names));
    }
    println!("checkpoint {}", out.display());
    Ok(())
}

fn cmd_eval(data_dir: &Path, model_path: &Path) -> CmdResult {
    let model = load_checkpoint(model_path)?;
    let dataset = load_dataset(data_dir, model.config.input_shape)?;
    let m = evaluate(&model, &dataset)?;
    println!("samples {}", dataset.len());
    print!("{}", report::confusion_table(&m, &dataset.class_names));
    print!("{}", report::metrics_summary(&m, &dataset.class_names));
    Ok(())
}

fn cmd_predict(model_path: &Path, image: &Path) -> CmdResult {
    let model = load_checkpoint(model_path)?;
    let (h, w, c) = model.config.input_shape;
    let img = data::resize_nearest(&read_image(image)?, h, w);
    let batch = data::image_tensor(&img, c)?.reshape(&[1, h, w, c])?;
    let probs = model.predict(&batch)?;
    let class = argmax_rows(&probs)?[0];
    let name = model.class_names.get(class).map(String::as_str).unwrap_or("-");
    println!("class {class}");
    println!("name {name}");
    let values: Vec<String> = probs.to_f64_vec().iter().map(|p| format!("{p:.6}")).collect();
    println!("probabilities {}", values.join(" "));
    Ok(())
}

fn cmd_gradcheck(seed: u64, fault: Option<FaultArg>) -> CmdResult {
    let fault = fault.map(|FaultArg::Relu| Fault::ReluBackward);
    let results = gradcheck_suite(seed, fault)?;
    print!("{}", report::gradcheck_table(&results));
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed()).map(|r| r.family).collect();
    if !failed.is_empty() {
        return Err(Failure {
            code: 4,
            message: format!("gradient check failed: {}", failed.join(", ")),
        });
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Synth {
            out,
            per_class,
            size,
            seed,
        } => cmd_synth(out, *per_class, *size, *seed),
        Command::Train {
            data,
            config,
            out,
            backbone,
            freeze,
            curves,
        } => cmd_train(data, config.as_deref(), out, backbone.as_deref(), *freeze, curves.as_deref()),
        Command::Eval { data, model } => cmd_eval(data, model),
        Command::Predict { model, image } => cmd_predict(model, image),
        Command::Gradcheck { seed, inject_fault } => cmd_gradcheck(*seed, *inject_fault),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
