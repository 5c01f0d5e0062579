use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use interlace_core::corruption::{normalize_pair, CorruptionSpec};
use interlace_core::fourier::{ComplexField, Domain};
use interlace_core::harness::{
    build_samples, evaluate, export_magnitude, generate_phantoms, load_field, load_image_dir, median_of, save_field,
    train, BitDepth, PhantomSpec, TrainConfig,
};
use interlace_core::losses::{write_report, LossKind};
use interlace_core::models::{Architecture, Model, ModelConfig};
use interlace_core::{Error, Result};

#[derive(Parser)]
#[command(name = "interlace", version, about = "Joint frequency/image-space reconstruction networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic phantom dataset as image files.
    Phantom(PhantomArgs),
    /// Apply a corruption process to k-space or image files.
    Corrupt(CorruptArgs),
    /// Train a model from a JSON configuration.
    Train(TrainArgs),
    /// Reconstruct images from k-space files with a trained checkpoint.
    Reconstruct(ReconstructArgs),
    /// Score a checkpoint on a clean image dataset and write a metrics CSV.
    Evaluate(EvaluateArgs),
    /// Print the trainable parameter count of a model configuration.
    Params(ParamsArgs),
}

#[derive(Args)]
struct PhantomArgs {
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    min_ellipses: usize,
    #[arg(long, default_value_t = 8)]
    max_ellipses: usize,
    #[arg(long, default_value_t = 1.0)]
    blur: f64,
    /// Also write an 8-bit PNG preview of every phantom.
    #[arg(long)]
    png: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CorruptArgs {
    /// Preset name (e.g. `undersample-25`, `motion-3`) or path to a JSON spec.
    #[arg(long)]
    corruption: String,
    /// A `.kspc`/`.imgc` file or a directory of them.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    quiet: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ImageKind {
    Png,
    Pgm,
}

#[derive(Args)]
struct ReconstructArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// A `.kspc` file or a directory of them.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "png")]
    format: ImageKind,
    #[arg(long, default_value_t = 8)]
    bits: u8,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Directory of clean `.imgc` slices.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    corruption: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated metric names.
    #[arg(long, value_delimiter = ',', default_value = "image-l1,freq-l1,joint-l1,ssim,ms-ssim,psnr")]
    metrics: Vec<String>,
    /// Label for the loss the checkpoint was trained with.
    #[arg(long, default_value = "unknown")]
    loss: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ParamsArgs {
    /// JSON model configuration; overrides the size flags.
    #[arg(long, conflicts_with = "architecture")]
    config: Option<PathBuf>,
    #[arg(long)]
    architecture: Option<String>,
    #[arg(long, default_value_t = 8)]
    layers: usize,
    #[arg(long, default_value_t = 9)]
    kernel: usize,
    #[arg(long, default_value_t = 32)]
    features: usize,
    /// Print a JSON object instead of text.
    #[arg(long)]
    json: bool,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn parse_corruption(arg: &str) -> Result<CorruptionSpec> {
    let path = Path::new(arg);
    let spec = if path.extension().is_some_and(|e| e == "json") || path.is_file() {
        read_json(path)?
    } else {
        CorruptionSpec::preset(arg)?
    };
    spec.validate()?;
    Ok(spec)
}

/// Field files under `input`, sorted, or `input` itself.
fn input_files(input: &Path, extensions: &[&str]) -> Result<Vec<PathBuf>> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(input)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()).is_some_and(|e| extensions.contains(&e)))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Data(format!("no {} files in {}", extensions.join("/"), input.display())));
    }
    Ok(files)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "slice".into())
}

fn run_phantom(a: PhantomArgs) -> Result<()> {
    let spec = PhantomSpec {
        count: a.count,
        size: a.size,
        ellipses: [a.min_ellipses, a.max_ellipses],
        blur: a.blur,
        seed: a.seed,
        ..PhantomSpec::new(a.count, a.size, a.seed)
    };
    let images = generate_phantoms::<f64>(&spec)?;
    std::fs::create_dir_all(&a.out)?;
    for (i, img) in images.iter().enumerate() {
        save_field(a.out.join(format!("phantom_{i:05}.imgc")), img)?;
        if a.png {
            export_magnitude(a.out.join(format!("phantom_{i:05}.png")), img, BitDepth::Eight)?;
        }
    }
    println!("wrote {} phantoms of size {} to {}", images.len(), a.size, a.out.display());
    Ok(())
}

fn run_corrupt(a: CorruptArgs) -> Result<()> {
    let spec = parse_corruption(&a.corruption)?;
    let files = input_files(&a.input, &["kspc", "imgc"])?;
    std::fs::create_dir_all(&a.out)?;
    for (i, path) in files.iter().enumerate() {
        let field: ComplexField<f64> = load_field(path)?;
        let spec = spec.with_seed(a.seed ^ i as u64);
        let corrupted = match field.domain() {
            Domain::Image => spec.corrupt_image(&field)?,
            Domain::Frequency => spec.corrupt_kspace(&field)?,
        };
        save_field(a.out.join(format!("{}.kspc", stem(path))), &corrupted)?;
    }
    println!("corrupted {} files into {}", files.len(), a.out.display());
    Ok(())
}

fn run_train(a: TrainArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.config)?;
    let config = TrainConfig::from_json(&text)?;
    let quiet = a.quiet;
    let outcome = train(&config, Some(&a.out), &mut |r| {
        if !quiet {
            match r.val_loss {
                Some(v) => println!("epoch {:>4}  train {:.6}  val {:.6}", r.epoch, r.train_loss, v),
                None => println!("epoch {:>4}  train {:.6}", r.epoch, r.train_loss),
            }
        }
    })?;
    println!(
        "best epoch {} of {}{}; checkpoints in {}",
        outcome.best_epoch,
        outcome.history.len(),
        if outcome.stopped_early { " (early stop)" } else { "" },
        a.out.display()
    );
    Ok(())
}

fn run_reconstruct(a: ReconstructArgs) -> Result<()> {
    let model = Model::<f32>::load(&a.checkpoint)?;
    let depth = BitDepth::from_bits(a.bits)?;
    let ext = match a.format {
        ImageKind::Png => "png",
        ImageKind::Pgm => "pgm",
    };
    let files = input_files(&a.input, &["kspc"])?;
    std::fs::create_dir_all(&a.out)?;
    for path in &files {
        let kspace: ComplexField<f32> = load_field(path)?;
        if kspace.domain() != Domain::Frequency {
            return Err(Error::Data(format!("{} is not a k-space file", path.display())));
        }
        let zero_filled = kspace.ifft2c()?;
        let pair = normalize_pair(&kspace, &zero_filled)?;
        let (_, image) = model.predict(pair.kspace.tensor())?;
        let image = pair.denormalize(&ComplexField::image(image)?);
        let name = stem(path);
        save_field(a.out.join(format!("{name}.imgc")), &image)?;
        export_magnitude(a.out.join(format!("{name}.{ext}")), &image, depth)?;
    }
    println!("reconstructed {} slices into {}", files.len(), a.out.display());
    Ok(())
}

fn run_evaluate(a: EvaluateArgs) -> Result<()> {
    let model = Model::<f32>::load(&a.checkpoint)?;
    let spec = parse_corruption(&a.corruption)?;
    let metrics = a.metrics.iter().map(|m| m.parse::<LossKind>()).collect::<Result<Vec<_>>>()?;
    let first = input_files(&a.data, &["imgc"])?;
    let size = load_field::<f64>(&first[0])?.shape().height();
    let images = load_image_dir(&a.data, size)?;
    let samples = build_samples::<f32>(&images, &spec, a.seed)?;
    let rows = evaluate(&model, &samples, &metrics, &a.loss)?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    write_report(&rows, std::fs::File::create(&a.out)?)?;
    for m in &metrics {
        if let Some(v) = median_of(&rows, *m) {
            println!("{:<9} median {v:.6}", m.name());
        }
    }
    Ok(())
}

fn run_params(a: ParamsArgs) -> Result<()> {
    let config: ModelConfig = match (&a.config, &a.architecture) {
        (Some(path), _) => read_json(path)?,
        (None, Some(arch)) => ModelConfig::full_size(arch.parse::<Architecture>()?).with_size(a.layers, a.kernel, a.features),
        (None, None) => return Err(Error::Config("pass --config or --architecture".into())),
    };
    config.validate()?;
    let model = Model::<f32>::new(config.clone(), 0)?;
    let total = model.trainable_param_count();
    let breakdown = model.param_breakdown();
    if a.json {
        let groups: serde_json::Map<String, serde_json::Value> =
            breakdown.iter().map(|(g, c)| (g.clone(), (*c).into())).collect();
        let out = serde_json::json!({
            "architecture": config.architecture.name(),
            "trainable_parameters": total,
            "breakdown": groups,
        });
        println!("{out}");
    } else {
        println!("{total}");
        for (group, count) in breakdown {
            println!("  {group:<10} {count}");
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Phantom(a) => run_phantom(a),
        Command::Corrupt(a) => run_corrupt(a),
        Command::Train(a) => run_train(a),
        Command::Reconstruct(a) => run_reconstruct(a),
        Command::Evaluate(a) => run_evaluate(a),
        Command::Params(a) => run_params(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
