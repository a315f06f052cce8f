use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cngp::{
    deserialize, load_image, psnr, read_header, save_image, select_hyperparams, serialize, sweep,
    Error, HyperParams, OutputActivation, Precision, SizeReport, SweepGrid, TrainConfig,
};

mod sweep_config;

use sweep_config::SweepFile;

#[derive(Parser)]
#[command(name = "cngp", version, about = "Fit, inspect and decode compact hash-grid image models")]
struct Cli {
    /// Worker threads [default: number of logical cores]
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model to a PNG image
    Fit(FitArgs),
    /// Decode a model (or a rectangle of it) to PNG
    Decode(DecodeArgs),
    /// Print the header and size breakdown of a model file
    Info(InfoArgs),
    /// Fit a grid of configurations and write a CSV
    Sweep(SweepArgs),
    /// PSNR between two PNG images
    Psnr(PsnrArgs),
}

fn power_of_two(s: &str) -> Result<u32, String> {
    let v: u32 = s.parse().map_err(|e| format!("{e}"))?;
    if v.is_power_of_two() {
        Ok(v)
    } else {
        Err(format!("{v} is not a power of two"))
    }
}

fn positive(s: &str) -> Result<u32, String> {
    match s.parse::<u32>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

fn positive_usize(s: &str) -> Result<usize, String> {
    positive(s).map(|v| v as usize)
}

#[derive(Clone, Copy, ValueEnum)]
enum PrecisionArg {
    F32,
    F64,
}

#[derive(Args)]
struct ModelArgs {
    /// Feature codebook rows per level
    #[arg(long = "nf", default_value_t = 256, value_parser = power_of_two)]
    n_f: u32,
    /// Index codebook rows per level
    #[arg(long = "nc", default_value_t = 65536, value_parser = power_of_two)]
    n_c: u32,
    /// Probing range (1 disables the index codebook)
    #[arg(long = "np", default_value_t = 4, value_parser = power_of_two)]
    n_p: u32,
    /// Features per level
    #[arg(long, default_value_t = 2, value_parser = positive)]
    features: u32,
    #[arg(long, default_value_t = 16, value_parser = positive)]
    levels: u32,
    /// Coarsest grid resolution
    #[arg(long, default_value_t = 16, value_parser = positive)]
    n_min: u32,
    /// Finest grid resolution
    #[arg(long, default_value_t = 512, value_parser = positive)]
    n_max: u32,
    /// Hidden width of the decoder
    #[arg(long, default_value_t = 64, value_parser = positive)]
    neurons: u32,
    #[arg(long, default_value_t = 2)]
    hidden_layers: u32,
    /// Sigmoid on the decoder output instead of identity
    #[arg(long)]
    sigmoid: bool,
}

impl ModelArgs {
    fn hyper(&self) -> HyperParams {
        HyperParams {
            n_f: self.n_f,
            n_c: self.n_c,
            n_p: self.n_p,
            features: self.features,
            levels: self.levels,
            n_min: self.n_min,
            n_max: self.n_max,
            neurons: self.neurons,
            hidden_layers: self.hidden_layers,
            activation: if self.sigmoid {
                OutputActivation::Sigmoid
            } else {
                OutputActivation::Linear
            },
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, default_value_t = 10_000)]
    steps: usize,
    /// Pixels sampled per step
    #[arg(long, default_value_t = 4096, value_parser = positive_usize)]
    batch_size: usize,
    /// Adam learning rate
    #[arg(long, default_value_t = 1e-2)]
    lr: f64,
    /// Training precision
    #[arg(long, value_enum, default_value_t = PrecisionArg::F32)]
    precision: PrecisionArg,
    /// Run the optimizer on every table entry each step, including entries with zero gradient
    #[arg(long)]
    dense_tables: bool,
}

impl TrainArgs {
    fn config(&self, seed: u64, log_every: usize) -> TrainConfig {
        TrainConfig {
            steps: self.steps,
            batch_size: self.batch_size,
            learning_rate: self.lr,
            seed,
            log_every,
            sparse_tables: !self.dense_tables,
            precision: match self.precision {
                PrecisionArg::F32 => Precision::Single,
                PrecisionArg::F64 => Precision::Double,
            },
            ..TrainConfig::default()
        }
    }
}

#[derive(Args)]
struct FitArgs {
    /// Image to fit (8-bit PNG)
    #[arg(long)]
    input: PathBuf,
    /// Model file to write
    #[arg(long)]
    output: PathBuf,
    /// Metrics JSONL file [default: <output>.jsonl]
    #[arg(long)]
    metrics: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    train: TrainArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Total file size budget in bytes; overrides --nf and --nc [default: none]
    #[arg(long)]
    target_size: Option<u64>,
    /// Steps between metrics records
    #[arg(long, default_value_t = 100)]
    log_every: usize,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long)]
    model: PathBuf,
    /// PNG to write
    #[arg(long)]
    output: PathBuf,
    /// Decode only pixels [x0, x1) x [y0, y1) [default: whole image]
    #[arg(long, num_args = 4, value_names = ["X0", "Y0", "X1", "Y1"])]
    rect: Option<Vec<u32>>,
}

#[derive(Args)]
struct InfoArgs {
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// Image to fit (8-bit PNG)
    #[arg(long)]
    input: PathBuf,
    /// CSV file to write [default: stdout]
    #[arg(long)]
    output: Option<PathBuf>,
    /// key=value grid file; flags given on the command line take precedence [default: none]
    #[arg(long)]
    config: Option<PathBuf>,
    /// Feature codebook sizes (repeatable) [default: 256]
    #[arg(long = "nf", value_parser = power_of_two)]
    n_f: Vec<u32>,
    /// Index codebook sizes (repeatable) [default: 65536]
    #[arg(long = "nc", value_parser = power_of_two)]
    n_c: Vec<u32>,
    /// Probing ranges (repeatable) [default: 4]
    #[arg(long = "np", value_parser = power_of_two)]
    n_p: Vec<u32>,
    /// Level counts (repeatable) [default: 16]
    #[arg(long, value_parser = positive)]
    levels: Vec<u32>,
    /// Decoder widths (repeatable) [default: 64]
    #[arg(long, value_parser = positive)]
    neurons: Vec<u32>,
    /// Seeds (repeatable) [default: 0]
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    /// Training steps per point [default: 10000]
    #[arg(long)]
    steps: Option<usize>,
    /// Pixels sampled per step [default: 4096]
    #[arg(long)]
    batch_size: Option<usize>,
    /// Adam learning rate [default: 0.01]
    #[arg(long)]
    lr: Option<f64>,
    /// Leave the ms_per_step column empty so reruns compare byte for byte
    #[arg(long)]
    no_timing: bool,
    /// Also write per-configuration means over seeds to this CSV [default: none]
    #[arg(long)]
    means: Option<PathBuf>,
}

#[derive(Args)]
struct PsnrArgs {
    /// Reference PNG
    reference: PathBuf,
    /// Test PNG
    test: PathBuf,
}

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidHyperparameter(_)
            | Error::BadRect(_)
            | Error::EmptyGrid
            | Error::TargetTooSmall { .. } => 2,
            _ => 1,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e).into()
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: 2, message: message.into() }
}

fn with_path(path: &Path) -> impl Fn(Error) -> Failure + '_ {
    move |e| {
        let mut f = Failure::from(e);
        f.message = format!("{}: {}", path.display(), f.message);
        f
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::Decode(args) => cmd_decode(args),
        Command::Info(args) => cmd_info(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Psnr(args) => cmd_psnr(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message.replace('\n', " "));
            ExitCode::from(f.code)
        }
    }
}

fn print_sizes(size: &SizeReport) {
    println!("header    {:>12} bytes", size.header);
    println!("features  {:>12} bytes", size.features);
    println!("indices   {:>12} bytes", size.indices);
    println!("mlp       {:>12} bytes", size.mlp);
    println!("total     {:>12} bytes", size.total());
}

fn print_hyper(h: &HyperParams) {
    println!(
        "n_f={} n_c={} n_p={} features={} levels={} n_min={} n_max={} neurons={} hidden_layers={} activation={:?}",
        h.n_f, h.n_c, h.n_p, h.features, h.levels, h.n_min, h.n_max, h.neurons, h.hidden_layers, h.activation
    );
}

fn cmd_fit(args: FitArgs) -> Result<(), Failure> {
    let mut hyper = args.model.hyper();
    if let Some(target) = args.target_size {
        hyper = select_hyperparams(target, &hyper)?;
    }
    hyper
        .validate()
        .map_err(|e| usage(format!("{e} (check --nf, --nc, --np and the level flags)")))?;
    let config = args.train.config(args.seed, args.log_every);
    config.validate()?;
    let image = load_image(&args.input).map_err(with_path(&args.input))?;

    let metrics_path = args
        .metrics
        .clone()
        .unwrap_or_else(|| args.output.with_extension("jsonl"));
    let mut log = BufWriter::new(File::create(&metrics_path)?);
    let out = cngp::fit(&image, &hyper, &config, Some(&mut log))?;
    log.flush()?;
    fs::write(&args.output, serialize(&out.model))?;

    print_hyper(&hyper);
    println!("psnr      {:>12.3} dB", out.metrics.final_psnr);
    println!("time      {:>12.3} ms/step", out.metrics.ms_per_step);
    print_sizes(&out.metrics.size);
    Ok(())
}

fn cmd_decode(args: DecodeArgs) -> Result<(), Failure> {
    let bytes = fs::read(&args.model)?;
    let model = deserialize(&bytes).map_err(with_path(&args.model))?;
    let image = match args.rect.as_deref() {
        Some(&[x0, y0, x1, y1]) => model.decode_rect(x0, y0, x1, y1)?,
        Some(_) => return Err(usage("--rect takes four values: x0 y0 x1 y1")),
        None => model.decode_image(),
    };
    save_image(&args.output, &image)?;
    Ok(())
}

fn cmd_info(args: InfoArgs) -> Result<(), Failure> {
    let mut file = File::open(&args.model)?;
    let header = read_header(&mut file).map_err(with_path(&args.model))?;
    let size = header.size_report()?;
    let actual = file.metadata()?.len();
    println!("image     {} x {}", header.width, header.height);
    println!("inputs    {}  outputs {}", header.dims, header.outputs);
    print_hyper(&header.hyper);
    print_sizes(&size);
    if actual != size.total() {
        return Err(Failure {
            code: 1,
            message: format!(
                "{}: file is {actual} bytes but the header describes {}",
                args.model.display(),
                size.total()
            ),
        });
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<(), Failure> {
    let mut file = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            SweepFile::parse(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
        }
        None => SweepFile::default(),
    };
    file.override_with(&args);

    let defaults = HyperParams::default();
    let train = TrainConfig::default();
    let template = file.template(&defaults);
    let grid = SweepGrid {
        template,
        n_f: file.n_f.unwrap_or_else(|| vec![defaults.n_f]),
        n_c: file.n_c.unwrap_or_else(|| vec![defaults.n_c]),
        n_p: file.n_p.unwrap_or_else(|| vec![defaults.n_p]),
        levels: file.levels.unwrap_or_else(|| vec![defaults.levels]),
        neurons: file.neurons.unwrap_or_else(|| vec![defaults.neurons]),
        seeds: file.seeds.unwrap_or_else(|| vec![0]),
    };
    let configs = grid.configs()?;
    for h in &configs {
        h.validate()?;
    }
    let config = TrainConfig {
        steps: file.steps.unwrap_or(train.steps),
        batch_size: file.batch_size.unwrap_or(train.batch_size),
        learning_rate: file.lr.unwrap_or(train.learning_rate),
        log_every: 0,
        ..train
    };
    config.validate()?;
    let image = load_image(&args.input).map_err(with_path(&args.input))?;

    let total = configs.len() * grid.seeds.len();
    let mut done = 0;
    let points = sweep(&image, &grid, &config, |p| {
        done += 1;
        eprintln!("[{done}/{total}] {}", p.csv_row(true));
    })?;

    let timing = !args.no_timing;
    match &args.output {
        Some(path) => {
            let mut out = BufWriter::new(File::create(path)?);
            cngp::eval::write_csv(&mut out, &points, timing)?;
            out.flush()?;
        }
        None => cngp::eval::write_csv(&mut std::io::stdout().lock(), &points, timing)?,
    }
    if let Some(path) = &args.means {
        let mut out = BufWriter::new(File::create(path)?);
        cngp::eval::write_csv(&mut out, &cngp::eval::mean_by_config(&points), timing)?;
        out.flush()?;
    }
    Ok(())
}

fn cmd_psnr(args: PsnrArgs) -> Result<(), Failure> {
    let reference = load_image(&args.reference).map_err(with_path(&args.reference))?;
    let test = load_image(&args.test).map_err(with_path(&args.test))?;
    let db = psnr(&reference, &test)?;
    if db.is_infinite() {
        println!("inf");
    } else {
        println!("{db:.4}");
    }
    Ok(())
}
