use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use gencomm::denoiser::{train, write_loss_csv, MlpShape, NoPerceptual, PixelTerms, ToyDecoder};
use gencomm::pipeline::{metadata, sweep, training_set, write_results, write_rows_csv, write_json};
use gencomm::rng::seeded;
use gencomm::sidechannel::{ebn0_to_snr_db, measure_ber};
use gencomm::verify::{self, Suite};
use gencomm::{Axis, Error, ExperimentConfig, LdpcCode, MlpDenoiser, OutputFormat, Result, TrialContext};

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_VERIFY: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "gencomm", version, about = "Diffusion-refined semantic transmission simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment configuration (TOML, must set spec_version)
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; overrides the config file
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output file; machine output goes to stdout when omitted
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,

    /// Trials per operating point; overrides the config file
    #[arg(long, global = true)]
    trials: Option<usize>,

    /// Suppress everything on stderr except errors
    #[arg(long, global = true)]
    quiet: bool,

    /// Worker threads for trial-level parallelism
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the invariant checks; exit 3 if any fails
    Verify {
        /// Full sample sizes (minutes instead of seconds)
        #[arg(long)]
        full: bool,
    },
    /// Trials at the single configured operating point
    Simulate,
    /// Trials over the configured SNR axis
    SweepSnr,
    /// Trials over the configured CBR axis
    SweepCbr,
    /// BER/FER table of the side-channel LDPC code
    SidechannelTest {
        /// Eb/N0 points in dB
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 1.0, 2.0, 3.0, 4.0])]
        ebn0: Vec<f64>,
        #[arg(long, default_value_t = 1024)]
        code_length: usize,
        /// Minimum information bits per point
        #[arg(long, default_value_t = 100_000)]
        bits: usize,
        /// BP iterations; defaults to side_channel.max_iters
        #[arg(long)]
        iters: Option<usize>,
        /// Use the parity-check matrix in this alist file
        #[arg(long)]
        alist_in: Option<PathBuf>,
        /// Write the parity-check matrix used to this alist file
        #[arg(long)]
        alist_out: Option<PathBuf>,
    },
    /// Train the MLP denoiser; --out is the checkpoint path
    TrainDenoiser {
        /// Overrides train.steps
        #[arg(long)]
        steps: Option<usize>,
        /// Loss curve CSV; defaults to <out stem>.loss.csv next to the checkpoint
        #[arg(long)]
        loss_csv: Option<PathBuf>,
    },
    /// One trial with its latents and sampler trajectory
    Sample {
        #[arg(long, default_value_t = 0)]
        trial: u32,
    },
}

struct Ctx {
    quiet: bool,
    out: Option<PathBuf>,
    format: OutputFormat,
}

impl Ctx {
    fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.trials {
        cfg.trials = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| {
        Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?))
}

fn run_sweep(cli: &Cli, ctx: &Ctx, axis: Axis) -> Result<u8> {
    let cfg = load_config(cli)?;
    let trials = cfg.trials;
    let meta = metadata(&cfg, axis, trials)?;
    let tc = TrialContext::new(cfg)?;
    let out = sweep(&tc, axis, trials)?;
    match &ctx.out {
        Some(p) => write_results(&out, &meta, p, ctx.format)?,
        None => {
            let stdout = io::stdout().lock();
            match ctx.format {
                OutputFormat::Csv => write_rows_csv(&out.rows, &meta, stdout)?,
                OutputFormat::Json => write_json(&out.rows, &out.aggregates, &meta, stdout)?,
            }
        }
    }
    for a in &out.aggregates {
        ctx.note(format!(
            "snr {:>6.2} dB  cbr {:.4}  n_s {:>4}  mse coarse {:.4} refined {:.4}  psnr {:.2} -> {:.2} dB  prompt ok {:.1}%{}",
            a.snr_db,
            a.cbr,
            a.n_s,
            a.mse_coarse_mean,
            a.mse_refined_mean,
            a.psnr_coarse_mean,
            a.psnr_refined_mean,
            100.0 * a.prompt_success,
            if a.failures > 0 { format!("  ({} failed)", a.failures) } else { String::new() }
        ));
    }
    let failed: Vec<_> = out.rows.iter().filter_map(|r| r.error.as_deref()).collect();
    if let Some(first) = failed.first() {
        eprintln!("{} of {} trials failed; first: {first}", failed.len(), out.rows.len());
        return Ok(EXIT_RUNTIME);
    }
    Ok(0)
}

fn run_verify(cli: &Cli, ctx: &Ctx, full: bool) -> Result<u8> {
    let seed = cli.seed.unwrap_or(0);
    let suite = if full { Suite::Full } else { Suite::Quick };
    let checks = verify::run(suite, seed);
    for c in &checks {
        ctx.note(c.line());
    }
    let passed = checks.iter().filter(|c| c.passed).count();
    if let Some(p) = &ctx.out {
        let mut w = create(p)?;
        match ctx.format {
            OutputFormat::Json => {
                serde_json::to_writer_pretty(&mut w, &checks).map_err(|e| Error::Io(e.into()))?;
                writeln!(w)?;
            }
            OutputFormat::Csv => {
                let mut cw = csv::Writer::from_writer(&mut w);
                cw.write_record(["check", "passed", "detail"]).map_err(csv_io)?;
                for c in &checks {
                    cw.write_record([c.name.as_str(), &c.passed.to_string(), c.detail.as_str()])
                        .map_err(csv_io)?;
                }
                cw.flush()?;
            }
        }
        w.flush()?;
    }
    let summary = format!("{passed}/{} checks passed (seed {seed})", checks.len());
    if passed == checks.len() {
        ctx.note(summary);
        Ok(0)
    } else {
        eprintln!("{summary}");
        Ok(EXIT_VERIFY)
    }
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(io::Error::other(e))
}

#[allow(clippy::too_many_arguments)]
fn run_sidechannel(
    cli: &Cli,
    ctx: &Ctx,
    ebn0: &[f64],
    code_length: usize,
    bits: usize,
    iters: Option<usize>,
    alist_in: Option<&Path>,
    alist_out: Option<&Path>,
) -> Result<u8> {
    let cfg = load_config(cli)?;
    let iters = iters.unwrap_or(cfg.side_channel.max_iters);
    if iters == 0 {
        return Err(Error::Config("--iters must be >= 1".into()));
    }
    let code = match alist_in {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
            LdpcCode::from_alist(&text)?
        }
        None => LdpcCode::regular(code_length, cfg.side_channel.code_seed)?,
    };
    if let Some(p) = alist_out {
        let mut w = create(p)?;
        w.write_all(code.to_alist().as_bytes())?;
        w.flush()?;
    }
    let mut rows = Vec::new();
    for &e in ebn0 {
        let pt = measure_ber(&code, e, bits, iters, cfg.seed)?;
        ctx.note(format!(
            "Eb/N0 {e:>5.2} dB: BER {:.3e}  FER {:.3e}  ({} frames)",
            pt.ber(),
            pt.fer(),
            pt.frames
        ));
        rows.push(pt);
    }
    let sink: Box<dyn Write> = match &ctx.out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    };
    match ctx.format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(sink);
            w.write_record([
                "ebn0_db", "snr_db", "n", "k", "iters", "frames", "info_bits", "bit_errors", "ber", "frame_errors",
                "fer",
            ])
            .map_err(csv_io)?;
            for p in &rows {
                w.write_record([
                    format!("{:.16e}", p.ebn0_db),
                    format!("{:.16e}", ebn0_to_snr_db(p.ebn0_db, code.rate())),
                    code.n().to_string(),
                    code.k().to_string(),
                    iters.to_string(),
                    p.frames.to_string(),
                    p.info_bits.to_string(),
                    p.bit_errors.to_string(),
                    format!("{:.16e}", p.ber()),
                    p.frame_errors.to_string(),
                    format!("{:.16e}", p.fer()),
                ])
                .map_err(csv_io)?;
            }
            w.flush()?;
        }
        OutputFormat::Json => {
            let v: Vec<_> = rows
                .iter()
                .map(|p| {
                    serde_json::json!({
                        "ebn0_db": p.ebn0_db,
                        "snr_db": ebn0_to_snr_db(p.ebn0_db, code.rate()),
                        "n": code.n(),
                        "k": code.k(),
                        "iters": iters,
                        "frames": p.frames,
                        "info_bits": p.info_bits,
                        "bit_errors": p.bit_errors,
                        "ber": p.ber(),
                        "frame_errors": p.frame_errors,
                        "fer": p.fer(),
                    })
                })
                .collect();
            let mut sink = sink;
            serde_json::to_writer_pretty(&mut sink, &v).map_err(|e| Error::Io(e.into()))?;
            writeln!(sink)?;
            sink.flush()?;
        }
    }
    Ok(0)
}

fn loss_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.loss.csv"))
}

fn run_train(cli: &Cli, ctx: &Ctx, steps: Option<usize>, loss_csv: Option<&Path>) -> Result<u8> {
    let mut cfg = load_config(cli)?;
    let out = ctx
        .out
        .clone()
        .ok_or_else(|| Error::Config("train-denoiser needs --out for the checkpoint".into()))?;
    if let Some(s) = steps {
        cfg.train.steps = s;
    }
    if let Some(s) = cli.seed {
        cfg.train.seed = s;
    }
    cfg.validate()?;
    let tc = TrialContext::new(cfg.clone())?;
    let data = training_set(&tc, cfg.train_samples, cfg.channel.snr_db, cfg.train.seed)?;
    let shape = MlpShape::new(cfg.world.dim, cfg.world.classes);
    let mut model = MlpDenoiser::new(shape, cfg.train.seed)?;
    let decoder = ToyDecoder::new(cfg.world.dim, cfg.train.seed);
    let pixel = PixelTerms {
        decoder: &decoder,
        perceptual: &NoPerceptual,
        min_denominator: cfg.train.pixel_min_denominator,
    };
    let history = train(&mut model, &data, &cfg.train, tc.schedule(), Some(&pixel), &mut seeded(cfg.train.seed))?;
    model.save(&out)?;
    let lp = loss_csv.map(Path::to_path_buf).unwrap_or_else(|| loss_path(&out));
    let mut w = create(&lp)?;
    write_loss_csv(&history, &mut w)?;
    w.flush()?;
    if let (Some(first), Some(last)) = (history.first(), history.last()) {
        ctx.note(format!(
            "{} steps, loss {:.4} -> {:.4}; checkpoint {}, loss curve {}",
            history.len(),
            first.loss.total,
            last.loss.total,
            out.display(),
            lp.display()
        ));
    }
    Ok(0)
}

fn run_sample(cli: &Cli, ctx: &Ctx, trial: u32) -> Result<u8> {
    let cfg = load_config(cli)?;
    let tc = TrialContext::new(cfg)?;
    let point = tc.points(Axis::Single)?[0];
    let o = tc.run_trial(&point, trial)?;
    let sink: Box<dyn Write> = match &ctx.out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    };
    match ctx.format {
        OutputFormat::Json => {
            let v = serde_json::json!({
                "trial": trial,
                "class": o.class.0,
                "n_s": point.n_s,
                "gamma": o.trace.gamma,
                "mse_coarse": o.row.mse_coarse,
                "mse_refined": o.row.mse_refined,
                "prompt_ok": o.row.prompt_ok,
                "z0": o.z0,
                "z_c": o.z_c,
                "z_hat": o.z_hat,
                "trace": o.trace,
            });
            let mut sink = sink;
            serde_json::to_writer_pretty(&mut sink, &v).map_err(|e| Error::Io(e.into()))?;
            writeln!(sink)?;
            sink.flush()?;
        }
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(sink);
            w.write_record(["index", "z0", "z_c", "z_hat"]).map_err(csv_io)?;
            for i in 0..o.z0.dim() {
                w.write_record([
                    i.to_string(),
                    format!("{:.16e}", o.z0[i]),
                    format!("{:.16e}", o.z_c[i]),
                    format!("{:.16e}", o.z_hat[i]),
                ])
                .map_err(csv_io)?;
            }
            w.flush()?;
        }
    }
    ctx.note(format!(
        "trial {trial}: class {}, n_s {}, mse coarse {:.4} refined {:.4}, prompt ok {}",
        o.class.0, point.n_s, o.row.mse_coarse, o.row.mse_refined, o.row.prompt_ok
    ));
    Ok(0)
}

fn dispatch(cli: &Cli) -> Result<u8> {
    if cli.threads == 0 {
        return Err(Error::Config("--threads must be >= 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .map_err(|e| Error::Io(io::Error::other(e)))?;
    let ctx = Ctx {
        quiet: cli.quiet,
        out: cli.out.clone(),
        format: cli.format.into(),
    };
    match &cli.command {
        Command::Verify { full } => run_verify(cli, &ctx, *full),
        Command::Simulate => run_sweep(cli, &ctx, Axis::Single),
        Command::SweepSnr => run_sweep(cli, &ctx, Axis::Snr),
        Command::SweepCbr => run_sweep(cli, &ctx, Axis::Cbr),
        Command::SidechannelTest {
            ebn0,
            code_length,
            bits,
            iters,
            alist_in,
            alist_out,
        } => run_sidechannel(cli, &ctx, ebn0, *code_length, *bits, *iters, alist_in.as_deref(), alist_out.as_deref()),
        Command::TrainDenoiser { steps, loss_csv } => run_train(cli, &ctx, *steps, loss_csv.as_deref()),
        Command::Sample { trial } => run_sample(cli, &ctx, *trial),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { EXIT_CONFIG } else { EXIT_RUNTIME })
        }
    }
}
