use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mfhnp_core::aggregation::Aggregation;
use mfhnp_core::datasets::{epi_task, ingest_grid, make_split, read_dataset, synth_task, write_dataset, ScenarioId, Split, SplitMode, SplitSpec, StoredDataset, Windowing};
use mfhnp_core::epi::{AgeBracketMap, ScenarioFamily};
use mfhnp_core::experiment::{config_digest, evaluate_ids, from_model_space, init_model, predict_scenarios, train, ExperimentConfig, TaskData, TrainConfig};
use mfhnp_core::kv::{self, Kv};
use mfhnp_core::np::{NpConfig, Variant};
use mfhnp_core::{Checkpoint, DiagGaussian, Error, MfhnpModel, Result};

/// Process exit codes. Clap reports usage errors with 2.
mod exit {
    pub const IO: u8 = 3;
    pub const FORMAT: u8 = 4;
    pub const INVALID: u8 = 5;
    pub const INFEASIBLE_SPLIT: u8 = 6;
    pub const DIVERGED: u8 = 7;
    pub const UNPAIRED: u8 = 8;
    pub const LOCKED: u8 = 9;
    pub const NUMERIC: u8 = 10;
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => exit::IO,
        Error::Format(_) => exit::FORMAT,
        Error::Invalid(_) | Error::ShapeMismatch { .. } | Error::LengthMismatch { .. } | Error::Domain(_) | Error::Empty(_) => exit::INVALID,
        Error::InfeasibleSplit(_) => exit::INFEASIBLE_SPLIT,
        Error::Diverged { .. } => exit::DIVERGED,
        Error::Unpaired { .. } => exit::UNPAIRED,
        Error::Locked(_) => exit::LOCKED,
        Error::NonFinite(_) | Error::NonScalarLoss(_) | Error::Detached => exit::NUMERIC,
    }
}

#[derive(Parser)]
#[command(name = "mfhnp", version, about = "Multi-fidelity hierarchical neural process surrogates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a two-fidelity epidemic dataset.
    Simulate(SimulateArgs),
    /// Generate the 1-D synthetic two-fidelity task.
    Synth(SynthArgs),
    /// Window monthly grid files into a two-fidelity dataset.
    IngestGrid(IngestArgs),
    /// Partition a dataset into training, validation and test ids.
    Split(SplitArgs),
    /// Train a model and write checkpoint, history and config.
    Train(TrainArgs),
    /// Score a checkpoint on the test or validation ids.
    Evaluate(EvaluateArgs),
    /// Write predictive means and standard deviations.
    Predict(PredictArgs),
    /// Write residual and trajectory tables as CSV.
    Export(ExportArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    out: PathBuf,
    /// Fine age groups (high fidelity).
    #[arg(long, default_value_t = 85)]
    groups: usize,
    /// Coarse age brackets (low fidelity).
    #[arg(long, default_value_t = 18)]
    coarse_groups: usize,
    #[arg(long, default_value_t = 100)]
    horizon: usize,
    #[arg(long, default_value_t = 30)]
    samples: usize,
    #[arg(long, default_value_t = 109)]
    scenarios: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 112)]
    n_low: usize,
    #[arg(long, default_value_t = 112)]
    n_high: usize,
    #[arg(long, default_value_t = 8)]
    samples: usize,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct IngestArgs {
    /// Directory with `low/` and `high/` subdirectories of monthly grid files.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 6)]
    months_in: usize,
    #[arg(long, default_value_t = 6)]
    months_out: usize,
    #[arg(long, default_value_t = 12)]
    stride: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    AsSir,
    Climate,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Nested,
    NonNested,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    mode: Mode,
    /// Split counts; individual counts can be overridden below.
    #[arg(long, value_enum, default_value = "as-sir")]
    preset: Preset,
    #[arg(long)]
    n_train_low: Option<usize>,
    #[arg(long)]
    n_train_high: Option<usize>,
    #[arg(long)]
    n_val: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Output directory for checkpoint.txt, history.csv and config.txt.
    #[arg(long)]
    out: PathBuf,
    /// Flat `key = value` file with `np.*` and `train.*` entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training preset; defaults to as-sir for epidemic data and climate otherwise.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    agg: Option<String>,
    #[arg(long)]
    d_z: Option<usize>,
    #[arg(long)]
    d_r: Option<usize>,
    /// Comma-separated hidden widths.
    #[arg(long)]
    encoder_hidden: Option<String>,
    #[arg(long)]
    decoder_hidden: Option<String>,
    #[arg(long)]
    activation: Option<String>,
    #[arg(long)]
    k_samples: Option<usize>,
    #[arg(long)]
    s_samples: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    log_space: Option<bool>,
    #[arg(long)]
    eval_samples: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum IdSet {
    Test,
    Val,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    ids: IdSet,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Output directory for residuals.csv and trajectories.csv.
    #[arg(long)]
    out: PathBuf,
}

/// Files staged under temporary names and renamed only once all writes succeeded.
struct Staged {
    files: Vec<(PathBuf, PathBuf)>,
}

impl Staged {
    fn new() -> Self {
        Staged { files: Vec::new() }
    }

    fn add(&mut self, path: &Path, contents: &str) -> Result<()> {
        let name = path.file_name().ok_or_else(|| Error::Invalid(format!("{} is not a file path", path.display())))?;
        let tmp = path.with_file_name(format!(".{}.partial", name.to_string_lossy()));
        self.files.push((tmp.clone(), path.to_path_buf()));
        fs::write(&tmp, contents)?;
        Ok(())
    }

    fn commit(mut self) -> Result<()> {
        for (tmp, path) in std::mem::take(&mut self.files) {
            fs::rename(&tmp, &path)?;
        }
        Ok(())
    }
}

impl Drop for Staged {
    fn drop(&mut self) {
        for (tmp, _) in &self.files {
            let _ = fs::remove_file(tmp);
        }
    }
}

fn write_one(path: &Path, contents: &str) -> Result<()> {
    let mut staged = Staged::new();
    staged.add(path, contents)?;
    staged.commit()
}

fn meta(pairs: &[(&str, String)]) -> Kv {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let family = ScenarioFamily::sized(a.groups, a.horizon, a.samples);
    let map = if (a.groups, a.coarse_groups) == (85, 18) { AgeBracketMap::standard_85_to_18() } else { AgeBracketMap::even(a.groups, a.coarse_groups)? };
    let (low, high) = epi_task(&family, &map, a.scenarios, a.seed)?;
    let meta = meta(&[
        ("task", "epi".into()),
        ("groups", a.groups.to_string()),
        ("coarse_groups", a.coarse_groups.to_string()),
        ("horizon", a.horizon.to_string()),
        ("seed", a.seed.to_string()),
    ]);
    write_dataset(&a.out, &StoredDataset { low, high, split: None, meta })
}

fn synth(a: SynthArgs) -> Result<()> {
    let (low, high) = synth_task(a.n_low, a.n_high, a.samples, a.noise, a.seed)?;
    let meta = meta(&[("task", "synth".into()), ("noise", format!("{:e}", a.noise)), ("seed", a.seed.to_string())]);
    write_dataset(&a.out, &StoredDataset { low, high, split: None, meta })
}

fn ingest(a: IngestArgs) -> Result<()> {
    let win = Windowing { months_in: a.months_in, months_out: a.months_out, stride: a.stride };
    let (low, high) = ingest_grid(&a.input, &win)?;
    let meta = meta(&[
        ("task", "grid".into()),
        ("months_in", a.months_in.to_string()),
        ("months_out", a.months_out.to_string()),
        ("stride", a.stride.to_string()),
    ]);
    write_dataset(&a.out, &StoredDataset { low, high, split: None, meta })
}

fn split(a: SplitArgs) -> Result<()> {
    let mut d = read_dataset(&a.data)?;
    let mode = match a.mode {
        Mode::Nested => SplitMode::Nested,
        Mode::NonNested => SplitMode::NonNested,
    };
    let mut spec = match a.preset {
        Preset::AsSir => SplitSpec::as_sir(mode, a.seed),
        Preset::Climate => SplitSpec::climate(mode, a.seed),
    };
    spec.n_train_low = a.n_train_low.unwrap_or(spec.n_train_low);
    spec.n_train_high = a.n_train_high.unwrap_or(spec.n_train_high);
    spec.n_val = a.n_val.unwrap_or(spec.n_val);
    spec.n_test = a.n_test.unwrap_or(spec.n_test);
    // Only ids simulated at both levels can serve every role.
    let ids: Vec<ScenarioId> = d.high.ids().into_iter().filter(|&id| d.low.contains(id)).collect();
    d.split = Some(make_split(&ids, &spec)?);
    write_dataset(&a.data, &d)
}

fn load_task(dir: &Path) -> Result<(StoredDataset, Split)> {
    let d = read_dataset(dir)?;
    let split = d.split.clone().ok_or_else(|| Error::Invalid(format!("{} has no split; run `mfhnp split` first", dir.display())))?;
    Ok((d, split))
}

fn train_overrides(a: &TrainArgs) -> Kv {
    let mut kv = Kv::new();
    let mut put = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            kv.insert(k.to_string(), v);
        }
    };
    put("np.variant", a.variant.clone());
    put("np.aggregation", a.agg.clone());
    put("np.d_z", a.d_z.map(|v| v.to_string()));
    put("np.d_r", a.d_r.map(|v| v.to_string()));
    put("np.encoder_hidden", a.encoder_hidden.clone());
    put("np.decoder_hidden", a.decoder_hidden.clone());
    put("np.activation", a.activation.clone());
    put("np.k_samples", a.k_samples.map(|v| v.to_string()));
    put("np.s_samples", a.s_samples.map(|v| v.to_string()));
    put("train.learning_rate", a.lr.map(|v| format!("{v:e}")));
    put("train.batch_size", a.batch_size.map(|v| v.to_string()));
    put("train.patience", a.patience.map(|v| v.to_string()));
    put("train.max_epochs", a.epochs.map(|v| v.to_string()));
    put("train.seed", a.seed.map(|v| v.to_string()));
    put("train.log_space_outputs", a.log_space.map(|v| v.to_string()));
    put("train.eval_latent_samples", a.eval_samples.map(|v| v.to_string()));
    kv
}

/// Preset defaults, then the config file, then flags; widths always come from the data.
fn resolve_config(a: &TrainArgs, d: &StoredDataset) -> Result<ExperimentConfig> {
    let mut user = match &a.config {
        Some(path) => kv::from_text(&fs::read_to_string(path)?)?,
        None => Kv::new(),
    };
    user.extend(train_overrides(a));
    let variant = Variant::from_tag(user.get("np.variant").map_or("hnp-mean", String::as_str))?;
    let aggregation = Aggregation::from_tag(user.get("np.aggregation").map_or("ba", String::as_str))?;
    let preset = a.preset.unwrap_or(if d.meta.get("task").map(String::as_str) == Some("epi") { Preset::AsSir } else { Preset::Climate });
    let train = match preset {
        Preset::AsSir => TrainConfig::as_sir(),
        Preset::Climate => TrainConfig::climate(),
    };
    let np = NpConfig::new(variant, aggregation, d.low.d_x, d.low.d_y, d.high.d_x, d.high.d_y);
    let mut kv = ExperimentConfig { np, train }.to_kv();
    kv.extend(user);
    for (k, v) in [("np.d_x_low", d.low.d_x), ("np.d_y_low", d.low.d_y), ("np.d_x_high", d.high.d_x), ("np.d_y_high", d.high.d_y)] {
        kv.insert(k.into(), v.to_string());
    }
    ExperimentConfig::from_kv(&kv)
}

fn run_train(a: TrainArgs) -> Result<()> {
    let (d, split) = load_task(&a.data)?;
    let cfg = resolve_config(&a, &d)?;
    let data = TaskData::new(d.low, d.high);
    let model = init_model(cfg.np.clone(), &cfg.train)?;
    let outcome = train(model, &data, &split, &cfg.train)?;

    let digest = cfg.digest();
    let mut ckpt = outcome.model.to_checkpoint();
    for (k, v) in cfg.train.to_kv() {
        ckpt.set_header(k, v);
    }
    ckpt.set_header("config_digest", digest.clone());

    fs::create_dir_all(&a.out)?;
    let mut staged = Staged::new();
    staged.add(&a.out.join("checkpoint.txt"), &ckpt.to_text())?;
    staged.add(&a.out.join("history.csv"), &outcome.history.to_text())?;
    staged.add(&a.out.join("config.txt"), &format!("# config_digest {digest}\n{}", cfg.to_text()))?;
    staged.commit()?;
    match outcome.history.best_val_nll() {
        Some(nll) => eprintln!("trained {} epochs; best validation NLL {nll:.6}", outcome.history.epochs.len()),
        None => eprintln!("max_epochs is 0; wrote the initial model"),
    }
    Ok(())
}

struct Loaded {
    model: MfhnpModel,
    train: TrainConfig,
    digest: String,
    data: TaskData,
    split: Split,
    ids: Vec<ScenarioId>,
}

fn load_model(a: &ModelArgs) -> Result<Loaded> {
    let ckpt = Checkpoint::read(&a.checkpoint)?;
    let model = MfhnpModel::from_checkpoint(&ckpt)?;
    let train_kv: Kv = ckpt.headers().iter().filter(|(k, _)| k.starts_with("train.")).map(|(k, v)| (k.clone(), v.clone())).collect();
    let train = TrainConfig::from_kv(&train_kv)?;
    let digest = config_digest(model.config(), &train);
    if ckpt.header("config_digest")? != digest {
        return Err(Error::Format(format!("{}: config_digest does not match its own headers", a.checkpoint.display())));
    }
    let (d, split) = load_task(&a.data)?;
    let data = TaskData::new(d.low, d.high);
    data.check_widths(model.config())?;
    let ids = match a.ids {
        IdSet::Test => split.test.clone(),
        IdSet::Val => split.val.clone(),
    };
    Ok(Loaded { model, train, digest, data, split, ids })
}

fn run_evaluate(a: EvaluateArgs) -> Result<()> {
    let m = load_model(&a.model)?;
    let report = evaluate_ids(&m.model, &m.data, &m.split, &m.ids, &m.train)?;
    write_one(&a.out, &report.to_text())?;
    eprintln!("MAE {:.6}  NLL {:.6}  over {} scenarios", report.mae, report.nll, report.per_scenario.len());
    Ok(())
}

fn fmt_row(values: impl Iterator<Item = f64>) -> String {
    values.map(|v| format!("{v:.16e}")).collect::<Vec<_>>().join(" ")
}

/// Predictive mean and std mapped back to the data space, with a ±2σ band.
struct Band {
    mean: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

fn band(pred: &DiagGaussian, log_space: bool) -> Band {
    let back = |v: f64| from_model_space(v, log_space);
    let sd = pred.variance().iter().map(|v| v.sqrt());
    let (mut lower, mut upper) = (Vec::new(), Vec::new());
    for (m, s) in pred.mean().iter().zip(sd) {
        lower.push(back(m - 2.0 * s));
        upper.push(back(m + 2.0 * s));
    }
    Band { mean: pred.mean().iter().map(|&m| back(m)).collect(), lower, upper }
}

fn run_predict(a: PredictArgs) -> Result<()> {
    let m = load_model(&a.model)?;
    let preds = predict_scenarios(&m.model, &m.data, &m.split, &m.ids, &m.train)?;
    let space = if m.train.log_space_outputs { "log1p" } else { "identity" };
    let mut s = format!("mfhnp-predict 1\nconfig_digest {}\nspace {space}\nn_scenarios {}\n", m.digest, preds.len());
    for (id, p) in m.ids.iter().zip(&preds) {
        s.push_str(&format!("scenario {id}\nmean {}\nstd {}\n", fmt_row(p.mean().iter().copied()), fmt_row(p.variance().iter().map(|v| v.sqrt()))));
    }
    write_one(&a.out, &s)
}

fn run_export(a: ExportArgs) -> Result<()> {
    let m = load_model(&a.model)?;
    let preds = predict_scenarios(&m.model, &m.data, &m.split, &m.ids, &m.train)?;
    let mut residuals = format!("# config_digest {}\nscenario,index,truth_mean,pred_mean,residual\n", m.digest);
    let mut trajectories = format!("# config_digest {}\nscenario,index,pred_mean,pred_lower,pred_upper,truth_mean\n", m.digest);
    for (&id, p) in m.ids.iter().zip(&preds) {
        let truth = m.data.high.get(id)?.mean_y();
        let b = band(p, m.train.log_space_outputs);
        for (i, &t) in truth.iter().enumerate() {
            residuals.push_str(&format!("{id},{i},{t:e},{:e},{:e}\n", b.mean[i], b.mean[i] - t));
            trajectories.push_str(&format!("{id},{i},{:e},{:e},{:e},{t:e}\n", b.mean[i], b.lower[i], b.upper[i]));
        }
    }
    fs::create_dir_all(&a.out)?;
    let mut staged = Staged::new();
    staged.add(&a.out.join("residuals.csv"), &residuals)?;
    staged.add(&a.out.join("trajectories.csv"), &trajectories)?;
    staged.commit()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Synth(a) => synth(a),
        Command::IngestGrid(a) => ingest(a),
        Command::Split(a) => split(a),
        Command::Train(a) => run_train(a),
        Command::Evaluate(a) => run_evaluate(a),
        Command::Predict(a) => run_predict(a),
        Command::Export(a) => run_export(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
