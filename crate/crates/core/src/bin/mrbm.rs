use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use mrbm::data::container::{read_container, read_model, write_model, StoredModel};
use mrbm::data::manifest::{load_dataset, write_dataset, Dataset, DatasetMeta, Record};
use mrbm::data::patches::crop_patches;
use mrbm::data::pgm::{tile, write_image, GrayImage};
use mrbm::data::toy::{gen_toy, BackgroundSource, ToyConfig};
use mrbm::error::Checkpoint;
use mrbm::eval::{
    baseline_features, fgbg_features, match_rate, probe_experiment, random_mask_control, seg_accuracy_batch,
    sha256_hex, write_reports_csv, write_reports_text, EvalReport, ProbeConfig, Provenance,
};
use mrbm::masked::{sample_foreground, GibbsConfig, MaskEstimator, MaskedModel, OutlierConfig};
use mrbm::rng::{stream, DOMAIN_INIT, DOMAIN_SAMPLE};
use mrbm::train::{pretrain_beta, train_foreground_with, OutlierSchedule, TrainConfig};
use mrbm::{BetaRbmParams, Error, MixedRbmParams};

#[derive(Parser)]
#[command(name = "mrbm", version, about = "Masked RBM foreground/background modelling")]
struct Cli {
    /// Worker threads for data-parallel stages (outputs do not depend on it).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Validate the configuration and print it without computing anything.
    #[arg(long, global = true)]
    dry_run: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the toy dataset (train, test, background, pairs).
    ToyGen(ToyGenArgs),
    /// Crop random square patches from a directory of images.
    CropPatches(CropArgs),
    /// Train the background Beta RBM on patches.
    TrainBg(BetaTrainArgs),
    /// Pretrain a Beta RBM on whole images for the foreground appearance.
    PretrainFg(BetaTrainArgs),
    /// Joint training of the foreground model against a frozen background.
    TrainFg(TrainFgArgs),
    /// Infer masks for a dataset.
    Segment(SegmentArgs),
    /// Draw samples from the foreground model.
    Sample(SampleArgs),
    /// Pixel accuracy of predicted masks.
    EvalSeg(EvalSegArgs),
    /// Accuracy drop when predicted masks are assigned to the wrong images.
    EvalControl(EvalControlArgs),
    /// Logistic probe on hidden features, FG-BG model versus a plain RBM.
    EvalProbe(EvalProbeArgs),
    /// Nearest-neighbour matching of hidden codes across two backgrounds.
    EvalMatch(EvalMatchArgs),
    /// Print a model container's header and parameter statistics.
    Inspect(InspectArgs),
}

#[derive(Args, Serialize)]
struct ToyGenArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 16)]
    patch: usize,
    #[arg(long, default_value_t = 2000)]
    train: usize,
    #[arg(long, default_value_t = 1000)]
    test: usize,
    #[arg(long, default_value_t = 10_000)]
    backgrounds: usize,
    #[arg(long, default_value_t = 65)]
    pairs: usize,
    /// Directory of natural images to crop backgrounds from (default: procedural).
    #[arg(long)]
    background_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    rect_fraction: f64,
}

#[derive(Args, Serialize)]
struct CropArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 16)]
    size: usize,
    #[arg(long, default_value_t = 10_000)]
    count: usize,
}

#[derive(Args, Serialize, Clone)]
struct SmlArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 100)]
    batch: usize,
    #[arg(long, default_value_t = 1e-2)]
    lr_shape: f64,
    #[arg(long, default_value_t = 1e-3)]
    lr_appearance: f64,
    #[arg(long, default_value_t = 1e-2)]
    lr_bias: f64,
    #[arg(long, default_value_t = 1e-4)]
    weight_decay: f64,
    #[arg(long, default_value_t = 100)]
    chains: usize,
    /// Write a checkpoint every K epochs (0: only the final model).
    #[arg(long, default_value_t = 0)]
    checkpoint_every: usize,
}

impl SmlArgs {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch,
            lr_shape: self.lr_shape,
            lr_appearance: self.lr_appearance,
            lr_bias: self.lr_bias,
            weight_decay: self.weight_decay,
            n_chains: self.chains,
            seed: self.seed,
            ..TrainConfig::default()
        }
    }
}

#[derive(Args, Serialize)]
struct BetaTrainArgs {
    /// Dataset directory (manifest.csv).
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 50)]
    hidden: usize,
    #[command(flatten)]
    sml: SmlArgs,
}

#[derive(Args, Serialize)]
struct TrainFgArgs {
    #[arg(long)]
    data: PathBuf,
    /// Background model (beta-rbm container).
    #[arg(long)]
    bg: PathBuf,
    /// Pretrained appearance model (beta-rbm container); random otherwise.
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    hidden: usize,
    #[arg(long, default_value_t = OutlierConfig::DEFAULT_P)]
    outlier_p: f64,
    /// Enable the outlier component from this epoch on.
    #[arg(long, conflicts_with = "outliers_from_start")]
    outlier_from_epoch: Option<usize>,
    #[arg(long)]
    outliers_from_start: bool,
    #[command(flatten)]
    sml: SmlArgs,
}

#[derive(Args, Serialize, Clone)]
struct GibbsArgs {
    #[arg(long, default_value_t = 100)]
    sweeps: usize,
    #[arg(long, default_value_t = 50)]
    burn_in: usize,
    #[arg(long, default_value_t = OutlierConfig::DEFAULT_P)]
    outlier_p: f64,
    #[arg(long)]
    no_outliers: bool,
    /// Use the last sample instead of the posterior mean.
    #[arg(long)]
    final_sample: bool,
}

impl GibbsArgs {
    fn config(&self, seed: u64) -> mrbm::Result<(GibbsConfig, OutlierConfig)> {
        let mut g = GibbsConfig::new(self.sweeps, self.burn_in, seed)?;
        if self.final_sample {
            g.estimator = MaskEstimator::FinalSample;
        }
        let out = if self.no_outliers {
            OutlierConfig::disabled()
        } else {
            OutlierConfig::enabled(self.outlier_p)?
        };
        Ok((g, out))
    }
}

#[derive(Args, Serialize)]
struct SegmentArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    gibbs: GibbsArgs,
}

#[derive(Args, Serialize)]
struct SampleArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    model: PathBuf,
    /// Output PGM; a grid with appearance, mask and composite rows.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 16)]
    count: usize,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
}

#[derive(Args, Serialize)]
struct EvalSegArgs {
    /// Segmentation output directory.
    #[arg(long)]
    pred: PathBuf,
    /// Dataset with ground-truth masks.
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct EvalControlArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct EvalProbeArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    model: PathBuf,
    /// Plain Beta RBM used as the baseline.
    #[arg(long)]
    baseline: Option<PathBuf>,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    per_class: usize,
    #[arg(long, default_value_t = 1e-2)]
    lambda: f64,
    #[arg(long, default_value_t = 10_000)]
    iterations: usize,
    /// Number of probe subsets; the median accuracy is reported.
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[command(flatten)]
    gibbs: GibbsArgs,
}

#[derive(Args, Serialize)]
struct EvalMatchArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    baseline: Option<PathBuf>,
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    gibbs: GibbsArgs,
}

#[derive(Args, Serialize)]
struct InspectArgs {
    model: PathBuf,
}

/// Failure classes mapped to exit codes.
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Dimension { .. } | Error::InvalidParameter(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

type CliResult<T = ()> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.workers {
        if n == 0 {
            eprintln!("error: --workers must be positive");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.command, cli.dry_run) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cmd: Command, dry_run: bool) -> CliResult {
    match cmd {
        Command::ToyGen(a) => toy_gen(a, dry_run),
        Command::CropPatches(a) => crop(a, dry_run),
        Command::TrainBg(a) => train_beta("train-bg", a, dry_run),
        Command::PretrainFg(a) => train_beta("pretrain-fg", a, dry_run),
        Command::TrainFg(a) => train_fg(a, dry_run),
        Command::Segment(a) => segment(a, dry_run),
        Command::Sample(a) => sample(a, dry_run),
        Command::EvalSeg(a) => eval_seg(a, dry_run),
        Command::EvalControl(a) => eval_control(a, dry_run),
        Command::EvalProbe(a) => eval_probe(a, dry_run),
        Command::EvalMatch(a) => eval_match(a, dry_run),
        Command::Inspect(a) => inspect(a),
    }
}

#[derive(Serialize)]
struct Echo<'a, T: Serialize> {
    command: &'a str,
    version: &'a str,
    args: &'a T,
}

fn echo_json<T: Serialize>(command: &str, args: &T) -> CliResult<String> {
    let echo = Echo {
        command,
        version: env!("CARGO_PKG_VERSION"),
        args,
    };
    serde_json::to_string_pretty(&echo).map_err(|e| Failure::Runtime(e.to_string()))
}

/// Prints the configuration; with `--dry-run` nothing else happens.
fn announce<T: Serialize>(command: &str, args: &T, dry_run: bool) -> CliResult<bool> {
    let json = echo_json(command, args)?;
    if dry_run {
        println!("{json}");
    }
    Ok(dry_run)
}

/// Writes `<artifact>.config.json` (or `config.json` inside a directory).
fn write_echo<T: Serialize>(artifact: &Path, command: &str, args: &T) -> CliResult {
    let path = if artifact.is_dir() {
        artifact.join("config.json")
    } else {
        let mut name = artifact.as_os_str().to_owned();
        name.push(".config.json");
        PathBuf::from(name)
    };
    fs::write(path, echo_json(command, args)? + "\n").map_err(|e| Failure::Runtime(e.to_string()))
}

fn config_hash<T: Serialize>(command: &str, args: &T) -> CliResult<String> {
    Ok(sha256_hex(echo_json(command, args)?.as_bytes()))
}

fn file_hash(path: &Path) -> CliResult<String> {
    Ok(sha256_hex(&fs::read(path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?))
}

fn require(path: &Path) -> CliResult {
    if path.exists() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("{} does not exist", path.display())))
    }
}

fn load(path: &Path) -> CliResult<Dataset> {
    require(path)?;
    Ok(load_dataset(path)?)
}

fn load_beta(path: &Path) -> CliResult<BetaRbmParams> {
    require(path)?;
    match read_model(path)?.0 {
        StoredModel::Beta(p) => Ok(p),
        StoredModel::Masked(_) => Err(Failure::Usage(format!("{} holds a masked model, expected a beta-rbm", path.display()))),
    }
}

fn load_masked(path: &Path) -> CliResult<MaskedModel> {
    require(path)?;
    match read_model(path)?.0 {
        StoredModel::Masked(m) => Ok(m),
        StoredModel::Beta(_) => Err(Failure::Usage(format!("{} holds a beta-rbm, expected a masked model", path.display()))),
    }
}

fn check_pixels(what: &str, model_pix: usize, data: &Dataset) -> CliResult {
    if model_pix != data.n_pix() {
        return Err(Failure::Usage(format!(
            "{what}: model has {model_pix} pixels but the dataset images are {}x{} = {} pixels",
            data.width,
            data.height,
            data.n_pix()
        )));
    }
    Ok(())
}

fn meta(seed: u64, command: &str) -> BTreeMap<String, String> {
    BTreeMap::from([
        ("command".to_string(), command.to_string()),
        ("seed".to_string(), seed.to_string()),
        ("version".to_string(), env!("CARGO_PKG_VERSION").to_string()),
    ])
}

fn toy_gen(a: ToyGenArgs, dry_run: bool) -> CliResult {
    let cfg = ToyConfig {
        patch_size: a.patch,
        n_train: a.train,
        n_test: a.test,
        n_background: a.backgrounds,
        n_pairs: a.pairs,
        background: match &a.background_dir {
            Some(d) => BackgroundSource::Directory(d.clone()),
            None => BackgroundSource::Procedural,
        },
        seed: a.seed,
        rect_fraction: a.rect_fraction,
    };
    cfg.validate()?;
    if announce("toy-gen", &a, dry_run)? {
        return Ok(());
    }
    gen_toy(&cfg, &a.out)?;
    write_echo(&a.out, "toy-gen", &a)
}

fn crop(a: CropArgs, dry_run: bool) -> CliResult {
    if a.size == 0 {
        return Err(Failure::Usage("--size must be positive".into()));
    }
    if announce("crop-patches", &a, dry_run)? {
        return Ok(());
    }
    require(&a.input)?;
    let patches = crop_patches(&a.input, a.size, a.count, a.seed)?;
    let records: Vec<Record> = patches
        .into_iter()
        .map(|image| Record {
            image,
            mask: None,
            label: None,
        })
        .collect();
    let meta = DatasetMeta {
        width: a.size,
        height: a.size,
        seed: Some(a.seed),
        generator_version: None,
        source: format!("crops of {}", a.input.display()),
    };
    write_dataset(&a.out, &records, meta)?;
    write_echo(&a.out, "crop-patches", &a)
}

fn save_checkpoint(path: &Path, epoch: usize) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.epoch{epoch:05}.mrbm"))
}

/// On divergence the last good parameters are saved next to the output.
fn rescue(err: Error, out: &Path, bg: Option<&BetaRbmParams>, seed: u64, command: &str) -> Failure {
    if let Error::Diverged { epoch, last_good, .. } = &err {
        let path = out.with_extension("last_good.mrbm");
        let model = match (last_good.as_ref(), bg) {
            (Checkpoint::Beta(p), _) => Some(StoredModel::Beta(p.clone())),
            (Checkpoint::Mixed(fg), Some(bg)) => MaskedModel::new(fg.clone(), bg.clone()).ok().map(StoredModel::Masked),
            _ => None,
        };
        if let Some(m) = model {
            let mut md = meta(seed, command);
            md.insert("diverged_at_epoch".into(), epoch.to_string());
            if write_model(&path, &m, md).is_ok() {
                return Failure::Runtime(format!("{err}; last good parameters written to {}", path.display()));
            }
        }
    }
    Failure::from(err)
}

fn train_beta(command: &str, a: BetaTrainArgs, dry_run: bool) -> CliResult {
    let cfg = a.sml.config();
    cfg.validate()?;
    if a.hidden == 0 {
        return Err(Failure::Usage("--hidden must be positive".into()));
    }
    if announce(command, &a, dry_run)? {
        return Ok(());
    }
    let data = load(&a.data)?;
    let trained = pretrain_beta(&data.images, a.hidden, &cfg).map_err(|e| rescue(e, &a.out, None, a.sml.seed, command))?;
    write_model(&a.out, &StoredModel::Beta(trained.params), meta(a.sml.seed, command))?;
    write_json(&a.out.with_extension("log.json"), &trained.log)?;
    write_echo(&a.out, command, &a)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult {
    let s = serde_json::to_string_pretty(value).map_err(|e| Failure::Runtime(e.to_string()))?;
    fs::write(path, s + "\n").map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn train_fg(a: TrainFgArgs, dry_run: bool) -> CliResult {
    let mut cfg = a.sml.config();
    cfg.outlier_p = a.outlier_p;
    cfg.outlier_schedule = match (a.outliers_from_start, a.outlier_from_epoch) {
        (true, _) => OutlierSchedule::FromStart,
        (false, Some(e0)) => OutlierSchedule::FromEpoch(e0),
        (false, None) => OutlierSchedule::Off,
    };
    cfg.validate()?;
    if a.hidden == 0 {
        return Err(Failure::Usage("--hidden must be positive".into()));
    }
    if announce("train-fg", &a, dry_run)? {
        return Ok(());
    }
    let data = load(&a.data)?;
    let bg = load_beta(&a.bg)?;
    check_pixels("background model", bg.n_vis(), &data)?;
    let appearance = match &a.init {
        Some(p) => {
            let app = load_beta(p)?;
            check_pixels("appearance model", app.n_vis(), &data)?;
            if app.n_hid() != a.hidden {
                return Err(Failure::Usage(format!(
                    "appearance model has {} hidden units but --hidden is {}",
                    app.n_hid(),
                    a.hidden
                )));
            }
            Some(app)
        }
        None => None,
    };
    let init = MixedRbmParams::init(data.n_pix(), a.hidden, appearance, &mut stream(a.sml.seed, &[DOMAIN_INIT, 2]))?;
    let every = a.sml.checkpoint_every;
    let seed = a.sml.seed;
    let mut hook = |row: &mrbm::train::FgEpochLog, fg: &MixedRbmParams, _: &mrbm::train::LatentStore| -> mrbm::Result<()> {
        if every > 0 && (row.epoch + 1) % every == 0 {
            let m = MaskedModel::new(fg.clone(), bg.clone())?;
            write_model(&save_checkpoint(&a.out, row.epoch + 1), &StoredModel::Masked(m), meta(seed, "train-fg"))?;
        }
        Ok(())
    };
    let trained = train_foreground_with(&data.images, &bg, init, &cfg, data.masks.as_deref(), &mut hook)
        .map_err(|e| rescue(e, &a.out, Some(&bg), seed, "train-fg"))?;
    let model = MaskedModel::new(trained.params, bg)?;
    write_model(&a.out, &StoredModel::Masked(model), meta(seed, "train-fg"))?;
    write_json(&a.out.with_extension("log.json"), &trained.log)?;
    write_echo(&a.out, "train-fg", &a)
}

fn segment(a: SegmentArgs, dry_run: bool) -> CliResult {
    let (gcfg, out) = a.gibbs.config(a.seed)?;
    if announce("segment", &a, dry_run)? {
        return Ok(());
    }
    let model = load_masked(&a.model)?;
    let data = load(&a.data)?;
    check_pixels("segment", model.n_pix(), &data)?;
    let segs = model.segment_batch(&data.images, &out, &gcfg)?;
    let (w, h) = (data.width, data.height);
    let mut records = Vec::with_capacity(segs.len());
    let prob_dir = a.out.join("probabilities");
    fs::create_dir_all(&prob_dir).map_err(|e| Failure::Runtime(e.to_string()))?;
    for (k, (s, x)) in segs.iter().zip(&data.images).enumerate() {
        write_image(&prob_dir.join(format!("{k:05}.pgm")), &GrayImage::from_probabilities(w, h, &s.mask_probs)?)?;
        records.push(Record {
            image: GrayImage::from_unit(w, h, x)?,
            mask: Some(GrayImage::from_mask(w, h, &s.hard_mask)?),
            label: data.labels[k].clone(),
        });
    }
    let dm = DatasetMeta {
        width: w,
        height: h,
        seed: Some(a.seed),
        generator_version: None,
        source: format!("segmentation of {}", a.data.display()),
    };
    write_dataset(&a.out, &records, dm)?;
    let features: Vec<Vec<f64>> = segs.into_iter().map(|s| s.hf_means).collect();
    write_features(&a.out.join("features.csv"), &features)?;
    write_echo(&a.out, "segment", &a)
}

fn write_features(path: &Path, features: &[Vec<f64>]) -> CliResult {
    let mut w = csv::Writer::from_path(path).map_err(|e| Failure::Runtime(e.to_string()))?;
    for f in features {
        w.write_record(f.iter().map(|v| format!("{v:.9}"))).map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    w.flush().map_err(|e| Failure::Runtime(e.to_string()))
}

fn sample(a: SampleArgs, dry_run: bool) -> CliResult {
    if a.count == 0 || a.steps == 0 {
        return Err(Failure::Usage("--count and --steps must be positive".into()));
    }
    if announce("sample", &a, dry_run)? {
        return Ok(());
    }
    let model = load_masked(&a.model)?;
    let n = model.n_pix();
    let side = (n as f64).sqrt().round() as usize;
    if side * side != n {
        return Err(Failure::Usage(format!("sample grids need square images, model has {n} pixels")));
    }
    let mut rows: [Vec<GrayImage>; 3] = Default::default();
    for k in 0..a.count {
        let s = sample_foreground(&model.fg, a.steps, &mut stream(a.seed, &[DOMAIN_SAMPLE, k as u64]))?;
        rows[0].push(GrayImage::from_unit(side, side, &s.appearance_means)?);
        rows[1].push(GrayImage::from_probabilities(side, side, &s.mask_means)?);
        // pixels outside the sampled mask are shown as mid-gray
        let comp: Vec<f64> = s.composite.iter().map(|c| c.unwrap_or(0.5)).collect();
        rows[2].push(GrayImage::from_unit(side, side, &comp)?);
    }
    let all: Vec<GrayImage> = rows.into_iter().flatten().collect();
    write_image(&a.out, &tile(&all, a.count, 128)?)?;
    write_echo(&a.out, "sample", &a)
}

fn pred_and_truth(pred: &Path, truth: &Path) -> CliResult<(Vec<Vec<bool>>, Vec<Vec<bool>>)> {
    let p = load(pred)?;
    let t = load(truth)?;
    let pm = p
        .masks
        .ok_or_else(|| Failure::Usage(format!("{} has no mask column", pred.display())))?;
    let tm = t
        .masks
        .ok_or_else(|| Failure::Usage(format!("{} has no ground-truth masks", truth.display())))?;
    if pm.len() != tm.len() || p.width != t.width || p.height != t.height {
        return Err(Failure::Usage(format!(
            "prediction set is {} images of {}x{}, ground truth is {} images of {}x{}",
            pm.len(),
            p.width,
            p.height,
            tm.len(),
            t.width,
            t.height
        )));
    }
    Ok((pm, tm))
}

fn finish_reports<T: Serialize>(out: &Path, command: &str, args: &T, reports: &[EvalReport]) -> CliResult {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    write_reports_csv(out, reports)?;
    write_reports_text(&out.with_extension("txt"), reports)?;
    for r in reports {
        println!("{r}");
    }
    write_echo(out, command, args)
}

fn eval_seg(a: EvalSegArgs, dry_run: bool) -> CliResult {
    if announce("eval-seg", &a, dry_run)? {
        return Ok(());
    }
    let (pred, truth) = pred_and_truth(&a.pred, &a.truth)?;
    let prov = Provenance {
        config_hash: config_hash("eval-seg", &a)?,
        model_hash: String::new(),
    };
    let report = seg_accuracy_batch(&pred, &truth)?.with_provenance(prov);
    finish_reports(&a.out, "eval-seg", &a, &[report])
}

fn eval_control(a: EvalControlArgs, dry_run: bool) -> CliResult {
    if announce("eval-control", &a, dry_run)? {
        return Ok(());
    }
    let (pred, truth) = pred_and_truth(&a.pred, &a.truth)?;
    let prov = Provenance {
        config_hash: config_hash("eval-control", &a)?,
        model_hash: String::new(),
    };
    let r = random_mask_control(&pred, &truth, a.seed)?;
    println!("accuracy drop under random reassignment: {:.4}", r.delta);
    let reports = [r.inferred.with_provenance(prov.clone()), r.permuted.with_provenance(prov)];
    finish_reports(&a.out, "eval-control", &a, &reports)
}

fn binary_labels(data: &Dataset, classes: &mut Vec<String>) -> CliResult<Vec<bool>> {
    let labels: Vec<String> = data
        .labels
        .iter()
        .enumerate()
        .map(|(k, l)| l.clone().ok_or_else(|| Failure::Usage(format!("image {k} has no label"))))
        .collect::<CliResult<_>>()?;
    if classes.is_empty() {
        let mut distinct = labels.clone();
        distinct.sort();
        distinct.dedup();
        if distinct.len() != 2 {
            return Err(Failure::Usage(format!("the probe needs exactly two classes, found {distinct:?}")));
        }
        *classes = distinct;
    }
    labels
        .iter()
        .map(|l| match classes.iter().position(|c| c == l) {
            Some(i) => Ok(i == 1),
            None => Err(Failure::Usage(format!("label {l:?} is not one of {classes:?}"))),
        })
        .collect()
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn eval_probe(a: EvalProbeArgs, dry_run: bool) -> CliResult {
    let (gcfg, out) = a.gibbs.config(a.seed)?;
    let base_cfg = ProbeConfig {
        l2_lambda: a.lambda,
        iterations: a.iterations,
        per_class: a.per_class,
        seed: a.seed,
    };
    base_cfg.validate()?;
    if a.repeats == 0 {
        return Err(Failure::Usage("--repeats must be positive".into()));
    }
    if announce("eval-probe", &a, dry_run)? {
        return Ok(());
    }
    let model = load_masked(&a.model)?;
    let train = load(&a.train)?;
    let test = load(&a.test)?;
    check_pixels("train set", model.n_pix(), &train)?;
    check_pixels("test set", model.n_pix(), &test)?;
    let mut classes = Vec::new();
    let ytr = binary_labels(&train, &mut classes)?;
    let yte = binary_labels(&test, &mut classes)?;

    let mut feature_sets = vec![(
        "probe_accuracy_fgbg",
        fgbg_features(&model, &train.images, &out, &gcfg)?,
        fgbg_features(&model, &test.images, &out, &GibbsConfig { seed: a.seed ^ 1, ..gcfg.clone() })?,
        file_hash(&a.model)?,
    )];
    if let Some(b) = &a.baseline {
        let rbm = load_beta(b)?;
        check_pixels("baseline", rbm.n_vis(), &train)?;
        feature_sets.push((
            "probe_accuracy_baseline",
            baseline_features(&rbm, &train.images)?,
            baseline_features(&rbm, &test.images)?,
            file_hash(b)?,
        ));
    }
    let chash = config_hash("eval-probe", &a)?;
    let mut reports = Vec::new();
    for (name, ftr, fte, mhash) in feature_sets {
        let mut accs = Vec::new();
        for r in 0..a.repeats {
            let cfg = ProbeConfig {
                seed: a.seed.wrapping_add(r as u64),
                ..base_cfg.clone()
            };
            accs.push(probe_experiment((&ftr, &ytr), (&fte, &yte), &cfg)?.value);
        }
        let report = EvalReport::proportion(name, median(accs), yte.len())?.with_provenance(Provenance {
            config_hash: chash.clone(),
            model_hash: mhash,
        });
        reports.push(report);
    }
    finish_reports(&a.out, "eval-probe", &a, &reports)
}

fn eval_match(a: EvalMatchArgs, dry_run: bool) -> CliResult {
    let (gcfg, out) = a.gibbs.config(a.seed)?;
    if announce("eval-match", &a, dry_run)? {
        return Ok(());
    }
    let model = load_masked(&a.model)?;
    let da = load(&a.a)?;
    let db = load(&a.b)?;
    check_pixels("set a", model.n_pix(), &da)?;
    check_pixels("set b", model.n_pix(), &db)?;
    let chash = config_hash("eval-match", &a)?;
    let fa = fgbg_features(&model, &da.images, &out, &gcfg)?;
    let fb = fgbg_features(&model, &db.images, &out, &GibbsConfig { seed: a.seed ^ 1, ..gcfg.clone() })?;
    let mut r = match_rate(&fa, &fb)?;
    r.metric = "match_rate_fgbg".into();
    let mut reports = vec![r.with_provenance(Provenance {
        config_hash: chash.clone(),
        model_hash: file_hash(&a.model)?,
    })];
    if let Some(b) = &a.baseline {
        let rbm = load_beta(b)?;
        check_pixels("baseline", rbm.n_vis(), &da)?;
        let mut r = match_rate(&baseline_features(&rbm, &da.images)?, &baseline_features(&rbm, &db.images)?)?;
        r.metric = "match_rate_baseline".into();
        reports.push(r.with_provenance(Provenance {
            config_hash: chash,
            model_hash: file_hash(b)?,
        }));
    }
    finish_reports(&a.out, "eval-match", &a, &reports)
}

fn stats(values: &[f32]) -> (f64, f64, f64, f64) {
    let n = values.len().max(1) as f64;
    let mean = values.iter().map(|&v| v as f64).sum::<f64>() / n;
    let sd = (values.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n).sqrt();
    let min = values.iter().fold(f64::INFINITY, |m, &v| m.min(v as f64));
    let max = values.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v as f64));
    (mean, sd, min, max)
}

fn inspect(a: InspectArgs) -> CliResult {
    require(&a.model)?;
    let c = read_container(&a.model)?;
    println!("file: {}", a.model.display());
    println!("sha256: {}", file_hash(&a.model)?);
    for (k, v) in &c.meta {
        println!("{k}: {v}");
    }
    println!("{:<24} {:>12} {:>12} {:>12} {:>12} {:>12}", "tensor", "shape", "mean", "std", "min", "max");
    for t in &c.tensors {
        let (mean, sd, min, max) = stats(&t.data);
        let shape = t.shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x");
        println!("{:<24} {:>12} {:>12.5} {:>12.5} {:>12.5} {:>12.5}", t.name, shape, mean, sd, min, max);
    }
    // fail if the tensors do not form a valid model
    mrbm::data::container::StoredModel::from_container(&c)?;
    Ok(())
}
