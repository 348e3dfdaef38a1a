//! Command-line surface. One subcommand per pipeline stage; every run
//! writes its outputs and a reproducibility manifest under `--out` and
//! touches nothing else on disk.
//!
//! Seeds resolve in priority order: `--seed` flag, then the
//! `SPFORM_SEED` environment variable, then the config file, then 0.

pub mod manifest;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::data::chip::{ImageChip, BAND_NAMES};
use crate::data::sample::SampleRecord;
use crate::data::tiles::{SplitAssignment, TileGrid};
use crate::data::{read_samples, write_samples, SampleSet, SynthConfig};
use crate::error::{Error, Result};
use crate::geoenc::{self, GeoEncoderConfig};
use crate::mapper::{self, AggregateStat, MapperOptions};
use crate::model::{self, ModelConfig};
use crate::numerics::params::ParamSet;
use crate::raster::{Bbox, RasterGrid, RasterStack};
use crate::train::{self, TrainConfig};
use crate::uncert::{self, UncertaintyConfig};

use manifest::RunManifest;

pub const SEED_ENV_VAR: &str = "SPFORM_SEED";

#[derive(Parser)]
#[command(
    name = "spatioformer",
    version,
    about = "Geolocation-aware richness regression: data synthesis, training, evaluation, and raster mapping"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic sample set (and optionally a scene) under --out
    Synth(SynthArgs),
    /// Assign geographic tiles to train/val/test
    Split(SplitArgs),
    /// Train a model and keep the best-on-validation checkpoint
    Train(TrainArgs),
    /// Evaluate a checkpoint with the seven-metric suite
    Eval(EvalArgs),
    /// Train and evaluate once per input chip size
    Ablate(AblateArgs),
    /// Slide a trained model over a scene to produce a richness map
    PredictMap(PredictMapArgs),
    /// Reduce yearly maps to a per-cell mean or std map
    Aggregate(AggregateArgs),
    /// Inspect the geolocation encoding at a point or as a layer raster
    EncodeGeo(EncodeGeoArgs),
    /// Per-sample Monte Carlo dropout uncertainty
    Uncertainty(UncertaintyArgs),
}

/// Model and optimizer halves of a training config file; missing halves
/// fall back to defaults.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct TrainFileConfig {
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub optim: TrainConfig,
}

#[derive(Args)]
struct SynthArgs {
    /// Generator settings as JSON; defaults describe a four-region
    /// continent-sized benchmark
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    count: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write a six-band uniform-noise scene for mapping runs
    #[arg(long)]
    scene: bool,
    /// Scene cell edge in degrees
    #[arg(long, default_value_t = 0.5)]
    scene_cell_size: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    samples: PathBuf,
    /// Train,val,test fractions summing to 1
    #[arg(long, default_value = "0.8,0.1,0.1")]
    fractions: String,
    #[arg(long, default_value_t = 1.0)]
    tile_width: f64,
    #[arg(long, default_value_t = 0.9)]
    tile_height: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Training config JSON with "model" and "optim" sections
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    samples: PathBuf,
    /// Directory the sample chip paths are relative to
    #[arg(long)]
    data_dir: PathBuf,
    #[arg(long)]
    split: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum SubsetArg {
    Train,
    Val,
    Test,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    samples: PathBuf,
    #[arg(long)]
    data_dir: PathBuf,
    #[arg(long)]
    split: PathBuf,
    #[arg(long, value_enum, default_value_t = SubsetArg::Test)]
    subset: SubsetArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    samples: PathBuf,
    #[arg(long)]
    data_dir: PathBuf,
    #[arg(long)]
    split: PathBuf,
    /// Comma-separated odd chip sizes
    #[arg(long, default_value = "1,3,5,7,9")]
    sizes: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictMapArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory holding one {band}.rast file per chip band
    #[arg(long)]
    scene: PathBuf,
    /// Tag stamped into the output raster, conventionally the year
    #[arg(long)]
    year: String,
    /// Window size override; must match the trained head
    #[arg(long)]
    chip_size: Option<usize>,
    /// Also write a Monte Carlo dropout epsilon map
    #[arg(long)]
    uncertainty: bool,
    #[arg(long, default_value_t = 100)]
    mc_n: usize,
    #[arg(long, default_value_t = 0.5)]
    mc_rate: f64,
    #[arg(long, default_value_t = 64)]
    tile_size: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AggregateArgs {
    #[arg(long, value_enum)]
    stat: AggregateStat,
    /// Input rasters sharing one geometry
    #[arg(long, num_args = 1.., required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EncodeGeoArgs {
    /// Encoder settings as JSON; defaults to the 16-layer configuration
    #[arg(long)]
    config: Option<PathBuf>,
    /// Encode a single point (requires --lat)
    #[arg(long, requires = "lat", allow_negative_numbers = true)]
    lon: Option<f64>,
    #[arg(long, requires = "lon", allow_negative_numbers = true)]
    lat: Option<f64>,
    /// Render one encoding layer over --bbox instead
    #[arg(long, requires = "bbox")]
    layer: Option<usize>,
    /// west,south,east,north in degrees
    #[arg(long)]
    bbox: Option<String>,
    #[arg(long, default_value_t = 0.25)]
    cell_size: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct UncertaintyArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    samples: PathBuf,
    #[arg(long)]
    data_dir: PathBuf,
    #[arg(long)]
    split: PathBuf,
    #[arg(long, value_enum, default_value_t = SubsetArg::Test)]
    subset: SubsetArg,
    #[arg(long, default_value_t = 100)]
    mc_n: usize,
    #[arg(long, default_value_t = 0.5)]
    mc_rate: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

/// Parse and run. Returns the process exit code: 0 success, 2 config or
/// usage error, 3 data error, 4 numeric failure.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = err.print();
            return code;
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .try_init();

    let result = match cli.command {
        Command::Synth(args) => run_synth(args),
        Command::Split(args) => run_split(args),
        Command::Train(args) => run_train(args),
        Command::Eval(args) => run_eval(args),
        Command::Ablate(args) => run_ablate(args),
        Command::PredictMap(args) => run_predict_map(args),
        Command::Aggregate(args) => run_aggregate(args),
        Command::EncodeGeo(args) => run_encode_geo(args),
        Command::Uncertainty(args) => run_uncertainty(args),
    };
    match result {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV_VAR) {
        Ok(text) => text
            .parse::<u64>()
            .map(Some)
            .map_err(|_| Error::Config(format!("{SEED_ENV_VAR}=\"{text}\" is not a valid seed"))),
        Err(_) => Ok(None),
    }
}

fn resolve_seed(flag: Option<u64>, config_seed: Option<u64>) -> Result<u64> {
    Ok(flag
        .or(env_seed()?)
        .or(config_seed)
        .unwrap_or(0))
}

fn load_json_config<C: for<'de> Deserialize<'de>>(path: &Path) -> Result<C> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Config(format!("cannot read config {}: {e}", path.display()))
    })?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("invalid config {}: {e}", path.display())))
}

fn load_optional_config<C>(path: &Option<PathBuf>) -> Result<C>
where
    C: for<'de> Deserialize<'de> + Default,
{
    match path {
        Some(p) => load_json_config(p),
        None => Ok(C::default()),
    }
}

fn ensure_out_dir(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    Ok(())
}

fn load_set(data_dir: &Path, records: &[&SampleRecord]) -> Result<SampleSet> {
    records
        .iter()
        .map(|rec| {
            let chip = ImageChip::load(&data_dir.join(&rec.chip_path))?;
            Ok(((*rec).clone(), chip))
        })
        .collect()
}

fn parse_fractions(text: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("cannot parse fractions \"{text}\"")))?;
    if parts.len() != 3 {
        return Err(Error::Config(format!(
            "expected three comma-separated fractions, got \"{text}\""
        )));
    }
    Ok((parts[0], parts[1], parts[2]))
}

fn parse_bbox(text: &str) -> Result<Bbox> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("cannot parse bbox \"{text}\"")))?;
    if parts.len() != 4 {
        return Err(Error::Config(format!(
            "expected west,south,east,north, got \"{text}\""
        )));
    }
    Bbox::new(parts[0], parts[1], parts[2], parts[3])
}

fn parse_sizes(text: &str) -> Result<Vec<usize>> {
    let sizes: Vec<usize> = text
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("cannot parse sizes \"{text}\"")))?;
    if sizes.is_empty() {
        return Err(Error::Config("no chip sizes given".into()));
    }
    Ok(sizes)
}

fn load_scene(dir: &Path) -> Result<RasterStack> {
    let grids = BAND_NAMES
        .iter()
        .map(|band| RasterGrid::load(&dir.join(format!("{band}.rast"))))
        .collect::<Result<Vec<_>>>()?;
    RasterStack::new(grids)
}

fn select_subset<'a>(
    assignment: &SplitAssignment,
    samples: &'a [SampleRecord],
    subset: SubsetArg,
) -> Result<Vec<&'a SampleRecord>> {
    let (train, val, test) = assignment.partition(samples)?;
    Ok(match subset {
        SubsetArg::Train => train,
        SubsetArg::Val => val,
        SubsetArg::Test => test,
    })
}

fn run_synth(args: SynthArgs) -> Result<()> {
    let cfg: SynthConfig = load_optional_config(&args.config)?;
    let seed = resolve_seed(args.seed, None)?;
    ensure_out_dir(&args.out)?;

    let samples = crate::data::synth_generate(&cfg, args.count, seed)?;
    let records: Vec<SampleRecord> = samples.iter().map(|(rec, _)| rec.clone()).collect();
    write_samples(&args.out.join("samples.csv"), &records)?;
    std::fs::create_dir_all(args.out.join("chips"))?;
    for (rec, chip) in &samples {
        chip.save(&args.out.join(&rec.chip_path))?;
    }
    println!(
        "wrote {} samples and chips to {}",
        samples.len(),
        args.out.display()
    );

    if args.scene {
        let stack = crate::data::synth_scene(cfg.bbox, args.scene_cell_size, seed, "scene")?;
        let scene_dir = args.out.join("scene");
        std::fs::create_dir_all(&scene_dir)?;
        for grid in stack.grids() {
            grid.save(&scene_dir.join(format!("{}.rast", grid.band)))?;
        }
        println!(
            "wrote a {}x{} six-band scene to {}",
            stack.width(),
            stack.height(),
            scene_dir.display()
        );
    }

    let mut man = RunManifest::new("synth", seed, &serde_json::to_string(&cfg)?);
    if let Some(p) = &args.config {
        man.add_input(p)?;
    }
    man.save(&args.out)
}

fn run_split(args: SplitArgs) -> Result<()> {
    let seed = resolve_seed(args.seed, None)?;
    let fractions = parse_fractions(&args.fractions)?;
    let grid = TileGrid {
        tile_width: args.tile_width,
        tile_height: args.tile_height,
        ..TileGrid::default()
    };
    ensure_out_dir(&args.out)?;

    let samples = read_samples(&args.samples)?;
    let assignment = crate::data::split_by_tiles(&samples, grid, fractions, seed)?;
    assignment.save(&args.out.join("split.json"))?;
    let (tr, va, te) = assignment.tile_counts();
    println!("assigned {tr} train / {va} val / {te} test tiles");

    let mut man = RunManifest::new("split", seed, &serde_json::to_string(&assignment.grid)?);
    man.add_input(&args.samples)?;
    man.save(&args.out)
}

fn run_train(args: TrainArgs) -> Result<()> {
    let mut cfg: TrainFileConfig = load_optional_config(&args.config)?;
    cfg.optim.seed = resolve_seed(args.seed, Some(cfg.optim.seed))?;
    ensure_out_dir(&args.out)?;

    let samples = read_samples(&args.samples)?;
    let assignment = SplitAssignment::load(&args.split)?;
    let (train_recs, val_recs, _) = assignment.partition(&samples)?;
    let train_set = load_set(&args.data_dir, &train_recs)?;
    let val_set = load_set(&args.data_dir, &val_recs)?;
    println!(
        "training a {} on {} samples, validating on {}",
        cfg.optim.model,
        train_set.len(),
        val_set.len()
    );

    let params = model::init(cfg.optim.model, &cfg.model, cfg.optim.seed)?;
    let result = train::train(
        params,
        &cfg.model,
        &cfg.optim,
        &assignment.grid,
        &train_set,
        &val_set,
    )?;

    result.params.save(&args.out.join("checkpoint.spform"))?;
    train::write_epoch_log(&args.out.join("epochs.csv"), &result.log)?;
    let mut man = RunManifest::new("train", cfg.optim.seed, &serde_json::to_string(&cfg)?);
    if let Some(p) = &args.config {
        man.add_input(p)?;
    }
    man.add_input(&args.samples)?;
    man.add_input(&args.split)?;
    man.save(&args.out)?;

    if result.diverged {
        return Err(Error::NonFinite(
            "training diverged; the checkpoint holds the last good parameters".into(),
        ));
    }
    println!(
        "best validation mse {:.4} at epoch {}{}",
        result.best_val_mse,
        result.best_epoch,
        if result.stopped_early { " (stopped early)" } else { "" }
    );
    Ok(())
}

fn run_eval(args: EvalArgs) -> Result<()> {
    let cfg: TrainFileConfig = load_optional_config(&args.config)?;
    ensure_out_dir(&args.out)?;

    let samples = read_samples(&args.samples)?;
    let assignment = SplitAssignment::load(&args.split)?;
    let records = select_subset(&assignment, &samples, args.subset)?;
    let set = load_set(&args.data_dir, &records)?;
    let params = ParamSet::load(&args.checkpoint)?;

    let report = train::evaluate(cfg.optim.model, &params, &cfg.model, &set)?;
    std::fs::write(
        args.out.join("metrics.csv"),
        format!("{}\n{}\n", train::MetricsReport::CSV_HEADER, report.csv_row()),
    )?;
    std::fs::write(args.out.join("metrics.txt"), format!("{report}\n"))?;
    println!("{:?} subset of {} samples:\n{report}", args.subset, report.n);

    let mut man = RunManifest::new("eval", cfg.optim.seed, &serde_json::to_string(&cfg)?);
    if let Some(p) = &args.config {
        man.add_input(p)?;
    }
    man.add_input(&args.checkpoint)?;
    man.add_input(&args.samples)?;
    man.add_input(&args.split)?;
    man.save(&args.out)
}

fn run_ablate(args: AblateArgs) -> Result<()> {
    let mut cfg: TrainFileConfig = load_optional_config(&args.config)?;
    cfg.optim.seed = resolve_seed(args.seed, Some(cfg.optim.seed))?;
    let sizes = parse_sizes(&args.sizes)?;
    ensure_out_dir(&args.out)?;

    let samples = read_samples(&args.samples)?;
    let assignment = SplitAssignment::load(&args.split)?;
    let (train_recs, val_recs, test_recs) = assignment.partition(&samples)?;
    let train_set = load_set(&args.data_dir, &train_recs)?;
    let val_set = load_set(&args.data_dir, &val_recs)?;
    let test_set = load_set(&args.data_dir, &test_recs)?;

    let rows = train::ablate_chip_size(
        &cfg.model,
        &cfg.optim,
        &sizes,
        &assignment.grid,
        &train_set,
        &val_set,
        &test_set,
    )?;
    train::write_ablation_csv(&args.out.join("ablation.csv"), &rows)?;
    for (size, report) in &rows {
        println!("{size}x{size}: mse {:.4}, r {:.4}", report.mse, report.r);
    }

    let mut man = RunManifest::new("ablate", cfg.optim.seed, &serde_json::to_string(&cfg)?);
    if let Some(p) = &args.config {
        man.add_input(p)?;
    }
    man.add_input(&args.samples)?;
    man.add_input(&args.split)?;
    man.save(&args.out)
}

fn run_predict_map(args: PredictMapArgs) -> Result<()> {
    let mut cfg: TrainFileConfig = load_optional_config(&args.config)?;
    if let Some(size) = args.chip_size {
        cfg.model.chip_size = size;
    }
    let seed = resolve_seed(args.seed, Some(cfg.optim.seed))?;
    ensure_out_dir(&args.out)?;

    let params = ParamSet::load(&args.checkpoint)?;
    let scene = load_scene(&args.scene)?;
    let opts = MapperOptions {
        tile_size: args.tile_size,
        ..MapperOptions::default()
    };

    let map = mapper::predict_map(cfg.optim.model, &params, &cfg.model, &scene, &opts, &args.year)?;
    map.save(&args.out.join(format!("richness_{}.rast", args.year)))?;
    map.write_png(&args.out.join(format!("richness_{}.png", args.year)), false)?;
    println!(
        "mapped {}x{} cells for {}",
        map.width, map.height, args.year
    );

    if args.uncertainty {
        let ucfg = UncertaintyConfig {
            n: args.mc_n,
            mc_dropout_rate: args.mc_rate,
            seed,
        };
        let eps = mapper::uncertainty_map(
            cfg.optim.model,
            &params,
            &cfg.model,
            &scene,
            &ucfg,
            &opts,
            &args.year,
        )?;
        eps.save(&args.out.join(format!("epsilon_{}.rast", args.year)))?;
        eps.write_png(&args.out.join(format!("epsilon_{}.png", args.year)), true)?;
    }

    let mut man = RunManifest::new("predict-map", seed, &serde_json::to_string(&cfg)?);
    if let Some(p) = &args.config {
        man.add_input(p)?;
    }
    man.add_input(&args.checkpoint)?;
    for band in BAND_NAMES {
        man.add_input(&args.scene.join(format!("{band}.rast")))?;
    }
    man.save(&args.out)
}

fn run_aggregate(args: AggregateArgs) -> Result<()> {
    ensure_out_dir(&args.out)?;
    let grids = args
        .inputs
        .iter()
        .map(|p| RasterGrid::load(p))
        .collect::<Result<Vec<_>>>()?;
    let stack = RasterStack::new(grids)?;
    let result = mapper::aggregate(&stack, args.stat)?;

    let name = match args.stat {
        AggregateStat::Mean => "aggregate_mean",
        AggregateStat::Std => "aggregate_std",
    };
    result.save(&args.out.join(format!("{name}.rast")))?;
    result.write_png(&args.out.join(format!("{name}.png")), false)?;
    println!("aggregated {} rasters into {name}", args.inputs.len());

    let mut man = RunManifest::new("aggregate", 0, &format!("{{\"stat\":\"{:?}\"}}", args.stat));
    for p in &args.inputs {
        man.add_input(p)?;
    }
    man.save(&args.out)
}

fn run_encode_geo(args: EncodeGeoArgs) -> Result<()> {
    let cfg: GeoEncoderConfig = load_optional_config(&args.config)?;
    ensure_out_dir(&args.out)?;
    let mut did_something = false;

    if let (Some(lon), Some(lat)) = (args.lon, args.lat) {
        let token = geoenc::encode(&cfg, lon, lat)?;
        let json = serde_json::json!({ "lon": lon, "lat": lat, "token": token.values });
        std::fs::write(
            args.out.join("token.json"),
            serde_json::to_string_pretty(&json)? + "\n",
        )?;
        println!("token at ({lon}, {lat}): {:?}", token.values);
        did_something = true;
    }

    if let (Some(layer), Some(bbox_text)) = (args.layer, &args.bbox) {
        let bbox = parse_bbox(bbox_text)?;
        let grid = geoenc::render_layer(&cfg, layer, bbox, args.cell_size)?;
        grid.save(&args.out.join(format!("g{layer}.rast")))?;
        grid.write_png(&args.out.join(format!("g{layer}.png")), false)?;
        println!("rendered layer {layer} over {}x{} cells", grid.width, grid.height);
        did_something = true;
    }

    if !did_something {
        return Err(Error::Config(
            "nothing to do: pass --lon/--lat for a point or --layer/--bbox for a raster".into(),
        ));
    }
    let mut man = RunManifest::new("encode-geo", 0, &serde_json::to_string(&cfg)?);
    if let Some(p) = &args.config {
        man.add_input(p)?;
    }
    man.save(&args.out)
}

fn run_uncertainty(args: UncertaintyArgs) -> Result<()> {
    let cfg: TrainFileConfig = load_optional_config(&args.config)?;
    let seed = resolve_seed(args.seed, Some(cfg.optim.seed))?;
    ensure_out_dir(&args.out)?;

    let samples = read_samples(&args.samples)?;
    let assignment = SplitAssignment::load(&args.split)?;
    let records = select_subset(&assignment, &samples, args.subset)?;
    let set = load_set(&args.data_dir, &records)?;
    let params = ParamSet::load(&args.checkpoint)?;
    let ucfg = UncertaintyConfig {
        n: args.mc_n,
        mc_dropout_rate: args.mc_rate,
        seed,
    };

    let mut csv = String::from("id,deterministic,mc_mean,epsilon\n");
    for (rec, chip) in &set {
        let chip = chip.center_crop(cfg.model.chip_size)?;
        let report =
            uncert::mc_uncertainty(cfg.optim.model, &params, &cfg.model, &chip, &ucfg)?;
        csv.push_str(&format!(
            "{},{},{},{}\n",
            rec.id,
            report.deterministic,
            report.mean,
            report.epsilon.unwrap_or(f64::NAN)
        ));
    }
    std::fs::write(args.out.join("uncertainty.csv"), csv)?;
    println!("wrote uncertainty for {} samples", set.len());

    let mut man = RunManifest::new("uncertainty", seed, &serde_json::to_string(&cfg)?);
    if let Some(p) = &args.config {
        man.add_input(p)?;
    }
    man.add_input(&args.checkpoint)?;
    man.add_input(&args.samples)?;
    man.add_input(&args.split)?;
    man.save(&args.out)
}
