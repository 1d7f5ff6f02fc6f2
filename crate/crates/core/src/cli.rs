//! `evkit` command-line frontend.
//!
//! Exit codes: 0 success, 1 usage error (bad flags, missing input files,
//! unsupported extensions), 2 data error (malformed input, invalid values).
//! Diagnostics go to stderr; data goes to files or stdout.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

use crate::error::Error;
use crate::event_codec::{decode_csv, decode_evs1_with_warnings, encode_csv, encode_evs1, CsvOptions, EVS1_MAGIC};
use crate::event_filters::{
    anti_flicker, erc_decimate, refractory_filter, stc_filter, ErcConfig, FlickerBand, StcConfig,
};
use crate::event_model::{merge_streams, EventStream, Polarity, SensorGeometry};
use crate::event_synth::{
    synth_flicker, synth_from_frames, synth_moving_pattern, FlickerParams, Pattern, Rect, SensorModel,
};
use crate::freqmap::{
    freq_histogram, recording_freq_map, render_freq_map, Colormap, Estimator, FreqMapConfig, FrequencyMap, Histogram,
    Transition, NYQUIST_HZ,
};
use crate::image_io::{read_frame_dir, write_frame_dir, write_rgb};
use crate::magnify::{
    band_from_histogram, magnify_bank, magnify_sequence, measure_displacement, sinusoid_amplitude, FilterKind,
    MagnifyParams, TemporalFilter, DEFAULT_BUTTERWORTH_ORDER, DEFAULT_DENOISE_SIGMA_PX, DEFAULT_FIR_TAPS,
    DEFAULT_ORIENTATIONS,
};
use crate::steerable::OctaveFraction;

#[derive(Parser, Debug)]
#[command(
    name = "evkit",
    version,
    about = "Event-camera frequency maps and phase-based motion magnification"
)]
struct Cli {
    /// Worker threads; outputs do not depend on this
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print geometry, event count, duration and polarity counts
    Info(InfoArgs),
    /// Convert between .csv and .evs1 (format chosen by extension)
    Convert(ConvertArgs),
    /// Generate synthetic events or frames
    Synth(SynthArgs),
    /// Apply event filters in command-line order
    Filter(FilterArgs),
    /// Per-pixel frequency map from hypertransitions
    Freqmap(FreqmapArgs),
    /// Render a frequency-map CSV to PPM/PNG
    Render(RenderArgs),
    /// Histogram of a frequency-map CSV
    Histogram(HistogramArgs),
    /// Phase-based motion magnification of a PGM frame directory
    Magnify(MagnifyArgs),
    /// Sub-pixel displacement of every frame against a reference frame
    Measure(MeasureArgs),
}

#[derive(Args, Debug)]
struct StreamInput {
    /// Event file (.csv or .evs1)
    input: PathBuf,
    /// Sensor geometry WxH for CSV input (inferred when absent)
    #[arg(long, value_parser = parse_geometry)]
    geometry: Option<SensorGeometry>,
    /// Sort out-of-order CSV input instead of rejecting it
    #[arg(long)]
    sort: bool,
}

#[derive(Args, Debug)]
struct InfoArgs {
    #[command(flatten)]
    src: StreamInput,
}

#[derive(Args, Debug)]
struct ConvertArgs {
    #[command(flatten)]
    src: StreamInput,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SynthKind {
    Flicker,
    FromFrames,
    MovingPattern,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PatternKind {
    Blob,
    Grating,
}

#[derive(Args, Debug)]
struct SynthArgs {
    kind: SynthKind,
    /// Frame directory (from-frames only)
    input: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Sensor geometry WxH (flicker)
    #[arg(long, value_parser = parse_geometry, default_value = "1280x720")]
    geometry: SensorGeometry,
    /// Stimulated rectangle x,y,w,h; repeat for several regions (flicker)
    #[arg(long, value_parser = parse_rect)]
    region: Vec<Rect>,
    /// Flicker frequency in Hz; one per region, or one for all
    #[arg(long)]
    freq: Vec<f64>,
    #[arg(long, default_value_t = 1000.0)]
    duration_ms: f64,
    #[arg(long, default_value_t = 0.0)]
    phase_deg: f64,
    /// Uniform timestamp jitter ± this many microseconds
    #[arg(long, default_value_t = 0)]
    jitter_us: u64,
    #[arg(long, default_value_t = 0.2)]
    threshold_on: f64,
    #[arg(long, default_value_t = 0.2)]
    threshold_off: f64,
    /// Sensor dead time
    #[arg(long, default_value_t = 0)]
    refractory_us: u64,
    #[arg(long)]
    fps: Option<f64>,
    #[arg(long, default_value_t = 96)]
    width: usize,
    #[arg(long, default_value_t = 96)]
    height: usize,
    #[arg(long, default_value_t = 90)]
    frames: usize,
    #[arg(long, value_enum, default_value = "blob")]
    pattern: PatternKind,
    #[arg(long, default_value_t = 4.0)]
    blob_sigma: f64,
    #[arg(long, default_value_t = 16.0)]
    grating_period: f64,
    #[arg(long, default_value_t = 0.2)]
    amplitude_px: f64,
    #[arg(long, default_value_t = 5.0)]
    motion_hz: f64,
}

#[derive(Args, Debug)]
struct FilterArgs {
    #[command(flatten)]
    src: StreamInput,
    #[arg(long)]
    out: PathBuf,
    /// STC step with this burst window
    #[arg(long)]
    stc_window_us: Vec<u64>,
    /// STC keeps trail events after the second
    #[arg(long)]
    keep_trail: bool,
    /// Refractory step with this dead time
    #[arg(long)]
    refractory_us: Vec<u64>,
    /// ERC step capping the rate at this many thousand events per second
    #[arg(long)]
    erc_keps: Vec<u64>,
    #[arg(long, default_value_t = 1000)]
    erc_window_us: u64,
    /// Anti-flicker reject band lo:hi Hz; all bands form one step
    #[arg(long, value_parser = parse_band)]
    af_band: Vec<(f64, f64)>,
    /// Anti-flicker estimation window
    #[arg(long, default_value_t = 50.0)]
    window_ms: f64,
    /// key=value filter config file, expanded in place
    #[arg(long)]
    config: Vec<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TransitionArg {
    OnOff,
    OffOn,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Mean,
    Median,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PresetArg {
    Vibration,
    Structures,
    Flicker,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ColormapArg {
    Turbo,
    Hsv,
}

impl From<ColormapArg> for Colormap {
    fn from(c: ColormapArg) -> Self {
        match c {
            ColormapArg::Turbo => Colormap::Turbo,
            ColormapArg::Hsv => Colormap::Hsv,
        }
    }
}

#[derive(Args, Debug)]
struct FreqmapArgs {
    #[command(flatten)]
    src: StreamInput,
    #[arg(long, value_enum)]
    preset: Option<PresetArg>,
    /// Batch window; overrides the preset
    #[arg(long)]
    window_ms: Option<f64>,
    #[arg(long, value_enum, default_value = "on-off")]
    transition: TransitionArg,
    #[arg(long, value_enum, default_value = "mean")]
    estimator: EstimatorArg,
    #[arg(long, default_value_t = 2)]
    min_intervals: usize,
    #[arg(long, default_value_t = 1.0)]
    fmin: f64,
    #[arg(long, default_value_t = NYQUIST_HZ)]
    fmax: f64,
    /// Colour scale lo:hi Hz for the image (default: estimated range)
    #[arg(long, value_parser = parse_band)]
    scale: Option<(f64, f64)>,
    #[arg(long, value_enum, default_value = "turbo")]
    colormap: ColormapArg,
    /// Rendered map (.png, otherwise PPM)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Map as x,y,freq_hz rows
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RenderArgs {
    /// Frequency-map CSV
    input: PathBuf,
    #[arg(long, value_parser = parse_geometry)]
    geometry: Option<SensorGeometry>,
    /// Colour scale lo:hi Hz (default: estimated range)
    #[arg(long, value_parser = parse_band)]
    scale: Option<(f64, f64)>,
    #[arg(long, value_enum, default_value = "turbo")]
    colormap: ColormapArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct HistogramArgs {
    /// Frequency-map CSV
    input: PathBuf,
    #[arg(long, value_parser = parse_geometry)]
    geometry: Option<SensorGeometry>,
    #[arg(long, default_value_t = 16)]
    bins: usize,
    /// Histogram CSV (stdout when absent)
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FilterKindArg {
    Butterworth,
    Fir,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OctaveArg {
    Full,
    Half,
}

#[derive(Args, Debug)]
struct MagnifyArgs {
    /// Directory of PGM frames
    input: PathBuf,
    #[arg(long)]
    fps: f64,
    /// Temporal pass band lo:hi Hz
    #[arg(long, value_parser = parse_band)]
    band: Option<(f64, f64)>,
    /// Take the pass band from the dominant bin of a histogram CSV
    #[arg(long)]
    band_from: Option<PathBuf>,
    #[arg(long)]
    m: f64,
    #[arg(long, value_enum, default_value = "butterworth")]
    filter_kind: FilterKindArg,
    #[arg(long, default_value_t = DEFAULT_BUTTERWORTH_ORDER)]
    order: usize,
    #[arg(long, default_value_t = DEFAULT_FIR_TAPS)]
    taps: usize,
    /// Phase denoising sigma in pixels (0 disables)
    #[arg(long, default_value_t = DEFAULT_DENOISE_SIGMA_PX)]
    sigma: f64,
    #[arg(long, default_value_t = DEFAULT_ORIENTATIONS)]
    orientations: usize,
    #[arg(long, value_enum, default_value = "half")]
    octave: OctaveArg,
    /// Also amplify temporal variation of the low-pass residual
    #[arg(long)]
    amplify_lowpass: bool,
    /// Output frame directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct MeasureArgs {
    /// Directory of PGM frames
    input: PathBuf,
    #[arg(long, default_value_t = 30.0)]
    fps: f64,
    #[arg(long, default_value_t = 0)]
    reference: usize,
    /// Also report the fitted amplitude of x motion at this frequency
    #[arg(long)]
    motion_hz: Option<f64>,
    /// Displacements as frame,dx,dy rows (stdout when absent)
    #[arg(long)]
    csv: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

type CliResult<T = ()> = std::result::Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn parse_geometry(s: &str) -> Result<SensorGeometry, String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or("expected WxH")?;
    let w: u16 = w.trim().parse().map_err(|_| format!("bad width {w:?}"))?;
    let h: u16 = h.trim().parse().map_err(|_| format!("bad height {h:?}"))?;
    SensorGeometry::new(w, h).map_err(|e| e.to_string())
}

fn parse_band(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(':').ok_or("expected lo:hi")?;
    let lo: f64 = lo.trim().parse().map_err(|_| format!("bad number {lo:?}"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("bad number {hi:?}"))?;
    Ok((lo, hi))
}

fn parse_rect(s: &str) -> Result<Rect, String> {
    let v: Vec<u16> = s
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<u16>()
                .map_err(|_| format!("bad rectangle component {p:?}"))
        })
        .collect::<Result<_, _>>()?;
    match v[..] {
        [x, y, w, h] => Ok(Rect::new(x, y, w, h)),
        _ => Err("expected x,y,w,h".into()),
    }
}

fn ms_to_us(ms: f64, what: &str) -> CliResult<u64> {
    if !(ms.is_finite() && ms >= 0.0) {
        return Err(Failure::Data(Error::InvalidArgument(format!(
            "{what} must be >= 0 ms, got {ms}"
        ))));
    }
    Ok((ms * 1000.0).round() as u64)
}

fn require_exists(path: &Path) -> CliResult {
    if path.exists() {
        Ok(())
    } else {
        Err(usage(format!("no such file or directory: {}", path.display())))
    }
}

fn read_stream(src: &StreamInput, err: &mut dyn Write) -> CliResult<EventStream> {
    require_exists(&src.input)?;
    let bytes = fs::read(&src.input).map_err(Error::from)?;
    let is_evs1 =
        src.input.extension().is_some_and(|e| e.eq_ignore_ascii_case("evs1")) || bytes.starts_with(EVS1_MAGIC);
    if is_evs1 {
        let decoded = decode_evs1_with_warnings(&bytes)?;
        for w in &decoded.warnings {
            let _ = writeln!(err, "warning: {}: {w:?}", src.input.display());
        }
        if let Some(g) = src.geometry {
            if g != decoded.stream.geometry {
                return Err(Failure::Data(Error::DimensionMismatch(format!(
                    "--geometry {g} differs from file header {}",
                    decoded.stream.geometry
                ))));
            }
        }
        Ok(decoded.stream)
    } else {
        let text = String::from_utf8(bytes).map_err(|_| Error::Parse {
            line: 0,
            message: "CSV input is not UTF-8".into(),
        })?;
        Ok(decode_csv(
            &text,
            CsvOptions {
                geometry: src.geometry,
                sort: src.sort,
            },
        )?)
    }
}

fn write_stream(path: &Path, stream: &EventStream) -> CliResult {
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    let bytes = match ext.as_deref() {
        Some("evs1") => encode_evs1(stream),
        Some("csv") => encode_csv(stream).into_bytes(),
        _ => return Err(usage(format!("{}: output must end in .csv or .evs1", path.display()))),
    };
    fs::write(path, bytes).map_err(Error::from)?;
    Ok(())
}

fn write_text(path: Option<&Path>, text: &str, out: &mut dyn Write) -> CliResult {
    match path {
        Some(p) => fs::write(p, text).map_err(Error::from)?,
        None => out.write_all(text.as_bytes()).map_err(Error::from)?,
    }
    Ok(())
}

fn read_map(path: &Path, geometry: Option<SensorGeometry>) -> CliResult<FrequencyMap> {
    require_exists(path)?;
    let text = fs::read_to_string(path).map_err(Error::from)?;
    Ok(FrequencyMap::from_csv(&text, geometry)?)
}

/// Display scale: explicit, else the estimated range widened to be non-empty.
fn display_config(map: &FrequencyMap, scale: Option<(f64, f64)>) -> CliResult<FreqMapConfig> {
    let (lo, hi) = match scale {
        Some(s) => s,
        None => {
            let (lo, hi) = map
                .estimates()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, _, f)| {
                    (lo.min(f), hi.max(f))
                });
            if lo > hi {
                (1.0, NYQUIST_HZ)
            } else if hi - lo < 1.0 {
                ((lo - 0.5).max(0.5), hi + 0.5)
            } else {
                (lo, hi)
            }
        }
    };
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Failure::Data(Error::InvalidArgument(format!(
            "colour scale needs lo < hi, got {lo}:{hi}"
        ))));
    }
    Ok(FreqMapConfig {
        f_min_hz: lo,
        f_max_hz: hi,
        ..FreqMapConfig::default()
    })
}

/// Runs the CLI with process stdout/stderr and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with_output(argv, &mut stdout.lock(), &mut stderr.lock())
}

/// Runs the CLI writing data to `out` and diagnostics to `err`.
pub fn run_with_output<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let matches = match Cli::command().try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return 1;
        }
    };

    let result = match cli.threads {
        Some(0) => Err(usage("--threads must be >= 1")),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => {
                // Writers are not Send; buffer inside the pool and copy out afterwards.
                let (mut o, mut e) = (Vec::new(), Vec::new());
                let r = pool.install(|| dispatch(&cli.command, &matches, &mut o, &mut e));
                let _ = out.write_all(&o);
                let _ = err.write_all(&e);
                r
            }
            Err(e) => Err(usage(format!("cannot start {n} threads: {e}"))),
        },
        None => dispatch(&cli.command, &matches, out, err),
    };
    match result {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            1
        }
        Err(Failure::Data(e)) => {
            let _ = writeln!(err, "error: {e}");
            2
        }
    }
}

fn dispatch(cmd: &Command, matches: &ArgMatches, out: &mut dyn Write, err: &mut dyn Write) -> CliResult {
    match cmd {
        Command::Info(a) => info(a, out, err),
        Command::Convert(a) => {
            let s = read_stream(&a.src, err)?;
            write_stream(&a.out, &s)
        }
        Command::Synth(a) => synth(a, err),
        Command::Filter(a) => filter(a, matches.subcommand_matches("filter").expect("filter matches"), err),
        Command::Freqmap(a) => freqmap(a, out, err),
        Command::Render(a) => {
            let map = read_map(&a.input, a.geometry)?;
            let cfg = display_config(&map, a.scale)?;
            write_rgb(&a.out, &render_freq_map(&map, &cfg, a.colormap.into()))?;
            Ok(())
        }
        Command::Histogram(a) => histogram(a, out, err),
        Command::Magnify(a) => magnify(a, err),
        Command::Measure(a) => measure(a, out),
    }
}

fn info(a: &InfoArgs, out: &mut dyn Write, err: &mut dyn Write) -> CliResult {
    let s = read_stream(&a.src, err)?;
    let text = format!(
        "geometry: {}\nevents: {}\nduration_us: {}\nfirst_t_us: {}\nlast_t_us: {}\non: {}\noff: {}\n",
        s.geometry,
        s.len(),
        s.duration_us(),
        s.first_t().map_or("-".to_string(), |t| t.to_string()),
        s.last_t().map_or("-".to_string(), |t| t.to_string()),
        s.count_polarity(Polarity::On),
        s.count_polarity(Polarity::Off),
    );
    write_text(None, &text, out)
}

fn synth(a: &SynthArgs, err: &mut dyn Write) -> CliResult {
    let seed = a.seed.unwrap_or(0);
    let model = SensorModel::new(a.threshold_on, a.threshold_off, a.refractory_us)?;
    match a.kind {
        SynthKind::Flicker => {
            let g = a.geometry;
            let regions = if a.region.is_empty() {
                vec![Rect::new(0, 0, g.width, g.height)]
            } else {
                a.region.clone()
            };
            let freqs: Vec<f64> = match a.freq.len() {
                0 => return Err(usage("synth flicker needs --freq")),
                1 => vec![a.freq[0]; regions.len()],
                n if n == regions.len() => a.freq.clone(),
                n => return Err(usage(format!("{n} --freq values for {} regions", regions.len()))),
            };
            let duration_us = ms_to_us(a.duration_ms, "--duration-ms")?;
            let parts = regions
                .iter()
                .zip(&freqs)
                .enumerate()
                .map(|(i, (r, &f))| {
                    let p = FlickerParams {
                        phase_deg: a.phase_deg,
                        jitter_us: a.jitter_us,
                        seed: seed.wrapping_add(i as u64),
                        ..FlickerParams::new(*r, f, duration_us)
                    };
                    synth_flicker(g, &p, &model)
                })
                .collect::<Result<Vec<_>, _>>()?;
            let s = if parts.len() == 1 {
                parts.into_iter().next().expect("one part")
            } else {
                merge_streams(g, &parts)
            };
            let _ = writeln!(err, "synthesized {} events", s.len());
            write_stream(&a.out, &s)
        }
        SynthKind::FromFrames => {
            let dir = a
                .input
                .as_ref()
                .ok_or_else(|| usage("synth from-frames needs a frame directory"))?;
            require_exists(dir)?;
            let fps = a.fps.ok_or_else(|| usage("synth from-frames needs --fps"))?;
            let frames = read_frame_dir(dir, fps)?;
            let s = synth_from_frames(&frames, &model)?;
            let _ = writeln!(err, "synthesized {} events", s.len());
            write_stream(&a.out, &s)
        }
        SynthKind::MovingPattern => {
            let pattern = match a.pattern {
                PatternKind::Blob => Pattern::GaussianBlob { sigma_px: a.blob_sigma },
                PatternKind::Grating => Pattern::SineGrating {
                    period_px: a.grating_period,
                },
            };
            let seq = synth_moving_pattern(
                a.width,
                a.height,
                a.fps.unwrap_or(30.0),
                a.frames,
                pattern,
                a.amplitude_px,
                a.motion_hz,
            )?;
            write_frame_dir(&a.out, &seq)?;
            Ok(())
        }
    }
}

enum Step {
    Stc(u64),
    Refractory(u64),
    Erc(u64),
    AntiFlicker(Vec<FlickerBand>),
}

#[derive(Default)]
struct FilterSettings {
    keep_trail: bool,
    erc_window_us: u64,
    af_window_us: u64,
}

fn parse_config(path: &Path, settings: &mut FilterSettings) -> CliResult<Vec<Step>> {
    require_exists(path)?;
    let text = fs::read_to_string(path).map_err(Error::from)?;
    let mut steps = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |m: &str| {
            Failure::Data(Error::Parse {
                line: i + 1,
                message: format!("{}: {m}", path.display()),
            })
        };
        let (k, v) = line.split_once('=').ok_or_else(|| bad("expected key=value"))?;
        let (k, v) = (k.trim(), v.trim());
        let num = |v: &str| v.parse::<u64>().map_err(|_| bad(&format!("{k} needs an integer")));
        match k {
            "stc_window_us" => steps.push(Step::Stc(num(v)?)),
            "refractory_us" => steps.push(Step::Refractory(num(v)?)),
            "erc_keps" => steps.push(Step::Erc(num(v)?)),
            "erc_window_us" => settings.erc_window_us = num(v)?,
            "keep_trail" => {
                settings.keep_trail = v.parse::<bool>().map_err(|_| bad("keep_trail needs true or false"))?
            }
            "af_window_ms" => {
                let ms: f64 = v.parse().map_err(|_| bad("af_window_ms needs a number"))?;
                settings.af_window_us = ms_to_us(ms, "af_window_ms")?;
            }
            "af_band" => {
                let bands = v
                    .split(',')
                    .map(|b| {
                        let (lo, hi) = parse_band(b).map_err(|m| bad(&m))?;
                        Ok(FlickerBand::new(lo, hi)?)
                    })
                    .collect::<CliResult<Vec<_>>>()?;
                steps.push(Step::AntiFlicker(bands));
            }
            other => return Err(bad(&format!("unknown key {other:?}"))),
        }
    }
    Ok(steps)
}

fn filter(a: &FilterArgs, m: &ArgMatches, err: &mut dyn Write) -> CliResult {
    let mut s = read_stream(&a.src, err)?;
    let mut settings = FilterSettings {
        keep_trail: a.keep_trail,
        erc_window_us: a.erc_window_us,
        af_window_us: ms_to_us(a.window_ms, "--window-ms")?,
    };

    // (argv index, steps) in command-line order; all --af-band flags form one step.
    let idx = |id: &str| -> Vec<usize> { m.indices_of(id).map(|i| i.collect()).unwrap_or_default() };
    let mut placed: Vec<(usize, Vec<Step>)> = Vec::new();
    for (i, &v) in idx("stc_window_us").iter().zip(&a.stc_window_us) {
        placed.push((*i, vec![Step::Stc(v)]));
    }
    for (i, &v) in idx("refractory_us").iter().zip(&a.refractory_us) {
        placed.push((*i, vec![Step::Refractory(v)]));
    }
    for (i, &v) in idx("erc_keps").iter().zip(&a.erc_keps) {
        placed.push((*i, vec![Step::Erc(v)]));
    }
    if let Some(&first) = idx("af_band").first() {
        let bands = a
            .af_band
            .iter()
            .map(|&(lo, hi)| FlickerBand::new(lo, hi))
            .collect::<Result<Vec<_>, _>>()?;
        placed.push((first, vec![Step::AntiFlicker(bands)]));
    }
    for (i, path) in idx("config").iter().zip(&a.config) {
        placed.push((*i, parse_config(path, &mut settings)?));
    }
    placed.sort_by_key(|(i, _)| *i);

    let before = s.len();
    for step in placed.into_iter().flat_map(|(_, steps)| steps) {
        s = match step {
            Step::Stc(w) => stc_filter(&s, &StcConfig::new(w, settings.keep_trail)?),
            Step::Refractory(d) => refractory_filter(&s, d),
            Step::Erc(keps) => {
                let eps = keps
                    .checked_mul(1000)
                    .ok_or_else(|| Error::InvalidArgument("--erc-keps too large".into()))?;
                erc_decimate(&s, &ErcConfig::new(eps, settings.erc_window_us)?)
            }
            Step::AntiFlicker(bands) => anti_flicker(&s, &bands, settings.af_window_us)?,
        };
    }
    let _ = writeln!(err, "kept {} of {before} events", s.len());
    write_stream(&a.out, &s)
}

fn freqmap(a: &FreqmapArgs, out: &mut dyn Write, err: &mut dyn Write) -> CliResult {
    let s = read_stream(&a.src, err)?;
    let mut cfg = match a.preset {
        Some(PresetArg::Vibration) | None => FreqMapConfig::vibration(),
        Some(PresetArg::Structures) => FreqMapConfig::structures(),
        Some(PresetArg::Flicker) => FreqMapConfig::flicker(),
    };
    if let Some(ms) = a.window_ms {
        cfg.window_us = ms_to_us(ms, "--window-ms")?;
    }
    cfg.transition = match a.transition {
        TransitionArg::OnOff => Transition::OnToOff,
        TransitionArg::OffOn => Transition::OffToOn,
    };
    cfg.estimator = match a.estimator {
        EstimatorArg::Mean => Estimator::Mean,
        EstimatorArg::Median => Estimator::Median,
    };
    cfg.min_intervals = a.min_intervals;
    cfg.f_min_hz = a.fmin;
    cfg.f_max_hz = a.fmax;
    cfg.validate()?;

    let map = recording_freq_map(&s, &cfg)?;
    let _ = writeln!(
        err,
        "estimated {} of {} pixels",
        map.estimated_count(),
        s.geometry.pixel_count()
    );
    if let Some(path) = &a.out {
        let display = display_config(&map, a.scale)?;
        write_rgb(path, &render_freq_map(&map, &display, a.colormap.into()))?;
    }
    if a.csv.is_some() || a.out.is_none() {
        write_text(a.csv.as_deref(), &map.to_csv(), out)?;
    }
    Ok(())
}

fn histogram(a: &HistogramArgs, out: &mut dyn Write, err: &mut dyn Write) -> CliResult {
    let map = read_map(&a.input, a.geometry)?;
    let h = freq_histogram(&map, a.bins)?;
    if let Some(b) = h.dominant_bin() {
        let _ = writeln!(err, "dominant bin: {}..{} Hz ({} px)", b.lo_hz, b.hi_hz, b.count);
    }
    write_text(a.csv.as_deref(), &h.to_csv(), out)
}

fn magnify(a: &MagnifyArgs, err: &mut dyn Write) -> CliResult {
    require_exists(&a.input)?;
    let (lo, hi) = match (a.band, &a.band_from) {
        (Some(b), None) => b,
        (None, Some(path)) => {
            require_exists(path)?;
            let text = fs::read_to_string(path).map_err(Error::from)?;
            band_from_histogram(&Histogram::from_csv(&text)?)?
        }
        (Some(_), Some(_)) => return Err(usage("give either --band or --band-from, not both")),
        (None, None) => return Err(usage("magnify needs --band or --band-from")),
    };
    let frames = read_frame_dir(&a.input, a.fps)?;
    let kind = match a.filter_kind {
        FilterKindArg::Butterworth => FilterKind::Butterworth { order: a.order },
        FilterKindArg::Fir => FilterKind::Fir { n_taps: a.taps },
    };
    let params = MagnifyParams {
        m: a.m,
        filter: TemporalFilter {
            kind,
            f_lo_hz: lo,
            f_hi_hz: hi,
            fps: a.fps,
        },
        denoise_sigma_px: a.sigma,
        amplify_lowpass_residual: a.amplify_lowpass,
    };
    let octave = match a.octave {
        OctaveArg::Full => OctaveFraction::Full,
        OctaveArg::Half => OctaveFraction::Half,
    };
    let bank = magnify_bank(frames.width, frames.height, a.orientations, octave)?;
    let result = magnify_sequence(&frames, &params, &bank)?;
    write_frame_dir(&a.out, &result.frames)?;
    let transient = result.transient.iter().filter(|&&t| t).count();
    let _ = writeln!(
        err,
        "magnified {} frames, band {lo}..{hi} Hz, m={}; {transient} transient frames",
        frames.len(),
        a.m
    );
    Ok(())
}

fn measure(a: &MeasureArgs, out: &mut dyn Write) -> CliResult {
    require_exists(&a.input)?;
    let frames = read_frame_dir(&a.input, a.fps)?;
    let d = measure_displacement(&frames, a.reference)?;
    let mut text = String::from("frame,dx,dy\n");
    for (k, (dx, dy)) in d.iter().enumerate() {
        text += &format!("{k},{dx},{dy}\n");
    }
    write_text(a.csv.as_deref(), &text, out)?;
    if let Some(f) = a.motion_hz {
        let dx: Vec<f64> = d.iter().map(|p| p.0).collect();
        let all: Vec<usize> = (0..dx.len()).collect();
        let amp = sinusoid_amplitude(&dx, &all, f, a.fps);
        out.write_all(format!("amplitude_px: {amp}\n").as_bytes())
            .map_err(Error::from)?;
    }
    Ok(())
}
