//! Command-line front end: argument parsing, path checks and the commands.
//!
//! The commands are ordinary functions so the benchmark harness and the tests
//! can call them without spawning a process.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::basis::{gram_spectrum, BasisIndexSet, DesignMatrix, PinvMode};
use crate::data_io::{add_noise, generate_phantoms_with, noise_stack, ImageStack, PhantomOptions};
use crate::denoise::{synthesize_eigenimages, Debias, TraditionalPca, WienerFilter};
use crate::error::{Error, Result};
use crate::expansion::{CoeffSet, Expander};
use crate::grid::GridSpec;
use crate::metrics::{reports_csv, QualityReport};
use crate::spectrum::{ks_distance, mp_cdf, SpectralModel, ThresholdRule};
use crate::whiten::{NoiseWhitener, Whitening};

pub const EXIT_OK: u8 = 0;
pub const EXIT_IO: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "fbspca", version, about = "Fourier-Bessel steerable PCA for 2D image stacks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub config: RunConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Generate a synthetic stack (noisy stack at --out, clean stack next to it).
    Gen,
    /// Fit the steerable PCA model of a stack.
    Fit,
    /// Export the eigenimages of a fitted model.
    Eigenimages,
    /// Wiener-filter a stack and report quality against its clean version.
    Denoise,
    /// Compare steerable PCA with traditional PCA on a synthetic stack.
    Bench,
    /// Spectrum of the scaled inverse Gram matrix.
    Gram,
    /// Block eigenvalue histograms of pure noise with the Marchenko-Pastur overlay.
    NoiseSpectrum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PinvArg {
    Exact,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ThresholdArg {
    Mp,
    Paper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DebiasArg {
    Linear,
    Spiked,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WhitenArg {
    Block,
    None,
}

impl From<PinvArg> for PinvMode {
    fn from(v: PinvArg) -> Self {
        match v {
            PinvArg::Exact => PinvMode::Exact,
            PinvArg::Identity => PinvMode::Identity,
        }
    }
}

impl From<ThresholdArg> for ThresholdRule {
    fn from(v: ThresholdArg) -> Self {
        match v {
            ThresholdArg::Mp => ThresholdRule::Mp,
            ThresholdArg::Paper => ThresholdRule::Paper,
        }
    }
}

impl From<DebiasArg> for Debias {
    fn from(v: DebiasArg) -> Self {
        match v {
            DebiasArg::Linear => Debias::Linear,
            DebiasArg::Spiked => Debias::Spiked,
        }
    }
}

impl From<WhitenArg> for Whitening {
    fn from(v: WhitenArg) -> Self {
        match v {
            WhitenArg::Block => Whitening::Block,
            WhitenArg::None => Whitening::None,
        }
    }
}

/// Settings shared by all commands.
#[derive(Debug, Clone, PartialEq, Args)]
pub struct RunConfig {
    /// Bandlimit; images are 2L x 2L.
    #[arg(long = "L", global = true, default_value_t = 16)]
    pub bandlimit: usize,
    /// Number of images.
    #[arg(long, global = true, default_value_t = 1000)]
    pub n: usize,
    /// Signal-to-noise ratio (masked signal variance over noise variance).
    #[arg(long, global = true, default_value_t = 0.05)]
    pub snr: f64,
    /// Generate unit-variance noise without signal.
    #[arg(long, global = true, conflicts_with = "snr")]
    pub pure_noise: bool,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    /// Number of phantom classes.
    #[arg(long, global = true, default_value_t = 10)]
    pub classes: usize,
    #[arg(long, value_enum, global = true, default_value_t = PinvArg::Exact)]
    pub pinv: PinvArg,
    #[arg(long, value_enum, global = true, default_value_t = ThresholdArg::Mp)]
    pub threshold: ThresholdArg,
    #[arg(long, value_enum, global = true, default_value_t = DebiasArg::Linear)]
    pub debias: DebiasArg,
    #[arg(long, value_enum, global = true, default_value_t = WhitenArg::Block)]
    pub whiten: WhitenArg,
    /// Histogram bins per block for noise-spectrum.
    #[arg(long, global = true, default_value_t = 20)]
    pub bins: usize,
    #[arg(long = "in", global = true)]
    pub input: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Clean reference stack for denoise (default: the input's clean sibling).
    #[arg(long, global = true)]
    pub clean: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            bandlimit: 16,
            n: 1000,
            snr: 0.05,
            pure_noise: false,
            seed: 0,
            threads: 1,
            classes: 10,
            pinv: PinvArg::Exact,
            threshold: ThresholdArg::Mp,
            debias: DebiasArg::Linear,
            whiten: WhitenArg::Block,
            bins: 20,
            input: None,
            out: None,
            clean: None,
        }
    }
}

impl RunConfig {
    pub fn pinv_mode(&self) -> PinvMode {
        self.pinv.into()
    }

    pub fn rule(&self) -> ThresholdRule {
        self.threshold.into()
    }

    pub fn debias_mode(&self) -> Debias {
        self.debias.into()
    }

    pub fn whitening(&self) -> Whitening {
        self.whiten.into()
    }
}

/// Exit status for an error: 3 for numerical failures, 2 for bad arguments, 1 otherwise.
pub fn exit_code(err: &Error) -> u8 {
    if err.is_numerical() {
        EXIT_NUMERICAL
    } else if matches!(err, Error::InvalidArgument(_) | Error::Domain(_)) {
        EXIT_USAGE
    } else {
        EXIT_IO
    }
}

/// Path of the clean stack written next to a generated noisy stack.
pub fn clean_sibling(path: &Path) -> PathBuf {
    path.with_extension("clean.fbi")
}

fn require<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| Error::InvalidArgument(format!("{flag} is required for this command")))
}

fn check_input(path: &Path) -> Result<()> {
    if !path.is_file() {
        return Err(Error::InvalidArgument(format!("input {} does not exist", path.display())));
    }
    Ok(())
}

fn check_output(path: &Path) -> Result<()> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    if !parent.is_dir() {
        return Err(Error::InvalidArgument(format!("output directory {} does not exist", parent.display())));
    }
    if path.is_dir() {
        return Err(Error::InvalidArgument(format!("output {} is a directory", path.display())));
    }
    Ok(())
}

/// Checks arguments and paths for a command before any computation.
pub fn validate(command: Command, cfg: &RunConfig) -> Result<()> {
    if cfg.bandlimit == 0 {
        return Err(Error::InvalidArgument("--L must be positive".into()));
    }
    if cfg.threads == 0 {
        return Err(Error::InvalidArgument("--threads must be positive".into()));
    }
    if !(cfg.snr > 0.0) {
        return Err(Error::InvalidArgument(format!("--snr must be positive, got {}", cfg.snr)));
    }
    let needs_images = matches!(command, Command::Gen | Command::Bench | Command::NoiseSpectrum);
    if needs_images && cfg.n < 2 {
        return Err(Error::InvalidArgument("--n must be at least 2".into()));
    }
    if matches!(command, Command::Gen | Command::Bench) && cfg.classes == 0 {
        return Err(Error::InvalidArgument("--classes must be positive".into()));
    }
    if command == Command::NoiseSpectrum && cfg.bins == 0 {
        return Err(Error::InvalidArgument("--bins must be positive".into()));
    }
    match command {
        Command::Gen => check_output(require(&cfg.out, "--out")?)?,
        Command::Fit | Command::Eigenimages | Command::Denoise => {
            check_input(require(&cfg.input, "--in")?)?;
            check_output(require(&cfg.out, "--out")?)?;
            if let Some(clean) = &cfg.clean {
                check_input(clean)?;
            }
        }
        Command::Bench | Command::Gram | Command::NoiseSpectrum => {
            if let Some(out) = &cfg.out {
                check_output(out)?;
            }
        }
    }
    Ok(())
}

fn set_threads(threads: usize) {
    let par = if threads <= 1 { faer::Par::Seq } else { faer::Par::rayon(threads) };
    faer::set_global_parallelism(par);
}

fn timing(stage: &str, start: Instant) -> f64 {
    let secs = start.elapsed().as_secs_f64();
    println!("timing,{stage},{secs:.6}");
    secs
}

/// Seed of the noise stream derived from the run seed.
pub fn noise_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

/// Clean phantoms and their noisy version (or unit noise with `pure_noise`).
pub fn generate(cfg: &RunConfig, expander: &Expander) -> Result<(ImageStack, ImageStack)> {
    let clean = generate_phantoms_with(expander, cfg.n, cfg.seed, cfg.classes, PhantomOptions::default())?;
    let noisy = if cfg.pure_noise {
        noise_stack(cfg.n, cfg.bandlimit, 1.0, noise_seed(cfg.seed))?
    } else {
        add_noise(&clean, cfg.snr, noise_seed(cfg.seed))?
    };
    Ok((clean, noisy))
}

/// Everything produced by fitting a stack.
#[derive(Debug, Clone)]
pub struct Fitted {
    pub expander: Expander,
    pub whitener: NoiseWhitener,
    pub coefficients: Vec<CoeffSet>,
    pub model: SpectralModel,
}

/// Expansion, whitening, block PCA, noise estimation and rank selection.
pub fn fit_images<T, S>(expander: Expander, images: &[S], cfg: &RunConfig) -> Result<Fitted>
where
    T: Copy + Into<f64>,
    S: AsRef<[T]>,
{
    let whitener = NoiseWhitener::new(&expander, cfg.whitening())?;
    let coefficients = expander.expand_all(images)?;
    let model = SpectralModel::fit(&coefficients, &whitener, expander.pinv().mode(), cfg.rule())?;
    Ok(Fitted {
        expander,
        whitener,
        coefficients,
        model,
    })
}

/// Wiener-filtered images of a fitted stack.
pub fn fbspca_denoise(fitted: &Fitted, debias: Debias) -> Result<Vec<Vec<f64>>> {
    let filter = WienerFilter::new(&fitted.model, &fitted.whitener, debias)?;
    let filtered = fitted
        .coefficients
        .iter()
        .map(|c| filter.apply(c))
        .collect::<Result<Vec<_>>>()?;
    fitted.expander.reconstruct_all(&filtered)
}

fn expander_for(bandlimit: usize, mode: PinvMode) -> Result<Expander> {
    let grid = GridSpec::square(bandlimit)?;
    let basis = BasisIndexSet::truncate(bandlimit)?;
    Expander::new(&grid, &basis, mode)
}

pub fn cmd_gen(cfg: &RunConfig) -> Result<()> {
    let out = require(&cfg.out, "--out")?;
    let t = Instant::now();
    let expander = expander_for(cfg.bandlimit, PinvMode::Exact)?;
    let (clean, mut noisy) = generate(cfg, &expander)?;
    noisy.metadata.set("seed", cfg.seed);
    noisy.metadata.set("classes", cfg.classes);
    noisy.write(out)?;
    let clean_path = clean_sibling(out);
    clean.write(&clean_path)?;
    timing("gen", t);
    println!("wrote {} images to {} and {}", noisy.len(), out.display(), clean_path.display());
    Ok(())
}

pub fn cmd_fit(cfg: &RunConfig) -> Result<()> {
    let input = require(&cfg.input, "--in")?;
    let out = require(&cfg.out, "--out")?;
    let stack = ImageStack::read(input)?;
    let t = Instant::now();
    let expander = expander_for(stack.bandlimit(), cfg.pinv_mode())?;
    let images = stack.images();
    let fitted = fit_images(expander, &images, cfg)?;
    timing("fit", t);
    fs::write(out, fitted.model.to_bytes())?;
    fs::write(out.with_extension("csv"), fitted.model.eigenvalue_csv())?;
    println!(
        "noise_variance,{:.9e}\nselected,{}",
        fitted.model.noise_variance,
        fitted.model.signed_selected()
    );
    Ok(())
}

pub fn cmd_eigenimages(cfg: &RunConfig) -> Result<()> {
    let input = require(&cfg.input, "--in")?;
    let out = require(&cfg.out, "--out")?;
    let model = SpectralModel::from_bytes(&fs::read(input)?)?;
    let t = Instant::now();
    let expander = expander_for(model.bandlimit, model.pinv_mode)?;
    let whitener = NoiseWhitener::new(&expander, model.whitening)?;
    let set = synthesize_eigenimages(&model, &expander, &whitener)?;
    timing("eigenimages", t);
    if set.images.is_empty() {
        return Err(Error::InvalidArgument("model has no selected components".into()));
    }
    let real: Vec<Vec<f64>> = set.images.iter().map(|e| e.pixels.iter().map(|z| z.re).collect()).collect();
    let mut stack = ImageStack::from_images(model.bandlimit, set.side, &real)?;
    stack.metadata.set("kind", "eigenimages");
    stack.metadata.set("part", "real");
    stack.write(out)?;
    let mut index = String::from("index,k,l,lambda\n");
    for (i, e) in set.images.iter().enumerate() {
        let _ = writeln!(index, "{i},{},{},{:.17e}", e.k, e.l, e.eigenvalue);
    }
    fs::write(out.with_extension("csv"), index)?;
    println!("eigenimages,{}", set.images.len());
    Ok(())
}

pub fn cmd_denoise(cfg: &RunConfig) -> Result<()> {
    let input = require(&cfg.input, "--in")?;
    let out = require(&cfg.out, "--out")?;
    let stack = ImageStack::read(input)?;
    let clean_path = cfg.clean.clone().unwrap_or_else(|| clean_sibling(input));
    let clean = if clean_path.is_file() {
        Some(ImageStack::read(&clean_path)?)
    } else {
        None
    };
    let t = Instant::now();
    let expander = expander_for(stack.bandlimit(), cfg.pinv_mode())?;
    let images = stack.images();
    let fitted = fit_images(expander, &images, cfg)?;
    let denoised = fbspca_denoise(&fitted, cfg.debias_mode())?;
    timing("denoise", t);
    let mut result = ImageStack::from_images(stack.bandlimit(), stack.side(), &denoised)?;
    result.metadata.set("kind", "denoised");
    result.write(out)?;
    if let Some(clean) = clean {
        if clean.len() != stack.len() || clean.side() != stack.side() {
            return Err(Error::DimensionMismatch {
                expected: stack.len() * stack.side() * stack.side(),
                found: clean.len() * clean.side() * clean.side(),
            });
        }
        let grid = stack.grid();
        let clean = clean.to_f64_images();
        let noisy = stack.to_f64_images();
        let reports = [
            QualityReport::evaluate("noisy", &grid, &clean, &noisy)?,
            QualityReport::evaluate("fbspca", &grid, &clean, &denoised)?,
        ];
        let csv = reports_csv(&reports);
        fs::write(out.with_extension("csv"), &csv)?;
        print!("{csv}");
    }
    Ok(())
}

/// One method's line in the benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub method: String,
    pub seconds: f64,
    pub components: usize,
    pub report: QualityReport,
}

pub const BENCH_HEADER: &str = "method,seconds,components,mse,psnr_db,one_minus_ssim";

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = format!("{BENCH_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:.6},{},{:.9e},{:.6},{:.9e}",
            r.method,
            r.seconds,
            r.components,
            r.report.mse,
            r.report.psnr_db,
            1.0 - r.report.ssim
        );
    }
    out
}

/// Noisy input, steerable PCA and traditional PCA on one synthetic stack.
/// Each method's time covers everything from the noisy images to the
/// denoised images, including basis construction.
pub fn benchmark(cfg: &RunConfig) -> Result<Vec<BenchRow>> {
    let gen_expander = expander_for(cfg.bandlimit, PinvMode::Exact)?;
    let (clean, noisy) = generate(cfg, &gen_expander)?;
    drop(gen_expander);
    let grid = noisy.grid();
    let images = noisy.images();
    let clean = clean.to_f64_images();

    let t = Instant::now();
    let expander = expander_for(cfg.bandlimit, cfg.pinv_mode())?;
    let fitted = fit_images(expander, &images, cfg)?;
    let fb = fbspca_denoise(&fitted, cfg.debias_mode())?;
    let fb_secs = t.elapsed().as_secs_f64();
    let fb_components = fitted.model.signed_selected();
    drop(fitted);

    let t = Instant::now();
    let pca = TraditionalPca::fit(&grid, &images, None, cfg.rule())?;
    let pc = pca.denoise(&images, cfg.debias_mode())?;
    let pca_secs = t.elapsed().as_secs_f64();

    let noisy_f64 = noisy.to_f64_images();
    Ok(vec![
        BenchRow {
            method: "noisy".into(),
            seconds: 0.0,
            components: 0,
            report: QualityReport::evaluate("noisy", &grid, &clean, &noisy_f64)?,
        },
        BenchRow {
            method: "fbspca".into(),
            seconds: fb_secs,
            components: fb_components,
            report: QualityReport::evaluate("fbspca", &grid, &clean, &fb)?,
        },
        BenchRow {
            method: "pca".into(),
            seconds: pca_secs,
            components: pca.rank(),
            report: QualityReport::evaluate("pca", &grid, &clean, &pc)?,
        },
    ])
}

pub fn cmd_bench(cfg: &RunConfig) -> Result<()> {
    let rows = benchmark(cfg)?;
    let csv = bench_csv(&rows);
    if let Some(out) = &cfg.out {
        fs::write(out, &csv)?;
    }
    print!("{csv}");
    Ok(())
}

/// Descending eigenvalues of the scaled inverse Gram matrix.
pub fn gram_values(bandlimit: usize) -> Result<Vec<f64>> {
    let grid = GridSpec::square(bandlimit)?;
    let basis = BasisIndexSet::truncate(bandlimit)?;
    let design = DesignMatrix::build(&grid, &basis)?;
    gram_spectrum(&design)
}

pub fn cmd_gram(cfg: &RunConfig) -> Result<()> {
    let t = Instant::now();
    let values = gram_values(cfg.bandlimit)?;
    timing("gram", t);
    let mut csv = String::from("index,eigenvalue\n");
    for (i, v) in values.iter().enumerate() {
        let _ = writeln!(csv, "{i},{v:.17e}");
    }
    match &cfg.out {
        Some(out) => fs::write(out, &csv)?,
        None => print!("{csv}"),
    }
    println!(
        "count,{}\nbelow_0.95,{}\nabove_1.05,{}",
        values.len(),
        values.iter().filter(|&&v| v < 0.95).count(),
        values.iter().filter(|&&v| v > 1.05).count()
    );
    Ok(())
}

/// Steerable model of pure unit-variance noise and the KS distance of every
/// block to its Marchenko-Pastur law.
#[derive(Debug, Clone)]
pub struct NoiseSpectrum {
    pub model: SpectralModel,
    pub ks: Vec<f64>,
}

pub fn noise_spectrum(cfg: &RunConfig) -> Result<NoiseSpectrum> {
    let stack = noise_stack(cfg.n, cfg.bandlimit, 1.0, cfg.seed)?;
    let expander = expander_for(cfg.bandlimit, cfg.pinv_mode())?;
    let images = stack.images();
    let fitted = fit_images(expander, &images, cfg)?;
    let model = fitted.model;
    let ks = model
        .blocks
        .iter()
        .zip(&model.gammas)
        .map(|(b, &g)| ks_distance(&b.values, g, model.noise_variance))
        .collect();
    Ok(NoiseSpectrum { model, ks })
}

/// Per-block histogram of eigenvalues next to the Marchenko-Pastur mass of
/// each bin. Empirical masses of a block sum to 1.
pub fn histogram_csv(spectrum: &NoiseSpectrum, bins: usize) -> String {
    let model = &spectrum.model;
    let s2 = model.noise_variance;
    let mut out = String::from("k,p,gamma,sigma2,ks,bin_left,bin_right,empirical_mass,mp_mass\n");
    for (k, block) in model.blocks.iter().enumerate() {
        let vals = &block.values;
        let g = model.gammas[k];
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min).min(0.0);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
        let mut counts = vec![0usize; bins];
        for &v in vals {
            let b = (((v - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        for (b, &c) in counts.iter().enumerate() {
            let left = lo + b as f64 * width;
            let right = left + width;
            let mp_left = if b == 0 { 0.0 } else { mp_cdf(left, g, s2) };
            let mp_right = if b + 1 == bins { 1.0 } else { mp_cdf(right, g, s2) };
            let _ = writeln!(
                out,
                "{k},{},{g:.9e},{s2:.9e},{:.9e},{left:.9e},{right:.9e},{:.9e},{:.9e}",
                vals.len(),
                spectrum.ks[k],
                c as f64 / vals.len() as f64,
                mp_right - mp_left
            );
        }
    }
    out
}

pub fn cmd_noise_spectrum(cfg: &RunConfig) -> Result<()> {
    let t = Instant::now();
    let spectrum = noise_spectrum(cfg)?;
    timing("noise_spectrum", t);
    let csv = histogram_csv(&spectrum, cfg.bins);
    if let Some(out) = &cfg.out {
        fs::write(out, &csv)?;
    }
    println!("sigma2,{:.9e}", spectrum.model.noise_variance);
    println!("selected,{}", spectrum.model.signed_selected());
    for k in [0usize, 1, 20] {
        if let Some(ks) = spectrum.ks.get(k) {
            println!("ks,k={k},gamma={:.6},{ks:.6}", spectrum.model.gammas[k]);
        }
    }
    Ok(())
}

/// Validates, sets the thread count and runs one command.
pub fn run(cli: &Cli) -> Result<()> {
    validate(cli.command, &cli.config)?;
    set_threads(cli.config.threads);
    let cfg = &cli.config;
    match cli.command {
        Command::Gen => cmd_gen(cfg),
        Command::Fit => cmd_fit(cfg),
        Command::Eigenimages => cmd_eigenimages(cfg),
        Command::Denoise => cmd_denoise(cfg),
        Command::Bench => cmd_bench(cfg),
        Command::Gram => cmd_gram(cfg),
        Command::NoiseSpectrum => cmd_noise_spectrum(cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_parser() {
        let cli = Cli::try_parse_from(["fbspca", "gram"]).unwrap();
        assert_eq!(cli.config, RunConfig::default());
        assert_eq!(cli.command, Command::Gram);
    }

    #[test]
    fn flags_parse_after_subcommand() {
        let cli = Cli::try_parse_from([
            "fbspca", "fit", "--L", "8", "--pinv", "identity", "--threshold", "paper", "--debias", "spiked", "--in", "a.fbi", "--out", "m.fbs",
        ])
        .unwrap();
        assert_eq!(cli.config.bandlimit, 8);
        assert_eq!(cli.config.pinv_mode(), PinvMode::Identity);
        assert_eq!(cli.config.rule(), ThresholdRule::Paper);
        assert_eq!(cli.config.debias_mode(), Debias::Spiked);
    }

    #[test]
    fn conflicting_flags_rejected() {
        let err = Cli::try_parse_from(["fbspca", "gen", "--snr", "0.1", "--pure-noise", "--out", "x"]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(Cli::try_parse_from(["fbspca", "gen", "--pinv", "fast"]).is_err());
    }

    #[test]
    fn missing_paths_are_usage_errors() {
        let cfg = RunConfig::default();
        let e = validate(Command::Fit, &cfg).unwrap_err();
        assert_eq!(exit_code(&e), EXIT_USAGE);
        let cfg = RunConfig {
            input: Some("/nonexistent/stack.fbi".into()),
            out: Some("/tmp/m.fbs".into()),
            ..RunConfig::default()
        };
        assert_eq!(exit_code(&validate(Command::Fit, &cfg).unwrap_err()), EXIT_USAGE);
        assert_eq!(exit_code(&Error::NoiseEstimate { last: 1.0 }), EXIT_NUMERICAL);
        assert_eq!(exit_code(&Error::format("FBI1", "bad")), EXIT_IO);
    }

    #[test]
    fn clean_sibling_name() {
        assert_eq!(clean_sibling(Path::new("/tmp/a.fbi")), PathBuf::from("/tmp/a.clean.fbi"));
    }
}
