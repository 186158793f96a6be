//! Command-line front end: run configuration, subcommands and result files.
//!
//! Every command echoes the effective configuration (file values with flag
//! overrides applied) to `config.toml` in its output directory, so a run can
//! be repeated exactly with `--config <out>/config.toml`.

use std::ffi::OsString;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::ModelParams;
use crate::error::{Error, Result};
use crate::experiments::{
    monte_carlo_sweep, sweep_statistics, table1_pipeline, write_records_csv, write_stats_csv, write_table1_csv,
    DMode, SteadySettings, SweepSettings, Table1Settings,
};
use crate::hypotheses::{check_all, g_spectrum, Tolerances};
use crate::jacobians::{assemble_fbb, assemble_g, FlockFamilyMember, StationaryConfig};
use crate::linalg::{general_eigenvalues, SpectrumJson};
use crate::potentials::{Family, PotentialSpec};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "FLOCKSTAB_OUT";
pub const DEFAULT_OUT: &str = "flockstab-out";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NO_CONVERGENCE: i32 = 3;
pub const EXIT_HYPOTHESIS: i32 = 4;
pub const EXIT_BAD_INPUT: i32 = 5;

fn default_n() -> usize {
    25
}
fn default_angle() -> f64 {
    0.3
}
fn default_potential() -> PotentialSpec {
    PotentialSpec::new(Family::Morse)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    /// Largest time step, used by the sweep and by the stationary-state search.
    pub dt: f64,
    /// Horizon of each perturbed run.
    #[serde(rename = "T")]
    pub t: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig { dt: 1e-2, t: 100.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedConfig {
    pub base_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub n_sims: usize,
    pub a_max: f64,
    pub n_bins: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let s = SweepSettings::default();
        SweepConfig {
            n_sims: s.n_sims,
            a_max: s.a_max,
            n_bins: s.n_bins,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Table1Config {
    /// Amplitude used while searching for the stationary state.
    #[serde(rename = "refine_D")]
    pub refine_d: f64,
    #[serde(rename = "refine_T")]
    pub refine_t: f64,
    pub normalize: DMode,
    /// Table-convention amplitude for rows that are not normalised.
    #[serde(rename = "fixed_D")]
    pub fixed_d: f64,
    pub newton_polish: bool,
    pub target_residual: f64,
    /// Families and sizes covered by `reproduce-table1`.
    pub potentials: Vec<Family>,
    pub sizes: Vec<usize>,
}

impl Default for Table1Config {
    fn default() -> Self {
        let s = SteadySettings::default();
        let t = Table1Settings::default();
        Table1Config {
            refine_d: s.refine_d,
            refine_t: s.refine_t,
            normalize: t.normalize,
            fixed_d: t.fixed_d,
            newton_polish: s.newton_polish,
            target_residual: s.target_residual,
            potentials: Family::ALL.to_vec(),
            sizes: vec![25, 40],
        }
    }
}

/// Everything a run depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(rename = "N", default = "default_n")]
    pub n: usize,
    /// Direction of the flock velocity `m0` in radians.
    #[serde(default = "default_angle")]
    pub m0_angle: f64,
    #[serde(default = "default_potential")]
    pub potential: PotentialSpec,
    #[serde(default)]
    pub model: ModelParams,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub seeds: SeedConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub table1: Table1Config,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n: default_n(),
            m0_angle: default_angle(),
            potential: default_potential(),
            model: ModelParams::default(),
            integrator: IntegratorConfig::default(),
            seeds: SeedConfig::default(),
            tolerances: Tolerances::default(),
            sweep: SweepConfig::default(),
            table1: Table1Config::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        RunConfig::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialise config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("N must be at least 1".into()));
        }
        if !self.m0_angle.is_finite() {
            return Err(Error::Config(format!("m0_angle must be finite, got {}", self.m0_angle)));
        }
        if self.table1.sizes.contains(&0) {
            return Err(Error::Config("table1.sizes must be positive".into()));
        }
        if !(self.table1.fixed_d > 0.0) || !self.table1.fixed_d.is_finite() {
            return Err(Error::Config(format!("table1.fixed_D must be positive, got {}", self.table1.fixed_d)));
        }
        self.potential.validate()?;
        self.model.validate()?;
        self.tolerances.validate()?;
        self.steady().validate()?;
        self.sweep_settings().validate()
    }

    pub fn steady(&self) -> SteadySettings {
        SteadySettings {
            refine_d: self.table1.refine_d,
            refine_t: self.table1.refine_t,
            dt: self.integrator.dt,
            seed: self.seeds.base_seed,
            newton_polish: self.table1.newton_polish,
            target_residual: self.table1.target_residual,
        }
    }

    pub fn table_settings(&self) -> Table1Settings {
        Table1Settings {
            normalize: self.table1.normalize,
            fixed_d: self.table1.fixed_d,
        }
    }

    pub fn sweep_settings(&self) -> SweepSettings {
        SweepSettings {
            n_sims: self.sweep.n_sims,
            a_max: self.sweep.a_max,
            horizon: self.integrator.t,
            dt: self.integrator.dt,
            base_seed: self.seeds.base_seed,
            n_bins: self.sweep.n_bins,
        }
    }

    /// Same shape parameters as the configured potential, another family.
    pub fn potential_for(&self, family: Family) -> PotentialSpec {
        PotentialSpec {
            family,
            ..self.potential
        }
    }
}

/// Stationary state written by `find-steady`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyFile {
    pub config: StationaryConfig,
    /// Amplitude in the table convention, `N * D_pair`.
    #[serde(rename = "D")]
    pub d_table: f64,
    /// SHA-256 of the JSON encoding of `config`.
    pub checksum: String,
}

impl SteadyFile {
    pub fn new(config: StationaryConfig) -> Result<Self> {
        let checksum = digest(&config)?;
        let d_table = config.spec.d * config.len() as f64;
        Ok(SteadyFile {
            config,
            d_table,
            checksum,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let file: SteadyFile = serde_json::from_str(text).map_err(|e| Error::Parse(format!("steady-state file: {e}")))?;
        let expected = digest(&file.config)?;
        if expected != file.checksum {
            return Err(Error::Parse(format!(
                "steady-state file: checksum mismatch (stored {}, computed {expected})",
                file.checksum
            )));
        }
        if file.config.positions.is_empty() || file.config.positions.len() % 2 != 0 {
            return Err(Error::Parse("steady-state file: positions must hold 2N > 0 values".into()));
        }
        file.config.spec.validate()?;
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
        SteadyFile::parse(&text)
    }
}

fn digest(config: &StationaryConfig) -> Result<String> {
    let bytes = serde_json::to_vec(config)?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

#[derive(Debug, Parser)]
#[command(name = "flockstab", version, about = "Stability analysis of flock solutions in swarming particle models")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, env = OUT_ENV, default_value = DEFAULT_OUT)]
    pub out: PathBuf,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for the sweep (results do not depend on it).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Potential family: morse, quasi-morse, generalized-morse, log-newtonian.
    #[arg(long, global = true)]
    pub potential: Option<String>,
    #[arg(long = "N", global = true)]
    pub n: Option<usize>,
    #[arg(long = "m0-angle", global = true, allow_negative_numbers = true)]
    pub m0_angle: Option<f64>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Relax random initial data to a stationary state and write steady.json.
    FindSteady,
    /// Spectra of G and F_B^B for a stationary state.
    Spectrum(InputArg),
    /// Check the stability hypotheses and spectral lemmas for a stationary state.
    CheckHypotheses(InputArg),
    /// Monte Carlo sweep of perturbed flocks; writes records.csv and stats.csv.
    PerturbSweep(OptionalInputArg),
    /// Eigenvalue table over the configured potentials and sizes.
    ReproduceTable1,
}

#[derive(Debug, Clone, Args)]
pub struct InputArg {
    /// Steady-state file (defaults to <out>/steady.json).
    #[arg(long)]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct OptionalInputArg {
    /// Steady-state file; computed from the configuration when absent.
    #[arg(long)]
    pub input: Option<PathBuf>,
}

/// Exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        Error::NotStationary { .. } | Error::NoConvergence { .. } | Error::Divergence { .. } => EXIT_NO_CONVERGENCE,
        Error::Parse(_) | Error::Json(_) => EXIT_BAD_INPUT,
        _ => EXIT_FAILURE,
    }
}

/// Effective configuration: file (or defaults) with flag overrides.
pub fn resolve_config(g: &GlobalArgs) -> Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(name) = &g.potential {
        let family = Family::parse(name).ok_or_else(|| Error::Config(format!("unknown potential {name:?}")))?;
        cfg.potential.family = family;
    }
    if let Some(n) = g.n {
        cfg.n = n;
    }
    if let Some(seed) = g.seed {
        cfg.seeds.base_seed = seed;
    }
    if let Some(a) = g.m0_angle {
        cfg.m0_angle = a;
    }
    if g.threads == Some(0) {
        return Err(Error::Config("--threads must be at least 1".into()));
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Parse arguments, run, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: &Cli) -> Result<i32> {
    let cfg = resolve_config(&cli.global)?;
    let out = &cli.global.out;
    fs::create_dir_all(out)?;
    fs::write(out.join("config.toml"), cfg.to_toml()?)?;
    match &cli.command {
        Command::FindSteady => cmd_find_steady(&cfg, out),
        Command::Spectrum(a) => cmd_spectrum(&cfg, &input_path(out, &a.input), out),
        Command::CheckHypotheses(a) => cmd_check_hypotheses(&cfg, &input_path(out, &a.input), out),
        Command::PerturbSweep(a) => cmd_perturb_sweep(&cfg, a.input.as_deref(), cli.global.threads, out),
        Command::ReproduceTable1 => cmd_table1(&cfg, out),
    }
}

fn input_path(out: &Path, input: &Option<PathBuf>) -> PathBuf {
    input.clone().unwrap_or_else(|| out.join("steady.json"))
}

fn steady_state(cfg: &RunConfig) -> Result<StationaryConfig> {
    let outcome = table1_pipeline(
        &cfg.potential,
        cfg.n,
        &cfg.steady(),
        &cfg.table_settings(),
        cfg.tolerances.kernel_tol,
        cfg.tolerances.h1_tol,
    )?;
    Ok(outcome.config)
}

pub fn cmd_find_steady(cfg: &RunConfig, out: &Path) -> Result<i32> {
    let config = steady_state(cfg)?;
    let file = SteadyFile::new(config)?;
    fs::write(out.join("steady.json"), serde_json::to_string_pretty(&file)?)?;
    println!(
        "{} N={} D={:.6} residual={:.3e}",
        file.config.spec.family.name(),
        file.config.len(),
        file.d_table,
        file.config.residual
    );
    Ok(EXIT_OK)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumReport {
    #[serde(rename = "G")]
    pub g: SpectrumJson,
    #[serde(rename = "F_BB")]
    pub fbb: SpectrumJson,
    pub m0: [f64; 2],
}

pub fn cmd_spectrum(cfg: &RunConfig, input: &Path, out: &Path) -> Result<i32> {
    let file = SteadyFile::load(input)?;
    let member = FlockFamilyMember::with_angle(file.config, &cfg.model, cfg.m0_angle);
    let g = assemble_g(&member.config)?;
    let gspec = g_spectrum(&g, cfg.tolerances.kernel_tol)?;
    let fbb = assemble_fbb(&member, &cfg.model)?;
    let fspec = general_eigenvalues(&fbb)?;
    let ftol = (cfg.tolerances.kernel_tol * fspec.spectral_radius()).max(f64::MIN_POSITIVE);
    let fspec = fspec.with_kernel_tol(ftol);
    let report = SpectrumReport {
        g: gspec.to_json(),
        fbb: fspec.to_json(),
        m0: member.m0,
    };
    fs::write(out.join("spectrum.json"), serde_json::to_string_pretty(&report)?)?;
    g.write_text(BufWriter::new(fs::File::create(out.join("G.txt"))?))?;
    fbb.write_text(BufWriter::new(fs::File::create(out.join("FBB.txt"))?))?;
    println!("G: kernel_dim {}   F_B^B: kernel_dim {}", report.g.kernel_dim, report.fbb.kernel_dim);
    Ok(EXIT_OK)
}

pub fn cmd_check_hypotheses(cfg: &RunConfig, input: &Path, out: &Path) -> Result<i32> {
    let file = SteadyFile::load(input)?;
    let member = FlockFamilyMember::with_angle(file.config, &cfg.model, cfg.m0_angle);
    let report = check_all(&member, &cfg.model, &cfg.tolerances)?;
    fs::write(out.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    print!("{}", report.table());
    Ok(if report.all_pass() { EXIT_OK } else { EXIT_HYPOTHESIS })
}

pub fn cmd_perturb_sweep(cfg: &RunConfig, input: Option<&Path>, threads: Option<usize>, out: &Path) -> Result<i32> {
    let config = match input {
        Some(p) => SteadyFile::load(p)?.config,
        None => steady_state(cfg)?,
    };
    let member = FlockFamilyMember::with_angle(config, &cfg.model, cfg.m0_angle);
    let settings = cfg.sweep_settings();
    let records = monte_carlo_sweep(&member, &cfg.model, &settings, threads)?;
    let stats = sweep_statistics(&records, settings.n_bins)?;
    write_csv_file(&out.join("records.csv"), |w| write_records_csv(w, &records))?;
    write_csv_file(&out.join("stats.csv"), |w| write_stats_csv(w, &stats))?;
    println!("{} runs, {} populated bins", records.len(), stats.bins.iter().filter(|b| b.count > 0).count());
    Ok(EXIT_OK)
}

pub fn cmd_table1(cfg: &RunConfig, out: &Path) -> Result<i32> {
    let mut rows = Vec::new();
    for &family in &cfg.table1.potentials {
        for &n in &cfg.table1.sizes {
            let outcome = table1_pipeline(
                &cfg.potential_for(family),
                n,
                &cfg.steady(),
                &cfg.table_settings(),
                cfg.tolerances.kernel_tol,
                cfg.tolerances.h1_tol,
            )?;
            let r = &outcome.row;
            println!(
                "{:<17} N={:<4} mu4={:.4e} |mu3|={:.2e} D={:.4}",
                r.potential, r.n, r.mu4, r.abs_mu3, r.d
            );
            rows.push(outcome.row);
        }
    }
    write_csv_file(&out.join("table1.csv"), |w| write_table1_csv(w, &rows))?;
    Ok(EXIT_OK)
}

fn write_csv_file(path: &Path, f: impl FnOnce(&mut BufWriter<fs::File>) -> Result<()>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}
