//! Command-line front end.
//!
//! Exit codes: 0 on success, 2 for configuration errors (bad flags, invalid
//! config file), 1 for failures while running. Errors are printed to stderr
//! as a single JSON object.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use super::config::{
    Amplitude, CavitySection, ConfigError, InputsSection, NoiseSection, OutputSection, RawConfig,
    SweepConfig, Values,
};
use super::output;
use super::sweep;
use crate::cavity::{self, CavityParams};
use crate::noise;
use crate::protocol::{self, MeasurementRecord};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => EXIT_CONFIG,
            Self::Runtime(_) => EXIT_RUNTIME,
        }
    }

    /// Single-line JSON description.
    pub fn to_line(&self) -> String {
        let v = match self {
            Self::Config(e) => json!({"error": "config", "field": e.field, "message": e.message}),
            Self::Runtime(m) => json!({"error": "runtime", "message": m}),
        };
        v.to_string()
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::Config(e)
    }
}

fn runtime<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Debug, Parser)]
#[command(
    name = "cqed-cnot",
    version,
    about = "Nonlocal CNOT between two cavity-QED nodes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one configuration and print its result row.
    Simulate(RunArgs),
    /// Run a grid sweep from a config file, with flag overrides.
    Sweep {
        /// TOML sweep definition.
        config: PathBuf,
        #[command(flatten)]
        args: RunArgs,
    },
    /// Print the derived Pauli correction table.
    Table1,
    /// Tabulate the reflection coefficient over frequency.
    Spectrum(SpectrumArgs),
    /// Print the closed-form gate and noise figures.
    Formulas(RunArgs),
}

fn parse_values(s: &str) -> Result<Values, String> {
    let v = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(if v.len() == 1 {
        Values::One(v[0])
    } else {
        Values::Many(v)
    })
}

fn parse_amplitude(s: &str) -> Result<Amplitude, String> {
    match parse_values(s)? {
        Values::One(x) => Ok(Amplitude::Real(x)),
        Values::Many(v) if v.len() == 2 => Ok(Amplitude::Complex(v)),
        Values::Many(_) => Err("expected `re` or `re,im`".into()),
    }
}

/// Flags shared by `simulate`, `sweep` and `formulas`. Numeric grid flags
/// take comma-separated lists.
#[derive(Debug, Args, Default)]
struct RunArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, allow_negative_numbers = true)]
    trials: Option<i64>,
    #[arg(long = "N", allow_negative_numbers = true)]
    n: Option<i64>,
    #[arg(long = "G", value_parser = parse_values)]
    big_g: Option<Values>,
    #[arg(long = "G-A", value_parser = parse_values)]
    big_g_a: Option<Values>,
    #[arg(long = "G-B", value_parser = parse_values)]
    big_g_b: Option<Values>,
    #[arg(long)]
    g: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long = "gamma-s")]
    gamma_s: Option<f64>,
    #[arg(long = "g-A")]
    g_a: Option<f64>,
    #[arg(long = "gamma-A")]
    gamma_a: Option<f64>,
    #[arg(long = "gamma-s-A")]
    gamma_s_a: Option<f64>,
    #[arg(long = "g-B")]
    g_b: Option<f64>,
    #[arg(long = "gamma-B")]
    gamma_b: Option<f64>,
    #[arg(long = "gamma-s-B")]
    gamma_s_b: Option<f64>,
    #[arg(long = "Pz", value_parser = parse_values)]
    pz: Option<Values>,
    #[arg(long = "Pz-A", value_parser = parse_values)]
    pz_a: Option<Values>,
    #[arg(long = "Pz-B", value_parser = parse_values)]
    pz_b: Option<Values>,
    #[arg(long, value_parser = parse_values, allow_hyphen_values = true)]
    pl: Option<Values>,
    #[arg(long, value_parser = parse_values, allow_hyphen_values = true)]
    pdc: Option<Values>,
    #[arg(long, value_parser = parse_values, allow_hyphen_values = true)]
    f: Option<Values>,
    #[arg(long, value_parser = parse_amplitude, allow_hyphen_values = true)]
    alpha: Option<Amplitude>,
    #[arg(long, value_parser = parse_amplitude, allow_hyphen_values = true)]
    beta: Option<Amplitude>,
    #[arg(long, value_parser = parse_amplitude, allow_hyphen_values = true)]
    a: Option<Amplitude>,
    #[arg(long, value_parser = parse_amplitude, allow_hyphen_values = true)]
    b: Option<Amplitude>,
    #[arg(long)]
    balanced: bool,
    /// Number of random input pairs, cycled over trials.
    #[arg(long, allow_negative_numbers = true)]
    random: Option<i64>,
    /// `ideal` or `imperfect`.
    #[arg(long)]
    mode: Option<String>,
    /// `retained` or `heralded`.
    #[arg(long)]
    scatter: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    workers: Option<i64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// `csv` or `json`.
    #[arg(long)]
    format: Option<String>,
}

impl RunArgs {
    fn to_raw(&self) -> RawConfig {
        RawConfig {
            seed: self.seed,
            trials: self.trials,
            n: self.n,
            mode: self.mode.clone(),
            scatter: self.scatter.clone(),
            workers: self.workers,
            inputs: InputsSection {
                balanced: self.balanced.then_some(true),
                random: self.random,
                alpha: self.alpha.clone(),
                beta: self.beta.clone(),
                a: self.a.clone(),
                b: self.b.clone(),
            },
            cavity: CavitySection {
                big_g: self.big_g.clone(),
                big_g_a: self.big_g_a.clone(),
                big_g_b: self.big_g_b.clone(),
                g: self.g,
                gamma: self.gamma,
                gamma_s: self.gamma_s,
                g_a: self.g_a,
                gamma_a: self.gamma_a,
                gamma_s_a: self.gamma_s_a,
                g_b: self.g_b,
                gamma_b: self.gamma_b,
                gamma_s_b: self.gamma_s_b,
                pz: self.pz.clone(),
                pz_a: self.pz_a.clone(),
                pz_b: self.pz_b.clone(),
            },
            noise: NoiseSection {
                p_l: self.pl.clone(),
                p_dc: self.pdc.clone(),
                f: self.f.clone(),
            },
            output: OutputSection {
                path: self.out.clone(),
                format: self.format.clone(),
            },
        }
    }
}

#[derive(Debug, Args)]
struct SpectrumArgs {
    #[arg(long = "G")]
    big_g: Option<f64>,
    #[arg(long)]
    g: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long = "gamma-s", default_value_t = 1.0)]
    gamma_s: f64,
    #[arg(long = "Pz", default_value_t = 1.0)]
    pz: f64,
    #[arg(long, default_value_t = 101)]
    points: usize,
    /// Half-width of the frequency grid; defaults to `5 gamma_s`.
    #[arg(long = "omega-max")]
    omega_max: Option<f64>,
    /// `adiabatic` (adiabatic-elimination form) or `textbook` (passive form).
    #[arg(long, default_value = "adiabatic")]
    model: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn write_out<F>(path: Option<&PathBuf>, stdout: &mut dyn Write, body: F) -> Result<(), CliError>
where
    F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
{
    match path {
        Some(p) => {
            let file = File::create(p).map_err(|e| runtime(format!("{}: {e}", p.display())))?;
            let mut w = BufWriter::new(file);
            body(&mut w).map_err(runtime)?;
            w.flush().map_err(runtime)
        }
        None => body(stdout).map_err(runtime),
    }
}

fn run_rows(config: &SweepConfig, stdout: &mut dyn Write) -> Result<(), CliError> {
    let rows = sweep::run_sweep(config).map_err(runtime)?;
    write_out(config.output.as_ref(), stdout, |w| {
        output::write_rows(w, &rows, config.format)
    })
}

fn simulate(args: &RunArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let config = args.to_raw().validate()?;
    if config.grid_size() != 1 {
        return Err(ConfigError::new(
            "grid",
            format!(
                "simulate runs one point, got {}; use sweep",
                config.grid_size()
            ),
        )
        .into());
    }
    run_rows(&config, stdout)
}

fn sweep_cmd(path: &Path, args: &RunArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let config = RawConfig::from_file(path)?
        .merge(&args.to_raw())
        .validate()?;
    run_rows(&config, stdout)
}

fn table1(stdout: &mut dyn Write) -> Result<(), CliError> {
    let table = protocol::derive_correction_table().map_err(runtime)?;
    let mut lines = vec!["r_a,r_b,on_A,on_B".to_string()];
    for rec in MeasurementRecord::all() {
        let (pa, pb) = table.get(rec);
        lines.push(format!("{},{},{pa},{pb}", rec.r_a, rec.r_b));
    }
    writeln!(stdout, "{}", lines.join("\n")).map_err(runtime)
}

fn spectrum(args: &SpectrumArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let field = |name: &str, e: cavity::CavityError| ConfigError::new(name, e.to_string());
    let g = match (args.g, args.big_g) {
        (Some(_), Some(_)) => return Err(ConfigError::new("G", "give either G or g").into()),
        (Some(g), None) => g,
        (None, big_g) => (big_g.unwrap_or(100.0) * args.gamma * args.gamma_s).sqrt(),
    };
    let params = CavityParams::new(g, args.gamma, args.gamma_s).map_err(|e| field("g", e))?;
    if !(args.pz.is_finite() && args.pz >= 0.0) {
        return Err(ConfigError::new("Pz", format!("must be >= 0, got {}", args.pz)).into());
    }
    if args.points == 0 {
        return Err(ConfigError::new("points", "must be >= 1").into());
    }
    let omega_max = args.omega_max.unwrap_or(5.0 * args.gamma_s);
    if !(omega_max.is_finite() && omega_max >= 0.0) {
        return Err(ConfigError::new("omega-max", "must be finite and >= 0").into());
    }
    let model: fn(f64, f64, &CavityParams) -> num_complex::Complex64 = match args.model.as_str() {
        "adiabatic" => cavity::reflection_coefficient,
        "textbook" => cavity::reflection_coefficient_textbook,
        other => {
            return Err(ConfigError::new(
                "model",
                format!("expected `adiabatic` or `textbook`, got `{other}`"),
            )
            .into())
        }
    };
    let omegas: Vec<f64> = if args.points == 1 {
        vec![0.0]
    } else {
        let step = 2.0 * omega_max / (args.points - 1) as f64;
        (0..args.points)
            .map(|k| -omega_max + k as f64 * step)
            .collect()
    };
    let f = |x: f64| output::format_float(Some(x));
    write_out(args.out.as_ref(), stdout, |w| {
        writeln!(w, "omega,re,im,abs,arg")?;
        for omega in omegas {
            let r = model(omega, args.pz, &params);
            writeln!(
                w,
                "{},{},{},{},{}",
                f(omega),
                f(r.re),
                f(r.im),
                f(r.norm()),
                f(r.arg())
            )?;
        }
        Ok(())
    })
}

fn formulas(args: &RunArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let config = args.to_raw().validate()?;
    let pairs = config.input_pairs();
    let n = config.n;
    let mut blocks = Vec::new();
    for p in config.grid() {
        let nz = p.noise;
        let mut raw_f = 0.0;
        let mut clamped_f = 0.0;
        for (na, nb) in &pairs {
            let c = noise::analytic_fidelity(
                na.x(),
                na.y(),
                nb.x(),
                nb.y(),
                p.g_a,
                p.g_b,
                p.pz_a,
                p.pz_b,
            )
            .map_err(runtime)?;
            raw_f += c.raw;
            clamped_f += c.value;
        }
        let k = pairs.len() as f64;
        let opt = |x: Result<f64, noise::NoiseError>| match x {
            Ok(v) => v.to_string(),
            Err(_) => String::new(),
        };
        let mismatch = noise::mismatch_factor_pair(
            nz.f,
            cavity::resonant_r(p.g_a, p.pz_a),
            cavity::resonant_r(p.g_b, p.pz_b),
            n,
        );
        let shrink = noise::shrinking_factor(nz.p_l, nz.p_dc, n);
        let entries: Vec<(&str, String)> = vec![
            ("G_A", p.g_a.to_string()),
            ("G_B", p.g_b.to_string()),
            ("Pz_A", p.pz_a.to_string()),
            ("Pz_B", p.pz_b.to_string()),
            ("p_l", nz.p_l.to_string()),
            ("p_dc", nz.p_dc.to_string()),
            ("f", nz.f.to_string()),
            ("N", n.to_string()),
            ("delta_A", noise::delta(p.g_a, p.pz_a).to_string()),
            ("delta_B", noise::delta(p.g_b, p.pz_b).to_string()),
            ("r1_A", cavity::ideal_reflection(p.pz_a, p.g_a).to_string()),
            ("r1_B", cavity::ideal_reflection(p.pz_b, p.g_b).to_string()),
            ("analytic_F", (clamped_f / k).to_string()),
            ("analytic_F_raw", (raw_f / k).to_string()),
            ("shrinking_factor", shrink.to_string()),
            (
                "shrinking_factor_compound",
                noise::shrinking_factor_compound(nz.p_l, nz.p_dc, n).to_string(),
            ),
            ("mismatch_factor", opt(mismatch.clone())),
            ("total_factor", opt(mismatch.map(|m| m * shrink))),
            (
                "success_probability",
                opt(noise::success_probability(nz.p_l, nz.p_dc, n)),
            ),
            (
                "exact_success_probability",
                noise::exact_success_probability(nz.p_l, nz.p_dc, n).to_string(),
            ),
        ];
        blocks.push(
            entries
                .iter()
                .map(|(k, v)| format!("{k} = {v}"))
                .collect::<Vec<_>>()
                .join("\n"),
        );
    }
    writeln!(stdout, "{}", blocks.join("\n\n")).map_err(runtime)
}

fn dispatch(cli: &Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Simulate(args) => simulate(args, stdout),
        Command::Sweep { config, args } => sweep_cmd(config, args, stdout),
        Command::Table1 => table1(stdout),
        Command::Spectrum(args) => spectrum(args, stdout),
        Command::Formulas(args) => formulas(args, stdout),
    }
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return EXIT_OK;
            }
            let message = e.kind().to_string();
            let detail = e.to_string();
            let first = detail
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or(&message)
                .trim_start_matches("error: ")
                .to_string();
            let err = CliError::Config(ConfigError::new("argv", first));
            let _ = writeln!(stderr, "{}", err.to_line());
            return err.exit_code();
        }
    };
    match dispatch(&cli, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "{}", e.to_line());
            e.exit_code()
        }
    }
}
