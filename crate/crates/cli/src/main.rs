use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use odia_core::feedback::{build_grassmannian_codebook_with, build_random_codebook, packing_bound, GrassmannianOptions};
use odia_core::harness::experiments::{decay_experiment, eta_cdf_experiment, run_tab1_grid, validate_suite};
use odia_core::harness::presets::{preset_specs, PresetOptions};
use odia_core::harness::{run_sweep, write_csv, write_csv_rows, Scheme, SweepSpec};
use odia_core::seodia::OutagePolicy;
use odia_core::{Codebook, NetworkConfig};

#[derive(Parser)]
#[command(name = "odia", version, about = "Opportunistic downlink interference alignment simulator")]
struct Cli {
    /// Base seed; every drop derives its own stream from it.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Channel drops per operating point.
    #[arg(long, global = true)]
    drops: Option<usize>,
    /// Output file (stdout when absent).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (all cores when absent).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Sweep configuration file (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sweep described by --config.
    Sweep,
    /// Run a named experiment: fig2, fig3, fig4, fig5, fig6 or tab1-grid.
    Preset {
        name: String,
        #[arg(long)]
        snr_db: Option<f64>,
        #[arg(long)]
        n: Option<usize>,
        /// Outage handling for SE-ODIA in the grid search.
        #[arg(long, default_value = "partial")]
        outage_policy: String,
    },
    /// Tail slope of the leakage-metric CDF.
    EtaCdf {
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 4)]
        m: usize,
        #[arg(long, default_value_t = 2)]
        l: usize,
        #[arg(long, default_value_t = 2)]
        s: usize,
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
    },
    /// Growth of E[1/eta_min] with the number of users.
    Decay {
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 4)]
        m: usize,
        #[arg(long, default_value_t = 2)]
        l: usize,
        #[arg(long, default_value_t = 2)]
        s: usize,
        #[arg(long, value_enum, default_value_t = DecayScheme::Odia)]
        scheme: DecayScheme,
        #[arg(long, value_delimiter = ',', default_values_t = [10usize, 30, 100, 300, 1000])]
        n_values: Vec<usize>,
    },
    /// Build or inspect feedback codebooks.
    Codebook {
        #[command(subcommand)]
        action: CodebookAction,
    },
    /// Run the quick invariant suite.
    Validate,
}

#[derive(Clone, Copy, ValueEnum)]
enum DecayScheme {
    Odia,
    MinInr,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Random,
    Grassmannian,
}

#[derive(Subcommand)]
enum CodebookAction {
    /// Write a codebook file.
    Gen {
        #[arg(long)]
        s: usize,
        #[arg(long)]
        bits: u32,
        #[arg(long, value_enum, default_value_t = Kind::Grassmannian)]
        kind: Kind,
        #[arg(long, default_value_t = 50)]
        iterations: usize,
        #[arg(long, default_value_t = 100_000)]
        training: usize,
    },
    /// Print a codebook's minimum chordal distance and compare it with the
    /// packing expression; exits 1 when the distance exceeds it.
    Check { file: PathBuf },
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let drops = cli.drops.unwrap_or(1000);
    match cli.command {
        Command::Sweep => {
            let path = cli.config.as_ref().context("sweep needs --config")?;
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let mut spec = SweepSpec::from_config_text(&text)?;
            if cli.drops.is_some() {
                spec.drops = drops;
            }
            if cli.threads.is_some() {
                spec.threads = cli.threads;
            }
            let seed = spec.base.seed;
            let out = cli.out.clone().or_else(|| spec.out.clone());
            let result = run_sweep(&spec)?;
            write_csv(output(out.as_deref())?, &[result], seed)?;
        }
        Command::Preset {
            name,
            snr_db,
            n,
            outage_policy,
        } => {
            let mut opts = PresetOptions::new(cli.seed, drops);
            opts.threads = cli.threads;
            opts.snr_db = snr_db;
            opts.n = n;
            if name == "tab1-grid" {
                let policy: OutagePolicy = outage_policy.parse()?;
                let cfg = NetworkConfig::new(3, n.unwrap_or(20), 4, 2, 2, snr_db.unwrap_or(3.0), cli.seed);
                let report = run_tab1_grid(&cfg, drops, policy, cli.threads)?;
                let rows = report.rows();
                let refs: Vec<_> = rows.iter().collect();
                write_csv_rows(output(cli.out.as_deref())?, &refs, &report.config_text(), cli.seed)?;
                let b = report.best_cell();
                eprintln!(
                    "best (eta_i, eta_d, alpha) = ({}, {}, {}): sum-rate {:.4} ± {:.4}, outage {:.3}",
                    b.params.eta_i, b.params.eta_d, b.params.alpha, b.sum_rate_mean, b.sum_rate_sem, b.outage_rate
                );
            } else {
                let results = preset_specs(&name, &opts)?
                    .iter()
                    .map(run_sweep)
                    .collect::<odia_core::Result<Vec<_>>>()?;
                write_csv(output(cli.out.as_deref())?, &results, cli.seed)?;
            }
        }
        Command::EtaCdf { k, m, l, s, samples } => {
            let cfg = NetworkConfig::new(k, s, m, l, s, 20.0, cli.seed);
            let r = eta_cdf_experiment(&cfg, samples, cli.threads)?;
            let mut w = output(cli.out.as_deref())?;
            writeln!(w, "# samples = {}, expected exponent = {}", r.samples, r.expected_exponent)?;
            writeln!(w, "# fitted slope = {:.4}, r^2 = {:.5}", r.fit.slope, r.fit.r_squared)?;
            writeln!(w, "log_eta,log_cdf")?;
            for (x, y) in r.fit.x.iter().zip(&r.fit.y) {
                writeln!(w, "{x},{y}")?;
            }
        }
        Command::Decay {
            k,
            m,
            l,
            s,
            scheme,
            n_values,
        } => {
            let cfg = NetworkConfig::new(k, s, m, l, s, 20.0, cli.seed);
            let scheme = match scheme {
                DecayScheme::Odia => Scheme::Odia,
                DecayScheme::MinInr => Scheme::MinInr,
            };
            let r = decay_experiment(&cfg, scheme, &n_values, drops, cli.threads)?;
            let mut w = output(cli.out.as_deref())?;
            writeln!(w, "# scheme = {scheme}, fitted slope = {:.4}, r^2 = {:.5}", r.fit.slope, r.fit.r_squared)?;
            writeln!(w, "n,mean_inv_eta_min")?;
            for (n, v) in &r.points {
                writeln!(w, "{n},{v}")?;
            }
        }
        Command::Codebook { action } => match action {
            CodebookAction::Gen {
                s,
                bits,
                kind,
                iterations,
                training,
            } => {
                let cb: Codebook = match kind {
                    Kind::Random => build_random_codebook(s, bits, cli.seed)?,
                    Kind::Grassmannian => build_grassmannian_codebook_with(
                        s,
                        bits,
                        &GrassmannianOptions::new(iterations, cli.seed).with_training(training),
                    )?,
                };
                cb.write_to(output(cli.out.as_deref())?)?;
                eprintln!("min chordal distance^2 = {:.6}", cb.min_chordal_sq());
            }
            CodebookAction::Check { file } => {
                let f = File::open(&file).with_context(|| format!("opening {}", file.display()))?;
                let cb = Codebook::read_from(BufReader::new(f))?;
                let bound = packing_bound(cb.dim(), cb.size());
                println!("codewords = {}, S = {}", cb.size(), cb.dim());
                println!("min chordal distance^2 = {:.6}", cb.min_chordal_sq());
                println!("packing bound = {bound:.6}");
                if cb.within_packing_bound() {
                    println!("within bound");
                } else {
                    println!("exceeds bound");
                    return Ok(ExitCode::from(1));
                }
            }
        },
        Command::Validate => {
            let checks = validate_suite(cli.seed, drops.min(200))?;
            let mut ok = true;
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                ok &= c.passed;
            }
            if !ok {
                bail!("invariant suite failed");
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
