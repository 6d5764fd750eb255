use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use ipf_cli::{run_experiment, validate_overrides, Overrides, EXPERIMENTS};

/// Implicit particle filter experiment harness.
#[derive(Parser)]
#[command(name = "ipf", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Run a named experiment and write CSV artifacts plus a run manifest.
    Run {
        /// Experiment name; see `ipf list`.
        experiment: String,
        /// Master seed for all random streams.
        #[arg(long)]
        seed: Option<u64>,
        /// Ensemble size (experiments with a single particle count; table1
        /// always runs its full ladder).
        #[arg(long)]
        particles: Option<usize>,
        /// Independent repeats.
        #[arg(long)]
        repeats: Option<usize>,
        /// Sample count for histogram experiments.
        #[arg(long)]
        samples: Option<usize>,
        /// Bin count for histogram experiments.
        #[arg(long)]
        bins: Option<usize>,
        /// Observation value for histogram experiments.
        #[arg(long)]
        b: Option<f64>,
        /// Diffusion parameter.
        #[arg(long)]
        sigma: Option<f64>,
        /// Observation noise variance.
        #[arg(long)]
        s: Option<f64>,
        /// Time step.
        #[arg(long)]
        delta: Option<f64>,
        /// Desk-size run (scales repeats down).
        #[arg(long)]
        fast: bool,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Key = value file supplying any of the flags above plus
        /// `experiment` and `out`.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// List the available experiments.
    List,
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::List => {
            for name in EXPERIMENTS {
                println!("{name}");
            }
            Ok(())
        }
        Command::Run {
            experiment,
            seed,
            particles,
            repeats,
            samples,
            bins,
            b,
            sigma,
            s,
            delta,
            fast,
            out,
            config,
        } => {
            let mut experiment = experiment;
            let mut out = out;
            let mut ov = Overrides {
                seed,
                particles,
                repeats,
                samples,
                bins,
                b,
                sigma,
                s,
                delta,
                fast,
                threads: threads_from_env()?,
            };
            let mut set_keys: Vec<&str> = Vec::new();
            if let Some(path) = config {
                let text = std::fs::read_to_string(&path)
                    .with_context(|| format!("reading {}", path.display()))?;
                let kv = ipf_core::config::parse_kv(&text).map_err(anyhow::Error::msg)?;
                apply_config(&kv, &mut experiment, &mut out, &mut ov, &mut set_keys)?;
            }
            record_flag_keys(&ov, &mut set_keys);
            if !EXPERIMENTS.contains(&experiment.as_str()) {
                bail!("unknown experiment '{experiment}'; see `ipf list`");
            }
            validate_overrides(&experiment, &set_keys)?;
            let files = run_experiment(&experiment, &ov, &out)?;
            for f in files {
                println!("wrote {}", f.display());
            }
            Ok(())
        }
    }
}

fn threads_from_env() -> Result<usize> {
    match std::env::var("IPF_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|e| anyhow::anyhow!("IPF_THREADS: {e}")),
        Err(_) => Ok(0),
    }
}

fn apply_config(
    kv: &BTreeMap<String, String>,
    experiment: &mut String,
    out: &mut PathBuf,
    ov: &mut Overrides,
    set_keys: &mut Vec<&'static str>,
) -> Result<()> {
    for (k, v) in kv {
        match k.as_str() {
            "experiment" => *experiment = v.clone(),
            "out" => *out = PathBuf::from(v),
            "seed" => set(&mut ov.seed, k, v, set_keys, "seed")?,
            "particles" => set(&mut ov.particles, k, v, set_keys, "particles")?,
            "repeats" => set(&mut ov.repeats, k, v, set_keys, "repeats")?,
            "samples" => set(&mut ov.samples, k, v, set_keys, "samples")?,
            "bins" => set(&mut ov.bins, k, v, set_keys, "bins")?,
            "b" => set(&mut ov.b, k, v, set_keys, "b")?,
            "sigma" => set(&mut ov.sigma, k, v, set_keys, "sigma")?,
            "s" => set(&mut ov.s, k, v, set_keys, "s")?,
            "delta" => set(&mut ov.delta, k, v, set_keys, "delta")?,
            "fast" => {
                ov.fast = matches!(v.as_str(), "true" | "1" | "yes");
                set_keys.push("fast");
            }
            other => bail!("unknown config key '{other}'"),
        }
    }
    Ok(())
}

fn set<T: std::str::FromStr>(
    slot: &mut Option<T>,
    key: &str,
    value: &str,
    set_keys: &mut Vec<&'static str>,
    tag: &'static str,
) -> Result<()>
where
    T::Err: std::fmt::Display,
{
    let parsed = value
        .parse::<T>()
        .map_err(|e| anyhow::anyhow!("{key}: {e}"))?;
    // flags given on the command line win over the config file
    if slot.is_none() {
        *slot = Some(parsed);
    }
    set_keys.push(tag);
    Ok(())
}

fn record_flag_keys(ov: &Overrides, set_keys: &mut Vec<&str>) {
    let pairs: [(&str, bool); 9] = [
        ("seed", ov.seed.is_some()),
        ("particles", ov.particles.is_some()),
        ("repeats", ov.repeats.is_some()),
        ("samples", ov.samples.is_some()),
        ("bins", ov.bins.is_some()),
        ("b", ov.b.is_some()),
        ("sigma", ov.sigma.is_some()),
        ("s", ov.s.is_some()),
        ("delta", ov.delta.is_some()),
    ];
    for (k, present) in pairs {
        if present && !set_keys.contains(&k) {
            set_keys.push(k);
        }
    }
    if ov.fast && !set_keys.contains(&"fast") {
        set_keys.push("fast");
    }
}
