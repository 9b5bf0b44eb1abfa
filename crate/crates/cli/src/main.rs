//! `decaylab` command-line runner.
//!
//! Exit codes: 0 when every check passed, 1 when a run finished with a
//! failed check or verdict, 2 on configuration, I/O or solver errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use decaylab::decay::{fit_decay, DecayModel};
use decaylab::functionals::FunctionalSeries;
use decaylab::scenario::config::SuiteConfig;
use decaylab::scenario::{
    load_config, load_config_file, preset_names, preset_text, run_scenario, run_suite,
    run_weight_suite, write_atomic, ScenarioConfig, ScenarioReport,
};

#[derive(Parser)]
#[command(name = "decaylab", version, about = "Energy-decay experiments for damped waves in exterior domains")]
struct Cli {
    /// Output directory for series, reports and fit data.
    #[arg(long, global = true, env = "DECAYLAB_OUT", default_value = "decaylab-out")]
    out: PathBuf,
    /// Worker threads for `suite` (0: one per core).
    #[arg(long, global = true, default_value_t = 0)]
    parallel: usize,
    /// Override the verdict margin of every scenario.
    #[arg(long, global = true)]
    margin: Option<f64>,
    /// Use this hand-picked b for logarithmic weights.
    #[arg(long, global = true)]
    practical_b: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario from a TOML file or a preset name.
    Run { config: String },
    /// Run every `*.toml` scenario in a directory.
    Suite { dir: PathBuf },
    /// List the built-in presets, or write them out as TOML files.
    Presets {
        /// Directory to write `<name>.toml` files into.
        #[arg(long)]
        export: Option<PathBuf>,
    },
    /// Run the randomized weight and constant checks.
    VerifyWeights {
        #[arg(long, default_value_t = 20240611)]
        seed: u64,
    },
    /// Fit a decay model to the energy column of a series CSV.
    Fit {
        csv: PathBuf,
        /// One of `log`, `poly`, `compact`.
        #[arg(long)]
        model: String,
        /// `b` for log fits, `R` for compact fits.
        #[arg(long, default_value_t = 0.0)]
        param: f64,
        /// Fit window as `lo,hi`; defaults to the whole series.
        #[arg(long, value_delimiter = ',')]
        window: Option<Vec<f64>>,
    },
}

type CliResult = Result<bool, String>;

fn apply_overrides(cli: &Cli, mut cfg: ScenarioConfig) -> Result<ScenarioConfig, String> {
    if let Some(m) = cli.margin {
        cfg.margin = m;
    }
    if let Some(b) = cli.practical_b {
        cfg.weights.use_practical_b = true;
        cfg.weights.practical_b = b;
    }
    cfg.validate().map_err(|e| format!("{}: {e}", cfg.name))?;
    Ok(cfg)
}

fn read_config(source: &str) -> Result<ScenarioConfig, String> {
    let path = Path::new(source);
    if path.exists() {
        return load_config_file(path).map_err(|e| format!("{source}: {e}"));
    }
    match preset_text(source) {
        Some(text) => load_config(text).map_err(|e| format!("preset {source}: {e}")),
        None => Err(format!(
            "{source}: no such file or preset (presets: {})",
            preset_names().join(", ")
        )),
    }
}

fn print_report(r: &ScenarioReport) {
    println!("{} ({:.1} s)", r.name, r.wall_clock_s);
    for v in &r.verdicts {
        println!(
            "  verdict {:?}: gamma_hat = {:.4} vs {} x {:.4} -> {}",
            v.model,
            v.gamma_hat,
            v.margin,
            v.gamma_pred,
            if v.pass { "PASS" } else { "FAIL" }
        );
    }
    if let Some(note) = &r.fit_note {
        println!("  fit: {note}");
    }
    for c in &r.checks {
        println!(
            "  {:<28} {:>12.4e}  (threshold {:.1e})  {}",
            c.name,
            c.value,
            c.threshold,
            if c.pass { "ok" } else { "FAIL" }
        );
    }
    println!("  {}", if r.passed { "PASSED" } else { "FAILED" });
}

fn cmd_run(cli: &Cli, source: &str) -> CliResult {
    let cfg = apply_overrides(cli, read_config(source)?)?;
    let outcome = run_scenario(&cfg, Some(&cli.out)).map_err(|e| format!("{}: {e}", cfg.name))?;
    print_report(&outcome.report);
    Ok(outcome.report.passed)
}

fn cmd_suite(cli: &Cli, dir: &Path) -> CliResult {
    let entries = std::fs::read_dir(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(format!("{}: no *.toml scenarios", dir.display()));
    }
    let configs = paths
        .iter()
        .map(|p| {
            load_config_file(p)
                .map_err(|e| format!("{}: {e}", p.display()))
                .and_then(|c| apply_overrides(cli, c))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let results = run_suite(&configs, cli.parallel, Some(&cli.out)).map_err(|e| e.to_string())?;
    let mut all_passed = true;
    let mut errors = Vec::new();
    for (cfg, res) in configs.iter().zip(results) {
        match res {
            Ok(o) => {
                print_report(&o.report);
                all_passed &= o.report.passed;
            }
            Err(e) => errors.push(format!("{}: {e}", cfg.name)),
        }
    }
    if !errors.is_empty() {
        return Err(errors.join("\n"));
    }
    Ok(all_passed)
}

fn cmd_presets(export: Option<&Path>) -> CliResult {
    for name in preset_names() {
        match export {
            Some(dir) => {
                let path = dir.join(format!("{name}.toml"));
                let text = preset_text(name).unwrap_or_default();
                write_atomic(&path, text.as_bytes()).map_err(|e| e.to_string())?;
                println!("{}", path.display());
            }
            None => println!("{name}"),
        }
    }
    Ok(true)
}

fn cmd_verify_weights(seed: u64) -> CliResult {
    let report = run_weight_suite(seed, &SuiteConfig::default()).map_err(|e| e.to_string())?;
    let id = &report.identity;
    let ineq = &report.inequalities;
    let der = &report.derivatives;
    println!("constant identities ({} pairs, {:.3} s)", id.pairs, id.seconds);
    println!("  T2 max relative error  {:.3e}", id.max_rel_error_t2);
    println!("  T3 min slack           {:.3e}", id.min_slack_t3);
    println!(
        "weight inequalities ({} cases x {} samples, {:.3} s)",
        ineq.cases.len(),
        ineq.samples,
        ineq.seconds
    );
    println!("  min margin             {:.3e}", ineq.min_margin);
    println!("derivatives ({} points)", der.points);
    println!("  max relative error     {:.3e}", der.max_rel_error);
    Ok(id.max_rel_error_t2 <= 1e-9
        && id.min_slack_t3 >= -1e-12
        && ineq.min_margin >= 0.0
        && der.max_rel_error <= 1e-5)
}

fn cmd_fit(csv: &Path, model: &str, param: f64, window: Option<&[f64]>) -> CliResult {
    let model = DecayModel::from_slug(model)
        .ok_or_else(|| format!("unknown model `{model}` (log, poly, compact)"))?;
    let text = std::fs::read_to_string(csv).map_err(|e| format!("{}: {e}", csv.display()))?;
    let series = FunctionalSeries::from_csv(&text).map_err(|e| format!("{}: {e}", csv.display()))?;
    let t = series.times();
    let window = match window {
        Some(&[lo, hi]) => [lo, hi],
        Some(w) => return Err(format!("--window takes two values `lo,hi`, got {}", w.len())),
        None => [t.first().copied().unwrap_or(0.0), t.last().copied().unwrap_or(0.0)],
    };
    let fit = fit_decay(&t, &series.energies(), model, param, window).map_err(|e| e.to_string())?;
    println!("model      {model:?}");
    println!("gamma_hat  {:.10}", fit.gamma_hat);
    println!("ln C       {:.10}", fit.ln_c);
    println!("R^2        {:.10}", fit.r_squared);
    println!("window     [{}, {}] ({} samples)", fit.window[0], fit.window[1], fit.samples);
    if let Some(note) = &fit.note {
        println!("note       {note}");
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config } => cmd_run(&cli, config),
        Command::Suite { dir } => cmd_suite(&cli, dir),
        Command::Presets { export } => cmd_presets(export.as_deref()),
        Command::VerifyWeights { seed } => cmd_verify_weights(*seed),
        Command::Fit {
            csv,
            model,
            param,
            window,
        } => cmd_fit(csv, model, *param, window.as_deref()),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
