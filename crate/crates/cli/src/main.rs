use clap::{Parser, Subcommand};
use crossings::harness::{self, InterferenceConfig, RunMeta, SweepConfig, SwitchConfig};
use crossings::potential::{Family, PotentialModel};
use crossings::predictor::{nonadiabatic_p, mixed_leading, PredictorOptions};
use crossings::scattering::{scattering_matrix, ScatteringOptions};
use crossings::transfer::{mu, predicted_scattering, Anchors, RegimeThresholds};
use crossings::Error;
use serde::Deserialize;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

const EXIT_ACCEPTANCE: u8 = 4;

#[derive(Parser)]
#[command(name = "crossings", version, about = "Transition probabilities at avoided crossings")]
struct Cli {
    /// JSON configuration file.
    #[arg(long, global = true, env = "CROSSINGS_CONFIG")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, env = "CROSSINGS_OUT", default_value = "out")]
    out: PathBuf,
    /// Worker threads.
    #[arg(long, global = true, env = "CROSSINGS_JOBS")]
    jobs: Option<usize>,
    /// Integrator tolerance.
    #[arg(long, global = true, env = "CROSSINGS_TOL")]
    tol: Option<f64>,
    /// Seed for randomized property suites.
    #[arg(long, global = true, env = "CROSSINGS_SEED", default_value_t = 42)]
    seed: u64,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Crossing catalog and, for sweep configs, the regime map.
    Describe {
        /// Config path (alternative to --config).
        path: Option<PathBuf>,
    },
    /// One numeric P(eps, h).
    Simulate {
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        h: f64,
    },
    /// Closed-form predictions at one (eps, h).
    Predict {
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        h: f64,
    },
    /// Run the property suites.
    Verify,
    /// Grid sweep to CSV and JSON.
    Sweep,
    /// Interference-minimum scan.
    Interfere,
    /// Regime-switch walk.
    SwitchDemo,
}

/// Any config file carrying a potential.
#[derive(Deserialize)]
struct PotentialOnly {
    potential: Family,
    #[serde(default)]
    thresholds: RegimeThresholds,
}

fn read_config(cli: &Cli, fallback: Option<&PathBuf>) -> Result<String, Error> {
    let path = cli.config.as_ref().or(fallback).ok_or_else(|| Error::Config("--config is required".into()))?;
    std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<(), Error> {
    println!("{}", serde_json::to_string_pretty(v).map_err(|e| Error::Io(e.to_string()))?);
    Ok(())
}

fn run(cli: &Cli) -> Result<u8, Error> {
    let tol = cli.tol.unwrap_or(1e-10);
    match &cli.cmd {
        Cmd::Describe { path } => {
            let text = read_config(cli, path.as_ref())?;
            let p: PotentialOnly = serde_json::from_str(&text)?;
            let model = PotentialModel::new(p.potential)?;
            let cat = model.crossings()?;
            print_json(&serde_json::json!({
                "v_left": model.v_left,
                "v_right": model.v_right,
                "crossings": cat.crossings,
                "sigma_n": cat.sigma_n(),
                "m_star": cat.m_star,
            }))?;
            if let Ok(cfg) = serde_json::from_str::<SweepConfig>(&text) {
                println!("eps,h,regimes");
                for (e, h) in cfg.grid.points() {
                    let codes: String = (0..cat.len())
                        .map(|k| match cfg.thresholds.classify(&cat, k, e, h) {
                            Ok(crossings::potential::Regime::NonAdiabatic) => 'N',
                            Ok(crossings::potential::Regime::Adiabatic) => 'A',
                            Err(_) => '-',
                        })
                        .collect();
                    println!("{e:e},{h:e},{codes}");
                }
            }
            Ok(0)
        }
        Cmd::Simulate { eps, h } => {
            let p: PotentialOnly = serde_json::from_str(&read_config(cli, None)?)?;
            let model = PotentialModel::new(p.potential)?;
            let r = scattering_matrix(&model, *eps, *h, &ScatteringOptions::with_tol(tol))?;
            print_json(&serde_json::json!({
                "eps": eps, "h": h, "p": r.p, "unitarity_defect": r.unitarity_defect,
                "t_left": r.t_left, "t_right": r.t_right, "steps": r.steps,
            }))?;
            Ok(0)
        }
        Cmd::Predict { eps, h } => {
            let p: PotentialOnly = serde_json::from_str(&read_config(cli, None)?)?;
            let model = PotentialModel::new(p.potential)?;
            let cat = model.crossings()?;
            let mus: Vec<f64> = cat.crossings.iter().map(|x| mu(x.m, *eps, *h)).collect();
            let t1 = nonadiabatic_p(&model, &cat, *eps, *h, &PredictorOptions::default());
            let regimes = p.thresholds.classify_all(&cat, *eps, *h);
            let (t2, chain) = match &regimes {
                Ok(r) => (
                    mixed_leading(&model, &cat, *eps, *h, r).map_err(|e| e.to_string()),
                    predicted_scattering(&model, &cat, *eps, *h, r, Anchors::default()).map(|c| c.p).map_err(|e| e.to_string()),
                ),
                Err(e) => (Err(e.to_string()), Err(e.to_string())),
            };
            print_json(&serde_json::json!({
                "mu": mus,
                "regimes": regimes.map_err(|e| e.to_string()),
                "nonadiabatic": t1.map_err(|e| e.to_string()),
                "mixed": t2,
                "chain_p": chain,
            }))?;
            Ok(0)
        }
        Cmd::Verify => {
            let suites = harness::verify(cli.seed, tol)?;
            let mut ok = true;
            for s in &suites {
                println!("{} {} cases={} worst={:.3e} tol={:.1e}", if s.passed() { "PASS" } else { "FAIL" }, s.name, s.cases, s.worst, s.tol);
                ok &= s.passed();
            }
            Ok(if ok { 0 } else { EXIT_ACCEPTANCE })
        }
        Cmd::Sweep => {
            let mut cfg = SweepConfig::from_json(&read_config(cli, None)?)?;
            if cli.jobs.is_some() {
                cfg.jobs = cli.jobs;
            }
            if let Some(t) = cli.tol {
                cfg.tol = t;
            }
            cfg.validate()?;
            let start = Instant::now();
            let rows = harness::run_sweep(&cfg)?;
            let out = cfg.out.as_ref().map(PathBuf::from).unwrap_or_else(|| cli.out.clone());
            harness::write_csv(&out.join("sweep.csv"), &rows)?;
            let meta = RunMeta::new(cfg.hash(), start.elapsed().as_secs_f64());
            let summary = serde_json::json!({
                "rows": rows.len(),
                "ok": rows.iter().filter(|r| r.status == harness::STATUS_OK).count(),
                "skipped": rows.iter().filter(|r| r.status == harness::STATUS_SKIPPED).count(),
                "errors": rows.iter().filter(|r| r.status == harness::STATUS_ERROR).count(),
                "config": cfg,
            });
            harness::write_json(&out.join("sweep.json"), &meta, &summary)?;
            eprintln!("{} rows written to {}", rows.len(), out.display());
            Ok(0)
        }
        Cmd::Interfere => {
            let text = read_config(cli, None)?;
            let mut cfg: InterferenceConfig = serde_json::from_str(&text)?;
            cfg.jobs = cli.jobs.or(cfg.jobs);
            if let Some(t) = cli.tol {
                cfg.tol = t;
            }
            let start = Instant::now();
            let scan = harness::scan_interference(&cfg)?;
            harness::write_csv(&cli.out.join("interference.csv"), &scan.points)?;
            let meta = RunMeta::new(harness::sha256_hex(&text), start.elapsed().as_secs_f64());
            harness::write_json(&cli.out.join("interference.json"), &meta, &scan)?;
            for m in &scan.minima {
                println!("minimum h={:.6e} predicted={:.6e} offset={:.2e}", m.h_numeric, m.h_predicted, m.relative_offset);
            }
            println!("r2 {:.5}", scan.r2);
            Ok(0)
        }
        Cmd::SwitchDemo => {
            let text = read_config(cli, None)?;
            let mut cfg: SwitchConfig = serde_json::from_str(&text)?;
            cfg.jobs = cli.jobs.or(cfg.jobs);
            if let Some(t) = cli.tol {
                cfg.tol = t;
            }
            let start = Instant::now();
            let rep = harness::regime_switch_demo(&cfg)?;
            harness::write_csv(&cli.out.join("switch.csv"), &rep.rows)?;
            let meta = RunMeta::new(harness::sha256_hex(&text), start.elapsed().as_secs_f64());
            harness::write_json(&cli.out.join("switch.json"), &meta, &rep)?;
            println!("sigma_n {} correct {}/{}", rep.sigma_n, rep.correct, rep.evaluated);
            Ok(if rep.correct == rep.evaluated { 0 } else { EXIT_ACCEPTANCE })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
