use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use bundlesight::io::{
    read_dataset, read_json, write_dataset, write_json, CensoredDatasetDto, EmConfigDto, FitReportDto, GaussianDto,
    GenSpecDto, MetricsDto, TruthDto,
};
use bundlesight::{lab, repro};
use bundlesight_core::baselines::{
    fit_grid_search, fit_metropolis_hastings, fit_mnl, rmse_choice_prediction, GridSpec, MhConfig, PriorBox,
};
use bundlesight_core::datagen::generate_dataset;
use bundlesight_core::metrics::l1_param_error;
use bundlesight_core::{fit, fit_censored, fit_gmm, EmConfig};
use clap::{Parser, Subcommand};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(
    name = "bundlesight",
    version,
    about = "Estimate valuation distributions from bundle transactions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and its ground truth.
    Generate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        truth_out: PathBuf,
        /// Purchase counts per fixed menu, when the spec censors.
        #[arg(long)]
        censored_out: Option<PathBuf>,
    },
    /// Fit a Gaussian with Monte-Carlo EM.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit from purchase counts when no-purchases were not recorded.
    FitCensored {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = bundlesight_core::censored::DEFAULT_MC_INSTANCES)]
        instances: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a K-component Gaussian mixture.
    FitGmm {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Multinomial logit with one alternative per bundle.
    BaselineMnl {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Metropolis-Hastings on the mean with a fixed covariance.
    BaselineMh {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Posterior maximization over a grid of means.
    BaselineGrid {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Parameter error and choice-prediction RMSE of a fitted report.
    Eval {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long, default_value_t = repro::PREDICT_DRAWS)]
        mc_count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Include the wall-clock time in the output.
        #[arg(long)]
        timing: bool,
    },
    /// Numerical checks of identifiability and EM contraction.
    Lab {
        #[command(subcommand)]
        which: LabCommand,
    },
    /// Rerun one of the synthetic experiments.
    Repro {
        #[command(subcommand)]
        which: ReproCommand,
    },
}

#[derive(Subcommand)]
enum LabCommand {
    /// Smallest eigenvalue of the whitened between-region covariance.
    Assumption1 {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Population EM error per step from starts at each radius.
    Contraction {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the reports as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Recovery under separate selling, with the one-price control.
    Identifiability {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(clap::Args)]
struct ReproArgs {
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Include wall-clock times in the summary.
    #[arg(long)]
    timing: bool,
}

#[derive(Subcommand)]
enum ReproCommand {
    /// EM error per iteration, 6 products, 2000 transactions.
    Figure1(ReproArgs),
    /// Final EM error for 1000, 2000 and 4000 transactions over 5 seeds.
    Figure1b(ReproArgs),
    /// EM against the logit on Gaussian and Gumbel truths.
    Figure2(ReproArgs),
    /// Complete against censored fits on three fixed menus.
    Censored(ReproArgs),
    /// EM against Metropolis-Hastings for two products.
    MhComparison(ReproArgs),
}

fn em_config(path: Option<&Path>) -> Result<EmConfig> {
    match path {
        Some(p) => read_json::<EmConfigDto>(p)?
            .to_config()
            .with_context(|| format!("validating {}", p.display())),
        None => Ok(EmConfig::default()),
    }
}

fn sigma_matrix(rows: &[Vec<f64>], at: &str) -> Result<DMatrix<f64>> {
    let d = rows.len();
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        bail!("{at}: must be a square matrix");
    }
    Ok(DMatrix::from_fn(d, d, |r, c| rows[r][c]))
}

fn default_mh_draws() -> usize {
    2000
}
fn default_mh_iterations() -> usize {
    10_000
}
fn default_halfwidth() -> f64 {
    0.5
}
fn default_burn_in() -> f64 {
    0.2
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MhSpec {
    sigma: Vec<Vec<f64>>,
    #[serde(default = "default_mh_iterations")]
    n_iterations: usize,
    #[serde(default = "default_halfwidth")]
    proposal_halfwidth: f64,
    #[serde(default = "default_burn_in")]
    burn_in_fraction: f64,
    #[serde(default = "default_mh_draws")]
    mc_count: usize,
    #[serde(default)]
    prior_low: Option<Vec<f64>>,
    #[serde(default)]
    prior_high: Option<Vec<f64>>,
    #[serde(default)]
    init: Option<Vec<f64>>,
    #[serde(default)]
    seed: u64,
}

fn prior(low: &Option<Vec<f64>>, high: &Option<Vec<f64>>) -> Result<Option<PriorBox>> {
    match (low, high) {
        (None, None) => Ok(None),
        (Some(l), Some(h)) if l.len() == h.len() => Ok(Some(PriorBox {
            low: l.clone(),
            high: h.clone(),
        })),
        _ => bail!("prior_low, prior_high: give both, with equal lengths"),
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSpecDto {
    sigma: Vec<Vec<f64>>,
    low: Vec<f64>,
    high: Vec<f64>,
    steps: usize,
    #[serde(default = "default_mh_draws")]
    mc_count: usize,
    #[serde(default)]
    prior_low: Option<Vec<f64>>,
    #[serde(default)]
    prior_high: Option<Vec<f64>>,
    #[serde(default)]
    seed: u64,
}

#[derive(Serialize)]
struct Summary<T: Serialize> {
    experiment: &'static str,
    #[serde(flatten)]
    result: T,
    #[serde(skip_serializing_if = "Option::is_none")]
    runtime_seconds: Option<f64>,
}

fn summary<T: Serialize>(args: &ReproArgs, experiment: &'static str, result: T, runtime: f64) -> Result<()> {
    let s = Summary {
        experiment,
        result,
        runtime_seconds: args.timing.then_some(runtime),
    };
    write_json(&args.out.join(format!("{experiment}_summary.json")), &s)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate {
            spec,
            out,
            truth_out,
            censored_out,
        } => {
            let dto: GenSpecDto = read_json(&spec)?;
            let spec_v = dto
                .to_spec()
                .with_context(|| format!("validating {}", spec.display()))?;
            let g = generate_dataset(&spec_v)?;
            write_dataset(&out, &g.dataset)?;
            write_json(&truth_out, &TruthDto::from_truth(&spec_v.ground_truth))?;
            if let Some(p) = censored_out {
                let c = g
                    .censored
                    .as_ref()
                    .ok_or_else(|| anyhow!("--censored-out needs censor = true and fixed_menus in the spec"))?;
                write_json(&p, &CensoredDatasetDto::from_dataset(c))?;
            }
        }
        Command::Fit { data, config, out } => {
            let d = read_dataset(&data)?;
            let r = fit(&d, &em_config(config.as_deref())?)?;
            write_json(&out, &FitReportDto::em(&r))?;
        }
        Command::FitCensored {
            data,
            config,
            instances,
            out,
        } => {
            let d = read_json::<CensoredDatasetDto>(&data)?
                .into_dataset()
                .with_context(|| format!("validating {}", data.display()))?;
            let r = fit_censored(&d, &em_config(config.as_deref())?, instances)?;
            write_json(&out, &FitReportDto::censored(&r))?;
        }
        Command::FitGmm { data, k, config, out } => {
            let d = read_dataset(&data)?;
            let r = fit_gmm(&d, k, &em_config(config.as_deref())?)?;
            write_json(&out, &FitReportDto::gmm(&r))?;
        }
        Command::BaselineMnl { data, out } => {
            let d = read_dataset(&data)?;
            write_json(&out, &FitReportDto::mnl(&fit_mnl(&d)?, 0))?;
        }
        Command::BaselineMh { data, config, out } => {
            let d = read_dataset(&data)?;
            let s: MhSpec = read_json(&config)?;
            let sigma = sigma_matrix(&s.sigma, "sigma")?;
            let mut c = MhConfig::new(sigma.clone(), s.seed);
            c.n_iterations = s.n_iterations;
            c.proposal_halfwidth = s.proposal_halfwidth;
            c.burn_in_fraction = s.burn_in_fraction;
            c.mc_count = s.mc_count;
            c.prior = prior(&s.prior_low, &s.prior_high)?;
            c.init = s.init;
            let r = fit_metropolis_hastings(&d, &c)?;
            write_json(&out, &FitReportDto::mh(&r, &sigma, s.seed))?;
        }
        Command::BaselineGrid { data, config, out } => {
            let d = read_dataset(&data)?;
            let s: GridSpecDto = read_json(&config)?;
            let sigma = sigma_matrix(&s.sigma, "sigma")?;
            let grid = GridSpec::uniform(&s.low, &s.high, s.steps).map_err(|e| anyhow!("low, high, steps: {e}"))?;
            let pb = prior(&s.prior_low, &s.prior_high)?;
            let r = fit_grid_search(&d, &grid, &sigma, pb.as_ref(), s.mc_count, s.seed)?;
            write_json(
                &out,
                &FitReportDto::grid(
                    r.best_mu.clone(),
                    &sigma,
                    grid.node_count(),
                    r.best_log_posterior,
                    s.seed,
                ),
            )?;
        }
        Command::Eval {
            report,
            truth,
            test,
            mc_count,
            seed,
            out,
            timing,
        } => {
            let start = Instant::now();
            let rep: FitReportDto = read_json(&report)?;
            let mut m = MetricsDto {
                l1_param_error: None,
                rmse: None,
                runtime_seconds: None,
            };
            if rep.mnl.is_some() && truth.is_some() {
                eprintln!("note: a logit report has no valuation parameters; skipping l1_param_error");
            }
            if let Some(t) = truth.filter(|_| rep.mnl.is_none()) {
                let truth_dto: TruthDto = read_json(&t)?;
                let tp = truth_dto
                    .gaussian()?
                    .ok_or_else(|| anyhow!("{}: parameter error needs a Gaussian truth", t.display()))?;
                m.l1_param_error = Some(l1_param_error(&rep.gaussian()?, &tp)?);
            }
            if let Some(t) = test {
                let d = read_dataset(&t)?;
                m.rmse = Some(rmse_choice_prediction(
                    rep.model()?.as_ref(),
                    d.transactions(),
                    mc_count,
                    seed,
                )?);
            }
            if timing {
                m.runtime_seconds = Some(start.elapsed().as_secs_f64());
            }
            write_json(&out, &m)?;
        }
        Command::Lab { which } => match which {
            LabCommand::Assumption1 { spec, out } => {
                let lambda = lab::run_assumption1(&read_json(&spec)?, &out)?;
                println!("lambda_min = {lambda}");
            }
            LabCommand::Contraction { spec, out, report } => {
                let reports = lab::run_contraction(&read_json(&spec)?, &out)?;
                for r in &reports {
                    println!(
                        "r = {}: eps_hat = {:.4}, bound = {:.4}, excursions = {}, diverged = {}",
                        r.radius,
                        r.epsilon_hat,
                        r.bound,
                        r.excursions.len(),
                        r.diverged
                    );
                }
                if let Some(p) = report {
                    let dtos: Vec<lab::ContractionReportDto> = reports.iter().map(Into::into).collect();
                    write_json(&p, &dtos)?;
                }
            }
            LabCommand::Identifiability { spec, out } => {
                let r = lab::run_identifiability(&read_json(&spec)?, &out)?;
                println!("separate selling error = {:.4}", r.error);
                println!(
                    "one-price control: purchase probabilities {:.4} / {:.4}, fit errors {:.4} / {:.4}",
                    r.control.purchase_probabilities[0],
                    r.control.purchase_probabilities[1],
                    r.control.errors[0],
                    r.control.errors[1]
                );
            }
        },
        Command::Repro { which } => run_repro(which)?,
    }
    Ok(())
}

fn run_repro(which: ReproCommand) -> Result<()> {
    match which {
        ReproCommand::Figure1(a) => {
            std::fs::create_dir_all(&a.out)?;
            let r = repro::figure1(&repro::Figure1Config::default())?;
            repro::write_figure1(&a.out.join("figure1.csv"), &r)?;
            #[derive(Serialize)]
            struct S {
                truth: GaussianDto,
                distinct_bundles: usize,
                first_iteration_below_target: Option<usize>,
                final_error: f64,
            }
            let s = S {
                truth: GaussianDto::from_params(&r.truth),
                distinct_bundles: r.distinct_bundles,
                first_iteration_below_target: r.first_below,
                final_error: *r.errors.last().expect("initial error"),
            };
            println!("first iteration below {}: {:?}", repro::FIGURE1_TARGET, r.first_below);
            summary(&a, "figure1", s, r.runtime_seconds)?;
        }
        ReproCommand::Figure1b(a) => {
            std::fs::create_dir_all(&a.out)?;
            let r = repro::figure1b(&repro::Figure1bConfig::default())?;
            repro::write_figure1b(&a.out.join("figure1b.csv"), &r)?;
            #[derive(Serialize)]
            struct S {
                medians: Vec<(usize, f64, f64)>,
                monotone: bool,
            }
            for (n, m, se) in &r.medians {
                println!("N = {n}: median final error {m:.4} (se {se:.4})");
            }
            summary(
                &a,
                "figure1b",
                S {
                    medians: r.medians.clone(),
                    monotone: r.monotone(),
                },
                r.runtime_seconds,
            )?;
        }
        ReproCommand::Figure2(a) => {
            std::fs::create_dir_all(&a.out)?;
            let r = repro::figure2(&repro::Figure2Config::default())?;
            repro::write_figure2(&a.out.join("figure2.csv"), &r)?;
            #[derive(Serialize)]
            struct S {
                em_wins_gaussian: usize,
                em_wins_gumbel: usize,
            }
            let s = S {
                em_wins_gaussian: r.em_wins("gaussian"),
                em_wins_gumbel: r.em_wins("gumbel"),
            };
            println!(
                "EM better than MNL: gaussian {}/5, gumbel {}/5",
                s.em_wins_gaussian, s.em_wins_gumbel
            );
            summary(&a, "figure2", s, r.runtime_seconds)?;
        }
        ReproCommand::Censored(a) => {
            std::fs::create_dir_all(&a.out)?;
            let r = repro::censored(&repro::CensoredConfig::default())?;
            repro::write_censored(&a.out.join("censored.csv"), &r)?;
            #[derive(Serialize)]
            struct S {
                median_rmse_gap: f64,
            }
            println!("median |RMSE gap| = {:.5}", r.median_gap);
            summary(
                &a,
                "censored",
                S {
                    median_rmse_gap: r.median_gap,
                },
                r.runtime_seconds,
            )?;
        }
        ReproCommand::MhComparison(a) => {
            std::fs::create_dir_all(&a.out)?;
            let start = Instant::now();
            let r = repro::mh_comparison(&repro::MhComparisonConfig::default())?;
            repro::write_mh_comparison(&a.out.join("mh_comparison.csv"), &r, a.timing)?;
            #[derive(Serialize)]
            struct S {
                em_wins: usize,
                seeds: usize,
            }
            println!("EM error below MH error in {}/{} seeds", r.em_wins(), r.rows.len());
            summary(
                &a,
                "mh_comparison",
                S {
                    em_wins: r.em_wins(),
                    seeds: r.rows.len(),
                },
                start.elapsed().as_secs_f64(),
            )?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    if let Err(e) = bundlesight::configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::FAILURE;
    }
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
