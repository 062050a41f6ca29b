mod config;
mod functional;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use bstable::analytic::{
    c_alpha_const, in_region_c_alpha, intensity_mu_n, laplace_mean, legendre_kappa_star, ln_mean_cdf,
    ln_mean_cdf_asymptotic, martingale_tail_bias, wright_phi,
};
use bstable::harness::{expected_atoms, run_experiment, ExperimentParams, RunOptions, EXPERIMENTS};
use bstable::measure::{c_lambda, lp_condition_integral};
use bstable::rng::{replica_seed, Streams};
use bstable::sim::{simulate_population, write_atoms_csv, Window};
use bstable::spine::{many_to_one_rhs, sample_spine};
use bstable::{Alpha, Error, ShapePoint};
use clap::{Args, Parser, Subcommand};

use config::{check_experiment_name, resolve_model, RunConfig};
use functional::parse_functional;

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;

#[derive(Parser)]
#[command(name = "bstable", version, about = "Simulate and verify branching-stable point measures")]
struct Cli {
    /// Worker threads for replica fan-out (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate window-truncated populations and dump their atoms as CSV.
    Simulate(SimulateArgs),
    /// Evaluate closed-form quantities.
    #[command(subcommand)]
    Analytic(AnalyticCmd),
    /// Sample the many-to-one spine or estimate its weighted expectation.
    #[command(subcommand)]
    Spine(SpineCmd),
    /// Run a named experiment and write its report.
    Experiment(ExperimentArgs),
    /// List the available experiments.
    ListExperiments,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// TOML model file (`alpha` and `[[entries]]`).
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long)]
    max_atoms: Option<usize>,
    #[arg(long)]
    max_generation: Option<u32>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    x_max: Option<f64>,
}

#[derive(Subcommand)]
enum AnalyticCmd {
    /// Wright function phi(rho, beta, z).
    Wright {
        #[arg(long)]
        rho: f64,
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        z: f64,
    },
    /// E[S_t([0,x])] = phi(alpha, 1, t x^alpha).
    MeanCdf {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        t: f64,
        #[arg(long)]
        x: f64,
    },
    /// Leading-order asymptotics of E[S_1([0,x])].
    Asymptotic {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        x: f64,
    },
    /// E[sum e^{-theta x}] = exp(t theta^-alpha).
    Laplace {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        t: f64,
        #[arg(long)]
        theta: f64,
    },
    /// Density and cumulative mass of mu_n at (t, x).
    Intensity {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        n: u32,
        #[arg(long)]
        t: f64,
        #[arg(long)]
        x: f64,
    },
    /// Legendre transform kappa*(p, q) = 1 + alpha + ln p + alpha ln(q/alpha).
    KappaStar {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        q: f64,
    },
    /// Limit c_alpha = alpha e^{-(alpha+1)/alpha} of the rescaled minimal position.
    CAlpha {
        #[arg(long)]
        alpha: f64,
    },
    /// Classify (p, q) against the shape set C_alpha.
    Region {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        q: f64,
    },
    /// Truncation bias bound of W_t(theta) at cutoff x_max.
    TailBias {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        theta: f64,
        #[arg(long)]
        t: f64,
        #[arg(long)]
        x_max: f64,
    },
    /// c(lambda) of a model file (before normalization).
    CLambda {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// L^p integrability integral of a model file.
    LpIntegral {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        p: f64,
    },
}

#[derive(Subcommand)]
enum SpineCmd {
    /// Print one spine path as CSV.
    Sample {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
    },
    /// Estimate E[f((A_i,S_i)) e^{S_n} prod_{i<n} A_i], f like `x2<=1*a1`.
    Estimate {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        n: usize,
        #[arg(long, short)]
        f: String,
        #[arg(long)]
        replicas: usize,
        #[arg(long)]
        seed: u64,
    },
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment name (see `list-experiments`); may come from the config file.
    name: Option<String>,
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    x: Option<f64>,
    #[arg(long)]
    x_max: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    theta: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    t_list: Option<Vec<f64>>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    n: Option<u32>,
    #[arg(long, value_delimiter = ',')]
    n_list: Option<Vec<u32>>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    c_list: Option<Vec<f64>>,
    #[arg(long)]
    t_scale: Option<f64>,
    #[arg(long)]
    x_scale: Option<f64>,
    #[arg(long)]
    atom_budget: Option<f64>,
    #[arg(long)]
    prune_below: Option<f64>,
}

impl ExperimentArgs {
    fn params(&self, file: ExperimentParams) -> ExperimentParams {
        ExperimentParams {
            t: self.t.or(file.t),
            x: self.x.or(file.x),
            x_max: self.x_max.or(file.x_max),
            theta: self.theta.clone().or(file.theta),
            t_list: self.t_list.clone().or(file.t_list),
            a: self.a.or(file.a),
            n: self.n.or(file.n),
            n_list: self.n_list.clone().or(file.n_list),
            eta: self.eta.or(file.eta),
            c_list: self.c_list.clone().or(file.c_list),
            t_scale: self.t_scale.or(file.t_scale),
            x_scale: self.x_scale.or(file.x_scale),
            atom_budget: self.atom_budget.or(file.atom_budget),
            prune_below: self.prune_below.or(file.prune_below),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    let out = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Analytic(a) => analytic(a).map(|_| ExitCode::SUCCESS),
        Command::Spine(a) => spine(a).map(|_| ExitCode::SUCCESS),
        Command::Experiment(a) => experiment(a),
        Command::ListExperiments => {
            for (name, about) in EXPERIMENTS {
                println!("{name:<24}{about}");
            }
            Ok(ExitCode::SUCCESS)
        }
    };
    out.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::from(exit_code_for(&e))
    })
}

fn exit_code_for(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::Infeasible { .. } | Error::TruncatedPopulation | Error::Censored { .. }) => EXIT_INFEASIBLE,
        _ => EXIT_USAGE,
    }
}

fn output_dir(cfg: &RunConfig, flag: &Option<PathBuf>) -> Result<PathBuf> {
    let dir = flag.clone().or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn simulate(a: SimulateArgs) -> Result<ExitCode> {
    let c = &a.common;
    let cfg = RunConfig::load_opt(c.config.as_deref())?;
    let seed = cfg.seed(c.seed)?;
    let model = resolve_model(&cfg, c.model.as_deref(), c.alpha)?.normalized();
    let file_window = cfg.window.clone().unwrap_or_default();
    let window = Window::new(
        a.t_max.or(file_window.t_max).unwrap_or(1.0),
        a.x_max.or(file_window.x_max).unwrap_or(1.0),
    )?;
    let caps = cfg.caps(c.max_atoms, c.max_generation);
    let replicas = c.replicas.or(cfg.replicas).unwrap_or(1);
    let expected = expected_atoms(model.alpha, window, caps);
    println!("expected atoms per replica: {expected:.6e} (cap {})", caps.max_atoms);
    if !(expected <= caps.max_atoms as f64) {
        return Err(Error::Infeasible {
            expected,
            cap: caps.max_atoms,
        }
        .into());
    }
    let dir = output_dir(&cfg, &c.out)?;
    let path = dir.join("atoms.csv");
    let mut w = create(&path)?;
    let mut total = 0usize;
    let mut overflow = 0u64;
    for r in 0..replicas as u64 {
        let pop = simulate_population(&model, window, replica_seed(seed, r), caps);
        if pop.truncated {
            return Err(Error::TruncatedPopulation.into());
        }
        write_atoms_csv(&mut w, r, &pop.atoms, r == 0)?;
        total += pop.len();
        overflow += pop.overflow_tally;
    }
    w.flush()?;
    println!(
        "wrote {total} atoms from {replicas} replica(s) to {} ({overflow} children discarded beyond x_max)",
        path.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn analytic(cmd: AnalyticCmd) -> Result<()> {
    match cmd {
        AnalyticCmd::Wright { rho, beta, z } => {
            let w = wright_phi(rho, beta, z)?;
            if w.overflow {
                println!("overflow: ln phi = {}", w.ln_value);
            } else {
                println!("{}", w.value);
            }
            eprintln!("terms {} relative truncation bound {:.3e}", w.terms_used, w.rel_truncation_bound);
        }
        AnalyticCmd::MeanCdf { alpha, t, x } => print_ln(ln_mean_cdf(Alpha::new(alpha)?, t, x)?),
        AnalyticCmd::Asymptotic { alpha, x } => print_ln(ln_mean_cdf_asymptotic(Alpha::new(alpha)?, x)?),
        AnalyticCmd::Laplace { alpha, t, theta } => println!("{}", laplace_mean(Alpha::new(alpha)?, t, theta)),
        AnalyticCmd::Intensity { alpha, n, t, x } => {
            let m = intensity_mu_n(Alpha::new(alpha)?, n, t, x)?;
            println!("density {}\ncumulative {}", m.density, m.cumulative);
        }
        AnalyticCmd::KappaStar { alpha, p, q } => println!("{}", legendre_kappa_star(Alpha::new(alpha)?, p, q)),
        AnalyticCmd::CAlpha { alpha } => println!("{}", c_alpha_const(Alpha::new(alpha)?)),
        AnalyticCmd::Region { alpha, p, q } => {
            let r = in_region_c_alpha(Alpha::new(alpha)?, ShapePoint { p, q });
            println!("{}", format!("{r:?}").to_lowercase());
        }
        AnalyticCmd::TailBias { alpha, theta, t, x_max } => {
            println!("{}", martingale_tail_bias(Alpha::new(alpha)?, theta, t, x_max))
        }
        AnalyticCmd::CLambda { model, alpha } => {
            let m = resolve_model(&RunConfig::default(), Some(&model), alpha)?;
            println!("{}", c_lambda(&m.entries, m.alpha));
        }
        AnalyticCmd::LpIntegral { model, alpha, p } => {
            let m = resolve_model(&RunConfig::default(), Some(&model), alpha)?;
            let r = lp_condition_integral(&m.entries, m.alpha, p)?;
            println!("{}", r.value);
            eprintln!("relative accuracy {:.3e} on (0, {}]", r.rel_accuracy, r.upper_limit);
        }
    }
    Ok(())
}

fn print_ln(ln: f64) {
    if ln > f64::MAX.ln() {
        println!("overflow: ln value = {ln}");
    } else {
        println!("{}", ln.exp());
    }
}

fn spine(cmd: SpineCmd) -> Result<()> {
    match cmd {
        SpineCmd::Sample { alpha, n, seed } => {
            let p = sample_spine(Alpha::new(alpha)?, n, &mut Streams::new(seed).stream(0));
            println!("i,age,position");
            for (i, (a, s)) in p.ages.iter().zip(&p.positions).enumerate() {
                println!("{},{a:.16e},{s:.16e}", i + 1);
            }
        }
        SpineCmd::Estimate { alpha, n, f, replicas, seed } => {
            let func = parse_functional(&f)?;
            let e = many_to_one_rhs(Alpha::new(alpha)?, n, &func, replicas, seed)?;
            println!("mean {}\nstd_error {}", e.estimate.mean, e.estimate.std_error);
            println!("weight_cv {}\neffective_sample_size {}", e.weight_cv, e.effective_sample_size);
        }
    }
    Ok(())
}

fn experiment(a: ExperimentArgs) -> Result<ExitCode> {
    let c = &a.common;
    let cfg = RunConfig::load_opt(c.config.as_deref())?;
    let section = cfg.experiment.clone().unwrap_or_default();
    let name = a
        .name
        .clone()
        .or(section.name)
        .context("no experiment name given (positional argument or [experiment] name)")?;
    check_experiment_name(&name)?;
    let seed = cfg.seed(c.seed)?;
    let model = resolve_model(&cfg, c.model.as_deref(), c.alpha)?.normalized();
    let opts = RunOptions {
        replicas: c.replicas.or(cfg.replicas).unwrap_or(1000),
        seed,
        caps: cfg.caps(c.max_atoms, c.max_generation),
    };
    let params = a.params(section.params);
    let run = run_experiment(&name, &model, &params, &opts)?;
    let report = &run.report;
    for check in &report.checks {
        println!(
            "  [{}{}] {}: statistic {:.6e} reference {:.6e} ({})",
            check.verdict,
            if check.hard { "" } else { ", informational" },
            check.name,
            check.statistic,
            check.reference,
            check.rule
        );
    }
    if let Some(dir) = c.out.clone().or_else(|| cfg.output.clone()) {
        let dir = output_dir(&cfg, &Some(dir))?;
        let mut w = create(&dir.join(format!("{name}.json")))?;
        writeln!(w, "{}", report.to_json())?;
        w.flush()?;
        let mut w = create(&dir.join(format!("{name}_replicas.csv")))?;
        run.table.write_csv(&mut w)?;
        w.flush()?;
    }
    println!("{}", report.summary_line());
    Ok(if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_CHECK_FAILED)
    })
}
