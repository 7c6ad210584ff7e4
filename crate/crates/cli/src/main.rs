use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use mwclust::config::parse_design_config;
use mwclust::harness::{
    build_design_population, design_registry, lookup_design, replication_rng, run_design, Design,
};
use mwclust::mechanisms::{AssignmentSpec, ClusterProbability, PairRelation, SamplingSpec};
use mwclust::oracle::{
    mc_estimator_variance, mc_moment_check, pairwise_variance, staircase_constant, MechanismSpec,
    RandomInstance,
};
use mwclust::population::{
    assign_effects, build_balanced, build_staircase, EffectScheme, EffectVariant,
};
use mwclust::report::{write_csv, write_markdown};
use mwclust::variance::{limit_variances, regularity_report, true_variance};
use mwclust::Error;

#[derive(Parser)]
#[command(
    name = "mwclust",
    version,
    about = "Coverage experiments for multi-way cluster-robust variance estimators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Md,
}

#[derive(Subcommand)]
enum Command {
    /// Run one or more designs and write the coverage table.
    Run {
        /// Registry name (D1..D8) or path to a TOML design file; repeatable.
        #[arg(long, required = true)]
        design: Vec<String>,
        /// Replications per design; defaults to the design's own count.
        #[arg(long)]
        nsim: Option<usize>,
        #[arg(long, env = "MWCLUST_SEED", default_value_t = 42)]
        seed: u64,
        /// Worker threads; defaults to the available parallelism.
        #[arg(long, env = "MWCLUST_WORKERS")]
        workers: Option<usize>,
        /// Output file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Print the design registry.
    ListDesigns,
    /// Run the oracle suite and cluster-size diagnostics.
    Verify {
        /// Monte Carlo replications per moment check.
        #[arg(long, default_value_t = 100_000)]
        reps: usize,
        #[arg(long, env = "MWCLUST_SEED", default_value_t = 42)]
        seed: u64,
    },
    /// Print the probability limits of every estimator and their gaps.
    Theory {
        #[arg(long)]
        design: String,
        #[arg(long, env = "MWCLUST_SEED", default_value_t = 42)]
        seed: u64,
    },
}

fn resolve_design(spec: &str) -> Result<Design, Error> {
    let path = Path::new(spec);
    if path.extension().is_some_and(|e| e == "toml") || path.is_file() {
        parse_design_config(path)
    } else {
        lookup_design(spec)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::UnknownDesign(_)
        | Error::Config { .. }
        | Error::InvalidParameter(_)
        | Error::InvalidMechanism(_)
        | Error::Geometry(_) => 2,
        _ => 1,
    }
}

fn run(
    designs: &[String],
    nsim: Option<usize>,
    seed: u64,
    workers: Option<usize>,
    out: Option<&Path>,
    format: Format,
) -> Result<(), Error> {
    if workers == Some(0) {
        return Err(Error::InvalidParameter("--workers must be positive".into()));
    }
    if nsim == Some(0) {
        return Err(Error::InvalidParameter("--nsim must be positive".into()));
    }
    let resolved = designs
        .iter()
        .map(|d| resolve_design(d))
        .collect::<Result<Vec<_>, _>>()?;
    let workers =
        workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let mut results = Vec::with_capacity(resolved.len());
    for mut design in resolved {
        if let Some(k) = nsim {
            design.nsim = k;
        }
        eprintln!(
            "running {} (nsim = {}, seed = {seed})",
            design.describe(),
            design.nsim
        );
        results.push(run_design(&design, seed, workers)?);
    }
    let sink: Box<dyn Write> = match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    };
    match format {
        Format::Csv => write_csv(&results, sink),
        Format::Md => write_markdown(&results, sink),
    }
}

fn list_designs() {
    for d in design_registry() {
        println!("{}", d.describe());
    }
}

struct Tally {
    failures: usize,
}

impl Tally {
    fn check(&mut self, ok: bool, line: String) {
        println!("{} {line}", if ok { "PASS" } else { "FAIL" });
        self.failures += !ok as usize;
    }
}

fn verify(reps: usize, seed: u64) -> Result<bool, Error> {
    let mut t = Tally { failures: 0 };
    let mut rng = replication_rng(seed, 0);

    let mut worst = 0.0f64;
    for k in 0..200 {
        let inst = RandomInstance::generate(k, 60, &mut rng);
        let e = true_variance(&inst.population, &inst.sampling, &inst.assignment)?;
        let o = pairwise_variance(&inst.population, &inst.sampling, &inst.assignment)?;
        worst = worst.max((e - o).abs() / e.abs().max(1.0));
    }
    t.check(
        worst <= 1e-10,
        format!("pairwise oracle vs cluster-sum engine on 200 instances: max rel diff {worst:.2e}"),
    );

    let mechanisms = [
        ("sampling Full", MechanismSpec::Sampling(SamplingSpec::Full)),
        (
            "sampling Iid(0.3)",
            MechanismSpec::Sampling(SamplingSpec::Iid { p: 0.3 }),
        ),
        (
            "sampling OneWayG(0.4, 0.7)",
            MechanismSpec::Sampling(SamplingSpec::OneWayG { q: 0.4, p: 0.7 }),
        ),
        (
            "sampling MultiwayAnd(0.25, 0.25, 0.25)",
            MechanismSpec::Sampling(SamplingSpec::MultiwayAnd {
                a: 0.25,
                b: 0.25,
                p: 0.25,
            }),
        ),
        (
            "assignment Iid(0.5)",
            MechanismSpec::Assignment(AssignmentSpec::Iid { mu: 0.5 }),
        ),
        (
            "assignment OneWayH(Uniform)",
            MechanismSpec::Assignment(AssignmentSpec::OneWayH(ClusterProbability::Uniform)),
        ),
        (
            "assignment AND(1/sqrt2, 1/sqrt2)",
            MechanismSpec::Assignment(AssignmentSpec::MultiwayAnd {
                pa: std::f64::consts::FRAC_1_SQRT_2,
                pb: std::f64::consts::FRAC_1_SQRT_2,
            }),
        ),
    ];
    for (name, spec) in &mechanisms {
        for rel in PairRelation::ALL {
            for diagonal in [false, true] {
                if diagonal && rel != PairRelation::SameIntersection {
                    continue;
                }
                let rep = mc_moment_check(spec, rel, diagonal, reps, &mut rng);
                let z = rep.max_abs_z();
                let tag = if diagonal {
                    "diagonal".to_string()
                } else {
                    format!("{rel:?}")
                };
                t.check(z <= 4.0, format!("moments {name} {tag}: max |z| = {z:.2}"));
            }
        }
    }

    for m in [4, 100, 1000] {
        let pop = assign_effects(
            build_staircase::<f64>(m, 250)?,
            &EffectScheme::new(EffectVariant::Oddeven),
            seed,
        )?;
        let c = staircase_constant(&pop);
        t.check(
            (c + 0.5).abs() <= 1e-9,
            format!("staircase constant m={m} m0=250: {c}"),
        );
    }

    let pop = assign_effects(
        build_balanced::<f64>(50, 50, 1)?,
        &EffectScheme::new(EffectVariant::Same),
        seed,
    )?;
    let clt = mc_estimator_variance(
        &pop,
        &SamplingSpec::Full,
        &AssignmentSpec::Iid { mu: 0.5 },
        5000,
        seed,
    )?;
    t.check(
        (0.9..=1.1).contains(&clt.ratio),
        format!(
            "estimator variance balanced(50,50,1): ratio {:.4}, skew {:.3}, excess kurtosis {:.3}",
            clt.ratio, clt.skewness, clt.excess_kurtosis
        ),
    );

    for d in design_registry() {
        let pop = build_design_population(&d, seed)?;
        print!("regularity {}: {}", d.name, regularity_report(&pop));
    }
    println!("{} failure(s)", t.failures);
    Ok(t.failures == 0)
}

fn theory(spec: &str, seed: u64) -> Result<(), Error> {
    let design = resolve_design(spec)?;
    design.validate()?;
    let pop = build_design_population(&design, seed)?;
    let t = limit_variances(&pop, &design.sampling, &design.assignment)?;
    println!("{}", design.describe());
    println!(
        "n = {}  E[N] = {:.1}  tau = {:.6}",
        pop.n(),
        t.expected_n,
        pop.tau()
    );
    println!("{:<6} {:>14} {:>14}", "", "limit", "limit - v");
    println!("{:<6} {:>14.6e} {:>14}", "v", t.v, "");
    let rows = [
        ("EHW", t.v_ehw, t.gaps.ehw),
        ("LZG", t.v_lzg, t.gaps.lzg),
        ("LZH", t.v_lzh, t.gaps.lzh),
        ("CGM", t.v_cgm, t.gaps.cgm),
        ("CGM2", t.v_cgm2, t.gaps.cgm2),
    ];
    for (name, limit, gap) in rows {
        println!("{name:<6} {limit:>14.6e} {gap:>14.6e}");
    }
    print!("{}", regularity_report(&pop));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run {
            design,
            nsim,
            seed,
            workers,
            out,
            format,
        } => run(&design, nsim, seed, workers, out.as_deref(), format).map(|_| true),
        Command::ListDesigns => {
            list_designs();
            Ok(true)
        }
        Command::Verify { reps, seed } => verify(reps, seed),
        Command::Theory { design, seed } => theory(&design, seed).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
