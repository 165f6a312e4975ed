use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fedcal_core::federation::Execution;
use fedcal_core::partition::heterogeneity_stats;
use fedcal_runner::bench::{run_bench, BenchConfig};
use fedcal_runner::error::exit;
use fedcal_runner::experiment::{build_data, build_plan, write_result_files};
use fedcal_runner::report::{comparison_rows, render_csv};
use fedcal_runner::{
    load_config, run_to_dir, ExperimentConfig, Result, ResultsFile, RunError, RunOptions,
};
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "fedcal",
    version,
    about = "Federated fine-tuning and calibration simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads; 1 runs serially. Defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the client partition of a config and audit it.
    Partition {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run an experiment or sweep.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Re-render CSV and SVG outputs from results files.
    Report {
        /// A results.json, or a run directory containing results.json or point-*/.
        results: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Directional trend suite; exits with code 7 when a check fails.
    Bench {
        /// Template config for every bench run.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Number of seeds averaged per arm.
        #[arg(long, default_value_t = 5)]
        seeds: usize,
        #[command(flatten)]
        common: Common,
    },
}

fn setup(common: &Common) -> Result<RunOptions> {
    let mut execution = Execution::Parallel;
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(RunError::Config("--threads must be at least 1".into()));
        }
        if n == 1 {
            execution = Execution::Serial;
        }
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    Ok(RunOptions { execution })
}

fn config_with_seed(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut c = load_config(path)?;
    if let Some(s) = seed {
        c.seed = s;
    }
    c.validate()?;
    Ok(c)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| RunError::io(path, e))
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| RunError::Numeric(e.to_string()))
}

fn partition(config: &Path, common: &Common) -> Result<i32> {
    let c = config_with_seed(config, common.seed)?;
    let (data, _) = build_data(&c)?;
    let plan = build_plan(&c, &data)?;
    let stats = heterogeneity_stats(&plan);
    let train = data.train_indices().len();
    let conserved = plan.assigned_count() == train && plan.is_consistent(&data.labels);
    let disjoint = match (&plan.base_classes, &plan.new_classes) {
        (Some(b), Some(n)) => b.iter().all(|x| !n.contains(x)),
        _ => true,
    };

    fs::create_dir_all(&common.out_dir).map_err(|e| RunError::io(&common.out_dir, e))?;
    #[derive(Serialize)]
    struct Audit<'a> {
        plan: &'a fedcal_core::partition::PartitionPlan,
        stats: &'a fedcal_core::partition::HeterogeneityStats,
        train_samples: usize,
        conserved: bool,
        disjoint_class_sets: bool,
    }
    let audit = Audit {
        plan: &plan,
        stats: &stats,
        train_samples: train,
        conserved,
        disjoint_class_sets: disjoint,
    };
    write(&common.out_dir.join("partition.json"), &to_json(&audit)?)?;
    let mut csv = String::from("client,train,test,entropy,tv_from_uniform\n");
    let tv = stats.tv_from_uniform();
    for (k, size) in plan.client_sizes().iter().enumerate() {
        csv.push_str(&format!(
            "{k},{size},{},{:.6},{:.6}\n",
            plan.test_views[k].len(),
            stats.entropy[k],
            tv[k]
        ));
    }
    write(&common.out_dir.join("partition.csv"), &csv)?;
    println!(
        "{} clients, {} train samples, mean entropy {:.4}, conservation {}",
        plan.num_clients,
        train,
        stats.mean_entropy(),
        if conserved { "ok" } else { "VIOLATED" }
    );
    Ok(if conserved && disjoint {
        exit::OK
    } else {
        exit::CHECK_FAILED
    })
}

fn run(config: &Path, common: &Common) -> Result<i32> {
    let opts = setup(common)?;
    let c = config_with_seed(config, common.seed)?;
    let results = run_to_dir(&c, &common.out_dir, &opts)?;
    print!("{}", render_csv(&comparison_rows(&results)));
    Ok(exit::OK)
}

fn load_results(path: &Path) -> Result<ResultsFile> {
    let text = fs::read_to_string(path).map_err(|e| RunError::io(path, e))?;
    ResultsFile::from_json(&text, path)
}

fn report(input: &Path, common: &Common) -> Result<i32> {
    let mut files: Vec<(Option<String>, PathBuf)> = Vec::new();
    if input.is_dir() {
        let single = input.join("results.json");
        if single.is_file() {
            files.push((None, single.clone()));
        } else {
            let mut points: Vec<PathBuf> = fs::read_dir(input)
                .map_err(|e| RunError::io(input, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.join("results.json").is_file())
                .collect();
            points.sort();
            for p in points {
                let name = p.file_name().map(|n| n.to_string_lossy().into_owned());
                files.push((name, p.join("results.json")));
            }
        }
        if files.is_empty() {
            return Err(RunError::io(
                &single,
                std::io::Error::new(std::io::ErrorKind::NotFound, "no results.json found"),
            ));
        }
    } else {
        files.push((None, input.to_path_buf()));
    }
    let mut all = Vec::new();
    for (sub, path) in files {
        let r = load_results(&path)?;
        let dir = match &sub {
            Some(s) => common.out_dir.join(s),
            None => common.out_dir.clone(),
        };
        write_result_files(&r, &dir)?;
        all.push(r);
    }
    let csv = render_csv(&comparison_rows(&all));
    if all.len() > 1 {
        write(&common.out_dir.join("comparison.csv"), &csv)?;
    }
    print!("{csv}");
    Ok(exit::OK)
}

fn bench(config: Option<&Path>, seeds: usize, common: &Common) -> Result<i32> {
    let opts = setup(common)?;
    let mut cfg = BenchConfig {
        seeds,
        ..BenchConfig::default()
    };
    if let Some(p) = config {
        cfg.base = load_config(p)?;
    }
    if let Some(s) = common.seed {
        cfg.base.seed = s;
    }
    let report = run_bench(&cfg, &opts)?;
    fs::create_dir_all(&common.out_dir).map_err(|e| RunError::io(&common.out_dir, e))?;
    write(&common.out_dir.join("bench.csv"), &report.csv())?;
    write(&common.out_dir.join("bench.json"), &to_json(&report)?)?;
    for line in report.summary_lines() {
        println!("{line}");
    }
    Ok(if report.passed() {
        exit::OK
    } else {
        exit::CHECK_FAILED
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() {
                exit::USAGE
            } else {
                exit::OK
            };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let outcome = match &cli.command {
        Command::Partition { config, common } => partition(config, common),
        Command::Run { config, common } => run(config, common),
        Command::Report { results, common } => report(results, common),
        Command::Bench {
            config,
            seeds,
            common,
        } => bench(config.as_deref(), *seeds, common),
    };
    match outcome {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("fedcal: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
