//! Command-line front end.
//!
//! Exit codes: 0 on success, 2 for usage, config and input errors, 3 for
//! failures while running.

use std::collections::HashMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use clap::{Parser, Subcommand};

use crate::config::{self, RunConfig};
use crate::eval::{pearson, psnr};
use crate::experiment::{Prepared, ReconEvaluator};
use crate::fitness::{self, FitnessConfig, FitnessReport};
use crate::image::Image2D;
use crate::io;
use crate::optimizer::{self, EvaluationError, Evaluator, RunRecord};
use crate::param_space::Position;
use crate::recon::ReconParams;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Environment variable capping the number of evaluation threads.
pub const THREADS_ENV: &str = "CROWTUNE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "crowtune", version, about = "Tune iterative CT reconstruction parameters with crow search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the configured scan and search the parameter grid.
    Optimize {
        config: PathBuf,
    },
    /// Reconstruct the configured scan once with parameters from a file.
    Reconstruct {
        config: PathBuf,
        /// `name = value` lines covering the algorithm's parameters.
        #[arg(long)]
        params: PathBuf,
        /// Output directory; defaults to the config's `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score an image (`.pgm` or `.csv`) with the no-reference fitness.
    Evaluate {
        image: PathBuf,
        /// Reference image for PSNR.
        #[arg(long = "ref")]
        reference: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        eta: f64,
        #[arg(long, default_value_t = 4.0)]
        xi: f64,
        #[arg(long, default_value_t = 0.25)]
        gamma: f64,
        /// PSNR data range; defaults to the reference's max minus min.
        #[arg(long)]
        data_range: Option<f64>,
    },
    /// Split a run's combined weight map into one CSV per parameter.
    ExportWeightmap {
        run_dir: PathBuf,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Runtime(_) => EXIT_RUNTIME,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Runtime(m) => m,
        }
    }
}

fn usage(e: impl ToString) -> Failure {
    Failure::Usage(e.to_string())
}

fn runtime(e: impl ToString) -> Failure {
    Failure::Runtime(e.to_string())
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = thread_pool().and_then(|pool| {
        pool.install(|| match cli.command {
            Command::Optimize { config } => optimize(&config),
            Command::Reconstruct { config, params, out } => reconstruct(&config, &params, out.as_deref()),
            Command::Evaluate {
                image,
                reference,
                eta,
                xi,
                gamma,
                data_range,
            } => evaluate(&image, reference.as_deref(), eta, xi, gamma, data_range),
            Command::ExportWeightmap { run_dir } => export_weightmap(&run_dir),
        })
    });
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message());
            f.code()
        }
    }
}

fn thread_pool() -> Result<rayon::ThreadPool, Failure> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| usage(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(runtime)
}

fn load_config(path: &Path) -> Result<RunConfig, Failure> {
    config::load(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| runtime(format!("cannot create {}: {e}", dir.display())))
}

fn data_range(truth: &Image2D) -> f64 {
    let r = truth.max() - truth.min();
    if r > 0.0 {
        r
    } else {
        1.0
    }
}

/// Records the PSNR of every reconstruction it scores.
struct PsnrTap<'a> {
    inner: ReconEvaluator<'a>,
    truth: &'a Image2D,
    range: f64,
    psnr: Mutex<HashMap<Position, f64>>,
}

impl Evaluator for PsnrTap<'_> {
    fn evaluate(&self, position: &Position) -> Result<FitnessReport, EvaluationError> {
        let params = self
            .inner
            .params(position)
            .map_err(|e| EvaluationError(e.to_string()))?;
        let (image, report) = self.inner.run(&params)?;
        if let Ok(p) = psnr(&image, self.truth, self.range) {
            self.psnr
                .lock()
                .expect("psnr map lock")
                .insert(position.clone(), p);
        }
        Ok(report)
    }
}

fn full_params(cfg: &RunConfig, position: &Position) -> Result<ReconParams, Failure> {
    ReconParams::from_position(&cfg.space, position, &cfg.scenario.base_params).map_err(runtime)
}

fn params_pairs(cfg: &RunConfig, params: &ReconParams) -> Vec<(String, f64)> {
    let mut names: Vec<&str> = ReconParams::names_for(cfg.scenario.algorithm).to_vec();
    if cfg.scenario.algorithm == crate::param_space::ReconAlgorithm::Piccs {
        names.push("rho");
    }
    names
        .into_iter()
        .map(|n| (n.to_string(), params.get(n).expect("known parameter")))
        .collect()
}

fn report_line(report: &FitnessReport, psnr: Option<f64>) -> String {
    let mut line = format!(
        "fitness={:.6} snr={:.6} hfer={:.6}",
        report.fitness, report.snr, report.hfer
    );
    if let Some(v) = report.laplacian_var {
        let _ = write!(line, " laplacian_var={v:.6}");
    }
    if let Some(p) = psnr {
        let _ = write!(line, " psnr={p:.6}");
    }
    line
}

fn evaluations_csv(cfg: &RunConfig, record: &RunRecord, psnr: &HashMap<Position, f64>) -> String {
    let names: Vec<&str> = cfg.space.specs().iter().map(|s| s.name()).collect();
    let mut out = format!(
        "iteration,crow,{},fitness,snr,hfer,inv_snr,hfer_deficit,psnr,penalized\n",
        names.join(",")
    );
    for e in &record.evaluations {
        let values: Vec<String> = e.position.values(&cfg.space).into_iter().map(io::fmt_value).collect();
        let p = psnr.get(&e.position).map_or("nan".to_string(), |v| format!("{v:.6}"));
        let _ = writeln!(
            out,
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{p},{}",
            e.iteration,
            e.crow,
            values.join(","),
            e.report.fitness,
            e.report.snr,
            e.report.hfer,
            e.report.objectives.inv_snr,
            e.report.objectives.hfer_deficit,
            e.penalized
        );
    }
    out
}

fn correlation_csv(record: &RunRecord, psnr: &HashMap<Position, f64>) -> String {
    let (fit, neg_psnr): (Vec<f64>, Vec<f64>) = record
        .evaluations
        .iter()
        .filter(|e| !e.penalized)
        .filter_map(|e| psnr.get(&e.position).filter(|p| p.is_finite()).map(|p| (e.report.fitness, -p)))
        .unzip();
    let r = pearson(&fit, &neg_psnr).map_or("nan".to_string(), |r| format!("{r:.6}"));
    format!(
        "# Pearson correlation between fitness and negated PSNR over all non-penalized evaluations;\n\
         # positive values mean lower fitness goes with higher PSNR.\n\
         metric,value\npearson_fitness_neg_psnr,{r}\nsamples,{}\n",
        fit.len()
    )
}

fn write_outputs(
    dir: &Path,
    cfg: &RunConfig,
    prepared: &Prepared,
    record: &RunRecord,
    psnr_map: &HashMap<Position, f64>,
) -> Result<(Image2D, ReconParams), Failure> {
    let w = |name: &str, text: &str| io::write_text(&dir.join(name), text).map_err(runtime);
    w("convergence.csv", &io::convergence_csv(record))?;
    w("evaluations.csv", &evaluations_csv(cfg, record, psnr_map))?;
    w("correlation.csv", &correlation_csv(record, psnr_map))?;

    let params = full_params(cfg, &record.best_position)?;
    let mut text = format!("# best fitness {:.6} after {} evaluations\n", record.best_fitness(), record.total_evaluations());
    text.push_str(&io::params_text(&params_pairs(cfg, &params)));
    w("best_params.txt", &text)?;

    let best = prepared.reconstruct(cfg.scenario.algorithm, &params).map_err(runtime)?;
    io::write_pgm(&dir.join("best_recon.pgm"), &best).map_err(runtime)?;
    io::write_image_csv(&dir.join("best_recon.csv"), &best).map_err(runtime)?;
    io::write_pgm(&dir.join("ground_truth.pgm"), &prepared.truth).map_err(runtime)?;
    io::write_sinogram_csv(&dir.join("sinogram.csv"), &prepared.sinogram).map_err(runtime)?;

    if let Some(map) = &record.weight_map {
        w("weightmap.csv", &io::weight_map_csv(&cfg.space, map))?;
        for (d, spec) in cfg.space.specs().iter().enumerate() {
            let values: Vec<f64> = (0..spec.count()).map(|k| spec.value_at(k)).collect();
            w(
                &format!("weightmap_{}.csv", spec.name()),
                &io::weight_dimension_csv(&values, map.dimension(d)),
            )?;
        }
    }
    Ok((best, params))
}

fn optimize(config_path: &Path) -> Result<(), Failure> {
    let start = Instant::now();
    let cfg = load_config(config_path)?;
    let prepared = cfg.scenario.prepare().map_err(runtime)?;
    let range = data_range(&prepared.truth);
    let tap = PsnrTap {
        inner: ReconEvaluator::new(&cfg.space, &prepared, &cfg.scenario),
        truth: &prepared.truth,
        range,
        psnr: Mutex::new(HashMap::new()),
    };
    let record = optimizer::run(&cfg.space, &tap, &cfg.optimizer, cfg.algorithm, cfg.init).map_err(runtime)?;
    let psnr_map = tap.psnr.into_inner().expect("psnr map lock");

    create_dir(&cfg.output_dir)?;
    let (best, _) = write_outputs(&cfg.output_dir, &cfg, &prepared, &record, &psnr_map)?;
    let best_psnr = psnr(&best, &prepared.truth, range).ok();
    let summary = format!(
        "{}: {} evaluations, {} wall_time_s={:.3}",
        cfg.name,
        record.total_evaluations(),
        report_line(&record.best_report, best_psnr),
        start.elapsed().as_secs_f64()
    );
    io::write_text(&cfg.output_dir.join("summary.txt"), &format!("{summary}\n")).map_err(runtime)?;
    println!("{summary}");
    println!("outputs written to {}", cfg.output_dir.display());
    Ok(())
}

fn reconstruct(config_path: &Path, params_path: &Path, out: Option<&Path>) -> Result<(), Failure> {
    let cfg = load_config(config_path)?;
    let entries = io::read_params(params_path).map_err(usage)?;
    let algorithm = cfg.scenario.algorithm;
    let required = ReconParams::names_for(algorithm);

    let mut params = cfg.scenario.base_params;
    let mut given = Vec::new();
    for (line, name, value) in entries {
        if !required.contains(&name.as_str()) && name != "rho" {
            return Err(usage(format!(
                "{}: line {line}: `{name}` is not a {algorithm} parameter",
                params_path.display()
            )));
        }
        let used = match cfg.space.spec(&name) {
            Some(spec) if spec.grid_index(value).is_err() => {
                let snapped = spec.snap_value(value);
                eprintln!(
                    "warning: {name} = {} is off the grid; using {}",
                    io::fmt_value(value),
                    io::fmt_value(snapped)
                );
                snapped
            }
            _ => value,
        };
        params.set(&name, used).map_err(usage)?;
        given.push(name);
    }
    if let Some(missing) = required.iter().find(|n| !given.iter().any(|g| g == *n)) {
        return Err(usage(format!(
            "{}: missing parameter `{missing}` required by {algorithm}",
            params_path.display()
        )));
    }

    let prepared = cfg.scenario.prepare().map_err(runtime)?;
    let image = prepared.reconstruct(algorithm, &params).map_err(runtime)?;
    let report = fitness::evaluate(std::slice::from_ref(&image), &cfg.scenario.fitness).map_err(runtime)?;
    let p = psnr(&image, &prepared.truth, data_range(&prepared.truth)).ok();

    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_dir.clone());
    create_dir(&dir)?;
    io::write_pgm(&dir.join("reconstruction.pgm"), &image).map_err(runtime)?;
    io::write_image_csv(&dir.join("reconstruction.csv"), &image).map_err(runtime)?;
    println!("{}", report_line(&report, p));
    Ok(())
}

fn evaluate(
    image_path: &Path,
    reference: Option<&Path>,
    eta: f64,
    xi: f64,
    gamma: f64,
    range: Option<f64>,
) -> Result<(), Failure> {
    let config = FitnessConfig::new(eta, xi, gamma).map_err(usage)?;
    let image = io::read_image(image_path).map_err(usage)?;
    let reference = reference.map(io::read_image).transpose().map_err(usage)?;
    let report = fitness::evaluate(std::slice::from_ref(&image), &config).map_err(runtime)?;
    println!("snr = {:.6}", report.snr);
    println!("hfer = {:.6}", report.hfer);
    if let Some(v) = report.laplacian_var {
        println!("laplacian_var = {v:.6}");
    }
    println!("fitness = {:.6}", report.fitness);
    if let Some(r) = reference {
        let range = range.unwrap_or_else(|| data_range(&r));
        let p = psnr(&image, &r, range).map_err(usage)?;
        println!("psnr = {p:.6}");
    }
    Ok(())
}

fn export_weightmap(run_dir: &Path) -> Result<(), Failure> {
    let combined = run_dir.join("weightmap.csv");
    let table = io::read_weight_map(&combined).map_err(usage)?;
    for (name, values, weights) in table {
        let path = run_dir.join(format!("weightmap_{name}.csv"));
        io::write_text(&path, &io::weight_dimension_csv(&values, &weights)).map_err(runtime)?;
        println!("{}", path.display());
    }
    Ok(())
}
