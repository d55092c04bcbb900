use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use sparse_pce::crossval::cross_validate_delta;
use sparse_pce::crossval::final_recovery;
use sparse_pce::experiments::{
    run_coherence_table, run_external_recovery, run_phase_diagram, run_surface_reaction_study, surface_reference,
    BootstrapReport,
};
use sparse_pce::model_problems::{
    load_external_samples, manufacture_signal, read_reference_csv, surface_reaction_values, write_reference_csv,
};
use sparse_pce::sampler::sample;
use sparse_pce::{coherence::write_coherence_table, BasisSpec};

mod config;

use config::{CoherenceFile, CrossvalFile, ExternalFile, PhaseFile, Qoi, SampleExportFile, SurfaceFile};

/// Exit status when the run finished but some replications failed.
const EXIT_INCOMPLETE: u8 = 3;

#[derive(Parser)]
#[command(name = "sparse-pce", version, about = "Sparse polynomial chaos recovery experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Empirical coherence against the closed-form bounds.
    Coherence(Common),
    /// Recovery success over the (N/P, s/N) grid.
    PhaseDiagram(Common),
    /// Cross-validated recovery of the surface-coverage expansion.
    SurfaceReaction(Common),
    /// Recovery from a pool of samples computed elsewhere.
    RecoverExternal(Common),
    /// Cross-validation error curve for one sample set.
    CrossvalCurve(Common),
    /// Draw a sample batch, optionally with QoI values, and write it as CSV.
    SampleExport(Common),
}

#[derive(Args)]
struct Common {
    /// TOML config file.
    config: PathBuf,
    /// Overrides the seed of the config file.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    threads: Option<usize>,
}

/// Shared state of one invocation: where artifacts go and what identifies them.
struct Run {
    command: &'static str,
    out_dir: PathBuf,
    config_path: PathBuf,
    config_hash: String,
    seed: u64,
    artifacts: Vec<String>,
}

impl Run {
    fn new<C: Serialize>(command: &'static str, common: &Common, config: &C, seed: u64) -> Result<Self> {
        let canonical = serde_json::to_string(config)?;
        let config_hash = format!("{:x}", Sha256::digest(canonical.as_bytes()));
        std::fs::create_dir_all(&common.out_dir).with_context(|| format!("creating {}", common.out_dir.display()))?;
        Ok(Run {
            command,
            out_dir: common.out_dir.clone(),
            config_path: common.config.clone(),
            config_hash,
            seed,
            artifacts: Vec::new(),
        })
    }

    fn preamble(&self) -> Vec<String> {
        vec![
            format!("config_hash: {}", self.config_hash),
            format!("seed: {}", self.seed),
        ]
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.out_dir.join(name);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        self.artifacts.push(name.to_string());
        Ok(BufWriter::new(file))
    }

    /// Artifact starting with `# config_hash` and `# seed` lines.
    fn create_tagged(&mut self, name: &str) -> Result<BufWriter<File>> {
        let mut w = self.create(name)?;
        for line in self.preamble() {
            writeln!(w, "# {line}")?;
        }
        Ok(w)
    }

    fn finish<C: Serialize>(
        mut self,
        config: &C,
        complete: bool,
        errors: &[String],
        summary: serde_json::Value,
    ) -> Result<ExitCode> {
        self.artifacts.push("manifest.json".into());
        let manifest = json!({
            "command": self.command,
            "version": env!("CARGO_PKG_VERSION"),
            "config_path": self.config_path,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "config": config,
            "complete": complete,
            "errors": errors,
            "artifacts": self.artifacts,
            "summary": summary,
        });
        let path = self.out_dir.join("manifest.json");
        let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
        serde_json::to_writer_pretty(&mut w, &manifest)?;
        writeln!(w)?;
        w.flush()?;
        if !complete {
            eprintln!("{} replication(s) failed; see {}", errors.len(), path.display());
            return Ok(ExitCode::from(EXIT_INCOMPLETE));
        }
        Ok(ExitCode::SUCCESS)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    let common = match &command {
        Command::Coherence(c)
        | Command::PhaseDiagram(c)
        | Command::SurfaceReaction(c)
        | Command::RecoverExternal(c)
        | Command::CrossvalCurve(c)
        | Command::SampleExport(c) => c,
    };
    if let Some(n) = common.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match &command {
        Command::Coherence(c) => coherence(c),
        Command::PhaseDiagram(c) => phase_diagram(c),
        Command::SurfaceReaction(c) => surface_reaction(c),
        Command::RecoverExternal(c) => recover_external(c),
        Command::CrossvalCurve(c) => crossval_curve(c),
        Command::SampleExport(c) => sample_export(c),
    }
}

fn coherence(common: &Common) -> Result<ExitCode> {
    let mut file: CoherenceFile = config::load(&common.config)?;
    file.seed = common.seed.unwrap_or(file.seed);
    let mut run = Run::new("coherence", common, &file, file.seed)?;
    let rows = run_coherence_table(&file.to_config())?;
    let mut w = run.create_tagged("coherence.csv")?;
    write_coherence_table(&mut w, &rows)?;
    w.flush()?;
    for (est, bound) in &rows {
        let bound = bound.map(|b| format!("{:.4}", b.value)).unwrap_or_else(|| "-".into());
        println!(
            "{} d={} p={} {:<18} mu={:.4} bound={bound}",
            est.family,
            est.dim,
            est.order,
            est.strategy.to_string(),
            est.mu_hat
        );
    }
    let summary = json!(rows
        .iter()
        .map(|(e, b)| json!({
            "d": e.dim, "p": e.order, "strategy": e.strategy.kind, "mu_hat": e.mu_hat, "bound": b.map(|b| b.value),
        }))
        .collect::<Vec<_>>());
    run.finish(&file, true, &[], summary)
}

fn phase_diagram(common: &Common) -> Result<ExitCode> {
    let mut file: PhaseFile = config::load(&common.config)?;
    file.seed = common.seed.unwrap_or(file.seed);
    let mut run = Run::new("phase-diagram", common, &file, file.seed)?;
    let cfg = file.to_config();
    let pd = run_phase_diagram(&cfg)?;
    // The diagram writer already records the seed.
    let preamble = vec![format!("config_hash: {}", run.config_hash)];
    let band = pd.transition_band();
    let mut summary = Vec::new();
    for (k, strategy) in cfg.strategies.iter().enumerate() {
        let mut w = run.create(&format!("phase_{}.csv", strategy.kind))?;
        pd.write_csv(k, &mut w, &preamble)?;
        w.flush()?;
        let area = pd.area_under_success(k);
        let band_mean = pd.mean_over(k, &band);
        println!(
            "{:<18} area={area:.4} band_mean={band_mean:.4} unconverged={}",
            strategy.to_string(),
            pd.unconverged[k]
        );
        summary.push(json!({
            "strategy": strategy.kind,
            "area_under_success": area,
            "transition_band_mean": band_mean,
            "unconverged_solves": pd.unconverged[k],
            "failed_replications": pd.failed_replications[k],
        }));
    }
    let summary = json!({ "transition_band_cells": band.len(), "strategies": summary });
    run.finish(&file, pd.complete(), &pd.errors, summary)
}

fn print_report(report: &BootstrapReport) {
    for e in &report.entries {
        println!(
            "{:<18} N={:<5} error={:.4e} ± {:.2e}  delta*={:.3e}  completed {}/{}",
            e.strategy.to_string(),
            e.n,
            e.error.mean,
            e.error.std,
            e.delta_star.mean,
            e.completed,
            e.replications
        );
    }
}

fn report_errors(report: &BootstrapReport) -> Vec<String> {
    report
        .entries
        .iter()
        .flat_map(|e| e.failures.iter().map(move |f| format!("{} N={}: {f}", e.strategy, e.n)))
        .collect()
}

fn surface_reaction(common: &Common) -> Result<ExitCode> {
    let mut file: SurfaceFile = config::load(&common.config)?;
    file.seed = common.seed.unwrap_or(file.seed);
    let mut run = Run::new("surface-reaction", common, &file, file.seed)?;
    let cfg = file.to_config();
    let spec = cfg.spec()?;
    let (reference, quadrature) = match &file.reference {
        Some(path) => {
            let path = config::resolve(&common.config, path);
            (
                read_reference_csv(&path, &spec).with_context(|| format!("reading {}", path.display()))?,
                None,
            )
        }
        None => {
            let r = surface_reference(&cfg)?;
            (
                r.coefficients,
                Some(json!({ "nodes": r.nodes, "last_change": r.last_change })),
            )
        }
    };
    let mut w = run.create_tagged("reference.csv")?;
    write_reference_csv(&mut w, &spec, &reference)?;
    w.flush()?;
    let report = run_surface_reaction_study(&cfg, &reference)?;
    let mut w = run.create("report.csv")?;
    report.write_csv(&mut w, &run.preamble())?;
    w.flush()?;
    print_report(&report);
    let errors = report_errors(&report);
    let summary = json!({ "reference_quadrature": quadrature, "report": report });
    run.finish(&file, report.complete(), &errors, summary)
}

fn recover_external(common: &Common) -> Result<ExitCode> {
    let mut file: ExternalFile = config::load(&common.config)?;
    file.seed = common.seed.unwrap_or(file.seed);
    let mut run = Run::new("recover-external", common, &file, file.seed)?;
    let samples = config::resolve(&common.config, &file.samples);
    let pool = load_external_samples(&samples).with_context(|| format!("reading {}", samples.display()))?;
    let cfg = file.to_config(&pool)?;
    let truth = match &file.truth {
        Some(path) => {
            let spec = BasisSpec::new(cfg.family, cfg.dim, cfg.order)?;
            let path = config::resolve(&common.config, path);
            Some(read_reference_csv(&path, &spec).with_context(|| format!("reading {}", path.display()))?)
        }
        None => None,
    };
    let report = run_external_recovery(&pool, &cfg, truth.as_deref())?;
    let mut w = run.create("report.csv")?;
    report.write_csv(&mut w, &run.preamble())?;
    w.flush()?;
    print_report(&report);
    let errors = report_errors(&report);
    let summary = json!({ "pool_rows": pool.len(), "report": report });
    run.finish(&file, report.complete(), &errors, summary)
}

fn crossval_curve(common: &Common) -> Result<ExitCode> {
    let mut file: CrossvalFile = config::load(&common.config)?;
    file.seed = common.seed.unwrap_or(file.seed);
    let mut run = Run::new("crossval-curve", common, &file, file.seed)?;
    let (batch, u) = match &file.samples {
        Some(path) => {
            let path = config::resolve(&common.config, path);
            let pool = load_external_samples(&path).with_context(|| format!("reading {}", path.display()))?;
            let strategy = file.strategy_for(&pool)?;
            let spec = file.spec_for(&pool)?;
            let batch = pool.to_batch(&spec, &strategy)?;
            (batch, pool.values)
        }
        None => {
            let spec = file.spec()?;
            let batch = sample(&file.strategy(), &spec, file.n, file.seed)?;
            let u = qoi_values(&mut run, &file.qoi, file.sparsity, &file.reaction, &batch)?;
            (batch, u)
        }
    };
    let cv = cross_validate_delta(&batch, &u, &file.solver, file.seed)?;
    let mut w = run.create_tagged("crossval_curve.csv")?;
    cv.write_curve_csv(&mut w)?;
    w.flush()?;
    let rec = final_recovery(&batch, &u, cv.delta_star, &file.solver)?;
    let mut w = run.create_tagged("coefficients.csv")?;
    write_reference_csv(&mut w, &batch.spec, &rec.coefficients)?;
    w.flush()?;
    println!(
        "delta0={:e} delta*={:e} residual={:e}",
        cv.chosen_delta0, cv.delta_star, rec.residual_norm
    );
    let summary = json!({
        "n": batch.len(),
        "delta0": cv.chosen_delta0,
        "delta_star": cv.delta_star,
        "residual_norm": rec.residual_norm,
        "l1_norm": rec.l1_norm,
        "converged": rec.converged,
    });
    run.finish(&file, true, &[], summary)
}

/// QoI values for a freshly drawn batch; a manufactured signal's coefficients
/// are written next to the samples.
fn qoi_values(
    run: &mut Run,
    qoi: &Qoi,
    sparsity: usize,
    reaction: &sparse_pce::model_problems::SurfaceReactionConfig,
    batch: &sparse_pce::SampleBatch,
) -> Result<Vec<f64>> {
    Ok(match qoi {
        Qoi::None => bail!("a QoI is needed here; set `qoi` to `surface_reaction` or `manufactured`"),
        Qoi::SurfaceReaction => surface_reaction_values(batch, reaction)?,
        Qoi::Manufactured => {
            let signal = manufacture_signal(&batch.spec, sparsity, run.seed.wrapping_add(1))?;
            let mut w = run.create_tagged("signal.csv")?;
            write_reference_csv(&mut w, &batch.spec, &signal.coefficients)?;
            w.flush()?;
            signal.values_at(batch)?
        }
    })
}

fn sample_export(common: &Common) -> Result<ExitCode> {
    let mut file: SampleExportFile = config::load(&common.config)?;
    file.seed = common.seed.unwrap_or(file.seed);
    let mut run = Run::new("sample-export", common, &file, file.seed)?;
    let spec = file.spec()?;
    let batch = sample(&file.strategy(), &spec, file.n, file.seed)?;
    let values = match file.qoi {
        Qoi::None => None,
        ref q => Some(qoi_values(&mut run, q, file.sparsity, &file.reaction, &batch)?),
    };
    let mut w = run.create_tagged("samples.csv")?;
    batch.write_csv(&mut w, values.as_deref())?;
    w.flush()?;
    let summary = json!({
        "n": batch.len(),
        "normalization": batch.normalization,
        "acceptance_rate": batch.acceptance_rate,
    });
    run.finish(&file, true, &[], summary)
}
