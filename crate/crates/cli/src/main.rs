//! `gmsfem`: configuration-driven multiscale runs.
//!
//! Exit codes: 0 success, 2 invalid input, 3 numerical failure, 1 I/O failure.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use gmsfem::analysis::{
    appendix_stability_sweep, convergence_study, measure_constants, run_kinds, spectra_tables, write_appendix,
    write_appendix_max, write_plot, write_rates, write_reports, write_spectra, Spectra,
};
use gmsfem::config::StudyConfig;
use gmsfem::fem::write_nodal;
use gmsfem::global::write_coefficients;
use gmsfem::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "gmsfem", version, about = "Multiscale solves and studies for high-contrast elliptic problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Study configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    verbose: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// First coarse size, every configured kind: solution dumps and error rows.
    Solve,
    /// Convergence study over all coarse sizes with rate fits.
    Study,
    /// Local eigenvalue tables across the configured contrasts.
    Spectra,
    /// Very-weak stability sweep across the configured contrasts.
    Appendix,
}

struct Ctx {
    cfg: StudyConfig,
    out: PathBuf,
    verbose: bool,
    start: Instant,
}

impl Ctx {
    fn log(&self, msg: &str) {
        if self.verbose {
            eprintln!("[{:8.2}s] {msg}", self.start.elapsed().as_secs_f64());
        }
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>> {
        let path = self.out.join(name);
        self.log(&format!("writing {}", path.display()));
        Ok(BufWriter::new(File::create(path)?))
    }
}

fn solve(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    let h = cfg.mesh.coarse_sizes[0];
    let setup = cfg.setup(h, cfg.coefficient.contrast)?;
    ctx.log(&format!("setup H={h}: {} fine nodes, {} neighborhoods", setup.mesh.fine.num_nodes(), setup.nbhds.len()));
    let consts = measure_constants(&setup)?;
    ctx.log(&format!("constants: C_poin max {:e}, C_poin(D) {:e}", consts.c_poin_max(), consts.c_poin_domain));
    let runs = run_kinds(&setup, &consts, &cfg.kinds()?, &cfg.budgets(), cfg.output.timing)?;
    write_nodal(ctx.create("solution_fine.csv")?, &setup.fine.solution)?;
    for r in &runs {
        ctx.log(&format!("{}: dim {}, energy error {:e}", r.report.kind, r.report.dim_space, r.report.energy_error));
        write_nodal(ctx.create(&format!("solution_{}.csv", r.report.kind))?, &r.solution.u)?;
        write_coefficients(ctx.create(&format!("coefficients_{}.csv", r.report.kind))?, &r.space, &r.solution)?;
    }
    let mut reports: Vec<_> = runs.into_iter().map(|r| r.report).collect();
    for (k, r) in reports.iter_mut().enumerate() {
        r.run_id = k;
    }
    write_reports(ctx.create("report.csv")?, &reports)
}

fn study(ctx: &Ctx) -> Result<()> {
    let study = convergence_study(&ctx.cfg)?;
    for r in &study.rates {
        ctx.log(&format!("{}: slope {:.3} over {} points", r.kind, r.slope, r.points));
    }
    write_reports(ctx.create("report.csv")?, &study.reports)?;
    write_rates(ctx.create("rates.csv")?, &study.rates)?;
    for kind in ctx.cfg.kinds()? {
        write_plot(ctx.create(&format!("plot_{kind}.dat"))?, &study.reports, kind)?;
    }
    Ok(())
}

fn spectra(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    let h = cfg.mesh.coarse_sizes[0];
    let mut all = Spectra::default();
    for &c in &cfg.spectra.contrasts {
        ctx.log(&format!("spectra at contrast {c:e}"));
        let setup = cfg.setup(h, c)?;
        let s = spectra_tables(&setup, cfg.spectra.count)?;
        all.s.extend(s.s);
        all.t.extend(s.t);
        all.h.extend(s.h);
    }
    write_spectra(ctx.create("spectra_S.csv")?, &all.s, "S")?;
    write_spectra(ctx.create("spectra_T.csv")?, &all.t, "T")?;
    write_spectra(ctx.create("spectra_H.csv")?, &all.h, "H")
}

fn appendix(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    let base = cfg.setup(cfg.mesh.coarse_sizes[0], cfg.coefficient.contrast)?;
    let nbhd = cfg.appendix_neighborhood(&base.mesh)?;
    ctx.log(&format!("sweep on neighborhood {nbhd}"));
    let a = &cfg.appendix;
    let (rows, summary) = appendix_stability_sweep(&base, nbhd, &a.contrasts, a.random_traces, a.frequencies, cfg.seed)?;
    for s in &summary {
        ctx.log(&format!("contrast {:e}: max ratio {:.6} ({})", s.contrast, s.max_ratio, s.argmax));
    }
    write_appendix(ctx.create("appendix.csv")?, &rows)?;
    write_appendix_max(ctx.create("appendix_max.csv")?, &summary)
}

fn run(cli: &Cli) -> Result<()> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| Error::Config("--config is required".into()))?;
    let cfg = StudyConfig::load(path)?;
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(Error::Config("--workers must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("--workers: {e}")))?;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| Path::new("out").to_path_buf());
    fs::create_dir_all(&out)?;
    let ctx = Ctx { cfg, out, verbose: cli.verbose, start: Instant::now() };
    match cli.command {
        Command::Solve => solve(&ctx),
        Command::Study => study(&ctx),
        Command::Spectra => spectra(&ctx),
        Command::Appendix => appendix(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Io(_) => 1,
                e if e.is_input() => 2,
                _ => 3,
            })
        }
    }
}
