use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use whitesr::admm::{irwp_admm_run, run_admm_iterations, solve_tik, AdmmOptions, AdmmState, MuRule, TruthReference};
use whitesr::cel0::{irwp_irl1_run, Irl1Options};
use whitesr::grid::{ImageGrid, KernelSpec, SpectralDiagonal};
use whitesr::io::{encode_pgm16, read_matrix_file, write_matrix_file, write_points, Metadata};
use whitesr::metrics::{bicubic_upsample, detect_points, dynamic_range, isnr, psnr, ssim_with_range};
use whitesr::operators::Decimator;
use whitesr::prox::{RegularizerKind, SmoothedGradientAlpha};
use whitesr::sim::{composed_otf, degrade, make_phantom, DegradationSpec, NoiseLevel, PhantomKind};
use whitesr::solver::{lowres_residual, SplitSpectrum};
use whitesr::whiteness::{log_grid, tau_star, whiteness_of_image, whiteness_of_mu};
use whitesr::{Error, ReconstructionReport};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "whitesr", version, about = "Super-resolution with residual-whiteness parameter selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a phantom and its degraded low-resolution observation.
    Simulate(SimulateArgs),
    /// Reconstruct from an observation directory.
    Solve(SolveArgs),
    /// Tabulate τ, whiteness and quality metrics over a μ grid.
    Sweep(SweepArgs),
    /// Metrics table for several models under both selection rules.
    Compare(CompareArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum PhantomChoice {
    Blocks,
    Geometric,
    Points,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    phantom: PhantomChoice,
    #[arg(long, default_value_t = 256)]
    size: usize,
    /// Cell side of the blocks phantom.
    #[arg(long, default_value_t = 16)]
    cell: usize,
    /// Number of shapes of the geometric phantom.
    #[arg(long, default_value_t = 8)]
    shapes: usize,
    /// Number of impulses of the points phantom.
    #[arg(long, default_value_t = 5)]
    points: usize,
    #[arg(long, default_value_t = 6.0)]
    min_separation: f64,
    #[arg(long, default_value = "gaussian:13:3")]
    kernel: String,
    /// Decimation factors `RxC` (or a single factor for both axes).
    #[arg(long, default_value = "4x4")]
    decimate: String,
    /// Compose a uniform blur over each low-resolution pixel.
    #[arg(long)]
    pixel_blur: bool,
    /// Noise standard deviation, or a percentage of the peak clean signal (`1%`).
    #[arg(long, default_value = "0.1")]
    noise: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Model {
    Tik,
    Tvi,
    Tva,
    Wtv,
    Wl1,
    Cel0,
}

impl Model {
    fn name(self) -> &'static str {
        match self {
            Model::Tik => "tik",
            Model::Tvi => "tvi",
            Model::Tva => "tva",
            Model::Wtv => "wtv",
            Model::Wl1 => "wl1",
            Model::Cel0 => "cel0",
        }
    }

    fn kind(self) -> RegularizerKind {
        match self {
            Model::Cel0 => RegularizerKind::Wl1Nonneg { weights: None, mode: Default::default() },
            m => m.name().parse().expect("model names are valid regulariser names"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Select {
    Rwp,
    Dp { tau: f64, sigma: f64 },
}

fn parse_select(s: &str) -> Result<Select, String> {
    if s == "rwp" {
        return Ok(Select::Rwp);
    }
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        ["dp", tau, sigma] => {
            let tau: f64 = tau.parse().map_err(|_| format!("bad tau in '{s}'"))?;
            let sigma: f64 = sigma.parse().map_err(|_| format!("bad sigma in '{s}'"))?;
            if !(tau > 0.0 && sigma > 0.0) {
                return Err("dp needs positive tau and sigma".into());
            }
            Ok(Select::Dp { tau, sigma })
        }
        _ => Err(format!("expected 'rwp' or 'dp:TAU:SIGMA', got '{s}'")),
    }
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long, value_enum)]
    model: Model,
    #[arg(long, value_parser = parse_select, default_value = "rwp")]
    select: Select,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also report PSNR/ISNR/SSIM against the stored ground truth.
    #[arg(long)]
    truth: bool,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_enum)]
    model: Model,
    /// `LO:HI:POINTS`, log-spaced.
    #[arg(long, default_value = "1e-4:1e4:100")]
    grid: String,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Comma-separated model list.
    #[arg(long, default_value = "tik,tvi,tva")]
    models: String,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
}

/// Files written so far; removed again if the command fails.
#[derive(Default)]
struct Outputs {
    files: Vec<PathBuf>,
    dirs: Vec<PathBuf>,
}

impl Outputs {
    fn dir(&mut self, path: &Path) -> whitesr::Result<()> {
        if !path.exists() {
            fs::create_dir_all(path)?;
            self.dirs.push(path.to_path_buf());
        }
        Ok(())
    }

    fn write(&mut self, path: PathBuf, bytes: impl AsRef<[u8]>) -> whitesr::Result<()> {
        self.files.push(path.clone());
        fs::write(path, bytes)?;
        Ok(())
    }

    fn matrix(&mut self, path: PathBuf, x: &ImageGrid) -> whitesr::Result<()> {
        self.files.push(path.clone());
        write_matrix_file(&path, x)
    }

    fn discard(self) {
        for f in self.files.iter().rev() {
            let _ = fs::remove_file(f);
        }
        for d in self.dirs.iter().rev() {
            let _ = fs::remove_dir(d);
        }
    }
}

fn kind_of(e: &Error) -> &'static str {
    match e {
        Error::Shape(_) => "shape",
        Error::InvalidParameter(_) => "invalid_parameter",
        Error::Degenerate(_) => "degenerate",
        Error::Unattainable { .. } => "unattainable",
        Error::Numerical(_) => "numerical",
        Error::Infeasible(_) => "infeasible",
        Error::Format(_) => "format",
        Error::Io(_) => "io",
    }
}

fn exit_code_of(e: &Error) -> u8 {
    match e {
        Error::Degenerate(_) | Error::Unattainable { .. } | Error::Numerical(_) | Error::Infeasible(_) => 3,
        _ => 2,
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("error: kind=usage msg={}", one_line(&e.to_string()));
            return ExitCode::from(2);
        }
    };
    if let Some(n) = std::env::var("WHITESR_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let mut outputs = Outputs::default();
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a, &mut outputs),
        Command::Solve(a) => solve(a, &mut outputs),
        Command::Sweep(a) => sweep(a, &mut outputs),
        Command::Compare(a) => compare(a, &mut outputs),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            outputs.discard();
            eprintln!("error: kind={} msg={}", kind_of(&e), one_line(&e.to_string()));
            ExitCode::from(exit_code_of(&e))
        }
    }
}

fn parse_factors(s: &str) -> whitesr::Result<(usize, usize)> {
    let bad = || Error::InvalidParameter(format!("bad decimation '{s}', expected RxC"));
    let (r, c) = match s.split_once(['x', 'X']) {
        Some((r, c)) => (r, c),
        None => (s, s),
    };
    Ok((r.trim().parse().map_err(|_| bad())?, c.trim().parse().map_err(|_| bad())?))
}

fn simulate(a: &SimulateArgs, out: &mut Outputs) -> whitesr::Result<()> {
    let kernel: KernelSpec = a.kernel.parse()?;
    let (dr, dc) = parse_factors(&a.decimate)?;
    let noise: NoiseLevel = a.noise.parse()?;
    let kind = match a.phantom {
        PhantomChoice::Blocks => PhantomKind::Blocks { cell: a.cell },
        PhantomChoice::Geometric => PhantomKind::Geometric { shapes: a.shapes },
        PhantomChoice::Points => PhantomKind::Points { count: a.points, min_separation: a.min_separation },
    };
    let phantom = make_phantom(kind, a.size, a.size, a.seed)?;
    let spec = DegradationSpec { kernel: kernel.clone(), pixel_blur: a.pixel_blur, dr, dc, noise, seed: a.seed };
    let deg = degrade(&phantom.image, &spec)?;

    let mut meta = Metadata::new();
    meta.set("version", VERSION);
    meta.set("phantom", format!("{kind:?}"));
    meta.set("rows", a.size);
    meta.set("cols", a.size);
    meta.set("kernel", kernel);
    meta.set("pixel_blur", a.pixel_blur);
    meta.set("dr", dr);
    meta.set("dc", dc);
    meta.set("noise", noise);
    meta.set("sigma", format!("{:.16e}", deg.sigma));
    meta.set("seed", a.seed);

    out.dir(&a.out)?;
    out.matrix(a.out.join("x.txt"), &phantom.image)?;
    out.matrix(a.out.join("b.txt"), &deg.b)?;
    out.write(a.out.join("x.pgm"), encode_pgm16(&phantom.image))?;
    out.write(a.out.join("b.pgm"), encode_pgm16(&deg.b))?;
    if matches!(a.phantom, PhantomChoice::Points) {
        let mut buf = Vec::new();
        let pts: Vec<_> = phantom.points.iter().map(|&(r, c)| (r, c, phantom.image.get(r, c))).collect();
        write_points(&mut buf, &pts)?;
        out.write(a.out.join("points.csv"), buf)?;
    }
    out.write(a.out.join("meta.txt"), meta.to_text())
}

/// Observation and forward model; never touches the noise level.
struct Problem {
    b: ImageGrid,
    otf: SpectralDiagonal,
    dec: Decimator,
    meta: Metadata,
    dir: PathBuf,
}

impl Problem {
    fn load(dir: &Path) -> whitesr::Result<Self> {
        let meta = Metadata::parse(&fs::read_to_string(dir.join("meta.txt"))?)?;
        let b = read_matrix_file(&dir.join("b.txt"))?;
        let kernel: KernelSpec = meta.parse_value("kernel")?;
        let pixel_blur: bool = meta.parse_value("pixel_blur")?;
        let (dr, dc): (usize, usize) = (meta.parse_value("dr")?, meta.parse_value("dc")?);
        let (rows, cols) = (b.rows() * dr, b.cols() * dc);
        let dec = Decimator::new(rows, cols, dr, dc)?;
        let otf = composed_otf(&kernel, pixel_blur, dr, dc, rows, cols)?;
        Ok(Self { b, otf, dec, meta, dir: dir.to_path_buf() })
    }

    fn sigma(&self) -> whitesr::Result<f64> {
        self.meta.parse_value("sigma")
    }

    fn truth(&self) -> whitesr::Result<TruthReference> {
        let truth = read_matrix_file(&self.dir.join("x.txt"))?;
        let (dr, dc) = self.dec.factors();
        let baseline = bicubic_upsample(&self.b, dr, dc)?;
        let range = dynamic_range(&truth);
        Ok(TruthReference { truth, baseline, range })
    }
}

fn admm_options(s: &SolverArgs, select: Select) -> AdmmOptions {
    let (rule, sigma) = match select {
        Select::Rwp => (MuRule::Whiteness, None),
        Select::Dp { tau, sigma } => (MuRule::Discrepancy { sigma, tau }, Some(sigma)),
    };
    AdmmOptions { beta: s.beta, tol: s.tol, max_iter: s.max_iter, rule, sigma, ..AdmmOptions::default() }
}

struct Solution {
    report: ReconstructionReport,
    points: Option<Vec<(usize, usize, f64)>>,
}

fn run_model(p: &Problem, model: Model, opts: &AdmmOptions) -> whitesr::Result<Solution> {
    if model == Model::Cel0 {
        let irl1 = Irl1Options { admm: opts.clone(), ..Irl1Options::default() };
        let out = irwp_irl1_run(&p.b, &p.otf, &p.dec, &irl1)?;
        let points = detect_points(&out.report.x_star);
        return Ok(Solution { report: out.report, points: Some(points) });
    }
    let report = irwp_admm_run(&p.b, &p.otf, &p.dec, &model.kind(), opts)?;
    Ok(Solution { report, points: None })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".into(), |v| format!("{v:.16e}"))
}

fn solve(a: &SolveArgs, out: &mut Outputs) -> whitesr::Result<()> {
    let p = Problem::load(&a.input)?;
    let mut opts = admm_options(&a.solver, a.select);
    let truth = if a.truth { Some(p.truth()?) } else { None };
    opts.truth = truth.clone();
    let sol = run_model(&p, a.model, &opts)?;
    let r = &sol.report;

    let mut report = Metadata::new();
    report.set("version", VERSION);
    report.set("model", a.model.name());
    report.set("select", match a.select {
        Select::Rwp => "rwp".to_string(),
        Select::Dp { tau, sigma } => format!("dp:{tau}:{sigma}"),
    });
    report.set("mu_star", format!("{:.16e}", r.mu_star));
    report.set("tau_star", fmt_opt(r.tau_star));
    report.set("residual_norm", format!("{:.16e}", r.residual_norm));
    report.set("whiteness", format!("{:.16e}", r.whiteness));
    report.set("iterations", r.iterations);
    report.set("converged", r.converged);
    report.set("boundary_hit", r.boundary_hit);
    report.set("beta", fmt_opt(Some(r.beta).filter(|b| b.is_finite())));
    report.set("tol", a.solver.tol);
    if let Some(t) = &truth {
        report.set("psnr", format!("{:.16e}", psnr(&t.truth, &r.x_star)?));
        report.set("isnr", format!("{:.16e}", isnr(&t.truth, &r.x_star, &t.baseline)?));
        report.set("ssim", format!("{:.16e}", ssim_with_range(&t.truth, &r.x_star, t.range)?));
    }

    out.dir(&a.out)?;
    out.matrix(a.out.join("x.txt"), &r.x_star)?;
    out.write(a.out.join("x.pgm"), encode_pgm16(&r.x_star))?;
    let mut traces = Vec::new();
    r.traces.write_csv(&mut traces)?;
    out.write(a.out.join("traces.csv"), traces)?;
    if let Some(points) = &sol.points {
        let mut buf = Vec::new();
        write_points(&mut buf, points)?;
        out.write(a.out.join("points.csv"), buf)?;
    }
    out.write(a.out.join("report.txt"), report.to_text())
}

fn parse_grid(s: &str) -> whitesr::Result<Vec<f64>> {
    let bad = || Error::InvalidParameter(format!("bad grid '{s}', expected LO:HI:POINTS"));
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, n] = parts.as_slice() else { return Err(bad()) };
    let (lo, hi): (f64, f64) = (lo.parse().map_err(|_| bad())?, hi.parse().map_err(|_| bad())?);
    let n: usize = n.parse().map_err(|_| bad())?;
    if !(lo > 0.0 && hi > lo && hi.is_finite() && n >= 2) {
        return Err(bad());
    }
    Ok(log_grid(lo, hi, n))
}

struct SweepRow {
    mu: f64,
    tau: f64,
    w: f64,
    isnr: f64,
    ssim: f64,
}

fn sweep(a: &SweepArgs, out: &mut Outputs) -> whitesr::Result<()> {
    if a.model == Model::Cel0 {
        return Err(Error::InvalidParameter("sweep supports tik, tvi, tva, wtv and wl1".into()));
    }
    let mus = parse_grid(&a.grid)?;
    let p = Problem::load(&a.input)?;
    let sigma = p.sigma()?;
    let truth = p.truth()?;
    let n = p.b.len();
    let base = admm_options(&a.solver, Select::Rwp);
    let (tik, ctx) = solve_tik(&p.b, &p.otf, &p.dec, &base)?;

    let row = |mu: f64| -> whitesr::Result<SweepRow> {
        let x = if a.model == Model::Tik {
            ctx.cache.solve(&SplitSpectrum::zero(&ctx.cache), mu)?
        } else {
            let opts = AdmmOptions { rule: MuRule::Fixed(mu), ..base.clone() };
            let kind = a.model.kind();
            let run_ctx = match kind.operator_shape() {
                whitesr::RegularizerShape::Gradient => ctx.clone(),
                shape => whitesr::AdmmContext::new(&p.b, &p.otf, &p.dec, shape, opts.epsilon)?,
            };
            let mut state = AdmmState::from_iterate(&run_ctx, tik.x_star.clone(), mu, whitesr::penalty_for(&opts, mu))?;
            run_admm_iterations(&mut state, &run_ctx, &kind, &opts, &mut SmoothedGradientAlpha::default())?;
            state.x
        };
        let residual = lowres_residual(&x, &p.otf, &p.dec, &p.b)?;
        let w = if a.model == Model::Tik {
            whiteness_of_mu(&ctx.cache, &SplitSpectrum::zero(&ctx.cache).nu, mu)?
        } else {
            whiteness_of_image(&residual)?
        };
        Ok(SweepRow {
            mu,
            tau: tau_star(residual.norm(), n, sigma)?,
            w,
            isnr: isnr(&truth.truth, &x, &truth.baseline)?,
            ssim: ssim_with_range(&truth.truth, &x, truth.range)?,
        })
    };
    let rows = mus.par_iter().map(|&mu| row(mu)).collect::<whitesr::Result<Vec<_>>>()?;

    let mut csv = String::from("mu,tau,W,isnr,ssim\n");
    for r in rows {
        csv.push_str(&format!("{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n", r.mu, r.tau, r.w, r.isnr, r.ssim));
    }
    if let Some(parent) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        out.dir(parent)?;
    }
    out.write(a.out.clone(), csv)
}

fn compare(a: &CompareArgs, out: &mut Outputs) -> whitesr::Result<()> {
    let models = a
        .models
        .split(',')
        .map(|m| {
            Model::from_str(m.trim(), true).map_err(|_| Error::InvalidParameter(format!("unknown model '{m}'")))
        })
        .collect::<whitesr::Result<Vec<_>>>()?;
    let p = Problem::load(&a.input)?;
    let sigma = p.sigma()?;
    let truth = p.truth()?;
    let runs: Vec<(Model, Select)> = models
        .iter()
        .flat_map(|&m| [(m, Select::Rwp), (m, Select::Dp { tau: 1.0, sigma })])
        .collect();
    let rows = runs
        .par_iter()
        .map(|&(model, select)| -> whitesr::Result<String> {
            let mut opts = admm_options(&a.solver, select);
            opts.sigma = Some(sigma);
            let r = run_model(&p, model, &opts)?.report;
            Ok(format!(
                "{},{},{:.16e},{},{:.16e},{:.16e},{:.16e},{}\n",
                model.name(),
                if select == Select::Rwp { "rwp" } else { "dp" },
                r.mu_star,
                fmt_opt(r.tau_star),
                psnr(&truth.truth, &r.x_star)?,
                isnr(&truth.truth, &r.x_star, &truth.baseline)?,
                ssim_with_range(&truth.truth, &r.x_star, truth.range)?,
                r.iterations,
            ))
        })
        .collect::<whitesr::Result<Vec<_>>>()?;
    let (dr, dc) = p.dec.factors();
    let bicubic = bicubic_upsample(&p.b, dr, dc)?;
    let mut csv = String::from("model,select,mu,tau,psnr,isnr,ssim,iterations\n");
    csv.push_str(&format!(
        "bicubic,none,nan,nan,{:.16e},{:.16e},{:.16e},0\n",
        psnr(&truth.truth, &bicubic)?,
        0.0,
        ssim_with_range(&truth.truth, &bicubic, truth.range)?
    ));
    csv.extend(rows);
    if let Some(parent) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        out.dir(parent)?;
    }
    out.write(a.out.clone(), csv)
}
