//! Command-line front end: flat key=value config ingestion, study execution,
//! CSV emission, and the paper-suite acceptance matrix.

use crate::cases::{all_cases, case_by_name, BcKind, VerificationCase};
use crate::error::VpError;
use crate::forcing::Kernel;
use crate::indicator::{IndicatorConfig, IndicatorKind};
use crate::solver::{Preconditioner, SolveConfig};
use crate::verify::{
    default_study, run_convergence_study, ApproachSel, ConvergenceReport, LevelSolution,
    StudyConfig,
};
use clap::{Parser, Subcommand};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "vpflux", version, about = "Flux-based volume-penalization elliptic solver")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one convergence study from a config file.
    Run {
        /// Flat key=value config file.
        #[arg(long)]
        config: PathBuf,
        /// Output directory for results.csv, fit.csv, and field dumps.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Concurrent grid levels.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Dump per-cell fields for every grid level.
        #[arg(long)]
        emit_fields: bool,
    },
    /// List the case catalog.
    List,
    /// Run the full verification matrix at desk scale.
    PaperSuite {
        #[arg(long, default_value = "paper-suite-out")]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

/// Parsed study request.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub case: String,
    pub approach: ApproachSel,
    pub indicator: IndicatorConfig,
    pub n_prop: usize,
    pub eta: f64,
    pub grids: Option<Vec<usize>>,
    pub rel_tol: f64,
    pub restart: Option<usize>,
    pub max_outer: usize,
    pub preconditioner: Preconditioner,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            case: String::new(),
            approach: ApproachSel::B,
            indicator: IndicatorConfig::default(),
            n_prop: 2,
            eta: 1e-8,
            grids: None,
            rel_tol: 1e-12,
            restart: None,
            max_outer: 200,
            preconditioner: Preconditioner::Multigrid,
        }
    }
}

/// Parses the flat key=value config format (one pair per line, `#` comments).
pub fn parse_config(text: &str) -> Result<RunConfig, VpError> {
    let mut cfg = RunConfig::default();
    let mut kernel = Kernel::TopHat;
    let mut approach_key: Option<String> = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            VpError::Config(format!("line {}: expected key=value, got {raw:?}", lineno + 1))
        })?;
        let (key, value) = (key.trim(), value.trim());
        let bad = |what: &str| VpError::Config(format!("line {}: invalid {what}: {value}", lineno + 1));
        match key {
            "case" => cfg.case = value.to_string(),
            "approach" | "forcing.approach" => approach_key = Some(value.to_string()),
            "kernel" | "forcing.kernel" => {
                kernel = match value {
                    "top_hat" => Kernel::TopHat,
                    "spline6" => Kernel::Spline6,
                    _ => return Err(bad("kernel")),
                }
            }
            "n_prop" | "forcing.n_prop" => cfg.n_prop = value.parse().map_err(|_| bad("n_prop"))?,
            "indicator.kind" => {
                cfg.indicator.kind = match value {
                    "continuous" => IndicatorKind::Continuous,
                    "discontinuous" => IndicatorKind::Discontinuous,
                    _ => return Err(bad("indicator.kind")),
                }
            }
            "indicator.n_smear" => {
                cfg.indicator.n_smear = value.parse().map_err(|_| bad("indicator.n_smear"))?
            }
            "eta" => cfg.eta = value.parse().map_err(|_| bad("eta"))?,
            "grids" => {
                let g: Result<Vec<usize>, _> = value.split(',').map(|v| v.trim().parse()).collect();
                cfg.grids = Some(g.map_err(|_| bad("grids"))?);
            }
            "solver.rel_tol" => cfg.rel_tol = value.parse().map_err(|_| bad("solver.rel_tol"))?,
            "solver.restart" => {
                cfg.restart = Some(value.parse().map_err(|_| bad("solver.restart"))?)
            }
            "solver.max_outer" => {
                cfg.max_outer = value.parse().map_err(|_| bad("solver.max_outer"))?
            }
            "solver.preconditioner" => {
                cfg.preconditioner = match value {
                    "none" => Preconditioner::None,
                    "point-jacobi" | "jacobi" => Preconditioner::PointJacobi,
                    "multigrid" | "mg" => Preconditioner::Multigrid,
                    _ => return Err(bad("solver.preconditioner")),
                }
            }
            _ => return Err(VpError::Config(format!("line {}: unknown key: {key}", lineno + 1))),
        }
    }
    if cfg.case.is_empty() {
        return Err(VpError::Config("config must set case=<name>".into()));
    }
    if let Some(a) = approach_key {
        cfg.approach = match a.as_str() {
            "A" | "a" => ApproachSel::A,
            "B" | "b" => ApproachSel::B,
            "C" | "c" => ApproachSel::C,
            "D" | "d" => ApproachSel::D(kernel),
            _ => return Err(VpError::Config(format!("invalid approach: {a}"))),
        };
    }
    Ok(cfg)
}

/// Materializes a study from a parsed config and the case catalog.
pub fn study_from_config(cfg: &RunConfig) -> Result<(VerificationCase, StudyConfig), VpError> {
    let case = case_by_name(&cfg.case)?;
    let mut study = default_study(&case, cfg.approach);
    study.indicator = cfg.indicator;
    study.n_prop = cfg.n_prop;
    study.eta = cfg.eta;
    if let Some(g) = &cfg.grids {
        study.grids = g.clone();
    }
    study.solve = SolveConfig {
        rel_tol: cfg.rel_tol,
        restart: cfg.restart.unwrap_or(study.solve.restart),
        max_outer: cfg.max_outer,
        preconditioner: cfg.preconditioner,
    };
    Ok((case, study))
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

fn indicator_name(i: &IndicatorConfig) -> &'static str {
    match i.kind {
        IndicatorKind::Continuous => "continuous",
        IndicatorKind::Discontinuous => "discontinuous",
    }
}

/// Serializes results.csv content for one study.
pub fn results_csv(report: &ConvergenceReport, cfg: &StudyConfig) -> String {
    let mut out = String::from(
        "case,approach,indicator,n_smear,n_prop,eta,N,h,e1,einf,order_e1,order_einf,iterations,residual,wall_ms\n",
    );
    for r in &report.records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            report.case,
            report.approach.label(),
            indicator_name(&report.indicator),
            fmt(cfg.indicator.n_smear),
            cfg.n_prop,
            fmt(cfg.eta),
            r.n,
            fmt(r.h),
            fmt(r.e1),
            fmt(r.einf),
            fmt_opt(r.order_e1),
            fmt_opt(r.order_einf),
            r.iterations,
            fmt(r.residual),
            fmt(r.wall_ms),
        );
    }
    out
}

/// Serializes fit.csv content for one study.
pub fn fit_csv(report: &ConvergenceReport) -> String {
    let mut out = String::from("case,approach,indicator,norm,slope_m,r_squared\n");
    for (norm, fit) in [("e1", &report.fit_e1), ("einf", &report.fit_einf)] {
        if let Some(f) = fit {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                report.case,
                report.approach.label(),
                indicator_name(&report.indicator),
                norm,
                fmt(f.m),
                fmt(f.r2),
            );
        }
    }
    out
}

/// Serializes one per-cell field dump: x, y[, z], q, q_exact, phi, chi.
pub fn field_dump(sol: &LevelSolution, dim: usize) -> String {
    let g = sol.grid;
    let mut out = String::new();
    if dim == 3 {
        out.push_str("# x y z q q_exact phi chi\n");
    } else {
        out.push_str("# x y q q_exact phi chi\n");
    }
    for i in 0..g.n {
        for j in 0..g.n {
            for k in 0..g.nk() {
                let x = g.cell_center(i, j, k);
                let c = g.cell_index(i, j, k);
                let mut row = format!("{} {}", fmt(x[0]), fmt(x[1]));
                if dim == 3 {
                    let _ = write!(row, " {}", fmt(x[2]));
                }
                let _ = writeln!(
                    out,
                    "{row} {} {} {} {}",
                    fmt(sol.q[c]),
                    fmt(sol.q_exact[c]),
                    fmt(sol.phi.values[c]),
                    fmt(sol.chi.values[c]),
                );
            }
        }
    }
    out
}

fn cmd_run(config: &Path, out: &Path, jobs: usize, emit_fields: bool) -> i32 {
    let text = match std::fs::read_to_string(config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read config {}: {e}", config.display());
            return 2;
        }
    };
    let run = || -> Result<bool, VpError> {
        let cfg = parse_config(&text)?;
        let (case, study) = study_from_config(&cfg)?;
        let (report, sols) = run_convergence_study(&case, &study, jobs.max(1), emit_fields)?;
        std::fs::create_dir_all(out)?;
        std::fs::write(out.join("results.csv"), results_csv(&report, &study))?;
        std::fs::write(out.join("fit.csv"), fit_csv(&report))?;
        for sol in &sols {
            let name = format!("fields_N{}.dat", sol.grid.n);
            std::fs::write(out.join(name), field_dump(sol, case.dim))?;
        }
        for r in &report.records {
            println!(
                "{} N={}: e1={:.4e} einf={:.4e} iters={} residual={:.3e}",
                case.name, r.n, r.e1, r.einf, r.iterations, r.residual
            );
        }
        if let Some(f) = &report.fit_einf {
            println!("fit einf: m={:.3} r2={:.3}", f.m, f.r2);
        }
        Ok(report.records.iter().all(|r| r.converged))
    };
    match run() {
        Ok(true) => 0,
        Ok(false) => {
            eprintln!("error: at least one grid level did not converge");
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn cmd_list() -> i32 {
    for case in all_cases() {
        let bcs: Vec<&str> = case
            .interfaces
            .iter()
            .map(|i| match i.bc {
                BcKind::Neumann => "neumann",
                BcKind::Robin { .. } => "robin",
            })
            .collect();
        let mut approaches = vec!["B", "C"];
        if case.approach_a_grad.is_some() {
            approaches.insert(0, "A");
        }
        if case.markers(0.1).is_ok() {
            approaches.push("D (experimental)");
        }
        println!(
            "{:<26} {}D  bc: {:<16} approaches: {}",
            case.name,
            case.dim,
            bcs.join(","),
            approaches.join(","),
        );
    }
    0
}

/// One evaluated acceptance criterion.
pub struct CriterionResult {
    pub id: usize,
    pub description: String,
    pub pass: bool,
}

/// Output of one suite study, keyed for cross-study comparisons.
pub struct StudyOutput {
    pub key: &'static str,
    pub report: ConvergenceReport,
    pub config: StudyConfig,
}

fn suite_study(
    key: &'static str,
    case_name: &str,
    approach: ApproachSel,
    kind: IndicatorKind,
    eta: f64,
    jobs: usize,
) -> Result<StudyOutput, VpError> {
    let case = case_by_name(case_name)?;
    let mut cfg = default_study(&case, approach);
    cfg.indicator.kind = kind;
    cfg.eta = eta;
    let (report, _) = run_convergence_study(&case, &cfg, jobs, false)?;
    Ok(StudyOutput { key, report, config: cfg })
}

/// Runs the full acceptance matrix (criteria 1-9 and 11; the oracle suite of
/// criterion 10 lives in the test suite) and evaluates each bound.
pub fn run_acceptance_matrix(jobs: usize) -> Result<(Vec<CriterionResult>, Vec<StudyOutput>), VpError> {
    use ApproachSel as A;
    use IndicatorKind::{Continuous as Cont, Discontinuous as Disc};
    let plan: Vec<(&'static str, &str, ApproachSel, IndicatorKind, f64)> = vec![
        ("annulus-B-cont", "annulus-neumann", A::B, Cont, 1e-8),
        ("annulus-A-cont", "annulus-neumann", A::A, Cont, 1e-8),
        ("annulus-C-disc", "annulus-neumann", A::C, Disc, 1e-8),
        ("sphere-out-B-cont", "sphere-out", A::B, Cont, 1e-8),
        ("hexagram-C-disc", "hexagram-neumann", A::C, Disc, 1e-8),
        ("annulus-robin-B-cont", "annulus-robin", A::B, Cont, 1e-8),
        ("hexagram-robin-C-disc", "hexagram-robin", A::C, Disc, 1e-8),
        ("rounded-C-disc", "rounded-hexagram-neumann", A::C, Disc, 1e-8),
        ("rounded-robin-C-disc", "rounded-hexagram-robin", A::C, Disc, 1e-8),
        ("circle-C-cont", "circle-neumann", A::C, Cont, 1e-8),
        ("circle-Dtop-cont", "circle-neumann", A::D(Kernel::TopHat), Cont, 1e-8),
        ("circle-Dspl-cont", "circle-neumann", A::D(Kernel::Spline6), Cont, 1e-8),
        ("hexagram-C-disc-eta4", "hexagram-neumann", A::C, Disc, 1e-4),
        ("hexagram-C-disc-eta12", "hexagram-neumann", A::C, Disc, 1e-12),
    ];
    let mut studies = Vec::new();
    for (key, case, ap, kind, eta) in plan {
        studies.push(suite_study(key, case, ap, kind, eta, jobs)?);
    }
    let get = |key: &str| studies.iter().find(|s| s.key == key).expect("study in plan");
    let m_einf = |key: &str| get(key).report.fit_einf.map(|f| f.m).unwrap_or(f64::NAN);
    let m_e1 = |key: &str| get(key).report.fit_e1.map(|f| f.m).unwrap_or(f64::NAN);

    let mut out = Vec::new();
    let mut push = |id: usize, desc: String, pass: bool| {
        out.push(CriterionResult { id, description: desc, pass });
    };

    let b = get("annulus-B-cont");
    let (mb, r2b) = b
        .report
        .fit_einf
        .map(|f| (f.m, f.r2))
        .unwrap_or((f64::NAN, f64::NAN));
    push(
        1,
        format!("annulus Approach B continuous: m(Einf)={mb:.3} r2={r2b:.3}"),
        (1.7..=2.2).contains(&mb) && r2b >= 0.9,
    );

    let ma = m_einf("annulus-A-cont");
    let a_rec = &get("annulus-A-cont").report.records;
    let b_rec = &get("annulus-B-cont").report.records;
    let mut ab_close = true;
    for (ra, rb) in a_rec.iter().zip(b_rec.iter()) {
        if ra.n >= 128 {
            let rel = (ra.einf - rb.einf).abs() / rb.einf;
            ab_close &= rel <= 0.15;
        }
    }
    push(
        2,
        format!("annulus Approach A continuous: m(Einf)={ma:.3}, A-vs-B within 15% at N>=128"),
        (1.7..=2.2).contains(&ma) && ab_close,
    );

    let mc = m_einf("annulus-C-disc");
    push(3, format!("annulus Approach C discontinuous: m(Einf)={mc:.3}"), (1.2..=1.9).contains(&mc));

    let sph = get("sphere-out-B-cont");
    let mut orders_ok = true;
    for r in &sph.report.records {
        if let Some(o) = r.order_einf {
            orders_ok &= (o - 2.0).abs() <= 0.15;
        }
    }
    let e64 = sph
        .report
        .records
        .iter()
        .find(|r| r.n == 64)
        .map(|r| r.einf)
        .unwrap_or(f64::NAN);
    let e64_ok = (2.4095e-3 / 2.0..=2.4095e-3 * 2.0).contains(&e64);
    push(
        4,
        format!("sphere fluid-outside Approach B: per-level orders 2.00+-0.15, Einf(64)={e64:.4e}"),
        orders_ok && e64_ok,
    );

    let mh = m_einf("hexagram-C-disc");
    push(5, format!("hexagram Approach C discontinuous: m(Einf)={mh:.3}"), mh >= 0.55);

    let mr = m_einf("annulus-robin-B-cont");
    push(6, format!("annulus Robin Approach B continuous: m(Einf)={mr:.3}"), (1.7..=2.2).contains(&mr));

    let m_sharp_n = mh;
    let m_sharp_r = m_einf("hexagram-robin-C-disc");
    let m_round_n = m_einf("rounded-C-disc");
    let m_round_r = m_einf("rounded-robin-C-disc");
    push(
        7,
        format!(
            "rounded hexagram beats sharp: Neumann {m_round_n:.3} > {m_sharp_n:.3}, Robin {m_round_r:.3} > {m_sharp_r:.3}"
        ),
        m_round_n > m_sharp_n && m_round_r > m_sharp_r,
    );

    let mcc = m_e1("circle-C-cont");
    let mdt = m_e1("circle-Dtop-cont");
    let mds = m_e1("circle-Dspl-cont");
    push(
        8,
        format!("circle: Approach C m(E1)={mcc:.3} vs D top-hat {mdt:.3} and spline {mds:.3}"),
        mcc >= 0.7 && mdt.abs() <= 0.2 && mds.abs() <= 0.2,
    );

    let e4 = m_e1("hexagram-C-disc-eta4");
    let e8 = m_e1("hexagram-C-disc");
    let e12 = m_e1("hexagram-C-disc-eta12");
    let spread = [e4, e8, e12]
        .iter()
        .fold(f64::NEG_INFINITY, |a, &b| a.max(b))
        - [e4, e8, e12].iter().fold(f64::INFINITY, |a, &b| a.min(b));
    push(
        9,
        format!("eta sweep m(E1): {e4:.3}/{e8:.3}/{e12:.3} spread {spread:.3}"),
        spread <= 0.15,
    );

    let mut residuals_ok = true;
    let mut worst: f64 = 0.0;
    for s in &studies {
        for r in &s.report.records {
            residuals_ok &= r.converged && r.residual <= 1e-12;
            worst = worst.max(r.residual);
        }
    }
    push(11, format!("all runs converged with relative residual <= 1e-12 (worst {worst:.3e})"), residuals_ok);

    Ok((out, studies))
}

fn cmd_paper_suite(out: &Path, jobs: usize) -> i32 {
    let run = || -> Result<bool, VpError> {
        let (criteria, studies) = run_acceptance_matrix(jobs.max(1))?;
        std::fs::create_dir_all(out)?;
        let mut summary = String::from("study,case,approach,indicator,eta,m_e1,r2_e1,m_einf,r2_einf\n");
        for s in &studies {
            let _ = writeln!(
                summary,
                "{},{},{},{},{},{},{},{},{}",
                s.key,
                s.report.case,
                s.report.approach.label(),
                indicator_name(&s.report.indicator),
                fmt(s.config.eta),
                fmt_opt(s.report.fit_e1.map(|f| f.m)),
                fmt_opt(s.report.fit_e1.map(|f| f.r2)),
                fmt_opt(s.report.fit_einf.map(|f| f.m)),
                fmt_opt(s.report.fit_einf.map(|f| f.r2)),
            );
        }
        std::fs::write(out.join("summary.csv"), summary)?;
        let mut all_pass = true;
        for c in &criteria {
            println!("criterion {:>2}: {} -- {}", c.id, if c.pass { "PASS" } else { "FAIL" }, c.description);
            all_pass &= c.pass;
        }
        Ok(all_pass)
    };
    match run() {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Entry point used by the binary; returns the process exit code.
pub fn main_entry() -> i32 {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out, jobs, emit_fields } => cmd_run(&config, &out, jobs, emit_fields),
        Command::List => cmd_list(),
        Command::PaperSuite { out, jobs } => cmd_paper_suite(&out, jobs),
    }
}
