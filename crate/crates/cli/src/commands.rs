//! Subcommand implementations.

use std::path::{Path, PathBuf};

use covspec::datafile::DataMatrix;
use covspec::identity::{
    estimate_moment_profile, frobenius_eigenvalues, frobenius_test, lrt_eigenvalues, lrt_test,
    MomentSource, TestReport,
};
use covspec::lss::{
    identity_closed_forms, identity_polynomial_closed_forms, lss_table, AnalyticFunction,
    KernelContext, LssMomentTable, TestFunction,
};
use covspec::montecarlo::{run_study, SigmaSpec};
use covspec::stats::{ks_normal, Summary};
use covspec::stieltjes::{density_curve, support_bounds, zero_atom, SpectralCdf};
use covspec::verify::{run_suite, SuiteReport, VerifyOptions, DEFAULT_SEED, KS_LEVEL, SUITES};
use covspec::{AspectRatios, MomentProfile, SpectralMeasure};
use serde::Serialize;

use crate::config::{
    LsdConfig, LssConfig, MomentsSpec, SimulateConfig, Source, TestChoice, TestConfig, VerifyConfig,
};
use crate::report::{Envelope, Outputs};
use crate::{Cli, CliError, Format};

/// Points in the default density grid.
const DEFAULT_GRID_POINTS: usize = 801;

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from("."))
}

fn announce(written: &[PathBuf]) {
    for p in written {
        println!("wrote {}", p.display());
    }
}

fn default_grid(ratios: &AspectRatios, h: &SpectralMeasure) -> Vec<f64> {
    let (lo, hi) = support_bounds(ratios, h);
    let pad = 0.05 * (hi - lo).max(0.1);
    let start = if lo - pad > 0.0 {
        lo - pad
    } else {
        1e-3 * (hi - lo).max(1e-3)
    };
    let end = hi + pad;
    let step = (end - start) / (DEFAULT_GRID_POINTS - 1) as f64;
    (0..DEFAULT_GRID_POINTS)
        .map(|i| start + step * i as f64)
        .collect()
}

#[derive(Serialize)]
struct CurvePoint {
    x: f64,
    density: f64,
    cdf: f64,
}

#[derive(Serialize)]
struct LsdResult {
    p: usize,
    n: usize,
    c1: f64,
    c2: f64,
    zero_atom: f64,
    /// Interval known to contain the continuous part.
    support_bounds: (f64, f64),
    /// Grid intervals on which the computed density is positive.
    support_intervals: Vec<(f64, f64)>,
    continuous_mass: f64,
    grid_points: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    curve: Option<Vec<CurvePoint>>,
}

pub fn lsd(cli: &Cli) -> Result<(), CliError> {
    let source = Source::load(cli.config.as_deref())?;
    let cfg: LsdConfig = source.parse()?;
    let ratios = AspectRatios::new(cfg.p, cfg.n)?;
    let h = cfg.measure.resolve(&source.dir)?;
    let grid = match &cfg.grid {
        Some(g) => g.values()?,
        None => default_grid(&ratios, &h),
    };
    let curve = density_curve(&ratios, &h, &grid, &cfg.ladder, &cfg.solver)?;
    let cdf = SpectralCdf::new(&ratios, &h, &cfg.solver)?;
    let points: Vec<CurvePoint> = curve
        .grid
        .iter()
        .zip(&curve.density)
        .map(|(&x, &density)| CurvePoint {
            x,
            density,
            cdf: cdf.eval(x),
        })
        .collect();

    let mut out = Outputs::default();
    if cli.format == Format::Csv {
        out.with("density.csv", |w| {
            use std::io::Write;
            writeln!(w, "x,density,cdf")?;
            for p in &points {
                writeln!(w, "{:?},{:?},{:?}", p.x, p.density, p.cdf)?;
            }
            Ok(())
        })?;
    }
    let result = LsdResult {
        p: cfg.p,
        n: cfg.n,
        c1: ratios.c1,
        c2: ratios.c2,
        zero_atom: zero_atom(&ratios, &h),
        support_bounds: support_bounds(&ratios, &h),
        support_intervals: curve.support_intervals(),
        continuous_mass: cdf.continuous_mass(),
        grid_points: points.len(),
        curve: (cli.format == Format::Json).then_some(points),
    };
    out.json(
        "lsd.json",
        &Envelope::new("lsd", &source, cli.seed, &cfg, result),
    )?;
    announce(&out.commit(&out_dir(cli))?);
    Ok(())
}

#[derive(Serialize)]
struct ClosedFormComparison {
    means: Vec<f64>,
    cov: Vec<Vec<f64>>,
    max_abs_deviation: f64,
}

#[derive(Serialize)]
struct LssResult {
    table: LssMomentTable,
    min_eigenvalue: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    closed_form: Option<ClosedFormComparison>,
}

/// Closed-form column for `H = δ₁` when every function is `x`, `x²` or `log`.
fn closed_form(
    ratios: &AspectRatios,
    m: &MomentProfile,
    fns: &[TestFunction],
    table: &LssMomentTable,
) -> Result<Option<ClosedFormComparison>, CliError> {
    let index: Option<Vec<usize>> = fns
        .iter()
        .map(|f| match f {
            TestFunction::X => Some(0),
            TestFunction::X2 => Some(1),
            TestFunction::Log => Some(2),
            _ => None,
        })
        .collect();
    let Some(index) = index else { return Ok(None) };
    let reference = if index.contains(&2) {
        identity_closed_forms(ratios, m)?.to_table()
    } else {
        identity_polynomial_closed_forms(ratios, m).to_table()
    };
    let means: Vec<f64> = index.iter().map(|&i| reference.means[i]).collect();
    let cov: Vec<Vec<f64>> = index
        .iter()
        .map(|&i| index.iter().map(|&j| reference.cov[i][j]).collect())
        .collect();
    let mut dev: f64 = 0.0;
    for a in 0..index.len() {
        dev = dev.max((means[a] - table.means[a]).abs());
        for b in 0..index.len() {
            dev = dev.max((cov[a][b] - table.cov[a][b]).abs());
        }
    }
    Ok(Some(ClosedFormComparison {
        means,
        cov,
        max_abs_deviation: dev,
    }))
}

pub fn lss_moments(cli: &Cli) -> Result<(), CliError> {
    let source = Source::load(cli.config.as_deref())?;
    let cfg: LssConfig = source.parse()?;
    let ratios = AspectRatios::new(cfg.p, cfg.n)?;
    let h = cfg.measure.resolve(&source.dir)?;
    let m = match cfg.moments {
        MomentsSpec::Supplied(m) => m,
        MomentsSpec::Keyword(_) => return Err(CliError::Input(
            "moments \"estimate\" needs a data matrix; give {\"alpha\", \"delta\"} for lss-moments"
                .into(),
        )),
    };
    let fns = cfg
        .functions
        .iter()
        .map(|f| f.resolve())
        .collect::<Result<Vec<_>, _>>()?;
    if fns.is_empty() {
        return Err(CliError::Input("no test functions requested".into()));
    }
    let atom = zero_atom(&ratios, &h);
    if let Some(f) = fns.iter().find(|f| f.singular_at_zero()) {
        if atom > 0.0 {
            return Err(CliError::Input(format!(
                "test function {f} is refused: the limit law puts mass {atom:.6} at the origin, where {f} is singular \
                 (p > n or H has an atom at 0)"
            )));
        }
    }
    let mut ctx = if h.is_identity() {
        KernelContext::identity(ratios, m)
    } else {
        KernelContext::diagonal(ratios, h.clone(), m)
    };
    ctx.solver = cfg.solver;
    let dyn_fns: Vec<&dyn AnalyticFunction> =
        fns.iter().map(|f| f as &dyn AnalyticFunction).collect();
    let table = lss_table(&dyn_fns, &ctx, &cfg.contours)?;
    let comparison = if h.is_identity() {
        closed_form(&ratios, &m, &fns, &table)?
    } else {
        None
    };
    if let Some(c) = &comparison {
        println!("max |numeric − closed form| = {:.3e}", c.max_abs_deviation);
    }

    let mut out = Outputs::default();
    if cli.format == Format::Csv {
        out.with("lss_moments.csv", |w| table.write_csv(w))?;
    }
    let result = LssResult {
        min_eigenvalue: table.min_eigenvalue(),
        table,
        closed_form: comparison,
    };
    out.json(
        "lss_moments.json",
        &Envelope::new("lss-moments", &source, cli.seed, &cfg, result),
    )?;
    announce(&out.commit(&out_dir(cli))?);
    Ok(())
}

#[derive(Serialize)]
struct MomentsUsed {
    alpha: f64,
    delta: f64,
    source: MomentSource,
}

#[derive(Serialize)]
struct TestFailure {
    test: &'static str,
    message: String,
    exit_code: u8,
}

#[derive(Serialize)]
struct TestResult {
    data: PathBuf,
    p: usize,
    n: usize,
    dtype: String,
    moments: MomentsUsed,
    level: f64,
    reports: Vec<TestReport>,
    rejects: Vec<bool>,
    /// Set when one of the requested tests could not be computed.
    partial: bool,
    errors: Vec<TestFailure>,
}

fn run_lrt(
    x: &DataMatrix,
    m: &MomentProfile,
    cfg: &TestConfig,
    source: MomentSource,
) -> Result<TestReport, CliError> {
    let (p, n) = (x.p(), x.n());
    if p == n {
        return Err(CliError::Input(format!(
            "the likelihood ratio test is undefined at p = n = {p}"
        )));
    }
    let eigs = lrt_eigenvalues(x)?;
    Ok(lrt_test(&eigs, p, n, m)?
        .with_alternative(cfg.alternative)
        .with_moment_source(source))
}

fn data_path(cli: &Cli, cfg: &TestConfig, source: &Source) -> Result<PathBuf, CliError> {
    match (&cli.data, &cfg.data) {
        (Some(p), _) => Ok(p.clone()),
        (None, Some(p)) => Ok(source.dir.join(p)),
        (None, None) => Err(CliError::Input(
            "no data file: pass --data or set \"data\" in the config".into(),
        )),
    }
}

pub fn test(cli: &Cli, choice: Option<TestChoice>) -> Result<(), CliError> {
    let source = Source::load(cli.config.as_deref())?;
    let mut cfg: TestConfig = source.parse()?;
    if let Some(c) = choice {
        cfg.test = c;
    }
    if !(cfg.level > 0.0 && cfg.level < 1.0) {
        return Err(CliError::Input(format!(
            "level {} must lie in (0, 1)",
            cfg.level
        )));
    }
    let path = data_path(cli, &cfg, &source)?;
    let x = DataMatrix::read(&path)?;
    let (m, msrc) = match cfg.moments {
        None if x.is_real() => (MomentProfile::real_gaussian(), MomentSource::Supplied),
        None => (MomentProfile::complex_gaussian(), MomentSource::Supplied),
        Some(MomentsSpec::Supplied(m)) => (m, MomentSource::Supplied),
        Some(MomentsSpec::Keyword(_)) => (
            estimate_moment_profile(&x, x.is_real())?,
            MomentSource::Estimated,
        ),
    };
    cfg.moments.get_or_insert(MomentsSpec::Supplied(m));

    let mut reports = Vec::new();
    let mut errors = Vec::new();
    if matches!(cfg.test, TestChoice::Frobenius | TestChoice::Both) {
        let eigs = frobenius_eigenvalues(&x)?;
        reports.push(
            frobenius_test(&eigs, x.p(), x.n(), &m)?
                .with_alternative(cfg.alternative)
                .with_moment_source(msrc),
        );
    }
    match cfg.test {
        TestChoice::Lrt => reports.push(run_lrt(&x, &m, &cfg, msrc)?),
        TestChoice::Both => match run_lrt(&x, &m, &cfg, msrc) {
            Ok(r) => reports.push(r),
            Err(e) => {
                eprintln!("covspec: lrt skipped: {e}");
                errors.push(TestFailure {
                    test: "lrt",
                    message: e.to_string(),
                    exit_code: e.exit_code(),
                });
            }
        },
        TestChoice::Frobenius => {}
    }

    for r in &reports {
        println!(
            "{:?}: statistic {:.6}, centering {:.6}, scale {:.6}, z = {:.4}, p = {:.4}, {} at level {}",
            r.name,
            r.raw_statistic,
            r.centering,
            r.scale,
            r.z_score,
            r.p_value,
            if r.rejects(cfg.level) { "reject" } else { "do not reject" },
            cfg.level
        );
    }
    let result = TestResult {
        data: path,
        p: x.p(),
        n: x.n(),
        dtype: format!("{:?}", x.dtype()).to_lowercase(),
        moments: MomentsUsed {
            alpha: m.alpha(),
            delta: m.delta(),
            source: msrc,
        },
        level: cfg.level,
        rejects: reports.iter().map(|r| r.rejects(cfg.level)).collect(),
        reports,
        partial: !errors.is_empty(),
        errors,
    };
    let mut out = Outputs::default();
    out.json(
        "test.json",
        &Envelope::new("test", &source, cli.seed, &cfg, result),
    )?;
    announce(&out.commit(&out_dir(cli))?);
    Ok(())
}

#[derive(Serialize)]
struct NullCheck {
    label: String,
    detail: String,
    pass: bool,
}

#[derive(Serialize)]
struct SimulateResult<'a> {
    summary: &'a covspec::montecarlo::StudySummary,
    /// Null-law checks of the test pivots, reported when `Σ = I`.
    checks: Vec<NullCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rows: Option<&'a [covspec::montecarlo::ReplicateRow]>,
}

fn null_checks(name: &str, z: &[f64]) -> Vec<NullCheck> {
    if z.is_empty() {
        return Vec::new();
    }
    let s = Summary::of(z);
    let ks = ks_normal(z);
    vec![
        NullCheck {
            label: format!("{name}: |mean z| < 3 SE"),
            detail: format!("mean {:.4}, SE {:.4}", s.mean, s.se),
            pass: s.mean.abs() < 3.0 * s.se,
        },
        NullCheck {
            label: format!("{name}: KS vs N(0, 1) at {KS_LEVEL}"),
            detail: format!("D = {:.4}, p = {:.4}", ks.statistic, ks.p_value),
            pass: ks.p_value >= KS_LEVEL,
        },
    ]
}

pub fn simulate(cli: &Cli, replicates: Option<usize>) -> Result<(), CliError> {
    let source = Source::load(cli.config.as_deref())?;
    let mut cfg: SimulateConfig = source.parse()?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(r) = replicates {
        cfg.replicates = r;
    }
    cfg.validate()?;
    let res = run_study(&cfg)?;
    let checks = if cfg.sigma == SigmaSpec::Identity {
        let mut c = null_checks("frobenius", &res.frobenius_z());
        c.extend(null_checks("lrt", &res.lrt_z()));
        c
    } else {
        Vec::new()
    };
    for c in &checks {
        println!(
            "{} {}: {}",
            if c.pass { "ok  " } else { "FAIL" },
            c.label,
            c.detail
        );
    }
    let mut out = Outputs::default();
    if cli.format == Format::Csv {
        out.with("study.csv", |w| res.write_csv(w))?;
    }
    let result = SimulateResult {
        summary: &res.summary,
        checks,
        rows: (cli.format == Format::Json).then_some(res.rows.as_slice()),
    };
    out.json(
        "summary.json",
        &Envelope::new("simulate", &source, Some(cfg.seed), &cfg, result),
    )?;
    announce(&out.commit(&out_dir(cli))?);
    Ok(())
}

fn print_suite(r: &SuiteReport) {
    println!(
        "{} {} ({:.1} s)",
        if r.pass { "PASS" } else { "FAIL" },
        r.suite,
        r.seconds
    );
    for c in &r.checks {
        println!(
            "  {} {}: {}",
            if c.pass { "ok  " } else { "FAIL" },
            c.label,
            c.detail
        );
    }
}

pub fn verify(
    cli: &Cli,
    suites: &[String],
    replicates: Option<usize>,
    list: bool,
) -> Result<(), CliError> {
    if list {
        for s in SUITES {
            println!("{s}");
        }
        return Ok(());
    }
    let source = Source::load(cli.config.as_deref())?;
    let mut cfg: VerifyConfig = source.parse()?;
    if !suites.is_empty() {
        cfg.suites = suites.to_vec();
    }
    if cfg.suites.is_empty() {
        cfg.suites = SUITES.iter().map(|s| s.to_string()).collect();
    }
    if let Some(r) = replicates {
        cfg.replicates = r;
    }
    cfg.seed = Some(cli.seed.or(cfg.seed).unwrap_or(DEFAULT_SEED));
    if cfg.replicates == 0 {
        return Err(CliError::Input("replicates must be at least 1".into()));
    }
    if let Some(bad) = cfg.suites.iter().find(|s| !SUITES.contains(&s.as_str())) {
        return Err(CliError::Input(format!(
            "unknown suite {bad:?}; available: {}",
            SUITES.join(", ")
        )));
    }
    let opts = VerifyOptions {
        seed: cfg.seed.unwrap_or(DEFAULT_SEED),
        replicates: cfg.replicates,
    };
    let mut reports = Vec::new();
    for s in &cfg.suites {
        let r = run_suite(s, &opts)?;
        print_suite(&r);
        reports.push(r);
    }
    if let Some(dir) = &cli.out {
        let mut out = Outputs::default();
        out.json(
            "verify.json",
            &Envelope::new("verify", &source, cfg.seed, &cfg, &reports),
        )?;
        announce(&out.commit(Path::new(dir))?);
    }
    let failed: Vec<String> = reports
        .iter()
        .flat_map(|r| {
            r.failures()
                .map(move |c| format!("{}: {}", r.suite, c.label))
        })
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        for f in &failed {
            eprintln!("failed: {f}");
        }
        Err(CliError::Verify(format!(
            "{} check(s) failed",
            failed.len()
        )))
    }
}
