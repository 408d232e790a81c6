use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::Serialize;
use zonal::anova::{posthoc_text, PairwiseContrast};
use zonal::compare::DEFAULT_REPLICATES;
use zonal::simulate::{default_ssi_attempts, Simulator, DEFAULT_POINT_BUDGET};
use zonal::study::DesignConfig;
use zonal::summaries::{max_radius, radius_grid, DEFAULT_ENVELOPE_SIMULATIONS};
use zonal::{
    anova_decompose, build_log_table, compare_patterns, k_envelopes, k_estimate, load_pattern,
    posthoc_bonferroni, residual_variance, run_study, AnovaReport, ComparisonReport, DesignSpec,
    Error, ErrorKind, FilterSpec, Frequency, Location, LogPeriodogramTable, ModelSpec, PointPattern,
    Result, Seed, SmootherSpec, StudyConfig, Window,
};

use crate::settings::{self, design_from, window_from};
use crate::{Cli, Command, CompareArgs, KhatArgs, ModelName, SimulateArgs, SpectralArgs, StudyArgs, TestArgs};

const DEFAULT_SEED: u64 = 1;

pub fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Config | ErrorKind::Io => 2,
        ErrorKind::Budget => 3,
        ErrorKind::Numeric => 4,
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let config = cli.config.as_deref();
    match &cli.command {
        Command::Simulate(a) => simulate(cli, a, settings::load(config)?),
        Command::Test(a) => test(cli, a, settings::load(config)?),
        Command::Study(a) => study(cli, a),
        Command::Compare(a) => compare(cli, a, settings::load(config)?),
        Command::Khat(a) => khat(cli, a, settings::load(config)?),
    }
}

fn usage(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

/// Writes to `--out` or standard output.
fn emit(out: Option<&Path>, content: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, content).map_err(|source| Error::File {
            path: path.to_path_buf(),
            source,
        }),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(content.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn master_seed(cli: &Cli, configured: Option<Seed>) -> Seed {
    cli.seed.map(Seed).or(configured).unwrap_or(Seed(DEFAULT_SEED))
}

fn required<T>(v: Option<T>, flag: &str, model: &str) -> Result<T> {
    v.ok_or_else(|| usage(format!("model {model} needs --{flag}")))
}

fn model_from_flags(name: ModelName, a: &SimulateArgs) -> Result<ModelSpec> {
    Ok(match name {
        ModelName::Poisson => ModelSpec::Poisson {
            intensity: required(a.lambda, "lambda", "poisson")?,
        },
        ModelName::InhomPoisson => ModelSpec::InhomPoisson {
            intensity: required(a.expr.clone(), "expr", "inhom-poisson")?,
            upper_bound: a.upper_bound,
        },
        ModelName::Thomas => ModelSpec::Thomas {
            parent_intensity: required(a.delta, "delta", "thomas")?,
            dispersion: required(a.tau, "tau", "thomas")?,
            mean_offspring: a.mu,
            mean_offspring_expr: a.mu_expr.clone(),
            upper_bound: a.upper_bound,
        },
        ModelName::Ssi => ModelSpec::Ssi {
            inhibition_distance: required(a.r, "r", "ssi")?,
            target_count: required(a.target, "target", "ssi")?,
            max_attempts: a.max_attempts.unwrap_or_else(default_ssi_attempts),
        },
        ModelName::ZonalDefault => ModelSpec::ZonalDefault,
    })
}

#[derive(Serialize)]
struct SimulateSummary<'a> {
    model: &'a ModelSpec,
    window: Window,
    seed: Seed,
    points: usize,
}

fn simulate(cli: &Cli, a: &SimulateArgs, cfg: settings::SimulateSettings) -> Result<()> {
    let model = match (a.model, cfg.model) {
        (Some(name), _) => model_from_flags(name, a)?,
        (None, Some(m)) => m,
        (None, None) => return Err(usage("simulate needs --model or a model in --config")),
    };
    let window = match &a.window {
        Some(w) => window_from(w)?,
        None => cfg.window.unwrap_or(Window::square(70.0)?),
    };
    let seed = master_seed(cli, cfg.seed);
    let sim = Simulator::with_budget(a.budget.or(cfg.budget).unwrap_or(DEFAULT_POINT_BUDGET));
    let pattern = model.prepare(&window)?.simulate(&sim, &window, seed)?;
    emit(cli.out.as_deref(), &zonal::geometry::format_pattern(&pattern))?;
    let summary = SimulateSummary {
        model: &model,
        window,
        seed,
        points: pattern.len(),
    };
    // the pattern owns stdout when no --out is given
    if cli.json {
        let s = to_json(&summary)?;
        if cli.out.is_some() {
            print!("{s}");
        } else {
            eprint!("{s}");
        }
    } else {
        eprintln!("{} points", pattern.len());
    }
    Ok(())
}

/// Spectral settings resolved from flags, then config, then defaults.
struct Spectral {
    fspec: FilterSpec,
    sspec: SmootherSpec,
    design: DesignConfig,
    window: Option<Window>,
}

fn resolve_spectral(
    a: &SpectralArgs,
    window: Option<Window>,
    design: Option<DesignConfig>,
    h: Option<f64>,
    rho: Option<f64>,
    nodes: Option<usize>,
) -> Result<Spectral> {
    let fspec = FilterSpec::new(a.h.or(h).unwrap_or(3.0))?;
    let sspec = SmootherSpec::with_nodes(
        a.rho.or(rho).unwrap_or(20.0),
        a.nodes.or(nodes).unwrap_or(zonal::spectral::DEFAULT_QUADRATURE_NODES),
    )?;
    let design = match &a.design {
        Some(d) => design_from(d)?,
        None => design.unwrap_or_default(),
    };
    let window = match &a.window {
        Some(w) => Some(window_from(w)?),
        None => window,
    };
    Ok(Spectral {
        fspec,
        sspec,
        design,
        window,
    })
}

#[derive(Serialize)]
struct DesignEcho {
    locations: Vec<Location>,
    frequencies: Vec<Frequency>,
}

impl DesignEcho {
    fn of(d: &DesignSpec) -> Self {
        DesignEcho {
            locations: d.locations().to_vec(),
            frequencies: d.frequencies().to_vec(),
        }
    }
}

#[derive(Serialize)]
struct TestOutput {
    #[serde(skip_serializing_if = "Option::is_none")]
    points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    h: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    nodes: Option<usize>,
    sigma2: f64,
    alpha: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    dropped_frequency: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    design: Option<DesignEcho>,
    warnings: Vec<String>,
    anova: AnovaReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    posthoc: Option<Vec<PairwiseContrast>>,
}

impl TestOutput {
    fn to_text(&self) -> String {
        let mut s = String::new();
        if let Some(n) = self.points {
            let _ = writeln!(s, "points: {n}");
        }
        if let (Some(h), Some(rho), Some(q)) = (self.h, self.rho, self.nodes) {
            let _ = writeln!(s, "h = {h}, rho = {rho}, nodes = {q}");
        }
        if let Some(k) = self.dropped_frequency {
            let _ = writeln!(s, "frequency w{k} dropped");
        }
        if let Some(d) = &self.design {
            for (i, z) in d.locations.iter().enumerate() {
                let _ = writeln!(s, "z{} = ({:.4}, {:.4})", i + 1, z.0[0], z.0[1]);
            }
            for (j, w) in d.frequencies.iter().enumerate() {
                let _ = writeln!(s, "w{} = ({:.4}, {:.4})", j + 1, w.0[0], w.0[1]);
            }
        }
        if self.design.is_some() && self.warnings.is_empty() {
            let _ = writeln!(s, "spacing rules: satisfied");
        }
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        s.push('\n');
        s.push_str(&self.anova.to_text());
        if let Some(p) = &self.posthoc {
            s.push('\n');
            s.push_str(&posthoc_text(p));
        }
        s
    }
}

fn test(cli: &Cli, a: &TestArgs, cfg: settings::TestSettings) -> Result<()> {
    let alpha = a.alpha.or(cfg.alpha).unwrap_or(zonal::anova::DEFAULT_ALPHA);
    let drop = a.drop_frequency.or(cfg.drop_frequency);
    let posthoc = a.posthoc || cfg.posthoc.unwrap_or(false);

    let (table, points, spectral) = match (&a.table_json, &a.pattern) {
        (Some(path), _) => {
            let table: LogPeriodogramTable = settings::read_json(path)?;
            table.validate()?;
            (table, None, None)
        }
        (None, Some(path)) => {
            let sp = resolve_spectral(&a.spectral, cfg.window, cfg.design, cfg.h, cfg.rho, cfg.nodes)?;
            let pattern = load_pattern(path, sp.window)?;
            let design = sp.design.resolve(pattern.window(), &sp.fspec, &sp.sspec)?;
            let table = build_log_table(&pattern, &design, &sp.fspec, &sp.sspec)?;
            (table, Some(pattern.len()), Some(sp))
        }
        (None, None) => return Err(usage("test needs a pattern file or --table-json")),
    };
    let table = match drop {
        Some(k) => table.drop_frequency(k)?,
        None => table,
    };
    let anova = anova_decompose(&table, alpha)?;
    let posthoc = if posthoc && anova.between_locations.significant {
        Some(posthoc_bonferroni(&table, alpha)?)
    } else {
        None
    };
    let out = TestOutput {
        points,
        h: spectral.as_ref().map(|s| s.fspec.h),
        rho: spectral.as_ref().map(|s| s.sspec.rho),
        nodes: spectral.as_ref().map(|s| s.sspec.nodes),
        sigma2: table.sigma2(),
        alpha,
        dropped_frequency: drop,
        design: table.design().map(DesignEcho::of),
        warnings: table.warnings().to_vec(),
        anova,
        posthoc,
    };
    let text = if cli.json { to_json(&out)? } else { out.to_text() };
    emit(cli.out.as_deref(), &text)
}

fn study(cli: &Cli, a: &StudyArgs) -> Result<()> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| usage("study needs --config <study.json>"))?;
    let mut config: StudyConfig = settings::read_json(path)?;
    if let Some(seed) = cli.seed {
        config.seed = Seed(seed);
    }
    if let Some(r) = a.replicates {
        config.replicates = r;
    }
    if a.drop_frequency.is_some() {
        config.drop_frequency = a.drop_frequency;
    }
    let mut report = run_study(&config)?;
    let text = report.to_text();
    if !a.details {
        report.replicates.clear();
    }
    let json = to_json(&report)?;
    if let Some(p) = &config.outputs.json {
        emit(Some(p), &json)?;
    }
    if let Some(p) = &config.outputs.text {
        emit(Some(p), &text)?;
    }
    emit(cli.out.as_deref(), if cli.json { &json } else { &text })
}

#[derive(Serialize)]
struct CompareOutput<'a> {
    h: f64,
    rho: f64,
    nodes: usize,
    sigma2: f64,
    warnings: Vec<String>,
    points: [usize; 2],
    report: &'a ComparisonReport,
}

fn compare(cli: &Cli, a: &CompareArgs, cfg: settings::CompareSettings) -> Result<()> {
    let sp = resolve_spectral(&a.spectral, cfg.window, cfg.design, cfg.h, cfg.rho, cfg.nodes)?;
    let first = load_pattern(&a.first, sp.window)?;
    let second = load_pattern(&a.second, Some(sp.window.unwrap_or(*first.window())))?;
    let design = sp.design.resolve(first.window(), &sp.fspec, &sp.sspec)?;
    let reps = a.reps.or(cfg.reps).unwrap_or(DEFAULT_REPLICATES);
    let seed = master_seed(cli, cfg.seed);
    let report = compare_patterns(&first, &second, &design, &sp.fspec, &sp.sspec, reps, seed)?;
    let out = CompareOutput {
        h: sp.fspec.h,
        rho: sp.sspec.rho,
        nodes: sp.sspec.nodes,
        sigma2: residual_variance(&sp.fspec, &sp.sspec),
        warnings: design.spacing_warnings(),
        points: [first.len(), second.len()],
        report: &report,
    };
    let text = if cli.json {
        to_json(&out)?
    } else {
        let mut s = format!(
            "points: {} and {}\nh = {}, rho = {}, nodes = {}, sigma2 = {:.6}\n",
            out.points[0], out.points[1], out.h, out.rho, out.nodes, out.sigma2
        );
        for w in &out.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        s.push('\n');
        s.push_str(&report.to_text());
        s
    };
    emit(cli.out.as_deref(), &text)
}

fn khat(cli: &Cli, a: &KhatArgs, cfg: settings::KhatSettings) -> Result<()> {
    let window = match &a.window {
        Some(w) => Some(window_from(w)?),
        None => cfg.window,
    };
    let pattern: PointPattern = load_pattern(&a.pattern, window)?;
    let radii = match a.radii.clone().or(cfg.radii) {
        Some(r) => r,
        None => radius_grid(
            a.rmax.or(cfg.rmax).unwrap_or(max_radius(pattern.window())),
            a.nr.or(cfg.nr).unwrap_or(50),
        )?,
    };
    let nsim = a.nsim.or(cfg.nsim).unwrap_or(DEFAULT_ENVELOPE_SIMULATIONS);
    let est = if nsim == 0 {
        k_estimate(&pattern, &radii)?
    } else {
        k_envelopes(&pattern, &radii, nsim, master_seed(cli, cfg.seed))?
    };
    let text = if cli.json { to_json(&est)? } else { est.to_csv() };
    emit(cli.out.as_deref(), &text)
}
