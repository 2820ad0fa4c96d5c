//! Experiment configuration: one TOML file per experiment.
//!
//! ```toml
//! tasks = ["solve", "iterate"]
//! seed = 7
//! suite = "standard"
//!
//! [params]
//! n = 1
//! p = 1.5
//!
//! [measure]
//! atoms = [{ location = [0.0], mass = 1.0 }]
//!
//! [grid]
//! nx = 129
//! nt = 128
//! ```
//!
//! Every validation error names the offending line.

use serde::Deserialize;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;
use std::path::{Path, PathBuf};
use toml::Spanned;
use wolfflab_core::measure::{Atom, MeasureSpec, RadialComponent};
use wolfflab_core::{
    make_params, Cylinder, GridSpec, IterationOptions, Point, ProblemParams, RadonMeasure, SolverOptions, SuiteConfig,
};

/// Invalid configuration, optionally anchored to a line of the file.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub file: Option<PathBuf>,
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    pub fn new(message: impl Into<String>) -> Self {
        Self {
            file: None,
            line: None,
            message: message.into(),
        }
    }

    fn at(line: Option<usize>, message: impl Into<String>) -> Self {
        Self {
            file: None,
            line,
            message: message.into(),
        }
    }

    fn core(line: Option<usize>, e: wolfflab_core::Error) -> Self {
        Self::at(line, format!("{}: {e}", e.kind()))
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.file, self.line) {
            (Some(p), Some(l)) => write!(f, "{}:{l}: {}", p.display(), self.message),
            (Some(p), None) => write!(f, "{}: {}", p.display(), self.message),
            (None, Some(l)) => write!(f, "line {l}: {}", self.message),
            (None, None) => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Solve,
    Wolff,
    Functionals,
    Iterate,
    Verify,
    Suite,
}

impl Task {
    /// Tasks that read the solved field.
    pub fn needs_field(self) -> bool {
        matches!(self, Task::Solve | Task::Functionals | Task::Iterate)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    tasks: Vec<Task>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    suite: Option<Spanned<String>>,
    params: Option<RawParams>,
    measure: Option<RawMeasure>,
    grid: Option<RawGrid>,
    solver: Option<RawSolver>,
    iteration: Option<RawIteration>,
    wolff: Option<RawWolff>,
    functionals: Option<RawFunctionals>,
    #[serde(default)]
    suites: BTreeMap<String, Spanned<SuiteConfig>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    n: Spanned<usize>,
    p: Spanned<f64>,
    eps_reg: Option<Spanned<f64>>,
    lambda: Option<Spanned<f64>>,
    k: Option<Spanned<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMeasure {
    domain_radius: Option<f64>,
    #[serde(default)]
    atoms: Vec<Atom>,
    #[serde(default)]
    radial: Vec<RadialComponent>,
    #[serde(default)]
    uniform_density: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    nx: usize,
    nt: usize,
    horizon: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    tol: Option<f64>,
    max_iterations: Option<usize>,
    mollify_width: Option<f64>,
    slice_times: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIteration {
    x0: Option<Vec<f64>>,
    t0: Option<f64>,
    kappa: Option<f64>,
    r0: Option<f64>,
    j_max: Option<usize>,
    root_tol: Option<f64>,
    stop_ratio: Option<f64>,
    scan_points: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLine {
    from: Vec<f64>,
    to: Vec<f64>,
    count: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWolff {
    #[serde(default)]
    points: Vec<Vec<f64>>,
    line: Option<RawLine>,
    radii: Option<Vec<f64>>,
    tol: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFunctionals {
    center: Vec<f64>,
    time: f64,
    rho: f64,
    delta: f64,
    level: f64,
}

/// Problem definition shared by solve, wolff, functionals and iterate.
#[derive(Clone, Debug, PartialEq)]
pub struct Problem {
    pub params: ProblemParams,
    pub measure: RadonMeasure,
    pub grid: GridSpec,
    pub solver: SolverOptions,
    pub slice_times: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationSetup {
    pub x0: Point,
    pub t0: f64,
    pub options: IterationOptions,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WolffSetup {
    pub points: Vec<Point>,
    pub radii: Vec<f64>,
    pub tol: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FunctionalsSetup {
    pub cylinder: Cylinder,
    pub level: f64,
}

/// Validated experiment configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub tasks: Vec<Task>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub problem: Option<Problem>,
    pub iteration: Option<IterationSetup>,
    pub wolff: Option<WolffSetup>,
    pub functionals: Option<FunctionalsSetup>,
    pub suite_name: String,
    /// Suites defined under `[suites.<name>]`.
    pub suites: BTreeMap<String, SuiteConfig>,
    /// Line of the `suite = ...` key, for later error messages.
    suite_line: Option<usize>,
    tol: TolOverrides,
}

/// Tolerance adjustments given on the command line as `key=value` pairs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TolOverrides {
    pub wolff: Option<f64>,
    pub solver: Option<f64>,
    pub root: Option<f64>,
    pub stop: Option<f64>,
}

impl TolOverrides {
    pub const KEYS: [&'static str; 4] = ["wolff", "solver", "root", "stop"];

    /// Parses `wolff=1e-9,solver=1e-11`.
    pub fn parse(s: &str) -> Result<Self, ConfigError> {
        let mut out = Self::default();
        for item in s.split(',').map(str::trim).filter(|i| !i.is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| ConfigError::new(format!("tolerance override `{item}` is not key=value")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| ConfigError::new(format!("tolerance override `{item}`: not a number")))?;
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError::new(format!("tolerance override `{item}` must be positive")));
            }
            let slot = match k.trim() {
                "wolff" => &mut out.wolff,
                "solver" => &mut out.solver,
                "root" => &mut out.root,
                "stop" => &mut out.stop,
                other => {
                    return Err(ConfigError::new(format!(
                        "unknown tolerance `{other}`; expected one of {}",
                        Self::KEYS.join(", ")
                    )))
                }
            };
            *slot = Some(v);
        }
        Ok(out)
    }
}

/// 1-based line of a byte offset.
fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

fn span_line(src: &str, span: Range<usize>) -> Option<usize> {
    Some(line_of(src, span.start))
}

/// Line of the `[name]` header or of a top-level `name = ...` key.
fn table_line(src: &str, name: &str) -> Option<usize> {
    let header = format!("[{name}]");
    src.lines()
        .position(|l| {
            let t = l.trim();
            t == header || t.split_once('=').is_some_and(|(k, _)| k.trim() == name)
        })
        .map(|i| i + 1)
}

fn point(coords: &[f64], n: usize, line: Option<usize>, what: &str) -> Result<Point, ConfigError> {
    if coords.len() != n {
        return Err(ConfigError::at(
            line,
            format!("{what} has {} coordinates, expected n = {n}", coords.len()),
        ));
    }
    Point::try_from(coords.to_vec()).map_err(|e| ConfigError::at(line, format!("RangeError: {what}: {e}")))
}

fn check_positive(v: f64, line: Option<usize>, what: &str) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::at(line, format!("RangeError: {what} = {v} must be positive")))
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let src = std::fs::read_to_string(path).map_err(|e| ConfigError {
            file: Some(path.to_path_buf()),
            line: None,
            message: format!("cannot read: {e}"),
        })?;
        Self::parse(&src).map_err(|mut e| {
            e.file = Some(path.to_path_buf());
            e
        })
    }

    pub fn parse(src: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(src).map_err(|e| {
            let line = e.span().map(|s| line_of(src, s.start));
            ConfigError::at(line, e.message().trim().to_string())
        })?;
        let problem = match (&raw.params, &raw.measure, &raw.grid) {
            (None, None, None) => None,
            (Some(p), Some(m), Some(g)) => Some(build_problem(src, p, m, g, raw.solver.as_ref())?),
            _ => {
                return Err(ConfigError::new(
                    "[params], [measure] and [grid] must be given together",
                ))
            }
        };
        let need = |task: Task, block: &str| -> Result<&Problem, ConfigError> {
            problem.as_ref().ok_or_else(|| {
                ConfigError::at(
                    table_line(src, "tasks"),
                    format!("task `{task:?}` needs [params], [measure] and [grid]{block}").to_lowercase(),
                )
            })
        };
        let iteration = match (&raw.iteration, &problem) {
            (Some(it), _) => Some(build_iteration(it, need(Task::Iterate, "")?, table_line(src, "iteration"))?),
            (None, Some(pb)) => Some(build_iteration(&RawIteration::default(), pb, None)?),
            (None, None) => None,
        };
        let mut wolff = None;
        if let Some(w) = &raw.wolff {
            let line = table_line(src, "wolff");
            let pb = need(Task::Wolff, "")?;
            wolff = Some(build_wolff(w, pb, line)?);
        }
        let mut functionals = None;
        if let Some(f) = &raw.functionals {
            let line = table_line(src, "functionals");
            let pb = need(Task::Functionals, "")?;
            let center = point(&f.center, pb.params.n(), line, "cylinder center")?;
            let cylinder = Cylinder::new(center, f.time, f.rho, f.delta).map_err(|e| ConfigError::core(line, e))?;
            cylinder
                .check_inside(&pb.grid, pb.params.p())
                .map_err(|e| ConfigError::core(line, e))?;
            functionals = Some(FunctionalsSetup {
                cylinder,
                level: f.level,
            });
        }
        for &task in &raw.tasks {
            match task {
                Task::Solve => {
                    need(task, "")?;
                }
                Task::Wolff if wolff.is_none() => {
                    return Err(ConfigError::at(table_line(src, "tasks"), "task `wolff` needs a [wolff] table"));
                }
                Task::Functionals if functionals.is_none() => {
                    return Err(ConfigError::at(
                        table_line(src, "tasks"),
                        "task `functionals` needs a [functionals] table",
                    ));
                }
                Task::Iterate => {
                    need(task, "")?;
                }
                _ => {}
            }
        }
        let suite_line = raw.suite.as_ref().and_then(|s| span_line(src, s.span()));
        let suite_name = raw.suite.as_ref().map(|s| s.get_ref().clone()).unwrap_or_else(|| "standard".into());
        let mut suites = BTreeMap::new();
        for (name, s) in &raw.suites {
            let line = span_line(src, s.span());
            let cfg = s.get_ref();
            if cfg.levels == 0 && !cfg.cases.is_empty() {
                return Err(ConfigError::at(line, format!("RangeError: suite `{name}` needs levels >= 1")));
            }
            for c in &cfg.cases {
                make_params(c.n, c.p, cfg.eps_reg, None, None).map_err(|e| ConfigError::core(line, e))?;
            }
            suites.insert(name.clone(), cfg.clone());
        }
        let out = Self {
            tasks: raw.tasks,
            seed: raw.seed,
            out: raw.out,
            problem,
            iteration,
            wolff,
            functionals,
            suite_name: suite_name.clone(),
            suites,
            suite_line,
            tol: TolOverrides::default(),
        };
        if raw.suite.is_some() || out.tasks.iter().any(|t| matches!(t, Task::Verify | Task::Suite)) {
            out.suite()?;
        }
        Ok(out)
    }

    /// Makes `name` the suite used by `verify` and `suite`.
    pub fn select_suite(&mut self, name: &str) -> Result<(), ConfigError> {
        self.suite_name = name.to_string();
        self.suite_line = None;
        self.suite().map(|_| ())
    }

    /// The selected suite with seed and tolerance overrides applied.
    /// `standard` is built in unless the config redefines it.
    pub fn suite(&self) -> Result<SuiteConfig, ConfigError> {
        let mut s = match self.suites.get(&self.suite_name) {
            Some(s) => s.clone(),
            None if self.suite_name == "standard" => SuiteConfig::standard(),
            None => {
                return Err(ConfigError::at(
                    self.suite_line,
                    format!("no suite named `{}`", self.suite_name),
                ))
            }
        };
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        if let Some(t) = self.tol.wolff {
            s.wolff_tol = t;
            s.iteration.wolff_tol = t;
        }
        if let Some(t) = self.tol.solver {
            s.solver.tol = t;
        }
        if let Some(t) = self.tol.root {
            s.iteration.root_tol = t;
        }
        if let Some(t) = self.tol.stop {
            s.iteration.stop_ratio = t;
        }
        Ok(s)
    }

    pub fn problem(&self) -> Result<&Problem, ConfigError> {
        self.problem
            .as_ref()
            .ok_or_else(|| ConfigError::new("this command needs [params], [measure] and [grid]"))
    }

    /// Applies `--seed` and `--tol-overrides`.
    pub fn apply_overrides(&mut self, seed: Option<u64>, tol: &TolOverrides) {
        if seed.is_some() {
            self.seed = seed;
        }
        self.tol = tol.clone();
        if let Some(pb) = &mut self.problem {
            if let Some(t) = tol.solver {
                pb.solver.tol = t;
            }
        }
        if let Some(it) = &mut self.iteration {
            if let Some(t) = tol.wolff {
                it.options.wolff_tol = t;
            }
            if let Some(t) = tol.root {
                it.options.root_tol = t;
            }
            if let Some(t) = tol.stop {
                it.options.stop_ratio = t;
            }
        }
        if let (Some(w), Some(t)) = (&mut self.wolff, tol.wolff) {
            w.tol = t;
        }
    }
}

fn build_problem(
    src: &str,
    p: &RawParams,
    m: &RawMeasure,
    g: &RawGrid,
    s: Option<&RawSolver>,
) -> Result<Problem, ConfigError> {
    let (n, pv) = (*p.n.get_ref(), *p.p.get_ref());
    let n_line = span_line(src, p.n.span());
    let p_line = span_line(src, p.p.span());
    make_params(n, pv, 1e-6, None, None).map_err(|e| {
        let line = if (1..=3).contains(&n) { p_line } else { n_line };
        ConfigError::core(line, e)
    })?;
    let eps = p.eps_reg.as_ref().map_or(1e-6, |e| *e.get_ref());
    let eps_line = p.eps_reg.as_ref().and_then(|e| span_line(src, e.span()));
    make_params(n, pv, eps, None, None).map_err(|e| ConfigError::core(eps_line, e))?;
    let lambda = p.lambda.as_ref().map(|l| *l.get_ref());
    let lambda_line = p.lambda.as_ref().and_then(|l| span_line(src, l.span()));
    make_params(n, pv, eps, lambda, None).map_err(|e| ConfigError::core(lambda_line, e))?;
    let k = p.k.as_ref().map(|k| *k.get_ref());
    let k_line = p.k.as_ref().and_then(|k| span_line(src, k.span()));
    let params = make_params(n, pv, eps, lambda, k).map_err(|e| ConfigError::core(k_line, e))?;

    let m_line = table_line(src, "measure");
    let spec = MeasureSpec {
        dim: n,
        domain_radius: m.domain_radius.unwrap_or(1.0),
        atoms: m.atoms.clone(),
        radial: m.radial.clone(),
        uniform_density: m.uniform_density,
    };
    for a in &spec.atoms {
        if a.location.dim() != n {
            return Err(ConfigError::at(m_line, format!("atom location has dimension {}, expected n = {n}", a.location.dim())));
        }
    }
    let measure = RadonMeasure::try_from(spec).map_err(|e| ConfigError::core(m_line, e))?;

    let g_line = table_line(src, "grid");
    let grid = GridSpec::new(n, g.nx, g.nt, measure.domain_radius(), g.horizon.unwrap_or(1.0))
        .map_err(|e| ConfigError::core(g_line, e))?;

    let s_line = table_line(src, "solver");
    let mut solver = SolverOptions::default();
    let mut slice_times = vec![grid.horizon];
    if let Some(s) = s {
        if let Some(t) = s.tol {
            check_positive(t, s_line, "solver tol")?;
            solver.tol = t;
        }
        if let Some(it) = s.max_iterations {
            solver.max_iterations = it;
        }
        if let Some(w) = s.mollify_width {
            if !(w >= grid.h()) {
                return Err(ConfigError::at(
                    s_line,
                    format!("RangeError: mollify_width = {w} is below the grid spacing {}", grid.h()),
                ));
            }
            solver.mollify_width = Some(w);
        }
        if let Some(ts) = &s.slice_times {
            if let Some(bad) = ts.iter().find(|t| !(**t >= 0.0 && **t <= grid.horizon)) {
                return Err(ConfigError::at(
                    s_line,
                    format!("RangeError: slice time {bad} outside [0, {}]", grid.horizon),
                ));
            }
            slice_times = ts.clone();
        }
    }
    Ok(Problem {
        params,
        measure,
        grid,
        solver,
        slice_times,
    })
}

fn build_iteration(it: &RawIteration, pb: &Problem, line: Option<usize>) -> Result<IterationSetup, ConfigError> {
    let n = pb.params.n();
    let x0 = match &it.x0 {
        Some(c) => point(c, n, line, "x0")?,
        None => Point::origin(n),
    };
    let t0 = it.t0.unwrap_or(0.5 * pb.grid.horizon);
    if !(t0 > 0.0 && t0 < pb.grid.horizon) {
        return Err(ConfigError::at(
            line,
            format!("RangeError: t0 = {t0} must lie in (0, {})", pb.grid.horizon),
        ));
    }
    if x0.norm() >= pb.grid.radius {
        return Err(ConfigError::at(line, "RangeError: x0 must lie inside the domain ball"));
    }
    let d = IterationOptions::default();
    let options = IterationOptions {
        kappa: it.kappa.unwrap_or(d.kappa),
        r0: it.r0.or(d.r0),
        j_max: it.j_max.unwrap_or(d.j_max),
        root_tol: it.root_tol.unwrap_or(d.root_tol),
        stop_ratio: it.stop_ratio.unwrap_or(d.stop_ratio),
        scan_points: it.scan_points.unwrap_or(d.scan_points),
        wolff_tol: d.wolff_tol,
    };
    if !(options.kappa > 0.0 && options.kappa < 1.0) {
        return Err(ConfigError::at(line, format!("RangeError: kappa = {} must lie in (0, 1)", options.kappa)));
    }
    if let Some(r0) = options.r0 {
        check_positive(r0, line, "r0")?;
    }
    if options.j_max == 0 {
        return Err(ConfigError::at(line, "RangeError: j_max must be at least 1"));
    }
    check_positive(options.root_tol, line, "root_tol")?;
    check_positive(options.stop_ratio, line, "stop_ratio")?;
    if options.scan_points < 2 {
        return Err(ConfigError::at(line, "RangeError: scan_points must be at least 2"));
    }
    Ok(IterationSetup { x0, t0, options })
}

fn build_wolff(w: &RawWolff, pb: &Problem, line: Option<usize>) -> Result<WolffSetup, ConfigError> {
    let n = pb.params.n();
    let mut points = w
        .points
        .iter()
        .map(|c| point(c, n, line, "wolff point"))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(l) = &w.line {
        let a = point(&l.from, n, line, "line start")?;
        let b = point(&l.to, n, line, "line end")?;
        if l.count < 2 {
            return Err(ConfigError::at(line, "RangeError: line count must be at least 2"));
        }
        for i in 0..l.count {
            let s = i as f64 / (l.count - 1) as f64;
            let c: Vec<f64> = (0..n).map(|k| a.coord(k) + s * (b.coord(k) - a.coord(k))).collect();
            points.push(point(&c, n, line, "line point")?);
        }
    }
    if points.is_empty() {
        return Err(ConfigError::at(line, "[wolff] needs `points` or `line`"));
    }
    let radii = w.radii.clone().unwrap_or_else(|| vec![pb.grid.radius]);
    if radii.is_empty() {
        return Err(ConfigError::at(line, "[wolff] radii must not be empty"));
    }
    for r in &radii {
        check_positive(*r, line, "wolff radius")?;
    }
    let tol = w.tol.unwrap_or(wolfflab_core::wolff::DEFAULT_TOL);
    check_positive(tol, line, "wolff tol")?;
    Ok(WolffSetup { points, radii, tol })
}
