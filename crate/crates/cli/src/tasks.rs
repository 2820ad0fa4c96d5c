//! Subcommand bodies. Every task writes its artifacts under the output
//! directory and reports what it wrote on stderr.

use crate::cache::{write_atomic, CacheOutcome, FieldCache, Sidecar};
use crate::config::{ConfigError, ExperimentConfig, Problem, Task};
use anyhow::{Context, Result};
use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;
use wolfflab_core::functionals::EnergyAudit;
use wolfflab_core::io::{content_key, iteration_csv, load_field, save_field, suite_artifacts};
use wolfflab_core::km_iteration::Delta0Report;
use wolfflab_core::{
    a_star, energy_audit, run_iteration, run_suite, wolff_potential, CutoffPair, GridField, IterationParams,
    LevelFunctionalReport, SuiteCheck, WolffExponents,
};

/// A run that completed but violated acceptance bounds.
#[derive(Debug)]
pub struct AcceptanceFailure(pub Vec<String>);

impl std::fmt::Display for AcceptanceFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} acceptance checks failed", self.0.len())
    }
}

impl std::error::Error for AcceptanceFailure {}

pub struct RunContext {
    pub config: ExperimentConfig,
    pub out: PathBuf,
    /// Field given on the command line instead of the configured solve.
    pub field_path: Option<PathBuf>,
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    write_atomic(&path, text.as_bytes())?;
    eprintln!("wrote {}", path.display());
    Ok(path)
}

fn json<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn csv_text(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

fn coord_header(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("x{i}")).collect()
}

impl RunContext {
    fn problem(&self) -> Result<&Problem> {
        Ok(self.config.problem()?)
    }

    fn cache(&self) -> FieldCache {
        FieldCache::new(self.out.join("cache"))
    }

    /// Solved field for the configured problem, from `--field` or the cache.
    fn field(&self) -> Result<GridField> {
        let pb = self.problem()?;
        if let Some(path) = &self.field_path {
            let (header, field) = load_field(path)?;
            let want = content_key(&pb.params)?;
            if header.params_hash != want {
                return Err(ConfigError::new(format!(
                    "{} was solved for different parameters than the config",
                    path.display()
                ))
                .into());
            }
            return Ok(field);
        }
        let (field, _, outcome) = self.cache().get_or_solve(pb)?;
        report_cache(outcome);
        Ok(field)
    }

    pub fn run(&self, tasks: &[Task]) -> Result<()> {
        let mut ordered = tasks.to_vec();
        ordered.sort();
        ordered.dedup();
        let mut failures = Vec::new();
        for task in ordered {
            let t = Instant::now();
            match task {
                Task::Solve => self.solve()?,
                Task::Wolff => self.wolff()?,
                Task::Functionals => self.functionals()?,
                Task::Iterate => self.iterate()?,
                Task::Verify => {
                    if let Err(e) = self.suite(true) {
                        match e.downcast::<AcceptanceFailure>() {
                            Ok(f) => failures.extend(f.0),
                            Err(e) => return Err(e),
                        }
                    }
                }
                Task::Suite => self.suite(false)?,
            }
            eprintln!("{task:?} finished in {:.1} s", t.elapsed().as_secs_f64());
        }
        if failures.is_empty() {
            Ok(())
        } else {
            Err(AcceptanceFailure(failures).into())
        }
    }

    pub fn solve(&self) -> Result<()> {
        let pb = self.problem()?;
        let (field, side, outcome) = self.cache().get_or_solve(pb)?;
        report_cache(outcome);
        let dir = self.out.join("solve");
        fs::create_dir_all(&dir)?;
        let path = dir.join("field.wlf");
        let hash = wolfflab_core::io::params_hash(&pb.params)?;
        save_field(&path, &field, &hash)?;
        eprintln!("wrote {}", path.display());
        write_text(&dir, "field.json", &json::<Sidecar>(&side)?)?;
        write_text(&dir, "slices.csv", &slices_csv(&field, &pb.slice_times)?)?;
        for w in &side.diagnostics.warnings {
            eprintln!("warning: {w}");
        }
        Ok(())
    }

    pub fn wolff(&self) -> Result<()> {
        let pb = self.problem()?;
        let setup = self
            .config
            .wolff
            .as_ref()
            .ok_or_else(|| ConfigError::new("the wolff command needs a [wolff] table"))?;
        let exps = WolffExponents::from(&pb.params);
        let n = pb.params.n();
        let mut header = coord_header(n);
        header.extend(["R", "value", "divergent", "error_estimate"].map(String::from));
        let mut rows = Vec::new();
        for x in &setup.points {
            for &r in &setup.radii {
                let w = wolff_potential(&pb.measure, exps, x, r, setup.tol)?;
                let mut row: Vec<String> = x.coords().iter().map(|c| num(*c)).collect();
                row.extend([num(r), num(w.value), w.divergent.to_string(), num(w.error_estimate)]);
                rows.push(row);
            }
        }
        write_text(&self.out.join("wolff"), "wolff.csv", &csv_text(&header, rows)?)?;
        Ok(())
    }

    pub fn functionals(&self) -> Result<()> {
        let pb = self.problem()?;
        let setup = self
            .config
            .functionals
            .as_ref()
            .ok_or_else(|| ConfigError::new("the functionals command needs a [functionals] table"))?;
        let u = self.field()?;
        let cyl = &setup.cylinder;
        let cut = CutoffPair::new(u.grid(), cyl, &pb.params)?;
        let level = a_star(&u, cyl, setup.level, cyl.delta, &cut, &pb.params)?;
        let energy = energy_audit(&u, cyl, setup.level, cyl.delta, &cut, &pb.measure, &pb.params)?;
        #[derive(Serialize)]
        struct Report {
            a_star: LevelFunctionalReport,
            energy: EnergyAudit,
            gamma_emp: f64,
        }
        let rep = Report {
            a_star: level,
            gamma_emp: energy.gamma_emp(),
            energy,
        };
        write_text(&self.out.join("functionals"), "functionals.json", &json(&rep)?)?;
        Ok(())
    }

    pub fn iterate(&self) -> Result<()> {
        let pb = self.problem()?;
        let setup = self
            .config
            .iteration
            .as_ref()
            .ok_or_else(|| ConfigError::new("the iterate command needs an [iteration] table"))?;
        let u = self.field()?;
        let iter = IterationParams::fit(&u, &pb.params, &setup.x0, setup.t0, &setup.options)?;
        let sum = run_iteration(&u, &iter, &pb.params, &pb.measure)?;
        let dir = self.out.join("iterate");
        write_text(&dir, "iteration.csv", &iteration_csv(&sum)?)?;
        #[derive(Serialize)]
        struct Summary<'a> {
            params: &'a IterationParams,
            levels: usize,
            delta0: &'a Delta0Report,
            l_last: f64,
            tail_bound: f64,
            l_limit: f64,
            max_gamma: f64,
            bound_rhs: f64,
            gamma_emp: f64,
            u_at_point: f64,
            local_oscillation: f64,
            consistent: bool,
            invariants: wolfflab_core::km_iteration::InvariantCheck,
        }
        let s = Summary {
            params: &iter,
            levels: sum.state.records.len(),
            delta0: &sum.delta0,
            l_last: sum.l_last,
            tail_bound: sum.tail_bound,
            l_limit: sum.l_limit,
            max_gamma: sum.max_gamma,
            bound_rhs: sum.bound_rhs,
            gamma_emp: sum.gamma_emp,
            u_at_point: sum.u_at_point,
            local_oscillation: sum.local_oscillation,
            consistent: sum.consistent,
            invariants: sum.invariants(&pb.params),
        };
        write_text(&dir, "summary.json", &json(&s)?)?;
        Ok(())
    }

    /// Runs the named suite. With `enforce`, failed checks become an
    /// [`AcceptanceFailure`] after the artifacts are written.
    pub fn suite(&self, enforce: bool) -> Result<()> {
        let cfg = self.config.suite()?;
        if cfg.cases.is_empty() {
            eprintln!("suite `{}` has no cases; nothing to do", self.config.suite_name);
            return Ok(());
        }
        let start = Instant::now();
        let rep = run_suite(&cfg, |f| {
            eprintln!(
                "[{:>7.1} s] {} level {}: max gamma (i) {:.4}, (ii) {:.4}",
                start.elapsed().as_secs_f64(),
                f.case.label(),
                f.level,
                f.max_gamma_i(),
                f.max_gamma_ii()
            );
        })?;
        let dir = self.out.join("suite").join(&self.config.suite_name);
        for (name, text) in suite_artifacts(&rep)? {
            write_text(&dir, &name, &text)?;
        }
        let failed: Vec<SuiteCheck> = rep.checks().into_iter().filter(|c| !c.passed).collect();
        let total = rep.checks().len();
        eprintln!("{} of {total} checks passed", total - failed.len());
        for c in &failed {
            eprintln!("FAIL {} {}: value {:.6e}, bound {:.6e}", c.check, c.subject, c.value, c.bound);
        }
        if enforce && !failed.is_empty() {
            return Err(AcceptanceFailure(rep.failures()).into());
        }
        Ok(())
    }
}

fn report_cache(outcome: CacheOutcome) {
    match outcome {
        CacheOutcome::Hit => eprintln!("field taken from cache"),
        CacheOutcome::Miss => eprintln!("field solved and cached"),
        CacheOutcome::Replaced => eprintln!("cached field failed its checksum; solved again"),
    }
}

/// Values on the active nodes at the time levels nearest to `times`.
fn slices_csv(u: &GridField, times: &[f64]) -> Result<String> {
    let g = u.grid();
    let mut header = vec!["t".to_string()];
    header.extend(coord_header(g.n));
    header.push("u".into());
    let mut rows = Vec::new();
    for &t in times {
        let k = g.nearest_time(t);
        for node in (0..g.node_count()).filter(|&i| g.is_active(i)) {
            let mut row = vec![num(g.time(k))];
            row.extend(g.node_point(node).coords().iter().map(|c| num(*c)));
            row.push(num(u.value(k, node)));
            rows.push(row);
        }
    }
    csv_text(&header, rows)
}
