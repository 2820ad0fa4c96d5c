//! Acceptance suite: one [PASS]/[FAIL] line per criterion. Run with
//! `cargo test -p wolfflab-core --test acceptance`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;
use wolfflab_core::geometry::unit_ball_volume;
use wolfflab_core::io::suite_artifacts;
use wolfflab_core::suite::{refinement_ratio, run_suite, MeasureKind, SuiteConfig, SuiteReport};
use wolfflab_core::verifier::{check_proposition, covering_sigma, proposition_regime, proposition_threshold, Regime};
use wolfflab_core::{
    make_params, solve_ibvp, wolff_potential, GridField, GridSpec, Point, RadonMeasure, WolffExponents,
};

const WOLFF_TOL: f64 = 1e-10;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn random_point(rng: &mut ChaCha8Rng, n: usize, radius: f64) -> Point {
    loop {
        let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-radius..radius)).collect();
        let p = Point::new(&c);
        if p.norm() < radius {
            return p;
        }
    }
}

/// m^{1/(p−1)}∫_d^R r^{(p−n)/(p−1)−1} dr for a Dirac of mass m at distance d.
fn dirac_closed_form(m: f64, n: usize, p: f64, d: f64, r: f64) -> f64 {
    if d >= r {
        return 0.0;
    }
    let e = (p - n as f64) / (p - 1.0);
    let scale = m.powf(1.0 / (p - 1.0));
    if e.abs() < 1e-14 {
        scale * (r / d).ln()
    } else {
        scale * (r.powf(e) - d.powf(e)) / e
    }
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for n in [1usize, 2] {
        for p in [1.2, 1.5, 1.8] {
            let exps = WolffExponents::new(n, p).unwrap();
            let atom = Point::origin(n).shifted(0, 0.1);
            let dirac = RadonMeasure::dirac(atom, 0.7, 1.0).unwrap();
            let c = 0.5;
            let uniform = RadonMeasure::uniform(n, c, 1.0).unwrap();
            for _ in 0..20 {
                let x = random_point(&mut rng, n, 0.9);
                if x.dist(&atom) < 1e-3 {
                    continue;
                }
                let r = rng.gen_range(0.02..1.0);
                let got = wolff_potential(&dirac, exps, &x, r, WOLFF_TOL).unwrap().value;
                let want = dirac_closed_form(0.7, n, p, x.dist(&atom), r);
                let err = if want == 0.0 { got.abs() } else { (got / want - 1.0).abs() };
                worst = worst.max(err);
                // Uniform density with B_R(x) inside the support.
                let x = random_point(&mut rng, n, 0.6);
                let r = rng.gen_range(0.01..(1.0 - x.norm()));
                let got = wolff_potential(&uniform, exps, &x, r, WOLFF_TOL).unwrap().value;
                let want = (c * unit_ball_volume(n)).powf(1.0 / (p - 1.0)) * (p - 1.0) / p * r.powf(p / (p - 1.0));
                worst = worst.max((got / want - 1.0).abs());
                count += 2;
            }
        }
    }
    outcome(worst <= 1e-6, format!("{count} evaluations, max relative error {worst:.2e} (bound 1e-6)"))
}

fn criterion_2() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut flagged = true;
    let mut cases = 0;
    for n in [2usize, 3] {
        for p in [1.2, 1.5, 1.8] {
            let exps = WolffExponents::new(n, p).unwrap();
            let m = RadonMeasure::dirac(Point::origin(n), 1.0, 1.0).unwrap();
            let w = wolff_potential(&m, exps, &Point::origin(n), 0.5, 1e-8).unwrap();
            let analytic = -(n as f64 - p) / (p - 1.0) - 1.0;
            flagged &= w.divergent && w.value.is_infinite();
            let slope = w.inner_slope.unwrap_or(f64::NAN);
            worst = worst.max(((slope - analytic) / analytic).abs());
            cases += 1;
        }
    }
    outcome(
        flagged && worst <= 0.05,
        format!("{cases} centers, all flagged +inf: {flagged}, max slope deviation {:.3}% (bound 5%)", 100.0 * worst),
    )
}

fn criterion_3() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for n in [1usize, 2] {
        for p in [1.2, 1.5, 1.8] {
            let exps = WolffExponents::new(n, p).unwrap();
            for kind in MeasureKind::ALL {
                let m = kind.build(n, 1.0).unwrap();
                let x = Point::origin(n).shifted(0, 0.23);
                let base = wolff_potential(&m, exps, &x, 0.6, WOLFF_TOL).unwrap().value;
                for s in [0.5, 2.0, 10.0] {
                    let scaled = wolff_potential(&m.scaled(s).unwrap(), exps, &x, 0.6, WOLFF_TOL).unwrap().value;
                    let want = s.powf(1.0 / (p - 1.0)) * base;
                    worst = worst.max((scaled / want - 1.0).abs());
                    count += 1;
                }
            }
        }
    }
    outcome(worst <= 1e-8, format!("{count} scalings, max relative deviation {worst:.2e} (bound 1e-8)"))
}

fn criterion_4(rep: &SuiteReport) -> Outcome {
    let worst = rep
        .fields
        .iter()
        .map(|f| f.proposition.mass.gamma_emp)
        .fold(0.0, f64::max);
    outcome(
        rep.fields.iter().all(|f| f.proposition.mass_bound_holds()),
        format!(
            "{} fields, max sup_t Σ|u|h^n / (T·μ(B_R)) = {worst:.4} (bound 1.05)",
            rep.fields.len()
        ),
    )
}

/// Implicit Euler for u_t − u_xx = f with zero boundary values, on the
/// same grid and source as the nonlinear solver.
fn linear_heat(grid: &GridSpec, f: &[f64]) -> GridField {
    let nx = grid.nx;
    let (h, dt) = (grid.h(), grid.dt());
    let lam = dt / (h * h);
    let mut cur = vec![0.0; nx];
    let mut values = vec![0.0; nx * (grid.nt + 1)];
    for k in 1..=grid.nt {
        // interior unknowns 1..nx−1
        let m = nx - 2;
        let mut a = vec![-lam; m];
        let mut b = vec![1.0 + 2.0 * lam; m];
        let mut c = vec![-lam; m];
        let mut d: Vec<f64> = (0..m).map(|i| cur[i + 1] + dt * f[i + 1]).collect();
        a[0] = 0.0;
        c[m - 1] = 0.0;
        for i in 1..m {
            let w = a[i] / b[i - 1];
            b[i] -= w * c[i - 1];
            d[i] -= w * d[i - 1];
        }
        let mut x = vec![0.0; m];
        x[m - 1] = d[m - 1] / b[m - 1];
        for i in (0..m - 1).rev() {
            x[i] = (d[i] - c[i] * x[i + 1]) / b[i];
        }
        cur = vec![0.0; nx];
        cur[1..nx - 1].copy_from_slice(&x);
        values[k * nx..(k + 1) * nx].copy_from_slice(&cur);
    }
    GridField::new(*grid, values).unwrap()
}

fn criterion_5() -> Outcome {
    let grid = GridSpec::new(1, 257, 256, 1.0, 0.5).unwrap();
    let params = make_params(1, 1.9, 1e-6, None, None).unwrap();
    let m = RadonMeasure::dirac(Point::origin(1), 1.0, 1.0).unwrap();
    let u = solve_ibvp(&m, &params, &grid).unwrap();
    let f = m.mollify_to_grid(&grid, 2.0 * grid.h()).unwrap();
    let heat = linear_heat(&grid, &f.values);
    let sup = |v: &GridField| v.values().iter().map(|x| x.abs()).fold(0.0, f64::max);
    let (a, b) = (sup(&u), sup(&heat));
    let rel = (a - b).abs() / b;
    outcome(
        rel <= 0.1,
        format!("sup u(p=1.9) = {a:.5}, linear heat = {b:.5}, relative gap {rel:.4} (bound 0.1)"),
    )
}

fn per_case_pairs(rep: &SuiteReport) -> Vec<(&wolfflab_core::suite::FieldReport, &wolfflab_core::suite::FieldReport)> {
    let mut out = Vec::new();
    for a in &rep.fields {
        if let Some(b) = rep.fields.iter().find(|b| b.case == a.case && b.level == a.level + 1) {
            out.push((a, b));
        }
    }
    out
}

fn criterion_6(rep: &SuiteReport) -> Outcome {
    let mut worst: f64 = 1.0;
    let mut finite = true;
    let mut count = 0;
    for f in &rep.fields {
        finite &= f.audits.iter().all(|a| a.gamma_emp.is_finite());
        count += f.audits.len();
    }
    for (a, b) in per_case_pairs(rep) {
        for (x, y) in a.audits.iter().zip(&b.audits) {
            worst = worst.max(refinement_ratio(x.gamma_emp, y.gamma_emp));
        }
    }
    let max_gamma = rep.fields.iter().flat_map(|f| f.audits.iter().map(|a| a.gamma_emp)).fold(0.0, f64::max);
    outcome(
        finite && worst <= 2.0 && count > 0,
        format!(
            "{count} audits on {} fields, all finite: {finite}, max gamma {max_gamma:.4}, worst consecutive-grid factor {worst:.4} (bound 2)",
            rep.fields.len()
        ),
    )
}

fn criterion_7(rep: &SuiteReport) -> Outcome {
    let mut runs = 0;
    let mut bad = Vec::new();
    for f in &rep.fields {
        for s in &f.samples {
            runs += 1;
            match &s.iteration {
                Ok(o) if o.invariants.all() => {}
                Ok(o) => bad.push(format!("{} L{} #{}: {:?}", f.case.label(), f.level, s.id, o.invariants)),
                Err(e) => bad.push(format!("{} L{} #{}: {e}", f.case.label(), f.level, s.id)),
            }
        }
    }
    let converged = rep
        .fields
        .iter()
        .flat_map(|f| f.samples.iter())
        .filter(|s| matches!(&s.iteration, Ok(o) if o.stop_reason == wolfflab_core::km_iteration::StopReason::Converged))
        .count();
    outcome(
        bad.is_empty(),
        format!(
            "{runs} runs, {converged} converged below 1e-6·δ0, violations {}{}",
            bad.len(),
            bad.first().map(|b| format!(" (first: {b})")).unwrap_or_default()
        ),
    )
}

fn criterion_8(rep: &SuiteReport) -> Outcome {
    let finite = rep.fields.iter().all(|f| f.max_lemma_gamma().is_finite());
    let (a, b) = rep.finest_pair().expect("three levels");
    let mut worst: f64 = 1.0;
    for f in rep.fields_at(a) {
        let g = rep.fields_at(b).find(|g| g.case == f.case).unwrap();
        worst = worst.max(refinement_ratio(f.max_lemma_gamma(), g.max_lemma_gamma()));
    }
    let roots: usize = rep
        .fields
        .iter()
        .flat_map(|f| f.samples.iter())
        .filter_map(|s| s.iteration.as_ref().ok())
        .map(|o| o.root_levels)
        .sum();
    let top = rep.fields.iter().map(|f| f.max_lemma_gamma()).fold(0.0, f64::max);
    outcome(
        finite && worst <= 2.0,
        format!(
            "max_j gamma_j over suite {top:.4}, worst finest-pair factor {worst:.4} (bound 2); root-branch levels j>=1: {roots}"
        ),
    )
}

fn criterion_9(rep: &SuiteReport) -> Outcome {
    let (a, b) = rep.finest_pair().expect("three levels");
    let mut finite = true;
    let mut consistent = true;
    let mut min_samples = usize::MAX;
    for f in &rep.fields {
        min_samples = min_samples.min(f.samples.len());
        for s in &f.samples {
            finite &= s.theorem_i.gamma_emp.is_finite() && s.theorem_ii.gamma_emp.is_finite();
            consistent &= matches!(&s.iteration, Ok(o) if o.consistent);
        }
    }
    let gi = (rep.max_over_level(a, |f| f.max_gamma_i()), rep.max_over_level(b, |f| f.max_gamma_i()));
    let gii = (rep.max_over_level(a, |f| f.max_gamma_ii()), rep.max_over_level(b, |f| f.max_gamma_ii()));
    let (ri, rii) = (refinement_ratio(gi.0, gi.1), refinement_ratio(gii.0, gii.1));
    let no_r2 = rep
        .fields_at(b)
        .flat_map(|f| f.samples.iter())
        .map(|s| s.theorem_i.gamma_without_r2)
        .fold(0.0, f64::max);
    outcome(
        finite && consistent && min_samples >= 25 && ri <= 2.0 && rii <= 2.0,
        format!(
            ">= {min_samples} samples per field, finite: {finite}, u <= l_limit everywhere: {consistent}; \
             suite max (i) {:.4} -> {:.4} factor {ri:.3}, (ii) {:.4} -> {:.4} factor {rii:.3} (bound 2); \
             finest max (i) without R^2 {no_r2:.4}",
            gi.0, gi.1, gii.0, gii.1
        ),
    )
}

fn criterion_10(rep: &SuiteReport) -> Outcome {
    // Flip test: uniform density with μ(B_1) = 0.05, n = 1, p = 1.5, T* = 0.8.
    let params = make_params(1, 1.5, 1e-6, None, None).unwrap();
    let m = RadonMeasure::uniform(1, 0.025, 1.0).unwrap();
    let mass = m.ball_mass(&Point::origin(1), 1.0);
    let ts = proposition_threshold(&params, 1.0, mass);
    let mut flips = true;
    let mut details = Vec::new();
    let mut stable = true;
    for (t, want) in [(1.01 * ts, Regime::LongTime), (0.99 * ts, Regime::ShortTime)] {
        flips &= proposition_regime(&params, 1.0, mass, t) == want;
        let mut gammas = Vec::new();
        for level in 0..3 {
            let g = GridSpec::new(1, 65 * (1 << level) - ((1 << level) - 1), 64 << level, 1.0, t).unwrap();
            let u = solve_ibvp(&m, &params, &g).unwrap();
            let r = check_proposition(&u, &m, &params, 1e-8).unwrap();
            flips &= r.regime == want;
            gammas.push(r.estimate.gamma_emp);
        }
        let ratio = refinement_ratio(gammas[1], gammas[2]);
        stable &= gammas.iter().all(|g| g.is_finite() && *g > 0.0) && ratio <= 2.0;
        details.push(format!("T={t:.4} {want:?} gamma {:.4} -> {:.4} factor {ratio:.3}", gammas[1], gammas[2]));
    }
    // Suite fields: finite ratios stable between the finest grids, σ ∈ (0, 1].
    let (a, b) = rep.finest_pair().expect("three levels");
    let mut suite_worst: f64 = 1.0;
    let mut sigma_ok = true;
    let mut regimes = [0usize; 2];
    for f in rep.fields_at(a) {
        let g = rep.fields_at(b).find(|g| g.case == f.case).unwrap();
        suite_worst = suite_worst.max(refinement_ratio(f.proposition.estimate.gamma_emp, g.proposition.estimate.gamma_emp));
        regimes[(g.proposition.regime == Regime::ShortTime) as usize] += 1;
    }
    for f in &rep.fields {
        let s = f.proposition.sigma;
        sigma_ok &= s > 0.0 && s <= 1.0;
        let again = covering_sigma(
            &make_params(f.case.n, f.case.p, 1e-6, None, None).unwrap(),
            f.grid.radius,
            f.proposition.ball_mass,
            f.grid.horizon,
        );
        sigma_ok &= again == s;
        stable &= f.proposition.estimate.gamma_emp.is_finite();
    }
    outcome(
        flips && stable && sigma_ok && suite_worst <= 2.0,
        format!(
            "threshold {ts:.6}, flips: {flips}; {}; suite fields long/short {}/{} worst factor {suite_worst:.3}; sigma in (0,1]: {sigma_ok}",
            details.join("; "),
            regimes[0],
            regimes[1]
        ),
    )
}

fn criterion_11(cfg: &SuiteConfig, first: &[(String, String)]) -> Outcome {
    // Rerun on a single worker thread; the reports must not depend on scheduling.
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let second = pool.install(|| run_suite(cfg, |_| {})).unwrap();
    let second = suite_artifacts(&second).unwrap();
    let same = first == second.as_slice();
    let bytes: usize = first.iter().map(|(_, s)| s.len()).sum();
    outcome(same, format!("{} artifacts, {bytes} bytes, byte-identical on a one-thread rerun: {same}", first.len()))
}

fn main() {
    let mut all = true;
    let mut report = |id: usize, name: &str, start: Instant, o: Outcome| {
        let tag = if o.pass { "[PASS]" } else { "[FAIL]" };
        println!("{tag} {id:>2} {name}: {} ({:.1}s)", o.detail, start.elapsed().as_secs_f64());
        all &= o.pass;
    };
    let t = Instant::now();
    report(1, "wolff closed forms", t, criterion_1());
    let t = Instant::now();
    report(2, "wolff divergence", t, criterion_2());
    let t = Instant::now();
    report(3, "wolff homogeneity", t, criterion_3());
    let t = Instant::now();
    report(5, "solver p->2 continuity", t, criterion_5());

    let cfg = SuiteConfig::standard();
    let t = Instant::now();
    let suite = run_suite(&cfg, |_| {}).expect("standard suite runs");
    println!("       standard suite: {} fields in {:.1}s", suite.fields.len(), t.elapsed().as_secs_f64());
    let t = Instant::now();
    report(4, "mass inequality", t, criterion_4(&suite));
    let t = Instant::now();
    report(6, "energy audit", t, criterion_6(&suite));
    let t = Instant::now();
    report(7, "iteration soundness", t, criterion_7(&suite));
    let t = Instant::now();
    report(8, "main lemma audit", t, criterion_8(&suite));
    let t = Instant::now();
    report(9, "pointwise estimates", t, criterion_9(&suite));
    let t = Instant::now();
    report(10, "global bounds", t, criterion_10(&suite));
    let t = Instant::now();
    let artifacts = suite_artifacts(&suite).unwrap();
    report(11, "determinism", t, criterion_11(&cfg, &artifacts));
    if !all {
        std::process::exit(1);
    }
}
