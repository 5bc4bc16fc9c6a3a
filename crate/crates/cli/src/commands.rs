use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use fracsde::analysis::{
    distributional_limit_check, fit_rate, pathwise_limit_check, theoretical_slope, write_distributional_csv,
    LimitForcing, LimitStudyConfig,
};
use fracsde::constants::{constant, tabulate_constant, ConstantKind, DEFAULT_H_GRID};
use fracsde::fbm::sample_driving;
use fracsde::field::{builtin, builtin_names};
use fracsde::levy::{variance_limit_check, AreaPair, AreaStudyConfig};
use fracsde::schemes::solve;
use fracsde::{
    CnConfig, ErrorStudy, ErrorStudyConfig, LimitCase, ReferenceKind, SamplerMethod, Scheme, SdeInstance, TimeGrid,
};

use crate::args::{Command, RunArgs};

/// Outcome of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    /// The command has nothing to judge.
    None,
}

impl Verdict {
    fn of(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

pub fn run(command: &Command) -> Result<Verdict> {
    let a = command.args();
    check_common(a)?;
    match command {
        Command::Paths(_) => paths(a),
        Command::Convergence(_) => convergence(a),
        Command::Constants(_) => constants(a),
        Command::Levy(_) => levy(a),
        Command::Limit(_) => limit(a),
    }
}

fn check_hurst(h: f64) -> Result<()> {
    if !(h > 0.5 && h < 1.0) {
        bail!("--H must lie in the open interval (1/2, 1) for the scheme studies, got {h}");
    }
    Ok(())
}

fn check_common(a: &RunArgs) -> Result<()> {
    if let Some(h) = a.hurst {
        check_hurst(h)?;
    }
    if !(a.horizon > 0.0 && a.horizon.is_finite()) {
        bail!("--T must be a positive time, got {}", a.horizon);
    }
    if !(a.p >= 1.0 && a.p.is_finite()) {
        bail!("--p must be a finite moment order >= 1, got {}", a.p);
    }
    if a.threads == Some(0) {
        bail!("--threads must be at least 1");
    }
    Ok(())
}

fn hurst(a: &RunArgs) -> f64 {
    a.hurst.unwrap_or(0.7)
}

fn method(a: &RunArgs) -> Result<SamplerMethod> {
    Ok(a.method.parse()?)
}

fn sde(a: &RunArgs, default: &str) -> Result<SdeInstance> {
    let name = a.sde.as_deref().unwrap_or(default);
    builtin(name).with_context(|| format!("--sde must be one of {}", builtin_names().join(", ")))
}

fn n_list(a: &RunArgs, default: &[usize]) -> Result<Vec<usize>> {
    let list = a.n_list.clone().unwrap_or_else(|| default.to_vec());
    if list.is_empty() {
        bail!("--n-list must not be empty");
    }
    Ok(list)
}

fn paths_count(a: &RunArgs, default: usize) -> Result<usize> {
    let paths = a.paths.unwrap_or(default);
    if paths < 2 {
        bail!("--paths must be at least 2, got {paths}");
    }
    Ok(paths)
}

/// `--case` checked against the SDE, or the case implied by it.
fn case(a: &RunArgs, sde: &SdeInstance) -> Result<LimitCase> {
    match &a.case {
        Some(c) => {
            let c: LimitCase = c.parse()?;
            c.validate(sde)?;
            Ok(c)
        }
        None => {
            let c = LimitCase::of(sde)?;
            eprintln!(
                "note: --case not given, using `{c}` implied by {} (m = {})",
                sde.name,
                sde.drivers()
            );
            Ok(c)
        }
    }
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

/// Output files of one command.
struct Outputs {
    csv: PathBuf,
}

impl Outputs {
    fn new(a: &RunArgs, command: &str) -> Self {
        Self {
            csv: a.out.clone().unwrap_or_else(|| PathBuf::from(format!("{command}.csv"))),
        }
    }

    fn companion(&self, suffix: &str) -> PathBuf {
        let stem = self
            .csv
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        self.csv.with_file_name(format!("{stem}{suffix}"))
    }

    fn gnuplot(&self, a: &RunArgs, body: &str) -> Result<()> {
        if !a.emit_gnuplot {
            return Ok(());
        }
        let path = self.companion(".gp");
        let data = self
            .csv
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let script = format!("set datafile separator ','\nset datafile commentschars '#'\nset key autotitle columnhead\ndata = '{data}'\n{body}");
        std::fs::write(&path, script).with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {}", path.display());
        Ok(())
    }
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    f(&mut w)
        .and_then(|_| w.flush())
        .with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn header(command: &str, entries: &[(&str, String)]) -> Vec<String> {
    let mut out = vec![format!("fracsde {} {command}", env!("CARGO_PKG_VERSION"))];
    out.extend(entries.iter().map(|(k, v)| format!("{k} = {v}")));
    out
}

fn paths(a: &RunArgs) -> Result<Verdict> {
    let h = hurst(a);
    let n = a.n.unwrap_or(256);
    let method = method(a)?;
    let sde = a.sde.as_ref().map(|_| sde(a, "")).transpose()?;
    let m = match (a.m, &sde) {
        (Some(m), Some(s)) if m != s.drivers() => {
            bail!("--m {m} does not match SDE `{}` with m = {}", s.name, s.drivers())
        }
        (Some(m), _) => m,
        (None, Some(s)) => s.drivers(),
        (None, None) => 1,
    };
    let grid = TimeGrid::new(a.horizon, n)?;
    let path = sample_driving(grid, h, m, a.seed, method)?;
    let mut entries = vec![
        ("H", h.to_string()),
        ("T", a.horizon.to_string()),
        ("n", n.to_string()),
        ("m", m.to_string()),
        ("seed", a.seed.to_string()),
        ("method", method.to_string()),
    ];
    let out = Outputs::new(a, "paths");
    write_file(&out.csv, |w| path.write_csv(w, &header("paths", &entries)))?;
    let mut plot = String::from("set xlabel 't'\nplot");
    plot.push_str(
        &(1..=m)
            .map(|j| format!(" data using 1:{} with lines", j + 2))
            .collect::<Vec<_>>()
            .join(","),
    );
    plot.push('\n');
    if let Some(sde) = sde {
        let scheme: Scheme = a.scheme.parse()?;
        let traj = solve(scheme, &sde, &path, &CnConfig::default())?;
        entries.push(("sde", sde.name.clone()));
        entries.push(("scheme", scheme.to_string()));
        write_file(&out.companion("_solution.csv"), |w| {
            traj.write_csv(w, &header("paths", &entries))
        })?;
    }
    out.gnuplot(a, &plot)?;
    Ok(Verdict::None)
}

fn convergence(a: &RunArgs) -> Result<Verdict> {
    let sde = sde(a, "scalar_linear")?;
    let scheme: Scheme = a.scheme.parse()?;
    let h = hurst(a);
    let ns = n_list(a, &[32, 64, 128, 256, 512])?;
    if ns.len() < 4 {
        bail!("--n-list needs at least 4 values for a rate fit, got {}", ns.len());
    }
    let case = case(a, &sde)?;
    let theory = theoretical_slope(scheme, case, h)?;
    let reference: ReferenceKind = a.reference.parse()?;

    let mut cfg = ErrorStudyConfig::new(sde, scheme, h, ns.clone(), paths_count(a, 1000)?, a.seed);
    cfg.horizon = a.horizon;
    cfg.p = a.p;
    cfg.fine_factor = a.fine_factor;
    cfg.reference = reference;
    cfg.method = method(a)?;
    cfg.batches = a.batches;
    cfg.validate()?;

    let entries = [
        ("sde", cfg.sde.name.clone()),
        ("scheme", scheme.to_string()),
        ("case", case.to_string()),
        ("H", h.to_string()),
        ("T", a.horizon.to_string()),
        ("n-list", join(&ns)),
        ("paths", cfg.paths.to_string()),
        ("p", a.p.to_string()),
        ("seed", a.seed.to_string()),
        ("method", cfg.method.to_string()),
        ("reference", a.reference.clone()),
        ("fine-factor", a.fine_factor.to_string()),
        ("batches", a.batches.to_string()),
        ("tolerance", a.tolerance.to_string()),
    ];
    let comments = header("convergence", &entries);

    let study = ErrorStudy::run(&cfg)?;
    let fit = fit_rate(&study, case, a.tolerance)?;

    let out = Outputs::new(a, "convergence");
    write_file(&out.csv, |w| study.write_csv(w, &comments))?;
    write_file(&out.companion("_fit.csv"), |w| fit.write_csv(w, &comments))?;
    out.gnuplot(
        a,
        &format!(
            "set logscale xy\nset xlabel 'n'\nset ylabel 'L^p strong error'\n\
             c = {:e}\nplot data using 1:2:3 with yerrorbars title 'error', \
             c * x**({theory}) with lines title 'n^{{{theory}}}'\n",
            fit.intercept.exp()
        ),
    )?;

    println!("{:>8} {:>14} {:>12} {:>9}", "n", "error", "stderr", "rejected");
    for r in &study.rows {
        println!(
            "{:>8} {:>14.6e} {:>12.3e} {:>9.4}",
            r.n, r.error, r.stderr, r.rejected_fraction
        );
    }
    println!("theoretical exponent: error ~ n^({theory:.4})");
    println!(
        "fitted slope {:.4} +/- {:.4} (R^2 {:.4}); |slope - theory| = {:.4}, tolerance {}",
        fit.slope,
        fit.slope_se,
        fit.r_squared,
        (fit.slope - theory).abs(),
        a.tolerance
    );
    println!("verdict: {}", fit.verdict());
    Ok(Verdict::of(fit.passed()))
}

fn constants(a: &RunArgs) -> Result<Verdict> {
    let kind: ConstantKind = a.which.as_deref().unwrap_or("kappa").parse()?;
    let grid = match (&a.h_grid, a.hurst) {
        (Some(g), _) => g.clone(),
        (None, Some(h)) => vec![h],
        (None, None) => DEFAULT_H_GRID.to_vec(),
    };
    if grid.is_empty() {
        bail!("--h-grid must not be empty");
    }
    for &h in &grid {
        check_hurst(h)?;
    }
    let table = tabulate_constant(kind, &grid, a.trunc_p, a.quad_order)?;
    let entries = [
        ("which", kind.to_string()),
        ("h-grid", join(&grid)),
        ("trunc-P", a.trunc_p.to_string()),
        ("quad-order", a.quad_order.to_string()),
    ];
    let out = Outputs::new(a, "constants");
    write_file(&out.csv, |w| table.write_csv(w, &header("constants", &entries)))?;
    out.gnuplot(
        a,
        &format!("set xlabel 'H'\nset ylabel '{kind}(H)'\nplot data using 1:2 with linespoints\n"),
    )?;
    for r in &table.rows {
        println!("{kind}({}) = {:.10} (tail <= {:.2e})", r.hurst, r.value, r.tail_bound);
    }
    Ok(Verdict::None)
}

fn levy(a: &RunArgs) -> Result<Verdict> {
    let pair: AreaPair = a.which.as_deref().unwrap_or("fbm_fbm").parse()?;
    let h = hurst(a);
    let n = a.n.unwrap_or(64);
    let kind = match pair {
        AreaPair::FbmFbm => ConstantKind::Kappa,
        AreaPair::FbmTime => ConstantKind::Rho,
    };
    let times = a
        .times
        .clone()
        .unwrap_or_else(|| [0.25, 0.5, 0.75, 1.0].iter().map(|f| f * a.horizon).collect());
    let coarse = TimeGrid::new(a.horizon, n)?;
    if let Some(t) = times.iter().find(|&&t| coarse.index_of(t).is_none()) {
        bail!(
            "--times value {t} is not a point of the grid with n = {n} steps on [0, {}]",
            a.horizon
        );
    }

    let mut cfg = AreaStudyConfig::new(pair, h, n, paths_count(a, 2000)?, a.seed);
    cfg.horizon = a.horizon;
    cfg.sub_factor = a.sub_factor;
    cfg.method = method(a)?;
    let c = constant(kind, h, a.trunc_p, a.quad_order)?.value;

    let entries = [
        ("which", pair.name().to_string()),
        ("H", h.to_string()),
        ("T", a.horizon.to_string()),
        ("n", n.to_string()),
        ("sub-factor", a.sub_factor.to_string()),
        ("paths", cfg.paths.to_string()),
        ("seed", a.seed.to_string()),
        ("method", cfg.method.to_string()),
        ("trunc-P", a.trunc_p.to_string()),
        ("quad-order", a.quad_order.to_string()),
        (kind.name(), format!("{c:.17e}")),
    ];
    let check = variance_limit_check(&cfg, &times, c)?;
    let out = Outputs::new(a, "levy");
    write_file(&out.csv, |w| check.write_csv(w, &header("levy", &entries)))?;
    out.gnuplot(
        a,
        "set xlabel 't'\nset ylabel 'scaled variance'\n\
         plot data using 2:3:5 with yerrorbars title 'simulated', data using 2:4 with lines title 'predicted'\n",
    )?;
    println!("{kind}({h}) = {c:.6}");
    for r in &check.rows {
        println!(
            "t = {:<8} scaled variance {:.6} +/- {:.6}, predicted {:.6} ({:+.2}%)",
            r.t,
            r.scaled_variance,
            r.stderr,
            r.predicted,
            100.0 * (r.scaled_variance / r.predicted - 1.0)
        );
    }
    Ok(Verdict::None)
}

fn limit(a: &RunArgs) -> Result<Verdict> {
    let sde = sde(a, "bounded_scalar")?;
    let case = case(a, &sde)?;
    let h = hurst(a);
    let ns = n_list(a, &[32, 64, 128, 256])?;
    let forcing: LimitForcing = a.forcing.parse()?;
    let mut cfg = LimitStudyConfig::new(sde, case, h, ns.clone(), paths_count(a, 1000)?, a.seed);
    cfg.horizon = a.horizon;
    cfg.p = a.p;
    cfg.fine_factor = a.fine_factor;
    cfg.forcing = forcing;
    cfg.method = method(a)?;
    cfg.batches = a.batches;
    cfg.validate()?;

    let mut entries = vec![
        ("sde", cfg.sde.name.clone()),
        ("case", case.to_string()),
        ("H", h.to_string()),
        ("T", a.horizon.to_string()),
        ("n-list", join(&ns)),
        ("paths", cfg.paths.to_string()),
        ("p", a.p.to_string()),
        ("seed", a.seed.to_string()),
        ("method", cfg.method.to_string()),
        ("fine-factor", a.fine_factor.to_string()),
        ("batches", a.batches.to_string()),
    ];
    let out = Outputs::new(a, "limit");
    if case == LimitCase::ScalarDriftless {
        entries.push(("forcing", forcing.to_string()));
        let res = pathwise_limit_check(&cfg)?;
        write_file(&out.csv, |w| res.write_csv(w, &header("limit", &entries)))?;
        out.gnuplot(
            a,
            "set logscale x\nset xlabel 'n'\nset ylabel 'L^p distance to U'\n\
             plot data using 1:2:3 with yerrorbars title 'distance'\n",
        )?;
        println!("limit norm |U_T|_p = {:.6}", res.limit_norm);
        for r in &res.rows {
            println!(
                "n = {:<6} distance {:.6} +/- {:.6}, |scaled error|_p {:.6}",
                r.n, r.distance, r.stderr, r.scaled_error
            );
        }
        let ok = res.decreasing();
        println!(
            "distances decreasing within one step SE: {}",
            if ok { "PASS" } else { "FAIL" }
        );
        Ok(Verdict::of(ok))
    } else {
        entries.push(("ratio-tolerance", a.ratio_tolerance.to_string()));
        let summaries = distributional_limit_check(&cfg)?;
        write_file(&out.csv, |w| {
            write_distributional_csv(&summaries, w, &header("limit", &entries))
        })?;
        out.gnuplot(
            a,
            "set logscale x\nset xlabel 'n'\nset ylabel 'sd(error) / sd(U)'\n\
             plot data using 1:5:6 with yerrorbars title 'ratio'\n",
        )?;
        for s in &summaries {
            for c in &s.coordinates {
                println!(
                    "n = {:<6} x{}: sd(error) {:.6}, sd(U) {:.6}, ratio {:.4} +/- {:.4}, skew {:.3}, excess kurtosis {:.3}",
                    s.n,
                    c.coordinate + 1,
                    c.sd_error,
                    c.sd_limit,
                    c.ratio,
                    c.ratio_se,
                    c.skewness,
                    c.excess_kurtosis
                );
            }
        }
        let (lo, hi) = (1.0 - a.ratio_tolerance, 1.0 + a.ratio_tolerance);
        let last = summaries.last().expect("n-list is nonempty");
        let ok = last.coordinates.iter().all(|c| c.ratio_within(lo, hi));
        println!(
            "SD ratios at n = {} within [{lo}, {hi}]: {}",
            last.n,
            if ok { "PASS" } else { "FAIL" }
        );
        Ok(Verdict::of(ok))
    }
}
