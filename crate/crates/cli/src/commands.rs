use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use serde::Serialize;

use qbound_core::solver::DOUBLING_TOL;
use qbound_core::{
    bstar_numeric, integrate, oracle_reference, pair_report, scale_d, sweep_delta,
    theorem1_certificate, truncation_doubling, ChainModel, ConjugatedMatrix, ConvergenceBound,
    OracleKind, Scenario, SignPattern, Verdict,
};

use crate::output::{matrix_csv, OutputDir};
use crate::{Cli, Command};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_VIOLATION: u8 = 2;
pub const EXIT_UNCERTIFIED: u8 = 3;

/// Entries compared by `oracle-check` must agree to this.
const ORACLE_TOL: f64 = 1e-10;
/// Smallest truncation used by `oracle-check`.
const ORACLE_SIZE: usize = 40;
/// Added to one interior entry of the reference under `--inject-bug`.
const INJECTED_ERROR: f64 = 1e-6;
const ENVELOPE_SLACK: f64 = 1e-9;

pub fn run(cli: &Cli) -> Result<u8> {
    let path = cli
        .scenario
        .as_deref()
        .ok_or_else(|| anyhow!("--scenario <path> is required"))?;
    let scenario =
        Scenario::from_path(path).with_context(|| format!("loading {}", path.display()))?;
    let dir = cli
        .out
        .clone()
        .or_else(|| scenario.output_dir().map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from("qbound-out"));
    let out = OutputDir::create(dir)?;
    let model = scenario.chain_model()?;
    if cli.dump_matrix {
        dump_matrices(&scenario, &model, &out)?;
    }
    let (name, code) = match &cli.command {
        Command::Bound => ("bound", cmd_bound(&scenario, &model, &out)?),
        Command::Verify {
            strict_truncation,
            override_beta,
        } => (
            "verify",
            cmd_verify(&scenario, &model, &out, *strict_truncation, *override_beta)?,
        ),
        Command::Sweep => ("sweep", cmd_sweep(&scenario, &model, &out)?),
        Command::OracleCheck { inject_bug } => (
            "oracle-check",
            cmd_oracle_check(&scenario, &model, &out, *inject_bug)?,
        ),
        Command::Simulate => ("simulate", cmd_simulate(&scenario, &model, &out)?),
    };
    out.write_meta(name, path)?;
    Ok(code)
}

fn certificate(scenario: &Scenario, model: &ChainModel) -> Result<ConvergenceBound> {
    Ok(theorem1_certificate(
        model,
        scenario.family()?,
        &scenario.certificate_config(),
    )?)
}

fn summarize(cert: &ConvergenceBound) -> String {
    let mut s = String::new();
    writeln!(
        s,
        "family {} delta={} S={} ({})",
        cert.family.rule().name(),
        cert.family.delta(),
        cert.size,
        if cert.exhaustive {
            "exhaustive"
        } else {
            "heuristic, not a bound"
        }
    )
    .unwrap();
    writeln!(
        s,
        "beta = {}  M = {}  d = {}  prefactor 2M/d = {}",
        cert.beta, cert.m, cert.d, cert.prefactor
    )
    .unwrap();
    if cert.certified {
        write!(
            s,
            "certified: |p*(t) - p**(t)|_1 <= {} e^(-{} t) |p*(0) - p**(0)|_1D*",
            cert.prefactor, cert.beta
        )
        .unwrap();
    } else {
        write!(s, "not certified: beta <= 0").unwrap();
    }
    s
}

fn cmd_bound(scenario: &Scenario, model: &ChainModel, out: &OutputDir) -> Result<u8> {
    let cert = certificate(scenario, model)?;
    out.write_json("certificate.json", &cert.to_json())?;
    println!("{}", summarize(&cert));
    Ok(if cert.certified {
        EXIT_OK
    } else {
        EXIT_UNCERTIFIED
    })
}

#[derive(Serialize)]
struct VerifySummary {
    holds: bool,
    pair: serde_json::Value,
    beta: f64,
    beta_overridden: bool,
    envelope_holds: bool,
    envelope_worst_log_excess: f64,
    truncation_gap: Option<f64>,
    truncation_ok: Option<bool>,
}

fn cmd_verify(
    scenario: &Scenario,
    model: &ChainModel,
    out: &OutputDir,
    strict_truncation: bool,
    override_beta: Option<f64>,
) -> Result<u8> {
    let mut cert = certificate(scenario, model)?;
    if let Some(beta) = override_beta {
        log::warn!("overriding beta {} -> {beta}", cert.beta);
        cert = cert.with_beta(beta);
    }
    if !cert.certified {
        println!("{}", summarize(&cert));
        return Ok(EXIT_UNCERTIFIED);
    }
    let n = scenario.model.n;
    let grid = scenario.report_grid();
    let (p0a, p0b) = scenario.initial_pair();
    let report = pair_report(model, n, &p0a, &p0b, &grid, &cert, scenario.analysis.tol)?;

    let horizon = scenario.analysis.horizon;
    let per_unit = ((scenario.analysis.grid as f64 / horizon).ceil() as usize).max(1);
    let profile = cert.horizon_profile(horizon, per_unit);
    let worst = cert.envelope().worst_log_excess(&profile);
    let envelope_holds = worst <= (1.0 + ENVELOPE_SLACK).ln();

    let truncation_gap = if strict_truncation {
        let (a, b) = join_both(
            || truncation_doubling(model, n, &p0a, horizon),
            || truncation_doubling(model, n, &p0b, horizon),
        );
        Some(a?.max(b?))
    } else {
        None
    };
    let truncation_ok = truncation_gap.map(|g| g <= DOUBLING_TOL);
    let holds = report.verdict == Verdict::Holds && envelope_holds && truncation_ok != Some(false);

    out.write("pair.csv", &report.to_csv())?;
    out.write_json(
        "verify.json",
        &VerifySummary {
            holds,
            pair: report.summary_json(),
            beta: cert.beta,
            beta_overridden: override_beta.is_some(),
            envelope_holds,
            envelope_worst_log_excess: worst,
            truncation_gap,
            truncation_ok,
        },
    )?;
    println!("{}", summarize(&cert));
    println!(
        "pair bound: {:?}; fitted decay rate {}; min log margin {}",
        report.verdict,
        report
            .fitted_rate
            .map_or("n/a".to_string(), |r| format!("{r:.6}")),
        report.min_log_margin
    );
    println!(
        "envelope re-check: {}",
        if envelope_holds { "holds" } else { "VIOLATED" }
    );
    if let Some(gap) = truncation_gap {
        println!(
            "truncation doubling gap {gap:e} ({})",
            if gap <= DOUBLING_TOL {
                "ok"
            } else {
                "TOO LARGE"
            }
        );
    }
    Ok(if holds { EXIT_OK } else { EXIT_VIOLATION })
}

fn join_both<A, B>(a: impl FnOnce() -> A + Send, b: impl FnOnce() -> B + Send) -> (A, B)
where
    A: Send,
    B: Send,
{
    std::thread::scope(|s| {
        let hb = s.spawn(b);
        let ra = a();
        (ra, hb.join().expect("doubling thread panicked"))
    })
}

fn cmd_sweep(scenario: &Scenario, model: &ChainModel, out: &OutputDir) -> Result<u8> {
    let deltas = scenario.delta_grid()?;
    let rows = sweep_delta(
        model,
        scenario.family.rule,
        &scenario.certificate_config(),
        &deltas,
    )?;
    let mut csv = String::from("delta,beta,M,prefactor,certified,best\n");
    for r in &rows {
        writeln!(
            csv,
            "{:e},{:e},{:e},{:e},{},{}",
            r.delta, r.beta, r.m, r.prefactor, r.certified, r.best
        )
        .unwrap();
    }
    out.write("sweep.csv", &csv)?;
    print!("{csv}");
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct OracleReport {
    class: &'static str,
    size: usize,
    interior: usize,
    reference: OracleKind,
    times: Vec<f64>,
    max_diff: f64,
    worst: Worst,
    tolerance: f64,
    pass: bool,
    injected: bool,
}

#[derive(Serialize)]
struct Worst {
    i: usize,
    j: usize,
    t: f64,
}

fn oracle_times(scenario: &Scenario, model: &ChainModel) -> Vec<f64> {
    if model.is_homogeneous() {
        return vec![0.0];
    }
    let span = scenario
        .analysis
        .period
        .or_else(|| model.period())
        .unwrap_or(scenario.analysis.horizon);
    let mut times: Vec<f64> = (0..16).map(|k| span * k as f64 / 16.0).collect();
    times.extend(model.breakpoints().into_iter().filter(|&b| b <= span));
    times.sort_by(f64::total_cmp);
    times.dedup();
    times
}

fn cmd_oracle_check(
    scenario: &Scenario,
    model: &ChainModel,
    out: &OutputDir,
    inject_bug: bool,
) -> Result<u8> {
    let size = scenario.analysis.size.max(ORACLE_SIZE);
    let interior = size - model.band();
    let times = oracle_times(scenario, model);
    let mut worst = (0.0f64, 1, 1, 0.0);
    let mut kind = OracleKind::ClosedForm;
    for &t in &times {
        let (k, mut reference) = oracle_reference(model, size, t)?;
        kind = k;
        if inject_bug {
            let mut m = reference.into_matrix();
            m[(2, 3)] += INJECTED_ERROR;
            reference = ConjugatedMatrix::from_dense(m);
        }
        let numeric = bstar_numeric(model, size, t)?;
        let (d, i, j) = numeric.max_diff_on_block(&reference, interior);
        if d > worst.0 || d.is_nan() {
            worst = (d, i, j, t);
        }
    }
    let pass = worst.0 <= ORACLE_TOL;
    let report = OracleReport {
        class: model.class().name(),
        size,
        interior,
        reference: kind,
        times,
        max_diff: worst.0,
        worst: Worst {
            i: worst.1,
            j: worst.2,
            t: worst.3,
        },
        tolerance: ORACLE_TOL,
        pass,
        injected: inject_bug,
    };
    out.write_json("oracle.json", &report)?;
    println!(
        "class {} S={size}: max interior discrepancy {:e} at (i={}, j={}, t={}) vs {:?}: {}",
        report.class,
        worst.0,
        worst.1,
        worst.2,
        worst.3,
        kind,
        if pass { "pass" } else { "FAIL" }
    );
    Ok(if pass { EXIT_OK } else { EXIT_VIOLATION })
}

fn cmd_simulate(scenario: &Scenario, model: &ChainModel, out: &OutputDir) -> Result<u8> {
    let n = scenario.model.n;
    let grid = scenario.report_grid();
    let (p0, _) = scenario.initial_pair();
    let tol = scenario.analysis.tol;
    let traj = integrate(model, n, &p0, &grid, tol)?;
    let mut csv = String::from("t");
    for i in 0..=n {
        write!(csv, ",p{i}").unwrap();
    }
    csv.push('\n');
    for (t, p) in traj.times.iter().zip(&traj.states) {
        write!(csv, "{t:e}").unwrap();
        for v in p {
            write!(csv, ",{v:e}").unwrap();
        }
        csv.push('\n');
    }
    out.write("trajectory.csv", &csv)?;
    println!(
        "integrated N={n} on [0, {}] with tol {tol:e}; max normalization drift {:e}",
        grid[grid.len() - 1],
        traj.max_drift()
    );
    Ok(EXIT_OK)
}

fn dump_matrices(scenario: &Scenario, model: &ChainModel, out: &OutputDir) -> Result<()> {
    let n = scenario.model.n;
    let size = scenario.analysis.size;
    let a = model.generator(n, 0.0)?;
    out.write(
        "matrix_A.csv",
        &matrix_csv(n + 1, n + 1, 0, |i, j| a.get(i, j)),
    )?;
    let bstar = bstar_numeric(model, size, 0.0)?;
    out.write(
        "matrix_Bstar.csv",
        &matrix_csv(size, size, 1, |i, j| bstar.get(i + 1, j + 1)),
    )?;
    if let Ok(family) = scenario.family() {
        let d = family.diagonal(&SignPattern::all_positive(size));
        let scaled = scale_d(&bstar, &d)?;
        out.write(
            "matrix_Bss.csv",
            &matrix_csv(size, size, 1, |i, j| scaled.get(i + 1, j + 1)),
        )?;
    }
    Ok(())
}
