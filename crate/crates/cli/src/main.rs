//! `bpillow`: boundary non-crossing probabilities of the Brownian pillow.
//!
//! Subcommands: estimate | bound | project | majorant | sweep | reconcile.
//! Each run writes manifest.json and report.json (plus command-specific CSV
//! artifacts) into one output directory; outputs embed the config hash, seed
//! and module versions and are byte-for-byte reproducible from the
//! configuration.

mod config;
mod output;
mod specs;

use brownian_pillow::bounds::{assemble_report, psi0_upper_bound, BoundInputs, BoundReport};
use brownian_pillow::estimator::{estimate_band, estimate_direct, gamma_sweep, McOptions};
use brownian_pillow::grid::rkhs_norm_2d;
use brownian_pillow::majorant::{
    least_concave_majorant, project_polar_cone, project_w, verify_projection,
};
use brownian_pillow::Error as CoreError;
use clap::{Parser, Subcommand};
use serde::Serialize;

use config::{resolve, Resolved, RunArgs};
use output::{path_str, prepare, RunDir};

#[derive(Debug)]
pub struct CliError {
    kind: &'static str,
    message: String,
}

impl CliError {
    fn new(kind: &'static str, message: String) -> Self {
        CliError { kind, message }
    }

    pub fn config(message: String) -> Self {
        CliError::new("config", message)
    }

    pub fn io(message: String) -> Self {
        CliError::new("io", message)
    }
}

impl From<CoreError> for CliError {
    fn from(err: CoreError) -> Self {
        let kind = match err {
            CoreError::Domain(_) => "domain",
            CoreError::Dimension(_) => "dimension",
            CoreError::Solver { .. } => "solver",
            CoreError::Parse(_) => "parse",
        };
        CliError::new(kind, err.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "bpillow",
    version,
    about = "Boundary non-crossing probabilities of the Brownian pillow"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo estimate of P(B0 + trend <= boundary everywhere).
    Estimate(RunArgs),
    /// Analytic bounds from the trend projections, without reconciliation.
    Bound(RunArgs),
    /// Projection of the trend onto the polar cone (minimal majorant).
    Project(RunArgs),
    /// 1D least concave majorant of the trend.
    Majorant(RunArgs),
    /// Rate sweep over gamma for psi(boundary; gamma * trend).
    Sweep(RunArgs),
    /// Bounds plus Monte Carlo estimates with sandwich flags.
    Reconcile(RunArgs),
}

const PROJECT_MAX_ITER: usize = 400;

fn main() {
    let cli = Cli::parse();
    let (name, args) = match &cli.command {
        Command::Estimate(a) => ("estimate", a),
        Command::Bound(a) => ("bound", a),
        Command::Project(a) => ("project", a),
        Command::Majorant(a) => ("majorant", a),
        Command::Sweep(a) => ("sweep", a),
        Command::Reconcile(a) => ("reconcile", a),
    };
    match run(name, args) {
        Ok(()) => {}
        Err(err) => {
            let payload = serde_json::json!({
                "error": { "kind": err.kind, "message": err.message }
            });
            eprintln!("{payload}");
            std::process::exit(2);
        }
    }
}

fn run(name: &str, args: &RunArgs) -> Result<(), CliError> {
    let (resolved, out) = resolve(name, args)?;
    let dir = prepare(&resolved, out)?;
    match name {
        "estimate" => cmd_estimate(&resolved, &dir),
        "bound" => cmd_bound(&resolved, &dir, false),
        "reconcile" => cmd_bound(&resolved, &dir, true),
        "project" => cmd_project(&resolved, &dir),
        "majorant" => cmd_majorant(&resolved, &dir),
        "sweep" => cmd_sweep(&resolved, &dir),
        _ => unreachable!("clap restricts the command set"),
    }
}

fn mc_opts(resolved: &Resolved) -> McOptions {
    McOptions::new(resolved.paths, resolved.seed).with_block_size(resolved.blocks)
}

fn cmd_estimate(resolved: &Resolved, dir: &RunDir) -> Result<(), CliError> {
    let u = specs::grid_2d(&resolved.boundary, resolved.n)?;
    let h = specs::grid_2d(&resolved.trend, resolved.n)?;
    let est = estimate_direct(&u, &h, mc_opts(resolved))?;
    dir.write_manifest(resolved)?;
    let report = dir.write_json("report.json", &est)?;
    println!(
        "psi_hat = {:.6} +- {:.6}  ci95 = [{:.6}, {:.6}]  ({} paths, n = {})",
        est.p(),
        est.std_err,
        est.ci95.0,
        est.ci95.1,
        est.n_paths,
        est.n_grid
    );
    println!("report: {}", path_str(&report));
    Ok(())
}

fn print_bound_table(report: &BoundReport) {
    let psi = report.psi_hat.as_ref().map(|e| e.p());
    let rows: Vec<(&str, String)> = vec![
        ("psi0_hat", format!("{:.6}", report.psi0_hat.p())),
        ("theta", format!("{:.6}", report.theta)),
        ("norm_h", format!("{:.6}", report.norm_h)),
        ("norm_h_low (majorant)", format!("{:.6}", report.norm_h_low)),
        ("norm_h_up (minorant)", format!("{:.6}", report.norm_h_up)),
        ("shift bounds", format!("[{:.6}, {:.6}]", report.shift_lower, report.shift_upper)),
        ("diff bounds", format!("[{:.6}, {:.6}]", report.diff_lower, report.diff_upper)),
        ("coarse diff", format!("{:.6}", report.coarse_diff)),
        ("exp bounds", format!("[{:.6}, {:.6}]", report.exp_lower, report.exp_upper)),
        ("stieltjes I", format!("{:.6}", report.stieltjes_i)),
        (
            "psi_hat",
            psi.map_or("-".to_string(), |p| format!("{p:.6}")),
        ),
        ("flags", report.flags.join(", ")),
    ];
    for (label, value) in rows {
        println!("{label:<24} {value}");
    }
}

fn cmd_bound(resolved: &Resolved, dir: &RunDir, reconcile: bool) -> Result<(), CliError> {
    let n = resolved.n;
    let u = specs::grid_2d(&resolved.boundary, n)?;
    let h = specs::grid_2d(&resolved.trend, n)?;
    let l = specs::grid_2d(&resolved.lower, n)?;
    let zero = brownian_pillow::GridFn2D::zeros(n)?;
    let opts = mc_opts(resolved);

    let pr_under = project_polar_cone(&h, resolved.tol, PROJECT_MAX_ITER)?;
    let pr_over = project_w(&h, resolved.tol, PROJECT_MAX_ITER)?;
    let norm_h = rkhs_norm_2d(&h)?;
    let psi0 = estimate_direct(&u, &zero, opts)?;

    let (psi, psi_residual, band) = if reconcile {
        let residual_trend = h.sub(&pr_under.h_bar)?;
        (
            Some(estimate_direct(&u, &h, opts.with_stream(1))?),
            Some(estimate_direct(&u, &residual_trend, opts.with_stream(2))?),
            Some(estimate_band(&l, &u, opts.with_stream(3))?),
        )
    } else {
        (None, None, None)
    };

    let report = assemble_report(BoundInputs {
        u: &u,
        h: &h,
        lower: &l,
        pr_under: &pr_under,
        pr_over: &pr_over,
        norm_h,
        psi0,
        psi,
        psi_residual,
        band,
    })?;

    #[derive(Serialize)]
    struct Report<'a> {
        #[serde(flatten)]
        bounds: &'a BoundReport,
        psi0_candidate_bound: &'a brownian_pillow::bounds::Psi0Bound,
    }
    let psi0_bound = psi0_upper_bound(&u, &[], true)?;
    dir.write_manifest(resolved)?;
    let path = dir.write_json("report.json", &Report {
        bounds: &report,
        psi0_candidate_bound: &psi0_bound,
    })?;
    print_bound_table(&report);
    println!(
        "psi0 candidate bound     {:.6} (argmin {})",
        psi0_bound.value, psi0_bound.argmin
    );
    println!("report: {}", path_str(&path));
    Ok(())
}

fn cmd_project(resolved: &Resolved, dir: &RunDir) -> Result<(), CliError> {
    let h = specs::grid_2d(&resolved.trend, resolved.n)?;
    let pr = project_polar_cone(&h, resolved.tol, PROJECT_MAX_ITER)?;
    let verification = verify_projection(&h, &pr, resolved.tol.max(1e-9))?;

    let mut value = serde_json::to_value(&pr)
        .map_err(|e| CliError::io(format!("cannot serialize projection: {e}")))?;
    let obj = value.as_object_mut().expect("projection serializes to an object");
    obj.insert("norm_sq".into(), serde_json::json!(pr.norm * pr.norm));
    obj.insert(
        "verification".into(),
        serde_json::to_value(&verification)
            .map_err(|e| CliError::io(format!("cannot serialize verification: {e}")))?,
    );
    obj.insert("h_bar_csv".into(), serde_json::json!("h_bar.csv"));

    dir.write_manifest(resolved)?;
    dir.write("h_bar.csv", &pr.h_bar.to_csv())?;
    let path = dir.write_json("report.json", &value)?;
    println!(
        "norm = {:.8}  norm_sq = {:.8}  contact nodes = {}  iterations = {}  max residual = {:.2e}",
        pr.norm,
        pr.norm * pr.norm,
        pr.contact_set.len(),
        pr.iterations,
        pr.residuals.max()
    );
    println!("report: {}", path_str(&path));
    Ok(())
}

fn cmd_majorant(resolved: &Resolved, dir: &RunDir) -> Result<(), CliError> {
    let h = specs::grid_1d(&resolved.trend, resolved.n)?;
    let m = least_concave_majorant(&h)?;

    #[derive(Serialize)]
    struct Report<'a> {
        norm: f64,
        norm_sq: f64,
        knots: &'a [usize],
        h_tilde: String,
        h_tilde_csv: &'static str,
    }
    dir.write_manifest(resolved)?;
    dir.write("h_tilde.csv", &m.h_tilde.to_csv())?;
    let path = dir.write_json("report.json", &Report {
        norm: m.norm,
        norm_sq: m.norm * m.norm,
        knots: &m.knots,
        h_tilde: m.h_tilde.to_csv(),
        h_tilde_csv: "h_tilde.csv",
    })?;
    println!(
        "norm = {:.8}  norm_sq = {:.8}  knots = {:?}",
        m.norm,
        m.norm * m.norm,
        m.knots
    );
    println!("report: {}", path_str(&path));
    Ok(())
}

fn cmd_sweep(resolved: &Resolved, dir: &RunDir) -> Result<(), CliError> {
    let u = specs::grid_2d(&resolved.boundary, resolved.n)?;
    let h = specs::grid_2d(&resolved.trend, resolved.n)?;
    let sweep = gamma_sweep(&u, &h, &resolved.gammas, mc_opts(resolved))?;

    let mut csv = String::from("gamma,log_psi,rate,remainder,std_err\n");
    for row in &sweep.rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            row.gamma, row.log_psi_hat, row.rate_hat, row.remainder_hat, row.std_err
        ));
    }
    dir.write_manifest(resolved)?;
    dir.write("sweep.csv", &csv)?;
    let path = dir.write_json("report.json", &sweep)?;
    for row in &sweep.rows {
        println!(
            "gamma {:>6.2}  log_psi {:>10.4}  rate {:>8.4}  remainder {:>8.4}  se {:.4}",
            row.gamma, row.log_psi_hat, row.rate_hat, row.remainder_hat, row.std_err
        );
    }
    println!(
        "norm_sq = {:.6}  I = {:.6}  contact log-prob = {:.4}",
        sweep.norm_sq, sweep.stieltjes_i, sweep.contact_log_prob
    );
    println!("report: {}", path_str(&path));
    Ok(())
}
