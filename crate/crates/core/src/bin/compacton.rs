//! Command-line front end.
//!
//! Every command reads a JSON configuration (or the built-in defaults), applies
//! `--section.key value` overrides, and writes its results under `output.out_dir`.
//! Exit codes: 0 success, 1 other failure, 2 infeasible, 3 non-convergence,
//! 4 invalid configuration.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use compacton::config::{build_seeds, Config};
use compacton::fibering::minimize_constrained;
use compacton::io::{
    field_from_json, field_lambda, input_hash, report_envelope, write_field, write_json,
};
use compacton::lambda_scan::{find_lambda_star, sweep, ScanReport, ScanRow};
use compacton::mesh::{integrals, Exponents};
use compacton::pohozaev_check::{verify, verify_refinement};
use compacton::radial_ode::{embed, find_compacton, lambda_star_ball, rescale, ShootClass};
use compacton::rayleigh::{compute_extremals, default_seeds, Extremals, QuotientMinimum};
use compacton::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "compacton", version, about = "Least-energy and compactly supported solutions on a periodic cylinder")]
struct Cli {
    /// JSON configuration file; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Extremal values λ₁ₚ, λ₀ᵀ, λ₀^Ω and Λ₁ₚ^Ω on the configured grid.
    Extremals,
    /// Constrained least-energy solve at one λ.
    Solve {
        #[arg(long, allow_hyphen_values = true)]
        lambda: f64,
    },
    /// Brackets λ*(T) and sweeps `scan.lambda_list`.
    Scan,
    /// Radial compactons for one or more dimensions (comma separated).
    Shoot {
        #[arg(long, value_delimiter = ',', required = true)]
        dim: Vec<usize>,
    },
    /// Writes the compacton of dimension N rescaled to support radius `r_target`
    /// as a z-constant field at its own λ.
    Embed {
        #[arg(long)]
        r_target: f64,
    },
    /// Pohozaev identity check; three or more inputs add a refinement fit.
    Verify {
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        /// Defaults to the `lambda` stored in the field file.
        #[arg(long, allow_hyphen_values = true)]
        lambda: Option<f64>,
    },
}

type Overrides = Vec<(String, String)>;

/// Pulls `--a.b value` and `--a.b=value` out of the argument list.
fn split_overrides(args: Vec<String>) -> std::result::Result<(Vec<String>, Overrides), String> {
    let mut rest = Vec::with_capacity(args.len());
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        let Some(name) = a.strip_prefix("--") else {
            rest.push(a);
            continue;
        };
        let (key, inline) = match name.split_once('=') {
            Some((k, v)) => (k.to_string(), Some(v.to_string())),
            None => (name.to_string(), None),
        };
        if !key.contains('.') {
            rest.push(a);
            continue;
        }
        let value = match inline {
            Some(v) => v,
            None => it.next().ok_or_else(|| format!("override --{key} needs a value"))?,
        };
        overrides.push((key, value));
    }
    Ok((rest, overrides))
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Infeasible(_) => 2,
        Error::NonConvergence { .. } => 3,
        Error::Config(_) => 4,
        _ => 1,
    }
}

fn tag(cfg: &Config) -> String {
    format!(
        "q{}_p{}_N{}_T{}_nz{}_nr{}",
        cfg.exponents.q, cfg.exponents.p, cfg.exponents.n, cfg.geometry.t, cfg.grid.nz, cfg.grid.nr
    )
}

fn out_path(cfg: &Config, name: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(&cfg.output.out_dir)?;
    Ok(cfg.output.out_dir.join(name))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.16e}")).unwrap_or_default()
}

fn optb(v: Option<bool>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// CSV with the configuration and input hash as leading comment lines.
fn write_csv(path: &Path, cfg: &Config, hash: &str, header: &str, rows: &[String]) -> Result<()> {
    let mut s = format!("# config: {}\n# input_hash: {hash}\n{header}\n", serde_json::to_string(cfg)?);
    for r in rows {
        s.push_str(r);
        s.push('\n');
    }
    std::fs::write(path, s)?;
    Ok(())
}

fn quotient_json(m: &QuotientMinimum) -> Value {
    json!({
        "value": m.value,
        "converged": m.converged,
        "iterations": m.iterations,
        "grad_norm": m.grad_norm,
        "seed_index": m.seed_index,
        "z_constant": m.minimizer.is_z_constant(),
    })
}

fn extremals_json(ex: &Extremals) -> Value {
    json!({
        "lambda_1P": quotient_json(&ex.lambda_1p),
        "lambda_0T": quotient_json(&ex.lambda_0t),
        "lambda_0Omega": quotient_json(&ex.lambda_0_omega),
        "Lambda_1P_Omega": quotient_json(&ex.lambda_1p_omega),
        "ordering": {
            "lambda_1P_lt_lambda_0T": ex.lambda_1p.value < ex.lambda_0t.value,
            "lambda_0T_le_lambda_0Omega": ex.lambda_0t.value <= ex.lambda_0_omega.value,
        },
        "converged": ex.converged(),
    })
}

fn extremals_for(cfg: &Config, exps: &Exponents) -> Result<Extremals> {
    let grid = cfg.grid()?;
    compute_extremals(exps, &grid, &default_seeds(&grid), &cfg.quotient_options())
}

fn cmd_extremals(cfg: &Config) -> Result<()> {
    let exps = cfg.exponents()?;
    let ex = extremals_for(cfg, &exps)?;
    let hash = input_hash(cfg, "extremals", &[])?;
    let path = out_path(cfg, &format!("extremals_{}.json", tag(cfg)))?;
    write_json(&path, &report_envelope("extremals", cfg, &hash, extremals_json(&ex))?)?;
    println!(
        "lambda_1P = {:.10}  lambda_0T = {:.10}  lambda_0Omega = {:.10}  Lambda_1P_Omega = {:.10}",
        ex.lambda_1p.value, ex.lambda_0t.value, ex.lambda_0_omega.value, ex.lambda_1p_omega.value
    );
    println!("wrote {}", path.display());
    if !ex.converged() {
        return Err(Error::NonConvergence { what: "extremal quotient minimization".into(), iterations: cfg.extremals.max_iters });
    }
    Ok(())
}

fn cmd_solve(cfg: &Config, lambda: f64) -> Result<()> {
    let exps = cfg.exponents()?;
    let grid = cfg.grid()?;
    let command = format!("solve --lambda {lambda:e}");
    let hash = input_hash(cfg, &command, &[])?;
    let stem = format!("solve_{}_lambda{lambda}", tag(cfg));
    let seeds = build_seeds(&cfg.solver.seeds, &exps, &grid, &cfg.quotient_options())?;
    let r = match minimize_constrained(lambda, &exps, &grid, &seeds, &cfg.solve_options()) {
        Ok(r) => r,
        Err(e) => {
            let path = out_path(cfg, &format!("{stem}.json"))?;
            let body = json!({ "lambda": lambda, "error": e.to_string(), "exit_code": exit_code(&e) });
            write_json(&path, &report_envelope(&command, cfg, &hash, body)?)?;
            return Err(e);
        }
    };
    let field_path = out_path(cfg, &format!("{stem}_field.json"))?;
    write_field(
        &field_path,
        &r.u,
        &exps,
        &[("lambda", json!(lambda)), ("input_hash", json!(hash)), ("config", serde_json::to_value(cfg)?)],
    )?;
    let path = out_path(cfg, &format!("{stem}.json"))?;
    let mut body = serde_json::to_value(r.summary())?;
    body["field_file"] = json!(field_path.file_name().map(|s| s.to_string_lossy().into_owned()));
    write_json(&path, &report_envelope(&command, cfg, &hash, body)?)?;
    println!(
        "lambda = {lambda}  Phi = {:.6e}  P = {:.6e}  Phi'' = {:.6e}  residual = {:.3e}  compact_support = {}  Iz_fraction = {:.3e}",
        r.phi, r.pohozaev, r.phi2, r.residual, r.compact_support, r.iz_fraction
    );
    println!("wrote {} and {}", path.display(), field_path.display());
    if !r.converged {
        return Err(Error::NonConvergence { what: "constrained minimization".into(), iterations: r.iterations });
    }
    Ok(())
}

fn row_csv(source: &str, r: &ScanRow) -> String {
    format!(
        "{source},{:.16e},{},{},{},{},{},{},{},{},{},{}",
        r.lambda,
        r.feasible,
        opt(r.phi),
        opt(r.pohozaev),
        opt(r.phi2),
        opt(r.residual),
        opt(r.iz_fraction),
        optb(r.compact_support),
        optb(r.periodically_trivial),
        optb(r.in_z),
        r.error.as_deref().unwrap_or("").replace([',', '\n'], ";"),
    )
}

fn cmd_scan(cfg: &Config) -> Result<()> {
    let exps = cfg.exponents()?;
    let grid = cfg.grid()?;
    let opts = cfg.scan_options();
    let hash = input_hash(cfg, "scan", &[])?;
    let ex = extremals_for(cfg, &exps)?;
    let star = find_lambda_star(&exps, &grid, &ex, &opts);
    let (rows, _) = sweep(&exps, &grid, &ex, &cfg.scan.lambda_list, &opts);

    let mut tagged: Vec<(&str, ScanRow)> = rows.iter().cloned().map(|r| ("list", r)).collect();
    let mut star_json = Value::Null;
    let mut star_err = None;
    match &star {
        Ok(s) => {
            tagged.extend(s.probes.iter().cloned().map(|r| ("probe", r)));
            let field_path = out_path(cfg, &format!("scan_{}_witness_field.json", tag(cfg)))?;
            write_field(
                &field_path,
                &s.witness.u,
                &exps,
                &[("lambda", json!(s.lambda_star)), ("input_hash", json!(hash)), ("config", serde_json::to_value(cfg)?)],
            )?;
            star_json = json!({
                "lambda_star": s.lambda_star,
                "bracket": [s.bracket.0, s.bracket.1],
                "sign_changes": s.sign_changes,
                "halvings": s.halvings,
                "witness": s.witness.summary(),
                "witness_field_file": field_path.file_name().map(|n| n.to_string_lossy().into_owned()),
            });
        }
        Err(e) => star_err = Some(e.to_string()),
    }
    tagged.sort_by(|a, b| a.1.lambda.total_cmp(&b.1.lambda));

    let report = ScanReport {
        lambda_1p: ex.lambda_1p.value,
        lambda_0t: ex.lambda_0t.value,
        lambda_0_omega: ex.lambda_0_omega.value,
        lambda_star: star.as_ref().ok().map(|s| s.lambda_star),
        bracket: star.as_ref().ok().map(|s| s.bracket),
        rows: tagged.iter().map(|(_, r)| r.clone()).collect(),
        mode: "continuation",
    };
    let mut body = serde_json::to_value(&report)?;
    body["sources"] = json!(tagged.iter().map(|(s, _)| *s).collect::<Vec<_>>());
    body["extremals"] = extremals_json(&ex);
    body["lambda_star_search"] = star_json;
    body["lambda_star_error"] = json!(star_err);

    let csv_rows: Vec<String> = tagged.iter().map(|(s, r)| row_csv(s, r)).collect();
    let csv = out_path(cfg, &format!("scan_{}.csv", tag(cfg)))?;
    write_csv(
        &csv,
        cfg,
        &hash,
        "source,lambda,feasible,Phi,P,Phi2,residual,Iz_fraction,compact_support,periodically_trivial,in_Z,error",
        &csv_rows,
    )?;
    let path = out_path(cfg, &format!("scan_{}.json", tag(cfg)))?;
    write_json(&path, &report_envelope("scan", cfg, &hash, body)?)?;
    println!("lambda_1P = {:.10}  lambda_0T = {:.10}", ex.lambda_1p.value, ex.lambda_0t.value);
    match &star {
        Ok(s) => println!(
            "lambda* = {:.10} in [{:.10}, {:.10}]  witness P = {:.3e} compact_support = {}",
            s.lambda_star, s.bracket.0, s.bracket.1, s.witness.pohozaev, s.witness.compact_support
        ),
        Err(e) => eprintln!("lambda* search failed: {e}"),
    }
    println!("wrote {} and {}", path.display(), csv.display());
    star.map(|_| ())
}

fn cmd_shoot(cfg: &Config, dims: &[usize]) -> Result<()> {
    let (q, p) = (cfg.exponents.q, cfg.exponents.p);
    let opts = cfg.shoot_options();
    let command = format!("shoot --dim {dims:?}");
    let hash = input_hash(cfg, &command, &[])?;
    let mut rows = Vec::new();
    let mut entries = Vec::new();
    let mut failure = None;
    for &m in dims {
        match find_compacton(m, q, p, &opts) {
            Ok(s) => {
                let e_max = s.first_integral().iter().fold(0.0f64, |a, v| a.max(v.abs()));
                let lstar = lambda_star_ball(s.r_m, cfg.geometry.r_omega, q, p);
                rows.push(format!(
                    "{m},{:.16e},{:.16e},{:.16e},{:?},{:.3e},{:.3e},{},{:.16e}",
                    s.a,
                    s.r_m,
                    s.max_psi(),
                    s.classification,
                    s.residual_psi,
                    s.residual_dpsi,
                    s.within_uniqueness_range,
                    lstar
                ));
                if s.classification != ShootClass::Compacton && failure.is_none() {
                    failure = Some(Error::NonConvergence { what: format!("shooting for M = {m}"), iterations: 0 });
                }
                println!("M = {m}: a = {:.10}  R_M = {:.10}  max = {:.10}  {:?}", s.a, s.r_m, s.max_psi(), s.classification);
                let mut v = serde_json::to_value(&s)?;
                v["first_integral_max_abs"] = json!(e_max);
                v["lambda_star_ball"] = json!(lstar);
                entries.push(v);
            }
            Err(e) => {
                eprintln!("M = {m}: {e}");
                rows.push(format!("{m},,,,error,,,,"));
                entries.push(json!({ "dim": m, "error": e.to_string() }));
                failure.get_or_insert(e);
            }
        }
    }
    let stem = format!("shoot_q{q}_p{p}");
    let csv = out_path(cfg, &format!("{stem}.csv"))?;
    write_csv(
        &csv,
        cfg,
        &hash,
        "M,a,R_M,max_psi,classification,residual_psi,residual_dpsi,within_uniqueness_range,lambda_star_ball",
        &rows,
    )?;
    let path = out_path(cfg, &format!("{stem}.json"))?;
    write_json(&path, &report_envelope(&command, cfg, &hash, json!({ "compactons": entries }))?)?;
    println!("wrote {} and {}", path.display(), csv.display());
    failure.map_or(Ok(()), Err)
}

fn cmd_embed(cfg: &Config, r_target: f64) -> Result<()> {
    let exps = cfg.exponents()?;
    let grid = cfg.grid()?;
    let base = find_compacton(exps.dim(), exps.q(), exps.p(), &cfg.shoot_options())?;
    let resc = rescale(&base, r_target)?;
    let u = embed(&base, r_target, &grid)?;
    let command = format!("embed --r-target {r_target:e}");
    let hash = input_hash(cfg, &command, &[])?;
    let path = out_path(cfg, &format!("embed_{}_R{r_target}_field.json", tag(cfg)))?;
    write_field(
        &path,
        &u,
        &exps,
        &[
            ("lambda", json!(resc.lambda_r)),
            ("rescaling", serde_json::to_value(resc)?),
            ("input_hash", json!(hash)),
            ("config", serde_json::to_value(cfg)?),
        ],
    )?;
    let b = integrals(&u, exps.q(), exps.p());
    println!("lambda_R = {:.12}  sigma = {:.12}  I2 = {:.6e}", resc.lambda_r, resc.sigma, b.i2);
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_verify(cfg: &Config, inputs: &[PathBuf], lambda: Option<f64>) -> Result<()> {
    let mut texts = Vec::new();
    for p in inputs {
        texts.push(std::fs::read(p)?);
    }
    let mut fields = Vec::new();
    let mut exps: Option<Exponents> = None;
    let mut lam = lambda;
    for (p, t) in inputs.iter().zip(&texts) {
        let text = std::str::from_utf8(t).map_err(|e| Error::Format(format!("{}: {e}", p.display())))?;
        let (u, e) = field_from_json(text)?;
        if let Some(prev) = &exps {
            if (prev.q(), prev.p(), prev.dim()) != (e.q(), e.p(), e.dim()) {
                return Err(Error::Config(format!("{} uses different exponents", p.display())));
            }
        }
        exps = Some(e);
        if lambda.is_none() {
            let l = field_lambda(text)?
                .ok_or_else(|| Error::Config(format!("{} stores no lambda; pass --lambda", p.display())))?;
            if lam.is_some_and(|x| x != l) {
                return Err(Error::Config("input files store different lambda values; pass --lambda".into()));
            }
            lam = Some(l);
        }
        fields.push(u);
    }
    let exps = exps.expect("at least one input");
    let lambda = lam.expect("lambda resolved");
    let vopts = cfg.verify_options();
    let names: Vec<String> = inputs.iter().map(|p| p.display().to_string()).collect();
    let command = format!("verify --lambda {lambda:e} --input {}", names.join(" "));
    let refs: Vec<&[u8]> = texts.iter().map(|t| t.as_slice()).collect();
    let hash = input_hash(cfg, &command, &refs)?;
    let (reports, summary) = if fields.len() >= 3 {
        let (all, finest) = verify_refinement(&fields, lambda, &exps, &vopts)?;
        (all, Some(finest))
    } else {
        (fields.iter().map(|u| verify(u, lambda, &exps, &vopts)).collect(), None)
    };
    for r in &reports {
        println!(
            "{}x{}: P_volume = {:.6e}  flux = {:.6e}  residual = {:.3e}  solution residual = {:.3e}",
            r.nz, r.nr, r.p_volume, r.flux, r.residual, r.solution_residual
        );
        if let Some(w) = &r.warning {
            eprintln!("warning: {w}");
        }
    }
    if let Some(Some([a, b])) = summary.as_ref().map(|s| s.refinement_orders) {
        println!("fitted orders: identity residual {a:.3}, PDE residual {b:.3}");
    }
    let body = json!({ "lambda": lambda, "inputs": names, "reports": reports, "refinement": summary });
    let path = out_path(cfg, &format!("verify_{}.json", &hash[..12]))?;
    write_json(&path, &report_envelope(&command, cfg, &hash, body)?)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn run(cli: Cli, overrides: &[(String, String)]) -> Result<()> {
    let cfg = Config::load(cli.config.as_deref(), overrides)?;
    match cli.cmd {
        Cmd::Extremals => cmd_extremals(&cfg),
        Cmd::Solve { lambda } => cmd_solve(&cfg, lambda),
        Cmd::Scan => cmd_scan(&cfg),
        Cmd::Shoot { dim } => cmd_shoot(&cfg, &dim),
        Cmd::Embed { r_target } => cmd_embed(&cfg, r_target),
        Cmd::Verify { input, lambda } => cmd_verify(&cfg, &input, lambda),
    }
}

fn main() -> ExitCode {
    let (args, overrides) = match split_overrides(std::env::args().collect()) {
        Ok(v) => v,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(4);
        }
    };
    let cli = Cli::parse_from(args);
    match run(cli, &overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
