//! The `km` command line: argument parsing, dispatch and report emission.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::chapman::{classify, rankine_hugoniot, Classification, CLASSIFY_TOL};
use crate::error::{KmError, Result};
use crate::linear::{build_decomposition, Decomposition};
use crate::manifold::{normal_form, taylor_expand, PicardConfig};
use crate::model::{verify_hypotheses, KineticModel, HYPOTHESIS_TOL};
use crate::output::{line_plot, write_atomic, Series, SCHEMA};
use crate::profiles::{
    burgers_profile, ce2_profile, compare_profiles, epsilon_sweep, relaxation_profile, Profile,
    ProfileConfig, ShockSetup,
};
use crate::registry::resolve_model;
use crate::weighted::WeightParams;

#[derive(Parser, Debug)]
#[command(name = "km", version, about = "Center manifolds and shock profiles of kinetic relaxation systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the structural hypotheses of a model.
    Verify(RunArgs),
    /// Linear decomposition, spectra and fixed-point calibration.
    Decompose(RunArgs),
    /// Taylor expansion of the center manifold and normal-form coefficients.
    Expand(RunArgs),
    /// One shock profile.
    Profile(RunArgs),
    /// Relaxation vs Chapman-Enskog profile metrics at one amplitude.
    Compare(RunArgs),
    /// Profile metrics over a list of amplitudes with slope fits.
    Sweep(RunArgs),
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    /// Registry name or path to a model file.
    #[arg(long)]
    model: String,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    order: Option<usize>,
    #[arg(long = "grid-L")]
    grid_l: Option<f64>,
    #[arg(long = "grid-m")]
    grid_m: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long = "eps-list", value_parser = parse_eps_list)]
    eps_list: Option<EpsList>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "json")]
    format: Vec<String>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Overrides the pinned seed of a registry model.
    #[arg(long)]
    seed: Option<u64>,
    /// Profile kind: relaxation, ce2 or burgers.
    #[arg(long, default_value = "relaxation")]
    kind: String,
}

const DEFAULT_EPS: f64 = 0.05;
const DEFAULT_SWEEP: [f64; 4] = [0.1, 0.05, 0.025, 0.0125];

struct Formats {
    csv: bool,
    json: bool,
    svg: bool,
}

impl RunArgs {
    fn formats(&self) -> Result<Formats> {
        let mut f = Formats { csv: false, json: false, svg: false };
        for s in &self.format {
            match s.trim() {
                "csv" => f.csv = true,
                "json" => f.json = true,
                "svg" => f.svg = true,
                other => return Err(KmError::Config(format!("unknown format '{other}'"))),
            }
        }
        Ok(f)
    }

    fn order(&self) -> Result<usize> {
        let k = self.order.unwrap_or(3);
        if !(2..=6).contains(&k) {
            return Err(KmError::Config(format!("order must lie in 2..=6, got {k}")));
        }
        Ok(k)
    }

    fn eps(&self) -> Result<f64> {
        let e = self.eps.unwrap_or(DEFAULT_EPS);
        if !(e > 0.0 && e.is_finite()) {
            return Err(KmError::Config(format!("eps must be positive, got {e}")));
        }
        Ok(e)
    }

    fn profile_config(&self) -> Result<ProfileConfig> {
        let mut cfg = ProfileConfig { order: self.order()?, ..Default::default() };
        if let Some(m) = self.grid_m {
            if m < 5 || m % 2 == 0 {
                return Err(KmError::Config(format!("grid-m must be odd and at least 5, got {m}")));
            }
            cfg.nodes = m;
        }
        if let Some(l) = self.grid_l {
            if !(l > 0.0) {
                return Err(KmError::Config(format!("grid-L must be positive, got {l}")));
            }
            cfg.half_width = Some(l);
        }
        Ok(cfg)
    }

    fn weights(&self, nu: f64) -> Result<WeightParams> {
        let d = WeightParams::for_rate(nu);
        WeightParams::new(self.alpha.unwrap_or(d.alpha), self.gamma.unwrap_or(d.gamma), self.beta.unwrap_or(d.beta))
    }
}

/// Loaded model with its linear data.
struct Context {
    model: KineticModel,
    dec: Decomposition,
}

impl Context {
    fn load(args: &RunArgs) -> Result<Self> {
        let model = resolve_model(&args.model, args.seed)?;
        let dec = build_decomposition(&model)?;
        Ok(Context { model, dec })
    }

    fn classify(&self) -> Result<Classification> {
        classify(&self.model, &self.dec, CLASSIFY_TOL)
    }
}

fn envelope(command: &str, args: &RunArgs, config: Value, result: Value) -> Value {
    json!({
        "schema": SCHEMA,
        "command": command,
        "model": args.model,
        "seed": args.seed,
        "config": config,
        "result": result,
    })
}

fn profile_config_json(cfg: &ProfileConfig, half_width: Option<f64>) -> Value {
    json!({
        "order": cfg.order,
        "nodes": cfg.nodes,
        "tail": cfg.tail,
        "half_width": half_width.or(cfg.half_width),
    })
}

struct Artifacts<'a> {
    dir: Option<&'a Path>,
    formats: Formats,
}

impl Artifacts<'_> {
    fn put(&self, name: &str, contents: &str) -> Result<()> {
        if let Some(dir) = self.dir {
            write_atomic(&dir.join(name), contents.as_bytes())?;
        }
        Ok(())
    }

    fn report(&self, report: &Value) -> Result<()> {
        if self.formats.json {
            self.put("report.json", &pretty(report))?;
        }
        Ok(())
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s
}

fn cmd_verify(args: &RunArgs, art: &Artifacts) -> Result<(Value, bool)> {
    let model = resolve_model(&args.model, args.seed)?;
    let report = verify_hypotheses(&model, HYPOTHESIS_TOL);
    let pass = report.pass;
    let out = envelope("verify", args, json!({ "tolerance": HYPOTHESIS_TOL }), serde_json::to_value(&report)?);
    art.report(&out)?;
    Ok((out, pass))
}

fn cmd_decompose(args: &RunArgs, art: &Artifacts) -> Result<Value> {
    let ctx = Context::load(args)?;
    let dec = &ctx.dec;
    let weights = args.weights(dec.nu)?;
    let half_width = args.grid_l.unwrap_or(20.0 / dec.nu);
    let nodes = args.grid_m.unwrap_or(2049);
    let picard = PicardConfig::calibrate_with(dec, weights, half_width, nodes)?;
    let cls = ctx.classify()?;
    let result = json!({
        "dims": dec.dims,
        "nu": dec.nu,
        "nu_max": dec.nu_max,
        "delta": dec.delta,
        "gamma0_condition": dec.gamma0_condition,
        "a_condition": dec.a_condition,
        "hyperbolic_spectrum": dec.s_eigs,
        "classification": cls.to_json_value(),
        "picard": picard,
    });
    let config = json!({ "weights": weights, "half_width": half_width, "nodes": nodes });
    let out = envelope("decompose", args, config, result);
    art.report(&out)?;
    if art.formats.csv {
        let mut csv = String::from("index,eigenvalue\n");
        for (i, e) in dec.s_eigs.iter().enumerate() {
            csv.push_str(&format!("{i},{}\n", crate::grid::format_float(*e)));
        }
        art.put("spectrum.csv", &csv)?;
    }
    Ok(out)
}

fn cmd_expand(args: &RunArgs, art: &Artifacts) -> Result<Value> {
    let ctx = Context::load(args)?;
    let k = args.order()?;
    let cls = ctx.classify()?;
    let exp = taylor_expand(&ctx.dec, &ctx.model, k)?;
    let nf = normal_form(&exp, &cls).ok();
    let result = json!({
        "classification": cls.to_json_value(),
        "normal_form": nf,
        "expansion": exp.to_json_value(),
    });
    let out = envelope("expand", args, json!({ "order": k }), result);
    art.report(&out)?;
    if art.formats.csv {
        let mut csv = String::from("target,multi_index,coeff\n");
        for (t, pl) in exp.xi.iter().enumerate() {
            for (i, &c) in pl.iter().enumerate() {
                if c != 0.0 {
                    let mi: Vec<String> = exp.table.exponent(i).iter().map(|e| e.to_string()).collect();
                    csv.push_str(&format!("{t},{},{}\n", mi.join(" "), crate::grid::format_float(c)));
                }
            }
        }
        art.put("expansion.csv", &csv)?;
    }
    Ok(out)
}

fn profile_svg(title: &str, profiles: &[&Profile]) -> String {
    let xs: Vec<Vec<f64>> = profiles.iter().map(|p| p.state.xs()).collect();
    let series: Vec<Series> = profiles
        .iter()
        .zip(&xs)
        .map(|(p, x)| Series { label: p.kind.label(), x, y: &p.u1 })
        .collect();
    line_plot(title, "x", "u1", &series, false)
}

fn cmd_profile(args: &RunArgs, art: &Artifacts) -> Result<Value> {
    let ctx = Context::load(args)?;
    let cls = ctx.classify()?;
    let cfg = args.profile_config()?;
    let eps = args.eps()?;
    let setup = ShockSetup { model: &ctx.model, dec: &ctx.dec, cls: &cls };
    let profile = match args.kind.as_str() {
        "relaxation" => relaxation_profile(&setup, &taylor_expand(&ctx.dec, &ctx.model, cfg.order)?, eps, &cfg)?,
        "ce2" => ce2_profile(&setup, eps, &cfg)?,
        "burgers" => burgers_profile(&setup, eps, &cfg)?,
        other => return Err(KmError::Config(format!("unknown profile kind '{other}'"))),
    };
    let config = json!({ "eps": eps, "kind": args.kind, "grid": profile_config_json(&cfg, Some(profile.state.half_width())) });
    let out = envelope("profile", args, config, profile.summary_json());
    art.report(&out)?;
    if art.formats.csv {
        art.put(&format!("profile_{}.csv", args.kind), &profile.to_csv(&ctx.model, &ctx.dec))?;
    }
    if art.formats.svg {
        art.put(&format!("profile_{}.svg", args.kind), &profile_svg(&format!("{} profile, eps = {eps}", args.kind), &[&profile]))?;
    }
    Ok(out)
}

fn cmd_compare(args: &RunArgs, art: &Artifacts) -> Result<Value> {
    let ctx = Context::load(args)?;
    let cls = ctx.classify()?;
    let cfg = args.profile_config()?;
    let eps = args.eps()?;
    let setup = ShockSetup { model: &ctx.model, dec: &ctx.dec, cls: &cls };
    let exp = taylor_expand(&ctx.dec, &ctx.model, cfg.order)?;
    let rel = relaxation_profile(&setup, &exp, eps, &cfg)?;
    let ce = ce2_profile(&setup, eps, &cfg)?;
    let burgers = burgers_profile(&setup, eps, &cfg)?;
    let metrics = compare_profiles(&setup, &rel, &ce)?;
    let rh = rankine_hugoniot(&ctx.model, &ctx.dec, &cls, eps)?;
    let result = json!({
        "metrics": metrics,
        "relaxation": rel.summary_json(),
        "chapman_enskog": ce.summary_json(),
        "rankine_hugoniot": { "u_minus": rh.u_minus.as_slice(), "u_plus": rh.u_plus.as_slice() },
        "burgers_slope_at_center": -cls.lambda * eps * eps / (2.0 * cls.kappa_scalar()),
    });
    let config = json!({ "eps": eps, "grid": profile_config_json(&cfg, Some(rel.state.half_width())) });
    let out = envelope("compare", args, config, result);
    art.report(&out)?;
    if art.formats.csv {
        art.put("profile_relaxation.csv", &rel.to_csv(&ctx.model, &ctx.dec))?;
        art.put("profile_ce2.csv", &ce.to_csv(&ctx.model, &ctx.dec))?;
        art.put("profile_burgers.csv", &burgers.to_csv(&ctx.model, &ctx.dec))?;
    }
    if art.formats.svg {
        art.put("compare.svg", &profile_svg(&format!("profiles, eps = {eps}"), &[&rel, &ce, &burgers]))?;
    }
    Ok(out)
}

#[derive(Debug, Clone)]
struct EpsList(Vec<f64>);

// an empty string is a valid, empty list
fn parse_eps_list(s: &str) -> std::result::Result<EpsList, String> {
    if s.trim().is_empty() {
        return Ok(EpsList(Vec::new()));
    }
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("'{t}': {e}")))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map(EpsList)
}

fn cmd_sweep(args: &RunArgs, art: &Artifacts) -> Result<Value> {
    let model = resolve_model(&args.model, args.seed)?;
    let cfg = args.profile_config()?;
    let list = args.eps_list.clone().map_or_else(|| DEFAULT_SWEEP.to_vec(), |l| l.0);
    let report = if list.is_empty() {
        None
    } else {
        Some(epsilon_sweep(&model, &list, &cfg, args.jobs)?)
    };
    let config = json!({ "eps_list": list, "jobs": args.jobs, "grid": profile_config_json(&cfg, None) });
    let result = match &report {
        Some(r) => serde_json::to_value(r)?,
        None => json!({ "rows": [], "slopes": {}, "fit_residuals": {} }),
    };
    let out = envelope("sweep", args, config, result);
    art.report(&out)?;
    if let Some(r) = &report {
        if art.formats.csv {
            art.put("sweep.csv", &r.to_csv())?;
        }
        if art.formats.svg {
            let eps: Vec<f64> = r.rows.iter().map(|row| row.eps).collect();
            let cols: Vec<(&str, Vec<f64>)> = vec![
                ("sup_u", r.rows.iter().map(|row| row.sup_u).collect()),
                ("sup_v", r.rows.iter().map(|row| row.sup_v).collect()),
                ("tail_amplitude", r.rows.iter().map(|row| row.tail_amplitude).collect()),
                ("endstate_error", r.rows.iter().map(|row| row.endstate_error).collect()),
            ];
            let series: Vec<Series> = cols.iter().map(|(l, y)| Series { label: l, x: &eps, y }).collect();
            art.put("sweep.svg", &line_plot("profile metrics against amplitude", "eps", "metric", &series, true))?;
        }
    }
    Ok(out)
}

fn error_json(e: &KmError) -> Value {
    let kind = match e {
        KmError::ModelNotFound(_) => "model_not_found",
        KmError::Config(_) => "config",
        KmError::Schema(_) | KmError::Json(_) => "schema",
        KmError::Dimension(_) | KmError::EmptyStateSpace => "dimension",
        KmError::Hypothesis(_) => "hypothesis",
        KmError::InvalidModel(_) | KmError::NotLinearlyDegenerate => "invalid_model",
        KmError::Io(_) => "io",
        _ => "numeric",
    };
    json!({ "schema": SCHEMA, "error": { "kind": kind, "message": e.to_string() } })
}

/// Runs the CLI with `argv` (program name first), printing the report or the
/// error JSON to `out`, and returns the exit code.
pub fn run(argv: &[String], out: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return 0;
            }
            let v = json!({ "schema": SCHEMA, "error": { "kind": "usage", "message": e.to_string() } });
            let _ = write!(out, "{}", pretty(&v));
            return 2;
        }
    };
    let args = match &cli.command {
        Command::Verify(a)
        | Command::Decompose(a)
        | Command::Expand(a)
        | Command::Profile(a)
        | Command::Compare(a)
        | Command::Sweep(a) => a,
    };
    let result = args.formats().and_then(|formats| {
        let art = Artifacts { dir: args.out.as_deref(), formats };
        match &cli.command {
            Command::Verify(a) => cmd_verify(a, &art).map(|(v, pass)| (v, if pass { 0 } else { 1 })),
            Command::Decompose(a) => cmd_decompose(a, &art).map(|v| (v, 0)),
            Command::Expand(a) => cmd_expand(a, &art).map(|v| (v, 0)),
            Command::Profile(a) => cmd_profile(a, &art).map(|v| (v, 0)),
            Command::Compare(a) => cmd_compare(a, &art).map(|v| (v, 0)),
            Command::Sweep(a) => cmd_sweep(a, &art).map(|v| (v, 0)),
        }
    });
    match result {
        Ok((v, code)) => {
            let _ = write!(out, "{}", pretty(&v));
            code
        }
        Err(e) => {
            let _ = write!(out, "{}", pretty(&error_json(&e)));
            if e.is_usage() {
                2
            } else {
                1
            }
        }
    }
}
