use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use tlinf_core::experiment::{self, ExperimentConfig, Setup};
use tlinf_core::field::io::{read_field, write_field, FieldHeader};
use tlinf_core::field::SampledField;
use tlinf_core::frames::{
    dual_reconstruct, frame_bounds, molecule_check, moment_problem, sample_index_set, AmalgamSpec, FrameOperator, IndexKind,
    IndexSet, MolecularSystem,
};
use tlinf_core::group::{
    isometry_check, pti_norm, reproducing_check, wavelet_support, wavelet_transform, ControlWeight, GroupGrid, Neighborhood,
    VSampler,
};
use tlinf_core::norms::{exponent, NormContext, WindowKind};
use tlinf_core::suite::suite_generate;
use tlinf_core::Error;

#[derive(Parser)]
#[command(name = "tlinf", version, about = "Anisotropic Triebel-Lizorkin norms, wavelet transforms and frames")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration field, e.g. --set norm.alpha=0.5.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Root of the results tree.
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct FieldArg {
    /// Field file written by `tlinf suite`; defaults to a suite field.
    #[arg(long)]
    field: Option<PathBuf>,
    /// Suite index used without --field.
    #[arg(long, default_value_t = 0)]
    index: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum WindowArg {
    Cube,
    Ball,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Covering,
    Separated,
}

#[derive(Subcommand)]
enum Command {
    /// TL_q, TL_∞, Besov and Peetre norms of one field.
    Norm {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        field: FieldArg,
        #[arg(long, allow_hyphen_values = true)]
        alpha: Option<f64>,
        /// Exponent q: a number, a/b or inf.
        #[arg(long, value_parser = exponent::parse)]
        q: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        /// Largest retained band.
        #[arg(long = "J", allow_hyphen_values = true)]
        j_max: Option<i32>,
        /// Largest window level ℓ.
        #[arg(long = "L", allow_hyphen_values = true)]
        ell_max: Option<i32>,
        #[arg(long, value_enum)]
        window: Option<WindowArg>,
        /// Continuous-scale quadrature step.
        #[arg(long)]
        ds: Option<f64>,
    },
    /// Continuous wavelet transform on the affine group.
    #[command(subcommand)]
    Group(GroupCommand),
    /// Index sets, frame bounds, reconstruction and molecules.
    #[command(subcommand)]
    Frames(FramesCommand),
    /// Check that a configuration builds; exit 2 if not.
    Validate {
        #[command(flatten)]
        common: Common,
    },
    /// Write the test suite as field files.
    Suite {
        #[command(flatten)]
        common: Common,
    },
    /// Run the experiment named by the configuration's kind.
    Run {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Subcommand)]
enum GroupCommand {
    /// W_ψf on a group grid covering the field's band.
    Wavelet {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        field: FieldArg,
    },
    /// Compare W_ψf with W_ψf ∗ W_ψψ.
    Reproduce {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        field: FieldArg,
    },
    /// Peetre-type norm of W_ψf.
    Ptinorm {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        field: FieldArg,
    },
    /// Control-weight symmetry and envelope comparison.
    Weights {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Subcommand)]
enum FramesCommand {
    /// Write an index set Γ.
    SampleGamma {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "covering")]
        kind: KindArg,
        /// Defaults to frames.densityFactor or frames.separatedDensity.
        #[arg(long)]
        density: Option<f64>,
    },
    /// Frame bounds of the covering Γ.
    Bounds {
        #[command(flatten)]
        common: Common,
    },
    /// Iterative reconstruction of one field.
    Reconstruct {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        field: FieldArg,
    },
    /// Gramian solution of the moment problem on the separated Γ.
    Moments {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        field: FieldArg,
    },
    /// Molecule inequality for the Gramian duals.
    MoleculeCheck {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        field: FieldArg,
    },
}

/// Outcome of a subcommand: whether its criterion held.
type Verdict = anyhow::Result<bool>;

fn load_config(common: &Common) -> anyhow::Result<ExperimentConfig> {
    let base = match &common.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    let config = base.with_overrides(&common.sets)?;
    config.validate()?;
    Ok(config)
}

fn result_dir(common: &Common, config: &ExperimentConfig) -> PathBuf {
    common.out.join(&config.label)
}

fn emit(dir: &Path, name: &str, value: &Value) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir)?;
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(dir.join(format!("{name}.json")), format!("{text}\n"))?;
    println!("{text}");
    Ok(())
}

fn load_field(setup: &Setup, config: &ExperimentConfig, arg: &FieldArg) -> anyhow::Result<SampledField> {
    match &arg.field {
        Some(p) => {
            let file = read_field(p).with_context(|| format!("reading {}", p.display()))?;
            if file.header.kind != "field" {
                bail!(Error::Validation(format!("{} holds a {} array, not a field", p.display(), file.header.kind)));
            }
            if file.header.grid != config.grid {
                bail!(Error::Validation(format!("{} was sampled on a different grid", p.display())));
            }
            Ok(SampledField::from_values(&setup.fgrid, file.values)?)
        }
        None => {
            let fields = suite_generate(&config.suite, config.grid.dim);
            let f = fields
                .get(arg.index)
                .ok_or_else(|| Error::Validation(format!("suite has {} fields, index {} requested", fields.len(), arg.index)))?;
            Ok(f.sample(&setup.fgrid)?)
        }
    }
}

const SPECTRAL_FLOOR: f64 = 1e-12;
/// Fields with content near ξ = 0 are cut this many levels below their band limit.
const MAX_BAND_WIDTH: f64 = 6.0;

/// Group grid covering the scales where W_ψf is nonzero.
fn group_grid(setup: &Setup, config: &ExperimentConfig, f: &SampledField) -> anyhow::Result<GroupGrid> {
    let hi = f.band_limit();
    if !hi.is_finite() {
        bail!(Error::Validation("field is zero".into()));
    }
    let peak = f.spectrum().iter().map(|v| v.norm_sqr()).fold(0.0, f64::max);
    let lo = f
        .spectrum()
        .iter()
        .zip(setup.fgrid.levels())
        .filter(|(v, _)| v.norm_sqr() > SPECTRAL_FLOOR * peak)
        .map(|(_, l)| *l)
        .fold(f64::INFINITY, f64::min)
        .max(hi - MAX_BAND_WIDTH);
    let (s0, s1) = wavelet_support(&setup.psi.psi, lo, hi);
    Ok(GroupGrid::covering(*setup.fgrid.spec(), s0, s1, config.group.ds)?)
}

#[allow(clippy::too_many_arguments)]
fn cmd_norm(
    common: &Common,
    field: &FieldArg,
    alpha: Option<f64>,
    q: Option<f64>,
    beta: Option<f64>,
    j_max: Option<i32>,
    ell_max: Option<i32>,
    window: Option<WindowArg>,
    ds: Option<f64>,
) -> Verdict {
    let mut config = load_config(common)?;
    let p = &mut config.norm;
    if let Some(v) = alpha {
        p.alpha = v;
    }
    if let Some(v) = q {
        p.q = v;
    }
    p.beta = beta.unwrap_or_else(|| if config.auto_beta { tlinf_core::norms::NormParams::default_beta(p.q) } else { p.beta });
    if let Some(v) = j_max {
        p.j_max = v;
    }
    if let Some(v) = ell_max {
        p.ell_max = v;
        p.ell_min = p.ell_min.min(v);
    }
    if let Some(w) = window {
        p.window = match w {
            WindowArg::Cube => WindowKind::Cube,
            WindowArg::Ball => WindowKind::Ball,
        };
    }
    if ds.is_some() {
        p.ds = ds;
    }
    p.validate()?;
    let setup = Setup::new(&config)?;
    let f = load_field(&setup, &config, field)?;
    let ctx = NormContext::new(&setup.fgrid, &setup.qn, config.analyzer, config.norm.clone())?;
    let embedding = config.norm.q.is_finite().then(|| ctx.embedding_check(&f)).transpose()?;
    let peetre = ctx.tl_peetre_norm(&f, true)?;
    let peetre_continuous = ctx.tl_peetre_norm(&f, false)?;
    let tl = ctx.tl(&ctx.bank(&f)?, config.norm.alpha, config.norm.q);
    let lower = tl.value == 0.0 || peetre.value >= tl.value * (1.0 - 1e-12);
    emit(
        &result_dir(common, &config),
        "norm",
        &json!({
            "params": config.norm,
            "tl": tl,
            "tlInf": ctx.tl_norm_inf(&f)?,
            "besov": ctx.besov_norm(&f)?,
            "peetreDiscrete": peetre,
            "peetreContinuous": peetre_continuous,
            "embedding": embedding,
            "peetreDominates": lower,
        }),
    )?;
    Ok(lower)
}

fn cmd_group(cmd: &GroupCommand) -> Verdict {
    match cmd {
        GroupCommand::Wavelet { common, field } => {
            let config = load_config(common)?;
            let setup = Setup::new(&config)?;
            let f = load_field(&setup, &config, field)?;
            let gg = group_grid(&setup, &config, &f)?;
            let w = wavelet_transform(&setup.fgrid, &f, &setup.psi, &gg)?;
            let iso = isometry_check(&setup.fgrid, &f, &w);
            let dir = result_dir(common, &config);
            std::fs::create_dir_all(&dir)?;
            let values: Vec<_> = w.array.slices.concat();
            write_field(&dir.join("wavelet.json"), FieldHeader::group(gg.spatial, gg.scales()), &values)?;
            emit(&dir, "wavelet_summary", &json!({ "scales": [gg.s0, gg.scale(gg.count - 1)], "ds": gg.ds, "isometry": iso }))?;
            Ok(true)
        }
        GroupCommand::Reproduce { common, field } => {
            let config = load_config(common)?;
            let setup = Setup::new(&config)?;
            let f = load_field(&setup, &config, field)?;
            let gg = group_grid(&setup, &config, &f)?;
            let rep = reproducing_check(&setup.fgrid, &f, &setup.psi, &setup.psi, &gg)?;
            emit(&result_dir(common, &config), "reproduce", &json!({ "report": rep }))?;
            Ok(rep.relative_l2.is_finite())
        }
        GroupCommand::Ptinorm { common, field } => {
            let config = load_config(common)?;
            let setup = Setup::new(&config)?;
            let f = load_field(&setup, &config, field)?;
            let gg = group_grid(&setup, &config, &f)?;
            let w = wavelet_transform(&setup.fgrid, &f, &setup.psi, &gg)?;
            let rep = pti_norm(&setup.qn, &w.array, &config.norm)?;
            emit(&result_dir(common, &config), "ptinorm", &json!({ "params": config.norm, "report": rep }))?;
            Ok(true)
        }
        GroupCommand::Weights { common } => {
            let mut config = load_config(common)?;
            config.kind = experiment::ExperimentKind::Weights;
            run_experiment(common, &config)
        }
    }
}

fn index_set(setup: &Setup, config: &ExperimentConfig, kind: IndexKind, density: f64) -> anyhow::Result<IndexSet> {
    let fields = suite_generate(&config.suite, config.grid.dim);
    let (lo, hi) = fields
        .iter()
        .filter(|f| !f.atoms.is_empty())
        .map(|f| f.band())
        .reduce(|a, b| (a.0.min(b.0), a.1.max(b.1)))
        .ok_or_else(|| Error::Validation("suite is empty".into()))?;
    let (s0, s1) = wavelet_support(&setup.psi.psi, lo, hi);
    let domain = GroupGrid::covering(*setup.fgrid.spec(), s0, s1, config.group.ds)?;
    Ok(sample_index_set(&setup.group, &domain, &Neighborhood::default(), kind, density)?)
}

fn gamma_rows(set: &IndexSet) -> Vec<Value> {
    set.gamma.iter().map(|g| json!({ "x": g.x, "s": g.s })).collect()
}

fn cmd_frames(cmd: &FramesCommand) -> Verdict {
    match cmd {
        FramesCommand::SampleGamma { common, kind, density } => {
            let config = load_config(common)?;
            let setup = Setup::new(&config)?;
            let (kind, d) = match kind {
                KindArg::Covering => (IndexKind::Covering, density.unwrap_or(config.frames.density_factor)),
                KindArg::Separated => (IndexKind::Separated, density.unwrap_or(config.frames.separated_density)),
            };
            let set = index_set(&setup, &config, kind, d)?;
            let ok = match kind {
                IndexKind::Covering => set.coverage >= 1.0,
                IndexKind::Separated => set.multiplicity <= 1,
            };
            emit(
                &result_dir(common, &config),
                "gamma",
                &json!({
                    "kind": set.kind, "density": set.density, "size": set.len(), "spatialStep": set.spatial_step,
                    "scaleStep": set.scale_step, "multiplicity": set.multiplicity, "coverage": set.coverage,
                    "gamma": gamma_rows(&set),
                }),
            )?;
            Ok(ok)
        }
        FramesCommand::Bounds { common } => {
            let config = load_config(common)?;
            let setup = Setup::new(&config)?;
            let set = index_set(&setup, &config, IndexKind::Covering, config.frames.density_factor)?;
            let op = FrameOperator::new(&setup.fgrid, &setup.psi, &set.gamma)?;
            let suite: Vec<SampledField> = suite_generate(&config.suite, config.grid.dim)
                .iter()
                .map(|f| f.sample(&setup.fgrid))
                .collect::<Result<_, _>>()?;
            let b = frame_bounds(&op, &suite, config.frames.power_iterations, config.suite.seed)?;
            emit(&result_dir(common, &config), "bounds", &json!({ "size": op.len(), "bounds": b, "contraction": b.contraction() }))?;
            Ok(b.a_lo > 0.0 && b.contraction() < 1.0)
        }
        FramesCommand::Reconstruct { common, field } => {
            let config = load_config(common)?;
            let setup = Setup::new(&config)?;
            let f = load_field(&setup, &config, field)?;
            let set = index_set(&setup, &config, IndexKind::Covering, config.frames.density_factor)?;
            let op = FrameOperator::new(&setup.fgrid, &setup.psi, &set.gamma)?;
            let suite: Vec<SampledField> = suite_generate(&config.suite, config.grid.dim)
                .iter()
                .map(|f| f.sample(&setup.fgrid))
                .collect::<Result<_, _>>()?;
            let fs = &config.frames;
            let b = frame_bounds(&op, &suite, fs.power_iterations, config.suite.seed)?;
            let rec = dual_reconstruct(&op, &f, &b, fs.iterations, fs.stop_error)?;
            let hit = rec.errors.iter().position(|e| *e <= fs.target_error);
            let ok = hit.is_some() && rec.ratio <= rec.predicted_ratio + fs.ratio_slack;
            emit(
                &result_dir(common, &config),
                "reconstruct",
                &json!({
                    "errors": rec.errors, "lambda": rec.lambda, "ratio": rec.ratio, "predictedRatio": rec.predicted_ratio,
                    "iterationsToTarget": hit, "pass": ok,
                }),
            )?;
            Ok(ok)
        }
        FramesCommand::Moments { common, field } => {
            let config = load_config(common)?;
            let setup = Setup::new(&config)?;
            let f = load_field(&setup, &config, field)?;
            let set = index_set(&setup, &config, IndexKind::Separated, config.frames.separated_density)?;
            let op = FrameOperator::new(&setup.fgrid, &setup.psi, &set.gamma)?;
            let c = op.analysis(&f)?;
            let sol = moment_problem(&op, &c, config.frames.condition_limit)?;
            let ok = sol.max_residual() <= config.frames.max_residual;
            emit(
                &result_dir(common, &config),
                "moments",
                &json!({
                    "size": op.len(), "condition": sol.condition, "rank": sol.rank,
                    "maxResidual": sol.max_residual(), "residuals": sol.residuals, "pass": ok,
                }),
            )?;
            Ok(ok)
        }
        FramesCommand::MoleculeCheck { common, field } => {
            let config = load_config(common)?;
            let setup = Setup::new(&config)?;
            let f = load_field(&setup, &config, field)?;
            let set = index_set(&setup, &config, IndexKind::Separated, config.frames.separated_density)?;
            let op = FrameOperator::new(&setup.fgrid, &setup.psi, &set.gamma)?;
            let sol = moment_problem(&op, &op.analysis(&f)?, config.frames.condition_limit)?;
            let system = MolecularSystem::duals(&op, &setup.group, &sol);
            let ggrid = system.support_grid(&setup.fgrid, config.group.ds)?;
            let q = config.qs[0];
            let cw = ControlWeight::new(setup.qn.abs_det(), config.alphas[0], config.beta_for(q), q)?;
            let ws = &config.weights;
            let sampler = VSampler::new(&setup.qn, ws.shells, ws.per_shell, ws.seed)?;
            let spec = AmalgamSpec { weight: &cw, sampler: &sampler, neighborhood: Neighborhood::default(), r: q.min(1.0) };
            let rep = molecule_check(&setup.fgrid, &setup.qn, &setup.group, &system, &ggrid, &spec)?;
            emit(&result_dir(common, &config), "molecules", &json!({ "report": rep }))?;
            Ok(rep.pass)
        }
    }
}

fn run_experiment(common: &Common, config: &ExperimentConfig) -> Verdict {
    let out = experiment::run(config)?;
    let dir = result_dir(common, config);
    out.write(&dir)?;
    println!("{}", serde_json::to_string_pretty(&out.summary)?);
    eprintln!("{}: {} -> {}", config.label, if out.pass { "PASS" } else { "FAIL" }, dir.display());
    Ok(out.pass)
}

fn dispatch(cli: &Cli) -> Verdict {
    match &cli.command {
        Command::Norm { common, field, alpha, q, beta, j_max, ell_max, window, ds } => {
            cmd_norm(common, field, *alpha, *q, *beta, *j_max, *ell_max, *window, *ds)
        }
        Command::Group(g) => cmd_group(g),
        Command::Frames(f) => cmd_frames(f),
        Command::Validate { common } => {
            let config = load_config(common)?;
            println!("{}", serde_json::to_string_pretty(&config)?);
            Ok(true)
        }
        Command::Suite { common } => {
            let config = load_config(common)?;
            let dir = result_dir(common, &config).join("suite");
            let names = experiment::write_suite(&config, &dir)?;
            emit(&result_dir(common, &config), "suite", &json!({ "directory": dir, "fields": names }))?;
            Ok(true)
        }
        Command::Run { common } => {
            let config = load_config(common)?;
            run_experiment(common, &config)
        }
    }
}

/// Verification errors count as criterion failures, everything else as
/// invalid input or an internal error.
fn failure_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::VerificationFailed(_) | Error::Diverged { .. }) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(failure_code(&e))
        }
    }
}
