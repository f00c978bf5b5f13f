//! The `saskit` command line: SLD calculation, data generation, fitting,
//! model documentation, retrieval, the HTTP server and a terminal chat.

pub mod format;
pub mod svg;

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use saskit_core::agent::{
    handle_user_turn, BackendKind, BackendSettings, ChatBackend, OpenRouterBackend,
    ScriptedBackend, SessionState, Toolbox, DEFAULT_ENDPOINT, DEFAULT_MODEL,
};
use saskit_core::dataio::{load_ascii_named, save_ascii};
use saskit_core::docstore::DocStore;
use saskit_core::fit::{fit_lm, fit_report, FitError, FitOptions, FitProblem};
use saskit_core::models::{ModelRegistry, QGrid, DEFAULT_QMAX, DEFAULT_QMIN, DEFAULT_QPOINTS};
use saskit_core::sld::sld_report;
use saskit_core::{PlotArtifact, PlotSeries};
use saskit_service::AppConfig;

use format::sig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const EXIT_BACKEND: i32 = 4;

const DIGITS: usize = 6;

#[derive(Debug, Parser)]
#[command(
    name = "saskit",
    version,
    about = "Small-angle scattering toolkit with an LLM agent front end"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Scripted,
    Openrouter,
}

impl From<BackendArg> for BackendKind {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Scripted => BackendKind::Scripted,
            BackendArg::Openrouter => BackendKind::Openrouter,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Neutron and X-ray scattering length density of a material.
    Sld {
        formula: String,
        /// Mass density in g/cm^3.
        #[arg(long, allow_negative_numbers = true)]
        density: f64,
    },
    /// Evaluate a model on a log-spaced q grid.
    Generate {
        #[arg(long)]
        model: String,
        /// Parameter value, `name=value`; repeatable.
        #[arg(long = "set", value_name = "NAME=VALUE")]
        set: Vec<String>,
        #[arg(long, default_value_t = DEFAULT_QMIN)]
        qmin: f64,
        #[arg(long, default_value_t = DEFAULT_QMAX)]
        qmax: f64,
        #[arg(long, default_value_t = DEFAULT_QPOINTS)]
        n: usize,
        /// Relative Gaussian noise on the intensity.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Data file to write; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Fit a model to a data file.
    Fit {
        datafile: PathBuf,
        #[arg(long)]
        model: String,
        /// Pin a parameter, `name=value`; repeatable.
        #[arg(long = "fix", value_name = "NAME=VALUE")]
        fix: Vec<String>,
        /// Starting value, `name=value`; repeatable.
        #[arg(long = "init", value_name = "NAME=VALUE")]
        init: Vec<String>,
        /// Bounds, `name=lo,hi`; repeatable.
        #[arg(long = "bound", value_name = "NAME=LO,HI", allow_hyphen_values = true)]
        bound: Vec<String>,
        #[arg(long)]
        max_iter: Option<usize>,
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// List models or print a model's documentation.
    Models {
        #[command(subcommand)]
        action: ModelsAction,
    },
    /// Rank model documentation against a query.
    SearchDocs {
        query: String,
        #[arg(long, default_value_t = 3)]
        k: usize,
        /// Extra `.txt`/`.md` documents to index.
        #[arg(long)]
        docs_dir: Option<PathBuf>,
    },
    /// Run the HTTP API and web UI.
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        addr: IpAddr,
        #[arg(long, default_value_t = 8000)]
        port: u16,
        #[arg(long, value_enum, default_value_t = BackendArg::Openrouter)]
        backend: BackendArg,
        /// Scripted-backend scenario (TOML).
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value = DEFAULT_MODEL)]
        model: String,
        #[arg(long, default_value = DEFAULT_ENDPOINT)]
        endpoint: String,
        /// Persist sessions under this directory.
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// Serve this directory at `/` instead of the bundled page.
        #[arg(long)]
        ui_dir: Option<PathBuf>,
        #[arg(long)]
        docs_dir: Option<PathBuf>,
    },
    /// Talk to the agents from the terminal; reads prompts from stdin.
    Chat {
        #[arg(long, value_enum, default_value_t = BackendArg::Openrouter)]
        backend: BackendArg,
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value = DEFAULT_MODEL)]
        model: String,
        #[arg(long, default_value = DEFAULT_ENDPOINT)]
        endpoint: String,
        /// Data file to load into the session first; repeatable.
        #[arg(long)]
        upload: Vec<PathBuf>,
        /// Prompt to send instead of reading stdin; repeatable.
        #[arg(long = "message", short = 'm')]
        messages: Vec<String>,
    },
}

#[derive(Debug, Subcommand)]
pub enum ModelsAction {
    List,
    Doc { name: String },
}

/// A failed command and the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn input(message: impl ToString) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.to_string(),
        }
    }

    fn backend(message: impl ToString) -> Self {
        Self {
            code: EXIT_BACKEND,
            message: message.to_string(),
        }
    }
}

type CmdResult = Result<i32, Failure>;

/// Parses `args` (program name first) and runs the command; returns the
/// process exit code.
pub fn run<I, T>(args: I, input: &mut dyn BufRead, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = if e.use_stderr() {
                write!(err, "{e}")
            } else {
                write!(out, "{e}")
            };
            return e.exit_code();
        }
    };
    match dispatch(cli.command, input, out) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(cmd: Command, input: &mut dyn BufRead, out: &mut dyn Write) -> CmdResult {
    match cmd {
        Command::Sld { formula, density } => sld(&formula, density, out),
        Command::Generate {
            model,
            set,
            qmin,
            qmax,
            n,
            noise,
            seed,
            out: path,
            plot,
        } => generate(
            &model,
            &set,
            (qmin, qmax, n),
            (noise, seed),
            path.as_deref(),
            plot.as_deref(),
            out,
        ),
        Command::Fit {
            datafile,
            model,
            fix,
            init,
            bound,
            max_iter,
            plot,
        } => fit(
            &datafile,
            &model,
            (&fix, &init, &bound),
            max_iter,
            plot.as_deref(),
            out,
        ),
        Command::Models { action } => models(action, out),
        Command::SearchDocs { query, k, docs_dir } => {
            search_docs(&query, k, docs_dir.as_deref(), out)
        }
        Command::Serve {
            addr,
            port,
            backend,
            scenario,
            model,
            endpoint,
            data_dir,
            ui_dir,
            docs_dir,
        } => {
            let config = AppConfig {
                data_dir,
                ui_dir,
                docs_dir,
                settings: settings(backend, model, endpoint),
                scripted: scripted(scenario.as_deref())?,
                ..AppConfig::default()
            };
            saskit_service::run_blocking(config, SocketAddr::new(addr, port))
                .map_err(Failure::backend)?;
            Ok(EXIT_OK)
        }
        Command::Chat {
            backend,
            scenario,
            model,
            endpoint,
            upload,
            messages,
        } => {
            let settings = settings(backend, model, endpoint);
            let backend: Box<dyn ChatBackend> = match settings.backend {
                BackendKind::Scripted => Box::new(scripted(scenario.as_deref())?),
                BackendKind::Openrouter => {
                    Box::new(OpenRouterBackend::new(&settings).map_err(Failure::backend)?)
                }
            };
            chat(backend.as_ref(), &upload, &messages, input, out)
        }
    }
}

fn io_err(e: std::io::Error) -> Failure {
    Failure::input(e)
}

fn settings(backend: BackendArg, model: String, endpoint: String) -> BackendSettings {
    BackendSettings {
        backend: backend.into(),
        model,
        endpoint,
        api_key: None,
    }
}

fn scripted(scenario: Option<&Path>) -> Result<ScriptedBackend, Failure> {
    match scenario {
        None => Ok(ScriptedBackend::canonical()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Failure::input(format!("{}: {e}", p.display())))?;
            ScriptedBackend::from_toml(&text).map_err(Failure::input)
        }
    }
}

/// `name=value` pairs into a map.
fn assignments(items: &[String], flag: &str) -> Result<BTreeMap<String, f64>, Failure> {
    items
        .iter()
        .map(|item| {
            let (k, v) = item.split_once('=').ok_or_else(|| {
                Failure::input(format!("--{flag} expects name=value, got '{item}'"))
            })?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Failure::input(format!("--{flag} {k}: '{v}' is not a number")))?;
            Ok((k.trim().to_string(), v))
        })
        .collect()
}

fn bounds(items: &[String]) -> Result<BTreeMap<String, (f64, f64)>, Failure> {
    items
        .iter()
        .map(|item| {
            let bad = || Failure::input(format!("--bound expects name=lo,hi, got '{item}'"));
            let (k, v) = item.split_once('=').ok_or_else(bad)?;
            let (lo, hi) = v.split_once(',').ok_or_else(bad)?;
            let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
            let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
            Ok((k.trim().to_string(), (lo, hi)))
        })
        .collect()
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn sld(formula: &str, density: f64, out: &mut dyn Write) -> CmdResult {
    let r = sld_report(formula, density).map_err(|e| Failure::input(format!("{e:?}: {e}")))?;
    let rows = [
        ("formula", r.formula.clone(), ""),
        ("density", sig(r.density, DIGITS), "g/cm^3"),
        ("sld real", sig(r.sld_real, DIGITS), "1e-6/Å^2"),
        ("sld imaginary", sig(r.sld_imag, DIGITS), "1e-6/Å^2"),
        ("sld x-ray", sig(r.sld_xray, DIGITS), "1e-6/Å^2"),
        ("molar mass", sig(r.molar_mass, DIGITS), "g/mol"),
        ("number density", sig(r.number_density, DIGITS), "1/cm^3"),
        ("molecular volume", sig(r.molecular_volume, DIGITS), "Å^3"),
    ];
    for (k, v, u) in rows {
        writeln!(out, "{k:<18}{v} {u}").map_err(io_err)?;
    }
    Ok(EXIT_OK)
}

fn generate(
    model: &str,
    set: &[String],
    (qmin, qmax, n): (f64, f64, usize),
    (noise, seed): (f64, u64),
    path: Option<&Path>,
    plot: Option<&Path>,
    out: &mut dyn Write,
) -> CmdResult {
    let registry = ModelRegistry::standard();
    let params = assignments(set, "set")?;
    let model_err = |e: saskit_core::models::ModelError| {
        Failure::input(format!("{}: {e}", model_error_code(&e)))
    };
    let grid = QGrid::log_spaced(qmin, qmax, n).map_err(model_err)?;
    let data = registry
        .generate_dataset(model, &params, &grid, noise, seed)
        .map_err(model_err)?;
    let text = save_ascii(&data);
    match path {
        Some(p) => {
            write_file(p, &text)?;
            let resolved = registry.resolve_params(model, &params).map_err(model_err)?;
            writeln!(out, "model: {model}").map_err(io_err)?;
            for (k, v) in resolved.to_map() {
                writeln!(out, "  {k} = {}", sig(v, DIGITS)).map_err(io_err)?;
            }
            writeln!(out, "wrote {} points to {}", data.len(), p.display()).map_err(io_err)?;
        }
        None => out.write_all(text.as_bytes()).map_err(io_err)?,
    }
    if let Some(p) = plot {
        let series = if noise > 0.0 {
            PlotSeries::points(model, &data)
        } else {
            PlotSeries::curve(model, data.q().to_vec(), data.intensity().to_vec())
        };
        write_file(
            p,
            &svg::render(&PlotArtifact::new(format!("{model} model")).with_series(series)),
        )?;
    }
    Ok(EXIT_OK)
}

fn model_error_code(e: &saskit_core::models::ModelError) -> &'static str {
    use saskit_core::models::ModelError::*;
    match e {
        UnknownModel(_) => "UnknownModel",
        UnknownParameter(_) => "UnknownParameter",
        ParameterOutOfBounds { .. } => "ParameterOutOfBounds",
        NonFiniteParameter(_) => "NonFiniteParameter",
        InvalidRange { .. } => "InvalidRange",
        InvalidQGrid => "InvalidQGrid",
        InvalidNoise(_) => "InvalidNoise",
        DuplicateModel(_) => "DuplicateModel",
        InvalidModel(_) => "InvalidModel",
        Dataset(_) => "InvalidDataset",
    }
}

fn fit(
    datafile: &Path,
    model: &str,
    (fix, init, bound): (&[String], &[String], &[String]),
    max_iter: Option<usize>,
    plot: Option<&Path>,
    out: &mut dyn Write,
) -> CmdResult {
    let text = std::fs::read_to_string(datafile)
        .map_err(|e| Failure::input(format!("{}: {e}", datafile.display())))?;
    let name = datafile
        .file_name()
        .map(|n| n.to_string_lossy().into_owned());
    let parsed = load_ascii_named(&text, name.as_deref())
        .map_err(|e| Failure::input(format!("{}: {}: {e}", datafile.display(), e.code())))?;
    let mut builder =
        FitProblem::builder(Arc::new(ModelRegistry::standard()), model, parsed.dataset);
    for (k, v) in assignments(fix, "fix")? {
        builder = builder.fix(&k, v);
    }
    for (k, v) in assignments(init, "init")? {
        builder = builder.initial(&k, v);
    }
    for (k, (lo, hi)) in bounds(bound)? {
        builder = builder.bounds(&k, lo, hi);
    }
    let problem = builder.build().map_err(fit_failure)?;
    let mut opts = FitOptions::default();
    if let Some(m) = max_iter {
        opts.max_iter = m;
    }
    let result = fit_lm(&problem, &opts).map_err(fit_failure)?;
    for w in &parsed.warnings {
        writeln!(out, "warning: {w}").map_err(io_err)?;
    }
    write!(out, "{}", fit_report(&problem, &result)).map_err(io_err)?;
    if let Some(p) = plot {
        let data = problem.dataset();
        let fitted = problem
            .model_intensity(&result.values)
            .map_err(fit_failure)?;
        let artifact = PlotArtifact::new(format!("{model} fit"))
            .with_series(PlotSeries::points("data", data))
            .with_series(PlotSeries::curve(
                format!("{model} fit"),
                data.q().to_vec(),
                fitted,
            ))
            .with_series(PlotSeries::residuals(
                "normalized residuals",
                data.q().to_vec(),
                result.residuals.clone(),
            ));
        write_file(p, &svg::render(&artifact))?;
    }
    Ok(if result.converged {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    })
}

fn fit_failure(e: FitError) -> Failure {
    match e {
        FitError::EvaluationFailure(_) => Failure {
            code: EXIT_NOT_CONVERGED,
            message: e.to_string(),
        },
        e => Failure::input(e),
    }
}

fn models(action: ModelsAction, out: &mut dyn Write) -> CmdResult {
    let registry = ModelRegistry::standard();
    match action {
        ModelsAction::List => {
            for m in registry.list_models() {
                writeln!(out, "{:<10} {:<10} {}", m.name, m.category, m.title).map_err(io_err)?;
            }
        }
        ModelsAction::Doc { name } => {
            let info = registry
                .info(&name)
                .map_err(|e| Failure::input(format!("{}: {e}", model_error_code(&e))))?;
            write!(out, "{}", info.doc_text).map_err(io_err)?;
        }
    }
    Ok(EXIT_OK)
}

fn search_docs(query: &str, k: usize, docs_dir: Option<&Path>, out: &mut dyn Write) -> CmdResult {
    let registry = ModelRegistry::standard();
    let store = DocStore::build(&registry, docs_dir).map_err(Failure::input)?;
    let hits = store.search(query, k).map_err(Failure::input)?;
    if hits.is_empty() {
        writeln!(out, "no matches").map_err(io_err)?;
    }
    for (i, h) in hits.iter().enumerate() {
        writeln!(
            out,
            "{}. {} (score {})",
            i + 1,
            h.doc_id,
            sig(h.score, DIGITS)
        )
        .map_err(io_err)?;
        writeln!(out, "   {}", h.snippet.replace('\n', " ")).map_err(io_err)?;
    }
    Ok(EXIT_OK)
}

fn chat(
    backend: &dyn ChatBackend,
    uploads: &[PathBuf],
    messages: &[String],
    input: &mut dyn BufRead,
    out: &mut dyn Write,
) -> CmdResult {
    let session = SessionState::new();
    let tb = Toolbox::standard();
    let mut failed = false;
    let upload = |path: &Path, out: &mut dyn Write| -> Result<(), Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
        let name = path
            .file_name()
            .map_or_else(|| "upload".into(), |n| n.to_string_lossy().into_owned());
        let parsed = load_ascii_named(&text, Some(&name))
            .map_err(|e| Failure::input(format!("{}: {}: {e}", path.display(), e.code())))?;
        let f = session.add_file(&name, parsed.dataset, parsed.warnings);
        writeln!(out, "uploaded {name}: {} points", f.points).map_err(io_err)
    };
    for p in uploads {
        upload(p, out)?;
    }
    let mut turn = |text: &str, out: &mut dyn Write| -> Result<(), Failure> {
        writeln!(out, "> {text}").map_err(io_err)?;
        let reply = handle_user_turn(text, &session, backend, &tb).map_err(Failure::input)?;
        writeln!(out, "[{}] {}", reply.agent, reply.final_text).map_err(io_err)?;
        if reply.failure.is_some() {
            failed = true;
        }
        Ok(())
    };
    if messages.is_empty() {
        let mut line = String::new();
        loop {
            line.clear();
            if input.read_line(&mut line).map_err(io_err)? == 0 {
                break;
            }
            let text = line.trim();
            if text.is_empty() {
                continue;
            }
            if text == "/quit" || text == "/exit" {
                break;
            }
            match text.strip_prefix("/upload ") {
                Some(p) => {
                    if let Err(f) = upload(Path::new(p.trim()), out) {
                        writeln!(out, "error: {}", f.message).map_err(io_err)?;
                    }
                }
                None => turn(text, out)?,
            }
        }
    } else {
        for m in messages {
            turn(m, out)?;
        }
    }
    Ok(if failed { EXIT_BACKEND } else { EXIT_OK })
}
