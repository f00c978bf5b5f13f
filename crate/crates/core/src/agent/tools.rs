use std::collections::BTreeMap;
use std::sync::Arc;

use serde_json::{json, Map, Value};

use super::message::{FieldKind, ToolCall, ToolResult, ToolSpec};
use super::session::SessionState;
use crate::docstore::DocStore;
use crate::fit::{fit_lm, fit_report, FitOptions, FitProblem};
use crate::models::{ModelRegistry, QGrid, DEFAULT_QMAX, DEFAULT_QMIN, DEFAULT_QPOINTS};
use crate::plot::{PlotArtifact, PlotSeries};
use crate::sld::sld_report;

pub const TOOL_SLD: &str = "tool_sld";
pub const TOOL_LIST_MODELS: &str = "tool_list_models";
pub const TOOL_MODEL_DOC: &str = "tool_model_doc";
pub const TOOL_SEARCH_DOCS: &str = "tool_search_docs";
pub const TOOL_GENERATE: &str = "tool_generate";
pub const TOOL_FIT: &str = "tool_fit";

const DEFAULT_SEARCH_K: usize = 3;
const MAX_GENERATE_POINTS: u64 = 100_000;

/// Shared, read-only resources the tools work against.
#[derive(Debug, Clone)]
pub struct Toolbox {
    pub registry: Arc<ModelRegistry>,
    pub docs: Arc<DocStore>,
    pub fit_options: FitOptions,
}

impl Toolbox {
    pub fn new(registry: Arc<ModelRegistry>, docs: Arc<DocStore>) -> Self {
        Self {
            registry,
            docs,
            fit_options: FitOptions::default(),
        }
    }

    /// Standard registry with its bundled documentation.
    pub fn standard() -> Self {
        let registry = Arc::new(ModelRegistry::standard());
        let docs = DocStore::build(&registry, None).expect("bundled model docs index");
        Self::new(registry, Arc::new(docs))
    }
}

pub fn tool_spec(name: &str) -> Option<ToolSpec> {
    use FieldKind::*;
    Some(match name {
        TOOL_SLD => ToolSpec::new(
            TOOL_SLD,
            "Neutron (real, imaginary) and X-ray scattering length density of a material \
             from its chemical formula and mass density. Isotopes as D, T or H[2], C[13].",
        )
        .field("formula", String, true, "chemical formula, e.g. C2H6OS or D2O")
        .field("density", Number, true, "mass density in g/cm^3"),
        TOOL_LIST_MODELS => ToolSpec::new(TOOL_LIST_MODELS, "List available scattering models."),
        TOOL_MODEL_DOC => ToolSpec::new(
            TOOL_MODEL_DOC,
            "Full documentation of one model: description, parameters with units and bounds, equation.",
        )
        .field("name", String, true, "model name"),
        TOOL_SEARCH_DOCS => ToolSpec::new(TOOL_SEARCH_DOCS, "Keyword search over model documentation.")
            .field("query", String, true, "search words")
            .field("k", Integer, false, "number of hits, default 3"),
        TOOL_GENERATE => ToolSpec::new(
            TOOL_GENERATE,
            "Compute I(q) for a model over a log-spaced q range, plot it and store it as a data file.",
        )
        .field("model", String, true, "model name")
        .field("params", NumberMap, false, "parameter values; omitted ones take defaults")
        .field("qmin", Number, false, "lowest q in 1/Å, default 0.001")
        .field("qmax", Number, false, "highest q in 1/Å, default 1")
        .field("n", Integer, false, "number of q points, default 200")
        .field("noise_fraction", Number, false, "relative Gaussian noise, default 0")
        .field("seed", Integer, false, "noise seed, default 0"),
        TOOL_FIT => ToolSpec::new(
            TOOL_FIT,
            "Fit a model to an uploaded data file. Every parameter not fixed is fitted.",
        )
        .field("file_id", String, true, "id of an uploaded file")
        .field("model", String, true, "model name")
        .field("fixed", NumberMap, false, "parameters held at the given value")
        .field("initial", NumberMap, false, "starting values")
        .field("bounds", BoundsMap, false, "name -> [lower, upper]"),
        _ => return None,
    })
}

pub fn tool_specs(names: &[&str]) -> Vec<ToolSpec> {
    names.iter().filter_map(|n| tool_spec(n)).collect()
}

/// Validates and runs one call. Failures become `ok = false` results.
pub fn execute_tool(
    call: &ToolCall,
    allowed: &[ToolSpec],
    session: &SessionState,
    tb: &Toolbox,
) -> ToolResult {
    let Some(spec) = allowed.iter().find(|s| s.name == call.name) else {
        return ToolResult::failure(&call.id, format!("unknown tool '{}'", call.name));
    };
    if let Err(e) = spec.validate(&call.arguments) {
        return ToolResult::failure(
            &call.id,
            format!("invalid arguments for {}: {e}", call.name),
        );
    }
    let empty = Map::new();
    let args = call.arguments.as_object().unwrap_or(&empty);
    let outcome = match call.name.as_str() {
        TOOL_SLD => run_sld(args),
        TOOL_LIST_MODELS => Ok(run_list_models(tb)),
        TOOL_MODEL_DOC => run_model_doc(args, tb),
        TOOL_SEARCH_DOCS => run_search(args, tb),
        TOOL_GENERATE => run_generate(args, session, tb),
        TOOL_FIT => run_fit(args, session, tb),
        other => Err(format!("tool '{other}' has no implementation")),
    };
    match outcome {
        Ok(payload) => ToolResult::success(&call.id, payload),
        Err(e) => ToolResult::failure(&call.id, e),
    }
}

fn str_arg<'a>(args: &'a Map<String, Value>, name: &str) -> &'a str {
    args.get(name).and_then(Value::as_str).unwrap_or_default()
}

fn num_arg(args: &Map<String, Value>, name: &str) -> Option<f64> {
    args.get(name).and_then(Value::as_f64)
}

fn int_arg(args: &Map<String, Value>, name: &str) -> Option<u64> {
    args.get(name).and_then(Value::as_u64)
}

fn number_map(args: &Map<String, Value>, name: &str) -> BTreeMap<String, f64> {
    args.get(name)
        .and_then(Value::as_object)
        .map(|m| {
            m.iter()
                .filter_map(|(k, v)| v.as_f64().map(|x| (k.clone(), x)))
                .collect()
        })
        .unwrap_or_default()
}

fn run_sld(args: &Map<String, Value>) -> Result<Value, String> {
    let formula = str_arg(args, "formula");
    let density = num_arg(args, "density").unwrap_or_default();
    let r = sld_report(formula, density).map_err(|e| e.to_string())?;
    let mut v = serde_json::to_value(&r).map_err(|e| e.to_string())?;
    v["units"] = json!("1e-6/Å^2");
    Ok(v)
}

fn run_list_models(tb: &Toolbox) -> Value {
    let models: Vec<Value> = tb
        .registry
        .list_models()
        .into_iter()
        .map(|m| json!({ "name": m.name, "title": m.title, "category": m.category }))
        .collect();
    json!({ "models": models })
}

fn run_model_doc(args: &Map<String, Value>, tb: &Toolbox) -> Result<Value, String> {
    let doc = tb
        .docs
        .get_doc(str_arg(args, "name"))
        .map_err(|e| e.to_string())?;
    serde_json::to_value(doc).map_err(|e| e.to_string())
}

fn run_search(args: &Map<String, Value>, tb: &Toolbox) -> Result<Value, String> {
    let k = int_arg(args, "k").map_or(DEFAULT_SEARCH_K, |k| k as usize);
    let hits = tb
        .docs
        .search(str_arg(args, "query"), k)
        .map_err(|e| e.to_string())?;
    Ok(json!({ "hits": hits }))
}

fn run_generate(
    args: &Map<String, Value>,
    session: &SessionState,
    tb: &Toolbox,
) -> Result<Value, String> {
    let model = str_arg(args, "model");
    let params = number_map(args, "params");
    let qmin = num_arg(args, "qmin").unwrap_or(DEFAULT_QMIN);
    let qmax = num_arg(args, "qmax").unwrap_or(DEFAULT_QMAX);
    let n = int_arg(args, "n").unwrap_or(DEFAULT_QPOINTS as u64);
    if n > MAX_GENERATE_POINTS {
        return Err(format!(
            "n = {n} exceeds the limit of {MAX_GENERATE_POINTS} points"
        ));
    }
    let noise = num_arg(args, "noise_fraction").unwrap_or(0.0);
    let seed = int_arg(args, "seed").unwrap_or(0);
    let grid = QGrid::log_spaced(qmin, qmax, n as usize).map_err(|e| e.to_string())?;
    let data = tb
        .registry
        .generate_dataset(model, &params, &grid, noise, seed)
        .map_err(|e| e.to_string())?;

    let series = if noise > 0.0 {
        PlotSeries::points(model, &data)
    } else {
        PlotSeries::curve(model, data.q().to_vec(), data.intensity().to_vec())
    };
    let plot = PlotArtifact::new(format!("{model} model")).with_series(series);
    let plot_id = session.add_plot(plot);
    let file = session.add_file(&format!("{model}-generated.txt"), data.clone(), Vec::new());

    let (q, i) = (data.q(), data.intensity());
    let last = data.len() - 1;
    let peak = (0..data.len())
        .max_by(|&a, &b| i[a].total_cmp(&i[b]))
        .unwrap_or(0);
    let resolved = tb
        .registry
        .resolve_params(model, &params)
        .map_err(|e| e.to_string())?;
    Ok(json!({
        "plot_id": plot_id,
        "file_id": file.file_id,
        "model": model,
        "params": resolved.to_map(),
        "points": data.len(),
        "first": [q[0], i[0]],
        "last": [q[last], i[last]],
        "peak": [q[peak], i[peak]],
    }))
}

fn run_fit(
    args: &Map<String, Value>,
    session: &SessionState,
    tb: &Toolbox,
) -> Result<Value, String> {
    let file_id = str_arg(args, "file_id");
    let model = str_arg(args, "model");
    let file = session
        .file(file_id)
        .ok_or_else(|| format!("no uploaded file with id '{file_id}'"))?;

    let mut builder = FitProblem::builder(Arc::clone(&tb.registry), model, file.dataset.clone());
    for (k, v) in number_map(args, "fixed") {
        builder = builder.fix(&k, v);
    }
    for (k, v) in number_map(args, "initial") {
        builder = builder.initial(&k, v);
    }
    if let Some(bounds) = args.get("bounds").and_then(Value::as_object) {
        for (k, pair) in bounds {
            let lo = pair[0].as_f64().unwrap_or(f64::NAN);
            let hi = pair[1].as_f64().unwrap_or(f64::NAN);
            builder = builder.bounds(k, lo, hi);
        }
    }
    let problem = builder.build().map_err(|e| e.to_string())?;
    let result = fit_lm(&problem, &tb.fit_options).map_err(|e| e.to_string())?;
    let report = fit_report(&problem, &result);

    let data = problem.dataset();
    let fitted = problem
        .model_intensity(&result.values)
        .map_err(|e| e.to_string())?;
    let plot = PlotArtifact::new(format!("{model} fit to {}", file.name))
        .with_series(PlotSeries::points(&file.name, data))
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
    let plot_id = session.add_plot(plot);

    Ok(json!({
        "plot_id": plot_id,
        "model": model,
        "file_id": file_id,
        "values": result.values,
        "uncertainties": result.uncertainties,
        "fixed": result.fixed,
        "chi2_reduced": result.chi2_reduced,
        "converged": result.converged,
        "iterations": result.iterations,
        "report": report.to_string(),
    }))
}
