use serde::{Deserialize, Serialize};

use super::message::ToolSpec;
use super::tools::{
    tool_specs, TOOL_FIT, TOOL_GENERATE, TOOL_LIST_MODELS, TOOL_MODEL_DOC, TOOL_SEARCH_DOCS,
    TOOL_SLD,
};

pub const MAX_TOOL_ITERATIONS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Guidance,
    Sld,
    Generate,
    Fit,
}

impl Task {
    pub const ALL: [Task; 4] = [Task::Guidance, Task::Sld, Task::Generate, Task::Fit];

    pub fn label(self) -> &'static str {
        match self {
            Task::Guidance => "guidance",
            Task::Sld => "sld",
            Task::Generate => "generate",
            Task::Fit => "fit",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.label() == s)
    }

    /// Agent that handles the task.
    pub fn agent(self) -> &'static str {
        match self {
            Task::Guidance => COORDINATOR,
            Task::Sld => "sld",
            Task::Generate => "generation",
            Task::Fit => "fitting",
        }
    }
}

pub const COORDINATOR: &str = "coordinator";

#[derive(Debug, Clone, PartialEq)]
pub struct AgentProfile {
    pub name: String,
    pub system_prompt: String,
    pub tools: Vec<ToolSpec>,
    pub max_tool_iterations: usize,
}

pub const ROUTER_PROMPT: &str =
    "You are the coordinator of a small-angle scattering analysis assistant. \
Classify the user's request into exactly one task and reply with only its label:\n\
guidance - questions about the assistant, how to use it, or general help\n\
sld - scattering length density of a material\n\
generate - computing or plotting model scattering curves\n\
fit - fitting a model to the user's uploaded data\n\
Reply with one word: guidance, sld, generate or fit.";

pub const GUIDANCE_PROMPT: &str =
    "You are the coordinator of a small-angle scattering analysis assistant. \
Introduce yourself briefly and describe your three capabilities with one example prompt each: \
SLD calculation from a chemical formula and density, data generation from scattering models, \
and data fitting of uploaded data with a model. Answer the user's question if they asked one.";

const SLD_PROMPT: &str = "You are the SLD expert of a small-angle scattering assistant. \
Work out the chemical formula and mass density (g/cm^3) of the material the user names, \
using standard reference values when they are not given, then call tool_sld. \
Report the real and imaginary neutron SLD and the X-ray SLD in units of 1e-6/Å^2, \
stating the formula and density you used.";

const GENERATION_PROMPT: &str =
    "You are the data generation expert of a small-angle scattering assistant. \
Pick the model that matches the request, read its documentation with tool_model_doc when unsure \
of parameter names or units (lengths in Å, SLDs in 1e-6/Å^2), and call tool_generate with the \
requested parameters and q range. Summarize the model, the parameters used and the q range, and \
mention the plot.";

const FITTING_PROMPT: &str = "You are the data fitting expert of a small-angle scattering assistant. \
Choose the model, read its documentation with tool_model_doc, and call tool_fit on the uploaded file. \
Fix parameters the user states or that are known (for example a solvent SLD from tool_sld, or 1 as \
an estimate of an unknown sample SLD), give sensible initial values and bounds, and refit if the \
result is poor. Report the fitted parameters with uncertainties, the fixed parameters, the reduced \
chi2 and whether the fit converged.";

impl AgentProfile {
    fn new(name: &str, prompt: &str, tools: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            system_prompt: prompt.to_string(),
            tools: tool_specs(tools),
            max_tool_iterations: MAX_TOOL_ITERATIONS,
        }
    }

    /// Routing only; no tools.
    pub fn coordinator() -> Self {
        Self::new(COORDINATOR, ROUTER_PROMPT, &[])
    }

    pub fn sld() -> Self {
        Self::new("sld", SLD_PROMPT, &[TOOL_SLD])
    }

    pub fn generation() -> Self {
        Self::new(
            "generation",
            GENERATION_PROMPT,
            &[
                TOOL_GENERATE,
                TOOL_SEARCH_DOCS,
                TOOL_MODEL_DOC,
                TOOL_LIST_MODELS,
            ],
        )
    }

    pub fn fitting() -> Self {
        Self::new(
            "fitting",
            FITTING_PROMPT,
            &[
                TOOL_FIT,
                TOOL_SLD,
                TOOL_SEARCH_DOCS,
                TOOL_MODEL_DOC,
                TOOL_LIST_MODELS,
            ],
        )
    }

    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Guidance => Self::coordinator(),
            Task::Sld => Self::sld(),
            Task::Generate => Self::generation(),
            Task::Fit => Self::fitting(),
        }
    }

    pub fn tool_names(&self) -> Vec<&str> {
        self.tools.iter().map(|t| t.name.as_str()).collect()
    }
}
