//! Data shipped with the crate: the output-format library, the evaluation
//! formats, manual task-description pools and the generation prompts.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::model::{FormatSpec, TaskKind};

const FORMAT_FILES: [(TaskKind, &str); 9] = [
    (TaskKind::Ner, include_str!("../assets/formats/ner.json")),
    (TaskKind::Rc, include_str!("../assets/formats/rc.json")),
    (TaskKind::Re, include_str!("../assets/formats/re.json")),
    (TaskKind::Ed, include_str!("../assets/formats/ed.json")),
    (TaskKind::Eae, include_str!("../assets/formats/eae.json")),
    (TaskKind::Ee, include_str!("../assets/formats/ee.json")),
    (TaskKind::Ere, include_str!("../assets/formats/ere.json")),
    (TaskKind::OpenIe, include_str!("../assets/formats/openie.json")),
    (TaskKind::OnDemandIe, include_str!("../assets/formats/ondemandie.json")),
];

const EVAL_FILE: &str = include_str!("../assets/formats/eval.json");

const MANUAL_POOLS: [(TaskKind, &str); 9] = [
    (TaskKind::Ner, include_str!("../assets/pools/ner/manual.txt")),
    (TaskKind::Rc, include_str!("../assets/pools/rc/manual.txt")),
    (TaskKind::Re, include_str!("../assets/pools/re/manual.txt")),
    (TaskKind::Ed, include_str!("../assets/pools/ed/manual.txt")),
    (TaskKind::Eae, include_str!("../assets/pools/eae/manual.txt")),
    (TaskKind::Ee, include_str!("../assets/pools/ee/manual.txt")),
    (TaskKind::Ere, include_str!("../assets/pools/ere/manual.txt")),
    (TaskKind::OpenIe, include_str!("../assets/pools/openie/manual.txt")),
    (TaskKind::OnDemandIe, include_str!("../assets/pools/ondemandie/manual.txt")),
];

/// Prompt used to request a step-by-step explanation for an answer.
/// Placeholders: `{words_number}`, `{input}`, `{output}`.
pub const COT_PROMPT: &str = "Please generate a step-by-step explanation for [Answer] based on [Question], and give reasons for each step.
The generated explanation should make use of the content in the [Question] as much as possible, and must be consistent with the [Answer].
It will eventually be provided at the front of the answer.
No more than {words_number} words.

[Question]: {input}
[Answer]: {output}
[Step-by-Step Explanation]:";

/// Prompt header used to request new output-format templates.
/// Placeholders: `{task_name}`, `{task}`, `{slots}`, `{templates}`.
pub const FORMAT_PROMPT: &str = "You need to follow the template list to come up with a set of diverse templates.
The task indicated by this template is the \"{task_name}\" task.
We need to write the instruction, input format and corresponding output format template for it.
Instruction is an introduction to {task} tasks.
The instruction template content should include the following strings to facilitate subsequent replacement of the content: {text}.
The answer template content should include the following strings to facilitate subsequent replacement of the content: {slots}.
Here are the requirements:
1. Try not to repeat the verb for each template to maximize diversity.
2. The language used for the template also should be diverse. For example, use interrogative sentences, imperative sentences, etc.
3. Input and output templates ([Answer]: ..) should also be as diverse as possible.
4. Do not repeat the format of the answer template, nor repeat the examples given.
5. Input and output must correspond to each other.
6. The templates should be in English.

{templates}
Please follow the format given in the example to generate 1 templates.";

/// Prompt used to grow a task-description pool.
/// Placeholders: `{task_name}`, `{examples}`.
pub const DESCRIPTION_PROMPT: &str = "Here are several descriptions of the \"{task_name}\" task.
{examples}
Write one new description of the same task with the same meaning but a different wording. Reply with the description only.";

fn parse_specs(src: &str, origin: &str) -> Result<Vec<FormatSpec>> {
    let specs: Vec<FormatSpec> = serde_json::from_str(src)
        .map_err(|e| Error::config(format!("format library {origin}: {e}")))?;
    for s in &specs {
        s.validate()?;
    }
    Ok(specs)
}

fn library() -> &'static BTreeMap<TaskKind, Vec<FormatSpec>> {
    static LIB: OnceLock<BTreeMap<TaskKind, Vec<FormatSpec>>> = OnceLock::new();
    LIB.get_or_init(|| {
        FORMAT_FILES
            .iter()
            .map(|(task, src)| {
                let specs = parse_specs(src, task.as_str()).expect("bundled format library");
                assert!(specs.iter().all(|s| s.task == *task));
                (*task, specs)
            })
            .collect()
    })
}

fn eval_library() -> &'static BTreeMap<TaskKind, FormatSpec> {
    static LIB: OnceLock<BTreeMap<TaskKind, FormatSpec>> = OnceLock::new();
    LIB.get_or_init(|| {
        parse_specs(EVAL_FILE, "eval")
            .expect("bundled eval formats")
            .into_iter()
            .map(|s| (s.task, s))
            .collect()
    })
}

/// Bundled training formats for `task`.
pub fn formats_for(task: TaskKind) -> &'static [FormatSpec] {
    library().get(&task).map(Vec::as_slice).unwrap_or_default()
}

/// The fixed evaluation format for `task`. It is never used for SFT
/// training examples.
pub fn eval_format(task: TaskKind) -> &'static FormatSpec {
    &eval_library()[&task]
}

/// Looks a format up by name among training and evaluation formats.
pub fn format_by_name(name: &str) -> Option<&'static FormatSpec> {
    library()
        .values()
        .flatten()
        .chain(eval_library().values())
        .find(|s| s.name == name)
}

/// Reads every `*.json` file in `dir` (each an array of format specs),
/// sorted by file name.
pub fn load_format_dir(dir: &Path) -> Result<Vec<FormatSpec>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::config(format!("format library {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut out = Vec::new();
    for p in paths {
        let src = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        out.extend(parse_specs(&src, &p.display().to_string())?);
    }
    Ok(out)
}

/// The bundled hand-written task descriptions for `task`.
pub fn manual_descriptions(task: TaskKind) -> Vec<String> {
    MANUAL_POOLS
        .iter()
        .find(|(t, _)| *t == task)
        .map(|(_, src)| read_pool_lines(src))
        .unwrap_or_default()
}

/// One description per non-blank line.
pub fn read_pool_lines(src: &str) -> Vec<String> {
    src.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

/// Directory name for a task's pool files.
pub fn pool_dir_name(task: TaskKind) -> String {
    task.as_str().to_lowercase()
}
