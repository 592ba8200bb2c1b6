//! Prompt templates.
//!
//! A prompt set file starts with the header line `semgate-prompts v1`,
//! may carry `#` comment lines before the first section, and then holds
//! sections introduced by `@@ <template>.<part>` lines. Templates are
//! `generate_context`, `transform`, `restore` and `judge_rubric`; parts are
//! `system` (optional) and `user` (required). `judge_rubric.dimensions`
//! lists the judge's scoring dimensions, one per line.
//!
//! Placeholders are `{name}`; `{{` and `}}` produce literal braces. Each
//! template declares which placeholders it may use and which it must use,
//! and a file violating either is rejected at load time.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use thiserror::Error;

/// The bundled default prompt set.
pub const DEFAULT_PROMPTS: &str = include_str!("../prompts/default_v1.prompts");
const HEADER: &str = "semgate-prompts v1";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("prompt file must start with `{HEADER}`")]
    MissingHeader,
    #[error("line {line}: unknown section `{name}`")]
    UnknownSection { line: usize, name: String },
    #[error("line {line}: duplicate section `{name}`")]
    DuplicateSection { line: usize, name: String },
    #[error("line {line}: text outside of any section")]
    StrayText { line: usize },
    #[error("missing section `{0}`")]
    MissingSection(String),
    #[error("template `{template}`: unbalanced brace at byte {offset}")]
    Syntax { template: String, offset: usize },
    #[error("template `{template}`: placeholder {{{name}}} is not allowed here")]
    UnknownPlaceholder { template: String, name: String },
    #[error("template `{template}`: required placeholder {{{name}}} is missing")]
    MissingPlaceholder { template: String, name: String },
    #[error("judge rubric lists no dimensions")]
    NoDimensions,
    #[error("reading prompt file: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TemplateKind {
    GenerateContext,
    Transform,
    Restore,
    JudgeRubric,
}

impl TemplateKind {
    pub const ALL: [TemplateKind; 4] = [
        TemplateKind::GenerateContext,
        TemplateKind::Transform,
        TemplateKind::Restore,
        TemplateKind::JudgeRubric,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TemplateKind::GenerateContext => "generate_context",
            TemplateKind::Transform => "transform",
            TemplateKind::Restore => "restore",
            TemplateKind::JudgeRubric => "judge_rubric",
        }
    }

    fn required(self) -> &'static [&'static str] {
        match self {
            TemplateKind::GenerateContext => &["numbers"],
            TemplateKind::Transform => &["t_o"],
            TemplateKind::Restore => &["t_o", "t_hat_r"],
            TemplateKind::JudgeRubric => &["t_o", "t_hat_o"],
        }
    }

    fn allowed(self) -> &'static [&'static str] {
        match self {
            TemplateKind::GenerateContext => &["numbers"],
            TemplateKind::Transform => &["t_o"],
            TemplateKind::Restore => &["t_o", "t_hat_r", "t_hat_o"],
            TemplateKind::JudgeRubric => &["t_o", "t_hat_o", "t_r", "dimensions", "score_line"],
        }
    }
}

impl fmt::Display for TemplateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Literal(String),
    Placeholder(String),
}

/// A parsed `{placeholder}` template.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    segments: Vec<Segment>,
}

impl Template {
    pub fn parse(name: &str, src: &str) -> Result<Self, PromptError> {
        let mut segments = Vec::new();
        let mut lit = String::new();
        let mut chars = src.char_indices().peekable();
        while let Some((i, c)) = chars.next() {
            match c {
                '{' if chars.peek().map(|(_, c)| *c) == Some('{') => {
                    chars.next();
                    lit.push('{');
                }
                '}' if chars.peek().map(|(_, c)| *c) == Some('}') => {
                    chars.next();
                    lit.push('}');
                }
                '{' => {
                    let mut ident = String::new();
                    let mut closed = false;
                    for (_, c) in chars.by_ref() {
                        if c == '}' {
                            closed = true;
                            break;
                        }
                        ident.push(c);
                    }
                    let valid = !ident.is_empty()
                        && ident.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
                    if !closed || !valid {
                        return Err(PromptError::Syntax {
                            template: name.to_string(),
                            offset: i,
                        });
                    }
                    if !lit.is_empty() {
                        segments.push(Segment::Literal(std::mem::take(&mut lit)));
                    }
                    segments.push(Segment::Placeholder(ident));
                }
                '}' => {
                    return Err(PromptError::Syntax {
                        template: name.to_string(),
                        offset: i,
                    })
                }
                c => lit.push(c),
            }
        }
        if !lit.is_empty() {
            segments.push(Segment::Literal(lit));
        }
        Ok(Self { segments })
    }

    pub fn placeholders(&self) -> BTreeSet<&str> {
        self.segments
            .iter()
            .filter_map(|s| match s {
                Segment::Placeholder(p) => Some(p.as_str()),
                Segment::Literal(_) => None,
            })
            .collect()
    }

    /// Substitute placeholders; absent variables render as empty text.
    pub fn render(&self, vars: &BTreeMap<&str, String>) -> String {
        let mut out = String::new();
        for seg in &self.segments {
            match seg {
                Segment::Literal(s) => out.push_str(s),
                Segment::Placeholder(p) => {
                    if let Some(v) = vars.get(p.as_str()) {
                        out.push_str(v);
                    }
                }
            }
        }
        out
    }
}

/// A system/user message pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessageTemplate {
    pub system: Option<Template>,
    pub user: Template,
}

/// Rendered prompt, ready to become chat messages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub system: Option<String>,
    pub user: String,
}

/// Values substituted into templates.
#[derive(Debug, Clone, Default)]
pub struct PromptVars<'a> {
    pub numbers: Option<&'a str>,
    pub t_o: Option<&'a str>,
    pub t_hat_o: Option<&'a str>,
    pub t_hat_r: Option<&'a str>,
    pub t_r: Option<&'a str>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    templates: BTreeMap<TemplateKind, MessageTemplate>,
    judge_dimensions: Vec<String>,
}

impl PromptSet {
    pub fn bundled() -> Self {
        Self::parse(DEFAULT_PROMPTS).expect("bundled prompt set is valid")
    }

    pub fn load(path: &Path) -> Result<Self, PromptError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PromptError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, PromptError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l.trim() == HEADER => {}
            _ => return Err(PromptError::MissingHeader),
        }

        let mut sections: BTreeMap<String, String> = BTreeMap::new();
        let mut current: Option<(String, Vec<&str>)> = None;
        let flush = |cur: Option<(String, Vec<&str>)>, sections: &mut BTreeMap<String, String>| {
            if let Some((name, body)) = cur {
                let joined = body.join("\n");
                sections.insert(name, joined.trim_matches('\n').to_string());
            }
        };
        for (idx, line) in lines {
            let line_no = idx + 1;
            if let Some(name) = line.strip_prefix("@@") {
                let name = name.trim().to_string();
                if !is_known_section(&name) {
                    return Err(PromptError::UnknownSection { line: line_no, name });
                }
                if sections.contains_key(&name)
                    || current.as_ref().is_some_and(|(n, _)| *n == name)
                {
                    return Err(PromptError::DuplicateSection { line: line_no, name });
                }
                flush(current.take(), &mut sections);
                current = Some((name, Vec::new()));
            } else if let Some((_, body)) = current.as_mut() {
                body.push(line);
            } else if !(line.trim().is_empty() || line.trim_start().starts_with('#')) {
                return Err(PromptError::StrayText { line: line_no });
            }
        }
        flush(current.take(), &mut sections);

        let mut templates = BTreeMap::new();
        for kind in TemplateKind::ALL {
            let user_key = format!("{kind}.user");
            let user_src = sections
                .get(&user_key)
                .ok_or_else(|| PromptError::MissingSection(user_key.clone()))?;
            let user = Template::parse(&user_key, user_src)?;
            let system_key = format!("{kind}.system");
            let system = sections
                .get(&system_key)
                .map(|src| Template::parse(&system_key, src))
                .transpose()?;
            let tpl = MessageTemplate { system, user };
            check_placeholders(kind, &tpl)?;
            templates.insert(kind, tpl);
        }

        let judge_dimensions: Vec<String> = sections
            .get("judge_rubric.dimensions")
            .map(|s| {
                s.lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty())
                    .map(str::to_string)
                    .collect()
            })
            .unwrap_or_default();
        if judge_dimensions.is_empty() {
            return Err(PromptError::NoDimensions);
        }

        Ok(Self {
            templates,
            judge_dimensions,
        })
    }

    pub fn template(&self, kind: TemplateKind) -> &MessageTemplate {
        &self.templates[&kind]
    }

    pub fn judge_dimensions(&self) -> &[String] {
        &self.judge_dimensions
    }

    pub fn render(&self, kind: TemplateKind, vars: &PromptVars<'_>) -> RenderedPrompt {
        let mut map: BTreeMap<&str, String> = BTreeMap::new();
        let mut set = |k: &'static str, v: Option<&str>| {
            if let Some(v) = v {
                map.insert(k, v.to_string());
            }
        };
        set("numbers", vars.numbers);
        set("t_o", vars.t_o);
        set("t_hat_o", vars.t_hat_o);
        set("t_hat_r", vars.t_hat_r);
        set("t_r", Some(vars.t_r.unwrap_or("(not available)")));
        if kind == TemplateKind::JudgeRubric {
            let dims = self
                .judge_dimensions
                .iter()
                .enumerate()
                .map(|(i, d)| format!("{}. {d}", i + 1))
                .collect::<Vec<_>>()
                .join("\n");
            map.insert("dimensions", dims);
            let slots = (1..=self.judge_dimensions.len())
                .map(|i| format!("s{i}"))
                .collect::<Vec<_>>()
                .join("/");
            map.insert("score_line", format!("SCORES: {slots}"));
        }
        let tpl = self.template(kind);
        RenderedPrompt {
            system: tpl.system.as_ref().map(|t| t.render(&map)),
            user: tpl.user.render(&map),
        }
    }
}

fn is_known_section(name: &str) -> bool {
    if name == "judge_rubric.dimensions" {
        return true;
    }
    let Some((tpl, part)) = name.split_once('.') else {
        return false;
    };
    TemplateKind::ALL.iter().any(|k| k.name() == tpl) && matches!(part, "system" | "user")
}

fn check_placeholders(kind: TemplateKind, tpl: &MessageTemplate) -> Result<(), PromptError> {
    let mut used: BTreeSet<&str> = tpl.user.placeholders();
    if let Some(sys) = &tpl.system {
        used.extend(sys.placeholders());
    }
    if let Some(bad) = used.iter().find(|p| !kind.allowed().contains(p)) {
        return Err(PromptError::UnknownPlaceholder {
            template: kind.name().to_string(),
            name: bad.to_string(),
        });
    }
    if let Some(missing) = kind.required().iter().find(|p| !used.contains(*p)) {
        return Err(PromptError::MissingPlaceholder {
            template: kind.name().to_string(),
            name: missing.to_string(),
        });
    }
    Ok(())
}
