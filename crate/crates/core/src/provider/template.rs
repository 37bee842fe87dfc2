//! Prompt templates with `{{name}}` placeholders.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::grammar::GrammarId;

pub type Bindings = BTreeMap<String, String>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TemplateId {
    #[serde(rename = "REFINE")]
    Refine,
    #[serde(rename = "EXTRACT_NODES")]
    ExtractNodes,
    #[serde(rename = "EXTRACT_RELATIONS")]
    ExtractRelations,
    #[serde(rename = "MAP_QUESTION")]
    MapQuestion,
}

impl TemplateId {
    pub const ALL: [TemplateId; 4] = [
        TemplateId::Refine,
        TemplateId::ExtractNodes,
        TemplateId::ExtractRelations,
        TemplateId::MapQuestion,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::Refine => "REFINE",
            TemplateId::ExtractNodes => "EXTRACT_NODES",
            TemplateId::ExtractRelations => "EXTRACT_RELATIONS",
            TemplateId::MapQuestion => "MAP_QUESTION",
        }
    }

    pub fn grammar(self) -> GrammarId {
        match self {
            TemplateId::Refine => GrammarId::Statements,
            TemplateId::ExtractNodes => GrammarId::Nodes,
            TemplateId::ExtractRelations => GrammarId::Relations,
            TemplateId::MapQuestion => GrammarId::EdgeSelection,
        }
    }

    /// Placeholders the pipeline binds for this template.
    pub fn placeholders(self) -> &'static [&'static str] {
        match self {
            TemplateId::Refine => &["heading", "section"],
            TemplateId::ExtractNodes => &["statements"],
            TemplateId::ExtractRelations => &["nodes", "statements"],
            TemplateId::MapQuestion => &["stem", "options", "answer", "edges"],
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.txt", self.as_str())
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TemplateId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| format!("unknown template id {s:?}"))
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template {template}: placeholder {{{{{name}}}}} is not bound")]
    MissingBinding { template: TemplateId, name: String },
    #[error("template {template}: unterminated placeholder at byte {offset}")]
    Unterminated { template: TemplateId, offset: usize },
    #[error("template {template}: unknown placeholder {{{{{name}}}}}")]
    UnknownPlaceholder { template: TemplateId, name: String },
    #[error("template {template}: required placeholder {{{{{name}}}}} is missing")]
    MissingPlaceholder { template: TemplateId, name: String },
    #[error("cannot read template {path}: {reason}")]
    Read { path: PathBuf, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub template_id: TemplateId,
    pub body: String,
    pub output_grammar_id: GrammarId,
}

enum Piece<'a> {
    Text(&'a str),
    Slot(&'a str),
}

fn pieces(template: TemplateId, body: &str) -> Result<Vec<Piece<'_>>, TemplateError> {
    let mut out = Vec::new();
    let mut rest = body;
    let mut offset = 0;
    while let Some(start) = rest.find("{{") {
        out.push(Piece::Text(&rest[..start]));
        let after = &rest[start + 2..];
        let end = after.find("}}").ok_or(TemplateError::Unterminated {
            template,
            offset: offset + start,
        })?;
        out.push(Piece::Slot(after[..end].trim()));
        let consumed = start + 2 + end + 2;
        offset += consumed;
        rest = &rest[consumed..];
    }
    out.push(Piece::Text(rest));
    Ok(out)
}

impl PromptTemplate {
    /// Parses and checks a template body: every placeholder must be one the
    /// pipeline binds, and every bound input must appear.
    pub fn new(template_id: TemplateId, body: impl Into<String>) -> Result<Self, TemplateError> {
        let body = body.into();
        let found: BTreeSet<&str> = pieces(template_id, &body)?
            .into_iter()
            .filter_map(|p| match p {
                Piece::Slot(name) => Some(name),
                Piece::Text(_) => None,
            })
            .collect();
        let expected = template_id.placeholders();
        if let Some(name) = found.iter().find(|n| !expected.contains(n)) {
            return Err(TemplateError::UnknownPlaceholder {
                template: template_id,
                name: name.to_string(),
            });
        }
        if let Some(name) = expected.iter().find(|n| !found.contains(*n)) {
            return Err(TemplateError::MissingPlaceholder {
                template: template_id,
                name: name.to_string(),
            });
        }
        Ok(PromptTemplate {
            template_id,
            output_grammar_id: template_id.grammar(),
            body,
        })
    }

    pub fn render(&self, bindings: &Bindings) -> Result<String, TemplateError> {
        let mut out = String::with_capacity(self.body.len());
        for piece in pieces(self.template_id, &self.body)? {
            match piece {
                Piece::Text(text) => out.push_str(text),
                Piece::Slot(name) => match bindings.get(name) {
                    Some(value) => out.push_str(value),
                    None => {
                        return Err(TemplateError::MissingBinding {
                            template: self.template_id,
                            name: name.to_string(),
                        })
                    }
                },
            }
        }
        Ok(out)
    }
}

const DEFAULT_REFINE: &str = "\
You turn course material into a refined list of short declarative statements.
Remove unnecessary conjunctions, particles and filler words. Keep technical terms verbatim.
Write one statement per line. Output nothing else.

Section heading: {{heading}}
Section text:
{{section}}
";

const DEFAULT_EXTRACT_NODES: &str = "\
Extract the knowledge entities mentioned in the statements below.
Classify each one as a general node (person, object, time, place) or an event node (a specific event).
Write one line per entity in exactly this tab-separated form:
NODE<TAB><kind><TAB><label>
where <kind> is one of: person, object, time, place, event. Output nothing else.

Statements:
{{statements}}
";

const DEFAULT_EXTRACT_RELATIONS: &str = "\
Connect the nodes below using the statements. A relation is mainly a verb or preposition joining two nodes.
Between event nodes also record causal and sequential connections.
Write one line per relation in exactly this tab-separated form:
REL<TAB><kind><TAB><source label><TAB><relation><TAB><target label>
where <kind> is semantic, causal or sequential. Only use labels from the node list. Output nothing else.

Nodes (kind<TAB>label):
{{nodes}}

Statements:
{{statements}}
";

const DEFAULT_MAP_QUESTION: &str = "\
A multiple-choice question and its correct answer are given with a catalog of knowledge graph edges.
Think step by step about which knowledge the question exercises, then list every matching edge.
Finish with one line per matching edge in exactly the form EDGE<TAB><edge_id>,
optionally followed by CONFIDENCE<TAB><number between 0 and 1>.

Question: {{stem}}
Options:
{{options}}
Correct answer: {{answer}}

Edge catalog (edge_id<TAB>source<TAB>relation<TAB>target):
{{edges}}
";

/// One template per [`TemplateId`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    templates: BTreeMap<TemplateId, PromptTemplate>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        let defaults = [
            (TemplateId::Refine, DEFAULT_REFINE),
            (TemplateId::ExtractNodes, DEFAULT_EXTRACT_NODES),
            (TemplateId::ExtractRelations, DEFAULT_EXTRACT_RELATIONS),
            (TemplateId::MapQuestion, DEFAULT_MAP_QUESTION),
        ];
        let templates = defaults
            .into_iter()
            .map(|(id, body)| {
                (
                    id,
                    PromptTemplate::new(id, body).expect("built-in template"),
                )
            })
            .collect();
        TemplateSet { templates }
    }
}

impl TemplateSet {
    /// Loads `<TEMPLATE_ID>.txt` files from `dir`; absent files keep the
    /// built-in default, present files must parse.
    pub fn load_dir(dir: &Path) -> Result<Self, TemplateError> {
        if !dir.is_dir() {
            return Err(TemplateError::Read {
                path: dir.to_path_buf(),
                reason: "not a directory".to_string(),
            });
        }
        let mut set = TemplateSet::default();
        for id in TemplateId::ALL {
            let path = dir.join(id.file_name());
            if !path.exists() {
                continue;
            }
            let body = fs::read_to_string(&path).map_err(|e| TemplateError::Read {
                path: path.clone(),
                reason: e.to_string(),
            })?;
            set.templates.insert(id, PromptTemplate::new(id, body)?);
        }
        Ok(set)
    }

    /// Writes the set as one file per template.
    pub fn write_dir(&self, dir: &Path) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        for template in self.templates.values() {
            fs::write(dir.join(template.template_id.file_name()), &template.body)?;
        }
        Ok(())
    }

    pub fn get(&self, id: TemplateId) -> &PromptTemplate {
        &self.templates[&id]
    }
}
