//! Course material loading and statement refinement.
//!
//! Materials are UTF-8 text files where lines starting with `#` open a new
//! section. Each section body is refined into declarative statements by the
//! extraction provider; the refined list is the only input extraction sees.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::diag::Diagnostic;
use crate::provider::{Bindings, ExtractionProvider, ProviderError, TemplateId};

/// Section id given to a document that has no heading lines.
pub const SYNTHETIC_SECTION: &str = "body";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} is not valid UTF-8")]
    Encoding { path: PathBuf },
    #[error("{path} is an empty document")]
    EmptyDocument { path: PathBuf },
    #[error("provider failed on {doc_id}/{section_id}: {source}")]
    Provider {
        doc_id: String,
        section_id: String,
        #[source]
        source: ProviderError,
    },
    #[error("refined list line {line}: {reason}")]
    RefinedList { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub section_id: String,
    pub heading: String,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaterialDocument {
    pub doc_id: String,
    pub title: String,
    pub sections: Vec<Section>,
    pub source_path: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RefinedStatement {
    pub stmt_id: String,
    pub doc_id: String,
    pub section_id: String,
    pub order_index: usize,
    pub text: String,
}

impl fmt::Display for RefinedStatement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{}\t{}\t{}\t{}",
            self.stmt_id, self.doc_id, self.section_id, self.order_index, self.text
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RefineOutput {
    pub statements: Vec<RefinedStatement>,
    pub diagnostics: Vec<Diagnostic>,
}

/// NFC, whitespace runs collapsed to one space, trimmed. Case is preserved.
pub fn normalize_text(raw: &str) -> String {
    let composed: String = raw.nfc().collect();
    composed.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn heading_text(line: &str) -> Option<&str> {
    let trimmed = line.trim_start();
    if trimmed.starts_with('#') {
        Some(trimmed.trim_start_matches('#').trim())
    } else {
        None
    }
}

/// Splits heading-structured text into sections.
///
/// Text preceding the first heading becomes section `s0` when it is not blank;
/// a document with no headings at all becomes the single section `body`.
pub fn split_sections(text: &str) -> Vec<Section> {
    let mut sections = Vec::new();
    let mut preamble = String::new();
    let mut current: Option<Section> = None;
    let mut next_index = 1;

    for line in text.lines() {
        if let Some(heading) = heading_text(line) {
            if let Some(done) = current.take() {
                sections.push(done);
            }
            current = Some(Section {
                section_id: format!("s{next_index}"),
                heading: heading.to_string(),
                body: String::new(),
            });
            next_index += 1;
        } else {
            let target = match current.as_mut() {
                Some(section) => &mut section.body,
                None => &mut preamble,
            };
            target.push_str(line);
            target.push('\n');
        }
    }
    if let Some(done) = current.take() {
        sections.push(done);
    }

    if sections.is_empty() {
        return vec![Section {
            section_id: SYNTHETIC_SECTION.to_string(),
            heading: String::new(),
            body: preamble,
        }];
    }
    if !preamble.trim().is_empty() {
        sections.insert(
            0,
            Section {
                section_id: "s0".to_string(),
                heading: String::new(),
                body: preamble,
            },
        );
    }
    sections
}

fn read_utf8(path: &Path) -> Result<String, IngestError> {
    let bytes = fs::read(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    String::from_utf8(bytes).map_err(|_| IngestError::Encoding {
        path: path.to_path_buf(),
    })
}

/// Loads one document per path. Document ids are file stems, suffixed with
/// `-2`, `-3`, ... when two files share a stem.
pub fn load_materials<P: AsRef<Path>>(paths: &[P]) -> Result<Vec<MaterialDocument>, IngestError> {
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    let mut documents = Vec::with_capacity(paths.len());

    for path in paths {
        let path = path.as_ref();
        let text = read_utf8(path)?;
        if text.trim().is_empty() {
            return Err(IngestError::EmptyDocument {
                path: path.to_path_buf(),
            });
        }
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "doc".to_string());
        let count = seen.entry(stem.clone()).or_insert(0);
        *count += 1;
        let doc_id = if *count == 1 {
            stem.clone()
        } else {
            format!("{stem}-{count}")
        };

        let sections = split_sections(&text);
        let title = sections
            .iter()
            .map(|s| s.heading.as_str())
            .find(|h| !h.is_empty())
            .map(normalize_text)
            .unwrap_or(stem);
        documents.push(MaterialDocument {
            doc_id,
            title,
            sections,
            source_path: path.display().to_string(),
        });
    }
    Ok(documents)
}

/// Lists the `.txt` and `.md` files of a corpus directory in name order.
pub fn corpus_files(dir: &Path) -> Result<Vec<PathBuf>, IngestError> {
    let entries = fs::read_dir(dir).map_err(|source| IngestError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut files = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|source| IngestError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let path = entry.path();
        let wanted = path
            .extension()
            .map(|ext| ext == "txt" || ext == "md")
            .unwrap_or(false);
        if wanted && path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Refines every section of `doc` through the provider's REFINE template.
pub fn refine(
    doc: &MaterialDocument,
    provider: &ExtractionProvider,
) -> Result<RefineOutput, IngestError> {
    let mut output = RefineOutput::default();

    for section in &doc.sections {
        let body = normalize_text(&section.body);
        if body.is_empty() {
            continue;
        }
        let mut bindings = Bindings::new();
        bindings.insert("heading".to_string(), normalize_text(&section.heading));
        bindings.insert("section".to_string(), body);
        let response = provider
            .complete(TemplateId::Refine, &bindings)
            .map_err(|source| IngestError::Provider {
                doc_id: doc.doc_id.clone(),
                section_id: section.section_id.clone(),
                source,
            })?;

        let before = output.statements.len();
        for line in response.lines() {
            let text = normalize_text(line);
            if text.is_empty() {
                continue;
            }
            let order_index = output.statements.len() - before;
            output.statements.push(RefinedStatement {
                stmt_id: format!("{}:{}:{}", doc.doc_id, section.section_id, order_index),
                doc_id: doc.doc_id.clone(),
                section_id: section.section_id.clone(),
                order_index,
                text,
            });
        }
        if output.statements.len() == before {
            output.diagnostics.push(Diagnostic::new(
                "no statements",
                format!(
                    "section {}/{} is not empty but produced no statements",
                    doc.doc_id, section.section_id
                ),
            ));
        }
    }
    Ok(output)
}

/// Refines documents in parallel and concatenates results in input order.
pub fn refine_corpus(
    docs: &[MaterialDocument],
    provider: &ExtractionProvider,
) -> Result<RefineOutput, IngestError> {
    let parts: Vec<RefineOutput> = docs
        .par_iter()
        .map(|doc| refine(doc, provider))
        .collect::<Result<_, _>>()?;
    let mut output = RefineOutput::default();
    for part in parts {
        output.statements.extend(part.statements);
        output.diagnostics.extend(part.diagnostics);
    }
    Ok(output)
}

pub fn write_refined_list<W: Write>(
    statements: &[RefinedStatement],
    mut out: W,
) -> std::io::Result<()> {
    for statement in statements {
        writeln!(out, "{statement}")?;
    }
    Ok(())
}

/// Parses the line-oriented refined list written by [`write_refined_list`].
pub fn read_refined_list<R: BufRead>(input: R) -> Result<Vec<RefinedStatement>, IngestError> {
    let mut statements = Vec::new();
    let mut ids = BTreeSet::new();
    let mut last_order: BTreeMap<(String, String), usize> = BTreeMap::new();

    for (index, line) in input.lines().enumerate() {
        let line_no = index + 1;
        let line = line.map_err(|e| IngestError::RefinedList {
            line: line_no,
            reason: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(IngestError::RefinedList {
                line: line_no,
                reason: format!("expected 5 tab-separated fields, found {}", fields.len()),
            });
        }
        let order_index: usize = fields[3].parse().map_err(|_| IngestError::RefinedList {
            line: line_no,
            reason: format!("bad order_index {:?}", fields[3]),
        })?;
        let text = normalize_text(fields[4]);
        if text.is_empty() {
            return Err(IngestError::RefinedList {
                line: line_no,
                reason: "empty statement text".to_string(),
            });
        }
        if !ids.insert(fields[0].to_string()) {
            return Err(IngestError::RefinedList {
                line: line_no,
                reason: format!("duplicate stmt_id {}", fields[0]),
            });
        }
        let key = (fields[1].to_string(), fields[2].to_string());
        if let Some(&previous) = last_order.get(&key) {
            if order_index <= previous {
                return Err(IngestError::RefinedList {
                    line: line_no,
                    reason: format!("order_index {order_index} does not increase"),
                });
            }
        }
        last_order.insert(key, order_index);
        statements.push(RefinedStatement {
            stmt_id: fields[0].to_string(),
            doc_id: fields[1].to_string(),
            section_id: fields[2].to_string(),
            order_index,
            text,
        });
    }
    Ok(statements)
}

pub fn read_refined_file(path: &Path) -> Result<Vec<RefinedStatement>, IngestError> {
    let file = fs::File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_refined_list(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::ExtractionProvider;
    use std::io::Cursor;

    fn doc(sections: &[(&str, &str)]) -> MaterialDocument {
        MaterialDocument {
            doc_id: "ch1".into(),
            title: "Chapter".into(),
            sections: sections
                .iter()
                .map(|(id, body)| Section {
                    section_id: id.to_string(),
                    heading: String::new(),
                    body: body.to_string(),
                })
                .collect(),
            source_path: "ch1.txt".into(),
        }
    }

    #[test]
    fn normalize_collapses_whitespace() {
        assert_eq!(normalize_text("  for   loop\n"), "for loop");
        assert_eq!(normalize_text(""), "");
        assert_eq!(normalize_text("Caf\u{e9}"), normalize_text("Cafe\u{301}"));
        assert_eq!(normalize_text("Mixed Case"), "Mixed Case");
    }

    #[test]
    fn headings_split_sections() {
        let sections = split_sections("# Loops\nfor loops.\n# Lists\nappend.\n");
        assert_eq!(sections.len(), 2);
        assert_eq!(sections[0].heading, "Loops");
        assert_eq!(sections[1].section_id, "s2");

        let plain = split_sections("just text\n");
        assert_eq!(plain.len(), 1);
        assert_eq!(plain[0].section_id, SYNTHETIC_SECTION);

        let with_preamble = split_sections("intro\n## A\nbody\n");
        assert_eq!(with_preamble[0].section_id, "s0");
        assert_eq!(with_preamble[1].heading, "A");
    }

    #[test]
    fn refine_uses_sentence_rule() {
        let provider = ExtractionProvider::deterministic();
        let d = doc(&[(
            "s1",
            "Loops repeat code. And also, well, a for loop iterates a sequence.",
        )]);
        let out = refine(&d, &provider).unwrap();
        let texts: Vec<_> = out.statements.iter().map(|s| s.text.as_str()).collect();
        assert_eq!(
            texts,
            ["Loops repeat code", "a for loop iterates a sequence"]
        );
        assert_eq!(out.statements[1].order_index, 1);
        assert_eq!(out.statements[1].stmt_id, "ch1:s1:1");
    }

    #[test]
    fn empty_section_yields_nothing() {
        let provider = ExtractionProvider::deterministic();
        let out = refine(&doc(&[("s1", "   \n")]), &provider).unwrap();
        assert!(out.statements.is_empty());
        assert!(out.diagnostics.is_empty());
        assert_eq!(provider.audit_log().len(), 0);
    }

    #[test]
    fn identical_sections_get_distinct_ids() {
        let provider = ExtractionProvider::deterministic();
        let out = refine(
            &doc(&[("s1", "Same text."), ("s2", "Same text.")]),
            &provider,
        )
        .unwrap();
        assert_eq!(out.statements[0].text, out.statements[1].text);
        assert_ne!(out.statements[0].stmt_id, out.statements[1].stmt_id);
    }

    #[test]
    fn section_of_only_fillers_warns() {
        let provider = ExtractionProvider::deterministic();
        let out = refine(&doc(&[("s1", "... ! ?")]), &provider).unwrap();
        assert!(out.statements.is_empty());
        assert_eq!(out.diagnostics[0].code, "no statements");
    }

    #[test]
    fn refined_list_round_trips() {
        let provider = ExtractionProvider::deterministic();
        let out = refine(&doc(&[("s1", "A b. C d. E f.")]), &provider).unwrap();
        let mut buf = Vec::new();
        write_refined_list(&out.statements, &mut buf).unwrap();
        let back = read_refined_list(Cursor::new(buf)).unwrap();
        assert_eq!(back, out.statements);
    }

    #[test]
    fn refined_list_rejects_bad_lines() {
        let err = read_refined_list(Cursor::new("a\tb\tc\t0\n")).unwrap_err();
        assert!(matches!(err, IngestError::RefinedList { line: 1, .. }));
        let err = read_refined_list(Cursor::new("a\td\ts\t1\tx\nb\td\ts\t1\ty\n")).unwrap_err();
        assert!(err.to_string().contains("does not increase"));
    }

    #[test]
    fn load_errors_name_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let empty = dir.path().join("empty.txt");
        fs::write(&empty, "  \n").unwrap();
        let err = load_materials(&[&empty]).unwrap_err();
        assert!(matches!(err, IngestError::EmptyDocument { .. }));

        let missing = dir.path().join("missing.txt");
        let err = load_materials(&[&missing]).unwrap_err();
        assert!(err.to_string().contains("missing.txt"));

        let latin1 = dir.path().join("latin1.txt");
        fs::write(&latin1, [0x63, 0x61, 0x66, 0xe9]).unwrap();
        assert!(matches!(
            load_materials(&[&latin1]).unwrap_err(),
            IngestError::Encoding { .. }
        ));
    }

    #[test]
    fn documents_get_distinct_ids() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("ch1.txt");
        let sub = dir.path().join("sub");
        fs::create_dir(&sub).unwrap();
        let b = sub.join("ch1.txt");
        let c = dir.path().join("ch2.md");
        fs::write(&a, "# One\nx.\n# Two\ny.\n").unwrap();
        fs::write(&b, "plain.").unwrap();
        fs::write(&c, "plain.").unwrap();
        let docs = load_materials(&[&a, &b, &c]).unwrap();
        assert_eq!(docs.len(), 3);
        assert_eq!(docs[0].sections.len(), 2);
        assert_eq!(docs[0].title, "One");
        let ids: BTreeSet<_> = docs.iter().map(|d| d.doc_id.clone()).collect();
        assert_eq!(ids.len(), 3);
    }
}
