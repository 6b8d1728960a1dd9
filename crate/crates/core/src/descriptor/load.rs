use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Catalog, Nsd, Vld, Vnfd, VnffgDescriptor};

/// One descriptor file: a JSON object tagged with `"kind"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Document {
    Nsd(Nsd),
    Vnfd(Vnfd),
    Vld(Vld),
    Vnffgd(VnffgDescriptor),
}

/// Raw document text plus a name used in error messages.
#[derive(Debug, Clone)]
pub struct SourceDocument {
    pub name: String,
    pub text: String,
}

impl SourceDocument {
    pub fn new(name: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            text: text.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{document}:{line}:{column}: {message}")]
    Syntax {
        document: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("duplicate {kind} identifier `{id}`")]
    DuplicateId { kind: &'static str, id: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Parses documents into a catalog. Only syntax and top-level identifier
/// uniqueness are checked here; semantic checks belong to
/// [`validate_catalog`](super::validate_catalog).
pub fn load_catalog(documents: &[SourceDocument]) -> Result<Catalog, LoadError> {
    let mut catalog = Catalog::default();
    for doc in documents {
        let parsed: Document = serde_json::from_str(&doc.text).map_err(|e| LoadError::Syntax {
            document: doc.name.clone(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        insert(&mut catalog, parsed)?;
    }
    Ok(catalog)
}

fn insert(catalog: &mut Catalog, doc: Document) -> Result<(), LoadError> {
    fn put<T>(
        map: &mut std::collections::BTreeMap<String, T>,
        kind: &'static str,
        id: String,
        value: T,
    ) -> Result<(), LoadError> {
        if map.contains_key(&id) {
            return Err(LoadError::DuplicateId { kind, id });
        }
        map.insert(id, value);
        Ok(())
    }
    match doc {
        Document::Nsd(mut nsd) => {
            for rule in &mut nsd.auto_scaling_rules {
                rule.parse();
            }
            put(&mut catalog.nsds, "NSD", nsd.id.clone(), nsd)
        }
        Document::Vnfd(vnfd) => put(&mut catalog.vnfds, "VNFD", vnfd.id.clone(), vnfd),
        Document::Vld(vld) => put(&mut catalog.vlds, "VLD", vld.id.clone(), vld),
        Document::Vnffgd(g) => put(&mut catalog.vnffgds, "VNFFGD", g.id.clone(), g),
    }
}

/// Reads descriptor files. Directories contribute their `*.json` files in
/// file-name order.
pub fn load_catalog_from_paths<P: AsRef<Path>>(paths: &[P]) -> Result<Catalog, LoadError> {
    let mut docs = Vec::new();
    for path in paths {
        for file in expand(path.as_ref())? {
            let text = fs::read_to_string(&file).map_err(|source| LoadError::Io {
                path: file.clone(),
                source,
            })?;
            docs.push(SourceDocument::new(file.display().to_string(), text));
        }
    }
    load_catalog(&docs)
}

fn expand(path: &Path) -> Result<Vec<PathBuf>, LoadError> {
    let io = |source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    };
    let meta = fs::metadata(path).map_err(io)?;
    if !meta.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files = Vec::new();
    for entry in fs::read_dir(path).map_err(io)? {
        let entry = entry.map_err(io)?;
        let p = entry.path();
        if p.is_file() && p.extension().is_some_and(|e| e == "json") {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::fixture;

    #[test]
    fn fig4_fixture_loads() {
        let catalog = load_catalog(&fixture::fig4_documents()).unwrap();
        assert_eq!(catalog.nsds.len(), 1);
        assert_eq!(catalog.vnfds.len(), 3);
        assert!(catalog.vnfds.contains_key("VNFD#2"));
        let nsd = &catalog.nsds["NSD#1"];
        assert!(nsd.auto_scaling_rules.iter().all(|r| r.ast.is_some()));
    }

    #[test]
    fn empty_document_list() {
        let catalog = load_catalog(&[]).unwrap();
        assert!(catalog.is_empty());
    }

    #[test]
    fn duplicate_vnfd_rejected() {
        let doc = r#"{"kind": "vnfd", "id": "vnfd-B", "vdus": [], "vcds": [], "flavors": []}"#;
        let err = load_catalog(&[SourceDocument::new("a", doc), SourceDocument::new("b", doc)])
            .unwrap_err();
        assert!(
            matches!(&err, LoadError::DuplicateId { kind: "VNFD", id } if id == "vnfd-B"),
            "{err}"
        );
    }

    #[test]
    fn syntax_error_has_location() {
        let err = load_catalog(&[SourceDocument::new("bad.json", "{\n  \"kind\": \"vld\",\n  \"id\": }")])
            .unwrap_err();
        match err {
            LoadError::Syntax { document, line, .. } => {
                assert_eq!(document, "bad.json");
                assert_eq!(line, 3);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn unknown_fields_rejected() {
        let doc = r#"{"kind": "vld", "id": "x", "flavors": [], "colour": "red"}"#;
        assert!(matches!(
            load_catalog(&[SourceDocument::new("x", doc)]),
            Err(LoadError::Syntax { .. })
        ));
    }

    #[test]
    fn rule_syntax_errors_are_deferred_to_validation() {
        let doc = r#"{"kind": "nsd", "id": "n", "vnfd_refs": [], "flavors": [],
            "auto_scaling_rules": [{"id": "r", "text": "WHEN avg(x 1) > 0.8"}]}"#;
        let catalog = load_catalog(&[SourceDocument::new("n", doc)]).unwrap();
        let rule = &catalog.nsds["n"].auto_scaling_rules[0];
        assert!(rule.ast.is_none());
        assert!(rule.parse_error.is_some());
    }
}
