//! Loader for tool documentation in the ToolBench directory layout:
//! `<root>/<Category>/<tool>.json`, one document per tool with an `api_list`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::model::{ApiDocumentation, ApiIdentifier, ApiParameter, ModelError, ToolRef};

#[derive(Debug, Error)]
pub enum DocsError {
    #[error("cannot read documentation at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed tool document {path}: {source}")]
    Format {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("invalid tool document {path}: {source}")]
    Invalid { path: PathBuf, source: ModelError },
}

#[derive(Debug, Deserialize)]
struct ToolFile {
    tool_name: String,
    #[serde(default)]
    tool_description: Option<String>,
    #[serde(default)]
    api_list: Vec<ApiEntry>,
}

#[derive(Debug, Deserialize)]
struct ApiEntry {
    name: String,
    #[serde(default)]
    description: Option<String>,
    #[serde(default)]
    required_parameters: Vec<ParamEntry>,
    #[serde(default)]
    optional_parameters: Vec<ParamEntry>,
}

#[derive(Debug, Deserialize)]
struct ParamEntry {
    name: String,
    #[serde(rename = "type", default)]
    type_label: Option<String>,
    #[serde(default)]
    description: Option<String>,
}

/// All documented APIs, indexed by identifier.
#[derive(Debug, Clone, Default)]
pub struct DocIndex {
    apis: BTreeMap<ApiIdentifier, ApiDocumentation>,
}

impl DocIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_docs(docs: impl IntoIterator<Item = ApiDocumentation>) -> Self {
        let mut index = Self::new();
        for d in docs {
            index.insert(d);
        }
        index
    }

    /// Walks `<root>/<Category>/*.json`. A missing root yields an empty index.
    pub fn load_dir(root: &Path) -> Result<Self, DocsError> {
        let mut index = Self::new();
        if !root.exists() {
            return Ok(index);
        }
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| DocsError::Io { path, source }
        };
        let mut categories: Vec<_> = fs::read_dir(root)
            .map_err(io(root))?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.is_dir())
            .collect();
        categories.sort();
        for dir in categories {
            let category = dir
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let mut files: Vec<_> = fs::read_dir(&dir)
                .map_err(io(&dir))?
                .filter_map(Result::ok)
                .map(|e| e.path())
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect();
            files.sort();
            for file in files {
                let text = fs::read_to_string(&file).map_err(io(&file))?;
                for doc in parse_tool_document(&category, &text).map_err(|e| match e {
                    ParseError::Json(source) => DocsError::Format {
                        path: file.clone(),
                        source,
                    },
                    ParseError::Model(source) => DocsError::Invalid {
                        path: file.clone(),
                        source,
                    },
                })? {
                    index.insert(doc);
                }
            }
        }
        Ok(index)
    }

    pub fn insert(&mut self, doc: ApiDocumentation) {
        self.apis.insert(doc.id.clone(), doc);
    }

    pub fn get(&self, id: &ApiIdentifier) -> Option<&ApiDocumentation> {
        self.apis.get(id)
    }

    pub fn len(&self) -> usize {
        self.apis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.apis.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ApiDocumentation> {
        self.apis.values()
    }

    /// Distinct tools in sorted order.
    pub fn tools(&self) -> Vec<ToolRef> {
        self.apis
            .keys()
            .map(ApiIdentifier::tool)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn for_tool<'a>(&'a self, tool: &'a ToolRef) -> impl Iterator<Item = &'a ApiDocumentation> {
        self.apis
            .values()
            .filter(move |d| d.id.category == tool.category && d.id.tool_name == tool.tool_name)
    }
}

enum ParseError {
    Json(serde_json::Error),
    Model(ModelError),
}

fn parse_tool_document(category: &str, text: &str) -> Result<Vec<ApiDocumentation>, ParseError> {
    let tool: ToolFile = serde_json::from_str(text).map_err(ParseError::Json)?;
    let tool_description = tool.tool_description.unwrap_or_default();
    tool.api_list
        .into_iter()
        .map(|api| {
            let id = ApiIdentifier::new(category, &tool.tool_name, &api.name)
                .map_err(ParseError::Model)?;
            let params = api
                .required_parameters
                .into_iter()
                .map(|p| (p, true))
                .chain(api.optional_parameters.into_iter().map(|p| (p, false)))
                .map(|(p, required)| ApiParameter {
                    name: p.name,
                    type_label: p.type_label.unwrap_or_default(),
                    description: p.description.unwrap_or_default(),
                    required,
                })
                .collect();
            let doc = ApiDocumentation {
                id,
                description: api.description.unwrap_or_default(),
                parameters: params,
                tool_description: tool_description.clone(),
            };
            doc.validate().map_err(ParseError::Model)?;
            Ok(doc)
        })
        .collect()
}
