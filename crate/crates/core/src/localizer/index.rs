//! Repository symbol index built from tree-sitter syntax trees.
//!
//! C and C++ sources are parsed; identifier nodes become definition or use
//! sites depending on where they sit in the declarator chain. Function
//! definitions record their parameter names and call expressions record
//! their callee so that a parameter query can reach caller sites. Text
//! files without a grammar (or whose parse tree contains errors) fall back
//! to word-boundary token matching, recorded as uses.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use tree_sitter::{Language, Node, Parser};
use walkdir::WalkDir;

pub const MAX_FILE_BYTES: u64 = 2 * 1024 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SiteKind {
    Definition,
    Use,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolSite {
    pub file: String,
    pub line: usize,
    pub kind: SiteKind,
    pub symbol: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionDef {
    pub name: String,
    pub file: String,
    pub line: usize,
    pub params: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallSite {
    pub callee: String,
    pub file: String,
    pub line: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("cannot read repository root {path}: {source}")]
    Unreadable {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Immutable once built; share it freely across threads.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolIndex {
    sites: BTreeMap<String, Vec<SymbolSite>>,
    functions: BTreeMap<String, Vec<FunctionDef>>,
    calls: BTreeMap<String, Vec<CallSite>>,
    line_counts: BTreeMap<String, usize>,
}

impl SymbolIndex {
    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn sites(&self, symbol: &str) -> &[SymbolSite] {
        self.sites.get(symbol).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn functions(&self, name: &str) -> &[FunctionDef] {
        self.functions.get(name).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Functions that declare `param` as a parameter.
    pub fn functions_with_param<'a>(&'a self, param: &'a str) -> impl Iterator<Item = &'a FunctionDef> + 'a {
        self.functions
            .values()
            .flatten()
            .filter(move |f| f.params.iter().any(|p| p == param))
    }

    pub fn calls_to(&self, callee: &str) -> &[CallSite] {
        self.calls.get(callee).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn line_count(&self, file: &str) -> Option<usize> {
        self.line_counts.get(file).copied()
    }

    pub fn files(&self) -> impl Iterator<Item = &str> {
        self.line_counts.keys().map(String::as_str)
    }

    /// Builds an index directly from sites, e.g. for synthetic rankings.
    pub fn from_sites(sites: Vec<SymbolSite>, line_counts: BTreeMap<String, usize>) -> Self {
        let mut idx = SymbolIndex {
            line_counts,
            ..Default::default()
        };
        idx.absorb(FileIndex {
            sites,
            ..Default::default()
        });
        idx.finish();
        idx
    }

    fn absorb(&mut self, f: FileIndex) {
        for s in f.sites {
            self.sites.entry(s.symbol.clone()).or_default().push(s);
        }
        for d in f.functions {
            self.functions.entry(d.name.clone()).or_default().push(d);
        }
        for c in f.calls {
            self.calls.entry(c.callee.clone()).or_default().push(c);
        }
    }

    fn finish(&mut self) {
        for v in self.sites.values_mut() {
            v.sort_by(|a, b| (&a.file, a.line, a.kind).cmp(&(&b.file, b.line, b.kind)));
            // One site per line; a definition wins over a use on that line.
            v.dedup_by(|later, earlier| later.file == earlier.file && later.line == earlier.line);
        }
        for v in self.functions.values_mut() {
            v.sort_by(|a, b| (&a.file, a.line).cmp(&(&b.file, b.line)));
        }
        for v in self.calls.values_mut() {
            v.sort_by(|a, b| (&a.file, a.line).cmp(&(&b.file, b.line)));
            v.dedup();
        }
    }
}

#[derive(Debug, Default)]
struct FileIndex {
    sites: Vec<SymbolSite>,
    functions: Vec<FunctionDef>,
    calls: Vec<CallSite>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Grammar {
    C,
    Cpp,
}

impl Grammar {
    fn for_path(path: &Path) -> Option<Grammar> {
        match path.extension()?.to_str()? {
            "c" | "h" => Some(Grammar::C),
            "cc" | "cpp" | "cxx" | "c++" | "hpp" | "hh" | "hxx" => Some(Grammar::Cpp),
            _ => None,
        }
    }

    fn language(self) -> Language {
        match self {
            Grammar::C => tree_sitter_c::LANGUAGE.into(),
            Grammar::Cpp => tree_sitter_cpp::LANGUAGE.into(),
        }
    }
}

fn word_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b[A-Za-z_][A-Za-z0-9_]*\b").unwrap())
}

fn lexical_sites(rel: &str, text: &str) -> FileIndex {
    let mut out = FileIndex::default();
    for (i, line) in text.lines().enumerate() {
        for m in word_re().find_iter(line) {
            out.sites.push(SymbolSite {
                file: rel.to_string(),
                line: i + 1,
                kind: SiteKind::Use,
                symbol: m.as_str().to_string(),
            });
        }
    }
    out
}

fn same_node(a: Option<Node>, b: Node) -> bool {
    a.map(|a| a.id() == b.id()).unwrap_or(false)
}

/// True when `node` is the name introduced by a declaration, parameter,
/// field, function definition, macro, or tagged type body.
fn is_definition(node: Node) -> bool {
    let mut cur = node;
    while let Some(parent) = cur.parent() {
        match parent.kind() {
            "preproc_def" | "preproc_function_def" => {
                return same_node(parent.child_by_field_name("name"), cur)
            }
            "enumerator" => return same_node(parent.child_by_field_name("name"), cur),
            "struct_specifier" | "union_specifier" | "enum_specifier" | "class_specifier" => {
                return same_node(parent.child_by_field_name("name"), cur)
                    && parent.child_by_field_name("body").is_some()
            }
            "parenthesized_declarator" | "attributed_declarator" => {
                cur = parent;
                continue;
            }
            _ => {}
        }
        if !same_node(parent.child_by_field_name("declarator"), cur) {
            return false;
        }
        match parent.kind() {
            "function_definition"
            | "declaration"
            | "parameter_declaration"
            | "optional_parameter_declaration"
            | "field_declaration"
            | "type_definition" => return true,
            "init_declarator"
            | "pointer_declarator"
            | "array_declarator"
            | "function_declarator"
            | "reference_declarator"
            | "qualified_identifier" => cur = parent,
            _ => return false,
        }
    }
    false
}

/// Innermost identifier of a declarator chain.
fn declarator_name<'t>(mut node: Node<'t>, src: &'t [u8]) -> Option<(String, usize)> {
    loop {
        match node.kind() {
            "identifier" | "field_identifier" => {
                return Some((node.utf8_text(src).ok()?.to_string(), node.start_position().row + 1))
            }
            _ => {
                node = node
                    .child_by_field_name("declarator")
                    .or_else(|| node.named_child(0))?;
            }
        }
    }
}

fn function_def(node: Node, src: &[u8], rel: &str) -> Option<FunctionDef> {
    let mut decl = node.child_by_field_name("declarator")?;
    while decl.kind() != "function_declarator" {
        decl = decl.child_by_field_name("declarator")?;
    }
    let (name, line) = declarator_name(decl.child_by_field_name("declarator")?, src)?;
    let mut params = Vec::new();
    if let Some(list) = decl.child_by_field_name("parameters") {
        let mut cursor = list.walk();
        for p in list.named_children(&mut cursor) {
            if let Some(d) = p.child_by_field_name("declarator") {
                if let Some((pname, _)) = declarator_name(d, src) {
                    params.push(pname);
                }
            }
        }
    }
    Some(FunctionDef {
        name,
        file: rel.to_string(),
        line,
        params,
    })
}

fn ast_sites(rel: &str, text: &str, grammar: Grammar) -> Option<FileIndex> {
    let mut parser = Parser::new();
    parser.set_language(&grammar.language()).ok()?;
    let tree = parser.parse(text, None)?;
    let root = tree.root_node();
    if root.has_error() {
        log::warn!("{rel}: syntax errors, falling back to lexical matching");
        return None;
    }
    let src = text.as_bytes();
    let mut out = FileIndex::default();
    let mut cursor = root.walk();
    loop {
        let node = cursor.node();
        match node.kind() {
            "identifier" | "field_identifier" | "type_identifier" => {
                if let Ok(name) = node.utf8_text(src) {
                    let kind = if is_definition(node) {
                        SiteKind::Definition
                    } else {
                        SiteKind::Use
                    };
                    out.sites.push(SymbolSite {
                        file: rel.to_string(),
                        line: node.start_position().row + 1,
                        kind,
                        symbol: name.to_string(),
                    });
                }
            }
            "function_definition" => {
                if let Some(def) = function_def(node, src, rel) {
                    out.functions.push(def);
                }
            }
            "call_expression" => {
                if let Some(f) = node.child_by_field_name("function") {
                    if f.kind() == "identifier" {
                        if let Ok(name) = f.utf8_text(src) {
                            out.calls.push(CallSite {
                                callee: name.to_string(),
                                file: rel.to_string(),
                                line: node.start_position().row + 1,
                            });
                        }
                    }
                }
            }
            _ => {}
        }
        if cursor.goto_first_child() {
            continue;
        }
        loop {
            if cursor.goto_next_sibling() {
                break;
            }
            if !cursor.goto_parent() {
                return Some(out);
            }
        }
    }
}

fn index_file(root: &Path, path: &Path) -> Option<(String, usize, FileIndex)> {
    let meta = std::fs::metadata(path).ok()?;
    if meta.len() > MAX_FILE_BYTES {
        return None;
    }
    let bytes = std::fs::read(path)
        .map_err(|e| log::warn!("skipping {}: {e}", path.display()))
        .ok()?;
    if bytes[..bytes.len().min(8192)].contains(&0) {
        return None;
    }
    let text = String::from_utf8_lossy(&bytes);
    let rel = path
        .strip_prefix(root)
        .unwrap_or(path)
        .to_string_lossy()
        .replace('\\', "/");
    let lines = text.lines().count();
    let idx = Grammar::for_path(path)
        .and_then(|g| ast_sites(&rel, &text, g))
        .unwrap_or_else(|| lexical_sites(&rel, &text));
    Some((rel, lines, idx))
}

/// Indexes every readable text file under `root`, skipping `.git`,
/// binaries, and files over [`MAX_FILE_BYTES`].
pub fn index_repository(root: &Path) -> Result<SymbolIndex, IndexError> {
    std::fs::read_dir(root).map_err(|source| IndexError::Unreadable {
        path: root.to_path_buf(),
        source,
    })?;
    let files: Vec<PathBuf> = WalkDir::new(root)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| e.depth() == 0 || e.file_name() != ".git")
        .filter_map(|e| e.map_err(|err| log::warn!("walk error: {err}")).ok())
        .filter(|e| e.file_type().is_file())
        .map(|e| e.into_path())
        .collect();

    let per_file: Vec<(String, usize, FileIndex)> =
        files.par_iter().filter_map(|p| index_file(root, p)).collect();

    let mut index = SymbolIndex::default();
    for (rel, lines, f) in per_file {
        index.line_counts.insert(rel, lines);
        index.absorb(f);
    }
    index.finish();
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn kinds(idx: &SymbolIndex, sym: &str) -> Vec<(String, usize, SiteKind)> {
        idx.sites(sym)
            .iter()
            .map(|s| (s.file.clone(), s.line, s.kind))
            .collect()
    }

    #[test]
    fn empty_directory() {
        let dir = tempfile::tempdir().unwrap();
        assert!(index_repository(dir.path()).unwrap().is_empty());
    }

    #[test]
    fn unreadable_root_fails() {
        assert!(index_repository(Path::new("/definitely/not/here")).is_err());
    }

    #[test]
    fn definitions_uses_params_and_calls() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join("u.c"),
            "#define CAP 16\nstruct buf { char *data; size_t len; };\nstatic int counter;\n\
             int copy(char *dst, const char *src, size_t n) {\n  int k = n;\n  counter++;\n  return k;\n}\n\
             int main(void) { return copy(0, 0, CAP); }\n",
        )
        .unwrap();
        let idx = index_repository(dir.path()).unwrap();
        let f = |s| kinds(&idx, s);
        assert_eq!(f("CAP"), vec![("u.c".into(), 1, SiteKind::Definition), ("u.c".into(), 9, SiteKind::Use)]);
        assert_eq!(f("len"), vec![("u.c".into(), 2, SiteKind::Definition)]);
        assert_eq!(f("counter"), vec![("u.c".into(), 3, SiteKind::Definition), ("u.c".into(), 6, SiteKind::Use)]);
        assert_eq!(f("n"), vec![("u.c".into(), 4, SiteKind::Definition), ("u.c".into(), 5, SiteKind::Use)]);
        assert_eq!(f("k")[0], ("u.c".into(), 5, SiteKind::Definition));
        assert_eq!(f("buf"), vec![("u.c".into(), 2, SiteKind::Definition)]);
        assert_eq!(idx.functions("copy")[0].params, vec!["dst", "src", "n"]);
        assert_eq!(idx.calls_to("copy"), &[CallSite { callee: "copy".into(), file: "u.c".into(), line: 9 }]);
        assert_eq!(idx.line_count("u.c"), Some(9));
    }

    #[test]
    fn syntax_error_file_does_not_stop_indexing() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("bad.c"), "int broken( { len = ;\n").unwrap();
        fs::write(dir.path().join("good.c"), "int f(int len) { return len; }\n").unwrap();
        let idx = index_repository(dir.path()).unwrap();
        let files: Vec<&str> = idx.sites("len").iter().map(|s| s.file.as_str()).collect();
        assert!(files.contains(&"good.c"));
        assert!(files.contains(&"bad.c"));
        assert_eq!(idx.sites("len").iter().find(|s| s.file == "good.c").unwrap().kind, SiteKind::Definition);
    }

    #[test]
    fn non_grammar_files_use_lexical_matching() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("notes.py"), "def f(len_x):\n    return len_x\n").unwrap();
        fs::create_dir(dir.path().join(".git")).unwrap();
        fs::write(dir.path().join(".git/HEAD"), "len_x\n").unwrap();
        fs::write(dir.path().join("blob.bin"), b"len_x\0\0").unwrap();
        let idx = index_repository(dir.path()).unwrap();
        let sites = kinds(&idx, "len_x");
        assert_eq!(
            sites,
            vec![("notes.py".into(), 1, SiteKind::Use), ("notes.py".into(), 2, SiteKind::Use)]
        );
    }

    #[test]
    fn reindexing_is_stable() {
        let dir = tempfile::tempdir().unwrap();
        for i in 0..6 {
            fs::write(dir.path().join(format!("f{i}.c")), format!("int g{i}(int a) {{ return a + {i}; }}\n")).unwrap();
        }
        assert_eq!(index_repository(dir.path()).unwrap(), index_repository(dir.path()).unwrap());
    }
}
