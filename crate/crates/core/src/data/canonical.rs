//! Canonical dataset directory.
//!
//! ```text
//! meta            nodes <n>
//!                 views <k>
//!                 classes <C>
//!                 view_names <name_0> ... <name_{k-1}>
//! view_<i>.edges  one "u v w" line per edge, w > 0
//! labels          optional, one "u c" line per labeled node
//! ```
//!
//! Node ids are dense in `[0, n)`. Within an edge file the same ordered pair
//! may not appear twice and self-loops are rejected; a pair listed in both
//! orientations is merged by maximum weight. Blank lines are ignored.
//!
//! The canonical form written by [`save`] lists each undirected edge once as
//! `u < v`, sorted, with weights in shortest round-trip decimal form and every
//! line newline-terminated.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::MultiViewGraph;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetMeta {
    pub nodes: usize,
    pub views: usize,
    pub classes: usize,
    pub view_names: Vec<String>,
}

fn parse_err(file: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        file: file.to_string(),
        line,
        msg: msg.into(),
    }
}

fn parse_usize(file: &str, line: usize, field: &str, what: &str) -> Result<usize> {
    field
        .parse()
        .map_err(|_| parse_err(file, line, format!("{what} `{field}` is not a non-negative integer")))
}

pub fn parse_meta(text: &str) -> Result<DatasetMeta> {
    const FILE: &str = "meta";
    let mut nodes = None;
    let mut views = None;
    let mut classes = None;
    let mut names: Option<Vec<String>> = None;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let mut fields = line.split_whitespace();
        let Some(key) = fields.next() else { continue };
        let rest: Vec<&str> = fields.collect();
        let single = |what: &str| -> Result<usize> {
            match rest.as_slice() {
                [v] => parse_usize(FILE, lineno, v, what),
                _ => Err(parse_err(FILE, lineno, format!("`{key}` takes exactly one value"))),
            }
        };
        let slot_taken = |taken: bool| {
            if taken {
                Err(parse_err(FILE, lineno, format!("duplicate key `{key}`")))
            } else {
                Ok(())
            }
        };
        match key {
            "nodes" => {
                slot_taken(nodes.is_some())?;
                nodes = Some(single("node count")?);
            }
            "views" => {
                slot_taken(views.is_some())?;
                views = Some(single("view count")?);
            }
            "classes" => {
                slot_taken(classes.is_some())?;
                classes = Some(single("class count")?);
            }
            "view_names" => {
                slot_taken(names.is_some())?;
                names = Some(rest.iter().map(|s| s.to_string()).collect());
            }
            other => return Err(parse_err(FILE, lineno, format!("unknown key `{other}`"))),
        }
    }
    let missing = |key: &str| parse_err(FILE, 0, format!("missing key `{key}`"));
    let nodes = nodes.ok_or_else(|| missing("nodes"))?;
    let views = views.ok_or_else(|| missing("views"))?;
    let classes = classes.ok_or_else(|| missing("classes"))?;
    let view_names = names.ok_or_else(|| missing("view_names"))?;
    if views == 0 {
        return Err(parse_err(FILE, 0, "a dataset needs at least one view"));
    }
    if view_names.len() != views {
        return Err(parse_err(
            FILE,
            0,
            format!("{} view names for {views} views", view_names.len()),
        ));
    }
    Ok(DatasetMeta {
        nodes,
        views,
        classes,
        view_names,
    })
}

/// Parses one edge file. Returns the raw directed lines; see
/// [`MultiViewGraph::from_edges`] for symmetrisation.
pub fn parse_edges(text: &str, file: &str, nodes: usize) -> Result<Vec<(usize, usize, f64)>> {
    let mut seen = HashSet::new();
    let mut edges = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let [u, v, w] = fields.as_slice() else {
            return Err(parse_err(file, lineno, format!("expected `u v w`, got {} fields", fields.len())));
        };
        let u = parse_usize(file, lineno, u, "node id")?;
        let v = parse_usize(file, lineno, v, "node id")?;
        let w: f64 = w
            .parse()
            .map_err(|_| parse_err(file, lineno, format!("weight `{w}` is not a number")))?;
        if u >= nodes || v >= nodes {
            return Err(parse_err(
                file,
                lineno,
                format!("node id {} outside [0, {nodes})", u.max(v)),
            ));
        }
        if u == v {
            return Err(parse_err(file, lineno, format!("self-loop on node {u}")));
        }
        if !(w.is_finite() && w > 0.0) {
            return Err(parse_err(file, lineno, format!("weight {w} must be positive and finite")));
        }
        if !seen.insert((u, v)) {
            return Err(parse_err(file, lineno, format!("duplicate edge ({u}, {v})")));
        }
        edges.push((u, v, w));
    }
    Ok(edges)
}

pub fn parse_labels(text: &str, nodes: usize, classes: usize) -> Result<Vec<Option<usize>>> {
    const FILE: &str = "labels";
    let mut labels = vec![None; nodes];
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let [u, c] = fields.as_slice() else {
            return Err(parse_err(FILE, lineno, format!("expected `u c`, got {} fields", fields.len())));
        };
        let u = parse_usize(FILE, lineno, u, "node id")?;
        let c = parse_usize(FILE, lineno, c, "class id")?;
        if u >= nodes {
            return Err(parse_err(FILE, lineno, format!("node id {u} outside [0, {nodes})")));
        }
        if c >= classes {
            return Err(parse_err(FILE, lineno, format!("class {c} outside [0, {classes})")));
        }
        if labels[u].replace(c).is_some() {
            return Err(parse_err(FILE, lineno, format!("node {u} labeled twice")));
        }
    }
    Ok(labels)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn load(dir: impl AsRef<Path>) -> Result<MultiViewGraph> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "dataset directory not found"),
        ));
    }
    let meta = parse_meta(&read(&dir.join("meta"))?)?;
    let mut view_edges = Vec::with_capacity(meta.views);
    for i in 0..meta.views {
        let name = format!("view_{i}.edges");
        view_edges.push(parse_edges(&read(&dir.join(&name))?, &name, meta.nodes)?);
    }
    let labels_path = dir.join("labels");
    let labels = if labels_path.exists() {
        Some(parse_labels(&read(&labels_path)?, meta.nodes, meta.classes)?)
    } else {
        None
    };
    MultiViewGraph::from_edges(meta.nodes, &view_edges, meta.view_names, labels, meta.classes)
}

fn check_name(name: &str) -> Result<()> {
    if name.is_empty() || name.chars().any(char::is_whitespace) {
        return Err(Error::Graph(format!(
            "view name `{name}` must be non-empty and contain no whitespace"
        )));
    }
    Ok(())
}

/// Canonical text of each file, in the order meta, views, labels.
fn render(g: &MultiViewGraph) -> Result<Vec<(String, String)>> {
    for name in g.view_names() {
        check_name(name)?;
    }
    let mut files = Vec::new();
    files.push((
        "meta".to_string(),
        format!(
            "nodes {}\nviews {}\nclasses {}\nview_names {}\n",
            g.num_nodes(),
            g.num_views(),
            g.num_classes(),
            g.view_names().join(" ")
        ),
    ));
    for i in 0..g.num_views() {
        let mut text = String::new();
        for (u, v, w) in g.edges(i)? {
            writeln!(text, "{u} {v} {w}").expect("write to string");
        }
        files.push((format!("view_{i}.edges"), text));
    }
    if let Some(labels) = g.labels() {
        if labels.iter().any(Option::is_some) {
            let mut text = String::new();
            for (u, c) in labels.iter().enumerate() {
                if let Some(c) = c {
                    writeln!(text, "{u} {c}").expect("write to string");
                }
            }
            files.push(("labels".to_string(), text));
        }
    }
    Ok(files)
}

/// Writes `g` in canonical form, creating `dir` if needed. A stale `labels`
/// file is removed when the graph has no labels.
pub fn save(g: &MultiViewGraph, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = render(g)?;
    let has_labels = files.iter().any(|(name, _)| name == "labels");
    for (name, text) in files {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    let labels_path = dir.join("labels");
    if !has_labels && labels_path.exists() {
        fs::remove_file(&labels_path).map_err(|e| Error::io(&labels_path, e))?;
    }
    Ok(())
}
