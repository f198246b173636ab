//! Edge-list graphs and IDX image archives.

use std::fs;
use std::path::{Path, PathBuf};

use resist_core::data::Dataset;
use resist_core::graph::DirectedGraph;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: bad magic {found:#010x}, expected {expected:#010x}")]
    BadMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },
    #[error("{path}: truncated, need {needed} bytes but found {found}")]
    Truncated {
        path: PathBuf,
        needed: usize,
        found: usize,
    },
    #[error("count mismatch: {images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("{path} line {line}: {message}")]
    EdgeList {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

impl FormatError {
    pub fn is_io(&self) -> bool {
        matches!(self, FormatError::Io { .. })
    }
}

fn read(path: &Path) -> Result<Vec<u8>, FormatError> {
    fs::read(path).map_err(|source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parse an edge list: the node count on the first non-comment line, then
/// one `from to` pair per line. `#` starts a comment.
pub fn parse_edge_list(text: &str, path: &Path) -> Result<DirectedGraph, FormatError> {
    let err = |line: usize, message: String| FormatError::EdgeList {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut graph: Option<DirectedGraph> = None;
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let nums: Vec<usize> = line
            .split_whitespace()
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|e| err(n + 1, format!("{t:?}: {e}")))
            })
            .collect::<Result<_, _>>()?;
        match (&mut graph, nums.as_slice()) {
            (None, [m]) => {
                graph = Some(DirectedGraph::new(*m).map_err(|e| err(n + 1, e.to_string()))?)
            }
            (Some(g), [i, j]) => g.add_edge(*i, *j).map_err(|e| err(n + 1, e.to_string()))?,
            (None, _) => return Err(err(n + 1, "expected the node count".into())),
            (Some(_), _) => return Err(err(n + 1, "expected `from to`".into())),
        }
    }
    graph.ok_or_else(|| err(0, "empty edge list".into()))
}

pub fn load_edge_list(path: &Path) -> Result<DirectedGraph, FormatError> {
    let bytes = read(path)?;
    parse_edge_list(&String::from_utf8_lossy(&bytes), path)
}

pub fn write_edge_list(g: &DirectedGraph) -> String {
    let mut out = format!("{}\n", g.node_count());
    for (i, j) in g.edges() {
        out.push_str(&format!("{i} {j}\n"));
    }
    out
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32, FormatError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| FormatError::Truncated {
            path: path.to_path_buf(),
            needed: at + 4,
            found: bytes.len(),
        })
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<(), FormatError> {
    let found = be_u32(bytes, 0, path)?;
    if found != expected {
        return Err(FormatError::BadMagic {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    Ok(())
}

fn body<'a>(
    bytes: &'a [u8],
    header: usize,
    len: usize,
    path: &Path,
) -> Result<&'a [u8], FormatError> {
    bytes
        .get(header..header + len)
        .ok_or_else(|| FormatError::Truncated {
            path: path.to_path_buf(),
            needed: header + len,
            found: bytes.len(),
        })
}

/// Parse IDX image and label buffers into a dataset with pixels scaled to
/// `[0, 1]` and ten classes.
pub fn parse_idx(
    images: &[u8],
    labels: &[u8],
    images_path: &Path,
    labels_path: &Path,
) -> Result<Dataset, FormatError> {
    check_magic(images, IDX_IMAGES_MAGIC, images_path)?;
    check_magic(labels, IDX_LABELS_MAGIC, labels_path)?;
    let n_images = be_u32(images, 4, images_path)? as usize;
    let rows = be_u32(images, 8, images_path)? as usize;
    let cols = be_u32(images, 12, images_path)? as usize;
    let n_labels = be_u32(labels, 4, labels_path)? as usize;
    if n_images != n_labels {
        return Err(FormatError::CountMismatch {
            images: n_images,
            labels: n_labels,
        });
    }
    let pixels = rows * cols;
    let img = body(images, 16, n_images * pixels, images_path)?;
    let lab = body(labels, 8, n_labels, labels_path)?;
    Ok(Dataset {
        features: img.iter().map(|&p| f64::from(p) / 255.0).collect(),
        labels: lab.iter().map(|&l| usize::from(l)).collect(),
        n_features: pixels,
        classes: 10,
    })
}

pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset, FormatError> {
    let images = read(images_path)?;
    let labels = read(labels_path)?;
    parse_idx(&images, &labels, images_path, labels_path)
}

/// Encode images (row-major bytes) and labels as IDX buffers.
pub fn encode_idx(images: &[Vec<u8>], rows: u32, cols: u32, labels: &[u8]) -> (Vec<u8>, Vec<u8>) {
    let mut img = Vec::new();
    img.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    img.extend_from_slice(&(images.len() as u32).to_be_bytes());
    img.extend_from_slice(&rows.to_be_bytes());
    img.extend_from_slice(&cols.to_be_bytes());
    for im in images {
        img.extend_from_slice(im);
    }
    let mut lab = Vec::new();
    lab.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    lab.extend_from_slice(labels);
    (img, lab)
}
