//! CSV ingestion and the key-value manifest.
//!
//! Event files carry a header line followed by
//! `src,dst,timestamp[,label][,f1,...,fd]` rows. A label column is present
//! when the fourth header field mentions `label`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::numerics::Tensor;

use super::{EventStream, GraphError};

/// How raw node ids map onto the unified node index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DatasetFormat {
    /// `src` and `dst` share one id space.
    #[default]
    Generic,
    /// User/item layout: `src` and `dst` ids are separate spaces; items are
    /// placed after all users.
    Bipartite,
}

impl std::str::FromStr for DatasetFormat {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "generic" => Ok(Self::Generic),
            "bipartite" | "jodie" => Ok(Self::Bipartite),
            other => Err(GraphError::UnknownFormat(other.to_string())),
        }
    }
}

#[derive(Clone, Debug)]
pub struct LoadOptions {
    pub format: DatasetFormat,
    /// Width of the zero node-feature table.
    pub node_dim: usize,
    /// Width of the zero edge-feature table used when rows carry no features.
    pub edge_dim: usize,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            format: DatasetFormat::Generic,
            node_dim: 172,
            edge_dim: 172,
        }
    }
}

struct RawRow {
    src: i64,
    dst: i64,
    timestamp: f64,
    features: Vec<f64>,
}

fn parse_err(line: usize, msg: impl Into<String>) -> GraphError {
    GraphError::Parse {
        line,
        msg: msg.into(),
    }
}

/// Parses event CSV text. Line numbers in errors are 1-based.
pub fn parse_events(text: &str, opts: &LoadOptions) -> Result<EventStream, GraphError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    if header.is_empty() {
        return Err(GraphError::Empty);
    }
    let has_label = header
        .get(3)
        .is_some_and(|h| h.to_ascii_lowercase().contains("label"));
    let feature_start = if has_label { 4 } else { 3 };

    let mut rows = Vec::new();
    let mut feature_width: Option<usize> = None;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let line_no = record.position().map_or(0, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        let fields: Vec<&str> = record.iter().collect();
        if fields.len() < 3 {
            return Err(parse_err(line_no, format!("expected at least 3 fields, got {}", fields.len())));
        }
        let src = fields[0]
            .parse::<f64>()
            .ok()
            .filter(|x| x.fract() == 0.0 && *x >= 0.0)
            .ok_or_else(|| parse_err(line_no, format!("bad source id `{}`", fields[0])))?
            as i64;
        let dst = fields[1]
            .parse::<f64>()
            .ok()
            .filter(|x| x.fract() == 0.0 && *x >= 0.0)
            .ok_or_else(|| parse_err(line_no, format!("bad destination id `{}`", fields[1])))?
            as i64;
        let timestamp: f64 = fields[2]
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad timestamp `{}`", fields[2])))?;
        if !timestamp.is_finite() || timestamp < 0.0 {
            return Err(parse_err(line_no, format!("timestamp {timestamp} is not finite and non-negative")));
        }
        if has_label && fields.len() > 3 {
            fields[3]
                .parse::<f64>()
                .map_err(|_| parse_err(line_no, format!("bad label `{}`", fields[3])))?;
        }
        let features = fields
            .get(feature_start..)
            .unwrap_or(&[])
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| parse_err(line_no, format!("bad feature value `{f}`")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        match feature_width {
            None => feature_width = Some(features.len()),
            Some(w) if w != features.len() => {
                return Err(parse_err(
                    line_no,
                    format!("expected {w} feature values, got {}", features.len()),
                ))
            }
            _ => {}
        }
        rows.push(RawRow {
            src,
            dst,
            timestamp,
            features,
        });
    }
    if rows.is_empty() {
        return Err(GraphError::Empty);
    }

    let (src_map, dst_map, num_nodes) = reindex(&rows, opts.format);
    let width = feature_width.unwrap_or(0);
    let d_e = if width == 0 { opts.edge_dim } else { width };
    let mut edge_data = Vec::with_capacity(rows.len() * d_e);
    let mut raw = Vec::with_capacity(rows.len());
    for r in &rows {
        raw.push((src_map[&r.src], dst_map[&r.dst], r.timestamp));
        if width == 0 {
            edge_data.extend(std::iter::repeat_n(0.0, d_e));
        } else {
            edge_data.extend_from_slice(&r.features);
        }
    }
    let edges = Tensor::matrix(rows.len(), d_e, edge_data).expect("consistent widths");
    EventStream::new(raw, Tensor::zeros(&[num_nodes, opts.node_dim]), edges)
}

type IdMap = BTreeMap<i64, usize>;

/// Dense ids in ascending raw-id order.
fn reindex(rows: &[RawRow], format: DatasetFormat) -> (IdMap, IdMap, usize) {
    match format {
        DatasetFormat::Generic => {
            let ids: BTreeSet<i64> = rows.iter().flat_map(|r| [r.src, r.dst]).collect();
            let map: IdMap = ids.into_iter().enumerate().map(|(i, id)| (id, i)).collect();
            let n = map.len();
            (map.clone(), map, n)
        }
        DatasetFormat::Bipartite => {
            let users: BTreeSet<i64> = rows.iter().map(|r| r.src).collect();
            let items: BTreeSet<i64> = rows.iter().map(|r| r.dst).collect();
            let src: IdMap = users.into_iter().enumerate().map(|(i, id)| (id, i)).collect();
            let offset = src.len();
            let dst: IdMap = items
                .into_iter()
                .enumerate()
                .map(|(i, id)| (id, offset + i))
                .collect();
            let n = offset + dst.len();
            (src, dst, n)
        }
    }
}

/// Loads an event CSV from disk.
pub fn load_events(path: &Path, opts: &LoadOptions) -> Result<EventStream, GraphError> {
    let text = fs::read_to_string(path).map_err(|e| GraphError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(parse_events(&text, opts)?.with_name(name))
}

/// Sidecar metadata stored next to a normalized event file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Manifest {
    pub name: String,
    pub d_n: usize,
    pub d_e: usize,
    pub num_nodes: usize,
    pub num_events: usize,
    pub inversions_repaired: u64,
}

impl Manifest {
    pub fn for_stream(stream: &EventStream) -> Self {
        Self {
            name: stream.metadata.name.clone(),
            d_n: stream.node_dim(),
            d_e: stream.edge_dim(),
            num_nodes: stream.num_nodes(),
            num_events: stream.num_events(),
            inversions_repaired: stream.metadata.inversions_repaired,
        }
    }

    pub fn to_text(&self) -> String {
        format!(
            "name = {}\nd_N = {}\nd_E = {}\nnum_nodes = {}\nnum_events = {}\ninversions_repaired = {}\n",
            self.name, self.d_n, self.d_e, self.num_nodes, self.num_events, self.inversions_repaired
        )
    }

    pub fn parse(text: &str) -> Result<Self, GraphError> {
        let mut kv = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| parse_err(i + 1, "expected `key = value`"))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let num = |key: &str| -> Result<usize, GraphError> {
            kv.get(key)
                .ok_or_else(|| GraphError::Manifest(format!("missing `{key}`")))?
                .parse()
                .map_err(|_| GraphError::Manifest(format!("`{key}` is not an integer")))
        };
        Ok(Self {
            name: kv.get("name").cloned().unwrap_or_default(),
            d_n: num("d_N")?,
            d_e: num("d_E")?,
            num_nodes: num("num_nodes")?,
            num_events: num("num_events")?,
            inversions_repaired: num("inversions_repaired").unwrap_or(0) as u64,
        })
    }
}

/// Path of the manifest that accompanies `events_path`.
pub fn manifest_path(events_path: &Path) -> PathBuf {
    let mut s = events_path.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

/// Normalized CSV: dense ids, sorted rows, label column fixed to 0.
pub fn normalized_csv(stream: &EventStream) -> String {
    let mut out = String::from("src,dst,timestamp,label");
    for i in 0..stream.edge_dim() {
        let _ = write!(out, ",f{}", i + 1);
    }
    out.push('\n');
    for (i, e) in stream.events().iter().enumerate() {
        let _ = write!(out, "{},{},{:?},0", e.src, e.dst, e.timestamp);
        for x in stream.edge_feature(i) {
            let _ = write!(out, ",{x:?}");
        }
        out.push('\n');
    }
    out
}

/// Writes the normalized event file and its manifest.
pub fn write_normalized(stream: &EventStream, out: &Path) -> Result<Manifest, GraphError> {
    let manifest = Manifest::for_stream(stream);
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| GraphError::Io { path, source }
    };
    fs::write(out, normalized_csv(stream)).map_err(io(out))?;
    let mpath = manifest_path(out);
    fs::write(&mpath, manifest.to_text()).map_err(io(&mpath))?;
    Ok(manifest)
}

/// Loads a normalized event file, taking feature widths from its manifest
/// when one exists.
pub fn load_with_manifest(path: &Path, fallback: &LoadOptions) -> Result<EventStream, GraphError> {
    let mpath = manifest_path(path);
    let mut opts = fallback.clone();
    let mut name = None;
    if mpath.exists() {
        let text = fs::read_to_string(&mpath).map_err(|e| GraphError::Io {
            path: mpath.clone(),
            source: e,
        })?;
        let m = Manifest::parse(&text)?;
        opts.node_dim = m.d_n;
        opts.edge_dim = m.d_e;
        name = Some(m.name);
    }
    let stream = load_events(path, &opts)?;
    Ok(match name {
        Some(n) if !n.is_empty() => stream.with_name(n),
        _ => stream,
    })
}
