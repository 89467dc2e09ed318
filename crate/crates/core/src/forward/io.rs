//! Plain-text persistence of [`AlbedoResponse`]: one CSV per outgoing grid
//! plus a JSON sidecar holding the metadata needed to rebuild the grids.
//!
//! CSV rows are `t, boundary_index, angle_index, order, value` with `t` the
//! bin centre and `order` one of `ballistic`, `single`, `double`. Only
//! nonzero samples are written. The first line is a comment
//! `# schema=<n> phantom=<hash>`, followed by ` config=<hash>` when the
//! response records the configuration that produced it.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::response::{
    AlbedoResponse, GridKind, ResponseGrid, ResponseMeta, Series, ORDERS, SCHEMA_VERSION,
};
use super::source::MollifiedSource;
use crate::error::{Error, Result};
use crate::geometry::{BoundaryGrid, BoundaryNode, PhasePoint, Sign, TimeGrid};

pub const HEADER: [&str; 5] = ["t", "boundary_index", "angle_index", "order", "value"];
pub const ORDER_LABELS: [&str; ORDERS] = ["ballistic", "single", "double"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub meta: ResponseMeta,
    /// Global-grid nodes whose backward ray starts inside the source window.
    pub excluded: Vec<usize>,
}

/// Paths written by [`write_response`].
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseFiles {
    pub window: PathBuf,
    pub global: Option<PathBuf>,
    pub sidecar: PathBuf,
}

impl ResponseFiles {
    pub fn for_stem(stem: &Path, with_global: bool) -> Self {
        let with = |suffix: &str| {
            let mut name = stem.as_os_str().to_owned();
            name.push(suffix);
            PathBuf::from(name)
        };
        Self {
            window: with(".window.csv"),
            global: with_global.then(|| with(".global.csv")),
            sidecar: with(".json"),
        }
    }

    pub fn all(&self) -> Vec<&Path> {
        let mut out = vec![self.window.as_path(), self.sidecar.as_path()];
        out.extend(self.global.as_deref());
        out
    }
}

pub fn order_label(order: usize) -> &'static str {
    ORDER_LABELS[order]
}

pub fn parse_order(label: &str) -> Result<usize> {
    ORDER_LABELS
        .iter()
        .position(|l| *l == label)
        .ok_or_else(|| Error::Invalid(format!("unknown order label {label:?}")))
}

fn comment_line(meta: &ResponseMeta) -> String {
    match &meta.config_hash {
        Some(config) => format!(
            "# schema={} phantom={} config={config}",
            meta.schema_version, meta.phantom_hash
        ),
        None => format!(
            "# schema={} phantom={}",
            meta.schema_version, meta.phantom_hash
        ),
    }
}

pub fn write_response(response: &AlbedoResponse, stem: &Path) -> Result<ResponseFiles> {
    let files = ResponseFiles::for_stem(stem, response.global.is_some());
    write_grid(
        &response.window,
        &response.time,
        &response.meta,
        &files.window,
    )?;
    if let (Some(grid), Some(path)) = (&response.global, &files.global) {
        write_grid(grid, &response.time, &response.meta, path)?;
    }
    let sidecar = Sidecar {
        meta: response.meta.clone(),
        excluded: response
            .global
            .as_ref()
            .map(|g| (0..g.nodes.len()).filter(|i| g.excluded[*i]).collect())
            .unwrap_or_default(),
    };
    let json = serde_json::to_string_pretty(&sidecar).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(&files.sidecar, json)?;
    Ok(files)
}

fn write_grid(
    grid: &ResponseGrid,
    time: &TimeGrid,
    meta: &ResponseMeta,
    path: &Path,
) -> Result<()> {
    let mut file = File::create(path)?;
    writeln!(file, "{}", comment_line(meta))?;
    let mut writer = csv::Writer::from_writer(file);
    let io = |e: csv::Error| Error::Io(e.to_string());
    writer.write_record(HEADER).map_err(io)?;
    for (node, parts) in grid.nodes.iter().zip(&grid.parts) {
        for (order, series) in parts.iter().enumerate() {
            for (bin, value) in series.iter() {
                if value == 0.0 {
                    continue;
                }
                writer
                    .serialize((
                        time.center(bin),
                        node.boundary_index,
                        node.angle_index,
                        order_label(order),
                        value,
                    ))
                    .map_err(io)?;
            }
        }
    }
    writer.flush()?;
    Ok(())
}

/// Reads a response written by [`write_response`] or produced elsewhere in the
/// same schema. Grids are rebuilt from the sidecar; every row is validated.
pub fn read_response(stem: &Path) -> Result<AlbedoResponse> {
    let sidecar_path = ResponseFiles::for_stem(stem, false).sidecar;
    let text = std::fs::read_to_string(&sidecar_path)?;
    let sidecar: Sidecar = serde_json::from_str(&text)
        .map_err(|e| Error::Invalid(format!("{}: {e}", sidecar_path.display())))?;
    let meta = sidecar.meta;
    if meta.schema_version != SCHEMA_VERSION {
        return Err(Error::Invalid(format!(
            "schema version {} is not supported (expected {SCHEMA_VERSION})",
            meta.schema_version
        )));
    }
    meta.domain.validate()?;
    let time = TimeGrid::new(meta.t_max, meta.time_bins)?;
    let files = ResponseFiles::for_stem(stem, meta.global_grid.is_some());

    let [x, y, angle] = meta.source_center;
    let source = MollifiedSource::new(
        meta.domain,
        PhasePoint::planar(x, y, angle),
        meta.eps1,
        meta.eps2,
        meta.eta,
        meta.window_nodes,
    )?;
    let window_nodes = source.phase.window_grid();
    let window = read_grid(
        &files.window,
        GridKind::Window,
        [meta.window_nodes, meta.window_nodes],
        window_nodes,
        Vec::new(),
        &time,
        &meta,
    )?;

    let global = match (meta.global_grid, &files.global) {
        (Some(dims), Some(path)) => {
            let grid = BoundaryGrid::new(meta.domain, Sign::Plus, dims[0], dims[1])?;
            Some(read_grid(
                path,
                GridKind::Global,
                dims,
                grid.nodes().to_vec(),
                sidecar.excluded.clone(),
                &time,
                &meta,
            )?)
        }
        _ => None,
    };
    Ok(AlbedoResponse {
        time,
        window,
        global,
        meta,
    })
}

fn read_grid(
    path: &Path,
    kind: GridKind,
    dims: [usize; 2],
    nodes: Vec<BoundaryNode>,
    excluded_indices: Vec<usize>,
    time: &TimeGrid,
    meta: &ResponseMeta,
) -> Result<ResponseGrid> {
    let where_ =
        |line: u64, what: String| Error::Invalid(format!("{}:{line}: {what}", path.display()));
    let mut reader = BufReader::new(File::open(path)?);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    if first.trim_end() != comment_line(meta) {
        return Err(where_(
            1,
            format!(
                "expected comment {:?}, found {:?}",
                comment_line(meta),
                first.trim_end()
            ),
        ));
    }
    let mut csv_reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(reader);
    let header = csv_reader
        .headers()
        .map_err(|e| where_(2, e.to_string()))?
        .clone();
    if header.iter().ne(HEADER) {
        return Err(where_(2, format!("header must be {}", HEADER.join(","))));
    }

    let mut lookup = vec![usize::MAX; dims[0] * dims[1]];
    for (i, n) in nodes.iter().enumerate() {
        lookup[n.boundary_index * dims[1] + n.angle_index] = i;
    }
    let mut excluded = vec![false; nodes.len()];
    for i in excluded_indices {
        *excluded
            .get_mut(i)
            .ok_or_else(|| Error::Invalid(format!("excluded node {i} is out of range")))? = true;
    }
    let mut dense: Vec<[Vec<f64>; ORDERS]> = (0..nodes.len())
        .map(|_| std::array::from_fn(|_| vec![0.0; time.bins]))
        .collect();
    for (row, record) in csv_reader
        .deserialize::<(f64, usize, usize, String, f64)>()
        .enumerate()
    {
        let line = row as u64 + 3;
        let (t, bi, ai, label, value) = record.map_err(|e| where_(line, e.to_string()))?;
        if bi >= dims[0] || ai >= dims[1] {
            return Err(where_(
                line,
                format!("node ({bi}, {ai}) outside a {}×{} grid", dims[0], dims[1]),
            ));
        }
        let node = lookup[bi * dims[1] + ai];
        if node == usize::MAX {
            return Err(where_(line, format!("node ({bi}, {ai}) does not exist")));
        }
        let order = parse_order(&label).map_err(|e| where_(line, e.to_string()))?;
        if order > meta.order {
            return Err(where_(
                line,
                format!(
                    "order {label} exceeds the declared truncation {}",
                    meta.order
                ),
            ));
        }
        let bin = (t / time.width()).floor();
        if !(bin >= 0.0 && (bin as usize) < time.bins)
            || (time.center(bin as usize) - t).abs() > 1e-9 * time.t_max
        {
            return Err(where_(line, format!("t = {t} is not a bin centre")));
        }
        if !value.is_finite() || value < 0.0 {
            return Err(where_(
                line,
                format!("value {value} must be finite and nonnegative"),
            ));
        }
        if excluded[node] && kind == GridKind::Global {
            return Err(where_(
                line,
                format!("node ({bi}, {ai}) is excluded but carries data"),
            ));
        }
        dense[node][order][bin as usize] = value;
    }
    let parts = dense
        .iter()
        .map(|d| std::array::from_fn(|j| Series::from_dense(&d[j])))
        .collect();
    Ok(ResponseGrid {
        kind,
        n_boundary: dims[0],
        n_angle: dims[1],
        nodes,
        excluded,
        parts,
    })
}
