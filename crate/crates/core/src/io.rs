//! CSV and run-directory formats.
//!
//! Field tables have a `time` column followed by one column per vertex, the
//! header naming the vertex ids. Numbers are written in the shortest form
//! that parses back to the identical `f64`, so a saved run reloads bit for
//! bit. A run directory holds the fields, the mesh, the effective config and
//! a flat `run_meta` file.

use std::fmt::Write as _;
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::activation::ActivationMap;
use crate::bidomain::BidomainRun;
use crate::config::{ConfigError, RunConfig};
use crate::ionic::Ms0dTrace;
use crate::mesh::{parse_mesh, write_mesh, MeshError, TriMesh};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} already exists (pass --force to overwrite)")]
    Exists { path: PathBuf },
    #[error("{file}, line {line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
    #[error("run directory config: {0}")]
    Config(#[from] ConfigError),
    #[error("run directory mesh: {0}")]
    Mesh(#[from] MeshError),
    #[error("run directory is inconsistent: {0}")]
    Inconsistent(String),
}

/// Shortest round-trip text for a float; exponent form outside the range
/// where plain decimals stay short.
pub fn format_float(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e15).contains(&a) || !x.is_finite() {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

fn parse_float(s: &str) -> Option<f64> {
    s.trim().parse().ok()
}

/// Field values at a fixed set of vertices over time.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldTable {
    pub times: Vec<f64>,
    pub columns: Vec<usize>,
    pub rows: Vec<Vec<f64>>,
}

impl FieldTable {
    /// Picks `columns` out of full-length nodal fields.
    pub fn from_nodal(times: &[f64], fields: &[Vec<f64>], columns: &[usize]) -> Self {
        FieldTable {
            times: times.to_vec(),
            columns: columns.to_vec(),
            rows: fields
                .iter()
                .map(|f| columns.iter().map(|&c| f[c]).collect())
                .collect(),
        }
    }

    /// Full-length nodal fields, zero at vertices without a column.
    pub fn to_nodal(&self, num_vertices: usize) -> Result<Vec<Vec<f64>>, DataError> {
        if let Some(&bad) = self.columns.iter().find(|&&c| c >= num_vertices) {
            return Err(DataError::Inconsistent(format!(
                "column for vertex {bad} but the mesh has {num_vertices} vertices"
            )));
        }
        Ok(self
            .rows
            .iter()
            .map(|row| {
                let mut f = vec![0.0; num_vertices];
                for (&c, &x) in self.columns.iter().zip(row) {
                    f[c] = x;
                }
                f
            })
            .collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(24 * (self.columns.len() + 1) * (self.rows.len() + 1));
        out.push_str("time");
        for c in &self.columns {
            let _ = write!(out, ",{c}");
        }
        out.push('\n');
        for (t, row) in self.times.iter().zip(&self.rows) {
            out.push_str(&format_float(*t));
            for x in row {
                out.push(',');
                out.push_str(&format_float(*x));
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str, file: &str) -> Result<Self, DataError> {
        let err = |line: usize, message: String| DataError::Parse {
            file: file.to_string(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
        let mut cells = header.split(',');
        if cells.next().map(str::trim) != Some("time") {
            return Err(err(1, "first header cell must be `time`".into()));
        }
        let columns = cells
            .map(|c| {
                c.trim()
                    .parse::<usize>()
                    .map_err(|_| err(1, format!("bad vertex id {c:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut times = Vec::new();
        let mut rows = Vec::new();
        for (i, l) in lines {
            let values = l
                .split(',')
                .map(|c| parse_float(c).ok_or_else(|| err(i + 1, format!("bad number {c:?}"))))
                .collect::<Result<Vec<_>, _>>()?;
            if values.len() != columns.len() + 1 {
                return Err(err(
                    i + 1,
                    format!("expected {} cells, found {}", columns.len() + 1, values.len()),
                ));
            }
            times.push(values[0]);
            rows.push(values[1..].to_vec());
        }
        Ok(FieldTable {
            times,
            columns,
            rows,
        })
    }
}

/// `vertex_id,psi` rows for every evaluated vertex; `inf` marks a vertex
/// that never activated.
pub fn psi_to_csv(psi: &ActivationMap) -> String {
    let mut out = String::from("vertex_id,psi\n");
    for i in 0..psi.len() {
        if psi.is_evaluated(i) {
            let cell = psi.get(i).map_or_else(|| "inf".to_string(), format_float);
            let _ = writeln!(out, "{i},{cell}");
        }
    }
    out
}

pub fn parse_psi_csv(
    text: &str,
    num_vertices: usize,
    threshold: f64,
    file: &str,
) -> Result<ActivationMap, DataError> {
    let err = |line: usize, message: String| DataError::Parse {
        file: file.to_string(),
        line,
        message,
    };
    let mut psi = vec![None; num_vertices];
    let mut evaluated = vec![false; num_vertices];
    for (i, l) in text.lines().enumerate().skip(1) {
        if l.trim().is_empty() {
            continue;
        }
        let (id, value) = l
            .split_once(',')
            .ok_or_else(|| err(i + 1, "expected `vertex_id,psi`".into()))?;
        let id: usize = id
            .trim()
            .parse()
            .map_err(|_| err(i + 1, format!("bad vertex id {id:?}")))?;
        if id >= num_vertices {
            return Err(err(i + 1, format!("vertex {id} outside the mesh")));
        }
        let value = parse_float(value).ok_or_else(|| err(i + 1, format!("bad time {value:?}")))?;
        evaluated[id] = true;
        psi[id] = value.is_finite().then_some(value);
    }
    Ok(ActivationMap::from_parts(psi, evaluated, threshold))
}

pub fn ms0d_to_csv(trace: &Ms0dTrace) -> String {
    let mut out = String::from("t,v,h\n");
    for ((t, v), h) in trace.t.iter().zip(&trace.v).zip(&trace.h) {
        let _ = writeln!(out, "{},{},{}", format_float(*t), format_float(*v), format_float(*h));
    }
    out
}

/// Writes `contents` to a new file, refusing to replace an existing one
/// unless `force` is set.
pub fn write_output(path: &Path, contents: &str, force: bool) -> Result<(), DataError> {
    let io = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    let mut opts = OpenOptions::new();
    opts.write(true);
    if force {
        opts.create(true).truncate(true);
    } else {
        opts.create_new(true);
    }
    let mut file = opts.open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::AlreadyExists {
            DataError::Exists {
                path: path.to_path_buf(),
            }
        } else {
            io(e)
        }
    })?;
    file.write_all(contents.as_bytes()).map_err(io)
}

pub fn read_text(path: &Path) -> Result<String, DataError> {
    std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub const RUN_FILES: [&str; 9] = [
    "fields_v.csv",
    "fields_u.csv",
    "fields_h.csv",
    "recorded_rhs.csv",
    "recorded_reaction.csv",
    "stimulus.csv",
    "mesh.txt",
    "config.ini",
    "run_meta",
];

/// Saves a complete bidomain run. Existing files abort the save before
/// anything is written, unless `force` is set.
pub fn save_run(
    dir: &Path,
    mesh: &TriMesh,
    cfg: &RunConfig,
    run: &BidomainRun,
    force: bool,
) -> Result<(), DataError> {
    if !force {
        if let Some(existing) = RUN_FILES.iter().map(|f| dir.join(f)).find(|p| p.exists()) {
            return Err(DataError::Exists { path: existing });
        }
    }
    let all: Vec<usize> = (0..mesh.num_vertices()).collect();
    let heart = &run.heart_vertices;
    let table = |fields: &[Vec<f64>], cols: &[usize]| FieldTable::from_nodal(&run.times, fields, cols).to_csv();
    let mut meta = cfg.meta_lines();
    meta.push(format!("run.num_vertices={}", mesh.num_vertices()));
    meta.push(format!("run.num_heart_vertices={}", heart.len()));
    meta.push(format!("run.num_steps={}", run.num_steps()));
    let contents = [
        table(&run.v, heart),
        table(&run.u, &all),
        table(&run.h, heart),
        table(&run.recorded_rhs, heart),
        table(&run.recorded_reaction, heart),
        table(&run.stimulus, heart),
        write_mesh(mesh),
        cfg.echo(),
        meta.join("\n") + "\n",
    ];
    for (name, text) in RUN_FILES.iter().zip(contents) {
        write_output(&dir.join(name), &text, force)?;
    }
    Ok(())
}

/// A run directory loaded back into memory.
pub struct LoadedRun {
    pub config: RunConfig,
    pub mesh: TriMesh,
    pub run: BidomainRun,
}

pub fn load_run(dir: &Path) -> Result<LoadedRun, DataError> {
    let config = RunConfig::parse(&read_text(&dir.join("config.ini"))?)?;
    let mesh = parse_mesh(&read_text(&dir.join("mesh.txt"))?)?;
    let n = mesh.num_vertices();
    let heart = mesh.heart_vertices();
    let load = |name: &str, cols: &[usize]| -> Result<(Vec<f64>, Vec<Vec<f64>>), DataError> {
        let table = FieldTable::parse(&read_text(&dir.join(name))?, name)?;
        if table.columns != cols {
            return Err(DataError::Inconsistent(format!(
                "{name} columns do not match the mesh"
            )));
        }
        Ok((table.times.clone(), table.to_nodal(n)?))
    };
    let all: Vec<usize> = (0..n).collect();
    let (times, v) = load("fields_v.csv", &heart)?;
    let mut rest = Vec::new();
    for (name, cols) in [
        ("fields_u.csv", &all),
        ("fields_h.csv", &heart),
        ("recorded_rhs.csv", &heart),
        ("recorded_reaction.csv", &heart),
        ("stimulus.csv", &heart),
    ] {
        let (t, f) = load(name, cols)?;
        if t != times {
            return Err(DataError::Inconsistent(format!(
                "{name} has different time stamps than fields_v.csv"
            )));
        }
        rest.push(f);
    }
    let [u, h, recorded_rhs, recorded_reaction, stimulus]: [Vec<Vec<f64>>; 5] =
        rest.try_into().expect("five tables loaded");
    Ok(LoadedRun {
        run: BidomainRun {
            dt: config.dt,
            times,
            v,
            u,
            h,
            recorded_rhs,
            recorded_reaction,
            stimulus,
            heart_vertices: heart,
        },
        config,
        mesh,
    })
}
