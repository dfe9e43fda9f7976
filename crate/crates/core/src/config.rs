//! Sectioned `key = value` run configuration.
//!
//! ```text
//! [mesh]          r_heart r_torso n_rings n_sectors file
//! [conductivity]  sigma_i sigma_e sigma_t
//! [ionic]         tau_in tau_out tau_open tau_close v_gate fit_points
//! [time]          dt t_end
//! [stimulus]      center_x center_y radius amplitude t0 half_width
//! [front]         front epsilon ms0d_dt ms0d_t_end
//! [solver]        tol bidomain_tol max_iter_factor enforce_compat
//! ```
//!
//! Every key is optional; `#` starts a comment. [`RunConfig::echo`] writes
//! every value, defaults included, in a form that parses back to the same
//! configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::bidomain::{BidomainConfig, StimulusSite};
use crate::fronts::{FrontError, FrontShape};
use crate::io::format_float;
use crate::ionic::{solve_ms_0d, IonicError, MsParams, SmoothPulse};
use crate::mesh::{generate_disk_in_disk, load_mesh, MeshError, TriMesh};
use crate::operators::{ConductivityMap, SolverOptions};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown section [{section}]")]
    UnknownSection { line: usize, section: String },
    #[error("line {line}: unknown key {key:?} in [{section}]")]
    UnknownKey {
        line: usize,
        section: String,
        key: String,
    },
    #[error("line {line}: [{section}] {key} appears twice")]
    DuplicateKey {
        line: usize,
        section: String,
        key: String,
    },
    #[error("line {line}: [{section}] {key}: cannot parse {value:?} as {expected}")]
    Type {
        line: usize,
        section: String,
        key: String,
        value: String,
        expected: &'static str,
    },
    #[error("{}[{section}] {key}: {message}", line.map_or_else(String::new, |l| format!("line {l}: ")))]
    Constraint {
        line: Option<usize>,
        section: String,
        key: String,
        message: String,
    },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeshSource {
    Generated {
        r_heart: f64,
        r_torso: f64,
        n_rings: usize,
        n_sectors: usize,
    },
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrontKind {
    Heaviside,
    Ms0d,
}

impl FrontKind {
    pub fn name(self) -> &'static str {
        match self {
            FrontKind::Heaviside => "heaviside",
            FrontKind::Ms0d => "ms0d",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrontSpec {
    pub kind: FrontKind,
    pub epsilon: f64,
    /// step and horizon of the single-cell run behind the MS0D front
    pub ms0d_dt: f64,
    pub ms0d_t_end: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    /// tolerance of the F1/F2 solves
    pub tol: f64,
    /// tolerance of the coupled bidomain solve
    pub bidomain_tol: f64,
    pub max_iter_factor: usize,
    pub enforce_compat: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mesh: MeshSource,
    pub conductivity: ConductivityMap,
    pub ionic: MsParams,
    /// number of vertices sampled for the cubic ionic fit
    pub fit_points: usize,
    pub dt: f64,
    pub t_end: f64,
    pub stimulus: StimulusSite,
    pub front: FrontSpec,
    pub solver: SolverSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mesh: MeshSource::Generated {
                r_heart: 18.0,
                r_torso: 36.0,
                n_rings: 16,
                n_sectors: 96,
            },
            conductivity: ConductivityMap::default(),
            ionic: MsParams::default(),
            fit_points: 20,
            dt: 0.1,
            t_end: 50.0,
            stimulus: StimulusSite {
                center: [-13.0, 0.0],
                radius: 2.5,
                pulse: SmoothPulse::default(),
            },
            front: FrontSpec {
                kind: FrontKind::Heaviside,
                epsilon: 2.5,
                ms0d_dt: 0.01,
                ms0d_t_end: 330.0,
            },
            solver: SolverSettings {
                tol: 1e-13,
                bidomain_tol: 1e-14,
                max_iter_factor: 50,
                enforce_compat: true,
            },
        }
    }
}

const SECTIONS: [(&str, &[&str]); 7] = [
    ("mesh", &["r_heart", "r_torso", "n_rings", "n_sectors", "file"]),
    ("conductivity", &["sigma_i", "sigma_e", "sigma_t"]),
    (
        "ionic",
        &["tau_in", "tau_out", "tau_open", "tau_close", "v_gate", "fit_points"],
    ),
    ("time", &["dt", "t_end"]),
    (
        "stimulus",
        &["center_x", "center_y", "radius", "amplitude", "t0", "half_width"],
    ),
    ("front", &["front", "epsilon", "ms0d_dt", "ms0d_t_end"]),
    (
        "solver",
        &["tol", "bidomain_tol", "max_iter_factor", "enforce_compat"],
    ),
];

struct Entry {
    line: usize,
    section: &'static str,
    key: &'static str,
    value: String,
}

impl Entry {
    fn type_error(&self, expected: &'static str) -> ConfigError {
        ConfigError::Type {
            line: self.line,
            section: self.section.into(),
            key: self.key.into(),
            value: self.value.clone(),
            expected,
        }
    }

    fn f64(&self) -> Result<f64, ConfigError> {
        self.value
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| self.type_error("a finite number"))
    }

    fn usize(&self) -> Result<usize, ConfigError> {
        self.value
            .parse()
            .map_err(|_| self.type_error("a non-negative integer"))
    }

    fn bool(&self) -> Result<bool, ConfigError> {
        match self.value.as_str() {
            "true" | "yes" | "on" | "1" => Ok(true),
            "false" | "no" | "off" | "0" => Ok(false),
            _ => Err(self.type_error("a boolean")),
        }
    }
}

/// Line of each key that was set explicitly, for constraint messages.
#[derive(Default)]
struct Lines(Vec<(&'static str, &'static str, usize)>);

impl Lines {
    fn get(&self, section: &str, key: &str) -> Option<usize> {
        self.0
            .iter()
            .find(|(s, k, _)| *s == section && *k == key)
            .map(|e| e.2)
    }

    fn violation(&self, section: &str, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError::Constraint {
            line: self.get(section, key),
            section: section.into(),
            key: key.into(),
            message: message.into(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut lines = Lines::default();
        let mut section: Option<(&'static str, &'static [&'static str])> = None;
        let mut mesh_file: Option<PathBuf> = None;
        let (mut r_heart, mut r_torso, mut n_rings, mut n_sectors) = match cfg.mesh {
            MeshSource::Generated {
                r_heart,
                r_torso,
                n_rings,
                n_sectors,
            } => (r_heart, r_torso, n_rings, n_sectors),
            MeshSource::File(_) => unreachable!(),
        };

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| ConfigError::Syntax {
                    line,
                    message: format!("malformed section header {content:?}"),
                })?;
                let name = name.trim();
                section = Some(
                    SECTIONS
                        .iter()
                        .find(|(s, _)| *s == name)
                        .copied()
                        .ok_or_else(|| ConfigError::UnknownSection {
                            line,
                            section: name.to_string(),
                        })?,
                );
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                message: format!("expected `key = value`, found {content:?}"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            let (sec, keys) = section.ok_or_else(|| ConfigError::Syntax {
                line,
                message: format!("key {key:?} appears before any section header"),
            })?;
            let key: &'static str = keys.iter().find(|k| **k == key).copied().ok_or_else(|| {
                ConfigError::UnknownKey {
                    line,
                    section: sec.to_string(),
                    key: key.to_string(),
                }
            })?;
            if lines.get(sec, key).is_some() {
                return Err(ConfigError::DuplicateKey {
                    line,
                    section: sec.into(),
                    key: key.into(),
                });
            }
            lines.0.push((sec, key, line));
            let e = Entry {
                line,
                section: sec,
                key,
                value: value.to_string(),
            };
            match (sec, key) {
                ("mesh", "r_heart") => r_heart = e.f64()?,
                ("mesh", "r_torso") => r_torso = e.f64()?,
                ("mesh", "n_rings") => n_rings = e.usize()?,
                ("mesh", "n_sectors") => n_sectors = e.usize()?,
                ("mesh", "file") => {
                    if value.is_empty() {
                        return Err(e.type_error("a path"));
                    }
                    mesh_file = Some(PathBuf::from(value));
                }
                ("conductivity", "sigma_i") => cfg.conductivity.sigma_i = e.f64()?,
                ("conductivity", "sigma_e") => cfg.conductivity.sigma_e = e.f64()?,
                ("conductivity", "sigma_t") => cfg.conductivity.sigma_t = e.f64()?,
                ("ionic", "tau_in") => cfg.ionic.tau_in = e.f64()?,
                ("ionic", "tau_out") => cfg.ionic.tau_out = e.f64()?,
                ("ionic", "tau_open") => cfg.ionic.tau_open = e.f64()?,
                ("ionic", "tau_close") => cfg.ionic.tau_close = e.f64()?,
                ("ionic", "v_gate") => cfg.ionic.v_gate = e.f64()?,
                ("ionic", "fit_points") => cfg.fit_points = e.usize()?,
                ("time", "dt") => cfg.dt = e.f64()?,
                ("time", "t_end") => cfg.t_end = e.f64()?,
                ("stimulus", "center_x") => cfg.stimulus.center[0] = e.f64()?,
                ("stimulus", "center_y") => cfg.stimulus.center[1] = e.f64()?,
                ("stimulus", "radius") => cfg.stimulus.radius = e.f64()?,
                ("stimulus", "amplitude") => cfg.stimulus.pulse.amplitude = e.f64()?,
                ("stimulus", "t0") => cfg.stimulus.pulse.t0 = e.f64()?,
                ("stimulus", "half_width") => cfg.stimulus.pulse.half_width = e.f64()?,
                ("front", "front") => {
                    cfg.front.kind = match value {
                        "heaviside" => FrontKind::Heaviside,
                        "ms0d" => FrontKind::Ms0d,
                        _ => return Err(e.type_error("`heaviside` or `ms0d`")),
                    }
                }
                ("front", "epsilon") => cfg.front.epsilon = e.f64()?,
                ("front", "ms0d_dt") => cfg.front.ms0d_dt = e.f64()?,
                ("front", "ms0d_t_end") => cfg.front.ms0d_t_end = e.f64()?,
                ("solver", "tol") => cfg.solver.tol = e.f64()?,
                ("solver", "bidomain_tol") => cfg.solver.bidomain_tol = e.f64()?,
                ("solver", "max_iter_factor") => cfg.solver.max_iter_factor = e.usize()?,
                ("solver", "enforce_compat") => cfg.solver.enforce_compat = e.bool()?,
                _ => unreachable!("key table and match arms disagree"),
            }
        }

        cfg.mesh = match mesh_file {
            Some(path) => MeshSource::File(path),
            None => MeshSource::Generated {
                r_heart,
                r_torso,
                n_rings,
                n_sectors,
            },
        };
        cfg.check(&lines)?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        RunConfig::parse(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.check(&Lines::default())
    }

    fn check(&self, lines: &Lines) -> Result<(), ConfigError> {
        let positive = |section: &str, key: &str, v: f64| {
            if v > 0.0 {
                Ok(())
            } else {
                Err(lines.violation(section, key, format!("must be > 0, got {v}")))
            }
        };
        if let MeshSource::Generated {
            r_heart,
            r_torso,
            n_rings,
            n_sectors,
        } = self.mesh
        {
            positive("mesh", "r_heart", r_heart)?;
            if !(r_torso > r_heart) {
                return Err(lines.violation(
                    "mesh",
                    "r_torso",
                    format!("must exceed r_heart ({r_heart}), got {r_torso}"),
                ));
            }
            if n_rings < 2 {
                return Err(lines.violation("mesh", "n_rings", "must be at least 2"));
            }
            if n_sectors < 8 {
                return Err(lines.violation("mesh", "n_sectors", "must be at least 8"));
            }
            let c = self.stimulus.center;
            if !(c[0].hypot(c[1]) < r_heart) {
                return Err(lines.violation(
                    "stimulus",
                    "center_x",
                    "stimulus centre must lie inside the heart disk",
                ));
            }
        }
        let cond = self.conductivity;
        if !(cond.sigma_i >= 0.0) {
            return Err(lines.violation("conductivity", "sigma_i", "must be >= 0"));
        }
        positive("conductivity", "sigma_e", cond.sigma_e)?;
        positive("conductivity", "sigma_t", cond.sigma_t)?;
        let p = self.ionic;
        positive("ionic", "tau_in", p.tau_in)?;
        positive("ionic", "tau_out", p.tau_out)?;
        positive("ionic", "tau_open", p.tau_open)?;
        positive("ionic", "tau_close", p.tau_close)?;
        if !(p.v_gate > 0.0 && p.v_gate < 1.0) {
            return Err(lines.violation("ionic", "v_gate", "must lie in (0, 1)"));
        }
        if self.fit_points == 0 {
            return Err(lines.violation("ionic", "fit_points", "must be at least 1"));
        }
        positive("time", "dt", self.dt)?;
        if !(self.t_end >= self.dt) {
            return Err(lines.violation("time", "t_end", "must be at least dt"));
        }
        positive("stimulus", "radius", self.stimulus.radius)?;
        if !(self.stimulus.pulse.amplitude >= 0.0) {
            return Err(lines.violation("stimulus", "amplitude", "must be >= 0"));
        }
        positive("stimulus", "half_width", self.stimulus.pulse.half_width)?;
        if !(self.front.epsilon > 0.0) {
            return Err(lines.violation(
                "front",
                "epsilon",
                format!("front duration must satisfy epsilon > 0, got {}", self.front.epsilon),
            ));
        }
        positive("front", "ms0d_dt", self.front.ms0d_dt)?;
        if !(self.front.ms0d_t_end >= 330.0) {
            return Err(lines.violation(
                "front",
                "ms0d_t_end",
                "must cover the action potential (>= 330)",
            ));
        }
        positive("solver", "tol", self.solver.tol)?;
        positive("solver", "bidomain_tol", self.solver.bidomain_tol)?;
        if self.solver.max_iter_factor == 0 {
            return Err(lines.violation("solver", "max_iter_factor", "must be at least 1"));
        }
        Ok(())
    }

    /// Every setting, defaults included. Numbers are written in their
    /// shortest round-trip form so `parse(echo(c)) == c`.
    pub fn echo(&self) -> String {
        let mut sections: Vec<(&str, Vec<(&str, String)>)> = Vec::new();
        sections.push((
            "mesh",
            match &self.mesh {
                MeshSource::Generated {
                    r_heart,
                    r_torso,
                    n_rings,
                    n_sectors,
                } => vec![
                    ("r_heart", format_float(*r_heart)),
                    ("r_torso", format_float(*r_torso)),
                    ("n_rings", n_rings.to_string()),
                    ("n_sectors", n_sectors.to_string()),
                ],
                MeshSource::File(p) => vec![("file", p.display().to_string())],
            },
        ));
        let c = self.conductivity;
        sections.push((
            "conductivity",
            vec![
                ("sigma_i", format_float(c.sigma_i)),
                ("sigma_e", format_float(c.sigma_e)),
                ("sigma_t", format_float(c.sigma_t)),
            ],
        ));
        let p = self.ionic;
        sections.push((
            "ionic",
            vec![
                ("tau_in", format_float(p.tau_in)),
                ("tau_out", format_float(p.tau_out)),
                ("tau_open", format_float(p.tau_open)),
                ("tau_close", format_float(p.tau_close)),
                ("v_gate", format_float(p.v_gate)),
                ("fit_points", self.fit_points.to_string()),
            ],
        ));
        sections.push((
            "time",
            vec![("dt", format_float(self.dt)), ("t_end", format_float(self.t_end))],
        ));
        let s = self.stimulus;
        sections.push((
            "stimulus",
            vec![
                ("center_x", format_float(s.center[0])),
                ("center_y", format_float(s.center[1])),
                ("radius", format_float(s.radius)),
                ("amplitude", format_float(s.pulse.amplitude)),
                ("t0", format_float(s.pulse.t0)),
                ("half_width", format_float(s.pulse.half_width)),
            ],
        ));
        let f = self.front;
        sections.push((
            "front",
            vec![
                ("front", f.kind.name().to_string()),
                ("epsilon", format_float(f.epsilon)),
                ("ms0d_dt", format_float(f.ms0d_dt)),
                ("ms0d_t_end", format_float(f.ms0d_t_end)),
            ],
        ));
        let so = self.solver;
        sections.push((
            "solver",
            vec![
                ("tol", format_float(so.tol)),
                ("bidomain_tol", format_float(so.bidomain_tol)),
                ("max_iter_factor", so.max_iter_factor.to_string()),
                ("enforce_compat", so.enforce_compat.to_string()),
            ],
        ));
        let mut text = String::new();
        for (i, (name, entries)) in sections.into_iter().enumerate() {
            if i > 0 {
                text.push('\n');
            }
            let _ = writeln!(text, "[{name}]");
            for (k, v) in entries {
                let _ = writeln!(text, "{k} = {v}");
            }
        }
        text
    }

    /// Flat `section.key=value` lines for run metadata files.
    pub fn meta_lines(&self) -> Vec<String> {
        let mut section = "";
        let mut lines = Vec::new();
        for l in self.echo().lines() {
            if let Some(name) = l.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
                section = match SECTIONS.iter().find(|(s, _)| *s == name) {
                    Some((s, _)) => s,
                    None => "",
                };
            } else if let Some((k, v)) = l.split_once(" = ") {
                lines.push(format!("{section}.{k}={v}"));
            }
        }
        lines
    }

    pub fn build_mesh(&self) -> Result<TriMesh, MeshError> {
        match &self.mesh {
            MeshSource::Generated {
                r_heart,
                r_torso,
                n_rings,
                n_sectors,
            } => generate_disk_in_disk(*r_heart, *r_torso, *n_rings, *n_sectors),
            MeshSource::File(p) => load_mesh(p),
        }
    }

    pub fn bidomain(&self) -> BidomainConfig {
        BidomainConfig {
            conductivity: self.conductivity,
            ionic: self.ionic,
            dt: self.dt,
            t_end: self.t_end,
            stimulus: self.stimulus,
            solver: SolverOptions {
                tol: self.solver.bidomain_tol,
                max_iter_factor: self.solver.max_iter_factor,
                enforce_compat: self.solver.enforce_compat,
            },
        }
    }

    /// Options for the F1/F2 solves.
    pub fn formulation_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.solver.tol,
            max_iter_factor: self.solver.max_iter_factor,
            enforce_compat: self.solver.enforce_compat,
        }
    }

    /// The configured front; the MS0D variant integrates the single-cell
    /// model with the configured stimulus pulse.
    pub fn front_shape(&self) -> Result<FrontShape, FrontSetupError> {
        match self.front.kind {
            FrontKind::Heaviside => Ok(FrontShape::heaviside(self.front.epsilon)?),
            FrontKind::Ms0d => Ok(FrontShape::ms0d(&self.ms0d_trace()?)?),
        }
    }

    pub fn ms0d_trace(&self) -> Result<crate::ionic::Ms0dTrace, IonicError> {
        solve_ms_0d(
            &self.ionic,
            &self.stimulus.pulse,
            self.front.ms0d_dt,
            self.front.ms0d_t_end,
        )
    }
}

#[derive(Debug, Error)]
pub enum FrontSetupError {
    #[error(transparent)]
    Front(#[from] FrontError),
    #[error(transparent)]
    Ionic(#[from] IonicError),
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_sections_give_defaults() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
        assert_eq!(RunConfig::parse("[mesh]\n").unwrap(), RunConfig::default());
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn overrides_and_comments() {
        let cfg = RunConfig::parse(
            "# demo\n[time]\ndt = 0.05  # finer\n[front]\nfront = ms0d\n[solver]\nenforce_compat = false\n",
        )
        .unwrap();
        assert_eq!(cfg.dt, 0.05);
        assert_eq!(cfg.front.kind, FrontKind::Ms0d);
        assert!(!cfg.solver.enforce_compat);
    }

    #[test]
    fn negative_epsilon_names_the_constraint() {
        let err = RunConfig::parse("[front]\nepsilon = -1\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("epsilon > 0"), "{msg}");
        assert!(msg.contains("line 2") && msg.contains("[front]"), "{msg}");
    }

    #[test]
    fn errors_carry_section_key_and_line() {
        let err = RunConfig::parse("[time]\n\nfoo = 1\n").unwrap_err();
        assert!(matches!(err, ConfigError::UnknownKey { line: 3, ref section, ref key } if section == "time" && key == "foo"));
        let err = RunConfig::parse("[timing]\n").unwrap_err();
        assert!(matches!(err, ConfigError::UnknownSection { line: 1, .. }));
        let err = RunConfig::parse("[mesh]\nn_rings = 2.5\n").unwrap_err();
        assert!(matches!(err, ConfigError::Type { line: 2, .. }));
        let err = RunConfig::parse("dt = 1\n").unwrap_err();
        assert!(matches!(err, ConfigError::Syntax { line: 1, .. }));
        let err = RunConfig::parse("[time]\ndt = 1\ndt = 2\n").unwrap_err();
        assert!(matches!(err, ConfigError::DuplicateKey { line: 3, .. }));
        let err = RunConfig::parse("[stimulus]\ncenter_x = 40\n").unwrap_err();
        assert!(matches!(err, ConfigError::Constraint { .. }));
    }

    #[test]
    fn echo_round_trips_defaults_and_file_meshes() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::parse(&cfg.echo()).unwrap(), cfg);
        let cfg = RunConfig {
            mesh: MeshSource::File("meshes/slice.mesh".into()),
            ..RunConfig::default()
        };
        assert_eq!(RunConfig::parse(&cfg.echo()).unwrap(), cfg);
        assert!(cfg.meta_lines().contains(&"time.dt=0.1".to_string()));
    }

    proptest! {
        #[test]
        fn echo_round_trips(dt in 1e-4f64..1.0, eps in 1e-3f64..10.0, tol in 1e-16f64..1e-6,
                            sx in -5.0f64..5.0, amp in 0.0f64..3.0, rings in 2usize..40) {
            let mut cfg = RunConfig::default();
            cfg.dt = dt;
            cfg.t_end = dt * 100.0;
            cfg.front.epsilon = eps;
            cfg.solver.tol = tol;
            cfg.stimulus.center[0] = sx;
            cfg.stimulus.pulse.amplitude = amp;
            if let MeshSource::Generated { n_rings, .. } = &mut cfg.mesh {
                *n_rings = rings;
            }
            prop_assert_eq!(RunConfig::parse(&cfg.echo()).unwrap(), cfg);
        }
    }
}
