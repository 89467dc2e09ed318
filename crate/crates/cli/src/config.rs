//! Experiment configuration: TOML file, environment overrides, validation.

use std::fmt;
use std::path::PathBuf;

use albedo_lab::coefficients::{phantom, phantom_pair};
use albedo_lab::geometry::Domain;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Environment variables with this prefix override configuration keys;
/// `__` separates table levels, so `ALBEDO_TIME__T_MAX=6` sets `time.t_max`.
pub const ENV_PREFIX: &str = "ALBEDO_";

pub const EXPERIMENTS: [&str; 6] = [
    "forward",
    "ballistic-sigma",
    "scatter-k",
    "stability-thm31",
    "stability-thm32",
    "multiple-scatter",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub phantom: String,
    pub pair: String,
    pub seed: u64,
    pub out: PathBuf,
    pub domain: Domain,
    pub time: TimeSection,
    pub grid: GridSection,
    pub mollifier: MollifierSection,
    pub kernel: KernelSection,
    pub source: SourceSection,
    pub stability: StabilitySection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: "forward".into(),
            phantom: "gaussian".into(),
            pair: "const-bump".into(),
            seed: 0,
            out: PathBuf::from("out"),
            domain: Domain::UnitDisk,
            time: TimeSection::default(),
            grid: GridSection::default(),
            mollifier: MollifierSection::default(),
            kernel: KernelSection::default(),
            source: SourceSection::default(),
            stability: StabilitySection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeSection {
    pub t_max: f64,
    pub eta: f64,
    pub bins: usize,
}

impl Default for TimeSection {
    fn default() -> Self {
        Self {
            t_max: 5.0,
            eta: 0.25,
            bins: 250,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub boundary: usize,
    pub angle: usize,
    pub window: usize,
    pub order: usize,
    pub sinogram_angles: usize,
    pub sinogram_offsets: usize,
    pub reconstruction: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            boundary: 32,
            angle: 16,
            window: 12,
            order: 2,
            sinogram_angles: 128,
            sinogram_offsets: 129,
            reconstruction: 128,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MollifierSection {
    pub eps1: f64,
    pub eps2: f64,
    /// Decreasing widths for measured line integrals; empty means analytic line integrals.
    pub ladder: Vec<f64>,
}

impl Default for MollifierSection {
    fn default() -> Self {
        Self {
            eps1: 0.05,
            eps2: 0.05,
            ladder: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelSection {
    pub p: f64,
    pub beta_samples: usize,
}

impl Default for KernelSection {
    fn default() -> Self {
        Self {
            p: 1.2,
            beta_samples: 16,
        }
    }
}

/// Centre of the probing source: boundary parameter and angle from the inward normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceSection {
    pub theta: f64,
    pub psi: f64,
}

impl Default for SourceSection {
    fn default() -> Self {
        Self {
            theta: std::f64::consts::PI,
            psi: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilitySection {
    pub entries: usize,
    pub probes: usize,
    /// Multiplicative perturbations of the Gaussian amplitudes.
    pub ladder: Vec<f64>,
    pub s: f64,
    pub r: f64,
    pub sobolev_grid: usize,
    pub tail_rungs: usize,
}

impl Default for StabilitySection {
    fn default() -> Self {
        Self {
            entries: 100,
            probes: 3,
            ladder: vec![0.2, 0.1, 0.05, 0.025],
            s: -0.5,
            r: 0.0,
            sobolev_grid: 128,
            tail_rungs: 5,
        }
    }
}

/// Every validation failure found, in the order checked.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "invalid configuration ({} problem{}):",
            self.0.len(),
            if self.0.len() == 1 { "" } else { "s" }
        )?;
        for e in &self.0 {
            writeln!(f, "  - {e}")?;
        }
        Ok(())
    }
}

pub const MIN_TIME_BINS: usize = 16;
pub const MIN_BOUNDARY: usize = 8;
pub const MIN_ANGLE: usize = 4;
pub const MIN_WINDOW: usize = 2;
pub const MIN_SINOGRAM_ANGLES: usize = 32;
pub const MIN_SINOGRAM_OFFSETS: usize = 16;
pub const MIN_RECONSTRUCTION: usize = 16;
pub const MIN_SOBOLEV_GRID: usize = 32;

/// Parses TOML text, then applies `overrides` as `(dotted.key, value)` pairs.
pub fn load(text: &str, overrides: &[(String, String)]) -> Result<ExperimentConfig, ConfigErrors> {
    let mut table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigErrors(vec![e.to_string()]))?;
    let mut errors = Vec::new();
    for (key, value) in overrides {
        if let Err(e) = apply_override(&mut table, key, value) {
            errors.push(e);
        }
    }
    if !errors.is_empty() {
        return Err(ConfigErrors(errors));
    }
    toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| ConfigErrors(vec![e.to_string()]))
}

/// `ALBEDO_GRID__BOUNDARY` → `grid.boundary`.
pub fn env_overrides(vars: impl Iterator<Item = (String, String)>) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = vars
        .filter_map(|(k, v)| {
            k.strip_prefix(ENV_PREFIX)
                .filter(|rest| !rest.is_empty())
                .map(|rest| (rest.to_lowercase().replace("__", "."), v))
        })
        .collect();
    out.sort();
    out
}

fn apply_override(table: &mut toml::Table, key: &str, raw: &str) -> Result<(), String> {
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts
        .pop()
        .ok_or_else(|| format!("empty override key {key:?}"))?;
    let mut current = table;
    for part in parts {
        current = current
            .entry(part)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| format!("override {key}: {part} is not a table"))?;
    }
    current.insert(last.to_string(), value);
    Ok(())
}

impl ExperimentConfig {
    /// Short content hash over everything except the output directory.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.out = PathBuf::new();
        let bytes = serde_json::to_vec(&canonical).expect("configuration serializes");
        hex::encode(&Sha256::digest(&bytes)[..8])
    }

    pub fn needs_pair(&self) -> bool {
        self.experiment.starts_with("stability-")
    }

    /// Checks everything and reports all failures at once.
    pub fn validate(&self) -> Result<(), ConfigErrors> {
        let mut e = Vec::new();
        if !EXPERIMENTS.contains(&self.experiment.as_str()) {
            e.push(format!(
                "unknown experiment {:?}; expected one of {}",
                self.experiment,
                EXPERIMENTS.join(", ")
            ));
        }
        if let Err(err) = self.domain.validate() {
            e.push(format!("domain: {err}"));
        } else if self.domain.dimension() != 2 {
            e.push("domain: experiments run on planar domains".into());
        }
        let diameter = self.domain.diameter();

        let domains: Vec<Domain> = if self.needs_pair() {
            match phantom_pair(&self.pair) {
                Some(p) => {
                    if self.experiment == "stability-thm32"
                        && (p.first.class_m.is_none() || p.second.class_m.is_none())
                    {
                        e.push(format!(
                            "pair {:?} lacks class-M metadata required by stability-thm32",
                            self.pair
                        ));
                    }
                    vec![p.first.pair.domain, p.second.pair.domain]
                }
                None => {
                    e.push(format!(
                        "unknown phantom pair {:?} (see list-phantoms)",
                        self.pair
                    ));
                    Vec::new()
                }
            }
        } else {
            match phantom(&self.phantom) {
                Some(p) => {
                    if self.experiment == "ballistic-sigma" && !p.pair.sigma_isotropic() {
                        e.push(format!("phantom {:?} has direction-dependent σ, which line integrals cannot recover", self.phantom));
                    }
                    vec![p.pair.domain]
                }
                None => {
                    e.push(format!(
                        "unknown phantom {:?} (see list-phantoms)",
                        self.phantom
                    ));
                    Vec::new()
                }
            }
        };
        if domains.iter().any(|d| *d != self.domain) {
            e.push(format!(
                "the phantom domain differs from the configured domain {:?}",
                self.domain
            ));
        }

        let t = &self.time;
        if !(t.t_max > 0.0 && t.t_max.is_finite()) {
            e.push(format!("time.t_max = {} must be positive", t.t_max));
        }
        if !(t.eta > 0.0 && t.eta < t.t_max) {
            e.push(format!(
                "time.eta = {} must lie in (0, T = {})",
                t.eta, t.t_max
            ));
        }
        match self.experiment.as_str() {
            "ballistic-sigma" if t.t_max <= diameter => e.push(format!(
                "T = {} must exceed diam(X) = {diameter}: ballistic arrivals need T > diam(X)",
                t.t_max
            )),
            "scatter-k" | "stability-thm31" | "stability-thm32" if t.t_max <= 2.0 * diameter => e
                .push(format!(
                    "T = {} must exceed 2·diam(X) = {}: scattering recovery needs T > 2·diam(X)",
                    t.t_max,
                    2.0 * diameter
                )),
            _ => {}
        }
        if t.bins < MIN_TIME_BINS {
            e.push(format!(
                "time.bins = {} is below the minimum {MIN_TIME_BINS}",
                t.bins
            ));
        }

        let g = &self.grid;
        for (name, value, min) in [
            ("grid.boundary", g.boundary, MIN_BOUNDARY),
            ("grid.angle", g.angle, MIN_ANGLE),
            ("grid.window", g.window, MIN_WINDOW),
            (
                "grid.sinogram_angles",
                g.sinogram_angles,
                MIN_SINOGRAM_ANGLES,
            ),
            (
                "grid.sinogram_offsets",
                g.sinogram_offsets,
                MIN_SINOGRAM_OFFSETS,
            ),
            ("grid.reconstruction", g.reconstruction, MIN_RECONSTRUCTION),
            (
                "stability.sobolev_grid",
                self.stability.sobolev_grid,
                MIN_SOBOLEV_GRID,
            ),
            ("stability.entries", self.stability.entries, 1),
            ("stability.tail_rungs", self.stability.tail_rungs, 1),
        ] {
            if value < min {
                e.push(format!("{name} = {value} is below the minimum {min}"));
            }
        }
        if g.order > 2 {
            e.push(format!(
                "grid.order = {} exceeds the two collisions the closed-form solver computes",
                g.order
            ));
        }

        let m = &self.mollifier;
        if !(m.eps1 > 0.0 && m.eps1 < 1.5) {
            e.push(format!("mollifier.eps1 = {} must lie in (0, 1.5)", m.eps1));
        }
        if !(m.eps2 > 0.0) {
            e.push(format!("mollifier.eps2 = {} must be positive", m.eps2));
        }
        if m.ladder.iter().any(|w| !(*w > 0.0 && *w < 1.5))
            || m.ladder.windows(2).any(|w| w[1] >= w[0])
        {
            e.push("mollifier.ladder must be strictly decreasing widths in (0, 1.5)".into());
        }

        let k = &self.kernel;
        let d = self.domain.dimension() as f64;
        if !(k.p >= 1.0 && k.p < (d + 1.0) / d) {
            e.push(format!("kernel.p = {} must lie in [1, (d+1)/d)", k.p));
        }
        if k.beta_samples == 0 {
            e.push("kernel.beta_samples must be positive".into());
        }
        if !(self.source.psi.abs() < 0.5 * std::f64::consts::PI) {
            e.push(format!(
                "source.psi = {} is not an incoming direction",
                self.source.psi
            ));
        }

        let s = &self.stability;
        if s.ladder.len() < 2 || s.ladder.iter().any(|x| !(*x > 0.0)) {
            e.push("stability.ladder needs at least two positive perturbations".into());
        }
        if !(s.s >= -0.5) {
            e.push(format!("stability.s = {} must be at least -1/2", s.s));
        }
        if !(s.r >= 0.0) {
            e.push(format!("stability.r = {} must be nonnegative", s.r));
        }

        if e.is_empty() {
            Ok(())
        } else {
            Err(ConfigErrors(e))
        }
    }
}
