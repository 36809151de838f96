//! Output formats and run configuration.
//!
//! Field files are text: provenance comments, `key = value` metadata, a
//! `data` line, then `ny` rows of `nx` space-separated values (row `iy = 0`
//! first). Case-label grids use the same layout with one character per cell.
//! Every output starts with the tool version, config hash and seed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::{MetricsTable, RocCurve};
use crate::fusion::{CaseLabel, FusionConfig};
use crate::ingest::{format_iso8601, parse_iso8601, GeoAnchor};
use crate::kernel::KernelParams;
use crate::model::{GridSpec, RainField};
use crate::sensor::{EmpiricalIntensityDistribution, WiperSensorModel};

pub const FIELD_SCHEMA: &str = "field/1";
pub const CASES_SCHEMA: &str = "cases/1";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Who wrote a file and under which configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub tool: String,
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new(config_hash: impl Into<String>, seed: u64) -> Self {
        Provenance {
            tool: format!("rainfuse {}", crate::VERSION),
            config_hash: config_hash.into(),
            seed,
        }
    }

    /// `# key = value` comment lines.
    pub fn header(&self) -> String {
        format!(
            "# tool = {}\n# config_hash = {}\n# seed = {}\n",
            self.tool, self.config_hash, self.seed
        )
    }

    /// Read the provenance comments back, if all three are present.
    pub fn from_text(text: &str) -> Option<Provenance> {
        let mut map = BTreeMap::new();
        for line in text.lines().take_while(|l| l.starts_with('#')) {
            if let Some((k, v)) = line[1..].split_once('=') {
                map.insert(k.trim(), v.trim());
            }
        }
        Some(Provenance {
            tool: map.get("tool")?.to_string(),
            config_hash: map.get("config_hash")?.to_string(),
            seed: map.get("seed")?.parse().ok()?,
        })
    }
}

// ---------------------------------------------------------------------------
// field files

#[derive(Debug, Clone, PartialEq)]
pub struct FieldFile {
    pub provenance: Option<Provenance>,
    pub quantity: String,
    pub units: String,
    pub field: RainField,
}

fn grid_lines(s: &mut String, g: &GridSpec) {
    let _ = writeln!(s, "origin_x = {}", g.origin_x);
    let _ = writeln!(s, "origin_y = {}", g.origin_y);
    let _ = writeln!(s, "cell_size = {}", g.cell_size);
    let _ = writeln!(s, "nx = {}", g.nx);
    let _ = writeln!(s, "ny = {}", g.ny);
}

pub fn write_field(prov: &Provenance, quantity: &str, units: &str, field: &RainField) -> String {
    let mut s = format!("# schema: {FIELD_SCHEMA}\n");
    s += &prov.header();
    let _ = writeln!(s, "quantity = {quantity}");
    let _ = writeln!(s, "units = {units}");
    let _ = writeln!(s, "timestamp = {}", format_iso8601(field.timestamp()));
    grid_lines(&mut s, field.grid());
    s += "data\n";
    for row in field.values().chunks(field.grid().nx) {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        s += &cells.join(" ");
        s.push('\n');
    }
    s
}

struct Layout<'a> {
    meta: BTreeMap<String, String>,
    rows: Vec<(usize, &'a str)>,
}

fn split_layout<'a>(text: &'a str, source: &Path, schema: &str) -> Result<Layout<'a>> {
    let mut meta = BTreeMap::new();
    let mut rows = Vec::new();
    let mut in_data = false;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(found) = comment.trim().strip_prefix("schema:") {
                let found = found.trim();
                if found != schema {
                    return Err(Error::SchemaVersion {
                        path: source.to_path_buf(),
                        expected: schema.to_string(),
                        found: found.to_string(),
                    });
                }
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        if in_data {
            rows.push((i + 1, line));
        } else if line == "data" {
            in_data = true;
        } else {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(source, i + 1, "expected key = value"))?;
            meta.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    if !in_data {
        return Err(Error::parse(source, 0, "missing data section"));
    }
    Ok(Layout { meta, rows })
}

impl Layout<'_> {
    fn get(&self, key: &str, source: &Path) -> Result<&str> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::parse(source, 0, format!("missing `{key}`")))
    }

    fn num<T: std::str::FromStr>(&self, key: &str, source: &Path) -> Result<T> {
        self.get(key, source)?
            .parse()
            .map_err(|_| Error::parse(source, 0, format!("bad value for `{key}`")))
    }

    fn grid(&self, source: &Path) -> Result<GridSpec> {
        GridSpec::new(
            self.num("origin_x", source)?,
            self.num("origin_y", source)?,
            self.num("cell_size", source)?,
            self.num("nx", source)?,
            self.num("ny", source)?,
        )
        .map_err(|e| Error::parse(source, 0, e.to_string()))
    }

    fn timestamp(&self, source: &Path) -> Result<f64> {
        parse_iso8601(self.get("timestamp", source)?)
            .ok_or_else(|| Error::parse(source, 0, "bad timestamp"))
    }
}

pub fn read_field(text: &str, source: &Path) -> Result<FieldFile> {
    let layout = split_layout(text, source, FIELD_SCHEMA)?;
    let grid = layout.grid(source)?;
    if layout.rows.len() != grid.ny {
        return Err(Error::parse(
            source,
            layout.rows.last().map_or(0, |r| r.0),
            format!("expected {} data rows, found {}", grid.ny, layout.rows.len()),
        ));
    }
    let mut values = Vec::with_capacity(grid.len());
    for &(line, row) in &layout.rows {
        let before = values.len();
        for tok in row.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::parse(source, line, format!("bad value {tok:?}")))?;
            values.push(v);
        }
        if values.len() - before != grid.nx {
            return Err(Error::parse(source, line, format!("expected {} values", grid.nx)));
        }
    }
    let field = RainField::new(grid, layout.timestamp(source)?, values)
        .map_err(|e| Error::parse(source, 0, e.to_string()))?;
    Ok(FieldFile {
        provenance: Provenance::from_text(text),
        quantity: layout.get("quantity", source)?.to_string(),
        units: layout.get("units", source)?.to_string(),
        field,
    })
}

pub fn load_field(path: &Path) -> Result<FieldFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_field(&text, path)
}

pub fn write_cases(prov: &Provenance, grid: &GridSpec, timestamp: f64, labels: &[CaseLabel]) -> String {
    let mut s = format!("# schema: {CASES_SCHEMA}\n");
    s += &prov.header();
    s += "# R both rain, . both dry, H hole (radar rain removed), A addition (rain radar missed)\n";
    s += "quantity = case_labels\n";
    let _ = writeln!(s, "timestamp = {}", format_iso8601(timestamp));
    grid_lines(&mut s, grid);
    s += "data\n";
    for row in labels.chunks(grid.nx) {
        s.extend(row.iter().map(|l| l.code()));
        s.push('\n');
    }
    s
}

pub fn read_cases(text: &str, source: &Path) -> Result<(GridSpec, f64, Vec<CaseLabel>)> {
    let layout = split_layout(text, source, CASES_SCHEMA)?;
    let grid = layout.grid(source)?;
    let mut labels = Vec::with_capacity(grid.len());
    for &(line, row) in &layout.rows {
        if row.chars().count() != grid.nx {
            return Err(Error::parse(source, line, format!("expected {} labels", grid.nx)));
        }
        for c in row.chars() {
            labels.push(
                CaseLabel::from_code(c)
                    .ok_or_else(|| Error::parse(source, line, format!("unknown label {c:?}")))?,
            );
        }
    }
    if labels.len() != grid.len() {
        return Err(Error::parse(source, 0, format!("expected {} rows", grid.ny)));
    }
    Ok((grid, layout.timestamp(source)?, labels))
}

// ---------------------------------------------------------------------------
// tables

pub fn write_roc(prov: &Provenance, name: &str, curve: &RocCurve) -> String {
    let mut s = prov.header();
    let _ = writeln!(s, "# curve = {name}\n# auc = {}", curve.auc);
    s += "fpr,tpr\n";
    for (f, t) in &curve.points {
        let _ = writeln!(s, "{f},{t}");
    }
    s
}

fn rate_cell(r: Result<f64>) -> String {
    r.map_or_else(|_| "n/a".to_string(), |v| format!("{v:.3}"))
}

/// TPR/TNR per source, one row each.
pub fn write_metrics(prov: &Provenance, table: &MetricsTable) -> String {
    let mut s = prov.header();
    s += "source,tp,fp,tn,fn,unmatched,tpr,tnr\n";
    for (src, score) in &table.rows {
        let c = &score.counts;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            src.name(),
            c.tp,
            c.fp,
            c.tn,
            c.fn_,
            score.unmatched,
            rate_cell(c.tpr()),
            rate_cell(c.tnr())
        );
    }
    s
}

// ---------------------------------------------------------------------------
// manifest

/// `sha256  relative/path` per file, sorted by path, under a provenance header.
pub fn manifest(prov: &Provenance, root: &Path, files: &[PathBuf]) -> Result<String> {
    let mut entries = Vec::with_capacity(files.len());
    for f in files {
        let bytes = std::fs::read(f).map_err(|e| Error::io(f, e))?;
        let rel = f.strip_prefix(root).unwrap_or(f);
        entries.push((rel.to_string_lossy().replace('\\', "/"), sha256_hex(&bytes)));
    }
    entries.sort();
    let mut s = prov.header();
    for (path, hash) in entries {
        let _ = writeln!(s, "{hash}  {path}");
    }
    Ok(s)
}

// ---------------------------------------------------------------------------
// run configuration

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    /// Gridded radar field files, one per bin.
    #[serde(default)]
    pub radar: Vec<PathBuf>,
    /// Radial scans, resampled onto `[grid]`.
    #[serde(default)]
    pub radar_scans: Vec<PathBuf>,
    #[serde(default)]
    pub traces: Vec<PathBuf>,
    #[serde(default)]
    pub gages: Vec<PathBuf>,
    #[serde(default)]
    pub labels: Option<PathBuf>,
    /// Injection histogram table; the bundled one when absent.
    #[serde(default)]
    pub injection: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionSection {
    pub n_particles: usize,
    pub ess_fraction: f64,
    pub prior_epsilon: f64,
    pub prior_cv: f64,
    pub time_bin_width: f64,
    pub evidence_window: f64,
    pub persistence: f64,
    pub roughening: f64,
}

impl Default for FusionSection {
    fn default() -> Self {
        let d = FusionConfig::default();
        FusionSection {
            n_particles: d.n_particles,
            ess_fraction: d.ess_fraction,
            prior_epsilon: d.prior_epsilon,
            prior_cv: d.prior_cv,
            time_bin_width: d.time_bin_width,
            evidence_window: d.evidence_window,
            persistence: d.persistence,
            roughening: d.roughening,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationSection {
    pub gage_radius: f64,
    pub wiper_width: f64,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        EvaluationSection {
            gage_radius: 2000.0,
            wiper_width: 60.0,
        }
    }
}

/// Everything a `fuse` or `evaluate` run needs. Relative input paths are
/// resolved against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default)]
    pub verbosity: u8,
    #[serde(default)]
    pub inputs: Inputs,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub geo: GeoAnchor,
    #[serde(default)]
    pub fusion: FusionSection,
    #[serde(default)]
    pub kernel: KernelParams,
    #[serde(default)]
    pub sensor: WiperSensorModel,
    #[serde(default)]
    pub evaluation: EvaluationSection,
}

impl RunConfig {
    pub fn new(seed: u64) -> Self {
        RunConfig {
            seed,
            verbosity: 0,
            inputs: Inputs::default(),
            grid: None,
            geo: GeoAnchor::default(),
            fusion: FusionSection::default(),
            kernel: KernelParams::default(),
            sensor: WiperSensorModel::default(),
            evaluation: EvaluationSection::default(),
        }
    }

    pub fn parse(text: &str, source: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].lines().count().max(1))
                .unwrap_or(0);
            Error::parse(source, line, e.message().to_string())
        })
    }

    /// Parse and resolve relative input paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text, path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.inputs.rebase(base);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hash of the resolved configuration with input paths reduced to file
    /// names, so relocating a run directory does not change it.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.inputs.strip_dirs();
        c.verbosity = 0;
        sha256_hex(c.to_toml().as_bytes())[..16].to_string()
    }

    pub fn provenance(&self) -> Provenance {
        Provenance::new(self.hash(), self.seed)
    }

    pub fn injection(&self) -> Result<EmpiricalIntensityDistribution> {
        match &self.inputs.injection {
            None => Ok(EmpiricalIntensityDistribution::bundled()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                EmpiricalIntensityDistribution::parse(&text, p)
            }
        }
    }

    pub fn fusion_config(&self) -> Result<FusionConfig> {
        let f = &self.fusion;
        let cfg = FusionConfig {
            kernel: self.kernel,
            sensor: self.sensor,
            injection: self.injection()?,
            n_particles: f.n_particles,
            ess_fraction: f.ess_fraction,
            prior_epsilon: f.prior_epsilon,
            prior_cv: f.prior_cv,
            time_bin_width: f.time_bin_width,
            evidence_window: f.evidence_window,
            persistence: f.persistence,
            roughening: f.roughening,
            global_seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Every referenced input file must exist.
    pub fn check_inputs(&self) -> Result<()> {
        for p in self.inputs.all() {
            if !p.is_file() {
                return Err(Error::io(
                    p,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "input file not found"),
                ));
            }
        }
        Ok(())
    }
}

impl Inputs {
    fn all(&self) -> Vec<&PathBuf> {
        self.radar
            .iter()
            .chain(&self.radar_scans)
            .chain(&self.traces)
            .chain(&self.gages)
            .chain(&self.labels)
            .chain(&self.injection)
            .collect()
    }

    fn map(&mut self, f: impl Fn(&Path) -> PathBuf) {
        for v in [&mut self.radar, &mut self.radar_scans, &mut self.traces, &mut self.gages] {
            for p in v.iter_mut() {
                *p = f(p);
            }
        }
        for p in [&mut self.labels, &mut self.injection].into_iter().flatten() {
            *p = f(p);
        }
    }

    fn rebase(&mut self, base: &Path) {
        self.map(|p| if p.is_absolute() { p.to_path_buf() } else { base.join(p) });
    }

    fn strip_dirs(&mut self) {
        self.map(|p| p.file_name().map(PathBuf::from).unwrap_or_default());
    }
}
