//! File formats: Touchstone and CSV traces, geometry configuration,
//! attenuation chains and line-delimited result records.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use fs2::FileExt;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibration::AttenuationChain;
use crate::constants::EPS_SILICON;
use crate::design::{length_for_frequency, solve_gap_for_impedance, AsrGeometry, CpwGeometry, DEFAULT_SHIELD_HEIGHT};
use crate::field::ParticipationReport;
use crate::fit::{ResonanceFit, S21Trace};
use crate::stats::{LogLogFit, LogNormalFit};
use crate::tls::TlsFit;
use crate::{Error, Result};

fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, msg: msg.into() }
}

/// Instrument power stored in a comment as `power_dbm = -20`.
fn power_comment(comment: &str, path: &Path, line: usize) -> Result<Option<f64>> {
    let Some((key, value)) = comment.split_once('=') else { return Ok(None) };
    if !key.trim().eq_ignore_ascii_case("power_dbm") {
        return Ok(None);
    }
    let p = value.trim().parse::<f64>().map_err(|e| parse_err(path, line, format!("bad power_dbm: {e}")))?;
    Ok(Some(p))
}

/// Data format of a Touchstone file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TouchstoneFormat {
    /// Real and imaginary parts.
    Ri,
    /// Linear magnitude and angle in degrees.
    #[default]
    Ma,
    /// Magnitude in dB and angle in degrees.
    Db,
}

impl TouchstoneFormat {
    fn decode(self, a: f64, b: f64) -> Complex64 {
        match self {
            TouchstoneFormat::Ri => Complex64::new(a, b),
            TouchstoneFormat::Ma => Complex64::from_polar(a, b.to_radians()),
            TouchstoneFormat::Db => Complex64::from_polar(10f64.powf(a / 20.0), b.to_radians()),
        }
    }

    fn encode(self, z: Complex64) -> (f64, f64) {
        match self {
            TouchstoneFormat::Ri => (z.re, z.im),
            TouchstoneFormat::Ma => (z.norm(), z.arg().to_degrees()),
            TouchstoneFormat::Db => (20.0 * z.norm().log10(), z.arg().to_degrees()),
        }
    }
}

/// Parse the S21 column of a two-port Touchstone 1.x file.
pub fn parse_touchstone(path: impl AsRef<Path>) -> Result<S21Trace> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    let trace = parse_touchstone_str(&text, path)?;
    let label = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(trace.with_label(label))
}

/// Parse Touchstone text; `path` is used in error messages only. A
/// `! power_dbm = <value>` comment sets the instrument power.
pub fn parse_touchstone_str(text: &str, path: &Path) -> Result<S21Trace> {
    let mut scale = 1e9;
    let mut format = TouchstoneFormat::Ma;
    let mut seen_option = false;
    let mut freqs = Vec::new();
    let mut s21 = Vec::new();
    let mut pending: Vec<f64> = Vec::new();
    let mut record_line = 0;
    let mut power = None;

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let (line, comment) = raw.split_once('!').unwrap_or((raw, ""));
        let line = line.trim();
        if let Some(p) = power_comment(comment, path, lineno)? {
            power = Some(p);
        }
        if line.is_empty() {
            continue;
        }
        if let Some(opts) = line.strip_prefix('#') {
            if seen_option {
                return Err(parse_err(path, lineno, "second option line"));
            }
            seen_option = true;
            let tokens: Vec<String> = opts.split_whitespace().map(|t| t.to_ascii_uppercase()).collect();
            let mut k = 0;
            while k < tokens.len() {
                match tokens[k].as_str() {
                    "HZ" => scale = 1.0,
                    "KHZ" => scale = 1e3,
                    "MHZ" => scale = 1e6,
                    "GHZ" => scale = 1e9,
                    "S" => {}
                    "Y" | "Z" | "H" | "G" => {
                        return Err(parse_err(path, lineno, format!("unsupported parameter {}", tokens[k])))
                    }
                    "RI" => format = TouchstoneFormat::Ri,
                    "MA" => format = TouchstoneFormat::Ma,
                    "DB" => format = TouchstoneFormat::Db,
                    "R" => {
                        k += 1;
                        let ok = tokens.get(k).and_then(|t| t.parse::<f64>().ok()).is_some_and(|r| r > 0.0);
                        if !ok {
                            return Err(parse_err(path, lineno, "option line: R needs a positive value"));
                        }
                    }
                    other => return Err(parse_err(path, lineno, format!("option line: unknown token {other:?}"))),
                }
                k += 1;
            }
            continue;
        }
        let values = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| parse_err(path, lineno, format!("bad number: {e}")))?;
        if pending.is_empty() {
            record_line = lineno;
        }
        pending.extend(values);
        if pending.len() > 9 {
            return Err(parse_err(
                path,
                lineno,
                format!("expected 9 values per two-port record, found {}", pending.len()),
            ));
        }
        if pending.len() == 9 {
            freqs.push(pending[0] * scale);
            s21.push(format.decode(pending[3], pending[4]));
            pending.clear();
        }
    }
    if !pending.is_empty() {
        return Err(parse_err(path, record_line, format!("truncated record: {} of 9 values", pending.len())));
    }
    if freqs.is_empty() {
        return Err(parse_err(path, text.lines().count().max(1), "no data records"));
    }
    let trace = S21Trace::new(freqs, s21).map_err(|e| parse_err(path, record_line, e.to_string()))?;
    Ok(match power {
        Some(p) => trace.with_power(p),
        None => trace,
    })
}

/// Write a trace as a two-port Touchstone file in Hz (S11 = S22 = 0,
/// S12 = S21).
pub fn write_touchstone<W: Write>(trace: &S21Trace, format: TouchstoneFormat, mut out: W) -> std::io::Result<()> {
    let tag = match format {
        TouchstoneFormat::Ri => "RI",
        TouchstoneFormat::Ma => "MA",
        TouchstoneFormat::Db => "DB",
    };
    writeln!(out, "! {}", if trace.label.is_empty() { "S21 trace" } else { &trace.label })?;
    if let Some(p) = trace.power_dbm {
        writeln!(out, "! power_dbm = {p}")?;
    }
    writeln!(out, "# HZ S {tag} R 50")?;
    let zero = format.encode(Complex64::new(0.0, 0.0));
    let zero = if format == TouchstoneFormat::Db { (-400.0, 0.0) } else { zero };
    for (f, z) in trace.freqs.iter().zip(&trace.s21) {
        let (a, b) = format.encode(*z);
        writeln!(
            out,
            "{f:.17e} {:.17e} {:.17e} {a:.17e} {b:.17e} {a:.17e} {b:.17e} {:.17e} {:.17e}",
            zero.0, zero.1, zero.0, zero.1
        )?;
    }
    Ok(())
}

/// Read a `freq_hz, re, im` CSV; a header row and `#` comments are allowed.
/// A `# power_dbm = <value>` comment sets the instrument power.
pub fn read_csv_trace(path: impl AsRef<Path>) -> Result<S21Trace> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    let mut freqs = Vec::new();
    let mut s21 = Vec::new();
    let mut last = 0;
    let mut power = None;
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(p) = power_comment(comment, path, lineno)? {
                power = Some(p);
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if freqs.is_empty() && cols.first().is_some_and(|c| c.parse::<f64>().is_err()) {
            continue;
        }
        if cols.len() != 3 {
            return Err(parse_err(path, lineno, format!("expected 3 columns, found {}", cols.len())));
        }
        let v = cols
            .iter()
            .map(|c| c.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| parse_err(path, lineno, format!("bad number: {e}")))?;
        freqs.push(v[0]);
        s21.push(Complex64::new(v[1], v[2]));
        last = lineno;
    }
    if freqs.is_empty() {
        return Err(parse_err(path, 1, "no data rows"));
    }
    let label = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let trace = S21Trace::new(freqs, s21).map_err(|e| parse_err(path, last, e.to_string()))?.with_label(label);
    Ok(match power {
        Some(p) => trace.with_power(p),
        None => trace,
    })
}

pub fn write_csv_trace<W: Write>(trace: &S21Trace, mut out: W) -> std::io::Result<()> {
    if let Some(p) = trace.power_dbm {
        writeln!(out, "# power_dbm = {p}")?;
    }
    writeln!(out, "freq_hz,re,im")?;
    for (f, z) in trace.freqs.iter().zip(&trace.s21) {
        writeln!(out, "{f:.17e},{:.17e},{:.17e}", z.re, z.im)?;
    }
    Ok(())
}

/// Read a trace, choosing the format from the extension (`.s2p` is
/// Touchstone, anything else CSV).
pub fn read_trace(path: impl AsRef<Path>) -> Result<S21Trace> {
    let path = path.as_ref();
    let touchstone = path.extension().is_some_and(|e| e.to_string_lossy().eq_ignore_ascii_case("s2p"));
    if touchstone {
        parse_touchstone(path)
    } else {
        read_csv_trace(path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResonatorKind {
    Cpw,
    Asr,
}

/// One resonator of a geometry file. Lengths in µm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryEntry {
    pub kind: ResonatorKind,
    pub name: Option<String>,
    pub w_um: f64,
    pub gap_um: Option<f64>,
    pub pitch_um: Option<f64>,
    pub h_um: Option<f64>,
    pub length_um: Option<f64>,
    pub turns: Option<u32>,
    pub r_in_um: Option<f64>,
    pub eps_sub: Option<f64>,
    /// CPW: solve the length for this frequency.
    pub f_target_ghz: Option<f64>,
    /// CPW: solve the gap for this impedance.
    pub z_target_ohm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Geometry {
    Cpw(CpwGeometry),
    Asr(AsrGeometry),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedGeometry {
    pub name: String,
    pub geometry: Geometry,
}

impl GeometryEntry {
    pub fn resolve(&self, index: usize) -> Result<NamedGeometry> {
        let um = 1e-6;
        let name = self.name.clone().unwrap_or_else(|| format!("resonator{}", index + 1));
        let eps = self.eps_sub.unwrap_or(EPS_SILICON);
        let geometry = match self.kind {
            ResonatorKind::Cpw => {
                let w = self.w_um * um;
                let h = self.h_um.map_or(DEFAULT_SHIELD_HEIGHT, |v| v * um);
                let gap = match (self.gap_um, self.z_target_ohm) {
                    (Some(g), _) => g * um,
                    (None, Some(z)) => solve_gap_for_impedance(w, h, eps, z)?,
                    (None, None) => return Err(Error::invalid(format!("{name}: CPW needs gap_um or z_target_ohm"))),
                };
                let g = match (self.length_um, self.f_target_ghz) {
                    (Some(l), _) => CpwGeometry::from_gap(w, gap, h, l * um, eps)?,
                    (None, Some(f)) => {
                        let probe = CpwGeometry::from_gap(w, gap, h, 1.0, eps)?;
                        probe.with_length(length_for_frequency(&probe, f * 1e9)?)
                    }
                    (None, None) => return Err(Error::invalid(format!("{name}: CPW needs length_um or f_target_ghz"))),
                };
                Geometry::Cpw(g)
            }
            ResonatorKind::Asr => {
                let p = self.pitch_um.ok_or_else(|| Error::invalid(format!("{name}: ASR needs pitch_um")))?;
                let n = self.turns.ok_or_else(|| Error::invalid(format!("{name}: ASR needs turns")))?;
                Geometry::Asr(AsrGeometry::new(self.w_um * um, p * um, n, self.r_in_um.unwrap_or(0.0) * um, eps)?)
            }
        };
        Ok(NamedGeometry { name, geometry })
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum GeometryFile {
    Many { resonator: Vec<GeometryEntry> },
    One(GeometryEntry),
}

/// Parse a geometry configuration: either the keys of one resonator at top
/// level, or a list of `[[resonator]]` tables.
pub fn parse_geometry_config(text: &str, path: &Path) -> Result<Vec<NamedGeometry>> {
    let file: GeometryFile = toml::from_str(text).map_err(|e| {
        let line = e.span().map_or(1, |s| text[..s.start.min(text.len())].lines().count().max(1));
        parse_err(path, line, e.message().to_string())
    })?;
    let entries = match file {
        GeometryFile::Many { resonator } => resonator,
        GeometryFile::One(e) => vec![e],
    };
    entries.iter().enumerate().map(|(k, e)| e.resolve(k)).collect()
}

pub fn load_geometries(path: impl AsRef<Path>) -> Result<Vec<NamedGeometry>> {
    let path = path.as_ref();
    parse_geometry_config(&read_to_string(path)?, path)
}

/// Read an attenuation chain stored as `[[component]]` tables with `name`,
/// `freqs_hz` and `atten_db`.
pub fn load_chain(path: impl AsRef<Path>) -> Result<AttenuationChain> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    let chain: AttenuationChain = toml::from_str(&text).map_err(|e| parse_err(path, 1, e.message().to_string()))?;
    AttenuationChain::new(chain.components).map_err(|e| parse_err(path, 1, e.to_string()))
}

pub fn chain_to_string(chain: &AttenuationChain) -> Result<String> {
    toml::to_string(chain).map_err(|e| Error::invalid(e.to_string()))
}

/// Hash of one input file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub inputs: Vec<InputHash>,
    pub version: String,
    pub timestamp_unix: u64,
}

impl Provenance {
    /// Hash every input file and stamp the current time.
    pub fn for_inputs<P: AsRef<Path>>(inputs: &[P]) -> Result<Self> {
        let inputs = inputs
            .iter()
            .map(|p| Ok(InputHash { path: p.as_ref().display().to_string(), sha256: sha256_file(p.as_ref())? }))
            .collect::<Result<Vec<_>>>()?;
        let timestamp_unix = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        Ok(Self { inputs, version: env!("CARGO_PKG_VERSION").to_string(), timestamp_unix })
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Analytic design figures of one resonator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSummary {
    pub name: String,
    pub geometry: Geometry,
    pub frequency_hz: f64,
    pub impedance_ohm: f64,
    pub eps_eff: f64,
    pub inductance_h: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipationRecord {
    pub name: String,
    pub report: ParticipationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub components: Vec<String>,
    pub freqs_hz: Vec<f64>,
    pub total_db: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotonRecord {
    pub p_in_dbm: f64,
    pub f_hz: f64,
    pub qc: f64,
    pub qi: f64,
    pub n_avg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluctuationSummary {
    pub lognormal: LogNormalFit,
    pub jumps: Vec<usize>,
}

/// Payload of a result record, tagged by kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum RecordPayload {
    Design(DesignSummary),
    Participation(ParticipationRecord),
    ResonanceFit(ResonanceFit),
    TlsFit(TlsFit),
    Photons(PhotonRecord),
    Chain(ChainSummary),
    Fluctuation(FluctuationSummary),
    Regression(LogLogFit),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsRecord {
    #[serde(flatten)]
    pub payload: RecordPayload,
    pub provenance: Provenance,
}

impl ResultsRecord {
    pub fn new(payload: RecordPayload, provenance: Provenance) -> Self {
        Self { payload, provenance }
    }

    pub fn to_line(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::invalid(e.to_string()))
    }
}

/// Append records, one JSON object per line, holding an exclusive lock on
/// the file for the duration of the write.
pub fn append_records(path: impl AsRef<Path>, records: &[ResultsRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for r in records {
        text.push_str(&r.to_line()?);
        text.push('\n');
    }
    let mut file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
    file.lock_exclusive().map_err(|e| Error::io(path, e))?;
    let written = file.write_all(text.as_bytes()).and_then(|_| file.flush());
    let unlocked = FileExt::unlock(&file);
    written.map_err(|e| Error::io(path, e))?;
    unlocked.map_err(|e| Error::io(path, e))
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<ResultsRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| parse_err(path, idx + 1, e.to_string()))?);
    }
    Ok(out)
}

/// Write `contents` to `path` through a temporary file and rename, so a
/// failed write leaves no partial output.
pub fn write_atomic(path: impl AsRef<Path>, contents: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let tmp: PathBuf = {
        let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".tmp");
        path.with_file_name(name)
    };
    std::fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
