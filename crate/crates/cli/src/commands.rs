use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use resokit::calibration::{
    component_from_difference, dbm_to_watts, photon_number, synthetic_paper_chain, AttenuationChain,
    DEFAULT_MEDIAN_WINDOW, PUBLISHED_TOTALS,
};
use resokit::design::{
    asr_eps_eff, asr_frequency, asr_impedance, asr_inductance, cpw_eps_eff, cpw_frequency, cpw_impedance, CoilConstants,
};
use resokit::field::{
    build_mesh, participation_report, DomainOptions, LossyLayerSpec, MeshOptions, ReportOptions, SolverDomain,
};
use resokit::fit::{fit_resonance, harmonic_mean, sweep_around, synthesize_trace, NotchParams};
use resokit::io::{
    append_records, chain_to_string, load_chain, load_geometries, read_records, read_trace, write_atomic,
    write_csv_trace, write_touchstone, ChainSummary, DesignSummary, FluctuationSummary, Geometry, NamedGeometry,
    ParticipationRecord, PhotonRecord, Provenance, RecordPayload, ResultsRecord, TouchstoneFormat,
};
use resokit::stats::{
    detect_jumps, fit_lognormal, histogram, loglog_regression, weighted_loglog_regression, LossTimeSeries,
};
use resokit::tls::{fit_tls_with, log_spaced, Parameterization, PowerSweepPoint, TlsOptions};
use resokit::{Error, Result};

use crate::{Format, Global};

/// Everything a command produces, emitted only after the command succeeded.
#[derive(Default)]
pub struct Output {
    pub text: String,
    pub records: Vec<ResultsRecord>,
    /// Files written into the output directory.
    pub files: Vec<(String, Vec<u8>)>,
    pub status: u8,
}

impl Output {
    pub fn emit(self, g: &Global) -> Result<u8> {
        if let Some(dir) = &g.out {
            std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
            for (name, bytes) in &self.files {
                write_atomic(dir.join(name), bytes)?;
            }
            if !self.records.is_empty() {
                append_records(dir.join("results.jsonl"), &self.records)?;
            }
        }
        match g.format {
            Format::Text => print!("{}", self.text),
            Format::Records => {
                for r in &self.records {
                    println!("{}", r.to_line()?);
                }
            }
        }
        Ok(self.status)
    }
}

pub fn tolerance(g: &Global, key: &str, default: f64) -> f64 {
    g.tolerance.iter().rev().find(|(k, _)| k == key).map_or(default, |(_, v)| *v)
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
        })
    }
}

fn config_geometries(g: &Global) -> Result<(Vec<NamedGeometry>, PathBuf)> {
    let path = g.config.clone().ok_or_else(|| Error::InvalidInput("--config <geometry file> is required".into()))?;
    require_file(&path)?;
    Ok((load_geometries(&path)?, path))
}

pub fn design_summary(named: &NamedGeometry) -> Result<DesignSummary> {
    let consts = CoilConstants::default();
    let (frequency_hz, impedance_ohm, eps_eff, inductance_h) = match &named.geometry {
        Geometry::Cpw(c) => (cpw_frequency(c)?, cpw_impedance(c)?, cpw_eps_eff(c)?, None),
        Geometry::Asr(a) => {
            (asr_frequency(a, &consts)?, asr_impedance(a, &consts)?, asr_eps_eff(a), Some(asr_inductance(a, &consts)?))
        }
    };
    Ok(DesignSummary {
        name: named.name.clone(),
        geometry: named.geometry.clone(),
        frequency_hz,
        impedance_ohm,
        eps_eff,
        inductance_h,
    })
}

pub fn design(g: &Global) -> Result<Output> {
    let (geoms, path) = config_geometries(g)?;
    let prov = Provenance::for_inputs(&[&path])?;
    let mut out = Output::default();
    writeln!(
        out.text,
        "{:<10} {:<4} {:>9} {:>9} {:>8} {:>9} {:>9} {:>10}",
        "name", "kind", "f/GHz", "Z/ohm", "eps_eff", "L/nH", "gap/um", "length/um"
    )
    .unwrap();
    for named in &geoms {
        let s = design_summary(named)?;
        let (kind, gap, length) = match &named.geometry {
            Geometry::Cpw(c) => ("cpw", format!("{:.3}", c.gap() * 1e6), format!("{:.1}", c.length * 1e6)),
            Geometry::Asr(_) => ("asr", "-".into(), "-".into()),
        };
        let l = s.inductance_h.map_or("-".into(), |l| format!("{:.3}", l * 1e9));
        writeln!(
            out.text,
            "{:<10} {:<4} {:>9.4} {:>9.2} {:>8.4} {:>9} {:>9} {:>10}",
            s.name,
            kind,
            s.frequency_hz / 1e9,
            s.impedance_ohm,
            s.eps_eff,
            l,
            gap,
            length
        )
        .unwrap();
        out.records.push(ResultsRecord::new(RecordPayload::Design(s), prov.clone()));
    }
    Ok(out)
}

#[derive(Args, Debug)]
pub struct PrArgs {
    /// Starting refinement level.
    #[arg(long, default_value_t = 0)]
    pub refine: u32,
    /// Extra refinement levels tried before the convergence gate fails.
    #[arg(long, default_value_t = 2)]
    pub max_levels: u32,
    /// Write the base mesh of each resonator to `<out>/<name>.mesh.txt`.
    #[arg(long)]
    pub dump_mesh: bool,
}

pub fn solver_domain(geometry: &Geometry, opts: &DomainOptions) -> Result<SolverDomain> {
    match geometry {
        Geometry::Cpw(c) => SolverDomain::cpw(c, opts),
        Geometry::Asr(a) => SolverDomain::asr(a, 1.0, opts),
    }
}

pub fn pr(g: &Global, a: &PrArgs) -> Result<Output> {
    let (geoms, path) = config_geometries(g)?;
    if a.dump_mesh && g.out.is_none() {
        return Err(Error::InvalidInput("--dump-mesh needs --out".into()));
    }
    let prov = Provenance::for_inputs(&[&path])?;
    let opts = ReportOptions {
        mesh: MeshOptions::default().refined(a.refine),
        gate: tolerance(g, "gate", 0.05),
        max_extra_levels: a.max_levels,
        ..Default::default()
    };
    let layer = LossyLayerSpec::default();
    let mut out = Output::default();
    writeln!(
        out.text,
        "{:<10} {:>9} {:>9} {:>9} {:>9}   (x1e-5)  {:>9} {:>7} {:>8}",
        "name", "p_MA", "p_MS", "p_SA", "p_tot", "elements", "level", "change"
    )
    .unwrap();
    for named in &geoms {
        let domain = solver_domain(&named.geometry, &opts.domain)?;
        if a.dump_mesh {
            let (mesh, _) = build_mesh(&domain, &layer, &opts.mesh)?;
            let mut buf = Vec::new();
            mesh.write_dump(&mut buf).map_err(|e| Error::Io { path: PathBuf::from("mesh"), source: e })?;
            out.files.push((format!("{}.mesh.txt", named.name), buf));
        }
        let report = participation_report(&domain, &layer, &opts)?;
        let d = &report.diagnostics;
        writeln!(
            out.text,
            "{:<10} {:>9.3} {:>9.3} {:>9.3} {:>9.3}            {:>9} {:>7} {:>7.2}%",
            named.name,
            report.p_ma * 1e5,
            report.p_ms * 1e5,
            report.p_sa * 1e5,
            report.p_tot * 1e5,
            d.elements,
            d.refinement,
            100.0 * d.max_pr_change.unwrap_or(f64::NAN)
        )
        .unwrap();
        for part in &d.breakdown {
            writeln!(
                out.text,
                "    {:<3} internal {:>9.3}  edge {:>9.3}",
                part.interface.label(),
                part.internal * 1e5,
                part.edge * 1e5
            )
            .unwrap();
        }
        out.records.push(ResultsRecord::new(
            RecordPayload::Participation(ParticipationRecord { name: named.name.clone(), report }),
            prov.clone(),
        ));
    }
    Ok(out)
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Trace files: `.s2p` Touchstone or `freq_hz,re,im` CSV.
    #[arg(required = true)]
    pub traces: Vec<PathBuf>,
    /// Instrument power for traces that do not carry one, dBm.
    #[arg(long)]
    pub power_dbm: Option<f64>,
}

pub fn fit(_g: &Global, a: &FitArgs) -> Result<Output> {
    for p in &a.traces {
        require_file(p)?;
    }
    let mut out = Output::default();
    writeln!(
        out.text,
        "{:<20} {:>12} {:>12} {:>12} {:>8} {:>12} {:>12}",
        "trace", "f0/GHz", "Ql", "|Qc|", "phi", "Qi", "sigma(Qi)"
    )
    .unwrap();
    for path in &a.traces {
        let mut trace = read_trace(path)?;
        if trace.power_dbm.is_none() {
            trace.power_dbm = a.power_dbm;
        }
        let fit = fit_resonance(&trace)?;
        writeln!(
            out.text,
            "{:<20} {:>12.9} {:>12.5e} {:>12.5e} {:>8.4} {:>12.5e} {:>12.3e}",
            trace.label,
            fit.f0 / 1e9,
            fit.ql,
            fit.qc_mag,
            fit.phi,
            fit.qi,
            fit.uncertainties.qi
        )
        .unwrap();
        out.records.push(ResultsRecord::new(RecordPayload::ResonanceFit(fit), Provenance::for_inputs(&[path])?));
    }
    Ok(out)
}

#[derive(Args, Debug)]
pub struct TlsArgs {
    /// Results file holding `fit` records with instrument powers.
    #[arg(long, conflicts_with = "sweep")]
    pub results: Option<PathBuf>,
    /// Attenuation chain used to convert instrument power to photon number.
    #[arg(long, requires = "results")]
    pub chain: Option<PathBuf>,
    /// Room-temperature attenuation added to the chain, dB.
    #[arg(long, default_value_t = -16.0, allow_hyphen_values = true)]
    pub room_atten_db: f64,
    /// Only use fit records whose label starts with this prefix.
    #[arg(long)]
    pub label: Option<String>,
    /// CSV with columns `n_avg,qi[,qi_err[,f_hz]]`.
    #[arg(long)]
    pub sweep: Option<PathBuf>,
    /// Frequency for sweep files without an `f_hz` column, GHz.
    #[arg(long)]
    pub f_ghz: Option<f64>,
    #[arg(long, default_value_t = 10.0)]
    pub temperature_mk: f64,
    /// Fit the parameters directly instead of their logarithms.
    #[arg(long)]
    pub linear: bool,
}

fn read_sweep_csv(path: &Path, f_default: Option<f64>, t: f64) -> Result<Vec<PowerSweepPoint>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
    let mut pts = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if pts.is_empty() && cols[0].parse::<f64>().is_err() {
            continue;
        }
        let v: Vec<f64> = cols
            .iter()
            .map(|c| c.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse { path: path.to_path_buf(), line: idx + 1, msg: e.to_string() })?;
        if v.len() < 2 || v.len() > 4 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                msg: format!("expected 2 to 4 columns, found {}", v.len()),
            });
        }
        let f = match (v.get(3), f_default) {
            (Some(f), _) => *f,
            (None, Some(f)) => f,
            (None, None) => return Err(Error::InvalidInput("sweep needs an f_hz column or --f-ghz".into())),
        };
        pts.push(PowerSweepPoint { n_avg: v[0], qi: v[1], qi_err: v.get(2).copied(), f, t });
    }
    Ok(pts)
}

/// Group fit records by instrument power: harmonic-mean Qi, mean |Qc| and
/// f0, and photon number through the chain.
fn sweep_from_fits(
    results: &Path,
    chain: &AttenuationChain,
    room_db: f64,
    label: Option<&str>,
    t: f64,
) -> Result<Vec<PowerSweepPoint>> {
    let mut groups: BTreeMap<i64, Vec<resokit::fit::ResonanceFit>> = BTreeMap::new();
    for rec in read_records(results)? {
        if let RecordPayload::ResonanceFit(fit) = rec.payload {
            if label.is_some_and(|l| !fit.label.starts_with(l)) {
                continue;
            }
            let p = fit
                .power_dbm
                .ok_or_else(|| Error::InvalidInput(format!("fit record {:?} has no instrument power", fit.label)))?;
            groups.entry((p * 1000.0).round() as i64).or_default().push(fit);
        }
    }
    let mut pts = Vec::new();
    for (key, fits) in groups {
        let power = key as f64 / 1000.0;
        let k = fits.len() as f64;
        let qis: Vec<f64> = fits.iter().map(|f| f.qi).collect();
        let qi = harmonic_mean(&qis)?;
        let f0 = fits.iter().map(|f| f.f0).sum::<f64>() / k;
        let qc = fits.iter().map(|f| f.qc_mag).sum::<f64>() / k;
        let qi_err = if fits.len() > 1 {
            let m = qis.iter().sum::<f64>() / k;
            (qis.iter().map(|q| (q - m).powi(2)).sum::<f64>() / (k - 1.0) / k).sqrt()
        } else {
            fits[0].uncertainties.qi
        };
        let p_in = power + room_db + chain.total_attenuation(f0)?;
        let n_avg = photon_number(dbm_to_watts(p_in), f0, qc, qi)?;
        pts.push(PowerSweepPoint { n_avg, qi, qi_err: (qi_err > 0.0).then_some(qi_err), f: f0, t });
    }
    Ok(pts)
}

pub fn tls(_g: &Global, a: &TlsArgs) -> Result<Output> {
    let t = a.temperature_mk * 1e-3;
    let (points, inputs) = match (&a.results, &a.sweep) {
        (Some(results), None) => {
            require_file(results)?;
            let chain_path = a.chain.clone().ok_or_else(|| Error::InvalidInput("--results needs --chain".into()))?;
            require_file(&chain_path)?;
            let chain = load_chain(&chain_path)?;
            let pts = sweep_from_fits(results, &chain, a.room_atten_db, a.label.as_deref(), t)?;
            (pts, vec![results.clone(), chain_path])
        }
        (None, Some(sweep)) => {
            require_file(sweep)?;
            (read_sweep_csv(sweep, a.f_ghz.map(|f| f * 1e9), t)?, vec![sweep.clone()])
        }
        _ => return Err(Error::InvalidInput("give either --results with --chain, or --sweep".into())),
    };
    let opts = TlsOptions {
        parameterization: if a.linear { Parameterization::Linear } else { Parameterization::Log },
        ..Default::default()
    };
    let fit = fit_tls_with(&points, &opts)?;
    let mut out = Output::default();
    let e = &fit.std_errors;
    writeln!(out.text, "p*delta_TLS = {:.4e} +- {:.2e}", fit.p_delta_tls, e[0]).unwrap();
    writeln!(out.text, "n_c         = {:.4e} +- {:.2e}", fit.n_c, e[1]).unwrap();
    writeln!(out.text, "beta        = {:.4} +- {:.2e}", fit.beta, e[2]).unwrap();
    writeln!(out.text, "delta_e     = {:.4e} +- {:.2e}", fit.delta_e, e[3]).unwrap();
    writeln!(out.text, "Qi,0        = {:.4e} +- {:.2e}", fit.qi0, fit.qi0_err).unwrap();
    writeln!(out.text, "Qi,high     = {:.4e} +- {:.2e}", fit.qi_high, fit.qi_high_err).unwrap();
    for w in &fit.warnings {
        writeln!(out.text, "warning: {w}").unwrap();
    }

    let f_ref = points.iter().map(|p| p.f).sum::<f64>() / points.len() as f64;
    let mut data = String::from("n_avg,qi,qi_err,qi_model\n");
    let params = fit.params();
    for p in &points {
        let model = 1.0 / resokit::tls::tls_loss_model(p.n_avg, p.f, p.t, &params);
        writeln!(data, "{:.9e},{:.9e},{:.9e},{:.9e}", p.n_avg, p.qi, p.qi_err.unwrap_or(0.0), model).unwrap();
    }
    let n_min = points.iter().map(|p| p.n_avg).fold(f64::INFINITY, f64::min);
    let n_max = points.iter().map(|p| p.n_avg).fold(0.0, f64::max);
    let mut curve = String::from("n_avg,qi_model\n");
    for (n, q) in fit.curve(&log_spaced(n_min / 10.0, n_max * 10.0, 200), f_ref, t) {
        writeln!(curve, "{n:.9e},{q:.9e}").unwrap();
    }
    out.files.push(("tls_points.csv".into(), data.into_bytes()));
    out.files.push(("tls_curve.csv".into(), curve.into_bytes()));
    out.records.push(ResultsRecord::new(RecordPayload::TlsFit(fit), Provenance::for_inputs(&inputs)?));
    Ok(out)
}

#[derive(Args, Debug)]
pub struct CalibrateArgs {
    /// Use the bundled synthetic chain.
    #[arg(long, conflicts_with_all = ["reference", "with"])]
    pub synthetic: bool,
    /// Existing chain to extend or inspect.
    #[arg(long)]
    pub chain: Option<PathBuf>,
    /// Calibration trace without the component.
    #[arg(long, requires = "with")]
    pub reference: Option<PathBuf>,
    /// Calibration trace with the component inserted.
    #[arg(long, requires = "reference")]
    pub with: Option<PathBuf>,
    /// Name of the new component.
    #[arg(long, default_value = "component")]
    pub name: String,
    #[arg(long, default_value_t = DEFAULT_MEDIAN_WINDOW)]
    pub window: usize,
    /// Frequencies at which to print the total, GHz.
    #[arg(long = "at-ghz")]
    pub at_ghz: Vec<f64>,
}

pub fn calibrate(_g: &Global, a: &CalibrateArgs) -> Result<Output> {
    let mut inputs: Vec<PathBuf> = Vec::new();
    let mut chain = if a.synthetic {
        synthetic_paper_chain()
    } else if let Some(p) = &a.chain {
        require_file(p)?;
        inputs.push(p.clone());
        load_chain(p)?
    } else {
        AttenuationChain::default()
    };
    if let (Some(r), Some(w)) = (&a.reference, &a.with) {
        require_file(r)?;
        require_file(w)?;
        let comp = component_from_difference(&read_trace(r)?, &read_trace(w)?, a.name.clone(), a.window)?;
        inputs.push(r.clone());
        inputs.push(w.clone());
        chain.components.push(comp);
    }
    if chain.components.is_empty() {
        return Err(Error::InvalidInput("nothing to calibrate: give --synthetic, --chain or traces".into()));
    }
    let freqs: Vec<f64> = if !a.at_ghz.is_empty() {
        a.at_ghz.iter().map(|f| f * 1e9).collect()
    } else if a.synthetic {
        PUBLISHED_TOTALS.iter().map(|(f, _)| *f).collect()
    } else {
        let (lo, hi) =
            chain.range().ok_or_else(|| Error::InvalidInput("chain components share no frequency range".into()))?;
        (0..=10).map(|k| lo + (hi - lo) * k as f64 / 10.0).collect()
    };
    let mut out = Output::default();
    let names: Vec<String> = chain.components.iter().map(|c| c.name.clone()).collect();
    write!(out.text, "{:>10}", "f/GHz").unwrap();
    for n in &names {
        write!(out.text, " {n:>18}").unwrap();
    }
    writeln!(out.text, " {:>10}", "total/dB").unwrap();
    let mut totals = Vec::new();
    for f in &freqs {
        write!(out.text, "{:>10.4}", f / 1e9).unwrap();
        for c in &chain.components {
            write!(out.text, " {:>18.3}", c.at(*f)?).unwrap();
        }
        let total = chain.total_attenuation(*f)?;
        writeln!(out.text, " {total:>10.3}").unwrap();
        totals.push(total);
    }
    out.files.push(("chain.toml".into(), chain_to_string(&chain)?.into_bytes()));
    out.records.push(ResultsRecord::new(
        RecordPayload::Chain(ChainSummary { components: names, freqs_hz: freqs, total_db: totals }),
        Provenance::for_inputs(&inputs)?,
    ));
    Ok(out)
}

#[derive(Args, Debug)]
pub struct PhotonArgs {
    /// Instrument output power, dBm.
    #[arg(long, allow_hyphen_values = true)]
    pub power_dbm: f64,
    #[arg(long, default_value_t = -16.0, allow_hyphen_values = true)]
    pub room_atten_db: f64,
    /// Attenuation chain file.
    #[arg(long, conflicts_with = "atten_db")]
    pub chain: Option<PathBuf>,
    /// Total cryogenic attenuation instead of a chain, dB.
    #[arg(long, allow_hyphen_values = true)]
    pub atten_db: Option<f64>,
    #[arg(long)]
    pub f_ghz: f64,
    #[arg(long)]
    pub qc: f64,
    #[arg(long)]
    pub qi: f64,
}

pub fn photons(_g: &Global, a: &PhotonArgs) -> Result<Output> {
    let f = a.f_ghz * 1e9;
    let (line_db, inputs) = match (&a.chain, a.atten_db) {
        (Some(p), _) => {
            require_file(p)?;
            (load_chain(p)?.total_attenuation(f)?, vec![p.clone()])
        }
        (None, Some(db)) => (db, vec![]),
        (None, None) => return Err(Error::InvalidInput("give --chain or --atten-db".into())),
    };
    let p_in_dbm = a.power_dbm + a.room_atten_db + line_db;
    let n_avg = photon_number(dbm_to_watts(p_in_dbm), f, a.qc, a.qi)?;
    let mut out = Output::default();
    writeln!(out.text, "P_in = {p_in_dbm:.3} dBm  n = {n_avg:.6e}").unwrap();
    out.records.push(ResultsRecord::new(
        RecordPayload::Photons(PhotonRecord { p_in_dbm, f_hz: f, qc: a.qc, qi: a.qi, n_avg }),
        Provenance::for_inputs(&inputs)?,
    ));
    Ok(out)
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    /// Results file of repeated fits; the loss tangent is 1/Qi in file order.
    #[arg(long)]
    pub results: Option<PathBuf>,
    /// CSV with `time_s,loss_tangent` rows.
    #[arg(long, conflicts_with = "results")]
    pub series: Option<PathBuf>,
    /// Table for the log-log regression: CSV `x,y[,y_err]`, or a TOML
    /// reference table (uses `p_tot` and `p_delta_tls`).
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Jump threshold in units of the robust noise scale.
    #[arg(long, default_value_t = 6.0)]
    pub threshold: f64,
    #[arg(long, default_value_t = 30)]
    pub bins: usize,
}

fn read_columns(path: &Path, min: usize, max: usize) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if rows.is_empty() && cols[0].parse::<f64>().is_err() {
            continue;
        }
        let v: Vec<f64> = cols
            .iter()
            .map(|c| c.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse { path: path.to_path_buf(), line: idx + 1, msg: e.to_string() })?;
        if v.len() < min || v.len() > max {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                msg: format!("expected {min} to {max} columns, found {}", v.len()),
            });
        }
        rows.push(v);
    }
    Ok(rows)
}

pub fn stats(_g: &Global, a: &StatsArgs) -> Result<Output> {
    if a.results.is_none() && a.series.is_none() && a.table.is_none() {
        return Err(Error::InvalidInput("give --results, --series or --table".into()));
    }
    for p in [&a.results, &a.series, &a.table].into_iter().flatten() {
        require_file(p)?;
    }
    let mut out = Output::default();
    let series = if let Some(r) = &a.results {
        let loss: Vec<f64> = read_records(r)?
            .into_iter()
            .filter_map(|rec| match rec.payload {
                RecordPayload::ResonanceFit(f) => Some(1.0 / f.qi),
                _ => None,
            })
            .collect();
        Some((LossTimeSeries::from_values(loss)?, r.clone()))
    } else if let Some(s) = &a.series {
        let rows = read_columns(s, 2, 2)?;
        Some((
            LossTimeSeries::new(rows.iter().map(|r| r[0]).collect(), rows.iter().map(|r| r[1]).collect())?,
            s.clone(),
        ))
    } else {
        None
    };
    if let Some((series, path)) = series {
        let lognormal = fit_lognormal(&series.loss_tangent)?;
        let jumps = if series.len() >= 50 { detect_jumps(&series, a.threshold)? } else { Vec::new() };
        writeln!(
            out.text,
            "log-normal: x0 = {:.4e}  sigma = {:.4}  KS = {:.4}  (n = {})",
            lognormal.x0, lognormal.sigma, lognormal.ks_statistic, lognormal.n
        )
        .unwrap();
        writeln!(out.text, "jumps at: {jumps:?}").unwrap();
        let h = histogram(&series.loss_tangent, a.bins, true)?;
        let mut csv = String::from("lower,upper,count,density,lognormal_pdf\n");
        let n = series.len() as f64;
        for k in 0..h.counts.len() {
            let (lo, hi) = (h.edges[k], h.edges[k + 1]);
            let density = h.counts[k] as f64 / (n * (hi - lo));
            let mid = (lo * hi).sqrt();
            writeln!(csv, "{lo:.9e},{hi:.9e},{},{density:.9e},{:.9e}", h.counts[k], lognormal.pdf(mid)).unwrap();
        }
        out.files.push(("histogram.csv".into(), csv.into_bytes()));
        out.records.push(ResultsRecord::new(
            RecordPayload::Fluctuation(FluctuationSummary { lognormal, jumps }),
            Provenance::for_inputs(&[path])?,
        ));
    }
    if let Some(t) = &a.table {
        let is_toml = t.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
        let (x, y, err): (Vec<f64>, Vec<f64>, Vec<f64>) = if is_toml {
            let rows = crate::report::load_reference(t)?;
            (
                rows.iter().map(|r| r.p_tot * 1e-5).collect(),
                rows.iter().map(|r| r.p_delta_tls * 1e-8).collect(),
                rows.iter().map(|r| r.p_delta_tls_err * 1e-8).collect(),
            )
        } else {
            let rows = read_columns(t, 2, 3)?;
            (
                rows.iter().map(|r| r[0]).collect(),
                rows.iter().map(|r| r[1]).collect(),
                rows.iter().filter_map(|r| r.get(2).copied()).collect(),
            )
        };
        let ols = loglog_regression(&x, &y)?;
        writeln!(
            out.text,
            "log-log OLS: slope = {:.4} +- {:.4}  intercept = {:.4}  R^2 = {:.4}",
            ols.slope, ols.slope_err, ols.intercept, ols.r_squared
        )
        .unwrap();
        if err.len() == y.len() {
            let w = weighted_loglog_regression(&x, &y, &err)?;
            writeln!(out.text, "log-log weighted: slope = {:.4} +- {:.4}", w.slope, w.slope_err).unwrap();
        }
        out.records.push(ResultsRecord::new(RecordPayload::Regression(ols), Provenance::for_inputs(&[t])?));
    }
    Ok(out)
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 6.0)]
    pub f0_ghz: f64,
    #[arg(long, default_value_t = 9.6e6)]
    pub qi: f64,
    #[arg(long, default_value_t = 1.7e6)]
    pub qc: f64,
    #[arg(long, default_value_t = 0.1, allow_hyphen_values = true)]
    pub phi: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub delay_ns: f64,
    #[arg(long, default_value_t = 1.0)]
    pub amplitude: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub alpha: f64,
    /// Signal-to-noise ratio, dB; omit for a noiseless trace.
    #[arg(long)]
    pub snr_db: Option<f64>,
    #[arg(long, default_value_t = 801)]
    pub points: usize,
    /// Half-span in linewidths.
    #[arg(long, default_value_t = 8.0)]
    pub widths: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub power_dbm: Option<f64>,
    /// Output file name inside `--out`; `.s2p` writes Touchstone, else CSV.
    #[arg(long, default_value = "synthetic.csv")]
    pub name: String,
}

pub fn synth(g: &Global, a: &SynthArgs) -> Result<Output> {
    let params = NotchParams::from_qi(a.f0_ghz * 1e9, a.qi, a.qc, a.phi).with_environment(
        a.delay_ns * 1e-9,
        a.amplitude,
        a.alpha,
    );
    let freqs = sweep_around(params.f0, params.ql, a.widths, a.points);
    let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
    let mut trace = synthesize_trace(&params, &freqs, a.snr_db, &mut rng)?;
    trace.power_dbm = a.power_dbm;
    let mut buf = Vec::new();
    let io_err = |e| Error::Io { path: PathBuf::from(&a.name), source: e };
    if a.name.to_ascii_lowercase().ends_with(".s2p") {
        write_touchstone(&trace, TouchstoneFormat::Ri, &mut buf).map_err(io_err)?;
    } else {
        write_csv_trace(&trace, &mut buf).map_err(io_err)?;
    }
    let mut out = Output::default();
    if g.out.is_some() {
        out.files.push((a.name.clone(), buf));
        writeln!(out.text, "wrote {} points to {}", trace.len(), a.name).unwrap();
    } else {
        out.text = String::from_utf8(buf).unwrap_or_default();
    }
    Ok(out)
}
