use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::Deserialize;

use resokit::calibration::{dbm_to_watts, photon_number, synthetic_paper_chain};
use resokit::field::{participation_report, LossyLayerSpec, ReportOptions};
use resokit::fit::fit_resonance;
use resokit::io::{
    load_geometries, parse_geometry_config, parse_touchstone, parse_touchstone_str, Geometry, NamedGeometry,
    Provenance, RecordPayload, ResultsRecord,
};
use resokit::stats::loglog_regression;
use resokit::{Error, Result};

use crate::commands::{design_summary, solver_domain, tolerance, Output};
use crate::Global;

const REFERENCE_TABLES: &str = include_str!("../../../fixtures/reference_tables.toml");
const GEOMETRIES: &str = include_str!("../../../fixtures/geometries.toml");
const FIT_TRACE: &str = include_str!("../../../fixtures/asr3_synthetic.s2p");

/// Generator parameters of the bundled synthetic trace.
pub const FIT_TRACE_F0: f64 = 6.0e9;
pub const FIT_TRACE_QI: f64 = 9.6e6;
pub const FIT_TRACE_QC: f64 = 1.7e6;
pub const FIT_TRACE_PHI: f64 = 0.1;

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Directory with `reference_tables.toml`, `geometries.toml` and
    /// `asr3_synthetic.s2p`; the bundled copies are used when omitted.
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
    /// Also run the field solver for every resonator (minutes).
    #[arg(long)]
    pub with_pr: bool,
}

/// One row of the reference table, in the units stated in the file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(dead_code)]
pub struct ReferenceRow {
    pub label: String,
    pub w_um: f64,
    pub f_ghz: f64,
    pub qc: f64,
    pub p_delta_tls: f64,
    pub p_delta_tls_err: f64,
    pub qi0: f64,
    pub qi0_err: f64,
    pub qi_high: f64,
    pub qi_high_err: f64,
    pub p_ma: f64,
    pub p_ms: f64,
    pub p_sa: f64,
    pub p_tot: f64,
}

#[derive(Deserialize)]
struct ReferenceFile {
    row: Vec<ReferenceRow>,
}

fn parse_reference(text: &str, path: &Path) -> Result<Vec<ReferenceRow>> {
    let file: ReferenceFile = toml::from_str(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.span().map_or(0, |s| text[..s.start].lines().count().max(1)),
        msg: e.message().to_string(),
    })?;
    Ok(file.row)
}

pub fn load_reference(path: &Path) -> Result<Vec<ReferenceRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
    parse_reference(&text, path)
}

struct Check {
    name: String,
    computed: f64,
    expected: f64,
    tol: String,
    pass: bool,
}

impl Check {
    fn abs(name: impl Into<String>, computed: f64, expected: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            computed,
            expected,
            tol: format!("+-{tol}"),
            pass: (computed - expected).abs() <= tol,
        }
    }

    fn rel(name: impl Into<String>, computed: f64, expected: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            computed,
            expected,
            tol: format!("+-{}%", tol * 100.0),
            pass: ((computed - expected) / expected).abs() <= tol,
        }
    }
}

pub fn report(g: &Global, a: &ReportArgs) -> Result<Output> {
    let (rows, geoms, trace, inputs) = match &a.fixtures {
        Some(dir) => {
            let (r, gp, t) =
                (dir.join("reference_tables.toml"), dir.join("geometries.toml"), dir.join("asr3_synthetic.s2p"));
            (load_reference(&r)?, load_geometries(&gp)?, parse_touchstone(&t)?, vec![r, gp, t])
        }
        None => (
            parse_reference(REFERENCE_TABLES, Path::new("reference_tables.toml"))?,
            parse_geometry_config(GEOMETRIES, Path::new("geometries.toml"))?,
            parse_touchstone_str(FIT_TRACE, Path::new("asr3_synthetic.s2p"))?,
            Vec::new(),
        ),
    };
    let mut checks = Vec::new();

    for named in &geoms {
        let s = design_summary(named)?;
        match &named.geometry {
            Geometry::Asr(_) => checks.push(Check::rel(
                format!("{} Z/ohm", named.name),
                s.impedance_ohm,
                810.0,
                tolerance(g, "asr_z", 0.02),
            )),
            Geometry::Cpw(_) => {
                checks.push(Check::abs(
                    format!("{} Z/ohm", named.name),
                    s.impedance_ohm,
                    50.0,
                    tolerance(g, "cpw_z", 0.01),
                ));
                checks.push(Check {
                    name: format!("{} eps_eff", named.name),
                    computed: s.eps_eff,
                    expected: 6.225,
                    tol: "[1, 11.45]".into(),
                    pass: (1.0..=11.45).contains(&s.eps_eff),
                });
            }
        }
    }

    let qi0_tol = tolerance(g, "qi0", 0.05);
    for r in &rows {
        let product = r.qi0 * 1e5 * r.p_delta_tls * 1e-8;
        checks.push(Check::abs(format!("{} Qi0*p*dTLS", r.label), product, 1.0, qi0_tol));
    }

    let x: Vec<f64> = rows.iter().map(|r| r.p_tot * 1e-5).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.p_delta_tls * 1e-8).collect();
    let ols = loglog_regression(&x, &y)?;
    checks.push(Check::abs("log-log slope", ols.slope, 1.34, tolerance(g, "slope", 0.05)));

    let chain = synthetic_paper_chain();
    let cal_tol = tolerance(g, "calibration", 1e-9);
    checks.push(Check::abs("total atten 4.02 GHz/dB", chain.total_attenuation(4.02e9)?, -75.8, cal_tol));
    checks.push(Check::abs("total atten 6.86 GHz/dB", chain.total_attenuation(6.86e9)?, -79.0, cal_tol));
    let asr3 = rows.iter().find(|r| r.label == "ASR3");
    if let Some(r) = asr3 {
        let f = r.f_ghz * 1e9;
        let p_in = dbm_to_watts(-20.0 - 16.0 + chain.total_attenuation(f)?);
        let (qc, qi) = (r.qc * 1e6, r.qi_high * 1e6);
        let omega = 2.0 * std::f64::consts::PI * f;
        let hbar = resokit::constants::PLANCK / (2.0 * std::f64::consts::PI);
        let ql = qc * qi / (qc + qi);
        let hand = 4.0 * ql * ql / qc * p_in / (hbar * omega * omega);
        let n = photon_number(p_in, f, qc, qi)?;
        checks.push(Check::rel("photon number vs hand", n, hand, tolerance(g, "photons", 1e-10)));
    }

    let fit_tol = tolerance(g, "fit", 0.01);
    let fit = fit_resonance(&trace)?;
    let ql = 1.0 / (1.0 / FIT_TRACE_QI + FIT_TRACE_PHI.cos() / FIT_TRACE_QC);
    checks.push(Check::rel("fixture f0/Hz", fit.f0, FIT_TRACE_F0, fit_tol));
    checks.push(Check::rel("fixture Ql", fit.ql, ql, fit_tol));
    checks.push(Check::rel("fixture |Qc|", fit.qc_mag, FIT_TRACE_QC, fit_tol));
    checks.push(Check::rel("fixture Qi", fit.qi, FIT_TRACE_QI, fit_tol));

    if a.with_pr {
        let pr_tol = tolerance(g, "pr", 0.30);
        let opts = ReportOptions::default();
        let layer = LossyLayerSpec::default();
        let mut totals = Vec::new();
        for NamedGeometry { name, geometry } in &geoms {
            let Some(r) = rows.iter().find(|r| &r.label == name) else { continue };
            let rep = participation_report(&solver_domain(geometry, &opts.domain)?, &layer, &opts)?;
            for (key, got, want) in [("p_MA", rep.p_ma, r.p_ma), ("p_MS", rep.p_ms, r.p_ms), ("p_SA", rep.p_sa, r.p_sa)]
            {
                checks.push(Check::rel(format!("{name} {key}/1e-5"), got * 1e5, want, pr_tol));
            }
            totals.push((matches!(geometry, Geometry::Asr(_)), r.p_tot, rep.p_tot));
        }
        // Simulated totals must sort the same way as the reference totals.
        let mut by_ref = totals.clone();
        by_ref.sort_by(|a, b| a.1.total_cmp(&b.1));
        let ordered = by_ref.windows(2).all(|w| w[0].2 < w[1].2);
        let asr_below = totals.iter().filter(|t| t.0).map(|t| t.2).fold(0.0, f64::max)
            < totals.iter().filter(|t| !t.0).map(|t| t.2).fold(f64::INFINITY, f64::min);
        checks.push(Check {
            name: "p_tot ordering".into(),
            computed: f64::NAN,
            expected: f64::NAN,
            tol: "order".into(),
            pass: ordered && asr_below,
        });
    }

    let mut out = Output::default();
    writeln!(out.text, "{:<28} {:>14} {:>14} {:>12}  result", "check", "computed", "expected", "tolerance").unwrap();
    for c in &checks {
        writeln!(
            out.text,
            "{:<28} {:>14.6} {:>14.6} {:>12}  {}",
            c.name,
            c.computed,
            c.expected,
            c.tol,
            if c.pass { "PASS" } else { "FAIL" }
        )
        .unwrap();
    }
    let failed = checks.iter().filter(|c| !c.pass).count();
    writeln!(out.text, "{} checks, {} failed", checks.len(), failed).unwrap();
    out.status = u8::from(failed > 0);
    out.records.push(ResultsRecord::new(RecordPayload::Regression(ols), Provenance::for_inputs(&inputs)?));
    Ok(out)
}
