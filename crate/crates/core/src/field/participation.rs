use serde::{Deserialize, Serialize};

use super::domain::{DomainOptions, Interface, LayerCell, LossyLayerSpec, SolverDomain};
use super::mesh::{Half, MeshOptions};
use super::solve::{solve, FieldSolution};
use crate::constants::EPSILON_0;
use crate::design::{AsrGeometry, CpwGeometry};
use crate::{Error, Result};

const HALVES: [Half; 2] = [Half::Lower, Half::Upper];

fn check(sol: &FieldSolution) -> Result<()> {
    if !(sol.total_energy.is_finite() && sol.total_energy >= 0.0) {
        return Err(Error::Solve(format!("invalid total energy {}", sol.total_energy)));
    }
    Ok(())
}

/// Thin-layer participation away from conductor edges. The layer is absent
/// from the simulation, so the field on the simulation side of the interface
/// is rescaled to the layer by displacement continuity:
/// `p = t ∫ (ε_i/2)(E∥² + (ε_sim/ε_i · E⊥)²) dA / U_tot`.
pub fn participation_internal(sol: &FieldSolution, interface: Interface) -> Result<f64> {
    check(sol)?;
    if sol.total_energy == 0.0 {
        return Ok(0.0);
    }
    let spec = sol.layers.spec;
    let ratio = interface.sim_permittivity(&sol.domain) / spec.eps_i;
    let mesh = &sol.mesh;
    let below = sol.layers.row_below_surface;
    let mut sum = 0.0;
    for i in 0..mesh.nx() - 1 {
        for j in 0..mesh.ny() - 1 {
            match sol.layers.cells[mesh.cell(i, j)] {
                Some(LayerCell { interface: f, explicit: false, .. }) if f == interface => {}
                _ => continue,
            }
            for half in HALVES {
                let (ex, ey) = match interface {
                    Interface::SubstrateAir => {
                        let (ax, ay) = sol.field(i, j, half);
                        let (bx, by) = sol.field(i, below, half);
                        (0.5 * (ax + bx), 0.5 * (ay + by))
                    }
                    _ => sol.field(i, j, half),
                };
                // the layer cell is exactly t thick, so its measure is t dA
                sum += mesh.triangle_measure(i, j, half) * (ex * ex + (ratio * ey).powi(2));
            }
        }
    }
    Ok(0.5 * EPSILON_0 * spec.eps_i * sum / sol.total_energy)
}

/// Participation of the explicitly meshed layer near conductor edges,
/// `∫ (ε_i/2)|E|² dV / U_tot`. Corner cells at the sidewall foot are shared
/// between MA and SA by the nearest surface.
pub fn participation_edge(sol: &FieldSolution, interface: Interface) -> Result<f64> {
    check(sol)?;
    if sol.total_energy == 0.0 {
        return Ok(0.0);
    }
    let mesh = &sol.mesh;
    let mut sum = 0.0;
    for i in 0..mesh.nx() - 1 {
        for j in 0..mesh.ny() - 1 {
            let cell = match sol.layers.cells[mesh.cell(i, j)] {
                Some(c) if c.explicit => c,
                _ => continue,
            };
            for (k, half) in HALVES.into_iter().enumerate() {
                let share = match (cell.ma_fraction, interface) {
                    (Some(f), Interface::MetalAir) => f[k],
                    (Some(f), Interface::SubstrateAir) => 1.0 - f[k],
                    (Some(_), Interface::MetalSubstrate) => 0.0,
                    (None, x) if x == cell.interface => 1.0,
                    (None, _) => 0.0,
                };
                if share == 0.0 {
                    continue;
                }
                let (ex, ey) = sol.field(i, j, half);
                sum += share * mesh.triangle_measure(i, j, half) * (ex * ex + ey * ey);
            }
        }
    }
    Ok(0.5 * EPSILON_0 * sol.layers.spec.eps_i * sum / sol.total_energy)
}

/// Internal and edge participation of one interface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterfaceParticipation {
    pub interface: Interface,
    pub internal: f64,
    pub edge: f64,
}

impl InterfaceParticipation {
    pub fn total(&self) -> f64 {
        self.internal + self.edge
    }
}

/// Solver bookkeeping attached to a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub nodes: usize,
    pub elements: usize,
    pub unknowns: usize,
    pub refinement: u32,
    pub total_energy: f64,
    /// `|U_volume − ½φᵀAφ| / U_volume`.
    pub energy_consistency: f64,
    pub residual: f64,
    /// Relative change of `U_tot` between the last two refinement levels.
    pub energy_change: Option<f64>,
    /// Largest relative change of any `p_i` between the last two levels.
    pub max_pr_change: Option<f64>,
    pub breakdown: Vec<InterfaceParticipation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipationReport {
    pub p_ma: f64,
    pub p_ms: f64,
    pub p_sa: f64,
    pub p_tot: f64,
    pub diagnostics: Diagnostics,
}

impl ParticipationReport {
    pub fn get(&self, interface: Interface) -> f64 {
        match interface {
            Interface::MetalAir => self.p_ma,
            Interface::MetalSubstrate => self.p_ms,
            Interface::SubstrateAir => self.p_sa,
        }
    }
}

/// Participation ratios of a solved domain, without a convergence check.
pub fn participation(sol: &FieldSolution) -> Result<(ParticipationReport, [f64; 3])> {
    let mut breakdown = Vec::with_capacity(3);
    let mut p = [0.0; 3];
    for (k, iface) in Interface::ALL.into_iter().enumerate() {
        let part = InterfaceParticipation {
            interface: iface,
            internal: participation_internal(sol, iface)?,
            edge: participation_edge(sol, iface)?,
        };
        p[k] = part.total();
        breakdown.push(part);
    }
    let u = sol.total_energy;
    let report = ParticipationReport {
        p_ma: p[0],
        p_ms: p[1],
        p_sa: p[2],
        p_tot: p.iter().sum(),
        diagnostics: Diagnostics {
            nodes: sol.mesh.node_count(),
            elements: sol.mesh.element_count(),
            unknowns: sol.unknowns,
            refinement: sol.refinement,
            total_energy: u,
            energy_consistency: if u > 0.0 { (u - sol.quadratic_energy).abs() / u } else { 0.0 },
            residual: sol.residual,
            energy_change: None,
            max_pr_change: None,
            breakdown,
        },
    };
    Ok((report, p))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    pub mesh: MeshOptions,
    pub domain: DomainOptions,
    /// Largest accepted relative change of any `p_i` under refinement.
    pub gate: f64,
    /// Extra refinement levels tried before giving up.
    pub max_extra_levels: u32,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self { mesh: MeshOptions::default(), domain: DomainOptions::default(), gate: 0.05, max_extra_levels: 2 }
    }
}

/// Solve at successive refinement levels until every `p_i` changes by less
/// than the gate, then report the finer level.
pub fn participation_report(
    domain: &SolverDomain,
    layer: &LossyLayerSpec,
    opts: &ReportOptions,
) -> Result<ParticipationReport> {
    let mut mesh = opts.mesh;
    let sol = solve(domain, layer, &mesh)?;
    let (mut prev, mut prev_p) = participation(&sol)?;
    drop(sol);
    let mut last_change = f64::INFINITY;
    for _ in 0..=opts.max_extra_levels {
        mesh = mesh.refined(1);
        let sol = solve(domain, layer, &mesh)?;
        let (mut report, p) = participation(&sol)?;
        drop(sol);
        let change = p
            .iter()
            .zip(&prev_p)
            .map(|(a, b)| if *a == 0.0 && *b == 0.0 { 0.0 } else { (a - b).abs() / a.abs().max(b.abs()) })
            .fold(0.0, f64::max);
        let du = &mut report.diagnostics;
        du.max_pr_change = Some(change);
        du.energy_change =
            Some((du.total_energy - prev.diagnostics.total_energy).abs() / du.total_energy.max(f64::MIN_POSITIVE));
        if change < opts.gate {
            return Ok(report);
        }
        last_change = change;
        prev = report;
        prev_p = p;
    }
    Err(Error::NonConvergence {
        iterations: opts.max_extra_levels as usize + 1,
        reason: format!(
            "participation ratios still change by {:.1}% at refinement level {}",
            100.0 * last_change,
            mesh.refinement
        ),
    })
}

/// Report for a CPW at 1 V on the center conductor.
pub fn cpw_participation(
    geom: &CpwGeometry,
    layer: &LossyLayerSpec,
    opts: &ReportOptions,
) -> Result<ParticipationReport> {
    participation_report(&SolverDomain::cpw(geom, &opts.domain)?, layer, opts)
}

/// Report for a spiral modeled as rings carrying the standing-wave profile.
pub fn asr_participation(
    geom: &AsrGeometry,
    layer: &LossyLayerSpec,
    opts: &ReportOptions,
) -> Result<ParticipationReport> {
    participation_report(&SolverDomain::asr(geom, 1.0, &opts.domain)?, layer, opts)
}
