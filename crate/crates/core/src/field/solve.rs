use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};

use super::domain::{build_mesh, LayerMap, LossyLayerSpec, SolverDomain};
use super::mesh::{Half, Mesh, MeshOptions, Symmetry};
use crate::constants::EPSILON_0;
use crate::{Error, Result};

/// Potential on a mesh together with energy bookkeeping.
#[derive(Debug, Clone)]
pub struct Potential {
    /// Node potentials, V.
    pub phi: Vec<f64>,
    /// `∑ ½ ε0 ε |E|² dV` over all triangles (J/m planar, J axisymmetric).
    pub total_energy: f64,
    /// `½ ε0 φᵀAφ` from the assembled operator.
    pub quadratic_energy: f64,
    /// `‖Aφ − b‖ / ‖b‖` on the free nodes (0 when `b = 0`).
    pub residual: f64,
    pub unknowns: usize,
}

/// Electrostatic solution of a [`SolverDomain`].
#[derive(Debug, Clone)]
pub struct FieldSolution {
    pub domain: SolverDomain,
    pub mesh: Mesh,
    pub layers: LayerMap,
    pub potential: Vec<f64>,
    pub total_energy: f64,
    pub quadratic_energy: f64,
    pub residual: f64,
    pub unknowns: usize,
    pub refinement: u32,
}

impl FieldSolution {
    /// Conductor potentials, one per strip.
    pub fn boundary_conditions(&self) -> Vec<f64> {
        self.domain.strips.iter().map(|s| s.potential).collect()
    }

    pub fn field(&self, i: usize, j: usize, half: Half) -> (f64, f64) {
        self.mesh.triangle_field(&self.potential, i, j, half)
    }
}

/// Couplings of the 5-point operator: `east[k]` links node `k = (i, j)` to
/// `(i+1, j)` and `north[k]` links it to `(i, j+1)`. Units of `ε · measure /
/// length²`, without `ε0`.
struct Couplings {
    east: Vec<f64>,
    north: Vec<f64>,
}

fn couplings(mesh: &Mesh) -> Couplings {
    let n = mesh.node_count();
    let mut east = vec![0.0; n];
    let mut north = vec![0.0; n];
    for i in 0..mesh.nx() - 1 {
        let hx = mesh.xs[i + 1] - mesh.xs[i];
        for j in 0..mesh.ny() - 1 {
            let eps = mesh.eps[mesh.cell(i, j)];
            if eps == 0.0 {
                continue;
            }
            let hy = mesh.ys[j + 1] - mesh.ys[j];
            let lower = eps * mesh.triangle_measure(i, j, Half::Lower);
            let upper = eps * mesh.triangle_measure(i, j, Half::Upper);
            east[mesh.node(i, j)] += lower / (hx * hx);
            north[mesh.node(i, j)] += lower / (hy * hy);
            east[mesh.node(i, j + 1)] += upper / (hx * hx);
            north[mesh.node(i + 1, j)] += upper / (hy * hy);
        }
    }
    Couplings { east, north }
}

/// Solve the discrete Laplace problem `∇·(ε∇φ) = 0` with the mesh's
/// Dirichlet data by sparse Cholesky factorization.
pub fn solve_mesh(mesh: &Mesh) -> Result<Potential> {
    let (nx, ny) = (mesh.nx(), mesh.ny());
    if nx < 2 || ny < 2 {
        return Err(Error::Mesh("mesh needs at least 2 x 2 nodes".into()));
    }
    if mesh.eps.len() != mesh.cell_count() || mesh.fixed.len() != mesh.node_count() {
        return Err(Error::Mesh("mesh arrays do not match the grid".into()));
    }
    let c = couplings(mesh);
    let n = mesh.node_count();
    let mut index = vec![usize::MAX; n];
    let mut free = 0;
    for k in 0..n {
        if mesh.fixed[k].is_none() {
            index[k] = free;
            free += 1;
        }
    }

    let mut phi: Vec<f64> = mesh.fixed.iter().map(|v| v.unwrap_or(0.0)).collect();
    let mut diag = vec![0.0; free];
    let mut rhs = vec![0.0; free];
    let mut triplets = Vec::with_capacity(3 * free);
    let mut link = |a: usize, b: usize, w: f64| {
        if w == 0.0 {
            return;
        }
        match (index[a], index[b]) {
            (usize::MAX, usize::MAX) => {}
            (ia, usize::MAX) => {
                diag[ia] += w;
                rhs[ia] += w * phi[b];
            }
            (usize::MAX, ib) => {
                diag[ib] += w;
                rhs[ib] += w * phi[a];
            }
            (ia, ib) => {
                diag[ia] += w;
                diag[ib] += w;
                triplets.push(Triplet::new(ia.max(ib), ia.min(ib), -w));
            }
        }
    };
    for i in 0..nx {
        for j in 0..ny {
            let k = mesh.node(i, j);
            if i + 1 < nx {
                link(k, mesh.node(i + 1, j), c.east[k]);
            }
            if j + 1 < ny {
                link(k, mesh.node(i, j + 1), c.north[k]);
            }
        }
    }
    // nodes touching only metal cells are decoupled; pin them to zero
    for d in diag.iter_mut() {
        if *d == 0.0 {
            *d = 1.0;
        }
    }
    triplets.extend(diag.iter().enumerate().map(|(k, d)| Triplet::new(k, k, *d)));

    let b_norm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut residual = 0.0;
    if free > 0 && b_norm > 0.0 {
        let a = SparseColMat::<usize, f64>::try_new_from_triplets(free, free, &triplets)
            .map_err(|e| Error::Solve(format!("assembly: {e:?}")))?;
        let llt = a.sp_cholesky(Side::Lower).map_err(|e| Error::Solve(format!("factorization: {e:?}")))?;
        let b = Mat::<f64>::from_fn(free, 1, |r, _| rhs[r]);
        let x = llt.solve(&b);
        for k in 0..n {
            if index[k] != usize::MAX {
                phi[k] = x[(index[k], 0)];
            }
        }
        // residual using the lower-triangle triplets symmetrically
        let mut ax: Vec<f64> = (0..free).map(|r| diag[r] * x[(r, 0)]).collect();
        for t in &triplets[..triplets.len() - free] {
            ax[t.row] += t.val * x[(t.col, 0)];
            ax[t.col] += t.val * x[(t.row, 0)];
        }
        let r2: f64 = ax.iter().zip(&rhs).map(|(a, b)| (a - b) * (a - b)).sum();
        residual = r2.sqrt() / b_norm;
        if !(residual < 1e-10) {
            return Err(Error::Solve(format!("relative residual {residual:.3e} exceeds 1e-10")));
        }
    }

    let mut quadratic = 0.0;
    for i in 0..nx {
        for j in 0..ny {
            let k = mesh.node(i, j);
            if i + 1 < nx {
                quadratic += c.east[k] * (phi[k] - phi[mesh.node(i + 1, j)]).powi(2);
            }
            if j + 1 < ny {
                quadratic += c.north[k] * (phi[k] - phi[mesh.node(i, j + 1)]).powi(2);
            }
        }
    }
    let mut volume = 0.0;
    for i in 0..nx - 1 {
        for j in 0..ny - 1 {
            let eps = mesh.eps[mesh.cell(i, j)];
            if eps == 0.0 {
                continue;
            }
            for half in [Half::Lower, Half::Upper] {
                let (ex, ey) = mesh.triangle_field(&phi, i, j, half);
                volume += eps * mesh.triangle_measure(i, j, half) * (ex * ex + ey * ey);
            }
        }
    }
    Ok(Potential {
        phi,
        total_energy: 0.5 * EPSILON_0 * volume,
        quadratic_energy: 0.5 * EPSILON_0 * quadratic,
        residual,
        unknowns: free,
    })
}

/// Mesh and solve a domain with the interface layers in place.
pub fn solve(domain: &SolverDomain, layer: &LossyLayerSpec, opts: &MeshOptions) -> Result<FieldSolution> {
    let (mesh, layers) = build_mesh(domain, layer, opts)?;
    let p = solve_mesh(&mesh)?;
    Ok(FieldSolution {
        domain: domain.clone(),
        mesh,
        layers,
        potential: p.phi,
        total_energy: p.total_energy,
        quadratic_energy: p.quadratic_energy,
        residual: p.residual,
        unknowns: p.unknowns,
        refinement: opts.refinement,
    })
}

/// Translationally invariant CPW cross-section; energies per unit length.
pub fn solve_cpw_cross_section(
    domain: &SolverDomain,
    layer: &LossyLayerSpec,
    opts: &MeshOptions,
) -> Result<FieldSolution> {
    if domain.symmetry != Symmetry::Planar {
        return Err(Error::domain("CPW cross-section needs a planar domain"));
    }
    solve(domain, layer, opts)
}

/// Concentric-ring model of a spiral with one potential per ring; energies
/// per full revolution.
pub fn solve_asr_axisymmetric(
    domain: &SolverDomain,
    profile: &[f64],
    layer: &LossyLayerSpec,
    opts: &MeshOptions,
) -> Result<FieldSolution> {
    if domain.symmetry != Symmetry::Axisymmetric {
        return Err(Error::domain("ring model needs an axisymmetric domain"));
    }
    solve(&domain.with_potentials(profile)?, layer, opts)
}
