use serde::{Deserialize, Serialize};

use super::mesh::{graded_axis, Material, Mesh, MeshOptions, Symmetry};
use crate::constants::EPS_SILICON;
use crate::design::{asr_voltage_profile, AsrGeometry, CpwGeometry};
use crate::{Error, Result};

/// Lossy interface between two materials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Interface {
    MetalAir,
    MetalSubstrate,
    SubstrateAir,
}

impl Interface {
    pub const ALL: [Interface; 3] = [Interface::MetalAir, Interface::MetalSubstrate, Interface::SubstrateAir];

    pub fn label(&self) -> &'static str {
        match self {
            Interface::MetalAir => "MA",
            Interface::MetalSubstrate => "MS",
            Interface::SubstrateAir => "SA",
        }
    }

    /// Permittivity standing in for the interface material in the
    /// simulation: air above metal, silicon beneath it, and the air/silicon
    /// average on the exposed substrate surface.
    pub fn sim_permittivity(&self, domain: &SolverDomain) -> f64 {
        match self {
            Interface::MetalAir => domain.eps_air,
            Interface::MetalSubstrate => domain.eps_si,
            Interface::SubstrateAir => 0.5 * (domain.eps_air + domain.eps_si),
        }
    }
}

impl std::fmt::Display for Interface {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Interface {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "MA" => Ok(Interface::MetalAir),
            "MS" => Ok(Interface::MetalSubstrate),
            "SA" => Ok(Interface::SubstrateAir),
            _ => Err(Error::invalid(format!("unknown interface {s:?}"))),
        }
    }
}

/// Hypothetical amorphous layer on every interface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossyLayerSpec {
    /// Layer thickness, m.
    pub thickness: f64,
    /// Relative permittivity of the layer.
    pub eps_i: f64,
    /// Distance from a conductor edge within which the layer is meshed
    /// explicitly, m.
    pub edge_extent: f64,
}

impl Default for LossyLayerSpec {
    fn default() -> Self {
        Self { thickness: 3e-9, eps_i: 10.0, edge_extent: 100e-9 }
    }
}

impl LossyLayerSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.thickness > 0.0 && self.eps_i >= 1.0 && self.edge_extent > self.thickness) {
            return Err(Error::domain(format!("invalid lossy layer {self:?}")));
        }
        Ok(())
    }
}

/// Conductor cross-section `[x0, x1] x [0, metal_thickness]` held at a fixed
/// potential. In axisymmetric domains `x` is the radius and a strip is a
/// ring (a disk when `x0 = 0`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Strip {
    pub x0: f64,
    pub x1: f64,
    pub potential: f64,
}

/// Construction options shared by the CPW and spiral domains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainOptions {
    /// Silicon thickness below the chip surface; the bottom face is grounded.
    pub substrate_thickness: f64,
    pub metal_thickness: f64,
    /// Outer boundary distance in units of the largest conductor feature.
    pub extent_factor: f64,
}

impl Default for DomainOptions {
    fn default() -> Self {
        Self { substrate_thickness: 300e-6, metal_thickness: 100e-9, extent_factor: 10.0 }
    }
}

/// Electrostatic problem: conductors on a silicon substrate inside a
/// grounded box. The box spans `x ∈ [0, x_max]`; `x = 0` is a mirror plane
/// (planar) or the rotation axis (axisymmetric), both natural boundaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverDomain {
    pub symmetry: Symmetry,
    pub strips: Vec<Strip>,
    pub x_max: f64,
    /// Height of the grounded lid above the substrate surface.
    pub y_top: f64,
    pub substrate_thickness: f64,
    pub metal_thickness: f64,
    pub eps_air: f64,
    pub eps_si: f64,
    /// Largest conductor feature, used to check the box size.
    pub feature_size: f64,
}

impl SolverDomain {
    /// Symmetric half cross-section of a CPW: center conductor at 1 V,
    /// ground plane reaching the box wall at 0 V, lid at the shield height.
    pub fn cpw(geom: &CpwGeometry, opts: &DomainOptions) -> Result<Self> {
        geom.validate()?;
        let half_w = 0.5 * geom.w;
        let ground_start = half_w + geom.gap();
        let extent = opts.extent_factor * geom.g;
        let x_max = extent.max(geom.h);
        let domain = Self {
            symmetry: Symmetry::Planar,
            strips: vec![
                Strip { x0: 0.0, x1: half_w, potential: 1.0 },
                Strip { x0: ground_start, x1: x_max, potential: 0.0 },
            ],
            x_max,
            y_top: geom.h.max(extent),
            substrate_thickness: opts.substrate_thickness,
            metal_thickness: opts.metal_thickness,
            eps_air: 1.0,
            eps_si: EPS_SILICON,
            feature_size: geom.g,
        };
        domain.validate()?;
        Ok(domain)
    }

    /// Spiral approximated by concentric rings: ring `k` spans
    /// `[r_in + k p, r_in + k p + w]` and sits at the standing-wave voltage of
    /// its center radius.
    pub fn asr(geom: &AsrGeometry, v0: f64, opts: &DomainOptions) -> Result<Self> {
        geom.validate()?;
        let strips = ring_spans(geom)
            .into_iter()
            .map(|(x0, x1)| Ok(Strip { x0, x1, potential: asr_voltage_profile(geom, 0.5 * (x0 + x1), v0)? }))
            .collect::<Result<Vec<_>>>()?;
        Self::rings(strips, geom.r_out(), opts)
    }

    /// Axisymmetric domain with arbitrary rings; the box extends
    /// `extent_factor` times the outermost ring radius.
    pub fn rings(strips: Vec<Strip>, feature_size: f64, opts: &DomainOptions) -> Result<Self> {
        let extent = opts.extent_factor * feature_size;
        let domain = Self {
            symmetry: Symmetry::Axisymmetric,
            strips,
            x_max: extent,
            y_top: extent,
            substrate_thickness: opts.substrate_thickness,
            metal_thickness: opts.metal_thickness,
            eps_air: 1.0,
            eps_si: EPS_SILICON,
            feature_size,
        };
        domain.validate()?;
        Ok(domain)
    }

    pub fn validate(&self) -> Result<()> {
        if self.strips.is_empty() {
            return Err(Error::domain("domain has no conductors"));
        }
        if !(self.metal_thickness > 0.0 && self.substrate_thickness > 0.0) {
            return Err(Error::domain("metal and substrate thickness must be positive"));
        }
        let mut spans: Vec<(f64, f64)> = self.strips.iter().map(|s| (s.x0, s.x1)).collect();
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        for s in &self.strips {
            if !(s.x0 >= 0.0 && s.x1 > s.x0 && s.x1 <= self.x_max && s.potential.is_finite()) {
                return Err(Error::domain(format!("invalid strip {s:?}")));
            }
        }
        if spans.windows(2).any(|w| w[1].0 <= w[0].1) {
            return Err(Error::domain("conductor strips overlap"));
        }
        let need = 10.0 * self.feature_size;
        if self.x_max < need * (1.0 - 1e-12) || self.y_top < need * (1.0 - 1e-12) {
            return Err(Error::domain(format!(
                "box ({} x {}) smaller than 10x the largest feature {}",
                self.x_max, self.y_top, self.feature_size
            )));
        }
        Ok(())
    }

    /// Conductor edges strictly inside the box, with the side the metal is
    /// on (`-1`: metal at smaller x).
    pub fn edges(&self) -> Vec<Edge> {
        let mut out = Vec::new();
        for s in &self.strips {
            if s.x0 > 0.0 {
                out.push(Edge { x: s.x0, metal_side: 1.0 });
            }
            if s.x1 < self.x_max {
                out.push(Edge { x: s.x1, metal_side: -1.0 });
            }
        }
        out.sort_by(|a, b| a.x.total_cmp(&b.x));
        out
    }

    /// The same problem with every conductor potential multiplied by `s`.
    pub fn with_scaled_potentials(&self, s: f64) -> Self {
        let mut d = self.clone();
        for strip in &mut d.strips {
            strip.potential *= s;
        }
        d
    }

    pub fn with_potentials(&self, potentials: &[f64]) -> Result<Self> {
        if potentials.len() != self.strips.len() {
            return Err(Error::invalid("one potential per strip required"));
        }
        let mut d = self.clone();
        for (strip, v) in d.strips.iter_mut().zip(potentials) {
            strip.potential = *v;
        }
        Ok(d)
    }

    fn strip_containing(&self, x: f64) -> Option<usize> {
        self.strips.iter().position(|s| x > s.x0 && x < s.x1)
    }
}

/// Radial spans of the rings replacing a spiral.
pub fn ring_spans(geom: &AsrGeometry) -> Vec<(f64, f64)> {
    (0..geom.n)
        .map(|k| {
            let x0 = geom.r_in + k as f64 * geom.p;
            (x0, x0 + geom.w)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub x: f64,
    /// +1 when the metal lies at larger x, -1 when at smaller x.
    pub metal_side: f64,
}

/// Interface bookkeeping of one mesh cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerCell {
    pub interface: Interface,
    /// Inside the peripheral band, meshed with the layer permittivity.
    pub explicit: bool,
    /// For the sidewall/substrate corner: fraction of each triangle's
    /// measure that belongs to MA (nearest surface is the sidewall); the
    /// remainder belongs to SA.
    pub ma_fraction: Option<[f64; 2]>,
}

/// Which cells carry which interface layer.
#[derive(Debug, Clone)]
pub struct LayerMap {
    pub spec: LossyLayerSpec,
    pub cells: Vec<Option<LayerCell>>,
    /// Row index `j` of the cells directly below `y = 0`, above `y = 0` and
    /// above the metal top `y = T`.
    pub row_below_surface: usize,
    pub row_above_surface: usize,
    pub row_above_metal: usize,
}

/// Mesh the domain, assign materials and tag the interface layers.
pub fn build_mesh(domain: &SolverDomain, layer: &LossyLayerSpec, opts: &MeshOptions) -> Result<(Mesh, LayerMap)> {
    domain.validate()?;
    layer.validate()?;
    let t = layer.thickness;
    let top = domain.metal_thickness;
    let edges = domain.edges();

    let mut xbrk = vec![0.0, domain.x_max];
    for s in &domain.strips {
        xbrk.push(s.x0);
        xbrk.push(s.x1);
    }
    for e in &edges {
        for d in [-layer.edge_extent, -t, t, layer.edge_extent] {
            let x = e.x + d;
            if x > 0.0 && x < domain.x_max {
                xbrk.push(x);
            }
        }
    }
    let foci: Vec<f64> = edges.iter().map(|e| e.x).collect();
    let xs = graded_axis(&xbrk, &foci, opts)?;
    let ybrk = [-domain.substrate_thickness, -t, 0.0, t, top, top + t, domain.y_top];
    if domain.y_top <= top + t {
        return Err(Error::Mesh("lid lies inside the metal layer".into()));
    }
    let ys = graded_axis(&ybrk, &[0.0, top], opts)?;

    let nx = xs.len();
    let ny = ys.len();
    let ncell = (nx - 1) * (ny - 1);
    let mut material = vec![Material::Air; ncell];
    let mut eps = vec![domain.eps_air; ncell];
    let mut cells: Vec<Option<LayerCell>> = vec![None; ncell];
    let mut mesh =
        Mesh { symmetry: domain.symmetry, xs, ys, material: Vec::new(), eps: Vec::new(), fixed: vec![None; nx * ny] };

    let near_edge = |x: f64| edges.iter().any(|e| (x - e.x).abs() < layer.edge_extent);
    let sidewall = |x: f64| edges.iter().find(|e| (x - e.x) * e.metal_side < 0.0 && (x - e.x).abs() < t);

    for i in 0..nx - 1 {
        for j in 0..ny - 1 {
            let c = mesh.cell(i, j);
            let (xc, yc) = mesh.cell_center(i, j);
            let over_strip = domain.strip_containing(xc);
            if let (Some(s), true) = (over_strip, yc > 0.0 && yc < top) {
                material[c] = Material::Metal(s);
                eps[c] = 0.0;
                continue;
            }
            if yc < 0.0 {
                material[c] = Material::Substrate;
                eps[c] = domain.eps_si;
            }
            let tag = if let Some(e) = sidewall(xc).filter(|_| yc > 0.0 && yc < top + t) {
                let split = (yc < t).then(|| corner_split(&mesh, i, j, e));
                Some((Interface::MetalAir, true, split))
            } else if over_strip.is_some() && yc > -t && yc < 0.0 {
                Some((Interface::MetalSubstrate, near_edge(xc), None))
            } else if over_strip.is_some() && yc > top && yc < top + t {
                Some((Interface::MetalAir, near_edge(xc), None))
            } else if over_strip.is_none() && yc > 0.0 && yc < t {
                Some((Interface::SubstrateAir, near_edge(xc), None))
            } else {
                None
            };
            if let Some((interface, explicit, ma_fraction)) = tag {
                cells[c] = Some(LayerCell { interface, explicit, ma_fraction });
                if explicit {
                    material[c] = Material::Lossy;
                    eps[c] = layer.eps_i;
                }
            }
        }
    }

    let tol = 1e-12 * domain.x_max.max(domain.y_top);
    for i in 0..nx {
        for j in 0..ny {
            let (x, y) = (mesh.xs[i], mesh.ys[j]);
            let in_metal =
                domain.strips.iter().find(|s| x >= s.x0 - tol && x <= s.x1 + tol && y >= -tol && y <= top + tol);
            let k = mesh.node(i, j);
            mesh.fixed[k] = match in_metal {
                Some(s) => Some(s.potential),
                None if i == nx - 1 || j == 0 || j == ny - 1 => Some(0.0),
                None => None,
            };
        }
    }
    mesh.material = material;
    mesh.eps = eps;

    let row_of = |y: f64| mesh.ys.iter().position(|v| (*v - y).abs() <= tol);
    let surface = row_of(0.0).ok_or_else(|| Error::Mesh("no grid line at y = 0".into()))?;
    let metal_top = row_of(top).ok_or_else(|| Error::Mesh("no grid line at metal top".into()))?;
    let map = LayerMap {
        spec: *layer,
        cells,
        row_below_surface: surface - 1,
        row_above_surface: surface,
        row_above_metal: metal_top,
    };
    Ok((mesh, map))
}

/// Fraction of each triangle of cell `(i, j)` that lies closer to the
/// sidewall at `edge` than to the substrate surface `y = 0`.
fn corner_split(mesh: &Mesh, i: usize, j: usize, edge: &Edge) -> [f64; 2] {
    let (x0, x1, y0, y1) = (mesh.xs[i], mesh.xs[i + 1], mesh.ys[j], mesh.ys[j + 1]);
    let tris = [[(x0, y0), (x1, y0), (x0, y1)], [(x1, y1), (x0, y1), (x1, y0)]];
    // distance to the sidewall is |x - e|, to the surface is y; MA where
    // y - |x - e| > 0, a half-plane on this side of the edge
    let outward = -edge.metal_side;
    let inside = |p: (f64, f64)| p.1 - outward * (p.0 - edge.x);
    let axisym = mesh.symmetry == Symmetry::Axisymmetric;
    let mut out = [0.0; 2];
    for (k, tri) in tris.iter().enumerate() {
        let whole = polygon_measure(tri, axisym);
        let clipped = clip_half_plane(tri, inside);
        out[k] = if whole > 0.0 { polygon_measure(&clipped, axisym) / whole } else { 0.0 };
    }
    out
}

/// Sutherland-Hodgman clip of a convex polygon to `{p : f(p) >= 0}`.
fn clip_half_plane<F: Fn((f64, f64)) -> f64>(poly: &[(f64, f64)], f: F) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(poly.len() + 1);
    for k in 0..poly.len() {
        let a = poly[k];
        let b = poly[(k + 1) % poly.len()];
        let (fa, fb) = (f(a), f(b));
        if fa >= 0.0 {
            out.push(a);
        }
        if (fa >= 0.0) != (fb >= 0.0) {
            let s = fa / (fa - fb);
            out.push((a.0 + s * (b.0 - a.0), a.1 + s * (b.1 - a.1)));
        }
    }
    out
}

/// Area of a polygon, or `∫ r dA` when axisymmetric.
fn polygon_measure(poly: &[(f64, f64)], axisym: bool) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut area = 0.0;
    let mut moment = 0.0;
    for k in 0..poly.len() {
        let (xa, ya) = poly[k];
        let (xb, yb) = poly[(k + 1) % poly.len()];
        let cross = xa * yb - xb * ya;
        area += cross;
        moment += (xa + xb) * cross;
    }
    if axisym {
        (moment / 6.0).abs()
    } else {
        (area / 2.0).abs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Half;

    #[test]
    fn clip_splits_square_on_diagonal() {
        let sq = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
        let upper = clip_half_plane(&sq, |p| p.1 - p.0);
        assert!((polygon_measure(&upper, false) - 0.5).abs() < 1e-15);
        // centroid of the upper-left half is at x = 1/3
        assert!((polygon_measure(&upper, true) - 0.5 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn corner_split_halves_symmetric_corner() {
        let domain = SolverDomain::cpw(
            &CpwGeometry::from_gap(20e-6, 11e-6, 1.5e-3, 1e-3, 11.45).unwrap(),
            &DomainOptions::default(),
        )
        .unwrap();
        let layer = LossyLayerSpec::default();
        let (mesh, map) = build_mesh(&domain, &layer, &MeshOptions::default()).unwrap();
        let mut ma = 0.0;
        let mut total = 0.0;
        for i in 0..mesh.nx() - 1 {
            for j in 0..mesh.ny() - 1 {
                if let Some(LayerCell { ma_fraction: Some(f), .. }) = map.cells[mesh.cell(i, j)] {
                    for (k, half) in [Half::Lower, Half::Upper].into_iter().enumerate() {
                        let m = mesh.triangle_measure(i, j, half);
                        ma += f[k] * m;
                        total += m;
                    }
                }
            }
        }
        // two t x t corners, each split in half by the bisector
        let t = layer.thickness;
        assert!((total - 2.0 * t * t).abs() / (t * t) < 1e-9);
        assert!((ma / total - 0.5).abs() < 1e-9);
    }

    #[test]
    fn cpw_mesh_has_fixed_conductors_and_layers() {
        let domain = SolverDomain::cpw(
            &CpwGeometry::from_gap(8e-6, 4.5e-6, 1.5e-3, 1e-3, 11.45).unwrap(),
            &DomainOptions::default(),
        )
        .unwrap();
        let (mesh, map) = build_mesh(&domain, &LossyLayerSpec::default(), &MeshOptions::default()).unwrap();
        assert_eq!(mesh.ys[map.row_above_surface], 0.0);
        let metal_cells = mesh.material.iter().filter(|m| matches!(m, Material::Metal(_))).count();
        assert!(metal_cells > 0);
        for iface in Interface::ALL {
            assert!(map.cells.iter().flatten().any(|c| c.interface == iface && c.explicit));
            assert!(map.cells.iter().flatten().any(|c| c.interface == iface && !c.explicit));
        }
        // lid, bottom and far wall grounded; conductor at 1 V
        assert_eq!(mesh.fixed[mesh.node(0, map.row_above_surface)], Some(1.0));
        assert_eq!(mesh.fixed[mesh.node(3, 0)], Some(0.0));
        assert_eq!(mesh.fixed[mesh.node(mesh.nx() - 1, mesh.ny() / 2)], Some(0.0));
    }

    #[test]
    fn domain_size_is_checked() {
        let strips = vec![Strip { x0: 0.0, x1: 10e-6, potential: 1.0 }];
        let opts = DomainOptions { extent_factor: 5.0, ..Default::default() };
        assert!(SolverDomain::rings(strips, 10e-6, &opts).is_err());
    }
}
