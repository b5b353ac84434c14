//! Graded rectilinear meshes.
//!
//! Every rectangle of the tensor grid is split along its anti-diagonal into
//! two right triangles, so linear elements give a 5-point operator and the
//! electric field is constant on each triangle.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Mesh grading controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshOptions {
    /// Element size at conductor edges and interfaces, m.
    pub h_min: f64,
    /// Size growth per unit distance away from a focus point,
    /// `s(x) = h_min + (growth - 1) |x - focus|`.
    pub growth: f64,
    /// Largest element size, m.
    pub h_max: f64,
    /// Each level halves `h_min`, `h_max` and `growth - 1`, roughly doubling
    /// the node count along each axis.
    pub refinement: u32,
}

impl Default for MeshOptions {
    fn default() -> Self {
        Self { h_min: 1e-9, growth: 1.3, h_max: 50e-6, refinement: 0 }
    }
}

impl MeshOptions {
    pub fn refined(self, levels: u32) -> Self {
        Self { refinement: self.refinement + levels, ..self }
    }

    pub(crate) fn effective(&self) -> (f64, f64, f64) {
        let f = 0.5f64.powi(self.refinement as i32);
        (self.h_min * f, 1.0 + (self.growth - 1.0) * f, self.h_max * f)
    }

    fn validate(&self) -> Result<()> {
        if !(self.h_min > 0.0 && self.h_max >= self.h_min && self.growth > 1.0) {
            return Err(Error::Mesh(format!("invalid mesh options {self:?}")));
        }
        Ok(())
    }
}

/// Node coordinates along one axis, placed so that the local spacing follows
/// the size field of [`MeshOptions`]. Every breakpoint becomes a node.
pub fn graded_axis(breakpoints: &[f64], foci: &[f64], opts: &MeshOptions) -> Result<Vec<f64>> {
    opts.validate()?;
    let (h_min, growth, h_max) = opts.effective();
    let slope = growth - 1.0;
    let size = |x: f64| foci.iter().map(|f| h_min + slope * (x - f).abs()).fold(h_max, f64::min);

    let mut brk: Vec<f64> = breakpoints.to_vec();
    if brk.iter().any(|b| !b.is_finite()) {
        return Err(Error::Mesh("non-finite breakpoint".into()));
    }
    brk.sort_by(f64::total_cmp);
    brk.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * a.abs().max(b.abs()).max(1e-12));
    if brk.len() < 2 {
        return Err(Error::Mesh("an axis needs at least two distinct breakpoints".into()));
    }

    let mut nodes = vec![brk[0]];
    for win in brk.windows(2) {
        let (a, b) = (win[0], win[1]);
        let samples = integration_samples(a, b, h_min);
        // cumulative cell count N(x) = ∫ dx / s(x)
        let mut cum = Vec::with_capacity(samples.len());
        cum.push(0.0);
        for pair in samples.windows(2) {
            let (x0, x1) = (pair[0], pair[1]);
            let inc = 0.5 * (x1 - x0) * (1.0 / size(x0) + 1.0 / size(x1));
            cum.push(cum.last().unwrap() + inc);
        }
        let total = *cum.last().unwrap();
        let cells = (total - 1e-9).ceil().max(1.0) as usize;
        let mut k = 0;
        for c in 1..cells {
            let target = total * c as f64 / cells as f64;
            while cum[k + 1] < target {
                k += 1;
            }
            let frac = (target - cum[k]) / (cum[k + 1] - cum[k]);
            nodes.push(samples[k] + frac * (samples[k + 1] - samples[k]));
        }
        nodes.push(b);
    }
    Ok(nodes)
}

/// Sample points for integrating `1/s` over `[a, b]`: geometric clusters at
/// both ends (where foci sit) plus a uniform backbone.
fn integration_samples(a: f64, b: f64, h: f64) -> Vec<f64> {
    let len = b - a;
    let mut pts = Vec::with_capacity(2048);
    for i in 0..=512 {
        pts.push(a + len * i as f64 / 512.0);
    }
    let mut d = (h * 0.25).min(len * 1e-3);
    while d < 0.5 * len {
        pts.push(a + d);
        pts.push(b - d);
        d *= 1.02;
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

/// Geometry of the computational domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Symmetry {
    /// Translationally invariant cross-section; energies per unit length.
    Planar,
    /// Rotationally symmetric about `x = 0`; energies per full revolution.
    Axisymmetric,
}

/// What a mesh cell is made of.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Material {
    Metal(usize),
    Substrate,
    Air,
    /// Explicitly meshed lossy interface layer.
    Lossy,
}

/// Tensor-product mesh with per-cell material and relative permittivity and
/// per-node Dirichlet data.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub symmetry: Symmetry,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Cell materials, index `i * (ny - 1) + j`.
    pub material: Vec<Material>,
    /// Relative permittivity per cell (0 inside metal).
    pub eps: Vec<f64>,
    /// Prescribed potential per node, index `i * ny + j`.
    pub fixed: Vec<Option<f64>>,
}

/// One of the two triangles of a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Half {
    /// Nodes (i, j), (i+1, j), (i, j+1).
    Lower,
    /// Nodes (i+1, j+1), (i, j+1), (i+1, j).
    Upper,
}

impl Mesh {
    pub fn nx(&self) -> usize {
        self.xs.len()
    }

    pub fn ny(&self) -> usize {
        self.ys.len()
    }

    pub fn node_count(&self) -> usize {
        self.xs.len() * self.ys.len()
    }

    pub fn cell_count(&self) -> usize {
        (self.xs.len() - 1) * (self.ys.len() - 1)
    }

    pub fn element_count(&self) -> usize {
        2 * self.cell_count()
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> usize {
        i * self.ys.len() + j
    }

    #[inline]
    pub fn cell(&self, i: usize, j: usize) -> usize {
        i * (self.ys.len() - 1) + j
    }

    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        (0.5 * (self.xs[i] + self.xs[i + 1]), 0.5 * (self.ys[j] + self.ys[j + 1]))
    }

    /// Integration measure of a triangle: its area (planar) or the volume of
    /// its solid of revolution `2π r̄ A` (axisymmetric). Exact for the
    /// piecewise-constant fields of linear elements.
    pub fn triangle_measure(&self, i: usize, j: usize, half: Half) -> f64 {
        let hx = self.xs[i + 1] - self.xs[i];
        let hy = self.ys[j + 1] - self.ys[j];
        let area = 0.5 * hx * hy;
        match self.symmetry {
            Symmetry::Planar => area,
            Symmetry::Axisymmetric => {
                let r_bar = match half {
                    Half::Lower => self.xs[i] + hx / 3.0,
                    Half::Upper => self.xs[i] + 2.0 * hx / 3.0,
                };
                2.0 * std::f64::consts::PI * r_bar * area
            }
        }
    }

    /// Node indices of a triangle, counter-clockwise.
    pub fn triangle_nodes(&self, i: usize, j: usize, half: Half) -> [usize; 3] {
        match half {
            Half::Lower => [self.node(i, j), self.node(i + 1, j), self.node(i, j + 1)],
            Half::Upper => [self.node(i + 1, j + 1), self.node(i, j + 1), self.node(i + 1, j)],
        }
    }

    /// `-∇φ` on a triangle.
    pub fn triangle_field(&self, phi: &[f64], i: usize, j: usize, half: Half) -> (f64, f64) {
        let hx = self.xs[i + 1] - self.xs[i];
        let hy = self.ys[j + 1] - self.ys[j];
        let p = |a: usize, b: usize| phi[self.node(a, b)];
        match half {
            Half::Lower => (-(p(i + 1, j) - p(i, j)) / hx, -(p(i, j + 1) - p(i, j)) / hy),
            Half::Upper => (-(p(i + 1, j + 1) - p(i, j + 1)) / hx, -(p(i + 1, j + 1) - p(i + 1, j)) / hy),
        }
    }

    /// Write nodes and triangles as plain text:
    ///
    /// ```text
    /// # nodes <count>
    /// <index> <x> <y> <fixed potential or ->
    /// # elements <count>
    /// <index> <n0> <n1> <n2> <material> <eps>
    /// ```
    pub fn write_dump<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# symmetry {:?}", self.symmetry)?;
        writeln!(out, "# nodes {}", self.node_count())?;
        for i in 0..self.nx() {
            for j in 0..self.ny() {
                let k = self.node(i, j);
                match self.fixed[k] {
                    Some(v) => writeln!(out, "{k} {:.9e} {:.9e} {v}", self.xs[i], self.ys[j])?,
                    None => writeln!(out, "{k} {:.9e} {:.9e} -", self.xs[i], self.ys[j])?,
                }
            }
        }
        writeln!(out, "# elements {}", self.element_count())?;
        let mut e = 0;
        for i in 0..self.nx() - 1 {
            for j in 0..self.ny() - 1 {
                let c = self.cell(i, j);
                for half in [Half::Lower, Half::Upper] {
                    let [a, b, d] = self.triangle_nodes(i, j, half);
                    writeln!(out, "{e} {a} {b} {d} {:?} {}", self.material[c], self.eps[c])?;
                    e += 1;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_contains_breakpoints_and_respects_sizes() {
        let opts = MeshOptions { h_min: 1e-9, growth: 1.3, h_max: 1e-6, refinement: 0 };
        let brk = [0.0, 1e-6, 1.003e-6, 20e-6];
        let axis = graded_axis(&brk, &[1e-6], &opts).unwrap();
        for b in brk {
            assert!(axis.iter().any(|x| (x - b).abs() < 1e-18), "missing breakpoint {b}");
        }
        assert!(axis.windows(2).all(|w| w[1] > w[0]));
        let max_step = axis.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        assert!(max_step <= 1.05e-6);
        let at_focus = axis.iter().position(|x| *x == 1e-6).unwrap();
        assert!(axis[at_focus] - axis[at_focus - 1] < 2e-9);
    }

    #[test]
    fn refinement_roughly_doubles_node_count() {
        let base = MeshOptions::default();
        let brk = [0.0, 10e-6, 20e-6, 1e-3];
        let a = graded_axis(&brk, &[10e-6, 20e-6], &base).unwrap();
        let b = graded_axis(&brk, &[10e-6, 20e-6], &base.refined(1)).unwrap();
        let ratio = (b.len() - 1) as f64 / (a.len() - 1) as f64;
        assert!(ratio > 1.8 && ratio < 2.3, "ratio {ratio}");
    }

    #[test]
    fn bad_options_are_rejected() {
        let opts = MeshOptions { growth: 1.0, ..Default::default() };
        assert!(graded_axis(&[0.0, 1.0], &[], &opts).is_err());
        assert!(graded_axis(&[1.0], &[], &MeshOptions::default()).is_err());
    }
}
