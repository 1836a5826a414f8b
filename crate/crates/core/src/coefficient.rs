//! High-contrast piecewise constant coefficients and the derived weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{dist, Point, TriMesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Disk,
    Ellipse,
}

/// An axis-aligned disk or ellipse with its conductivity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inclusion {
    pub shape: Shape,
    pub center: Point,
    /// `[r, r]` for disks, semi-axes `[rx, ry]` for ellipses.
    pub radii: [f64; 2],
    /// Conductivity inside; the study contrast when absent.
    #[serde(default)]
    pub value: Option<f64>,
}

impl Inclusion {
    pub fn disk(center: Point, r: f64) -> Self {
        Self { shape: Shape::Disk, center, radii: [r, r], value: None }
    }

    fn radii(&self) -> [f64; 2] {
        match self.shape {
            Shape::Disk => [self.radii[0], self.radii[0]],
            Shape::Ellipse => self.radii,
        }
    }

    /// Level function, negative inside, zero on the boundary.
    fn level(&self, p: Point) -> f64 {
        let [rx, ry] = self.radii();
        let dx = (p[0] - self.center[0]) / rx;
        let dy = (p[1] - self.center[1]) / ry;
        dx * dx + dy * dy - 1.0
    }

    pub fn contains(&self, p: Point) -> bool {
        self.level(p) < 0.0
    }

    fn boundary_point(&self, t: f64) -> Point {
        let [rx, ry] = self.radii();
        [self.center[0] + rx * t.cos(), self.center[1] + ry * t.sin()]
    }

    /// Whether the closed shapes meet.
    fn meets(&self, other: &Inclusion) -> bool {
        let (a, b) = (self.radii(), other.radii());
        let d = dist(self.center, other.center);
        if self.shape == Shape::Disk && other.shape == Shape::Disk {
            return d <= (a[0] + b[0]) * (1.0 + 1e-12);
        }
        if d > a[0].max(a[1]) + b[0].max(b[1]) {
            return false;
        }
        if self.level(other.center) <= 0.0 || other.level(self.center) <= 0.0 {
            return true;
        }
        let samples = 4096;
        (0..samples).any(|k| {
            let t = 2.0 * std::f64::consts::PI * k as f64 / samples as f64;
            other.level(self.boundary_point(t)) <= 1e-9 || self.level(other.boundary_point(t)) <= 1e-9
        })
    }
}

/// Cellwise constant conductivity on the fine mesh.
#[derive(Debug, Clone)]
pub struct CoefficientField {
    pub values: Vec<f64>,
    pub inclusions: Vec<Inclusion>,
    /// Inclusion index per fine cell.
    pub labels: Vec<Option<usize>>,
    pub alpha: f64,
    pub beta: f64,
    pub contrast: f64,
}

impl CoefficientField {
    /// `κ ≡ c`.
    pub fn constant(num_cells: usize, c: f64) -> Self {
        Self {
            values: vec![c; num_cells],
            inclusions: vec![],
            labels: vec![None; num_cells],
            alpha: c,
            beta: c,
            contrast: 1.0,
        }
    }

    /// Fine cells carrying inclusion `j`.
    pub fn cells_of(&self, j: usize) -> usize {
        self.labels.iter().filter(|l| **l == Some(j)).count()
    }

    /// Cellwise reciprocal `κ⁻¹`.
    pub fn inverse(&self) -> Vec<f64> {
        self.values.iter().map(|v| 1.0 / v).collect()
    }

    /// Same geometry with every inclusion set to `contrast`.
    pub fn with_contrast(&self, contrast: f64) -> Result<Self> {
        check_contrast(contrast)?;
        let values: Vec<f64> = self
            .labels
            .iter()
            .map(|l| if l.is_some() { contrast } else { 1.0 })
            .collect();
        let mut out = self.clone();
        out.inclusions.iter_mut().for_each(|i| i.value = Some(contrast));
        out.values = values;
        out.refresh_bounds();
        Ok(out)
    }

    fn refresh_bounds(&mut self) {
        self.alpha = self.values.iter().copied().fold(f64::INFINITY, f64::min);
        self.beta = self.values.iter().copied().fold(0.0, f64::max);
        self.contrast = self.beta / self.alpha;
    }

    /// Plain-text dump: `cell,value` records.
    pub fn write_text<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "cell,value")?;
        for (c, v) in self.values.iter().enumerate() {
            writeln!(w, "{c},{v:.12e}")?;
        }
        Ok(())
    }
}

fn check_contrast(c: f64) -> Result<()> {
    if !(c >= 1.0) || !c.is_finite() {
        return Err(Error::Config(format!("coefficient: contrast must be finite and at least 1, got {c}")));
    }
    Ok(())
}

/// Rasterizes inclusions onto the fine cells by a centroid test.
///
/// Background cells get 1; inclusion `j` gets its own value or `contrast`.
pub fn make_inclusions(fine: &TriMesh, inclusions: &[Inclusion], contrast: f64) -> Result<CoefficientField> {
    check_contrast(contrast)?;
    for (j, inc) in inclusions.iter().enumerate() {
        if inc.radii().iter().any(|r| !(*r > 0.0)) {
            return Err(Error::Config(format!("coefficient: inclusion {j} has a non-positive radius")));
        }
        if let Some(v) = inc.value {
            if !(v >= 1.0) {
                return Err(Error::Config(format!(
                    "coefficient: inclusion {j} value {v} is below the background value 1"
                )));
            }
        }
        for (k, other) in inclusions.iter().enumerate().take(j) {
            if inc.meets(other) {
                return Err(Error::Config(format!("coefficient: inclusions {k} and {j} overlap or touch")));
            }
        }
    }
    let mut labels = vec![None; fine.num_cells()];
    let mut values = vec![1.0; fine.num_cells()];
    for (c, label) in labels.iter_mut().enumerate() {
        let p = fine.centroid(c);
        for (j, inc) in inclusions.iter().enumerate() {
            if inc.contains(p) {
                *label = Some(j);
                values[c] = inc.value.unwrap_or(contrast);
            }
        }
    }
    let mut out = CoefficientField {
        values,
        inclusions: inclusions.to_vec(),
        labels,
        alpha: 1.0,
        beta: 1.0,
        contrast: 1.0,
    };
    for j in 0..inclusions.len() {
        let n = out.cells_of(j);
        if n < 4 {
            return Err(Error::Config(format!(
                "coefficient: inclusion {j} covers {n} fine cells, at least 4 are needed"
            )));
        }
    }
    out.refresh_bounds();
    Ok(out)
}

/// Cellwise weights `κ̃` and `κ̃⁻¹`.
#[derive(Debug, Clone)]
pub struct WeightField {
    pub tilde: Vec<f64>,
    pub tilde_inv: Vec<f64>,
    pub zero: Vec<bool>,
}

impl WeightField {
    /// Area of the cells where `κ̃` vanishes.
    pub fn zero_measure(&self, fine: &TriMesh) -> f64 {
        (0..fine.num_cells()).filter(|&c| self.zero[c]).map(|c| fine.area(c)).sum()
    }

    pub fn max(&self) -> f64 {
        self.tilde.iter().copied().fold(0.0, f64::max)
    }
}

/// `κ̃ = H² κ Σ_i |∇χ_i|²` cellwise, given the per-cell gradient sum.
///
/// Values below `1e-14` of the maximum count as zero, where `κ̃⁻¹ = 1`.
pub fn compute_weights(coarse_size: f64, kappa: &CoefficientField, grad_sq_sum: &[f64]) -> WeightField {
    let h2 = coarse_size * coarse_size;
    let mut tilde: Vec<f64> = kappa
        .values
        .iter()
        .zip(grad_sq_sum)
        .map(|(k, g)| h2 * k * g)
        .collect();
    let cut = 1e-14 * tilde.iter().copied().fold(0.0, f64::max);
    let zero: Vec<bool> = tilde.iter().map(|t| *t <= cut).collect();
    for (t, z) in tilde.iter_mut().zip(&zero) {
        if *z {
            *t = 0.0;
        }
    }
    let tilde_inv = tilde
        .iter()
        .zip(&zero)
        .map(|(t, z)| if *z { 1.0 } else { 1.0 / t })
        .collect();
    WeightField { tilde, tilde_inv, zero }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::rectangle_mesh;

    #[test]
    fn no_inclusions_is_unit() {
        let m = rectangle_mesh([0.0, 0.0], [1.0, 1.0], 8, 8);
        let k = make_inclusions(&m, &[], 1e4).unwrap();
        assert!(k.values.iter().all(|v| *v == 1.0));
        assert_eq!(k.contrast, 1.0);
    }

    #[test]
    fn touching_disks_are_rejected() {
        let m = rectangle_mesh([0.0, 0.0], [1.0, 1.0], 64, 64);
        let a = Inclusion::disk([0.3, 0.5], 0.1);
        let b = Inclusion::disk([0.5, 0.5], 0.1);
        assert!(make_inclusions(&m, &[a, b], 10.0).is_err());
    }

    #[test]
    fn tiny_inclusion_is_unresolved() {
        let m = rectangle_mesh([0.0, 0.0], [1.0, 1.0], 16, 16);
        assert!(make_inclusions(&m, &[Inclusion::disk([0.5, 0.5], 0.01)], 10.0).is_err());
    }

    #[test]
    fn zero_weight_has_unit_inverse() {
        let k = CoefficientField::constant(3, 1.0);
        let w = compute_weights(0.5, &k, &[0.0, 4.0, 16.0]);
        assert_eq!(w.tilde_inv, vec![1.0, 1.0, 0.25]);
        assert!(w.zero[0]);
    }
}
