//! TOML study configuration.
//!
//! ```toml
//! seed = 0
//!
//! [domain]
//! polygon = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]
//!
//! [mesh]
//! coarse_sizes = [0.25, 0.125]   # strictly decreasing
//! fine_size = 0.015625           # or refinement_levels = 4
//!
//! [coefficient]
//! contrast = 1e4
//! [[coefficient.inclusions]]
//! shape = "disk"                 # or "ellipse"
//! center = [0.4268, 0.3232]
//! radii = [0.05, 0.05]
//! # value = 1e3                  # optional, overrides the contrast
//!
//! [source]
//! kind = "constant"              # "product-sine" or "piecewise"
//! value = 1.0
//!
//! [spaces]
//! kinds = ["S", "SNAP", "H"]
//!
//! [budgets]                      # omitted budgets follow the threshold
//! spectral = 4
//! steklov = 4
//! pod = 8
//! threshold = 1.0
//!
//! [spectra]
//! contrasts = [1.0, 1e4]
//! count = 8
//!
//! [appendix]
//! contrasts = [1.0, 1e2, 1e4, 1e6]
//! random_traces = 8
//! frequencies = 4
//! # neighborhood = 6
//!
//! [output]
//! dir = "out"
//! timing = false
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::coefficient::{make_inclusions, CoefficientField, Inclusion};
use crate::error::{Error, Result};
use crate::global::SpaceKind;
use crate::mesh::{dist, rectangle_bounds, MeshHierarchy, Point};
use crate::pipeline::{Budgets, Setup};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub domain: DomainSpec,
    pub mesh: MeshSpec,
    #[serde(default)]
    pub coefficient: CoefficientSpec,
    #[serde(default)]
    pub source: SourceSpec,
    #[serde(default)]
    pub spaces: SpacesSpec,
    #[serde(default)]
    pub budgets: BudgetSpec,
    #[serde(default)]
    pub spectra: SpectraSpec,
    #[serde(default)]
    pub appendix: AppendixSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub polygon: Vec<Point>,
}

impl Default for DomainSpec {
    fn default() -> Self {
        Self { polygon: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]] }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSpec {
    pub coarse_sizes: Vec<f64>,
    pub refinement_levels: Option<usize>,
    pub fine_size: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSpec {
    #[serde(default = "one")]
    pub contrast: f64,
    #[serde(default)]
    pub inclusions: Vec<Inclusion>,
}

impl Default for CoefficientSpec {
    fn default() -> Self {
        Self { contrast: 1.0, inclusions: vec![] }
    }
}

/// Cellwise source, evaluated at cell centroids.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SourceSpec {
    Constant {
        #[serde(default = "one")]
        value: f64,
    },
    /// `a sin(mπx̂) sin(nπŷ)` in coordinates scaled to the unit square.
    ProductSine {
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default = "one_u")]
        m: u32,
        #[serde(default = "one_u")]
        n: u32,
    },
    /// `inside` on the box `[lower, upper]`, `outside` elsewhere.
    Piecewise { inside: f64, outside: f64, lower: Point, upper: Point },
}

impl Default for SourceSpec {
    fn default() -> Self {
        Self::Constant { value: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpacesSpec {
    pub kinds: Vec<String>,
}

impl Default for SpacesSpec {
    fn default() -> Self {
        Self { kinds: vec!["S".into(), "SNAP".into(), "H".into()] }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSpec {
    pub spectral: Option<usize>,
    pub steklov: Option<usize>,
    pub pod: Option<usize>,
    #[serde(default = "one")]
    pub threshold: f64,
}

impl Default for BudgetSpec {
    fn default() -> Self {
        Self { spectral: None, steklov: None, pod: None, threshold: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectraSpec {
    pub contrasts: Vec<f64>,
    pub count: usize,
}

impl Default for SpectraSpec {
    fn default() -> Self {
        Self { contrasts: vec![1.0, 1e4], count: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppendixSpec {
    #[serde(default = "decades")]
    pub contrasts: Vec<f64>,
    #[serde(default = "eight")]
    pub random_traces: usize,
    #[serde(default = "four")]
    pub frequencies: usize,
    pub neighborhood: Option<usize>,
}

impl Default for AppendixSpec {
    fn default() -> Self {
        Self { contrasts: decades(), random_traces: 8, frequencies: 4, neighborhood: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: Option<PathBuf>,
    /// Fill the `seconds` column with wall times; off keeps artifacts reproducible.
    #[serde(default)]
    pub timing: bool,
}

fn one() -> f64 {
    1.0
}

fn one_u() -> u32 {
    1
}

fn four() -> usize {
    4
}

fn eight() -> usize {
    8
}

fn decades() -> Vec<f64> {
    vec![1.0, 1e2, 1e4, 1e6]
}

fn bad(m: impl Into<String>) -> Error {
    Error::Config(m.into())
}

impl StudyConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| bad(e.to_string().trim_end().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn validate(&self) -> Result<()> {
        rectangle_bounds(&self.domain.polygon)?;
        let hs = &self.mesh.coarse_sizes;
        if hs.is_empty() {
            return Err(bad("mesh.coarse_sizes is empty"));
        }
        if hs.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
            return Err(bad("mesh.coarse_sizes must be positive"));
        }
        if hs.windows(2).any(|w| w[1] >= w[0]) {
            return Err(bad("mesh.coarse_sizes must be strictly decreasing"));
        }
        match (self.mesh.refinement_levels, self.mesh.fine_size) {
            (Some(_), Some(_)) => return Err(bad("mesh: give refinement_levels or fine_size, not both")),
            (None, None) => return Err(bad("mesh: refinement_levels or fine_size is required")),
            (Some(0), _) => return Err(bad("mesh.refinement_levels must be at least 1")),
            (_, Some(h)) if !(h > 0.0 && h.is_finite()) => return Err(bad("mesh.fine_size must be positive")),
            _ => {}
        }
        if !(self.coefficient.contrast >= 1.0 && self.coefficient.contrast.is_finite()) {
            return Err(bad("coefficient.contrast must be a finite value ≥ 1"));
        }
        self.kinds()?;
        let b = &self.budgets;
        for (name, v) in [("spectral", b.spectral), ("steklov", b.steklov), ("pod", b.pod)] {
            if v == Some(0) {
                return Err(bad(format!("budgets.{name} must be positive")));
            }
        }
        if !(b.threshold > 0.0 && b.threshold.is_finite()) {
            return Err(bad("budgets.threshold must be positive"));
        }
        if self.spectra.count == 0 {
            return Err(bad("spectra.count must be positive"));
        }
        for (name, list) in [("spectra", &self.spectra.contrasts), ("appendix", &self.appendix.contrasts)] {
            if list.is_empty() || list.iter().any(|&c| !(c >= 1.0 && c.is_finite())) {
                return Err(bad(format!("{name}.contrasts must be nonempty with values ≥ 1")));
            }
        }
        if let SourceSpec::Piecewise { lower, upper, .. } = self.source {
            if !(lower[0] < upper[0] && lower[1] < upper[1]) {
                return Err(bad("source: piecewise box needs lower < upper"));
            }
        }
        Ok(())
    }

    pub fn kinds(&self) -> Result<Vec<SpaceKind>> {
        if self.spaces.kinds.is_empty() {
            return Err(bad("spaces.kinds is empty"));
        }
        self.spaces
            .kinds
            .iter()
            .map(|k| SpaceKind::parse(k).ok_or_else(|| bad(format!("spaces: unknown kind {k:?}"))))
            .collect()
    }

    pub fn budgets(&self) -> Budgets {
        Budgets {
            spectral: self.budgets.spectral,
            steklov: self.budgets.steklov,
            pod: self.budgets.pod,
            threshold: self.budgets.threshold,
        }
    }

    pub fn hierarchy(&self, coarse_size: f64) -> Result<MeshHierarchy> {
        match (self.mesh.refinement_levels, self.mesh.fine_size) {
            (Some(l), _) => MeshHierarchy::build(&self.domain.polygon, coarse_size, l),
            (None, Some(h)) => MeshHierarchy::build_with_fine_size(&self.domain.polygon, coarse_size, h),
            (None, None) => Err(bad("mesh: refinement_levels or fine_size is required")),
        }
    }

    /// `κ ≡ 1` without inclusions.
    pub fn coefficient(&self, mesh: &MeshHierarchy, contrast: f64) -> Result<CoefficientField> {
        if self.coefficient.inclusions.is_empty() {
            Ok(CoefficientField::constant(mesh.fine.num_cells(), 1.0))
        } else {
            make_inclusions(&mesh.fine, &self.coefficient.inclusions, contrast)
        }
    }

    pub fn source(&self, mesh: &MeshHierarchy) -> Result<Vec<f64>> {
        let (lo, hi) = rectangle_bounds(&self.domain.polygon)?;
        let fine = &mesh.fine;
        Ok((0..fine.num_cells())
            .map(|c| {
                let p = fine.centroid(c);
                match self.source {
                    SourceSpec::Constant { value } => value,
                    SourceSpec::ProductSine { amplitude, m, n } => {
                        let x = (p[0] - lo[0]) / (hi[0] - lo[0]);
                        let y = (p[1] - lo[1]) / (hi[1] - lo[1]);
                        let pi = std::f64::consts::PI;
                        amplitude * (m as f64 * pi * x).sin() * (n as f64 * pi * y).sin()
                    }
                    SourceSpec::Piecewise { inside, outside, lower, upper } => {
                        let within = (lower[0]..=upper[0]).contains(&p[0]) && (lower[1]..=upper[1]).contains(&p[1]);
                        if within {
                            inside
                        } else {
                            outside
                        }
                    }
                }
            })
            .collect())
    }

    /// Mesh, coefficient at `contrast`, source and all local systems for one `H`.
    pub fn setup(&self, coarse_size: f64, contrast: f64) -> Result<Setup> {
        let mesh = self.hierarchy(coarse_size)?;
        let kappa = self.coefficient(&mesh, contrast)?;
        let f = self.source(&mesh)?;
        Setup::new(mesh, kappa, f)
    }

    /// Configured neighborhood, else the coarse node nearest the first
    /// inclusion, else the one nearest the domain center.
    pub fn appendix_neighborhood(&self, mesh: &MeshHierarchy) -> Result<usize> {
        let n = mesh.coarse.num_nodes();
        if let Some(i) = self.appendix.neighborhood {
            return if i < n {
                Ok(i)
            } else {
                Err(bad(format!("appendix.neighborhood {i} exceeds the {n} coarse nodes")))
            };
        }
        let target = match self.coefficient.inclusions.first() {
            Some(inc) => inc.center,
            None => {
                let (lo, hi) = rectangle_bounds(&self.domain.polygon)?;
                [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0]
            }
        };
        Ok((0..n)
            .min_by(|&a, &b| dist(mesh.coarse.nodes[a], target).total_cmp(&dist(mesh.coarse.nodes[b], target)))
            .unwrap_or(0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[mesh]\ncoarse_sizes = [0.5]\nrefinement_levels = 2\n";

    #[test]
    fn minimal_defaults() {
        let c = StudyConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.seed, 0);
        assert_eq!(c.kinds().unwrap(), vec![SpaceKind::S, SpaceKind::Snap, SpaceKind::H]);
        assert_eq!(c.source, SourceSpec::Constant { value: 1.0 });
        assert_eq!(c.appendix.contrasts.len(), 4);
    }

    #[test]
    fn rejects_increasing_sizes_and_unknown_keys() {
        let inc = "[mesh]\ncoarse_sizes = [0.25, 0.5]\nrefinement_levels = 2\n";
        assert!(matches!(StudyConfig::parse(inc), Err(Error::Config(_))));
        let extra = format!("{MINIMAL}[budgets]\nspectrall = 3\n");
        assert!(matches!(StudyConfig::parse(&extra), Err(Error::Config(_))));
        let zero = format!("{MINIMAL}[budgets]\npod = 0\n");
        assert!(matches!(StudyConfig::parse(&zero), Err(Error::Config(_))));
    }

    #[test]
    fn product_sine_source() {
        let text = format!("{MINIMAL}[source]\nkind = \"product-sine\"\namplitude = 2.0\n");
        let c = StudyConfig::parse(&text).unwrap();
        let mesh = c.hierarchy(0.5).unwrap();
        let f = c.source(&mesh).unwrap();
        assert!(f.iter().all(|&v| v > 0.0 && v <= 2.0));
    }
}
