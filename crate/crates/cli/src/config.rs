//! Run configuration: a sectioned TOML file.
//!
//! Every optional key has a default; [`RunConfig::resolve`] fills them in so
//! the manifest written next to the outputs reproduces the run exactly.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

use holewave::capacitance::SurfaceMesh;
use holewave::cluster::{node_lattice, periodic_layout, Cluster, Hole, HoleShape, SourceConfig};
use holewave::design::{DensityField, FieldManifest};
use holewave::fields::FieldKind;
use holewave::retarded::{DEFAULT_MAX_ITER, DEFAULT_TOL};
use holewave::signal::{CausalSignal, Interp, Trace};
use holewave::{AxisBox, Vec3};

pub type CbarFn = Box<dyn Fn(&Vec3) -> f64>;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub signal: Option<SignalSpec>,
    pub source: Option<SourceSpec>,
    pub cluster: Option<ClusterSpec>,
    pub time: Option<TimeSpec>,
    pub probes: Option<ProbeSpec>,
    pub grid: Option<GridSpec>,
    pub medium: Option<MediumSpec>,
    pub design: Option<DesignSpec>,
    pub oracle: Option<OracleSpec>,
    pub convergence: Option<ConvergenceSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalSpec {
    /// `smooth-bump`, `delayed-smooth-bump` or `user-sampled`.
    #[serde(default = "default_signal_kind")]
    pub kind: String,
    pub amplitude: Option<f64>,
    pub width: Option<f64>,
    pub delay: Option<f64>,
    /// `time,value` samples for `user-sampled`.
    pub file: Option<PathBuf>,
}

fn default_signal_kind() -> String {
    "smooth-bump".into()
}

impl Default for SignalSpec {
    fn default() -> Self {
        Self {
            kind: default_signal_kind(),
            amplitude: None,
            width: None,
            delay: None,
            file: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub position: [f64; 3],
    pub c0: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ClusterSpec {
    /// Spheres at `centers`, with one `radius`, per-hole `radii`, or a
    /// `sweep` of shared radii run one after another.
    Spheres {
        centers: Vec<[f64; 3]>,
        radius: Option<f64>,
        radii: Option<Vec<f64>>,
        sweep: Option<Vec<f64>>,
    },
    /// Equal spheres on the nodes of a lattice spanning the closed box.
    Lattice {
        min: [f64; 3],
        max: [f64; 3],
        counts: [usize; 3],
        radius: f64,
    },
    /// One sphere of capacitance `cbar * cell_volume` per cubic cell.
    Periodic {
        min: [f64; 3],
        max: [f64; 3],
        cell_volume: f64,
        cbar: f64,
    },
    /// Copies of a reference OBJ mesh, scaled and placed at `centers`.
    Mesh {
        centers: Vec<[f64; 3]>,
        mesh: PathBuf,
        scale: f64,
    },
    Empty,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    pub t_end: f64,
    /// Resolved per run when absent.
    pub dt: Option<f64>,
    pub interp: Option<Interp>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    pub points: Vec<[f64; 3]>,
    /// Resolved to `5 a` when absent.
    pub exclusion: Option<f64>,
    pub fields: Option<Vec<FieldKind>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub center: [f64; 3],
    pub spacing: [f64; 3],
    pub counts: [usize; 3],
    pub times: Vec<f64>,
    pub field: Option<FieldKind>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediumSpec {
    pub min: [f64; 3],
    pub max: [f64; 3],
    /// Voxels per axis.
    pub counts: [usize; 3],
    /// Constant capacitance density, or node files written by `design`.
    pub cbar: Option<f64>,
    pub cbar_nodes: Option<PathBuf>,
    pub cbar_manifest: Option<PathBuf>,
    /// Defaults to `h / (2 c0)`.
    pub dt: Option<f64>,
    /// Periodic clusters with `n^3` cells to compare against, one per entry.
    pub compare: Option<Vec<usize>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignInput {
    Rho,
    Cbar,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSpec {
    pub input: DesignInput,
    pub min: [f64; 3],
    pub max: [f64; 3],
    pub h: f64,
    /// Constant input field, or node files.
    pub value: Option<f64>,
    pub nodes: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub cell_volume: f64,
    pub tolerant: Option<bool>,
    pub rtol: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    pub radii: Option<Vec<f64>>,
    pub center: Option<[f64; 3]>,
    /// Time steps per crossing of the hole, `2r / (c0 dt)`.
    pub divisions: Option<usize>,
    pub threshold: Option<f64>,
    /// Defaults to two points at distance 0.1 from the centre.
    pub probes: Option<Vec<[f64; 3]>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConvergenceKind {
    /// Sphere-oracle radius sweep.
    Radius,
    /// Retarded-system time-step halving.
    Dt,
    /// Volume solver `dt, h` halving.
    Medium,
    /// Cluster-versus-medium sweep over the cell volume.
    Cell,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSpec {
    pub kind: ConvergenceKind,
    /// Number of refinements after the base run.
    pub levels: Option<usize>,
    /// `medium`: voxels per axis of the coarsest grid.
    pub base_counts: Option<usize>,
    /// `cell`: cells per axis of each periodic cluster.
    pub cells: Option<Vec<usize>>,
}

pub const DEFAULT_C0: f64 = 1.0;
pub const DEFAULT_ORACLE_RADII: [f64; 3] = [0.02, 0.01, 0.005];
pub const DEFAULT_ORACLE_DIVISIONS: usize = 20;
pub const DEFAULT_ORACLE_THRESHOLD: f64 = 1.8;
pub const DEFAULT_DESIGN_RTOL: f64 = 1e-10;

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.anchor_paths(base)?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Makes file references absolute relative to `base` and checks they
    /// exist.
    fn anchor_paths(&mut self, base: &Path) -> Result<()> {
        let fix = |p: &mut PathBuf| -> Result<()> {
            let joined = if p.is_absolute() { p.clone() } else { base.join(&*p) };
            *p = joined
                .canonicalize()
                .with_context(|| format!("referenced file {} does not exist", joined.display()))?;
            Ok(())
        };
        if let Some(SignalSpec { file: Some(f), .. }) = &mut self.signal {
            fix(f)?;
        }
        if let Some(ClusterSpec::Mesh { mesh, .. }) = &mut self.cluster {
            fix(mesh)?;
        }
        if let Some(m) = &mut self.medium {
            for p in [&mut m.cbar_nodes, &mut m.cbar_manifest].into_iter().flatten() {
                fix(p)?;
            }
        }
        if let Some(d) = &mut self.design {
            for p in [&mut d.nodes, &mut d.manifest].into_iter().flatten() {
                fix(p)?;
            }
        }
        Ok(())
    }

    /// Fills every run-independent default.
    pub fn resolve(&mut self) -> Result<()> {
        if let Some(s) = &mut self.signal {
            match s.kind.as_str() {
                "smooth-bump" => {
                    s.amplitude.get_or_insert(1.0);
                    s.width.get_or_insert(1.0);
                }
                "delayed-smooth-bump" => {
                    s.amplitude.get_or_insert(1.0);
                    s.width.get_or_insert(1.0);
                    s.delay.get_or_insert(0.0);
                }
                "user-sampled" => ensure!(s.file.is_some(), "user-sampled signal needs `file`"),
                other => bail!("unknown signal kind '{other}'"),
            }
        }
        if let Some(s) = &mut self.source {
            s.c0.get_or_insert(DEFAULT_C0);
        }
        if let Some(t) = &mut self.time {
            ensure!(t.t_end > 0.0, "time.t_end must be positive, got {}", t.t_end);
            t.interp.get_or_insert(Interp::Cubic);
            t.tol.get_or_insert(DEFAULT_TOL);
            t.max_iter.get_or_insert(DEFAULT_MAX_ITER);
        }
        if let Some(p) = &mut self.probes {
            p.fields.get_or_insert_with(|| vec![FieldKind::Scattered, FieldKind::Total]);
        }
        if let Some(g) = &mut self.grid {
            g.field.get_or_insert(FieldKind::Scattered);
        }
        if let Some(d) = &mut self.design {
            d.tolerant.get_or_insert(false);
            d.rtol.get_or_insert(DEFAULT_DESIGN_RTOL);
        }
        if let Some(o) = &mut self.oracle {
            o.radii.get_or_insert_with(|| DEFAULT_ORACLE_RADII.to_vec());
            let center = *o.center.get_or_insert([0.1, 0.0, 0.0]);
            o.divisions.get_or_insert(DEFAULT_ORACLE_DIVISIONS);
            o.threshold.get_or_insert(DEFAULT_ORACLE_THRESHOLD);
            o.probes.get_or_insert_with(|| {
                vec![
                    [center[0], center[1] + 0.1, center[2]],
                    [center[0], center[1], center[2] + 0.1],
                ]
            });
        }
        if let Some(c) = &mut self.convergence {
            c.levels.get_or_insert(2);
            match c.kind {
                ConvergenceKind::Medium => {
                    c.base_counts.get_or_insert(3);
                }
                ConvergenceKind::Cell => {
                    c.cells.get_or_insert_with(|| vec![3, 4, 5]);
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn signal(&self) -> Result<CausalSignal> {
        let spec = self.signal.clone().unwrap_or_default();
        let trace = match &spec.file {
            Some(path) => {
                let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
                Some(Trace::read_csv(BufReader::new(f))?)
            }
            None => None,
        };
        let params: Vec<f64> = [spec.amplitude, spec.width, spec.delay].into_iter().map_while(|v| v).collect();
        Ok(CausalSignal::from_spec(&spec.kind, &params, trace)?)
    }

    pub fn source(&self) -> Result<SourceConfig> {
        let s = self.source.as_ref().context("config needs a [source] section")?;
        Ok(SourceConfig::new(
            Vec3::from(s.position),
            self.signal()?,
            s.c0.unwrap_or(DEFAULT_C0),
        )?)
    }

    pub fn time(&self) -> Result<&TimeSpec> {
        self.time.as_ref().context("config needs a [time] section")
    }

    pub fn cluster_spec(&self) -> Result<&ClusterSpec> {
        self.cluster.as_ref().context("config needs a [cluster] section")
    }
}

impl ClusterSpec {
    /// Shared radii to run one after another; a single `None` otherwise.
    pub fn sweep(&self) -> Vec<Option<f64>> {
        match self {
            ClusterSpec::Spheres { sweep: Some(s), .. } => s.iter().map(|r| Some(*r)).collect(),
            _ => vec![None],
        }
    }

    /// Builds the cluster; `radius` overrides the radii of a sphere cluster.
    pub fn build(&self, radius: Option<f64>) -> Result<Cluster> {
        let cluster = match self {
            ClusterSpec::Spheres {
                centers,
                radius: r,
                radii,
                ..
            } => {
                let radii: Vec<f64> = match (radius, r, radii) {
                    (Some(r), _, _) => vec![r; centers.len()],
                    (None, Some(r), None) => vec![*r; centers.len()],
                    (None, None, Some(rs)) => {
                        ensure!(rs.len() == centers.len(), "{} radii for {} centres", rs.len(), centers.len());
                        rs.clone()
                    }
                    (None, None, None) => bail!("sphere cluster needs `radius`, `radii` or `sweep`"),
                    (None, Some(_), Some(_)) => bail!("give either `radius` or `radii`, not both"),
                };
                Cluster::new(
                    centers
                        .iter()
                        .zip(radii)
                        .map(|(c, r)| Hole::sphere(Vec3::from(*c), r))
                        .collect(),
                )?
            }
            ClusterSpec::Lattice {
                min,
                max,
                counts,
                radius,
            } => node_lattice(&AxisBox::new(*min, *max)?, *counts, *radius)?,
            ClusterSpec::Periodic {
                min,
                max,
                cell_volume,
                cbar,
            } => periodic_layout(&AxisBox::new(*min, *max)?, *cell_volume, &|_| *cbar)?,
            ClusterSpec::Mesh { centers, mesh, scale } => {
                let f = fs::File::open(mesh).with_context(|| format!("opening {}", mesh.display()))?;
                let reference = Arc::new(SurfaceMesh::read_obj(BufReader::new(f))?);
                let label = mesh.display().to_string();
                Cluster::new(
                    centers
                        .iter()
                        .map(|c| Hole {
                            center: Vec3::from(*c),
                            shape: HoleShape::Mesh {
                                mesh: reference.clone(),
                                scale: *scale,
                                label: label.clone(),
                            },
                            capacitance: None,
                        })
                        .collect(),
                )?
            }
            ClusterSpec::Empty => Cluster::empty(),
        };
        Ok(cluster)
    }

    /// Sphere-cluster description of `cluster`, the format `design` emits.
    pub fn from_spheres(cluster: &Cluster) -> Result<Self> {
        let mut centers = Vec::with_capacity(cluster.len());
        let mut radii = Vec::with_capacity(cluster.len());
        for h in cluster.holes() {
            match h.shape {
                HoleShape::Sphere { radius } => {
                    centers.push([h.center.x, h.center.y, h.center.z]);
                    radii.push(radius);
                }
                HoleShape::Mesh { .. } => bail!("only sphere clusters can be written as a configuration"),
            }
        }
        Ok(ClusterSpec::Spheres {
            centers,
            radius: None,
            radii: Some(radii),
            sweep: None,
        })
    }
}

impl MediumSpec {
    pub fn bx(&self) -> Result<AxisBox> {
        Ok(AxisBox::new(self.min, self.max)?)
    }

    /// Capacitance density as a function of position.
    pub fn cbar_fn(&self) -> Result<CbarFn> {
        match (self.cbar, &self.cbar_nodes, &self.cbar_manifest) {
            (Some(c), None, None) => {
                ensure!(c >= 0.0, "medium.cbar must be non-negative, got {c}");
                Ok(Box::new(move |_| c))
            }
            (None, Some(nodes), Some(manifest)) => {
                let field = read_node_field(nodes, manifest)?;
                Ok(Box::new(move |x| field.sample(x)))
            }
            _ => bail!("medium needs either `cbar` or both `cbar_nodes` and `cbar_manifest`"),
        }
    }
}

impl DesignSpec {
    pub fn input_field(&self) -> Result<DensityField> {
        let bx = AxisBox::new(self.min, self.max)?;
        match (self.value, &self.nodes, &self.manifest) {
            (Some(v), None, None) => Ok(DensityField::constant(bx, self.h, v)?),
            (None, Some(nodes), Some(manifest)) => {
                let field = read_node_field(nodes, manifest)?;
                ensure!(
                    field.bx().approx_eq(&bx, 1e-12) && (field.spacing() - self.h).abs() <= 1e-12 * self.h,
                    "node file grid disagrees with design.min/max/h"
                );
                Ok(field)
            }
            _ => bail!("design needs either `value` or both `nodes` and `manifest`"),
        }
    }
}

pub fn read_node_field(nodes: &Path, manifest: &Path) -> Result<DensityField> {
    let text = fs::read_to_string(manifest).with_context(|| format!("reading {}", manifest.display()))?;
    let man: FieldManifest = toml::from_str(&text).with_context(|| format!("parsing {}", manifest.display()))?;
    let f = fs::File::open(nodes).with_context(|| format!("opening {}", nodes.display()))?;
    Ok(DensityField::read_nodes(BufReader::new(f), &man)?)
}
