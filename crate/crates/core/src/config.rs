//! Run configuration: a flat `section.key = value` plain-text format.
//!
//! Dimensional keys carry unit suffixes (`_mmhg`, `_mm2_pas`, `_yr`, ...) so
//! a value in the wrong unit cannot be supplied silently. Parsing is strict:
//! unknown keys are errors, and a key whose name matches a known one up to
//! the unit suffix is reported as a unit mismatch. `#` starts a comment.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linsolve::SolverKind;
use crate::mesh::{generate_rect_mesh, load_mesh, Mesh, SubdomainSpec};
use crate::model::{PhysicalParams, MMHG_TO_PA};
use crate::stepper::{FiberField, InitialData, InjuryOverride, Problem, RunSettings, Seed};

/// Mesh source: structured generator or mesh file.
#[derive(Debug, Clone, PartialEq)]
pub enum MeshSource {
    Generated { nx: usize, ny: usize, lx: f64, ly: f64 },
    File(PathBuf),
}

/// Fully validated run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mesh: MeshSource,
    pub degree_pressure: usize,
    pub degree_protein: usize,
    pub dt: f64,
    pub t_end: f64,
    pub max_steps: usize,
    pub params: PhysicalParams,
    pub fiber: FiberField,
    pub initial: InitialData,
    pub injuries: Vec<InjuryOverride>,
    pub output_dir: PathBuf,
    pub snapshot_cadence: f64,
    pub solver: SolverKind,
    pub penalty: f64,
}

struct KvMap {
    path: String,
    entries: BTreeMap<String, (usize, String)>,
}

impl KvMap {
    fn parse(text: &str, path: &str) -> Result<KvMap> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Parse {
                    path: path.to_string(),
                    line: idx + 1,
                    msg: format!("expected `key = value`, got `{line}`"),
                });
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if entries.insert(key.clone(), (idx + 1, value)).is_some() {
                return Err(Error::Config {
                    key,
                    msg: "duplicate key".into(),
                });
            }
        }
        Ok(KvMap {
            path: path.to_string(),
            entries,
        })
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key).map(|(_, v)| v)
    }

    /// On a missing key, a present key that differs only in the unit suffix
    /// is reported as a unit mismatch instead.
    fn missing(&self, key: &str) -> Error {
        let key_base = base_of(key);
        for present in self.entries.keys() {
            if base_of(present) == key_base {
                return Error::Config {
                    key: present.clone(),
                    msg: format!("unit suffix mismatch: expected `{key}`"),
                };
            }
        }
        Error::Config {
            key: key.to_string(),
            msg: "missing required key".into(),
        }
    }

    fn require_f64(&mut self, key: &str) -> Result<f64> {
        let v = self.take(key).ok_or_else(|| self.missing(key))?;
        v.parse().map_err(|_| Error::Config {
            key: key.to_string(),
            msg: format!("not a number: `{v}`"),
        })
    }

    fn opt_f64(&mut self, key: &str) -> Result<Option<f64>> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| Error::Config {
                key: key.to_string(),
                msg: format!("not a number: `{v}`"),
            }),
        }
    }

    fn require_usize(&mut self, key: &str) -> Result<usize> {
        let v = self.take(key).ok_or_else(|| self.missing(key))?;
        v.parse().map_err(|_| Error::Config {
            key: key.to_string(),
            msg: format!("not a nonnegative integer: `{v}`"),
        })
    }

    fn opt_usize(&mut self, key: &str) -> Result<Option<usize>> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| Error::Config {
                key: key.to_string(),
                msg: format!("not a nonnegative integer: `{v}`"),
            }),
        }
    }

    fn opt_str(&mut self, key: &str) -> Option<String> {
        self.take(key)
    }

    fn require_str(&mut self, key: &str) -> Result<String> {
        self.take(key).ok_or_else(|| self.missing(key))
    }

    /// All keys must be consumed by now; report leftovers, distinguishing a
    /// wrong unit suffix from a plainly unknown key.
    fn finish(self, schema: &[String]) -> Result<()> {
        if let Some((key, (line, _))) = self.entries.into_iter().next() {
            let key_base = base_of(&key);
            for known in schema {
                if base_of(known) == key_base && *known != key {
                    return Err(Error::Config {
                        key,
                        msg: format!("unit suffix mismatch: expected `{known}`"),
                    });
                }
            }
            return Err(Error::Config {
                key,
                msg: format!("unknown key (line {line} of {})", self.path),
            });
        }
        Ok(())
    }
}

/// Tracks every key the schema asked for, so leftover detection can tell a
/// unit-suffix mismatch from an unknown key.
struct Reader {
    map: KvMap,
    schema: Vec<String>,
}

impl Reader {
    fn f64(&mut self, key: &str) -> Result<f64> {
        self.schema.push(key.to_string());
        self.map.require_f64(key)
    }
    fn f64_or(&mut self, key: &str, default: f64) -> Result<f64> {
        self.schema.push(key.to_string());
        Ok(self.map.opt_f64(key)?.unwrap_or(default))
    }
    fn f64_opt(&mut self, key: &str) -> Result<Option<f64>> {
        self.schema.push(key.to_string());
        self.map.opt_f64(key)
    }
    fn usize(&mut self, key: &str) -> Result<usize> {
        self.schema.push(key.to_string());
        self.map.require_usize(key)
    }
    fn usize_or(&mut self, key: &str, default: usize) -> Result<usize> {
        self.schema.push(key.to_string());
        Ok(self.map.opt_usize(key)?.unwrap_or(default))
    }
    fn str_or(&mut self, key: &str, default: &str) -> String {
        self.schema.push(key.to_string());
        self.map.opt_str(key).unwrap_or_else(|| default.to_string())
    }
    fn str_req(&mut self, key: &str) -> Result<String> {
        self.schema.push(key.to_string());
        self.map.require_str(key)
    }
}

/// Parses and validates a configuration file.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text, &path.display().to_string())
}

pub fn parse_config_str(text: &str, path: &str) -> Result<RunConfig> {
    let map = KvMap::parse(text, path)?;
    let mut r = Reader {
        map,
        schema: Vec::new(),
    };

    let mesh = match r.str_or("mesh.kind", "generated").as_str() {
        "generated" => MeshSource::Generated {
            nx: r.usize("mesh.nx")?,
            ny: r.usize("mesh.ny")?,
            lx: r.f64("mesh.lx_m")?,
            ly: r.f64("mesh.ly_m")?,
        },
        "file" => MeshSource::File(PathBuf::from(r.str_req("mesh.path")?)),
        other => {
            return Err(Error::Config {
                key: "mesh.kind".into(),
                msg: format!("expected `generated` or `file`, got `{other}`"),
            })
        }
    };

    let degree_pressure = r.usize_or("space.degree_pressure", 1)?;
    let degree_protein = r.usize_or("space.degree_protein", 1)?;

    let dt = r.f64("time.dt_yr")?;
    let t_end = r.f64("time.t_end_yr")?;
    let max_steps = r.usize_or("time.max_steps", 1_000_000)?;

    let params = PhysicalParams {
        k0: r.f64("kinetics.k0_ug_mm3_yr")?,
        k1: r.f64("kinetics.k1_yr")?,
        k1_tilde: r.f64("kinetics.k1_tilde_yr")?,
        k12: r.f64("kinetics.k12_mm3_ug_yr")?,
        kappa0: r.f64("kinetics.kappa0_ug_mm3_yr")?,
        kappa1: r.f64("kinetics.kappa1_yr")?,
        kappa1_tilde: r.f64("kinetics.kappa1_tilde_yr")?,
        d_ext: r.f64("diffusion.d_ext_mm2_yr")?,
        d_axn: r.f64_or("diffusion.d_axn_mm2_yr", 0.0)?,
        k_a: r.f64("perfusion.k_a_mm2_pas")?,
        k_v: r.f64("perfusion.k_v_mm2_pas")?,
        k_c: r.f64("perfusion.k_c_mm2_pas")?,
        k_c_abeta: r.f64("coupling.k_c_abeta_mm2_pas")?,
        alpha_k_c: r.f64("coupling.alpha_k_c")?,
        beta_ac: r.f64("perfusion.beta_ac_pas")?,
        beta_cv: r.f64("perfusion.beta_cv_pas")?,
        beta_ac_abeta: r.f64("coupling.beta_ac_abeta_pas")?,
        beta_cv_abeta: r.f64("coupling.beta_cv_abeta_pas")?,
        alpha_beta_ac: r.f64("coupling.alpha_beta_ac")?,
        alpha_beta_cv: r.f64("coupling.alpha_beta_cv")?,
        p_arteries: r.f64("pressure.arteries_mmhg")? * MMHG_TO_PA,
        p_veins: r.f64("pressure.veins_mmhg")? * MMHG_TO_PA,
        rho: r.f64_or("tissue.rho_kg_m3", 1000.0)?,
    };

    let fiber = match r.str_or("diffusion.fiber_kind", "none").as_str() {
        "none" => FiberField::None,
        "uniform" => FiberField::Uniform([
            r.f64("diffusion.fiber_x")?,
            r.f64("diffusion.fiber_y")?,
        ]),
        other => {
            return Err(Error::Config {
                key: "diffusion.fiber_kind".into(),
                msg: format!("expected `none` or `uniform`, got `{other}`"),
            })
        }
    };

    let initial = InitialData {
        u0: r.f64("initial.u0_ug_mm3")?,
        util0: r.f64_or("initial.util0_ug_mm3", 0.0)?,
        seeds: {
            let count = r.usize_or("seed.count", 0)?;
            let mut seeds = Vec::with_capacity(count);
            for i in 0..count {
                let center = [
                    r.f64(&format!("seed.{i}.center_x_m"))?,
                    r.f64(&format!("seed.{i}.center_y_m"))?,
                ];
                let radius_sq = r.f64(&format!("seed.{i}.radius_sq_m2"))?;
                seeds.push(Seed {
                    region: SubdomainSpec::disk(center, radius_sq)?,
                    amplitude: r.f64(&format!("seed.{i}.amplitude_ug_mm3"))?,
                });
            }
            seeds
        },
    };

    let injuries = {
        let count = r.usize_or("injury.count", 0)?;
        let mut injuries = Vec::with_capacity(count);
        for i in 0..count {
            let center = [
                r.f64(&format!("injury.{i}.center_x_m"))?,
                r.f64(&format!("injury.{i}.center_y_m"))?,
            ];
            let radius_sq = r.f64(&format!("injury.{i}.radius_sq_m2"))?;
            injuries.push(InjuryOverride {
                region: SubdomainSpec::disk(center, radius_sq)?,
                beta_ac: r.f64_opt(&format!("injury.{i}.beta_ac_pas"))?,
                beta_cv: r.f64_opt(&format!("injury.{i}.beta_cv_pas"))?,
                k_c: r.f64_opt(&format!("injury.{i}.k_c_mm2_pas"))?,
            });
        }
        injuries
    };

    let output_dir = PathBuf::from(r.str_or("output.dir", "out"));
    let snapshot_cadence = r.f64_or("output.cadence_yr", 1.0)?;

    let solver = match r.str_or("solver.kind", "direct").as_str() {
        "direct" => SolverKind::Direct,
        "cg" => SolverKind::Cg {
            tol: r.f64_or("solver.tol", 1e-10)?,
            max_iter: r.usize_or("solver.max_iter", 20_000)?,
        },
        other => {
            return Err(Error::Config {
                key: "solver.kind".into(),
                msg: format!("expected `direct` or `cg`, got `{other}`"),
            })
        }
    };
    let penalty = r.f64_or("penalty.c_eta", 10.0)?;

    let schema = std::mem::take(&mut r.schema);
    r.map.finish(&schema)?;

    let cfg = RunConfig {
        mesh,
        degree_pressure,
        degree_protein,
        dt,
        t_end,
        max_steps,
        params,
        fiber,
        initial,
        injuries,
        output_dir,
        snapshot_cadence,
        solver,
        penalty,
    };
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::Config {
                key: "time.dt_yr".into(),
                msg: format!("time step must be positive, got {}", self.dt),
            });
        }
        if !(self.t_end > 0.0) {
            return Err(Error::Config {
                key: "time.t_end_yr".into(),
                msg: format!("final time must be positive, got {}", self.t_end),
            });
        }
        let steps = (self.t_end / self.dt).round();
        if steps > self.max_steps as f64 {
            return Err(Error::Config {
                key: "time.max_steps".into(),
                msg: format!("{steps} steps exceed the configured cap {}", self.max_steps),
            });
        }
        if !(self.snapshot_cadence > 0.0) {
            return Err(Error::Config {
                key: "output.cadence_yr".into(),
                msg: "snapshot cadence must be positive".into(),
            });
        }
        if self.degree_pressure == 0 || self.degree_protein == 0 {
            return Err(Error::Config {
                key: "space.degree_pressure".into(),
                msg: "polynomial degrees must be at least 1".into(),
            });
        }
        self.params.validate()?;
        if let MeshSource::Generated { nx, ny, lx, ly } = self.mesh {
            if nx == 0 || ny == 0 || !(lx > 0.0) || !(ly > 0.0) {
                return Err(Error::Config {
                    key: "mesh.nx".into(),
                    msg: "generated mesh needs nx, ny >= 1 and positive side lengths".into(),
                });
            }
            for (what, region) in self
                .initial
                .seeds
                .iter()
                .map(|s| ("seed", &s.region))
                .chain(self.injuries.iter().map(|i| ("injury", &i.region)))
            {
                if !disk_intersects_rect(region, lx, ly) {
                    return Err(Error::Config {
                        key: format!("{what} subdomain"),
                        msg: "subdomain does not intersect the domain".into(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn build_mesh(&self) -> Result<Arc<Mesh>> {
        let mesh = match &self.mesh {
            MeshSource::Generated { nx, ny, lx, ly } => generate_rect_mesh(*nx, *ny, *lx, *ly)?,
            MeshSource::File(path) => load_mesh(path)?,
        };
        Ok(Arc::new(mesh))
    }

    pub fn build_problem(&self) -> Result<Problem> {
        Problem::new(
            self.build_mesh()?,
            self.degree_pressure,
            self.degree_protein,
            self.params.clone(),
            self.injuries.clone(),
            self.penalty,
            self.solver,
            self.fiber,
        )
    }

    pub fn run_settings(&self) -> RunSettings {
        RunSettings {
            t_end: self.t_end,
            dt: self.dt,
            snapshot_cadence: self.snapshot_cadence,
        }
    }

    /// Canonical serialization; `parse(to_text(cfg))` equals `cfg`.
    pub fn to_text(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        match &self.mesh {
            MeshSource::Generated { nx, ny, lx, ly } => {
                s.push_str("mesh.kind = generated\n");
                let _ = writeln!(s, "mesh.nx = {nx}");
                let _ = writeln!(s, "mesh.ny = {ny}");
                let _ = writeln!(s, "mesh.lx_m = {lx}");
                let _ = writeln!(s, "mesh.ly_m = {ly}");
            }
            MeshSource::File(path) => {
                s.push_str("mesh.kind = file\n");
                let _ = writeln!(s, "mesh.path = {}", path.display());
            }
        }
        let _ = writeln!(s, "space.degree_pressure = {}", self.degree_pressure);
        let _ = writeln!(s, "space.degree_protein = {}", self.degree_protein);
        let _ = writeln!(s, "time.dt_yr = {}", self.dt);
        let _ = writeln!(s, "time.t_end_yr = {}", self.t_end);
        let _ = writeln!(s, "time.max_steps = {}", self.max_steps);
        let p = &self.params;
        let _ = writeln!(s, "kinetics.k0_ug_mm3_yr = {}", p.k0);
        let _ = writeln!(s, "kinetics.k1_yr = {}", p.k1);
        let _ = writeln!(s, "kinetics.k1_tilde_yr = {}", p.k1_tilde);
        let _ = writeln!(s, "kinetics.k12_mm3_ug_yr = {}", p.k12);
        let _ = writeln!(s, "kinetics.kappa0_ug_mm3_yr = {}", p.kappa0);
        let _ = writeln!(s, "kinetics.kappa1_yr = {}", p.kappa1);
        let _ = writeln!(s, "kinetics.kappa1_tilde_yr = {}", p.kappa1_tilde);
        let _ = writeln!(s, "diffusion.d_ext_mm2_yr = {}", p.d_ext);
        let _ = writeln!(s, "diffusion.d_axn_mm2_yr = {}", p.d_axn);
        match self.fiber {
            FiberField::None => {
                let _ = writeln!(s, "diffusion.fiber_kind = none");
            }
            FiberField::Uniform([x, y]) => {
                let _ = writeln!(s, "diffusion.fiber_kind = uniform");
                let _ = writeln!(s, "diffusion.fiber_x = {x}");
                let _ = writeln!(s, "diffusion.fiber_y = {y}");
            }
        }
        let _ = writeln!(s, "perfusion.k_a_mm2_pas = {}", p.k_a);
        let _ = writeln!(s, "perfusion.k_v_mm2_pas = {}", p.k_v);
        let _ = writeln!(s, "perfusion.k_c_mm2_pas = {}", p.k_c);
        let _ = writeln!(s, "perfusion.beta_ac_pas = {}", p.beta_ac);
        let _ = writeln!(s, "perfusion.beta_cv_pas = {}", p.beta_cv);
        let _ = writeln!(s, "coupling.k_c_abeta_mm2_pas = {}", p.k_c_abeta);
        let _ = writeln!(s, "coupling.alpha_k_c = {}", p.alpha_k_c);
        let _ = writeln!(s, "coupling.beta_ac_abeta_pas = {}", p.beta_ac_abeta);
        let _ = writeln!(s, "coupling.alpha_beta_ac = {}", p.alpha_beta_ac);
        let _ = writeln!(s, "coupling.beta_cv_abeta_pas = {}", p.beta_cv_abeta);
        let _ = writeln!(s, "coupling.alpha_beta_cv = {}", p.alpha_beta_cv);
        let _ = writeln!(s, "pressure.arteries_mmhg = {}", p.p_arteries / MMHG_TO_PA);
        let _ = writeln!(s, "pressure.veins_mmhg = {}", p.p_veins / MMHG_TO_PA);
        let _ = writeln!(s, "tissue.rho_kg_m3 = {}", p.rho);
        let _ = writeln!(s, "initial.u0_ug_mm3 = {}", self.initial.u0);
        let _ = writeln!(s, "initial.util0_ug_mm3 = {}", self.initial.util0);
        let _ = writeln!(s, "seed.count = {}", self.initial.seeds.len());
        for (i, seed) in self.initial.seeds.iter().enumerate() {
            let SubdomainSpec::Disk { center, radius_sq } = seed.region else {
                unreachable!("seeds are disks by construction");
            };
            let _ = writeln!(s, "seed.{i}.center_x_m = {}", center[0]);
            let _ = writeln!(s, "seed.{i}.center_y_m = {}", center[1]);
            let _ = writeln!(s, "seed.{i}.radius_sq_m2 = {radius_sq}");
            let _ = writeln!(s, "seed.{i}.amplitude_ug_mm3 = {}", seed.amplitude);
        }
        let _ = writeln!(s, "injury.count = {}", self.injuries.len());
        for (i, inj) in self.injuries.iter().enumerate() {
            let SubdomainSpec::Disk { center, radius_sq } = inj.region else {
                unreachable!("injuries are disks by construction");
            };
            let _ = writeln!(s, "injury.{i}.center_x_m = {}", center[0]);
            let _ = writeln!(s, "injury.{i}.center_y_m = {}", center[1]);
            let _ = writeln!(s, "injury.{i}.radius_sq_m2 = {radius_sq}");
            if let Some(v) = inj.beta_ac {
                let _ = writeln!(s, "injury.{i}.beta_ac_pas = {v}");
            }
            if let Some(v) = inj.beta_cv {
                let _ = writeln!(s, "injury.{i}.beta_cv_pas = {v}");
            }
            if let Some(v) = inj.k_c {
                let _ = writeln!(s, "injury.{i}.k_c_mm2_pas = {v}");
            }
        }
        let _ = writeln!(s, "output.dir = {}", self.output_dir.display());
        let _ = writeln!(s, "output.cadence_yr = {}", self.snapshot_cadence);
        match self.solver {
            SolverKind::Direct => {
                let _ = writeln!(s, "solver.kind = direct");
            }
            SolverKind::Cg { tol, max_iter } => {
                let _ = writeln!(s, "solver.kind = cg");
                let _ = writeln!(s, "solver.tol = {tol}");
                let _ = writeln!(s, "solver.max_iter = {max_iter}");
            }
        }
        let _ = writeln!(s, "penalty.c_eta = {}", self.penalty);
        s
    }
}

/// Key name with its trailing `_suffix` token removed.
fn base_of(k: &str) -> &str {
    match k.rfind('_') {
        Some(i) => &k[..i],
        None => k,
    }
}

fn disk_intersects_rect(region: &SubdomainSpec, lx: f64, ly: f64) -> bool {
    match *region {
        SubdomainSpec::Whole => true,
        SubdomainSpec::Disk { center, radius_sq } => {
            let cx = center[0].clamp(0.0, lx);
            let cy = center[1].clamp(0.0, ly);
            let d2 = (center[0] - cx).powi(2) + (center[1] - cy).powi(2);
            d2 < radius_sq
        }
    }
}
