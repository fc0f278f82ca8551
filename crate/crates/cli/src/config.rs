//! Run configuration: command-line flags merged over an optional
//! `key = value` file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use gdflow::timestepping::SchemeKind;

/// Options shared by the run subcommands. Every flag can also be set in the
/// config file under the same name without the leading dashes.
#[derive(Debug, Clone, Default, Args)]
pub struct RunFlags {
    /// `key = value` file; flags given on the command line take precedence
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Subdivisions per side of the unit square, comma separated
    #[arg(long)]
    pub mesh_n: Option<String>,
    /// Mesh file to run on instead of a generated square
    #[arg(long)]
    pub mesh_file: Option<String>,
    /// imex or semi
    #[arg(long)]
    pub scheme: Option<String>,
    /// Viscosity, comma separated for studies
    #[arg(long)]
    pub nu: Option<String>,
    /// Grad-div parameter
    #[arg(long)]
    pub mu: Option<String>,
    /// Relative tolerance, one per mesh or a single value
    #[arg(long)]
    pub tolr: Option<String>,
    /// Constant step, disables the controller
    #[arg(long)]
    pub fixed_dt: Option<String>,
    #[arg(long)]
    pub tfinal: Option<String>,
    /// Output directory
    #[arg(long)]
    pub out: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
}

const KEYS: [&str; 10] = ["mesh-n", "mesh-file", "scheme", "nu", "mu", "tolr", "fixed-dt", "tfinal", "out", "seed"];

impl RunFlags {
    fn flag_values(&self) -> BTreeMap<&'static str, String> {
        let vals = [
            &self.mesh_n,
            &self.mesh_file,
            &self.scheme,
            &self.nu,
            &self.mu,
            &self.tolr,
            &self.fixed_dt,
            &self.tfinal,
            &self.out,
            &self.seed,
        ];
        KEYS.iter()
            .zip(vals)
            .filter_map(|(k, v)| v.clone().map(|v| (*k, v)))
            .collect()
    }

    /// Flags over config file entries.
    pub fn merged(&self) -> Result<BTreeMap<String, String>> {
        let mut map = match &self.config {
            Some(path) => read_config(path)?,
            None => BTreeMap::new(),
        };
        for (k, v) in self.flag_values() {
            map.insert(k.to_string(), v);
        }
        Ok(map)
    }
}

/// Parses `key = value` lines. `#` starts a comment; underscores in keys
/// are accepted in place of dashes.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("line {}: expected `key = value`, got `{raw}`", i + 1);
        };
        let key = k.trim().replace('_', "-");
        if !KEYS.contains(&key.as_str()) {
            bail!("line {}: unknown key `{}`", i + 1, k.trim());
        }
        map.insert(key, v.trim().to_string());
    }
    Ok(map)
}

pub fn read_config(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    parse_config(&text).with_context(|| format!("in config {}", path.display()))
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeshSource {
    Generated(Vec<usize>),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Driver {
    /// One tolerance per mesh.
    Adaptive(Vec<f64>),
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mesh: MeshSource,
    pub scheme: SchemeKind,
    pub nus: Vec<f64>,
    pub mu: f64,
    pub driver: Driver,
    pub t_final: f64,
    pub out: PathBuf,
    pub seed: u64,
}

/// Values used when neither a flag nor the config file sets a key.
pub struct Defaults {
    /// Generated meshes; `None` makes a mesh file mandatory.
    pub mesh_n: Option<&'static [usize]>,
    pub scheme: SchemeKind,
    pub nus: &'static [f64],
    pub mu: f64,
    pub tols: &'static [f64],
    pub t_final: f64,
    pub out: &'static str,
}

pub const MANUFACTURED: Defaults = Defaults {
    mesh_n: Some(&[6, 12, 24]),
    scheme: SchemeKind::SemiImplicit,
    nus: &[1e-2, 1e-4, 1e-6, 1e-8, 1e-10],
    mu: 0.05,
    tols: &[1e-4, 1e-5, 1e-6],
    t_final: 4.0,
    out: "out/manufactured",
};

pub const CYLINDER: Defaults = Defaults {
    mesh_n: None,
    scheme: SchemeKind::Imex,
    nus: &[1e-3],
    mu: 0.01,
    tols: &[1e-4],
    t_final: 8.0,
    out: "out/cylinder",
};

fn parse_one<T: std::str::FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.trim().parse().map_err(|e| anyhow::anyhow!("{key}: cannot parse `{v}`: {e}"))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    let out: Vec<T> = v.split(',').map(|s| parse_one(key, s)).collect::<Result<_>>()?;
    if out.is_empty() {
        bail!("{key}: empty list");
    }
    Ok(out)
}

impl RunConfig {
    pub fn resolve(map: &BTreeMap<String, String>, d: &Defaults) -> Result<Self> {
        let get = |k: &str| map.get(k).map(String::as_str);
        let mesh = match (get("mesh-n"), get("mesh-file")) {
            (Some(_), Some(_)) => bail!("give either mesh-n or mesh-file, not both"),
            (Some(n), None) => {
                let ns: Vec<usize> = parse_list("mesh-n", n)?;
                if ns.contains(&0) {
                    bail!("mesh-n: subdivisions must be positive");
                }
                MeshSource::Generated(ns)
            }
            (None, Some(f)) => MeshSource::File(PathBuf::from(f)),
            (None, None) => match d.mesh_n {
                Some(ns) => MeshSource::Generated(ns.to_vec()),
                None => bail!("a mesh-file is required"),
            },
        };
        let n_meshes = match &mesh {
            MeshSource::Generated(ns) => ns.len(),
            MeshSource::File(_) => 1,
        };
        let driver = match (get("tolr"), get("fixed-dt")) {
            (Some(_), Some(_)) => bail!("tolr and fixed-dt are mutually exclusive"),
            (None, Some(dt)) => {
                let dt: f64 = parse_one("fixed-dt", dt)?;
                if !(dt > 0.0) {
                    bail!("fixed-dt must be positive");
                }
                Driver::Fixed(dt)
            }
            (tol, None) => {
                let tols: Vec<f64> = match tol {
                    Some(t) => parse_list("tolr", t)?,
                    None if d.tols.len() == n_meshes => d.tols.to_vec(),
                    None => vec![d.tols[0]; n_meshes],
                };
                let tols = match tols.len() {
                    1 => vec![tols[0]; n_meshes],
                    k if k == n_meshes => tols,
                    k => bail!("{k} tolerances for {n_meshes} meshes"),
                };
                if tols.iter().any(|t| !(*t > 0.0)) {
                    bail!("tolr must be positive");
                }
                Driver::Adaptive(tols)
            }
        };
        let nus = match get("nu") {
            Some(v) => parse_list("nu", v)?,
            None => d.nus.to_vec(),
        };
        if nus.iter().any(|v| !(*v > 0.0)) {
            bail!("nu must be positive");
        }
        let mu = match get("mu") {
            Some(v) => parse_one("mu", v)?,
            None => d.mu,
        };
        if !(mu >= 0.0) {
            bail!("mu must be nonnegative");
        }
        let t_final = match get("tfinal") {
            Some(v) => parse_one("tfinal", v)?,
            None => d.t_final,
        };
        if !(t_final > 0.0) {
            bail!("tfinal must be positive");
        }
        let scheme = match get("scheme") {
            Some(v) => v.parse::<SchemeKind>()?,
            None => d.scheme,
        };
        Ok(RunConfig {
            mesh,
            scheme,
            nus,
            mu,
            driver,
            t_final,
            out: PathBuf::from(get("out").unwrap_or(d.out)),
            seed: get("seed").map(|s| parse_one("seed", s)).transpose()?.unwrap_or(42),
        })
    }
}
