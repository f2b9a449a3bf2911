use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::analysis::{diffusivity, diffusivity_stderr, msd, Trajectory};
use super::SimError;
use crate::quantities::{Dataset, Observable, Table, Unit, Values};

pub type Inputs = BTreeMap<String, Dataset>;
pub type Params = BTreeMap<String, String>;

/// A stand-in application: `run` writes the program's native output,
/// `adapt` converts that text into the intermediate format.
pub trait MockApp: Send + Sync {
    fn program(&self) -> &'static str;
    fn run(&self, inputs: &Inputs, params: &Params) -> Result<String, SimError>;
    fn adapt(&self, native: &str) -> Result<Dataset, SimError>;

    fn execute(&self, inputs: &Inputs, params: &Params) -> Result<Dataset, SimError> {
        self.adapt(&self.run(inputs, params)?)
    }
}

pub const MOCK_PROGRAMS: &[&str] = &["izafetch", "bigmac", "gulp", "dlpoly", "msdtool", "echo"];

pub fn app_for(program: &str) -> Option<Box<dyn MockApp>> {
    Some(match program {
        "izafetch" => Box::new(Izafetch),
        "bigmac" => Box::new(Bigmac),
        "gulp" => Box::new(Gulp),
        "dlpoly" => Box::new(Dlpoly),
        "msdtool" => Box::new(Msdtool),
        "echo" => Box::new(Echo),
        _ => return None,
    })
}

fn param<T: FromStr>(params: &Params, key: &str) -> Result<Option<T>, SimError> {
    match params.get(key) {
        None => Ok(None),
        Some(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| SimError::BadParams(format!("{key}={v:?} does not parse"))),
    }
}

fn required<T: FromStr>(params: &Params, key: &str) -> Result<T, SimError> {
    param(params, key)?.ok_or_else(|| SimError::BadParams(format!("missing parameter {key}")))
}

fn rng(params: &Params) -> Result<ChaCha8Rng, SimError> {
    Ok(ChaCha8Rng::seed_from_u64(param(params, "seed")?.unwrap_or(0)))
}

fn slot<'a>(inputs: &'a Inputs, name: &str) -> Result<&'a Dataset, SimError> {
    inputs.get(name).ok_or_else(|| SimError::MissingInput(name.to_string()))
}

fn scalar_in(ds: &Dataset, name: &str, unit: &str) -> Result<f64, SimError> {
    let obs = ds.require(name)?;
    let v = obs.as_scalar().ok_or_else(|| SimError::BadParams(format!("{name} is not a scalar")))?;
    Ok(v * obs.unit().factor_to(&Unit::parse(unit)?)?)
}

fn table_in<'a>(ds: &'a Dataset, name: &str, unit: &str) -> Result<(&'a Table, f64), SimError> {
    let obs = ds.require(name)?;
    let t = obs.as_table().ok_or_else(|| SimError::BadParams(format!("{name} is not a table")))?;
    Ok((t, obs.unit().factor_to(&Unit::parse(unit)?)?))
}

fn table(name: &str, unit: &str, columns: &[&str], data: Vec<f64>) -> Result<Observable, SimError> {
    let t = Table::new(columns.iter().map(|c| c.to_string()).collect(), data)?;
    Ok(Observable::new(name, Unit::parse(unit)?, Values::Table(t))?)
}

fn bad_line(line: usize, reason: impl Into<String>) -> SimError {
    SimError::Format { line, reason: reason.into() }
}

fn num<T: FromStr>(s: &str, line: usize) -> Result<T, SimError> {
    s.trim().parse().map_err(|_| bad_line(line, format!("not a number: {s:?}")))
}

/// Framework database fetch. Native format: comma-separated values.
///
/// ```text
/// # izafetch framework=TOY
/// cell_length,10.000000,A
/// site,x_A
/// 0,0.000000
/// ```
pub struct Izafetch;

impl MockApp for Izafetch {
    fn program(&self) -> &'static str {
        "izafetch"
    }

    fn run(&self, _inputs: &Inputs, params: &Params) -> Result<String, SimError> {
        let l: usize = required(params, "L")?;
        let spacing: f64 = param(params, "spacing")?.unwrap_or(1.0);
        if l < 2 {
            return Err(SimError::BadParams(format!("lattice needs L >= 2, got {l}")));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(SimError::BadParams("spacing must be positive".into()));
        }
        let mut out = String::from("# izafetch framework=TOY\n");
        let _ = writeln!(out, "cell_length,{:.6},A", l as f64 * spacing);
        out.push_str("site,x_A\n");
        for i in 0..l {
            let _ = writeln!(out, "{i},{:.6}", i as f64 * spacing);
        }
        Ok(out)
    }

    fn adapt(&self, native: &str) -> Result<Dataset, SimError> {
        let mut cell = None;
        let mut xs = Vec::new();
        let mut in_sites = false;
        for (i, line) in native.lines().enumerate() {
            let n = i + 1;
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            match fields.as_slice() {
                ["cell_length", v, "A"] => cell = Some(num::<f64>(v, n)?),
                ["site", "x_A"] => in_sites = true,
                [idx, x] if in_sites => {
                    if num::<usize>(idx, n)? != xs.len() {
                        return Err(bad_line(n, "site indices out of order"));
                    }
                    xs.push(num::<f64>(x, n)?);
                }
                _ => return Err(bad_line(n, format!("unexpected record {line:?}"))),
            }
        }
        let cell = cell.ok_or_else(|| bad_line(0, "no cell_length record"))?;
        Ok(Dataset::new()
            .with(table("sites", "Å", &["x"], xs)?)?
            .with(Observable::scalar("cell_length", cell, "Å")?)?)
    }
}

/// Heavy-adsorbate loading. Native format: `key = value` lines.
///
/// ```text
/// BIGMAC 2.0 toy
/// loading = 0.5
/// nsites = 10
/// spacing_angstrom = 1.000000
/// occupied = 1 4 7
/// ```
pub struct Bigmac;

impl MockApp for Bigmac {
    fn program(&self) -> &'static str {
        "bigmac"
    }

    fn run(&self, inputs: &Inputs, params: &Params) -> Result<String, SimError> {
        let lattice = slot(inputs, "lattice")?;
        let (sites, to_a) = table_in(lattice, "sites", "Å")?;
        let theta: f64 = required(params, "theta")?;
        if !(0.0..=1.0).contains(&theta) {
            return Err(SimError::BadParams(format!("theta must be in [0, 1], got {theta}")));
        }
        let l = sites.n_rows();
        if l < 2 {
            return Err(SimError::BadParams("lattice has fewer than 2 sites".into()));
        }
        let spacing = (sites.row(1)[0] - sites.row(0)[0]) * to_a;
        let k = ((theta * l as f64) + 1e-9).floor() as usize;
        let mut occupied = rand::seq::index::sample(&mut rng(params)?, l, k.min(l)).into_vec();
        occupied.sort_unstable();
        let mut out = String::from("BIGMAC 2.0 toy\n");
        let _ = writeln!(out, "loading = {theta}");
        let _ = writeln!(out, "nsites = {l}");
        let _ = writeln!(out, "spacing_angstrom = {spacing:.6}");
        let list: Vec<String> = occupied.iter().map(|i| i.to_string()).collect();
        let _ = writeln!(out, "occupied = {}", list.join(" "));
        Ok(out)
    }

    fn adapt(&self, native: &str) -> Result<Dataset, SimError> {
        let mut kv = BTreeMap::new();
        for (i, line) in native.lines().enumerate().skip(1) {
            let (k, v) = line.split_once('=').ok_or_else(|| bad_line(i + 1, "expected key = value"))?;
            kv.insert(k.trim().to_string(), (i + 1, v.trim().to_string()));
        }
        let get = |k: &str| kv.get(k).ok_or_else(|| bad_line(0, format!("missing key {k}")));
        let (n, v) = get("loading")?;
        let loading: f64 = num(v, *n)?;
        let (n, v) = get("nsites")?;
        let l: usize = num(v, *n)?;
        let (n, v) = get("spacing_angstrom")?;
        let spacing: f64 = num(v, *n)?;
        let (n, v) = get("occupied")?;
        let mut flags = vec![0.0; l];
        for s in v.split_whitespace() {
            let i: usize = num(s, *n)?;
            *flags.get_mut(i).ok_or_else(|| bad_line(*n, format!("site {i} out of range")))? = 1.0;
        }
        let data = flags.iter().enumerate().flat_map(|(i, &f)| [i as f64, f]).collect();
        Ok(Dataset::new()
            .with(table("occupancy", "1", &["site", "occupied"], data)?)?
            .with(Observable::scalar("loading", loading, "1")?)?
            .with(Observable::scalar("site_spacing", spacing, "Å")?)?)
    }
}

/// Helium insertion on free sites. Native format: XYZ.
///
/// ```text
/// 2
/// gulp gcmc He
/// He     4.000000     0.000000     0.000000
/// He     7.000000     0.000000     0.000000
/// ```
pub struct Gulp;

impl MockApp for Gulp {
    fn program(&self) -> &'static str {
        "gulp"
    }

    fn run(&self, inputs: &Inputs, params: &Params) -> Result<String, SimError> {
        let occ = slot(inputs, "occupancy")?;
        let (t, _) = table_in(occ, "occupancy", "1")?;
        let spacing = scalar_in(occ, "site_spacing", "Å")?;
        let n: usize = required(params, "W")?;
        if n < 1 {
            return Err(SimError::BadParams("need at least one helium atom".into()));
        }
        let col = t.column_index("occupied").ok_or_else(|| SimError::BadParams("occupancy lacks column occupied".into()))?;
        let free: Vec<usize> = (0..t.n_rows()).filter(|&i| t.row(i)[col] == 0.0).collect();
        if free.is_empty() {
            return Err(SimError::NoFreeSites);
        }
        let mut rng = rng(params)?;
        let mut out = format!("{n}\ngulp gcmc He\n");
        for _ in 0..n {
            let site = free[rng.gen_range(0..free.len())];
            let _ = writeln!(out, "He {:12.6} {:12.6} {:12.6}", site as f64 * spacing, 0.0, 0.0);
        }
        Ok(out)
    }

    fn adapt(&self, native: &str) -> Result<Dataset, SimError> {
        let mut lines = native.lines();
        let n: usize = num(lines.next().unwrap_or(""), 1)?;
        lines.next().ok_or_else(|| bad_line(2, "missing comment line"))?;
        let mut data = Vec::with_capacity(3 * n);
        for (i, line) in lines.enumerate() {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 4 || f[0] != "He" {
                return Err(bad_line(i + 3, format!("expected `He x y z`, got {line:?}")));
            }
            for v in &f[1..] {
                data.push(num::<f64>(v, i + 3)?);
            }
        }
        if data.len() != 3 * n {
            return Err(bad_line(0, format!("header says {n} atoms, found {}", data.len() / 3)));
        }
        Ok(Dataset::new().with(table("helium_positions", "Å", &["x", "y", "z"], data)?)?)
    }
}

/// One move of a walker at lattice site `x`: a step of +1 (`up`) or -1,
/// rejected when the target site (periodic in `occupied.len()`) is taken.
pub fn md_step(x: i64, up: bool, occupied: &[bool]) -> i64 {
    let nx = if up { x + 1 } else { x - 1 };
    if occupied[nx.rem_euclid(occupied.len() as i64) as usize] {
        x
    } else {
        nx
    }
}

const WIDTH: usize = 14;
const PER_LINE: usize = 8;

/// Hindered random walk. Native format: fixed-width history file, 14
/// characters per value and 8 values per line.
///
/// ```text
/// DLPOLY HISTORY toy
/// walkers       2 frames       3
/// timestep      1.000000 spacing       1.000000 loading       0.000000
/// frame       0
///       4.000000      7.000000
/// ```
pub struct Dlpoly;

impl MockApp for Dlpoly {
    fn program(&self) -> &'static str {
        "dlpoly"
    }

    fn run(&self, inputs: &Inputs, params: &Params) -> Result<String, SimError> {
        let config = slot(inputs, "config")?;
        let obstacles = slot(inputs, "obstacles")?;
        let (pos, to_a) = table_in(config, "helium_positions", "Å")?;
        let (occ, _) = table_in(obstacles, "occupancy", "1")?;
        let spacing = scalar_in(obstacles, "site_spacing", "Å")?;
        let loading = scalar_in(obstacles, "loading", "1").unwrap_or(0.0);
        let steps: usize = required(params, "T")?;
        let timestep: f64 = param(params, "timestep")?.unwrap_or(1.0);
        if steps < 1 {
            return Err(SimError::BadParams("need T >= 1".into()));
        }
        if !(timestep > 0.0 && timestep.is_finite()) {
            return Err(SimError::BadParams("timestep must be positive".into()));
        }
        let col = occ.column_index("occupied").ok_or_else(|| SimError::BadParams("occupancy lacks column occupied".into()))?;
        let occupied: Vec<bool> = occ.rows().map(|r| r[col] != 0.0).collect();
        let l = occupied.len() as i64;
        let mut x: Vec<i64> = Vec::with_capacity(pos.n_rows());
        for r in pos.rows() {
            let site = (r[0] * to_a / spacing).round() as i64;
            if occupied[site.rem_euclid(l) as usize] {
                return Err(SimError::BadParams(format!("walker starts on occupied site {site}")));
            }
            x.push(site);
        }
        let walkers = x.len();
        if walkers == 0 {
            return Err(SimError::BadParams("no walkers".into()));
        }
        let mut rng = rng(params)?;
        let mut out = String::from("DLPOLY HISTORY toy\n");
        let _ = writeln!(out, "walkers {walkers:7} frames {:7}", steps + 1);
        let _ = writeln!(out, "timestep {timestep:14.6} spacing {spacing:14.6} loading {loading:14.6}");
        for frame in 0..=steps {
            if frame > 0 {
                for xi in x.iter_mut() {
                    *xi = md_step(*xi, rng.gen::<bool>(), &occupied);
                }
            }
            let _ = writeln!(out, "frame {frame:7}");
            for chunk in x.chunks(PER_LINE) {
                for xi in chunk {
                    let _ = write!(out, "{:>WIDTH$.6}", *xi as f64 * spacing);
                }
                out.push('\n');
            }
        }
        Ok(out)
    }

    fn adapt(&self, native: &str) -> Result<Dataset, SimError> {
        let lines: Vec<&str> = native.lines().collect();
        if lines.first() != Some(&"DLPOLY HISTORY toy") {
            return Err(bad_line(1, "not a toy DLPOLY history"));
        }
        let header = |i: usize, keys: &[&str]| -> Result<Vec<f64>, SimError> {
            let f: Vec<&str> = lines.get(i).copied().unwrap_or("").split_whitespace().collect();
            if f.len() != 2 * keys.len() || keys.iter().enumerate().any(|(j, k)| f[2 * j] != *k) {
                return Err(bad_line(i + 1, format!("expected {}", keys.join(", "))));
            }
            keys.iter().enumerate().map(|(j, _)| num(f[2 * j + 1], i + 1)).collect()
        };
        let dims = header(1, &["walkers", "frames"])?;
        let (walkers, frames) = (dims[0] as usize, dims[1] as usize);
        let info = header(2, &["timestep", "spacing", "loading"])?;
        let rows_per_frame = walkers.div_ceil(PER_LINE);
        let mut positions = Vec::with_capacity(walkers * frames);
        let mut i = 3;
        for frame in 0..frames {
            if lines.get(i).map(|l| l.split_whitespace().collect::<Vec<_>>()) != Some(vec!["frame", &frame.to_string()]) {
                return Err(bad_line(i + 1, format!("expected frame {frame}")));
            }
            i += 1;
            let before = positions.len();
            for _ in 0..rows_per_frame {
                let line = lines.get(i).ok_or_else(|| bad_line(i + 1, "truncated frame"))?;
                if line.len() % WIDTH != 0 {
                    return Err(bad_line(i + 1, "line is not a whole number of fields"));
                }
                for k in 0..line.len() / WIDTH {
                    positions.push(num::<f64>(&line[k * WIDTH..(k + 1) * WIDTH], i + 1)?);
                }
                i += 1;
            }
            if positions.len() - before != walkers {
                return Err(bad_line(i, format!("frame {frame} does not hold {walkers} values")));
            }
        }
        if i != lines.len() {
            return Err(bad_line(i + 1, "trailing lines"));
        }
        let mut traj = Trajectory::new(walkers, positions, info[0], info[1])?;
        traj.loading = Some(info[2]);
        traj.to_dataset()
    }
}

/// MSD and diffusivity analysis; writes the intermediate format directly.
pub struct Msdtool;

impl MockApp for Msdtool {
    fn program(&self) -> &'static str {
        "msdtool"
    }

    fn run(&self, inputs: &Inputs, params: &Params) -> Result<String, SimError> {
        let traj = Trajectory::from_dataset(slot(inputs, "traj")?)?;
        let d: u32 = param(params, "d")?.unwrap_or(1);
        let mut out = msd(&traj)?;
        let fit = diffusivity(&out, d)?;
        for obs in fit.observables() {
            out.insert(obs.clone())?;
        }
        out.insert(Observable::scalar("D_stderr", diffusivity_stderr(&traj, d), "Å^2/ps")?)?;
        for (k, v) in fit.meta() {
            out.set_meta(k.clone(), v.clone())?;
        }
        out.set_meta("fit-window", "second-half")?;
        out.set_meta("einstein-dimensionality", d.to_string())?;
        Ok(out.to_canonical_string())
    }

    fn adapt(&self, native: &str) -> Result<Dataset, SimError> {
        Ok(Dataset::from_canonical_bytes(native.as_bytes())?)
    }
}

/// Merges its inputs (slots in name order, later slots win) and passes
/// the union on. Used for programs without a dedicated mock.
pub struct Echo;

impl MockApp for Echo {
    fn program(&self) -> &'static str {
        "echo"
    }

    fn run(&self, inputs: &Inputs, _params: &Params) -> Result<String, SimError> {
        let mut out = Dataset::new();
        for ds in inputs.values() {
            for obs in ds.observables() {
                out.upsert(obs.clone());
            }
        }
        Ok(out.to_canonical_string())
    }

    fn adapt(&self, native: &str) -> Result<Dataset, SimError> {
        Ok(Dataset::from_canonical_bytes(native.as_bytes())?)
    }
}

fn one(slot: &str, ds: &Dataset) -> Inputs {
    BTreeMap::from([(slot.to_string(), ds.clone())])
}

pub fn mock_lattice(params: &Params) -> Result<Dataset, SimError> {
    Izafetch.execute(&Inputs::new(), params)
}

pub fn mock_cbmc(lattice: &Dataset, params: &Params) -> Result<Dataset, SimError> {
    Bigmac.execute(&one("lattice", lattice), params)
}

pub fn mock_gcmc(occupancy: &Dataset, params: &Params) -> Result<Dataset, SimError> {
    Gulp.execute(&one("occupancy", occupancy), params)
}

pub fn mock_md(config: &Dataset, obstacles: &Dataset, params: &Params) -> Result<Dataset, SimError> {
    let mut inputs = one("config", config);
    inputs.insert("obstacles".into(), obstacles.clone());
    Dlpoly.execute(&inputs, params)
}

pub fn mock_msd(traj: &Dataset, params: &Params) -> Result<Dataset, SimError> {
    Msdtool.execute(&one("traj", traj), params)
}
