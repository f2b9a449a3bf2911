use super::SimError;
use crate::quantities::{Dataset, Observable, Table, Unit, Values};

/// Walker positions over time, row-major: one row per timestep, one
/// column per walker. Positions are in Å, the timestep in ps.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    walkers: usize,
    positions: Vec<f64>,
    pub timestep: f64,
    pub spacing: f64,
    pub loading: Option<f64>,
}

impl Trajectory {
    pub fn new(walkers: usize, positions: Vec<f64>, timestep: f64, spacing: f64) -> Result<Self, SimError> {
        if walkers == 0 || !positions.len().is_multiple_of(walkers) || positions.len() / walkers < 2 {
            return Err(SimError::BadParams(format!(
                "{} positions do not form at least 2 frames of {walkers} walkers",
                positions.len()
            )));
        }
        if !(timestep > 0.0 && spacing > 0.0) {
            return Err(SimError::BadParams("timestep and spacing must be positive".into()));
        }
        let t = Trajectory { walkers, positions, timestep, spacing, loading: None };
        let tol = spacing * (1.0 + 1e-9);
        for s in 1..t.frames() {
            for w in 0..walkers {
                if (t.at(s, w) - t.at(s - 1, w)).abs() > tol {
                    return Err(SimError::BadParams(format!("walker {w} jumps more than one site at step {s}")));
                }
            }
        }
        Ok(t)
    }

    pub fn walkers(&self) -> usize {
        self.walkers
    }

    pub fn frames(&self) -> usize {
        self.positions.len() / self.walkers
    }

    pub fn steps(&self) -> usize {
        self.frames() - 1
    }

    pub fn at(&self, frame: usize, walker: usize) -> f64 {
        self.positions[frame * self.walkers + walker]
    }

    pub fn frame(&self, frame: usize) -> &[f64] {
        &self.positions[frame * self.walkers..(frame + 1) * self.walkers]
    }

    pub fn to_dataset(&self) -> Result<Dataset, SimError> {
        let columns = (0..self.walkers).map(|w| format!("w{w}")).collect();
        let table = Table::new(columns, self.positions.clone())?;
        let mut ds = Dataset::new()
            .with(Observable::new("trajectory", Unit::parse("Å")?, Values::Table(table))?)?
            .with(Observable::scalar("timestep", self.timestep, "ps")?)?
            .with(Observable::scalar("spacing", self.spacing, "Å")?)?;
        if let Some(theta) = self.loading {
            ds.insert(Observable::scalar("loading", theta, "1")?)?;
        }
        Ok(ds)
    }

    /// Reads `trajectory` (Å) and `timestep` (ps); `spacing` defaults to 1 Å.
    pub fn from_dataset(ds: &Dataset) -> Result<Self, SimError> {
        let obs = ds.require("trajectory")?;
        let table = obs
            .as_table()
            .ok_or_else(|| SimError::BadParams("trajectory is not a table".into()))?;
        let to_a = obs.unit().factor_to(&Unit::parse("Å")?)?;
        let ts = ds.require("timestep")?;
        let timestep = ts.as_scalar().unwrap_or(f64::NAN) * ts.unit().factor_to(&Unit::parse("ps")?)?;
        let spacing = match ds.get("spacing") {
            Some(s) => s.as_scalar().unwrap_or(f64::NAN) * s.unit().factor_to(&Unit::parse("Å")?)?,
            None => 1.0,
        };
        let positions = table.cells().iter().map(|x| x * to_a).collect();
        let mut t = Trajectory::new(table.n_cols(), positions, timestep, spacing)?;
        t.loading = ds.get("loading").and_then(|o| o.as_scalar());
        Ok(t)
    }
}

/// Mean over walkers of the squared displacement from the first frame.
pub fn msd(traj: &Trajectory) -> Result<Dataset, SimError> {
    if traj.walkers() < 2 {
        return Err(SimError::BadParams(format!("need at least 2 walkers, got {}", traj.walkers())));
    }
    let origin = traj.frame(0);
    let w = traj.walkers() as f64;
    let series = (0..traj.frames())
        .map(|f| {
            let sum: f64 = traj.frame(f).iter().zip(origin).map(|(x, x0)| (x - x0).powi(2)).sum();
            (f as f64 * traj.timestep, sum / w)
        })
        .collect();
    Ok(Dataset::new().with(Observable::new("msd", Unit::parse("Å^2")?, Values::Series(series))?)?)
}

fn fit_window(n: usize) -> std::ops::Range<usize> {
    n / 2..n
}

fn slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mt = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|(t, y)| (t - mt) * (y - my)).sum();
    let sxx: f64 = points.iter().map(|(t, _)| (t - mt).powi(2)).sum();
    sxy / sxx
}

/// Einstein relation over the second half of the MSD series:
/// `D = slope / (2 d)`, in Å²/ps. Also reports the log-log exponent of the
/// window; a value far from 1 is flagged in the `warning` meta entry.
pub fn diffusivity(msd_ds: &Dataset, dimensionality: u32) -> Result<Dataset, SimError> {
    if dimensionality == 0 {
        return Err(SimError::BadParams("dimensionality must be at least 1".into()));
    }
    let obs = msd_ds.require("msd")?;
    let to_a2 = obs.unit().factor_to(&Unit::parse("Å^2")?)?;
    let series = obs.as_series().ok_or_else(|| SimError::BadParams("msd is not a series".into()))?;
    if series.len() < 10 {
        return Err(SimError::BadParams(format!("msd series has {} points, need at least 10", series.len())));
    }
    let window: Vec<(f64, f64)> = series[fit_window(series.len())].iter().map(|&(t, m)| (t, m * to_a2)).collect();
    let d = slope(&window) / (2.0 * dimensionality as f64);
    let mut out = Dataset::new().with(Observable::scalar("D", d, "Å^2/ps")?)?;
    if window.iter().all(|&(t, m)| t > 0.0 && m > 0.0) {
        let logs: Vec<(f64, f64)> = window.iter().map(|&(t, m)| (t.ln(), m.ln())).collect();
        let alpha = slope(&logs);
        out.insert(Observable::scalar("msd_exponent", alpha, "1")?)?;
        if (alpha - 1.0).abs() > 0.5 {
            out.set_meta("warning", "nonlinear-msd")?;
        }
    }
    Ok(out)
}

/// Standard error of `D`: spread of per-walker slopes over the fit window.
pub fn diffusivity_stderr(traj: &Trajectory, dimensionality: u32) -> f64 {
    let window = fit_window(traj.frames());
    let origin = traj.frame(0);
    let per_walker: Vec<f64> = (0..traj.walkers())
        .map(|w| {
            let pts: Vec<(f64, f64)> = window
                .clone()
                .map(|f| (f as f64 * traj.timestep, (traj.at(f, w) - origin[w]).powi(2)))
                .collect();
            slope(&pts) / (2.0 * dimensionality as f64)
        })
        .collect();
    let n = per_walker.len() as f64;
    let mean = per_walker.iter().sum::<f64>() / n;
    let var = per_walker.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (var / n).sqrt()
}
