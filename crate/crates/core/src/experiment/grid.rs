use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::error::{invalid, Result, RpcaError};
use crate::solver::{SolverConfig, SolverKind};

use super::synth::SyntheticProblem;

/// Output CSV columns, in order.
pub const CSV_HEADER: [&str; 13] = [
    "solver",
    "n",
    "r",
    "alpha",
    "trial",
    "seed",
    "iterations",
    "converged",
    "final_ek",
    "final_rel_error",
    "wall_time_s",
    "time_exclusive",
    "status",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridVariable {
    Dimension,
    Sparsity,
}

/// A one-dimensional benchmark sweep over problem dimension or outlier
/// sparsity, everything else held fixed.
///
/// Text form, one `key = value` per line, `#` starts a comment:
///
/// ```text
/// variable = dimension
/// values = 500, 1000, 2000
/// alpha = 0.3
/// r = 5
/// tol = 1e-6
/// max_iters = 40
/// trials = 5
/// solvers = riecur, ircur, accaltproj
/// seed = 7
/// ```
///
/// A dimension sweep needs `alpha`; a sparsity sweep needs `n`. Optional
/// keys: `gamma`, `amplitude`, `samples`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub variable: GridVariable,
    pub values: Vec<f64>,
    pub n: Option<usize>,
    pub alpha: Option<f64>,
    pub rank: usize,
    pub tol: f64,
    pub max_iters: usize,
    pub trials: usize,
    pub solvers: Vec<SolverKind>,
    pub seed: u64,
    pub gamma: Option<f64>,
    pub amplitude: Option<f64>,
    pub samples: Option<usize>,
}

fn line_err(line: usize, msg: impl Into<String>) -> RpcaError {
    RpcaError::format("grid spec", None, format!("line {line}: {}", msg.into()))
}

fn parse_value<T: FromStr>(line: usize, key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| line_err(line, format!("cannot parse '{raw}' as the value of '{key}'")))
}

impl FromStr for GridSpec {
    type Err = RpcaError;

    fn from_str(text: &str) -> Result<Self> {
        let mut variable = None;
        let mut values = None;
        let (mut n, mut alpha, mut rank, mut tol, mut max_iters, mut trials) = (None, None, None, None, None, None);
        let (mut solvers, mut seed, mut gamma, mut amplitude, mut samples) = (None, None, None, None, None);
        let mut seen = HashSet::new();

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| line_err(line, "expected 'key = value'"))?;
            let (key, value) = (key.trim().to_ascii_lowercase(), value.trim());
            if value.is_empty() {
                return Err(line_err(line, format!("missing value for '{key}'")));
            }
            if !seen.insert(key.clone()) {
                return Err(line_err(line, format!("duplicate key '{key}'")));
            }
            match key.as_str() {
                "variable" => {
                    variable = Some(match value.to_ascii_lowercase().as_str() {
                        "dimension" | "n" => GridVariable::Dimension,
                        "sparsity" | "alpha" => GridVariable::Sparsity,
                        other => return Err(line_err(line, format!("unknown variable '{other}'"))),
                    })
                }
                "values" => {
                    let list = value
                        .split(',')
                        .map(|v| parse_value::<f64>(line, "values", v.trim()))
                        .collect::<Result<Vec<_>>>()?;
                    values = Some(list);
                }
                "n" => n = Some(parse_value(line, &key, value)?),
                "alpha" => alpha = Some(parse_value(line, &key, value)?),
                "r" | "rank" => rank = Some(parse_value(line, &key, value)?),
                "tol" => tol = Some(parse_value(line, &key, value)?),
                "max_iters" => max_iters = Some(parse_value(line, &key, value)?),
                "trials" => trials = Some(parse_value(line, &key, value)?),
                "seed" => seed = Some(parse_value(line, &key, value)?),
                "gamma" => gamma = Some(parse_value(line, &key, value)?),
                "amplitude" => amplitude = Some(parse_value(line, &key, value)?),
                "samples" => samples = Some(parse_value(line, &key, value)?),
                "solvers" => {
                    let list = value
                        .split(',')
                        .map(|s| {
                            s.trim()
                                .parse::<SolverKind>()
                                .map_err(|e| line_err(line, e.to_string()))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    solvers = Some(list);
                }
                other => return Err(line_err(line, format!("unknown key '{other}'"))),
            }
        }

        let missing = |k: &str| RpcaError::format("grid spec", None, format!("missing required key '{k}'"));
        let spec = GridSpec {
            variable: variable.ok_or_else(|| missing("variable"))?,
            values: values.ok_or_else(|| missing("values"))?,
            n,
            alpha,
            rank: rank.ok_or_else(|| missing("r"))?,
            tol: tol.unwrap_or(1e-6),
            max_iters: max_iters.unwrap_or(100),
            trials: trials.unwrap_or(1),
            solvers: solvers.unwrap_or_else(|| SolverKind::ALL.to_vec()),
            seed: seed.unwrap_or(0),
            gamma,
            amplitude,
            samples,
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl GridSpec {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| RpcaError::io(path, e))?;
        text.parse::<GridSpec>()
            .map_err(|e| e.with_context(path.display().to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return invalid("grid values must be non-empty");
        }
        if self.values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return invalid("grid values must be positive and finite");
        }
        if self.values.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("grid values must be strictly increasing");
        }
        match self.variable {
            GridVariable::Dimension => {
                if self.alpha.is_none() {
                    return invalid("a dimension sweep needs a fixed alpha");
                }
                if self.values.iter().any(|v| v.fract() != 0.0) {
                    return invalid("dimension values must be integers");
                }
            }
            GridVariable::Sparsity => {
                if self.n.is_none() {
                    return invalid("a sparsity sweep needs a fixed n");
                }
                if self.values.iter().any(|v| *v > 1.0) {
                    return invalid("sparsity values must not exceed 1");
                }
            }
        }
        if let Some(a) = self.alpha {
            if !(0.0..=1.0).contains(&a) {
                return invalid(format!("alpha must lie in [0, 1], got {a}"));
            }
        }
        if self.trials == 0 {
            return invalid("trials must be at least 1");
        }
        if self.solvers.is_empty() {
            return invalid("at least one solver is required");
        }
        self.solver_config(0).validate(self.rank.max(1), self.rank.max(1))
    }

    /// `(n, alpha)` for every grid point, in order.
    pub fn points(&self) -> Vec<(usize, f64)> {
        self.values
            .iter()
            .map(|&v| match self.variable {
                GridVariable::Dimension => (v as usize, self.alpha.unwrap_or(0.0)),
                GridVariable::Sparsity => (self.n.unwrap_or(0), v),
            })
            .collect()
    }

    pub fn solver_config(&self, seed: u64) -> SolverConfig {
        let mut cfg = SolverConfig::new(self.rank);
        cfg.tol = self.tol;
        cfg.max_iters = self.max_iters;
        cfg.seed = seed;
        cfg.rows_sampled = self.samples;
        cfg.cols_sampled = self.samples;
        if let Some(g) = self.gamma {
            cfg.gamma = g;
        }
        cfg
    }

    /// Seed shared by every solver for one trial at one grid point.
    pub fn trial_seed(&self, n: usize, alpha: f64, trial: usize) -> u64 {
        let mut h = self.seed;
        for word in [n as u64, alpha.to_bits(), trial as u64] {
            h = splitmix64(h ^ word);
        }
        h
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One row of the result table. `trial` is `None` on aggregate rows.
#[derive(Clone, Debug, PartialEq)]
pub struct GridRow {
    pub solver: SolverKind,
    pub n: usize,
    pub r: usize,
    pub alpha: f64,
    pub trial: Option<usize>,
    pub seed: u64,
    /// Mean over trials on aggregate rows.
    pub iterations: f64,
    /// Fraction of converged trials on aggregate rows.
    pub converged: f64,
    /// Median over trials on aggregate rows.
    pub final_ek: f64,
    /// Median over trials on aggregate rows.
    pub final_rel_error: f64,
    /// Mean over trials on aggregate rows.
    pub wall_time_s: f64,
    pub time_exclusive: bool,
    pub status: String,
}

impl GridRow {
    pub fn is_aggregate(&self) -> bool {
        self.trial.is_none()
    }

    pub fn to_record(&self) -> [String; 13] {
        let (trial, iterations, converged) = match self.trial {
            Some(t) => (
                t.to_string(),
                format!("{}", self.iterations as usize),
                (self.converged == 1.0).to_string(),
            ),
            None => (
                "agg".to_string(),
                format!("{}", self.iterations),
                format!("{}", self.converged),
            ),
        };
        [
            self.solver.name().to_string(),
            self.n.to_string(),
            self.r.to_string(),
            format!("{}", self.alpha),
            trial,
            self.seed.to_string(),
            iterations,
            converged,
            format!("{:e}", self.final_ek),
            format!("{:e}", self.final_rel_error),
            format!("{:.6}", self.wall_time_s),
            self.time_exclusive.to_string(),
            self.status.clone(),
        ]
    }

    /// Identifies the row independently of timing, for resuming.
    fn key(&self) -> (String, String, String, String) {
        let rec = self.to_record();
        (rec[0].clone(), rec[1].clone(), rec[3].clone(), rec[4].clone())
    }

    /// Number of trials an aggregate row summarizes.
    fn aggregated_trials(&self) -> Option<usize> {
        let rest = self.status.strip_prefix("aggregate ")?;
        rest.split_once('/')?.1.split_whitespace().next()?.parse().ok()
    }

    fn point_key(&self) -> (String, String, String) {
        let (solver, n, alpha, _) = self.key();
        (solver, n, alpha)
    }
}

/// Runs one trial of one solver. Solver failures become an error status.
pub fn run_trial(problem: &SyntheticProblem, solver: SolverKind, cfg: &SolverConfig, trial: usize) -> GridRow {
    let mut row = GridRow {
        solver,
        n: problem.n,
        r: problem.r,
        alpha: problem.alpha,
        trial: Some(trial),
        seed: problem.seed,
        iterations: 0.0,
        converged: 0.0,
        final_ek: f64::NAN,
        final_rel_error: f64::NAN,
        wall_time_s: f64::NAN,
        time_exclusive: true,
        status: "ok".to_string(),
    };
    match solver.solve(&problem.d, cfg) {
        Ok(res) => {
            // Dense error oracle runs after the timed region.
            row.iterations = res.iterations as f64;
            row.converged = if res.converged { 1.0 } else { 0.0 };
            row.final_ek = res.final_error();
            row.wall_time_s = res.total_time().as_secs_f64();
            row.final_rel_error = problem.relative_error(&res.low_rank.to_dense());
        }
        Err(e) => row.status = format!("error: {e}"),
    }
    row
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.retain(|x| !x.is_nan());
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = xs
        .filter(|x| !x.is_nan())
        .fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

/// Aggregate of the trial rows for one solver at one grid point.
pub fn aggregate(rows: &[GridRow], base_seed: u64) -> Option<GridRow> {
    let first = rows.first()?;
    let ok: Vec<&GridRow> = rows.iter().filter(|r| r.status == "ok").collect();
    Some(GridRow {
        solver: first.solver,
        n: first.n,
        r: first.r,
        alpha: first.alpha,
        trial: None,
        seed: base_seed,
        iterations: mean(ok.iter().map(|r| r.iterations)),
        converged: rows.iter().map(|r| r.converged).sum::<f64>() / rows.len() as f64,
        final_ek: median(ok.iter().map(|r| r.final_ek).collect()),
        final_rel_error: median(ok.iter().map(|r| r.final_rel_error).collect()),
        wall_time_s: mean(ok.iter().map(|r| r.wall_time_s)),
        time_exclusive: rows.iter().all(|r| r.time_exclusive),
        status: format!("aggregate {}/{} ok", ok.len(), rows.len()),
    })
}

/// Runs the whole grid in memory: per grid point and solver, one row per
/// trial followed by the aggregate row.
pub fn run_grid(spec: &GridSpec) -> Result<Vec<GridRow>> {
    run_grid_with(spec, &HashSet::new(), &mut |_| Ok(()))
}

fn run_grid_with(
    spec: &GridSpec,
    done: &HashSet<(String, String, String, String)>,
    emit: &mut dyn FnMut(&GridRow) -> Result<()>,
) -> Result<Vec<GridRow>> {
    spec.validate()?;
    let mut out = Vec::new();
    for (n, alpha) in spec.points() {
        let mut per_solver: Vec<Vec<GridRow>> = vec![Vec::new(); spec.solvers.len()];
        for trial in 0..spec.trials {
            let seed = spec.trial_seed(n, alpha, trial);
            let mut problem: Option<SyntheticProblem> = None;
            for (s, &solver) in spec.solvers.iter().enumerate() {
                let key = (
                    solver.name().to_string(),
                    n.to_string(),
                    format!("{alpha}"),
                    trial.to_string(),
                );
                if done.contains(&key) {
                    continue;
                }
                if problem.is_none() {
                    problem = Some(SyntheticProblem::generate(n, spec.rank, alpha, spec.amplitude, seed)?);
                }
                let row = run_trial(
                    problem.as_ref().expect("generated above"),
                    solver,
                    &spec.solver_config(seed),
                    trial,
                );
                emit(&row)?;
                per_solver[s].push(row);
            }
        }
        for (s, rows) in per_solver.into_iter().enumerate() {
            let solver = spec.solvers[s];
            let agg_key = (
                solver.name().to_string(),
                n.to_string(),
                format!("{alpha}"),
                "agg".to_string(),
            );
            if rows.len() == spec.trials && !done.contains(&agg_key) {
                let agg = aggregate(&rows, spec.seed).expect("non-empty");
                emit(&agg)?;
                out.extend(rows);
                out.push(agg);
            } else {
                out.extend(rows);
            }
        }
    }
    Ok(out)
}

/// Runs the grid, appending rows to the CSV at `path` as they complete.
///
/// Rows already present in the file (matched on solver, n, alpha, trial)
/// are skipped, so an interrupted run can be restarted with the same spec.
/// When some trials of a grid point were already on disk, the aggregate is
/// computed from the file's rows plus the new ones. Returns the rows
/// written by this call.
pub fn run_grid_to_csv(spec: &GridSpec, path: &Path) -> Result<Vec<GridRow>> {
    let existing = if path.exists() {
        read_grid_csv(path)?
    } else {
        Vec::new()
    };
    // An aggregate over a different trial count is stale and gets redone.
    let current = |r: &&GridRow| !r.is_aggregate() || r.aggregated_trials() == Some(spec.trials);
    let done: HashSet<_> = existing.iter().filter(current).map(GridRow::key).collect();

    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| RpcaError::io(path, e))?;
    let fresh = file.metadata().map_err(|e| RpcaError::io(path, e))?.len() == 0;
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    let write_err = |e: csv::Error| RpcaError::io(path, std::io::Error::other(e));
    if fresh {
        writer.write_record(CSV_HEADER).map_err(write_err)?;
        writer.flush().map_err(|e| RpcaError::io(path, e))?;
    }

    let mut written = Vec::new();
    let mut emit = |row: &GridRow| -> Result<()> {
        writer.write_record(row.to_record()).map_err(write_err)?;
        writer.flush().map_err(|e| RpcaError::io(path, e))?;
        written.push(row.clone());
        Ok(())
    };
    let rows = run_grid_with(spec, &done, &mut emit)?;

    // Grid points whose trials straddle two runs still need an aggregate.
    let have_agg: HashSet<_> = existing
        .iter()
        .chain(rows.iter())
        .filter(|r| r.is_aggregate() && current(r))
        .map(GridRow::point_key)
        .collect();
    for (n, alpha) in spec.points() {
        for &solver in &spec.solvers {
            let point = (solver.name().to_string(), n.to_string(), format!("{alpha}"));
            if have_agg.contains(&point) {
                continue;
            }
            let trials: Vec<GridRow> = existing
                .iter()
                .chain(rows.iter())
                .filter(|r| !r.is_aggregate() && r.point_key() == point)
                .cloned()
                .collect();
            if trials.len() == spec.trials {
                emit(&aggregate(&trials, spec.seed).expect("non-empty"))?;
            }
        }
    }
    Ok(written)
}

/// Writes rows (with header) to any writer.
pub fn write_grid_csv<W: Write>(rows: &[GridRow], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let err = |e: csv::Error| RpcaError::io("<csv output>", std::io::Error::other(e));
    writer.write_record(CSV_HEADER).map_err(err)?;
    for row in rows {
        writer.write_record(row.to_record()).map_err(err)?;
    }
    writer.flush().map_err(|e| RpcaError::io("<csv output>", e))
}

/// Reads a result table written by [`run_grid_to_csv`] or [`write_grid_csv`].
pub fn read_grid_csv(path: &Path) -> Result<Vec<GridRow>> {
    let file = File::open(path).map_err(|e| RpcaError::io(path, e))?;
    let ctx = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header = reader
        .headers()
        .map_err(|e| RpcaError::format(ctx.clone(), None, e.to_string()))?
        .clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(RpcaError::format(ctx, Some(0), "unexpected header row"));
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| RpcaError::format(ctx.clone(), None, e.to_string()))?;
        let offset = rec.position().map(|p| p.byte());
        let bad = |field: &str| RpcaError::format(ctx.clone(), offset, format!("bad value in column '{field}'"));
        let get = |i: usize| rec.get(i).unwrap_or("");
        let num = |i: usize| get(i).parse::<f64>().map_err(|_| bad(CSV_HEADER[i]));
        let trial = match get(4) {
            "agg" => None,
            t => Some(t.parse::<usize>().map_err(|_| bad("trial"))?),
        };
        let converged = match get(7) {
            "true" => 1.0,
            "false" => 0.0,
            _ => num(7)?,
        };
        rows.push(GridRow {
            solver: get(0).parse().map_err(|_| bad("solver"))?,
            n: get(1).parse().map_err(|_| bad("n"))?,
            r: get(2).parse().map_err(|_| bad("r"))?,
            alpha: num(3)?,
            trial,
            seed: get(5).parse().map_err(|_| bad("seed"))?,
            iterations: num(6)?,
            converged,
            final_ek: num(8)?,
            final_rel_error: num(9)?,
            wall_time_s: num(10)?,
            time_exclusive: get(11).parse().map_err(|_| bad("time_exclusive"))?,
            status: get(12).to_string(),
        });
    }
    Ok(rows)
}
