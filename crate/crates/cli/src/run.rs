//! Subcommand drivers: build the domain objects a [`Config`] describes, run
//! the requested experiment, and write the CSV outputs plus a run manifest.
//!
//! Data goes to files only; callers print diagnostics to stderr. Output
//! bytes are a function of the config alone — wall-clock time lives in the
//! manifest, never in a CSV, and worker parallelism is delegated to the
//! library's deterministic reductions.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use sqcount_core::arith::{ArithError, FiniteRadius, Radii, RealInterval, SInterval};
use sqcount_core::counting::{
    count_n, format_sig, ratio_experiment, schedule_mc, total_volume, CountError, CountOptions,
};
use sqcount_core::enumerate::{EnumError, RealRadius, Region, StarBody, SVector};
use sqcount_core::forms::{
    random_generic_form, standard_form, FormsError, SQuadraticForm, StandardSpec,
};
use sqcount_core::geometry::{
    alpha_lower, combined_bound_grid, corner_envelope_grid, random_slattice, tree_bound_grid,
    GeomError, SLattice,
};
use thiserror::Error;

use crate::config::{Config, ConfigError, FormSource, LatticeSource};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Count(#[from] CountError),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Forms(#[from] FormsError),
    #[error(transparent)]
    Arith(#[from] ArithError),
    #[error(transparent)]
    Enum(#[from] EnumError),
    #[error("cannot write {path}: {err}")]
    Io { path: String, err: std::io::Error },
}

/// True when the failure is a safety-cap refusal (exit code 2): the error
/// message then carries the cost estimate (points seen vs. the cap).
pub fn is_cap_refusal(e: &RunError) -> bool {
    let enum_cap = |ee: &EnumError| {
        matches!(
            ee,
            EnumError::BoxCapExceeded { .. } | EnumError::SieveCapExceeded { .. }
        )
    };
    match e {
        RunError::Count(CountError::Enum(ee)) | RunError::Enum(ee) => enum_cap(ee),
        RunError::Geom(GeomError::ScanCapExceeded { .. }) => true,
        _ => false,
    }
}

/// Process exit code for a failed run: 2 for cap refusals, 1 otherwise.
pub fn exit_code(e: &RunError) -> i32 {
    if is_cap_refusal(e) {
        2
    } else {
        1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Count,
    Volume,
    Ratio,
    Lemmas,
    Alpha,
}

impl Command {
    pub fn parse(name: &str) -> Option<Command> {
        match name {
            "count" => Some(Command::Count),
            "volume" => Some(Command::Volume),
            "ratio" => Some(Command::Ratio),
            "lemmas" => Some(Command::Lemmas),
            "alpha" => Some(Command::Alpha),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Command::Count => "count",
            Command::Volume => "volume",
            Command::Ratio => "ratio",
            Command::Lemmas => "lemmas",
            Command::Alpha => "alpha",
        }
    }
}

/// Provenance written alongside every output.
#[derive(Clone, Debug)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub tool_version: String,
    pub wall_ms: u128,
    /// Paths of the data files this run produced.
    pub outputs: Vec<String>,
    /// `key = value` echo of every parameter that fell back to a default.
    pub defaults: Vec<String>,
}

impl RunManifest {
    pub fn render(&self) -> String {
        let mut out = String::from("# sqcount run manifest\n");
        let _ = writeln!(out, "command = {}", self.command);
        let _ = writeln!(out, "config_hash = {}", self.config_hash);
        let _ = writeln!(out, "tool_version = {}", self.tool_version);
        let _ = writeln!(out, "wall_ms = {}", self.wall_ms);
        for path in &self.outputs {
            let _ = writeln!(out, "output = {path}");
        }
        for d in &self.defaults {
            let _ = writeln!(out, "defaulted {d}");
        }
        out
    }
}

/// Paths written by a successful run (data files first, manifest last).
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub files: Vec<PathBuf>,
}

fn invalid(msg: impl Into<String>) -> RunError {
    RunError::Config(ConfigError::Invalid(msg.into()))
}

/// Instantiate the form the config names.
pub fn build_form(cfg: &Config) -> Result<SQuadraticForm, RunError> {
    let mut spec = StandardSpec::default_for_rank(cfg.rank)?;
    spec.u0 = cfg.u0.clone();
    let base = standard_form(&cfg.s, &spec)?;
    match &cfg.form {
        FormSource::Standard => Ok(base),
        FormSource::Random { seed, steps } => Ok(random_generic_form(*seed, &base, *steps)?.0),
        FormSource::File(path) => {
            let text = fs::read_to_string(path)
                .map_err(|err| RunError::Io { path: path.clone(), err })?;
            let q = SQuadraticForm::parse(&text)?;
            if q.s() != &cfg.s {
                return Err(invalid(format!(
                    "form file {path} uses a different place set than the config"
                )));
            }
            if q.rank() != cfg.rank {
                return Err(invalid(format!(
                    "form file {path} has rank {} but the config says {}",
                    q.rank(),
                    cfg.rank
                )));
            }
            Ok(q)
        }
    }
}

pub fn build_omega(cfg: &Config) -> Result<StarBody, RunError> {
    let omega = StarBody {
        n: cfg.rank,
        real: RealRadius::ConstantRadius(cfg.omega_radius),
        finite: cfg.rho.clone(),
    };
    omega.validate(&cfg.s)?;
    Ok(omega)
}

pub fn build_interval(cfg: &Config) -> Result<SInterval, RunError> {
    let real = RealInterval::new(cfg.real_interval.0, cfg.real_interval.1)?;
    Ok(SInterval::new(&cfg.s, real, cfg.finite_intervals.clone())?)
}

pub fn build_schedule(cfg: &Config) -> Result<Vec<Radii>, RunError> {
    cfg.t_schedule
        .iter()
        .map(|&t| Ok(Radii::new(&cfg.s, t, cfg.finite_t.clone())?))
        .collect()
}

pub fn build_lattice(cfg: &Config) -> Result<SLattice, RunError> {
    match cfg.lattice {
        LatticeSource::Standard => Ok(SLattice::standard(&cfg.s, cfg.lattice_dim)?),
        LatticeSource::Random { seed, steps } => {
            Ok(random_slattice(&cfg.s, cfg.lattice_dim, seed, steps)?)
        }
    }
}

fn region_name(region: Region) -> &'static str {
    match region {
        Region::Body => "body",
        Region::Shell => "shell",
    }
}

/// Shared `#` comment prologue: config hash, tool version, extras.
fn comment_prologue(cfg: &Config, extras: &[(&str, String)]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# config = {}", cfg.hash);
    let _ = writeln!(out, "# tool = sqcount {TOOL_VERSION}");
    for (k, v) in extras {
        let _ = writeln!(out, "# {k} = {v}");
    }
    out
}

fn radii_header(primes: &[u64]) -> String {
    let mut h = String::from("Tinf");
    for p in primes {
        let _ = write!(h, ",t_{p}");
    }
    h
}

fn radii_cells(t: &Radii, primes: &[u64]) -> String {
    let mut cells = format_sig(t.t_inf, 12);
    for p in primes {
        match t.finite[p] {
            FiniteRadius::Zero => cells.push_str(",-inf"),
            FiniteRadius::Exp(e) => {
                let _ = write!(cells, ",{e}");
            }
        }
    }
    cells
}

/// CSV dump of counted vectors: one `w1..wn,denom` row per vector, in the
/// library's lexicographic enumeration order.
pub fn vectors_csv(rank: usize, vectors: &[SVector]) -> String {
    let mut out = String::new();
    for i in 1..=rank {
        if i > 1 {
            out.push(',');
        }
        let _ = write!(out, "w{i}");
    }
    out.push_str(",denom\n");
    for v in vectors {
        for (i, w) in v.coords().iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{w}");
        }
        let _ = writeln!(out, ",{}", v.denom());
    }
    out
}

fn count_options(cfg: &Config, collect_vectors: bool) -> CountOptions {
    CountOptions {
        region: cfg.region,
        include_origin: cfg.include_origin,
        use_sieve: cfg.use_sieve,
        box_cap: cfg.box_cap,
        collect_vectors,
    }
}

/// `count`: one row per schedule entry with the exact count and scan stats.
/// With a vector dump requested, the vectors of the last schedule row are
/// written as a second file.
fn run_count(cfg: &Config, dump: bool) -> Result<Vec<(String, String)>, RunError> {
    let q = build_form(cfg)?;
    let omega = build_omega(cfg)?;
    let interval = build_interval(cfg)?;
    let schedule = build_schedule(cfg)?;
    let primes: Vec<u64> = cfg.s.finite_primes().collect();

    let mut csv = comment_prologue(
        cfg,
        &[
            ("region", region_name(cfg.region).to_string()),
            ("include_origin", cfg.include_origin.to_string()),
            ("sieve", if cfg.use_sieve { "on" } else { "off" }.to_string()),
        ],
    );
    let _ = writeln!(csv, "{},absT,N,tried,sieve_admitted", radii_header(&primes));

    let mut dumped: Option<Vec<SVector>> = None;
    for (row, t) in schedule.iter().enumerate() {
        let collect = dump && row + 1 == schedule.len();
        let res = count_n(&q, &omega, &interval, t, &count_options(cfg, collect))?;
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            radii_cells(t, &primes),
            format_sig(t.abs_t(), 12),
            res.count,
            res.tried,
            res.sieve_admitted
        );
        if collect {
            dumped = res.vectors;
        }
    }

    let mut files = vec![("count.csv".to_string(), csv)];
    if dump {
        files.push(("vectors.csv".to_string(), vectors_csv(cfg.rank, &dumped.unwrap_or_default())));
    }
    Ok(files)
}

/// `volume`: product Haar volume per schedule entry, with the Monte Carlo
/// error of the real factor propagated through the exact finite factors.
fn run_volume(cfg: &Config) -> Result<Vec<(String, String)>, RunError> {
    let q = build_form(cfg)?;
    let omega = build_omega(cfg)?;
    let interval = build_interval(cfg)?;
    let schedule = build_schedule(cfg)?;
    let primes: Vec<u64> = cfg.s.finite_primes().collect();

    let mut csv = comment_prologue(
        cfg,
        &[
            ("region", region_name(cfg.region).to_string()),
            ("mc_samples", cfg.mc.samples.to_string()),
            ("mc_seed", cfg.mc.seed.to_string()),
        ],
    );
    let _ = writeln!(csv, "{},absT,V,V_err", radii_header(&primes));

    for (row, t) in schedule.iter().enumerate() {
        let v = total_volume(&q, &omega, &interval, t, cfg.region, &schedule_mc(&cfg.mc, row))?;
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            radii_cells(t, &primes),
            format_sig(t.abs_t(), 12),
            format_sig(v.total, 12),
            format_sig(v.mc_error, 12)
        );
    }
    Ok(vec![("volume.csv".to_string(), csv)])
}

/// `ratio`: the full count/volume experiment along the schedule.
fn run_ratio(cfg: &Config, dump: bool) -> Result<Vec<(String, String)>, RunError> {
    let q = build_form(cfg)?;
    let omega = build_omega(cfg)?;
    let interval = build_interval(cfg)?;
    let schedule = build_schedule(cfg)?;

    let report =
        ratio_experiment(&q, &omega, &interval, &schedule, &cfg.mc, &count_options(cfg, false))?;
    let csv = report.to_csv(&[
        format!("config = {}", cfg.hash),
        format!("tool = sqcount {TOOL_VERSION}"),
    ]);

    let mut files = vec![("ratio.csv".to_string(), csv)];
    if dump {
        // the dump covers the last (largest |T|) schedule row
        let last = schedule.last().expect("schedule validated nonempty");
        let res = count_n(&q, &omega, &interval, last, &count_options(cfg, true))?;
        files.push((
            "vectors.csv".to_string(),
            vectors_csv(cfg.rank, &res.vectors.unwrap_or_default()),
        ));
    }
    Ok(files)
}

fn push_lemma_row(csv: &mut String, lemma: &str, params: String, value: &str, bound: &str, pass: bool) {
    let _ = writeln!(csv, "{lemma},{params},{value},{bound},{pass}");
}

/// `lemmas`: the fixed validation grids of the measure-bound lemmas, one
/// pass/fail row per (lemma, parameter point). Always exits 0 when the run
/// completes; failures are data, recorded in the `pass` column.
fn run_lemmas(cfg: &Config) -> Result<Vec<(String, String)>, RunError> {
    let (constant, corner_rows) = corner_envelope_grid()?;
    let tree_rows = tree_bound_grid()?;
    let combined_rows = combined_bound_grid()?;

    let mut csv = comment_prologue(
        cfg,
        &[("corner_constant", format_sig(constant, 12))],
    );
    csv.push_str("lemma,params,value,bound,pass\n");
    for r in &corner_rows {
        push_lemma_row(
            &mut csv,
            "corner_envelope",
            format!("t={} r={}", format_sig(r.t, 12), format_sig(r.r, 12)),
            &format_sig(r.measure, 12),
            &format_sig(r.bound, 12),
            r.pass,
        );
    }
    for r in &tree_rows {
        push_lemma_row(
            &mut csv,
            "tree_envelope",
            format!("p={} t={} r={}", r.p, r.t, r.r),
            &r.measure.to_string(),
            &r.bound.to_string(),
            r.pass,
        );
    }
    for r in &combined_rows {
        let mut params = format!("Tinf={}", format_sig(r.t_inf, 12));
        for (p, e) in &r.finite_t {
            let _ = write!(params, " t_{p}={e}");
        }
        let _ = write!(params, " r={}", format_sig(r.r, 12));
        push_lemma_row(
            &mut csv,
            "combined_bound",
            params,
            &format_sig(r.lhs, 12),
            &format_sig(r.rhs, 12),
            r.pass,
        );
    }
    Ok(vec![("lemmas.csv".to_string(), csv)])
}

/// `alpha`: certified covolume lower bound for the configured lattice.
fn run_alpha(cfg: &Config) -> Result<Vec<(String, String)>, RunError> {
    let lat = build_lattice(cfg)?;
    let out = alpha_lower(&lat, cfg.alpha_height)?;

    let mut csv = comment_prologue(
        cfg,
        &[
            ("lattice_dim", cfg.lattice_dim.to_string()),
            ("alpha_height", cfg.alpha_height.to_string()),
        ],
    );
    csv.push_str("alpha,covolume,subsets_tried,witness\n");
    let witness = out
        .witness
        .vectors
        .iter()
        .map(|v| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" "))
        .collect::<Vec<_>>()
        .join(";");
    let _ = writeln!(
        csv,
        "{},{},{},{}",
        format_sig(out.alpha, 12),
        format_sig(out.witness.covolume, 12),
        out.subsets_tried,
        witness
    );
    Ok(vec![("alpha.csv".to_string(), csv)])
}

fn write_file(dir: &Path, name: &str, content: &str) -> Result<PathBuf, RunError> {
    let path = dir.join(name);
    fs::write(&path, content)
        .map_err(|err| RunError::Io { path: path.display().to_string(), err })?;
    Ok(path)
}

/// Run one subcommand end to end: compute, write the data files, then the
/// manifest. Returns every path written (manifest last).
pub fn run(cmd: Command, cfg: &Config, out_dir: &Path, dump_flag: bool) -> Result<RunOutput, RunError> {
    let start = Instant::now();
    let dump = dump_flag || cfg.dump_vectors;
    fs::create_dir_all(out_dir)
        .map_err(|err| RunError::Io { path: out_dir.display().to_string(), err })?;

    let outputs = match cmd {
        Command::Count => run_count(cfg, dump)?,
        Command::Volume => run_volume(cfg)?,
        Command::Ratio => run_ratio(cfg, dump)?,
        Command::Lemmas => run_lemmas(cfg)?,
        Command::Alpha => run_alpha(cfg)?,
    };

    let mut files = Vec::new();
    for (name, content) in &outputs {
        files.push(write_file(out_dir, name, content)?);
    }

    let manifest = RunManifest {
        command: cmd.name().to_string(),
        config_hash: cfg.hash.clone(),
        tool_version: TOOL_VERSION.to_string(),
        wall_ms: start.elapsed().as_millis(),
        outputs: files.iter().map(|p| p.display().to_string()).collect(),
        defaults: cfg.defaults.clone(),
    };
    files.push(write_file(out_dir, "manifest.txt", &manifest.render())?);
    Ok(RunOutput { files })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    fn tmpdir(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("sqcount-run-{tag}-{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        dir
    }

    #[test]
    fn count_csv_rows_follow_the_schedule() {
        let cfg = parse_config("primes = 3\nT = 1,2\nt_3 = 0\n").unwrap();
        let dir = tmpdir("count");
        let out = run(Command::Count, &cfg, &dir, false).unwrap();
        let csv = fs::read_to_string(&out.files[0]).unwrap();
        let data: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(data.len(), 3, "header + 2 rows: {csv}");
        assert_eq!(data[0], "Tinf,t_3,absT,N,tried,sieve_admitted");
        assert!(data[1].starts_with("1,0,1,"), "{csv}");
        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn manifest_names_every_output_and_default() {
        let cfg = parse_config("T = 2\n").unwrap();
        let dir = tmpdir("manifest");
        let out = run(Command::Count, &cfg, &dir, true).unwrap();
        let manifest = fs::read_to_string(out.files.last().unwrap()).unwrap();
        assert!(manifest.contains(&format!("config_hash = {}", cfg.hash)));
        assert!(manifest.contains("command = count"));
        assert!(manifest.contains("count.csv"));
        assert!(manifest.contains("vectors.csv"), "{manifest}");
        assert!(manifest.contains("defaulted rank = 3"));
        assert!(manifest.contains("defaulted include_origin = true"));
        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn vector_dump_lists_coordinates_over_denominator() {
        let cfg = parse_config("T = 1.5\ndump_vectors = true\n").unwrap();
        let dir = tmpdir("vectors");
        let out = run(Command::Count, &cfg, &dir, false).unwrap();
        let vectors = fs::read_to_string(&out.files[1]).unwrap();
        let mut lines = vectors.lines();
        assert_eq!(lines.next(), Some("w1,w2,w3,denom"));
        for row in lines {
            assert_eq!(row.split(',').count(), 4, "{row}");
        }
        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn cap_refusals_map_to_exit_two() {
        let cfg = parse_config("T = 1000000\nbox_cap = 10\n").unwrap();
        let dir = tmpdir("cap");
        let err = run(Command::Count, &cfg, &dir, false).unwrap_err();
        assert!(is_cap_refusal(&err), "{err}");
        assert_eq!(exit_code(&err), 2);
        let msg = err.to_string();
        assert!(msg.contains("cap"), "cost estimate missing: {msg}");
        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn validation_failures_map_to_exit_one() {
        // file source pointing nowhere
        let cfg = parse_config("form = file\nform_file = /nonexistent/q.txt\n").unwrap();
        let dir = tmpdir("exit1");
        let err = run(Command::Count, &cfg, &dir, false).unwrap_err();
        assert!(!is_cap_refusal(&err));
        assert_eq!(exit_code(&err), 1);
        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn lemmas_default_grid_has_zero_failures() {
        let cfg = parse_config("").unwrap();
        let dir = tmpdir("lemmas");
        let out = run(Command::Lemmas, &cfg, &dir, false).unwrap();
        let csv = fs::read_to_string(&out.files[0]).unwrap();
        let rows: Vec<&str> =
            csv.lines().filter(|l| !l.starts_with('#') && !l.starts_with("lemma,")).collect();
        assert!(rows.len() > 40, "expected the full grid, got {}", rows.len());
        for row in rows {
            assert!(row.ends_with(",true"), "failing lemma row: {row}");
        }
        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn alpha_standard_lattice_reports_unit_bound() {
        let cfg = parse_config("primes = 3\n").unwrap();
        let dir = tmpdir("alpha");
        let out = run(Command::Alpha, &cfg, &dir, false).unwrap();
        let csv = fs::read_to_string(&out.files[0]).unwrap();
        let row = csv.lines().find(|l| !l.starts_with('#') && !l.starts_with("alpha,")).unwrap();
        assert!(row.starts_with("1,1,"), "{csv}");
        let _ = fs::remove_dir_all(&dir);
    }
}
