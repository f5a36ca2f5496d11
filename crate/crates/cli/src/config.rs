//! Line-oriented `key = value` configuration: parsing, validation, default
//! resolution, and a stable digest of the canonicalized text.
//!
//! The grammar is deliberately flat. Per-place parameters use suffixed keys
//! (`I_3`, `t_3`, `rho_3`, `u0_3`); everything else is a scalar. `#` starts
//! a comment anywhere on a line. Parsing stops at the first error and
//! reports it with its line number.

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};
use sqcount_core::arith::{
    parse_rational, ArithError, FiniteRadius, PAdicInterval, Place, Rational, SSet,
};
use sqcount_core::counting::McOptions;
use sqcount_core::enumerate::Region;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config line {line}: {msg}")]
    At { line: usize, msg: String },
    #[error("config: {0}")]
    Invalid(String),
    #[error("cannot read config {path}: {err}")]
    Io { path: String, err: std::io::Error },
}

fn at(line: usize, msg: impl Into<String>) -> ConfigError {
    ConfigError::At { line, msg: msg.into() }
}

/// Where the quadratic form comes from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FormSource {
    /// The built-in anisotropic family for the configured rank.
    Standard,
    /// A seeded random walk of shears applied to the standard form.
    Random { seed: u64, steps: usize },
    /// A serialized form read from a file.
    File(String),
}

/// Where the lattice for the `alpha` subcommand comes from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LatticeSource {
    Standard,
    Random { seed: u64, steps: u32 },
}

/// Fully resolved run configuration. Every field is populated: parameters
/// absent from the text get defaults, and each default is echoed into
/// [`Config::defaults`] so the manifest can record it.
#[derive(Clone, Debug)]
pub struct Config {
    pub s: SSet,
    pub rank: usize,
    pub form: FormSource,
    /// Unit overrides for the standard form, keyed by prime.
    pub u0: BTreeMap<u64, u64>,
    /// Real radius of the star body (the `ball R` parameter).
    pub omega_radius: f64,
    /// Finite radius exponents of the star body, one per prime in S.
    pub rho: BTreeMap<u64, i64>,
    /// Real target interval (lo, hi).
    pub real_interval: (f64, f64),
    /// Finite target intervals, one per prime in S.
    pub finite_intervals: BTreeMap<u64, PAdicInterval>,
    /// Real dilation radii, one count/volume row per entry.
    pub t_schedule: Vec<f64>,
    /// Finite dilation radii, one per prime in S, fixed across the schedule.
    pub finite_t: BTreeMap<u64, FiniteRadius>,
    pub mc: McOptions,
    pub region: Region,
    pub include_origin: bool,
    pub use_sieve: bool,
    pub box_cap: u64,
    pub dump_vectors: bool,
    pub lattice: LatticeSource,
    pub lattice_dim: usize,
    pub alpha_height: i64,
    /// Hex digest of the canonicalized config text.
    pub hash: String,
    /// `key = value` lines for every parameter that fell back to a default.
    pub defaults: Vec<String>,
}

/// Strip the comment tail and surrounding whitespace; `None` for blanks.
/// The value side is `None` when the line has no `=` at all.
fn significant(line: &str) -> Option<(&str, Option<&str>)> {
    let body = match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    };
    let body = body.trim();
    if body.is_empty() {
        return None;
    }
    Some(match body.split_once('=') {
        Some((k, v)) => (k.trim(), Some(v.trim())),
        None => (body, None),
    })
}

/// Canonical form of the config text: comments and blank lines dropped,
/// `key = value` spacing normalized, line order preserved.
pub fn canonicalize(text: &str) -> String {
    let mut lines = Vec::new();
    for raw in text.lines() {
        if let Some((k, v)) = significant(raw) {
            lines.push(format!("{k} = {}", v.unwrap_or("")));
        }
    }
    lines.join("\n")
}

/// SHA-256 of the canonicalized text, as lowercase hex.
pub fn config_hash(text: &str) -> String {
    let digest = Sha256::digest(canonicalize(text).as_bytes());
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Raw key/value capture from the first pass, everything optional.
#[derive(Default)]
struct Raw {
    primes: Option<Vec<u64>>,
    rank: Option<usize>,
    form: Option<String>,
    form_seed: Option<u64>,
    form_steps: Option<usize>,
    form_file: Option<String>,
    omega_radius: Option<f64>,
    real_interval: Option<(f64, f64)>,
    t_schedule: Option<Vec<f64>>,
    mc_samples: Option<u64>,
    mc_seed: Option<u64>,
    region: Option<Region>,
    include_origin: Option<bool>,
    sieve: Option<bool>,
    box_cap: Option<u64>,
    dump_vectors: Option<bool>,
    lattice: Option<String>,
    lattice_dim: Option<usize>,
    lattice_seed: Option<u64>,
    lattice_steps: Option<u32>,
    alpha_height: Option<i64>,
    /// per-place families, each entry tagged with its source line
    finite_intervals: BTreeMap<u64, (usize, Rational, i64)>,
    finite_t: BTreeMap<u64, (usize, FiniteRadius)>,
    rho: BTreeMap<u64, (usize, i64)>,
    u0: BTreeMap<u64, (usize, u64)>,
}

fn parse_u64(line: usize, key: &str, v: &str) -> Result<u64, ConfigError> {
    v.parse().map_err(|_| at(line, format!("{key} must be a nonnegative integer, got {v:?}")))
}

fn parse_bool(line: usize, key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(at(line, format!("{key} must be true or false, got {v:?}"))),
    }
}

fn parse_f64(line: usize, key: &str, v: &str) -> Result<f64, ConfigError> {
    v.parse().map_err(|_| at(line, format!("{key} must be a number, got {v:?}")))
}

fn parse_primes(line: usize, v: &str) -> Result<Vec<u64>, ConfigError> {
    let mut out = Vec::new();
    if v.is_empty() {
        return Ok(out);
    }
    for tok in v.split(',') {
        let tok = tok.trim();
        if tok.is_empty() {
            return Err(at(line, "empty entry in prime list"));
        }
        let p: u64 =
            tok.parse().map_err(|_| at(line, format!("cannot parse prime {tok:?}")))?;
        match Place::finite(p) {
            Ok(_) => {}
            Err(ArithError::EvenPrime) => {
                return Err(at(line, "p = 2 is not supported: only odd primes are allowed"));
            }
            Err(_) => return Err(at(line, format!("{p} is not an odd prime"))),
        }
        if out.contains(&p) {
            return Err(at(line, format!("duplicate prime {p}")));
        }
        out.push(p);
    }
    Ok(out)
}

/// `a+p^b`: rational center, then the modulus as an explicit prime power.
fn parse_finite_interval(
    line: usize,
    key: &str,
    p: u64,
    v: &str,
) -> Result<(Rational, i64), ConfigError> {
    let malformed =
        || at(line, format!("{key} must look like `center+{p}^exponent`, got {v:?}"));
    let (center_txt, modulus_txt) = v.rsplit_once('+').ok_or_else(malformed)?;
    let center = parse_rational(center_txt).map_err(|_| malformed())?;
    let (base_txt, exp_txt) = modulus_txt.trim().split_once('^').ok_or_else(malformed)?;
    let base: u64 = base_txt.trim().parse().map_err(|_| malformed())?;
    if base != p {
        return Err(at(line, format!("{key}: modulus base {base} does not match the place {p}")));
    }
    let exp: i64 = exp_txt.trim().parse().map_err(|_| malformed())?;
    Ok((center, exp))
}

fn set_once<T>(
    slot: &mut Option<T>,
    value: T,
    line: usize,
    key: &str,
    seen: &mut BTreeMap<String, usize>,
) -> Result<(), ConfigError> {
    if let Some(first) = seen.get(key) {
        return Err(at(line, format!("duplicate key `{key}` (first set on line {first})")));
    }
    seen.insert(key.to_string(), line);
    *slot = Some(value);
    Ok(())
}

/// Parse and fully validate a configuration text. Returns the resolved
/// [`Config`] or the first error found, tagged with its line number.
pub fn parse_config(text: &str) -> Result<Config, ConfigError> {
    let mut raw = Raw::default();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();

    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let Some((key, value)) = significant(raw_line) else { continue };
        let Some(value) = value else {
            return Err(at(line, format!("expected `key = value`, got {key:?}")));
        };
        if key.is_empty() {
            return Err(at(line, "missing key before `=`"));
        }
        match key {
            "primes" => {
                let v = parse_primes(line, value)?;
                set_once(&mut raw.primes, v, line, key, &mut seen)?;
            }
            "rank" => {
                let v: usize = value
                    .parse()
                    .map_err(|_| at(line, format!("rank must be an integer, got {value:?}")))?;
                if v != 3 && v != 4 {
                    return Err(at(line, format!("rank must be 3 or 4, got {v}")));
                }
                set_once(&mut raw.rank, v, line, key, &mut seen)?;
            }
            "form" => {
                if !matches!(value, "standard" | "random" | "file") {
                    return Err(at(
                        line,
                        format!("form must be standard, random, or file, got {value:?}"),
                    ));
                }
                set_once(&mut raw.form, value.to_string(), line, key, &mut seen)?;
            }
            "form_seed" => {
                let v = parse_u64(line, key, value)?;
                set_once(&mut raw.form_seed, v, line, key, &mut seen)?;
            }
            "form_steps" => {
                let v: usize = value.parse().map_err(|_| {
                    at(line, format!("form_steps must be a nonnegative integer, got {value:?}"))
                })?;
                set_once(&mut raw.form_steps, v, line, key, &mut seen)?;
            }
            "form_file" => {
                if value.is_empty() {
                    return Err(at(line, "form_file needs a path"));
                }
                set_once(&mut raw.form_file, value.to_string(), line, key, &mut seen)?;
            }
            "omega" => {
                let mut toks = value.split_whitespace();
                let kind = toks.next().unwrap_or("");
                if kind != "ball" {
                    return Err(at(
                        line,
                        format!("unknown star body {value:?} (expected `ball` or `ball RADIUS`)"),
                    ));
                }
                let radius = match toks.next() {
                    Some(r) => parse_f64(line, "omega radius", r)?,
                    None => 1.0,
                };
                if toks.next().is_some() {
                    return Err(at(line, format!("too many tokens in omega spec {value:?}")));
                }
                if !(radius.is_finite() && radius > 0.0) {
                    return Err(at(line, format!("omega radius must be positive, got {radius}")));
                }
                set_once(&mut raw.omega_radius, radius, line, key, &mut seen)?;
            }
            "I" => {
                let (lo_txt, hi_txt) = value
                    .split_once(',')
                    .ok_or_else(|| at(line, format!("I must look like `lo,hi`, got {value:?}")))?;
                let lo = parse_f64(line, "interval endpoint", lo_txt.trim())?;
                let hi = parse_f64(line, "interval endpoint", hi_txt.trim())?;
                if !(lo.is_finite() && hi.is_finite()) {
                    return Err(at(line, "interval endpoints must be finite"));
                }
                if lo >= hi {
                    return Err(at(line, format!("interval is empty: {lo} >= {hi}")));
                }
                set_once(&mut raw.real_interval, (lo, hi), line, key, &mut seen)?;
            }
            "T" => {
                let mut sched = Vec::new();
                for tok in value.split(',') {
                    let t = parse_f64(line, "T entry", tok.trim())?;
                    if !(t.is_finite() && t > 0.0) {
                        return Err(at(line, format!("T entries must be positive, got {t}")));
                    }
                    sched.push(t);
                }
                if sched.is_empty() {
                    return Err(at(line, "T needs at least one radius"));
                }
                set_once(&mut raw.t_schedule, sched, line, key, &mut seen)?;
            }
            "mc_samples" => {
                let v = parse_u64(line, key, value)?;
                if v == 0 {
                    return Err(at(line, "mc_samples must be at least 1"));
                }
                set_once(&mut raw.mc_samples, v, line, key, &mut seen)?;
            }
            "mc_seed" => {
                let v = parse_u64(line, key, value)?;
                set_once(&mut raw.mc_seed, v, line, key, &mut seen)?;
            }
            "region" => {
                let v = match value {
                    "body" => Region::Body,
                    "shell" => Region::Shell,
                    _ => {
                        return Err(at(
                            line,
                            format!("region must be body or shell, got {value:?}"),
                        ))
                    }
                };
                set_once(&mut raw.region, v, line, key, &mut seen)?;
            }
            "include_origin" => {
                let v = parse_bool(line, key, value)?;
                set_once(&mut raw.include_origin, v, line, key, &mut seen)?;
            }
            "sieve" => {
                let v = match value {
                    "on" => true,
                    "off" => false,
                    _ => return Err(at(line, format!("sieve must be on or off, got {value:?}"))),
                };
                set_once(&mut raw.sieve, v, line, key, &mut seen)?;
            }
            "box_cap" => {
                let v = parse_u64(line, key, value)?;
                if v == 0 {
                    return Err(at(line, "box_cap must be at least 1"));
                }
                set_once(&mut raw.box_cap, v, line, key, &mut seen)?;
            }
            "dump_vectors" => {
                let v = parse_bool(line, key, value)?;
                set_once(&mut raw.dump_vectors, v, line, key, &mut seen)?;
            }
            "lattice" => {
                if !matches!(value, "standard" | "random") {
                    return Err(at(
                        line,
                        format!("lattice must be standard or random, got {value:?}"),
                    ));
                }
                set_once(&mut raw.lattice, value.to_string(), line, key, &mut seen)?;
            }
            "lattice_dim" => {
                let v: usize = value.parse().map_err(|_| {
                    at(line, format!("lattice_dim must be an integer, got {value:?}"))
                })?;
                if v == 0 {
                    return Err(at(line, "lattice_dim must be at least 1"));
                }
                set_once(&mut raw.lattice_dim, v, line, key, &mut seen)?;
            }
            "lattice_seed" => {
                let v = parse_u64(line, key, value)?;
                set_once(&mut raw.lattice_seed, v, line, key, &mut seen)?;
            }
            "lattice_steps" => {
                let v: u32 = value.parse().map_err(|_| {
                    at(line, format!("lattice_steps must be a nonnegative integer, got {value:?}"))
                })?;
                set_once(&mut raw.lattice_steps, v, line, key, &mut seen)?;
            }
            "alpha_height" => {
                let v: i64 = value.parse().map_err(|_| {
                    at(line, format!("alpha_height must be an integer, got {value:?}"))
                })?;
                if v < 1 {
                    return Err(at(line, format!("alpha_height must be at least 1, got {v}")));
                }
                set_once(&mut raw.alpha_height, v, line, key, &mut seen)?;
            }
            _ => {
                // per-place families: I_p, t_p, rho_p, u0_p
                let Some((family, suffix)) = key.split_once('_') else {
                    return Err(at(line, format!("unknown key `{key}`")));
                };
                let p: u64 = match suffix.parse() {
                    Ok(p) => p,
                    Err(_) => return Err(at(line, format!("unknown key `{key}`"))),
                };
                if let Some(first) = seen.get(key) {
                    return Err(at(
                        line,
                        format!("duplicate key `{key}` (first set on line {first})"),
                    ));
                }
                seen.insert(key.to_string(), line);
                match family {
                    "I" => {
                        let (center, exp) = parse_finite_interval(line, key, p, value)?;
                        raw.finite_intervals.insert(p, (line, center, exp));
                    }
                    "t" => {
                        let r = if value == "-inf" {
                            FiniteRadius::Zero
                        } else {
                            let e: i32 = value.parse().map_err(|_| {
                                at(
                                    line,
                                    format!("{key} must be an exponent or -inf, got {value:?}"),
                                )
                            })?;
                            FiniteRadius::Exp(e)
                        };
                        raw.finite_t.insert(p, (line, r));
                    }
                    "rho" => {
                        let e: i64 = value.parse().map_err(|_| {
                            at(line, format!("{key} must be an integer exponent, got {value:?}"))
                        })?;
                        raw.rho.insert(p, (line, e));
                    }
                    "u0" => {
                        let u = parse_u64(line, key, value)?;
                        if u < 2 {
                            return Err(at(line, format!("{key} must be at least 2, got {u}")));
                        }
                        raw.u0.insert(p, (line, u));
                    }
                    _ => return Err(at(line, format!("unknown key `{key}`"))),
                }
            }
        }
    }

    resolve(raw, text)
}

/// Second pass: defaults, cross-field checks, and the assembled Config.
fn resolve(raw: Raw, text: &str) -> Result<Config, ConfigError> {
    let mut defaults = Vec::new();

    let primes = match raw.primes {
        Some(p) => p,
        None => {
            defaults.push("primes =".to_string());
            Vec::new()
        }
    };
    let s = SSet::new(&primes).map_err(|e| ConfigError::Invalid(e.to_string()))?;

    // every per-place key must refer to a configured prime
    for (p, (line, ..)) in &raw.finite_intervals {
        if !s.contains(&Place::Finite(*p)) {
            return Err(at(*line, format!("I_{p}: place {p} is not in the configured prime set")));
        }
    }
    for (p, (line, _)) in &raw.finite_t {
        if !s.contains(&Place::Finite(*p)) {
            return Err(at(*line, format!("t_{p}: place {p} is not in the configured prime set")));
        }
    }
    for (p, (line, _)) in &raw.rho {
        if !s.contains(&Place::Finite(*p)) {
            return Err(at(
                *line,
                format!("rho_{p}: place {p} is not in the configured prime set"),
            ));
        }
    }
    for (p, (line, u)) in &raw.u0 {
        if !s.contains(&Place::Finite(*p)) {
            return Err(at(*line, format!("u0_{p}: place {p} is not in the configured prime set")));
        }
        if *u >= *p {
            return Err(at(*line, format!("u0_{p} must lie in 2..{p}, got {u}")));
        }
    }

    let rank = raw.rank.unwrap_or_else(|| {
        defaults.push("rank = 3".to_string());
        3
    });

    let form_kind = raw.form.unwrap_or_else(|| {
        defaults.push("form = standard".to_string());
        "standard".to_string()
    });
    let form = match form_kind.as_str() {
        "standard" => {
            if raw.form_seed.is_some() || raw.form_steps.is_some() {
                return Err(ConfigError::Invalid(
                    "form_seed/form_steps are set but form = standard (expected form = random)"
                        .into(),
                ));
            }
            if raw.form_file.is_some() {
                return Err(ConfigError::Invalid(
                    "form_file is set but form = standard (expected form = file)".into(),
                ));
            }
            FormSource::Standard
        }
        "random" => {
            if raw.form_file.is_some() {
                return Err(ConfigError::Invalid(
                    "form_file is set but form = random (expected form = file)".into(),
                ));
            }
            let seed = raw.form_seed.unwrap_or_else(|| {
                defaults.push("form_seed = 0".to_string());
                0
            });
            let steps = raw.form_steps.unwrap_or_else(|| {
                defaults.push("form_steps = 3".to_string());
                3
            });
            FormSource::Random { seed, steps }
        }
        "file" => {
            if raw.form_seed.is_some() || raw.form_steps.is_some() {
                return Err(ConfigError::Invalid(
                    "form_seed/form_steps are set but form = file (expected form = random)".into(),
                ));
            }
            let path = raw.form_file.ok_or_else(|| {
                ConfigError::Invalid("form = file requires form_file = PATH".into())
            })?;
            FormSource::File(path)
        }
        _ => unreachable!("form values validated at parse time"),
    };
    if !raw.u0.is_empty() && form != FormSource::Standard {
        let (p, (line, _)) = raw.u0.iter().next().expect("nonempty");
        return Err(at(*line, format!("u0_{p} only applies to form = standard")));
    }

    let mut u0 = BTreeMap::new();
    for (p, (_, u)) in &raw.u0 {
        u0.insert(*p, *u);
    }
    if form == FormSource::Standard {
        for p in s.finite_primes() {
            if !u0.contains_key(&p) {
                defaults.push(format!("u0_{p} = {}", sqcount_core::forms::default_u0(p)));
            }
        }
    }

    let omega_radius = raw.omega_radius.unwrap_or_else(|| {
        defaults.push("omega = ball 1".to_string());
        1.0
    });
    let mut rho = BTreeMap::new();
    for p in s.finite_primes() {
        match raw.rho.get(&p) {
            Some((_, e)) => {
                rho.insert(p, *e);
            }
            None => {
                defaults.push(format!("rho_{p} = 0"));
                rho.insert(p, 0);
            }
        }
    }

    let real_interval = raw.real_interval.unwrap_or_else(|| {
        defaults.push("I = -0.5,0.5".to_string());
        (-0.5, 0.5)
    });
    let mut finite_intervals = BTreeMap::new();
    for p in s.finite_primes() {
        let place = Place::Finite(p);
        let ival = match raw.finite_intervals.get(&p) {
            Some((line, center, exp)) => PAdicInterval::new(place, center.clone(), *exp)
                .map_err(|e| at(*line, e.to_string()))?,
            None => {
                defaults.push(format!("I_{p} = 0+{p}^0"));
                PAdicInterval::new(place, Rational::from_integer(0.into()), 0)
                    .expect("unit interval is valid")
            }
        };
        finite_intervals.insert(p, ival);
    }

    let t_schedule = raw.t_schedule.unwrap_or_else(|| {
        defaults.push("T = 10".to_string());
        vec![10.0]
    });
    let mut finite_t = BTreeMap::new();
    for p in s.finite_primes() {
        match raw.finite_t.get(&p) {
            Some((_, r)) => {
                finite_t.insert(p, *r);
            }
            None => {
                defaults.push(format!("t_{p} = 0"));
                finite_t.insert(p, FiniteRadius::Exp(0));
            }
        }
    }

    let mc_samples = raw.mc_samples.unwrap_or_else(|| {
        defaults.push("mc_samples = 200000".to_string());
        200_000
    });
    let mc_seed = raw.mc_seed.unwrap_or_else(|| {
        defaults.push("mc_seed = 0".to_string());
        0
    });

    let region = raw.region.unwrap_or_else(|| {
        defaults.push("region = body".to_string());
        Region::Body
    });
    let include_origin = raw.include_origin.unwrap_or_else(|| {
        defaults.push("include_origin = true".to_string());
        true
    });
    let use_sieve = raw.sieve.unwrap_or_else(|| {
        defaults.push("sieve = on".to_string());
        true
    });
    let box_cap = raw.box_cap.unwrap_or_else(|| {
        defaults.push("box_cap = 2000000000".to_string());
        2_000_000_000
    });
    let dump_vectors = raw.dump_vectors.unwrap_or_else(|| {
        defaults.push("dump_vectors = false".to_string());
        false
    });

    let lattice_kind = raw.lattice.unwrap_or_else(|| {
        defaults.push("lattice = standard".to_string());
        "standard".to_string()
    });
    let lattice = match lattice_kind.as_str() {
        "standard" => {
            if raw.lattice_seed.is_some() || raw.lattice_steps.is_some() {
                return Err(ConfigError::Invalid(
                    "lattice_seed/lattice_steps are set but lattice = standard".into(),
                ));
            }
            LatticeSource::Standard
        }
        "random" => {
            let seed = raw.lattice_seed.unwrap_or_else(|| {
                defaults.push("lattice_seed = 0".to_string());
                0
            });
            let steps = raw.lattice_steps.unwrap_or_else(|| {
                defaults.push("lattice_steps = 3".to_string());
                3
            });
            LatticeSource::Random { seed, steps }
        }
        _ => unreachable!("lattice values validated at parse time"),
    };
    let lattice_dim = raw.lattice_dim.unwrap_or_else(|| {
        defaults.push("lattice_dim = 2".to_string());
        2
    });
    let alpha_height = raw.alpha_height.unwrap_or_else(|| {
        defaults.push("alpha_height = 2".to_string());
        2
    });

    Ok(Config {
        s,
        rank,
        form,
        u0,
        omega_radius,
        rho,
        real_interval,
        finite_intervals,
        t_schedule,
        finite_t,
        mc: McOptions { samples: mc_samples, seed: mc_seed },
        region,
        include_origin,
        use_sieve,
        box_cap,
        dump_vectors,
        lattice,
        lattice_dim,
        alpha_height,
        hash: config_hash(text),
        defaults,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primes_key_builds_the_place_set() {
        let cfg = parse_config("primes = 3,5\n").unwrap();
        let got: Vec<u64> = cfg.s.finite_primes().collect();
        assert_eq!(got, vec![3, 5]);
    }

    #[test]
    fn two_is_rejected_with_a_dedicated_message() {
        let err = parse_config("primes = 2\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 1"), "{msg}");
        assert!(msg.contains("p = 2 is not supported"), "{msg}");
    }

    #[test]
    fn composite_and_even_entries_are_rejected() {
        for bad in ["9", "15", "4"] {
            let err = parse_config(&format!("primes = {bad}\n")).unwrap_err();
            assert!(err.to_string().contains("not an odd prime"), "{err}");
        }
    }

    #[test]
    fn finite_interval_grammar_matches_center_plus_prime_power() {
        let cfg = parse_config("primes = 3\nI_3 = 1+3^2\n").unwrap();
        let ival = &cfg.finite_intervals[&3];
        assert_eq!(ival.center, Rational::from_integer(1.into()));
        assert_eq!(ival.exponent, 2);
        let err = parse_config("primes = 3\nI_3 = 1+5^2\n").unwrap_err();
        assert!(err.to_string().contains("does not match the place"), "{err}");
    }

    #[test]
    fn first_error_carries_the_line_number() {
        let err = parse_config("rank = 3\n\n# fine\nrank = 4\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 4"), "{msg}");
        assert!(msg.contains("duplicate key"), "{msg}");
        assert!(msg.contains("first set on line 1"), "{msg}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse_config("granularity = 7\n").unwrap_err();
        assert!(err.to_string().contains("unknown key `granularity`"), "{err}");
        let err = parse_config("q_3 = 7\n").unwrap_err();
        assert!(err.to_string().contains("unknown key `q_3`"), "{err}");
    }

    #[test]
    fn rank_outside_three_four_is_rejected() {
        let err = parse_config("rank = 5\n").unwrap_err();
        assert!(err.to_string().contains("rank must be 3 or 4"), "{err}");
    }

    #[test]
    fn defaults_are_recorded_for_the_manifest() {
        let cfg = parse_config("primes = 3\nT = 10,20\n").unwrap();
        assert!(cfg.defaults.iter().any(|d| d == "rank = 3"));
        assert!(cfg.defaults.iter().any(|d| d == "I_3 = 0+3^0"));
        assert!(cfg.defaults.iter().any(|d| d == "t_3 = 0"));
        assert!(cfg.defaults.iter().any(|d| d == "u0_3 = 2"));
        assert!(!cfg.defaults.iter().any(|d| d.starts_with("T =")));
    }

    #[test]
    fn hash_ignores_comments_and_spacing_but_not_values() {
        let a = config_hash("rank = 3\nT = 10\n");
        let b = config_hash("  rank=3   # why not\n\nT =    10\n");
        let c = config_hash("rank = 4\nT = 10\n");
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn place_suffixed_keys_must_match_the_prime_set() {
        let err = parse_config("primes = 3\nt_5 = 1\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "{msg}");
        assert!(msg.contains("not in the configured prime set"), "{msg}");
    }

    #[test]
    fn degenerate_finite_radius_spells_minus_inf() {
        let cfg = parse_config("primes = 3\nt_3 = -inf\n").unwrap();
        assert_eq!(cfg.finite_t[&3], FiniteRadius::Zero);
        let cfg = parse_config("primes = 3\nt_3 = -2\n").unwrap();
        assert_eq!(cfg.finite_t[&3], FiniteRadius::Exp(-2));
    }

    #[test]
    fn source_specific_keys_require_the_matching_source() {
        let err = parse_config("form_seed = 7\n").unwrap_err();
        assert!(err.to_string().contains("form = standard"), "{err}");
        let err = parse_config("form = file\n").unwrap_err();
        assert!(err.to_string().contains("requires form_file"), "{err}");
        let err = parse_config("primes = 3\nform = random\nu0_3 = 2\n").unwrap_err();
        assert!(err.to_string().contains("only applies to form = standard"), "{err}");
    }

    #[test]
    fn empty_text_resolves_to_all_defaults() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg.s.num_finite(), 0);
        assert_eq!(cfg.rank, 3);
        assert_eq!(cfg.form, FormSource::Standard);
        assert_eq!(cfg.t_schedule, vec![10.0]);
        assert_eq!(cfg.real_interval, (-0.5, 0.5));
        assert!(cfg.include_origin);
        assert!(cfg.use_sieve);
        assert!(!cfg.dump_vectors);
    }
}
