//! Sectioned key-value experiment configs: strict first-error parsing with
//! line numbers, documented defaults for everything outside the problem
//! definition, and a canonical serialization that round-trips.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::integrator::SolverParams;
use crate::model::{Domain, DomainKind, FunctionSpec, ProblemSpec};

/// Output artifact families a run may emit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

/// A fully validated experiment configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    /// The continuous problem.
    pub problem: ProblemSpec,
    /// Initial amplitude for single runs.
    pub amplitude: f64,
    /// Solver grid cells.
    pub solver_cells: usize,
    /// Time-stepping safety factors and stopping rules.
    pub solver: SolverParams,
    /// Amplitude list for sweeps, ascending.
    pub sweep_amplitudes: Vec<f64>,
    /// Worker threads for sweeps.
    pub workers: usize,
    /// Truncation radius of the self-similar y-grid.
    pub frame_extent: f64,
    /// Cells of the self-similar y-grid.
    pub frame_cells: usize,
    /// Moment orders reported in the energy table (subset of {1,2,3}).
    pub moment_orders: Vec<u32>,
    /// Number of equally spaced self-similar frames.
    pub frame_count: usize,
    /// Output directory.
    pub output_dir: String,
    /// Artifact families to write.
    pub output_formats: Vec<OutputFormat>,
}

const SECTIONS: [&str; 5] = ["problem", "solver", "sweep", "selfsim", "output"];

const KNOWN_KEYS: [&str; 31] = [
    "problem.N",
    "problem.p",
    "problem.domain_kind",
    "problem.extent",
    "problem.M",
    "problem.V.kind",
    "problem.V.value",
    "problem.V.base",
    "problem.V.amp",
    "problem.V.center",
    "problem.V.width",
    "problem.V.nodes",
    "problem.V.values",
    "problem.V.floor",
    "problem.phi.kind",
    "problem.phi.value",
    "problem.phi.base",
    "problem.phi.amp",
    "problem.phi.center",
    "problem.phi.width",
    "problem.phi.nodes",
    "problem.phi.values",
    "solver.m",
    "solver.cfl_safety",
    "solver.reaction_safety",
    "solver.u_stop",
    "solver.max_steps",
    "sweep.Ms",
    "sweep.workers",
    "selfsim.y_max",
    "selfsim.m_y",
];

const KNOWN_KEYS_TAIL: [&str; 4] =
    ["selfsim.k_list", "selfsim.frame_count", "output.dir", "output.formats"];

fn is_known(key: &str) -> bool {
    KNOWN_KEYS.contains(&key) || KNOWN_KEYS_TAIL.contains(&key)
}

/// Raw parsed entries: full key → (line, value).
struct RawConfig {
    entries: HashMap<String, (usize, String)>,
    have_problem_section: bool,
}

fn parse_raw(text: &str) -> Result<RawConfig> {
    let mut entries = HashMap::new();
    let mut section: Option<String> = None;
    let mut have_problem_section = false;
    for (index, raw_line) in text.lines().enumerate() {
        let line = index + 1;
        let trimmed = raw_line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with(';') {
            continue;
        }
        if let Some(name) = trimmed.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or(Error::Config {
                line,
                message: format!("malformed section header `{}`", trimmed),
            })?;
            if !SECTIONS.contains(&name) {
                return Err(Error::Config {
                    line,
                    message: format!(
                        "unknown section [{}]; known sections: {}",
                        name,
                        SECTIONS.join(", ")
                    ),
                });
            }
            if name == "problem" {
                have_problem_section = true;
            }
            section = Some(name.to_string());
            continue;
        }
        let (key, value) = trimmed.split_once('=').ok_or(Error::Config {
            line,
            message: format!("expected `key = value`, got `{}`", trimmed),
        })?;
        let section_name = section.as_ref().ok_or(Error::Config {
            line,
            message: "key appears before any [section] header".into(),
        })?;
        let full = format!("{}.{}", section_name, key.trim());
        if !is_known(&full) {
            return Err(Error::Config { line, message: format!("unknown key `{}`", full) });
        }
        if entries.contains_key(&full) {
            return Err(Error::Config { line, message: format!("duplicate key `{}`", full) });
        }
        entries.insert(full, (line, value.trim().to_string()));
    }
    Ok(RawConfig { entries, have_problem_section })
}

impl RawConfig {
    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.entries.remove(key)
    }

    fn required(&mut self, key: &str) -> Result<(usize, String)> {
        self.take(key).ok_or(Error::Config {
            line: 0,
            message: format!("missing required key `{}`", key),
        })
    }

    fn real(&mut self, key: &str, default: f64) -> Result<f64> {
        match self.take(key) {
            None => Ok(default),
            Some((line, value)) => parse_real(&value, key, line),
        }
    }

    fn required_real(&mut self, key: &str) -> Result<f64> {
        let (line, value) = self.required(key)?;
        parse_real(&value, key, line)
    }

    fn count<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        match self.take(key) {
            None => Ok(default),
            Some((line, value)) => value.parse::<T>().map_err(|_| Error::Config {
                line,
                message: format!("`{}` must be a nonnegative integer, got `{}`", key, value),
            }),
        }
    }

    fn real_list(&mut self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.take(key) {
            None => Ok(default.to_vec()),
            Some((line, value)) => value
                .split(',')
                .map(|part| parse_real(part.trim(), key, line))
                .collect(),
        }
    }
}

fn parse_real(value: &str, key: &str, line: usize) -> Result<f64> {
    value.parse::<f64>().map_err(|_| Error::Config {
        line,
        message: format!("`{}` must be a number, got `{}`", key, value),
    })
}

/// Parse one of the V.* / phi.* function families. `prefix` is
/// "problem.V" or "problem.phi".
fn parse_function(raw: &mut RawConfig, prefix: &str) -> Result<FunctionSpec> {
    let kind_key = format!("{}.kind", prefix);
    let (kind_line, kind) = raw.required(&kind_key)?;
    let spec = match kind.as_str() {
        "constant" => FunctionSpec::Constant {
            value: raw.required_real(&format!("{}.value", prefix))?,
        },
        "gaussian_bump" => FunctionSpec::GaussianBump {
            base: raw.required_real(&format!("{}.base", prefix))?,
            amp: raw.required_real(&format!("{}.amp", prefix))?,
            center: raw.required_real(&format!("{}.center", prefix))?,
            width: raw.required_real(&format!("{}.width", prefix))?,
        },
        "cosine_cap" => FunctionSpec::CosineCap,
        "table" => {
            let nodes_key = format!("{}.nodes", prefix);
            let values_key = format!("{}.values", prefix);
            let (nodes_line, nodes_text) = raw.required(&nodes_key)?;
            let (_, values_text) = raw.required(&values_key)?;
            let nodes: Vec<f64> = nodes_text
                .split(',')
                .map(|p| parse_real(p.trim(), &nodes_key, nodes_line))
                .collect::<Result<_>>()?;
            let values: Vec<f64> = values_text
                .split(',')
                .map(|p| parse_real(p.trim(), &values_key, nodes_line))
                .collect::<Result<_>>()?;
            FunctionSpec::Table { nodes, values }
        }
        other => {
            return Err(Error::Config {
                line: kind_line,
                message: format!(
                    "`{}` must be one of constant, gaussian_bump, cosine_cap, table; got `{}`",
                    kind_key, other
                ),
            })
        }
    };
    // Parameters of the other kinds must not linger.
    for suffix in ["value", "base", "amp", "center", "width", "nodes", "values"] {
        let full = format!("{}.{}", prefix, suffix);
        if let Some((line, _)) = raw.entries.get(&full) {
            return Err(Error::Config {
                line: *line,
                message: format!("`{}` is not used by kind `{}`", full, kind),
            });
        }
    }
    Ok(spec)
}

/// Parse and validate a config document. The first problem encountered is
/// reported with its line number; line 0 marks whole-document problems
/// (missing sections or keys).
pub fn parse_config(text: &str) -> Result<Config> {
    let mut raw = parse_raw(text)?;
    if !raw.have_problem_section {
        return Err(Error::Config { line: 0, message: "missing required section [problem]".into() });
    }

    let dim = {
        let (line, value) = raw.required("problem.N")?;
        value.parse::<u32>().map_err(|_| Error::Config {
            line,
            message: format!("`problem.N` must be a positive integer, got `{}`", value),
        })?
    };
    let exponent = raw.required_real("problem.p")?;
    let domain_kind = {
        let (line, value) = raw.required("problem.domain_kind")?;
        match value.as_str() {
            "interval" => DomainKind::Interval,
            "ball" => DomainKind::Ball,
            other => {
                return Err(Error::Config {
                    line,
                    message: format!(
                        "`problem.domain_kind` must be interval or ball, got `{}`",
                        other
                    ),
                })
            }
        }
    };
    let extent = raw.required_real("problem.extent")?;
    let amplitude = raw.real("problem.M", 50.0)?;
    let potential = parse_function(&mut raw, "problem.V")?;
    let potential_floor = raw.real("problem.V.floor", 1e-6)?;
    let profile = parse_function(&mut raw, "problem.phi")?;

    let solver_cells = raw.count("solver.m", 1024)?;
    let defaults = SolverParams::default();
    let solver = SolverParams {
        cfl_safety: raw.real("solver.cfl_safety", defaults.cfl_safety)?,
        reaction_safety: raw.real("solver.reaction_safety", defaults.reaction_safety)?,
        stop_threshold: raw.real("solver.u_stop", defaults.stop_threshold)?,
        max_steps: raw.count("solver.max_steps", defaults.max_steps)?,
    };

    let sweep_amplitudes = raw.real_list("sweep.Ms", &[8.0, 16.0, 32.0, 64.0])?;
    let workers = raw.count("sweep.workers", 4)?;

    let frame_extent = raw.real("selfsim.y_max", 16.0)?;
    let frame_cells = raw.count("selfsim.m_y", 4096)?;
    let moment_orders = {
        let as_reals = raw.real_list("selfsim.k_list", &[1.0, 2.0, 3.0])?;
        let mut orders = Vec::with_capacity(as_reals.len());
        for r in as_reals {
            let k = r as u32;
            if r != k as f64 || !(1..=3).contains(&k) {
                return Err(Error::Config {
                    line: 0,
                    message: format!(
                        "`selfsim.k_list` entries must be integers in 1..=3, got {}",
                        r
                    ),
                });
            }
            orders.push(k);
        }
        orders
    };
    let frame_count = raw.count("selfsim.frame_count", 24)?;

    let output_dir = match raw.take("output.dir") {
        None => "out".to_string(),
        Some((_, value)) => value,
    };
    let output_formats = match raw.take("output.formats") {
        None => vec![OutputFormat::Csv, OutputFormat::Json],
        Some((line, value)) => {
            let mut formats = Vec::new();
            for part in value.split(',') {
                match part.trim() {
                    "csv" => formats.push(OutputFormat::Csv),
                    "json" => formats.push(OutputFormat::Json),
                    other => {
                        return Err(Error::Config {
                            line,
                            message: format!(
                                "`output.formats` entries must be csv or json, got `{}`",
                                other
                            ),
                        })
                    }
                }
            }
            formats
        }
    };

    let config = Config {
        problem: ProblemSpec {
            dim,
            exponent,
            domain: Domain { kind: domain_kind, extent },
            potential,
            profile,
            potential_floor,
        },
        amplitude,
        solver_cells,
        solver,
        sweep_amplitudes,
        workers,
        frame_extent,
        frame_cells,
        moment_orders,
        frame_count,
        output_dir,
        output_formats,
    };
    validate_scalars(&config)?;
    Ok(config)
}

/// Structural checks that don't need a grid: positivity and ordering of the
/// scalar knobs. Problem-level hypotheses are checked by the model layer
/// when a grid exists.
fn validate_scalars(config: &Config) -> Result<()> {
    let reject = |message: String| Err(Error::Config { line: 0, message });
    if config.problem.dim < 1 {
        return reject("problem.N must be at least 1".into());
    }
    if !(config.problem.exponent > 1.0) {
        return reject(format!("problem.p must exceed 1, got {}", config.problem.exponent));
    }
    if !(config.problem.domain.extent > 0.0) {
        return reject(format!(
            "problem.extent must be positive, got {}",
            config.problem.domain.extent
        ));
    }
    if !(config.amplitude > 0.0) {
        return reject(format!("problem.M must be positive, got {}", config.amplitude));
    }
    if !(config.problem.potential_floor > 0.0) {
        return reject(format!(
            "problem.V.floor must be positive, got {}",
            config.problem.potential_floor
        ));
    }
    if config.sweep_amplitudes.is_empty() {
        return reject("sweep.Ms must not be empty".into());
    }
    for pair in config.sweep_amplitudes.windows(2) {
        if !(pair[0] < pair[1]) {
            return reject(format!(
                "sweep.Ms must be strictly ascending, got {} before {}",
                pair[0], pair[1]
            ));
        }
    }
    if !(config.sweep_amplitudes[0] > 0.0) {
        return reject("sweep.Ms entries must be positive".into());
    }
    if config.workers == 0 {
        return reject("sweep.workers must be at least 1".into());
    }
    if !(config.frame_extent > 0.0) {
        return reject(format!("selfsim.y_max must be positive, got {}", config.frame_extent));
    }
    if config.frame_count < 3 {
        return reject(format!(
            "selfsim.frame_count must be at least 3, got {}",
            config.frame_count
        ));
    }
    if config.moment_orders.is_empty() {
        return reject("selfsim.k_list must not be empty".into());
    }
    if config.output_formats.is_empty() {
        return reject("output.formats must not be empty".into());
    }
    if config.output_dir.is_empty() {
        return reject("output.dir must not be empty".into());
    }
    Ok(())
}

fn write_function(out: &mut String, prefix: &str, f: &FunctionSpec) {
    use std::fmt::Write;
    match f {
        FunctionSpec::Constant { value } => {
            let _ = writeln!(out, "{}.kind = constant", prefix);
            let _ = writeln!(out, "{}.value = {}", prefix, value);
        }
        FunctionSpec::GaussianBump { base, amp, center, width } => {
            let _ = writeln!(out, "{}.kind = gaussian_bump", prefix);
            let _ = writeln!(out, "{}.base = {}", prefix, base);
            let _ = writeln!(out, "{}.amp = {}", prefix, amp);
            let _ = writeln!(out, "{}.center = {}", prefix, center);
            let _ = writeln!(out, "{}.width = {}", prefix, width);
        }
        FunctionSpec::CosineCap => {
            let _ = writeln!(out, "{}.kind = cosine_cap", prefix);
        }
        FunctionSpec::Table { nodes, values } => {
            let join = |xs: &[f64]| {
                xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
            };
            let _ = writeln!(out, "{}.kind = table", prefix);
            let _ = writeln!(out, "{}.nodes = {}", prefix, join(nodes));
            let _ = writeln!(out, "{}.values = {}", prefix, join(values));
        }
    }
}

/// Canonical text form: every key explicit, sections in fixed order.
/// `parse_config(serialize(c))` reproduces `c`.
pub fn serialize(config: &Config) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    let _ = writeln!(out, "[problem]");
    let _ = writeln!(out, "N = {}", config.problem.dim);
    let _ = writeln!(out, "p = {}", config.problem.exponent);
    let _ = writeln!(
        out,
        "domain_kind = {}",
        match config.problem.domain.kind {
            DomainKind::Interval => "interval",
            DomainKind::Ball => "ball",
        }
    );
    let _ = writeln!(out, "extent = {}", config.problem.domain.extent);
    let _ = writeln!(out, "M = {}", config.amplitude);
    write_function(&mut out, "V", &config.problem.potential);
    let _ = writeln!(out, "V.floor = {}", config.problem.potential_floor);
    write_function(&mut out, "phi", &config.problem.profile);
    let _ = writeln!(out, "\n[solver]");
    let _ = writeln!(out, "m = {}", config.solver_cells);
    let _ = writeln!(out, "cfl_safety = {}", config.solver.cfl_safety);
    let _ = writeln!(out, "reaction_safety = {}", config.solver.reaction_safety);
    let _ = writeln!(out, "u_stop = {}", config.solver.stop_threshold);
    let _ = writeln!(out, "max_steps = {}", config.solver.max_steps);
    let _ = writeln!(out, "\n[sweep]");
    let _ = writeln!(
        out,
        "Ms = {}",
        config
            .sweep_amplitudes
            .iter()
            .map(|m| m.to_string())
            .collect::<Vec<_>>()
            .join(", ")
    );
    let _ = writeln!(out, "workers = {}", config.workers);
    let _ = writeln!(out, "\n[selfsim]");
    let _ = writeln!(out, "y_max = {}", config.frame_extent);
    let _ = writeln!(out, "m_y = {}", config.frame_cells);
    let _ = writeln!(
        out,
        "k_list = {}",
        config
            .moment_orders
            .iter()
            .map(|k| k.to_string())
            .collect::<Vec<_>>()
            .join(", ")
    );
    let _ = writeln!(out, "frame_count = {}", config.frame_count);
    let _ = writeln!(out, "\n[output]");
    let _ = writeln!(out, "dir = {}", config.output_dir);
    let _ = writeln!(
        out,
        "formats = {}",
        config
            .output_formats
            .iter()
            .map(|f| match f {
                OutputFormat::Csv => "csv",
                OutputFormat::Json => "json",
            })
            .collect::<Vec<_>>()
            .join(", ")
    );
    out
}

/// Read and parse a config file.
pub fn load_config(path: &std::path::Path) -> Result<Config> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("reading {}: {}", path.display(), e)))?;
    parse_config(&text)
}
