//! Experiment files: TOML schema, validation and the normalized echo.

use std::fmt::Write as _;

use coalfrag::simulator::coupling_constants;
use coalfrag::{Atom, CoagKernel, Config, FragKernel, MassSeq, Measure};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Simulate,
    Couple,
    VerifyInequalities,
    OracleCompare,
    BoundsReport,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::Couple => "couple",
            Self::VerifyInequalities => "verify-inequalities",
            Self::OracleCompare => "oracle-compare",
            Self::BoundsReport => "bounds-report",
        }
    }

    fn needs_sim(self) -> bool {
        self != Self::VerifyInequalities
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize, Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    Csv,
    JsonLines,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::JsonLines => "jsonl",
        }
    }
}

// ---- raw file layout ----

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSpec {
    pub mode: Option<Mode>,
    pub seed: Option<u64>,
    pub sim: Option<RawSim>,
    #[serde(default)]
    pub coupling: RawCoupling,
    #[serde(default)]
    pub verify: RawVerify,
    #[serde(default)]
    pub oracle: RawOracle,
    #[serde(default)]
    pub bounds: RawBounds,
    #[serde(default)]
    pub output: RawOutput,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSim {
    pub initial: Option<Vec<f64>>,
    pub uniform: Option<RawUniform>,
    pub horizon: Option<f64>,
    #[serde(default = "one")]
    pub lambda: f64,
    pub stop_norm: Option<f64>,
    #[serde(default = "one_usize")]
    pub replicas: usize,
    pub coag: Option<RawKernel>,
    pub frag: Option<RawKernel>,
    pub beta: Option<RawBeta>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawUniform {
    pub count: usize,
    pub mass: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawKernel {
    pub kind: String,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub lambda: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawBeta {
    pub preset: Option<String>,
    #[serde(default)]
    pub atoms: Vec<RawAtom>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawAtom {
    pub ratios: Vec<f64>,
    pub weight: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawCoupling {
    pub p: Option<usize>,
    pub q: Option<usize>,
    pub perturb_index: Option<usize>,
    pub perturb_by: Option<f64>,
    pub second: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawVerify {
    pub cases: Option<usize>,
    pub permutations: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawOracle {
    pub depth: Option<usize>,
    pub tolerance: Option<f64>,
    pub max_states: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawBounds {
    pub points: Option<usize>,
    pub levels: Option<Vec<usize>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawOutput {
    pub dir: Option<String>,
    pub format: Option<Format>,
    pub events: Option<bool>,
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

// ---- validated spec ----

#[derive(Clone, Debug)]
pub struct CouplingSpec {
    pub second: MassSeq,
    pub p: Option<usize>,
    pub q: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct ExperimentSpec {
    pub mode: Mode,
    pub seed: u64,
    pub sim: Option<Config>,
    pub coupling: Option<CouplingSpec>,
    pub cases: usize,
    pub permutations: usize,
    pub depth: usize,
    pub tolerance: f64,
    pub max_states: usize,
    pub bound_points: usize,
    pub levels: Vec<usize>,
    pub out_dir: String,
    pub format: Format,
    pub events: bool,
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub seed: Option<u64>,
    pub replicas: Option<usize>,
    pub out: Option<String>,
    pub format: Option<Format>,
}

/// Collects `path: message` entries instead of stopping at the first.
#[derive(Default)]
struct Errors(Vec<String>);

impl Errors {
    fn push(&mut self, path: &str, msg: impl std::fmt::Display) {
        self.0.push(format!("{path}: {msg}"));
    }

    fn take<T, E: std::fmt::Display>(&mut self, path: &str, r: Result<T, E>) -> Option<T> {
        r.map_err(|e| self.push(path, e)).ok()
    }
}

pub fn parse(text: &str) -> Result<RawSpec, Vec<String>> {
    toml::from_str(text).map_err(|e| vec![format!("parse: {}", e.to_string().trim_end())])
}

/// Validates a raw spec. All problems are reported together.
pub fn validate(raw: RawSpec, over: &Overrides) -> Result<ExperimentSpec, Vec<String>> {
    let mut err = Errors::default();
    let mode = match (raw.mode, over.mode) {
        (Some(a), Some(b)) if a != b => {
            err.push("mode", format!("file says '{}' but the verb asks for '{}'", a.name(), b.name()));
            b
        }
        (_, Some(m)) | (Some(m), None) => m,
        (None, None) => {
            err.push("mode", "missing");
            Mode::Simulate
        }
    };
    let seed = over.seed.or(raw.seed);
    if seed.is_none() {
        err.push("seed", "missing; a seed must be given in the file or with --seed");
    }
    let seed = seed.unwrap_or(0);

    let sim = match (&raw.sim, mode.needs_sim()) {
        (Some(s), true) => sim_config(s, seed, over.replicas, &mut err),
        (None, true) => {
            err.push("sim", format!("required for mode '{}'", mode.name()));
            None
        }
        (_, false) => None,
    };

    let coupling = match (&sim, mode) {
        (Some(cfg), Mode::Couple) => coupling_spec(&raw.coupling, cfg, &mut err),
        _ => None,
    };

    let tolerance = raw.oracle.tolerance.unwrap_or(0.02);
    if !(tolerance.is_finite() && tolerance >= 0.0) {
        err.push("oracle.tolerance", format!("must be >= 0, got {tolerance}"));
    }
    let depth = raw.oracle.depth.unwrap_or(8);
    if mode == Mode::OracleCompare && depth == 0 {
        err.push("oracle.depth", "must be positive");
    }
    let bound_points = raw.bounds.points.unwrap_or(11);
    if bound_points < 2 {
        err.push("bounds.points", "need at least 2 time points");
    }
    let levels = raw.bounds.levels.clone().unwrap_or_default();
    if levels.contains(&0) {
        err.push("bounds.levels", "levels start at 1");
    }

    if !err.0.is_empty() {
        return Err(err.0);
    }
    Ok(ExperimentSpec {
        mode,
        seed,
        sim,
        coupling,
        cases: raw.verify.cases.unwrap_or(10_000),
        permutations: raw.verify.permutations.unwrap_or(4),
        depth,
        tolerance,
        max_states: raw.oracle.max_states.unwrap_or(coalfrag::oracle::MAX_STATES),
        bound_points,
        levels,
        out_dir: over.out.clone().or(raw.output.dir).unwrap_or_else(|| "out".into()),
        format: over.format.or(raw.output.format).unwrap_or_default(),
        events: raw.output.events.unwrap_or(true),
    })
}

fn sim_config(s: &RawSim, seed: u64, replicas: Option<usize>, err: &mut Errors) -> Option<Config> {
    let initial = match (&s.initial, &s.uniform) {
        (Some(_), Some(_)) => {
            err.push("sim", "give either 'initial' or 'uniform', not both");
            None
        }
        (Some(v), None) => err.take("sim.initial", MassSeq::reorder(v)),
        (None, Some(u)) => err.take("sim.uniform", MassSeq::uniform(u.count, u.mass)),
        (None, None) => {
            err.push("sim.initial", "missing (or give sim.uniform)");
            None
        }
    };
    if let Some(m) = &initial {
        if m.is_empty() {
            err.push("sim.initial", "needs at least one positive mass");
        }
    }
    let horizon = s.horizon.or_else(|| {
        err.push("sim.horizon", "missing");
        None
    });
    if !(s.lambda > 0.0 && s.lambda <= 1.0) {
        err.push("sim.lambda", format!("out of range: must lie in (0, 1], got {}", s.lambda));
    }
    let coag = match &s.coag {
        Some(k) => coag_kernel(k, err),
        None => {
            err.push("sim.coag", "missing");
            None
        }
    };
    let frag = match &s.frag {
        Some(k) => frag_kernel(k, err),
        None => {
            err.push("sim.frag", "missing");
            None
        }
    };
    let beta = match &s.beta {
        Some(b) => measure(b, s.lambda, err),
        None => Some(Measure::empty()),
    };
    if let (Some(f), Some(b)) = (&frag, &beta) {
        if !f.is_zero() && b.is_empty() {
            err.push("sim.beta", "fragmentation kernel is non-zero but the dislocation measure has no atoms");
        }
    }
    let replicas = replicas.unwrap_or(s.replicas);
    let cfg = Config::new(initial?, coag?, frag?, beta?, horizon?, seed)
        .with_lambda(s.lambda)
        .with_replicas(replicas);
    let cfg = match s.stop_norm {
        Some(x) => cfg.with_stop_norm(x),
        None => cfg,
    };
    if let Err(e) = cfg.validate() {
        err.push("sim", e);
        return None;
    }
    // the simulator needs box majorants of both kernels
    let a = cfg.initial.total_mass();
    err.take("sim.coag", cfg.coag.sup_box(a))?;
    err.take("sim.frag", cfg.frag.sup_box(a))?;
    Some(cfg)
}

fn need(k: &RawKernel, name: &str, path: &str, err: &mut Errors) -> f64 {
    let value = match name {
        "alpha" => k.alpha,
        "beta" => k.beta,
        "gamma" => k.gamma,
        _ => k.lambda,
    };
    value.unwrap_or_else(|| {
        err.push(&format!("{path}.{name}"), format!("required by kernel '{}'", k.kind));
        f64::NAN
    })
}

fn coag_kernel(k: &RawKernel, err: &mut Errors) -> Option<CoagKernel> {
    let path = "sim.coag";
    let mut p = |n: &str| need(k, n, path, err);
    let built = match k.kind.as_str() {
        "zero" => Ok(CoagKernel::zero()),
        "constant" => Ok(CoagKernel::constant()),
        "sum_power" => {
            let (a, b) = (p("alpha"), p("beta"));
            CoagKernel::sum_power(a, b)
        }
        "cross_power" => {
            let (a, b) = (p("alpha"), p("beta"));
            CoagKernel::cross_power(a, b)
        }
        "product_over_sum" => {
            let (a, b) = (p("alpha"), p("beta"));
            CoagKernel::product_over_sum(a, b)
        }
        "sum_power_abs_diff" => {
            let (a, b, g) = (p("alpha"), p("beta"), p("gamma"));
            CoagKernel::sum_power_abs_diff(a, b, g)
        }
        "exp_cutoff" => {
            let (l, a, b) = (p("lambda"), p("alpha"), p("beta"));
            CoagKernel::exp_cutoff(l, a, b)
        }
        other => {
            err.push(
                &format!("{path}.kind"),
                format!(
                    "unknown coagulation kernel '{other}' (known: zero, constant, sum_power, cross_power, \
                     product_over_sum, sum_power_abs_diff, exp_cutoff)"
                ),
            );
            return None;
        }
    };
    err.take(path, built)
}

fn frag_kernel(k: &RawKernel, err: &mut Errors) -> Option<FragKernel> {
    let path = "sim.frag";
    let built = match k.kind.as_str() {
        "zero" => Ok(FragKernel::zero()),
        "constant" => Ok(FragKernel::constant()),
        "power" => {
            let a = need(k, "alpha", path, err);
            FragKernel::power(a)
        }
        other => {
            err.push(
                &format!("{path}.kind"),
                format!("unknown fragmentation kernel '{other}' (known: zero, constant, power)"),
            );
            return None;
        }
    };
    err.take(path, built)
}

fn measure(b: &RawBeta, lambda: f64, err: &mut Errors) -> Option<Measure> {
    let mut atoms = Vec::new();
    if let Some(name) = &b.preset {
        match Measure::preset(name) {
            Some(m) => atoms.extend(m.atoms().iter().cloned()),
            None => {
                err.push("sim.beta.preset", format!("unknown preset '{name}' (known: binary_half, none)"));
                return None;
            }
        }
    }
    let mut ok = true;
    for (k, a) in b.atoms.iter().enumerate() {
        let path = format!("sim.beta.atoms[{k}]");
        let sum: f64 = a.ratios.iter().sum();
        if sum > 1.0 + coalfrag::dislocation::MASS_GAIN_SLACK {
            err.push(
                &path,
                format!("ratios sum to {sum} > 1, violating the no-mass-gain hypothesis (sum theta_k <= 1)"),
            );
            ok = false;
            continue;
        }
        match Atom::new(a.ratios.clone(), a.weight) {
            Ok(atom) => atoms.push(atom),
            Err(e) => {
                err.push(&path, e);
                ok = false;
            }
        }
    }
    if !ok {
        return None;
    }
    let m = Measure::new(atoms);
    if lambda > 0.0 && lambda <= 1.0 {
        for c in err.take("sim.beta", m.check_bounds(lambda))? {
            if !c.pass {
                err.push("sim.beta", format!("{} fails: {} > {}", c.name, c.lhs, c.rhs));
            }
        }
    }
    Some(m)
}

fn coupling_spec(c: &RawCoupling, cfg: &Config, err: &mut Errors) -> Option<CouplingSpec> {
    let second = match (&c.second, c.perturb_index, c.perturb_by) {
        (Some(v), None, None) => err.take("coupling.second", MassSeq::reorder(v))?,
        (None, Some(i), Some(eta)) => {
            let mut raw = cfg.initial.masses().to_vec();
            if i == 0 || i > raw.len() {
                err.push("coupling.perturb_index", format!("must be in 1..={}", raw.len()));
                return None;
            }
            raw[i - 1] += eta;
            err.take("coupling.perturb_by", MassSeq::reorder(&raw))?
        }
        (None, None, None) => cfg.initial.clone(),
        _ => {
            err.push("coupling", "give either 'second' or both 'perturb_index' and 'perturb_by'");
            return None;
        }
    };
    match (c.p, c.q) {
        (Some(p), Some(q)) if p == 0 || p > q => {
            err.push("coupling", format!("levels need 1 <= p <= q, got p = {p}, q = {q}"));
            return None;
        }
        (Some(_), None) | (None, Some(_)) => {
            err.push("coupling", "give both levels p and q or neither");
            return None;
        }
        _ => {}
    }
    if let Some(x) = cfg.stop_norm {
        let norm = err.take("coupling.second", second.norm(cfg.lambda))?;
        if x <= norm {
            err.push("sim.stop_norm", format!("{x} must exceed the second state's lambda-norm {norm}"));
            return None;
        }
        err.take(
            "sim.coag",
            coupling_constants(&cfg.coag, &cfg.frag, &cfg.beta, cfg.lambda, &cfg.initial, &second, x),
        )?;
    }
    Some(CouplingSpec { second, p: c.p, q: c.q })
}

// ---- normalized echo ----

fn list(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
    format!("[{}]", items.join(", "))
}

impl ExperimentSpec {
    /// Canonical TOML-like text of the spec and its derived constants.
    pub fn normalized(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "mode = \"{}\"", self.mode.name());
        let _ = writeln!(s, "seed = {}", self.seed);
        if let Some(cfg) = &self.sim {
            let _ = writeln!(s, "\n[sim]");
            let _ = writeln!(s, "initial = {}", list(cfg.initial.masses()));
            let _ = writeln!(s, "horizon = {:?}", cfg.horizon);
            let _ = writeln!(s, "lambda = {:?}", cfg.lambda);
            if let Some(x) = cfg.stop_norm {
                let _ = writeln!(s, "stop_norm = {x:?}");
            }
            let _ = writeln!(s, "replicas = {}", cfg.replicas);
            let kernel = |s: &mut String, table: &str, name: &str, params: Vec<(&str, f64)>| {
                let _ = writeln!(s, "\n[sim.{table}]\nkind = \"{name}\"");
                for (k, v) in params {
                    let _ = writeln!(s, "{k} = {v:?}");
                }
            };
            kernel(&mut s, "coag", cfg.coag.name(), cfg.coag.params());
            kernel(&mut s, "frag", cfg.frag.name(), cfg.frag.params());
            for a in cfg.beta.atoms() {
                let _ = writeln!(s, "\n[[sim.beta.atoms]]\nratios = {}\nweight = {:?}", list(a.ratios()), a.weight());
            }
            let _ = writeln!(s, "\n[derived]");
            let a = cfg.initial.total_mass();
            let a = match &self.coupling {
                Some(c) => a.max(c.second.total_mass()),
                None => a,
            };
            let _ = writeln!(s, "box = {a:?}");
            let _ = writeln!(s, "beta_total = {:?}", cfg.beta.total_mass());
            let _ = writeln!(s, "max_fragments = {}", cfg.beta.max_fragments());
            if let Ok(c) = cfg.beta.c_beta_lambda(cfg.lambda) {
                let _ = writeln!(s, "c_beta_lambda = {c:?}");
            }
            if let Ok(c) = cfg.beta.c_beta_lambda(1.0) {
                let _ = writeln!(s, "c_beta_1 = {c:?}");
            }
            if let Ok(k) = cfg.coag.sup_box(a) {
                let _ = writeln!(s, "k_bar = {k:?}");
            }
            if let Ok(f) = cfg.frag.sup_box(a) {
                let _ = writeln!(s, "f_bar = {f:?}");
            }
            let stable = cfg.beta.stable_level();
            let mut tails = Vec::new();
            for n in 1..=stable {
                if let Ok((ta, tb)) = cfg.beta.truncation_tails(n, cfg.lambda) {
                    tails.push(format!("[{n}, {ta:?}, {tb:?}]"));
                }
            }
            let _ = writeln!(s, "stable_level = {stable}");
            let _ = writeln!(s, "truncation_tails = [{}]", tails.join(", "));
        }
        match self.mode {
            Mode::Couple => {
                if let Some(c) = &self.coupling {
                    let _ = writeln!(s, "\n[coupling]\nsecond = {}", list(c.second.masses()));
                    if let (Some(p), Some(q)) = (c.p, c.q) {
                        let _ = writeln!(s, "p = {p}\nq = {q}");
                    }
                }
            }
            Mode::VerifyInequalities => {
                let _ = writeln!(s, "\n[verify]\ncases = {}\npermutations = {}", self.cases, self.permutations);
            }
            Mode::OracleCompare => {
                let _ = writeln!(
                    s,
                    "\n[oracle]\ndepth = {}\ntolerance = {:?}\nmax_states = {}",
                    self.depth, self.tolerance, self.max_states
                );
            }
            Mode::BoundsReport => {
                let levels: Vec<String> = self.levels.iter().map(ToString::to_string).collect();
                let _ = writeln!(s, "\n[bounds]\npoints = {}\nlevels = [{}]", self.bound_points, levels.join(", "));
            }
            Mode::Simulate => {}
        }
        let _ = writeln!(
            s,
            "\n[output]\nformat = \"{}\"\nevents = {}",
            match self.format {
                Format::Csv => "csv",
                Format::JsonLines => "json-lines",
            },
            self.events
        );
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
mode = "simulate"
seed = 1
[sim]
uniform = { count = 4, mass = 1.0 }
horizon = 1.0
coag = { kind = "constant" }
frag = { kind = "constant" }
beta = { preset = "binary_half" }
"#;

    fn load(text: &str) -> Result<ExperimentSpec, Vec<String>> {
        validate(parse(text)?, &Overrides::default())
    }

    #[test]
    fn binary_half_echoes_unit_constant() {
        let spec = load(BASE).unwrap();
        assert!(spec.normalized().contains("c_beta_1 = 1.0"), "{}", spec.normalized());
    }

    #[test]
    fn errors_are_aggregated() {
        let text = BASE.replace("seed = 1", "").replace("horizon = 1.0", "horizon = 1.0\nlambda = 1.5");
        let errs = load(&text).unwrap_err();
        assert!(errs.iter().any(|e| e.starts_with("seed")));
        assert!(errs.iter().any(|e| e.starts_with("sim.lambda") && e.contains("range")));
    }

    #[test]
    fn mass_gain_and_degenerate_atoms() {
        let text = BASE.replace(
            "beta = { preset = \"binary_half\" }",
            "[[sim.beta.atoms]]\nratios = [0.7, 0.6]\nweight = 1.0\n[[sim.beta.atoms]]\nratios = [1.0]\nweight = 1.0",
        );
        let errs = load(&text).unwrap_err();
        assert!(errs.iter().any(|e| e.starts_with("sim.beta.atoms[0]") && e.contains("no-mass-gain")));
        assert!(errs.iter().any(|e| e.starts_with("sim.beta.atoms[1]") && e.contains("degenerate dislocation excluded")));
    }

    #[test]
    fn unknown_kernel_names_the_path() {
        let errs = load(&BASE.replace("coag = { kind = \"constant\" }", "coag = { kind = \"magic\" }")).unwrap_err();
        assert!(errs[0].starts_with("sim.coag.kind"), "{errs:?}");
    }

    #[test]
    fn overrides_win() {
        let over = Overrides { seed: Some(9), replicas: Some(3), ..Default::default() };
        let spec = validate(parse(BASE).unwrap(), &over).unwrap();
        assert_eq!(spec.seed, 9);
        assert_eq!(spec.sim.unwrap().replicas, 3);
    }

    #[test]
    fn verb_and_mode_must_agree() {
        let over = Overrides { mode: Some(Mode::Couple), ..Default::default() };
        let errs = validate(parse(BASE).unwrap(), &over).unwrap_err();
        assert!(errs[0].starts_with("mode"));
    }
}
