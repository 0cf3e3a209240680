//! Scenario files: TOML with every section optional except what the run
//! kind needs. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use oemsim_core::grid::Scheme;
use oemsim_core::mbloch_reduced::Direction;
use oemsim_core::optimize::OptimizeOptions;
use oemsim_core::protocol::{CurrentPulse, ProtocolSchedule};
use oemsim_core::{derive, DerivedParams, PhysicalParams};

use crate::error::{io_err, CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    Steady,
    Transient,
    Protocol,
    Optimize,
    Sweep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub run_kind: RunKind,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub params: ParamsSection,
    #[serde(default)]
    pub schedule: Option<ScheduleSection>,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub probe: ProbeSection,
    #[serde(default)]
    pub optimize: OptimizeSection,
    #[serde(default)]
    pub steady: Option<SteadySection>,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub output: OutputSection,
}

/// Overrides on top of the reference parameter set. `optical_depth`, when
/// given, sets the atom number for the remaining atomic parameters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    pub lambda_c: Option<f64>,
    pub cavity_length: Option<f64>,
    pub mirror_mass: Option<f64>,
    pub omega_m: Option<f64>,
    pub gamma_m: Option<f64>,
    pub kappa: Option<f64>,
    pub charge_distance: Option<f64>,
    pub drive_power: Option<f64>,
    pub capacitance: Option<f64>,
    pub voltage: Option<f64>,
    pub mode_volume: Option<f64>,
    pub gamma: Option<f64>,
    pub g: Option<f64>,
    pub g_p: Option<f64>,
    pub n_atoms: Option<f64>,
    pub medium_length: Option<f64>,
    pub drive_detuning: Option<f64>,
    pub probe_detuning: Option<f64>,
    pub control_detuning: Option<f64>,
    pub optical_depth: Option<f64>,
}

impl ParamsSection {
    pub fn resolve(&self) -> Result<PhysicalParams> {
        let mut p = PhysicalParams::reference();
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { p.$f = v; } )* };
        }
        set!(
            lambda_c, cavity_length, mirror_mass, omega_m, gamma_m, kappa, charge_distance, drive_power,
            capacitance, voltage, mode_volume, gamma, g, g_p, n_atoms, medium_length, drive_detuning,
            probe_detuning, control_detuning
        );
        if self.g.is_some() && self.g_p.is_none() {
            p.g_p = p.g;
        }
        if let Some(d) = self.optical_depth {
            if self.n_atoms.is_some() {
                return Err(CliError::Scenario("give either `params.n_atoms` or `params.optical_depth`, not both".into()));
            }
            if !(d.is_finite() && d > 0.0) {
                return Err(CliError::Scenario(format!("`params.optical_depth` must be > 0, got {d}")));
            }
            p.n_atoms = p.atoms_for_depth(d);
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeUnit {
    #[default]
    Seconds,
    /// Multiples of 1/γ.
    InverseGamma,
}

/// Storage current pulse plus timing. Exactly one of `charge` (total
/// transferred charge number) and `peak_shift` (linear-law G0·q/κ at the
/// full charge) sets the amplitude. The retrieval pulse defaults to the
/// mirrored opposite pulse. The hold is rounded to whole steps of the
/// protocol grid before mirroring so that the sampled waveform is exactly
/// time-symmetric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    #[serde(default)]
    pub time_unit: TimeUnit,
    pub charge: Option<f64>,
    pub peak_shift: Option<f64>,
    pub width: f64,
    pub center: f64,
    pub t_storage: f64,
    pub hold: f64,
    /// Explicit retrieval pulse, amplitude in charges per second and times
    /// in `time_unit`.
    pub retrieval_pulse: Option<CurrentPulse>,
}

impl ScheduleSection {
    pub fn resolve(&self, params: &PhysicalParams, dp: &DerivedParams, n_window: usize) -> Result<ProtocolSchedule> {
        let unit = match self.time_unit {
            TimeUnit::Seconds => 1.0,
            TimeUnit::InverseGamma => 1.0 / params.gamma,
        };
        let n_q = match (self.charge, self.peak_shift) {
            (Some(c), None) => c,
            (None, Some(x)) => x * params.kappa / dp.g0 * dp.k_spring / dp.eta_coul,
            _ => {
                return Err(CliError::Scenario(
                    "`schedule` needs exactly one of `charge` and `peak_shift`".into(),
                ))
            }
        };
        let width = self.width * unit;
        let pulse = CurrentPulse {
            amplitude: CurrentPulse::amplitude_for_charge(n_q, width),
            center: self.center * unit,
            width,
        };
        let t_storage = self.t_storage * unit;
        let mut hold = self.hold * unit;
        if n_window >= 2 && t_storage > 0.0 && hold.is_finite() {
            let dt = t_storage / (n_window - 1) as f64;
            hold = (hold / dt).round() * dt;
        }
        let mut s = ProtocolSchedule::mirrored(pulse, t_storage, hold);
        if let Some(r) = self.retrieval_pulse {
            s.retrieval_pulse = CurrentPulse {
                amplitude: r.amplitude,
                center: r.center * unit,
                width: r.width * unit,
            };
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "default_points")]
    pub n_xi: usize,
    /// Samples per storage (and retrieval) window.
    #[serde(default = "default_points")]
    pub n_tau: usize,
    #[serde(default)]
    pub scheme: Scheme,
}

fn default_points() -> usize {
    256
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            n_xi: default_points(),
            n_tau: default_points(),
            scheme: Scheme::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeShape {
    /// Time-reversal optimized for the storage control.
    #[default]
    Optimized,
    /// The unit-energy Gaussian seed.
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSection {
    #[serde(default)]
    pub shape: ProbeShape,
    /// Peak |α̃| of the full-model run.
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    #[serde(default = "default_true")]
    pub full_model: bool,
    #[serde(default = "default_direction")]
    pub retrieval: Direction,
}

fn default_amplitude() -> f64 {
    1e-3
}

fn default_true() -> bool {
    true
}

fn default_direction() -> Direction {
    Direction::Backward
}

impl Default for ProbeSection {
    fn default() -> Self {
        Self {
            shape: ProbeShape::default(),
            amplitude: default_amplitude(),
            full_model: true,
            retrieval: default_direction(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeSection {
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol")]
    pub tol_iter: f64,
    /// Optical depths for an efficiency-versus-depth table.
    #[serde(default)]
    pub depths: Option<Vec<f64>>,
}

fn default_max_iter() -> usize {
    20
}

fn default_tol() -> f64 {
    1e-4
}

impl Default for OptimizeSection {
    fn default() -> Self {
        Self {
            max_iter: default_max_iter(),
            tol_iter: default_tol(),
            depths: None,
        }
    }
}

impl OptimizeSection {
    pub fn options(&self) -> OptimizeOptions {
        OptimizeOptions {
            max_iter: self.max_iter,
            tol_iter: self.tol_iter,
        }
    }
}

/// Charge numbers at which the steady state is tabulated: either an
/// explicit list or `points` values evenly spaced on [0, n_q_max].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteadySection {
    pub n_q: Option<Vec<f64>>,
    pub n_q_max: Option<f64>,
    pub points: Option<usize>,
}

impl SteadySection {
    pub fn charges(&self) -> Result<Vec<f64>> {
        match (&self.n_q, self.n_q_max, self.points) {
            (Some(v), None, None) if !v.is_empty() => Ok(v.clone()),
            (None, Some(max), Some(n)) if n >= 2 => {
                Ok((0..n).map(|i| max * i as f64 / (n - 1) as f64).collect())
            }
            _ => Err(CliError::Scenario(
                "`steady` needs a non-empty `n_q` list or `n_q_max` with `points >= 2`".into(),
            )),
        }
    }
}

/// One scenario per value, with the dotted `axis` key set to that value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axis: String,
    pub values: Vec<toml::Value>,
    #[serde(default = "default_sweep_kind")]
    pub run_kind: RunKind,
}

fn default_sweep_kind() -> RunKind {
    RunKind::Protocol
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Also write the full storage field grids as long-format CSV.
    #[serde(default)]
    pub field_csv: bool,
}

/// A parsed scenario together with its source text.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub path: PathBuf,
    pub source: String,
    pub scenario: Scenario,
}

pub fn load(path: &Path) -> Result<LoadedScenario> {
    let source = std::fs::read_to_string(path).map_err(io_err(path))?;
    let scenario = parse(&source).map_err(|message| CliError::Parse {
        path: path.to_path_buf(),
        message,
    })?;
    Ok(LoadedScenario {
        path: path.to_path_buf(),
        source,
        scenario,
    })
}

/// Parses and checks the structural invariants. Errors carry line and
/// column when the TOML itself is at fault.
pub fn parse(source: &str) -> std::result::Result<Scenario, String> {
    if source.trim().is_empty() {
        return Err("empty scenario file".into());
    }
    let sc: Scenario = toml::from_str(source).map_err(|e| describe(&e, source))?;
    sc.check_structure().map_err(|e| e.to_string())?;
    Ok(sc)
}

fn describe(e: &toml::de::Error, source: &str) -> String {
    match e.span() {
        Some(span) => {
            let before = &source[..span.start.min(source.len())];
            let line = before.matches('\n').count() + 1;
            let col = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
            format!("line {line}, column {col}: {}", e.message())
        }
        None => e.message().to_string(),
    }
}

impl Scenario {
    pub fn check_structure(&self) -> Result<()> {
        let need_schedule = matches!(self.run_kind, RunKind::Transient | RunKind::Protocol | RunKind::Optimize);
        if need_schedule && self.schedule.is_none() {
            return Err(CliError::Scenario(format!("run_kind `{:?}` needs a [schedule] section", self.run_kind).to_lowercase()));
        }
        if self.run_kind == RunKind::Steady && self.steady.is_none() {
            return Err(CliError::Scenario("run_kind `steady` needs a [steady] section".into()));
        }
        match (self.run_kind, &self.sweep) {
            (RunKind::Sweep, None) => return Err(CliError::Scenario("run_kind `sweep` needs a [sweep] section".into())),
            (RunKind::Sweep, Some(s)) => {
                if s.run_kind != RunKind::Protocol {
                    return Err(CliError::Scenario("sweeps run the `protocol` pipeline only".into()));
                }
                if s.values.is_empty() {
                    return Err(CliError::Scenario("`sweep.values` is empty".into()));
                }
                if self.schedule.is_none() {
                    return Err(CliError::Scenario("a protocol sweep needs a [schedule] section".into()));
                }
            }
            (_, Some(_)) => return Err(CliError::Scenario("[sweep] is only allowed with run_kind = \"sweep\"".into())),
            _ => {}
        }
        Ok(())
    }

    pub fn physical(&self) -> Result<PhysicalParams> {
        self.params.resolve()
    }
}

/// Resolved physics for a scenario.
pub struct Setup {
    pub params: PhysicalParams,
    pub derived: DerivedParams,
}

pub fn setup(sc: &Scenario) -> Result<Setup> {
    let params = sc.physical()?;
    let derived = derive(&params).map_err(|source| CliError::Core {
        context: "params".into(),
        source,
    })?;
    Ok(Setup { params, derived })
}

/// Scenario variants for a sweep, in the order of `values`, each tagged with
/// a directory label `<leaf>=<value>`.
pub fn expand_sweep(source: &str, sc: &Scenario) -> Result<Vec<(String, Scenario)>> {
    let sweep = sc
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Scenario("not a sweep scenario".into()))?;
    let base: toml::Table = toml::from_str(source).map_err(|e| CliError::Scenario(e.to_string()))?;
    let path: Vec<&str> = sweep.axis.split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(CliError::Scenario(format!("bad sweep axis `{}`", sweep.axis)));
    }
    let leaf = *path.last().expect("non-empty path");
    let mut labels = std::collections::BTreeSet::new();
    let mut out = Vec::with_capacity(sweep.values.len());
    for v in &sweep.values {
        let mut t = base.clone();
        t.remove("sweep");
        t.insert("run_kind".into(), toml::Value::String("protocol".into()));
        t.remove("output_dir");
        let mut cur = &mut t;
        for key in &path[..path.len() - 1] {
            cur = cur
                .entry(key.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .ok_or_else(|| CliError::Scenario(format!("sweep axis `{}` crosses a non-table key", sweep.axis)))?;
        }
        cur.insert(leaf.to_string(), v.clone());
        let label = format!("{leaf}={}", value_label(v));
        if !labels.insert(label.clone()) {
            return Err(CliError::Scenario(format!("duplicate sweep value {label}")));
        }
        let text = toml::to_string(&t).map_err(|e| CliError::Scenario(e.to_string()))?;
        let variant = parse(&text).map_err(|m| CliError::Scenario(format!("sweep value {label}: {m}")))?;
        out.push((label, variant));
    }
    Ok(out)
}

fn value_label(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        toml::Value::Float(f) => format!("{f}"),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "t"
run_kind = "protocol"

[schedule]
time_unit = "inverse_gamma"
peak_shift = 10.0
width = 10.0
center = 40.0
t_storage = 70.0
hold = 10.0
"#;

    #[test]
    fn minimal_protocol() {
        let sc = parse(MINIMAL).unwrap();
        assert_eq!(sc.grid.n_xi, 256);
        assert!(sc.probe.full_model);
        let s = setup(&sc).unwrap();
        let sched = sc.schedule.as_ref().unwrap().resolve(&s.params, &s.derived, 256).unwrap();
        let steps = sched.hold / (sched.t_storage / 255.0);
        assert!((steps - steps.round()).abs() < 1e-9);
        assert!((sched.storage_pulse.width * s.params.gamma - 10.0).abs() < 1e-12);
        assert_eq!(sched.retrieval_pulse.amplitude, -sched.storage_pulse.amplitude);
    }

    #[test]
    fn empty_and_unknown_keys() {
        assert!(parse("").unwrap_err().contains("empty"));
        let bad = format!("{MINIMAL}\n[grid]\nn_xii = 3\n");
        let msg = parse(&bad).unwrap_err();
        let line = bad.lines().position(|l| l.starts_with("n_xii")).unwrap() + 1;
        assert!(msg.contains(&format!("line {line},")), "{msg}");
        assert!(msg.contains("n_xii"));
    }

    #[test]
    fn structural_invariants() {
        assert!(parse("name = \"a\"\nrun_kind = \"protocol\"\n").is_err());
        assert!(parse("name = \"a\"\nrun_kind = \"sweep\"\n").is_err());
        let with_sweep = format!("{MINIMAL}\n[sweep]\naxis = \"params.optical_depth\"\nvalues = [1.0]\n");
        assert!(parse(&with_sweep).is_err());
    }

    #[test]
    fn sweep_expansion() {
        let src = MINIMAL.replace("\"protocol\"", "\"sweep\"")
            + "\n[sweep]\naxis = \"params.optical_depth\"\nvalues = [1.0, 5.0]\n";
        let sc = parse(&src).unwrap();
        let v = expand_sweep(&src, &sc).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v[1].0, "optical_depth=5");
        assert_eq!(v[1].1.params.optical_depth, Some(5.0));
        assert_eq!(v[0].1.run_kind, RunKind::Protocol);
    }

    #[test]
    fn depth_overrides_atoms() {
        let p = ParamsSection {
            optical_depth: Some(10.0),
            ..Default::default()
        }
        .resolve()
        .unwrap();
        assert!((derive(&p).unwrap().optical_depth - 10.0).abs() < 1e-12);
        let both = ParamsSection {
            optical_depth: Some(10.0),
            n_atoms: Some(1.0),
            ..Default::default()
        };
        assert!(both.resolve().is_err());
    }
}
