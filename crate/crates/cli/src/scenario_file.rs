//! TOML scenario files: parsing into validated scenarios and emitting them
//! back losslessly.

use std::fs;
use std::path::Path;

use etes_core::signals::{format_multiplier, parse_multiplier};
use etes_core::sim::{default_step, DEFAULT_GAMMA0, DEFAULT_HORIZON, DEFAULT_OMEGA_R, DEFAULT_RICCATI_CEILING, DEFAULT_STRIDE};
use etes_core::{ControllerGains, DitherDesign, QuadraticMap, Scenario, Scheme, TriggerConfig};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub const BUNDLED: &[(&str, &str)] = &[
    ("paper_sec6_newton", include_str!("../scenarios/paper_sec6_newton.toml")),
    ("paper_sec6_gradient", include_str!("../scenarios/paper_sec6_gradient.toml")),
    ("scalar_smoke", include_str!("../scenarios/scalar_smoke.toml")),
];

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("{origin}: {message}")]
    Syntax { origin: String, message: String },
    #[error("{origin}:{line}: `{field}`: {message}")]
    Field {
        origin: String,
        line: usize,
        field: String,
        message: String,
    },
    #[error("{origin}: `{field}`: {message}")]
    Unanchored {
        origin: String,
        field: String,
        message: String,
    },
    #[error("cannot read {origin}: {source}")]
    Io {
        origin: String,
        #[source]
        source: std::io::Error,
    },
    #[error("`{0}` is neither a file nor a bundled scenario ({1})")]
    Unknown(String, String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub map: MapSection,
    pub dither: DitherSection,
    pub controller: ControllerSection,
    pub trigger: TriggerSection,
    pub init: InitSection,
    #[serde(default)]
    pub sim: SimSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSection {
    #[serde(rename = "Qstar")]
    pub q_star: f64,
    #[serde(rename = "Hstar")]
    pub h_star: Vec<Vec<f64>>,
    pub thetastar: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DitherSection {
    pub amplitudes: Vec<f64>,
    /// Exact rationals as `"p/q"` or `"p"`.
    pub multipliers: Vec<String>,
    pub omega: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    pub scheme: String,
    /// Diagonal of `K`.
    #[serde(rename = "K")]
    pub k: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_r: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriggerSection {
    pub sigma: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Gamma0 {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSection {
    pub theta_hat0: Vec<f64>,
    /// `γ₀` (meaning `γ₀·I`) or a full matrix.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma0: Option<Gamma0>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(rename = "T_end", default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refine_events: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub riccati_ceiling: Option<f64>,
}

/// Section and key that hold a field named in a validation error.
fn field_location(field: &str) -> Option<(&'static str, &'static str)> {
    Some(match field {
        "Qstar" | "map" => ("map", "Qstar"),
        "Hstar" => ("map", "Hstar"),
        "thetastar" => ("map", "thetastar"),
        "amplitudes" => ("dither", "amplitudes"),
        "multipliers" => ("dither", "multipliers"),
        "omega" => ("dither", "omega"),
        "scheme" => ("controller", "scheme"),
        "K" | "H*K" | "-K" | "H*(-K)H*^-1" => ("controller", "K"),
        "omega_r" => ("controller", "omega_r"),
        "sigma" | "sigma/alpha" => ("trigger", "sigma"),
        "alpha" => ("trigger", "alpha"),
        "theta_hat0" | "init" => ("init", "theta_hat0"),
        "gamma0" => ("init", "gamma0"),
        "h" => ("sim", "h"),
        "T_end" => ("sim", "T_end"),
        "stride" => ("sim", "stride"),
        "riccati_ceiling" => ("sim", "riccati_ceiling"),
        _ => return None,
    })
}

/// One-based line of `key = …` inside `[section]`, or of the section header
/// when the key is absent.
fn locate(source: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = "";
    let mut header = None;
    for (i, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim();
            if current == section {
                header = Some(i + 1);
            }
            continue;
        }
        if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    header
}

struct Ctx<'a> {
    origin: &'a str,
    source: &'a str,
}

impl Ctx<'_> {
    fn err(&self, field: &str, message: impl Into<String>) -> ScenarioError {
        let message = message.into();
        match field_location(field).and_then(|(s, k)| locate(self.source, s, k).map(|l| (l, k))) {
            Some((line, key)) => ScenarioError::Field {
                origin: self.origin.to_string(),
                line,
                field: key.to_string(),
                message,
            },
            None => ScenarioError::Unanchored {
                origin: self.origin.to_string(),
                field: field.to_string(),
                message,
            },
        }
    }

    fn core(&self, fallback: &str, e: etes_core::Error) -> ScenarioError {
        use etes_core::Error as E;
        let field = match &e {
            E::Invalid { field, .. } => field.clone(),
            E::NotHurwitz { what, .. } => what.clone(),
            E::Dimension { what, .. } => what.to_string(),
            E::Empty(what) => what.to_string(),
            E::Indefinite { .. } | E::Singular(_) => "Hstar".to_string(),
            _ => fallback.to_string(),
        };
        let field = if field_location(&field).is_some() { field } else { fallback.to_string() };
        self.err(&field, e.to_string())
    }
}

fn matrix(rows: &[Vec<f64>], field: &str, n: usize, ctx: &Ctx<'_>) -> Result<DMatrix<f64>, ScenarioError> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(ctx.err(field, format!("expected a {n}x{n} matrix")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn expect_len(v: &[f64], field: &str, n: usize, ctx: &Ctx<'_>) -> Result<(), ScenarioError> {
    if v.len() == n {
        Ok(())
    } else {
        Err(ctx.err(field, format!("expected {n} entries, got {}", v.len())))
    }
}

impl ScenarioFile {
    pub fn from_toml(source: &str, origin: &str) -> Result<Self, ScenarioError> {
        toml::from_str(source).map_err(|e| ScenarioError::Syntax {
            origin: origin.to_string(),
            message: e.to_string(),
        })
    }

    /// Fills defaults and validates every module precondition.
    pub fn build(&self, source: &str, origin: &str, default_name: &str) -> Result<Scenario, ScenarioError> {
        let ctx = Ctx { origin, source };
        let n = self.map.thetastar.len();
        if n == 0 {
            return Err(ctx.err("thetastar", "must have at least one entry"));
        }
        let h_star = matrix(&self.map.h_star, "Hstar", n, &ctx)?;
        let map = QuadraticMap::new(self.map.q_star, h_star, DVector::from_vec(self.map.thetastar.clone()))
            .map_err(|e| ctx.core("Hstar", e))?;

        expect_len(&self.dither.amplitudes, "amplitudes", n, &ctx)?;
        if self.dither.multipliers.len() != n {
            return Err(ctx.err("multipliers", format!("expected {n} entries, got {}", self.dither.multipliers.len())));
        }
        let multipliers = self
            .dither
            .multipliers
            .iter()
            .map(|m| parse_multiplier(m))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| ctx.core("multipliers", e))?;
        let design = DitherDesign::new(self.dither.amplitudes.clone(), multipliers, self.dither.omega)
            .map_err(|e| ctx.core("amplitudes", e))?;

        let scheme: Scheme = self.controller.scheme.parse().map_err(|e| ctx.core("scheme", e))?;
        expect_len(&self.controller.k, "K", n, &ctx)?;
        let gains = ControllerGains::new(DVector::from_vec(self.controller.k.clone()), scheme)
            .map_err(|e| ctx.core("K", e))?;
        let trigger = TriggerConfig::new(self.trigger.sigma, self.trigger.alpha).map_err(|e| ctx.core("sigma", e))?;

        expect_len(&self.init.theta_hat0, "theta_hat0", n, &ctx)?;
        let gamma0 = match &self.init.gamma0 {
            None => DMatrix::identity(n, n) * DEFAULT_GAMMA0,
            Some(Gamma0::Scalar(g)) => DMatrix::identity(n, n) * *g,
            Some(Gamma0::Matrix(rows)) => matrix(rows, "gamma0", n, &ctx)?,
        };
        let h = self.sim.h.unwrap_or_else(|| default_step(&design));
        let scenario = Scenario {
            name: self.name.clone().unwrap_or_else(|| default_name.to_string()),
            map,
            design,
            gains,
            trigger,
            gamma0,
            theta_hat0: DVector::from_vec(self.init.theta_hat0.clone()),
            omega_r: self.controller.omega_r.unwrap_or(DEFAULT_OMEGA_R),
            h,
            t_end: self.sim.t_end.unwrap_or(DEFAULT_HORIZON),
            stride: self.sim.stride.unwrap_or(DEFAULT_STRIDE),
            refine_events: self.sim.refine_events.unwrap_or(false),
            riccati_ceiling: self.sim.riccati_ceiling.unwrap_or(DEFAULT_RICCATI_CEILING),
        };
        scenario.validate().map_err(|e| ctx.core("K", e))?;
        Ok(scenario)
    }

    /// Fully explicit file for a scenario, defaults included.
    pub fn from_scenario(s: &Scenario) -> Self {
        let n = s.dim();
        let rows = |m: &DMatrix<f64>| (0..n).map(|i| (0..n).map(|j| m[(i, j)]).collect()).collect();
        Self {
            name: Some(s.name.clone()),
            map: MapSection {
                q_star: s.map.q_star(),
                h_star: rows(s.map.h_star()),
                thetastar: s.map.theta_star().as_slice().to_vec(),
            },
            dither: DitherSection {
                amplitudes: s.design.amplitudes().to_vec(),
                multipliers: s.design.multipliers().iter().map(format_multiplier).collect(),
                omega: s.design.omega(),
            },
            controller: ControllerSection {
                scheme: s.scheme().as_str().to_string(),
                k: s.gains.k_diag().as_slice().to_vec(),
                omega_r: Some(s.omega_r),
            },
            trigger: TriggerSection {
                sigma: s.trigger.sigma(),
                alpha: s.trigger.alpha(),
            },
            init: InitSection {
                theta_hat0: s.theta_hat0.as_slice().to_vec(),
                gamma0: Some(Gamma0::Matrix(rows(&s.gamma0))),
            },
            sim: SimSection {
                h: Some(s.h),
                t_end: Some(s.t_end),
                stride: Some(s.stride),
                refine_events: Some(s.refine_events),
                riccati_ceiling: Some(s.riccati_ceiling),
            },
        }
    }
}

pub fn parse_scenario_str(source: &str, origin: &str, default_name: &str) -> Result<Scenario, ScenarioError> {
    ScenarioFile::from_toml(source, origin)?.build(source, origin, default_name)
}

pub fn emit_scenario(s: &Scenario) -> String {
    toml::to_string(&ScenarioFile::from_scenario(s)).expect("scenario files always serialize")
}

/// Reads a scenario from a file, or from the bundled set when no such file
/// exists.
pub fn parse_scenario(arg: &str) -> Result<Scenario, ScenarioError> {
    let path = Path::new(arg);
    if path.is_file() {
        let source = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            origin: arg.to_string(),
            source,
        })?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
        return parse_scenario_str(&source, arg, stem);
    }
    match BUNDLED.iter().find(|(name, _)| *name == arg) {
        Some((name, source)) => parse_scenario_str(source, &format!("<bundled {name}>"), name),
        None => Err(ScenarioError::Unknown(
            arg.to_string(),
            BUNDLED.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", "),
        )),
    }
}
