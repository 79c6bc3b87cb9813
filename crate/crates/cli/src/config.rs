//! Flat `key = value` recipe files.

use std::collections::BTreeMap;
use std::path::Path;

use fkpp_core::front::Side;
use fkpp_core::kernel::FracParams;
use fkpp_core::solver::{regular_times, InitialDatum, SolverConfig, DEFAULT_NOISE_FLOOR};

use crate::CliError;

const SOLVER_KEYS: &[&str] = &[
    "alpha",
    "half_width",
    "n",
    "dt",
    "t_end",
    "snapshot_times",
    "snapshot_every",
    "dealias",
    "edge_guard",
    "reaction_on",
    "noise_floor",
    "snapshot_stride",
    "kind",
];
const FRONT_KEYS: &[&str] = &["level", "side", "linear_window", "exp_window"];
const SWEEP_KEYS: &[&str] = &["alphas"];

fn datum_keys(kind: &str) -> Option<&'static [&'static str]> {
    Some(match kind {
        "indicator" => &["eps", "r0"],
        "smooth_bump" => &["eps", "r0", "ramp"],
        "algebraic_profile" => &["eps_alpha", "r0"],
        "plateau_stretched_exp" => &["width", "datum_alpha"],
        "stretched_exp_gamma" => &["gamma", "datum_alpha"],
        _ => return None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecipeKind {
    Solve,
    Front,
    Sweep,
}

/// Parsed key/value pairs in key order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FlatConfig {
    pub entries: BTreeMap<String, String>,
}

impl FlatConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(CliError::Usage(format!("line {}: expected `key = value`", lineno + 1)));
            };
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || v.is_empty() {
                return Err(CliError::Usage(format!("line {}: empty key or value", lineno + 1)));
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(CliError::Usage(format!("line {}: duplicate key `{k}`", lineno + 1)));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    fn required(&self, key: &str) -> Result<&str, CliError> {
        self.raw(key)
            .ok_or_else(|| CliError::Usage(format!("missing key `{key}`")))
    }

    fn number<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| CliError::Usage(format!("key `{key}`: cannot parse `{v}`")))
            })
            .transpose()
    }

    fn required_number<T: std::str::FromStr>(&self, key: &str) -> Result<T, CliError> {
        self.required(key)?;
        Ok(self.number(key)?.expect("present"))
    }

    fn flag(&self, key: &str, default: bool) -> Result<bool, CliError> {
        match self.raw(key) {
            None => Ok(default),
            Some("true") => Ok(true),
            Some("false") => Ok(false),
            Some(v) => Err(CliError::Usage(format!("key `{key}`: expected true or false, got `{v}`"))),
        }
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>, CliError> {
        self.raw(key).map(|v| parse_list(key, v)).transpose()
    }

    fn window(&self, key: &str) -> Result<(f64, f64), CliError> {
        let v = parse_list(key, self.required(key)?)?;
        match v[..] {
            [a, b] => Ok((a, b)),
            _ => Err(CliError::Usage(format!("key `{key}`: expected two numbers `start, end`"))),
        }
    }

    /// Rejects keys that the recipe does not use, including datum parameters that
    /// belong to another datum kind.
    pub fn check_keys(&self, recipe: RecipeKind) -> Result<(), CliError> {
        let kind = self.required("kind")?;
        let datum = datum_keys(kind).ok_or_else(|| CliError::Usage(format!("unknown datum kind `{kind}`")))?;
        let extra: Vec<&str> = match recipe {
            RecipeKind::Solve => Vec::new(),
            RecipeKind::Front => FRONT_KEYS.to_vec(),
            RecipeKind::Sweep => FRONT_KEYS.iter().chain(SWEEP_KEYS).copied().collect(),
        };
        for k in self.entries.keys() {
            let k = k.as_str();
            if !(SOLVER_KEYS.contains(&k) || datum.contains(&k) || extra.contains(&k)) {
                return Err(CliError::Usage(format!("unknown key `{k}`")));
            }
        }
        Ok(())
    }
}

pub fn parse_list(key: &str, v: &str) -> Result<Vec<f64>, CliError> {
    let items: Result<Vec<f64>, _> = v.split(',').map(|s| s.trim().parse::<f64>()).collect();
    match items {
        Ok(xs) if !xs.is_empty() => Ok(xs),
        _ => Err(CliError::Usage(format!("`{key}`: expected a comma-separated list of numbers, got `{v}`"))),
    }
}

/// Everything a solve/front/sweep command needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Recipe {
    pub config: SolverConfig,
    pub datum: InitialDatum,
    pub level: Option<f64>,
    pub side: Side,
    pub linear_window: Option<(f64, f64)>,
    pub exp_window: Option<(f64, f64)>,
    pub alphas: Vec<f64>,
    /// Write every `snapshot_stride`-th grid point to the snapshot CSV.
    pub snapshot_stride: usize,
}

impl Recipe {
    pub fn from_flat(flat: &FlatConfig, kind: RecipeKind) -> Result<Self, CliError> {
        flat.check_keys(kind)?;
        let alpha: f64 = flat.required_number("alpha")?;
        let params = FracParams::one_d(alpha)?;
        let t_end: f64 = flat.required_number("t_end")?;
        let snapshot_times = match (flat.list("snapshot_times")?, flat.number::<f64>("snapshot_every")?) {
            (Some(_), Some(_)) => {
                return Err(CliError::Usage("give either `snapshot_times` or `snapshot_every`, not both".into()))
            }
            (Some(ts), None) => ts,
            (None, Some(every)) => regular_times(t_end, every)?,
            (None, None) if t_end > 0.0 => vec![0.0, t_end],
            (None, None) => vec![0.0],
        };
        let config = SolverConfig {
            params,
            half_width: flat.required_number("half_width")?,
            n: flat.required_number("n")?,
            dt: flat.required_number("dt")?,
            t_end,
            snapshot_times,
            dealias: flat.flag("dealias", true)?,
            edge_guard: flat.number("edge_guard")?.unwrap_or(1e-2),
            reaction_on: flat.flag("reaction_on", true)?,
            noise_floor: flat.number("noise_floor")?.unwrap_or(DEFAULT_NOISE_FLOOR),
        };
        config.validate()?;

        let datum_alpha = flat.number("datum_alpha")?.unwrap_or(alpha);
        let datum = match flat.required("kind")? {
            "indicator" => InitialDatum::Indicator {
                eps: flat.required_number("eps")?,
                r0: flat.required_number("r0")?,
            },
            "smooth_bump" => InitialDatum::SmoothBump {
                eps: flat.required_number("eps")?,
                r0: flat.required_number("r0")?,
                ramp: flat.required_number("ramp")?,
            },
            "algebraic_profile" => InitialDatum::AlgebraicProfile {
                eps_alpha: flat.required_number("eps_alpha")?,
                r0: flat.required_number("r0")?,
            },
            "plateau_stretched_exp" => InitialDatum::PlateauStretchedExp {
                width: flat.required_number("width")?,
                alpha: datum_alpha,
            },
            "stretched_exp_gamma" => InitialDatum::StretchedExpGamma {
                gamma: flat.required_number("gamma")?,
                alpha: datum_alpha,
            },
            other => return Err(CliError::Usage(format!("unknown datum kind `{other}`"))),
        };

        let mut recipe = Recipe {
            config,
            datum,
            level: None,
            side: Side::Right,
            linear_window: None,
            exp_window: None,
            alphas: Vec::new(),
            snapshot_stride: flat.number("snapshot_stride")?.unwrap_or(1),
        };
        if recipe.snapshot_stride == 0 {
            return Err(CliError::Usage("`snapshot_stride` must be at least 1".into()));
        }
        if kind != RecipeKind::Solve {
            recipe.level = Some(flat.required_number("level")?);
            recipe.side = match flat.raw("side").unwrap_or("right") {
                "right" => Side::Right,
                "left" => Side::Left,
                v => return Err(CliError::Usage(format!("key `side`: expected left or right, got `{v}`"))),
            };
            recipe.linear_window = Some(flat.window("linear_window")?);
            recipe.exp_window = Some(flat.window("exp_window")?);
        }
        if kind == RecipeKind::Sweep {
            recipe.alphas = parse_list("alphas", flat.required("alphas")?)?;
        }
        Ok(recipe)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FRONT: &str = "\
# classical front
alpha = 1
half_width = 200
n = 16384
dt = 0.01
t_end = 40
snapshot_every = 0.5
kind = indicator
eps = 0.5
r0 = 5   # half-width of the initial patch
level = 0.5
linear_window = 25, 40
exp_window = 25, 40
";

    #[test]
    fn parses_front_recipe() {
        let flat = FlatConfig::parse(FRONT).unwrap();
        let r = Recipe::from_flat(&flat, RecipeKind::Front).unwrap();
        assert_eq!(r.config.n, 16384);
        assert_eq!(r.config.snapshot_times.len(), 81);
        assert_eq!(r.datum, InitialDatum::Indicator { eps: 0.5, r0: 5.0 });
        assert_eq!(r.linear_window, Some((25.0, 40.0)));
        assert_eq!(r.side, Side::Right);
        assert!(r.config.dealias && r.config.reaction_on);
    }

    #[test]
    fn rejects_unknown_and_foreign_keys() {
        let flat = FlatConfig::parse(&format!("{FRONT}colour = red\n")).unwrap();
        assert!(matches!(Recipe::from_flat(&flat, RecipeKind::Front), Err(CliError::Usage(_))));
        let flat = FlatConfig::parse(&format!("{FRONT}ramp = 1\n")).unwrap();
        assert!(matches!(Recipe::from_flat(&flat, RecipeKind::Front), Err(CliError::Usage(_))));
        let flat = FlatConfig::parse(FRONT).unwrap();
        assert!(matches!(Recipe::from_flat(&flat, RecipeKind::Solve), Err(CliError::Usage(_))));
    }

    #[test]
    fn syntax_errors() {
        assert!(FlatConfig::parse("alpha 0.5").is_err());
        assert!(FlatConfig::parse("alpha = 0.5\nalpha = 0.6").is_err());
        assert!(FlatConfig::parse("alpha =").is_err());
        assert!(FlatConfig::parse("# only a comment\n\n").unwrap().entries.is_empty());
    }

    #[test]
    fn domain_errors_surface_from_core() {
        let text = FRONT.replace("dt = 0.01", "dt = 0.5");
        let flat = FlatConfig::parse(&text).unwrap();
        assert!(matches!(Recipe::from_flat(&flat, RecipeKind::Front), Err(CliError::Core(_))));
    }
}
