//! Flat `key=value` experiment configuration with dotted section prefixes.

use std::fmt;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::flows::FlowConfig;
use crate::functional::FunctionalKind;
use crate::grid::Shape;

/// What a run computes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Forward,
    Inverse,
    Ipm,
    Linear,
    Spectral,
    Validate,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Forward => "forward",
            Method::Inverse => "inverse",
            Method::Ipm => "ipm",
            Method::Linear => "linear",
            Method::Spectral => "spectral",
            Method::Validate => "validate",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s.to_ascii_lowercase().as_str() {
            "forward" => Method::Forward,
            "inverse" => Method::Inverse,
            "ipm" => Method::Ipm,
            "linear" => Method::Linear,
            "spectral" => Method::Spectral,
            "validate" => Method::Validate,
            _ => return None,
        })
    }
}

/// Named 1D test signals.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// A few flat plateaus plus a narrow spike, with additive noise.
    PointNoise,
    /// A tent and a ramp, with additive noise.
    RampNoise,
    /// Noise-free plateaus of different heights.
    Steps,
}

impl Preset {
    pub fn name(&self) -> &'static str {
        match self {
            Preset::PointNoise => "point_noise",
            Preset::RampNoise => "ramp_noise",
            Preset::Steps => "steps",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "point_noise" => Preset::PointNoise,
            "ramp_noise" => Preset::RampNoise,
            "steps" => Preset::Steps,
            _ => return None,
        })
    }
}

/// Initial condition generator.
#[derive(Clone, Debug, PartialEq)]
pub enum InitSpec {
    /// Indicator of a `side × side` square with top-left corner `offset`
    /// (centered when `None`).
    Square {
        side: usize,
        offset: Option<(usize, usize)>,
    },
    /// Indicator of a disk; `center` is `(row, col)`, grid center when `None`.
    Disk {
        radius: f64,
        center: Option<(f64, f64)>,
    },
    GaussianNoise { sigma: f64 },
    /// `sigma` is the noise level for the noisy presets.
    Composite1d { preset: Preset, sigma: f64 },
    FromFile { path: PathBuf },
}

impl InitSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            InitSpec::Square { .. } => "square",
            InitSpec::Disk { .. } => "disk",
            InitSpec::GaussianNoise { .. } => "gaussian_noise",
            InitSpec::Composite1d { .. } => "composite1d",
            InitSpec::FromFile { .. } => "file",
        }
    }
}

/// Everything a run needs; `Default` gives the forward TV flow on a
/// centered 16×16 square in a 64×64 grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub method: Method,
    pub functional: FunctionalKind,
    pub grid: Shape,
    pub init: InitSpec,
    /// Rescale the (null-projected) initial field to this L² norm.
    pub init_norm: Option<f64>,
    pub flow: FlowConfig,
    pub output_dir: PathBuf,
    /// Write the iterate every this many outer iterations; 0 disables.
    pub snapshot_every: usize,
    pub seed: u64,
    /// Run the eigenfunction checks on the limit (gradient flow, prox, subgradient).
    pub validate_result: bool,
    /// Time step and horizon of the spectral transform.
    pub spectral_dt: f64,
    pub spectral_t_end: f64,
    /// Claimed eigenvalue for `method=validate`; estimated from `J` when absent.
    pub validate_lambda: Option<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            method: Method::Forward,
            functional: FunctionalKind::Tv,
            grid: Shape::new(64, 64),
            init: InitSpec::Square {
                side: 16,
                offset: None,
            },
            init_norm: None,
            flow: FlowConfig::default(),
            output_dir: PathBuf::from("out"),
            snapshot_every: 0,
            seed: 0,
            validate_result: true,
            spectral_dt: 0.01,
            spectral_t_end: 1.0,
            validate_lambda: None,
        }
    }
}

fn bad(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::parse(path, line, msg)
}

fn num<T: std::str::FromStr>(path: &Path, line: usize, key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| bad(path, line, format!("{key}: cannot parse '{v}'")))
}

fn pair<T: std::str::FromStr>(path: &Path, line: usize, key: &str, v: &str) -> Result<(T, T)> {
    let mut it = v.split(',').map(str::trim);
    match (it.next(), it.next(), it.next()) {
        (Some(a), Some(b), None) => Ok((num(path, line, key, a)?, num(path, line, key, b)?)),
        _ => Err(bad(path, line, format!("{key}: expected 'a,b', got '{v}'"))),
    }
}

fn boolean(path: &Path, line: usize, key: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(bad(path, line, format!("{key}: expected true/false, got '{v}'"))),
    }
}

/// Raw init keys, resolved into an [`InitSpec`] once all lines are read.
#[derive(Default)]
struct InitKeys {
    kind: Option<String>,
    side: Option<usize>,
    offset: Option<(usize, usize)>,
    radius: Option<f64>,
    center: Option<(f64, f64)>,
    sigma: Option<f64>,
    preset: Option<Preset>,
    path: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Parses config text; `origin` names the source in errors and anchors
    /// relative `init.path` values.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut init = InitKeys::default();
        let mut functional = "TV".to_string();
        let (mut alpha0, mut alpha1) = (
            FunctionalKind::DEFAULT_TGV_ALPHA0,
            FunctionalKind::DEFAULT_TGV_ALPHA1,
        );
        let base = origin.parent().unwrap_or(Path::new(""));

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| bad(origin, line, format!("expected key=value, got '{content}'")))?;
            let (key, v) = (key.trim(), value.trim());
            let f = &mut cfg.flow;
            match key {
                "method" => {
                    cfg.method = Method::parse(v)
                        .ok_or_else(|| bad(origin, line, format!("unknown method '{v}'")))?
                }
                "functional" => functional = v.to_string(),
                "functional.alpha0" => alpha0 = num(origin, line, key, v)?,
                "functional.alpha1" => alpha1 = num(origin, line, key, v)?,
                "grid" => {
                    let (r, c) = pair(origin, line, key, v)?;
                    cfg.grid = Shape::new(r, c);
                }
                "grid.rows" => cfg.grid = Shape::new(num(origin, line, key, v)?, cfg.grid.cols),
                "grid.cols" => cfg.grid = Shape::new(cfg.grid.rows, num(origin, line, key, v)?),
                "init" => init.kind = Some(v.to_ascii_lowercase()),
                "init.side" => init.side = Some(num(origin, line, key, v)?),
                "init.offset" => init.offset = Some(pair(origin, line, key, v)?),
                "init.radius" => init.radius = Some(num(origin, line, key, v)?),
                "init.center" => init.center = Some(pair(origin, line, key, v)?),
                "init.sigma" => init.sigma = Some(num(origin, line, key, v)?),
                "init.preset" => {
                    init.preset = Some(
                        Preset::parse(v)
                            .ok_or_else(|| bad(origin, line, format!("unknown preset '{v}'")))?,
                    )
                }
                "init.path" => init.path = Some(base.join(v)),
                "init.norm" => cfg.init_norm = Some(num(origin, line, key, v)?),
                "flow.dt" => f.dt = num(origin, line, key, v)?,
                "flow.eps" => f.eps = num(origin, line, key, v)?,
                "flow.theta_thresh" => f.theta_thresh = num(origin, line, key, v)?,
                "flow.max_outer" => f.max_outer = num(origin, line, key, v)?,
                "flow.tight_tol" => f.tight_tol = num(origin, line, key, v)?,
                "flow.tight_below_deg" => f.tight_below_deg = num(origin, line, key, v)?,
                "flow.sharpness" => f.sharpness = num(origin, line, key, v)?,
                "flow.max_halvings" => f.max_halvings = num(origin, line, key, v)?,
                "flow.linear_residual_tol" => f.linear_residual_tol = num(origin, line, key, v)?,
                "inner.tol" => f.inner.tol = num(origin, line, key, v)?,
                "inner.max_iters" => f.inner.max_iters = num(origin, line, key, v)?,
                "inner.step_ratio" => f.inner.step_ratio = num(origin, line, key, v)?,
                "inner.over_relaxation" => f.inner.over_relaxation = num(origin, line, key, v)?,
                "output_dir" => cfg.output_dir = PathBuf::from(v),
                "snapshot_every" => cfg.snapshot_every = num(origin, line, key, v)?,
                "seed" => cfg.seed = num(origin, line, key, v)?,
                "report.validate" => cfg.validate_result = boolean(origin, line, key, v)?,
                "spectral.dt" => cfg.spectral_dt = num(origin, line, key, v)?,
                "spectral.t_end" => cfg.spectral_t_end = num(origin, line, key, v)?,
                "validate.lambda" => cfg.validate_lambda = Some(num(origin, line, key, v)?),
                _ => return Err(bad(origin, line, format!("unknown key '{key}'"))),
            }
        }

        cfg.functional = match functional.to_ascii_uppercase().as_str() {
            "TV" => FunctionalKind::Tv,
            "TGV2" | "TGV" => FunctionalKind::Tgv2 { alpha0, alpha1 },
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "unknown functional '{functional}' (expected TV or TGV2)"
                )))
            }
        };
        cfg.init = resolve_init(init)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.rows < 2 || self.grid.cols < 1 || (self.grid.cols < 2 && !self.grid.is_1d()) {
            return Err(Error::InvalidParameter(format!(
                "grid must have at least 2 rows, got {}",
                self.grid
            )));
        }
        self.functional.validate()?;
        self.flow.validate()?;
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
            }
        };
        if self.method == Method::Spectral {
            positive("spectral.dt", self.spectral_dt)?;
            positive("spectral.t_end", self.spectral_t_end)?;
            if self.spectral_t_end < 2.0 * self.spectral_dt {
                return Err(Error::InvalidParameter(
                    "spectral.t_end must cover at least two steps".into(),
                ));
            }
        }
        if let Some(l) = self.validate_lambda {
            positive("validate.lambda", l)?;
        }
        if let Some(n) = self.init_norm {
            positive("init.norm", n)?;
        }
        let (rows, cols) = (self.grid.rows, self.grid.cols);
        match &self.init {
            InitSpec::Square { side, offset } => {
                if *side == 0 || *side > rows || *side > cols.max(1) && !self.grid.is_1d() {
                    return Err(Error::InvalidParameter(format!(
                        "square side {side} does not fit in {}",
                        self.grid
                    )));
                }
                if let Some((r, c)) = offset {
                    let col_fit = if self.grid.is_1d() { *c == 0 } else { c + side <= cols };
                    if r + side > rows || !col_fit {
                        return Err(Error::InvalidParameter(format!(
                            "square at ({r},{c}) with side {side} leaves {}",
                            self.grid
                        )));
                    }
                }
            }
            InitSpec::Disk { radius, center } => {
                positive("init.radius", *radius)?;
                let (cr, cc) = center.unwrap_or(((rows - 1) as f64 / 2.0, (cols - 1) as f64 / 2.0));
                if cr - radius < 0.0
                    || cc - radius < 0.0
                    || cr + radius > (rows - 1) as f64
                    || cc + radius > (cols - 1) as f64
                {
                    return Err(Error::InvalidParameter(format!(
                        "disk of radius {radius} at ({cr},{cc}) leaves {}",
                        self.grid
                    )));
                }
            }
            InitSpec::GaussianNoise { sigma } => positive("init.sigma", *sigma)?,
            InitSpec::Composite1d { sigma, .. } => {
                if !self.grid.is_1d() {
                    return Err(Error::InvalidParameter(format!(
                        "composite1d needs a grid with one column, got {}",
                        self.grid
                    )));
                }
                if rows < 16 {
                    return Err(Error::InvalidParameter("composite1d needs at least 16 rows".into()));
                }
                if !(*sigma >= 0.0 && sigma.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "init.sigma must be non-negative, got {sigma}"
                    )));
                }
            }
            InitSpec::FromFile { .. } => {}
        }
        Ok(())
    }

    /// Every resolved setting as `key=value`, in a fixed order; parsing the
    /// result gives back the same config.
    pub fn to_kv(&self) -> Vec<(String, String)> {
        let mut kv: Vec<(String, String)> = Vec::new();
        let mut put = |k: &str, v: String| kv.push((k.to_string(), v));
        put("method", self.method.name().into());
        put("functional", self.functional.name().into());
        if let FunctionalKind::Tgv2 { alpha0, alpha1 } = self.functional {
            put("functional.alpha0", alpha0.to_string());
            put("functional.alpha1", alpha1.to_string());
        }
        put("grid.rows", self.grid.rows.to_string());
        put("grid.cols", self.grid.cols.to_string());
        put("init", self.init.kind_name().into());
        match &self.init {
            InitSpec::Square { side, offset } => {
                put("init.side", side.to_string());
                if let Some((r, c)) = offset {
                    put("init.offset", format!("{r},{c}"));
                }
            }
            InitSpec::Disk { radius, center } => {
                put("init.radius", radius.to_string());
                if let Some((r, c)) = center {
                    put("init.center", format!("{r},{c}"));
                }
            }
            InitSpec::GaussianNoise { sigma } => put("init.sigma", sigma.to_string()),
            InitSpec::Composite1d { preset, sigma } => {
                put("init.preset", preset.name().into());
                put("init.sigma", sigma.to_string());
            }
            InitSpec::FromFile { path } => put("init.path", path.display().to_string()),
        }
        if let Some(n) = self.init_norm {
            put("init.norm", n.to_string());
        }
        let f = &self.flow;
        put("flow.dt", f.dt.to_string());
        put("flow.eps", f.eps.to_string());
        put("flow.theta_thresh", f.theta_thresh.to_string());
        put("flow.max_outer", f.max_outer.to_string());
        put("flow.tight_tol", f.tight_tol.to_string());
        put("flow.tight_below_deg", f.tight_below_deg.to_string());
        put("flow.sharpness", f.sharpness.to_string());
        put("flow.max_halvings", f.max_halvings.to_string());
        put("flow.linear_residual_tol", f.linear_residual_tol.to_string());
        put("inner.tol", f.inner.tol.to_string());
        put("inner.max_iters", f.inner.max_iters.to_string());
        put("inner.step_ratio", f.inner.step_ratio.to_string());
        put("inner.over_relaxation", f.inner.over_relaxation.to_string());
        put("output_dir", self.output_dir.display().to_string());
        put("snapshot_every", self.snapshot_every.to_string());
        put("seed", self.seed.to_string());
        put("report.validate", self.validate_result.to_string());
        put("spectral.dt", self.spectral_dt.to_string());
        put("spectral.t_end", self.spectral_t_end.to_string());
        if let Some(l) = self.validate_lambda {
            put("validate.lambda", l.to_string());
        }
        kv
    }
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.to_kv() {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

fn resolve_init(k: InitKeys) -> Result<InitSpec> {
    let missing = |what: &str| Error::InvalidParameter(format!("init needs {what}"));
    Ok(match k.kind.as_deref().unwrap_or("square") {
        "square" => InitSpec::Square {
            side: k.side.unwrap_or(16),
            offset: k.offset,
        },
        "disk" => InitSpec::Disk {
            radius: k.radius.ok_or_else(|| missing("init.radius"))?,
            center: k.center,
        },
        "gaussian_noise" | "noise" => InitSpec::GaussianNoise {
            sigma: k.sigma.unwrap_or(1.0),
        },
        "composite1d" => InitSpec::Composite1d {
            preset: k.preset.ok_or_else(|| missing("init.preset"))?,
            sigma: k.sigma.unwrap_or(0.1),
        },
        "file" | "from_file" => InitSpec::FromFile {
            path: k.path.ok_or_else(|| missing("init.path"))?,
        },
        other => return Err(Error::InvalidParameter(format!("unknown init '{other}'"))),
    })
}
