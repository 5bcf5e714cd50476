//! Built-in relative equilibria (regular polygons with an optional central
//! vortex) and user-supplied configurations.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::algebra::{Circulations, MuMatrix, Regime};
use crate::dynamics::{check_reducible, moment_map, relative_coordinates};
use crate::error::{Error, Result};
use crate::hamiltonian::VortexConfiguration;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioKind {
    /// Three vortices at the vertices of a unit-edge equilateral triangle.
    Equilateral3,
    TriangleWithCenter,
    SquareWithCenter,
    /// `m` unit vortices on the unit circle around a central vortex.
    PolygonWithCenter(usize),
    Custom,
}

impl ScenarioKind {
    /// Vertex count of the polygon, if the kind has one.
    pub fn vertices(&self) -> Option<usize> {
        match self {
            ScenarioKind::Equilateral3 | ScenarioKind::TriangleWithCenter => Some(3),
            ScenarioKind::SquareWithCenter => Some(4),
            ScenarioKind::PolygonWithCenter(m) => Some(*m),
            ScenarioKind::Custom => None,
        }
    }

    /// Values of the free parameter that make some circulation vanish or
    /// change the regime. Sweeps skip them.
    pub fn excluded_parameters(&self) -> Vec<f64> {
        match self {
            ScenarioKind::Equilateral3 => vec![-2.0, 0.0],
            ScenarioKind::Custom => Vec::new(),
            k => vec![-(k.vertices().unwrap_or(0) as f64), 0.0],
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScenarioKind::Equilateral3 => f.write_str("equilateral3"),
            ScenarioKind::TriangleWithCenter => f.write_str("triangle-center"),
            ScenarioKind::SquareWithCenter => f.write_str("square-center"),
            ScenarioKind::PolygonWithCenter(m) => write!(f, "polygon-center:{m}"),
            ScenarioKind::Custom => f.write_str("custom"),
        }
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    /// Accepts the names printed by `Display` and the variant names,
    /// case-insensitively; `polygon-center:<m>` selects the vertex count.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase().replace('_', "-");
        let kind = match lower.as_str() {
            "equilateral3" | "equilateral" => ScenarioKind::Equilateral3,
            "triangle-center" | "trianglewithcenter" => ScenarioKind::TriangleWithCenter,
            "square-center" | "squarewithcenter" => ScenarioKind::SquareWithCenter,
            "custom" => ScenarioKind::Custom,
            other => {
                let m = other
                    .strip_prefix("polygon-center:")
                    .or_else(|| other.strip_prefix("polygonwithcenter:"))
                    .ok_or_else(|| Error::UnsupportedScenario(s.to_string()))?;
                let m = m
                    .parse::<usize>()
                    .map_err(|_| Error::UnsupportedScenario(format!("bad vertex count in {s:?}")))?;
                ScenarioKind::PolygonWithCenter(m)
            }
        };
        Ok(kind)
    }
}

/// Inputs for [`build_scenario`]. `gamma` is the central circulation of
/// the centered kinds and the third circulation of `Equilateral3`;
/// `positions` and `circulations` describe a `Custom` configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub circulations: Option<Vec<f64>>,
    #[serde(default)]
    pub positions: Option<Vec<[f64; 2]>>,
}

impl ScenarioParams {
    pub fn with_gamma(gamma: f64) -> Self {
        Self { gamma: Some(gamma), ..Self::default() }
    }

    /// Reads `{"positions": [[x, y], ...], "circulations": [...]}`.
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub kind: ScenarioKind,
    pub positions: Vec<Complex64>,
    pub circ: Circulations,
    pub free_parameter: Option<f64>,
}

fn polygon(m: usize, radius: f64) -> Vec<Complex64> {
    (0..m).map(|k| Complex64::from_polar(radius, 2.0 * PI * k as f64 / m as f64)).collect()
}

fn require_gamma(kind: ScenarioKind, params: &ScenarioParams) -> Result<f64> {
    let g =
        params.gamma.ok_or_else(|| Error::InvalidArgument(format!("scenario {kind} needs a gamma value")))?;
    if !g.is_finite() {
        return Err(Error::InvalidArgument(format!("gamma must be finite, got {g}")));
    }
    if g == 0.0 {
        return Err(Error::ExcludedParameter("gamma = 0 leaves a vortex without circulation".into()));
    }
    Ok(g)
}

pub fn build_scenario(kind: ScenarioKind, params: &ScenarioParams) -> Result<Scenario> {
    let (name, positions, gammas, free) = match kind {
        ScenarioKind::Equilateral3 => {
            let (gammas, free) = match (&params.circulations, params.gamma) {
                (Some(c), _) => (c.clone(), None),
                (None, Some(_)) => {
                    let g = require_gamma(kind, params)?;
                    (vec![1.0, 1.0, g], Some(g))
                }
                (None, None) => (vec![1.0; 3], None),
            };
            if gammas.len() != 3 {
                return Err(Error::DimensionMismatch { expected: 3, found: gammas.len() });
            }
            let total: f64 = gammas.iter().sum();
            let scale = gammas.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
            if total.abs() <= Circulations::ZERO_TOTAL_RTOL * scale {
                return Err(Error::ExcludedParameter(
                    "three vortices with zero total circulation have no reduced shape space".into(),
                ));
            }
            ("equilateral triangle".to_string(), polygon(3, 1.0 / 3f64.sqrt()), gammas, free)
        }
        ScenarioKind::TriangleWithCenter
        | ScenarioKind::SquareWithCenter
        | ScenarioKind::PolygonWithCenter(_) => {
            let m = kind.vertices().unwrap_or(0);
            if m < 2 {
                return Err(Error::InvalidArgument(format!("a centered polygon needs m >= 2, got {m}")));
            }
            let g = require_gamma(kind, params)?;
            let mut positions = polygon(m, 1.0);
            positions.push(Complex64::new(0.0, 0.0));
            let mut gammas = vec![1.0; m];
            gammas.push(g);
            let name = match kind {
                ScenarioKind::TriangleWithCenter => "triangle with center".to_string(),
                ScenarioKind::SquareWithCenter => "square with center".to_string(),
                _ => format!("{m}-gon with center"),
            };
            (name, positions, gammas, Some(g))
        }
        ScenarioKind::Custom => {
            let pts = params
                .positions
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("custom scenario needs positions".into()))?;
            let gammas = params
                .circulations
                .clone()
                .ok_or_else(|| Error::InvalidArgument("custom scenario needs circulations".into()))?;
            if pts.len() != gammas.len() {
                return Err(Error::DimensionMismatch { expected: gammas.len(), found: pts.len() });
            }
            let positions = pts.iter().map(|p| Complex64::new(p[0], p[1])).collect();
            ("custom".to_string(), positions, gammas, None)
        }
    };
    if positions.iter().any(|q: &Complex64| !q.is_finite()) {
        return Err(Error::InvalidArgument("positions must be finite".into()));
    }
    let circ = Circulations::new(gammas)?;
    let cfg = VortexConfiguration::new(positions, circ)?;
    Ok(Scenario { name, kind, positions: cfg.positions, circ: cfg.circ, free_parameter: free })
}

fn approx_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

impl Scenario {
    pub fn configuration(&self) -> VortexConfiguration {
        VortexConfiguration { positions: self.positions.clone(), circ: self.circ.clone() }
    }

    pub fn regime(&self) -> Regime {
        self.circ.regime()
    }

    /// `J` of the relative coordinates.
    pub fn mu0(&self) -> Result<MuMatrix> {
        let cfg = self.configuration();
        check_reducible(&cfg)?;
        Ok(moment_map(&relative_coordinates(&cfg)?))
    }

    /// Tangent dimension of the level set cut out by `casimirs` Casimirs
    /// and the rank-one constraints.
    pub fn tangent_dim(&self, casimirs: usize) -> usize {
        let n = self.circ.reduced_dim();
        (2 * n - 1).saturating_sub(casimirs)
    }

    /// Hand-derived tangent basis (columns) for the worked scenarios with a
    /// single Casimir, or `None` where no closed form is tabulated.
    pub fn reference_tangent_basis(&self) -> Option<DMatrix<f64>> {
        let g = self.circ.gammas();
        let r = 3f64.sqrt();
        match (self.kind, self.regime()) {
            (ScenarioKind::Equilateral3, Regime::NonZeroTotal) => {
                let (g1, g2, g3) = (g[0], g[1], g[2]);
                #[rustfmt::skip]
                let cols: [f64; 8] = if !approx_eq(g1, g2) {
                    [
                        r * g2 * (g1 + g3), -r * g1 * (g2 + g3), 0.0, g3 * (g1 - g2),
                        g2 * (g1 - g3), g1 * (g3 - g2), g3 * (g1 - g2), 0.0,
                    ]
                } else if !approx_eq(g1, g3) {
                    [
                        2.0 * r * g1, 0.0, r * (g1 + g3), g3 - g1,
                        g1 - g3, g3 - g1, 0.0, 0.0,
                    ]
                } else {
                    [1.0, 0.0, 1.0, 0.0, -1.0, 1.0, 0.0, 0.0]
                };
                Some(DMatrix::from_column_slice(4, 2, &cols))
            }
            (ScenarioKind::TriangleWithCenter, Regime::NonZeroTotal) => {
                #[rustfmt::skip]
                let cols = [
                    r, 0.0, -r, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0,
                    1.0, 0.0, -1.0, -1.0, 0.0, 0.0, 0.0, 1.0, 0.0,
                    0.0, -r, r, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0,
                    0.0, 1.0, -1.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0,
                ];
                Some(DMatrix::from_column_slice(9, 4, &cols))
            }
            (ScenarioKind::TriangleWithCenter, Regime::ZeroTotal) => {
                Some(DMatrix::from_column_slice(4, 2, &[1.0, 0.0, 1.0, 0.0, -1.0, 1.0, 0.0, 0.0]))
            }
            (ScenarioKind::SquareWithCenter, Regime::NonZeroTotal) => {
                let sparse: [&[(usize, f64)]; 6] = [
                    &[(5, 1.0), (8, -1.0), (9, -1.0)],
                    &[(1, -1.0), (2, 1.0), (3, 1.0), (4, -1.0), (10, -1.0), (12, -1.0)],
                    &[(1, -1.0), (2, 1.0), (3, -1.0), (4, 1.0), (7, 1.0), (13, -1.0)],
                    &[(5, -1.0), (11, 1.0), (14, -1.0)],
                    &[(8, -1.0), (11, 1.0), (15, -1.0)],
                    &[(1, -1.0), (2, -1.0), (3, 1.0), (4, 1.0), (6, 1.0), (16, -1.0)],
                ];
                let mut v = DMatrix::zeros(16, 6);
                for (c, entries) in sparse.iter().enumerate() {
                    for &(e, x) in entries.iter() {
                        v[(e - 1, c)] = x;
                    }
                }
                Some(v)
            }
            _ => None,
        }
    }
}
