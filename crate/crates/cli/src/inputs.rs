use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, ValueEnum};
use conformal_mms::fractal::{FractalGrid, FractalParams};
use conformal_mms::{build_grid_space, io, DiscreteMms, FieldExpr, Rect, ScalarField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Unit-square grid, `w = v = 0`.
    Flat,
    /// Grid on `[-1, 1]²` with `w = ln(2/(1+r²))`, `v = 2w`.
    StereographicSphere,
    /// Grid on `[-1, 1]²` with the level-3 fractal weight for `ε = 0.1`, `γ = 0.5`.
    FractalDefault,
}

impl Preset {
    fn default_resolution(self) -> usize {
        match self {
            Preset::Flat => 64,
            Preset::StereographicSphere => 200,
            Preset::FractalDefault => 128,
        }
    }
}

pub const FRACTAL_DEFAULT: (f64, f64, usize) = (0.1, 0.5, 3);

#[derive(Debug, Args)]
pub struct SpaceArgs {
    /// Space JSON file; overrides `--preset`.
    #[arg(long)]
    pub space: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Grid resolution for presets.
    #[arg(long)]
    pub resolution: Option<usize>,
    /// Length weight: a field file (JSON array or CSV) or an expression.
    #[arg(long)]
    pub w: Option<String>,
    /// Measure weight: a field file or an expression.
    #[arg(long)]
    pub v: Option<String>,
}

/// A field given on the command line, with its closed form when it has one.
pub struct FieldInput {
    pub values: ScalarField,
    pub expr: Option<FieldExpr>,
}

pub struct Loaded {
    pub space: DiscreteMms,
    pub w: FieldInput,
    pub v: FieldInput,
    pub label: String,
}

pub fn parse_expr(spec: &str) -> Result<FieldExpr> {
    spec.parse::<FieldExpr>().with_context(|| format!("{spec:?} is neither a readable file nor a field expression"))
}

fn field(spec: &str, space: &DiscreteMms) -> Result<FieldInput> {
    let path = Path::new(spec);
    if path.is_file() {
        let values = io::read_field(path, space.node_count())?;
        return Ok(FieldInput { values, expr: None });
    }
    let expr = parse_expr(spec)?;
    let values = space.sample(&expr).with_context(|| format!("sampling {spec:?}"))?;
    Ok(FieldInput { values, expr: Some(expr) })
}

fn sampled(expr: FieldExpr, space: &DiscreteMms) -> Result<FieldInput> {
    Ok(FieldInput { values: space.sample(&expr)?, expr: Some(expr) })
}

impl SpaceArgs {
    pub fn load(&self) -> Result<Loaded> {
        let (space, w, v, label) = match (&self.space, self.preset) {
            (Some(path), _) => {
                let space = io::read_space(path)?;
                let n = space.node_count();
                let zero = || FieldInput { values: ScalarField::zeros(n), expr: Some(FieldExpr::zero()) };
                (space, zero(), zero(), path.display().to_string())
            }
            (None, preset) => {
                let preset = preset.unwrap_or(Preset::Flat);
                let r = self.resolution.unwrap_or(preset.default_resolution());
                ensure!(r >= 2, "resolution must be at least 2, got {r}");
                match preset {
                    Preset::Flat => {
                        let space = build_grid_space(r, r, Rect::unit())?;
                        let (w, v) = (sampled(FieldExpr::zero(), &space)?, sampled(FieldExpr::zero(), &space)?);
                        (space, w, v, "flat".to_string())
                    }
                    Preset::StereographicSphere => {
                        let space = build_grid_space(r, r, Rect::symmetric(1.0))?;
                        let w = sampled(FieldExpr::Stereographic, &space)?;
                        let v = sampled(FieldExpr::Stereographic.scaled(2.0), &space)?;
                        (space, w, v, "stereographic-sphere".to_string())
                    }
                    Preset::FractalDefault => {
                        let (eps, gamma, depth) = FRACTAL_DEFAULT;
                        let params = FractalParams::new(eps, gamma, depth)?;
                        let grid = FractalGrid::new(r)?;
                        let w = grid.weight(&params, depth)?;
                        let n = w.len();
                        let space = grid.space().clone();
                        (
                            space,
                            FieldInput { values: w, expr: None },
                            FieldInput { values: ScalarField::zeros(n), expr: Some(FieldExpr::zero()) },
                            "fractal-default".to_string(),
                        )
                    }
                }
            }
        };
        if self.space.is_some() && self.resolution.is_some() {
            bail!("--resolution applies to presets only");
        }
        let w = match &self.w {
            Some(spec) => field(spec, &space).context("--w")?,
            None => w,
        };
        let v = match &self.v {
            Some(spec) => field(spec, &space).context("--v")?,
            None => v,
        };
        Ok(Loaded { space, w, v, label })
    }
}
