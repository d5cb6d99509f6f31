use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use feta_eval::nifti::write_volume;
use feta_eval::phantoms::{generate, PhantomShape, PhantomSpec};

use crate::{Global, Outcome};

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum ShapeArg {
    Ball,
    Hollow,
    Torus,
    Nested,
    Two,
}

#[derive(Args, Debug)]
pub struct PhantomArgs {
    /// Full phantom spec as JSON; overrides the shape flags.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "nested")]
    pub shape: ShapeArg,
    /// Grid edge length in voxels (cubic grid).
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    /// Outer radius in voxels (ball, hollow outer, nested, two-component balls).
    #[arg(long, default_value_t = 25.0)]
    pub radius: f64,
    /// Inner radius of the hollow sphere.
    #[arg(long, default_value_t = 12.0)]
    pub inner: f64,
    /// Torus tube radius; the ring radius is `--radius`.
    #[arg(long, default_value_t = 5.0)]
    pub minor: f64,
    /// Isotropic voxel size in mm.
    #[arg(long, default_value_t = 1.0)]
    pub spacing: f64,
    /// Offset of the shape centre from the grid centre, in voxels, `dx,dy,dz`.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_values_t = [0.0, 0.0, 0.0])]
    pub shift: Vec<f64>,
    /// Label code for single-label shapes.
    #[arg(long, default_value_t = 1)]
    pub label: u8,
    /// Output path, `.nii` or `.nii.gz`; relative paths land in `--out`.
    #[arg(long, default_value = "phantom.nii.gz")]
    pub output: PathBuf,
}

pub fn run(g: &Global, args: PhantomArgs) -> Result<Outcome> {
    let spec = match &args.spec {
        Some(p) => serde_json::from_str::<PhantomSpec>(
            &fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        )
        .with_context(|| format!("parsing {}", p.display()))?,
        None => {
            if args.shift.len() != 3 {
                bail!("--shift takes three comma-separated values");
            }
            let n = args.size;
            let mid = (n as f64 - 1.0) / 2.0;
            let c = [mid + args.shift[0], mid + args.shift[1], mid + args.shift[2]];
            let r = args.radius;
            let shape = match args.shape {
                ShapeArg::Ball => PhantomShape::SolidBall { center: c, radius: r },
                ShapeArg::Hollow => PhantomShape::HollowSphere { center: c, inner: args.inner, outer: r },
                ShapeArg::Torus => PhantomShape::Torus { center: c, major: r, minor: args.minor },
                ShapeArg::Nested => PhantomShape::NestedShells { center: c, radius: r },
                ShapeArg::Two => {
                    let d = r + 1.0;
                    PhantomShape::TwoComponents { centers: [[c[0] - d, c[1], c[2]], [c[0] + d, c[1], c[2]]], radius: r / 2.0 }
                }
            };
            PhantomSpec::new(shape, [n; 3]).with_spacing([args.spacing; 3]).with_label(args.label)
        }
    };
    let volume = generate(&spec)?;
    let path = if args.output.is_absolute() { args.output.clone() } else { g.out_dir()?.join(&args.output) };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    write_volume(&volume, &path).with_context(|| format!("writing {}", path.display()))?;
    log::info!("wrote {}", path.display());
    Ok(Outcome::Clean)
}
