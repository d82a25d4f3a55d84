//! Seeded synthetic data: phantoms and the blur + decimation + noise forward
//! model.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{param_err, Error, Result};
use crate::grid::{apply_otf, build_kernel, kernel_to_otf, Fft2, ImageGrid, KernelSpec, SpectralDiagonal};
use crate::operators::{decimate, Decimator};

const PHANTOM_STREAM: u64 = 0;
const NOISE_STREAM: u64 = 1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NoiseLevel {
    Absolute(f64),
    /// Percentage of the maximum of the noiseless observation.
    Percent(f64),
}

impl fmt::Display for NoiseLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Absolute(s) => write!(f, "{s}"),
            Self::Percent(p) => write!(f, "{p}%"),
        }
    }
}

impl FromStr for NoiseLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (body, pct) = match s.strip_suffix('%') {
            Some(b) => (b, true),
            None => (s, false),
        };
        let v: f64 = body.trim().parse().map_err(|_| Error::InvalidParameter(format!("bad noise level '{s}'")))?;
        if !(v >= 0.0 && v.is_finite()) {
            return param_err(format!("noise level must be nonnegative, got '{s}'"));
        }
        Ok(if pct { Self::Percent(v) } else { Self::Absolute(v) })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DegradationSpec {
    pub kernel: KernelSpec,
    /// Compose a uniform `dr x dc` blur with the camera kernel.
    pub pixel_blur: bool,
    pub dr: usize,
    pub dc: usize,
    pub noise: NoiseLevel,
    pub seed: u64,
}

impl DegradationSpec {
    pub fn decimator(&self, rows: usize, cols: usize) -> Result<Decimator> {
        Decimator::new(rows, cols, self.dr, self.dc)
    }

    /// OTF of the composed blur on a `rows x cols` grid.
    pub fn otf(&self, rows: usize, cols: usize) -> Result<SpectralDiagonal> {
        composed_otf(&self.kernel, self.pixel_blur, self.dr, self.dc, rows, cols)
    }
}

pub fn composed_otf(
    kernel: &KernelSpec,
    pixel_blur: bool,
    dr: usize,
    dc: usize,
    rows: usize,
    cols: usize,
) -> Result<SpectralDiagonal> {
    let camera = kernel_to_otf(&build_kernel(kernel)?, rows, cols)?;
    if !pixel_blur {
        return Ok(camera);
    }
    let pixel = kernel_to_otf(&build_kernel(&KernelSpec::Uniform { rows: dr, cols: dc })?, rows, cols)?;
    camera.hadamard(&pixel)
}

#[derive(Clone, Debug)]
pub struct Degraded {
    pub b: ImageGrid,
    /// Noiseless observation `SKx`.
    pub clean: ImageGrid,
    pub sigma: f64,
    pub otf: SpectralDiagonal,
    pub dec: Decimator,
}

/// `b = S K x + e`, `e ~ N(0, σ²)` i.i.d., deterministic in `spec.seed`.
pub fn degrade(x: &ImageGrid, spec: &DegradationSpec) -> Result<Degraded> {
    let (rows, cols) = x.shape();
    let dec = spec.decimator(rows, cols)?;
    let otf = spec.otf(rows, cols)?;
    let clean = decimate(&apply_otf(&Fft2::new(rows, cols), &otf, x)?, &dec)?;
    let sigma = match spec.noise {
        NoiseLevel::Absolute(s) => s,
        NoiseLevel::Percent(p) => p / 100.0 * clean.max(),
    };
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return param_err(format!("noise level must be nonnegative, got {sigma}"));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    rng.set_stream(NOISE_STREAM);
    let mut b = clean.clone();
    if sigma > 0.0 {
        for v in b.data_mut() {
            let e: f64 = StandardNormal.sample(&mut rng);
            *v += sigma * e;
        }
    }
    Ok(Degraded { b, clean, sigma, otf, dec })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PhantomKind {
    /// Random binary cells of `cell x cell` pixels.
    Blocks { cell: usize },
    /// Overlapping constant-intensity rectangles and disks.
    Geometric { shapes: usize },
    /// Unit impulses with a minimum pairwise distance.
    Points { count: usize, min_separation: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Phantom {
    pub image: ImageGrid,
    /// Impulse locations for point phantoms.
    pub points: Vec<(usize, usize)>,
}

pub fn make_phantom(kind: PhantomKind, rows: usize, cols: usize, seed: u64) -> Result<Phantom> {
    if rows == 0 || cols == 0 {
        return param_err("phantom must be non-empty");
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(PHANTOM_STREAM);
    match kind {
        PhantomKind::Blocks { cell } => {
            if cell == 0 {
                return param_err("cell size must be positive");
            }
            let (cr, cc) = (rows.div_ceil(cell), cols.div_ceil(cell));
            let cells: Vec<f64> = (0..cr * cc).map(|_| if rng.random::<bool>() { 1.0 } else { 0.0 }).collect();
            let image = ImageGrid::from_fn(rows, cols, |r, c| cells[(r / cell) * cc + c / cell]);
            Ok(Phantom { image, points: Vec::new() })
        }
        PhantomKind::Geometric { shapes } => {
            let mut image = ImageGrid::zeros(rows, cols);
            let (rf, cf) = (rows as f64, cols as f64);
            for _ in 0..shapes {
                let level = rng.random_range(0.2..=1.0);
                let cy = rng.random_range(0.0..rf);
                let cx = rng.random_range(0.0..cf);
                if rng.random::<bool>() {
                    let hh = rng.random_range(0.05..0.25) * rf;
                    let hw = rng.random_range(0.05..0.25) * cf;
                    for r in 0..rows {
                        for c in 0..cols {
                            if (r as f64 - cy).abs() <= hh && (c as f64 - cx).abs() <= hw {
                                image.set(r, c, level);
                            }
                        }
                    }
                } else {
                    let rad = rng.random_range(0.05..0.2) * rf.min(cf);
                    for r in 0..rows {
                        for c in 0..cols {
                            if (r as f64 - cy).hypot(c as f64 - cx) <= rad {
                                image.set(r, c, level);
                            }
                        }
                    }
                }
            }
            Ok(Phantom { image, points: Vec::new() })
        }
        PhantomKind::Points { count, min_separation } => {
            if !(min_separation >= 0.0) {
                return param_err("minimum separation must be nonnegative");
            }
            let mut points: Vec<(usize, usize)> = Vec::with_capacity(count);
            let budget = 10_000 * count.max(1);
            let mut attempts = 0;
            while points.len() < count {
                if attempts == budget {
                    return Err(Error::Infeasible(format!(
                        "could not place {count} points {min_separation} apart on {rows}x{cols}"
                    )));
                }
                attempts += 1;
                let p = (rng.random_range(0..rows), rng.random_range(0..cols));
                let ok = points.iter().all(|q| {
                    (p.0 as f64 - q.0 as f64).hypot(p.1 as f64 - q.1 as f64) >= min_separation
                        && *q != p
                });
                if ok {
                    points.push(p);
                }
            }
            let mut image = ImageGrid::zeros(rows, cols);
            for &(r, c) in &points {
                image.set(r, c, 1.0);
            }
            Ok(Phantom { image, points })
        }
    }
}
