//! Decimation, zero-interpolation, alias-group indexing and the
//! regularisation operators `L`.

use num_complex::Complex64;

use crate::error::{param_err, shape_err, Result};
use crate::grid::{dft2, ImageGrid, SpectralDiagonal};

/// Binary selection operator `S` keeping the top-left sample of every
/// `dr x dc` cell of a high-resolution grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Decimator {
    dr: usize,
    dc: usize,
    hr_rows: usize,
    hr_cols: usize,
}

impl Decimator {
    pub fn new(hr_rows: usize, hr_cols: usize, dr: usize, dc: usize) -> Result<Self> {
        if dr == 0 || dc == 0 || hr_rows == 0 || hr_cols == 0 {
            return param_err("decimation factors and grid sizes must be positive");
        }
        if hr_rows % dr != 0 || hr_cols % dc != 0 {
            return shape_err(format!(
                "HR shape {hr_rows}x{hr_cols} is not divisible by factors {dr}x{dc}"
            ));
        }
        Ok(Self { dr, dc, hr_rows, hr_cols })
    }

    pub fn factors(&self) -> (usize, usize) {
        (self.dr, self.dc)
    }

    /// Group size `d = dr*dc`.
    pub fn d(&self) -> usize {
        self.dr * self.dc
    }

    pub fn hr_shape(&self) -> (usize, usize) {
        (self.hr_rows, self.hr_cols)
    }

    pub fn lr_shape(&self) -> (usize, usize) {
        (self.hr_rows / self.dr, self.hr_cols / self.dc)
    }

    pub fn hr_len(&self) -> usize {
        self.hr_rows * self.hr_cols
    }

    pub fn lr_len(&self) -> usize {
        self.hr_len() / self.d()
    }

    pub fn alias_groups(&self) -> AliasGroups {
        let (nr, nc) = self.lr_shape();
        AliasGroups::build(nr, nc, self.dr, self.dc)
    }
}

/// `S x`: keeps `x(i*dr, j*dc)`.
pub fn decimate(x: &ImageGrid, dec: &Decimator) -> Result<ImageGrid> {
    let (hr, hc) = dec.hr_shape();
    x.check_shape(hr, hc, "decimate input")?;
    let (lr, lc) = dec.lr_shape();
    Ok(ImageGrid::from_fn(lr, lc, |i, j| x.get(i * dec.dr, j * dec.dc)))
}

/// `S^H b`: places `b` on the sampled positions, zeros elsewhere.
pub fn zero_interpolate(b: &ImageGrid, dec: &Decimator) -> Result<ImageGrid> {
    let (lr, lc) = dec.lr_shape();
    b.check_shape(lr, lc, "zero_interpolate input")?;
    let (hr, hc) = dec.hr_shape();
    let mut out = ImageGrid::zeros(hr, hc);
    for i in 0..lr {
        for j in 0..lc {
            out.set(i * dec.dr, j * dec.dc, b.get(i, j));
        }
    }
    Ok(out)
}

/// Permutation that makes every set of aliased HR frequencies contiguous.
///
/// HR frequency `(u, v)` with `u = u_lo + p*n_r`, `v = v_lo + q*n_c` goes to
/// position `g*d + o` where `g = u_lo*n_c + v_lo` and `o = p*d_c + q`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AliasGroups {
    /// HR flat frequency index -> permuted position.
    perm: Vec<usize>,
    /// Permuted position -> HR flat frequency index.
    members: Vec<usize>,
    d: usize,
    n: usize,
}

impl AliasGroups {
    fn build(nr: usize, nc: usize, dr: usize, dc: usize) -> Self {
        let d = dr * dc;
        let n = nr * nc;
        let hc = nc * dc;
        let mut perm = vec![0; n * d];
        let mut members = vec![0; n * d];
        for u_lo in 0..nr {
            for v_lo in 0..nc {
                let g = u_lo * nc + v_lo;
                for p in 0..dr {
                    for q in 0..dc {
                        let o = p * dc + q;
                        let hr = (u_lo + p * nr) * hc + (v_lo + q * nc);
                        perm[hr] = g * d + o;
                        members[g * d + o] = hr;
                    }
                }
            }
        }
        Self { perm, members, d, n }
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    /// HR frequency index stored at each permuted position.
    pub fn members(&self) -> &[usize] {
        &self.members
    }

    /// HR frequency indices of group `g`.
    pub fn group(&self, g: usize) -> &[usize] {
        &self.members[g * self.d..(g + 1) * self.d]
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    /// Gathers an HR-ordered sequence into permuted order.
    pub fn permute<T: Copy>(&self, hr: &[T]) -> Vec<T> {
        self.members.iter().map(|&k| hr[k]).collect()
    }

    /// Scatters a permuted sequence back to HR order.
    pub fn unpermute<T: Copy + Default>(&self, permuted: &[T]) -> Vec<T> {
        let mut out = vec![T::default(); permuted.len()];
        for (pos, &k) in self.members.iter().enumerate() {
            out[k] = permuted[pos];
        }
        out
    }
}

pub fn alias_permutation(n_r: usize, n_c: usize, d_r: usize, d_c: usize) -> Result<AliasGroups> {
    if n_r == 0 || n_c == 0 || d_r == 0 || d_c == 0 {
        return param_err("alias_permutation requires positive sizes");
    }
    Ok(AliasGroups::build(n_r, n_c, d_r, d_c))
}

/// First (1-based) index of the size-`d` block holding 1-based index `i`.
pub fn group_base(i: usize, d: usize, total: usize) -> Result<usize> {
    if d == 0 {
        return param_err("group size must be positive");
    }
    if i == 0 || i > total {
        return param_err(format!("index {i} outside 1..={total}"));
    }
    Ok(1 + ((i - 1) / d) * d)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RegularizerShape {
    /// `L = I`, one diagonal of ones.
    Identity,
    /// `L = (D_h; D_v)`, periodic forward differences.
    Gradient,
}

/// Stacked circulant operators `L_1..L_s` with their spectral diagonals.
#[derive(Clone, Debug)]
pub struct RegularizerOperator {
    shape: RegularizerShape,
    rows: usize,
    cols: usize,
    diagonals: Vec<SpectralDiagonal>,
}

impl RegularizerOperator {
    pub fn shape(&self) -> RegularizerShape {
        self.shape
    }

    pub fn grid_shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Number of stacked operators `s`.
    pub fn count(&self) -> usize {
        self.diagonals.len()
    }

    pub fn diagonals(&self) -> &[SpectralDiagonal] {
        &self.diagonals
    }

    /// Spatial application `L x`, one grid per stacked operator.
    pub fn apply(&self, x: &ImageGrid) -> Result<Vec<ImageGrid>> {
        x.check_shape(self.rows, self.cols, "regulariser input")?;
        Ok(match self.shape {
            RegularizerShape::Identity => vec![x.clone()],
            RegularizerShape::Gradient => vec![forward_diff_h(x), forward_diff_v(x)],
        })
    }
}

/// `x(i, j+1) - x(i, j)` with periodic wrap.
pub fn forward_diff_h(x: &ImageGrid) -> ImageGrid {
    let c = x.cols();
    ImageGrid::from_fn(x.rows(), c, |i, j| x.get(i, (j + 1) % c) - x.get(i, j))
}

/// `x(i+1, j) - x(i, j)` with periodic wrap.
pub fn forward_diff_v(x: &ImageGrid) -> ImageGrid {
    let r = x.rows();
    ImageGrid::from_fn(r, x.cols(), |i, j| x.get((i + 1) % r, j) - x.get(i, j))
}

pub fn build_regularizer(
    shape: RegularizerShape,
    rows: usize,
    cols: usize,
) -> Result<RegularizerOperator> {
    if rows == 0 || cols == 0 {
        return param_err("regulariser grid must be non-empty");
    }
    let diagonals = match shape {
        RegularizerShape::Identity => {
            vec![SpectralDiagonal::filled(rows, cols, Complex64::new(1.0, 0.0))]
        }
        RegularizerShape::Gradient => {
            // Impulse responses of the two difference stencils.
            let mut h = ImageGrid::zeros(rows, cols);
            h.set(0, 0, -1.0);
            let hc = h.get(0, (cols - 1) % cols) + 1.0;
            h.set(0, (cols - 1) % cols, hc);
            let mut v = ImageGrid::zeros(rows, cols);
            v.set(0, 0, -1.0);
            let vr = v.get((rows - 1) % rows, 0) + 1.0;
            v.set((rows - 1) % rows, 0, vr);
            vec![dft2(&h)?, dft2(&v)?]
        }
    };
    Ok(RegularizerOperator { shape, rows, cols, diagonals })
}
