//! Block-banded generators acting on stacked charge-resolved states.
//!
//! A stacked state is the concatenation `(vec ρ_0, …, vec ρ_{M−1})` of the
//! column-stacked cell matrices. The generator couples cell `col` into cell
//! `row = col + offset` through one superoperator per offset; cells outside
//! `[0, M)` do not exist, which is exactly an absorbing boundary.

use crate::error::{Error, Result};
use crate::operator::{vec_trace, CMatrix, Superoperator, C64};

/// Column-major `n × n` block stored flat.
type Block = Vec<C64>;

fn to_block(s: &CMatrix) -> Block {
    s.as_slice().to_vec()
}

/// `y += A x` for a flat column-major block.
#[inline]
fn gemv_add(a: &[C64], n: usize, x: &[C64], y: &mut [C64]) {
    for (col, &xc) in x.iter().enumerate().take(n) {
        if xc == C64::new(0.0, 0.0) {
            continue;
        }
        let column = &a[col * n..(col + 1) * n];
        for (yr, &arc) in y.iter_mut().zip(column) {
            *yr += arc * xc;
        }
    }
}

/// `y -= A x`.
#[inline]
fn gemv_sub(a: &[C64], n: usize, x: &[C64], y: &mut [C64]) {
    for (col, &xc) in x.iter().enumerate().take(n) {
        let column = &a[col * n..(col + 1) * n];
        for (yr, &arc) in y.iter_mut().zip(column) {
            *yr -= arc * xc;
        }
    }
}

/// `A B`.
fn gemm(a: &[C64], b: &[C64], n: usize) -> Block {
    let mut out = vec![C64::new(0.0, 0.0); n * n];
    for col in 0..n {
        gemv_add(a, n, &b[col * n..(col + 1) * n], &mut out[col * n..(col + 1) * n]);
    }
    out
}

#[derive(Clone, Debug)]
pub struct Band {
    /// `row − col` of every block in this band.
    pub offset: isize,
    pub block: Superoperator,
}

#[derive(Clone, Debug)]
pub struct BlockGenerator {
    d: usize,
    cells: usize,
    cell_weight: f64,
    bands: Vec<Band>,
    corrections: Vec<(usize, Superoperator)>,
    flat: Vec<(isize, Block, Vec<C64>)>,
}

impl BlockGenerator {
    /// Empty generator on `cells` cells of `d × d` matrices. `cell_weight`
    /// is the quadrature weight of one cell (1 for integer charges, `ΔN` on a grid).
    pub fn new(d: usize, cells: usize, cell_weight: f64) -> Self {
        Self {
            d,
            cells,
            cell_weight,
            bands: Vec::new(),
            corrections: Vec::new(),
            flat: Vec::new(),
        }
    }

    /// Adds `block` to every `(row, row − offset)` position inside the window.
    pub fn add_band(&mut self, offset: isize, block: Superoperator) {
        match self.bands.iter_mut().find(|b| b.offset == offset) {
            Some(b) => b.block = &b.block + &block,
            None => {
                self.bands.push(Band { offset, block });
                self.bands.sort_by_key(|b| b.offset);
            }
        }
        self.rebuild_flat();
    }

    /// Adds `block` to the diagonal block of a single cell.
    pub(crate) fn add_diagonal_correction(&mut self, cell: usize, block: Superoperator) {
        self.corrections.push((cell, block));
    }

    fn rebuild_flat(&mut self) {
        self.flat = self
            .bands
            .iter()
            .map(|b| (b.offset, to_block(b.block.matrix()), b.block.trace_row()))
            .collect();
    }

    pub fn hilbert_dim(&self) -> usize {
        self.d
    }

    /// `d²`, the length of one vectorized cell.
    pub fn block_size(&self) -> usize {
        self.d * self.d
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn cell_weight(&self) -> f64 {
        self.cell_weight
    }

    /// Total length of a stacked state.
    pub fn len(&self) -> usize {
        self.cells * self.block_size()
    }

    pub fn is_empty(&self) -> bool {
        self.cells == 0
    }

    pub fn bands(&self) -> &[Band] {
        &self.bands
    }

    pub fn lower_bandwidth(&self) -> usize {
        self.bands.iter().map(|b| b.offset.max(0) as usize).max().unwrap_or(0)
    }

    pub fn upper_bandwidth(&self) -> usize {
        self.bands.iter().map(|b| (-b.offset).max(0) as usize).max().unwrap_or(0)
    }

    /// The `(row, col)` block, or `None` when it is structurally zero.
    pub fn block(&self, row: usize, col: usize) -> Option<Superoperator> {
        let offset = row as isize - col as isize;
        let mut out: Option<Superoperator> = self
            .bands
            .iter()
            .find(|b| b.offset == offset)
            .map(|b| b.block.clone());
        if row == col {
            for (cell, corr) in &self.corrections {
                if *cell == row {
                    out = Some(match out {
                        Some(b) => &b + corr,
                        None => corr.clone(),
                    });
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> CMatrix {
        let n = self.block_size();
        let mut m = CMatrix::zeros(self.len(), self.len());
        for row in 0..self.cells {
            for col in 0..self.cells {
                if let Some(b) = self.block(row, col) {
                    m.view_mut((row * n, col * n), (n, n)).copy_from(b.matrix());
                }
            }
        }
        m
    }

    /// `V x`.
    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        let n = self.block_size();
        let mut y = vec![C64::new(0.0, 0.0); x.len()];
        for (offset, block, _) in &self.flat {
            for col in 0..self.cells {
                let row = col as isize + offset;
                if row < 0 || row >= self.cells as isize {
                    continue;
                }
                let row = row as usize;
                gemv_add(block, n, &x[col * n..(col + 1) * n], &mut y[row * n..(row + 1) * n]);
            }
        }
        for (cell, corr) in &self.corrections {
            gemv_add(
                corr.matrix().as_slice(),
                n,
                &x[cell * n..(cell + 1) * n],
                &mut y[cell * n..(cell + 1) * n],
            );
        }
        y
    }

    /// Per-cell traces `tr ρ_N` (no quadrature weight).
    pub fn cell_traces(&self, x: &[C64]) -> Vec<f64> {
        let n = self.block_size();
        (0..self.cells)
            .map(|i| vec_trace(&x[i * n..(i + 1) * n], self.d).re)
            .collect()
    }

    /// `G = w Σ_N tr ρ_N`.
    pub fn survival(&self, x: &[C64]) -> f64 {
        self.cell_weight * self.cell_traces(x).iter().sum::<f64>()
    }

    /// Instantaneous weight-loss rate `−dG/dt = −w Σ_N tr (V x)_N`.
    pub fn loss_rate(&self, x: &[C64]) -> f64 {
        let y = self.apply(x);
        -self.survival(&y)
    }

    /// Weight leaving through the `(lower, upper)` edges per unit time: every
    /// band block whose target cell lies outside the window contributes
    /// `w tr(B ρ_col)`. Valid for generators without diagonal corrections.
    pub fn boundary_flux(&self, x: &[C64]) -> (f64, f64) {
        let n = self.block_size();
        let (mut lower, mut upper) = (0.0, 0.0);
        for (offset, _, trace_row) in &self.flat {
            for col in 0..self.cells {
                let row = col as isize + offset;
                if (0..self.cells as isize).contains(&row) {
                    continue;
                }
                let t: C64 = trace_row
                    .iter()
                    .zip(&x[col * n..(col + 1) * n])
                    .map(|(a, b)| a * b)
                    .sum();
                if row < 0 {
                    lower += t.re;
                } else {
                    upper += t.re;
                }
            }
        }
        (self.cell_weight * lower, self.cell_weight * upper)
    }

    /// Block LU factorization of `scale·V − shift·1`.
    pub fn shifted_lu(&self, scale: C64, shift: C64) -> Result<BandedLu> {
        BandedLu::factor(self, scale, shift)
    }
}

/// LU factorization of a block-banded matrix without pivoting across blocks.
///
/// Pivot blocks are inverted densely; fill-in stays inside the band.
#[derive(Clone, Debug)]
pub struct BandedLu {
    n: usize,
    cells: usize,
    p: usize,
    q: usize,
    lower: Vec<Block>,
    diag_inv: Vec<Block>,
    upper: Vec<Block>,
}

impl BandedLu {
    fn factor(gen: &BlockGenerator, scale: C64, shift: C64) -> Result<Self> {
        let n = gen.block_size();
        let m = gen.cells();
        let p = gen.lower_bandwidth();
        let q = gen.upper_bandwidth();
        let zero = vec![C64::new(0.0, 0.0); n * n];
        let mut lower = vec![zero.clone(); m * p];
        let mut upper = vec![zero.clone(); m * q];
        let mut diag = vec![zero.clone(); m];

        for band in gen.bands() {
            let blk: Block = band.block.matrix().iter().map(|z| z * scale).collect();
            for row in 0..m {
                let col = row as isize - band.offset;
                if col < 0 || col >= m as isize {
                    continue;
                }
                let target = match band.offset {
                    0 => &mut diag[row],
                    o if o > 0 => &mut lower[row * p + (o as usize - 1)],
                    o => &mut upper[row * q + ((-o) as usize - 1)],
                };
                for (t, b) in target.iter_mut().zip(&blk) {
                    *t += b;
                }
            }
        }
        for (cell, corr) in &gen.corrections {
            for (t, b) in diag[*cell].iter_mut().zip(corr.matrix().iter()) {
                *t += b * scale;
            }
        }
        for blk in diag.iter_mut() {
            for i in 0..n {
                blk[i * n + i] -= shift;
            }
        }

        let mut diag_inv = Vec::with_capacity(m);
        for j in 0..m {
            let inv = CMatrix::from_column_slice(n, n, &diag[j])
                .try_inverse()
                .filter(|inv| inv.iter().all(|z| z.re.is_finite() && z.im.is_finite()))
                .ok_or(Error::SingularBlock { cell: j })?;
            let inv = to_block(&inv);
            for i in (j + 1)..(j + p + 1).min(m) {
                let k = i - j;
                let lik = gemm(&lower[i * p + k - 1], &inv, n);
                for l in (j + 1)..(j + q + 1).min(m) {
                    let ajl = &upper[j * q + (l - j - 1)];
                    let prod = gemm(&lik, ajl, n);
                    let target = if l < i {
                        &mut lower[i * p + (i - l - 1)]
                    } else if l == i {
                        &mut diag[i]
                    } else {
                        &mut upper[i * q + (l - i - 1)]
                    };
                    for (t, v) in target.iter_mut().zip(&prod) {
                        *t -= v;
                    }
                }
                lower[i * p + k - 1] = lik;
            }
            diag_inv.push(inv);
        }
        Ok(Self {
            n,
            cells: m,
            p,
            q,
            lower,
            diag_inv,
            upper,
        })
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [C64]) {
        let n = self.n;
        for i in 0..self.cells {
            let (done, rest) = b.split_at_mut(i * n);
            let yi = &mut rest[..n];
            for k in 1..=self.p.min(i) {
                gemv_sub(&self.lower[i * self.p + k - 1], n, &done[(i - k) * n..(i - k + 1) * n], yi);
            }
        }
        let mut tmp = vec![C64::new(0.0, 0.0); n];
        for i in (0..self.cells).rev() {
            let (head, tail) = b.split_at_mut((i + 1) * n);
            let yi = &mut head[i * n..];
            for k in 1..=self.q.min(self.cells - 1 - i) {
                gemv_sub(&self.upper[i * self.q + k - 1], n, &tail[(k - 1) * n..k * n], yi);
            }
            tmp.iter_mut().for_each(|t| *t = C64::new(0.0, 0.0));
            gemv_add(&self.diag_inv[i], n, yi, &mut tmp);
            yi.copy_from_slice(&tmp);
        }
    }

    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}
