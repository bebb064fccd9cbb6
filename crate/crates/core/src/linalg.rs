//! Banded storage with periodic wrap and its direct solver.
//!
//! The Hermite basis couples each node to itself and its two neighbours,
//! so every row has at most seven nonzeros at periodic offsets `-3..=3`.
//! The solver factors the strictly banded part with partial pivoting and
//! folds the wrap-around entries back in through a Woodbury correction of
//! rank at most six.

use crate::error::{Error, Result};

/// Scalar half-bandwidth of all scheme operators.
pub const HALF_BANDWIDTH: usize = 3;
const WIDTH: usize = 2 * HALF_BANDWIDTH + 1;

/// Square matrix whose entries live at periodic offsets `-3..=3` from the
/// diagonal. Entries whose column wraps around the ends of the index range
/// form the two corner blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedPeriodicMatrix {
    n: usize,
    bands: Vec<[f64; WIDTH]>,
}

impl BandedPeriodicMatrix {
    pub fn zeros(n: usize) -> Self {
        assert!(
            n > 2 * HALF_BANDWIDTH,
            "periodic band storage needs n > {}",
            2 * HALF_BANDWIDTH
        );
        Self {
            n,
            bands: vec![[0.0; WIDTH]; n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.bands[i][HALF_BANDWIDTH] = 1.0;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn half_bandwidth(&self) -> usize {
        HALF_BANDWIDTH
    }

    /// Signed periodic offset `j - i` reduced into `-n/2..n/2`.
    fn offset(&self, i: usize, j: usize) -> isize {
        let n = self.n as isize;
        let mut d = j as isize - i as isize;
        if d > n / 2 {
            d -= n;
        } else if d < -(n / 2) {
            d += n;
        }
        d
    }

    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let d = self.offset(i, j);
        (d.unsigned_abs() <= HALF_BANDWIDTH).then(|| (d + HALF_BANDWIDTH as isize) as usize)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |k| self.bands[i][k])
    }

    /// Accumulates into entry `(i, j)`; panics outside the band.
    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        let k = self
            .slot(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) outside periodic band"));
        self.bands[i][k] += value;
    }

    /// Column index of band slot `k` in row `i`.
    fn column(&self, i: usize, k: usize) -> usize {
        let n = self.n as isize;
        (i as isize + k as isize - HALF_BANDWIDTH as isize).rem_euclid(n) as usize
    }

    /// Nonzero-pattern entries of row `i` as `(column, value)`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..WIDTH).map(move |k| (self.column(i, k), self.bands[i][k]))
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| self.row(i).map(|(j, a)| a * x[j]).sum())
            .collect()
    }

    /// `xᵀ M y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| x[i] * self.row(i).map(|(j, a)| a * y[j]).sum::<f64>())
            .sum()
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, s: f64, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        let mut out = self.clone();
        for (a, b) in out.bands.iter_mut().zip(&other.bands) {
            for k in 0..WIDTH {
                a[k] += s * b[k];
            }
        }
        out
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n;
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for (j, a) in self.row(i) {
                d[i * n + j] += a;
            }
        }
        d
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        self.bands
            .iter()
            .map(|r| r.iter().map(|a| a.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for (j, a) in self.row(i) {
                worst = worst.max((a - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn factor(&self) -> Result<PeriodicLu> {
        PeriodicLu::new(self)
    }
}

/// Banded LU with partial pivoting of a non-wrapping band matrix.
#[derive(Debug, Clone)]
struct BandLu {
    n: usize,
    kl: usize,
    width: usize,
    // Row i stores columns i - kl ..= i + kl + ku.
    ab: Vec<f64>,
    pivots: Vec<usize>,
}

impl BandLu {
    fn from_rows<F: Fn(usize, usize) -> f64>(n: usize, kl: usize, ku: usize, entry: F) -> Result<Self> {
        let width = 2 * kl + ku + 1;
        let mut lu = Self {
            n,
            kl,
            width,
            ab: vec![0.0; n * width],
            pivots: vec![0; n],
        };
        for i in 0..n {
            let lo = i.saturating_sub(kl);
            let hi = (i + ku).min(n - 1);
            for j in lo..=hi {
                *lu.at(i, j) = entry(i, j);
            }
        }
        lu.decompose(ku)?;
        Ok(lu)
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.width - 1 - self.kl);
        i * self.width + (j + self.kl - i)
    }

    #[inline]
    fn at(&mut self, i: usize, j: usize) -> &mut f64 {
        let k = self.idx(i, j);
        &mut self.ab[k]
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        self.ab[self.idx(i, j)]
    }

    fn decompose(&mut self, ku: usize) -> Result<()> {
        let (n, kl) = (self.n, self.kl);
        let scale = self.ab.iter().fold(0.0_f64, |m, a| m.max(a.abs()));
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let last_col = (k + kl + ku).min(n - 1);
            let mut p = k;
            let mut best = self.get(k, k).abs();
            for i in k + 1..=last_row {
                let v = self.get(i, k).abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= f64::EPSILON * scale * n as f64 || best == 0.0 {
                return Err(Error::SingularMatrix {
                    column: k,
                    pivot: best,
                });
            }
            self.pivots[k] = p;
            if p != k {
                for j in k..=last_col {
                    let a = self.idx(k, j);
                    let b = self.idx(p, j);
                    self.ab.swap(a, b);
                }
            }
            let diag = self.get(k, k);
            for i in k + 1..=last_row {
                let l = self.get(i, k) / diag;
                *self.at(i, k) = l;
                if l != 0.0 {
                    for j in k + 1..=last_col {
                        let u = self.get(k, j);
                        *self.at(i, j) -= l * u;
                    }
                }
            }
        }
        Ok(())
    }

    fn solve_in_place(&self, b: &mut [f64]) {
        let (n, kl) = (self.n, self.kl);
        let ku_total = self.width - 1 - kl;
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != 0.0 {
                for i in k + 1..=(k + kl).min(n - 1) {
                    b[i] -= self.get(i, k) * bk;
                }
            }
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in i + 1..=(i + ku_total).min(n - 1) {
                s -= self.get(i, j) * b[j];
            }
            b[i] = s / self.get(i, i);
        }
    }
}

/// Dense LU with partial pivoting; used as the fallback path.
#[derive(Debug, Clone)]
pub struct DenseLu {
    n: usize,
    lu: Vec<f64>,
    pivots: Vec<usize>,
}

impl DenseLu {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// Factors a row-major `n × n` matrix.
    pub fn new(n: usize, mut a: Vec<f64>) -> Result<Self> {
        assert_eq!(a.len(), n * n);
        let scale = a.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let mut pivots = vec![0; n];
        for k in 0..n {
            let (p, best) = (k..n)
                .map(|i| (i, a[i * n + k].abs()))
                .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if best <= f64::EPSILON * scale * n as f64 || best == 0.0 {
                return Err(Error::SingularMatrix {
                    column: k,
                    pivot: best,
                });
            }
            pivots[k] = p;
            if p != k {
                // Multipliers stay put so the solve can interleave swaps.
                for j in k..n {
                    a.swap(k * n + j, p * n + j);
                }
            }
            let d = a[k * n + k];
            for i in k + 1..n {
                let l = a[i * n + k] / d;
                a[i * n + k] = l;
                if l != 0.0 {
                    for j in k + 1..n {
                        a[i * n + j] -= l * a[k * n + j];
                    }
                }
            }
        }
        Ok(Self { n, lu: a, pivots })
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        for k in 0..n {
            b.swap(k, self.pivots[k]);
            for i in k + 1..n {
                b[i] -= self.lu[i * n + k] * b[k];
            }
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in i + 1..n {
                s -= self.lu[i * n + j] * b[j];
            }
            b[i] = s / self.lu[i * n + i];
        }
    }
}

/// Largest system solved by dense LU when the banded path breaks down.
pub const DENSE_FALLBACK_LIMIT: usize = 512;

#[derive(Debug, Clone)]
enum Factorization {
    Woodbury {
        band: BandLu,
        /// Rows carrying wrap-around entries.
        rows: Vec<usize>,
        /// Wrap-around entries of those rows as `(column, value)`.
        wrap: Vec<Vec<(usize, f64)>>,
        /// Columns `B⁻¹ e_r`, one per wrap row.
        binv_u: Vec<Vec<f64>>,
        capacitance: DenseLu,
    },
    Dense(DenseLu),
}

/// Factorization of a [`BandedPeriodicMatrix`], reusable across solves.
#[derive(Debug, Clone)]
pub struct PeriodicLu {
    n: usize,
    inner: Factorization,
}

impl PeriodicLu {
    pub fn new(m: &BandedPeriodicMatrix) -> Result<Self> {
        match Self::woodbury(m) {
            Ok(inner) => Ok(Self { n: m.n, inner }),
            Err(e) if m.n <= DENSE_FALLBACK_LIMIT => {
                log::debug!("banded factorization failed ({e}); using dense LU");
                Ok(Self {
                    n: m.n,
                    inner: Factorization::Dense(DenseLu::new(m.n, m.to_dense())?),
                })
            }
            Err(e) => Err(e),
        }
    }

    fn woodbury(m: &BandedPeriodicMatrix) -> Result<Factorization> {
        let n = m.n;
        let h = HALF_BANDWIDTH as isize;
        let mut rows = Vec::new();
        let mut wrap = Vec::new();
        for i in 0..n {
            let mut entries = Vec::new();
            for k in 0..WIDTH {
                let unwrapped = i as isize + k as isize - h;
                let a = m.bands[i][k];
                if (unwrapped < 0 || unwrapped >= n as isize) && a != 0.0 {
                    entries.push((m.column(i, k), a));
                }
            }
            if !entries.is_empty() {
                rows.push(i);
                wrap.push(entries);
            }
        }
        let band = BandLu::from_rows(n, HALF_BANDWIDTH, HALF_BANDWIDTH, |i, j| {
            let d = j as isize - i as isize;
            m.bands[i][(d + h) as usize]
        })?;
        let r = rows.len();
        let mut binv_u = Vec::with_capacity(r);
        for &row in &rows {
            let mut e = vec![0.0; n];
            e[row] = 1.0;
            band.solve_in_place(&mut e);
            binv_u.push(e);
        }
        // C = I + Z B⁻¹ U
        let mut cap = vec![0.0; r * r];
        for a in 0..r {
            for b in 0..r {
                let z: f64 = wrap[a].iter().map(|&(j, v)| v * binv_u[b][j]).sum();
                cap[a * r + b] = z + if a == b { 1.0 } else { 0.0 };
            }
        }
        let capacitance = DenseLu::new(r.max(1), if r == 0 { vec![1.0] } else { cap })?;
        Ok(Factorization::Woodbury {
            band,
            rows,
            wrap,
            binv_u,
            capacitance,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        match &self.inner {
            Factorization::Dense(lu) => lu.solve_in_place(x),
            Factorization::Woodbury {
                band,
                rows,
                wrap,
                binv_u,
                capacitance,
            } => {
                band.solve_in_place(x);
                if rows.is_empty() {
                    return;
                }
                let mut t: Vec<f64> = wrap
                    .iter()
                    .map(|entries| entries.iter().map(|&(j, v)| v * x[j]).sum())
                    .collect();
                capacitance.solve_in_place(&mut t);
                for (col, s) in binv_u.iter().zip(&t) {
                    for (xi, ci) in x.iter_mut().zip(col) {
                        *xi -= s * ci;
                    }
                }
            }
        }
    }
}

/// Solves `lhs · x = rhs` with a one-off factorization.
pub fn solve_banded(lhs: &BandedPeriodicMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    if rhs.len() != lhs.dim() {
        return Err(Error::CoefficientLength {
            got: rhs.len(),
            expected: lhs.dim(),
        });
    }
    Ok(lhs.factor()?.solve(rhs))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
