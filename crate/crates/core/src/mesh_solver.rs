//! Column-by-column assembly of the N x M square-mesh scattering matrix.
//!
//! Each column j contributes a transfer T^j = Diag(H_0..H_N) * Diag(bdry, V_1..V_N, bdry)
//! acting on the interleaved port vector [a_0^I, a_0^O, a_1^I, a_1^O, ...]. The
//! global transfer is T = T^{M-1} ... T^1 T^0 and the block-sorted scattering
//! matrix is T* = P^T T P, from which port responses and the effective forward
//! map G* = T11* - T12* T22*^-1 T21* follow.
//!
//! The published V-entry table contains an index typo (it assigns V41 twice);
//! the entries used here are re-derived from the underlying scatter relation
//! and regression-tested by round-tripping that relation on random data.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::compact_model::{
    tbu_transfer_nonideal, Complex2x2, PhaseShifter, PhysicalConstants, TbuParams,
};
use crate::error::{Error, Result};

/// Hard singularity tolerance on |F12| of a vertical TBU.
pub const SINGULAR_TOL: f64 = 1e-8;
/// Soft warning band on |F12|: below this the V block is ill-conditioned.
pub const SOFT_SINGULAR_BAND: f64 = 1e-3;
/// Condition-number threshold above which T22* is flagged ill-conditioned.
pub const ILL_CONDITION_THRESHOLD: f64 = 1e12;

pub type CMatrix = DMatrix<Complex64>;
/// Complex amplitudes, one per port row index 0..2N+1.
pub type WaveVector = DVector<Complex64>;

/// Largest entrywise modulus of a complex matrix or vector.
pub fn max_abs<R, C, S>(m: &nalgebra::Matrix<Complex64, R, C, S>) -> f64
where
    R: nalgebra::Dim,
    C: nalgebra::Dim,
    S: nalgebra::RawStorage<Complex64, R, C>,
{
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Which orientation a TBU has inside the square mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TbuKind {
    Vertical,
    Horizontal,
}

/// Port side: `A` on the left edge of a vertical TBU, `B` on the right.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

/// Propagation direction at a port: into (`I`) or out of (`O`) the vertical TBU.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    I,
    O,
}

/// One physical port of the mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortId {
    pub side: Side,
    pub row: usize,
    pub col: usize,
    pub direction: Direction,
}

impl PortId {
    pub fn new(side: Side, row: usize, col: usize, direction: Direction) -> Self {
        Self {
            side,
            row,
            col,
            direction,
        }
    }

    /// Compact label, e.g. `A(2,5)I`.
    pub fn label(&self) -> String {
        format!(
            "{}({},{}){}",
            match self.side {
                Side::A => "A",
                Side::B => "B",
            },
            self.row,
            self.col,
            match self.direction {
                Direction::I => "I",
                Direction::O => "O",
            }
        )
    }
}

impl std::fmt::Display for PortId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.label())
    }
}

/// Index of one tunable phase inside the canonical parameter vector.
///
/// Canonical order: all vertical thetas row-major, then all vertical phis,
/// then all horizontal thetas, then all horizontal phis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamIndex {
    pub kind: TbuKind,
    pub row: usize,
    pub col: usize,
    pub which: PhaseShifter,
    pub flat: usize,
}

impl ParamIndex {
    pub fn from_flat(flat: usize, n_rows: usize, n_cols: usize) -> Result<Self> {
        let nv = n_rows * n_cols;
        let nh = (n_rows + 1) * n_cols;
        let total = 2 * (nv + nh);
        if flat >= total {
            return Err(Error::InvalidParameter(format!(
                "flat index {flat} out of range for {n_rows}x{n_cols} mesh ({total} params)"
            )));
        }
        let (kind, which, local) = if flat < nv {
            (TbuKind::Vertical, PhaseShifter::Theta, flat)
        } else if flat < 2 * nv {
            (TbuKind::Vertical, PhaseShifter::Phi, flat - nv)
        } else if flat < 2 * nv + nh {
            (TbuKind::Horizontal, PhaseShifter::Theta, flat - 2 * nv)
        } else {
            (TbuKind::Horizontal, PhaseShifter::Phi, flat - 2 * nv - nh)
        };
        Ok(Self {
            kind,
            row: local / n_cols,
            col: local % n_cols,
            which,
            flat,
        })
    }

    pub fn to_flat(
        kind: TbuKind,
        row: usize,
        col: usize,
        which: PhaseShifter,
        n_rows: usize,
        n_cols: usize,
    ) -> usize {
        let nv = n_rows * n_cols;
        let nh = (n_rows + 1) * n_cols;
        let local = row * n_cols + col;
        match (kind, which) {
            (TbuKind::Vertical, PhaseShifter::Theta) => local,
            (TbuKind::Vertical, PhaseShifter::Phi) => nv + local,
            (TbuKind::Horizontal, PhaseShifter::Theta) => 2 * nv + local,
            (TbuKind::Horizontal, PhaseShifter::Phi) => 2 * nv + nh + local,
        }
    }

    /// Every parameter of an `n_rows x n_cols` mesh in canonical order.
    pub fn all(n_rows: usize, n_cols: usize) -> Vec<ParamIndex> {
        let total = 2 * (2 * n_rows + 1) * n_cols;
        (0..total)
            .map(|f| ParamIndex::from_flat(f, n_rows, n_cols).expect("in range"))
            .collect()
    }
}

/// Full description of an N x M square mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshSpec {
    pub n_rows: usize,
    pub n_cols: usize,
    /// N*M vertical TBUs, row-major.
    pub vertical_tbus: Vec<TbuParams>,
    /// (N+1)*M horizontal TBUs, row-major.
    pub horizontal_tbus: Vec<TbuParams>,
    pub constants: PhysicalConstants,
}

impl MeshSpec {
    /// Mesh with every TBU set to the same nominal parameters.
    pub fn uniform(
        n_rows: usize,
        n_cols: usize,
        tbu: TbuParams,
        constants: PhysicalConstants,
    ) -> Result<Self> {
        if n_rows == 0 || n_cols == 0 {
            return Err(Error::InvalidParameter(
                "mesh must have at least one row and one column".into(),
            ));
        }
        constants.validate()?;
        Ok(Self {
            n_rows,
            n_cols,
            vertical_tbus: vec![tbu; n_rows * n_cols],
            horizontal_tbus: vec![tbu; (n_rows + 1) * n_cols],
            constants,
        })
    }

    pub fn vertical(&self, row: usize, col: usize) -> &TbuParams {
        &self.vertical_tbus[row * self.n_cols + col]
    }

    pub fn horizontal(&self, row: usize, col: usize) -> &TbuParams {
        &self.horizontal_tbus[row * self.n_cols + col]
    }

    /// Number of tunable phases: 2(2N+1)M.
    pub fn param_count(&self) -> usize {
        2 * (2 * self.n_rows + 1) * self.n_cols
    }

    /// Number of port rows: 2N+2.
    pub fn port_rows(&self) -> usize {
        2 * self.n_rows + 2
    }

    /// Canonical parameter vector (heatmap order).
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        out.extend(self.vertical_tbus.iter().map(|t| t.theta));
        out.extend(self.vertical_tbus.iter().map(|t| t.phi));
        out.extend(self.horizontal_tbus.iter().map(|t| t.theta));
        out.extend(self.horizontal_tbus.iter().map(|t| t.phi));
        out
    }

    /// Overwrite all phases from a canonical parameter vector.
    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        let nv = self.vertical_tbus.len();
        let nh = self.horizontal_tbus.len();
        for (i, t) in self.vertical_tbus.iter_mut().enumerate() {
            t.set_phases(params[i], params[nv + i]);
        }
        for (i, t) in self.horizontal_tbus.iter_mut().enumerate() {
            t.set_phases(params[2 * nv + i], params[2 * nv + nh + i]);
        }
        Ok(())
    }

    pub fn set_param(&mut self, p: &ParamIndex, value: f64) {
        let tbu = match p.kind {
            TbuKind::Vertical => &mut self.vertical_tbus[p.row * self.n_cols + p.col],
            TbuKind::Horizontal => &mut self.horizontal_tbus[p.row * self.n_cols + p.col],
        };
        match p.which {
            PhaseShifter::Theta => tbu.set_phases(value, tbu.phi),
            PhaseShifter::Phi => tbu.set_phases(tbu.theta, value),
        }
    }

    pub fn get_param(&self, p: &ParamIndex) -> f64 {
        let tbu = match p.kind {
            TbuKind::Vertical => self.vertical(p.row, p.col),
            TbuKind::Horizontal => self.horizontal(p.row, p.col),
        };
        match p.which {
            PhaseShifter::Theta => tbu.theta,
            PhaseShifter::Phi => tbu.phi,
        }
    }

    /// Smallest |F12| over all vertical TBUs at `omega` (bar-state margin).
    pub fn min_vertical_f12(&self, omega: f64) -> f64 {
        let mut min = f64::INFINITY;
        for t in &self.vertical_tbus {
            let f = tbu_transfer_nonideal(t, &self.constants, omega);
            min = min.min(f.f12.norm());
        }
        min
    }
}

/// Block-sorted global scattering matrix T* together with its T22 factorization.
pub struct GlobalScatter {
    /// (4N+4) x (4N+4), ordering [all I; all O].
    pub t_star: CMatrix,
    /// Number of mesh rows N.
    pub n_rows: usize,
    /// 1-norm condition estimate of T22*.
    pub condition_estimate_t22: f64,
    /// Smallest |F12| among the vertical TBUs that built this matrix.
    pub min_f12_vertical: f64,
    lu_t22: nalgebra::LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl GlobalScatter {
    fn half(&self) -> usize {
        2 * self.n_rows + 2
    }

    pub fn t11(&self) -> CMatrix {
        let h = self.half();
        self.t_star.view((0, 0), (h, h)).into_owned()
    }

    pub fn t12(&self) -> CMatrix {
        let h = self.half();
        self.t_star.view((0, h), (h, h)).into_owned()
    }

    pub fn t21(&self) -> CMatrix {
        let h = self.half();
        self.t_star.view((h, 0), (h, h)).into_owned()
    }

    pub fn t22(&self) -> CMatrix {
        let h = self.half();
        self.t_star.view((h, h), (h, h)).into_owned()
    }

    /// Solve T22* X = RHS against the cached factorization.
    pub fn solve_t22(&self, rhs: &CMatrix) -> Result<CMatrix> {
        self.lu_t22
            .solve(rhs)
            .ok_or_else(|| Error::SolveFailure("T22* is singular".into()))
    }

    /// Solve T22* x = rhs for a single right-hand side.
    pub fn solve_t22_vec(&self, rhs: &WaveVector) -> Result<WaveVector> {
        self.lu_t22
            .solve(rhs)
            .ok_or_else(|| Error::SolveFailure("T22* is singular".into()))
    }

    pub fn is_ill_conditioned(&self) -> bool {
        !self.condition_estimate_t22.is_finite()
            || self.condition_estimate_t22 > ILL_CONDITION_THRESHOLD
    }
}

/// Interleaved-to-blocked permutation, as an index map: `perm[i]` is the
/// interleaved position of blocked position `i`, so (P^T v)[i] = v[perm[i]].
pub fn permutation(port_rows: usize) -> Vec<usize> {
    let mut perm = vec![0usize; 2 * port_rows];
    for n in 0..port_rows {
        perm[n] = 2 * n;
        perm[port_rows + n] = 2 * n + 1;
    }
    perm
}

/// P as an explicit 0/1 matrix (mainly for tests and diagnostics).
pub fn permutation_matrix(port_rows: usize) -> CMatrix {
    let dim = 2 * port_rows;
    let perm = permutation(port_rows);
    let mut p = CMatrix::zeros(dim, dim);
    for (blocked, &inter) in perm.iter().enumerate() {
        p[(inter, blocked)] = Complex64::new(1.0, 0.0);
    }
    p
}

/// Entries of the 4x4 vertical-TBU transform V, derived from the scatter
/// relation of F. Fails when |F12| is below the bar-state tolerance.
pub(crate) fn vertical_entries(f: &Complex2x2) -> Result<[[Complex64; 4]; 4]> {
    let f12_mag = f.f12.norm();
    if f12_mag <= SINGULAR_TOL {
        return Err(Error::SingularBarState {
            row: 0,
            col: 0,
            f12_magnitude: f12_mag,
        });
    }
    let z = Complex64::new(0.0, 0.0);
    let inv = Complex64::new(1.0, 0.0) / f.f12;
    let v11 = -f.f11 * inv;
    let v22 = f.f22 * inv;
    let cross = f.f21 - f.f11 * f.f22 * inv;
    Ok([
        [v11, z, z, inv],
        [z, v22, cross, z],
        [z, inv, v11, z],
        [cross, z, z, v22],
    ])
}

/// Entries of the 4x4 horizontal-TBU transform H.
pub(crate) fn horizontal_entries(f: &Complex2x2) -> [[Complex64; 4]; 4] {
    let z = Complex64::new(0.0, 0.0);
    let det = f.det();
    [
        [z, f.f11, z, f.f12],
        [f.f22 / det, z, -f.f12 / det, z],
        [z, f.f21, z, f.f22],
        [-f.f21 / det, z, f.f11 / det, z],
    ]
}

/// Derivative of the V entries given F and dF/dp (quotient rule on each entry).
pub(crate) fn d_vertical_entries(f: &Complex2x2, df: &Complex2x2) -> [[Complex64; 4]; 4] {
    let z = Complex64::new(0.0, 0.0);
    let inv = Complex64::new(1.0, 0.0) / f.f12;
    let inv2 = inv * inv;
    let dv11 = -(df.f11 * f.f12 - f.f11 * df.f12) * inv2;
    let dv22 = (df.f22 * f.f12 - f.f22 * df.f12) * inv2;
    let dinv = -df.f12 * inv2;
    let dcross = df.f21 - (df.f11 * f.f22 + f.f11 * df.f22) * inv + f.f11 * f.f22 * df.f12 * inv2;
    [
        [dv11, z, z, dinv],
        [z, dv22, dcross, z],
        [z, dinv, dv11, z],
        [dcross, z, z, dv22],
    ]
}

/// Derivative of the H entries given F and dF/dp.
pub(crate) fn d_horizontal_entries(f: &Complex2x2, df: &Complex2x2) -> [[Complex64; 4]; 4] {
    let z = Complex64::new(0.0, 0.0);
    let det = f.det();
    let ddet = df.f11 * f.f22 + f.f11 * df.f22 - df.f12 * f.f21 - f.f12 * df.f21;
    let det2 = det * det;
    let dh21 = (df.f22 * det - f.f22 * ddet) / det2;
    let dh23 = -(df.f12 * det - f.f12 * ddet) / det2;
    let dh41 = -(df.f21 * det - f.f21 * ddet) / det2;
    let dh43 = (df.f11 * det - f.f11 * ddet) / det2;
    [
        [z, df.f11, z, df.f12],
        [dh21, z, dh23, z],
        [z, df.f21, z, df.f22],
        [dh41, z, dh43, z],
    ]
}

fn entries_to_matrix(e: &[[Complex64; 4]; 4]) -> CMatrix {
    CMatrix::from_fn(4, 4, |r, c| e[r][c])
}

/// 4x4 vertical-TBU block V such that the column-local b-vector equals V
/// times the column-local a-vector.
pub fn vertical_block(f: &Complex2x2) -> Result<CMatrix> {
    Ok(entries_to_matrix(&vertical_entries(f)?))
}

/// 4x4 horizontal-TBU block H mapping b-values of column j to a-values of column j+1.
pub fn horizontal_block(f: &Complex2x2) -> CMatrix {
    entries_to_matrix(&horizontal_entries(f))
}

/// 2x2 ideal top/bottom line connection [[0,1],[1,0]].
pub fn boundary_block() -> CMatrix {
    let mut b = CMatrix::zeros(2, 2);
    b[(0, 1)] = Complex64::new(1.0, 0.0);
    b[(1, 0)] = Complex64::new(1.0, 0.0);
    b
}

/// The two block-diagonal factors of one column transfer: `Diag(H_0..H_N)`
/// and `Diag(bdry, V_1..V_N, bdry)`.
pub(crate) fn column_factors(spec: &MeshSpec, j: usize, omega: f64) -> Result<(CMatrix, CMatrix)> {
    let n = spec.n_rows;
    let dim = 4 * n + 4;
    let mut diag_h = CMatrix::zeros(dim, dim);
    let mut diag_v = CMatrix::zeros(dim, dim);

    for i in 0..=n {
        let f = tbu_transfer_nonideal(spec.horizontal(i, j), &spec.constants, omega);
        let h = horizontal_entries(&f);
        for (r, row) in h.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                diag_h[(4 * i + r, 4 * i + c)] = v;
            }
        }
    }

    diag_v[(0, 1)] = Complex64::new(1.0, 0.0);
    diag_v[(1, 0)] = Complex64::new(1.0, 0.0);
    diag_v[(dim - 2, dim - 1)] = Complex64::new(1.0, 0.0);
    diag_v[(dim - 1, dim - 2)] = Complex64::new(1.0, 0.0);
    for r in 0..n {
        let f = tbu_transfer_nonideal(spec.vertical(r, j), &spec.constants, omega);
        let v = vertical_entries(&f).map_err(|e| match e {
            Error::SingularBarState { f12_magnitude, .. } => Error::SingularBarState {
                row: r,
                col: j,
                f12_magnitude,
            },
            other => other,
        })?;
        let off = 2 + 4 * r;
        for (rr, row) in v.iter().enumerate() {
            for (cc, &val) in row.iter().enumerate() {
                diag_v[(off + rr, off + cc)] = val;
            }
        }
    }
    Ok((diag_h, diag_v))
}

/// Transfer matrix T^j of column j: product of the horizontal and vertical
/// block-diagonal factors, mapping column-j port amplitudes to column j+1.
pub fn column_transfer(spec: &MeshSpec, j: usize, omega: f64) -> Result<CMatrix> {
    if j >= spec.n_cols {
        return Err(Error::InvalidParameter(format!(
            "column {j} out of range for M = {}",
            spec.n_cols
        )));
    }
    let (diag_h, diag_v) = column_factors(spec, j, omega)?;
    Ok(&diag_h * &diag_v)
}

/// Apply the interleaved -> blocked similarity: T* = P^T T P.
pub(crate) fn sort_blocks(t: &CMatrix, port_rows: usize) -> CMatrix {
    let perm = permutation(port_rows);
    CMatrix::from_fn(t.nrows(), t.ncols(), |i, j| t[(perm[i], perm[j])])
}

/// Assemble the global scattering matrix at one frequency.
pub fn global_scatter(spec: &MeshSpec, omega: f64) -> Result<GlobalScatter> {
    let mut t = column_transfer(spec, 0, omega)?;
    for j in 1..spec.n_cols {
        t = column_transfer(spec, j, omega)? * t;
    }
    let port_rows = spec.port_rows();
    let t_star = sort_blocks(&t, port_rows);

    let t22 = t_star
        .view((port_rows, port_rows), (port_rows, port_rows))
        .into_owned();
    let norm1_t22 = one_norm(&t22);
    let lu_t22 = t22.lu();
    let condition = match inverse_one_norm(&lu_t22, port_rows) {
        Some(inv_norm) => norm1_t22 * inv_norm,
        None => f64::INFINITY,
    };

    Ok(GlobalScatter {
        t_star,
        n_rows: spec.n_rows,
        condition_estimate_t22: condition,
        min_f12_vertical: spec.min_vertical_f12(omega),
        lu_t22,
    })
}

fn one_norm(m: &CMatrix) -> f64 {
    (0..m.ncols())
        .map(|c| m.column(c).iter().map(|z| z.norm()).sum())
        .fold(0.0, f64::max)
}

/// ||T22^-1||_1 via one solve per unit vector (the blocks are small).
fn inverse_one_norm(
    lu: &nalgebra::LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>,
    dim: usize,
) -> Option<f64> {
    let mut max = 0.0f64;
    for c in 0..dim {
        let mut e = DVector::<Complex64>::zeros(dim);
        e[c] = Complex64::new(1.0, 0.0);
        let x = lu.solve(&e)?;
        let s: f64 = x.iter().map(|z| z.norm()).sum();
        if !s.is_finite() {
            return None;
        }
        max = max.max(s);
    }
    Some(max)
}

/// Solve the two-sided boundary problem: given the forward input at the left
/// and the backward input at the right, return the forward output at the
/// right and the backward output at the left.
pub fn mesh_response(
    gs: &GlobalScatter,
    a0_in: &WaveVector,
    am_out_in: &WaveVector,
) -> Result<(WaveVector, WaveVector)> {
    let h = 2 * gs.n_rows + 2;
    if a0_in.len() != h || am_out_in.len() != h {
        return Err(Error::ShapeMismatch(format!(
            "wave vectors must have {h} entries"
        )));
    }
    let t11 = gs.t11();
    let t12 = gs.t12();
    let t21 = gs.t21();
    let y = gs
        .lu_t22
        .solve(&(&t21 * a0_in))
        .ok_or_else(|| Error::SolveFailure("T22* is singular".into()))?;
    let z = gs
        .lu_t22
        .solve(am_out_in)
        .ok_or_else(|| Error::SolveFailure("T22* is singular".into()))?;
    let a0_out = z - y;
    let am_in = &t11 * a0_in + &t12 * &a0_out;
    Ok((am_in, a0_out))
}

/// Effective forward map G* = T11* - T12* T22*^-1 T21* (a_M^I = G* a_0^I for
/// zero backward input). Computed by solving, never by forming an inverse.
pub fn forward_map(gs: &GlobalScatter) -> Result<CMatrix> {
    let x = gs.solve_t22(&gs.t21())?;
    Ok(gs.t11() - gs.t12() * x)
}

/// Every internal wave amplitude of the mesh, indexed by [`PortId`].
#[derive(Debug, Clone)]
pub struct AmplitudeMap {
    pub n_rows: usize,
    pub n_cols: usize,
    /// Interleaved a-vectors per column 0..=M.
    pub a: Vec<DVector<Complex64>>,
    /// Interleaved b-vectors per column 0..M-1.
    pub b: Vec<DVector<Complex64>>,
}

impl AmplitudeMap {
    pub fn get(&self, port: &PortId) -> Option<Complex64> {
        let idx = 2 * port.row + matches!(port.direction, Direction::O) as usize;
        match port.side {
            Side::A => self.a.get(port.col).and_then(|v| v.get(idx).copied()),
            Side::B => self.b.get(port.col).and_then(|v| v.get(idx).copied()),
        }
    }

    /// All ports with their amplitudes, columns outermost.
    pub fn iter(&self) -> impl Iterator<Item = (PortId, Complex64)> + '_ {
        let rows = 2 * self.n_rows + 2;
        let a_ports = self.a.iter().enumerate().flat_map(move |(col, v)| {
            (0..rows).flat_map(move |row| {
                [
                    (PortId::new(Side::A, row, col, Direction::I), v[2 * row]),
                    (PortId::new(Side::A, row, col, Direction::O), v[2 * row + 1]),
                ]
            })
        });
        let b_ports = self.b.iter().enumerate().flat_map(move |(col, v)| {
            (0..rows).flat_map(move |row| {
                [
                    (PortId::new(Side::B, row, col, Direction::I), v[2 * row]),
                    (PortId::new(Side::B, row, col, Direction::O), v[2 * row + 1]),
                ]
            })
        });
        a_ports.chain(b_ports)
    }

    /// Largest absolute difference over all ports shared with `other`.
    pub fn max_abs_diff(&self, other: &AmplitudeMap) -> f64 {
        let mut max = 0.0f64;
        for (va, vb) in self.a.iter().zip(other.a.iter()) {
            max = max.max(max_abs(&(va - vb)));
        }
        for (va, vb) in self.b.iter().zip(other.b.iter()) {
            max = max.max(max_abs(&(va - vb)));
        }
        max
    }
}

fn interleave(a_in: &WaveVector, a_out: &WaveVector) -> DVector<Complex64> {
    let rows = a_in.len();
    DVector::from_fn(2 * rows, |i, _| {
        if i % 2 == 0 {
            a_in[i / 2]
        } else {
            a_out[i / 2]
        }
    })
}

/// Propagate all internal amplitudes column by column, given the boundary
/// values already computed by [`mesh_response`].
pub fn internal_amplitudes(
    spec: &MeshSpec,
    omega: f64,
    a0_in: &WaveVector,
    a0_out: &WaveVector,
) -> Result<AmplitudeMap> {
    let mut a = Vec::with_capacity(spec.n_cols + 1);
    let mut b = Vec::with_capacity(spec.n_cols);
    a.push(interleave(a0_in, a0_out));
    for j in 0..spec.n_cols {
        let (diag_h, diag_v) = column_factors(spec, j, omega)?;
        let bj = &diag_v * &a[j];
        let aj1 = &diag_h * &bj;
        b.push(bj);
        a.push(aj1);
    }
    Ok(AmplitudeMap {
        n_rows: spec.n_rows,
        n_cols: spec.n_cols,
        a,
        b,
    })
}

/// Independent oracle: assemble one large linear system over every port
/// amplitude directly from the per-TBU scatter relations plus the ideal
/// boundary connections, and solve it densely. No V/H inversion and no
/// column product appear anywhere in this path, so it also works for
/// bar-state vertical TBUs.
pub fn direct_solve(
    spec: &MeshSpec,
    omega: f64,
    a0_in: &WaveVector,
    am_out_in: &WaveVector,
) -> Result<AmplitudeMap> {
    let n = spec.n_rows;
    let m = spec.n_cols;
    let rows = 2 * n + 2;
    if a0_in.len() != rows || am_out_in.len() != rows {
        return Err(Error::ShapeMismatch(format!(
            "wave vectors must have {rows} entries"
        )));
    }
    let a_stride = 2 * rows;
    let a_total = (m + 1) * a_stride;
    let b_total = m * a_stride;
    let dim = a_total + b_total;

    // Unknown layout: a_{n,j}^{I/O} interleaved per column, then b likewise.
    let idx_a = |row: usize, col: usize, out: bool| col * a_stride + 2 * row + out as usize;
    let idx_b =
        |row: usize, col: usize, out: bool| a_total + col * a_stride + 2 * row + out as usize;

    let one = Complex64::new(1.0, 0.0);
    let mut sys = CMatrix::zeros(dim, dim);
    let mut rhs = DVector::<Complex64>::zeros(dim);
    let mut eq = 0usize;

    for j in 0..m {
        for i in 1..=n {
            let f = tbu_transfer_nonideal(spec.vertical(i - 1, j), &spec.constants, omega);
            let (top, bot) = (2 * i - 1, 2 * i);
            // a_bot^O = F11 a_top^I + F12 b_top^I
            sys[(eq, idx_a(bot, j, true))] = one;
            sys[(eq, idx_a(top, j, false))] = -f.f11;
            sys[(eq, idx_b(top, j, false))] = -f.f12;
            eq += 1;
            // b_bot^O = F21 a_top^I + F22 b_top^I
            sys[(eq, idx_b(bot, j, true))] = one;
            sys[(eq, idx_a(top, j, false))] = -f.f21;
            sys[(eq, idx_b(top, j, false))] = -f.f22;
            eq += 1;
            // a_top^O = F11 a_bot^I + F12 b_bot^I
            sys[(eq, idx_a(top, j, true))] = one;
            sys[(eq, idx_a(bot, j, false))] = -f.f11;
            sys[(eq, idx_b(bot, j, false))] = -f.f12;
            eq += 1;
            // b_top^O = F21 a_bot^I + F22 b_bot^I
            sys[(eq, idx_b(top, j, true))] = one;
            sys[(eq, idx_a(bot, j, false))] = -f.f21;
            sys[(eq, idx_b(bot, j, false))] = -f.f22;
            eq += 1;
        }
        for k in [0, 2 * n + 1] {
            // Ideal line: b^I = a^O, b^O = a^I.
            sys[(eq, idx_b(k, j, false))] = one;
            sys[(eq, idx_a(k, j, true))] = -one;
            eq += 1;
            sys[(eq, idx_b(k, j, true))] = one;
            sys[(eq, idx_a(k, j, false))] = -one;
            eq += 1;
        }
        for i in 0..=n {
            let f = tbu_transfer_nonideal(spec.horizontal(i, j), &spec.constants, omega);
            let (top, bot) = (2 * i, 2 * i + 1);
            // a_{top,j+1}^I = F11 b_top^O + F12 b_bot^O
            sys[(eq, idx_a(top, j + 1, false))] = one;
            sys[(eq, idx_b(top, j, true))] = -f.f11;
            sys[(eq, idx_b(bot, j, true))] = -f.f12;
            eq += 1;
            sys[(eq, idx_a(bot, j + 1, false))] = one;
            sys[(eq, idx_b(top, j, true))] = -f.f21;
            sys[(eq, idx_b(bot, j, true))] = -f.f22;
            eq += 1;
            // b_top^I = F11 a_{top,j+1}^O + F12 a_{bot,j+1}^O
            sys[(eq, idx_b(top, j, false))] = one;
            sys[(eq, idx_a(top, j + 1, true))] = -f.f11;
            sys[(eq, idx_a(bot, j + 1, true))] = -f.f12;
            eq += 1;
            sys[(eq, idx_b(bot, j, false))] = one;
            sys[(eq, idx_a(top, j + 1, true))] = -f.f21;
            sys[(eq, idx_a(bot, j + 1, true))] = -f.f22;
            eq += 1;
        }
    }
    for row in 0..rows {
        sys[(eq, idx_a(row, 0, false))] = one;
        rhs[eq] = a0_in[row];
        eq += 1;
        sys[(eq, idx_a(row, m, true))] = one;
        rhs[eq] = am_out_in[row];
        eq += 1;
    }
    debug_assert_eq!(eq, dim);

    let solution = sys
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::SolveFailure("direct system is singular".into()))?;

    let mut a = Vec::with_capacity(m + 1);
    for j in 0..=m {
        a.push(DVector::from_fn(a_stride, |i, _| {
            solution[j * a_stride + i]
        }));
    }
    let mut b = Vec::with_capacity(m);
    for j in 0..m {
        b.push(DVector::from_fn(a_stride, |i, _| {
            solution[a_total + j * a_stride + i]
        }));
    }
    Ok(AmplitudeMap {
        n_rows: n,
        n_cols: m,
        a,
        b,
    })
}

/// Serialized mesh state: canonical parameter vector plus per-TBU physicals.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeshState {
    pub schema_version: u32,
    pub n_rows: usize,
    pub n_cols: usize,
    pub constants: PhysicalConstants,
    /// Canonical phase vector, length 2(2N+1)M.
    pub params: Vec<f64>,
    /// Per-TBU amplitude transmissions, vertical row-major then horizontal.
    pub alphas: Vec<f64>,
    /// Per-TBU lumped lengths (m), same ordering.
    pub lengths_m: Vec<f64>,
    pub eta1s: Vec<f64>,
    pub eta2s: Vec<f64>,
}

impl MeshState {
    pub fn from_spec(spec: &MeshSpec) -> Self {
        let tbus = spec.vertical_tbus.iter().chain(&spec.horizontal_tbus);
        Self {
            schema_version: 1,
            n_rows: spec.n_rows,
            n_cols: spec.n_cols,
            constants: spec.constants,
            params: spec.params(),
            alphas: tbus.clone().map(|t| t.alpha).collect(),
            lengths_m: tbus.clone().map(|t| t.length).collect(),
            eta1s: tbus.clone().map(|t| t.eta1).collect(),
            eta2s: tbus.map(|t| t.eta2).collect(),
        }
    }

    pub fn to_spec(&self) -> Result<MeshSpec> {
        let n_tbus = (2 * self.n_rows + 1) * self.n_cols;
        for (name, len) in [
            ("alphas", self.alphas.len()),
            ("lengths_m", self.lengths_m.len()),
            ("eta1s", self.eta1s.len()),
            ("eta2s", self.eta2s.len()),
        ] {
            if len != n_tbus {
                return Err(Error::Validation {
                    field: name.into(),
                    message: format!("expected {n_tbus} entries, got {len}"),
                });
            }
        }
        let build = |i: usize| -> Result<TbuParams> {
            Ok(TbuParams::new(0.0, 0.0, self.alphas[i], self.lengths_m[i])?
                .with_couplers(self.eta1s[i], self.eta2s[i]))
        };
        let nv = self.n_rows * self.n_cols;
        let mut spec = MeshSpec {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            vertical_tbus: (0..nv).map(build).collect::<Result<_>>()?,
            horizontal_tbus: (nv..n_tbus).map(build).collect::<Result<_>>()?,
            constants: self.constants,
        };
        spec.set_params(&self.params)?;
        Ok(spec)
    }
}
