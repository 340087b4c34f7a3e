//! Collocation solver for the coupled Volterra systems of the four
//! auxiliary kernel pairs.
//!
//! Each pair couples an "offset" component, defined by an integral along a
//! line of constant `y - x`, with a "diagonal" component, defined by an
//! integral along a line of constant `x + y` reaching down to the bisector
//! `y = x`. On the uniform grid both families of lines pass through grid
//! nodes, so the systems decouple into a sequence of 2x2 solves ordered by
//! distance from the bisector. Composite trapezoid quadrature is used
//! throughout; anti-diagonals with odd index cross the bisector between
//! nodes and get a half-interval trapezoid correction there, keeping the
//! whole scheme second order.
//!
//! The solved values live on a triangle (left kinds: `x in [-L, L]`,
//! `x <= y`, `x + y <= 2L`; right kinds mirrored). Outside the triangle the
//! kernels are either zero or constant along the collocation lines, so a
//! pair of one-dimensional extension arrays recovers them everywhere.

use crate::potential::PotentialGrid;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VolterraError {
    #[error("triangle was solved on a different grid than the supplied potential")]
    GridMismatch,
    #[error(
        "discretization unstable for {kind:?}: 1 + (h/2)*K(0,0) = {value:.3e} <= 0; \
         the potential energy is too large for this step, decrease h"
    )]
    Unstable { kind: KernelKind, value: f64 },
}

/// Which half-plane a kernel pair lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// `y >= x`; integrals run toward `+infinity`.
    Left,
    /// `y <= x`; integrals run toward `-infinity`.
    Right,
}

/// The four auxiliary kernel pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    KBar,
    K,
    M,
    MBar,
}

impl KernelKind {
    pub fn side(self) -> Side {
        match self {
            KernelKind::KBar | KernelKind::K => Side::Left,
            KernelKind::M | KernelKind::MBar => Side::Right,
        }
    }

    /// Role table: whether the offset-line equation defines the `up`
    /// component (otherwise the `dn` one), the sign of the offset-line
    /// integral, and the sign of the diagonal-line equation.
    fn roles(self) -> (bool, f64, f64) {
        match self {
            KernelKind::KBar => (true, -1.0, 1.0),
            KernelKind::K => (false, 1.0, -1.0),
            KernelKind::M => (true, 1.0, -1.0),
            KernelKind::MBar => (false, -1.0, 1.0),
        }
    }
}

/// One solved kernel pair on its computational triangle.
///
/// Rows are indexed by the distance `t` from the apex row (left kinds: apex
/// at `x = L`, `t = nx - i`; right kinds: apex at `x = -L`, `t = nx + i`);
/// row `t` holds `2t + 1` values at offsets `|y - x| = d*h`, `d = 0..=2t`,
/// so row `t` starts at flat index `t*t`.
#[derive(Debug, Clone)]
pub struct KernelTriangle {
    kind: KernelKind,
    nx: usize,
    h: f64,
    up: Vec<f64>,
    dn: Vec<f64>,
    ext_up: Vec<f64>,
    ext_dn: Vec<f64>,
    /// Offset-component values at the bisector midpoints `x_i + h/2`,
    /// needed wherever a quadrature stops halfway between nodes.
    pub(crate) off_half: Vec<f64>,
    grid: PotentialGrid,
}

struct DiagTables {
    /// Offset component on the bisector: `-E(x_i)/2` with `E` the partial
    /// energy integral of `u0^2` toward the kind's far end.
    a: Vec<f64>,
    /// Diagonal component on the bisector: `e2 * u0(x_i)/2`.
    b: Vec<f64>,
    /// Offset component at the midpoints `x_i + h/2`.
    a_half: Vec<f64>,
}

/// Composite-Simpson tail energies `E[i] = int_{x_i}^{L} u0^2`, accumulated
/// recursively from the right endpoint (pairwise panels, with a three-point
/// parabolic rule for the last odd interval).
fn tail_energies(pot: &PotentialGrid) -> Vec<f64> {
    let m = pot.samples().len();
    let h = pot.h();
    let f: Vec<f64> = pot.samples().iter().map(|u| u * u).collect();
    let mut e = vec![0.0; m];
    e[m - 2] = h / 12.0 * (-f[m - 3] + 8.0 * f[m - 2] + 5.0 * f[m - 1]);
    for i in (0..m - 2).rev() {
        e[i] = e[i + 2] + h / 3.0 * (f[i] + 4.0 * f[i + 1] + f[i + 2]);
    }
    e
}

/// Mirror of `tail_energies`: `P[i] = int_{-L}^{x_i} u0^2`.
fn lead_energies(pot: &PotentialGrid) -> Vec<f64> {
    let m = pot.samples().len();
    let h = pot.h();
    let f: Vec<f64> = pot.samples().iter().map(|u| u * u).collect();
    let mut p = vec![0.0; m];
    p[1] = h / 12.0 * (5.0 * f[0] + 8.0 * f[1] - f[2]);
    for i in 2..m {
        p[i] = p[i - 2] + h / 3.0 * (f[i - 2] + 4.0 * f[i - 1] + f[i]);
    }
    p
}

fn diag_tables(pot: &PotentialGrid, kind: KernelKind) -> DiagTables {
    let (_, _, e2) = kind.roles();
    let n = pot.nx() as i64;
    let h = pot.h();
    let m = pot.samples().len();
    let (a, a_half) = match kind.side() {
        Side::Left => {
            let e = tail_energies(pot);
            let a: Vec<f64> = e.iter().map(|v| -0.5 * v).collect();
            // E at x_i + h/2 = E(x_{i+1}) plus the half panel in between.
            let a_half: Vec<f64> = (0..m - 1)
                .map(|i| {
                    let uh = pot.u_half(i as i64 - n);
                    let un = pot.samples()[i + 1];
                    -0.5 * (e[i + 1] + h / 4.0 * (un * un + uh * uh))
                })
                .collect();
            (a, a_half)
        }
        Side::Right => {
            let p = lead_energies(pot);
            let a: Vec<f64> = p.iter().map(|v| -0.5 * v).collect();
            let a_half: Vec<f64> = (0..m - 1)
                .map(|i| {
                    let uh = pot.u_half(i as i64 - n);
                    let ui = pot.samples()[i];
                    -0.5 * (p[i] + h / 4.0 * (ui * ui + uh * uh))
                })
                .collect();
            (a, a_half)
        }
    };
    let b: Vec<f64> = pot.samples().iter().map(|u| e2 * 0.5 * u).collect();
    DiagTables { a, b, a_half }
}

/// Bisector values of a kernel pair, `(up_diag, dn_diag)` indexed by
/// `i + nx` for `x_i`.
pub fn diagonal_values(pot: &PotentialGrid, kind: KernelKind) -> (Vec<f64>, Vec<f64>) {
    let t = diag_tables(pot, kind);
    let (off_on_up, _, _) = kind.roles();
    if off_on_up {
        (t.a, t.b)
    } else {
        (t.b, t.a)
    }
}

/// Collocation sweep for the left-kind geometry. Returns the offset and
/// diagonal component arrays in triangle layout.
fn collocate_left(pot: &PotentialGrid, e1: f64, e2: f64, tab: &DiagTables) -> (Vec<f64>, Vec<f64>) {
    let n = pot.nx() as i64;
    let h = pot.h();
    let rows = (2 * n + 1) as usize;
    let mut av = vec![0.0; rows * rows];
    let mut bv = vec![0.0; rows * rows];
    let idx = |r: i64, d: i64| -> usize {
        let t = (n - r) as usize;
        t * t + d as usize
    };
    for r in -n..=n {
        let k = idx(r, 0);
        av[k] = tab.a[(r + n) as usize];
        bv[k] = tab.b[(r + n) as usize];
    }
    // Running sums u*A along each anti-diagonal, keyed by sigma = x + y.
    let mut sdiag = vec![0.0f64; (4 * n + 1) as usize];
    for d in 1..=4 * n {
        let odd = d % 2 == 1;
        // Even-offset nodes on sigma = 2n are pinned at zero by the support
        // lemma; start solving one row below.
        let r_start = if odd { n - (d + 1) / 2 } else { n - d / 2 - 1 };
        // Running sum u*B down the offset line.
        let mut s_off = 0.0f64;
        let mut r = r_start;
        while r >= -n {
            let sigma = 2 * r + d;
            let ur = pot.u(r);
            let a12 = e1 * h * ur * 0.5;
            let f1 = e1 * h * s_off;
            let (w_self, f2) = if !odd {
                let mid = sigma / 2;
                let um = pot.u(mid);
                let rhs = e2
                    * (0.5 * um
                        + h * sdiag[(sigma + 2 * n) as usize]
                        + 0.5 * h * um * tab.a[(mid + n) as usize]);
                (0.5 * h, rhs)
            } else {
                // The anti-diagonal meets the bisector at x = sigma*h/2,
                // halfway between nodes m and m+1; the segment from x_m to
                // there is a half-interval trapezoid, which gives the node
                // at offset 1 a 3h/4 total weight.
                let m = (sigma - 1) / 2;
                let uh = pot.u_half(m);
                let ah = tab.a_half[(m + n) as usize];
                let mut rhs = e2 * (0.5 * uh + 0.25 * h * uh * ah);
                let w = if d == 1 {
                    0.25 * h
                } else {
                    rhs += e2
                        * (h * sdiag[(sigma + 2 * n) as usize]
                            + 0.75 * h * pot.u(m) * av[idx(m, 1)]);
                    0.5 * h
                };
                (w, rhs)
            };
            let a21 = e2 * w_self * ur;
            let det = 1.0 - a12 * a21;
            assert!(det >= 1.0, "2x2 collocation determinant {det} < 1");
            let k = idx(r, d);
            let va = (f1 + a12 * f2) / det;
            let vb = (f2 + a21 * f1) / det;
            av[k] = va;
            bv[k] = vb;
            s_off += ur * vb;
            if d >= 2 {
                sdiag[(sigma + 2 * n) as usize] += ur * va;
            }
            r -= 1;
        }
    }
    (av, bv)
}

/// Mirror sweep for the right-kind geometry.
fn collocate_right(pot: &PotentialGrid, e1: f64, e2: f64, tab: &DiagTables) -> (Vec<f64>, Vec<f64>) {
    let n = pot.nx() as i64;
    let h = pot.h();
    let rows = (2 * n + 1) as usize;
    let mut av = vec![0.0; rows * rows];
    let mut bv = vec![0.0; rows * rows];
    let idx = |r: i64, d: i64| -> usize {
        let t = (n + r) as usize;
        t * t + d as usize
    };
    for r in -n..=n {
        let k = idx(r, 0);
        av[k] = tab.a[(r + n) as usize];
        bv[k] = tab.b[(r + n) as usize];
    }
    let mut sdiag = vec![0.0f64; (4 * n + 1) as usize];
    for d in 1..=4 * n {
        let odd = d % 2 == 1;
        let r_start = if odd { -n + (d + 1) / 2 } else { -n + d / 2 + 1 };
        let mut s_off = 0.0f64;
        let mut r = r_start;
        while r <= n {
            let sigma = 2 * r - d;
            let ur = pot.u(r);
            let a12 = e1 * h * ur * 0.5;
            let f1 = e1 * h * s_off;
            let (w_self, f2) = if !odd {
                let mid = sigma / 2;
                let um = pot.u(mid);
                let rhs = e2
                    * (0.5 * um
                        + h * sdiag[(sigma + 2 * n) as usize]
                        + 0.5 * h * um * tab.a[(mid + n) as usize]);
                (0.5 * h, rhs)
            } else {
                // Midpoint x = sigma*h/2 sits between nodes m and m+1 with
                // m = (sigma-1)/2; the half panel climbs from there to
                // x_{m+1}.
                let m = (sigma - 1) / 2;
                let uh = pot.u_half(m);
                let ah = tab.a_half[(m + n) as usize];
                let mut rhs = e2 * (0.5 * uh + 0.25 * h * uh * ah);
                let w = if d == 1 {
                    0.25 * h
                } else {
                    let mu = m + 1;
                    rhs += e2
                        * (h * sdiag[(sigma + 2 * n) as usize]
                            + 0.75 * h * pot.u(mu) * av[idx(mu, 1)]);
                    0.5 * h
                };
                (w, rhs)
            };
            let a21 = e2 * w_self * ur;
            let det = 1.0 - a12 * a21;
            assert!(det >= 1.0, "2x2 collocation determinant {det} < 1");
            let k = idx(r, d);
            let va = (f1 + a12 * f2) / det;
            let vb = (f2 + a21 * f1) / det;
            av[k] = va;
            bv[k] = vb;
            s_off += ur * vb;
            if d >= 2 {
                sdiag[(sigma + 2 * n) as usize] += ur * va;
            }
            r += 1;
        }
    }
    (av, bv)
}

/// Solve one auxiliary kernel pair on its triangle.
pub fn solve_auxiliary(pot: &PotentialGrid, kind: KernelKind) -> Result<KernelTriangle, VolterraError> {
    let (off_on_up, e1, e2) = kind.roles();
    let tab = diag_tables(pot, kind);
    let n = pot.nx();
    // The downstream back-substitutions divide by 1 + (h/2) * (offset
    // component at the origin); that is the binding smallness condition on
    // h, and it is monotone along the bisector, so the origin is the worst
    // node.
    let denom = 1.0 + 0.5 * pot.h() * tab.a[n];
    if denom <= 0.0 {
        return Err(VolterraError::Unstable { kind, value: denom });
    }
    let (av, bv) = match kind.side() {
        Side::Left => collocate_left(pot, e1, e2, &tab),
        Side::Right => collocate_right(pot, e1, e2, &tab),
    };
    let (up, dn) = if off_on_up { (av, bv) } else { (bv, av) };
    let base = 2 * n * 2 * n;
    let last_up = &up[base..base + 4 * n + 1];
    let last_dn = &dn[base..base + 4 * n + 1];
    let ext_up = last_up.to_vec();
    let ext_dn = match kind.side() {
        // Left: the constant along x + y = sigma equals the row at x = -L,
        // where the offset is d = sigma + 2n — the same index.
        Side::Left => last_dn.to_vec(),
        // Right: the constant comes from the row at x = L, offset 2n - sigma,
        // so the stored row reverses.
        Side::Right => last_dn.iter().rev().copied().collect(),
    };
    Ok(KernelTriangle {
        kind,
        nx: n,
        h: pot.h(),
        up,
        dn,
        ext_up,
        ext_dn,
        off_half: tab.a_half,
        grid: pot.clone(),
    })
}

impl KernelTriangle {
    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn grid(&self) -> &PotentialGrid {
        &self.grid
    }

    /// True if this triangle was produced from (a grid identical to) `pot`.
    pub fn matches_grid(&self, pot: &PotentialGrid) -> bool {
        self.nx == pot.nx() && self.h == pot.h() && self.grid.samples() == pot.samples()
    }

    /// Extension constants of the `up` component, indexed by offset.
    pub fn ext_up(&self) -> &[f64] {
        &self.ext_up
    }

    /// Extension constants of the `dn` component, indexed by `sigma + 2nx`.
    pub fn ext_dn(&self) -> &[f64] {
        &self.ext_dn
    }

    /// Stored row at distance `t` from the apex (`2t + 1` offsets).
    pub fn row_up(&self, t: usize) -> &[f64] {
        &self.up[t * t..t * t + 2 * t + 1]
    }

    pub fn row_dn(&self, t: usize) -> &[f64] {
        &self.dn[t * t..t * t + 2 * t + 1]
    }

    /// Kernel pair at the node `(x_i, y_j)`, for any integer indices: values
    /// come from the triangle inside it, from the extension constants in the
    /// constancy regions, and are zero outside the support.
    pub fn query(&self, i: i64, j: i64) -> (f64, f64) {
        let n = self.nx as i64;
        match self.kind.side() {
            Side::Left => {
                let d = j - i;
                if d < 0 || i > n {
                    return (0.0, 0.0);
                }
                let sigma = i + j;
                if i >= -n {
                    if sigma > 2 * n {
                        return (0.0, 0.0);
                    }
                    let t = (n - i) as usize;
                    let k = t * t + d as usize;
                    (self.up[k], self.dn[k])
                } else {
                    let up = if d <= 4 * n { self.ext_up[d as usize] } else { 0.0 };
                    let dn = if (-2 * n..=2 * n).contains(&sigma) {
                        self.ext_dn[(sigma + 2 * n) as usize]
                    } else {
                        0.0
                    };
                    (up, dn)
                }
            }
            Side::Right => {
                let d = i - j;
                if d < 0 || i < -n {
                    return (0.0, 0.0);
                }
                let sigma = i + j;
                if i <= n {
                    if sigma < -2 * n {
                        return (0.0, 0.0);
                    }
                    let t = (n + i) as usize;
                    let k = t * t + d as usize;
                    (self.up[k], self.dn[k])
                } else {
                    let up = if d <= 4 * n { self.ext_up[d as usize] } else { 0.0 };
                    let dn = if (-2 * n..=2 * n).contains(&sigma) {
                        self.ext_dn[(sigma + 2 * n) as usize]
                    } else {
                        0.0
                    };
                    (up, dn)
                }
            }
        }
    }
}
