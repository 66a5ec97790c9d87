//! Conservative shallow-water equations on `[0, a]^2`, first-order
//! finite volumes with local Lax-Friedrichs (Rusanov) fluxes and reflective
//! walls.
//!
//! Conserved variables per cell are `U = [h, hu, hv]`. The grid carries one
//! layer of ghost cells on each side, so cell `(i, j)` with
//! `i, j in 0..=d_g + 1` and the physical cells are `1..=d_g`.
//!
//! The flat state vector used by the filters is `[h-block, u-block, v-block]`
//! (velocities, not momenta), each block ordered with `i` (the x index)
//! fastest.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::model::{Drift, NoiseCov, ObsOperator, SsmDefinition};

pub type Cell = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweParams {
    /// Grid points per axis.
    pub d_g: usize,
    /// Domain edge length.
    pub a: f64,
    /// Gravitational acceleration.
    pub g: f64,
    /// Courant number.
    pub cfl: f64,
}

impl Default for SweParams {
    fn default() -> Self {
        Self {
            d_g: 35,
            a: 2.0,
            g: 9.81,
            cfl: 0.5,
        }
    }
}

impl SweParams {
    pub fn validate(&self) -> Result<()> {
        if self.d_g < 3 {
            return Err(Error::InvalidParameter(format!("d_g must be >= 3, got {}", self.d_g)));
        }
        if !(self.a > 0.0 && self.g > 0.0 && self.cfl > 0.0) {
            return Err(Error::InvalidParameter("a, g and cfl must be positive".into()));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        self.a / self.d_g as f64
    }

    /// Length of the packed state, `3 d_g^2`.
    pub fn state_dim(&self) -> usize {
        3 * self.d_g * self.d_g
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweGrid {
    pub params: SweParams,
    cells: Vec<Cell>,
}

/// Physical fluxes `A(U)` and `B(U)`.
pub fn swe_fluxes(u: &Cell, g: f64) -> Result<(Cell, Cell)> {
    let [h, hu, hv] = *u;
    if !(h > 0.0) {
        return Err(Error::Numerical(format!("flux evaluation needs h > 0, got {h}")));
    }
    let vu = hu / h;
    let vv = hv / h;
    let p = 0.5 * g * h * h;
    Ok(([hu, hu * vu + p, hu * vv], [hv, hu * vv, hv * vv + p]))
}

fn wave_speeds(u: &Cell, g: f64) -> (f64, f64) {
    let c = (g * u[0]).sqrt();
    ((u[1] / u[0]).abs() + c, (u[2] / u[0]).abs() + c)
}

fn rusanov(ul: &Cell, ur: &Cell, fl: &Cell, fr: &Cell, lambda: f64) -> Cell {
    let mut f = [0.0; 3];
    for k in 0..3 {
        f[k] = 0.5 * (fl[k] + fr[k]) - 0.5 * lambda * (ur[k] - ul[k]);
    }
    f
}

impl SweGrid {
    /// Still water of depth `h` with zero velocity.
    pub fn uniform(params: SweParams, h: f64) -> Result<Self> {
        params.validate()?;
        let n = params.d_g + 2;
        let mut grid = Self {
            params,
            cells: vec![[h, 0.0, 0.0]; n * n],
        };
        grid.refresh_ghosts();
        grid.check_positive()?;
        Ok(grid)
    }

    /// Height 2.5 on `[0.5, 1]^2` (physical grid points `x_i = (i-1) dx`),
    /// 1 elsewhere, fluid at rest.
    pub fn dam_break(params: SweParams) -> Result<Self> {
        let mut grid = Self::uniform(params, 1.0)?;
        let dx = params.dx();
        let inside = |k: usize| {
            let x = (k - 1) as f64 * dx;
            (0.5 - 1e-12..=1.0 + 1e-12).contains(&x)
        };
        for j in 1..=params.d_g {
            for i in 1..=params.d_g {
                if inside(i) && inside(j) {
                    grid.cell_mut(i, j)[0] = 2.5;
                }
            }
        }
        grid.refresh_ghosts();
        Ok(grid)
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        j * (self.params.d_g + 2) + i
    }

    pub fn cell(&self, i: usize, j: usize) -> &Cell {
        &self.cells[self.idx(i, j)]
    }

    pub fn cell_mut(&mut self, i: usize, j: usize) -> &mut Cell {
        let k = self.idx(i, j);
        &mut self.cells[k]
    }

    /// Copies the adjacent interior cell into each ghost cell and negates the
    /// velocity component normal to that wall.
    pub fn refresh_ghosts(&mut self) {
        let n = self.params.d_g;
        for j in 1..=n {
            let mut w = *self.cell(1, j);
            w[1] = -w[1];
            *self.cell_mut(0, j) = w;
            let mut e = *self.cell(n, j);
            e[1] = -e[1];
            *self.cell_mut(n + 1, j) = e;
        }
        for i in 1..=n {
            let mut s = *self.cell(i, 1);
            s[2] = -s[2];
            *self.cell_mut(i, 0) = s;
            let mut t = *self.cell(i, n);
            t[2] = -t[2];
            *self.cell_mut(i, n + 1) = t;
        }
        // Corners never enter a flux; mirror them diagonally so every cell is valid.
        let c = *self.cell(1, 1);
        *self.cell_mut(0, 0) = [c[0], -c[1], -c[2]];
        let c = *self.cell(n, 1);
        *self.cell_mut(n + 1, 0) = [c[0], -c[1], -c[2]];
        let c = *self.cell(1, n);
        *self.cell_mut(0, n + 1) = [c[0], -c[1], -c[2]];
        let c = *self.cell(n, n);
        *self.cell_mut(n + 1, n + 1) = [c[0], -c[1], -c[2]];
    }

    fn check_positive(&self) -> Result<()> {
        let n = self.params.d_g;
        for j in 1..=n {
            for i in 1..=n {
                let h = self.cell(i, j)[0];
                if !(h > 0.0) {
                    return Err(Error::Positivity { i, j, h });
                }
            }
        }
        Ok(())
    }

    /// Total interior mass `sum h dx dy`.
    pub fn mass(&self) -> f64 {
        let n = self.params.d_g;
        let dx = self.params.dx();
        let mut m = 0.0;
        for j in 1..=n {
            for i in 1..=n {
                m += self.cell(i, j)[0];
            }
        }
        m * dx * dx
    }

    /// Grid reflected across the diagonal: `(i, j) -> (j, i)` with the two
    /// momentum components swapped.
    pub fn transposed(&self) -> Self {
        let mut out = self.clone();
        let n = self.params.d_g + 2;
        for j in 0..n {
            for i in 0..n {
                let c = *self.cell(j, i);
                *out.cell_mut(i, j) = [c[0], c[2], c[1]];
            }
        }
        out
    }

    /// Packs the interior into `[h, u, v]` blocks.
    pub fn pack(&self) -> Vec<f64> {
        let n = self.params.d_g;
        let nn = n * n;
        let mut x = vec![0.0; 3 * nn];
        for j in 1..=n {
            for i in 1..=n {
                let k = (j - 1) * n + (i - 1);
                let [h, hu, hv] = *self.cell(i, j);
                x[k] = h;
                x[nn + k] = hu / h;
                x[2 * nn + k] = hv / h;
            }
        }
        x
    }

    /// Inverse of [`SweGrid::pack`]; ghost cells are refreshed.
    pub fn unpack(params: SweParams, x: &[f64]) -> Result<Self> {
        params.validate()?;
        check_len("shallow-water state", x, params.state_dim())?;
        let n = params.d_g;
        let nn = n * n;
        let mut grid = Self {
            params,
            cells: vec![[1.0, 0.0, 0.0]; (n + 2) * (n + 2)],
        };
        for j in 1..=n {
            for i in 1..=n {
                let k = (j - 1) * n + (i - 1);
                let h = x[k];
                if !(h > 0.0) {
                    return Err(Error::Positivity { i, j, h });
                }
                *grid.cell_mut(i, j) = [h, h * x[nn + k], h * x[2 * nn + k]];
            }
        }
        grid.refresh_ghosts();
        Ok(grid)
    }
}

/// `dt = CFL dx / max_{cells} max(|u| + sqrt(g h), |v| + sqrt(g h))`, ghosts included.
pub fn cfl_timestep(grid: &SweGrid) -> Result<f64> {
    let g = grid.params.g;
    let mut lmax = 0.0f64;
    for (k, c) in grid.cells.iter().enumerate() {
        if !(c[0] > 0.0) {
            let n = grid.params.d_g + 2;
            return Err(Error::Positivity {
                i: k % n,
                j: k / n,
                h: c[0],
            });
        }
        let (lx, ly) = wave_speeds(c, g);
        lmax = lmax.max(lx).max(ly);
    }
    Ok(grid.params.cfl * grid.params.dx() / lmax)
}

/// One explicit Lax-Friedrichs update of all interior cells.
///
/// Interface dissipation uses the larger of the two adjacent local wave
/// speeds. Ghost cells of `grid` must be current; they are refreshed again
/// on the returned grid.
pub fn lax_friedrichs_step(grid: &SweGrid, dt: f64) -> Result<SweGrid> {
    let p = grid.params;
    let n = p.d_g;
    let g = p.g;
    let r = dt / p.dx();

    let m = n + 2;
    let mut ax = vec![[0.0; 3]; m * m];
    let mut by = vec![[0.0; 3]; m * m];
    let mut lx = vec![0.0; m * m];
    let mut ly = vec![0.0; m * m];
    for k in 0..m * m {
        let c = &grid.cells[k];
        let (fa, fb) = swe_fluxes(c, g).map_err(|_| Error::Positivity {
            i: k % m,
            j: k / m,
            h: c[0],
        })?;
        ax[k] = fa;
        by[k] = fb;
        let (a, b) = wave_speeds(c, g);
        lx[k] = a;
        ly[k] = b;
    }

    // fx[(i, j)] is the flux through the interface between cells i and i+1.
    let mut fx = vec![[0.0; 3]; m * m];
    for j in 1..=n {
        for i in 0..=n {
            let l = grid.idx(i, j);
            let rr = grid.idx(i + 1, j);
            fx[l] = rusanov(&grid.cells[l], &grid.cells[rr], &ax[l], &ax[rr], lx[l].max(lx[rr]));
        }
    }
    let mut gy = vec![[0.0; 3]; m * m];
    for j in 0..=n {
        for i in 1..=n {
            let b = grid.idx(i, j);
            let t = grid.idx(i, j + 1);
            gy[b] = rusanov(&grid.cells[b], &grid.cells[t], &by[b], &by[t], ly[b].max(ly[t]));
        }
    }

    let mut out = grid.clone();
    for j in 1..=n {
        for i in 1..=n {
            let c = grid.idx(i, j);
            let w = grid.idx(i - 1, j);
            let s = grid.idx(i, j - 1);
            let mut u = grid.cells[c];
            for k in 0..3 {
                let dfx = fx[c][k] - fx[w][k];
                let dgy = gy[c][k] - gy[s][k];
                u[k] -= r * (dfx + dgy);
            }
            if !(u[0] > 0.0) {
                return Err(Error::Positivity { i, j, h: u[0] });
            }
            out.cells[c] = u;
        }
    }
    out.refresh_ghosts();
    Ok(out)
}

/// Observation selector: every `h`, every third `u` starting with the first,
/// every third `v` starting with the second (0-based indices into the packed
/// state).
pub fn swe_observation_matrix(d_g: usize) -> Result<ObsOperator> {
    if d_g < 3 {
        return Err(Error::InvalidParameter(format!("d_g must be >= 3, got {d_g}")));
    }
    let nn = d_g * d_g;
    let mut idx: Vec<usize> = (0..nn).collect();
    idx.extend((nn..2 * nn).step_by(3));
    idx.extend((2 * nn + 1..3 * nn).step_by(3));
    ObsOperator::selector(3 * nn, idx)
}

/// `q(x)`: unpack, one CFL-limited FV step, pack.
#[derive(Debug, Clone, Copy)]
pub struct SweDrift {
    params: SweParams,
}

impl SweDrift {
    pub fn new(params: SweParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }

    pub fn params(&self) -> SweParams {
        self.params
    }
}

impl Drift for SweDrift {
    fn dim(&self) -> usize {
        self.params.state_dim()
    }

    fn apply(&self, _step: usize, x: &[f64], out: &mut [f64]) -> Result<()> {
        let grid = SweGrid::unpack(self.params, x)?;
        let dt = cfl_timestep(&grid)?;
        let next = lax_friedrichs_step(&grid, dt)?;
        out.copy_from_slice(&next.pack());
        Ok(())
    }

    fn name(&self) -> &str {
        "shallow_water"
    }
}

/// Stochastic SWE model started from the dam-break state, observed through
/// [`swe_observation_matrix`].
pub fn swe_model(params: SweParams, r1_sqrt: f64, r2_sqrt: f64) -> Result<SsmDefinition> {
    let obs = swe_observation_matrix(params.d_g)?;
    let dy = obs.dim_y();
    let x0 = SweGrid::dam_break(params)?.pack();
    SsmDefinition::new(
        Arc::new(SweDrift::new(params)?),
        NoiseCov::scalar(params.state_dim(), r1_sqrt)?,
        NoiseCov::scalar(dy, r2_sqrt)?,
        obs,
        1,
        x0,
    )
}
