//! Geometric multigrid for the 5-point Laplace operator on a rectangular
//! node grid with an arbitrary set of Dirichlet nodes.
//!
//! Dirichlet nodes keep their stored value. On coarse levels a node is
//! Dirichlet when the coincident fine node is; corrections vanish there.

#[derive(Clone, Debug)]
pub struct NodeGrid {
    /// Nodes along x (columns).
    pub nx: usize,
    /// Nodes along z (rows).
    pub nz: usize,
    pub fixed: Vec<bool>,
}

impl NodeGrid {
    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }
}

struct Level {
    grid: NodeGrid,
    /// Mesh width relative to the finest level.
    h: f64,
    u: Vec<f64>,
    f: Vec<f64>,
    r: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
pub struct SolveReport {
    pub cycles: usize,
    /// Max over free nodes of |4u - Σ neighbours| on the finest grid.
    pub residual: f64,
    pub converged: bool,
}

pub struct Multigrid {
    levels: Vec<Level>,
}

const MIN_COARSE_CELLS: usize = 16;

impl Multigrid {
    pub fn new(grid: NodeGrid) -> Self {
        let mut levels = Vec::new();
        let mut current = grid;
        let mut h = 1.0;
        loop {
            let n = current.nx * current.nz;
            let (cx, cz) = (current.nx - 1, current.nz - 1);
            let next = if cx % 2 == 0 && cz % 2 == 0 && cx / 2 >= MIN_COARSE_CELLS && cz / 2 >= MIN_COARSE_CELLS {
                let nx = cx / 2 + 1;
                let nz = cz / 2 + 1;
                let mut fixed = vec![false; nx * nz];
                for j in 0..nz {
                    for i in 0..nx {
                        fixed[j * nx + i] = current.fixed[current.idx(2 * i, 2 * j)];
                    }
                }
                Some(NodeGrid { nx, nz, fixed })
            } else {
                None
            };
            levels.push(Level {
                grid: current,
                h,
                u: vec![0.0; n],
                f: vec![0.0; n],
                r: vec![0.0; n],
            });
            match next {
                Some(g) => {
                    current = g;
                    h *= 2.0;
                }
                None => break,
            }
        }
        Self { levels }
    }

    #[cfg(test)]
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// Solves with the Dirichlet values and initial guess taken from `u`.
    pub fn solve(&mut self, u: &mut [f64], tol: f64, max_cycles: usize) -> SolveReport {
        let top = &mut self.levels[0];
        top.u.copy_from_slice(u);
        top.f.iter_mut().for_each(|x| *x = 0.0);
        let mut residual = stencil_residual(&self.levels[0]);
        let mut cycles = 0;
        while residual > tol && cycles < max_cycles {
            self.v_cycle(0);
            cycles += 1;
            residual = stencil_residual(&self.levels[0]);
        }
        u.copy_from_slice(&self.levels[0].u);
        SolveReport {
            cycles,
            residual,
            converged: residual <= tol,
        }
    }

    fn v_cycle(&mut self, l: usize) {
        if l + 1 == self.levels.len() {
            coarse_solve(&mut self.levels[l]);
            return;
        }
        for _ in 0..2 {
            gauss_seidel_rb(&mut self.levels[l]);
        }
        compute_residual(&mut self.levels[l]);
        {
            let (fine, coarse) = self.levels.split_at_mut(l + 1);
            restrict(&fine[l], &mut coarse[0]);
        }
        self.v_cycle(l + 1);
        {
            let (fine, coarse) = self.levels.split_at_mut(l + 1);
            prolong_add(&coarse[0], &mut fine[l]);
        }
        for _ in 0..2 {
            gauss_seidel_rb(&mut self.levels[l]);
        }
    }
}

fn gauss_seidel_rb(level: &mut Level) {
    let g = &level.grid;
    let h2 = level.h * level.h;
    let nx = g.nx;
    for color in 0..2 {
        for j in 1..g.nz - 1 {
            let start = 1 + (j + 1 + color) % 2;
            let mut i = start;
            while i < nx - 1 {
                let k = j * nx + i;
                if !g.fixed[k] {
                    let u = &level.u;
                    let gs = 0.25 * (u[k - 1] + u[k + 1] + u[k - nx] + u[k + nx] + h2 * level.f[k]);
                    level.u[k] = gs;
                }
                i += 2;
            }
        }
    }
}

fn sor_sweep(level: &mut Level, omega: f64) {
    let g = &level.grid;
    let h2 = level.h * level.h;
    let nx = g.nx;
    for color in 0..2 {
        for j in 1..g.nz - 1 {
            let mut i = 1 + (j + 1 + color) % 2;
            while i < nx - 1 {
                let k = j * nx + i;
                if !g.fixed[k] {
                    let u = &level.u;
                    let gs = 0.25 * (u[k - 1] + u[k + 1] + u[k - nx] + u[k + nx] + h2 * level.f[k]);
                    let old = u[k];
                    level.u[k] = old + omega * (gs - old);
                }
                i += 2;
            }
        }
    }
}

fn coarse_solve(level: &mut Level) {
    let n = level.grid.nx.max(level.grid.nz) as f64;
    let omega = 2.0 / (1.0 + (std::f64::consts::PI / n).sin());
    let fnorm = level.f.iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1e-300);
    for it in 0..20_000 {
        sor_sweep(level, omega);
        if it % 25 == 24 {
            compute_residual(level);
            let r = level.r.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
            if r < 1e-3 * fnorm {
                break;
            }
        }
    }
}

/// r = f - A u with A u = (4u - Σ nbrs)/h².
fn compute_residual(level: &mut Level) {
    let g = &level.grid;
    let nx = g.nx;
    let inv_h2 = 1.0 / (level.h * level.h);
    level.r.iter_mut().for_each(|x| *x = 0.0);
    for j in 1..g.nz - 1 {
        for i in 1..nx - 1 {
            let k = j * nx + i;
            if !g.fixed[k] {
                let u = &level.u;
                let au = (4.0 * u[k] - u[k - 1] - u[k + 1] - u[k - nx] - u[k + nx]) * inv_h2;
                level.r[k] = level.f[k] - au;
            }
        }
    }
}

fn stencil_residual(level: &Level) -> f64 {
    let g = &level.grid;
    let nx = g.nx;
    let u = &level.u;
    let mut worst = 0.0f64;
    for j in 1..g.nz - 1 {
        for i in 1..nx - 1 {
            let k = j * nx + i;
            if !g.fixed[k] {
                let r = 4.0 * u[k] - u[k - 1] - u[k + 1] - u[k - nx] - u[k + nx];
                worst = worst.max(r.abs());
            }
        }
    }
    worst
}

/// Full-weighting restriction of the fine residual into the coarse rhs.
fn restrict(fine: &Level, coarse: &mut Level) {
    let fg = &fine.grid;
    let cg = &coarse.grid;
    let fnx = fg.nx;
    coarse.u.iter_mut().for_each(|x| *x = 0.0);
    coarse.f.iter_mut().for_each(|x| *x = 0.0);
    for j in 1..cg.nz - 1 {
        for i in 1..cg.nx - 1 {
            let kc = j * cg.nx + i;
            if cg.fixed[kc] {
                continue;
            }
            let k = (2 * j) * fnx + 2 * i;
            let r = &fine.r;
            coarse.f[kc] = 0.25 * r[k]
                + 0.125 * (r[k - 1] + r[k + 1] + r[k - fnx] + r[k + fnx])
                + 0.0625 * (r[k - fnx - 1] + r[k - fnx + 1] + r[k + fnx - 1] + r[k + fnx + 1]);
        }
    }
}

/// Bilinear prolongation of the coarse correction, added at free fine nodes.
fn prolong_add(coarse: &Level, fine: &mut Level) {
    let cg = &coarse.grid;
    let fg = &fine.grid;
    let e = &coarse.u;
    for j in 0..fg.nz {
        let jc = j / 2;
        let jodd = j % 2 == 1;
        for i in 0..fg.nx {
            let k = j * fg.nx + i;
            if fg.fixed[k] {
                continue;
            }
            let ic = i / 2;
            let iodd = i % 2 == 1;
            let c = |a: usize, b: usize| {
                let kc = b * cg.nx + a;
                if cg.fixed[kc] {
                    0.0
                } else {
                    e[kc]
                }
            };
            let v = match (iodd, jodd) {
                (false, false) => c(ic, jc),
                (true, false) => 0.5 * (c(ic, jc) + c(ic + 1, jc)),
                (false, true) => 0.5 * (c(ic, jc) + c(ic, jc + 1)),
                (true, true) => 0.25 * (c(ic, jc) + c(ic + 1, jc) + c(ic, jc + 1) + c(ic + 1, jc + 1)),
            };
            fine.u[k] += v;
        }
    }
}
