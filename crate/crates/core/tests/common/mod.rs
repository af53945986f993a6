//! Hand-derived closed forms used as independent oracles. None of these
//! call into the cascade; they only restate the algebra for the built-in
//! systems with linear class-K functions.

#![allow(dead_code)]

pub mod fixtures;

/// Double-integrator constants.
#[derive(Debug, Clone, Copy)]
pub struct Di {
    pub dt: f64,
    pub u_max: f64,
    pub wall: f64,
}

impl Di {
    pub const CANONICAL: Di = Di {
        dt: 0.1,
        u_max: 1.0,
        wall: 10.0,
    };

    pub fn h(&self, x: &[f64]) -> f64 {
        self.wall - x[0]
    }

    /// `h(f(x,u)) - h(x)`, which is `-dt v` for any input.
    pub fn delta_h(&self, x: &[f64]) -> f64 {
        -self.dt * x[1]
    }

    pub fn cbf_condition(&self, gamma: f64, x: &[f64]) -> f64 {
        self.delta_h(x) + gamma * self.h(x)
    }

    pub fn b1(&self, g0: f64, x: &[f64]) -> f64 {
        -self.dt * x[1] + g0 * (self.wall - x[0])
    }

    pub fn delta_b1(&self, g0: f64, x: &[f64], u: f64) -> f64 {
        -self.dt * self.dt * u - g0 * self.dt * x[1]
    }

    pub fn psi_r1(&self, g0: f64, g1: f64, x: &[f64], u: f64) -> f64 {
        self.delta_b1(g0, x, u) + g1 * self.b1(g0, x)
    }

    /// Input at which `psi_r1` crosses zero (it is decreasing in `u`).
    pub fn psi_r1_root(&self, g0: f64, g1: f64, x: &[f64]) -> f64 {
        (g1 * self.b1(g0, x) - g0 * self.dt * x[1]) / (self.dt * self.dt)
    }
}

/// Enumerates a uniform grid over `[lo0,hi0] x [lo1,hi1]` in row-major
/// order, building points with the same `lo + (hi - lo) * k / (res - 1)`
/// recipe (last point pinned to `hi`).
pub fn grid2(b: [[f64; 2]; 2], res: usize) -> Vec<[f64; 2]> {
    let axis = |[lo, hi]: [f64; 2]| -> Vec<f64> {
        (0..res)
            .map(|k| {
                if k == res - 1 {
                    hi
                } else {
                    (lo + (hi - lo) * (k as f64 / (res - 1) as f64)).min(hi)
                }
            })
            .collect()
    };
    let (a0, a1) = (axis(b[0]), axis(b[1]));
    a0.iter()
        .flat_map(|&p| a1.iter().map(move |&v| [p, v]))
        .collect()
}

/// Brute-force grid minimum of the depth-0 condition over states with
/// `h >= 0`. Returns `(zeta, worst)` with the first minimizer.
pub fn di_r0_grid_min(
    di: &Di,
    gamma: f64,
    b: [[f64; 2]; 2],
    res: usize,
) -> Option<(f64, [f64; 2])> {
    let mut best: Option<(f64, [f64; 2])> = None;
    for x in grid2(b, res) {
        if di.h(&x) < 0.0 {
            continue;
        }
        let z = di.cbf_condition(gamma, &x);
        if best.is_none_or(|(bz, _)| z < bz) {
            best = Some((z, x));
        }
    }
    best
}

pub fn disk_barrier(center: [f64; 2], radius: f64, x: &[f64]) -> f64 {
    (x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2) - radius * radius
}
