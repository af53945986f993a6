//! Discrete-time system models `x_{t+1} = f(x_t, u_t)` with a box of
//! admissible inputs, a box-shaped working region of the state space and
//! the base barrier `h` whose superlevel set `{h >= 0}` is the safe set.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{all_finite, Scalar};

/// Tolerance for accepting an input as lying in the input box.
pub const INPUT_TOLERANCE: f64 = 1e-9;

pub type StepFn<T> = Arc<dyn Fn(&[T], &[T]) -> Vec<T> + Send + Sync>;
pub type BarrierFn<T> = Arc<dyn Fn(&[T]) -> T + Send + Sync>;

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct Interval<T> {
    pub lo: T,
    pub hi: T,
}

/// Axis-aligned box, one interval per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
#[serde(transparent)]
pub struct BoxBounds<T>(Vec<Interval<T>>);

impl<T: Scalar> BoxBounds<T> {
    pub fn new(axes: impl IntoIterator<Item = (T, T)>) -> Result<Self> {
        let axes: Vec<_> = axes
            .into_iter()
            .map(|(lo, hi)| Interval { lo, hi })
            .collect();
        for (axis, iv) in axes.iter().enumerate() {
            if !iv.lo.is_finite() || !iv.hi.is_finite() {
                return Err(Error::NonFinite("box bound"));
            }
            if iv.lo > iv.hi {
                return Err(Error::InvalidBox {
                    axis,
                    lo: iv.lo.as_f64(),
                    hi: iv.hi.as_f64(),
                });
            }
        }
        Ok(Self(axes))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn axes(&self) -> &[Interval<T>] {
        &self.0
    }

    pub fn contains(&self, x: &[T], tol: T) -> bool {
        x.len() == self.dim()
            && self
                .0
                .iter()
                .zip(x)
                .all(|(iv, &v)| v >= iv.lo - tol && v <= iv.hi + tol)
    }

    pub fn clamp(&self, x: &[T]) -> Vec<T> {
        self.0
            .iter()
            .zip(x)
            .map(|(iv, &v)| v.max(iv.lo).min(iv.hi))
            .collect()
    }

    /// Uniform per-axis points including both endpoints.
    pub fn axis_points(&self, axis: usize, resolution: usize) -> Vec<T> {
        let iv = self.0[axis];
        let last = resolution - 1;
        (0..resolution)
            .map(|k| {
                if k == last {
                    iv.hi
                } else {
                    let t = T::from_usize_lossy(k) / T::from_usize_lossy(last);
                    (iv.lo + (iv.hi - iv.lo) * t).min(iv.hi)
                }
            })
            .collect()
    }

    /// Cartesian product of the per-axis grids in row-major order (the last
    /// axis varies fastest).
    pub fn grid(&self, resolution: usize) -> Result<Vec<Vec<T>>> {
        if resolution < 2 {
            return Err(Error::ResolutionTooSmall(resolution));
        }
        let per_axis: Vec<Vec<T>> = (0..self.dim())
            .map(|a| self.axis_points(a, resolution))
            .collect();
        let mut points = vec![Vec::with_capacity(self.dim())];
        for axis in &per_axis {
            points = points
                .into_iter()
                .flat_map(|prefix| {
                    axis.iter().map(move |&v| {
                        let mut p = prefix.clone();
                        p.push(v);
                        p
                    })
                })
                .collect();
        }
        Ok(points)
    }

    /// Largest per-axis spacing of a grid with the given resolution.
    pub fn spacing(&self, resolution: usize) -> T {
        let d = T::from_usize_lossy(resolution.saturating_sub(1).max(1));
        self.0
            .iter()
            .map(|iv| (iv.hi - iv.lo) / d)
            .fold(T::zero(), T::max)
    }
}

/// Finite set of admissible inputs used in place of the continuous input box.
#[derive(Debug, Clone, PartialEq)]
pub struct InputGrid<T> {
    pub points: Vec<Vec<T>>,
    pub resolution: usize,
}

/// Which built-in produced a model. Used for progress metrics and the
/// scenario wire format.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind<T> {
    DoubleIntegrator { wall: T },
    Unicycle { center: [T; 2], radius: T },
    Custom(String),
}

#[derive(Clone)]
pub struct SystemModel<T> {
    kind: ModelKind<T>,
    state_dim: usize,
    input_dim: usize,
    step_map: StepFn<T>,
    barrier: BarrierFn<T>,
    input_box: BoxBounds<T>,
    state_box: BoxBounds<T>,
    dt: T,
}

impl<T: fmt::Debug> fmt::Debug for SystemModel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemModel")
            .field("kind", &self.kind)
            .field("state_dim", &self.state_dim)
            .field("input_dim", &self.input_dim)
            .field("input_box", &self.input_box)
            .field("state_box", &self.state_box)
            .field("dt", &self.dt)
            .finish_non_exhaustive()
    }
}

fn require_positive<T: Scalar>(what: &'static str, v: T) -> Result<()> {
    if v.is_finite() && v > T::zero() {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            what,
            value: v.as_f64(),
            expected: "> 0",
        })
    }
}

impl<T: Scalar> SystemModel<T> {
    /// A user-defined model. The step map must be deterministic and finite on
    /// `state_box x input_box`; dimensions come from the boxes.
    pub fn custom(
        name: impl Into<String>,
        state_box: BoxBounds<T>,
        input_box: BoxBounds<T>,
        dt: T,
        step_map: StepFn<T>,
        barrier: BarrierFn<T>,
    ) -> Result<Self> {
        Self::build(
            ModelKind::Custom(name.into()),
            state_box,
            input_box,
            dt,
            step_map,
            barrier,
        )
    }

    fn build(
        kind: ModelKind<T>,
        state_box: BoxBounds<T>,
        input_box: BoxBounds<T>,
        dt: T,
        step_map: StepFn<T>,
        barrier: BarrierFn<T>,
    ) -> Result<Self> {
        if state_box.dim() == 0 {
            return Err(Error::EmptyStateBox);
        }
        if input_box.dim() == 0 {
            return Err(Error::InvalidParameter("input box has no axes".into()));
        }
        require_positive("dt", dt)?;
        Ok(Self {
            kind,
            state_dim: state_box.dim(),
            input_dim: input_box.dim(),
            step_map,
            barrier,
            input_box,
            state_box,
            dt,
        })
    }

    /// Forward-Euler double integrator `p' = p + dt v`, `v' = v + dt u` with
    /// `|u| <= u_max` and barrier `h = wall - p`. The default state box is
    /// `p in [wall - 10, wall]`, `v in [0, 5 u_max]`.
    pub fn double_integrator(dt: T, u_max: T, wall: T) -> Result<Self> {
        require_positive("dt", dt)?;
        require_positive("u_max", u_max)?;
        if !wall.is_finite() {
            return Err(Error::NonFinite("wall"));
        }
        let step: StepFn<T> =
            Arc::new(move |x: &[T], u: &[T]| vec![x[0] + dt * x[1], x[1] + dt * u[0]]);
        let barrier: BarrierFn<T> = Arc::new(move |x: &[T]| wall - x[0]);
        Self::build(
            ModelKind::DoubleIntegrator { wall },
            BoxBounds::new([
                (wall - T::lit(10.0), wall),
                (T::zero(), T::lit(5.0) * u_max),
            ])?,
            BoxBounds::new([(-u_max, u_max)])?,
            dt,
            step,
            barrier,
        )
    }

    /// Forward-Euler unicycle with state `(x, y, theta)`, input `(v, omega)`
    /// in `[0, v_max] x [-omega_max, omega_max]` and barrier
    /// `h = |(x, y) - center|^2 - radius^2`. The default state box is the
    /// square of half-width 5 around the obstacle with `theta in [-pi, pi]`.
    pub fn unicycle(dt: T, v_max: T, omega_max: T, center: [T; 2], radius: T) -> Result<Self> {
        require_positive("dt", dt)?;
        require_positive("v_max", v_max)?;
        require_positive("omega_max", omega_max)?;
        require_positive("obstacle_radius", radius)?;
        if !all_finite(&center) {
            return Err(Error::NonFinite("obstacle_center"));
        }
        let step: StepFn<T> = Arc::new(move |x: &[T], u: &[T]| {
            vec![
                x[0] + dt * u[0] * x[2].cos(),
                x[1] + dt * u[0] * x[2].sin(),
                x[2] + dt * u[1],
            ]
        });
        let barrier: BarrierFn<T> = Arc::new(move |x: &[T]| {
            let dx = x[0] - center[0];
            let dy = x[1] - center[1];
            dx * dx + dy * dy - radius * radius
        });
        let half = T::lit(5.0);
        let pi = T::lit(std::f64::consts::PI);
        Self::build(
            ModelKind::Unicycle { center, radius },
            BoxBounds::new([
                (center[0] - half, center[0] + half),
                (center[1] - half, center[1] + half),
                (-pi, pi),
            ])?,
            BoxBounds::new([(T::zero(), v_max), (-omega_max, omega_max)])?,
            dt,
            step,
            barrier,
        )
    }

    pub fn with_state_box(mut self, state_box: BoxBounds<T>) -> Result<Self> {
        if state_box.dim() != self.state_dim {
            return Err(Error::DimensionMismatch {
                what: "state box",
                expected: self.state_dim,
                got: state_box.dim(),
            });
        }
        self.state_box = state_box;
        Ok(self)
    }

    pub fn kind(&self) -> &ModelKind<T> {
        &self.kind
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn input_box(&self) -> &BoxBounds<T> {
        &self.input_box
    }

    pub fn state_box(&self) -> &BoxBounds<T> {
        &self.state_box
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn check_state(&self, x: &[T]) -> Result<()> {
        if x.len() != self.state_dim {
            return Err(Error::DimensionMismatch {
                what: "state",
                expected: self.state_dim,
                got: x.len(),
            });
        }
        if !all_finite(x) {
            return Err(Error::NonFinite("state"));
        }
        Ok(())
    }

    pub fn check_input(&self, u: &[T]) -> Result<()> {
        if u.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                what: "input",
                expected: self.input_dim,
                got: u.len(),
            });
        }
        let tol = T::lit(INPUT_TOLERANCE);
        for (axis, (iv, &v)) in self.input_box.axes().iter().zip(u).enumerate() {
            if !(v >= iv.lo - tol && v <= iv.hi + tol) {
                return Err(Error::InputOutOfBounds {
                    axis,
                    value: v.as_f64(),
                    lo: iv.lo.as_f64(),
                    hi: iv.hi.as_f64(),
                });
            }
        }
        Ok(())
    }

    /// `f(x, u)` after checking dimensions and the input bounds.
    pub fn step(&self, x: &[T], u: &[T]) -> Result<Vec<T>> {
        self.check_state(x)?;
        self.check_input(u)?;
        Ok(self.step_unchecked(x, u))
    }

    pub(crate) fn step_unchecked(&self, x: &[T], u: &[T]) -> Vec<T> {
        (self.step_map)(x, u)
    }

    /// Base barrier `h(x)`.
    pub fn barrier(&self, x: &[T]) -> T {
        (self.barrier)(x)
    }

    pub fn input_grid(&self, resolution: usize) -> Result<InputGrid<T>> {
        Ok(InputGrid {
            points: self.input_box.grid(resolution)?,
            resolution,
        })
    }
}
