//! The recursive barrier cascade `b_0 .. b_r` of an input-constrained CBF,
//! the sets `C_i = {b_i >= 0}` with their intersection `C*`, and the
//! constraint function `psi(x, u) = Δb_r(x, u) + alpha_r(b_r(x))`.
//!
//! The infimum over the input set is taken over a finite input grid that
//! always contains the box vertices. For dynamics whose barrier increments
//! are affine in the input this makes the grid minimum exact.

use dashmap::DashMap;
use serde::{Deserialize, Serialize};

use crate::classk::{check_classk, standard_grid, ClassKFn, ClassKVerdict};
use crate::dynamics::{InputGrid, SystemModel};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_INPUT_RESOLUTION: usize = 11;

/// Entries beyond this are computed but not memoized.
const CACHE_CAPACITY: usize = 1 << 20;

/// Ordered class-K functions `(alpha_0, .., alpha_r)`; `r = len - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct AlphaVector<T> {
    pub id: String,
    alphas: Vec<ClassKFn<T>>,
}

impl<T: Scalar> AlphaVector<T> {
    /// Every element must pass [`check_classk`] on the standard grid. The only
    /// exception is a depth-0 vector holding a linear `gamma = 1`, i.e. the
    /// exponential CBF.
    pub fn new(id: impl Into<String>, alphas: Vec<ClassKFn<T>>) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::InvalidClassK("alpha vector is empty".into()));
        }
        let exponential_ok = alphas.len() == 1 && alphas[0].is_exponential();
        if !exponential_ok {
            let grid = standard_grid::<T>();
            for (level, a) in alphas.iter().enumerate() {
                if let ClassKVerdict::FailAt(z) = check_classk(a, &grid)? {
                    return Err(Error::InvalidClassK(format!(
                        "alpha_{level} fails the class-K check at z = {z}"
                    )));
                }
            }
        }
        Ok(Self {
            id: id.into(),
            alphas,
        })
    }

    /// All-linear vector with an id derived from the coefficients, e.g.
    /// `lin(0.02,0.5)`.
    pub fn linear(gammas: &[T]) -> Result<Self> {
        let alphas = gammas
            .iter()
            .map(|&g| ClassKFn::linear(g))
            .collect::<Result<Vec<_>>>()?;
        let id = format!(
            "lin({})",
            alphas
                .iter()
                .map(|a| a.label())
                .collect::<Vec<_>>()
                .join(",")
        );
        Self::new(id, alphas)
    }

    /// Recursion depth `r`.
    pub fn depth(&self) -> usize {
        self.alphas.len() - 1
    }

    pub fn alphas(&self) -> &[ClassKFn<T>] {
        &self.alphas
    }
}

/// Per-level membership of a state in `C_0 .. C_r` and in `C*`.
#[derive(Debug, Clone, PartialEq)]
pub struct Membership<T> {
    pub values: Vec<T>,
    pub levels: Vec<bool>,
    pub in_c_star: bool,
}

type CacheKey = (usize, Vec<u64>);

/// An [`AlphaVector`] bound to a model and an input grid.
///
/// Values of `b_i` for `i >= 1` are memoized by the exact bit pattern of the
/// state, so results with and without the cache are bit-identical. The memo
/// is shared across threads.
#[derive(Debug)]
pub struct BarrierCascade<T> {
    model: SystemModel<T>,
    alpha: AlphaVector<T>,
    grid: InputGrid<T>,
    cache: Option<DashMap<CacheKey, T>>,
}

impl<T: Scalar> Clone for BarrierCascade<T> {
    fn clone(&self) -> Self {
        Self {
            model: self.model.clone(),
            alpha: self.alpha.clone(),
            grid: self.grid.clone(),
            cache: self.cache.as_ref().map(|_| DashMap::new()),
        }
    }
}

impl<T: Scalar> BarrierCascade<T> {
    pub fn new(
        model: SystemModel<T>,
        alpha: AlphaVector<T>,
        input_resolution: usize,
    ) -> Result<Self> {
        let grid = model.input_grid(input_resolution)?;
        Ok(Self {
            model,
            alpha,
            grid,
            cache: Some(DashMap::new()),
        })
    }

    pub fn without_cache(mut self) -> Self {
        self.cache = None;
        self
    }

    pub fn model(&self) -> &SystemModel<T> {
        &self.model
    }

    pub fn alpha(&self) -> &AlphaVector<T> {
        &self.alpha
    }

    pub fn depth(&self) -> usize {
        self.alpha.depth()
    }

    pub fn input_grid(&self) -> &InputGrid<T> {
        &self.grid
    }

    pub fn input_resolution(&self) -> usize {
        self.grid.resolution
    }

    pub fn cache_len(&self) -> usize {
        self.cache.as_ref().map_or(0, |c| c.len())
    }

    fn check_level(&self, level: usize) -> Result<()> {
        if level > self.depth() {
            Err(Error::LevelOutOfRange {
                level,
                depth: self.depth(),
            })
        } else {
            Ok(())
        }
    }

    /// `b_i(x)`. For `i >= 1` this is the grid minimum of
    /// `b_{i-1}(f(x, u)) - b_{i-1}(x)` plus `alpha_{i-1}(b_{i-1}(x))`.
    pub fn eval_b(&self, x: &[T], level: usize) -> Result<T> {
        self.check_level(level)?;
        self.model.check_state(x)?;
        Ok(self.b(x, level))
    }

    /// `[b_0(x), .., b_r(x)]`.
    pub fn b_values(&self, x: &[T]) -> Result<Vec<T>> {
        self.model.check_state(x)?;
        Ok((0..=self.depth()).map(|i| self.b(x, i)).collect())
    }

    /// `Δb_i(x, u) = b_i(f(x, u)) - b_i(x)`.
    pub fn delta_b(&self, x: &[T], u: &[T], level: usize) -> Result<T> {
        self.check_level(level)?;
        let next = self.model.step(x, u)?;
        self.model.check_state(&next)?;
        Ok(self.b(&next, level) - self.b(x, level))
    }

    /// `psi(x, u) = Δb_r(x, u) + alpha_r(b_r(x))`.
    pub fn eval_psi(&self, x: &[T], u: &[T]) -> Result<T> {
        let r = self.depth();
        let next = self.model.step(x, u)?;
        let br = self.b(x, r);
        Ok(self.b(&next, r) - br + self.alpha.alphas[r].apply(br))
    }

    /// `psi(x, u)` for every point of the input grid, in grid order.
    pub fn psi_row(&self, x: &[T]) -> Result<Vec<T>> {
        self.model.check_state(x)?;
        let r = self.depth();
        let br = self.b(x, r);
        let slack = self.alpha.alphas[r].apply(br);
        Ok(self
            .grid
            .points
            .iter()
            .map(|u| {
                let next = self.model.step_unchecked(x, u);
                self.b(&next, r) - br + slack
            })
            .collect())
    }

    /// Membership in each `C_i = {b_i >= 0}` and in their intersection `C*`.
    pub fn membership(&self, x: &[T]) -> Result<Membership<T>> {
        let values = self.b_values(x)?;
        let levels: Vec<bool> = values.iter().map(|&b| b >= T::zero()).collect();
        let in_c_star = levels.iter().all(|&l| l);
        Ok(Membership {
            values,
            levels,
            in_c_star,
        })
    }

    pub fn in_c_star(&self, x: &[T]) -> Result<bool> {
        Ok(self.membership(x)?.in_c_star)
    }

    fn key(level: usize, x: &[T]) -> CacheKey {
        (level, x.iter().map(|v| v.as_f64().to_bits()).collect())
    }

    fn b(&self, x: &[T], level: usize) -> T {
        if level == 0 {
            return self.model.barrier(x);
        }
        let key = self.cache.as_ref().map(|_| Self::key(level, x));
        if let (Some(cache), Some(k)) = (&self.cache, &key) {
            if let Some(v) = cache.get(k) {
                return *v;
            }
        }
        let prev = self.b(x, level - 1);
        let mut inf = T::infinity();
        for u in &self.grid.points {
            let next = self.model.step_unchecked(x, u);
            let d = self.b(&next, level - 1) - prev;
            // NaN is sticky: once seen, the minimum stays NaN
            if d.is_nan() || d < inf {
                inf = d;
            }
        }
        let value = inf + self.alpha.alphas[level - 1].apply(prev);
        if let (Some(cache), Some(k)) = (&self.cache, key) {
            if cache.len() < CACHE_CAPACITY {
                cache.insert(k, value);
            }
        }
        value
    }
}
