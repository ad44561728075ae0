//! Uniform phase-space grid: a periodic spatial grid on the torus and a
//! symmetric velocity grid on `[-v_max, v_max]`.
//!
//! Velocity cells are stored 0-based in a contiguous array of length `2L`.
//! Storage index `idx` corresponds to the signed label `j = idx - L + 1`,
//! so `j` runs over `{-L+1, ..., L}` and the interface `v_{1/2} = 0` sits
//! between storage indices `L - 1` and `L`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMesh {
    n_x: usize,
    torus_length: f64,
    dx: f64,
    n_v_half: usize,
    v_max: f64,
    dv: f64,
    v_centers: Vec<f64>,
}

impl PhaseMesh {
    pub fn new(n_x: usize, torus_length: f64, n_v_half: usize, v_max: f64) -> Result<Self> {
        if n_x.is_multiple_of(2) {
            return Err(Error::EvenSpatialGrid(n_x));
        }
        if n_x < 3 {
            return Err(Error::NonPositiveExtent("n_x must be at least 3"));
        }
        if n_v_half == 0 {
            return Err(Error::NonPositiveExtent("n_v_half"));
        }
        if !(torus_length > 0.0 && torus_length.is_finite()) {
            return Err(Error::NonPositiveExtent("torus_length"));
        }
        if !(v_max > 0.0 && v_max.is_finite()) {
            return Err(Error::NonPositiveExtent("v_max"));
        }

        let dx = torus_length / n_x as f64;
        let dv = v_max / n_v_half as f64;
        let n_v = 2 * n_v_half;
        let mut v_centers = vec![0.0; n_v];
        // Positive half is evaluated, negative half is mirrored bit-exactly.
        for j in 1..=n_v_half {
            let v = (j as f64 - 0.5) * dv;
            v_centers[n_v_half + j - 1] = v;
            v_centers[n_v_half - j] = -v;
        }

        Ok(Self {
            n_x,
            torus_length,
            dx,
            n_v_half,
            v_max,
            dv,
            v_centers,
        })
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn torus_length(&self) -> f64 {
        self.torus_length
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Number of positive velocity cells `L`.
    pub fn n_v_half(&self) -> usize {
        self.n_v_half
    }

    /// Total number of velocity cells `2L`.
    pub fn n_v(&self) -> usize {
        2 * self.n_v_half
    }

    pub fn v_max(&self) -> f64 {
        self.v_max
    }

    pub fn dv(&self) -> f64 {
        self.dv
    }

    pub fn v_centers(&self) -> &[f64] {
        &self.v_centers
    }

    #[inline]
    pub fn velocity(&self, idx: usize) -> f64 {
        self.v_centers[idx]
    }

    /// Shape `(n_x, 2L)` of a phase-space array on this mesh.
    pub fn shape(&self) -> (usize, usize) {
        (self.n_x, self.n_v())
    }

    /// Spatial cell center `x_i = (i + 1/2) dx`.
    pub fn x_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dx
    }

    pub fn x_centers(&self) -> Vec<f64> {
        (0..self.n_x).map(|i| self.x_center(i)).collect()
    }

    /// Signed label `j` of storage index `idx`.
    pub fn velocity_label(&self, idx: usize) -> i64 {
        idx as i64 - self.n_v_half as i64 + 1
    }

    /// Storage index of signed label `j`, if it lies in `{-L+1, ..., L}`.
    pub fn velocity_index(&self, label: i64) -> Option<usize> {
        let idx = label + self.n_v_half as i64 - 1;
        (0..self.n_v() as i64).contains(&idx).then_some(idx as usize)
    }

    /// Storage index of the reflected cell `j -> -j + 1`.
    #[inline]
    pub fn mirror(&self, idx: usize) -> usize {
        self.n_v() - 1 - idx
    }

    /// Periodic successor of spatial index `i`.
    #[inline]
    pub fn next(&self, i: usize) -> usize {
        if i + 1 == self.n_x {
            0
        } else {
            i + 1
        }
    }

    /// Periodic predecessor of spatial index `i`.
    #[inline]
    pub fn prev(&self, i: usize) -> usize {
        if i == 0 {
            self.n_x - 1
        } else {
            i - 1
        }
    }
}
