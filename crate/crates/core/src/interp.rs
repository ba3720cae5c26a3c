//! Interpolation of node vectors: natural cubic splines on one axis and tensor-product local
//! cubic (four-point Lagrange) interpolation on a regular lattice.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::C64;

/// Index of the interval `[x[k], x[k+1]]` containing `t` (clamped to the ends).
pub fn interval(x: &[f64], t: f64) -> usize {
    let n = x.len();
    if t <= x[0] {
        return 0;
    }
    if t >= x[n - 1] {
        return n - 2;
    }
    x.partition_point(|&v| v <= t).saturating_sub(1).min(n - 2)
}

/// Natural cubic spline through vector-valued nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Spline {
    x: Vec<f64>,
    width: usize,
    y: Vec<C64>,
    /// Second derivatives at the nodes.
    m: Vec<C64>,
}

impl Spline {
    /// `y` holds `x.len()` rows of `width` values. Needs at least two strictly increasing nodes.
    pub fn new(x: &[f64], y: Vec<C64>, width: usize) -> Result<Self> {
        let n = x.len();
        if n < 2 || y.len() != n * width {
            return Err(Error::Parameter("spline needs at least two nodes of equal width".into()));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Parameter("spline nodes must be strictly increasing".into()));
        }
        let zero = C64::new(0.0, 0.0);
        let mut m = vec![zero; n * width];
        if n > 2 {
            // Thomas algorithm on the interior equations, shared across components
            let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
            let mut c = vec![0.0; n];
            let mut d = vec![zero; n * width];
            for i in 1..n - 1 {
                let a = h[i - 1];
                let b = 2.0 * (h[i - 1] + h[i]);
                let cc = h[i];
                let denom = b - a * c[i - 1];
                c[i] = cc / denom;
                for k in 0..width {
                    let rhs = (y[(i + 1) * width + k] - y[i * width + k]) * (6.0 / h[i])
                        - (y[i * width + k] - y[(i - 1) * width + k]) * (6.0 / h[i - 1]);
                    d[i * width + k] = (rhs - d[(i - 1) * width + k] * a) / denom;
                }
            }
            for i in (1..n - 1).rev() {
                for k in 0..width {
                    m[i * width + k] = d[i * width + k] - m[(i + 1) * width + k] * c[i];
                }
            }
        }
        Ok(Self {
            x: x.to_vec(),
            width,
            y,
            m,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.x
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Value at `t` (extrapolates with the end cubic outside the node range).
    pub fn eval(&self, t: f64, out: &mut [C64]) {
        let k = interval(&self.x, t);
        let w = self.width;
        let h = self.x[k + 1] - self.x[k];
        let a = (self.x[k + 1] - t) / h;
        let b = (t - self.x[k]) / h;
        // exact node values when t hits a node
        if b == 0.0 {
            out.copy_from_slice(&self.y[k * w..(k + 1) * w]);
            return;
        }
        if a == 0.0 {
            out.copy_from_slice(&self.y[(k + 1) * w..(k + 2) * w]);
            return;
        }
        let ca = (a * a * a - a) * h * h / 6.0;
        let cb = (b * b * b - b) * h * h / 6.0;
        for i in 0..w {
            out[i] = self.y[k * w + i] * a
                + self.y[(k + 1) * w + i] * b
                + self.m[k * w + i] * ca
                + self.m[(k + 1) * w + i] * cb;
        }
    }
}

/// Four-point (or fewer on short axes) Lagrange weights around `t`.
pub fn lagrange_weights(x: &[f64], t: f64) -> (usize, Vec<f64>) {
    let n = x.len();
    let p = n.min(4);
    let k = interval(x, t);
    let start = (k + 1).saturating_sub(p / 2).min(n - p);
    let mut w = vec![1.0; p];
    for i in 0..p {
        let xi = x[start + i];
        if xi == t {
            let mut exact = vec![0.0; p];
            exact[i] = 1.0;
            return (start, exact);
        }
        for j in 0..p {
            if i != j {
                w[i] *= (t - x[start + j]) / (xi - x[start + j]);
            }
        }
    }
    (start, w)
}

/// Tensor-product local cubic interpolation over a 3-D lattice of node vectors stored with
/// the last axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeInterpolant {
    axes: [Vec<f64>; 3],
    width: usize,
    y: Vec<C64>,
}

impl LatticeInterpolant {
    pub fn new(axes: [Vec<f64>; 3], y: Vec<C64>, width: usize) -> Result<Self> {
        let count: usize = axes.iter().map(|a| a.len()).product();
        if axes.iter().any(|a| a.len() < 2) || y.len() != count * width {
            return Err(Error::Parameter("lattice interpolant needs two nodes per axis".into()));
        }
        for a in &axes {
            if a.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::Parameter("lattice axes must be strictly increasing".into()));
            }
        }
        Ok(Self { axes, width, y })
    }

    pub fn axes(&self) -> &[Vec<f64>; 3] {
        &self.axes
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn eval(&self, t: [f64; 3], out: &mut [C64]) {
        let (s0, w0) = lagrange_weights(&self.axes[0], t[0]);
        let (s1, w1) = lagrange_weights(&self.axes[1], t[1]);
        let (s2, w2) = lagrange_weights(&self.axes[2], t[2]);
        let (n1, n2) = (self.axes[1].len(), self.axes[2].len());
        let w = self.width;
        out.fill(C64::new(0.0, 0.0));
        for (i, a) in w0.iter().enumerate() {
            for (j, b) in w1.iter().enumerate() {
                for (k, c) in w2.iter().enumerate() {
                    let weight = a * b * c;
                    if weight == 0.0 {
                        continue;
                    }
                    let node = ((s0 + i) * n1 + s1 + j) * n2 + s2 + k;
                    let row = &self.y[node * w..(node + 1) * w];
                    for (o, v) in out.iter_mut().zip(row) {
                        *o += v * weight;
                    }
                }
            }
        }
    }
}
