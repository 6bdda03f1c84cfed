//! Surfaces through the coarse scan grid, evaluated on the fine grid.

use nalgebra::{SMatrix, SVector};

use crate::optics::ACCEPTANCE_LEVEL;

/// Coarse grid of short-circuit currents, rows along elevation offsets and
/// columns along azimuth offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseGrid {
    pub az: Vec<f64>,
    pub el: Vec<f64>,
    /// Row-major: `values[row * az.len() + col]`.
    pub values: Vec<f64>,
}

impl CoarseGrid {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.az.len() + col]
    }

    /// Row-major first maximum, as (row, col, value).
    pub fn argmax(&self) -> (usize, usize, f64) {
        let mut best = (0, 0, f64::NEG_INFINITY);
        for row in 0..self.el.len() {
            for col in 0..self.az.len() {
                let v = self.get(row, col);
                if v > best.2 {
                    best = (row, col, v);
                }
            }
        }
        best
    }

    pub fn bilinear(&self, x: f64, y: f64) -> f64 {
        let (c, tx) = bracket(&self.az, x);
        let (r, ty) = bracket(&self.el, y);
        let v00 = self.get(r, c);
        let v01 = self.get(r, c + 1);
        let v10 = self.get(r + 1, c);
        let v11 = self.get(r + 1, c + 1);
        (1.0 - ty) * ((1.0 - tx) * v00 + tx * v01) + ty * ((1.0 - tx) * v10 + tx * v11)
    }
}

fn bracket(nodes: &[f64], x: f64) -> (usize, f64) {
    let n = nodes.len();
    let i = nodes.partition_point(|&v| v <= x).saturating_sub(1).min(n - 2);
    let t = ((x - nodes[i]) / (nodes[i + 1] - nodes[i])).clamp(0.0, 1.0);
    (i, t)
}

/// Acceptance-shaped surface `A * 0.9^(rho^p)` with an elliptical radius
/// `rho` around a free centre, in pointing-offset coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileSurface {
    pub center_az: f64,
    pub center_el: f64,
    pub amplitude: f64,
    pub width_az: f64,
    pub width_el: f64,
    pub exponent: f64,
}

impl ProfileSurface {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let u = ((x - self.center_az) / self.width_az).powi(2) + ((y - self.center_el) / self.width_el).powi(2);
        self.amplitude * ACCEPTANCE_LEVEL.powf(u.powf(0.5 * self.exponent))
    }

    fn from_params(q: &SVector<f64, 5>, exponent: f64) -> Self {
        Self {
            center_az: q[0],
            center_el: q[1],
            amplitude: q[2].exp(),
            width_az: q[3].exp(),
            width_el: q[4].exp(),
            exponent,
        }
    }

    /// Value and gradient with respect to (cx, cy, ln A, ln wx, ln wy).
    fn eval_with_gradient(&self, x: f64, y: f64) -> (f64, [f64; 5]) {
        let dx = x - self.center_az;
        let dy = y - self.center_el;
        let (wx2, wy2) = (self.width_az.powi(2), self.width_el.powi(2));
        let u = dx * dx / wx2 + dy * dy / wy2;
        let half_p = 0.5 * self.exponent;
        let m = self.amplitude * ACCEPTANCE_LEVEL.powf(u.powf(half_p));
        // dm/du = m ln(0.9) (p/2) u^(p/2 - 1)
        let dm_du = if u > 0.0 { m * ACCEPTANCE_LEVEL.ln() * half_p * u.powf(half_p - 1.0) } else { 0.0 };
        (
            m,
            [
                dm_du * (-2.0 * dx / wx2),
                dm_du * (-2.0 * dy / wy2),
                m,
                dm_du * (-2.0 * dx * dx / wx2),
                dm_du * (-2.0 * dy * dy / wy2),
            ],
        )
    }
}

/// Levenberg-Marquardt fit of a [`ProfileSurface`] to the coarse grid.
/// Returns `None` when the fit does not settle on a sane surface.
pub fn fit_profile(grid: &CoarseGrid, exponent: f64, width_guess: (f64, f64)) -> Option<ProfileSurface> {
    let (row, col, peak) = grid.argmax();
    if !(peak > 0.0) {
        return None;
    }
    let mut q =
        SVector::<f64, 5>::from([grid.az[col], grid.el[row], peak.ln(), width_guess.0.ln(), width_guess.1.ln()]);
    let points: Vec<(f64, f64, f64)> = (0..grid.el.len())
        .flat_map(|r| (0..grid.az.len()).map(move |c| (r, c)))
        .map(|(r, c)| (grid.az[c], grid.el[r], grid.get(r, c) / peak))
        .collect();
    // fit the normalised grid, then restore the scale
    q[2] = 0.0;

    let cost_and_system = |q: &SVector<f64, 5>| {
        let surface = ProfileSurface::from_params(q, exponent);
        let mut jtj = SMatrix::<f64, 5, 5>::zeros();
        let mut jtr = SVector::<f64, 5>::zeros();
        let mut cost = 0.0;
        for &(x, y, v) in &points {
            let (m, g) = surface.eval_with_gradient(x, y);
            let r = m - v;
            cost += r * r;
            let g = SVector::<f64, 5>::from(g);
            jtj += g * g.transpose();
            jtr += g * r;
        }
        (cost, jtj, jtr)
    };

    let mut lambda = 1e-3;
    let (mut cost, mut jtj, mut jtr) = cost_and_system(&q);
    for _ in 0..500 {
        if cost < 1e-28 {
            break;
        }
        let mut a = jtj;
        for i in 0..5 {
            a[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
        }
        let Some(step) = a.lu().solve(&(-jtr)) else {
            lambda *= 10.0;
            continue;
        };
        let trial = q + step;
        let (trial_cost, trial_jtj, trial_jtr) = cost_and_system(&trial);
        if trial_cost.is_finite() && trial_cost < cost {
            let improvement = cost - trial_cost;
            q = trial;
            cost = trial_cost;
            jtj = trial_jtj;
            jtr = trial_jtr;
            lambda = (lambda / 3.0).max(1e-12);
            if step.amax() < 1e-12 || improvement < 1e-16 * cost.max(1e-300) {
                break;
            }
        } else {
            lambda *= 4.0;
            if lambda > 1e12 {
                break;
            }
        }
    }

    let mut surface = ProfileSurface::from_params(&q, exponent);
    surface.amplitude *= peak;
    let span = |v: &[f64]| v[v.len() - 1] - v[0];
    let sane = q.iter().all(|x| x.is_finite())
        && surface.width_az > 1e-3 * width_guess.0
        && surface.width_el > 1e-3 * width_guess.1
        && surface.width_az < 1e3 * width_guess.0
        && surface.width_el < 1e3 * width_guess.1
        && (surface.center_az - grid.az[col]).abs() < 10.0 * span(&grid.az)
        && (surface.center_el - grid.el[row]).abs() < 10.0 * span(&grid.el);
    sane.then_some(surface)
}
