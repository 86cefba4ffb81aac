//! Preconditioned Nesterov iteration with Barzilai-Borwein step lengths.

/// Optimizer bookkeeping over the flat `[x.., y..]` layout.
///
/// `u` is the main sequence and `v` the extrapolated point where the
/// gradient is evaluated. Entries whose `movable` flag is false never change.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    /// Nesterov momentum parameter, starts at 1.
    pub a: f64,
    pub bb_step: f64,
    pub noise_level: f64,
    pub step_scale: f64,
    pub momentum_scale: f64,
    /// Upper bound on any coordinate's gradient move per step. BB steps blow
    /// up where the gradient is nearly constant, e.g. a collapsed start.
    pub max_displacement: f64,
    pub movable: Vec<bool>,
    /// Extrapolated point and preconditioned gradient of the previous step.
    pub prev_v: Option<Vec<f64>>,
    pub prev_grad: Option<Vec<f64>>,
}

/// Denominators below this keep the previous BB step.
const BB_MIN_DENOM: f64 = 1e-20;

impl OptimizerState {
    pub fn new(position: Vec<f64>, movable: Vec<bool>, initial_step: f64) -> Self {
        assert_eq!(position.len(), movable.len());
        Self {
            v: position.clone(),
            u: position,
            a: 1.0,
            bb_step: initial_step,
            noise_level: 0.0,
            step_scale: 1.0,
            momentum_scale: 1.0,
            max_displacement: f64::INFINITY,
            movable,
            prev_v: None,
            prev_grad: None,
        }
    }

    /// Drops momentum and step history, e.g. after a noise kick.
    pub fn reset_momentum(&mut self) {
        self.u.clone_from(&self.v);
        self.a = 1.0;
        self.prev_v = None;
        self.prev_grad = None;
    }

    /// Clamps `u` and `v` into per-coordinate bounds (movable entries only).
    pub fn project(&mut self, lo: &[f64], hi: &[f64]) {
        for k in 0..self.u.len() {
            if self.movable[k] {
                self.u[k] = self.u[k].clamp(lo[k], hi[k]);
                self.v[k] = self.v[k].clamp(lo[k], hi[k]);
            }
        }
    }

    /// Mirrors out-of-bounds entries back inside, then clamps. Unlike plain
    /// clamping this does not pile cells that overshoot a wall onto the
    /// same coordinate, where they would feel identical forces from then on.
    pub fn reflect(&mut self, lo: &[f64], hi: &[f64]) {
        let mirror = |x: f64, lo: f64, hi: f64| {
            let x = if x < lo { 2.0 * lo - x } else { x };
            let x = if x > hi { 2.0 * hi - x } else { x };
            x.clamp(lo, hi)
        };
        for k in 0..self.u.len() {
            if self.movable[k] {
                self.u[k] = mirror(self.u[k], lo[k], hi[k]);
                self.v[k] = mirror(self.v[k], lo[k], hi[k]);
            }
        }
    }

    /// One step given the raw gradient at `v` and a diagonal preconditioner.
    pub fn step(&mut self, grad: &[f64], diag: &[f64]) {
        let n = self.v.len();
        assert_eq!(grad.len(), n);
        assert_eq!(diag.len(), n);
        let g: Vec<f64> = (0..n)
            .map(|k| {
                if self.movable[k] {
                    grad[k] / diag[k]
                } else {
                    0.0
                }
            })
            .collect();

        if let (Some(pv), Some(pg)) = (&self.prev_v, &self.prev_grad) {
            let mut sg = 0.0;
            let mut gg = 0.0;
            for k in 0..n {
                let dx = self.v[k] - pv[k];
                let dg = g[k] - pg[k];
                sg += dx * dg;
                gg += dg * dg;
            }
            if gg >= BB_MIN_DENOM {
                self.bb_step = sg.abs() / gg;
            }
        }

        let gmax = g.iter().fold(0.0, |m: f64, x| m.max(x.abs()));
        let mut alpha = self.step_scale * self.bb_step;
        if gmax * alpha > self.max_displacement {
            alpha = self.max_displacement / gmax;
        }
        let u_new: Vec<f64> = (0..n).map(|k| self.v[k] - alpha * g[k]).collect();
        let a_new = 0.5 * (1.0 + (1.0 + 4.0 * self.a * self.a).sqrt());
        let coef = self.momentum_scale * (self.a - 1.0) / a_new;
        let v_new: Vec<f64> = (0..n)
            .map(|k| u_new[k] + coef * (u_new[k] - self.u[k]))
            .collect();

        self.prev_v = Some(std::mem::replace(&mut self.v, v_new));
        self.prev_grad = Some(g);
        self.u = u_new;
        self.a = a_new;
    }
}

/// Functional form of [`OptimizerState::step`].
pub fn nesterov_bb_step(
    mut opt: OptimizerState,
    grad: &[f64],
    precond_diag: &[f64],
) -> OptimizerState {
    opt.step(grad, precond_diag);
    opt
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bb_step_on_quadratic_is_inverse_curvature() {
        for k in [0.5, 2.0, 7.25, 1e3] {
            let mut opt = OptimizerState::new(vec![3.0], vec![true], 0.1);
            for _ in 0..2 {
                let g = k * opt.v[0];
                opt.step(&[g], &[1.0]);
            }
            assert!((opt.bb_step - 1.0 / k).abs() <= 4.0 * f64::EPSILON / k);
        }
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let start = vec![1.0, -2.0, 3.5, 0.25];
        let mut opt = OptimizerState::new(start.clone(), vec![true; 4], 0.5);
        for _ in 0..5 {
            opt.step(&[0.0; 4], &[1.0; 4]);
        }
        assert_eq!(opt.v, start);
        assert_eq!(opt.u, start);
    }

    #[test]
    fn frozen_entries_never_move() {
        let mut opt = OptimizerState::new(vec![1.0, 1.0], vec![true, false], 0.5);
        for _ in 0..5 {
            let g = [opt.v[0], opt.v[1]];
            opt.step(&g, &[1.0, 1.0]);
        }
        assert_eq!(opt.v[1], 1.0);
        assert!(opt.v[0].abs() < 1.0);
    }
}
