//! Nelder–Mead simplex minimisation for small unconstrained problems.

#[derive(Clone, Debug)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct NelderMead {
    pub max_iter: usize,
    /// Stop when the spread of simplex values falls below this.
    pub f_tol: f64,
    /// Stop when the simplex diameter falls below this.
    pub x_tol: f64,
    /// Initial edge length relative to each coordinate (absolute if the coordinate is 0).
    pub initial_step: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        NelderMead {
            max_iter: 4000,
            f_tol: 1e-16,
            x_tol: 1e-10,
            initial_step: 0.1,
        }
    }
}

impl NelderMead {
    pub fn minimize<F: Fn(&[f64]) -> f64>(&self, f: F, start: &[f64]) -> Minimum {
        let n = start.len();
        let eval = |x: &[f64]| {
            let v = f(x);
            if v.is_nan() {
                f64::INFINITY
            } else {
                v
            }
        };
        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
        simplex.push((start.to_vec(), eval(start)));
        for i in 0..n {
            let mut x = start.to_vec();
            x[i] += if x[i] != 0.0 { self.initial_step * x[i] } else { self.initial_step };
            let v = eval(&x);
            simplex.push((x, v));
        }

        let mut iterations = 0;
        while iterations < self.max_iter {
            iterations += 1;
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let best = simplex[0].1;
            let worst = simplex[n].1;
            let diameter = simplex[1..]
                .iter()
                .map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
                .fold(0.0, f64::max);
            if (worst - best).abs() <= self.f_tol * (best.abs() + 1e-300) && diameter <= self.x_tol {
                break;
            }
            if diameter <= self.x_tol * 1e-3 {
                break;
            }

            let centroid: Vec<f64> = (0..n)
                .map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / n as f64)
                .collect();
            let along = |t: f64| -> Vec<f64> {
                centroid
                    .iter()
                    .zip(&simplex[n].0)
                    .map(|(c, w)| c + t * (w - c))
                    .collect()
            };

            let xr = along(-1.0);
            let fr = eval(&xr);
            if fr < simplex[0].1 {
                let xe = along(-2.0);
                let fe = eval(&xe);
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
                continue;
            }
            if fr < simplex[n - 1].1 {
                simplex[n] = (xr, fr);
                continue;
            }
            let (xc, fc) = if fr < worst {
                let x = along(-0.5);
                let v = eval(&x);
                (x, v)
            } else {
                let x = along(0.5);
                let v = eval(&x);
                (x, v)
            };
            if fc < worst.min(fr) {
                simplex[n] = (xc, fc);
                continue;
            }
            // Shrink towards the best vertex.
            let b = simplex[0].0.clone();
            for (x, v) in simplex.iter_mut().skip(1) {
                for (xi, bi) in x.iter_mut().zip(&b) {
                    *xi = bi + 0.5 * (*xi - bi);
                }
                *v = eval(x);
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (x, value) = simplex.swap_remove(0);
        Minimum { x, value, iterations }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let m = NelderMead::default().minimize(f, &[-1.2, 1.0]);
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6, "{:?}", m);
    }

    #[test]
    fn quadratic_bowl_and_infinite_penalty() {
        let f = |x: &[f64]| {
            if x[0] <= 0.0 {
                f64::INFINITY
            } else {
                (x[0] - 2.0).powi(2) + (x[1] + 3.0).powi(2)
            }
        };
        let m = NelderMead::default().minimize(f, &[1.0, 1.0]);
        assert!((m.x[0] - 2.0).abs() < 1e-7 && (m.x[1] + 3.0).abs() < 1e-7);
    }
}
