use nalgebra::DVector;

use crate::error::{Error, Result};

/// One classical RK4 step of `ẏ = f(t, y)`.
pub fn rk4_step<F>(f: F, t: f64, y: &DVector<f64>, h: f64) -> Result<DVector<f64>>
where
    F: Fn(f64, &DVector<f64>, &mut DVector<f64>),
{
    let mut ws = Rk4::new(y.len());
    let mut out = y.clone();
    ws.step(f, t, &mut out, h)?;
    Ok(out)
}

/// Reusable RK4 scratch space, so long integrations do not allocate per step.
#[derive(Debug, Clone)]
pub struct Rk4 {
    k1: DVector<f64>,
    k2: DVector<f64>,
    k3: DVector<f64>,
    k4: DVector<f64>,
    tmp: DVector<f64>,
}

impl Rk4 {
    pub fn new(n: usize) -> Self {
        let z = DVector::zeros(n);
        Self {
            k1: z.clone(),
            k2: z.clone(),
            k3: z.clone(),
            k4: z.clone(),
            tmp: z,
        }
    }

    /// Advances `y` in place by `h`. A non-finite result is reported and `y`
    /// is left holding it.
    pub fn step<F>(&mut self, f: F, t: f64, y: &mut DVector<f64>, h: f64) -> Result<()>
    where
        F: Fn(f64, &DVector<f64>, &mut DVector<f64>),
    {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::param(format!("RK4 step size {h} must be positive")));
        }
        f(t, y, &mut self.k1);
        self.tmp.copy_from(y);
        self.tmp.axpy(0.5 * h, &self.k1, 1.0);
        f(t + 0.5 * h, &self.tmp, &mut self.k2);
        self.tmp.copy_from(y);
        self.tmp.axpy(0.5 * h, &self.k2, 1.0);
        f(t + 0.5 * h, &self.tmp, &mut self.k3);
        self.tmp.copy_from(y);
        self.tmp.axpy(h, &self.k3, 1.0);
        f(t + h, &self.tmp, &mut self.k4);

        let w = h / 6.0;
        y.axpy(w, &self.k1, 1.0);
        y.axpy(2.0 * w, &self.k2, 1.0);
        y.axpy(2.0 * w, &self.k3, 1.0);
        y.axpy(w, &self.k4, 1.0);
        if y.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite("RK4 state"))
        }
    }
}
