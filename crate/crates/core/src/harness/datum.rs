//! Initial data built from a [`InitialDatum`] recipe.

use crate::error::{Error, Result};
use crate::evolve::read_checkpoint;
use crate::grid::{ComplexField, GridSpec};
use crate::Complex64;

use super::config::InitialDatum;

/// The initial field and its time (nonzero only for checkpoints).
pub fn build_datum(recipe: &InitialDatum, grid: &GridSpec) -> Result<(ComplexField, f64)> {
    match *recipe {
        InitialDatum::Gaussian {
            amplitude,
            width,
            center,
            boost_velocity,
        } => {
            let f = ComplexField::from_fn(grid, |x| {
                let d2: f64 = (0..3).map(|j| (x[j] - center[j]).powi(2)).sum();
                let phase: f64 = (0..3).map(|j| 0.5 * boost_velocity[j] * x[j]).sum();
                Complex64::from_polar(amplitude * (-d2 / (2.0 * width * width)).exp(), phase)
            });
            Ok((f, 0.0))
        }
        InitialDatum::HarmonicGaussian {
            degree,
            order,
            amplitude,
            width,
        } => {
            let f = ComplexField::from_fn(grid, |x| {
                let r2 = x.iter().map(|v| v * v).sum::<f64>();
                let y = solid_harmonic(degree, order, x.map(|v| v / width));
                y * (amplitude * (-r2 / (2.0 * width * width)).exp())
            });
            Ok((f, 0.0))
        }
        InitialDatum::FromCheckpoint { ref path } => {
            let (f, t) = read_checkpoint(path)?;
            if f.grid() != grid {
                return Err(Error::GridMismatch(format!(
                    "checkpoint {} was written on {:?}, scenario grid is {:?}",
                    path.display(),
                    f.grid(),
                    grid
                )));
            }
            Ok((f, t))
        }
    }
}

/// Coefficients (lowest degree first) of the `m`-th derivative of the
/// Legendre polynomial `P_l`.
fn legendre_derivative(l: u32, m: u32) -> Vec<f64> {
    let mut prev = vec![1.0];
    let mut cur = vec![0.0, 1.0];
    if l == 0 {
        cur = prev.clone();
    }
    for n in 1..l.max(1) {
        // (n + 1) P_{n+1} = (2n + 1) x P_n - n P_{n-1}
        let n = n as f64;
        let mut next = vec![0.0; cur.len() + 1];
        for (k, c) in cur.iter().enumerate() {
            next[k + 1] += (2.0 * n + 1.0) * c;
        }
        for (k, c) in prev.iter().enumerate() {
            next[k] -= n * c;
        }
        next.iter_mut().for_each(|c| *c /= n + 1.0);
        prev = cur;
        cur = next;
    }
    for _ in 0..m {
        cur = cur.iter().enumerate().skip(1).map(|(k, c)| k as f64 * c).collect();
    }
    cur
}

/// `r^l P_l^m(cos theta) e^{i m phi}` (Condon-Shortley phase omitted), a
/// homogeneous harmonic polynomial of degree `l`.
pub fn solid_harmonic(l: u32, m: i32, [x, y, z]: [f64; 3]) -> Complex64 {
    let am = m.unsigned_abs();
    let q = legendre_derivative(l, am);
    let r2 = x * x + y * y + z * z;
    // r^{l-m} Q(z/r) = sum_k q_k z^k r^{l-m-k}, and l-m-k is even when q_k != 0
    let mut radial = 0.0;
    for (k, c) in q.iter().enumerate() {
        if *c != 0.0 {
            let rest = (l - am) as i32 - k as i32;
            radial += c * z.powi(k as i32) * r2.powi(rest / 2);
        }
    }
    let xy = Complex64::new(x, if m >= 0 { y } else { -y });
    xy.powu(am) * radial
}
