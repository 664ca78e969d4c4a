//! Small real-coefficient polynomial toolbox: evaluation, derivatives and
//! root finding via the Aberth simultaneous iteration polished by Newton
//! steps.
//!
//! Coefficients are stored highest power first.

use crate::C64;

/// Horner evaluation at a real point.
pub fn eval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().fold(0.0, |acc, &c| acc * x + c)
}

/// Horner evaluation at a complex point.
pub fn eval_complex(coeffs: &[f64], z: C64) -> C64 {
    coeffs
        .iter()
        .fold(C64::new(0.0, 0.0), |acc, &c| acc * z + c)
}

/// Coefficients of the derivative polynomial.
pub fn derivative(coeffs: &[f64]) -> Vec<f64> {
    let n = coeffs.len();
    if n <= 1 {
        return vec![0.0];
    }
    coeffs[..n - 1]
        .iter()
        .enumerate()
        .map(|(i, &c)| c * (n - 1 - i) as f64)
        .collect()
}

/// Strips leading coefficients that are exactly zero (degenerate leading
/// terms, e.g. a quartic collapsing to a cubic at special parameters).
fn trim_leading(coeffs: &[f64]) -> &[f64] {
    let mut i = 0;
    while i + 1 < coeffs.len() && coeffs[i] == 0.0 {
        i += 1;
    }
    &coeffs[i..]
}

/// All complex roots (with multiplicity) of a real-coefficient polynomial,
/// found by the Aberth simultaneous iteration and polished by a few Newton
/// steps. Constant polynomials return no roots.
///
/// The starting points sit on a Cauchy-bound circle with an angular offset,
/// so spectra that are symmetric about the axes (as the linearizations of
/// a Hamiltonian flow always are) cannot stall the iteration; QR-type
/// eigenvalue iterations without exceptional shifts fail to terminate on
/// exactly such inputs.
pub fn roots(coeffs: &[f64]) -> Vec<C64> {
    const MAX_SWEEPS: usize = 200;
    let c = trim_leading(coeffs);
    let deg = c.len().saturating_sub(1);
    if deg == 0 {
        return Vec::new();
    }
    if deg == 1 {
        return vec![C64::new(-c[1] / c[0], 0.0)];
    }
    let lead = c[0];
    let monic: Vec<f64> = c.iter().map(|x| x / lead).collect();
    let deriv = derivative(&monic);
    let radius = 1.0 + monic[1..].iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let mut z: Vec<C64> = (0..deg)
        .map(|k| {
            C64::from_polar(
                radius,
                2.0 * std::f64::consts::PI * k as f64 / deg as f64 + 0.4,
            )
        })
        .collect();
    for _ in 0..MAX_SWEEPS {
        let mut moved = false;
        for i in 0..deg {
            let p = eval_complex(&monic, z[i]);
            if p.norm() == 0.0 {
                continue;
            }
            let dp = eval_complex(&deriv, z[i]);
            let newton = if dp.norm() > 0.0 {
                p / dp
            } else {
                // Stationary point of the polynomial: nudge off it.
                C64::new(1e-8, 1e-8)
            };
            let mut repulsion = C64::new(0.0, 0.0);
            for j in 0..deg {
                if j != i {
                    let d = z[i] - z[j];
                    if d.norm() > 0.0 {
                        repulsion += d.inv();
                    }
                }
            }
            let denom = C64::new(1.0, 0.0) - newton * repulsion;
            let step = if denom.norm() > 0.0 { newton / denom } else { newton };
            z[i] -= step;
            if step.norm() > 1e-14 * z[i].norm().max(1.0) {
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    z.into_iter()
        .map(|zi| newton_polish(&monic, &deriv, zi))
        .collect()
}

/// Real roots sorted ascending. A root is accepted as real when its
/// polished imaginary part is below `im_tol * max(1, |z|)`.
pub fn real_roots(coeffs: &[f64], im_tol: f64) -> Vec<f64> {
    let mut out: Vec<f64> = roots(coeffs)
        .into_iter()
        .filter(|z| z.im.abs() < im_tol * z.norm().max(1.0))
        .map(|z| z.re)
        .collect();
    out.sort_by(f64::total_cmp);
    out
}

fn newton_polish(coeffs: &[f64], deriv: &[f64], mut z: C64) -> C64 {
    // Multiple roots converge only linearly (the step contracts by 1/m for
    // multiplicity m), so allow enough iterations for them as well; simple
    // roots hit the step cutoff after a few.
    for _ in 0..40 {
        let f = eval_complex(coeffs, z);
        let df = eval_complex(deriv, z);
        if df.norm() == 0.0 {
            break;
        }
        let step = f / df;
        z -= step;
        if step.norm() <= 1e-16 * z.norm().max(1.0) {
            break;
        }
    }
    z
}
