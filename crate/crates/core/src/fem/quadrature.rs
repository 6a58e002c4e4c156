//! Gauss–Legendre rules on `[-1, 1]` and their tensor products on `[0, 1]^d`.

/// Points and weights of the `order`-point Gauss rule on `[-1, 1]`.
pub fn gauss_1d(order: usize) -> (Vec<f64>, Vec<f64>) {
    match order {
        1 => (vec![0.0], vec![2.0]),
        2 => {
            let a = 1.0 / 3f64.sqrt();
            (vec![-a, a], vec![1.0, 1.0])
        }
        3 => {
            let a = (3.0f64 / 5.0).sqrt();
            (vec![-a, 0.0, a], vec![5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])
        }
        4 => {
            let s = (6.0f64 / 5.0).sqrt();
            let a = ((3.0 - 2.0 * s) / 7.0).sqrt();
            let b = ((3.0 + 2.0 * s) / 7.0).sqrt();
            let wa = (18.0 + 30f64.sqrt()) / 36.0;
            let wb = (18.0 - 30f64.sqrt()) / 36.0;
            (vec![-b, -a, a, b], vec![wb, wa, wa, wb])
        }
        _ => panic!("unsupported Gauss order {order}"),
    }
}

/// Gauss rule mapped to `[0, 1]` (weights sum to 1).
pub fn gauss_unit(order: usize) -> Vec<(f64, f64)> {
    let (p, w) = gauss_1d(order);
    p.iter().zip(&w).map(|(x, w)| (0.5 * (x + 1.0), 0.5 * w)).collect()
}

/// Tensor-product rule on `[0,1]²` as `([s, t], weight)`.
pub fn gauss_square(order: usize) -> Vec<([f64; 2], f64)> {
    let g = gauss_unit(order);
    let mut out = Vec::with_capacity(g.len() * g.len());
    for &(t, wt) in &g {
        for &(s, ws) in &g {
            out.push(([s, t], ws * wt));
        }
    }
    out
}

/// Tensor-product rule on `[0,1]³`.
pub fn gauss_cube(order: usize) -> Vec<([f64; 3], f64)> {
    let g = gauss_unit(order);
    let mut out = Vec::with_capacity(g.len().pow(3));
    for &(r, wr) in &g {
        for &(t, wt) in &g {
            for &(s, ws) in &g {
                out.push(([s, t, r], ws * wt * wr));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rules_integrate_polynomials_exactly() {
        for order in 1..=4 {
            let degree = 2 * order - 1;
            for p in 0..=degree {
                let q: f64 = gauss_unit(order).iter().map(|(x, w)| w * x.powi(p as i32)).sum();
                assert!((q - 1.0 / (p as f64 + 1.0)).abs() < 1e-14, "order {order} degree {p}");
            }
        }
    }

    #[test]
    fn cube_weights_sum_to_one() {
        let s: f64 = gauss_cube(2).iter().map(|p| p.1).sum();
        assert!((s - 1.0).abs() < 1e-15);
    }
}
