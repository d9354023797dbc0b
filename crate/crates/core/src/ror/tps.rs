use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Thin-plate spline in the plane: `phi(r) = r^2 ln r` plus an affine term.
#[derive(Debug, Clone)]
pub struct ThinPlateSpline {
    nodes: Vec<[f64; 2]>,
    weights: Vec<f64>,
    affine: [f64; 3],
}

fn kernel(r2: f64) -> f64 {
    // r^2 ln r = r^2 ln(r^2) / 2
    if r2 > 0.0 {
        0.5 * r2 * r2.ln()
    } else {
        0.0
    }
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

impl ThinPlateSpline {
    /// Fits the spline through `values` at `nodes`. With `smoothing > 0` the
    /// kernel matrix is regularized by `smoothing * I` and the fit no longer
    /// interpolates.
    pub fn fit(nodes: &[[f64; 2]], values: &[f64], smoothing: f64) -> Result<Self> {
        let n = nodes.len();
        if n != values.len() {
            return Err(Error::DimensionMismatch { expected: n, got: values.len() });
        }
        if !(smoothing >= 0.0) || !smoothing.is_finite() {
            return Err(Error::InvalidParameter(format!("smoothing must be >= 0, got {smoothing}")));
        }
        if nodes.iter().flatten().chain(values).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        if n < 3 || collinear(nodes) {
            return Err(Error::DegenerateNodes("nodes must include three non-collinear points".into()));
        }
        let size = n + 3;
        let mut a = DMatrix::<f64>::zeros(size, size);
        for i in 0..n {
            for j in 0..i {
                let k = kernel(dist2(nodes[i], nodes[j]));
                a[(i, j)] = k;
                a[(j, i)] = k;
            }
            a[(i, i)] = smoothing;
            let p = [1.0, nodes[i][0], nodes[i][1]];
            for (c, &v) in p.iter().enumerate() {
                a[(i, n + c)] = v;
                a[(n + c, i)] = v;
            }
        }
        let mut b = DVector::<f64>::zeros(size);
        b.rows_mut(0, n).copy_from_slice(values);
        let sol = a.lu().solve(&b).ok_or(Error::NumericallySingular)?;
        if sol.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericallySingular);
        }
        Ok(ThinPlateSpline {
            nodes: nodes.to_vec(),
            weights: sol.rows(0, n).iter().copied().collect(),
            affine: [sol[n], sol[n + 1], sol[n + 2]],
        })
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let radial: f64 = self.nodes.iter().zip(&self.weights).map(|(&p, w)| w * kernel(dist2(p, [x, y]))).sum();
        radial + self.affine[0] + self.affine[1] * x + self.affine[2] * y
    }
}

fn collinear(nodes: &[[f64; 2]]) -> bool {
    let o = nodes[0];
    let Some(a) = nodes.iter().find(|p| dist2(**p, o) > 0.0) else {
        return true;
    };
    let scale = nodes.iter().map(|p| dist2(*p, o)).fold(0.0, f64::max);
    let (ux, uy) = (a[0] - o[0], a[1] - o[1]);
    nodes
        .iter()
        .all(|p| (ux * (p[1] - o[1]) - uy * (p[0] - o[0])).abs() <= 1e-12 * scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_nodes() -> Vec<[f64; 2]> {
        let mut v = Vec::new();
        for i in 4..=8 {
            for j in 4..=12 {
                v.push([i as f64, j as f64]);
            }
        }
        v
    }

    #[test]
    fn interpolates_nodes() {
        let nodes = grid_nodes();
        let vals: Vec<f64> = nodes.iter().map(|p| (p[0] * 0.7).sin() + 0.1 * p[1] * p[1]).collect();
        let s = ThinPlateSpline::fit(&nodes, &vals, 0.0).unwrap();
        for (p, v) in nodes.iter().zip(&vals) {
            assert!((s.eval(p[0], p[1]) - v).abs() < 1e-8);
        }
    }

    #[test]
    fn reproduces_constants_and_planes() {
        let nodes = grid_nodes();
        let c = ThinPlateSpline::fit(&nodes, &vec![0.37; nodes.len()], 0.0).unwrap();
        let plane: Vec<f64> = nodes.iter().map(|p| 0.2 + 0.05 * p[0] - 0.03 * p[1]).collect();
        let pl = ThinPlateSpline::fit(&nodes, &plane, 0.5).unwrap();
        for (x, y) in [(4.3, 5.5), (7.9, 11.2), (6.0, 8.5)] {
            assert!((c.eval(x, y) - 0.37).abs() < 1e-9);
            assert!((pl.eval(x, y) - (0.2 + 0.05 * x - 0.03 * y)).abs() < 1e-9);
        }
    }

    #[test]
    fn smoothing_moves_away_from_nodes() {
        let nodes = grid_nodes();
        let vals: Vec<f64> = nodes.iter().map(|p| ((p[0] + p[1]) as i64 % 2) as f64).collect();
        let s = ThinPlateSpline::fit(&nodes, &vals, 10.0).unwrap();
        let max_gap = nodes.iter().zip(&vals).map(|(p, v)| (s.eval(p[0], p[1]) - v).abs()).fold(0.0, f64::max);
        assert!(max_gap > 0.1);
    }

    #[test]
    fn rejects_collinear_nodes() {
        let nodes: Vec<[f64; 2]> = (0..6).map(|i| [i as f64, 2.0 * i as f64]).collect();
        assert!(matches!(ThinPlateSpline::fit(&nodes, &[0.0; 6], 0.0), Err(Error::DegenerateNodes(_))));
        assert!(ThinPlateSpline::fit(&nodes[..2], &[0.0; 2], 0.0).is_err());
    }
}
