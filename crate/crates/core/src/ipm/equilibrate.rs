//! Ruiz equilibration. Row scalings are kept uniform inside each
//! second-order cone block so the cones are invariant under scaling.

use super::cones::Cone;
use crate::linalg::{inf_norm, CscMatrix};

const RUIZ_ITERS: usize = 10;
const MIN_SCALE: f64 = 1e-4;
const MAX_SCALE: f64 = 1e4;

#[derive(Debug, Clone)]
pub struct Equilibration {
    /// Row scaling.
    pub e: Vec<f64>,
    /// Column scaling.
    pub d: Vec<f64>,
    /// Objective scaling.
    pub c: f64,
}

fn limit(v: f64) -> f64 {
    if v < MIN_SCALE {
        1.0
    } else {
        v.clamp(MIN_SCALE, MAX_SCALE)
    }
}

impl Equilibration {
    pub fn identity(m: usize, n: usize) -> Self {
        Self {
            e: vec![1.0; m],
            d: vec![1.0; n],
            c: 1.0,
        }
    }

    pub fn compute(a: &CscMatrix, q: &[f64], cones: &[Cone]) -> Self {
        let (m, n) = (a.nrows, a.ncols);
        let mut e = vec![1.0; m];
        let mut d = vec![1.0; n];
        let mut work = a.clone();
        for _ in 0..RUIZ_ITERS {
            let cn = work.col_inf_norms();
            let rn = work.row_inf_norms();
            let dk: Vec<f64> = cn.iter().map(|&v| 1.0 / limit(v).sqrt()).collect();
            let mut ek: Vec<f64> = rn.iter().map(|&v| 1.0 / limit(v).sqrt()).collect();
            let mut off = 0;
            for c in cones {
                if let Cone::Soc(dim) = c {
                    let blk = &mut ek[off..off + dim];
                    let mean = blk.iter().sum::<f64>() / *dim as f64;
                    blk.iter_mut().for_each(|v| *v = mean);
                }
                off += c.dim();
            }
            work.scale(&ek, &dk);
            for j in 0..n {
                d[j] = (d[j] * dk[j]).clamp(MIN_SCALE, MAX_SCALE);
            }
            for i in 0..m {
                e[i] = (e[i] * ek[i]).clamp(MIN_SCALE, MAX_SCALE);
            }
        }
        let qs: Vec<f64> = q.iter().zip(&d).map(|(a, b)| a * b).collect();
        let qn = inf_norm(&qs);
        let c = if qn > MIN_SCALE { (1.0 / qn).clamp(MIN_SCALE, MAX_SCALE) } else { 1.0 };
        Self { e, d, c }
    }
}
