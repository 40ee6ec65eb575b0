use super::types::{Branch, NetworkCase};
use super::CaseError;
use nalgebra::DMatrix;
use num_complex::Complex64;

/// Two-port admittances `(Y_ff, Y_ft, Y_tf, Y_tt)` of a branch with the tap on
/// the from side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchAdmittance {
    pub ff: Complex64,
    pub ft: Complex64,
    pub tf: Complex64,
    pub tt: Complex64,
}

pub fn branch_admittance(br: &Branch) -> Result<BranchAdmittance, CaseError> {
    let z = Complex64::new(br.r, br.x);
    if z.norm() == 0.0 {
        return Err(CaseError::ZeroImpedance { from: br.from, to: br.to });
    }
    let ys = z.inv();
    let half_b = Complex64::new(0.0, br.b_sh / 2.0);
    let t = Complex64::from_polar(br.tap, br.shift);
    Ok(BranchAdmittance {
        ff: (ys + half_b) / (br.tap * br.tap),
        ft: -ys / t.conj(),
        tf: -ys / t,
        tt: ys + half_b,
    })
}

/// Sparse bus admittance matrix, rows indexed by bus position.
#[derive(Debug, Clone, PartialEq)]
pub struct Admittance {
    pub n: usize,
    /// Sorted `(column, value)` per row.
    pub rows: Vec<Vec<(usize, Complex64)>>,
}

impl Admittance {
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        match self.rows[i].binary_search_by_key(&j, |e| e.0) {
            Ok(k) => self.rows[i][k].1,
            Err(_) => Complex64::new(0.0, 0.0),
        }
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::from_element(self.n, self.n, Complex64::new(0.0, 0.0));
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                m[(i, j)] = v;
            }
        }
        m
    }
}

pub fn build_admittance(case: &NetworkCase) -> Result<Admittance, CaseError> {
    let n = case.buses.len();
    let mut rows: Vec<Vec<(usize, Complex64)>> = vec![Vec::new(); n];
    let mut add = |i: usize, j: usize, v: Complex64| match rows[i].binary_search_by_key(&j, |e| e.0) {
        Ok(k) => rows[i][k].1 += v,
        Err(k) => rows[i].insert(k, (j, v)),
    };
    for br in &case.branches {
        let y = branch_admittance(br)?;
        let (f, t) = (case.idx(br.from), case.idx(br.to));
        add(f, f, y.ff);
        add(f, t, y.ft);
        add(t, f, y.tf);
        add(t, t, y.tt);
    }
    for (i, b) in case.buses.iter().enumerate() {
        if b.g_shunt != 0.0 || b.b_shunt != 0.0 {
            add(i, i, Complex64::new(b.g_shunt, b.b_shunt));
        }
    }
    Ok(Admittance { n, rows })
}
